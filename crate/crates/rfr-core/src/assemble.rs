//! Builds the real-valued compact linear power-flow model from a network,
//! and the affine impedance-uncertainty model on top of it.
//!
//! The linearised model has block structure
//!
//! ```text
//!   A p + B q + C l = b      current balance at non-reference buses
//!   D v + E l       = d      reference voltage + per-line voltage drops
//!   F v            <= f      voltage-magnitude bounds
//! ```
//!
//! with `l` the line currents and `v` the nodal voltages, both split into
//! real/imaginary components. Complex coefficients expand into
//! `[[R, -X], [X, R]]` blocks. Impedances enter only through `E`, so a
//! box of impedance parameters induces an affine family
//! `E(u) = E_nominal + sum_k (u_k - u_nominal_k) S_k` with sparse `S_k`.

use std::collections::HashMap;

use crate::model::{Bound, Cplx, Network, Phase, PhaseImpedanceMatrix, Role};
use crate::numcore::{LuFactors, Mat};
use crate::{Error, Result};

/// Linearised current-injection block for one phase: maps `(P, Q)` to
/// `(I_re, I_im)` under `I = (P - jQ) e^{j theta}` with the nominal
/// voltage fixed at 1.0 p.u. and the phase's nominal angle.
pub fn injection_coefficients(phase: Phase) -> [[f64; 2]; 2] {
    let (sin, cos) = phase.angle().sin_cos();
    [[cos, sin], [sin, -cos]]
}

/// A line oriented away from the reference bus.
#[derive(Clone, Copy, Debug)]
pub struct OrientedLine {
    /// Index into `Network::lines`.
    pub line: usize,
    /// Parent bus index.
    pub from: usize,
    /// Child bus index.
    pub to: usize,
}

/// Deterministic index maps between (bus, phase, re/im) and the rows and
/// columns of the compact model.
#[derive(Clone, Debug)]
pub struct SystemIndex {
    pub bus_ids: Vec<String>,
    pub ref_bus: usize,
    /// Non-reference bus indices in input order.
    pub nonref: Vec<usize>,
    /// Lines in input order, oriented parent -> child.
    pub lines: Vec<OrientedLine>,
    rank_of_bus: Vec<Option<usize>>,
}

impl SystemIndex {
    /// Orients the lines away from the reference bus. Requires a radial,
    /// connected network (every line used exactly once).
    pub fn from_network(net: &Network) -> Result<SystemIndex> {
        let violations = net.validate();
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        let bus_pos: HashMap<&str, usize> = net
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.as_str(), i))
            .collect();
        let ref_bus = bus_pos[net.reference_bus.as_str()];
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); net.buses.len()];
        for (idx, line) in net.lines.iter().enumerate() {
            incident[bus_pos[line.from.as_str()]].push(idx);
            incident[bus_pos[line.to.as_str()]].push(idx);
        }
        let mut oriented: Vec<Option<OrientedLine>> = vec![None; net.lines.len()];
        let mut visited = vec![false; net.buses.len()];
        visited[ref_bus] = true;
        let mut queue = std::collections::VecDeque::from([ref_bus]);
        while let Some(bus) = queue.pop_front() {
            for &l in &incident[bus] {
                if oriented[l].is_some() {
                    continue;
                }
                let (a, b) = (
                    bus_pos[net.lines[l].from.as_str()],
                    bus_pos[net.lines[l].to.as_str()],
                );
                let other = if a == bus { b } else { a };
                if visited[other] {
                    continue; // cycle; validation has already flagged it
                }
                visited[other] = true;
                oriented[l] = Some(OrientedLine {
                    line: l,
                    from: bus,
                    to: other,
                });
                queue.push_back(other);
            }
        }
        let lines: Vec<OrientedLine> = oriented.into_iter().flatten().collect();
        let nonref: Vec<usize> = (0..net.buses.len()).filter(|&b| b != ref_bus).collect();
        let mut rank_of_bus = vec![None; net.buses.len()];
        for (rank, &bus) in nonref.iter().enumerate() {
            rank_of_bus[bus] = Some(rank);
        }
        Ok(SystemIndex {
            bus_ids: net.buses.clone(),
            ref_bus,
            nonref,
            lines,
            rank_of_bus,
        })
    }

    pub fn n_bus(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn n_line(&self) -> usize {
        self.lines.len()
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.bus_ids.iter().position(|b| b == id)
    }

    /// Column of the current state variable for (line, phase, re/im).
    pub fn current_col(&self, line: usize, phase: usize, comp: usize) -> usize {
        (line * 3 + phase) * 2 + comp
    }

    /// Column of the voltage state variable for (bus, phase, re/im).
    pub fn voltage_col(&self, bus: usize, phase: usize, comp: usize) -> usize {
        (bus * 3 + phase) * 2 + comp
    }

    /// Row of the current-balance equation for a non-reference bus.
    pub fn kcl_row(&self, bus: usize, phase: usize, comp: usize) -> usize {
        let rank = self.rank_of_bus[bus].expect("reference bus has no balance row");
        (rank * 3 + phase) * 2 + comp
    }

    /// Row of a reference-voltage equation.
    pub fn ref_row(&self, phase: usize, comp: usize) -> usize {
        phase * 2 + comp
    }

    /// Row of a voltage-drop equation.
    pub fn drop_row(&self, line: usize, phase: usize, comp: usize) -> usize {
        6 + (line * 3 + phase) * 2 + comp
    }

    /// Row of a voltage-bound inequality (upper first, then lower).
    pub fn limit_row(&self, bus: usize, phase: usize, bound: Bound) -> usize {
        let rank = self.rank_of_bus[bus].expect("no limits on the reference bus");
        (rank * 3 + phase) * 2
            + match bound {
                Bound::Upper => 0,
                Bound::Lower => 1,
            }
    }
}

/// A free customer column of the compact model, with its kW box.
#[derive(Clone, Debug)]
pub struct FreeCustomer {
    pub id: String,
    pub p_min: f64,
    pub p_max: f64,
}

/// The compact real linear model of one network at its nominal impedances.
#[derive(Clone, Debug)]
pub struct RealLinearBundle {
    /// `A`: free active powers (p.u.) into balance rows.
    pub p_coeff: Mat,
    /// `B`: reactive powers (p.u., all customers) into balance rows.
    pub q_coeff: Mat,
    /// `C`: line currents into balance rows (square).
    pub current_coeff: Mat,
    /// `b`: fixed customers' active-power contributions.
    pub kcl_rhs: Vec<f64>,
    /// `D`: voltage coefficients (square).
    pub voltage_coeff: Mat,
    /// `E`: impedance coupling of currents into voltage rows; the only
    /// impedance-dependent block.
    pub impedance_coeff: Mat,
    /// `d`: reference-voltage right-hand side.
    pub voltage_rhs: Vec<f64>,
    /// `F`: voltage-bound rows over `v`.
    pub limit_coeff: Mat,
    /// `f`: voltage-bound right-hand side.
    pub limit_rhs: Vec<f64>,
    /// Fixed reactive powers in p.u. (all customers, input order).
    pub q_pu: Vec<f64>,
    pub index: SystemIndex,
    pub free: Vec<FreeCustomer>,
    /// Provenance of each `F` row.
    pub limit_labels: Vec<(String, Phase, Bound)>,
    /// Power base in kVA (kW <-> p.u. conversion for `p`).
    pub power_base: f64,
}

/// Builds `E` for given per-line impedance matrices (p.u., scaled by line
/// length inside).
fn build_impedance_coeff(net: &Network, index: &SystemIndex) -> Mat {
    let mut e = Mat::zeros(6 * index.n_bus(), 6 * index.n_line());
    for ol in &index.lines {
        let line = &net.lines[ol.line];
        for phi in 0..3 {
            let row_re = index.drop_row(ol.line, phi, 0);
            let row_im = index.drop_row(ol.line, phi, 1);
            for psi in 0..3 {
                let z = line.z.get(phi, psi).scale(line.length);
                // -(z * I) moved to the left-hand side
                e[(row_re, index.current_col(ol.line, psi, 0))] -= z.re;
                e[(row_re, index.current_col(ol.line, psi, 1))] += z.im;
                e[(row_im, index.current_col(ol.line, psi, 0))] -= z.im;
                e[(row_im, index.current_col(ol.line, psi, 1))] -= z.re;
            }
        }
    }
    e
}

/// Assembles the compact linear model. `q` is the fixed reactive-power
/// vector in kVar over all customers (input order); it is held constant
/// while feasible regions are computed.
pub fn assemble_bundle(net: &Network, q: &[f64]) -> Result<RealLinearBundle> {
    if q.len() != net.customers.len() {
        return Err(Error::Dimension(format!(
            "q has {} entries for {} customers",
            q.len(),
            net.customers.len()
        )));
    }
    let index = SystemIndex::from_network(net)?;
    let n_bus = index.n_bus();
    let n_line = index.n_line();
    let free_idx = net.free_customers();

    // current balance: A p + B q + C l = b
    let mut a = Mat::zeros(6 * n_line, free_idx.len());
    let mut bq = Mat::zeros(6 * n_line, net.customers.len());
    let mut c = Mat::zeros(6 * n_line, 6 * n_line);
    let mut b_rhs = vec![0.0; 6 * n_line];
    for ol in &index.lines {
        for phi in 0..3 {
            for comp in 0..2 {
                let col = index.current_col(ol.line, phi, comp);
                // current into the child bus
                c[(index.kcl_row(ol.to, phi, comp), col)] += 1.0;
                // current out of the parent bus (unless it is the reference)
                if ol.from != index.ref_bus {
                    c[(index.kcl_row(ol.from, phi, comp), col)] -= 1.0;
                }
            }
        }
    }
    let mut free_col = HashMap::new();
    for (col, &m) in free_idx.iter().enumerate() {
        free_col.insert(m, col);
    }
    for (m, cust) in net.customers.iter().enumerate() {
        let bus = index
            .bus_index(&cust.bus)
            .expect("validated customer bus exists");
        if bus == index.ref_bus {
            continue; // the slack absorbs injections at the reference bus
        }
        let phi = cust.phase.index();
        let block = injection_coefficients(cust.phase);
        let row_re = index.kcl_row(bus, phi, 0);
        let row_im = index.kcl_row(bus, phi, 1);
        bq[(row_re, m)] -= block[0][1];
        bq[(row_im, m)] -= block[1][1];
        match cust.role {
            Role::Free => {
                let col = free_col[&m];
                a[(row_re, col)] -= block[0][0];
                a[(row_im, col)] -= block[1][0];
            }
            Role::Fixed => {
                let p_pu = cust.p_fixed.unwrap_or(0.0) / net.base_power;
                b_rhs[row_re] += block[0][0] * p_pu;
                b_rhs[row_im] += block[1][0] * p_pu;
            }
        }
    }

    // voltage equations: D v + E l = d
    let mut d_coeff = Mat::zeros(6 * n_bus, 6 * n_bus);
    let mut d_rhs = vec![0.0; 6 * n_bus];
    for phi in 0..3 {
        let v0 = net.reference_voltage[phi];
        d_coeff[(index.ref_row(phi, 0), index.voltage_col(index.ref_bus, phi, 0))] = 1.0;
        d_coeff[(index.ref_row(phi, 1), index.voltage_col(index.ref_bus, phi, 1))] = 1.0;
        d_rhs[index.ref_row(phi, 0)] = v0.re;
        d_rhs[index.ref_row(phi, 1)] = v0.im;
    }
    for ol in &index.lines {
        for phi in 0..3 {
            for comp in 0..2 {
                let row = index.drop_row(ol.line, phi, comp);
                d_coeff[(row, index.voltage_col(ol.from, phi, comp))] = 1.0;
                d_coeff[(row, index.voltage_col(ol.to, phi, comp))] = -1.0;
            }
        }
    }
    let e_coeff = build_impedance_coeff(net, &index);

    // voltage-magnitude bounds, linearised along the nominal angle:
    // v_min <= Re(V e^{-j theta}) <= v_max, two rows per bus-phase
    let mut f_coeff = Mat::zeros(6 * (n_bus - 1), 6 * n_bus);
    let mut f_rhs = vec![0.0; 6 * (n_bus - 1)];
    let mut labels = vec![(String::new(), Phase::A, Bound::Upper); 6 * (n_bus - 1)];
    for &bus in &index.nonref {
        for phase in Phase::ALL {
            let (sin, cos) = phase.angle().sin_cos();
            let phi = phase.index();
            let up = index.limit_row(bus, phi, Bound::Upper);
            let lo = index.limit_row(bus, phi, Bound::Lower);
            f_coeff[(up, index.voltage_col(bus, phi, 0))] = cos;
            f_coeff[(up, index.voltage_col(bus, phi, 1))] = sin;
            f_rhs[up] = net.v_max;
            f_coeff[(lo, index.voltage_col(bus, phi, 0))] = -cos;
            f_coeff[(lo, index.voltage_col(bus, phi, 1))] = -sin;
            f_rhs[lo] = -net.v_min;
            labels[up] = (index.bus_ids[bus].clone(), phase, Bound::Upper);
            labels[lo] = (index.bus_ids[bus].clone(), phase, Bound::Lower);
        }
    }

    // invertibility gate: both square blocks must factor cleanly
    LuFactors::factor(&c, "current-balance block C")?;
    LuFactors::factor(&d_coeff, "voltage block D")?;

    let q_pu: Vec<f64> = q.iter().map(|qi| qi / net.base_power).collect();
    let free = free_idx
        .iter()
        .map(|&m| FreeCustomer {
            id: net.customers[m].id.clone(),
            p_min: net.customers[m].p_min,
            p_max: net.customers[m].p_max,
        })
        .collect();

    Ok(RealLinearBundle {
        p_coeff: a,
        q_coeff: bq,
        current_coeff: c,
        kcl_rhs: b_rhs,
        voltage_coeff: d_coeff,
        impedance_coeff: e_coeff,
        voltage_rhs: d_rhs,
        limit_coeff: f_coeff,
        limit_rhs: f_rhs,
        q_pu,
        index,
        free,
        limit_labels: labels,
        power_base: net.base_power,
    })
}

impl RealLinearBundle {
    /// Solves the equality blocks for the state `(l, v)` at given free
    /// powers `p` (p.u.) and the bundle's fixed `q`, using the supplied
    /// impedance coupling.
    pub fn solve_state(&self, p: &[f64], e: &Mat) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rhs = self.kcl_rhs.clone();
        let ap = self.p_coeff.mul_vec(p);
        let bqv = self.q_coeff.mul_vec(&self.q_pu);
        for i in 0..rhs.len() {
            rhs[i] -= ap[i] + bqv[i];
        }
        let c_fac = LuFactors::factor(&self.current_coeff, "current-balance block C")?;
        let l = c_fac.solve_vec(&rhs);
        let el = e.mul_vec(&l);
        let mut v_rhs = self.voltage_rhs.clone();
        for i in 0..v_rhs.len() {
            v_rhs[i] -= el[i];
        }
        let d_fac = LuFactors::factor(&self.voltage_coeff, "voltage block D")?;
        let v = d_fac.solve_vec(&v_rhs);
        Ok((l, v))
    }
}

/// Positive/zero-sequence impedances to the symmetric phase matrix:
/// diagonal `(2 z+ + z0)/3`, off-diagonal `(-z+ + z0)/3`.
pub fn sequence_to_phase(z_plus: Cplx, z_zero: Cplx) -> PhaseImpedanceMatrix {
    let diag = (z_plus.scale(2.0) + z_zero).scale(1.0 / 3.0);
    let off = (z_zero - z_plus).scale(1.0 / 3.0);
    let mut entries = [[off; 3]; 3];
    for (i, row) in entries.iter_mut().enumerate() {
        row[i] = diag;
    }
    PhaseImpedanceMatrix::new(entries).expect("sequence composition is symmetric")
}

/// Inverse of [`sequence_to_phase`] by averaging: `z+ = diag - off`,
/// `z0 = diag + 2 off`, with diagonal and off-diagonal entries averaged.
pub fn phase_to_sequence(z: &PhaseImpedanceMatrix) -> (Cplx, Cplx) {
    let mut diag = Cplx::ZERO;
    let mut off = Cplx::ZERO;
    for (i, j, e) in z.iter() {
        if i == j {
            diag = diag + e.scale(1.0 / 3.0);
        } else {
            off = off + e.scale(1.0 / 6.0);
        }
    }
    (diag - off, diag + off.scale(2.0))
}

/// How impedance uncertainty is parameterised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UncertaintyMode {
    /// One parameter per unique symmetric matrix entry per line per
    /// {R, X} component (12 per line).
    PhaseEntries,
    /// Four parameters (r+, x+, r0, x0) per line code, shared by all
    /// lines of that code.
    Sequence,
}

/// Box bounds, either a symmetric fraction of nominal or explicit.
#[derive(Clone, Debug)]
pub enum BoundsSpec {
    Delta(f64),
    Explicit(Vec<(f64, f64)>),
}

/// One uncertain parameter with its box.
#[derive(Clone, Debug)]
pub struct ParamRange {
    pub label: String,
    pub nominal: f64,
    pub min: f64,
    pub max: f64,
    /// True for resistance-like parameters (used only for warnings).
    pub resistive: bool,
}

/// Affine family `E(u) = E_nominal + sum_k (u_k - u_nominal_k) S_k` with
/// per-parameter boxes.
#[derive(Clone, Debug)]
pub struct UncertaintyModel {
    pub mode: UncertaintyMode,
    pub params: Vec<ParamRange>,
    /// Sparse `S_k` as (row, col, value) triplets into `E`.
    pub sensitivities: Vec<Vec<(usize, usize, f64)>>,
    nominal_e: Mat,
}

impl UncertaintyModel {
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn nominal_u(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.nominal).collect()
    }

    pub fn nominal_e(&self) -> &Mat {
        &self.nominal_e
    }

    /// Errors unless `u` lies inside the box (tolerance 1e-9).
    pub fn check_in_box(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.params.len() {
            return Err(Error::Dimension(format!(
                "u has {} entries for {} parameters",
                u.len(),
                self.params.len()
            )));
        }
        for (uk, p) in u.iter().zip(&self.params) {
            let slack = 1e-9 * (1.0 + uk.abs());
            if *uk < p.min - slack || *uk > p.max + slack {
                return Err(Error::OutOfBox {
                    param: p.label.clone(),
                    value: *uk,
                    min: p.min,
                    max: p.max,
                });
            }
        }
        Ok(())
    }
}

fn delta_box(nominal: f64, delta: f64) -> (f64, f64) {
    let a = nominal * (1.0 - delta);
    let b = nominal * (1.0 + delta);
    (a.min(b), a.max(b))
}

/// Builds the uncertainty model for a network. In `PhaseEntries` mode the
/// parameters are the length-scaled per-unit matrix entries of each line;
/// in `Sequence` mode they are per-unit-length sequence components shared
/// by each line code (lines without a code each form their own group).
pub fn build_uncertainty(
    net: &Network,
    mode: UncertaintyMode,
    bounds: BoundsSpec,
) -> Result<UncertaintyModel> {
    if let BoundsSpec::Delta(delta) = bounds {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Parse(format!(
                "delta must lie in [0, 1), got {delta} (sign flips are not modelled)"
            )));
        }
    }
    let index = SystemIndex::from_network(net)?;
    let nominal_e = build_impedance_coeff(net, &index);

    let mut params: Vec<ParamRange> = Vec::new();
    let mut sensitivities: Vec<Vec<(usize, usize, f64)>> = Vec::new();

    // R perturbs [[1,0],[0,1]] of the expanded block, X perturbs
    // [[0,-1],[1,0]]; both carry E's leading minus sign.
    let push_entry = |tripl: &mut Vec<(usize, usize, f64)>,
                      line: usize,
                      i: usize,
                      j: usize,
                      coeff: f64,
                      resistive: bool| {
        let rr = index.drop_row(line, i, 0);
        let ri = index.drop_row(line, i, 1);
        let cr = index.current_col(line, j, 0);
        let ci = index.current_col(line, j, 1);
        if resistive {
            tripl.push((rr, cr, -coeff));
            tripl.push((ri, ci, -coeff));
        } else {
            tripl.push((rr, ci, coeff));
            tripl.push((ri, cr, -coeff));
        }
    };

    match mode {
        UncertaintyMode::PhaseEntries => {
            const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
            for ol in &index.lines {
                let line = &net.lines[ol.line];
                let phases = ["a", "b", "c"];
                for (i, j) in PAIRS {
                    let z = line.z.get(i, j).scale(line.length);
                    for (resistive, nominal, tag) in [(true, z.re, "R"), (false, z.im, "X")] {
                        let mut tripl = Vec::new();
                        push_entry(&mut tripl, ol.line, i, j, 1.0, resistive);
                        if i != j {
                            push_entry(&mut tripl, ol.line, j, i, 1.0, resistive);
                        }
                        params.push(ParamRange {
                            label: format!(
                                "line{}:{}-{}:{}{}:{}",
                                ol.line, line.from, line.to, phases[i], phases[j], tag
                            ),
                            nominal,
                            min: f64::NAN, // filled below
                            max: f64::NAN,
                            resistive,
                        });
                        sensitivities.push(tripl);
                    }
                }
            }
        }
        UncertaintyMode::Sequence => {
            // group lines by code, in order of first appearance
            let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
            for ol in &index.lines {
                let key = net.lines[ol.line]
                    .code
                    .clone()
                    .unwrap_or_else(|| format!("line{}", ol.line));
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, members)) => members.push(ol.line),
                    None => groups.push((key, vec![ol.line])),
                }
            }
            for (code, members) in groups {
                // per-unit-length nominal sequence components, averaged
                let mut z_plus = Cplx::ZERO;
                let mut z_zero = Cplx::ZERO;
                for &l in &members {
                    let (p, z) = phase_to_sequence(&net.lines[l].z);
                    z_plus = z_plus + p.scale(1.0 / members.len() as f64);
                    z_zero = z_zero + z.scale(1.0 / members.len() as f64);
                }
                // (component tag, resistive, nominal, diag coeff, off coeff)
                let combos = [
                    ("r+", true, z_plus.re, 2.0 / 3.0, -1.0 / 3.0),
                    ("x+", false, z_plus.im, 2.0 / 3.0, -1.0 / 3.0),
                    ("r0", true, z_zero.re, 1.0 / 3.0, 1.0 / 3.0),
                    ("x0", false, z_zero.im, 1.0 / 3.0, 1.0 / 3.0),
                ];
                for (tag, resistive, nominal, c_diag, c_off) in combos {
                    let mut tripl = Vec::new();
                    for &l in &members {
                        let len = net.lines[l].length;
                        for i in 0..3 {
                            for j in 0..3 {
                                let coeff = if i == j { c_diag } else { c_off } * len;
                                push_entry(&mut tripl, l, i, j, coeff, resistive);
                            }
                        }
                    }
                    params.push(ParamRange {
                        label: format!("code:{code}:{tag}"),
                        nominal,
                        min: f64::NAN,
                        max: f64::NAN,
                        resistive,
                    });
                    sensitivities.push(tripl);
                }
            }
        }
    }

    match bounds {
        BoundsSpec::Delta(delta) => {
            for p in &mut params {
                let (lo, hi) = delta_box(p.nominal, delta);
                p.min = lo;
                p.max = hi;
            }
        }
        BoundsSpec::Explicit(list) => {
            if list.len() != params.len() {
                return Err(Error::Dimension(format!(
                    "{} explicit bounds for {} parameters",
                    list.len(),
                    params.len()
                )));
            }
            for (p, (lo, hi)) in params.iter_mut().zip(list) {
                if !(lo <= p.nominal && p.nominal <= hi) {
                    return Err(Error::OutOfBox {
                        param: p.label.clone(),
                        value: p.nominal,
                        min: lo,
                        max: hi,
                    });
                }
                p.min = lo;
                p.max = hi;
            }
        }
    }
    for p in &params {
        if p.resistive && p.min < 0.0 {
            log::warn!(
                "resistance parameter {} has a negative lower bound ({:.3e})",
                p.label,
                p.min
            );
        }
    }

    Ok(UncertaintyModel {
        mode,
        params,
        sensitivities,
        nominal_e,
    })
}

/// Evaluates `E(u)`; `u` must lie inside the box (tolerance 1e-9). At the
/// nominal point this returns the nominal `E` exactly.
pub fn evaluate_e(unc: &UncertaintyModel, u: &[f64]) -> Result<Mat> {
    unc.check_in_box(u)?;
    let mut e = unc.nominal_e.clone();
    for (k, tripl) in unc.sensitivities.iter().enumerate() {
        let step = u[k] - unc.params[k].nominal;
        if step == 0.0 {
            continue;
        }
        for &(r, c, v) in tripl {
            e[(r, c)] += step * v;
        }
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::test_support::path_network;
    use proptest::prelude::*;

    const SQRT3_2: f64 = 0.8660254037844386;

    #[test]
    fn injection_block_phase_a_is_signed_identity() {
        let b = injection_coefficients(Phase::A);
        assert_eq!(b, [[1.0, 0.0], [0.0, -1.0]]);
    }

    #[test]
    fn injection_block_phase_b_expands_the_rotation() {
        // (P - jQ) e^{-j 2pi/3} expanded symbolically
        let b = injection_coefficients(Phase::B);
        assert!((b[0][0] + 0.5).abs() < 1e-15);
        assert!((b[0][1] + SQRT3_2).abs() < 1e-15);
        assert!((b[1][0] + SQRT3_2).abs() < 1e-15);
        assert!((b[1][1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unit_active_power_gives_unit_current_on_phase_a() {
        let b = injection_coefficients(Phase::A);
        let (p, q) = (1.0, 0.0);
        let i_re = b[0][0] * p + b[0][1] * q;
        let i_im = b[1][0] * p + b[1][1] * q;
        assert_eq!((i_re, i_im), (1.0, 0.0));
    }

    #[test]
    fn sequence_composition_cases() {
        // equal sequence impedances: diagonal matrix
        let m = sequence_to_phase(Cplx::new(2.0, 1.0), Cplx::new(2.0, 1.0));
        assert_eq!(m.get(0, 0), Cplx::new(2.0, 1.0));
        assert_eq!(m.get(0, 1), Cplx::ZERO);
        // direct arithmetic: z+ = 1+2j, z0 = 4+8j
        let m = sequence_to_phase(Cplx::new(1.0, 2.0), Cplx::new(4.0, 8.0));
        assert_eq!(m.get(1, 1), Cplx::new(2.0, 4.0));
        assert_eq!(m.get(2, 0), Cplx::new(1.0, 2.0));
        // zero positive sequence: all entries z0/3
        let m = sequence_to_phase(Cplx::ZERO, Cplx::new(3.0, 6.0));
        for (_, _, e) in m.iter() {
            assert_eq!(e, Cplx::new(1.0, 2.0));
        }
    }

    #[test]
    fn sequence_round_trip() {
        let zp = Cplx::new(0.31, 0.26);
        let zz = Cplx::new(1.2, 1.0);
        let (zp2, zz2) = phase_to_sequence(&sequence_to_phase(zp, zz));
        assert!((zp2 - zp).abs() < 1e-14);
        assert!((zz2 - zz).abs() < 1e-14);
    }

    #[test]
    fn two_bus_bundle_dimensions() {
        let net = fixtures::two_bus();
        let bundle = assemble_bundle(&net, &net.q_vector()).unwrap();
        assert_eq!(bundle.current_coeff.rows(), 6);
        assert_eq!(bundle.current_coeff.cols(), 6);
        assert_eq!(bundle.voltage_coeff.rows(), 12);
        assert_eq!(bundle.voltage_coeff.cols(), 12);
        // two bounds x three phases x one non-reference bus
        assert_eq!(bundle.limit_coeff.rows(), 6);
        assert_eq!(bundle.p_coeff.cols(), 2); // customer 2 is fixed
        assert_eq!(bundle.q_coeff.cols(), 3);
    }

    fn zero_impedance_net() -> Network {
        let mut net = fixtures::two_bus();
        net.lines[0].z = PhaseImpedanceMatrix::new([[Cplx::ZERO; 3]; 3]).unwrap();
        net
    }

    #[test]
    fn zero_impedance_line_leaves_limits_slack() {
        let net = zero_impedance_net();
        let bundle = assemble_bundle(&net, &net.q_vector()).unwrap();
        let (_, v) = bundle
            .solve_state(&[0.0, 0.0], &bundle.impedance_coeff)
            .unwrap();
        let fv = bundle.limit_coeff.mul_vec(&v);
        for (row, (&lhs, &rhs)) in fv.iter().zip(&bundle.limit_rhs).enumerate() {
            let slack = rhs - lhs;
            let expect = match bundle.limit_labels[row].2 {
                Bound::Upper => net.v_max - 1.0,
                Bound::Lower => 1.0 - net.v_min,
            };
            assert!(
                (slack - expect).abs() < 1e-12,
                "row {row}: slack {slack} vs {expect}"
            );
        }
    }

    /// Independent nodal-balance recomputation straight from the network:
    /// complex KCL residuals and voltage-drop residuals of the linearised
    /// equations, bypassing the bundle's matrix layout.
    fn full_model_residual(net: &Network, bundle: &RealLinearBundle, p: &[f64], q: &[f64]) -> f64 {
        let (l, v) = bundle.solve_state(p, &bundle.impedance_coeff).unwrap();
        let index = &bundle.index;
        let current =
            |line: usize, phi: usize| Cplx::new(l[(line * 3 + phi) * 2], l[(line * 3 + phi) * 2 + 1]);
        let voltage =
            |bus: usize, phi: usize| Cplx::new(v[(bus * 3 + phi) * 2], v[(bus * 3 + phi) * 2 + 1]);
        let mut worst: f64 = 0.0;

        // reference voltage rows
        for phi in 0..3 {
            worst = worst.max((voltage(index.ref_bus, phi) - net.reference_voltage[phi]).abs());
        }
        // voltage-drop rows
        for ol in &index.lines {
            let line = &net.lines[ol.line];
            for phi in 0..3 {
                let mut drop = Cplx::ZERO;
                for psi in 0..3 {
                    drop = drop + line.z.get(phi, psi).scale(line.length) * current(ol.line, psi);
                }
                worst = worst.max((voltage(ol.from, phi) - voltage(ol.to, phi) - drop).abs());
            }
        }
        // current balance at each non-reference bus and phase
        let free_idx = net.free_customers();
        for &bus in &index.nonref {
            for phase in Phase::ALL {
                let phi = phase.index();
                let mut balance = Cplx::ZERO;
                for ol in &index.lines {
                    if ol.to == bus {
                        balance = balance + current(ol.line, phi);
                    }
                    if ol.from == bus {
                        balance = balance - current(ol.line, phi);
                    }
                }
                for (m, cust) in net.customers.iter().enumerate() {
                    if cust.phase != phase || index.bus_index(&cust.bus) != Some(bus) {
                        continue;
                    }
                    let p_kw = match cust.role {
                        Role::Free => {
                            let col = free_idx.iter().position(|&x| x == m).unwrap();
                            p[col] * net.base_power
                        }
                        Role::Fixed => cust.p_fixed.unwrap(),
                    };
                    let block = injection_coefficients(phase);
                    let (p_pu, q_pu) = (p_kw / net.base_power, q[m] / net.base_power);
                    balance = balance
                        - Cplx::new(
                            block[0][0] * p_pu + block[0][1] * q_pu,
                            block[1][0] * p_pu + block[1][1] * q_pu,
                        );
                }
                worst = worst.max(balance.abs());
            }
        }
        worst
    }

    #[test]
    fn elimination_is_exact_on_the_two_bus_network() {
        let net = fixtures::two_bus();
        let q = net.q_vector();
        let bundle = assemble_bundle(&net, &q).unwrap();
        let mut seed = 7u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 40.0 - 20.0
        };
        for _ in 0..25 {
            let p = vec![next(), next()];
            assert!(full_model_residual(&net, &bundle, &p, &q) < 1e-10);
        }
    }

    #[test]
    fn elimination_is_exact_with_random_reactive_power() {
        let net = fixtures::feeder();
        let mut seed = 11u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        let q: Vec<f64> = net.customers.iter().map(|_| next()).collect();
        let bundle = assemble_bundle(&net, &q).unwrap();
        for _ in 0..5 {
            let p: Vec<f64> = (0..bundle.free.len()).map(|_| next()).collect();
            assert!(full_model_residual(&net, &bundle, &p, &q) < 1e-10);
        }
    }

    #[test]
    fn two_bus_has_twelve_uncertain_parameters() {
        let net = fixtures::two_bus();
        let unc = build_uncertainty(&net, UncertaintyMode::PhaseEntries, BoundsSpec::Delta(0.2))
            .unwrap();
        assert_eq!(unc.n_params(), 12);
    }

    #[test]
    fn sequence_mode_counts_four_params_per_code() {
        let net = fixtures::feeder();
        let unc =
            build_uncertainty(&net, UncertaintyMode::Sequence, BoundsSpec::Delta(0.1)).unwrap();
        assert_eq!(unc.n_params(), 20); // 4 params x 5 codes
    }

    #[test]
    fn zero_delta_collapses_the_box() {
        let net = fixtures::two_bus();
        let unc = build_uncertainty(&net, UncertaintyMode::PhaseEntries, BoundsSpec::Delta(0.0))
            .unwrap();
        for p in &unc.params {
            assert_eq!(p.min, p.nominal);
            assert_eq!(p.max, p.nominal);
        }
    }

    #[test]
    fn delta_of_one_or_more_rejected() {
        let net = fixtures::two_bus();
        assert!(
            build_uncertainty(&net, UncertaintyMode::PhaseEntries, BoundsSpec::Delta(1.0))
                .is_err()
        );
    }

    #[test]
    fn evaluate_at_nominal_returns_nominal_exactly() {
        let net = fixtures::two_bus();
        let bundle = assemble_bundle(&net, &net.q_vector()).unwrap();
        let unc = build_uncertainty(&net, UncertaintyMode::PhaseEntries, BoundsSpec::Delta(0.2))
            .unwrap();
        let e = evaluate_e(&unc, &unc.nominal_u()).unwrap();
        assert_eq!(e, bundle.impedance_coeff);
    }

    #[test]
    fn single_parameter_step_is_affine() {
        let net = fixtures::two_bus();
        let unc = build_uncertainty(&net, UncertaintyMode::PhaseEntries, BoundsSpec::Delta(0.2))
            .unwrap();
        let mut u = unc.nominal_u();
        u[3] = unc.params[3].max;
        let e = evaluate_e(&unc, &u).unwrap();
        let mut expect = unc.nominal_e().clone();
        let step = unc.params[3].max - unc.params[3].nominal;
        for &(r, c, v) in &unc.sensitivities[3] {
            expect[(r, c)] += step * v;
        }
        assert_eq!(e, expect);
    }

    #[test]
    fn midpoint_equals_average_of_endpoints() {
        let net = fixtures::feeder();
        let unc =
            build_uncertainty(&net, UncertaintyMode::Sequence, BoundsSpec::Delta(0.1)).unwrap();
        let lo: Vec<f64> = unc.params.iter().map(|p| p.min).collect();
        let hi: Vec<f64> = unc.params.iter().map(|p| p.max).collect();
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let e_lo = evaluate_e(&unc, &lo).unwrap();
        let e_hi = evaluate_e(&unc, &hi).unwrap();
        let e_mid = evaluate_e(&unc, &mid).unwrap();
        for r in 0..e_mid.rows() {
            for c in 0..e_mid.cols() {
                let avg = 0.5 * (e_lo[(r, c)] + e_hi[(r, c)]);
                assert!((e_mid[(r, c)] - avg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_box_parameter_rejected() {
        let net = fixtures::two_bus();
        let unc = build_uncertainty(&net, UncertaintyMode::PhaseEntries, BoundsSpec::Delta(0.1))
            .unwrap();
        let mut u = unc.nominal_u();
        u[0] = unc.params[0].max * 1.5;
        assert!(matches!(
            evaluate_e(&unc, &u),
            Err(Error::OutOfBox { .. })
        ));
    }

    #[test]
    fn finite_difference_matches_sensitivities() {
        let net = fixtures::feeder();
        for mode in [UncertaintyMode::PhaseEntries, UncertaintyMode::Sequence] {
            let unc = build_uncertainty(&net, mode, BoundsSpec::Delta(0.1)).unwrap();
            let eps = 1e-6;
            for k in (0..unc.n_params()).step_by(3) {
                // step inside the box; collapsed boxes (zero nominals) are skipped
                let p = &unc.params[k];
                let step = if p.max - p.nominal >= eps {
                    eps
                } else if p.nominal - p.min >= eps {
                    -eps
                } else {
                    continue;
                };
                let mut u = unc.nominal_u();
                u[k] += step;
                let e_plus = evaluate_e(&unc, &u).unwrap();
                let mut fd = e_plus;
                for r in 0..fd.rows() {
                    for c in 0..fd.cols() {
                        fd[(r, c)] = (fd[(r, c)] - unc.nominal_e()[(r, c)]) / step;
                    }
                }
                let mut dense = Mat::zeros(fd.rows(), fd.cols());
                for &(r, c, v) in &unc.sensitivities[k] {
                    dense[(r, c)] += v;
                }
                for r in 0..fd.rows() {
                    for c in 0..fd.cols() {
                        assert!(
                            (fd[(r, c)] - dense[(r, c)]).abs() < 1e-8,
                            "param {k} entry ({r},{c})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_entry_perturbs_both_mirror_positions() {
        let net = fixtures::two_bus();
        let bundle = assemble_bundle(&net, &net.q_vector()).unwrap();
        let unc = build_uncertainty(&net, UncertaintyMode::PhaseEntries, BoundsSpec::Delta(0.2))
            .unwrap();
        // parameter 2 is the (a,b) resistance of the single line
        let k = unc
            .params
            .iter()
            .position(|p| p.label.contains("ab:R"))
            .unwrap();
        let mut u = unc.nominal_u();
        u[k] = unc.params[k].max;
        let e = evaluate_e(&unc, &u).unwrap();
        let idx = &bundle.index;
        let changed_ab = e[(idx.drop_row(0, 0, 0), idx.current_col(0, 1, 0))]
            - unc.nominal_e()[(idx.drop_row(0, 0, 0), idx.current_col(0, 1, 0))];
        let changed_ba = e[(idx.drop_row(0, 1, 0), idx.current_col(0, 0, 0))]
            - unc.nominal_e()[(idx.drop_row(0, 1, 0), idx.current_col(0, 0, 0))];
        assert!(changed_ab.abs() > 1e-12);
        assert!((changed_ab - changed_ba).abs() < 1e-15);
    }

    #[test]
    fn sensitivities_touch_only_their_lines() {
        let net = fixtures::feeder();
        let bundle = assemble_bundle(&net, &net.q_vector()).unwrap();
        let unc = build_uncertainty(&net, UncertaintyMode::PhaseEntries, BoundsSpec::Delta(0.1))
            .unwrap();
        for (k, tripl) in unc.sensitivities.iter().enumerate() {
            // label starts with "line{idx}:"
            let line: usize = unc.params[k].label[4..unc.params[k].label.find(':').unwrap()]
                .parse()
                .unwrap();
            for &(r, c, _) in tripl {
                let row_lo = bundle.index.drop_row(line, 0, 0);
                let row_hi = bundle.index.drop_row(line, 2, 1);
                let col_lo = bundle.index.current_col(line, 0, 0);
                let col_hi = bundle.index.current_col(line, 2, 1);
                assert!(r >= row_lo && r <= row_hi);
                assert!(c >= col_lo && c <= col_hi);
            }
        }
    }

    #[test]
    fn disconnected_network_fails_assembly() {
        let mut net = path_network(4);
        // orphan bus 4 by rewiring its line into a parallel 2-3 edge
        net.lines[2].from = "2".into();
        net.lines[2].to = "3".into();
        assert!(matches!(
            assemble_bundle(&net, &[]),
            Err(Error::Invalid(_))
        ));
    }

    proptest! {
        /// The real 2x2 block of a complex multiplication matches the
        /// complex arithmetic itself.
        #[test]
        fn real_block_matches_complex_product(
            zr in -3.0f64..3.0, zx in -3.0f64..3.0,
            ir in -5.0f64..5.0, ii in -5.0f64..5.0
        ) {
            let z = Cplx::new(zr, zx);
            let i = Cplx::new(ir, ii);
            let prod = z * i;
            let block_re = zr * ir - zx * ii;
            let block_im = zx * ir + zr * ii;
            prop_assert!((prod.re - block_re).abs() < 1e-12);
            prop_assert!((prod.im - block_im).abs() < 1e-12);
        }
    }
}
