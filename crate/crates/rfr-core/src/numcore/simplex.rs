//! Two-phase primal simplex on a dense tableau.
//!
//! Problems are stated over free or bounded variables with equality and
//! `<=` rows, then converted to standard form (shift / negate / split,
//! slack columns, artificial columns for phase 1). Dantzig pricing is
//! used until a run of degenerate pivots, after which Bland's rule takes
//! over to rule out cycling.

use crate::numcore::linalg::dot;

/// Optimisation direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// Outcome classification of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Solver tolerances and limits; one record so nothing is ad hoc.
#[derive(Clone, Copy, Debug)]
pub struct LpConfig {
    /// Feasibility / optimality tolerance.
    pub tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Iteration cap as a multiple of (columns + rows).
    pub iter_factor: usize,
}

impl Default for LpConfig {
    fn default() -> Self {
        LpConfig {
            tol: 1e-9,
            bland_after: 500,
            iter_factor: 50,
        }
    }
}

/// A linear program over variables with optional bounds.
///
/// Bounds default to free (`-inf..inf`); callers tighten them per
/// variable. Rows are `coeffs . x == rhs` or `coeffs . x <= rhs`.
#[derive(Clone, Debug)]
pub struct LpProblem {
    sense: Sense,
    objective: Vec<f64>,
    eq_rows: Vec<Vec<f64>>,
    eq_rhs: Vec<f64>,
    ub_rows: Vec<Vec<f64>>,
    ub_rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Result of a solve. `x` and `objective` are meaningful only when the
/// status is `Optimal`; `infeasibility` carries the phase-1 objective
/// (zero for feasible problems).
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub infeasibility: f64,
}

impl LpSolution {
    fn status_only(status: LpStatus, infeasibility: f64) -> Self {
        LpSolution {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            infeasibility,
        }
    }
}

impl LpProblem {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            sense,
            objective,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            ub_rows: Vec::new(),
            ub_rhs: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars());
        self.eq_rows.push(coeffs);
        self.eq_rhs.push(rhs);
    }

    pub fn add_ub(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars());
        self.ub_rows.push(coeffs);
        self.ub_rhs.push(rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        assert!(lower <= upper, "lower bound above upper bound");
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    /// Marks every variable nonnegative.
    pub fn set_nonnegative(&mut self) {
        for l in &mut self.lower {
            *l = 0.0;
        }
    }

    pub fn solve(&self) -> LpSolution {
        self.solve_with(&LpConfig::default())
    }

    pub fn solve_with(&self, cfg: &LpConfig) -> LpSolution {
        Standard::build(self).solve(self, cfg)
    }
}

/// How an original variable maps into standard-form columns.
#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// `x = lower + y`, `y >= 0`.
    Shift { col: usize, lower: f64 },
    /// `x = upper - y`, `y >= 0` (lower bound infinite).
    Neg { col: usize, upper: f64 },
    /// `x = y_pos - y_neg`, both `>= 0` (both bounds infinite).
    Split { pos: usize, neg: usize },
}

struct Standard {
    /// Structural + slack columns per row, rhs appended last.
    rows: Vec<Vec<f64>>,
    map: Vec<VarMap>,
    n_struct: usize,
    n_slack: usize,
}

impl Standard {
    fn build(p: &LpProblem) -> Standard {
        let n = p.num_vars();
        let mut map = Vec::with_capacity(n);
        let mut n_struct = 0;
        // extra `y <= upper - lower` rows for doubly bounded variables
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            let (lo, hi) = (p.lower[j], p.upper[j]);
            if lo.is_finite() {
                map.push(VarMap::Shift { col: n_struct, lower: lo });
                if hi.is_finite() {
                    bound_rows.push((n_struct, hi - lo));
                }
                n_struct += 1;
            } else if hi.is_finite() {
                map.push(VarMap::Neg { col: n_struct, upper: hi });
                n_struct += 1;
            } else {
                map.push(VarMap::Split {
                    pos: n_struct,
                    neg: n_struct + 1,
                });
                n_struct += 2;
            }
        }

        let n_ineq = p.ub_rows.len() + bound_rows.len();
        let n_eq = p.eq_rows.len();
        let n_slack = n_ineq;
        let width = n_struct + n_slack + 1;

        let translate = |coeffs: &[f64], rhs: f64| -> (Vec<f64>, f64) {
            let mut row = vec![0.0; width];
            let mut r = rhs;
            for (j, &cj) in coeffs.iter().enumerate() {
                if cj == 0.0 {
                    continue;
                }
                match map[j] {
                    VarMap::Shift { col, lower } => {
                        row[col] += cj;
                        r -= cj * lower;
                    }
                    VarMap::Neg { col, upper } => {
                        row[col] -= cj;
                        r -= cj * upper;
                    }
                    VarMap::Split { pos, neg } => {
                        row[pos] += cj;
                        row[neg] -= cj;
                    }
                }
            }
            (row, r)
        };

        let mut rows = Vec::with_capacity(n_eq + n_ineq);
        for (coeffs, &rhs) in p.eq_rows.iter().zip(&p.eq_rhs) {
            let (mut row, r) = translate(coeffs, rhs);
            row[width - 1] = r;
            rows.push(row);
        }
        let mut slack = 0;
        for (coeffs, &rhs) in p.ub_rows.iter().zip(&p.ub_rhs) {
            let (mut row, r) = translate(coeffs, rhs);
            row[n_struct + slack] = 1.0;
            row[width - 1] = r;
            rows.push(row);
            slack += 1;
        }
        for &(col, limit) in &bound_rows {
            let mut row = vec![0.0; width];
            row[col] = 1.0;
            row[n_struct + slack] = 1.0;
            row[width - 1] = limit;
            rows.push(row);
            slack += 1;
        }

        Standard {
            rows,
            map,
            n_struct,
            n_slack,
        }
    }

    fn solve(mut self, p: &LpProblem, cfg: &LpConfig) -> LpSolution {
        let m = self.rows.len();
        let n_real = self.n_struct + self.n_slack;
        let n_total = n_real + m; // one artificial per row
        let width = n_total + 1;

        // flip rows to nonnegative rhs, then append artificial identity
        let mut tableau: Vec<Vec<f64>> = Vec::with_capacity(m);
        for (i, row) in self.rows.drain(..).enumerate() {
            let mut full = vec![0.0; width];
            let flip = if row[n_real] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n_real {
                full[j] = flip * row[j];
            }
            full[n_total] = flip * row[n_real];
            full[n_real + i] = 1.0;
            tableau.push(full);
        }
        let mut basis: Vec<usize> = (0..m).map(|i| n_real + i).collect();

        // phase 1: minimise the artificial sum
        let mut cost = vec![0.0; width];
        for row in &tableau {
            for j in 0..n_total {
                cost[j] -= row[j];
            }
            cost[n_total] -= row[n_total];
        }
        for j in n_real..n_total {
            cost[j] += 1.0;
        }

        let cap = cfg.iter_factor * (n_total + m) + 100;
        let mut iters = 0usize;
        match run_simplex(
            &mut tableau, &mut cost, &mut basis, n_total, n_total, cfg, cap, &mut iters,
        ) {
            RunOutcome::Optimal => {}
            RunOutcome::Unbounded => {
                // cannot happen for a sum of nonnegative artificials;
                // treat as a numerical failure
                return LpSolution::status_only(LpStatus::Infeasible, f64::NAN);
            }
            RunOutcome::IterationLimit => {
                return LpSolution::status_only(LpStatus::IterationLimit, 0.0)
            }
        }
        let infeasibility = -cost[n_total];
        let rhs_scale = 1.0 + tableau.iter().fold(0.0f64, |a, r| a.max(r[n_total].abs()));
        if infeasibility > cfg.tol * rhs_scale {
            return LpSolution::status_only(LpStatus::Infeasible, infeasibility);
        }

        // drive remaining artificials out of the basis where possible
        for r in 0..m {
            if basis[r] < n_real {
                continue;
            }
            let (mut best, mut best_val) = (None, 1e-7);
            for j in 0..n_real {
                let v = tableau[r][j].abs();
                if v > best_val {
                    best_val = v;
                    best = Some(j);
                }
            }
            if let Some(c) = best {
                pivot(&mut tableau, &mut cost, &mut basis, r, c);
            }
            // else: redundant row; the artificial stays basic at zero
        }

        // phase 2: original objective (artificial columns barred from entering)
        let min_obj: Vec<f64> = match p.sense {
            Sense::Min => p.objective.clone(),
            Sense::Max => p.objective.iter().map(|c| -c).collect(),
        };
        let mut c_std = vec![0.0; width];
        for (j, vm) in self.map.iter().enumerate() {
            let cj = min_obj[j];
            if cj == 0.0 {
                continue;
            }
            match *vm {
                VarMap::Shift { col, .. } => c_std[col] += cj,
                VarMap::Neg { col, .. } => c_std[col] -= cj,
                VarMap::Split { pos, neg } => {
                    c_std[pos] += cj;
                    c_std[neg] -= cj;
                }
            }
        }
        cost = c_std;
        for (r, &b) in basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for j in 0..width {
                    cost[j] -= cb * tableau[r][j];
                }
            }
        }

        match run_simplex(
            &mut tableau, &mut cost, &mut basis, n_total, n_real, cfg, cap, &mut iters,
        ) {
            RunOutcome::Optimal => {}
            RunOutcome::Unbounded => return LpSolution::status_only(LpStatus::Unbounded, 0.0),
            RunOutcome::IterationLimit => {
                return LpSolution::status_only(LpStatus::IterationLimit, 0.0)
            }
        }

        // recover original variables
        let mut x_std = vec![0.0; n_total];
        for (r, &b) in basis.iter().enumerate() {
            x_std[b] = tableau[r][n_total].max(0.0);
        }
        let x: Vec<f64> = self
            .map
            .iter()
            .map(|vm| match *vm {
                VarMap::Shift { col, lower } => lower + x_std[col],
                VarMap::Neg { col, upper } => upper - x_std[col],
                VarMap::Split { pos, neg } => x_std[pos] - x_std[neg],
            })
            .collect();
        let objective = dot(&p.objective, &x);
        LpSolution {
            status: LpStatus::Optimal,
            x,
            objective,
            infeasibility: 0.0,
        }
    }
}

enum RunOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

/// Runs simplex iterations in place. `eligible` limits entering columns
/// (used to bar artificials in phase 2).
#[allow(clippy::too_many_arguments)]
fn run_simplex(
    tableau: &mut [Vec<f64>],
    cost: &mut [f64],
    basis: &mut [usize],
    n_total: usize,
    eligible: usize,
    cfg: &LpConfig,
    cap: usize,
    iters: &mut usize,
) -> RunOutcome {
    let m = tableau.len();
    let mut degenerate_streak = 0usize;
    let mut bland = false;
    loop {
        if *iters >= cap {
            return RunOutcome::IterationLimit;
        }
        *iters += 1;

        let entering = if bland {
            (0..eligible).find(|&j| cost[j] < -cfg.tol)
        } else {
            let mut best = None;
            let mut best_val = -cfg.tol;
            for j in 0..eligible {
                if cost[j] < best_val {
                    best_val = cost[j];
                    best = Some(j);
                }
            }
            best
        };
        let Some(c) = entering else {
            return RunOutcome::Optimal;
        };

        // ratio test; ties resolved toward the smallest basis index
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..m {
            let a = tableau[r][c];
            if a <= cfg.tol {
                continue;
            }
            let ratio = tableau[r][n_total].max(0.0) / a;
            let better = match leave {
                None => true,
                Some(cur) => {
                    ratio < best_ratio - cfg.tol
                        || (ratio < best_ratio + cfg.tol && basis[r] < basis[cur])
                }
            };
            if better {
                best_ratio = ratio;
                leave = Some(r);
            }
        }
        let Some(r) = leave else {
            return RunOutcome::Unbounded;
        };

        if best_ratio <= cfg.tol {
            degenerate_streak += 1;
            if degenerate_streak > cfg.bland_after {
                bland = true;
            }
        } else {
            degenerate_streak = 0;
        }

        pivot(tableau, cost, basis, r, c);
    }
}

fn pivot(tableau: &mut [Vec<f64>], cost: &mut [f64], basis: &mut [usize], r: usize, c: usize) {
    let width = tableau[r].len();
    let piv = tableau[r][c];
    let inv = 1.0 / piv;
    for v in tableau[r].iter_mut() {
        *v *= inv;
    }
    tableau[r][c] = 1.0;
    for i in 0..tableau.len() {
        if i == r {
            continue;
        }
        let factor = tableau[i][c];
        if factor == 0.0 {
            continue;
        }
        for j in 0..width {
            tableau[i][j] -= factor * tableau[r][j];
        }
        tableau[i][c] = 0.0;
    }
    let factor = cost[c];
    if factor != 0.0 {
        for j in 0..width {
            cost[j] -= factor * tableau[r][j];
        }
        cost[c] = 0.0;
    }
    basis[r] = c;
}
