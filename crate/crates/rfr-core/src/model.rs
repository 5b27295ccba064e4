//! Domain types for the unbalanced network and ingestion/validation of
//! network description documents.
//!
//! A network document is a single JSON file with top-level keys `base`,
//! `buses`, `lines`, `customers`, `limits` and `reference`. Complex
//! numbers are encoded as two-element `[re, im]` arrays. Impedances are
//! given in ohms and converted to per-unit on parse (divided by
//! `base_voltage^2 / base_power`); customer powers stay in kW/kVar.
//! See `fixtures/twobus.json` for the canonical example.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A complex quantity: impedance entries (resistance + j reactance) and
/// per-unit voltages both use this shape. Serialised as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Cplx {
    pub re: f64,
    pub im: f64,
}

impl Cplx {
    pub const ZERO: Cplx = Cplx { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Cplx { re, im }
    }

    pub fn scale(self, k: f64) -> Self {
        Cplx::new(self.re * k, self.im * k)
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl From<[f64; 2]> for Cplx {
    fn from(v: [f64; 2]) -> Self {
        Cplx::new(v[0], v[1])
    }
}

impl From<Cplx> for [f64; 2] {
    fn from(c: Cplx) -> Self {
        [c.re, c.im]
    }
}

impl std::ops::Add for Cplx {
    type Output = Cplx;
    fn add(self, o: Cplx) -> Cplx {
        Cplx::new(self.re + o.re, self.im + o.im)
    }
}

impl std::ops::Sub for Cplx {
    type Output = Cplx;
    fn sub(self, o: Cplx) -> Cplx {
        Cplx::new(self.re - o.re, self.im - o.im)
    }
}

impl std::ops::Mul for Cplx {
    type Output = Cplx;
    fn mul(self, o: Cplx) -> Cplx {
        Cplx::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// Phase of a three-phase system. Nominal voltage angles are 0, -120 and
/// +120 degrees for a, b, c.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    /// Nominal voltage angle in radians.
    pub fn angle(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * std::f64::consts::FRAC_PI_3,
            Phase::C => 2.0 * std::f64::consts::FRAC_PI_3,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::A => write!(f, "a"),
            Phase::B => write!(f, "b"),
            Phase::C => write!(f, "c"),
        }
    }
}

/// Symmetric 3x3 matrix of complex line impedances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseImpedanceMatrix {
    entries: [[Cplx; 3]; 3],
}

impl PhaseImpedanceMatrix {
    /// Wraps raw entries after a symmetry check; the 6 unique entries of
    /// the symmetric model are the only supported form.
    pub fn new(entries: [[Cplx; 3]; 3]) -> Result<Self> {
        let m = PhaseImpedanceMatrix { entries };
        if !m.is_symmetric() {
            return Err(Error::Parse(
                "lines[].z: impedance matrix must be symmetric".into(),
            ));
        }
        Ok(m)
    }

    pub fn is_symmetric(&self) -> bool {
        for i in 0..3 {
            for j in i + 1..3 {
                let a = self.entries[i][j];
                let b = self.entries[j][i];
                let scale = 1.0f64.max(a.abs()).max(b.abs());
                if (a - b).abs() > 1e-12 * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn get(&self, i: usize, j: usize) -> Cplx {
        self.entries[i][j]
    }

    pub fn entries(&self) -> &[[Cplx; 3]; 3] {
        &self.entries
    }

    pub fn map(&self, f: impl Fn(Cplx) -> Cplx) -> PhaseImpedanceMatrix {
        let mut out = self.entries;
        for row in &mut out {
            for e in row.iter_mut() {
                *e = f(*e);
            }
        }
        PhaseImpedanceMatrix { entries: out }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Cplx)> + '_ {
        (0..3).flat_map(move |i| (0..3).map(move |j| (i, j, self.entries[i][j])))
    }
}

/// Whether a customer's active power is an optimisation variable or
/// pinned to a forecast value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Free,
    Fixed,
}

/// Which side of a two-sided limit a constraint row encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Lower,
    Upper,
}

/// A single-phase customer connection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: String,
    pub bus: String,
    pub phase: Phase,
    /// Pinned active power in kW; set exactly when `role` is `fixed`.
    #[serde(rename = "p_kw", default, skip_serializing_if = "Option::is_none")]
    pub p_fixed: Option<f64>,
    /// Reactive power in kVar, always fixed.
    #[serde(rename = "q_kvar")]
    pub q_fixed: f64,
    /// Lower active-power limit in kW (negative = export).
    #[serde(rename = "p_min_kw")]
    pub p_min: f64,
    /// Upper active-power limit in kW (import).
    #[serde(rename = "p_max_kw")]
    pub p_max: f64,
    pub role: Role,
}

/// A three-phase line section. The impedance matrix is stored in per-unit
/// after parsing; `length` multiplies it when the linear model is built.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub from: String,
    pub to: String,
    /// Per-unit impedance matrix (per unit of `length`).
    pub z: PhaseImpedanceMatrix,
    pub length: f64,
    /// Optional line-code label; lines sharing a code share sequence-mode
    /// uncertainty parameters.
    pub code: Option<String>,
}

/// An unbalanced radial distribution network in per-unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    /// Phase-to-neutral voltage base in volts.
    pub base_voltage: f64,
    /// Power base in kVA.
    pub base_power: f64,
    pub buses: Vec<String>,
    pub lines: Vec<Line>,
    pub reference_bus: String,
    /// Per-unit reference voltage for phases a, b, c.
    pub reference_voltage: [Cplx; 3],
    pub customers: Vec<Customer>,
    pub v_min: f64,
    pub v_max: f64,
}

/// One violated invariant, as a description rather than an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Name of the invariant that failed.
    pub invariant: String,
    /// The offending element.
    pub subject: String,
    pub detail: String,
}

impl Violation {
    fn new(invariant: &str, subject: impl Into<String>, detail: impl Into<String>) -> Self {
        Violation {
            invariant: invariant.into(),
            subject: subject.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.invariant, self.subject, self.detail)
    }
}

// --- document schema -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct BaseDoc {
    /// Phase-to-neutral base voltage in volts.
    voltage_v: f64,
    /// Base power in kVA.
    power_kva: f64,
}

#[derive(Serialize, Deserialize)]
struct ReferenceDoc {
    bus: String,
    voltage: [Cplx; 3],
}

#[derive(Serialize, Deserialize)]
struct LimitsDoc {
    v_min: f64,
    v_max: f64,
}

#[derive(Serialize, Deserialize)]
struct LineDoc {
    from: String,
    to: String,
    /// 3x3 complex impedance matrix in ohms.
    z_ohm: [[Cplx; 3]; 3],
    #[serde(default = "one")]
    length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    code: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    base: BaseDoc,
    reference: ReferenceDoc,
    limits: LimitsDoc,
    buses: Vec<String>,
    lines: Vec<LineDoc>,
    customers: Vec<Customer>,
}

impl Network {
    /// Parses a network document, applying the ohm -> per-unit conversion
    /// and rejecting any invariant violation.
    pub fn parse(text: &str) -> Result<Network> {
        let doc: NetworkDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let net = Network::from_doc(doc)?;
        let violations = net.validate();
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    fn from_doc(doc: NetworkDoc) -> Result<Network> {
        if !(doc.base.voltage_v.is_finite() && doc.base.voltage_v > 0.0) {
            return Err(Error::Parse("base.voltage_v: must be positive".into()));
        }
        if !(doc.base.power_kva.is_finite() && doc.base.power_kva > 0.0) {
            return Err(Error::Parse("base.power_kva: must be positive".into()));
        }
        let z_base = doc.base.voltage_v * doc.base.voltage_v / (doc.base.power_kva * 1000.0);
        let lines = doc
            .lines
            .into_iter()
            .map(|l| {
                let z_pu = PhaseImpedanceMatrix::new(l.z_ohm)?.map(|e| e.scale(1.0 / z_base));
                Ok(Line {
                    from: l.from,
                    to: l.to,
                    z: z_pu,
                    length: l.length,
                    code: l.code,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            base_voltage: doc.base.voltage_v,
            base_power: doc.base.power_kva,
            buses: doc.buses,
            lines,
            reference_bus: doc.reference.bus,
            reference_voltage: doc.reference.voltage,
            customers: doc.customers,
            v_min: doc.limits.v_min,
            v_max: doc.limits.v_max,
        })
    }

    /// Impedance base in ohms.
    pub fn z_base(&self) -> f64 {
        self.base_voltage * self.base_voltage / (self.base_power * 1000.0)
    }

    /// Renders the network back into its document form (per-unit
    /// impedances converted back to ohms).
    pub fn to_document(&self) -> String {
        let z_base = self.z_base();
        let doc = NetworkDoc {
            base: BaseDoc {
                voltage_v: self.base_voltage,
                power_kva: self.base_power,
            },
            reference: ReferenceDoc {
                bus: self.reference_bus.clone(),
                voltage: self.reference_voltage,
            },
            limits: LimitsDoc {
                v_min: self.v_min,
                v_max: self.v_max,
            },
            buses: self.buses.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| LineDoc {
                    from: l.from.clone(),
                    to: l.to.clone(),
                    z_ohm: *l.z.map(|e| e.scale(z_base)).entries(),
                    length: l.length,
                    code: l.code.clone(),
                })
                .collect(),
            customers: self.customers.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("document serialisation cannot fail")
    }

    /// Checks every structural invariant; returns an empty list iff the
    /// network is well formed. Violations are returned, never thrown.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let bus_set: HashSet<&str> = self.buses.iter().map(String::as_str).collect();
        if bus_set.len() != self.buses.len() {
            out.push(Violation::new("unique-bus-ids", "buses", "duplicate bus id"));
        }
        if !bus_set.contains(self.reference_bus.as_str()) {
            out.push(Violation::new(
                "reference-bus-exists",
                &self.reference_bus,
                "reference bus not in bus list",
            ));
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max) {
            out.push(Violation::new(
                "voltage-limits-ordered",
                "limits",
                format!(
                    "need 0 < v_min < v_max, got [{}, {}]",
                    self.v_min, self.v_max
                ),
            ));
        }
        for v in self.reference_voltage {
            if !v.is_finite() {
                out.push(Violation::new(
                    "finite-reference-voltage",
                    &self.reference_bus,
                    "non-finite reference voltage entry",
                ));
            }
        }
        for (idx, line) in self.lines.iter().enumerate() {
            let subject = format!("line {}-{}", line.from, line.to);
            for end in [&line.from, &line.to] {
                if !bus_set.contains(end.as_str()) {
                    out.push(Violation::new(
                        "line-bus-exists",
                        &subject,
                        format!("unknown bus {end}"),
                    ));
                }
            }
            if !(line.length.is_finite() && line.length > 0.0) {
                out.push(Violation::new(
                    "positive-line-length",
                    &subject,
                    format!("length {}", line.length),
                ));
            }
            if line.z.iter().any(|(_, _, e)| !e.is_finite()) {
                out.push(Violation::new(
                    "finite-impedance",
                    &subject,
                    "non-finite impedance entry",
                ));
            }
            if !line.z.is_symmetric() {
                out.push(Violation::new(
                    "symmetric-impedance",
                    &subject,
                    format!("line index {idx}: asymmetric impedance matrix"),
                ));
            }
        }
        for c in &self.customers {
            let subject = format!("customer {}", c.id);
            if !bus_set.contains(c.bus.as_str()) {
                out.push(Violation::new(
                    "customer-bus-exists",
                    &subject,
                    format!("unknown bus {}", c.bus),
                ));
            }
            if !(c.p_min <= c.p_max) {
                out.push(Violation::new(
                    "power-limits-ordered",
                    &subject,
                    format!("p_min {} > p_max {}", c.p_min, c.p_max),
                ));
            }
            match (c.role, c.p_fixed) {
                (Role::Fixed, None) => out.push(Violation::new(
                    "fixed-power-present",
                    &subject,
                    "role is fixed but p_kw is missing",
                )),
                (Role::Free, Some(_)) => out.push(Violation::new(
                    "free-power-unset",
                    &subject,
                    "role is free but p_kw is set",
                )),
                _ => {}
            }
        }
        out.extend(self.check_radial(&bus_set));
        out
    }

    /// Radiality: exactly |buses| - 1 lines and every bus reachable from
    /// the reference.
    fn check_radial(&self, bus_set: &HashSet<&str>) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.lines.len() + 1 != self.buses.len() {
            out.push(Violation::new(
                "radial-line-count",
                "lines",
                format!(
                    "{} lines for {} buses; a radial network needs {}",
                    self.lines.len(),
                    self.buses.len(),
                    self.buses.len().saturating_sub(1)
                ),
            ));
        }
        if !bus_set.contains(self.reference_bus.as_str()) {
            return out; // reachability is meaningless without a root
        }
        let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
        for line in &self.lines {
            adjacency
                .entry(line.from.as_str())
                .or_default()
                .push(line.to.as_str());
            adjacency
                .entry(line.to.as_str())
                .or_default()
                .push(line.from.as_str());
        }
        let mut seen: HashSet<&str> = HashSet::new();
        let mut queue = VecDeque::from([self.reference_bus.as_str()]);
        seen.insert(self.reference_bus.as_str());
        while let Some(bus) = queue.pop_front() {
            for &next in adjacency.get(bus).into_iter().flatten() {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        for bus in &self.buses {
            if !seen.contains(bus.as_str()) {
                out.push(Violation::new(
                    "connected",
                    bus,
                    "bus unreachable from the reference bus",
                ));
            }
        }
        out
    }

    /// Indices of free customers, in input order.
    pub fn free_customers(&self) -> Vec<usize> {
        self.customers
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == Role::Free)
            .map(|(i, _)| i)
            .collect()
    }

    /// The fixed reactive-power vector (kVar) over all customers.
    pub fn q_vector(&self) -> Vec<f64> {
        self.customers.iter().map(|c| c.q_fixed).collect()
    }
}

/// Parses a network description document.
pub fn parse_network(text: &str) -> Result<Network> {
    Network::parse(text)
}

/// Returns every invariant violation of a network (empty = well formed).
pub fn validate_network(net: &Network) -> Vec<Violation> {
    net.validate()
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Field-wise closeness used by round-trip checks.
    pub fn networks_close(a: &Network, b: &Network, tol: f64) -> bool {
        let close = |x: f64, y: f64| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()));
        a.buses == b.buses
            && a.reference_bus == b.reference_bus
            && a.customers == b.customers
            && close(a.v_min, b.v_min)
            && close(a.v_max, b.v_max)
            && close(a.base_voltage, b.base_voltage)
            && close(a.base_power, b.base_power)
            && a.lines.len() == b.lines.len()
            && a.lines.iter().zip(&b.lines).all(|(la, lb)| {
                la.from == lb.from
                    && la.to == lb.to
                    && close(la.length, lb.length)
                    && la.code == lb.code
                    && la
                        .z
                        .iter()
                        .zip(lb.z.iter())
                        .all(|((_, _, ea), (_, _, eb))| close(ea.re, eb.re) && close(ea.im, eb.im))
            })
            && a.reference_voltage
                .iter()
                .zip(&b.reference_voltage)
                .all(|(x, y)| close(x.re, y.re) && close(x.im, y.im))
    }

    pub fn balanced_reference() -> [Cplx; 3] {
        [
            Cplx::new(1.0, 0.0),
            Cplx::new(-0.5, -(3.0f64).sqrt() / 2.0),
            Cplx::new(-0.5, (3.0f64).sqrt() / 2.0),
        ]
    }

    pub fn path_network(n: usize) -> Network {
        let buses: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
        let z = PhaseImpedanceMatrix::new([[Cplx::new(0.1, 0.2); 3]; 3]).unwrap();
        let lines = (1..n)
            .map(|i| Line {
                from: i.to_string(),
                to: (i + 1).to_string(),
                z,
                length: 1.0,
                code: None,
            })
            .collect();
        Network {
            base_voltage: 230.0,
            base_power: 1.0,
            buses,
            lines,
            reference_bus: "1".into(),
            reference_voltage: balanced_reference(),
            customers: vec![],
            v_min: 0.95,
            v_max: 1.05,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    #[test]
    fn two_bus_fixture_parses() {
        let net = fixtures::two_bus();
        assert_eq!(net.buses.len(), 2);
        assert_eq!(net.lines.len(), 1);
        assert_eq!(net.customers.len(), 3);
        // recorded impedance matrix, converted to per-unit
        let z_base = 230.0 * 230.0 / 1000.0;
        let z = net.lines[0].z;
        assert!((z.get(0, 0).re * z_base - 0.3465).abs() < 1e-10);
        assert!((z.get(0, 0).im * z_base - 1.0179).abs() < 1e-10);
        assert!((z.get(0, 1).re * z_base - 0.1560).abs() < 1e-10);
        assert!((z.get(1, 2).im * z_base - 0.3849).abs() < 1e-10);
        // customers 1..3 on phases b, a, c; customer 2 fixed at -2 kW
        assert_eq!(net.customers[0].phase, Phase::B);
        assert_eq!(net.customers[1].phase, Phase::A);
        assert_eq!(net.customers[2].phase, Phase::C);
        assert_eq!(net.customers[1].role, Role::Fixed);
        assert_eq!(net.customers[1].p_fixed, Some(-2.0));
        assert_eq!(net.free_customers(), vec![0, 2]);
        assert!(net.validate().is_empty());
    }

    #[test]
    fn degenerate_voltage_limits_rejected() {
        let text = fixtures::two_bus_document().replace("\"v_min\": 0.95", "\"v_min\": 1.05");
        match Network::parse(&text) {
            Err(Error::Invalid(vs)) => {
                assert!(vs.iter().any(|v| v.invariant == "voltage-limits-ordered"))
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn four_bus_path_is_radial() {
        let net = path_network(4);
        assert_eq!(net.lines.len(), 3);
        assert!(net.validate().is_empty());
    }

    #[test]
    fn parallel_line_breaks_radiality() {
        let mut net = fixtures::two_bus();
        net.lines.push(net.lines[0].clone());
        let vs = net.validate();
        assert!(vs.iter().any(|v| v.invariant == "radial-line-count"));
    }

    #[test]
    fn dangling_customer_bus_reported() {
        let mut net = fixtures::two_bus();
        net.customers[0].bus = "99".into();
        let vs = net.validate();
        assert!(vs
            .iter()
            .any(|v| v.invariant == "customer-bus-exists" && v.subject.contains("customer 1")));
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        match Network::parse("{ \"base\": 3 }") {
            Err(Error::Parse(msg)) => assert!(!msg.is_empty()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_impedance_rejected_at_parse() {
        let text = fixtures::two_bus_document().replace("[0.1560, 0.5017]", "[0.9, 0.5017]");
        // the replacement hits both mirrored entries, so patch only one back
        let text = text.replacen("[0.9, 0.5017]", "[0.1560, 0.5017]", 1);
        assert!(matches!(Network::parse(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn document_round_trip() {
        let net = fixtures::two_bus();
        let text = net.to_document();
        let again = Network::parse(&text).unwrap();
        assert!(networks_close(&net, &again, 1e-12));
    }

    #[test]
    fn per_unit_round_trip_recovers_ohms() {
        let net = fixtures::two_bus();
        let z_base = net.z_base();
        let original = [[0.3465, 1.0179], [0.1560, 0.5017], [0.1580, 0.4236]];
        for (j, expect) in original.iter().enumerate() {
            let back = net.lines[0].z.get(0, j).scale(z_base);
            assert!((back.re - expect[0]).abs() / expect[0].abs() < 1e-10);
            assert!((back.im - expect[1]).abs() / expect[1].abs() < 1e-10);
        }
    }

    /// Union-find on bus indices, as an independent connectivity oracle.
    struct UnionFind(Vec<usize>);
    impl UnionFind {
        fn new(n: usize) -> Self {
            UnionFind((0..n).collect())
        }
        fn find(&mut self, mut x: usize) -> usize {
            while self.0[x] != x {
                self.0[x] = self.0[self.0[x]];
                x = self.0[x];
            }
            x
        }
        fn union(&mut self, a: usize, b: usize) {
            let (ra, rb) = (self.find(a), self.find(b));
            self.0[ra] = rb;
        }
    }

    proptest! {
        /// Radiality check agrees with union-find connectivity plus edge
        /// count on random graphs.
        #[test]
        fn radiality_matches_union_find(
            n_bus in 2usize..9,
            edges in proptest::collection::vec((0usize..8, 0usize..8), 1..12)
        ) {
            let edges: Vec<(usize, usize)> = edges
                .into_iter()
                .map(|(a, b)| (a % n_bus, b % n_bus))
                .filter(|(a, b)| a != b)
                .collect();
            prop_assume!(!edges.is_empty());

            let mut net = path_network(n_bus);
            let z = net.lines[0].z;
            net.lines = edges
                .iter()
                .map(|&(a, b)| Line {
                    from: (a + 1).to_string(),
                    to: (b + 1).to_string(),
                    z,
                    length: 1.0,
                    code: None,
                })
                .collect();

            let mut uf = UnionFind::new(n_bus);
            for &(a, b) in &edges {
                uf.union(a, b);
            }
            let root = uf.find(0);
            let connected = (0..n_bus).all(|i| uf.find(i) == root);
            let radial_oracle = connected && edges.len() == n_bus - 1;

            let vs = net.validate();
            let radial_checked = !vs.iter().any(|v| {
                v.invariant == "radial-line-count" || v.invariant == "connected"
            });
            prop_assert_eq!(radial_checked, radial_oracle);
        }

        /// Serialising and re-parsing keeps every field within 1e-12.
        #[test]
        fn random_round_trip(
            r in -5.0f64..5.0, x in 0.01f64..5.0,
            len in 0.1f64..3.0, p in -10.0f64..10.0
        ) {
            let mut net = path_network(3);
            let e = Cplx::new(r, x);
            net.lines[0].z = PhaseImpedanceMatrix::new([[e; 3]; 3]).unwrap();
            net.lines[0].length = len;
            net.customers.push(Customer {
                id: "c1".into(),
                bus: "3".into(),
                phase: Phase::B,
                p_fixed: Some(p),
                q_fixed: 0.5,
                p_min: -20.0,
                p_max: 20.0,
                role: Role::Fixed,
            });
            let again = Network::parse(&net.to_document()).unwrap();
            prop_assert!(networks_close(&net, &again, 1e-12));
        }
    }
}
