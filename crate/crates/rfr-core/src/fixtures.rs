//! Bundled example networks.
//!
//! `two_bus` is the illustrative single-line network: one three-phase
//! line, three single-phase customers on phases b, a, c of bus 2 with
//! +-20 kW limits, customer 2 pinned at -2 kW, and 0.95/1.05 p.u. voltage
//! bounds on bus 2. `feeder` is a synthetic ~30-bus low-voltage radial
//! feeder built from 5 line codes, with 10 free customers (5 kW export /
//! 6 kW import) and a population of fixed loads; it stands in for a real
//! network whose data cannot be redistributed.

use crate::model::{Cplx, Customer, Line, Network, Phase, Role};

/// The canonical two-bus network document.
pub fn two_bus_document() -> &'static str {
    include_str!("../fixtures/twobus.json")
}

/// The synthetic radial feeder document.
pub fn feeder_document() -> &'static str {
    include_str!("../fixtures/feeder.json")
}

/// Parses the bundled two-bus network.
pub fn two_bus() -> Network {
    Network::parse(two_bus_document()).expect("bundled two-bus fixture must parse")
}

/// Parses the bundled synthetic feeder.
pub fn feeder() -> Network {
    Network::parse(feeder_document()).expect("bundled feeder fixture must parse")
}

/// Sequence impedances (ohm/km) for the feeder's five line codes. The
/// first code models the distribution transformer as a series impedance.
const FEEDER_CODES: [(&str, [f64; 4]); 5] = [
    // (label, [r+, x+, r0, x0])
    ("tx", [0.085, 0.120, 0.085, 0.120]),
    ("lc1", [0.164, 0.080, 0.655, 0.320]),
    ("lc2", [0.325, 0.075, 1.300, 0.300]),
    ("lc3", [0.550, 0.079, 2.200, 0.316]),
    ("lc4", [0.871, 0.083, 3.480, 0.330]),
];

/// Builds the synthetic feeder in memory. The bundled `feeder.json` is
/// the serialised form of exactly this network.
pub fn build_feeder() -> Network {
    let mut buses: Vec<String> = vec!["grid".into()];
    let mut lines: Vec<Line> = Vec::new();
    let z_base = 230.0 * 230.0 / 1000.0;

    let code_matrix = |label: &str| {
        let (_, [rp, xp, r0, x0]) = FEEDER_CODES
            .iter()
            .find(|(l, _)| *l == label)
            .copied()
            .expect("unknown line code");
        crate::assemble::sequence_to_phase(Cplx::new(rp, xp), Cplx::new(r0, x0))
            .map(|e| e.scale(1.0 / z_base))
    };

    let add_line = |lines: &mut Vec<Line>,
                        buses: &mut Vec<String>,
                        from: &str,
                        to: &str,
                        code: &str,
                        length: f64| {
        if !buses.iter().any(|b| b == to) {
            buses.push(to.to_string());
        }
        lines.push(Line {
            from: from.into(),
            to: to.into(),
            z: code_matrix(code),
            length,
            code: Some(code.into()),
        });
    };

    // trunk: transformer then six cable sections
    add_line(&mut lines, &mut buses, "grid", "t1", "tx", 1.0);
    for i in 1..=6 {
        let from = format!("t{i}");
        let to = format!("t{}", i + 1);
        add_line(&mut lines, &mut buses, &from, &to, "lc1", 0.045);
    }
    // laterals off the trunk; deeper ones use weaker cable
    let laterals: [(&str, &str, &str, f64, usize); 6] = [
        ("t2", "a", "lc2", 0.040, 3),
        ("t3", "b", "lc3", 0.035, 4),
        ("t4", "c", "lc2", 0.040, 3),
        ("t5", "d", "lc4", 0.030, 5),
        ("t6", "e", "lc3", 0.035, 4),
        ("t7", "f", "lc4", 0.030, 3),
    ];
    for (root, tag, code, length, depth) in laterals {
        let mut prev = root.to_string();
        for k in 1..=depth {
            let bus = format!("{tag}{k}");
            add_line(&mut lines, &mut buses, &prev, &bus, code, length);
            prev = bus;
        }
    }

    // ten free customers at lateral ends, spread over the phases
    let free: [(&str, &str, Phase); 10] = [
        ("1", "a3", Phase::A),
        ("10", "b4", Phase::B),
        ("11", "c3", Phase::C),
        ("12", "d4", Phase::A),
        ("13", "d5", Phase::B),
        ("14", "e3", Phase::C),
        ("15", "e4", Phase::A),
        ("16", "f2", Phase::B),
        ("17", "f3", Phase::C),
        ("18", "d2", Phase::A),
    ];
    let mut customers: Vec<Customer> = free
        .iter()
        .map(|&(id, bus, phase)| Customer {
            id: id.into(),
            bus: bus.into(),
            phase,
            p_fixed: None,
            q_fixed: 0.0,
            p_min: -5.0,
            p_max: 6.0,
            role: Role::Free,
        })
        .collect();

    // fixed background loads along the feeder (kW; negative = export)
    let fixed: [(&str, Phase, f64); 12] = [
        ("t2", Phase::A, 1.1),
        ("t3", Phase::B, 0.8),
        ("t4", Phase::C, 1.3),
        ("t5", Phase::A, 0.6),
        ("a1", Phase::B, 0.9),
        ("a2", Phase::C, 0.7),
        ("b2", Phase::A, 1.2),
        ("b3", Phase::C, -0.8),
        ("c2", Phase::B, 1.0),
        ("d1", Phase::C, 0.5),
        ("e1", Phase::A, -0.6),
        ("f1", Phase::B, 0.9),
    ];
    for (i, &(bus, phase, p)) in fixed.iter().enumerate() {
        customers.push(Customer {
            id: format!("l{:02}", i + 1),
            bus: bus.into(),
            phase,
            p_fixed: Some(p),
            q_fixed: 0.0,
            p_min: -10.0,
            p_max: 10.0,
            role: Role::Fixed,
        });
    }

    Network {
        base_voltage: 230.0,
        base_power: 1.0,
        buses,
        lines,
        reference_bus: "grid".into(),
        reference_voltage: [
            Cplx::new(1.0, 0.0),
            Cplx::new(-0.5, -(3.0f64).sqrt() / 2.0),
            Cplx::new(-0.5, (3.0f64).sqrt() / 2.0),
        ],
        customers,
        v_min: 0.95,
        v_max: 1.05,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::networks_close;

    #[test]
    fn feeder_is_well_formed() {
        let net = build_feeder();
        assert!(net.validate().is_empty(), "{:?}", net.validate());
        assert_eq!(net.buses.len(), 30);
        assert_eq!(net.lines.len(), 29);
        assert_eq!(net.free_customers().len(), 10);
        let codes: std::collections::HashSet<_> =
            net.lines.iter().filter_map(|l| l.code.clone()).collect();
        assert_eq!(codes.len(), 5);
    }

    #[test]
    fn bundled_feeder_document_matches_builder() {
        let parsed = feeder();
        let built = build_feeder();
        assert!(networks_close(&parsed, &built, 1e-12));
    }
}
