use std::collections::BTreeSet;

use proptest::prelude::*;

use splitlock_core::attack::{check_inferred, proximity_attack, AttackConfig};
use splitlock_core::layout::{assign_layers, place_with, recombine, split, AnnealOptions, Grid, LayoutMode, DEFAULT_THRESHOLDS};
use splitlock_core::lock::{apply_key, check_key_structure, LockError};
use splitlock_core::metrics::{ccr, hamming_distance, oer};
use splitlock_core::netlist::{Gate, GateKind, Netlist};
use splitlock_core::sim::{check_equivalence, net_values, simulate, InputSpace};
use splitlock_core::{lock, parse_bench, partition_random_balanced, write_bench};

const LOGIC: [GateKind; 8] = [
    GateKind::And,
    GateKind::Nand,
    GateKind::Or,
    GateKind::Nor,
    GateKind::Xor,
    GateKind::Xnor,
    GateKind::Not,
    GateKind::Buff,
];

/// Random DAG: every gate reads earlier nets, every sink-less gate is a PO.
fn netlist() -> impl Strategy<Value = Netlist> {
    (2usize..6, 2usize..24)
        .prop_flat_map(|(ni, ng)| {
            let gates = (0..ng)
                .map(|g| {
                    let avail = ni + g;
                    (
                        0..LOGIC.len(),
                        proptest::collection::vec(0..avail, 1..4),
                    )
                })
                .collect::<Vec<_>>();
            (Just(ni), gates)
        })
        .prop_map(|(ni, shape)| {
            let mut names: Vec<String> = (0..ni).map(|i| format!("i{i}")).collect();
            let mut gates = Vec::new();
            for (g, (kind, ins)) in shape.into_iter().enumerate() {
                let kind = LOGIC[kind];
                let ins: Vec<String> = match kind {
                    GateKind::Not | GateKind::Buff => vec![names[ins[0]].clone()],
                    _ if ins.len() < 2 => vec![names[ins[0]].clone(), names[(ins[0] + 1) % names.len()].clone()],
                    _ => ins.iter().map(|&i| names[i].clone()).collect(),
                };
                let out = format!("g{g}");
                gates.push(Gate::new(out.clone(), kind, ins));
                names.push(out);
            }
            let used: BTreeSet<&String> = gates.iter().flat_map(|g| g.inputs.iter()).collect();
            let outputs: Vec<String> = gates
                .iter()
                .map(|g| g.output.clone())
                .filter(|o| !used.contains(o))
                .collect();
            Netlist::new("rand", names[..ni].to_vec(), outputs, gates).unwrap()
        })
}

fn bits(v: u32, n: usize) -> Vec<bool> {
    (0..n).rev().map(|i| v >> i & 1 == 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bench_round_trip(n in netlist()) {
        let back = parse_bench(&write_bench(&n)).unwrap();
        prop_assert_eq!(back.inputs(), n.inputs());
        prop_assert_eq!(back.outputs(), n.outputs());
        prop_assert_eq!(back.gates(), n.gates());
    }

    #[test]
    fn gate_order_does_not_matter(n in netlist(), rot in 0usize..24) {
        let (name, ins, outs, mut gates) = n.clone().into_parts();
        let r = rot % gates.len();
        gates.rotate_left(r);
        gates.reverse();
        let shuffled = Netlist::new(name, ins, outs, gates).unwrap();
        prop_assert!(check_equivalence(&n, &shuffled, InputSpace::Exhaustive).unwrap().equivalent);
    }

    #[test]
    fn bit_parallel_matches_scalar(n in netlist()) {
        let ni = n.inputs().len();
        for v in 0..1u32 << ni {
            let x = bits(v, ni);
            let values = net_values(&n, &x).unwrap();
            for g in n.gates() {
                let ins: Vec<bool> = g.inputs.iter().map(|i| values[i]).collect();
                prop_assert_eq!(values[&g.output], g.kind.eval(&ins));
            }
            let outs: Vec<bool> = n.outputs().iter().map(|o| values[o]).collect();
            prop_assert_eq!(simulate(&n, &x).unwrap(), outs);
        }
    }

    #[test]
    fn partitions_are_disjoint_balanced_and_acyclic(n in netlist(), m in 1usize..5, seed in any::<u64>()) {
        prop_assume!(m <= n.gate_count());
        let parts = partition_random_balanced(&n, m, seed).unwrap();
        let mut seen = BTreeSet::new();
        let sizes: Vec<usize> = parts.iter().map(|p| p.gates.len()).collect();
        for p in &parts {
            for g in &p.gates {
                prop_assert!(seen.insert(g.clone()));
            }
        }
        prop_assert_eq!(seen.len(), n.gate_count());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        // a net of module j only ever feeds modules j and later
        let module_of = |net: &str| parts.iter().position(|p| p.contains(net));
        for g in n.gates() {
            let mg = module_of(&g.output).unwrap();
            for i in &g.inputs {
                if let Some(mi) = module_of(i) {
                    prop_assert!(mi <= mg);
                }
            }
        }
    }

    #[test]
    fn hd_and_oer_of_self_are_zero(n in netlist(), seed in any::<u64>()) {
        prop_assert_eq!(hamming_distance(&n, &n, 1000, seed).unwrap(), 0.0);
        prop_assert!(!oer(&n, &n, 1000, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn locking_invariants(n in netlist(), k in 1usize..5, seed in any::<u64>()) {
        let design = match lock(&n, k, 1, seed) {
            Ok(d) => d,
            Err(LockError::NoFeasibleFault { .. } | LockError::NoDetectableFault { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert_eq!(design.k(), k);
        check_key_structure(&design).map_err(TestCaseError::fail)?;
        prop_assert!(check_equivalence(&n, &design.netlist, InputSpace::Exhaustive).unwrap().equivalent);
        for i in 0..k {
            let mut wrong = design.key.bits.clone();
            wrong[i] = !wrong[i];
            let locked = apply_key(&design, &wrong).unwrap();
            prop_assert!(!check_equivalence(&n, &locked, InputSpace::Exhaustive).unwrap().equivalent);
        }
    }

    #[test]
    fn layout_round_trip_and_attack_legality(n in netlist(), k in 1usize..4, seed in any::<u64>(), split_layer in 1usize..7) {
        let Ok(design) = lock(&n, k, 1, seed) else { return Ok(()) };
        let grid = Grid::for_cells(design.netlist.gate_count(), 0.7);
        let quick = AnnealOptions { moves_per_cell: 10, ..AnnealOptions::default() };
        let mut broken = Vec::new();
        for mode in [LayoutMode::Naive, LayoutMode::Secure] {
            let p = place_with(&design.netlist, grid, seed, mode, &quick).unwrap();
            prop_assert!(p.is_legal());
            for layer in 1..8 {
                let l = assign_layers(&p, &design.netlist, &DEFAULT_THRESHOLDS, layer, mode).unwrap();
                if mode == LayoutMode::Secure {
                    prop_assert!(l.key_connections().all(|c| c.top_layer == layer + 1));
                } else {
                    broken.push(l.broken_at(layer).count());
                }
            }
            let l = assign_layers(&p, &design.netlist, &DEFAULT_THRESHOLDS, split_layer, mode).unwrap();
            let (feol, beol) = split(&design.netlist, &p, &l, split_layer).unwrap();
            let back = recombine(&feol, &beol).unwrap();
            prop_assert!(check_equivalence(&n, &back, InputSpace::Exhaustive).unwrap().equivalent);

            let cfg = AttackConfig { seed, ..AttackConfig::default() };
            let inferred = proximity_attack(&feol, &cfg).unwrap();
            prop_assert!(check_inferred(&feol, &inferred, &cfg).is_ok());
            prop_assert_eq!(&inferred, &proximity_attack(&feol, &cfg).unwrap());
            let c = ccr(&beol, &inferred, &design).unwrap();
            prop_assert!(c.key_physical <= c.key_logical);
        }
        prop_assert!(broken.windows(2).all(|w| w[0] >= w[1]));
    }
}
