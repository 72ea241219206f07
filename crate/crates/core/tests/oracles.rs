use splitlock_core::attack::random_key_attack;
use splitlock_core::layout::{assign_layers, place, recombine, split, Grid, LayoutMode, DEFAULT_THRESHOLDS};
use splitlock_core::lock::{apply_key, LockedDesign};
use splitlock_core::metrics::{ccr, hamming_distance_in, oer};
use splitlock_core::netlist::{Gate, GateKind, Netlist};
use splitlock_core::sim::{check_equivalence, net_values, InputSpace};
use splitlock_core::{lock, parse_bench};

const C17: &str = include_str!("../../../benchmarks/c17.bench");

fn c17() -> Netlist {
    parse_bench(C17).unwrap()
}

fn bits(v: u32, n: usize) -> Vec<bool> {
    (0..n).rev().map(|i| v >> i & 1 == 1).collect()
}

#[test]
fn locked_c17_round_trips_through_split() {
    let n = c17();
    for seed in 0..5 {
        let d = lock(&n, 4, 1, seed).unwrap();
        assert!(check_equivalence(&n, &d.netlist, InputSpace::Exhaustive).unwrap().equivalent);
        let grid = Grid::for_cells(d.netlist.gate_count(), 0.7);
        for mode in [LayoutMode::Naive, LayoutMode::Secure] {
            let p = place(&d.netlist, grid, seed, mode).unwrap();
            let l = assign_layers(&p, &d.netlist, &DEFAULT_THRESHOLDS, 4, mode).unwrap();
            let (feol, beol) = split(&d.netlist, &p, &l, 4).unwrap();
            let back = recombine(&feol, &beol).unwrap();
            assert!(check_equivalence(&n, &back, InputSpace::Exhaustive).unwrap().equivalent);
        }
    }
}

/// A single flipped bit is exposed on a failing pattern of the module that
/// carries it.
#[test]
fn single_wrong_bit_shows_on_its_module_pattern() {
    let n = c17();
    for seed in 0..4 {
        let d = lock(&n, 4, 2, seed).unwrap();
        for i in 0..d.k() {
            let mut wrong = d.key.bits.clone();
            wrong[i] = !wrong[i];
            let bad = apply_key(&d, &wrong).unwrap();
            assert!(oer(&n, &bad, 1, 0).unwrap());
            let module = d.modules.iter().find(|m| m.key_indices.contains(&i)).unwrap();
            let mut on_pattern = false;
            for v in 0..32 {
                let x = bits(v, 5);
                let good = splitlock_core::simulate(&n, &x).unwrap();
                if splitlock_core::simulate(&bad, &x).unwrap() != good {
                    let values = net_values(&n, &x).unwrap();
                    let local: Vec<bool> = module.scope_inputs.iter().map(|s| values[s]).collect();
                    on_pattern |= module.patterns.iter().any(|p| p.inputs == local);
                }
            }
            assert!(on_pattern, "seed {seed} bit {i}");
        }
    }
}

fn invert_all_outputs(n: &Netlist) -> Netlist {
    let (name, inputs, outputs, mut gates) = n.clone().into_parts();
    for g in gates.iter_mut() {
        if outputs.contains(&g.output) {
            g.output = format!("{}_raw", g.output);
        }
        for i in g.inputs.iter_mut() {
            if outputs.contains(i) {
                *i = format!("{i}_raw");
            }
        }
    }
    for o in &outputs {
        gates.push(Gate::new(o.clone(), GateKind::Not, vec![format!("{o}_raw")]));
    }
    Netlist::new(name, inputs, outputs, gates).unwrap()
}

#[test]
fn hd_of_inverted_outputs_is_full() {
    let n = c17();
    let inv = invert_all_outputs(&n);
    assert_eq!(hamming_distance_in(&n, &inv, InputSpace::Exhaustive).unwrap(), 100.0);
}

#[test]
fn sampled_hd_tracks_exhaustive_hd() {
    let n = c17();
    let d = lock(&n, 4, 1, 7).unwrap();
    for v in 1..16u32 {
        let wrong: Vec<bool> = d.key.bits.iter().zip(bits(v, 4)).map(|(a, b)| a ^ b).collect();
        let bad = apply_key(&d, &wrong).unwrap();
        let exact = hamming_distance_in(&n, &bad, InputSpace::Exhaustive).unwrap();
        let sampled = hamming_distance_in(&n, &bad, InputSpace::Sampled { count: 10_000, seed: u64::from(v) }).unwrap();
        assert!((exact - sampled).abs() <= 2.0, "key flip {v:04b}: {exact} vs {sampled}");
    }
}

fn secure(d: &LockedDesign, seed: u64) -> (splitlock_core::FeolView, splitlock_core::BeolSecret) {
    let grid = Grid::for_cells(d.netlist.gate_count(), 0.7);
    let p = place(&d.netlist, grid, seed, LayoutMode::Secure).unwrap();
    let l = assign_layers(&p, &d.netlist, &DEFAULT_THRESHOLDS, 4, LayoutMode::Secure).unwrap();
    split(&d.netlist, &p, &l, 4).unwrap()
}

#[test]
fn one_tie1_one_trial_is_forced() {
    let n = c17();
    let d = (0..64)
        .map(|s| lock(&n, 1, 1, s).unwrap())
        .find(|d| d.key.bits == [true])
        .expect("some seed gives key bit 1");
    let (feol, beol) = secure(&d, 0);
    let trials = random_key_attack(&feol, &beol, 1, 0, 1).unwrap();
    let c = ccr(&beol, &trials[0], &d).unwrap();
    assert_eq!((c.key_physical, c.key_logical), (100.0, 100.0));
}

#[test]
fn lock_c17_k4_seed7() {
    let d = lock(&c17(), 4, 1, 7).unwrap();
    let ties = d
        .netlist
        .gates()
        .iter()
        .filter(|g| g.kind == GateKind::Tie0 || g.kind == GateKind::Tie1)
        .count();
    assert_eq!(ties, 4);
    assert!(check_equivalence(&c17(), &d.netlist, InputSpace::Exhaustive).unwrap().equivalent);
}
