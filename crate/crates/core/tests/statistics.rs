use splitlock_core::attack::{proximity_attack, random_key_trials, AttackConfig};
use splitlock_core::layout::{assign_layers, place, split, Grid, LayoutMode, DEFAULT_THRESHOLDS};
use splitlock_core::metrics::ccr;
use splitlock_core::{lock, parse_bench};

const C432: &str = include_str!("../../../benchmarks/c432.bench");
const C880: &str = include_str!("../../../benchmarks/c880.bench");

#[test]
fn keygate_postprocessing_lifts_logical_ccr_to_a_coin_flip() {
    let n = parse_bench(C432).unwrap();
    let (mut raw, mut post) = (0.0, 0.0);
    let seeds = 10;
    for seed in 0..seeds {
        let d = lock(&n, 32, 16, seed).unwrap();
        let grid = Grid::for_cells(d.netlist.gate_count(), 0.7);
        let p = place(&d.netlist, grid, seed, LayoutMode::Secure).unwrap();
        let l = assign_layers(&p, &d.netlist, &DEFAULT_THRESHOLDS, 4, LayoutMode::Secure).unwrap();
        let (feol, beol) = split(&d.netlist, &p, &l, 4).unwrap();
        let cfg = AttackConfig { seed, ..AttackConfig::default() };
        let plain = proximity_attack(&feol, &AttackConfig { keygate_postprocess: false, ..cfg }).unwrap();
        raw += ccr(&beol, &plain, &d).unwrap().key_logical;
        post += ccr(&beol, &proximity_attack(&feol, &cfg).unwrap(), &d).unwrap().key_logical;

        // regular-net breakage never grows with the split layer
        let broken: Vec<usize> = (1..8)
            .map(|s| {
                assign_layers(&p, &d.netlist, &DEFAULT_THRESHOLDS, s, LayoutMode::Naive)
                    .unwrap()
                    .broken_at(s)
                    .count()
            })
            .collect();
        assert!(broken.windows(2).all(|w| w[0] >= w[1]), "{broken:?}");
    }
    let (raw, post) = (raw / seeds as f64, post / seeds as f64);
    assert!(raw < 40.0, "logical CCR without postprocessing {raw}");
    assert!((35.0..=65.0).contains(&post), "logical CCR with postprocessing {post}");
}

#[test]
fn random_key_guessing_never_finds_a_balanced_16_bit_key() {
    let n = parse_bench(C880).unwrap();
    let d = (0..)
        .map(|s| lock(&n, 16, 8, s).unwrap())
        .find(|d| d.key.bits.iter().filter(|&&b| b).count() == 8)
        .unwrap();
    let grid = Grid::for_cells(d.netlist.gate_count(), 0.7);
    let p = place(&d.netlist, grid, 1, LayoutMode::Secure).unwrap();
    let l = assign_layers(&p, &d.netlist, &DEFAULT_THRESHOLDS, 4, LayoutMode::Secure).unwrap();
    let (feol, beol) = split(&d.netlist, &p, &l, 4).unwrap();
    let mut full = 0;
    let mut logical = 0.0;
    let trials = 10_000;
    for guess in random_key_trials(&feol, &beol, trials, 5, 1).unwrap() {
        let c = ccr(&beol, &guess, &d).unwrap();
        assert_eq!(c.regular, 100.0);
        logical += c.key_logical;
        if c.key_logical == 100.0 {
            full += 1;
        }
    }
    assert_eq!(full, 0);
    let mean = logical / trials as f64;
    assert!((45.0..=55.0).contains(&mean), "mean logical CCR {mean}");
}
