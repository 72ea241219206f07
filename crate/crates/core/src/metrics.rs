//! Scoring attack results: correct connection rate, output Hamming
//! distance, output error rate and netlist recovery.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use thiserror::Error;

use crate::attack::InferredSecret;
use crate::layout::{recombine_lenient, BeolSecret, FeolView, LayoutError, SinkPin};
use crate::lock::LockedDesign;
use crate::netlist::{GateKind, NetId, Netlist, Role};
use crate::sim::{InputSpace, Miter, SimError};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("inferred sink `{0}` is not a broken connection")]
    UnknownSink(SinkPin),
    #[error("at least one sample is required")]
    NoSamples,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// Correct connection rates in percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ccr {
    /// Over broken regular connections.
    pub regular: f64,
    /// Key inputs wired to their own TIE cell, over all key bits.
    pub key_physical: f64,
    /// Key inputs wired to any TIE cell of the right value, over all key bits.
    pub key_logical: f64,
}

fn percent(hits: usize, total: usize) -> f64 {
    if total == 0 {
        100.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

/// Scores `inferred` against the true BEOL connections.
///
/// Key inputs left intact by the split count as correct; broken sinks the
/// attack did not resolve count as wrong. An empty denominator gives 100.
pub fn ccr(secret: &BeolSecret, inferred: &InferredSecret, design: &LockedDesign) -> Result<Ccr, MetricsError> {
    let truth: BTreeMap<&SinkPin, &NetId> = secret.edges.iter().map(|(d, s)| (s, d)).collect();
    for (_, s) in &inferred.edges {
        if !truth.contains_key(s) {
            return Err(MetricsError::UnknownSink(s.clone()));
        }
    }
    let key_pins: Vec<SinkPin> = design
        .key
        .assignments
        .iter()
        .map(|a| SinkPin::new(a.key_gate.clone(), a.slot))
        .collect();
    let keyed: BTreeSet<&SinkPin> = key_pins.iter().collect();

    let mut regular = (0, 0);
    for (s, d) in &truth {
        if keyed.contains(s) {
            continue;
        }
        regular.1 += 1;
        if inferred.driver_of(s) == Some(*d) {
            regular.0 += 1;
        }
    }

    let (mut physical, mut logical) = (0, 0);
    for ((a, &bit), pin) in design.key.assignments.iter().zip(&design.key.bits).zip(&key_pins) {
        if !truth.contains_key(pin) {
            physical += 1;
            logical += 1;
            continue;
        }
        let Some(driver) = inferred.driver_of(pin) else { continue };
        if *driver == a.tie {
            physical += 1;
        }
        let right_value = design
            .netlist
            .gate(driver)
            .is_some_and(|g| g.role == Role::TieCell && g.kind == GateKind::constant(bit));
        if right_value {
            logical += 1;
        }
    }
    let k = design.k();
    Ok(Ccr {
        regular: percent(regular.0, regular.1),
        key_physical: percent(physical, k),
        key_logical: percent(logical, k),
    })
}

fn space(inputs: usize, samples: usize, seed: u64) -> Result<InputSpace, MetricsError> {
    if samples == 0 {
        return Err(MetricsError::NoSamples);
    }
    Ok(InputSpace::auto(inputs, samples, seed))
}

/// Mean percentage of output bits that differ, exhaustive up to 24 inputs.
pub fn hamming_distance(original: &Netlist, recovered: &Netlist, samples: usize, seed: u64) -> Result<f64, MetricsError> {
    let space = space(original.inputs().len(), samples, seed)?;
    hamming_distance_in(original, recovered, space)
}

/// [`hamming_distance`] over an explicit input space.
pub fn hamming_distance_in(original: &Netlist, recovered: &Netlist, space: InputSpace) -> Result<f64, MetricsError> {
    let miter = Miter::new(original, recovered)?;
    let (mut differing, mut vectors) = (0u64, 0u64);
    miter.compare(space, |block, diffs| {
        vectors += u64::from(block.lanes.count_ones());
        differing += diffs.iter().map(|d| u64::from(d.count_ones())).sum::<u64>();
        ControlFlow::Continue(())
    })?;
    let m = miter.output_count() as u64;
    if m == 0 || vectors == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * differing as f64 / (vectors * m) as f64)
}

/// Whether any examined input gives a wrong output.
pub fn oer(original: &Netlist, recovered: &Netlist, samples: usize, seed: u64) -> Result<bool, MetricsError> {
    let space = space(original.inputs().len(), samples, seed)?;
    oer_in(original, recovered, space)
}

/// [`oer`] over an explicit input space.
pub fn oer_in(original: &Netlist, recovered: &Netlist, space: InputSpace) -> Result<bool, MetricsError> {
    let miter = Miter::new(original, recovered)?;
    let mut wrong = false;
    miter.compare(space, |_, diffs| {
        wrong = diffs.iter().any(|&d| d != 0);
        if wrong {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok(wrong)
}

/// Percentage of the connections of `original`, broken or not, that
/// `recovered` reproduces.
pub fn pnr(original: &Netlist, recovered: &Netlist) -> f64 {
    let (mut hits, mut total) = (0, 0);
    for gate in original.gates() {
        let other = recovered.gate(&gate.output);
        for (slot, net) in gate.inputs.iter().enumerate() {
            total += 1;
            if other.and_then(|g| g.inputs.get(slot)) == Some(net) {
                hits += 1;
            }
        }
    }
    percent(hits, total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub ccr_regular: f64,
    pub ccr_key_physical: f64,
    pub ccr_key_logical: f64,
    pub hd: f64,
    /// 100 when the recovered netlist is wrong anywhere, else 0.
    pub oer: f64,
    pub pnr: f64,
    pub sample_count: usize,
    pub seeds: Vec<u64>,
    pub split_layer: usize,
}

/// Every metric for one attack result. Unresolved sinks are tied to
/// constant 0 before simulation.
pub fn evaluate(
    design: &LockedDesign,
    feol: &FeolView,
    secret: &BeolSecret,
    inferred: &InferredSecret,
    samples: usize,
    seed: u64,
) -> Result<MetricsReport, MetricsError> {
    let rates = ccr(secret, inferred, design)?;
    let recovered = recombine_lenient(feol, &inferred.edges)?;
    let hd = hamming_distance(&design.netlist, &recovered, samples, seed)?;
    let wrong = oer(&design.netlist, &recovered, samples, seed)?;
    Ok(MetricsReport {
        ccr_regular: rates.regular,
        ccr_key_physical: rates.key_physical,
        ccr_key_logical: rates.key_logical,
        hd,
        oer: if wrong { 100.0 } else { 0.0 },
        pnr: pnr(&design.netlist, &recovered),
        sample_count: samples,
        seeds: vec![seed],
        split_layer: feol.split_layer,
    })
}

/// Field-wise mean of several reports; seeds are concatenated.
pub fn mean_report(reports: &[MetricsReport]) -> Option<MetricsReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(MetricsReport {
        ccr_regular: avg(|r| r.ccr_regular),
        ccr_key_physical: avg(|r| r.ccr_key_physical),
        ccr_key_logical: avg(|r| r.ccr_key_logical),
        hd: avg(|r| r.hd),
        oer: avg(|r| r.oer),
        pnr: avg(|r| r.pnr),
        sample_count: first.sample_count,
        seeds: reports.iter().flat_map(|r| r.seeds.iter().copied()).collect(),
        split_layer: first.split_layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{proximity_attack, AttackConfig};
    use crate::bench::parse_bench;
    use crate::layout::{assign_layers, place, split, Grid, LayoutMode, DEFAULT_THRESHOLDS};
    use crate::lock::lock;
    use crate::netlist::Gate;
    use alloc::string::String;

    const C17: &str = include_str!("../../../benchmarks/c17.bench");

    fn invert_output(n: &Netlist, out: &str) -> Netlist {
        let (name, inputs, outputs, mut gates) = n.clone().into_parts();
        let inner = String::from(out) + "_inner";
        for g in gates.iter_mut() {
            if g.output == out {
                g.output = inner.clone();
            }
            for i in g.inputs.iter_mut() {
                if i == out {
                    *i = inner.clone();
                }
            }
        }
        gates.push(Gate::new(out, GateKind::Not, vec![inner]));
        Netlist::new(name, inputs, outputs, gates).unwrap()
    }

    #[test]
    fn hd_and_oer_on_c17() {
        let n = parse_bench(C17).unwrap();
        assert_eq!(hamming_distance(&n, &n, 1, 0).unwrap(), 0.0);
        assert!(!oer(&n, &n, 1, 0).unwrap());
        let one = invert_output(&n, "23");
        assert_eq!(hamming_distance(&n, &one, 1, 0).unwrap(), 50.0);
        assert!(oer(&n, &one, 1, 0).unwrap());
        let both = invert_output(&one, "22");
        assert_eq!(hamming_distance(&n, &both, 1, 0).unwrap(), 100.0);
        assert_eq!(hamming_distance(&n, &n, 0, 0), Err(MetricsError::NoSamples));
    }

    fn secure_c17() -> (LockedDesign, FeolView, BeolSecret) {
        let n = parse_bench(C17).unwrap();
        let d = lock(&n, 4, 1, 2).unwrap();
        let grid = Grid::for_cells(d.netlist.gate_count(), 0.7);
        let p = place(&d.netlist, grid, 2, LayoutMode::Secure).unwrap();
        let l = assign_layers(&p, &d.netlist, &DEFAULT_THRESHOLDS, 1, LayoutMode::Secure).unwrap();
        let (f, b) = split(&d.netlist, &p, &l, 1).unwrap();
        (d, f, b)
    }

    #[test]
    fn perfect_recovery_scores_full_marks() {
        let (d, f, b) = secure_c17();
        let perfect = InferredSecret {
            edges: b.edges.clone(),
            ..InferredSecret::default()
        };
        let r = evaluate(&d, &f, &b, &perfect, 1000, 0).unwrap();
        assert_eq!((r.ccr_regular, r.ccr_key_physical, r.ccr_key_logical), (100.0, 100.0, 100.0));
        assert_eq!((r.hd, r.oer, r.pnr), (0.0, 0.0, 100.0));
    }

    #[test]
    fn swapping_equal_ties_costs_physical_only() {
        let (d, _, b) = secure_c17();
        let bits = &d.key.bits;
        let pair = (0..bits.len())
            .flat_map(|i| (i + 1..bits.len()).map(move |j| (i, j)))
            .find(|&(i, j)| bits[i] == bits[j]);
        let Some((i, j)) = pair else { return };
        let mut edges = b.edges.clone();
        let (ai, aj) = (&d.key.assignments[i], &d.key.assignments[j]);
        for (drv, s) in edges.iter_mut() {
            if s.gate == ai.key_gate && s.slot == ai.slot {
                *drv = aj.tie.clone();
            } else if s.gate == aj.key_gate && s.slot == aj.slot {
                *drv = ai.tie.clone();
            }
        }
        let swapped = InferredSecret { edges, ..InferredSecret::default() };
        let c = ccr(&b, &swapped, &d).unwrap();
        let k = d.k() as f64;
        assert!((c.key_physical - (100.0 - 200.0 / k)).abs() < 1e-9);
        assert_eq!(c.key_logical, 100.0);
    }

    #[test]
    fn unresolved_sinks_count_as_wrong() {
        let (d, f, b) = secure_c17();
        let empty = InferredSecret {
            unresolved: b.edges.iter().map(|(_, s)| s.clone()).collect(),
            ..InferredSecret::default()
        };
        let c = ccr(&b, &empty, &d).unwrap();
        assert_eq!((c.key_physical, c.key_logical), (0.0, 0.0));
        let r = evaluate(&d, &f, &b, &empty, 1000, 0).unwrap();
        assert!(r.pnr < 100.0);
    }

    #[test]
    fn physical_never_exceeds_logical() {
        for seed in 0..6 {
            let n = parse_bench(C17).unwrap();
            let d = lock(&n, 4, 1, seed).unwrap();
            let grid = Grid::for_cells(d.netlist.gate_count(), 0.7);
            let p = place(&d.netlist, grid, seed, LayoutMode::Secure).unwrap();
            let l = assign_layers(&p, &d.netlist, &DEFAULT_THRESHOLDS, 1, LayoutMode::Secure).unwrap();
            let (f, b) = split(&d.netlist, &p, &l, 1).unwrap();
            let inf = proximity_attack(&f, &AttackConfig { seed, ..AttackConfig::default() }).unwrap();
            let c = ccr(&b, &inf, &d).unwrap();
            assert!(c.key_physical <= c.key_logical);
        }
    }

    #[test]
    fn unknown_sink_is_rejected() {
        let (d, _, b) = secure_c17();
        let bogus = InferredSecret {
            edges: vec![(String::from("x"), SinkPin::new("nowhere", 0))],
            ..InferredSecret::default()
        };
        assert!(matches!(ccr(&b, &bogus, &d), Err(MetricsError::UnknownSink(_))));
    }
}
