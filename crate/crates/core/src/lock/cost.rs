//! Per-fault analysis: scope, failing patterns, cost, and selection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::netlist::{Driver, NetId, Netlist};
use crate::partition::Partition;
use crate::sim::{find_failing_patterns, for_each_block, Block, FailingPattern, Fault, InputSpace, Simulator};

use super::restore::{allocate_key_positions, restore_gate_count};
use super::simplify::inject_and_simplify;
use super::LockError;

/// Whole-circuit input count up to which witnesses are searched exhaustively.
pub const WITNESS_EXHAUSTIVE_LIMIT: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultCost {
    pub fault: Fault,
    /// Gates left in the module after injecting and simplifying.
    pub cost_fi: usize,
    /// Gates in the restore fragment.
    pub cost_rest: usize,
    /// `cost_fi + cost_rest`, or `usize::MAX` for an undetectable fault.
    pub total: usize,
}

impl FaultCost {
    pub fn is_undetectable(&self) -> bool {
        self.total == usize::MAX
    }
}

/// Everything learned about one candidate fault.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultAnalysis {
    pub cost: FaultCost,
    /// Module boundary nets the patterns range over.
    pub scope_inputs: Vec<NetId>,
    /// Module outputs the fault can reach, in error-mask order.
    pub scope_outputs: Vec<NetId>,
    pub patterns: Vec<FailingPattern>,
    /// A primary-input vector exposing the fault at the primary outputs
    /// while the module sees the pattern, when one was found.
    pub witnesses: Vec<Option<Vec<bool>>>,
    pub key_positions: Vec<Vec<usize>>,
}

impl FaultAnalysis {
    pub fn capacity(&self) -> usize {
        self.key_positions.iter().map(Vec::len).sum()
    }

    pub fn eligible(&self) -> Vec<bool> {
        self.witnesses.iter().map(Option::is_some).collect()
    }
}

/// Knobs for fault analysis and selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectionLimits {
    /// Widest pattern scope enumerated (at most 24).
    pub max_scope_inputs: usize,
    /// Faults with more failing patterns are skipped.
    pub max_patterns: usize,
    /// Random vectors searched for witnesses on wide circuits.
    pub witness_samples: usize,
}

impl Default for SelectionLimits {
    fn default() -> Self {
        SelectionLimits {
            max_scope_inputs: 16,
            max_patterns: 256,
            witness_samples: 65_536,
        }
    }
}

/// Good-machine values of the whole circuit over a fixed vector set, used
/// to look for witnesses.
pub struct WitnessSpace<'a> {
    sim: Simulator<'a>,
    blocks: Vec<Block>,
    good: Vec<Vec<u64>>,
}

impl<'a> WitnessSpace<'a> {
    pub fn new(netlist: &'a Netlist, samples: usize, seed: u64) -> WitnessSpace<'a> {
        let n = netlist.inputs().len();
        let space = if n <= WITNESS_EXHAUSTIVE_LIMIT {
            InputSpace::Exhaustive
        } else {
            InputSpace::Sampled {
                count: samples,
                seed,
            }
        };
        let sim = Simulator::new(netlist);
        let mut blocks = Vec::new();
        let mut good = Vec::new();
        for_each_block(n, space, |block| {
            let mut values = Vec::new();
            sim.run(&block.inputs, None, &mut values);
            blocks.push(block.clone());
            good.push(values);
            ControlFlow::Continue(())
        })
        .expect("witness space fits the exhaustive limit");
        WitnessSpace { sim, blocks, good }
    }

    /// For each pattern over `scope`, a vector on which the circuit sees
    /// that pattern at `scope` and the fault reaches a primary output.
    pub fn find(
        &self,
        fault: &Fault,
        scope: &[NetId],
        patterns: &[FailingPattern],
    ) -> Vec<Option<Vec<bool>>> {
        let mut found: Vec<Option<Vec<bool>>> = alloc::vec![None; patterns.len()];
        let (Some(site), Some(slots)) = (
            self.sim.slot(&fault.net),
            scope.iter().map(|n| self.sim.slot(n)).collect::<Option<Vec<_>>>(),
        ) else {
            return found;
        };
        let index: BTreeMap<&[bool], usize> = patterns
            .iter()
            .enumerate()
            .map(|(i, p)| (p.inputs.as_slice(), i))
            .collect();
        let force = (site, if fault.stuck_at { !0 } else { 0 });
        let mut missing = patterns.len();
        let mut bad = Vec::new();
        let mut local = Vec::with_capacity(scope.len());
        for (block, good) in self.blocks.iter().zip(&self.good) {
            self.sim.run(&block.inputs, Some(force), &mut bad);
            let mut detected = self
                .sim
                .output_words(good)
                .zip(self.sim.output_words(&bad))
                .fold(0, |acc, (g, b)| acc | (g ^ b))
                & block.lanes;
            while detected != 0 {
                let lane = detected.trailing_zeros();
                detected &= detected - 1;
                local.clear();
                local.extend(slots.iter().map(|&s| (good[s] >> lane) & 1 == 1));
                if let Some(&i) = index.get(local.as_slice()) {
                    if found[i].is_none() {
                        found[i] = Some(block.vector(lane));
                        missing -= 1;
                        if missing == 0 {
                            return found;
                        }
                    }
                }
            }
        }
        found
    }
}

/// Module outputs reachable from `net` inside `module`.
fn reachable_outputs(module: &Netlist, net: &str) -> Vec<NetId> {
    let fanout = module.fanout();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut stack = alloc::vec![net];
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            continue;
        }
        if let Some(users) = fanout.get(n) {
            for &(g, _) in users {
                stack.push(module.gates()[g].output.as_str());
            }
        }
    }
    module
        .outputs()
        .iter()
        .filter(|o| seen.contains(o.as_str()))
        .cloned()
        .collect()
}

/// Candidate faults of a partition: both stuck values at every gate output.
pub fn candidate_faults(partition: &Partition) -> Vec<Fault> {
    let mut faults: Vec<Fault> = partition
        .gates
        .iter()
        .flat_map(|g| [Fault::new(g.clone(), false), Fault::new(g.clone(), true)])
        .collect();
    faults.sort();
    faults
}

fn check_inside(module: &Netlist, fault: &Fault) -> Result<(), LockError> {
    match module.driver(&fault.net) {
        Some(Driver::Gate(_)) => Ok(()),
        _ => Err(LockError::FaultOutsidePartition(fault.net.clone())),
    }
}

/// Full analysis of one fault in one module.
///
/// `witnesses` restricts which patterns may carry key bits; without it
/// every pattern is eligible. Returns `Ok(None)` when the scope is wider
/// than the limit allows.
pub fn analyze_fault(
    module: &Netlist,
    fault: &Fault,
    key_bits: usize,
    limits: &SelectionLimits,
    witnesses: Option<&WitnessSpace<'_>>,
) -> Result<Option<FaultAnalysis>, LockError> {
    check_inside(module, fault)?;
    let scope_outputs = reachable_outputs(module, &fault.net);
    let scope = module.cone(&format!("{}_scope", module.name()), &scope_outputs);
    let scope_inputs = scope.inputs().to_vec();
    if scope_inputs.len() > limits.max_scope_inputs.min(crate::sim::EXHAUSTIVE_LIMIT) {
        return Ok(None);
    }
    let patterns = find_failing_patterns(&scope, fault, InputSpace::Exhaustive)?;
    let cost_fi = inject_and_simplify(module, fault)?.gate_count();
    if patterns.is_empty() {
        return Ok(Some(FaultAnalysis {
            cost: FaultCost {
                fault: fault.clone(),
                cost_fi,
                cost_rest: 0,
                total: usize::MAX,
            },
            scope_inputs,
            scope_outputs,
            patterns,
            witnesses: Vec::new(),
            key_positions: Vec::new(),
        }));
    }
    let found = match witnesses {
        Some(space) if patterns.len() <= limits.max_patterns => {
            space.find(fault, &scope_inputs, &patterns)
        }
        Some(_) => alloc::vec![None; patterns.len()],
        None => patterns.iter().map(|p| Some(p.inputs.clone())).collect(),
    };
    let eligible: Vec<bool> = found.iter().map(Option::is_some).collect();
    let key_positions = if patterns.len() <= limits.max_patterns {
        allocate_key_positions(&patterns, Some(&eligible), key_bits)
    } else {
        alloc::vec![Vec::new(); patterns.len()]
    };
    let cost_rest = restore_gate_count(&patterns, &key_positions);
    Ok(Some(FaultAnalysis {
        cost: FaultCost {
            fault: fault.clone(),
            cost_fi,
            cost_rest,
            total: cost_fi + cost_rest,
        },
        scope_inputs,
        scope_outputs,
        patterns,
        witnesses: found,
        key_positions,
    }))
}

/// Cost of locking `partition` with `fault` and `key_bits` key bits.
///
/// Every failing pattern is treated as keyable; [`select_fault`] further
/// restricts keys to patterns observable at the primary outputs.
pub fn evaluate_fault_cost(
    netlist: &Netlist,
    partition: &Partition,
    fault: &Fault,
    key_bits: usize,
) -> Result<FaultCost, LockError> {
    if !partition.contains(&fault.net) {
        return Err(LockError::FaultOutsidePartition(fault.net.clone()));
    }
    let module = partition.module_netlist(netlist);
    let limits = SelectionLimits {
        max_scope_inputs: crate::sim::EXHAUSTIVE_LIMIT,
        ..SelectionLimits::default()
    };
    let analysis = analyze_fault(&module, fault, key_bits, &limits, None)?
        .ok_or(LockError::ScopeTooWide(fault.net.clone()))?;
    Ok(analysis.cost)
}

/// Picks the cheapest fault of `partition` that can absorb `key_budget`
/// key bits.
///
/// Ties go to fewer failing patterns, then to the smaller net id, then to
/// stuck-at-0. A fault qualifies only if its scope fits the limits and its
/// keyed patterns each have a witness in `witnesses`, so any wrong key bit
/// shows up at the primary outputs.
pub fn select_fault_in(
    netlist: &Netlist,
    partition: &Partition,
    key_budget: usize,
    limits: &SelectionLimits,
    witnesses: &WitnessSpace<'_>,
) -> Result<FaultAnalysis, LockError> {
    let module = partition.module_netlist(netlist);
    let mut candidates = Vec::new();
    let mut detectable = false;
    for fault in candidate_faults(partition) {
        let Some(a) = analyze_fault(&module, &fault, key_budget, limits, None)? else {
            // too wide to enumerate, so not known to be undetectable
            detectable = true;
            continue;
        };
        if a.patterns.is_empty() {
            continue;
        }
        detectable = true;
        if a.patterns.len() > limits.max_patterns || a.capacity() < key_budget {
            continue;
        }
        candidates.push(a);
    }
    let mut best: Option<FaultAnalysis> = None;
    for candidate in candidates {
        let fault = &candidate.cost.fault;
        let Some(a) = analyze_fault(&module, fault, key_budget, limits, Some(witnesses))? else {
            continue;
        };
        if a.capacity() >= key_budget && best.as_ref().is_none_or(|b| rank(&a) < rank(b)) {
            best = Some(a);
        }
    }
    best.ok_or(if detectable {
        LockError::NoFeasibleFault {
            module: partition.index,
            budget: key_budget,
        }
    } else {
        LockError::NoDetectableFault {
            module: partition.index,
        }
    })
}

fn rank(a: &FaultAnalysis) -> (usize, usize, &str, bool) {
    (
        a.cost.total,
        a.patterns.len(),
        a.cost.fault.net.as_str(),
        a.cost.fault.stuck_at,
    )
}

/// [`select_fault_in`] with default limits and a fresh witness space.
pub fn select_fault(
    netlist: &Netlist,
    partition: &Partition,
    key_budget: usize,
) -> Result<(Fault, Vec<FailingPattern>), LockError> {
    let limits = SelectionLimits::default();
    let space = WitnessSpace::new(netlist, limits.witness_samples, 0);
    let a = select_fault_in(netlist, partition, key_budget, &limits, &space)?;
    Ok((a.cost.fault, a.patterns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::parse_bench;
    use crate::partition::partition_random_balanced;

    const C17: &str = include_str!("../../../../benchmarks/c17.bench");

    #[test]
    fn c17_16_sa0_cost_adds_up() {
        let n = parse_bench(C17).unwrap();
        let part = &partition_random_balanced(&n, 1, 0).unwrap()[0];
        let cost = evaluate_fault_cost(&n, part, &Fault::new("16", false), 4).unwrap();
        assert!(cost.cost_fi >= 1 && cost.cost_rest >= 1);
        assert_eq!(cost.total, cost.cost_fi + cost.cost_rest);
    }

    #[test]
    fn undetectable_fault_gets_sentinel() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = OR(a, c)\nc = AND(a, b)\n").unwrap();
        let part = &partition_random_balanced(&n, 1, 0).unwrap()[0];
        // a OR (a AND b) = a, so c stuck-at-0 never shows
        let cost = evaluate_fault_cost(&n, part, &Fault::new("c", false), 0).unwrap();
        assert!(cost.is_undetectable());
        assert_eq!(cost.total, usize::MAX);
    }

    #[test]
    fn fault_outside_partition() {
        let n = parse_bench(C17).unwrap();
        let parts = partition_random_balanced(&n, 2, 1).unwrap();
        let other = parts[1].gates[0].clone();
        assert_eq!(
            evaluate_fault_cost(&n, &parts[0], &Fault::new(other.clone(), true), 1),
            Err(LockError::FaultOutsidePartition(other))
        );
    }

    #[test]
    fn identical_patterns_give_identical_restore_cost() {
        // y = NOT(b1), b1 = BUFF(a): both faults flip y on every input
        let n = parse_bench("INPUT(a)\nINPUT(c)\nOUTPUT(y)\nb1 = AND(a, c)\nb2 = BUFF(b1)\ny = NOT(b2)\n")
            .unwrap();
        let part = &partition_random_balanced(&n, 1, 0).unwrap()[0];
        let x = evaluate_fault_cost(&n, part, &Fault::new("b1", true), 1).unwrap();
        let y = evaluate_fault_cost(&n, part, &Fault::new("b2", true), 1).unwrap();
        assert_eq!(x.cost_rest, y.cost_rest);
    }

    #[test]
    fn c17_selection_is_reproducible() {
        let n = parse_bench(C17).unwrap();
        let part = &partition_random_balanced(&n, 1, 0).unwrap()[0];
        let first = select_fault(&n, part, 4).unwrap();
        assert_eq!(first, select_fault(&n, part, 4).unwrap());
        // exhaustive oracle: no candidate with enough capacity is cheaper
        let module = part.module_netlist(&n);
        let limits = SelectionLimits::default();
        let space = WitnessSpace::new(&n, 0, 0);
        let chosen = analyze_fault(&module, &first.0, 4, &limits, Some(&space)).unwrap().unwrap();
        for fault in candidate_faults(part) {
            let a = analyze_fault(&module, &fault, 4, &limits, Some(&space)).unwrap().unwrap();
            if !a.patterns.is_empty() && a.capacity() >= 4 && a.patterns.len() <= limits.max_patterns {
                assert!(rank(&a) >= rank(&chosen));
            }
        }
    }

    #[test]
    fn single_detectable_fault_is_chosen() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n").unwrap();
        let part = &partition_random_balanced(&n, 1, 0).unwrap()[0];
        let (fault, patterns) = select_fault(&n, part, 1).unwrap();
        // s-a-1 fails on three vectors, s-a-0 only on 11
        assert_eq!(fault, Fault::new("y", false));
        assert_eq!(patterns.len(), 1);
    }
}
