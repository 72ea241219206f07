//! Logic locking by stuck-at fault injection.
//!
//! Each module of a random balanced partition gets one stuck-at fault. The
//! faulty module is simplified (the removed logic is the protected part),
//! and restore circuitry re-creates the lost function only when the key is
//! correct: one comparator per failing pattern, some of whose leaves
//! compare a module input against a key bit carried by a single-fanout TIE
//! cell.

mod cost;
mod restore;
mod simplify;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::netlist::{Gate, GateKind, NameAllocator, NetId, Netlist, NetlistError, Role};
use crate::partition::{partition_random_balanced, Partition, PartitionError};
use crate::seed::{derive, stage};
use crate::sim::{FailingPattern, Fault, SimError};

pub use cost::{
    analyze_fault, candidate_faults, evaluate_fault_cost, select_fault, select_fault_in,
    FaultAnalysis, FaultCost, SelectionLimits, WitnessSpace, WITNESS_EXHAUSTIVE_LIMIT,
};
pub use restore::{
    allocate_key_positions, build_restore, restore_gate_count, RestoreFragment, RestoreInterface,
};
pub use simplify::inject_and_simplify;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LockError {
    #[error("fault site `{0}` is not a gate output")]
    FaultSite(NetId),
    #[error("fault site `{0}` is outside the partition")]
    FaultOutsidePartition(NetId),
    #[error("fault `{0}` has a pattern scope wider than the exhaustive limit")]
    ScopeTooWide(NetId),
    #[error("no failing patterns to restore")]
    NoPatterns,
    #[error("{requested} key bits requested but the patterns can carry only {available}")]
    KeyCapacity { requested: usize, available: usize },
    #[error("module {module} has no detectable fault")]
    NoDetectableFault { module: usize },
    #[error("no fault in module {module} can carry {budget} key bits")]
    NoFeasibleFault { module: usize, budget: usize },
    #[error("key size must be at least 1")]
    EmptyKey,
    #[error("expected {expected} key bits, got {got}")]
    KeyLength { expected: usize, got: usize },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// Where key bit `i` enters the design.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyAssignment {
    pub tie: NetId,
    pub key_gate: NetId,
    /// Input slot of the key-gate the TIE cell drives.
    pub slot: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Key {
    pub bits: Vec<bool>,
    /// Indexed by key bit.
    pub assignments: Vec<KeyAssignment>,
}

impl Key {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// What was done to one partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleRecord {
    pub module: usize,
    pub gates: Vec<NetId>,
    pub fault: Fault,
    pub cost: FaultCost,
    pub scope_inputs: Vec<NetId>,
    pub scope_outputs: Vec<NetId>,
    pub patterns: Vec<FailingPattern>,
    pub witnesses: Vec<Option<Vec<bool>>>,
    /// Global key indices carried by this module.
    pub key_indices: Vec<usize>,
    pub key_positions: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LockedDesign {
    pub netlist: Netlist,
    pub key: Key,
    pub original_inputs: Vec<NetId>,
    pub original_outputs: Vec<NetId>,
    pub modules: Vec<ModuleRecord>,
    pub seed: u64,
    /// Index of the partitioning that was used.
    pub partition_attempt: u64,
}

impl LockedDesign {
    pub fn k(&self) -> usize {
        self.key.len()
    }

    /// TIE cell id of every key bit.
    pub fn tie_of(&self) -> BTreeMap<&str, usize> {
        self.key
            .assignments
            .iter()
            .enumerate()
            .map(|(i, a)| (a.tie.as_str(), i))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LockConfig {
    pub k: usize,
    pub module_count: usize,
    pub seed: u64,
    pub limits: SelectionLimits,
}

impl LockConfig {
    pub fn new(k: usize, module_count: usize, seed: u64) -> LockConfig {
        LockConfig {
            k,
            module_count,
            seed,
            limits: SelectionLimits::default(),
        }
    }
}

/// Locks `netlist` with a `k`-bit key spread over `module_count` modules.
pub fn lock(netlist: &Netlist, k: usize, module_count: usize, seed: u64) -> Result<LockedDesign, LockError> {
    lock_with(netlist, &LockConfig::new(k, module_count, seed))
}

/// Key bits per module: an even share, the remainder to earlier modules.
pub fn distribute_key(k: usize, modules: usize) -> Vec<usize> {
    (0..modules)
        .map(|i| k / modules + usize::from(i < k % modules))
        .collect()
}

/// Partitionings tried before giving up on a key budget.
pub const PARTITION_ATTEMPTS: u64 = 32;

/// Locks with `config`.
///
/// When some module of a partitioning has no fault able to carry its share
/// of the key, a fresh partitioning is drawn from the next derived seed.
pub fn lock_with(netlist: &Netlist, config: &LockConfig) -> Result<LockedDesign, LockError> {
    if config.k == 0 {
        return Err(LockError::EmptyKey);
    }
    let witnesses = WitnessSpace::new(
        netlist,
        config.limits.witness_samples,
        derive(config.seed, stage::WITNESS, 0),
    );
    let mut last = None;
    for attempt in 0..PARTITION_ATTEMPTS {
        let partition_seed = derive(config.seed, stage::PARTITION, attempt);
        let partitions = partition_random_balanced(netlist, config.module_count, partition_seed)?;
        match lock_partitions(netlist, config, &partitions, &witnesses) {
            Ok(mut design) => {
                design.partition_attempt = attempt;
                return Ok(design);
            }
            Err(e @ (LockError::NoFeasibleFault { .. } | LockError::NoDetectableFault { .. })) => {
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(LockError::EmptyKey))
}

fn lock_partitions(
    netlist: &Netlist,
    config: &LockConfig,
    partitions: &[Partition],
    witnesses: &WitnessSpace<'_>,
) -> Result<LockedDesign, LockError> {
    let seed = config.seed;
    let budgets = distribute_key(config.k, partitions.len());
    let mut tie_ids: Vec<usize> = (0..config.k).collect();
    tie_ids.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(seed, stage::TIE_NAMES, 0)));
    let mut names = NameAllocator::new(netlist.nets());
    let tie_names: Vec<NetId> = tie_ids.iter().map(|i| names.fresh(&format!("kt{i}"))).collect();

    let mut gates: Vec<Gate> = Vec::new();
    let mut modules = Vec::new();
    let mut key_bits = alloc::vec![false; config.k];
    let mut assignments: Vec<Option<KeyAssignment>> = alloc::vec![None; config.k];
    let mut next_key = 0;

    for (partition, &budget) in partitions.iter().zip(&budgets) {
        let module = partition.module_netlist(netlist);
        if budget == 0 {
            gates.extend(module.gates().iter().cloned());
            continue;
        }
        let analysis = select_fault_in(netlist, partition, budget, &config.limits, witnesses)?;
        let simplified = inject_and_simplify(&module, &analysis.cost.fault)?;
        let m = partition.index;

        // corrected outputs read the restore XOR; the module keeps the raw value
        let corrected: Vec<NetId> = analysis
            .scope_outputs
            .iter()
            .enumerate()
            .filter(|(o, _)| analysis.patterns.iter().any(|p| p.error_mask[*o]))
            .map(|(_, net)| net.clone())
            .collect();
        let mut rename: BTreeMap<NetId, NetId> = BTreeMap::new();
        for net in &corrected {
            rename.insert(net.clone(), names.fresh(&format!("lk{m}_fi_{net}")));
        }
        let faulty: Vec<NetId> = analysis
            .scope_outputs
            .iter()
            .map(|o| rename.get(o).cloned().unwrap_or_else(|| o.clone()))
            .collect();
        for gate in simplified.gates() {
            let mut gate = gate.clone();
            if let Some(new) = rename.get(&gate.output) {
                gate.output = new.clone();
            }
            for input in gate.inputs.iter_mut() {
                if let Some(new) = rename.get(input) {
                    *input = new.clone();
                }
            }
            gates.push(gate);
        }

        let key_indices: Vec<usize> = (next_key..next_key + budget).collect();
        next_key += budget;
        let prefix = format!("lk{m}_");
        let eligible = analysis.eligible();
        let fragment = build_restore(
            RestoreInterface {
                inputs: &analysis.scope_inputs,
                outputs: &analysis.scope_outputs,
                faulty: &faulty,
                prefix: &prefix,
            },
            &analysis.patterns,
            Some(&eligible),
            &key_indices,
            &tie_names[key_indices[0]..key_indices[0] + budget],
            derive(seed, stage::MASK, m as u64),
            &mut names,
        )?;
        debug_assert_eq!(fragment.gates.len(), analysis.cost.cost_rest);
        debug_assert_eq!(fragment.key_positions, analysis.key_positions);
        for (slot, &i) in key_indices.iter().enumerate() {
            key_bits[i] = fragment.key_bits[slot];
            assignments[i] = Some(fragment.assignments[slot].clone());
        }
        gates.extend(fragment.gates);
        modules.push(ModuleRecord {
            module: m,
            gates: partition.gates.clone(),
            fault: analysis.cost.fault.clone(),
            cost: analysis.cost,
            scope_inputs: analysis.scope_inputs,
            scope_outputs: analysis.scope_outputs,
            patterns: analysis.patterns,
            witnesses: analysis.witnesses,
            key_indices,
            key_positions: analysis.key_positions,
        });
    }

    let locked = Netlist::new(
        netlist.name(),
        netlist.inputs().to_vec(),
        netlist.outputs().to_vec(),
        gates,
    )?;
    Ok(LockedDesign {
        netlist: locked,
        key: Key {
            bits: key_bits,
            assignments: assignments
                .into_iter()
                .map(|a| a.expect("every key bit is assigned"))
                .collect(),
        },
        original_inputs: netlist.inputs().to_vec(),
        original_outputs: netlist.outputs().to_vec(),
        modules,
        seed,
        partition_attempt: 0,
    })
}

/// The locked netlist with every TIE cell set to the given key bits.
pub fn apply_key(design: &LockedDesign, key_bits: &[bool]) -> Result<Netlist, LockError> {
    if key_bits.len() != design.key.len() {
        return Err(LockError::KeyLength {
            expected: design.key.len(),
            got: key_bits.len(),
        });
    }
    let ties: BTreeMap<&str, bool> = design
        .key
        .assignments
        .iter()
        .zip(key_bits)
        .map(|(a, &b)| (a.tie.as_str(), b))
        .collect();
    let (name, inputs, outputs, mut gates) = design.netlist.clone().into_parts();
    for gate in gates.iter_mut() {
        if let Some(&bit) = ties.get(gate.output.as_str()) {
            gate.kind = GateKind::constant(bit);
        }
    }
    Ok(Netlist::new(name, inputs, outputs, gates)?)
}

/// Key bits read back from the TIE cells of a locked netlist.
pub fn read_key(netlist: &Netlist, assignments: &[KeyAssignment]) -> Option<Vec<bool>> {
    assignments
        .iter()
        .map(|a| match netlist.gate(&a.tie)?.kind {
            GateKind::Tie1 => Some(true),
            GateKind::Tie0 => Some(false),
            _ => None,
        })
        .collect()
}

/// Checks the structural key invariants; returns the first violation.
pub fn check_key_structure(design: &LockedDesign) -> Result<(), String> {
    let fanout = design.netlist.fanout();
    if design.key.assignments.len() != design.key.bits.len() {
        return Err(String::from("key length and assignment count differ"));
    }
    for (i, (a, &bit)) in design.key.assignments.iter().zip(&design.key.bits).enumerate() {
        let tie = design
            .netlist
            .gate(&a.tie)
            .ok_or_else(|| format!("key bit {i}: missing TIE `{}`", a.tie))?;
        if tie.role != Role::TieCell || tie.kind != GateKind::constant(bit) {
            return Err(format!("key bit {i}: TIE `{}` does not hold the key value", a.tie));
        }
        let gate = design
            .netlist
            .gate(&a.key_gate)
            .ok_or_else(|| format!("key bit {i}: missing key-gate `{}`", a.key_gate))?;
        if gate.role != Role::KeyGate || gate.inputs.get(a.slot) != Some(&a.tie) {
            return Err(format!("key bit {i}: key-gate slot not driven by its TIE"));
        }
        let users = fanout.get(a.tie.as_str()).map_or(0, Vec::len);
        if users != 1 {
            return Err(format!("key bit {i}: TIE `{}` has fanout {users}", a.tie));
        }
    }
    let ties = design
        .netlist
        .gates()
        .iter()
        .filter(|g| g.role == Role::TieCell)
        .count();
    if ties != design.key.len() {
        return Err(format!("{ties} TIE cells for {} key bits", design.key.len()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::parse_bench;
    use crate::sim::{check_equivalence, simulate, InputSpace};

    const C17: &str = include_str!("../../../../benchmarks/c17.bench");

    #[test]
    fn c17_lock_k4() {
        let n = parse_bench(C17).unwrap();
        let d = lock(&n, 4, 1, 7).unwrap();
        assert_eq!(d.k(), 4);
        check_key_structure(&d).unwrap();
        let unlocked = apply_key(&d, &d.key.bits).unwrap();
        assert!(check_equivalence(&n, &unlocked, InputSpace::Exhaustive).unwrap().equivalent);
        assert_eq!(d, lock(&n, 4, 1, 7).unwrap());
    }

    #[test]
    fn c17_every_wrong_key_corrupts() {
        let n = parse_bench(C17).unwrap();
        let d = lock(&n, 4, 1, 7).unwrap();
        let record = &d.modules[0];
        for guess in 0..16u32 {
            let bits: Vec<bool> = (0..4).map(|j| (guess >> j) & 1 == 1).collect();
            if bits == d.key.bits {
                continue;
            }
            let wrong = apply_key(&d, &bits).unwrap();
            let verdict = check_equivalence(&n, &wrong, InputSpace::Exhaustive).unwrap();
            assert!(!verdict.equivalent);
            let cex = verdict.counterexample.unwrap();
            assert_ne!(simulate(&n, &cex).unwrap(), simulate(&wrong, &cex).unwrap());
        }
        // a single flipped bit is caught on the witness of its pattern
        for i in 0..4 {
            let mut bits = d.key.bits.clone();
            bits[i] = !bits[i];
            let wrong = apply_key(&d, &bits).unwrap();
            let witness_hits = record
                .witnesses
                .iter()
                .flatten()
                .any(|w| simulate(&n, w).unwrap() != simulate(&wrong, w).unwrap());
            assert!(witness_hits);
        }
    }

    #[test]
    fn apply_key_checks_length() {
        let n = parse_bench(C17).unwrap();
        let d = lock(&n, 4, 1, 7).unwrap();
        assert_eq!(
            apply_key(&d, &[true]),
            Err(LockError::KeyLength { expected: 4, got: 1 })
        );
        assert_eq!(lock(&n, 0, 1, 7), Err(LockError::EmptyKey));
    }

    #[test]
    fn key_distribution() {
        assert_eq!(distribute_key(10, 4), [3, 3, 2, 2]);
        assert_eq!(distribute_key(2, 3), [1, 1, 0]);
    }
}
