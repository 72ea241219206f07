//! Restore circuitry: one comparator per failing pattern, keyed through
//! TIE-driven XOR/XNOR leaves, OR-ed per output and XOR-ed onto the faulty
//! output.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netlist::{Gate, GateKind, NameAllocator, NetId, Role};
use crate::sim::FailingPattern;

use super::{KeyAssignment, LockError};

/// Where a restore fragment attaches.
#[derive(Clone, Copy, Debug)]
pub struct RestoreInterface<'a> {
    /// Comparator inputs, in pattern bit order.
    pub inputs: &'a [NetId],
    /// Corrected nets, in error-mask bit order.
    pub outputs: &'a [NetId],
    /// Net carrying the uncorrected value of each output.
    pub faulty: &'a [NetId],
    /// Name prefix for generated gates.
    pub prefix: &'a str,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestoreFragment {
    pub gates: Vec<Gate>,
    /// One entry per key index, in `key_indices` order.
    pub assignments: Vec<KeyAssignment>,
    /// Required value of each key bit, in `key_indices` order.
    pub key_bits: Vec<bool>,
    /// Keyed comparator positions of each pattern.
    pub key_positions: Vec<Vec<usize>>,
}

fn differs_within(p: &[bool], q: &[bool], positions: &[usize], extra: usize) -> bool {
    p.iter()
        .zip(q)
        .enumerate()
        .all(|(j, (a, b))| a == b || j == extra || positions.contains(&j))
}

/// Chooses which comparator positions carry key bits.
///
/// Positions are handed out round-robin over the eligible patterns. A
/// pattern `q` may key a set of positions only if flipping any subset of
/// them can never turn `q` into another failing pattern; otherwise a wrong
/// key could swap two comparators and still restore the function.
pub fn allocate_key_positions(
    patterns: &[FailingPattern],
    eligible: Option<&[bool]>,
    budget: usize,
) -> Vec<Vec<usize>> {
    let width = patterns.first().map_or(0, |p| p.inputs.len());
    let mut keyed: Vec<Vec<usize>> = alloc::vec![Vec::new(); patterns.len()];
    let mut next = alloc::vec![0usize; patterns.len()];
    let mut total = 0;
    let mut progress = true;
    while total < budget && progress {
        progress = false;
        for q in 0..patterns.len() {
            if total == budget {
                break;
            }
            if eligible.is_some_and(|e| !e[q]) {
                continue;
            }
            while next[q] < width {
                let j = next[q];
                next[q] += 1;
                let blocked = patterns.iter().enumerate().any(|(p, other)| {
                    p != q && differs_within(&other.inputs, &patterns[q].inputs, &keyed[q], j)
                });
                if !blocked {
                    keyed[q].push(j);
                    total += 1;
                    progress = true;
                    break;
                }
            }
        }
    }
    keyed
}

/// Builds the restore fragment for `patterns`.
///
/// Key index `key_indices[i]` is driven by the TIE cell named
/// `tie_names[i]`. Each keyed leaf is XNOR when its mask bit is 0 and XOR
/// when it is 1, so the required key bit is the pattern bit XOR the mask and
/// key values are uniform whatever the patterns are.
#[allow(clippy::too_many_arguments)]
pub fn build_restore(
    iface: RestoreInterface<'_>,
    patterns: &[FailingPattern],
    eligible: Option<&[bool]>,
    key_indices: &[usize],
    tie_names: &[NetId],
    mask_seed: u64,
    names: &mut NameAllocator,
) -> Result<RestoreFragment, LockError> {
    if patterns.is_empty() {
        return Err(LockError::NoPatterns);
    }
    let key_positions = allocate_key_positions(patterns, eligible, key_indices.len());
    let available: usize = key_positions.iter().map(Vec::len).sum();
    if available < key_indices.len() {
        return Err(LockError::KeyCapacity {
            requested: key_indices.len(),
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let mut gates = Vec::new();
    let mut slots: Vec<Option<(KeyAssignment, bool)>> = alloc::vec![None; key_indices.len()];
    let prefix = iface.prefix;

    // keyed positions in the order key indices are consumed
    let mut order: Vec<(usize, usize)> = Vec::new();
    let rounds = key_positions.iter().map(Vec::len).max().unwrap_or(0);
    for r in 0..rounds {
        for (p, keyed) in key_positions.iter().enumerate() {
            if let Some(&j) = keyed.get(r) {
                order.push((p, j));
            }
        }
    }

    let mut fires = Vec::with_capacity(patterns.len());
    for (p, pattern) in patterns.iter().enumerate() {
        let mut leaves = Vec::with_capacity(pattern.inputs.len());
        for (j, (&bit, net)) in pattern.inputs.iter().zip(iface.inputs).enumerate() {
            if let Some(i) = order.iter().position(|&e| e == (p, j)) {
                let mask: bool = rng.gen();
                let leaf = names.fresh(&format!("{prefix}p{p}_x{j}"));
                let tie = tie_names[i].clone();
                let key_bit = bit ^ mask;
                let kind = if mask { GateKind::Xor } else { GateKind::Xnor };
                gates.push(
                    Gate::new(tie.clone(), GateKind::constant(key_bit), Vec::new())
                        .with_role(Role::TieCell),
                );
                gates.push(
                    Gate::new(leaf.clone(), kind, alloc::vec![net.clone(), tie.clone()])
                        .with_role(Role::KeyGate),
                );
                slots[i] = Some((
                    KeyAssignment {
                        tie,
                        key_gate: leaf.clone(),
                        slot: 1,
                    },
                    key_bit,
                ));
                leaves.push(leaf);
            } else if bit {
                leaves.push(net.clone());
            } else {
                let leaf = names.fresh(&format!("{prefix}p{p}_n{j}"));
                gates.push(
                    Gate::new(leaf.clone(), GateKind::Not, alloc::vec![net.clone()])
                        .with_role(Role::RestoreLogic),
                );
                leaves.push(leaf);
            }
        }
        let fire = match leaves.len() {
            1 => leaves.pop().unwrap_or_default(),
            0 => {
                // a pattern over no inputs always matches
                let one = names.fresh(&format!("{prefix}p{p}"));
                gates.push(
                    Gate::new(one.clone(), GateKind::Tie1, Vec::new()).with_role(Role::RestoreLogic),
                );
                one
            }
            _ => {
                let fire = names.fresh(&format!("{prefix}p{p}"));
                gates.push(Gate::new(fire.clone(), GateKind::And, leaves).with_role(Role::RestoreLogic));
                fire
            }
        };
        fires.push(fire);
    }

    for (o, (out, faulty)) in iface.outputs.iter().zip(iface.faulty).enumerate() {
        let mut hits: Vec<NetId> = patterns
            .iter()
            .zip(&fires)
            .filter(|(pat, _)| pat.error_mask[o])
            .map(|(_, f)| f.clone())
            .collect();
        let corr = match hits.len() {
            0 => continue,
            1 => hits.pop().unwrap_or_default(),
            _ => {
                let corr = names.fresh(&format!("{prefix}c_{out}"));
                gates.push(Gate::new(corr.clone(), GateKind::Or, hits).with_role(Role::RestoreLogic));
                corr
            }
        };
        gates.push(
            Gate::new(out.clone(), GateKind::Xor, alloc::vec![faulty.clone(), corr])
                .with_role(Role::RestoreLogic),
        );
    }

    let (assignments, key_bits) = slots
        .into_iter()
        .map(|s| s.expect("every key index is placed"))
        .unzip();
    Ok(RestoreFragment {
        gates,
        assignments,
        key_bits,
        key_positions,
    })
}

/// Gate count `build_restore` produces, without building anything.
pub fn restore_gate_count(patterns: &[FailingPattern], key_positions: &[Vec<usize>]) -> usize {
    let mut count = 0;
    for (pattern, keyed) in patterns.iter().zip(key_positions) {
        let nots = pattern
            .inputs
            .iter()
            .enumerate()
            .filter(|&(j, &b)| !b && !keyed.contains(&j))
            .count();
        count += nots + 2 * keyed.len() + usize::from(pattern.inputs.len() != 1);
    }
    let outputs = patterns.first().map_or(0, |p| p.error_mask.len());
    for o in 0..outputs {
        let hits = patterns.iter().filter(|p| p.error_mask[o]).count();
        if hits > 0 {
            count += 1 + usize::from(hits >= 2);
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    fn pattern(bits: &str, mask: &str) -> FailingPattern {
        FailingPattern {
            inputs: bits.chars().map(|c| c == '1').collect(),
            error_mask: mask.chars().map(|c| c == '1').collect(),
        }
    }

    fn nets(prefix: &str, n: usize) -> Vec<NetId> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn build(patterns: &[FailingPattern], keys: usize, seed: u64) -> Result<RestoreFragment, LockError> {
        let width = patterns[0].inputs.len();
        let outs = patterns[0].error_mask.len();
        let inputs = nets("i", width);
        let outputs = nets("o", outs);
        let faulty = nets("f", outs);
        let ties = nets("t", keys);
        let indices: Vec<usize> = (0..keys).collect();
        let mut names = NameAllocator::new(inputs.iter().chain(&outputs).chain(&faulty).chain(&ties));
        build_restore(
            RestoreInterface {
                inputs: &inputs,
                outputs: &outputs,
                faulty: &faulty,
                prefix: "r_",
            },
            patterns,
            None,
            &indices,
            &ties,
            seed,
            &mut names,
        )
    }

    fn seed_with_mask(mask: &[bool]) -> u64 {
        (0..10_000u64)
            .find(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                mask.iter().all(|&m| rng.gen::<bool>() == m)
            })
            .unwrap()
    }

    #[test]
    fn unkeyed_pattern_is_a_plain_comparator() {
        let frag = build(&[pattern("101", "1")], 0, 0).unwrap();
        assert!(frag.assignments.is_empty());
        assert!(frag.gates.iter().all(|g| g.role == Role::RestoreLogic));
        // NOT on the 0 bit, AND, XOR onto the output
        assert_eq!(frag.gates.len(), 3);
        assert_eq!(frag.gates.len(), restore_gate_count(&[pattern("101", "1")], &[vec![]]));
    }

    #[test]
    fn zero_mask_keeps_pattern_bits() {
        let p = pattern("10110", "1");
        let seed = seed_with_mask(&[false; 4]);
        let frag = build(&[p.clone()], 4, seed).unwrap();
        assert_eq!(frag.key_bits, [true, false, true, true]);
        assert_eq!(frag.key_positions, [vec![0, 1, 2, 3]]);
        let ties = frag.gates.iter().filter(|g| g.role == Role::TieCell).count();
        assert_eq!(ties, 4);
        assert!(frag
            .gates
            .iter()
            .filter(|g| g.role == Role::KeyGate)
            .all(|g| g.kind == GateKind::Xnor));
    }

    #[test]
    fn mask_flips_key_bits() {
        let p = pattern("10110", "1");
        let mask = [true, false, true, false];
        let frag = build(&[p], 4, seed_with_mask(&mask)).unwrap();
        let expected: Vec<bool> = [true, false, true, true]
            .iter()
            .zip(mask)
            .map(|(b, m)| b ^ m)
            .collect();
        assert_eq!(frag.key_bits, expected);
        for (a, bit) in frag.assignments.iter().zip(&frag.key_bits) {
            let tie = frag.gates.iter().find(|g| g.output == a.tie).unwrap();
            assert_eq!(tie.kind, GateKind::constant(*bit));
            let gate = frag.gates.iter().find(|g| g.output == a.key_gate).unwrap();
            assert_eq!(gate.inputs[a.slot], a.tie);
        }
    }

    #[test]
    fn too_many_key_indices() {
        let err = build(&[pattern("10", "1")], 3, 0).unwrap_err();
        assert_eq!(
            err,
            LockError::KeyCapacity {
                requested: 3,
                available: 2
            }
        );
    }

    #[test]
    fn allocation_never_lets_patterns_swap() {
        // patterns differing in one bit cannot key that bit
        let pats = [pattern("000", "1"), pattern("001", "1")];
        let keyed = allocate_key_positions(&pats, None, usize::MAX);
        assert_eq!(keyed, [vec![0, 1], vec![0, 1]]);
        // 00 and 11: once a pattern keys one bit it cannot key the other
        let pats = [pattern("00", "1"), pattern("11", "1")];
        let keyed = allocate_key_positions(&pats, None, usize::MAX);
        assert_eq!(keyed, [vec![0], vec![0]]);
    }

    #[test]
    fn gate_count_matches_fragment() {
        let pats = [
            pattern("0110", "10"),
            pattern("1110", "11"),
            pattern("0001", "01"),
        ];
        for keys in 0..=6 {
            let frag = build(&pats, keys, 3).unwrap();
            assert_eq!(frag.gates.len(), restore_gate_count(&pats, &frag.key_positions));
            let names: Vec<&String> = frag.gates.iter().map(|g| &g.output).collect();
            let mut dedup = names.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), names.len());
        }
    }
}
