//! Good- and faulty-machine simulation, failing-pattern enumeration and
//! simulation-based equivalence checking.
//!
//! Everything runs 64 input vectors per machine word. Input vectors are read
//! as unsigned integers with the first primary input as the most significant
//! bit, which is also the order patterns are reported in.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::netlist::{NetId, Netlist};

/// Largest input count enumerated exhaustively (16M vectors).
pub const EXHAUSTIVE_LIMIT: usize = 24;

/// Default vector count for monte-carlo checks and metrics.
pub const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fault {
    pub net: NetId,
    pub stuck_at: bool,
}

impl Fault {
    pub fn new<S: Into<NetId>>(net: S, stuck_at: bool) -> Fault {
        Fault {
            net: net.into(),
            stuck_at,
        }
    }
}

/// An input vector on which the faulty machine disagrees with the good one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FailingPattern {
    pub inputs: Vec<bool>,
    /// One bit per primary output, set where the outputs differ.
    pub error_mask: Vec<bool>,
}

/// Which input vectors to visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSpace {
    Exhaustive,
    Sampled { count: usize, seed: u64 },
}

impl InputSpace {
    /// Exhaustive when `inputs` is small enough, otherwise `count` samples.
    pub fn auto(inputs: usize, count: usize, seed: u64) -> InputSpace {
        if inputs <= EXHAUSTIVE_LIMIT {
            InputSpace::Exhaustive
        } else {
            InputSpace::Sampled { count, seed }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceVerdict {
    pub equivalent: bool,
    /// Input vector (in the first netlist's input order) exposing a difference.
    pub counterexample: Option<Vec<bool>>,
    pub mode: InputSpace,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("expected {expected} input bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unknown net `{0}`")]
    UnknownNet(NetId),
    #[error("{inputs} inputs exceed the exhaustive limit of {limit}")]
    TooManyInputs { inputs: usize, limit: usize },
    #[error("primary input/output names differ between the two netlists")]
    InterfaceMismatch,
}

#[derive(Clone, Copy, Debug)]
struct Op {
    kind: crate::netlist::GateKind,
    start: u32,
    end: u32,
    out: u32,
}

/// A netlist compiled into a flat evaluation program.
///
/// Slots `0..n` hold the primary inputs; every gate output gets the next
/// slot in topological order.
#[derive(Clone, Debug)]
pub struct Simulator<'a> {
    netlist: &'a Netlist,
    ops: Vec<Op>,
    operands: Vec<u32>,
    slots: BTreeMap<&'a str, usize>,
    outputs: Vec<usize>,
}

impl<'a> Simulator<'a> {
    pub fn new(netlist: &'a Netlist) -> Simulator<'a> {
        let mut slots: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, net) in netlist.inputs().iter().enumerate() {
            slots.insert(net, i);
        }
        let mut next = netlist.inputs().len();
        for &gi in netlist.order() {
            slots.insert(netlist.gates()[gi].output.as_str(), next);
            next += 1;
        }
        let mut ops = Vec::with_capacity(netlist.gate_count());
        let mut operands = Vec::new();
        for &gi in netlist.order() {
            let gate = &netlist.gates()[gi];
            let start = operands.len() as u32;
            operands.extend(gate.inputs.iter().map(|n| slots[n.as_str()] as u32));
            ops.push(Op {
                kind: gate.kind,
                start,
                end: operands.len() as u32,
                out: slots[gate.output.as_str()] as u32,
            });
        }
        let outputs = netlist.outputs().iter().map(|o| slots[o.as_str()]).collect();
        Simulator {
            netlist,
            ops,
            operands,
            slots,
            outputs,
        }
    }

    pub fn netlist(&self) -> &'a Netlist {
        self.netlist
    }

    pub fn slot_count(&self) -> usize {
        self.netlist.inputs().len() + self.ops.len()
    }

    pub fn slot(&self, net: &str) -> Option<usize> {
        self.slots.get(net).copied()
    }

    /// Evaluates one block of 64 vectors. `force` pins a slot to a constant
    /// word right after its driver is evaluated.
    pub fn run(&self, inputs: &[u64], force: Option<(usize, u64)>, values: &mut Vec<u64>) {
        values.clear();
        values.resize(self.slot_count(), 0);
        values[..inputs.len()].copy_from_slice(inputs);
        if let Some((slot, word)) = force {
            if slot < inputs.len() {
                values[slot] = word;
            }
        }
        for op in &self.ops {
            let args = &self.operands[op.start as usize..op.end as usize];
            let mut word = op.kind.eval_words(args.iter().map(|&a| values[a as usize]));
            if let Some((slot, forced)) = force {
                if slot == op.out as usize {
                    word = forced;
                }
            }
            values[op.out as usize] = word;
        }
    }

    pub fn output_words<'v>(&'v self, values: &'v [u64]) -> impl Iterator<Item = u64> + 'v {
        self.outputs.iter().map(move |&s| values[s])
    }
}

/// A block of up to 64 input vectors.
#[derive(Clone, Debug)]
pub struct Block {
    /// One word per primary input.
    pub inputs: Vec<u64>,
    /// Lanes that hold real vectors.
    pub lanes: u64,
}

impl Block {
    pub fn vector(&self, lane: u32) -> Vec<bool> {
        self.inputs.iter().map(|w| (w >> lane) & 1 == 1).collect()
    }
}

/// Visits the input space block by block until `f` breaks.
pub fn for_each_block<F>(inputs: usize, space: InputSpace, mut f: F) -> Result<(), SimError>
where
    F: FnMut(&Block) -> ControlFlow<()>,
{
    match space {
        InputSpace::Exhaustive => {
            if inputs > EXHAUSTIVE_LIMIT {
                return Err(SimError::TooManyInputs {
                    inputs,
                    limit: EXHAUSTIVE_LIMIT,
                });
            }
            let total: u64 = 1 << inputs;
            let blocks = total.div_ceil(64);
            let lanes = if total >= 64 { !0 } else { (1u64 << total) - 1 };
            let mut block = Block {
                inputs: vec![0; inputs],
                lanes,
            };
            for b in 0..blocks {
                for (j, word) in block.inputs.iter_mut().enumerate() {
                    let bit = inputs - 1 - j;
                    *word = if bit < 6 {
                        LANE_PATTERNS[bit]
                    } else if (b >> (bit - 6)) & 1 == 1 {
                        !0
                    } else {
                        0
                    };
                }
                if f(&block).is_break() {
                    break;
                }
            }
        }
        InputSpace::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut block = Block {
                inputs: vec![0; inputs],
                lanes: !0,
            };
            let mut remaining = count;
            while remaining > 0 {
                let take = remaining.min(64);
                remaining -= take;
                block.lanes = if take == 64 { !0 } else { (1u64 << take) - 1 };
                for word in block.inputs.iter_mut() {
                    *word = rng.gen();
                }
                if f(&block).is_break() {
                    break;
                }
            }
        }
    }
    Ok(())
}

/// Lane `l` of `LANE_PATTERNS[b]` is bit `b` of `l`.
const LANE_PATTERNS: [u64; 6] = [
    0xAAAA_AAAA_AAAA_AAAA,
    0xCCCC_CCCC_CCCC_CCCC,
    0xF0F0_F0F0_F0F0_F0F0,
    0xFF00_FF00_FF00_FF00,
    0xFFFF_0000_FFFF_0000,
    0xFFFF_FFFF_0000_0000,
];

fn pack(bits: &[bool]) -> Vec<u64> {
    bits.iter().map(|&b| if b { 1 } else { 0 }).collect()
}

fn check_len(netlist: &Netlist, inputs: &[bool]) -> Result<(), SimError> {
    if inputs.len() != netlist.inputs().len() {
        return Err(SimError::LengthMismatch {
            expected: netlist.inputs().len(),
            got: inputs.len(),
        });
    }
    Ok(())
}

pub fn simulate(netlist: &Netlist, inputs: &[bool]) -> Result<Vec<bool>, SimError> {
    check_len(netlist, inputs)?;
    let sim = Simulator::new(netlist);
    let mut values = Vec::new();
    sim.run(&pack(inputs), None, &mut values);
    Ok(sim.output_words(&values).map(|w| w & 1 == 1).collect())
}

fn fault_slot(sim: &Simulator<'_>, fault: &Fault) -> Result<(usize, u64), SimError> {
    let slot = sim
        .slot(&fault.net)
        .ok_or_else(|| SimError::UnknownNet(fault.net.clone()))?;
    Ok((slot, if fault.stuck_at { !0 } else { 0 }))
}

pub fn simulate_faulty(
    netlist: &Netlist,
    fault: &Fault,
    inputs: &[bool],
) -> Result<Vec<bool>, SimError> {
    check_len(netlist, inputs)?;
    let sim = Simulator::new(netlist);
    let force = fault_slot(&sim, fault)?;
    let mut values = Vec::new();
    sim.run(&pack(inputs), Some(force), &mut values);
    Ok(sim.output_words(&values).map(|w| w & 1 == 1).collect())
}

/// Every input vector (within `space`) on which `fault` changes an output.
///
/// Results are deduplicated and sorted by input vector.
pub fn find_failing_patterns(
    netlist: &Netlist,
    fault: &Fault,
    space: InputSpace,
) -> Result<Vec<FailingPattern>, SimError> {
    let sim = Simulator::new(netlist);
    let force = fault_slot(&sim, fault)?;
    let mut found: BTreeMap<Vec<bool>, Vec<bool>> = BTreeMap::new();
    let mut good = Vec::new();
    let mut bad = Vec::new();
    let mut diffs = Vec::new();
    for_each_block(netlist.inputs().len(), space, |block| {
        sim.run(&block.inputs, None, &mut good);
        sim.run(&block.inputs, Some(force), &mut bad);
        diffs.clear();
        diffs.extend(
            sim.output_words(&good)
                .zip(sim.output_words(&bad))
                .map(|(g, b)| g ^ b),
        );
        let mut any = diffs.iter().fold(0, |a, d| a | d) & block.lanes;
        while any != 0 {
            let lane = any.trailing_zeros();
            any &= any - 1;
            let mask = diffs.iter().map(|d| (d >> lane) & 1 == 1).collect();
            found.insert(block.vector(lane), mask);
        }
        ControlFlow::Continue(())
    })?;
    Ok(found
        .into_iter()
        .map(|(inputs, error_mask)| FailingPattern { inputs, error_mask })
        .collect())
}

/// Pairs two netlists with the same interface for lock-step simulation.
///
/// Inputs and outputs are matched by name; vectors use `a`'s input order.
pub struct Miter<'a> {
    a: Simulator<'a>,
    b: Simulator<'a>,
    b_inputs: Vec<usize>,
    b_outputs: Vec<usize>,
}

impl<'a> Miter<'a> {
    pub fn new(a: &'a Netlist, b: &'a Netlist) -> Result<Miter<'a>, SimError> {
        let perm = |xa: &[NetId], xb: &[NetId]| -> Result<Vec<usize>, SimError> {
            if xa.len() != xb.len() {
                return Err(SimError::InterfaceMismatch);
            }
            let index: BTreeMap<&str, usize> =
                xa.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
            if index.len() != xa.len() {
                return Err(SimError::InterfaceMismatch);
            }
            xb.iter()
                .map(|n| index.get(n.as_str()).copied().ok_or(SimError::InterfaceMismatch))
                .collect()
        };
        let b_inputs = perm(a.inputs(), b.inputs())?;
        let b_outputs = perm(a.outputs(), b.outputs())?;
        Ok(Miter {
            a: Simulator::new(a),
            b: Simulator::new(b),
            b_inputs,
            b_outputs,
        })
    }

    pub fn input_count(&self) -> usize {
        self.b_inputs.len()
    }

    pub fn output_count(&self) -> usize {
        self.b_outputs.len()
    }

    /// Visits blocks, handing `f` one difference word per output of `a`.
    pub fn compare<F>(&self, space: InputSpace, mut f: F) -> Result<(), SimError>
    where
        F: FnMut(&Block, &[u64]) -> ControlFlow<()>,
    {
        let mut va = Vec::new();
        let mut vb = Vec::new();
        let mut b_in = vec![0u64; self.b_inputs.len()];
        let mut diffs = vec![0u64; self.b_outputs.len()];
        for_each_block(self.b_inputs.len(), space, |block| {
            for (slot, &ai) in self.b_inputs.iter().enumerate() {
                b_in[slot] = block.inputs[ai];
            }
            self.a.run(&block.inputs, None, &mut va);
            self.b.run(&b_in, None, &mut vb);
            for d in diffs.iter_mut() {
                *d = 0;
            }
            for (word, &ai) in self.b.output_words(&vb).zip(&self.b_outputs) {
                diffs[ai] = word;
            }
            for (d, word) in diffs.iter_mut().zip(self.a.output_words(&va)) {
                *d = (*d ^ word) & block.lanes;
            }
            f(block, &diffs)
        })
    }
}

/// Simulation-based equivalence check.
///
/// Exhaustive mode is sound and complete; sampled mode proves
/// non-equivalence (with a replayable counterexample) and only suggests
/// equivalence.
pub fn check_equivalence(
    a: &Netlist,
    b: &Netlist,
    mode: InputSpace,
) -> Result<EquivalenceVerdict, SimError> {
    let miter = Miter::new(a, b)?;
    let mut counterexample = None;
    miter.compare(mode, |block, diffs| {
        let any = diffs.iter().fold(0, |acc, d| acc | d);
        if any != 0 {
            counterexample = Some(block.vector(any.trailing_zeros()));
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok(EquivalenceVerdict {
        equivalent: counterexample.is_none(),
        counterexample,
        mode,
    })
}

/// Value of every net of `netlist` for one input vector.
pub fn net_values(netlist: &Netlist, inputs: &[bool]) -> Result<BTreeMap<NetId, bool>, SimError> {
    check_len(netlist, inputs)?;
    let sim = Simulator::new(netlist);
    let mut values = Vec::new();
    sim.run(&pack(inputs), None, &mut values);
    let mut out = BTreeMap::new();
    for (i, net) in netlist.inputs().iter().enumerate() {
        out.insert(net.clone(), values[i] & 1 == 1);
    }
    for gate in netlist.gates() {
        let slot = sim.slot(&gate.output).expect("gate output has a slot");
        out.insert(gate.output.clone(), values[slot] & 1 == 1);
    }
    Ok(out)
}
