//! Fault injection followed by constant propagation, buffer/inverter
//! collapsing and dead-gate elimination.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::netlist::{Gate, GateKind, NetId, Netlist, Role};
use crate::sim::Fault;

use super::LockError;

/// Ties the fault net to its stuck value and simplifies to a fixpoint.
///
/// Only regular gates are restructured. Primary outputs keep their names
/// (a PO that reduces to a wire becomes a `BUFF`), so the result has the
/// same interface and implements the faulty function.
pub fn inject_and_simplify(netlist: &Netlist, fault: &Fault) -> Result<Netlist, LockError> {
    let site = netlist
        .gate_index(&fault.net)
        .ok_or_else(|| LockError::FaultSite(fault.net.clone()))?;
    let (name, inputs, outputs, mut gates) = netlist.clone().into_parts();
    gates[site] = Gate::new(fault.net.clone(), GateKind::constant(fault.stuck_at), Vec::new())
        .with_role(gates[site].role);
    let outputs_set: BTreeSet<NetId> = outputs.iter().cloned().collect();
    loop {
        let order = Netlist::new(name.clone(), inputs.clone(), outputs.clone(), gates.clone())
            .expect("simplification keeps the netlist valid")
            .order()
            .to_vec();
        let (next, changed) = simplify_pass(&gates, &order, &outputs_set);
        gates = next;
        if !changed {
            break;
        }
    }
    Ok(Netlist::new(name, inputs, outputs, gates).expect("simplification keeps the netlist valid"))
}

enum Rewrite {
    Keep,
    Replace(GateKind, Vec<NetId>),
}

fn simplify_pass(
    gates: &[Gate],
    order: &[usize],
    outputs: &BTreeSet<NetId>,
) -> (Vec<Gate>, bool) {
    let mut constants: BTreeMap<NetId, bool> = BTreeMap::new();
    let mut alias: BTreeMap<NetId, NetId> = BTreeMap::new();
    let mut kinds: BTreeMap<NetId, (GateKind, Vec<NetId>)> = BTreeMap::new();
    let mut rewritten: Vec<Option<Gate>> = alloc::vec![None; gates.len()];
    let mut changed = false;

    for &gi in order {
        let mut gate = gates[gi].clone();
        for net in gate.inputs.iter_mut() {
            if let Some(target) = alias.get(net) {
                *net = target.clone();
                changed = true;
            }
        }
        if gate.role == Role::Regular {
            match rewrite(&gate, &constants, &kinds) {
                Rewrite::Keep => {}
                Rewrite::Replace(kind, inputs) => {
                    gate.kind = kind;
                    gate.inputs = inputs;
                    changed = true;
                }
            }
            if gate.kind == GateKind::Buff && !outputs.contains(&gate.output) {
                alias.insert(gate.output.clone(), gate.inputs[0].clone());
                changed = true;
                continue;
            }
        }
        if let Some(value) = match gate.kind {
            GateKind::Tie0 => Some(false),
            GateKind::Tie1 => Some(true),
            _ => None,
        } {
            // key bits are not constants to the rest of the circuit
            if gate.role == Role::Regular {
                constants.insert(gate.output.clone(), value);
            }
        }
        kinds.insert(gate.output.clone(), (gate.kind, gate.inputs.clone()));
        rewritten[gi] = Some(gate);
    }

    // dead-gate elimination, sinks first
    let mut used: BTreeSet<NetId> = outputs.clone();
    let mut keep = alloc::vec![false; gates.len()];
    for &gi in order.iter().rev() {
        if let Some(gate) = &rewritten[gi] {
            if gate.role != Role::Regular || used.contains(&gate.output) {
                keep[gi] = true;
                used.extend(gate.inputs.iter().cloned());
            } else {
                changed = true;
            }
        }
    }
    let next = rewritten
        .into_iter()
        .zip(keep)
        .filter_map(|(g, k)| if k { g } else { None })
        .collect();
    (next, changed)
}

fn rewrite(
    gate: &Gate,
    constants: &BTreeMap<NetId, bool>,
    kinds: &BTreeMap<NetId, (GateKind, Vec<NetId>)>,
) -> Rewrite {
    use GateKind::*;
    let tie = |v: bool| Rewrite::Replace(GateKind::constant(v), Vec::new());
    let value = |net: &NetId| constants.get(net).copied();
    match gate.kind {
        Tie0 | Tie1 => Rewrite::Keep,
        Buff => match value(&gate.inputs[0]) {
            Some(v) => tie(v),
            None => Rewrite::Keep,
        },
        Not => {
            let input = &gate.inputs[0];
            if let Some(v) = value(input) {
                return tie(!v);
            }
            match kinds.get(input) {
                Some((Not, inner)) => Rewrite::Replace(Buff, inner.clone()),
                _ => Rewrite::Keep,
            }
        }
        And | Nand | Or | Nor => {
            let (controlling, inverted) = match gate.kind {
                And => (false, false),
                Nand => (false, true),
                Or => (true, false),
                _ => (true, true),
            };
            if gate.inputs.iter().any(|n| value(n) == Some(controlling)) {
                return tie(controlling ^ inverted);
            }
            let rest: Vec<NetId> = gate
                .inputs
                .iter()
                .filter(|n| value(n).is_none())
                .cloned()
                .collect();
            if rest.len() == gate.inputs.len() {
                return Rewrite::Keep;
            }
            match rest.len() {
                0 => tie(!controlling ^ inverted),
                1 => Rewrite::Replace(if inverted { Not } else { Buff }, rest),
                _ => Rewrite::Replace(gate.kind, rest),
            }
        }
        Xor | Xnor => {
            let mut parity = gate.kind == Xnor;
            let mut rest = Vec::new();
            for net in &gate.inputs {
                match value(net) {
                    Some(v) => parity ^= v,
                    None => rest.push(net.clone()),
                }
            }
            if rest.len() == gate.inputs.len() {
                return Rewrite::Keep;
            }
            match rest.len() {
                0 => tie(parity),
                1 => Rewrite::Replace(if parity { Not } else { Buff }, rest),
                _ => Rewrite::Replace(if parity { Xnor } else { Xor }, rest),
            }
        }
    }
}
