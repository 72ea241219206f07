//! Combinational gate-level netlists.
//!
//! A [`Netlist`] is validated once at construction and is immutable
//! afterwards: every net has exactly one driver (a primary input or a gate
//! output), every gate input refers to an existing net, and the gate graph is
//! acyclic. A gate is identified by the name of the net it drives.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;

use thiserror::Error;

/// Net names are kept verbatim, numeric ISCAS names included.
pub type NetId = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GateKind {
    And,
    Or,
    Nand,
    Nor,
    Xor,
    Xnor,
    Not,
    Buff,
    Tie0,
    Tie1,
}

impl GateKind {
    pub const ALL: [GateKind; 10] = [
        GateKind::And,
        GateKind::Or,
        GateKind::Nand,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Xnor,
        GateKind::Not,
        GateKind::Buff,
        GateKind::Tie0,
        GateKind::Tie1,
    ];

    /// Upper-case BENCH keyword.
    pub fn name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::Nand => "NAND",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Not => "NOT",
            GateKind::Buff => "BUFF",
            GateKind::Tie0 => "TIE0",
            GateKind::Tie1 => "TIE1",
        }
    }

    /// Case-insensitive lookup of a BENCH keyword.
    pub fn from_name(name: &str) -> Option<GateKind> {
        GateKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(name))
    }

    pub fn is_constant(self) -> bool {
        matches!(self, GateKind::Tie0 | GateKind::Tie1)
    }

    pub fn constant(value: bool) -> GateKind {
        if value {
            GateKind::Tie1
        } else {
            GateKind::Tie0
        }
    }

    pub fn arity_ok(self, inputs: usize) -> bool {
        match self {
            GateKind::Tie0 | GateKind::Tie1 => inputs == 0,
            GateKind::Not | GateKind::Buff => inputs == 1,
            _ => inputs >= 2,
        }
    }

    /// Evaluates the gate on 64 input vectors at once.
    pub fn eval_words<I: IntoIterator<Item = u64>>(self, inputs: I) -> u64 {
        let mut it = inputs.into_iter();
        match self {
            GateKind::Tie0 => 0,
            GateKind::Tie1 => !0,
            GateKind::Buff => it.next().unwrap_or(0),
            GateKind::Not => !it.next().unwrap_or(0),
            GateKind::And => it.fold(!0, |a, b| a & b),
            GateKind::Nand => !it.fold(!0, |a, b| a & b),
            GateKind::Or => it.fold(0, |a, b| a | b),
            GateKind::Nor => !it.fold(0, |a, b| a | b),
            GateKind::Xor => it.fold(0, |a, b| a ^ b),
            GateKind::Xnor => !it.fold(0, |a, b| a ^ b),
        }
    }

    pub fn eval(self, inputs: &[bool]) -> bool {
        let word = self.eval_words(inputs.iter().map(|&b| if b { !0u64 } else { 0 }));
        word & 1 == 1
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a gate is for. Anything other than `Regular` is "don't touch" for
/// restructuring passes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    #[default]
    Regular,
    KeyGate,
    TieCell,
    RestoreLogic,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Regular => "regular",
            Role::KeyGate => "key-gate",
            Role::TieCell => "tie-cell",
            Role::RestoreLogic => "restore-logic",
        }
    }

    pub fn from_name(name: &str) -> Option<Role> {
        [Role::Regular, Role::KeyGate, Role::TieCell, Role::RestoreLogic]
            .into_iter()
            .find(|r| r.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    /// Driven net; doubles as the gate id.
    pub output: NetId,
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
    pub role: Role,
}

impl Gate {
    pub fn new<S: Into<NetId>>(output: S, kind: GateKind, inputs: Vec<NetId>) -> Gate {
        Gate {
            output: output.into(),
            kind,
            inputs,
            role: Role::Regular,
        }
    }

    pub fn with_role(mut self, role: Role) -> Gate {
        self.role = role;
        self
    }

    pub fn id(&self) -> &str {
        &self.output
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum NetlistError {
    #[error("net `{0}` has more than one driver")]
    DuplicateDriver(NetId),
    #[error("net `{net}` used by `{user}` is never driven")]
    UndefinedNet { net: NetId, user: NetId },
    #[error("combinational cycle through gate `{0}`")]
    Cycle(NetId),
    #[error("gate `{gate}` of kind {kind} cannot take {inputs} inputs")]
    Arity {
        gate: NetId,
        kind: GateKind,
        inputs: usize,
    },
    #[error("tie cell `{0}` must be a TIE0 or TIE1 gate")]
    TieCellKind(NetId),
}

/// Where a net gets its value from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    Input(usize),
    Gate(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Netlist {
    name: String,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    gates: Vec<Gate>,
    drivers: BTreeMap<NetId, Driver>,
    order: Vec<usize>,
}

impl Netlist {
    pub fn new<S: Into<String>>(
        name: S,
        inputs: Vec<NetId>,
        outputs: Vec<NetId>,
        gates: Vec<Gate>,
    ) -> Result<Netlist, NetlistError> {
        let mut drivers = BTreeMap::new();
        for (i, net) in inputs.iter().enumerate() {
            if drivers.insert(net.clone(), Driver::Input(i)).is_some() {
                return Err(NetlistError::DuplicateDriver(net.clone()));
            }
        }
        for (i, gate) in gates.iter().enumerate() {
            if drivers.insert(gate.output.clone(), Driver::Gate(i)).is_some() {
                return Err(NetlistError::DuplicateDriver(gate.output.clone()));
            }
        }
        for gate in &gates {
            if !gate.kind.arity_ok(gate.inputs.len()) {
                return Err(NetlistError::Arity {
                    gate: gate.output.clone(),
                    kind: gate.kind,
                    inputs: gate.inputs.len(),
                });
            }
            if gate.role == Role::TieCell && !gate.kind.is_constant() {
                return Err(NetlistError::TieCellKind(gate.output.clone()));
            }
            if let Some(net) = gate.inputs.iter().find(|n| !drivers.contains_key(*n)) {
                return Err(NetlistError::UndefinedNet {
                    net: net.clone(),
                    user: gate.output.clone(),
                });
            }
        }
        if let Some(net) = outputs.iter().find(|n| !drivers.contains_key(*n)) {
            return Err(NetlistError::UndefinedNet {
                net: net.clone(),
                user: String::from("OUTPUT"),
            });
        }
        let order = topological_indices(&gates, &drivers)?;
        Ok(Netlist {
            name: name.into(),
            inputs,
            outputs,
            gates,
            drivers,
            order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inputs(&self) -> &[NetId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[NetId] {
        &self.outputs
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn with_name<S: Into<String>>(mut self, name: S) -> Netlist {
        self.name = name.into();
        self
    }

    pub fn into_parts(self) -> (String, Vec<NetId>, Vec<NetId>, Vec<Gate>) {
        (self.name, self.inputs, self.outputs, self.gates)
    }

    pub fn driver(&self, net: &str) -> Option<Driver> {
        self.drivers.get(net).copied()
    }

    pub fn has_net(&self, net: &str) -> bool {
        self.drivers.contains_key(net)
    }

    /// All net names, primary inputs and gate outputs.
    pub fn nets(&self) -> impl Iterator<Item = &NetId> {
        self.drivers.keys()
    }

    pub fn gate(&self, id: &str) -> Option<&Gate> {
        match self.drivers.get(id) {
            Some(Driver::Gate(i)) => Some(&self.gates[*i]),
            _ => None,
        }
    }

    pub fn gate_index(&self, id: &str) -> Option<usize> {
        match self.drivers.get(id) {
            Some(Driver::Gate(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn is_output(&self, net: &str) -> bool {
        self.outputs.iter().any(|o| o == net)
    }

    /// Gate indices such that every gate comes after the drivers of its
    /// inputs. Ties are broken by gate id.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Gate ids in topological order, ties broken lexicographically.
    pub fn topological_order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.gates[i].id()).collect()
    }

    /// Consumers of every net as `(gate index, input slot)`.
    pub fn fanout(&self) -> BTreeMap<&str, Vec<(usize, usize)>> {
        let mut map: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
        for (gi, gate) in self.gates.iter().enumerate() {
            for (slot, net) in gate.inputs.iter().enumerate() {
                map.entry(net.as_str()).or_default().push((gi, slot));
            }
        }
        map
    }

    /// Gates in the transitive fan-in of `roots`.
    pub fn fanin_cone(&self, roots: &[NetId]) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = roots.iter().filter_map(|r| self.gate_index(r)).collect();
        while let Some(g) = stack.pop() {
            if !seen.insert(g) {
                continue;
            }
            for net in &self.gates[g].inputs {
                if let Some(Driver::Gate(d)) = self.drivers.get(net) {
                    if !seen.contains(d) {
                        stack.push(*d);
                    }
                }
            }
        }
        seen
    }

    /// Builds the sub-circuit made of `gates`.
    ///
    /// Inputs are the nets read by the selection but driven outside it, in
    /// order of first use along the topological order. Unless `outputs` is
    /// given, outputs are the selected nets that are primary outputs or are
    /// read outside the selection.
    pub fn extract(
        &self,
        name: &str,
        gates: &BTreeSet<usize>,
        outputs: Option<&[NetId]>,
    ) -> Netlist {
        let mut inputs: Vec<NetId> = Vec::new();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut selected = Vec::new();
        for &g in &self.order {
            if !gates.contains(&g) {
                continue;
            }
            selected.push(g);
            for net in &self.gates[g].inputs {
                let internal = matches!(self.drivers.get(net), Some(Driver::Gate(d)) if gates.contains(d));
                if !internal && seen.insert(net.as_str()) {
                    inputs.push(net.clone());
                }
            }
        }
        let outputs: Vec<NetId> = match outputs {
            Some(outs) => {
                for o in outs {
                    let internal = matches!(self.drivers.get(o), Some(Driver::Gate(d)) if gates.contains(d));
                    if !internal && seen.insert(o.as_str()) {
                        inputs.push(o.clone());
                    }
                }
                outs.to_vec()
            }
            None => {
                let mut read_outside: BTreeSet<&str> = BTreeSet::new();
                for (gi, gate) in self.gates.iter().enumerate() {
                    if !gates.contains(&gi) {
                        read_outside.extend(gate.inputs.iter().map(String::as_str));
                    }
                }
                selected
                    .iter()
                    .map(|&g| &self.gates[g].output)
                    .filter(|net| self.is_output(net) || read_outside.contains(net.as_str()))
                    .cloned()
                    .collect()
            }
        };
        let sub_gates = selected.iter().map(|&g| self.gates[g].clone()).collect();
        Netlist::new(name, inputs, outputs, sub_gates)
            .expect("sub-circuit of a valid netlist is valid")
    }

    /// The transitive fan-in of `roots` as a standalone circuit with exactly
    /// those outputs.
    pub fn cone(&self, name: &str, roots: &[NetId]) -> Netlist {
        let gates = self.fanin_cone(roots);
        self.extract(name, &gates, Some(roots))
    }
}

fn topological_indices(
    gates: &[Gate],
    drivers: &BTreeMap<NetId, Driver>,
) -> Result<Vec<usize>, NetlistError> {
    let mut pending = Vec::with_capacity(gates.len());
    let mut consumers: Vec<Vec<usize>> = alloc::vec![Vec::new(); gates.len()];
    for (gi, gate) in gates.iter().enumerate() {
        let mut count = 0;
        for net in &gate.inputs {
            if let Some(Driver::Gate(d)) = drivers.get(net) {
                consumers[*d].push(gi);
                count += 1;
            }
        }
        pending.push(count);
    }
    let mut ready: BinaryHeap<Reverse<(&str, usize)>> = pending
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(gi, _)| Reverse((gates[gi].id(), gi)))
        .collect();
    let mut order = Vec::with_capacity(gates.len());
    while let Some(Reverse((_, gi))) = ready.pop() {
        order.push(gi);
        for &c in &consumers[gi] {
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.push(Reverse((gates[c].id(), c)));
            }
        }
    }
    if order.len() != gates.len() {
        let stuck = (0..gates.len())
            .filter(|&g| pending[g] > 0)
            .map(|g| gates[g].id())
            .min()
            .unwrap_or_default();
        return Err(NetlistError::Cycle(String::from(stuck)));
    }
    Ok(order)
}

/// Hands out net names that do not collide with anything already taken.
#[derive(Clone, Debug, Default)]
pub struct NameAllocator {
    used: BTreeSet<NetId>,
}

impl NameAllocator {
    pub fn new<'a, I: IntoIterator<Item = &'a NetId>>(taken: I) -> NameAllocator {
        NameAllocator {
            used: taken.into_iter().cloned().collect(),
        }
    }

    pub fn fresh(&mut self, base: &str) -> NetId {
        let mut name = String::from(base);
        while self.used.contains(&name) {
            name.push('_');
        }
        self.used.insert(name.clone());
        name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn s(v: &str) -> NetId {
        v.to_string()
    }

    fn c17() -> Netlist {
        let g = |o: &str, a: &str, b: &str| Gate::new(o, GateKind::Nand, vec![s(a), s(b)]);
        Netlist::new(
            "c17",
            ["1", "2", "3", "6", "7"].map(s).to_vec(),
            vec![s("22"), s("23")],
            vec![
                g("10", "1", "3"),
                g("11", "3", "6"),
                g("16", "2", "11"),
                g("19", "11", "7"),
                g("22", "10", "16"),
                g("23", "16", "19"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn c17_topological_order_respects_dependencies() {
        let n = c17();
        let order = n.topological_order();
        let pos = |id: &str| order.iter().position(|g| *g == id).unwrap();
        for early in ["10", "11"] {
            for late in ["16", "19"] {
                assert!(pos(early) < pos(late));
            }
        }
        for early in ["16", "19"] {
            for late in ["22", "23"] {
                assert!(pos(early) < pos(late));
            }
        }
        // lexicographic tie-breaking
        assert_eq!(order, vec!["10", "11", "16", "19", "22", "23"]);
    }

    #[test]
    fn single_gate_order() {
        let n = Netlist::new(
            "",
            vec![s("a")],
            vec![s("y")],
            vec![Gate::new("y", GateKind::Buff, vec![s("a")])],
        )
        .unwrap();
        assert_eq!(n.topological_order(), vec!["y"]);
    }

    #[test]
    fn rejects_cycles() {
        let err = Netlist::new(
            "",
            vec![s("a")],
            vec![s("x")],
            vec![
                Gate::new("x", GateKind::And, vec![s("a"), s("y")]),
                Gate::new("y", GateKind::Not, vec![s("x")]),
            ],
        )
        .unwrap_err();
        assert_eq!(err, NetlistError::Cycle(s("x")));
    }

    #[test]
    fn rejects_bad_structure() {
        let dup = Netlist::new(
            "",
            vec![s("a")],
            vec![],
            vec![Gate::new("a", GateKind::Not, vec![s("a")])],
        );
        assert_eq!(dup.unwrap_err(), NetlistError::DuplicateDriver(s("a")));
        let undefined = Netlist::new(
            "",
            vec![s("a")],
            vec![s("y")],
            vec![Gate::new("y", GateKind::And, vec![s("a"), s("b")])],
        );
        assert!(matches!(undefined, Err(NetlistError::UndefinedNet { .. })));
        let arity = Netlist::new(
            "",
            vec![s("a")],
            vec![],
            vec![Gate::new("y", GateKind::And, vec![s("a")])],
        );
        assert!(matches!(arity, Err(NetlistError::Arity { .. })));
        let tie = Netlist::new(
            "",
            vec![s("a")],
            vec![],
            vec![Gate::new("y", GateKind::Not, vec![s("a")]).with_role(Role::TieCell)],
        );
        assert_eq!(tie.unwrap_err(), NetlistError::TieCellKind(s("y")));
        let tie_inputs = Netlist::new(
            "",
            vec![s("a")],
            vec![],
            vec![Gate::new("y", GateKind::Tie1, vec![s("a")])],
        );
        assert!(matches!(tie_inputs, Err(NetlistError::Arity { .. })));
    }

    #[test]
    fn extract_computes_boundaries() {
        let n = c17();
        let gates: BTreeSet<usize> = ["11", "16", "19"]
            .iter()
            .map(|g| n.gate_index(g).unwrap())
            .collect();
        let m = n.extract("m", &gates, None);
        assert_eq!(m.inputs(), &[s("3"), s("6"), s("2"), s("7")]);
        assert_eq!(m.outputs(), &[s("16"), s("19")]);
        let cone = n.cone("cone", &[s("22")]);
        assert_eq!(cone.gate_count(), 4);
        assert_eq!(cone.inputs(), &[s("1"), s("3"), s("6"), s("2")]);
    }

    #[test]
    fn gate_eval_truth_tables() {
        use GateKind::*;
        let cases = [
            (And, [false, false, false, true]),
            (Or, [false, true, true, true]),
            (Nand, [true, true, true, false]),
            (Nor, [true, false, false, false]),
            (Xor, [false, true, true, false]),
            (Xnor, [true, false, false, true]),
        ];
        for (kind, table) in cases {
            for (i, expected) in table.iter().enumerate() {
                let a = i & 2 != 0;
                let b = i & 1 != 0;
                assert_eq!(kind.eval(&[a, b]), *expected, "{kind} {a} {b}");
            }
        }
        assert!(Not.eval(&[false]));
        assert!(Buff.eval(&[true]));
        assert!(Tie1.eval(&[]));
        assert!(!Tie0.eval(&[]));
    }

    #[test]
    fn names_round_trip() {
        for k in GateKind::ALL {
            assert_eq!(GateKind::from_name(&k.name().to_lowercase()), Some(k));
        }
        assert_eq!(GateKind::from_name("DFF"), None);
        let mut alloc = NameAllocator::new(&[s("x")]);
        assert_eq!(alloc.fresh("x"), "x_");
        assert_eq!(alloc.fresh("x"), "x__");
    }
}
