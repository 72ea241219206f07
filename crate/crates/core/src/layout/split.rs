//! Splitting a layout into what the FEOL foundry sees and the BEOL secret,
//! and putting the two back together.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::netlist::{Gate, GateKind, NameAllocator, NetId, Netlist, Role};

use super::{LayerAssignment, LayoutError, Placement, SinkPin, Site};

/// Roles an attacker can tell apart from the layout: TIE cells are obvious
/// and the key input of a key-gate is a known convention. Restore logic
/// looks like any other logic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeolRole {
    Regular,
    KeyGate,
    TieCell,
}

impl FeolRole {
    pub fn of(role: Role) -> FeolRole {
        match role {
            Role::KeyGate => FeolRole::KeyGate,
            Role::TieCell => FeolRole::TieCell,
            Role::Regular | Role::RestoreLogic => FeolRole::Regular,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeolRole::Regular => "regular",
            FeolRole::KeyGate => "key-gate",
            FeolRole::TieCell => "tie-cell",
        }
    }

    pub fn from_name(name: &str) -> Option<FeolRole> {
        [FeolRole::Regular, FeolRole::KeyGate, FeolRole::TieCell]
            .into_iter()
            .find(|r| r.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeolGate {
    pub id: NetId,
    pub kind: GateKind,
    pub role: FeolRole,
    /// `None` where the input wire is routed above the split.
    pub inputs: Vec<Option<NetId>>,
}

/// A driver with at least one connection cut by the split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DanglingDriver {
    /// The driven net: a gate id or a primary input.
    pub pin: NetId,
    pub position: Site,
    /// `None` for a primary input port.
    pub kind: Option<GateKind>,
    pub role: FeolRole,
    /// Connections of this driver that stay in the FEOL.
    pub visible_fanout: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DanglingSink {
    pub pin: SinkPin,
    pub position: Site,
    pub kind: GateKind,
    pub role: FeolRole,
}

impl DanglingSink {
    /// Whether this is the key input of a key-gate.
    pub fn is_key_input(&self, feol: &FeolView) -> bool {
        self.role == FeolRole::KeyGate
            && feol
                .gate(&self.pin.gate)
                .is_some_and(|g| self.pin.slot + 1 == g.inputs.len())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeolView {
    pub name: NetId,
    pub inputs: Vec<NetId>,
    pub outputs: Vec<NetId>,
    /// Sorted by id.
    pub gates: Vec<FeolGate>,
    pub placement: Placement,
    /// Sorted by pin.
    pub dangling_drivers: Vec<DanglingDriver>,
    /// Sorted by pin.
    pub dangling_sinks: Vec<DanglingSink>,
    pub split_layer: usize,
}

impl FeolView {
    pub fn gate(&self, id: &str) -> Option<&FeolGate> {
        self.gates
            .binary_search_by(|g| g.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.gates[i])
    }

    pub fn driver(&self, pin: &str) -> Option<&DanglingDriver> {
        self.dangling_drivers
            .binary_search_by(|d| d.pin.as_str().cmp(pin))
            .ok()
            .map(|i| &self.dangling_drivers[i])
    }

    pub fn sink(&self, pin: &SinkPin) -> Option<&DanglingSink> {
        self.dangling_sinks
            .binary_search_by(|s| s.pin.cmp(pin))
            .ok()
            .map(|i| &self.dangling_sinks[i])
    }

    /// Whether `pin` is a TIE cell output.
    pub fn is_tie(&self, pin: &str) -> bool {
        self.gate(pin).is_some_and(|g| g.role == FeolRole::TieCell)
    }

    /// Connections that survived the split, as `(driver, sink)`.
    pub fn visible_edges(&self) -> impl Iterator<Item = (&NetId, SinkPin)> {
        self.gates.iter().flat_map(|g| {
            g.inputs
                .iter()
                .enumerate()
                .filter_map(move |(slot, d)| d.as_ref().map(|d| (d, SinkPin::new(g.id.clone(), slot))))
        })
    }
}

/// The connections routed above the split: the true pairing of dangling
/// drivers and sinks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BeolSecret {
    /// `(driver pin, sink pin)`, sorted by sink.
    pub edges: Vec<(NetId, SinkPin)>,
}

/// Cuts every connection routed above `split_layer`.
pub fn split(
    netlist: &Netlist,
    placement: &Placement,
    layers: &LayerAssignment,
    split_layer: usize,
) -> Result<(FeolView, BeolSecret), LayoutError> {
    let broken: BTreeMap<&SinkPin, &NetId> = layers
        .connections
        .iter()
        .filter(|c| c.top_layer > split_layer)
        .map(|c| (&c.sink, &c.driver))
        .collect();

    let mut gates = Vec::with_capacity(netlist.gate_count());
    let mut visible: BTreeMap<&str, usize> = BTreeMap::new();
    let mut sinks = Vec::new();
    let mut edges = Vec::new();
    for gate in netlist.gates() {
        let position = placement
            .position(&gate.output)
            .ok_or_else(|| LayoutError::MissingPosition(gate.output.clone()))?;
        let role = FeolRole::of(gate.role);
        let mut inputs = Vec::with_capacity(gate.inputs.len());
        for (slot, net) in gate.inputs.iter().enumerate() {
            let pin = SinkPin::new(gate.output.clone(), slot);
            if broken.contains_key(&pin) {
                edges.push((net.clone(), pin.clone()));
                sinks.push(DanglingSink {
                    pin,
                    position,
                    kind: gate.kind,
                    role,
                });
                inputs.push(None);
            } else {
                *visible.entry(net.as_str()).or_default() += 1;
                inputs.push(Some(net.clone()));
            }
        }
        gates.push(FeolGate {
            id: gate.output.clone(),
            kind: gate.kind,
            role,
            inputs,
        });
    }
    gates.sort_by(|a, b| a.id.cmp(&b.id));
    sinks.sort_by(|a, b| a.pin.cmp(&b.pin));
    edges.sort_by(|a, b| a.1.cmp(&b.1));

    let driver_pins: BTreeSet<&NetId> = broken.values().copied().collect();
    let mut drivers = Vec::with_capacity(driver_pins.len());
    for pin in driver_pins {
        let position = placement
            .driver_position(netlist, pin)
            .ok_or_else(|| LayoutError::MissingPosition(pin.clone()))?;
        let gate = netlist.gate(pin);
        drivers.push(DanglingDriver {
            pin: pin.clone(),
            position,
            kind: gate.map(|g| g.kind),
            role: gate.map_or(FeolRole::Regular, |g| FeolRole::of(g.role)),
            visible_fanout: visible.get(pin.as_str()).copied().unwrap_or(0),
        });
    }

    let feol = FeolView {
        name: netlist.name().to_string(),
        inputs: netlist.inputs().to_vec(),
        outputs: netlist.outputs().to_vec(),
        gates,
        placement: placement.clone(),
        dangling_drivers: drivers,
        dangling_sinks: sinks,
        split_layer,
    };
    Ok((feol, BeolSecret { edges }))
}

/// Reconnects the FEOL view through `edges`; every dangling sink must be
/// bound exactly once.
pub fn recombine(feol: &FeolView, secret: &BeolSecret) -> Result<Netlist, LayoutError> {
    rebuild(feol, &secret.edges, false)
}

/// Like [`recombine`], but ties every unbound sink to a fresh constant-0
/// cell so that partial attack results still give a closed netlist.
pub fn recombine_lenient(feol: &FeolView, edges: &[(NetId, SinkPin)]) -> Result<Netlist, LayoutError> {
    rebuild(feol, edges, true)
}

fn rebuild(feol: &FeolView, edges: &[(NetId, SinkPin)], fill: bool) -> Result<Netlist, LayoutError> {
    let mut bound: BTreeMap<&SinkPin, &NetId> = BTreeMap::new();
    for (driver, sink) in edges {
        if feol.driver(driver).is_none() {
            return Err(LayoutError::UnknownPin(driver.clone()));
        }
        if feol.sink(sink).is_none() {
            return Err(LayoutError::UnknownPin(sink.to_string()));
        }
        if bound.insert(sink, driver).is_some() {
            return Err(LayoutError::DoubleDriven(sink.to_string()));
        }
    }
    let mut names = NameAllocator::new(
        feol.inputs
            .iter()
            .chain(feol.gates.iter().map(|g| &g.id)),
    );
    let mut gates = Vec::with_capacity(feol.gates.len());
    let mut extra = Vec::new();
    for g in &feol.gates {
        let mut inputs = Vec::with_capacity(g.inputs.len());
        for (slot, input) in g.inputs.iter().enumerate() {
            let net = match input {
                Some(net) => net.clone(),
                None => {
                    let pin = SinkPin::new(g.id.clone(), slot);
                    match bound.get(&pin) {
                        Some(driver) => (*driver).clone(),
                        None if fill => {
                            let zero = names.fresh(&format!("{}_open{slot}", g.id));
                            extra.push(Gate::new(zero.clone(), GateKind::Tie0, Vec::new()));
                            zero
                        }
                        None => return Err(LayoutError::UnboundSink(pin.to_string())),
                    }
                }
            };
            inputs.push(net);
        }
        let role = match g.role {
            FeolRole::Regular => Role::Regular,
            FeolRole::KeyGate => Role::KeyGate,
            FeolRole::TieCell => Role::TieCell,
        };
        gates.push(Gate::new(g.id.clone(), g.kind, inputs).with_role(role));
    }
    gates.extend(extra);
    Ok(Netlist::new(
        feol.name.clone(),
        feol.inputs.clone(),
        feol.outputs.clone(),
        gates,
    )?)
}
