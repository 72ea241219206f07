//! JSON interchange files and atomic file output.
//!
//! Every document is a plain serde struct, so field order is fixed and maps
//! are `BTreeMap`s; equal inputs give byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use splitlock_core::attack::InferredSecret;
use splitlock_core::layout::{
    BeolSecret, DanglingDriver, DanglingSink, FeolGate, FeolRole, FeolView, Grid, LayerAssignment,
    LayoutMode, Placement, RoutedConnection, SinkPin,
};
use splitlock_core::lock::{FaultCost, Key, KeyAssignment, LockedDesign, ModuleRecord};
use splitlock_core::netlist::{GateKind, NetId, Netlist};
use splitlock_core::sim::{FailingPattern, Fault};
use splitlock_core::{parse_bench, write_bench, BenchError};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Bench { path: PathBuf, source: BenchError },
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError::Invalid(msg.into()))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let io = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents always serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    write_atomic(path, to_json(value).as_bytes())
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    serde_json::from_str(&read_text(path)?).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_bench(path: &Path) -> Result<Netlist, FormatError> {
    parse_bench(&read_text(path)?).map_err(|source| FormatError::Bench {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_netlist(path: &Path, netlist: &Netlist) -> Result<(), FormatError> {
    write_atomic(path, write_bench(netlist).as_bytes())
}

fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn bits_from_string(s: &str) -> Result<Vec<bool>, FormatError> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => invalid(format!("bit string `{s}` holds `{c}`")),
        })
        .collect()
}

// ---------------------------------------------------------------- key sidecar

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultDoc {
    pub net: NetId,
    pub stuck_at: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternDoc {
    pub inputs: String,
    pub error_mask: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDoc {
    pub module: usize,
    pub gates: Vec<NetId>,
    pub fault: FaultDoc,
    pub cost_fi: usize,
    pub cost_rest: usize,
    pub scope_inputs: Vec<NetId>,
    pub scope_outputs: Vec<NetId>,
    pub patterns: Vec<PatternDoc>,
    pub witnesses: Vec<Option<String>>,
    pub key_indices: Vec<usize>,
    pub key_positions: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentDoc {
    pub tie: NetId,
    pub key_gate: NetId,
    pub slot: usize,
}

/// Everything about a locked design beyond its netlist.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyDoc {
    pub k: usize,
    pub seed: u64,
    pub partition_attempt: u64,
    pub key_bits: String,
    pub assignments: Vec<AssignmentDoc>,
    pub original_inputs: Vec<NetId>,
    pub original_outputs: Vec<NetId>,
    pub modules: Vec<ModuleDoc>,
}

impl KeyDoc {
    pub fn from_design(design: &LockedDesign) -> KeyDoc {
        let modules = design
            .modules
            .iter()
            .map(|m| ModuleDoc {
                module: m.module,
                gates: m.gates.clone(),
                fault: FaultDoc {
                    net: m.fault.net.clone(),
                    stuck_at: u8::from(m.fault.stuck_at),
                },
                cost_fi: m.cost.cost_fi,
                cost_rest: m.cost.cost_rest,
                scope_inputs: m.scope_inputs.clone(),
                scope_outputs: m.scope_outputs.clone(),
                patterns: m
                    .patterns
                    .iter()
                    .map(|p| PatternDoc {
                        inputs: bits_to_string(&p.inputs),
                        error_mask: bits_to_string(&p.error_mask),
                    })
                    .collect(),
                witnesses: m.witnesses.iter().map(|w| w.as_deref().map(bits_to_string)).collect(),
                key_indices: m.key_indices.clone(),
                key_positions: m.key_positions.clone(),
            })
            .collect();
        KeyDoc {
            k: design.k(),
            seed: design.seed,
            partition_attempt: design.partition_attempt,
            key_bits: bits_to_string(&design.key.bits),
            assignments: design
                .key
                .assignments
                .iter()
                .map(|a| AssignmentDoc {
                    tie: a.tie.clone(),
                    key_gate: a.key_gate.clone(),
                    slot: a.slot,
                })
                .collect(),
            original_inputs: design.original_inputs.clone(),
            original_outputs: design.original_outputs.clone(),
            modules,
        }
    }

    /// Rebuilds the design around its locked netlist.
    pub fn into_design(self, netlist: Netlist) -> Result<LockedDesign, FormatError> {
        let bits = bits_from_string(&self.key_bits)?;
        if bits.len() != self.k || self.assignments.len() != self.k {
            return invalid("key length, key bits and assignments disagree");
        }
        let mut modules = Vec::with_capacity(self.modules.len());
        for m in self.modules {
            let fault = Fault::new(m.fault.net, m.fault.stuck_at != 0);
            let patterns = m
                .patterns
                .iter()
                .map(|p| {
                    Ok(FailingPattern {
                        inputs: bits_from_string(&p.inputs)?,
                        error_mask: bits_from_string(&p.error_mask)?,
                    })
                })
                .collect::<Result<_, FormatError>>()?;
            let witnesses = m
                .witnesses
                .iter()
                .map(|w| w.as_deref().map(bits_from_string).transpose())
                .collect::<Result<_, _>>()?;
            modules.push(ModuleRecord {
                module: m.module,
                gates: m.gates,
                cost: FaultCost {
                    fault: fault.clone(),
                    cost_fi: m.cost_fi,
                    cost_rest: m.cost_rest,
                    total: m.cost_fi + m.cost_rest,
                },
                fault,
                scope_inputs: m.scope_inputs,
                scope_outputs: m.scope_outputs,
                patterns,
                witnesses,
                key_indices: m.key_indices,
                key_positions: m.key_positions,
            });
        }
        let design = LockedDesign {
            netlist,
            key: Key {
                bits,
                assignments: self
                    .assignments
                    .into_iter()
                    .map(|a| KeyAssignment {
                        tie: a.tie,
                        key_gate: a.key_gate,
                        slot: a.slot,
                    })
                    .collect(),
            },
            original_inputs: self.original_inputs,
            original_outputs: self.original_outputs,
            modules,
            seed: self.seed,
            partition_attempt: self.partition_attempt,
        };
        splitlock_core::lock::check_key_structure(&design).map_err(FormatError::Invalid)?;
        Ok(design)
    }
}

// ---------------------------------------------------------------- layout

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDoc {
    pub width: usize,
    pub height: usize,
}

impl From<Grid> for GridDoc {
    fn from(g: Grid) -> Self {
        GridDoc {
            width: g.width,
            height: g.height,
        }
    }
}

impl From<GridDoc> for Grid {
    fn from(g: GridDoc) -> Self {
        Grid {
            width: g.width,
            height: g.height,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementDoc {
    pub grid: GridDoc,
    pub positions: BTreeMap<NetId, [i64; 2]>,
    pub fixed: Vec<NetId>,
}

impl From<&Placement> for PlacementDoc {
    fn from(p: &Placement) -> Self {
        PlacementDoc {
            grid: p.grid.into(),
            positions: p.positions.iter().map(|(k, &(x, y))| (k.clone(), [x, y])).collect(),
            fixed: p.fixed.iter().cloned().collect(),
        }
    }
}

impl From<PlacementDoc> for Placement {
    fn from(p: PlacementDoc) -> Self {
        Placement {
            grid: p.grid.into(),
            positions: p.positions.into_iter().map(|(k, [x, y])| (k, (x, y))).collect(),
            fixed: p.fixed.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionDoc {
    pub driver: NetId,
    pub sink: String,
    pub hpwl: u64,
    pub top_layer: usize,
    pub is_key: bool,
}

/// A placed and layer-assigned design.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutDoc {
    pub grid: GridDoc,
    pub positions: BTreeMap<NetId, [i64; 2]>,
    pub fixed: Vec<NetId>,
    pub connections: Vec<ConnectionDoc>,
    pub split_layer: usize,
    pub layer_count: usize,
    pub mode: String,
}

impl LayoutDoc {
    pub fn new(placement: &Placement, layers: &LayerAssignment) -> LayoutDoc {
        let p = PlacementDoc::from(placement);
        LayoutDoc {
            grid: p.grid,
            positions: p.positions,
            fixed: p.fixed,
            connections: layers
                .connections
                .iter()
                .map(|c| ConnectionDoc {
                    driver: c.driver.clone(),
                    sink: c.sink.to_string(),
                    hpwl: c.hpwl,
                    top_layer: c.top_layer,
                    is_key: c.is_key,
                })
                .collect(),
            split_layer: layers.split_layer,
            layer_count: layers.layer_count,
            mode: layers.mode.name().to_string(),
        }
    }

    pub fn into_parts(self) -> Result<(Placement, LayerAssignment), FormatError> {
        let mode: LayoutMode = self.mode.parse().map_err(FormatError::Invalid)?;
        let connections = self
            .connections
            .into_iter()
            .map(|c| {
                Ok(RoutedConnection {
                    driver: c.driver,
                    sink: c.sink.parse().map_err(FormatError::Invalid)?,
                    hpwl: c.hpwl,
                    top_layer: c.top_layer,
                    is_key: c.is_key,
                })
            })
            .collect::<Result<_, FormatError>>()?;
        let placement = PlacementDoc {
            grid: self.grid,
            positions: self.positions,
            fixed: self.fixed,
        }
        .into();
        Ok((
            placement,
            LayerAssignment {
                connections,
                mode,
                split_layer: self.split_layer,
                layer_count: self.layer_count,
            },
        ))
    }
}

// ---------------------------------------------------------------- FEOL / BEOL

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeolGateDoc {
    pub id: NetId,
    pub kind: String,
    pub role: String,
    pub inputs: Vec<Option<NetId>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverDoc {
    pub pin: NetId,
    pub position: [i64; 2],
    pub kind: Option<String>,
    pub role: String,
    pub visible_fanout: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkDoc {
    pub pin: String,
    pub position: [i64; 2],
    pub kind: String,
    pub role: String,
}

/// What the untrusted foundry receives: no key values, no BEOL pairing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeolDoc {
    pub name: String,
    pub inputs: Vec<NetId>,
    pub outputs: Vec<NetId>,
    pub gates: Vec<FeolGateDoc>,
    pub placement: PlacementDoc,
    pub dangling_drivers: Vec<DriverDoc>,
    pub dangling_sinks: Vec<SinkDoc>,
    pub split_layer: usize,
}

fn kind_from(name: &str) -> Result<GateKind, FormatError> {
    GateKind::from_name(name).ok_or_else(|| FormatError::Invalid(format!("unknown gate kind `{name}`")))
}

fn role_from(name: &str) -> Result<FeolRole, FormatError> {
    FeolRole::from_name(name).ok_or_else(|| FormatError::Invalid(format!("unknown role `{name}`")))
}

impl From<&FeolView> for FeolDoc {
    fn from(f: &FeolView) -> Self {
        FeolDoc {
            name: f.name.clone(),
            inputs: f.inputs.clone(),
            outputs: f.outputs.clone(),
            gates: f
                .gates
                .iter()
                .map(|g| FeolGateDoc {
                    id: g.id.clone(),
                    kind: g.kind.name().to_string(),
                    role: g.role.name().to_string(),
                    inputs: g.inputs.clone(),
                })
                .collect(),
            placement: (&f.placement).into(),
            dangling_drivers: f
                .dangling_drivers
                .iter()
                .map(|d| DriverDoc {
                    pin: d.pin.clone(),
                    position: [d.position.0, d.position.1],
                    kind: d.kind.map(|k| k.name().to_string()),
                    role: d.role.name().to_string(),
                    visible_fanout: d.visible_fanout,
                })
                .collect(),
            dangling_sinks: f
                .dangling_sinks
                .iter()
                .map(|s| SinkDoc {
                    pin: s.pin.to_string(),
                    position: [s.position.0, s.position.1],
                    kind: s.kind.name().to_string(),
                    role: s.role.name().to_string(),
                })
                .collect(),
            split_layer: f.split_layer,
        }
    }
}

impl FeolDoc {
    pub fn into_view(self) -> Result<FeolView, FormatError> {
        let mut gates = self
            .gates
            .into_iter()
            .map(|g| {
                Ok(FeolGate {
                    kind: kind_from(&g.kind)?,
                    role: role_from(&g.role)?,
                    id: g.id,
                    inputs: g.inputs,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        gates.sort_by(|a, b| a.id.cmp(&b.id));
        let mut dangling_drivers = self
            .dangling_drivers
            .into_iter()
            .map(|d| {
                Ok(DanglingDriver {
                    position: (d.position[0], d.position[1]),
                    kind: d.kind.as_deref().map(kind_from).transpose()?,
                    role: role_from(&d.role)?,
                    visible_fanout: d.visible_fanout,
                    pin: d.pin,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        dangling_drivers.sort_by(|a, b| a.pin.cmp(&b.pin));
        let mut dangling_sinks = self
            .dangling_sinks
            .into_iter()
            .map(|s| {
                Ok(DanglingSink {
                    pin: s.pin.parse().map_err(FormatError::Invalid)?,
                    position: (s.position[0], s.position[1]),
                    kind: kind_from(&s.kind)?,
                    role: role_from(&s.role)?,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        dangling_sinks.sort_by(|a, b| a.pin.cmp(&b.pin));
        Ok(FeolView {
            name: self.name,
            inputs: self.inputs,
            outputs: self.outputs,
            gates,
            placement: self.placement.into(),
            dangling_drivers,
            dangling_sinks,
            split_layer: self.split_layer,
        })
    }
}

fn edges_to_doc(edges: &[(NetId, SinkPin)]) -> Vec<[String; 2]> {
    edges.iter().map(|(d, s)| [d.clone(), s.to_string()]).collect()
}

fn edges_from_doc(edges: Vec<[String; 2]>) -> Result<Vec<(NetId, SinkPin)>, FormatError> {
    let mut out = edges
        .into_iter()
        .map(|[d, s]| Ok((d, s.parse().map_err(FormatError::Invalid)?)))
        .collect::<Result<Vec<_>, FormatError>>()?;
    out.sort_by(|a: &(NetId, SinkPin), b| a.1.cmp(&b.1));
    Ok(out)
}

/// `[driver, "gate/slot"]` pairs routed above the split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeolDoc {
    pub edges: Vec<[String; 2]>,
}

impl From<&BeolSecret> for BeolDoc {
    fn from(b: &BeolSecret) -> Self {
        BeolDoc {
            edges: edges_to_doc(&b.edges),
        }
    }
}

impl BeolDoc {
    pub fn into_secret(self) -> Result<BeolSecret, FormatError> {
        Ok(BeolSecret {
            edges: edges_from_doc(self.edges)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferredDoc {
    pub edges: Vec<[String; 2]>,
    pub unresolved: Vec<String>,
    pub capacity_overflow: bool,
}

impl From<&InferredSecret> for InferredDoc {
    fn from(i: &InferredSecret) -> Self {
        InferredDoc {
            edges: edges_to_doc(&i.edges),
            unresolved: i.unresolved.iter().map(|s| s.to_string()).collect(),
            capacity_overflow: i.capacity_overflow,
        }
    }
}

impl InferredDoc {
    pub fn into_secret(self) -> Result<InferredSecret, FormatError> {
        let mut unresolved = self
            .unresolved
            .iter()
            .map(|s| s.parse().map_err(FormatError::Invalid))
            .collect::<Result<Vec<SinkPin>, _>>()?;
        unresolved.sort();
        Ok(InferredSecret {
            edges: edges_from_doc(self.edges)?,
            unresolved,
            capacity_overflow: self.capacity_overflow,
        })
    }
}
