//! Per-connection routing layer assignment.

use alloc::vec::Vec;

use crate::netlist::{NetId, Netlist, Role};

use super::{hpwl, LayoutError, LayoutMode, Placement, SinkPin};

/// Upper HPWL bound of layers M1..M8; the last layer takes everything.
pub const DEFAULT_THRESHOLDS: [u64; 8] = [2, 4, 8, 16, 32, 64, 128, u64::MAX];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutedConnection {
    pub driver: NetId,
    pub sink: SinkPin,
    pub hpwl: u64,
    /// Highest metal layer used, 1-based.
    pub top_layer: usize,
    /// Driven by a TIE cell.
    pub is_key: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerAssignment {
    /// One entry per gate input, sorted by sink pin.
    pub connections: Vec<RoutedConnection>,
    pub mode: LayoutMode,
    pub split_layer: usize,
    pub layer_count: usize,
}

impl LayerAssignment {
    pub fn key_connections(&self) -> impl Iterator<Item = &RoutedConnection> {
        self.connections.iter().filter(|c| c.is_key)
    }

    /// Connections routed above `layer`.
    pub fn broken_at(&self, layer: usize) -> impl Iterator<Item = &RoutedConnection> {
        self.connections.iter().filter(move |c| c.top_layer > layer)
    }
}

/// Assigns each connection the lowest layer whose threshold covers its
/// HPWL. In secure mode every key-net is instead stacked straight up to
/// `split_layer + 1`, so it has no segment at or below the split.
pub fn assign_layers(
    placement: &Placement,
    netlist: &Netlist,
    thresholds: &[u64],
    split_layer: usize,
    mode: LayoutMode,
) -> Result<LayerAssignment, LayoutError> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LayoutError::InvalidThresholds);
    }
    let layer_count = thresholds.len();
    if split_layer == 0 || split_layer >= layer_count {
        return Err(LayoutError::SplitLayer {
            split: split_layer,
            layers: layer_count,
        });
    }
    let mut connections = Vec::new();
    for gate in netlist.gates() {
        let sink_pos = placement
            .position(&gate.output)
            .ok_or_else(|| LayoutError::MissingPosition(gate.output.clone()))?;
        for (slot, net) in gate.inputs.iter().enumerate() {
            let src = placement
                .driver_position(netlist, net)
                .ok_or_else(|| LayoutError::MissingPosition(net.clone()))?;
            let length = hpwl(src, sink_pos);
            let is_key = netlist.gate(net).is_some_and(|d| d.role == Role::TieCell);
            let top_layer = if is_key && mode == LayoutMode::Secure {
                split_layer + 1
            } else {
                thresholds
                    .iter()
                    .position(|&t| length <= t)
                    .map_or(layer_count, |l| l + 1)
            };
            connections.push(RoutedConnection {
                driver: net.clone(),
                sink: SinkPin::new(gate.output.clone(), slot),
                hpwl: length,
                top_layer,
                is_key,
            });
        }
    }
    connections.sort_by(|a, b| a.sink.cmp(&b.sink));
    Ok(LayerAssignment {
        connections,
        mode,
        split_layer,
        layer_count,
    })
}
