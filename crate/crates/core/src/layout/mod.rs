//! Abstract physical design.
//!
//! Cells sit on a grid of unit sites; primary inputs are fixed ports just
//! left of the die. Every gate input is a two-pin connection from its
//! driver, and routing is reduced to one top metal layer per connection
//! chosen from its half-perimeter wirelength. Splitting at a layer cuts
//! every connection routed above it.

mod layers;
mod placement;
mod split;

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::netlist::{NetId, NetlistError};

pub use layers::{assign_layers, LayerAssignment, RoutedConnection, DEFAULT_THRESHOLDS};
pub use placement::{place, place_with, AnnealOptions, Placement};
pub use split::{
    recombine, recombine_lenient, split, BeolSecret, DanglingDriver, DanglingSink, FeolGate,
    FeolRole, FeolView,
};

/// Grid coordinates `(x, y)`; ports use `x = -1`.
pub type Site = (i64, i64);

/// Default fraction of sites occupied by cells.
pub const DEFAULT_UTILIZATION: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn sites(&self) -> usize {
        self.width * self.height
    }

    /// Smallest near-square grid holding `cells` at `utilization`.
    pub fn for_cells(cells: usize, utilization: f64) -> Grid {
        let sites = libm::ceil(cells.max(1) as f64 / utilization) as usize;
        let width = libm::ceil(libm::sqrt(sites as f64)) as usize;
        let height = sites.div_ceil(width);
        Grid { width, height }
    }

    pub fn contains(&self, (x, y): Site) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayoutMode {
    /// TIE cells are placed like any other cell and key-nets routed like
    /// any other net.
    #[default]
    Naive,
    /// TIE cells are scattered at random and key-nets lifted above the split.
    Secure,
}

impl LayoutMode {
    pub fn name(self) -> &'static str {
        match self {
            LayoutMode::Naive => "naive",
            LayoutMode::Secure => "secure",
        }
    }
}

impl fmt::Display for LayoutMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayoutMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(LayoutMode::Naive),
            "secure" => Ok(LayoutMode::Secure),
            _ => Err(format!("unknown layout mode `{s}`")),
        }
    }
}

/// Input slot of a gate; printed as `gate/slot`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SinkPin {
    pub gate: NetId,
    pub slot: usize,
}

impl SinkPin {
    pub fn new<S: Into<NetId>>(gate: S, slot: usize) -> SinkPin {
        SinkPin {
            gate: gate.into(),
            slot,
        }
    }
}

impl fmt::Display for SinkPin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.gate, self.slot)
    }
}

impl FromStr for SinkPin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (gate, slot) = s
            .rsplit_once('/')
            .ok_or_else(|| format!("sink pin `{s}` is not of the form gate/slot"))?;
        let slot = slot
            .parse()
            .map_err(|_| format!("sink pin `{s}` has a bad slot"))?;
        Ok(SinkPin::new(gate, slot))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("grid of {sites} sites cannot hold {cells} cells at the target utilization")]
    GridTooSmall { sites: usize, cells: usize },
    #[error("layer thresholds must be non-empty and strictly increasing")]
    InvalidThresholds,
    #[error("split layer {split} must lie in 1..{layers}")]
    SplitLayer { split: usize, layers: usize },
    #[error("gate `{0}` has no position")]
    MissingPosition(NetId),
    #[error("unknown pin `{0}`")]
    UnknownPin(String),
    #[error("sink `{0}` is bound more than once")]
    DoubleDriven(String),
    #[error("sink `{0}` is left unconnected")]
    UnboundSink(String),
    #[error("recombined netlist is invalid: {0}")]
    Netlist(#[from] NetlistError),
}

/// Manhattan distance, which is the HPWL of a two-pin connection.
pub fn hpwl(a: Site, b: Site) -> u64 {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Squared Euclidean distance.
pub fn distance2(a: Site, b: Site) -> u64 {
    let dx = a.0.abs_diff(b.0);
    let dy = a.1.abs_diff(b.1);
    dx * dx + dy * dy
}
