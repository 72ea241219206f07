//! Fault-injection logic locking for split manufacturing.
//!
//! The crate covers the whole flow on in-memory netlists: BENCH parsing,
//! simulation and failing-pattern enumeration, locking by stuck-at fault
//! injection with TIE-cell key bits, an abstract placement and layer model
//! with FEOL/BEOL splitting, proximity and random-key attacks, and the
//! CCR/HD/OER/PNR metrics. File formats and the command line live in the
//! `splitlock` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attack;
pub mod bench;
pub mod layout;
pub mod lock;
pub mod metrics;
pub mod netlist;
pub mod partition;
pub mod seed;
pub mod sim;

pub use attack::{proximity_attack, random_key_attack, AttackConfig, AttackError, InferredSecret};
pub use bench::{parse_bench, write_bench, BenchError};
pub use layout::{
    assign_layers, place, recombine, split, BeolSecret, FeolView, Grid, LayerAssignment, LayoutError,
    LayoutMode, Placement, SinkPin,
};
pub use lock::{apply_key, lock, lock_with, Key, KeyAssignment, LockConfig, LockError, LockedDesign};
pub use metrics::{ccr, evaluate, hamming_distance, hamming_distance_in, oer, oer_in, pnr, Ccr, MetricsError, MetricsReport};
pub use netlist::{Gate, GateKind, NetId, Netlist, NetlistError, Role};
pub use partition::{partition_random_balanced, Partition, PartitionError};
pub use sim::{
    check_equivalence, find_failing_patterns, simulate, simulate_faulty, EquivalenceVerdict,
    FailingPattern, Fault, InputSpace, SimError,
};
