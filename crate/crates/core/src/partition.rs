//! Random, balanced partitioning of the regular gates of a netlist.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::netlist::{Driver, NetId, Netlist, Role};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub index: usize,
    /// Gate ids in topological order of the source netlist.
    pub gates: Vec<NetId>,
    pub boundary_inputs: Vec<NetId>,
    pub boundary_outputs: Vec<NetId>,
}

impl Partition {
    pub fn contains(&self, gate: &str) -> bool {
        self.gates.iter().any(|g| g == gate)
    }

    /// The module as a standalone circuit over its boundary nets.
    pub fn module_netlist(&self, netlist: &Netlist) -> Netlist {
        netlist.extract(
            &format!("{}_m{}", netlist.name(), self.index),
            &self.gate_indices(netlist),
            None,
        )
    }

    pub fn gate_indices(&self, netlist: &Netlist) -> BTreeSet<usize> {
        self.gates
            .iter()
            .filter_map(|g| netlist.gate_index(g))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("module count {count} outside 1..={gates}")]
    ModuleCount { count: usize, gates: usize },
}

/// Splits the regular gates into `module_count` modules.
///
/// The gates are laid out in a seeded random topological order and cut into
/// contiguous chunks whose sizes differ by at most one. Chunks of a
/// topological order are convex: no path leaves a module and comes back.
pub fn partition_random_balanced(
    netlist: &Netlist,
    module_count: usize,
    seed: u64,
) -> Result<Vec<Partition>, PartitionError> {
    let regular: Vec<usize> = (0..netlist.gate_count())
        .filter(|&g| netlist.gates()[g].role == Role::Regular)
        .collect();
    if module_count == 0 || module_count > regular.len() {
        return Err(PartitionError::ModuleCount {
            count: module_count,
            gates: regular.len(),
        });
    }
    let order = random_topological_order(netlist, &regular, seed);
    let base = order.len() / module_count;
    let extra = order.len() % module_count;
    let mut partitions = Vec::with_capacity(module_count);
    let mut start = 0;
    for index in 0..module_count {
        let size = base + usize::from(index < extra);
        let chunk: BTreeSet<usize> = order[start..start + size].iter().copied().collect();
        start += size;
        let module = netlist.extract("", &chunk, None);
        partitions.push(Partition {
            index,
            gates: module.gates().iter().map(|g| g.output.clone()).collect(),
            boundary_inputs: module.inputs().to_vec(),
            boundary_outputs: module.outputs().to_vec(),
        });
    }
    Ok(partitions)
}

fn random_topological_order(netlist: &Netlist, gates: &[usize], seed: u64) -> Vec<usize> {
    let selected: BTreeSet<usize> = gates.iter().copied().collect();
    let mut pending = alloc::vec![0usize; netlist.gate_count()];
    let mut consumers: Vec<Vec<usize>> = alloc::vec![Vec::new(); netlist.gate_count()];
    for &g in gates {
        for net in &netlist.gates()[g].inputs {
            if let Some(Driver::Gate(d)) = netlist.driver(net) {
                if selected.contains(&d) {
                    pending[g] += 1;
                    consumers[d].push(g);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ready: Vec<usize> = gates.iter().copied().filter(|&g| pending[g] == 0).collect();
    let mut order = Vec::with_capacity(gates.len());
    while !ready.is_empty() {
        let g = ready.swap_remove(rng.gen_range(0..ready.len()));
        order.push(g);
        for &c in &consumers[g] {
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.push(c);
            }
        }
    }
    order
}
