//! Simulated-annealing placement minimizing total two-pin HPWL.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netlist::{Driver, NetId, Netlist, Role};

use super::{hpwl, Grid, LayoutError, LayoutMode, Site, DEFAULT_UTILIZATION};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub grid: Grid,
    pub positions: BTreeMap<NetId, Site>,
    /// Cells excluded from annealing (the TIE cells in secure mode).
    pub fixed: BTreeSet<NetId>,
}

impl Placement {
    pub fn position(&self, gate: &str) -> Option<Site> {
        self.positions.get(gate).copied()
    }

    /// Port of primary input `index` out of `count`, on the left edge.
    pub fn port(&self, index: usize, count: usize) -> Site {
        let y = ((2 * index + 1) * self.grid.height) / (2 * count.max(1));
        (-1, y as i64)
    }

    /// Position of whatever drives `net`: a cell or an input port.
    pub fn driver_position(&self, netlist: &Netlist, net: &str) -> Option<Site> {
        match netlist.driver(net)? {
            Driver::Input(i) => Some(self.port(i, netlist.inputs().len())),
            Driver::Gate(_) => self.position(net),
        }
    }

    /// No shared sites and everything on the grid.
    pub fn is_legal(&self) -> bool {
        let mut used = BTreeSet::new();
        self.positions
            .values()
            .all(|&s| self.grid.contains(s) && used.insert(s))
    }

    /// Sum of the HPWL of every connection, optionally skipping those
    /// driven by TIE cells.
    pub fn wirelength(&self, netlist: &Netlist, skip_ties: bool) -> u64 {
        let mut total = 0;
        for gate in netlist.gates() {
            let Some(sink) = self.position(&gate.output) else { continue };
            for net in &gate.inputs {
                if skip_ties && netlist.gate(net).is_some_and(|d| d.role == Role::TieCell) {
                    continue;
                }
                if let Some(src) = self.driver_position(netlist, net) {
                    total += hpwl(src, sink);
                }
            }
        }
        total
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnealOptions {
    pub utilization: f64,
    /// Geometric cooling factor.
    pub cooling: f64,
    /// Moves per temperature, per movable cell.
    pub moves_per_cell: usize,
    /// Target share of uphill moves accepted at the start temperature.
    pub initial_acceptance: f64,
    /// Stop once fewer moves than this share are accepted.
    pub min_acceptance: f64,
    pub max_temperatures: usize,
}

impl Default for AnnealOptions {
    fn default() -> Self {
        AnnealOptions {
            utilization: DEFAULT_UTILIZATION,
            cooling: 0.95,
            moves_per_cell: 100,
            initial_acceptance: 0.5,
            min_acceptance: 0.002,
            max_temperatures: 400,
        }
    }
}

#[derive(Clone, Copy)]
enum End {
    Cell(usize),
    Fixed(Site),
}

struct Annealer {
    grid: Grid,
    pos: Vec<Site>,
    site: Vec<Option<usize>>,
    movable: Vec<usize>,
    fixed: Vec<bool>,
    adj: Vec<Vec<End>>,
}

impl Annealer {
    fn index(&self, (x, y): Site) -> usize {
        y as usize * self.grid.width + x as usize
    }

    fn cost(&self, c: usize) -> u64 {
        let p = self.pos[c];
        self.adj[c]
            .iter()
            .map(|e| match *e {
                End::Cell(o) => hpwl(p, self.pos[o]),
                End::Fixed(s) => hpwl(p, s),
            })
            .sum()
    }

    /// Moves `a` to `target`, swapping with its occupant. Returns the
    /// swapped cell, or `Err` if the target holds a fixed cell.
    fn apply(&mut self, a: usize, target: Site) -> Result<Option<usize>, ()> {
        let from = self.pos[a];
        let ti = self.index(target);
        let fi = self.index(from);
        let other = self.site[ti];
        if let Some(b) = other {
            if self.fixed[b] {
                return Err(());
            }
            self.pos[b] = from;
        }
        self.site[fi] = other;
        self.site[ti] = Some(a);
        self.pos[a] = target;
        Ok(other)
    }

    fn local_cost(&self, a: usize, b: Option<usize>) -> i64 {
        (self.cost(a) + b.map_or(0, |b| self.cost(b))) as i64
    }

    fn random_target(&self, rng: &mut ChaCha8Rng, a: usize, radius: usize) -> Site {
        let (x, y) = self.pos[a];
        let r = radius as i64;
        let lo_x = (x - r).max(0);
        let hi_x = (x + r).min(self.grid.width as i64 - 1);
        let lo_y = (y - r).max(0);
        let hi_y = (y + r).min(self.grid.height as i64 - 1);
        (rng.gen_range(lo_x..=hi_x), rng.gen_range(lo_y..=hi_y))
    }

    /// Tries one move; returns the cost change if it was applied.
    fn propose(&mut self, rng: &mut ChaCha8Rng, radius: usize) -> Option<(usize, Site, i64)> {
        let a = *self.movable.choose(rng)?;
        let target = self.random_target(rng, a, radius);
        if target == self.pos[a] {
            return None;
        }
        let b = self.site[self.index(target)];
        if b.is_some_and(|b| self.fixed[b]) {
            return None;
        }
        let before = self.local_cost(a, b);
        let from = self.pos[a];
        let b = self.apply(a, target).ok()?;
        let after = self.local_cost(a, b);
        Some((a, from, after - before))
    }

    fn undo(&mut self, a: usize, from: Site) {
        let _ = self.apply(a, from);
    }
}

/// [`place_with`] using the default annealing schedule.
pub fn place(netlist: &Netlist, grid: Grid, seed: u64, mode: LayoutMode) -> Result<Placement, LayoutError> {
    place_with(netlist, grid, seed, mode, &AnnealOptions::default())
}

/// Places every gate of `netlist` on `grid`.
///
/// In secure mode the TIE cells are detached from their key-gates, put on
/// uniformly random sites and fixed before the rest is annealed.
pub fn place_with(
    netlist: &Netlist,
    grid: Grid,
    seed: u64,
    mode: LayoutMode,
    options: &AnnealOptions,
) -> Result<Placement, LayoutError> {
    let cells = netlist.gate_count();
    let needed = libm::ceil(cells as f64 / options.utilization) as usize;
    if grid.sites() < needed || grid.sites() < cells {
        return Err(LayoutError::GridTooSmall {
            sites: grid.sites(),
            cells,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates = netlist.gates();
    let is_tie: Vec<bool> = gates.iter().map(|g| g.role == Role::TieCell).collect();
    let fixed: Vec<bool> = is_tie.iter().map(|&t| t && mode == LayoutMode::Secure).collect();

    let mut free: Vec<Site> = (0..grid.height as i64)
        .flat_map(|y| (0..grid.width as i64).map(move |x| (x, y)))
        .collect();
    free.shuffle(&mut rng);
    let mut pos = alloc::vec![(0, 0); cells];
    // fixed cells first, so their sites are uniform over the whole die
    let mut order: Vec<usize> = (0..cells).filter(|&c| fixed[c]).collect();
    order.extend((0..cells).filter(|&c| !fixed[c]));
    for (c, s) in order.into_iter().zip(free.iter()) {
        pos[c] = *s;
    }

    let n_inputs = netlist.inputs().len();
    let probe = Placement {
        grid,
        positions: BTreeMap::new(),
        fixed: BTreeSet::new(),
    };
    let mut adj: Vec<Vec<End>> = alloc::vec![Vec::new(); cells];
    for (g, gate) in gates.iter().enumerate() {
        for net in &gate.inputs {
            match netlist.driver(net) {
                Some(Driver::Input(i)) => adj[g].push(End::Fixed(probe.port(i, n_inputs))),
                Some(Driver::Gate(d)) => {
                    if is_tie[d] && mode == LayoutMode::Secure {
                        continue;
                    }
                    adj[g].push(End::Cell(d));
                    adj[d].push(End::Cell(g));
                }
                None => {}
            }
        }
    }
    let mut site = alloc::vec![None; grid.sites()];
    for (c, &p) in pos.iter().enumerate() {
        site[p.1 as usize * grid.width + p.0 as usize] = Some(c);
    }
    let mut annealer = Annealer {
        grid,
        pos,
        site,
        movable: (0..cells).filter(|&c| !fixed[c]).collect(),
        fixed,
        adj,
    };
    anneal(&mut annealer, &mut rng, options);

    let positions = gates
        .iter()
        .zip(&annealer.pos)
        .map(|(g, &p)| (g.output.clone(), p))
        .collect();
    let fixed = gates
        .iter()
        .zip(&annealer.fixed)
        .filter(|(_, &f)| f)
        .map(|(g, _)| g.output.clone())
        .collect();
    Ok(Placement {
        grid,
        positions,
        fixed,
    })
}

fn anneal(a: &mut Annealer, rng: &mut ChaCha8Rng, options: &AnnealOptions) {
    let n = a.movable.len();
    if n == 0 {
        return;
    }
    let max_radius = a.grid.width.max(a.grid.height);

    // start temperature: accept the mean uphill move with the target odds
    let mut uphill = 0i64;
    let mut count = 0i64;
    for _ in 0..(10 * n).max(100) {
        if let Some((cell, from, delta)) = a.propose(rng, max_radius) {
            if delta > 0 {
                uphill += delta;
                count += 1;
            }
            a.undo(cell, from);
        }
    }
    if count == 0 {
        return;
    }
    let mean = uphill as f64 / count as f64;
    let mut temperature = -mean / libm::log(options.initial_acceptance);
    let mut radius = max_radius as f64;
    let moves = options.moves_per_cell * n;

    for _ in 0..options.max_temperatures {
        let mut accepted = 0usize;
        let r = libm::round(radius).max(1.0) as usize;
        for _ in 0..moves {
            let Some((cell, from, delta)) = a.propose(rng, r) else { continue };
            if delta <= 0 || rng.gen::<f64>() < libm::exp(-(delta as f64) / temperature) {
                accepted += 1;
            } else {
                a.undo(cell, from);
            }
        }
        let rate = accepted as f64 / moves as f64;
        if rate < options.min_acceptance {
            break;
        }
        // keep about 44% of moves accepted by shrinking the move window
        radius = (radius * (1.0 - 0.44 + rate)).clamp(1.0, max_radius as f64);
        temperature *= options.cooling;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::parse_bench;

    #[test]
    fn two_gate_chain_ends_up_adjacent() {
        let n = parse_bench("INPUT(a)\nOUTPUT(z)\ny = NOT(a)\nz = NOT(y)\n").unwrap();
        let grid = Grid { width: 10, height: 10 };
        for seed in 0..5 {
            let p = place(&n, grid, seed, LayoutMode::Naive).unwrap();
            assert!(p.is_legal());
            let d = hpwl(p.position("y").unwrap(), p.position("z").unwrap());
            assert!(d <= 3, "seed {seed}: distance {d}");
        }
    }

    #[test]
    fn grid_too_small() {
        let n = parse_bench(include_str!("../../../../benchmarks/c17.bench")).unwrap();
        assert_eq!(
            place(&n, Grid { width: 2, height: 4 }, 0, LayoutMode::Naive),
            Err(LayoutError::GridTooSmall { sites: 8, cells: 6 })
        );
    }

    #[test]
    fn annealing_shortens_wires() {
        let n = parse_bench(include_str!("../../../../benchmarks/c432.bench")).unwrap();
        let grid = Grid::for_cells(n.gate_count(), DEFAULT_UTILIZATION);
        let cold = AnnealOptions {
            max_temperatures: 0,
            ..AnnealOptions::default()
        };
        let random = place_with(&n, grid, 3, LayoutMode::Naive, &cold).unwrap();
        let annealed = place(&n, grid, 3, LayoutMode::Naive).unwrap();
        assert!(annealed.is_legal());
        assert!(annealed.wirelength(&n, false) * 2 < random.wirelength(&n, false));
        assert_eq!(annealed, place(&n, grid, 3, LayoutMode::Naive).unwrap());
    }
}
