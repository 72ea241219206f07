//! FEOL-only adversaries.
//!
//! The proximity attack reconnects every dangling sink to a nearby dangling
//! driver; the random-key attack assumes all regular nets are known and
//! only guesses which TIE cell feeds which key-gate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::layout::{distance2, BeolSecret, FeolRole, FeolView, SinkPin};
use crate::netlist::NetId;
use crate::seed::{derive, stage};

/// Cap on the total fanout of a regular driver; covers every driver of the
/// bundled benchmarks.
pub const DEFAULT_MAX_FANOUT: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AttackConfig {
    pub max_fanout_regular: usize,
    /// Sinks one TIE cell may drive.
    pub tie_capacity: usize,
    pub avoid_loops: bool,
    pub keygate_postprocess: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            max_fanout_regular: DEFAULT_MAX_FANOUT,
            tie_capacity: 1,
            avoid_loops: true,
            keygate_postprocess: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InferredSecret {
    /// `(driver, sink)`, sorted by sink; each sink at most once.
    pub edges: Vec<(NetId, SinkPin)>,
    /// Sorted.
    pub unresolved: Vec<SinkPin>,
    /// Some key input had to reuse a TIE cell beyond its capacity.
    pub capacity_overflow: bool,
}

impl InferredSecret {
    pub fn driver_of(&self, sink: &SinkPin) -> Option<&NetId> {
        self.edges
            .binary_search_by(|(_, s)| s.cmp(sink))
            .ok()
            .map(|i| &self.edges[i].0)
    }

    fn normalize(&mut self) {
        self.edges.sort_by(|a, b| a.1.cmp(&b.1));
        self.unresolved.sort();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AttackError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error("attack parameters must be at least 1")]
    Config,
}

/// Greedy global-nearest matching of dangling sinks to dangling drivers.
///
/// Candidate pairs are visited by squared distance, then sink, then driver.
/// A pair is taken while the sink is free, the driver has capacity left and,
/// with `avoid_loops`, the edge closes no combinational cycle. TIE cells
/// are only offered to key inputs: the attacker knows they feed nothing else.
pub fn proximity_attack(feol: &FeolView, config: &AttackConfig) -> Result<InferredSecret, AttackError> {
    if config.max_fanout_regular == 0 || config.tie_capacity == 0 {
        return Err(AttackError::Config);
    }
    let key_sinks: BTreeSet<&SinkPin> = feol
        .dangling_sinks
        .iter()
        .filter(|s| s.is_key_input(feol))
        .map(|s| &s.pin)
        .collect();

    let mut capacity: Vec<usize> = feol
        .dangling_drivers
        .iter()
        .map(|d| match d.role {
            FeolRole::TieCell => config.tie_capacity,
            _ => config.max_fanout_regular.saturating_sub(d.visible_fanout),
        })
        .collect();

    let mut pairs = Vec::new();
    for (si, sink) in feol.dangling_sinks.iter().enumerate() {
        let is_key = key_sinks.contains(&sink.pin);
        for (di, driver) in feol.dangling_drivers.iter().enumerate() {
            if driver.role == FeolRole::TieCell && !is_key {
                continue;
            }
            pairs.push((distance2(sink.position, driver.position), si, di));
        }
    }
    // sinks and drivers are already sorted by pin, so index order is pin order
    pairs.sort_unstable();

    let mut graph = FaninGraph::new(feol);
    let mut chosen: Vec<Option<usize>> = alloc::vec![None; feol.dangling_sinks.len()];
    let mut open = chosen.len();
    for (_, si, di) in pairs {
        if open == 0 {
            break;
        }
        if chosen[si].is_some() || capacity[di] == 0 {
            continue;
        }
        let sink = &feol.dangling_sinks[si].pin;
        let driver = &feol.dangling_drivers[di];
        if config.avoid_loops && driver.kind.is_some() && graph.reaches(&driver.pin, &sink.gate) {
            continue;
        }
        graph.add(&sink.gate, &driver.pin);
        chosen[si] = Some(di);
        capacity[di] -= 1;
        open -= 1;
    }

    let mut inferred = InferredSecret::default();
    for (si, c) in chosen.into_iter().enumerate() {
        let pin = feol.dangling_sinks[si].pin.clone();
        match c {
            Some(di) => inferred.edges.push((feol.dangling_drivers[di].pin.clone(), pin)),
            None => inferred.unresolved.push(pin),
        }
    }
    inferred.normalize();
    if config.keygate_postprocess {
        inferred = postprocess_keygates(inferred, feol, config.tie_capacity, config.seed);
    }
    Ok(inferred)
}

/// Connectivity known to the attacker, walked backwards for loop checks.
struct FaninGraph<'a> {
    fanin: BTreeMap<&'a str, Vec<&'a str>>,
}

impl<'a> FaninGraph<'a> {
    fn new(feol: &'a FeolView) -> Self {
        let fanin = feol
            .gates
            .iter()
            .map(|g| (g.id.as_str(), g.inputs.iter().flatten().map(|n| n.as_str()).collect()))
            .collect();
        FaninGraph { fanin }
    }

    fn add(&mut self, gate: &'a str, driver: &'a str) {
        self.fanin.entry(gate).or_default().push(driver);
    }

    /// Whether `target` lies in the fanin cone of `from`.
    fn reaches(&self, from: &str, target: &str) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = alloc::vec![from];
        while let Some(net) = stack.pop() {
            if net == target {
                return true;
            }
            if !seen.insert(net) {
                continue;
            }
            if let Some(ins) = self.fanin.get(net) {
                stack.extend(ins.iter().copied());
            }
        }
        false
    }
}

fn tie_pins(feol: &FeolView) -> Vec<&NetId> {
    feol.dangling_drivers
        .iter()
        .filter(|d| d.role == FeolRole::TieCell)
        .map(|d| &d.pin)
        .collect()
}

/// Rewires every key input that is unresolved or driven by something other
/// than a TIE cell to a uniformly random TIE cell with capacity left.
pub fn postprocess_keygates(
    mut inferred: InferredSecret,
    feol: &FeolView,
    tie_capacity: usize,
    seed: u64,
) -> InferredSecret {
    let ties = tie_pins(feol);
    if ties.is_empty() {
        return inferred;
    }
    let mut used: BTreeMap<&str, usize> = BTreeMap::new();
    for (d, _) in &inferred.edges {
        if feol.is_tie(d) {
            *used.entry(d.as_str()).or_default() += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assigned = Vec::new();
    for sink in feol.dangling_sinks.iter().filter(|s| s.is_key_input(feol)) {
        if inferred.driver_of(&sink.pin).is_some_and(|d| feol.is_tie(d)) {
            continue;
        }
        let free: Vec<&NetId> = ties
            .iter()
            .copied()
            .filter(|t| used.get(t.as_str()).copied().unwrap_or(0) < tie_capacity)
            .collect();
        let tie = if free.is_empty() {
            inferred.capacity_overflow = true;
            ties[rng.gen_range(0..ties.len())]
        } else {
            free[rng.gen_range(0..free.len())]
        };
        *used.entry(tie.as_str()).or_default() += 1;
        assigned.push((tie.clone(), sink.pin.clone()));
    }
    let rewired: BTreeSet<&SinkPin> = assigned.iter().map(|(_, s)| s).collect();
    inferred.edges.retain(|(_, s)| !rewired.contains(s));
    inferred.unresolved.retain(|s| !rewired.contains(s));
    inferred.edges.extend(assigned);
    inferred.normalize();
    inferred
}

/// One trial of the random-key attack: the true regular connections plus a
/// uniformly random assignment of TIE cells to key inputs.
pub fn random_key_trial(feol: &FeolView, secret: &BeolSecret, tie_capacity: usize, seed: u64) -> InferredSecret {
    let key_sinks: Vec<&SinkPin> = feol
        .dangling_sinks
        .iter()
        .filter(|s| s.is_key_input(feol))
        .map(|s| &s.pin)
        .collect();
    let mut pool: Vec<&NetId> = tie_pins(feol)
        .into_iter()
        .flat_map(|t| core::iter::repeat_n(t, tie_capacity))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);

    let keyed: BTreeSet<&SinkPin> = key_sinks.iter().copied().collect();
    let mut inferred = InferredSecret::default();
    for (d, s) in &secret.edges {
        if !keyed.contains(s) {
            inferred.edges.push((d.clone(), s.clone()));
        }
    }
    for (i, sink) in key_sinks.into_iter().enumerate() {
        match pool.get(i) {
            Some(tie) => inferred.edges.push(((*tie).clone(), sink.clone())),
            None => inferred.unresolved.push(sink.clone()),
        }
    }
    inferred.normalize();
    inferred
}

/// Seed of trial `index` of a random-key attack seeded with `seed`.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    derive(seed, stage::RANDOM_KEY, index)
}

/// Lazily yields `trials` random-key guesses.
pub fn random_key_trials<'a>(
    feol: &'a FeolView,
    secret: &'a BeolSecret,
    trials: usize,
    seed: u64,
    tie_capacity: usize,
) -> Result<impl Iterator<Item = InferredSecret> + 'a, AttackError> {
    if trials == 0 {
        return Err(AttackError::NoTrials);
    }
    if tie_capacity == 0 {
        return Err(AttackError::Config);
    }
    Ok((0..trials as u64).map(move |i| random_key_trial(feol, secret, tie_capacity, trial_seed(seed, i))))
}

pub fn random_key_attack(
    feol: &FeolView,
    secret: &BeolSecret,
    trials: usize,
    seed: u64,
    tie_capacity: usize,
) -> Result<Vec<InferredSecret>, AttackError> {
    Ok(random_key_trials(feol, secret, trials, seed, tie_capacity)?.collect())
}

/// Whether `inferred` respects the fanout caps and, if asked, is acyclic
/// together with the visible connections.
pub fn check_inferred(feol: &FeolView, inferred: &InferredSecret, config: &AttackConfig) -> Result<(), NetId> {
    let mut load: BTreeMap<&str, usize> = BTreeMap::new();
    for (d, _) in &inferred.edges {
        *load.entry(d.as_str()).or_default() += 1;
    }
    for d in &feol.dangling_drivers {
        let used = load.get(d.pin.as_str()).copied().unwrap_or(0);
        let cap = match d.role {
            FeolRole::TieCell => config.tie_capacity,
            _ => config.max_fanout_regular.saturating_sub(d.visible_fanout),
        };
        if used > cap {
            return Err(d.pin.clone());
        }
    }
    if config.avoid_loops {
        let mut graph = FaninGraph::new(feol);
        for (d, s) in &inferred.edges {
            graph.add(&s.gate, d);
        }
        for (_, s) in &inferred.edges {
            let g = feol.gate(&s.gate).expect("sink gate exists");
            let mut seen = BTreeSet::new();
            let mut stack: Vec<&str> = graph.fanin[g.id.as_str()].clone();
            while let Some(net) = stack.pop() {
                if net == g.id {
                    return Err(g.id.clone());
                }
                if seen.insert(net) {
                    if let Some(ins) = graph.fanin.get(net) {
                        stack.extend(ins.iter().copied());
                    }
                }
            }
        }
    }
    Ok(())
}
