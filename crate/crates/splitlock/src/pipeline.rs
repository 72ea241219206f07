//! End-to-end runs: lock, place, split, attack and score over a seed sweep.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use splitlock_core::attack::{proximity_attack, random_key_trial, trial_seed, AttackConfig};
use splitlock_core::layout::{
    assign_layers, place, recombine_lenient, split, BeolSecret, FeolView, Grid, LayoutMode,
    DEFAULT_THRESHOLDS, DEFAULT_UTILIZATION,
};
use splitlock_core::lock::{lock, LockedDesign};
use splitlock_core::metrics::{ccr, evaluate, oer, MetricsReport};
use splitlock_core::netlist::{Netlist, Role};
use splitlock_core::seed::{derive, stage};
use splitlock_core::sim::DEFAULT_SAMPLES;

use crate::formats::{
    write_atomic, write_json, write_netlist, BeolDoc, FeolDoc, GridDoc, InferredDoc, KeyDoc,
    LayoutDoc,
};

/// Serialized form of [`LayoutMode`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Naive,
    Secure,
}

impl From<Mode> for LayoutMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Naive => LayoutMode::Naive,
            Mode::Secure => LayoutMode::Secure,
        }
    }
}

impl From<LayoutMode> for Mode {
    fn from(m: LayoutMode) -> Self {
        match m {
            LayoutMode::Naive => Mode::Naive,
            LayoutMode::Secure => Mode::Secure,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackDoc {
    pub max_fanout_regular: usize,
    pub tie_capacity: usize,
    pub avoid_loops: bool,
    pub keygate_postprocess: bool,
}

impl Default for AttackDoc {
    fn default() -> Self {
        let c = AttackConfig::default();
        AttackDoc {
            max_fanout_regular: c.max_fanout_regular,
            tie_capacity: c.tie_capacity,
            avoid_loops: c.avoid_loops,
            keygate_postprocess: c.keygate_postprocess,
        }
    }
}

impl AttackDoc {
    pub fn with_seed(&self, seed: u64) -> AttackConfig {
        AttackConfig {
            max_fanout_regular: self.max_fanout_regular,
            tie_capacity: self.tie_capacity,
            avoid_loops: self.avoid_loops,
            keygate_postprocess: self.keygate_postprocess,
            seed,
        }
    }
}

/// Everything a pipeline run depends on; copied verbatim into the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub k: usize,
    /// Defaults to [`default_module_count`].
    pub module_count: Option<usize>,
    pub split_layers: Vec<usize>,
    pub modes: Vec<Mode>,
    /// Defaults to the smallest near-square grid at `utilization`.
    pub grid: Option<GridDoc>,
    pub utilization: f64,
    pub thresholds: Vec<u64>,
    pub attack: AttackDoc,
    /// Run `i` uses seed `seed + i`.
    pub seed: u64,
    pub seeds: usize,
    pub samples: usize,
    /// Random-key trials per run; 0 skips them.
    pub trials: usize,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, k: usize) -> PipelineConfig {
        PipelineConfig {
            input: input.into(),
            k,
            module_count: None,
            split_layers: vec![4],
            modes: vec![Mode::Secure],
            grid: None,
            utilization: DEFAULT_UTILIZATION,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            attack: AttackDoc::default(),
            seed: 0,
            seeds: 1,
            samples: DEFAULT_SAMPLES,
            trials: 0,
        }
    }

    pub fn run_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i))
    }
}

/// About two key bits per module, and at least four regular gates per module.
pub fn default_module_count(netlist: &Netlist, k: usize) -> usize {
    let regular = netlist.gates().iter().filter(|g| g.role == Role::Regular).count();
    k.div_ceil(2).clamp(1, (regular / 4).max(1))
}

pub fn default_grid(netlist: &Netlist, utilization: f64) -> Grid {
    Grid::for_cells(netlist.gate_count(), utilization)
}

/// Seeds of every stage of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub run: u64,
    pub lock: u64,
    pub place: u64,
    pub attack: u64,
    pub random_key: u64,
    pub metrics: u64,
}

impl StageSeeds {
    pub fn new(run: u64) -> StageSeeds {
        StageSeeds {
            run,
            lock: run,
            place: derive(run, stage::PLACE, 0),
            attack: derive(run, stage::ATTACK, 0),
            random_key: derive(run, stage::RANDOM_KEY, 0),
            metrics: derive(run, stage::METRICS, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub ccr_regular: f64,
    pub ccr_key_physical: f64,
    pub ccr_key_logical: f64,
    pub hd: f64,
    /// 100 if the recovered netlist is wrong on any examined input, else 0.
    pub oer: f64,
    pub pnr: f64,
}

impl From<&MetricsReport> for MetricsDoc {
    fn from(r: &MetricsReport) -> Self {
        MetricsDoc {
            ccr_regular: r.ccr_regular,
            ccr_key_physical: r.ccr_key_physical,
            ccr_key_logical: r.ccr_key_logical,
            hd: r.hd,
            oer: r.oer,
            pnr: r.pnr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomKeyDoc {
    pub trials: usize,
    /// Percentage of trials whose netlist is wrong somewhere.
    pub oer: f64,
    /// Trials that hit a TIE cell of the right value on every key-gate.
    pub full_key_recoveries: usize,
    pub mean_key_logical: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDoc {
    pub seed: u64,
    pub stage_seeds: StageSeeds,
    pub mode: Mode,
    pub split_layer: usize,
    pub module_count: usize,
    pub locked_gates: usize,
    pub broken_regular: usize,
    pub broken_key: usize,
    pub unresolved: usize,
    pub capacity_overflow: bool,
    pub metrics: MetricsDoc,
    pub random_key: Option<RandomKeyDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateDoc {
    pub mode: Mode,
    pub split_layer: usize,
    pub runs: usize,
    pub ccr_regular: f64,
    pub ccr_key_physical: f64,
    pub ccr_key_logical: f64,
    pub hd: f64,
    /// Percentage of runs with any output error.
    pub oer_aggregate: f64,
    pub pnr: f64,
    /// Percentage of random-key trials, pooled over runs, with any output error.
    pub random_key_oer: Option<f64>,
    pub random_key_full_recoveries: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub benchmark: String,
    pub config: PipelineConfig,
    pub runs: Vec<RunDoc>,
    pub aggregates: Vec<AggregateDoc>,
    pub notes: Vec<String>,
}

pub const REPORT_NOTES: [&str; 4] = [
    "broken sinks left unresolved by the attack are tied to constant 0 before simulation",
    "a CCR class with no broken connection is reported as 100",
    "pnr is the percentage of gate-input connections of the locked netlist that the recovered netlist reproduces",
    "per-run oer is 100 or 0; oer_aggregate is the percentage of runs with any output error",
];

pub const CSV_HEADER: [&str; 10] = [
    "benchmark",
    "mode",
    "split_layer",
    "seed",
    "ccr_regular",
    "ccr_key_phys",
    "ccr_key_log",
    "hd",
    "oer",
    "pnr",
];

pub fn report_csv(report: &Report) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("writes to memory");
    for r in &report.runs {
        let m = &r.metrics;
        w.serialize((
            &report.benchmark,
            r.mode,
            r.split_layer,
            r.seed,
            m.ccr_regular,
            m.ccr_key_physical,
            m.ccr_key_logical,
            m.hd,
            m.oer,
            m.pnr,
        ))
        .expect("writes to memory");
    }
    w.into_inner().expect("writes to memory")
}

/// Outcome of the random-key attack over `trials` guesses.
pub fn random_key_summary(
    design: &LockedDesign,
    feol: &FeolView,
    secret: &BeolSecret,
    trials: usize,
    seed: u64,
    tie_capacity: usize,
    samples: usize,
    oer_seed: u64,
) -> anyhow::Result<RandomKeyDoc> {
    anyhow::ensure!(trials >= 1, "at least one random-key trial is required");
    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> anyhow::Result<(bool, bool, f64)> {
            let guess = random_key_trial(feol, secret, tie_capacity, trial_seed(seed, i));
            let logical = ccr(secret, &guess, design)?.key_logical;
            let recovered = recombine_lenient(feol, &guess.edges)?;
            let wrong = oer(&design.netlist, &recovered, samples, oer_seed)?;
            Ok((wrong, logical == 100.0, logical))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let n = outcomes.len() as f64;
    Ok(RandomKeyDoc {
        trials,
        oer: 100.0 * outcomes.iter().filter(|o| o.0).count() as f64 / n,
        full_key_recoveries: outcomes.iter().filter(|o| o.1).count(),
        mean_key_logical: outcomes.iter().map(|o| o.2).sum::<f64>() / n,
    })
}

fn benchmark_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Directory of one run's files below the output root.
pub fn run_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

fn run_seed(
    netlist: &Netlist,
    config: &PipelineConfig,
    module_count: usize,
    seed: u64,
    out: Option<&Path>,
) -> anyhow::Result<Vec<RunDoc>> {
    let seeds = StageSeeds::new(seed);
    let design = lock(netlist, config.k, module_count, seeds.lock)?;
    let dir = out.map(|o| run_dir(o, seed));
    if let Some(dir) = &dir {
        write_netlist(&dir.join("locked.bench"), &design.netlist)?;
        write_json(&dir.join("key.json"), &KeyDoc::from_design(&design))?;
    }
    let grid = config
        .grid
        .map(Grid::from)
        .unwrap_or_else(|| default_grid(&design.netlist, config.utilization));

    let mut runs = Vec::new();
    for &mode in &config.modes {
        let placement = place(&design.netlist, grid, seeds.place, mode.into())?;
        for &split_layer in &config.split_layers {
            let layers = assign_layers(&placement, &design.netlist, &config.thresholds, split_layer, mode.into())?;
            let (feol, beol) = split(&design.netlist, &placement, &layers, split_layer)?;
            let inferred = proximity_attack(&feol, &config.attack.with_seed(seeds.attack))?;
            let report = evaluate(&design, &feol, &beol, &inferred, config.samples, seeds.metrics)?;
            let random_key = if config.trials > 0 {
                Some(random_key_summary(
                    &design,
                    &feol,
                    &beol,
                    config.trials,
                    seeds.random_key,
                    config.attack.tie_capacity,
                    config.samples,
                    seeds.metrics,
                )?)
            } else {
                None
            };
            if let Some(dir) = &dir {
                let sub = dir.join(LayoutMode::from(mode).name()).join(format!("split-{split_layer}"));
                write_json(&sub.join("layout.json"), &LayoutDoc::new(&placement, &layers))?;
                write_json(&sub.join("feol.json"), &FeolDoc::from(&feol))?;
                write_json(&sub.join("beol.json"), &BeolDoc::from(&beol))?;
                write_json(&sub.join("inferred.json"), &InferredDoc::from(&inferred))?;
            }
            let broken_key = design
                .key
                .assignments
                .iter()
                .filter(|a| feol.sink(&splitlock_core::layout::SinkPin::new(a.key_gate.clone(), a.slot)).is_some())
                .count();
            runs.push(RunDoc {
                seed,
                stage_seeds: seeds,
                mode,
                split_layer,
                module_count,
                locked_gates: design.netlist.gate_count(),
                broken_regular: beol.edges.len() - broken_key,
                broken_key,
                unresolved: inferred.unresolved.len(),
                capacity_overflow: inferred.capacity_overflow,
                metrics: (&report).into(),
                random_key,
            });
        }
    }
    Ok(runs)
}

fn aggregate(runs: &[RunDoc], config: &PipelineConfig) -> Vec<AggregateDoc> {
    let mut out = Vec::new();
    for &mode in &config.modes {
        for &split_layer in &config.split_layers {
            let group: Vec<&RunDoc> = runs
                .iter()
                .filter(|r| r.mode == mode && r.split_layer == split_layer)
                .collect();
            if group.is_empty() {
                continue;
            }
            let n = group.len() as f64;
            let mean = |f: fn(&MetricsDoc) -> f64| group.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
            let rk: Vec<&RandomKeyDoc> = group.iter().filter_map(|r| r.random_key.as_ref()).collect();
            let (random_key_oer, random_key_full_recoveries) = if rk.is_empty() {
                (None, None)
            } else {
                let trials: usize = rk.iter().map(|r| r.trials).sum();
                let wrong: f64 = rk.iter().map(|r| r.oer * r.trials as f64 / 100.0).sum();
                (
                    Some(100.0 * wrong / trials as f64),
                    Some(rk.iter().map(|r| r.full_key_recoveries).sum()),
                )
            };
            out.push(AggregateDoc {
                mode,
                split_layer,
                runs: group.len(),
                ccr_regular: mean(|m| m.ccr_regular),
                ccr_key_physical: mean(|m| m.ccr_key_physical),
                ccr_key_logical: mean(|m| m.ccr_key_logical),
                hd: mean(|m| m.hd),
                oer_aggregate: 100.0 * group.iter().filter(|r| r.metrics.oer > 0.0).count() as f64 / n,
                pnr: mean(|m| m.pnr),
                random_key_oer,
                random_key_full_recoveries,
            });
        }
    }
    out
}

/// Runs the whole flow for every seed. With `out` set, every intermediate
/// file and the report are written below it.
pub fn run_pipeline(netlist: &Netlist, config: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<Report> {
    anyhow::ensure!(config.seeds >= 1, "at least one seed is required");
    anyhow::ensure!(!config.modes.is_empty(), "at least one layout mode is required");
    anyhow::ensure!(!config.split_layers.is_empty(), "at least one split layer is required");
    let module_count = config
        .module_count
        .unwrap_or_else(|| default_module_count(netlist, config.k));
    let seeds: Vec<u64> = config.run_seeds().collect();
    let per_seed = seeds
        .par_iter()
        .map(|&s| run_seed(netlist, config, module_count, s, out))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let runs: Vec<RunDoc> = per_seed.into_iter().flatten().collect();
    let report = Report {
        benchmark: benchmark_name(&config.input),
        aggregates: aggregate(&runs, config),
        config: config.clone(),
        runs,
        notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
    };
    if let Some(out) = out {
        write_json(&out.join("report.json"), &report)?;
        write_atomic(&out.join("report.csv"), &report_csv(&report))?;
    }
    Ok(report)
}
