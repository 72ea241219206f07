use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use splitlock::core::attack::proximity_attack;
use splitlock::core::layout::{assign_layers, place, split, Grid, LayoutMode, DEFAULT_THRESHOLDS, DEFAULT_UTILIZATION};
use splitlock::core::lock::lock;
use splitlock::core::metrics::evaluate;
use splitlock::core::seed::{derive, stage};
use splitlock::core::sim::DEFAULT_SAMPLES;
use splitlock::formats::{
    read_bench, read_json, to_json, write_atomic, write_json, write_netlist, BeolDoc, FeolDoc,
    GridDoc, InferredDoc, KeyDoc, LayoutDoc,
};
use splitlock::pipeline::{
    default_grid, default_module_count, report_csv, run_pipeline, AttackDoc, MetricsDoc, Mode,
    PipelineConfig, StageSeeds, REPORT_NOTES,
};

#[derive(Parser)]
#[command(name = "splitlock", version, about = "Lock, lay out, split, attack and score combinational netlists")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lock a BENCH netlist; writes locked.bench and key.json.
    Lock(LockArgs),
    /// Place a locked netlist and assign routing layers.
    Layout(LayoutArgs),
    /// Split a laid-out design into feol.json and beol.json.
    Split(SplitArgs),
    /// Run the proximity attack on a FEOL view.
    Attack(AttackArgs),
    /// Score an attack result.
    Eval(EvalArgs),
    /// Run every stage over a seed sweep and write a report.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct LockArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 128)]
    k: usize,
    /// Number of partitions; defaults to about two key bits per partition.
    #[arg(long)]
    modules: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_grid(s: &str) -> Result<GridDoc, String> {
    let (w, h) = s.split_once('x').ok_or("grid must look like WIDTHxHEIGHT")?;
    let width = w.parse().map_err(|_| "bad grid width")?;
    let height = h.parse().map_err(|_| "bad grid height")?;
    Ok(GridDoc { width, height })
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<LayoutMode>().map(Mode::from)
}

#[derive(Args)]
struct PhysicalArgs {
    /// Highest metal layer kept in the FEOL.
    #[arg(long = "split", default_value_t = 4)]
    split_layer: usize,
    #[arg(long, default_value = "secure", value_parser = parse_mode)]
    mode: Mode,
    /// Placement grid as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridDoc>,
    #[arg(long, default_value_t = DEFAULT_UTILIZATION)]
    utilization: f64,
    /// Per-layer HPWL bounds, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
    thresholds: Vec<u64>,
}

#[derive(Args)]
struct LayoutArgs {
    #[arg(long)]
    locked: PathBuf,
    #[command(flatten)]
    physical: PhysicalArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    locked: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct AttackFlags {
    #[arg(long, default_value_t = AttackDoc::default().max_fanout_regular)]
    max_fanout: usize,
    #[arg(long, default_value_t = 1)]
    tie_capacity: usize,
    /// Let the attack close combinational loops.
    #[arg(long)]
    allow_loops: bool,
    /// Keep key inputs matched to non-TIE drivers as they are.
    #[arg(long)]
    no_postprocess: bool,
}

impl From<AttackFlags> for AttackDoc {
    fn from(f: AttackFlags) -> Self {
        AttackDoc {
            max_fanout_regular: f.max_fanout,
            tie_capacity: f.tie_capacity,
            avoid_loops: !f.allow_loops,
            keygate_postprocess: !f.no_postprocess,
        }
    }
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    feol: PathBuf,
    #[command(flatten)]
    flags: AttackFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    locked: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    feol: PathBuf,
    #[arg(long)]
    beol: PathBuf,
    #[arg(long)]
    inferred: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write a one-row CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 128)]
    k: usize,
    #[arg(long)]
    modules: Option<usize>,
    /// Split layers, comma separated.
    #[arg(long = "split", value_delimiter = ',', default_value = "4")]
    split_layers: Vec<usize>,
    /// Layout modes, comma separated.
    #[arg(long = "mode", value_delimiter = ',', default_value = "secure", value_parser = parse_mode)]
    modes: Vec<Mode>,
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridDoc>,
    #[arg(long, default_value_t = DEFAULT_UTILIZATION)]
    utilization: f64,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
    thresholds: Vec<u64>,
    #[command(flatten)]
    attack: AttackFlags,
    /// First seed of the sweep.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Random-key trials per run.
    #[arg(long, default_value_t = 0)]
    trials: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn cmd_lock(a: LockArgs) -> Result<()> {
    let netlist = read_bench(&a.input)?;
    let modules = a.modules.unwrap_or_else(|| default_module_count(&netlist, a.k));
    let design = lock(&netlist, a.k, modules, a.seed)
        .with_context(|| format!("locking {} with k={} over {modules} modules", a.input.display(), a.k))?;
    write_netlist(&a.out_dir.join("locked.bench"), &design.netlist)?;
    write_json(&a.out_dir.join("key.json"), &KeyDoc::from_design(&design))?;
    println!(
        "locked {} gates -> {} gates, k={}, {modules} modules",
        netlist.gate_count(),
        design.netlist.gate_count(),
        design.k()
    );
    Ok(())
}

fn cmd_layout(a: LayoutArgs) -> Result<()> {
    let netlist = read_bench(&a.locked)?;
    let p = &a.physical;
    let grid = p.grid.map(Grid::from).unwrap_or_else(|| default_grid(&netlist, p.utilization));
    let seeds = StageSeeds::new(a.seed);
    let placement = place(&netlist, grid, seeds.place, p.mode.into())?;
    let layers = assign_layers(&placement, &netlist, &p.thresholds, p.split_layer, p.mode.into())?;
    write_json(&a.out, &LayoutDoc::new(&placement, &layers))?;
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    if !a.layout.is_file() {
        bail!("layout file {} does not exist; run `splitlock layout` first", a.layout.display());
    }
    let netlist = read_bench(&a.locked)?;
    let (placement, layers) = read_json::<LayoutDoc>(&a.layout)?.into_parts()?;
    let (feol, beol) = split(&netlist, &placement, &layers, layers.split_layer)?;
    write_json(&a.out_dir.join("feol.json"), &FeolDoc::from(&feol))?;
    write_json(&a.out_dir.join("beol.json"), &BeolDoc::from(&beol))?;
    println!(
        "{} dangling drivers, {} dangling sinks above layer {}",
        feol.dangling_drivers.len(),
        feol.dangling_sinks.len(),
        layers.split_layer
    );
    Ok(())
}

fn cmd_attack(a: AttackArgs) -> Result<()> {
    let feol = read_json::<FeolDoc>(&a.feol)?.into_view()?;
    let config = AttackDoc::from(a.flags).with_seed(derive(a.seed, stage::ATTACK, 0));
    let inferred = proximity_attack(&feol, &config)?;
    write_json(&a.out, &InferredDoc::from(&inferred))?;
    Ok(())
}

#[derive(Serialize)]
struct EvalDoc<'a> {
    benchmark: String,
    seed: u64,
    samples: usize,
    split_layer: usize,
    metrics: MetricsDoc,
    notes: &'a [&'a str],
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let netlist = read_bench(&a.locked)?;
    let design = read_json::<KeyDoc>(&a.key)?.into_design(netlist)?;
    let feol = read_json::<FeolDoc>(&a.feol)?.into_view()?;
    let beol = read_json::<BeolDoc>(&a.beol)?.into_secret()?;
    let inferred = read_json::<InferredDoc>(&a.inferred)?.into_secret()?;
    let seed = derive(a.seed, stage::METRICS, 0);
    let report = evaluate(&design, &feol, &beol, &inferred, a.samples, seed)?;
    let doc = EvalDoc {
        benchmark: file_stem(&a.locked),
        seed: a.seed,
        samples: a.samples,
        split_layer: feol.split_layer,
        metrics: (&report).into(),
        notes: &REPORT_NOTES,
    };
    write_json(&a.out, &doc)?;
    if let Some(csv) = &a.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(splitlock::pipeline::CSV_HEADER)?;
        let m = &doc.metrics;
        let mode = feol.placement.fixed.is_empty().then_some("naive").unwrap_or("secure");
        w.serialize((
            &doc.benchmark,
            mode,
            doc.split_layer,
            a.seed,
            m.ccr_regular,
            m.ccr_key_physical,
            m.ccr_key_logical,
            m.hd,
            m.oer,
            m.pnr,
        ))?;
        write_atomic(csv, &w.into_inner()?)?;
    }
    print!("{}", to_json(&doc.metrics));
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    let netlist = read_bench(&a.input)?;
    let config = PipelineConfig {
        input: a.input,
        k: a.k,
        module_count: a.modules,
        split_layers: a.split_layers,
        modes: a.modes,
        grid: a.grid,
        utilization: a.utilization,
        thresholds: a.thresholds,
        attack: a.attack.into(),
        seed: a.seed,
        seeds: a.seeds,
        samples: a.samples,
        trials: a.trials,
    };
    let report = run_pipeline(&netlist, &config, a.out_dir.as_deref())?;
    if a.out_dir.is_none() {
        // nothing was written, so the CSV goes to stdout
        print!("{}", String::from_utf8(report_csv(&report))?);
    }
    print!("{}", to_json(&report.aggregates));
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Lock(a) => cmd_lock(a),
        Command::Layout(a) => cmd_layout(a),
        Command::Split(a) => cmd_split(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}
