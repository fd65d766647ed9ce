use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctxmdp::audit::{audit, DEFAULT_TOL};
use ctxmdp::blanket::{Grids, RegionGrid};
use ctxmdp::geo::load_locations;
use ctxmdp::io::{fmt_f64, parse_f64};
use ctxmdp::lp::write_lp;
use ctxmdp::priors::{load_trajectories, task_prior, write_distribution, PriorModel, Smoothing, TaskPriorMode};
use ctxmdp::roadnet::load_graph;
use ctxmdp::stats::{correlate, density, histogram, read_feature_table};
use ctxmdp::sweep::{Experiment, Mechanism, SweepConfig};
use ctxmdp::synth::{synthesize, Regime, SynthConfig};
use ctxmdp::{AugmentedSecret, ContextWeights, DistanceMatrix, LocationDomain, PerturbationMatrix};

const EXIT_AUDIT: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ctxmdp",
    version,
    about = "Context-aware mDP mechanisms for road-network locations"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads for parallel stages (defaults to all cores)
    #[arg(long, env = "CTXMDP_WORKERS", global = true)]
    workers: Option<usize>,

    /// File of `flag=value` lines applied before the command-line flags
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a grid road network and trajectories from a known-order walk
    Synth(SynthArgs),
    /// Estimate secret, joint and task priors
    Priors(PriorsArgs),
    /// Build one mechanism and write its matrix
    Mech(MechArgs),
    /// Audit a matrix against its privacy budget
    Audit(AuditArgs),
    /// Build, audit and score every mechanism at every budget
    Sweep(SweepArgs),
    /// Correlate p-values with bin features
    StatsCorr(StatsCorrArgs),
    /// Neighbourhood density of a point set
    StatsDensity(StatsDensityArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
    #[arg(long, default_value_t = 0.5)]
    spacing_km: f64,
    /// South-west corner as `lat,lon`
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [41.77, 12.48])]
    origin: Vec<f64>,
    /// Markov order of the walk (1 or 2)
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Probability that an order-2 walker keeps going straight
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 200)]
    trajectories: usize,
    #[arg(long, default_value_t = 30)]
    length: usize,
    #[arg(long, default_value_t = 20)]
    vehicles: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [8u8, 20])]
    hours: Vec<u8>,
    #[arg(long, value_delimiter = ',', default_values_t = [12.5, 27.5])]
    speeds_mph: Vec<f64>,
    /// uniform, hour (first order before noon) or speed (first order below 20 mph)
    #[arg(long, default_value = "uniform")]
    regime: String,
    #[arg(long, default_value_t = 3.0)]
    jitter_m: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding nodes.csv, edges.csv and trajectories.csv
    #[arg(long, default_value = ".")]
    data: PathBuf,
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

impl DataArgs {
    fn path(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.data.join(name))
    }

    fn load(&self) -> Result<(ctxmdp::RoadGraph, ctxmdp::TrajectoryLog)> {
        let graph = load_graph(self.path(&self.nodes, "nodes.csv"), self.path(&self.edges, "edges.csv"))?;
        let log = load_trajectories(self.path(&self.trajectories, "trajectories.csv"))?;
        Ok((graph, log))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothingArg {
    AddOne,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskModeArg {
    Uniform,
    Empirical,
}

impl From<TaskModeArg> for TaskPriorMode {
    fn from(m: TaskModeArg) -> Self {
        match m {
            TaskModeArg::Uniform => TaskPriorMode::Uniform,
            TaskModeArg::Empirical => TaskPriorMode::Empirical,
        }
    }
}

#[derive(Args)]
struct PriorsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2)]
    gamma: usize,
    #[arg(long, value_enum, default_value = "add-one")]
    smoothing: SmoothingArg,
    #[arg(long, value_enum, default_value = "uniform")]
    task_mode: TaskModeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Context depth
    #[arg(long, default_value_t = 2)]
    gamma: usize,
    /// Neighbour threshold in km
    #[arg(long, default_value_t = 5.0)]
    eta: f64,
    /// Context weights decay as alpha^lag
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Share of trajectories used for priors and blanket labels
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    /// Evaluate on every trajectory instead of the held-out ones
    #[arg(long)]
    overlap: bool,
    #[arg(long, value_enum, default_value = "uniform")]
    task_mode: TaskModeArg,
    /// Keep this many task nodes, drawn from the task prior's support
    #[arg(long)]
    task_sample: Option<usize>,
    /// Region grid as `lat_min,lat_max,lon_min,lon_max,rows,cols`
    #[arg(long, value_delimiter = ',', num_args = 6)]
    region: Option<Vec<f64>>,
}

impl ExperimentArgs {
    fn config(&self, epsilons: Vec<f64>, mechanisms: Vec<Mechanism>, timings: bool) -> Result<SweepConfig> {
        let region = match &self.region {
            None => RegionGrid::rome(),
            Some(v) => {
                let count = |x: f64| -> Result<usize> {
                    if x >= 1.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        bail!("region grid rows and cols must be positive integers, got {x}")
                    }
                };
                RegionGrid {
                    lat_min: v[0],
                    lat_max: v[1],
                    lon_min: v[2],
                    lon_max: v[3],
                    rows: count(v[4])?,
                    cols: count(v[5])?,
                }
            }
        };
        let cfg = SweepConfig {
            gamma: self.gamma,
            eta: self.eta,
            epsilons,
            alpha: self.alpha,
            mechanisms,
            seed: self.seed,
            train_fraction: self.train_fraction,
            disjoint: !self.overlap,
            task_mode: self.task_mode.into(),
            task_sample: self.task_sample,
            grids: Grids { region },
            timings,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct MechArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// LP, ExpMech, LP+Markov1, LP+C-mDP or LP+TrueMB
    #[arg(long, default_value = "LP+C-mDP")]
    mechanism: Mechanism,
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    /// Matrix over the full context keys
    #[arg(long)]
    out: PathBuf,
    /// Also write the prior over the matrix keys
    #[arg(long)]
    prior_out: Option<PathBuf>,
    /// Also write the linear program
    #[arg(long)]
    lp_out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// `id,lat,lon` file covering every location in the matrix
    #[arg(long)]
    nodes: PathBuf,
    /// `key,prob` prior over the matrix keys; uniform when absent
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Overrides the budget recorded in the matrix header
    #[arg(long)]
    epsilon: Option<f64>,
    /// Overrides the neighbour threshold recorded in the matrix header
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Pairwise report
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated budgets in 1/km
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
    epsilons: Vec<f64>,
    /// Comma-separated mechanism names
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "LP,ExpMech,LP+Markov1,LP+C-mDP,LP+TrueMB"
    )]
    mechanisms: Vec<Mechanism>,
    /// Record build and solve wall times (makes outputs run-dependent)
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsCorrArgs {
    /// Table with a `p_value` column, such as a sweep's pvalues.csv
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = ["speed".to_string(), "longitude".into(), "latitude".into(), "time".into()])]
    features: Vec<String>,
    /// Defaults to standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsDensityArgs {
    /// `id,lat,lon` file
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 500.0)]
    radius_m: f64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

const SUBCOMMANDS: [&str; 7] = [
    "synth",
    "priors",
    "mech",
    "audit",
    "sweep",
    "stats-corr",
    "stats-density",
];

/// Splices `--flag value` pairs from the config file in right after the
/// subcommand, so flags given on the command line win.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let text: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = text.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            text.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(path) = path else { return Ok(args) };
    let body = std::fs::read_to_string(&path).with_context(|| format!("reading config file {path}"))?;
    let mut extra = Vec::new();
    for (n, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{path}:{}: expected `flag=value`", n + 1))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        match value.trim() {
            "true" => extra.push(flag),
            "false" => {}
            v => {
                extra.push(flag);
                extra.push(v.to_string());
            }
        }
    }
    let at = text
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(args.len(), |i| i + 1);
    let mut out = args;
    out.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(out)
}

/// Outcome of a command that ran to completion.
enum Verdict {
    Ok,
    AuditFailed,
    SolverFailed,
}

fn cmd_synth(a: &SynthArgs) -> Result<Verdict> {
    let cfg = SynthConfig {
        rows: a.rows,
        cols: a.cols,
        spacing_km: a.spacing_km,
        origin: (a.origin[0], a.origin[1]),
        order: a.order,
        momentum: a.momentum,
        trajectories: a.trajectories,
        length: a.length,
        vehicles: a.vehicles,
        hours: a.hours.clone(),
        speeds_mph: a.speeds_mph.clone(),
        regime: a.regime.parse::<Regime>()?,
        jitter_m: a.jitter_m,
        seed: a.seed,
    };
    let s = synthesize(&cfg)?;
    s.write(&a.out)?;
    println!(
        "wrote {} nodes, {} trajectories to {}",
        s.graph.len(),
        s.log.len(),
        a.out.display()
    );
    Ok(Verdict::Ok)
}

fn cmd_priors(a: &PriorsArgs) -> Result<Verdict> {
    let (graph, log) = a.data.load()?;
    let seqs = log.snap(&graph)?;
    let smoothing = match a.smoothing {
        SmoothingArg::AddOne => Smoothing::AddOne,
        SmoothingArg::None => Smoothing::None,
    };
    let model = PriorModel::from_sequences(&seqs, graph.node_ids(), a.gamma, smoothing)?;
    write_distribution(
        &a.out.join("p_x.csv"),
        "x,prob",
        model.p_x().iter().map(|(k, p)| (k, *p)),
    )?;
    write_distribution(
        &a.out.join("p_joint.csv"),
        "key,prob",
        model.p_joint().iter().map(|(k, p)| (k, *p)),
    )?;
    write_distribution(
        &a.out.join("p_task.csv"),
        "node,prob",
        task_prior(&model, a.task_mode.into())?,
    )?;
    println!(
        "{} secrets, {} full keys written to {}",
        model.p_x().len(),
        model.p_joint().len(),
        a.out.display()
    );
    Ok(Verdict::Ok)
}

fn cmd_mech(a: &MechArgs) -> Result<Verdict> {
    let (graph, log) = a.experiment.data.load()?;
    let cfg = a.experiment.config(vec![a.epsilon], vec![a.mechanism], false)?;
    let exp = Experiment::prepare(&graph, &log, &cfg)?;
    if let Some(path) = &a.lp_out {
        match exp.program(a.mechanism, a.epsilon)? {
            Some(lp) => write_lp(&lp, path)?,
            None => log::warn!("{} is not built from a linear program; no LP written", a.mechanism),
        }
    }
    let built = match exp.build(a.mechanism, a.epsilon) {
        Ok(b) => b,
        Err(e @ ctxmdp::Error::Solver { .. }) => {
            eprintln!("error: {e}");
            return Ok(Verdict::SolverFailed);
        }
        Err(e) => return Err(e.into()),
    };
    built.matrix.write(&a.out)?;
    if let Some(path) = &a.prior_out {
        write_distribution(
            path,
            "key,prob",
            exp.full.keys().iter().zip(exp.full.prior.iter().copied()),
        )?;
    }
    println!(
        "{} at epsilon {}: {} keys, expected loss {:.6} km, max PL {:.6}, audit {}",
        a.mechanism,
        a.epsilon,
        exp.full.keys().len(),
        built.expected_loss,
        built.max_pl,
        if built.pass { "pass" } else { "FAIL" }
    );
    Ok(if built.pass { Verdict::Ok } else { Verdict::AuditFailed })
}

fn read_prior(path: &Path, q: &PerturbationMatrix) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut prior = vec![f64::NAN; q.keys().len()];
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || anyhow!("{}:{}: expected `key,prob`", path.display(), n + 1);
        let (k, p) = line.split_once(',').ok_or_else(bad)?;
        let key: AugmentedSecret = k.trim().parse()?;
        let p = parse_f64(p).ok_or_else(bad)?;
        if let Some(i) = q.key_index(&key) {
            prior[i] = p;
        }
    }
    if let Some(i) = prior.iter().position(|p| p.is_nan()) {
        bail!("{} has no prior for key {}", path.display(), q.keys()[i]);
    }
    Ok(prior)
}

/// Key distances under the metric named in the matrix header.
fn key_distances(q: &PerturbationMatrix, dom: &LocationDomain) -> Result<DistanceMatrix> {
    let metric = q.meta().metric.as_str();
    if metric == "haversine" {
        return Ok(DistanceMatrix::from_fn(q.keys().len(), |i, j| {
            dom.distance(q.keys()[i].current, q.keys()[j].current)
        })?);
    }
    let alpha = metric
        .strip_prefix("context:alpha=")
        .and_then(parse_f64)
        .ok_or_else(|| anyhow!("unknown metric `{metric}` in matrix header"))?;
    let gamma = q.keys().iter().map(|k| k.context.len()).max().unwrap_or(0);
    let w = ContextWeights::decay(gamma, alpha)?;
    Ok(DistanceMatrix::blanket(q.keys(), &w, dom)?)
}

fn cmd_audit(a: &AuditArgs) -> Result<Verdict> {
    let q = PerturbationMatrix::read(&a.matrix)?;
    let locations = load_locations(&a.nodes)?;
    let dom = LocationDomain::new(locations.clone(), locations)?;
    let eps = a.epsilon.unwrap_or(q.meta().epsilon);
    let eta = a.eta.unwrap_or(q.meta().eta);
    if !(eps > 0.0) || eta.is_nan() {
        bail!("the matrix header has no budget; pass --epsilon and --eta");
    }
    let prior = match &a.prior {
        Some(p) => read_prior(p, &q)?,
        None => {
            log::warn!("no prior given; auditing leakage under a uniform prior");
            vec![1.0 / q.keys().len() as f64; q.keys().len()]
        }
    };
    let dist = key_distances(&q, &dom)?;
    let report = audit(&q, &dist, &prior, eps, eta, a.tol)?;
    if let Some(out) = &a.out {
        report.write(&q, out)?;
    }
    println!(
        "epsilon {eps}, eta {eta}: max ratio excess {:.3e}, max PL {:.6}, margin {:.3e}",
        report.constraints.max_violation, report.bound.max_pl, report.bound.margin
    );
    if report.pass {
        println!("audit pass");
        return Ok(Verdict::Ok);
    }
    if let Some(v) = report.constraints.violations.first() {
        println!(
            "violated: q({}, {}) exceeds e^(eps d) q({}, {}) by {:.3e}",
            q.keys()[v.i],
            q.outputs()[v.output],
            q.keys()[v.j],
            q.outputs()[v.output],
            v.excess
        );
    }
    if let Some((i, j)) = report.bound.worst.filter(|_| !report.bound.pass) {
        println!("leakage bound broken between {} and {}", q.keys()[i], q.keys()[j]);
    }
    println!("audit FAIL");
    Ok(Verdict::AuditFailed)
}

fn cmd_sweep(a: &SweepArgs) -> Result<Verdict> {
    let (graph, log) = a.experiment.data.load()?;
    let cfg = a
        .experiment
        .config(a.epsilons.clone(), a.mechanisms.clone(), a.timings)?;
    let exp = Experiment::prepare(&graph, &log, &cfg)?;
    let report = exp.run();
    exp.write(&report, &a.out)?;
    let mut solver = false;
    let mut failed = false;
    for c in &report.cells {
        match &c.outcome {
            Ok(b) => {
                println!(
                    "{:<11} {:<4} loss {:.6} km  max PL {:.4}  {}",
                    c.mechanism,
                    c.epsilon,
                    b.expected_loss,
                    b.max_pl,
                    if b.pass { "pass" } else { "FAIL" }
                );
                failed |= !b.pass;
            }
            Err(e) => {
                println!("{:<11} {:<4} error: {e}", c.mechanism, c.epsilon);
                solver |= e.solver;
                failed = true;
            }
        }
    }
    Ok(if solver {
        Verdict::SolverFailed
    } else if failed {
        Verdict::AuditFailed
    } else {
        Verdict::Ok
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NA".into())
}

fn cmd_stats_corr(a: &StatsCorrArgs) -> Result<Verdict> {
    let names: Vec<&str> = a.features.iter().map(String::as_str).collect();
    let (features, target) = read_feature_table(&a.table, &names)?;
    if target.len() < 3 {
        bail!(
            "correlations need at least 3 rows, {} has {}",
            a.table.display(),
            target.len()
        );
    }
    let mut s = String::from("feature,pearson,spearman,kendall\n");
    for c in correlate(&features, &target)? {
        writeln!(
            s,
            "{},{},{},{}",
            c.feature,
            opt(c.pearson),
            opt(c.spearman),
            opt(c.kendall)
        )?;
    }
    match &a.out {
        Some(p) => std::fs::write(p, s).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{s}"),
    }
    Ok(Verdict::Ok)
}

fn cmd_stats_density(a: &StatsDensityArgs) -> Result<Verdict> {
    let locations = load_locations(&a.points)?;
    let points: Vec<_> = locations.iter().map(|l| l.point).collect();
    let d = density(&points, a.k, a.radius_m)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let mut s = String::from("id,kth_m,mean_knn_m,neighbors\n");
    for (((l, kth), mean), count) in locations.iter().zip(d.kth()).zip(d.mean_knn()).zip(&d.counts) {
        writeln!(s, "{},{},{},{count}", l.id, fmt_f64(kth), fmt_f64(mean))?;
    }
    std::fs::write(a.out.join("knn.csv"), s)?;

    let mut s = String::from("neighbors,fraction\n");
    for (c, f) in d.count_ccdf() {
        writeln!(s, "{c},{}", fmt_f64(f))?;
    }
    std::fs::write(a.out.join("ccdf.csv"), s)?;

    let mut s = String::from("lower_m,upper_m,count\n");
    for (lo, hi, n) in histogram(&d.mean_knn(), a.bins)? {
        writeln!(s, "{},{},{n}", fmt_f64(lo), fmt_f64(hi))?;
    }
    std::fs::write(a.out.join("mean_knn_hist.csv"), s)?;
    println!("{} points, k = {}, radius {} m", points.len(), a.k, a.radius_m);
    Ok(Verdict::Ok)
}

fn run(cli: &Cli) -> Result<Verdict> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Priors(a) => cmd_priors(a),
        Command::Mech(a) => cmd_mech(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::StatsCorr(a) => cmd_stats_corr(a),
        Command::StatsDensity(a) => cmd_stats_density(a),
    }
}

/// The error and its causes, skipping causes already quoted by their parent.
fn chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            return ExitCode::from(EXIT_IO);
        }
    };
    let cli = Cli::parse_from(args);
    match run(&cli) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::AuditFailed) => ExitCode::from(EXIT_AUDIT),
        Ok(Verdict::SolverFailed) => ExitCode::from(EXIT_SOLVER),
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            let solver = matches!(e.downcast_ref::<ctxmdp::Error>(), Some(ctxmdp::Error::Solver { .. }));
            ExitCode::from(if solver { EXIT_SOLVER } else { EXIT_IO })
        }
    }
}
