//! Batch front end: bounds, sweeps, inference, simulation and partition dumps.
//!
//! Exit codes: 0 success, 1 input error, 2 model rejected (an infeasible
//! specification or an empty confidence set), 3 numerical failure.

mod config;
mod manifest;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use welfare_bounds::baseline::{self, ShapePolicy};
use welfare_bounds::inference::{self, CiResult, GridPoint, InferenceConfig};
use welfare_bounds::lp::{write_mps, Sense};
use welfare_bounds::model::{EnrollmentShares, ProgramConfig, WelfareKind, WelfareTarget};
use welfare_bounds::oracle::{self, ModelFamily};
use welfare_bounds::parametric::{self, Family, ParametricSpec, DEFAULT_GRID};
use welfare_bounds::partition;
use welfare_bounds::result::{BoundProblem, BoundResult, BoundStatus, Diagnostics};
use welfare_bounds::{Error, Money};

use config::Loaded;
use manifest::RunManifest;
use output::{write_atomic, write_json, SeriesPoint};

/// Bad user input that does not come from the library.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Parser)]
#[command(name = "welfare-bounds", version, about = "Bounds and inference for the welfare effects of a tuition voucher")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bounds for each requested parameter and specification.
    Bounds(BoundsArgs),
    /// Bounds over a range of counterfactual voucher amounts.
    SweepTau(SweepTauArgs),
    /// Bounds with schools at or below each tuition cutoff removed.
    SweepKappa(SweepKappaArgs),
    /// Subsampling confidence interval.
    Ci(CiArgs),
    /// Subsampling test of a specification.
    SpecTest(SpecTestArgs),
    /// Simulate students from a utility model, with the true parameters.
    Simulate(SimulateArgs),
    /// Price-space partition tools.
    #[command(subcommand)]
    Partition(PartitionCommand),
}

#[derive(Subcommand)]
enum PartitionCommand {
    /// Write the partition as JSON.
    Dump(DumpArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output path, `-` for standard output.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SpecName {
    Baseline,
    O,
    As,
    Ns,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ShapeArg {
    Default,
    Full,
}

#[derive(Args)]
struct SpecArgs {
    /// Specifications, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "baseline")]
    spec: Vec<SpecName>,
    /// Polynomial degrees for the parametric specifications, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    degree: Vec<usize>,
    /// Grid intervals per school price for the parametric specifications.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    /// Shape-restriction rows for tied price coordinates.
    #[arg(long, value_enum, default_value = "default")]
    shape: ShapeArg,
    /// Write each constructed program in fixed MPS format.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    spec: SpecArgs,
    /// Parameters, comma separated (AB, AC, AS, dAB, dAC, dAS, ABk, ACk, ASk).
    #[arg(long, value_parser = parse_kind, value_delimiter = ',', default_value = "AB,AC,AS")]
    param: Vec<WelfareKind>,
    /// Voucher amount in dollars; defaults to the status quo.
    #[arg(long, value_parser = parse_money)]
    tau: Option<Money>,
    /// Tuition cutoff in dollars for the kappa parameters.
    #[arg(long, value_parser = parse_money)]
    kappa: Option<Money>,
}

#[derive(Args)]
struct SweepTauArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_parser = parse_kind, value_delimiter = ',', default_value = "AB,AC,AS,dAB,dAC,dAS")]
    param: Vec<WelfareKind>,
    /// First amount; defaults to zero.
    #[arg(long, value_parser = parse_money)]
    from: Option<Money>,
    /// Last amount; defaults to twice the status quo.
    #[arg(long, value_parser = parse_money)]
    to: Option<Money>,
    /// Spacing; defaults to a tenth of the status quo.
    #[arg(long, value_parser = parse_money)]
    step: Option<Money>,
}

#[derive(Args)]
struct SweepKappaArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_parser = parse_kind, value_delimiter = ',', default_value = "ABk,ACk,ASk")]
    param: Vec<WelfareKind>,
    /// Cutoffs in dollars; defaults to zero and every distinct tuition.
    #[arg(long, value_parser = parse_money, value_delimiter = ',')]
    kappa: Vec<Money>,
    #[arg(long, value_parser = parse_money)]
    tau: Option<Money>,
}

#[derive(Args)]
struct InferenceArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    subsamples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence-interval grid spacing in dollars.
    #[arg(long, value_parser = parse_money)]
    grid_step: Option<Money>,
}

impl InferenceArgs {
    fn apply(&self, mut cfg: InferenceConfig) -> anyhow::Result<InferenceConfig> {
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(b) = self.subsamples {
            cfg.n_subsamples = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(g) = self.grid_step {
            cfg.grid_step = Some(g);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct CiArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    inference: InferenceArgs,
    #[arg(long, value_parser = parse_kind, value_delimiter = ',', default_value = "AB")]
    param: Vec<WelfareKind>,
    #[arg(long, value_parser = parse_money)]
    tau: Option<Money>,
    #[arg(long, value_parser = parse_money)]
    kappa: Option<Money>,
}

#[derive(Args)]
struct SpecTestArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON run configuration with `program` and `model`.
    #[arg(long)]
    config: PathBuf,
    /// Student CSV; `schools.csv` and `truth.json` go next to it.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the model family of the config.
    #[arg(long, value_parser = parse_family)]
    model: Option<ModelFamily>,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    common: Common,
    /// Amount of the main path; defaults to the status quo.
    #[arg(long, value_parser = parse_money)]
    tau: Option<Money>,
    /// Second path for counterfactual parameters.
    #[arg(long, value_parser = parse_money)]
    tau_c: Option<Money>,
    /// Also list the reduced index for this tuition cutoff.
    #[arg(long, value_parser = parse_money)]
    kappa: Option<Money>,
}

fn parse_money(s: &str) -> Result<Money, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not an amount in dollars"))?;
    Money::from_dollars(x).ok_or_else(|| format!("`{s}` is not a finite amount"))
}

fn parse_kind(s: &str) -> Result<WelfareKind, String> {
    WelfareKind::parse(s.trim()).ok_or_else(|| format!("unknown parameter `{s}`"))
}

fn parse_family(s: &str) -> Result<ModelFamily, String> {
    ModelFamily::parse(s.trim()).ok_or_else(|| format!("unknown model family `{s}`"))
}

/// A specification with its degree; the baseline has none.
#[derive(Clone, Copy, Debug)]
struct Job {
    spec: Option<ParametricSpec>,
}

impl Job {
    fn label(&self) -> String {
        match self.spec {
            None => "baseline".into(),
            Some(s) => format!("{}{}", s.family, s.degree),
        }
    }
}

fn jobs(args: &SpecArgs) -> anyhow::Result<Vec<Job>> {
    let mut out = Vec::new();
    for &name in &args.spec {
        let family = match name {
            SpecName::Baseline => {
                out.push(Job { spec: None });
                continue;
            }
            SpecName::O => Family::O,
            SpecName::As => Family::AS,
            SpecName::Ns => Family::NS,
        };
        for &k in &args.degree {
            let s = ParametricSpec::new(family, k).with_grid(args.grid);
            s.validate()?;
            out.push(Job { spec: Some(s) });
        }
    }
    Ok(out)
}

fn policy(args: &SpecArgs) -> ShapePolicy {
    match args.shape {
        ShapeArg::Default => ShapePolicy::Default,
        ShapeArg::Full => ShapePolicy::Full,
    }
}

fn build_problem(
    job: &Job,
    target: &WelfareTarget,
    shares: &EnrollmentShares,
    program: &ProgramConfig,
    shape: ShapePolicy,
) -> welfare_bounds::Result<BoundProblem> {
    match &job.spec {
        None => baseline::problem(target, shares, program, shape),
        Some(s) => parametric::problem(s, target, shares, program),
    }
}

fn target(kind: WelfareKind, tau: Money, kappa: Option<Money>, program: &ProgramConfig) -> anyhow::Result<WelfareTarget> {
    let kappa = if kind.is_kappa() {
        Some(kappa.ok_or_else(|| InputError(format!("{} needs --kappa", kind.name())))?)
    } else {
        None
    };
    let t = WelfareTarget::new(kind, tau, kappa);
    t.validate(program)?;
    Ok(t)
}

/// One bound interval with its coordinates.
#[derive(Clone, Debug, Serialize)]
struct BoundRecord {
    param: &'static str,
    spec: String,
    tau: Money,
    kappa: Option<Money>,
    #[serde(flatten)]
    status: BoundStatus,
    diagnostics: Diagnostics,
}

impl BoundRecord {
    fn new(t: &WelfareTarget, job: &Job, r: BoundResult) -> Self {
        BoundRecord {
            param: t.kind.name(),
            spec: job.label(),
            tau: t.tau,
            kappa: t.kappa,
            status: r.status,
            diagnostics: r.diagnostics,
        }
    }

    fn feasible(&self) -> bool {
        matches!(self.status, BoundStatus::Feasible { .. })
    }
}

/// Solves one program, optionally writing it to `<dump>.<n>.mps`.
fn solve_one(
    job: &Job,
    t: &WelfareTarget,
    shares: &EnrollmentShares,
    program: &ProgramConfig,
    args: &SpecArgs,
    n: usize,
) -> anyhow::Result<BoundRecord> {
    let p = build_problem(job, t, shares, program, policy(args))?;
    if let Some(dump) = &args.dump_lp {
        let name = format!("{}_{}", t.kind.name(), job.label());
        let mut buf = Vec::new();
        write_mps(&p.lp(Sense::Min), &name, &mut buf)?;
        write_atomic(&output::sibling(dump, &format!(".{n}.mps")), &buf)?;
    }
    Ok(BoundRecord::new(t, job, p.solve()?))
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    manifest: RunManifest,
    #[serde(flatten)]
    body: T,
}

fn emit<T: Serialize>(path: &Path, manifest: RunManifest, body: T) -> anyhow::Result<()> {
    write_json(path, &Report { manifest: manifest.finish(), body })
}

enum Outcome {
    Ok,
    Rejected,
}

fn outcome(accepted: bool) -> Outcome {
    if accepted {
        Outcome::Ok
    } else {
        Outcome::Rejected
    }
}

fn cmd_bounds(a: &BoundsArgs) -> anyhow::Result<Outcome> {
    let cfg = Loaded::read(&a.common.config)?;
    let manifest = RunManifest::start(Some(&cfg.bytes), None);
    let shares = cfg.shares()?;
    let tau = a.tau.unwrap_or(cfg.program.tau_sq);
    let mut tasks = Vec::new();
    for &kind in &a.param {
        let t = target(kind, tau, a.kappa, &cfg.program)?;
        for job in jobs(&a.spec)? {
            tasks.push((t, job));
        }
    }
    let results: Vec<BoundRecord> = tasks
        .par_iter()
        .enumerate()
        .map(|(n, (t, job))| solve_one(job, t, &shares, &cfg.program, &a.spec, n))
        .collect::<anyhow::Result<_>>()?;
    let ok = results.iter().all(BoundRecord::feasible);
    #[derive(Serialize)]
    struct Body {
        results: Vec<BoundRecord>,
    }
    emit(&a.common.out, manifest, Body { results })?;
    Ok(outcome(ok))
}

fn money_range(from: Money, to: Money, step: Money) -> anyhow::Result<Vec<Money>> {
    if step <= Money::ZERO || to < from {
        bail!(InputError("sweep needs from <= to and a positive step".into()));
    }
    let mut v = Vec::new();
    let mut x = from;
    while x <= to {
        v.push(x);
        x += step;
    }
    Ok(v)
}

#[derive(Serialize)]
struct SweepBody {
    axis: &'static str,
    results: Vec<BoundRecord>,
}

/// Solves every (x, param, job) point in parallel and writes JSON, plus CSV
/// and SVG siblings when the output is a file.
fn run_sweep(
    common: &Common,
    spec: &SpecArgs,
    cfg: &Loaded,
    axis: &'static str,
    targets: Vec<(f64, WelfareTarget)>,
) -> anyhow::Result<Outcome> {
    let manifest = RunManifest::start(Some(&cfg.bytes), None);
    let shares = cfg.shares()?;
    let job_list = jobs(spec)?;
    let tasks: Vec<(f64, WelfareTarget, Job)> =
        targets.iter().flat_map(|&(x, t)| job_list.iter().map(move |&j| (x, t, j))).collect();
    let results: Vec<BoundRecord> = tasks
        .par_iter()
        .enumerate()
        .map(|(n, (_, t, job))| solve_one(job, t, &shares, &cfg.program, spec, n))
        .collect::<anyhow::Result<_>>()?;
    let many = job_list.len() > 1;
    let series: Vec<SeriesPoint> = tasks
        .iter()
        .zip(&results)
        .map(|((x, _, job), r)| {
            let interval = match r.status {
                BoundStatus::Feasible { lower, upper } => (Some(lower), Some(upper)),
                BoundStatus::Infeasible => (None, None),
            };
            SeriesPoint {
                x: *x,
                param: if many { format!("{} {}", r.param, job.label()) } else { r.param.to_string() },
                status: if r.feasible() { "feasible" } else { "infeasible" },
                lower: interval.0,
                upper: interval.1,
            }
        })
        .collect();
    let ok = results.iter().all(BoundRecord::feasible);
    if common.out != Path::new("-") {
        write_atomic(&common.out.with_extension("csv"), output::series_csv(axis, &series).as_bytes())?;
        let title = format!("Bounds by {axis}");
        write_atomic(&common.out.with_extension("svg"), output::series_svg(&title, axis, &series).as_bytes())?;
    }
    emit(&common.out, manifest, SweepBody { axis, results })?;
    Ok(outcome(ok))
}

fn cmd_sweep_tau(a: &SweepTauArgs) -> anyhow::Result<Outcome> {
    let cfg = Loaded::read(&a.common.config)?;
    let sq = cfg.program.tau_sq;
    let step = a.step.unwrap_or(Money::from_cents((sq.cents() / 10).max(1)));
    let taus = money_range(a.from.unwrap_or(Money::ZERO), a.to.unwrap_or(sq * 2), step)?;
    if a.param.iter().any(|k| k.is_kappa()) {
        bail!(InputError("use sweep-kappa for the kappa parameters".into()));
    }
    let mut targets = Vec::new();
    for &tau in &taus {
        for &kind in &a.param {
            targets.push((tau.dollars(), target(kind, tau, None, &cfg.program)?));
        }
    }
    run_sweep(&a.common, &a.spec, &cfg, "tau", targets)
}

fn cmd_sweep_kappa(a: &SweepKappaArgs) -> anyhow::Result<Outcome> {
    let cfg = Loaded::read(&a.common.config)?;
    let tau = a.tau.unwrap_or(cfg.program.tau_sq);
    let kappas = if a.kappa.is_empty() {
        let mut k = vec![Money::ZERO];
        k.extend(cfg.program.base_prices());
        k.dedup();
        k
    } else {
        a.kappa.clone()
    };
    let mut targets = Vec::new();
    for &kappa in &kappas {
        for &kind in &a.param {
            if !kind.is_kappa() {
                bail!(InputError(format!("{} is not a kappa parameter", kind.name())));
            }
            targets.push((kappa.dollars(), target(kind, tau, Some(kappa), &cfg.program)?));
        }
    }
    run_sweep(&a.common, &a.spec, &cfg, "kappa", targets)
}

#[derive(Serialize)]
struct CiRecord {
    param: &'static str,
    spec: String,
    tau: Money,
    kappa: Option<Money>,
    alpha: f64,
    ci: Option<(f64, f64)>,
    estimate: Option<(f64, f64)>,
    step: f64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "N_s")]
    n_s: usize,
    #[serde(rename = "B")]
    b: usize,
    seed: u64,
    points: Vec<GridPoint>,
}

fn cmd_ci(a: &CiArgs) -> anyhow::Result<Outcome> {
    let cfg = Loaded::read(&a.common.config)?;
    let icfg = a.inference.apply(cfg.config.inference)?;
    let manifest = RunManifest::start(Some(&cfg.bytes), Some(icfg.seed));
    let data = cfg.micro_data()?;
    let shares = data.shares(icfg.weighted)?;
    let tau = a.tau.unwrap_or(cfg.program.tau_sq);
    let mut results = Vec::new();
    for &kind in &a.param {
        let t = target(kind, tau, a.kappa, &cfg.program)?;
        for (n, job) in jobs(&a.spec)?.iter().enumerate() {
            let p = build_problem(job, &t, &shares, &cfg.program, policy(&a.spec))?;
            if let Some(dump) = &a.spec.dump_lp {
                let mut buf = Vec::new();
                write_mps(&p.lp(Sense::Min), &job.label(), &mut buf)?;
                write_atomic(&output::sibling(dump, &format!(".{n}.mps")), &buf)?;
            }
            let r: CiResult = inference::confidence_interval(&data, &p, tau, cfg.program.tau_sq, &icfg)?;
            results.push(CiRecord {
                param: kind.name(),
                spec: job.label(),
                tau,
                kappa: t.kappa,
                alpha: icfg.alpha,
                ci: r.ci,
                estimate: r.estimate,
                step: r.step,
                n: r.n,
                n_s: r.n_s,
                b: r.b,
                seed: r.seed,
                points: r.points,
            });
        }
    }
    let ok = results.iter().all(|r| r.ci.is_some());
    #[derive(Serialize)]
    struct Body {
        results: Vec<CiRecord>,
    }
    emit(&a.common.out, manifest, Body { results })?;
    Ok(outcome(ok))
}

#[derive(Serialize)]
struct SpecRecord {
    spec: String,
    statistic: f64,
    p_value: f64,
    alpha: f64,
    rejected: bool,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "N_s")]
    n_s: usize,
    #[serde(rename = "B")]
    b: usize,
    seed: u64,
}

fn cmd_spec_test(a: &SpecTestArgs) -> anyhow::Result<Outcome> {
    let cfg = Loaded::read(&a.common.config)?;
    let icfg = a.inference.apply(cfg.config.inference)?;
    let manifest = RunManifest::start(Some(&cfg.bytes), Some(icfg.seed));
    let data = cfg.micro_data()?;
    let shares = data.shares(icfg.weighted)?;
    // the statistic does not depend on the objective
    let t = WelfareTarget::new(WelfareKind::AB, cfg.program.tau_sq, None);
    let mut results = Vec::new();
    for job in jobs(&a.spec)? {
        let p = build_problem(&job, &t, &shares, &cfg.program, policy(&a.spec))?;
        let r = inference::specification_pvalue(&data, &p, &icfg)?;
        results.push(SpecRecord {
            spec: job.label(),
            statistic: r.statistic,
            p_value: r.p_value,
            alpha: icfg.alpha,
            rejected: r.p_value < icfg.alpha,
            n: r.n,
            n_s: r.n_s,
            b: r.b,
            seed: r.seed,
        });
    }
    let ok = results.iter().all(|r| !r.rejected);
    #[derive(Serialize)]
    struct Body {
        results: Vec<SpecRecord>,
    }
    emit(&a.common.out, manifest, Body { results })?;
    Ok(outcome(ok))
}

/// Population values at the status quo and the sample mean of individual
/// willingness to pay.
#[derive(Serialize)]
struct Truth {
    model: oracle::UtilityModel,
    n: usize,
    seed: u64,
    tau: Money,
    #[serde(rename = "AB")]
    ab: f64,
    #[serde(rename = "AC")]
    ac: f64,
    #[serde(rename = "AS")]
    as_: f64,
    sample_mean_wtp: f64,
    sample_mean_wtp_se: f64,
    shares: EnrollmentShares,
}

/// Riemann points per path segment for the true parameters.
const TRUTH_GRID: usize = 2000;

fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<Outcome> {
    let cfg = Loaded::read(&a.config)?;
    let manifest = RunManifest::start(Some(&cfg.bytes), Some(a.seed));
    let mut model = cfg.config.model.clone().ok_or_else(|| InputError("config needs a `model` block".into()))?;
    if let Some(f) = a.model {
        model.family = f;
    }
    model.validate(&cfg.program)?;
    if a.out == Path::new("-") {
        bail!(InputError("simulate writes three files; give a path for --out".into()));
    }
    let program = &cfg.program;
    let sim = oracle::simulate(&model, a.n, program, a.seed)?;
    let (students, schools) = sim.records(program);
    let mut buf = Vec::new();
    welfare_bounds::data_io::write_students(&mut buf, &students)?;
    write_atomic(&a.out, &buf)?;
    buf.clear();
    welfare_bounds::data_io::write_schools(&mut buf, &schools)?;
    write_atomic(&a.out.with_file_name("schools.csv"), &buf)?;
    let tau = program.tau_sq;
    let value = |kind| oracle::true_parameter(&model, &WelfareTarget::new(kind, tau, None), program, TRUTH_GRID);
    let (mean, se) = sim.mean_wtp(program, tau, None);
    let truth = Truth {
        n: a.n,
        seed: a.seed,
        tau,
        ab: value(WelfareKind::AB)?,
        ac: value(WelfareKind::AC)?,
        as_: value(WelfareKind::AS)?,
        sample_mean_wtp: mean,
        sample_mean_wtp_se: se,
        shares: sim.micro_data(program.n_alternatives())?.shares(true)?,
        model,
    };
    emit(&a.out.with_file_name("truth.json"), manifest, truth)?;
    Ok(Outcome::Ok)
}

fn cmd_partition_dump(a: &DumpArgs) -> anyhow::Result<Outcome> {
    let cfg = Loaded::read(&a.common.config)?;
    let manifest = RunManifest::start(Some(&cfg.bytes), None);
    let tau = a.tau.unwrap_or(cfg.program.tau_sq);
    let u = partition::build_partition(&cfg.program, tau, a.tau_c)?;
    let reduced = partition::reduced_index(&cfg.program, &u, a.kappa);
    #[derive(Serialize)]
    struct Body {
        partition: partition::PartitionU,
        reduced_index: Vec<partition::AxisSet>,
    }
    emit(&a.common.out, manifest, Body { partition: u, reduced_index: reduced.boxes })?;
    Ok(Outcome::Ok)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<InputError>() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::NumericalFailure(_)
                | Error::NonConvergence(_)
                | Error::InternalInvariantViolation(_)
                | Error::MissingBox(_) => 3,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::SweepTau(a) => cmd_sweep_tau(a),
        Command::SweepKappa(a) => cmd_sweep_kappa(a),
        Command::Ci(a) => cmd_ci(a),
        Command::SpecTest(a) => cmd_spec_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Partition(PartitionCommand::Dump(a)) => cmd_partition_dump(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Rejected) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
