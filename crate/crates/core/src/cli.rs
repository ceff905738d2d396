//! The `capsys` command line tool.
//!
//! Every command reads a body, runs one computation, writes JSON, CSV and
//! SVG artifacts into the output directory, and finally writes
//! `manifest.json`. Exit codes: 0 success, 2 usage or input error, 3
//! numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::capacities::{
    c1_numeric, ellipsoid_sequence, index_bound, is_generalized_zoll, polydisc_sequence, sys_index,
    CapacitySequence, IndexBoundFlavor,
};
use crate::corpus::{self, RegressionOptions};
use crate::dual_solver::{
    boundary_residual, certify_loop, inclusion_residual, numeric_active_tol, solve_systoles,
    InclusionOptions, SolveConfig, SystoleResult,
};
use crate::error::Error;
use crate::geometry::{Body, BodySpec};
use crate::john::{
    self, capacity_bound_report, verify_sandwich, CapacityBoundReport, SandwichReport,
};
use crate::loops::{FourierLoop, TimeLoop};
use crate::output::{ArtifactSink, RunManifest, MANIFEST_NAME};
use crate::svg::{self, Trace};
use crate::zoll::{self, ZollReport, ZollTolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable supplying the seed when `--seed` is absent.
pub const SEED_ENV: &str = "CAPSYS_SEED";

const DEFAULT_OUT: &str = "capsys-out";
const SANDWICH_DIRECTIONS: usize = 1000;
const COVERAGE_SAMPLES: usize = 2000;
const MAX_PLOTTED: usize = 6;

#[derive(Debug, Parser)]
#[command(
    name = "capsys",
    version,
    about = "Symplectic capacities, generalized systoles and the systolic S1-index of convex bodies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// First capacity: closed form for ellipsoids and polydiscs, numeric otherwise.
    Capacity(CapacityArgs),
    /// Multistart minimization with reconstructed systoles for every run.
    Systole(CommonArgs),
    /// Systolic S1-index from the closed-form capacity sequence, with index bounds.
    Index(CommonArgs),
    /// Generalized Zoll flag plus clustering, coverage and uniqueness evidence.
    #[command(
        long_about = "Generalized Zoll flag plus clustering, coverage and uniqueness evidence.\n\n\
        --tol sets the cluster tolerance as a fraction of the body diameter (default 0.1)."
    )]
    Zoll(CommonArgs),
    /// Minimal-volume enclosing ellipsoid, sandwich check and capacity bound.
    #[command(
        long_about = "Minimal-volume enclosing ellipsoid, sandwich check and capacity bound.\n\n\
        --tol sets the ellipsoid tolerance (default 1e-6)."
    )]
    John(JohnArgs),
    /// Certifies a loop CSV as a generalized closed characteristic of the body.
    #[command(
        long_about = "Certifies a loop CSV as a generalized closed characteristic of the body.\n\n\
        Exits with 3 when the inclusion residual exceeds --tol (default 1e-2)."
    )]
    Check(CheckArgs),
    /// Built-in demonstrations on the example corpus.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Args)]
#[group(id = "body_source", multiple = false)]
pub struct BodySource {
    /// Body specification JSON file.
    #[arg(long, value_name = "FILE")]
    pub body: Option<PathBuf>,
    /// Ellipsoid E(a1, ..., an) in R^2n.
    #[arg(long, value_name = "a1,a2,...", value_delimiter = ',', num_args = 1..)]
    pub ellipsoid: Option<Vec<f64>>,
    /// Polydisc P(a, ..., a) in R^2n.
    #[arg(long, value_name = "a,n", value_parser = parse_polydisc)]
    pub polydisc: Option<(f64, usize)>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[command(flatten)]
    pub source: BodySource,
    /// Fourier truncation order N.
    #[arg(long, value_name = "N")]
    pub modes: Option<usize>,
    /// Quadrature samples M (default 8N).
    #[arg(long, value_name = "M")]
    pub grid: Option<usize>,
    /// Number of solver starts.
    #[arg(long, value_name = "S")]
    pub starts: Option<usize>,
    /// Random seed (falls back to CAPSYS_SEED, then 0).
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Command tolerance; solver accuracy unless the command says otherwise.
    #[arg(long, value_name = "X")]
    pub tol: Option<f64>,
    /// Worker threads (0 = all logical cores).
    #[arg(long, value_name = "T", default_value_t = 0)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    /// Solver configuration JSON; flags take precedence over it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Solve numerically even when a closed form exists.
    #[arg(long)]
    pub numeric: bool,
}

#[derive(Debug, Clone, Args)]
pub struct JohnArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also compute the numeric first capacity for comparison with the bound.
    #[arg(long)]
    pub numeric: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Loop CSV with header t,x1,y1,...,xn,yn.
    #[arg(long = "loop", value_name = "FILE")]
    pub loop_csv: PathBuf,
    /// Samples skipped around velocity jumps (0 disables).
    #[arg(long, value_name = "W", default_value_t = 2)]
    pub window: usize,
    /// Action at which to certify; defaults to the action of the samples.
    #[arg(long, value_name = "T")]
    pub action: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    /// The B-infinity x B1 systole against its approximants.
    #[value(name = "bxb1-w11")]
    Bxb1W11,
    /// Clusters, coverage and uniqueness of the B-infinity x B1 loop families.
    #[value(name = "bxb1-families")]
    Bxb1Families,
    /// The full example corpus regression table.
    Regressions,
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    #[arg(value_enum)]
    pub which: Demo,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn parse_polydisc(s: &str) -> std::result::Result<(f64, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, n] = parts.as_slice() else {
        return Err("expected `a,n`".into());
    };
    let a: f64 = a
        .parse()
        .map_err(|e| format!("bad radius parameter: {e}"))?;
    let n: usize = n.parse().map_err(|e| format!("bad dimension: {e}"))?;
    if !(a > 0.0 && a.is_finite()) || n == 0 {
        return Err("need a > 0 and n >= 1".into());
    }
    Ok((a, n))
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonPositiveAction(_)
            | Error::Degenerate(_)
            | Error::LinearProgram(_)
            | Error::SequenceTooShort { .. } => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// A resolved body argument.
enum Input {
    Spec {
        spec: BodySpec,
        path: Option<String>,
    },
    Polydisc {
        a: f64,
        n: usize,
    },
}

impl Input {
    fn path(&self) -> Option<String> {
        match self {
            Input::Spec { path, .. } => path.clone(),
            Input::Polydisc { .. } => None,
        }
    }

    fn spec(&self, command: &str) -> CliResult<&BodySpec> {
        match self {
            Input::Spec { spec, .. } => Ok(spec),
            Input::Polydisc { .. } => Err(Failure::usage(format!(
                "`{command}` needs --body or --ellipsoid; --polydisc is accepted by capacity and index only"
            ))),
        }
    }
}

fn read_input(src: &BodySource) -> CliResult<Input> {
    if let Some(path) = &src.body {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let spec: BodySpec = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        return Ok(Input::Spec {
            spec,
            path: Some(path.display().to_string()),
        });
    }
    if let Some(a) = &src.ellipsoid {
        return Ok(Input::Spec {
            spec: BodySpec::Ellipsoid { a: a.clone() },
            path: None,
        });
    }
    if let Some((a, n)) = src.polydisc {
        return Ok(Input::Polydisc { a, n });
    }
    Err(Failure::usage(
        "no body given: use --body, --ellipsoid or --polydisc",
    ))
}

/// Defaults, then `CAPSYS_SEED`, then the config file, then flags.
pub fn resolve_config(args: &CommonArgs, env_seed: Option<&str>) -> CliResult<SolveConfig> {
    let mut cfg = SolveConfig::default();
    if let Some(s) = env_seed {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|e| Failure::usage(format!("{SEED_ENV}={s}: {e}")))?;
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let parse_err = |e: serde_json::Error| Failure::usage(format!("{}: {e}", path.display()));
        serde_json::from_str::<SolveConfig>(&text).map_err(parse_err)?;
        let overrides: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&text).map_err(parse_err)?;
        let mut merged = match serde_json::to_value(&cfg).map_err(Error::from)? {
            serde_json::Value::Object(m) => m,
            _ => unreachable!("configuration serializes as an object"),
        };
        merged.extend(overrides);
        cfg = serde_json::from_value(serde_json::Value::Object(merged)).map_err(parse_err)?;
    }
    if let Some(v) = args.modes {
        cfg.modes = v;
    }
    if args.grid.is_some() {
        cfg.grid = args.grid;
    }
    if let Some(v) = args.starts {
        cfg.starts = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Everything a command needs and produces.
struct Run {
    sink: ArtifactSink,
    cfg: SolveConfig,
    code: i32,
    summary: Vec<String>,
}

impl Run {
    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.sink.json(name, value)?;
        Ok(())
    }

    fn csv(&mut self, name: &str, gamma: &TimeLoop) -> CliResult<()> {
        let mut buf = Vec::new();
        gamma.write_csv(&mut buf)?;
        self.sink.write(name, &buf)?;
        Ok(())
    }

    fn svg(&mut self, name: &str, body: Option<&Body>, traces: &[Trace]) -> CliResult<()> {
        let text = svg::render(body, traces)?;
        self.sink.write(name, text.as_bytes())?;
        Ok(())
    }

    fn say(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    fn fail_numeric(&mut self, line: impl Into<String>) {
        self.code = EXIT_NUMERIC;
        self.say(line);
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    match execute(&cli, env_seed.as_deref()) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn common(cmd: &Command) -> &CommonArgs {
    match cmd {
        Command::Capacity(a) => &a.common,
        Command::John(a) => &a.common,
        Command::Check(a) => &a.common,
        Command::Demo(a) => &a.common,
        Command::Systole(a) | Command::Index(a) | Command::Zoll(a) => a,
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Capacity(_) => "capacity",
        Command::Systole(_) => "systole",
        Command::Index(_) => "index",
        Command::Zoll(_) => "zoll",
        Command::John(_) => "john",
        Command::Check(_) => "check",
        Command::Demo(_) => "demo",
    }
}

/// Runs a parsed command and returns its exit code.
pub fn execute(cli: &Cli, env_seed: Option<&str>) -> CliResult<i32> {
    let start = Instant::now();
    let args = common(&cli.command);
    let cfg = resolve_config(args, env_seed)?;
    if let Some(t) = args.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::usage(format!("--tol must be positive, got {t}")));
        }
    }
    let input = match &cli.command {
        Command::Demo(_) => None,
        _ => Some(read_input(&args.source)?),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| Failure::usage(format!("cannot start {} threads: {e}", args.threads)))?;
    let stale = args.out.join(MANIFEST_NAME);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Failure::usage(format!("{}: {e}", stale.display())))?;
    }
    let mut run = Run {
        sink: ArtifactSink::new(&args.out)?,
        cfg,
        code: EXIT_OK,
        summary: Vec::new(),
    };
    pool.install(|| -> CliResult<()> {
        match &cli.command {
            Command::Capacity(a) => {
                cmd_capacity(&mut run, input.as_ref().expect("body"), a.numeric, args.tol)
            }
            Command::Systole(_) => cmd_systole(&mut run, input.as_ref().expect("body"), args.tol),
            Command::Index(_) => cmd_index(&mut run, input.as_ref().expect("body")),
            Command::Zoll(_) => cmd_zoll(&mut run, input.as_ref().expect("body"), args.tol),
            Command::John(a) => {
                cmd_john(&mut run, input.as_ref().expect("body"), a.numeric, args.tol)
            }
            Command::Check(a) => cmd_check(&mut run, input.as_ref().expect("body"), a, args.tol),
            Command::Demo(a) => cmd_demo(&mut run, a, args.tol),
        }
    })?;
    let manifest = RunManifest {
        command: name(&cli.command).to_string(),
        body_spec_path: input.as_ref().and_then(Input::path),
        config: run.cfg.clone(),
        output_dir: run.sink.dir().display().to_string(),
        artifacts: run.sink.written().to_vec(),
        wall_time_s: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: run.cfg.seed,
    };
    manifest.write(run.sink.dir())?;
    let mut out = std::io::stdout().lock();
    for line in &run.summary {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "artifacts: {}", run.sink.dir().display());
    Ok(run.code)
}

fn with_accuracy(cfg: &SolveConfig, tol: Option<f64>) -> CliResult<SolveConfig> {
    let mut cfg = cfg.clone();
    if let Some(t) = tol {
        cfg.accuracy = t;
        cfg.validate()?;
    }
    Ok(cfg)
}

/// Systole record as written to JSON.
#[derive(Serialize)]
struct SystoleJson<'a> {
    #[serde(rename = "T")]
    action: f64,
    beta: &'a [f64],
    inclusion_residual: f64,
    boundary_residual: f64,
    loop_csv: String,
    dual_value: f64,
    run: Option<usize>,
    converged: bool,
    minimizer: &'a FourierLoop,
}

fn systole_json<'a>(s: &'a SystoleResult, loop_csv: &str) -> SystoleJson<'a> {
    SystoleJson {
        action: s.action,
        beta: &s.beta,
        inclusion_residual: s.inclusion_residual,
        boundary_residual: s.boundary_residual,
        loop_csv: loop_csv.to_string(),
        dual_value: s.value,
        run: (s.run != usize::MAX).then_some(s.run),
        converged: s.converged,
        minimizer: &s.minimizer,
    }
}

fn solve(run: &mut Run, body: &Body, cfg: &SolveConfig) -> CliResult<Vec<SystoleResult>> {
    let results = solve_systoles(body, cfg)?;
    if !results.iter().any(|r| r.converged) {
        run.fail_numeric(format!("no run out of {} converged", results.len()));
    }
    Ok(results)
}

fn cmd_capacity(run: &mut Run, input: &Input, numeric: bool, tol: Option<f64>) -> CliResult<()> {
    let seq = match input {
        Input::Polydisc { a, n } => polydisc_sequence(*a, *n, n + 1)?,
        Input::Spec { spec, .. } => {
            let body = spec.build()?;
            match spec.ellipsoid_axes().filter(|_| !numeric) {
                Some(a) => ellipsoid_sequence(&a, a.len() + 1)?,
                None => {
                    let cfg = with_accuracy(&run.cfg, tol)?;
                    run.cfg = cfg.clone();
                    let results = solve(run, &body, &cfg)?;
                    let best = &results[0];
                    run.csv("systole.csv", &best.gamma)?;
                    run.json("systole.json", &systole_json(best, "systole.csv"))?;
                    run.svg(
                        "systole.svg",
                        Some(&body),
                        &[Trace {
                            label: "systole",
                            gamma: &best.gamma,
                        }],
                    )?;
                    run.say(format!(
                        "systole: T = {:.10}, inclusion residual {:.3e}, boundary residual {:.3e}",
                        best.action, best.inclusion_residual, best.boundary_residual
                    ));
                    CapacitySequence::numeric(best.value, cfg.rel_tol())
                }
            }
        }
    };
    run.json("capacity.json", &seq)?;
    run.say(format!("c1 = {:.10} ({:?})", seq.c1(), seq.provenance[0]));
    Ok(())
}

fn cmd_systole(run: &mut Run, input: &Input, tol: Option<f64>) -> CliResult<()> {
    let body = input.spec("systole")?.build()?;
    let cfg = with_accuracy(&run.cfg, tol)?;
    run.cfg = cfg.clone();
    let results = solve(run, &body, &cfg)?;
    let mut records = Vec::with_capacity(results.len());
    for (i, s) in results.iter().enumerate() {
        let name = format!("loop_{i:03}.csv");
        run.csv(&name, &s.gamma)?;
        records.push(systole_json(s, &name));
    }
    run.json("systoles.json", &records)?;
    let best = &results[0];
    run.svg(
        "systole.svg",
        Some(&body),
        &[Trace {
            label: "best systole",
            gamma: &best.gamma,
        }],
    )?;
    run.say(format!(
        "best of {} runs: T = {:.10}, inclusion residual {:.3e}, boundary residual {:.3e}",
        results.len(),
        best.action,
        best.inclusion_residual,
        best.boundary_residual
    ));
    Ok(())
}

#[derive(Serialize)]
struct IndexBounds {
    general: usize,
    centrally_symmetric: usize,
    s1_invariant: usize,
}

#[derive(Serialize)]
struct IndexJson {
    n: usize,
    sequence: Option<CapacitySequence>,
    index: Option<usize>,
    lower_bound_only: Option<bool>,
    generalized_zoll: Option<bool>,
    flavor: IndexBoundFlavor,
    index_bound: usize,
    bounds: IndexBounds,
}

/// Closed-form sequence long enough to decide the index and the Zoll flag.
fn closed_form(input: &Input) -> CliResult<(usize, Option<CapacitySequence>, Option<Body>)> {
    Ok(match input {
        Input::Polydisc { a, n } => (*n, Some(polydisc_sequence(*a, *n, n + 1)?), None),
        Input::Spec { spec, .. } => {
            let body = spec.build()?;
            let n = body.n();
            let seq = spec
                .ellipsoid_axes()
                .map(|a| ellipsoid_sequence(&a, n + 1))
                .transpose()?;
            (n, seq, Some(body))
        }
    })
}

fn cmd_index(run: &mut Run, input: &Input) -> CliResult<()> {
    let (n, seq, body) = closed_form(input)?;
    let flavor = match (&seq, &body) {
        (Some(_), _) => IndexBoundFlavor::S1Invariant,
        (None, Some(b)) if b.is_centrally_symmetric() => IndexBoundFlavor::CentrallySymmetric,
        _ => IndexBoundFlavor::General,
    };
    let report = seq.as_ref().map(sys_index);
    let zoll = seq
        .as_ref()
        .map(|s| is_generalized_zoll(s, n))
        .transpose()?;
    let out = IndexJson {
        n,
        index: report.map(|r| r.index),
        lower_bound_only: report.map(|r| r.lower_bound_only),
        generalized_zoll: zoll,
        flavor,
        index_bound: index_bound(n, flavor),
        bounds: IndexBounds {
            general: index_bound(n, IndexBoundFlavor::General),
            centrally_symmetric: index_bound(n, IndexBoundFlavor::CentrallySymmetric),
            s1_invariant: index_bound(n, IndexBoundFlavor::S1Invariant),
        },
        sequence: seq,
    };
    run.json("index.json", &out)?;
    match (out.index, out.generalized_zoll) {
        (Some(i), Some(z)) => run.say(format!("index = {i}, generalized zoll = {z}")),
        _ => run.say(format!(
            "no closed-form capacity sequence; index <= {} ({:?})",
            out.index_bound, flavor
        )),
    }
    Ok(())
}

#[derive(Serialize)]
struct ZollJson {
    generalized_zoll: Option<bool>,
    runs: usize,
    #[serde(flatten)]
    report: ZollReport,
}

fn write_zoll(
    run: &mut Run,
    body: &Body,
    results: &[SystoleResult],
    tols: &ZollTolerances,
    generalized_zoll: Option<bool>,
) -> CliResult<()> {
    let (clusters, mut report) =
        zoll::explore(body, results, tols, COVERAGE_SAMPLES, run.cfg.seed)?;
    for (i, (c, summary)) in clusters.iter().zip(report.clusters.iter_mut()).enumerate() {
        let name = format!("cluster_{i:03}.csv");
        run.csv(&name, &c.representative.gamma)?;
        summary.loop_csv = Some(name);
    }
    let labels: Vec<String> = clusters
        .iter()
        .take(MAX_PLOTTED)
        .enumerate()
        .map(|(i, c)| {
            format!(
                "cluster {i}: T = {:.6}, {} members",
                c.representative.action, c.members
            )
        })
        .collect();
    let traces: Vec<Trace> = clusters
        .iter()
        .zip(&labels)
        .map(|(c, l)| Trace {
            label: l,
            gamma: &c.representative.gamma,
        })
        .collect();
    if !traces.is_empty() {
        run.svg("clusters.svg", Some(body), &traces)?;
    }
    run.say(format!(
        "clusters = {}, coverage = {:.4}, uniqueness = {}, generalized zoll = {}",
        report.clusters.len(),
        report.coverage,
        report.uniqueness,
        generalized_zoll.map_or("unknown".to_string(), |z| z.to_string())
    ));
    if report.coverage_warning {
        run.say("warning: coverage computed from an empty or unconverged result set");
    }
    let out = ZollJson {
        generalized_zoll,
        runs: results.len(),
        report,
    };
    run.json("zoll.json", &out)
}

fn cmd_zoll(run: &mut Run, input: &Input, tol: Option<f64>) -> CliResult<()> {
    input.spec("zoll")?;
    let (n, seq, body) = closed_form(input)?;
    let body = body.expect("spec body");
    let zoll_flag = seq
        .as_ref()
        .map(|s| is_generalized_zoll(s, n))
        .transpose()?;
    let cfg = run.cfg.clone();
    let results = solve(run, &body, &cfg)?;
    let mut tols = ZollTolerances::for_body(&body);
    if let Some(t) = tol {
        tols.cluster = t * body.diameter();
    }
    write_zoll(run, &body, &results, &tols, zoll_flag)
}

#[derive(Serialize)]
struct JohnJson {
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
    gap: f64,
    iterations: usize,
    sandwich_factor: f64,
    symmetric: bool,
    tol: f64,
    #[serde(flatten)]
    bound: CapacityBoundReport,
    sandwich: SandwichReport,
}

fn cmd_john(run: &mut Run, input: &Input, numeric: bool, tol: Option<f64>) -> CliResult<()> {
    let body = input.spec("john")?.build()?;
    let jr = john::john_for_body(&body, tol.unwrap_or(john::DEFAULT_TOL))?;
    let sandwich = verify_sandwich(&body, &jr, SANDWICH_DIRECTIONS, run.cfg.seed)?;
    let c1 = if numeric {
        Some(c1_numeric(&body, &run.cfg)?)
    } else {
        None
    };
    let bound = capacity_bound_report(&body, &jr, c1, run.cfg.rel_tol())?;
    let e = &jr.ellipsoid;
    let shape = (0..e.dim())
        .map(|i| (0..e.dim()).map(|j| e.shape()[(i, j)]).collect())
        .collect();
    if !sandwich.passed {
        run.fail_numeric("sandwich verification failed");
    }
    if bound.consistent == Some(false) {
        run.fail_numeric("numeric c1 exceeds the ellipsoid bound");
    }
    run.say(format!(
        "ellipsoid gap {:.3e} after {} iterations; c1 <= {:.10}; index <= {} ({:?}); sandwich {}",
        jr.duality_gap,
        jr.iterations,
        bound.c1_bound,
        bound.index_bound,
        bound.flavor,
        if sandwich.passed { "passed" } else { "failed" }
    ));
    let out = JohnJson {
        center: e.center().to_vec(),
        shape,
        gap: jr.duality_gap,
        iterations: jr.iterations,
        sandwich_factor: jr.sandwich_factor,
        symmetric: jr.symmetric,
        tol: jr.tol,
        bound,
        sandwich,
    };
    run.json("john.json", &out)
}

#[derive(Serialize)]
struct CheckJson<'a> {
    #[serde(flatten)]
    systole: SystoleJson<'a>,
    corner_window: usize,
    active_tol: f64,
    certified_at: f64,
    tol: f64,
    passed: bool,
}

fn cmd_check(run: &mut Run, input: &Input, args: &CheckArgs, tol: Option<f64>) -> CliResult<()> {
    let body = input.spec("check")?.build()?;
    let file = fs::File::open(&args.loop_csv)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.loop_csv.display())))?;
    let gamma = TimeLoop::read_csv(std::io::BufReader::new(file))
        .map_err(|e| Failure::usage(format!("{}: {e}", args.loop_csv.display())))?;
    let opts = InclusionOptions {
        corner_window: args.window,
        active_tol: numeric_active_tol(boundary_residual(&body, &gamma)?),
    };
    let modes = run.cfg.modes.min(gamma.len() / 4).max(1);
    let mut s = certify_loop(&body, &gamma, modes, &opts)?;
    let certified_at = args.action.unwrap_or(s.action);
    if args.action.is_some() {
        s.inclusion_residual = inclusion_residual(&body, &gamma, certified_at, &opts)?.residual;
    }
    let tol = tol.unwrap_or(1e-2);
    let passed = s.inclusion_residual <= tol;
    let name = args
        .loop_csv
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    run.svg(
        "check.svg",
        Some(&body),
        &[Trace {
            label: &name,
            gamma: &gamma,
        }],
    )?;
    let out = CheckJson {
        systole: systole_json(&s, &args.loop_csv.display().to_string()),
        corner_window: args.window,
        active_tol: opts.active_tol,
        certified_at,
        tol,
        passed,
    };
    run.json("check.json", &out)?;
    let line = format!(
        "T = {:.10}, inclusion residual at {certified_at:.10}: {:.3e} (bound {tol:e}), boundary residual {:.3e}",
        s.action, s.inclusion_residual, s.boundary_residual
    );
    if passed {
        run.say(line);
    } else {
        run.fail_numeric(format!("{line}: not certified"));
    }
    Ok(())
}

const W11_GRID: usize = corpus::REGRESSION_GRID;
const W11_ORDERS: [usize; 3] = [2, 4, 8];
const W11_PLOTTED: usize = 4;

#[derive(Serialize)]
struct W11Row {
    n: usize,
    sup_distance: f64,
    sup_bound: f64,
    w11_gap: f64,
    w11_bound: f64,
    passed: bool,
}

#[derive(Serialize)]
struct W11Json {
    grid: usize,
    rows: Vec<W11Row>,
    all_passed: bool,
}

fn demo_w11(run: &mut Run) -> CliResult<()> {
    let body = Body::linf_times_l1();
    let g = corpus::bxb1_gamma_loop();
    let gs = g.sample(W11_GRID, 0.0)?;
    let mut rows = Vec::new();
    for n in W11_ORDERS {
        let gn = corpus::bxb1_gamma_n_loop(n)?;
        let sup = gs.sup_distance(&gn.sample(W11_GRID, 0.0)?);
        let gap = g.velocity_gap(&gn, 0.0, 0.25);
        let (sup_bound, w11_bound) = (1.0 / n as f64, 2.0);
        rows.push(W11Row {
            n,
            sup_distance: sup,
            sup_bound,
            w11_gap: gap,
            w11_bound,
            passed: sup <= sup_bound && gap >= w11_bound,
        });
    }
    let all_passed = rows.iter().all(|r| r.passed);
    run.say(format!(
        "{:>3}  {:>12}  {:>10}  {:>12}  {:>10}  result",
        "n", "sup |g-g_n|", "<= 1/n", "W11 gap", ">= 2"
    ));
    for r in &rows {
        run.say(format!(
            "{:>3}  {:>12.6}  {:>10.6}  {:>12.6}  {:>10.1}  {}",
            r.n,
            r.sup_distance,
            r.sup_bound,
            r.w11_gap,
            r.w11_bound,
            if r.passed { "PASS" } else { "FAIL" }
        ));
    }
    if !all_passed {
        run.code = EXIT_NUMERIC;
    }
    let plot_grid = 1024;
    let gamma = g.sample_exact(plot_grid)?;
    let gamma_n = corpus::bxb1_gamma_n_loop(W11_PLOTTED)?.sample_exact(plot_grid)?;
    run.csv("gamma.csv", &gamma)?;
    run.csv(&format!("gamma_{W11_PLOTTED}.csv"), &gamma_n)?;
    let label_n = format!("gamma_{W11_PLOTTED}");
    run.svg(
        "gamma_overlay.svg",
        Some(&body),
        &[
            Trace {
                label: "gamma",
                gamma: &gamma,
            },
            Trace {
                label: &label_n,
                gamma: &gamma_n,
            },
        ],
    )?;
    run.json(
        "bxb1_w11.json",
        &W11Json {
            grid: W11_GRID,
            rows,
            all_passed,
        },
    )
}

fn demo_families(run: &mut Run, tol: Option<f64>) -> CliResult<()> {
    let body = Body::linf_times_l1();
    let ro = RegressionOptions::default();
    let opts = InclusionOptions {
        corner_window: ro.corner_window,
        active_tol: corpus::ANALYTIC_TOL,
    };
    let refs = corpus::bxb1_family_refs(&corpus::FAMILY_C, &corpus::FAMILY_S);
    let results = refs
        .iter()
        .map(|r| certify_loop(&body, &r.sample(ro.probe_grid, ro.offset)?, 16, &opts))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut tols = ZollTolerances::for_body(&body);
    if let Some(t) = tol {
        tols.cluster = t * body.diameter();
    }
    run.say(format!("{} injected loops", results.len()));
    write_zoll(run, &body, &results, &tols, None)
}

fn demo_regressions(run: &mut Run, args: &CommonArgs, tol: Option<f64>) -> CliResult<()> {
    let defaults = RegressionOptions::default();
    let ro = RegressionOptions {
        modes: args.modes.unwrap_or(defaults.modes),
        starts: args.starts.unwrap_or(defaults.starts),
        seed: run.cfg.seed,
        rel_tol: tol.unwrap_or(defaults.rel_tol),
        ..defaults
    };
    let report = corpus::run_regressions(&ro)?;
    run.json("regressions.json", &report)?;
    let table = report.to_string();
    run.sink.write("regressions.txt", table.as_bytes())?;
    run.sink
        .write("examples.json", corpus::examples_json().as_bytes())?;
    run.say(table.trim_end().to_string());
    if !report.all_passed {
        run.fail_numeric(format!(
            "{} regression checks failed",
            report.failures().count()
        ));
    }
    Ok(())
}

fn cmd_demo(run: &mut Run, args: &DemoArgs, tol: Option<f64>) -> CliResult<()> {
    match args.which {
        Demo::Bxb1W11 => demo_w11(run),
        Demo::Bxb1Families => demo_families(run, tol),
        Demo::Regressions => demo_regressions(run, &args.common, tol),
    }
}

/// Whether `dir` holds a completed run.
pub fn is_complete(dir: &Path) -> bool {
    dir.join(MANIFEST_NAME).is_file()
}
