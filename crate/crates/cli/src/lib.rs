//! `supportive` command line.
//!
//! ```text
//! supportive validate --htm models/table.json
//! supportive compile  --benchmark leg
//! supportive simulate --benchmark uniform --policy pomcp,random,repeat --n 100 --out results/uniform
//! supportive sweep    --benchmark leg --points 20 --out results/leg
//! supportive simulate --manifest results/uniform.manifest.json --out rerun/uniform
//! supportive serve    --port 8080
//! ```
//!
//! `simulate` writes `<out>.episodes.csv`, `<out>.summary.csv` and, with
//! `--traces`, `<out>.traces.jsonl`; `sweep` writes `<out>.sweep.csv`. Both
//! write `<out>.manifest.json`, which holds the task model inline together with
//! every setting and seed; passing it back with `--manifest` reproduces the
//! CSV byte for byte. Column layouts are listed in
//! [`supportive_core::harness::report`].
//!
//! Failures print one JSON line `{"error": kind, "message": ...}` on stderr
//! and exit nonzero (2 for usage errors, 1 otherwise).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use supportive_core::harness::{
    build_benchmark, linspace, preference_sweep, report, run_batch, BenchmarkParams, EnvConfig, PolicyKind,
};
use supportive_core::htm::{parse_htm, serialize_htm, validate_htm};
use supportive_core::planner::Horizon;
use supportive_core::rng::episode_seed;
use supportive_core::{compile, CompilerConfig, GenerativeModel, Htm, SearchConfig};
use thiserror::Error;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "SUPPORTIVE_CONFIG";
pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "supportive", version, about = "Supportive-behavior planning for collaborative assembly")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a task model and print its diagnostics.
    Validate(ModelArgs),
    /// Compile a task model and print its size.
    Compile(ModelArgs),
    /// Run a batch of episodes for each policy.
    Simulate(SimulateArgs),
    /// Run every strategy over a grid of hold-preference probabilities.
    Sweep(SweepArgs),
    /// Serve live sessions over WebSocket and HTTP.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Task-model document (JSON).
    #[arg(long, conflicts_with = "benchmark")]
    htm: Option<PathBuf>,
    /// Built-in model: sequential, uniform, alternative, table, leg.
    #[arg(long)]
    benchmark: Option<String>,
    /// Settings file with optional `compiler`, `search`, `env` and
    /// `benchmark_params` sections.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Episodes per batch.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-step probability that an object appears or vanishes on its own.
    #[arg(long)]
    noise: Option<f64>,
    /// Probability that a bring or clean-up succeeds.
    #[arg(long)]
    success: Option<f64>,
    /// Planner lookahead in completed subtasks.
    #[arg(long)]
    horizon_subtasks: Option<u32>,
    /// Planner simulations per step.
    #[arg(long)]
    sims: Option<u32>,
    /// Output path prefix.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Worker threads (all cores by default).
    #[arg(long)]
    jobs: Option<usize>,
    /// Rerun a previous manifest; only --out and --jobs may be combined with it.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated policy ids: pomcp, random, repeat, always-hold, never-hold.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<String>,
    /// Prior probability that the builder wants holding.
    #[arg(long)]
    p_hold: Option<f64>,
    /// Also write per-step traces.
    #[arg(long)]
    traces: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated strategies (default pomcp,always-hold,never-hold).
    #[arg(long, value_delimiter = ',')]
    policy: Vec<String>,
    /// Evenly spaced grid points from 0 to 1.
    #[arg(long)]
    points: Option<usize>,
    /// Explicit comma-separated grid, replacing --points.
    #[arg(long, value_delimiter = ',', conflicts_with = "points")]
    p_hold: Vec<f64>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Model(String),
    #[error("invalid task model ({} problems)", .0.len())]
    Invalid(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Model(_) => "model",
            CliError::Invalid(_) => "invalid-model",
            CliError::Io { .. } => "io",
            CliError::Run(_) => "run",
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let mut v = json!({"error": self.kind(), "message": self.to_string()});
        if let CliError::Invalid(d) = self {
            v["diagnostics"] = json!(d);
        }
        v
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Settings file layout; every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub compiler: CompilerConfig,
    pub search: SearchConfig,
    pub env: EnvConfig,
    pub benchmark_params: BenchmarkParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Simulate,
    Sweep,
}

/// Everything needed to reproduce a `simulate` or `sweep` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub command: RunKind,
    /// Where the model came from; informational.
    pub source: String,
    /// The task-model document, inline.
    pub htm: serde_json::Value,
    pub compiler: CompilerConfig,
    pub search: SearchConfig,
    pub env: EnvConfig,
    pub policies: Vec<String>,
    pub repeat_cycles: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Seed of each episode, in order; every policy and grid point reuses them.
    pub episode_seeds: Vec<u64>,
    /// Hold-preference grid (sweeps only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_grid: Vec<f64>,
}

impl Manifest {
    fn check(&self) -> Result<(), CliError> {
        if self.format != MANIFEST_FORMAT {
            return Err(CliError::Config(format!(
                "manifest format {} is not supported (expected {MANIFEST_FORMAT})",
                self.format
            )));
        }
        if self.episodes == 0 {
            return Err(CliError::Config("episode count must be at least 1".into()));
        }
        let expected: Vec<u64> = (0..self.episodes as u64).map(|i| episode_seed(self.seed, i)).collect();
        if self.episode_seeds != expected {
            return Err(CliError::Config("episode_seeds do not follow from seed".into()));
        }
        if self.policies.is_empty() {
            return Err(CliError::Config("no policies given".into()));
        }
        self.env.noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.search.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    fn policy_kinds(&self) -> Result<Vec<PolicyKind>, CliError> {
        self.policies
            .iter()
            .map(|id| {
                let kind = PolicyKind::from_id(id, &self.search).map_err(|e| CliError::Config(e.to_string()))?;
                Ok(match kind {
                    PolicyKind::Repeat { .. } => PolicyKind::Repeat {
                        cycles: self.repeat_cycles,
                    },
                    k => k,
                })
            })
            .collect()
    }

    fn model(&self) -> Result<GenerativeModel, CliError> {
        let htm = parse_htm(&self.htm.to_string()).map_err(|e| CliError::Model(e.to_string()))?;
        compile(&htm, &self.compiler).map_err(|e| CliError::Model(e.to_string()))
    }
}

/// Parse `argv` (program name first), run the command, and return the exit
/// status. Normal output goes to `out`, the error line to `err`.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            return report_error(err, &CliError::Usage(e.render().to_string().trim().to_string()));
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => report_error(err, &e),
    }
}

fn report_error(err: &mut dyn Write, e: &CliError) -> i32 {
    let _ = writeln!(err, "{}", e.to_json());
    e.exit_code()
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Validate(args) => validate(&args, out),
        Command::Compile(args) => compile_summary(&args, out),
        Command::Simulate(args) => {
            let jobs = args.run.jobs;
            let prefix = args.run.out.clone();
            let manifest = simulate_manifest(&args)?;
            let mut buf = Vec::new();
            with_jobs(jobs, || run_simulate(&manifest, &prefix, args.traces, &mut buf))?;
            out.write_all(&buf).map_err(stdout_err)
        }
        Command::Sweep(args) => {
            let jobs = args.run.jobs;
            let prefix = args.run.out.clone();
            let manifest = sweep_manifest(&args)?;
            let mut buf = Vec::new();
            with_jobs(jobs, || run_sweep(&manifest, &prefix, &mut buf))?;
            out.write_all(&buf).map_err(stdout_err)
        }
        Command::Serve(args) => serve(&args, out),
    }
}

fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError>
where
    T: Send,
{
    match jobs {
        None => f(),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Run(e.to_string()))?
            .install(f),
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// The task model named by `--htm` or `--benchmark`, with a source label.
fn load_htm(args: &ModelArgs, params: &BenchmarkParams) -> Result<(Htm, String), CliError> {
    match (&args.htm, &args.benchmark) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let htm = parse_htm(&text).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))?;
            Ok((htm, format!("file:{}", path.display())))
        }
        (None, Some(name)) => {
            let htm = build_benchmark(name, params).map_err(|e| CliError::Model(e.to_string()))?;
            Ok((htm, format!("benchmark:{name}")))
        }
        (None, None) => Err(CliError::Usage("give --htm <file> or --benchmark <name>".into())),
    }
}

fn validate(args: &ModelArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let (htm, _) = load_htm(args, &config.benchmark_params)?;
    let mut problems: Vec<String> = validate_htm(&htm).iter().map(ToString::to_string).collect();
    if problems.is_empty() {
        // instance enumeration and config checks happen at compile time
        if let Err(e) = compile(&htm, &config.compiler) {
            problems.push(e.to_string());
        }
    }
    for p in &problems {
        writeln!(out, "{p}").map_err(io_err(Path::new("<stdout>")))?;
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invalid(problems))
    }
}

fn compile_summary(args: &ModelArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let (htm, _) = load_htm(args, &config.benchmark_params)?;
    let m = compile(&htm, &config.compiler).map_err(|e| CliError::Model(e.to_string()))?;
    let u = m.universe();
    let labels: Vec<String> = m.actions().iter().map(|&a| u.action_label(a)).collect();
    let text = format!(
        "model: {}\nstate_features: {}\nactions: {}\naction_labels: {}\ninstances: {}\nmax_instance_len: {}\npreferences: {}\n",
        m.name(),
        m.state_feature_count(),
        labels.len(),
        labels.join(" "),
        m.instances().len(),
        m.max_instance_len(),
        u.preferences.join(" "),
    );
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

/// Flags other than --out and --jobs that a manifest replaces.
fn overridden_flags(run: &RunArgs, policy: &[String], extra: bool) -> Vec<&'static str> {
    let mut set = Vec::new();
    let flags = [
        ("--htm", run.model.htm.is_some()),
        ("--benchmark", run.model.benchmark.is_some()),
        ("--n", run.n.is_some()),
        ("--seed", run.seed.is_some()),
        ("--noise", run.noise.is_some()),
        ("--success", run.success.is_some()),
        ("--horizon-subtasks", run.horizon_subtasks.is_some()),
        ("--sims", run.sims.is_some()),
        ("--policy", !policy.is_empty()),
        ("--p-hold/--points", extra),
    ];
    for (name, given) in flags {
        if given {
            set.push(name);
        }
    }
    set
}

fn load_manifest(path: &Path, kind: RunKind) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if m.command != kind {
        return Err(CliError::Usage(format!(
            "{} is a {:?} manifest",
            path.display(),
            m.command
        )));
    }
    m.check()?;
    Ok(m)
}

/// Common part of a fresh manifest: model, configs and seeds.
fn base_manifest(run: &RunArgs, command: RunKind, policies: Vec<String>) -> Result<(Manifest, Htm), CliError> {
    let config = load_config(run.model.config.as_deref())?;
    let (htm, source) = load_htm(&run.model, &config.benchmark_params)?;
    let mut compiler = config.compiler;
    let mut env = config.env;
    let mut search = config.search;
    if let Some(p) = run.noise {
        env.noise.object_toggle = p;
    }
    if let Some(p) = run.success {
        env.noise.manipulation_success = p;
    }
    // the compiled model carries the environment's noise too
    compiler.noise = env.noise;
    if let Some(k) = run.horizon_subtasks {
        search.horizon = Horizon::MaxSubtasks(k);
    }
    if let Some(s) = run.sims {
        search.simulations = s;
    }
    let episodes = run.n.unwrap_or(100);
    let seed = run.seed.unwrap_or(0);
    let htm_value: serde_json::Value =
        serde_json::from_str(&serialize_htm(&htm)).map_err(|e| CliError::Model(e.to_string()))?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        command,
        source,
        htm: htm_value,
        compiler,
        search,
        env,
        policies,
        repeat_cycles: supportive_core::baselines::RepeatPolicy::DEFAULT_CYCLES,
        episodes,
        seed,
        episode_seeds: (0..episodes as u64).map(|i| episode_seed(seed, i)).collect(),
        p_grid: Vec::new(),
    };
    Ok((manifest, htm))
}

fn simulate_manifest(args: &SimulateArgs) -> Result<Manifest, CliError> {
    if let Some(path) = &args.run.manifest {
        let set = overridden_flags(&args.run, &args.policy, args.p_hold.is_some());
        if !set.is_empty() {
            return Err(CliError::Usage(format!("--manifest cannot be combined with {}", set.join(", "))));
        }
        return load_manifest(path, RunKind::Simulate);
    }
    let policies = if args.policy.is_empty() {
        vec!["pomcp".to_string()]
    } else {
        args.policy.clone()
    };
    let (mut manifest, htm) = base_manifest(&args.run, RunKind::Simulate, policies)?;
    if let Some(p) = args.p_hold {
        // record the prior under the hold preference's name
        let m = compile(&htm, &manifest.compiler).map_err(|e| CliError::Model(e.to_string()))?;
        let hold = m
            .hold_preference()
            .ok_or_else(|| CliError::Config("--p-hold given but the model has no hold preference".into()))?;
        let name = m.universe().preference_name(hold).to_string();
        manifest.compiler.preference_prior.insert(name, p);
    }
    manifest.check()?;
    Ok(manifest)
}

fn sweep_manifest(args: &SweepArgs) -> Result<Manifest, CliError> {
    if let Some(path) = &args.run.manifest {
        let set = overridden_flags(&args.run, &args.policy, args.points.is_some() || !args.p_hold.is_empty());
        if !set.is_empty() {
            return Err(CliError::Usage(format!("--manifest cannot be combined with {}", set.join(", "))));
        }
        return load_manifest(path, RunKind::Sweep);
    }
    let policies = if args.policy.is_empty() {
        ["pomcp", "always-hold", "never-hold"].map(String::from).to_vec()
    } else {
        args.policy.clone()
    };
    let (mut manifest, _) = base_manifest(&args.run, RunKind::Sweep, policies)?;
    manifest.p_grid = if args.p_hold.is_empty() {
        linspace(args.points.unwrap_or(20))
    } else {
        args.p_hold.clone()
    };
    if manifest.p_grid.is_empty() {
        return Err(CliError::Usage("the sweep grid is empty".into()));
    }
    manifest.check()?;
    Ok(manifest)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Render into memory, then write the file in one go.
fn write_file(path: &Path, render: impl FnOnce(&mut Vec<u8>) -> Result<(), String>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    render(&mut buf).map_err(CliError::Run)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, buf).map_err(io_err(path))
}

fn write_manifest(prefix: &Path, manifest: &Manifest) -> Result<PathBuf, CliError> {
    let path = with_suffix(prefix, ".manifest.json");
    write_file(&path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, manifest).map_err(|e| e.to_string())?;
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(path)
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

fn run_simulate(manifest: &Manifest, prefix: &Path, traces: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let model = manifest.model()?;
    let mut stats = Vec::new();
    let mut episodes = Vec::new();
    for kind in manifest.policy_kinds()? {
        let batch = run_batch(&model, &kind, manifest.episodes, &manifest.env, manifest.seed)
            .map_err(|e| CliError::Run(e.to_string()))?;
        stats.push(batch.stats);
        episodes.extend(batch.episodes);
    }
    let episodes_path = with_suffix(prefix, ".episodes.csv");
    write_file(&episodes_path, |b| report::write_episodes(b, &episodes).map_err(|e| e.to_string()))?;
    let summary_path = with_suffix(prefix, ".summary.csv");
    write_file(&summary_path, |b| report::write_summary(b, &stats).map_err(|e| e.to_string()))?;
    let mut written = vec![episodes_path, summary_path];
    if traces {
        let path = with_suffix(prefix, ".traces.jsonl");
        write_file(&path, |b| report::write_traces(b, &episodes).map_err(|e| e.to_string()))?;
        written.push(path);
    }
    written.push(write_manifest(prefix, manifest)?);
    report::write_summary(&mut *out, &stats).map_err(|e| CliError::Run(e.to_string()))?;
    for p in written {
        writeln!(out, "wrote {}", p.display()).map_err(stdout_err)?;
    }
    Ok(())
}

fn run_sweep(manifest: &Manifest, prefix: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let model = manifest.model()?;
    let kinds = manifest.policy_kinds()?;
    let cells = preference_sweep(&model, &kinds, &manifest.p_grid, manifest.episodes, &manifest.env, manifest.seed)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let path = with_suffix(prefix, ".sweep.csv");
    write_file(&path, |b| report::write_sweep(b, &cells).map_err(|e| e.to_string()))?;
    let manifest_path = write_manifest(prefix, manifest)?;
    report::write_sweep(&mut *out, &cells).map_err(|e| CliError::Run(e.to_string()))?;
    writeln!(out, "wrote {}\nwrote {}", path.display(), manifest_path.display()).map_err(stdout_err)
}

fn serve(args: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Run(e.to_string()))?;
    runtime.block_on(async {
        let addr = SocketAddr::new(args.host, args.port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Run(format!("cannot bind {addr}: {e}")))?;
        let bound = listener.local_addr().map_err(|e| CliError::Run(e.to_string()))?;
        writeln!(out, "{}", json!({"listening": bound.to_string(), "ws": "/ws"})).map_err(stdout_err)?;
        out.flush().map_err(stdout_err)?;
        supportive_server::serve_listener(listener)
            .await
            .map_err(|e| CliError::Run(e.to_string()))
    })
}

