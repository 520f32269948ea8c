//! Command-line front end.
//!
//! Every command loads a JSON config, runs one computation, writes its result
//! atomically and prints a one-line summary. Failures print a JSON error
//! object on stderr and exit with a code that identifies the failure class.

mod output;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::analytics::{burstiness_report, latency_report, normalized_report, sample_heterogeneous_network, Replicate};
use crate::config::{parse_config, ConfigError, Diagnostic, LoadedConfig};
use crate::error::Error;
use crate::gibbs::{gradient_descent, DescentOptions, Multipliers};
use crate::network::NetworkConfig;
use crate::oracle::{build_periodic_schedule, nonclique_bounds, solve_lp};
use crate::protocol::ProtocolVariant;
use crate::simulator::{run_simulation, run_simulation_traced, trace_to_csv, verify_detailed_balance, Estimator, SimConfig};
use crate::state_space::ThroughputMode;

pub use output::{write_atomic, Format};

/// Directory for results when `--output` is not given.
pub const OUTPUT_DIR_ENV: &str = "CASTLAB_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG_SYNTAX: i32 = 3;
pub const EXIT_CONFIG_SCHEMA: i32 = 4;
pub const EXIT_MODULE: i32 = 5;
pub const EXIT_IO: i32 = 6;

const EXIT_HELP: &str = "Exit codes:
  0  success
  2  bad command line
  3  config file unreadable as JSON
  4  config violates the schema (all problems listed)
  5  computation failed (solver, domain or size error)
  6  could not read the config or write results";

#[derive(Debug, Parser)]
#[command(name = "castlab", version, about = "Energy-constrained broadcast: oracle, Gibbs solver, protocol simulator", after_help = EXIT_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Groupput,
    Anyput,
}

impl From<ModeArg> for ThroughputMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Groupput => ThroughputMode::Groupput,
            ModeArg::Anyput => ThroughputMode::Anyput,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Capture,
    #[value(alias = "non-capture", alias = "non_capture")]
    Noncapture,
}

impl From<VariantArg> for ProtocolVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Capture => ProtocolVariant::Capture,
            VariantArg::Noncapture => ProtocolVariant::NonCapture,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Perfect,
    Ping,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Perfect => Estimator::Perfect,
            EstimatorArg::Ping => Estimator::PingBased,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON network or simulation config.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config field before validation, e.g. `--set sigma=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Result file; defaults to `$CASTLAB_OUTPUT_DIR/<command>.<ext>` or the current directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SimFlags {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal centralized throughput (non-clique networks get lower/upper bounds).
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "groupput")]
        mode: ModeArg,
    },
    /// Entropy-perturbed optimum by dual descent.
    Gibbs {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-7)]
        stop_tol: f64,
    },
    /// Event-driven protocol simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        /// Also write every state change as CSV to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Pairwise detailed-balance check of protocol rates against the Gibbs law.
    Balance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        /// Multipliers in 1/W, comma separated; defaults to the config's or zeros.
        #[arg(long, value_delimiter = ',')]
        eta: Option<Vec<f64>>,
    },
    /// Analytic burst length, optionally compared with a simulation at the optimal multipliers.
    Burstiness {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long)]
        simulate: bool,
    },
    /// Normalized throughput of random heterogeneous networks.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        sigma: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "10,50,100")]
        h: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        #[arg(long, default_value_t = 5)]
        nodes: usize,
        #[arg(long, value_enum, default_value = "groupput")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parallel workers; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Also simulate each replicate for this many seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Baseline throughput ratio to compare against, e.g. `--baseline panda=0.005`.
        #[arg(long, value_name = "NAME=RATIO")]
        baseline: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Periodic slot schedule realizing the oracle fractions.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "groupput")]
        mode: ModeArg,
        /// Slot length in seconds.
        #[arg(long, default_value_t = 1e-3)]
        slot: f64,
        #[arg(long, default_value_t = 100_000)]
        max_denominator: u64,
    },
    /// Check a config and print it with units normalized to SI.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

/// A failure with its exit code and a machine-readable body.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, kind: "usage", message: message.into(), diagnostics: Vec::new() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: EXIT_IO, kind: "io", message: message.into(), diagnostics: Vec::new() }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind, "exit_code": self.code, "message": self.message, "diagnostics": self.diagnostics } })
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: EXIT_MODULE, kind: "module", message: e.to_string(), diagnostics: Vec::new() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let message = e.to_string();
        match e {
            ConfigError::Io(_) => Failure::io(message),
            ConfigError::Parse { line, column, message: m } => Failure {
                code: EXIT_CONFIG_SYNTAX,
                kind: "config_syntax",
                message,
                diagnostics: vec![Diagnostic { path: String::new(), line, column, message: m }],
            },
            ConfigError::Invalid(diagnostics) => Failure { code: EXIT_CONFIG_SCHEMA, kind: "config_schema", message, diagnostics },
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            f.code
        }
    }
}

/// Runs one command and returns its summary line.
pub fn run(command: &Command) -> Result<String, Failure> {
    match command {
        Command::Oracle { common, mode } => cmd_oracle(common, (*mode).into()),
        Command::Gibbs { common, mode, sigma, max_iters, stop_tol } => cmd_gibbs(common, *mode, *sigma, *max_iters, *stop_tol),
        Command::Simulate { common, sim, trace } => cmd_simulate(common, sim, trace.as_deref()),
        Command::Balance { common, sim, eta } => cmd_balance(common, sim, eta.as_deref()),
        Command::Burstiness { common, sim, simulate } => cmd_burstiness(common, sim, *simulate),
        Command::Sweep { sigma, h, replicates, nodes, mode, seed, jobs, duration, baseline, output, format } => {
            let spec = SweepSpec {
                sigmas: sigma.clone(),
                hs: h.clone(),
                replicates: *replicates,
                nodes: *nodes,
                mode: (*mode).into(),
                seed: *seed,
                jobs: *jobs,
                duration: *duration,
                baselines: parse_baselines(baseline)?,
            };
            cmd_sweep(&spec, output.as_deref(), *format)
        }
        Command::Schedule { common, mode, slot, max_denominator } => cmd_schedule(common, (*mode).into(), *slot, *max_denominator),
        Command::Validate { common } => cmd_validate(common),
    }
}

fn load(common: &Common) -> Result<LoadedConfig, Failure> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| Failure::io(format!("{}: {e}", common.config.display())))?;
    if common.overrides.is_empty() {
        return Ok(parse_config(&text)?);
    }
    let mut root: Value = serde_json::from_str(&text).map_err(|e| Failure::from(ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }))?;
    for o in &common.overrides {
        apply_override(&mut root, o)?;
    }
    Ok(parse_config(&serde_json::to_string_pretty(&root).expect("value serializes"))?)
}

/// `a.b=value` sets `root["a"]["b"]`; the value is parsed as JSON when possible, else taken as a string.
fn apply_override(root: &mut Value, spec: &str) -> Result<(), Failure> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Failure::usage(format!("override \"{spec}\" is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = root;
    for part in key.split('.') {
        if !slot.is_object() {
            return Err(Failure::usage(format!("override \"{key}\" does not name an object field")));
        }
        slot = slot.as_object_mut().expect("checked").entry(part).or_insert(Value::Null);
    }
    *slot = value;
    Ok(())
}

fn output_path(explicit: Option<&Path>, command: &str, format: Format) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    let dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("{command}.{}", format.extension()))
}

fn emit(common: &Common, command: &str, json_value: &Value, csv: impl FnOnce() -> Result<String, Failure>) -> Result<PathBuf, Failure> {
    let path = output_path(common.output.as_deref(), command, common.format);
    emit_to(&path, common.format, json_value, csv)?;
    Ok(path)
}

fn emit_to(path: &Path, format: Format, json_value: &Value, csv: impl FnOnce() -> Result<String, Failure>) -> Result<(), Failure> {
    let body = match format {
        Format::Json => serde_json::to_string_pretty(json_value).expect("value serializes") + "\n",
        Format::Csv => csv()?,
    };
    write_atomic(path, body.as_bytes()).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn sim_config(loaded: &LoadedConfig, flags: &SimFlags) -> Result<SimConfig, Failure> {
    let mut c = match loaded {
        LoadedConfig::Simulation { simulation } => simulation.clone(),
        LoadedConfig::Network { network } => {
            let sigma = flags.sigma.ok_or_else(|| Failure::usage("network configs need --sigma"))?;
            let duration = flags.duration.unwrap_or(1e5);
            SimConfig::new(network.clone(), sigma, duration)
        }
    };
    if let Some(m) = flags.mode {
        c.mode = m.into();
    }
    if let Some(v) = flags.variant {
        c.variant = v.into();
    }
    if let Some(s) = flags.sigma {
        c.sigma = s;
    }
    if let Some(s) = flags.seed {
        c.seed = s;
    }
    if let Some(d) = flags.duration {
        c.duration = d;
    }
    if let Some(e) = flags.estimator {
        c.estimator = e.into();
    }
    let problems = c.violations();
    if !problems.is_empty() {
        return Err(Failure {
            code: EXIT_USAGE,
            kind: "usage",
            message: format!("flags produce an invalid simulation: {}", problems.join("; ")),
            diagnostics: Vec::new(),
        });
    }
    Ok(c)
}

fn cmd_oracle(common: &Common, mode: ThroughputMode) -> Result<String, Failure> {
    let loaded = load(common)?;
    let net = loaded.network();
    if !net.topology.is_clique() {
        if mode != ThroughputMode::Groupput {
            return Err(Error::WrongSolver("non-clique networks only have groupput bounds".into()).into());
        }
        let b = nonclique_bounds(net)?;
        let v = serde_json::to_value(&b).expect("serializes");
        let path = emit(common, "oracle", &v, || output::bounds_csv(&b))?;
        return Ok(format!("groupput bounds lower {:.6e} upper {:.6e} -> {}", b.lower.throughput, b.upper.throughput, path.display()));
    }
    let s = solve_lp(net, mode)?;
    let v = serde_json::to_value(&s).expect("serializes");
    let path = emit(common, "oracle", &v, || output::fractions_csv(&s.alpha, &s.beta, None))?;
    Ok(format!("{mode} throughput {:.6e} -> {}", s.throughput, path.display()))
}

fn cmd_gibbs(common: &Common, mode: Option<ModeArg>, sigma: Option<f64>, max_iters: usize, stop_tol: f64) -> Result<String, Failure> {
    let loaded = load(common)?;
    let sim = loaded.simulation();
    let sigma = sigma.or(sim.map(|s| s.sigma)).ok_or_else(|| Failure::usage("network configs need --sigma"))?;
    let mode = mode.map(ThroughputMode::from).or(sim.map(|s| s.mode)).unwrap_or_default();
    let opts = DescentOptions { max_iters, stop_tol, ..Default::default() };
    let g = gradient_descent(loaded.network(), sigma, mode, &opts)?;
    let v = serde_json::to_value(&g).expect("serializes");
    let path = emit(common, "gibbs", &v, || output::fractions_csv(&g.alpha, &g.beta, Some(&g.multipliers.eta)))?;
    Ok(format!(
        "{mode} throughput {:.6e} converged {} after {} iterations -> {}",
        g.throughput,
        g.converged,
        g.iterations,
        path.display()
    ))
}

fn cmd_simulate(common: &Common, flags: &SimFlags, trace: Option<&Path>) -> Result<String, Failure> {
    let c = sim_config(&load(common)?, flags)?;
    let m = match trace {
        Some(tp) => {
            let (m, events) = run_simulation_traced(&c)?;
            let csv = trace_to_csv(&events)?;
            write_atomic(tp, csv.as_bytes()).map_err(|e| Failure::io(format!("{}: {e}", tp.display())))?;
            m
        }
        None => run_simulation(&c)?,
    };
    let v = serde_json::to_value(&m).expect("serializes");
    let path = emit(common, "simulate", &v, || output::sim_csv(&m))?;
    Ok(format!("groupput {:.6e} anyput {:.6e} events {} -> {}", m.groupput, m.anyput, m.events, path.display()))
}

fn cmd_balance(common: &Common, flags: &SimFlags, eta: Option<&[f64]>) -> Result<String, Failure> {
    let loaded = load(common)?;
    let c = sim_config(&loaded, flags)?;
    let eta = match eta {
        Some(e) => Multipliers::new(e.to_vec())?,
        None => c.freeze_multipliers.clone().or(c.initial_multipliers.clone()).unwrap_or_else(|| Multipliers::zeros(c.network.len())),
    };
    let r = verify_detailed_balance(&c.network, &eta, c.sigma, c.variant, c.mode)?;
    let v = serde_json::to_value(&r).expect("serializes");
    let path = emit(common, "balance", &v, || output::balance_csv(&r))?;
    Ok(format!("max violation {:.3e} over {} pairs -> {}", r.max_violation, r.pairs_checked, path.display()))
}

fn cmd_burstiness(common: &Common, flags: &SimFlags, simulate: bool) -> Result<String, Failure> {
    let loaded = load(common)?;
    let mut c = sim_config(&loaded, flags)?;
    let g = gradient_descent(&c.network, c.sigma, c.mode, &DescentOptions { record_trace: false, ..Default::default() })?;
    let (samples, latency) = if simulate {
        c.freeze_multipliers = Some(g.multipliers.clone());
        let m = run_simulation(&c)?;
        let lat = latency_report(&m).ok();
        (m.episode_lengths, lat)
    } else {
        (Vec::new(), None)
    };
    let r = burstiness_report(&g.distribution, c.sigma, c.mode, &c.network, &samples)?;
    let v = json!({ "burstiness": r, "latency": latency });
    let path = emit(common, "burstiness", &v, || output::burst_csv(&r, latency.as_ref()))?;
    let empirical = r.empirical_mean.map_or("n/a".to_string(), |e| format!("{e:.3}"));
    Ok(format!("analytic burst {:.3} packets, simulated {empirical} -> {}", r.analytic_mean, path.display()))
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub sigmas: Vec<f64>,
    pub hs: Vec<f64>,
    pub replicates: usize,
    pub nodes: usize,
    pub mode: ThroughputMode,
    pub seed: u64,
    pub jobs: usize,
    pub duration: Option<f64>,
    pub baselines: BTreeMap<String, f64>,
}

fn parse_baselines(specs: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    specs
        .iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| Failure::usage(format!("baseline \"{s}\" is not NAME=RATIO")))?;
            let v: f64 = v.parse().map_err(|_| Failure::usage(format!("baseline \"{s}\" has a non-numeric ratio")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

/// One row per `(h, σ)`. Replicate `r` draws its network from stream `r` of
/// the seed, so every `σ` sees the same networks.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<(f64, crate::analytics::NormalizedRow)>, Failure> {
    if spec.replicates == 0 || spec.nodes == 0 {
        return Err(Failure::usage("sweep needs at least one replicate and one node"));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(spec.jobs).build().map_err(|e| Failure::usage(e.to_string()))?;
    let mut tasks = Vec::new();
    for &h in &spec.hs {
        for &sigma in &spec.sigmas {
            for r in 0..spec.replicates {
                tasks.push((h, sigma, r));
            }
        }
    }
    let results: Vec<Result<Replicate, Error>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(h, sigma, r)| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(r as u64);
                let net = sample_heterogeneous_network(h, spec.nodes, &mut rng)?;
                replicate(&net, h, sigma, spec, r as u64)
            })
            .collect()
    });
    let reps = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (k, chunk) in reps.chunks(spec.replicates).enumerate() {
        let h = tasks[k * spec.replicates].0;
        let mut r = normalized_report(chunk, &spec.baselines)?;
        rows.push((h, r.remove(0)));
    }
    Ok(rows)
}

fn replicate(net: &NetworkConfig, h: f64, sigma: f64, spec: &SweepSpec, index: u64) -> Result<Replicate, Error> {
    let oracle = solve_lp(net, spec.mode)?;
    let gibbs = gradient_descent(net, sigma, spec.mode, &DescentOptions { record_trace: false, ..Default::default() })?;
    let simulated = match spec.duration {
        Some(d) => {
            let mut c = SimConfig::new(net.clone(), sigma, d);
            c.mode = spec.mode;
            c.seed = spec.seed.wrapping_add(index);
            c.initial_multipliers = Some(gibbs.multipliers.clone());
            Some(run_simulation(&c)?)
        }
        None => None,
    };
    Ok(Replicate { group: format!("h={h} sigma={sigma}"), oracle, gibbs, simulated })
}

fn cmd_sweep(spec: &SweepSpec, output: Option<&Path>, format: Format) -> Result<String, Failure> {
    let rows = run_sweep(spec)?;
    let path = output_path(output, "sweep", format);
    let v = serde_json::to_value(rows.iter().map(|(h, r)| json!({ "h": h, "row": r })).collect::<Vec<_>>()).expect("serializes");
    emit_to(&path, format, &v, || output::sweep_csv(&rows))?;
    Ok(format!("{} rows -> {}", rows.len(), path.display()))
}

fn cmd_schedule(common: &Common, mode: ThroughputMode, slot: f64, max_den: u64) -> Result<String, Failure> {
    let loaded = load(common)?;
    let s = solve_lp(loaded.network(), mode)?;
    let sched = build_periodic_schedule(&s, slot, max_den)?;
    let audit = sched.audit(loaded.network())?;
    let v = json!({ "schedule": sched, "audit": audit });
    let path = emit(common, "schedule", &v, || output::schedule_csv(&sched))?;
    Ok(format!("period {} slots, groupput {:.6e} -> {}", sched.period, audit.groupput, path.display()))
}

fn cmd_validate(common: &Common) -> Result<String, Failure> {
    let loaded = load(common)?;
    let v = loaded.to_json();
    let net = loaded.network();
    let path = emit(common, "validate", &v, || Ok(output::nodes_csv(net)))?;
    let kind = if loaded.simulation().is_some() { "simulation" } else { "network" };
    Ok(format!("valid {kind} config, {} nodes -> {}", net.len(), path.display()))
}
