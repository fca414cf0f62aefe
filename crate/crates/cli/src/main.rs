//! `inarmix`: simulation, dependence coefficients, gap certificates and
//! verification campaigns for INAR(1) processes.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or config
//! error, 3 resource limit.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use inar_mixing::chains::{
    binomial_death_chain, iid_chain, inar_kernel, indicator_chain, indicator_chain_spec, marginal_at,
    poisson_death_chain, simulate_chain, simulate_inar_direct, simulate_inar_superposition, InarParams,
    MarkovChainSpec, SuperpositionConfig,
};
use inar_mixing::dist::{poisson_pmf, SeedSpec, DEFAULT_TAIL_BUDGET};
use inar_mixing::json::to_string_pretty;
use inar_mixing::mixing::{check_cap, fit_decay_rate, gap_for_epsilon, rho_markov, rho_star_window, DeltaRegistry};
use inar_mixing::verify::{run_campaign, Control, McConfig};
use inar_mixing::Error;

use config::{read_config_file, resolve};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let hint = match &e {
            Error::CapTooSmall { .. } => "raise --cap or loosen --tail-budget",
            Error::TooWideWindow { .. } | Error::TooLargeWindow { .. } => "lower --width or --cap",
            Error::TooLargeAlphabet { .. } => "lower --cap or the window width",
            Error::TailTooLarge { .. } => "tighten --tail-budget",
            _ => "",
        };
        let mut message = e.to_string();
        if !hint.is_empty() {
            message.push_str("\nhint: ");
            message.push_str(hint);
        }
        Self {
            code: if e.is_resource_limit() { 3 } else { 2 },
            message,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(format!("i/o error: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "inarmix", version, about = "INAR(1) mixing laboratory")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config (or any artifact with an embedded config); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output artifacts.
    #[arg(long, global = true, env = "INARMIX_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and write them as CSV.
    Simulate(SimulateFlags),
    /// Markov coefficient rho(X_0, X_n) for n = 1..n_max with a decay fit.
    Rho(RhoFlags),
    /// Exact interlaced coefficient over a finite window.
    RhoStar(RhoStarFlags),
    /// Gap certificate m(a, epsilon).
    Gap(GapFlags),
    /// Run the verification campaign; exit 1 on any failing check.
    Verify(VerifyFlags),
    /// Exact marginal law after j steps.
    Marginal(MarginalFlags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum SimKind {
    Direct,
    Superposition,
    DeathPoisson,
    DeathBinomial,
    Indicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum ChainKind {
    Inar,
    DeathPoisson,
    DeathBinomial,
    Indicator,
    Iid,
}

/// Parameters shared by every chain.
#[derive(clap::Args, Debug, Serialize)]
struct ChainFlags {
    /// Thinning probability.
    #[arg(long)]
    a: Option<f64>,
    /// Poisson mean (innovation, death-chain start, or i.i.d. law).
    #[arg(long)]
    lambda: Option<f64>,
    /// Population of the binomial death chain.
    #[arg(long)]
    population: Option<usize>,
    /// Success probability of the binomial death chain's start.
    #[arg(long)]
    p: Option<f64>,
    /// P(zeta_0 = 1) of the indicator chain.
    #[arg(long)]
    p0: Option<f64>,
    /// Tail mass allowed when truncating Poisson laws.
    #[arg(long)]
    tail_budget: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ChainParams {
    a: f64,
    lambda: f64,
    population: usize,
    p: f64,
    p0: f64,
    tail_budget: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            a: 0.5,
            lambda: 1.0,
            population: 4,
            p: 0.5,
            p0: 0.5,
            tail_budget: DEFAULT_TAIL_BUDGET,
        }
    }
}

impl ChainParams {
    fn inar(&self) -> CliResult<InarParams> {
        Ok(InarParams::new(self.a, self.lambda)?)
    }

    fn spec(&self, kind: ChainKind) -> CliResult<MarkovChainSpec> {
        Ok(match kind {
            ChainKind::Inar => inar_kernel(self.inar()?, self.tail_budget)?,
            ChainKind::DeathPoisson => poisson_death_chain(self.lambda, self.a, self.tail_budget)?,
            ChainKind::DeathBinomial => binomial_death_chain(self.population, self.p, self.a)?,
            ChainKind::Indicator => indicator_chain_spec(self.p0, self.a)?,
            ChainKind::Iid => iid_chain(poisson_pmf(self.lambda, self.tail_budget)?),
        })
    }
}

fn required<T>(value: Option<T>, what: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::usage(format!("missing {what}: give it as an argument or in the config file")))
}

#[derive(clap::Args, Debug, Serialize)]
struct SimulateFlags {
    #[arg(value_enum)]
    construction: Option<SimKind>,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainFlags,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// First random stream; path i uses stream + i.
    #[arg(long)]
    stream: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SimulateConfig {
    construction: Option<SimKind>,
    #[serde(flatten)]
    chain: ChainParams,
    length: usize,
    paths: usize,
    seed: u64,
    stream: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            construction: None,
            chain: ChainParams::default(),
            length: 100,
            paths: 1000,
            seed: 0,
            stream: 0,
        }
    }
}

#[derive(clap::Args, Debug, Serialize)]
struct RhoFlags {
    #[arg(value_enum)]
    construction: Option<ChainKind>,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainFlags,
    #[arg(long)]
    n_max: Option<usize>,
    /// Largest tabulated state (default: the chain's own cap).
    #[arg(long)]
    cap: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RhoConfig {
    construction: Option<ChainKind>,
    #[serde(flatten)]
    chain: ChainParams,
    n_max: usize,
    cap: Option<usize>,
}

impl Default for RhoConfig {
    fn default() -> Self {
        Self {
            construction: None,
            chain: ChainParams::default(),
            n_max: 6,
            cap: None,
        }
    }
}

#[derive(clap::Args, Debug, Serialize)]
struct RhoStarFlags {
    #[arg(value_enum)]
    construction: Option<ChainKind>,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainFlags,
    /// Window width W.
    #[arg(long)]
    width: Option<usize>,
    /// Smallest distance n between S and T.
    #[arg(long)]
    gap: Option<usize>,
    #[arg(long)]
    cap: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RhoStarConfig {
    construction: Option<ChainKind>,
    #[serde(flatten)]
    chain: ChainParams,
    width: usize,
    gap: usize,
    cap: Option<usize>,
}

impl Default for RhoStarConfig {
    fn default() -> Self {
        Self {
            construction: None,
            chain: ChainParams::default(),
            width: 4,
            gap: 1,
            cap: None,
        }
    }
}

#[derive(clap::Args, Debug, Serialize)]
struct GapFlags {
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Registered delta bound.
    #[arg(long)]
    delta_bound: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GapConfig {
    a: f64,
    epsilon: f64,
    delta_bound: String,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            a: 0.5,
            epsilon: 0.5,
            delta_bound: "identity".into(),
        }
    }
}

#[derive(clap::Args, Debug)]
struct VerifyFlags {
    /// Root seed of the campaign.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    path_length: Option<usize>,
    #[arg(long)]
    significance: Option<f64>,
    #[arg(long)]
    equivalence_paths: Option<usize>,
    /// Run a negative control.
    #[arg(long, value_enum)]
    control: Option<ControlArg>,
    /// Skip the exact dependence-bound checks.
    #[arg(long)]
    no_property_checks: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ControlArg {
    CorruptInnovation,
    PerturbedSuperposition,
    WrongMean,
    NonMarkov,
}

impl From<ControlArg> for Control {
    fn from(c: ControlArg) -> Self {
        match c {
            ControlArg::CorruptInnovation => Control::CorruptInnovation,
            ControlArg::PerturbedSuperposition => Control::PerturbedSuperposition,
            ControlArg::WrongMean => Control::WrongMean,
            ControlArg::NonMarkov => Control::NonMarkov,
        }
    }
}

#[derive(clap::Args, Debug, Serialize)]
struct MarginalFlags {
    #[arg(value_enum)]
    construction: Option<ChainKind>,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainFlags,
    /// Number of steps from the initial law.
    #[arg(long)]
    j: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MarginalConfig {
    construction: Option<ChainKind>,
    #[serde(flatten)]
    chain: ChainParams,
    j: usize,
}

impl Default for MarginalConfig {
    fn default() -> Self {
        Self {
            construction: None,
            chain: ChainParams::default(),
            j: 1,
        }
    }
}

fn write_json(out_dir: &Path, name: &str, value: &Value) -> CliResult<()> {
    let text = to_string_pretty(value).map_err(Error::from)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(name), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_simulate(flags: &SimulateFlags, file: Option<&Value>, out_dir: &Path) -> CliResult<()> {
    let cfg: SimulateConfig = resolve(file, flags)?;
    let kind = required(cfg.construction, "construction")?;
    let echo = serde_json::to_value(&cfg).map_err(Error::from)?;
    let seed = SeedSpec::new(cfg.seed, cfg.stream);
    let c = &cfg.chain;
    let (ensemble, decompositions) = match kind {
        SimKind::Direct => {
            let (e, d) = simulate_inar_direct(c.inar()?, cfg.length, cfg.paths, seed)?;
            (e, Some(d))
        }
        SimKind::Superposition => {
            let params = c.inar()?;
            let sup = SuperpositionConfig::for_params(params, c.tail_budget)?;
            let (e, d) = simulate_inar_superposition(params, sup, cfg.length, cfg.paths, seed)?;
            (e, Some(d))
        }
        SimKind::DeathPoisson => (
            simulate_chain(&c.spec(ChainKind::DeathPoisson)?, cfg.length, cfg.paths, seed)?,
            None,
        ),
        SimKind::DeathBinomial => (
            simulate_chain(&c.spec(ChainKind::DeathBinomial)?, cfg.length, cfg.paths, seed)?,
            None,
        ),
        SimKind::Indicator => (indicator_chain(c.p0, c.a, cfg.length, cfg.paths, seed)?, None),
    };
    fs::create_dir_all(out_dir)?;
    let stem = ensemble.construction.clone();
    let path = out_dir.join(format!("{stem}_paths.csv"));
    let mut w = BufWriter::new(File::create(&path)?);
    ensemble.write_csv(&mut w, Some(&echo))?;
    w.flush()?;
    println!("{}", path.display());
    if let Some(d) = decompositions {
        let path = out_dir.join(format!("{stem}_decomposition.csv"));
        let mut w = BufWriter::new(File::create(&path)?);
        ensemble.write_decomposition_csv(&d, &mut w, Some(&echo))?;
        w.flush()?;
        println!("{}", path.display());
    }
    Ok(())
}

fn resolve_cap(spec: &MarkovChainSpec, cap: Option<usize>) -> CliResult<usize> {
    let cap = cap.unwrap_or(spec.state_cap);
    check_cap(spec, cap)?;
    Ok(cap)
}

fn cmd_rho(flags: &RhoFlags, file: Option<&Value>, out_dir: &Path) -> CliResult<()> {
    let cfg: RhoConfig = resolve(file, flags)?;
    let kind = required(cfg.construction, "construction")?;
    let spec = cfg.chain.spec(kind)?;
    let cap = resolve_cap(&spec, cfg.cap)?;
    let mut entries = Vec::new();
    let mut points = Vec::new();
    for n in 1..=cfg.n_max {
        let r = rho_markov(&spec, n, cap)?;
        points.push((n as f64, r.value));
        entries.push(json!({ "n": n, "rho": r.value, "truncation_error": r.truncation_error }));
    }
    let (fit, fit_error) = match fit_decay_rate(&points) {
        Ok(f) => (serde_json::to_value(f).map_err(Error::from)?, Value::Null),
        Err(e) => (Value::Null, json!(e.to_string())),
    };
    let out = json!({
        "command": "rho",
        "config": cfg,
        "cap": cap,
        "entries": entries,
        "fit": fit,
        "fit_error": fit_error,
    });
    write_json(out_dir, "rho.json", &out)
}

fn cmd_rho_star(flags: &RhoStarFlags, file: Option<&Value>, out_dir: &Path) -> CliResult<()> {
    let cfg: RhoStarConfig = resolve(file, flags)?;
    let kind = required(cfg.construction, "construction")?;
    let spec = cfg.chain.spec(kind)?;
    let cap = resolve_cap(&spec, cfg.cap)?;
    let r = rho_star_window(&spec, cfg.width, cfg.gap, cap)?;
    let out = json!({ "command": "rho-star", "config": cfg, "cap": cap, "result": r });
    write_json(out_dir, "rho_star.json", &out)
}

fn cmd_gap(flags: &GapFlags, file: Option<&Value>, out_dir: &Path) -> CliResult<()> {
    let cfg: GapConfig = resolve(file, flags)?;
    let registry = DeltaRegistry::default();
    let bound = registry.get(&cfg.delta_bound).ok_or_else(|| {
        let known: Vec<&str> = registry.names().collect();
        CliError::usage(format!(
            "unknown delta bound '{}' (registered: {known:?})",
            cfg.delta_bound
        ))
    })?;
    let certificate = gap_for_epsilon(cfg.a, cfg.epsilon, bound)?;
    let out = json!({ "command": "gap", "config": cfg, "certificate": certificate });
    write_json(out_dir, "gap.json", &out)
}

fn cmd_marginal(flags: &MarginalFlags, file: Option<&Value>, out_dir: &Path) -> CliResult<()> {
    let cfg: MarginalConfig = resolve(file, flags)?;
    let kind = required(cfg.construction, "construction")?;
    let spec = cfg.chain.spec(kind)?;
    let m = marginal_at(&spec, cfg.j);
    let out = json!({
        "command": "marginal",
        "config": cfg,
        "probs": m.probs(),
        "tail_mass": m.tail_mass(),
        "head_mean": m.head_mean(),
    });
    write_json(out_dir, "marginal.json", &out)
}

/// Returns whether every check passed.
fn cmd_verify(flags: &VerifyFlags, file: Option<&Value>, out_dir: &Path) -> CliResult<bool> {
    let mut cfg: McConfig = match file {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::usage(format!("malformed config: {e}")))?,
        None => McConfig::default(),
    };
    if let Some(s) = flags.seed {
        cfg.seed = SeedSpec::new(s, cfg.seed.stream_index);
    }
    cfg.n_paths = flags.n_paths.unwrap_or(cfg.n_paths);
    cfg.path_length = flags.path_length.unwrap_or(cfg.path_length);
    cfg.significance = flags.significance.unwrap_or(cfg.significance);
    cfg.equivalence_paths = flags.equivalence_paths.unwrap_or(cfg.equivalence_paths);
    if let Some(c) = flags.control {
        cfg.control = Some(c.into());
    }
    if flags.no_property_checks {
        cfg.property_checks = false;
    }
    let report = run_campaign(&cfg)?;
    let text = report.to_json()?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("verify_report.json");
    fs::write(&path, &text)?;
    let s = &report.summary;
    eprintln!(
        "{} of {} checks passed; report at {}",
        s.passed,
        s.total,
        path.display()
    );
    for f in &s.failing {
        eprintln!("FAILED: {f}");
    }
    println!("{}", path.display());
    Ok(s.all_pass)
}

fn run(cli: &Cli) -> CliResult<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot configure {n} threads: {e}")))?;
    }
    let file = cli.config.as_deref().map(read_config_file).transpose()?;
    let file = file.as_ref();
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Simulate(f) => cmd_simulate(f, file, out)?,
        Command::Rho(f) => cmd_rho(f, file, out)?,
        Command::RhoStar(f) => cmd_rho_star(f, file, out)?,
        Command::Gap(f) => cmd_gap(f, file, out)?,
        Command::Marginal(f) => cmd_marginal(f, file, out)?,
        Command::Verify(f) => return cmd_verify(f, file, out),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
