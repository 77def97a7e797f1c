//! `solwalk`: construct step measures, sample harmonic measures and run the
//! Fourier, dimension and entropy diagnostics. Every subcommand prints a JSON
//! report that embeds the full configuration it ran with.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Parser, Debug)]
#[command(name = "solwalk", version, about = "Random walks on Sol and their harmonic measures")]
struct Cli {
    /// JSON config (or an earlier report) supplying defaults; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a step measure from a preset and write it as JSON.
    Construct(ConstructArgs),
    /// Draw boundary samples ξ from the harmonic measure.
    Sample(SampleArgs),
    /// Estimate the speed of the walk and the distance sandwich.
    Speed(SpeedArgs),
    /// Empirical characteristic function on a frequency grid.
    Ecf(EcfArgs),
    /// Fourier transform through the occupation-time product formula.
    FourierExact(FourierExactArgs),
    /// Certified lower bound at Pisot frequencies for Erdős-type measures.
    CertifySingular(CertifyArgs),
    /// Local and pair-correlation dimension estimates with the entropy bound.
    Dimension(DimensionArgs),
    /// Entropies of convolution powers of a lattice measure.
    Entropy(EntropyArgs),
    /// Certify a Pisot polynomial.
    Pisot(PisotArgs),
    /// KS test of ν against its push-forward μ * ν.
    Stationarity(StationarityArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Construct(_) => "construct",
            Command::Sample(_) => "sample",
            Command::Speed(_) => "speed",
            Command::Ecf(_) => "ecf",
            Command::FourierExact(_) => "fourier-exact",
            Command::CertifySingular(_) => "certify-singular",
            Command::Dimension(_) => "dimension",
            Command::Entropy(_) => "entropy",
            Command::Pisot(_) => "pisot",
            Command::Stationarity(_) => "stationarity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    Solomyak,
    Erdos,
    SpeedSingular,
    Lattice,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum YRuleArg {
    #[default]
    Zero,
    IndependentSign,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FormatArg {
    #[default]
    Binary,
    Csv,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ConstructArgs {
    #[arg(long, value_enum)]
    preset: Preset,
    /// Vertical step size (solomyak).
    #[arg(long, default_value_t = std::f64::consts::LN_2)]
    gamma: f64,
    /// Probability of the upward step (solomyak).
    #[arg(long, default_value_t = 0.7)]
    p: f64,
    #[arg(long, value_enum, default_value_t)]
    y_rule: YRuleArg,
    /// Pisot polynomial, leading coefficient first (erdos).
    #[arg(long, default_value = "1,-3,1")]
    poly: String,
    /// Vertical law as `level:weight` pairs (erdos).
    #[arg(long, default_value = "1:0.7,-1:0.3", allow_hyphen_values = true)]
    levels: String,
    /// Weight of the zero horizontal step (erdos).
    #[arg(long, default_value_t = 0.6)]
    q0: f64,
    /// Weight of each of the ±1 horizontal steps (erdos).
    #[arg(long, default_value_t = 0.2)]
    q1: f64,
    /// Hyperbolic matrix `a,b,c,d` (lattice presets).
    #[arg(long, default_value = "2,1,1,1", allow_hyphen_values = true)]
    matrix: String,
    /// Base atoms `r:p:q`, comma separated (lattice presets).
    #[arg(
        long,
        default_value = "0:1:0,0:-1:0,0:0:1,0:0:-1,1:0:0,-1:0:0",
        allow_hyphen_values = true
    )]
    atoms: String,
    /// Weights of the base atoms (default uniform).
    #[arg(long)]
    weights: Option<String>,
    /// Element `r:p:q` whose power is mixed in (speed-singular).
    #[arg(long, default_value = "1:0:0", allow_hyphen_values = true)]
    g: String,
    /// Power of `g` (speed-singular).
    #[arg(long, default_value_t = 1)]
    l: u64,
    /// Write the measure JSON here.
    #[serde(skip)]
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SamplingArgs {
    /// Number of boundary samples.
    #[arg(short = 'n', long = "n", default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-sample truncation error.
    #[arg(long, default_value_t = 1e-9)]
    eps: f64,
    /// Allowed probability that a sample misses `eps`.
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SampleArgs {
    /// Step-measure JSON from `construct`.
    #[arg(long)]
    measure: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    sampling: SamplingArgs,
    #[arg(long, value_enum, default_value_t)]
    format: FormatArg,
    /// Sample file to write.
    #[serde(skip)]
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SpeedArgs {
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Walk length.
    #[arg(long, default_value_t = 10_000)]
    steps: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SourceArgs {
    /// Step-measure JSON; samples are drawn on the fly.
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Existing sample file (binary or CSV) to analyse instead.
    #[arg(long, conflicts_with = "measure")]
    samples: Option<PathBuf>,
    /// Per-sample error bound of `--samples`.
    #[arg(long, default_value_t = 0.0)]
    sample_err: f64,
    #[command(flatten)]
    #[serde(flatten)]
    sampling: SamplingArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct GridArgs {
    /// Explicit frequencies, comma separated; overrides the log grid.
    #[arg(long)]
    t: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    t_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    t_max: f64,
    #[arg(long, default_value_t = 20)]
    t_count: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct EcfArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct FourierExactArgs {
    #[arg(long)]
    measure: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    /// Vertical paths averaged over.
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Truncation error per frequency.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct CertifyArgs {
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Pisot polynomial whose root is `e^γ`.
    #[arg(long, default_value = "1,-3,1", allow_hyphen_values = true)]
    poly: String,
    #[arg(long, default_value_t = -12, allow_hyphen_values = true)]
    l_min: i64,
    #[arg(long, default_value_t = -1, allow_hyphen_values = true)]
    l_max: i64,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct DimensionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: SourceArgs,
    /// Probe points for the local estimator.
    #[arg(long, default_value_t = 2000)]
    probes: usize,
    /// Radius grid bounds; both needed to override the default grid.
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long, default_value_t = 16)]
    r_count: usize,
    /// Largest convolution power for the entropy bound.
    #[arg(long, default_value_t = 4)]
    kmax: usize,
    #[arg(long, default_value_t = solwalk::lattice::DEFAULT_ATOM_BUDGET)]
    budget: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct EntropyArgs {
    #[arg(long)]
    measure: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    kmax: usize,
    #[arg(long, default_value_t = solwalk::lattice::DEFAULT_ATOM_BUDGET)]
    budget: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct PisotArgs {
    /// Integer coefficients, leading first, e.g. `1,-1,-1`.
    #[arg(long, allow_hyphen_values = true)]
    poly: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct StationarityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: SourceArgs,
    /// Samples pushed forward (default half of n).
    #[arg(long)]
    resample: Option<usize>,
}

/// Bad input: reported with exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Settings shared by every subcommand after config merging.
struct Run {
    name: &'static str,
    threads: Option<usize>,
    report: Option<PathBuf>,
}

impl Run {
    /// Wraps a subcommand's output with its op name and embedded config.
    fn report(&self, args: &impl Serialize, body: Value) -> anyhow::Result<Value> {
        let mut config = match serde_json::to_value(args)? {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        config.insert("command".into(), self.name.into());
        config.insert("threads".into(), serde_json::to_value(self.threads)?);
        let mut out = Map::new();
        out.insert("op".into(), self.name.into());
        out.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        out.insert("config".into(), Value::Object(config));
        if let Value::Object(fields) = body {
            out.extend(fields);
        }
        Ok(Value::Object(out))
    }
}

/// Overlays config-file values onto arguments not given on the command line.
fn merge<T: Serialize + DeserializeOwned>(
    args: T,
    matches: &ArgMatches,
    config: &Map<String, Value>,
) -> anyhow::Result<T> {
    let mut value = serde_json::to_value(&args)?;
    let fields = value.as_object_mut().expect("argument structs serialize to objects");
    for (key, v) in config {
        if matches!(key.as_str(), "command" | "threads") {
            continue;
        }
        if !fields.contains_key(key) {
            return Err(usage(format!("unknown config key `{key}`")));
        }
        if matches.value_source(key) != Some(ValueSource::CommandLine) {
            fields.insert(key.clone(), v.clone());
        }
    }
    serde_json::from_value(value).map_err(|e| usage(format!("bad config value: {e}")))
}

/// Reads `--config`: either a bare config object or a report embedding one.
fn load_config(path: &PathBuf, command: &str) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let config = match value {
        Value::Object(mut m) => match m.remove("config") {
            Some(Value::Object(inner)) => inner,
            Some(_) => return Err(usage("`config` must be an object")),
            None => m,
        },
        _ => return Err(usage("config must be a JSON object")),
    };
    if let Some(c) = config.get("command").and_then(Value::as_str) {
        if c != command {
            return Err(usage(format!("config is for `{c}`, not `{command}`")));
        }
    }
    Ok(config)
}

fn merge_command(command: Command, matches: &ArgMatches, config: &Map<String, Value>) -> anyhow::Result<Command> {
    Ok(match command {
        Command::Construct(a) => Command::Construct(ConstructArgs {
            output: a.output.clone(),
            ..merge(a, matches, config)?
        }),
        Command::Sample(a) => Command::Sample(SampleArgs {
            output: a.output.clone(),
            ..merge(a, matches, config)?
        }),
        Command::Speed(a) => Command::Speed(merge(a, matches, config)?),
        Command::Ecf(a) => Command::Ecf(merge(a, matches, config)?),
        Command::FourierExact(a) => Command::FourierExact(merge(a, matches, config)?),
        Command::CertifySingular(a) => Command::CertifySingular(merge(a, matches, config)?),
        Command::Dimension(a) => Command::Dimension(merge(a, matches, config)?),
        Command::Entropy(a) => Command::Entropy(merge(a, matches, config)?),
        Command::Pisot(a) => Command::Pisot(merge(a, matches, config)?),
        Command::Stationarity(a) => Command::Stationarity(merge(a, matches, config)?),
    })
}

fn run(argv: Vec<String>) -> anyhow::Result<()> {
    let matches = Cli::command().try_get_matches_from(argv)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let name = cli.command.name();
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let mut threads = cli.threads;
    let command = match &cli.config {
        Some(path) => {
            let config = load_config(path, name)?;
            if sub.value_source("threads") != Some(ValueSource::CommandLine) {
                if let Some(t) = config.get("threads").filter(|v| !v.is_null()) {
                    threads = Some(serde_json::from_value(t.clone()).map_err(|e| usage(format!("threads: {e}")))?);
                }
            }
            merge_command(cli.command, sub, &config)?
        }
        None => cli.command,
    };
    let ctx = Run {
        name,
        threads,
        report: cli.report,
    };
    let report = solwalk::rng::with_threads(threads, || commands::execute(&ctx, &command))?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match &ctx.report {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<clap::Error>() {
        return if e.use_stderr() { 2 } else { 0 };
    }
    if let Some(e) = err.downcast_ref::<solwalk::Error>() {
        return if e.is_validation() || matches!(e, solwalk::Error::Io(_)) {
            2
        } else {
            3
        };
    }
    2
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            match err.downcast_ref::<clap::Error>() {
                Some(e) => {
                    let _ = e.print();
                }
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::from(code)
        }
    }
}
