//! `wiener-gobf`: generate excitations, simulate Wiener systems, identify
//! GOBF/polynomial models and run Monte-Carlo studies.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use wiener_gobf::experiments::{self, StudyConfig};
use wiener_gobf::export::write_atomic;
use wiener_gobf::pipeline::{self, IdentifyConfig, WienerModel, WienerSystem};
use wiener_gobf::ratfun::FilterMode;
use wiener_gobf::signals::{generate_gaussian, generate_multisine, generate_noise, SignalRecord, SignalSource};
use wiener_gobf::{Error, Result};

#[derive(Parser)]
#[command(name = "wiener-gobf", version, about = "Wiener-Schetzen identification with GOBF banks")]
struct Cli {
    /// Directory for all outputs.
    #[arg(long, global = true, env = "WIENER_GOBF_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an excitation signal to signal.csv.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Apply a Wiener system to an input CSV, writing y.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the intermediate signal x.csv.
        #[arg(long)]
        oracle: bool,
        /// Ignore the configured output noise.
        #[arg(long)]
        noise_off: bool,
        #[arg(long, value_enum, default_value_t = Mode::Periodic)]
        mode: Mode,
    },
    /// Identify a model from an input/output pair.
    Identify {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataPair,
        /// Validation input, scored when --val-output is also given.
        #[arg(long, requires = "val_output")]
        val_input: Option<PathBuf>,
        #[arg(long, requires = "val_input")]
        val_output: Option<PathBuf>,
    },
    /// Apply a model file to an input CSV, writing y_hat.csv.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run a Monte-Carlo study from a config file or a built-in preset.
    Study {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Reuse complete trials found in an existing records.csv.
        #[arg(long)]
        resume: bool,
    },
    /// Write (x_hat, y) pairs from regressing y on a model's bank outputs.
    Scatter {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataPair,
    },
}

#[derive(Args)]
struct DataPair {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Periodic,
    ZeroInitial,
}

impl From<Mode> for FilterMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Periodic => FilterMode::PeriodicSteadyState,
            Mode::ZeroInitial => FilterMode::ZeroInitial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Example1Convergence,
    Example1PoleRate,
    Example2Saturation,
    Example2Polynomial,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: Value,
    seeds: Value,
    version: &'a str,
    outputs: Vec<String>,
    duration_secs: f64,
}

struct Run {
    command: &'static str,
    started: Instant,
    out_dir: PathBuf,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.out_dir.join(name);
        write_atomic(&p, contents.as_bytes())?;
        self.outputs.push(p);
        Ok(())
    }

    fn finish(self, config: Value, seeds: Value) -> Result<()> {
        let manifest = Manifest {
            command: self.command,
            config,
            seeds,
            version: env!("CARGO_PKG_VERSION"),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let p = self.out_dir.join(format!("{}.manifest.json", self.command));
        write_atomic(&p, serde_json::to_string_pretty(&manifest)?.as_bytes())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn read_signal(path: &Path) -> Result<SignalRecord> {
    SignalRecord::from_csv(fs::File::open(path)?)
}

/// CSV records carry no period; treat the whole file as one period when the
/// filtering mode is periodic.
fn as_mode(mut s: SignalRecord, mode: FilterMode) -> SignalRecord {
    if mode == FilterMode::PeriodicSteadyState && s.period.is_none() {
        s.period = Some(s.len());
    }
    s
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn cmd_generate(run: &mut Run, config: &Path, seed: Option<u64>) -> Result<(Value, Value)> {
    let mut source: SignalSource = read_json(config)?;
    let signal = match &mut source {
        SignalSource::Multisine(spec) => {
            if let Some(s) = seed {
                spec.seed = s;
            }
            generate_multisine(spec)?
        }
        SignalSource::Gaussian(spec) => {
            if let Some(s) = seed {
                spec.seed = s;
            }
            generate_gaussian(spec)?
        }
        SignalSource::Noise { spec, n_samples } => {
            if let Some(s) = seed {
                spec.seed = s;
            }
            generate_noise(spec, *n_samples)?
        }
        SignalSource::External => {
            return Err(Error::InvalidSpec("an external signal cannot be generated".into()));
        }
    };
    run.write("signal.csv", &signal.to_csv())?;
    let seeds = match &source {
        SignalSource::Multisine(s) => s.seed,
        SignalSource::Gaussian(s) => s.seed,
        SignalSource::Noise { spec, .. } => spec.seed,
        SignalSource::External => 0,
    };
    Ok((to_value(&source)?, serde_json::json!({ "signal": seeds })))
}

fn cmd_simulate(
    run: &mut Run,
    config: &Path,
    input: &Path,
    seed: Option<u64>,
    oracle: bool,
    noise_off: bool,
    mode: FilterMode,
) -> Result<(Value, Value)> {
    let mut system: WienerSystem = read_json(config)?;
    if noise_off {
        system = system.without_noise();
    }
    if let Some(s) = seed {
        system.output_noise.seed = s;
    }
    let u = as_mode(read_signal(input)?, mode);
    let (x, y) = pipeline::simulate(&system, &u, mode)?;
    run.write("y.csv", &y.to_csv())?;
    if oracle {
        run.write("x.csv", &x.to_csv())?;
    }
    let cfg = serde_json::json!({ "system": system, "mode": mode, "input": input.display().to_string() });
    Ok((cfg, serde_json::json!({ "noise": system.output_noise.seed })))
}

#[derive(Serialize)]
struct IdentifyReport {
    final_cost: f64,
    initial_cost: f64,
    iterations: usize,
    converged: bool,
    estimated_poles: Vec<[f64; 2]>,
    bank_poles: Vec<[f64; 2]>,
    n_reflected: usize,
    n_channels: usize,
    n_terms: usize,
    regression_rank: usize,
    regression_condition: f64,
    estimation_nrmse: f64,
    validation_nrmse: Option<f64>,
}

fn cmd_identify(
    run: &mut Run,
    config: &Path,
    data: &DataPair,
    val: Option<(&PathBuf, &PathBuf)>,
) -> Result<(Value, Value)> {
    let cfg: IdentifyConfig = read_json(config)?;
    let u = as_mode(read_signal(&data.input)?, cfg.filter_mode);
    let y = read_signal(&data.output)?;
    let model = pipeline::identify(&u, &y, &cfg)?;
    let y_fit = pipeline::predict(&model, &u)?;
    let validation_nrmse = match val {
        Some((vu, vy)) => {
            let vu = as_mode(read_signal(vu)?, cfg.filter_mode);
            let vy = read_signal(vy)?;
            if vu.len() != vy.len() {
                return Err(Error::DimensionMismatch("validation input and output lengths differ".into()));
            }
            Some(pipeline::nrmse(&vy.samples, &pipeline::predict(&model, &vu)?.samples))
        }
        None => None,
    };
    let pairs = |p: &wiener_gobf::ratfun::PoleSet| p.poles.iter().map(|z| [z.re, z.im]).collect();
    let b = &model.provenance.bla;
    let report = IdentifyReport {
        final_cost: b.final_cost,
        initial_cost: b.initial_cost,
        iterations: b.iterations,
        converged: b.converged,
        estimated_poles: pairs(&b.estimated_poles),
        bank_poles: pairs(&b.bank_poles),
        n_reflected: b.n_reflected,
        n_channels: model.bank.n_channels(),
        n_terms: model.poly.terms.len(),
        regression_rank: model.provenance.regression.rank,
        regression_condition: model.provenance.regression.condition_number,
        estimation_nrmse: pipeline::nrmse(&y.samples, &y_fit.samples),
        validation_nrmse,
    };
    run.write("model.json", &model.to_json()?)?;
    run.write("report.json", &serde_json::to_string_pretty(&report)?)?;
    Ok((to_value(&cfg)?, Value::Null))
}

fn cmd_predict(run: &mut Run, model: &Path, input: &Path) -> Result<(Value, Value)> {
    let m = WienerModel::from_json(&fs::read_to_string(model)?)?;
    let u = as_mode(read_signal(input)?, m.provenance.config.filter_mode);
    let y = pipeline::predict(&m, &u)?;
    run.write("y_hat.csv", &y.to_csv())?;
    Ok((serde_json::json!({ "model": model.display().to_string() }), Value::Null))
}

fn preset_config(p: Preset, trials: Option<usize>, seed: u64) -> Result<StudyConfig> {
    Ok(match p {
        Preset::Example1Convergence => experiments::example1_convergence(trials.unwrap_or(20), seed),
        Preset::Example1PoleRate => experiments::example1_pole_rate(trials.unwrap_or(20), seed),
        Preset::Example2Saturation => {
            experiments::example2_noise(experiments::EXAMPLE2_SATURATION, trials.unwrap_or(200), seed)
        }
        Preset::Example2Polynomial => {
            experiments::example2_noise(experiments::example2_polynomial_truth()?, trials.unwrap_or(200), seed)
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_study(
    run: &mut Run,
    config: Option<&Path>,
    preset: Option<Preset>,
    trials: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    resume: bool,
) -> Result<(Value, Value)> {
    let mut cfg = match (config, preset) {
        (Some(path), _) => read_json::<StudyConfig>(path)?,
        (None, Some(p)) => preset_config(p, trials, seed.unwrap_or(1))?,
        (None, None) => return Err(Error::InvalidSpec("study needs --config or --preset".into())),
    };
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let existing = if resume {
        let p = run.out_dir.join("records.csv");
        if p.exists() {
            experiments::records_from_csv(fs::File::open(&p)?)?
        } else {
            Vec::new()
        }
    } else {
        Vec::new()
    };
    let result = experiments::run_study(&cfg, jobs, &existing)?;
    let paths = experiments::write_outputs(&result, &run.out_dir)?;
    run.outputs.extend(paths);
    for s in &result.slopes {
        println!(
            "slope {:<11} n_rep={:<4} {:+.3} ± {:.3}",
            s.metric.name(),
            s.n_rep.map_or("-".to_string(), |r| r.to_string()),
            s.fit.slope,
            s.fit.stderr
        );
    }
    for g in &result.aggregates {
        if let Some(m) = g.metrics.get(&experiments::Metric::Nrmse) {
            println!(
                "nrmse n_rep={} mean {:.4} ± {:.4} median {:.4} ({} failed)",
                g.n_rep.map_or("-".to_string(), |r| r.to_string()),
                m.mean,
                m.std_mean,
                m.median,
                g.n_failed
            );
        }
    }
    if !result.records.is_empty() && result.records.iter().all(|r| r.failed()) {
        return Err(Error::Numerical("every trial failed".into()));
    }
    let seeds = serde_json::json!({ "study": cfg.seed });
    Ok((to_value(&cfg)?, seeds))
}

fn cmd_scatter(run: &mut Run, model: &Path, data: &DataPair) -> Result<(Value, Value)> {
    let m = WienerModel::from_json(&fs::read_to_string(model)?)?;
    let mode = m.provenance.config.filter_mode;
    let u = as_mode(read_signal(&data.input)?, mode);
    let y = read_signal(&data.output)?;
    if u.len() != y.len() {
        return Err(Error::DimensionMismatch("input and output lengths differ".into()));
    }
    let x = m.bank.bank_outputs(&u, mode)?;
    let est = pipeline::estimate_intermediate(&y, &x)?;
    run.write("scatter.csv", &pipeline::scatter_csv(&est.x_hat, &y.samples))?;
    Ok((serde_json::json!({ "model": model.display().to_string() }), Value::Null))
}

fn dispatch(cli: Cli) -> Result<()> {
    let command = match &cli.command {
        Command::Generate { .. } => "generate",
        Command::Simulate { .. } => "simulate",
        Command::Identify { .. } => "identify",
        Command::Predict { .. } => "predict",
        Command::Study { .. } => "study",
        Command::Scatter { .. } => "scatter",
    };
    fs::create_dir_all(&cli.out_dir)?;
    let mut run = Run {
        command,
        started: Instant::now(),
        out_dir: cli.out_dir.clone(),
        outputs: Vec::new(),
    };
    let (config, seeds) = match &cli.command {
        Command::Generate { config, seed } => cmd_generate(&mut run, config, *seed)?,
        Command::Simulate {
            config,
            input,
            seed,
            oracle,
            noise_off,
            mode,
        } => cmd_simulate(&mut run, config, input, *seed, *oracle, *noise_off, (*mode).into())?,
        Command::Identify {
            config,
            data,
            val_input,
            val_output,
        } => cmd_identify(&mut run, config, data, val_input.as_ref().zip(val_output.as_ref()))?,
        Command::Predict { model, input } => cmd_predict(&mut run, model, input)?,
        Command::Study {
            config,
            preset,
            trials,
            seed,
            jobs,
            resume,
        } => cmd_study(&mut run, config.as_deref(), *preset, *trials, *seed, *jobs, *resume)?,
        Command::Scatter { model, data } => cmd_scatter(&mut run, model, data)?,
    };
    run.finish(config, seeds)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
