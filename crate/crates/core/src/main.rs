use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lctrace::anchoring::{AnchorMode, AnchorPolicy, AnchorRepresentation};
use lctrace::controller::{predict, Controller, RunConfig, RunState};
use lctrace::fitting::{fit_power_law, FitConfig};
use lctrace::io::{read_observations, ObservationFile};
use lctrace::levels::LevelParams;
use lctrace::metrics::{evaluate, ControlPair, ControlSequence, MetricsOptions, RunEvaluation};
use lctrace::model::{ObservationSeries, PowerLawParams, MIN_LEVEL};
use lctrace::plot::{emit_plot, PlotMarks};
use lctrace::report::{round_floats, RunReport};
use lctrace::synth::{generate_series, theorem_suite, Noise, SuiteConfig, SynthSpec};
use lctrace::Error;

const EXIT_PARSE: u8 = 2;
const EXIT_NO_CLEVEL: u8 = 3;
const EXIT_FIT: u8 = 4;
/// `simulate --theorems` with at least one failing check.
const EXIT_CHECK_FAILED: u8 = 1;

#[derive(Parser)]
#[command(name = "lctrace", version, about = "Learning-curve traces and early stopping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the power law to a prefix of an observation file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Number of leading observations to use; all by default.
        #[arg(long)]
        level: Option<usize>,
    },
    /// Stream an observation file through the controller.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', value_parser = parse_position)]
        predict_at: Vec<u64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Compare runs against their observed accuracies at control positions.
    Evaluate {
        #[arg(long, value_delimiter = ',', required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        truth: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_position)]
        controls: Vec<u64>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic series from known parameters.
    Simulate {
        #[arg(long, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, allow_negative_numbers = true)]
        b: f64,
        #[arg(long, allow_negative_numbers = true)]
        c: f64,
        /// none, gaussian:SIGMA or bumps:MAGNITUDE:COUNT
        #[arg(long, default_value = "none", value_parser = parse_noise)]
        noise: Noise,
        /// Overridden by the CURVE_SEED environment variable.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        kernel: u64,
        #[arg(long, default_value_t = 5000)]
        step: u64,
        #[arg(long, default_value_t = 160)]
        count: usize,
        /// Print the theorem check report instead of the series.
        #[arg(long)]
        theorems: bool,
        /// Where to write the series.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, allow_negative_numbers = true)]
    tau: f64,
    #[arg(long, default_value_t = 2e-5)]
    nu: f64,
    #[arg(long, default_value_t = 1)]
    slowdown: u32,
    #[arg(long, default_value_t = 5)]
    lookahead: u32,
    #[arg(long, value_enum, default_value_t = Anchors::Canonical)]
    anchors: Anchors,
    #[arg(long, value_enum, default_value_t = AnchorModeArg::Analytic)]
    anchor_mode: AnchorModeArg,
    #[arg(long, default_value_t = 1e200)]
    anchor_x: f64,
    #[arg(long, value_parser = parse_position)]
    end_position: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Anchors {
    None,
    Canonical,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnchorModeArg {
    Analytic,
    Finite,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            level_params: LevelParams {
                nu: self.nu,
                slowdown: self.slowdown,
                lookahead: self.lookahead,
            },
            tau: self.tau,
            anchor_policy: AnchorPolicy {
                mode: match self.anchors {
                    Anchors::None => AnchorMode::None,
                    Anchors::Canonical => AnchorMode::Canonical,
                },
                representation: match self.anchor_mode {
                    AnchorModeArg::Analytic => AnchorRepresentation::Analytic,
                    AnchorModeArg::Finite => AnchorRepresentation::Finite,
                },
                finite_x: self.anchor_x,
            },
            end_position: self.end_position,
            fit: FitConfig::default(),
        }
    }
}

/// Positive integer positions; scientific notation such as `1e6` is accepted.
fn parse_position(s: &str) -> Result<u64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("invalid position `{s}`"))?;
    if x >= 1.0 && x.fract() == 0.0 && x < u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(format!("position must be a positive integer, got `{s}`"))
    }
}

fn parse_noise(s: &str) -> Result<Noise, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| format!("invalid number `{t}` in noise `{s}`"));
    match parts.as_slice() {
        ["none"] => Ok(Noise::None),
        ["gaussian", sigma] => Ok(Noise::Gaussian { sigma: num(sigma)? }),
        ["bumps", magnitude, count] => Ok(Noise::Bumps {
            magnitude: num(magnitude)?,
            count: count.parse().map_err(|_| format!("invalid bump count `{count}`"))?,
        }),
        _ => Err(format!("unknown noise `{s}`; expected none, gaussian:SIGMA or bumps:MAG:COUNT")),
    }
}

enum Failure {
    Lib(Error),
    NoConvergenceLevel(String),
    FitFailed(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Lib(Error::Degenerate(_)) | Self::FitFailed(_) => EXIT_FIT,
            Self::Lib(Error::Unavailable(_)) | Self::NoConvergenceLevel(_) => EXIT_NO_CLEVEL,
            Self::Lib(_) | Self::Input(_) => EXIT_PARSE,
        }
    }

    fn message(&self) -> String {
        match self {
            Self::Lib(e) => e.to_string(),
            Self::NoConvergenceLevel(m) | Self::FitFailed(m) | Self::Input(m) => m.clone(),
        }
    }
}

fn read_input(path: &Path) -> Result<ObservationSeries, Failure> {
    read_observations(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(mut value: serde_json::Value) -> String {
    round_floats(&mut value);
    let mut text = serde_json::to_string_pretty(&value).expect("JSON values serialize");
    text.push('\n');
    text
}

fn run_controller(series: &ObservationSeries, config: RunConfig) -> Result<RunState, Failure> {
    let mut controller = Controller::new(config)?;
    controller.ingest_all(series.points().iter().copied())?;
    let state = controller.into_state();
    if !state.trace.trends().is_empty() && state.trace.trends().iter().all(|t| !t.converged) {
        return Err(Failure::FitFailed("no level could be fitted".into()));
    }
    Ok(state)
}

fn cmd_fit(input: &Path, level: Option<usize>) -> Result<(), Failure> {
    let series = read_input(input)?;
    let level = level.unwrap_or(series.len());
    if level < MIN_LEVEL || level > series.len() {
        return Err(Failure::Input(format!(
            "level must lie in [{MIN_LEVEL}, {}], got {level}",
            series.len()
        )));
    }
    let fit = fit_power_law(series.prefix(level), None, &FitConfig::default())?;
    let out = json!({
        "level": level,
        "position": series.position_of(level),
        "a": fit.params.a,
        "b": fit.params.b,
        "c": fit.params.c,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "cost": fit.final_cost,
    });
    print!("{}", pretty(out));
    if !fit.converged {
        return Err(Failure::FitFailed(format!("fit at level {level} did not converge")));
    }
    Ok(())
}

struct RunOutput<'a> {
    predict_at: &'a [u64],
    format: Format,
    output: Option<&'a Path>,
    plot: Option<&'a Path>,
}

fn cmd_run(input: &Path, args: &RunArgs, out: RunOutput<'_>) -> Result<(), Failure> {
    let series = read_input(input)?;
    let config = args.config();
    let state = run_controller(&series, config.clone())?;
    let report = RunReport::new(&config, &state, out.predict_at)?;
    let text = match out.format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv(),
    };
    emit(&text, out.output)?;
    if let Some(path) = out.plot {
        if !state.trace.trends().is_empty() {
            let mut levels = Vec::new();
            for (label, mark) in [("ω", state.wlevel), ("℘", state.plevel), ("CL", state.clevel)] {
                if let Some(m) = mark {
                    levels.push((label.to_string(), m.level));
                }
            }
            let marks = PlotMarks {
                trend: state.clevel.map(|m| m.level),
                levels,
            };
            emit_plot(&state.trace, &series, &marks, path)?;
        }
    }
    if !state.stopped {
        return Err(Failure::NoConvergenceLevel(format!(
            "no convergence level reached within {} observations",
            series.len()
        )));
    }
    Ok(())
}

fn run_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_evaluate(
    runs: &[PathBuf],
    truth: &[PathBuf],
    controls: &[u64],
    args: &RunArgs,
    output: Option<&Path>,
) -> Result<(), Failure> {
    if runs.len() != truth.len() {
        return Err(Failure::Input(format!(
            "{} runs but {} truth files",
            runs.len(),
            truth.len()
        )));
    }
    let seq = ControlSequence::new(controls.to_vec())?;
    let config = args.config();
    let mut pairs = Vec::new();
    let mut segments = Vec::new();
    for (run_path, truth_path) in runs.iter().zip(truth) {
        let series = read_input(run_path)?;
        let observed = read_input(truth_path)?;
        let state = run_controller(&series, config.clone())?;
        let (Some(w), Some(cl)) = (state.wlevel, state.clevel) else {
            return Err(Failure::NoConvergenceLevel(format!(
                "{}: no convergence level reached",
                run_path.display()
            )));
        };
        let run_pairs = controls
            .iter()
            .map(|&x| {
                let ac = observed
                    .points()
                    .iter()
                    .find(|p| p.position == x)
                    .map(|p| p.accuracy)
                    .ok_or_else(|| Failure::Input(format!("{}: no observation at {x}", truth_path.display())))?;
                Ok(ControlPair {
                    ac,
                    eac: predict(&state, x as f64)?,
                })
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        pairs.push(run_pairs);
        segments.push((w.level..=cl.level).filter_map(|l| state.trace.alpha(l)).collect::<Vec<f64>>());
    }
    let evaluations: Vec<RunEvaluation<'_>> = runs
        .iter()
        .zip(pairs)
        .zip(&segments)
        .map(|((path, pairs), segment)| RunEvaluation {
            name: run_name(path),
            pairs,
            segment,
        })
        .collect();
    let metrics = evaluate(&seq, &evaluations, MetricsOptions::default())?;
    emit(&pretty(serde_json::to_value(&metrics).map_err(Error::from)?), output)
}

struct SimulateArgs {
    params: (f64, f64, f64),
    noise: Noise,
    seed: u64,
    kernel: u64,
    step: u64,
    count: usize,
    theorems: bool,
}

fn cmd_simulate(args: SimulateArgs, output: Option<&Path>) -> Result<bool, Failure> {
    let seed = match std::env::var("CURVE_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Input(format!("CURVE_SEED must be an unsigned integer, got `{v}`")))?,
        Err(_) => args.seed,
    };
    let (a, b, c) = args.params;
    let truth = PowerLawParams::new(a, b, c)?;
    let spec = SynthSpec {
        true_params: truth,
        kernel: args.kernel,
        step: args.step,
        count: args.count,
        noise: args.noise,
        seed,
    };
    let series = generate_series(&spec)?;
    let csv = ObservationFile::from_series(&series).render();
    if !args.theorems {
        emit(&csv, output)?;
        return Ok(true);
    }
    if let Some(path) = output {
        emit(&csv, Some(path))?;
    }
    let config = match args.noise {
        Noise::Gaussian { sigma } if sigma > 0.0 => SuiteConfig::noisy(args.step),
        _ => SuiteConfig::default(),
    };
    let report = theorem_suite(&series, &truth, &config)?;
    let passed = report.all_passed();
    let value = json!({
        "seed": seed,
        "noise": args.noise,
        "report": report,
        "all_passed": passed,
    });
    print!("{}", pretty(value));
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_PARSE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fit { input, level } => cmd_fit(&input, level).map(|_| true),
        Command::Run {
            input,
            run,
            predict_at,
            format,
            output,
            plot,
        } => cmd_run(
            &input,
            &run,
            RunOutput {
                predict_at: &predict_at,
                format,
                output: output.as_deref(),
                plot: plot.as_deref(),
            },
        )
        .map(|_| true),
        Command::Evaluate {
            runs,
            truth,
            controls,
            run,
            output,
        } => cmd_evaluate(&runs, &truth, &controls, &run, output.as_deref()).map(|_| true),
        Command::Simulate {
            a,
            b,
            c,
            noise,
            seed,
            kernel,
            step,
            count,
            theorems,
            output,
        } => cmd_simulate(
            SimulateArgs {
                params: (a, b, c),
                noise,
                seed,
                kernel,
                step,
                count,
                theorems,
            },
            output.as_deref(),
        ),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(f) => {
            eprintln!("lctrace: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
