//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! Output files are written to a temporary file and renamed into place, so a
//! failing command never leaves a partial file behind.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::boundary::BoundaryParams;
use crate::data::{self, BlobSpec, Format};
use crate::detector::{self, DetectorModel};
use crate::evaluation::{self, ReportFormat, RunConfig};
use crate::metric::{run_gradcheck, GradcheckConfig, LossKind, TrainConfig};
use crate::{util, Error, ErrorClass};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "oodbound", version, about = "Out-of-domain detection with learned projections and adaptive class radii")]
pub struct Cli {
    /// Seed for splits, initialization and shuffling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress the summary printed on standard output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads for evaluation cells (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a projection, fit class radii and write a model file.
    Fit(FitArgs),
    /// Classify query vectors with a fitted model.
    Predict(PredictArgs),
    /// Run the known-class-ratio protocol and write a report.
    Eval(EvalArgs),
    /// Generate synthetic Gaussian-blob train/test files.
    Synth(SynthArgs),
    /// Verify the analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value = "lmcl")]
    loss: LossKind,
    /// Projection output dimension (default: input dimension).
    #[arg(long)]
    dim_out: Option<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// LMCL scale s.
    #[arg(long, default_value_t = 64.0)]
    scale: f64,
    /// LMCL margin m, or the triplet margin with `--loss triplet`.
    #[arg(long)]
    margin: Option<f64>,
    /// Radius search step.
    #[arg(long, default_value_t = 0.001)]
    step: f64,
    /// Radius search iteration limit.
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// Fixed imbalance weight for every class instead of the per-class ratio.
    #[arg(long)]
    beta: Option<f64>,
}

impl TrainArgs {
    fn configs(&self, seed: u64) -> Result<(TrainConfig, BoundaryParams), Error> {
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            loss: self.loss,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed,
            lmcl_scale: self.scale,
            lmcl_margin: match self.loss {
                LossKind::Lmcl => self.margin.unwrap_or(defaults.lmcl_margin),
                LossKind::Triplet => defaults.lmcl_margin,
            },
            triplet_margin: match self.loss {
                LossKind::Triplet => self.margin.unwrap_or(defaults.triplet_margin),
                LossKind::Lmcl => defaults.triplet_margin,
            },
            dim_out: self.dim_out,
        };
        let boundary = BoundaryParams {
            step: self.step,
            max_iter: self.max_iter,
            beta_override: self.beta,
        };
        train.validate()?;
        boundary.validate()?;
        Ok((train, boundary))
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train_args: TrainArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated known-class ratios.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Report path; `.csv` and `.md` select those formats, otherwise JSON.
    #[arg(long)]
    report: PathBuf,
    /// Training-set fraction; several comma-separated values run a sweep.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    train_fraction: Vec<f64>,
    #[command(flatten)]
    train_args: TrainArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    per_class: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_test: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Negative control: corrupt the analytic gradients (must fail).
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

/// Command outcome other than a library error.
enum Failure {
    Usage(String),
    Numeric(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            EXIT_NUMERIC
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numeric => EXIT_NUMERIC,
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if cli.threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => cmd_fit(cli, a),
        Command::Predict(a) => cmd_predict(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Gradcheck(a) => cmd_gradcheck(cli, a),
    })
}

fn say(cli: &Cli, text: impl AsRef<str>) {
    if !cli.quiet {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{}", text.as_ref());
    }
}

fn load(path: &Path) -> Result<data::Dataset, Error> {
    Ok(data::load_dataset(path, Format::from_path(path))?)
}

fn cmd_fit(cli: &Cli, a: &FitArgs) -> Result<(), Failure> {
    let (train_config, boundary) = a.train_args.configs(cli.seed)?;
    let train = load(&a.train)?;
    let model = detector::fit(&train, &train_config, &boundary)?;
    detector::save_model(&model, &a.out)?;
    say(cli, fit_summary(&model));
    Ok(())
}

fn fit_summary(model: &DetectorModel) -> String {
    let radii = model.geometry().iter().map(|g| g.radius);
    let lo = radii.clone().fold(f64::INFINITY, f64::min);
    let hi = radii.fold(f64::NEG_INFINITY, f64::max);
    let unconverged = model.metadata().radius_fits.iter().filter(|f| !f.converged).count();
    format!(
        "classes: {}\nradii: [{lo:.4}, {hi:.4}]\nunconverged radii: {unconverged}\nfinal loss: {:.6}",
        model.geometry().len(),
        model.metadata().train_report.final_loss
    )
}

fn cmd_predict(cli: &Cli, a: &PredictArgs) -> Result<(), Failure> {
    let model = detector::load_model(&a.model)?;
    let xs = data::load_vectors(&a.input, Format::from_path(&a.input)).map_err(Error::from)?;
    let predictions = model.predict_batch(&xs).map_err(Error::from)?;
    let mut out = String::new();
    for p in &predictions {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    util::write_atomic(&a.out, out.as_bytes()).map_err(|source| Error::Io {
        path: a.out.clone(),
        source,
    })?;
    let ood = predictions.iter().filter(|p| p.is_ood()).count();
    say(cli, format!("{} predictions, {ood} out-of-domain", predictions.len()));
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<(), Failure> {
    let (train_config, boundary) = a.train_args.configs(cli.seed)?;
    let run_config = RunConfig {
        ratios: a.ratios.clone(),
        runs: a.runs,
        seed: cli.seed,
        train_fraction: a.train_fraction.first().copied().unwrap_or(1.0),
    };
    run_config.validate().map_err(Error::from)?;
    let format = ReportFormat::from_path(&a.report);
    let train = load(&a.train)?;
    let test = load(&a.test)?;
    if a.train_fraction.len() > 1 {
        let sweep = evaluation::train_size_sweep(&a.train_fraction, &train, &test, &run_config, &train_config, &boundary)?;
        evaluation::emit_sweep(&sweep, &a.report, format)?;
        say(cli, evaluation::encode_sweep(&sweep, ReportFormat::Markdown).trim_end());
    } else {
        let report = evaluation::run_protocol(&train, &test, &run_config, &train_config, &boundary)?;
        evaluation::emit_report(&report, &a.report, format)?;
        say(cli, evaluation::encode_report(&report, ReportFormat::Markdown).trim_end());
    }
    Ok(())
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<(), Failure> {
    let spec = BlobSpec {
        classes: a.classes,
        dim: a.dim,
        per_class: a.per_class,
        sigma: a.sigma,
        seed: cli.seed,
    };
    let (train, test) = match data::synth_blobs(&spec) {
        Err(data::DataError::InvalidSynth(msg)) => return Err(Failure::Usage(msg)),
        r => r.map_err(Error::from)?,
    };
    for (ds, path) in [(&train, &a.out_train), (&test, &a.out_test)] {
        data::save_dataset(ds, path, Format::from_path(path)).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
    }
    say(
        cli,
        format!("{} train and {} test rows, {} classes, dimension {}", train.len(), test.len(), a.classes, a.dim),
    );
    Ok(())
}

fn cmd_gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<(), Failure> {
    if a.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let report = run_gradcheck(&GradcheckConfig {
        trials: a.trials,
        seed: cli.seed,
        corrupt_analytic: a.corrupt_gradient,
        ..Default::default()
    })
    .map_err(Error::from)?;
    let summary = format!(
        "{} trials, {} parameters: worst relative error {:.3e} (lmcl {:.3e}, triplet {:.3e}), bound {:.0e}",
        report.trials,
        report.parameters_checked,
        report.worst(),
        report.worst_lmcl,
        report.worst_triplet,
        report.tolerance
    );
    if report.passed() {
        say(cli, summary);
        Ok(())
    } else {
        Err(Failure::Numeric(format!("gradient check failed: {summary}")))
    }
}
