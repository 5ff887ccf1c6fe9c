use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apms::block_pipeline::{best_block_length, regenerate_range, sweep_block_lengths, BlockSettings, SWEEP_LENGTHS};
use apms::io_noise::{format_series, read_json, NoiseMetadata};
use apms::param_estimator::{Averaging, EstimatorConfig};
use apms::spectral::{ar_psd, default_ar_order, fit_ar, RankPolicy};
use apms::{
    add_awgn, estimate_block, read_series, reconstruction_error, run_blocks, synthesize, synthesize_time_varying,
    ApmsError, Model, Params, Report, Series,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Synthesis, estimation and block-wise tracking of APMS signals.
///
/// Exit status: 0 on success, 2 on a domain error (bad input, failed
/// estimation), 1 on an I/O error.
#[derive(Parser)]
#[command(name = "apms", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Input file.
    #[arg(long = "in", value_name = "PATH")]
    input: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Seed for the noise generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize samples from parameters (JSON) or a time-varying model.
    ///
    /// Without --in the Table 1 parameters of the paper are used. With
    /// --snr, white Gaussian noise of variance (mean square) / 10^(SNR/10)
    /// is added; the generator and seed are recorded as comments in the CSV.
    Synth {
        #[command(flatten)]
        io: Common,
        /// Number of samples.
        #[arg(long, default_value_t = 251)]
        n: usize,
        /// Absolute index of the first sample.
        #[arg(long, default_value_t = 0)]
        start: i64,
        /// Signal-to-noise ratio in dB (mean-square signal power over noise variance).
        #[arg(long)]
        snr: Option<f64>,
        /// Sample rate written to the CSV header.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Estimate all parameters of one block (CSV in, JSON report out).
    Estimate {
        #[command(flatten)]
        io: Common,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Also write the detected clusters and frequency hypotheses here.
        #[arg(long, value_name = "PATH")]
        dump_clusters: Option<PathBuf>,
    },
    /// Estimate successive blocks and fit polynomial parameter trajectories.
    Blocks {
        #[command(flatten)]
        io: Common,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Block length in samples (odd).
        #[arg(long, default_value_t = 41)]
        block_len: usize,
        /// Distance between block starts; defaults to the block length.
        #[arg(long)]
        hop: Option<usize>,
        /// Degree of the parameter polynomials.
        #[arg(long, default_value_t = 2)]
        poly_degree: usize,
        /// Write every block report, the plan and the fit residuals here.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
        /// Only score block lengths 21, 31, 41, 51, 61 by DFT peak symmetry.
        #[arg(long)]
        sweep_block_len: bool,
    },
    /// Regenerate samples from a model, a report or a parameter file.
    Regen {
        #[command(flatten)]
        io: Common,
        /// Model file (same as --in).
        #[arg(long, value_name = "PATH", conflicts_with = "input")]
        model: Option<PathBuf>,
        /// Number of samples.
        #[arg(long)]
        n: usize,
        /// Absolute index of the first sample.
        #[arg(long, default_value_t = 0)]
        start: i64,
        /// Print the NRMSE against this CSV series.
        #[arg(long, value_name = "PATH")]
        reference: Option<PathBuf>,
    },
    /// AR power spectral density of a series or of its product sequence.
    Psd {
        #[command(flatten)]
        io: Common,
        /// AR order; defaults to min(60, len / 3).
        #[arg(long)]
        ar_order: Option<usize>,
        /// Number of frequencies on [0, π].
        #[arg(long, default_value_t = 4096)]
        grid: usize,
        /// Use the centered product sequence x[−l]·x[l].
        #[arg(long)]
        product: bool,
    },
}

#[derive(Args, Clone)]
struct EstimatorArgs {
    /// AR order for the spectral search; defaults to min(60, len / 3).
    #[arg(long)]
    ar_order: Option<usize>,
    /// PSD grid size.
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    /// Line amplitude floor relative to the strongest product line.
    #[arg(long, default_value_t = 0.005)]
    prominence: f64,
    /// Largest accepted residual NRMSE.
    #[arg(long, default_value_t = 0.5)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t = AveragingArg::Precision)]
    averaging: AveragingArg,
    /// Skip the least-squares refinement of the frequencies.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Plain,
    Precision,
}

impl EstimatorArgs {
    fn config(&self) -> EstimatorConfig {
        EstimatorConfig {
            ar_order: self.ar_order,
            grid_size: self.grid,
            prominence: self.prominence,
            residual_tolerance: self.tolerance,
            averaging: match self.averaging {
                AveragingArg::Plain => Averaging::Plain,
                AveragingArg::Precision => Averaging::Precision,
            },
            refine_frequencies: !self.no_refine,
            ..EstimatorConfig::default()
        }
    }
}

fn need_input(io: &Common) -> Result<&Path, ApmsError> {
    io.input.as_deref().ok_or_else(|| ApmsError::InvalidArgument("--in is required".into()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), ApmsError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| ApmsError::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(ApmsError::from),
    }
}

fn emit_json<S: Serialize>(out: Option<&Path>, v: &S) -> Result<(), ApmsError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| ApmsError::InvalidArgument(e.to_string()))?;
    emit(out, &(text + "\n"))
}

/// Anything `regen` and `synth` can draw samples from.
enum Source {
    Model(Box<Model>),
    Params(Params),
}

fn load_source(path: &Path) -> Result<Source, ApmsError> {
    let text = std::fs::read_to_string(path).map_err(|e| ApmsError::Io(format!("{}: {e}", path.display())))?;
    if let Ok(m) = serde_json::from_str::<Model>(&text) {
        m.validate()?;
        return Ok(Source::Model(Box::new(m)));
    }
    if let Ok(r) = serde_json::from_str::<Report>(&text) {
        return Ok(Source::Params(r.params));
    }
    let p: Params = read_json(path)?;
    Ok(Source::Params(p))
}

fn render(source: &Source, start: i64, n: usize) -> Result<(Series, bool), ApmsError> {
    match source {
        Source::Params(p) => Ok((synthesize(p, start, n)?, false)),
        Source::Model(m) => {
            let r = regenerate_range(m, start, n)?;
            Ok((r.series, r.extrapolated))
        }
    }
}

fn run(cli: Cli) -> Result<(), ApmsError> {
    match cli.command {
        Command::Synth { io, n, start, snr, rate } => {
            let source = match &io.input {
                Some(p) => load_source(p)?,
                None => Source::Params(Params::table1()),
            };
            let mut x = match &source {
                Source::Params(p) => synthesize(p, start, n)?,
                Source::Model(m) => synthesize_time_varying(m, start, n)?,
            };
            if let Some(r) = rate {
                if !(r.is_finite() && r > 0.0) {
                    return Err(ApmsError::InvalidArgument(format!("rate must be positive, got {r}")));
                }
                x = x.with_rate(r);
            }
            let mut header = String::new();
            if let Some(db) = snr {
                x = add_awgn(&x, db, io.seed)?;
                let meta = NoiseMetadata::new(io.seed, db);
                header = format!(
                    "# rng={}\n# seed={}\n# snr_db={}\n",
                    meta.rng,
                    meta.seed,
                    meta.snr_db.map_or("inf".to_string(), |v| v.to_string())
                );
            }
            emit(io.out.as_deref(), &(header + &format_series(&x)))
        }
        Command::Estimate { io, est, dump_clusters } => {
            let x: Series = read_series(need_input(&io)?)?;
            let report = estimate_block(&x, &est.config())?;
            if let Some(p) = dump_clusters {
                apms::io_noise::write_json(&report.diagnostics.frequency, p)?;
            }
            emit_json(io.out.as_deref(), &report)
        }
        Command::Blocks { io, est, block_len, hop, poly_degree, report, sweep_block_len } => {
            let x: Series = read_series(need_input(&io)?)?;
            if sweep_block_len {
                let sweep = sweep_block_lengths(&x, &SWEEP_LENGTHS)?;
                #[derive(Serialize)]
                struct Sweep {
                    scores: Vec<(usize, f64)>,
                    best: Option<usize>,
                }
                return emit_json(io.out.as_deref(), &Sweep { best: best_block_length(&sweep), scores: sweep });
            }
            let settings = BlockSettings { block_length: block_len, hop: hop.unwrap_or(block_len), degree: poly_degree };
            let run = run_blocks(&x, &settings, &est.config())?;
            if !run.failed.is_empty() {
                eprintln!("warning: {} block(s) failed and were left out of the fit: centers {:?}", run.failed.len(), run.failed);
            }
            if let Some(p) = report {
                apms::io_noise::write_json(&run, p)?;
            }
            emit_json(io.out.as_deref(), &run.fit.model)
        }
        Command::Regen { io, model, n, start, reference } => {
            let path = model.as_deref().or(io.input.as_deref()).ok_or_else(|| {
                ApmsError::InvalidArgument("--model (or --in) is required".into())
            })?;
            let source = load_source(path)?;
            let (x, extrapolated) = render(&source, start, n)?;
            if extrapolated {
                eprintln!("warning: samples outside the fitted span were extrapolated");
            }
            if let Some(r) = reference {
                let orig: Series = read_series(r)?;
                let e = reconstruction_error(&orig, &x)?;
                eprintln!("nrmse {e:e}");
            }
            emit(io.out.as_deref(), &format_series(&x))
        }
        Command::Psd { io, ar_order, grid, product } => {
            let x: Series = read_series(need_input(&io)?)?;
            let seq = if product { apms::product_function::product_sequence(&x)?.values } else { x.values.clone() };
            let order = ar_order.unwrap_or_else(|| default_ar_order(seq.len()));
            let model = fit_ar(&seq, order, RankPolicy::MinNorm)?;
            let spec = ar_psd(&model, grid)?;
            let mut text = format!("# ar_order={order}\n# rank={}\nomega,psd\n", model.rank);
            for (w, p) in spec.omega.iter().zip(&spec.psd) {
                text.push_str(&format!("{w},{p}\n"));
            }
            emit(io.out.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
