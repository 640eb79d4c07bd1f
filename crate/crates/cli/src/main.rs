//! `debias` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use debias::baselines;
use debias::bias_filter::apply_filter;
use debias::estimator::{estimate_beta, estimate_rates, mc_verify_lemma, required_sample_sizes, McSpec};
use debias::generator::sample_dataset;
use debias::harness::{
    default_synthetic_spec, emit_report, evaluate_metrics, load_csv, load_dataset, positive_membership, run_experiment,
    save_dataset, CsvSchema, ExperimentConfig, Method, ReportFormat,
};
use debias::learner::train_weighted_logistic;
use debias::stats::{correlation_matrix, pairwise_chi2, Condition};
use debias::{BetaEstimates, BetaVector, Dataset, FilterMode, LinearModel, PopulationSpec, SampleSizeSpec, TrainConfig, Weighting};

#[derive(Parser)]
#[command(name = "debias", version, about = "Correct group-wise underrepresentation bias with two batches of data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Theoretical,
    Empirical,
}

impl From<Mode> for FilterMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Theoretical => FilterMode::Theoretical,
            Mode::Empirical => FilterMode::Empirical,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset from a population spec.
    Synth {
        /// PopulationSpec JSON; the built-in three-group population when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drop positives from a dataset at group-dependent rates.
    Bias {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated per-group retention rates.
        #[arg(long, value_delimiter = ',', conflicts_with = "beta")]
        betas: Vec<f64>,
        /// JSON file with keys `beta0` and `betas`.
        #[arg(long)]
        beta: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "empirical")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate inverse retention weights from an unbiased and a biased batch.
    Estimate {
        #[arg(long)]
        unbiased: PathBuf,
        #[arg(long)]
        biased: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample sizes needed for a target accuracy.
    Samplesize {
        /// SampleSizeSpec JSON.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Train a classifier with one of the correction methods.
    Train {
        /// Biased training batch.
        #[arg(long)]
        input: PathBuf,
        /// Unbiased batch; needed by `reweighted` (unless --estimates is given) and `unbiased_down`.
        #[arg(long)]
        unbiased: Option<PathBuf>,
        /// Output of `estimate`, used instead of estimating from --unbiased.
        #[arg(long)]
        estimates: Option<PathBuf>,
        #[arg(long, default_value = "reweighted")]
        method: Method,
        /// TrainConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = baselines::DEFAULT_SMOTE_K)]
        smote_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy, per-group accuracy and F1 of a trained model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run a full experiment from a config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        /// Restrict to these methods, overriding the config.
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo coverage check of one concentration guarantee.
    Verify {
        #[arg(long)]
        lemma: String,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        /// McSpec JSON; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Group correlation and pairwise chi-square independence tests.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Schema JSON for arbitrary CSV files; the native layout otherwise.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Restrict to positive rows.
        #[arg(long)]
        positives: bool,
    },
}

#[derive(Serialize, serde::Deserialize)]
struct EstimateOutput {
    rates: debias::RateEstimates,
    beta_hat: BetaEstimates,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(out, &bytes)
}

fn write_csv(out: Option<&Path>, data: &Dataset) -> Result<()> {
    match out {
        Some(p) => Ok(save_dataset(data, p)?),
        None => Ok(debias::harness::write_dataset(data, std::io::stdout().lock())?),
    }
}

fn read_data(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

/// Caps the global thread pool at `DEBIAS_THREADS`.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DEBIAS_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().with_context(|| format!("DEBIAS_THREADS={raw:?} is not a thread count"))?;
    if n == 0 {
        bail!("DEBIAS_THREADS must be at least 1");
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn bias(input: &Path, betas: Vec<f64>, beta: Option<&Path>, mode: FilterMode, seed: u64) -> Result<Dataset> {
    let data = read_data(input)?;
    let beta = match beta {
        Some(path) => read_json::<BetaVector>(path)?,
        None if betas.is_empty() => bail!("give either --betas or --beta"),
        None => match mode {
            FilterMode::Empirical => BetaVector::empirical(betas)?,
            FilterMode::Theoretical => BetaVector::theoretical(&positive_membership(&data), betas)?,
        },
    };
    Ok(apply_filter(&data, &beta, mode, seed)?)
}

fn train(
    input: &Path,
    unbiased: Option<&Path>,
    estimates: Option<&Path>,
    method: Method,
    config: Option<&Path>,
    smote_k: usize,
    seed: u64,
) -> Result<LinearModel> {
    let biased = read_data(input)?;
    let unbiased = unbiased.map(read_data).transpose()?;
    let cfg = match config {
        Some(p) => read_json::<TrainConfig>(p)?,
        None => TrainConfig { seed, ..TrainConfig::default() },
    };
    let (data, weights) = match method {
        Method::Reweighted => {
            let beta_hat = match (estimates, &unbiased) {
                (Some(p), _) => read_json::<EstimateOutput>(p)?.beta_hat,
                (None, Some(u)) => estimate_beta(&estimate_rates(u, &biased)?)?,
                (None, None) => bail!("reweighted training needs --unbiased or --estimates"),
            };
            let w = Weighting::estimated(beta_hat).row_weights(&biased)?;
            (biased, w)
        }
        other => {
            let data = match other {
                Method::Biased => biased,
                Method::UnbiasedDown => {
                    let Some(u) = &unbiased else { bail!("unbiased_down training needs --unbiased") };
                    baselines::downsample_unbiased(u, biased.len(), seed)?
                }
                Method::Smote => baselines::smote_lite(&biased, smote_k, seed)?,
                Method::Under => baselines::random_undersample(&biased, seed)?,
                Method::Reweighted => unreachable!(),
            };
            let n = data.len();
            (data, vec![1.0; n])
        }
    };
    Ok(train_weighted_logistic(&data, &weights, &cfg)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, n, seed, out } => {
            let spec = match spec {
                Some(p) => read_json::<PopulationSpec>(&p)?,
                None => default_synthetic_spec(),
            };
            write_csv(out.as_deref(), &sample_dataset(&spec, n, seed)?)
        }
        Command::Bias { input, betas, beta, mode, seed, out } => {
            write_csv(out.as_deref(), &bias(&input, betas, beta.as_deref(), mode.into(), seed)?)
        }
        Command::Estimate { unbiased, biased, out } => {
            let rates = estimate_rates(&read_data(&unbiased)?, &read_data(&biased)?)?;
            let beta_hat = estimate_beta(&rates)?;
            if beta_hat.beta0_flagged {
                eprintln!("warning: estimated beta0 {:.4} exceeds 1; the batches look inconsistent", beta_hat.beta0_hat);
            }
            write_json(out.as_deref(), &EstimateOutput { rates, beta_hat })
        }
        Command::Samplesize { spec } => write_json(None, &required_sample_sizes(&read_json::<SampleSizeSpec>(&spec)?)?),
        Command::Train { input, unbiased, estimates, method, config, smote_k, seed, out } => {
            let model = train(&input, unbiased.as_deref(), estimates.as_deref(), method, config.as_deref(), smote_k, seed)?;
            write_json(out.as_deref(), &model)
        }
        Command::Evaluate { model, input } => {
            let model: LinearModel = read_json(&model)?;
            write_json(None, &evaluate_metrics(&model, &read_data(&input)?)?)
        }
        Command::Experiment { config, format, method, out } => {
            let mut cfg: ExperimentConfig = read_json(&config)?;
            if !method.is_empty() {
                cfg.methods = method;
            }
            write_bytes(out.as_deref(), &emit_report(&run_experiment(&cfg)?, format)?)
        }
        Command::Verify { lemma, trials, config, seed } => {
            let mut spec = match config {
                Some(p) => read_json::<McSpec>(&p)?,
                None => McSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let report = mc_verify_lemma(&lemma, trials, &spec)?;
            write_json(None, &report)?;
            if !report.passed {
                bail!("{lemma}: {} failures in {} trials exceed the allowed rate {}", report.failures, trials, report.budget);
            }
            Ok(())
        }
        Command::Stats { input, schema, positives } => {
            let data = match schema {
                Some(s) => load_csv(&input, &read_json::<CsvSchema>(&s)?)?,
                None => read_data(&input)?,
            };
            let condition = if positives { Condition::Positives } else { Condition::All };
            write_json(
                None,
                &serde_json::json!({
                    "correlation": correlation_matrix(&data, condition)?,
                    "chi2": pairwise_chi2(&data, condition)?,
                }),
            )
        }
    }
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
