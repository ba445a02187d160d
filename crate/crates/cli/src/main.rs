//! Batch command surface for the disaggregation pipeline: simulate cohorts,
//! train models, decode aggregates, score and export the results.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags), 2 on data or
//! model errors (unreadable files, invalid configs, unsupported variants).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use disagg_core::error::{Error, Result};
use disagg_core::estimation::{train, LabeledDataset, TrainConfig};
use disagg_core::evaluation::{compare_models, normalized_error};
use disagg_core::inference::{chainwise_viterbi, interleaved_viterbi, DecodeConfig};
use disagg_core::io::{
    read_aggregate_series, read_dataset, read_household_dir, write_atomic, write_dataset,
    write_disaggregation, DatasetManifest, StartSpec, DATA_SCHEMA,
};
use disagg_core::model::{HouseholdModel, ModelVariant};
use disagg_core::simulation::{sample_household_model, simulate, SimConfig};

mod sim_config;
use sim_config::SimCohortConfig;

#[derive(Parser)]
#[command(
    name = "disagg",
    version,
    about = "Energy disaggregation: factorial-HMM training, decoding, and evaluation"
)]
struct Cli {
    /// Base seed for subcommands that draw randomness (only `simulate`
    /// does); overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for household-level parallelism in `compare`
    /// (0 or absent = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Off => log::LevelFilter::Off,
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

fn parse_variant(s: &str) -> std::result::Result<ModelVariant, String> {
    s.parse::<ModelVariant>().map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic cohort into a directory of household CSVs.
    Simulate {
        /// Cohort config JSON (see `docs/formats.md`).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a household model from labeled traces.
    Train {
        /// Wide CSV of labeled traces, or a directory holding exactly one.
        #[arg(long)]
        data: PathBuf,
        /// Where the model JSON goes.
        #[arg(long)]
        out: PathBuf,
        /// States per appliance.
        #[arg(long, default_value_t = 3)]
        states: usize,
        /// Time-of-day transition bins per day.
        #[arg(long, default_value_t = 24)]
        bins: usize,
        /// Additive smoothing pseudo-count.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Decode an aggregate series into per-appliance estimates.
    Disaggregate {
        /// Trained model JSON.
        #[arg(long)]
        model: PathBuf,
        /// CSV holding the aggregate (or appliance columns to sum).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: ModelVariant,
        /// Estimate CSV; a `.meta.json` sidecar lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the normalized error between two trace files.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
    },
    /// Train/test every household under several variants; write a report.
    Compare {
        /// Directory of household CSVs (one per household).
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated variants, e.g. fhmm,ifnhmm.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_variant)]
        variants: Vec<ModelVariant>,
        #[arg(long)]
        train_days: usize,
        #[arg(long)]
        test_days: usize,
        /// Report file (CSV grid with `#` metadata lines).
        #[arg(long)]
        out: PathBuf,
        /// States per appliance for training.
        #[arg(long, default_value_t = 3)]
        states: usize,
        /// Time-of-day transition bins per day for training.
        #[arg(long, default_value_t = 24)]
        bins: usize,
        /// Additive smoothing pseudo-count for training.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Export one day of truth vs estimate as a long plot-ready CSV.
    PlotData {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        /// Comma-separated appliance names; all when omitted.
        #[arg(long, value_delimiter = ',')]
        appliances: Vec<String>,
        /// Day index into the data, starting at 0.
        #[arg(long, default_value_t = 0)]
        day: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1; --help and --version are successes.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    env_logger::Builder::new()
        .filter_level(cli.log_level.into())
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => cmd_simulate(&config, &out, cli.seed),
        Command::Train {
            data,
            out,
            states,
            bins,
            alpha,
        } => cmd_train(&data, &out, states, bins, alpha),
        Command::Disaggregate {
            model,
            data,
            variant,
            out,
        } => cmd_disaggregate(&model, &data, variant, &out),
        Command::Evaluate { truth, estimate } => cmd_evaluate(&truth, &estimate),
        Command::Compare {
            data,
            variants,
            train_days,
            test_days,
            out,
            states,
            bins,
            alpha,
        } => cmd_compare(&data, &variants, train_days, test_days, &out, states, bins, alpha),
        Command::PlotData {
            truth,
            estimate,
            appliances,
            day,
            out,
        } => cmd_plot_data(&truth, &estimate, &appliances, day, &out),
    }
}

fn cmd_simulate(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let cohort = SimCohortConfig::load(config)?;
    let base_seed = seed_override.unwrap_or(cohort.seed);
    let variant = cohort.variant()?;
    std::fs::create_dir_all(out)?;

    let width = cohort
        .households
        .saturating_sub(1)
        .to_string()
        .len()
        .max(2);
    for h in 0..cohort.households {
        let id = format!("h{h:0width$}");
        let sim_cfg = SimConfig {
            seed: base_seed.wrapping_add(2 * h as u64),
            ..cohort.sim_config()?
        };
        let model = sample_household_model(&sim_cfg)?;
        let trace = simulate(
            &model,
            sim_cfg.days,
            variant,
            base_seed.wrapping_add(2 * h as u64 + 1),
        )?;
        if trace.truncated_steps > 0 {
            log::warn!(
                "{id}: {} of {} readings clipped at zero",
                trace.truncated_steps,
                trace.aggregate.len()
            );
        }
        let data = LabeledDataset::new(trace.appliances, Some(trace.aggregate), model.sampling)?;
        let csv_path = out.join(format!("{id}.csv"));
        write_dataset(&data, &csv_path)?;
        let manifest = DatasetManifest {
            schema: DATA_SCHEMA.into(),
            household_id: id.clone(),
            interval_seconds: model.sampling.interval_seconds,
            bins_per_day: model.sampling.bins_per_day,
            appliance_names: data.appliances.names.clone(),
            data_file: format!("{id}.csv"),
            start: StartSpec::Step(0),
        };
        manifest.save(&disagg_core::io::manifest_path(&csv_path))?;
        log::info!("{id}: wrote {} steps to {}", data.num_steps(), csv_path.display());
    }
    println!(
        "{} households, {} days each, variant {variant} -> {}",
        cohort.households,
        cohort.days,
        out.display()
    );
    Ok(())
}

fn load_single_household(data: &Path) -> Result<LabeledDataset> {
    if data.is_dir() {
        let mut households = read_household_dir(data)?;
        if households.len() != 1 {
            let ids: Vec<String> = households.into_iter().map(|(id, _)| id).collect();
            return Err(Error::InvalidParameter(format!(
                "train expects one household; {} holds {}: {}",
                data.display(),
                ids.len(),
                ids.join(", ")
            )));
        }
        Ok(households.pop().unwrap().1)
    } else {
        read_dataset(data)
    }
}

fn cmd_train(data: &Path, out: &Path, states: usize, bins: usize, alpha: f64) -> Result<()> {
    let dataset = load_single_household(data)?;
    let cfg = TrainConfig {
        num_states: states,
        bins_per_day: bins,
        smoothing_alpha: alpha,
        ..TrainConfig::default()
    };
    let trained = train(&dataset, &cfg)?;
    for w in &trained.warnings {
        log::warn!("{w}");
    }
    trained.model.save(out)?;
    println!(
        "trained {} appliances, {} states each requested, {} bins -> {}",
        trained.model.num_chains(),
        states,
        bins,
        out.display()
    );
    Ok(())
}

fn cmd_disaggregate(model: &Path, data: &Path, variant: ModelVariant, out: &Path) -> Result<()> {
    let model = HouseholdModel::load(model)?;
    let (y, _) = read_aggregate_series(data)?;
    let cfg = DecodeConfig::default();
    let result = if variant.interleaved() {
        interleaved_viterbi(&model, &y, variant, &cfg)?
    } else {
        chainwise_viterbi(&model, &y, variant, &cfg)?
    };
    if !result.converged {
        log::warn!(
            "decode used the full sweep budget ({}) without converging",
            result.sweeps_used
        );
    }
    write_disaggregation(&result, variant, &model.sampling, out)?;
    println!(
        "decoded {} steps under {variant}: log-posterior {:.3}, {} sweeps -> {}",
        y.len(),
        result.log_posterior,
        result.sweeps_used,
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(truth: &Path, estimate: &Path) -> Result<()> {
    let truth = read_dataset(truth)?;
    let estimate = read_dataset(estimate)?;
    let e = normalized_error(&truth.appliances, &estimate.appliances)?;
    println!("{e:.6}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    data: &Path,
    variants: &[ModelVariant],
    train_days: usize,
    test_days: usize,
    out: &Path,
    states: usize,
    bins: usize,
    alpha: f64,
) -> Result<()> {
    let households = read_household_dir(data)?;
    let train_cfg = TrainConfig {
        num_states: states,
        bins_per_day: bins,
        smoothing_alpha: alpha,
        ..TrainConfig::default()
    };
    let report = compare_models(
        &households,
        variants,
        train_days,
        test_days,
        &train_cfg,
        &DecodeConfig::default(),
    )?;
    write_atomic(out, report.to_csv().as_bytes())?;
    print!("{}", report.table());
    Ok(())
}

fn cmd_plot_data(
    truth: &Path,
    estimate: &Path,
    appliances: &[String],
    day: usize,
    out: &Path,
) -> Result<()> {
    let truth = read_dataset(truth)?;
    let estimate = read_dataset(estimate)?;
    let table = disagg_core::io::export_plot_table(
        &truth.appliances,
        &estimate.appliances,
        appliances,
        day,
        &truth.sampling,
    )?;
    write_atomic(out, table.as_bytes())?;
    println!("wrote plot table for day {day} -> {}", out.display());
    Ok(())
}
