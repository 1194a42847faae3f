use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hyperfuse_core::checkpoint::Checkpoint;
use hyperfuse_core::config::RunConfig;
use hyperfuse_core::datamodel::{load_cohort, Cohort, Subject};
use hyperfuse_core::evalharness::{run_cv, write_cv_artifacts, MetricsReport};
use hyperfuse_core::synthdata::{generate_cohort, write_cohort};
use hyperfuse_core::trainer::{train_stage1, train_stage2, write_loss_log, TrainReport};

#[derive(Parser)]
#[command(name = "hyperfuse", version, about = "Multimodal brain-network fusion: synthesize, train, evaluate, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort and write its manifest.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train both stages on the whole cohort; writes checkpoint.json and loss_log.csv.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified cross-validation; writes metrics, embeddings and the connectivity difference map.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Folds trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the Acc/Sen/Spec/AUC table of a finished eval run and save it as report.txt.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for assignment in &args.set {
        cfg.apply_override(assignment)?;
    }
    cfg.apply_seed_env()?;
    cfg.model.validate()?;
    Ok(cfg)
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    std::fs::write(out.join("config.resolved"), cfg.resolved())?;
    Ok(())
}

fn load_matching_cohort(manifest: &Path, cfg: &RunConfig) -> Result<Cohort> {
    let cohort = load_cohort(manifest)?;
    let Some(first) = cohort.subjects.first() else {
        bail!("cohort {} is empty", manifest.display());
    };
    if first.dims() != cfg.model.dims() {
        bail!(
            "cohort (N, d, c) = {:?} does not match config {:?}; set n_nodes, n_features, fv_len",
            first.dims(),
            cfg.model.dims()
        );
    }
    Ok(cohort)
}

fn cmd_synth(config: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let cohort = generate_cohort(&cfg.synth_spec())?;
    prepare_out(out, &cfg)?;
    let manifest = write_cohort(&cohort, out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_train(manifest: &Path, config: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let cohort = load_matching_cohort(manifest, &cfg)?;
    prepare_out(out, &cfg)?;
    let start = Instant::now();
    let subjects: Vec<&Subject> = cohort.subjects.iter().collect();
    let state = train_stage1(&subjects, &cfg.model, cfg.model.seed)?;
    let state = train_stage2(state, &subjects)?;
    let report = TrainReport {
        history: state.history.clone(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Checkpoint::from_state(&state, &cfg.hash()).save(&out.join("checkpoint.json"))?;
    write_loss_log(&out.join("loss_log.csv"), &report.history)?;
    let last = report.history.last().map_or(f64::NAN, |h| h.total);
    println!(
        "trained {} subjects, {} epochs, final total loss {last:.6}, {:.1}s",
        cohort.len(),
        report.history.len(),
        report.wall_clock_secs
    );
    Ok(())
}

fn cmd_eval(manifest: &Path, config: &ConfigArgs, out: &Path, folds: usize, jobs: usize) -> Result<()> {
    let cfg = load_config(config)?;
    let cohort = load_matching_cohort(manifest, &cfg)?;
    prepare_out(out, &cfg)?;
    let result = run_cv(&cohort, &cfg.model, cfg.model.seed, folds, jobs)?;
    write_cv_artifacts(&result, out)?;
    print!("{}", result.report.table());
    Ok(())
}

fn cmd_report(run: &Path) -> Result<()> {
    let path = run.join("metrics.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let report = MetricsReport::from_json(&text)?;
    let table = report.table();
    std::fs::write(run.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out } => cmd_synth(&config, &out),
        Command::Train { manifest, config, out } => cmd_train(&manifest, &config, &out),
        Command::Eval {
            manifest,
            config,
            out,
            folds,
            jobs,
        } => cmd_eval(&manifest, &config, &out, folds, jobs),
        Command::Report { run: dir } => cmd_report(&dir),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("hyperfuse: {msg}");
            ExitCode::FAILURE
        }
    }
}
