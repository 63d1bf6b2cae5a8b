use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridsift::pipeline::{
    effective_threads, exit_code, run_cluster, run_detect, run_pipeline, run_replay, run_report,
    run_synth, run_train, thread_pool, validate_config, PipelineConfig, Stage,
};
use gridsift::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "gridsift",
    version,
    about = "Unsupervised event detection and clustering for PMU streams"
)]
struct Cli {
    /// Pipeline configuration (TOML); its values are the defaults for every flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = one per core). GRIDSIFT_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic stream.
    Synth(SynthArgs),
    /// Train the nine per-feature detectors.
    Train(TrainArgs),
    /// Score a stream and write the event store.
    Detect(DetectArgs),
    /// Cluster the stored events of each category.
    Cluster(ClusterArgs),
    /// Actively assign events the model has not seen.
    Replay(ReplayArgs),
    /// Write cluster statistics, scatter tables and sequence reports.
    Report(ReportArgs),
    /// Run every stage, resuming from existing artifacts.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    minutes: Option<f64>,
    /// Event probability per sample.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Leave out the planted super-event sequence.
    #[arg(long)]
    no_super_event: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Band half-width in score standard deviations.
    #[arg(long)]
    zp: Option<f64>,
    /// Leading minutes of the stream used for training.
    #[arg(long)]
    minutes: Option<f64>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    cmax: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    exact_cap: Option<usize>,
    /// Only events starting within this many minutes are clustered.
    #[arg(long)]
    fit_minutes: Option<f64>,
    /// Directory for cached similarity matrices.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// Output directory for the updated model and the assignment log.
    #[arg(long, default_value = "replay")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Rerun stages even when their artifacts exist.
    #[arg(long)]
    force: bool,
    /// Override the configured work directory.
    #[arg(long)]
    work_dir: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => validate_config(p),
        None => Ok(PipelineConfig::default()),
    }
}

/// Runs one stage inside the configured thread pool, tagging errors with
/// the stage and its output path.
fn staged<T>(
    stage: Stage,
    out: &Path,
    threads: usize,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T>
where
    T: Send,
{
    let pool = thread_pool(threads)?;
    let t = std::time::Instant::now();
    log::info!("stage={} status=start", stage.name());
    let r = pool.install(f).map_err(|e| Error::Stage {
        stage: stage.name(),
        artifact: out.to_path_buf(),
        source: Box::new(e),
    })?;
    log::info!(
        "stage={} status=done ms={}",
        stage.name(),
        t.elapsed().as_millis()
    );
    Ok(r)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    let threads = effective_threads(cfg.threads);
    match cli.command {
        Command::Synth(a) => {
            if let Some(m) = a.minutes {
                cfg.synth.minutes = m;
            }
            if let Some(r) = a.rate {
                cfg.synth.event_rate = r;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if a.no_super_event {
                cfg.synth.super_event = false;
            }
            let sc = cfg.synth.synth_config(cfg.seed);
            sc.validate()?;
            let s = staged(Stage::Synth, &a.out, threads, || run_synth(&sc, &a.out))?;
            println!(
                "wrote {} samples with {} events to {}",
                s.samples,
                s.events,
                a.out.display()
            );
        }
        Command::Train(a) => {
            if let Some(e) = a.epochs {
                cfg.detector.epochs = e;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(z) = a.zp {
                cfg.detector.z_p = z;
            }
            if let Some(m) = a.minutes {
                cfg.train.minutes = m;
            }
            cfg.validate()?;
            let s = staged(Stage::Train, &a.out, threads, || {
                run_train(
                    &a.data,
                    &cfg.ingest,
                    &cfg.detector,
                    cfg.train.minutes,
                    cfg.seed,
                    &a.out,
                )
            })?;
            println!(
                "trained on {} windows; models in {}",
                s.windows,
                a.out.display()
            );
        }
        Command::Detect(a) => {
            let s = staged(Stage::Detect, &a.out, threads, || {
                run_detect(&a.data, &cfg.ingest, &a.models, cfg.events, &a.out)
            })?;
            println!(
                "{} windows, {} flagged, {} events in {}",
                s.windows,
                s.flagged_windows,
                s.rate.events,
                a.out.display()
            );
        }
        Command::Cluster(a) => {
            if let Some(c) = a.cmax {
                cfg.cluster.c_max = c;
            }
            if let Some(t) = a.theta {
                cfg.cluster.theta_active = t;
            }
            if let Some(c) = a.exact_cap {
                cfg.cluster.exact_cap = c;
            }
            if let Some(m) = a.fit_minutes {
                cfg.replay.fit_minutes = m;
            }
            cfg.validate()?;
            let f = staged(Stage::Cluster, &a.out, threads, || {
                run_cluster(
                    &a.events,
                    &cfg.similarity,
                    &cfg.cluster,
                    cfg.replay.fit_minutes,
                    &a.out,
                    a.cache.as_deref(),
                )
            })?;
            for m in &f.categories {
                println!("category {}: {} clusters", m.category, m.clusters.len());
            }
        }
        Command::Replay(a) => {
            let (_, log) = staged(Stage::Replay, &a.out, threads, || {
                run_replay(&a.model, &a.events, &a.out)
            })?;
            let created = log.iter().filter(|e| e.created).count();
            println!(
                "assigned {} events, {created} new clusters; output in {}",
                log.len(),
                a.out.display()
            );
        }
        Command::Report(a) => {
            staged(Stage::Report, &a.out, threads, || {
                run_report(&a.model, &a.events, &cfg.report, &a.out)
            })?;
            println!("reports in {}", a.out.display());
        }
        Command::Pipeline(a) => {
            if let Some(w) = a.work_dir {
                cfg.paths.work_dir = w;
            }
            let r = run_pipeline(&cfg, a.force)?;
            let names = |v: &[Stage]| v.iter().map(|s| s.name()).collect::<Vec<_>>().join(",");
            println!(
                "ran [{}] skipped [{}]; artifacts in {}",
                names(&r.ran),
                names(&r.skipped),
                cfg.paths.work_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            ExitCode::from(u8::try_from(code).unwrap_or(1))
        }
    }
}
