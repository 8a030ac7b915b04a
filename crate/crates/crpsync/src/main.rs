//! Command-line front end for the synchronization pipeline.
//!
//! The subcommands mirror the pipeline stages: `ingest` caches validated,
//! aligned series; `params` prints embedding diagnostics; `build`
//! materializes example datasets for one `(w, epsilon, k, tau)` grid point;
//! `train` fits the classifier; `eval` scores a checkpoint on the test
//! split and maintains the grid report; `render-crp` exports plots as PGM.
//!
//! Exit codes: 0 success, 2 usage or data errors, 1 internal or numeric
//! failures. Every subcommand is deterministic: the same inputs, flags, and
//! seed produce byte-identical artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crpsync::config::{ConfigError, Settings};
use crpsync::dataset::{
    build_pair_examples, cache_dir_name, pool_pairs, read_dataset_cache, split_temporal,
    write_dataset_cache, DatasetError, SplitDataset, WindowConfig,
};
use crpsync::embedding::{
    embed, estimate_delay_ami, estimate_dimension_fnn, zscore, EmbeddingError, EmbeddingParams,
};
use crpsync::eval::{confusion, EvalError, GridReport};
use crpsync::ingestion::{
    align_pair, load_csv, read_pair_cache, read_series_cache, write_pair_cache,
    write_series_cache, Channel, IngestError,
};
use crpsync::nn::checkpoint::{read_checkpoint, write_checkpoint};
use crpsync::nn::optim::LrSchedule;
use crpsync::nn::{classify, predict, train, Architecture, NnError, TrainConfig};
use crpsync::recurrence::{cross_recurrence_plot, render_pgm, RecurrenceError};

#[derive(Parser)]
#[command(
    name = "crpsync",
    version,
    about = "Predict next-day synchronization of stock pairs from cross-recurrence plots"
)]
struct Cli {
    /// `key = value` settings file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load ticker CSVs, validate and align them, and cache every pair.
    Ingest(IngestArgs),
    /// Print delay (AMI) and dimension (FNN) diagnostics for one ticker.
    Params(ParamsArgs),
    /// Build the per-pair example caches for one (w, epsilon, k, tau).
    Build(BuildArgs),
    /// Train the classifier on a built dataset directory.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset's test split and update the report.
    Eval(EvalArgs),
    /// Export a cross-recurrence plot as a binary PGM image.
    RenderCrp(RenderArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Directory holding one `TICKER.csv` per ticker.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Tickers to ingest; defaults to every CSV in the data directory.
    #[arg(long, value_delimiter = ',')]
    tickers: Vec<String>,
    /// Channels to derive: price, volume, return.
    #[arg(long, value_delimiter = ',', value_parser = Channel::from_str)]
    channels: Vec<Channel>,
}

#[derive(Args)]
struct ParamsArgs {
    /// Ticker whose cached series to analyze.
    #[arg(long)]
    ticker: String,
    /// Largest lag for the mutual-information curve.
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    /// Largest embedding dimension for the false-neighbor scan.
    #[arg(long, default_value_t = 5)]
    max_k: usize,
}

#[derive(Args)]
struct BuildArgs {
    /// Window length in trading days.
    #[arg(long)]
    w: Option<usize>,
    /// Recurrence threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Embedding dimension.
    #[arg(long)]
    k: Option<usize>,
    /// Embedding delay.
    #[arg(long)]
    tau: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `build`; defaults to the grid point
    /// named by the settings.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Checkpoint path; defaults to models/<dataset>_seed<seed>.crpm under
    /// the cache directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory produced by `build`; defaults as in `train`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Grid report CSV (3-decimal); a full-precision sidecar is kept next
    /// to it.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("scope").required(true).args(["full", "w"]))]
struct RenderArgs {
    /// Pair to render, written TICKER-TICKER.
    #[arg(long)]
    pair: String,
    /// Render the full-series plot.
    #[arg(long)]
    full: bool,
    /// Render one sliding window of this length instead.
    #[arg(long)]
    w: Option<usize>,
    /// Last observation of the window (0-based; defaults to the final one).
    #[arg(long, requires = "w")]
    epoch: Option<usize>,
    /// Embed raw observations without normalization.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    /// Output PGM path.
    #[arg(long)]
    out: PathBuf,
}

struct AppError {
    message: String,
    code: u8,
}

impl AppError {
    fn usage(message: impl Into<String>) -> AppError {
        AppError { message: message.into(), code: 2 }
    }

    fn in_file(path: &Path, err: impl fmt::Display) -> AppError {
        AppError::usage(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

macro_rules! data_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for AppError {
            fn from(e: $ty) -> AppError {
                AppError { message: e.to_string(), code: 2 }
            }
        }
    )*};
}
data_error!(
    ConfigError,
    IngestError,
    DatasetError,
    EmbeddingError,
    RecurrenceError,
    EvalError,
    std::io::Error
);

impl From<NnError> for AppError {
    fn from(e: NnError) -> AppError {
        // A loss blowing up mid-run is the one failure that is ours, not
        // the input's.
        let code = match e {
            NnError::NonFiniteLoss { .. } => 1,
            _ => 2,
        };
        AppError { message: e.to_string(), code }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(args) => ingest(&settings, args),
        Command::Params(args) => params(&settings, args),
        Command::Build(args) => build(&settings, args),
        Command::Train(args) => train_cmd(&settings, args),
        Command::Eval(args) => eval_cmd(&settings, args),
        Command::RenderCrp(args) => render(&settings, args),
    }
}

fn series_dir(s: &Settings) -> PathBuf {
    s.cache_dir.join("series")
}

fn pairs_dir(s: &Settings) -> PathBuf {
    s.cache_dir.join("pairs")
}

fn ingest(settings: &Settings, args: IngestArgs) -> Result<(), AppError> {
    let data_dir = args.data_dir.unwrap_or_else(|| settings.data_dir.clone());
    let channels = if args.channels.is_empty() {
        settings.channels.clone()
    } else {
        args.channels
    };
    let mut tickers = if args.tickers.is_empty() {
        settings.tickers.clone()
    } else {
        args.tickers
    };
    if tickers.is_empty() {
        tickers = discover_tickers(&data_dir)?;
    }
    if tickers.len() < 2 {
        return Err(AppError::usage(format!(
            "need at least two tickers to form pairs, found {} in {}",
            tickers.len(),
            data_dir.display()
        )));
    }
    tickers.sort();
    tickers.dedup();

    let mut series = Vec::with_capacity(tickers.len());
    std::fs::create_dir_all(series_dir(settings))?;
    for ticker in &tickers {
        let path = data_dir.join(format!("{ticker}.csv"));
        let ts = load_csv(&path, &channels).map_err(|e| AppError::in_file(&path, e))?;
        log::info!("{ticker}: {} days, {} channel(s)", ts.len(), ts.dim());
        write_series_cache(&series_dir(settings).join(format!("{ticker}.crps")), &ts)?;
        series.push(ts);
    }

    let dir = pairs_dir(settings);
    std::fs::create_dir_all(&dir)?;
    let mut pairs = 0usize;
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            let (a, b, report) = align_pair(&series[i], &series[j]).map_err(|e| {
                AppError::usage(format!("{}-{}: {e}", tickers[i], tickers[j]))
            })?;
            log::info!(
                "{}-{}: {} common days {}..{} (dropped {}/{})",
                a.ticker(),
                b.ticker(),
                report.common_length,
                report.common_start,
                report.common_end,
                report.dropped_left,
                report.dropped_right
            );
            write_pair_cache(&dir.join(format!("{}-{}.crpa", a.ticker(), b.ticker())), &a, &b)?;
            pairs += 1;
        }
    }
    println!(
        "cached {} series and {pairs} aligned pair(s) under {}",
        series.len(),
        settings.cache_dir.display()
    );
    Ok(())
}

fn discover_tickers(data_dir: &Path) -> Result<Vec<String>, AppError> {
    let mut tickers = Vec::new();
    let entries = std::fs::read_dir(data_dir)
        .map_err(|e| AppError::in_file(data_dir, format!("cannot list data directory: {e}")))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|x| x == "csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                tickers.push(stem.to_string());
            }
        }
    }
    if tickers.is_empty() {
        return Err(AppError::usage(format!(
            "no CSV files in {}",
            data_dir.display()
        )));
    }
    Ok(tickers)
}

fn params(settings: &Settings, args: ParamsArgs) -> Result<(), AppError> {
    let path = series_dir(settings).join(format!("{}.crps", args.ticker));
    if !path.exists() {
        return Err(AppError::usage(format!(
            "no cached series at {} (run `ingest` first)",
            path.display()
        )));
    }
    let ts = read_series_cache(&path)?;
    println!("{}: {} days", ts.ticker(), ts.len());
    for (channel, values) in ts.channels() {
        let delay = estimate_delay_ami(values, args.max_lag)
            .map_err(|e| AppError::usage(format!("{channel}: {e}")))?;
        println!("\nchannel {channel}");
        println!("  lag  mi (nats)");
        for (i, mi) in delay.curve.iter().enumerate() {
            println!("  {:>3}  {mi:.4}", i + 1);
        }
        if delay.minimum_found {
            println!("  tau = {} (first local minimum)", delay.tau);
        } else {
            println!("  tau = {} (no local minimum up to max lag)", delay.tau);
        }
        let dim = estimate_dimension_fnn(values, delay.tau, args.max_k)
            .map_err(|e| AppError::usage(format!("{channel}: {e}")))?;
        println!("    k  false neighbors (tau = {})", delay.tau);
        for (i, frac) in dim.fractions.iter().enumerate() {
            println!("  {:>3}  {:.2}%", i + 1, frac * 100.0);
        }
        if dim.converged {
            println!("  k = {} (first under 1%)", dim.k);
        } else {
            println!("  k = {} (never under 1%; raise --max-k)", dim.k);
        }
    }
    Ok(())
}

fn window_config(settings: &Settings, w: Option<usize>, epsilon: Option<f64>, k: Option<usize>, tau: Option<usize>) -> Result<WindowConfig, AppError> {
    let w = w.unwrap_or(settings.w);
    let epsilon = epsilon.unwrap_or(settings.epsilon);
    let k = k.unwrap_or(settings.k);
    let tau = tau.unwrap_or(settings.tau);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(AppError::usage(format!("epsilon must be positive, got {epsilon}")));
    }
    if k < 1 || tau < 1 {
        return Err(AppError::usage(format!("k and tau must be at least 1, got k={k} tau={tau}")));
    }
    let cfg = WindowConfig::new(w, EmbeddingParams::new(k, tau), epsilon);
    if cfg.window_side() < 2 {
        return Err(AppError::usage(format!(
            "w = {w} leaves a {}-row window after embedding with k={k}, tau={tau}",
            cfg.window_side()
        )));
    }
    Ok(cfg)
}

fn build(settings: &Settings, args: BuildArgs) -> Result<(), AppError> {
    let cfg = window_config(settings, args.w, args.epsilon, args.k, args.tau)?;
    let dir = pairs_dir(settings);
    let pair_files = files_with_extension(&dir, "crpa")?;
    if pair_files.is_empty() {
        return Err(AppError::usage(format!(
            "no pair caches in {} (run `ingest` first)",
            dir.display()
        )));
    }
    let out_dir = settings.cache_dir.join("datasets").join(cache_dir_name(&cfg));
    std::fs::create_dir_all(&out_dir)?;
    let mut total = 0usize;
    for path in &pair_files {
        let (a, b) = read_pair_cache(path)?;
        let examples =
            build_pair_examples(&a, &b, &cfg).map_err(|e| AppError::in_file(path, e))?;
        total += examples.len();
        let name = format!("{}-{}.crpd", a.ticker(), b.ticker());
        write_dataset_cache(&out_dir.join(name), &cfg, &examples)?;
    }
    println!(
        "built {} pair dataset(s), {total} examples ({}x{} inputs) in {}",
        pair_files.len(),
        cfg.window_side(),
        cfg.window_side(),
        out_dir.display()
    );
    Ok(())
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, AppError> {
    let mut files = Vec::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(files),
        Err(e) => return Err(AppError::in_file(dir, e)),
    };
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|x| x == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn default_dataset_dir(settings: &Settings) -> Result<PathBuf, AppError> {
    let cfg = window_config(settings, None, None, None, None)?;
    Ok(settings.cache_dir.join("datasets").join(cache_dir_name(&cfg)))
}

/// Reads every pair dataset in `dir`, splits each pair on its timeline, and
/// pools them. The returned config is the one shared by all files.
fn load_split_dataset(
    dir: &Path,
    settings: &Settings,
) -> Result<(WindowConfig, SplitDataset), AppError> {
    let files = files_with_extension(dir, "crpd")?;
    if files.is_empty() {
        return Err(AppError::usage(format!(
            "no datasets in {} (run `build` first)",
            dir.display()
        )));
    }
    let mut shared: Option<WindowConfig> = None;
    let mut parts = BTreeMap::new();
    for path in &files {
        let (cfg, examples) = read_dataset_cache(path)?;
        if examples.is_empty() {
            return Err(AppError::in_file(path, "dataset holds no examples"));
        }
        match shared {
            None => shared = Some(cfg),
            Some(expect) if expect != cfg => {
                return Err(AppError::in_file(
                    path,
                    "dataset was built with different parameters than its siblings",
                ));
            }
            _ => {}
        }
        let pair = examples[0].pair.as_ref().clone();
        let split = split_temporal(examples, settings.train_frac, settings.val_frac)
            .map_err(|e| AppError::in_file(path, e))?;
        parts.insert(pair, split);
    }
    Ok((shared.expect("at least one file was read"), pool_pairs(parts)?))
}

fn architecture(settings: &Settings) -> Architecture {
    Architecture {
        conv1_filters: settings.conv1_filters,
        conv1_kernel: settings.conv1_kernel,
        pool1: settings.pool1,
        conv2_filters: settings.conv2_filters,
        conv2_kernel: settings.conv2_kernel,
        pool2: settings.pool2,
    }
}

fn train_cmd(settings: &Settings, args: TrainArgs) -> Result<(), AppError> {
    let dir = match args.dataset {
        Some(dir) => dir,
        None => default_dataset_dir(settings)?,
    };
    let (_, data) = load_split_dataset(&dir, settings)?;
    let seed = args.seed.unwrap_or(settings.seed);
    let cfg = TrainConfig {
        arch: architecture(settings),
        epochs: args.epochs.unwrap_or(settings.epochs),
        batch_size: settings.batch_size,
        schedule: LrSchedule {
            base: settings.learning_rate,
            decay_factor: settings.lr_decay_factor,
            decay_period: settings.lr_decay_period,
        },
        adam: Default::default(),
        seed,
    };
    log::info!(
        "training on {} examples ({} validation), {} epochs, batch {}, seed {seed}",
        data.train.len(),
        data.validation.len(),
        cfg.epochs,
        cfg.batch_size
    );
    let (model, report) = train(&data, &cfg)?;
    let out = match args.out {
        Some(out) => out,
        None => {
            let models = settings.cache_dir.join("models");
            std::fs::create_dir_all(&models)?;
            let name = dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("dataset");
            models.join(format!("{name}_seed{seed}.crpm"))
        }
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_checkpoint(&out, &model)?;
    let last = report.history.last().expect("training ran at least one epoch");
    println!(
        "kept epoch {} of {} (validation F1 {:.3}, final train loss {:.6})",
        report.best_epoch,
        cfg.epochs,
        report.best_val_f1,
        last.train_loss
    );
    println!("checkpoint: {}", out.display());
    Ok(())
}

fn eval_cmd(settings: &Settings, args: EvalArgs) -> Result<(), AppError> {
    let dir = match args.dataset {
        Some(dir) => dir,
        None => default_dataset_dir(settings)?,
    };
    let (cfg, data) = load_split_dataset(&dir, settings)?;
    let model = read_checkpoint(&args.model)?;
    let probs = predict(&model, &data.test)?;
    let preds = classify(&probs);
    let targets: Vec<bool> = data.test.iter().map(|e| e.target).collect();
    let metrics = confusion(&preds, &targets)?;
    println!(
        "w={} epsilon={}: accuracy {:.3} precision {:.3} recall {:.3} F1 {:.3} (tp {} fp {} tn {} fn {})",
        cfg.w,
        cfg.epsilon,
        metrics.accuracy,
        metrics.precision,
        metrics.recall,
        metrics.f1,
        metrics.tp,
        metrics.fp,
        metrics.tn,
        metrics.fn_
    );

    let report_path = args
        .report
        .unwrap_or_else(|| settings.cache_dir.join("report.csv"));
    let sidecar = report_path.with_extension("full.csv");
    let mut grid = if sidecar.exists() {
        GridReport::from_csv_full(&std::fs::read_to_string(&sidecar)?)
            .map_err(|e| AppError::in_file(&sidecar, e))?
    } else {
        GridReport::new()
    };
    grid.insert(cfg.w, cfg.epsilon, metrics);
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&report_path, grid.to_csv())?;
    std::fs::write(&sidecar, grid.to_csv_full())?;
    println!("report: {}", report_path.display());
    Ok(())
}

fn render(settings: &Settings, args: RenderArgs) -> Result<(), AppError> {
    let Some((ta, tb)) = args.pair.split_once('-') else {
        return Err(AppError::usage(format!(
            "pair must be written TICKER-TICKER, got `{}`",
            args.pair
        )));
    };
    let path = pairs_dir(settings).join(format!("{ta}-{tb}.crpa"));
    if !path.exists() {
        return Err(AppError::usage(format!(
            "no pair cache at {} (run `ingest` first, tickers in lexicographic order)",
            path.display()
        )));
    }
    let (a, b) = read_pair_cache(&path)?;
    let cfg = window_config(settings, args.w, args.epsilon, args.k, args.tau)?;

    let (wa, wb) = if let Some(w) = args.w {
        let end = args.epoch.unwrap_or(a.len() - 1);
        if end + 1 < w || end >= a.len() {
            return Err(AppError::usage(format!(
                "window of {w} ending at epoch {end} does not fit series of length {}",
                a.len()
            )));
        }
        (a.slice(end + 1 - w..end + 1), b.slice(end + 1 - w..end + 1))
    } else {
        (a, b)
    };
    let (na, nb) = if args.raw {
        (wa, wb)
    } else {
        (
            zscore(&wa).map_err(|e| AppError::usage(format!("{ta}: {e}")))?,
            zscore(&wb).map_err(|e| AppError::usage(format!("{tb}: {e}")))?,
        )
    };
    let ea = embed(&na, cfg.embedding)?;
    let eb = embed(&nb, cfg.embedding)?;
    let plot = cross_recurrence_plot(&ea, &eb, cfg.epsilon)?;
    render_pgm(&plot, &args.out)?;
    println!(
        "wrote {}x{} plot to {}",
        plot.bits.rows(),
        plot.bits.cols(),
        args.out.display()
    );
    Ok(())
}
