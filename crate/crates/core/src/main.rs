use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;

use hhi::channel::PropagationConfig;
use hhi::dataio::{
    export_feature_csv, import_feature_csv, read_predictions, read_trial, write_atomic, write_predictions, write_trial,
    Manifest, ManifestEntry, TRIAL_EXTENSION,
};
use hhi::domain::InteractionLabel;
use hhi::features::{robust_transform, FeatureFrame, RobustScalerParams, SplitSpec, DEFAULT_FOLDS, DEFAULT_SEQ_LEN};
use hhi::model::{find_weight_files, train_kfold, ArchConfig, ModelWeights, TrainConfig};
use hhi::pipeline::{classify_frame, preprocess, raw_features};
use hhi::postprocess::{metrics, Confusion, PredictionTrace};
use hhi::svg::{timeline_csv, timeline_svg};
use hhi::synth::{synth_dataset, DatasetSpec, PacketTiming, ProfileSet};

const SCALER_FILE: &str = "scaler.json";
const SPLIT_FILE: &str = "split.json";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "hhi", version, about = "Wi-Fi CSI human-to-human interaction recognition")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "HHI_JOBS", default_value_t = 0)]
    jobs: usize,

    /// Log filter for standard error (error, warn, info, debug, trace).
    #[arg(long, global = true, env = "HHI_LOG", default_value = "info")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset of trial files and a manifest.
    Simulate(SimulateArgs),
    /// Extract scaled per-packet features, a scaler and a train/val/test split.
    Preprocess(PreprocessArgs),
    /// Train one model per fold and write weight bundles and histories.
    Train(TrainArgs),
    /// Predict per-packet labels for a trial file or a directory of trials.
    Classify(ClassifyArgs),
    /// Compute metrics and the confusion matrix of labeled predictions.
    Evaluate(EvaluateArgs),
    /// Emit per-trial timeline plots (SVG) and their data (CSV).
    Report(ReportArgs),
    /// Write template profile, architecture and training config files.
    Init(InitArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Profile file; the built-in profiles are used when omitted.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pairs: usize,
    #[arg(long, default_value_t = 10)]
    trials_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of classes (default: every profile).
    #[arg(long, value_delimiter = ',')]
    classes: Vec<InteractionLabel>,
    /// Mean packet rate in Hz.
    #[arg(long, default_value_t = 28.0)]
    packet_rate: f64,
    /// Relative inter-arrival jitter in [0, 1).
    #[arg(long, default_value_t = 0.1)]
    jitter: f64,
    /// Relative per-pair perturbation of the class envelopes.
    #[arg(long, default_value_t = 0.05)]
    pair_variation: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEQ_LEN)]
    target_len: usize,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    /// Split seed (default: the manifest's seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Output directory of `preprocess`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    arch: PathBuf,
    #[arg(long = "train-cfg")]
    train_cfg: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Directory holding `*.weights` bundles; every bundle found is used.
    #[arg(long)]
    weights: PathBuf,
    /// A trial file, a scaled feature CSV, or a directory of either.
    #[arg(long)]
    input: PathBuf,
    /// Only classify the test trials of this split file.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Ensembled,
    Smoothed,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Which prediction column to score.
    #[arg(long, value_enum, default_value = "smoothed")]
    stage: Stage,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Full,
}

#[derive(Args)]
struct InitArgs {
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<hhi::Error> for Failure {
    fn from(e: hhi::Error) -> Self {
        let code = match e.root() {
            hhi::Error::Config(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| hhi::Error::from(e).at(dir).into())
}

fn write_text(path: &Path, text: &str) -> CliResult {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_text(path, &s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| hhi::Error::from(e).at(path))?;
    serde_json::from_str(&text).map_err(|e| Failure::from(hhi::Error::format(e.to_string()).at(path)))
}

/// Files of `dir` with one of the extensions, in name order.
fn files_with_ext(dir: &Path, exts: &[&str]) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| hhi::Error::from(e).at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|x| x.to_str()).is_some_and(|x| exts.contains(&x)))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn simulate(a: SimulateArgs) -> CliResult {
    let set = match &a.profiles {
        Some(p) if !p.is_file() => return Err(Failure::usage(format!("profile file not found: {}", p.display()))),
        Some(p) => ProfileSet::load(p).map_err(|e| Failure { code: 2, message: e.to_string() })?,
        None => ProfileSet::builtin(),
    };
    let set = if a.classes.is_empty() { set } else { set.select(&a.classes)? };
    let config = PropagationConfig::default();
    let spec = DatasetSpec {
        pairs: a.pairs,
        trials_per_class: a.trials_per_class,
        pair_variation: a.pair_variation,
        timing: PacketTiming { packet_rate: a.packet_rate, jitter: a.jitter },
        seed: a.seed,
    };
    let trials = synth_dataset(&set, &config, &spec).map_err(|e| Failure::usage(e.to_string()))?;
    let trial_dir = a.out.join("trials");
    create_dir(&trial_dir)?;
    let entries = trials
        .par_iter()
        .map(|t| {
            let rel = format!("trials/{}.{TRIAL_EXTENSION}", t.trial_id);
            write_trial(t, &a.out.join(&rel))?;
            Ok(ManifestEntry {
                path: rel,
                pair: t.pair_id.clone(),
                trial: t.trial_id.clone(),
                class: t.class().expect("synthetic trials are labeled"),
                length: t.len(),
            })
        })
        .collect::<hhi::Result<Vec<_>>>()?;
    let manifest = Manifest::new(a.seed, set.hash(), a.packet_rate, config.dims, entries);
    manifest.save(&a.out.join(MANIFEST_FILE))?;
    info!("wrote {} trials and {}", trials.len(), a.out.join(MANIFEST_FILE).display());
    Ok(())
}

fn preprocess_cmd(a: PreprocessArgs) -> CliResult {
    let manifest = Manifest::load(&a.manifest)?;
    let results: Vec<_> = manifest
        .entries
        .par_iter()
        .map(|e| read_trial(&manifest.entry_path(e)))
        .collect();
    let mut trials = Vec::with_capacity(results.len());
    let mut bad = Vec::new();
    for (e, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(t) => trials.push(t),
            Err(err) => bad.push(format!("  {}: {err}", e.path)),
        }
    }
    if !bad.is_empty() {
        return Err(Failure { code: 1, message: format!("unreadable trials:\n{}", bad.join("\n")) });
    }
    let p = preprocess(&trials, a.target_len, a.folds, a.seed.unwrap_or(manifest.seed))?;
    create_dir(&a.out)?;
    p.frames
        .par_iter()
        .map(|(id, frame)| export_feature_csv(frame, Some(manifest.dims), &a.out.join(format!("{id}.csv"))))
        .collect::<hhi::Result<()>>()?;
    write_json(&a.out.join(SCALER_FILE), &p.scaler)?;
    write_json(&a.out.join(SPLIT_FILE), &p.split)?;
    info!(
        "wrote {} feature files ({} train, {} val, {} test)",
        p.frames.len(),
        p.split.train.len(),
        p.split.val.len(),
        p.split.test.len()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let arch = ArchConfig::load(&a.arch).map_err(|e| Failure::usage(e.to_string()))?;
    let cfg = TrainConfig::load(&a.train_cfg).map_err(|e| Failure::usage(e.to_string()))?;
    let split: SplitSpec = read_json(&a.features.join(SPLIT_FILE))?;
    let scaler: RobustScalerParams = read_json(&a.features.join(SCALER_FILE))?;
    let frames: BTreeMap<String, FeatureFrame> = split
        .fit_ids()
        .into_par_iter()
        .map(|id| {
            let path = a.features.join(format!("{id}.csv"));
            import_feature_csv(&path).map(|f| (id, f))
        })
        .collect::<hhi::Result<_>>()?;
    if let Some((id, f)) = frames.iter().find(|(_, f)| f.rows != arch.seq_len || f.cols != arch.feature_dim) {
        return Err(Failure::usage(format!(
            "trial {id} has {}x{} features, architecture expects {}x{}",
            f.rows, f.cols, arch.seq_len, arch.feature_dim
        )));
    }
    create_dir(&a.out)?;
    let folds = train_kfold(&frames, &split, &arch, &cfg)?;
    for f in &folds {
        let weights = ModelWeights::from_model(&f.model, f.fold as u32, Some(scaler.clone()));
        weights.save(&a.out.join(format!("fold_{}.weights", f.fold)))?;
        write_text(&a.out.join(format!("fold_{}_history.csv", f.fold)), &f.history.to_csv())?;
        if let Some(best) = f.history.best() {
            info!("fold {}: best epoch {} val accuracy {:.4}", f.fold, best.epoch, best.val_accuracy);
        }
    }
    Ok(())
}

fn classify_cmd(a: ClassifyArgs) -> CliResult {
    let files = if a.weights.is_dir() { find_weight_files(&a.weights)? } else { Vec::new() };
    if files.is_empty() {
        return Err(Failure::usage(format!("no trained models found in {}", a.weights.display())));
    }
    let bundles = files.iter().map(|p| ModelWeights::load(p)).collect::<hhi::Result<Vec<_>>>()?;
    let arch = bundles[0].arch.clone();
    if let Some(b) = bundles.iter().find(|b| b.arch != arch) {
        return Err(Failure::usage(format!("bundle for fold {} has a different architecture", b.fold)));
    }
    let scaler = bundles[0].scaler.clone();
    let models = bundles.iter().map(ModelWeights::to_model).collect::<hhi::Result<Vec<_>>>()?;
    info!("loaded {} models", models.len());

    let mut inputs = if a.input.is_dir() {
        files_with_ext(&a.input, &[TRIAL_EXTENSION, "csv"])?
    } else if a.input.is_file() {
        vec![a.input.clone()]
    } else {
        return Err(Failure::usage(format!("input not found: {}", a.input.display())));
    };
    if let Some(split) = &a.split {
        let split: SplitSpec = read_json(split)?;
        inputs.retain(|p| split.test.contains(&stem(p)));
    }
    if inputs.is_empty() {
        return Err(Failure::usage("no trials to classify"));
    }
    create_dir(&a.out)?;
    let traces = inputs
        .par_iter()
        .map(|path| {
            let (id, frame) = if path.extension().is_some_and(|x| x == TRIAL_EXTENSION) {
                let trial = read_trial(path)?;
                let raw = raw_features(&trial, arch.seq_len).map_err(|e| e.at(path))?;
                let frame = match &scaler {
                    Some(s) => robust_transform(&raw, s)?,
                    None => raw,
                };
                (trial.trial_id, frame)
            } else {
                (stem(path), import_feature_csv(path)?)
            };
            let trace = classify_frame(&models, &frame).map_err(|e| e.at(path))?;
            Ok((id, trace))
        })
        .collect::<hhi::Result<Vec<(String, PredictionTrace)>>>()?;
    for (id, trace) in &traces {
        write_predictions(trace, &a.out.join(format!("{id}.csv")))?;
    }
    info!("wrote {} prediction files", traces.len());
    Ok(())
}

fn load_traces(dir: &Path) -> CliResult<Vec<(PathBuf, PredictionTrace)>> {
    let files = files_with_ext(dir, &["csv"])?;
    if files.is_empty() {
        return Err(Failure::usage(format!("no prediction files in {}", dir.display())));
    }
    files
        .into_iter()
        .map(|p| read_predictions(&p).map(|t| (p, t)).map_err(Failure::from))
        .collect()
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let traces = load_traces(&a.predictions)?;
    let mut conf = Confusion::default();
    for (path, t) in &traces {
        let truth = t
            .truth
            .as_ref()
            .ok_or_else(|| Failure::usage(format!("{}: predictions have no true labels", path.display())))?;
        let pred = match a.stage {
            Stage::Ensembled => &t.ensembled,
            Stage::Smoothed => &t.smoothed,
        };
        conf.add(truth, pred)?;
    }
    let report = metrics(&conf);
    create_dir(&a.out)?;
    write_text(&a.out.join("metrics.csv"), &report.to_csv())?;
    write_text(&a.out.join("confusion.csv"), &conf.to_csv())?;
    if a.json {
        println!("{}", report.to_json());
    } else {
        println!("trials     {}\n{report}", traces.len());
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> CliResult {
    let traces = load_traces(&a.predictions)?;
    create_dir(&a.out)?;
    for (path, t) in &traces {
        let id = stem(path);
        write_text(&a.out.join(format!("{id}.svg")), &timeline_svg(t, &id)?)?;
        write_text(&a.out.join(format!("{id}.csv")), &timeline_csv(t)?)?;
    }
    info!("wrote {} timelines", traces.len());
    Ok(())
}

fn init_cmd(a: InitArgs) -> CliResult {
    let (arch, cfg) = match a.scale {
        Scale::Desk => (ArchConfig::desk(), TrainConfig::desk()),
        Scale::Full => (ArchConfig::full_scale(), TrainConfig::default()),
    };
    create_dir(&a.out)?;
    write_text(&a.out.join("profiles.toml"), &ProfileSet::builtin().to_toml())?;
    write_text(&a.out.join("arch.toml"), &arch.to_toml())?;
    write_text(&a.out.join("train.toml"), &cfg.to_toml())?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        warn!("thread pool already initialized: {e}");
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Init(a) => init_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
