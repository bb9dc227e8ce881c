mod manifest;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use geega::config::RunConfig;
use geega::features::{extract_features, FeatureSet};
use geega::losses::Pair;
use geega::signal_io::{ingest, synthesize, write_binary, Montage, RecordingFormat};
use geega::trainer::{
    conflict_log_csv, conflict_report, evaluate, heatmap_csv, loso, mean_fraction, parse_conflict_log, Checkpoint,
    TrainConfig,
};
use serde_json::json;

use manifest::RunManifest;

const ERROR_PREFIX: &str = "geega: error:";
const LOG_ENV: &str = "GEEGA_LOG";
pub const FEATURE_FILE: &str = "features.gfc";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const HEATMAP_FILE: &str = "conflict_heatmap.csv";

#[derive(Parser)]
#[command(name = "geega", version, about = "Two-domain EEG representation learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key=value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ablation {
    Git,
    Align,
    Topo,
    Spectro,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-class dataset in the binary recording format.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Filter, segment and featurize every recording of a directory.
    Featgen {
        /// Directory of `.geeg` or `.csv` recordings.
        #[arg(long)]
        input: PathBuf,
        /// Electrode layout file; defaults to the bundled one for the channel count.
        #[arg(long)]
        montage: Option<PathBuf>,
        /// Skip the notch filter.
        #[arg(long)]
        no_notch: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Leave-one-subject-out training on a feature cache.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Disable a component; repeatable.
        #[arg(long, value_enum)]
        ablate: Vec<Ablation>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on a feature cache.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rebuild conflict reports from a conflict log or a training output directory.
    Diagnose {
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Featgen { .. } => "featgen",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Diagnose { .. } => "diagnose",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Synth { common }
            | Command::Featgen { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Diagnose { common, .. } => common,
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

/// `full`, or the disabled components joined by `+`.
pub fn ablation_label(t: &TrainConfig) -> String {
    let off: Vec<&str> = [
        (t.use_topo, "no-topo"),
        (t.use_spectro, "no-spectro"),
        (t.use_git, "no-git"),
        (t.use_align, "no-align"),
    ]
    .iter()
    .filter(|(on, _)| !on)
    .map(|(_, n)| *n)
    .collect();
    if off.is_empty() {
        "full".into()
    } else {
        off.join("+")
    }
}

fn write_file(m: &mut RunManifest, path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    m.output(path)
}

fn cmd_synth(cfg: &RunConfig, out: &Path, m: &mut RunManifest) -> Result<()> {
    let recs = synthesize(&cfg.synth, cfg.train.seed)?;
    m.stage("synthesize");
    for r in &recs {
        let class = r.labels.binary(r.labels.values[0])?;
        let path = out.join(format!("{}_class{class}.geeg", r.subject_id));
        write_binary(r, &path)?;
        m.output(&path)?;
    }
    log::info!("wrote {} recordings to {}", recs.len(), out.display());
    m.stage("write");
    Ok(())
}

fn recording_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).with_context(|| format!("cannot read input directory {}", dir.display()))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e?.path();
        let ext = p.extension().and_then(|x| x.to_str()).unwrap_or("").to_ascii_lowercase();
        if p.is_file() && (ext == "geeg" || ext == "csv") {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no .geeg or .csv recordings in {}", dir.display());
    }
    Ok(files)
}

fn cmd_featgen(cfg: &RunConfig, input: &Path, montage: Option<&Path>, out: &Path, m: &mut RunManifest) -> Result<()> {
    let montage = match montage {
        Some(p) => {
            m.input(p)?;
            Some(Montage::load(p)?)
        }
        None => None,
    };
    let fc = cfg.feature_config();
    let mut all: Option<FeatureSet> = None;
    for path in recording_files(input)? {
        m.input(&path)?;
        let rec = ingest(&path, &RecordingFormat::from_path(&path))?;
        let set = extract_features(std::slice::from_ref(&rec), montage.as_ref(), &fc)
            .with_context(|| format!("featurizing {}", path.display()))?;
        log::info!("{}: {} segments", path.display(), set.len());
        match &mut all {
            None => all = Some(set),
            Some(a) => a.extend(set).with_context(|| format!("merging {}", path.display()))?,
        }
    }
    m.stage("extract");
    let set = all.expect("at least one recording");
    let path = out.join(FEATURE_FILE);
    set.write(&path)?;
    m.output(&path)?;
    log::info!("{} segments from {} subjects", set.len(), set.subject_ids().len());
    m.stage("write");
    Ok(())
}

fn train_config_for(cfg: &RunConfig, set: &FeatureSet, ablate: &[Ablation]) -> Result<TrainConfig> {
    let mut t = cfg.train.clone();
    t.model.topo_channels = set.n_bands();
    t.model.spectro_channels = set.n_channels();
    for a in ablate {
        match a {
            Ablation::Git => t.use_git = false,
            Ablation::Align => t.use_align = false,
            Ablation::Topo => t.use_topo = false,
            Ablation::Spectro => t.use_spectro = false,
        }
    }
    t.validate()?;
    Ok(t)
}

fn read_features(path: &Path, m: &mut RunManifest) -> Result<FeatureSet> {
    let set = FeatureSet::read(path).with_context(|| format!("cannot load feature cache {}", path.display()))?;
    m.input(path)?;
    Ok(set)
}

fn cmd_train(cfg: &RunConfig, features: &Path, ablate: &[Ablation], out: &Path, m: &mut RunManifest) -> Result<()> {
    let set = read_features(features, m)?;
    let t = train_config_for(cfg, &set, ablate)?;
    let label = ablation_label(&t);
    m.stage("load");
    let run = loso(&set, &t)?;
    m.stage("train");
    let mut metrics = String::new();
    for e in &run.epochs {
        let mut v = serde_json::to_value(e)?;
        v["record"] = json!("epoch");
        metrics.push_str(&serde_json::to_string(&v)?);
        metrics.push('\n');
    }
    let summary = json!({
        "record": "summary",
        "ablation": label,
        "seed": t.seed,
        "folds": run.folds,
        "accuracy": run.summary.accuracy,
        "f1": run.summary.f1,
        "accuracy_text": run.summary.accuracy.to_string(),
        "f1_text": run.summary.f1.to_string(),
    });
    metrics.push_str(&serde_json::to_string(&summary)?);
    metrics.push('\n');
    write_file(m, &out.join(METRICS_FILE), metrics.as_bytes())?;
    for (k, (log, ck)) in run.conflicts.iter().zip(&run.checkpoints).enumerate() {
        write_file(m, &out.join(format!("fold{k}_conflicts.csv")), conflict_log_csv(log).as_bytes())?;
        let path = out.join(format!("fold{k}.ckpt"));
        ck.write(&path)?;
        m.output(&path)?;
    }
    let all = run.all_conflicts();
    if !all.is_empty() {
        write_file(m, &out.join(HEATMAP_FILE), heatmap_csv(&conflict_report(&all)?).as_bytes())?;
    }
    m.stage("write");
    println!(
        "{label}: accuracy {} f1 {} over {} folds",
        run.summary.accuracy, run.summary.f1, run.summary.folds
    );
    Ok(())
}

fn cmd_eval(checkpoint: &Path, features: &Path, out: &Path, m: &mut RunManifest) -> Result<()> {
    let ck = Checkpoint::read(checkpoint).with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    m.input(checkpoint)?;
    let mut set = read_features(features, m)?;
    if set.band_names != ck.band_names || set.n_channels() != ck.model.spectro_channels {
        bail!(
            "feature cache {} ({} bands, {} channels) does not match checkpoint {} ({} bands, {} channels)",
            features.display(),
            set.n_bands(),
            set.n_channels(),
            checkpoint.display(),
            ck.band_names.len(),
            ck.model.spectro_channels
        );
    }
    if let Some(s) = &ck.standardizer {
        s.apply(&mut set);
    }
    let (model, params) = ck.build()?;
    let ev = evaluate(&model, &params, &set, true)?;
    m.stage("evaluate");
    let report = json!({
        "segments": set.len(),
        "accuracy": ev.scores.accuracy,
        "f1": ev.scores.f1,
        "loss": ev.loss,
    });
    write_file(m, &out.join("eval.json"), (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    println!("accuracy {:.2} f1 {:.2} on {} segments", ev.scores.accuracy, ev.scores.f1, set.len());
    Ok(())
}

fn conflict_logs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).with_context(|| format!("cannot read conflict log {}", path.display()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_conflicts.csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no *_conflicts.csv files in {}", path.display());
    }
    Ok(files)
}

fn cmd_diagnose(log: &Path, out: &Path, m: &mut RunManifest) -> Result<()> {
    let mut records = Vec::new();
    for f in conflict_logs(log)? {
        m.input(&f)?;
        let text = fs::read_to_string(&f).with_context(|| format!("cannot read {}", f.display()))?;
        records.extend(parse_conflict_log(&text).with_context(|| format!("in {}", f.display()))?);
    }
    let report = conflict_report(&records).with_context(|| format!("nothing to report from {}", log.display()))?;
    write_file(m, &out.join(HEATMAP_FILE), heatmap_csv(&report).as_bytes())?;
    let last = report.iter().map(|c| c.epoch).max().unwrap_or(0) + 1;
    for pair in [Pair::GcnTopo, Pair::GcnSpectro] {
        let first = mean_fraction(&report, pair, 0..5.min(last));
        let tail = mean_fraction(&report, pair, last.saturating_sub(5)..last);
        if let (Some(a), Some(b)) = (first, tail) {
            println!("{pair}: conflict fraction first 5 epochs {a:.3}, last 5 epochs {b:.3}");
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let common = cli.command.common();
    let cfg = load_config(common)?;
    let out = &common.out;
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    let mut flags = Vec::new();
    let mut cfg = cfg;
    match &cli.command {
        Command::Featgen { no_notch: true, .. } => {
            cfg.filter.notch_hz = None;
            flags.push("--no-notch".to_string());
        }
        Command::Train { ablate, .. } => flags.extend(ablate.iter().map(|a| format!("--ablate={a:?}").to_lowercase())),
        _ => {}
    }
    let snapshot = cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let mut m = RunManifest::new(cli.command.name(), cfg.train.seed, flags, snapshot);
    m.write(out)?;
    let outcome = match &cli.command {
        Command::Synth { .. } => cmd_synth(&cfg, out, &mut m),
        Command::Featgen { input, montage, .. } => cmd_featgen(&cfg, input, montage.as_deref(), out, &mut m),
        Command::Train { features, ablate, .. } => cmd_train(&cfg, features, ablate, out, &mut m),
        Command::Eval { checkpoint, features, .. } => cmd_eval(checkpoint, features, out, &mut m),
        Command::Diagnose { log, .. } => cmd_diagnose(log, out, &mut m),
    };
    m.finish(out, &outcome)?;
    outcome
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{ERROR_PREFIX} {e:#}");
            ExitCode::FAILURE
        }
    }
}
