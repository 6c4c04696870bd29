use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use rwt_core::annotation::{aggregate_manifest, dataset_stats, split_dataset, write_stats, AggregationConfig};
use rwt_core::datamodel::{read_manifest, read_votes, write_manifest, DatasetManifest, Split};
use rwt_core::evaluation::{best_f1_threshold, compute_report, render_table};
use rwt_core::model::{ModelConfig, ModelVariant, OverlayModel};
use rwt_core::scoremap::{CharacterLayout, ProviderConfig, ProviderMode, ScoreMapDir, ScoreMapProvider};
use rwt_core::selection::{select_candidates, GateConfig};
use rwt_core::synthcorpus::{generate_corpus, SyntheticSpec};
use rwt_core::training::{class_counts, evaluate, load_examples, train, write_history_csv, TrainConfig};
use rwt_core::vetting::ReviewStore;
use rwt_vetting::AppState;

use crate::settings::{dir_of, flags, prepare_run_dir, resolve, some, Failure, RunResult};
use crate::{Cli, Command, Global};

pub const CHECKPOINT_FILE: &str = "model.rwt";

pub fn dispatch(cli: Cli) -> RunResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Select(a) => select(g, a),
        Command::Aggregate(a) => aggregate(g, a),
        Command::Stats(a) => stats(g, a),
        Command::Synth(a) => synth(g, a),
        Command::Train(a) => train_cmd(g, a),
        Command::Eval(a) => eval(g, a),
        Command::Serve(a) => serve(g, a),
        Command::Scoremaps(a) => scoremaps(g, a),
    }
}

fn required_out(g: &Global) -> RunResult<Value> {
    g.out
        .as_ref()
        .map(|p| json!(p))
        .ok_or_else(|| Failure::Usage("the following required argument was not provided: --out <PATH>".into()))
}

/// Directory holding `manifest`; the default root for images and maps.
fn manifest_dir(manifest: &Path) -> PathBuf {
    dir_of(manifest)
}

fn load_manifest(path: &Path) -> anyhow::Result<DatasetManifest> {
    read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))
}

// select ---------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Score-map directory; defaults to `maps/` beside the manifest.
    #[arg(long)]
    maps: Option<PathBuf>,
    #[arg(long)]
    region_threshold: Option<f64>,
    #[arg(long)]
    gate_cutoff: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SelectSettings {
    manifest: PathBuf,
    maps: Option<PathBuf>,
    out: PathBuf,
    #[serde(flatten)]
    gate: GateConfig,
}

fn select(g: &Global, a: &SelectArgs) -> RunResult<()> {
    let over = flags(&[
        ("manifest", some(&Some(&a.manifest))),
        ("maps", some(&a.maps)),
        ("out", Some(required_out(g)?)),
        ("region_threshold", some(&a.region_threshold)),
        ("gate_cutoff", some(&a.gate_cutoff)),
    ]);
    let (s, echoed): (SelectSettings, _) = resolve(g.config.as_deref(), over)?;
    prepare_run_dir(&dir_of(&s.out), "select", &echoed, g.verbose)?;
    let manifest = load_manifest(&s.manifest)?;
    let maps = ScoreMapDir::new(s.maps.clone().unwrap_or_else(|| manifest_dir(&s.manifest).join("maps")));
    let kept = select_candidates(&manifest, &maps, &s.gate)?;
    write_manifest(&s.out, &kept)?;
    println!("selected {} of {} images -> {}", kept.len(), manifest.len(), s.out.display());
    Ok(())
}

// aggregate ------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    votes: PathBuf,
    #[arg(long)]
    time_percentile_cut: Option<f64>,
    #[arg(long)]
    min_votes: Option<usize>,
    #[arg(long)]
    split_ratio: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct AggregateSettings {
    manifest: PathBuf,
    votes: PathBuf,
    out: PathBuf,
    #[serde(flatten)]
    aggregation: AggregationConfig,
}

fn aggregate(g: &Global, a: &AggregateArgs) -> RunResult<()> {
    let over = flags(&[
        ("manifest", some(&Some(&a.manifest))),
        ("votes", some(&Some(&a.votes))),
        ("out", Some(required_out(g)?)),
        ("time_percentile_cut", some(&a.time_percentile_cut)),
        ("min_votes", some(&a.min_votes)),
        ("split_ratio", some(&a.split_ratio)),
        ("split_seed", some(&g.seed)),
    ]);
    let (s, echoed): (AggregateSettings, _) = resolve(g.config.as_deref(), over)?;
    prepare_run_dir(&dir_of(&s.out), "aggregate", &echoed, g.verbose)?;
    s.aggregation.validate()?;
    let manifest = load_manifest(&s.manifest)?;
    let votes = read_votes(&s.votes).with_context(|| format!("reading votes {}", s.votes.display()))?;
    let (labelled, summary) = aggregate_manifest(&manifest, &votes, &s.aggregation)?;
    let split = split_dataset(&labelled, &s.aggregation)?;
    write_manifest(&s.out, &split)?;
    log::info!("{summary:?}");
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

// stats ----------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Raw votes, for the agreement breakdown and labels-per-image histogram.
    #[arg(long)]
    votes: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct StatsSettings {
    manifest: PathBuf,
    votes: Option<PathBuf>,
    out: PathBuf,
}

fn stats(g: &Global, a: &StatsArgs) -> RunResult<()> {
    let over = flags(&[
        ("manifest", some(&Some(&a.manifest))),
        ("votes", some(&a.votes)),
        ("out", Some(required_out(g)?)),
    ]);
    let (s, echoed): (StatsSettings, _) = resolve(g.config.as_deref(), over)?;
    prepare_run_dir(&s.out, "stats", &echoed, g.verbose)?;
    let manifest = load_manifest(&s.manifest)?;
    let votes = match &s.votes {
        Some(p) => read_votes(p).with_context(|| format!("reading votes {}", p.display()))?,
        None => Vec::new(),
    };
    let st = dataset_stats(&manifest, &votes);
    for p in write_stats(&st, &s.out)? {
        log::info!("wrote {}", p.display());
    }
    print!("{}", st.render());
    Ok(())
}

// synth ----------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus spec (JSON); same role as `--config`.
    #[arg(long, conflicts_with = "config", value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Number of images.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    image_side: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct SynthSettings {
    n: usize,
    out: PathBuf,
    #[serde(flatten)]
    spec: SyntheticSpec,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            n: 500,
            out: PathBuf::new(),
            spec: SyntheticSpec::default(),
        }
    }
}

fn synth(g: &Global, a: &SynthArgs) -> RunResult<()> {
    let over = flags(&[
        ("n", some(&a.n)),
        ("out", Some(required_out(g)?)),
        ("image_side", some(&a.image_side)),
        ("seed", some(&g.seed)),
    ]);
    let file = a.spec.as_deref().or(g.config.as_deref());
    let (s, echoed): (SynthSettings, _) = resolve(file, over)?;
    prepare_run_dir(&s.out, "synth", &echoed, g.verbose)?;
    let manifest = generate_corpus(&s.spec, s.n, &s.out)?;
    println!("wrote {} images to {}", manifest.len(), s.out.display());
    Ok(())
}

// train ----------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// craft-masked, unmasked-resnet or binarized-linear.
    #[arg(long)]
    variant: Option<ModelVariant>,
    /// Image root; defaults to the manifest's directory.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Score-map directory; defaults to `maps/` under the image root.
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Network input side; sets both the model and the preprocessing.
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    head_width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainSettings {
    manifest: PathBuf,
    images: Option<PathBuf>,
    maps: Option<PathBuf>,
    out: PathBuf,
    model: ModelConfig,
    train: TrainConfig,
}

fn roots(manifest: &Path, images: &Option<PathBuf>, maps: &Option<PathBuf>) -> (PathBuf, ScoreMapDir) {
    let root = images.clone().unwrap_or_else(|| manifest_dir(manifest));
    let maps = maps.clone().unwrap_or_else(|| root.join("maps"));
    (root, ScoreMapDir::new(maps))
}

fn train_cmd(g: &Global, a: &TrainArgs) -> RunResult<()> {
    let model = flags(&[
        ("variant", some(&a.variant)),
        ("image_side", some(&a.side)),
        ("head_width", some(&a.head_width)),
        ("seed", some(&g.seed)),
    ]);
    let trainer = flags(&[
        ("target_side", some(&a.side)),
        ("max_epochs", some(&a.epochs)),
        ("lr0", some(&a.lr)),
        ("batch_size", some(&a.batch_size)),
        ("seed", some(&g.seed)),
    ]);
    let over = flags(&[
        ("manifest", some(&Some(&a.manifest))),
        ("images", some(&a.images)),
        ("maps", some(&a.maps)),
        ("out", Some(required_out(g)?)),
        ("model", Some(model)),
        ("train", Some(trainer)),
    ]);
    let (mut s, _): (TrainSettings, _) = resolve(g.config.as_deref(), over)?;
    // The model input and the preprocessing canvas must agree, and the
    // trainer seeds the model.
    s.train.target_side = s.model.image_side;
    s.model.seed = s.train.seed;
    let echoed = serde_json::to_value(&s)?;
    prepare_run_dir(&s.out, "train", &echoed, g.verbose)?;

    let manifest = load_manifest(&s.manifest)?;
    let (root, maps) = roots(&s.manifest, &s.images, &s.maps);
    let side = s.model.image_side;
    let train_set = load_examples(&manifest, &root, &maps, Some(Split::Train), side)?;
    let val_set = load_examples(&manifest, &root, &maps, Some(Split::Val), side)?;
    let (tp, tn) = class_counts(&train_set);
    let (vp, vn) = class_counts(&val_set);
    log::info!("train {tp}+/{tn}-, val {vp}+/{vn}-");

    let (model, state) = train(&train_set, &val_set, &s.model, &s.train)?;
    model.save(&s.out.join(CHECKPOINT_FILE))?;
    write_history_csv(&s.out.join("history.csv"), &state)?;
    let state_path = s.out.join("train_state.json");
    std::fs::write(&state_path, serde_json::to_string_pretty(&state)?)
        .with_context(|| format!("writing {}", state_path.display()))?;
    let best = state.best_epoch.and_then(|e| state.history.iter().find(|r| r.epoch == e));
    println!(
        "{}: {} epochs, best val loss {:.4} at epoch {}, val F1 there {:.3}",
        s.model.variant,
        state.history.len(),
        state.best_val_loss,
        best.map_or(0, |r| r.epoch),
        best.and_then(|r| r.val_f1).unwrap_or(f64::NAN),
    );
    Ok(())
}

// eval -----------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file or the directory written by `train`.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Restrict to one split (train or val); all labelled records otherwise.
    #[arg(long, value_parser = parse_split)]
    split: Option<Split>,
    #[arg(long)]
    threshold: Option<f64>,
}

fn parse_split(s: &str) -> Result<Split, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("expected train or val, got {s:?}"))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct EvalSettings {
    ckpt: PathBuf,
    manifest: PathBuf,
    images: Option<PathBuf>,
    maps: Option<PathBuf>,
    out: PathBuf,
    split: Option<Split>,
    threshold: f64,
    batch_size: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            ckpt: PathBuf::new(),
            manifest: PathBuf::new(),
            images: None,
            maps: None,
            out: PathBuf::new(),
            split: None,
            threshold: 0.5,
            batch_size: 32,
        }
    }
}

fn eval(g: &Global, a: &EvalArgs) -> RunResult<()> {
    let over = flags(&[
        ("ckpt", some(&Some(&a.ckpt))),
        ("manifest", some(&Some(&a.manifest))),
        ("images", some(&a.images)),
        ("maps", some(&a.maps)),
        ("out", Some(required_out(g)?)),
        ("split", some(&a.split)),
        ("threshold", some(&a.threshold)),
    ]);
    let (s, echoed): (EvalSettings, _) = resolve(g.config.as_deref(), over)?;
    prepare_run_dir(&dir_of(&s.out), "eval", &echoed, g.verbose)?;
    let ckpt = if s.ckpt.is_dir() { s.ckpt.join(CHECKPOINT_FILE) } else { s.ckpt.clone() };
    let model = OverlayModel::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let manifest = load_manifest(&s.manifest)?;
    let (root, maps) = roots(&s.manifest, &s.images, &s.maps);
    let examples = load_examples(&manifest, &root, &maps, s.split, model.config().image_side)?;
    let (loss, probs) = evaluate(&model, &examples, s.batch_size)?;
    let labels: Vec<bool> = examples.iter().map(|e| e.is_positive()).collect();
    let report = compute_report(&probs, &labels, s.threshold)?;
    let (best_t, best_f1) = best_f1_threshold(&probs, &labels)?;
    let variant = model.variant();
    let doc = json!({
        "variant": variant,
        "checkpoint": ckpt,
        "split": s.split,
        "n": examples.len(),
        "positives": labels.iter().filter(|&&y| y).count(),
        "loss": loss,
        "metrics": report,
        "best_f1_threshold": { "threshold": best_t, "f1": best_f1 },
        "conventions": "precision, recall and F1 are 0 when their denominator is 0",
    });
    std::fs::write(&s.out, serde_json::to_string_pretty(&doc)? + "\n")
        .with_context(|| format!("writing {}", s.out.display()))?;
    print!("{}", render_table(&[(variant.as_str(), &report)]));
    println!("best F1 {best_f1:.3} at threshold {best_t:.4}");
    Ok(())
}

// serve ----------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Raw votes shown beside each example.
    #[arg(long)]
    votes: Option<PathBuf>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct ServeSettings {
    manifest: PathBuf,
    images: Option<PathBuf>,
    maps: Option<PathBuf>,
    votes: Option<PathBuf>,
    /// Holds the audit log and the reviewed manifest.
    out: Option<PathBuf>,
    host: String,
    port: u16,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            images: None,
            maps: None,
            votes: None,
            out: None,
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

fn serve(g: &Global, a: &ServeArgs) -> RunResult<()> {
    let over = flags(&[
        ("manifest", some(&Some(&a.manifest))),
        ("images", some(&a.images)),
        ("maps", some(&a.maps)),
        ("votes", some(&a.votes)),
        ("out", some(&g.out)),
        ("host", some(&a.host)),
        ("port", some(&a.port)),
    ]);
    let (s, echoed): (ServeSettings, _) = resolve(g.config.as_deref(), over)?;
    let out = s.out.clone().unwrap_or_else(|| manifest_dir(&s.manifest).join("review"));
    prepare_run_dir(&out, "serve", &echoed, g.verbose)?;
    let addr: SocketAddr = format!("{}:{}", s.host, s.port)
        .parse()
        .map_err(|e| Failure::Usage(format!("bad listen address: {e}")))?;

    let manifest = load_manifest(&s.manifest)?;
    let (root, maps) = roots(&s.manifest, &s.images, &s.maps);
    let store = ReviewStore::open(manifest, out.join("audit.jsonl"), Some(out.join("reviewed.jsonl")))?;
    let mut state = AppState::new(store, root);
    if maps.root().is_dir() {
        state = state.with_maps(maps);
    }
    if let Some(p) = &s.votes {
        state = state.with_votes(read_votes(p).with_context(|| format!("reading votes {}", p.display()))?);
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(rwt_vetting::serve(addr, state))?;
    Ok(())
}

// scoremaps ------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ScoremapsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    /// Character layouts for the oracle; defaults to `layouts/` under the image root.
    #[arg(long)]
    layouts: Option<PathBuf>,
    /// synthetic_oracle or pretrained_backbone.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ProviderMode>,
    /// Backbone weights for pretrained_backbone.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    oracle_sigma_px: Option<f64>,
}

fn parse_mode(s: &str) -> Result<ProviderMode, String> {
    serde_json::from_value(json!(s.replace('-', "_")))
        .map_err(|_| format!("expected synthetic_oracle or pretrained_backbone, got {s:?}"))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct ScoremapsSettings {
    manifest: PathBuf,
    images: Option<PathBuf>,
    layouts: Option<PathBuf>,
    out: PathBuf,
    mode: ProviderMode,
    weights_path: Option<PathBuf>,
    oracle_sigma_px: f64,
}

impl Default for ScoremapsSettings {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            images: None,
            layouts: None,
            out: PathBuf::new(),
            mode: ProviderMode::SyntheticOracle,
            weights_path: None,
            oracle_sigma_px: ProviderConfig::DEFAULT_ORACLE_SIGMA_PX,
        }
    }
}

fn scoremaps(g: &Global, a: &ScoremapsArgs) -> RunResult<()> {
    let over = flags(&[
        ("manifest", some(&Some(&a.manifest))),
        ("images", some(&a.images)),
        ("layouts", some(&a.layouts)),
        ("out", Some(required_out(g)?)),
        ("mode", some(&a.mode)),
        ("weights_path", some(&a.weights)),
        ("oracle_sigma_px", some(&a.oracle_sigma_px)),
    ]);
    let (s, echoed): (ScoremapsSettings, _) = resolve(g.config.as_deref(), over)?;
    prepare_run_dir(&s.out, "scoremaps", &echoed, g.verbose)?;
    let provider = ScoreMapProvider::new(&ProviderConfig {
        mode: s.mode,
        weights_path: s.weights_path.clone(),
        oracle_sigma_px: s.oracle_sigma_px,
    })?;
    let manifest = load_manifest(&s.manifest)?;
    let root = s.images.clone().unwrap_or_else(|| manifest_dir(&s.manifest));
    let layouts = s.layouts.clone().unwrap_or_else(|| root.join("layouts"));
    let cache = ScoreMapDir::new(&s.out);
    for rec in manifest.iter() {
        let image = rwt_core::datamodel::ImageTensor::load(&root.join(&rec.image_path))?;
        let layout: Option<CharacterLayout> = match s.mode {
            ProviderMode::SyntheticOracle => {
                let p = layouts.join(format!("{}.json", rec.image_id));
                let text = std::fs::read(&p).with_context(|| format!("reading layout {}", p.display()))?;
                Some(serde_json::from_slice(&text).with_context(|| format!("parsing layout {}", p.display()))?)
            }
            ProviderMode::PretrainedBackbone => None,
        };
        let map = provider.compute(&image, layout.as_ref())?;
        cache.store(&rec.image_id, &map)?;
    }
    println!("wrote {} score maps to {}", manifest.len(), s.out.display());
    Ok(())
}
