//! Command-line front end: one pipeline stage per invocation, a run manifest
//! next to every output, and strict exit codes — 0 success, 1 validation
//! error, 2 runtime failure.

mod config;
mod svg;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypack::{
    adversarial_accuracy, apply_manifest_flags, confidence_rank, hack_train, knn_density,
    load_checkpoint, make_congealed_dataset, norm_density_profile, pack, read_idx,
    read_snapshot_csv, read_vectors_csv, save_checkpoint, select_subset, synth_clusters,
    synth_image_class, train_classifier, write_accuracy_csv, write_density_csv, write_idx,
    write_loss_csv, write_params_csv, write_profile_csv, write_selection_csv, write_snapshot_csv,
    write_vectors_csv, AccuracyRow, AssignmentDoc, BallParams, BallPoint, Classifier, Dataset,
    DatasetItem, DatasetManifest, JitterKind, Metric, MlpSpec, ParticlesDoc, SelectionMode,
    SelectionSpec, Shape, Snapshot,
};

use config::{manifest_for_dir, manifest_for_file, RunConfig, RunManifest};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, or input documents — exit 1.
    Validation(String),
    /// Failure while computing or writing — exit 2.
    Runtime(String),
}

pub(crate) fn val<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

pub(crate) fn rt<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "hypack",
    version,
    about = "Hyperbolic particle packing, assignment-driven training, and prototypicality analysis"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Pack particles uniformly into the Poincaré ball.
    Pack(PackArgs),
    /// Congeal an image dataset into its jointly aligned form.
    Congeal(CongealArgs),
    /// Synthesize a dataset directory (clusters, images, or a congealed mix).
    MakeDataset(MakeDatasetArgs),
    /// Train the encoder against a packed particle set.
    Train(TrainArgs),
    /// K-NN densities (and optional norm profile) of a feature snapshot.
    Density(DensityArgs),
    /// Rank instances by prototypicality (feature norm or model confidence).
    Rank(RankArgs),
    /// Select a subset of instances by feature norm.
    Select(SelectArgs),
    /// Compare classifiers trained on typical vs atypical subsets.
    EvalSelect(EvalSelectArgs),
    /// Compare FGSM robustness with and without pruning atypical instances.
    EvalRobust(EvalRobustArgs),
    /// Render a feature snapshot as an SVG scatter in the unit ball.
    Plot(PlotArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    let result = match cli.cmd {
        Cmd::Pack(a) => run_pack(a),
        Cmd::Congeal(a) => run_congeal(a),
        Cmd::MakeDataset(a) => run_make_dataset(a),
        Cmd::Train(a) => run_train(a),
        Cmd::Density(a) => run_density(a),
        Cmd::Rank(a) => run_rank(a),
        Cmd::Select(a) => run_select(a),
        Cmd::EvalSelect(a) => run_eval_select(a),
        Cmd::EvalRobust(a) => run_eval_robust(a),
        Cmd::Plot(a) => run_plot(a),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

// ---------------------------------------------------------------- helpers

fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Validation(format!(
            "dataset directory {} does not exist",
            dir.display()
        )));
    }
    let vectors = dir.join("vectors.csv");
    let images = dir.join("images.idx");
    let mut ds = if vectors.exists() {
        read_vectors_csv(&vectors).map_err(val)?
    } else if images.exists() {
        let labels = dir.join("labels.idx");
        let labels = labels.exists().then_some(labels);
        read_idx(&images, labels.as_deref()).map_err(val)?
    } else {
        return Err(CliError::Validation(format!(
            "{} holds neither vectors.csv nor images.idx",
            dir.display()
        )));
    };
    let manifest = dir.join("manifest.json");
    if manifest.exists() {
        let doc = DatasetManifest::load(&manifest).map_err(val)?;
        apply_manifest_flags(&mut ds, &doc).map_err(val)?;
    }
    Ok(ds)
}

/// Writes a dataset directory: payload (IDX images or a vectors CSV), the
/// dataset manifest, and nothing else. Returns the files written.
fn save_dataset(ds: &Dataset, dir: &Path, source: &str) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut outputs = Vec::new();
    match ds.shape() {
        Shape::Grid { .. } => {
            let images = dir.join("images.idx");
            let labeled = ds.items().iter().all(|it| it.label.is_some());
            let labels = labeled.then(|| dir.join("labels.idx"));
            write_idx(ds, &images, labels.as_deref()).map_err(rt)?;
            outputs.push(images);
            outputs.extend(labels);
        }
        Shape::Flat { .. } => {
            let vectors = dir.join("vectors.csv");
            write_vectors_csv(ds, &vectors).map_err(rt)?;
            outputs.push(vectors);
        }
    }
    let manifest = dir.join("manifest.json");
    DatasetManifest::describe(ds, source).save(&manifest).map_err(rt)?;
    outputs.push(manifest);
    Ok(outputs)
}

fn load_particles(path: &Path) -> Result<hypack::ParticleSet, CliError> {
    ParticlesDoc::load(path).map_err(val)?.into_particle_set().map_err(val)
}

fn load_features(path: &Path) -> Result<(Vec<BallPoint>, Vec<bool>), CliError> {
    read_snapshot_csv(path).map_err(val)
}

/// Class count implied by a fully labeled dataset.
fn class_count(ds: &Dataset, what: &str) -> Result<usize, CliError> {
    let mut max = None;
    for item in ds.items() {
        let label = item.label.ok_or_else(|| {
            CliError::Validation(format!("{what} instance {} has no label", item.id))
        })?;
        max = Some(max.map_or(label, |m: u8| m.max(label)));
    }
    Ok(max.map_or(0, |m| m as usize + 1))
}

fn parse_hidden(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad layer size {p:?}")))
        .collect()
}

fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad coordinate {p:?}")))
        .collect()
}

fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Euclidean,
    Hyperbolic,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Hyperbolic => Metric::Hyperbolic,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Typical,
    Atypical,
    AtypicalDiverse,
}

impl From<ModeArg> for SelectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Typical => SelectionMode::Typical,
            ModeArg::Atypical => SelectionMode::Atypical,
            ModeArg::AtypicalDiverse => SelectionMode::AtypicalDiverse,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum JitterArg {
    Uniform,
    Amplitude,
}

impl From<JitterArg> for JitterKind {
    fn from(j: JitterArg) -> Self {
        match j {
            JitterArg::Uniform => JitterKind::Uniform,
            JitterArg::Amplitude => JitterKind::Amplitude,
        }
    }
}

// ------------------------------------------------------------------- pack

#[derive(Args)]
struct PackArgs {
    /// Run-config JSON supplying defaults for unset flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Euclidean packing radius.
    #[arg(long)]
    r: Option<f64>,
    /// Repulsion exponent.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ball curvature.
    #[arg(long)]
    c: Option<f64>,
    /// Output particles JSON.
    #[arg(long)]
    out: PathBuf,
}

fn run_pack(args: PackArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args.config.as_ref())?;
    let mut spec = cfg.packing.clone().unwrap_or_default();
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(r) = args.r {
        spec.r = r;
    }
    if let Some(k) = args.k {
        spec.k = k;
    }
    if let Some(margin) = args.margin {
        spec.margin = margin;
    }
    if let Some(lr) = args.lr {
        spec.lr = lr;
    }
    if let Some(epochs) = args.epochs {
        spec.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate().map_err(val)?;
    let ball = BallParams::new(args.c.unwrap_or(1.0)).map_err(val)?;

    let outcome = pack(&spec, &ball).map_err(rt)?;
    let doc = ParticlesDoc::from_outcome(&outcome, &ball);
    doc.save(&args.out).map_err(rt)?;
    let seed = spec.seed;
    RunManifest::write(
        "pack",
        seed,
        serde_json::json!({ "packing": spec, "curvature": ball.c }),
        &[&args.out],
        &manifest_for_file(&args.out),
    )?;
    println!(
        "packed {} particles (r_n {:.6}, final loss {:.6e}, converged {}) -> {}",
        doc.spec.n,
        doc.r_n,
        doc.final_loss,
        outcome.converged,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- congeal

#[derive(Args)]
struct CongealArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset directory (image-shaped).
    #[arg(long)]
    dataset: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out_dir: PathBuf,
    /// Alignment sweeps over the whole set.
    #[arg(long)]
    iterations: Option<usize>,
}

fn run_congeal(args: CongealArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args.config.as_ref())?;
    let mut spec = cfg.congeal.clone().unwrap_or_default();
    if let Some(iterations) = args.iterations {
        spec.iterations = iterations;
    }
    spec.validate().map_err(val)?;
    let ds = load_dataset(&args.dataset)?;
    let images = ds.to_images().map_err(val)?;

    let outcome = hypack::congeal_set(&images, &spec).map_err(rt)?;
    let items = ds
        .items()
        .iter()
        .zip(outcome.images.iter())
        .map(|(item, img)| DatasetItem {
            id: item.id,
            vec: img.pixels().to_vec(),
            label: item.label,
            is_congealed: true,
        })
        .collect();
    let congealed = Dataset::new(items, ds.shape()).map_err(rt)?;
    let mut outputs = save_dataset(&congealed, &args.out_dir, "congeal")?;

    let params_path = args.out_dir.join("congeal_params.csv");
    write_params_csv(&outcome.params, &params_path).map_err(rt)?;
    outputs.push(params_path);
    let objective_path = args.out_dir.join("objective.csv");
    write_objective_csv(&outcome.objective_history, &objective_path)?;
    outputs.push(objective_path);

    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    RunManifest::write(
        "congeal",
        spec.seed,
        serde_json::json!({ "congeal": spec, "dataset": args.dataset }),
        &refs,
        &manifest_for_dir(&args.out_dir),
    )?;
    let first = outcome.objective_history.first().copied().unwrap_or(0.0);
    let last = outcome.objective_history.last().copied().unwrap_or(0.0);
    println!(
        "congealed {} images, objective {first:.4} -> {last:.4}, into {}",
        congealed.n(),
        args.out_dir.display()
    );
    Ok(())
}

fn write_objective_csv(history: &[f64], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(rt)?;
    w.write_record(["sweep", "objective"]).map_err(rt)?;
    for (sweep, obj) in history.iter().enumerate() {
        w.write_record([sweep.to_string(), format!("{obj:.17e}")]).map_err(rt)?;
    }
    w.flush().map_err(rt)?;
    Ok(())
}

// ----------------------------------------------------------- make-dataset

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    /// Gaussian blobs in flat space (vectors.csv).
    Clusters,
    /// One synthetic image class under affine jitter (images.idx).
    Images,
    /// Uniform-jitter images with m congealed replacements.
    CongealedMix,
}

#[derive(Args)]
struct MakeDatasetArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Instance count.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Cluster center "x,y,..." (repeatable; clusters kind).
    #[arg(long = "center", value_parser = parse_point)]
    centers: Vec<Vec<f64>>,
    /// Cluster standard deviation (repeatable, parallel to --center).
    #[arg(long = "sigma")]
    sigmas: Vec<f64>,
    /// Image class id (images / congealed-mix kinds).
    #[arg(long)]
    class: Option<usize>,
    #[arg(long, value_enum)]
    jitter: Option<JitterArg>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    /// Congealed replacement count (congealed-mix kind).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn run_make_dataset(args: MakeDatasetArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args.config.as_ref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let h = args.h.unwrap_or(12);
    let w = args.w.unwrap_or(12);
    let class = args.class.unwrap_or(0);

    let (ds, source) = match args.kind {
        KindArg::Clusters => {
            let centers = if args.centers.is_empty() {
                vec![vec![0.5, 0.5]]
            } else {
                args.centers.clone()
            };
            let sigmas = if args.sigmas.is_empty() { vec![0.12] } else { args.sigmas.clone() };
            let ds = synth_clusters(args.n, &centers, &sigmas, seed).map_err(val)?;
            (ds, format!("clusters n={} seed={seed}", args.n))
        }
        KindArg::Images => {
            let jitter: JitterKind = args.jitter.unwrap_or(JitterArg::Amplitude).into();
            let ds = synth_image_class(args.n, h, w, class, jitter, seed).map_err(val)?;
            (ds, format!("images class={class} n={} seed={seed}", args.n))
        }
        KindArg::CongealedMix => {
            let m = args.m.ok_or_else(|| {
                CliError::Validation("--m is required for --kind congealed-mix".into())
            })?;
            let jitter: JitterKind = args.jitter.unwrap_or(JitterArg::Uniform).into();
            let class_ds = synth_image_class(args.n, h, w, class, jitter, seed).map_err(val)?;
            let congeal_spec = cfg.congeal.clone().unwrap_or_default();
            congeal_spec.validate().map_err(val)?;
            let ds = make_congealed_dataset(&class_ds, m, &congeal_spec, seed.wrapping_add(1))
                .map_err(val)?;
            (ds, format!("congealed-mix class={class} n={} m={m} seed={seed}", args.n))
        }
    };

    let outputs = save_dataset(&ds, &args.out_dir, &source)?;
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    RunManifest::write(
        "make-dataset",
        seed,
        serde_json::json!({ "source": source, "n": ds.n(), "shape": ds.shape() }),
        &refs,
        &manifest_for_dir(&args.out_dir),
    )?;
    println!("wrote {} instances into {}", ds.n(), args.out_dir.display());
    Ok(())
}

// ------------------------------------------------------------------ train

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Packed particles JSON (count must equal the dataset size).
    #[arg(long)]
    particles: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    assign_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden layer sizes, comma separated (e.g. "32" or "48,16").
    #[arg(long, value_parser = parse_hidden)]
    hidden: Option<Vec<usize>>,
    /// Epoch to snapshot (repeatable).
    #[arg(long = "snapshot")]
    snapshots: Vec<usize>,
    #[arg(long)]
    r_clip: Option<f64>,
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args.config.as_ref())?;
    let mut tc = cfg.train.clone().unwrap_or_default();
    if let Some(seed) = cfg.seed {
        tc.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        tc.epochs = epochs;
    }
    if let Some(lr0) = args.lr0 {
        tc.lr0 = lr0;
    }
    if let Some(batch) = args.batch_size {
        tc.batch_size = batch;
    }
    if let Some(every) = args.assign_every {
        tc.assign_every = every;
    }
    if let Some(seed) = args.seed {
        tc.seed = seed;
    }
    if let Some(hidden) = args.hidden.clone() {
        tc.hidden = hidden;
    }
    if !args.snapshots.is_empty() {
        tc.snapshot_epochs = args.snapshots.clone();
    }
    if let Some(r_clip) = args.r_clip {
        tc.r_clip = r_clip;
    }
    tc.validate().map_err(val)?;
    let ds = load_dataset(&args.dataset)?;
    let particles = load_particles(&args.particles)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let outcome = hack_train(&ds, &particles, &tc).map_err(rt)?;

    let mut outputs = Vec::new();
    let checkpoint = args.out_dir.join("checkpoint.json");
    save_checkpoint(&outcome.params, &checkpoint).map_err(rt)?;
    outputs.push(checkpoint);

    let assignment = args.out_dir.join("assignment.json");
    AssignmentDoc::new(tc.epochs, &outcome.assignment).save(&assignment).map_err(rt)?;
    outputs.push(assignment);

    let loss = args.out_dir.join("loss.csv");
    write_loss_csv(&outcome.loss_history, &loss).map_err(rt)?;
    outputs.push(loss);

    if !outcome.snapshots.is_empty() {
        let snap_dir = args.out_dir.join("snapshots");
        std::fs::create_dir_all(&snap_dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", snap_dir.display())))?;
        for snapshot in &outcome.snapshots {
            let path = snap_dir.join(format!("epoch_{}.csv", snapshot.epoch));
            write_snapshot_csv(snapshot, &ds, &path).map_err(rt)?;
            outputs.push(path);
        }
    }

    let features = hypack::embed_all(&outcome.params, &ds, &particles, tc.r_clip).map_err(rt)?;
    let final_snapshot =
        Snapshot { epoch: tc.epochs, features, assignment: outcome.assignment.clone() };
    let features_path = args.out_dir.join("features.csv");
    write_snapshot_csv(&final_snapshot, &ds, &features_path).map_err(rt)?;
    outputs.push(features_path);

    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    RunManifest::write(
        "train",
        tc.seed,
        serde_json::json!({
            "train": tc,
            "dataset": args.dataset,
            "particles": args.particles,
        }),
        &refs,
        &manifest_for_dir(&args.out_dir),
    )?;
    println!(
        "trained {} epochs on {} instances, final loss {:.6} -> {}",
        tc.epochs,
        ds.n(),
        outcome.loss_history.last().copied().unwrap_or(f64::NAN),
        args.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- density

#[derive(Args)]
struct DensityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature snapshot CSV.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    /// Per-instance density CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional norm-profile CSV.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    portions: Option<usize>,
}

fn run_density(args: DensityArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args.config.as_ref())?;
    let mut spec = cfg.density.clone().unwrap_or_default();
    spec.d = 2;
    if let Some(k) = args.k {
        spec.k = k;
    }
    if let Some(metric) = args.metric {
        spec.metric = metric.into();
    }
    let (features, _) = load_features(&args.features)?;
    let coords: Vec<Vec<f64>> = features.iter().map(|p| p.coords().to_vec()).collect();
    let estimate = knn_density(&coords, &spec).map_err(val)?;
    let norms: Vec<f64> = features.iter().map(BallPoint::norm).collect();
    write_density_csv(&norms, &estimate, &args.out).map_err(rt)?;
    let mut outputs = vec![args.out.clone()];

    if let Some(profile_path) = &args.profile {
        let portions = args.portions.unwrap_or(50);
        let bins = norm_density_profile(&features, &spec, portions).map_err(rt)?;
        write_profile_csv(&bins, profile_path).map_err(rt)?;
        outputs.push(profile_path.clone());
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    RunManifest::write(
        "density",
        0,
        serde_json::json!({ "density": spec, "features": args.features }),
        &refs,
        &manifest_for_file(&args.out),
    )?;
    println!("densities for {} features -> {}", features.len(), args.out.display());
    Ok(())
}

// ------------------------------------------------------------------- rank

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankBy {
    /// Ascending feature norm (most typical first); needs --features.
    Norm,
    /// Descending model confidence; needs --checkpoint and --dataset.
    Confidence,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "norm")]
    by: RankBy,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn run_rank(args: RankArgs) -> Result<(), CliError> {
    let _ = RunConfig::resolve(args.config.as_ref())?;
    match args.by {
        RankBy::Norm => {
            let features_path = args.features.as_ref().ok_or_else(|| {
                CliError::Validation("--by norm needs --features".into())
            })?;
            let (features, _) = load_features(features_path)?;
            let mut ids: Vec<usize> = (0..features.len()).collect();
            let norms: Vec<f64> = features.iter().map(BallPoint::norm).collect();
            ids.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
            write_selection_csv(&features, &ids, &args.out).map_err(rt)?;
            RunManifest::write(
                "rank",
                0,
                serde_json::json!({ "by": "norm", "features": features_path }),
                &[&args.out],
                &manifest_for_file(&args.out),
            )?;
            println!("ranked {} features by norm -> {}", ids.len(), args.out.display());
        }
        RankBy::Confidence => {
            let checkpoint = args.checkpoint.as_ref().ok_or_else(|| {
                CliError::Validation("--by confidence needs --checkpoint".into())
            })?;
            let dataset_dir = args.dataset.as_ref().ok_or_else(|| {
                CliError::Validation("--by confidence needs --dataset".into())
            })?;
            let clf = Classifier::from_params(load_checkpoint(checkpoint).map_err(val)?);
            let ds = load_dataset(dataset_dir)?;
            let ranked = confidence_rank(&clf, &ds).map_err(rt)?;
            let mut w = csv::Writer::from_path(&args.out).map_err(rt)?;
            w.write_record(["id", "confidence", "rank"]).map_err(rt)?;
            for (pos, &id) in ranked.iter().enumerate() {
                let conf = clf.confidence(&ds.by_id(id).vec).map_err(rt)?;
                w.write_record([id.to_string(), format!("{conf:.17e}"), (pos + 1).to_string()])
                    .map_err(rt)?;
            }
            w.flush().map_err(rt)?;
            RunManifest::write(
                "rank",
                0,
                serde_json::json!({ "by": "confidence", "checkpoint": checkpoint, "dataset": dataset_dir }),
                &[&args.out],
                &manifest_for_file(&args.out),
            )?;
            println!("ranked {} instances by confidence -> {}", ranked.len(), args.out.display());
        }
    }
    Ok(())
}

// ----------------------------------------------------------------- select

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    angular_bins: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn resolve_selection(
    cfg: &RunConfig,
    fraction: Option<f64>,
    mode: Option<ModeArg>,
    angular_bins: Option<usize>,
) -> SelectionSpec {
    let mut spec = cfg.selection.clone().unwrap_or(SelectionSpec {
        fraction: 0.1,
        mode: SelectionMode::Typical,
        angular_bins: 8,
    });
    if let Some(f) = fraction {
        spec.fraction = f;
    }
    if let Some(m) = mode {
        spec.mode = m.into();
    }
    if let Some(b) = angular_bins {
        spec.angular_bins = b;
    }
    spec
}

fn run_select(args: SelectArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args.config.as_ref())?;
    let spec = resolve_selection(&cfg, args.fraction, args.mode, args.angular_bins);
    spec.validate().map_err(val)?;
    let (features, _) = load_features(&args.features)?;
    let selected = select_subset(&features, &spec).map_err(val)?;
    write_selection_csv(&features, &selected, &args.out).map_err(rt)?;
    RunManifest::write(
        "select",
        0,
        serde_json::json!({ "selection": spec, "features": args.features }),
        &[&args.out],
        &manifest_for_file(&args.out),
    )?;
    println!(
        "selected {} of {} features -> {}",
        selected.len(),
        features.len(),
        args.out.display()
    );
    Ok(())
}

// ----------------------------------------------------- eval-select/robust

#[derive(Args)]
struct EvalSelectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_dataset: PathBuf,
    #[arg(long)]
    test_dataset: PathBuf,
    /// Feature snapshot CSV aligned with the training dataset.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    angular_bins: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_parser = parse_hidden)]
    hidden: Option<Vec<usize>>,
    /// Classifier seeds averaged over (0..seeds).
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

struct EvalContext {
    train: Dataset,
    test: Dataset,
    features: Vec<BallPoint>,
    layers: Vec<usize>,
    epochs: usize,
    lr: f64,
    seeds: usize,
    epsilon: f64,
}

impl EvalContext {
    // Maps straight one-to-one from the eval subcommand flags.
    #[allow(clippy::too_many_arguments)]
    fn build(
        train_dir: &Path,
        test_dir: &Path,
        features_path: &Path,
        hidden: Vec<usize>,
        epochs: usize,
        lr: f64,
        seeds: usize,
        epsilon: f64,
    ) -> Result<Self, CliError> {
        let train = load_dataset(train_dir)?;
        let test = load_dataset(test_dir)?;
        let (features, _) = load_features(features_path)?;
        if features.len() != train.n() {
            return Err(CliError::Validation(format!(
                "{} features but the training set has {} instances",
                features.len(),
                train.n()
            )));
        }
        if seeds == 0 {
            return Err(CliError::Validation("--seeds must be at least 1".into()));
        }
        let classes = class_count(&train, "train")?.max(class_count(&test, "test")?);
        let mut layers = vec![train.dim()];
        layers.extend(hidden);
        layers.push(classes);
        Ok(Self { train, test, features, layers, epochs, lr, seeds, epsilon })
    }

    /// Mean (clean, adversarial) test accuracy over the configured seeds.
    fn mean_accuracy(&self, ids: &[usize]) -> Result<(f64, f64), CliError> {
        let mut clean = 0.0;
        let mut adv = 0.0;
        for seed in 0..self.seeds as u64 {
            let spec = MlpSpec::new(self.layers.clone(), seed).map_err(val)?;
            let (clf, _) =
                train_classifier(&self.train, ids, &spec, self.epochs, self.lr, seed)
                    .map_err(rt)?;
            clean += clf.accuracy(&self.test).map_err(rt)?;
            adv += adversarial_accuracy(&clf, &self.test, self.epsilon).map_err(rt)?;
        }
        let n = self.seeds as f64;
        Ok((clean / n, adv / n))
    }
}

fn run_eval_select(args: EvalSelectArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args.config.as_ref())?;
    let fraction = args.fraction.unwrap_or(0.1);
    let angular_bins = args.angular_bins.unwrap_or(8);
    let ctx = EvalContext::build(
        &args.train_dataset,
        &args.test_dataset,
        &args.features,
        args.hidden.clone().unwrap_or_else(|| vec![32]),
        args.epochs.unwrap_or(10),
        args.lr.unwrap_or(0.1),
        args.seeds.unwrap_or(3),
        args.epsilon.unwrap_or(0.07),
    )?;
    let _ = cfg;

    let mut rows = Vec::new();
    for (name, mode) in [
        ("typical", SelectionMode::Typical),
        ("atypical", SelectionMode::Atypical),
        ("atypical_diverse", SelectionMode::AtypicalDiverse),
    ] {
        let spec = SelectionSpec { fraction, mode, angular_bins };
        let ids = select_subset(&ctx.features, &spec).map_err(val)?;
        let (clean, adv) = ctx.mean_accuracy(&ids)?;
        println!("{name}: clean {clean:.4} adv {adv:.4} ({} instances)", ids.len());
        rows.push(AccuracyRow { setting: name.into(), clean_acc: clean, adv_acc: adv });
    }
    write_accuracy_csv(&rows, &args.out).map_err(rt)?;
    RunManifest::write(
        "eval-select",
        0,
        serde_json::json!({
            "fraction": fraction,
            "angular_bins": angular_bins,
            "epochs": ctx.epochs,
            "lr": ctx.lr,
            "seeds": ctx.seeds,
            "epsilon": ctx.epsilon,
            "layers": ctx.layers,
            "train_dataset": args.train_dataset,
            "test_dataset": args.test_dataset,
            "features": args.features,
        }),
        &[&args.out],
        &manifest_for_file(&args.out),
    )?;
    Ok(())
}

#[derive(Args)]
struct EvalRobustArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_dataset: PathBuf,
    #[arg(long)]
    test_dataset: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Fraction of most-atypical training instances to prune.
    #[arg(long)]
    prune_fraction: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_parser = parse_hidden)]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn run_eval_robust(args: EvalRobustArgs) -> Result<(), CliError> {
    let prune_fraction = args.prune_fraction.unwrap_or(0.01);
    let ctx = EvalContext::build(
        &args.train_dataset,
        &args.test_dataset,
        &args.features,
        args.hidden.clone().unwrap_or_else(|| vec![32]),
        args.epochs.unwrap_or(10),
        args.lr.unwrap_or(0.1),
        args.seeds.unwrap_or(3),
        args.epsilon.unwrap_or(0.07),
    )?;
    let _ = RunConfig::resolve(args.config.as_ref())?;

    let all_ids: Vec<usize> = (0..ctx.train.n()).collect();
    let spec = SelectionSpec {
        fraction: prune_fraction,
        mode: SelectionMode::Atypical,
        angular_bins: 1,
    };
    let pruned_away: HashSet<usize> =
        select_subset(&ctx.features, &spec).map_err(val)?.into_iter().collect();
    let kept: Vec<usize> =
        all_ids.iter().copied().filter(|id| !pruned_away.contains(id)).collect();
    if kept.is_empty() {
        return Err(CliError::Validation("pruning removed every training instance".into()));
    }

    let (full_clean, full_adv) = ctx.mean_accuracy(&all_ids)?;
    let (pruned_clean, pruned_adv) = ctx.mean_accuracy(&kept)?;
    println!("full:   clean {full_clean:.4} adv {full_adv:.4} ({} instances)", all_ids.len());
    println!("pruned: clean {pruned_clean:.4} adv {pruned_adv:.4} ({} instances)", kept.len());

    let rows = vec![
        AccuracyRow { setting: "full".into(), clean_acc: full_clean, adv_acc: full_adv },
        AccuracyRow { setting: "pruned".into(), clean_acc: pruned_clean, adv_acc: pruned_adv },
    ];
    write_accuracy_csv(&rows, &args.out).map_err(rt)?;
    RunManifest::write(
        "eval-robust",
        0,
        serde_json::json!({
            "prune_fraction": prune_fraction,
            "epochs": ctx.epochs,
            "lr": ctx.lr,
            "seeds": ctx.seeds,
            "epsilon": ctx.epsilon,
            "layers": ctx.layers,
            "train_dataset": args.train_dataset,
            "test_dataset": args.test_dataset,
            "features": args.features,
        }),
        &[&args.out],
        &manifest_for_file(&args.out),
    )?;
    Ok(())
}

// ------------------------------------------------------------------- plot

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    features: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Optional dashed guide circle at this Euclidean radius.
    #[arg(long)]
    guide_radius: Option<f64>,
}

fn run_plot(args: PlotArgs) -> Result<(), CliError> {
    if let Some(r) = args.guide_radius {
        if !(r > 0.0 && r < 1.0) {
            return Err(CliError::Validation(format!(
                "guide radius must lie in (0,1), got {r}"
            )));
        }
    }
    let (features, flags) = load_features(&args.features)?;
    let svg = svg::scatter_svg(&features, &flags, args.guide_radius, now_secs());
    std::fs::write(&args.out, svg)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", args.out.display())))?;
    RunManifest::write(
        "plot",
        0,
        serde_json::json!({ "features": args.features, "guide_radius": args.guide_radius }),
        &[&args.out],
        &manifest_for_file(&args.out),
    )?;
    println!("plotted {} features -> {}", features.len(), args.out.display());
    Ok(())
}
