//! `fscrop`: crop planning, feature import, benchmark sweeps, inference-time
//! fusion, latent analysis and synthetic data generation.
//!
//! Every subcommand reads an optional JSON config (`--config`); flags given
//! on the command line override it. Exit codes: 0 ok, 1 invalid input,
//! 2 missing data, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fewshot_crop::cropgeom::ContextFraction;
use fewshot_crop::datamodel::{
    read_crop_manifest, read_feature_records, write_crop_manifest, BoxSource, DatasetManifest,
    FeatureStore,
};
use fewshot_crop::episodes::Setting;
use fewshot_crop::par::Parallelism;
use fewshot_crop::plan::{count_crops, plan_crops, Method, ModeChoice, PlanRequest};
use fewshot_crop::runner::{fuse_eval, run_analysis, run_benchmark, EngineConfig, RunReport};
use fewshot_crop::synth::SynthDataset;
use fewshot_crop::{Error, Result};

#[derive(Parser)]
#[command(name = "fscrop", version, about = "Few-shot evaluation with object-centric crops")]
struct Cli {
    /// JSON configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run episodes on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the crop manifest an extractor must embed.
    PlanCrops(PlanArgs),
    /// Merge extractor output (NDJSON or FSCACHE1) into one cache.
    ImportFeatures(ImportArgs),
    /// Crop-augmentation benchmark sweep.
    Run(RunArgs),
    /// Baseline versus confidence-thresholded multi-crop inference.
    Fuse(FuseArgs),
    /// Variance curve and PCA scatter over context fractions.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic manifest and feature cache.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Data {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
}

impl Data {
    fn load(&self) -> Result<(DatasetManifest, FeatureStore)> {
        Ok((
            DatasetManifest::load(need(&self.manifest)?)?,
            FeatureStore::read(need(&self.features)?)?,
        ))
    }
}

/// `path` if it exists, else a missing-data error naming it.
fn need(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        )
        .into())
    }
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Box sources to plan support crops for.
    #[arg(long, value_delimiter = ',', default_value = "gt")]
    sources: Vec<BoxSource>,
    /// Augmentation modes (`default`, `replace`, `minimal`, `padN`, `ctxN`, `multiple`).
    #[arg(long, value_delimiter = ',', default_value = "default")]
    modes: Vec<ModeChoice>,
    /// Also plan inference crops on this source's boxes.
    #[arg(long)]
    fusion_source: Option<BoxSource>,
    /// Also plan the ground-truth analysis grid.
    #[arg(long)]
    analysis: bool,
    /// Skip images lacking a requested box instead of failing.
    #[arg(long)]
    skip_missing: bool,
}

#[derive(Args)]
struct ImportArgs {
    /// `.fscache` files or NDJSON lines of `{image_id, crop, vector}`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Fail unless every key of this crop manifest is present.
    #[arg(long)]
    require: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: Data,
    /// Per-run CSV; `.summary.csv` and `.meta.json` sidecars are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    #[arg(long)]
    setting: Option<Setting>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ways: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Support plus query size for transductive episodes.
    #[arg(long)]
    pool: Option<usize>,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    data: Data,
    #[arg(long)]
    out: PathBuf,
    /// Per-test-image audit CSV.
    #[arg(long)]
    audit: PathBuf,
    /// Confidence threshold below which crops are consulted.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<ContextFraction>>,
    #[arg(long)]
    train_method: Option<Method>,
    #[arg(long)]
    source: Option<BoxSource>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_support: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: Data,
    /// Columns `lambda,variance,centroid_distance`.
    #[arg(long)]
    curve: PathBuf,
    /// Columns `x,y,class,cropped_flag`.
    #[arg(long)]
    scatter: PathBuf,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<ContextFraction>>,
    #[arg(long)]
    samples_per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for `manifest.json`, `features.fscache` and `crops.ndjson`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Embed this crop manifest instead of the standard one.
    #[arg(long)]
    crops: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    images_per_class: Option<usize>,
    #[arg(long)]
    bg_spread: Option<f64>,
    #[arg(long)]
    ctx_scale: Option<f64>,
    #[arg(long)]
    ctx_overlap: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn write_report(report: &RunReport, out: &Path) -> Result<()> {
    report.write_csv(out)?;
    report.write_summary_csv(sidecar(out, ".summary.csv"))?;
    report.write_metadata(sidecar(out, ".meta.json"))
}

fn parallelism(sequential: bool) -> Parallelism {
    if sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    }
}

fn plan(args: PlanArgs) -> Result<()> {
    let manifest = DatasetManifest::load(need(&args.manifest)?)?;
    let analysis_grid = if args.analysis {
        EngineConfig::default().analysis.grid
    } else {
        Vec::new()
    };
    let req = PlanRequest {
        sources: args.sources,
        modes: args.modes,
        fusion: args
            .fusion_source
            .map(|s| (s, fewshot_crop::fusion::FusionConfig::default().crop_ladder)),
        analysis_grid,
        skip_missing: args.skip_missing,
    };
    let requests = plan_crops(&manifest, &req)?;
    write_crop_manifest(&args.out, &requests)?;
    log::info!(
        "{} requests ({} crops) for {} images",
        requests.len(),
        count_crops(&requests),
        manifest.images.len()
    );
    Ok(())
}

fn import(args: ImportArgs) -> Result<()> {
    let mut merged: Option<FeatureStore> = None;
    for path in &args.inputs {
        let store = if path.extension().is_some_and(|e| e == "fscache") {
            FeatureStore::read(need(path)?)?
        } else {
            let records = read_feature_records(need(path)?)?;
            let dim = match (&merged, records.first()) {
                (Some(m), _) => m.dim(),
                (None, Some(r)) => r.vector.len(),
                (None, None) => continue,
            };
            let mut store = FeatureStore::new(dim)?;
            for r in records {
                let key = r.key();
                store.insert(key, r.vector)?;
            }
            store
        };
        match merged.as_mut() {
            Some(m) => m.merge(store)?,
            None => merged = Some(store),
        }
    }
    let store = merged.ok_or_else(|| Error::validation("no feature vectors in the inputs"))?;
    if let Some(req) = &args.require {
        let wanted: Vec<_> = read_crop_manifest(need(req)?)?.iter().map(|r| r.key()).collect();
        let missing = store.missing(&wanted);
        if !missing.is_empty() {
            return Err(Error::MissingFeatures(missing));
        }
    }
    store.write(&args.out)?;
    log::info!("wrote {} vectors of dimension {}", store.len(), store.dim());
    Ok(())
}

fn run(args: RunArgs, mut cfg: EngineConfig, par: Parallelism) -> Result<()> {
    let b = &mut cfg.benchmark;
    set(&mut b.methods, args.methods);
    set(&mut b.sweep, args.sweep);
    set(&mut b.setting, args.setting);
    set(&mut b.runs, args.runs);
    set(&mut b.seed, args.seed);
    set(&mut b.ways, args.ways);
    set(&mut b.n_test, args.n_test);
    set(&mut b.pool, args.pool);
    b.parallelism = par;
    let (manifest, store) = args.data.load()?;
    let report = run_benchmark(&manifest, &store, b)?;
    write_report(&report, &args.out)
}

fn fuse(args: FuseArgs, mut cfg: EngineConfig, par: Parallelism) -> Result<()> {
    let f = &mut cfg.fusion;
    set(&mut f.fusion.threshold, args.tau);
    set(&mut f.fusion.crop_ladder, args.ladder);
    set(&mut f.train_method, args.train_method);
    set(&mut f.source, args.source);
    set(&mut f.runs, args.runs);
    set(&mut f.seed, args.seed);
    set(&mut f.n_support, args.n_support);
    f.parallelism = par;
    let (manifest, store) = args.data.load()?;
    let out = fuse_eval(&manifest, &store, f)?;
    write_report(&out.report, &args.out)?;
    out.write_audit_csv(&args.audit)
}

fn analyze(args: AnalyzeArgs, mut cfg: EngineConfig) -> Result<()> {
    let a = &mut cfg.analysis;
    set(&mut a.grid, args.grid);
    set(&mut a.samples_per_class, args.samples_per_class);
    set(&mut a.seed, args.seed);
    let (manifest, store) = args.data.load()?;
    let out = run_analysis(&manifest, &store, a)?;
    out.write_curve_csv(&args.curve)?;
    out.write_scatter_csv(&args.scatter)?;
    std::fs::write(
        sidecar(&args.curve, ".meta.json"),
        serde_json::to_string_pretty(&out.metadata)? + "\n",
    )?;
    Ok(())
}

fn synth(args: SynthArgs, mut cfg: EngineConfig) -> Result<()> {
    let s = &mut cfg.synth;
    set(&mut s.seed, args.seed);
    set(&mut s.classes, args.classes);
    set(&mut s.dim, args.dim);
    set(&mut s.images_per_class, args.images_per_class);
    set(&mut s.bg_spread, args.bg_spread);
    set(&mut s.ctx_scale, args.ctx_scale);
    set(&mut s.ctx_overlap, args.ctx_overlap);
    let ds = SynthDataset::new(*s)?;
    let requests = match &args.crops {
        Some(p) => read_crop_manifest(need(p)?)?,
        None => ds.standard_requests()?,
    };
    let store = ds.fill_store(&requests)?;
    std::fs::create_dir_all(&args.out_dir)?;
    ds.manifest.save(args.out_dir.join("manifest.json"))?;
    store.write(args.out_dir.join("features.fscache"))?;
    write_crop_manifest(args.out_dir.join("crops.ndjson"), &requests)?;
    log::info!("{} images, {} vectors", ds.manifest.images.len(), store.len());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => EngineConfig::load(need(p)?)?,
        None => EngineConfig::default(),
    };
    let par = parallelism(cli.sequential);
    match cli.command {
        Command::PlanCrops(a) => plan(a),
        Command::ImportFeatures(a) => import(a),
        Command::Run(a) => run(a, cfg, par),
        Command::Fuse(a) => fuse(a, cfg, par),
        Command::Analyze(a) => analyze(a, cfg),
        Command::Synth(a) => synth(a, cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
