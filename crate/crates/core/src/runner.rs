//! Experiment drivers: crop-augmentation benchmark sweeps, inference-time
//! fusion, and latent-space analysis over a manifest and feature store.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, PcaBasis, VarianceCurve};
use crate::cropgeom::{interpolate_context, ContextFraction};
use crate::datamodel::{BoxSource, DatasetManifest, FeatureKey, FeatureStore, ImageRecord};
use crate::episodes::{sample_episode, Episode, EpisodeConfig, Setting};
use crate::error::{Error, Result};
use crate::fusion::{fused_predict, FusionConfig};
use crate::par::{try_map_indexed, Parallelism};
use crate::plan::{crop_key, ladder_keys, training_keys, Method};
use crate::probe::{normalize, train_head, LinearHead, TrainConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats;
use crate::synth::SynthConfig;
use crate::transduction::{run_soft_kmeans, SoftKMeansConfig};

pub const REPORT_HEADER: [&str; 6] = ["dataset", "setting", "method", "n_labeled", "seed", "accuracy"];
pub const AUDIT_HEADER: [&str; 5] = ["image_id", "full_confidence", "provenance", "label", "correct"];

fn default_sweep() -> Vec<usize> {
    vec![5, 10, 15, 20, 25]
}

fn default_methods() -> Vec<Method> {
    vec![Method::baseline(), "gt-default".parse().expect("valid method")]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub ways: usize,
    pub n_test: usize,
    /// Support plus query size in the transductive setting.
    pub pool: usize,
    /// Support sizes to evaluate.
    pub sweep: Vec<usize>,
    pub setting: Setting,
    pub methods: Vec<Method>,
    pub runs: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub kmeans: SoftKMeansConfig,
    pub parallelism: Parallelism,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            ways: 5,
            n_test: 100,
            pool: 50,
            sweep: default_sweep(),
            setting: Setting::Inductive,
            methods: default_methods(),
            runs: 100,
            seed: 0,
            train: TrainConfig::default(),
            kmeans: SoftKMeansConfig::default(),
            parallelism: Parallelism::Parallel,
        }
    }
}

impl BenchmarkConfig {
    pub fn episode_config(&self, n_support: usize, run: usize) -> EpisodeConfig {
        let seed = derive_seed(self.seed, run as u64);
        match self.setting {
            Setting::Inductive => EpisodeConfig {
                ways: self.ways,
                n_support,
                n_query: 0,
                n_test: self.n_test,
                seed,
                setting: Setting::Inductive,
            },
            Setting::Transductive => {
                EpisodeConfig::transductive(self.ways, n_support, self.pool, self.n_test, seed)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::validation("runs must be positive"));
        }
        if self.sweep.is_empty() || self.methods.is_empty() {
            return Err(Error::validation("sweep and methods must be non-empty"));
        }
        for &n in &self.sweep {
            self.episode_config(n, 0).validate()?;
        }
        self.train.validate()?;
        self.kmeans.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionEvalConfig {
    pub ways: usize,
    pub n_support: usize,
    pub n_test: usize,
    pub runs: usize,
    pub seed: u64,
    /// How the head is trained before inference-time fusion.
    pub train_method: Method,
    /// Box source for the inference crops.
    pub source: BoxSource,
    pub fusion: FusionConfig,
    pub train: TrainConfig,
    pub parallelism: Parallelism,
}

impl Default for FusionEvalConfig {
    fn default() -> Self {
        FusionEvalConfig {
            ways: 5,
            n_support: 5,
            n_test: 100,
            runs: 1000,
            seed: 0,
            train_method: "salient-default".parse().expect("valid method"),
            source: BoxSource::Salient,
            fusion: FusionConfig::default(),
            train: TrainConfig::default(),
            parallelism: Parallelism::Parallel,
        }
    }
}

impl FusionEvalConfig {
    pub fn episode_config(&self, run: usize) -> EpisodeConfig {
        EpisodeConfig {
            ways: self.ways,
            n_support: self.n_support,
            n_query: 0,
            n_test: self.n_test,
            seed: derive_seed(self.seed, run as u64),
            setting: Setting::Inductive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::validation("runs must be positive"));
        }
        self.episode_config(0).validate()?;
        self.fusion.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub grid: Vec<ContextFraction>,
    pub samples_per_class: usize,
    /// Context fraction of the projected cropped samples.
    pub scatter_lambda: ContextFraction,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            grid: (0..=10)
                .map(|k| ContextFraction::new(k as f64 / 10.0).expect("grid in range"))
                .collect(),
            samples_per_class: 100,
            scatter_lambda: ContextFraction::new(0.0).expect("in range"),
            seed: 0,
        }
    }
}

/// All tunables, as read from a JSON configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub benchmark: BenchmarkConfig,
    pub fusion: FusionEvalConfig,
    pub analysis: AnalysisConfig,
    pub synth: SynthConfig,
}

impl EngineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub dataset: String,
    pub setting: String,
    pub method: String,
    pub n_labeled: usize,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub setting: String,
    pub method: String,
    pub n_labeled: usize,
    pub runs: usize,
    pub mean: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub image_id: String,
    pub full_confidence: f64,
    pub provenance: String,
    pub label: String,
    pub correct: bool,
}

/// Per-run accuracies plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<RunRow>,
    pub metadata: serde_json::Value,
}

impl RunReport {
    /// Mean and 95% half-width per (method, n_labeled), in first-seen order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut order: Vec<(String, String, String, usize)> = Vec::new();
        let mut groups: HashMap<(String, String, String, usize), Vec<f64>> = HashMap::new();
        for r in &self.rows {
            let key = (r.dataset.clone(), r.setting.clone(), r.method.clone(), r.n_labeled);
            groups
                .entry(key.clone())
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(r.accuracy);
        }
        order
            .into_iter()
            .map(|key| {
                let acc = &groups[&key];
                SummaryRow {
                    dataset: key.0,
                    setting: key.1,
                    method: key.2,
                    n_labeled: key.3,
                    runs: acc.len(),
                    mean: stats::mean(acc),
                    ci95: stats::ci95_half_width(acc),
                }
            })
            .collect()
    }

    /// Accuracies of one method at one support size, in run order.
    pub fn accuracies(&self, method: &str, n_labeled: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.n_labeled == n_labeled)
            .map(|r| r.accuracy)
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in self.summary() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_metadata(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.metadata)? + "\n")?;
        Ok(())
    }
}

/// Id lookup over a manifest.
pub struct ImageIndex<'a> {
    by_id: HashMap<&'a str, &'a ImageRecord>,
}

impl<'a> ImageIndex<'a> {
    pub fn new(manifest: &'a DatasetManifest) -> Self {
        ImageIndex {
            by_id: manifest.images.iter().map(|r| (r.id.as_str(), r)).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Result<&'a ImageRecord> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::validation(format!("image {id:?} not in manifest")))
    }
}

fn features(store: &FeatureStore, key: &FeatureKey, normalized: bool) -> Result<Vec<f64>> {
    let v = store.get_f64(key)?;
    if normalized {
        normalize(&v)
    } else {
        Ok(v)
    }
}

/// Training set of an episode's support under `method`.
fn support_set(
    index: &ImageIndex,
    store: &FeatureStore,
    episode: &Episode,
    method: &Method,
    normalized: bool,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for item in &episode.support {
        for key in training_keys(index.get(&item.image_id)?, method)? {
            feats.push(features(store, &key, normalized)?);
            labels.push(item.label);
        }
    }
    Ok((feats, labels))
}

/// Result of evaluating one method on one episode.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub accuracy: f64,
    /// Fraction of correct pseudolabels in the transductive setting.
    pub pseudolabel_accuracy: Option<f64>,
    pub head: LinearHead,
}

/// Trains a head for `method` on the episode (with pseudolabeled query in
/// the transductive setting) and scores it on the full test images.
pub fn evaluate_episode(
    index: &ImageIndex,
    store: &FeatureStore,
    episode: &Episode,
    method: &Method,
    train: &TrainConfig,
    kmeans: &SoftKMeansConfig,
) -> Result<EpisodeOutcome> {
    let norm = train.normalize_features;
    let (mut feats, mut labels) = support_set(index, store, episode, method, norm)?;
    let mut pseudolabel_accuracy = None;
    if !episode.query.is_empty() {
        let query: Vec<Vec<f64>> = episode
            .query
            .iter()
            .map(|q| features(store, &FeatureKey::full(&q.image_id), norm))
            .collect::<Result<_>>()?;
        let res = run_soft_kmeans(episode.ways(), &feats, &labels, &query, kmeans)?;
        let correct = res
            .pseudolabels
            .iter()
            .zip(&episode.query)
            .filter(|(p, q)| **p == q.label)
            .count();
        pseudolabel_accuracy = Some(correct as f64 / query.len() as f64);
        feats.extend(query);
        labels.extend(res.pseudolabels);
    }
    let head = train_head(episode.ways(), &feats, &labels, None, train)?;
    let mut correct = 0;
    for t in &episode.test {
        let x = store.get_f64(&FeatureKey::full(&t.image_id))?;
        if head.predict(&x)?.0 == t.label {
            correct += 1;
        }
    }
    Ok(EpisodeOutcome {
        accuracy: correct as f64 / episode.test.len() as f64,
        pseudolabel_accuracy,
        head,
    })
}

fn episode_keys(index: &ImageIndex, episode: &Episode, methods: &[Method]) -> Result<Vec<FeatureKey>> {
    let mut keys = Vec::new();
    for m in methods {
        for s in &episode.support {
            keys.extend(training_keys(index.get(&s.image_id)?, m)?);
        }
    }
    for item in episode.query.iter().chain(&episode.test) {
        keys.push(FeatureKey::full(&item.image_id));
    }
    Ok(keys)
}

fn ensure_present(store: &FeatureStore, keys: &[FeatureKey]) -> Result<()> {
    let missing = store.missing(keys);
    if missing.is_empty() {
        Ok(())
    } else {
        for k in missing.iter().take(20) {
            log::error!("missing feature {k}");
        }
        Err(Error::MissingFeatures(missing))
    }
}

/// Evaluates every method at every support size for `runs` seeded episodes.
/// Rows are ordered by method, support size, then run.
pub fn run_benchmark(
    manifest: &DatasetManifest,
    store: &FeatureStore,
    config: &BenchmarkConfig,
) -> Result<RunReport> {
    config.validate()?;
    let index = ImageIndex::new(manifest);
    let sweep = &config.sweep;
    let jobs = config.runs * sweep.len();
    let episodes: Vec<Episode> = try_map_indexed(jobs, config.parallelism, |j| {
        let (run, point) = (j / sweep.len(), j % sweep.len());
        sample_episode(manifest, &config.episode_config(sweep[point], run))
    })?;
    let mut keys = Vec::new();
    for e in &episodes {
        keys.extend(episode_keys(&index, e, &config.methods)?);
    }
    ensure_present(store, &keys)?;

    let accuracies: Vec<Vec<f64>> = try_map_indexed(jobs, config.parallelism, |j| {
        config
            .methods
            .iter()
            .map(|m| {
                evaluate_episode(&index, store, &episodes[j], m, &config.train, &config.kmeans)
                    .map(|o| o.accuracy)
            })
            .collect::<Result<Vec<f64>>>()
    })?;

    let mut rows = Vec::with_capacity(jobs * config.methods.len());
    for (mi, m) in config.methods.iter().enumerate() {
        for (point, &n_s) in sweep.iter().enumerate() {
            for run in 0..config.runs {
                let j = run * sweep.len() + point;
                rows.push(RunRow {
                    dataset: manifest.name.clone(),
                    setting: config.setting.name().into(),
                    method: m.name().into(),
                    n_labeled: n_s,
                    seed: episodes[j].seed,
                    accuracy: accuracies[j][mi],
                });
            }
        }
    }
    let metadata = serde_json::json!({
        "command": "run",
        "dataset": manifest.name,
        "config": config,
    });
    Ok(RunReport { rows, metadata })
}

/// Baseline versus fused accuracy per run, plus a per-test-image audit.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionReport {
    pub report: RunReport,
    pub audit: Vec<AuditRow>,
}

impl FusionReport {
    pub fn write_audit_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.audit {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn fuse_eval(
    manifest: &DatasetManifest,
    store: &FeatureStore,
    config: &FusionEvalConfig,
) -> Result<FusionReport> {
    config.validate()?;
    let index = ImageIndex::new(manifest);
    let episodes: Vec<Episode> = try_map_indexed(config.runs, config.parallelism, |r| {
        sample_episode(manifest, &config.episode_config(r))
    })?;
    let ladders: Vec<Vec<Vec<FeatureKey>>> = try_map_indexed(config.runs, config.parallelism, |r| {
        episodes[r]
            .test
            .iter()
            .map(|t| ladder_keys(index.get(&t.image_id)?, config.source, &config.fusion.crop_ladder))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut keys = Vec::new();
    for (e, ladder) in episodes.iter().zip(&ladders) {
        keys.extend(episode_keys(&index, e, std::slice::from_ref(&config.train_method))?);
        keys.extend(ladder.iter().flatten().cloned());
    }
    ensure_present(store, &keys)?;

    let kmeans = SoftKMeansConfig::default();
    let per_run: Vec<(f64, f64, Vec<AuditRow>)> = try_map_indexed(config.runs, config.parallelism, |r| {
        let episode = &episodes[r];
        let head = evaluate_episode(&index, store, episode, &config.train_method, &config.train, &kmeans)?.head;
        let (mut base_ok, mut fused_ok) = (0usize, 0usize);
        let mut audit = Vec::with_capacity(episode.test.len());
        for (t, crop_keys) in episode.test.iter().zip(&ladders[r]) {
            let full = store.get_f64(&FeatureKey::full(&t.image_id))?;
            let crops = crop_keys.iter().map(|k| store.get_f64(k)).collect::<Result<Vec<_>>>()?;
            let p = fused_predict(&head, &full, &crops, &config.fusion)?;
            base_ok += (p.full_label == t.label) as usize;
            fused_ok += (p.label == t.label) as usize;
            audit.push(AuditRow {
                image_id: t.image_id.clone(),
                full_confidence: p.full_confidence,
                provenance: p.provenance.to_string(),
                label: episode.classes[p.label].clone(),
                correct: p.label == t.label,
            });
        }
        let n = episode.test.len() as f64;
        Ok::<_, Error>((base_ok as f64 / n, fused_ok as f64 / n, audit))
    })?;

    let mut rows = Vec::with_capacity(2 * config.runs);
    for (name, pick) in [("baseline", 0usize), ("fused", 1)] {
        for (r, res) in per_run.iter().enumerate() {
            rows.push(RunRow {
                dataset: manifest.name.clone(),
                setting: Setting::Inductive.name().into(),
                method: name.into(),
                n_labeled: config.n_support,
                seed: episodes[r].seed,
                accuracy: if pick == 0 { res.0 } else { res.1 },
            });
        }
    }
    let audit = per_run.into_iter().flat_map(|r| r.2).collect();
    let metadata = serde_json::json!({
        "command": "fuse",
        "dataset": manifest.name,
        "config": config,
    });
    Ok(FusionReport {
        report: RunReport { rows, metadata },
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub x: f64,
    pub y: f64,
    pub class: String,
    pub cropped_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutput {
    pub curve: VarianceCurve,
    pub basis: PcaBasis,
    pub scatter: Vec<ScatterRow>,
    pub metadata: serde_json::Value,
}

impl AnalysisOutput {
    pub fn write_curve_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.curve.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_scatter_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.scatter {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Up to `per_class` images with ground-truth boxes from every class,
/// grouped by class in manifest class order.
fn analysis_sample<'a>(manifest: &'a DatasetManifest, config: &AnalysisConfig) -> Result<Vec<Vec<&'a ImageRecord>>> {
    let by_class = manifest.by_class();
    let mut rng = rng_from_seed(config.seed);
    let mut out = Vec::with_capacity(manifest.classes.len());
    for class in &manifest.classes {
        let mut pool: Vec<&ImageRecord> = by_class[class.as_str()]
            .iter()
            .copied()
            .filter(|i| i.gt_box.is_some())
            .collect();
        if pool.is_empty() {
            return Err(Error::validation(format!("class {class} has no images with gt boxes")));
        }
        pool.shuffle(&mut rng);
        pool.truncate(config.samples_per_class);
        out.push(pool);
    }
    Ok(out)
}

fn analysis_key(image: &ImageRecord, lambda: ContextFraction) -> Result<FeatureKey> {
    let gt = image.gt_box.expect("sampled images have gt boxes");
    Ok(crop_key(image, &interpolate_context(&gt, lambda, image.width, image.height)?))
}

pub fn run_analysis(
    manifest: &DatasetManifest,
    store: &FeatureStore,
    config: &AnalysisConfig,
) -> Result<AnalysisOutput> {
    if config.grid.is_empty() {
        return Err(Error::validation("analysis grid is empty"));
    }
    let sample = analysis_sample(manifest, config)?;
    let full = ContextFraction::new(1.0)?;
    let mut keys = Vec::new();
    for img in sample.iter().flatten() {
        for &l in config.grid.iter().chain([&full, &config.scatter_lambda]) {
            keys.push(analysis_key(img, l)?);
        }
    }
    ensure_present(store, &keys)?;

    let grouped = |l: ContextFraction| -> Result<Vec<Vec<Vec<f64>>>> {
        sample
            .iter()
            .map(|imgs| {
                imgs.iter()
                    .map(|img| store.get_f64(&analysis_key(img, l)?))
                    .collect()
            })
            .collect()
    };
    let curve = analysis::variance_curve(&config.grid, grouped)?;

    let reference = grouped(full)?;
    let flat: Vec<Vec<f64>> = reference.iter().flatten().cloned().collect();
    let basis = analysis::pca_fit(&flat)?;
    let cropped = grouped(config.scatter_lambda)?;
    let mut scatter = Vec::with_capacity(2 * flat.len());
    for (flag, groups) in [(false, &reference), (true, &cropped)] {
        for (c, feats) in groups.iter().enumerate() {
            for p in analysis::pca_project(&basis, feats)? {
                scatter.push(ScatterRow {
                    x: p[0],
                    y: p[1],
                    class: manifest.classes[c].clone(),
                    cropped_flag: flag,
                });
            }
        }
    }
    let metadata = serde_json::json!({
        "command": "analyze",
        "dataset": manifest.name,
        "config": config,
        "variance_definition": "mean over classes of mean squared distance to class centroid",
        "pca_explained_variance": basis.explained_variance,
    });
    Ok(AnalysisOutput {
        curve,
        basis,
        scatter,
        metadata,
    })
}
