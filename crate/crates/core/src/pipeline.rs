//! Batch enhancement, feature extraction, training and evaluation.
//!
//! Output layout of [`run_pipeline`] under the output directory:
//!
//! ```text
//! enhanced/<image_id>.pbm   cleaned binary image (text black)
//! features.csv              image_id,material,background,mean,std,fallback
//! scatter.csv               mean,std,background,predicted
//! histogram.csv             feature,bin_start,bin_end,regular,irregular
//! report.json               accuracies, confusion, split assignment, skipped images
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binarize::{binarize, BinarizeError, Route, ThresholdMethod, ThresholdParams};
use crate::classify::{
    evaluate, knn_train, split_dataset, svm_train, Algorithm, Background, Classifier,
    ClassifyError, Confusion, LabeledSample, Material, MaterialScore, Model, SplitConfig,
    SvmParams,
};
use crate::features::{image_features, FeatureError, FeatureVector};
use crate::manifest::{DatasetManifest, ManifestError};
use crate::morphology::{cleanup, label_components, CleanupParams};
use crate::raster::{load_image, save_binary, BinaryRaster, GrayRaster, RasterError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Binarize(#[from] BinarizeError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type PipelineResult<T> = Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmChoice {
    Knn,
    Svm,
    #[default]
    Both,
}

impl AlgorithmChoice {
    pub fn algorithms(self) -> Vec<Algorithm> {
        match self {
            Self::Knn => vec![Algorithm::Knn],
            Self::Svm => vec![Algorithm::Svm],
            Self::Both => vec![Algorithm::Knn, Algorithm::Svm],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub algorithm: AlgorithmChoice,
    pub knn_k: usize,
    pub svm_c: f64,
    pub epochs: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmChoice::Both,
            knn_k: 3,
            svm_c: 1.0,
            epochs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub threshold: ThresholdParams,
    pub morphology: CleanupParams,
    pub classifier: ClassifierConfig,
    pub split: SplitConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> PipelineResult<()> {
        self.threshold.validate()?;
        let m = &self.morphology;
        if m.min_area == 0 {
            return Err(PipelineError::Config("min_area must be >= 1".into()));
        }
        if m.se_size == 0 || m.se_size % 2 == 0 {
            return Err(PipelineError::Config(format!(
                "se_size must be odd, got {}",
                m.se_size
            )));
        }
        let c = &self.classifier;
        if c.knn_k == 0 || c.knn_k % 2 == 0 {
            return Err(PipelineError::Config(format!(
                "knn_k must be odd and positive, got {}",
                c.knn_k
            )));
        }
        if !(c.svm_c > 0.0 && c.svm_c.is_finite()) {
            return Err(PipelineError::Config(format!(
                "svm_c must be positive, got {}",
                c.svm_c
            )));
        }
        if c.epochs == 0 {
            return Err(PipelineError::Config("epochs must be >= 1".into()));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(PipelineError::Config(format!(
                "ratio must be in (0, 1), got {}",
                self.split.ratio
            )));
        }
        Ok(())
    }

    pub fn svm_params(&self) -> SvmParams {
        SvmParams {
            c: self.classifier.svm_c,
            epochs: self.classifier.epochs,
            seed: self.split.seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Per-image enhancement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced {
    pub binary: BinaryRaster,
    pub features: FeatureVector,
    pub fallback: bool,
    pub route: Route,
    pub regularity: Option<f64>,
    pub regions: usize,
}

/// Binarize, clean up and measure one grayscale image.
pub fn enhance_gray(gray: &GrayRaster, config: &PipelineConfig) -> PipelineResult<Enhanced> {
    let binarized = binarize(gray, &config.threshold)?;
    let cleaned = cleanup(&binarized.raster, &config.morphology);
    let regions = label_components(&cleaned, config.morphology.connectivity);
    let mut text = BinaryRaster::zeros(gray.width(), gray.height())?;
    for region in &regions {
        for &(r, c) in &region.pixels {
            text.set(r, c, true);
        }
    }
    let feats = image_features(gray, Some(&text))?;
    Ok(Enhanced {
        binary: cleaned,
        features: feats.vector,
        fallback: feats.fallback,
        route: binarized.route,
        regularity: binarized.regularity,
        regions: regions.len(),
    })
}

/// Loads `path`, enhances it and, when `out` is given, writes the cleaned
/// binary image there.
pub fn enhance_one(
    path: &Path,
    config: &PipelineConfig,
    out: Option<&Path>,
) -> PipelineResult<Enhanced> {
    let gray = load_image(path)?.into_gray();
    let enhanced = enhance_gray(&gray, config)?;
    if let Some(out) = out {
        save_binary(&enhanced.binary, out)?;
    }
    Ok(enhanced)
}

// ---------------------------------------------------------------------------
// CSV rows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub image_id: String,
    pub material: Material,
    pub background: Background,
    pub mean: f64,
    pub std: f64,
    pub fallback: bool,
}

impl FeatureRow {
    pub fn sample(&self) -> LabeledSample {
        LabeledSample {
            image_id: self.image_id.clone(),
            material: self.material,
            background: self.background,
            features: FeatureVector::new(self.mean, self.std),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub mean: f64,
    pub std: f64,
    pub background: Background,
    pub predicted: Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub feature: String,
    pub bin_start: f64,
    pub bin_end: f64,
    pub regular: usize,
    pub irregular: usize,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> PipelineResult<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub const FEATURES_HEADER: [&str; 6] = [
    "image_id",
    "material",
    "background",
    "mean",
    "std",
    "fallback",
];
pub const SCATTER_HEADER: [&str; 4] = ["mean", "std", "background", "predicted"];
pub const HISTOGRAM_HEADER: [&str; 5] = ["feature", "bin_start", "bin_end", "regular", "irregular"];

pub fn read_features_csv(path: &Path) -> PipelineResult<Vec<FeatureRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<FeatureRow>, _>>()?;
    let samples: Vec<_> = rows.iter().map(FeatureRow::sample).collect();
    crate::classify::check_unique_ids(&samples)?;
    Ok(rows)
}

pub const HISTOGRAM_BINS: usize = 16;

/// Equal-width frequency bins of each feature over its observed range, split by label.
pub fn feature_histogram(rows: &[FeatureRow], bins: usize) -> Vec<HistogramRow> {
    let mut out = Vec::new();
    if rows.is_empty() || bins == 0 {
        return out;
    }
    let features: [(&str, fn(&FeatureRow) -> f64); 2] = [("mean", |r| r.mean), ("std", |r| r.std)];
    for (name, get) in features {
        let lo = rows.iter().map(get).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo {
            (hi - lo) / bins as f64
        } else {
            1.0
        };
        let mut counts = vec![[0usize; 2]; bins];
        for row in rows {
            let idx = (((get(row) - lo) / width) as usize).min(bins - 1);
            counts[idx][usize::from(row.background == Background::Irregular)] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            out.push(HistogramRow {
                feature: name.to_string(),
                bin_start: lo + i as f64 * width,
                bin_end: lo + (i + 1) as f64 * width,
                regular: c[0],
                irregular: c[1],
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Training / evaluation on feature rows
// ---------------------------------------------------------------------------

pub fn train_model(
    algorithm: Algorithm,
    train: &[LabeledSample],
    config: &PipelineConfig,
) -> PipelineResult<Model> {
    Ok(match algorithm {
        Algorithm::Knn => Model::Knn(knn_train(train, config.classifier.knn_k)?),
        Algorithm::Svm => Model::Svm(svm_train(train, config.svm_params())?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub manifest: usize,
    pub processed: usize,
    pub skipped: usize,
    pub train: usize,
    pub test: usize,
    pub global_route: usize,
    pub local_route: usize,
    pub fallback: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub ratio: f64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Published per-material accuracies for the original corpus. Kept for side-by-side
/// reading only; the synthetic corpus is not expected to match them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedReference {
    pub note: String,
    pub knn: BTreeMap<Material, f64>,
    pub svm: BTreeMap<Material, f64>,
}

impl Default for PublishedReference {
    fn default() -> Self {
        Self {
            note: "accuracies reported for the original 250-image corpus; not reproducible here"
                .into(),
            knn: [
                (Material::Stone, 0.557),
                (Material::Metal, 0.62),
                (Material::Document, 0.656),
            ]
            .into(),
            svm: [
                (Material::Stone, 0.532),
                (Material::Metal, 0.595),
                (Material::Document, 0.678),
            ]
            .into(),
        }
    }
}

/// `report.json`. Accuracy, per-material and confusion entries are keyed by
/// classifier (`knn`, `svm`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub overall_accuracy: BTreeMap<Algorithm, f64>,
    pub per_material: BTreeMap<Algorithm, BTreeMap<Material, MaterialScore>>,
    pub confusion: BTreeMap<Algorithm, Confusion>,
    pub seed: u64,
    pub counts: Counts,
    pub skipped: Vec<SkippedImage>,
    pub split: SplitAssignment,
    /// Classifier whose predictions fill the `predicted` column of scatter.csv.
    pub scatter_classifier: Algorithm,
    pub config: PipelineConfig,
    pub published_reference: PublishedReference,
}

pub struct PipelineOutput {
    pub report: PipelineReport,
    pub features: Vec<FeatureRow>,
    pub scatter: Vec<ScatterRow>,
    pub models: Vec<Model>,
}

/// Splits feature rows, trains the configured classifiers and evaluates them.
/// Also returns the scatter rows for every input row, predicted by the first
/// configured classifier.
pub fn train_and_evaluate(
    rows: &[FeatureRow],
    config: &PipelineConfig,
) -> PipelineResult<(
    Vec<Model>,
    BTreeMap<Algorithm, crate::classify::EvaluationReport>,
    SplitAssignment,
    Vec<ScatterRow>,
)> {
    let samples: Vec<LabeledSample> = rows.iter().map(FeatureRow::sample).collect();
    let split = split_dataset(&samples, config.split.ratio, config.split.seed)?;
    let mut models = Vec::new();
    let mut reports = BTreeMap::new();
    for algorithm in config.classifier.algorithm.algorithms() {
        let model = train_model(algorithm, &split.train, config)?;
        reports.insert(algorithm, evaluate(&model, &split.test)?);
        models.push(model);
    }
    let primary = &models[0];
    let scatter = samples
        .iter()
        .map(|s| ScatterRow {
            mean: s.features.mean,
            std: s.features.std,
            background: s.background,
            predicted: primary.predict(&s.features),
        })
        .collect();
    let assignment = SplitAssignment {
        ratio: config.split.ratio,
        train: split.train.iter().map(|s| s.image_id.clone()).collect(),
        test: split.test.iter().map(|s| s.image_id.clone()).collect(),
    };
    Ok((models, reports, assignment, scatter))
}

/// Enhances every manifest image in parallel; results keep manifest order.
pub fn extract_features(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
) -> Vec<Result<Enhanced, PipelineError>> {
    manifest
        .entries
        .par_iter()
        .map(|entry| enhance_one(&manifest.resolve(entry), config, None))
        .collect()
}

/// Runs the whole batch and writes all artifacts into `out_dir`.
pub fn run_pipeline(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    out_dir: &Path,
) -> PipelineResult<PipelineOutput> {
    config.validate()?;
    let results = extract_features(manifest, config);

    let enhanced_dir = out_dir.join("enhanced");
    fs::create_dir_all(&enhanced_dir)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let (mut global_route, mut local_route) = (0, 0);
    for (entry, result) in manifest.entries.iter().zip(results) {
        match result {
            Ok(e) => {
                save_binary(&e.binary, enhanced_path(&enhanced_dir, &entry.image_id))?;
                match e.route {
                    Route::Global { .. } => global_route += 1,
                    Route::Local { .. } => local_route += 1,
                }
                rows.push(FeatureRow {
                    image_id: entry.image_id.clone(),
                    material: entry.material,
                    background: entry.background,
                    mean: e.features.mean,
                    std: e.features.std,
                    fallback: e.fallback,
                });
            }
            Err(err) => skipped.push(SkippedImage {
                image_id: entry.image_id.clone(),
                error: err.to_string(),
            }),
        }
    }
    write_csv(&out_dir.join("features.csv"), &rows, &FEATURES_HEADER)?;
    write_csv(
        &out_dir.join("histogram.csv"),
        &feature_histogram(&rows, HISTOGRAM_BINS),
        &HISTOGRAM_HEADER,
    )?;

    let (models, reports, split, scatter) = train_and_evaluate(&rows, config)?;
    write_csv(&out_dir.join("scatter.csv"), &scatter, &SCATTER_HEADER)?;

    let report = PipelineReport {
        overall_accuracy: reports
            .iter()
            .map(|(&a, r)| (a, r.overall_accuracy))
            .collect(),
        per_material: reports
            .iter()
            .map(|(&a, r)| (a, r.per_material.clone()))
            .collect(),
        confusion: reports.iter().map(|(&a, r)| (a, r.confusion)).collect(),
        seed: config.split.seed,
        counts: Counts {
            manifest: manifest.len(),
            processed: rows.len(),
            skipped: skipped.len(),
            train: split.train.len(),
            test: split.test.len(),
            global_route,
            local_route,
            fallback: rows.iter().filter(|r| r.fallback).count(),
        },
        skipped,
        split,
        scatter_classifier: models[0].algorithm(),
        config: config.clone(),
        published_reference: PublishedReference::default(),
    };
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(PipelineOutput {
        report,
        features: rows,
        scatter,
        models,
    })
}

/// `<dir>/<image_id>.pbm`, with path separators in the id replaced.
pub fn enhanced_path(dir: &Path, image_id: &str) -> PathBuf {
    let safe: String = image_id
        .chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect();
    dir.join(format!("{safe}.pbm"))
}

/// Short label for a routing decision.
pub fn route_label(route: &Route) -> String {
    match route {
        Route::Global { threshold } => format!("global-otsu(t={threshold})"),
        Route::Local { method } => match method {
            ThresholdMethod::LocalNiblack => "local-niblack".into(),
            _ => "local-sauvola".into(),
        },
    }
}
