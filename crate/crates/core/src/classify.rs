//! Background-type classification over (mean, std) features.
//!
//! Both classifiers work in z-scored feature space, with the scaler fitted on
//! the training split only. Every randomized step takes an explicit seed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("stratum {material}/{background} has {count} sample(s); at least 2 are required")]
    StratumTooSmall {
        material: Material,
        background: Background,
        count: usize,
    },
    #[error("training set contains only {0} samples; both background labels are required")]
    SingleClassTrainingSet(Background),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid classifier parameter: {0}")]
    InvalidParams(String),
    #[error("duplicate image id {0}")]
    DuplicateId(String),
}

pub type ClassifyResult<T> = Result<T, ClassifyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Stone,
    Metal,
    Document,
}

impl Material {
    pub const ALL: [Material; 3] = [Material::Stone, Material::Metal, Material::Document];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stone => "stone",
            Self::Metal => "metal",
            Self::Document => "document",
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Material {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stone" => Ok(Self::Stone),
            "metal" => Ok(Self::Metal),
            "document" => Ok(Self::Document),
            other => Err(format!(
                "unknown material {other:?} (expected stone, metal or document)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    Regular,
    Irregular,
}

impl Background {
    pub const ALL: [Background; 2] = [Background::Regular, Background::Irregular];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Regular => "regular",
            Self::Irregular => "irregular",
        }
    }

    /// Margin sign used by the SVM.
    pub fn sign(self) -> f64 {
        match self {
            Self::Regular => -1.0,
            Self::Irregular => 1.0,
        }
    }

    fn index(self) -> usize {
        match self {
            Self::Regular => 0,
            Self::Irregular => 1,
        }
    }
}

impl fmt::Display for Background {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Background {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regular" => Ok(Self::Regular),
            "irregular" => Ok(Self::Irregular),
            other => Err(format!(
                "unknown background {other:?} (expected regular or irregular)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub image_id: String,
    pub material: Material,
    pub background: Background,
    pub features: FeatureVector,
}

pub fn check_unique_ids(samples: &[LabeledSample]) -> ClassifyResult<()> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.image_id.as_str()) {
            return Err(ClassifyError::DuplicateId(s.image_id.clone()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

/// Stratified split over (material, background). Each stratum of size n sends
/// `floor(ratio·n)` samples to train and the rest to test, chosen by a seeded
/// shuffle. Strata are visited in sorted order so the result depends only on
/// the seed and the input order.
pub fn split_dataset(samples: &[LabeledSample], ratio: f64, seed: u64) -> ClassifyResult<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ClassifyError::InvalidParams(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    check_unique_ids(samples)?;
    let mut strata: BTreeMap<(Material, Background), Vec<&LabeledSample>> = BTreeMap::new();
    for s in samples {
        strata
            .entry((s.material, s.background))
            .or_default()
            .push(s);
    }
    if strata.is_empty() {
        return Err(ClassifyError::Empty("dataset"));
    }
    if let Some((&(material, background), members)) = strata.iter().find(|(_, m)| m.len() < 2) {
        return Err(ClassifyError::StratumTooSmall {
            material,
            background,
            count: members.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_ids = HashSet::new();
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        let n_train = (ratio * members.len() as f64 + 1e-9).floor() as usize;
        train_ids.extend(members[..n_train].iter().map(|s| s.image_id.as_str()));
    }
    let (train, test): (Vec<_>, Vec<_>) = samples
        .iter()
        .cloned()
        .partition(|s| train_ids.contains(s.image_id.as_str()));
    Ok(Split { train, test })
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Scaler {
    /// Population z-score per dimension. A dimension with no spread keeps
    /// mean 0 and std 1, so it passes through untouched.
    pub fn fit(train: &[FeatureVector]) -> ClassifyResult<Self> {
        if train.is_empty() {
            return Err(ClassifyError::Empty("training set"));
        }
        let n = train.len() as f64;
        let mut mean = [0.0; 2];
        let mut std = [1.0; 2];
        for d in 0..2 {
            let m = train.iter().map(|f| f.as_array()[d]).sum::<f64>() / n;
            let var = train
                .iter()
                .map(|f| (f.as_array()[d] - m).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            if sd > 1e-12 * m.abs().max(1.0) {
                mean[d] = m;
                std[d] = sd;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, f: &FeatureVector) -> [f64; 2] {
        let v = f.as_array();
        [
            (v[0] - self.mean[0]) / self.std[0],
            (v[1] - self.mean[1]) / self.std[1],
        ]
    }
}

pub fn fit_scaler(train: &[LabeledSample]) -> ClassifyResult<Scaler> {
    let features: Vec<_> = train.iter().map(|s| s.features).collect();
    Scaler::fit(&features)
}

pub fn apply_scaler(scaler: &Scaler, features: &FeatureVector) -> [f64; 2] {
    scaler.apply(features)
}

fn require_both_labels(train: &[LabeledSample]) -> ClassifyResult<()> {
    let first = train
        .first()
        .ok_or(ClassifyError::Empty("training set"))?
        .background;
    if train.iter().all(|s| s.background == first) {
        return Err(ClassifyError::SingleClassTrainingSet(first));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// K-NN
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnPoint {
    pub image_id: String,
    pub scaled: [f64; 2],
    pub label: Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub scaler: Scaler,
    pub points: Vec<KnnPoint>,
}

fn squared_distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

pub fn knn_train(train: &[LabeledSample], k: usize) -> ClassifyResult<KnnModel> {
    if k == 0 || k % 2 == 0 {
        return Err(ClassifyError::InvalidParams(format!(
            "k must be odd and positive, got {k}"
        )));
    }
    if k > train.len() {
        return Err(ClassifyError::InvalidParams(format!(
            "k = {k} exceeds training set size {}",
            train.len()
        )));
    }
    check_unique_ids(train)?;
    let scaler = fit_scaler(train)?;
    let points = train
        .iter()
        .map(|s| KnnPoint {
            image_id: s.image_id.clone(),
            scaled: scaler.apply(&s.features),
            label: s.background,
        })
        .collect();
    Ok(KnnModel { k, scaler, points })
}

impl KnnModel {
    /// Indices of the `k` nearest stored points, nearest first. Equal
    /// distances are ordered by image id.
    pub fn neighbors(&self, features: &FeatureVector) -> Vec<usize> {
        let q = self.scaler.apply(features);
        let mut ranked: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (squared_distance(&q, &p.scaled), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0)
                .then_with(|| self.points[a.1].image_id.cmp(&self.points[b.1].image_id))
        };
        let k = self.k.min(ranked.len());
        if k < ranked.len() {
            ranked.select_nth_unstable_by(k - 1, cmp);
            ranked.truncate(k);
        }
        ranked.sort_by(cmp);
        ranked.into_iter().map(|(_, i)| i).collect()
    }

    /// Majority label of the k nearest; a tied vote goes to the nearest neighbor.
    pub fn predict(&self, features: &FeatureVector) -> Background {
        let nearest = self.neighbors(features);
        let mut votes = [0usize; 2];
        for &i in &nearest {
            votes[self.points[i].label.index()] += 1;
        }
        match votes[0].cmp(&votes[1]) {
            Ordering::Greater => Background::Regular,
            Ordering::Less => Background::Irregular,
            Ordering::Equal => self.points[nearest[0]].label,
        }
    }
}

pub fn knn_predict(model: &KnnModel, features: &FeatureVector) -> Background {
    model.predict(features)
}

// ---------------------------------------------------------------------------
// Linear SVM
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 1000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: [f64; 2],
    pub bias: f64,
    pub scaler: Scaler,
    pub params: SvmParams,
    /// Primal objective `½‖w‖² + C·Σ hinge` of the returned iterate.
    pub objective: f64,
    /// Objective after each epoch, before best-iterate selection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

fn hinge_objective(w: &[f64; 2], b: f64, c: f64, xs: &[[f64; 2]], ys: &[f64]) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| (1.0 - y * (w[0] * x[0] + w[1] * x[1] + b)).max(0.0))
        .sum();
    0.5 * (w[0] * w[0] + w[1] * w[1]) + c * hinge
}

/// Stochastic subgradient descent on the primal hinge objective with step
/// size `1/(λ·t)`, `λ = 1/(C·n)`. The bias is unregularized. Samples are
/// reshuffled each epoch from a seeded stream, and the iterate with the lowest
/// objective seen at an epoch boundary is returned.
pub fn svm_train(train: &[LabeledSample], params: SvmParams) -> ClassifyResult<SvmModel> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(ClassifyError::InvalidParams(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    if params.epochs == 0 {
        return Err(ClassifyError::InvalidParams(
            "epochs must be positive".into(),
        ));
    }
    require_both_labels(train)?;
    let scaler = fit_scaler(train)?;
    let xs: Vec<[f64; 2]> = train.iter().map(|s| scaler.apply(&s.features)).collect();
    let ys: Vec<f64> = train.iter().map(|s| s.background.sign()).collect();
    let n = xs.len();
    let lambda = 1.0 / (params.c * n as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = [0.0f64; 2];
    let mut b = 0.0f64;
    let mut best = (w, b, f64::INFINITY);
    let mut history = Vec::with_capacity(params.epochs);
    let mut t = 0u64;

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = (&xs[i], ys[i]);
            let margin = y * (w[0] * x[0] + w[1] * x[1] + b);
            let shrink = 1.0 - eta * lambda;
            w[0] *= shrink;
            w[1] *= shrink;
            if margin < 1.0 {
                w[0] += eta * y * x[0];
                w[1] += eta * y * x[1];
                b += eta * y;
            }
        }
        let obj = hinge_objective(&w, b, params.c, &xs, &ys);
        history.push(obj);
        if obj < best.2 {
            best = (w, b, obj);
        }
    }

    let (weights, bias, objective) = best;
    if !(weights.iter().all(|v| v.is_finite()) && bias.is_finite()) {
        return Err(ClassifyError::InvalidParams("training diverged".into()));
    }
    Ok(SvmModel {
        weights,
        bias,
        scaler,
        params,
        objective,
        history,
    })
}

impl SvmModel {
    pub fn decision(&self, features: &FeatureVector) -> f64 {
        let x = self.scaler.apply(features);
        self.decision_scaled(&x)
    }

    pub fn decision_scaled(&self, x: &[f64; 2]) -> f64 {
        self.weights[0] * x[0] + self.weights[1] * x[1] + self.bias
    }

    /// Non-negative decision values map to irregular.
    pub fn predict(&self, features: &FeatureVector) -> Background {
        if self.decision(features) >= 0.0 {
            Background::Irregular
        } else {
            Background::Regular
        }
    }
}

pub fn svm_predict(model: &SvmModel, features: &FeatureVector) -> Background {
    model.predict(features)
}

// ---------------------------------------------------------------------------
// Unified model + evaluation
// ---------------------------------------------------------------------------

pub trait Classifier {
    fn predict(&self, features: &FeatureVector) -> Background;
}

impl Classifier for KnnModel {
    fn predict(&self, features: &FeatureVector) -> Background {
        KnnModel::predict(self, features)
    }
}

impl Classifier for SvmModel {
    fn predict(&self, features: &FeatureVector) -> Background {
        SvmModel::predict(self, features)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Knn,
    Svm,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Knn => "knn",
            Self::Svm => "svm",
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Serialized classifier, tagged by algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum Model {
    Knn(KnnModel),
    Svm(SvmModel),
}

impl Model {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Self::Knn(_) => Algorithm::Knn,
            Self::Svm(_) => Algorithm::Svm,
        }
    }
}

impl Classifier for Model {
    fn predict(&self, features: &FeatureVector) -> Background {
        match self {
            Self::Knn(m) => m.predict(features),
            Self::Svm(m) => m.predict(features),
        }
    }
}

/// Stratified split settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    /// Split the model was trained under, so evaluation can recover the test set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitConfig>,
    #[serde(flatten)]
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            split: None,
            model,
        }
    }
}

/// Confusion counts, rows indexed by actual label and columns by predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: [Background; 2],
    pub matrix: [[usize; 2]; 2],
}

impl Confusion {
    fn new() -> Self {
        Self {
            labels: Background::ALL,
            matrix: [[0; 2]; 2],
        }
    }

    pub fn add(&mut self, actual: Background, predicted: Background) {
        self.matrix[actual.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        self.matrix[0][0] + self.matrix[1][1]
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialScore {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub overall_accuracy: f64,
    pub per_material: BTreeMap<Material, MaterialScore>,
    pub confusion: Confusion,
    pub test_size: usize,
    /// `(image_id, predicted)` in test-set order.
    pub predictions: Vec<(String, Background)>,
}

pub fn evaluate(
    model: &dyn Classifier,
    test: &[LabeledSample],
) -> ClassifyResult<EvaluationReport> {
    if test.is_empty() {
        return Err(ClassifyError::Empty("test set"));
    }
    let mut confusion = Confusion::new();
    let mut by_material: HashMap<Material, Confusion> = HashMap::new();
    let mut predictions = Vec::with_capacity(test.len());
    for s in test {
        let predicted = model.predict(&s.features);
        confusion.add(s.background, predicted);
        by_material
            .entry(s.material)
            .or_insert_with(Confusion::new)
            .add(s.background, predicted);
        predictions.push((s.image_id.clone(), predicted));
    }
    let per_material = by_material
        .into_iter()
        .map(|(m, c)| {
            (
                m,
                MaterialScore {
                    accuracy: c.accuracy(),
                    correct: c.correct(),
                    total: c.total(),
                },
            )
        })
        .collect();
    Ok(EvaluationReport {
        overall_accuracy: confusion.accuracy(),
        per_material,
        confusion,
        test_size: test.len(),
        predictions,
    })
}
