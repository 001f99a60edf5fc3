//! Global and local thresholding.
//!
//! Global thresholds come from Otsu's between-class variance criterion.
//! Local thresholds (Niblack, Sauvola) are driven by the windowed mean and
//! population standard deviation of each pixel's neighborhood, computed in
//! O(1) per pixel from a pair of integral images.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinaryRaster, GrayRaster};

#[derive(Debug, Error, PartialEq)]
pub enum BinarizeError {
    #[error(
        "histogram has all of its mass at a single intensity; no threshold separates two classes"
    )]
    DegenerateHistogram,
    #[error("invalid threshold parameters: {0}")]
    InvalidParams(String),
}

pub type BinarizeResult<T> = Result<T, BinarizeError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    counts: [u64; 256],
}

impl Histogram256 {
    pub fn from_counts(counts: [u64; 256]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn histogram(img: &GrayRaster) -> Histogram256 {
    let mut counts = [0u64; 256];
    for &v in img.data() {
        counts[usize::from(v)] += 1;
    }
    Histogram256 { counts }
}

/// Relative slack under which two between-class variances count as a tie.
const OTSU_TIE_EPSILON: f64 = 1e-12;

/// Otsu's threshold: class 0 is every intensity `<= t`. Among thresholds with
/// maximal between-class variance the smallest is returned.
pub fn otsu_threshold(hist: &Histogram256) -> BinarizeResult<u8> {
    let counts = hist.counts();
    let total: u64 = counts.iter().sum();
    let total_sum: u64 = counts.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    let mut best: Option<(u8, f64)> = None;
    let mut n0 = 0u64;
    let mut s0 = 0u64;
    for t in 0..255usize {
        n0 += counts[t];
        s0 += t as u64 * counts[t];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        // ω0·ω1·(μ0−μ1)² = (s0·n1 − s1·n0)² / (N²·n0·n1); N² is common to every t.
        let diff = i128::from(s0) * i128::from(n1) - i128::from(s1) * i128::from(n0);
        let diff = diff as f64;
        let score = diff * diff / (n0 as f64 * n1 as f64);
        match best {
            Some((_, b)) if score <= b * (1.0 + OTSU_TIE_EPSILON) => {}
            _ => best = Some((t as u8, score)),
        }
    }
    best.map(|(t, _)| t)
        .ok_or(BinarizeError::DegenerateHistogram)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Text darker than the background (ink on paper, incised stone).
    #[default]
    DarkText,
    LightText,
}

pub fn binarize_global(img: &GrayRaster, t: u8, polarity: Polarity) -> BinaryRaster {
    let data = img
        .data()
        .iter()
        .map(|&v| match polarity {
            Polarity::DarkText => u8::from(v <= t),
            Polarity::LightText => u8::from(v > t),
        })
        .collect();
    BinaryRaster::from_raw(img.width(), img.height(), data)
}

/// Summed-area tables of intensity and squared intensity, each with a zero
/// row and zero column prepended.
#[derive(Debug, Clone)]
pub struct IntegralPair {
    width: usize,
    height: usize,
    sum: Vec<u64>,
    sq: Vec<u64>,
}

impl IntegralPair {
    pub fn new(img: &GrayRaster) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut sq = vec![0u64; stride * (h + 1)];
        for row in 0..h {
            let mut row_sum = 0u64;
            let mut row_sq = 0u64;
            for col in 0..w {
                let v = u64::from(img.get(row, col));
                row_sum += v;
                row_sq += v * v;
                let i = (row + 1) * stride + col + 1;
                sum[i] = sum[i - stride] + row_sum;
                sq[i] = sq[i - stride] + row_sq;
            }
        }
        Self {
            width: w,
            height: h,
            sum,
            sq,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Entry `(row, col)` of the intensity table; both indices range over `0..=dim`.
    pub fn sum_at(&self, row: usize, col: usize) -> u64 {
        self.sum[row * (self.width + 1) + col]
    }

    pub fn sq_at(&self, row: usize, col: usize) -> u64 {
        self.sq[row * (self.width + 1) + col]
    }

    /// Sum and squared sum over rows `r0..r1` and columns `c0..c1` (half-open).
    pub fn rect(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> (u64, u64) {
        let s =
            self.sum_at(r1, c1) + self.sum_at(r0, c0) - self.sum_at(r0, c1) - self.sum_at(r1, c0);
        let q = self.sq_at(r1, c1) + self.sq_at(r0, c0) - self.sq_at(r0, c1) - self.sq_at(r1, c0);
        (s, q)
    }
}

pub fn integral_pair(img: &GrayRaster) -> IntegralPair {
    IntegralPair::new(img)
}

/// Mean and population standard deviation from exact integer moments.
///
/// The variance numerator `n·Σx² − (Σx)²` is formed in integers, so a
/// constant sample yields exactly zero spread.
pub(crate) fn moments_to_mean_std(n: u64, sum: u64, sq: u64) -> (f64, f64) {
    let mean = sum as f64 / n as f64;
    let num = u128::from(n) * u128::from(sq) - u128::from(sum) * u128::from(sum);
    let var = num as f64 / (n as f64 * n as f64);
    (mean, var.max(0.0).sqrt())
}

/// Per-pixel windowed mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStatsMap {
    width: usize,
    height: usize,
    window: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
    count: Vec<u32>,
}

impl LocalStatsMap {
    /// Assembles a map from precomputed per-pixel values.
    pub fn from_parts(
        width: usize,
        height: usize,
        window: usize,
        mean: Vec<f64>,
        std: Vec<f64>,
        count: Vec<u32>,
    ) -> BinarizeResult<Self> {
        let n = width * height;
        if mean.len() != n || std.len() != n || count.len() != n {
            return Err(BinarizeError::InvalidParams(
                "stats map length mismatch".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            window,
            mean,
            std,
            count,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Clipped window area per pixel.
    pub fn count(&self) -> &[u32] {
        &self.count
    }
}

fn check_window(window: usize) -> BinarizeResult<()> {
    if window < 3 || window % 2 == 0 {
        return Err(BinarizeError::InvalidParams(format!(
            "window must be odd and >= 3, got {window}"
        )));
    }
    Ok(())
}

/// Windowed statistics centered on each pixel. The window is clipped to the
/// image and `n` is the clipped area, so borders use only real pixels.
pub fn local_stats(img: &GrayRaster, window: usize) -> BinarizeResult<LocalStatsMap> {
    check_window(window)?;
    let integral = IntegralPair::new(img);
    Ok(local_stats_from_integral(&integral, window))
}

pub fn local_stats_from_integral(integral: &IntegralPair, window: usize) -> LocalStatsMap {
    let (w, h) = (integral.width, integral.height);
    let half = window / 2;
    let n = w * h;
    let mut mean = Vec::with_capacity(n);
    let mut std = Vec::with_capacity(n);
    let mut count = Vec::with_capacity(n);
    for row in 0..h {
        let r0 = row.saturating_sub(half);
        let r1 = (row + half + 1).min(h);
        for col in 0..w {
            let c0 = col.saturating_sub(half);
            let c1 = (col + half + 1).min(w);
            let area = ((r1 - r0) * (c1 - c0)) as u64;
            let (s, q) = integral.rect(r0, c0, r1, c1);
            let (m, sd) = moments_to_mean_std(area, s, q);
            mean.push(m);
            std.push(sd);
            count.push(area as u32);
        }
    }
    LocalStatsMap {
        width: w,
        height: h,
        window,
        mean,
        std,
        count,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMethod {
    GlobalOtsu,
    LocalNiblack,
    LocalSauvola,
    Auto,
}

impl ThresholdMethod {
    pub fn is_local(self) -> bool {
        matches!(self, Self::LocalNiblack | Self::LocalSauvola)
    }

    pub fn default_k(self) -> f64 {
        match self {
            Self::LocalNiblack => -0.2,
            _ => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub method: ThresholdMethod,
    pub window: usize,
    /// `None` selects the method's default (−0.2 Niblack, 0.5 Sauvola).
    pub k: Option<f64>,
    /// Sauvola dynamic range of the standard deviation.
    pub r: f64,
    pub polarity: Polarity,
    pub regularity_cutoff: f64,
    pub regularity_block: usize,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            method: ThresholdMethod::Auto,
            window: 31,
            k: None,
            r: 128.0,
            polarity: Polarity::DarkText,
            regularity_cutoff: 18.0,
            regularity_block: 16,
        }
    }
}

impl ThresholdParams {
    pub fn with_method(method: ThresholdMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> BinarizeResult<()> {
        check_window(self.window)?;
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(BinarizeError::InvalidParams(format!(
                "R must be positive, got {}",
                self.r
            )));
        }
        if !(self.regularity_cutoff >= 0.0) {
            return Err(BinarizeError::InvalidParams(format!(
                "regularity cutoff must be >= 0, got {}",
                self.regularity_cutoff
            )));
        }
        if self.regularity_block < 2 {
            return Err(BinarizeError::InvalidParams(
                "regularity block must be >= 2".into(),
            ));
        }
        if let Some(k) = self.k {
            if !k.is_finite() {
                return Err(BinarizeError::InvalidParams("k must be finite".into()));
            }
        }
        Ok(())
    }

    /// k for a concrete local method.
    pub fn k_for(&self, method: ThresholdMethod) -> f64 {
        self.k.unwrap_or_else(|| method.default_k())
    }
}

/// Per-pixel local threshold.
pub fn local_threshold(method: ThresholdMethod, mean: f64, std: f64, k: f64, r: f64) -> f64 {
    match method {
        ThresholdMethod::LocalNiblack => mean + k * std,
        _ => mean * (1.0 + k * (std / r - 1.0)),
    }
}

/// Applies a local threshold rule to `img` using precomputed statistics.
pub fn threshold_with_stats(
    img: &GrayRaster,
    stats: &LocalStatsMap,
    method: ThresholdMethod,
    k: f64,
    r: f64,
    polarity: Polarity,
) -> BinaryRaster {
    let data = img
        .data()
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(&v, (&m, &s))| {
            let t = local_threshold(method, m, s, k, r);
            let v = f64::from(v);
            match polarity {
                Polarity::DarkText => u8::from(v < t),
                Polarity::LightText => u8::from(v > t),
            }
        })
        .collect();
    BinaryRaster::from_raw(img.width(), img.height(), data)
}

pub fn binarize_local(img: &GrayRaster, params: &ThresholdParams) -> BinarizeResult<BinaryRaster> {
    params.validate()?;
    if !params.method.is_local() {
        return Err(BinarizeError::InvalidParams(format!(
            "{:?} is not a local method",
            params.method
        )));
    }
    let stats = local_stats(img, params.window)?;
    Ok(threshold_with_stats(
        img,
        &stats,
        params.method,
        params.k_for(params.method),
        params.r,
        params.polarity,
    ))
}

/// Spread of block means over a non-overlapping tiling; partial edge blocks
/// are included. Zero for a constant image.
pub fn background_regularity(img: &GrayRaster, block: usize) -> BinarizeResult<f64> {
    if block < 2 {
        return Err(BinarizeError::InvalidParams("block must be >= 2".into()));
    }
    let integral = IntegralPair::new(img);
    let (w, h) = (img.width(), img.height());
    let mut block_means = Vec::new();
    for r0 in (0..h).step_by(block) {
        let r1 = (r0 + block).min(h);
        for c0 in (0..w).step_by(block) {
            let c1 = (c0 + block).min(w);
            let (s, _) = integral.rect(r0, c0, r1, c1);
            block_means.push(s as f64 / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    let n = block_means.len() as f64;
    let mu = block_means.iter().sum::<f64>() / n;
    let var = block_means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// Which thresholding path produced a binary image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "kebab-case")]
pub enum Route {
    Global { threshold: u8 },
    Local { method: ThresholdMethod },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binarized {
    pub raster: BinaryRaster,
    pub route: Route,
    /// Background regularity score, present when `auto` dispatch computed it.
    pub regularity: Option<f64>,
}

/// Thresholds `img` according to `params.method`. `auto` picks Otsu when the
/// background regularity score is below the cutoff and Sauvola otherwise.
pub fn binarize(img: &GrayRaster, params: &ThresholdParams) -> BinarizeResult<Binarized> {
    params.validate()?;
    let (method, regularity) = match params.method {
        ThresholdMethod::Auto => {
            let score = background_regularity(img, params.regularity_block)?;
            let method = if score < params.regularity_cutoff {
                ThresholdMethod::GlobalOtsu
            } else {
                ThresholdMethod::LocalSauvola
            };
            (method, Some(score))
        }
        m => (m, None),
    };
    let (raster, route) = if method == ThresholdMethod::GlobalOtsu {
        let t = otsu_threshold(&histogram(img))?;
        (
            binarize_global(img, t, params.polarity),
            Route::Global { threshold: t },
        )
    } else {
        let local = ThresholdParams { method, ..*params };
        (binarize_local(img, &local)?, Route::Local { method })
    };
    Ok(Binarized {
        raster,
        route,
        regularity,
    })
}
