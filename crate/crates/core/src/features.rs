//! Mean / standard-deviation descriptors over text pixels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binarize::moments_to_mean_std;
use crate::raster::{BinaryRaster, GrayRaster};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("mask is {mask_w}x{mask_h} but image is {img_w}x{img_h}")]
    DimensionMismatch {
        img_w: usize,
        img_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
}

/// Intensity mean and population standard deviation of a pixel set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean: f64,
    pub std: f64,
}

impl FeatureVector {
    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.mean, self.std]
    }

    pub fn from_array(v: [f64; 2]) -> Self {
        Self {
            mean: v[0],
            std: v[1],
        }
    }
}

/// Exact Σx and Σx² over a stream of intensities.
fn moments(values: impl Iterator<Item = u8>) -> (u64, u64, u64) {
    values.fold((0, 0, 0), |(n, s, q), v| {
        let v = u64::from(v);
        (n + 1, s + v, q + v * v)
    })
}

pub fn region_mean_std(
    img: &GrayRaster,
    mask: &BinaryRaster,
) -> Result<FeatureVector, FeatureError> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(FeatureError::DimensionMismatch {
            img_w: img.width(),
            img_h: img.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    let selected = img
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m == 1)
        .map(|(&v, _)| v);
    let (n, s, q) = moments(selected);
    if n == 0 {
        return Err(FeatureError::EmptyMask);
    }
    let (mean, std) = moments_to_mean_std(n, s, q);
    Ok(FeatureVector { mean, std })
}

pub fn whole_image_mean_std(img: &GrayRaster) -> FeatureVector {
    let (n, s, q) = moments(img.data().iter().copied());
    let (mean, std) = moments_to_mean_std(n, s, q);
    FeatureVector { mean, std }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageFeatures {
    pub vector: FeatureVector,
    /// Set when a mask was given but selected nothing, so the whole image was used.
    pub fallback: bool,
}

/// The per-image classifier input: statistics over the masked text pixels,
/// or over the whole image when there is no usable mask.
pub fn image_features(
    img: &GrayRaster,
    mask: Option<&BinaryRaster>,
) -> Result<ImageFeatures, FeatureError> {
    match mask {
        None => Ok(ImageFeatures {
            vector: whole_image_mean_std(img),
            fallback: false,
        }),
        Some(mask) => match region_mean_std(img, mask) {
            Ok(vector) => Ok(ImageFeatures {
                vector,
                fallback: false,
            }),
            Err(FeatureError::EmptyMask) => Ok(ImageFeatures {
                vector: whole_image_mean_std(img),
                fallback: true,
            }),
            Err(e) => Err(e),
        },
    }
}
