//! Enhancement and background-type classification of degraded inscription
//! images: grayscale conversion, global/local binarization, morphological
//! cleanup, mean/std features and K-NN / linear SVM classifiers.

pub mod binarize;
pub mod classify;
pub mod features;
pub mod manifest;
pub mod morphology;
pub mod pipeline;
pub mod raster;
pub mod synth;
