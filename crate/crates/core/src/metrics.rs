//! Image comparison metrics over jointly averaged channels with peak value 1.

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::imaging::RgbImage;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("image shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
}

#[derive(Clone, Copy, Debug)]
pub struct ImagePair<'a> {
    reference: &'a RgbImage,
    test: &'a RgbImage,
}

impl<'a> ImagePair<'a> {
    pub fn new(reference: &'a RgbImage, test: &'a RgbImage) -> Result<Self, MetricsError> {
        if (reference.width(), reference.height()) != (test.width(), test.height()) {
            return Err(MetricsError::ShapeMismatch(reference.width(), reference.height(), test.width(), test.height()));
        }
        Ok(Self { reference, test })
    }

    fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        let sum: f64 = self
            .reference
            .pixels()
            .iter()
            .zip(self.test.pixels())
            .flat_map(|(a, b)| (0..3).map(move |c| a[c] - b[c]))
            .map(f)
            .sum();
        sum / (3 * self.reference.pixels().len()) as f64
    }

    pub fn mse(&self) -> f64 {
        self.mean_of(|d| d * d)
    }
}

/// Mean absolute difference over all pixels and channels.
pub fn l1(pair: &ImagePair) -> f64 {
    pair.mean_of(f64::abs)
}

/// `10 log10(1 / MSE)` in decibels; `+inf` for identical images.
pub fn psnr(pair: &ImagePair) -> f64 {
    let mse = pair.mse();
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// One machine-readable result line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub reference: String,
    pub test: String,
    pub l1: f64,
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
}

impl MetricRecord {
    pub fn compute(reference: &str, test: &str, pair: &ImagePair) -> Self {
        Self { reference: reference.into(), test: test.into(), l1: l1(pair), psnr: psnr(pair) }
    }
}

/// Writes infinite PSNR as the string `"inf"`.
pub fn serialize_db<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    if value.is_infinite() && *value > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*value)
    }
}
