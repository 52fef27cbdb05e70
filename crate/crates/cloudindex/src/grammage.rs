//! Gray-tone transmission images and normalized local grammage fields.
//!
//! A transmission image with strictly positive pixel values g(x) is mapped to
//! the normalized local grammage f(x) = (mu - ln g(x)) / sigma, where mu and
//! sigma are the mean and population standard deviation of ln g over the
//! image. The result has mean 0 and standard deviation 1 by construction;
//! brighter pixels (less material) map to smaller f. Several fields taken at
//! disjoint positions can be reduced with [`pixelwise_mean`] before a single
//! spectrum estimation.

use thiserror::Error;

/// Absolute tolerance on the empirical mean of a normalized field.
pub const MEAN_TOL: f64 = 1e-9;
/// Relative tolerance on the empirical standard deviation of a normalized field.
pub const STD_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GrammageError {
    #[error("pixel ({x}, {y}) has non-positive value {value}; transmission images must be positive everywhere")]
    NonPositivePixel { x: usize, y: usize, value: f64 },
    #[error("image has zero variance under ln; normalization is undefined")]
    ZeroVariance,
    #[error("input list is empty")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected_width}x{expected_height} at {expected_pixel_size_um} um/px, got {width}x{height} at {pixel_size_um} um/px")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        expected_pixel_size_um: f64,
        width: usize,
        height: usize,
        pixel_size_um: f64,
    },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("field violates normalization invariants: mean {mean:e}, std {std}")]
    NotNormalized { mean: f64, std: f64 },
}

/// Neumaier compensated summation.
pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and population standard deviation (divide by N) in two passes.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|v| {
        let d = v - mean;
        d * d
    })) / n;
    (mean, var.sqrt())
}

/// A gray-tone transmission image with square pixels of known physical size.
#[derive(Debug, Clone)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixel_size_um: f64,
    values: Vec<f64>,
    max_value: f64,
}

impl GrayImage {
    /// Build an image from row-major intensity values. `max_value` is the
    /// largest representable value of the source format (255 or 65535 for
    /// 8/16-bit data); pixels equal to it are counted as saturated.
    pub fn new(
        width: usize,
        height: usize,
        pixel_size_um: f64,
        values: Vec<f64>,
        max_value: f64,
    ) -> Result<Self, GrammageError> {
        if width < 2 || height < 2 {
            return Err(GrammageError::InvalidImage(format!(
                "image must be at least 2x2, got {width}x{height}"
            )));
        }
        if !(pixel_size_um > 0.0) || !pixel_size_um.is_finite() {
            return Err(GrammageError::InvalidImage(format!(
                "pixel size must be positive and finite, got {pixel_size_um}"
            )));
        }
        if values.len() != width * height {
            return Err(GrammageError::InvalidImage(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(GrammageError::InvalidImage(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            pixel_size_um,
            values,
            max_value,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_size_um(&self) -> f64 {
        self.pixel_size_um
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    /// Number of pixels at the maximum representable value (possible
    /// overexposure; reported as a warning count, not an error).
    pub fn saturated_pixels(&self) -> usize {
        self.values.iter().filter(|&&v| v >= self.max_value).count()
    }
}

/// A normalized local grammage field: mean 0, standard deviation 1
/// (population convention), with square pixels of known physical size.
#[derive(Debug, Clone)]
pub struct GrammageField {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) pixel_size_um: f64,
    pub(crate) values: Vec<f64>,
}

impl GrammageField {
    /// Build a field from row-major values, checking the normalization
    /// invariants (|mean| < 1e-9, |std - 1| < 1e-9).
    pub fn from_values(
        width: usize,
        height: usize,
        pixel_size_um: f64,
        values: Vec<f64>,
    ) -> Result<Self, GrammageError> {
        if width < 2 || height < 2 || values.len() != width * height {
            return Err(GrammageError::InvalidImage(format!(
                "bad field shape {width}x{height} with {} values",
                values.len()
            )));
        }
        if !(pixel_size_um > 0.0) || !pixel_size_um.is_finite() {
            return Err(GrammageError::InvalidImage(format!(
                "pixel size must be positive and finite, got {pixel_size_um}"
            )));
        }
        let (mean, std) = mean_and_std(&values);
        if mean.abs() >= MEAN_TOL || (std - 1.0).abs() >= STD_TOL {
            return Err(GrammageError::NotNormalized { mean, std });
        }
        Ok(Self {
            width,
            height,
            pixel_size_um,
            values,
        })
    }

    pub(crate) fn new_unchecked(
        width: usize,
        height: usize,
        pixel_size_um: f64,
        values: Vec<f64>,
    ) -> Self {
        Self {
            width,
            height,
            pixel_size_um,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_size_um(&self) -> f64 {
        self.pixel_size_um
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn mean(&self) -> f64 {
        mean_and_std(&self.values).0
    }

    pub fn std(&self) -> f64 {
        mean_and_std(&self.values).1
    }
}

/// Convert a gray-tone image into a normalized local grammage field via
/// f(x) = (mu - ln g(x)) / sigma.
pub fn normalize_grammage(img: &GrayImage) -> Result<GrammageField, GrammageError> {
    for (i, &v) in img.values.iter().enumerate() {
        if v <= 0.0 {
            return Err(GrammageError::NonPositivePixel {
                x: i % img.width,
                y: i / img.width,
                value: v,
            });
        }
    }
    let logs: Vec<f64> = img.values.iter().map(|v| v.ln()).collect();
    let (mu, sigma) = mean_and_std(&logs);
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(GrammageError::ZeroVariance);
    }
    let values = logs.iter().map(|&l| (mu - l) / sigma).collect();
    Ok(GrammageField::new_unchecked(
        img.width,
        img.height,
        img.pixel_size_um,
        values,
    ))
}

/// Per-pixel arithmetic mean of several fields taken at disjoint positions,
/// re-normalized to mean 0 / std 1 so the downstream estimator keeps its
/// unit-variance assumption.
pub fn pixelwise_mean(fields: &[GrammageField]) -> Result<GrammageField, GrammageError> {
    let first = fields.first().ok_or(GrammageError::EmptyInput)?;
    for f in &fields[1..] {
        if f.width != first.width
            || f.height != first.height
            || f.pixel_size_um != first.pixel_size_um
        {
            return Err(GrammageError::DimensionMismatch {
                expected_width: first.width,
                expected_height: first.height,
                expected_pixel_size_um: first.pixel_size_um,
                width: f.width,
                height: f.height,
                pixel_size_um: f.pixel_size_um,
            });
        }
    }
    if fields.len() == 1 {
        return Ok(first.clone());
    }
    let n = fields.len() as f64;
    let mut mean: Vec<f64> = vec![0.0; first.values.len()];
    for f in fields {
        for (m, v) in mean.iter_mut().zip(&f.values) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let (mu, sigma) = mean_and_std(&mean);
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(GrammageError::ZeroVariance);
    }
    for m in mean.iter_mut() {
        *m = (*m - mu) / sigma;
    }
    Ok(GrammageField::new_unchecked(
        first.width,
        first.height,
        first.pixel_size_um,
        mean,
    ))
}
