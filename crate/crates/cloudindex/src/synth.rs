//! Synthetic nonwoven grammage fields from a Poisson segment process.
//!
//! Segment start points form a homogeneous Poisson point field on the
//! analysis window extended on all sides by the 99.9th percentile of the
//! length distribution plus the fiber radius (plus-sampling, so edge
//! effects from fibers starting outside the window are negligible).
//! Directions are uniform on [0, pi), lengths exponential with mean
//! 1/lambda. Each segment is rasterized as a Bresenham line carrying unit
//! mass per unit length, the deposit grid is convolved once with the
//! discretized disk kernel of radius R (renormalized to unit sum), and the
//! result is normalized to mean 0 / std 1.
//!
//! Randomness: ChaCha12 seeded from the configured 64-bit seed; per segment
//! the draw order is x, y, angle, length. Runs are deterministic for a
//! given seed on one platform; cross-platform bit-equality is not
//! contractual. Rasterization accumulates per-segment deposits in list
//! order, so results do not depend on thread scheduling.

use crate::grammage::{mean_and_std, GrammageField};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Exp, Poisson};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("discretized disk kernel covers only {pixels} pixels (< 5); decrease the pixel size")]
    KernelTooSmall { pixels: usize },
    #[error("rasterized field has zero variance (no segment mass hit the window)")]
    DegenerateField,
}

/// A straight fiber core.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Start point in um, relative to the window origin.
    pub start: (f64, f64),
    /// Direction in [0, pi).
    pub angle: f64,
    /// Length in um.
    pub length: f64,
}

/// Configuration of the segment-process simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Analysis window (width, height) in um.
    pub window_um: (f64, f64),
    /// Raster grid (columns, rows); pixels must be square and no larger
    /// than the fiber radius.
    pub grid: (usize, usize),
    /// Mean number of segments per mm^2.
    pub curves_per_mm2: f64,
    /// Inverse mean segment length, 1/mm.
    pub lambda_per_mm: f64,
    /// Fiber radius in um.
    pub radius_um: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(
        window_um: (f64, f64),
        grid: (usize, usize),
        curves_per_mm2: f64,
        lambda_per_mm: f64,
        radius_um: f64,
        seed: u64,
    ) -> Result<Self, SynthError> {
        let cfg = Self {
            window_um,
            grid,
            curves_per_mm2,
            lambda_per_mm,
            radius_um,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.window_um.0 > 0.0) || !(self.window_um.1 > 0.0) {
            return Err(SynthError::InvalidConfig("window must be positive".into()));
        }
        if self.grid.0 < 2 || self.grid.1 < 2 {
            return Err(SynthError::InvalidConfig(
                "grid must be at least 2x2".into(),
            ));
        }
        if !(self.curves_per_mm2 > 0.0) || !(self.lambda_per_mm > 0.0) || !(self.radius_um > 0.0) {
            return Err(SynthError::InvalidConfig(
                "N_A, lambda and R must be positive".into(),
            ));
        }
        let px = self.window_um.0 / self.grid.0 as f64;
        let py = self.window_um.1 / self.grid.1 as f64;
        if (px - py).abs() > 1e-9 * px {
            return Err(SynthError::InvalidConfig(format!(
                "pixels must be square, got {px} x {py} um"
            )));
        }
        if px > self.radius_um {
            return Err(SynthError::InvalidConfig(format!(
                "pixel size {px} um does not resolve the fiber radius {} um",
                self.radius_um
            )));
        }
        Ok(())
    }

    pub fn pixel_size_um(&self) -> f64 {
        self.window_um.0 / self.grid.0 as f64
    }

    /// Mean segment length in um.
    pub fn mean_length_um(&self) -> f64 {
        1000.0 / self.lambda_per_mm
    }

    /// Window extension on each side: 99.9th length percentile plus R.
    pub fn extension_um(&self) -> f64 {
        1000f64.ln() * self.mean_length_um() + self.radius_um
    }

    /// Expected segment count on the extended window.
    pub fn expected_count(&self) -> f64 {
        let ext = self.extension_um();
        let w = self.window_um.0 + 2.0 * ext;
        let h = self.window_um.1 + 2.0 * ext;
        self.curves_per_mm2 * w * h / 1e6
    }
}

/// Draw the Poisson segment system on the extended window. Deterministic
/// for a given seed; an unlucky zero draw yields an empty list.
pub fn sample_fiber_system(cfg: &SynthConfig) -> Result<Vec<Segment>, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let ext = cfg.extension_um();
    let x_range = -ext..cfg.window_um.0 + ext;
    let y_range = -ext..cfg.window_um.1 + ext;
    let mean = cfg.expected_count();
    let count = Poisson::new(mean)
        .map_err(|e| SynthError::InvalidConfig(format!("invalid Poisson mean {mean}: {e}")))?
        .sample(&mut rng) as u64;
    let rate_per_um = cfg.lambda_per_mm / 1000.0;
    let lengths = Exp::new(rate_per_um)
        .map_err(|e| SynthError::InvalidConfig(format!("invalid rate {rate_per_um}: {e}")))?;
    let mut segments = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let x = rng.random_range(x_range.clone());
        let y = rng.random_range(y_range.clone());
        let angle = rng.random_range(0.0..PI);
        let length = lengths.sample(&mut rng);
        segments.push(Segment {
            start: (x, y),
            angle,
            length,
        });
    }
    Ok(segments)
}

/// Discretized disk kernel: per-pixel weights proportional to the overlap
/// area of the disk with each pixel (supersampled), renormalized to unit
/// sum. Area weighting keeps the kernel's transfer function close to the
/// continuous disk's out to high frequencies.
fn disk_kernel(radius_um: f64, pixel_um: f64) -> Result<Vec<(i64, i64, f64)>, SynthError> {
    let reach = (radius_um / pixel_um).ceil() as i64;
    let sub = 16;
    let mut kernel = Vec::new();
    let mut total = 0.0;
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let mut covered = 0usize;
            for sy in 0..sub {
                for sx in 0..sub {
                    let x = (dx as f64 - 0.5 + (sx as f64 + 0.5) / sub as f64) * pixel_um;
                    let y = (dy as f64 - 0.5 + (sy as f64 + 0.5) / sub as f64) * pixel_um;
                    if x * x + y * y <= radius_um * radius_um {
                        covered += 1;
                    }
                }
            }
            if covered > 0 {
                let w = covered as f64 / (sub * sub) as f64;
                kernel.push((dx, dy, w));
                total += w;
            }
        }
    }
    if kernel.len() < 5 {
        return Err(SynthError::KernelTooSmall {
            pixels: kernel.len(),
        });
    }
    for entry in kernel.iter_mut() {
        entry.2 /= total;
    }
    Ok(kernel)
}

/// Rasterize the segment system onto the window grid: Bresenham lines with
/// total mass equal to the segment length (in um), then one convolution
/// with the unit-sum disk kernel. Returns the raw weight grid (mass per
/// pixel), row-major.
pub fn rasterize_fiber_field(
    segments: &[Segment],
    cfg: &SynthConfig,
) -> Result<Vec<f64>, SynthError> {
    cfg.validate()?;
    let (nx, ny) = cfg.grid;
    let px = cfg.pixel_size_um();
    let kernel = disk_kernel(cfg.radius_um, px)?;
    let pad = (cfg.radius_um / px).ceil() as i64;
    let dep_w = nx as i64 + 2 * pad;
    let dep_h = ny as i64 + 2 * pad;
    let mut deposit = vec![0.0f64; (dep_w * dep_h) as usize];

    for seg in segments {
        let (x0, y0) = seg.start;
        let x1 = x0 + seg.length * seg.angle.cos();
        let y1 = y0 + seg.length * seg.angle.sin();
        // quick reject when the segment cannot reach the padded grid
        let margin = cfg.radius_um + px;
        if x0.max(x1) < -margin
            || x0.min(x1) > cfg.window_um.0 + margin
            || y0.max(y1) < -margin
            || y0.min(y1) > cfg.window_um.1 + margin
        {
            continue;
        }
        let ix0 = (x0 / px).floor() as i64;
        let iy0 = (y0 / px).floor() as i64;
        let ix1 = (x1 / px).floor() as i64;
        let iy1 = (y1 / px).floor() as i64;
        let steps = (ix1 - ix0).abs().max((iy1 - iy0).abs()) + 1;
        let mass = seg.length / steps as f64;

        // Bresenham walk
        let dx = (ix1 - ix0).abs();
        let sx = if ix0 < ix1 { 1 } else { -1 };
        let dy = -(iy1 - iy0).abs();
        let sy = if iy0 < iy1 { 1 } else { -1 };
        let mut err = dx + dy;
        let (mut cx, mut cy) = (ix0, iy0);
        loop {
            let gx = cx + pad;
            let gy = cy + pad;
            if gx >= 0 && gx < dep_w && gy >= 0 && gy < dep_h {
                deposit[(gy * dep_w + gx) as usize] += mass;
            }
            if cx == ix1 && cy == iy1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                cx += sx;
            }
            if e2 <= dx {
                err += dx;
                cy += sy;
            }
        }
    }

    // single convolution with the shared disk kernel
    let mut grid = vec![0.0f64; nx * ny];
    for y in 0..ny as i64 {
        for x in 0..nx as i64 {
            let mut acc = 0.0;
            for &(dx, dy, w) in &kernel {
                let gx = x + dx + pad;
                let gy = y + dy + pad;
                acc += w * deposit[(gy * dep_w + gx) as usize];
            }
            grid[(y * nx as i64 + x) as usize] = acc;
        }
    }
    Ok(grid)
}

/// Generate a synthetic nonwoven grammage field: sample, rasterize,
/// normalize to mean 0 / std 1.
pub fn synth_nonwoven(cfg: &SynthConfig) -> Result<GrammageField, SynthError> {
    let segments = sample_fiber_system(cfg)?;
    let raw = rasterize_fiber_field(&segments, cfg)?;
    let (mu, sigma) = mean_and_std(&raw);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SynthError::DegenerateField);
    }
    let values = raw.iter().map(|v| (v - mu) / sigma).collect();
    Ok(GrammageField::new_unchecked(
        cfg.grid.0,
        cfg.grid.1,
        cfg.pixel_size_um(),
        values,
    ))
}
