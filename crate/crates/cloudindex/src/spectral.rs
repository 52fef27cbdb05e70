//! Power spectrum estimation from grammage fields, plus rotation and sector
//! averages of the 2D estimate.
//!
//! Conventions, pinned so the discrete conservation law holds exactly:
//! the DFT is the unnormalized forward transform, and the spectrum estimate
//! at the lattice frequency xi_k = (2 pi k1 / (Nx d), 2 pi k2 / (Ny d)) is
//!
//! ```text
//! k_hat(xi_k) = d^2 / (2 pi Nx Ny) * |DFT(f)|^2        [um^2]
//! ```
//!
//! with d the pixel size in um. For a unit-variance field the discrete sum
//! (1/2pi) * sum_k k_hat(xi_k) dxi1 dxi2 is exactly 1. The DC bin is zeroed
//! after estimation (the field has mean zero, so it carries no power anyway).
//! No apodization window is applied; the window area approximation accepts
//! the periodic-extension leakage.
//!
//! Grid layout: row-major with the zero frequency at index (0, 0); column c
//! carries the signed index c for c <= Nx/2 and c - Nx above, and rows do the
//! same for the second axis.

use crate::fft;
use crate::grammage::{GrammageField, MEAN_TOL, STD_TOL};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid grammage field: {0}")]
    InvalidField(String),
    #[error("invalid sector [{lo}, {hi}]: need -pi <= lo < hi <= pi")]
    InvalidSector { lo: f64, hi: f64 },
    #[error("sector [{lo}, {hi}] matches no lattice point")]
    EmptySector { lo: f64, hi: f64 },
}

/// Estimated 2D power spectrum on the FFT frequency lattice.
#[derive(Debug, Clone)]
pub struct PowerSpectrum2D {
    pub(crate) width: usize,
    pub(crate) height: usize,
    /// Circular frequency step per axis, in 1/um.
    pub(crate) freq_step: (f64, f64),
    /// Row-major k_hat values in um^2, zero frequency at index (0, 0).
    pub(crate) values: Vec<f64>,
    pub(crate) dc_zeroed: bool,
}

fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl PowerSpectrum2D {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// (dxi1, dxi2) in 1/um.
    pub fn freq_step(&self) -> (f64, f64) {
        self.freq_step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dc_zeroed(&self) -> bool {
        self.dc_zeroed
    }

    /// Signed circular frequency (xi1, xi2) of the lattice point at
    /// column `c`, row `r`.
    pub fn frequency_at(&self, c: usize, r: usize) -> (f64, f64) {
        (
            signed_index(c, self.width) as f64 * self.freq_step.0,
            signed_index(r, self.height) as f64 * self.freq_step.1,
        )
    }

    pub fn value_at(&self, c: usize, r: usize) -> f64 {
        self.values[r * self.width + c]
    }

    /// Largest lattice radius ||xi_k|| in 1/um.
    pub fn max_radius(&self) -> f64 {
        let x = (self.width / 2) as f64 * self.freq_step.0;
        let y = (self.height / 2) as f64 * self.freq_step.1;
        x.hypot(y)
    }

    /// Discrete analogue of the power conservation integral,
    /// (1/2pi) sum_k k_hat(xi_k) dxi1 dxi2; equals 1 for a unit-variance
    /// field.
    pub fn conservation_sum(&self) -> f64 {
        let cell = self.freq_step.0 * self.freq_step.1;
        crate::grammage::compensated_sum(self.values.iter().copied()) * cell / (2.0 * PI)
    }
}

/// Rotation (or sector) average of a 2D power spectrum on radial bins.
#[derive(Debug, Clone)]
pub struct RadialSpectrum {
    pub(crate) bin_centers: Vec<f64>,
    pub(crate) values: Vec<f64>,
    pub(crate) counts: Vec<usize>,
    pub(crate) sector: Option<(f64, f64)>,
}

impl RadialSpectrum {
    /// Build a radial spectrum from raw parts, checking the invariants
    /// (equal lengths, strictly increasing centers, counts >= 1,
    /// non-negative values).
    pub fn from_parts(
        bin_centers: Vec<f64>,
        values: Vec<f64>,
        counts: Vec<usize>,
        sector: Option<(f64, f64)>,
    ) -> Result<Self, SpectralError> {
        if bin_centers.len() != values.len() || bin_centers.len() != counts.len() {
            return Err(SpectralError::InvalidField(
                "bin_centers, values and counts must have equal lengths".into(),
            ));
        }
        if bin_centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpectralError::InvalidField(
                "bin centers must be strictly increasing".into(),
            ));
        }
        if bin_centers.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(SpectralError::InvalidField(
                "bin centers must be positive and finite".into(),
            ));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(SpectralError::InvalidField(
                "values must be non-negative and finite".into(),
            ));
        }
        if counts.contains(&0) {
            return Err(SpectralError::InvalidField(
                "reported bins must have count >= 1".into(),
            ));
        }
        Ok(Self {
            bin_centers,
            values,
            counts,
            sector,
        })
    }

    /// Bin centers rho in 1/um, strictly increasing.
    pub fn bin_centers(&self) -> &[f64] {
        &self.bin_centers
    }

    /// k_hat_1(rho) in um^2.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Lattice points averaged into each bin.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Angular restriction (phi_lo, phi_hi) when this is a sector average.
    pub fn sector(&self) -> Option<(f64, f64)> {
        self.sector
    }
}

/// Estimate the 2D power spectrum of a normalized grammage field.
pub fn power_spectrum_2d(field: &GrammageField) -> Result<PowerSpectrum2D, SpectralError> {
    let mean = field.mean();
    let std = field.std();
    if mean.abs() >= MEAN_TOL || (std - 1.0).abs() >= STD_TOL {
        return Err(SpectralError::InvalidField(format!(
            "field is not normalized: mean {mean:e}, std {std}"
        )));
    }
    Ok(power_spectrum_2d_unchecked(field))
}

/// Spectrum estimation without the normalization check; used internally and
/// by tests that construct degenerate fields on purpose.
pub(crate) fn power_spectrum_2d_unchecked(field: &GrammageField) -> PowerSpectrum2D {
    let w = field.width();
    let h = field.height();
    let d = field.pixel_size_um();
    let spectrum = fft::forward_real(field.values(), w, h);
    let scale = d * d / (2.0 * PI * (w * h) as f64);
    let mut values: Vec<f64> = spectrum.iter().map(|c| c.norm_sqr() * scale).collect();
    values[0] = 0.0;
    PowerSpectrum2D {
        width: w,
        height: h,
        freq_step: (2.0 * PI / (w as f64 * d), 2.0 * PI / (h as f64 * d)),
        values,
        dc_zeroed: true,
    }
}

/// Per-annulus accumulation with an angular weight function. Weights are in
/// [0, 1]; lattice points with zero weight do not contribute to counts.
pub(crate) struct AnnulusAccum {
    pub bin_width: f64,
    /// Per-bin sum of weight * value.
    pub sums: Vec<f64>,
    /// Per-bin sum of weights.
    pub weights: Vec<f64>,
    /// Per-bin number of contributing lattice points.
    pub counts: Vec<usize>,
}

pub(crate) fn accumulate_annuli(
    ps: &PowerSpectrum2D,
    mut weight_of_angle: impl FnMut(f64) -> f64,
) -> AnnulusAccum {
    let bin_width = ps.freq_step.0.min(ps.freq_step.1);
    let max_bins = (ps.max_radius() / bin_width).ceil() as usize + 2;
    let mut sums = vec![0.0; max_bins];
    let mut weights = vec![0.0; max_bins];
    let mut counts = vec![0usize; max_bins];
    for r in 0..ps.height {
        let xi2 = signed_index(r, ps.height) as f64 * ps.freq_step.1;
        for c in 0..ps.width {
            if r == 0 && c == 0 {
                continue;
            }
            let xi1 = signed_index(c, ps.width) as f64 * ps.freq_step.0;
            let radius = xi1.hypot(xi2);
            let w = weight_of_angle(xi2.atan2(xi1));
            if w > 0.0 {
                let bin = (radius / bin_width) as usize;
                sums[bin] += w * ps.values[r * ps.width + c];
                weights[bin] += w;
                counts[bin] += 1;
            }
        }
    }
    AnnulusAccum {
        bin_width,
        sums,
        weights,
        counts,
    }
}

fn collect_bins(acc: AnnulusAccum, sector: Option<(f64, f64)>) -> RadialSpectrum {
    let mut bin_centers = Vec::new();
    let mut values = Vec::new();
    let mut counts = Vec::new();
    for (i, &count) in acc.counts.iter().enumerate() {
        if count > 0 {
            bin_centers.push((i as f64 + 0.5) * acc.bin_width);
            values.push(acc.sums[i] / acc.weights[i]);
            counts.push(count);
        }
    }
    RadialSpectrum {
        bin_centers,
        values,
        counts,
        sector,
    }
}

/// Rotation average: every non-DC lattice point is assigned to the radial bin
/// containing its radius (bin width = the smaller fundamental frequency of
/// the two axes); bin value is the arithmetic mean over assigned points and
/// empty bins are omitted.
pub fn radial_average(ps: &PowerSpectrum2D) -> RadialSpectrum {
    collect_bins(accumulate_annuli(ps, |_| 1.0), None)
}

/// True when phi or its antipode lies in the closed interval [lo, hi].
fn in_sector_closed(phi: f64, lo: f64, hi: f64) -> bool {
    if phi >= lo && phi <= hi {
        return true;
    }
    let anti = if phi > 0.0 { phi - PI } else { phi + PI };
    anti >= lo && anti <= hi
}

/// Sector-restricted rotation average. A lattice point belongs to the sector
/// when its angle phi = atan2(xi2, xi1), or the antipodal angle phi +- pi,
/// lies in [phi_lo, phi_hi]; both half-planes are included because the
/// spectrum of a real field is point-symmetric.
pub fn sector_average(
    ps: &PowerSpectrum2D,
    phi_lo: f64,
    phi_hi: f64,
) -> Result<RadialSpectrum, SpectralError> {
    if !(-PI..=PI).contains(&phi_lo) || !(-PI..=PI).contains(&phi_hi) || phi_lo >= phi_hi {
        return Err(SpectralError::InvalidSector {
            lo: phi_lo,
            hi: phi_hi,
        });
    }
    let acc = accumulate_annuli(ps, |phi| {
        if in_sector_closed(phi, phi_lo, phi_hi) {
            1.0
        } else {
            0.0
        }
    });
    if acc.counts.iter().all(|&c| c == 0) {
        return Err(SpectralError::EmptySector {
            lo: phi_lo,
            hi: phi_hi,
        });
    }
    Ok(collect_bins(acc, Some((phi_lo, phi_hi))))
}

/// Half-weight membership on [lo, hi): each lattice point carries weight 1/2
/// at its own angle and 1/2 at the antipode, so that sectors partitioning
/// [-pi, pi) split the total power exactly. Used by the directional
/// cloudiness computation.
pub(crate) fn sector_half_weight(phi: f64, lo: f64, hi: f64) -> f64 {
    let canon = if phi >= PI { phi - 2.0 * PI } else { phi };
    let anti = if canon >= 0.0 { canon - PI } else { canon + PI };
    let mut w = 0.0;
    if canon >= lo && canon < hi {
        w += 0.5;
    }
    if anti >= lo && anti < hi {
        w += 0.5;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammage::GrammageField;
    use crate::testutil::white_noise_field;

    fn constant_spectrum(n: usize, c: f64) -> PowerSpectrum2D {
        let mut values = vec![c; n * n];
        values[0] = 0.0;
        PowerSpectrum2D {
            width: n,
            height: n,
            freq_step: (0.1, 0.1),
            values,
            dc_zeroed: true,
        }
    }

    #[test]
    fn white_noise_conservation() {
        let field = white_noise_field(256, 256, 11, 1.0);
        let ps = power_spectrum_2d(&field).unwrap();
        let total = ps.conservation_sum();
        assert!((total - 1.0).abs() < 1e-9, "conservation sum {total}");
        assert!(ps.values().iter().all(|&v| v >= 0.0 && v.is_finite()));
        assert_eq!(ps.value_at(0, 0), 0.0);
    }

    #[test]
    fn pure_cosine_concentrates_in_two_bins() {
        let n = 64;
        let q = 8usize;
        let values: Vec<f64> = (0..n * n)
            .map(|i| {
                let col = i % n;
                2f64.sqrt() * (2.0 * PI * q as f64 * col as f64 / n as f64).cos()
            })
            .collect();
        let field = GrammageField::from_values(n, n, 2.0, values).unwrap();
        let ps = power_spectrum_2d(&field).unwrap();
        assert!((ps.conservation_sum() - 1.0).abs() < 1e-9);
        let peak = ps.value_at(q, 0) + ps.value_at(n - q, 0);
        let total: f64 = ps.values().iter().sum();
        assert!(
            peak / total > 0.999_999,
            "spectral mass outside the cosine bins: {}",
            1.0 - peak / total
        );
        // point symmetry at the peaks
        assert!((ps.value_at(q, 0) - ps.value_at(n - q, 0)).abs() <= 1e-12 * ps.value_at(q, 0));
    }

    #[test]
    fn zero_field_gives_zero_spectrum() {
        // hypothetical input that bypasses the normalization invariants
        let field = GrammageField::new_unchecked(8, 8, 1.0, vec![0.0; 64]);
        let ps = power_spectrum_2d_unchecked(&field);
        assert!(ps.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_normalized_field_rejected() {
        let field = GrammageField::new_unchecked(8, 8, 1.0, vec![3.0; 64]);
        assert!(matches!(
            power_spectrum_2d(&field),
            Err(SpectralError::InvalidField(_))
        ));
    }

    #[test]
    fn point_symmetry() {
        let field = white_noise_field(24, 18, 3, 2.5);
        let ps = power_spectrum_2d(&field).unwrap();
        for r in 0..18 {
            for c in 0..24 {
                let rc = (24 - c) % 24;
                let rr = (18 - r) % 18;
                let a = ps.value_at(c, r);
                let b = ps.value_at(rc, rr);
                assert!(
                    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300),
                    "asymmetry at ({c},{r}): {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn radial_average_of_constant_spectrum() {
        let ps = constant_spectrum(16, 3.25);
        let rs = radial_average(&ps);
        assert!(!rs.bin_centers().is_empty());
        for &v in rs.values() {
            assert!((v - 3.25).abs() < 1e-12);
        }
        let total_points: usize = rs.counts().iter().sum();
        assert_eq!(total_points, 16 * 16 - 1);
    }

    #[test]
    fn single_point_bin_mean() {
        let n = 16;
        let mut ps = constant_spectrum(n, 0.0);
        // place value v at lattice index (3, 0): radius 3 * dxi
        let v = 7.0;
        ps.values[3] = v;
        let rs = radial_average(&ps);
        // find the bin containing radius 0.3 (bin width 0.1, bin index 3)
        let idx = rs
            .bin_centers()
            .iter()
            .position(|&c| (c - 0.35).abs() < 1e-12)
            .expect("bin at center 0.35");
        let count = rs.counts()[idx] as f64;
        assert!((rs.values()[idx] - v / count).abs() < 1e-12);
    }

    #[test]
    fn full_sector_equals_rotation_average() {
        let field = white_noise_field(32, 32, 5, 1.0);
        let ps = power_spectrum_2d(&field).unwrap();
        let full = radial_average(&ps);
        let sector = sector_average(&ps, -PI, PI).unwrap();
        assert_eq!(full.bin_centers(), sector.bin_centers());
        for (a, b) in full.values().iter().zip(sector.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(sector.sector(), Some((-PI, PI)));
    }

    #[test]
    fn axis_point_sector_membership() {
        let n = 16;
        let mut ps = constant_spectrum(n, 0.0);
        ps.values[2] = 5.0; // on the positive xi1 axis, angle 0
        let near_axis = sector_average(&ps, -PI / 4.0, PI / 4.0).unwrap();
        assert!(near_axis.values().iter().any(|&v| v > 0.0));
        // by point symmetry the negative-axis sector also sees it
        let opposite = sector_average(&ps, 3.0 * PI / 4.0, PI).unwrap();
        assert!(opposite.values().iter().any(|&v| v > 0.0));
        // a perpendicular sector excludes it
        match sector_average(&ps, PI / 4.0 + 1e-9, PI / 2.0) {
            Ok(rs) => assert!(rs.values().iter().all(|&v| v == 0.0)),
            Err(SpectralError::EmptySector { .. }) => {}
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn empty_sector_reported() {
        let ps = constant_spectrum(4, 1.0);
        // no lattice angle of a 4x4 grid falls in [0.1, 0.2] or its antipode
        assert!(matches!(
            sector_average(&ps, 0.1, 0.2),
            Err(SpectralError::EmptySector { .. })
        ));
    }

    #[test]
    fn invalid_sector_rejected() {
        let ps = constant_spectrum(4, 1.0);
        assert!(matches!(
            sector_average(&ps, 0.5, 0.5),
            Err(SpectralError::InvalidSector { .. })
        ));
        assert!(matches!(
            sector_average(&ps, -4.0, 0.0),
            Err(SpectralError::InvalidSector { .. })
        ));
    }

    #[test]
    fn half_weights_partition_to_one() {
        for &phi in &[0.0, 0.3, PI / 4.0, -2.9, PI, -PI, 1.58] {
            let w1 = sector_half_weight(phi, -PI, 0.0);
            let w2 = sector_half_weight(phi, 0.0, PI);
            assert!(
                ((w1 + w2) - 1.0).abs() < 1e-15,
                "phi {phi}: {w1} + {w2} != 1"
            );
        }
    }
}
