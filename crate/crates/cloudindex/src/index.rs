//! Cloudiness index, directional cloudiness, and range of interaction.
//!
//! The cloudiness index is the total power of the normalized grammage in a
//! circular-frequency band [rho0, rho1]: CLI = int rho k_hat_1(rho) drho,
//! a number in [0, 1] by the power conservation law, reported in percent.
//! The band has to be inside the estimable range set by the field of view
//! and the lateral resolution. The range of interaction is the integral of
//! the correlation function, RI = 2 pi k_hat_1(0); it is computed from
//! fitted model parameters only, never by extrapolating the raw spectrum
//! to zero frequency.

use crate::model::BesselModelParams;
use crate::spectral::{
    accumulate_annuli, sector_half_weight, PowerSpectrum2D, RadialSpectrum, SpectralError,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("band [{rho0}, {rho1}] 1/um outside the estimable range [{min}, {max}] 1/um")]
    BandOutOfRange {
        rho0: f64,
        rho1: f64,
        min: f64,
        max: f64,
    },
    #[error("need at least 2 spectrum bins intersecting the band, found {found}")]
    InsufficientBins { found: usize },
    #[error("sectors [{lo_a}, {hi_a}] and [{lo_b}, {hi_b}] overlap")]
    OverlappingSectors {
        lo_a: f64,
        hi_a: f64,
        lo_b: f64,
        hi_b: f64,
    },
    #[error(
        "band power {percent}% exceeds the conservation bounds by more than 0.1 percentage points"
    )]
    BoundExceeded { percent: f64 },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// A circular-frequency band [rho0, rho1] in 1/um, 0 < rho0 <= rho1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    rho0_per_um: f64,
    rho1_per_um: f64,
}

impl FrequencyBand {
    pub fn new(rho0_per_um: f64, rho1_per_um: f64) -> Result<Self, IndexError> {
        if !(rho0_per_um > 0.0)
            || !rho0_per_um.is_finite()
            || !rho1_per_um.is_finite()
            || rho0_per_um > rho1_per_um
        {
            return Err(IndexError::InvalidBand(format!(
                "need 0 < rho0 <= rho1, got [{rho0_per_um}, {rho1_per_um}]"
            )));
        }
        Ok(Self {
            rho0_per_um,
            rho1_per_um,
        })
    }

    pub fn from_per_mm(rho0_per_mm: f64, rho1_per_mm: f64) -> Result<Self, IndexError> {
        Self::new(rho0_per_mm / 1000.0, rho1_per_mm / 1000.0)
    }

    /// The default medium-frequency band [0.02, 0.10] 1/um; the right band is
    /// application-specific and should normally be configured.
    pub fn default_band() -> Self {
        Self {
            rho0_per_um: 0.02,
            rho1_per_um: 0.10,
        }
    }

    pub fn rho0_per_um(&self) -> f64 {
        self.rho0_per_um
    }

    pub fn rho1_per_um(&self) -> f64 {
        self.rho1_per_um
    }

    /// Wavelengths 2 pi / rho corresponding to the band edges, (min, max) um.
    pub fn wavelengths_um(&self) -> (f64, f64) {
        (2.0 * PI / self.rho1_per_um, 2.0 * PI / self.rho0_per_um)
    }
}

/// Integral of the piecewise-linear interpolant of (xs, ys) over [a, b],
/// where xs are strictly increasing nodes covering [a, b].
fn piecewise_linear_integral(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..xs.len() - 1 {
        let (x0, x1) = (xs[i], xs[i + 1]);
        let lo = x0.max(a);
        let hi = x1.min(b);
        if lo >= hi {
            continue;
        }
        let slope = (ys[i + 1] - ys[i]) / (x1 - x0);
        let y_lo = ys[i] + slope * (lo - x0);
        let y_hi = ys[i] + slope * (hi - x0);
        total += 0.5 * (y_lo + y_hi) * (hi - lo);
    }
    total
}

/// Shared band-power integration on radial bins; returns percent.
fn band_power_percent(
    centers: &[f64],
    values: &[f64],
    band: &FrequencyBand,
) -> Result<f64, IndexError> {
    let (a, b) = (band.rho0_per_um, band.rho1_per_um);
    let min = *centers
        .first()
        .ok_or(IndexError::InsufficientBins { found: 0 })?;
    let max = *centers.last().unwrap();
    if a < min || b > max {
        return Err(IndexError::BandOutOfRange {
            rho0: a,
            rho1: b,
            min,
            max,
        });
    }
    if a == b {
        return Ok(0.0);
    }
    let found = centers.iter().filter(|&&c| c >= a && c <= b).count();
    if found < 2 {
        return Err(IndexError::InsufficientBins { found });
    }
    let integrand: Vec<f64> = centers.iter().zip(values).map(|(&r, &k)| r * k).collect();
    let percent = 100.0 * piecewise_linear_integral(centers, &integrand, a, b);
    if !(-0.1..=100.1).contains(&percent) {
        return Err(IndexError::BoundExceeded { percent });
    }
    Ok(percent.clamp(0.0, 100.0))
}

/// Cloudiness index: trapezoidal integral of rho * k_hat_1(rho) over the
/// band, on the sampled bins with linearly interpolated end segments,
/// in percent.
pub fn cloudiness_index(rs: &RadialSpectrum, band: &FrequencyBand) -> Result<f64, IndexError> {
    band_power_percent(rs.bin_centers(), rs.values(), band)
}

/// Cloudiness per angular sector. Each lattice point carries half weight at
/// its own angle and half at the antipode (the spectrum is point-symmetric),
/// and sector membership is evaluated on half-open intervals [lo, hi), so
/// the sector indices of any disjoint partition of [-pi, pi) sum exactly to
/// the full-band index.
pub fn directional_cloudiness(
    ps: &PowerSpectrum2D,
    sectors: &[(f64, f64)],
    band: &FrequencyBand,
) -> Result<Vec<f64>, IndexError> {
    for &(lo, hi) in sectors {
        if !(-PI..=PI).contains(&lo) || !(-PI..=PI).contains(&hi) || lo >= hi {
            return Err(IndexError::Spectral(SpectralError::InvalidSector {
                lo,
                hi,
            }));
        }
    }
    let mut sorted: Vec<(f64, f64)> = sectors.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for pair in sorted.windows(2) {
        if pair[0].1 > pair[1].0 {
            return Err(IndexError::OverlappingSectors {
                lo_a: pair[0].0,
                hi_a: pair[0].1,
                lo_b: pair[1].0,
                hi_b: pair[1].1,
            });
        }
    }

    let full = accumulate_annuli(ps, |_| 1.0);
    let mut centers = Vec::new();
    let mut occupied = Vec::new();
    for (i, &count) in full.counts.iter().enumerate() {
        if count > 0 {
            centers.push((i as f64 + 0.5) * full.bin_width);
            occupied.push(i);
        }
    }

    let mut result = Vec::with_capacity(sectors.len());
    for &(lo, hi) in sectors {
        let acc = accumulate_annuli(ps, |phi| sector_half_weight(phi, lo, hi));
        if acc.weights.iter().all(|&w| w == 0.0) {
            return Err(IndexError::Spectral(SpectralError::EmptySector { lo, hi }));
        }
        // the sector's share of each annulus mean: sum of weighted values
        // over the number of lattice points in the full annulus
        let values: Vec<f64> = occupied
            .iter()
            .map(|&i| acc.sums[i] / full.counts[i] as f64)
            .collect();
        result.push(band_power_percent(&centers, &values, band)?);
    }
    Ok(result)
}

/// Range of interaction RI = 2 pi k_hat_1(0) = 4 pi nu / lambda^2, in mm^2,
/// from fitted model parameters.
pub fn range_of_interaction(model: &BesselModelParams) -> Result<f64, IndexError> {
    if !(model.lambda_per_mm > 0.0) || !(model.nu > 0.0) {
        return Err(IndexError::InvalidParams(format!(
            "need lambda > 0 and nu > 0, got lambda = {}, nu = {}",
            model.lambda_per_mm, model.nu
        )));
    }
    Ok(4.0 * PI * model.nu / (model.lambda_per_mm * model.lambda_per_mm))
}

/// Cloudiness per sector as serialized in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorCli {
    pub phi_lo_rad: f64,
    pub phi_hi_rad: f64,
    pub cli_percent: f64,
}

/// Fitted model block of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub lambda_per_mm: f64,
    pub nu: f64,
    pub fit_residual: Option<f64>,
    pub stderr_lambda_per_mm: Option<f64>,
    pub stderr_nu: Option<f64>,
}

/// DoG pyramid level energy entry of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MspEntry {
    pub j: i32,
    pub value_permille: f64,
}

/// Provenance of the analyzed inputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InputProvenance {
    pub files: Vec<String>,
    pub pixel_size_um: f64,
    pub image_count: usize,
    pub width_px: usize,
    pub height_px: usize,
    pub saturated_pixels: usize,
}

/// Complete analysis result; serializes to the report JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudinessReport {
    pub cli_percent: f64,
    pub band_rho0_per_um: f64,
    pub band_rho1_per_um: f64,
    /// Wavelength 2 pi / rho1 of the upper band edge, um.
    pub band_wavelength_min_um: f64,
    /// Wavelength 2 pi / rho0 of the lower band edge, um.
    pub band_wavelength_max_um: f64,
    pub sectors: Vec<SectorCli>,
    pub ri_mm2: Option<f64>,
    pub model: Option<ModelReport>,
    pub msp: Vec<MspEntry>,
    pub inputs: InputProvenance,
}

impl CloudinessReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bessel_spectrum_um2, BesselModelParams};
    use crate::spectral::{power_spectrum_2d, radial_average};
    use crate::testutil::white_noise_field;

    /// Radial spectrum sampled exactly from the model, at a bin spacing
    /// matching a 2048-pixel image at 6.734 um/px.
    fn model_spectrum_bins(lambda_per_mm: f64, nu: f64, n_bins: usize) -> RadialSpectrum {
        let p = BesselModelParams::new(lambda_per_mm, nu).unwrap();
        let step = 2.0 * PI / (2048.0 * 6.734);
        let centers: Vec<f64> = (1..=n_bins).map(|i| (i as f64 + 0.5) * step).collect();
        let values: Vec<f64> = centers
            .iter()
            .map(|&r| bessel_spectrum_um2(r, &p).unwrap())
            .collect();
        let counts = vec![1usize; n_bins];
        RadialSpectrum::from_parts(centers, values, counts, None).unwrap()
    }

    #[test]
    fn zero_width_band_is_zero() {
        let rs = model_spectrum_bins(6.4, 0.231, 400);
        let band = FrequencyBand::new(0.05, 0.05).unwrap();
        assert_eq!(cloudiness_index(&rs, &band).unwrap(), 0.0);
    }

    #[test]
    fn table_parameters_reproduce_published_cli() {
        let band = FrequencyBand::new(0.02, 0.10).unwrap();
        for &(lam, nu, expected) in &[
            (6.4, 0.231, 29.7),
            (11.41, 0.226, 35.4),
            (15.0, 0.253, 39.1),
        ] {
            let rs = model_spectrum_bins(lam, nu, 400);
            let cli = cloudiness_index(&rs, &band).unwrap();
            assert!(
                (cli - expected).abs() < 0.2,
                "lambda {lam}: CLI {cli} vs {expected}"
            );
        }
    }

    #[test]
    fn band_monotonicity() {
        let rs = model_spectrum_bins(6.4, 0.231, 400);
        let narrow = cloudiness_index(&rs, &FrequencyBand::new(0.03, 0.08).unwrap()).unwrap();
        let wide = cloudiness_index(&rs, &FrequencyBand::new(0.02, 0.10).unwrap()).unwrap();
        assert!(wide >= narrow);
    }

    #[test]
    fn band_out_of_range() {
        let rs = model_spectrum_bins(6.4, 0.231, 100);
        let high = FrequencyBand::new(0.02, 10.0).unwrap();
        assert!(matches!(
            cloudiness_index(&rs, &high),
            Err(IndexError::BandOutOfRange { .. })
        ));
        let low = FrequencyBand::new(1e-6, 0.01).unwrap();
        assert!(matches!(
            cloudiness_index(&rs, &low),
            Err(IndexError::BandOutOfRange { .. })
        ));
    }

    #[test]
    fn insufficient_bins() {
        let rs = model_spectrum_bins(6.4, 0.231, 100);
        // a band narrower than one bin spacing that still lies inside range
        let c = rs.bin_centers()[50];
        let band = FrequencyBand::new(c + 1e-9, c + 2e-9).unwrap();
        assert!(matches!(
            cloudiness_index(&rs, &band),
            Err(IndexError::InsufficientBins { .. })
        ));
    }

    #[test]
    fn full_band_bounded_by_conservation() {
        // estimable band: inverse image diagonal up to twice the inverse
        // pixel size (inside the inscribed lattice circle)
        let field = white_noise_field(128, 128, 21, 1.0);
        let ps = power_spectrum_2d(&field).unwrap();
        let rs = radial_average(&ps);
        let band = FrequencyBand::new(rs.bin_centers()[0], 2.0).unwrap();
        let cli = cloudiness_index(&rs, &band).unwrap();
        assert!((0.0..=100.0).contains(&cli));

        // a model spectrum sampled over its whole bin range stays bounded too
        let rs = model_spectrum_bins(6.4, 0.231, 3000);
        let band =
            FrequencyBand::new(rs.bin_centers()[0], *rs.bin_centers().last().unwrap()).unwrap();
        let cli = cloudiness_index(&rs, &band).unwrap();
        assert!((0.0..=100.0).contains(&cli));
    }

    #[test]
    fn single_full_sector_equals_rotation_average() {
        let field = white_noise_field(96, 96, 4, 1.0);
        let ps = power_spectrum_2d(&field).unwrap();
        let rs = radial_average(&ps);
        let band = FrequencyBand::new(0.2, 1.8).unwrap();
        let full = cloudiness_index(&rs, &band).unwrap();
        let sectors = directional_cloudiness(&ps, &[(-PI, PI)], &band).unwrap();
        assert!((sectors[0] - full).abs() < 1e-9, "{} vs {full}", sectors[0]);
    }

    #[test]
    fn partition_sums_to_full_cli() {
        let field = white_noise_field(96, 96, 9, 1.0);
        let ps = power_spectrum_2d(&field).unwrap();
        let rs = radial_average(&ps);
        let band = FrequencyBand::new(0.2, 1.8).unwrap();
        let full = cloudiness_index(&rs, &band).unwrap();
        let quads = [
            (-PI, -PI / 2.0),
            (-PI / 2.0, 0.0),
            (0.0, PI / 2.0),
            (PI / 2.0, PI),
        ];
        let clis = directional_cloudiness(&ps, &quads, &band).unwrap();
        let sum: f64 = clis.iter().sum();
        assert!((sum - full).abs() < 1e-9, "partition sum {sum} vs {full}");
    }

    #[test]
    fn isotropic_half_sectors_split_evenly() {
        // constant spectrum is exactly isotropic, so two half-sectors carry
        // exactly half of the full band power each
        let field = white_noise_field(64, 64, 2, 1.0);
        let ps = power_spectrum_2d(&field).unwrap();
        let mut iso = ps.clone();
        for v in iso.values.iter_mut() {
            *v = 0.04;
        }
        iso.values[0] = 0.0;
        let band = FrequencyBand::new(0.3, 2.5).unwrap();
        let full = cloudiness_index(&radial_average(&iso), &band).unwrap();
        let halves = directional_cloudiness(&iso, &[(-PI, 0.0), (0.0, PI)], &band).unwrap();
        for h in &halves {
            assert!((h - full / 2.0).abs() < 1e-9, "{h} vs {}", full / 2.0);
        }
    }

    #[test]
    fn overlapping_sectors_rejected() {
        let field = white_noise_field(32, 32, 2, 1.0);
        let ps = power_spectrum_2d(&field).unwrap();
        let band = FrequencyBand::new(0.5, 2.0).unwrap();
        assert!(matches!(
            directional_cloudiness(&ps, &[(0.0, 1.0), (0.5, 1.5)], &band),
            Err(IndexError::OverlappingSectors { .. })
        ));
    }

    #[test]
    fn ri_reproduces_published_table() {
        for &(lam, nu, expected) in &[
            (6.4, 0.231, 0.071),
            (11.41, 0.226, 0.022),
            (15.0, 0.253, 0.014),
        ] {
            let p = BesselModelParams::new(lam, nu).unwrap();
            let ri = range_of_interaction(&p).unwrap();
            assert!(
                (ri - expected).abs() < 0.001,
                "lambda {lam}: RI {ri} vs {expected}"
            );
        }
    }

    #[test]
    fn ri_vanishes_with_nu() {
        let lam = 6.4;
        let mut last = f64::INFINITY;
        for &nu in &[1e-1, 1e-3, 1e-6, 1e-9] {
            let p = BesselModelParams::new(lam, nu).unwrap();
            let ri = range_of_interaction(&p).unwrap();
            assert!(ri < last && ri >= 0.0);
            last = ri;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn ri_is_two_pi_times_spectrum_at_zero() {
        // algebraic identity: 2 pi * k_hat_1(0) = 4 pi nu / lambda^2,
        // to machine precision (the two sides round differently)
        for &(lam, nu) in &[(6.4, 0.231), (1.0, 1.0), (15.0, 0.253)] {
            let p = BesselModelParams::new(lam, nu).unwrap();
            let spectral = 2.0 * PI * crate::model::bessel_spectrum_mm2(0.0, &p).unwrap();
            let closed = range_of_interaction(&p).unwrap();
            assert!(
                ((spectral - closed) / closed).abs() < 1e-14,
                "{spectral} vs {closed}"
            );
        }
    }

    #[test]
    fn invalid_model_params_rejected() {
        let p = BesselModelParams {
            lambda_per_mm: -1.0,
            nu: 0.2,
            fit_residual: None,
            stderr_lambda_per_mm: None,
            stderr_nu: None,
        };
        assert!(matches!(
            range_of_interaction(&p),
            Err(IndexError::InvalidParams(_))
        ));
    }

    #[test]
    fn report_serializes_with_unit_keys() {
        let report = CloudinessReport {
            cli_percent: 29.7,
            band_rho0_per_um: 0.02,
            band_rho1_per_um: 0.10,
            band_wavelength_min_um: 62.8,
            band_wavelength_max_um: 314.2,
            sectors: vec![SectorCli {
                phi_lo_rad: -PI / 4.0,
                phi_hi_rad: PI / 4.0,
                cli_percent: 17.1,
            }],
            ri_mm2: Some(0.071),
            model: Some(ModelReport {
                lambda_per_mm: 6.4,
                nu: 0.231,
                fit_residual: Some(0.02),
                stderr_lambda_per_mm: None,
                stderr_nu: None,
            }),
            msp: vec![MspEntry {
                j: 9,
                value_permille: 0.236,
            }],
            inputs: InputProvenance::default(),
        };
        let json = report.to_json_pretty();
        for key in [
            "cli_percent",
            "band_rho0_per_um",
            "band_rho1_per_um",
            "ri_mm2",
            "lambda_per_mm",
            "value_permille",
            "phi_lo_rad",
        ] {
            assert!(json.contains(key), "missing key {key}");
        }
        let back: CloudinessReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.cli_percent, report.cli_percent);
    }
}
