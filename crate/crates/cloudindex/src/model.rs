//! Parametric spectrum models, the numerical Hankel transform, closed-form
//! band integrals, and nonlinear model fitting.
//!
//! The modified Bessel correlation family
//!
//! ```text
//! k1(r) = (lambda r)^nu K_nu(lambda r) / (2^(nu-1) Gamma(nu))
//! ```
//!
//! has the spectrum
//!
//! ```text
//! k1_hat(rho) = 2 nu lambda^(2 nu) / (lambda^2 + rho^2)^(nu + 1),
//! ```
//!
//! a flexible two-parameter model for rotation-averaged nonwoven spectra.
//! The fiber-process spectrum approximates a Poisson system of straight
//! fibers of radius R with exponentially distributed segment lengths:
//!
//! ```text
//! k1m_hat(rho) ~= psi / (lambda sqrt(lambda^2 + rho^2)) * J1(R rho)^2 / (R rho)^2,
//! ```
//!
//! where psi(lambda, R) normalizes the spectrum to unit total power
//! (int rho k1m_hat drho = 1); no closed form for psi is known, so it is
//! computed by adaptive quadrature.
//!
//! Units: model parameters carry lambda in 1/mm (the reporting convention)
//! and spectra in mm^2; `bessel_spectrum_um2` converts for callers working
//! on the estimator's um scale.

use crate::index::FrequencyBand;
use crate::special::{bessel_j0, bessel_j1, bessel_k, gamma};
use crate::spectral::RadialSpectrum;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("grid too coarse for the requested frequency {rho}: max step {max_step:.3e} needed, grid has {step:.3e}")]
    GridTooCoarse { rho: f64, step: f64, max_step: f64 },
    #[error("need at least 8 spectrum bins inside the fit band, found {found}")]
    InsufficientBins { found: usize },
    #[error("all spectrum values inside the fit band must be positive")]
    NonPositiveSpectrum,
    #[error("fit did not converge after {iterations} iterations; best lambda = {lambda_per_mm} /mm, nu = {nu}, rms log residual = {residual}")]
    NoConvergence {
        iterations: usize,
        lambda_per_mm: f64,
        nu: f64,
        residual: f64,
    },
    #[error("quadrature failed to reach tolerance {tol:e}")]
    QuadratureFailure { tol: f64 },
}

/// Parameters of the modified Bessel correlation/spectrum pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesselModelParams {
    /// Scale parameter in 1/mm.
    pub lambda_per_mm: f64,
    /// Dimensionless shape parameter.
    pub nu: f64,
    /// RMS log residual of the fit that produced these parameters.
    pub fit_residual: Option<f64>,
    pub stderr_lambda_per_mm: Option<f64>,
    pub stderr_nu: Option<f64>,
}

impl BesselModelParams {
    pub fn new(lambda_per_mm: f64, nu: f64) -> Result<Self, ModelError> {
        if !(lambda_per_mm > 0.0) || !lambda_per_mm.is_finite() || !(nu > 0.0) || !nu.is_finite() {
            return Err(ModelError::InvalidParams(format!(
                "need lambda > 0 and nu > 0, got lambda = {lambda_per_mm}, nu = {nu}"
            )));
        }
        Ok(Self {
            lambda_per_mm,
            nu,
            fit_residual: None,
            stderr_lambda_per_mm: None,
            stderr_nu: None,
        })
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda_per_mm > 0.0) || !(self.nu > 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "need lambda > 0 and nu > 0, got lambda = {}, nu = {}",
                self.lambda_per_mm, self.nu
            )));
        }
        Ok(())
    }
}

/// Parameters of the straight-fiber process model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberModelParams {
    /// Inverse mean segment length in 1/mm; 0 is the filament limit.
    pub lambda_per_mm: f64,
    /// Fiber radius in um.
    pub radius_um: f64,
    /// Mean number of curves per mm^2.
    pub curves_per_mm2: f64,
}

impl FiberModelParams {
    pub fn new(
        lambda_per_mm: f64,
        radius_um: f64,
        curves_per_mm2: f64,
    ) -> Result<Self, ModelError> {
        if !(lambda_per_mm >= 0.0)
            || !lambda_per_mm.is_finite()
            || !(radius_um > 0.0)
            || !(curves_per_mm2 > 0.0)
        {
            return Err(ModelError::InvalidParams(format!(
                "need lambda >= 0, R > 0, N_A > 0, got {lambda_per_mm}, {radius_um}, {curves_per_mm2}"
            )));
        }
        Ok(Self {
            lambda_per_mm,
            radius_um,
            curves_per_mm2,
        })
    }
}

/// Modified Bessel correlation k1(r); r in mm, value in (0, 1] with
/// k1(0) = 1 by the small-argument limit.
pub fn bessel_correlation(r_mm: f64, p: &BesselModelParams) -> Result<f64, ModelError> {
    p.validate()?;
    if !(r_mm >= 0.0) {
        return Err(ModelError::InvalidParams(format!(
            "need r >= 0, got {r_mm}"
        )));
    }
    let z = p.lambda_per_mm * r_mm;
    if z == 0.0 {
        return Ok(1.0);
    }
    let value = z.powf(p.nu) * bessel_k(p.nu, z) / (2f64.powf(p.nu - 1.0) * gamma(p.nu));
    // K_nu underflows to zero for large z
    Ok(value.max(0.0))
}

/// Spectrum of the modified Bessel correlation, 2 nu lambda^(2 nu) /
/// (lambda^2 + rho^2)^(nu+1); rho in 1/mm, value in mm^2.
pub fn bessel_spectrum_mm2(rho_per_mm: f64, p: &BesselModelParams) -> Result<f64, ModelError> {
    p.validate()?;
    if !(rho_per_mm >= 0.0) {
        return Err(ModelError::InvalidParams(format!(
            "need rho >= 0, got {rho_per_mm}"
        )));
    }
    let l = p.lambda_per_mm;
    Ok(2.0 * p.nu * l.powf(2.0 * p.nu) / (l * l + rho_per_mm * rho_per_mm).powf(p.nu + 1.0))
}

/// Same spectrum on the estimator's scale: rho in 1/um, value in um^2.
pub fn bessel_spectrum_um2(rho_per_um: f64, p: &BesselModelParams) -> Result<f64, ModelError> {
    bessel_spectrum_mm2(rho_per_um * 1000.0, p).map(|v| v * 1e6)
}

/// Closed-form band integral of the Bessel-model spectrum,
/// int_{rho0}^{rho1} rho k1_hat(rho) drho
///   = lambda^(2 nu) [ (lambda^2 + rho0^2)^-nu - (lambda^2 + rho1^2)^-nu ],
/// a fraction in [0, 1]. `rho1_per_mm` may be infinite.
pub fn model_band_integral(
    p: &BesselModelParams,
    rho0_per_mm: f64,
    rho1_per_mm: f64,
) -> Result<f64, ModelError> {
    p.validate()?;
    if !(rho0_per_mm >= 0.0) || rho0_per_mm > rho1_per_mm {
        return Err(ModelError::InvalidParams(format!(
            "need 0 <= rho0 <= rho1, got [{rho0_per_mm}, {rho1_per_mm}]"
        )));
    }
    let l2 = p.lambda_per_mm * p.lambda_per_mm;
    let head = (l2 + rho0_per_mm * rho0_per_mm).powf(-p.nu);
    let tail = if rho1_per_mm.is_infinite() {
        0.0
    } else {
        (l2 + rho1_per_mm * rho1_per_mm).powf(-p.nu)
    };
    Ok(l2.powf(p.nu) * (head - tail))
}

/// Direction tag for [`hankel_transform`]. The order-zero Hankel transform
/// is an involution, so both directions share one implementation; the tag
/// documents intent at call sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HankelDirection {
    Forward,
    Inverse,
}

/// Numerical order-zero Hankel transform by trapezoidal quadrature of
/// r f(r) J0(r rho) on the supplied grid.
///
/// The grid must be strictly increasing from near zero and fine enough to
/// resolve the fastest kernel oscillation: at least 8 samples per period
/// 2 pi / rho at the largest requested rho. The sampled function must have
/// decayed to ~0 at the grid end (tail truncation below roughly the
/// quadrature error; not checked).
pub fn hankel_transform(
    grid: &[f64],
    values: &[f64],
    output_grid: &[f64],
    _direction: HankelDirection,
) -> Result<Vec<f64>, ModelError> {
    if grid.len() != values.len() || grid.len() < 2 {
        return Err(ModelError::InvalidParams(
            "grid and values must have equal length >= 2".into(),
        ));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] < 0.0 {
        return Err(ModelError::InvalidParams(
            "grid must be strictly increasing from near 0".into(),
        ));
    }
    let step = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    let rho_max = output_grid.iter().copied().fold(0.0f64, f64::max);
    if rho_max > 0.0 {
        let max_step = 2.0 * PI / rho_max / 8.0;
        if step > max_step {
            return Err(ModelError::GridTooCoarse {
                rho: rho_max,
                step,
                max_step,
            });
        }
    }
    let weighted: Vec<f64> = grid.iter().zip(values).map(|(&r, &f)| r * f).collect();
    let mut out = Vec::with_capacity(output_grid.len());
    for &rho in output_grid {
        let mut acc = 0.0;
        for i in 0..grid.len() - 1 {
            let g0 = weighted[i] * bessel_j0(grid[i] * rho);
            let g1 = weighted[i + 1] * bessel_j0(grid[i + 1] * rho);
            acc += 0.5 * (g0 + g1) * (grid[i + 1] - grid[i]);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Recursive adaptive Simpson; returns None when the depth limit is reached
/// before the tolerance.
fn adaptive_simpson(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Option<f64> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &mut impl FnMut(f64) -> f64,
        a: f64,
        m: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        let l = recurse(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
        let r = recurse(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
        Some(l + r)
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, m, b, fa, fm, fb, whole, tol, max_depth)
}

/// (J1(z)/z)^2 with the z -> 0 limit 1/4.
fn j1_over_z_squared(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        let h = 0.5 - z * z / 16.0;
        return h * h;
    }
    let h = bessel_j1(z) / z;
    h * h
}

const PSI_QUAD_TOL: f64 = 1e-12;
const PSI_CUTOFF: f64 = 60.0;

/// Shape integral G(eps) = int_0^inf J1(u)^2 / (u sqrt(u^2 + eps^2)) du for
/// eps = lambda R >= 0, evaluated as 4/(3 pi) minus a fast-decaying
/// correction plus an analytic tail bound.
fn psi_shape_integral(eps: f64) -> Result<f64, ModelError> {
    let four_over_3pi = 4.0 / (3.0 * PI);
    if eps == 0.0 {
        return Ok(four_over_3pi);
    }
    let mut integrand = |u: f64| -> f64 {
        let damp = if u == 0.0 {
            1.0
        } else {
            1.0 - u / (u * u + eps * eps).sqrt()
        };
        j1_over_z_squared(u) * damp
    };
    let correction = adaptive_simpson(&mut integrand, 0.0, PSI_CUTOFF, PSI_QUAD_TOL, 48)
        .ok_or(ModelError::QuadratureFailure { tol: PSI_QUAD_TOL })?;
    let tail = eps * eps / (8.0 * PI * PSI_CUTOFF.powi(4));
    Ok(four_over_3pi - correction - tail)
}

/// Normalization factor psi(lambda, R) of the fiber-model spectrum, defined
/// so that int_0^inf rho k1m_hat(rho) drho = 1. Dimensionless:
/// psi = eps / G(eps) with eps = lambda R.
pub fn compute_psi(lambda_per_mm: f64, radius_um: f64) -> Result<f64, ModelError> {
    if !(lambda_per_mm > 0.0) || !(radius_um > 0.0) {
        return Err(ModelError::InvalidParams(format!(
            "need lambda > 0 and R > 0, got {lambda_per_mm}, {radius_um}"
        )));
    }
    let eps = lambda_per_mm * radius_um / 1000.0;
    Ok(eps / psi_shape_integral(eps)?)
}

/// Fiber-model spectrum with the normalization coefficient precomputed, for
/// evaluation over many frequencies.
#[derive(Debug, Clone)]
pub struct FiberSpectrumModel {
    params: FiberModelParams,
    /// psi / lambda in mm, evaluated as R / G(lambda R) so the filament
    /// limit lambda = 0 stays finite.
    coeff_mm: f64,
}

impl FiberSpectrumModel {
    pub fn new(params: FiberModelParams) -> Result<Self, ModelError> {
        FiberModelParams::new(
            params.lambda_per_mm,
            params.radius_um,
            params.curves_per_mm2,
        )?;
        let radius_mm = params.radius_um / 1000.0;
        let eps = params.lambda_per_mm * radius_mm;
        let coeff_mm = radius_mm / psi_shape_integral(eps)?;
        Ok(Self { params, coeff_mm })
    }

    pub fn params(&self) -> &FiberModelParams {
        &self.params
    }

    /// k1m_hat(rho) in mm^2 for rho in 1/mm.
    pub fn eval_mm2(&self, rho_per_mm: f64) -> Result<f64, ModelError> {
        if !(rho_per_mm >= 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "need rho >= 0, got {rho_per_mm}"
            )));
        }
        let l = self.params.lambda_per_mm;
        if rho_per_mm == 0.0 && l == 0.0 {
            return Err(ModelError::InvalidParams(
                "the filament limit diverges at rho = 0".into(),
            ));
        }
        let radius_mm = self.params.radius_um / 1000.0;
        let kernel = j1_over_z_squared(radius_mm * rho_per_mm);
        Ok(self.coeff_mm / (l * l + rho_per_mm * rho_per_mm).sqrt() * kernel)
    }

    /// k1m_hat on the estimator's scale: rho in 1/um, value in um^2.
    pub fn eval_um2(&self, rho_per_um: f64) -> Result<f64, ModelError> {
        self.eval_mm2(rho_per_um * 1000.0).map(|v| v * 1e6)
    }
}

/// One-off evaluation of the fiber-model spectrum; rho in 1/mm, value in
/// mm^2. Use [`FiberSpectrumModel`] when evaluating many frequencies, the
/// normalization quadrature dominates otherwise.
pub fn fiber_model_spectrum_mm2(rho_per_mm: f64, p: &FiberModelParams) -> Result<f64, ModelError> {
    FiberSpectrumModel::new(p.clone())?.eval_mm2(rho_per_mm)
}

/// Pair correlation function of the Poisson segment system,
/// pcf(r) = 1 + lambda exp(-lambda r) / (pi N_A r); r in mm.
pub fn pair_correlation_lines(
    r_mm: f64,
    lambda_per_mm: f64,
    curves_per_mm2: f64,
) -> Result<f64, ModelError> {
    if !(lambda_per_mm > 0.0) || !(curves_per_mm2 > 0.0) {
        return Err(ModelError::InvalidParams(format!(
            "need lambda > 0 and N_A > 0, got {lambda_per_mm}, {curves_per_mm2}"
        )));
    }
    if !(r_mm > 0.0) {
        return Err(ModelError::InvalidParams(format!("need r > 0, got {r_mm}")));
    }
    Ok(1.0 + lambda_per_mm * (-lambda_per_mm * r_mm).exp() / (PI * curves_per_mm2 * r_mm))
}

const FIT_MAX_ITER: usize = 200;
const FIT_STEP_TOL: f64 = 1e-10;

/// Log-space model value and its gradient w.r.t. (ln lambda, ln nu);
/// lambda and rho share one unit.
fn log_model_and_grad(rho: f64, lambda: f64, nu: f64) -> (f64, [f64; 2]) {
    let l2 = lambda * lambda;
    let denom = l2 + rho * rho;
    let m = (2.0 * nu).ln() + 2.0 * nu * lambda.ln() - (nu + 1.0) * denom.ln();
    let d_ln_lambda = 2.0 * nu - 2.0 * (nu + 1.0) * l2 / denom;
    let d_ln_nu = 1.0 + nu * (l2 / denom).ln();
    (m, [d_ln_lambda, d_ln_nu])
}

fn fit_cost(pts: &[(f64, f64)], lambda: f64, nu: f64) -> f64 {
    pts.iter()
        .map(|&(rho, logk)| {
            let (m, _) = log_model_and_grad(rho, lambda, nu);
            let r = logk - m;
            r * r
        })
        .sum::<f64>()
}

/// Fit the Bessel-model spectrum to a radial spectrum by Levenberg-Marquardt
/// on log residuals, parameterized as (ln lambda, ln nu) so both parameters
/// stay positive. Initialization: lambda0 = the frequency where the in-band
/// spectrum first drops below half its maximum, nu0 = 0.25.
pub fn fit_bessel_model(
    rs: &RadialSpectrum,
    band: &FrequencyBand,
) -> Result<BesselModelParams, ModelError> {
    let pts_raw: Vec<(f64, f64)> = rs
        .bin_centers()
        .iter()
        .zip(rs.values())
        .filter(|(&c, _)| c >= band.rho0_per_um() && c <= band.rho1_per_um())
        .map(|(&c, &v)| (c, v))
        .collect();
    if pts_raw.len() < 8 {
        return Err(ModelError::InsufficientBins {
            found: pts_raw.len(),
        });
    }
    if pts_raw.iter().any(|&(_, v)| v <= 0.0) {
        return Err(ModelError::NonPositiveSpectrum);
    }
    let pts: Vec<(f64, f64)> = pts_raw.iter().map(|&(r, v)| (r, v.ln())).collect();

    let k_max = pts_raw.iter().map(|&(_, v)| v).fold(f64::MIN, f64::max);
    let lambda0 = pts_raw
        .iter()
        .find(|&&(_, v)| v < 0.5 * k_max)
        .map(|&(r, _)| r)
        .unwrap_or_else(|| (band.rho0_per_um() * band.rho1_per_um()).sqrt());
    let mut theta = [lambda0.ln(), 0.25f64.ln()];
    let mut cost = fit_cost(&pts, theta[0].exp(), theta[1].exp());
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..FIT_MAX_ITER {
        iterations += 1;
        let lambda = theta[0].exp();
        let nu = theta[1].exp();
        // normal equations of the linearized problem
        let mut h = [[0.0f64; 2]; 2];
        let mut g = [0.0f64; 2];
        for &(rho, logk) in &pts {
            let (m, jac) = log_model_and_grad(rho, lambda, nu);
            let r = logk - m;
            for a in 0..2 {
                g[a] += jac[a] * r;
                for b in 0..2 {
                    h[a][b] += jac[a] * jac[b];
                }
            }
        }

        let mut step = [0.0f64; 2];
        let mut accepted = false;
        for _ in 0..60 {
            let a00 = h[0][0] * (1.0 + damping);
            let a11 = h[1][1] * (1.0 + damping);
            let a01 = h[0][1];
            let det = a00 * a11 - a01 * a01;
            if det.abs() < 1e-300 {
                damping *= 3.0;
                continue;
            }
            step = [
                (g[0] * a11 - g[1] * a01) / det,
                (g[1] * a00 - g[0] * a01) / det,
            ];
            let trial = [theta[0] + step[0], theta[1] + step[1]];
            let trial_cost = fit_cost(&pts, trial[0].exp(), trial[1].exp());
            if trial_cost.is_finite() && trial_cost <= cost {
                theta = trial;
                cost = trial_cost;
                damping = (damping / 3.0).max(1e-14);
                accepted = true;
                break;
            }
            damping *= 3.0;
        }
        let step_norm = step[0].abs().max(step[1].abs());
        if accepted && step_norm < FIT_STEP_TOL {
            converged = true;
            break;
        }
        if !accepted {
            // damping exhausted without a cost decrease: a stall counts as
            // converged only if the last computed step was already tiny
            converged = step_norm < FIT_STEP_TOL;
            break;
        }
    }

    let lambda_um = theta[0].exp();
    let nu = theta[1].exp();
    let residual = (cost / pts.len() as f64).sqrt();
    if !converged {
        return Err(ModelError::NoConvergence {
            iterations,
            lambda_per_mm: lambda_um * 1000.0,
            nu,
            residual,
        });
    }
    Ok(BesselModelParams {
        lambda_per_mm: lambda_um * 1000.0,
        nu,
        fit_residual: Some(residual),
        stderr_lambda_per_mm: None,
        stderr_nu: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rel(actual: f64, expected: f64, tol: f64) {
        let err = (actual - expected).abs() / expected.abs();
        assert!(
            err <= tol,
            "actual {actual:e}, expected {expected:e}, rel err {err:e} > {tol:e}"
        );
    }

    #[test]
    fn correlation_at_zero_is_one() {
        for &(l, nu) in &[(6.4, 0.231), (1.0, 1.0), (0.5, 2.0)] {
            let p = BesselModelParams::new(l, nu).unwrap();
            assert_eq!(bessel_correlation(0.0, &p).unwrap(), 1.0);
        }
    }

    #[test]
    fn correlation_half_order_is_exponential() {
        // nu = 1/2: k1(r) = exp(-lambda r) exactly
        let p = BesselModelParams::new(1.0, 0.5).unwrap();
        assert_rel(bessel_correlation(1.0, &p).unwrap(), (-1f64).exp(), 1e-12);
        for &r in &[0.1, 0.5, 2.0, 5.0] {
            assert_rel(bessel_correlation(r, &p).unwrap(), (-r).exp(), 1e-12);
        }
    }

    #[test]
    fn correlation_reference_values() {
        // frozen mpmath values of (lambda r)^nu K_nu(lambda r)/(2^(nu-1) Gamma(nu))
        let p = BesselModelParams::new(1.0, 1.0).unwrap();
        assert_rel(
            bessel_correlation(1.0, &p).unwrap(),
            0.601_907_230_197_234_6,
            1e-12,
        );
        let p = BesselModelParams::new(6.4, 0.231).unwrap();
        assert_rel(
            bessel_correlation(0.05, &p).unwrap(),
            0.456_072_484_333_377_6,
            1e-12,
        );
        let p = BesselModelParams::new(0.5, 0.25).unwrap();
        assert_rel(
            bessel_correlation(2.0, &p).unwrap(),
            0.199_805_021_174_296_7,
            1e-12,
        );
    }

    #[test]
    fn correlation_is_decreasing() {
        for &(l, nu) in &[(6.4, 0.231), (1.0, 1.0), (2.0, 0.5)] {
            let p = BesselModelParams::new(l, nu).unwrap();
            let mut last = 1.0;
            for i in 1..60 {
                let r = i as f64 * 0.1;
                let v = bessel_correlation(r, &p).unwrap();
                assert!(v < last, "not decreasing at r = {r}");
                assert!(v > 0.0 || l * r > 30.0);
                last = v;
            }
        }
    }

    #[test]
    fn spectrum_simple_values() {
        let p = BesselModelParams::new(1.0, 1.0).unwrap();
        assert_rel(bessel_spectrum_mm2(0.0, &p).unwrap(), 2.0, 1e-15);
        assert_rel(bessel_spectrum_mm2(1.0, &p).unwrap(), 0.5, 1e-15);
        let p = BesselModelParams::new(6.4, 0.231).unwrap();
        assert_rel(
            bessel_spectrum_mm2(0.0, &p).unwrap(),
            2.0 * 0.231 / (6.4 * 6.4),
            1e-14,
        );
    }

    #[test]
    fn spectrum_tail_decay_exponent() {
        // log-log slope -> -2(nu+1) within 1% for rho > 100 lambda
        for &(l, nu) in &[(1.0, 0.231), (2.0, 1.0)] {
            let p = BesselModelParams::new(l, nu).unwrap();
            let r1 = 200.0 * l;
            let r2 = 400.0 * l;
            let k1 = bessel_spectrum_mm2(r1, &p).unwrap();
            let k2 = bessel_spectrum_mm2(r2, &p).unwrap();
            let slope = (k2.ln() - k1.ln()) / (r2.ln() - r1.ln());
            let expected = -2.0 * (nu + 1.0);
            assert!(
                (slope - expected).abs() < 0.01 * expected.abs(),
                "slope {slope} vs {expected}"
            );
        }
    }

    #[test]
    fn spectrum_unit_conversion_consistency() {
        let p = BesselModelParams::new(6.4, 0.231).unwrap();
        let rho_per_um = 0.05;
        let um2 = bessel_spectrum_um2(rho_per_um, &p).unwrap();
        let mm2 = bessel_spectrum_mm2(rho_per_um * 1000.0, &p).unwrap();
        assert_rel(um2, mm2 * 1e6, 1e-14);
    }

    #[test]
    fn band_integral_full_range_is_one() {
        for &(l, nu) in &[(6.4, 0.231), (1.0, 1.0), (15.0, 0.253)] {
            let p = BesselModelParams::new(l, nu).unwrap();
            let total = model_band_integral(&p, 0.0, f64::INFINITY).unwrap();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn band_integral_published_value() {
        let p = BesselModelParams::new(6.4, 0.231).unwrap();
        let cli = model_band_integral(&p, 20.0, 100.0).unwrap();
        assert!((cli - 0.297).abs() < 0.002, "CLI fraction {cli}");
    }

    #[test]
    fn band_integral_complement_identity() {
        let p = BesselModelParams::new(2.0, 0.7).unwrap();
        for &x in &[0.0, 0.5, 3.0, 40.0] {
            let low = model_band_integral(&p, 0.0, x).unwrap();
            let high = model_band_integral(&p, x, f64::INFINITY).unwrap();
            assert!((low + high - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn band_integral_matches_quadrature() {
        // oracle: composite Simpson of rho * k1_hat over the band
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let l = rng.random_range(0.5..20.0);
            let nu = rng.random_range(0.1..1.5);
            let a = l * rng.random_range(0.1..5.0);
            let b = a + l * rng.random_range(0.5..45.0);
            let p = BesselModelParams::new(l, nu).unwrap();
            let closed = model_band_integral(&p, a, b).unwrap();
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let rho = a + i as f64 * h;
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * rho * bessel_spectrum_mm2(rho, &p).unwrap();
            }
            let quad = acc * h / 3.0;
            assert_rel(closed, quad, 1e-10);
        }
    }

    #[test]
    fn hankel_gaussian_self_reciprocal() {
        // exp(-r^2/2) transforms to exp(-rho^2/2)
        let n = 7000;
        let r_max = 14.0;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * r_max / n as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&r| (-0.5 * r * r).exp()).collect();
        let rho: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let out = hankel_transform(&grid, &values, &rho, HankelDirection::Forward).unwrap();
        for (&p, &v) in rho.iter().zip(&out) {
            let exact = (-0.5 * p * p).exp();
            assert!(
                (v - exact).abs() < 1e-6,
                "rho {p}: {v} vs {exact}, err {:e}",
                (v - exact).abs()
            );
        }
    }

    #[test]
    fn hankel_bessel_correlation_pair() {
        // k1(r) at lambda = 1, nu = 1 transforms to 2/(1+rho^2)^2
        let p = BesselModelParams::new(1.0, 1.0).unwrap();
        let n = 160_000;
        let r_max = 40.0;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * r_max / n as f64).collect();
        let values: Vec<f64> = grid
            .iter()
            .map(|&r| bessel_correlation(r, &p).unwrap())
            .collect();
        let rho: Vec<f64> = (0..=40)
            .map(|i| 0.1 * (10.0f64 / 0.1).powf(i as f64 / 40.0))
            .collect();
        let out = hankel_transform(&grid, &values, &rho, HankelDirection::Forward).unwrap();
        for (&q, &v) in rho.iter().zip(&out) {
            let exact = bessel_spectrum_mm2(q, &p).unwrap();
            assert_rel(v, exact, 1e-4);
        }
    }

    #[test]
    fn hankel_is_involution() {
        let n = 8000;
        let r_max = 12.0;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * r_max / n as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&r| (-0.5 * r * r).exp()).collect();
        let fwd = hankel_transform(&grid, &values, &grid, HankelDirection::Forward).unwrap();
        let back = hankel_transform(&grid, &fwd, &grid, HankelDirection::Inverse).unwrap();
        let num: f64 = values
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = values.iter().map(|a| a * a).sum();
        assert!(
            (num / den).sqrt() < 1e-4,
            "involution relative L2 {}",
            (num / den).sqrt()
        );
    }

    #[test]
    fn hankel_rejects_coarse_grid() {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let values = vec![1.0; grid.len()];
        let err = hankel_transform(&grid, &values, &[10.0], HankelDirection::Forward);
        assert!(matches!(err, Err(ModelError::GridTooCoarse { .. })));
    }

    #[test]
    fn psi_frozen_reference_value() {
        // high-precision mpmath value for lambda = 1 /mm, R = 1 um
        let psi = compute_psi(1.0, 1.0).unwrap();
        assert_rel(psi, 0.002_357_582_592_513_684, 1e-8);
    }

    #[test]
    fn psi_is_positive_and_fiber_spectrum_conserves_power() {
        // independent oracle: trapezoid in u = R rho with analytic tail
        for &l in &[0.5, 1.0, 2.0, 5.0] {
            for &r_um in &[1.0, 5.0, 25.0] {
                let psi = compute_psi(l, r_um).unwrap();
                assert!(psi > 0.0);
                let r_mm = r_um / 1000.0;
                let eps = l * r_mm;
                // T = psi/(lambda R) * int (J1(u)/u)^2 u/sqrt(u^2+eps^2) du,
                // by trapezoid on a three-scale grid: fine across the
                // eps-scale corner, medium while the 1/sqrt factor still
                // bends, coarse over the oscillatory tail; analytic tail
                // beyond u_max.
                let u_max = 2000.0;
                let corner = 10.0 * eps;
                let mut us: Vec<f64> = (1..=1000).map(|i| corner * i as f64 / 1000.0).collect();
                let mid_n = ((20.0 - corner) / 1e-3) as usize;
                us.extend((1..=mid_n).map(|i| corner + i as f64 * 1e-3));
                let start = *us.last().unwrap();
                let coarse_n = ((u_max - start) / 0.05) as usize;
                us.extend((1..=coarse_n).map(|i| start + i as f64 * 0.05));
                let mut total = 0.0;
                let mut prev_u = 0.0;
                let mut prev_g = 0.0;
                for u in us {
                    let g = j1_over_z_squared(u) * u / (u * u + eps * eps).sqrt();
                    total += 0.5 * (prev_g + g) * (u - prev_u);
                    prev_u = u;
                    prev_g = g;
                }
                total += 1.0 / (2.0 * PI * prev_u * prev_u); // analytic tail
                let conservation = psi / eps * total;
                assert!(
                    (conservation - 1.0).abs() < 1e-6,
                    "lambda {l}, R {r_um}: conservation {conservation}"
                );
            }
        }
    }

    #[test]
    fn fiber_spectrum_vanishes_at_j1_zeros() {
        let p = FiberModelParams::new(1.0, 3.0, 100.0).unwrap();
        let model = FiberSpectrumModel::new(p).unwrap();
        let rho0 = 3.8317059702075123 / 0.003; // first J1 zero over R in mm
        let at_zero = model.eval_mm2(rho0).unwrap();
        let nearby = model.eval_mm2(rho0 * 0.9).unwrap();
        assert!(at_zero < 1e-12 * nearby, "{at_zero} vs {nearby}");
    }

    #[test]
    fn fiber_spectrum_envelope_decays_like_rho_minus_4() {
        // local maxima for R rho in [20, 200] follow a rho^-4 envelope
        let p = FiberModelParams::new(0.01, 1.0, 100.0).unwrap();
        let model = FiberSpectrumModel::new(p).unwrap();
        let r_mm = 0.001;
        let mut maxima: Vec<(f64, f64)> = Vec::new();
        let mut prev2 = 0.0f64;
        let mut prev = 0.0f64;
        let mut prev_rho = 0.0f64;
        let n = 40_000;
        for i in 0..=n {
            let u = 20.0 + 180.0 * i as f64 / n as f64;
            let rho = u / r_mm;
            let v = model.eval_mm2(rho).unwrap();
            if prev > prev2 && prev > v && prev_rho > 0.0 {
                maxima.push((prev_rho.ln(), prev.ln()));
            }
            prev2 = prev;
            prev = v;
            prev_rho = rho;
        }
        assert!(maxima.len() > 20);
        let n = maxima.len() as f64;
        let sx: f64 = maxima.iter().map(|m| m.0).sum::<f64>() / n;
        let sy: f64 = maxima.iter().map(|m| m.1).sum::<f64>() / n;
        let sxy: f64 = maxima.iter().map(|m| (m.0 - sx) * (m.1 - sy)).sum();
        let sxx: f64 = maxima.iter().map(|m| (m.0 - sx) * (m.0 - sx)).sum();
        let slope = sxy / sxx;
        assert!((slope + 4.0).abs() < 0.1, "envelope slope {slope}");
    }

    #[test]
    fn fiber_spectrum_filament_limit_exists() {
        let radius_um = 3.0;
        let finite =
            FiberSpectrumModel::new(FiberModelParams::new(0.0, radius_um, 100.0).unwrap()).unwrap();
        let near = FiberSpectrumModel::new(FiberModelParams::new(1e-6, radius_um, 100.0).unwrap())
            .unwrap();
        for &rho in &[0.5, 5.0, 50.0] {
            assert_rel(
                near.eval_mm2(rho).unwrap(),
                finite.eval_mm2(rho).unwrap(),
                1e-4,
            );
        }
        assert!(finite.eval_mm2(0.0).is_err());
    }

    #[test]
    fn pair_correlation_values() {
        // r -> infinity limit
        let far = pair_correlation_lines(1000.0, 1.0, 1.0).unwrap();
        assert!((far - 1.0).abs() < 1e-9);
        // spot value 1 + exp(-1)/pi
        let v = pair_correlation_lines(1.0, 1.0, 1.0).unwrap();
        assert_rel(v, 1.1170996630486383, 1e-12);
        // excess is proportional to 1/N_A
        let a = pair_correlation_lines(0.7, 1.0, 1.0).unwrap() - 1.0;
        let b = pair_correlation_lines(0.7, 1.0, 2.0).unwrap() - 1.0;
        assert_rel(a / b, 2.0, 1e-12);
        assert!(pair_correlation_lines(0.0, 1.0, 1.0).is_err());
    }

    fn model_bins(lambda_per_um: f64, nu: f64, n: usize, lo: f64, hi: f64) -> RadialSpectrum {
        let mut p = BesselModelParams::new(lambda_per_um * 1000.0, nu).unwrap();
        p.fit_residual = None;
        let centers: Vec<f64> = (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect();
        let values: Vec<f64> = centers
            .iter()
            .map(|&r| bessel_spectrum_um2(r, &p).unwrap())
            .collect();
        RadialSpectrum::from_parts(centers, values, vec![1; n], None).unwrap()
    }

    #[test]
    fn fit_recovers_exact_model() {
        let rs = model_bins(0.0064, 0.231, 64, 0.0005, 0.15);
        let band = FrequencyBand::new(0.0005, 0.15).unwrap();
        let fitted = fit_bessel_model(&rs, &band).unwrap();
        assert_rel(fitted.lambda_per_mm, 6.4, 1e-6);
        assert_rel(fitted.nu, 0.231, 1e-6);
        assert!(fitted.fit_residual.unwrap() < 1e-9);
    }

    #[test]
    fn fit_is_scale_consistent() {
        // scaling frequencies by c and values by 1/c^2 recovers (c lambda, nu)
        let rs = model_bins(0.0064, 0.231, 64, 0.0005, 0.15);
        let c = 3.0;
        let centers: Vec<f64> = rs.bin_centers().iter().map(|&r| r * c).collect();
        let values: Vec<f64> = rs.values().iter().map(|&v| v / (c * c)).collect();
        let scaled = RadialSpectrum::from_parts(centers, values, vec![1; 64], None).unwrap();
        let band = FrequencyBand::new(0.0005 * c, 0.15 * c).unwrap();
        let fitted = fit_bessel_model(&scaled, &band).unwrap();
        assert_rel(fitted.lambda_per_mm, 6.4 * c, 1e-6);
        assert_rel(fitted.nu, 0.231, 1e-6);
    }

    #[test]
    fn fit_rejects_too_few_bins() {
        let rs = model_bins(0.0064, 0.231, 3, 0.001, 0.1);
        let band = FrequencyBand::new(0.001, 0.1).unwrap();
        assert!(matches!(
            fit_bessel_model(&rs, &band),
            Err(ModelError::InsufficientBins { found: 3 })
        ));
    }

    #[test]
    fn fit_rejects_non_positive_values() {
        let rs = model_bins(0.0064, 0.231, 16, 0.001, 0.1);
        let mut values = rs.values().to_vec();
        values[7] = 0.0;
        let broken = RadialSpectrum::from_parts(
            rs.bin_centers().to_vec(),
            values,
            rs.counts().to_vec(),
            None,
        )
        .unwrap();
        let band = FrequencyBand::new(0.001, 0.1).unwrap();
        assert!(matches!(
            fit_bessel_model(&broken, &band),
            Err(ModelError::NonPositiveSpectrum)
        ));
    }
}
