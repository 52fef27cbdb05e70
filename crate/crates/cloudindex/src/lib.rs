//! Cloudiness analysis for nonwovens and papers from gray-tone transmission
//! images.
//!
//! The pipeline: load transmission images, convert them to normalized local
//! grammage fields ([`grammage`]), estimate the 2D power spectrum and reduce
//! it to rotation or sector averages ([`spectral`]), integrate a frequency
//! band into the cloudiness index and related quantities ([`index`]), fit the
//! modified-Bessel spectrum model ([`model`]), and cross-check against DoG
//! pyramid level energies ([`pyramid`]). A Poisson segment-process simulator
//! ([`synth`]) generates fiber fields with a known model spectrum for
//! end-to-end validation.

// Parameter checks use `!(x > 0.0)` on purpose: the negation also rejects
// NaN. Frozen reference constants keep their full published digits.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

mod fft;

pub mod grammage;
pub mod index;
pub mod io;
pub mod model;
pub mod pyramid;
pub mod special;
pub mod spectral;
pub mod synth;

pub use grammage::{normalize_grammage, pixelwise_mean, GrammageField, GrayImage};
pub use index::{
    cloudiness_index, directional_cloudiness, range_of_interaction, CloudinessReport, FrequencyBand,
};
pub use model::{
    bessel_correlation, bessel_spectrum_mm2, bessel_spectrum_um2, compute_psi,
    fiber_model_spectrum_mm2, fit_bessel_model, hankel_transform, model_band_integral,
    pair_correlation_lines, BesselModelParams, FiberModelParams, HankelDirection,
};
pub use pyramid::{
    bessel_bandpass_power, dog_norm, dog_transfer, msp_spatial, msp_spectral, DogLevel,
};
pub use spectral::{
    power_spectrum_2d, radial_average, sector_average, PowerSpectrum2D, RadialSpectrum,
};
pub use synth::{rasterize_fiber_field, sample_fiber_system, synth_nonwoven, Segment, SynthConfig};
