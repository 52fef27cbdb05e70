//! Internal 2D FFT on row-major buffers (rows first, then columns via
//! transposition), built on rustfft. Transforms are unnormalized in both
//! directions; callers apply their own scaling.

use rustfft::{num_complex::Complex, FftDirection, FftPlanner};

pub(crate) fn fft2(
    buffer: &mut Vec<Complex<f64>>,
    width: usize,
    height: usize,
    direction: FftDirection,
) {
    assert_eq!(buffer.len(), width * height);
    let mut planner = FftPlanner::new();

    let row_fft = planner.plan_fft(width, direction);
    let mut scratch = vec![Complex::default(); row_fft.get_inplace_scratch_len()];
    for row in buffer.chunks_exact_mut(width) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let mut transposed = transpose(buffer, width, height);
    let col_fft = planner.plan_fft(height, direction);
    scratch.resize(col_fft.get_inplace_scratch_len(), Complex::default());
    for col in transposed.chunks_exact_mut(height) {
        col_fft.process_with_scratch(col, &mut scratch);
    }

    *buffer = transpose(&transposed, height, width);
}

fn transpose(matrix: &[Complex<f64>], width: usize, height: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::default(); matrix.len()];
    for r in 0..height {
        for c in 0..width {
            out[c * height + r] = matrix[r * width + c];
        }
    }
    out
}

/// Forward DFT of a real grid.
pub(crate) fn forward_real(values: &[f64], width: usize, height: usize) -> Vec<Complex<f64>> {
    let mut buffer: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(&mut buffer, width, height, FftDirection::Forward);
    buffer
}

/// Inverse DFT scaled by 1/(width*height), returning the real part.
pub(crate) fn inverse_to_real(
    mut buffer: Vec<Complex<f64>>,
    width: usize,
    height: usize,
) -> Vec<f64> {
    fft2(&mut buffer, width, height, FftDirection::Inverse);
    let scale = 1.0 / (width * height) as f64;
    buffer.iter().map(|c| c.re * scale).collect()
}
