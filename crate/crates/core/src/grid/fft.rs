//! Unnormalized two-dimensional FFTs over row-major `n x n` buffers.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let planner = PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()));
    let mut guard = planner.lock().expect("fft planner poisoned");
    guard.plan_fft(n, direction)
}

fn transform(data: &mut [Complex64], n: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), n * n);
    let fft = plan(n, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // rows: contiguous along the second index
    fft.process_with_scratch(data, &mut scratch);
    // columns via transpose
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    transpose(data, &mut t, n);
    fft.process_with_scratch(&mut t, &mut scratch);
    transpose(&t, data, n);
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

/// `F[k] = sum_x f[x] e^{-2 pi i k.x / n}` (no normalization).
pub fn forward(data: &mut [Complex64], n: usize) {
    transform(data, n, FftDirection::Forward);
}

/// `f[x] = sum_k F[k] e^{+2 pi i k.x / n}` (no normalization).
pub fn inverse(data: &mut [Complex64], n: usize) {
    transform(data, n, FftDirection::Inverse);
}

pub fn forward_real(samples: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward(&mut buf, n);
    buf
}

/// Signed wave number of FFT index `idx`; the Nyquist index maps to `-n/2`.
#[inline]
pub fn wavenumber(idx: usize, n: usize) -> i64 {
    if idx < n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// FFT index of the signed wave number `k`.
#[inline]
pub fn index_of(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}
