//! Periodic scalar fields on the unit torus, their Fourier coefficients and
//! the norms built on top of them.
//!
//! Samples are node-centred: entry `(i, j)` lives at `(i/N, j/N)` and is
//! stored row-major at `i * N + j`, so the first index runs along `x`.
//!
//! Fourier coefficients use the normalized forward convention
//!
//! ```text
//! f^(k) = N^-2 * sum_{i,j} f(i/N, j/N) exp(-2 pi i k.(i/N, j/N))
//! ```
//!
//! so `f^(0)` is literally the mean, and `|k|` in the homogeneous Sobolev
//! weights is the Euclidean norm of the integer wave vector (no `2 pi`).

pub mod fft;
pub mod interp;
pub mod io;

pub use interp::Interpolation;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{canonical_sum_by, pairwise_sum};

/// Relative tolerance for the zero-mean gauge.
pub const ZERO_MEAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    n: usize,
    samples: Vec<f64>,
    mean: f64,
}

pub(crate) fn check_resolution(n: usize) -> Result<()> {
    if n >= 8 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::BadResolution(n))
    }
}

impl ScalarField {
    /// Builds a field from `n * n` row-major samples, optionally subtracting
    /// the mean.
    pub fn new(n: usize, mut samples: Vec<f64>, enforce_zero_mean: bool) -> Result<Self> {
        check_resolution(n)?;
        if samples.len() != n * n {
            return Err(Error::SampleCount { expected: n * n, got: samples.len() });
        }
        if let Some(idx) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        let mut mean = canonical_sum_by(&samples, |v| *v) / (n * n) as f64;
        if enforce_zero_mean && mean != 0.0 {
            samples.iter_mut().for_each(|v| *v -= mean);
            mean = canonical_sum_by(&samples, |v| *v) / (n * n) as f64;
        }
        Ok(Self { n, samples, mean })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64, enforce_zero_mean: bool) -> Result<Self> {
        check_resolution(n)?;
        let h = 1.0 / n as f64;
        let samples = (0..n * n)
            .map(|idx| f((idx / n) as f64 * h, (idx % n) as f64 * h))
            .collect();
        Self::new(n, samples, enforce_zero_mean)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n], false)
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.samples[(i % self.n) * self.n + (j % self.n)]
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn linf(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn is_zero_mean(&self) -> bool {
        self.mean.abs() <= ZERO_MEAN_TOL * self.linf().max(1.0)
    }

    /// The field minus its mean.
    pub fn zero_mean_part(&self) -> Self {
        Self::new(self.n, self.samples.clone(), true).expect("valid field stays valid")
    }

    fn require_zero_mean(&self) -> Result<()> {
        if self.is_zero_mean() {
            Ok(())
        } else {
            Err(Error::NonZeroMean { mean: self.mean })
        }
    }

    pub fn spectral(&self) -> SpectralField {
        let n = self.n;
        let scale = 1.0 / (n * n) as f64;
        let mut coeffs = fft::forward_real(&self.samples, n);
        coeffs.iter_mut().for_each(|c| *c *= scale);
        SpectralField { n, coeffs }
    }

    /// Homogeneous Sobolev norm `(sum_{k != 0} |k|^{2s} |f^(k)|^2)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            self.require_zero_mean()?;
        }
        Ok(self.spectral().sobolev_norm(s))
    }

    /// Discrete `L^p` norm `(N^-2 sum |f|^p)^{1/p}`; `p = f64::INFINITY`
    /// gives the maximum modulus. Sums run in sorted order, so the result
    /// is a function of the sample multiset alone.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::BadExponent(p));
        }
        if p.is_infinite() {
            return Ok(self.linf());
        }
        let count = (self.n * self.n) as f64;
        let sum = if p == 1.0 {
            canonical_sum_by(&self.samples, |v| v.abs())
        } else if p == 2.0 {
            canonical_sum_by(&self.samples, |v| v * v)
        } else {
            canonical_sum_by(&self.samples, |v| v.abs().powf(p))
        };
        Ok((sum / count).powf(1.0 / p))
    }

    /// `f_lambda(x) = f(m x)` with `lambda = 1/m`, an exact relabeling of
    /// samples.
    pub fn rescale(&self, m: usize) -> Result<Self> {
        let n = self.n;
        if m == 0 || n % m != 0 {
            return Err(Error::BadRescale { m, n });
        }
        let samples = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                self.samples[((i * m) % n) * n + (j * m) % n]
            })
            .collect();
        Self::new(n, samples, false)
    }

    /// The zero-average potential `phi` with `Laplacian(phi) = f`.
    ///
    /// In Fourier variables `phi^(k) = -f^(k) / (4 pi^2 |k|^2)`, hence
    /// `||grad phi||_{L^2} = sobolev_norm(f, -1) / (2 pi)`: the `2 pi` comes
    /// from measuring wave numbers as integers.
    pub fn poisson_potential(&self) -> Result<Self> {
        self.require_zero_mean()?;
        let mut spec = self.spectral();
        let n = self.n;
        let four_pi2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
        for i1 in 0..n {
            for i2 in 0..n {
                let (k1, k2) = (fft::wavenumber(i1, n), fft::wavenumber(i2, n));
                let k2sum = (k1 * k1 + k2 * k2) as f64;
                let c = &mut spec.coeffs[i1 * n + i2];
                *c = if k2sum == 0.0 { Complex64::new(0.0, 0.0) } else { -*c / (four_pi2 * k2sum) };
            }
        }
        Ok(spec.to_field())
    }

    /// Spectral Laplacian `-4 pi^2 |k|^2 f^(k)`.
    pub fn laplacian(&self) -> Self {
        self.spectral()
            .map_modes(|k1, k2, c| {
                -c * (4.0 * std::f64::consts::PI.powi(2) * (k1 * k1 + k2 * k2) as f64)
            })
            .to_field()
    }

    /// Spectral gradient `(d_x f, d_y f)`; the Nyquist modes are dropped
    /// since their derivative is not real.
    pub fn gradient(&self) -> (Self, Self) {
        let n = self.n as i64;
        let spec = self.spectral();
        let two_pi = 2.0 * std::f64::consts::PI;
        let d = |axis: usize| {
            spec.map_modes(|k1, k2, c| {
                if k1 == -n / 2 || k2 == -n / 2 {
                    return Complex64::new(0.0, 0.0);
                }
                let k = if axis == 0 { k1 } else { k2 };
                c * Complex64::new(0.0, two_pi * k as f64)
            })
            .to_field()
        };
        (d(0), d(1))
    }

    /// Pointwise modulus of the spectral gradient.
    pub fn gradient_magnitude(&self) -> Self {
        let (gx, gy) = self.gradient();
        let samples = gx.samples.iter().zip(&gy.samples).map(|(a, b)| a.hypot(*b)).collect();
        Self::new(self.n, samples, false).expect("finite")
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.n, self.samples.iter().map(|&v| f(v)).collect(), false)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs).expect("finite")
    }
}

/// Fourier coefficients in FFT index order (`k` and `k - N` share a slot).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn from_coefficients(n: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_resolution(n)?;
        if coeffs.len() != n * n {
            return Err(Error::SampleCount { expected: n * n, got: coeffs.len() });
        }
        Ok(Self { n, coeffs })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Coefficient of the signed wave vector `(k1, k2)` with components in
    /// `[-N/2, N/2 - 1]`.
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[fft::index_of(k1, self.n) * self.n + fft::index_of(k2, self.n)]
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Iterates `(k1, k2, coefficient)` in FFT index order.
    pub fn modes(&self) -> impl Iterator<Item = (i64, i64, Complex64)> + '_ {
        let n = self.n;
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(idx, &c)| (fft::wavenumber(idx / n, n), fft::wavenumber(idx % n, n), c))
    }

    pub fn map_modes(&self, f: impl Fn(i64, i64, Complex64) -> Complex64) -> Self {
        let coeffs = self.modes().map(|(k1, k2, c)| f(k1, k2, c)).collect();
        Self { n: self.n, coeffs }
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let terms: Vec<f64> = self
            .modes()
            .filter(|&(k1, k2, _)| k1 != 0 || k2 != 0)
            .map(|(k1, k2, c)| {
                let k2sum = (k1 * k1 + k2 * k2) as f64;
                let w = if s == 0.0 { 1.0 } else { k2sum.powf(s) };
                w * c.norm_sqr()
            })
            .collect();
        pairwise_sum(&terms).sqrt()
    }

    /// Energy `sum |f^(k)|^2` grouped by the shell `round(|k|)`.
    pub fn shell_energy(&self) -> Vec<f64> {
        let shells = (self.n as f64 * std::f64::consts::FRAC_1_SQRT_2).ceil() as usize + 1;
        let mut out = vec![0.0; shells];
        for (k1, k2, c) in self.modes() {
            let shell = ((k1 * k1 + k2 * k2) as f64).sqrt().round() as usize;
            out[shell] += c.norm_sqr();
        }
        out
    }

    /// Inverse transform; the imaginary residue is discarded.
    pub fn to_field(&self) -> ScalarField {
        let n = self.n;
        let mut buf = self.coeffs.clone();
        fft::inverse(&mut buf, n);
        ScalarField::new(n, buf.iter().map(|c| c.re).collect(), false)
            .expect("inverse of finite coefficients is finite")
    }
}

/// A real trigonometric mode `amplitude * cos(2 pi (kx x + ky y) + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub kx: i64,
    pub ky: i64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Mode {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let arg = 2.0 * std::f64::consts::PI * (self.kx as f64 * x + self.ky as f64 * y) + self.phase;
        self.amplitude * arg.cos()
    }
}

/// Sum of trigonometric modes sampled at resolution `n`.
pub fn modes_field(n: usize, modes: &[Mode]) -> Result<ScalarField> {
    ScalarField::from_fn(n, |x, y| modes.iter().map(|m| m.eval(x, y)).sum(), false)
}

/// Random zero-mean field whose modes satisfy `max(|k1|, |k2|) <= kmax`.
///
/// Coefficients are drawn with a `1 / (1 + |k|)` envelope so that several
/// shells carry comparable energy.
pub fn random_band_limited<R: Rng + ?Sized>(rng: &mut R, n: usize, kmax: i64) -> Result<ScalarField> {
    check_resolution(n)?;
    if kmax < 1 || kmax >= n as i64 / 4 {
        return Err(Error::InvalidParameter(format!("kmax {kmax} must lie in [1, N/4)")));
    }
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n * n];
    for k1 in -kmax..=kmax {
        for k2 in -kmax..=kmax {
            // one representative per conjugate pair
            if (k1, k2) <= (0, 0) {
                continue;
            }
            let envelope = 1.0 / (1.0 + ((k1 * k1 + k2 * k2) as f64).sqrt());
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * envelope;
            coeffs[fft::index_of(k1, n) * n + fft::index_of(k2, n)] = c;
            coeffs[fft::index_of(-k1, n) * n + fft::index_of(-k2, n)] = c.conj();
        }
    }
    let field = SpectralField { n, coeffs }.to_field();
    ScalarField::new(n, field.samples, true)
}

/// Random field with exactly one conjugate pair of modes.
pub fn random_single_mode<R: Rng + ?Sized>(rng: &mut R, n: usize, kmax: i64) -> Result<ScalarField> {
    let (kx, ky) = loop {
        let k = (rng.gen_range(-kmax..=kmax), rng.gen_range(-kmax..=kmax));
        if k != (0, 0) {
            break k;
        }
    };
    let mode = Mode { kx, ky, amplitude: rng.gen_range(0.5..2.0), phase: rng.gen_range(0.0..std::f64::consts::TAU) };
    modes_field(n, &[mode])
}
