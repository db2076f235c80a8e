//! Geometric and functional mixing scales.
//!
//! The geometric scale is the smallest radius `r` in a candidate set such
//! that every discrete ball average satisfies
//! `|avg_{B(x,r)} f| <= kappa' * ||f||_inf`. A discrete ball is the set of
//! grid nodes within periodic distance `r` of the centre (no partial-cell
//! weights), so ball averages are an exact circular convolution and are
//! evaluated spectrally.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fft, ScalarField};
use crate::torus::lattice_offset;
use std::f64::consts::PI;

/// Slack on the squared-radius membership test for radii that are exact
/// multiples of the grid step.
const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Converts the two-phase accuracy `kappa` (`0 < kappa < 1/2`) of a `+-1`
/// configuration to the ball-average threshold: `kappa' = 1 - 2 kappa`.
pub fn kappa_prime_from_binary(kappa: f64) -> f64 {
    1.0 - 2.0 * kappa
}

/// Inverse of [`kappa_prime_from_binary`].
pub fn binary_kappa(kappa_prime: f64) -> f64 {
    (1.0 - kappa_prime) / 2.0
}

/// Residue offsets `(a, b)` (mod `n`) of the discrete ball of radius `r`.
pub fn disk_offsets(n: usize, r: f64) -> Vec<(usize, usize)> {
    let rr = (r * n as f64).powi(2) * (1.0 + MEMBERSHIP_SLACK);
    let mut out = Vec::new();
    for a in 0..n {
        let da = lattice_offset(a, n) as f64;
        if da * da > rr {
            continue;
        }
        for b in 0..n {
            let db = lattice_offset(b, n) as f64;
            if da * da + db * db <= rr {
                out.push((a, b));
            }
        }
    }
    out
}

fn check_radius(n: usize, r: f64) -> Result<()> {
    let h = 1.0 / n as f64;
    if r.is_finite() && r >= h * (1.0 - 1e-12) && r <= 0.5 * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(Error::RadiusOutOfRange { r, n })
    }
}

/// Disk indicator in Fourier space, ready for convolution.
#[derive(Debug)]
pub struct DiskKernel {
    pub n: usize,
    pub radius: f64,
    pub count: usize,
    spectrum: Vec<Complex64>,
}

impl DiskKernel {
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        check_radius(n, radius)?;
        let offsets = disk_offsets(n, radius);
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        for &(a, b) in &offsets {
            buf[a * n + b] = Complex64::new(1.0, 0.0);
        }
        fft::forward(&mut buf, n);
        Ok(Self { n, radius, count: offsets.len(), spectrum: buf })
    }
}

/// Field spectrum prepared once and reused across radii.
pub(crate) struct PreparedField {
    n: usize,
    mean: f64,
    lo: f64,
    hi: f64,
    fluct: Vec<Complex64>,
}

impl PreparedField {
    pub(crate) fn new(field: &ScalarField) -> Self {
        let n = field.resolution();
        let mean = field.mean();
        // averaging the fluctuation keeps constants exact
        let centred: Vec<f64> = field.samples().iter().map(|v| v - mean).collect();
        let (lo, hi) = field.min_max();
        Self { n, mean, lo, hi, fluct: fft::forward_real(&centred, n) }
    }

    pub(crate) fn average(&self, kernel: &DiskKernel) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(kernel.n, n);
        let mut buf: Vec<Complex64> =
            self.fluct.iter().zip(&kernel.spectrum).map(|(a, b)| a * b).collect();
        fft::inverse(&mut buf, n);
        let scale = 1.0 / ((n * n) as f64 * kernel.count as f64);
        buf.iter()
            .map(|c| (self.mean + c.re * scale).clamp(self.lo, self.hi))
            .collect()
    }
}

/// Ball averages of a field at one radius.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskAverageField {
    pub radius: f64,
    pub n: usize,
    pub ball_size: usize,
    pub averages: Vec<f64>,
}

impl DiskAverageField {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.averages[(i % self.n) * self.n + j % self.n]
    }

    pub fn max_abs(&self) -> f64 {
        self.averages.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Averages of `field` over every discrete ball of radius `r`.
pub fn disk_average(field: &ScalarField, r: f64) -> Result<DiskAverageField> {
    let kernel = DiskKernel::new(field.resolution(), r)?;
    let averages = PreparedField::new(field).average(&kernel);
    Ok(DiskAverageField { radius: r, n: field.resolution(), ball_size: kernel.count, averages })
}

/// Candidate radii for the geometric scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RadiiSet {
    /// `{ j/N : 1 <= j <= N/2 }` for the field's own resolution.
    GridSteps,
    /// `{ j/N : 1 <= j <= min(count, N/2) }`.
    FirstSteps(usize),
    /// Explicit lengths, strictly increasing in `(0, 1/2]`.
    Explicit(Vec<f64>),
}

impl RadiiSet {
    pub fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        let h = 1.0 / n as f64;
        let radii: Vec<f64> = match self {
            RadiiSet::GridSteps => (1..=n / 2).map(|j| j as f64 * h).collect(),
            RadiiSet::FirstSteps(count) => (1..=(*count).min(n / 2)).map(|j| j as f64 * h).collect(),
            RadiiSet::Explicit(r) => r.clone(),
        };
        if radii.is_empty() {
            return Err(Error::EmptyRadii);
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 || radii[radii.len() - 1] > 0.5 {
            return Err(Error::InvalidParameter("radii must increase strictly within (0, 1/2]".into()));
        }
        Ok(radii)
    }
}

type KernelCache = Arc<Mutex<HashMap<(usize, u64), Arc<DiskKernel>>>>;

/// Parameters of the geometric mixing scale, with a per-radius kernel cache.
#[derive(Debug, Clone)]
pub struct MixParams {
    pub kappa_prime: f64,
    pub radii: RadiiSet,
    cache: KernelCache,
}

impl Default for MixParams {
    fn default() -> Self {
        Self::new(1.0 / 3.0, RadiiSet::GridSteps).expect("defaults are valid")
    }
}

impl MixParams {
    pub fn new(kappa_prime: f64, radii: RadiiSet) -> Result<Self> {
        if !(kappa_prime > 0.0 && kappa_prime < 1.0) {
            return Err(Error::InvalidParameter(format!("kappa' = {kappa_prime} not in (0,1)")));
        }
        if let RadiiSet::Explicit(r) = &radii {
            if r.is_empty() {
                return Err(Error::EmptyRadii);
            }
        }
        Ok(Self { kappa_prime, radii, cache: Arc::default() })
    }

    pub fn kernel(&self, n: usize, r: f64) -> Result<Arc<DiskKernel>> {
        let key = (n, r.to_bits());
        if let Some(k) = self.cache.lock().expect("kernel cache poisoned").get(&key) {
            return Ok(Arc::clone(k));
        }
        let k = Arc::new(DiskKernel::new(n, r)?);
        self.cache.lock().expect("kernel cache poisoned").insert(key, Arc::clone(&k));
        Ok(k)
    }

    pub fn disk_average(&self, field: &ScalarField, r: f64) -> Result<DiskAverageField> {
        let kernel = self.kernel(field.resolution(), r)?;
        let averages = PreparedField::new(field).average(&kernel);
        Ok(DiskAverageField { radius: r, n: field.resolution(), ball_size: kernel.count, averages })
    }
}

/// Outcome of the geometric scale scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixG {
    /// Smallest qualifying radius, `0` for the zero field, `1/2` if saturated.
    pub epsilon: f64,
    /// Width of the interval `(previous candidate, epsilon]` that contains
    /// the continuum infimum as resolved by the scan.
    pub bracket: f64,
    pub saturated: bool,
}

/// Geometric mixing scale.
pub fn mix_g(field: &ScalarField, params: &MixParams) -> Result<MixG> {
    let n = field.resolution();
    let radii = params.radii.resolve(n)?;
    let linf = field.linf();
    if linf == 0.0 {
        return Ok(MixG { epsilon: 0.0, bracket: 0.0, saturated: false });
    }
    let threshold = params.kappa_prime * linf * (1.0 + 1e-12);
    let prepared = PreparedField::new(field);
    let mut previous = 0.0;
    for &r in &radii {
        let kernel = params.kernel(n, r)?;
        let worst = prepared.average(&kernel).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst <= threshold {
            return Ok(MixG { epsilon: r, bracket: r - previous, saturated: false });
        }
        previous = r;
    }
    Ok(MixG { epsilon: 0.5, bracket: 1.0 / n as f64, saturated: true })
}

/// Functional mixing scale: the homogeneous `H^-1` norm.
pub fn mix_f(field: &ScalarField) -> Result<f64> {
    field.sobolev_norm(-1.0)
}

/// `sinh(z) - z` without cancellation for small `z`.
fn sinh_minus_id(z: f64) -> f64 {
    if z.abs() < 0.5 {
        let z2 = z * z;
        let mut term = z * z2 / 6.0;
        let mut sum = 0.0;
        for k in 0..8 {
            sum += term;
            let d = (2 * k + 4) as f64 * (2 * k + 5) as f64;
            term *= z2 / d;
        }
        sum
    } else {
        z.sinh() - z
    }
}

/// Images summed in closed form on each side of the fundamental cell.
const NEAR_IMAGES: i64 = 6;

/// `sum_{m >= NEAR_IMAGES + 1} (m + b)^-p + (m - b)^-p` for `p = 4, 5`.
fn image_tails(b: f64) -> (f64, f64) {
    const CUT: i64 = 3000;
    let (mut t4, mut t5) = (0.0, 0.0);
    for m in ((NEAR_IMAGES + 1)..=CUT).rev() {
        for y in [m as f64 + b, m as f64 - b] {
            let y4 = y * y * y * y;
            t4 += 1.0 / y4;
            t5 += 1.0 / (y4 * y);
        }
    }
    // Euler-Maclaurin remainder from CUT + 1
    for c in [b, -b] {
        let a = (CUT + 1) as f64 + c;
        t4 += a.powi(-3) / 3.0 + a.powi(-4) / 2.0 + a.powi(-5) / 3.0;
        t5 += a.powi(-4) / 4.0 + a.powi(-5) / 2.0 + 5.0 * a.powi(-6) / 12.0;
    }
    (t4, t5)
}

/// `sum_{m1} x^-2 - (x^2 + y^2)^-1` over `x = a + m1`, for `0 < a < 1`,
/// `y > 0`, arranged to avoid cancellation.
fn shifted_difference(a: f64, y: f64) -> f64 {
    let s2 = (PI * a).sin().powi(2);
    let sh = (PI * y).sinh();
    let num = 2.0 * PI * PI * y * sh * sh - PI * s2 * sinh_minus_id(2.0 * PI * y);
    num / (2.0 * y * s2 * (sh * sh + s2))
}

/// Weight of the lattice frequency `(k1, k2)` (mod `m`) in the exact
/// `H^-1` norm of a piecewise-constant field on the `m x m` cell lattice.
fn cell_weight(k1: usize, k2: usize, m: usize, tails: &[(f64, f64)]) -> f64 {
    let (a, b) = (k1 as f64 / m as f64, k2 as f64 / m as f64);
    let m2 = (m * m) as f64;
    match (k1, k2) {
        (0, 0) => 0.0,
        (0, _) | (_, 0) => {
            let u = PI * if k1 == 0 { b } else { a };
            PI * PI * (2.0 * u.cos().powi(2) + 1.0) / (3.0 * m2 * u.sin().powi(2))
        }
        _ => {
            let s2a = (PI * a).sin().powi(2);
            let s2b = (PI * b).sin().powi(2);
            let mut g = 0.0;
            for shift in -NEAR_IMAGES..=NEAR_IMAGES {
                let y = b + shift as f64;
                g += shifted_difference(a, y.abs()) / y.powi(4);
            }
            let (t4, t5) = tails[k2];
            g += PI * PI / s2a * t4 - PI * t5;
            s2a * s2b / (PI.powi(4) * m2) * g
        }
    }
}

/// Exact `H^-1` norm of the piecewise-constant function equal to
/// `cells[a * m + b]` on `[a/m, (a+1)/m) x [b/m, (b+1)/m)`.
///
/// The aliased image sums over the cell-indicator spectrum are evaluated
/// in closed form, so the result is the continuum norm to rounding.
pub fn mix_f_piecewise_constant(cells: &[f64], m: usize) -> Result<f64> {
    if m < 2 || cells.len() != m * m {
        return Err(Error::SampleCount { expected: m.max(2) * m.max(2), got: cells.len() });
    }
    let mean = crate::torus::pairwise_sum(cells) / (m * m) as f64;
    let linf = cells.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if mean.abs() > crate::grid::ZERO_MEAN_TOL * linf.max(1.0) {
        return Err(Error::NonZeroMean { mean });
    }
    let spec = fft::forward_real(cells, m);
    let tails: Vec<(f64, f64)> = (0..m).map(|k| image_tails(k as f64 / m as f64)).collect();
    let scale = 1.0 / (m * m) as f64;
    let terms: Vec<f64> = (0..m * m)
        .map(|idx| {
            let c = spec[idx] * scale;
            if c.norm_sqr() == 0.0 {
                return 0.0;
            }
            c.norm_sqr() * cell_weight(idx / m, idx % m, m, &tails)
        })
        .collect();
    Ok(crate::torus::pairwise_sum(&terms).sqrt())
}

/// `+1` on `[0, 1/2) x [0, 1)` and `-1` elsewhere.
pub fn half_half(n: usize) -> Result<ScalarField> {
    ScalarField::from_fn(n, |x, _| if x < 0.5 { 1.0 } else { -1.0 }, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bressan::checkerboard;

    /// Direct `O(N^2 |B|)` ball sums, independent of the FFT path.
    fn brute_average(field: &ScalarField, r: f64) -> Vec<f64> {
        let n = field.resolution();
        let offsets = disk_offsets(n, r);
        (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let s: f64 = offsets.iter().map(|&(a, b)| field.get(i + a, j + b)).sum();
                s / offsets.len() as f64
            })
            .collect()
    }

    #[test]
    fn kappa_translation() {
        assert!((kappa_prime_from_binary(1.0 / 3.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((binary_kappa(0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn disk_offsets_are_symmetric_and_deduplicated() {
        let n = 16;
        let full = disk_offsets(n, 0.5);
        let mut sorted = full.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), full.len());
        for &(a, b) in &full {
            assert!(full.contains(&((n - a) % n, (n - b) % n)));
        }
        assert_eq!(disk_offsets(n, 1.0 / 16.0).len(), 5);
    }

    #[test]
    fn constant_average_is_exact() {
        let c = ScalarField::new(32, vec![0.3; 1024], false).unwrap();
        for r in [1.0 / 32.0, 0.2, 0.5] {
            let avg = disk_average(&c, r).unwrap();
            assert!(avg.averages.iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn radius_range_enforced() {
        let f = ScalarField::zeros(16).unwrap();
        assert!(matches!(disk_average(&f, 0.01), Err(Error::RadiusOutOfRange { .. })));
        assert!(matches!(disk_average(&f, 0.6), Err(Error::RadiusOutOfRange { .. })));
    }

    #[test]
    fn single_mode_average_is_a_multiple_of_the_mode() {
        let n = 64;
        let f = ScalarField::from_fn(n, |x, _| 2.0 * (2.0 * PI * x).cos(), false).unwrap();
        let avg = disk_average(&f, 0.25).unwrap();
        let brute = brute_average(&f, 0.25);
        for (a, b) in avg.averages.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-12);
        }
        // alpha from the node at x = 0 where the mode equals 2
        let alpha = avg.get(0, 0) / 2.0;
        assert!(alpha > 0.0 && alpha < 1.0);
        for i in 0..n {
            for j in [0, 7, 33] {
                assert!((avg.get(i, j) - alpha * f.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkerboard_full_period_average() {
        // a disk of radius one period does not cancel the pattern: the
        // continuum average peaks at 0.0911 at cell centres (fine quadrature)
        // and vanishes at cell corners by antisymmetry
        let n = 64;
        for k in 1..4 {
            let f = checkerboard(k, n).unwrap();
            let r = 0.5f64.powi(k as i32);
            let avg = disk_average(&f, r).unwrap();
            let brute = brute_average(&f, r);
            for (a, b) in avg.averages.iter().zip(&brute) {
                assert!((a - b).abs() < 1e-12);
            }
            let peak = avg.max_abs();
            assert!((peak - 0.0911).abs() < 0.012, "k={k} peak {peak}");
        }
    }

    #[test]
    fn averages_within_range() {
        let f = half_half(32).unwrap();
        for j in 1..=16 {
            let avg = disk_average(&f, j as f64 / 32.0).unwrap();
            assert!(avg.averages.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn mix_g_of_zero_field() {
        let z = ScalarField::zeros(16).unwrap();
        let m = mix_g(&z, &MixParams::default()).unwrap();
        assert_eq!(m.epsilon, 0.0);
        assert!(!m.saturated);
    }

    #[test]
    fn mix_g_rejects_empty_radii() {
        assert_eq!(MixParams::new(0.3, RadiiSet::Explicit(vec![])).unwrap_err(), Error::EmptyRadii);
        assert!(MixParams::new(1.0, RadiiSet::GridSteps).is_err());
    }

    #[test]
    fn mix_f_of_single_mode() {
        let f = ScalarField::from_fn(32, |x, _| 2.0 * (2.0 * PI * x).cos(), false).unwrap();
        assert!((mix_f(&f).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        let g = f.rescale(2).unwrap();
        assert!((mix_f(&g).unwrap() - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }

    fn odd_mode_series() -> f64 {
        // sum over odd k1, k2 of 16 / (pi^4 k1^2 k2^2 (k1^2 + k2^2))
        let mut terms = Vec::new();
        for k1 in (-1501i64..=1501).step_by(2) {
            for k2 in (-1501i64..=1501).step_by(2) {
                let (a, b) = ((k1 * k1) as f64, (k2 * k2) as f64);
                terms.push(16.0 / (PI.powi(4) * a * b * (a + b)));
            }
        }
        crate::torus::pairwise_sum(&terms).sqrt()
    }

    #[test]
    fn piecewise_constant_norm_of_checkerboards() {
        let v0 = odd_mode_series();
        let exact = mix_f_piecewise_constant(&[1.0, -1.0, -1.0, 1.0], 2).unwrap();
        assert!((exact - v0).abs() < 1e-9, "{exact} vs {v0}");
        let mut prev = exact;
        for k in 1..4u32 {
            let m = 16;
            let f = checkerboard(k, m.max(1 << (k + 2))).unwrap();
            let (n, cells) = (f.resolution(), f.samples().to_vec());
            let v = mix_f_piecewise_constant(&cells, n).unwrap();
            assert!((v / prev - 0.5).abs() < 1e-13);
            prev = v;
        }
        // the sampled spectrum converges to the same value
        let sampled = mix_f(&checkerboard(0, 512).unwrap()).unwrap();
        assert!((sampled - v0).abs() < 1e-4);
    }

    #[test]
    fn piecewise_constant_norm_matches_truncated_series() {
        let m = 4;
        let cells = [0.3, -1.2, 0.5, 0.1, -0.7, 0.9, 0.2, -0.4, 1.1, -0.3, -0.6, 0.8, 0.0, 0.4, -0.9, -0.2];
        let mean: f64 = cells.iter().sum::<f64>() / 16.0;
        let cells: Vec<f64> = cells.iter().map(|v| v - mean).collect();
        let exact = mix_f_piecewise_constant(&cells, m).unwrap();
        let spec = fft::forward_real(&cells, m);
        let sinc = |k: i64| if k == 0 { 1.0 } else { let u = PI * k as f64 / m as f64; u.sin() / u };
        let r = 300i64;
        let mut sum = 0.0;
        for k1 in -r..=r {
            for k2 in -r..=r {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let c = spec[k1.rem_euclid(4) as usize * 4 + k2.rem_euclid(4) as usize] / 16.0;
                sum += c.norm_sqr() * (sinc(k1) * sinc(k2)).powi(2) / (k1 * k1 + k2 * k2) as f64;
            }
        }
        assert!((sum.sqrt() - exact).abs() < 1e-6 * exact, "{} vs {exact}", sum.sqrt());
        assert!(mix_f_piecewise_constant(&[1.0; 4], 2).is_err());
    }
}
