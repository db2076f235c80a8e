//! Divergence-free velocity fields on the torus.
//!
//! Every catalog model is constant in time between declared breakpoints,
//! so an integrator that never straddles a breakpoint may evaluate a whole
//! step inside one piece.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::bressan::BressanFlow;
use crate::error::{Error, Result};
use crate::grid::{Interpolation, ScalarField};
use crate::torus::{pairwise_sum, Point};

/// Sup-in-time regularity data of a velocity field.
///
/// `enstrophy` is `||grad u||_{L^2}`, i.e. `2 pi` times the homogeneous
/// `H^1` norm in integer wave numbers; `w1p_norm` is `||grad u||_{L^p}`
/// for `p = sobolev_p`. Unbounded entries are `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityBudget {
    pub lip: f64,
    pub kinetic: f64,
    pub enstrophy: f64,
    pub bv: f64,
    pub sup_norm: f64,
    pub sobolev_p: f64,
    pub w1p_norm: f64,
}

impl RegularityBudget {
    pub fn zero(p: f64) -> Self {
        Self { lip: 0.0, kinetic: 0.0, enstrophy: 0.0, bv: 0.0, sup_norm: 0.0, sobolev_p: p, w1p_norm: 0.0 }
    }

    /// `1 + ||Du||_{L^p}`, the rate factor of the Lagrangian estimates.
    pub fn rate_factor(&self) -> f64 {
        1.0 + self.w1p_norm
    }

    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("lip", self.lip),
            ("kinetic", self.kinetic),
            ("enstrophy", self.enstrophy),
            ("bv", self.bv),
            ("sup_norm", self.sup_norm),
            ("w1p_norm", self.w1p_norm),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.entries() {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("budget entry {name} = {v}")));
            }
        }
        if !(self.sobolev_p >= 1.0) {
            return Err(Error::BadExponent(self.sobolev_p));
        }
        if self.kinetic > self.sup_norm * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter("kinetic budget exceeds sup norm".into()));
        }
        Ok(())
    }
}

/// `(integral_0^1 |cos 2 pi s|^p ds)^{1/p}` by the midpoint rule, which is
/// spectrally accurate for this periodic integrand.
fn cos_lp(p: f64) -> f64 {
    let m = 4096;
    let v: Vec<f64> = (0..m)
        .map(|i| (2.0 * PI * (i as f64 + 0.5) / m as f64).cos().abs().powf(p))
        .collect();
    (pairwise_sum(&v) / m as f64).powf(1.0 / p)
}

fn shear_budget(a: f64, p: f64) -> RegularityBudget {
    RegularityBudget {
        lip: 2.0 * PI * a,
        kinetic: a / SQRT_2,
        enstrophy: SQRT_2 * PI * a,
        bv: 4.0 * a,
        sup_norm: a,
        sobolev_p: p,
        w1p_norm: 2.0 * PI * a * cos_lp(p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityKind {
    Translation,
    SteadyShear,
    AlternatingShear,
    Bressan,
    GridSampled,
}

/// Velocity sampled on a grid and interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridVelocity {
    pub ux: ScalarField,
    pub uy: ScalarField,
    pub interpolation: Interpolation,
    budget: RegularityBudget,
}

impl GridVelocity {
    /// Accepts sampled components whose spectral divergence is below `1e-8`.
    pub fn new(ux: ScalarField, uy: ScalarField, interpolation: Interpolation) -> Result<Self> {
        if ux.resolution() != uy.resolution() {
            return Err(Error::InvalidParameter("velocity components differ in resolution".into()));
        }
        let residual = spectral_divergence(&ux, &uy).lp_norm(2.0)?;
        if residual > 1e-8 {
            return Err(Error::Divergent(residual));
        }
        let budget = measure_budget(&ux, &uy, 2.0);
        Ok(Self { ux, uy, interpolation, budget })
    }

    /// `u = (d_y psi, -d_x psi)`, divergence-free up to rounding.
    pub fn from_stream_function(psi: &ScalarField, interpolation: Interpolation) -> Result<Self> {
        let (dx, dy) = psi.gradient();
        Self::new(dy, dx.map(|v| -v)?, interpolation)
    }

    pub fn budget(&self) -> RegularityBudget {
        self.budget
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VelocityModel {
    Translation { v: [f64; 2] },
    /// `u = (a sin(2 pi y), 0)`.
    SteadyShear { amplitude: f64 },
    /// Horizontal shear on `[2m tau, (2m+1) tau)`, vertical
    /// `(0, a sin(2 pi x))` on `[(2m+1) tau, (2m+2) tau)`.
    AlternatingShear { amplitude: f64, half_period: f64 },
    Bressan(BressanFlow),
    GridSampled(Box<GridVelocity>),
}

impl VelocityModel {
    pub fn translation(v: [f64; 2]) -> Result<Self> {
        if !(v[0].is_finite() && v[1].is_finite()) {
            return Err(Error::InvalidParameter("translation vector must be finite".into()));
        }
        Ok(Self::Translation { v })
    }

    pub fn steady_shear(amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!("shear amplitude {amplitude}")));
        }
        Ok(Self::SteadyShear { amplitude })
    }

    pub fn alternating_shear(amplitude: f64, half_period: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite() && half_period > 0.0 && half_period.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alternating shear needs a, tau > 0 (got {amplitude}, {half_period})"
            )));
        }
        Ok(Self::AlternatingShear { amplitude, half_period })
    }

    pub fn kind(&self) -> VelocityKind {
        match self {
            Self::Translation { .. } => VelocityKind::Translation,
            Self::SteadyShear { .. } => VelocityKind::SteadyShear,
            Self::AlternatingShear { .. } => VelocityKind::AlternatingShear,
            Self::Bressan(_) => VelocityKind::Bressan,
            Self::GridSampled(_) => VelocityKind::GridSampled,
        }
    }

    /// Models whose trajectories are straight lines within each piece, so
    /// the one-step integrator is exact and no CFL restriction applies.
    pub fn is_exact_shear(&self) -> bool {
        !matches!(self, Self::GridSampled(_))
    }

    /// Velocity at time `t` and point `p` (coordinates read modulo 1).
    pub fn evaluate(&self, t: f64, p: Point) -> Point {
        self.evaluate_piece(t, t, p)
    }

    /// As [`evaluate`](Self::evaluate), with the time piece selected by
    /// `piece_time` rather than `t`. Integrators pass a time strictly inside
    /// the current step so that step ends on breakpoints stay in the piece.
    pub fn evaluate_piece(&self, _t: f64, piece_time: f64, p: Point) -> Point {
        match self {
            Self::Translation { v } => *v,
            Self::SteadyShear { amplitude } => [amplitude * (2.0 * PI * p[1]).sin(), 0.0],
            Self::AlternatingShear { amplitude, half_period } => {
                let piece = (piece_time / half_period).floor() as i64;
                if piece.rem_euclid(2) == 0 {
                    [amplitude * (2.0 * PI * p[1]).sin(), 0.0]
                } else {
                    [0.0, amplitude * (2.0 * PI * p[0]).sin()]
                }
            }
            Self::Bressan(flow) => flow.velocity(piece_time, p).unwrap_or([0.0, 0.0]),
            Self::GridSampled(g) => [
                g.ux.interpolate(p[0], p[1], g.interpolation),
                g.uy.interpolate(p[0], p[1], g.interpolation),
            ],
        }
    }

    /// Time breakpoints strictly inside `(t0, t1)`, ascending.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let (lo, hi) = (t0.min(t1), t0.max(t1));
        match self {
            Self::AlternatingShear { half_period, .. } => {
                let mut m = (lo / half_period).floor() as i64 + 1;
                let mut out = Vec::new();
                while (m as f64) * half_period < hi {
                    let b = m as f64 * half_period;
                    if b > lo {
                        out.push(b);
                    }
                    m += 1;
                }
                out
            }
            Self::Bressan(flow) => flow.breakpoints(lo, hi),
            _ => Vec::new(),
        }
    }

    /// Latest time at which the model is defined (infinite unless the
    /// scheme completes).
    pub fn horizon(&self) -> f64 {
        match self {
            Self::Bressan(flow) => flow.horizon(),
            _ => f64::INFINITY,
        }
    }

    /// Sup-in-time budget with `W^{1,2}` data.
    pub fn budget(&self) -> RegularityBudget {
        self.budget_for(2.0)
    }

    /// Sup-in-time budget with `W^{1,p}` data.
    pub fn budget_for(&self, p: f64) -> RegularityBudget {
        match self {
            Self::Translation { v } => {
                let s = v[0].hypot(v[1]);
                RegularityBudget { kinetic: s, sup_norm: s, ..RegularityBudget::zero(p) }
            }
            Self::SteadyShear { amplitude } | Self::AlternatingShear { amplitude, .. } => {
                shear_budget(*amplitude, p)
            }
            Self::Bressan(flow) => flow.budget(p),
            Self::GridSampled(g) => {
                if p == 2.0 {
                    g.budget
                } else {
                    measure_budget(&g.ux, &g.uy, p)
                }
            }
        }
    }

    /// Budget of the field frozen at time `t`.
    pub fn budget_at(&self, t: f64, p: f64) -> RegularityBudget {
        match self {
            Self::Bressan(flow) => flow.budget_at(t, p).unwrap_or(RegularityBudget::zero(p)),
            _ => self.budget_for(p),
        }
    }

    /// Components sampled at the nodes of an `n x n` grid.
    pub fn sample(&self, t: f64, n: usize) -> Result<(ScalarField, ScalarField)> {
        let ux = ScalarField::from_fn(n, |x, y| self.evaluate(t, [x, y])[0], false)?;
        let uy = ScalarField::from_fn(n, |x, y| self.evaluate(t, [x, y])[1], false)?;
        Ok((ux, uy))
    }
}

fn spectral_divergence(ux: &ScalarField, uy: &ScalarField) -> ScalarField {
    let (dxx, _) = ux.gradient();
    let (_, dyy) = uy.gradient();
    let s = dxx.samples().iter().zip(dyy.samples()).map(|(a, b)| a + b).collect();
    ScalarField::new(ux.resolution(), s, false).expect("finite")
}

/// Central-difference divergence at the nodes.
fn fd_divergence(ux: &ScalarField, uy: &ScalarField) -> ScalarField {
    let n = ux.resolution();
    let inv = n as f64 / 2.0;
    let s = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            (ux.get(i + 1, j) - ux.get(i + n - 1, j)) * inv + (uy.get(i, j + 1) - uy.get(i, j + n - 1)) * inv
        })
        .collect();
    ScalarField::new(n, s, false).expect("finite")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    /// Discrete `L^2` norm of the spectral divergence of the sampled field.
    pub spectral_l2: f64,
    /// Central-difference divergence at every node.
    pub finite_difference: ScalarField,
}

pub fn divergence_check(model: &VelocityModel, t: f64, n: usize) -> Result<DivergenceReport> {
    let (ux, uy) = model.sample(t, n)?;
    Ok(DivergenceReport {
        spectral_l2: spectral_divergence(&ux, &uy).lp_norm(2.0)?,
        finite_difference: fd_divergence(&ux, &uy),
    })
}

/// Budget read off sampled components: spectral derivatives for the
/// Lipschitz, enstrophy and `W^{1,p}` entries, forward differences for the
/// total variation.
fn measure_budget(ux: &ScalarField, uy: &ScalarField, p: f64) -> RegularityBudget {
    let n = ux.resolution();
    let (a, b) = ux.gradient();
    let (c, d) = uy.gradient();
    let mut lip: f64 = 0.0;
    let mut frob_p = Vec::with_capacity(n * n);
    for idx in 0..n * n {
        let m = [[a.samples()[idx], b.samples()[idx]], [c.samples()[idx], d.samples()[idx]]];
        lip = lip.max(operator_norm(m));
        let f2 = m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2);
        frob_p.push(f2.sqrt().powf(p));
    }
    let speed2: Vec<f64> = ux.samples().iter().zip(uy.samples()).map(|(x, y)| x * x + y * y).collect();
    let sup = speed2.iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
    let two_pi = 2.0 * PI;
    let h1 = (ux.sobolev_norm(1.0).unwrap_or(0.0).powi(2) + uy.sobolev_norm(1.0).unwrap_or(0.0).powi(2)).sqrt();
    let h = 1.0 / n as f64;
    let tv: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let dx = [ux.get(i + 1, j) - ux.get(i, j), uy.get(i + 1, j) - uy.get(i, j)];
            let dy = [ux.get(i, j + 1) - ux.get(i, j), uy.get(i, j + 1) - uy.get(i, j)];
            h * (dx[0] * dx[0] + dx[1] * dx[1] + dy[0] * dy[0] + dy[1] * dy[1]).sqrt()
        })
        .collect();
    RegularityBudget {
        lip,
        kinetic: (pairwise_sum(&speed2) / (n * n) as f64).sqrt(),
        enstrophy: two_pi * h1,
        bv: pairwise_sum(&tv),
        sup_norm: sup,
        sobolev_p: p,
        w1p_norm: (pairwise_sum(&frob_p) / (n * n) as f64).powf(1.0 / p),
    }
}

/// Largest singular value of a 2x2 matrix.
fn operator_norm(m: [[f64; 2]; 2]) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    ((s + disc) / 2.0).sqrt()
}

/// Budget measured on an `n x n` sample of the field at time `t`.
pub fn probe_budget(model: &VelocityModel, t: f64, n: usize, p: f64) -> Result<RegularityBudget> {
    let (ux, uy) = model.sample(t, n)?;
    Ok(measure_budget(&ux, &uy, p))
}

/// Checks that every finite declared entry is at least `(1 - rel)` times
/// the probed value; returns the offending entry names.
pub fn budget_shortfalls(declared: &RegularityBudget, probed: &RegularityBudget, rel: f64) -> Vec<&'static str> {
    declared
        .entries()
        .iter()
        .zip(probed.entries())
        .filter(|((_, d), (_, m))| d.is_finite() && *d < (1.0 - rel) * m)
        .map(|((name, _), _)| *name)
        .collect()
}
