//! Flow maps of the characteristic ODE and advection of scalars along them.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Interpolation, ScalarField};
use crate::torus::{node, torus_dist, Point};
use crate::velocity::VelocityModel;

/// Default Courant factor: `dt * sup|u| <= CFL / N`.
pub const CFL: f64 = 0.5;

/// Integrator tolerance folded into the Gronwall bounds.
pub const INTEGRATOR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Images of the grid nodes, seeded at time `seed_time` and carried to
/// `time`, as points of the universal cover.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub n: usize,
    pub seed_time: f64,
    pub time: f64,
    pub positions: Vec<Point>,
}

impl FlowMap {
    pub fn identity(n: usize, t: f64) -> Result<Self> {
        crate::grid::check_resolution(n)?;
        let positions = (0..n * n).map(|idx| node(idx / n, idx % n, n)).collect();
        Ok(Self { n, seed_time: t, time: t, positions })
    }

    pub fn direction(&self) -> Direction {
        if self.time >= self.seed_time {
            Direction::Forward
        } else {
            Direction::Backward
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Point {
        self.positions[(i % self.n) * self.n + j % self.n]
    }

    /// Cover displacement of node `(i, j)`.
    pub fn displacement(&self, i: usize, j: usize) -> Point {
        let p = self.get(i, j);
        let x = node(i % self.n, j % self.n, self.n);
        [p[0] - x[0], p[1] - x[1]]
    }

    /// Image of node `(i, j)` where the indices may run past the grid:
    /// each wrap adds one lattice period to the cover position.
    fn unwrapped(&self, i: i64, j: i64) -> Point {
        let n = self.n as i64;
        let (wi, wj) = (i.div_euclid(n), j.div_euclid(n));
        let p = self.positions[(i.rem_euclid(n) * n + j.rem_euclid(n)) as usize];
        [p[0] + wi as f64, p[1] + wj as f64]
    }

    /// Determinant of the central-difference Jacobian at every node.
    pub fn jacobian_determinant(&self) -> ScalarField {
        let n = self.n as i64;
        let inv = self.n as f64 / 2.0;
        let samples = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let (xp, xm) = (self.unwrapped(i + 1, j), self.unwrapped(i - 1, j));
                let (yp, ym) = (self.unwrapped(i, j + 1), self.unwrapped(i, j - 1));
                let a = (xp[0] - xm[0]) * inv;
                let c = (xp[1] - xm[1]) * inv;
                let b = (yp[0] - ym[0]) * inv;
                let d = (yp[1] - ym[1]) * inv;
                a * d - b * c
            })
            .collect();
        ScalarField::new(self.n, samples, false).expect("finite positions")
    }

    /// Binary export: `N` as `u64`, the time as `f64`, then `2 N^2`
    /// coordinates (x then y per node), all little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&self.time.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.positions.len() * 16);
        for p in &self.positions {
            buf.extend_from_slice(&p[0].to_le_bytes());
            buf.extend_from_slice(&p[1].to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }
}

/// Time segments of `[t0, t1]` (either order) between breakpoints, each
/// cut into equal steps no longer than `dt`.
fn schedule(model: &VelocityModel, t0: f64, t1: f64, dt: f64) -> Vec<(f64, f64, usize)> {
    let mut cuts = vec![t0];
    let mut inner = model.breakpoints(t0, t1);
    if t1 < t0 {
        inner.reverse();
    }
    cuts.extend(inner);
    cuts.push(t1);
    cuts.windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| {
            let steps = (((w[1] - w[0]).abs() / dt) - 1e-9).ceil().max(1.0) as usize;
            (w[0], w[1], steps)
        })
        .collect()
}

fn validate(model: &VelocityModel, t0: f64, t1: f64, dt: f64, n: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step {dt}")));
    }
    if !(t0.is_finite() && t1.is_finite()) || t0.min(t1) < 0.0 {
        return Err(Error::InvalidParameter(format!("times {t0}, {t1}")));
    }
    let horizon = model.horizon();
    if t0.max(t1) > horizon {
        return Err(Error::BeyondHorizon { t: t0.max(t1), horizon });
    }
    if !model.is_exact_shear() {
        let courant = dt * model.budget().sup_norm * n as f64;
        if courant > CFL {
            return Err(Error::Cfl { courant, limit: CFL });
        }
    }
    Ok(())
}

/// Classical fourth-order Runge-Kutta along one trajectory.
fn trajectory(model: &VelocityModel, mut p: Point, plan: &[(f64, f64, usize)]) -> Point {
    for &(a, b, steps) in plan {
        let h = (b - a) / steps as f64;
        for s in 0..steps {
            let t = a + s as f64 * h;
            let mid = t + 0.5 * h;
            let f = |tt: f64, q: Point| model.evaluate_piece(tt, mid, q);
            let k1 = f(t, p);
            let k2 = f(mid, [p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]]);
            let k3 = f(mid, [p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]]);
            let k4 = f(t + h, [p[0] + h * k3[0], p[1] + h * k3[1]]);
            p[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            p[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        }
    }
    p
}

/// Carries every node from `t0` to `t1`; `t1 < t0` integrates backward.
pub fn flow_map(model: &VelocityModel, t0: f64, t1: f64, dt: f64, n: usize) -> Result<FlowMap> {
    validate(model, t0, t1, dt, n)?;
    let start = FlowMap::identity(n, t0)?;
    let plan = schedule(model, t0, t1, dt);
    let positions = start.positions.par_iter().map(|&p| trajectory(model, p, &plan)).collect();
    Ok(FlowMap { n, seed_time: t0, time: t1, positions })
}

/// `rho(t, x) = rho_0(Phi^-1(t)(x))`: each node is traced back to time 0
/// and the initial datum is interpolated there.
pub fn advect(field: &ScalarField, model: &VelocityModel, t: f64, dt: f64) -> Result<ScalarField> {
    advect_with(field, model, t, dt, Interpolation::Bicubic)
}

pub fn advect_with(
    field: &ScalarField,
    model: &VelocityModel,
    t: f64,
    dt: f64,
    interpolation: Interpolation,
) -> Result<ScalarField> {
    if t == 0.0 {
        validate(model, 0.0, 0.0, dt, field.resolution())?;
        return Ok(field.clone());
    }
    let back = flow_map(model, t, 0.0, dt, field.resolution())?;
    let samples = back
        .positions
        .par_iter()
        .map(|p| field.interpolate(p[0], p[1], interpolation))
        .collect();
    ScalarField::new(field.resolution(), samples, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub pairs: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Smallest slack to either bound (negative when violated).
    pub margin: f64,
    pub pass: bool,
}

/// Checks `e^{-L t} <= d(Phi x, Phi y) / d(x, y) <= e^{L t}` in torus
/// distance on random node pairs.
pub fn gronwall_check(map: &FlowMap, lip: f64, pairs: usize, seed: u64) -> Result<GronwallReport> {
    if !lip.is_finite() || lip < 0.0 {
        return Err(Error::InvalidParameter(format!("Lipschitz budget {lip}")));
    }
    let n = map.n;
    let t = (map.time - map.seed_time).abs();
    let upper = (lip * t).exp() + INTEGRATOR_TOL;
    let lower = (-lip * t).exp() - INTEGRATOR_TOL;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut used = 0;
    while used < pairs {
        let a = rng.gen_range(0..n * n);
        let b = rng.gen_range(0..n * n);
        if a == b {
            continue;
        }
        let d0 = torus_dist(node(a / n, a % n, n), node(b / n, b % n, n));
        let d1 = torus_dist(map.positions[a], map.positions[b]);
        let r = d1 / d0;
        lo = lo.min(r);
        hi = hi.max(r);
        used += 1;
    }
    let margin = (upper - hi).min(lo - lower);
    Ok(GronwallReport { pairs, min_ratio: lo, max_ratio: hi, lower_bound: lower, upper_bound: upper, margin, pass: margin >= 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub mean: f64,
    pub shells: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub rows: Vec<NormRow>,
    pub rel_l1_drift: f64,
    pub rel_l2_drift: f64,
    pub rel_linf_drift: f64,
    pub mean_drift: f64,
}

/// Norm histories of a time series of advected fields, with drifts
/// measured against the first entry.
pub fn conservation_report(series: &[(f64, ScalarField)]) -> Result<ConservationReport> {
    let mut rows = Vec::with_capacity(series.len());
    for (t, f) in series {
        rows.push(NormRow {
            t: *t,
            l1: f.lp_norm(1.0)?,
            l2: f.lp_norm(2.0)?,
            linf: f.linf(),
            mean: f.mean(),
            shells: f.spectral().shell_energy(),
        });
    }
    let rel = |get: fn(&NormRow) -> f64| -> f64 {
        let Some(first) = rows.first() else { return 0.0 };
        let base = get(first);
        rows.iter()
            .map(|r| if base == 0.0 { get(r).abs() } else { (get(r) - base).abs() / base })
            .fold(0.0, f64::max)
    };
    let mean_drift = rows
        .first()
        .map(|f| rows.iter().map(|r| (r.mean - f.mean).abs()).fold(0.0, f64::max))
        .unwrap_or(0.0);
    Ok(ConservationReport {
        rel_l1_drift: rel(|r| r.l1),
        rel_l2_drift: rel(|r| r.l2),
        rel_linf_drift: rel(|r| r.linf),
        mean_drift,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{modes_field, Mode};
    use std::f64::consts::PI;

    #[test]
    fn translation_flow_is_exact() {
        let m = VelocityModel::translation([1.0, 0.0]).unwrap();
        let map = flow_map(&m, 0.0, 0.25, 0.01, 16).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let d = map.displacement(i, j);
                assert!((d[0] - 0.25).abs() < 1e-14 && d[1] == 0.0);
            }
        }
        assert_eq!(map.direction(), Direction::Forward);
    }

    #[test]
    fn shear_flow_matches_closed_form() {
        let a = 1.0;
        let m = VelocityModel::steady_shear(a).unwrap();
        let map = flow_map(&m, 0.0, 1.3, 0.05, 32).unwrap();
        for (idx, p) in map.positions.iter().enumerate() {
            let x0 = node(idx / 32, idx % 32, 32);
            let expected = x0[0] + 1.3 * a * (2.0 * PI * x0[1]).sin();
            assert!((p[0] - expected).abs() < 1e-8 && p[1] == x0[1]);
        }
    }

    #[test]
    fn schedule_respects_breakpoints() {
        let m = VelocityModel::alternating_shear(1.0, 0.5).unwrap();
        let plan = schedule(&m, 0.0, 1.2, 0.3);
        assert_eq!(plan, vec![(0.0, 0.5, 2), (0.5, 1.0, 2), (1.0, 1.2, 1)]);
        let back = schedule(&m, 1.2, 0.0, 0.3);
        assert_eq!(back[0], (1.2, 1.0, 1));
        assert_eq!(back.len(), 3);
    }

    #[test]
    fn cfl_is_enforced_for_sampled_fields() {
        let psi = ScalarField::from_fn(32, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin(), false).unwrap();
        let g = crate::velocity::GridVelocity::from_stream_function(&psi, Interpolation::Bicubic).unwrap();
        let m = VelocityModel::GridSampled(Box::new(g));
        assert!(matches!(flow_map(&m, 0.0, 1.0, 0.1, 32), Err(Error::Cfl { .. })));
        assert!(flow_map(&m, 0.0, 0.01, 0.001, 32).is_ok());
    }

    #[test]
    fn forward_backward_composition_is_identity() {
        let m = VelocityModel::alternating_shear(1.0, 0.5).unwrap();
        let fwd = flow_map(&m, 0.0, 1.7, 0.01, 16).unwrap();
        let plan = schedule(&m, 1.7, 0.0, 0.01);
        for (idx, p) in fwd.positions.iter().enumerate() {
            let back = trajectory(&m, *p, &plan);
            let x0 = node(idx / 16, idx % 16, 16);
            assert!((back[0] - x0[0]).hypot(back[1] - x0[1]) < 1e-6);
        }
    }

    #[test]
    fn commensurate_translation_is_a_cyclic_shift() {
        let f = modes_field(32, &[Mode { kx: 1, ky: 2, amplitude: 1.0, phase: 0.3 }]).unwrap();
        let m = VelocityModel::translation([1.0, 0.0]).unwrap();
        let g = advect(&f, &m, 3.0 / 32.0, 0.01).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                assert_eq!(g.get(i + 3, j), f.get(i, j));
            }
        }
        assert_eq!(advect(&f, &m, 0.0, 0.01).unwrap(), f);
    }

    #[test]
    fn jacobian_of_shear_is_one() {
        let m = VelocityModel::alternating_shear(0.5, 0.5).unwrap();
        let map = flow_map(&m, 0.0, 0.8, 0.01, 64).unwrap();
        let det = map.jacobian_determinant();
        assert!((det.mean() - 1.0).abs() < 1e-3);
        let (lo, hi) = det.min_max();
        assert!(lo > 0.9 && hi < 1.1, "{lo} {hi}");
    }

    #[test]
    fn gronwall_identity_and_translation() {
        let id = FlowMap::identity(32, 0.0).unwrap();
        let r = gronwall_check(&id, 0.0, 500, 1).unwrap();
        assert!(r.pass && (r.max_ratio - 1.0).abs() < 1e-15 && (r.min_ratio - 1.0).abs() < 1e-15);
        let m = VelocityModel::translation([0.3, 0.7]).unwrap();
        let map = flow_map(&m, 0.0, 2.0, 0.1, 32).unwrap();
        let r = gronwall_check(&map, 0.0, 500, 2).unwrap();
        assert!(r.pass && (r.max_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flowmap_export_layout() {
        let id = FlowMap::identity(8, 0.5).unwrap();
        let mut buf = Vec::new();
        id.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 2 * 64 * 8);
        assert_eq!(&buf[8..16], &0.5f64.to_le_bytes());
    }

    #[test]
    fn conservation_of_translated_field() {
        let f = modes_field(32, &[Mode { kx: 2, ky: 1, amplitude: 1.0, phase: 0.0 }]).unwrap();
        let m = VelocityModel::translation([1.0, 1.0]).unwrap();
        let series: Vec<(f64, ScalarField)> =
            (0..4).map(|j| (j as f64 / 32.0, advect(&f, &m, j as f64 / 32.0, 0.01).unwrap())).collect();
        let rep = conservation_report(&series).unwrap();
        assert_eq!(rep.rel_l2_drift, 0.0);
        assert_eq!(rep.mean_drift, 0.0);
        assert_eq!(rep.rows.len(), 4);
    }
}
