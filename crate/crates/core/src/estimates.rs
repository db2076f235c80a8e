//! Maximal functions, the logarithmic flow functional `G`, Lusin-Lipschitz
//! extraction and the geometric lower bound built from them.
//!
//! Suprema over radii and times are realized as maxima over finite sets,
//! so every quantity here is an inner approximation of its continuum
//! counterpart. All estimate formulas use torus distance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::mixing::{binary_kappa, disk_offsets, half_half, mix_g, MixG, MixParams, PreparedField, RadiiSet};
use crate::torus::{lattice_offset, node, torus_dist};
use crate::transport::{advect, flow_map, FlowMap};
use crate::velocity::{RegularityBudget, VelocityModel};

#[derive(Debug, Clone, PartialEq)]
pub struct MaximalField {
    /// Radii used besides the single-node one.
    pub radii: Vec<f64>,
    pub values: ScalarField,
}

/// `Mf(x)`: the largest average of `|f|` over the single node `x` and the
/// discrete balls `B(x, r)`, `r` in the radii set.
pub fn maximal_function(field: &ScalarField, radii: &RadiiSet, params: &MixParams) -> Result<MaximalField> {
    let n = field.resolution();
    let radii = radii.resolve(n)?;
    let abs = field.abs();
    let prepared = PreparedField::new(&abs);
    let mut best = abs.samples().to_vec();
    for &r in &radii {
        let avg = prepared.average(&*params.kernel(n, r)?);
        for (b, a) in best.iter_mut().zip(avg) {
            *b = b.max(a);
        }
    }
    Ok(MaximalField { radii, values: ScalarField::new(n, best, false)? })
}

/// `sup_lambda lambda |{g > lambda}|` over all levels, attained in the
/// limit `lambda -> v` from below at a sample value `v`.
pub fn weak_quantity(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    let total = v.len() as f64;
    let mut best: f64 = 0.0;
    for j in 0..v.len() {
        // last index of a tie group counts every value >= v[j]
        if j + 1 < v.len() && v[j + 1] == v[j] {
            continue;
        }
        best = best.max(v[j] * (j + 1) as f64 / total);
    }
    best
}

/// `lambda |{g > lambda}|` at the given levels.
pub fn level_quantity(values: &[f64], levels: &[f64]) -> Vec<f64> {
    let total = values.len() as f64;
    levels
        .iter()
        .map(|&l| l * values.iter().filter(|v| v.abs() > l).count() as f64 / total)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakTypeReport {
    pub l1: f64,
    /// `sup_lambda lambda |{Mf > lambda}|`.
    pub weak_maximal: f64,
    /// `sup_lambda lambda |{|f| > lambda}|`.
    pub weak_field: f64,
    pub ratio: f64,
    /// `weak_field <= l1`, compared without tolerance.
    pub chebyshev: bool,
    pub at_levels: Vec<f64>,
}

pub fn weak_type_probe(field: &ScalarField, maximal: &MaximalField, levels: &[f64]) -> Result<WeakTypeReport> {
    let l1 = field.lp_norm(1.0)?;
    let weak_maximal = weak_quantity(maximal.values.samples());
    let weak_field = weak_quantity(field.samples());
    Ok(WeakTypeReport {
        l1,
        weak_maximal,
        weak_field,
        ratio: if l1 == 0.0 { 0.0 } else { weak_maximal / l1 },
        chebyshev: weak_field <= l1,
        at_levels: level_quantity(maximal.values.samples(), levels),
    })
}

/// `||Mf||_2 / ||f||_2`.
pub fn strong_ratio(field: &ScalarField, maximal: &MaximalField) -> Result<f64> {
    let l2 = field.lp_norm(2.0)?;
    Ok(if l2 == 0.0 { 0.0 } else { maximal.values.lp_norm(2.0)? / l2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PairSampling {
    Exhaustive,
    Random { count: usize, seed: u64 },
}

fn pairs_for(n_items: usize, sampling: PairSampling) -> Vec<(usize, usize)> {
    match sampling {
        PairSampling::Exhaustive => {
            (0..n_items).flat_map(|a| ((a + 1)..n_items).map(move |b| (a, b))).collect()
        }
        PairSampling::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(count);
            if n_items < 2 {
                return out;
            }
            while out.len() < count {
                let (a, b) = (rng.gen_range(0..n_items), rng.gen_range(0..n_items));
                if a != b {
                    out.push((a, b));
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementsReport {
    pub pairs: usize,
    /// Largest `|f(x)-f(y)| / (d(x,y) (MDf(x) + MDf(y)))`.
    pub max_ratio: f64,
    /// Pairs with `MDf(x) + MDf(y) = 0` and `f(x) != f(y)`.
    pub degenerate: usize,
}

/// Empirical constant in `|f(x)-f(y)| <= C d(x,y) (MDf(x) + MDf(y))`.
pub fn increments_check(
    field: &ScalarField,
    grad_maximal: &MaximalField,
    sampling: PairSampling,
) -> Result<IncrementsReport> {
    let n = field.resolution();
    if grad_maximal.values.resolution() != n {
        return Err(Error::InvalidParameter("gradient maximal function at another resolution".into()));
    }
    let pairs = pairs_for(n * n, sampling);
    let m = grad_maximal.values.samples();
    let f = field.samples();
    let (max_ratio, degenerate) = pairs
        .par_iter()
        .map(|&(a, b)| {
            let df = (f[a] - f[b]).abs();
            let den = torus_dist(node(a / n, a % n, n), node(b / n, b % n, n)) * (m[a] + m[b]);
            if den == 0.0 {
                (0.0, usize::from(df != 0.0))
            } else {
                (df / den, 0)
            }
        })
        .reduce(|| (0.0, 0), |x, y| (x.0.max(y.0), x.1 + y.1));
    Ok(IncrementsReport { pairs: pairs.len(), max_ratio, degenerate })
}

/// `{ 2^j / N : 2^j <= N/2 }`, the default radii for `G`.
pub fn dyadic_radii(n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut j = 1;
    while j <= n / 2 {
        out.push(j as f64 / n as f64);
        j *= 2;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GResult {
    pub p: f64,
    pub horizon: f64,
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    /// `g(x) = max_t max_r avg_{B(x,r)} log(1 + d(Phi x, Phi y) / r)`.
    pub integrand: ScalarField,
    /// `||g||_{L^p}`.
    pub value: f64,
}

/// The functional `G` of a family of flow maps (one per time) sharing the
/// seed grid. Ball averages are direct sums over the discrete balls.
pub fn g_functional(flows: &[FlowMap], p: f64, radii: &[f64]) -> Result<GResult> {
    if !(p > 1.0) {
        return Err(Error::BadExponent(p));
    }
    let first = flows.first().ok_or_else(|| Error::InvalidParameter("no flow maps".into()))?;
    let n = first.n;
    if flows.iter().any(|f| f.n != n) {
        return Err(Error::InvalidParameter("flow maps differ in resolution".into()));
    }
    if radii.is_empty() {
        return Err(Error::EmptyRadii);
    }
    let balls: Vec<(f64, Vec<(usize, usize)>)> = radii.iter().map(|&r| (r, disk_offsets(n, r))).collect();
    let g: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let mut best: f64 = 0.0;
            for flow in flows {
                let px = flow.positions[idx];
                for (r, ball) in &balls {
                    let s: f64 = ball
                        .iter()
                        .map(|&(a, b)| {
                            let q = flow.positions[((i + a) % n) * n + (j + b) % n];
                            (torus_dist(px, q) / r).ln_1p()
                        })
                        .sum();
                    best = best.max(s / ball.len() as f64);
                }
            }
            best
        })
        .collect();
    let integrand = ScalarField::new(n, g, false)?;
    let value = integrand.lp_norm(p)?;
    let times: Vec<f64> = flows.iter().map(|f| f.time).collect();
    let horizon = flows.iter().map(|f| (f.time - f.seed_time).abs()).fold(0.0, f64::max);
    Ok(GResult { p, horizon, radii: radii.to_vec(), times, integrand, value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GQuantReport {
    pub value: f64,
    /// `1 + ||Du||_{L^1([0,T]; L^p)}` from the declared budget.
    pub denominator: f64,
    pub ratio: f64,
}

pub fn gquant_report(g: &GResult, budget: &RegularityBudget) -> Result<GQuantReport> {
    if budget.sobolev_p != g.p || !budget.w1p_norm.is_finite() {
        return Err(Error::MissingBudget("w1p_norm"));
    }
    let denominator = 1.0 + g.horizon * budget.w1p_norm;
    Ok(GQuantReport { value: g.value, denominator, ratio: g.value / denominator })
}

/// `|B(0, r)| / |B(0, r) ∩ B(o, r)|` with `r = d(0, o)`, for every
/// nonzero residue offset `o`, counted on the grid.
pub fn overlap_constants(n: usize) -> Vec<f64> {
    (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (idx / n, idx % n);
            if idx == 0 {
                return 1.0;
            }
            let r = torus_dist([0.0, 0.0], node(a, b, n));
            let ball = disk_offsets(n, r);
            let rr = (r * n as f64).powi(2) * (1.0 + 1e-12);
            let common = ball
                .iter()
                .filter(|&&(u, v)| {
                    let du = lattice_offset(u + n - a, n) as f64;
                    let dv = lattice_offset(v + n - b, n) as f64;
                    du * du + dv * dv <= rr
                })
                .count();
            ball.len() as f64 / common as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LusinResult {
    pub eta: f64,
    pub lambda: f64,
    /// `true` for nodes in `K`.
    pub mask: Vec<bool>,
    pub excluded_fraction: f64,
    /// Largest overlap constant met among the checked pairs.
    pub c2: f64,
    pub lip_estimate: f64,
    /// `exp(2 c2 lambda)` with the largest `c2`.
    pub bound: f64,
    pub pairs_checked: usize,
    pub violations: usize,
    /// Smallest `exp(2 c2(pair) lambda) - ratio` over checked pairs.
    pub worst_margin: f64,
}

/// Empirical `(1 - eta)`-quantile of the samples.
pub fn quantile_threshold(values: &[f64], eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} not in (0,1)")));
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let rank = ((1.0 - eta) * v.len() as f64).ceil() as usize;
    if rank == 0 {
        return Err(Error::EmptyGoodSet(eta));
    }
    Ok(v[rank - 1])
}

/// Restricts the flow to `K = {g <= lambda_eta}` and checks
/// `d(Phi x, Phi x') <= d(x, x') exp(2 c2 lambda_eta)` on pairs of `K`,
/// with `c2` the grid overlap constant of the pair.
pub fn lusin_extract(g: &GResult, flow: &FlowMap, eta: f64, sampling: PairSampling) -> Result<LusinResult> {
    let n = flow.n;
    if g.integrand.resolution() != n {
        return Err(Error::InvalidParameter("G and flow differ in resolution".into()));
    }
    let values = g.integrand.samples();
    let lambda = quantile_threshold(values, eta)?;
    let mask: Vec<bool> = values.iter().map(|&v| v <= lambda).collect();
    let good: Vec<usize> = (0..n * n).filter(|&i| mask[i]).collect();
    if good.is_empty() {
        return Err(Error::EmptyGoodSet(eta));
    }
    let c2 = overlap_constants(n);
    let pairs = pairs_for(good.len(), sampling);
    let (lip, worst, violations, c2_max) = pairs
        .par_iter()
        .map(|&(u, v)| {
            let (a, b) = (good[u], good[v]);
            let (ai, aj, bi, bj) = (a / n, a % n, b / n, b % n);
            let off = ((bi + n - ai) % n) * n + (bj + n - aj) % n;
            let d0 = torus_dist(node(ai, aj, n), node(bi, bj, n));
            let ratio = torus_dist(flow.positions[a], flow.positions[b]) / d0;
            let margin = (2.0 * c2[off] * lambda).exp() - ratio;
            (ratio, margin, usize::from(margin < 0.0), c2[off])
        })
        .reduce(
            || (0.0, f64::INFINITY, 0, 0.0),
            |x, y| (x.0.max(y.0), x.1.min(y.1), x.2 + y.2, x.3.max(y.3)),
        );
    let excluded = mask.iter().filter(|m| !**m).count();
    Ok(LusinResult {
        eta,
        lambda,
        excluded_fraction: excluded as f64 / (n * n) as f64,
        mask,
        c2: c2_max,
        lip_estimate: lip,
        bound: (2.0 * c2_max * lambda).exp(),
        pairs_checked: pairs.len(),
        violations,
        worst_margin: worst,
    })
}

/// Largest admissible exceptional measure in the covering argument:
/// `eta (1 + 25 / kappa) < 1/6`, taken with a 1% safety factor.
pub fn default_eta(kappa_prime: f64) -> f64 {
    let kappa = binary_kappa(kappa_prime);
    0.99 * (1.0 / 6.0) / (1.0 + 25.0 / kappa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Resolution of the advected scalar.
    pub n: usize,
    /// Resolution of the flow maps entering `G`.
    pub flow_resolution: usize,
    pub times: Vec<f64>,
    pub dt: f64,
    pub kappa_prime: f64,
    pub eta: Option<f64>,
    pub p: f64,
    pub lusin_pairs: usize,
    pub tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n: 256,
            flow_resolution: 64,
            times: (0..=16).map(|j| j as f64 * 0.5).collect(),
            dt: 5e-3,
            kappa_prime: 1.0 / 3.0,
            eta: None,
            p: 2.0,
            lusin_pairs: 20_000,
            tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineBound {
    pub eta: f64,
    /// `M = 1 + sup_t ||Du||_{L^p}`.
    pub m_factor: f64,
    pub c2: f64,
    pub lambdas: Vec<f64>,
    /// Lusin checks on the backward maps, one per positive time.
    pub lusin_violations: usize,
    pub beta: f64,
    /// `(1/6) exp(-beta M t)`.
    pub curve: Vec<f64>,
    /// `(1/4) exp(-L t)` when the velocity is Lipschitz.
    pub lipschitz_curve: Option<Vec<f64>>,
}

/// The measured constant chain: for each time, `G` of the backward map,
/// its `(1 - eta)`-quantile `lambda`, the overlap constant `c2`, and
/// `beta = max_t 2 c2 lambda(t) / (M t)`.
pub fn pipeline_bound(model: &VelocityModel, cfg: &PipelineConfig) -> Result<PipelineBound> {
    let eta = cfg.eta.unwrap_or_else(|| default_eta(cfg.kappa_prime));
    let budget = model.budget_for(cfg.p);
    if !budget.w1p_norm.is_finite() {
        return Err(Error::MissingBudget("w1p_norm"));
    }
    let m_factor = budget.rate_factor();
    let radii = dyadic_radii(cfg.flow_resolution);
    let mut lambdas = Vec::with_capacity(cfg.times.len());
    let mut beta: f64 = 0.0;
    let mut c2: f64 = 0.0;
    let mut violations = 0;
    for (k, &t) in cfg.times.iter().enumerate() {
        if t <= 0.0 {
            lambdas.push(0.0);
            continue;
        }
        let back = flow_map(model, t, 0.0, cfg.dt, cfg.flow_resolution)?;
        let g = g_functional(std::slice::from_ref(&back), cfg.p, &radii)?;
        let sampling = PairSampling::Random { count: cfg.lusin_pairs, seed: 17 + k as u64 };
        let lusin = lusin_extract(&g, &back, eta, sampling)?;
        violations += lusin.violations;
        c2 = c2.max(lusin.c2);
        lambdas.push(lusin.lambda);
        beta = beta.max(2.0 * lusin.c2 * lusin.lambda / (m_factor * t));
    }
    let curve = cfg.times.iter().map(|t| (-beta * m_factor * t).exp() / 6.0).collect();
    let lipschitz_curve = budget
        .lip
        .is_finite()
        .then(|| cfg.times.iter().map(|t| 0.25 * (-budget.lip * t).exp()).collect());
    Ok(PipelineBound { eta, m_factor, c2, lambdas, lusin_violations: violations, beta, curve, lipschitz_curve })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub times: Vec<f64>,
    pub mix_g: Vec<MixG>,
    pub bound: PipelineBound,
    pub margins: Vec<f64>,
    pub pass: bool,
}

/// Advects the half/half datum and compares `mix_g(t)` with the bound.
pub fn geometric_bound_pipeline(model: &VelocityModel, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let datum = half_half(cfg.n)?;
    let params = MixParams::new(cfg.kappa_prime, RadiiSet::GridSteps)?;
    let mut observed = Vec::with_capacity(cfg.times.len());
    for &t in &cfg.times {
        let rho = advect(&datum, model, t, cfg.dt)?;
        observed.push(mix_g(&rho, &params)?);
    }
    let bound = pipeline_bound(model, cfg)?;
    Ok(pipeline_report(&cfg.times, observed, bound, cfg.tolerance))
}

/// Margins `mix_g - bound`; passes when every observed scale is positive
/// and no margin falls below `-tolerance * mix_g(0)`.
pub fn pipeline_report(times: &[f64], mix_g: Vec<MixG>, bound: PipelineBound, tolerance: f64) -> PipelineReport {
    let margins: Vec<f64> = mix_g.iter().zip(&bound.curve).map(|(m, b)| m.epsilon - b).collect();
    let slack = tolerance * mix_g.first().map(|m| m.epsilon).unwrap_or(0.0);
    let pass = mix_g.iter().all(|m| m.epsilon > 0.0) && margins.iter().all(|&m| m >= -slack);
    PipelineReport { times: times.to_vec(), mix_g, bound, margins, pass }
}
