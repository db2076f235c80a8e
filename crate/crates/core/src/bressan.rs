//! The slice-and-dice shear scheme on dyadic checkerboards.
//!
//! Step `k` starts from the checkerboard of side `2^-(k+1)` and ends on the
//! one of side `2^-(k+2)`. It is made of two shears whose channels are
//! cells of width `w = 2^-(k+2)`; on the `2^(k+2)` lattice of such cells:
//!
//! * stage one moves row `b` by `+w` in `x` if `b mod 4` is 1 or 2 and by
//!   `-w` otherwise;
//! * stage two moves column `a` by `+w` in `y` if `a mod 4` is 2 or 3 and
//!   leaves it at rest otherwise.
//!
//! Both stages are permutations of cells, so the configurations are
//! evolved exactly. Each stage lasts half of the step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::mixing::{mix_f, mix_f_piecewise_constant, mix_g, MixG, MixParams};
use crate::torus::Point;
use crate::velocity::RegularityBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timeline {
    /// Step `k` occupies `[1 - 2^-k, 1 - 2^-(k+1))`.
    Dyadic,
    /// Step `k` occupies `[k, k + 1)`.
    Unit,
}

impl Timeline {
    pub fn step_start(self, k: u32) -> f64 {
        match self {
            Timeline::Dyadic => 1.0 - 0.5f64.powi(k as i32),
            Timeline::Unit => k as f64,
        }
    }

    pub fn step_duration(self, k: u32) -> f64 {
        match self {
            Timeline::Dyadic => 0.5f64.powi(k as i32 + 1),
            Timeline::Unit => 1.0,
        }
    }

    pub fn horizon(self) -> f64 {
        match self {
            Timeline::Dyadic => 1.0,
            Timeline::Unit => f64::INFINITY,
        }
    }

    /// Step index and stage (0 or 1) active at time `t`.
    pub fn locate(self, t: f64) -> Result<(u32, usize)> {
        if !(t >= 0.0) || t >= self.horizon() {
            return Err(Error::BeyondHorizon { t, horizon: self.horizon() });
        }
        let k = match self {
            Timeline::Unit => t.floor() as u32,
            Timeline::Dyadic => {
                let mut k = 0;
                while self.step_start(k + 1) <= t {
                    k += 1;
                    if k > 60 {
                        return Err(Error::BeyondHorizon { t, horizon: 1.0 });
                    }
                }
                k
            }
        };
        let local = (t - self.step_start(k)) / self.step_duration(k);
        Ok((k, usize::from(local >= 0.5)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Channels are rows; motion along `x`.
    Horizontal,
    /// Channels are columns; motion along `y`.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearStage {
    pub axis: Axis,
    pub level: u32,
    pub channel_width: f64,
    /// Shift of channel `c`, in channel widths, is `pattern[c mod 4]`.
    pub pattern: [i64; 4],
    pub start: f64,
    pub duration: f64,
}

impl ShearStage {
    pub fn channels(&self) -> usize {
        1 << (self.level + 2)
    }

    pub fn shift(&self, channel: usize) -> i64 {
        self.pattern[channel % 4]
    }

    /// Largest channel speed, displacement over duration.
    pub fn speed(&self) -> f64 {
        let m = self.pattern.iter().map(|s| s.abs()).max().unwrap_or(0) as f64;
        m * self.channel_width / self.duration
    }

    pub fn channel_velocity(&self, channel: usize) -> f64 {
        self.shift(channel) as f64 * self.channel_width / self.duration
    }

    /// Sum over channel interfaces of jump size times interface length
    /// (every interface spans the unit torus).
    pub fn bv(&self) -> f64 {
        let c = self.channels();
        (0..c)
            .map(|b| (self.channel_velocity((b + 1) % c) - self.channel_velocity(b)).abs())
            .sum()
    }

    /// `L^2` norm of the stage velocity.
    pub fn kinetic(&self) -> f64 {
        let c = self.channels();
        let e: f64 = (0..c).map(|b| self.channel_velocity(b).powi(2)).sum::<f64>() / c as f64;
        e.sqrt()
    }

    pub fn velocity(&self, p: Point) -> Point {
        let c = self.channels();
        let coord = match self.axis {
            Axis::Horizontal => p[1],
            Axis::Vertical => p[0],
        };
        let channel = ((coord * c as f64).floor() as i64).rem_euclid(c as i64) as usize;
        let v = self.channel_velocity(channel);
        match self.axis {
            Axis::Horizontal => [v, 0.0],
            Axis::Vertical => [0.0, v],
        }
    }

    /// Applies the stage (or its inverse) to a row-major `m x m` cell array
    /// where `m` is a multiple of the channel count.
    fn permute<T: Copy>(&self, cells: &[T], m: usize, inverse: bool) -> Vec<T> {
        let c = self.channels();
        let width = m / c;
        let sign = if inverse { -1 } else { 1 };
        let mut out = cells.to_vec();
        for a in 0..m {
            for b in 0..m {
                let (src_a, src_b) = match self.axis {
                    Axis::Horizontal => {
                        let d = sign * self.shift(b / width) * width as i64;
                        ((a as i64 - d).rem_euclid(m as i64) as usize, b)
                    }
                    Axis::Vertical => {
                        let d = sign * self.shift(a / width) * width as i64;
                        (a, (b as i64 - d).rem_euclid(m as i64) as usize)
                    }
                };
                out[a * m + b] = cells[src_a * m + src_b];
            }
        }
        out
    }
}

/// The two shears of step `k` placed on the given timeline.
pub fn step_stages(k: u32, timeline: Timeline) -> [ShearStage; 2] {
    let start = timeline.step_start(k);
    let half = timeline.step_duration(k) / 2.0;
    let w = 0.5f64.powi(k as i32 + 2);
    [
        ShearStage { axis: Axis::Horizontal, level: k, channel_width: w, pattern: [-1, 1, 1, -1], start, duration: half },
        ShearStage { axis: Axis::Vertical, level: k, channel_width: w, pattern: [0, 0, 1, 1], start: start + half, duration: half },
    ]
}

fn check_level(k: u32, n: usize) -> Result<()> {
    crate::grid::check_resolution(n)?;
    if k > 40 || n % (1usize << (k + 2)) != 0 {
        return Err(Error::Incompatible { n, level: k });
    }
    Ok(())
}

/// `(-1)^(floor(2^(k+1) x) + floor(2^(k+1) y))` at the nodes.
pub fn checkerboard(k: u32, n: usize) -> Result<ScalarField> {
    check_level(k, n)?;
    let side = n >> (k + 1);
    let samples = (0..n * n)
        .map(|idx| if ((idx / n) / side + (idx % n) / side) % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    ScalarField::new(n, samples, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Whole,
    AfterFirstSplit,
}

/// Configuration of the scheme, held as signs on the `2^(k+2)` cell lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct BressanState {
    pub level: u32,
    pub phase: Phase,
    pub timeline: Timeline,
    cells: Vec<i8>,
}

impl BressanState {
    /// The checkerboard of level `k` at the start of step `k`.
    pub fn new(level: u32, timeline: Timeline) -> Result<Self> {
        if level > 12 {
            return Err(Error::InvalidParameter(format!("level {level} too fine to hold exactly")));
        }
        let m = 1usize << (level + 2);
        let cells = (0..m * m)
            .map(|idx| if ((idx / m) / 2 + (idx % m) / 2) % 2 == 0 { 1 } else { -1 })
            .collect();
        Ok(Self { level, phase: Phase::Whole, timeline, cells })
    }

    pub fn lattice(&self) -> usize {
        1 << (self.level + 2)
    }

    pub fn time(&self) -> f64 {
        let t = self.timeline.step_start(self.level);
        match self.phase {
            Phase::Whole => t,
            Phase::AfterFirstSplit => t + self.timeline.step_duration(self.level) / 2.0,
        }
    }

    /// Sign of lattice cell `(a, b)`.
    pub fn cell(&self, a: usize, b: usize) -> i8 {
        let m = self.lattice();
        self.cells[(a % m) * m + b % m]
    }

    /// Exact `H^-1` norm of the configuration as a piecewise-constant
    /// function, free of sampling error.
    pub fn mix_f(&self) -> Result<f64> {
        let cells: Vec<f64> = self.cells.iter().map(|&c| c as f64).collect();
        mix_f_piecewise_constant(&cells, self.lattice())
    }

    /// Samples the configuration at resolution `n`.
    pub fn render(&self, n: usize) -> Result<ScalarField> {
        check_level(self.level, n)?;
        let m = self.lattice();
        let width = n / m;
        let samples = (0..n * n)
            .map(|idx| self.cells[((idx / n) / width) * m + (idx % n) / width] as f64)
            .collect();
        ScalarField::new(n, samples, false)
    }

    /// Applies the next stage.
    pub fn advance_stage(&mut self) -> Result<()> {
        let m = self.lattice();
        let stages = step_stages(self.level, self.timeline);
        match self.phase {
            Phase::Whole => {
                self.cells = stages[0].permute(&self.cells, m, false);
                self.phase = Phase::AfterFirstSplit;
            }
            Phase::AfterFirstSplit => {
                if self.level >= 12 {
                    return Err(Error::InvalidParameter("level limit reached".into()));
                }
                let moved = stages[1].permute(&self.cells, m, false);
                self.cells = refine(&moved, m);
                self.level += 1;
                self.phase = Phase::Whole;
            }
        }
        Ok(())
    }

    /// Undoes the most recent stage.
    pub fn rewind_stage(&mut self) -> Result<()> {
        match self.phase {
            Phase::AfterFirstSplit => {
                let m = self.lattice();
                self.cells = step_stages(self.level, self.timeline)[0].permute(&self.cells, m, true);
                self.phase = Phase::Whole;
            }
            Phase::Whole => {
                if self.level == 0 {
                    return Err(Error::InvalidParameter("already at the initial configuration".into()));
                }
                let coarse = coarsen(&self.cells, self.lattice())?;
                self.level -= 1;
                let m = self.lattice();
                self.cells = step_stages(self.level, self.timeline)[1].permute(&coarse, m, true);
                self.phase = Phase::AfterFirstSplit;
            }
        }
        Ok(())
    }

    pub fn advance(&mut self, steps: u32) -> Result<()> {
        for _ in 0..2 * steps {
            self.advance_stage()?;
        }
        Ok(())
    }

    pub fn rewind(&mut self, steps: u32) -> Result<()> {
        for _ in 0..2 * steps {
            self.rewind_stage()?;
        }
        Ok(())
    }

    /// Budget of the stage that acts next.
    pub fn budgets(&self) -> RegularityBudget {
        let stages = step_stages(self.level, self.timeline);
        let s = match self.phase {
            Phase::Whole => &stages[0],
            Phase::AfterFirstSplit => &stages[1],
        };
        stage_budget(s, 2.0)
    }
}

/// Budget of a whole step: the maximum over its two stages.
pub fn step_budget(k: u32, timeline: Timeline, p: f64) -> RegularityBudget {
    let [s1, s2] = step_stages(k, timeline);
    let (a, b) = (stage_budget(&s1, p), stage_budget(&s2, p));
    RegularityBudget {
        lip: f64::INFINITY,
        kinetic: a.kinetic.max(b.kinetic),
        enstrophy: f64::INFINITY,
        bv: a.bv.max(b.bv),
        sup_norm: a.sup_norm.max(b.sup_norm),
        sobolev_p: p,
        w1p_norm: f64::INFINITY,
    }
}

fn stage_budget(s: &ShearStage, p: f64) -> RegularityBudget {
    let unbounded = if s.bv() == 0.0 { 0.0 } else { f64::INFINITY };
    RegularityBudget {
        lip: unbounded,
        kinetic: s.kinetic(),
        enstrophy: unbounded,
        bv: s.bv(),
        sup_norm: s.speed(),
        sobolev_p: p,
        w1p_norm: unbounded,
    }
}

fn refine(cells: &[i8], m: usize) -> Vec<i8> {
    let f = 2 * m;
    (0..f * f).map(|idx| cells[((idx / f) / 2) * m + (idx % f) / 2]).collect()
}

fn coarsen(cells: &[i8], m: usize) -> Result<Vec<i8>> {
    let c = m / 2;
    let mut out = Vec::with_capacity(c * c);
    for a in 0..c {
        for b in 0..c {
            let v = cells[2 * a * m + 2 * b];
            let block = [cells[2 * a * m + 2 * b + 1], cells[(2 * a + 1) * m + 2 * b], cells[(2 * a + 1) * m + 2 * b + 1]];
            if block.iter().any(|&u| u != v) {
                return Err(Error::InvalidParameter("configuration is not constant on coarse cells".into()));
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// The scheme's velocity field, started at level 0 at time 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BressanFlow {
    pub timeline: Timeline,
}

impl BressanFlow {
    pub fn new(timeline: Timeline) -> Self {
        Self { timeline }
    }

    pub fn horizon(&self) -> f64 {
        self.timeline.horizon()
    }

    pub fn stage_at(&self, t: f64) -> Result<ShearStage> {
        let (k, s) = self.timeline.locate(t)?;
        Ok(step_stages(k, self.timeline)[s])
    }

    pub fn velocity(&self, t: f64, p: Point) -> Result<Point> {
        Ok(self.stage_at(t)?.velocity(p))
    }

    /// Stage boundaries strictly inside `(t0, t1)`.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..=60u32 {
            let start = self.timeline.step_start(k);
            if start >= t1 {
                break;
            }
            for b in [start, start + self.timeline.step_duration(k) / 2.0] {
                if b > t0 && b < t1 {
                    out.push(b);
                }
            }
        }
        out
    }

    pub fn budget_at(&self, t: f64, p: f64) -> Result<RegularityBudget> {
        Ok(stage_budget(&self.stage_at(t)?, p))
    }

    /// Sup over all times: unbounded BV in the dyadic timeline, attained at
    /// the first step in the unit one.
    pub fn budget(&self, p: f64) -> RegularityBudget {
        let mut b = step_budget(0, self.timeline, p);
        if self.timeline == Timeline::Dyadic {
            b.bv = f64::INFINITY;
        }
        b
    }
}

/// One row of the decay table of [`evolve_exact`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub step: u32,
    pub level: u32,
    pub time: f64,
    /// Exact functional scale of the configuration.
    pub mix_f: f64,
    /// Functional scale of the rendered node samples.
    pub mix_f_sampled: f64,
    pub mix_g: MixG,
    /// BV budget of the step that starts at this row.
    pub bv: f64,
    pub sup_norm: f64,
}

/// Advances `steps` full steps, measuring both scales of the configuration
/// rendered at resolution `n` before the first step and after every step.
pub fn evolve_exact(
    state: &BressanState,
    steps: u32,
    n: usize,
    params: &MixParams,
) -> Result<(BressanState, Vec<DecayRow>)> {
    if state.phase != Phase::Whole {
        return Err(Error::InvalidParameter("evolution starts between steps".into()));
    }
    check_level(state.level + steps, n)?;
    let mut current = state.clone();
    let mut rows = Vec::with_capacity(steps as usize + 1);
    for step in 0..=steps {
        let field = current.render(n)?;
        let budget = step_budget(current.level, current.timeline, 2.0);
        rows.push(DecayRow {
            step,
            level: current.level,
            time: current.time(),
            mix_f: current.mix_f()?,
            mix_f_sampled: mix_f(&field)?,
            mix_g: mix_g(&field, params)?,
            bv: budget.bv,
            sup_norm: budget.sup_norm,
        });
        if step < steps {
            current.advance(1)?;
        }
    }
    Ok((current, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::disk_average;

    #[test]
    fn checkerboard_level_zero() {
        let f = checkerboard(0, 16).unwrap();
        assert_eq!(f.get(0, 0), 1.0);
        assert_eq!(f.get(7, 7), 1.0);
        assert_eq!(f.get(8, 0), -1.0);
        assert_eq!(f.get(0, 8), -1.0);
        assert_eq!(f.get(15, 15), 1.0);
        assert_eq!(f.mean(), 0.0);
        assert!(matches!(checkerboard(3, 16), Err(Error::Incompatible { .. })));
    }

    #[test]
    fn rescale_refines_checkerboard() {
        for k in 0..5 {
            let f = checkerboard(k, 256).unwrap();
            assert_eq!(f.rescale(2).unwrap(), checkerboard(k + 1, 256).unwrap());
        }
    }

    #[test]
    fn stages_compose_to_refinement() {
        for k in 0..4 {
            let mut s = BressanState::new(k, Timeline::Unit).unwrap();
            let n = 1 << (k + 4);
            assert_eq!(s.render(n).unwrap(), checkerboard(k, n).unwrap());
            s.advance(1).unwrap();
            assert_eq!(s.render(n).unwrap(), checkerboard(k + 1, n).unwrap());
        }
    }

    #[test]
    fn stage_permutation_is_a_bijection() {
        let stages = step_stages(1, Timeline::Dyadic);
        let m = 16;
        let ids: Vec<usize> = (0..m * m).collect();
        for s in &stages {
            let mut moved = s.permute(&ids, m, false);
            assert_eq!(s.permute(&moved, m, true), ids);
            moved.sort_unstable();
            assert_eq!(moved, ids);
        }
    }

    #[test]
    fn stage_geometry_and_speeds() {
        for k in 0..5 {
            let d = step_stages(k, Timeline::Dyadic);
            let u = step_stages(k, Timeline::Unit);
            assert_eq!(d[0].channel_width, 0.5f64.powi(k as i32 + 2));
            assert_eq!(d[0].speed(), 1.0);
            assert_eq!(d[1].speed(), 1.0);
            assert_eq!(u[0].speed(), 0.5f64.powi(k as i32 + 1));
            assert_eq!(d[1].start, d[0].start + d[0].duration);
        }
    }

    #[test]
    fn budget_laws() {
        for k in 0..5 {
            let a = step_budget(k, Timeline::Dyadic, 2.0).bv;
            let b = step_budget(k + 1, Timeline::Dyadic, 2.0).bv;
            assert_eq!(b / a, 2.0);
            assert_eq!(a, 4.0 * 2f64.powi(k as i32));
            assert_eq!(step_budget(k, Timeline::Unit, 2.0).bv, 2.0);
        }
        let still = ShearStage { pattern: [0; 4], ..step_stages(0, Timeline::Unit)[0] };
        assert_eq!(still.bv(), 0.0);
    }

    #[test]
    fn velocity_follows_the_timeline() {
        let flow = BressanFlow::new(Timeline::Dyadic);
        assert_eq!(flow.velocity(0.1, [0.0, 0.3]).unwrap(), [1.0, 0.0]);
        assert_eq!(flow.velocity(0.1, [0.0, 0.1]).unwrap(), [-1.0, 0.0]);
        assert_eq!(flow.velocity(0.3, [0.6, 0.1]).unwrap(), [0.0, 1.0]);
        assert_eq!(flow.velocity(0.3, [0.1, 0.1]).unwrap(), [0.0, 0.0]);
        assert!(matches!(flow.velocity(1.0, [0.0, 0.0]), Err(Error::BeyondHorizon { .. })));
        let unit = BressanFlow::new(Timeline::Unit);
        assert_eq!(unit.velocity(2.2, [0.0, 1.5 / 16.0]).unwrap(), [0.125, 0.0]);
        assert_eq!(unit.breakpoints(0.0, 2.0), vec![0.5, 1.0, 1.5]);
    }

    #[test]
    fn weak_convergence_of_configurations() {
        let mut s = BressanState::new(0, Timeline::Unit).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..4 {
            s.advance(1).unwrap();
            let avg = disk_average(&s.render(128).unwrap(), 0.125).unwrap().max_abs();
            assert!(avg <= last + 1e-12);
            last = avg;
        }
        assert!(last < 0.05);
    }

    #[test]
    fn rewinding_restores_the_start() {
        let start = BressanState::new(1, Timeline::Dyadic).unwrap();
        let mut s = start.clone();
        s.advance(3).unwrap();
        s.rewind(3).unwrap();
        assert_eq!(s, start);
        assert!(s.rewind_stage().is_ok());
        assert!(BressanState::new(0, Timeline::Unit).unwrap().rewind_stage().is_err());
    }

    #[test]
    fn decay_table_halves_mix_f() {
        let s = BressanState::new(0, Timeline::Unit).unwrap();
        let (end, rows) = evolve_exact(&s, 3, 64, &MixParams::default()).unwrap();
        assert_eq!(end.level, 3);
        for w in rows.windows(2) {
            assert!((w[1].mix_f / w[0].mix_f - 0.5).abs() < 1e-12);
            assert_eq!(w[1].time - w[0].time, 1.0);
        }
        assert!(evolve_exact(&s, 5, 64, &MixParams::default()).is_err());
    }
}
