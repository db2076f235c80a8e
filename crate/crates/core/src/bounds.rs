//! Closed-form lower bounds on the mixing scales and compliance of
//! observed series against them.
//!
//! Bounds are evaluated from declared budgets only; data enters on the
//! observed side. `mix_f` is measured with integer wavenumbers, where
//! `||grad lap^{-1} rho||_2 = mix_f / (2 pi)`, so rates derived for the
//! physical potential pick up a factor `2 pi` in the linear evaluators.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    LipschitzExponential,
    KineticLinear,
    EnstrophyLinearSuboptimal,
    InterpolatedExponential,
    /// The Lusin-Lipschitz curve `(1/6) exp(-beta M t)` on `mix_g`.
    GeometricExponential,
}

impl BoundKind {
    pub const ALL: [BoundKind; 5] = [
        BoundKind::LipschitzExponential,
        BoundKind::KineticLinear,
        BoundKind::EnstrophyLinearSuboptimal,
        BoundKind::InterpolatedExponential,
        BoundKind::GeometricExponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::LipschitzExponential => "lipschitz_exponential",
            BoundKind::KineticLinear => "kinetic_linear",
            BoundKind::EnstrophyLinearSuboptimal => "enstrophy_linear_suboptimal",
            BoundKind::InterpolatedExponential => "interpolated_exponential",
            BoundKind::GeometricExponential => "geometric_exponential",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn observable(self) -> Observable {
        match self {
            BoundKind::GeometricExponential => Observable::MixG,
            _ => Observable::MixF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    MixF,
    MixG,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundParameters {
    pub mix0: Option<f64>,
    pub lip: Option<f64>,
    pub kinetic: Option<f64>,
    pub enstrophy: Option<f64>,
    pub rho_sup: Option<f64>,
    pub rho_l2: Option<f64>,
    pub rho_h1: Option<f64>,
    pub beta: Option<f64>,
    pub rate_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub parameters: BoundParameters,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Informational only: the inequality behind the curve is known not to be sharp.
    pub suboptimal: bool,
    /// First time the curve reaches zero, for the linear kinds.
    pub zero_crossing: Option<f64>,
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be finite and >= 0")))
    }
}

fn linear(kind: BoundKind, parameters: BoundParameters, mix0: f64, slope: f64, times: &[f64]) -> BoundCurve {
    let values = times.iter().map(|t| (mix0 - slope * t).max(0.0)).collect();
    BoundCurve {
        kind,
        parameters,
        times: times.to_vec(),
        values,
        suboptimal: kind == BoundKind::EnstrophyLinearSuboptimal,
        zero_crossing: (slope > 0.0).then(|| mix0 / slope),
    }
}

/// `mix0 exp(-L t)`.
pub fn lipschitz_exponential(mix0: f64, lip: f64, times: &[f64]) -> Result<BoundCurve> {
    check_nonneg("mix0", mix0)?;
    check_nonneg("L", lip)?;
    Ok(BoundCurve {
        kind: BoundKind::LipschitzExponential,
        parameters: BoundParameters { mix0: Some(mix0), lip: Some(lip), ..Default::default() },
        times: times.to_vec(),
        values: times.iter().map(|t| mix0 * (-lip * t).exp()).collect(),
        suboptimal: false,
        zero_crossing: None,
    })
}

/// `max(0, mix0 - 2 pi K ||rho||_inf t)`.
pub fn kinetic_linear(mix0: f64, kinetic: f64, rho_sup: f64, times: &[f64]) -> Result<BoundCurve> {
    check_nonneg("mix0", mix0)?;
    check_nonneg("K", kinetic)?;
    check_nonneg("rho_sup", rho_sup)?;
    let p = BoundParameters { mix0: Some(mix0), kinetic: Some(kinetic), rho_sup: Some(rho_sup), ..Default::default() };
    Ok(linear(BoundKind::KineticLinear, p, mix0, 2.0 * PI * kinetic * rho_sup, times))
}

/// `max(0, mix0 - 2 pi E ||rho||_2 t)` with the unstated constant set to 1.
pub fn enstrophy_report(mix0: f64, enstrophy: f64, rho_l2: f64, times: &[f64]) -> Result<BoundCurve> {
    check_nonneg("mix0", mix0)?;
    check_nonneg("E", enstrophy)?;
    check_nonneg("rho_l2", rho_l2)?;
    let p = BoundParameters { mix0: Some(mix0), enstrophy: Some(enstrophy), rho_l2: Some(rho_l2), ..Default::default() };
    Ok(linear(BoundKind::EnstrophyLinearSuboptimal, p, mix0, 2.0 * PI * enstrophy * rho_l2, times))
}

/// `(||rho||_2^2 / ||rho||_{H^1}) exp(-L t)`.
pub fn interpolated_exponential(rho_l2: f64, rho_h1: f64, lip: f64, times: &[f64]) -> Result<BoundCurve> {
    check_nonneg("rho_l2", rho_l2)?;
    check_nonneg("L", lip)?;
    if !(rho_h1 > 0.0) {
        return Err(Error::ZeroH1);
    }
    let c = rho_l2 * rho_l2 / rho_h1;
    Ok(BoundCurve {
        kind: BoundKind::InterpolatedExponential,
        parameters: BoundParameters { rho_l2: Some(rho_l2), rho_h1: Some(rho_h1), lip: Some(lip), ..Default::default() },
        times: times.to_vec(),
        values: times.iter().map(|t| c * (-lip * t).exp()).collect(),
        suboptimal: false,
        zero_crossing: None,
    })
}

/// `(1/6) exp(-beta M t)` with `beta` and `M` from the Lusin constant chain.
pub fn geometric_exponential(beta: f64, rate_factor: f64, times: &[f64]) -> Result<BoundCurve> {
    check_nonneg("beta", beta)?;
    check_nonneg("M", rate_factor)?;
    Ok(BoundCurve {
        kind: BoundKind::GeometricExponential,
        parameters: BoundParameters { beta: Some(beta), rate_factor: Some(rate_factor), ..Default::default() },
        times: times.to_vec(),
        values: times.iter().map(|t| (-beta * rate_factor * t).exp() / 6.0).collect(),
        suboptimal: false,
        zero_crossing: None,
    })
}

/// Observed scales on a common time grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub times: Vec<f64>,
    pub mix_f: Vec<f64>,
    pub mix_g: Vec<f64>,
}

impl ObservedSeries {
    pub fn column(&self, o: Observable) -> &[f64] {
        match o {
            Observable::MixF => &self.mix_f,
            Observable::MixG => &self.mix_g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveCompliance {
    pub kind: BoundKind,
    pub suboptimal: bool,
    /// `observed - bound` per time.
    pub margins: Vec<f64>,
    pub passes: Vec<bool>,
    pub worst_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub tolerance: f64,
    pub curves: Vec<CurveCompliance>,
    pub pass: bool,
}

/// Margins `observed - bound`; a time passes when its margin is at least
/// `-tolerance * observed(0)`. Where the bound is strictly positive the
/// observation must be too, whatever the tolerance.
pub fn compliance(series: &ObservedSeries, curves: &[BoundCurve], tolerance: f64) -> Result<ComplianceReport> {
    check_nonneg("tolerance", tolerance)?;
    let mut out = Vec::with_capacity(curves.len());
    for c in curves {
        let observed = series.column(c.kind.observable());
        if c.times != series.times || observed.len() != c.times.len() {
            return Err(Error::TimeGridMismatch);
        }
        let slack = tolerance * observed.first().copied().unwrap_or(0.0);
        let margins: Vec<f64> = observed.iter().zip(&c.values).map(|(o, b)| o - b).collect();
        let passes: Vec<bool> = margins
            .iter()
            .zip(observed.iter().zip(&c.values))
            .map(|(&m, (&o, &b))| m >= -slack && (b <= 0.0 || o > 0.0))
            .collect();
        out.push(CurveCompliance {
            kind: c.kind,
            suboptimal: c.suboptimal,
            worst_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
            pass: passes.iter().all(|&p| p),
            margins,
            passes,
        });
    }
    let pass = out.iter().all(|c| c.pass);
    Ok(ComplianceReport { tolerance, curves: out, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField;
    use crate::mixing::mix_f;

    const T: [f64; 5] = [0.0, 0.25, 0.5, 1.0, 2.0];

    #[test]
    fn lipschitz_values() {
        let c = lipschitz_exponential(1.5, 0.0, &T).unwrap();
        assert!(c.values.iter().all(|&v| v == 1.5));
        let c = lipschitz_exponential(1.5, 2.0 * PI, &[0.0, 1.0]).unwrap();
        assert_eq!(c.values[0], 1.5);
        assert!((c.values[1] - 1.5 * (-2.0 * PI).exp()).abs() < 1e-16);
        assert!(lipschitz_exponential(1.0, -1.0, &T).is_err());
    }

    #[test]
    fn kinetic_zero_crossing_and_clamp() {
        let c = kinetic_linear(1.0, 0.0, 1.0, &T).unwrap();
        assert!(c.values.iter().all(|&v| v == 1.0));
        assert_eq!(c.zero_crossing, None);
        let c = kinetic_linear(1.0, 0.5, 2.0, &T).unwrap();
        let t_star = 1.0 / (2.0 * PI);
        assert!((c.zero_crossing.unwrap() - t_star).abs() < 1e-15);
        assert_eq!(c.values[4], 0.0);
        assert!(c.values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn enstrophy_is_flagged() {
        let c = enstrophy_report(1.0, 0.0, 1.0, &T).unwrap();
        assert!(c.suboptimal);
        assert!(c.values.iter().all(|&v| v == 1.0));
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"suboptimal\":true"));
        assert!(json.contains("enstrophy_linear_suboptimal"));
    }

    #[test]
    fn interpolated_single_and_double_mode() {
        let f = ScalarField::from_fn(32, |x, _| 2.0 * (2.0 * PI * x).cos(), true).unwrap();
        let (l2, h1, m) = (f.lp_norm(2.0).unwrap(), f.sobolev_norm(1.0).unwrap(), mix_f(&f).unwrap());
        let c = interpolated_exponential(l2, h1, 0.0, &[0.0]).unwrap();
        assert!((c.values[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((c.values[0] - m).abs() < 1e-12);
        let g = ScalarField::from_fn(32, |x, y| (2.0 * PI * x).cos() + (6.0 * PI * y).sin(), true).unwrap();
        let c = interpolated_exponential(g.lp_norm(2.0).unwrap(), g.sobolev_norm(1.0).unwrap(), 0.0, &[0.0]).unwrap();
        assert!(c.values[0] < mix_f(&g).unwrap() - 0.1);
        assert_eq!(interpolated_exponential(1.0, 0.0, 0.0, &T).unwrap_err(), Error::ZeroH1);
    }

    #[test]
    fn kinetic_below_lipschitz_when_comparable() {
        let (mix0, lip, sup) = (0.8, 3.0, 1.0);
        let k = lip * mix0 / (2.0 * PI * sup);
        let a = kinetic_linear(mix0, k, sup, &T).unwrap();
        let b = lipschitz_exponential(mix0, lip, &T).unwrap();
        for (x, y) in a.values.iter().zip(&b.values).skip(1) {
            assert!(x < y);
        }
    }

    #[test]
    fn compliance_controls() {
        let times = T.to_vec();
        let flat = ObservedSeries { times: times.clone(), mix_f: vec![1.0; 5], mix_g: vec![0.3; 5] };
        let c = lipschitz_exponential(1.0, 0.0, &times).unwrap();
        let r = compliance(&flat, &[c.clone()], 0.05).unwrap();
        assert!(r.pass);
        assert!(r.curves[0].margins.iter().all(|&m| m == 0.0));
        let low = ObservedSeries { mix_f: vec![1.0, 0.9, 0.9, 0.9, 0.9], ..flat.clone() };
        assert!(!compliance(&low, &[c.clone()], 0.05).unwrap().pass);
        let shifted = ObservedSeries { times: vec![0.0, 0.3, 0.5, 1.0, 2.0], ..flat.clone() };
        assert_eq!(compliance(&shifted, &[c], 0.05).unwrap_err(), Error::TimeGridMismatch);
        let g = geometric_exponential(1.0, 1.0, &times).unwrap();
        assert!(compliance(&flat, &[g.clone()], 0.0).unwrap().pass);
        let crossing = ObservedSeries { mix_g: vec![0.3, 0.2, 0.1, 0.0, -0.01], ..flat };
        let r = compliance(&crossing, &[g], 0.5).unwrap();
        assert!(!r.pass);
        assert_eq!(r.curves[0].passes, vec![true, true, true, false, false]);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BoundKind::ALL {
            assert_eq!(BoundKind::parse(k.name()), Some(k));
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
    }
}
