//! The per-snapshot series and its CSV form.

use std::fmt::Write as _;

use mixlab_core::bounds::{BoundCurve, BoundKind, ComplianceReport, ObservedSeries};
use mixlab_core::mixing::MixG;

pub const CSV_HEADER: &str = "# mixlab-series v1";

const BASE_COLUMNS: [&str; 9] = ["t", "mix_f", "mix_g", "mix_g_bracket", "mix_g_saturated", "l1", "l2", "linf", "h1"];

#[derive(Debug, Clone, PartialEq)]
pub struct MixingSeries {
    pub times: Vec<f64>,
    pub mix_f: Vec<f64>,
    pub mix_g: Vec<MixG>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub h1: Vec<f64>,
    pub bounds: Vec<BoundCurve>,
    /// Per-time pass flags, one list per bound in `bounds` order.
    pub compliance: Vec<Vec<bool>>,
}

impl MixingSeries {
    pub fn observed(&self) -> ObservedSeries {
        ObservedSeries {
            times: self.times.clone(),
            mix_f: self.mix_f.clone(),
            mix_g: self.mix_g.iter().map(|m| m.epsilon).collect(),
        }
    }

    pub fn set_compliance(&mut self, report: &ComplianceReport) {
        self.compliance = report.curves.iter().map(|c| c.passes.clone()).collect();
    }
}

/// Shortest text that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn to_csv(s: &MixingSeries) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    let mut cols: Vec<String> = BASE_COLUMNS.iter().map(|c| c.to_string()).collect();
    cols.extend(s.bounds.iter().map(|b| b.kind.name().to_string()));
    cols.extend(s.bounds.iter().map(|b| format!("compliance_{}", b.kind.name())));
    out.push_str(&cols.join(","));
    out.push('\n');
    for i in 0..s.times.len() {
        let g = &s.mix_g[i];
        let mut row = vec![
            fmt_f64(s.times[i]),
            fmt_f64(s.mix_f[i]),
            fmt_f64(g.epsilon),
            fmt_f64(g.bracket),
            g.saturated.to_string(),
            fmt_f64(s.l1[i]),
            fmt_f64(s.l2[i]),
            fmt_f64(s.linf[i]),
            fmt_f64(s.h1[i]),
        ];
        row.extend(s.bounds.iter().map(|b| fmt_f64(b.values[i])));
        row.extend(s.compliance.iter().map(|c| c.get(i).copied().unwrap_or(false).to_string()));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn from_csv(text: &str) -> Result<MixingSeries, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(format!("missing `{CSV_HEADER}` header"));
    }
    let cols: Vec<&str> = lines.next().ok_or("missing column line")?.split(',').collect();
    if cols.len() < BASE_COLUMNS.len() || cols[..BASE_COLUMNS.len()] != BASE_COLUMNS {
        return Err("unexpected leading columns".into());
    }
    let extra = &cols[BASE_COLUMNS.len()..];
    if extra.len() % 2 != 0 {
        return Err("bound and compliance columns do not pair up".into());
    }
    let nb = extra.len() / 2;
    let mut kinds = Vec::with_capacity(nb);
    for (j, name) in extra[..nb].iter().enumerate() {
        let k = BoundKind::parse(name).ok_or_else(|| format!("unknown bound column `{name}`"))?;
        if extra[nb + j] != format!("compliance_{name}") {
            return Err(format!("expected compliance_{name}, found {}", extra[nb + j]));
        }
        kinds.push(k);
    }
    let mut s = MixingSeries {
        times: vec![],
        mix_f: vec![],
        mix_g: vec![],
        l1: vec![],
        l2: vec![],
        linf: vec![],
        h1: vec![],
        bounds: vec![],
        compliance: vec![Vec::new(); nb],
    };
    let mut bound_values = vec![Vec::new(); nb];
    for (r, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(format!("row {}: expected {} fields, found {}", r + 1, cols.len(), f.len()));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| format!("row {}: bad number `{}`", r + 1, f[i]));
        let flag = |i: usize| f[i].parse::<bool>().map_err(|_| format!("row {}: bad flag `{}`", r + 1, f[i]));
        s.times.push(num(0)?);
        s.mix_f.push(num(1)?);
        s.mix_g.push(MixG { epsilon: num(2)?, bracket: num(3)?, saturated: flag(4)? });
        s.l1.push(num(5)?);
        s.l2.push(num(6)?);
        s.linf.push(num(7)?);
        s.h1.push(num(8)?);
        for j in 0..nb {
            bound_values[j].push(num(9 + j)?);
            s.compliance[j].push(flag(9 + nb + j)?);
        }
    }
    s.bounds = kinds
        .into_iter()
        .zip(bound_values)
        .map(|(kind, values)| BoundCurve {
            kind,
            parameters: Default::default(),
            times: s.times.clone(),
            values,
            suboptimal: kind == BoundKind::EnstrophyLinearSuboptimal,
            zero_crossing: None,
        })
        .collect();
    Ok(s)
}
