//! Orchestration of one scenario: series, bound curves, estimate reports
//! and the output bundle.

use std::f64::consts::{LN_2, PI};
use std::fs;
use std::path::{Path, PathBuf};

use mixlab_core::bounds::{self, BoundCurve, BoundKind, ComplianceReport};
use mixlab_core::bressan::{checkerboard, BressanFlow, BressanState};
use mixlab_core::estimates::{
    dyadic_radii, g_functional, gquant_report, increments_check, lusin_extract, maximal_function, pipeline_bound,
    pipeline_report, strong_ratio, weak_type_probe, GResult, PairSampling, PipelineBound, PipelineConfig,
};
use mixlab_core::grid::{io, random_band_limited, Interpolation};
use mixlab_core::mixing::{half_half, mix_f, mix_g, MixParams, RadiiSet};
use mixlab_core::transport::{advect, conservation_report, flow_map, FlowMap, CFL, INTEGRATOR_TOL};
use mixlab_core::velocity::{GridVelocity, RegularityBudget, VelocityModel};
use mixlab_core::ScalarField;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, EstimateKind, Format, InitialConfig, ScenarioConfig, VelocitySpec};
use crate::plot::{Line, Plot};
use crate::series::{self, MixingSeries};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub scheme: &'static str,
    pub version: &'static str,
    pub name: String,
    /// Canonical TOML of the config that produced the bundle.
    pub config: String,
    pub budget: RegularityBudget,
    pub integrator: Value,
    /// `exact_configuration` for Bressan runs, `spectral` otherwise.
    pub mix_f_source: &'static str,
    pub bound_kinds: Vec<BoundKind>,
    pub tolerance: f64,
    pub log_scale: bool,
    pub snapshot_files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub config: ScenarioConfig,
    pub metadata: Metadata,
    pub series: MixingSeries,
    pub reports: Value,
    pub snapshots: Vec<(f64, ScalarField)>,
    /// Failing invariant, if any.
    pub numerical_failure: Option<String>,
    pub compliance_failure: Option<String>,
}

impl Bundle {
    pub fn status(&self) -> Result<(), CliError> {
        if let Some(m) = &self.numerical_failure {
            return Err(CliError::Numerical(m.clone()));
        }
        if let Some(m) = &self.compliance_failure {
            return Err(CliError::Compliance(m.clone()));
        }
        Ok(())
    }
}

pub fn build_model(cfg: &ScenarioConfig) -> Result<VelocityModel, CliError> {
    let m = match &cfg.velocity.model {
        VelocitySpec::Translation { velocity } => VelocityModel::translation(*velocity),
        VelocitySpec::SteadyShear { amplitude } => VelocityModel::steady_shear(*amplitude),
        VelocitySpec::AlternatingShear { amplitude, half_period } => {
            VelocityModel::alternating_shear(*amplitude, *half_period)
        }
        VelocitySpec::Bressan { timeline } => Ok(VelocityModel::Bressan(BressanFlow::new(*timeline))),
        VelocitySpec::GridSampled { stream_function } => {
            let psi = read_field(stream_function)?;
            GridVelocity::from_stream_function(&psi, Interpolation::Bicubic)
                .map(|g| VelocityModel::GridSampled(Box::new(g)))
        }
    };
    m.map_err(|e| CliError::Config(ConfigError::at("velocity.kind", e.to_string()).to_string()))
}

fn read_field(path: &Path) -> Result<ScalarField, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    io::read_binary(std::io::BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn build_datum(cfg: &ScenarioConfig) -> Result<ScalarField, CliError> {
    let n = cfg.grid.resolution;
    let f = match &cfg.initial {
        InitialConfig::Checkerboard { level } => checkerboard(*level, n),
        InitialConfig::HalfHalf => half_half(n),
        InitialConfig::Modes { modes } => ScalarField::from_fn(
            n,
            |x, y| {
                modes
                    .iter()
                    .map(|m| m.amplitude * (2.0 * PI * (m.k[0] as f64 * x + m.k[1] as f64 * y) + m.phase).cos())
                    .sum()
            },
            false,
        ),
        InitialConfig::Random { seed, kmax } => random_band_limited(&mut ChaCha8Rng::seed_from_u64(*seed), n, *kmax),
        InitialConfig::File { path } => {
            let f = read_field(path)?;
            if f.resolution() != n {
                return Err(CliError::Config(
                    ConfigError::at("initial.path", format!("field has resolution {}, grid has {n}", f.resolution()))
                        .to_string(),
                ));
            }
            Ok(f)
        }
    };
    f.map_err(|e| CliError::Config(ConfigError::at("initial.kind", e.to_string()).to_string()))
}

fn effective_budget(cfg: &ScenarioConfig, model: &VelocityModel) -> Result<RegularityBudget, CliError> {
    let own = model.budget_for(cfg.estimates.p);
    let b = cfg.velocity.budget.apply(&own).map_err(|e| CliError::Config(e.to_string()))?;
    if !model.is_exact_shear() {
        let courant = cfg.time.dt * b.sup_norm * cfg.grid.resolution as f64;
        if courant > CFL {
            return Err(CliError::Config(
                ConfigError::at("time.dt", format!("dt * sup|u| * N = {courant} exceeds {CFL}")).to_string(),
            ));
        }
    }
    Ok(b)
}

fn mix_params(cfg: &ScenarioConfig) -> Result<MixParams, CliError> {
    let radii = match cfg.mixing.radii_count {
        Some(c) => RadiiSet::FirstSteps(c),
        None => RadiiSet::GridSteps,
    };
    MixParams::new(cfg.mixing.kappa_prime, radii).map_err(|e| CliError::Config(e.to_string()))
}

fn numerical(e: mixlab_core::Error) -> CliError {
    CliError::Numerical(e.to_string())
}

struct Observed {
    times: Vec<f64>,
    mix_f: Vec<f64>,
    snapshots: Vec<(f64, ScalarField)>,
}

fn observe_advected(cfg: &ScenarioConfig, model: &VelocityModel, datum: &ScalarField) -> Result<Observed, CliError> {
    let times = cfg.snapshot_times();
    let mut snapshots = Vec::with_capacity(times.len());
    let mut mf = Vec::with_capacity(times.len());
    for &t in &times {
        let rho = advect(datum, model, t, cfg.time.dt).map_err(numerical)?;
        mf.push(mix_f(&rho.zero_mean_part()).map_err(numerical)?);
        snapshots.push((t, rho));
    }
    Ok(Observed { times, mix_f: mf, snapshots })
}

fn observe_bressan(cfg: &ScenarioConfig) -> Result<Observed, CliError> {
    let (VelocitySpec::Bressan { timeline }, InitialConfig::Checkerboard { level }) = (&cfg.velocity.model, &cfg.initial)
    else {
        unreachable!("validated")
    };
    let (_, last) = cfg.bressan_steps().expect("validated");
    let mut state = BressanState::new(*level, *timeline).map_err(numerical)?;
    let (mut times, mut mf, mut snapshots) = (vec![], vec![], vec![]);
    loop {
        times.push(state.time());
        mf.push(state.mix_f().map_err(numerical)?);
        snapshots.push((state.time(), state.render(cfg.grid.resolution).map_err(numerical)?));
        if state.level == last {
            break;
        }
        state.advance(1).map_err(numerical)?;
    }
    Ok(Observed { times, mix_f: mf, snapshots })
}

fn require(kind: BoundKind, name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(
            ConfigError::at("bounds.kinds", format!("{} needs a finite `{name}` budget", kind.name())).to_string(),
        ))
    }
}

fn pipeline_config(cfg: &ScenarioConfig, times: &[f64]) -> PipelineConfig {
    PipelineConfig {
        n: cfg.grid.resolution,
        flow_resolution: cfg.estimates.flow_resolution,
        times: times.to_vec(),
        dt: cfg.time.dt,
        kappa_prime: cfg.mixing.kappa_prime,
        eta: None,
        p: cfg.estimates.p,
        lusin_pairs: cfg.estimates.pairs,
        tolerance: cfg.bounds.tolerance,
    }
}

fn block(value: f64, bound: Option<f64>, margin: Option<f64>, pass: bool, details: Value) -> Value {
    json!({ "value": value, "bound": bound, "margin": margin, "pass": pass, "details": details })
}

fn forward_flows(cfg: &ScenarioConfig, model: &VelocityModel, times: &[f64]) -> Result<Vec<FlowMap>, CliError> {
    let start = times[0];
    times
        .iter()
        .map(|&t| {
            if t == start {
                FlowMap::identity(cfg.estimates.flow_resolution, t).map_err(numerical)
            } else {
                flow_map(model, start, t, cfg.time.dt, cfg.estimates.flow_resolution).map_err(numerical)
            }
        })
        .collect()
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Bundle, CliError> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let model = build_model(cfg)?;
    let budget = effective_budget(cfg, &model)?;
    let datum = build_datum(cfg)?;
    let params = mix_params(cfg)?;

    let observed = if cfg.is_bressan() { observe_bressan(cfg)? } else { observe_advected(cfg, &model, &datum)? };
    let times = observed.times.clone();
    let mut s = MixingSeries {
        times: times.clone(),
        mix_f: observed.mix_f,
        mix_g: vec![],
        l1: vec![],
        l2: vec![],
        linf: vec![],
        h1: vec![],
        bounds: vec![],
        compliance: vec![],
    };
    for (_, rho) in &observed.snapshots {
        s.mix_g.push(mix_g(rho, &params).map_err(numerical)?);
        s.l1.push(rho.lp_norm(1.0).map_err(numerical)?);
        s.l2.push(rho.lp_norm(2.0).map_err(numerical)?);
        s.linf.push(rho.linf());
        s.h1.push(rho.sobolev_norm(1.0).map_err(numerical)?);
    }

    // bound curves, evaluated on times elapsed since the first snapshot
    let elapsed: Vec<f64> = times.iter().map(|t| t - times[0]).collect();
    let zm = observed.snapshots[0].1.zero_mean_part();
    let (mix0, rho_sup, rho_l2, rho_h1) =
        (s.mix_f[0], zm.linf(), zm.lp_norm(2.0).map_err(numerical)?, zm.sobolev_norm(1.0).map_err(numerical)?);
    let wants_pipeline = cfg.bounds.kinds.contains(&BoundKind::GeometricExponential)
        || cfg.estimates.enabled.contains(&EstimateKind::Geometric);
    let pipeline: Option<PipelineBound> = if wants_pipeline {
        require(BoundKind::GeometricExponential, "w1p_norm", budget.w1p_norm)?;
        Some(pipeline_bound(&model, &pipeline_config(cfg, &elapsed)).map_err(numerical)?)
    } else {
        None
    };
    let mut curves: Vec<BoundCurve> = Vec::new();
    let mut kinds = cfg.bounds.kinds.clone();
    kinds.dedup();
    for &kind in &kinds {
        let c = match kind {
            BoundKind::LipschitzExponential => {
                bounds::lipschitz_exponential(mix0, require(kind, "lip", budget.lip)?, &elapsed)
            }
            BoundKind::KineticLinear => {
                bounds::kinetic_linear(mix0, require(kind, "kinetic", budget.kinetic)?, rho_sup, &elapsed)
            }
            BoundKind::EnstrophyLinearSuboptimal => {
                bounds::enstrophy_report(mix0, require(kind, "enstrophy", budget.enstrophy)?, rho_l2, &elapsed)
            }
            BoundKind::InterpolatedExponential => {
                bounds::interpolated_exponential(rho_l2, rho_h1, require(kind, "lip", budget.lip)?, &elapsed)
            }
            BoundKind::GeometricExponential => {
                let p = pipeline.as_ref().expect("computed above");
                bounds::geometric_exponential(p.beta, p.m_factor, &elapsed)
            }
        };
        let mut c = c.map_err(|e| CliError::Config(e.to_string()))?;
        c.times = times.clone();
        curves.push(c);
    }
    s.bounds = curves;
    let compliance = bounds::compliance(&s.observed(), &s.bounds, cfg.bounds.tolerance).map_err(numerical)?;
    s.set_compliance(&compliance);

    let mut reports = serde_json::Map::new();
    let mut numerical_failure = None;
    let mut compliance_failure = compliance_failures(&compliance);
    reports.insert("compliance".into(), serde_json::to_value(&compliance).expect("serializable"));
    if !cfg.is_bressan() {
        let cons = conservation_report(&observed.snapshots).map_err(numerical)?;
        reports.insert("conservation".into(), serde_json::to_value(&cons).expect("serializable"));
    }

    let mut enabled = cfg.estimates.enabled.clone();
    enabled.sort();
    enabled.dedup();
    let mut g_cache: Option<(GResult, FlowMap)> = None;
    for kind in enabled {
        let (name, value) = match kind {
            EstimateKind::Maximal => {
                let (t, f) = observed.snapshots.last().expect("nonempty");
                let m = maximal_function(f, &RadiiSet::GridSteps, &params).map_err(numerical)?;
                let pointwise = m.values.samples().iter().zip(f.samples()).all(|(a, b)| *a >= b.abs());
                let levels: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|q| q * f.linf()).collect();
                let weak = weak_type_probe(f, &m, &levels).map_err(numerical)?;
                let strong = strong_ratio(f, &m).map_err(numerical)?;
                let increments = match cfg.initial {
                    InitialConfig::Modes { .. } | InitialConfig::Random { .. } => {
                        let md = maximal_function(&datum.gradient_magnitude(), &RadiiSet::GridSteps, &params)
                            .map_err(numerical)?;
                        let sampling = PairSampling::Random { count: cfg.estimates.pairs, seed: 11 };
                        Some(increments_check(&datum, &md, sampling).map_err(numerical)?)
                    }
                    _ => None,
                };
                let pass = pointwise && weak.chebyshev;
                let details = json!({
                    "time": t, "pointwise": pointwise, "weak": weak, "strong_ratio": strong, "increments": increments
                });
                ("maximal", block(weak.weak_field, Some(weak.l1), Some(weak.l1 - weak.weak_field), pass, details))
            }
            EstimateKind::GFunctional | EstimateKind::Lusin => {
                if g_cache.is_none() {
                    let flows = forward_flows(cfg, &model, &times)?;
                    let radii = dyadic_radii(cfg.estimates.flow_resolution);
                    let g = g_functional(&flows, cfg.estimates.p, &radii).map_err(numerical)?;
                    g_cache = Some((g, flows.last().expect("nonempty").clone()));
                }
                let (g, last) = g_cache.as_ref().expect("filled");
                if kind == EstimateKind::GFunctional {
                    let cap = budget.lip.is_finite().then(|| budget.lip * g.horizon + LN_2);
                    let pass = cap.map_or(true, |c| g.value <= c + 1e-10);
                    let quant = gquant_report(g, &budget).ok();
                    let details = json!({ "p": g.p, "horizon": g.horizon, "radii": g.radii, "gquant": quant });
                    ("g_functional", block(g.value, cap, cap.map(|c| c - g.value), pass, details))
                } else {
                    let sampling = PairSampling::Random { count: cfg.estimates.pairs, seed: 7 };
                    let l = lusin_extract(g, last, cfg.estimates.eta, sampling).map_err(numerical)?;
                    let details = json!({
                        "eta": l.eta, "lambda": l.lambda, "c2": l.c2, "excluded_fraction": l.excluded_fraction,
                        "pairs_checked": l.pairs_checked, "violations": l.violations
                    });
                    ("lusin", block(l.lip_estimate, Some(l.bound), Some(l.worst_margin), l.violations == 0, details))
                }
            }
            EstimateKind::Geometric => {
                let p = pipeline.clone().expect("computed above");
                let rep = pipeline_report(&times, s.mix_g.clone(), p, cfg.bounds.tolerance);
                let worst = rep.margins.iter().copied().fold(f64::INFINITY, f64::min);
                let lowest = rep.mix_g.iter().map(|m| m.epsilon).fold(f64::INFINITY, f64::min);
                if !rep.pass && compliance_failure.is_none() {
                    compliance_failure = Some("geometric lower-bound pipeline".into());
                }
                let bound = rep.bound.curve.last().copied();
                let details = serde_json::to_value(&rep).expect("serializable");
                ("geometric", block(lowest, bound, Some(worst), rep.pass, details))
            }
        };
        if kind != EstimateKind::Geometric && value["pass"] == json!(false) && numerical_failure.is_none() {
            numerical_failure = Some(format!("{name} estimate violated"));
        }
        reports.insert(name.into(), value);
    }

    let snapshot_files = if cfg.outputs.formats.contains(&Format::Fields) {
        (0..observed.snapshots.len()).map(|j| format!("fields/rho_{j:04}.bin")).collect()
    } else {
        vec![]
    };
    let metadata = Metadata {
        scheme: series::CSV_HEADER.trim_start_matches("# "),
        version: env!("CARGO_PKG_VERSION"),
        name: cfg.name.clone(),
        config: cfg.to_canonical(),
        budget,
        integrator: json!({
            "method": if cfg.is_bressan() { "exact_permutation" } else { "rk4_backward_characteristics" },
            "interpolation": "bicubic",
            "dt": cfg.time.dt,
            "cfl": CFL,
            // integration tolerance used by the flow checks; a numerical budget, not an analytic constant
            "flow_tolerance": INTEGRATOR_TOL,
            "tolerance_kind": "engineering",
        }),
        mix_f_source: if cfg.is_bressan() { "exact_configuration" } else { "spectral" },
        bound_kinds: kinds,
        tolerance: cfg.bounds.tolerance,
        log_scale: cfg.outputs.log_scale,
        snapshot_files,
    };
    Ok(Bundle {
        config: cfg.clone(),
        metadata,
        series: s,
        reports: Value::Object(reports),
        snapshots: observed.snapshots,
        numerical_failure,
        compliance_failure,
    })
}

/// Names of failing curves that are not informational.
fn compliance_failures(r: &ComplianceReport) -> Option<String> {
    let failing: Vec<&str> = r.curves.iter().filter(|c| !c.pass && !c.suboptimal).map(|c| c.kind.name()).collect();
    (!failing.is_empty()).then(|| format!("bound violated: {}", failing.join(", ")))
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn render_plots(s: &MixingSeries, name: &str, log_y: bool) -> [(String, String); 2] {
    let mut out = Vec::new();
    for (file, column, obs) in [
        ("mix_f.svg", "mix_f", s.mix_f.clone()),
        ("mix_g.svg", "mix_g", s.mix_g.iter().map(|m| m.epsilon).collect::<Vec<f64>>()),
    ] {
        let observable = if column == "mix_f" { bounds::Observable::MixF } else { bounds::Observable::MixG };
        let mut lines = vec![Line { label: column, xs: &s.times, ys: &obs, dashed: false }];
        for b in s.bounds.iter().filter(|b| b.kind.observable() == observable) {
            lines.push(Line { label: b.kind.name(), xs: &s.times, ys: &b.values, dashed: true });
        }
        let title = format!("{name}: {column}");
        let plot = Plot { title: &title, x_label: "t", y_label: column, log_y, lines };
        out.push((file.to_string(), plot.render()));
    }
    out.try_into().expect("two plots")
}

pub fn summary_table(s: &MixingSeries) -> String {
    let mut out = String::from("t\tmix_f\tmix_g\tl2\n");
    for i in 0..s.times.len() {
        out.push_str(&format!(
            "{}\t{:.6e}\t{:.6e}\t{:.6e}\n",
            series::fmt_f64(s.times[i]),
            s.mix_f[i],
            s.mix_g[i].epsilon,
            s.l2[i]
        ));
    }
    out
}

pub fn write_bundle(b: &Bundle, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let formats = &b.config.outputs.formats;
    // metadata is always written: `report` depends on it
    write(&dir.join("metadata.json"), serde_json::to_string_pretty(&b.metadata).expect("serializable").as_bytes())?;
    if formats.contains(&Format::Csv) {
        write(&dir.join("series.csv"), series::to_csv(&b.series).as_bytes())?;
        write(&dir.join("summary.tsv"), summary_table(&b.series).as_bytes())?;
    }
    if formats.contains(&Format::Json) {
        write(&dir.join("reports.json"), serde_json::to_string_pretty(&b.reports).expect("serializable").as_bytes())?;
    }
    if formats.contains(&Format::Svg) {
        for (file, svg) in render_plots(&b.series, &b.config.name, b.config.outputs.log_scale) {
            write(&dir.join(file), svg.as_bytes())?;
        }
    }
    if formats.contains(&Format::Fields) {
        fs::create_dir_all(dir.join("fields")).map_err(|e| CliError::Io(e.to_string()))?;
        for ((_, f), name) in b.snapshots.iter().zip(&b.metadata.snapshot_files) {
            let mut buf = Vec::new();
            io::write_binary(f, &mut buf).map_err(numerical)?;
            write(&dir.join(name), &buf)?;
        }
    }
    Ok(())
}

pub fn output_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.outputs.directory.clone().unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

/// Re-renders plots and tables of a stored bundle and re-checks compliance
/// from the stored columns.
pub fn report(dir: &Path) -> Result<ComplianceReport, CliError> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| CliError::Config(format!("missing bundle file {}: {e}", p.display())))
    };
    let meta: Value = serde_json::from_str(&read("metadata.json")?)
        .map_err(|e| CliError::Config(format!("metadata.json: {e}")))?;
    let mut s = series::from_csv(&read("series.csv")?).map_err(|e| CliError::Config(format!("series.csv: {e}")))?;
    let tolerance = meta["tolerance"].as_f64().ok_or_else(|| CliError::Config("metadata.json: tolerance".into()))?;
    let log_y = meta["log_scale"].as_bool().unwrap_or(true);
    let name = meta["name"].as_str().unwrap_or("scenario").to_string();
    let rep = bounds::compliance(&s.observed(), &s.bounds, tolerance).map_err(numerical)?;
    s.set_compliance(&rep);
    write(&dir.join("series.csv"), series::to_csv(&s).as_bytes())?;
    write(&dir.join("summary.tsv"), summary_table(&s).as_bytes())?;
    for (file, svg) in render_plots(&s, &name, log_y) {
        write(&dir.join(file), svg.as_bytes())?;
    }
    match compliance_failures(&rep) {
        Some(m) => Err(CliError::Compliance(m)),
        None => Ok(rep),
    }
}
