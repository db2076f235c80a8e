//! End-to-end acceptance checks, one PASS/FAIL line per criterion.

use std::error::Error;
use std::f64::consts::{LN_2, PI, SQRT_2};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use mixlab_cli::config::ScenarioConfig;
use mixlab_cli::scenario::{run_scenario, write_bundle};
use mixlab_cli::series::{from_csv, to_csv};
use mixlab_core::bressan::{checkerboard, evolve_exact, step_budget, BressanState, Timeline};
use mixlab_core::estimates::{
    dyadic_radii, g_functional, lusin_extract, maximal_function, strong_ratio, weak_type_probe, PairSampling,
};
use mixlab_core::grid::{random_band_limited, random_single_mode};
use mixlab_core::mixing::{half_half, mix_f, MixParams, RadiiSet};
use mixlab_core::transport::{advect, conservation_report, flow_map, gronwall_check, FlowMap};
use mixlab_core::velocity::VelocityModel;
use mixlab_core::ScalarField;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn Error>>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn bressan_decay() -> Outcome {
    let start = Instant::now();
    let state = BressanState::new(0, Timeline::Unit)?;
    let (_, rows) = evolve_exact(&state, 6, 512, &MixParams::default())?;
    let mut worst_f: f64 = 0.0;
    let mut g_ratios = Vec::new();
    for w in rows.windows(2) {
        worst_f = worst_f.max((w[1].mix_f / w[0].mix_f - 0.5).abs());
        g_ratios.push(w[1].mix_g.epsilon / w[0].mix_g.epsilon);
    }
    let secs = start.elapsed().as_secs_f64();
    let g_ok = g_ratios.iter().all(|r| (0.45..=0.55).contains(r));
    let text: Vec<String> = g_ratios.iter().map(|r| format!("{r:.4}")).collect();
    Ok((
        worst_f <= 1e-10 && g_ok && secs < 60.0,
        format!("mix_f ratio error {worst_f:.1e}; mix_g ratios [{}]; {secs:.1} s", text.join(", ")),
    ))
}

fn bressan_budgets() -> Outcome {
    let dyadic: Vec<f64> = (0..=5).map(|k| step_budget(k, Timeline::Dyadic, 2.0).bv).collect();
    let doubling = dyadic.windows(2).all(|w| w[1] / w[0] == 2.0);
    let unit: Vec<f64> = (0..=5).map(|k| step_budget(k, Timeline::Unit, 2.0).bv).collect();
    let constant = unit.iter().all(|&b| b == unit[0]);
    Ok((doubling && constant, format!("dyadic BV {dyadic:?}; unit BV {}", unit[0])))
}

fn cos_datum(n: usize) -> Result<ScalarField, Box<dyn Error>> {
    Ok(ScalarField::from_fn(n, |x, _| 2.0 * (2.0 * PI * x).cos(), false)?)
}

fn exponential_lower_bound() -> Outcome {
    let start = Instant::now();
    let model = VelocityModel::alternating_shear(1.0, 0.5)?;
    let datum = cos_datum(256)?;
    let mut worst = f64::INFINITY;
    let mut series = Vec::new();
    for j in 0..=12 {
        let t = j as f64 * 0.25;
        let m = mix_f(&advect(&datum, &model, t, 5e-3)?.zero_mean_part())?;
        worst = worst.min(m - (SQRT_2 * (-2.0 * PI * t).exp() - 0.05 * SQRT_2));
        series.push(m);
    }
    let ratio = series[12] / series[0];
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst >= 0.0 && ratio <= 0.9 && secs < 300.0,
        format!("worst margin {worst:.4}; mix_f(3)/mix_f(0) = {ratio:.4}; {secs:.1} s"),
    ))
}

fn scaling_law() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let f = random_band_limited(&mut r, 64, 3)?;
        for m in [2usize, 4] {
            let g = f.rescale(m)?;
            for s in [-1.0, 0.0, 1.0] {
                let expect = (m as f64).powf(s) * f.sobolev_norm(s)?;
                worst = worst.max((g.sobolev_norm(s)? - expect).abs() / expect);
            }
        }
    }
    Ok((worst <= 1e-10, format!("largest relative error {worst:.1e}")))
}

fn interpolation_inequality() -> Outcome {
    let mut r = rng(5);
    let mut worst_gap = f64::INFINITY;
    for j in 0..1000 {
        let f = random_band_limited(&mut r, 32, 1 + j % 7)?;
        let l2 = f.lp_norm(2.0)?;
        worst_gap = worst_gap.min(f.sobolev_norm(-1.0)? * f.sobolev_norm(1.0)? + 1e-12 - l2 * l2);
    }
    let mut worst_eq: f64 = 0.0;
    for _ in 0..200 {
        let f = random_single_mode(&mut r, 32, 7)?;
        let l2 = f.lp_norm(2.0)?;
        let prod = f.sobolev_norm(-1.0)? * f.sobolev_norm(1.0)?;
        worst_eq = worst_eq.max((prod - l2 * l2).abs() / (l2 * l2));
    }
    Ok((
        worst_gap >= 0.0 && worst_eq <= 1e-10,
        format!("smallest slack {worst_gap:.3e}; single-mode equality error {worst_eq:.1e}"),
    ))
}

fn conservation() -> Outcome {
    let n = 128;
    let datum = random_band_limited(&mut rng(6), n, 5)?;
    let tr = VelocityModel::translation([0.25, 0.125])?;
    let mut stable = true;
    let mut spectral: f64 = 0.0;
    let base = (datum.lp_norm(1.0)?, datum.lp_norm(2.0)?, datum.linf(), datum.mean());
    for j in 1..=8 {
        let t = j as f64 / 8.0;
        let f = advect(&datum, &tr, t, 0.01)?;
        stable &= (f.lp_norm(1.0)?, f.lp_norm(2.0)?, f.linf(), f.mean()) == base;
        spectral = spectral.max((mix_f(&f)? - mix_f(&datum)?).abs());
    }
    let shear = VelocityModel::alternating_shear(1.0, 0.5)?;
    let smooth = ScalarField::from_fn(
        256,
        |x, y| 2.0 * (2.0 * PI * x).cos() + (2.0 * PI * (x + 2.0 * y)).sin() + 0.5,
        false,
    )?;
    let mut series = Vec::new();
    for j in 0..=8 {
        let t = j as f64 * 0.25;
        series.push((t, advect(&smooth, &shear, t, 5e-3)?));
    }
    let rep = conservation_report(&series)?;
    Ok((
        stable && rep.rel_l2_drift <= 1e-2 && rep.mean_drift <= 1e-6,
        format!(
            "translation L1/L2/Linf/mean bit-stable: {stable} (mix_f drift {spectral:.1e}); shear L2 drift {:.2e}, mean drift {:.2e}",
            rep.rel_l2_drift, rep.mean_drift
        ),
    ))
}

fn gronwall() -> Outcome {
    let model = VelocityModel::steady_shear(1.0)?;
    let map = flow_map(&model, 0.0, 1.0, 5e-3, 256)?;
    let rep = gronwall_check(&map, 2.0 * PI, 100_000, 7)?;
    Ok((
        rep.pass,
        format!("ratios in [{:.5}, {:.3}] against [{:.5}, {:.3}]", rep.min_ratio, rep.max_ratio, rep.lower_bound, rep.upper_bound),
    ))
}

fn maximal_properties() -> Outcome {
    let params = MixParams::default();
    let n = 64;
    let mut corpus: Vec<ScalarField> = Vec::new();
    let mut r = rng(8);
    for j in 0..20 {
        corpus.push(random_band_limited(&mut r, n, 1 + j % 15)?);
    }
    for k in 0..4 {
        corpus.push(checkerboard(k, n)?);
    }
    corpus.push(half_half(n)?);
    let mut spike = vec![0.0; n * n];
    spike[5 * n + 9] = 3.0;
    corpus.push(ScalarField::new(n, spike, false)?);
    let mut dominated = true;
    let mut chebyshev = true;
    for f in &corpus {
        let mf = maximal_function(f, &RadiiSet::GridSteps, &params)?;
        dominated &= mf.values.samples().iter().zip(f.samples()).all(|(m, v)| *m >= v.abs());
        chebyshev &= weak_type_probe(f, &mf, &[])?.chebyshev;
    }
    // the same continuum fields sampled at N and 2N
    let mut worst: f64 = 0.0;
    let mut range = (f64::INFINITY, 0.0f64);
    for seed in 0..100 {
        let coarse = random_band_limited(&mut rng(1000 + seed), 32, 4)?;
        let fine = random_band_limited(&mut rng(1000 + seed), 64, 4)?;
        let a = strong_ratio(&coarse, &maximal_function(&coarse, &RadiiSet::GridSteps, &params)?)?;
        let b = strong_ratio(&fine, &maximal_function(&fine, &RadiiSet::GridSteps, &params)?)?;
        worst = worst.max((b / a - 1.0).abs());
        range = (range.0.min(a.min(b)), range.1.max(a.max(b)));
    }
    Ok((
        dominated && chebyshev && worst <= 0.1,
        format!(
            "Mf >= |f| on {} fields: {dominated}; Chebyshev: {chebyshev}; strong ratio in [{:.3}, {:.3}], largest change under doubling {:.2}%",
            corpus.len(),
            range.0,
            range.1,
            100.0 * worst
        ),
    ))
}

fn g_and_lusin() -> Outcome {
    let n = 64;
    let radii = dyadic_radii(n);
    let id = g_functional(&[FlowMap::identity(n, 0.0)?], 2.0, &radii)?.value;
    let tr = flow_map(&VelocityModel::translation([0.3, 0.7])?, 0.0, 1.0, 0.01, n)?;
    let gt = g_functional(&[tr], 2.0, &radii)?.value;
    let shear = flow_map(&VelocityModel::steady_shear(1.0)?, 0.0, 1.0, 5e-3, n)?;
    let g = g_functional(std::slice::from_ref(&shear), 2.0, &radii)?;
    let l = lusin_extract(&g, &shear, 0.1, PairSampling::Exhaustive)?;
    Ok((
        id <= LN_2 + 1e-10 && gt <= LN_2 + 1e-10 && g.value <= 2.0 * PI + LN_2 && l.violations == 0,
        format!(
            "G identity {id:.4}, translation {gt:.4}, shear {:.4}; Lusin lambda {:.3}, {} pairs, {} violations",
            g.value, l.lambda, l.pairs_checked, l.violations
        ),
    ))
}

fn geometric_pipeline(bin: &Path) -> Outcome {
    let start = Instant::now();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/geometric.toml");
    let mut cfg = ScenarioConfig::load(&path)?;
    let tmp = tempfile::tempdir()?;
    let dir = tmp.path().join("geometric");
    cfg.outputs.directory = Some(dir.clone());
    cfg.validate()?;
    let bundle = run_scenario(&cfg)?;
    write_bundle(&bundle, &dir)?;
    let positive = bundle.series.mix_g.iter().all(|m| m.epsilon > 0.0);
    let complies = bundle.status().is_ok();
    let last = bundle.series.mix_g.last().map(|m| m.epsilon).unwrap_or(0.0);

    let csv = dir.join("series.csv");
    let mut s = from_csv(&fs::read_to_string(&csv)?)?;
    let len = s.mix_g.len();
    for (i, m) in s.mix_g.iter_mut().enumerate() {
        m.epsilon = 0.3 - 0.6 * i as f64 / (len - 1) as f64;
    }
    fs::write(&csv, to_csv(&s))?;
    let status = Command::new(bin).arg("report").arg(&dir).output()?.status.code();
    let secs = start.elapsed().as_secs_f64();
    Ok((
        positive && complies && status == Some(3),
        format!(
            "mix_g {:.4} -> {last:.4}, compliance {}; negative control exit {status:?}; {secs:.1} s",
            bundle.series.mix_g[0].epsilon,
            if complies { "pass" } else { "fail" }
        ),
    ))
}

fn exact_rewind() -> Outcome {
    let params = MixParams::new(1.0 / 3.0, RadiiSet::FirstSteps(2))?;
    let mut cases = 0;
    let mut exact = true;
    for timeline in [Timeline::Unit, Timeline::Dyadic] {
        for k0 in 0..=3u32 {
            for steps in 1..=4u32 {
                let n = 1usize << (k0 + steps + 2);
                let (mut end, _) = evolve_exact(&BressanState::new(k0, timeline)?, steps, n, &params)?;
                end.rewind(steps)?;
                exact &= end.render(n)? == checkerboard(k0, n)?;
                cases += 1;
            }
        }
    }
    Ok((exact, format!("{cases} evolve/rewind cases reproduce the checkerboard sample for sample: {exact}")))
}

fn main() -> ExitCode {
    let bin = Path::new(env!("CARGO_BIN_EXE_mixlab"));
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("bressan decay", Box::new(bressan_decay)),
        ("bressan budgets", Box::new(bressan_budgets)),
        ("exponential lower bound", Box::new(exponential_lower_bound)),
        ("scaling law", Box::new(scaling_law)),
        ("interpolation inequality", Box::new(interpolation_inequality)),
        ("conservation", Box::new(conservation)),
        ("flow bound", Box::new(gronwall)),
        ("maximal function", Box::new(maximal_properties)),
        ("G and Lusin-Lipschitz", Box::new(g_and_lusin)),
        ("geometric pipeline", Box::new(move || geometric_pipeline(bin))),
        ("exact rewind", Box::new(exact_rewind)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
