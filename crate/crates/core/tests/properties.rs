use mixlab_core::bounds::{compliance, kinetic_linear, lipschitz_exponential, ObservedSeries};
use mixlab_core::bressan::{BressanState, Timeline};
use mixlab_core::estimates::{maximal_function, quantile_threshold};
use mixlab_core::grid::{io, random_band_limited, random_single_mode};
use mixlab_core::mixing::{disk_average, mix_f, mix_g, MixParams, RadiiSet};
use mixlab_core::torus::{node, torus_dist};
use mixlab_core::transport::{flow_map, gronwall_check};
use mixlab_core::velocity::VelocityModel;
use mixlab_core::ScalarField;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn field(seed: u64, n: usize, kmax: i64) -> ScalarField {
    random_band_limited(&mut ChaCha8Rng::seed_from_u64(seed), n, kmax).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sobolev_scaling_law(seed in any::<u64>(), m in prop::sample::select(vec![2usize, 4]), s in prop::sample::select(vec![-1.0f64, 0.0, 1.0])) {
        let f = field(seed, 64, 3);
        let g = f.rescale(m).unwrap();
        let lhs = g.sobolev_norm(s).unwrap();
        let rhs = (m as f64).powf(s) * f.sobolev_norm(s).unwrap();
        prop_assert!(rel(lhs, rhs) < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn interpolation_inequality(seed in any::<u64>(), kmax in 1i64..8) {
        let f = field(seed, 32, kmax);
        let l2 = f.lp_norm(2.0).unwrap();
        let prod = f.sobolev_norm(-1.0).unwrap() * f.sobolev_norm(1.0).unwrap();
        prop_assert!(l2 * l2 <= prod * (1.0 + 1e-12));
    }

    #[test]
    fn interpolation_equality_on_single_modes(seed in any::<u64>()) {
        let f = random_single_mode(&mut ChaCha8Rng::seed_from_u64(seed), 32, 7).unwrap();
        let l2 = f.lp_norm(2.0).unwrap();
        let prod = f.sobolev_norm(-1.0).unwrap() * f.sobolev_norm(1.0).unwrap();
        prop_assert!(rel(l2 * l2, prod) < 1e-10);
    }

    #[test]
    fn disk_averages_stay_in_range(seed in any::<u64>(), j in 1usize..=16) {
        let f = field(seed, 32, 5);
        let (lo, hi) = f.min_max();
        let avg = disk_average(&f, j as f64 / 32.0).unwrap();
        for &v in &avg.averages {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn maximal_function_dominates_and_scales(seed in any::<u64>(), c in -3.0f64..3.0) {
        let f = field(seed, 32, 4);
        let params = MixParams::default();
        let radii = RadiiSet::FirstSteps(6);
        let mf = maximal_function(&f, &radii, &params).unwrap();
        for (m, v) in mf.values.samples().iter().zip(f.samples()) {
            prop_assert!(*m >= v.abs());
        }
        let scaled = f.map(|v| c * v).unwrap();
        let ms = maximal_function(&scaled, &radii, &params).unwrap();
        for (a, b) in ms.values.samples().iter().zip(mf.values.samples()) {
            prop_assert!((a - c.abs() * b).abs() <= 1e-12 * (1.0 + b));
        }
    }

    #[test]
    fn maximal_function_is_monotone(seed in any::<u64>(), other in any::<u64>()) {
        let f = field(seed, 32, 4);
        let h = field(other, 32, 2);
        let bigger: Vec<f64> = f.samples().iter().zip(h.samples()).map(|(a, b)| a.abs() + b.abs()).collect();
        let g = ScalarField::new(32, bigger, false).unwrap();
        let params = MixParams::default();
        let radii = RadiiSet::FirstSteps(6);
        let mf = maximal_function(&f, &radii, &params).unwrap();
        let mg = maximal_function(&g, &radii, &params).unwrap();
        for (a, b) in mf.values.samples().iter().zip(mg.values.samples()) {
            prop_assert!(*a <= b + 1e-12);
        }
    }

    #[test]
    fn mixing_scales_ignore_lattice_shifts_and_sign(seed in any::<u64>(), di in 0usize..32, dj in 0usize..32) {
        let f = field(seed, 32, 3);
        let shifted: Vec<f64> = (0..32 * 32).map(|idx| f.get((idx / 32 + di) % 32, (idx % 32 + dj) % 32)).collect();
        let g = ScalarField::new(32, shifted, false).unwrap();
        let params = MixParams::default();
        prop_assert_eq!(mix_g(&f, &params).unwrap(), mix_g(&g, &params).unwrap());
        prop_assert_eq!(mix_g(&f, &params).unwrap(), mix_g(&f.map(|v| -2.0 * v).unwrap(), &params).unwrap());
        prop_assert!(rel(mix_f(&f).unwrap(), mix_f(&g).unwrap()) < 1e-12);
        let e = mix_g(&f, &params).unwrap().epsilon;
        prop_assert!(e > 0.0 && e <= 0.5);
    }

    #[test]
    fn torus_distance_is_a_metric(a in prop::array::uniform2(0.0f64..1.0), b in prop::array::uniform2(0.0f64..1.0), c in prop::array::uniform2(0.0f64..1.0), k in -3i32..3) {
        let d = torus_dist(a, b);
        prop_assert!(d >= 0.0 && d <= 0.5f64.sqrt() + 1e-15);
        prop_assert_eq!(d, torus_dist(b, a));
        prop_assert!(d <= torus_dist(a, c) + torus_dist(c, b) + 1e-12);
        let moved = [b[0] + k as f64, b[1] - k as f64];
        prop_assert!((torus_dist(a, moved) - d).abs() < 1e-12);
    }

    #[test]
    fn quantile_threshold_excludes_at_most_eta(values in prop::collection::vec(0.0f64..10.0, 1..400), eta in 0.01f64..0.99) {
        let lambda = quantile_threshold(&values, eta).unwrap();
        let above = values.iter().filter(|&&v| v > lambda).count() as f64;
        prop_assert!(above <= eta * values.len() as f64 + 1e-9);
    }

    #[test]
    fn field_io_round_trips(seed in any::<u64>()) {
        let f = field(seed, 16, 3);
        let mut bin = Vec::new();
        io::write_binary(&f, &mut bin).unwrap();
        prop_assert_eq!(io::read_binary(&bin[..]).unwrap(), f.clone());
        let mut csv = Vec::new();
        io::write_csv(&f, &mut csv).unwrap();
        prop_assert_eq!(io::read_csv(&csv[..]).unwrap(), f);
    }

    #[test]
    fn bound_curves_are_nonincreasing(mix0 in 0.0f64..5.0, lip in 0.0f64..10.0, k in 0.0f64..3.0, sup in 0.0f64..2.0) {
        let times: Vec<f64> = (0..20).map(|j| j as f64 * 0.25).collect();
        for curve in [lipschitz_exponential(mix0, lip, &times).unwrap(), kinetic_linear(mix0, k, sup, &times).unwrap()] {
            prop_assert_eq!(curve.values[0], mix0);
            for w in curve.values.windows(2) {
                prop_assert!(w[1] <= w[0] && w[1] >= 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bressan_rewind_inverts_advance(level in 0u32..3, steps in 1u32..4, unit in any::<bool>()) {
        let timeline = if unit { Timeline::Unit } else { Timeline::Dyadic };
        let start = BressanState::new(level, timeline).unwrap();
        let mut s = start.clone();
        let n = 1usize << (level + steps + 3);
        let before = start.render(n).unwrap();
        let plus = before.samples().iter().filter(|&&v| v > 0.0).count();
        for _ in 0..2 * steps {
            s.advance_stage().unwrap();
            let f = s.render(n).unwrap();
            // each stage permutes cells, so the sign counts never change
            prop_assert_eq!(f.samples().iter().filter(|&&v| v > 0.0).count(), plus);
        }
        s.rewind(steps).unwrap();
        prop_assert_eq!(&s, &start);
        prop_assert_eq!(s.render(n).unwrap(), before);
    }

    #[test]
    fn steady_shear_map_is_closed_form_and_lipschitz(t in 0.05f64..2.0, a in 0.2f64..1.5, seed in any::<u64>()) {
        let model = VelocityModel::steady_shear(a).unwrap();
        let n = 16;
        let map = flow_map(&model, 0.0, t, 5e-3, n).unwrap();
        for idx in 0..n * n {
            let p = node(idx / n, idx % n, n);
            let exact = [p[0] + a * t * (2.0 * std::f64::consts::PI * p[1]).sin(), p[1]];
            prop_assert!(torus_dist(map.positions[idx], exact) < 1e-9);
        }
        let lip = 2.0 * std::f64::consts::PI * a;
        prop_assert!(gronwall_check(&map, lip, 2000, seed).unwrap().pass);
    }
}

#[test]
fn kinetic_bound_holds_for_the_exact_scheme() {
    let mut s = BressanState::new(0, Timeline::Unit).unwrap();
    let mut times = Vec::new();
    let mut mf = Vec::new();
    for _ in 0..6 {
        times.push(s.time());
        mf.push(s.mix_f().unwrap());
        s.advance(1).unwrap();
    }
    let budget = mixlab_core::bressan::step_budget(0, Timeline::Unit, 2.0);
    let curve = kinetic_linear(mf[0], budget.kinetic, 1.0, &times).unwrap();
    let obs = ObservedSeries { times, mix_f: mf.clone(), mix_g: vec![0.0; mf.len()] };
    let report = compliance(&obs, &[curve], 0.0).unwrap();
    assert!(report.pass);
}
