use poplim::generator::{
    a_coeff, apply_generator, apply_generator_decomposed, b_coeff, build_generator,
    stationary_distribution, transient_distribution, transient_from, CoeffForm, Halfwidth,
};
use poplim::lattice::LatticeDistribution;
use poplim::metrics::{sup_point_distance, total_variation, translate_tv};
use poplim::model::{build_skeleton, builtin, Jump, ModelSpec, RateFn};
use poplim::stein_poisson::{centred_pmf, shifted_stein_to, stein_solution, CentredPoisson};
use proptest::prelude::*;

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..3.0f64, 1..4)
}

fn poly_model(up: &[f64], down: &[f64], two: &[f64]) -> ModelSpec {
    ModelSpec::new(
        "poly",
        vec![
            Jump::new(1, RateFn::Poly(up.to_vec()), 1.0),
            Jump::new(-1, RateFn::Poly(down.to_vec()), 1.0),
            Jump::new(2, RateFn::Poly(two.to_vec()), 1.0),
        ],
        1.0,
        (0.0, 1.0),
        0.5,
    )
    .unwrap()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.len().max(b.len()))
        .map(|k| a.get(k).unwrap_or(&0.0) + b.get(k).unwrap_or(&0.0))
        .collect()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn distribution() -> impl Strategy<Value = LatticeDistribution> {
    (-5i64..5, prop::collection::vec(0.0..1.0f64, 1..12)).prop_filter_map(
        "positive mass",
        |(offset, w)| {
            let total: f64 = w.iter().sum();
            (total > 1e-3).then(|| LatticeDistribution::new(offset, w).normalized())
        },
    )
}

fn builtin_models() -> Vec<ModelSpec> {
    vec![
        builtin::immigration_death(1.0, 1.0).unwrap(),
        builtin::sis(2.0, 1.0).unwrap(),
        builtin::three_jump(1.0, 1.0, 0.25).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rate_summaries_are_linear_in_the_family(
        u1 in coeffs(), d1 in coeffs(), t1 in coeffs(),
        u2 in coeffs(), d2 in coeffs(), t2 in coeffs(),
        z in 0.0..2.0f64,
    ) {
        let m1 = poly_model(&u1, &d1, &t1);
        let m2 = poly_model(&u2, &d2, &t2);
        let sum = poly_model(&add(&u1, &u2), &add(&d1, &d2), &add(&t1, &t2));
        prop_assert!(close(sum.drift(z), m1.drift(z) + m2.drift(z), 1e-12));
        prop_assert!(close(sum.variance_rate(z), m1.variance_rate(z) + m2.variance_rate(z), 1e-12));
        prop_assert!(close(sum.total_rate(z), m1.total_rate(z) + m2.total_rate(z), 1e-12));
    }

    #[test]
    fn clamped_rates_are_nonnegative(c in prop::collection::vec(-3.0..3.0f64, 1..4), z in -5.0..5.0f64) {
        prop_assert!(RateFn::Poly(c).eval(z) >= 0.0);
    }

    #[test]
    fn generator_matches_its_decomposition(
        model_idx in 0usize..3,
        n in 20u64..2000,
        offset in -30i64..30,
        coef in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let model = &builtin_models()[model_idx];
        let skel = build_skeleton(model).unwrap();
        let i = skel.centre(n) + offset;
        // Bounded differences: smooth bounded oscillation plus a ramp.
        let h = |k: i64| {
            let x = k as f64;
            coef[0] * x + coef[1] * (0.3 * x).sin() + coef[2] * (0.05 * x).cos() + coef[3] * (x / 7.0).tanh()
        };
        let direct = apply_generator(model, n, h, i);
        let decomposed = apply_generator_decomposed(model, n, h, i);
        let scale: f64 = model.jumps().iter()
            .map(|j| n as f64 * j.rate.eval(i as f64 / n as f64) * (h(i + j.j) - h(i)).abs())
            .sum();
        prop_assert!((direct - decomposed).abs() <= 1e-10 * scale.max(direct.abs()).max(1e-300),
            "direct {direct} decomposed {decomposed}");
    }

    #[test]
    fn coefficient_forms_agree(j in 1i64..=8, i in -50i64..50, g in prop::collection::vec(-1.0..1.0f64, 120)) {
        let f = |k: i64| g[(k + 60).clamp(0, 119) as usize];
        let a = (a_coeff(&f, i, j, CoeffForm::Telescoped), a_coeff(&f, i, j, CoeffForm::Binomial));
        let b = (b_coeff(&f, i, j, CoeffForm::Telescoped), b_coeff(&f, i, j, CoeffForm::Binomial));
        prop_assert!((a.0 - a.1).abs() <= 1e-12 * a.0.abs().max(1.0));
        prop_assert!((b.0 - b.1).abs() <= 1e-12 * b.0.abs().max(1.0));
    }

    #[test]
    fn total_variation_is_a_metric(p in distribution(), q in distribution(), r in distribution()) {
        prop_assert_eq!(total_variation(&p, &q), total_variation(&q, &p));
        prop_assert!(total_variation(&p, &r) <= total_variation(&p, &q) + total_variation(&q, &r) + 1e-12);
        prop_assert!(total_variation(&p, &p) == 0.0);
        prop_assert!(sup_point_distance(&p, &q) <= 2.0 * total_variation(&p, &q) + 1e-15);
    }

    #[test]
    fn point_mass_bounded_by_translate_distance(p in distribution()) {
        prop_assert!(p.max_prob() <= translate_tv(&p) + 1e-15);
    }

    #[test]
    fn centred_pmf_bounded_by_half_inverse_root(mu in 1.0..5000.0f64) {
        let cp = CentredPoisson::new(mu).unwrap();
        let fl = cp.floor_mu;
        let sup = (-fl..=fl + 2).map(|k| centred_pmf(&cp, k))
            .fold(0.0, f64::max);
        prop_assert!(sup <= 1.0 / (2.0 * mu.sqrt()));
    }

    #[test]
    fn shifted_stein_is_an_index_shift(mu in 0.5..300.0f64, r_off in -5i64..20) {
        let cp = CentredPoisson::new(mu).unwrap();
        let r = (r_off).max(-cp.floor_mu);
        let s = r + cp.floor_mu;
        let shifted = shifted_stein_to(&cp, r, 3 * cp.floor_mu + 40).unwrap();
        let direct = stein_solution(mu, s, 4 * cp.floor_mu + 40).unwrap();
        for l in -cp.floor_mu..=2 * cp.floor_mu + 30 {
            prop_assert_eq!(shifted.eval(l), direct.g(l + cp.floor_mu));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn window_enlargement_barely_moves_the_stationary_law(model_idx in 0usize..3, n in 50u64..800) {
        let model = &builtin_models()[model_idx];
        let skel = build_skeleton(model).unwrap();
        let gen = build_generator(model, &skel, n, Halfwidth::Auto).unwrap();
        let w = ((gen.hi() - gen.lo()) / 2) as u64;
        let wide = build_generator(model, &skel, n, Halfwidth::Fixed(w + w / 4 + 1)).unwrap();
        let pi = stationary_distribution(&gen, 1e-10).unwrap();
        let big = stationary_distribution(&wide, 1e-10).unwrap();
        let lo = pi.lo().max(big.lo());
        let hi = pi.hi().min(big.hi());
        let restrict = |d: &LatticeDistribution| {
            LatticeDistribution::new(lo, (lo..=hi).map(|k| d.get(k)).collect())
        };
        let tv = total_variation(&restrict(&pi), &restrict(&big));
        prop_assert!(tv <= 1e-8, "tv {tv}");
    }

    #[test]
    fn transient_composes(model_idx in 0usize..3, s in 0.0..2.0f64, u in 0.0..2.0f64, off in -5i64..5) {
        let model = &builtin_models()[model_idx];
        let skel = build_skeleton(model).unwrap();
        let n = 60;
        let tol = 1e-10;
        let gen = build_generator(model, &skel, n, Halfwidth::Auto).unwrap();
        let init = skel.centre(n) + off;
        let whole = transient_distribution(&gen, init, s + u, tol).unwrap();
        let half = transient_distribution(&gen, init, s, tol).unwrap();
        let composed = transient_from(&gen, &half, u, tol).unwrap();
        prop_assert!(total_variation(&whole, &composed) <= 10.0 * tol);
    }
}
