use proptest::prelude::*;
use rtm_core::model::*;
use rtm_core::PopulationParams;

fn params() -> impl Strategy<Value = PopulationParams> {
    (
        -200.0..200.0f64,
        0.01..100.0f64,
        -50.0..50.0f64,
        -3.0..2.0f64,
        0.0..100.0f64,
        0.0..10.0f64,
    )
        .prop_map(|(mu, sigma2, alpha, beta, nu2, ratio)| {
            PopulationParams::new(mu, sigma2, alpha, beta, nu2, ratio * sigma2).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn berry_minus_crude_is_one_minus_rho(p in params()) {
        let m = population_moments(&p).unwrap();
        let gap = berry_slope_population(&p).unwrap() - crude_slope_population(&p);
        prop_assert!((gap - (1.0 - m.rho)).abs() < 1e-12);
    }

    #[test]
    fn blomqvist_inverts_the_attenuation(p in params()) {
        prop_assume!(p.delta2() < 0.9 * p.var_x1());
        let bc = crude_slope_population(&p);
        let back = blomqvist_invert(bc, p.var_x1(), p.delta2()).unwrap();
        prop_assert!((back - p.beta()).abs() < 1e-10, "{back} vs {}", p.beta());
    }

    #[test]
    fn attenuation_pulls_toward_minus_one(p in params()) {
        let bc = crude_slope_population(&p);
        let lo = p.beta().min(-1.0);
        let hi = p.beta().max(-1.0);
        prop_assert!(bc >= lo - 1e-12 && bc <= hi + 1e-12);
    }

    #[test]
    fn more_noise_means_more_attenuation(p in params(), extra in 0.01..10.0f64) {
        prop_assume!((p.beta() + 1.0).abs() > 1e-3);
        let noisier = p.with_delta2(p.delta2() + extra * p.sigma2()).unwrap();
        let d0 = (crude_slope_population(&p) + 1.0).abs();
        let d1 = (crude_slope_population(&noisier) + 1.0).abs();
        prop_assert!(d1 < d0);
    }

    #[test]
    fn location_does_not_matter(p in params(), mu in -1e3..1e3f64, alpha in -1e3..1e3f64) {
        let moved = p.with_location(mu, alpha).unwrap();
        let betas = [0.0, -0.5, -1.5];
        let ratios = [0.0, 0.45, 1.0, 2.0];
        prop_assert_eq!(
            population_sweep(&p, &betas, &ratios).unwrap(),
            population_sweep(&moved, &betas, &ratios).unwrap()
        );
        prop_assert_eq!(population_slopes(&p).unwrap(), population_slopes(&moved).unwrap());
    }

    #[test]
    fn rho_star_is_the_null_correlation(p in params()) {
        let null = p.with_beta(0.0).unwrap();
        prop_assert_eq!(rho_star(&p).unwrap(), population_moments(&null).unwrap().rho);
        let r = null_variance_ratio(&p);
        prop_assert!((r - null.var_x2() / null.var_x1()).abs() < 1e-12 * r);
    }

    #[test]
    fn null_slopes_follow_from_the_general_ones(p in params()) {
        let null = p.with_beta(0.0).unwrap();
        let nc = null_crude_slope(p.repeatability()).unwrap();
        prop_assert!((nc - crude_slope_population(&null)).abs() < 1e-12);
        let nb = null_berry_slope(&p).unwrap();
        prop_assert!((nb - berry_slope_population(&null).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn b_coefficient_matches_inverted_slope(p in params()) {
        prop_assume!(p.delta2() < 0.9 * p.var_x1());
        let bc = crude_slope_population(&p);
        let b = blomqvist_b_coefficient(bc, p.var_x1(), p.delta2()).unwrap();
        // slope of x2 - mean + B (x1 - mean) on x1 is (bc + 1) + B
        let be = blomqvist_invert(bc, p.var_x1(), p.delta2()).unwrap();
        prop_assert!((bc + 1.0 + b - be).abs() < 1e-9);
    }
}

#[test]
fn blomqvist_is_singular_when_noise_dominates() {
    assert!(blomqvist_invert(-0.3, 1.0, 1.0).is_err());
    assert!(blomqvist_invert(-0.3, 1.0, 2.0).is_err());
    assert!(blomqvist_b_coefficient(-0.3, 1.0, 1.0).is_err());
}

#[test]
fn sweep_is_beta_major() {
    let p = PopulationParams::systolic(0.0);
    let rows = population_sweep(&p, &[0.0, -0.5], &[0.0, 1.0, 2.0]).unwrap();
    let order: Vec<(f64, f64)> = rows.iter().map(|r| (r.beta, r.noise_ratio)).collect();
    assert_eq!(
        order,
        vec![
            (0.0, 0.0),
            (0.0, 1.0),
            (0.0, 2.0),
            (-0.5, 0.0),
            (-0.5, 1.0),
            (-0.5, 2.0)
        ]
    );
}
