use rtm_core::estimators::{sample_stats, true_slope};
use rtm_core::model::population_moments;
use rtm_core::simulate::{draw_sample, draw_seeded};
use rtm_core::{derive_stream, PopulationParams, SeedSpec};

const N: usize = 1_000_000;

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

#[test]
fn large_samples_match_population_moments() {
    let n = N as f64;
    for (i, beta) in [-1.5, -1.0, -0.5, 0.0, 0.5].into_iter().enumerate() {
        let p = PopulationParams::systolic(beta);
        let m = population_moments(&p).unwrap();
        let (_, obs) = draw_seeded(&p, N, SeedSpec::new(7, i as u64)).unwrap();
        let s = sample_stats(&obs);
        let mean2 = p.mu() + p.alpha() + p.beta() * p.mu();
        let se_var = |v: f64| v * (2.0 / (n - 1.0)).sqrt();
        let se_cov = ((m.var_x1 * m.var_x2 + m.cov_x1x2.powi(2)) / n).sqrt();
        assert!(
            (s.mean_x1 - p.mu()).abs() < 4.0 * (m.var_x1 / n).sqrt(),
            "beta {beta}"
        );
        assert!(
            (s.mean_x2 - mean2).abs() < 4.0 * (m.var_x2 / n).sqrt(),
            "beta {beta}"
        );
        assert!(
            (s.var_x1 - m.var_x1).abs() < 4.0 * se_var(m.var_x1),
            "beta {beta}"
        );
        assert!(
            (s.var_x2 - m.var_x2).abs() < 4.0 * se_var(m.var_x2),
            "beta {beta}"
        );
        assert!(
            (s.cov_x1x2 - m.cov_x1x2).abs() < 4.0 * se_cov,
            "beta {beta}"
        );
        let r = s.correlation().unwrap();
        assert!(
            (r - m.rho).abs() < 4.0 * (1.0 - m.rho * m.rho) / n.sqrt(),
            "beta {beta}"
        );
    }
}

#[test]
fn latent_and_error_components_have_the_right_spread() {
    let p = PopulationParams::systolic(-0.5);
    let (latent, obs) = draw_seeded(&p, N, SeedSpec::new(8, 0)).unwrap();
    let e1: Vec<f64> = obs
        .x1()
        .iter()
        .zip(latent.true_x1())
        .map(|(a, b)| a - b)
        .collect();
    let e2: Vec<f64> = obs
        .x2()
        .iter()
        .zip(latent.true_x2())
        .map(|(a, b)| a - b)
        .collect();
    let xi: Vec<f64> = latent
        .true_x1()
        .iter()
        .zip(latent.true_x2())
        .map(|(a, b)| b - a - p.alpha() - p.beta() * a)
        .collect();
    let tol = 4.0 * (2.0 / N as f64).sqrt();
    for (v, target) in [(&e1, p.delta2()), (&e2, p.delta2()), (&xi, p.nu2())] {
        let (m, var) = mean_var(v);
        assert!(m.abs() < 4.0 * (target / N as f64).sqrt());
        assert!((var / target - 1.0).abs() < tol, "{var} vs {target}");
    }
    let (_, var_t) = mean_var(latent.true_x1());
    assert!((var_t / p.sigma2() - 1.0).abs() < tol);
    let bt = true_slope(&latent).unwrap().value;
    assert!((bt - p.beta()).abs() < 0.01);
}

#[test]
fn draws_do_not_depend_on_the_thread_pool() {
    let p = PopulationParams::systolic(0.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| draw_seeded(&p, 1000, SeedSpec::new(3, 9)).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn sample_consumes_four_normals_per_subject() {
    let p = PopulationParams::systolic(0.0);
    let mut a = derive_stream(SeedSpec::new(5, 0));
    let (_, first) = draw_sample(&p, 10, &mut a).unwrap();
    let (_, second) = draw_sample(&p, 10, &mut a).unwrap();
    let (_, both) = draw_seeded(&p, 20, SeedSpec::new(5, 0)).unwrap();
    assert_eq!(&both.x1()[..10], first.x1());
    assert_eq!(&both.x1()[10..], second.x1());
    assert_eq!(&both.x2()[10..], second.x2());
}
