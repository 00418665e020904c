//! Resampling inference for the crude slope and friends.
//!
//! Bootstrap and permutation replicates each get their own stream, derived
//! from a seed forked off the caller's stream plus the replicate index, so
//! the result does not depend on how rayon schedules the work.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RtmError};
use crate::estimators::{sample_stats, slope_by_method, ErrorSpec, SlopeMethod};
use crate::model::null_crude_slope;
use crate::simulate::{derive_stream, ObservedSample, SeedSpec, Stream};

/// Minimum number of bootstrap resamples accepted.
pub const MIN_BOOTSTRAP: usize = 100;
/// Minimum number of random permutations accepted.
pub const MIN_PERMUTATIONS: usize = 99;
/// Label of the null hypothesis a permutation test of `r(x1, x2)` actually tests.
pub const PERMUTATION_NULL: &str = "x₁ ⟂ x₂ (β = −1)";

/// Type-1 sample quantile (inverse empirical CDF) of an ascending slice.
///
/// Returns the `k`-th order statistic with `k = ceil(p * m)`, clamped to
/// `1..=m`. When `p * m` is an integer the lower order statistic is used.
pub fn quantile_type1(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty slice");
    let m = sorted.len() as f64;
    let h = p * m;
    // p*m is often an integer up to rounding (0.025 * 10000)
    let k = if (h - h.round()).abs() < 1e-9 {
        h.round()
    } else {
        h.ceil()
    };
    let k = (k as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn sort_floats(v: &mut [f64]) {
    v.sort_by(|a, b| a.total_cmp(b));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub method: SlopeMethod,
    /// Successful replicate slopes in replicate-index order.
    #[serde(skip)]
    pub replicates: Vec<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub point_estimate: f64,
    /// Number of resamples requested.
    pub resamples: usize,
    /// Resamples where the estimator failed (e.g. zero variance of x1).
    pub n_failed: usize,
    /// More than 1% of resamples failed.
    pub high_failure_rate: bool,
}

impl BootstrapResult {
    /// Same result for the negated change `-d`: all slopes change sign.
    pub fn negated(&self) -> Self {
        Self {
            replicates: self.replicates.iter().map(|v| -v).collect(),
            ci_low: -self.ci_high,
            ci_high: -self.ci_low,
            point_estimate: -self.point_estimate,
            ..self.clone()
        }
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Percentile bootstrap of a slope estimator, resampling subject pairs.
pub fn bootstrap_slope(
    obs: &ObservedSample,
    method: SlopeMethod,
    error: Option<ErrorSpec>,
    resamples: usize,
    level: f64,
    stream: &mut Stream,
) -> Result<BootstrapResult> {
    if resamples < MIN_BOOTSTRAP {
        return Err(invalid(format!(
            "need at least {MIN_BOOTSTRAP} bootstrap resamples, got {resamples}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    match (method, error) {
        (SlopeMethod::True, _) => {
            return Err(RtmError::Usage("cannot bootstrap the true slope".into()));
        }
        (SlopeMethod::Blomqvist, None) => {
            return Err(RtmError::Usage(
                "blomqvist bootstrap needs an error spec".into(),
            ));
        }
        (SlopeMethod::Crude | SlopeMethod::Berry, Some(_)) => {
            return Err(RtmError::Usage(format!(
                "{method} bootstrap takes no error spec"
            )));
        }
        _ => {}
    }
    let point_estimate = slope_by_method(obs, method, error)?.value;
    let family = stream.fork_seed();
    let n = obs.len();
    let outcomes: Vec<Option<f64>> = (0..resamples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(SeedSpec::new(family, i));
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            slope_by_method(&obs.select(&idx), method, error)
                .ok()
                .map(|s| s.value)
        })
        .collect();
    let replicates: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let n_failed = resamples - replicates.len();
    if replicates.is_empty() {
        return Err(RtmError::InferenceFailure(format!(
            "all {resamples} bootstrap resamples were degenerate"
        )));
    }
    let mut sorted = replicates.clone();
    sort_floats(&mut sorted);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapResult {
        method,
        ci_low: quantile_type1(&sorted, tail),
        ci_high: quantile_type1(&sorted, 1.0 - tail),
        replicates,
        level,
        point_estimate,
        resamples,
        n_failed,
        high_failure_rate: n_failed as f64 > 0.01 * resamples as f64,
    })
}

/// Repeatabilities for which `beta = 0` is compatible with a crude-slope CI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityInterval {
    pub low: f64,
    pub high: f64,
    pub empty: bool,
    /// The lower end was clipped at 0, which is itself excluded.
    pub low_open: bool,
}

impl RepeatabilityInterval {
    pub fn contains(&self, r: f64) -> bool {
        if self.empty || !(r > 0.0 && r <= 1.0) {
            return false;
        }
        let above_low = if self.low_open {
            r > self.low
        } else {
            r >= self.low
        };
        above_low && r <= self.high
    }
}

impl std::fmt::Display for RepeatabilityInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.empty {
            return f.write_str("empty");
        }
        let open = if self.low_open { '(' } else { '[' };
        let g = |v: f64| crate::io::format_significant(v, crate::io::JSON_SIGNIFICANT_DIGITS);
        write!(f, "{open}{}, {}]", g(self.low), g(self.high))
    }
}

/// `{R in (0, 1] : R - 1 in [ci_low, ci_high]}`.
pub fn nonrejection_repeatability(ci_low: f64, ci_high: f64) -> Result<RepeatabilityInterval> {
    if !(ci_low <= ci_high) {
        return Err(invalid(format!(
            "need ci_low <= ci_high, got [{ci_low}, {ci_high}]"
        )));
    }
    let lo = 1.0 + ci_low;
    let hi = 1.0 + ci_high;
    if hi <= 0.0 || lo > 1.0 {
        return Ok(RepeatabilityInterval {
            low: 0.0,
            high: 0.0,
            empty: true,
            low_open: false,
        });
    }
    Ok(RepeatabilityInterval {
        low: lo.max(0.0),
        high: hi.min(1.0),
        empty: false,
        low_open: lo <= 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullDecision {
    pub repeatability: f64,
    /// Expected crude slope under `beta = 0`, `R - 1`.
    pub null_value: f64,
    pub rejected: bool,
}

/// Tests `beta = 0` by checking whether `R - 1` lies in a crude-slope CI.
pub fn test_null_given_r(boot: &BootstrapResult, repeatability: f64) -> Result<NullDecision> {
    if boot.method != SlopeMethod::Crude {
        return Err(RtmError::Usage(format!(
            "null test given R needs a crude-slope bootstrap, got {}",
            boot.method
        )));
    }
    let null_value = null_crude_slope(repeatability)?;
    Ok(NullDecision {
        repeatability,
        null_value,
        rejected: !boot.contains(null_value),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub null_hypothesis: String,
    pub observed_statistic: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    /// All `n!` orderings were enumerated instead of sampled.
    pub exact: bool,
}

fn factorial_at_most(n: usize, cap: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k).filter(|v| *v <= cap))
}

/// Two-sided permutation test of zero correlation between `x1` and `x2`.
///
/// When `n!` does not exceed `n_perm` every ordering is enumerated and the
/// p-value is exact; otherwise `n_perm` random orderings are drawn and the
/// add-one estimate `(hits + 1) / (n_perm + 1)` is returned.
pub fn permutation_test_independence(
    obs: &ObservedSample,
    n_perm: usize,
    stream: &mut Stream,
) -> Result<PermutationResult> {
    let n = obs.len();
    if n < 3 {
        return Err(RtmError::SampleSize { got: n, min: 3 });
    }
    if n_perm < MIN_PERMUTATIONS {
        return Err(invalid(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {n_perm}"
        )));
    }
    let stats = sample_stats(obs);
    let observed = stats.correlation()?;
    let dx: Vec<f64> = obs.x1().iter().map(|v| v - stats.mean_x1).collect();
    let dy: Vec<f64> = obs.x2().iter().map(|v| v - stats.mean_x2).collect();
    let norm =
        (dx.iter().map(|v| v * v).sum::<f64>() * dy.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let corr = |order: &[usize]| -> f64 {
        order.iter().zip(&dx).map(|(&j, a)| a * dy[j]).sum::<f64>() / norm
    };
    let threshold = observed.abs() * (1.0 - 1e-12);
    let family = stream.fork_seed();

    if let Some(total) = factorial_at_most(n, n_perm) {
        let hits = (0..n)
            .permutations(n)
            .filter(|p| corr(p).abs() >= threshold)
            .count();
        return Ok(PermutationResult {
            null_hypothesis: PERMUTATION_NULL.into(),
            observed_statistic: observed,
            p_value: hits as f64 / total as f64,
            n_permutations: total,
            exact: true,
        });
    }

    let hits: usize = (0..n_perm as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(SeedSpec::new(family, i));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            usize::from(corr(&order).abs() >= threshold)
        })
        .sum();
    Ok(PermutationResult {
        null_hypothesis: PERMUTATION_NULL.into(),
        observed_statistic: observed,
        p_value: (hits + 1) as f64 / (n_perm + 1) as f64,
        n_permutations: n_perm,
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(x1: &[f64], x2: &[f64]) -> ObservedSample {
        ObservedSample::new(x1.to_vec(), x2.to_vec()).unwrap()
    }

    #[test]
    fn type1_quantiles() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_type1(&v, 0.0), 1.0);
        assert_eq!(quantile_type1(&v, 0.1), 1.0);
        assert_eq!(quantile_type1(&v, 0.11), 2.0);
        assert_eq!(quantile_type1(&v, 0.5), 5.0);
        assert_eq!(quantile_type1(&v, 1.0), 10.0);
        let big: Vec<f64> = (1..=10_000).map(f64::from).collect();
        let tail = (1.0 - 0.95) / 2.0;
        assert_eq!(quantile_type1(&big, tail), 250.0);
        assert_eq!(quantile_type1(&big, 1.0 - tail), 9750.0);
    }

    #[test]
    fn constant_estimator_gives_point_interval() {
        let o = obs(&[1.0, 2.0, 3.0, 4.0], &[5.0, 5.0, 5.0, 5.0]);
        let mut s = derive_stream(SeedSpec::new(3, 0));
        let b = bootstrap_slope(&o, SlopeMethod::Crude, None, 1000, 0.95, &mut s).unwrap();
        assert_eq!(b.replicates.len() + b.n_failed, 1000);
        assert!(b.replicates.iter().all(|v| *v == -1.0));
        assert_eq!((b.ci_low, b.ci_high), (-1.0, -1.0));
        // n = 4 gives a 4/256 chance that a resample repeats one subject
        assert!(b.n_failed > 0 && b.high_failure_rate);
    }

    #[test]
    fn bootstrap_argument_checks() {
        let o = obs(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 5.0, 3.0]);
        let mut s = derive_stream(SeedSpec::new(3, 0));
        assert!(bootstrap_slope(&o, SlopeMethod::Crude, None, 99, 0.95, &mut s).is_err());
        assert!(bootstrap_slope(&o, SlopeMethod::Crude, None, 100, 1.0, &mut s).is_err());
        assert!(matches!(
            bootstrap_slope(&o, SlopeMethod::Blomqvist, None, 100, 0.9, &mut s),
            Err(RtmError::Usage(_))
        ));
        assert!(matches!(
            bootstrap_slope(&o, SlopeMethod::True, None, 100, 0.9, &mut s),
            Err(RtmError::Usage(_))
        ));
        let flat = obs(&[1.0, 1.0, 1.0], &[2.0, 1.0, 5.0]);
        assert!(bootstrap_slope(&flat, SlopeMethod::Crude, None, 100, 0.9, &mut s).is_err());
    }

    #[test]
    fn failing_resamples_are_counted() {
        // var(x1) = 1; most resamples fall below delta2 = 0.999
        let o = obs(&[1.0, 2.0, 3.0], &[1.0, 2.5, 2.0]);
        let mut s = derive_stream(SeedSpec::new(9, 9));
        let spec = Some(ErrorSpec::ErrorVariance(0.999));
        match bootstrap_slope(&o, SlopeMethod::Blomqvist, spec, 200, 0.95, &mut s) {
            Ok(b) => {
                assert!(b.high_failure_rate);
                assert_eq!(b.n_failed + b.replicates.len(), 200);
            }
            Err(e) => assert!(matches!(e, RtmError::InferenceFailure(_))),
        }
        let wide = Some(ErrorSpec::ErrorVariance(10.0));
        assert!(matches!(
            bootstrap_slope(&o, SlopeMethod::Blomqvist, wide, 200, 0.95, &mut s),
            Err(RtmError::Singular { .. })
        ));
    }

    #[test]
    fn repeatability_interval_examples() {
        let r = nonrejection_repeatability(-1.255, -0.415).unwrap();
        assert!(!r.empty && r.low_open);
        assert_eq!(r.low, 0.0);
        assert!((r.high - 0.585).abs() < 1e-12);
        let r = nonrejection_repeatability(-0.569, -0.286).unwrap();
        assert!(!r.low_open);
        assert!((r.low - 0.431).abs() < 1e-12 && (r.high - 0.714).abs() < 1e-12);
        assert!(r.contains(0.69));
        assert!(nonrejection_repeatability(0.1, 0.5).unwrap().empty);
        assert!(nonrejection_repeatability(-1.5, -1.0).unwrap().empty);
        assert!(nonrejection_repeatability(0.2, 0.1).is_err());
        let r = nonrejection_repeatability(-0.3, 0.4).unwrap();
        assert_eq!(r.high, 1.0);
        assert_eq!(r.to_string(), "[0.7, 1]");
    }

    fn crude_boot(ci_low: f64, ci_high: f64) -> BootstrapResult {
        BootstrapResult {
            method: SlopeMethod::Crude,
            replicates: vec![],
            ci_low,
            ci_high,
            level: 0.95,
            point_estimate: (ci_low + ci_high) / 2.0,
            resamples: 10_000,
            n_failed: 0,
            high_failure_rate: false,
        }
    }

    #[test]
    fn null_decisions() {
        let fig = crude_boot(-0.569, -0.286);
        assert!(!test_null_given_r(&fig, 0.69).unwrap().rejected);
        let lizard = crude_boot(-1.255, -0.415);
        assert!(test_null_given_r(&lizard, 0.69).unwrap().rejected);
        assert!(
            !test_null_given_r(&crude_boot(-0.1, 0.2), 1.0)
                .unwrap()
                .rejected
        );
        assert!(
            test_null_given_r(&crude_boot(-0.5, -0.1), 1.0)
                .unwrap()
                .rejected
        );
        let mut berry = fig.clone();
        berry.method = SlopeMethod::Berry;
        assert!(matches!(
            test_null_given_r(&berry, 0.69),
            Err(RtmError::Usage(_))
        ));
        assert!(test_null_given_r(&fig, 0.0).is_err());
    }

    #[test]
    fn permutation_exact_for_small_n() {
        let o = obs(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 10.0]);
        let mut s = derive_stream(SeedSpec::new(1, 0));
        let r = permutation_test_independence(&o, 999, &mut s).unwrap();
        assert!(r.exact);
        assert_eq!(r.n_permutations, 120);
        assert!((r.p_value - 2.0 / 120.0).abs() < 1e-15);
        assert!(r.p_value <= 0.02);
        assert_eq!(r.null_hypothesis, PERMUTATION_NULL);
    }

    #[test]
    fn permutation_sampled_and_checked() {
        let x1: Vec<f64> = (0..12).map(f64::from).collect();
        let x2: Vec<f64> = x1.iter().map(|v| (v * 7.0) % 5.0).collect();
        let o = obs(&x1, &x2);
        let mut s = derive_stream(SeedSpec::new(1, 0));
        let r = permutation_test_independence(&o, 999, &mut s).unwrap();
        assert!(!r.exact && r.n_permutations == 999);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        let flat = obs(&[1.0, 2.0, 3.0, 4.0], &[5.0; 4]);
        assert!(matches!(
            permutation_test_independence(&flat, 999, &mut s),
            Err(RtmError::Degenerate(_))
        ));
        assert!(permutation_test_independence(&o, 50, &mut s).is_err());
    }
}
