//! Simulation studies and the end-to-end dataset analysis.
//!
//! Replicate `r` of any study draws its sample from `SeedSpec(seed, r)`.
//! The head-to-head study reuses the same replicate streams for every beta
//! on its grid, so neighbouring grid points are compared on common random
//! numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RtmError};
use crate::estimators::{
    berry_slope, blomqvist_slope, crude_slope, pitman_test, sample_stats, true_slope, ErrorSpec,
    PitmanResult, SampleStats, SlopeEstimate, SlopeMethod,
};
use crate::inference::{
    bootstrap_slope, nonrejection_repeatability, permutation_test_independence, quantile_type1,
    test_null_given_r, BootstrapResult, NullDecision, PermutationResult, RepeatabilityInterval,
};
use crate::model::{
    berry_slope_population, crude_slope_population, inclusive_grid, null_berry_slope,
    null_berry_slope_literature_form, null_crude_slope, null_variance_ratio, population_moments,
    rho_star, PopulationMoments, PopulationParams,
};
use crate::simulate::{derive_stream, draw_sample, draw_seeded, ObservedSample, SeedSpec};

/// Stream indices used by [`analyze_dataset`] and [`run_bootstrap_demo`].
const DEMO_SAMPLE_STREAM: u64 = 0;
const CRUDE_BOOT_STREAM: u64 = 1;
const BLOMQVIST_BOOT_STREAM: u64 = 2;
const PERMUTATION_STREAM: u64 = 3;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_PERMUTATIONS: usize = 9_999;
pub const DEFAULT_HEAD_TO_HEAD_REPLICATES: usize = 10_000;

const PITMAN_NULL: &str = "σ₂²/σ₁² = 1";
const PITMAN_NOTE: &str =
    "equal variances is not the no-differential-effect null: under β = 0 the ratio is 1 + ν²/σ₁²";
pub const BERRY_WARNING: &str =
    "berry slope has a non-zero expectation under β = 0 that depends on the unknown ν²; \
     it should not be compared with 0";
pub const BERRY_FORMULA_NOTE: &str = "null berry slope: cov(d_B, x1)/var(x1) at β = 0 gives (σ²/σ₁²)(1 − 1/√(1 + ν²/σ₁²)) > 0, \
     while the form (δ²/σ₁²)(1/√(1 + ν²/σ₁²) − 1) < 0 quoted in the literature disagrees; simulation supports the former";

/// Box-plot summary of replicate estimates. Quartiles are type-1 quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn from_outcomes(values: &[Option<f64>]) -> Result<Self> {
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        if ok.len() < 2 {
            return Err(RtmError::InferenceFailure(format!(
                "only {} of {} replicates succeeded",
                ok.len(),
                values.len()
            )));
        }
        let m = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / m;
        let variance = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let mut sorted = ok.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Ok(Self {
            n_ok: ok.len(),
            n_failed: values.len() - ok.len(),
            mean,
            variance,
            std_error: (variance / m).sqrt(),
            min: sorted[0],
            q1: quantile_type1(&sorted, 0.25),
            median: quantile_type1(&sorted, 0.5),
            q3: quantile_type1(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistConfig {
    pub params: PopulationParams,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub error_spec: ErrorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistReport {
    pub config: SamplingDistConfig,
    pub crude: Summary,
    pub berry: Summary,
    pub blomqvist: Summary,
    #[serde(rename = "true")]
    pub true_slope: Summary,
    /// Closed-form population values of the crude and Berry slopes.
    pub population_crude: f64,
    pub population_berry: f64,
}

/// Draws `replicates` samples of size `n` and summarises all four slopes.
/// The Blomqvist slope uses `error_spec`, defaulting to the true `delta2`.
pub fn run_sampling_distribution(
    params: &PopulationParams,
    n: usize,
    replicates: usize,
    error_spec: Option<ErrorSpec>,
    seed: u64,
) -> Result<SamplingDistReport> {
    if replicates < 100 {
        return Err(invalid(format!(
            "need at least 100 replicates, got {replicates}"
        )));
    }
    if n < 10 {
        return Err(RtmError::SampleSize { got: n, min: 10 });
    }
    let error_spec = error_spec.unwrap_or(ErrorSpec::ErrorVariance(params.delta2()));
    error_spec.validate()?;
    let rows: Vec<[Option<f64>; 4]> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<[Option<f64>; 4]> {
            let (latent, obs) = draw_seeded(params, n, SeedSpec::new(seed, r))?;
            Ok([
                crude_slope(&obs).ok().map(|s| s.value),
                berry_slope(&obs).ok().map(|(_, s)| s.value),
                blomqvist_slope(&obs, error_spec).ok().map(|(_, s)| s.value),
                true_slope(&latent).ok().map(|s| s.value),
            ])
        })
        .collect::<Result<_>>()?;
    let column = |k: usize| Summary::from_outcomes(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    Ok(SamplingDistReport {
        config: SamplingDistConfig {
            params: *params,
            n,
            replicates,
            seed,
            error_spec,
        },
        crude: column(0)?,
        berry: column(1)?,
        blomqvist: column(2)?,
        true_slope: column(3)?,
        population_crude: crude_slope_population(params),
        population_berry: berry_slope_population(params)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadToHeadRow {
    pub beta: f64,
    /// Fraction of replicates with `|crude - beta| < |berry - beta|`.
    pub p_crude_beats_berry: f64,
    /// Fraction of replicates with `|crude - beta| < |blomqvist - beta|`.
    pub p_crude_beats_blomqvist: f64,
    /// Replicates where all three slopes were defined.
    pub n_valid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadToHeadConfig {
    pub params: PopulationParams,
    pub beta_grid: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadToHeadReport {
    pub config: HeadToHeadConfig,
    pub rows: Vec<HeadToHeadRow>,
}

/// Beta grid `-2.0, -1.9, ..., 0.5`.
pub fn default_beta_grid() -> Vec<f64> {
    (0..=25).map(|i| f64::from(i - 20) / 10.0).collect()
}

/// For each beta, how often the crude slope lands closer to beta than the
/// Berry and Blomqvist (true `delta2`) slopes do.
pub fn run_head_to_head(
    params_base: &PopulationParams,
    beta_grid: &[f64],
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<HeadToHeadReport> {
    if replicates < 1000 {
        return Err(invalid(format!(
            "need at least 1000 replicates, got {replicates}"
        )));
    }
    if n < 10 {
        return Err(RtmError::SampleSize { got: n, min: 10 });
    }
    let error_spec = ErrorSpec::ErrorVariance(params_base.delta2());
    let mut rows = Vec::with_capacity(beta_grid.len());
    for &beta in beta_grid {
        let params = params_base.with_beta(beta)?;
        let outcomes: Vec<Option<(bool, bool)>> = (0..replicates as u64)
            .into_par_iter()
            .map(|r| -> Result<Option<(bool, bool)>> {
                let mut stream = derive_stream(SeedSpec::new(seed, r));
                let (_, obs) = draw_sample(&params, n, &mut stream)?;
                let slopes = (|| -> Result<(f64, f64, f64)> {
                    Ok((
                        crude_slope(&obs)?.value,
                        berry_slope(&obs)?.1.value,
                        blomqvist_slope(&obs, error_spec)?.1.value,
                    ))
                })();
                Ok(slopes.ok().map(|(c, b, e)| {
                    let err_c = (c - beta).abs();
                    (err_c < (b - beta).abs(), err_c < (e - beta).abs())
                }))
            })
            .collect::<Result<_>>()?;
        let valid: Vec<(bool, bool)> = outcomes.into_iter().flatten().collect();
        if valid.is_empty() {
            return Err(RtmError::InferenceFailure(format!(
                "no valid replicates at beta = {beta}"
            )));
        }
        let m = valid.len() as f64;
        rows.push(HeadToHeadRow {
            beta,
            p_crude_beats_berry: valid.iter().filter(|v| v.0).count() as f64 / m,
            p_crude_beats_blomqvist: valid.iter().filter(|v| v.1).count() as f64 / m,
            n_valid: valid.len(),
        });
    }
    Ok(HeadToHeadReport {
        config: HeadToHeadConfig {
            params: *params_base,
            beta_grid: beta_grid.to_vec(),
            n,
            replicates,
            seed,
        },
        rows,
    })
}

/// Convenience: inclusive beta grid for the head-to-head study.
pub fn beta_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    inclusive_grid(start, stop, step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub resamples: usize,
    pub level: f64,
    pub n_perm: usize,
    /// Repeatability to test `beta = 0` against, if known.
    pub known_repeatability: Option<f64>,
    /// Report slopes for `-d = x1 - x2` instead of `d = x2 - x1`.
    pub negate_change: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            level: 0.95,
            n_perm: DEFAULT_PERMUTATIONS,
            known_repeatability: None,
            negate_change: false,
        }
    }
}

/// Closed-form reference values attached to reports on simulated data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationReference {
    pub moments: PopulationMoments,
    pub crude_slope: f64,
    pub berry_slope: f64,
    pub null_crude_slope: f64,
    pub null_berry_slope: f64,
    /// Alternative closed form for the null Berry slope; see `model` docs.
    pub null_berry_slope_literature_form: f64,
    pub rho_star: f64,
    pub null_variance_ratio: f64,
}

impl PopulationReference {
    pub fn new(params: &PopulationParams) -> Result<Self> {
        Ok(Self {
            moments: population_moments(params)?,
            crude_slope: crude_slope_population(params),
            berry_slope: berry_slope_population(params)?,
            null_crude_slope: null_crude_slope(params.repeatability())?,
            null_berry_slope: null_berry_slope(params)?,
            null_berry_slope_literature_form: null_berry_slope_literature_form(params),
            rho_star: rho_star(params)?,
            null_variance_ratio: null_variance_ratio(params),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub n: usize,
    pub seed: u64,
    pub options: AnalyzeOptions,
    pub error_spec: Option<ErrorSpec>,
    /// `"d = x2 - x1"` or `"-d = x1 - x2"`.
    pub sign_convention: String,
    /// Where the data came from (file path or simulation).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<PopulationParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSlopes {
    pub crude: SlopeEstimate,
    pub berry: SlopeEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blomqvist: Option<SlopeEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBootstrap {
    pub crude: BootstrapResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blomqvist: Option<BootstrapResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPitman {
    pub null_hypothesis: String,
    pub note: String,
    #[serde(flatten)]
    pub result: PitmanResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTests {
    pub permutation: PermutationResult,
    pub pitman: LabeledPitman,
    /// Verdict on `beta = 0` at the known repeatability.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_given_r: Option<NullDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub config: AnalyzeConfig,
    pub stats: SampleStats,
    pub slopes: ReportSlopes,
    pub bootstrap: ReportBootstrap,
    /// Computed from the crude CI in the `d = x2 - x1` convention.
    pub repeatability_interval: RepeatabilityInterval,
    pub tests: ReportTests,
    pub warnings: Vec<String>,
}

fn negate_slope(s: SlopeEstimate) -> SlopeEstimate {
    SlopeEstimate {
        value: -s.value,
        ..s
    }
}

/// Full analysis of one pre/post dataset.
///
/// Crude and Berry slopes are always reported, the crude slope with a
/// percentile bootstrap CI and the implied non-rejection repeatability
/// interval. With an error spec the Blomqvist slope and its CI are added.
/// Each resampling step uses a fixed stream index under `seed`, so adding
/// the Blomqvist part leaves the other sections untouched.
pub fn analyze_dataset(
    obs: &ObservedSample,
    error_spec: Option<ErrorSpec>,
    options: &AnalyzeOptions,
    seed: u64,
) -> Result<AnalyzeReport> {
    if obs.len() < 3 {
        return Err(RtmError::SampleSize {
            got: obs.len(),
            min: 3,
        });
    }
    if let Some(e) = error_spec {
        e.validate()?;
    }
    let stats = sample_stats(obs);
    let crude = crude_slope(obs)?;
    let (_, berry) = berry_slope(obs)?;
    let blomqvist = error_spec
        .map(|e| blomqvist_slope(obs, e).map(|(_, s)| s))
        .transpose()?;

    let mut warnings = vec![BERRY_WARNING.to_string(), BERRY_FORMULA_NOTE.to_string()];

    let boot_crude = bootstrap_slope(
        obs,
        SlopeMethod::Crude,
        None,
        options.resamples,
        options.level,
        &mut derive_stream(SeedSpec::new(seed, CRUDE_BOOT_STREAM)),
    )?;
    let boot_blomqvist = error_spec
        .map(|e| {
            bootstrap_slope(
                obs,
                SlopeMethod::Blomqvist,
                Some(e),
                options.resamples,
                options.level,
                &mut derive_stream(SeedSpec::new(seed, BLOMQVIST_BOOT_STREAM)),
            )
        })
        .transpose()?;
    for b in std::iter::once(&boot_crude).chain(boot_blomqvist.as_ref()) {
        if b.high_failure_rate {
            warnings.push(format!(
                "{} bootstrap: {} of {} resamples failed",
                b.method, b.n_failed, b.resamples
            ));
        }
    }

    let repeatability_interval = nonrejection_repeatability(boot_crude.ci_low, boot_crude.ci_high)?;
    let null_given_r = options
        .known_repeatability
        .map(|r| test_null_given_r(&boot_crude, r))
        .transpose()?;

    let permutation = permutation_test_independence(
        obs,
        options.n_perm,
        &mut derive_stream(SeedSpec::new(seed, PERMUTATION_STREAM)),
    )?;
    let pitman = LabeledPitman {
        null_hypothesis: PITMAN_NULL.into(),
        note: PITMAN_NOTE.into(),
        result: pitman_test(obs)?,
    };

    let (slopes, bootstrap, null_given_r, sign_convention) = if options.negate_change {
        (
            ReportSlopes {
                crude: negate_slope(crude),
                berry: negate_slope(berry),
                blomqvist: blomqvist.map(negate_slope),
            },
            ReportBootstrap {
                crude: boot_crude.negated(),
                blomqvist: boot_blomqvist.map(|b| b.negated()),
            },
            null_given_r.map(|d| NullDecision {
                null_value: -d.null_value,
                ..d
            }),
            "-d = x1 - x2",
        )
    } else {
        (
            ReportSlopes {
                crude,
                berry,
                blomqvist,
            },
            ReportBootstrap {
                crude: boot_crude,
                blomqvist: boot_blomqvist,
            },
            null_given_r,
            "d = x2 - x1",
        )
    };

    Ok(AnalyzeReport {
        config: AnalyzeConfig {
            n: obs.len(),
            seed,
            options: *options,
            error_spec,
            sign_convention: sign_convention.into(),
            source: None,
            params: None,
            population: None,
        },
        stats,
        slopes,
        bootstrap,
        repeatability_interval,
        tests: ReportTests {
            permutation,
            pitman,
            null_given_r,
        },
        warnings,
    })
}

/// Draws one sample and runs the crude-slope test of `beta = 0` on it,
/// judged at the repeatability implied by `params`.
pub fn run_bootstrap_demo(
    params: &PopulationParams,
    n: usize,
    resamples: usize,
    seed: u64,
) -> Result<(ObservedSample, AnalyzeReport)> {
    let (_, obs) = draw_seeded(params, n, SeedSpec::new(seed, DEMO_SAMPLE_STREAM))?;
    let options = AnalyzeOptions {
        resamples,
        known_repeatability: Some(params.repeatability()),
        ..AnalyzeOptions::default()
    };
    let mut report = analyze_dataset(&obs, None, &options, seed)?;
    report.config.source = Some("simulated".into());
    report.config.params = Some(*params);
    report.config.population = Some(PopulationReference::new(params)?);
    Ok((obs, report))
}
