//! Sample statistics and slope estimators for pre/post data.
//!
//! All variances and covariances use the `n - 1` denominator. Slopes are
//! denominator-free, but the repeatability-to-`delta2` conversion is not, so
//! the convention matters for Blomqvist estimates specified through `R`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result, RtmError};
use crate::model::{blomqvist_b_coefficient, blomqvist_invert};
use crate::simulate::{LatentSample, ObservedSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeMethod {
    Crude,
    Berry,
    Blomqvist,
    True,
}

impl std::fmt::Display for SlopeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SlopeMethod::Crude => "crude",
            SlopeMethod::Berry => "berry",
            SlopeMethod::Blomqvist => "blomqvist",
            SlopeMethod::True => "true",
        })
    }
}

/// How the within-subject variance is supplied to the Blomqvist correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSpec {
    /// Within-subject variance `delta2` in squared trait units.
    ErrorVariance(f64),
    /// Repeatability `R`; converted as `delta2 = (1 - R) * var(x1)`.
    Repeatability(f64),
}

impl ErrorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorSpec::ErrorVariance(d) if !(d.is_finite() && d >= 0.0) => Err(invalid(format!(
                "error variance must be finite and >= 0, got {d}"
            ))),
            ErrorSpec::Repeatability(r) if !(r > 0.0 && r <= 1.0) => Err(invalid(format!(
                "repeatability must lie in (0, 1], got {r}"
            ))),
            _ => Ok(()),
        }
    }

    /// Within-subject variance implied for a sample with baseline variance `var_x1`.
    pub fn delta2(&self, var_x1: f64) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            ErrorSpec::ErrorVariance(d) => d,
            ErrorSpec::Repeatability(r) => (1.0 - r) * var_x1,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean_x1: f64,
    pub mean_x2: f64,
    pub var_x1: f64,
    pub var_x2: f64,
    pub cov_x1x2: f64,
    /// `None` when either column has zero variance.
    pub pearson_r: Option<f64>,
}

impl SampleStats {
    pub fn correlation(&self) -> Result<f64> {
        self.pearson_r
            .ok_or_else(|| RtmError::Degenerate("zero variance, correlation undefined".into()))
    }

    fn require_x1_variance(&self) -> Result<()> {
        if self.var_x1 > 0.0 {
            Ok(())
        } else {
            Err(RtmError::Degenerate("x1 has zero variance".into()))
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-pass means, variances and covariance of a pair of equal-length columns.
fn paired_moments(a: &[f64], b: &[f64]) -> SampleStats {
    let n = a.len();
    let ma = mean(a);
    let mb = mean(b);
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    let denom = (n - 1) as f64;
    let (var_a, var_b, cov) = (saa / denom, sbb / denom, sab / denom);
    let pearson_r = if saa > 0.0 && sbb > 0.0 {
        Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
    } else {
        None
    };
    SampleStats {
        n,
        mean_x1: ma,
        mean_x2: mb,
        var_x1: var_a,
        var_x2: var_b,
        cov_x1x2: cov,
        pearson_r,
    }
}

pub fn sample_stats(obs: &ObservedSample) -> SampleStats {
    paired_moments(obs.x1(), obs.x2())
}

/// Extra information attached to a corrected slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlopeAux {
    Berry { rho: f64 },
    Blomqvist { delta2: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub method: SlopeMethod,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auxiliary: Option<SlopeAux>,
}

impl SlopeEstimate {
    fn plain(method: SlopeMethod, value: f64) -> Result<Self> {
        finite(method, value)?;
        Ok(Self {
            method,
            value,
            auxiliary: None,
        })
    }
}

fn finite(method: SlopeMethod, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(RtmError::Degenerate(format!(
            "{method} slope is not finite"
        )))
    }
}

/// OLS slope of `y` on `x`.
fn regression_slope(y: &[f64], x: &[f64]) -> Result<f64> {
    let m = paired_moments(x, y);
    m.require_x1_variance()?;
    Ok(m.cov_x1x2 / m.var_x1)
}

/// Slope of measured change `x2 - x1` on `x1`.
pub fn crude_slope(obs: &ObservedSample) -> Result<SlopeEstimate> {
    let s = sample_stats(obs);
    crude_from_stats(&s)
}

fn crude_from_stats(s: &SampleStats) -> Result<SlopeEstimate> {
    s.require_x1_variance()?;
    SlopeEstimate::plain(SlopeMethod::Crude, s.cov_x1x2 / s.var_x1 - 1.0)
}

/// Berry-adjusted change `x2 - mean(x2) - r (x1 - mean(x1))` and its slope on `x1`.
pub fn berry_slope(obs: &ObservedSample) -> Result<(Vec<f64>, SlopeEstimate)> {
    let s = sample_stats(obs);
    s.require_x1_variance()?;
    let r = s.correlation()?;
    let adjusted: Vec<f64> = obs
        .x1()
        .iter()
        .zip(obs.x2())
        .map(|(a, b)| b - s.mean_x2 - r * (a - s.mean_x1))
        .collect();
    let value = regression_slope(&adjusted, obs.x1())?;
    finite(SlopeMethod::Berry, value)?;
    Ok((
        adjusted,
        SlopeEstimate {
            method: SlopeMethod::Berry,
            value,
            auxiliary: Some(SlopeAux::Berry { rho: r }),
        },
    ))
}

/// Blomqvist-adjusted change `x2 - mean(x2) + B (x1 - mean(x1))` and its slope on `x1`.
pub fn blomqvist_slope(
    obs: &ObservedSample,
    error: ErrorSpec,
) -> Result<(Vec<f64>, SlopeEstimate)> {
    let s = sample_stats(obs);
    let crude = crude_from_stats(&s)?;
    let delta2 = error.delta2(s.var_x1)?;
    let b = blomqvist_b_coefficient(crude.value, s.var_x1, delta2)?;
    let adjusted: Vec<f64> = obs
        .x1()
        .iter()
        .zip(obs.x2())
        .map(|(a, y)| y - s.mean_x2 + b * (a - s.mean_x1))
        .collect();
    let value = regression_slope(&adjusted, obs.x1())?;
    finite(SlopeMethod::Blomqvist, value)?;
    Ok((
        adjusted,
        SlopeEstimate {
            method: SlopeMethod::Blomqvist,
            value,
            auxiliary: Some(SlopeAux::Blomqvist { delta2, b }),
        },
    ))
}

/// Plug-in form of the Blomqvist estimate, without building the adjusted change.
pub fn blomqvist_plugin(obs: &ObservedSample, error: ErrorSpec) -> Result<f64> {
    let s = sample_stats(obs);
    let crude = crude_from_stats(&s)?;
    blomqvist_invert(crude.value, s.var_x1, error.delta2(s.var_x1)?)
}

/// Slope of true change on true baseline. Only available in simulations.
pub fn true_slope(latent: &LatentSample) -> Result<SlopeEstimate> {
    let m = paired_moments(latent.true_x1(), latent.true_x2());
    m.require_x1_variance()?;
    SlopeEstimate::plain(SlopeMethod::True, m.cov_x1x2 / m.var_x1 - 1.0)
}

/// Computes one slope on an observed sample.
pub fn slope_by_method(
    obs: &ObservedSample,
    method: SlopeMethod,
    error: Option<ErrorSpec>,
) -> Result<SlopeEstimate> {
    match method {
        SlopeMethod::Crude => crude_slope(obs),
        SlopeMethod::Berry => berry_slope(obs).map(|(_, s)| s),
        SlopeMethod::Blomqvist => {
            let e = error.ok_or_else(|| {
                RtmError::Usage("blomqvist slope needs an error variance or repeatability".into())
            })?;
            blomqvist_slope(obs, e).map(|(_, s)| s)
        }
        SlopeMethod::True => Err(RtmError::Usage(
            "true slope needs latent values, not an observed sample".into(),
        )),
    }
}

/// Variance-equality test for paired data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitmanResult {
    /// Correlation between `x1 + x2` and `x1 - x2`.
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn pitman_test(obs: &ObservedSample) -> Result<PitmanResult> {
    let n = obs.len();
    if n < 3 {
        return Err(RtmError::SampleSize { got: n, min: 3 });
    }
    let s = sample_stats(obs);
    if !(s.var_x1 > 0.0 && s.var_x2 > 0.0) {
        return Err(RtmError::Degenerate(
            "Pitman test needs both variances > 0".into(),
        ));
    }
    let sums: Vec<f64> = obs.x1().iter().zip(obs.x2()).map(|(a, b)| a + b).collect();
    let diffs: Vec<f64> = obs.x1().iter().zip(obs.x2()).map(|(a, b)| a - b).collect();
    // Constant sums or differences force equal variances.
    let Some(r) = paired_moments(&sums, &diffs).pearson_r else {
        return Ok(PitmanResult {
            statistic: 0.0,
            p_value: 1.0,
            n,
        });
    };
    let df = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * df.sqrt() / (1.0 - r * r).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
    };
    Ok(PitmanResult {
        statistic: r,
        p_value,
        n,
    })
}
