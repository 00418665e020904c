//! Closed-form population quantities of the linear change model.
//!
//! True baseline values are `X1 ~ N(mu, sigma2)` and true follow-up values
//! are `X2 = X1 + alpha + beta * X1 + xi` with `xi ~ N(0, nu2)`. Both are
//! observed with independent within-subject noise of variance `delta2`.
//! Everything in this module is an exact algebraic function of the six
//! parameters; no simulation or quadrature is involved.
//!
//! A note on the null Berry slope: an expression that circulates in the
//! literature, `(delta2/var_x1) * (1/sqrt(1 + nu2/var_x1) - 1)`, is negative
//! for `nu2 > 0`. Evaluating `cov(d_B, x1) / var(x1)` directly at `beta = 0`
//! instead gives `(sigma2/var_x1) * (1 - 1/sqrt(1 + nu2/var_x1))`, which is
//! positive. Large simulated samples agree with the direct calculation, so
//! [`null_berry_slope`] uses it. The other form is available as
//! [`null_berry_slope_literature_form`] so reports can show both.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RtmError};

/// Generative parameters of the change model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct PopulationParams {
    mu: f64,
    sigma2: f64,
    alpha: f64,
    beta: f64,
    nu2: f64,
    delta2: f64,
}

#[derive(Deserialize)]
struct RawParams {
    mu: f64,
    sigma2: f64,
    alpha: f64,
    beta: f64,
    nu2: f64,
    delta2: f64,
}

impl TryFrom<RawParams> for PopulationParams {
    type Error = RtmError;

    fn try_from(raw: RawParams) -> Result<Self> {
        PopulationParams::new(raw.mu, raw.sigma2, raw.alpha, raw.beta, raw.nu2, raw.delta2)
    }
}

impl PopulationParams {
    /// Validates and builds a parameter set. Variances are given as variances,
    /// not standard deviations.
    pub fn new(mu: f64, sigma2: f64, alpha: f64, beta: f64, nu2: f64, delta2: f64) -> Result<Self> {
        for (name, v) in [
            ("mu", mu),
            ("sigma2", sigma2),
            ("alpha", alpha),
            ("beta", beta),
            ("nu2", nu2),
            ("delta2", delta2),
        ] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [("sigma2", sigma2), ("nu2", nu2), ("delta2", delta2)] {
            if v < 0.0 {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if sigma2 + delta2 <= 0.0 {
            return Err(invalid("sigma2 + delta2 must be positive"));
        }
        Ok(Self {
            mu,
            sigma2,
            alpha,
            beta,
            nu2,
            delta2,
        })
    }

    /// Builds a parameter set from standard deviations.
    pub fn from_std_devs(
        mu: f64,
        sigma: f64,
        alpha: f64,
        beta: f64,
        nu: f64,
        delta: f64,
    ) -> Result<Self> {
        for (name, v) in [("sigma", sigma), ("nu", nu), ("delta", delta)] {
            if v < 0.0 {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Self::new(mu, sigma * sigma, alpha, beta, nu * nu, delta * delta)
    }

    /// Systolic blood pressure values (mmHg): mu = 141, sigma = 13.6,
    /// alpha = -20, nu = 10, delta = 9.1.
    pub fn systolic(beta: f64) -> Self {
        Self::from_std_devs(141.0, 13.6, -20.0, beta, 10.0, 9.1)
            .expect("systolic parameters are valid")
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn nu2(&self) -> f64 {
        self.nu2
    }
    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(
            self.mu,
            self.sigma2,
            self.alpha,
            beta,
            self.nu2,
            self.delta2,
        )
    }

    pub fn with_delta2(&self, delta2: f64) -> Result<Self> {
        Self::new(
            self.mu,
            self.sigma2,
            self.alpha,
            self.beta,
            self.nu2,
            delta2,
        )
    }

    pub fn with_location(&self, mu: f64, alpha: f64) -> Result<Self> {
        Self::new(mu, self.sigma2, alpha, self.beta, self.nu2, self.delta2)
    }

    /// Observed baseline variance `sigma2 + delta2` (always positive).
    pub fn var_x1(&self) -> f64 {
        self.sigma2 + self.delta2
    }

    pub fn var_x2(&self) -> f64 {
        let g = 1.0 + self.beta;
        g * g * self.sigma2 + self.delta2 + self.nu2
    }

    pub fn cov_x1x2(&self) -> f64 {
        (1.0 + self.beta) * self.sigma2
    }

    /// `R = sigma2 / (sigma2 + delta2)`.
    pub fn repeatability(&self) -> f64 {
        self.sigma2 / self.var_x1()
    }
}

/// Means, variances and correlation of the observed pair `(x1, x2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationMoments {
    pub mean_x1: f64,
    pub var_x1: f64,
    pub mean_x2: f64,
    pub var_x2: f64,
    pub cov_x1x2: f64,
    pub rho: f64,
    pub repeatability: f64,
}

/// Population slopes of the crude and Berry estimators next to the true slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSlopes {
    pub crude: f64,
    pub berry: f64,
    pub true_beta: f64,
    pub crude_bias: f64,
}

fn rho(params: &PopulationParams) -> Result<f64> {
    let var_x2 = params.var_x2();
    if var_x2 <= 0.0 {
        return Err(invalid("var_x2 is zero, correlation undefined"));
    }
    let r = params.cov_x1x2() / (params.var_x1() * var_x2).sqrt();
    Ok(r.clamp(-1.0, 1.0))
}

pub fn population_moments(params: &PopulationParams) -> Result<PopulationMoments> {
    Ok(PopulationMoments {
        mean_x1: params.mu,
        var_x1: params.var_x1(),
        mean_x2: (1.0 + params.beta) * params.mu + params.alpha,
        var_x2: params.var_x2(),
        cov_x1x2: params.cov_x1x2(),
        rho: rho(params)?,
        repeatability: params.repeatability(),
    })
}

/// Slope of the regression of measured change on measured baseline:
/// `(beta*sigma2 - delta2) / (sigma2 + delta2)`.
pub fn crude_slope_population(params: &PopulationParams) -> f64 {
    (params.beta * params.sigma2 - params.delta2) / params.var_x1()
}

/// Population slope after the Berry adjustment, `-rho + (1+beta)*sigma2/var_x1`.
pub fn berry_slope_population(params: &PopulationParams) -> Result<f64> {
    Ok(-rho(params)? + params.cov_x1x2() / params.var_x1())
}

pub fn population_slopes(params: &PopulationParams) -> Result<PopulationSlopes> {
    let crude = crude_slope_population(params);
    Ok(PopulationSlopes {
        crude,
        berry: berry_slope_population(params)?,
        true_beta: params.beta,
        crude_bias: -(1.0 + params.beta) * params.delta2 / params.var_x1(),
    })
}

fn check_signal(var_x1: f64, delta2: f64) -> Result<()> {
    if !var_x1.is_finite() || !delta2.is_finite() || delta2 < 0.0 {
        return Err(invalid(format!(
            "need finite var_x1 and delta2 >= 0, got var_x1 = {var_x1}, delta2 = {delta2}"
        )));
    }
    if var_x1 <= delta2 {
        return Err(RtmError::Singular { delta2, var_x1 });
    }
    Ok(())
}

/// Recovers the true slope from a crude slope given the baseline variance and
/// the within-subject variance: `(beta_c*var_x1 + delta2) / (var_x1 - delta2)`.
pub fn blomqvist_invert(beta_c: f64, var_x1: f64, delta2: f64) -> Result<f64> {
    check_signal(var_x1, delta2)?;
    Ok((beta_c * var_x1 + delta2) / (var_x1 - delta2))
}

/// Coefficient `B` of the Blomqvist adjusted change
/// `d_e = x2 - mean(x2) + B (x1 - mean(x1))`.
pub fn blomqvist_b_coefficient(beta_c: f64, var_x1: f64, delta2: f64) -> Result<f64> {
    check_signal(var_x1, delta2)?;
    Ok((1.0 + beta_c) * delta2 / (var_x1 - delta2) - 1.0)
}

fn check_repeatability(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(invalid(format!(
            "repeatability must lie in (0, 1], got {r}"
        )));
    }
    Ok(())
}

/// Expected crude slope when `beta = 0`: `R - 1`.
pub fn null_crude_slope(repeatability: f64) -> Result<f64> {
    check_repeatability(repeatability)?;
    Ok(repeatability - 1.0)
}

/// Population Berry slope with `beta` forced to zero.
pub fn null_berry_slope(params: &PopulationParams) -> Result<f64> {
    berry_slope_population(&params.with_beta(0.0)?)
}

/// `(delta2/var_x1) * (1/sqrt(1 + nu2/var_x1) - 1)`.
///
/// Does not match [`null_berry_slope`]; kept only for side-by-side reporting.
pub fn null_berry_slope_literature_form(params: &PopulationParams) -> f64 {
    let v1 = params.var_x1();
    params.delta2 / v1 * (1.0 / (1.0 + params.nu2 / v1).sqrt() - 1.0)
}

/// Correlation of `x1` and `x2` when there is no differential effect.
pub fn rho_star(params: &PopulationParams) -> Result<f64> {
    let v1 = params.var_x1();
    let denom = (v1 * (v1 + params.nu2)).sqrt();
    if denom <= 0.0 {
        return Err(invalid("zero variance in rho_star denominator"));
    }
    Ok((params.sigma2 / denom).clamp(-1.0, 1.0))
}

/// `var_x2 / var_x1` under `beta = 0`, i.e. `1 + nu2/var_x1`.
pub fn null_variance_ratio(params: &PopulationParams) -> f64 {
    1.0 + params.nu2 / params.var_x1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub noise_ratio: f64,
    pub crude_slope: f64,
    pub berry_slope: f64,
    pub rho: f64,
}

/// Population slopes over a `(beta, delta2/sigma2)` grid. Rows come out with
/// beta as the outer loop. `mu`, `alpha` and `delta2` of `params` are ignored.
pub fn population_sweep(
    params: &PopulationParams,
    beta_values: &[f64],
    noise_ratio_values: &[f64],
) -> Result<Vec<SweepRow>> {
    if params.sigma2 <= 0.0 {
        return Err(invalid("population sweep needs sigma2 > 0"));
    }
    if let Some(bad) = noise_ratio_values
        .iter()
        .find(|r| !(**r >= 0.0) || !r.is_finite())
    {
        return Err(invalid(format!(
            "noise ratios must be finite and >= 0, got {bad}"
        )));
    }
    let mut rows = Vec::with_capacity(beta_values.len() * noise_ratio_values.len());
    for &beta in beta_values {
        for &ratio in noise_ratio_values {
            let p = PopulationParams::new(
                params.mu,
                params.sigma2,
                params.alpha,
                beta,
                params.nu2,
                ratio * params.sigma2,
            )?;
            let crude = crude_slope_population(&p);
            let rho = rho(&p)?;
            rows.push(SweepRow {
                beta,
                noise_ratio: ratio,
                crude_slope: crude,
                berry_slope: -rho + p.cov_x1x2() / p.var_x1(),
                rho,
            });
        }
    }
    Ok(rows)
}

/// Inclusive arithmetic grid `start, start+step, ..., stop`.
pub fn inclusive_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(invalid(format!("bad grid {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}
