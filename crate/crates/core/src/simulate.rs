//! Seeded sampling from the change model.
//!
//! Every random quantity in the crate comes from a [`Stream`] derived from a
//! [`SeedSpec`]. The stream is ChaCha12 keyed by the master seed with the
//! replicate index selecting the ChaCha stream number, so replicate `i` can be
//! generated on any thread without touching replicates `0..i`. Normal variates
//! use `rand_distr::StandardNormal` (ziggurat).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RtmError};
use crate::model::PopulationParams;

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replicate_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        Self {
            master_seed,
            replicate_index,
        }
    }
}

/// Deterministic random stream. Single owner; not shared across threads.
#[derive(Debug, Clone)]
pub struct Stream(ChaCha12Rng);

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

impl Stream {
    /// Draws a fresh master seed for a family of child streams. Used by
    /// resampling routines that hand one child stream to each replicate.
    pub(crate) fn fork_seed(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub(crate) fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }
}

pub fn derive_stream(seed: SeedSpec) -> Stream {
    let mut rng = ChaCha12Rng::seed_from_u64(seed.master_seed);
    rng.set_stream(seed.replicate_index);
    Stream(rng)
}

fn check_columns(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(RtmError::Ingestion(format!(
            "{what}: columns differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(RtmError::SampleSize {
            got: a.len(),
            min: 2,
        });
    }
    if let Some(i) = a.iter().chain(b).position(|v| !v.is_finite()) {
        return Err(RtmError::Ingestion(format!(
            "{what}: non-finite value at position {}",
            i % a.len()
        )));
    }
    Ok(())
}

/// Measured pre/post values, stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservedSample {
    x1: Vec<f64>,
    x2: Vec<f64>,
}

impl ObservedSample {
    pub fn new(x1: Vec<f64>, x2: Vec<f64>) -> Result<Self> {
        check_columns(&x1, &x2, "observed sample")?;
        Ok(Self { x1, x2 })
    }

    pub fn x1(&self) -> &[f64] {
        &self.x1
    }

    pub fn x2(&self) -> &[f64] {
        &self.x2
    }

    pub fn len(&self) -> usize {
        self.x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_empty()
    }

    /// Measured change `x2 - x1`.
    pub fn change(&self) -> Vec<f64> {
        self.x2.iter().zip(&self.x1).map(|(b, a)| b - a).collect()
    }

    /// Subset of subjects by index, with repetition allowed.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x1: indices.iter().map(|&i| self.x1[i]).collect(),
            x2: indices.iter().map(|&i| self.x2[i]).collect(),
        }
    }
}

/// True (unobservable) pre/post values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentSample {
    #[serde(rename = "X1")]
    true_x1: Vec<f64>,
    #[serde(rename = "X2")]
    true_x2: Vec<f64>,
}

impl LatentSample {
    pub fn new(true_x1: Vec<f64>, true_x2: Vec<f64>) -> Result<Self> {
        check_columns(&true_x1, &true_x2, "latent sample")?;
        Ok(Self { true_x1, true_x2 })
    }

    pub fn true_x1(&self) -> &[f64] {
        &self.true_x1
    }

    pub fn true_x2(&self) -> &[f64] {
        &self.true_x2
    }

    pub fn len(&self) -> usize {
        self.true_x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_x1.is_empty()
    }
}

/// Draws `n` subjects. Per subject the stream is consumed in the fixed order
/// `X1`, `xi`, `eps1`, `eps2`.
pub fn draw_sample(
    params: &PopulationParams,
    n: usize,
    stream: &mut Stream,
) -> Result<(LatentSample, ObservedSample)> {
    if n < 2 {
        return Err(RtmError::SampleSize { got: n, min: 2 });
    }
    let sigma = params.sigma2().sqrt();
    let nu = params.nu2().sqrt();
    let delta = params.delta2().sqrt();
    let mut big1 = Vec::with_capacity(n);
    let mut big2 = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for _ in 0..n {
        let t1 = params.mu() + sigma * stream.standard_normal();
        let xi = nu * stream.standard_normal();
        let t2 = t1 + (params.alpha() + params.beta() * t1) + xi;
        let e1 = delta * stream.standard_normal();
        let e2 = delta * stream.standard_normal();
        big1.push(t1);
        big2.push(t2);
        x1.push(t1 + e1);
        x2.push(t2 + e2);
    }
    Ok((
        LatentSample {
            true_x1: big1,
            true_x2: big2,
        },
        ObservedSample { x1, x2 },
    ))
}

/// Convenience for `draw_sample` on a freshly derived stream.
pub fn draw_seeded(
    params: &PopulationParams,
    n: usize,
    seed: SeedSpec,
) -> Result<(LatentSample, ObservedSample)> {
    draw_sample(params, n, &mut derive_stream(seed))
}
