//! ToA / TDoA measurement simulation.
//!
//! A tag emits one frame at an unknown transmit time; every anchor timestamps
//! its arrival with independent Gaussian jitter. Differencing two anchors'
//! timestamps cancels the transmit time, which is what makes TDoA
//! synchronization-free on the tag side. Anchors are assumed perfectly
//! synchronized with each other.
//!
//! Noise is drawn with ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`) and
//! the ziggurat standard normal of `rand_distr`. Samples are bit-reproducible
//! within this implementation for a given seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TdoaError};
use crate::geometry::{distance, AnchorSet, PairIndex, Point};

/// Propagation speed of the radio signal, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Range differences `d_i - d_j` (metres), one per anchor pair in
/// [`PairIndex`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdoaVector {
    n: usize,
    values: Vec<f64>,
}

impl TdoaVector {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        let expected = crate::geometry::pair_count(n);
        if n < 2 || values.len() != expected {
            return Err(TdoaError::invalid(format!(
                "{n} anchors need {expected} pair differences, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TdoaError::invalid("non-finite range difference"));
        }
        Ok(Self { n, values })
    }

    /// Pairwise differences of per-anchor values, `v_i - v_j`.
    pub fn from_per_anchor(per_anchor: &[f64]) -> Self {
        let n = per_anchor.len();
        let values = PairIndex::new(n)
            .rows()
            .iter()
            .map(|&(i, j)| per_anchor[i] - per_anchor[j])
            .collect();
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Signed difference `d̂_ij` for any ordered pair; `d̂_ii = 0` and
    /// `d̂_ji = -d̂_ij`.
    pub fn diff(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => 0.0,
            Less => self.values[self.index(i, j)],
            Greater => -self.values[self.index(j, i)],
        }
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    pub(crate) fn check_anchors(&self, anchors: &AnchorSet) -> Result<()> {
        if self.n != anchors.len() {
            return Err(TdoaError::invalid(format!(
                "TDoA vector is for {} anchors but {} were given",
                self.n,
                anchors.len()
            )));
        }
        Ok(())
    }
}

/// One frame's arrival timestamps. Stored as a shared epoch plus per-anchor
/// offsets so that the epoch (the unknown transmit time) cancels exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToaSample {
    epoch: f64,
    offsets: Vec<f64>,
    sigma: Vec<f64>,
}

impl ToaSample {
    /// From absolute timestamps (seconds). The first timestamp becomes the
    /// epoch.
    pub fn from_timestamps(timestamps: &[f64], sigma: Vec<f64>) -> Result<Self> {
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(TdoaError::invalid("non-finite timestamp"));
        }
        if sigma.len() != timestamps.len() || sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(TdoaError::invalid("need one non-negative sigma per timestamp"));
        }
        let epoch = timestamps.first().copied().unwrap_or(0.0);
        Ok(Self {
            epoch,
            offsets: timestamps.iter().map(|t| t - epoch).collect(),
            sigma,
        })
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.offsets.iter().map(|o| self.epoch + o).collect()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Range-domain noise description. `sigma_d = c * delta` where `delta` is the
/// timestamp standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_d: f64,
    pub seed: u64,
    /// Optional per-anchor override of `sigma_d`, metres.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_anchor: Option<Vec<f64>>,
}

impl NoiseModel {
    pub fn new(sigma_d: f64, seed: u64) -> Self {
        Self {
            sigma_d,
            seed,
            per_anchor: None,
        }
    }

    pub fn noiseless() -> Self {
        Self::new(0.0, 0)
    }

    /// Range-domain sigmas for `n` anchors.
    pub fn sigmas(&self, n: usize) -> Result<Vec<f64>> {
        let sigmas = match &self.per_anchor {
            Some(s) if s.len() != n => {
                return Err(TdoaError::invalid(format!(
                    "per-anchor sigma list has {} entries for {n} anchors",
                    s.len()
                )))
            }
            Some(s) => s.clone(),
            None => vec![self.sigma_d; n],
        };
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(TdoaError::invalid("noise sigma must be finite and >= 0"));
        }
        Ok(sigmas)
    }

    pub fn sampler(&self) -> NoiseSampler {
        NoiseSampler::new(self.seed)
    }
}

/// A seeded stream of timestamp jitter.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// One standard-normal draw per anchor, scaled to seconds.
    pub fn time_jitter(&mut self, sigmas_d: &[f64]) -> Vec<f64> {
        sigmas_d
            .iter()
            .map(|s| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                z * (s / SPEED_OF_LIGHT)
            })
            .collect()
    }

    /// Simulate the next frame.
    pub fn toa(
        &mut self,
        target: Point,
        anchors: &AnchorSet,
        sigmas_d: &[f64],
        transmit_offset: f64,
    ) -> ToaSample {
        let jitter = self.time_jitter(sigmas_d);
        let offsets = anchors
            .points()
            .iter()
            .zip(&jitter)
            .map(|(&a, eta)| distance(target, a) / SPEED_OF_LIGHT + eta)
            .collect();
        ToaSample {
            epoch: transmit_offset,
            offsets,
            sigma: sigmas_d.iter().map(|s| s / SPEED_OF_LIGHT).collect(),
        }
    }

    pub fn tdoa(&mut self, target: Point, anchors: &AnchorSet, sigmas_d: &[f64]) -> TdoaVector {
        let sample = self.toa(target, anchors, sigmas_d, 0.0);
        differences(&sample)
    }
}

/// Arrival timestamps of one frame: `t_i = offset + d_i / c + eta_i`.
pub fn simulate_toa(
    target: Point,
    anchors: &AnchorSet,
    noise: &NoiseModel,
    transmit_offset: f64,
) -> Result<ToaSample> {
    if !target.is_finite() || !transmit_offset.is_finite() {
        return Err(TdoaError::invalid("target and transmit offset must be finite"));
    }
    let sigmas = noise.sigmas(anchors.len())?;
    Ok(noise.sampler().toa(target, anchors, &sigmas, transmit_offset))
}

/// `d̂_ij = c (t_i - t_j)` for every pair.
pub fn toa_to_tdoa(sample: &ToaSample) -> Result<TdoaVector> {
    if sample.len() < 2 {
        return Err(TdoaError::invalid(format!(
            "need at least 2 timestamps, got {}",
            sample.len()
        )));
    }
    Ok(differences(sample))
}

fn differences(sample: &ToaSample) -> TdoaVector {
    let n = sample.offsets.len();
    let values = PairIndex::new(n)
        .rows()
        .iter()
        .map(|&(i, j)| SPEED_OF_LIGHT * (sample.offsets[i] - sample.offsets[j]))
        .collect();
    TdoaVector { n, values }
}

pub fn simulate_tdoa(target: Point, anchors: &AnchorSet, noise: &NoiseModel) -> Result<TdoaVector> {
    toa_to_tdoa(&simulate_toa(target, anchors, noise, 0.0)?)
}
