//! Quantile-fraction encoders: a Gaussian receptive-field population that
//! emits stochastic spikes, and the cosine embedding used by the ablation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::neuron::SpikeTrain;

/// A population of `m` neurons with Gaussian tuning curves tiling `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationCodec {
    mu: Vec<f64>,
    sigma: f64,
    phi: Vec<f64>,
    seed: u64,
}

/// Identifies one stochastic draw of a population spike train. Two draws
/// with the same key and fraction are bit-identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DrawKey {
    pub stream: u64,
    pub tau_index: u64,
}

impl PopulationCodec {
    /// Preferred stimuli `μ_j = j/(m-1)`, shared width `sigma`, unit peak rate.
    pub fn new(m: usize, sigma: f64, seed: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParam(format!("population size must be ≥ 2, got {m}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParam(format!("receptive width must be > 0, got {sigma}")));
        }
        let mu = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        Ok(Self {
            mu,
            sigma,
            phi: vec![1.0; m],
            seed,
        })
    }

    pub fn size(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `r_j = φ_j · exp(-(τ - μ_j)² / 2σ²)`.
    pub fn gaussian_rate(&self, tau: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::FractionOutOfRange(tau));
        }
        let two_var = 2.0 * self.sigma * self.sigma;
        Ok(self
            .mu
            .iter()
            .zip(&self.phi)
            .map(|(mu, phi)| phi * (-(tau - mu).powi(2) / two_var).exp())
            .collect())
    }

    /// Per-step probability of at least one Poisson event, `1 - e^{-r}`.
    pub fn spike_probabilities(&self, tau: f64) -> Result<Vec<f64>> {
        Ok(self
            .gaussian_rate(tau)?
            .into_iter()
            .map(|r| -(-r).exp_m1())
            .collect())
    }

    /// Spike train for `tau` over `steps` steps using the default draw key.
    pub fn encode_population_spikes(&self, tau: f64, steps: usize) -> Result<SpikeTrain> {
        self.encode(tau, DrawKey::default(), steps)
    }

    pub fn encode(&self, tau: f64, key: DrawKey, steps: usize) -> Result<SpikeTrain> {
        let probs = self.spike_probabilities(tau)?;
        let mut train = SpikeTrain::zeros(steps, probs.len());
        for t in 0..steps {
            for (j, &p) in probs.iter().enumerate() {
                if p > 0.0 && self.uniform(key, t as u64, j as u64) < p {
                    train.set(t, j, true);
                }
            }
        }
        Ok(train)
    }

    /// Counter-based uniform in `[0, 1)` keyed by
    /// (seed, stream, fraction index, step, neuron).
    fn uniform(&self, key: DrawKey, step: u64, neuron: u64) -> f64 {
        let mut h = mix(self.seed ^ 0x5851_f42d_4c95_7f2d);
        for word in [key.stream, key.tau_index, step, neuron] {
            h = mix(h ^ word);
        }
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// SplitMix64 finaliser.
fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes several words into one 64-bit stream identifier.
pub fn stream_id(words: &[u64]) -> u64 {
    words.iter().fold(0x243f_6a88_85a3_08d3, |h, &w| mix(h ^ w))
}

/// `cos(i·π·τ)` for `i = 0..m`.
pub fn cosine_embedding(tau: f64, m: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::FractionOutOfRange(tau));
    }
    Ok((0..m).map(|i| (i as f64 * PI * tau).cos()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codec() -> PopulationCodec {
        PopulationCodec::new(64, 0.05, 11).unwrap()
    }

    #[test]
    fn rate_peaks_at_preferred_stimulus() {
        let c = codec();
        let r = c.gaussian_rate(c.mu()[20]).unwrap();
        assert_eq!(r[20], 1.0);
        let r = c.gaussian_rate(c.mu()[20] + 0.05).unwrap();
        assert!((r[20] - (-0.5f64).exp()).abs() < 1e-12);
        assert!((r[20] - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn rejects_fractions_outside_unit_interval() {
        let c = codec();
        assert!(matches!(c.gaussian_rate(1.2), Err(Error::FractionOutOfRange(_))));
        assert!(c.gaussian_rate(-0.01).is_err());
        assert!(cosine_embedding(1.5, 4).is_err());
    }

    #[test]
    fn preferred_stimuli_tile_the_unit_interval() {
        let c = codec();
        assert_eq!(c.mu()[0], 0.0);
        assert_eq!(c.mu()[63], 1.0);
        assert!(c.mu().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_rate_never_spikes() {
        // 40σ away: the rate underflows to zero.
        let c = PopulationCodec::new(2, 0.01, 3).unwrap();
        let train = c.encode(0.0, DrawKey::default(), 500).unwrap();
        assert_eq!(c.gaussian_rate(0.0).unwrap()[1], 0.0);
        assert_eq!(train.neuron_count(1), 0);
    }

    #[test]
    fn same_key_same_spikes() {
        let a = codec();
        let b = codec();
        let key = DrawKey { stream: 7, tau_index: 3 };
        assert_eq!(a.encode(0.3, key, 8).unwrap(), b.encode(0.3, key, 8).unwrap());
        let other = DrawKey { stream: 8, tau_index: 3 };
        assert_ne!(a.encode(0.3, key, 64).unwrap(), a.encode(0.3, other, 64).unwrap());
    }

    #[test]
    fn active_band_follows_the_fraction() {
        let c = codec();
        let mut counts = vec![0usize; 64];
        for s in 0..200 {
            let key = DrawKey { stream: s, tau_index: 0 };
            let train = c.encode(0.5, key, 8).unwrap();
            for (j, n) in counts.iter_mut().enumerate() {
                *n += train.neuron_count(j);
            }
        }
        let total: usize = counts.iter().sum();
        let centre: f64 = counts.iter().enumerate().map(|(j, &n)| j as f64 * n as f64).sum::<f64>()
            / total as f64;
        assert!((centre - 31.5).abs() < 1.0, "centre of mass {centre}");
    }

    #[test]
    fn cosine_values() {
        let e = cosine_embedding(0.37, 5).unwrap();
        assert_eq!(e[0], 1.0);
        assert!((cosine_embedding(1.0, 2).unwrap()[1] + 1.0).abs() < 1e-15);
        assert!((cosine_embedding(0.5, 3).unwrap()[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rates_shift_with_the_population() {
        // Shifting τ by one preferred-stimulus spacing relabels the rates.
        let c = codec();
        let d = 1.0 / 63.0;
        let a = c.gaussian_rate(0.4).unwrap();
        let b = c.gaussian_rate(0.4 + d).unwrap();
        for j in 10..50 {
            assert!((a[j] - b[j + 1]).abs() < 1e-12);
        }
    }
}
