use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

/// Proposed quantile fractions for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionSet {
    /// `τ_0 = 0 < τ_1 < … < τ_N = 1`.
    pub tau: Vec<f64>,
    /// Midpoints `(τ_i + τ_{i+1}) / 2`.
    pub tau_hat: Vec<f64>,
    /// Softmax probabilities; `τ_i` is their prefix sum.
    pub p: Vec<f64>,
}

impl FractionSet {
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        let p: Vec<f64> = exp.iter().map(|e| e / total).collect();
        Self::from_probabilities(p)
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_logits(&vec![0.0; n])
    }

    fn from_probabilities(p: Vec<f64>) -> Self {
        let n = p.len();
        let mut tau = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        tau.push(0.0);
        for &pk in &p[..n - 1] {
            acc += pk;
            tau.push(acc);
        }
        tau.push(1.0);
        let tau_hat = tau.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
        Self { tau, tau_hat, p }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Interval widths `τ_{i+1} - τ_i`.
    pub fn widths(&self) -> Vec<f64> {
        self.tau.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn interior(&self) -> &[f64] {
        &self.tau[1..self.tau.len() - 1]
    }

    /// Shannon entropy of `p` in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .p
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParam(m));
        if self.tau.first() != Some(&0.0) || self.tau.last() != Some(&1.0) {
            return fail("fraction boundaries are not pinned to 0 and 1".into());
        }
        if let Some(w) = self.tau.windows(2).find(|w| !(w[0] < w[1])) {
            return fail(format!("fractions not strictly increasing: {} ≥ {}", w[0], w[1]));
        }
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return fail(format!("probabilities sum to {sum}"));
        }
        Ok(())
    }
}

/// `φ_i = W_f[i] · mean_t(O^s_t)`, softmax, prefix sums.
pub fn propose_fractions(state_spikes: &[Vec<f64>], w_f: &Tensor) -> Result<FractionSet> {
    let mean = time_mean(state_spikes);
    if w_f.cols() != mean.len() {
        return Err(Error::shape(
            "propose_fractions",
            &[w_f.rows(), mean.len()],
            w_f.dims(),
        ));
    }
    let logits: Vec<f64> = (0..w_f.rows()).map(|i| dot(w_f.row(i), &mean)).collect();
    Ok(FractionSet::from_logits(&logits))
}

pub(crate) fn time_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; n];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let t = rows.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= t);
    mean
}

/// Quantile values at the fraction midpoints and the derived action values.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileEstimate {
    /// `[N][actions]`.
    pub values: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

/// `Q(a) = Σ_i (τ_{i+1} - τ_i) · F⁻¹(τ̂_i, a)`.
pub fn q_values(fractions: &FractionSet, values: &[Vec<f64>]) -> Vec<f64> {
    let actions = values.first().map_or(0, Vec::len);
    let mut q = vec![0.0; actions];
    for (w, row) in fractions.widths().iter().zip(values) {
        for (qa, v) in q.iter_mut().zip(row) {
            *qa += w * v;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_uniform_fractions() {
        let f = FractionSet::from_logits(&[0.3; 4]);
        for (i, t) in f.tau.iter().enumerate() {
            assert!((t - i as f64 / 4.0).abs() < 1e-15);
        }
        f.check_invariants().unwrap();
    }

    #[test]
    fn two_fraction_hand_values() {
        let f = FractionSet::from_probabilities(vec![0.25, 0.75]);
        assert_eq!(f.tau, vec![0.0, 0.25, 1.0]);
        assert_eq!(f.tau_hat, vec![0.125, 0.625]);
    }

    #[test]
    fn q_reduction() {
        let f = FractionSet::from_probabilities(vec![0.25, 0.75]);
        let q = q_values(&f, &[vec![4.0, 1.0], vec![8.0, 1.0]]);
        assert_eq!(q, vec![0.25 * 4.0 + 0.75 * 8.0, 1.0]);

        let single = FractionSet::uniform(1);
        assert_eq!(single.tau_hat, vec![0.5]);
        assert_eq!(q_values(&single, &[vec![3.5]]), vec![3.5]);
    }

    #[test]
    fn proposal_uses_time_averaged_spikes() {
        let w_f = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let spikes = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let f = propose_fractions(&spikes, &w_f).unwrap();
        let e = 1f64.exp();
        assert!((f.p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!(propose_fractions(&spikes, &Tensor::zeros(&[2, 3])).is_err());
    }
}
