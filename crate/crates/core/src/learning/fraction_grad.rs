use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::network::{time_mean, FractionSet};
use crate::tensor::Tensor;

/// How `∂τ/∂φ` is formed when training the fraction proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FractionGradMode {
    /// `Δ_{i,k} = -p_k p_i + (N - i + 1)·p_i(1 - p_i)`, `i` counted from 0.
    #[default]
    Paper,
    /// The cumulative-softmax Jacobian `Σ_{k<n} p_k(1{k=i} - p_i)`.
    SoftmaxChain,
}

impl FromStr for FractionGradMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Self::Paper),
            "softmax-chain" => Ok(Self::SoftmaxChain),
            _ => Err("expected `paper` or `softmax-chain`".into()),
        }
    }
}

impl fmt::Display for FractionGradMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::SoftmaxChain => "softmax-chain",
        })
    }
}

/// `dWL/dφ_i` from the interior-fraction gradients `wl_grads[n-1] = ∂WL/∂τ_n`.
pub fn fraction_logit_grad(mode: FractionGradMode, p: &[f64], wl_grads: &[f64]) -> Vec<f64> {
    let n = p.len();
    let delta = |i: usize, k: usize| match mode {
        FractionGradMode::Paper => -p[k] * p[i] + (n - i + 1) as f64 * p[i] * (1.0 - p[i]),
        FractionGradMode::SoftmaxChain => p[k] * (f64::from(u8::from(k == i)) - p[i]),
    };
    (0..n)
        .map(|i| {
            wl_grads
                .iter()
                .enumerate()
                .map(|(m, g)| g * (0..=m).map(|k| delta(i, k)).sum::<f64>())
                .sum()
        })
        .collect()
}

/// `dWL/dW_f = dWL/dφ ⊗ mean_t(O^s_t)`, shaped like `W_f`.
pub fn fraction_weight_grad(
    mode: FractionGradMode,
    fractions: &FractionSet,
    wl_grads: &[f64],
    state_spikes: &[Vec<f64>],
) -> Tensor {
    let d_phi = fraction_logit_grad(mode, &fractions.p, wl_grads);
    let mean = time_mean(state_spikes);
    let mut out = Tensor::zeros(&[d_phi.len(), mean.len()]);
    for (i, g) in d_phi.iter().enumerate() {
        for (o, m) in out.row_mut(i).iter_mut().zip(&mean) {
            *o = g * m;
        }
    }
    out
}
