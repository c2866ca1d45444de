use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Huber threshold `ε`.
    pub epsilon: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            gamma: 0.99,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParam(format!("huber epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParam(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Huber kernel: `δ²/2` inside `[-ε, ε]`, `ε(|δ| - ε/2)` outside.
pub fn huber(delta: f64, epsilon: f64) -> f64 {
    let a = delta.abs();
    if a <= epsilon {
        0.5 * delta * delta
    } else {
        epsilon * (a - 0.5 * epsilon)
    }
}

pub fn huber_grad(delta: f64, epsilon: f64) -> f64 {
    delta.clamp(-epsilon, epsilon)
}

/// `δ[j][i] = r + γ·next_i - cur_j`; the bootstrap term is dropped for
/// terminal transitions.
pub fn td_errors(reward: f64, next: &[f64], cur: &[f64], gamma: f64, terminal: bool) -> Vec<Vec<f64>> {
    cur.iter()
        .map(|&c| {
            next.iter()
                .map(|&n| if terminal { reward - c } else { reward + gamma * n - c })
                .collect()
        })
        .collect()
}

fn weight(tau: f64, delta: f64) -> f64 {
    (tau - if delta < 0.0 { 1.0 } else { 0.0 }).abs()
}

/// `Σ_j mean_i |τ̂_j - 1{δ_ji < 0}|·L(δ_ji)/ε`, rows `j` indexing the
/// predicted quantiles.
pub fn huber_quantile_loss(tau_hat: &[f64], deltas: &[Vec<f64>], epsilon: f64) -> f64 {
    huber_quantile_loss_grad(tau_hat, deltas, epsilon).0
}

/// The loss and its gradient with respect to each predicted quantile.
pub fn huber_quantile_loss_grad(tau_hat: &[f64], deltas: &[Vec<f64>], epsilon: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; deltas.len()];
    for ((row, &tau), g) in deltas.iter().zip(tau_hat).zip(&mut grad) {
        let n = row.len().max(1) as f64;
        for &d in row {
            let w = weight(tau, d);
            loss += w * huber(d, epsilon) / epsilon / n;
            // δ = target - current, so dδ/dcurrent = -1.
            *g -= w * huber_grad(d, epsilon) / epsilon / n;
        }
    }
    (loss, grad)
}

/// `∂W1/∂τ_i = 2F(τ_i) - F(τ̂_i) - F(τ̂_{i-1})` for the interior fractions,
/// from `F` at `τ_1..τ_{N-1}` and at the `N` midpoints.
pub fn wasserstein_grad_tau(f_interior: &[f64], f_hat: &[f64]) -> Vec<f64> {
    f_interior
        .iter()
        .enumerate()
        .map(|(k, f)| 2.0 * f - f_hat[k + 1] - f_hat[k])
        .collect()
}

/// `Σ_i ∫_{τ_i}^{τ_{i+1}} |F(θ) - F(τ̂_i)| dθ` for a non-decreasing `F`
/// with antiderivative `g`.
pub fn wasserstein_loss(tau: &[f64], f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    tau.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let fm = f(mid);
            (fm * (mid - w[0]) - (g(mid) - g(w[0]))) + ((g(w[1]) - g(mid)) - fm * (w[1] - mid))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_quantile_hand_values() {
        assert_eq!(huber_quantile_loss(&[0.5], &[vec![2.0]], 1.0), 0.75);
        assert_eq!(huber_quantile_loss(&[0.5], &[vec![-0.5]], 1.0), 0.0625);
        assert_eq!(huber_quantile_loss(&[0.3], &[vec![0.0]], 1.0), 0.0);
    }

    #[test]
    fn huber_branches_join_smoothly() {
        for eps in [0.1, 1.0, 3.0] {
            let (a, b) = (huber(eps - 1e-9, eps), huber(eps + 1e-9, eps));
            assert!((a - b).abs() < 1e-8);
            assert_eq!(huber_grad(eps, eps), eps);
            assert_eq!(huber_grad(eps * 2.0, eps), eps);
        }
    }

    #[test]
    fn td_hand_values() {
        let d = td_errors(1.0, &[2.0], &[0.5], 0.99, false);
        assert!((d[0][0] - 2.48).abs() < 1e-12);
        assert_eq!(td_errors(1.0, &[0.0; 2], &[0.0; 3], 0.99, false), vec![vec![1.0; 2]; 3]);
        let same = [0.2, 0.7];
        let d = td_errors(0.0, &same, &same, 1.0, false);
        assert_eq!((d[0][0], d[1][1]), (0.0, 0.0));
        assert_eq!(td_errors(1.0, &[5.0], &[0.5], 0.99, true), vec![vec![0.5]]);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let tau = [0.1, 0.4, 0.8];
        let cur = [0.3, -0.2, 1.7];
        let next = [0.0, 0.9, 2.5, -1.0];
        let f = |c: &[f64]| huber_quantile_loss(&tau, &td_errors(0.4, &next, c, 0.9, false), 1.0);
        let (_, g) = huber_quantile_loss_grad(&tau, &td_errors(0.4, &next, &cur, 0.9, false), 1.0);
        for j in 0..3 {
            let mut up = cur;
            up[j] += 1e-6;
            let mut dn = cur;
            dn[j] -= 1e-6;
            assert!(((f(&up) - f(&dn)) / 2e-6 - g[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn wasserstein_gradient_hand_values() {
        assert_eq!(wasserstein_grad_tau(&[3.0, 3.0], &[3.0; 3]), vec![0.0, 0.0]);
        // Linear F with uniform spacing is stationary.
        let g = wasserstein_grad_tau(&[0.25, 0.5, 0.75], &[0.125, 0.375, 0.625, 0.875]);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        // F(θ) = θ², τ = (0, 0.5, 1).
        assert_eq!(wasserstein_grad_tau(&[0.25], &[0.0625, 0.5625]), vec![-0.125]);
    }

    #[test]
    fn wasserstein_gradient_is_the_loss_derivative() {
        let f = |x: f64| x + x * x * x;
        let g = |x: f64| x * x / 2.0 + x.powi(4) / 4.0;
        let tau = [0.0, 0.2, 0.55, 0.7, 1.0];
        let hat: Vec<f64> = tau.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let interior: Vec<f64> = tau[1..4].iter().map(|&t| f(t)).collect();
        let analytic = wasserstein_grad_tau(&interior, &hat.iter().map(|&t| f(t)).collect::<Vec<_>>());
        for i in 1..4 {
            let mut up = tau;
            up[i] += 1e-6;
            let mut dn = tau;
            dn[i] -= 1e-6;
            let fd = (wasserstein_loss(&up, f, g) - wasserstein_loss(&dn, f, g)) / 2e-6;
            assert!((fd - analytic[i - 1]).abs() < 1e-8, "{fd} vs {}", analytic[i - 1]);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(LossConfig { epsilon: 0.0, gamma: 0.9 }.validate().is_err());
        assert!(LossConfig { epsilon: 1.0, gamma: 1.2 }.validate().is_err());
        LossConfig::default().validate().unwrap();
    }
}
