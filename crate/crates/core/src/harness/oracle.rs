//! Exact return distributions and values for an [`EnvSpec`] under a fixed
//! policy, by recursion over (state, steps remaining) with merged atoms.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::env::EnvSpec;

/// Default bound on `states × horizon` for exhaustive enumeration.
pub const STATE_SPACE_LIMIT: usize = 1_000_000;

/// Discrete distribution of the discounted return.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnDistribution {
    /// `(value, probability)`, sorted by value, distinct values.
    pub atoms: Vec<(f64, f64)>,
}

impl ReturnDistribution {
    pub fn point(v: f64) -> Self {
        Self { atoms: vec![(v, 1.0)] }
    }

    /// Sorts and merges values closer than `1e-12`.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if (v - last.0).abs() < 1e-12 => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        Self { atoms: merged }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Smallest atom whose cumulative probability reaches `tau`.
    pub fn quantile(&self, tau: f64) -> f64 {
        let mut acc = 0.0;
        for &(v, p) in &self.atoms {
            acc += p;
            if acc >= tau - 1e-12 {
                return v;
            }
        }
        self.atoms.last().map_or(0.0, |a| a.0)
    }
}

/// 1-Wasserstein distance `∫|F_a(x) - F_b(x)| dx` between two weighted atom
/// sets (weights need not be sorted by value).
pub fn wasserstein1(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut points: Vec<(f64, f64)> = a.iter().copied().chain(b.iter().map(|&(v, p)| (v, -p))).collect();
    points.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for w in points.windows(2) {
        diff += w[0].1;
        total += diff.abs() * (w[1].0 - w[0].0);
    }
    total
}

fn check_size(spec: &EnvSpec, limit: usize) -> Result<()> {
    let size = spec.num_states().saturating_mul(spec.horizon);
    if size > limit {
        return Err(Error::StateSpaceTooLarge { size, limit });
    }
    Ok(())
}

fn check_policy(spec: &EnvSpec, policy: &[usize]) -> Result<()> {
    if policy.len() != spec.num_states() {
        return Err(Error::shape("policy", &[spec.num_states()], &[policy.len()]));
    }
    if let Some(&a) = policy.iter().find(|&&a| a >= spec.num_actions()) {
        return Err(Error::InvalidAction {
            action: a,
            count: spec.num_actions(),
        });
    }
    Ok(())
}

struct Enumerator<'a> {
    spec: &'a EnvSpec,
    policy: &'a [usize],
    gamma: f64,
    memo: HashMap<(usize, usize), ReturnDistribution>,
}

impl Enumerator<'_> {
    /// Return of taking `action` in `state` with `left` steps remaining,
    /// then following the policy.
    fn action(&mut self, state: usize, action: usize, left: usize) -> Result<ReturnDistribution> {
        let mut atoms = Vec::new();
        for o in self.spec.outcomes(state, action)? {
            match o.next {
                Some(next) if left > 1 => {
                    let cont = self.policy_from(next, left - 1)?;
                    atoms.extend(cont.atoms.iter().map(|&(v, p)| (o.reward + self.gamma * v, o.prob * p)));
                }
                _ => atoms.push((o.reward, o.prob)),
            }
        }
        Ok(ReturnDistribution::from_atoms(atoms))
    }

    fn policy_from(&mut self, state: usize, left: usize) -> Result<ReturnDistribution> {
        if let Some(d) = self.memo.get(&(state, left)) {
            return Ok(d.clone());
        }
        let d = self.action(state, self.policy[state], left)?;
        self.memo.insert((state, left), d.clone());
        Ok(d)
    }
}

/// Distribution of the discounted return of taking `action` in `state` at
/// the start of an episode and following `policy` afterwards.
pub fn brute_force_return_distribution(
    spec: &EnvSpec,
    policy: &[usize],
    state: usize,
    action: usize,
    gamma: f64,
) -> Result<ReturnDistribution> {
    brute_force_with_limit(spec, policy, state, action, gamma, STATE_SPACE_LIMIT)
}

pub fn brute_force_with_limit(
    spec: &EnvSpec,
    policy: &[usize],
    state: usize,
    action: usize,
    gamma: f64,
    limit: usize,
) -> Result<ReturnDistribution> {
    spec.validate()?;
    check_size(spec, limit)?;
    check_policy(spec, policy)?;
    let mut e = Enumerator {
        spec,
        policy,
        gamma,
        memo: HashMap::new(),
    };
    e.action(state, action, spec.horizon)
}

/// `Q[left][s][a]` for `left = 0..=horizon` steps remaining; `None` policy
/// gives the optimal values.
fn finite_horizon_q(spec: &EnvSpec, policy: Option<&[usize]>, gamma: f64) -> Result<Vec<Vec<Vec<f64>>>> {
    spec.validate()?;
    check_size(spec, STATE_SPACE_LIMIT)?;
    if let Some(p) = policy {
        check_policy(spec, p)?;
    }
    let (ns, na) = (spec.num_states(), spec.num_actions());
    let mut table = vec![vec![vec![0.0; na]; ns]];
    for left in 1..=spec.horizon {
        let prev = &table[left - 1];
        let value = |s: usize| match policy {
            Some(p) => prev[s][p[s]],
            None => prev[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        let mut q = vec![vec![0.0; na]; ns];
        for (s, row) in q.iter_mut().enumerate() {
            for (a, qa) in row.iter_mut().enumerate() {
                *qa = spec
                    .outcomes(s, a)?
                    .iter()
                    .map(|o| o.prob * (o.reward + o.next.map_or(0.0, |n| gamma * value(n))))
                    .sum();
            }
        }
        table.push(q);
    }
    Ok(table)
}

/// Expected return of each (state, action) at episode start under `policy`.
pub fn policy_evaluation(spec: &EnvSpec, policy: &[usize], gamma: f64) -> Result<Vec<Vec<f64>>> {
    Ok(finite_horizon_q(spec, Some(policy), gamma)?.pop().expect("horizon ≥ 1"))
}

/// Optimal action values at episode start.
pub fn optimal_q(spec: &EnvSpec, gamma: f64) -> Result<Vec<Vec<f64>>> {
    Ok(finite_horizon_q(spec, None, gamma)?.pop().expect("horizon ≥ 1"))
}

/// Greedy policy of `q`, lowest index on ties.
pub fn greedy_policy(q: &[Vec<f64>]) -> Vec<usize> {
    q.iter().map(|row| super::explore::argmax(row)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::env::EnvKind;

    #[test]
    fn two_state_chain_exit_distribution() {
        let spec = EnvSpec {
            kind: EnvKind::Chain {
                k: 2,
                left: vec![(0.5, 1.0)],
                right: vec![(0.0, 0.5), (2.0, 0.5)],
            },
            horizon: 10,
        };
        let d = brute_force_return_distribution(&spec, &[1, 1], 1, 1, 0.99).unwrap();
        assert_eq!(d.atoms, vec![(0.0, 0.5), (2.0, 0.5)]);
        assert_eq!((d.quantile(0.25), d.quantile(0.75)), (0.0, 2.0));
    }

    #[test]
    fn deterministic_policy_on_grid_is_a_point_mass() {
        let spec = EnvSpec { kind: EnvKind::Grid { size: 3 }, horizon: 20 };
        // Right along the top row, then down the last column.
        let policy = vec![3, 3, 1, 3, 3, 1, 3, 3, 1];
        let d = brute_force_return_distribution(&spec, &policy, 0, 3, 0.9).unwrap();
        assert_eq!(d.atoms.len(), 1);
        assert!((d.atoms[0].0 - 0.9f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn distribution_mean_matches_dp() {
        let chain = EnvSpec::default_chain();
        let grid = EnvSpec { kind: EnvKind::Grid { size: 3 }, horizon: 12 };
        for spec in [chain, grid] {
            let q = optimal_q(&spec, 0.95).unwrap();
            let policy = greedy_policy(&q);
            let eval = policy_evaluation(&spec, &policy, 0.95).unwrap();
            for s in 0..spec.num_states() {
                for a in 0..spec.num_actions() {
                    let d = brute_force_return_distribution(&spec, &policy, s, a, 0.95).unwrap();
                    assert!((d.total_probability() - 1.0).abs() < 1e-12);
                    assert!((d.mean() - eval[s][a]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn chain_optimum_goes_right() {
        let spec = EnvSpec::default_chain();
        let q = optimal_q(&spec, 0.99).unwrap();
        assert_eq!(greedy_policy(&q), vec![1; 5]);
        // Three moves from the start: γ² · E[right exit].
        assert!((q[2][1] - 0.99f64.powi(2)).abs() < 1e-12);
        let d = brute_force_return_distribution(&spec, &[1; 5], 2, 1, 0.99).unwrap();
        assert_eq!(d.atoms, vec![(0.0, 0.5), (2.0 * 0.99 * 0.99, 0.5)]);
    }

    #[test]
    fn looping_policy_truncates_at_horizon() {
        let spec = EnvSpec { horizon: 6, ..EnvSpec::default_chain() };
        let d = brute_force_return_distribution(&spec, &[0, 0, 1, 0, 1], 2, 1, 0.9).unwrap();
        assert_eq!(d.atoms, vec![(0.0, 1.0)]);
    }

    #[test]
    fn oversized_problem_rejected() {
        let spec = EnvSpec { kind: EnvKind::Grid { size: 10 }, horizon: 50 };
        let err = brute_force_with_limit(&spec, &[0; 100], 0, 0, 0.9, 1000).unwrap_err();
        assert!(matches!(err, Error::StateSpaceTooLarge { size: 5000, limit: 1000 }));
    }

    #[test]
    fn wasserstein_hand_values() {
        assert_eq!(wasserstein1(&[(0.0, 1.0)], &[(2.0, 1.0)]), 2.0);
        assert_eq!(wasserstein1(&[(0.0, 0.5), (2.0, 0.5)], &[(0.0, 0.5), (2.0, 0.5)]), 0.0);
        assert_eq!(wasserstein1(&[(1.0, 1.0)], &[(0.0, 0.5), (2.0, 0.5)]), 1.0);
    }
}
