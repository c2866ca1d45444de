//! Comparing a trained agent against the exact oracles, and greedy
//! evaluation episodes.

use serde::Serialize;

use crate::encoding::stream_id;
use crate::error::Result;
use crate::network::FractionSet;

use super::agent::Agent;
use super::env::{EnvSpec, Environment};
use super::explore::argmax;
use super::oracle::{brute_force_return_distribution, optimal_q, policy_evaluation, wasserstein1};

const ASSESS_STREAM: u64 = 0xa55e;
const EVAL_STREAM: u64 = 0xe7a1;

/// Fractions, quantile values and action values of one state, with the
/// values averaged over `draws` population draws. Fractions do not depend
/// on the draw.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedEstimate {
    pub fractions: FractionSet,
    /// `[N][actions]`.
    pub values: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

pub fn averaged_estimate(agent: &Agent, obs: &[f64], draws: usize, stream: u64) -> Result<AveragedEstimate> {
    let draws = draws.max(1);
    let mut acc: Option<AveragedEstimate> = None;
    for d in 0..draws as u64 {
        let f = agent.forward(obs, stream_id(&[stream, d]))?;
        match acc.as_mut() {
            None => {
                acc = Some(AveragedEstimate {
                    fractions: f.fractions,
                    values: f.estimate.values,
                    q: f.estimate.q,
                })
            }
            Some(a) => {
                for (ra, rf) in a.values.iter_mut().zip(&f.estimate.values) {
                    ra.iter_mut().zip(rf).for_each(|(x, y)| *x += y);
                }
                a.q.iter_mut().zip(&f.estimate.q).for_each(|(x, y)| *x += y);
            }
        }
    }
    let mut a = acc.expect("at least one draw");
    let k = draws as f64;
    a.values.iter_mut().flatten().for_each(|v| *v /= k);
    a.q.iter_mut().for_each(|v| *v /= k);
    Ok(a)
}

/// How a trained agent compares with the dynamic-programming oracles at
/// episode start.
#[derive(Debug, Clone, Serialize)]
pub struct Assessment {
    /// Greedy action per state from draw-averaged action values.
    pub policy: Vec<usize>,
    /// Optimal action set per state.
    pub optimal_actions: Vec<Vec<usize>>,
    pub policy_optimal: bool,
    /// Learned `Q(s₀, a*)` for the greedy action at the start state.
    pub q_learned: f64,
    /// Oracle expectation of the same pair under the learned policy.
    pub q_oracle: f64,
    pub q_err: f64,
    /// 1-Wasserstein distance between the learned quantile set (weighted
    /// by fraction widths) and the oracle return distribution.
    pub w1: f64,
}

impl Assessment {
    pub fn passed(&self, q_tol: f64, w1_tol: f64) -> bool {
        self.policy_optimal && self.q_err < q_tol && self.w1 < w1_tol
    }
}

pub fn assess(agent: &Agent, spec: &EnvSpec, gamma: f64, draws: usize) -> Result<Assessment> {
    let states = spec.num_states();
    let estimates: Vec<AveragedEstimate> = (0..states)
        .map(|s| averaged_estimate(agent, &spec.observe(s), draws, stream_id(&[ASSESS_STREAM, s as u64])))
        .collect::<Result<_>>()?;
    let policy: Vec<usize> = estimates.iter().map(|e| argmax(&e.q)).collect();
    let q_star = optimal_q(spec, gamma)?;
    let optimal_actions: Vec<Vec<usize>> = q_star
        .iter()
        .map(|row| {
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (0..row.len()).filter(|&a| row[a] >= best - 1e-9).collect()
        })
        .collect();
    let policy_optimal = policy.iter().zip(&optimal_actions).all(|(a, set)| set.contains(a));

    let s0 = spec.start_state();
    let a = policy[s0];
    let est = &estimates[s0];
    let q_learned = est.q[a];
    let q_oracle = policy_evaluation(spec, &policy, gamma)?[s0][a];
    let oracle = brute_force_return_distribution(spec, &policy, s0, a, gamma)?;
    let learned: Vec<(f64, f64)> = est
        .values
        .iter()
        .zip(est.fractions.widths())
        .map(|(row, w)| (row[a], w))
        .collect();
    Ok(Assessment {
        policy,
        optimal_actions,
        policy_optimal,
        q_learned,
        q_oracle,
        q_err: (q_learned - q_oracle).abs(),
        w1: wasserstein1(&learned, &oracle.atoms),
    })
}

/// Mean and spread of greedy episode returns.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub score: f64,
    /// Population standard deviation of the returns.
    pub std: f64,
    /// `100 · std / |score|`; absent when the score is zero.
    pub std_pct: Option<f64>,
    pub returns: Vec<f64>,
}

/// Runs `episodes` greedy episodes. Environment noise and population
/// draws are keyed by `seed`, so the summary is a pure function of the
/// agent, the spec and the seed.
pub fn evaluate(agent: &Agent, spec: &EnvSpec, episodes: usize, seed: u64, draws: usize) -> Result<EvalSummary> {
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes as u64 {
        let mut env = Environment::new(spec.clone(), stream_id(&[seed, EVAL_STREAM, ep]))?;
        let mut obs = env.reset();
        let mut total = 0.0;
        for t in 0u64.. {
            let est = averaged_estimate(agent, &obs, draws, stream_id(&[seed, EVAL_STREAM, ep, t]))?;
            let r = env.step(argmax(&est.q))?;
            total += r.reward;
            if r.done() {
                break;
            }
            obs = r.obs;
        }
        returns.push(total);
    }
    let n = returns.len().max(1) as f64;
    let score = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - score).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EvalSummary {
        episodes,
        score,
        std,
        std_pct: (score != 0.0).then(|| 100.0 * std / score.abs()),
        returns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{AgentConfig, EnvKind};
    use crate::network::{EncoderSpec, FusionMode, Network, NetworkConfig};
    use crate::neuron::Dynamics;

    fn agent() -> Agent {
        let net = Network::new(
            NetworkConfig {
                encoder: EncoderSpec::Dense { input: 5, hidden: vec![8] },
                fractions: 4,
                population: 8,
                receptive_width: 0.1,
                fusion_units: 8,
                hidden: 8,
                actions: 2,
                window: 4,
                fusion: FusionMode::McnPopulation,
                population_gain: 2.5,
                init_gain: 4.0,
            },
            Dynamics::default(),
            2,
        )
        .unwrap();
        Agent::new(net, AgentConfig::default(), 2).unwrap()
    }

    #[test]
    fn deterministic_env_has_zero_spread() {
        let spec = EnvSpec {
            kind: EnvKind::Chain {
                k: 5,
                left: vec![(0.5, 1.0)],
                right: vec![(1.0, 1.0)],
            },
            horizon: 20,
        };
        let a = agent();
        let s = evaluate(&a, &spec, 10, 4, 2).unwrap();
        assert_eq!(s.std, 0.0);
        assert!(s.returns.iter().all(|&r| r == s.returns[0]));
        assert_eq!(s, evaluate(&a, &spec, 10, 4, 2).unwrap());
    }

    #[test]
    fn returns_respect_the_bound() {
        let spec = EnvSpec::default_chain();
        let s = evaluate(&agent(), &spec, 10, 1, 1).unwrap();
        assert!(s.returns.iter().all(|&r| r <= spec.max_return() + 1e-12));
        assert_eq!(s.episodes, 10);
    }

    #[test]
    fn averaging_one_draw_is_the_plain_forward() {
        let a = agent();
        let obs = EnvSpec::default_chain().observe(2);
        let e = averaged_estimate(&a, &obs, 1, 9).unwrap();
        let f = a.forward(&obs, stream_id(&[9, 0])).unwrap();
        assert_eq!(e.q, f.estimate.q);
        assert_eq!(e.fractions, f.fractions);
    }

    #[test]
    fn assessment_is_consistent() {
        let spec = EnvSpec::default_chain();
        let r = assess(&agent(), &spec, 0.99, 2).unwrap();
        assert_eq!(r.policy.len(), 5);
        assert_eq!(r.optimal_actions, vec![vec![1]; 5]);
        assert_eq!(r.policy_optimal, r.policy == vec![1; 5]);
        assert!(r.w1 >= 0.0 && r.q_err >= 0.0);
    }
}
