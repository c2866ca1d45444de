//! The quantile agent, its update rule, and the online training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoding::stream_id;
use crate::error::{Error, Result};
use crate::learning::{
    fraction_weight_grad, huber_quantile_loss_grad, td_errors, wasserstein_grad_tau, AdamConfig,
    FractionGradMode, LossConfig, OptimizerState, RmsPropConfig,
};
use crate::network::{q_values, FractionSet, Forward, Network, NetworkParams};
use crate::tensor::Tensor;

use super::env::{EnvSpec, Environment};
use super::explore::{argmax, epsilon_greedy, LinearSchedule};
use super::replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub loss: LossConfig,
    pub fraction_grad: FractionGradMode,
    pub adam: AdamConfig,
    pub rmsprop: RmsPropConfig,
    pub batch: usize,
    pub buffer: usize,
    pub warmup: usize,
    /// Environment steps per gradient update.
    pub train_every: u64,
    /// Gradient updates between target-network syncs.
    pub target_sync: u64,
    pub exploration: LinearSchedule,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            fraction_grad: FractionGradMode::default(),
            adam: AdamConfig::default(),
            rmsprop: RmsPropConfig::default(),
            batch: 32,
            buffer: 100_000,
            warmup: 1000,
            train_every: 1,
            target_sync: 1000,
            exploration: LinearSchedule {
                start: 1.0,
                end: 0.05,
                fraction: 0.1,
                total: 0,
            },
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        for (name, v) in [
            ("batch", self.batch as u64),
            ("buffer", self.buffer as u64),
            ("train_every", self.train_every),
            ("target_sync", self.target_sync),
        ] {
            if v == 0 {
                return Err(Error::InvalidParam(format!("{name} must be ≥ 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateStats {
    pub loss_huber: f64,
    pub loss_wasserstein: f64,
}

/// Online network, target network and optimiser state.
#[derive(Debug, Clone)]
pub struct Agent {
    pub network: Network,
    pub params: NetworkParams,
    pub target: NetworkParams,
    pub optimizer: OptimizerState,
    pub config: AgentConfig,
    pub seed: u64,
    pub updates: u64,
}

/// `∫|F(θ) - F(τ̂_i)|` over each interval with `F` linear between the
/// evaluated points.
fn approx_wasserstein(f: &FractionSet, at_tau: &[f64], at_hat: &[f64]) -> f64 {
    (0..f.len())
        .map(|i| {
            let m = at_hat[i];
            0.5 * (f.tau_hat[i] - f.tau[i]) * (at_tau[i] - m).abs()
                + 0.5 * (f.tau[i + 1] - f.tau_hat[i]) * (at_tau[i + 1] - m).abs()
        })
        .sum()
}

fn column(values: &[Vec<f64>], a: usize) -> Vec<f64> {
    values.iter().map(|r| r[a]).collect()
}

impl Agent {
    pub fn new(network: Network, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = network.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
        let optimizer = OptimizerState::new(&params, config.adam, config.rmsprop);
        Ok(Self {
            network,
            target: params.clone(),
            params,
            optimizer,
            config,
            seed,
            updates: 0,
        })
    }

    pub fn forward(&self, obs: &[f64], stream: u64) -> Result<Forward> {
        self.network.full_forward(&self.params, obs, stream)
    }

    /// Greedy action with the population draws keyed by `stream`.
    pub fn greedy_action(&self, obs: &[f64], stream: u64) -> Result<usize> {
        Ok(argmax(&self.forward(obs, stream)?.estimate.q))
    }

    /// One gradient step on a minibatch.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        let net = &self.network;
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut grads = self.params.zeros_like();
        let mut w_f_grad = Tensor::zeros(self.params.w_f.dims());
        let mut stats = UpdateStats {
            loss_huber: 0.0,
            loss_wasserstein: 0.0,
        };
        let gamma = self.config.loss.gamma;
        for (b, t) in batch.iter().enumerate() {
            let key = |k: u64| stream_id(&[self.seed, self.updates, b as u64, k]);
            let on = net.full_forward(&self.params, &t.obs, key(0))?;
            let f = &on.fractions;
            let cur = column(&on.estimate.values, t.action);

            let next = if t.terminal {
                vec![0.0; f.len()]
            } else {
                let enc = net.encode_state(&self.target, &t.next_obs)?;
                let tape = net.forward_queries(&self.target, enc, &f.tau_hat, key(1))?;
                let values = tape.values();
                column(&values, argmax(&q_values(f, &values)))
            };
            let deltas = td_errors(t.reward, &next, &cur, gamma, t.terminal);
            let (loss, g) = huber_quantile_loss_grad(&f.tau_hat, &deltas, self.config.loss.epsilon);
            stats.loss_huber += loss * scale;
            let actions = self.params.w_l.cols();
            let value_grads: Vec<Vec<f64>> = g
                .iter()
                .map(|&gj| {
                    let mut row = vec![0.0; actions];
                    row[t.action] = gj * scale;
                    row
                })
                .collect();
            grads.add_assign(&net.stbp_backward(&self.params, &on.tape, &value_grads)?);

            let at_tau = net.forward_queries(&self.params, on.tape.encoder.clone(), &f.tau, key(2))?;
            let at_tau = column(&at_tau.values(), t.action);
            stats.loss_wasserstein += approx_wasserstein(f, &at_tau, &cur) * scale;
            let wl = wasserstein_grad_tau(&at_tau[1..f.len()], &cur);
            let mut g_f = fraction_weight_grad(self.config.fraction_grad, f, &wl, on.tape.encoder.output());
            g_f.scale(scale);
            w_f_grad.add_assign(&g_f);
        }
        if !stats.loss_huber.is_finite() || !stats.loss_wasserstein.is_finite() {
            return Err(Error::Divergence {
                step: self.updates,
                reason: format!("non-finite loss (huber {}, wasserstein {})", stats.loss_huber, stats.loss_wasserstein),
            });
        }
        self.optimizer.step_adam(&mut self.params, &grads)?;
        self.optimizer.step_rmsprop(&mut self.params.w_f, &w_f_grad)?;
        if !self.params.all_finite() {
            return Err(Error::Divergence {
                step: self.updates,
                reason: "non-finite parameters after the optimiser step".into(),
            });
        }
        self.updates += 1;
        if self.updates % self.config.target_sync == 0 {
            self.target = self.params.clone();
        }
        Ok(stats)
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub episode: u64,
    /// Episode return, on the step that ends an episode.
    #[serde(rename = "return")]
    pub episode_return: Option<f64>,
    pub done: bool,
    pub loss_huber: Option<f64>,
    pub loss_wasserstein: Option<f64>,
    pub epsilon: f64,
    pub fraction_entropy: f64,
}

/// Environment, replay buffer and agent stepping together.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub agent: Agent,
    pub env: Environment,
    pub buffer: ReplayBuffer,
    pub rng: ChaCha8Rng,
    pub step: u64,
    pub episode: u64,
    episode_return: f64,
    obs: Vec<f64>,
}

impl Trainer {
    /// The exploration schedule spans `total_steps`.
    pub fn new(mut agent: Agent, env: EnvSpec, total_steps: u64) -> Result<Self> {
        agent.config.exploration.total = total_steps;
        let seed = agent.seed;
        let mut env = Environment::new(env, stream_id(&[seed, 0xe5]))?;
        let obs = env.reset();
        let buffer = ReplayBuffer::new(agent.config.buffer)?;
        Ok(Self {
            agent,
            env,
            buffer,
            rng: ChaCha8Rng::seed_from_u64(stream_id(&[seed, 0xa7])),
            step: 0,
            episode: 0,
            episode_return: 0.0,
            obs,
        })
    }

    /// One environment step and, when due, one gradient update.
    pub fn train_iteration(&mut self) -> Result<StepRecord> {
        let agent = &self.agent;
        let epsilon = agent.config.exploration.value(self.step);
        let fwd = agent.forward(&self.obs, stream_id(&[agent.seed, self.step, 0xac]))?;
        let action = epsilon_greedy(&fwd.estimate.q, epsilon, &mut self.rng);
        let result = self.env.step(action)?;
        self.episode_return += result.reward;
        self.buffer.push(Transition {
            obs: std::mem::take(&mut self.obs),
            action,
            reward: result.reward,
            next_obs: result.obs.clone(),
            terminal: result.terminal,
        });
        self.step += 1;

        let mut record = StepRecord {
            step: self.step,
            episode: self.episode,
            episode_return: None,
            done: result.done(),
            loss_huber: None,
            loss_wasserstein: None,
            epsilon,
            fraction_entropy: fwd.fractions.entropy(),
        };
        if self.buffer.len() >= self.agent.config.warmup.max(1)
            && self.step % self.agent.config.train_every == 0
        {
            let idx = self.buffer.sample_indices(self.agent.config.batch, &mut self.rng)?;
            let batch: Vec<&Transition> = idx.iter().filter_map(|&i| self.buffer.get(i)).collect();
            let stats = self.agent.update(&batch)?;
            record.loss_huber = Some(stats.loss_huber);
            record.loss_wasserstein = Some(stats.loss_wasserstein);
        }
        if result.done() {
            record.episode_return = Some(self.episode_return);
            self.episode += 1;
            self.episode_return = 0.0;
            self.obs = self.env.reset();
        } else {
            self.obs = result.obs;
        }
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{EncoderSpec, FusionMode, NetworkConfig};
    use crate::neuron::Dynamics;

    fn agent(fusion: FusionMode, config: AgentConfig) -> Agent {
        let net = Network::new(
            NetworkConfig {
                encoder: EncoderSpec::Dense { input: 5, hidden: vec![8, 8] },
                fractions: 4,
                population: 8,
                receptive_width: 0.1,
                fusion_units: 8,
                hidden: 8,
                actions: 2,
                window: 4,
                fusion,
                population_gain: 2.5,
                init_gain: 2.0,
            },
            Dynamics::default(),
            1,
        )
        .unwrap();
        Agent::new(net, config, 11).unwrap()
    }

    fn small_config() -> AgentConfig {
        AgentConfig {
            batch: 4,
            warmup: 8,
            target_sync: 5,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn zero_learning_rates_freeze_parameters() {
        let mut cfg = small_config();
        cfg.adam.lr = 0.0;
        cfg.rmsprop.lr = 0.0;
        let a = agent(FusionMode::McnPopulation, cfg);
        let before = a.params.clone();
        let mut t = Trainer::new(a, EnvSpec::default_chain(), 40).unwrap();
        let mut updates = 0;
        for _ in 0..40 {
            updates += usize::from(t.train_iteration().unwrap().loss_huber.is_some());
        }
        assert!(updates > 20);
        assert_eq!(t.agent.params, before);
    }

    #[test]
    fn records_carry_the_schema_fields() {
        let mut t = Trainer::new(agent(FusionMode::LiCosine, small_config()), EnvSpec::default_chain(), 30).unwrap();
        let mut finished = 0;
        for _ in 0..30 {
            let r = t.train_iteration().unwrap();
            assert!(r.fraction_entropy > 0.0 && r.epsilon <= 1.0);
            if let Some(ret) = r.episode_return {
                assert!(r.done && ret <= 2.0);
                finished += 1;
            }
        }
        assert!(finished > 0);
        let line = serde_json::to_string(&t.train_iteration().unwrap()).unwrap();
        for key in ["step", "episode", "return", "done", "loss_huber", "loss_wasserstein", "epsilon", "fraction_entropy"] {
            assert!(line.contains(&format!("\"{key}\"")), "{line}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut t = Trainer::new(agent(FusionMode::LiPopulation, small_config()), EnvSpec::default_chain(), 30).unwrap();
            let recs: Vec<_> = (0..30).map(|_| t.train_iteration().unwrap()).collect();
            (recs, t.agent.params)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn target_syncs_on_schedule() {
        let mut t = Trainer::new(agent(FusionMode::McnPopulation, small_config()), EnvSpec::default_chain(), 40).unwrap();
        while t.agent.updates < 5 {
            t.train_iteration().unwrap();
        }
        assert_eq!(t.agent.target, t.agent.params);
        while t.agent.updates < 6 {
            t.train_iteration().unwrap();
        }
        assert_ne!(t.agent.target, t.agent.params);
    }
}
