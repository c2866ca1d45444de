//! Flat `key = value` run configuration. Lines starting with `#` are
//! comments; unknown keys are rejected. Neuron and learning-rate keys use
//! the names of the published parameter table verbatim.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{ConfigError, Error, Result};
use crate::harness::{Agent, AgentConfig, EnvKind, EnvSpec, LinearSchedule};
use crate::learning::{AdamConfig, FractionGradMode, LossConfig, RmsPropConfig};
use crate::network::{ConvLayer, EncoderSpec, FusionMode, Network, NetworkConfig};
use crate::neuron::{Dynamics, NeuronParams, SpikeFn, SurrogateCenter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvName {
    Chain,
    Grid,
    Image,
}

impl FromStr for EnvName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "chain" | "chain-mdp" => Ok(Self::Chain),
            "grid" | "gridworld" => Ok(Self::Grid),
            "image" | "synthetic-image" => Ok(Self::Image),
            _ => Err("expected `chain-mdp`, `gridworld` or `synthetic-image`".into()),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Chain => "chain-mdp",
            Self::Grid => "gridworld",
            Self::Image => "synthetic-image",
        })
    }
}

/// `auto` picks the convolutional stack for image observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Auto,
    Dense,
    Conv,
}

impl FromStr for EncoderKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "dense" => Ok(Self::Dense),
            "conv" => Ok(Self::Conv),
            _ => Err("expected `auto`, `dense` or `conv`".into()),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Dense => "dense",
            Self::Conv => "conv",
        })
    }
}

/// Deliberate defects for exercising the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    None,
    /// Scales the integrator's somatic leak term.
    LeakFactor,
}

impl FromStr for FaultInjection {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "leak_factor" => Ok(Self::LeakFactor),
            _ => Err("expected `none` or `leak_factor`".into()),
        }
    }
}

impl fmt::Display for FaultInjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::LeakFactor => "leak_factor",
        })
    }
}

/// Discrete reward distribution written `value:prob,value:prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms(pub Vec<(f64, f64)>);

impl FromStr for Atoms {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|pair| {
                let (v, p) = pair
                    .split_once(':')
                    .ok_or_else(|| format!("`{pair}` is not `value:prob`"))?;
                let v = v.trim().parse::<f64>().map_err(|e| e.to_string())?;
                let p = p.trim().parse::<f64>().map_err(|e| e.to_string())?;
                Ok((v, p))
            })
            .collect::<std::result::Result<_, _>>()
            .map(Atoms)
    }
}

impl fmt::Display for Atoms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(v, p)| format!("{v}:{p}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Comma-separated layer widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Widths(pub Vec<usize>);

impl FromStr for Widths {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|w| w.trim().parse::<usize>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<_, _>>()
            .map(Widths)
    }
}

impl fmt::Display for Widths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

macro_rules! run_config {
    ($($(#[doc = $doc:literal])* $key:literal => $field:ident : $ty:ty = $default:expr;)*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $($(#[doc = $doc])* pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), ConfigError> {
                match key {
                    $($key => self.$field = parse_value(key, value)?,)*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            /// Every key with its current value, in declaration order.
            pub fn pairs(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$field.to_string())),*]
            }
        }
    };
}

run_config! {
    "tau_L" => tau_l: f64 = 2.0;
    "tau_A" => tau_a: f64 = 2.0;
    "tau_B" => tau_b: f64 = 2.0;
    "g_A" => g_a: f64 = 1.0;
    "g_B" => g_b: f64 = 1.0;
    "g_L" => g_l: f64 = 1.0;
    "v_th" => v_th: f64 = 1.0;
    "v_reset" => v_reset: f64 = 0.0;
    /// Simulation window.
    "T" => window: usize = 8;
    /// Number of quantile fractions.
    "N" => fractions: usize = 32;
    /// Population size.
    "M" => population: usize = 64;
    /// Receptive width.
    "C" => receptive_width: f64 = 0.05;
    "lr_adam" => lr_adam: f64 = 1e-4;
    "lr_rmsprop" => lr_rmsprop: f64 = 2.5e-9;
    "adam_beta1" => adam_beta1: f64 = 0.9;
    "adam_beta2" => adam_beta2: f64 = 0.999;
    "adam_eps" => adam_eps: f64 = 1e-8;
    "rmsprop_alpha" => rmsprop_alpha: f64 = 0.95;
    "rmsprop_eps" => rmsprop_eps: f64 = 1e-5;
    "gamma" => gamma: f64 = 0.99;
    "huber_epsilon" => huber_epsilon: f64 = 1.0;
    "epsilon_start" => epsilon_start: f64 = 1.0;
    "epsilon_end" => epsilon_end: f64 = 0.05;
    "epsilon_fraction" => epsilon_fraction: f64 = 0.1;
    "env" => env: EnvName = EnvName::Chain;
    "chain_k" => chain_k: usize = 5;
    "chain_left" => chain_left: Atoms = Atoms(vec![(0.5, 1.0)]);
    "chain_right" => chain_right: Atoms = Atoms(vec![(0.0, 0.5), (2.0, 0.5)]);
    "grid_size" => grid_size: usize = 4;
    "image_size" => image_size: usize = 36;
    "horizon" => horizon: usize = 100;
    "mode" => mode: FusionMode = FusionMode::McnPopulation;
    "surrogate_center" => surrogate_center: SurrogateCenter = SurrogateCenter::Threshold;
    "fraction_grad" => fraction_grad: FractionGradMode = FractionGradMode::Paper;
    "spike_fn" => spike_fn: SpikeFn = SpikeFn::Heaviside;
    "encoder" => encoder: EncoderKind = EncoderKind::Auto;
    /// Dense encoder layer widths.
    "encoder_hidden" => encoder_hidden: Widths = Widths(vec![64, 64]);
    "n_mcn" => n_mcn: usize = 512;
    "hidden" => hidden: usize = 512;
    "population_gain" => population_gain: f64 = 2.5;
    "init_gain" => init_gain: f64 = 4.0;
    "batch" => batch: usize = 32;
    "buffer" => buffer: usize = 100_000;
    "warmup" => warmup: usize = 1000;
    "train_every" => train_every: u64 = 1;
    "target_sync" => target_sync: u64 = 1000;
    "seed" => seed: u64 = 0;
    /// Consecutive seeds run by `train`, starting at `seed`.
    "seeds" => seeds: u64 = 1;
    "steps" => steps: u64 = 50_000;
    /// Steps between intermediate checkpoints; 0 writes only the final one.
    "checkpoint_every" => checkpoint_every: u64 = 0;
    "out" => out: String = "runs".to_string();
    "eval_episodes" => eval_episodes: usize = 10;
    /// Population draws averaged per greedy decision outside training.
    "eval_draws" => eval_draws: usize = 8;
    "inspect_units" => inspect_units: usize = 128;
    "fault_injection" => fault_injection: FaultInjection = FaultInjection::None;
}

impl RunConfig {
    pub fn parse_str(text: &str) -> std::result::Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_str(&mut self, text: &str) -> std::result::Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    /// Applies a `KEY=VALUE` override.
    pub fn apply_override(&mut self, pair: &str) -> std::result::Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: pair.to_string(),
        })?;
        self.set(k.trim(), v.trim())
    }

    /// Serialises to the file format; `parse_str(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        self.pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn neuron_params(&self) -> NeuronParams {
        NeuronParams {
            tau_l: self.tau_l,
            tau_a: self.tau_a,
            tau_b: self.tau_b,
            g_a: self.g_a,
            g_b: self.g_b,
            g_l: self.g_l,
            v_th: self.v_th,
            v_reset: self.v_reset,
        }
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics {
            params: self.neuron_params(),
            center: self.surrogate_center,
            spike_fn: self.spike_fn,
        }
    }

    pub fn env_spec(&self) -> EnvSpec {
        let kind = match self.env {
            EnvName::Chain => EnvKind::Chain {
                k: self.chain_k,
                left: self.chain_left.0.clone(),
                right: self.chain_right.0.clone(),
            },
            EnvName::Grid => EnvKind::Grid { size: self.grid_size },
            EnvName::Image => EnvKind::Image {
                size: self.grid_size,
                image: self.image_size,
            },
        };
        EnvSpec {
            kind,
            horizon: self.horizon,
        }
    }

    pub fn network_config(&self, env: &EnvSpec) -> NetworkConfig {
        let conv = match self.encoder {
            EncoderKind::Auto => matches!(env.kind, EnvKind::Image { .. }),
            EncoderKind::Dense => false,
            EncoderKind::Conv => true,
        };
        let encoder = match (conv, &env.kind) {
            (true, EnvKind::Image { image, .. }) => EncoderSpec::Conv {
                channels: 1,
                height: *image,
                width: *image,
                layers: ConvLayer::atari_stack(),
            },
            _ => EncoderSpec::Dense {
                input: env.obs_dim(),
                hidden: self.encoder_hidden.0.clone(),
            },
        };
        NetworkConfig {
            encoder,
            fractions: self.fractions,
            population: self.population,
            receptive_width: self.receptive_width,
            fusion_units: self.n_mcn,
            hidden: self.hidden,
            actions: env.num_actions(),
            window: self.window,
            fusion: self.mode,
            population_gain: self.population_gain,
            init_gain: self.init_gain,
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            loss: LossConfig {
                epsilon: self.huber_epsilon,
                gamma: self.gamma,
            },
            fraction_grad: self.fraction_grad,
            adam: AdamConfig {
                lr: self.lr_adam,
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                eps: self.adam_eps,
            },
            rmsprop: RmsPropConfig {
                lr: self.lr_rmsprop,
                alpha: self.rmsprop_alpha,
                eps: self.rmsprop_eps,
            },
            batch: self.batch,
            buffer: self.buffer,
            warmup: self.warmup,
            train_every: self.train_every,
            target_sync: self.target_sync,
            exploration: LinearSchedule {
                start: self.epsilon_start,
                end: self.epsilon_end,
                fraction: self.epsilon_fraction,
                total: self.steps,
            },
        }
    }

    /// Network with its population codec keyed by `seed`.
    pub fn network(&self, seed: u64) -> Result<Network> {
        let env = self.env_spec();
        env.validate()?;
        Network::new(self.network_config(&env), self.dynamics(), seed)
    }

    pub fn agent(&self, seed: u64) -> Result<Agent> {
        Agent::new(self.network(seed)?, self.agent_config(), seed)
    }

    /// Checks everything that can be checked without building a network.
    pub fn validate(&self) -> Result<()> {
        self.neuron_params().validate()?;
        self.env_spec().validate()?;
        self.agent_config().validate()?;
        self.network_config(&self.env_spec()).validate()?;
        let bad = |key: &str, v: f64, reason: &str| {
            Err(Error::Config(ConfigError::BadValue {
                key: key.into(),
                value: v.to_string(),
                reason: reason.into(),
            }))
        };
        for (key, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_fraction", self.epsilon_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(key, v, "must lie in [0, 1]");
            }
        }
        for (key, v) in [("lr_adam", self.lr_adam), ("lr_rmsprop", self.lr_rmsprop)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(key, v, "must be a finite non-negative number");
            }
        }
        if self.eval_draws == 0 {
            return bad("eval_draws", 0.0, "must be ≥ 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_parameter_table() {
        let c = RunConfig::default();
        assert_eq!(c.neuron_params(), NeuronParams::default());
        assert_eq!((c.tau_l, c.tau_a, c.tau_b), (2.0, 2.0, 2.0));
        assert_eq!((c.g_a, c.g_b, c.g_l, c.v_th, c.v_reset), (1.0, 1.0, 1.0, 1.0, 0.0));
        assert_eq!((c.window, c.fractions, c.population, c.receptive_width), (8, 32, 64, 0.05));
        assert_eq!((c.lr_adam, c.lr_rmsprop), (1e-4, 2.5e-9));
        assert_eq!((c.n_mcn, c.hidden, c.eval_episodes, c.inspect_units), (512, 512, 10, 128));
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_str("tau_L = 4.0 # comment\n\n# full line\nmode=s-fqf\nchain_right = 0:0.25,4:0.75\nencoder_hidden=8,3\n")
            .unwrap();
        assert_eq!(c.tau_l, 4.0);
        assert_eq!(c.mode, FusionMode::LiCosine);
        assert_eq!(c.chain_right, Atoms(vec![(0.0, 0.25), (4.0, 0.75)]));
        assert_eq!(RunConfig::parse_str(&c.to_text()).unwrap(), c);
        assert_eq!(c.pairs().len(), RunConfig::KEYS.len());
    }

    #[test]
    fn unknown_and_bad_keys_are_named() {
        let err = RunConfig::parse_str("tau_l = 2").unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey(k) if k == "tau_l"));
        let err = RunConfig::parse_str("N = many").unwrap_err();
        assert!(err.to_string().contains("`N`"), "{err}");
        let err = RunConfig::parse_str("T 8").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
        assert!(RunConfig::default().apply_override("mode=ann").is_err());
    }

    #[test]
    fn image_env_gets_the_conv_stack() {
        let c = RunConfig::parse_str("env = synthetic-image").unwrap();
        let nc = c.network_config(&c.env_spec());
        assert!(matches!(nc.encoder, EncoderSpec::Conv { height: 36, .. }));
        nc.validate().unwrap();
        assert_eq!(nc.embed_dim(), 64);
    }

    #[test]
    fn validation_rejects_nonsense() {
        let mut c = RunConfig::default();
        c.epsilon_end = 1.5;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.gamma = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.chain_right = Atoms(vec![(1.0, 0.4)]);
        assert!(c.validate().is_err());
    }
}
