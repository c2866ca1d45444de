//! The spiking quantile network: state encoder, fraction proposal,
//! fraction embedding, dendritic fusion, and the quantile head.
//!
//! One forward pass runs the encoder once on the (static) observation,
//! proposes fractions from its time-averaged spikes, and then evaluates
//! the fusion layer and quantile head once per queried fraction. All
//! per-step state is kept in a [`TapeRecord`] so the backward pass can
//! replay the spatio-temporal chain rule without re-running the forward.

mod backward;
mod encoder;
mod forward;
mod fractions;
mod layers;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::PopulationCodec;
use crate::error::{Error, Result};
use crate::neuron::Dynamics;
use crate::tensor::Tensor;

pub use encoder::{ConvLayer, EncoderSpec, EncoderTape};
pub use forward::{
    li_product_fuse, mcn_fuse, quantile_head, BasalTape, Forward, FusionTape, QueryTape, TapeRecord,
};
pub use fractions::{propose_fractions, q_values, FractionSet, QuantileEstimate};
pub(crate) use fractions::time_mean;
pub use layers::SpikingTape;

/// How state and fraction embeddings are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FusionMode {
    /// Population spikes on the apical dendrite, state spikes on the basal
    /// dendrite of multi-compartment neurons.
    #[default]
    McnPopulation,
    /// Two LI groups (state, population spikes) whose potentials are
    /// multiplied step by step.
    LiPopulation,
    /// As `LiPopulation` with the cosine embedding in place of spikes.
    LiCosine,
}

impl FusionMode {
    pub fn uses_population(self) -> bool {
        !matches!(self, FusionMode::LiCosine)
    }
}

impl FromStr for FusionMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mcs-fqf" => Ok(Self::McnPopulation),
            "s-fqf-pop" => Ok(Self::LiPopulation),
            "s-fqf" => Ok(Self::LiCosine),
            _ => Err("expected `mcs-fqf`, `s-fqf-pop` or `s-fqf`".into()),
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::McnPopulation => "mcs-fqf",
            Self::LiPopulation => "s-fqf-pop",
            Self::LiCosine => "s-fqf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub encoder: EncoderSpec,
    /// Number of quantile fractions `N`.
    pub fractions: usize,
    /// Population size `M` (also the cosine embedding length).
    pub population: usize,
    /// Receptive width `C` shared by the population.
    pub receptive_width: f64,
    /// Fusion units (MCNs, or LI neurons per group).
    pub fusion_units: usize,
    pub hidden: usize,
    pub actions: usize,
    /// Simulation window `T`.
    pub window: usize,
    pub fusion: FusionMode,
    /// Input gain of the LIF stage behind the population spikes.
    pub population_gain: f64,
    /// Scale of the uniform weight initialisation, relative to
    /// `sqrt(3 / fan_in)`.
    pub init_gain: f64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("N", self.fractions),
            ("M", self.population),
            ("fusion units", self.fusion_units),
            ("hidden", self.hidden),
            ("actions", self.actions),
            ("T", self.window),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParam(format!("{name} must be ≥ 1")));
            }
        }
        if self.population < 2 {
            return Err(Error::InvalidParam("M must be ≥ 2".into()));
        }
        self.encoder.validate()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.output_dim()
    }
}

/// One tensor per learnable weight group. Also used for gradients and
/// optimiser moments, which mirror the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub encoder: Vec<Tensor>,
    /// Fraction proposal `[N × embed]`.
    pub w_f: Tensor,
    /// Basal synapses `[embed × units]`.
    pub w_b: Tensor,
    /// Apical synapses `[M × units]`.
    pub w_a: Tensor,
    /// Quantile-head hidden layer `[units × hidden]`.
    pub w_h: Tensor,
    /// Readout `[hidden × actions]`.
    pub w_l: Tensor,
}

pub type NetworkParams = ParamSet;
pub type GradientSet = ParamSet;

impl ParamSet {
    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor| Tensor::zeros(t.dims());
        Self {
            encoder: self.encoder.iter().map(z).collect(),
            w_f: z(&self.w_f),
            w_b: z(&self.w_b),
            w_a: z(&self.w_a),
            w_h: z(&self.w_h),
            w_l: z(&self.w_l),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors().into_iter().map(|(n, _)| n).collect()
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .encoder
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("encoder.{i}"), t))
            .collect();
        out.push(("w_f".into(), &self.w_f));
        out.push(("w_b".into(), &self.w_b));
        out.push(("w_a".into(), &self.w_a));
        out.push(("w_h".into(), &self.w_h));
        out.push(("w_l".into(), &self.w_l));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = self
            .encoder
            .iter_mut()
            .enumerate()
            .map(|(i, t)| (format!("encoder.{i}"), t))
            .collect();
        out.push(("w_f".into(), &mut self.w_f));
        out.push(("w_b".into(), &mut self.w_b));
        out.push(("w_a".into(), &mut self.w_a));
        out.push(("w_h".into(), &mut self.w_h));
        out.push(("w_l".into(), &mut self.w_l));
        out
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.all_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().iter().fold(0.0, |m, (_, t)| m.max(t.max_abs()))
    }

    /// Rebuilds a set from named tensors with the same layout as `template`.
    pub fn from_named(
        template: &ParamSet,
        mut lookup: impl FnMut(&str) -> Option<Tensor>,
    ) -> std::result::Result<Self, String> {
        let mut out = template.zeros_like();
        for (name, slot) in out.tensors_mut() {
            let t = lookup(&name).ok_or_else(|| name.clone())?;
            if t.dims() != slot.dims() {
                return Err(name);
            }
            *slot = t;
        }
        Ok(out)
    }
}

/// A configured network: architecture, neuron dynamics and the population
/// codec. Weights live separately in a [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    dynamics: Dynamics,
    codec: PopulationCodec,
}

impl Network {
    pub fn new(config: NetworkConfig, dynamics: Dynamics, seed: u64) -> Result<Self> {
        config.validate()?;
        dynamics.params.validate()?;
        if config.fusion == FusionMode::McnPopulation {
            crate::neuron::warn_soma_leak(&dynamics.params);
        }
        let codec = PopulationCodec::new(config.population, config.receptive_width, seed)?;
        Ok(Self {
            config,
            dynamics,
            codec,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn codec(&self) -> &PopulationCodec {
        &self.codec
    }

    pub fn with_dynamics(&self, dynamics: Dynamics) -> Self {
        Self {
            dynamics,
            ..self.clone()
        }
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let c = &self.config;
        let e = c.embed_dim();
        let mut shapes: Vec<(String, Vec<usize>)> = c
            .encoder
            .weight_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("encoder.{i}"), s))
            .collect();
        shapes.push(("w_f".into(), vec![c.fractions, e]));
        shapes.push(("w_b".into(), vec![e, c.fusion_units]));
        shapes.push(("w_a".into(), vec![c.population, c.fusion_units]));
        shapes.push(("w_h".into(), vec![c.fusion_units, c.hidden]));
        shapes.push(("w_l".into(), vec![c.hidden, c.actions]));
        shapes
    }

    pub fn zero_params(&self) -> NetworkParams {
        let shapes = self.param_shapes();
        let n_enc = shapes.len() - 5;
        let t = |i: usize| Tensor::zeros(&shapes[i].1);
        ParamSet {
            encoder: (0..n_enc).map(t).collect(),
            w_f: t(n_enc),
            w_b: t(n_enc + 1),
            w_a: t(n_enc + 2),
            w_h: t(n_enc + 3),
            w_l: t(n_enc + 4),
        }
    }

    /// Uniform fan-in scaled initialisation, rounded to `f32`. The fraction
    /// proposal starts near zero so the initial fractions are close to
    /// uniform.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> NetworkParams {
        let gain = self.config.init_gain;
        let bound = |fan_in: usize, g: f64| g * (3.0 / fan_in.max(1) as f64).sqrt();
        let mut p = self.zero_params();
        for (t, fan_in) in p.encoder.iter_mut().zip(self.config.encoder.fan_ins()) {
            *t = Tensor::uniform(t.dims(), bound(fan_in, gain), rng);
        }
        let e = self.config.embed_dim();
        p.w_f = Tensor::uniform(p.w_f.dims(), bound(e, 0.01), rng);
        p.w_b = Tensor::uniform(p.w_b.dims(), bound(e, gain), rng);
        p.w_a = Tensor::uniform(p.w_a.dims(), bound(self.config.population, gain), rng);
        p.w_h = Tensor::uniform(p.w_h.dims(), bound(self.config.fusion_units, gain), rng);
        p.w_l = Tensor::uniform(p.w_l.dims(), bound(self.config.hidden, 1.0), rng);
        for (_, t) in p.tensors_mut() {
            t.quantize_f32();
        }
        p
    }

    pub fn check_params(&self, params: &NetworkParams) -> Result<()> {
        let expected = self.param_shapes();
        let actual = params.tensors();
        if expected.len() != actual.len() {
            return Err(Error::shape(
                "network parameters",
                &[expected.len()],
                &[actual.len()],
            ));
        }
        for ((_, e), (_, a)) in expected.iter().zip(&actual) {
            if e.as_slice() != a.dims() {
                return Err(Error::shape("network parameters", e, a.dims()));
            }
        }
        Ok(())
    }
}
