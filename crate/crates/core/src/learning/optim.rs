//! Adam for every weight group except the fraction proposal, RMSprop for
//! the fraction proposal. Parameters and moments are rounded to `f32`
//! after each update so that checkpoints round-trip exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{GradientSet, NetworkParams, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 2.5e-9,
            alpha: 0.95,
            eps: 1e-5,
        }
    }
}

fn check_same(context: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(context, a.dims(), b.dims()));
    }
    Ok(())
}

/// One bias-corrected Adam update; `step` counts from 1.
pub fn adam_step(cfg: &AdamConfig, step: u64, p: &mut Tensor, m: &mut Tensor, v: &mut Tensor, g: &Tensor) -> Result<()> {
    check_same("adam_step", p, g)?;
    check_same("adam_step", p, m)?;
    check_same("adam_step", p, v)?;
    let c1 = 1.0 - cfg.beta1.powf(step as f64);
    let c2 = 1.0 - cfg.beta2.powf(step as f64);
    let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
    for (i, &gi) in g.data().iter().enumerate() {
        md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gi;
        vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gi * gi;
        pd[i] -= cfg.lr * (md[i] / c1) / ((vd[i] / c2).sqrt() + cfg.eps);
    }
    Ok(())
}

pub fn rmsprop_step(cfg: &RmsPropConfig, p: &mut Tensor, sq: &mut Tensor, g: &Tensor) -> Result<()> {
    check_same("rmsprop_step", p, g)?;
    check_same("rmsprop_step", p, sq)?;
    let (pd, sd) = (p.data_mut(), sq.data_mut());
    for (i, &gi) in g.data().iter().enumerate() {
        sd[i] = cfg.alpha * sd[i] + (1.0 - cfg.alpha) * gi * gi;
        pd[i] -= cfg.lr * gi / (sd[i].sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub adam: AdamConfig,
    pub rmsprop: RmsPropConfig,
    /// Adam first moments; the `w_f` slot is unused.
    pub m: ParamSet,
    /// Adam second moments; the `w_f` slot is unused.
    pub v: ParamSet,
    /// RMSprop mean square for `w_f`.
    pub sq: Tensor,
    pub adam_steps: u64,
    pub rmsprop_steps: u64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, adam: AdamConfig, rmsprop: RmsPropConfig) -> Self {
        Self {
            adam,
            rmsprop,
            m: params.zeros_like(),
            v: params.zeros_like(),
            sq: Tensor::zeros(params.w_f.dims()),
            adam_steps: 0,
            rmsprop_steps: 0,
        }
    }

    /// Adam on every group except `w_f`; `w_f` is left untouched.
    pub fn step_adam(&mut self, params: &mut NetworkParams, grads: &GradientSet) -> Result<()> {
        self.adam_steps += 1;
        let groups = params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads.tensors());
        for ((((name, p), (_, m)), (_, v)), (_, g)) in groups {
            if name == "w_f" {
                continue;
            }
            adam_step(&self.adam, self.adam_steps, p, m, v, g)?;
            p.quantize_f32();
            m.quantize_f32();
            v.quantize_f32();
        }
        Ok(())
    }

    pub fn step_rmsprop(&mut self, w_f: &mut Tensor, grad: &Tensor) -> Result<()> {
        self.rmsprop_steps += 1;
        rmsprop_step(&self.rmsprop, w_f, &mut self.sq, grad)?;
        w_f.quantize_f32();
        self.sq.quantize_f32();
        Ok(())
    }

    /// Named state tensors for checkpointing.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        for (n, t) in self.m.tensors() {
            out.push((format!("adam.m.{n}"), t));
        }
        for (n, t) in self.v.tensors() {
            out.push((format!("adam.v.{n}"), t));
        }
        out.push(("rmsprop.sq".into(), &self.sq));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (n, t) in self.m.tensors_mut() {
            out.push((format!("adam.m.{n}"), t));
        }
        for (n, t) in self.v.tensors_mut() {
            out.push((format!("adam.v.{n}"), t));
        }
        out.push(("rmsprop.sq".into(), &mut self.sq));
        out
    }
}
