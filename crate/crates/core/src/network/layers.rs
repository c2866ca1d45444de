//! Per-layer time loops shared by every spiking population, and their
//! reverse-time counterparts.

use crate::neuron::{leaky, Dynamics};

/// Recorded state of one spiking population over the window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpikingTape {
    /// Potential after integration, before spike and reset. `[T][n]`.
    pub u_pre: Vec<Vec<f64>>,
    /// Spikes, or smooth activations in smooth mode. `[T][n]`.
    pub out: Vec<Vec<f64>>,
    /// Surrogate derivative at `u_pre`. `[T][n]`.
    pub surrogate: Vec<Vec<f64>>,
}

impl SpikingTape {
    pub(crate) fn with_capacity(steps: usize) -> Self {
        Self {
            u_pre: Vec::with_capacity(steps),
            out: Vec::with_capacity(steps),
            surrogate: Vec::with_capacity(steps),
        }
    }

    /// Fires, records and resets; returns the post-reset potentials.
    pub(crate) fn record(&mut self, dynamics: &Dynamics, u_pre: Vec<f64>) -> Vec<f64> {
        let out: Vec<f64> = u_pre.iter().map(|&u| dynamics.fire(u)).collect();
        let surrogate = u_pre.iter().map(|&u| dynamics.surrogate(u)).collect();
        let post = u_pre
            .iter()
            .zip(&out)
            .map(|(&u, &o)| dynamics.reset(u, o))
            .collect();
        self.u_pre.push(u_pre);
        self.out.push(out);
        self.surrogate.push(surrogate);
        post
    }

    pub fn spike_count(&self) -> f64 {
        self.out.iter().flatten().sum()
    }
}

/// LIF population driven by input currents `currents[t]`, starting at rest.
pub(crate) fn run_lif(dynamics: &Dynamics, currents: &[Vec<f64>]) -> SpikingTape {
    let n = currents.first().map_or(0, Vec::len);
    let tau = dynamics.params.tau_l;
    let mut tape = SpikingTape::with_capacity(currents.len());
    let mut u = vec![0.0; n];
    for x in currents {
        let pre = u.iter().zip(x).map(|(&u, &x)| leaky(u, x, tau, 1.0)).collect();
        u = tape.record(dynamics, pre);
    }
    tape
}

/// Reverse-time pass through `u_pre_t = leak·u_post_{t-1} + drive_t`,
/// `o_t = f(u_pre_t)`, `u_post_t = u_pre_t·(1 - o_t) + V_reset·o_t`.
/// Takes `dL/do_t` and returns `dL/d drive_t`.
pub(crate) fn spiking_backward(
    dynamics: &Dynamics,
    leak: f64,
    tape: &SpikingTape,
    g_out: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let steps = tape.u_pre.len();
    let n = tape.u_pre.first().map_or(0, Vec::len);
    let v_reset = dynamics.params.v_reset;
    let mut g_drive = vec![vec![0.0; n]; steps];
    let mut carry = vec![0.0; n];
    for t in (0..steps).rev() {
        let (u_pre, out, sg) = (&tape.u_pre[t], &tape.out[t], &tape.surrogate[t]);
        for i in 0..n {
            let g_post = carry[i];
            let g_o = g_out[t][i] + g_post * (v_reset - u_pre[i]);
            let g_pre = g_post * (1.0 - out[i]) + g_o * sg[i];
            g_drive[t][i] = g_pre;
            carry[i] = leak * g_pre;
        }
    }
    g_drive
}

/// LIF backward to the input currents: `drive = x/τ`, `leak = 1 - 1/τ`.
pub(crate) fn lif_backward(dynamics: &Dynamics, tape: &SpikingTape, g_out: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let a = 1.0 / dynamics.params.tau_l;
    let mut g = spiking_backward(dynamics, 1.0 - a, tape, g_out);
    g.iter_mut().flatten().for_each(|v| *v *= a);
    g
}

/// Leaky integrator trace `v_t = (1 - 1/τ)·v_{t-1} + x_t/τ` from rest.
pub(crate) fn run_leaky(currents: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    let n = currents.first().map_or(0, Vec::len);
    let mut v = vec![0.0; n];
    currents
        .iter()
        .map(|x| {
            v = v.iter().zip(x).map(|(&v, &x)| leaky(v, x, tau, 1.0)).collect();
            v.clone()
        })
        .collect()
}

/// Backward of [`run_leaky`]: `dL/dv_t` (direct) to `dL/dx_t`.
pub(crate) fn leaky_backward(g_v: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    let a = 1.0 / tau;
    let n = g_v.first().map_or(0, Vec::len);
    let mut carry = vec![0.0; n];
    let mut g_x = vec![vec![0.0; n]; g_v.len()];
    for t in (0..g_v.len()).rev() {
        for i in 0..n {
            let total = g_v[t][i] + carry[i];
            g_x[t][i] = a * total;
            carry[i] = (1.0 - a) * total;
        }
    }
    g_x
}
