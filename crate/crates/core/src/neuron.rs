//! Discrete-time neuron dynamics: LIF, non-spiking LI, and the
//! three-compartment (basal dendrite, apical dendrite, soma) neuron.
//!
//! Every compartment uses explicit Euler with leak factor `1 - h/τ`; the
//! network runs with `h = 1`. The continuous-time integrator and the
//! closed-form somatic solution below exist to check that the stepwise
//! update converges to the exact dynamics.
//!
//! ```text
//! basal    V_b ← (1 - 1/τ_B)·V_b + x_b/τ_B
//! apical   V_a ← (1 - 1/τ_A)·V_a + x_a/τ_A
//! soma     u   ← m·u + g_B/(g_L τ_L)·V_b + g_A/(g_L τ_L)·V_a
//!          m    = 1 - 1/τ_L - g_B/(g_L τ_L) - g_A/(g_L τ_L)
//! spike    o = [u > V_th],  u ← V_reset on spike
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Once;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub tau_l: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub g_a: f64,
    pub g_b: f64,
    pub g_l: f64,
    pub v_th: f64,
    pub v_reset: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            tau_l: 2.0,
            tau_a: 2.0,
            tau_b: 2.0,
            g_a: 1.0,
            g_b: 1.0,
            g_l: 1.0,
            v_th: 1.0,
            v_reset: 0.0,
        }
    }
}

impl NeuronParams {
    /// The constants used for the single-neuron firing demonstration
    /// (`τ_L = 4`, `V_th = 0.8`, everything else at its default).
    pub fn single_neuron_demo() -> Self {
        Self {
            tau_l: 4.0,
            v_th: 0.8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let taus = [
            ("tau_L", self.tau_l),
            ("tau_A", self.tau_a),
            ("tau_B", self.tau_b),
        ];
        for (name, tau) in taus {
            if !(tau >= 1.0) || !tau.is_finite() {
                return Err(Error::InvalidParam(format!("{name} must be ≥ 1, got {tau}")));
            }
        }
        if !(self.g_l > 0.0) {
            return Err(Error::InvalidParam(format!("g_L must be > 0, got {}", self.g_l)));
        }
        if !(self.g_a >= 0.0) || !(self.g_b >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "g_A and g_B must be ≥ 0, got {} and {}",
                self.g_a, self.g_b
            )));
        }
        if !(self.v_th > self.v_reset) {
            return Err(Error::InvalidParam(format!(
                "v_th ({}) must exceed v_reset ({})",
                self.v_th, self.v_reset
            )));
        }
        Ok(())
    }

    pub fn basal_coupling(&self) -> f64 {
        self.g_b / (self.g_l * self.tau_l)
    }

    pub fn apical_coupling(&self) -> f64 {
        self.g_a / (self.g_l * self.tau_l)
    }

    /// Somatic leak factor `m` of the unit-step MCN update.
    pub fn soma_leak(&self) -> f64 {
        self.soma_leak_dt(1.0)
    }

    pub fn soma_leak_dt(&self, h: f64) -> f64 {
        1.0 - h / self.tau_l - h * self.basal_coupling() - h * self.apical_coupling()
    }

    /// Decay rate `Z = (g_B + g_A + g_L) / (τ_L g_L)` of the continuous soma.
    pub fn soma_rate(&self) -> f64 {
        (self.g_b + self.g_a + self.g_l) / (self.tau_l * self.g_l)
    }
}

/// Where the surrogate derivative peaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SurrogateCenter {
    /// `u_c = u - V_th`: the surrogate peaks at the firing threshold.
    #[default]
    Threshold,
    /// `u_c = u`: the formula taken literally, peaked at zero potential.
    Zero,
}

impl FromStr for SurrogateCenter {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "threshold" => Ok(Self::Threshold),
            "zero" => Ok(Self::Zero),
            _ => Err("expected `threshold` or `zero`".into()),
        }
    }
}

impl fmt::Display for SurrogateCenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Threshold => "threshold",
            Self::Zero => "zero",
        })
    }
}

/// Forward spike nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SpikeFn {
    /// Binary spikes; the backward pass substitutes the surrogate.
    #[default]
    Heaviside,
    /// Spikes replaced by the surrogate's antiderivative, which makes the
    /// whole forward pass differentiable and the surrogate exact.
    Smooth,
}

impl FromStr for SpikeFn {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "heaviside" => Ok(Self::Heaviside),
            "smooth" => Ok(Self::Smooth),
            _ => Err("expected `heaviside` or `smooth`".into()),
        }
    }
}

impl fmt::Display for SpikeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Heaviside => "heaviside",
            Self::Smooth => "smooth",
        })
    }
}

/// Surrogate spike derivative `2τ_L / (4 + (π τ_L u_c)²)` at the centred
/// potential `u_c`.
pub fn surrogate_grad(u_c: f64, tau_l: f64) -> f64 {
    let a = PI * tau_l * u_c;
    2.0 * tau_l / (4.0 + a * a)
}

/// `arctan(π τ_L u_c / 2)/π + 1/2`, whose derivative is [`surrogate_grad`].
pub fn smooth_spike(u_c: f64, tau_l: f64) -> f64 {
    (PI * tau_l * u_c / 2.0).atan() / PI + 0.5
}

/// Everything a spiking layer needs to fire, reset and differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dynamics {
    pub params: NeuronParams,
    pub center: SurrogateCenter,
    pub spike_fn: SpikeFn,
}

impl Dynamics {
    pub fn new(params: NeuronParams) -> Self {
        Self {
            params,
            ..Self::default()
        }
    }

    pub fn centered(&self, u: f64) -> f64 {
        match self.center {
            SurrogateCenter::Threshold => u - self.params.v_th,
            SurrogateCenter::Zero => u,
        }
    }

    pub fn fire(&self, u: f64) -> f64 {
        match self.spike_fn {
            SpikeFn::Heaviside => {
                if u > self.params.v_th {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeFn::Smooth => smooth_spike(self.centered(u), self.params.tau_l),
        }
    }

    pub fn surrogate(&self, u: f64) -> f64 {
        surrogate_grad(self.centered(u), self.params.tau_l)
    }

    /// Post-spike potential `u·(1 - o) + V_reset·o`; a hard reset for
    /// binary `o`, and differentiable in smooth mode.
    pub fn reset(&self, u: f64, o: f64) -> f64 {
        u * (1.0 - o) + self.params.v_reset * o
    }
}

/// One explicit-Euler step of `τ dv/dt = -v + x` with step `h`.
pub fn leaky(v: f64, x: f64, tau: f64, h: f64) -> f64 {
    let a = h / tau;
    (1.0 - a) * v + a * x
}

/// Unit-step dendritic update `(1 - 1/τ)·v + x/τ`.
pub fn dendrite_step(v: f64, x: f64, tau: f64) -> f64 {
    leaky(v, x, tau, 1.0)
}

/// One Euler step of the somatic equation, before any spike or reset.
pub fn soma_update(u: f64, v_b: f64, v_a: f64, params: &NeuronParams, h: f64) -> f64 {
    params.soma_leak_dt(h) * u
        + h * params.basal_coupling() * v_b
        + h * params.apical_coupling() * v_a
}

static UNSTABLE_SOMA: Once = Once::new();
static OSCILLATORY_SOMA: Once = Once::new();

pub(crate) fn warn_soma_leak(params: &NeuronParams) {
    let m = params.soma_leak();
    if m.abs() >= 1.0 {
        UNSTABLE_SOMA.call_once(|| {
            log::warn!("somatic leak factor m = {m} has |m| ≥ 1; the MCN recurrence is unstable")
        });
    } else if m < 0.0 {
        OSCILLATORY_SOMA.call_once(|| {
            log::warn!("somatic leak factor m = {m} is negative; the MCN soma oscillates")
        });
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: x[index],
        }),
        None => Ok(()),
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::shape(context, &[expected], &[actual]));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    pub u: Vec<f64>,
    pub last_spike: Vec<u8>,
}

impl LifState {
    pub fn new(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            last_spike: vec![0; n],
        }
    }
}

pub fn lif_step(state: &LifState, x: &[f64], params: &NeuronParams) -> Result<(LifState, Vec<u8>)> {
    check_len("lif_step", state.u.len(), x.len())?;
    check_finite(x)?;
    let mut next = state.clone();
    for ((u, s), &xi) in next.u.iter_mut().zip(&mut next.last_spike).zip(x) {
        *u = leaky(*u, xi, params.tau_l, 1.0);
        *s = u8::from(*u > params.v_th);
        if *s == 1 {
            *u = params.v_reset;
        }
    }
    let spikes = next.last_spike.clone();
    Ok((next, spikes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiState {
    pub u: Vec<f64>,
}

impl LiState {
    pub fn new(n: usize) -> Self {
        Self { u: vec![0.0; n] }
    }
}

/// Leaky integration without threshold or reset; the potential is the output.
pub fn li_step(state: &LiState, x: &[f64], params: &NeuronParams) -> Result<LiState> {
    check_len("li_step", state.u.len(), x.len())?;
    check_finite(x)?;
    Ok(LiState {
        u: state
            .u
            .iter()
            .zip(x)
            .map(|(&u, &xi)| leaky(u, xi, params.tau_l, 1.0))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McnState {
    pub v_b: Vec<f64>,
    pub v_a: Vec<f64>,
    pub u: Vec<f64>,
    pub last_spike: Vec<u8>,
}

impl McnState {
    pub fn new(n: usize) -> Self {
        Self {
            v_b: vec![0.0; n],
            v_a: vec![0.0; n],
            u: vec![0.0; n],
            last_spike: vec![0; n],
        }
    }
}

/// Somatic update from already-advanced dendritic potentials.
pub fn mcn_soma_step(state: &McnState, params: &NeuronParams) -> (McnState, Vec<u8>) {
    warn_soma_leak(params);
    let mut next = state.clone();
    for i in 0..next.u.len() {
        let u = soma_update(next.u[i], next.v_b[i], next.v_a[i], params, 1.0);
        let spike = u > params.v_th;
        next.last_spike[i] = u8::from(spike);
        next.u[i] = if spike { params.v_reset } else { u };
    }
    let spikes = next.last_spike.clone();
    (next, spikes)
}

/// Full MCN step: advance both dendrites with their input currents, then
/// the soma.
pub fn mcn_step(
    state: &McnState,
    x_b: &[f64],
    x_a: &[f64],
    params: &NeuronParams,
) -> Result<(McnState, Vec<u8>)> {
    check_len("mcn_step basal", state.v_b.len(), x_b.len())?;
    check_len("mcn_step apical", state.v_a.len(), x_a.len())?;
    check_finite(x_b)?;
    check_finite(x_a)?;
    let mut advanced = state.clone();
    for i in 0..advanced.v_b.len() {
        advanced.v_b[i] = dendrite_step(advanced.v_b[i], x_b[i], params.tau_b);
        advanced.v_a[i] = dendrite_step(advanced.v_a[i], x_a[i], params.tau_a);
    }
    Ok(mcn_soma_step(&advanced, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    steps: usize,
    neurons: usize,
    data: Vec<u8>,
}

impl SpikeTrain {
    pub fn zeros(steps: usize, neurons: usize) -> Self {
        Self {
            steps,
            neurons,
            data: vec![0; steps * neurons],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let neurons = rows.first().map_or(0, Vec::len);
        let mut train = Self::zeros(rows.len(), neurons);
        for (t, row) in rows.iter().enumerate() {
            check_len("SpikeTrain::from_rows", neurons, row.len())?;
            for (j, &s) in row.iter().enumerate() {
                if s > 1 {
                    return Err(Error::InvalidParam(format!("spike value {s} at ({t}, {j})")));
                }
                train.data[t * neurons + j] = s;
            }
        }
        Ok(train)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn get(&self, t: usize, j: usize) -> u8 {
        self.data[t * self.neurons + j]
    }

    pub fn set(&mut self, t: usize, j: usize, spike: bool) {
        self.data[t * self.neurons + j] = u8::from(spike);
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.neurons..(t + 1) * self.neurons]
    }

    /// Row `t` as 0.0/1.0 currents.
    pub fn row_f64(&self, t: usize) -> Vec<f64> {
        self.row(t).iter().map(|&s| f64::from(s)).collect()
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&s| usize::from(s)).sum()
    }

    pub fn neuron_count(&self, j: usize) -> usize {
        (0..self.steps).map(|t| usize::from(self.get(t, j))).sum()
    }
}

/// Traces recorded by [`integrate_mcn`].
#[derive(Debug, Clone, Default)]
pub struct McnTrace {
    pub time: Vec<f64>,
    pub v_b: Vec<f64>,
    pub v_a: Vec<f64>,
    pub u: Vec<f64>,
    pub spikes: Vec<bool>,
}

impl McnTrace {
    pub fn spike_count(&self) -> usize {
        self.spikes.iter().filter(|&&s| s).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EulerOptions {
    pub h: f64,
    pub t_end: f64,
    pub spiking: bool,
    /// Multiplies the somatic leak factor; anything but 1.0 is a deliberate
    /// fault used to prove the closed-form check can fail.
    pub leak_scale: f64,
}

impl EulerOptions {
    pub fn new(h: f64, t_end: f64) -> Self {
        Self {
            h,
            t_end,
            spiking: false,
            leak_scale: 1.0,
        }
    }
}

/// Integrates one MCN from rest with step `h` under time-dependent drives.
/// Sample `k` is the state at `t = k·h`; sample 0 is the zero initial state.
pub fn integrate_mcn(
    params: &NeuronParams,
    x_b: impl Fn(f64) -> f64,
    x_a: impl Fn(f64) -> f64,
    opts: EulerOptions,
) -> McnTrace {
    let steps = (opts.t_end / opts.h).round() as usize;
    let mut tr = McnTrace::default();
    let (mut v_b, mut v_a, mut u) = (0.0, 0.0, 0.0);
    let leak = params.soma_leak_dt(opts.h) * opts.leak_scale;
    let (kb, ka) = (opts.h * params.basal_coupling(), opts.h * params.apical_coupling());
    tr.time.push(0.0);
    tr.v_b.push(0.0);
    tr.v_a.push(0.0);
    tr.u.push(0.0);
    tr.spikes.push(false);
    for k in 0..steps {
        let t = k as f64 * opts.h;
        // Input at the left end of the step, matching the unit-step update.
        v_b = leaky(v_b, x_b(t), params.tau_b, opts.h);
        v_a = leaky(v_a, x_a(t), params.tau_a, opts.h);
        u = leak * u + kb * v_b + ka * v_a;
        let spike = opts.spiking && u > params.v_th;
        if spike {
            u = params.v_reset;
        }
        tr.time.push((k + 1) as f64 * opts.h);
        tr.v_b.push(v_b);
        tr.v_a.push(v_a);
        tr.u.push(u);
        tr.spikes.push(spike);
    }
    tr
}

/// Somatic potential from the closed-form solution
/// `u(t) = e^{-Zt} ∫₀ᵗ e^{Zs}/τ_L · [g_B/g_L·V_b(s) + g_A/g_L·V_a(s)] ds`
/// at every grid point of the dendritic traces (spacing `dt`, `u(0) = 0`).
///
/// The running integral uses Simpson's rule on even nodes and a
/// third-order three-point rule on odd ones.
pub fn mcn_closed_form_trace(
    v_b: &[f64],
    v_a: &[f64],
    dt: f64,
    params: &NeuronParams,
) -> Result<Vec<f64>> {
    let n = v_b.len();
    if n < 2 {
        return Err(Error::GridTooCoarse(n));
    }
    check_len("mcn_closed_form", n, v_a.len())?;
    check_finite(v_b)?;
    check_finite(v_a)?;
    let z = params.soma_rate();
    let t_end = (n - 1) as f64 * dt;
    if z * t_end > 600.0 {
        return Err(Error::InvalidParam(format!(
            "Z·t = {} would overflow the exponential weights",
            z * t_end
        )));
    }
    let (cb, ca) = (params.g_b / params.g_l, params.g_a / params.g_l);
    let g: Vec<f64> = (0..n)
        .map(|k| (z * k as f64 * dt).exp() / params.tau_l * (cb * v_b[k] + ca * v_a[k]))
        .collect();

    let mut integral = vec![0.0; n];
    if n == 2 {
        integral[1] = 0.5 * dt * (g[0] + g[1]);
    } else {
        for k in 1..n {
            integral[k] = if k % 2 == 0 {
                integral[k - 2] + dt / 3.0 * (g[k - 2] + 4.0 * g[k - 1] + g[k])
            } else if k + 1 < n {
                integral[k - 1] + dt / 12.0 * (5.0 * g[k - 1] + 8.0 * g[k] - g[k + 1])
            } else {
                integral[k - 1] + dt / 12.0 * (-g[k - 2] + 8.0 * g[k - 1] + 5.0 * g[k])
            };
        }
    }
    Ok(integral
        .iter()
        .enumerate()
        .map(|(k, i)| (-z * k as f64 * dt).exp() * i)
        .collect())
}

/// Closed-form somatic potential at time `t`, linearly interpolated between
/// grid points.
pub fn mcn_closed_form(
    v_b: &[f64],
    v_a: &[f64],
    dt: f64,
    params: &NeuronParams,
    t: f64,
) -> Result<f64> {
    let trace = mcn_closed_form_trace(v_b, v_a, dt, params)?;
    let pos = t / dt;
    if !(0.0..=(trace.len() - 1) as f64).contains(&pos) {
        return Err(Error::InvalidParam(format!("t = {t} lies outside the sampled trace")));
    }
    let k = (pos.floor() as usize).min(trace.len() - 2);
    let frac = pos - k as f64;
    Ok(trace[k] * (1.0 - frac) + trace[k + 1] * frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(tau_l: f64, v_th: f64) -> NeuronParams {
        NeuronParams {
            tau_l,
            v_th,
            ..NeuronParams::default()
        }
    }

    #[test]
    fn table_defaults() {
        let p = NeuronParams::default();
        assert_eq!((p.tau_l, p.v_th, p.v_reset), (2.0, 1.0, 0.0));
        assert_eq!((p.tau_a, p.tau_b), (2.0, 2.0));
        assert_eq!((p.g_a, p.g_b, p.g_l), (1.0, 1.0, 1.0));
        assert_eq!(p.soma_leak(), -0.5);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn validation_rejects_bad_constants() {
        let bad = [
            NeuronParams { tau_l: 0.5, ..Default::default() },
            NeuronParams { g_l: 0.0, ..Default::default() },
            NeuronParams { g_a: -1.0, ..Default::default() },
            NeuronParams { v_th: 0.0, v_reset: 0.0, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn lif_zero_input_stays_at_rest() {
        let (s, spikes) = lif_step(&LifState::new(1), &[0.0], &params(2.0, 1.0)).unwrap();
        assert_eq!(s.u, vec![0.0]);
        assert_eq!(spikes, vec![0]);
    }

    #[test]
    fn lif_threshold_is_strict() {
        let p = params(2.0, 1.0);
        let (s1, k1) = lif_step(&LifState::new(1), &[2.0], &p).unwrap();
        assert_eq!((s1.u[0], k1[0]), (1.0, 0));
        let (s2, k2) = lif_step(&s1, &[2.0], &p).unwrap();
        assert_eq!((s2.u[0], k2[0]), (0.0, 1));
    }

    #[test]
    fn non_finite_input_names_the_neuron() {
        let err = lif_step(&LifState::new(3), &[0.0, 1.0, f64::NAN], &params(2.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 2, .. }), "{err}");
        assert!(li_step(&LiState::new(1), &[f64::INFINITY], &params(2.0, 1.0)).is_err());
    }

    #[test]
    fn li_integrates_without_reset() {
        let p = params(2.0, 1.0);
        let s1 = li_step(&LiState::new(1), &[2.0], &p).unwrap();
        let s2 = li_step(&s1, &[2.0], &p).unwrap();
        assert_eq!((s1.u[0], s2.u[0]), (1.0, 1.5));
        let mut s = LiState::new(1);
        for _ in 0..200 {
            s = li_step(&s, &[3.0], &p).unwrap();
        }
        assert!((s.u[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dendrite_hand_iteration() {
        assert_eq!(dendrite_step(0.0, 0.0, 2.0), 0.0);
        let v = dendrite_step(0.0, 1.0, 2.0);
        assert_eq!(v, 0.5);
        assert_eq!(dendrite_step(v, 0.0, 2.0), 0.25);
    }

    #[test]
    fn soma_plugged_values() {
        let p = NeuronParams { tau_l: 4.0, ..Default::default() };
        assert_eq!(p.soma_leak(), 0.25);
        let state = McnState {
            v_b: vec![1.5],
            v_a: vec![1.0],
            u: vec![0.0],
            last_spike: vec![0],
        };
        let (next, spikes) = mcn_soma_step(&state, &p);
        assert!((next.u[0] - 0.625).abs() < 1e-15);
        assert_eq!(spikes, vec![0]);

        let (rest, none) = mcn_soma_step(&McnState::new(1), &p);
        assert_eq!((rest.u[0], none[0]), (0.0, 0));
    }

    #[test]
    fn demo_parameters_fire_under_constant_drive() {
        let p = NeuronParams::single_neuron_demo();
        let mut state = McnState::new(1);
        let mut count = 0;
        for _ in 0..30 {
            let (next, spikes) = mcn_step(&state, &[1.5], &[1.0], &p).unwrap();
            count += spikes[0] as usize;
            state = next;
        }
        assert!(count >= 1);

        let mut silent = McnState::new(1);
        for _ in 0..30 {
            let (next, spikes) = mcn_step(&silent, &[0.0], &[0.0], &p).unwrap();
            assert_eq!(spikes[0], 0);
            silent = next;
        }
    }

    #[test]
    fn dendrites_ignore_somatic_spikes() {
        let firing = NeuronParams::single_neuron_demo();
        let silent = NeuronParams { v_th: f64::INFINITY, ..firing };
        let (mut a, mut b) = (McnState::new(1), McnState::new(1));
        for t in 0..30 {
            let xb = [1.5 + (t as f64).sin()];
            let xa = [1.0];
            a = mcn_step(&a, &xb, &xa, &firing).unwrap().0;
            b = mcn_step(&b, &xb, &xa, &silent).unwrap().0;
            assert_eq!((a.v_b[0], a.v_a[0]), (b.v_b[0], b.v_a[0]));
        }
    }

    #[test]
    fn surrogate_values() {
        assert_eq!(surrogate_grad(0.0, 2.0), 1.0);
        assert!(surrogate_grad(1e6, 2.0) < 1e-9);
        assert_eq!(surrogate_grad(0.3, 2.0), surrogate_grad(-0.3, 2.0));
        assert_eq!(smooth_spike(0.0, 2.0), 0.5);
        assert!(smooth_spike(0.1, 2.0) > smooth_spike(0.0, 2.0));
    }

    #[test]
    fn surrogate_is_derivative_of_smooth_spike() {
        let h = 1e-5;
        for i in -40..=40 {
            let u = i as f64 * 0.05;
            for tau in [1.0, 2.0, 4.0] {
                let fd = (smooth_spike(u + h, tau) - smooth_spike(u - h, tau)) / (2.0 * h);
                assert!((fd - surrogate_grad(u, tau)).abs() < 1e-8, "u={u} tau={tau}");
            }
        }
    }

    #[test]
    fn centering_modes() {
        let mut d = Dynamics::new(NeuronParams::default());
        assert_eq!(d.surrogate(1.0), 1.0);
        d.center = SurrogateCenter::Zero;
        assert_eq!(d.surrogate(0.0), 1.0);
        assert_eq!(d.reset(0.7, 1.0), 0.0);
        assert_eq!(d.reset(0.7, 0.0), 0.7);
    }

    #[test]
    fn closed_form_basic_cases() {
        let p = NeuronParams::default();
        assert_eq!(p.soma_rate(), 1.5);
        let zeros = vec![0.0; 101];
        let u = mcn_closed_form_trace(&zeros, &zeros, 0.01, &p).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
        assert!(matches!(
            mcn_closed_form_trace(&[0.0], &[0.0], 0.1, &p),
            Err(Error::GridTooCoarse(1))
        ));
    }

    #[test]
    fn closed_form_steady_state_for_constant_dendrites() {
        let p = NeuronParams::single_neuron_demo();
        let c = 0.7;
        let n = 60_001;
        let v = vec![c; n];
        let u = mcn_closed_form(&v, &v, 1e-3, &p, 60.0).unwrap();
        let steady = (p.g_a + p.g_b) * c / (p.tau_l * p.soma_rate() * p.g_l);
        assert!((u - steady).abs() < 1e-9, "{u} vs {steady}");
    }

    #[test]
    fn lif_potential_stays_bounded() {
        let p = params(3.0, 0.5);
        let mut s = LifState::new(1);
        let xs = [0.4, -2.0, 1.7, 0.0, 3.0, -0.1];
        for t in 0..200 {
            let x = xs[t % xs.len()];
            s = lif_step(&s, &[x], &p).unwrap().0;
            assert!(s.u[0].abs() <= 3.0 + 1e-12);
        }
    }
}
