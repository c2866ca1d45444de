//! The oracle suite behind `verify`. Each check returns a report with the
//! raw metric so callers can print it, assert on it, or serialise it.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::config::{FaultInjection, RunConfig};
use crate::encoding::{DrawKey, PopulationCodec};
use crate::error::Result;
use crate::learning::{
    adam_step, fraction_logit_grad, huber, huber_quantile_loss_grad, td_errors, verify_gradients,
    wasserstein_grad_tau, AdamConfig, FractionGradMode, GradCheckReport, GradCheckSetup,
};
use crate::network::{EncoderSpec, FractionSet, FusionMode, Network, NetworkConfig};
use crate::neuron::{
    integrate_mcn, mcn_closed_form_trace, Dynamics, EulerOptions, NeuronParams,
};
use crate::tensor::Tensor;

/// One line of the `verify` report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub check: &'static str,
    pub passed: bool,
    pub metric: f64,
    pub tolerance: f64,
    pub detail: serde_json::Value,
    pub seconds: f64,
}

// ---------------------------------------------------------------- neuron

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Theorem1Report {
    /// Max |Euler − closed form| over the window, relative to max |closed form|.
    pub rel_err: f64,
    pub rel_err_half_step: f64,
    /// `rel_err / rel_err_half_step`; 2 for first-order convergence.
    pub ratio: f64,
}

impl Theorem1Report {
    pub fn passed(&self) -> bool {
        self.rel_err < 1e-3 && (self.ratio - 2.0).abs() < 0.2
    }
}

pub const FIG1_X_A: f64 = 1.0;
pub const FIG1_X_B: f64 = 1.5;
pub const FIG1_WINDOW: f64 = 30.0;

fn euler_vs_closed_form(p: &NeuronParams, h: f64, leak_scale: f64) -> Result<f64> {
    let opts = EulerOptions {
        leak_scale,
        ..EulerOptions::new(h, FIG1_WINDOW)
    };
    let euler = integrate_mcn(p, |_| FIG1_X_B, |_| FIG1_X_A, opts);
    // Exact dendritic responses to the constant drive on the Euler grid;
    // the quadrature error is far below the Euler error.
    let n = euler.u.len();
    let v = |x: f64, tau: f64, k: usize| x * (1.0 - (-(k as f64) * h / tau).exp());
    let v_b: Vec<f64> = (0..n).map(|k| v(FIG1_X_B, p.tau_b, k)).collect();
    let v_a: Vec<f64> = (0..n).map(|k| v(FIG1_X_A, p.tau_a, k)).collect();
    let exact = mcn_closed_form_trace(&v_b, &v_a, h, p)?;
    let scale = exact.iter().fold(0.0f64, |m, u| m.max(u.abs()));
    let err = euler
        .u
        .iter()
        .zip(&exact)
        .fold(0.0f64, |m, (u, e)| m.max((u - e).abs()));
    Ok(err / scale)
}

/// Fine-step Euler integration of the MCN against the closed-form soma
/// under constant dendritic drive. `leak_scale ≠ 1` injects a fault.
pub fn theorem1(p: &NeuronParams, h: f64, leak_scale: f64) -> Result<Theorem1Report> {
    let rel_err = euler_vs_closed_form(p, h, leak_scale)?;
    let rel_err_half_step = euler_vs_closed_form(p, h / 2.0, leak_scale)?;
    Ok(Theorem1Report {
        rel_err,
        rel_err_half_step,
        ratio: rel_err / rel_err_half_step,
    })
}

/// Spike counts of two unit-step runs of the single-neuron demonstration.
pub fn fig1_spike_counts() -> (usize, usize) {
    let p = NeuronParams::single_neuron_demo();
    let run = || {
        let opts = EulerOptions {
            spiking: true,
            ..EulerOptions::new(1.0, FIG1_WINDOW)
        };
        integrate_mcn(&p, |_| FIG1_X_B, |_| FIG1_X_A, opts).spike_count()
    };
    (run(), run())
}

// -------------------------------------------------------------- encoding

#[derive(Debug, Clone, Serialize)]
pub struct EncodingReport {
    /// Largest `|count − n p| / sqrt(n p (1 − p))` over neurons with `0 < p < 1`.
    pub max_z: f64,
    /// Neurons whose count is more than three standard deviations off.
    pub sigma_outliers: usize,
    /// Neurons whose count falls in either exact binomial tail of mass
    /// [`TAIL_MASS`]. This is the three-sigma band made exact, which stays
    /// meaningful for neurons that fire a handful of times in total.
    pub tail_outliers: usize,
    /// Spike rate of neurons with `|μ_j − τ| > 0.2`.
    pub far_rate: f64,
}

/// One-sided normal tail beyond three standard deviations.
pub const TAIL_MASS: f64 = 0.00135;

impl EncodingReport {
    /// Every neuron within three standard deviations, taken literally.
    pub fn passed_sigma(&self) -> bool {
        self.sigma_outliers == 0 && self.far_rate < 1e-3
    }

    pub fn passed(&self) -> bool {
        self.tail_outliers == 0 && self.far_rate < 1e-3
    }
}

pub fn encoding_statistics(m: usize, c: f64, tau: f64, windows: usize, steps: usize, seed: u64) -> Result<EncodingReport> {
    let codec = PopulationCodec::new(m, c, seed)?;
    let probs = codec.spike_probabilities(tau)?;
    let mut counts = vec![0usize; m];
    for w in 0..windows {
        let train = codec.encode(tau, DrawKey { stream: w as u64, tau_index: 0 }, steps)?;
        for (j, c) in counts.iter_mut().enumerate() {
            *c += train.neuron_count(j);
        }
    }
    let n = (windows * steps) as f64;
    let mut max_z = 0.0f64;
    let (mut sigma_outliers, mut tail_outliers) = (0, 0);
    let (mut far_spikes, mut far_trials) = (0usize, 0.0);
    for (j, (&count, &p)) in counts.iter().zip(&probs).enumerate() {
        let sd = (n * p * (1.0 - p)).sqrt();
        let dev = (count as f64 - n * p).abs();
        if dev > 3.0 * sd {
            sigma_outliers += 1;
        }
        if p > 0.0 && p < 1.0 {
            let bin = Binomial::new(p, windows as u64 * steps as u64).expect("valid binomial");
            let k = count as u64;
            let upper = if k == 0 { 1.0 } else { bin.sf(k - 1) };
            if bin.cdf(k) < TAIL_MASS || upper < TAIL_MASS {
                tail_outliers += 1;
            }
        } else if count as f64 != n * p {
            tail_outliers += 1;
        }
        if sd > 0.0 {
            max_z = max_z.max(dev / sd);
        }
        if (codec.mu()[j] - tau).abs() > 0.2 {
            far_spikes += count;
            far_trials += n;
        }
    }
    Ok(EncodingReport {
        max_z,
        sigma_outliers,
        tail_outliers,
        far_rate: if far_trials > 0.0 { far_spikes as f64 / far_trials } else { 0.0 },
    })
}

// ------------------------------------------------------------- fractions

#[derive(Debug, Clone, Serialize)]
pub struct FractionReport {
    pub vectors: usize,
    pub violations: usize,
    pub max_endpoint_err: f64,
    pub max_sum_err: f64,
    /// Max `|τ_i − i/N|` after descent on the Wasserstein objective with
    /// the identity quantile function.
    pub descent_err: f64,
    pub descent_iterations: usize,
}

impl FractionReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
            && self.max_endpoint_err < 1e-6
            && self.max_sum_err < 1e-12
            && self.descent_err < 1e-3
    }
}

pub fn fraction_invariants(n: usize, vectors: usize, seed: u64) -> FractionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FractionReport {
        vectors,
        violations: 0,
        max_endpoint_err: 0.0,
        max_sum_err: 0.0,
        descent_err: 0.0,
        descent_iterations: 0,
    };
    for _ in 0..vectors {
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let f = FractionSet::from_logits(&logits);
        if f.tau.windows(2).any(|w| !(w[0] < w[1])) {
            report.violations += 1;
        }
        let ends = f.tau[0].abs().max((f.tau[n] - 1.0).abs());
        report.max_endpoint_err = report.max_endpoint_err.max(ends);
        report.max_sum_err = report.max_sum_err.max((f.p.iter().sum::<f64>() - 1.0).abs());
    }

    let mut logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let uniform_err = |f: &FractionSet| {
        f.tau
            .iter()
            .enumerate()
            .fold(0.0f64, |m, (i, t)| m.max((t - i as f64 / n as f64).abs()))
    };
    let lr = (n * n) as f64;
    let max_iter = 200_000;
    let mut it = 0;
    let mut f = FractionSet::from_logits(&logits);
    while it < max_iter && uniform_err(&f) >= 1e-4 {
        // Identity quantile function: F⁻¹(τ̂) = τ̂.
        let wl = wasserstein_grad_tau(f.interior(), &f.tau_hat);
        let g = fraction_logit_grad(FractionGradMode::SoftmaxChain, &f.p, &wl);
        logits.iter_mut().zip(&g).for_each(|(l, g)| *l -= lr * g);
        f = FractionSet::from_logits(&logits);
        it += 1;
    }
    report.descent_err = uniform_err(&f);
    report.descent_iterations = it;
    report
}

// ---------------------------------------------------- quantile regression

/// Atoms `(value, probability)` of the regression target.
pub const QR_ATOMS: [(f64, f64); 3] = [(0.0, 0.5), (2.0, 0.25), (4.0, 0.25)];

pub fn atom_quantile(atoms: &[(f64, f64)], tau: f64) -> f64 {
    let mut acc = 0.0;
    for &(v, p) in atoms {
        acc += p;
        if tau < acc {
            return v;
        }
    }
    atoms.last().map_or(0.0, |a| a.0)
}

/// Exact minimiser of the expected Huber quantile loss at fraction `tau`.
/// The objective is convex in the estimate, so a ternary search suffices.
pub fn huber_quantile_minimizer(atoms: &[(f64, f64)], tau: f64, epsilon: f64) -> f64 {
    let loss = |theta: f64| -> f64 {
        atoms
            .iter()
            .map(|&(z, p)| {
                let d = z - theta;
                let w = if d < 0.0 { 1.0 - tau } else { tau };
                p * w * huber(d, epsilon) / epsilon
            })
            .sum()
    };
    let lo0 = atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let hi0 = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if loss(a) <= loss(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct QrReport {
    pub tau_hat: Vec<f64>,
    pub learned: Vec<f64>,
    pub quantiles: Vec<f64>,
    pub minimizers: Vec<f64>,
    /// Max |learned − closed-form quantile|.
    pub quantile_err: f64,
    /// Max |learned − Huber minimiser|.
    pub minimizer_err: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct QrSetup {
    pub fusion: FusionMode,
    pub neuron: NeuronParams,
    pub fractions: usize,
    pub epsilon: f64,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl QrSetup {
    pub fn new(fusion: FusionMode, epsilon: f64) -> Self {
        Self {
            fusion,
            neuron: NeuronParams::default(),
            fractions: 8,
            epsilon,
            steps: 20_000,
            batch: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Trains only the quantile head (`w_h`, `W_L`) of a small network on a
/// fixed observation, at fixed uniform fraction midpoints, against samples
/// of [`QR_ATOMS`].
pub fn quantile_regression(setup: &QrSetup) -> Result<QrReport> {
    let net = Network::new(
        NetworkConfig {
            encoder: EncoderSpec::Dense { input: 1, hidden: vec![32] },
            fractions: setup.fractions,
            population: 64,
            receptive_width: 0.05,
            fusion_units: 64,
            hidden: 64,
            actions: 1,
            window: 8,
            fusion: setup.fusion,
            population_gain: 2.5,
            init_gain: 4.0,
        },
        Dynamics::new(setup.neuron),
        setup.seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut params = net.init_params(&mut rng);
    let taus = FractionSet::uniform(setup.fractions).tau_hat;
    let obs = [1.0];
    let adam = AdamConfig {
        lr: setup.lr,
        ..AdamConfig::default()
    };
    let mut m = [Tensor::zeros(params.w_h.dims()), Tensor::zeros(params.w_l.dims())];
    let mut v = m.clone();
    let cdf: Vec<f64> = QR_ATOMS
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a.1;
            Some(*acc)
        })
        .collect();
    let sample = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.gen();
        QR_ATOMS[cdf.iter().position(|&c| u < c).unwrap_or(QR_ATOMS.len() - 1)].0
    };
    let encoder = net.encode_state(&params, &obs)?;
    let stream = 0;
    for step in 1..=setup.steps {
        let tape = net.forward_queries(&params, encoder.clone(), &taus, stream)?;
        let cur: Vec<f64> = tape.queries.iter().map(|q| q.values[0]).collect();
        let targets: Vec<f64> = (0..setup.batch).map(|_| sample(&mut rng)).collect();
        let deltas = td_errors(0.0, &targets, &cur, 1.0, false);
        let (_, g) = huber_quantile_loss_grad(&taus, &deltas, setup.epsilon);
        let value_grads: Vec<Vec<f64>> = g.iter().map(|&x| vec![x]).collect();
        let grads = net.stbp_backward(&params, &tape, &value_grads)?;
        adam_step(&adam, step as u64, &mut params.w_h, &mut m[0], &mut v[0], &grads.w_h)?;
        adam_step(&adam, step as u64, &mut params.w_l, &mut m[1], &mut v[1], &grads.w_l)?;
    }
    let learned: Vec<f64> = net
        .forward_queries(&params, encoder, &taus, stream)?
        .queries
        .iter()
        .map(|q| q.values[0])
        .collect();
    let quantiles: Vec<f64> = taus.iter().map(|&t| atom_quantile(&QR_ATOMS, t)).collect();
    let minimizers: Vec<f64> = taus
        .iter()
        .map(|&t| huber_quantile_minimizer(&QR_ATOMS, t, setup.epsilon))
        .collect();
    let max_err = |target: &[f64]| {
        learned
            .iter()
            .zip(target)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    Ok(QrReport {
        quantile_err: max_err(&quantiles),
        minimizer_err: max_err(&minimizers),
        tau_hat: taus,
        learned,
        quantiles,
        minimizers,
        steps: setup.steps,
    })
}

// ----------------------------------------------------------------- suite

fn record<T: Serialize>(
    check: &'static str,
    passed: bool,
    metric: f64,
    tolerance: f64,
    detail: &T,
    start: Instant,
) -> CheckRecord {
    CheckRecord {
        check,
        passed,
        metric,
        tolerance,
        detail: serde_json::to_value(detail).unwrap_or(serde_json::Value::Null),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Leak multiplier applied when `fault_injection = leak_factor`.
pub const INJECTED_LEAK_SCALE: f64 = 0.999;

/// Runs every check under `config` and returns one record per check.
pub fn run_suite(config: &RunConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();

    let start = Instant::now();
    let leak = match config.fault_injection {
        FaultInjection::None => 1.0,
        FaultInjection::LeakFactor => INJECTED_LEAK_SCALE,
    };
    let t1 = theorem1(&NeuronParams::single_neuron_demo(), 1e-3, leak)?;
    out.push(record("theorem1_closed_form", t1.passed(), t1.rel_err, 1e-3, &t1, start));

    let start = Instant::now();
    let (a, b) = fig1_spike_counts();
    out.push(record(
        "fig1_firing",
        a >= 1 && a == b,
        a as f64,
        1.0,
        &serde_json::json!({ "spikes": [a, b] }),
        start,
    ));

    let start = Instant::now();
    let enc = encoding_statistics(config.population, config.receptive_width, 0.5, 10_000, config.window, config.seed)?;
    out.push(record("encoding_statistics", enc.passed(), enc.tail_outliers as f64, 0.0, &enc, start));

    let start = Instant::now();
    let setup = GradCheckSetup::small(config.neuron_params(), config.surrogate_center, config.mode, config.seed)?;
    let gc: GradCheckReport = verify_gradients(&setup, 1e-4, 1e-4)?;
    let worst = gc
        .groups
        .iter()
        .filter(|g| g.asserted)
        .fold(0.0f64, |m, g| m.max(g.max_rel_err));
    out.push(record("gradient_fd", gc.passed(), worst, 1e-4, &gc, start));

    let start = Instant::now();
    let fr = fraction_invariants(config.fractions, 1000, config.seed);
    out.push(record("fraction_invariants", fr.passed(), fr.descent_err, 1e-3, &fr, start));

    let start = Instant::now();
    let qr = quantile_regression(&QrSetup {
        neuron: config.neuron_params(),
        ..QrSetup::new(config.mode, config.huber_epsilon)
    })?;
    out.push(record(
        "quantile_regression",
        qr.minimizer_err < 0.05,
        qr.minimizer_err,
        0.05,
        &qr,
        start,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_quantiles() {
        assert_eq!(atom_quantile(&QR_ATOMS, 0.1), 0.0);
        assert_eq!(atom_quantile(&QR_ATOMS, 0.6), 2.0);
        assert_eq!(atom_quantile(&QR_ATOMS, 0.9), 4.0);
    }

    #[test]
    fn small_epsilon_minimizer_is_the_quantile() {
        for t in [0.1, 0.3, 0.6, 0.7, 0.8, 0.95] {
            let m = huber_quantile_minimizer(&QR_ATOMS, t, 1e-4);
            assert!((m - atom_quantile(&QR_ATOMS, t)).abs() < 1e-3, "tau {t}: {m}");
        }
    }

    #[test]
    fn huber_minimizer_hand_value() {
        // τ = 0.5, ε = 1, atoms {0, 1} equally likely: symmetric, so 0.5.
        let m = huber_quantile_minimizer(&[(0.0, 0.5), (1.0, 0.5)], 0.5, 1.0);
        assert!((m - 0.5).abs() < 1e-6, "{m}");
    }

    #[test]
    fn theorem1_converges_at_first_order() {
        let r = theorem1(&NeuronParams::single_neuron_demo(), 1e-3, 1.0).unwrap();
        assert!(r.passed(), "{r:?}");
        let bad = theorem1(&NeuronParams::single_neuron_demo(), 1e-3, INJECTED_LEAK_SCALE).unwrap();
        assert!(!bad.passed(), "{bad:?}");
    }

    #[test]
    fn fig1_fires_deterministically() {
        let (a, b) = fig1_spike_counts();
        assert!(a >= 1);
        assert_eq!(a, b);
    }

    #[test]
    fn fraction_descent_reaches_uniform() {
        let r = fraction_invariants(8, 50, 3);
        assert!(r.passed(), "{r:?}");
    }
}
