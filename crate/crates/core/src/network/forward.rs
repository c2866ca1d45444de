use crate::encoding::{cosine_embedding, DrawKey};
use crate::error::{Error, Result};
use crate::neuron::{dendrite_step, soma_update, Dynamics, SpikeTrain};
use crate::tensor::{accumulate_forward, Tensor};

use super::encoder::{encoder_forward, EncoderTape};
use super::fractions::{propose_fractions, q_values, FractionSet, QuantileEstimate};
use super::layers::{run_leaky, run_lif, SpikingTape};
use super::{FusionMode, Network, NetworkParams};

/// State-side fusion activity, shared by every query of one observation.
#[derive(Debug, Clone, PartialEq)]
pub enum BasalTape {
    /// Basal current and dendritic potential, `[T][units]`.
    Mcn { x_b: Vec<Vec<f64>>, v_b: Vec<Vec<f64>> },
    /// Current and potential of the state LI group.
    Li { x_s: Vec<Vec<f64>>, u_s: Vec<Vec<f64>> },
}

impl BasalTape {
    pub fn potential(&self) -> &[Vec<f64>] {
        match self {
            Self::Mcn { v_b, .. } => v_b,
            Self::Li { u_s, .. } => u_s,
        }
    }
}

/// Fraction-side fusion activity for one query.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionTape {
    Mcn {
        x_a: Vec<Vec<f64>>,
        v_a: Vec<Vec<f64>>,
        soma: SpikingTape,
    },
    Li {
        x_e: Vec<Vec<f64>>,
        u_e: Vec<Vec<f64>>,
        fused: Vec<Vec<f64>>,
    },
}

impl FusionTape {
    /// What the quantile head consumes: somatic spikes or the product trace.
    pub fn output(&self) -> &[Vec<f64>] {
        match self {
            Self::Mcn { soma, .. } => &soma.out,
            Self::Li { fused, .. } => fused,
        }
    }
}

/// Everything recorded while evaluating one fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTape {
    pub tau: f64,
    /// Population spikes before the LIF stage (population modes only).
    pub raw: Option<SpikeTrain>,
    /// Apical / embedding-group input rows, `[T][M]`.
    pub embedding: Vec<Vec<f64>>,
    pub fusion: FusionTape,
    pub hidden: SpikingTape,
    /// Quantile value per action.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapeRecord {
    pub encoder: EncoderTape,
    pub basal: BasalTape,
    pub queries: Vec<QueryTape>,
}

impl TapeRecord {
    /// `[queries][actions]`.
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.queries.iter().map(|q| q.values.clone()).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.queries.iter().map(|q| q.tau).collect()
    }

    pub fn steps(&self) -> usize {
        self.encoder.output().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub fractions: FractionSet,
    pub estimate: QuantileEstimate,
    pub tape: TapeRecord,
}

fn check_rows(context: &'static str, rows: &[Vec<f64>], width: usize) -> Result<()> {
    match rows.iter().find(|r| r.len() != width) {
        Some(r) => Err(Error::shape(context, &[width], &[r.len()])),
        None => Ok(()),
    }
}

fn project(w: &Tensor, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|x| {
            let mut out = vec![0.0; w.cols()];
            accumulate_forward(w, x, &mut out);
            out
        })
        .collect()
}

/// Soma of a layer of MCNs from already-integrated dendritic potentials.
fn run_soma(dynamics: &Dynamics, v_b: &[Vec<f64>], v_a: &[Vec<f64>]) -> SpikingTape {
    let n = v_b.first().map_or(0, Vec::len);
    let mut tape = SpikingTape::with_capacity(v_b.len());
    let mut u = vec![0.0; n];
    for (vb, va) in v_b.iter().zip(v_a) {
        let pre = (0..n)
            .map(|i| soma_update(u[i], vb[i], va[i], &dynamics.params, 1.0))
            .collect();
        u = tape.record(dynamics, pre);
    }
    tape
}

fn advance_dendrite(x: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    let n = x.first().map_or(0, Vec::len);
    let mut v = vec![0.0; n];
    x.iter()
        .map(|x| {
            v = v.iter().zip(x).map(|(&v, &x)| dendrite_step(v, x, tau)).collect();
            v.clone()
        })
        .collect()
}

/// MCN layer driven by state spikes on the basal dendrite and fraction
/// spikes on the apical dendrite. Returns the somatic tape.
pub fn mcn_fuse(
    dynamics: &Dynamics,
    o_s: &[Vec<f64>],
    s_tau: &[Vec<f64>],
    w_b: &Tensor,
    w_a: &Tensor,
) -> Result<SpikingTape> {
    check_rows("mcn_fuse basal input", o_s, w_b.rows())?;
    check_rows("mcn_fuse apical input", s_tau, w_a.rows())?;
    if w_b.cols() != w_a.cols() || o_s.len() != s_tau.len() {
        return Err(Error::shape(
            "mcn_fuse",
            &[o_s.len(), w_b.cols()],
            &[s_tau.len(), w_a.cols()],
        ));
    }
    let v_b = advance_dendrite(&project(w_b, o_s), dynamics.params.tau_b);
    let v_a = advance_dendrite(&project(w_a, s_tau), dynamics.params.tau_a);
    Ok(run_soma(dynamics, &v_b, &v_a))
}

/// Two LI groups whose potentials are multiplied step by step.
pub fn li_product_fuse(
    dynamics: &Dynamics,
    o_s: &[Vec<f64>],
    s_tau: &[Vec<f64>],
    w_s: &Tensor,
    w_e: &Tensor,
) -> Result<Vec<Vec<f64>>> {
    check_rows("li_product_fuse state input", o_s, w_s.rows())?;
    check_rows("li_product_fuse embedding input", s_tau, w_e.rows())?;
    if w_s.cols() != w_e.cols() || o_s.len() != s_tau.len() {
        return Err(Error::shape(
            "li_product_fuse",
            &[o_s.len(), w_s.cols()],
            &[s_tau.len(), w_e.cols()],
        ));
    }
    let tau = dynamics.params.tau_l;
    let u_s = run_leaky(&project(w_s, o_s), tau);
    let u_e = run_leaky(&project(w_e, s_tau), tau);
    Ok(product(&u_s, &u_e))
}

fn product(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(a, b)| a.iter().zip(b).map(|(a, b)| a * b).collect())
        .collect()
}

/// Hidden LIF layer and time-averaged linear readout.
pub fn quantile_head(
    dynamics: &Dynamics,
    fused: &[Vec<f64>],
    w_h: &Tensor,
    w_l: &Tensor,
) -> Result<(SpikingTape, Vec<f64>)> {
    check_rows("quantile_head input", fused, w_h.rows())?;
    if w_h.cols() != w_l.rows() {
        return Err(Error::shape("quantile_head", &[w_h.cols()], &[w_l.rows()]));
    }
    let hidden = run_lif(dynamics, &project(w_h, fused));
    let mut values = vec![0.0; w_l.cols()];
    for o in &hidden.out {
        accumulate_forward(w_l, o, &mut values);
    }
    let t = fused.len().max(1) as f64;
    values.iter_mut().for_each(|v| *v /= t);
    Ok((hidden, values))
}

impl Network {
    /// Runs the state encoder on a static observation for `T` steps.
    pub fn encode_state(&self, params: &NetworkParams, obs: &[f64]) -> Result<EncoderTape> {
        encoder_forward(
            &self.config().encoder,
            self.dynamics(),
            &params.encoder,
            obs,
            self.config().window,
        )
    }

    /// Encode, propose fractions, evaluate every midpoint, reduce to Q.
    pub fn full_forward(&self, params: &NetworkParams, obs: &[f64], stream: u64) -> Result<Forward> {
        self.check_params(params)?;
        let encoder = self.encode_state(params, obs)?;
        let fractions = propose_fractions(encoder.output(), &params.w_f)?;
        let tape = self.forward_queries(params, encoder, &fractions.tau_hat, stream)?;
        let values = tape.values();
        let q = q_values(&fractions, &values);
        Ok(Forward {
            fractions,
            estimate: QuantileEstimate { values, q },
            tape,
        })
    }

    /// Evaluates the quantile function at arbitrary fractions, reusing an
    /// encoder tape. Query `i` draws its population spikes from
    /// `DrawKey { stream, tau_index: i }`.
    pub fn forward_queries(
        &self,
        params: &NetworkParams,
        encoder: EncoderTape,
        taus: &[f64],
        stream: u64,
    ) -> Result<TapeRecord> {
        let inputs = taus
            .iter()
            .enumerate()
            .map(|(i, &tau)| self.embed(tau, DrawKey { stream, tau_index: i as u64 }))
            .collect::<Result<Vec<_>>>()?;
        self.run_queries(params, encoder, inputs)
    }

    /// Recomputes the fusion layer and head from a tape's stored inputs.
    pub fn replay(&self, params: &NetworkParams, tape: &TapeRecord) -> Result<TapeRecord> {
        let encoder = self.encode_state(params, &tape.encoder.obs)?;
        let inputs = tape
            .queries
            .iter()
            .map(|q| (q.tau, q.raw.clone(), q.embedding.clone()))
            .collect();
        self.run_queries(params, encoder, inputs)
    }

    fn embed(&self, tau: f64, key: DrawKey) -> Result<(f64, Option<SpikeTrain>, Vec<Vec<f64>>)> {
        let c = self.config();
        if c.fusion.uses_population() {
            let raw = self.codec().encode(tau, key, c.window)?;
            let drive: Vec<Vec<f64>> = (0..c.window)
                .map(|t| raw.row_f64(t).iter().map(|s| s * c.population_gain).collect())
                .collect();
            let rows = run_lif(self.dynamics(), &drive).out;
            Ok((tau, Some(raw), rows))
        } else {
            let e = cosine_embedding(tau, c.population)?;
            Ok((tau, None, vec![e; c.window]))
        }
    }

    fn run_queries(
        &self,
        params: &NetworkParams,
        encoder: EncoderTape,
        inputs: Vec<(f64, Option<SpikeTrain>, Vec<Vec<f64>>)>,
    ) -> Result<TapeRecord> {
        let d = self.dynamics();
        let o_s = encoder.output();
        check_rows("fusion basal input", o_s, params.w_b.rows())?;
        let x_state = project(&params.w_b, o_s);
        let basal = match self.config().fusion {
            FusionMode::McnPopulation => BasalTape::Mcn {
                v_b: advance_dendrite(&x_state, d.params.tau_b),
                x_b: x_state,
            },
            FusionMode::LiPopulation | FusionMode::LiCosine => BasalTape::Li {
                u_s: run_leaky(&x_state, d.params.tau_l),
                x_s: x_state,
            },
        };
        let mut queries = Vec::with_capacity(inputs.len());
        for (tau, raw, embedding) in inputs {
            check_rows("fusion embedding input", &embedding, params.w_a.rows())?;
            let x = project(&params.w_a, &embedding);
            let fusion = match &basal {
                BasalTape::Mcn { v_b, .. } => {
                    let v_a = advance_dendrite(&x, d.params.tau_a);
                    let soma = run_soma(d, v_b, &v_a);
                    FusionTape::Mcn { x_a: x, v_a, soma }
                }
                BasalTape::Li { u_s, .. } => {
                    let u_e = run_leaky(&x, d.params.tau_l);
                    let fused = product(u_s, &u_e);
                    FusionTape::Li { x_e: x, u_e, fused }
                }
            };
            let (hidden, values) = quantile_head(d, fusion.output(), &params.w_h, &params.w_l)?;
            queries.push(QueryTape {
                tau,
                raw,
                embedding,
                fusion,
                hidden,
                values,
            });
        }
        Ok(TapeRecord {
            encoder,
            basal,
            queries,
        })
    }
}
