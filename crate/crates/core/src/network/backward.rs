//! Spatio-temporal backpropagation through a recorded forward pass.
//!
//! Fractions are treated as constants here: quantile-value gradients reach
//! the encoder only through the fusion layer. The fraction proposal is
//! trained separately from the Wasserstein objective.

use crate::error::{Error, Result};
use crate::tensor::{accumulate_input_grad, accumulate_outer, Tensor};

use super::encoder::encoder_backward;
use super::forward::{BasalTape, FusionTape, TapeRecord};
use super::layers::{leaky_backward, lif_backward, spiking_backward};
use super::{GradientSet, Network, NetworkParams};

impl Network {
    /// Gradients of a loss with `dL/dvalues = value_grads` (`[queries][actions]`).
    /// The `w_f` entry of the result is always zero.
    pub fn stbp_backward(
        &self,
        params: &NetworkParams,
        tape: &TapeRecord,
        value_grads: &[Vec<f64>],
    ) -> Result<GradientSet> {
        self.check_params(params)?;
        let actions = params.w_l.cols();
        if value_grads.len() != tape.queries.len() {
            return Err(Error::shape(
                "stbp_backward value gradients",
                &[tape.queries.len(), actions],
                &[value_grads.len()],
            ));
        }
        if let Some(row) = value_grads.iter().find(|r| r.len() != actions) {
            return Err(Error::shape("stbp_backward value gradients", &[actions], &[row.len()]));
        }
        let mut grads = params.zeros_like();
        let soma_grads = self.fusion_output_grads(params, tape, value_grads, Some(&mut grads))?;

        let d = self.dynamics();
        let p = &d.params;
        let steps = tape.steps();
        let units = params.w_b.cols();
        let mut g_basal = vec![vec![0.0; units]; steps];
        for (q, g_fused) in tape.queries.iter().zip(&soma_grads) {
            let g_x = match (&q.fusion, &tape.basal) {
                (FusionTape::Mcn { soma, .. }, BasalTape::Mcn { .. }) => {
                    let g_pre = spiking_backward(d, p.soma_leak(), soma, g_fused);
                    let (kb, ka) = (p.basal_coupling(), p.apical_coupling());
                    for (gb, gp) in g_basal.iter_mut().zip(&g_pre) {
                        gb.iter_mut().zip(gp).for_each(|(b, g)| *b += kb * g);
                    }
                    let g_va: Vec<Vec<f64>> = g_pre
                        .iter()
                        .map(|r| r.iter().map(|g| ka * g).collect())
                        .collect();
                    leaky_backward(&g_va, p.tau_a)
                }
                (FusionTape::Li { u_e, .. }, BasalTape::Li { u_s, .. }) => {
                    let mut g_ue = vec![vec![0.0; units]; steps];
                    for t in 0..steps {
                        for i in 0..units {
                            g_ue[t][i] = g_fused[t][i] * u_s[t][i];
                            g_basal[t][i] += g_fused[t][i] * u_e[t][i];
                        }
                    }
                    leaky_backward(&g_ue, p.tau_l)
                }
                _ => {
                    return Err(Error::InvalidParam(
                        "tape mixes MCN and LI fusion records".into(),
                    ))
                }
            };
            for (e, g) in q.embedding.iter().zip(&g_x) {
                accumulate_outer(&mut grads.w_a, e, g);
            }
        }

        let tau_basal = match tape.basal {
            BasalTape::Mcn { .. } => p.tau_b,
            BasalTape::Li { .. } => p.tau_l,
        };
        let g_xb = leaky_backward(&g_basal, tau_basal);
        let o_s = tape.encoder.output();
        let mut g_os = vec![vec![0.0; params.w_b.rows()]; steps];
        for t in 0..steps {
            accumulate_outer(&mut grads.w_b, &o_s[t], &g_xb[t]);
            accumulate_input_grad(&params.w_b, &g_xb[t], &mut g_os[t]);
        }
        encoder_backward(
            &self.config().encoder,
            d,
            &params.encoder,
            &tape.encoder,
            g_os,
            &mut grads.encoder,
        );
        Ok(grads)
    }

    /// `dL/d(fusion output)` per query, `[queries][T][units]`; also
    /// accumulates the head gradients when `grads` is given.
    pub fn fusion_output_grads(
        &self,
        params: &NetworkParams,
        tape: &TapeRecord,
        value_grads: &[Vec<f64>],
        mut grads: Option<&mut GradientSet>,
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let d = self.dynamics();
        let steps = tape.steps();
        let inv_t = 1.0 / steps.max(1) as f64;
        let units = params.w_h.rows();
        let mut out = Vec::with_capacity(tape.queries.len());
        for (q, gv) in tape.queries.iter().zip(value_grads) {
            let gv: Vec<f64> = gv.iter().map(|g| g * inv_t).collect();
            let mut row = vec![0.0; params.w_l.rows()];
            accumulate_input_grad(&params.w_l, &gv, &mut row);
            let g_hidden = lif_backward(d, &q.hidden, &vec![row; steps]);
            let fused = q.fusion.output();
            let mut g_fused = vec![vec![0.0; units]; steps];
            for t in 0..steps {
                accumulate_input_grad(&params.w_h, &g_hidden[t], &mut g_fused[t]);
            }
            if let Some(g) = grads.as_deref_mut() {
                for t in 0..steps {
                    accumulate_outer(&mut g.w_l, &q.hidden.out[t], &gv);
                    accumulate_outer(&mut g.w_h, &fused[t], &g_hidden[t]);
                }
            }
            out.push(g_fused);
        }
        Ok(out)
    }

    /// Dendritic weight gradients from the closed-form kernels
    /// `k_B·δ_t·σ'(u_t)·m^{T-1-t}·(1/τ_B)(1-1/τ_B)^{t-k}·O^s_k` (and the
    /// apical analogue), given `δ_t = dL/do_t` at the soma. These ignore
    /// the reset path and the soma's own recurrence beyond the `m` power,
    /// so they equal [`Network::stbp_backward`] only for `T = 1`.
    pub fn closed_form_dendrite_grads(
        &self,
        tape: &TapeRecord,
        soma_grads: &[Vec<Vec<f64>>],
    ) -> Result<(Tensor, Tensor)> {
        let p = &self.dynamics().params;
        let o_s = tape.encoder.output();
        let steps = o_s.len();
        let embed = o_s.first().map_or(0, Vec::len);
        let m_pow = |t: usize| p.soma_leak().powi((steps - 1 - t) as i32);
        let mut g_b: Option<Tensor> = None;
        let mut g_a: Option<Tensor> = None;
        for (q, g_o) in tape.queries.iter().zip(soma_grads) {
            let FusionTape::Mcn { soma, .. } = &q.fusion else {
                return Err(Error::InvalidParam("closed-form gradients need an MCN tape".into()));
            };
            let units = soma.out.first().map_or(0, Vec::len);
            let gb = g_b.get_or_insert_with(|| Tensor::zeros(&[embed, units]));
            let ga = g_a.get_or_insert_with(|| Tensor::zeros(&[q.embedding[0].len(), units]));
            for t in 0..steps {
                let base: Vec<f64> = (0..units)
                    .map(|n| g_o[t][n] * soma.surrogate[t][n] * m_pow(t))
                    .collect();
                for k in 0..=t {
                    let kern_b = p.basal_coupling() / p.tau_b
                        * (1.0 - 1.0 / p.tau_b).powi((t - k) as i32);
                    let kern_a = p.apical_coupling() / p.tau_a
                        * (1.0 - 1.0 / p.tau_a).powi((t - k) as i32);
                    let sb: Vec<f64> = base.iter().map(|b| b * kern_b).collect();
                    let sa: Vec<f64> = base.iter().map(|b| b * kern_a).collect();
                    accumulate_outer(gb, &o_s[k], &sb);
                    accumulate_outer(ga, &q.embedding[k], &sa);
                }
            }
        }
        match (g_b, g_a) {
            (Some(b), Some(a)) => Ok((b, a)),
            _ => Err(Error::InvalidParam("tape has no queries".into())),
        }
    }
}
