//! LIF state encoders: a dense stack for vector observations and a
//! convolutional stack for image observations. The observation is
//! presented unchanged at every step of the window.

use crate::error::{Error, Result};
use crate::neuron::Dynamics;
use crate::tensor::{accumulate_forward, accumulate_input_grad, accumulate_outer, Tensor};

use super::layers::{lif_backward, run_lif, SpikingTape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvLayer {
    /// 8×8-32 stride 4, 4×4-64 stride 2, 3×3-64 stride 1.
    pub fn atari_stack() -> Vec<ConvLayer> {
        vec![
            ConvLayer { out_channels: 32, kernel: 8, stride: 4 },
            ConvLayer { out_channels: 64, kernel: 4, stride: 2 },
            ConvLayer { out_channels: 64, kernel: 3, stride: 1 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderSpec {
    /// Fully connected LIF layers on a flat observation.
    Dense { input: usize, hidden: Vec<usize> },
    /// Unpadded convolutions over a `[channels × height × width]` image.
    Conv {
        channels: usize,
        height: usize,
        width: usize,
        layers: Vec<ConvLayer>,
    },
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    ci: usize,
    hi: usize,
    wi: usize,
    co: usize,
    ho: usize,
    wo: usize,
    k: usize,
    s: usize,
}

impl ConvGeom {
    fn out_len(&self) -> usize {
        self.co * self.ho * self.wo
    }

    fn w_index(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.ci + ci) * self.k + ky) * self.k + kx
    }

    fn x_index(&self, ci: usize, y: usize, x: usize) -> usize {
        (ci * self.hi + y) * self.wi + x
    }
}

impl EncoderSpec {
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Dense { input, .. } => *input,
            Self::Conv { channels, height, width, .. } => channels * height * width,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Dense { input, hidden } => hidden.last().copied().unwrap_or(*input),
            Self::Conv { .. } => self.conv_geometry().last().map_or(0, ConvGeom::out_len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Dense { input, hidden } => {
                if *input == 0 || hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::InvalidParam(format!(
                        "dense encoder needs a non-empty input and non-empty layers, got {input} → {hidden:?}"
                    )));
                }
            }
            Self::Conv { channels, height, width, layers } => {
                if layers.is_empty() || *channels == 0 {
                    return Err(Error::InvalidParam("conv encoder needs at least one layer".into()));
                }
                let (mut h, mut w) = (*height, *width);
                for (i, l) in layers.iter().enumerate() {
                    if l.kernel == 0 || l.stride == 0 || l.out_channels == 0 || l.kernel > h || l.kernel > w {
                        return Err(Error::InvalidParam(format!(
                            "conv layer {i} ({}×{} stride {}) does not fit a {h}×{w} input",
                            l.kernel, l.kernel, l.stride
                        )));
                    }
                    h = (h - l.kernel) / l.stride + 1;
                    w = (w - l.kernel) / l.stride + 1;
                }
            }
        }
        Ok(())
    }

    fn conv_geometry(&self) -> Vec<ConvGeom> {
        let Self::Conv { channels, height, width, layers } = self else {
            return Vec::new();
        };
        let (mut c, mut h, mut w) = (*channels, *height, *width);
        layers
            .iter()
            .map(|l| {
                let g = ConvGeom {
                    ci: c,
                    hi: h,
                    wi: w,
                    co: l.out_channels,
                    ho: (h - l.kernel) / l.stride + 1,
                    wo: (w - l.kernel) / l.stride + 1,
                    k: l.kernel,
                    s: l.stride,
                };
                (c, h, w) = (g.co, g.ho, g.wo);
                g
            })
            .collect()
    }

    pub fn weight_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            Self::Dense { input, hidden } => {
                let mut prev = *input;
                hidden
                    .iter()
                    .map(|&h| {
                        let s = vec![prev, h];
                        prev = h;
                        s
                    })
                    .collect()
            }
            Self::Conv { .. } => self
                .conv_geometry()
                .iter()
                .map(|g| vec![g.co, g.ci, g.k, g.k])
                .collect(),
        }
    }

    pub fn fan_ins(&self) -> Vec<usize> {
        match self {
            Self::Dense { .. } => self.weight_shapes().iter().map(|s| s[0]).collect(),
            Self::Conv { .. } => self.conv_geometry().iter().map(|g| g.ci * g.k * g.k).collect(),
        }
    }
}

/// Encoder activity over the window.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTape {
    pub obs: Vec<f64>,
    pub layers: Vec<SpikingTape>,
}

impl EncoderTape {
    /// The state embedding spike trains `O^s`, `[T][embed]`.
    pub fn output(&self) -> &[Vec<f64>] {
        &self.layers.last().expect("encoder has at least one layer").out
    }
}

fn conv_forward(g: &ConvGeom, w: &Tensor, x: &[f64], out: &mut [f64]) {
    let wd = w.data();
    for co in 0..g.co {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let mut acc = 0.0;
                for ci in 0..g.ci {
                    for ky in 0..g.k {
                        let xi = g.x_index(ci, oy * g.s + ky, ox * g.s);
                        let wi = g.w_index(co, ci, ky, 0);
                        for kx in 0..g.k {
                            acc += wd[wi + kx] * x[xi + kx];
                        }
                    }
                }
                out[(co * g.ho + oy) * g.wo + ox] += acc;
            }
        }
    }
}

fn conv_backward(
    g: &ConvGeom,
    w: &Tensor,
    x: &[f64],
    g_out: &[f64],
    grad_w: &mut Tensor,
    mut g_in: Option<&mut [f64]>,
) {
    let wd = w.data();
    let gw = grad_w.data_mut();
    for co in 0..g.co {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let go = g_out[(co * g.ho + oy) * g.wo + ox];
                if go == 0.0 {
                    continue;
                }
                for ci in 0..g.ci {
                    for ky in 0..g.k {
                        let xi = g.x_index(ci, oy * g.s + ky, ox * g.s);
                        let wi = g.w_index(co, ci, ky, 0);
                        for kx in 0..g.k {
                            gw[wi + kx] += go * x[xi + kx];
                        }
                        if let Some(gi) = g_in.as_deref_mut() {
                            for kx in 0..g.k {
                                gi[xi + kx] += go * wd[wi + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn encoder_forward(
    spec: &EncoderSpec,
    dynamics: &Dynamics,
    weights: &[Tensor],
    obs: &[f64],
    steps: usize,
) -> Result<EncoderTape> {
    if obs.len() != spec.input_dim() {
        let expected = match spec {
            EncoderSpec::Dense { input, .. } => vec![*input],
            EncoderSpec::Conv { channels, height, width, .. } => vec![*channels, *height, *width],
        };
        return Err(Error::shape("encode_state observation", &expected, &[obs.len()]));
    }
    if let Some(i) = obs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i, value: obs[i] });
    }
    let geoms = spec.conv_geometry();
    let mut layers: Vec<SpikingTape> = Vec::with_capacity(weights.len());
    for (l, w) in weights.iter().enumerate() {
        let current = |x: &[f64]| -> Vec<f64> {
            match spec {
                EncoderSpec::Dense { .. } => {
                    let mut out = vec![0.0; w.cols()];
                    accumulate_forward(w, x, &mut out);
                    out
                }
                EncoderSpec::Conv { .. } => {
                    let mut out = vec![0.0; geoms[l].out_len()];
                    conv_forward(&geoms[l], w, x, &mut out);
                    out
                }
            }
        };
        let currents: Vec<Vec<f64>> = if l == 0 {
            vec![current(obs); steps]
        } else {
            layers[l - 1].out.iter().map(|x| current(x)).collect()
        };
        layers.push(run_lif(dynamics, &currents));
    }
    Ok(EncoderTape {
        obs: obs.to_vec(),
        layers,
    })
}

/// Accumulates encoder weight gradients from `dL/dO^s_t`.
pub(crate) fn encoder_backward(
    spec: &EncoderSpec,
    dynamics: &Dynamics,
    weights: &[Tensor],
    tape: &EncoderTape,
    g_output: Vec<Vec<f64>>,
    grads: &mut [Tensor],
) {
    let geoms = spec.conv_geometry();
    let mut g_out = g_output;
    for l in (0..weights.len()).rev() {
        let g_cur = lif_backward(dynamics, &tape.layers[l], &g_out);
        let w = &weights[l];
        if l == 0 {
            // Static input: the weight gradient only needs Σ_t g_cur[t].
            let mut total = vec![0.0; g_cur.first().map_or(0, Vec::len)];
            for g in &g_cur {
                total.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            match spec {
                EncoderSpec::Dense { .. } => accumulate_outer(&mut grads[0], &tape.obs, &total),
                EncoderSpec::Conv { .. } => {
                    conv_backward(&geoms[0], w, &tape.obs, &total, &mut grads[0], None)
                }
            }
            break;
        }
        let inputs = &tape.layers[l - 1].out;
        let mut g_prev = vec![vec![0.0; inputs[0].len()]; inputs.len()];
        for t in 0..inputs.len() {
            match spec {
                EncoderSpec::Dense { .. } => {
                    accumulate_outer(&mut grads[l], &inputs[t], &g_cur[t]);
                    accumulate_input_grad(w, &g_cur[t], &mut g_prev[t]);
                }
                EncoderSpec::Conv { .. } => conv_backward(
                    &geoms[l],
                    w,
                    &inputs[t],
                    &g_cur[t],
                    &mut grads[l],
                    Some(&mut g_prev[t]),
                ),
            }
        }
        g_out = g_prev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atari_geometry() {
        let spec = EncoderSpec::Conv {
            channels: 4,
            height: 84,
            width: 84,
            layers: ConvLayer::atari_stack(),
        };
        spec.validate().unwrap();
        assert_eq!(
            spec.weight_shapes(),
            vec![vec![32, 4, 8, 8], vec![64, 32, 4, 4], vec![64, 64, 3, 3]]
        );
        // 84 → 20 → 9 → 7
        assert_eq!(spec.output_dim(), 64 * 7 * 7);
        assert_eq!(spec.fan_ins(), vec![4 * 64, 32 * 16, 64 * 9]);
    }

    #[test]
    fn conv_rejects_too_small_input() {
        let spec = EncoderSpec::Conv {
            channels: 1,
            height: 10,
            width: 10,
            layers: ConvLayer::atari_stack(),
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn conv_forward_matches_direct_sum() {
        let g = ConvGeom { ci: 2, hi: 5, wi: 5, co: 1, ho: 2, wo: 2, k: 3, s: 2 };
        let w = Tensor::from_vec(&[1, 2, 3, 3], (0..18).map(|i| i as f64 * 0.1).collect()).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let mut out = vec![0.0; 4];
        conv_forward(&g, &w, &x, &mut out);
        let mut expect = 0.0;
        for ci in 0..2 {
            for ky in 0..3 {
                for kx in 0..3 {
                    expect += w.data()[(ci * 3 + ky) * 3 + kx] * x[(ci * 5 + 2 + ky) * 5 + 2 + kx];
                }
            }
        }
        assert!((out[3] - expect).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_reports_dims() {
        let spec = EncoderSpec::Dense { input: 4, hidden: vec![3] };
        let w = vec![Tensor::zeros(&[4, 3])];
        let err = encoder_forward(&spec, &Dynamics::default(), &w, &[0.0; 5], 8).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err}");
        assert!(err.to_string().contains("[4]") && err.to_string().contains("[5]"));
    }
}
