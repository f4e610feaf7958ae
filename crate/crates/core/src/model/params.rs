use crate::error::{Error, Result};
use crate::model::{FfnKind, ModelConfig};
use crate::numerics::{RngStream, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_attn_out: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    /// `d_model × d_ffn`
    pub w_in: Tensor,
    /// `d_model × d_ffn`, gated FFNs only.
    pub w_up: Option<Tensor>,
    /// Value projection, `d_ffn × d_model`: `W_o` for standard FFNs, `W_d` for gated ones.
    pub w_out: Tensor,
}

/// Configuration plus every parameter tensor of the toy transformer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub layers: Vec<LayerParams>,
    pub lnf_gain: Tensor,
    pub lnf_bias: Tensor,
    /// `d_model × vocab`, untied from the token embedding.
    pub unembedding: Tensor,
}

const INIT_STD: f64 = 0.02;

impl ModelBundle {
    /// Gaussian init (std 0.02, residual projections scaled by `1/√(2·n_layers)`),
    /// unit layer-norm gains, zero biases. Draws come from stream `(config.seed, 0)`
    /// in manifest order.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(config.seed, 0);
        let (d, f, v) = (config.d_model, config.d_ffn, config.vocab_size);
        let resid_std = INIT_STD / (2.0 * config.n_layers as f64).sqrt();
        let mut normal = |shape: &[usize], std: f64| {
            let n = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| rng.next_normal() * std).collect()).expect("shape")
        };
        let token_embedding = normal(&[v, d], INIT_STD);
        let position_embedding = normal(&[config.max_seq, d], INIT_STD);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            let w_q = normal(&[d, d], INIT_STD);
            let w_k = normal(&[d, d], INIT_STD);
            let w_v = normal(&[d, d], INIT_STD);
            let w_attn_out = normal(&[d, d], resid_std);
            let w_in = normal(&[d, f], INIT_STD);
            let w_up = match config.ffn_kind {
                FfnKind::Gated => Some(normal(&[d, f], INIT_STD)),
                FfnKind::Standard => None,
            };
            let w_out = normal(&[f, d], resid_std);
            layers.push(LayerParams {
                ln1_gain: Tensor::full(&[d], 1.0),
                ln1_bias: Tensor::zeros(&[d]),
                w_q,
                w_k,
                w_v,
                w_attn_out,
                ln2_gain: Tensor::full(&[d], 1.0),
                ln2_bias: Tensor::zeros(&[d]),
                w_in,
                w_up,
                w_out,
            });
        }
        let unembedding = normal(&[d, v], INIT_STD);
        Ok(Self {
            config,
            token_embedding,
            position_embedding,
            layers,
            lnf_gain: Tensor::full(&[d], 1.0),
            lnf_bias: Tensor::zeros(&[d]),
            unembedding,
        })
    }

    /// Parameters in manifest order, named by role. Layers are numbered from 1.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("token_embedding".into(), &self.token_embedding),
            ("position_embedding".into(), &self.position_embedding),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = |s: &str| format!("layer{}.{s}", i + 1);
            out.push((p("ln1.gain"), &l.ln1_gain));
            out.push((p("ln1.bias"), &l.ln1_bias));
            out.push((p("attn.w_q"), &l.w_q));
            out.push((p("attn.w_k"), &l.w_k));
            out.push((p("attn.w_v"), &l.w_v));
            out.push((p("attn.w_out"), &l.w_attn_out));
            out.push((p("ln2.gain"), &l.ln2_gain));
            out.push((p("ln2.bias"), &l.ln2_bias));
            out.push((p("ffn.w_in"), &l.w_in));
            if let Some(up) = &l.w_up {
                out.push((p("ffn.w_up"), up));
            }
            out.push((p("ffn.w_out"), &l.w_out));
        }
        out.push(("lnf.gain".into(), &self.lnf_gain));
        out.push(("lnf.bias".into(), &self.lnf_bias));
        out.push(("unembedding".into(), &self.unembedding));
        out
    }

    /// Mutable parameters, same order as [`ModelBundle::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.token_embedding, &mut self.position_embedding];
        for l in &mut self.layers {
            out.push(&mut l.ln1_gain);
            out.push(&mut l.ln1_bias);
            out.push(&mut l.w_q);
            out.push(&mut l.w_k);
            out.push(&mut l.w_v);
            out.push(&mut l.w_attn_out);
            out.push(&mut l.ln2_gain);
            out.push(&mut l.ln2_bias);
            out.push(&mut l.w_in);
            if let Some(up) = &mut l.w_up {
                out.push(up);
            }
            out.push(&mut l.w_out);
        }
        out.push(&mut self.lnf_gain);
        out.push(&mut self.lnf_bias);
        out.push(&mut self.unembedding);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Value projection of a 1-based layer.
    pub fn value_projection(&self, layer: usize) -> Result<&Tensor> {
        self.check_layer(layer)?;
        Ok(&self.layers[layer - 1].w_out)
    }

    pub fn value_projection_mut(&mut self, layer: usize) -> Result<&mut Tensor> {
        self.check_layer(layer)?;
        Ok(&mut self.layers[layer - 1].w_out)
    }

    pub fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.config.n_layers {
            return Err(Error::LayerOutOfRange { layer, n_layers: self.config.n_layers });
        }
        Ok(())
    }
}
