//! Decoder-only toy transformer: weights, per-head attention, multi-head
//! attention in summation and additive form, pre-norm layers and the full
//! forward pass.
//!
//! The residual wiring of one layer is
//!
//! ```text
//! O   = MHA(LN(H))
//! H'  = FFN(LN(O + H)) + O + H
//! ```
//!
//! and multi-head attention is evaluated in its additive form
//! `Σ_h A_h · f_h(X)` with `f_h(X) = X · W_v,h · W_o,h`, which is where
//! interventions substitute attention matrices. [`mha_standard`] keeps the
//! per-head `softmax(Q Kᵀ/√d_h) V W_o` route as an independent reference.
//!
//! There is no KV cache: every call recomputes all `T × T` attention
//! matrices, which the per-step head classification needs anyway.

use serde::{Deserialize, Serialize};

use crate::art::{self, InterventionConfig, LayerIntervention, ResolvedIntervention};
use crate::error::{Error, Result};
use crate::numerics::{
    causal_row_softmax, gelu_matrix, layer_norm, matmul, matmul_transposed, AttentionMatrix, Matrix,
};
use crate::rng::SplitMix64;

pub type TokenId = u32;

/// Epsilon used by every layer norm in the model.
pub const LN_EPS: f64 = 1e-5;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
}

impl ModelSpec {
    /// Builds a spec with `d_head = d_model / n_heads` and validates it.
    pub fn new(
        n_layers: usize,
        n_heads: usize,
        d_model: usize,
        d_ff: usize,
        vocab_size: usize,
        max_seq_len: usize,
    ) -> Result<Self> {
        if n_heads == 0 {
            return Err(Error::InvalidSpec("n_heads must be >= 1".into()));
        }
        let spec = Self {
            n_layers,
            n_heads,
            d_model,
            d_head: d_model / n_heads,
            d_ff,
            vocab_size,
            max_seq_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The toy architecture used throughout tests and examples:
    /// 4 layers, 8 heads, d = 64, d_ff = 256, byte vocabulary, 64 positions.
    pub fn toy() -> Self {
        Self::new(4, 8, 64, 256, crate::io::tokenizer::VOCAB_SIZE, 64).expect("toy spec is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_head", self.d_head),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidSpec(format!("{name} must be >= 1")));
            }
        }
        if self.max_seq_len < 2 {
            return Err(Error::InvalidSpec(format!(
                "max_seq_len must be >= 2, got {}",
                self.max_seq_len
            )));
        }
        if self.n_heads * self.d_head != self.d_model {
            return Err(Error::InvalidSpec(format!(
                "d_model ({}) != n_heads ({}) * d_head ({})",
                self.d_model, self.n_heads, self.d_head
            )));
        }
        Ok(())
    }
}

/// Gain and bias of one layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormWeights {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl NormWeights {
    pub fn identity(d: usize) -> Self {
        Self {
            gain: vec![1.0; d],
            bias: vec![0.0; d],
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        layer_norm(x, &self.gain, &self.bias, LN_EPS)
    }
}

/// Projections of one attention head. `w_q`, `w_k`, `w_v` are `d × d_h`;
/// `w_o` is `d_h × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: NormWeights,
    pub heads: Vec<HeadWeights>,
    pub ffn_norm: NormWeights,
    /// `d × d_ff`
    pub ffn_up: Matrix,
    /// `d_ff × d`
    pub ffn_down: Matrix,
}

/// All parameters of the model. Immutable once built; share it by reference
/// across concurrent generations.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub spec: ModelSpec,
    /// `vocab × d`
    pub token_embedding: Matrix,
    /// `max_seq_len × d`, learned absolute positions.
    pub position_embedding: Matrix,
    pub layers: Vec<LayerWeights>,
    pub final_norm: NormWeights,
    /// `d × vocab`
    pub unembedding: Matrix,
}

impl WeightStore {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Checks every tensor shape against the spec and that all entries are finite.
    pub fn validate(&self) -> Result<()> {
        let s = &self.spec;
        s.validate()?;
        let check = |name: &str, m: &Matrix, shape: (usize, usize)| -> Result<()> {
            if m.shape() != shape {
                return Err(Error::InvalidSpec(format!(
                    "{name} has shape {:?}, expected {:?}",
                    m.shape(),
                    shape
                )));
            }
            if !m.is_finite() {
                return Err(Error::NonFinite("weight tensor"));
            }
            Ok(())
        };
        let check_norm = |name: &str, n: &NormWeights| -> Result<()> {
            if n.gain.len() != s.d_model || n.bias.len() != s.d_model {
                return Err(Error::InvalidSpec(format!(
                    "{name} has length {}/{}, expected {}",
                    n.gain.len(),
                    n.bias.len(),
                    s.d_model
                )));
            }
            if n.gain.iter().chain(&n.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("norm weights"));
            }
            Ok(())
        };
        check(
            "token_embedding",
            &self.token_embedding,
            (s.vocab_size, s.d_model),
        )?;
        check(
            "position_embedding",
            &self.position_embedding,
            (s.max_seq_len, s.d_model),
        )?;
        if self.layers.len() != s.n_layers {
            return Err(Error::InvalidSpec(format!(
                "{} layers present, spec says {}",
                self.layers.len(),
                s.n_layers
            )));
        }
        for layer in &self.layers {
            check_norm("attn_norm", &layer.attn_norm)?;
            check_norm("ffn_norm", &layer.ffn_norm)?;
            if layer.heads.len() != s.n_heads {
                return Err(Error::InvalidSpec(format!(
                    "{} heads present, spec says {}",
                    layer.heads.len(),
                    s.n_heads
                )));
            }
            for head in &layer.heads {
                check("w_q", &head.w_q, (s.d_model, s.d_head))?;
                check("w_k", &head.w_k, (s.d_model, s.d_head))?;
                check("w_v", &head.w_v, (s.d_model, s.d_head))?;
                check("w_o", &head.w_o, (s.d_head, s.d_model))?;
            }
            check("ffn_up", &layer.ffn_up, (s.d_model, s.d_ff))?;
            check("ffn_down", &layer.ffn_down, (s.d_ff, s.d_model))?;
        }
        check_norm("final_norm", &self.final_norm)?;
        check("unembedding", &self.unembedding, (s.d_model, s.vocab_size))?;
        Ok(())
    }

    fn layer(&self, layer: usize) -> Result<&LayerWeights> {
        self.layers.get(layer).ok_or(Error::IndexOutOfRange {
            what: "layer",
            index: layer,
            bound: self.layers.len(),
        })
    }

    fn head(&self, layer: usize, head: usize) -> Result<&HeadWeights> {
        let lw = self.layer(layer)?;
        lw.heads.get(head).ok_or(Error::IndexOutOfRange {
            what: "head",
            index: head,
            bound: lw.heads.len(),
        })
    }
}

/// Deterministic pseudo-random weights.
///
/// Tensors are drawn in the same order the weight file stores them. Every
/// matrix entry is `N(0, 1) / √d_model`; norm gains are 1 and biases 0.
pub fn init_random(spec: &ModelSpec, seed: u64) -> Result<WeightStore> {
    spec.validate()?;
    let mut rng = SplitMix64::new(seed);
    let scale = 1.0 / (spec.d_model as f64).sqrt();
    let mut gauss =
        |rows: usize, cols: usize| Matrix::from_fn(rows, cols, |_, _| rng.next_gaussian() * scale);
    let d = spec.d_model;
    let token_embedding = gauss(spec.vocab_size, d);
    let position_embedding = gauss(spec.max_seq_len, d);
    let mut layers = Vec::with_capacity(spec.n_layers);
    for _ in 0..spec.n_layers {
        let heads = (0..spec.n_heads)
            .map(|_| HeadWeights {
                w_q: gauss(d, spec.d_head),
                w_k: gauss(d, spec.d_head),
                w_v: gauss(d, spec.d_head),
                w_o: gauss(spec.d_head, d),
            })
            .collect();
        let ffn_up = gauss(d, spec.d_ff);
        let ffn_down = gauss(spec.d_ff, d);
        layers.push(LayerWeights {
            attn_norm: NormWeights::identity(d),
            heads,
            ffn_norm: NormWeights::identity(d),
            ffn_up,
            ffn_down,
        });
    }
    let unembedding = gauss(d, spec.vocab_size);
    Ok(WeightStore {
        spec: *spec,
        token_embedding,
        position_embedding,
        layers,
        final_norm: NormWeights::identity(d),
        unembedding,
    })
}

/// Attention matrices of every head in one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerAttentions {
    pub layer: usize,
    pub heads: Vec<AttentionMatrix>,
}

impl LayerAttentions {
    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    /// Sequence length, or 0 when there are no heads.
    pub fn seq_len(&self) -> usize {
        self.heads.first().map_or(0, AttentionMatrix::size)
    }
}

/// Attention matrix `A_h = causal_softmax(Q Kᵀ / √d_h)` and value path
/// `f_h(x) = x W_v W_o` for one head.
pub fn head_attention(
    x: &Matrix,
    layer: usize,
    head: usize,
    w: &WeightStore,
) -> Result<(AttentionMatrix, Matrix)> {
    let hw = w.head(layer, head)?;
    check_input(x, w)?;
    let q = matmul(x, &hw.w_q)?;
    let k = matmul(x, &hw.w_k)?;
    let scores = matmul_transposed(&q, &k)?.scale(1.0 / (w.spec.d_head as f64).sqrt());
    let attn = causal_row_softmax(&scores)?;
    let value = matmul(&matmul(x, &hw.w_v)?, &hw.w_o)?;
    Ok((attn, value))
}

/// Attention matrices and value paths of every head in `layer`.
pub fn layer_heads(
    x: &Matrix,
    layer: usize,
    w: &WeightStore,
) -> Result<(LayerAttentions, Vec<Matrix>)> {
    let n = w.layer(layer)?.heads.len();
    let mut heads = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for h in 0..n {
        let (a, f) = head_attention(x, layer, h, w)?;
        heads.push(a);
        values.push(f);
    }
    Ok((LayerAttentions { layer, heads }, values))
}

/// Multi-head attention as the per-head sum `Σ_h softmax(Q_h K_hᵀ/√d_h) V_h W_o,h`.
pub fn mha_standard(x: &Matrix, layer: usize, w: &WeightStore) -> Result<Matrix> {
    let lw = w.layer(layer)?;
    check_input(x, w)?;
    let scale = 1.0 / (w.spec.d_head as f64).sqrt();
    let mut out = Matrix::zeros(x.rows(), w.spec.d_model);
    for hw in &lw.heads {
        let q = matmul(x, &hw.w_q)?;
        let k = matmul(x, &hw.w_k)?;
        let v = matmul(x, &hw.w_v)?;
        let attn = causal_row_softmax(&matmul(&q, &k.transpose())?.scale(scale))?;
        let head_out = matmul(&matmul(attn.as_matrix(), &v)?, &hw.w_o)?;
        out.add_assign(&head_out)?;
    }
    Ok(out)
}

/// Multi-head attention in additive form `Σ_h A_h · f_h`.
pub fn mha_additive(attns: &LayerAttentions, head_values: &[Matrix]) -> Result<Matrix> {
    if attns.heads.len() != head_values.len() {
        return Err(Error::LengthMismatch {
            what: "head values",
            expected: attns.heads.len(),
            actual: head_values.len(),
        });
    }
    let first = head_values
        .first()
        .ok_or(Error::EmptyInput("mha_additive"))?;
    let mut out = Matrix::zeros(first.rows(), first.cols());
    for (a, f) in attns.heads.iter().zip(head_values) {
        if a.size() != f.rows() || f.cols() != first.cols() {
            return Err(Error::ShapeMismatch {
                op: "mha_additive",
                left: a.as_matrix().shape(),
                right: f.shape(),
            });
        }
        out.add_assign(&matmul(a.as_matrix(), f)?)?;
    }
    Ok(out)
}

/// Output of one decoder layer.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub hidden: Matrix,
    /// Attention matrices after any intervention.
    pub attentions: LayerAttentions,
    pub intervention: Option<LayerIntervention>,
}

/// One pre-norm decoder layer. When `intervention` is given it is applied to
/// this layer unconditionally; shallow-layer gating is the caller's job.
pub fn decoder_layer_forward(
    h: &Matrix,
    layer: usize,
    w: &WeightStore,
    intervention: Option<&InterventionConfig>,
) -> Result<LayerOutput> {
    let resolved = intervention.map(|cfg| cfg.resolve(&w.spec)).transpose()?;
    layer_forward(h, layer, w, resolved.as_ref())
}

fn layer_forward(
    h: &Matrix,
    layer: usize,
    w: &WeightStore,
    intervention: Option<&ResolvedIntervention>,
) -> Result<LayerOutput> {
    let lw = w.layer(layer)?;
    let normed = lw.attn_norm.apply(h)?;
    let (attns, values) = layer_heads(&normed, layer, w)?;
    let (attentions, record) = match intervention {
        Some(cfg) => {
            let (a, r) = art::intervene(&attns, cfg)?;
            (a, r)
        }
        None => (attns, None),
    };
    let o = mha_additive(&attentions, &values)?;
    let residual = o.add(h)?;
    let ffn_in = lw.ffn_norm.apply(&residual)?;
    let ffn = matmul(&gelu_matrix(&matmul(&ffn_in, &lw.ffn_up)?), &lw.ffn_down)?;
    let hidden = ffn.add(&residual)?;
    Ok(LayerOutput {
        hidden,
        attentions,
        intervention: record,
    })
}

/// Result of a full forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `T × vocab`
    pub logits: Matrix,
    pub attentions: Vec<LayerAttentions>,
    /// One record per layer the intervention touched.
    pub interventions: Vec<LayerIntervention>,
}

/// Full forward pass over `tokens`. The intervention, when present and
/// active, applies to layers `0..shallow_layers` only.
pub fn model_forward(
    tokens: &[TokenId],
    w: &WeightStore,
    intervention: Option<&InterventionConfig>,
) -> Result<ForwardPass> {
    let (hidden, attentions, interventions) = forward_hidden(tokens, w, intervention)?;
    let logits = matmul(&hidden, &w.unembedding)?;
    Ok(ForwardPass {
        logits,
        attentions,
        interventions,
    })
}

/// Logits of the final position only, plus per-layer intervention records.
pub(crate) fn last_logits(
    tokens: &[TokenId],
    w: &WeightStore,
    intervention: Option<&InterventionConfig>,
) -> Result<(Vec<f64>, Vec<LayerIntervention>)> {
    let (hidden, _, interventions) = forward_hidden(tokens, w, intervention)?;
    let last = Matrix::from_vec(1, hidden.cols(), hidden.row(hidden.rows() - 1).to_vec())?;
    let logits = matmul(&last, &w.unembedding)?.into_data();
    Ok((logits, interventions))
}

fn forward_hidden(
    tokens: &[TokenId],
    w: &WeightStore,
    intervention: Option<&InterventionConfig>,
) -> Result<(Matrix, Vec<LayerAttentions>, Vec<LayerIntervention>)> {
    let spec = &w.spec;
    if tokens.is_empty() {
        return Err(Error::EmptyInput("model_forward"));
    }
    if tokens.len() > spec.max_seq_len {
        return Err(Error::InvalidGeneration(format!(
            "sequence length {} exceeds max_seq_len {}",
            tokens.len(),
            spec.max_seq_len
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= spec.vocab_size) {
        return Err(Error::IndexOutOfRange {
            what: "token",
            index: bad as usize,
            bound: spec.vocab_size,
        });
    }
    let resolved = match intervention {
        Some(cfg) if cfg.is_active() => Some(cfg.resolve(spec)?),
        _ => None,
    };

    let mut h = Matrix::from_fn(tokens.len(), spec.d_model, |t, c| {
        w.token_embedding[(tokens[t] as usize, c)] + w.position_embedding[(t, c)]
    });
    let mut attentions = Vec::with_capacity(spec.n_layers);
    let mut records = Vec::new();
    for layer in 0..spec.n_layers {
        let gated = resolved
            .as_ref()
            .filter(|r| layer < r.config.shallow_layers);
        let out = layer_forward(&h, layer, w, gated)?;
        h = out.hidden;
        attentions.push(out.attentions);
        records.extend(out.intervention);
    }
    let hidden = w.final_norm.apply(&h)?;
    Ok((hidden, attentions, records))
}

fn check_input(x: &Matrix, w: &WeightStore) -> Result<()> {
    if x.cols() != w.spec.d_model {
        return Err(Error::ShapeMismatch {
            op: "attention input",
            left: x.shape(),
            right: (x.rows(), w.spec.d_model),
        });
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("attention input"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::uniform_reference;

    fn small_spec(n_heads: usize) -> ModelSpec {
        ModelSpec::new(2, n_heads, 8, 16, 11, 16).unwrap()
    }

    fn random_input(t: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = SplitMix64::new(seed);
        Matrix::from_fn(t, d, |_, _| rng.next_gaussian())
    }

    #[test]
    fn spec_rejects_indivisible_dims() {
        let err = ModelSpec {
            n_layers: 1,
            n_heads: 3,
            d_model: 8,
            d_head: 2,
            d_ff: 4,
            vocab_size: 5,
            max_seq_len: 4,
        }
        .validate()
        .unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
        assert!(ModelSpec::new(1, 3, 8, 4, 5, 4).is_err());
        assert!(ModelSpec::new(1, 2, 8, 4, 5, 1).is_err());
    }

    #[test]
    fn init_random_is_deterministic() {
        let spec = small_spec(2);
        let a = init_random(&spec, 42).unwrap();
        let b = init_random(&spec, 42).unwrap();
        assert_eq!(a, b);
        let c = init_random(&spec, 43).unwrap();
        assert_ne!(a.token_embedding, c.token_embedding);
        a.validate().unwrap();
    }

    #[test]
    fn single_token_attends_to_itself() {
        let spec = small_spec(2);
        let w = init_random(&spec, 1).unwrap();
        let x = random_input(1, spec.d_model, 9);
        for h in 0..spec.n_heads {
            let (a, _) = head_attention(&x, 0, h, &w).unwrap();
            assert_eq!(a.as_matrix(), &Matrix::from_rows(&[&[1.0]]));
        }
    }

    #[test]
    fn zero_query_weights_give_uniform_reference() {
        let spec = small_spec(2);
        let mut w = init_random(&spec, 1).unwrap();
        w.layers[1].heads[0].w_q = Matrix::zeros(spec.d_model, spec.d_head);
        let x = random_input(5, spec.d_model, 2);
        let (a, _) = head_attention(&x, 1, 0, &w).unwrap();
        assert!(
            a.as_matrix()
                .max_abs_diff(uniform_reference(5).unwrap().as_matrix())
                < 1e-15
        );
    }

    #[test]
    fn head_attention_rows_are_stochastic() {
        let spec = small_spec(2);
        let w = init_random(&spec, 5).unwrap();
        let x = random_input(4, spec.d_model, 6);
        for h in 0..2 {
            head_attention(&x, 0, h, &w)
                .unwrap()
                .0
                .check_stochastic(1e-9)
                .unwrap();
        }
    }

    #[test]
    fn head_attention_bad_indices() {
        let spec = small_spec(2);
        let w = init_random(&spec, 5).unwrap();
        let x = random_input(3, spec.d_model, 6);
        assert!(matches!(
            head_attention(&x, 9, 0, &w),
            Err(Error::IndexOutOfRange { what: "layer", .. })
        ));
        assert!(matches!(
            head_attention(&x, 0, 2, &w),
            Err(Error::IndexOutOfRange { what: "head", .. })
        ));
    }

    #[test]
    fn single_head_mha_is_attention_times_value() {
        let spec = small_spec(1);
        let w = init_random(&spec, 3).unwrap();
        let x = random_input(4, spec.d_model, 4);
        let (a, f) = head_attention(&x, 0, 0, &w).unwrap();
        let expected = matmul(a.as_matrix(), &f).unwrap();
        assert!(mha_standard(&x, 0, &w).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn standard_matches_additive_small_instance() {
        let spec = ModelSpec::new(1, 2, 8, 8, 7, 8).unwrap();
        let w = init_random(&spec, 11).unwrap();
        let x = random_input(3, 8, 12);
        let (attns, values) = layer_heads(&x, 0, &w).unwrap();
        let std = mha_standard(&x, 0, &w).unwrap();
        let add = mha_additive(&attns, &values).unwrap();
        assert!(std.max_abs_diff(&add) <= 1e-9);
    }

    #[test]
    fn zero_value_weights_zero_output() {
        let spec = small_spec(2);
        let mut w = init_random(&spec, 3).unwrap();
        for h in &mut w.layers[0].heads {
            h.w_v = Matrix::zeros(spec.d_model, spec.d_head);
        }
        let x = random_input(3, spec.d_model, 4);
        assert!(mha_standard(&x, 0, &w)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn additive_zeroed_head_contributes_nothing() {
        let spec = small_spec(2);
        let w = init_random(&spec, 3).unwrap();
        let x = random_input(3, spec.d_model, 4);
        let (mut attns, values) = layer_heads(&x, 0, &w).unwrap();
        attns.heads[1] = AttentionMatrix::zeros(3);
        let only_first = matmul(attns.heads[0].as_matrix(), &values[0]).unwrap();
        assert_eq!(mha_additive(&attns, &values).unwrap(), only_first);
    }

    #[test]
    fn additive_count_mismatch_errors() {
        let attns = LayerAttentions {
            layer: 0,
            heads: vec![AttentionMatrix::zeros(2)],
        };
        assert!(mha_additive(&attns, &[]).is_err());
        let bad = vec![Matrix::zeros(3, 4)];
        assert!(matches!(
            mha_additive(&attns, &bad),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_ffn_gives_attention_plus_residual() {
        let spec = small_spec(2);
        let mut w = init_random(&spec, 8).unwrap();
        w.layers[0].ffn_down = Matrix::zeros(spec.d_ff, spec.d_model);
        let h = random_input(4, spec.d_model, 1);
        let out = decoder_layer_forward(&h, 0, &w, None).unwrap();
        let normed = w.layers[0].attn_norm.apply(&h).unwrap();
        let o = mha_standard(&normed, 0, &w).unwrap();
        assert!(out.hidden.max_abs_diff(&o.add(&h).unwrap()) < 1e-12);
    }

    #[test]
    fn layer_forward_is_deterministic() {
        let spec = small_spec(2);
        let w = init_random(&spec, 8).unwrap();
        let h = random_input(4, spec.d_model, 1);
        let a = decoder_layer_forward(&h, 1, &w, None).unwrap();
        let b = decoder_layer_forward(&h, 1, &w, None).unwrap();
        assert_eq!(a.hidden, b.hidden);
    }

    #[test]
    fn forward_shapes_and_errors() {
        let spec = small_spec(2);
        let w = init_random(&spec, 8).unwrap();
        let out = model_forward(&[1, 2, 3], &w, None).unwrap();
        assert_eq!(out.logits.shape(), (3, spec.vocab_size));
        assert_eq!(out.attentions.len(), spec.n_layers);
        assert!(out.interventions.is_empty());
        assert!(matches!(
            model_forward(&[11], &w, None),
            Err(Error::IndexOutOfRange { what: "token", .. })
        ));
        assert!(model_forward(&[0; 17], &w, None).is_err());
        assert!(model_forward(&[], &w, None).is_err());
    }

    #[test]
    fn last_logits_match_full_forward() {
        let spec = small_spec(2);
        let w = init_random(&spec, 8).unwrap();
        let toks = [4, 1, 7, 7, 2];
        let full = model_forward(&toks, &w, None).unwrap();
        let (last, _) = last_logits(&toks, &w, None).unwrap();
        assert_eq!(full.logits.row(4), last.as_slice());
    }
}
