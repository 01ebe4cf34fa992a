//! Attention replacement.
//!
//! Per layer, heads are ranked by m-index. The `k` most uniform heads
//! (index set `I`) have their attention swapped for a target matrix built from
//! the most local heads, and the layer output becomes
//!
//! ```text
//! Σ_{i∈I} A_target · f_i(X)  +  Σ_{i∉I} A_i · f_i(X)
//! ```
//!
//! Each replaced head keeps its own value/output projection `f_i`; only the
//! post-softmax matrix changes.
//!
//! Variants:
//! - `ArtMax`: target is the single head with the largest m-index.
//! - `ArtMean`: target is the entrywise mean of the `k` most local heads.
//! - `ArtInverse`: `I` is the local heads and the target is uniform
//!   (the exact reference by default, see [`InverseTarget`]).
//! - `ArtScattered`: `I` is the uniform heads, target is the mean of the
//!   scattered heads.
//! - `Mask`: zero a share of one category's heads instead of replacing them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, rank_and_classify, uniform_reference, HeadCategory, HeadClassification,
};
use crate::error::{Error, Result};
use crate::model::{layer_heads, mha_additive, LayerAttentions, ModelSpec, WeightStore};
use crate::numerics::{AttentionMatrix, Matrix};

/// Shallow layers touched by an intervention unless configured otherwise.
pub const DEFAULT_SHALLOW_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterventionMode {
    None,
    ArtMax,
    ArtMean,
    ArtInverse,
    ArtScattered,
    Mask,
}

impl InterventionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ArtMax => "art-max",
            Self::ArtMean => "art-mean",
            Self::ArtInverse => "art-inverse",
            Self::ArtScattered => "art-scattered",
            Self::Mask => "mask",
        }
    }

    pub fn is_replacement(self) -> bool {
        matches!(
            self,
            Self::ArtMax | Self::ArtMean | Self::ArtInverse | Self::ArtScattered
        )
    }
}

impl fmt::Display for InterventionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterventionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "none" => Self::None,
            "art-max" => Self::ArtMax,
            "art-mean" => Self::ArtMean,
            "art-inverse" => Self::ArtInverse,
            "art-scattered" => Self::ArtScattered,
            "mask" => Self::Mask,
            other => return Err(format!("unknown intervention mode {other:?}")),
        })
    }
}

/// Number of uniform (and local) heads per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KChoice {
    /// `max(1, ⌊0.1 · N_h⌋)`, capped at `⌊N_h / 2⌋`.
    #[default]
    Auto,
    Fixed(usize),
}

impl fmt::Display for KChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        s.parse()
            .map(Self::Fixed)
            .map_err(|_| format!("k must be \"auto\" or a non-negative integer, got {s:?}"))
    }
}

/// Replacement target used by `ArtInverse`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverseTarget {
    /// The exact uniform reference matrix.
    #[default]
    UniformReference,
    /// Mean of the heads classified as uniform.
    UniformMean,
}

/// Which heads to mask in `Mask` mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub category: HeadCategory,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionConfig {
    pub mode: InterventionMode,
    pub k: KChoice,
    pub shallow_layers: usize,
    pub eps: f64,
    pub inverse_target: InverseTarget,
    pub mask: Option<MaskSpec>,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self {
            mode: InterventionMode::None,
            k: KChoice::Auto,
            shallow_layers: DEFAULT_SHALLOW_LAYERS,
            eps: analysis::DEFAULT_EPS,
            inverse_target: InverseTarget::default(),
            mask: None,
        }
    }
}

impl InterventionConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_mode(mode: InterventionMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn mask(category: HeadCategory, fraction: f64) -> Self {
        Self {
            mode: InterventionMode::Mask,
            mask: Some(MaskSpec { category, fraction }),
            ..Self::default()
        }
    }

    pub fn k(mut self, k: KChoice) -> Self {
        self.k = k;
        self
    }

    pub fn shallow_layers(mut self, n: usize) -> Self {
        self.shallow_layers = n;
        self
    }

    /// True when a forward pass would actually modify some layer.
    pub fn is_active(&self) -> bool {
        self.mode != InterventionMode::None && self.shallow_layers > 0
    }

    /// Validates against a model spec and resolves `k`.
    pub fn resolve(&self, spec: &ModelSpec) -> Result<ResolvedIntervention> {
        if self.shallow_layers > spec.n_layers {
            return Err(Error::InvalidConfig(format!(
                "shallow_layers ({}) exceeds n_layers ({})",
                self.shallow_layers, spec.n_layers
            )));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        let k = resolve_k(spec.n_heads, self.k)?;
        match self.mode {
            InterventionMode::Mask => match self.mask {
                Some(m) if (0.0..=1.0).contains(&m.fraction) => {}
                Some(m) => {
                    return Err(Error::InvalidConfig(format!(
                        "mask fraction {} is outside [0, 1]",
                        m.fraction
                    )))
                }
                None => {
                    return Err(Error::InvalidConfig(
                        "mask mode needs a category and fraction".into(),
                    ))
                }
            },
            InterventionMode::ArtScattered if k > 0 && spec.n_heads == 2 * k => {
                return Err(Error::InvalidConfig(format!(
                    "art-scattered needs at least one scattered head, but n_heads = 2k = {}",
                    spec.n_heads
                )));
            }
            _ => {}
        }
        Ok(ResolvedIntervention {
            config: self.clone(),
            k,
        })
    }
}

/// An [`InterventionConfig`] checked against a model, with `k` made concrete.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedIntervention {
    pub config: InterventionConfig,
    pub k: usize,
}

/// Resolves the per-layer head count `k`.
///
/// `Auto` gives `max(1, ⌊0.1 · N_h⌋)`, capped at `⌊N_h / 2⌋` so a single-head
/// model resolves to 0. Explicit values pass through when `2k ≤ N_h`.
pub fn resolve_k(n_heads: usize, requested: KChoice) -> Result<usize> {
    if n_heads == 0 {
        return Err(Error::InvalidSpec("n_heads must be >= 1".into()));
    }
    match requested {
        KChoice::Auto => Ok((n_heads / 10).max(1).min(n_heads / 2)),
        KChoice::Fixed(k) if 2 * k > n_heads => Err(Error::KTooLarge { k, n_heads }),
        KChoice::Fixed(k) => Ok(k),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    Max,
    Mean,
    ScatteredMean,
    UniformRef,
    UniformMean,
}

/// Attention matrix substituted into the replaced heads.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAttention {
    pub matrix: AttentionMatrix,
    pub source: TargetSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalVariant {
    Max,
    Mean,
}

/// Target built from the local heads: the max-m head itself, or the mean of
/// all `k` local heads.
pub fn target_local(
    classification: &HeadClassification,
    attns: &LayerAttentions,
    variant: LocalVariant,
) -> Result<TargetAttention> {
    if classification.k == 0 {
        return Err(Error::InvalidConfig("target attention needs k >= 1".into()));
    }
    match variant {
        LocalVariant::Max => {
            let head = *classification.local_heads.last().expect("k >= 1");
            Ok(TargetAttention {
                matrix: attns.heads[head].clone(),
                source: TargetSource::Max,
            })
        }
        LocalVariant::Mean => Ok(TargetAttention {
            matrix: mean_of(attns, &classification.local_heads)?,
            source: TargetSource::Mean,
        }),
    }
}

fn mean_of(attns: &LayerAttentions, heads: &[usize]) -> Result<AttentionMatrix> {
    let t = attns.seq_len();
    let mut sum = Matrix::zeros(t, t);
    for &h in heads {
        sum.add_assign(attns.heads[h].as_matrix())?;
    }
    let n = heads.len() as f64;
    AttentionMatrix::new(Matrix::from_fn(t, t, |i, j| sum[(i, j)] / n))
}

/// What an intervention did to one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerIntervention {
    pub layer: usize,
    pub classification: HeadClassification,
    /// Heads whose attention was replaced (or masked), ascending.
    pub replaced: Vec<usize>,
}

/// Applies a resolved intervention to one layer's attention matrices.
///
/// Returns the post-intervention matrices and a record of the classification
/// and touched heads. Mode `None` returns the input unchanged and no record.
pub fn intervene(
    attns: &LayerAttentions,
    cfg: &ResolvedIntervention,
) -> Result<(LayerAttentions, Option<LayerIntervention>)> {
    let mode = cfg.config.mode;
    if mode == InterventionMode::None {
        return Ok((attns.clone(), None));
    }
    let classification = rank_and_classify(attns, cfg.k, cfg.config.eps)?;
    let (target, mut replaced): (Option<AttentionMatrix>, Vec<usize>) = match mode {
        InterventionMode::None => unreachable!(),
        _ if cfg.k == 0 && mode.is_replacement() => (None, Vec::new()),
        InterventionMode::ArtMax | InterventionMode::ArtMean => {
            let variant = if mode == InterventionMode::ArtMax {
                LocalVariant::Max
            } else {
                LocalVariant::Mean
            };
            let t = target_local(&classification, attns, variant)?;
            (Some(t.matrix), classification.uniform_heads.clone())
        }
        InterventionMode::ArtInverse => {
            let t = match cfg.config.inverse_target {
                InverseTarget::UniformReference => uniform_reference(attns.seq_len())?,
                InverseTarget::UniformMean => mean_of(attns, &classification.uniform_heads)?,
            };
            (Some(t), classification.local_heads.clone())
        }
        InterventionMode::ArtScattered => {
            let t = mean_of(attns, &classification.scattered_heads)?;
            (Some(t), classification.uniform_heads.clone())
        }
        InterventionMode::Mask => {
            let spec = cfg.config.mask.expect("validated by resolve");
            let heads = analysis::heads_to_mask(&classification, spec.category, spec.fraction);
            (None, heads)
        }
    };
    replaced.sort_unstable();
    let out = match (mode, target) {
        (InterventionMode::Mask, _) => analysis::mask_heads(attns, &replaced)?,
        (_, Some(target)) => {
            let mut out = attns.clone();
            for &h in &replaced {
                out.heads[h] = target.clone();
            }
            out
        }
        (_, None) => attns.clone(),
    };
    Ok((
        out,
        Some(LayerIntervention {
            layer: attns.layer,
            classification,
            replaced,
        }),
    ))
}

/// Result of [`art_mha`].
#[derive(Debug, Clone)]
pub struct ArtOutput {
    pub output: Matrix,
    /// Pre-intervention attention matrices.
    pub original: LayerAttentions,
    /// Post-intervention attention matrices.
    pub attentions: LayerAttentions,
    pub record: Option<LayerIntervention>,
}

/// Multi-head attention of `layer` on `x` with the configured replacement.
///
/// The config is validated before any computation. The shallow-layer limit is
/// not consulted here; see [`crate::model::model_forward`] for gating.
pub fn art_mha(
    x: &Matrix,
    layer: usize,
    w: &WeightStore,
    cfg: &InterventionConfig,
) -> Result<ArtOutput> {
    let resolved = cfg.resolve(&w.spec)?;
    let (original, values) = layer_heads(x, layer, w)?;
    let (attentions, record) = intervene(&original, &resolved)?;
    let output = mha_additive(&attentions, &values)?;
    Ok(ArtOutput {
        output,
        original,
        attentions,
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_random, mha_standard};
    use crate::rng::SplitMix64;

    #[test]
    fn resolve_k_examples() {
        assert_eq!(resolve_k(32, KChoice::Auto).unwrap(), 3);
        assert_eq!(resolve_k(8, KChoice::Auto).unwrap(), 1);
        assert_eq!(resolve_k(1, KChoice::Auto).unwrap(), 0);
        assert_eq!(resolve_k(40, KChoice::Auto).unwrap(), 4);
        assert!(matches!(
            resolve_k(8, KChoice::Fixed(5)),
            Err(Error::KTooLarge { k: 5, n_heads: 8 })
        ));
        assert_eq!(resolve_k(8, KChoice::Fixed(4)).unwrap(), 4);
        assert_eq!(resolve_k(8, KChoice::Fixed(0)).unwrap(), 0);
    }

    #[test]
    fn kchoice_parse() {
        assert_eq!("auto".parse::<KChoice>().unwrap(), KChoice::Auto);
        assert_eq!("3".parse::<KChoice>().unwrap(), KChoice::Fixed(3));
        assert!("-1".parse::<KChoice>().is_err());
    }

    #[test]
    fn config_validation() {
        let spec = ModelSpec::new(2, 2, 8, 8, 5, 8).unwrap();
        let too_deep = InterventionConfig::with_mode(InterventionMode::ArtMax).shallow_layers(3);
        assert!(too_deep.resolve(&spec).is_err());
        let scattered = InterventionConfig::with_mode(InterventionMode::ArtScattered);
        assert!(scattered.resolve(&spec).is_err());
        let mut mask = InterventionConfig::mask(HeadCategory::Local, 1.5);
        assert!(mask.resolve(&spec).is_err());
        mask.mask = None;
        assert!(mask.resolve(&spec).is_err());
    }

    fn setup() -> (WeightStore, Matrix) {
        let spec = ModelSpec::new(2, 8, 32, 16, 9, 16).unwrap();
        let w = init_random(&spec, 2024).unwrap();
        let mut rng = SplitMix64::new(5);
        let x = Matrix::from_fn(6, 32, |_, _| rng.next_gaussian());
        (w, x)
    }

    #[test]
    fn k_zero_matches_standard() {
        let (w, x) = setup();
        for mode in [
            InterventionMode::ArtMax,
            InterventionMode::ArtMean,
            InterventionMode::ArtInverse,
            InterventionMode::ArtScattered,
        ] {
            let cfg = InterventionConfig::with_mode(mode).k(KChoice::Fixed(0));
            let out = art_mha(&x, 0, &w, &cfg).unwrap();
            assert!(out.record.unwrap().replaced.is_empty());
            let std = mha_standard(&x, 0, &w).unwrap();
            assert!(out.output.max_abs_diff(&std) <= 1e-12);
        }
    }

    #[test]
    fn max_and_mean_coincide_for_k_one() {
        let (w, x) = setup();
        let a = art_mha(
            &x,
            1,
            &w,
            &InterventionConfig::with_mode(InterventionMode::ArtMax),
        )
        .unwrap();
        let b = art_mha(
            &x,
            1,
            &w,
            &InterventionConfig::with_mode(InterventionMode::ArtMean),
        )
        .unwrap();
        assert_eq!(a.output, b.output);
        assert_eq!(a.attentions, b.attentions);
    }

    #[test]
    fn art_max_copies_max_head_bitwise() {
        let (w, x) = setup();
        let out = art_mha(
            &x,
            0,
            &w,
            &InterventionConfig::with_mode(InterventionMode::ArtMax),
        )
        .unwrap();
        let rec = out.record.unwrap();
        let donor = *rec.classification.local_heads.last().unwrap();
        assert_eq!(rec.replaced, rec.classification.uniform_heads);
        for h in 0..8 {
            if rec.replaced.contains(&h) {
                assert_eq!(out.attentions.heads[h], out.original.heads[donor]);
            } else {
                assert_eq!(out.attentions.heads[h], out.original.heads[h]);
            }
        }
    }

    #[test]
    fn mean_target_is_stochastic() {
        let (w, x) = setup();
        let cfg = InterventionConfig::with_mode(InterventionMode::ArtMean).k(KChoice::Fixed(2));
        let out = art_mha(&x, 0, &w, &cfg).unwrap();
        let rec = out.record.unwrap();
        let t = target_local(&rec.classification, &out.original, LocalVariant::Mean).unwrap();
        t.matrix.check_stochastic(1e-9).unwrap();
        assert_eq!(rec.replaced.len(), 2);
    }

    #[test]
    fn mean_of_identical_locals_equals_either() {
        let u = uniform_reference(3).unwrap();
        let l = AttentionMatrix::new(Matrix::from_rows(&[
            &[1.0, 0.0, 0.0],
            &[0.1, 0.9, 0.0],
            &[0.05, 0.05, 0.9],
        ]))
        .unwrap();
        let attns = LayerAttentions {
            layer: 0,
            heads: vec![u.clone(), l.clone(), u, l.clone()],
        };
        let c = rank_and_classify(&attns, 2, 1e-12).unwrap();
        let t = target_local(&c, &attns, LocalVariant::Mean).unwrap();
        assert!(t.matrix.as_matrix().max_abs_diff(l.as_matrix()) < 1e-15);
        let mut c0 = c.clone();
        c0.k = 0;
        assert!(target_local(&c0, &attns, LocalVariant::Max).is_err());
    }

    #[test]
    fn inverse_replaces_local_heads_with_uniform_reference() {
        let (w, x) = setup();
        let out = art_mha(
            &x,
            0,
            &w,
            &InterventionConfig::with_mode(InterventionMode::ArtInverse),
        )
        .unwrap();
        let rec = out.record.unwrap();
        assert_eq!(rec.replaced, rec.classification.local_heads);
        let u = uniform_reference(6).unwrap();
        for &h in &rec.replaced {
            assert_eq!(out.attentions.heads[h], u);
        }
    }

    #[test]
    fn scattered_target_is_mean_of_scattered() {
        let (w, x) = setup();
        let out = art_mha(
            &x,
            0,
            &w,
            &InterventionConfig::with_mode(InterventionMode::ArtScattered),
        )
        .unwrap();
        let rec = out.record.unwrap();
        let expected = mean_of(&out.original, &rec.classification.scattered_heads).unwrap();
        for &h in &rec.replaced {
            assert_eq!(out.attentions.heads[h], expected);
        }
        expected.check_stochastic(1e-9).unwrap();
    }

    #[test]
    fn mask_mode_zeroes_selected_heads() {
        let (w, x) = setup();
        let cfg = InterventionConfig::mask(HeadCategory::Local, 1.0);
        let out = art_mha(&x, 0, &w, &cfg).unwrap();
        let rec = out.record.unwrap();
        assert_eq!(rec.replaced, rec.classification.local_heads);
        for &h in &rec.replaced {
            assert_eq!(out.attentions.heads[h], AttentionMatrix::zeros(6));
        }
    }

    #[test]
    fn mode_none_is_untouched() {
        let (w, x) = setup();
        let out = art_mha(&x, 0, &w, &InterventionConfig::none()).unwrap();
        assert!(out.record.is_none());
        assert_eq!(out.attentions, out.original);
    }
}
