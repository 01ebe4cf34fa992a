//! Attention-pattern taxonomy: the uniform reference, the m-index, per-layer
//! head ranking into uniform / scattered / local, and head masking.
//!
//! The m-index of a causal attention matrix `A` of size `T` is the mean, over
//! the `T(T+1)/2` lower-triangular entries, of `max(Â/U, U/Â)` where `U` is
//! the uniform reference (row `i`, 1-based, holds `1/i`) and `Â = max(A, ε)`.
//! It equals 1 exactly for `A = U` and grows as attention concentrates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::art::InterventionConfig;
use crate::error::{Error, Result};
use crate::generation::{run_suite, AnswerChecker, GenerationConfig};
use crate::model::{LayerAttentions, TokenId, WeightStore};
use crate::numerics::{AttentionMatrix, Matrix};

/// Default entry floor applied before taking ratios in [`m_index`].
pub const DEFAULT_EPS: f64 = 1e-12;

/// Tolerance used to validate m-index inputs.
const INPUT_TOL: f64 = 1e-6;

/// Uniform causal attention of size `t`: row `i` (0-based) holds `i + 1`
/// entries equal to `1 / (i + 1)`.
pub fn uniform_reference(t: usize) -> Result<AttentionMatrix> {
    if t == 0 {
        return Err(Error::EmptyInput("uniform_reference"));
    }
    let m = Matrix::from_fn(t, t, |i, j| if j <= i { 1.0 / (i + 1) as f64 } else { 0.0 });
    AttentionMatrix::new(m)
}

/// m-index of one attention matrix. Rejects inputs that are not causal and
/// row-stochastic within `1e-6`.
pub fn m_index(a: &AttentionMatrix, eps: f64) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let t = a.size();
    if t == 0 {
        return Err(Error::EmptyInput("m_index"));
    }
    a.check_stochastic(INPUT_TOL)?;
    let mut sum = 0.0;
    for i in 0..t {
        let u = 1.0 / (i + 1) as f64;
        for j in 0..=i {
            let floored = a.get(i, j).max(eps);
            let ratio = floored / u;
            sum += ratio.max(u / floored);
        }
    }
    let count = (t * (t + 1) / 2) as f64;
    Ok(sum / count)
}

/// m-index of one head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadMIndex {
    pub layer: usize,
    pub head: usize,
    pub m: f64,
}

/// The three attention patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadCategory {
    Uniform,
    Scattered,
    Local,
}

impl HeadCategory {
    pub const ALL: [HeadCategory; 3] = [Self::Uniform, Self::Scattered, Self::Local];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Scattered => "scattered",
            Self::Local => "local",
        }
    }
}

impl fmt::Display for HeadCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "scattered" => Ok(Self::Scattered),
            "local" => Ok(Self::Local),
            other => Err(format!(
                "unknown category {other:?} (expected uniform, scattered or local)"
            )),
        }
    }
}

/// Partition of one layer's heads by m-index rank.
///
/// `full_ranking` is ascending in m with ties broken by head index.
/// `uniform_heads` are the first `k` of the ranking, `local_heads` the last
/// `k`, both listed in ranking order, so `local_heads.last()` is the head with
/// the largest m-index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadClassification {
    pub layer: usize,
    pub k: usize,
    pub uniform_heads: Vec<usize>,
    pub scattered_heads: Vec<usize>,
    pub local_heads: Vec<usize>,
    pub full_ranking: Vec<HeadMIndex>,
}

impl HeadClassification {
    pub fn category_of(&self, head: usize) -> Option<HeadCategory> {
        if self.uniform_heads.contains(&head) {
            Some(HeadCategory::Uniform)
        } else if self.local_heads.contains(&head) {
            Some(HeadCategory::Local)
        } else if self.scattered_heads.contains(&head) {
            Some(HeadCategory::Scattered)
        } else {
            None
        }
    }

    pub fn heads_in(&self, category: HeadCategory) -> &[usize] {
        match category {
            HeadCategory::Uniform => &self.uniform_heads,
            HeadCategory::Scattered => &self.scattered_heads,
            HeadCategory::Local => &self.local_heads,
        }
    }

    /// m-index of `head`.
    pub fn m_of(&self, head: usize) -> Option<f64> {
        self.full_ranking
            .iter()
            .find(|r| r.head == head)
            .map(|r| r.m)
    }
}

/// m-indices of every head in a layer, in head order.
pub fn layer_m_indices(attns: &LayerAttentions, eps: f64) -> Result<Vec<HeadMIndex>> {
    attns
        .heads
        .iter()
        .enumerate()
        .map(|(head, a)| {
            Ok(HeadMIndex {
                layer: attns.layer,
                head,
                m: m_index(a, eps)?,
            })
        })
        .collect()
}

/// Ranks heads by m-index and splits them into `k` uniform, `k` local and the
/// remaining scattered heads.
pub fn rank_and_classify(
    attns: &LayerAttentions,
    k: usize,
    eps: f64,
) -> Result<HeadClassification> {
    let n = attns.n_heads();
    if 2 * k > n {
        return Err(Error::KTooLarge { k, n_heads: n });
    }
    let mut ranking = layer_m_indices(attns, eps)?;
    ranking.sort_by(|a, b| a.m.total_cmp(&b.m).then(a.head.cmp(&b.head)));
    let order: Vec<usize> = ranking.iter().map(|r| r.head).collect();
    Ok(HeadClassification {
        layer: attns.layer,
        k,
        uniform_heads: order[..k].to_vec(),
        scattered_heads: order[k..n - k].to_vec(),
        local_heads: order[n - k..].to_vec(),
        full_ranking: ranking,
    })
}

/// Replaces the selected heads' attention with the zero matrix, which removes
/// their term from the additive multi-head sum.
pub fn mask_heads(attns: &LayerAttentions, heads: &[usize]) -> Result<LayerAttentions> {
    let n = attns.n_heads();
    if let Some(&bad) = heads.iter().find(|&&h| h >= n) {
        return Err(Error::IndexOutOfRange {
            what: "head",
            index: bad,
            bound: n,
        });
    }
    let t = attns.seq_len();
    let mut out = attns.clone();
    for &h in heads {
        out.heads[h] = AttentionMatrix::zeros(t);
    }
    Ok(out)
}

/// Heads of `category` to mask for a given `fraction`, most extreme first.
///
/// Uniform heads are taken from the smallest m upwards, local heads from the
/// largest m downwards, scattered heads in ascending m. The count is
/// `⌊fraction · |category|⌋`.
pub fn heads_to_mask(c: &HeadClassification, category: HeadCategory, fraction: f64) -> Vec<usize> {
    let pool: Vec<usize> = match category {
        HeadCategory::Uniform => c.uniform_heads.clone(),
        HeadCategory::Scattered => c.scattered_heads.clone(),
        HeadCategory::Local => c.local_heads.iter().rev().copied().collect(),
    };
    // The small slack keeps products like 0.29 * 100 from flooring one short.
    let count = ((fraction * pool.len() as f64) + 1e-9).floor() as usize;
    pool[..count.min(pool.len())].to_vec()
}

/// One point of a masking sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub category: HeadCategory,
    pub fraction: f64,
    pub metric: f64,
    pub n_prompts: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub const HEADER: &'static str = "category,fraction,metric,n_prompts";

    /// CSV with header `category,fraction,metric,n_prompts` and metrics to six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{}\n",
                r.category, r.fraction, r.metric, r.n_prompts
            ));
        }
        out
    }
}

/// Masks growing shares of each category's heads in the shallow layers and
/// records suite accuracy at every (category, fraction) point.
///
/// `base` supplies decoding settings plus the `k`, shallow-layer count and
/// epsilon used for classification; its intervention mode is ignored.
pub fn mask_sweep<C: AnswerChecker + ?Sized>(
    w: &WeightStore,
    prompts: &[Vec<TokenId>],
    checker: &C,
    categories: &[HeadCategory],
    fractions: &[f64],
    base: &GenerationConfig,
) -> Result<SweepTable> {
    if prompts.is_empty() {
        return Err(Error::EmptyInput("mask_sweep dataset"));
    }
    if let Some(bad) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidConfig(format!(
            "mask fraction {bad} is outside [0, 1]"
        )));
    }
    let mut table = SweepTable::default();
    for &category in categories {
        for &fraction in fractions {
            let mut cfg = base.clone();
            cfg.intervention = InterventionConfig {
                mask: Some(crate::art::MaskSpec { category, fraction }),
                mode: crate::art::InterventionMode::Mask,
                ..base.intervention.clone()
            };
            let report = run_suite(w, prompts, checker, &cfg)?;
            table.rows.push(SweepRow {
                category,
                fraction,
                metric: report.accuracy,
                n_prompts: report.n_prompts,
            });
        }
    }
    Ok(table)
}
