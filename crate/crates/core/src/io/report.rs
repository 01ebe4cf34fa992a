//! JSON reports.
//!
//! Keys appear in struct declaration order and every float is rounded to nine
//! significant digits before serialization, so identical runs produce
//! byte-identical files.

use serde::Serialize;
use serde_json::{Number, Value};

use crate::analysis::{HeadClassification, HeadMIndex};
use crate::art::LayerIntervention;
use crate::error::Result;
use crate::generation::{GenerationConfig, GenerationTrace, StopReason};
use crate::model::{ModelSpec, TokenId};

pub const REPORT_VERSION: u32 = 1;

/// Rounds to nine significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig9(n.as_f64().expect("f64 number"));
            Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_value).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, round_value(v))).collect())
        }
        other => other,
    }
}

/// Pretty JSON with floats at nine significant digits and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = round_value(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Where the weights came from.
#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Random { seed: u64 },
    File { path: String },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LayerSummary {
    pub layer: usize,
    pub k: usize,
    /// Head indices, ascending m.
    pub ranking: Vec<usize>,
    pub uniform: Vec<usize>,
    pub scattered: Vec<usize>,
    pub local: Vec<usize>,
    /// m-index per head, in head order.
    pub m_index: Vec<f64>,
}

impl From<&HeadClassification> for LayerSummary {
    fn from(c: &HeadClassification) -> Self {
        let mut m = vec![0.0; c.full_ranking.len()];
        for r in &c.full_ranking {
            m[r.head] = r.m;
        }
        Self {
            layer: c.layer,
            k: c.k,
            ranking: c.full_ranking.iter().map(|r| r.head).collect(),
            uniform: c.uniform_heads.clone(),
            scattered: c.scattered_heads.clone(),
            local: c.local_heads.clone(),
            m_index: m,
        }
    }
}

/// Output of the `analyze` command.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AnalysisReport {
    pub report_version: u32,
    pub model: ModelSpec,
    pub weights: WeightSource,
    pub prompt: String,
    pub tokens: Vec<TokenId>,
    pub eps: f64,
    pub k: usize,
    /// One entry per (layer, head), layer-major.
    pub heads: Vec<HeadMIndex>,
    pub layers: Vec<LayerSummary>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub layers: Vec<StepLayer>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StepLayer {
    pub layer: usize,
    pub replaced: Vec<usize>,
    pub classification: LayerSummary,
}

impl From<&LayerIntervention> for StepLayer {
    fn from(li: &LayerIntervention) -> Self {
        Self {
            layer: li.layer,
            replaced: li.replaced.clone(),
            classification: LayerSummary::from(&li.classification),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunMetrics {
    pub prompt_tokens: usize,
    pub generated_tokens: usize,
    pub stop_reason: StopReason,
    pub mean_logprob: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunConfigEcho {
    pub model: ModelSpec,
    pub weights: WeightSource,
    pub prompt: String,
    pub generation: GenerationConfig,
}

/// Output of the `generate` command.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunReport {
    pub report_version: u32,
    pub config: RunConfigEcho,
    /// Per-layer classification of the prompt under the unmodified model.
    pub prompt_layers: Vec<LayerSummary>,
    pub steps: Vec<StepRecord>,
    pub generated_tokens: Vec<TokenId>,
    pub generated_text: String,
    pub metrics: RunMetrics,
}

impl RunReport {
    pub fn new(
        config: RunConfigEcho,
        prompt_layers: Vec<LayerSummary>,
        trace: &GenerationTrace,
        generated_text: String,
    ) -> Self {
        Self {
            report_version: REPORT_VERSION,
            config,
            prompt_layers,
            steps: trace
                .steps
                .iter()
                .map(|s| StepRecord {
                    step: s.step,
                    layers: s.layers.iter().map(StepLayer::from).collect(),
                })
                .collect(),
            generated_tokens: trace.generated.clone(),
            generated_text,
            metrics: RunMetrics {
                prompt_tokens: trace.prompt.len(),
                generated_tokens: trace.generated.len(),
                stop_reason: trace.stop_reason,
                mean_logprob: trace.score,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_rounding() {
        assert_eq!(round_sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig9(2.6), 2.6);
        assert_eq!(round_sig9(123456789.987), 123456790.0);
        assert_eq!(round_sig9(0.0), 0.0);
    }

    #[test]
    fn json_rounds_nested_floats_and_keeps_key_order() {
        #[derive(Serialize)]
        struct S {
            zeta: f64,
            alpha: Vec<f64>,
            n: u32,
        }
        let s = to_json(&S {
            zeta: std::f64::consts::PI,
            alpha: vec![2.0 / 3.0],
            n: 7,
        })
        .unwrap();
        assert_eq!(
            s,
            "{\n  \"zeta\": 3.14159265,\n  \"alpha\": [\n    0.666666667\n  ],\n  \"n\": 7\n}\n"
        );
    }
}
