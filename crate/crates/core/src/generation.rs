//! Autoregressive decoding with shallow-layer interventions.
//!
//! Every step re-encodes prompt plus generated tokens with a full forward
//! pass, so head classification is recomputed on the whole growing sequence.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::art::{InterventionConfig, LayerIntervention};
use crate::error::{Error, Result};
use crate::model::{last_logits, TokenId, WeightStore};
use crate::numerics::log_softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Greedy,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub max_tokens: usize,
    pub strategy: Strategy,
    pub beam_width: usize,
    pub stop_tokens: BTreeSet<TokenId>,
    pub intervention: InterventionConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_tokens: 32,
            strategy: Strategy::Greedy,
            beam_width: 1,
            stop_tokens: BTreeSet::from([crate::io::tokenizer::EOS]),
            intervention: InterventionConfig::none(),
        }
    }
}

impl GenerationConfig {
    pub fn greedy(max_tokens: usize) -> Self {
        Self {
            max_tokens,
            ..Self::default()
        }
    }

    pub fn beam(max_tokens: usize, beam_width: usize) -> Self {
        Self {
            max_tokens,
            strategy: Strategy::Beam,
            beam_width,
            ..Self::default()
        }
    }

    pub fn with_intervention(mut self, intervention: InterventionConfig) -> Self {
        self.intervention = intervention;
        self
    }

    fn validate(&self, prompt: &[TokenId], w: &WeightStore) -> Result<()> {
        if prompt.is_empty() {
            return Err(Error::InvalidGeneration("prompt is empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidGeneration("max_tokens must be >= 1".into()));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidGeneration("beam_width must be >= 1".into()));
        }
        let limit = w.spec.max_seq_len;
        if prompt.len() + self.max_tokens > limit {
            return Err(Error::InvalidGeneration(format!(
                "prompt too long: {} prompt tokens + {} new tokens exceeds max_seq_len {}",
                prompt.len(),
                self.max_tokens,
                limit
            )));
        }
        if self.intervention.is_active() {
            self.intervention.resolve(&w.spec)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StopToken,
    MaxTokens,
}

/// Intervention records for one decoding step, one per shallow layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSnapshot {
    pub step: usize,
    pub layers: Vec<LayerIntervention>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTrace {
    pub prompt: Vec<TokenId>,
    pub generated: Vec<TokenId>,
    /// Empty unless the intervention is active.
    pub steps: Vec<StepSnapshot>,
    pub stop_reason: StopReason,
    /// Sum of generated-token log-probabilities divided by their count.
    pub score: f64,
}

/// Tokens ranked by logit, descending, ties to the smaller id.
fn ranked_tokens(logits: &[f64], n: usize) -> Vec<TokenId> {
    let mut ids: Vec<usize> = (0..logits.len()).collect();
    ids.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    ids.truncate(n);
    ids.into_iter().map(|i| i as TokenId).collect()
}

fn intervention_for(cfg: &GenerationConfig) -> Option<&InterventionConfig> {
    cfg.intervention.is_active().then_some(&cfg.intervention)
}

/// Greedy decoding: argmax of the last-position logits each step.
pub fn greedy_decode(
    prompt: &[TokenId],
    w: &WeightStore,
    cfg: &GenerationConfig,
) -> Result<GenerationTrace> {
    cfg.validate(prompt, w)?;
    let intervention = intervention_for(cfg);
    let mut tokens = prompt.to_vec();
    let mut generated = Vec::with_capacity(cfg.max_tokens);
    let mut steps = Vec::new();
    let mut logprob_sum = 0.0;
    let mut stop_reason = StopReason::MaxTokens;
    for step in 0..cfg.max_tokens {
        let (logits, records) = last_logits(&tokens, w, intervention)?;
        if intervention.is_some() {
            steps.push(StepSnapshot {
                step,
                layers: records,
            });
        }
        let next = ranked_tokens(&logits, 1)[0];
        logprob_sum += log_softmax(&logits)[next as usize];
        tokens.push(next);
        generated.push(next);
        if cfg.stop_tokens.contains(&next) {
            stop_reason = StopReason::StopToken;
            break;
        }
    }
    let score = logprob_sum / generated.len() as f64;
    Ok(GenerationTrace {
        prompt: prompt.to_vec(),
        generated,
        steps,
        stop_reason,
        score,
    })
}

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<TokenId>,
    logprob_sum: f64,
}

impl Hypothesis {
    fn score(&self) -> f64 {
        self.logprob_sum / self.tokens.len() as f64
    }
}

/// Best first: higher normalized score, then lexicographically smaller tokens.
fn hypothesis_order(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    b.score()
        .total_cmp(&a.score())
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Length-normalized beam search.
///
/// Each live beam proposes its `beam_width` highest-logit continuations; the
/// best `beam_width` candidates overall survive. Candidates ending in a stop
/// token retire to the finished pool. The result is the best hypothesis among
/// finished and still-live beams.
pub fn beam_decode(
    prompt: &[TokenId],
    w: &WeightStore,
    cfg: &GenerationConfig,
) -> Result<GenerationTrace> {
    cfg.validate(prompt, w)?;
    let intervention = intervention_for(cfg);
    let width = cfg.beam_width;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        logprob_sum: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..cfg.max_tokens {
        let mut candidates = Vec::with_capacity(live.len() * width);
        for hyp in &live {
            let mut seq = prompt.to_vec();
            seq.extend(&hyp.tokens);
            let (logits, _) = last_logits(&seq, w, intervention)?;
            let logprobs = log_softmax(&logits);
            for tok in ranked_tokens(&logits, width) {
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok);
                candidates.push(Hypothesis {
                    tokens,
                    logprob_sum: hyp.logprob_sum + logprobs[tok as usize],
                });
            }
        }
        candidates.sort_by(hypothesis_order);
        candidates.truncate(width);
        live.clear();
        for c in candidates {
            if cfg
                .stop_tokens
                .contains(c.tokens.last().expect("non-empty"))
            {
                finished.push(c);
            } else {
                live.push(c);
            }
        }
        if live.is_empty() {
            break;
        }
    }
    finished.extend(live);
    finished.sort_by(hypothesis_order);
    let best = finished
        .into_iter()
        .next()
        .expect("at least one hypothesis");
    let stop_reason = if cfg
        .stop_tokens
        .contains(best.tokens.last().expect("non-empty"))
    {
        StopReason::StopToken
    } else {
        StopReason::MaxTokens
    };

    // Replay the winning sequence to record what the intervention did at each step.
    let mut steps = Vec::new();
    if let Some(iv) = intervention {
        let mut seq = prompt.to_vec();
        for (step, &tok) in best.tokens.iter().enumerate() {
            let (_, records) = last_logits(&seq, w, Some(iv))?;
            steps.push(StepSnapshot {
                step,
                layers: records,
            });
            seq.push(tok);
        }
    }
    Ok(GenerationTrace {
        prompt: prompt.to_vec(),
        score: best.score(),
        generated: best.tokens,
        steps,
        stop_reason,
    })
}

/// Dispatches on `cfg.strategy`.
pub fn generate(
    prompt: &[TokenId],
    w: &WeightStore,
    cfg: &GenerationConfig,
) -> Result<GenerationTrace> {
    match cfg.strategy {
        Strategy::Greedy => greedy_decode(prompt, w, cfg),
        Strategy::Beam => beam_decode(prompt, w, cfg),
    }
}

/// Judges one generated output.
pub trait AnswerChecker {
    fn check(&self, index: usize, prompt: &[TokenId], output: &[TokenId]) -> bool;
}

impl<F> AnswerChecker for F
where
    F: Fn(usize, &[TokenId], &[TokenId]) -> bool,
{
    fn check(&self, index: usize, prompt: &[TokenId], output: &[TokenId]) -> bool {
        self(index, prompt, output)
    }
}

/// Marks an output correct when it equals a reference output exactly, e.g.
/// the unmodified model's output for the same prompt.
#[derive(Debug, Clone)]
pub struct MatchesReference(pub Vec<Vec<TokenId>>);

impl AnswerChecker for MatchesReference {
    fn check(&self, index: usize, _prompt: &[TokenId], output: &[TokenId]) -> bool {
        self.0.get(index).is_some_and(|r| r.as_slice() == output)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptOutcome {
    pub index: usize,
    pub generated: Vec<TokenId>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub outcomes: Vec<PromptOutcome>,
    pub n_prompts: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

/// Generates for every prompt in order and scores the outputs.
pub fn run_suite<C: AnswerChecker + ?Sized>(
    w: &WeightStore,
    prompts: &[Vec<TokenId>],
    checker: &C,
    cfg: &GenerationConfig,
) -> Result<SuiteReport> {
    if prompts.is_empty() {
        return Err(Error::EmptyInput("run_suite prompts"));
    }
    let mut outcomes = Vec::with_capacity(prompts.len());
    for (index, prompt) in prompts.iter().enumerate() {
        let trace = generate(prompt, w, cfg)?;
        let correct = checker.check(index, prompt, &trace.generated);
        outcomes.push(PromptOutcome {
            index,
            generated: trace.generated,
            correct,
        });
    }
    let n_correct = outcomes.iter().filter(|o| o.correct).count();
    Ok(SuiteReport {
        n_prompts: outcomes.len(),
        n_correct,
        accuracy: n_correct as f64 / outcomes.len() as f64,
        outcomes,
    })
}
