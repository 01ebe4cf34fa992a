//! Command-line front end: `analyze`, `generate`, `ablate` and `init`.
//!
//! Parsing and execution live here so the binary stays a thin wrapper and
//! the commands can be driven from tests.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::analysis::{self, rank_and_classify, HeadCategory};
use crate::art::{resolve_k, InterventionConfig, InterventionMode, InverseTarget, KChoice};
use crate::error::Error;
use crate::generation::{generate, GenerationConfig, MatchesReference};
use crate::io::heatmap::emit_heatmap;
use crate::io::report::{
    to_json, AnalysisReport, LayerSummary, RunConfigEcho, RunReport, WeightSource, REPORT_VERSION,
};
use crate::io::tokenizer::{ByteTokenizer, VOCAB_SIZE};
use crate::io::weights::{load_weights, save_weights};
use crate::io::write_atomic;
use crate::model::{init_random, model_forward, ModelSpec, TokenId, WeightStore};

#[derive(Debug, Parser)]
#[command(
    name = "art",
    version,
    about = "Attention pattern analysis and attention replacement on a toy decoder"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every head by m-index for one prompt and optionally write heatmaps.
    Analyze(AnalyzeArgs),
    /// Generate text, optionally with an attention intervention.
    Generate(GenerateArgs),
    /// Sweep head masking over a prompt file and emit CSV.
    Ablate(AblateArgs),
    /// Write seeded random weights to a weight file.
    Init(InitArgs),
}

/// Where the model comes from.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Weight file to load.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    pub weights: Option<PathBuf>,
    /// Seed for random weights instead of a file.
    #[arg(long)]
    pub random: Option<u64>,
    /// Architecture for --random as L,N_h,d,d_ff.
    #[arg(long, value_parser = parse_arch, default_value = "4,8,64,256", requires = "random")]
    pub spec: Arch,
    /// Maximum sequence length for --random.
    #[arg(long, default_value_t = 64, requires = "random")]
    pub max_seq_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arch {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("expected L,N_h,d,d_ff: {e}"))?;
    match parts.as_slice() {
        &[n_layers, n_heads, d_model, d_ff] => Ok(Arch {
            n_layers,
            n_heads,
            d_model,
            d_ff,
        }),
        _ => Err(format!(
            "expected four comma-separated counts, got {}",
            parts.len()
        )),
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("malformed fraction {s:?}"))?;
    if !(0.0..=1.0).contains(&f) {
        return Err(format!("fraction {f} is outside [0, 1]"));
    }
    Ok(f)
}

fn parse_head_ref(s: &str) -> Result<(usize, usize), String> {
    let (l, h) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LAYER:HEAD, got {s:?}"))?;
    let l = l.parse().map_err(|_| format!("bad layer in {s:?}"))?;
    let h = h.parse().map_err(|_| format!("bad head in {s:?}"))?;
    Ok((l, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    None,
    ArtMax,
    ArtMean,
    ArtInverse,
    ArtScattered,
}

impl From<ModeArg> for InterventionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => Self::None,
            ModeArg::ArtMax => Self::ArtMax,
            ModeArg::ArtMean => Self::ArtMean,
            ModeArg::ArtInverse => Self::ArtInverse,
            ModeArg::ArtScattered => Self::ArtScattered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InverseTargetArg {
    UniformReference,
    UniformMean,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub prompt: String,
    /// Floor applied to attention entries before m-index ratios.
    #[arg(long, default_value_t = analysis::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value = "auto")]
    pub k: KChoice,
    /// Directory for analysis.json and heatmaps.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Head to render as LAYER:HEAD (repeatable). Needs --out-dir.
    #[arg(long = "heatmap", value_parser = parse_head_ref, requires = "out_dir")]
    pub heatmaps: Vec<(usize, usize)>,
    /// Render every head. Needs --out-dir.
    #[arg(long, requires = "out_dir")]
    pub all_heatmaps: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub prompt: String,
    /// JSON generation config; replaces the decoding and intervention flags.
    #[arg(long, conflicts_with_all = ["mode", "k", "shallow_layers", "strategy", "beam_width", "max_tokens", "eps", "inverse_target"])]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub k: Option<KChoice>,
    #[arg(long)]
    pub shallow_layers: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum)]
    pub inverse_target: Option<InverseTargetArg>,
    /// Write a JSON run report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// One prompt per line; an optional TAB-separated expected answer follows.
    #[arg(long)]
    pub prompt_file: PathBuf,
    /// Comma-separated categories to sweep.
    #[arg(long, value_delimiter = ',', default_value = "uniform,scattered,local")]
    pub category: Vec<HeadCategory>,
    /// Comma-separated fractions in [0, 1].
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction, default_value = "0,0.25,0.5,0.75,1")]
    pub fractions: Vec<f64>,
    #[arg(long, default_value = "auto")]
    pub k: KChoice,
    #[arg(long, default_value_t = crate::art::DEFAULT_SHALLOW_LAYERS)]
    pub shallow_layers: usize,
    #[arg(long, default_value_t = 16)]
    pub max_tokens: usize,
    #[arg(long, default_value_t = analysis::DEFAULT_EPS)]
    pub eps: f64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub random: u64,
    #[arg(long, value_parser = parse_arch, default_value = "4,8,64,256")]
    pub spec: Arch,
    #[arg(long, default_value_t = 64)]
    pub max_seq_len: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; exit code 2.
    Usage(clap::Error),
    /// Failure while running; exit code 1.
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<clap::Error> for CliError {
    fn from(e: clap::Error) -> Self {
        CliError::Usage(e)
    }
}

fn usage(kind: ErrorKind, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(Cli::command().error(kind, msg))
}

fn write_out(out: &mut dyn Write, s: &str) -> Result<(), CliError> {
    out.write_all(s.as_bytes())
        .map_err(|e| CliError::Run(Error::io("<stdout>", e)))
}

/// Parses `args` (including the program name) and runs the command, writing
/// primary output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    match cli.command {
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Ablate(a) => cmd_ablate(&a, out),
        Command::Init(a) => cmd_init(&a, out),
    }
}

fn random_spec(arch: Arch, max_seq_len: usize) -> Result<ModelSpec, CliError> {
    if arch.n_heads == 0 || !arch.d_model.is_multiple_of(arch.n_heads) {
        return Err(usage(
            ErrorKind::ValueValidation,
            format!(
                "--spec: d ({}) must be a positive multiple of N_h ({})",
                arch.d_model, arch.n_heads
            ),
        ));
    }
    ModelSpec::new(
        arch.n_layers,
        arch.n_heads,
        arch.d_model,
        arch.d_ff,
        VOCAB_SIZE,
        max_seq_len,
    )
    .map_err(|e| usage(ErrorKind::ValueValidation, e))
}

fn load_model(m: &ModelArgs) -> Result<(WeightStore, WeightSource), CliError> {
    match (&m.weights, m.random) {
        (Some(path), _) => {
            let (_, store) = load_weights(path)?;
            if store.spec.vocab_size < VOCAB_SIZE {
                return Err(CliError::Run(Error::InvalidSpec(format!(
                    "vocab_size {} is smaller than the byte tokenizer's {VOCAB_SIZE}",
                    store.spec.vocab_size
                ))));
            }
            Ok((
                store,
                WeightSource::File {
                    path: path.display().to_string(),
                },
            ))
        }
        (None, Some(seed)) => {
            let spec = random_spec(m.spec, m.max_seq_len)?;
            Ok((init_random(&spec, seed)?, WeightSource::Random { seed }))
        }
        (None, None) => Err(usage(
            ErrorKind::MissingRequiredArgument,
            "either --weights or --random is required",
        )),
    }
}

fn encode_prompt(prompt: &str) -> Result<Vec<TokenId>, CliError> {
    if prompt.is_empty() {
        return Err(usage(
            ErrorKind::ValueValidation,
            "--prompt must not be empty",
        ));
    }
    Ok(ByteTokenizer.encode_prompt(prompt))
}

/// Runs one vanilla forward pass and classifies every layer's heads.
pub fn analyze_layers(
    w: &WeightStore,
    tokens: &[TokenId],
    k: usize,
    eps: f64,
) -> crate::Result<Vec<analysis::HeadClassification>> {
    let pass = model_forward(tokens, w, None)?;
    pass.attentions
        .iter()
        .map(|a| rank_and_classify(a, k, eps))
        .collect()
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (w, source) = load_model(&a.model)?;
    let tokens = encode_prompt(&a.prompt)?;
    let k = resolve_k(w.spec.n_heads, a.k)?;
    let pass = model_forward(&tokens, &w, None)?;
    let classes = pass
        .attentions
        .iter()
        .map(|l| rank_and_classify(l, k, a.eps))
        .collect::<crate::Result<Vec<_>>>()?;

    let heads = classes
        .iter()
        .flat_map(|c| {
            let mut by_head = c.full_ranking.clone();
            by_head.sort_by_key(|r| r.head);
            by_head
        })
        .collect();
    let report = AnalysisReport {
        report_version: REPORT_VERSION,
        model: w.spec,
        weights: source,
        prompt: a.prompt.clone(),
        tokens: tokens.clone(),
        eps: a.eps,
        k,
        heads,
        layers: classes.iter().map(LayerSummary::from).collect(),
    };

    let mut text = format!(
        "tokens: {}  layers: {}  heads: {}  k: {}\n",
        tokens.len(),
        w.spec.n_layers,
        w.spec.n_heads,
        k
    );
    text.push_str("layer  rank  head  m-index         class\n");
    for c in &classes {
        for (rank, r) in c.full_ranking.iter().enumerate() {
            let class = c.category_of(r.head).map_or("-", |cat| cat.as_str());
            text.push_str(&format!(
                "{:>5}  {:>4}  {:>4}  {:<14.9}  {}\n",
                c.layer, rank, r.head, r.m, class
            ));
        }
    }
    write_out(out, &text)?;

    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Run(Error::io(dir, e)))?;
        write_atomic(&dir.join("analysis.json"), to_json(&report)?.as_bytes())?;
        let mut wanted = a.heatmaps.clone();
        if a.all_heatmaps {
            wanted = (0..w.spec.n_layers)
                .flat_map(|l| (0..w.spec.n_heads).map(move |h| (l, h)))
                .collect();
        }
        for (l, h) in wanted {
            let attn = pass
                .attentions
                .get(l)
                .and_then(|layer| layer.heads.get(h))
                .ok_or_else(|| {
                    usage(
                        ErrorKind::ValueValidation,
                        format!("--heatmap {l}:{h} is outside the model"),
                    )
                })?;
            emit_heatmap(attn, &dir.join(format!("layer{l}_head{h}.pgm")))?;
        }
    }
    Ok(())
}

fn generation_config(a: &GenerateArgs) -> Result<GenerationConfig, CliError> {
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Run(Error::io(path, e)))?;
        let cfg: GenerationConfig = serde_json::from_str(&text).map_err(|e| {
            usage(
                ErrorKind::ValueValidation,
                format!("--config {}: {e}", path.display()),
            )
        })?;
        return Ok(cfg);
    }
    let strategy = a.strategy.unwrap_or(StrategyArg::Greedy);
    if strategy == StrategyArg::Greedy && a.beam_width.is_some() {
        return Err(usage(
            ErrorKind::ArgumentConflict,
            "--beam-width only applies to --strategy beam",
        ));
    }
    let mut intervention = InterventionConfig::with_mode(a.mode.unwrap_or(ModeArg::None).into());
    if let Some(k) = a.k {
        intervention.k = k;
    }
    if let Some(n) = a.shallow_layers {
        intervention.shallow_layers = n;
    }
    if let Some(eps) = a.eps {
        intervention.eps = eps;
    }
    if let Some(t) = a.inverse_target {
        intervention.inverse_target = match t {
            InverseTargetArg::UniformReference => InverseTarget::UniformReference,
            InverseTargetArg::UniformMean => InverseTarget::UniformMean,
        };
    }
    let max_tokens = a.max_tokens.unwrap_or(32);
    let cfg = match strategy {
        StrategyArg::Greedy => GenerationConfig::greedy(max_tokens),
        StrategyArg::Beam => GenerationConfig::beam(max_tokens, a.beam_width.unwrap_or(4)),
    };
    Ok(cfg.with_intervention(intervention))
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = generation_config(a)?;
    let (w, source) = load_model(&a.model)?;
    let tokens = encode_prompt(&a.prompt)?;
    cfg.intervention
        .resolve(&w.spec)
        .map_err(|e| usage(ErrorKind::ValueValidation, e))?;
    let trace = generate(&tokens, &w, &cfg)?;
    let text = ByteTokenizer.decode_lossy(&trace.generated);
    write_out(out, &format!("{text}\n"))?;

    if let Some(path) = &a.report {
        let k = resolve_k(w.spec.n_heads, cfg.intervention.k)?;
        let prompt_layers = analyze_layers(&w, &tokens, k, cfg.intervention.eps)?
            .iter()
            .map(LayerSummary::from)
            .collect();
        let echo = RunConfigEcho {
            model: w.spec,
            weights: source,
            prompt: a.prompt.clone(),
            generation: cfg.clone(),
        };
        let report = RunReport::new(echo, prompt_layers, &trace, text);
        write_atomic(path, to_json(&report)?.as_bytes())?;
    }
    Ok(())
}

/// A prompt file line: prompt text and optional expected answer.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptCase {
    pub prompt: String,
    pub expected: Option<String>,
}

/// Reads one prompt per non-empty line, `prompt[TAB expected]`.
pub fn read_prompt_file(path: &Path) -> crate::Result<Vec<PromptCase>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| match l.split_once('\t') {
            Some((p, e)) => PromptCase {
                prompt: p.to_string(),
                expected: Some(e.to_string()),
            },
            None => PromptCase {
                prompt: l.to_string(),
                expected: None,
            },
        })
        .collect())
}

fn cmd_ablate(a: &AblateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (w, _) = load_model(&a.model)?;
    let cases = read_prompt_file(&a.prompt_file)?;
    if cases.is_empty() {
        return Err(CliError::Run(Error::EmptyInput("prompt file")));
    }
    let with_answers = cases.iter().filter(|c| c.expected.is_some()).count();
    if with_answers != 0 && with_answers != cases.len() {
        return Err(usage(
            ErrorKind::ValueValidation,
            "either every prompt line has a TAB-separated answer or none does",
        ));
    }
    let prompts: Vec<Vec<TokenId>> = cases
        .iter()
        .map(|c| ByteTokenizer.encode_prompt(&c.prompt))
        .collect();
    let base = GenerationConfig::greedy(a.max_tokens).with_intervention(InterventionConfig {
        k: a.k,
        shallow_layers: a.shallow_layers,
        eps: a.eps,
        ..InterventionConfig::none()
    });
    base.intervention
        .resolve(&w.spec)
        .map_err(|e| usage(ErrorKind::ValueValidation, e))?;

    let table = if with_answers > 0 {
        let expected: Vec<String> = cases
            .iter()
            .map(|c| c.expected.clone().unwrap_or_default())
            .collect();
        let checker = move |i: usize, _: &[TokenId], output: &[TokenId]| {
            ByteTokenizer
                .decode_lossy(output)
                .starts_with(expected[i].as_str())
        };
        analysis::mask_sweep(&w, &prompts, &checker, &a.category, &a.fractions, &base)?
    } else {
        let baseline = prompts
            .iter()
            .map(|p| generate(p, &w, &base).map(|t| t.generated))
            .collect::<crate::Result<Vec<_>>>()?;
        let checker = MatchesReference(baseline);
        analysis::mask_sweep(&w, &prompts, &checker, &a.category, &a.fractions, &base)?
    };
    let csv = table.to_csv();
    match &a.out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => write_out(out, &csv)?,
    }
    Ok(())
}

fn cmd_init(a: &InitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = random_spec(a.spec, a.max_seq_len)?;
    let w = init_random(&spec, a.random)?;
    save_weights(&w, &a.out)?;
    write_out(out, &format!("wrote {}\n", a.out.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_helpers() {
        assert_eq!(
            parse_arch("2,4,16,32").unwrap(),
            Arch {
                n_layers: 2,
                n_heads: 4,
                d_model: 16,
                d_ff: 32
            }
        );
        assert!(parse_arch("2,4,16").is_err());
        assert_eq!(parse_fraction(" 0.5").unwrap(), 0.5);
        assert!(parse_fraction("x").is_err());
        assert!(parse_fraction("1.5").is_err());
        assert_eq!(parse_head_ref("1:3").unwrap(), (1, 3));
        assert!(parse_head_ref("13").is_err());
    }

    #[test]
    fn beam_width_with_greedy_is_usage_error() {
        let mut sink = Vec::new();
        let err = run(
            [
                "art",
                "generate",
                "--random",
                "1",
                "--prompt",
                "hi",
                "--beam-width",
                "3",
            ],
            &mut sink,
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn defaults_follow_published_settings() {
        let cli =
            Cli::try_parse_from(["art", "generate", "--random", "1", "--prompt", "x"]).unwrap();
        let Command::Generate(a) = cli.command else {
            panic!()
        };
        let cfg = generation_config(&a).unwrap();
        assert_eq!(cfg.intervention.shallow_layers, 2);
        assert_eq!(cfg.intervention.k, KChoice::Auto);
    }
}
