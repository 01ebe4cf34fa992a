//! Greedy generation with each intervention mode side by side.

use art_core::art::{InterventionConfig, InterventionMode};
use art_core::generation::{generate, GenerationConfig};
use art_core::io::tokenizer::ByteTokenizer;
use art_core::model::{init_random, ModelSpec};

fn main() -> art_core::Result<()> {
    let w = init_random(&ModelSpec::toy(), 7)?;
    let prompt = ByteTokenizer.encode_prompt("Once upon a time");

    for mode in [
        InterventionMode::None,
        InterventionMode::ArtMax,
        InterventionMode::ArtMean,
        InterventionMode::ArtInverse,
        InterventionMode::ArtScattered,
    ] {
        let cfg =
            GenerationConfig::greedy(12).with_intervention(InterventionConfig::with_mode(mode));
        let trace = generate(&prompt, &w, &cfg)?;
        let replaced: Vec<_> = trace
            .steps
            .first()
            .map(|s| s.layers.iter().map(|l| l.replaced.clone()).collect())
            .unwrap_or_default();
        println!(
            "{:<14} score {:>8.4}  replaced@step0 {:?}  tokens {:?}",
            mode.as_str(),
            trace.score,
            replaced,
            trace.generated
        );
    }
    Ok(())
}
