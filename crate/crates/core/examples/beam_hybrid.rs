//! Beam search combined with attention replacement, compared to greedy.

use art_core::art::{InterventionConfig, InterventionMode};
use art_core::generation::{generate, GenerationConfig};
use art_core::io::tokenizer::ByteTokenizer;
use art_core::model::{init_random, ModelSpec};

fn main() -> art_core::Result<()> {
    let w = init_random(&ModelSpec::toy(), 7)?;
    let prompt = ByteTokenizer.encode_prompt("The answer is");
    let art = InterventionConfig::with_mode(InterventionMode::ArtMax);

    for (name, cfg) in [
        ("greedy", GenerationConfig::greedy(10)),
        ("beam-4", GenerationConfig::beam(10, 4)),
        (
            "greedy+art",
            GenerationConfig::greedy(10).with_intervention(art.clone()),
        ),
        (
            "beam-4+art",
            GenerationConfig::beam(10, 4).with_intervention(art),
        ),
    ] {
        let t = generate(&prompt, &w, &cfg)?;
        println!(
            "{name:<11} mean log-prob {:>8.4}  {:?}",
            t.score, t.generated
        );
    }
    Ok(())
}
