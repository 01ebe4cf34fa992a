//! Masks growing shares of uniform, scattered and local heads in the shallow
//! layers and reports how often the output still matches the unmasked model.

use art_core::analysis::{mask_sweep, HeadCategory};
use art_core::generation::{generate, GenerationConfig, MatchesReference};
use art_core::io::tokenizer::ByteTokenizer;
use art_core::model::{init_random, ModelSpec};

fn main() -> art_core::Result<()> {
    let w = init_random(&ModelSpec::toy(), 7)?;
    let prompts: Vec<_> = [
        "Water boils at",
        "The moon orbits",
        "Two plus two",
        "A triangle has",
    ]
    .iter()
    .map(|p| ByteTokenizer.encode_prompt(p))
    .collect();
    let base = GenerationConfig::greedy(8);

    let reference = prompts
        .iter()
        .map(|p| generate(p, &w, &base).map(|t| t.generated))
        .collect::<art_core::Result<Vec<_>>>()?;
    let table = mask_sweep(
        &w,
        &prompts,
        &MatchesReference(reference),
        &HeadCategory::ALL,
        &[0.0, 0.5, 1.0],
        &base,
    )?;
    print!("{}", table.to_csv());
    Ok(())
}
