//! Ranks the heads of every layer by m-index for one prompt and prints the
//! uniform / scattered / local split.

use art_core::analysis::{rank_and_classify, DEFAULT_EPS};
use art_core::art::{resolve_k, KChoice};
use art_core::io::tokenizer::ByteTokenizer;
use art_core::model::{init_random, model_forward, ModelSpec};

fn main() -> art_core::Result<()> {
    let w = init_random(&ModelSpec::toy(), 7)?;
    let tokens = ByteTokenizer.encode_prompt("The quick brown fox jumps over the lazy dog.");
    let k = resolve_k(w.spec.n_heads, KChoice::Auto)?;
    let pass = model_forward(&tokens, &w, None)?;

    for layer in &pass.attentions {
        let c = rank_and_classify(layer, k, DEFAULT_EPS)?;
        let ranking: Vec<String> = c
            .full_ranking
            .iter()
            .map(|r| format!("h{}={:.3}", r.head, r.m))
            .collect();
        println!("layer {}: {}", c.layer, ranking.join(" "));
        println!(
            "  uniform {:?}  scattered {:?}  local {:?}",
            c.uniform_heads, c.scattered_heads, c.local_heads
        );
    }
    Ok(())
}
