//! Writes the most uniform and most local head of layer 0 as PGM images.
//!
//! Usage: `cargo run --example heatmaps -- [OUT_DIR]` (default `heatmaps`).

use std::path::PathBuf;

use art_core::analysis::{rank_and_classify, DEFAULT_EPS};
use art_core::io::heatmap::emit_heatmap;
use art_core::io::tokenizer::ByteTokenizer;
use art_core::model::{init_random, model_forward, ModelSpec};

fn main() -> art_core::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "heatmaps".into()));
    std::fs::create_dir_all(&out).map_err(|e| art_core::Error::Io {
        path: out.clone(),
        source: e,
    })?;

    let w = init_random(&ModelSpec::toy(), 7)?;
    let tokens = ByteTokenizer.encode_prompt("Heatmaps show where each position looks.");
    let pass = model_forward(&tokens, &w, None)?;
    let layer = &pass.attentions[0];
    let c = rank_and_classify(layer, 1, DEFAULT_EPS)?;

    for (label, head) in [("uniform", c.uniform_heads[0]), ("local", c.local_heads[0])] {
        let path = out.join(format!("layer0_{label}_head{head}.pgm"));
        emit_heatmap(&layer.heads[head], &path)?;
        println!(
            "{label:>7} head {head} (m = {:.3}) -> {}",
            c.m_of(head).unwrap(),
            path.display()
        );
    }
    Ok(())
}
