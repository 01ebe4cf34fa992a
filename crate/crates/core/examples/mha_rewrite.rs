//! Multi-head attention computed two ways: concatenate-then-project and as a
//! sum of per-head contributions `A_h f_h`. The two agree to rounding error.

use art_core::model::{init_random, layer_heads, mha_additive, mha_standard, ModelSpec};
use art_core::numerics::Matrix;
use art_core::rng::SplitMix64;

fn main() -> art_core::Result<()> {
    let spec = ModelSpec::new(1, 4, 32, 64, 10, 16)?;
    let w = init_random(&spec, 3)?;
    let mut rng = SplitMix64::new(1);
    let x = Matrix::from_fn(8, 32, |_, _| rng.next_gaussian());

    let standard = mha_standard(&x, 0, &w)?;
    let (attns, values) = layer_heads(&x, 0, &w)?;
    let additive = mha_additive(&attns, &values)?;

    println!("heads: {}  tokens: {}", attns.n_heads(), attns.seq_len());
    println!(
        "max |standard - additive| = {:.3e}",
        standard.max_abs_diff(&additive)
    );
    Ok(())
}
