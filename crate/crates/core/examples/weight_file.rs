//! Saves seeded weights to the binary format, loads them back and checks that
//! nothing changed. Also shows the error for a corrupted header.

use art_core::io::weights::{decode, encode, load_weights, save_weights, HEADER_LEN};
use art_core::model::{init_random, ModelSpec};

fn main() -> art_core::Result<()> {
    let w = init_random(&ModelSpec::new(2, 4, 32, 64, 258, 32)?, 42)?;
    let dir = std::env::temp_dir().join("art-weight-file-example");
    std::fs::create_dir_all(&dir).map_err(|e| art_core::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let path = dir.join("model.artw");

    save_weights(&w, &path)?;
    let (spec, loaded) = load_weights(&path)?;
    let bytes = encode(&w)?;
    println!(
        "{} bytes ({HEADER_LEN}-byte header), spec {spec:?}",
        bytes.len()
    );
    println!("round trip identical: {}", loaded == w);

    let mut broken = bytes;
    broken[..4].copy_from_slice(b"NOPE");
    println!("corrupted: {}", decode(&broken).unwrap_err());
    Ok(())
}
