//! Grayscale attention heatmaps as binary PGM (P5).
//!
//! Pixel `(i, j)` is `round(255 · A[i, j] / max A)`, rounding half away from
//! zero. An all-zero matrix gives an all-black image.

use std::path::Path;

use crate::error::Result;
use crate::numerics::AttentionMatrix;

pub fn pgm_bytes(a: &AttentionMatrix) -> Vec<u8> {
    let t = a.size();
    let mut out = format!("P5\n{t} {t}\n255\n").into_bytes();
    let max = a.as_matrix().max_entry();
    out.reserve(t * t);
    for &v in a.as_matrix().data() {
        let px = if max > 0.0 {
            (255.0 * v / max).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        out.push(px);
    }
    out
}

pub fn emit_heatmap(a: &AttentionMatrix, path: &Path) -> Result<()> {
    super::write_atomic(path, &pgm_bytes(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::uniform_reference;

    #[test]
    fn uniform_two_by_two() {
        let bytes = pgm_bytes(&uniform_reference(2).unwrap());
        let mut expected = b"P5\n2 2\n255\n".to_vec();
        expected.extend([255, 0, 128, 128]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn single_pixel_and_zero_matrix() {
        assert_eq!(
            pgm_bytes(&uniform_reference(1).unwrap()),
            b"P5\n1 1\n255\n\xff"
        );
        let z = pgm_bytes(&AttentionMatrix::zeros(3));
        assert_eq!(&z[..11], b"P5\n3 3\n255\n");
        assert!(z[11..].iter().all(|&p| p == 0));
        assert_eq!(z.len(), 11 + 9);
    }

    #[test]
    fn unwritable_path_errors() {
        let a = uniform_reference(2).unwrap();
        assert!(emit_heatmap(&a, Path::new("/nonexistent-dir/x/y.pgm")).is_err());
    }
}
