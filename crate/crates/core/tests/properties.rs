//! Property tests for the numeric, analysis and intervention invariants.

use art_core::analysis::{m_index, mask_heads, rank_and_classify, uniform_reference, DEFAULT_EPS};
use art_core::art::{
    art_mha, target_local, InterventionConfig, InterventionMode, KChoice, LocalVariant,
};
use art_core::io::tokenizer::ByteTokenizer;
use art_core::model::{
    init_random, layer_heads, mha_additive, mha_standard, LayerAttentions, ModelSpec,
};
use art_core::numerics::{causal_row_softmax, layer_norm, matmul, AttentionMatrix, Matrix};
use art_core::rng::SplitMix64;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, range: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-range..range, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn square_scores() -> impl Strategy<Value = Matrix> {
    (1usize..12).prop_flat_map(|t| matrix(t, t, 50.0))
}

/// Random causal row-stochastic matrix: softmax of random scores.
fn attention() -> impl Strategy<Value = AttentionMatrix> {
    square_scores().prop_map(|s| causal_row_softmax(&s).unwrap())
}

fn layer_of(t: usize, n: usize, seed: u64) -> LayerAttentions {
    let mut rng = SplitMix64::new(seed);
    let heads = (0..n)
        .map(|_| {
            let scale = 4.0 * rng.next_f64();
            let s = Matrix::from_fn(t, t, |_, _| rng.next_gaussian() * scale);
            causal_row_softmax(&s).unwrap()
        })
        .collect();
    LayerAttentions { layer: 0, heads }
}

proptest! {
    #[test]
    fn softmax_is_causal_and_row_stochastic(s in square_scores()) {
        let a = causal_row_softmax(&s).unwrap();
        let t = a.size();
        for i in 0..t {
            for j in i + 1..t {
                prop_assert_eq!(a.get(i, j), 0.0);
            }
            let sum: f64 = a.as_matrix().row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn matmul_is_associative(a in matrix(4, 4, 3.0), b in matrix(4, 4, 3.0), c in matrix(4, 4, 3.0)) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) <= 1e-8);
    }

    #[test]
    fn layer_norm_ignores_row_shift(x in matrix(3, 6, 5.0), shift in -20.0f64..20.0) {
        let gain = [1.0, 0.5, -2.0, 1.5, 0.1, 3.0];
        let bias = [0.0, 1.0, -1.0, 0.5, 0.2, -0.3];
        let shifted = Matrix::from_fn(3, 6, |r, c| x[(r, c)] + shift);
        let a = layer_norm(&x, &gain, &bias, 1e-5).unwrap();
        let b = layer_norm(&shifted, &gain, &bias, 1e-5).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-8);
    }

    #[test]
    fn m_index_is_at_least_one(a in attention()) {
        prop_assert!(m_index(&a, DEFAULT_EPS).unwrap() >= 1.0);
    }

    #[test]
    fn m_index_ignores_head_order(t in 2usize..10, n in 2usize..8, seed in any::<u64>()) {
        let layer = layer_of(t, n, seed);
        let mut reversed = layer.clone();
        reversed.heads.reverse();
        let fwd = rank_and_classify(&layer, 1, DEFAULT_EPS).unwrap();
        let rev = rank_and_classify(&reversed, 1, DEFAULT_EPS).unwrap();
        for h in 0..n {
            prop_assert_eq!(fwd.m_of(h), rev.m_of(n - 1 - h));
        }
    }

    #[test]
    fn classification_partitions_heads(t in 1usize..10, n in 1usize..12, seed in any::<u64>(), k_frac in 0.0f64..=1.0) {
        let layer = layer_of(t, n, seed);
        let k = ((n / 2) as f64 * k_frac) as usize;
        let c = rank_and_classify(&layer, k, DEFAULT_EPS).unwrap();
        prop_assert_eq!(c.uniform_heads.len(), k);
        prop_assert_eq!(c.local_heads.len(), k);
        let mut all: Vec<usize> = c.uniform_heads.iter()
            .chain(&c.scattered_heads)
            .chain(&c.local_heads)
            .copied()
            .collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for w in c.full_ranking.windows(2) {
            prop_assert!(w[0].m < w[1].m || (w[0].m == w[1].m && w[0].head < w[1].head));
        }
    }

    #[test]
    fn mask_heads_is_idempotent(t in 1usize..8, n in 1usize..8, seed in any::<u64>(), pick in prop::collection::vec(any::<prop::sample::Index>(), 0..4)) {
        let layer = layer_of(t, n, seed);
        let heads: Vec<usize> = pick.iter().map(|i| i.index(n)).collect();
        let once = mask_heads(&layer, &heads).unwrap();
        prop_assert_eq!(&mask_heads(&once, &heads).unwrap(), &once);
        prop_assert_eq!(&mask_heads(&layer, &[]).unwrap(), &layer);
    }

    #[test]
    fn mean_target_is_row_stochastic(t in 1usize..10, seed in any::<u64>(), k in 1usize..4) {
        let layer = layer_of(t, 8, seed);
        let c = rank_and_classify(&layer, k, DEFAULT_EPS).unwrap();
        for variant in [LocalVariant::Max, LocalVariant::Mean] {
            let target = target_local(&c, &layer, variant).unwrap();
            prop_assert!(target.matrix.is_stochastic(1e-9));
        }
    }

    #[test]
    fn tokenizer_round_trips(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let tok = ByteTokenizer;
        let ids = tok.encode(&bytes);
        prop_assert_eq!(tok.decode(&ids).unwrap(), bytes.clone());
        prop_assert_eq!(tok.encode(&tok.decode(&ids).unwrap()), ids);
    }
}

#[test]
fn m_index_of_uniform_is_exactly_one_up_to_128() {
    for t in 1..=128 {
        assert_eq!(
            m_index(&uniform_reference(t).unwrap(), DEFAULT_EPS).unwrap(),
            1.0,
            "T = {t}"
        );
    }
}

fn random_x(t: usize, d: usize, rng: &mut SplitMix64) -> Matrix {
    Matrix::from_fn(t, d, |_, _| rng.next_gaussian())
}

#[test]
fn standard_and_additive_agree_on_seeded_instances() {
    let mut rng = SplitMix64::new(123);
    for n_heads in [1, 2, 4, 8] {
        let spec = ModelSpec::new(1, n_heads, 16, 8, 5, 16).unwrap();
        let w = init_random(&spec, 1000 + n_heads as u64).unwrap();
        for t in 1..=16 {
            let x = random_x(t, 16, &mut rng);
            let (attns, values) = layer_heads(&x, 0, &w).unwrap();
            let diff = mha_standard(&x, 0, &w)
                .unwrap()
                .max_abs_diff(&mha_additive(&attns, &values).unwrap());
            assert!(diff <= 1e-9, "n_heads {n_heads}, T {t}: {diff}");
        }
    }
}

#[test]
fn art_linearity_residual_and_locality() {
    let spec = ModelSpec::new(2, 8, 32, 16, 7, 24).unwrap();
    let w = init_random(&spec, 555).unwrap();
    let mut rng = SplitMix64::new(9);
    for mode in [
        InterventionMode::ArtMax,
        InterventionMode::ArtMean,
        InterventionMode::ArtInverse,
        InterventionMode::ArtScattered,
    ] {
        for k in [1, 2, 3] {
            let x = random_x(10, 32, &mut rng);
            let cfg = InterventionConfig::with_mode(mode).k(KChoice::Fixed(k));
            let out = art_mha(&x, 1, &w, &cfg).unwrap();
            let rec = out.record.clone().unwrap();
            assert_eq!(rec.replaced.len(), k);

            // Untouched heads keep their matrices bit-for-bit.
            for h in 0..8 {
                if !rec.replaced.contains(&h) {
                    assert_eq!(out.attentions.heads[h], out.original.heads[h]);
                }
            }

            // output - vanilla == Σ_{i∈I} (A_target - A_i) f_i, recomputed independently.
            let (_, values) = layer_heads(&x, 1, &w).unwrap();
            let vanilla = mha_additive(&out.original, &values).unwrap();
            let mut expected = Matrix::zeros(10, 32);
            for &i in &rec.replaced {
                let delta = out.attentions.heads[i]
                    .as_matrix()
                    .sub(out.original.heads[i].as_matrix())
                    .unwrap();
                expected
                    .add_assign(&matmul(&delta, &values[i]).unwrap())
                    .unwrap();
            }
            let residual = out.output.sub(&vanilla).unwrap();
            assert!(residual.max_abs_diff(&expected) <= 1e-9, "{mode:?} k={k}");
        }
    }
}
