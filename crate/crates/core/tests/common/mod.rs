#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tenbed::morphology::build_vocab_and_index;
use tenbed::synthetic::{lexicon, LexiconShape};
use tenbed::{IndexMatrix, Layer, LayerConfig, MethodKind, MorphemeVocab, Segmentation};

/// Every kind that can be built, in a fixed order.
pub const KINDS: [MethodKind; 8] = [
    MethodKind::Original,
    MethodKind::MatrixFactor,
    MethodKind::Word2ket,
    MethodKind::Word2ketXs,
    MethodKind::TensorTrain,
    MethodKind::MorphTe,
    MethodKind::MorphSum,
    MethodKind::Word2ketRshare,
];

/// Synthetic lexicon plus one word made of a single morpheme repeated three times.
pub fn lexicon_with_repeat(words: usize, seed: u64) -> Vec<Segmentation> {
    let mut segs = lexicon(words - 1, LexiconShape::default(), seed).unwrap();
    segs.push(Segmentation::new("rerere", vec!["re".into(), "re".into(), "re".into()]).unwrap());
    segs
}

pub fn vocab_index(segs: &[Segmentation], n: usize) -> (MorphemeVocab, IndexMatrix) {
    build_vocab_and_index(segs, n).unwrap()
}

/// Small layer of `kind` over `segs` (used only by the morpheme kinds).
pub fn small_layer(kind: MethodKind, segs: &[Segmentation], seed: u64) -> Layer<f64> {
    let v = segs.len();
    let (vocab, index) = vocab_index(segs, 3);
    let cfg = match kind {
        MethodKind::Original => LayerConfig::new(kind, v, 6),
        MethodKind::MatrixFactor => LayerConfig::new(kind, v, 6).with_rank(3),
        MethodKind::Word2ket => LayerConfig::new(kind, v, 7)
            .with_order(3)
            .with_subdim(2)
            .with_rank(2),
        MethodKind::Word2ketXs => LayerConfig::new(kind, v, 8)
            .with_order(2)
            .with_rank(2)
            .with_factors(vec![8, 8], vec![2, 4]),
        MethodKind::TensorTrain => LayerConfig::new(kind, v, 8)
            .with_order(3)
            .with_rank(3)
            .with_factors(vec![3, 4, 6], vec![2, 2, 2]),
        MethodKind::MorphTe => LayerConfig::new(kind, v, 8)
            .with_order(3)
            .with_subdim(2)
            .with_rank(2),
        MethodKind::MorphSum => LayerConfig::new(kind, v, 6).with_order(3),
        MethodKind::Word2ketRshare => LayerConfig::new(kind, v, 8)
            .with_order(3)
            .with_subdim(2)
            .with_rank(2)
            .with_morphemes(12),
        MethodKind::MorphLstm => unreachable!("not buildable"),
    }
    .with_seed(seed);
    if kind.needs_segmentation() {
        Layer::build(&cfg, Some(&vocab), Some(index)).unwrap()
    } else {
        Layer::build(&cfg, None, None).unwrap()
    }
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
