mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tenbed::grad::backward;
use tenbed::layers::mixed_radix;
use tenbed::morphology::{random_seg, truncate_pad};
use tenbed::synthetic::{balanced_pairs, lexicon, LexiconShape};
use tenbed::tensor::{cumulative_tensor_product, tensor_product};
use tenbed::train::evaluate_loss;
use tenbed::{
    eval_similarity, train, LabeledPair, Layer, LayerConfig, Matrix, MethodKind, OptimizerState,
    Slot, TrainTask, Vector,
};

use common::{uniform_vec, vocab_index};

fn vec_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max_len)
}

fn v(x: &[f64]) -> Vector<f64> {
    Vector::new(x.to_vec()).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn tensor_product_is_bilinear(
        (a, a2) in (1usize..6).prop_flat_map(|n| (prop::collection::vec(-10.0f64..10.0, n), prop::collection::vec(-10.0f64..10.0, n))),
        b in vec_strategy(5),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let mixed: Vec<f64> = a.iter().zip(&a2).map(|(x, y)| alpha * x + beta * y).collect();
        let lhs = tensor_product(&v(&mixed), &v(&b)).unwrap();
        let p = tensor_product(&v(&a), &v(&b)).unwrap();
        let p2 = tensor_product(&v(&a2), &v(&b)).unwrap();
        for i in 0..lhs.len() {
            let rhs = alpha * p[i] + beta * p2[i];
            // scale by the magnitude of the summands, not the (possibly cancelling) sum
            let scale = (alpha * p[i]).abs() + (beta * p2[i]).abs();
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn norm_is_multiplicative(a in vec_strategy(6), b in vec_strategy(6)) {
        let (a, b) = (v(&a), v(&b));
        let p = tensor_product(&a, &b).unwrap();
        prop_assert!(close(p.norm(), a.norm() * b.norm(), 1e-10));
    }

    #[test]
    fn cumulative_product_matches_index_formula(q in 1usize..=4, n in 1usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut rng, q)).collect();
        let vs: Vec<Vector<f64>> = factors.iter().map(|f| v(f)).collect();
        let left = cumulative_tensor_product(&vs).unwrap();
        // fold from the right
        let mut right = vs[n - 1].clone();
        for f in vs[..n - 1].iter().rev() {
            right = tensor_product(f, &right).unwrap();
        }
        prop_assert_eq!(left.len(), q.pow(n as u32));
        for idx in 0..left.len() {
            let digits = mixed_radix(idx, &vec![q; n]);
            let want: f64 = digits.iter().zip(&factors).map(|(&d, f)| f[d]).product();
            prop_assert!(close(left[idx], want, 1e-12));
            prop_assert!(close(right[idx], want, 1e-12));
        }
    }

    #[test]
    fn swapped_product_is_index_transpose(a in vec_strategy(5), b in vec_strategy(5)) {
        let ab = tensor_product(&v(&a), &v(&b)).unwrap();
        let ba = tensor_product(&v(&b), &v(&a)).unwrap();
        let (g, h) = (a.len(), b.len());
        for j in 0..g {
            for k in 0..h {
                prop_assert_eq!(ab[j * h + k], ba[k * g + j]);
            }
        }
    }

    #[test]
    fn truncate_pad_shape(ms in prop::collection::vec("[a-z]{1,4}", 1..7), n in 1usize..6) {
        let slots = truncate_pad(&ms, n).unwrap();
        prop_assert_eq!(slots.len(), n);
        let real: Vec<&Slot> = slots.iter().take_while(|s| **s != Slot::Pad).collect();
        prop_assert!(slots[real.len()..].iter().all(|s| *s == Slot::Pad));
        prop_assert_eq!(real.len(), ms.len().min(n));
        let joined: String = real.iter().map(|s| s.as_str()).collect();
        prop_assert_eq!(joined, ms.concat());
    }

    #[test]
    fn random_seg_concatenates_to_word(word in "\\PC{1,12}", seed in any::<u64>()) {
        let seg = random_seg(&word, seed);
        prop_assert_eq!(seg.morphemes.concat(), word.clone());
        let chars = word.chars().count();
        prop_assert_eq!(seg.morphemes.len(), if chars <= 3 { 1 } else { 3 });
        prop_assert!(seg.morphemes.iter().all(|m| !m.is_empty()));
    }
}

#[test]
fn non_commutative_witness() {
    let ab = tensor_product(&v(&[1.0, 2.0]), &v(&[3.0, 4.0])).unwrap();
    let ba = tensor_product(&v(&[3.0, 4.0]), &v(&[1.0, 2.0])).unwrap();
    assert_ne!(ab.as_slice(), ba.as_slice());
}

#[test]
fn random_seg_thousand_words() {
    let segs = lexicon(1000, LexiconShape::default(), 0).unwrap();
    for (i, s) in segs.iter().enumerate() {
        for seed in 0..3 {
            assert_eq!(
                random_seg(&s.word, seed * 1000 + i as u64)
                    .morphemes
                    .concat(),
                s.word
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn small_sgd_step_reduces_example_loss(seed in any::<u64>(), word in 0usize..30) {
        let segs = lexicon(30, LexiconShape::default(), seed).unwrap();
        let (vocab, index) = vocab_index(&segs, 3);
        let cfg = LayerConfig::new(MethodKind::MorphTe, 30, 8).with_order(3).with_rank(2).with_seed(seed);
        let mut layer: Layer<f64> = Layer::build(&cfg, Some(&vocab), Some(index)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets = Matrix::from_vec(30, 8, uniform_vec(&mut rng, 240)).unwrap();
        // a one-row task holding only `word`'s target
        let y = layer.forward(word).unwrap();
        let t = targets.row(word);
        let loss = |y: &Vector<f64>| y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let before = loss(&y);
        let up: Vec<f64> = y.iter().zip(t).map(|(a, b)| 2.0 * (a - b)).collect();
        let grads = backward(&layer, word, &Vector::new(up).unwrap()).unwrap();
        let mut opt = OptimizerState::sgd(1e-4);
        opt.step(&mut layer, &grads).unwrap();
        let after = loss(&layer.forward(word).unwrap());
        prop_assert!(after < before, "{} -> {}", before, after);
    }
}

#[test]
fn training_leaves_index_untouched() {
    let segs = lexicon(40, LexiconShape::default(), 1).unwrap();
    let (vocab, index) = vocab_index(&segs, 3);
    let cfg = LayerConfig::new(MethodKind::MorphTe, 40, 8)
        .with_order(3)
        .with_rank(2);
    let mut layer: Layer<f64> = Layer::build(&cfg, Some(&vocab), Some(index.clone())).unwrap();
    let pairs = balanced_pairs(&index, 60, 0).unwrap();
    let task = TrainTask::WordSimilarity {
        pairs,
        loss: tenbed::Loss::DEFAULT_CONTRASTIVE,
    };
    let mut opt = OptimizerState::adam(0.05, (0.9, 0.98), 1e-8);
    let before = evaluate_loss(&layer, &task).unwrap();
    let hist = train(&mut layer, &task, &mut opt, 5, 8, 3).unwrap();
    assert_eq!(layer.index(), Some(&index));
    assert_eq!(hist.len(), 5);
    assert!(evaluate_loss(&layer, &task).unwrap() < before);
}

#[test]
fn random_labels_give_chance_accuracy() {
    use rand::Rng;
    let cfg = LayerConfig::new(MethodKind::Word2ket, 300, 16)
        .with_order(2)
        .with_rank(2)
        .with_seed(8);
    let layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pairs: Vec<LabeledPair> = (0..1000)
        .map(|_| LabeledPair {
            a: rng.gen_range(0..300),
            b: rng.gen_range(0..300),
            label: rng.gen_bool(0.5),
        })
        .collect();
    let acc = eval_similarity(&layer, &pairs).unwrap();
    assert!((0.4..=0.6).contains(&acc), "{acc}");
}
