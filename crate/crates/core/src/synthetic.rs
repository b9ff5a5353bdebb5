//! Synthetic morphology for desk-scale experiments.
//!
//! Words are built as `prefix + root + suffix` from three disjoint morpheme
//! inventories, so two words share a morpheme exactly when they agree at
//! some position of their index rows.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{LayerConfig, MethodKind};
use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::morphology::{build_vocab_and_index, IndexMatrix, Segmentation};
use crate::optim::{OptimizerState, ADAM_BETAS};
use crate::tensor::Matrix;
use crate::train::{eval_similarity, evaluate_loss, train, LabeledPair, Loss, TrainTask};

/// Sizes of the three morpheme inventories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexiconShape {
    pub prefixes: usize,
    pub roots: usize,
    pub suffixes: usize,
}

impl Default for LexiconShape {
    fn default() -> Self {
        Self {
            prefixes: 10,
            roots: 50,
            suffixes: 20,
        }
    }
}

/// `words` distinct three-morpheme words drawn without replacement.
pub fn lexicon(words: usize, shape: LexiconShape, seed: u64) -> Result<Vec<Segmentation>> {
    let space = shape.prefixes * shape.roots * shape.suffixes;
    if words == 0 || words > space {
        return Err(Error::invalid(format!(
            "cannot draw {words} distinct words from {space} combinations"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, space, words);
    picks
        .into_iter()
        .map(|code| {
            let p = code / (shape.roots * shape.suffixes);
            let r = (code / shape.suffixes) % shape.roots;
            let s = code % shape.suffixes;
            let ms = vec![format!("pre{p}"), format!("root{r}"), format!("suf{s}")];
            Segmentation::new(ms.concat(), ms)
        })
        .collect()
}

/// True when the two rows hold a common non-padding id at the same position.
pub fn shares_morpheme(index: &IndexMatrix, a: usize, b: usize) -> bool {
    let pad = index.pad_id();
    index
        .row(a)
        .iter()
        .zip(index.row(b))
        .any(|(&x, &y)| x == y && Some(x) != pad)
}

/// `count` distinct unordered pairs of distinct words, half labeled
/// similar (sharing a morpheme) and half not.
pub fn balanced_pairs(index: &IndexMatrix, count: usize, seed: u64) -> Result<Vec<LabeledPair>> {
    let n = index.rows();
    if n < 2 {
        return Err(Error::invalid("need at least two words"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let want_pos = count / 2;
    let want_neg = count - want_pos;
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut pos = Vec::with_capacity(want_pos);
    let mut neg = Vec::with_capacity(want_neg);
    let limit = 1000 * count.max(1);
    let mut tries = 0;
    while pos.len() < want_pos || neg.len() < want_neg {
        tries += 1;
        if tries > limit {
            return Err(Error::invalid(format!(
                "could not draw {count} balanced pairs from {n} words"
            )));
        }
        let a = rng.gen_range(0..n);
        let b = if pos.len() < want_pos && rng.gen_bool(0.5) {
            // bias toward positives: pick a partner sharing a random position
            let k = rng.gen_range(0..index.order());
            let id = index.row(a)[k];
            let partners: Vec<usize> = (0..n)
                .filter(|&w| w != a && index.row(w)[k] == id)
                .collect();
            match partners.choose(&mut rng) {
                Some(&b) => b,
                None => continue,
            }
        } else {
            rng.gen_range(0..n)
        };
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if !seen.insert(key) {
            continue;
        }
        let label = shares_morpheme(index, a, b);
        let bucket = if label { &mut pos } else { &mut neg };
        let want = if label { want_pos } else { want_neg };
        if bucket.len() < want {
            bucket.push(LabeledPair { a, b, label });
        } else {
            seen.remove(&key);
        }
    }
    let mut all: Vec<LabeledPair> = pos.into_iter().chain(neg).collect();
    all.shuffle(&mut rng);
    Ok(all)
}

/// Splits pairs into a training set and a held-out set of `held_out` pairs.
pub fn split_pairs(pairs: &[LabeledPair], held_out: usize) -> (Vec<LabeledPair>, Vec<LabeledPair>) {
    let cut = pairs.len().saturating_sub(held_out);
    (pairs[..cut].to_vec(), pairs[cut..].to_vec())
}

/// Number of distinct morphemes across a lexicon.
pub fn morpheme_inventory(segs: &[Segmentation]) -> usize {
    segs.iter()
        .flat_map(|s| s.morphemes.iter())
        .collect::<BTreeSet<_>>()
        .len()
}


/// Settings for the shares-a-morpheme similarity run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilaritySetup {
    pub words: usize,
    pub order: usize,
    pub subdim: usize,
    pub embed_dim: usize,
    pub rank: usize,
    pub train_pairs: usize,
    pub held_out_pairs: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for SimilaritySetup {
    fn default() -> Self {
        Self {
            words: 500,
            order: 3,
            subdim: 4,
            embed_dim: 64,
            rank: 2,
            train_pairs: 2000,
            held_out_pairs: 1000,
            epochs: 20,
            batch: 32,
            lr: 0.01,
        }
    }
}

/// Trains one layer of `kind` (MorphTE or Word2ket+Rshare) on balanced
/// shares-a-morpheme pairs and returns its held-out accuracy.
///
/// The lexicon, pairs and layer initialization all derive from `seed`, so
/// both kinds see the same words and pairs for a given seed.
pub fn similarity_run(kind: MethodKind, setup: &SimilaritySetup, seed: u64) -> Result<f64> {
    let segs = lexicon(setup.words, LexiconShape::default(), seed)?;
    let (vocab, index) = build_vocab_and_index(&segs, setup.order)?;
    let pairs = balanced_pairs(
        &index,
        setup.train_pairs + setup.held_out_pairs,
        seed ^ 0x5eed,
    )?;
    let (train_set, held_out) = split_pairs(&pairs, setup.held_out_pairs);
    let cfg = LayerConfig::new(kind, setup.words, setup.embed_dim)
        .with_order(setup.order)
        .with_subdim(setup.subdim)
        .with_rank(setup.rank)
        .with_morphemes(vocab.size())
        .with_seed(seed);
    let mut layer: Layer<f64> = match kind {
        MethodKind::MorphTe => Layer::build(&cfg, Some(&vocab), Some(index))?,
        MethodKind::Word2ketRshare => Layer::build(&cfg, None, None)?,
        other => {
            return Err(Error::invalid(format!(
                "similarity run compares morphte and word2ket_rshare, not {other}"
            )))
        }
    };
    let task = TrainTask::WordSimilarity {
        pairs: train_set,
        loss: Loss::DEFAULT_CONTRASTIVE,
    };
    let mut opt = OptimizerState::adam(setup.lr, ADAM_BETAS, 1e-8);
    train(&mut layer, &task, &mut opt, setup.epochs, setup.batch, seed)?;
    eval_similarity(&layer, &held_out)
}

/// Settings for the table-reconstruction run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionSetup {
    pub order: usize,
    pub subdim: usize,
    pub embed_dim: usize,
    pub rank: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for ReconstructionSetup {
    fn default() -> Self {
        Self {
            order: 3,
            subdim: 4,
            embed_dim: 64,
            rank: 4,
            epochs: 200,
            batch: 20,
            lr: 0.01,
        }
    }
}

/// Fits a MorphTE layer to the table of another MorphTE layer over the
/// same index (a target the model can represent exactly). Returns the
/// initial mse followed by the per-epoch history.
pub fn reconstruction_run(
    segs: &[Segmentation],
    setup: &ReconstructionSetup,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let (vocab, index) = build_vocab_and_index(segs, setup.order)?;
    let cfg = LayerConfig::new(MethodKind::MorphTe, segs.len(), setup.embed_dim)
        .with_order(setup.order)
        .with_subdim(setup.subdim)
        .with_rank(setup.rank)
        .with_seed(seed);
    let teacher: Layer<f64> = Layer::build(
        &cfg.clone().with_seed(seed.wrapping_add(1)),
        Some(&vocab),
        Some(index.clone()),
    )?;
    let rows = teacher.forward_batch(&(0..segs.len()).collect::<Vec<_>>())?;
    let targets = Matrix::from_fn(segs.len(), setup.embed_dim, |i, j| rows[i][j]);
    let mut layer: Layer<f64> = Layer::build(&cfg, Some(&vocab), Some(index))?;
    let task = TrainTask::Reconstruct { targets };
    let initial = evaluate_loss(&layer, &task)?;
    let mut opt = OptimizerState::adam(setup.lr, ADAM_BETAS, 1e-8);
    let history = train(&mut layer, &task, &mut opt, setup.epochs, setup.batch, seed)?;
    Ok((initial, history))
}
