//! Embedding layers: parameter allocation, initialization and the forward map.
//!
//! Parameter block layouts (all row-major):
//!
//! | kind | blocks |
//! |------|--------|
//! | original | `weight`: `|V| x d` |
//! | matrix_factor | `left`: `|V| x r`, `right`: `r x d` |
//! | word2ket | `word_vectors`: `|V| x (r*n*q)`, rank-major then position |
//! | word2ketxs | `factor.{k}.{j}`: `v_j x d_j` for rank `k`, axis `j` |
//! | tensor_train | `core.{i}`: `v_i x (r_in * d_i * r_out)`, boundary ranks are 1 |
//! | morphte, word2ket_rshare | `morph.{i}`: `|M| x q` for rank `i` |
//! | morphsum | `surface`: `|V| x d`, `morph`: `|M| x d` |
//!
//! Word ids are split into per-axis digits most-significant first.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{LayerConfig, MethodKind};
use crate::error::{Error, Result};
use crate::morphology::{IndexMatrix, MorphemeVocab};
use crate::scalar::Scalar;
use crate::tensor::{add_assign, kron, Matrix, Vector};

/// A named trainable block.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    name: String,
    value: Matrix<T>,
}

impl<T: Scalar> Param<T> {
    pub(crate) fn new(name: impl Into<String>, value: Matrix<T>) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Matrix<T> {
        &self.value
    }

    /// Mutable view of the entries; the shape cannot change.
    pub fn data_mut(&mut self) -> &mut [T] {
        self.value.as_mut_slice()
    }
}

/// A constructed embedding layer of any kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    config: LayerConfig,
    params: Vec<Param<T>>,
    index: Option<IndexMatrix>,
}

impl<T: Scalar> Layer<T> {
    /// Allocates and Xavier-initializes the parameter blocks for `config`.
    ///
    /// MorphTE and MorphSum need the morpheme vocabulary and index built from
    /// a segmentation; `|M|` is taken from the vocabulary when the config
    /// leaves it unset. Word2ket+Rshare draws its own random index from the
    /// config seed unless one is supplied.
    pub fn build(
        config: &LayerConfig,
        vocab: Option<&MorphemeVocab>,
        index: Option<IndexMatrix>,
    ) -> Result<Self> {
        let mut config = config.clone();
        if !config.kind.is_buildable() {
            return Err(Error::config(format!(
                "{} layers are supported for parameter counting only",
                config.kind
            )));
        }
        if config.kind.needs_segmentation() {
            let vocab = vocab.ok_or_else(|| {
                Error::config(format!("{} needs a morpheme vocabulary", config.kind))
            })?;
            match config.morpheme_vocab_size {
                None => config.morpheme_vocab_size = Some(vocab.size()),
                Some(m) if m != vocab.size() => {
                    return Err(Error::config(format!(
                        "config says |M| = {m} but the vocabulary has {}",
                        vocab.size()
                    )))
                }
                Some(_) => {}
            }
            if index.is_none() {
                return Err(Error::config(format!(
                    "{} needs an index matrix",
                    config.kind
                )));
            }
        }
        config.validate()?;

        let index = match (config.kind, index) {
            (MethodKind::Word2ketRshare, None) => Some(build_rshare_index(
                config.vocab_size,
                config.morpheme_vocab_size.unwrap_or(1),
                config.order,
                config.seed,
            )?),
            (k, idx) if k.needs_morpheme_count() => idx,
            (_, _) => None,
        };
        if let Some(idx) = &index {
            check_index(&config, idx)?;
        }

        let shapes = block_shapes(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = shapes
            .into_iter()
            .map(|(name, rows, cols)| Param::new(name, xavier_uniform(rows, cols, &mut rng)))
            .collect();
        Ok(Self {
            config,
            params,
            index,
        })
    }

    /// Reassembles a layer from stored blocks, checking names and shapes.
    pub fn from_parts(
        config: LayerConfig,
        params: Vec<(String, Matrix<T>)>,
        index: Option<IndexMatrix>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = block_shapes(&config);
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "{} expects {} parameter blocks, got {}",
                config.kind,
                expected.len(),
                params.len()
            )));
        }
        for ((name, rows, cols), (got_name, m)) in expected.iter().zip(&params) {
            if name != got_name || *rows != m.rows() || *cols != m.cols() {
                return Err(Error::Checkpoint(format!(
                    "block {got_name:?} ({}x{}) does not match expected {name:?} ({rows}x{cols})",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        match (&index, config.kind.needs_morpheme_count()) {
            (Some(idx), true) => check_index(&config, idx)?,
            (None, true) => {
                return Err(Error::Checkpoint(format!(
                    "{} needs an index block",
                    config.kind
                )))
            }
            _ => {}
        }
        Ok(Self {
            config,
            params: params
                .into_iter()
                .map(|(name, value)| Param::new(name, value))
                .collect(),
            index,
        })
    }

    pub fn config(&self) -> &LayerConfig {
        &self.config
    }

    pub fn kind(&self) -> MethodKind {
        self.config.kind
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn index(&self) -> Option<&IndexMatrix> {
        self.index.as_ref()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Non-trainable integers stored with the layer (the index matrix).
    pub fn constant_count(&self) -> usize {
        match self.config.kind {
            MethodKind::MorphTe | MethodKind::Word2ketRshare => {
                self.index.as_ref().map_or(0, |i| i.ids().len())
            }
            _ => 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    pub(crate) fn check_word(&self, word_id: usize) -> Result<()> {
        if word_id >= self.config.vocab_size {
            return Err(Error::Lookup(format!(
                "word id {word_id} out of range for |V| = {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Word id for a surface form, when the layer carries a word list.
    pub fn word_id(&self, word: &str) -> Result<usize> {
        self.index
            .as_ref()
            .and_then(|i| i.words())
            .and_then(|ws| ws.iter().position(|w| w == word))
            .ok_or_else(|| Error::Lookup(format!("unknown word {word:?}")))
    }

    /// Embedding of one word.
    pub fn forward(&self, word_id: usize) -> Result<Vector<T>> {
        self.check_word(word_id)?;
        let c = &self.config;
        let d = c.embed_dim;
        let mut out = match c.kind {
            MethodKind::Original => self.params[0].value.row(word_id).to_vec(),
            MethodKind::MatrixFactor => {
                let a = self.params[0].value.row(word_id);
                let b = &self.params[1].value;
                let mut out = vec![T::zero(); d];
                for (k, &ak) in a.iter().enumerate() {
                    for (o, &bv) in out.iter_mut().zip(b.row(k)) {
                        *o += ak * bv;
                    }
                }
                out
            }
            MethodKind::MorphSum => {
                let mut out = self.params[0].value.row(word_id).to_vec();
                for m in self.real_morphemes(word_id) {
                    add_assign(&mut out, self.params[1].value.row(m));
                }
                out
            }
            MethodKind::TensorTrain => tt_forward(&self.tt_slices(word_id)),
            _ => {
                let mut acc = vec![T::zero(); c.generated_dim()];
                for term in self.rank_terms(word_id) {
                    add_assign(&mut acc, &kron(&term.factors));
                }
                acc
            }
        };
        out.truncate(d);
        Ok(Vector::from_vec_unchecked(out))
    }

    /// Elementwise [`Layer::forward`]; output order follows `word_ids`.
    pub fn forward_batch(&self, word_ids: &[usize]) -> Result<Vec<Vector<T>>> {
        word_ids.iter().map(|&w| self.forward(w)).collect()
    }

    /// Morpheme ids of a word, skipping padding slots.
    pub(crate) fn real_morphemes(&self, word_id: usize) -> impl Iterator<Item = usize> + '_ {
        let index = self
            .index
            .as_ref()
            .expect("morphological layer has an index");
        let pad = index.pad_id();
        index
            .row(word_id)
            .iter()
            .copied()
            .filter(move |&m| Some(m) != pad)
    }

    /// The simple tensors summed by the entangled kinds, one per rank term.
    pub(crate) fn rank_terms(&self, word_id: usize) -> Vec<RankTerm<'_, T>> {
        let c = &self.config;
        let (n, r) = (c.order, c.rank);
        match c.kind {
            MethodKind::Word2ket => {
                let q = c.resolved_subdim();
                let row = self.params[0].value.row(word_id);
                (0..r)
                    .map(|k| RankTerm {
                        factors: (0..n)
                            .map(|j| &row[(k * n + j) * q..(k * n + j + 1) * q])
                            .collect(),
                        sources: (0..n).map(|j| (0, word_id, (k * n + j) * q)).collect(),
                    })
                    .collect()
            }
            MethodKind::Word2ketXs => {
                let digits = mixed_radix(word_id, &c.vocab_factors);
                (0..r)
                    .map(|k| RankTerm {
                        factors: (0..n)
                            .map(|j| self.params[k * n + j].value.row(digits[j]))
                            .collect(),
                        sources: (0..n).map(|j| (k * n + j, digits[j], 0)).collect(),
                    })
                    .collect()
            }
            MethodKind::MorphTe | MethodKind::Word2ketRshare => {
                let row = self.index.as_ref().expect("index").row(word_id);
                (0..r)
                    .map(|i| RankTerm {
                        factors: row.iter().map(|&m| self.params[i].value.row(m)).collect(),
                        sources: row.iter().map(|&m| (i, m, 0)).collect(),
                    })
                    .collect()
            }
            _ => unreachable!("{} has no rank terms", c.kind),
        }
    }

    /// Word-selected slices of the tensor-train cores.
    pub(crate) fn tt_slices(&self, word_id: usize) -> Vec<CoreSlice<'_, T>> {
        let c = &self.config;
        let digits = mixed_radix(word_id, &c.vocab_factors);
        let n = c.order;
        (0..n)
            .map(|i| CoreSlice {
                data: self.params[i].value.row(digits[i]),
                rank_in: if i == 0 { 1 } else { c.rank },
                width: c.dim_factors[i],
                rank_out: if i == n - 1 { 1 } else { c.rank },
                digit: digits[i],
            })
            .collect()
    }
}

/// One simple tensor: its factor vectors and where each lives.
pub(crate) struct RankTerm<'a, T> {
    pub factors: Vec<&'a [T]>,
    /// `(block, row, column offset)` of each factor.
    pub sources: Vec<(usize, usize, usize)>,
}

/// Row of a tensor-train core, viewed as `(rank_in, width, rank_out)`.
pub(crate) struct CoreSlice<'a, T> {
    pub data: &'a [T],
    pub rank_in: usize,
    pub width: usize,
    pub rank_out: usize,
    pub digit: usize,
}

impl<T: Scalar> CoreSlice<'_, T> {
    #[inline]
    pub fn at(&self, a: usize, y: usize, b: usize) -> T {
        self.data[(a * self.width + y) * self.rank_out + b]
    }
}

/// Left partial contractions: `partials[k]` is `(∏_{i<k} width_i) x rank_in_k`.
pub(crate) fn tt_left_partials<T: Scalar>(slices: &[CoreSlice<'_, T>]) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(slices.len() + 1);
    out.push(vec![T::one()]);
    for s in slices {
        let prev = out.last().unwrap();
        let rows = prev.len() / s.rank_in;
        let mut next = vec![T::zero(); rows * s.width * s.rank_out];
        for p in 0..rows {
            for a in 0..s.rank_in {
                let l = prev[p * s.rank_in + a];
                if l == T::zero() {
                    continue;
                }
                for y in 0..s.width {
                    let base = (p * s.width + y) * s.rank_out;
                    for b in 0..s.rank_out {
                        next[base + b] += l * s.at(a, y, b);
                    }
                }
            }
        }
        out.push(next);
    }
    out
}

/// Right partial contractions: `partials[k]` is `rank_in_k x (∏_{i>=k} width_i)`.
pub(crate) fn tt_right_partials<T: Scalar>(slices: &[CoreSlice<'_, T>]) -> Vec<Vec<T>> {
    let n = slices.len();
    let mut out = vec![Vec::new(); n + 1];
    out[n] = vec![T::one()];
    for k in (0..n).rev() {
        let s = &slices[k];
        let next = &out[k + 1];
        let cols = next.len() / s.rank_out;
        let mut cur = vec![T::zero(); s.rank_in * s.width * cols];
        for a in 0..s.rank_in {
            for y in 0..s.width {
                let base = (a * s.width + y) * cols;
                for b in 0..s.rank_out {
                    let g = s.at(a, y, b);
                    if g == T::zero() {
                        continue;
                    }
                    for (o, &rv) in cur[base..base + cols]
                        .iter_mut()
                        .zip(&next[b * cols..(b + 1) * cols])
                    {
                        *o += g * rv;
                    }
                }
            }
        }
        out[k] = cur;
    }
    out
}

fn tt_forward<T: Scalar>(slices: &[CoreSlice<'_, T>]) -> Vec<T> {
    tt_left_partials(slices).pop().expect("non-empty chain")
}

/// Digits of `value` over the given radices, most significant first.
pub fn mixed_radix(mut value: usize, radices: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; radices.len()];
    for (d, &base) in digits.iter_mut().zip(radices).rev() {
        *d = value % base;
        value /= base;
    }
    digits
}

/// Random index matrix for Word2ket+Rshare: every cell uniform in `[0, |M|)`.
pub fn build_rshare_index(
    vocab_size: usize,
    morpheme_vocab_size: usize,
    order: usize,
    seed: u64,
) -> Result<IndexMatrix> {
    if vocab_size == 0 || morpheme_vocab_size == 0 || order == 0 {
        return Err(Error::invalid("rshare index dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(0, morpheme_vocab_size);
    let ids = (0..vocab_size * order)
        .map(|_| dist.sample(&mut rng))
        .collect();
    IndexMatrix::new(order, morpheme_vocab_size, None, ids, None)
}

/// `(name, rows, cols)` for each block, in storage order.
pub(crate) fn block_shapes(c: &LayerConfig) -> Vec<(String, usize, usize)> {
    let (v, d, n, r) = (c.vocab_size, c.embed_dim, c.order, c.rank);
    let m = c.morpheme_vocab_size.unwrap_or(0);
    match c.kind {
        MethodKind::Original => vec![("weight".into(), v, d)],
        MethodKind::MatrixFactor => vec![("left".into(), v, r), ("right".into(), r, d)],
        MethodKind::Word2ket => vec![("word_vectors".into(), v, r * n * c.resolved_subdim())],
        MethodKind::Word2ketXs => (0..r)
            .flat_map(|k| {
                (0..n).map(move |j| {
                    (
                        format!("factor.{k}.{j}"),
                        c.vocab_factors[j],
                        c.dim_factors[j],
                    )
                })
            })
            .collect(),
        MethodKind::TensorTrain => (0..n)
            .map(|i| {
                let rin = if i == 0 { 1 } else { r };
                let rout = if i == n - 1 { 1 } else { r };
                (
                    format!("core.{i}"),
                    c.vocab_factors[i],
                    rin * c.dim_factors[i] * rout,
                )
            })
            .collect(),
        MethodKind::MorphTe | MethodKind::Word2ketRshare => (0..r)
            .map(|i| (format!("morph.{i}"), m, c.resolved_subdim()))
            .collect(),
        MethodKind::MorphSum => vec![("surface".into(), v, d), ("morph".into(), m, d)],
        MethodKind::MorphLstm => Vec::new(),
    }
}

fn check_index(c: &LayerConfig, idx: &IndexMatrix) -> Result<()> {
    if idx.rows() != c.vocab_size {
        return Err(Error::config(format!(
            "index has {} rows but |V| = {}",
            idx.rows(),
            c.vocab_size
        )));
    }
    if c.kind != MethodKind::MorphSum && idx.order() != c.order {
        return Err(Error::config(format!(
            "index order {} does not match layer order {}",
            idx.order(),
            c.order
        )));
    }
    if Some(idx.morpheme_count()) != c.morpheme_vocab_size {
        return Err(Error::config(format!(
            "index addresses {} morphemes but |M| = {:?}",
            idx.morpheme_count(),
            c.morpheme_vocab_size
        )));
    }
    Ok(())
}

/// Uniform on `±sqrt(6 / (rows + cols))`.
fn xavier_uniform<T: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Matrix::from_fn(rows, cols, |_, _| T::of(dist.sample(rng)))
}
