//! Method kinds and the configuration that fully determines a layer's shape.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// Plain `|V| x d` lookup table.
    Original,
    /// `|V| x r` times `r x d`.
    MatrixFactor,
    /// Chain of 3-way cores over factored vocabulary and embedding axes.
    TensorTrain,
    /// Per-word entangled tensor of rank `r` and order `n`.
    Word2ket,
    /// Entangled tensor over factored vocabulary and embedding axes.
    #[serde(rename = "word2ketxs")]
    Word2ketXs,
    /// Entangled tensor of morpheme vectors selected by the index matrix.
    #[serde(rename = "morphte")]
    MorphTe,
    /// Surface-form vector plus the word's morpheme vectors.
    #[serde(rename = "morphsum")]
    MorphSum,
    /// MorphTE layout with a random index matrix.
    Word2ketRshare,
    /// Morpheme vectors composed by an LSTM. Parameter counting only.
    #[serde(rename = "morphlstm")]
    MorphLstm,
}

impl MethodKind {
    /// Every kind that can be built into a layer.
    pub const BUILDABLE: [MethodKind; 8] = [
        MethodKind::Original,
        MethodKind::MatrixFactor,
        MethodKind::TensorTrain,
        MethodKind::Word2ket,
        MethodKind::Word2ketXs,
        MethodKind::MorphTe,
        MethodKind::MorphSum,
        MethodKind::Word2ketRshare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Original => "original",
            MethodKind::MatrixFactor => "matrix_factor",
            MethodKind::TensorTrain => "tensor_train",
            MethodKind::Word2ket => "word2ket",
            MethodKind::Word2ketXs => "word2ketxs",
            MethodKind::MorphTe => "morphte",
            MethodKind::MorphSum => "morphsum",
            MethodKind::Word2ketRshare => "word2ket_rshare",
            MethodKind::MorphLstm => "morphlstm",
        }
    }

    /// Kinds whose forward map reads a word's morphemes from a segmentation.
    pub fn needs_segmentation(self) -> bool {
        matches!(
            self,
            MethodKind::MorphTe | MethodKind::MorphSum | MethodKind::MorphLstm
        )
    }

    /// Kinds whose parameter count depends on `|M|`.
    pub fn needs_morpheme_count(self) -> bool {
        self.needs_segmentation() || self == MethodKind::Word2ketRshare
    }

    pub fn is_buildable(self) -> bool {
        self != MethodKind::MorphLstm
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | '+' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        Ok(match norm.as_str() {
            "original" => MethodKind::Original,
            "matrixfactor" | "mf" => MethodKind::MatrixFactor,
            "tensortrain" | "tt" => MethodKind::TensorTrain,
            "word2ket" => MethodKind::Word2ket,
            "word2ketxs" => MethodKind::Word2ketXs,
            "morphte" => MethodKind::MorphTe,
            "morphsum" => MethodKind::MorphSum,
            "word2ketrshare" | "rshare" => MethodKind::Word2ketRshare,
            "morphlstm" => MethodKind::MorphLstm,
            _ => return Err(Error::config(format!("unknown method {s:?}"))),
        })
    }
}

/// Everything needed to allocate and initialize a layer.
///
/// Fields irrelevant to a kind are ignored by it: `Original` reads only
/// `vocab_size` and `embed_dim`, `MatrixFactor` adds `rank`, and so on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub kind: MethodKind,
    pub vocab_size: usize,
    pub embed_dim: usize,
    #[serde(default = "one")]
    pub order: usize,
    #[serde(default = "one")]
    pub rank: usize,
    /// Length `q` of the small vectors; defaults to the smallest `q` with `q^n >= d`.
    #[serde(default)]
    pub subdim: Option<usize>,
    /// Per-axis vocabulary factors (tensor train, word2ketXS).
    #[serde(default)]
    pub vocab_factors: Vec<usize>,
    /// Per-axis embedding factors (tensor train, word2ketXS).
    #[serde(default)]
    pub dim_factors: Vec<usize>,
    /// `|M|`, including the padding morpheme.
    #[serde(default)]
    pub morpheme_vocab_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl LayerConfig {
    pub fn new(kind: MethodKind, vocab_size: usize, embed_dim: usize) -> Self {
        Self {
            kind,
            vocab_size,
            embed_dim,
            order: 1,
            rank: 1,
            subdim: None,
            vocab_factors: Vec::new(),
            dim_factors: Vec::new(),
            morpheme_vocab_size: None,
            seed: 0,
        }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = rank;
        self
    }

    pub fn with_subdim(mut self, q: usize) -> Self {
        self.subdim = Some(q);
        self
    }

    pub fn with_factors(mut self, vocab_factors: Vec<usize>, dim_factors: Vec<usize>) -> Self {
        self.vocab_factors = vocab_factors;
        self.dim_factors = dim_factors;
        self
    }

    pub fn with_morphemes(mut self, m: usize) -> Self {
        self.morpheme_vocab_size = Some(m);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `q`: explicit, or the smallest integer with `q^n >= d`.
    pub fn resolved_subdim(&self) -> usize {
        self.subdim
            .unwrap_or_else(|| smallest_root(self.embed_dim, self.order))
    }

    /// Length of the untruncated generated vector.
    pub fn generated_dim(&self) -> usize {
        match self.kind {
            MethodKind::Word2ket | MethodKind::MorphTe | MethodKind::Word2ketRshare => {
                checked_pow(self.resolved_subdim(), self.order).unwrap_or(usize::MAX)
            }
            MethodKind::TensorTrain | MethodKind::Word2ketXs => self.dim_factors.iter().product(),
            _ => self.embed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind;
        if self.vocab_size == 0 || self.embed_dim == 0 {
            return Err(Error::config("vocab_size and embed_dim must be positive"));
        }
        if self.order == 0 || self.rank == 0 {
            return Err(Error::config("order and rank must be at least 1"));
        }
        if kind.needs_morpheme_count() && self.morpheme_vocab_size.unwrap_or(0) == 0 {
            return Err(Error::config(format!(
                "{kind} needs a morpheme vocabulary size"
            )));
        }
        match kind {
            MethodKind::Word2ket | MethodKind::MorphTe | MethodKind::Word2ketRshare => {
                let q = self.resolved_subdim();
                if q == 0 {
                    return Err(Error::config("subdim must be positive"));
                }
                match checked_pow(q, self.order) {
                    Some(g) if g >= self.embed_dim => {}
                    Some(g) => {
                        return Err(Error::config(format!(
                            "q^n = {q}^{} = {g} is smaller than d = {}",
                            self.order, self.embed_dim
                        )))
                    }
                    None => return Err(Error::config("q^n overflows")),
                }
            }
            MethodKind::TensorTrain | MethodKind::Word2ketXs => {
                if kind == MethodKind::TensorTrain && self.order < 2 {
                    return Err(Error::config("tensor train needs order >= 2"));
                }
                if self.vocab_factors.len() != self.order || self.dim_factors.len() != self.order {
                    return Err(Error::config(format!(
                        "{kind} needs {} vocabulary and embedding factors",
                        self.order
                    )));
                }
                if self.vocab_factors.contains(&0) || self.dim_factors.contains(&0) {
                    return Err(Error::config("factors must be positive"));
                }
                let pv = checked_product(&self.vocab_factors);
                let pd = checked_product(&self.dim_factors);
                if pv.is_none_or(|p| p < self.vocab_size) {
                    return Err(Error::config(format!(
                        "vocabulary factors {:?} do not cover |V| = {}",
                        self.vocab_factors, self.vocab_size
                    )));
                }
                if pd.is_none_or(|p| p < self.embed_dim) {
                    return Err(Error::config(format!(
                        "embedding factors {:?} do not cover d = {}",
                        self.dim_factors, self.embed_dim
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Short human-readable parameter summary.
    pub fn summary(&self) -> String {
        let mut s = format!("|V|={} d={}", self.vocab_size, self.embed_dim);
        match self.kind {
            MethodKind::Original => {}
            MethodKind::MatrixFactor => s += &format!(" r={}", self.rank),
            MethodKind::TensorTrain | MethodKind::Word2ketXs => {
                s += &format!(
                    " n={} r={} dV={:?} dd={:?}",
                    self.order, self.rank, self.vocab_factors, self.dim_factors
                )
            }
            MethodKind::Word2ket => {
                s += &format!(
                    " n={} r={} q={}",
                    self.order,
                    self.rank,
                    self.resolved_subdim()
                )
            }
            MethodKind::MorphTe | MethodKind::Word2ketRshare => {
                s += &format!(
                    " |M|={} n={} r={} q={}",
                    self.morpheme_vocab_size.unwrap_or(0),
                    self.order,
                    self.rank,
                    self.resolved_subdim()
                )
            }
            MethodKind::MorphSum | MethodKind::MorphLstm => {
                s += &format!(" |M|={}", self.morpheme_vocab_size.unwrap_or(0))
            }
        }
        s
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    base.checked_pow(u32::try_from(exp).ok()?)
}

fn checked_product(xs: &[usize]) -> Option<usize> {
    xs.iter().try_fold(1usize, |acc, &x| acc.checked_mul(x))
}

/// Smallest `q >= 1` with `q^n >= d`.
pub fn smallest_root(d: usize, n: usize) -> usize {
    if n == 0 {
        return d.max(1);
    }
    let mut q = (d as f64).powf(1.0 / n as f64).floor().max(1.0) as usize;
    while q > 1 && checked_pow(q - 1, n).is_some_and(|g| g >= d) {
        q -= 1;
    }
    while checked_pow(q, n).is_some_and(|g| g < d) {
        q += 1;
    }
    q
}
