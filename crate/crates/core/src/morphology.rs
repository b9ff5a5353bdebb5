//! Morpheme vocabularies and the word-by-order index matrix.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Token written for the padding morpheme in vocabulary files.
pub const PAD_TOKEN: &str = "<pad>";

/// A word and its ordered morphemes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub word: String,
    pub morphemes: Vec<String>,
}

impl Segmentation {
    pub fn new(word: impl Into<String>, morphemes: Vec<String>) -> Result<Self> {
        let word = word.into();
        if word.is_empty() {
            return Err(Error::invalid("word must be non-empty"));
        }
        if morphemes.is_empty() || morphemes.iter().any(|m| m.is_empty()) {
            return Err(Error::invalid(format!(
                "segmentation of {word:?} needs at least one non-empty morpheme"
            )));
        }
        Ok(Self { word, morphemes })
    }
}

/// One position of a fixed-length morpheme sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Slot {
    Morpheme(String),
    Pad,
}

impl Slot {
    pub fn as_str(&self) -> &str {
        match self {
            Slot::Morpheme(m) => m,
            Slot::Pad => PAD_TOKEN,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parses the segmentation TSV format: `word<TAB>m1 m2 ... ml` per line.
///
/// Blank lines and lines starting with `#` are skipped. Line numbers in
/// errors are 1-based.
pub fn parse_segmentations(text: &str) -> Result<Vec<Segmentation>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (word, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected `word<TAB>morphemes`".into(),
        })?;
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("invalid word {word:?}"),
            });
        }
        let morphemes: Vec<String> = rest.split_whitespace().map(str::to_owned).collect();
        if morphemes.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("no morphemes for {word:?}"),
            });
        }
        if !seen.insert(word.to_owned()) {
            return Err(Error::DuplicateWord {
                word: word.to_owned(),
                line: line_no,
            });
        }
        out.push(Segmentation {
            word: word.to_owned(),
            morphemes,
        });
    }
    Ok(out)
}

pub fn load_segmentations(path: impl AsRef<Path>) -> Result<Vec<Segmentation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_segmentations(&text)
}

/// Fixes a morpheme sequence to length `n`.
///
/// Shorter sequences are padded; longer ones keep the first `n-1`
/// morphemes and merge the remainder into the last slot.
pub fn truncate_pad(morphemes: &[String], n: usize) -> Result<Vec<Slot>> {
    if morphemes.is_empty() {
        return Err(Error::invalid("morpheme list must be non-empty"));
    }
    if n == 0 {
        return Err(Error::invalid("order must be at least 1"));
    }
    let l = morphemes.len();
    let mut out: Vec<Slot> = Vec::with_capacity(n);
    if l <= n {
        out.extend(morphemes.iter().cloned().map(Slot::Morpheme));
        out.resize(n, Slot::Pad);
    } else {
        out.extend(morphemes[..n - 1].iter().cloned().map(Slot::Morpheme));
        out.push(Slot::Morpheme(morphemes[n - 1..].concat()));
    }
    Ok(out)
}

/// Morpheme string to dense id table. The padding morpheme always takes the last id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphemeVocab {
    morphemes: Vec<String>,
    id_of: HashMap<String, usize>,
}

impl MorphemeVocab {
    /// Builds from real morphemes in id order; PAD is appended.
    pub fn from_morphemes(morphemes: Vec<String>) -> Result<Self> {
        let mut id_of = HashMap::with_capacity(morphemes.len());
        for (id, m) in morphemes.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::invalid("empty morpheme"));
            }
            if id_of.insert(m.clone(), id).is_some() {
                return Err(Error::invalid(format!("morpheme {m:?} listed twice")));
            }
        }
        Ok(Self { morphemes, id_of })
    }

    /// |M|, including the padding morpheme.
    pub fn size(&self) -> usize {
        self.morphemes.len() + 1
    }

    pub fn pad_id(&self) -> usize {
        self.morphemes.len()
    }

    pub fn id(&self, slot: &Slot) -> Option<usize> {
        match slot {
            Slot::Pad => Some(self.pad_id()),
            Slot::Morpheme(m) => self.id_of.get(m).copied(),
        }
    }

    pub fn slot(&self, id: usize) -> Option<Slot> {
        if id == self.pad_id() {
            Some(Slot::Pad)
        } else {
            self.morphemes.get(id).cloned().map(Slot::Morpheme)
        }
    }

    /// `(token, id)` pairs in id order, PAD last.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.morphemes
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(PAD_TOKEN))
            .enumerate()
            .map(|(id, m)| (m, id))
    }
}

/// `|V| x n` table of morpheme ids, one row per word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMatrix {
    order: usize,
    morpheme_count: usize,
    pad_id: Option<usize>,
    ids: Vec<usize>,
    words: Option<Vec<String>>,
}

impl IndexMatrix {
    /// Validates ids against `morpheme_count` and, when `pad_id` is set,
    /// rejects rows made only of padding.
    pub fn new(
        order: usize,
        morpheme_count: usize,
        pad_id: Option<usize>,
        ids: Vec<usize>,
        words: Option<Vec<String>>,
    ) -> Result<Self> {
        if order == 0 || morpheme_count == 0 {
            return Err(Error::invalid("order and morpheme count must be positive"));
        }
        if ids.is_empty() || !ids.len().is_multiple_of(order) {
            return Err(Error::invalid(format!(
                "{} ids do not form rows of length {order}",
                ids.len()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= morpheme_count) {
            return Err(Error::invalid(format!(
                "morpheme id {bad} out of range for |M| = {morpheme_count}"
            )));
        }
        if let Some(pad) = pad_id {
            if pad >= morpheme_count {
                return Err(Error::invalid("pad id out of range"));
            }
            if ids.chunks(order).any(|row| row.iter().all(|&id| id == pad)) {
                return Err(Error::invalid("index row consists only of padding"));
            }
        }
        let rows = ids.len() / order;
        if let Some(w) = &words {
            if w.len() != rows {
                return Err(Error::invalid(format!(
                    "{} words for {rows} index rows",
                    w.len()
                )));
            }
        }
        Ok(Self {
            order,
            morpheme_count,
            pad_id,
            ids,
            words,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rows(&self) -> usize {
        self.ids.len() / self.order
    }

    pub fn morpheme_count(&self) -> usize {
        self.morpheme_count
    }

    pub fn pad_id(&self) -> Option<usize> {
        self.pad_id
    }

    pub fn row(&self, word_id: usize) -> &[usize] {
        &self.ids[word_id * self.order..(word_id + 1) * self.order]
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn words(&self) -> Option<&[String]> {
        self.words.as_deref()
    }

    pub fn word(&self, word_id: usize) -> Option<&str> {
        self.words.as_ref()?.get(word_id).map(String::as_str)
    }

    /// Attaches (or replaces) the row labels.
    pub fn with_words(mut self, words: Vec<String>) -> Result<Self> {
        if words.len() != self.rows() {
            return Err(Error::invalid(format!(
                "{} words for {} index rows",
                words.len(),
                self.rows()
            )));
        }
        self.words = Some(words);
        Ok(self)
    }

    pub fn decode_row(&self, vocab: &MorphemeVocab, word_id: usize) -> Option<Vec<Slot>> {
        self.row(word_id).iter().map(|&id| vocab.slot(id)).collect()
    }
}

/// Builds the morpheme vocabulary and index matrix at order `n`.
///
/// Ids are assigned in first-appearance order over the truncated sequences,
/// scanning words in input order; the padding morpheme takes the last id.
pub fn build_vocab_and_index(
    segs: &[Segmentation],
    n: usize,
) -> Result<(MorphemeVocab, IndexMatrix)> {
    if segs.is_empty() {
        return Err(Error::invalid("no segmentations"));
    }
    let mut words_seen = HashSet::with_capacity(segs.len());
    let mut rows = Vec::with_capacity(segs.len());
    let mut morphemes = Vec::new();
    let mut id_of: HashMap<String, usize> = HashMap::new();
    for seg in segs {
        if !words_seen.insert(seg.word.as_str()) {
            return Err(Error::invalid(format!("duplicate word {:?}", seg.word)));
        }
        let slots = truncate_pad(&seg.morphemes, n)?;
        for slot in &slots {
            if let Slot::Morpheme(m) = slot {
                if !id_of.contains_key(m) {
                    id_of.insert(m.clone(), morphemes.len());
                    morphemes.push(m.clone());
                }
            }
        }
        rows.push(slots);
    }
    let vocab = MorphemeVocab::from_morphemes(morphemes)?;
    let ids = rows
        .iter()
        .flat_map(|slots| slots.iter().map(|s| vocab.id(s).expect("assigned above")))
        .collect();
    let words = segs.iter().map(|s| s.word.clone()).collect();
    let index = IndexMatrix::new(n, vocab.size(), Some(vocab.pad_id()), ids, Some(words))?;
    Ok((vocab, index))
}

/// Random three-way split used as a morphology-free control.
///
/// Words of at most three characters stay whole. Longer words are cut at
/// two distinct internal gaps drawn uniformly without replacement; gaps are
/// between Unicode scalar values.
pub fn random_seg(word: &str, seed: u64) -> Segmentation {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() <= 3 {
        return Segmentation {
            word: word.to_owned(),
            morphemes: vec![word.to_owned()],
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // gap g sits between chars[g-1] and chars[g], g in 1..len
    let mut gaps: Vec<usize> = sample(&mut rng, chars.len() - 1, 2)
        .into_iter()
        .map(|g| g + 1)
        .collect();
    gaps.sort_unstable();
    let piece = |a: usize, b: usize| chars[a..b].iter().collect::<String>();
    Segmentation {
        word: word.to_owned(),
        morphemes: vec![
            piece(0, gaps[0]),
            piece(gaps[0], gaps[1]),
            piece(gaps[1], chars.len()),
        ],
    }
}

/// Cap on the number of morphemes per word; `None` leaves sequences uncapped.
pub type MorphemeCap = Option<usize>;

/// One row of the segmentation statistics table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsRow {
    pub cap: MorphemeCap,
    /// Words with exactly 1, 2, 3 and 4 morphemes.
    pub counts: [usize; 4],
    /// Words with more than 4 morphemes.
    pub more: usize,
    /// Distinct morpheme strings after truncation; the padding morpheme is not counted.
    pub morphemes: usize,
}

impl StatsRow {
    pub fn label(&self) -> String {
        match self.cap {
            Some(k) => format!("mor_{k}"),
            None => "mor_inf".to_owned(),
        }
    }
}

pub fn morpheme_stats(segs: &[Segmentation], caps: &[MorphemeCap]) -> Result<Vec<StatsRow>> {
    if segs.is_empty() {
        return Err(Error::invalid("no segmentations"));
    }
    caps.iter()
        .map(|&cap| {
            let mut counts = [0usize; 4];
            let mut more = 0;
            let mut distinct: HashSet<String> = HashSet::new();
            for seg in segs {
                let slots = match cap {
                    Some(k) => truncate_pad(&seg.morphemes, k)?,
                    None => seg.morphemes.iter().cloned().map(Slot::Morpheme).collect(),
                };
                let mut real = 0;
                for slot in slots {
                    if let Slot::Morpheme(m) = slot {
                        real += 1;
                        distinct.insert(m);
                    }
                }
                match real {
                    1..=4 => counts[real - 1] += 1,
                    _ => more += 1,
                }
            }
            Ok(StatsRow {
                cap,
                counts,
                more,
                morphemes: distinct.len(),
            })
        })
        .collect()
}
