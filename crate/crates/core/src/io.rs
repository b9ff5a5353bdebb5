//! File formats and run plumbing shared by the command-line tool.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{LayerConfig, MethodKind};
use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::morphology::{
    build_vocab_and_index, load_segmentations, morpheme_stats, IndexMatrix, MorphemeVocab,
    Segmentation, StatsRow,
};
use crate::optim::{OptimizerState, ADAM_BETAS};
use crate::synthetic::balanced_pairs;
use crate::tensor::Matrix;
use crate::train::{Loss, TrainTask};

pub const SEED_ENV: &str = "TENBED_SEED";
pub const RUN_MANIFEST_FILE: &str = "run.json";

/// Process exit status for an error: 3 for I/O, 2 for everything else.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 3,
        _ => 2,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Provenance record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// Input path (as given) to the sha256 of its raw bytes.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs
            .insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        write_file(&dir.join(RUN_MANIFEST_FILE), &format!("{json}\n"))
    }
}

/// `morpheme<TAB>id`, one line per id in id order; the padding morpheme is last.
pub fn vocab_tsv(vocab: &MorphemeVocab) -> String {
    let mut out = String::from("morpheme\tid\n");
    for (m, id) in vocab.entries() {
        let _ = writeln!(out, "{m}\t{id}");
    }
    out
}

/// `word<TAB>id_1<TAB>...<TAB>id_n`, one line per word id.
pub fn index_tsv(index: &IndexMatrix) -> String {
    let mut out = String::from("word");
    for k in 1..=index.order() {
        let _ = write!(out, "\tm{k}");
    }
    out.push('\n');
    for w in 0..index.rows() {
        match index.word(w) {
            Some(word) => out.push_str(word),
            None => {
                let _ = write!(out, "{w}");
            }
        }
        for id in index.row(w) {
            let _ = write!(out, "\t{id}");
        }
        out.push('\n');
    }
    out
}

/// `segmentation<TAB>N=1<TAB>N=2<TAB>N=3<TAB>N=4<TAB>N>4<TAB>|M|`.
pub fn stats_tsv(rows: &[StatsRow]) -> String {
    let mut out = String::from("segmentation\tN=1\tN=2\tN=3\tN=4\tN>4\t|M|\n");
    for r in rows {
        let [a, b, c, d] = r.counts;
        let _ = writeln!(
            out,
            "{}\t{a}\t{b}\t{c}\t{d}\t{}\t{}",
            r.label(),
            r.more,
            r.morphemes
        );
    }
    out
}

/// Writes `vocab.tsv`, `index.tsv`, `stats.tsv` and `run.json` into `out_dir`.
pub fn build_vocab_files(
    seg_path: &Path,
    order: usize,
    out_dir: &Path,
) -> Result<(MorphemeVocab, IndexMatrix)> {
    let raw = read_bytes(seg_path)?;
    let text = String::from_utf8(raw.clone())
        .map_err(|e| Error::invalid(format!("{} is not UTF-8: {e}", seg_path.display())))?;
    let segs = crate::morphology::parse_segmentations(&text)?;
    let (vocab, index) = build_vocab_and_index(&segs, order)?;
    let mut caps = vec![None, Some(order)];
    caps.dedup();
    let stats = morpheme_stats(&segs, &caps)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join("vocab.tsv"), &vocab_tsv(&vocab))?;
    write_file(&out_dir.join("index.tsv"), &index_tsv(&index))?;
    write_file(&out_dir.join("stats.tsv"), &stats_tsv(&stats))?;
    let mut manifest = RunManifest::new("build-vocab", serde_json::json!({ "order": order }), None);
    manifest.add_input(seg_path, &raw);
    manifest.write(out_dir)?;
    Ok((vocab, index))
}

/// Contents of a `key = value` run configuration (TOML syntax).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: String,
    /// Defaults to the number of segmented words when a segmentation file is given.
    pub vocab: Option<usize>,
    pub dim: usize,
    #[serde(default = "one")]
    pub order: usize,
    #[serde(default = "one")]
    pub rank: usize,
    pub subdim: Option<usize>,
    pub morphemes: Option<usize>,
    #[serde(default)]
    pub vocab_factors: Vec<usize>,
    #[serde(default)]
    pub dim_factors: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Segmentation TSV, relative to the config file.
    pub segmentations: Option<PathBuf>,
    /// `reconstruct` or `similarity`.
    #[serde(default = "default_task")]
    pub task: String,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// `adam` or `sgd`.
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    /// Labeled pairs drawn for the similarity task.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
}

fn one() -> usize {
    1
}
fn default_task() -> String {
    "reconstruct".into()
}
fn default_epochs() -> usize {
    10
}
fn default_lr() -> f64 {
    0.01
}
fn default_batch() -> usize {
    32
}
fn default_optimizer() -> String {
    "adam".into()
}
fn default_pairs() -> usize {
    1000
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads `path`; a relative segmentation path is resolved against its directory.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let raw = read_bytes(path)?;
        let text = std::str::from_utf8(&raw)
            .map_err(|e| Error::config(format!("{} is not UTF-8: {e}", path.display())))?;
        let mut cfg = Self::parse(text)?;
        if let Some(seg) = &cfg.segmentations {
            if seg.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.segmentations = Some(base.join(seg));
            }
        }
        Ok((cfg, raw))
    }

    /// Replaces the seed with `value` when it is set; a value that is not
    /// an unsigned integer is a configuration error.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v.trim().parse().map_err(|_| {
                Error::config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            })?;
        }
        Ok(())
    }

    pub fn method(&self) -> Result<MethodKind> {
        self.method.parse()
    }

    pub fn layer_config(&self, vocab_size: usize) -> Result<LayerConfig> {
        let mut cfg = LayerConfig::new(self.method()?, vocab_size, self.dim)
            .with_order(self.order)
            .with_rank(self.rank)
            .with_seed(self.seed)
            .with_factors(self.vocab_factors.clone(), self.dim_factors.clone());
        cfg.subdim = self.subdim;
        cfg.morpheme_vocab_size = self.morphemes;
        Ok(cfg)
    }

    /// Layer config for counting only. Without a segmentation file this
    /// needs `vocab` and, for morpheme kinds, `morphemes`.
    pub fn audit_config(&self) -> Result<LayerConfig> {
        if self.segmentations.is_some() && self.method()?.is_buildable() {
            return Ok(prepare(self)?.layer.config().clone());
        }
        let vocab = self
            .vocab
            .ok_or_else(|| Error::config("set vocab (or segmentations) to audit"))?;
        self.layer_config(vocab)
    }
}

/// A layer built from a run configuration, plus what it was built from.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub layer: Layer<f64>,
    pub words: Option<Vec<String>>,
    pub segmentations: Option<Vec<Segmentation>>,
    pub vocab: Option<MorphemeVocab>,
    /// Index derived from the segmentation (whatever the layer kind).
    pub morph_index: Option<IndexMatrix>,
    /// Raw bytes of the segmentation file, for the run manifest.
    pub seg_bytes: Option<(PathBuf, Vec<u8>)>,
}

pub fn prepare(run: &RunConfig) -> Result<Prepared> {
    let kind = run.method()?;
    let (segs, seg_bytes) = match &run.segmentations {
        Some(p) => {
            let raw = read_bytes(p)?;
            (Some(load_segmentations(p)?), Some((p.clone(), raw)))
        }
        None => (None, None),
    };
    let built = match &segs {
        Some(s) => Some(build_vocab_and_index(s, run.order)?),
        None => None,
    };
    let vocab_size = match (run.vocab, &segs) {
        (Some(v), Some(s)) if v != s.len() => {
            return Err(Error::config(format!(
                "vocab = {v} but the segmentation file has {} words",
                s.len()
            )))
        }
        (Some(v), _) => v,
        (None, Some(s)) => s.len(),
        (None, None) => return Err(Error::config("set vocab or segmentations")),
    };
    let mut cfg = run.layer_config(vocab_size)?;
    if kind == MethodKind::Word2ketRshare && cfg.morpheme_vocab_size.is_none() {
        cfg.morpheme_vocab_size = built.as_ref().map(|(v, _)| v.size());
    }
    let layer = if kind.needs_segmentation() {
        let (vocab, index) = built
            .clone()
            .ok_or_else(|| Error::config(format!("{kind} needs segmentations")))?;
        Layer::build(&cfg, Some(&vocab), Some(index))?
    } else {
        Layer::build(&cfg, None, None)?
    };
    Ok(Prepared {
        layer,
        words: segs
            .as_ref()
            .map(|s| s.iter().map(|x| x.word.clone()).collect()),
        segmentations: segs,
        vocab: built.as_ref().map(|(v, _)| v.clone()),
        morph_index: built.map(|(_, i)| i),
        seg_bytes,
    })
}

/// The training task and optimizer a run configuration asks for.
///
/// `reconstruct` fits the table of a same-shaped layer initialized from
/// `seed + 1`. `similarity` draws balanced shares-a-morpheme pairs from
/// the segmentation.
pub fn task_for(
    run: &RunConfig,
    prepared: &Prepared,
) -> Result<(TrainTask<f64>, OptimizerState<f64>)> {
    let task = match run.task.as_str() {
        "reconstruct" => {
            let layer = &prepared.layer;
            let mut cfg = layer.config().clone();
            cfg.seed = cfg.seed.wrapping_add(1);
            let teacher: Layer<f64> =
                Layer::build(&cfg, prepared.vocab.as_ref(), layer.index().cloned())?;
            let rows = teacher.forward_batch(&(0..layer.vocab_size()).collect::<Vec<_>>())?;
            TrainTask::Reconstruct {
                targets: Matrix::from_fn(layer.vocab_size(), layer.embed_dim(), |i, j| rows[i][j]),
            }
        }
        "similarity" => {
            let index = prepared
                .morph_index
                .as_ref()
                .ok_or_else(|| Error::config("the similarity task needs segmentations"))?;
            TrainTask::WordSimilarity {
                pairs: balanced_pairs(index, run.pairs, run.seed)?,
                loss: Loss::DEFAULT_CONTRASTIVE,
            }
        }
        other => return Err(Error::config(format!("unknown task {other:?}"))),
    };
    let opt = match run.optimizer.as_str() {
        "adam" => OptimizerState::adam(run.lr, ADAM_BETAS, 1e-8),
        "sgd" => OptimizerState::sgd(run.lr),
        other => return Err(Error::config(format!("unknown optimizer {other:?}"))),
    };
    Ok((task, opt))
}

/// `epoch,loss` lines with a header; losses use shortest round-trip form.
pub fn history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    out
}

/// `word<TAB>x_1<TAB>...<TAB>x_d` per requested word.
pub fn embeddings_tsv(rows: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    for (w, v) in rows {
        out.push_str(w);
        for x in v {
            let _ = write!(out, "\t{x}");
        }
        out.push('\n');
    }
    out
}
