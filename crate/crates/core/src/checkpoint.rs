//! On-disk layer checkpoints.
//!
//! A checkpoint is a directory:
//!
//! ```text
//! manifest.json   format_version, tool_version, config, blocks, index shape, words
//! params.bin      per block in manifest order: rows u64, cols u64, rows*cols f64
//! index.bin       only for index-carrying kinds: rows u64, cols u64, rows*cols u64
//! ```
//!
//! All integers and floats are little-endian; matrices are row-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::LayerConfig;
use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::morphology::IndexMatrix;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const INDEX_FILE: &str = "index.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexInfo {
    pub rows: usize,
    pub cols: usize,
    pub morpheme_count: usize,
    pub pad_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config: LayerConfig,
    pub blocks: Vec<BlockInfo>,
    pub index: Option<IndexInfo>,
    /// Surface forms by word id, when known.
    pub words: Option<Vec<String>>,
}

/// A loaded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub layer: Layer<T>,
    pub words: Option<Vec<String>>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Word id for `key`: a known surface form, or else a decimal id.
    pub fn lookup(&self, key: &str) -> Result<usize> {
        if let Some(ws) = &self.words {
            if let Some(i) = ws.iter().position(|w| w == key) {
                return Ok(i);
            }
        }
        match key.parse::<usize>() {
            Ok(i) if i < self.layer.vocab_size() => Ok(i),
            _ => Err(Error::Lookup(format!("unknown word {key:?}"))),
        }
    }
}

fn put_u64(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u64).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::Checkpoint(format!("{} truncated at byte {}", self.what, self.pos))
        })?;
        self.pos = end;
        Ok(chunk.try_into().expect("8 bytes"))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take8()?);
        usize::try_from(v)
            .map_err(|_| Error::Checkpoint(format!("{} value {v} too large", self.what)))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take8()?))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} has {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn manifest_for<T: Scalar>(layer: &Layer<T>, words: Option<&[String]>) -> Manifest {
    let words = words.map(<[String]>::to_vec).or_else(|| {
        layer
            .index()
            .and_then(|i| i.words())
            .map(<[String]>::to_vec)
    });
    Manifest {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: layer.config().clone(),
        blocks: layer
            .params()
            .iter()
            .map(|p| BlockInfo {
                name: p.name().to_string(),
                rows: p.value().rows(),
                cols: p.value().cols(),
            })
            .collect(),
        index: layer.index().map(|i| IndexInfo {
            rows: i.rows(),
            cols: i.order(),
            morpheme_count: i.morpheme_count(),
            pad_id: i.pad_id(),
        }),
        words,
    }
}

pub fn encode_params<T: Scalar>(layer: &Layer<T>) -> Vec<u8> {
    let total: usize = layer
        .params()
        .iter()
        .map(|p| 16 + 8 * p.value().len())
        .sum();
    let mut buf = Vec::with_capacity(total);
    for p in layer.params() {
        put_u64(&mut buf, p.value().rows());
        put_u64(&mut buf, p.value().cols());
        for &x in p.value().as_slice() {
            buf.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    buf
}

pub fn encode_index(index: &IndexMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 8 * index.ids().len());
    put_u64(&mut buf, index.rows());
    put_u64(&mut buf, index.order());
    for &id in index.ids() {
        put_u64(&mut buf, id);
    }
    buf
}

/// Writes `layer` to `dir`, creating it if needed. Existing checkpoint
/// files in `dir` are overwritten.
pub fn save<T: Scalar>(layer: &Layer<T>, dir: &Path, words: Option<&[String]>) -> Result<()> {
    if let Some(ws) = words {
        if ws.len() != layer.vocab_size() {
            return Err(Error::invalid(format!(
                "{} words for a vocabulary of {}",
                ws.len(),
                layer.vocab_size()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = manifest_for(layer, words);
    let json =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write(&dir.join(MANIFEST_FILE), format!("{json}\n").as_bytes())?;
    write(&dir.join(PARAMS_FILE), &encode_params(layer))?;
    let index_path = dir.join(INDEX_FILE);
    match layer.index() {
        Some(idx) => write(&index_path, &encode_index(idx))?,
        None if index_path.exists() => {
            fs::remove_file(&index_path).map_err(|e| Error::io(&index_path, e))?
        }
        None => {}
    }
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(dir: &Path) -> Result<Checkpoint<T>> {
    let raw = read(&dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_slice(&raw)
        .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }

    let bytes = read(&dir.join(PARAMS_FILE))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        what: PARAMS_FILE,
    };
    let mut blocks = Vec::with_capacity(manifest.blocks.len());
    for info in &manifest.blocks {
        let (rows, cols) = (r.usize()?, r.usize()?);
        if (rows, cols) != (info.rows, info.cols) {
            return Err(Error::Checkpoint(format!(
                "block {:?} stored as {rows}x{cols}, manifest says {}x{}",
                info.name, info.rows, info.cols
            )));
        }
        let data = (0..rows * cols)
            .map(|_| r.f64().map(T::of))
            .collect::<Result<Vec<_>>>()?;
        let m = Matrix::from_vec(rows, cols, data)
            .map_err(|e| Error::Checkpoint(format!("block {:?}: {e}", info.name)))?;
        blocks.push((info.name.clone(), m));
    }
    r.finish()?;

    let index = match &manifest.index {
        None => None,
        Some(info) => {
            let bytes = read(&dir.join(INDEX_FILE))?;
            let mut r = Reader {
                bytes: &bytes,
                pos: 0,
                what: INDEX_FILE,
            };
            let (rows, cols) = (r.usize()?, r.usize()?);
            if (rows, cols) != (info.rows, info.cols) {
                return Err(Error::Checkpoint(format!(
                    "index stored as {rows}x{cols}, manifest says {}x{}",
                    info.rows, info.cols
                )));
            }
            let ids = (0..rows * cols)
                .map(|_| r.usize())
                .collect::<Result<Vec<_>>>()?;
            r.finish()?;
            let words = manifest.words.clone();
            let idx = IndexMatrix::new(cols, info.morpheme_count, info.pad_id, ids, words)
                .map_err(|e| Error::Checkpoint(format!("index: {e}")))?;
            Some(idx)
        }
    };

    let layer = Layer::from_parts(manifest.config, blocks, index)?;
    Ok(Checkpoint {
        layer,
        words: manifest.words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MethodKind;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LayerConfig::new(MethodKind::Word2ket, 6, 9)
            .with_order(2)
            .with_rank(2)
            .with_seed(4);
        let layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        save(&layer, dir.path(), None).unwrap();
        let back: Checkpoint<f64> = load(dir.path()).unwrap();
        assert_eq!(encode_params(&back.layer), encode_params(&layer));
        for w in 0..6 {
            let a = layer.forward(w).unwrap();
            let b = back.layer.forward(w).unwrap();
            assert!(a
                .iter()
                .zip(b.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LayerConfig::new(MethodKind::Original, 3, 2);
        let layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        save(&layer, dir.path(), None).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(
            &path,
            text.replace("\"format_version\": 1", "\"format_version\": 7"),
        )
        .unwrap();
        let err = load::<f64>(dir.path()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::CheckpointVersion {
                    found: 7,
                    expected: 1
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn truncated_params_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LayerConfig::new(MethodKind::Original, 3, 2);
        let layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        save(&layer, dir.path(), None).unwrap();
        let path = dir.path().join(PARAMS_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load::<f64>(dir.path()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn lookup_by_word_or_id() {
        let cfg = LayerConfig::new(MethodKind::Original, 2, 2);
        let ck = Checkpoint {
            layer: Layer::<f64>::build(&cfg, None, None).unwrap(),
            words: Some(vec!["a".into(), "b".into()]),
        };
        assert_eq!(ck.lookup("b").unwrap(), 1);
        assert_eq!(ck.lookup("0").unwrap(), 0);
        assert!(matches!(ck.lookup("zz"), Err(Error::Lookup(_))));
        assert!(matches!(ck.lookup("2"), Err(Error::Lookup(_))));
    }
}
