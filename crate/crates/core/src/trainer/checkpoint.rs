//! Versioned binary checkpoint format.
//!
//! ```text
//! magic "ANMTCKPT" | version u32 | block count u32 | blocks...
//! block: tag [u8; 4] | payload length u64 | payload | crc32(payload) u32
//! ```
//!
//! Blocks, in order: `META` (JSON: model config, epoch, RNG state, wall
//! time), `VSRC` and `VTGT` (vocabulary files), then one `TENS` block per
//! parameter tensor (name, shape, little-endian f64 values). All integers
//! are little-endian.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Vocabulary};
use crate::model::{ModelConfig, ModelParams};
use crate::nn::{ParamSet, Tensor};

pub const MAGIC: &[u8; 8] = b"ANMTCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checksum mismatch in block {index} ({tag})")]
    Checksum { index: usize, tag: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Vocabulary(#[from] CorpusError),
}

/// Seed and stream position of the trainer's ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

/// A self-contained snapshot of a model and its training progress.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    /// Completed epochs in the current training phase.
    pub epoch: usize,
    pub rng: RngState,
    /// Cumulative training wall time of the phase, in seconds.
    pub wall_seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    epoch: usize,
    rng: RngState,
    wall_seconds: f64,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut blocks: Vec<([u8; 4], Vec<u8>)> = Vec::new();
        let meta = Meta {
            config: self.config.clone(),
            epoch: self.epoch,
            rng: self.rng,
            wall_seconds: self.wall_seconds,
        };
        blocks.push((
            *b"META",
            serde_json::to_vec(&meta).expect("meta serializes"),
        ));
        for (tag, vocab) in [(*b"VSRC", &self.src_vocab), (*b"VTGT", &self.tgt_vocab)] {
            let mut buf = Vec::new();
            vocab.write_to(&mut buf).expect("write to Vec");
            blocks.push((tag, buf));
        }
        for (name, t) in self.params.named_tensors() {
            let mut buf = Vec::with_capacity(16 + name.len() + 8 * t.len());
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &dim in t.shape() {
                buf.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            blocks.push((*b"TENS", buf));
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (tag, payload) in blocks {
            out.extend_from_slice(&tag);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&payload);
            out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        }
        out
    }

    /// Encoding with the wall-time field zeroed: the part of a checkpoint that
    /// is a pure function of seed, configuration and data.
    pub fn deterministic_bytes(&self) -> Vec<u8> {
        let mut c = self.clone();
        c.wall_seconds = 0.0;
        c.encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let count = r.u32("block count")? as usize;
        let mut blocks = Vec::with_capacity(count);
        for index in 0..count {
            let tag = r.take(4, "block tag")?.to_vec();
            let len = r.u64("block length")? as usize;
            let payload = r.take(len, "block payload")?;
            let crc = r.u32("block checksum")?;
            let tag = String::from_utf8_lossy(&tag).into_owned();
            if crc32fast::hash(payload) != crc {
                return Err(CheckpointError::Checksum { index, tag });
            }
            blocks.push((tag, payload));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }

        let mut it = blocks.into_iter();
        let mut expect = |want: &str| {
            it.next()
                .filter(|(tag, _)| tag == want)
                .map(|(_, p)| p)
                .ok_or_else(|| CheckpointError::Malformed(format!("missing {want} block")))
        };
        let meta: Meta = serde_json::from_slice(expect("META")?)
            .map_err(|e| CheckpointError::Malformed(format!("meta: {e}")))?;
        let src_vocab = Vocabulary::read_from(expect("VSRC")?)?;
        let tgt_vocab = Vocabulary::read_from(expect("VTGT")?)?;

        let mut params = ModelParams::zeros(&meta.config);
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let payload = expect("TENS")?;
            let tensor = decode_tensor(payload, name)?;
            if tensor.shape() != slot.shape() {
                return Err(CheckpointError::Malformed(format!(
                    "tensor {name} has shape {:?}, config implies {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor;
        }
        if expect("TENS").is_ok() {
            return Err(CheckpointError::Malformed("extra tensor blocks".into()));
        }
        if src_vocab.len() != meta.config.src_vocab_size
            || tgt_vocab.len() != meta.config.tgt_vocab_size
        {
            return Err(CheckpointError::Malformed(
                "vocabulary sizes disagree with the model config".into(),
            ));
        }
        Ok(Checkpoint {
            config: meta.config,
            params,
            src_vocab,
            tgt_vocab,
            epoch: meta.epoch,
            rng: meta.rng,
            wall_seconds: meta.wall_seconds,
        })
    }

    /// Writes the checkpoint and a `.summary.txt` sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io_err = |p: &Path| {
            let p = p.display().to_string();
            move |source| CheckpointError::Io { path: p, source }
        };
        let bytes = self.encode();
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&bytes).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, path).map_err(io_err(path))?;
        let sidecar = summary_path(path);
        fs::write(&sidecar, self.summary(&bytes)).map_err(io_err(&sidecar))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode(&bytes)
    }

    fn summary(&self, bytes: &[u8]) -> String {
        let c = &self.config;
        format!(
            "format_version: {FORMAT_VERSION}\n\
             epoch: {}\n\
             wall_seconds: {:.3}\n\
             seed: {}\n\
             embedding_dim: {}\nhidden_dim: {}\nattention_hidden: {}\nreadout_hidden: {}\n\
             src_vocab_size: {}\ntgt_vocab_size: {}\nmax_decode_len: {}\n\
             parameters: {}\n\
             file_crc32: {:08x}\n",
            self.epoch,
            self.wall_seconds,
            self.rng.seed,
            c.embedding_dim,
            c.hidden_dim,
            c.attention_hidden,
            c.readout_hidden,
            c.src_vocab_size,
            c.tgt_vocab_size,
            c.max_decode_len,
            self.params.num_scalars(),
            crc32fast::hash(bytes),
        )
    }
}

pub fn summary_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.txt");
    path.with_file_name(name)
}

fn decode_tensor(payload: &[u8], expected_name: &str) -> Result<Tensor, CheckpointError> {
    let mut r = Reader {
        bytes: payload,
        pos: 0,
    };
    let name_len = r.u32("tensor name length")? as usize;
    let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
        .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?;
    if name != expected_name {
        return Err(CheckpointError::Malformed(format!(
            "expected tensor {expected_name}, found {name}"
        )));
    }
    let ndims = r.u32("tensor rank")? as usize;
    let mut shape = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        shape.push(r.u64("tensor dim")? as usize);
    }
    let len: usize = shape.iter().product();
    let raw = r.take(len * 8, "tensor data")?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Tensor::from_vec(&shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let src = Vocabulary::build([tokenize("das haus ist klein")], 10).unwrap();
        let tgt = Vocabulary::build([tokenize("the house is small")], 10).unwrap();
        let mut config = ModelConfig::desk(src.len(), tgt.len());
        config.embedding_dim = 6;
        config.hidden_dim = 5;
        config.attention_hidden = 4;
        config.readout_hidden = 7;
        let params = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        Checkpoint {
            config,
            params,
            src_vocab: src,
            tgt_vocab: tgt,
            epoch: 3,
            rng: RngState {
                seed: 9,
                word_pos: 1234,
            },
            wall_seconds: 1.5,
        }
    }

    #[test]
    fn encode_decode_round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::decode(&c.encode()).unwrap();
        assert_eq!(back, c);
        for ((_, a), (_, b)) in back
            .params
            .named_tensors()
            .iter()
            .zip(c.params.named_tensors())
        {
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut bytes = sample().encode();
        bytes[8] = 99;
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(CheckpointError::Version(99))
        ));
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = sample().encode();
        for cut in [4, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::decode(&bytes[..cut]),
                Err(CheckpointError::Truncated(_))
            ));
        }
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = sample().encode();
        let n = bytes.len();
        bytes[n - 20] ^= 0x40;
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(CheckpointError::Checksum { .. })
        ));
    }

    #[test]
    fn save_writes_sidecar_and_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
        let summary = fs::read_to_string(summary_path(&path)).unwrap();
        assert!(summary.contains("epoch: 3"));
        assert!(summary.contains("hidden_dim: 5"));
    }

    #[test]
    fn deterministic_bytes_ignore_wall_time() {
        let a = sample();
        let mut b = sample();
        b.wall_seconds = 99.0;
        assert_ne!(a.encode(), b.encode());
        assert_eq!(a.deterministic_bytes(), b.deterministic_bytes());
    }
}
