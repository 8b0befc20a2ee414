//! Binary checkpoint container.
//!
//! Layout:
//!
//! ```text
//! magic    8 bytes   "LXMCKPT\0"
//! version  u32 LE
//! hlen     u64 LE    length of the JSON header in bytes
//! header   hlen bytes of UTF-8 JSON
//! blocks   f64 LE, row-major, in the order listed in header.blocks
//! ```
//!
//! The header carries the config, stage, epoch, RNG state, language tags
//! and the name and shape of every parameter block. Nothing time-dependent
//! is stored, so identical runs produce identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ModelState;
use crate::autoencoder::Autoencoder;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::linear::{Dense, LinearMap};
use crate::tensor::DiscriminatorNet;

pub const MAGIC: &[u8; 8] = b"LXMCKPT\0";
pub const VERSION: u32 = 1;

/// Pipeline stage that produced the checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrained,
    Trained,
    Refined,
}

/// Position of a ChaCha8 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed_hex: String,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed_hex: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bytes = self.seed_hex.as_bytes();
        if bytes.len() != 64 {
            return Err(Error::Checkpoint(format!("RNG seed must be 64 hex digits, got {}", bytes.len())));
        }
        let mut seed = [0u8; 32];
        for (i, chunk) in bytes.chunks(2).enumerate() {
            let s = std::str::from_utf8(chunk).map_err(|_| Error::Checkpoint("RNG seed is not ASCII".into()))?;
            seed[i] = u8::from_str_radix(s, 16).map_err(|_| Error::Checkpoint(format!("bad RNG seed digits {s:?}")))?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    stage: Stage,
    epoch: usize,
    criterion: Option<f64>,
    src_lang: String,
    tgt_lang: String,
    config: TrainConfig,
    rng: RngState,
    blocks: Vec<BlockInfo>,
}

/// A model snapshot together with the metadata needed to resume or reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub config: TrainConfig,
    pub stage: Stage,
    /// Training epoch the state comes from; 0 before adversarial training.
    pub epoch: usize,
    /// Validation criterion of the state, when known.
    pub criterion: Option<f64>,
    pub rng: RngState,
}

const BLOCK_NAMES: [&str; 18] = [
    "ae_src.encoder",
    "ae_src.decoder",
    "ae_tgt.encoder",
    "ae_tgt.decoder",
    "mapper_g",
    "mapper_f",
    "disc_src.layer1.weight",
    "disc_src.layer1.bias",
    "disc_src.layer2.weight",
    "disc_src.layer2.bias",
    "disc_src.layer3.weight",
    "disc_src.layer3.bias",
    "disc_tgt.layer1.weight",
    "disc_tgt.layer1.bias",
    "disc_tgt.layer2.weight",
    "disc_tgt.layer2.bias",
    "disc_tgt.layer3.weight",
    "disc_tgt.layer3.bias",
];

fn row(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(ndarray::Axis(0))
}

fn blocks_of(state: &ModelState) -> Vec<Array2<f64>> {
    let mut out = vec![
        state.ae_src.encoder.weight().clone(),
        state.ae_src.decoder.weight().clone(),
        state.ae_tgt.encoder.weight().clone(),
        state.ae_tgt.decoder.weight().clone(),
        state.mapper_g.weight().clone(),
        state.mapper_f.weight().clone(),
    ];
    for d in [&state.disc_src, &state.disc_tgt] {
        for layer in [&d.layer1, &d.layer2, &d.layer3] {
            out.push(layer.weight.clone());
            out.push(row(&layer.bias));
        }
    }
    out
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let blocks = blocks_of(&ckpt.state);
    let header = Header {
        format: "lexalign-checkpoint".into(),
        stage: ckpt.stage,
        epoch: ckpt.epoch,
        criterion: ckpt.criterion,
        src_lang: ckpt.state.ae_src.lang.clone(),
        tgt_lang: ckpt.state.ae_tgt.lang.clone(),
        config: ckpt.config.clone(),
        rng: ckpt.rng.clone(),
        blocks: BLOCK_NAMES
            .iter()
            .zip(&blocks)
            .map(|(name, b)| BlockInfo {
                name: name.to_string(),
                rows: b.nrows(),
                cols: b.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for b in &blocks {
        for v in b.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint file", path.display())));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(io)?;
    let hlen = u64::from_le_bytes(u64buf);
    if hlen > 1 << 26 {
        return Err(Error::Checkpoint(format!("implausible header length {hlen}")));
    }
    let mut json = vec![0u8; hlen as usize];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json)?;
    let names: Vec<&str> = header.blocks.iter().map(|b| b.name.as_str()).collect();
    if names != BLOCK_NAMES {
        return Err(Error::Checkpoint(format!("unexpected block list {names:?}")));
    }

    let mut blocks = Vec::with_capacity(header.blocks.len());
    for info in &header.blocks {
        let mut data = vec![0f64; info.rows * info.cols];
        for v in data.iter_mut() {
            r.read_exact(&mut u64buf)
                .map_err(|_| Error::Checkpoint(format!("truncated block {}", info.name)))?;
            *v = f64::from_le_bytes(u64buf);
        }
        let m = Array2::from_shape_vec((info.rows, info.cols), data).expect("length matches shape");
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::Checkpoint(format!("block {} holds non-finite values", info.name)));
        }
        blocks.push(m);
    }
    if r.read(&mut [0u8; 1]).map_err(io)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after the last block".into()));
    }

    let mut it = blocks.into_iter();
    let mut next = || it.next().expect("block count checked");
    let ae_src = Autoencoder::new(LinearMap::new(next())?, LinearMap::new(next())?, header.src_lang.clone())?;
    let ae_tgt = Autoencoder::new(LinearMap::new(next())?, LinearMap::new(next())?, header.tgt_lang.clone())?;
    let mapper_g = LinearMap::new(next())?;
    let mapper_f = LinearMap::new(next())?;
    let cfg = &header.config;
    let mut disc = || -> Result<DiscriminatorNet> {
        let mut dense = || -> Result<Dense> {
            let weight = next();
            let bias = next();
            if bias.nrows() != 1 || bias.ncols() != weight.nrows() {
                return Err(Error::Checkpoint("bias shape does not match its layer".into()));
            }
            Ok(Dense {
                weight,
                bias: bias.row(0).to_owned(),
            })
        };
        Ok(DiscriminatorNet {
            layer1: dense()?,
            layer2: dense()?,
            layer3: dense()?,
            leaky_slope: cfg.leaky_slope,
            input_dropout: cfg.disc_dropout,
        })
    };
    let disc_src = disc()?;
    let disc_tgt = disc()?;
    let state = ModelState {
        ae_src,
        ae_tgt,
        mapper_g,
        mapper_f,
        disc_src,
        disc_tgt,
    };
    state
        .validate()
        .map_err(|e| Error::Checkpoint(format!("inconsistent parameter shapes: {e}")))?;
    if state.disc_src.layer2.in_dim() != state.disc_src.hidden() || state.disc_src.layer3.out_dim() != 1 {
        return Err(Error::Checkpoint("discriminator layers do not chain".into()));
    }
    Ok(Checkpoint {
        state,
        config: header.config,
        stage: header.stage,
        epoch: header.epoch,
        criterion: header.criterion,
        rng: header.rng,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};

    fn small() -> (Checkpoint, ChaCha8Rng) {
        let cfg = TrainConfig {
            code_dim: 4,
            disc_hidden: 6,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let state = ModelState::init(3, 5, "en", "es", &cfg, &mut rng);
        let ck = Checkpoint {
            state,
            config: cfg,
            stage: Stage::Trained,
            epoch: 2,
            criterion: Some(0.5),
            rng: RngState::capture(&rng),
        };
        (ck, rng)
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (ck, mut rng) = small();
        write_checkpoint(&path, &ck).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let mut restored = back.rng.restore().unwrap();
        assert_eq!(restored.next_u64(), rng.next_u64());
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));

        let (ck, _) = small();
        write_checkpoint(&path, &ck).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
