//! `.okmp` parameter files.
//!
//! ```text
//! "OKMP"  u16 version
//! u32 d  u32 d_A  u32 H  u32 d_M  u32 L
//! f64 crossover keep  f64 mutation keep  u8 variant  u8 fitness normalization
//! u32 tensor count, per tensor: u32 rows, u32 cols, rows·cols f64
//! u64 FNV-1a checksum
//! ```

use std::fs;
use std::path::Path;

use super::framing::{FrameReader, FrameWriter};
use crate::error::{FormatError, Result};
use crate::gradengine::Tensor2;
use crate::model::{FitnessNorm, ModelConfig, ModelParams, Variant};

pub const PARAMS_MAGIC: [u8; 4] = *b"OKMP";
pub const PARAMS_VERSION: u16 = 1;

fn u32_of(v: usize) -> u32 {
    u32::try_from(v).expect("model dimension fits in u32")
}

pub fn encode_params(params: &ModelParams) -> Vec<u8> {
    let cfg = params.config();
    let mut w = FrameWriter::new(PARAMS_MAGIC, PARAMS_VERSION);
    for v in [
        cfg.dim,
        cfg.embed_dim,
        cfg.heads,
        cfg.hidden_dim,
        cfg.layers,
    ] {
        w.u32(u32_of(v));
    }
    w.f64(cfg.crossover_keep);
    w.f64(cfg.mutation_keep);
    w.u8(cfg.variant.code());
    w.u8(match cfg.fitness_norm {
        FitnessNorm::ZScore => 0,
        FitnessNorm::Raw => 1,
    });
    let tensors = params.tensors();
    w.u32(u32_of(tensors.len()));
    for t in tensors {
        w.u32(u32_of(t.rows()));
        w.u32(u32_of(t.cols()));
        w.f64s(t.data());
    }
    w.finish()
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = FrameReader::open(bytes, PARAMS_MAGIC, PARAMS_VERSION)?;
    r.verify_checksum()?;
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let crossover_keep = r.f64()?;
    let mutation_keep = r.f64()?;
    let variant = Variant::from_code(r.u8()?)
        .ok_or_else(|| FormatError::Malformed("unknown variant code".into()))?;
    let fitness_norm = match r.u8()? {
        0 => FitnessNorm::ZScore,
        1 => FitnessNorm::Raw,
        _ => {
            return Err(FormatError::Malformed("unknown fitness normalization code".into()).into())
        }
    };
    let config = ModelConfig {
        dim: dims[0],
        embed_dim: dims[1],
        heads: dims[2],
        hidden_dim: dims[3],
        layers: dims[4],
        crossover_keep,
        mutation_keep,
        variant,
        fitness_norm,
    };
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| FormatError::Malformed("tensor size overflow".into()))?;
        tensors.push(Tensor2::new(rows, cols, r.f64s(n)?)?);
    }
    r.finish()?;
    config.validate()?;
    ModelParams::from_tensors(config, tensors)
}

pub fn write_params(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_params(params))?;
    Ok(())
}

pub fn read_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    decode_params(&fs::read(path)?)
}
