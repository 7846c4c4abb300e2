//! Binary checkpoint container. The layout is documented in the README;
//! all integers and floats are little-endian.

use std::path::Path;

use super::{LatentOdeModel, ModelConfig, ModelVariant};
use crate::error::{Error, Result};
use crate::numcore::Activation;
use crate::params::ParamSet;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LODECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_DIM: usize = 1 << 16;
const MAX_LAYERS: usize = 64;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        msg: msg.into(),
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| format_err(format!("value {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                format_err(format!(
                    "truncated while reading {what} at byte {}",
                    self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let v = self.u32(what)? as usize;
        if v > MAX_DIM {
            return Err(format_err(format!("{what} = {v} exceeds limit {MAX_DIM}")));
        }
        Ok(v)
    }

    fn layers(&mut self, what: &str) -> Result<Vec<usize>> {
        let count = self.u16(what)? as usize;
        if count > MAX_LAYERS {
            return Err(format_err(format!(
                "{what}: {count} layers exceeds limit {MAX_LAYERS}"
            )));
        }
        (0..count).map(|_| self.dim(what)).collect()
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn mlp_params(sizes: &[usize]) -> u128 {
    sizes
        .windows(2)
        .map(|w| (w[0] as u128 + 1) * w[1] as u128)
        .sum()
}

/// Number of scalars a model with this shape holds, computed without allocating it.
fn expected_params(variant: ModelVariant, cfg: &ModelConfig) -> u128 {
    let (d, n) = (cfg.input_dim as u128, cfg.hidden_dim as u128);
    let cell = (n * d + n * n + n)
        * match variant.encoder {
            super::EncoderKind::OdeRnn => 1,
            super::EncoderKind::OdeLstm => 4,
        };
    let field_sizes = |dim: usize, hidden: &[usize], t: bool| {
        let mut s = vec![dim + usize::from(t)];
        s.extend_from_slice(hidden);
        s.push(dim);
        s
    };
    cell + mlp_params(&field_sizes(
        cfg.hidden_dim,
        &cfg.encoder_field_hidden,
        cfg.encoder_time_input,
    )) + mlp_params(&cfg.translator_sizes())
        + mlp_params(&field_sizes(
            cfg.latent_dim,
            &cfg.dynamics_hidden,
            cfg.dynamics_time_input,
        ))
        + mlp_params(&cfg.output_sizes())
}

impl LatentOdeModel {
    /// Serializes the model into the checkpoint byte layout.
    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let cfg = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.variant.tag());
        out.extend_from_slice(&self.variant.clip.unwrap_or(f64::NAN).to_le_bytes());
        for v in [
            cfg.input_dim,
            cfg.hidden_dim,
            cfg.latent_dim,
            cfg.output_dim,
        ] {
            put_u32(&mut out, v)?;
        }
        put_u32(&mut out, cfg.translator_hidden)?;
        put_u32(&mut out, cfg.output_hidden)?;
        out.push(cfg.rnn_activation.tag());
        out.push(u8::from(cfg.encoder_time_input) | (u8::from(cfg.dynamics_time_input) << 1));
        put_u32(&mut out, cfg.encoder_steps_per_gap)?;
        put_u32(&mut out, cfg.decoder_steps_per_gap)?;
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&cfg.initial_log_sigma.to_le_bytes());
        for layers in [&cfg.encoder_field_hidden, &cfg.dynamics_hidden] {
            let count =
                u16::try_from(layers.len()).map_err(|_| format_err("too many hidden layers"))?;
            out.extend_from_slice(&count.to_le_bytes());
            for &w in layers.iter() {
                put_u32(&mut out, w)?;
            }
        }
        let blocks = self.blocks();
        put_u32(&mut out, blocks.len())?;
        self.visit("", &mut |p| {
            let name = p.name.as_bytes();
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&(p.rows as u32).to_le_bytes());
            out.extend_from_slice(&(p.cols as u32).to_le_bytes());
            for v in p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        });
        Ok(out)
    }

    /// Parses a checkpoint produced by [`to_checkpoint_bytes`](Self::to_checkpoint_bytes).
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<LatentOdeModel> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(format_err("bad magic; not a checkpoint file"));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let tag = r.u8("variant tag")?;
        let clip_raw = r.f64("clip threshold")?;
        let clip = (!clip_raw.is_nan()).then_some(clip_raw);
        let variant = ModelVariant::from_tag(tag, clip)
            .ok_or_else(|| format_err(format!("invalid variant tag {tag} with clip {clip_raw}")))?;
        let input_dim = r.dim("d")?;
        let hidden_dim = r.dim("n")?;
        let latent_dim = r.dim("l")?;
        let output_dim = r.dim("p")?;
        let translator_hidden = r.dim("translator hidden")?;
        let output_hidden = r.dim("output hidden")?;
        let act_tag = r.u8("rnn activation")?;
        let rnn_activation = Activation::from_tag(act_tag)
            .ok_or_else(|| format_err(format!("unknown activation tag {act_tag}")))?;
        let flags = r.u8("flags")?;
        if flags > 3 {
            return Err(format_err(format!("unknown flag bits {flags:#x}")));
        }
        let encoder_steps_per_gap = r.dim("encoder steps")?;
        let decoder_steps_per_gap = r.dim("decoder steps")?;
        let seed = r.u64("seed")?;
        let initial_log_sigma = r.f64("initial log sigma")?;
        let encoder_field_hidden = r.layers("encoder field layers")?;
        let dynamics_hidden = r.layers("dynamics layers")?;
        let config = ModelConfig {
            input_dim,
            hidden_dim,
            latent_dim,
            output_dim,
            encoder_field_hidden,
            translator_hidden,
            dynamics_hidden,
            output_hidden,
            rnn_activation,
            encoder_time_input: flags & 1 != 0,
            dynamics_time_input: flags & 2 != 0,
            encoder_steps_per_gap,
            decoder_steps_per_gap,
            initial_log_sigma,
        };
        config.validate().map_err(|e| format_err(e.to_string()))?;
        let expected = expected_params(variant, &config);
        if expected * 8 > r.remaining() as u128 {
            return Err(format_err(format!(
                "header declares {expected} parameters but only {} bytes remain",
                r.remaining()
            )));
        }

        let mut model = LatentOdeModel::zeros(variant, &config, seed)?;
        let blocks = model.blocks();
        let count = r.u32("tensor count")? as usize;
        if count != blocks.len() {
            return Err(format_err(format!(
                "expected {} tensors, found {count}",
                blocks.len()
            )));
        }
        let mut flat = Vec::with_capacity(model.num_params());
        for block in &blocks {
            let len = r.u16("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "tensor name")?)
                .map_err(|_| format_err("tensor name is not UTF-8"))?;
            if name != block.name {
                return Err(format_err(format!(
                    "expected tensor `{}`, found `{name}`",
                    block.name
                )));
            }
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            if (rows, cols) != (block.rows, block.cols) {
                return Err(format_err(format!(
                    "tensor `{name}` has shape {rows}x{cols}, expected {}x{}",
                    block.rows, block.cols
                )));
            }
            for _ in 0..block.len() {
                flat.push(r.f64(name)?);
            }
        }
        if r.remaining() != 0 {
            return Err(format_err(format!("{} trailing bytes", r.remaining())));
        }
        model.assign_flat(&flat)?;
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LatentOdeModel> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}
