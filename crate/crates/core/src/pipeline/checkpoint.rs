//! Binary checkpoint files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        4 bytes  "DMTC"
//! version      u32      1
//! config       12 × u64 layers, dim, heads, ffn_hidden, rfc_kernel,
//!                       warp_k, warp_s, warp_p, channels,
//!                       token_selection, mask_activation, use_rfc
//!              f64      ln_eps
//! count        u64      number of tensor records
//! record       u32 name length, UTF-8 name, u32 rank, rank × u64 dims,
//!              numel × f64 values
//! ```
//!
//! Records are written in name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::model::{ModelConfig, ModelParams};
use crate::dmt::DmtConfig;
use crate::error::{CheckpointError, Error, Result};
use crate::numerics::{ParamSet, SlidingWindowSpec, Tensor};

pub const MAGIC: [u8; 4] = *b"DMTC";
pub const FORMAT_VERSION: u32 = 1;

pub fn checkpoint_bytes(params: &ModelParams) -> Vec<u8> {
    let cfg = &params.config;
    let d = &cfg.dmt;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [
        d.layers,
        d.dim,
        d.heads,
        d.ffn_hidden,
        d.rfc_kernel,
        d.warp.kernel,
        d.warp.stride,
        d.warp.padding,
        cfg.channels,
        d.token_selection as usize,
        d.mask_activation as usize,
        d.use_rfc as usize,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&d.ln_eps.to_le_bytes());
    out.extend_from_slice(&(params.params.len() as u64).to_le_bytes());
    for (name, t) in params.params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &dim in t.shape() {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint_bytes(params))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    parse_checkpoint(&fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64(what)?)
            .map_err(|_| CheckpointError::Malformed(format!("{what} out of range")))
    }

    fn flag(&mut self, what: &'static str) -> Result<bool, CheckpointError> {
        match self.u64(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(CheckpointError::Malformed(format!("{what} flag is {v}"))),
        }
    }
}

fn read_config(r: &mut Reader) -> Result<ModelConfig> {
    let layers = r.usize("config")?;
    let dim = r.usize("config")?;
    let heads = r.usize("config")?;
    let ffn_hidden = r.usize("config")?;
    let rfc_kernel = r.usize("config")?;
    let (wk, ws, wp) = (r.usize("config")?, r.usize("config")?, r.usize("config")?);
    let channels = r.usize("config")?;
    let token_selection = r.flag("config")?;
    let mask_activation = r.flag("config")?;
    let use_rfc = r.flag("config")?;
    let ln_eps = f64::from_le_bytes(r.take(8, "config")?.try_into().expect("8 bytes"));
    let warp = SlidingWindowSpec::new(wk, ws, wp)
        .map_err(|e| CheckpointError::Malformed(format!("warp window: {e}")))?;
    let config = ModelConfig {
        dmt: DmtConfig {
            layers,
            dim,
            heads,
            ffn_hidden,
            rfc_kernel,
            warp,
            token_selection,
            mask_activation,
            use_rfc,
            ln_eps,
        },
        channels,
    };
    config
        .validate()
        .map_err(|e| CheckpointError::Malformed(format!("config block: {e}")))?;
    Ok(config)
}

/// Parses a checkpoint and checks every tensor against the shapes its
/// config block implies.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic).into());
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let config = read_config(&mut r)?;
    let mut expected: BTreeMap<String, Vec<usize>> = config.param_shapes().into_iter().collect();

    let count = r.usize("tensor count")?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = r.u32("tensor name")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.usize("tensor dims")?);
        }
        let want = expected
            .remove(&name)
            .ok_or_else(|| CheckpointError::UnexpectedTensor(name.clone()))?;
        if want != shape {
            return Err(CheckpointError::ShapeMismatch {
                name,
                expected: want,
                found: shape,
            }
            .into());
        }
        let numel: usize = shape.iter().product();
        let payload = r.take(numel * 8, "tensor data")?;
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| match e {
            Error::NonFinite(_) => Error::from(CheckpointError::Malformed(format!(
                "tensor `{name}` has non-finite values"
            ))),
            e => e,
        })?;
        params.insert(name, tensor)?;
    }
    if let Some(name) = expected.into_keys().next() {
        return Err(CheckpointError::MissingTensor(name).into());
    }
    if r.pos != bytes.len() {
        return Err(
            CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)).into(),
        );
    }
    Ok(ModelParams { config, params })
}
