//! Parameter checkpoints: a flat named-array archive.
//!
//! Byte layout (all little-endian):
//!
//! ```text
//! magic   "FSAR"            4 bytes
//! version u16               (currently 1)
//! count   u32               number of entries
//! entry:  name_len u16, name utf-8 bytes,
//!         ndim u8, dims u64 * ndim,
//!         values f64 * prod(dims), row-major
//! ```
//!
//! Entries are the named tensors of the fusion and decoder parameter sets
//! (see their `tensors()` orderings) plus `ema.`-prefixed shadow copies when
//! an EMA state is saved. Loading validates every expected name and shape
//! against the provided configs.

use std::path::Path;

use ndarray::Array2;

use crate::decoder::{DecoderConfig, DecoderParams};
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, FusionParams};
use crate::training::EmaShadow;

const MAGIC: &[u8; 4] = b"FSAR";
const VERSION: u16 = 1;

/// Serialize named 2-D arrays.
pub fn write_archive(entries: &[(String, &Array2<f64>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, arr) in entries {
        let bytes = name.as_bytes();
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
        out.push(2u8);
        out.extend_from_slice(&(arr.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(arr.ncols() as u64).to_le_bytes());
        for v in arr.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parse an archive back into named arrays.
pub fn read_archive(bytes: &[u8]) -> Result<Vec<(String, Array2<f64>)>> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Format("archive truncated".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(Error::Format("bad archive magic".into()));
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported archive version {version}")));
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|_| Error::Format("archive entry name is not utf-8".into()))?;
        let ndim = take(&mut pos, 1)?[0];
        if ndim != 2 {
            return Err(Error::Format(format!("entry {name}: ndim {ndim} != 2")));
        }
        let rows = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let data = take(&mut pos, rows * cols * 8)?;
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let arr = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::Format(format!("entry {name}: {e}")))?;
        entries.push((name, arr));
    }
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after archive".into()));
    }
    Ok(entries)
}

/// Save fusion + decoder parameters (and optionally the EMA shadow).
pub fn save_checkpoint(
    path: &Path,
    fusion: &FusionParams,
    decoder: &DecoderParams,
    ema: Option<&EmaShadow>,
) -> Result<()> {
    let mut entries: Vec<(String, &Array2<f64>)> = fusion.tensors();
    entries.extend(decoder.tensors());
    let ema_named: Vec<(String, Array2<f64>)>;
    if let Some(shadow) = ema {
        let names: Vec<String> = fusion
            .tensors()
            .iter()
            .map(|(n, _)| n.clone())
            .chain(decoder.tensors().iter().map(|(n, _)| n.clone()))
            .collect();
        if names.len() != shadow.tensors.len() {
            return Err(Error::config("EMA shadow does not match parameter count"));
        }
        ema_named = names
            .into_iter()
            .zip(shadow.tensors.iter().cloned())
            .map(|(n, t)| (format!("ema.{n}"), t))
            .collect();
        for (n, t) in &ema_named {
            entries.push((n.clone(), t));
        }
    }
    let bytes = write_archive(&entries);
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Load a checkpoint into freshly constructed parameter sets.
pub fn load_checkpoint(
    path: &Path,
    fusion_config: FusionConfig,
    decoder_config: DecoderConfig,
) -> Result<(FusionParams, DecoderParams)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let entries = read_archive(&bytes)?;
    let lookup: std::collections::BTreeMap<&str, &Array2<f64>> =
        entries.iter().map(|(n, a)| (n.as_str(), a)).collect();

    let mut fusion = FusionParams::init(fusion_config, 0)?;
    for (name, tensor) in fusion.tensors_mut() {
        let src = lookup
            .get(name.as_str())
            .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {name}")))?;
        if src.raw_dim() != tensor.raw_dim() {
            return Err(Error::Format(format!(
                "tensor {name}: checkpoint shape {:?} != configured {:?}",
                src.dim(),
                tensor.dim()
            )));
        }
        tensor.assign(src);
    }
    let mut decoder = DecoderParams::init(decoder_config, 0)?;
    for (name, tensor) in decoder.tensors_mut() {
        let src = lookup
            .get(name.as_str())
            .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {name}")))?;
        if src.raw_dim() != tensor.raw_dim() {
            return Err(Error::Format(format!(
                "tensor {name}: checkpoint shape {:?} != configured {:?}",
                src.dim(),
                tensor.dim()
            )));
        }
        tensor.assign(src);
    }
    Ok((fusion, decoder))
}
