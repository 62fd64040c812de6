//! Versioned binary classifier files.
//!
//! Layout: magic `ELABNET\0`, u32 version, u32 input dim, u32 class count,
//! f64 BN epsilon, u32 layer count, per-layer spec tags, then the parameter
//! and running-statistic values as little-endian f64 in layer order.

use std::path::Path;

use super::{layer_buffer_len, layer_param_len, Classifier, LayerSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ELABNET\0";
const VERSION: u32 = 1;

/// Write a classifier to disk.
pub fn save_classifier(net: &Classifier, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(net.classes as u32).to_le_bytes());
    out.extend_from_slice(&net.bn_eps.to_le_bytes());
    out.extend_from_slice(&(net.specs.len() as u32).to_le_bytes());
    for spec in &net.specs {
        match *spec {
            LayerSpec::Linear { input, output } => {
                out.push(0);
                out.extend_from_slice(&(input as u32).to_le_bytes());
                out.extend_from_slice(&(output as u32).to_le_bytes());
            }
            LayerSpec::BatchNorm { dim } => {
                out.push(1);
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            LayerSpec::Relu => out.push(2),
        }
    }
    out.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
    for v in &net.params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(net.buffers.len() as u64).to_le_bytes());
    for v in &net.buffers {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(&self.path, "truncated classifier file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Read a classifier written by [`save_classifier`]. Round-trips parameter
/// values bit-exactly.
pub fn load_classifier(path: &Path) -> Result<Classifier> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader { bytes: &bytes, pos: 0, path: path.display().to_string() };
    if r.take(8)? != MAGIC {
        return Err(Error::parse(&r.path, "bad magic; not a classifier file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::parse(&r.path, format!("unsupported version {version}")));
    }
    let input_dim = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let bn_eps = r.f64()?;
    let n_layers = r.u32()? as usize;
    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let spec = match r.u8()? {
            0 => LayerSpec::Linear { input: r.u32()? as usize, output: r.u32()? as usize },
            1 => LayerSpec::BatchNorm { dim: r.u32()? as usize },
            2 => LayerSpec::Relu,
            t => return Err(Error::parse(&r.path, format!("unknown layer tag {t}"))),
        };
        specs.push(spec);
    }
    let n_params = r.u64()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(r.f64()?);
    }
    let n_buffers = r.u64()? as usize;
    let mut buffers = Vec::with_capacity(n_buffers);
    for _ in 0..n_buffers {
        buffers.push(r.f64()?);
    }

    let mut param_offsets = Vec::with_capacity(specs.len());
    let mut buffer_offsets = Vec::with_capacity(specs.len());
    let (mut p, mut b) = (0, 0);
    for spec in &specs {
        param_offsets.push(p);
        buffer_offsets.push(b);
        p += layer_param_len(spec);
        b += layer_buffer_len(spec);
    }
    if p != params.len() || b != buffers.len() {
        return Err(Error::parse(
            &r.path,
            format!("value counts ({}, {}) do not match layer specs ({p}, {b})", params.len(), buffers.len()),
        ));
    }
    let last_is_linear_to_classes =
        matches!(specs.last(), Some(&LayerSpec::Linear { output, .. }) if output == classes);
    if !last_is_linear_to_classes {
        return Err(Error::parse(&r.path, "final layer does not match the class count"));
    }
    Ok(Classifier {
        specs,
        input_dim,
        classes,
        bn_eps,
        params,
        buffers,
        param_offsets,
        buffer_offsets,
        version: 0,
    })
}
