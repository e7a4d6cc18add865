//! Self-describing model checkpoints.
//!
//! A checkpoint stores everything needed to reconstruct a trained model:
//! the architecture configuration, the optimizer step counter, and every
//! named parameter tensor. The container is a flat little-endian binary
//! file that any language can parse without this crate:
//!
//! ```text
//! offset  size  field
//! ------  ----  -----
//! 0       8     magic "PLOCASLE"
//! 8       4     format version, u32 (currently 1)
//! 12      8     training step counter, u64
//! 20      4     config length N, u32
//! 24      N     architecture config, TOML, UTF-8
//! ..      4     parameter count, u32
//! then per parameter, in a fixed traversal order:
//!         2     name length M, u16
//!         M     dotted parameter name, UTF-8
//!         1     rank R, u8
//!         4·R   dimensions, u32 each
//!         1     scalar width in bytes (always 8: IEEE f64)
//!         8·Π   values, f64 little-endian, row-major
//! ```
//!
//! Values are widened to `f64` on save regardless of the model's working
//! precision, so an `f32` model round-trips bit-exactly (every `f32` is
//! representable as `f64`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use super::{AsleConfig, Model};
use crate::nn::{Module, Param};
use crate::{Error, Real, Result};

const MAGIC: &[u8; 8] = b"PLOCASLE";
const VERSION: u32 = 1;

/// Writes a model snapshot to `path` (atomically overwriting is the
/// caller's concern; this writes in place).
pub fn save<F: Real>(model: &mut Model<F>, path: &Path) -> Result<()> {
    let mut blobs: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    model.visit_params("", &mut |name: &str, p: &mut Param<F>| {
        blobs.push((
            name.to_string(),
            p.value.shape().to_vec(),
            p.value.iter().map(|v| v.to_f64_lossy()).collect(),
        ));
    });
    let config_toml = toml::to_string(model.config())
        .map_err(|e| Error::numeric(format!("config serialization failed: {e}")))?;

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let put = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
        w.write_all(bytes).map_err(|e| Error::io(path, e))
    };
    put(&mut w, MAGIC)?;
    put(&mut w, &VERSION.to_le_bytes())?;
    put(&mut w, &model.steps().to_le_bytes())?;
    put(&mut w, &(config_toml.len() as u32).to_le_bytes())?;
    put(&mut w, config_toml.as_bytes())?;
    put(&mut w, &(blobs.len() as u32).to_le_bytes())?;
    for (name, shape, values) in &blobs {
        put(&mut w, &(name.len() as u16).to_le_bytes())?;
        put(&mut w, name.as_bytes())?;
        put(&mut w, &[shape.len() as u8])?;
        for &d in shape {
            put(&mut w, &(d as u32).to_le_bytes())?;
        }
        put(&mut w, &[8u8])?;
        for &v in values {
            put(&mut w, &v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Byte-stream reader with schema-error context.
struct Parser<'a> {
    r: BufReader<File>,
    path: &'a Path,
}

impl<'a> Parser<'a> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| Error::schema(self.path, "checkpoint truncated"))?;
        Ok(buf)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.bytes(n)?)
            .map_err(|_| Error::schema(self.path, "checkpoint contains invalid UTF-8"))
    }
}

/// Reads a checkpoint back into a freshly constructed model.
///
/// # Errors
/// [`Error::Io`] when the file cannot be opened; [`Error::Schema`] on a
/// bad magic, unsupported version, truncation, or any mismatch between the
/// stored blobs and the architecture its config describes.
pub fn load<F: Real>(path: &Path) -> Result<Model<F>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut p = Parser { r: BufReader::new(file), path };

    if p.bytes(8)? != MAGIC {
        return Err(Error::schema(path, "not a model checkpoint (bad magic)"));
    }
    let version = p.u32()?;
    if version != VERSION {
        return Err(Error::schema(
            path,
            format!("unsupported checkpoint version {version} (expected {VERSION})"),
        ));
    }
    let step = p.u64()?;
    let config_len = p.u32()? as usize;
    let config: AsleConfig = toml::from_str(&p.string(config_len)?)
        .map_err(|e| Error::schema(path, format!("bad embedded config: {e}")))?;
    let blob_count = p.u32()? as usize;

    let mut blobs = std::collections::HashMap::new();
    for _ in 0..blob_count {
        let name_len = p.u16()? as usize;
        let name = p.string(name_len)?;
        let rank = p.bytes(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(p.u32()? as usize);
        }
        let width = p.bytes(1)?[0];
        if width != 8 {
            return Err(Error::schema(path, format!("unsupported scalar width {width}")));
        }
        let count: usize = shape.iter().product();
        let raw = p.bytes(count * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let arr = ArrayD::from_shape_vec(IxDyn(&shape), values)
            .map_err(|_| Error::schema(path, format!("blob {name} has inconsistent shape")))?;
        if blobs.insert(name.clone(), arr).is_some() {
            return Err(Error::schema(path, format!("duplicate parameter blob {name}")));
        }
    }

    let mut model = Model::<F>::new(config, 0)?;
    let mut missing = Vec::new();
    let mut mismatched = Vec::new();
    let mut used = 0usize;
    model.visit_params("", &mut |name: &str, param: &mut Param<F>| {
        match blobs.get(name) {
            Some(arr) if arr.shape() == param.value.shape() => {
                param.value.zip_mut_with(arr, |dst, &src| *dst = F::of(src));
                used += 1;
            }
            Some(_) => mismatched.push(name.to_string()),
            None => missing.push(name.to_string()),
        }
    });
    if !missing.is_empty() || !mismatched.is_empty() {
        return Err(Error::schema(
            path,
            format!(
                "checkpoint does not match its config: missing {missing:?}, \
                 shape-mismatched {mismatched:?}"
            ),
        ));
    }
    if used != blobs.len() {
        return Err(Error::schema(
            path,
            format!("checkpoint carries {} unused parameter blobs", blobs.len() - used),
        ));
    }
    model.step = step;
    Ok(model)
}
