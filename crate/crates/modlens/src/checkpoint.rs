//! Checkpoint files: a JSON header followed by raw little-endian tensors.
//!
//! ```text
//! b"MODLENS\0"  u32 version
//! u64 header length, header JSON
//! u64 tensor count
//! per tensor: u32 name length, name, u32 rank, u64 dims..., f64 values...
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use modlens_core::autodiff::ParamStore;
use modlens_core::models::{ClassifierConfig, ClassifierModel};
use modlens_core::rationale::{JointConfig, RationaleModel};
use modlens_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MODLENS\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Classifier,
    Rationale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: CheckpointKind,
    /// Model configuration.
    pub model: serde_json::Value,
    /// Resolved run configuration that produced the checkpoint.
    pub run: serde_json::Value,
}

pub fn write_checkpoint(path: &Path, header: &Header, params: &ParamStore) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(&mut w, header, params).map_err(|e| Error::io(path, e))?;
    w.into_inner().map_err(|e| Error::io(path, e.into_error()))?.sync_all().map_err(|e| Error::io(path, e))
}

fn encode(w: &mut impl Write, header: &Header, params: &ParamStore) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let json = serde_json::to_vec(header).expect("header serializes");
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(Header, ParamStore)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    decode(&mut r).map_err(|e| match e {
        Decode::Io(e) if e.kind() != std::io::ErrorKind::UnexpectedEof => Error::io(path, e),
        Decode::Io(_) => Error::bad_file(path, "truncated checkpoint"),
        Decode::Bad(m) => Error::bad_file(path, m),
    })
}

enum Decode {
    Io(std::io::Error),
    Bad(String),
}

impl From<std::io::Error> for Decode {
    fn from(e: std::io::Error) -> Self {
        Decode::Io(e)
    }
}

fn take<const N: usize>(r: &mut impl Read) -> std::result::Result<[u8; N], Decode> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn u32_at(r: &mut impl Read) -> std::result::Result<usize, Decode> {
    Ok(u32::from_le_bytes(take(r)?) as usize)
}

fn u64_at(r: &mut impl Read) -> std::result::Result<usize, Decode> {
    usize::try_from(u64::from_le_bytes(take(r)?)).map_err(|_| Decode::Bad("length overflows".into()))
}

fn bytes(r: &mut impl Read, n: usize) -> std::result::Result<Vec<u8>, Decode> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(Decode::Io(std::io::ErrorKind::UnexpectedEof.into()));
    }
    Ok(buf)
}

fn decode(r: &mut impl Read) -> std::result::Result<(Header, ParamStore), Decode> {
    if &take::<8>(r)? != MAGIC {
        return Err(Decode::Bad("not a modlens checkpoint".into()));
    }
    let version = u32::from_le_bytes(take(r)?);
    if version != VERSION {
        return Err(Decode::Bad(format!("unsupported checkpoint version {version}")));
    }
    let n = u64_at(r)?;
    let header: Header =
        serde_json::from_slice(&bytes(r, n)?).map_err(|e| Decode::Bad(format!("checkpoint header: {e}")))?;
    let count = u64_at(r)?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let n = u32_at(r)?;
        let name = String::from_utf8(bytes(r, n)?).map_err(|_| Decode::Bad("tensor name is not UTF-8".into()))?;
        let rank = u32_at(r)?;
        let shape = (0..rank).map(|_| u64_at(r)).collect::<std::result::Result<Vec<_>, _>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Decode::Bad("tensor too large".into()))?;
        let raw = bytes(r, len.checked_mul(8).ok_or_else(|| Decode::Bad("tensor too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let t = Tensor::new(shape, data).map_err(|e| Decode::Bad(format!("tensor `{name}`: {e}")))?;
        params.insert(name, t);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Decode::Bad("trailing bytes after the last tensor".into()));
    }
    Ok((header, params))
}

fn config_of<T: serde::de::DeserializeOwned>(path: &Path, header: &Header, kind: CheckpointKind) -> Result<T> {
    if header.kind != kind {
        return Err(Error::bad_file(path, format!("expected a {kind:?} checkpoint, found {:?}", header.kind)));
    }
    serde_json::from_value(header.model.clone()).map_err(|e| Error::bad_file(path, format!("model config: {e}")))
}

fn check_names(path: &Path, expected: &ParamStore, found: &ParamStore) -> Result<()> {
    for (name, t) in expected.iter() {
        match found.get(name) {
            Some(f) if f.shape() == t.shape() => {}
            Some(f) => return Err(Error::bad_file(path, format!("`{name}` has shape {:?}, expected {:?}", f.shape(), t.shape()))),
            None => return Err(Error::bad_file(path, format!("missing tensor `{name}`"))),
        }
    }
    if found.len() != expected.len() {
        return Err(Error::bad_file(path, "unexpected extra tensors"));
    }
    Ok(())
}

pub fn save_classifier(path: &Path, model: &ClassifierModel, run: &impl Serialize) -> Result<()> {
    let header = Header {
        kind: CheckpointKind::Classifier,
        model: serde_json::to_value(model.config).expect("config serializes"),
        run: serde_json::to_value(run).expect("run config serializes"),
    };
    write_checkpoint(path, &header, &model.params)
}

pub fn load_classifier(path: &Path) -> Result<(ClassifierModel, Header)> {
    let (header, params) = read_checkpoint(path)?;
    let config: ClassifierConfig = config_of(path, &header, CheckpointKind::Classifier)?;
    // Shapes come from a fresh model; the values are never used.
    let shape_model = ClassifierModel::init(config, 0)?;
    check_names(path, &shape_model.params, &params)?;
    Ok((ClassifierModel { config, params }, header))
}

pub fn save_rationale(path: &Path, model: &RationaleModel, run: &impl Serialize) -> Result<()> {
    let header = Header {
        kind: CheckpointKind::Rationale,
        model: serde_json::to_value(model.config).expect("config serializes"),
        run: serde_json::to_value(run).expect("run config serializes"),
    };
    write_checkpoint(path, &header, &model.params)
}

/// Loads a rationale checkpoint whose generator reads `d_in`-wide word vectors.
pub fn load_rationale(path: &Path, d_in: usize) -> Result<(RationaleModel, Header)> {
    let (header, params) = read_checkpoint(path)?;
    let config: JointConfig = config_of(path, &header, CheckpointKind::Rationale)?;
    let shape_model = RationaleModel::init(config, d_in, 0)?;
    check_names(path, &shape_model.params, &params)?;
    Ok((RationaleModel { config, params }, header))
}
