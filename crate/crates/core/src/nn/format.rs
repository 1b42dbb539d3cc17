//! `VCNM` model file container.
//!
//! ```text
//! "VCNM"  version:u8  kind:u8  meta_len:u16  meta[meta_len]
//! entry_count:u16
//! entry* :
//!     tag:u16
//!     head:u8 outputs:u16 extra_inputs:u16
//!     hidden_count:u8 hidden:u16*
//!     branch_count:u8 (extent:u16 conv_count:u8 channels:u16*)*
//!     seed:u64
//!     tensor_count:u32 (len:u32 values:f32[len])*
//! fnv1a64:u64          hash of every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use fnv::FnvHasher;
use std::hash::Hasher;

use super::net::{BranchSpec, Head, ModelParams, NetSpec};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"VCNM";
pub const MODEL_VERSION: u8 = 1;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelEntry {
    pub tag: u16,
    pub params: ModelParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub kind: u8,
    pub meta: Vec<u8>,
    pub entries: Vec<ModelEntry>,
}

pub(crate) struct Writer(pub Vec<u8>);

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    pub fn u16(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u16).to_le_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f32(&mut self, v: f64) {
        self.0.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

fn write_spec(w: &mut Writer, spec: &NetSpec) {
    w.u8(match spec.head {
        Head::Softmax => 0,
        Head::HalfTanh => 1,
    });
    w.u16(spec.outputs);
    w.u16(spec.extra_inputs);
    w.u8(spec.hidden.len() as u8);
    for &h in &spec.hidden {
        w.u16(h);
    }
    w.u8(spec.branches.len() as u8);
    for b in &spec.branches {
        w.u16(b.extent);
        w.u8(b.channels.len() as u8);
        for &c in &b.channels {
            w.u16(c);
        }
    }
}

fn read_spec(r: &mut Reader) -> Result<NetSpec> {
    let head = match r.u8()? {
        0 => Head::Softmax,
        1 => Head::HalfTanh,
        h => return Err(Error::Format(format!("unknown head type {h}"))),
    };
    let outputs = r.u16()? as usize;
    let extra_inputs = r.u16()? as usize;
    let hidden = (0..r.u8()?)
        .map(|_| r.u16().map(usize::from))
        .collect::<Result<Vec<_>>>()?;
    let n_branches = r.u8()?;
    let mut branches = Vec::with_capacity(n_branches as usize);
    for _ in 0..n_branches {
        let extent = r.u16()? as usize;
        let channels = (0..r.u8()?)
            .map(|_| r.u16().map(usize::from))
            .collect::<Result<Vec<_>>>()?;
        branches.push(BranchSpec { extent, channels });
    }
    let spec = NetSpec {
        branches,
        extra_inputs,
        hidden,
        outputs,
        head,
    };
    spec.validate()
        .map_err(|e| Error::Format(format!("invalid network description: {e}")))?;
    Ok(spec)
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MODEL_MAGIC);
        w.u8(MODEL_VERSION);
        w.u8(self.kind);
        w.u16(self.meta.len());
        w.0.extend_from_slice(&self.meta);
        w.u16(self.entries.len());
        for e in &self.entries {
            w.u16(e.tag as usize);
            write_spec(&mut w, e.params.spec());
            w.u64(e.params.seed());
            let tensors = e.params.tensors();
            w.u32(tensors.len() as u32);
            for t in tensors {
                w.u32(t.len() as u32);
                for &v in t.data() {
                    w.f32(v);
                }
            }
        }
        let hash = fnv1a64(&w.0);
        w.u64(hash);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelFile> {
        if bytes.len() < 4 + 8 || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::Format("not a VCNM model file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a64(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::Format("model file hash mismatch".into()));
        }
        let mut r = Reader::new(body);
        r.take(4)?;
        let version = r.u8()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {version}"
            )));
        }
        let kind = r.u8()?;
        let meta_len = r.u16()? as usize;
        let meta = r.take(meta_len)?.to_vec();
        let n = r.u16()?;
        let mut entries = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let tag = r.u16()?;
            let spec = read_spec(&mut r)?;
            let seed = r.u64()?;
            let count = r.u32()?;
            let mut tensors = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let len = r.u32()? as usize;
                let raw = r.take(len.checked_mul(4).ok_or(Error::Truncated)?)?;
                tensors.push(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                        .collect(),
                );
            }
            let params = ModelParams::from_tensors(spec, seed, tensors)
                .map_err(|e| Error::Format(format!("model entry {tag}: {e}")))?;
            if !params.is_finite() {
                return Err(Error::Format(format!(
                    "model entry {tag} has non-finite weights"
                )));
            }
            entries.push(ModelEntry { tag, params });
        }
        if !r.rest().is_empty() {
            return Err(Error::Format("trailing bytes in model file".into()));
        }
        Ok(ModelFile {
            kind,
            meta,
            entries,
        })
    }

    /// The trailing content hash of the serialized file.
    pub fn content_hash(&self) -> u64 {
        let bytes = self.to_bytes();
        u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap())
    }
}
