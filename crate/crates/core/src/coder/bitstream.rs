//! `VCNB` container header.
//!
//! ```text
//! "VCNB" version:u8 mode:u8
//! origin:f32[3] edge:f32 max_depth:u8 trunc_depth:u8 point_count:u32
//! model_kind:u8 model_hash:u64
//! (mode = dynamic)
//!     frame_count:u16 pose_flag:u8 frame_points:u32[frame_count]
//!     (pose_flag = 1) pose:f32[12][frame_count]     row-major 3x4
//! header_check:u32      low 32 bits of FNV-1a 64 over the preceding bytes
//! payload...
//! ```
//!
//! Little-endian throughout. The payload is byte-aligned right after the header.

use crate::error::{Error, Result};
use crate::nn::fnv1a64;
use crate::nn::format::{Reader, Writer};
use crate::octree::MAX_DEPTH;
use crate::pointcloud::NormalizationParams;

pub const STREAM_MAGIC: &[u8; 4] = b"VCNB";
pub const STREAM_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Static = 0,
    Dynamic = 1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameInfo {
    pub point_counts: Vec<u32>,
    /// Row-major 3x4 world poses, present when the decoder should restore them.
    pub poses: Option<Vec<[f32; 12]>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BitstreamHeader {
    pub mode: Mode,
    pub params: NormalizationParams,
    pub max_depth: u8,
    pub trunc_depth: u8,
    pub point_count: u32,
    pub model_kind: u8,
    pub model_hash: u64,
    pub frames: Option<FrameInfo>,
}

impl BitstreamHeader {
    pub fn write(&self, out: &mut Vec<u8>) {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(STREAM_MAGIC);
        w.u8(STREAM_VERSION);
        w.u8(self.mode as u8);
        for o in self.params.origin {
            w.f32(o);
        }
        w.f32(self.params.edge);
        w.u8(self.max_depth);
        w.u8(self.trunc_depth);
        w.u32(self.point_count);
        w.u8(self.model_kind);
        w.u64(self.model_hash);
        if let Some(f) = &self.frames {
            w.u16(f.point_counts.len());
            w.u8(f.poses.is_some() as u8);
            for &c in &f.point_counts {
                w.u32(c);
            }
            for pose in f.poses.iter().flatten() {
                for &v in pose {
                    w.f32(v as f64);
                }
            }
        }
        let check = fnv1a64(&w.0) as u32;
        w.u32(check);
        out.extend_from_slice(&w.0);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write(&mut v);
        v
    }

    /// Parses and validates a header; returns it with the payload offset.
    pub fn read(bytes: &[u8]) -> Result<(BitstreamHeader, usize)> {
        let mut r = Reader::new(bytes);
        if r.take(4).map_err(|_| bad("not a VCNB bitstream"))? != STREAM_MAGIC {
            return Err(bad("not a VCNB bitstream"));
        }
        let version = r.u8()?;
        if version != STREAM_VERSION {
            return Err(Error::Format(format!(
                "unsupported bitstream version {version}"
            )));
        }
        let mode = match r.u8()? {
            0 => Mode::Static,
            1 => Mode::Dynamic,
            m => return Err(Error::Format(format!("unknown mode {m}"))),
        };
        let origin = [r.f32()? as f64, r.f32()? as f64, r.f32()? as f64];
        let edge = r.f32()? as f64;
        let max_depth = r.u8()?;
        let trunc_depth = r.u8()?;
        let point_count = r.u32()?;
        let model_kind = r.u8()?;
        let model_hash = r.u64()?;
        let frames = match mode {
            Mode::Static => None,
            Mode::Dynamic => {
                let n = r.u16()? as usize;
                let pose_flag = r.u8()?;
                if pose_flag > 1 {
                    return Err(bad("invalid pose flag"));
                }
                let point_counts = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                let poses = if pose_flag == 1 {
                    let mut v = Vec::with_capacity(n);
                    for _ in 0..n {
                        let mut m = [0f32; 12];
                        for x in &mut m {
                            *x = r.f32()?;
                        }
                        v.push(m);
                    }
                    Some(v)
                } else {
                    None
                };
                Some(FrameInfo {
                    point_counts,
                    poses,
                })
            }
        };
        let body_len = r.pos;
        let check = r.u32()?;
        if check != fnv1a64(&bytes[..body_len]) as u32 {
            return Err(bad("header checksum mismatch"));
        }
        let header = BitstreamHeader {
            mode,
            params: NormalizationParams { origin, edge },
            max_depth,
            trunc_depth,
            point_count,
            model_kind,
            model_hash,
            frames,
        };
        header.validate()?;
        Ok((header, r.pos))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.max_depth > MAX_DEPTH {
            return Err(Error::Format(format!(
                "invalid max depth {}",
                self.max_depth
            )));
        }
        if self.trunc_depth == 0 || self.trunc_depth > self.max_depth {
            return Err(Error::Format(format!(
                "truncation depth {} not in 1..={}",
                self.trunc_depth, self.max_depth
            )));
        }
        let p = &self.params;
        if !(p.edge > 0.0 && p.edge.is_finite()) || !p.origin.iter().all(|v| v.is_finite()) {
            return Err(bad("invalid normalization parameters"));
        }
        match (&self.frames, self.mode) {
            (None, Mode::Static) => {}
            (Some(f), Mode::Dynamic) => {
                if f.point_counts.is_empty() {
                    return Err(bad("sequence has no frames"));
                }
                let total: u64 = f.point_counts.iter().map(|&c| c as u64).sum();
                if total != self.point_count as u64 {
                    return Err(bad("frame point counts do not add up"));
                }
            }
            _ => return Err(bad("frame table does not match mode")),
        }
        Ok(())
    }
}

fn bad(msg: &str) -> Error {
    Error::Format(msg.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dynamic: bool) -> BitstreamHeader {
        BitstreamHeader {
            mode: if dynamic { Mode::Dynamic } else { Mode::Static },
            params: NormalizationParams {
                origin: [-1.5, 0.25, 3.0],
                edge: 2.5,
            },
            max_depth: 9,
            trunc_depth: 7,
            point_count: 30,
            model_kind: 2,
            model_hash: 0x0123_4567_89ab_cdef,
            frames: dynamic.then(|| FrameInfo {
                point_counts: vec![10, 20],
                poses: Some(vec![
                    [
                        1.0, 0.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0
                    ];
                    2
                ]),
            }),
        }
    }

    #[test]
    fn round_trip() {
        for dynamic in [false, true] {
            let h = sample(dynamic);
            let mut bytes = h.to_bytes();
            let len = bytes.len();
            bytes.extend_from_slice(&[1, 2, 3]);
            let (back, off) = BitstreamHeader::read(&bytes).unwrap();
            assert_eq!(back, h);
            assert_eq!(off, len);
        }
        assert_eq!(
            sample(false).to_bytes().len(),
            4 + 2 + 16 + 2 + 4 + 1 + 8 + 4
        );
    }

    #[test]
    fn every_single_byte_corruption_is_detected() {
        for dynamic in [false, true] {
            let bytes = sample(dynamic).to_bytes();
            for i in 0..bytes.len() {
                for flip in [0x01u8, 0x80, 0xff] {
                    let mut bad = bytes.clone();
                    bad[i] ^= flip;
                    assert!(
                        BitstreamHeader::read(&bad).is_err(),
                        "byte {i} flip {flip:#x}"
                    );
                }
            }
        }
    }

    #[test]
    fn truncated_header() {
        let bytes = sample(true).to_bytes();
        for n in 0..bytes.len() {
            assert!(BitstreamHeader::read(&bytes[..n]).is_err());
        }
    }
}
