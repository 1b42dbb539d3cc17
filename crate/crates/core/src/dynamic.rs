//! Sequence coding: frames are pose-aligned into one shared cube and coded
//! depth by depth, frame by frame, so each frame can use its neighbours'
//! already decoded levels as context.

use crate::coder::codec_support::{check_depths, check_model, drive, point_count};
use crate::coder::{BitstreamHeader, EncodeReport, FrameInfo, Mode, RangeDecoder, RangeEncoder};
use crate::entropy::EntropyModel;
use crate::error::{Error, Result};
use crate::octree::{CellIndex, Octree};
use crate::pointcloud::{normalize, NormalizationParams, PointCloud, RigidTransform};
use crate::refine::RefineParams;

/// Frames aligned into a common world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudSequence {
    /// Aligned points; poses already applied.
    frames: Vec<PointCloud>,
    poses: Vec<RigidTransform>,
}

impl CloudSequence {
    /// Aligns each frame with its pose; frames without a pose keep their
    /// coordinates (identity pose).
    pub fn new(frames: &[PointCloud]) -> Result<CloudSequence> {
        if frames.is_empty() {
            return Err(Error::InvalidArgument("sequence has no frames".into()));
        }
        if frames.len() > u16::MAX as usize {
            return Err(Error::out_of_range("frame count", frames.len() as i64));
        }
        let mut aligned = Vec::with_capacity(frames.len());
        let mut poses = Vec::with_capacity(frames.len());
        for f in frames {
            if f.is_empty() {
                return Err(Error::EmptyCloud);
            }
            f.check_finite()?;
            let pose = f.pose.unwrap_or_default();
            aligned.push(PointCloud::new(
                f.points.iter().map(|p| pose.apply(p)).collect(),
            ));
            poses.push(pose);
        }
        Ok(CloudSequence {
            frames: aligned,
            poses,
        })
    }

    /// Like [`CloudSequence::new`] but every frame must carry a pose.
    pub fn with_required_poses(frames: &[PointCloud]) -> Result<CloudSequence> {
        if frames.iter().any(|f| f.pose.is_none()) {
            return Err(Error::MissingPose);
        }
        Self::new(frames)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[PointCloud] {
        &self.frames
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    /// Cube over the union of all aligned frames, rounded for the wire.
    pub fn normalization(&self) -> Result<NormalizationParams> {
        let union = PointCloud::new(
            self.frames
                .iter()
                .flat_map(|f| f.points.iter().copied())
                .collect(),
        );
        Ok(normalize(&union)?.1.to_single_precision())
    }

    /// Octree of every frame at `depth` in the shared cube.
    pub fn octrees(&self, depth: u8) -> Result<(NormalizationParams, Vec<Octree>)> {
        let params = self.normalization()?;
        let trees = self
            .frames
            .iter()
            .map(|f| Octree::build(&params.apply(f), depth))
            .collect::<Result<_>>()?;
        Ok((params, trees))
    }
}

pub fn encode_sequence(
    seq: &CloudSequence,
    depth: u8,
    trunc: u8,
    model: &EntropyModel,
    store_poses: bool,
) -> Result<Vec<u8>> {
    Ok(encode_sequence_with_report(seq, depth, trunc, model, store_poses)?.0)
}

/// Single interleaved payload: for each depth, every frame in order.
pub fn encode_sequence_with_report(
    seq: &CloudSequence,
    depth: u8,
    trunc: u8,
    model: &EntropyModel,
    store_poses: bool,
) -> Result<(Vec<u8>, EncodeReport)> {
    check_depths(depth, trunc)?;
    let (params, trees) = seq.octrees(trunc)?;
    let counts = seq
        .frames
        .iter()
        .map(|f| point_count(f.len()))
        .collect::<Result<Vec<u32>>>()?;
    let total = point_count(seq.frames.iter().map(PointCloud::len).sum())?;
    let header = BitstreamHeader {
        mode: Mode::Dynamic,
        params,
        max_depth: depth,
        trunc_depth: trunc,
        point_count: total,
        model_kind: model.kind() as u8,
        model_hash: model.fingerprint(),
        frames: Some(FrameInfo {
            point_counts: counts.clone(),
            poses: store_poses.then(|| {
                seq.poses
                    .iter()
                    .map(|p| p.to_row_major().map(|v| v as f32))
                    .collect()
            }),
        }),
    };
    let mut out = header.to_bytes();
    let header_bytes = out.len();
    let mut enc = RangeEncoder::new();
    let (coded, stats) = drive(model, &counts, depth, trunc, |pos, table| {
        let s = trees[pos.frame].symbols(pos.depth)[pos.index];
        enc.encode(table, s);
        Ok(s)
    })?;
    debug_assert_eq!(coded, trees);
    let payload = enc.finish();
    let report = EncodeReport::new(total as usize, header_bytes, payload.len(), stats);
    out.extend_from_slice(&payload);
    Ok((out, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedSequence {
    pub header: BitstreamHeader,
    pub octrees: Vec<Octree>,
    /// Frames in the shared aligned frame, or in their own frames when poses
    /// were restored.
    pub frames: Vec<PointCloud>,
}

pub fn decode_sequence(
    bytes: &[u8],
    model: &EntropyModel,
    refine: Option<&RefineParams>,
    restore_poses: bool,
) -> Result<Vec<PointCloud>> {
    Ok(decode_sequence_full(bytes, model, refine, restore_poses)?.frames)
}

pub fn decode_sequence_full(
    bytes: &[u8],
    model: &EntropyModel,
    refine: Option<&RefineParams>,
    restore_poses: bool,
) -> Result<DecodedSequence> {
    let (header, offset) = BitstreamHeader::read(bytes)?;
    let info = match (&header.mode, &header.frames) {
        (Mode::Dynamic, Some(info)) => info.clone(),
        _ => return Err(Error::Format("bitstream holds a single cloud".into())),
    };
    check_model(&header, model)?;
    let poses = if restore_poses {
        let raw = info.poses.as_ref().ok_or(Error::MissingPose)?;
        Some(
            raw.iter()
                .map(|m| RigidTransform::from_row_major(&m.map(|v| v as f64)).map(|p| p.inverse()))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Format(format!("stored pose: {e}")))?,
        )
    } else {
        None
    };
    let mut dec = RangeDecoder::new(&bytes[offset..])?;
    let (octrees, _) = drive(
        model,
        &info.point_counts,
        header.max_depth,
        header.trunc_depth,
        |_, table| dec.decode(table),
    )?;
    dec.finish()?;
    let mut frames = Vec::with_capacity(octrees.len());
    for (t, tree) in octrees.iter().enumerate() {
        let pts = match refine {
            Some(r) => r.refine_leaves(tree)?,
            None => tree.leaves().iter().map(CellIndex::center).collect(),
        };
        let mut cloud = header.params.denormalize(&PointCloud::new(pts));
        if let Some(inv) = &poses {
            cloud.points = cloud.points.iter().map(|p| inv[t].apply(p)).collect();
        }
        frames.push(cloud);
    }
    Ok(DecodedSequence {
        header,
        octrees,
        frames,
    })
}
