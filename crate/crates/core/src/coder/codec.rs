//! Static cloud encode/decode and the level-by-level coding driver shared
//! with sequence coding.

use serde::Serialize;

use super::bitstream::{BitstreamHeader, Mode};
use super::freq::FrequencyTable;
use super::range::{RangeDecoder, RangeEncoder};
use crate::entropy::{EntropyModel, LevelContext, ModelSession};
use crate::error::{Error, Result};
use crate::octree::{expand_children, CellIndex, Octree, MAX_DEPTH};
use crate::pointcloud::{normalize, NormalizationParams, PointCloud};
use crate::refine::RefineParams;
use crate::voxel::{TemporalGrids, VoxelGrid};

/// Cells whose contexts are predicted together before coding.
const BLOCK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Pos {
    pub frame: usize,
    pub depth: u8,
    pub index: usize,
}

/// Code-length accounting gathered while driving a model over a stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CodingStats {
    /// Per frame, `sum -log2 q(s)` under the model's real-valued probabilities.
    pub model_bits: Vec<f64>,
    /// Per frame, `sum -log2 (freq(s) / 2^16)` under the quantized tables.
    pub table_bits: Vec<f64>,
    pub symbols: Vec<usize>,
}

impl CodingStats {
    pub fn total_model_bits(&self) -> f64 {
        self.model_bits.iter().sum()
    }

    pub fn total_table_bits(&self) -> f64 {
        self.table_bits.iter().sum()
    }

    pub fn total_symbols(&self) -> usize {
        self.symbols.iter().sum()
    }
}

pub(crate) fn check_depths(depth: u8, trunc: u8) -> Result<()> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::out_of_range("depth", depth));
    }
    if trunc == 0 || trunc > depth {
        return Err(Error::InvalidArgument(format!(
            "truncation depth {trunc} must be in 1..={depth}"
        )));
    }
    Ok(())
}

fn grid_at(grids: &[Vec<Option<VoxelGrid>>], t: usize, k: u8) -> Result<&VoxelGrid> {
    grids[t][k as usize].as_ref().ok_or_else(|| {
        Error::Format(format!(
            "schedule desync: frame {t} depth {k} not decoded yet"
        ))
    })
}

/// Runs the depth-major, frame-minor schedule. For every symbol the context is
/// built from already coded levels only; `next` receives the symbol's table
/// and returns the symbol (encoders look it up, decoders decode it).
///
/// Frame `t` at depth `k` sees frame `t-1` at depths `k` and `k+1` and frame
/// `t+1` at depth `k`. `max_points[t]` bounds every level of frame `t`.
pub(crate) fn drive<F>(
    model: &EntropyModel,
    max_points: &[u32],
    max_depth: u8,
    trunc: u8,
    mut next: F,
) -> Result<(Vec<Octree>, CodingStats)>
where
    F: FnMut(Pos, &FrequencyTable) -> Result<u8>,
{
    check_depths(max_depth, trunc)?;
    let frames = max_points.len();
    let mut levels: Vec<Vec<Vec<CellIndex>>> = vec![vec![vec![CellIndex::ROOT]]; frames];
    let mut symbols: Vec<Vec<Vec<u8>>> = vec![Vec::new(); frames];
    let mut parent_syms: Vec<Vec<u8>> = vec![vec![0]; frames];
    let mut grids: Vec<Vec<Option<VoxelGrid>>> = (0..frames)
        .map(|_| {
            let mut g = vec![None; trunc as usize + 1];
            g[0] = Some(VoxelGrid::from_cells(0, &[CellIndex::ROOT]).expect("root grid"));
            g
        })
        .collect();
    let mut stats = CodingStats {
        model_bits: vec![0.0; frames],
        table_bits: vec![0.0; frames],
        symbols: vec![0; frames],
    };
    let mut session = ModelSession::new(model);
    for k in 0..trunc {
        if k > 0 {
            for g in &mut grids {
                g[k as usize - 1] = None;
            }
        }
        for t in 0..frames {
            let temporal = TemporalGrids {
                prev: t
                    .checked_sub(1)
                    .map(|p| grid_at(&grids, p, k))
                    .transpose()?,
                next: (t + 1 < frames)
                    .then(|| grid_at(&grids, t + 1, k))
                    .transpose()?,
                prev_child: t
                    .checked_sub(1)
                    .map(|p| grid_at(&grids, p, k + 1))
                    .transpose()?,
            };
            let cells = &levels[t][k as usize];
            let ctx = LevelContext {
                max_depth,
                cells,
                parent_symbols: &parent_syms[t],
                grid: grid_at(&grids, t, k)?,
                temporal,
            };
            let mut syms = Vec::with_capacity(cells.len());
            for start in (0..cells.len()).step_by(BLOCK) {
                let end = (start + BLOCK).min(cells.len());
                session.prepare(&ctx, start..end)?;
                for i in start..end {
                    let table = session.table(i);
                    let s = next(
                        Pos {
                            frame: t,
                            depth: k,
                            index: i,
                        },
                        &table,
                    )?;
                    if s == 0 {
                        return Err(Error::Format("zero occupancy symbol".into()));
                    }
                    stats.model_bits[t] -= session.probability(i, s).log2();
                    stats.table_bits[t] += table.cost_bits(s);
                    session.observe(i, s);
                    syms.push(s);
                }
            }
            stats.symbols[t] += syms.len();
            let children = expand_children(cells, &syms);
            if children.len() as u64 > max_points[t] as u64 {
                return Err(Error::Format(format!(
                    "frame {t} depth {} has {} cells but only {} points",
                    k + 1,
                    children.len(),
                    max_points[t]
                )));
            }
            parent_syms[t] = crate::entropy::parent_symbols(&children, cells, &syms);
            grids[t][k as usize + 1] = Some(VoxelGrid::from_cells(k + 1, &children)?);
            symbols[t].push(syms);
            levels[t].push(children);
        }
    }
    let trees = levels
        .into_iter()
        .zip(symbols)
        .map(|(l, s)| Octree::from_parts(l, s))
        .collect();
    Ok((trees, stats))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EncodeReport {
    pub points: usize,
    pub symbols: usize,
    pub header_bytes: usize,
    pub payload_bytes: usize,
    /// Payload bits per input point.
    pub bpp: f64,
    /// Payload bits per coded symbol.
    pub bps: f64,
    /// Model cross-entropy of the coded symbols, in bits.
    pub model_bits: f64,
    /// Code length under the quantized tables, in bits.
    pub table_bits: f64,
    pub per_frame: CodingStats,
}

impl EncodeReport {
    pub(crate) fn new(
        points: usize,
        header_bytes: usize,
        payload_bytes: usize,
        stats: CodingStats,
    ) -> Self {
        let symbols = stats.total_symbols();
        let bits = payload_bytes as f64 * 8.0;
        EncodeReport {
            points,
            symbols,
            header_bytes,
            payload_bytes,
            bpp: bits / points as f64,
            bps: if symbols == 0 {
                0.0
            } else {
                bits / symbols as f64
            },
            model_bits: stats.total_model_bits(),
            table_bits: stats.total_table_bits(),
            per_frame: stats,
        }
    }

    pub fn total_bytes(&self) -> usize {
        self.header_bytes + self.payload_bytes
    }
}

/// Wire normalization of a cloud and its octree at `trunc`.
pub(crate) fn prepare_cloud(
    cloud: &PointCloud,
    trunc: u8,
) -> Result<(NormalizationParams, Octree)> {
    let (_, params) = normalize(cloud)?;
    let wire = params.to_single_precision();
    let tree = Octree::build(&wire.apply(cloud), trunc)?;
    Ok((wire, tree))
}

pub(crate) fn point_count(n: usize) -> Result<u32> {
    u32::try_from(n)
        .map_err(|_| Error::InvalidArgument(format!("{n} points exceed the format limit")))
}

/// Encodes the octree of `cloud` at depth `trunc`; `depth` is the nominal
/// maximum depth recorded in the header and seen by the model.
pub fn encode_cloud(
    cloud: &PointCloud,
    depth: u8,
    trunc: u8,
    model: &EntropyModel,
) -> Result<Vec<u8>> {
    Ok(encode_cloud_with_report(cloud, depth, trunc, model)?.0)
}

pub fn encode_cloud_with_report(
    cloud: &PointCloud,
    depth: u8,
    trunc: u8,
    model: &EntropyModel,
) -> Result<(Vec<u8>, EncodeReport)> {
    check_depths(depth, trunc)?;
    let (params, tree) = prepare_cloud(cloud, trunc)?;
    let n = point_count(cloud.len())?;
    let header = BitstreamHeader {
        mode: Mode::Static,
        params,
        max_depth: depth,
        trunc_depth: trunc,
        point_count: n,
        model_kind: model.kind() as u8,
        model_hash: model.fingerprint(),
        frames: None,
    };
    let mut out = header.to_bytes();
    let header_bytes = out.len();
    let mut enc = RangeEncoder::new();
    let (coded, stats) = drive(model, &[n], depth, trunc, |pos, table| {
        let s = tree.symbols(pos.depth)[pos.index];
        enc.encode(table, s);
        Ok(s)
    })?;
    debug_assert_eq!(coded[0], tree);
    let payload = enc.finish();
    let report = EncodeReport::new(cloud.len(), header_bytes, payload.len(), stats);
    out.extend_from_slice(&payload);
    Ok((out, report))
}

pub(crate) fn check_model(header: &BitstreamHeader, model: &EntropyModel) -> Result<()> {
    if header.model_kind != model.kind() as u8 {
        return Err(Error::ModelMismatch(format!(
            "bitstream needs model kind {}, got {}",
            header.model_kind,
            model.kind().name()
        )));
    }
    let fp = model.fingerprint();
    if header.model_hash != fp {
        return Err(Error::ModelMismatch(format!(
            "bitstream model hash {:016x} does not match model {fp:016x}",
            header.model_hash
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedCloud {
    pub header: BitstreamHeader,
    pub octree: Octree,
    pub cloud: PointCloud,
}

pub fn decode_cloud(
    bytes: &[u8],
    model: &EntropyModel,
    refine: Option<&RefineParams>,
) -> Result<PointCloud> {
    Ok(decode_cloud_full(bytes, model, refine)?.cloud)
}

pub fn decode_cloud_full(
    bytes: &[u8],
    model: &EntropyModel,
    refine: Option<&RefineParams>,
) -> Result<DecodedCloud> {
    let (header, offset) = BitstreamHeader::read(bytes)?;
    if header.mode != Mode::Static {
        return Err(Error::Format("bitstream holds a sequence".into()));
    }
    check_model(&header, model)?;
    let mut dec = RangeDecoder::new(&bytes[offset..])?;
    let (mut trees, _) = drive(
        model,
        &[header.point_count],
        header.max_depth,
        header.trunc_depth,
        |_, table| dec.decode(table),
    )?;
    dec.finish()?;
    let octree = trees.pop().expect("one frame");
    let points = match refine {
        Some(r) => r.refine_leaves(&octree)?,
        None => octree.leaves().iter().map(CellIndex::center).collect(),
    };
    let cloud = header.params.denormalize(&PointCloud::new(points));
    Ok(DecodedCloud {
        header,
        octree,
        cloud,
    })
}

/// Ideal code length of `tree`'s symbols under `model`: returns
/// `(bits per input point, bits per symbol)`.
pub fn cross_entropy_bpp(
    model: &EntropyModel,
    tree: &Octree,
    max_depth: u8,
    points: usize,
) -> Result<(f64, f64)> {
    if points == 0 {
        return Err(Error::EmptyCloud);
    }
    let limit = point_count(points.max(tree.leaves().len()))?;
    let (_, stats) = drive(model, &[limit], max_depth, tree.max_depth(), |pos, _| {
        Ok(tree.symbols(pos.depth)[pos.index])
    })?;
    let bits = stats.total_model_bits();
    Ok((bits / points as f64, bits / stats.total_symbols() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{Architecture, NeuralModel};
    use crate::rng::Prng;

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = Prng::new(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    let u = rng.uniform() * std::f64::consts::TAU;
                    let v = rng.uniform();
                    [3.0 * u.cos() + 0.1 * v, 3.0 * u.sin(), 10.0 * v - 2.0]
                })
                .collect(),
        )
    }

    fn neural(dynamic: bool) -> EntropyModel {
        let arch = Architecture::compact();
        let mut m = if dynamic {
            NeuralModel::new_dynamic(&arch, 5, 3).unwrap()
        } else {
            NeuralModel::new_static(&arch, 5, 3).unwrap()
        };
        let mut rng = Prng::new(11);
        for t in m.params_mut().tensors_mut() {
            for v in t.data_mut() {
                *v += rng.range(-0.1, 0.1);
            }
        }
        m.params_mut().round_to_f32();
        EntropyModel::Neural(m)
    }

    fn models() -> Vec<EntropyModel> {
        vec![
            EntropyModel::Uniform,
            EntropyModel::adaptive(10).unwrap(),
            neural(false),
            neural(true),
        ]
    }

    #[test]
    fn single_point_codes_one_symbol_per_level() {
        let c = PointCloud::new(vec![[0.6, 0.7, 0.7]]);
        let (bytes, rep) = encode_cloud_with_report(&c, 3, 3, &EntropyModel::Uniform).unwrap();
        assert_eq!(rep.symbols, 3);
        assert!(rep.payload_bytes <= 3 + 4);
        let d = decode_cloud_full(&bytes, &EntropyModel::Uniform, None).unwrap();
        assert_eq!(d.octree.leaves().len(), 1);
        assert_eq!(d.cloud.points.len(), 1);
    }

    #[test]
    fn round_trip_all_models() {
        let c = cloud(2000, 1);
        for m in models() {
            for (depth, trunc) in [(6, 6), (8, 5), (7, 7)] {
                let bytes = encode_cloud(&c, depth, trunc, &m).unwrap();
                let d = decode_cloud_full(&bytes, &m, None).unwrap();
                let (params, tree) = prepare_cloud(&c, trunc).unwrap();
                assert_eq!(d.octree, tree, "{:?} {depth} {trunc}", m.kind());
                assert_eq!(d.header.params, params);
                assert_eq!(d.cloud, tree.reconstruct_centers(&params));
            }
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let c = cloud(3000, 2);
        for m in models() {
            assert_eq!(
                encode_cloud(&c, 7, 7, &m).unwrap(),
                encode_cloud(&c, 7, 7, &m).unwrap()
            );
        }
    }

    #[test]
    fn wrong_model_is_refused() {
        let c = cloud(500, 3);
        let bytes = encode_cloud(&c, 5, 5, &EntropyModel::adaptive(8).unwrap()).unwrap();
        for other in [EntropyModel::Uniform, EntropyModel::adaptive(9).unwrap()] {
            assert!(matches!(
                decode_cloud(&bytes, &other, None),
                Err(Error::ModelMismatch(_))
            ));
        }
    }

    #[test]
    fn truncated_or_extended_payload_is_an_error() {
        let c = cloud(800, 4);
        let bytes = encode_cloud(&c, 6, 6, &EntropyModel::Uniform).unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 10, bytes.len() / 2, 10] {
            assert!(decode_cloud(&bytes[..cut], &EntropyModel::Uniform, None).is_err());
        }
        let mut long = bytes.clone();
        long.push(7);
        assert!(decode_cloud(&long, &EntropyModel::Uniform, None).is_err());
    }

    #[test]
    fn report_accounting() {
        let c = cloud(5000, 5);
        let m = EntropyModel::adaptive(12).unwrap();
        let (bytes, rep) = encode_cloud_with_report(&c, 8, 8, &m).unwrap();
        assert_eq!(rep.total_bytes(), bytes.len());
        let (_, tree) = prepare_cloud(&c, 8).unwrap();
        let (bpp, bps) = cross_entropy_bpp(&m, &tree, 8, c.len()).unwrap();
        assert!(
            (bpp * c.len() as f64 - bps * tree.symbol_count() as f64).abs()
                < 1e-9 * bpp * c.len() as f64
        );
        assert!((bpp * c.len() as f64 - rep.model_bits).abs() < 1e-6);
        assert!(rep.payload_bytes as f64 * 8.0 <= rep.table_bits + 128.0);
    }

    #[test]
    fn zero_refiner_is_identity() {
        let c = cloud(1000, 6);
        let m = EntropyModel::Uniform;
        let bytes = encode_cloud(&c, 6, 6, &m).unwrap();
        let mut r = RefineParams::new(5).unwrap();
        r.init_depth(6, &Architecture::compact(), 1).unwrap();
        assert_eq!(
            decode_cloud(&bytes, &m, Some(&r)).unwrap(),
            decode_cloud(&bytes, &m, None).unwrap()
        );
        let mut r4 = RefineParams::new(5).unwrap();
        r4.init_depth(4, &Architecture::compact(), 1).unwrap();
        assert!(decode_cloud(&bytes, &m, Some(&r4)).is_err());
    }

    #[test]
    fn invalid_depths() {
        let c = cloud(10, 7);
        assert!(encode_cloud(&c, 5, 6, &EntropyModel::Uniform).is_err());
        assert!(encode_cloud(&c, 17, 6, &EntropyModel::Uniform).is_err());
        assert!(encode_cloud(&c, 5, 0, &EntropyModel::Uniform).is_err());
        assert!(encode_cloud(&PointCloud::default(), 5, 5, &EntropyModel::Uniform).is_err());
    }
}
