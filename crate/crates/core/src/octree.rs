//! Octree construction over the unit cube, canonical symbol serialization and
//! cell-center reconstruction.
//!
//! Levels are flat sorted arrays. Child slot `j = 4*bx + 2*by + bz` maps to
//! bit `j` of the parent's occupancy symbol (bit 0 is the least significant).
//! Symbols are emitted level by level, cells sorted by `(x, y, z)` within a
//! level.

use crate::error::{Error, Result};
use crate::pointcloud::{NormalizationParams, PointCloud};

pub const MAX_DEPTH: u8 = 16;

/// Cell address at a given depth. Derived ordering is `(depth, x, y, z)`,
/// i.e. lexicographic within a level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIndex {
    pub depth: u8,
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl CellIndex {
    pub const ROOT: CellIndex = CellIndex {
        depth: 0,
        x: 0,
        y: 0,
        z: 0,
    };

    pub fn new(depth: u8, x: u32, y: u32, z: u32) -> Result<CellIndex> {
        if depth > MAX_DEPTH {
            return Err(Error::out_of_range("depth", depth));
        }
        let side = 1u64 << depth;
        if [x, y, z].iter().any(|&v| v as u64 >= side) {
            return Err(Error::InvalidArgument(format!(
                "cell ({x}, {y}, {z}) outside depth {depth}"
            )));
        }
        Ok(CellIndex { depth, x, y, z })
    }

    /// Packs `(x, y, z)` so that integer order equals lexicographic order.
    pub(crate) fn key(&self) -> u64 {
        ((self.x as u64) << 34) | ((self.y as u64) << 17) | self.z as u64
    }

    pub fn parent(&self) -> Option<CellIndex> {
        (self.depth > 0).then(|| CellIndex {
            depth: self.depth - 1,
            x: self.x >> 1,
            y: self.y >> 1,
            z: self.z >> 1,
        })
    }

    /// Position of this cell among its parent's eight children.
    pub fn child_slot(&self) -> u8 {
        (((self.x & 1) << 2) | ((self.y & 1) << 1) | (self.z & 1)) as u8
    }

    pub fn child(&self, slot: u8) -> CellIndex {
        CellIndex {
            depth: self.depth + 1,
            x: (self.x << 1) | ((slot >> 2) & 1) as u32,
            y: (self.y << 1) | ((slot >> 1) & 1) as u32,
            z: (self.z << 1) | (slot & 1) as u32,
        }
    }

    /// Cube center in normalized coordinates.
    pub fn center(&self) -> [f64; 3] {
        let scale = 1.0 / (1u64 << self.depth) as f64;
        [
            (self.x as f64 + 0.5) * scale,
            (self.y as f64 + 0.5) * scale,
            (self.z as f64 + 0.5) * scale,
        ]
    }

    pub fn edge(&self) -> f64 {
        1.0 / (1u64 << self.depth) as f64
    }
}

/// Non-zero 8-bit child occupancy mask of a non-leaf node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OccupancySymbol(u8);

impl OccupancySymbol {
    pub fn new(value: u8) -> Option<Self> {
        (value != 0).then_some(OccupancySymbol(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_set(self, slot: u8) -> bool {
        self.0 >> slot & 1 == 1
    }

    pub fn slots(self) -> impl Iterator<Item = u8> {
        (0..8).filter(move |&j| self.is_set(j))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Octree {
    max_depth: u8,
    levels: Vec<Vec<CellIndex>>,
    symbols: Vec<Vec<u8>>,
}

fn check_depth(depth: u8) -> Result<()> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::out_of_range("depth", depth));
    }
    Ok(())
}

/// Leaf cell containing a normalized coordinate; `1.0` clamps into the last cell.
pub fn leaf_index(p: &[f64; 3], depth: u8) -> CellIndex {
    let side = (1u64 << depth) as f64;
    let max = (1u32 << depth) - 1;
    let q = |v: f64| ((v * side).floor().max(0.0) as u32).min(max);
    CellIndex {
        depth,
        x: q(p[0]),
        y: q(p[1]),
        z: q(p[2]),
    }
}

/// Sorted children of `cells` as described by their symbols.
pub fn expand_children(cells: &[CellIndex], symbols: &[u8]) -> Vec<CellIndex> {
    let mut out: Vec<CellIndex> = cells
        .iter()
        .zip(symbols)
        .flat_map(|(c, &s)| (0..8).filter(move |j| s >> j & 1 == 1).map(|j| c.child(j)))
        .collect();
    out.sort_unstable();
    out
}

impl Octree {
    /// Builds the octree of a normalized cloud (coordinates in `[0, 1]`).
    pub fn build(cloud: &PointCloud, depth: u8) -> Result<Octree> {
        check_depth(depth)?;
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(p) = cloud
            .points
            .iter()
            .find(|p| p.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)))
        {
            return Err(Error::InvalidArgument(format!(
                "point {p:?} is outside the unit cube"
            )));
        }
        let mut leaves: Vec<CellIndex> =
            cloud.points.iter().map(|p| leaf_index(p, depth)).collect();
        leaves.sort_unstable();
        leaves.dedup();
        Ok(Self::from_leaves(leaves, depth))
    }

    /// `leaves` must be sorted, unique, at `depth`.
    pub(crate) fn from_leaves(leaves: Vec<CellIndex>, depth: u8) -> Octree {
        let mut levels = vec![Vec::new(); depth as usize + 1];
        let mut symbols = vec![Vec::new(); depth as usize];
        levels[depth as usize] = leaves;
        for k in (0..depth as usize).rev() {
            let children = &levels[k + 1];
            let mut parents: Vec<CellIndex> =
                children.iter().map(|c| c.parent().unwrap()).collect();
            // Siblings are not contiguous in lexicographic order.
            parents.sort_unstable();
            parents.dedup();
            let mut syms = vec![0u8; parents.len()];
            for c in children {
                let p = c.parent().unwrap();
                let i = parents.binary_search(&p).unwrap();
                syms[i] |= 1 << c.child_slot();
            }
            levels[k] = parents;
            symbols[k] = syms;
        }
        Octree {
            max_depth: depth,
            levels,
            symbols,
        }
    }

    /// Assembles an octree from already validated parts (decoder side).
    pub(crate) fn from_parts(levels: Vec<Vec<CellIndex>>, symbols: Vec<Vec<u8>>) -> Octree {
        debug_assert_eq!(levels.len(), symbols.len() + 1);
        Octree {
            max_depth: symbols.len() as u8,
            levels,
            symbols,
        }
    }

    pub fn max_depth(&self) -> u8 {
        self.max_depth
    }

    pub fn level(&self, k: u8) -> &[CellIndex] {
        &self.levels[k as usize]
    }

    pub fn levels(&self) -> &[Vec<CellIndex>] {
        &self.levels
    }

    /// Raw symbols of depth `k`, aligned with `level(k)`.
    pub fn symbols(&self, k: u8) -> &[u8] {
        &self.symbols[k as usize]
    }

    pub fn leaves(&self) -> &[CellIndex] {
        &self.levels[self.max_depth as usize]
    }

    pub fn symbol_count(&self) -> usize {
        self.symbols.iter().map(Vec::len).sum()
    }

    pub fn level_symbols(&self, k: u8) -> Result<Vec<(CellIndex, OccupancySymbol)>> {
        if k >= self.max_depth {
            return Err(Error::out_of_range("level", k));
        }
        Ok(self.levels[k as usize]
            .iter()
            .zip(&self.symbols[k as usize])
            .map(|(&c, &s)| (c, OccupancySymbol(s)))
            .collect())
    }

    /// All symbols in canonical order: level by level, sorted within a level.
    pub fn symbol_stream(&self) -> Vec<u8> {
        self.symbols.concat()
    }

    /// Inverse of [`Octree::symbol_stream`].
    pub fn rebuild_from_symbols(stream: &[u8], depth: u8) -> Result<Octree> {
        check_depth(depth)?;
        let mut pos = 0;
        let mut levels = vec![vec![CellIndex::ROOT]];
        let mut symbols = Vec::with_capacity(depth as usize);
        for _ in 0..depth {
            let cells = levels.last().unwrap();
            let n = cells.len();
            if pos + n > stream.len() {
                return Err(Error::Format(format!(
                    "symbol stream exhausted after {} symbols",
                    stream.len()
                )));
            }
            let syms = stream[pos..pos + n].to_vec();
            if let Some(i) = syms.iter().position(|&s| s == 0) {
                return Err(Error::Format(format!(
                    "zero symbol at position {}",
                    pos + i
                )));
            }
            pos += n;
            let next = expand_children(cells, &syms);
            symbols.push(syms);
            levels.push(next);
        }
        if pos != stream.len() {
            return Err(Error::Format(format!(
                "{} trailing symbols",
                stream.len() - pos
            )));
        }
        Ok(Octree::from_parts(levels, symbols))
    }

    /// Cell centers of the deepest level, denormalized.
    pub fn reconstruct_centers(&self, params: &NormalizationParams) -> PointCloud {
        PointCloud::new(
            self.leaves()
                .iter()
                .map(|c| params.denormalize_point(&c.center()))
                .collect(),
        )
    }

    /// Drops everything below depth `d_t`.
    pub fn truncate(&self, d_t: u8) -> Result<Octree> {
        if d_t == 0 || d_t > self.max_depth {
            return Err(Error::out_of_range("truncation depth", d_t));
        }
        Ok(Octree {
            max_depth: d_t,
            levels: self.levels[..=d_t as usize].to_vec(),
            symbols: self.symbols[..d_t as usize].to_vec(),
        })
    }
}
