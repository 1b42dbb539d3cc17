//! Binary occupancy grids per octree depth and the local crops cut from them.

use crate::error::{Error, Result};
use crate::octree::{CellIndex, Octree};

/// Depths up to this use a dense bitset; deeper grids use sorted keys.
pub const DENSE_MAX_DEPTH: u8 = 9;

/// Same-depth crop edge used by default.
pub const DEFAULT_CROP: usize = 9;

/// Edge of the crop cut from the next-finer grid of the previous frame.
pub const CHILD_CROP: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Storage {
    Dense(Vec<u64>),
    Sparse(Vec<u64>),
}

/// Occupancy of every cell at one depth (`2^k` cells per axis).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelGrid {
    depth: u8,
    count: usize,
    storage: Storage,
}

fn dense_index(depth: u8, x: u32, y: u32, z: u32) -> usize {
    let d = depth as usize;
    ((x as usize) << (2 * d)) | ((y as usize) << d) | z as usize
}

impl VoxelGrid {
    pub fn empty(depth: u8) -> VoxelGrid {
        Self::from_cells(depth, &[]).expect("empty grid is valid")
    }

    /// Cells must all sit at `depth`; duplicates are ignored.
    pub fn from_cells(depth: u8, cells: &[CellIndex]) -> Result<VoxelGrid> {
        if let Some(c) = cells.iter().find(|c| c.depth != depth) {
            return Err(Error::Shape(format!(
                "cell at depth {} in a depth-{depth} grid",
                c.depth
            )));
        }
        let storage = if depth <= DENSE_MAX_DEPTH {
            let bits = 1usize << (3 * depth as usize);
            let mut words = vec![0u64; bits.div_ceil(64)];
            for c in cells {
                let i = dense_index(depth, c.x, c.y, c.z);
                words[i >> 6] |= 1 << (i & 63);
            }
            Storage::Dense(words)
        } else {
            let mut keys: Vec<u64> = cells.iter().map(CellIndex::key).collect();
            keys.sort_unstable();
            keys.dedup();
            Storage::Sparse(keys)
        };
        let count = match &storage {
            Storage::Dense(w) => w.iter().map(|v| v.count_ones() as usize).sum(),
            Storage::Sparse(k) => k.len(),
        };
        Ok(VoxelGrid {
            depth,
            count,
            storage,
        })
    }

    /// Grid of the octree's depth-`k` cells.
    pub fn from_level(octree: &Octree, k: u8) -> Result<VoxelGrid> {
        if k > octree.max_depth() {
            return Err(Error::out_of_range("grid depth", k));
        }
        Self::from_cells(k, octree.level(k))
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn side(&self) -> i64 {
        1i64 << self.depth
    }

    /// Number of occupied cells.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Occupancy at signed coordinates; anything outside the grid is empty.
    pub fn get(&self, x: i64, y: i64, z: i64) -> bool {
        let side = self.side();
        if x < 0 || y < 0 || z < 0 || x >= side || y >= side || z >= side {
            return false;
        }
        match &self.storage {
            Storage::Dense(words) => {
                let i = dense_index(self.depth, x as u32, y as u32, z as u32);
                words[i >> 6] >> (i & 63) & 1 == 1
            }
            Storage::Sparse(keys) => {
                let key = CellIndex {
                    depth: self.depth,
                    x: x as u32,
                    y: y as u32,
                    z: z as u32,
                }
                .key();
                keys.binary_search(&key).is_ok()
            }
        }
    }

    /// Writes the occupancy of the axis-aligned box starting at `start` with
    /// edge `size` into `out` (x-major, z fastest).
    fn fill_box(&self, start: [i64; 3], size: usize, out: &mut [u8]) {
        let side = self.side();
        let n = size as i64;
        for a in 0..n {
            let x = start[0] + a;
            if x < 0 || x >= side {
                continue;
            }
            for b in 0..n {
                let y = start[1] + b;
                if y < 0 || y >= side {
                    continue;
                }
                let row = &mut out[((a * n + b) * n) as usize..][..size];
                let z0 = start[2].max(0);
                let z1 = (start[2] + n).min(side);
                if z0 >= z1 {
                    continue;
                }
                match &self.storage {
                    Storage::Dense(_) => {
                        for z in z0..z1 {
                            row[(z - start[2]) as usize] = self.get(x, y, z) as u8;
                        }
                    }
                    Storage::Sparse(keys) => {
                        let base = CellIndex {
                            depth: self.depth,
                            x: x as u32,
                            y: y as u32,
                            z: 0,
                        }
                        .key();
                        let lo = base | z0 as u64;
                        let hi = base | z1 as u64;
                        let first = keys.partition_point(|&k| k < lo);
                        for &k in keys[first..].iter().take_while(|&&k| k < hi) {
                            let z = (k & 0x1_ffff) as i64;
                            row[(z - start[2]) as usize] = 1;
                        }
                    }
                }
            }
        }
    }

    /// 2x max-pool per axis: the grid one level up.
    pub fn max_pool(&self) -> Result<VoxelGrid> {
        if self.depth == 0 {
            return Err(Error::out_of_range("grid depth", 0));
        }
        let side = self.side();
        let mut cells = Vec::new();
        match &self.storage {
            Storage::Sparse(keys) => {
                for &k in keys {
                    cells.push(CellIndex {
                        depth: self.depth - 1,
                        x: (k >> 34) as u32 >> 1,
                        y: ((k >> 17) & 0x1_ffff) as u32 >> 1,
                        z: (k & 0x1_ffff) as u32 >> 1,
                    });
                }
            }
            Storage::Dense(_) => {
                for x in 0..side {
                    for y in 0..side {
                        for z in 0..side {
                            if self.get(x, y, z) {
                                cells.push(CellIndex {
                                    depth: self.depth - 1,
                                    x: (x >> 1) as u32,
                                    y: (y >> 1) as u32,
                                    z: (z >> 1) as u32,
                                });
                            }
                        }
                    }
                }
            }
        }
        VoxelGrid::from_cells(self.depth - 1, &cells)
    }
}

/// Cubic binary crop, stored x-major with z varying fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Crop {
    pub size: usize,
    pub values: Vec<u8>,
    pub center: CellIndex,
}

impl Crop {
    pub fn zeros(size: usize, center: CellIndex) -> Crop {
        Crop {
            size,
            values: vec![0; size * size * size],
            center,
        }
    }

    pub fn at(&self, a: usize, b: usize, c: usize) -> u8 {
        self.values[(a * self.size + b) * self.size + c]
    }

    pub fn ones(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Odd-sized crop of `grid` centered on `center`, zero outside the grid.
pub fn local_crop(grid: &VoxelGrid, center: CellIndex, m: usize) -> Result<Crop> {
    if m.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("crop size {m} must be odd")));
    }
    if center.depth != grid.depth {
        return Err(Error::Shape(format!(
            "crop center at depth {} but grid at depth {}",
            center.depth, grid.depth
        )));
    }
    let r = (m as i64 - 1) / 2;
    let mut crop = Crop::zeros(m, center);
    grid.fill_box(
        [
            center.x as i64 - r,
            center.y as i64 - r,
            center.z as i64 - r,
        ],
        m,
        &mut crop.values,
    );
    Ok(crop)
}

/// Crop of the next-finer grid covering the refinement of the `size/2`-cell
/// neighbourhood centered on `center`; for `size = 10` the span per axis is
/// `[2c - 4, 2c + 6)`.
pub fn child_region_crop(grid: &VoxelGrid, center: CellIndex, size: usize) -> Result<Crop> {
    if !size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "child crop size {size} must be even"
        )));
    }
    if grid.depth != center.depth + 1 {
        return Err(Error::Shape(format!(
            "child crop needs a depth-{} grid, got depth {}",
            center.depth + 1,
            grid.depth
        )));
    }
    let back = (size as i64 - 2) / 2;
    let mut crop = Crop::zeros(size, center);
    grid.fill_box(
        [
            2 * center.x as i64 - back,
            2 * center.y as i64 - back,
            2 * center.z as i64 - back,
        ],
        size,
        &mut crop.values,
    );
    Ok(crop)
}

/// Occupancy of the six face neighbours, bit order -x, +x, -y, +y, -z, +z.
pub fn face_neighbors(grid: &VoxelGrid, c: CellIndex) -> u8 {
    let (x, y, z) = (c.x as i64, c.y as i64, c.z as i64);
    [
        (x - 1, y, z),
        (x + 1, y, z),
        (x, y - 1, z),
        (x, y + 1, z),
        (x, y, z - 1),
        (x, y, z + 1),
    ]
    .iter()
    .enumerate()
    .fold(0u8, |acc, (i, &(a, b, d))| {
        acc | ((grid.get(a, b, d) as u8) << i)
    })
}

/// Grids of the neighbouring frames visible while coding depth `k` of a frame.
#[derive(Clone, Copy, Debug, Default)]
pub struct TemporalGrids<'a> {
    /// Previous frame, depth `k`.
    pub prev: Option<&'a VoxelGrid>,
    /// Next frame, depth `k`.
    pub next: Option<&'a VoxelGrid>,
    /// Previous frame, depth `k + 1`.
    pub prev_child: Option<&'a VoxelGrid>,
}

/// The four context crops of a node in a sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalCrops {
    pub current: Crop,
    pub prev: Crop,
    pub next: Crop,
    pub prev_child: Crop,
}

impl TemporalCrops {
    pub fn as_array(&self) -> [&Crop; 4] {
        [&self.current, &self.prev, &self.next, &self.prev_child]
    }
}

/// Missing neighbour grids (sequence boundaries) give all-zero crops.
pub fn temporal_context(
    center: CellIndex,
    current: &VoxelGrid,
    neighbours: TemporalGrids<'_>,
    m: usize,
    child_size: usize,
) -> Result<TemporalCrops> {
    let current_crop = local_crop(current, center, m)?;
    let same = |g: Option<&VoxelGrid>| match g {
        Some(g) => local_crop(g, center, m),
        None => Ok(Crop::zeros(m, center)),
    };
    let prev_child = match neighbours.prev_child {
        Some(g) => child_region_crop(g, center, child_size)?,
        None => {
            if !child_size.is_multiple_of(2) {
                return Err(Error::InvalidArgument(format!(
                    "child crop size {child_size} must be even"
                )));
            }
            Crop::zeros(child_size, center)
        }
    };
    Ok(TemporalCrops {
        current: current_crop,
        prev: same(neighbours.prev)?,
        next: same(neighbours.next)?,
        prev_child,
    })
}
