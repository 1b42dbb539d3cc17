//! Point clouds, rigid poses and unit-cube normalization.

mod io;

pub use io::{read_points, read_points_file, write_points, write_points_file, Format};

use crate::error::{Error, Result};
use crate::rng::Prng;

pub type Point = [f64; 3];

/// Rotation followed by translation: `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl RigidTransform {
    const ORTHO_TOL: f64 = 1e-6;

    pub fn identity() -> Self {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        RigidTransform {
            translation: t,
            ..Self::identity()
        }
    }

    /// Rotation about the z axis by `angle` radians.
    pub fn rotation_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RigidTransform {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Validates that `rotation` is a proper rotation (orthonormal, det = +1).
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        if rotation
            .iter()
            .flatten()
            .chain(&translation)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("pose has non-finite entries".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > Self::ORTHO_TOL {
                    return Err(Error::InvalidArgument(
                        "pose rotation is not orthonormal".into(),
                    ));
                }
            }
        }
        let r = &rotation;
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > Self::ORTHO_TOL {
            return Err(Error::InvalidArgument(format!(
                "pose rotation has determinant {det}"
            )));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    /// Parses a 3x4 row-major `[R | t]` matrix.
    pub fn from_row_major(m: &[f64; 12]) -> Result<Self> {
        let rotation = [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]];
        Self::new(rotation, [m[3], m[7], m[11]])
    }

    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1],
            r[2][2], t[2],
        ]
    }

    pub fn rotation_matrix(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation_vector(&self) -> &[f64; 3] {
        &self.translation
    }

    pub fn apply(&self, p: &Point) -> Point {
        let r = &self.rotation;
        let mut out = self.translation;
        for (i, o) in out.iter_mut().enumerate() {
            *o += r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2];
        }
        out
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let mut rt = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rt[i][j] = r[j][i];
            }
        }
        let t = &self.translation;
        let mut ti = [0.0; 3];
        for i in 0..3 {
            ti[i] = -(rt[i][0] * t[0] + rt[i][1] * t[1] + rt[i][2] * t[2]);
        }
        RigidTransform {
            rotation: rt,
            translation: ti,
        }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        let a = &self.rotation;
        let b = &first.rotation;
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        RigidTransform {
            rotation: r,
            translation: self.apply(&first.translation),
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub pose: Option<RigidTransform>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud { points, pose: None }
    }

    pub fn with_pose(mut self, pose: RigidTransform) -> Self {
        self.pose = Some(pose);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self
            .points
            .iter()
            .position(|p| p.iter().any(|v| !v.is_finite()))
        {
            Some(i) => Err(Error::InvalidArgument(format!(
                "point {i} has a non-finite coordinate"
            ))),
            None => Ok(()),
        }
    }

    /// Axis-aligned bounds `(min, max)`; `None` when empty.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        let first = *self.points.first()?;
        Some(
            self.points
                .iter()
                .fold((first, first), |(mut lo, mut hi), p| {
                    for i in 0..3 {
                        lo[i] = lo[i].min(p[i]);
                        hi[i] = hi[i].max(p[i]);
                    }
                    (lo, hi)
                }),
        )
    }
}

/// Cubic bounding box mapping world coordinates onto `[0, 1]^3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationParams {
    pub origin: [f64; 3],
    pub edge: f64,
}

impl NormalizationParams {
    pub fn normalize_point(&self, p: &Point) -> Point {
        [
            (p[0] - self.origin[0]) / self.edge,
            (p[1] - self.origin[1]) / self.edge,
            (p[2] - self.origin[2]) / self.edge,
        ]
    }

    pub fn denormalize_point(&self, p: &Point) -> Point {
        [
            p[0] * self.edge + self.origin[0],
            p[1] * self.edge + self.origin[1],
            p[2] * self.edge + self.origin[2],
        ]
    }

    pub fn denormalize(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud::new(
            cloud
                .points
                .iter()
                .map(|p| self.denormalize_point(p))
                .collect(),
        )
    }

    /// Normalizes with these params, clamping into `[0, 1]`.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        let points = cloud
            .points
            .iter()
            .map(|p| {
                let q = self.normalize_point(p);
                [
                    q[0].clamp(0.0, 1.0),
                    q[1].clamp(0.0, 1.0),
                    q[2].clamp(0.0, 1.0),
                ]
            })
            .collect();
        PointCloud::new(points)
    }

    /// Rounds to single precision for the bitstream header while still
    /// covering the original box: origin rounds down, edge rounds up.
    pub fn to_single_precision(&self) -> NormalizationParams {
        let mut origin = [0.0; 3];
        let mut shift: f64 = 0.0;
        for i in 0..3 {
            let mut o = self.origin[i] as f32;
            if o as f64 > self.origin[i] {
                o = o.next_down();
            }
            origin[i] = o as f64;
            shift = shift.max(self.origin[i] - origin[i]);
        }
        let want = self.edge + shift;
        let mut edge = want as f32;
        if (edge as f64) < want {
            edge = edge.next_up();
        }
        NormalizationParams {
            origin,
            edge: edge as f64,
        }
    }
}

/// Maps the cloud into the unit cube: origin is the componentwise minimum and
/// the edge is the largest extent (1 when every axis is degenerate).
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, NormalizationParams)> {
    cloud.check_finite()?;
    let (lo, hi) = cloud.bounds().ok_or(Error::EmptyCloud)?;
    let extent = (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    let edge = if extent > 0.0 { extent } else { 1.0 };
    let params = NormalizationParams { origin: lo, edge };
    Ok((params.apply(cloud), params))
}

/// Moves every point into the pose's target frame and clears the pose.
pub fn apply_pose(cloud: &PointCloud) -> Result<PointCloud> {
    let pose = cloud.pose.as_ref().ok_or(Error::MissingPose)?;
    Ok(PointCloud::new(
        cloud.points.iter().map(|p| pose.apply(p)).collect(),
    ))
}

/// Uniform random subsample without replacement; returns the cloud unchanged
/// when it already has at most `n` points.
pub fn subsample(cloud: &PointCloud, n: usize, seed: u64) -> PointCloud {
    if cloud.len() <= n {
        return cloud.clone();
    }
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    Prng::new(seed).shuffle(&mut idx);
    idx.truncate(n);
    idx.sort_unstable();
    PointCloud {
        points: idx.into_iter().map(|i| cloud.points[i]).collect(),
        pose: cloud.pose,
    }
}

pub(crate) fn squared_distance(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
