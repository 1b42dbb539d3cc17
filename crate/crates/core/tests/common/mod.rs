#![allow(dead_code)]

use voxelctx::pointcloud::{Point, PointCloud};
use voxelctx::rng::Prng;

pub fn uniform_cube(n: usize, seed: u64) -> PointCloud {
    let mut rng = Prng::new(seed);
    PointCloud::new(
        (0..n)
            .map(|_| [rng.uniform(), rng.uniform(), rng.uniform()])
            .collect(),
    )
}

pub fn sphere_point(rng: &mut Prng, center: Point, radius: f64) -> Point {
    let v = [rng.normal(), rng.normal(), rng.normal()];
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-12);
    [0, 1, 2].map(|i| center[i] + radius * v[i] / r)
}

/// Point on an axis-aligned rectangle `axis = offset`, spanning `[lo, hi]`
/// on the other two axes.
pub fn plane_point(rng: &mut Prng, axis: usize, offset: f64, lo: f64, hi: f64) -> Point {
    let mut p = [0.0; 3];
    for (i, v) in p.iter_mut().enumerate() {
        *v = if i == axis { offset } else { rng.range(lo, hi) };
    }
    p
}

/// Axis-aligned planes and sphere shells, like a room with objects.
pub fn structured_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = Prng::new(seed);
    let planes: Vec<(usize, f64)> = (0..3).map(|a| (a, rng.range(0.0, 0.3))).collect();
    let spheres: Vec<(Point, f64)> = (0..2)
        .map(|_| {
            let r = rng.range(0.1, 0.25);
            ([0, 1, 2].map(|_| rng.range(0.35, 0.65)), r)
        })
        .collect();
    let pts = (0..n)
        .map(|i| match i % 5 {
            0..=2 => {
                let (axis, off) = planes[i % 5];
                plane_point(&mut rng, axis, off, 0.0, 1.0)
            }
            j => {
                let (c, r) = spheres[j - 3];
                sphere_point(&mut rng, c, r)
            }
        })
        .collect();
    PointCloud::new(pts)
}

/// One of several shapes, for randomized sweeps.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = Prng::new(seed ^ 0x5eed);
    match seed % 4 {
        0 => uniform_cube(n, seed),
        1 => structured_cloud(n, seed),
        2 => PointCloud::new(
            (0..n)
                .map(|_| sphere_point(&mut rng, [0.0; 3], 3.0))
                .collect(),
        ),
        _ => {
            // anisotropic blob with an offset origin
            PointCloud::new(
                (0..n)
                    .map(|_| {
                        [
                            100.0 + 5.0 * rng.normal(),
                            -20.0 + rng.normal(),
                            0.3 * rng.normal(),
                        ]
                    })
                    .collect(),
            )
        }
    }
}

/// Tilted planes with points spread uniformly over them.
pub fn planar_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = Prng::new(seed);
    let planes: Vec<(Point, Point, Point)> = (0..2)
        .map(|_| {
            let o = [0.5, 0.5, rng.range(0.3, 0.7)];
            let u = [1.0, 0.0, rng.range(-0.3, 0.3)];
            let v = [0.0, 1.0, rng.range(-0.3, 0.3)];
            (o, u, v)
        })
        .collect();
    PointCloud::new(
        (0..n)
            .map(|i| {
                let (o, u, v) = planes[i % 2];
                let (a, b) = (rng.range(-0.45, 0.45), rng.range(-0.45, 0.45));
                [0, 1, 2].map(|k| o[k] + a * u[k] + b * v[k])
            })
            .collect(),
    )
}
