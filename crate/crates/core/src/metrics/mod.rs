//! Geometry distortion metrics and rate comparison.
//!
//! - Chamfer distance: `mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2`.
//! - Point-to-point PSNR (D1): `10 log10(p^2 / mse)` with `mse` the larger of
//!   the two directional mean squared nearest-neighbour distances. No factor
//!   of 3 in the numerator; add `10 log10 3` dB to compare with tools that use
//!   `3 p^2`.
//! - Point-to-plane PSNR (D2): as D1 with each error vector projected on the
//!   normal of its nearest reference point.
//! - Identical clouds give [`PSNR_CAP`] instead of infinity.

mod bdbr;
mod kdtree;

pub use bdbr::{bdbr, read_rd_csv, read_rd_csv_file, write_rd_csv, RdCurve, RdPoint, RdRow};
pub use kdtree::KdTree;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointcloud::{Point, PointCloud};

pub const PSNR_CAP: f64 = 100.0;
pub const NORMAL_NEIGHBOURS: usize = 12;

/// `(index, squared distance)` of the nearest reference point.
pub fn nearest_neighbor(q: &Point, reference: &PointCloud) -> Result<(usize, f64)> {
    KdTree::new(&reference.points)
        .nearest(q)
        .ok_or(Error::EmptyCloud)
}

fn nonempty(c: &PointCloud) -> Result<()> {
    if c.is_empty() {
        Err(Error::EmptyCloud)
    } else {
        Ok(())
    }
}

/// Per-point squared error from `from` to its nearest neighbour in `to`,
/// optionally projected on the neighbour's normal.
fn directional_errors(from: &[Point], to: &[Point], normals: Option<&[Point]>) -> Vec<f64> {
    let tree = KdTree::new(to);
    from.par_iter()
        .map(|p| {
            let (j, d2) = tree.nearest(p).expect("non-empty reference");
            match normals {
                None => d2,
                Some(n) => {
                    let e = [p[0] - to[j][0], p[1] - to[j][1], p[2] - to[j][2]];
                    let dot = e[0] * n[j][0] + e[1] * n[j][1] + e[2] * n[j][2];
                    dot * dot
                }
            }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    nonempty(a)?;
    nonempty(b)?;
    Ok(mean(&directional_errors(&a.points, &b.points, None))
        + mean(&directional_errors(&b.points, &a.points, None)))
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

/// Point-to-point PSNR of `a` against `b` (symmetric).
pub fn psnr_point(a: &PointCloud, b: &PointCloud, peak: f64) -> Result<f64> {
    nonempty(a)?;
    nonempty(b)?;
    let ab = mean(&directional_errors(&a.points, &b.points, None));
    let ba = mean(&directional_errors(&b.points, &a.points, None));
    Ok(psnr_from_mse(ab.max(ba), peak))
}

/// Unit normals from the covariance of each point and its `k` nearest
/// neighbours; the sign is arbitrary.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<Vec<Point>> {
    if k == 0 || cloud.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "normal estimation needs at least {} points, cloud has {}",
            k + 1,
            cloud.len()
        )));
    }
    let tree = KdTree::new(&cloud.points);
    Ok(cloud
        .points
        .par_iter()
        .map(|p| {
            let nn = tree.k_nearest(p, k + 1);
            let mut c = [0.0; 3];
            for &(j, _) in &nn {
                for a in 0..3 {
                    c[a] += cloud.points[j][a];
                }
            }
            let c = c.map(|v| v / nn.len() as f64);
            let mut cov = Matrix3::<f64>::zeros();
            for &(j, _) in &nn {
                let d = nalgebra::Vector3::new(
                    cloud.points[j][0] - c[0],
                    cloud.points[j][1] - c[1],
                    cloud.points[j][2] - c[2],
                );
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let i = eig.eigenvalues.imin();
            let n = eig.eigenvectors.column(i).normalize();
            [n[0], n[1], n[2]]
        })
        .collect())
}

/// Point-to-plane PSNR; each cloud's normals serve when it is the reference.
pub fn psnr_plane(
    a: &PointCloud,
    b: &PointCloud,
    normals_a: &[Point],
    normals_b: &[Point],
    peak: f64,
) -> Result<f64> {
    nonempty(a)?;
    nonempty(b)?;
    if normals_a.len() != a.len() || normals_b.len() != b.len() {
        return Err(Error::InvalidArgument("missing normals".into()));
    }
    let ab = mean(&directional_errors(&a.points, &b.points, Some(normals_b)));
    let ba = mean(&directional_errors(&b.points, &a.points, Some(normals_a)));
    Ok(psnr_from_mse(ab.max(ba), peak))
}

/// [`psnr_plane`] with normals estimated from [`NORMAL_NEIGHBOURS`] neighbours.
pub fn psnr_plane_estimated(a: &PointCloud, b: &PointCloud, peak: f64) -> Result<f64> {
    let na = estimate_normals(a, NORMAL_NEIGHBOURS)?;
    let nb = estimate_normals(b, NORMAL_NEIGHBOURS)?;
    psnr_plane(a, b, &na, &nb, peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::squared_distance;
    use crate::rng::Prng;

    fn random(n: usize, seed: u64) -> PointCloud {
        let mut rng = Prng::new(seed);
        PointCloud::new(
            (0..n)
                .map(|_| [rng.uniform(), rng.uniform(), rng.uniform()])
                .collect(),
        )
    }

    fn brute_dir(a: &PointCloud, b: &PointCloud) -> f64 {
        let s: f64 = a
            .points
            .iter()
            .map(|p| {
                b.points
                    .iter()
                    .map(|q| squared_distance(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        s / a.len() as f64
    }

    fn grid(n: usize, offset: [f64; 3]) -> PointCloud {
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let s = 1.0 / n as f64;
                    v.push([
                        i as f64 * s + offset[0],
                        j as f64 * s + offset[1],
                        k as f64 * s + offset[2],
                    ]);
                }
            }
        }
        PointCloud::new(v)
    }

    #[test]
    fn chamfer_closed_forms() {
        let a = PointCloud::new(vec![[0.0; 3]]);
        let b = PointCloud::new(vec![[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
        let r = random(100, 1);
        assert_eq!(chamfer(&r, &r).unwrap(), 0.0);
        assert!(chamfer(&a, &PointCloud::default()).is_err());
    }

    #[test]
    fn chamfer_and_psnr_match_brute_force() {
        let a = random(500, 2);
        let b = random(500, 3);
        let (ab, ba) = (brute_dir(&a, &b), brute_dir(&b, &a));
        assert!((chamfer(&a, &b).unwrap() - (ab + ba)).abs() < 1e-9);
        let want = 10.0 * (1.0 / ab.max(ba)).log10();
        assert!((psnr_point(&a, &b, 1.0).unwrap() - want).abs() < 1e-9);
        assert_eq!(
            psnr_point(&a, &b, 1.0).unwrap(),
            psnr_point(&b, &a, 1.0).unwrap()
        );
    }

    #[test]
    fn psnr_constant_offset() {
        let a = grid(10, [0.0; 3]);
        let b = grid(10, [0.01, 0.0, 0.0]);
        assert!((psnr_point(&a, &b, 1.0).unwrap() - 40.0).abs() < 1e-6);
        assert_eq!(psnr_point(&a, &a, 1.0).unwrap(), PSNR_CAP);
    }

    #[test]
    fn planar_normals() {
        let mut rng = Prng::new(4);
        let c = PointCloud::new(
            (0..400)
                .map(|_| [rng.uniform(), rng.uniform(), 0.0])
                .collect(),
        );
        for n in estimate_normals(&c, 12).unwrap() {
            assert!((n[2].abs() - 1.0).abs() < 1e-6);
            assert!((n[0] * n[0] + n[1] * n[1] + n[2] * n[2] - 1.0).abs() < 1e-9);
        }
        assert!(estimate_normals(&random(12, 1), 12).is_err());
    }

    #[test]
    fn sphere_normals_are_radial() {
        let mut rng = Prng::new(5);
        let pts: Vec<Point> = (0..20000)
            .map(|_| {
                let v = [rng.normal(), rng.normal(), rng.normal()];
                let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                v.map(|x| x / r)
            })
            .collect();
        let c = PointCloud::new(pts);
        let normals = estimate_normals(&c, 12).unwrap();
        let cos5 = 5f64.to_radians().cos();
        for (p, n) in c.points.iter().zip(&normals) {
            let dot = (p[0] * n[0] + p[1] * n[1] + p[2] * n[2]).abs();
            assert!(dot > cos5, "{dot}");
        }
    }

    #[test]
    fn plane_psnr() {
        let flat = |dz: f64, dx: f64| {
            let mut v = Vec::new();
            for i in 0..30 {
                for j in 0..30 {
                    v.push([i as f64 / 30.0 + dx, j as f64 / 30.0, dz]);
                }
            }
            PointCloud::new(v)
        };
        let a = flat(0.0, 0.0);
        let lifted = flat(0.01, 0.0);
        let d2 = psnr_plane_estimated(&lifted, &a, 1.0).unwrap();
        assert!((d2 - 40.0).abs() < 1e-6, "{d2}");
        assert_eq!(psnr_plane_estimated(&a, &a, 1.0).unwrap(), PSNR_CAP);
        let slid = flat(0.0, 0.01);
        assert!(
            psnr_plane_estimated(&slid, &a, 1.0).unwrap() >= psnr_point(&slid, &a, 1.0).unwrap()
        );
        assert!(psnr_plane(&a, &a, &[], &[], 1.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let base = random(2000, 6);
        let mut rng = Prng::new(7);
        let noisy = |s: f64, rng: &mut Prng| {
            PointCloud::new(
                base.points
                    .iter()
                    .map(|p| p.map(|v| v + s * rng.normal()))
                    .collect(),
            )
        };
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for s in [0.001, 0.005, 0.01] {
            let n = noisy(s, &mut rng);
            let d1 = psnr_point(&n, &base, 1.0).unwrap();
            let d2 = psnr_plane_estimated(&n, &base, 1.0).unwrap();
            assert!(d1 < prev.0 && d2 < prev.1);
            prev = (d1, d2);
        }
    }
}
