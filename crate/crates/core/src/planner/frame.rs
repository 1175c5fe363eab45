//! Base plane fitting and the plane-aligned bounding box of admissible viewpoints.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaneProvenance {
    MeshRansac,
    CameraFallback,
    DefaultHorizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasePlane {
    /// Unit normal, oriented towards the cameras (or world +z without cameras).
    pub normal: Vec3,
    pub point: Point3,
    pub provenance: PlaneProvenance,
}

impl BasePlane {
    /// Signed height above the plane.
    pub fn height(&self, p: &Point3) -> f64 {
        (*p - self.point).dot(&self.normal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier distance, meters.
    pub eps_dist: f64,
    /// Below this inlier fraction the mesh fit is rejected.
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

/// Least-squares plane through `pts`: centroid and smallest-eigenvalue direction.
fn least_squares(pts: &[Point3]) -> Option<(Vec3, Point3)> {
    let c = Point3::centroid(pts)?;
    let mut cov = Matrix3::<f64>::zeros();
    for p in pts {
        let d = (*p - c).to_vector();
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let n: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
    Point3::from_vector(&n).normalized().map(|n| (n, c))
}

/// RANSAC plane with least-squares refinement over the inliers. Returns
/// the plane and its inlier count.
pub fn ransac_plane(pts: &[Point3], params: &RansacParams) -> Option<(Vec3, Point3, usize)> {
    if pts.len() < 3 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Vec3, Point3, usize)> = None;
    for _ in 0..params.iterations {
        let i = rng.random_range(0..pts.len());
        let j = rng.random_range(0..pts.len());
        let k = rng.random_range(0..pts.len());
        let Some(n) = (pts[j] - pts[i]).cross(&(pts[k] - pts[i])).normalized() else {
            continue;
        };
        let count = pts
            .iter()
            .filter(|p| (**p - pts[i]).dot(&n).abs() <= params.eps_dist)
            .count();
        if best.is_none_or(|b| count > b.2) {
            best = Some((n, pts[i], count));
        }
    }
    let (n, p, _) = best?;
    let inliers: Vec<Point3> = pts
        .iter()
        .copied()
        .filter(|q| (*q - p).dot(&n).abs() <= params.eps_dist)
        .collect();
    let (n, c) = least_squares(&inliers).unwrap_or((n, p));
    let count = pts
        .iter()
        .filter(|q| (**q - c).dot(&n).abs() <= params.eps_dist)
        .count();
    Some((n, c, count))
}

/// Mesh-vertex RANSAC, then a fit through the camera centers, then a
/// horizontal plane through the centroid of everything available.
pub fn fit_base_plane(vertices: &[Point3], cameras: &[Point3], params: &RansacParams) -> BasePlane {
    let orient = |n: Vec3, p: Point3| -> Vec3 {
        match Point3::centroid(cameras) {
            Some(c) if (c - p).dot(&n) < 0.0 => -n,
            Some(_) => n,
            None if n.z < 0.0 => -n,
            None => n,
        }
    };
    if let Some((n, p, count)) = ransac_plane(vertices, params) {
        if count as f64 >= params.min_inlier_ratio * vertices.len() as f64 {
            return BasePlane {
                normal: orient(n, p),
                point: p,
                provenance: PlaneProvenance::MeshRansac,
            };
        }
    }
    if cameras.len() >= 3 {
        if let Some((n, p, _)) = ransac_plane(cameras, params) {
            // Cameras lie on the plane itself; face it up.
            let n = if n.z < 0.0 { -n } else { n };
            return BasePlane {
                normal: n,
                point: p,
                provenance: PlaneProvenance::CameraFallback,
            };
        }
    }
    let all: Vec<Point3> = vertices.iter().chain(cameras).copied().collect();
    BasePlane {
        normal: Point3::new(0.0, 0.0, 1.0),
        point: Point3::centroid(&all).unwrap_or(Point3::ORIGIN),
        provenance: PlaneProvenance::DefaultHorizontal,
    }
}

/// Box aligned with the base plane: frame (u, v, n) at `origin`, and
/// per-axis local bounds `lo..hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub origin: Point3,
    pub u: Vec3,
    pub v: Vec3,
    pub n: Vec3,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl OrientedBox {
    pub fn to_local(&self, p: &Point3) -> [f64; 3] {
        let d = *p - self.origin;
        [d.dot(&self.u), d.dot(&self.v), d.dot(&self.n)]
    }

    pub fn dir_to_local(&self, d: &Vec3) -> [f64; 3] {
        [d.dot(&self.u), d.dot(&self.v), d.dot(&self.n)]
    }

    pub fn extents(&self) -> [f64; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|k| l[k] >= self.lo[k] - tol && l[k] <= self.hi[k] + tol)
    }

    /// Slab test: the parameter range where `origin + t * dir` is inside.
    pub fn ray_interval(&self, origin: &Point3, dir: &Vec3) -> Option<(f64, f64)> {
        let o = self.to_local(origin);
        let d = self.dir_to_local(dir);
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..3 {
            if d[k] == 0.0 {
                if o[k] < self.lo[k] || o[k] > self.hi[k] {
                    return None;
                }
                continue;
            }
            let (a, b) = ((self.lo[k] - o[k]) / d[k], (self.hi[k] - o[k]) / d[k]);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// Auxiliary axis: the world axis with the smallest |a . n|.
fn auxiliary_axis(n: &Vec3) -> Vec3 {
    let c = [n.x.abs(), n.y.abs(), n.z.abs()];
    let k = (0..3)
        .min_by(|&i, &j| c[i].total_cmp(&c[j]))
        .expect("three axes");
    [
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
        Point3::new(0.0, 0.0, 1.0),
    ][k]
}

/// Local bounds of `points` scaled by `alpha` about their center.
/// Zero-width axes are inflated to `min_extent`.
pub fn build_obb(
    points: &[Point3],
    plane: &BasePlane,
    alpha: f64,
    min_extent: f64,
) -> Option<OrientedBox> {
    let first = *points.first()?;
    let (pmin, pmax) = points.iter().fold((first, first), |(lo, hi), p| {
        (lo.min_by_component(p), hi.max_by_component(p))
    });
    let center = (pmin + pmax) / 2.0;
    let n = plane.normal;
    let d = (center - plane.point).dot(&n);
    let origin = center - n * d;
    let u = auxiliary_axis(&n).cross(&n).normalized()?;
    let v = n.cross(&u);
    let mut b = OrientedBox {
        origin,
        u,
        v,
        n,
        lo: [f64::INFINITY; 3],
        hi: [f64::NEG_INFINITY; 3],
    };
    for p in points {
        let l = b.to_local(p);
        for k in 0..3 {
            b.lo[k] = b.lo[k].min(l[k]);
            b.hi[k] = b.hi[k].max(l[k]);
        }
    }
    for k in 0..3 {
        let c = 0.5 * (b.lo[k] + b.hi[k]);
        let half = (0.5 * (b.hi[k] - b.lo[k]) * alpha).max(0.5 * min_extent);
        b.lo[k] = c - half;
        b.hi[k] = c + half;
    }
    Some(b)
}
