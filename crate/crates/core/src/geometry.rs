//! Points, rays and pinhole cameras.
//!
//! All quantities are in meters (world) or pixels (image). Rotations are
//! stored world-to-camera, with the camera looking down its +z axis, x to
//! the right and y down the image.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point (or free vector) in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Free vectors share the point representation.
pub type Vec3 = Point3;

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn distance(&self, o: &Point3) -> f64 {
        (*self - *o).norm()
    }

    pub fn distance_squared(&self, o: &Point3) -> f64 {
        (*self - *o).norm_squared()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn normalized(&self) -> Option<Point3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(*self / n)
        } else {
            None
        }
    }

    pub fn lerp(&self, o: &Point3, t: f64) -> Point3 {
        *self + (*o - *self) * t
    }

    pub fn min_by_component(&self, o: &Point3) -> Point3 {
        Point3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_by_component(&self, o: &Point3) -> Point3 {
        Point3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Point3::new(v.x, v.y, v.z)
    }

    /// Lexicographic comparison on (x, y, z) using the IEEE total order.
    pub fn lex_cmp(&self, o: &Point3) -> std::cmp::Ordering {
        self.x
            .total_cmp(&o.x)
            .then(self.y.total_cmp(&o.y))
            .then(self.z.total_cmp(&o.z))
    }

    pub fn centroid(points: &[Point3]) -> Option<Point3> {
        if points.is_empty() {
            return None;
        }
        let sum = points.iter().fold(Point3::ORIGIN, |acc, p| acc + *p);
        Some(sum / points.len() as f64)
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    fn add_assign(&mut self, o: Point3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Half-line with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3 {
    origin: Point3,
    direction: Vec3,
}

impl Ray3 {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Point3, direction: Vec3) -> Result<Self> {
        if !origin.is_finite() || !direction.is_finite() {
            return Err(Error::NonFinite);
        }
        let direction = direction.normalized().ok_or(Error::InvalidDirection)?;
        Ok(Ray3 { origin, direction })
    }

    pub fn through(origin: Point3, target: Point3) -> Result<Self> {
        Ray3::new(origin, target - origin)
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn at(&self, t: f64) -> Point3 {
        self.origin + self.direction * t
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Principal point at the image center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Self {
        Intrinsics {
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= self.width as f64 && v <= self.height as f64
    }
}

/// Result of projecting a world point into an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel { u: f64, v: f64, depth: f64 },
    BehindCamera,
}

impl Projection {
    pub fn pixel(&self) -> Option<(f64, f64)> {
        match *self {
            Projection::Pixel { u, v, .. } => Some((u, v)),
            Projection::BehindCamera => None,
        }
    }
}

/// Camera center, world-to-camera rotation and intrinsics of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPose {
    pub view_id: u32,
    pub center: Point3,
    pub rotation: Matrix3<f64>,
    pub intrinsics: Intrinsics,
}

const ORTHONORMAL_TOL: f64 = 1e-9;

impl ViewPose {
    pub fn new(
        view_id: u32,
        center: Point3,
        rotation: Matrix3<f64>,
        intrinsics: Intrinsics,
    ) -> Result<Self> {
        if !center.is_finite() || rotation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if err > ORTHONORMAL_TOL || rotation.determinant() < 0.0 {
            return Err(Error::Numerical(format!(
                "view {view_id}: rotation is not a proper orthonormal matrix"
            )));
        }
        if !(intrinsics.focal > 0.0) || intrinsics.width == 0 || intrinsics.height == 0 {
            return Err(Error::Numerical(format!(
                "view {view_id}: invalid intrinsics"
            )));
        }
        Ok(ViewPose {
            view_id,
            center,
            rotation,
            intrinsics,
        })
    }

    /// Camera at `center` looking at `target`. Image "up" follows world +z,
    /// or world +y when the viewing direction is vertical.
    pub fn look_at(
        view_id: u32,
        center: Point3,
        target: Point3,
        intrinsics: Intrinsics,
    ) -> Result<Self> {
        let forward = (target - center)
            .normalized()
            .ok_or(Error::InvalidDirection)?;
        let up = if forward.z.abs() > 0.999 {
            Point3::new(0.0, 1.0, 0.0)
        } else {
            Point3::new(0.0, 0.0, 1.0)
        };
        let right = forward
            .cross(&up)
            .normalized()
            .ok_or(Error::InvalidDirection)?;
        let down = forward.cross(&right);
        #[rustfmt::skip]
        let rotation = Matrix3::new(
            right.x, right.y, right.z,
            down.x, down.y, down.z,
            forward.x, forward.y, forward.z,
        );
        ViewPose::new(view_id, center, rotation, intrinsics)
    }

    /// Point expressed in the camera frame.
    pub fn to_camera(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.rotation * (*p - self.center).to_vector()))
    }

    pub fn project(&self, p: &Point3) -> Projection {
        let c = self.to_camera(p);
        if !(c.z > 0.0) {
            return Projection::BehindCamera;
        }
        let k = &self.intrinsics;
        Projection::Pixel {
            u: k.focal * c.x / c.z + k.cx,
            v: k.focal * c.y / c.z + k.cy,
            depth: c.z,
        }
    }

    /// World point at camera-frame depth `depth` along pixel (u, v).
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Point3 {
        let k = &self.intrinsics;
        let cam = Vector3::new(
            (u - k.cx) / k.focal * depth,
            (v - k.cy) / k.focal * depth,
            depth,
        );
        self.center + Point3::from_vector(&(self.rotation.transpose() * cam))
    }

    /// Unit viewing direction (camera +z) in world coordinates.
    pub fn forward(&self) -> Vec3 {
        Point3::new(
            self.rotation[(2, 0)],
            self.rotation[(2, 1)],
            self.rotation[(2, 2)],
        )
    }
}

/// Area of triangle (a, b, c).
pub fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (*b - *a).cross(&(*c - *a)).norm()
}

/// Unnormalized normal following the right-hand rule on (a, b, c).
pub fn triangle_normal(a: &Point3, b: &Point3, c: &Point3) -> Vec3 {
    (*b - *a).cross(&(*c - *a))
}

pub fn tetra_volume(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    (*b - *a).dot(&(*c - *a).cross(&(*d - *a))) / 6.0
}
