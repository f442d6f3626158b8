//! Vector math, aim-angle conventions and placement helpers.
//!
//! Azimuth is measured in the horizontal x-y plane, counterclockwise from
//! the +x axis. Elevation is measured upward from the horizontal plane. A
//! pair of angles maps to the direction
//! `(cos el * cos az, cos el * sin az, sin el)`.
//!
//! Angles cross every public boundary in degrees and are converted to
//! radians exactly once, inside the functions that need trigonometry.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `|v| - 1` for vectors that claim to be unit length.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("zero-length vector has no direction")]
    ZeroVector,
    #[error("elevation {0} deg outside [-90, 90]")]
    ElevationOutOfRange(f64),
    #[error("non-finite angle (azimuth {azimuth}, elevation {elevation})")]
    NonFiniteAngle { azimuth: f64, elevation: f64 },
    #[error("transmitter and receiver positions coincide")]
    CoincidentPoints,
    #[error("offset ({0}, {1}) m lies outside the rack footprint")]
    OffsetOutsideFootprint(f64, f64),
}

/// A point or displacement in meters, or a dimensionless direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 0.0, 1.0);
    pub const DOWN: Vec3 = Vec3::new(0.0, 0.0, -1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }

    pub fn normalized(self) -> Result<Vec3, GeometryError> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(GeometryError::ZeroVector);
        }
        Ok(self * (1.0 / n))
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Branch pointing angles in degrees.
///
/// Azimuth is always stored in `[0, 360)`. Elevation must already lie in
/// `[-90, 90]`; it is rejected rather than wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAim", deny_unknown_fields)]
pub struct AimAngles {
    azimuth_deg: f64,
    elevation_deg: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAim {
    azimuth_deg: f64,
    elevation_deg: f64,
}

impl TryFrom<RawAim> for AimAngles {
    type Error = GeometryError;
    fn try_from(raw: RawAim) -> Result<Self, Self::Error> {
        AimAngles::new(raw.azimuth_deg, raw.elevation_deg)
    }
}

impl AimAngles {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Result<Self, GeometryError> {
        if !azimuth_deg.is_finite() || !elevation_deg.is_finite() {
            return Err(GeometryError::NonFiniteAngle {
                azimuth: azimuth_deg,
                elevation: elevation_deg,
            });
        }
        if !(-90.0..=90.0).contains(&elevation_deg) {
            return Err(GeometryError::ElevationOutOfRange(elevation_deg));
        }
        let mut az = azimuth_deg.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        if az >= 360.0 {
            az = 0.0;
        }
        Ok(AimAngles {
            azimuth_deg: az,
            elevation_deg,
        })
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation_deg
    }

    /// Unit pointing vector for these angles.
    pub fn direction(&self) -> Vec3 {
        let az = self.azimuth_deg.to_radians();
        let el = self.elevation_deg.to_radians();
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

impl fmt::Display for AimAngles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "az {} deg, el {} deg", self.azimuth_deg, self.elevation_deg)
    }
}

pub fn direction_from_angles(a: AimAngles) -> Vec3 {
    a.direction()
}

/// Inverse of [`direction_from_angles`]. Straight up and straight down get
/// azimuth 0 since azimuth is indeterminate there.
pub fn angles_from_direction(v: Vec3) -> Result<AimAngles, GeometryError> {
    let u = v.normalized()?;
    let horizontal = u.x.hypot(u.y);
    let elevation = u.z.atan2(horizontal).to_degrees();
    let azimuth = if horizontal == 0.0 {
        0.0
    } else {
        u.y.atan2(u.x).to_degrees()
    };
    AimAngles::new(azimuth, elevation.clamp(-90.0, 90.0))
}

/// Angles that point a branch at `tx_pos` straight at `rx_pos`.
pub fn aim_at(tx_pos: Vec3, rx_pos: Vec3) -> Result<AimAngles, GeometryError> {
    let d = rx_pos - tx_pos;
    if d.norm_squared() == 0.0 {
        return Err(GeometryError::CoincidentPoints);
    }
    angles_from_direction(d)
}

/// Angle between two vectors in degrees, in `[0, 180]`.
pub fn angle_between(u: Vec3, v: Vec3) -> Result<f64, GeometryError> {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    let c = (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Cosine of the angle between two unit vectors, clamped to `[-1, 1]`.
pub(crate) fn cos_between_units(u: Vec3, v: Vec3) -> f64 {
    u.dot(v).clamp(-1.0, 1.0)
}

/// Point on the top face of a rack.
///
/// `rack_base` is the center of the rack's bottom face; `offset_xy` is measured
/// from that center and must stay within half the footprint on each axis
/// (the boundary counts as inside).
pub fn rack_top_point(
    rack_base: Vec3,
    rack_dims: Vec3,
    offset_xy: (f64, f64),
) -> Result<Vec3, GeometryError> {
    let (dx, dy) = offset_xy;
    let half_x = rack_dims.x / 2.0;
    let half_y = rack_dims.y / 2.0;
    let inside = dx.is_finite() && dy.is_finite() && dx.abs() <= half_x && dy.abs() <= half_y;
    if !inside {
        return Err(GeometryError::OffsetOutsideFootprint(dx, dy));
    }
    Ok(Vec3::new(
        rack_base.x + dx,
        rack_base.y + dy,
        rack_base.z + rack_dims.z,
    ))
}

/// Axis-aligned box, used for rack bodies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(a: Vec3, b: Vec3) -> Self {
        Aabb {
            min: Vec3::new(a.x.min(b.x), a.y.min(b.y), a.z.min(b.z)),
            max: Vec3::new(a.x.max(b.x), a.y.max(b.y), a.z.max(b.z)),
        }
    }

    pub fn translated(&self, by: Vec3) -> Aabb {
        Aabb {
            min: self.min + by,
            max: self.max + by,
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    /// Whether the open segment `a -> b` passes through the box.
    ///
    /// Slab test. A segment that only touches the box at an endpoint (an
    /// emitter sitting on a rack top, say) is not blocked: the overlap with
    /// the box must be longer than a relative `1e-9` of the segment.
    pub fn blocks_segment(&self, a: Vec3, b: Vec3) -> bool {
        const EPS: f64 = 1e-9;
        let d = b - a;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for (o, dir, lo, hi) in [
            (a.x, d.x, self.min.x, self.max.x),
            (a.y, d.y, self.min.y, self.max.y),
            (a.z, d.z, self.min.z, self.max.z),
        ] {
            if dir == 0.0 {
                if o <= lo || o >= hi {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / dir;
            let (mut ta, mut tb) = ((lo - o) * inv, (hi - o) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t1 - t0 <= EPS {
                return false;
            }
        }
        t1 - t0 > EPS
    }
}
