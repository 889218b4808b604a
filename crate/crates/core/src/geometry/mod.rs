//! Geometry on ellipsoids of revolution centered at the origin with the
//! symmetry axis along z.

mod area;
mod geodesic;

pub use area::PerimeterFactor;
pub use geodesic::{supplemental_inverse, GeodesicMethod, GeodesicSolution};

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid spheroid semi-axes a={a}, c={c}: need finite a >= c > 0")]
    InvalidSpheroid { a: f64, c: f64 },
    #[error("foot-point solve failed for point ({x}, {y}, {z})")]
    FootPoint { x: f64, y: f64, z: f64 },
    #[error("heading is undefined at a pole")]
    PoleHeading,
    #[error("geodesic solve failed: {0}")]
    Geodesic(String),
    #[error("partition solve failed: {0}")]
    Partition(String),
    #[error("surface index {k} out of range for a family of {count} surfaces")]
    SurfaceIndex { k: usize, count: usize },
}

/// An oblate (or spherical) spheroid `x²/a² + y²/a² + z²/c² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spheroid {
    a: f64,
    c: f64,
}

/// Foot point of a query point on a spheroid together with the outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNormal {
    pub foot_point: Vec3,
    pub direction: Vec3,
    /// Signed distance from the foot point to the query point, negative inside.
    pub length: f64,
}

impl Spheroid {
    pub fn new(a: f64, c: f64) -> Result<Self, GeometryError> {
        if !(a.is_finite() && c.is_finite() && c > 0.0 && a >= c) {
            return Err(GeometryError::InvalidSpheroid { a, c });
        }
        Ok(Self { a, c })
    }

    pub fn sphere(r: f64) -> Result<Self, GeometryError> {
        Self::new(r, r)
    }

    pub fn equatorial_radius(&self) -> f64 {
        self.a
    }

    pub fn polar_radius(&self) -> f64 {
        self.c
    }

    /// Flattening `1 - c/a`.
    pub fn flattening(&self) -> f64 {
        1.0 - self.c / self.a
    }

    /// Spheroid whose semi-axes are both grown by `d`.
    pub fn inflated(&self, d: f64) -> Result<Self, GeometryError> {
        Self::new(self.a + d, self.c + d)
    }

    /// Implicit function value `x²/a² + y²/a² + z²/c² - 1`.
    pub fn implicit(&self, p: &Vec3) -> f64 {
        (p.x * p.x + p.y * p.y) / (self.a * self.a) + p.z * p.z / (self.c * self.c) - 1.0
    }

    /// Gradient of the implicit function.
    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            2.0 * p.x / (self.a * self.a),
            2.0 * p.y / (self.a * self.a),
            2.0 * p.z / (self.c * self.c),
        )
    }

    /// Outward unit normal at a surface point.
    pub fn unit_normal(&self, q: &Vec3) -> Vec3 {
        let g = self.gradient(q);
        let n = g.norm();
        if n == 0.0 {
            Vec3::z()
        } else {
            g / n
        }
    }

    /// Smallest `t ≥ 0` with `origin + t·dir` on the spheroid. Returns `Some(0)`
    /// when `origin` is already inside or on the surface and `None` when the
    /// line misses it or points away.
    pub fn first_crossing(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let p = Vec3::new(origin.x / self.a, origin.y / self.a, origin.z / self.c);
        let d = Vec3::new(dir.x / self.a, dir.y / self.a, dir.z / self.c);
        let c = p.norm_squared() - 1.0;
        if c <= 0.0 {
            return Some(0.0);
        }
        let a = d.norm_squared();
        let b = p.dot(&d);
        if a == 0.0 || b >= 0.0 {
            return None;
        }
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        // Smaller root in the cancellation-free form c / (-b + sqrt(disc)).
        Some(c / (-b + disc.sqrt()))
    }

    /// Both parameters `t₁ ≤ t₂` where the line `origin + t·dir` meets the
    /// spheroid, or `None` when it misses. A tangent line gives `t₁ = t₂`.
    pub fn line_crossings(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let p = Vec3::new(origin.x / self.a, origin.y / self.a, origin.z / self.c);
        let d = Vec3::new(dir.x / self.a, dir.y / self.a, dir.z / self.c);
        let a = d.norm_squared();
        if a == 0.0 {
            return None;
        }
        let b = p.dot(&d);
        let c = p.norm_squared() - 1.0;
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        // Vieta's formula for the root that would otherwise cancel.
        let q = -(b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return Some((0.0, 0.0));
        }
        let (r1, r2) = (q / a, c / q);
        Some((r1.min(r2), r1.max(r2)))
    }

    /// Surface point from geodetic latitude and longitude (radians).
    pub fn point_from_geodetic(&self, lat: f64, lon: f64) -> Vec3 {
        let beta = ((self.c / self.a) * lat.tan()).atan();
        let beta = if lat.abs() >= std::f64::consts::FRAC_PI_2 {
            lat.signum() * std::f64::consts::FRAC_PI_2
        } else {
            beta
        };
        self.point_from_parametric(beta, lon)
    }

    /// Surface point from parametric (reduced) latitude and longitude.
    pub fn point_from_parametric(&self, beta: f64, lon: f64) -> Vec3 {
        let rho = self.a * beta.cos();
        Vec3::new(rho * lon.cos(), rho * lon.sin(), self.c * beta.sin())
    }

    /// Surface point at height `z` on the given longitude.
    pub fn point_at_z(&self, z: f64, lon: f64) -> Vec3 {
        let z = z.clamp(-self.c, self.c);
        let rho = self.a * (1.0 - (z / self.c).powi(2)).max(0.0).sqrt();
        Vec3::new(rho * lon.cos(), rho * lon.sin(), z)
    }

    /// Geodetic latitude of a surface point (angle of the normal above the equator).
    pub fn geodetic_latitude(&self, q: &Vec3) -> f64 {
        let rho = q.x.hypot(q.y);
        (q.z / (self.c * self.c)).atan2(rho / (self.a * self.a))
    }

    /// Parametric (reduced) latitude of a surface point.
    pub fn parametric_latitude(&self, q: &Vec3) -> f64 {
        let rho = q.x.hypot(q.y);
        (q.z / self.c).atan2(rho / self.a)
    }

    /// Foot point of `p` on the spheroid and the outward normal there.
    ///
    /// The problem is reduced to the meridian plane of `p` and the normality
    /// condition is solved for the Lagrange parameter by Newton iteration
    /// safeguarded by bisection.
    pub fn foot_point_normal(&self, p: &Vec3) -> Result<SurfaceNormal, GeometryError> {
        let err = || GeometryError::FootPoint {
            x: p.x,
            y: p.y,
            z: p.z,
        };
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(err());
        }
        let rho = p.x.hypot(p.y);
        let (ux, uy) = if rho > 0.0 {
            (p.x / rho, p.y / rho)
        } else {
            (1.0, 0.0)
        };
        let zs = p.z.signum();
        let za = p.z.abs();
        let (fr, fz) = foot_point_2d(self.a, self.c, rho, za).ok_or_else(err)?;
        let foot = Vec3::new(fr * ux, fr * uy, zs * fz);
        let direction = self.unit_normal(&foot);
        let diff = p - foot;
        let mut length = diff.norm();
        if self.implicit(p) < 0.0 {
            length = -length;
        }
        Ok(SurfaceNormal {
            foot_point: foot,
            direction,
            length,
        })
    }
}

/// Foot point in the first quadrant of the meridian ellipse with semi-axes
/// `e0 >= e1`, for the query `(y0, y1)` with both coordinates non-negative.
fn foot_point_2d(e0: f64, e1: f64, y0: f64, y1: f64) -> Option<(f64, f64)> {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return Some((y0, y1));
            }
            let r0 = (e0 / e1).powi(2);
            let s = lagrange_root(r0, z0, z1, g)?;
            Some((r0 * y0 / (s + r0), y1 / (s + 1.0)))
        } else {
            Some((0.0, e1))
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xd = numer / denom;
            Some((e0 * xd, e1 * (1.0 - xd * xd).max(0.0).sqrt()))
        } else {
            Some((e0, 0.0))
        }
    }
}

/// Root of `(r0 z0/(s+r0))² + (z1/(s+1))² - 1` on the branch `s > -1`.
fn lagrange_root(r0: f64, z0: f64, z1: f64, g: f64) -> Option<f64> {
    let n0 = r0 * z0;
    let mut lo = z1 - 1.0;
    let mut hi = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let func = |s: f64| {
        let a = n0 / (s + r0);
        let b = z1 / (s + 1.0);
        (
            a * a + b * b - 1.0,
            -2.0 * (a * a / (s + r0) + b * b / (s + 1.0)),
        )
    };
    // The function is decreasing and convex on the bracket; start Newton from
    // the left end where the tangent never overshoots the root.
    let mut s = lo;
    for _ in 0..200 {
        let (f, d) = func(s);
        if f == 0.0 {
            return Some(s);
        }
        if f > 0.0 {
            lo = lo.max(s);
        } else {
            hi = hi.min(s);
        }
        let mut next = s - f / d;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-16 * (1.0 + s.abs()) || hi - lo <= 1e-16 * (1.0 + s.abs()) {
            return Some(next);
        }
        s = next;
    }
    if s.is_finite() {
        Some(s)
    } else {
        None
    }
}

/// The nested family of avoidance surfaces C_0 .. C_{N-1} around a base spheroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFamily {
    pub base: Spheroid,
    pub gamma: f64,
    pub sensing_range: f64,
    pub count: usize,
}

impl SurfaceFamily {
    pub fn new(base: Spheroid, gamma: f64, sensing_range: f64, count: usize) -> Self {
        Self {
            base,
            gamma,
            sensing_range,
            count,
        }
    }

    /// Offset of surface k from the base along each semi-axis.
    pub fn offset(&self, k: usize) -> f64 {
        (self.gamma + k as f64) * self.sensing_range
    }

    /// Surface k with semi-axes `(a + (γ+k)R, c + (γ+k)R)`. Indices past the
    /// nominal count are allowed so callers can reason about overflow tiers.
    pub fn surface(&self, k: usize) -> Spheroid {
        let d = self.offset(k);
        Spheroid {
            a: self.base.a + d,
            c: self.base.c + d,
        }
    }

    /// Point on surface k on the normal line of the base spheroid through `p`.
    ///
    /// Using the base normal keeps the projection single-valued for points
    /// between the base and surface k, where the nearest point on surface k
    /// can jump.
    pub fn project_to_surface(&self, k: usize, p: &Vec3) -> Result<Vec3, GeometryError> {
        let nrm = self.base.foot_point_normal(p)?;
        Ok(self.along_normal(k, &nrm))
    }

    /// Intersection of the ray `foot + s·n̂ (s ≥ 0)` with surface k.
    pub fn along_normal(&self, k: usize, nrm: &SurfaceNormal) -> Vec3 {
        let s = self.surface(k);
        let q = nrm.foot_point;
        let n = nrm.direction;
        let ia = 1.0 / (s.a * s.a);
        let ic = 1.0 / (s.c * s.c);
        let qa = (n.x * n.x + n.y * n.y) * ia + n.z * n.z * ic;
        let qb = 2.0 * ((q.x * n.x + q.y * n.y) * ia + q.z * n.z * ic);
        let qc = (q.x * q.x + q.y * q.y) * ia + q.z * q.z * ic - 1.0;
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        // qc < 0: q lies inside surface k, so the roots have opposite signs.
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        let t = if qc < 0.0 { t } else { t.max(0.0) };
        q + t * n
    }
}

/// North-pointing tangent at a surface point (towards +z along the meridian).
pub fn north_vector(spheroid: &Spheroid, q: &Vec3) -> Result<Vec3, GeometryError> {
    let rho = q.x.hypot(q.y);
    if rho <= 1e-12 * spheroid.a {
        return Err(GeometryError::PoleHeading);
    }
    let lat = spheroid.geodetic_latitude(q);
    let lon = q.y.atan2(q.x);
    Ok(Vec3::new(
        -lat.sin() * lon.cos(),
        -lat.sin() * lon.sin(),
        lat.cos(),
    ))
}

/// Unit tangent obtained by rotating North clockwise (towards East) by `chi`.
pub fn heading_vector(spheroid: &Spheroid, q: &Vec3, chi: f64) -> Result<Vec3, GeometryError> {
    let north = north_vector(spheroid, q)?;
    let lon = q.y.atan2(q.x);
    let east = Vec3::new(-lon.sin(), lon.cos(), 0.0);
    Ok((chi.cos() * north + chi.sin() * east).normalize())
}

/// Horizontal direction along the meridian of longitude `lon`, used in place of
/// a heading when departing from a pole.
pub fn meridian_direction(lon: f64) -> Vec3 {
    Vec3::new(lon.cos(), lon.sin(), 0.0)
}
