//! Inverse geodesic problem on an oblate spheroid.
//!
//! The standard solver follows Vincenty's iteration on the auxiliary sphere but
//! evaluates the distance and longitude integrals by quadrature instead of the
//! truncated flattening series, which are not accurate for strongly flattened
//! bodies. Near-antipodal pairs, where the longitude iteration stalls, are
//! handled by solving for the departure azimuth directly.

use super::{GeometryError, Spheroid, Vec3};
use crate::quad::{integrate, solve_bracketed, wrap_pi};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeodesicMethod {
    Coincident,
    Standard,
    Supplemental,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicSolution {
    pub distance: f64,
    /// Initial azimuth, clockwise from North, in [0, 2π).
    pub initial_heading: f64,
    pub converged: bool,
    pub used_antipodal_fallback: bool,
    pub method: GeodesicMethod,
    pub iterations: usize,
}

const TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;

struct Setup {
    f: f64,
    ep2: f64,
    c: f64,
    b1: f64,
    b2: f64,
    lon12: f64,
}

fn panel_width(k2: f64) -> f64 {
    if k2 <= 0.0 {
        1.0
    } else {
        (1.0 / k2.sqrt()).asinh().min(0.25)
    }
}

fn distance_integral(k2: f64, s1: f64, s2: f64) -> f64 {
    integrate(
        |s| (1.0 + k2 * s.sin().powi(2)).sqrt(),
        s1,
        s2,
        panel_width(k2),
    )
}

fn longitude_integral(k2: f64, f: f64, s1: f64, s2: f64) -> f64 {
    if f == 0.0 {
        return 0.0;
    }
    integrate(
        |s| (2.0 - f) / (1.0 + (1.0 - f) * (1.0 + k2 * s.sin().powi(2)).sqrt()),
        s1,
        s2,
        panel_width(k2),
    )
}

fn normalize_heading(h: f64) -> f64 {
    let h = h.rem_euclid(TAU);
    if h >= TAU {
        0.0
    } else {
        h
    }
}

impl Spheroid {
    fn on_surface(&self, p: &Vec3) -> Result<Vec3, GeometryError> {
        let tol = 1e-6;
        let r = self.implicit(p);
        if !r.is_finite() {
            return Err(GeometryError::Geodesic("non-finite point".into()));
        }
        if r.abs() <= 2.0 * tol {
            if r == 0.0 {
                return Ok(*p);
            }
            return Ok(self.foot_point_normal(p)?.foot_point);
        }
        Err(GeometryError::Geodesic(format!(
            "point ({}, {}, {}) is not on the spheroid",
            p.x, p.y, p.z
        )))
    }

    fn setup(&self, p1: &Vec3, p2: &Vec3) -> Setup {
        Setup {
            f: self.flattening(),
            ep2: (self.a * self.a - self.c * self.c) / (self.c * self.c),
            c: self.c,
            b1: self.parametric_latitude(p1),
            b2: self.parametric_latitude(p2),
            lon12: wrap_pi(p2.y.atan2(p2.x) - p1.y.atan2(p1.x)),
        }
    }

    /// Shortest geodesic between two surface points.
    ///
    /// Tries the standard iteration, then the azimuth solve for
    /// near-antipodal pairs.
    pub fn vincenty_inverse(
        &self,
        p1: &Vec3,
        p2: &Vec3,
    ) -> Result<GeodesicSolution, GeometryError> {
        let p1 = self.on_surface(p1)?;
        let p2 = self.on_surface(p2)?;
        if (p1 - p2).norm() <= 1e-12 * self.a {
            return Ok(GeodesicSolution {
                distance: 0.0,
                initial_heading: 0.0,
                converged: true,
                used_antipodal_fallback: false,
                method: GeodesicMethod::Coincident,
                iterations: 0,
            });
        }
        let s = self.setup(&p1, &p2);
        if let Some(sol) = standard(&s) {
            return Ok(sol);
        }
        supplemental(&s).ok_or_else(|| GeometryError::Geodesic("azimuth solve failed".into()))
    }

    /// Like [`Spheroid::vincenty_inverse`] but falls back to the parallel-then-meridian
    /// path when both solvers fail, so it always returns a usable direction.
    pub fn geodesic(&self, p1: &Vec3, p2: &Vec3) -> GeodesicSolution {
        match self.vincenty_inverse(p1, p2) {
            Ok(s) => s,
            Err(_) => self.composite_path(p1, p2),
        }
    }

    /// Path along the parallel of `p1` followed by the meridian of `p2`.
    /// Its length bounds the geodesic distance from above.
    pub fn composite_path(&self, p1: &Vec3, p2: &Vec3) -> GeodesicSolution {
        let b1 = self.parametric_latitude(p1);
        let b2 = self.parametric_latitude(p2);
        let lon12 = wrap_pi(p2.y.atan2(p2.x) - p1.y.atan2(p1.x));
        let parallel = self.a * b1.cos() * lon12.abs();
        let meridian = self.meridian_arc(b1, b2);
        let heading = if parallel > 1e-12 * self.a {
            if lon12 > 0.0 {
                FRAC_PI_2
            } else {
                3.0 * FRAC_PI_2
            }
        } else if b2 >= b1 {
            0.0
        } else {
            PI
        };
        GeodesicSolution {
            distance: parallel + meridian,
            initial_heading: heading,
            converged: false,
            used_antipodal_fallback: true,
            method: GeodesicMethod::Composite,
            iterations: 0,
        }
    }

    /// Meridian arc length between two parametric latitudes.
    pub fn meridian_arc(&self, b1: f64, b2: f64) -> f64 {
        let (a, c) = (self.a, self.c);
        integrate(
            |b| (a * a * b.sin().powi(2) + c * c * b.cos().powi(2)).sqrt(),
            b1.min(b2),
            b1.max(b2),
            0.1,
        )
    }
}

/// Vincenty's longitude iteration with exact auxiliary integrals, accelerated by secant steps.
fn standard(s: &Setup) -> Option<GeodesicSolution> {
    let (sb1, cb1) = s.b1.sin_cos();
    let (sb2, cb2) = s.b2.sin_cos();
    let l = s.lon12;

    // Evaluate the great-circle geometry for auxiliary longitude difference w.
    let eval = |w: f64| -> Option<(f64, f64, f64, f64, f64)> {
        let (sw, cw) = w.sin_cos();
        let ss = (cb2 * sw).hypot(cb1 * sb2 - sb1 * cb2 * cw);
        let cs = sb1 * sb2 + cb1 * cb2 * cw;
        if ss < 1e-14 {
            return None;
        }
        let sigma = ss.atan2(cs);
        let salp0 = cb1 * cb2 * sw / ss;
        let calp0_sq = (1.0 - salp0 * salp0).max(0.0);
        let k2 = s.ep2 * calp0_sq;
        let alp1 = (cb2 * sw).atan2(cb1 * sb2 - sb1 * cb2 * cw);
        let sigma1 = sb1.atan2(cb1 * alp1.cos());
        let lam = w - s.f * salp0 * longitude_integral(k2, s.f, sigma1, sigma1 + sigma);
        Some((lam - l, alp1, sigma1, sigma, k2))
    };

    let mut w = l;
    let mut r = eval(w)?.0;
    let mut prev: Option<(f64, f64)> = None;
    for it in 1..=MAX_ITER {
        let fixed = w - r;
        let next = match prev {
            Some((wp, rp)) if (r - rp).abs() > 0.0 => {
                let sec = w - r * (w - wp) / (r - rp);
                if sec.is_finite() && sec.abs() <= PI {
                    sec
                } else {
                    fixed
                }
            }
            _ => fixed,
        };
        if !next.is_finite() || next.abs() > PI {
            return None;
        }
        prev = Some((w, r));
        let step = next - w;
        w = next;
        let (res, alp1, sigma1, sigma, k2) = eval(w)?;
        r = res;
        if step.abs() < TOL && r.abs() < 1e-10 {
            let distance = s.c * distance_integral(k2, sigma1, sigma1 + sigma);
            return Some(GeodesicSolution {
                distance,
                initial_heading: normalize_heading(alp1),
                converged: true,
                used_antipodal_fallback: false,
                method: GeodesicMethod::Standard,
                iterations: it,
            });
        }
    }
    None
}

struct Arc {
    lam12: f64,
    sigma1: f64,
    sigma12: f64,
    k2: f64,
    salp2: f64,
    calp2: f64,
}

/// Geodesic leaving latitude `b1 <= 0` at azimuth `alp1 ∈ [0, π]` up to its
/// first arrival at latitude `b2` with `|b2| <= |b1|`.
fn arc_to_latitude(s: &Setup, b1: f64, b2: f64, alp1: f64) -> Arc {
    let (sb1, cb1) = b1.sin_cos();
    let (sb2, cb2) = b2.sin_cos();
    let (sa1, ca1) = alp1.sin_cos();
    let salp0 = sa1 * cb1;
    let calp0 = ca1.hypot(sa1 * sb1);
    let ssig1 = sb1;
    let csig1 = ca1 * cb1;
    let somg1 = salp0 * sb1;
    let comg1 = csig1;
    let salp2 = if cb2 > 0.0 { salp0 / cb2 } else { 0.0 };
    let rad = (ca1 * cb1).powi(2) + (cb2 * cb2 - cb1 * cb1);
    let calp2 = if cb2 > 0.0 {
        rad.max(0.0).sqrt() / cb2
    } else {
        1.0
    };
    let ssig2 = sb2;
    let csig2 = calp2 * cb2;
    let somg2 = salp0 * sb2;
    let comg2 = csig2;
    let sigma1 = ssig1.atan2(csig1);
    let sigma12 = (csig1 * ssig2 - ssig1 * csig2)
        .max(0.0)
        .atan2(csig1 * csig2 + ssig1 * ssig2);
    let omg12 = (comg1 * somg2 - somg1 * comg2)
        .max(0.0)
        .atan2(comg1 * comg2 + somg1 * somg2);
    let k2 = s.ep2 * calp0 * calp0;
    let lam12 = omg12 - s.f * salp0 * longitude_integral(k2, s.f, sigma1, sigma1 + sigma12);
    Arc {
        lam12,
        sigma1,
        sigma12,
        k2,
        salp2,
        calp2,
    }
}

/// Solve for the departure azimuth in canonical position and map back.
fn supplemental(s: &Setup) -> Option<GeodesicSolution> {
    let mut lon12 = s.lon12;
    let mut lonsign = if lon12 >= 0.0 { 1.0 } else { -1.0 };
    lon12 *= lonsign;
    let (mut b1, mut b2) = (s.b1, s.b2);
    let swapp = if b1.abs() < b2.abs() { -1.0 } else { 1.0 };
    if swapp < 0.0 {
        lonsign = -lonsign;
        std::mem::swap(&mut b1, &mut b2);
    }
    let latsign = if b1 < 0.0 { 1.0 } else { -1.0 };
    b1 *= latsign;
    b2 *= latsign;

    let alp1 = if b1.cos() < 1e-15 {
        // Departure from a pole: every direction is a meridian.
        0.0
    } else {
        let f = |alp: f64| arc_to_latitude(s, b1, b2, alp).lam12 - lon12;
        solve_bracketed(f, 0.0, PI, 1e-15, MAX_ITER)?
    };
    let arc = arc_to_latitude(s, b1, b2, alp1);
    let (sa1, ca1) = alp1.sin_cos();
    let (mut salp1, mut calp1) = (sa1, ca1);
    let (mut salp2, mut calp2) = (arc.salp2, arc.calp2);
    if swapp < 0.0 {
        std::mem::swap(&mut salp1, &mut salp2);
        std::mem::swap(&mut calp1, &mut calp2);
    }
    salp1 *= swapp * lonsign;
    calp1 *= swapp * latsign;
    let _ = (salp2, calp2);
    let distance = s.c * distance_integral(arc.k2, arc.sigma1, arc.sigma1 + arc.sigma12);
    if !distance.is_finite() {
        return None;
    }
    Some(GeodesicSolution {
        distance,
        initial_heading: normalize_heading(salp1.atan2(calp1)),
        converged: true,
        used_antipodal_fallback: true,
        method: GeodesicMethod::Supplemental,
        iterations: 0,
    })
}

/// Force the azimuth solve; exposed for cross-checking the two solvers.
pub fn supplemental_inverse(sph: &Spheroid, p1: &Vec3, p2: &Vec3) -> Option<GeodesicSolution> {
    supplemental(&sph.setup(p1, p2))
}
