//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use hybrid_coverage::geometry::{Spheroid, Vec3};

/// Adaptive Gauss-Kronrod (7/15) quadrature.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    const XK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ];
    const WK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];
    fn rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut k = WK[7] * fc;
        let mut g = WG[3] * fc;
        for j in 0..7 {
            let x = h * XK[j];
            let s = f(c - x) + f(c + x);
            k += WK[j] * s;
            if j % 2 == 1 {
                g += WG[j / 2] * s;
            }
        }
        (k * h, (k - g).abs() * h)
    }
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (k, err) = rule(f, a, b);
        if err <= tol || depth > 40 {
            return k;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
    recurse(f, a, b, tol, 0)
}

/// Plain bisection on a sign change.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let flo = f(lo);
    for _ in 0..iters {
        let m = 0.5 * (lo + hi);
        let fm = f(m);
        if (fm > 0.0) == (flo > 0.0) {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// Zone-area integrand exactly as the meridian-circumference integral is
/// usually printed: 2π·sqrt((a² − a²z²/c²)(1 + z²a⁴/(a²(c⁴ − c²z²)))).
pub fn zone_integrand(a: f64, c: f64, z: f64) -> f64 {
    let first = a * a - a * a * z * z / (c * c);
    let second = 1.0 + z * z * a.powi(4) / (a * a * (c.powi(4) - c * c * z * z));
    2.0 * std::f64::consts::PI * (first * second).sqrt()
}

pub fn zone_area_oracle(a: f64, c: f64, lo: f64, hi: f64) -> f64 {
    gauss_kronrod(&|z| zone_integrand(a, c, z), lo, hi, 1e-11)
}

/// Ellipse perimeter from the complete elliptic integral of the second kind.
pub fn ellipse_perimeter_oracle(a: f64, c: f64) -> f64 {
    let e2 = 1.0 - (c / a).powi(2);
    let e = gauss_kronrod(
        &|t: f64| (1.0 - e2 * t.sin().powi(2)).sqrt(),
        0.0,
        std::f64::consts::FRAC_PI_2,
        1e-15,
    );
    4.0 * a * e
}

/// Geodesic integrator on the implicit surface: x'' = -(x'ᵀHx'/|∇F|²)∇F.
pub struct GeodesicOde {
    pub a: f64,
    pub c: f64,
}

impl GeodesicOde {
    pub fn new(s: &Spheroid) -> Self {
        Self {
            a: s.equatorial_radius(),
            c: s.polar_radius(),
        }
    }

    fn accel(&self, x: &Vec3, v: &Vec3) -> Vec3 {
        let g = Vec3::new(
            2.0 * x.x / (self.a * self.a),
            2.0 * x.y / (self.a * self.a),
            2.0 * x.z / (self.c * self.c),
        );
        let vhv =
            2.0 * (v.x * v.x + v.y * v.y) / (self.a * self.a) + 2.0 * v.z * v.z / (self.c * self.c);
        -g * (vhv / g.norm_squared())
    }

    /// Unit tangent at `p` with azimuth `chi` clockwise from North.
    pub fn initial_direction(&self, p: &Vec3, chi: f64) -> Vec3 {
        let n = Vec3::new(
            p.x / (self.a * self.a),
            p.y / (self.a * self.a),
            p.z / (self.c * self.c),
        )
        .normalize();
        let rho = p.x.hypot(p.y);
        let east = if rho > 1e-12 {
            Vec3::new(-p.y / rho, p.x / rho, 0.0)
        } else {
            Vec3::y()
        };
        let north = n.cross(&east).normalize();
        (chi.cos() * north + chi.sin() * east).normalize()
    }

    /// Walk a distance `d` from `p` along azimuth `chi` with RK4 step about `h`.
    pub fn walk(&self, p: &Vec3, chi: f64, d: f64, h: f64) -> Vec3 {
        let n = ((d / h).ceil() as usize).max(1);
        let h = d / n as f64;
        let mut x = *p;
        let mut v = self.initial_direction(p, chi);
        for _ in 0..n {
            let (nx, nv) = self.rk4(&x, &v, h);
            x = nx;
            v = nv;
        }
        x
    }

    fn rk4(&self, x: &Vec3, v: &Vec3, h: f64) -> (Vec3, Vec3) {
        let k1x = *v;
        let k1v = self.accel(x, v);
        let k2x = v + 0.5 * h * k1v;
        let k2v = self.accel(&(x + 0.5 * h * k1x), &k2x);
        let k3x = v + 0.5 * h * k2v;
        let k3v = self.accel(&(x + 0.5 * h * k2x), &k3x);
        let k4x = v + h * k3v;
        let k4v = self.accel(&(x + h * k3x), &k4x);
        (
            x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        )
    }

    /// Along-track local minima of the distance to `target` closer than `radius`.
    fn passes(
        &self,
        p: &Vec3,
        chi: f64,
        target: &Vec3,
        max_len: f64,
        h: f64,
        radius: f64,
    ) -> Vec<(f64, f64)> {
        let n = (max_len / h).ceil() as usize;
        let mut x = *p;
        let mut v = self.initial_direction(p, chi);
        let mut out = Vec::new();
        let mut d_prev = (x - target).norm();
        let mut falling = true;
        for i in 1..=n {
            let (nx, nv) = self.rk4(&x, &v, h);
            x = nx;
            v = nv;
            let d = (x - target).norm();
            if falling && i > 1 && d > d_prev && d_prev < radius {
                out.push(((i - 1) as f64 * h, d_prev));
            }
            falling = d <= d_prev;
            d_prev = d;
        }
        if falling && d_prev < radius {
            out.push((n as f64 * h, d_prev));
        }
        out
    }

    /// Shortest geodesic from `p1` to `p2` by heading scan and Gauss-Newton
    /// refinement on (heading, length). Returns (distance, heading).
    pub fn shoot(&self, p1: &Vec3, p2: &Vec3, max_len: f64) -> Option<(f64, f64)> {
        let scan = 180;
        let mut cands: Vec<(f64, f64, f64)> = Vec::new();
        for i in 0..scan {
            let chi = 2.0 * std::f64::consts::PI * i as f64 / scan as f64;
            for (len, dist) in self.passes(p1, chi, p2, max_len, 0.2, 0.1 * self.a) {
                cands.push((chi, len, dist));
            }
        }
        cands.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let mut best: Option<(f64, f64)> = None;
        let mut tried = 0;
        for &(chi0, len0, dist0) in &cands {
            if let Some((bd, _)) = best {
                if len0 - dist0 > bd + 1e-6 {
                    break;
                }
            }
            if tried >= 60 {
                break;
            }
            tried += 1;
            if let Some((d, chi)) = self.refine(p1, p2, chi0, len0) {
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, chi));
                }
            }
        }
        best
    }

    fn refine(&self, p1: &Vec3, p2: &Vec3, mut chi: f64, mut d: f64) -> Option<(f64, f64)> {
        let mut h = 0.05;
        let mut fine_iters = 0;
        for _ in 0..60 {
            let x = self.walk(p1, chi, d, h);
            let r = x - p2;
            if h > 0.01 && r.norm() < 1e-7 * self.a {
                h = 0.01;
                continue;
            }
            if h <= 0.01 {
                fine_iters += 1;
                if r.norm() < 1e-11 * self.a || fine_iters > 6 {
                    break;
                }
            }
            let dc = 1e-7;
            let dd = 1e-6;
            let jc = (self.walk(p1, chi + dc, d, h) - x) / dc;
            let jd = (self.walk(p1, chi, d + dd, h) - x) / dd;
            // Normal equations for the 3x2 least-squares step.
            let m11 = jc.dot(&jc);
            let m12 = jc.dot(&jd);
            let m22 = jd.dot(&jd);
            let b1 = -jc.dot(&r);
            let b2 = -jd.dot(&r);
            let det = m11 * m22 - m12 * m12;
            if det.abs() < 1e-300 {
                return None;
            }
            let mut sc = (b1 * m22 - b2 * m12) / det;
            let mut sd = (m11 * b2 - m12 * b1) / det;
            let lim = 0.1;
            if sc.abs() > lim {
                sd *= lim / sc.abs();
                sc = lim * sc.signum();
            }
            if sd.abs() > 0.1 * self.a {
                sc *= 0.1 * self.a / sd.abs();
                sd = 0.1 * self.a * sd.signum();
            }
            chi += sc;
            d = (d + sd).max(1e-9);
        }
        let x = self.walk(p1, chi, d, 0.01);
        if (x - p2).norm() < 1e-8 * self.a {
            Some((d, chi.rem_euclid(2.0 * std::f64::consts::PI)))
        } else {
            None
        }
    }
}

/// Deterministic pseudo-random generator for test sampling (SplitMix64).
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}
