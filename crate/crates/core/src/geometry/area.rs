use super::{GeometryError, Spheroid};
use std::f64::consts::PI;

/// Partial sum of the revolved-ellipse perimeter series and a bound on the
/// neglected tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerimeterFactor {
    pub value: f64,
    pub truncation_bound: f64,
}

impl Spheroid {
    /// Gauss-Kummer factor `g` so that `π(a+c)g` is the meridian ellipse perimeter.
    pub fn perimeter_factor(&self, n_terms: usize) -> PerimeterFactor {
        let n_terms = n_terms.max(1);
        let h = (self.a - self.c) / (self.a + self.c);
        let h2 = h * h;
        let mut g = 1.0;
        let mut d = 1.0;
        let mut hp = 1.0;
        let mut last = 0.0;
        for n in 1..=n_terms + 1 {
            let nf = n as f64;
            d *= (2.0 * nf - 1.0) / (2.0 * nf);
            hp *= h2;
            let term = d * d * hp / ((2.0 * nf - 1.0) * (2.0 * nf - 1.0));
            if n <= n_terms {
                g += term;
            } else {
                last = term;
            }
        }
        // Terms decrease at least geometrically with ratio h².
        let bound = if h2 < 1.0 {
            last / (1.0 - h2)
        } else {
            f64::INFINITY
        };
        PerimeterFactor {
            value: g,
            truncation_bound: bound,
        }
    }

    /// Perimeter of the meridian ellipse.
    pub fn meridian_perimeter(&self) -> f64 {
        PI * (self.a + self.c) * self.perimeter_factor(30).value
    }

    fn eccentricity(&self) -> f64 {
        (1.0 - (self.c / self.a).powi(2)).max(0.0).sqrt()
    }

    /// Closed-form area `2πa²(1 + ((1-e²)/e)·artanh(e))`.
    pub fn surface_area(&self) -> f64 {
        let e = self.eccentricity();
        let factor = if e < 1e-4 {
            // (1-e²)·artanh(e)/e = 1 - 2e²/3 - 2e⁴/15 - ...
            let e2 = e * e;
            1.0 - 2.0 * e2 / 3.0 - 2.0 * e2 * e2 / 15.0
        } else {
            (1.0 - e * e) / e * e.atanh()
        };
        2.0 * PI * self.a * self.a * (1.0 + factor)
    }

    fn zone_k(&self) -> f64 {
        self.a * (self.a * self.a - self.c * self.c).max(0.0).sqrt() / (self.c * self.c)
    }

    /// Zone-area density `dA/dz = 2π·sqrt(a² + k²z²)`.
    pub fn zone_density(&self, z: f64) -> f64 {
        let k = self.zone_k();
        2.0 * PI * (self.a * self.a + k * k * z * z).sqrt()
    }

    fn zone_antiderivative(&self, z: f64) -> f64 {
        let a = self.a;
        let k = self.zone_k();
        let x = k * z / a;
        // (a²/2k)·asinh(kz/a) written as (a z/2)·asinh(x)/x for small k.
        let asinh_term = if x.abs() < 1e-5 {
            0.5 * a * z * (1.0 - x * x / 6.0)
        } else {
            a * a / (2.0 * k) * x.asinh()
        };
        2.0 * PI * (0.5 * z * (a * a + k * k * z * z).sqrt() + asinh_term)
    }

    /// Area of the zone between heights `z_lo` and `z_hi`.
    pub fn zone_area(&self, z_lo: f64, z_hi: f64) -> f64 {
        let lo = z_lo.clamp(-self.c, self.c);
        let hi = z_hi.clamp(-self.c, self.c);
        self.zone_antiderivative(hi) - self.zone_antiderivative(lo)
    }

    /// Height `z` such that the cap above it has the given area.
    pub fn z_for_cap_area(&self, area: f64) -> Result<f64, GeometryError> {
        let total = self.zone_area(-self.c, self.c);
        if !(0.0..=total * (1.0 + 1e-12)).contains(&area) {
            return Err(GeometryError::Partition(format!(
                "cap area {area} outside [0, {total}]"
            )));
        }
        let (mut lo, mut hi) = (-self.c, self.c);
        let f = |z: f64| self.zone_area(z, self.c) - area;
        // Decreasing in z: f(lo) >= 0 >= f(hi).
        let mut z = self.c - 2.0 * self.c * area / total;
        for _ in 0..200 {
            let fz = f(z);
            if fz > 0.0 {
                lo = z;
            } else {
                hi = z;
            }
            let d = -self.zone_density(z);
            let mut next = z - fz / d;
            if !next.is_finite() || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            if (next - z).abs() <= 1e-15 * self.c {
                return Ok(next);
            }
            z = next;
        }
        Err(GeometryError::Partition(
            "cap-area root did not converge".into(),
        ))
    }

    /// Latitude bounds `z̄_0 = c > z̄_1 > … > z̄_{N-1} = -c` splitting the
    /// surface into `N-1` bands of equal area.
    pub fn partition_bounds(&self, n_agents: usize) -> Result<Vec<f64>, GeometryError> {
        if n_agents < 2 {
            return Err(GeometryError::Partition(format!(
                "need at least two agents, got {n_agents}"
            )));
        }
        let bands = n_agents - 1;
        let total = self.zone_area(-self.c, self.c);
        let mut out = Vec::with_capacity(n_agents);
        out.push(self.c);
        for k in 1..bands {
            out.push(self.z_for_cap_area(total * k as f64 / bands as f64)?);
        }
        out.push(-self.c);
        Ok(out)
    }
}
