use super::mesh::SurfaceMesh;
use super::{Footprint, SensorModel, SensorPose, Stencil};
use crate::geometry::Vec3;
use crate::kinematics::{rotation_body_to_global, AgentState};

/// Coverage level `Q` per mesh cell and the target level `C*`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageField {
    pub q: Vec<f64>,
    pub c_star: f64,
}

#[inline]
fn h(w: f64) -> f64 {
    let w = w.max(0.0);
    w * w * w
}

#[inline]
fn h_prime(w: f64) -> f64 {
    let w = w.max(0.0);
    3.0 * w * w
}

#[inline]
fn h_second(w: f64) -> f64 {
    6.0 * w.max(0.0)
}

/// Cone test on a cell's bounding ball: false when no point of the cell can
/// be inside the footprint.
#[inline]
fn may_see(fp: &Footprint, model: &SensorModel, center: &Vec3, radius: f64) -> bool {
    let v = center - fp.position;
    let d = v.norm();
    if d - radius >= model.range {
        return false;
    }
    if d <= radius {
        return true;
    }
    let ang = (v.dot(&fp.axis) / d).clamp(-1.0, 1.0).acos();
    ang - (radius / d).asin() < model.half_angle + 1e-3
}

impl CoverageField {
    pub fn filled(mesh: &SurfaceMesh, level: f64, c_star: f64) -> Self {
        Self {
            q: vec![level; mesh.len()],
            c_star,
        }
    }

    /// `E = Σ h(C* − q)·A`.
    pub fn coverage_error(&self, mesh: &SurfaceMesh) -> f64 {
        self.q
            .iter()
            .zip(mesh.cells())
            .map(|(q, c)| h(self.c_star - q) * c.area)
            .sum()
    }

    /// Error of the empty field, `C*³·A`.
    pub fn max_error(&self, mesh: &SurfaceMesh) -> f64 {
        h(self.c_star) * mesh.total_area()
    }

    pub fn normalized_error(&self, mesh: &SurfaceMesh) -> f64 {
        let m = self.max_error(mesh);
        if m > 0.0 {
            (self.coverage_error(mesh) / m).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Cell-averaged sensing rate of every footprint, added into `rate`.
    pub fn add_sensing_rate(
        mesh: &SurfaceMesh,
        model: &SensorModel,
        pose: &SensorPose,
        rate: &mut [f64],
        scratch: &mut Vec<usize>,
    ) {
        let fp = Footprint::new(model, pose);
        mesh.cells_near(&pose.position, model.range, scratch);
        for &i in scratch.iter() {
            let cell = &mesh.cells()[i];
            if !may_see(&fp, model, &cell.center, cell.radius) {
                continue;
            }
            let mut acc = 0.0;
            mesh.for_each_subpoint(i, |p, w| acc += w * fp.value(&p));
            rate[i] += acc / cell.area;
        }
    }

    /// Advance by `dt`: `q += (Σ S − Σ Λ)·dt`, clamped at zero. `sensing` and
    /// `decay` are per-cell rates.
    pub fn accumulate(&mut self, sensing: &[f64], decay: &[f64], dt: f64) {
        debug_assert!(dt > 0.0);
        for ((q, s), d) in self.q.iter_mut().zip(sensing).zip(decay) {
            *q = (*q + (s - d) * dt).max(0.0);
        }
    }

    /// Diagnostic `a₀ = ∫ h''(C* − Q)·S·∂Q/∂t`, given the last per-cell rate of Q.
    pub fn diagnostic_a0(
        &self,
        mesh: &SurfaceMesh,
        model: &SensorModel,
        pose: &SensorPose,
        dq_dt: &[f64],
    ) -> f64 {
        let fp = Footprint::new(model, pose);
        let mut near = Vec::new();
        mesh.cells_near(&pose.position, model.range, &mut near);
        let mut total = 0.0;
        for i in near {
            let cell = &mesh.cells()[i];
            let hs = h_second(self.c_star - self.q[i]);
            if hs == 0.0 || dq_dt[i] == 0.0 || !may_see(&fp, model, &cell.center, cell.radius) {
                continue;
            }
            let mut acc = 0.0;
            mesh.for_each_subpoint(i, |p, w| acc += w * fp.value(&p));
            total += hs * acc * dq_dt[i];
        }
        total
    }
}

/// The terms `a₁ … a₅` multiplying `u, v, w, r, s` in the rate of the agent's
/// coverage-error contribution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalTerms {
    pub a: [f64; 5],
}

impl LocalTerms {
    pub fn translational_norm(&self) -> f64 {
        (self.a[0] * self.a[0] + self.a[1] * self.a[1] + self.a[2] * self.a[2]).sqrt()
    }
}

/// How a run of valid polar angles ends.
#[derive(Clone, Copy, PartialEq, Debug)]
enum Edge {
    /// Cone edge: the integrand is bounded and smooth up to the end.
    Cone,
    /// Range edge: the position partials carry a thin layer where the range
    /// margin drops below the angular margin.
    Range,
    /// Silhouette tangency: the area element has an inverse square-root
    /// singularity.
    Tangent,
}

type Run = (f64, f64, Edge, Edge);

/// Polar angles `[lo, hi]` along one azimuth whose rays hit the surface
/// within range, with the kind of each end. `cross(φ)` is the distance to
/// the first surface crossing of the ray at polar angle `φ`.
fn valid_runs<F: Fn(f64) -> Option<f64>>(
    cross: F,
    alpha: f64,
    range: f64,
    extra: &[f64],
    out: &mut Vec<Run>,
) {
    const SAMPLES: usize = 16;
    const MAX_EXTRA: usize = 8;
    out.clear();
    let valid = |phi: f64| cross(phi).is_some_and(|t| t < range);
    // A uniform scan plus caller-supplied angles where short runs may hide.
    let mut grid = [0.0; SAMPLES + 1 + MAX_EXTRA];
    let mut n = SAMPLES + 1;
    for (j, g) in grid.iter_mut().take(n).enumerate() {
        *g = alpha * j as f64 / SAMPLES as f64;
    }
    for &e in extra.iter().take(MAX_EXTRA) {
        if e > 0.0 && e < alpha {
            grid[n] = e;
            n += 1;
        }
    }
    let grid = &mut grid[..n];
    grid.sort_by(f64::total_cmp);
    let mut state = [false; SAMPLES + 1 + MAX_EXTRA];
    for (v, &phi) in state.iter_mut().zip(grid.iter()) {
        *v = valid(phi);
    }
    // Bisects to the end of the run and tells a range end, where the hit
    // distance is continuous, from a silhouette, where it jumps or is lost.
    let end = |mut inside: f64, mut outside: f64| {
        for _ in 0..32 {
            let m = 0.5 * (inside + outside);
            if valid(m) {
                inside = m;
            } else {
                outside = m;
            }
        }
        let kind = match (cross(inside), cross(outside)) {
            (Some(a), Some(b)) if (b - a).abs() < 1e-4 * range => Edge::Range,
            _ => Edge::Tangent,
        };
        (inside, kind)
    };
    let last = n - 1;
    let mut k = 0;
    while k <= last {
        if !state[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < last && state[k + 1] {
            k += 1;
        }
        let (lo, lo_edge) = if start == 0 {
            (0.0, Edge::Cone)
        } else {
            end(grid[start], grid[start - 1])
        };
        let (hi, hi_edge) = if k == last {
            (alpha, Edge::Cone)
        } else {
            end(grid[k], grid[k + 1])
        };
        if hi > lo {
            out.push((lo, hi, lo_edge, hi_edge));
        }
        k += 1;
    }
}

/// Compact code for the run structure along one azimuth; the azimuthal
/// integrand is smooth wherever it stays the same.
fn signature(runs: &[Run]) -> u64 {
    let code = |e: Edge| match e {
        Edge::Cone => 1,
        Edge::Range => 2,
        Edge::Tangent => 3,
    };
    runs.iter().fold(runs.len() as u64, |acc, r| {
        acc.wrapping_mul(16).wrapping_add(code(r.2) * 4 + code(r.3))
    })
}

/// Distance-from-end profile of a quadrature panel.
#[derive(Clone, Copy, Debug)]
enum Grading {
    Linear,
    /// `x = span·v²`, cancelling an inverse square-root singularity at the end.
    Quadratic,
    /// `x = w·(e^{v·ln(1 + span/w)} − 1)`, resolving a layer of width `w`.
    Log(f64),
}

/// A panel measured from `end` in direction `dir`, covering `span`.
#[derive(Clone, Copy, Debug)]
struct Panel {
    end: f64,
    dir: f64,
    span: f64,
    grading: Grading,
}

impl Panel {
    fn between(a: f64, b: f64, grading: Grading) -> Self {
        Self {
            end: a,
            dir: (b - a).signum(),
            span: (b - a).abs(),
            grading,
        }
    }

    /// Polar angle and Jacobian at `v ∈ [0, 1]`.
    #[inline]
    fn map(&self, v: f64) -> (f64, f64) {
        let (x, jac) = match self.grading {
            Grading::Linear => (self.span * v, self.span),
            Grading::Quadratic => (self.span * v * v, 2.0 * self.span * v),
            Grading::Log(w) => {
                let l = (self.span / w).ln_1p();
                let e = (v * l).exp();
                (w * (e - 1.0), w * l * e)
            }
        };
        (self.end + self.dir * x, jac)
    }
}

/// Splits a run into panels graded towards its singular or layered ends.
/// `layer(end, dir)` gives the range-layer width at a range end.
fn run_panels<L: Fn(f64, f64) -> f64>(
    (lo, hi, lo_edge, hi_edge): Run,
    layer: L,
    out: &mut Vec<Panel>,
) {
    let span = hi - lo;
    let (mut a, mut b) = (lo, hi);
    if lo_edge == Edge::Range {
        let w = layer(lo, 1.0);
        a = lo + (60.0 * w).min(0.5 * span);
        out.push(Panel::between(lo, a, Grading::Log(w)));
    }
    if hi_edge == Edge::Range {
        let w = layer(hi, -1.0);
        b = hi - (60.0 * w).min(0.5 * span);
        out.push(Panel::between(hi, b, Grading::Log(w)));
    }
    if b <= a {
        return;
    }
    // Tangent ends take half of the rest each; a lone tangent end all of it.
    match (lo_edge == Edge::Tangent, hi_edge == Edge::Tangent) {
        (true, true) => {
            let mid = 0.5 * (a + b);
            out.push(Panel::between(a, mid, Grading::Quadratic));
            out.push(Panel::between(b, mid, Grading::Quadratic));
        }
        (true, false) => out.push(Panel::between(a, b, Grading::Quadratic)),
        (false, true) => out.push(Panel::between(b, a, Grading::Quadratic)),
        (false, false) => out.push(Panel::between(a, b, Grading::Linear)),
    }
}

/// Quadrature of `h'(C* − Q)·∂S/∂(·)` over the surface patch seen by the
/// footprint, mapped to body rates.
///
/// The patch is parametrized by the rays of the sensing cone, so the cone and
/// range edges, where the partials jump, are boundaries of the integration
/// domain. Q is interpolated linearly between cell centers.
pub fn local_coverage_terms(
    model: &SensorModel,
    state: &AgentState,
    field: &CoverageField,
    mesh: &SurfaceMesh,
) -> LocalTerms {
    let s = mesh.spheroid();
    let pose = SensorPose::from(state);
    let stencil = Stencil::default_steps(model, &pose);
    let axis = stencil.base.axis;
    let origin = pose.position;
    let helper = if axis.z.abs() < 0.9 {
        Vec3::z()
    } else {
        Vec3::x()
    };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    let alpha = model.half_angle;
    let range = model.range;
    let cfg = mesh.config();
    let (nodes, weights) = crate::quad::gauss_legendre(cfg.polar_nodes);
    let tau = 2.0 * std::f64::consts::PI;

    let ray = |omega: f64, phi: f64| {
        let (sw, cw) = omega.sin_cos();
        let (sp, cp) = phi.sin_cos();
        cp * axis + sp * (cw * e1 + sw * e2)
    };
    // Without occlusion a ray may see the surface twice: where it enters and,
    // through a thin rim, where it leaves again. Root `k` is tracked separately.
    let root = |k: usize, d: &Vec3| {
        let (t1, t2) = s.line_crossings(&origin, d)?;
        let t = if k == 0 { t1 } else { t2 };
        (t > 0.0).then_some(t)
    };
    let profile = |omega: f64, runs: &mut [Vec<Run>; 2]| {
        let [near, far] = runs;
        valid_runs(|phi| root(0, &ray(omega, phi)), alpha, range, &[], near);
        // The exit crossing is within range only close to a silhouette, so
        // its runs start at the tangent ends of the entry crossing.
        let mut seeds = [0.0; 8];
        let mut n = 0;
        for r in near.iter() {
            for (phi, edge) in [(r.0, r.2), (r.1, r.3)] {
                if edge == Edge::Tangent && n < seeds.len() {
                    seeds[n] = phi;
                    n += 1;
                }
            }
        }
        valid_runs(|phi| root(1, &ray(omega, phi)), alpha, range, &seeds[..n], far);
    };
    let signature =
        |runs: &[Vec<Run>; 2]| signature(&runs[0]).wrapping_mul(1 << 32) ^ signature(&runs[1]);
    let mut panels = Vec::new();
    // Integral over polar angle along one azimuth, scaled by `weight`.
    let mut along = |omega: f64, runs: &[Vec<Run>; 2], weight: f64, g: &mut [f64; 5]| {
        for (k, runs) in runs.iter().enumerate() {
            let cross = |phi: f64| root(k, &ray(omega, phi));
            // Width over which the range margin R² − t² grows to the angular
            // margin α − φ, from the slope of t along the run.
            let layer = |end: f64, into: f64| {
                let margin = (alpha - end).max(0.02 * alpha);
                let step = 1e-4 * alpha;
                let slope = match (cross(end), cross(end + into * step)) {
                    (Some(t0), Some(t1)) => (t0 * t0 - t1 * t1).abs() / step,
                    _ => 0.0,
                };
                if slope > 0.0 {
                    (margin / slope).max(1e-9 * alpha)
                } else {
                    alpha
                }
            };
            panels.clear();
            for &run in runs {
                run_panels(run, &layer, &mut panels);
            }
            for panel in &panels {
                for (x, w) in nodes.iter().zip(&weights) {
                    let (phi, jac) = panel.map(0.5 * (x + 1.0));
                    let d = ray(omega, phi);
                    let Some(t) = root(k, &d) else { continue };
                    let p = origin + t * d;
                    let cos_inc = d.dot(&s.unit_normal(&p)).abs();
                    if cos_inc < 1e-12 {
                        continue;
                    }
                    let q = mesh.interpolate(&field.q, s.parametric_latitude(&p), p.y.atan2(p.x));
                    let hp = h_prime(field.c_star - q);
                    if hp == 0.0 {
                        continue;
                    }
                    let e = stencil.evaluate(&p);
                    let wt = 0.5 * w * jac * weight * t * t * phi.sin() / cos_inc * hp;
                    for j in 0..5 {
                        g[j] += wt * e.partials[j];
                    }
                }
            }
        }
    };

    let m = cfg.azimuth_nodes;
    let dw = tau / m as f64;
    let mut base: Vec<[Vec<Run>; 2]> = vec![[Vec::new(), Vec::new()]; m];
    let mut sigs = vec![0u64; m];
    for k in 0..m {
        profile(dw * k as f64, &mut base[k]);
        sigs[k] = signature(&base[k]);
    }
    // Azimuths where the run structure changes, located by bisection.
    let mut breaks = Vec::new();
    let mut scratch = [Vec::new(), Vec::new()];
    for k in 0..m {
        let (mut a, mut b) = (dw * k as f64, dw * (k + 1) as f64);
        let sa = sigs[k];
        if sa == sigs[(k + 1) % m] {
            continue;
        }
        for _ in 0..10 {
            let mid = 0.5 * (a + b);
            profile(mid, &mut scratch);
            if signature(&scratch) == sa {
                a = mid;
            } else {
                b = mid;
            }
        }
        breaks.push(0.5 * (a + b));
    }

    let mut g = [0.0; 5];
    if breaks.is_empty() {
        // Smooth and periodic: the trapezoid rule converges fast.
        for (k, runs) in base.iter().enumerate() {
            along(dw * k as f64, runs, dw, &mut g);
        }
    } else {
        // Gauss panels between breaks, clustered towards both ends where the
        // integrand has kinks or square-root behaviour.
        let (an, aw) = crate::quad::gauss_legendre(cfg.azimuth_panel_nodes);
        let nb = breaks.len();
        for i in 0..nb {
            let lo = breaks[i];
            let hi = if i + 1 < nb {
                breaks[i + 1]
            } else {
                breaks[0] + tau
            };
            let span = hi - lo;
            let pieces =
                ((span / tau * m as f64 / cfg.azimuth_panel_nodes as f64).ceil() as usize).max(1);
            let piece = span / pieces as f64;
            for j in 0..pieces {
                let a = lo + piece * j as f64;
                let graded_lo = j == 0;
                let graded_hi = j + 1 == pieces;
                for (x, w) in an.iter().zip(&aw) {
                    let u = 0.5 * (x + 1.0);
                    let (v, dv) = match (graded_lo, graded_hi) {
                        (true, true) => (
                            0.5 * (1.0 - (std::f64::consts::PI * u).cos()),
                            0.5 * std::f64::consts::PI * (std::f64::consts::PI * u).sin(),
                        ),
                        (true, false) => (u * u, 2.0 * u),
                        (false, true) => (1.0 - (1.0 - u) * (1.0 - u), 2.0 * (1.0 - u)),
                        (false, false) => (u, 1.0),
                    };
                    let omega = a + piece * v;
                    profile(omega, &mut scratch);
                    along(omega, &scratch, 0.5 * w * piece * dv, &mut g);
                }
            }
        }
    }

    let r1 = rotation_body_to_global(&state.euler);
    let grad = Vec3::new(g[0], g[1], g[2]);
    let (sf, cf) = state.euler.x.sin_cos();
    let sec = 1.0 / state.euler.y.cos();
    LocalTerms {
        a: [
            grad.dot(&r1.column(0)),
            grad.dot(&r1.column(1)),
            grad.dot(&r1.column(2)),
            g[4] * sf * sec + g[3] * cf,
            g[4] * cf * sec - g[3] * sf,
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Spheroid;
    use crate::sensing::MeshConfig;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn setup() -> (SurfaceMesh, SensorModel) {
        let s = Spheroid::new(80.0, 20.0).unwrap();
        let b = s.partition_bounds(4).unwrap();
        let m = SurfaceMesh::new(
            s,
            &b,
            MeshConfig {
                target_cells: 4_000,
                subsamples: 3,
                ..MeshConfig::default()
            },
        )
        .unwrap();
        (
            m,
            SensorModel {
                range: 10.0,
                half_angle: PI / 6.0,
                eta: 100.0,
            },
        )
    }

    fn over_pole(alt: f64) -> AgentState {
        AgentState::new(
            Vec3::new(0.0, 0.0, 20.0 + alt),
            Vec3::new(0.0, FRAC_PI_2 - 1e-3, 0.0),
        )
    }

    #[test]
    fn error_levels() {
        let (m, _) = setup();
        let mut f = CoverageField::filled(&m, 20.0, 20.0);
        assert_eq!(f.coverage_error(&m), 0.0);
        f.q.fill(0.0);
        assert!((f.coverage_error(&m) / (8000.0 * m.total_area()) - 1.0).abs() < 1e-12);
        f.q.fill(10.0);
        assert!((f.coverage_error(&m) / (1000.0 * m.total_area()) - 1.0).abs() < 1e-12);
        assert!((f.normalized_error(&m) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn sensing_raises_coverage_under_agent() {
        let (m, model) = setup();
        let agent = over_pole(5.0);
        let mut rate = vec![0.0; m.len()];
        let mut scratch = Vec::new();
        CoverageField::add_sensing_rate(
            &m,
            &model,
            &SensorPose::from(&agent),
            &mut rate,
            &mut scratch,
        );
        let below = m.locate_point(&Vec3::new(0.0, 0.0, 20.0));
        assert!(rate[below] > 0.0);
        let mut f = CoverageField::filled(&m, 0.0, 20.0);
        let before = f.q[below];
        let zero = vec![0.0; m.len()];
        f.accumulate(&rate, &zero, 0.1);
        assert!(f.q[below] > before);
        // No agents and no decay leaves the field alone.
        let snapshot = f.clone();
        f.accumulate(&zero, &zero, 0.1);
        assert_eq!(f, snapshot);
    }

    #[test]
    fn decay_clamps_at_zero() {
        let (m, _) = setup();
        let mut f = CoverageField::filled(&m, 0.01, 20.0);
        let zero = vec![0.0; m.len()];
        let decay = vec![1.0; m.len()];
        f.accumulate(&zero, &decay, 1.0);
        assert!(f.q.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn covered_field_has_zero_terms() {
        let (m, model) = setup();
        let f = CoverageField::filled(&m, 20.0, 20.0);
        assert_eq!(
            local_coverage_terms(&model, &over_pole(5.0), &f, &m).a,
            [0.0; 5]
        );
        // Looking away from the surface.
        let f = CoverageField::filled(&m, 0.0, 20.0);
        let up = AgentState::new(Vec3::new(0.0, 0.0, 25.0), Vec3::new(0.0, -1.2, 0.0));
        assert_eq!(local_coverage_terms(&model, &up, &f, &m).a, [0.0; 5]);
    }

    #[test]
    fn terms_point_towards_uncovered_area() {
        let (m, model) = setup();
        // Covered everywhere except for x > 1 near the pole.
        let mut f = CoverageField::filled(&m, 20.0, 20.0);
        for (i, c) in m.cells().iter().enumerate() {
            if c.center.x > 1.0 {
                f.q[i] = 0.0;
            }
        }
        let agent = over_pole(5.0);
        let t = local_coverage_terms(&model, &agent, &f, &m);
        // Body axes looking straight down: global +x is body -z.
        let r1 = rotation_body_to_global(&agent.euler);
        let global = r1 * Vec3::new(t.a[0], t.a[1], t.a[2]);
        assert!(global.x > 0.0, "{global}");
        assert!(global.x.abs() > 10.0 * global.y.abs());
    }
}
