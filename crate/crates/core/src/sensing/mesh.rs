use crate::geometry::{Spheroid, Vec3};
use crate::quad::{integrate, solve_bracketed};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh needs at least 100 cells, got {0}")]
    TooCoarse(usize),
    #[error("subsamples per cell edge must lie in 1..=16, got {0}")]
    Subsamples(usize),
    #[error("footprint quadrature needs at least 8 azimuth and 2 polar nodes")]
    Quadrature,
    #[error("band bounds must run strictly from +c down to -c: {0:?}")]
    Bounds(Vec<f64>),
    #[error("mesh area {got} differs from the surface area {want}")]
    Area { got: f64, want: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    /// Approximate number of cells.
    pub target_cells: usize,
    /// Quadrature points per cell edge; each cell is sampled on a k×k grid.
    pub subsamples: usize,
    /// Footprint quadrature for the local coverage terms: azimuth nodes
    /// around the boresight and Gauss nodes along each azimuth. Where the
    /// footprint outline changes character the azimuth range is split into
    /// Gauss panels of `azimuth_panel_nodes` nodes.
    pub azimuth_nodes: usize,
    pub polar_nodes: usize,
    pub azimuth_panel_nodes: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            target_cells: 10_000,
            subsamples: 4,
            azimuth_nodes: 24,
            polar_nodes: 12,
            azimuth_panel_nodes: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub center: Vec3,
    pub normal: Vec3,
    pub area: f64,
    /// Index of the latitude band (partition) holding the cell.
    pub band: usize,
    pub row: usize,
    pub lon_lo: f64,
    pub lon_hi: f64,
    /// Radius of a ball about `center` containing the whole cell.
    pub radius: f64,
}

#[derive(Debug, Clone)]
struct Row {
    beta_lo: f64,
    /// Parametric latitude of the cell centers.
    beta_c: f64,
    /// Per latitude sub-node: (ρ, z, fraction of the row area).
    sub: Vec<(f64, f64, f64)>,
    first: usize,
    count: usize,
}

/// Latitude-longitude mesh of a spheroid. Rows are equally spaced in meridian
/// arc length inside each band, the band bounds are row edges, and each row
/// holds a number of equal cells proportional to its circumference.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    spheroid: Spheroid,
    bounds: Vec<f64>,
    rows: Vec<Row>,
    cells: Vec<Cell>,
    k: usize,
    /// Per cell, k longitude sub-nodes as (cos, sin).
    sub_lon: Vec<(f64, f64)>,
    grid: Grid,
    total_area: f64,
    config: MeshConfig,
}

fn arc_density(s: &Spheroid, beta: f64) -> f64 {
    let (sb, cb) = beta.sin_cos();
    let a = s.equatorial_radius();
    let c = s.polar_radius();
    (a * a * sb * sb + c * c * cb * cb).sqrt()
}

fn arc_length(s: &Spheroid, lo: f64, hi: f64) -> f64 {
    integrate(|b| arc_density(s, b), lo, hi, 0.05)
}

impl SurfaceMesh {
    /// Build a mesh whose row edges include the heights in `bounds`, which must
    /// run from `+c` down to `-c`.
    pub fn new(spheroid: Spheroid, bounds: &[f64], cfg: MeshConfig) -> Result<Self, MeshError> {
        if cfg.target_cells < 100 {
            return Err(MeshError::TooCoarse(cfg.target_cells));
        }
        if !(1..=16).contains(&cfg.subsamples) {
            return Err(MeshError::Subsamples(cfg.subsamples));
        }
        if cfg.azimuth_nodes < 8
            || !(2..=64).contains(&cfg.polar_nodes)
            || !(2..=64).contains(&cfg.azimuth_panel_nodes)
        {
            return Err(MeshError::Quadrature);
        }
        let c = spheroid.polar_radius();
        let a = spheroid.equatorial_radius();
        let ok = bounds.len() >= 2
            && (bounds[0] - c).abs() <= 1e-9 * c
            && (bounds[bounds.len() - 1] + c).abs() <= 1e-9 * c
            && bounds.windows(2).all(|w| w[0] > w[1]);
        if !ok {
            return Err(MeshError::Bounds(bounds.to_vec()));
        }
        let total = spheroid.surface_area();
        let h = (total / cfg.target_cells as f64).sqrt();
        let k = cfg.subsamples;

        let betas: Vec<f64> = bounds
            .iter()
            .map(|z| (z / c).clamp(-1.0, 1.0).asin())
            .collect();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        let mut sub_lon = Vec::new();
        for (band, w) in betas.windows(2).enumerate() {
            let (top, bot) = (w[0], w[1]);
            let len = arc_length(&spheroid, bot, top);
            let n = ((len / h).round() as usize).max(1);
            let mut edges = vec![top];
            for j in 1..n {
                let target = len * j as f64 / n as f64;
                let b = solve_bracketed(
                    |b| arc_length(&spheroid, b, top) - target,
                    bot,
                    top,
                    1e-13,
                    200,
                )
                .unwrap_or(top - (top - bot) * j as f64 / n as f64);
                edges.push(b);
            }
            edges.push(bot);
            for e in edges.windows(2) {
                let (beta_hi, beta_lo) = (e[0], e[1]);
                let row_index = rows.len();
                let row = build_row(
                    &spheroid,
                    beta_lo,
                    beta_hi,
                    h,
                    k,
                    band,
                    row_index,
                    &mut cells,
                    &mut sub_lon,
                );
                rows.push(row);
            }
        }
        let total_area: f64 = cells.iter().map(|c| c.area).sum();
        if (total_area / total - 1.0).abs() > 5e-3 {
            return Err(MeshError::Area {
                got: total_area,
                want: total,
            });
        }
        let grid = Grid::new(&cells, a, c, (4.0 * h).max(1e-3 * a));
        Ok(Self {
            spheroid,
            bounds: bounds.to_vec(),
            rows,
            cells,
            k,
            sub_lon,
            grid,
            total_area,
            config: cfg,
        })
    }

    pub fn spheroid(&self) -> &Spheroid {
        &self.spheroid
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn subsamples(&self) -> usize {
        self.k
    }

    pub fn config(&self) -> &MeshConfig {
        &self.config
    }

    /// Value of a per-cell field at the surface point with parametric
    /// latitude `beta` and longitude `lon`, linear between cell centers along
    /// each row and between neighbouring rows.
    pub fn interpolate(&self, values: &[f64], beta: f64, lon: f64) -> f64 {
        // Rows run north to south, so centers decrease.
        let below = self.rows.partition_point(|r| r.beta_c > beta);
        let last = self.rows.len() - 1;
        // Between the outermost row centers and a pole, blend towards the
        // row mean, which stands in for the value at the pole.
        let cap = |r: usize, pole: f64| {
            let row = &self.rows[r];
            let t = ((beta - row.beta_c) / (pole - row.beta_c)).clamp(0.0, 1.0);
            let mean =
                values[row.first..row.first + row.count].iter().sum::<f64>() / row.count as f64;
            let v = self.row_value(r, values, lon);
            v + t * (mean - v)
        };
        if below == 0 {
            return cap(0, FRAC_PI_2);
        }
        if below == self.rows.len() {
            return cap(last, -FRAC_PI_2);
        }
        let (up, dn) = (&self.rows[below - 1], &self.rows[below]);
        let t = (up.beta_c - beta) / (up.beta_c - dn.beta_c);
        let v = self.row_value(below - 1, values, lon);
        v + t * (self.row_value(below, values, lon) - v)
    }

    fn row_value(&self, r: usize, values: &[f64], lon: f64) -> f64 {
        let row = &self.rows[r];
        let n = row.count as f64;
        let u = ((lon + PI) / (2.0 * PI)).rem_euclid(1.0) * n - 0.5;
        let j = u.floor();
        let t = u - j;
        let j0 = (j.rem_euclid(n)) as usize % row.count;
        let j1 = (j0 + 1) % row.count;
        let v = values[row.first + j0];
        v + t * (values[row.first + j1] - v)
    }

    /// Quadrature points of cell `i` with their area weights.
    #[inline]
    pub fn for_each_subpoint<F: FnMut(Vec3, f64)>(&self, i: usize, mut f: F) {
        let cell = &self.cells[i];
        let row = &self.rows[cell.row];
        let lons = &self.sub_lon[i * self.k..(i + 1) * self.k];
        let per_lon = cell.area / self.k as f64;
        for &(rho, z, frac) in &row.sub {
            let w = per_lon * frac;
            for &(cl, sl) in lons {
                f(Vec3::new(rho * cl, rho * sl, z), w);
            }
        }
    }

    /// Indices of cells that may intersect the ball of radius `r` about `p`.
    pub fn cells_near(&self, p: &Vec3, r: f64, out: &mut Vec<usize>) {
        out.clear();
        self.grid.visit(p, r, |i| {
            let cell = &self.cells[i];
            if (cell.center - p).norm() <= r + cell.radius {
                out.push(i);
            }
        });
    }

    /// Index of the cell containing the surface point with parametric latitude
    /// `beta` and longitude `lon`.
    pub fn locate(&self, beta: f64, lon: f64) -> usize {
        // Rows are stored from north to south.
        let idx = self
            .rows
            .partition_point(|r| r.beta_lo > beta)
            .min(self.rows.len() - 1);
        let row = &self.rows[idx];
        let t = ((lon + PI) / (2.0 * PI)).rem_euclid(1.0);
        let j = ((t * row.count as f64) as usize).min(row.count - 1);
        row.first + j
    }

    /// Cell containing the foot point of `q` on the meshed spheroid.
    pub fn locate_point(&self, q: &Vec3) -> usize {
        self.locate(self.spheroid.parametric_latitude(q), q.y.atan2(q.x))
    }
}

#[allow(clippy::too_many_arguments)]
fn build_row(
    s: &Spheroid,
    beta_lo: f64,
    beta_hi: f64,
    h: f64,
    k: usize,
    band: usize,
    row_index: usize,
    cells: &mut Vec<Cell>,
    sub_lon: &mut Vec<(f64, f64)>,
) -> Row {
    let a = s.equatorial_radius();
    let c = s.polar_radius();
    let z_of = |b: f64| c * b.sin();
    let row_area = s.zone_area(z_of(beta_lo), z_of(beta_hi));
    let mid = 0.5 * (beta_lo + beta_hi);
    let count = ((2.0 * PI * a * mid.cos() / h).round() as usize).max(3);

    let mut sub = Vec::with_capacity(k);
    for j in 0..k {
        let b0 = beta_lo + (beta_hi - beta_lo) * j as f64 / k as f64;
        let b1 = beta_lo + (beta_hi - beta_lo) * (j + 1) as f64 / k as f64;
        let bm = 0.5 * (b0 + b1);
        let frac = s.zone_area(z_of(b0), z_of(b1)) / row_area;
        sub.push((a * bm.cos(), z_of(bm), frac));
    }

    // Center at the height that splits the row area in half.
    let half = 0.5 * row_area;
    let z_lo = z_of(beta_lo);
    let z_c = solve_bracketed(
        |z| s.zone_area(z_lo, z) - half,
        z_lo,
        z_of(beta_hi),
        1e-13 * c,
        200,
    )
    .unwrap_or(z_of(mid));
    let beta_c = (z_c / c).clamp(-1.0, 1.0).asin();
    let first = cells.len();
    let dlon = 2.0 * PI / count as f64;
    for j in 0..count {
        let lon_lo = -PI + dlon * j as f64;
        let lon_hi = lon_lo + dlon;
        let center = s.point_from_parametric(beta_c, 0.5 * (lon_lo + lon_hi));
        let mut radius: f64 = 0.0;
        for b in [beta_lo, mid, beta_hi] {
            for l in [lon_lo, 0.5 * (lon_lo + lon_hi), lon_hi] {
                radius = radius.max((s.point_from_parametric(b, l) - center).norm());
            }
        }
        cells.push(Cell {
            center,
            normal: s.unit_normal(&center),
            area: row_area / count as f64,
            band,
            row: row_index,
            lon_lo,
            lon_hi,
            radius: radius * 1.01,
        });
        for t in 0..k {
            let l = lon_lo + dlon * (t as f64 + 0.5) / k as f64;
            let (sl, cl) = l.sin_cos();
            sub_lon.push((cl, sl));
        }
    }
    debug_assert!(beta_hi <= FRAC_PI_2 + 1e-12);
    Row {
        beta_lo,
        beta_c,
        sub,
        first,
        count,
    }
}

/// Uniform bucket grid over the bounding box of the cell centers.
#[derive(Debug, Clone)]
struct Grid {
    origin: Vec3,
    size: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl Grid {
    fn new(cells: &[Cell], a: f64, c: f64, size: f64) -> Self {
        let origin = Vec3::new(-a, -a, -c) - Vec3::repeat(size);
        let ext = Vec3::new(2.0 * a, 2.0 * a, 2.0 * c) + Vec3::repeat(2.0 * size);
        let dims = [
            (ext.x / size).ceil() as usize + 1,
            (ext.y / size).ceil() as usize + 1,
            (ext.z / size).ceil() as usize + 1,
        ];
        let mut g = Self {
            origin,
            size,
            dims,
            buckets: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
        };
        for (i, cell) in cells.iter().enumerate() {
            let b = g.index(&g.coords(&cell.center));
            g.buckets[b].push(i as u32);
        }
        g
    }

    fn coords(&self, p: &Vec3) -> [usize; 3] {
        let r = (p - self.origin) / self.size;
        [
            (r.x.max(0.0) as usize).min(self.dims[0] - 1),
            (r.y.max(0.0) as usize).min(self.dims[1] - 1),
            (r.z.max(0.0) as usize).min(self.dims[2] - 1),
        ]
    }

    fn index(&self, c: &[usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn visit<F: FnMut(usize)>(&self, p: &Vec3, r: f64, mut f: F) {
        // Cells are binned by center, so widen by the largest cell radius via r.
        let reach = r + self.size;
        let lo = self.coords(&(p - Vec3::repeat(reach)));
        let hi = self.coords(&(p + Vec3::repeat(reach)));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    for &i in &self.buckets[self.index(&[x, y, z])] {
                        f(i as usize);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(cells: usize) -> SurfaceMesh {
        let s = Spheroid::new(80.0, 20.0).unwrap();
        let b = s.partition_bounds(4).unwrap();
        SurfaceMesh::new(
            s,
            &b,
            MeshConfig {
                target_cells: cells,
                subsamples: 3,
                ..MeshConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn area_and_centers() {
        let m = mesh(10_000);
        let s = m.spheroid();
        assert!((m.total_area() / s.surface_area() - 1.0).abs() < 1e-12);
        assert!((m.len() as f64 / 10_000.0 - 1.0).abs() < 0.1, "{}", m.len());
        for c in m.cells() {
            assert!(s.implicit(&c.center).abs() < 1e-9);
            assert!((c.normal - s.unit_normal(&c.center)).norm() < 1e-12);
        }
    }

    #[test]
    fn band_areas_are_exact() {
        let m = mesh(5_000);
        let s = m.spheroid();
        let mut per_band = [0.0; 3];
        for c in m.cells() {
            per_band[c.band] += c.area;
        }
        for a in per_band {
            assert!((a / (s.surface_area() / 3.0) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn subpoints_lie_on_surface_and_sum_to_area() {
        let m = mesh(2_000);
        let s = m.spheroid();
        for i in (0..m.len()).step_by(37) {
            let mut total = 0.0;
            m.for_each_subpoint(i, |p, w| {
                assert!(s.implicit(&p).abs() < 1e-9);
                assert!((p - m.cells()[i].center).norm() <= m.cells()[i].radius);
                total += w;
            });
            assert!((total / m.cells()[i].area - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbor_query_matches_brute_force() {
        let m = mesh(3_000);
        let p = Vec3::new(30.0, -40.0, 17.0);
        let mut near = Vec::new();
        m.cells_near(&p, 10.0, &mut near);
        let brute: Vec<usize> = (0..m.len())
            .filter(|&i| (m.cells()[i].center - p).norm() <= 10.0 + m.cells()[i].radius)
            .collect();
        near.sort();
        assert_eq!(near, brute);
    }

    #[test]
    fn locate_finds_the_owning_cell() {
        let m = mesh(3_000);
        for (i, c) in m.cells().iter().enumerate().step_by(11) {
            assert_eq!(m.locate_point(&c.center), i);
        }
    }

    #[test]
    fn interpolation_reproduces_centers_and_linear_fields() {
        let m = mesh(3_000);
        let s = *m.spheroid();
        let v: Vec<f64> = m.cells().iter().map(|c| c.center.z).collect();
        for (i, c) in m.cells().iter().enumerate().step_by(7) {
            let got = m.interpolate(
                &v,
                s.parametric_latitude(&c.center),
                c.center.y.atan2(c.center.x),
            );
            assert!((got - v[i]).abs() < 1e-9);
        }
        // Constant fields stay constant everywhere.
        let ones = vec![1.0; m.len()];
        for j in 0..50 {
            let b = -1.5 + 3.0 * j as f64 / 50.0;
            assert!((m.interpolate(&ones, b, 0.3 * j as f64) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        let s = Spheroid::new(80.0, 20.0).unwrap();
        assert!(SurfaceMesh::new(s, &[20.0, 0.0], MeshConfig::default()).is_err());
        assert!(SurfaceMesh::new(
            s,
            &[20.0, -20.0],
            MeshConfig {
                target_cells: 10,
                ..MeshConfig::default()
            }
        )
        .is_err());
    }
}
