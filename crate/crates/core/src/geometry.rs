//! Voxel meshes of the ball `B_R`, Gauss–Legendre surface quadratures of
//! its boundary, and translation-invariant pair tables.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::quadrature::gauss_legendre;
use crate::Vec3;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Uniform cubic voxelization of `B_R`.
///
/// Cell centers sit at `(i + 1/2) h` on each axis, so the origin is never a
/// center; a cell belongs to the mesh iff its center lies strictly inside
/// the ball. All cells share one volume weight.
#[derive(Debug, Clone)]
pub struct BallMesh {
    id: u64,
    radius: f64,
    spacing: f64,
    weight: f64,
    half: i32,
    grid: Vec<[i32; 3]>,
    centers: Vec<Vec3>,
    lookup: Vec<u32>,
}

const NO_CELL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshSummary {
    pub radius: f64,
    pub spacing: f64,
    pub cell_count: usize,
    pub total_volume: f64,
    pub relative_volume_error: f64,
}

pub fn ball_volume(radius: f64) -> f64 {
    4.0 / 3.0 * PI * radius.powi(3)
}

/// Builds the voxel mesh of `B_R` with spacing `h` and weights `h^3`.
pub fn build_ball_mesh(radius: f64, spacing: f64) -> Result<BallMesh> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("R", format!("must be > 0, got {radius}")));
    }
    if !(spacing > 0.0 && spacing < radius) {
        return Err(Error::param("h", format!("must satisfy 0 < h < R = {radius}, got {spacing}")));
    }
    let half = (radius / spacing).ceil() as i32;
    let side = (2 * half) as usize;
    let mut lookup = vec![NO_CELL; side * side * side];
    let mut grid = Vec::new();
    let mut centers = Vec::new();
    for ix in -half..half {
        for iy in -half..half {
            for iz in -half..half {
                let g = [ix, iy, iz];
                let c = center_of(g, spacing);
                if c.norm() < radius {
                    let slot = ((ix + half) as usize * side + (iy + half) as usize) * side + (iz + half) as usize;
                    lookup[slot] = centers.len() as u32;
                    grid.push(g);
                    centers.push(c);
                }
            }
        }
    }
    if centers.len() < 8 {
        return Err(Error::MeshTooCoarse { cells: centers.len() });
    }
    Ok(BallMesh {
        id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
        radius,
        spacing,
        weight: spacing.powi(3),
        half,
        grid,
        centers,
        lookup,
    })
}

/// Mesh of `B_R` with a fixed number of cells across the diameter.
pub fn build_ball_mesh_per_diameter(radius: f64, cells_per_diameter: usize) -> Result<BallMesh> {
    if cells_per_diameter < 2 {
        return Err(Error::param("cells_per_diameter", "must be >= 2"));
    }
    build_ball_mesh(radius, 2.0 * radius / cells_per_diameter as f64)
}

fn center_of(g: [i32; 3], h: f64) -> Vec3 {
    Vec3::new(
        (g[0] as f64 + 0.5) * h,
        (g[1] as f64 + 0.5) * h,
        (g[2] as f64 + 0.5) * h,
    )
}

impl BallMesh {
    /// Same cells, with the uniform weight rescaled so the total equals
    /// `|B_R|` exactly. Gets a fresh identity.
    pub fn with_normalized_volume(&self) -> BallMesh {
        let mut m = self.clone();
        m.weight = ball_volume(self.radius) / self.centers.len() as f64;
        m.id = NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed);
        m
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Volume weight of every cell.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn cell_count(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    pub fn grid_index(&self, cell: usize) -> [i32; 3] {
        self.grid[cell]
    }

    pub fn total_volume(&self) -> f64 {
        self.weight * self.centers.len() as f64
    }

    /// `x_i - x_j`, computed from integer offsets so that equal offsets give
    /// bit-identical vectors.
    pub fn displacement(&self, i: usize, j: usize) -> Vec3 {
        let (a, b) = (self.grid[i], self.grid[j]);
        offset_vector([a[0] - b[0], a[1] - b[1], a[2] - b[2]], self.spacing)
    }

    /// Cell with the given grid index, if it belongs to the mesh.
    pub fn cell_at(&self, g: [i32; 3]) -> Option<usize> {
        let side = 2 * self.half;
        if g.iter().any(|&v| v < -self.half || v >= self.half) {
            return None;
        }
        let slot = ((g[0] + self.half) * side + (g[1] + self.half)) as usize * side as usize + (g[2] + self.half) as usize;
        match self.lookup[slot] {
            NO_CELL => None,
            c => Some(c as usize),
        }
    }

    /// Cell whose voxel contains `x` (nearest center on the grid), if any.
    pub fn locate(&self, x: &Vec3) -> Option<usize> {
        let g = [
            (x.x / self.spacing).floor() as i32,
            (x.y / self.spacing).floor() as i32,
            (x.z / self.spacing).floor() as i32,
        ];
        self.cell_at(g)
    }

    /// Nearest cell center to `x` (linear scan).
    pub fn nearest_cell(&self, x: &Vec3) -> usize {
        if let Some(c) = self.locate(x) {
            return c;
        }
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = (c - x).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn summary(&self) -> MeshSummary {
        let exact = ball_volume(self.radius);
        MeshSummary {
            radius: self.radius,
            spacing: self.spacing,
            cell_count: self.cell_count(),
            total_volume: self.total_volume(),
            relative_volume_error: (self.total_volume() - exact) / exact,
        }
    }

    /// Largest absolute offset component between two cells.
    pub(crate) fn max_offset(&self) -> i32 {
        2 * self.half - 1
    }
}

pub(crate) fn offset_vector(d: [i32; 3], h: f64) -> Vec3 {
    Vec3::new(d[0] as f64 * h, d[1] as f64 * h, d[2] as f64 * h)
}

/// A value per integer offset class `g_i - g_j`, indexed in O(1).
#[derive(Debug, Clone)]
pub struct OffsetTable<T> {
    origin: i32,
    stride: usize,
    values: Vec<T>,
}

impl<T: Copy + Send + Sync> OffsetTable<T> {
    /// Number of entries a table for `mesh` would hold.
    pub fn len_for(mesh: &BallMesh) -> usize {
        let s = (2 * mesh.max_offset() + 1) as usize;
        s * s * s
    }

    /// Evaluates `f` at every offset vector `d h` the mesh can realize.
    pub fn build<F>(mesh: &BallMesh, f: F) -> Self
    where
        F: Fn([i32; 3], Vec3) -> T + Send + Sync,
    {
        let origin = mesh.max_offset();
        let stride = (2 * origin + 1) as usize;
        let h = mesh.spacing();
        let values = (0..stride * stride * stride)
            .into_par_iter()
            .map(|slot| {
                let dz = (slot % stride) as i32 - origin;
                let dy = ((slot / stride) % stride) as i32 - origin;
                let dx = (slot / (stride * stride)) as i32 - origin;
                let d = [dx, dy, dz];
                f(d, offset_vector(d, h))
            })
            .collect();
        OffsetTable { origin, stride, values }
    }

    #[inline]
    pub fn slot(&self, a: [i32; 3], b: [i32; 3]) -> usize {
        let o = self.origin;
        let s = self.stride;
        ((a[0] - b[0] + o) as usize * s + (a[1] - b[1] + o) as usize) * s + (a[2] - b[2] + o) as usize
    }

    #[inline]
    pub fn get(&self, a: [i32; 3], b: [i32; 3]) -> T {
        self.values[self.slot(a, b)]
    }

    /// Per-cell linear keys: the slot of the pair `(a, b)` is
    /// `key(a) + key(0) - key(b)`, which lets inner loops skip the
    /// three-component index arithmetic.
    pub fn cell_keys(&self, mesh: &BallMesh) -> Vec<usize> {
        (0..mesh.cell_count()).map(|i| self.key(mesh.grid_index(i))).collect()
    }

    #[inline]
    pub fn key(&self, g: [i32; 3]) -> usize {
        let o = self.origin;
        let s = self.stride;
        ((g[0] + o) as usize * s + (g[1] + o) as usize) * s + (g[2] + o) as usize
    }

    /// Key of the zero offset.
    #[inline]
    pub fn zero_key(&self) -> usize {
        self.key([0, 0, 0])
    }

    #[inline]
    pub fn at(&self, slot: usize) -> T {
        self.values[slot]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<T>()
    }
}

/// Default cache budget for pair tables (256 MiB).
pub const DEFAULT_CACHE_BUDGET: usize = 256 << 20;

/// Unordered cell pairs of a mesh with optionally cached kernel values.
pub struct PairTable<'a> {
    mesh: &'a BallMesh,
    kernel: Option<&'a Kernel>,
    cache: Option<OffsetTable<f64>>,
}

/// One unordered pair `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairInfo {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub kernel: Option<f64>,
}

/// Builds the pair structure. With a kernel, values are cached per offset
/// class unless the table would exceed `budget_bytes`, in which case kernel
/// values are recomputed on the fly (with a warning).
pub fn pair_distance_table<'a>(mesh: &'a BallMesh, kernel: Option<&'a Kernel>, budget_bytes: usize) -> PairTable<'a> {
    let cache = kernel.and_then(|k| {
        let bytes = OffsetTable::<f64>::len_for(mesh) * std::mem::size_of::<f64>();
        if bytes > budget_bytes {
            log::warn!(
                "pair cache needs {bytes} bytes (budget {budget_bytes}); evaluating kernel on the fly"
            );
            None
        } else {
            Some(OffsetTable::build(mesh, |_, z| k.raw(&z)))
        }
    });
    PairTable { mesh, kernel, cache }
}

impl<'a> PairTable<'a> {
    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    pub fn pair_count(&self) -> usize {
        let n = self.mesh.cell_count();
        n * (n - 1) / 2
    }

    pub fn kernel_value(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.kernel?;
        Some(match &self.cache {
            Some(t) => t.get(self.mesh.grid_index(i), self.mesh.grid_index(j)),
            None => k.raw(&self.mesh.displacement(i, j)),
        })
    }

    pub fn pairs(&self) -> impl Iterator<Item = PairInfo> + '_ {
        let n = self.mesh.cell_count();
        (0..n).flat_map(move |i| {
            (i + 1..n).map(move |j| PairInfo {
                i,
                j,
                distance: self.mesh.displacement(i, j).norm(),
                kernel: self.kernel_value(i, j),
            })
        })
    }
}

/// Product Gauss–Legendre quadrature on a sphere (or upper hemisphere).
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    radius: f64,
    n_theta: usize,
    n_phi: usize,
    hemisphere: bool,
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
    weights: Vec<f64>,
}

/// Gauss–Legendre in `cos(theta)` times `2 n_theta` uniform azimuths.
pub fn build_sphere_quadrature(radius: f64, n_theta: usize) -> Result<SphereQuadrature> {
    build_product_quadrature(radius, n_theta, false)
}

/// Same construction restricted to `x_3 >= 0` (Gauss–Legendre on `cos(theta) in [0, 1]`).
pub fn build_hemisphere_quadrature(radius: f64, n_theta: usize) -> Result<SphereQuadrature> {
    build_product_quadrature(radius, n_theta, true)
}

fn build_product_quadrature(radius: f64, n_theta: usize, hemisphere: bool) -> Result<SphereQuadrature> {
    if n_theta < 8 {
        return Err(Error::param("n_theta", format!("must be >= 8, got {n_theta}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("R", format!("must be > 0, got {radius}")));
    }
    let (t, w) = gauss_legendre(n_theta);
    let n_phi = 2 * n_theta;
    let dphi = 2.0 * PI / n_phi as f64;
    let r2 = radius * radius;
    let mut points = Vec::with_capacity(n_theta * n_phi);
    let mut normals = Vec::with_capacity(n_theta * n_phi);
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    for (&ti, &wi) in t.iter().zip(&w) {
        let (ct, wt) = if hemisphere { (0.5 * (ti + 1.0), 0.5 * wi) } else { (ti, wi) };
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            let n = Vec3::new(st * phi.cos(), st * phi.sin(), ct);
            normals.push(n);
            points.push(n * radius);
            weights.push(wt * dphi * r2);
        }
    }
    Ok(SphereQuadrature {
        radius,
        n_theta,
        n_phi,
        hemisphere,
        points,
        normals,
        weights,
    })
}

impl SphereQuadrature {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn is_hemisphere(&self) -> bool {
        self.hemisphere
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ f(x) dS(x)` by the rule.
    pub fn integrate<F: Fn(&Vec3) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Independent oracle: count half-integer lattice points inside the ball.
    fn count_oracle(radius: f64, h: f64) -> usize {
        let n = (radius / h).ceil() as i64 + 1;
        let mut count = 0;
        for i in -n..n {
            for j in -n..n {
                for k in -n..n {
                    let c = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
                    if (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() < radius {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    #[test]
    fn volumes_match_lattice_count() {
        for (h, tol) in [(0.25, 0.10), (0.05, 0.015)] {
            let m = build_ball_mesh(1.0, h).unwrap();
            assert_eq!(m.cell_count(), count_oracle(1.0, h));
            let s = m.summary();
            assert!(s.relative_volume_error.abs() < tol, "{s:?}");
        }
        assert_eq!(build_ball_mesh(1.0, 0.25).unwrap().cell_count(), 280);
        assert_eq!(build_ball_mesh(1.0, 0.05).unwrap().cell_count(), 33552);
    }

    #[test]
    fn refinement_reduces_volume_error() {
        let errs: Vec<f64> = [0.25, 0.125, 0.0625]
            .iter()
            .map(|&h| build_ball_mesh(1.0, h).unwrap().summary().relative_volume_error.abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn centers_inside_and_origin_free() {
        let m = build_ball_mesh(1.3, 0.2).unwrap();
        for c in m.centers() {
            assert!(c.norm() < 1.3);
            assert!(c.norm() > 0.0);
        }
        for i in 0..m.cell_count() {
            assert_eq!(m.cell_at(m.grid_index(i)), Some(i));
            assert_eq!(m.locate(&m.centers()[i]), Some(i));
        }
    }

    #[test]
    fn mesh_errors() {
        assert!(build_ball_mesh(1.0, 1.0).is_err());
        assert!(build_ball_mesh(1.0, 1.5).is_err());
        assert!(build_ball_mesh(1.0, 0.0).is_err());
        // h just below R keeps the 8 cells around the origin
        assert_eq!(build_ball_mesh(1.0, 0.9).unwrap().cell_count(), 8);
    }

    #[test]
    fn normalized_volume_is_exact() {
        let m = build_ball_mesh(2.0, 0.5).unwrap().with_normalized_volume();
        assert_relative_eq!(m.total_volume(), ball_volume(2.0), max_relative = 1e-14);
    }

    #[test]
    fn sphere_quadrature_moments() {
        let r = 1.7;
        let q = build_sphere_quadrature(r, 16).unwrap();
        let area = 4.0 * PI * r * r;
        assert_relative_eq!(q.total_weight(), area, max_relative = 1e-10);
        let x3sq = q.integrate(|p| p.z * p.z);
        assert_relative_eq!(x3sq, 4.0 * PI / 3.0 * r.powi(4), max_relative = 1e-10);
        let x1sq = q.integrate(|p| p.x * p.x);
        let x2sq = q.integrate(|p| p.y * p.y);
        assert_relative_eq!(x1sq, x3sq, max_relative = 1e-10);
        assert_relative_eq!(x2sq, x3sq, max_relative = 1e-10);
        assert!(q.integrate(|p| p.z).abs() < 1e-12);
        for (p, n) in q.points().iter().zip(q.normals()) {
            assert!((p / p.norm() - n).norm() < 1e-12);
        }
        assert!(build_sphere_quadrature(1.0, 7).is_err());
    }

    #[test]
    fn hemisphere_quadrature_moments() {
        let q = build_hemisphere_quadrature(1.0, 16).unwrap();
        assert_relative_eq!(q.total_weight(), 2.0 * PI, max_relative = 1e-12);
        // ∫_{S+} x3 dS = pi
        assert_relative_eq!(q.integrate(|p| p.z), PI, max_relative = 1e-12);
        assert!(q.points().iter().all(|p| p.z > 0.0));
    }

    #[test]
    fn pair_table_counts_and_cache() {
        use crate::kernels::{make_builtin_kernel, KernelSpec};
        let m = build_ball_mesh(1.0, 0.3).unwrap();
        let k = make_builtin_kernel(&KernelSpec::Fractional { s: 0.5 }).unwrap();
        let t = pair_distance_table(&m, Some(&k), DEFAULT_CACHE_BUDGET);
        assert!(t.is_cached());
        let n = m.cell_count();
        assert_eq!(t.pairs().count(), n * (n - 1) / 2);
        assert_eq!(t.pair_count(), n * (n - 1) / 2);
        // cached values equal direct evaluation exactly
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n);
            if j == i {
                j = (i + 1) % n;
            }
            let direct = k.value(&m.displacement(i, j)).finite().unwrap();
            assert_eq!(t.kernel_value(i, j).unwrap(), direct);
        }
        // budget too small: on-the-fly, same values
        let lazy = pair_distance_table(&m, Some(&k), 16);
        assert!(!lazy.is_cached());
        assert_eq!(lazy.kernel_value(0, 5), t.kernel_value(0, 5));
    }

    #[test]
    fn two_cell_pair() {
        // R just above the first shell keeps only 8 cells; pick the smallest case
        let m = build_ball_mesh(1.0, 0.9).unwrap();
        let t = pair_distance_table(&m, None, DEFAULT_CACHE_BUDGET);
        assert_eq!(t.pair_count(), 28);
        assert!(t.pairs().all(|p| p.kernel.is_none() && p.distance > 0.0));
    }
}
