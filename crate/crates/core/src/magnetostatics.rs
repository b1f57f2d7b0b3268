//! Demagnetizing field and magnetostatic self-energy: direct dipole sums on
//! the voxel mesh, and surface-charge double integrals on the sphere.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{discrete_divergence, Magnetization};
use crate::geometry::{build_hemisphere_quadrature, BallMesh, OffsetTable, SphereQuadrature};
use crate::Vec3;

/// Symmetric dipole tensor `(3 r̂ r̂ᵀ - I) / (4π |r|³)` stored as
/// `[xx, yy, zz, xy, xz, yz]`. Zero at `r = 0`.
pub fn dipole_tensor(r: &Vec3) -> [f64; 6] {
    let d2 = r.norm_squared();
    if d2 == 0.0 {
        return [0.0; 6];
    }
    let d = d2.sqrt();
    let c = 1.0 / (4.0 * PI * d2 * d);
    let u = r / d;
    [
        c * (3.0 * u.x * u.x - 1.0),
        c * (3.0 * u.y * u.y - 1.0),
        c * (3.0 * u.z * u.z - 1.0),
        c * 3.0 * u.x * u.y,
        c * 3.0 * u.x * u.z,
        c * 3.0 * u.y * u.z,
    ]
}

#[cfg(test)]
pub(crate) fn apply_tensor(t: &[f64; 6], m: &Vec3) -> Vec3 {
    Vec3::new(
        t[0] * m.x + t[3] * m.y + t[4] * m.z,
        t[3] * m.x + t[1] * m.y + t[5] * m.z,
        t[4] * m.x + t[5] * m.y + t[2] * m.z,
    )
}

/// The linear map `m -> h_d[m]` on one mesh, with dipole tensors cached
/// per offset class.
pub struct DemagOperator {
    mesh_id: u64,
    weight: f64,
    keys: Vec<usize>,
    table: OffsetTable<[f64; 6]>,
}

impl DemagOperator {
    pub fn new(mesh: &BallMesh) -> Self {
        let table = OffsetTable::build(mesh, |_, z| dipole_tensor(&z));
        DemagOperator {
            mesh_id: mesh.id(),
            weight: mesh.weight(),
            keys: table.cell_keys(mesh),
            table,
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub(crate) fn table(&self) -> &OffsetTable<[f64; 6]> {
        &self.table
    }

    /// `h_i = Σ_{j≠i} D(x_i - x_j) v_j w - v_i / 3`.
    pub fn apply(&self, v: &[Vec3]) -> Vec<Vec3> {
        assert_eq!(v.len(), self.keys.len());
        let zero = self.table.zero_key();
        let vals = self.table.values();
        (0..v.len())
            .into_par_iter()
            .map(|i| {
                let base = self.keys[i] + zero;
                let (mut hx, mut hy, mut hz) = (0.0, 0.0, 0.0);
                for (kj, m) in self.keys.iter().zip(v) {
                    let t = &vals[base - kj];
                    hx += t[0] * m.x + t[3] * m.y + t[4] * m.z;
                    hy += t[3] * m.x + t[1] * m.y + t[5] * m.z;
                    hz += t[4] * m.x + t[5] * m.y + t[2] * m.z;
                }
                Vec3::new(hx, hy, hz) * self.weight - v[i] / 3.0
            })
            .collect()
    }
}

/// Demagnetizing field at the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct DemagField {
    pub mesh_id: u64,
    pub values: Vec<Vec3>,
}

impl DemagField {
    pub fn mean(&self) -> Vec3 {
        self.values.iter().fold(Vec3::zeros(), |a, v| a + v) / self.values.len() as f64
    }
}

pub fn demag_field(mesh: &BallMesh, m: &Magnetization) -> Result<DemagField> {
    m.check_mesh(mesh)?;
    let op = DemagOperator::new(mesh);
    Ok(DemagField {
        mesh_id: mesh.id(),
        values: op.apply(m.values()),
    })
}

/// `W(m) = -Σ h_d[m](x_i)·m_i w`.
pub fn magnetostatic_energy(mesh: &BallMesh, m: &Magnetization) -> Result<f64> {
    magnetostatic_bilinear(mesh, m, m)
}

/// `W(m, u) = -Σ h_d[u](x_i)·m_i w`. Symmetric in `m` and `u`.
pub fn magnetostatic_bilinear(mesh: &BallMesh, m: &Magnetization, u: &Magnetization) -> Result<f64> {
    m.check_mesh(mesh)?;
    u.check_mesh(mesh)
        .map_err(|_| Error::InvalidArgument("bilinear form needs both fields on the same mesh".into()))?;
    let h = DemagOperator::new(mesh).apply(u.values());
    Ok(-mesh.weight() * h.iter().zip(m.values()).map(|(h, m)| h.dot(m)).sum::<f64>())
}

/// `(1/3) |Ω| |<m>|²`, a lower bound for `W(m)`.
pub fn lower_bound_mean(mesh: &BallMesh, m: &Magnetization) -> Result<f64> {
    m.check_mesh(mesh)?;
    Ok(mesh.total_volume() * m.mean().norm_squared() / 3.0)
}

/// Warns when the discrete divergence of `m` exceeds `threshold` in L²;
/// the surface representation of `W` assumes a divergence-free field.
pub fn check_divergence_free(mesh: &BallMesh, m: &Magnetization, threshold: f64) -> Result<bool> {
    let div = discrete_divergence(mesh, m)?;
    let ok = div.l2_norm < threshold;
    if !ok {
        log::warn!(
            "field is not divergence-free (discrete L2 divergence {:.3e} >= {threshold:.1e}); surface energy is not W",
            div.l2_norm
        );
    }
    Ok(ok)
}

/// `m·n` at every node of `quad` for a field given pointwise.
pub fn normal_traces(quad: &SphereQuadrature, field: impl Fn(&Vec3) -> Vec3) -> Vec<f64> {
    quad.points().iter().zip(quad.normals()).map(|(x, n)| field(x).dot(n)).collect()
}

/// `(1/4π) ∬ f(x) f(y) / |x - y| dS dS` over the sphere of `quad`, where
/// `f = m·n` is given per node.
///
/// The singular part is removed by writing
/// `f(x) f(y) = f(x) (f(y) - f(x)) + f(x)²` and using
/// `∫_{S_R} dS(y) / |x - y| = 4πR` for the second term.
pub fn surface_energy(quad: &SphereQuadrature, m_normal: &[f64]) -> Result<f64> {
    if quad.is_hemisphere() {
        return Err(Error::InvalidArgument("surface_energy needs a full-sphere quadrature".into()));
    }
    if m_normal.len() != quad.len() {
        return Err(Error::InvalidArgument(format!(
            "{} normal traces for {} quadrature nodes",
            m_normal.len(),
            quad.len()
        )));
    }
    let pts = quad.points();
    let w = quad.weights();
    let total: f64 = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let fi = m_normal[i];
            let mut s = 0.0;
            for j in 0..pts.len() {
                if j != i {
                    s += w[j] * (m_normal[j] - fi) / (pts[i] - pts[j]).norm();
                }
            }
            w[i] * fi * (s + 4.0 * PI * quad.radius() * fi)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total / (4.0 * PI))
}

/// `x₃^{p+1} y₃^{p+1} / ω(x, y)` on the unit upper hemisphere, with
/// `ŷ = (y₁, y₂, -y₃)` and `ω = |x - y| |x - ŷ| (|x - ŷ| + |x - y|)`.
pub fn hemisphere_integrand(x: &Vec3, y: &Vec3, p: i32) -> f64 {
    let yh = Vec3::new(y.x, y.y, -y.z);
    let d = (x - y).norm();
    let dh = (x - yh).norm();
    (x.z * y.z).powi(p + 1) / (d * dh * (dh + d))
}

fn check_exponent(p: i32) -> Result<()> {
    if p != 1 && p != 3 {
        return Err(Error::param("p", format!("exponent must be 1 or 3, got {p}")));
    }
    Ok(())
}

/// `(2R³/π) ∬_{S²₊ × S²₊} x₃^{p+1} y₃^{p+1} / ω(x, y) dS dS`.
///
/// `p = 1` gives `W_{B_R}(e₃)`, `p = 3` the vortex energy. The integrand
/// behaves like `1/|x - y|` on the diagonal; with
/// `F = x₃^{p+1} y₃^{p+1} / (|x - ŷ| (|x - ŷ| + |x - y|))` we integrate
/// `(F(x,y) - F(x,x)) / |x - y|` and add
/// `F(x,x) ∫_{S²₊} dS(y)/|x - y| = F(x,x) (4π - ∫_{S²₊} dS(y)/|x - ŷ|)`.
pub fn hemisphere_reduced_energy(quad: &SphereQuadrature, p: i32) -> Result<f64> {
    check_exponent(p)?;
    let [v] = hemisphere_sums(quad, &[p])?;
    Ok(v)
}

fn hemisphere_sums<const K: usize>(quad: &SphereQuadrature, ps: &[i32; K]) -> Result<[f64; K]> {
    if !quad.is_hemisphere() {
        return Err(Error::InvalidArgument("hemisphere form needs an upper-hemisphere quadrature".into()));
    }
    let r = quad.radius();
    let pts = quad.normals();
    let w: Vec<f64> = quad.weights().iter().map(|w| w / (r * r)).collect();
    let n = pts.len();
    let parts: Vec<[f64; K]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = pts[i];
            let mut acc = [0.0; K];
            let mut reflected = 0.0;
            let diag: [f64; K] = std::array::from_fn(|k| x.z.powi(2 * ps[k]) / 4.0);
            let num_x: [f64; K] = std::array::from_fn(|k| x.z.powi(ps[k] + 1));
            for j in 0..n {
                let y = pts[j];
                let yh = Vec3::new(y.x, y.y, -y.z);
                let dh = (x - yh).norm();
                reflected += w[j] / dh;
                if j == i {
                    continue;
                }
                let d = (x - y).norm();
                let denom = dh * (dh + d);
                for k in 0..K {
                    let f = num_x[k] * y.z.powi(ps[k] + 1) / denom;
                    acc[k] += w[j] * (f - diag[k]) / d;
                }
            }
            let ring = 4.0 * PI - reflected;
            std::array::from_fn(|k| w[i] * (acc[k] + diag[k] * ring))
        })
        .collect();
    let scale = 2.0 * r.powi(3) / PI;
    Ok(std::array::from_fn(|k| scale * parts.iter().map(|p| p[k]).sum::<f64>()))
}

/// `W(e₃) - W(vortex)` on `B_R` from the hemisphere form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VortexGap {
    pub radius: f64,
    pub n_theta: usize,
    pub constant_energy: f64,
    pub vortex_energy: f64,
    pub gap: f64,
    /// `gap / R³`.
    pub c2: f64,
    /// `2992π / 11025`, from the Legendre expansion of `1/|x - y|`.
    pub c2_closed_form: f64,
    pub c2_relative_error: f64,
}

/// Closed form of `c₂`: with `cos³θ = (3/5) P₁ + (2/5) P₃`,
/// `W_{B₁}(vortex) = 212π/1225` and `W_{B₁}(e₃) = 4π/9`.
pub const C2_CLOSED_FORM: f64 = 2992.0 * PI / 11025.0;

pub fn vortex_energy_gap(radius: f64, n_theta: usize) -> Result<VortexGap> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("R", format!("must be > 0, got {radius}")));
    }
    let quad = build_hemisphere_quadrature(radius, n_theta)?;
    let [constant_energy, vortex_energy] = hemisphere_sums(&quad, &[1, 3])?;
    let gap = constant_energy - vortex_energy;
    let c2 = gap / radius.powi(3);
    Ok(VortexGap {
        radius,
        n_theta,
        constant_energy,
        vortex_energy,
        gap,
        c2,
        c2_closed_form: C2_CLOSED_FORM,
        c2_relative_error: (c2 - C2_CLOSED_FORM).abs() / C2_CLOSED_FORM,
    })
}

/// What to do when the potential is requested at a quadrature node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodePolicy {
    #[default]
    Error,
    /// Move the evaluation point inward by `1e-9 R`.
    Perturb,
}

/// Scalar potential split into its volume- and surface-charge parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Potential {
    pub volume: f64,
    pub surface: f64,
    pub total: f64,
}

/// `Φ(x) = (1/4π) [∫ -div m(y)/|x-y| dy + ∮ m·n(y)/|x-y| dS(y)]`.
///
/// The volume charge uses [`discrete_divergence`]; the surface trace takes
/// the value of the cell nearest to each node. Cells coinciding with `x`
/// are skipped.
pub fn scalar_potential(
    mesh: &BallMesh,
    m: &Magnetization,
    quad: &SphereQuadrature,
    x: &Vec3,
    policy: NodePolicy,
) -> Result<Potential> {
    m.check_mesh(mesh)?;
    if quad.is_hemisphere() {
        return Err(Error::InvalidArgument("potential needs a full-sphere quadrature".into()));
    }
    let tol = 1e-12 * quad.radius();
    let mut x = *x;
    if quad.points().iter().any(|p| (p - x).norm() < tol) {
        match policy {
            NodePolicy::Error => {
                return Err(Error::InvalidArgument(format!(
                    "potential requested at quadrature node ({}, {}, {})",
                    x.x, x.y, x.z
                )))
            }
            NodePolicy::Perturb => x *= 1.0 - 1e-9,
        }
    }
    let div = discrete_divergence(mesh, m)?;
    let volume = -mesh.weight()
        * mesh
            .centers()
            .iter()
            .zip(&div.values)
            .filter_map(|(c, d)| {
                let r = (x - c).norm();
                (r > tol).then(|| d / r)
            })
            .sum::<f64>();
    let surface: f64 = quad
        .points()
        .iter()
        .zip(quad.normals())
        .zip(quad.weights())
        .map(|((p, n), w)| {
            let trace = m.values()[mesh.nearest_cell(p)].dot(n);
            w * trace / (x - p).norm()
        })
        .sum();
    let (volume, surface) = (volume / (4.0 * PI), surface / (4.0 * PI));
    Ok(Potential {
        volume,
        surface,
        total: volume + surface,
    })
}
