//! Unit-vector fields on a [`BallMesh`]: constants, the divergence-free
//! vortex configuration, random fields, averages and I/O.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::BallMesh;
use crate::Vec3;

pub const UNIT_TOL: f64 = 1e-12;

/// Per-cell 3-vectors tied to one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Magnetization {
    mesh_id: u64,
    values: Vec<Vec3>,
}

impl Magnetization {
    /// Wraps `values`, checking length and the unit-norm constraint.
    pub fn new(mesh: &BallMesh, values: Vec<Vec3>) -> Result<Self> {
        let m = Self::from_raw(mesh, values)?;
        if let Some((i, v)) = m.values.iter().enumerate().find(|(_, v)| (v.norm() - 1.0).abs() > UNIT_TOL) {
            return Err(Error::InvalidArgument(format!(
                "cell {i} has |m| = {} (must be 1)",
                v.norm()
            )));
        }
        Ok(m)
    }

    /// Wraps arbitrary vectors (no unit-norm check). Used for the linear
    /// magnetostatic operators, which accept any square-integrable field.
    pub fn from_raw(mesh: &BallMesh, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != mesh.cell_count() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but mesh has {} cells",
                values.len(),
                mesh.cell_count()
            )));
        }
        Ok(Magnetization {
            mesh_id: mesh.id(),
            values,
        })
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<Vec3> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Vec3] {
        &mut self.values
    }

    pub fn check_mesh(&self, mesh: &BallMesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.cell_count() {
            return Err(Error::InvalidArgument("field belongs to a different mesh".into()));
        }
        Ok(())
    }

    /// Largest deviation of `|m_i|` from 1.
    pub fn max_unit_deviation(&self) -> f64 {
        self.values.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Pointwise `m -> -m`.
    pub fn negated(&self) -> Magnetization {
        Magnetization {
            mesh_id: self.mesh_id,
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    /// Applies the same linear map to every vector.
    pub fn mapped(&self, f: impl Fn(&Vec3) -> Vec3) -> Magnetization {
        Magnetization {
            mesh_id: self.mesh_id,
            values: self.values.iter().map(f).collect(),
        }
    }

    /// Volume-weighted average. Weights are uniform, so this is the plain
    /// mean over cells.
    pub fn mean(&self) -> Vec3 {
        let sum = self.values.iter().fold(Vec3::zeros(), |acc, v| acc + v);
        sum / self.values.len() as f64
    }
}

pub fn constant_field(mesh: &BallMesh, sigma: Vec3) -> Result<Magnetization> {
    if (sigma.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidArgument(format!("sigma must be a unit vector, |sigma| = {}", sigma.norm())));
    }
    Magnetization::from_raw(mesh, vec![sigma; mesh.cell_count()])
}

/// Vortex configuration on `B_R`: with `t = |x_perp|^2 / R^2`,
/// `m = (-x_2/R sqrt(2-t), x_1/R sqrt(2-t), 1-t)`. Unit length since
/// `t(2-t) + (1-t)^2 = 1`.
pub fn vortex_value(x: &Vec3, radius: f64) -> Vec3 {
    let t = (x.x * x.x + x.y * x.y) / (radius * radius);
    let g = (2.0 - t).sqrt();
    Vec3::new(-x.y / radius * g, x.x / radius * g, 1.0 - t)
}

/// Jacobian `d m_a / d x_b` of the unit-ball vortex (no x_3 dependence).
pub fn vortex_jacobian(x: &Vec3) -> [[f64; 3]; 3] {
    let (x1, x2) = (x.x, x.y);
    let g = (2.0 - x1 * x1 - x2 * x2).sqrt();
    [
        [x1 * x2 / g, -g + x2 * x2 / g, 0.0],
        [g - x1 * x1 / g, -x1 * x2 / g, 0.0],
        [-2.0 * x1, -2.0 * x2, 0.0],
    ]
}

pub fn vortex_field(mesh: &BallMesh) -> Result<Magnetization> {
    let r = mesh.radius();
    let mut values = Vec::with_capacity(mesh.cell_count());
    for c in mesh.centers() {
        let v = vortex_value(c, r);
        let dev = (v.norm() - 1.0).abs();
        if dev >= UNIT_TOL {
            return Err(Error::Internal(format!("vortex value off the sphere by {dev}")));
        }
        values.push(v.normalize());
    }
    Magnetization::from_raw(mesh, values)
}

/// The vortex on the unit ball (`m(Rx)` rescaled to `B_1`).
pub fn rescaled_vortex_field(unit_mesh: &BallMesh) -> Result<Magnetization> {
    if unit_mesh.radius() != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "rescaled vortex needs a unit-ball mesh, got R = {}",
            unit_mesh.radius()
        )));
    }
    vortex_field(unit_mesh)
}

/// I.i.d. uniform directions (normalized standard Gaussians), seeded.
pub fn random_unit_field(mesh: &BallMesh, seed: u64) -> Magnetization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..mesh.cell_count()).map(|_| random_unit_vector(&mut rng)).collect();
    Magnetization {
        mesh_id: mesh.id(),
        values,
    }
}

pub(crate) fn random_unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// `1 - |<m>|^2`, the normalized L2 distance of `m` from its mean.
///
/// Also checks the identity `||m - <m>||^2 = |Ω| (1 - |<m>|^2)`, which only
/// holds for unit fields.
pub fn uniformity_deficit(m: &Magnetization) -> Result<f64> {
    let mean = m.mean();
    let deficit = (1.0 - mean.norm_squared()).clamp(0.0, 1.0);
    let n = m.len() as f64;
    let spread: f64 = m.values.iter().map(|v| (v - mean).norm_squared()).sum();
    let expected = n * (1.0 - mean.norm_squared());
    let scale = n.max(1.0);
    if (spread - expected).abs() > 1e-10 * scale {
        return Err(Error::InvalidArgument(format!(
            "mean-deviation identity violated ({spread} vs {expected}); field is not unit-valued"
        )));
    }
    Ok(deficit)
}

/// `||m - <m>||^2_{L2}` with the mesh weights.
pub fn l2_deviation_sq(mesh: &BallMesh, m: &Magnetization) -> f64 {
    let mean = m.mean();
    mesh.weight() * m.values.iter().map(|v| (v - mean).norm_squared()).sum::<f64>()
}

/// Discrete divergence and its volume-weighted L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub values: Vec<f64>,
    pub l2_norm: f64,
}

/// Central differences where both neighbours exist, one-sided otherwise.
pub fn discrete_divergence(mesh: &BallMesh, m: &Magnetization) -> Result<Divergence> {
    m.check_mesh(mesh)?;
    let h = mesh.spacing();
    let values: Vec<f64> = (0..mesh.cell_count())
        .into_par_iter()
        .map(|i| {
            let g = mesh.grid_index(i);
            let mut div = 0.0;
            for axis in 0..3 {
                let mut plus = g;
                plus[axis] += 1;
                let mut minus = g;
                minus[axis] -= 1;
                let comp = |c: usize| m.values[c][axis];
                div += match (mesh.cell_at(plus), mesh.cell_at(minus)) {
                    (Some(p), Some(q)) => (comp(p) - comp(q)) / (2.0 * h),
                    (Some(p), None) => (comp(p) - comp(i)) / h,
                    (None, Some(q)) => (comp(i) - comp(q)) / h,
                    (None, None) => 0.0,
                };
            }
            div
        })
        .collect();
    let l2_norm = (mesh.weight() * values.iter().map(|d| d * d).sum::<f64>()).sqrt();
    Ok(Divergence { values, l2_norm })
}

/// `||m_•||^2_{H^1(B_1)}` split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H1Norm {
    pub l2_part: f64,
    pub gradient_part: f64,
    pub total: f64,
}

/// H^1 norm of the unit-ball vortex by cell quadrature, with the
/// analytic Jacobian.
pub fn h1_norm_vortex(unit_mesh: &BallMesh) -> Result<H1Norm> {
    let m = rescaled_vortex_field(unit_mesh)?;
    let w = unit_mesh.weight();
    let l2_part = w * m.values.iter().map(|v| v.norm_squared()).sum::<f64>();
    let gradient_part = w * unit_mesh
        .centers()
        .iter()
        .map(|x| vortex_jacobian(x).iter().flatten().map(|d| d * d).sum::<f64>())
        .sum::<f64>();
    Ok(H1Norm {
        l2_part,
        gradient_part,
        total: l2_part + gradient_part,
    })
}

/// Writes `x,y,z,m1,m2,m3,weight` rows. Floats use the shortest
/// round-tripping representation, so a reload is bit-identical.
pub fn write_field_csv(path: &Path, mesh: &BallMesh, m: &Magnetization) -> Result<()> {
    m.check_mesh(mesh)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "z", "m1", "m2", "m3", "weight"])?;
    for (c, v) in mesh.centers().iter().zip(m.values()) {
        w.write_record(
            [c.x, c.y, c.z, v.x, v.y, v.z, mesh.weight()]
                .iter()
                .map(|f| f.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a field CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecord {
    pub positions: Vec<Vec3>,
    pub values: Vec<Vec3>,
    pub weights: Vec<f64>,
}

pub fn read_field_csv(path: &Path) -> Result<FieldRecord> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rec = FieldRecord {
        positions: Vec::new(),
        values: Vec::new(),
        weights: Vec::new(),
    };
    for row in r.records() {
        let row = row?;
        let f: Vec<f64> = row
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number `{s}`: {e}"))))
            .collect::<Result<_>>()?;
        if f.len() != 7 {
            return Err(Error::InvalidArgument(format!("expected 7 columns, got {}", f.len())));
        }
        rec.positions.push(Vec3::new(f[0], f[1], f[2]));
        rec.values.push(Vec3::new(f[3], f[4], f[5]));
        rec.weights.push(f[6]);
    }
    Ok(rec)
}

/// Reloads a field written by [`write_field_csv`] onto `mesh`, checking
/// that the cell centers agree.
pub fn load_field_csv(path: &Path, mesh: &BallMesh) -> Result<Magnetization> {
    let rec = read_field_csv(path)?;
    if rec.positions.len() != mesh.cell_count()
        || rec.positions.iter().zip(mesh.centers()).any(|(a, b)| a != b)
    {
        return Err(Error::InvalidArgument(format!(
            "{} does not match the mesh cell centers",
            path.display()
        )));
    }
    Magnetization::from_raw(mesh, rec.values)
}

/// Writes the in-plane vectors of the cell layer just above `z = 0` and a
/// gnuplot script drawing them.
pub fn write_equatorial_slice(data_path: &Path, script_path: &Path, mesh: &BallMesh, m: &Magnetization) -> Result<()> {
    m.check_mesh(mesh)?;
    let h = mesh.spacing();
    let mut out = BufWriter::new(File::create(data_path)?);
    writeln!(out, "# x y m1 m2 m3 (layer z = {})", 0.5 * h)?;
    for (i, (c, v)) in mesh.centers().iter().zip(m.values()).enumerate() {
        if mesh.grid_index(i)[2] == 0 {
            writeln!(out, "{} {} {} {} {}", c.x, c.y, v.x, v.y, v.z)?;
        }
    }
    out.flush()?;
    let data_name = data_path.file_name().and_then(|s| s.to_str()).unwrap_or("slice.dat");
    let mut gp = BufWriter::new(File::create(script_path)?);
    writeln!(gp, "set size ratio -1")?;
    writeln!(gp, "set xrange [{}:{}]", -mesh.radius(), mesh.radius())?;
    writeln!(gp, "set yrange [{}:{}]", -mesh.radius(), mesh.radius())?;
    writeln!(gp, "set palette defined (-1 'blue', 0 'white', 1 'red')")?;
    writeln!(gp, "set cbrange [-1:1]")?;
    writeln!(gp, "scale = {}", 0.8 * h)?;
    writeln!(
        gp,
        "plot '{data_name}' using 1:2:($3*scale):($4*scale):5 with vectors head filled size screen 0.008,20 lc palette notitle"
    )?;
    gp.flush()?;
    Ok(())
}
