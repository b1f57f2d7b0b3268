//! Discrete energy terms: nonlocal exchange, the generalized pair functional,
//! anisotropy and nonlocal DMI, plus a fused evaluator returning the total
//! energy and its Euclidean gradient in one pass over cell pairs.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Magnetization;
use crate::geometry::{BallMesh, OffsetTable};
use crate::kernels::Kernel;
use crate::magnetostatics::DemagOperator;
use crate::Vec3;

/// Energy terms of one evaluation. Disabled terms are zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub exchange: f64,
    pub magnetostatic: f64,
    pub anisotropy: f64,
    pub dmi: f64,
    pub total: f64,
    pub spacing: f64,
    pub kernel: String,
    /// Ordered cell pairs `(i, j)`, `i ≠ j`.
    pub pair_count: u64,
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

impl EnergyBreakdown {
    pub const CSV_HEADER: [&'static str; 8] =
        ["spacing", "kernel", "pair_count", "exchange", "magnetostatic", "anisotropy", "dmi", "total"];

    pub fn csv_row(&self) -> [String; 8] {
        [
            self.spacing.to_string(),
            self.kernel.clone(),
            self.pair_count.to_string(),
            self.exchange.to_string(),
            self.magnetostatic.to_string(),
            self.anisotropy.to_string(),
            self.dmi.to_string(),
            self.total.to_string(),
        ]
    }
}

/// The function `ψ` comparing two directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    /// `|p - q|²`
    SquaredChord,
    /// `arccos(p·q)²`
    SquaredGeodesic,
}

impl PsiKind {
    #[inline]
    pub fn eval(self, p: &Vec3, q: &Vec3) -> f64 {
        match self {
            PsiKind::SquaredChord => (p - q).norm_squared(),
            PsiKind::SquaredGeodesic => p.dot(q).clamp(-1.0, 1.0).acos().powi(2),
        }
    }

    /// Smallest `Λ` with `|p-q|²/Λ ≤ ψ ≤ Λ|p-q|²` on the sphere.
    pub fn lambda(self) -> f64 {
        match self {
            PsiKind::SquaredChord => 1.0,
            // d ≤ (π/2)|p - q| for the chord-arc pair on S²
            PsiKind::SquaredGeodesic => PI * PI / 4.0,
        }
    }
}

type PairFn = dyn Fn(&Vec3, &Vec3) -> f64 + Send + Sync;

/// The pair weight `K(x, y)`.
#[derive(Clone)]
pub enum PairKernel {
    /// `K(x, y) = j(x - y)` with the exchange kernel.
    KernelJ,
    Custom { name: String, eval: Arc<PairFn> },
}

impl fmt::Debug for PairKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairKernel::KernelJ => write!(f, "KernelJ"),
            PairKernel::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// `ψ` and `K` of the generalized functional, with the comparison constant
/// `Λ` (`K ≥ j/Λ`, `ψ` within `Λ` of the squared chord).
#[derive(Debug, Clone)]
pub struct PairPotential {
    pub psi: PsiKind,
    pub kernel: PairKernel,
    pub lambda: f64,
}

impl PairPotential {
    pub fn new(psi: PsiKind) -> Self {
        PairPotential {
            psi,
            kernel: PairKernel::KernelJ,
            lambda: psi.lambda(),
        }
    }

    pub fn with_custom_kernel(
        mut self,
        name: impl Into<String>,
        lambda: f64,
        eval: impl Fn(&Vec3, &Vec3) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lambda >= 1.0) {
            return Err(Error::param("lambda", format!("must be >= 1, got {lambda}")));
        }
        self.kernel = PairKernel::Custom {
            name: name.into(),
            eval: Arc::new(eval),
        };
        self.lambda = lambda.max(self.psi.lambda());
        Ok(self)
    }
}

/// Kernel values per offset class, zero at the origin. Errors on negative
/// or non-finite values at realized offsets.
fn kernel_table(mesh: &BallMesh, k: &Kernel) -> Result<OffsetTable<f64>> {
    let table = OffsetTable::build(mesh, |d, z| if d == [0, 0, 0] { 0.0 } else { k.raw(&z) });
    if let Some(v) = table.values().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidKernel(format!(
            "kernel `{}` takes value {v} at a cell offset",
            k.name()
        )));
    }
    Ok(table)
}

/// `Σ_i Σ_{j≠i} K_ij ψ(m_i, m_j) w²`, summed per cell then across cells
/// in index order.
fn pair_sum(mesh: &BallMesh, m: &[Vec3], weight: impl Fn(usize, usize) -> f64 + Sync, psi: PsiKind) -> f64 {
    let w = mesh.weight();
    let rows: Vec<f64> = (0..m.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..m.len() {
                if j != i {
                    s += weight(i, j) * psi.eval(&m[i], &m[j]);
                }
            }
            s
        })
        .collect();
    w * w * rows.iter().sum::<f64>()
}

fn keyed_weight<'a>(mesh: &BallMesh, table: &'a OffsetTable<f64>) -> impl Fn(usize, usize) -> f64 + Sync + 'a {
    let keys = table.cell_keys(mesh);
    let zero = table.zero_key();
    move |i, j| table.at(keys[i] + zero - keys[j])
}

/// `J(m) = Σ_{i≠j} j(x_i - x_j) |m_i - m_j|² w²` over ordered pairs.
pub fn exchange_energy(mesh: &BallMesh, k: &Kernel, m: &Magnetization) -> Result<f64> {
    m.check_mesh(mesh)?;
    let table = kernel_table(mesh, k)?;
    Ok(pair_sum(mesh, m.values(), keyed_weight(mesh, &table), PsiKind::SquaredChord))
}

/// `F(m) = Σ_{i≠j} K(x_i, x_j) ψ(m_i, m_j) w²`.
pub fn generalized_energy(mesh: &BallMesh, pot: &PairPotential, k: &Kernel, m: &Magnetization) -> Result<f64> {
    m.check_mesh(mesh)?;
    match &pot.kernel {
        PairKernel::KernelJ => {
            let table = kernel_table(mesh, k)?;
            Ok(pair_sum(mesh, m.values(), keyed_weight(mesh, &table), pot.psi))
        }
        PairKernel::Custom { name, eval } => {
            let c = mesh.centers();
            let bad = (0..c.len()).into_par_iter().find_any(|&i| {
                (0..c.len()).any(|j| j != i && !(eval(&c[i], &c[j]) >= 0.0))
            });
            if let Some(i) = bad {
                return Err(Error::InvalidKernel(format!(
                    "pair kernel `{name}` is negative or undefined for a pair at cell {i}"
                )));
            }
            Ok(pair_sum(mesh, m.values(), |i, j| eval(&c[i], &c[j]), pot.psi))
        }
    }
}

type DirFn = dyn Fn(&Vec3) -> f64 + Send + Sync;
type DirGradFn = dyn Fn(&Vec3) -> Vec3 + Send + Sync;

/// A nonnegative anisotropy density `φ: S² -> [0, ∞)` with its gradient.
#[derive(Clone)]
pub struct Anisotropy {
    name: String,
    phi: Arc<DirFn>,
    grad: Arc<DirGradFn>,
    lipschitz: f64,
}

impl fmt::Debug for Anisotropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Anisotropy")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Anisotropy {
    /// `φ(p) = K (1 - (p·e)²)`, easy axis `e`.
    pub fn uniaxial(axis: Vec3, strength: f64) -> Result<Self> {
        if !(axis.norm() > 0.0) {
            return Err(Error::param("axis", "must be nonzero"));
        }
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::param("strength", format!("must be finite and >= 0, got {strength}")));
        }
        let e = axis.normalize();
        Ok(Anisotropy {
            name: "uniaxial".into(),
            phi: Arc::new(move |p| strength * (1.0 - p.dot(&e).powi(2))),
            grad: Arc::new(move |p| -2.0 * strength * p.dot(&e) * e),
            lipschitz: 2.0 * strength,
        })
    }

    pub fn custom(
        name: impl Into<String>,
        lipschitz: f64,
        phi: impl Fn(&Vec3) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&Vec3) -> Vec3 + Send + Sync + 'static,
    ) -> Self {
        Anisotropy {
            name: name.into(),
            phi: Arc::new(phi),
            grad: Arc::new(grad),
            lipschitz,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, p: &Vec3) -> f64 {
        (self.phi)(p)
    }

    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        (self.grad)(p)
    }
}

/// `A(m) = Σ φ(m_i) w`.
pub fn anisotropy_energy(mesh: &BallMesh, phi: &Anisotropy, m: &Magnetization) -> Result<f64> {
    m.check_mesh(mesh)?;
    let mut total = 0.0;
    for (i, v) in m.values().iter().enumerate() {
        let a = phi.eval(v);
        if !(a >= 0.0) {
            return Err(Error::InvalidArgument(format!("anisotropy density is {a} at cell {i}")));
        }
        total += a;
    }
    Ok(mesh.weight() * total)
}

type VecFn = dyn Fn(&Vec3) -> Vec3 + Send + Sync;

/// An odd vector kernel `μ` for the DMI term.
#[derive(Clone)]
pub struct DmiKernel {
    name: String,
    mu: Arc<VecFn>,
}

impl fmt::Debug for DmiKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DmiKernel").field("name", &self.name).finish()
    }
}

impl DmiKernel {
    /// `μ(z) = D z exp(-|z|²/ℓ²) / ℓ⁴`, odd and integrable.
    pub fn gaussian(strength: f64, length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::param("length", format!("must be > 0, got {length}")));
        }
        if !strength.is_finite() {
            return Err(Error::param("strength", "must be finite"));
        }
        let l2 = length * length;
        Ok(DmiKernel {
            name: "gaussian".into(),
            mu: Arc::new(move |z| z * (strength * (-z.norm_squared() / l2).exp() / (l2 * l2))),
        })
    }

    pub fn custom(name: impl Into<String>, mu: impl Fn(&Vec3) -> Vec3 + Send + Sync + 'static) -> Self {
        DmiKernel {
            name: name.into(),
            mu: Arc::new(mu),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, z: &Vec3) -> Vec3 {
        (self.mu)(z)
    }

    /// Samples `μ(-z) = -μ(z)`; an error names the first violation.
    pub fn check_odd(&self, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let r: f64 = 10f64.powf(rng.random_range(-2.0..1.0));
            let z = crate::fields::random_unit_vector(&mut rng) * r;
            let (a, b) = (self.eval(&z), self.eval(&-z));
            let scale = a.norm().max(b.norm()).max(1e-300);
            if (a + b).norm() > 1e-12 * scale {
                return Err(Error::InvalidKernel(format!(
                    "DMI kernel `{}` is not odd at z = ({:.3}, {:.3}, {:.3})",
                    self.name, z.x, z.y, z.z
                )));
            }
        }
        Ok(())
    }
}

fn dmi_table(mesh: &BallMesh, mu: &DmiKernel) -> OffsetTable<[f64; 3]> {
    OffsetTable::build(mesh, |d, z| {
        if d == [0, 0, 0] {
            [0.0; 3]
        } else {
            let v = mu.eval(&z);
            [v.x, v.y, v.z]
        }
    })
}

/// `D(m) = Σ_{i≠j} μ(x_i - x_j)·(m_i × m_j) w²`.
pub fn dmi_energy(mesh: &BallMesh, mu: &DmiKernel, m: &Magnetization) -> Result<f64> {
    m.check_mesh(mesh)?;
    mu.check_odd(256, 11)?;
    let table = dmi_table(mesh, mu);
    let keys = table.cell_keys(mesh);
    let zero = table.zero_key();
    let v = m.values();
    let rows: Vec<f64> = (0..v.len())
        .into_par_iter()
        .map(|i| {
            let base = keys[i] + zero;
            let mut s = 0.0;
            for (kj, mj) in keys.iter().zip(v) {
                let t = table.at(base - kj);
                s += Vec3::new(t[0], t[1], t[2]).dot(&v[i].cross(mj));
            }
            s
        })
        .collect();
    Ok(mesh.weight().powi(2) * rows.iter().sum::<f64>())
}

/// `Σ_d |μ(d h)| h³` over every nonzero offset the mesh can realize; an
/// upper bound for `max_i Σ_j |μ(x_i - x_j)| w`.
pub fn dmi_l1_norm(mesh: &BallMesh, mu: &DmiKernel) -> f64 {
    let table = dmi_table(mesh, mu);
    mesh.weight() * table.values().iter().map(|t| Vec3::new(t[0], t[1], t[2]).norm()).sum::<f64>()
}

/// Which terms enter the total energy.
#[derive(Debug, Clone, Default)]
pub struct EnergyConfig {
    pub exchange: Option<Kernel>,
    pub magnetostatic: bool,
    pub anisotropy: Option<Anisotropy>,
    pub dmi: Option<DmiKernel>,
}

impl EnergyConfig {
    /// Exchange with kernel `k` plus the magnetostatic self-energy.
    pub fn exchange_magnetostatic(k: Kernel) -> Self {
        EnergyConfig {
            exchange: Some(k),
            magnetostatic: true,
            ..Default::default()
        }
    }

    pub fn exchange_only(k: Kernel) -> Self {
        EnergyConfig {
            exchange: Some(k),
            ..Default::default()
        }
    }

    pub fn magnetostatic_only() -> Self {
        EnergyConfig {
            magnetostatic: true,
            ..Default::default()
        }
    }

    pub fn kernel_name(&self) -> String {
        self.exchange.as_ref().map_or_else(|| "none".to_string(), |k| k.name().to_string())
    }
}

/// Precomputed tables for repeated energy/gradient evaluation on one mesh.
pub struct EnergyModel {
    mesh_id: u64,
    cells: usize,
    weight: f64,
    spacing: f64,
    kernel_name: String,
    keys: Vec<usize>,
    zero: usize,
    exchange: Option<OffsetTable<f64>>,
    demag: Option<DemagOperator>,
    dmi: Option<OffsetTable<[f64; 3]>>,
    anisotropy: Option<Anisotropy>,
}

/// Energy terms and, if requested, the gradient.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub energy: EnergyBreakdown,
    pub gradient: Option<Vec<Vec3>>,
}

#[derive(Clone, Copy, Default)]
struct CellSums {
    exchange: f64,
    exchange_grad: Vec3,
    field: Vec3,
    dmi: f64,
    dmi_grad: Vec3,
}

impl EnergyModel {
    pub fn new(mesh: &BallMesh, config: &EnergyConfig) -> Result<Self> {
        let exchange = config.exchange.as_ref().map(|k| kernel_table(mesh, k)).transpose()?;
        if let Some(mu) = &config.dmi {
            mu.check_odd(256, 11)?;
        }
        let dmi = config.dmi.as_ref().map(|mu| dmi_table(mesh, mu));
        let demag = config.magnetostatic.then(|| DemagOperator::new(mesh));
        // every table shares the offset layout, so one key set serves all
        let layout: OffsetTable<u8> = OffsetTable::build(mesh, |_, _| 0);
        Ok(EnergyModel {
            mesh_id: mesh.id(),
            cells: mesh.cell_count(),
            weight: mesh.weight(),
            spacing: mesh.spacing(),
            kernel_name: config.kernel_name(),
            keys: layout.cell_keys(mesh),
            zero: layout.zero_key(),
            exchange,
            demag,
            dmi,
            anisotropy: config.anisotropy.clone(),
        })
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn energy(&self, m: &Magnetization) -> Result<EnergyBreakdown> {
        Ok(self.evaluate(m, false)?.energy)
    }

    pub fn energy_and_gradient(&self, m: &Magnetization) -> Result<(EnergyBreakdown, Vec<Vec3>)> {
        let e = self.evaluate(m, true)?;
        Ok((e.energy, e.gradient.expect("requested")))
    }

    /// One pass over all ordered pairs.
    ///
    /// Gradients: exchange `4 Σ_j j_ij (m_i - m_j) w²`, magnetostatic
    /// `-2 h_i w`, anisotropy `∇φ(m_i) w`, DMI `2 Σ_j m_j × μ(x_i - x_j) w²`.
    pub fn evaluate(&self, m: &Magnetization, with_gradient: bool) -> Result<Evaluation> {
        if m.mesh_id() != self.mesh_id || m.len() != self.cells {
            return Err(Error::InvalidArgument("field belongs to a different mesh".into()));
        }
        let start = Instant::now();
        let v = m.values();
        let w = self.weight;
        let sums: Vec<CellSums> = (0..v.len()).into_par_iter().map(|i| self.cell_sums(v, i)).collect();

        let mut exchange = 0.0;
        let mut magnetostatic = 0.0;
        let mut dmi = 0.0;
        let mut anisotropy = 0.0;
        for (i, s) in sums.iter().enumerate() {
            exchange += s.exchange;
            dmi += s.dmi;
            if self.demag.is_some() {
                let h = s.field * w - v[i] / 3.0;
                magnetostatic -= h.dot(&v[i]);
            }
            if let Some(a) = &self.anisotropy {
                anisotropy += a.eval(&v[i]);
            }
        }
        let exchange = exchange * w * w;
        let magnetostatic = magnetostatic * w;
        let anisotropy = anisotropy * w;
        let dmi = dmi * w * w;

        let gradient = with_gradient.then(|| {
            sums.iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut g = 4.0 * w * w * s.exchange_grad + 2.0 * w * w * s.dmi_grad;
                    if self.demag.is_some() {
                        g -= 2.0 * w * (s.field * w - v[i] / 3.0);
                    }
                    if let Some(a) = &self.anisotropy {
                        g += w * a.gradient(&v[i]);
                    }
                    g
                })
                .collect()
        });
        let n = self.cells as u64;
        Ok(Evaluation {
            energy: EnergyBreakdown {
                exchange,
                magnetostatic,
                anisotropy,
                dmi,
                total: exchange + magnetostatic + anisotropy + dmi,
                spacing: self.spacing,
                kernel: self.kernel_name.clone(),
                pair_count: n * n.saturating_sub(1),
                elapsed_seconds: start.elapsed().as_secs_f64(),
            },
            gradient,
        })
    }

    fn cell_sums(&self, v: &[Vec3], i: usize) -> CellSums {
        let base = self.keys[i] + self.zero;
        let mi = v[i];
        let mut s = CellSums::default();
        if let Some(t) = &self.exchange {
            let vals = t.values();
            let (mut e, mut gx, mut gy, mut gz) = (0.0, 0.0, 0.0, 0.0);
            for (kj, mj) in self.keys.iter().zip(v) {
                let k = vals[base - kj];
                let (dx, dy, dz) = (mi.x - mj.x, mi.y - mj.y, mi.z - mj.z);
                e += k * (dx * dx + dy * dy + dz * dz);
                gx += k * dx;
                gy += k * dy;
                gz += k * dz;
            }
            s.exchange = e;
            s.exchange_grad = Vec3::new(gx, gy, gz);
        }
        if let Some(op) = &self.demag {
            let vals = op.table().values();
            let (mut hx, mut hy, mut hz) = (0.0, 0.0, 0.0);
            for (kj, m) in self.keys.iter().zip(v) {
                let t = &vals[base - kj];
                hx += t[0] * m.x + t[3] * m.y + t[4] * m.z;
                hy += t[3] * m.x + t[1] * m.y + t[5] * m.z;
                hz += t[4] * m.x + t[5] * m.y + t[2] * m.z;
            }
            s.field = Vec3::new(hx, hy, hz);
        }
        if let Some(t) = &self.dmi {
            let vals = t.values();
            let mut d = 0.0;
            let mut g = Vec3::zeros();
            for (kj, mj) in self.keys.iter().zip(v) {
                let mu = vals[base - kj];
                let mu = Vec3::new(mu[0], mu[1], mu[2]);
                let c = mj.cross(&mu);
                // μ·(m_i × m_j) = m_i·(m_j × μ)
                d += mi.dot(&c);
                g += c;
            }
            s.dmi = d;
            s.dmi_grad = g;
        }
        s
    }
}

/// Total energy with the enabled terms.
pub fn total_energy(mesh: &BallMesh, config: &EnergyConfig, m: &Magnetization) -> Result<EnergyBreakdown> {
    m.check_mesh(mesh)?;
    EnergyModel::new(mesh, config)?.energy(m)
}
