//! Python bindings: kernels, meshes, fields, energies, minimization and the
//! regime criteria. Vectors cross the boundary as 3-tuples.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nlmag::energies::{Anisotropy, DmiKernel, EnergyBreakdown, EnergyConfig};
use nlmag::kernels::{self, J5Params, KernelSpec, Tail};
use nlmag::minimize::{default_inits, InitKind, MinimizeOptions, StepRule};
use nlmag::Vec3;

fn err(e: nlmag::Error) -> PyErr {
    match e {
        nlmag::Error::Io(_) | nlmag::Error::Csv(_) | nlmag::Error::Json(_) | nlmag::Error::Internal(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vec3(v: (f64, f64, f64)) -> Vec3 {
    Vec3::new(v.0, v.1, v.2)
}

fn tuple(v: &Vec3) -> (f64, f64, f64) {
    (v.x, v.y, v.z)
}

#[pyclass(name = "Kernel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyKernel(kernels::Kernel);

fn builtin(spec: KernelSpec) -> PyResult<PyKernel> {
    kernels::make_builtin_kernel(&spec).map(PyKernel).map_err(err)
}

#[pymethods]
impl PyKernel {
    #[staticmethod]
    fn fractional(s: f64) -> PyResult<Self> {
        builtin(KernelSpec::Fractional { s })
    }

    /// `|z|^{-(3+2s)}` on the unit ball; outside either zero or
    /// `exp(-tail_rate (|z| - 1))`.
    #[staticmethod]
    #[pyo3(signature = (s, tail_rate=None))]
    fn truncated_fractional(s: f64, tail_rate: Option<f64>) -> PyResult<Self> {
        let tail = tail_rate.map_or(Tail::Zero, |rate| Tail::Exponential { rate });
        builtin(KernelSpec::TruncatedFractional { s, tail })
    }

    #[staticmethod]
    fn constant_one() -> PyResult<Self> {
        builtin(KernelSpec::ConstantOne)
    }

    #[staticmethod]
    fn gaussian4() -> PyResult<Self> {
        builtin(KernelSpec::Gaussian4)
    }

    #[staticmethod]
    fn rogers(gamma: f64) -> PyResult<Self> {
        builtin(KernelSpec::Rogers { gamma })
    }

    #[staticmethod]
    fn power(exponent: f64) -> PyResult<Self> {
        builtin(KernelSpec::Power { exponent })
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        self.0.scaled(factor).map(PyKernel).map_err(err)
    }

    #[pyo3(signature = (c, s, r0=None))]
    fn with_lower_bound(&self, c: f64, s: f64, r0: Option<f64>) -> Self {
        PyKernel(self.0.clone().with_j5(J5Params { c, s, r0 }))
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    /// `j(z)`; `inf` at the origin of singular kernels.
    fn value(&self, z: (f64, f64, f64)) -> f64 {
        self.0.value(&vec3(z)).finite().unwrap_or(f64::INFINITY)
    }

    /// `∫ min{1, |z|²} j(z) dz`, or `None` when it diverges.
    fn levy_constant(&self) -> PyResult<Option<f64>> {
        kernels::levy_constant(&self.0, &kernels::RadialQuadrature::default())
            .map(|l| l.value)
            .map_err(err)
    }

    fn essential_infimum(&self, diameter: f64) -> PyResult<f64> {
        kernels::essential_infimum(&self.0, diameter).map(|q| q.value).map_err(err)
    }

    fn report(&self, diameters: Vec<f64>, seed: u64) -> PyResult<String> {
        kernels::kernel_report(&self.0, &diameters, seed)
            .map(|r| r.to_table())
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Kernel({})", self.0.name())
    }
}

#[pyclass(name = "BallMesh", frozen)]
struct PyBallMesh(nlmag::geometry::BallMesh);

#[pymethods]
impl PyBallMesh {
    #[new]
    fn new(radius: f64, spacing: f64) -> PyResult<Self> {
        nlmag::geometry::build_ball_mesh(radius, spacing).map(PyBallMesh).map_err(err)
    }

    #[staticmethod]
    fn per_diameter(radius: f64, cells_per_diameter: usize) -> PyResult<Self> {
        nlmag::geometry::build_ball_mesh_per_diameter(radius, cells_per_diameter)
            .map(PyBallMesh)
            .map_err(err)
    }

    /// Same cells, weights rescaled so the total volume is `|B_R|`.
    fn normalized(&self) -> Self {
        PyBallMesh(self.0.with_normalized_volume())
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.0.radius()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.0.weight()
    }

    #[getter]
    fn total_volume(&self) -> f64 {
        self.0.total_volume()
    }

    fn __len__(&self) -> usize {
        self.0.cell_count()
    }

    fn centers(&self) -> Vec<(f64, f64, f64)> {
        self.0.centers().iter().map(tuple).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "BallMesh(radius={}, spacing={}, cells={})",
            self.0.radius(),
            self.0.spacing(),
            self.0.cell_count()
        )
    }
}

#[pyclass(name = "Magnetization", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMagnetization(nlmag::fields::Magnetization);

#[pymethods]
impl PyMagnetization {
    /// Unit vectors, one per cell of `mesh`.
    #[new]
    fn new(mesh: &PyBallMesh, values: Vec<(f64, f64, f64)>) -> PyResult<Self> {
        nlmag::fields::Magnetization::new(&mesh.0, values.into_iter().map(vec3).collect())
            .map(PyMagnetization)
            .map_err(err)
    }

    #[staticmethod]
    fn constant(mesh: &PyBallMesh, sigma: (f64, f64, f64)) -> PyResult<Self> {
        nlmag::fields::constant_field(&mesh.0, vec3(sigma))
            .map(PyMagnetization)
            .map_err(err)
    }

    #[staticmethod]
    fn vortex(mesh: &PyBallMesh) -> PyResult<Self> {
        nlmag::fields::vortex_field(&mesh.0).map(PyMagnetization).map_err(err)
    }

    #[staticmethod]
    fn random(mesh: &PyBallMesh, seed: u64) -> Self {
        PyMagnetization(nlmag::fields::random_unit_field(&mesh.0, seed))
    }

    fn values(&self) -> Vec<(f64, f64, f64)> {
        self.0.values().iter().map(tuple).collect()
    }

    fn mean(&self) -> (f64, f64, f64) {
        tuple(&self.0.mean())
    }

    /// `1 - |<m>|²`.
    fn uniformity_deficit(&self) -> PyResult<f64> {
        nlmag::fields::uniformity_deficit(&self.0).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

fn breakdown<'py>(py: Python<'py>, e: &EnergyBreakdown) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("exchange", e.exchange)?;
    d.set_item("magnetostatic", e.magnetostatic)?;
    d.set_item("anisotropy", e.anisotropy)?;
    d.set_item("dmi", e.dmi)?;
    d.set_item("total", e.total)?;
    d.set_item("pair_count", e.pair_count)?;
    Ok(d)
}

fn energy_config(
    kernel: Option<&PyKernel>,
    magnetostatic: bool,
    anisotropy: Option<((f64, f64, f64), f64)>,
    dmi: Option<(f64, f64)>,
) -> PyResult<EnergyConfig> {
    Ok(EnergyConfig {
        exchange: kernel.map(|k| k.0.clone()),
        magnetostatic,
        anisotropy: anisotropy
            .map(|(axis, strength)| Anisotropy::uniaxial(vec3(axis), strength))
            .transpose()
            .map_err(err)?,
        dmi: dmi
            .map(|(strength, length)| DmiKernel::gaussian(strength, length))
            .transpose()
            .map_err(err)?,
    })
}

#[pyfunction]
fn exchange_energy(mesh: &PyBallMesh, kernel: &PyKernel, m: &PyMagnetization) -> PyResult<f64> {
    nlmag::energies::exchange_energy(&mesh.0, &kernel.0, &m.0).map_err(err)
}

#[pyfunction]
fn magnetostatic_energy(mesh: &PyBallMesh, m: &PyMagnetization) -> PyResult<f64> {
    nlmag::magnetostatics::magnetostatic_energy(&mesh.0, &m.0).map_err(err)
}

/// Energy terms of `m`. `anisotropy = (axis, strength)`,
/// `dmi = (strength, length)`.
#[pyfunction]
#[pyo3(signature = (mesh, m, kernel=None, magnetostatic=true, anisotropy=None, dmi=None))]
fn total_energy<'py>(
    py: Python<'py>,
    mesh: &PyBallMesh,
    m: &PyMagnetization,
    kernel: Option<&PyKernel>,
    magnetostatic: bool,
    anisotropy: Option<((f64, f64, f64), f64)>,
    dmi: Option<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = energy_config(kernel, magnetostatic, anisotropy, dmi)?;
    let e = py
        .detach(|| nlmag::energies::total_energy(&mesh.0, &config, &m.0))
        .map_err(err)?;
    breakdown(py, &e)
}

/// Minimizes exchange + magnetostatic energy from `constant_e3`, the
/// vortex and `restarts` random fields. Returns `(minimizer, summary)`.
#[pyfunction]
#[pyo3(signature = (mesh, kernel, max_iters=2000, grad_tol=1e-6, restarts=3, seed=0))]
fn minimize<'py>(
    py: Python<'py>,
    mesh: &PyBallMesh,
    kernel: &PyKernel,
    max_iters: usize,
    grad_tol: f64,
    restarts: usize,
    seed: u64,
) -> PyResult<(PyMagnetization, Bound<'py, PyDict>)> {
    let config = EnergyConfig::exchange_magnetostatic(kernel.0.clone());
    let opts = MinimizeOptions {
        max_iters,
        grad_tol,
        step_rule: StepRule::BarzilaiBorweinWithBacktracking,
        init_kinds: default_inits(restarts, seed),
        record_trace: false,
    };
    let r = py
        .detach(|| nlmag::minimize::minimize(&mesh.0, &config, &opts))
        .map_err(err)?;
    let d = breakdown(py, &r.energy)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("converged", r.converged)?;
    d.set_item("grad_norm", r.grad_norm)?;
    d.set_item("init", r.init_kind.label())?;
    d.set_item(
        "runs",
        r.runs
            .iter()
            .map(|s| (s.init.label(), s.energy, s.converged))
            .collect::<Vec<_>>(),
    )?;
    Ok((PyMagnetization(r.minimizer), d))
}

/// `(c2, W(e3), W(vortex))` on `B_R` from the hemisphere form.
#[pyfunction]
#[pyo3(signature = (radius, n_theta=128))]
fn vortex_energy_gap(py: Python<'_>, radius: f64, n_theta: usize) -> PyResult<(f64, f64, f64)> {
    let g = py
        .detach(|| nlmag::magnetostatics::vortex_energy_gap(radius, n_theta))
        .map_err(err)?;
    Ok((g.c2, g.constant_energy, g.vortex_energy))
}

#[pyfunction]
fn poincare_constant(kernel: &PyKernel, radius: f64) -> PyResult<f64> {
    nlmag::regimes::poincare_constant(&kernel.0, radius)
        .map(|c| c.value)
        .map_err(err)
}

/// Intervals `(lo, hi)` of `[r_min, r_max]` where `C_R < 3`.
#[pyfunction]
#[pyo3(signature = (kernel, r_min, r_max, points=200))]
fn constant_regime_set(kernel: &PyKernel, r_min: f64, r_max: f64, points: usize) -> PyResult<Vec<(f64, f64)>> {
    nlmag::regimes::constant_regime_set(&kernel.0, r_min, r_max, points)
        .map(|v| v.iter().map(|i| (i.lo, i.hi)).collect())
        .map_err(err)
}

#[pyfunction]
fn critical_radius_small(kernel: &PyKernel) -> PyResult<f64> {
    nlmag::regimes::critical_radius_small(&kernel.0)
        .map(|r| r.r_star)
        .map_err(err)
}

/// `(R, best_energy, constant_energy, deficit, classification)` per radius.
#[pyfunction]
#[pyo3(signature = (kernel, radii, cells_per_diameter=16, max_iters=300, grad_tol=1e-6, restarts=3, seed=0))]
#[allow(clippy::too_many_arguments)]
fn regime_sweep(
    py: Python<'_>,
    kernel: &PyKernel,
    radii: Vec<f64>,
    cells_per_diameter: usize,
    max_iters: usize,
    grad_tol: f64,
    restarts: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64, f64, f64, String)>> {
    let settings = nlmag::regimes::SweepSettings {
        cells_per_diameter,
        ..Default::default()
    };
    let mut init_kinds = vec![InitKind::ConstantE3, InitKind::Vortex];
    init_kinds.extend((0..restarts as u64).map(|k| InitKind::Random { seed: seed + k }));
    let opts = MinimizeOptions {
        max_iters,
        grad_tol,
        step_rule: StepRule::BarzilaiBorweinWithBacktracking,
        init_kinds,
        record_trace: false,
    };
    let rows = py
        .detach(|| nlmag::regimes::regime_sweep(&kernel.0, &radii, &settings, &opts))
        .map_err(err)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            (
                r.radius,
                r.best_energy,
                r.constant_energy,
                r.deficit,
                r.classification.as_str().to_string(),
            )
        })
        .collect())
}

#[pymodule(name = "nlmag")]
fn nlmag_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyBallMesh>()?;
    m.add_class::<PyMagnetization>()?;
    m.add_function(wrap_pyfunction!(exchange_energy, m)?)?;
    m.add_function(wrap_pyfunction!(magnetostatic_energy, m)?)?;
    m.add_function(wrap_pyfunction!(total_energy, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    m.add_function(wrap_pyfunction!(vortex_energy_gap, m)?)?;
    m.add_function(wrap_pyfunction!(poincare_constant, m)?)?;
    m.add_function(wrap_pyfunction!(constant_regime_set, m)?)?;
    m.add_function(wrap_pyfunction!(critical_radius_small, m)?)?;
    m.add_function(wrap_pyfunction!(regime_sweep, m)?)?;
    m.add("C2_CLOSED_FORM", nlmag::magnetostatics::C2_CLOSED_FORM)?;
    m.add("VORTEX_H1_SQUARED", nlmag::regimes::VORTEX_H1_SQUARED)?;
    Ok(())
}
