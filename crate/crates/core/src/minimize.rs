//! Energy minimization over the product of unit spheres: projected gradient
//! descent with Barzilai–Borwein steps, Armijo backtracking and a
//! normalization retraction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energies::{EnergyBreakdown, EnergyConfig, EnergyModel};
use crate::error::{Error, Result};
use crate::fields::{constant_field, random_unit_field, uniformity_deficit, vortex_field, Magnetization};
use crate::geometry::BallMesh;
use crate::Vec3;

/// Starting configuration of one descent run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitKind {
    ConstantE3,
    Vortex,
    Random { seed: u64 },
}

impl InitKind {
    pub fn label(&self) -> String {
        match self {
            InitKind::ConstantE3 => "constant_e3".into(),
            InitKind::Vortex => "vortex".into(),
            InitKind::Random { seed } => format!("random({seed})"),
        }
    }

    pub fn build(&self, mesh: &BallMesh) -> Result<Magnetization> {
        match *self {
            InitKind::ConstantE3 => constant_field(mesh, Vec3::z()),
            InitKind::Vortex => vortex_field(mesh),
            InitKind::Random { seed } => Ok(random_unit_field(mesh, seed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    BarzilaiBorweinWithBacktracking,
    /// Constant step, still subject to the Armijo test.
    Fixed { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Threshold on `max_i |P_i g_i| / w` (gradient density, tangent part).
    pub grad_tol: f64,
    pub step_rule: StepRule,
    pub init_kinds: Vec<InitKind>,
    pub record_trace: bool,
}

/// Armijo sufficient-decrease parameter.
pub const ARMIJO_C: f64 = 1e-4;
/// Backtracking factor.
pub const BACKTRACK: f64 = 0.5;
/// Largest rotation of any cell on the first trial step, in radians.
const FIRST_STEP_ANGLE: f64 = 0.1;

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iters: 2000,
            grad_tol: 1e-6,
            step_rule: StepRule::BarzilaiBorweinWithBacktracking,
            init_kinds: default_inits(3, 0),
            record_trace: false,
        }
    }
}

/// `constant_e3`, `vortex` and `restarts` random fields seeded
/// `seed, seed + 1, ...`.
pub fn default_inits(restarts: usize, seed: u64) -> Vec<InitKind> {
    let mut v = vec![InitKind::ConstantE3, InitKind::Vortex];
    v.extend((0..restarts as u64).map(|k| InitKind::Random { seed: seed + k }));
    v
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::param("grad_tol", format!("must be > 0, got {}", self.grad_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be >= 1"));
        }
        if self.init_kinds.is_empty() {
            return Err(Error::param("init_kinds", "needs at least one entry"));
        }
        if let StepRule::Fixed { step } = self.step_rule {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::param("step", format!("must be > 0, got {step}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
}

/// Outcome of one descent run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub init: InitKind,
    pub init_energy: f64,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub uniformity_deficit: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub minimizer: Magnetization,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub init_kind: InitKind,
    pub grad_norm: f64,
    pub trace: Option<Vec<TraceRow>>,
    /// Every run, in init order.
    pub runs: Vec<RunSummary>,
}

/// Euclidean gradient of the discrete total energy.
pub fn energy_gradient(mesh: &BallMesh, config: &EnergyConfig, m: &Magnetization) -> Result<Vec<Vec3>> {
    m.check_mesh(mesh)?;
    Ok(EnergyModel::new(mesh, config)?.energy_and_gradient(m)?.1)
}

/// `g_i - (g_i·m_i) m_i`.
pub fn project_tangent(m: &Magnetization, g: &[Vec3]) -> Result<Vec<Vec3>> {
    if g.len() != m.len() {
        return Err(Error::InvalidArgument(format!("{} gradient vectors for {} cells", g.len(), m.len())));
    }
    Ok(m.values().iter().zip(g).map(|(mi, gi)| gi - gi.dot(mi) * mi).collect())
}

/// `normalize(m_i + t v_i)`. Fails if some `m_i + t v_i` vanishes.
pub fn retract(m: &Magnetization, v: &[Vec3], t: f64) -> Result<Magnetization> {
    if v.len() != m.len() {
        return Err(Error::InvalidArgument(format!("{} tangent vectors for {} cells", v.len(), m.len())));
    }
    let mut out = m.clone();
    for (i, (o, d)) in out.values_mut().iter_mut().zip(v).enumerate() {
        let p = *o + t * d;
        let n = p.norm();
        if !(n > 1e-300) {
            return Err(Error::InvalidArgument(format!("step {t} sends cell {i} to the origin")));
        }
        *o = p / n;
    }
    Ok(out)
}

fn sup_density(p: &[Vec3], weight: f64) -> f64 {
    p.iter().map(|v| v.norm()).fold(0.0, f64::max) / weight
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

struct Run {
    m: Magnetization,
    energy: EnergyBreakdown,
    iterations: usize,
    converged: bool,
    grad_norm: f64,
    trace: Vec<TraceRow>,
}

fn descend(model: &EnergyModel, weight: f64, start: Magnetization, opts: &MinimizeOptions) -> Result<Run> {
    let mut m = start;
    let (mut e, g) = model.energy_and_gradient(&m)?;
    let mut p = project_tangent(&m, &g)?;
    let mut trace = Vec::new();
    let mut t_next: Option<f64> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = sup_density(&p, weight);
    loop {
        if opts.record_trace {
            trace.push(TraceRow {
                iter: iterations,
                energy: e.total,
                grad_norm,
            });
        }
        if grad_norm < opts.grad_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        let pp = dot(&p, &p);
        let max_p = p.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut t = match opts.step_rule {
            StepRule::Fixed { step } => step,
            StepRule::BarzilaiBorweinWithBacktracking => t_next.unwrap_or(FIRST_STEP_ANGLE / max_p),
        };
        let dir: Vec<Vec3> = p.iter().map(|v| -v).collect();
        let mut backtracked = false;
        let accepted = loop {
            if t * max_p < 1e-15 {
                break None;
            }
            match retract(&m, &dir, t) {
                Ok(trial) => {
                    let (et, gt) = model.energy_and_gradient(&trial)?;
                    if et.total <= e.total - ARMIJO_C * t * pp {
                        break Some((trial, et, gt));
                    }
                }
                Err(Error::InvalidArgument(_)) => {}
                Err(err) => return Err(err),
            }
            t *= BACKTRACK;
            backtracked = true;
        };
        let Some((trial, et, gt)) = accepted else {
            log::debug!("line search stalled at iteration {iterations} (|P g| = {grad_norm:.3e})");
            break;
        };
        let p_new = project_tangent(&trial, &gt)?;
        // BB1 step from the cell displacements and tangent-gradient change
        let s: Vec<Vec3> = trial.values().iter().zip(m.values()).map(|(a, b)| a - b).collect();
        let y: Vec<Vec3> = p_new.iter().zip(&p).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        t_next = if backtracked || !(sy > 0.0) {
            Some(t)
        } else {
            Some((dot(&s, &s) / sy).clamp(1e-3 * t, 1e3 * t))
        };
        m = trial;
        e = et;
        p = p_new;
        grad_norm = sup_density(&p, weight);
        iterations += 1;
    }
    Ok(Run {
        m,
        energy: e,
        iterations,
        converged,
        grad_norm,
        trace,
    })
}

/// Runs descent from every init and returns the lowest-energy result
/// (ties go to the earlier init).
pub fn minimize(mesh: &BallMesh, config: &EnergyConfig, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    opts.validate()?;
    let model = EnergyModel::new(mesh, config)?;
    let mut best: Option<(InitKind, Run)> = None;
    let mut runs = Vec::new();
    for init in &opts.init_kinds {
        let start = init.build(mesh)?;
        let init_energy = model.energy(&start)?.total;
        let run = descend(&model, mesh.weight(), start, opts)?;
        log::info!(
            "{}: E {init_energy:.6e} -> {:.6e} in {} iterations (converged: {})",
            init.label(),
            run.energy.total,
            run.iterations,
            run.converged
        );
        runs.push(RunSummary {
            init: *init,
            init_energy,
            energy: run.energy.total,
            iterations: run.iterations,
            converged: run.converged,
            grad_norm: run.grad_norm,
            uniformity_deficit: uniformity_deficit(&run.m)?,
        });
        if best.as_ref().is_none_or(|(_, b)| run.energy.total < b.energy.total) {
            best = Some((*init, run));
        }
    }
    let (init_kind, run) = best.expect("at least one init");
    Ok(MinimizeResult {
        minimizer: run.m,
        energy: run.energy,
        iterations: run.iterations,
        converged: run.converged,
        init_kind,
        grad_norm: run.grad_norm,
        trace: opts.record_trace.then_some(run.trace),
        runs,
    })
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "energy", "grad_norm"])?;
    for r in trace {
        w.write_record([r.iter.to_string(), r.energy.to_string(), r.grad_norm.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energies::total_energy;
    use crate::geometry::build_ball_mesh;
    use crate::kernels::{make_builtin_kernel, KernelSpec};
    use approx::assert_relative_eq;

    fn gaussian() -> crate::kernels::Kernel {
        make_builtin_kernel(&KernelSpec::Gaussian4).unwrap()
    }

    #[test]
    fn projection_examples() {
        let mesh = build_ball_mesh(1.0, 0.9).unwrap();
        let m = constant_field(&mesh, Vec3::z()).unwrap();
        let g = vec![Vec3::new(1.0, 1.0, 1.0); 8];
        let p = project_tangent(&m, &g).unwrap();
        assert!(p.iter().all(|v| *v == Vec3::new(1.0, 1.0, 0.0)));
        let par = project_tangent(&m, &vec![Vec3::z() * 3.0; 8]).unwrap();
        assert!(par.iter().all(|v| *v == Vec3::zeros()));
        let orth = project_tangent(&m, &vec![Vec3::x(); 8]).unwrap();
        assert!(orth.iter().all(|v| *v == Vec3::x()));
    }

    #[test]
    fn retraction_examples() {
        let mesh = build_ball_mesh(1.0, 0.9).unwrap();
        let m = constant_field(&mesh, Vec3::z()).unwrap();
        let v = vec![Vec3::x(); 8];
        assert_eq!(retract(&m, &v, 0.0).unwrap(), m);
        let r = retract(&m, &v, 1.0).unwrap();
        let s = 0.5f64.sqrt();
        assert!(r.values().iter().all(|x| (x - Vec3::new(s, 0.0, s)).norm() < 1e-15));
        assert!(retract(&m, &vec![-Vec3::z(); 8], 1.0).is_err());
    }

    #[test]
    fn magnetostatic_gradient_of_constant() {
        // per cell the dipole sum leaves off-diagonal terms, but over the
        // mesh they cancel: the mean gradient is (2/3) m w
        let mesh = build_ball_mesh(1.0, 0.9).unwrap();
        let m = constant_field(&mesh, Vec3::x()).unwrap();
        let g = energy_gradient(&mesh, &EnergyConfig::magnetostatic_only(), &m).unwrap();
        let mean = g.iter().fold(Vec3::zeros(), |a, v| a + v) / g.len() as f64;
        assert!((mean - Vec3::x() * (2.0 / 3.0) * mesh.weight()).norm() < 1e-15);
        for gi in &g {
            assert!((gi.x - 2.0 / 3.0 * mesh.weight()).abs() < 1e-15);
        }
    }

    #[test]
    fn exchange_gradient_vanishes_on_constants() {
        let mesh = build_ball_mesh(1.0, 0.25).unwrap();
        let m = constant_field(&mesh, Vec3::y()).unwrap();
        let g = energy_gradient(&mesh, &EnergyConfig::exchange_only(gaussian()), &m).unwrap();
        assert!(g.iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn directional_derivative_along_retraction() {
        let mesh = build_ball_mesh(1.0, 0.25).unwrap();
        let config = EnergyConfig::exchange_magnetostatic(gaussian());
        let model = EnergyModel::new(&mesh, &config).unwrap();
        for seed in 0..3 {
            let m = random_unit_field(&mesh, seed);
            let (e, g) = model.energy_and_gradient(&m).unwrap();
            let dir = project_tangent(&m, &random_unit_field(&mesh, seed + 50).into_values()).unwrap();
            let t = 1e-5;
            let fd = (model.energy(&retract(&m, &dir, t).unwrap()).unwrap().total - e.total) / t;
            let exact = dot(&g, &dir);
            assert!((fd - exact).abs() < 1e-3 * exact.abs().max(1e-6), "{fd} {exact}");
        }
    }

    #[test]
    fn exchange_only_descent_reaches_a_constant() {
        let mesh = build_ball_mesh(1.0, 0.25).unwrap();
        let config = EnergyConfig::exchange_only(gaussian());
        let opts = MinimizeOptions {
            init_kinds: vec![InitKind::Random { seed: 5 }],
            grad_tol: 1e-8,
            record_trace: true,
            ..Default::default()
        };
        let r = minimize(&mesh, &config, &opts).unwrap();
        assert!(r.converged);
        assert!(uniformity_deficit(&r.minimizer).unwrap() < 1e-4);
        assert!(r.minimizer.max_unit_deviation() < 1e-12);
        let trace = r.trace.unwrap();
        assert!(trace.windows(2).all(|w| w[1].energy <= w[0].energy));
    }

    #[test]
    fn best_run_is_no_worse_than_any_init() {
        let mesh = build_ball_mesh(1.0, 0.25).unwrap();
        let config = EnergyConfig::exchange_magnetostatic(gaussian().scaled(0.01).unwrap());
        let opts = MinimizeOptions {
            max_iters: 200,
            ..Default::default()
        };
        let r = minimize(&mesh, &config, &opts).unwrap();
        assert_eq!(r.runs.len(), 5);
        for run in &r.runs {
            assert!(r.energy.total <= run.init_energy + 1e-12 * run.init_energy.abs());
            assert!(r.energy.total <= run.energy);
        }
        let again = minimize(&mesh, &config, &opts).unwrap();
        assert_eq!(again.minimizer, r.minimizer);
        assert_eq!(
            total_energy(&mesh, &config, &r.minimizer).unwrap().total,
            r.energy.total
        );
    }

    #[test]
    fn rotated_inits_give_equal_energies() {
        let mesh = build_ball_mesh(1.0, 0.25).unwrap();
        let config = EnergyConfig::exchange_only(gaussian());
        let model = EnergyModel::new(&mesh, &config).unwrap();
        let m = random_unit_field(&mesh, 9);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let rm = m.mapped(|v| rot * v);
        let opts = MinimizeOptions {
            grad_tol: 1e-9,
            ..Default::default()
        };
        let a = descend(&model, mesh.weight(), m, &opts).unwrap();
        let b = descend(&model, mesh.weight(), rm, &opts).unwrap();
        assert_relative_eq!(a.energy.total, b.energy.total, epsilon = 1e-8);
    }

    #[test]
    fn options_are_validated() {
        let mesh = build_ball_mesh(1.0, 0.5).unwrap();
        let config = EnergyConfig::exchange_only(gaussian());
        let bad = MinimizeOptions {
            grad_tol: 0.0,
            ..Default::default()
        };
        assert!(minimize(&mesh, &config, &bad).is_err());
        let none = MinimizeOptions {
            init_kinds: vec![],
            ..Default::default()
        };
        assert!(minimize(&mesh, &config, &none).is_err());
    }
}
