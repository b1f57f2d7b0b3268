//! Small-body and large-body regimes: the Poincaré constant `C_R`, the
//! `C_R < 3` constant-minimizer criterion, the critical radii and radius
//! sweeps of the full minimization problem.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energies::{exchange_energy, EnergyConfig, EnergyModel};
use crate::error::{Error, Result};
use crate::fields::{constant_field, uniformity_deficit, vortex_field, Magnetization};
use crate::geometry::{ball_volume, build_ball_mesh_per_diameter, build_hemisphere_quadrature, BallMesh};
use crate::kernels::{essential_infimum, levy_constant, second_moment, Kernel, RadialQuadrature};
use crate::magnetostatics::hemisphere_reduced_energy;
use crate::minimize::{minimize, MinimizeOptions};
use crate::Vec3;

/// `‖m_•‖²_{H¹(B₁)} = (4/15) π (73 - 15π)`.
pub const VORTEX_H1_SQUARED: f64 = 4.0 / 15.0 * PI * (73.0 - 15.0 * PI);

/// `W_{B_R}(σ) = (4/9) π R³` for any unit constant `σ`.
pub fn constant_energy(radius: f64) -> f64 {
    4.0 / 9.0 * PI * radius.powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareConstant {
    pub radius: f64,
    /// Infimum of `j` over `|z| < 2R`.
    pub q: f64,
    pub q_exact: bool,
    /// `1 / (Q |B_R|)`.
    pub value: f64,
}

/// `C_R = 1 / (Q_{B_R} |B_R|)`, `Q` the infimum of `j` over the
/// difference set `|z| < 2R`.
pub fn poincare_constant(k: &Kernel, radius: f64) -> Result<PoincareConstant> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("R", format!("must be > 0, got {radius}")));
    }
    let q = essential_infimum(k, 2.0 * radius)?;
    if !(q.value > 0.0) {
        return Err(Error::Inapplicable(format!(
            "kernel `{}` has infimum {} on |z| < {}; no Poincaré constant",
            k.name(),
            q.value,
            2.0 * radius
        )));
    }
    Ok(PoincareConstant {
        radius,
        q: q.value,
        q_exact: q.exact,
        value: 1.0 / (q.value * ball_volume(radius)),
    })
}

/// `ln(C_R / 3)`, `+∞` where `Q = 0`.
fn regime_margin(k: &Kernel, r: f64) -> Result<f64> {
    match poincare_constant(k, r) {
        Ok(c) => Ok((c.value / 3.0).ln()),
        Err(Error::Inapplicable(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// A maximal interval of the scanned range on which `C_R < 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeInterval {
    pub lo: f64,
    pub hi: f64,
    /// The interval is cut by the scanned range rather than by a root.
    pub open_lo: bool,
    pub open_hi: bool,
}

/// Root tolerance (in `R`) of the bisection.
const REGIME_TOL: f64 = 1e-10;

/// Intervals of `[r_min, r_max]` where `C_R < 3`, from a geometric grid of
/// `points` radii and bisection at every sign change.
pub fn constant_regime_set(k: &Kernel, r_min: f64, r_max: f64, points: usize) -> Result<Vec<RegimeInterval>> {
    if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
        return Err(Error::param("R_range", format!("need 0 < R_min < R_max, got [{r_min}, {r_max}]")));
    }
    if points < 2 {
        return Err(Error::param("points", "need at least 2 grid points"));
    }
    let grid: Vec<f64> = (0..points)
        .map(|i| r_min * (r_max / r_min).powf(i as f64 / (points - 1) as f64))
        .collect();
    let f: Vec<f64> = grid.iter().map(|&r| regime_margin(k, r)).collect::<Result<_>>()?;
    let root = |mut a: f64, mut b: f64| -> Result<f64> {
        let fa_neg = regime_margin(k, a)? < 0.0;
        while b - a > REGIME_TOL * b.max(1.0) {
            let mid = 0.5 * (a + b);
            if (regime_margin(k, mid)? < 0.0) == fa_neg {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    };
    let mut out = Vec::new();
    let mut start: Option<(f64, bool)> = (f[0] < 0.0).then_some((grid[0], true));
    for i in 1..points {
        let (was, is) = (f[i - 1] < 0.0, f[i] < 0.0);
        if !was && is {
            start = Some((root(grid[i - 1], grid[i])?, false));
        } else if was && !is {
            let (lo, open_lo) = start.take().expect("interval open");
            out.push(RegimeInterval {
                lo,
                hi: root(grid[i - 1], grid[i])?,
                open_lo,
                open_hi: false,
            });
        }
    }
    if let Some((lo, open_lo)) = start {
        out.push(RegimeInterval {
            lo,
            hi: r_max,
            open_lo,
            open_hi: true,
        });
    }
    Ok(out)
}

/// `R*` with the sufficient condition `Q_{B_R} > 1/(4πR³)` checked just
/// below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallRadius {
    pub r_star: f64,
    /// `(4πC / 2^{3+2s})^{1/(2s)}`
    pub scale_term: f64,
    /// `R₀ / 2` (infinite when the lower bound holds everywhere).
    pub half_r0: f64,
    pub check_radius: f64,
    pub q_at_check: f64,
    pub q_threshold: f64,
    pub condition_holds: bool,
}

pub fn critical_radius_small(k: &Kernel) -> Result<SmallRadius> {
    let p = k
        .j5_params()
        .ok_or_else(|| Error::Inapplicable(format!("kernel `{}` has no fractional lower bound (C, s, R0)", k.name())))?;
    if !(p.c > 0.0 && p.s > 0.0 && p.s < 1.0) {
        return Err(Error::Inapplicable(format!("lower-bound parameters out of range: {p:?}")));
    }
    let half_r0 = 0.5 * p.r0_or_inf();
    let scale_term = (4.0 * PI * p.c / 2f64.powf(3.0 + 2.0 * p.s)).powf(1.0 / (2.0 * p.s));
    let r_star = half_r0.min(scale_term);
    let check_radius = r_star * (1.0 - 1e-6);
    let q_at_check = essential_infimum(k, 2.0 * check_radius)?.value;
    let q_threshold = 1.0 / (4.0 * PI * check_radius.powi(3));
    Ok(SmallRadius {
        r_star,
        scale_term,
        half_r0,
        check_radius,
        q_at_check,
        q_threshold,
        condition_holds: q_at_check > q_threshold,
    })
}

/// One radius of the large-body comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub radius: f64,
    pub exchange: f64,
    pub vortex_magnetostatic: f64,
    pub constant_energy: f64,
    /// `J(vortex) + W(vortex) - (4/9)πR³`
    pub comparison: f64,
    /// `c̃ ‖m_•‖²_{H¹} R ∫_{B_{2R}} j |h|² - c₂ R³` with the calibrated `c̃`.
    pub bound_curve: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeRadius {
    /// Smallest grid radius with a negative comparison.
    pub r_est: Option<f64>,
    pub rows: Vec<ComparisonRow>,
    /// Smallest `c̃` with `J(vortex) ≤ c̃ ‖m_•‖²_{H¹} R ∫_{B_{2R}} j|h|²` on the grid.
    pub c_tilde: f64,
    pub c2: f64,
    pub levy_constant: f64,
    /// `comparison / R³` decreases over the last three grid points.
    pub eventually_decreasing: bool,
}

/// Settings for [`critical_radius_large_upper`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSettings {
    pub cells_per_diameter: usize,
    pub n_theta: usize,
    pub normalize_volume: bool,
}

impl Default for ComparisonSettings {
    fn default() -> Self {
        ComparisonSettings {
            cells_per_diameter: 16,
            n_theta: 64,
            normalize_volume: true,
        }
    }
}

fn sweep_mesh(radius: f64, cells_per_diameter: usize, normalize: bool) -> Result<BallMesh> {
    let mesh = build_ball_mesh_per_diameter(radius, cells_per_diameter)?;
    Ok(if normalize { mesh.with_normalized_volume() } else { mesh })
}

/// Compares the vortex with the constant state on each grid radius:
/// discrete exchange of the vortex plus its magnetostatic energy (surface
/// form, exact `R³` scaling) against `(4/9)πR³`.
pub fn critical_radius_large_upper(k: &Kernel, grid: &[f64], settings: &ComparisonSettings) -> Result<LargeRadius> {
    let levy = levy_constant(k, &RadialQuadrature::default())?;
    let Some(levy_value) = levy.value else {
        return Err(Error::Inapplicable(format!(
            "kernel `{}` has an infinite Lévy constant; the large-body estimate needs it finite",
            k.name()
        )));
    };
    if grid.is_empty() || grid.iter().any(|&r| !(r > 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("R_grid", "must be positive and increasing"));
    }
    let quad = build_hemisphere_quadrature(1.0, settings.n_theta)?;
    let w_const_unit = hemisphere_reduced_energy(&quad, 1)?;
    let w_vortex_unit = hemisphere_reduced_energy(&quad, 3)?;
    let c2 = w_const_unit - w_vortex_unit;

    let mut raw = Vec::with_capacity(grid.len());
    for &r in grid {
        let mesh = sweep_mesh(r, settings.cells_per_diameter, settings.normalize_volume)?;
        let exchange = exchange_energy(&mesh, k, &vortex_field(&mesh)?)?;
        let moment = second_moment(k, 2.0 * r)?;
        raw.push((r, exchange, moment));
    }
    let c_tilde = raw
        .iter()
        .map(|&(r, j, m)| if m > 0.0 { j / (VORTEX_H1_SQUARED * r * m) } else { 0.0 })
        .fold(0.0, f64::max);
    let rows: Vec<ComparisonRow> = raw
        .iter()
        .map(|&(r, exchange, moment)| {
            let vortex_magnetostatic = w_vortex_unit * r.powi(3);
            let constant = constant_energy(r);
            ComparisonRow {
                radius: r,
                exchange,
                vortex_magnetostatic,
                constant_energy: constant,
                comparison: exchange + vortex_magnetostatic - constant,
                bound_curve: c_tilde * VORTEX_H1_SQUARED * r * moment - c2 * r.powi(3),
            }
        })
        .collect();
    let scaled: Vec<f64> = rows.iter().map(|r| r.comparison / r.radius.powi(3)).collect();
    let eventually_decreasing = scaled.len() >= 3 && scaled[scaled.len() - 3..].windows(2).all(|w| w[1] < w[0]);
    Ok(LargeRadius {
        r_est: rows.iter().find(|r| r.comparison < 0.0).map(|r| r.radius),
        rows,
        c_tilde,
        c2,
        levy_constant: levy_value,
        eventually_decreasing,
    })
}

/// `‖m - <m>‖²` and `C_R J(m)` on one mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareCheck {
    pub deviation: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn discrete_poincare(mesh: &BallMesh, k: &Kernel, m: &Magnetization, c_r: f64) -> Result<PoincareCheck> {
    let deviation = crate::fields::l2_deviation_sq(mesh, m);
    let bound = c_r * exchange_energy(mesh, k, m)?;
    Ok(PoincareCheck {
        deviation,
        bound,
        holds: deviation <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Constant,
    Nonconstant,
    Indeterminate,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Constant => "constant",
            Classification::Nonconstant => "nonconstant",
            Classification::Indeterminate => "indeterminate",
        }
    }
}

/// Thresholds of the sweep classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyThresholds {
    /// `constant` needs a deficit below this.
    pub deficit: f64,
    /// `constant` needs the energy within this fraction of `(4/9)πR³`.
    pub constant_band: f64,
    /// `nonconstant` needs the energy below `(1 - margin)` times both the
    /// analytic and the discrete constant energy.
    pub margin: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            deficit: 1e-3,
            constant_band: 1e-2,
            margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSweepRow {
    pub radius: f64,
    pub spacing: f64,
    pub cells: usize,
    pub best_energy: f64,
    /// `(4/9)πR³`
    pub constant_energy: f64,
    /// Energy of a constant field on the mesh.
    pub discrete_constant_energy: f64,
    /// Energy of the (unrelaxed) vortex on the mesh.
    pub vortex_energy: f64,
    pub deficit: f64,
    pub best_init: String,
    pub converged: bool,
    pub classification: Classification,
    pub restarts_used: usize,
    pub error: Option<String>,
}

pub fn classify(
    best_energy: f64,
    deficit: f64,
    constant_energy: f64,
    discrete_constant_energy: f64,
    t: &ClassifyThresholds,
) -> Classification {
    if deficit < t.deficit && (best_energy - constant_energy).abs() <= t.constant_band * constant_energy {
        Classification::Constant
    } else if deficit >= t.deficit
        && best_energy < (1.0 - t.margin) * constant_energy
        && best_energy < (1.0 - t.margin) * discrete_constant_energy
    {
        Classification::Nonconstant
    } else {
        Classification::Indeterminate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub cells_per_diameter: usize,
    /// Rescale the uniform cell weight so the mesh volume equals `|B_R|`.
    pub normalize_volume: bool,
    pub thresholds: ClassifyThresholds,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            cells_per_diameter: 16,
            normalize_volume: true,
            thresholds: ClassifyThresholds::default(),
        }
    }
}

/// Geometric grid of `points` radii from `r_min` to `r_max`.
pub fn geometric_grid(r_min: f64, r_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_max > r_min) || points < 2 {
        return Err(Error::param("R_grid", format!("need 0 < R_min < R_max and >= 2 points, got [{r_min}, {r_max}] x {points}")));
    }
    Ok((0..points)
        .map(|i| r_min * (r_max / r_min).powf(i as f64 / (points - 1) as f64))
        .collect())
}

fn sweep_row(k: &Kernel, r: f64, settings: &SweepSettings, opts: &MinimizeOptions) -> Result<RegimeSweepRow> {
    let mesh = sweep_mesh(r, settings.cells_per_diameter, settings.normalize_volume)?;
    let config = EnergyConfig::exchange_magnetostatic(k.clone());
    let model = EnergyModel::new(&mesh, &config)?;
    let discrete_constant_energy = model.energy(&constant_field(&mesh, Vec3::z())?)?.total;
    let vortex_energy = model.energy(&vortex_field(&mesh)?)?.total;
    let result = minimize(&mesh, &config, opts)?;
    let deficit = uniformity_deficit(&result.minimizer)?;
    let analytic = constant_energy(r);
    Ok(RegimeSweepRow {
        radius: r,
        spacing: mesh.spacing(),
        cells: mesh.cell_count(),
        best_energy: result.energy.total,
        constant_energy: analytic,
        discrete_constant_energy,
        vortex_energy,
        deficit,
        best_init: result.init_kind.label(),
        converged: result.converged,
        classification: classify(result.energy.total, deficit, analytic, discrete_constant_energy, &settings.thresholds),
        restarts_used: result.runs.len(),
        error: None,
    })
}

/// Minimizes `J + W` on each radius of `grid` and classifies the result.
/// A failing radius is recorded (classification `indeterminate`) and the
/// sweep continues.
pub fn regime_sweep(k: &Kernel, grid: &[f64], settings: &SweepSettings, opts: &MinimizeOptions) -> Result<Vec<RegimeSweepRow>> {
    opts.validate()?;
    if settings.cells_per_diameter < 2 {
        return Err(Error::param("cells_per_diameter", "must be >= 2"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &r in grid {
        let row = sweep_row(k, r, settings, opts).unwrap_or_else(|e| {
            log::warn!("sweep radius {r}: {e}");
            RegimeSweepRow {
                radius: r,
                spacing: f64::NAN,
                cells: 0,
                best_energy: f64::NAN,
                constant_energy: constant_energy(r),
                discrete_constant_energy: f64::NAN,
                vortex_energy: f64::NAN,
                deficit: f64::NAN,
                best_init: String::new(),
                converged: false,
                classification: Classification::Indeterminate,
                restarts_used: 0,
                error: Some(e.to_string()),
            }
        });
        log::info!(
            "R = {r:.4e}: best {:.6e} vs constant {:.6e}, deficit {:.3e} -> {}",
            row.best_energy,
            row.constant_energy,
            row.deficit,
            row.classification.as_str()
        );
        rows.push(row);
    }
    Ok(rows)
}

/// True when no `constant` row follows a `nonconstant` one.
pub fn is_monotone(rows: &[RegimeSweepRow]) -> bool {
    let first_non = rows.iter().position(|r| r.classification == Classification::Nonconstant);
    match first_non {
        Some(i) => rows[i..].iter().all(|r| r.classification != Classification::Constant),
        None => true,
    }
}

pub const SWEEP_CSV_HEADER: [&str; 12] = [
    "R",
    "h",
    "cells",
    "best_energy",
    "constant_energy",
    "discrete_constant_energy",
    "vortex_energy",
    "deficit",
    "classification",
    "best_init",
    "converged",
    "restarts_used",
];

pub fn write_sweep_csv(path: &Path, rows: &[RegimeSweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.radius.to_string(),
            r.spacing.to_string(),
            r.cells.to_string(),
            r.best_energy.to_string(),
            r.constant_energy.to_string(),
            r.discrete_constant_energy.to_string(),
            r.vortex_energy.to_string(),
            r.deficit.to_string(),
            r.classification.as_str().to_string(),
            r.best_init.clone(),
            r.converged.to_string(),
            r.restarts_used.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Gnuplot script plotting `E/((4/9)πR³)` and the deficit against `R`
/// from a sweep CSV.
pub fn write_sweep_plot(path: &Path, csv_name: &str) -> Result<()> {
    let mut gp = BufWriter::new(File::create(path)?);
    writeln!(gp, "set datafile separator ','")?;
    writeln!(gp, "set key autotitle columnhead")?;
    writeln!(gp, "set logscale x")?;
    writeln!(gp, "set xlabel 'R'")?;
    writeln!(gp, "set multiplot layout 2,1")?;
    writeln!(gp, "set ylabel 'E / ((4/9) pi R^3)'")?;
    writeln!(
        gp,
        "plot '{csv_name}' using 1:($4/$5) with linespoints title 'best', \\\n     '{csv_name}' using 1:($7/$5) with linespoints title 'vortex', \\\n     1 with lines dashtype 2 title 'constant'"
    )?;
    writeln!(gp, "set ylabel 'deficit 1 - |<m>|^2'")?;
    writeln!(gp, "set logscale y")?;
    writeln!(gp, "plot '{csv_name}' using 1:($8 + 1e-16) with linespoints title 'deficit'")?;
    writeln!(gp, "unset multiplot")?;
    gp.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_unit_field;
    use crate::geometry::build_ball_mesh;
    use crate::kernels::{make_builtin_kernel, KernelSpec, Tail};
    use approx::assert_relative_eq;

    fn builtin(spec: KernelSpec) -> Kernel {
        make_builtin_kernel(&spec).unwrap()
    }

    #[test]
    fn poincare_closed_forms() {
        for r in [0.3, 1.0, 2.0] {
            let c = poincare_constant(&builtin(KernelSpec::ConstantOne), r).unwrap();
            assert_relative_eq!(c.value, 3.0 / (4.0 * PI * r.powi(3)), max_relative = 1e-14);
            let g = poincare_constant(&builtin(KernelSpec::Gaussian4), r).unwrap();
            assert_relative_eq!(g.value, 3.0 * (4.0 * r * r).exp() / (16.0 * PI * r.powi(3)), max_relative = 1e-13);
            let f = poincare_constant(&builtin(KernelSpec::Fractional { s: 0.5 }), r).unwrap();
            assert_relative_eq!(f.value, 3.0 * 16.0 / (4.0 * PI) * r, max_relative = 1e-13);
        }
    }

    #[test]
    fn scale_invariant_kernel_has_constant_poincare() {
        let k = builtin(KernelSpec::Power { exponent: 3.0 });
        let vals: Vec<f64> = [0.1, 1.0, 10.0].iter().map(|&r| poincare_constant(&k, r).unwrap().value).collect();
        for v in vals {
            assert_relative_eq!(v, 6.0 / PI, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_infimum_is_inapplicable() {
        let k = builtin(KernelSpec::TruncatedFractional { s: 0.5, tail: Tail::Zero });
        assert!(matches!(poincare_constant(&k, 1.0), Err(Error::Inapplicable(_))));
        assert!(poincare_constant(&k, 0.4).is_ok());
    }

    #[test]
    fn regime_sets() {
        let one = constant_regime_set(&builtin(KernelSpec::ConstantOne), 0.05, 10.0, 200).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].lo - (4.0 * PI).powf(-1.0 / 3.0)).abs() < 1e-8);
        assert!(one[0].open_hi);
        let frac = constant_regime_set(&builtin(KernelSpec::Fractional { s: 0.5 }), 0.01, 10.0, 200).unwrap();
        assert_eq!(frac.len(), 1);
        assert!(frac[0].open_lo);
        assert!((frac[0].hi - PI / 4.0).abs() < 1e-8);
        let g = constant_regime_set(&builtin(KernelSpec::Gaussian4), 0.05, 10.0, 200).unwrap();
        assert_eq!(g.len(), 1);
        assert!(!g[0].open_lo && !g[0].open_hi);
    }

    #[test]
    fn small_radius_formula() {
        let k = builtin(KernelSpec::Fractional { s: 0.5 }).with_j5(crate::kernels::J5Params {
            c: 1.0,
            s: 0.5,
            r0: Some(10.0),
        });
        let r = critical_radius_small(&k).unwrap();
        assert_relative_eq!(r.r_star, PI / 4.0, max_relative = 1e-15);
        assert!(r.condition_holds);
        let k1 = k.clone().with_j5(crate::kernels::J5Params {
            c: 1.0,
            s: 0.5,
            r0: Some(1.0),
        });
        assert_eq!(critical_radius_small(&k1).unwrap().r_star, 0.5);
        assert!(matches!(
            critical_radius_small(&builtin(KernelSpec::Gaussian4)),
            Err(Error::Inapplicable(_))
        ));
        // consistent with the C_R < 3 set for the same kernel
        let set = constant_regime_set(&k, 0.01, 10.0, 100).unwrap();
        assert!(set[0].lo <= r.r_star && r.r_star <= set[0].hi + 1e-9);
    }

    #[test]
    fn large_radius_needs_finite_levy_constant() {
        let k = builtin(KernelSpec::ConstantOne);
        assert!(matches!(
            critical_radius_large_upper(&k, &[1.0, 2.0], &ComparisonSettings::default()),
            Err(Error::Inapplicable(_))
        ));
    }

    #[test]
    fn large_radius_for_gaussian() {
        let k = builtin(KernelSpec::Gaussian4).scaled(0.05).unwrap();
        let grid = geometric_grid(0.5, 8.0, 5).unwrap();
        let settings = ComparisonSettings {
            cells_per_diameter: 8,
            n_theta: 24,
            normalize_volume: true,
        };
        let est = critical_radius_large_upper(&k, &grid, &settings).unwrap();
        let r = est.r_est.expect("sign change on the grid");
        let row = est.rows.iter().find(|x| x.radius == r).unwrap();
        assert!(row.comparison < 0.0);
        assert!(est.eventually_decreasing);
        assert!(est.c_tilde > 0.0);
    }

    #[test]
    fn discrete_poincare_holds_for_random_fields() {
        let k = builtin(KernelSpec::Gaussian4);
        let mesh = build_ball_mesh(1.0, 0.25).unwrap();
        let c = poincare_constant(&k, 1.0).unwrap().value;
        for seed in 0..5 {
            let m = random_unit_field(&mesh, seed);
            assert!(discrete_poincare(&mesh, &k, &m, c).unwrap().holds);
        }
    }

    #[test]
    fn classification_rules() {
        let t = ClassifyThresholds::default();
        assert_eq!(classify(1.0, 1e-5, 1.0, 1.0, &t), Classification::Constant);
        assert_eq!(classify(0.9, 0.3, 1.0, 1.0, &t), Classification::Nonconstant);
        assert_eq!(classify(0.9995, 0.3, 1.0, 1.0, &t), Classification::Indeterminate);
        assert_eq!(classify(0.9, 0.3, 1.0, 0.9001, &t), Classification::Indeterminate);
    }

    #[test]
    fn sweep_files() {
        let dir = tempfile::tempdir().unwrap();
        let row = RegimeSweepRow {
            radius: 1.0,
            spacing: 0.125,
            cells: 2176,
            best_energy: 1.0,
            constant_energy: 1.39,
            discrete_constant_energy: 1.39,
            vortex_energy: 1.1,
            deficit: 0.4,
            best_init: "vortex".into(),
            converged: true,
            classification: Classification::Nonconstant,
            restarts_used: 5,
            error: None,
        };
        let p = dir.path().join("sweep.csv");
        write_sweep_csv(&p, &[row]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("R,h,cells"));
        assert!(text.contains("nonconstant"));
        write_sweep_plot(&dir.path().join("sweep.gp"), "sweep.csv").unwrap();
    }
}
