use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use nlmag::energies::{EnergyBreakdown, EnergyModel};
use nlmag::fields::{
    constant_field, h1_norm_vortex, load_field_csv, random_unit_field, uniformity_deficit, vortex_field, vortex_value,
    write_equatorial_slice, write_field_csv, Magnetization,
};
use nlmag::geometry::{build_ball_mesh, build_hemisphere_quadrature, build_sphere_quadrature, BallMesh};
use nlmag::kernels::kernel_report;
use nlmag::magnetostatics::{
    demag_field, hemisphere_reduced_energy, magnetostatic_energy, normal_traces, surface_energy, vortex_energy_gap,
    C2_CLOSED_FORM,
};
use nlmag::minimize::{minimize, write_trace_csv};
use nlmag::regimes::{
    constant_energy, constant_regime_set, critical_radius_large_upper, critical_radius_small, is_monotone,
    regime_sweep, write_sweep_csv, write_sweep_plot, ComparisonSettings, VORTEX_H1_SQUARED,
};
use nlmag::Vec3;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "kebab-case")]
pub enum Command {
    KernelCheck,
    Energy,
    Minimize,
    Sweep,
    Constants,
    VortexGap,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Energy => "energy",
            Command::Minimize => "minimize",
            Command::Sweep => "sweep",
            Command::Constants => "constants",
            Command::VortexGap => "vortex-gap",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    /// A module precondition failed at run time; `key` is the config
    /// section that fed the call.
    Precondition { key: String, error: nlmag::Error },
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Precondition { error, .. } => match error {
                nlmag::Error::Io(_) | nlmag::Error::Csv(_) | nlmag::Error::Json(_) | nlmag::Error::Internal(_) => 1,
                _ => 3,
            },
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Precondition { key, error } => write!(f, "config key `{key}`: {error}"),
            Failure::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

trait At<T> {
    fn at(self, key: &str) -> Result<T, Failure>;
}

impl<T> At<T> for nlmag::Result<T> {
    fn at(self, key: &str) -> Result<T, Failure> {
        self.map_err(|error| Failure::Precondition {
            key: key.to_string(),
            error,
        })
    }
}

impl<T> At<T> for std::io::Result<T> {
    fn at(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Io(format!("{what}: {e}")))
    }
}

/// Whether every minimization reached its gradient tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

struct Output {
    dir: PathBuf,
    plots: bool,
}

impl Output {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn report(&self, command: Command, cfg: &RunConfig, results: Value) -> Result<(), Failure> {
        let report = json!({
            "command": command.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "results": results,
        });
        let path = self.path("report.json");
        let mut w = BufWriter::new(File::create(&path).at(&path.display().to_string())?);
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        writeln!(w).and_then(|_| w.flush()).at(&path.display().to_string())
    }

    fn csv<const N: usize>(&self, name: &str, header: [&str; N], rows: &[[String; N]]) -> Result<(), Failure> {
        let path = self.path(name);
        let io = |e: csv::Error| Failure::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().at(&path.display().to_string())
    }

    fn script(&self, name: &str, body: &str) -> Result<(), Failure> {
        if !self.plots {
            return Ok(());
        }
        let path = self.path(name);
        std::fs::write(&path, body).at(&path.display().to_string())
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome, Failure> {
    validate(command, cfg)?;
    std::fs::create_dir_all(&cfg.output.dir).map_err(|e| {
        Failure::Config(ConfigError {
            key: "output.dir".into(),
            message: format!("cannot create {}: {e}", cfg.output.dir.display()),
        })
    })?;
    let out = Output {
        dir: cfg.output.dir.clone(),
        plots: cfg.output.plots,
    };
    match command {
        Command::KernelCheck => kernel_check(cfg, &out),
        Command::Energy => energy(cfg, &out),
        Command::Minimize => minimize_cmd(cfg, &out),
        Command::Sweep => sweep(cfg, &out),
        Command::Constants => constants(cfg, &out),
        Command::VortexGap => vortex_gap(cfg, &out),
    }
}

/// Checks every section the command reads before any computation.
pub fn validate(command: Command, cfg: &RunConfig) -> Result<(), ConfigError> {
    match command {
        Command::KernelCheck => {
            cfg.kernel.build()?;
            cfg.kernel_check.validate()
        }
        Command::Energy => {
            cfg.mesh.validate()?;
            cfg.field.validate()?;
            cfg.energy.build(&cfg.kernel).map(|_| ())
        }
        Command::Minimize => {
            cfg.mesh.validate()?;
            cfg.energy.build(&cfg.kernel)?;
            cfg.minimize.options(cfg.seed).map(|_| ())
        }
        Command::Sweep => {
            cfg.kernel.build()?;
            cfg.sweep.grid()?;
            cfg.sweep.settings()?;
            cfg.minimize.options(cfg.seed).map(|_| ())
        }
        Command::Constants => cfg.constants.validate(),
        Command::VortexGap => {
            cfg.vortex_gap.validate()?;
            if cfg.vortex_gap.comparison {
                cfg.kernel.build()?;
            }
            Ok(())
        }
    }
}

fn kernel_check(cfg: &RunConfig, out: &Output) -> Result<Outcome, Failure> {
    let k = cfg.kernel.build()?;
    let kc = &cfg.kernel_check;
    let report = kernel_report(&k, &kc.diameters, cfg.seed).at("kernel")?;
    print!("{}", report.to_table());
    let regime = constant_regime_set(&k, kc.r_min, kc.r_max, kc.points).at("kernel_check")?;
    let small = match critical_radius_small(&k) {
        Ok(s) => json!(s),
        Err(nlmag::Error::Inapplicable(m)) => json!({ "inapplicable": m }),
        Err(e) => return Err(Failure::Precondition { key: "kernel.j5".into(), error: e }),
    };

    let rows: Vec<[String; 4]> = report
        .infimum_table
        .iter()
        .map(|(d, q)| {
            let c_r = if q.value > 0.0 {
                1.0 / (q.value * nlmag::geometry::ball_volume(d / 2.0))
            } else {
                f64::INFINITY
            };
            [num(*d), num(q.value), q.exact.to_string(), num(c_r)]
        })
        .collect();
    out.csv("infimum.csv", ["diameter", "q", "exact", "poincare_constant"], &rows)?;
    let rows: Vec<[String; 2]> = report.tail_decay_table.iter().map(|(r, t)| [num(*r), num(*t)]).collect();
    out.csv("tail_decay.csv", ["R", "tail"], &rows)?;
    if let Some(j3) = &report.j3 {
        let rows: Vec<[String; 2]> = j3.eps.iter().zip(&j3.integrals).map(|(e, i)| [num(*e), num(*i)]).collect();
        out.csv("shell_integrals.csv", ["eps", "integral"], &rows)?;
    }
    let rows: Vec<[String; 4]> = regime
        .iter()
        .map(|iv| [num(iv.lo), num(iv.hi), iv.open_lo.to_string(), iv.open_hi.to_string()])
        .collect();
    out.csv("constant_regime.csv", ["lo", "hi", "open_lo", "open_hi"], &rows)?;
    out.script(
        "tail_decay.gp",
        "set datafile separator ','\nset logscale xy\nset xlabel 'R'\nset ylabel 'R^-2 int_{B_R} |z|^2 j'\n\
         plot 'tail_decay.csv' using 1:($2 + 1e-300) skip 1 with linespoints title 'tail'\n",
    )?;
    out.report(
        Command::KernelCheck,
        cfg,
        json!({
            "kernel": report,
            "constant_regime_set": regime,
            "critical_radius_small": small,
        }),
    )?;
    Ok(Outcome::Done)
}

fn initial_field(cfg: &RunConfig, mesh: &BallMesh) -> Result<Magnetization, Failure> {
    let f = &cfg.field;
    match f.kind.as_str() {
        "constant" => constant_field(mesh, Vec3::from(f.sigma)).at("field.sigma"),
        "vortex" => vortex_field(mesh).at("field"),
        "random" => Ok(random_unit_field(mesh, cfg.seed)),
        "file" => load_field_csv(f.path.as_deref().expect("validated"), mesh).at("field.path"),
        _ => unreachable!("validated"),
    }
}

fn energy_row(b: &EnergyBreakdown) -> [String; 8] {
    b.csv_row()
}

fn energy(cfg: &RunConfig, out: &Output) -> Result<Outcome, Failure> {
    let mesh = cfg.mesh.build().at("mesh")?;
    let energy_cfg = cfg.energy.build(&cfg.kernel)?;
    let m = initial_field(cfg, &mesh)?;
    let model = EnergyModel::new(&mesh, &energy_cfg).at("energy")?;
    let e = model.energy(&m).at("energy")?;
    let deficit = uniformity_deficit(&m).at("field")?;
    println!(
        "E = {:.12e} (exchange {:.6e}, magnetostatic {:.6e}, anisotropy {:.6e}, dmi {:.6e})",
        e.total, e.exchange, e.magnetostatic, e.anisotropy, e.dmi
    );
    out.csv("energy.csv", EnergyBreakdown::CSV_HEADER, &[energy_row(&e)])?;
    write_field_csv(&out.path("field.csv"), &mesh, &m).at("output.dir")?;
    out.report(
        Command::Energy,
        cfg,
        json!({
            "mesh": mesh.summary(),
            "energy": e,
            "constant_energy": constant_energy(mesh.radius()),
            "uniformity_deficit": deficit,
        }),
    )?;
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct RunRow {
    init: String,
    init_energy: f64,
    energy: f64,
    iterations: usize,
    converged: bool,
    grad_norm: f64,
    uniformity_deficit: f64,
}

fn minimize_cmd(cfg: &RunConfig, out: &Output) -> Result<Outcome, Failure> {
    let mesh = cfg.mesh.build().at("mesh")?;
    let energy_cfg = cfg.energy.build(&cfg.kernel)?;
    let opts = cfg.minimize.options(cfg.seed)?;
    let result = minimize(&mesh, &energy_cfg, &opts).at("minimize")?;
    let deficit = uniformity_deficit(&result.minimizer).at("minimize")?;
    println!(
        "best: {} E = {:.12e} after {} iterations (converged: {}), deficit {:.3e}",
        result.init_kind.label(),
        result.energy.total,
        result.iterations,
        result.converged,
        deficit
    );

    write_field_csv(&out.path("minimizer.csv"), &mesh, &result.minimizer).at("output.dir")?;
    if let Some(trace) = &result.trace {
        write_trace_csv(&out.path("trace.csv"), trace).at("output.dir")?;
        out.script(
            "trace.gp",
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'iteration'\nset logscale y\n\
             plot 'trace.csv' using 1:3 with lines title 'gradient density'\n",
        )?;
    }
    let runs: Vec<RunRow> = result
        .runs
        .iter()
        .map(|r| RunRow {
            init: r.init.label(),
            init_energy: r.init_energy,
            energy: r.energy,
            iterations: r.iterations,
            converged: r.converged,
            grad_norm: r.grad_norm,
            uniformity_deficit: r.uniformity_deficit,
        })
        .collect();
    let rows: Vec<[String; 7]> = runs
        .iter()
        .map(|r| {
            [
                r.init.clone(),
                num(r.init_energy),
                num(r.energy),
                r.iterations.to_string(),
                r.converged.to_string(),
                num(r.grad_norm),
                num(r.uniformity_deficit),
            ]
        })
        .collect();
    out.csv(
        "runs.csv",
        ["init", "init_energy", "energy", "iterations", "converged", "grad_norm", "deficit"],
        &rows,
    )?;
    out.csv("energy.csv", EnergyBreakdown::CSV_HEADER, &[energy_row(&result.energy)])?;
    if out.plots {
        write_equatorial_slice(&out.path("slice.dat"), &out.path("slice.gp"), &mesh, &result.minimizer)
            .at("output.dir")?;
    }
    out.report(
        Command::Minimize,
        cfg,
        json!({
            "mesh": mesh.summary(),
            "energy": result.energy,
            "constant_energy": constant_energy(mesh.radius()),
            "best_init": result.init_kind.label(),
            "iterations": result.iterations,
            "converged": result.converged,
            "grad_norm": result.grad_norm,
            "uniformity_deficit": deficit,
            "runs": runs,
        }),
    )?;
    Ok(if result.converged { Outcome::Done } else { Outcome::NotConverged })
}

fn sweep(cfg: &RunConfig, out: &Output) -> Result<Outcome, Failure> {
    let k = cfg.kernel.build()?;
    let grid = cfg.sweep.grid()?;
    let settings = cfg.sweep.settings()?;
    let opts = cfg.minimize.options(cfg.seed)?;
    let rows = regime_sweep(&k, &grid, &settings, &opts).at("sweep")?;
    for r in &rows {
        println!(
            "R = {:<12.6e} best {:<14.6e} constant {:<14.6e} deficit {:<10.3e} {}",
            r.radius,
            r.best_energy,
            r.constant_energy,
            r.deficit,
            r.classification.as_str()
        );
    }
    write_sweep_csv(&out.path("sweep.csv"), &rows).at("output.dir")?;
    if out.plots {
        write_sweep_plot(&out.path("sweep.gp"), "sweep.csv").at("output.dir")?;
    }
    let all_converged = rows.iter().all(|r| r.converged && r.error.is_none());
    out.report(
        Command::Sweep,
        cfg,
        json!({
            "kernel": k.name(),
            "rows": rows,
            "monotone": is_monotone(&rows),
            "all_converged": all_converged,
        }),
    )?;
    Ok(if all_converged { Outcome::Done } else { Outcome::NotConverged })
}

#[derive(Serialize)]
struct ConstantRow {
    name: &'static str,
    value: f64,
    reference: f64,
    relative_error: f64,
    method: String,
}

fn constant_row(name: &'static str, value: f64, reference: f64, method: String) -> ConstantRow {
    ConstantRow {
        name,
        value,
        reference,
        relative_error: (value - reference).abs() / reference.abs(),
        method,
    }
}

fn constants(cfg: &RunConfig, out: &Output) -> Result<Outcome, Failure> {
    use std::f64::consts::PI;
    let c = &cfg.constants;
    let mesh = build_ball_mesh(1.0, c.spacing).at("constants.spacing")?;
    let e3 = constant_field(&mesh, Vec3::z()).at("constants")?;
    let w_const = 4.0 * PI / 9.0;
    let w_volume = magnetostatic_energy(&mesh, &e3).at("constants.spacing")?;
    let h_mean = demag_field(&mesh, &e3).at("constants.spacing")?.mean();
    let sphere = build_sphere_quadrature(1.0, c.n_theta).at("constants.n_theta")?;
    let w_surface = surface_energy(&sphere, &normal_traces(&sphere, |_| Vec3::z())).at("constants.n_theta")?;
    let h1 = h1_norm_vortex(&mesh).at("constants.spacing")?;
    let gap = vortex_energy_gap(1.0, c.n_theta).at("constants.n_theta")?;
    let w_vortex = 212.0 * PI / 1225.0;
    let h = format!("volume sum, h = {}", c.spacing);
    let q = format!("surface quadrature, n_theta = {}", c.n_theta);
    let rows = vec![
        constant_row("W_constant_volume", w_volume, w_const, h.clone()),
        constant_row("W_constant_surface", w_surface, w_const, q.clone()),
        constant_row("W_constant_hemisphere", gap.constant_energy, w_const, q.clone()),
        constant_row("demag_mean_z", h_mean.z, -1.0 / 3.0, h.clone()),
        constant_row("H1_vortex_squared", h1.total, VORTEX_H1_SQUARED, h),
        constant_row("W_vortex_hemisphere", gap.vortex_energy, w_vortex, q.clone()),
        constant_row("c2", gap.c2, C2_CLOSED_FORM, q),
    ];
    for r in &rows {
        println!(
            "{:<24} {:<22.15} reference {:<22.15} rel. error {:.3e}",
            r.name, r.value, r.reference, r.relative_error
        );
    }
    let table: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.name.to_string(),
                num(r.value),
                num(r.reference),
                num(r.relative_error),
                r.method.clone(),
            ]
        })
        .collect();
    out.csv("constants.csv", ["name", "value", "reference", "relative_error", "method"], &table)?;
    out.report(
        Command::Constants,
        cfg,
        json!({
            "constants": rows,
            "demag_mean": [h_mean.x, h_mean.y, h_mean.z],
            "h1_vortex": h1,
            "vortex_gap": gap,
            "mesh": mesh.summary(),
            "quadrature": { "n_theta": sphere.n_theta(), "n_phi": sphere.n_phi(), "nodes": sphere.len() },
        }),
    )?;
    Ok(Outcome::Done)
}

fn vortex_gap(cfg: &RunConfig, out: &Output) -> Result<Outcome, Failure> {
    let v = &cfg.vortex_gap;
    let gaps = v
        .radii
        .iter()
        .map(|&r| vortex_energy_gap(r, v.n_theta))
        .collect::<nlmag::Result<Vec<_>>>()
        .at("vortex_gap")?;
    for g in &gaps {
        println!(
            "R = {:<10} W(e3) = {:<20.14} W(vortex) = {:<20.14} c2 = {:.14} (closed form {:.14})",
            g.radius, g.constant_energy, g.vortex_energy, g.c2, g.c2_closed_form
        );
    }
    let rows: Vec<[String; 6]> = gaps
        .iter()
        .map(|g| {
            [
                num(g.radius),
                num(g.constant_energy),
                num(g.vortex_energy),
                num(g.gap),
                num(g.c2),
                num(g.c2_relative_error),
            ]
        })
        .collect();
    out.csv(
        "vortex_gap.csv",
        ["R", "constant_energy", "vortex_energy", "gap", "c2", "c2_relative_error"],
        &rows,
    )?;

    // The same two energies on the unit ball from the unreduced surface form.
    let sphere = build_sphere_quadrature(1.0, v.n_theta).at("vortex_gap.n_theta")?;
    let hemi = build_hemisphere_quadrature(1.0, v.n_theta).at("vortex_gap.n_theta")?;
    let raw_constant = surface_energy(&sphere, &normal_traces(&sphere, |_| Vec3::z())).at("vortex_gap.n_theta")?;
    let raw_vortex =
        surface_energy(&sphere, &normal_traces(&sphere, |x| vortex_value(x, 1.0))).at("vortex_gap.n_theta")?;
    let hemi_constant = hemisphere_reduced_energy(&hemi, 1).at("vortex_gap.n_theta")?;
    let hemi_vortex = hemisphere_reduced_energy(&hemi, 3).at("vortex_gap.n_theta")?;
    let representations = json!({
        "n_theta": v.n_theta,
        "raw": { "constant": raw_constant, "vortex": raw_vortex },
        "hemisphere": { "constant": hemi_constant, "vortex": hemi_vortex },
        "relative_difference": {
            "constant": (raw_constant - hemi_constant).abs() / hemi_constant,
            "vortex": (raw_vortex - hemi_vortex).abs() / hemi_vortex,
        },
    });

    let mut large = Value::Null;
    if v.comparison {
        let k = cfg.kernel.build()?;
        let settings = ComparisonSettings {
            cells_per_diameter: v.cells_per_diameter,
            n_theta: v.n_theta,
            normalize_volume: true,
        };
        let lr = critical_radius_large_upper(&k, &v.comparison_radii, &settings).at("kernel")?;
        let rows: Vec<[String; 6]> = lr
            .rows
            .iter()
            .map(|r| {
                [
                    num(r.radius),
                    num(r.exchange),
                    num(r.vortex_magnetostatic),
                    num(r.constant_energy),
                    num(r.comparison),
                    num(r.bound_curve),
                ]
            })
            .collect();
        out.csv(
            "comparison.csv",
            ["R", "exchange", "vortex_magnetostatic", "constant_energy", "comparison", "bound_curve"],
            &rows,
        )?;
        out.script(
            "comparison.gp",
            "set datafile separator ','\nset key autotitle columnhead\nset logscale x\nset xlabel 'R'\n\
             set ylabel 'energy / R^3'\nplot 'comparison.csv' using 1:($5/$1**3) with linespoints title 'J + W(vortex) - W(constant)', \\\n     \
             'comparison.csv' using 1:($6/$1**3) with linespoints title 'bound', 0 with lines dashtype 2 notitle\n",
        )?;
        match lr.r_est {
            Some(r) => println!("vortex beats the constant state from R = {r}"),
            None => println!("vortex does not beat the constant state on the grid"),
        }
        large = json!(lr);
    }
    out.report(
        Command::VortexGap,
        cfg,
        json!({
            "gaps": gaps,
            "c2_closed_form": C2_CLOSED_FORM,
            "representations": representations,
            "comparison": large,
        }),
    )?;
    Ok(Outcome::Done)
}

