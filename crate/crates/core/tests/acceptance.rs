//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion outside `KNOWN_UNATTAINABLE` fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nlmag::energies::{
    anisotropy_energy, dmi_energy, dmi_l1_norm, exchange_energy, generalized_energy, Anisotropy, DmiKernel,
    EnergyConfig, EnergyModel, PairPotential, PsiKind,
};
use nlmag::fields::{constant_field, h1_norm_vortex, random_unit_field, vortex_value};
use nlmag::geometry::{
    build_ball_mesh, build_ball_mesh_per_diameter, build_hemisphere_quadrature, build_sphere_quadrature,
};
use nlmag::kernels::{levy_constant, make_builtin_kernel, tail_decay_table, J5Params, Kernel, KernelSpec, RadialQuadrature, Tail};
use nlmag::magnetostatics::{
    demag_field, hemisphere_reduced_energy, magnetostatic_bilinear, magnetostatic_energy, normal_traces,
    surface_energy, vortex_energy_gap, C2_CLOSED_FORM,
};
use nlmag::minimize::{project_tangent, retract, InitKind, MinimizeOptions, StepRule};
use nlmag::regimes::{
    constant_regime_set, critical_radius_small, discrete_poincare, geometric_grid, poincare_constant, regime_sweep,
    Classification, SweepSettings,
};
use nlmag::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that contradict the definitions they test; see the notes
/// printed with each.
const KNOWN_UNATTAINABLE: [&str; 2] = ["4b", "6b"];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn kernel(spec: KernelSpec) -> Kernel {
    make_builtin_kernel(&spec).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn uniform_sphere() -> Verdict {
    let w_ref = 4.0 * PI / 9.0;
    let mesh = build_ball_mesh(1.0, 0.05).unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for sigma in [Vec3::z(), Vec3::new(1.0, -2.0, 2.0) / 3.0] {
        let m = constant_field(&mesh, sigma).unwrap();
        let w = magnetostatic_energy(&mesh, &m).unwrap();
        let mean = demag_field(&mesh, &m).unwrap().mean();
        let mean_err = (mean + sigma / 3.0).norm() / (1.0 / 3.0);
        pass &= rel(w, w_ref) < 0.02 && mean_err < 0.02;
        notes.push(format!("W_vol err {:.2e}, <h_d> err {:.2e}", rel(w, w_ref), mean_err));
    }
    let quad = build_sphere_quadrature(1.0, 64).unwrap();
    let w_surf = surface_energy(&quad, &normal_traces(&quad, |_| Vec3::z())).unwrap();
    pass &= rel(w_surf, w_ref) < 0.005;
    notes.push(format!("W_surf err {:.2e}", rel(w_surf, w_ref)));
    verdict(pass, notes.join("; "))
}

fn h1_constant() -> Verdict {
    let reference = 4.0 / 15.0 * PI * (73.0 - 15.0 * PI);
    let mesh = build_ball_mesh(1.0, 0.05).unwrap();
    let h1 = h1_norm_vortex(&mesh).unwrap();
    let e = rel(h1.total, reference);
    verdict(e < 0.01, format!("{:.6} vs {reference:.6}, rel err {e:.2e}", h1.total))
}

fn golden_c2() -> Vec<(usize, f64, f64)> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/golden.toml")).unwrap();
    let table: toml::Table = toml::from_str(&text).unwrap();
    table["surface"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| {
            (
                row["n_theta"].as_integer().unwrap() as usize,
                row["c2"].as_float().unwrap(),
                row["c2_error_bar"].as_float().unwrap(),
            )
        })
        .collect()
}

fn vortex_gap() -> Verdict {
    let g1 = vortex_energy_gap(1.0, 128).unwrap();
    let g2 = vortex_energy_gap(2.0, 128).unwrap();
    let scaling = rel(g2.c2, g1.c2);
    let sphere = build_sphere_quadrature(1.0, 128).unwrap();
    let hemi = build_hemisphere_quadrature(1.0, 128).unwrap();
    let raw_c = surface_energy(&sphere, &normal_traces(&sphere, |_| Vec3::z())).unwrap();
    let raw_v = surface_energy(&sphere, &normal_traces(&sphere, |x| vortex_value(x, 1.0))).unwrap();
    let rep = rel(raw_c, hemisphere_reduced_energy(&hemi, 1).unwrap())
        .max(rel(raw_v, hemisphere_reduced_energy(&hemi, 3).unwrap()));
    let mut golden_ok = true;
    for (n, c2, bar) in golden_c2() {
        let g = vortex_energy_gap(1.0, n).unwrap();
        golden_ok &= rel(g.c2, c2) < 1e-10 && (c2 - C2_CLOSED_FORM).abs() <= bar;
    }
    verdict(
        g1.c2 > 0.0 && scaling < 1e-6 && rep < 0.005 && golden_ok,
        format!(
            "c2 = {:.8} (closed form {C2_CLOSED_FORM:.8}), R-scaling diff {scaling:.1e}, raw vs hemisphere {rep:.1e}, golden {}",
            g1.c2,
            if golden_ok { "match" } else { "MISMATCH" }
        ),
    )
}

fn regime_constant_one() -> Verdict {
    let set = constant_regime_set(&kernel(KernelSpec::ConstantOne), 0.05, 5.0, 200).unwrap();
    let target = (4.0 * PI).powf(-1.0 / 3.0);
    let ok = set.len() == 1 && (set[0].lo - target).abs() < 1e-4 && set[0].open_hi;
    verdict(ok, format!("intervals {:?}, threshold {target:.5}", set.iter().map(|i| (i.lo, i.hi)).collect::<Vec<_>>()))
}

fn regime_gaussian() -> Verdict {
    let set = constant_regime_set(&kernel(KernelSpec::Gaussian4), 0.05, 5.0, 200).unwrap();
    let ok = set.len() == 1 && (set[0].lo - 0.28).abs() <= 0.02 && (set[0].hi - 2.61).abs() <= 0.02;
    verdict(
        ok,
        format!(
            "intervals {:?}, expected (0.28, 2.61); Q over |z| < 2R gives these endpoints, the expected ones need Q = j(R)",
            set.iter().map(|i| (i.lo, i.hi)).collect::<Vec<_>>()
        ),
    )
}

fn small_radius() -> Verdict {
    let k = kernel(KernelSpec::Fractional { s: 0.5 }).with_j5(J5Params {
        c: 1.0,
        s: 0.5,
        r0: Some(10.0),
    });
    let r = critical_radius_small(&k).unwrap();
    let e = (r.r_star - PI / 4.0).abs();
    verdict(e <= 4.0 * f64::EPSILON, format!("R* = {:.16}, pi/4 = {:.16}", r.r_star, PI / 4.0))
}

fn levy() -> Verdict {
    let mut worst: f64 = 0.0;
    for s in [0.25, 0.5, 0.75] {
        let est = levy_constant(&kernel(KernelSpec::Fractional { s }), &RadialQuadrature::default()).unwrap();
        let exact = 4.0 * PI * (1.0 / (2.0 - 2.0 * s) + 1.0 / (2.0 * s));
        worst = worst.max(est.value.map_or(f64::INFINITY, |v| rel(v, exact)));
    }
    verdict(worst < 1e-6, format!("worst rel err {worst:.2e}"))
}

fn tail_decay() -> Verdict {
    let table = tail_decay_table(&kernel(KernelSpec::Gaussian4), &[1.0, 2.0, 5.0, 10.0]).unwrap();
    let t10 = table[3].1;
    verdict(
        t10 < 1e-6,
        format!("T(10) = {t10:.4}; R^-2 int_{{B_R}} |z|^2 j tends to 6 pi^1.5 / R^2, so T(10) ~ 0.33"),
    )
}

fn poincare() -> Verdict {
    let kernels = [
        kernel(KernelSpec::Gaussian4),
        kernel(KernelSpec::TruncatedFractional {
            s: 0.5,
            tail: Tail::Exponential { rate: 1.0 },
        }),
    ];
    let mut checks = 0;
    let mut violations = 0;
    for k in &kernels {
        for r in [0.5, 1.0] {
            let mesh = build_ball_mesh_per_diameter(r, 10).unwrap();
            let c_r = poincare_constant(k, r).unwrap().value;
            for seed in 0..20 {
                let m = random_unit_field(&mesh, seed);
                checks += 1;
                if !discrete_poincare(&mesh, k, &m, c_r).unwrap().holds {
                    violations += 1;
                }
            }
        }
    }
    verdict(violations == 0, format!("{violations} violations in {checks} checks"))
}

fn magnetostatic_inequality() -> Verdict {
    let mesh = build_ball_mesh(1.0, 0.1).unwrap();
    let mut worst_sym: f64 = 0.0;
    let mut violations = 0;
    for seed in 0..50u64 {
        let m = random_unit_field(&mesh, 2 * seed);
        let u = random_unit_field(&mesh, 2 * seed + 1);
        let wmu = magnetostatic_bilinear(&mesh, &m, &u).unwrap();
        let wum = magnetostatic_bilinear(&mesh, &u, &m).unwrap();
        let wmm = magnetostatic_energy(&mesh, &m).unwrap();
        let wuu = magnetostatic_energy(&mesh, &u).unwrap();
        let scale = wmm.abs() + wuu.abs() + 2.0 * wmu.abs();
        worst_sym = worst_sym.max((wmu - wum).abs() / scale);
        if wmm + wuu - 2.0 * wmu < -1e-10 * scale {
            violations += 1;
        }
    }
    verdict(
        worst_sym < 1e-10 && violations == 0,
        format!("asymmetry {worst_sym:.1e}, {violations} convexity violations"),
    )
}

fn gradient() -> Verdict {
    let mesh = build_ball_mesh(1.0, 0.2).unwrap();
    let config = EnergyConfig {
        exchange: Some(kernel(KernelSpec::TruncatedFractional {
            s: 0.5,
            tail: Tail::Exponential { rate: 1.0 },
        })),
        magnetostatic: true,
        anisotropy: Some(Anisotropy::uniaxial(Vec3::new(1.0, 2.0, -1.0), 0.7).unwrap()),
        dmi: Some(DmiKernel::gaussian(1.5, 0.5).unwrap()),
    };
    let model = EnergyModel::new(&mesh, &config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let eps = 1e-5;
    for seed in 0..5 {
        let m = random_unit_field(&mesh, 100 + seed);
        let (_, g) = model.energy_and_gradient(&m).unwrap();
        let pg = project_tangent(&m, &g).unwrap();
        for _ in 0..10 {
            let i = rng.random_range(0..mesh.cell_count());
            let mi = m.values()[i];
            let a = mi.cross(&Vec3::new(0.3, -0.5, 0.8)).normalize();
            for t in [a, mi.cross(&a)] {
                let energy_at = |e: f64| {
                    let mut v = vec![Vec3::zeros(); mesh.cell_count()];
                    v[i] = t;
                    model.energy(&retract(&m, &v, e).unwrap()).unwrap().total
                };
                let fd = (energy_at(eps) - energy_at(-eps)) / (2.0 * eps);
                let an = pg[i].dot(&t);
                worst = worst.max((fd - an).abs() / pg[i].norm());
            }
        }
    }
    verdict(worst < 1e-5, format!("worst rel err {worst:.2e}"))
}

fn regime_sweep_transition() -> Verdict {
    let k = kernel(KernelSpec::TruncatedFractional {
        s: 0.5,
        tail: Tail::Exponential { rate: 1.0 },
    })
    .scaled(0.01)
    .unwrap();
    let grid = geometric_grid(0.005, 5.0, 10).unwrap();
    let opts = MinimizeOptions {
        max_iters: 300,
        grad_tol: 1e-6,
        step_rule: StepRule::BarzilaiBorweinWithBacktracking,
        init_kinds: vec![
            InitKind::ConstantE3,
            InitKind::Vortex,
            InitKind::Random { seed: 0 },
            InitKind::Random { seed: 1 },
            InitKind::Random { seed: 2 },
        ],
        record_trace: false,
    };
    let rows = regime_sweep(&k, &grid, &SweepSettings::default(), &opts).unwrap();
    let rank = |c: Classification| match c {
        Classification::Constant => 0,
        Classification::Indeterminate => 1,
        Classification::Nonconstant => 2,
    };
    let labels: Vec<&str> = rows.iter().map(|r| r.classification.as_str()).collect();
    let n = rows.len();
    let ok = rows[..2].iter().all(|r| r.classification == Classification::Constant)
        && rows[n - 2..].iter().all(|r| r.classification == Classification::Nonconstant)
        && rows.windows(2).all(|w| rank(w[0].classification) <= rank(w[1].classification));
    let ratios: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.best_energy / r.constant_energy)).collect();
    verdict(ok, format!("{} | E/E_const {}", labels.join(","), ratios.join(",")))
}

fn sandwich() -> Verdict {
    let mesh = build_ball_mesh(1.0, 0.2).unwrap();
    let k = kernel(KernelSpec::Gaussian4);
    let chord = PairPotential::new(PsiKind::SquaredChord);
    let geo = PairPotential::new(PsiKind::SquaredGeodesic);
    let lambda = geo.lambda;
    let mut violations = 0;
    for seed in 0..20 {
        let m = random_unit_field(&mesh, 500 + seed);
        let j = exchange_energy(&mesh, &k, &m).unwrap();
        let kf = generalized_energy(&mesh, &chord, &k, &m).unwrap();
        let f = generalized_energy(&mesh, &geo, &k, &m).unwrap();
        let tol = 1e-12 * lambda.powi(3) * kf;
        let chain = [j, lambda * kf, lambda * lambda * f, lambda.powi(3) * kf];
        if chain.windows(2).any(|w| w[0] > w[1] + tol) {
            violations += 1;
        }
    }
    verdict(
        violations == 0 && (lambda - PI * PI / 4.0).abs() < 1e-15,
        format!("Lambda = {lambda:.6}, {violations} violations in 20 fields"),
    )
}

fn dmi_anisotropy() -> Verdict {
    let mesh = build_ball_mesh(1.0, 0.2).unwrap();
    let mu = DmiKernel::gaussian(2.0, 0.4).unwrap();
    let sigma = Vec3::new(0.6, 0.0, 0.8);
    let d_const = dmi_energy(&mesh, &mu, &constant_field(&mesh, sigma).unwrap()).unwrap();
    let l1 = dmi_l1_norm(&mesh, &mu);
    let vol = mesh.total_volume();
    let mut violations = 0;
    for seed in 0..20 {
        let a = random_unit_field(&mesh, 900 + seed);
        let b = random_unit_field(&mesh, 950 + seed);
        let dist = (mesh.weight()
            * a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_squared()).sum::<f64>())
        .sqrt();
        let lhs = (dmi_energy(&mesh, &mu, &a).unwrap() - dmi_energy(&mesh, &mu, &b).unwrap()).abs();
        if lhs > 2.0 * vol.sqrt() * l1 * dist {
            violations += 1;
        }
    }
    let phi = Anisotropy::uniaxial(sigma, 1.3).unwrap();
    let a_const = anisotropy_energy(&mesh, &phi, &constant_field(&mesh, sigma).unwrap()).unwrap();
    verdict(
        d_const == 0.0 && violations == 0 && a_const == 0.0,
        format!("D(const) = {d_const:e}, {violations} Lipschitz violations, A(easy axis) = {a_const:e}"),
    )
}

fn main() {
    type Check = fn() -> Verdict;
    let criteria: [(&str, &str, Duration, Check); 14] = [
        ("1", "uniform-sphere magnetostatics", Duration::from_secs(60), uniform_sphere),
        ("2", "H1 constant of the vortex", Duration::from_secs(10), h1_constant),
        ("3", "vortex gap c2", Duration::from_secs(120), vortex_gap),
        ("4a", "constant-regime threshold, j = 1", Duration::from_secs(5), regime_constant_one),
        ("4b", "constant-regime endpoints, j = 4exp(-|z|^2)", Duration::from_secs(5), regime_gaussian),
        ("5", "small-body radius closed form", Duration::from_secs(1), small_radius),
        ("6a", "Levy constant of fractional kernels", Duration::from_secs(5), levy),
        ("6b", "tail decay of gaussian4 at R = 10", Duration::from_secs(5), tail_decay),
        ("7", "discrete Poincare inequality", Duration::from_secs(60), poincare),
        ("8", "magnetostatic symmetry and convexity", Duration::from_secs(60), magnetostatic_inequality),
        ("9", "projected gradient vs finite differences", Duration::from_secs(60), gradient),
        ("10", "regime-transition sweep", Duration::from_secs(30 * 60), regime_sweep_transition),
        ("11", "energy sandwich, geodesic psi", Duration::from_secs(30), sandwich),
        ("12", "DMI and anisotropy contracts", Duration::from_secs(30), dmi_anisotropy),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for (id, name, budget, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let pass = v.pass && elapsed <= budget;
        println!(
            "{} [{id}] {name}: {} ({:.1} s, budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !pass && !KNOWN_UNATTAINABLE.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
