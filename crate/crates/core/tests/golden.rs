use nlmag::geometry::{build_hemisphere_quadrature, build_sphere_quadrature};
use nlmag::magnetostatics::{hemisphere_reduced_energy, normal_traces, surface_energy, vortex_energy_gap, C2_CLOSED_FORM};
use nlmag::fields::vortex_value;
use nlmag::Vec3;

#[derive(serde::Deserialize)]
struct Golden {
    surface: Vec<Surface>,
}

#[derive(serde::Deserialize)]
#[allow(dead_code)]
struct Surface {
    n_theta: usize,
    hemisphere_constant: f64,
    hemisphere_vortex: f64,
    raw_constant: f64,
    raw_vortex: f64,
    c2: f64,
    c2_error_bar: f64,
}

fn golden() -> Golden {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/golden.toml")).unwrap();
    toml::from_str(&text).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-11 * b.abs()
}

#[test]
fn hemisphere_energies_match_reference_quadrature() {
    for g in golden().surface.into_iter().filter(|g| g.n_theta <= 64) {
        let hemi = build_hemisphere_quadrature(1.0, g.n_theta).unwrap();
        assert!(close(hemisphere_reduced_energy(&hemi, 1).unwrap(), g.hemisphere_constant));
        assert!(close(hemisphere_reduced_energy(&hemi, 3).unwrap(), g.hemisphere_vortex));
        let gap = vortex_energy_gap(1.0, g.n_theta).unwrap();
        assert!(close(gap.c2, g.c2));
        assert!((gap.c2 - C2_CLOSED_FORM).abs() <= g.c2_error_bar);
    }
}

#[test]
fn raw_surface_energies_match_reference_quadrature() {
    for g in golden().surface.into_iter().filter(|g| g.n_theta <= 64) {
        let q = build_sphere_quadrature(1.0, g.n_theta).unwrap();
        let c = surface_energy(&q, &normal_traces(&q, |_| Vec3::z())).unwrap();
        let v = surface_energy(&q, &normal_traces(&q, |x| vortex_value(x, 1.0))).unwrap();
        assert!(close(c, g.raw_constant), "{c} vs {}", g.raw_constant);
        assert!(close(v, g.raw_vortex), "{v} vs {}", g.raw_vortex);
    }
}

#[test]
fn error_bars_shrink_with_resolution() {
    let g = golden().surface;
    assert!(g.windows(2).all(|w| w[0].n_theta < w[1].n_theta && w[0].c2_error_bar > w[1].c2_error_bar));
    for s in &g {
        assert!((s.c2 - C2_CLOSED_FORM).abs() <= s.c2_error_bar);
    }
}
