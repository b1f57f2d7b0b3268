//! One-dimensional quadrature: Gauss–Legendre rules and globally adaptive
//! Gauss–Kronrod (7/15) integration.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Panel {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of Kronrod–Gauss differences over the final panels.
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive G7/K15 integration of `f` over `[a, b]`.
///
/// The panel with the largest error estimate is bisected until the total
/// estimate drops below `max(abs_tol, rel_tol * |value|)` or `max_panels`
/// is reached.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            error: 0.0,
            panels: 0,
        };
    }
    let mut panels = vec![kronrod15(&f, a, b)];
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || panels.len() >= max_panels {
            return Integral {
                value,
                error,
                panels: panels.len(),
            };
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        panels.push(kronrod15(&f, p.a, mid));
        panels.push(kronrod15(&f, mid, p.b));
    }
}

/// Integrates over `[a, b]` with `0 < a < b` using geometric panels
/// (ratio 2), suited to integrands with power-law behaviour at `a`.
pub fn integrate_geometric<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Integral {
    assert!(a > 0.0 && b > a);
    let mut lo = a;
    let mut total = Integral {
        value: 0.0,
        error: 0.0,
        panels: 0,
    };
    while lo < b {
        let hi = (2.0 * lo).min(b);
        let part = integrate(&f, lo, hi, 0.0, rel_tol, 200);
        total.value += part.value;
        total.error += part.error;
        total.panels += part.panels;
        lo = hi;
    }
    total
}

/// Local power-law exponent of `g` at `r` from the ratio `g(r)/g(r/2)`.
pub fn local_exponent<F: Fn(f64) -> f64>(g: F, r: f64) -> Option<f64> {
    let g1 = g(r);
    let g0 = g(0.5 * r);
    if g1 > 0.0 && g0 > 0.0 && g1.is_finite() && g0.is_finite() {
        Some((g1 / g0).ln() / 2f64.ln())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // degree 15 is the exactness limit for 8 nodes
        let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((approx - 2.0 / 15.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_nodes_are_symmetric_and_sorted() {
        for n in [1, 2, 5, 16, 64, 129] {
            let (x, w) = gauss_legendre(n);
            for i in 0..n {
                assert!((x[i] + x[n - 1 - i]).abs() < 1e-15);
                assert!((w[i] - w[n - 1 - i]).abs() < 1e-15);
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn adaptive_handles_smooth_and_endpoint_singular() {
        let r = integrate(|x: f64| x.exp(), 0.0, 1.0, 0.0, 1e-13, 100);
        assert!((r.value - (1f64.exp() - 1.0)).abs() < 1e-13);
        let s = integrate_geometric(|x: f64| x.powf(-0.5), 1e-12, 1.0, 1e-12);
        assert!((s.value - 2.0 * (1.0 - 1e-6)).abs() < 1e-10);
    }

    #[test]
    fn local_exponent_recovers_power() {
        let e = local_exponent(|r| r.powf(-1.5), 3.0).unwrap();
        assert!((e + 1.5).abs() < 1e-12);
    }
}
