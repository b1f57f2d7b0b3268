//! Interaction kernels `j: R^3 -> [0, inf]` and numerical diagnostics of the
//! structural assumptions on them: symmetry, finite Lévy constant,
//! non-integrability at the origin, positive infimum on a ball and the
//! fractional lower bound `j(z) >= C / |z|^{3+2s}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_geometric, local_exponent};
use crate::Vec3;

/// A kernel value. Singular kernels report `Infinite` at the origin rather
/// than a large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelValue {
    Finite(f64),
    Infinite,
}

impl KernelValue {
    fn from_raw(v: f64) -> Self {
        if v.is_infinite() {
            KernelValue::Infinite
        } else {
            KernelValue::Finite(v)
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            KernelValue::Finite(v) => Some(v),
            KernelValue::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, KernelValue::Infinite)
    }
}

/// Parameters of the lower bound `j(z) >= C / |z|^{3+2s}` for `|z| < R0`.
/// `r0 = None` means the bound holds on all of `R^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct J5Params {
    pub c: f64,
    pub s: f64,
    #[serde(default)]
    pub r0: Option<f64>,
}

impl J5Params {
    pub fn r0_or_inf(&self) -> f64 {
        self.r0.unwrap_or(f64::INFINITY)
    }
}

/// Behaviour of a truncated fractional kernel outside the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Tail {
    #[default]
    Zero,
    /// `exp(-rate (|z| - 1))`, continuous at `|z| = 1`.
    Exponential { rate: f64 },
}

/// The built-in kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `|z|^{-(3+2s)}`
    Fractional { s: f64 },
    /// `|z|^{-(3+2s)}` inside the unit ball, `tail` outside.
    TruncatedFractional { s: f64, tail: Tail },
    /// `j = 1`
    ConstantOne,
    /// `4 exp(-|z|^2)`
    Gaussian4,
    /// `exp(-gamma |z|) / |z|`
    Rogers { gamma: f64 },
    /// `|z|^{-exponent}`; exponent 3 is the scale-invariant borderline case.
    Power { exponent: f64 },
}

type PointFn = dyn Fn(&Vec3) -> f64 + Send + Sync;
type RadialFn = dyn Fn(f64) -> f64 + Send + Sync;

/// An interaction kernel with optional radial profile and metadata.
#[derive(Clone)]
pub struct Kernel {
    name: String,
    eval: Arc<PointFn>,
    radial: Option<Arc<RadialFn>>,
    radial_monotone: bool,
    j5: Option<J5Params>,
    spec: Option<KernelSpec>,
    amplitude: f64,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("radial", &self.radial.is_some())
            .field("radial_monotone", &self.radial_monotone)
            .field("j5", &self.j5)
            .field("amplitude", &self.amplitude)
            .finish()
    }
}

impl Kernel {
    /// A radial kernel `j(z) = profile(|z|)`.
    pub fn radial<G>(name: impl Into<String>, profile: G, monotone: bool) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let profile: Arc<RadialFn> = Arc::new(profile);
        let p = Arc::clone(&profile);
        Kernel {
            name: name.into(),
            eval: Arc::new(move |z: &Vec3| p(z.norm())),
            radial: Some(profile),
            radial_monotone: monotone,
            j5: None,
            spec: None,
            amplitude: 1.0,
        }
    }

    /// An arbitrary (possibly anisotropic or asymmetric) kernel.
    pub fn custom<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&Vec3) -> f64 + Send + Sync + 'static,
    {
        Kernel {
            name: name.into(),
            eval: Arc::new(eval),
            radial: None,
            radial_monotone: false,
            j5: None,
            spec: None,
            amplitude: 1.0,
        }
    }

    pub fn with_j5(mut self, j5: J5Params) -> Self {
        self.j5 = Some(j5);
        self
    }

    /// Multiplies the kernel by `factor >= 0`. The (J5) constant scales too.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::param("amplitude", format!("must be finite and >= 0, got {factor}")));
        }
        let eval = Arc::clone(&self.eval);
        let radial = self.radial.as_ref().map(|g| {
            let g = Arc::clone(g);
            Arc::new(move |r: f64| scale_value(factor, g(r))) as Arc<RadialFn>
        });
        let j5 = self.j5.map(|p| J5Params { c: p.c * factor, ..p });
        Ok(Kernel {
            name: self.name.clone(),
            eval: Arc::new(move |z: &Vec3| scale_value(factor, eval(z))),
            radial,
            radial_monotone: self.radial_monotone,
            j5: if factor > 0.0 { j5 } else { None },
            spec: self.spec,
            amplitude: self.amplitude * factor,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> Option<KernelSpec> {
        self.spec
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn radial_monotone(&self) -> bool {
        self.radial_monotone
    }

    pub fn is_radial(&self) -> bool {
        self.radial.is_some()
    }

    pub fn j5_params(&self) -> Option<J5Params> {
        self.j5
    }

    pub fn value(&self, z: &Vec3) -> KernelValue {
        KernelValue::from_raw((self.eval)(z))
    }

    /// Raw evaluation; `f64::INFINITY` at singular points.
    pub(crate) fn raw(&self, z: &Vec3) -> f64 {
        (self.eval)(z)
    }

    /// Radial profile `g(r)` when the kernel is radial.
    pub fn profile(&self, r: f64) -> Option<f64> {
        self.radial.as_ref().map(|g| g(r))
    }
}

fn scale_value(factor: f64, v: f64) -> f64 {
    if factor == 0.0 {
        0.0
    } else {
        factor * v
    }
}

fn check_s(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::param("s", format!("must lie in (0, 1), got {s}")))
    }
}

fn inv_pow(r: f64, p: f64) -> f64 {
    if r == 0.0 {
        f64::INFINITY
    } else {
        r.powf(-p)
    }
}

/// Builds one of the built-in kernels.
pub fn make_builtin_kernel(spec: &KernelSpec) -> Result<Kernel> {
    let mut kernel = match *spec {
        KernelSpec::Fractional { s } => {
            check_s(s)?;
            let p = 3.0 + 2.0 * s;
            Kernel::radial(format!("fractional(s={s})"), move |r| inv_pow(r, p), true).with_j5(
                J5Params { c: 1.0, s, r0: None },
            )
        }
        KernelSpec::TruncatedFractional { s, tail } => {
            check_s(s)?;
            if let Tail::Exponential { rate } = tail {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::param("tail.rate", format!("must be > 0, got {rate}")));
                }
            }
            let p = 3.0 + 2.0 * s;
            let name = match tail {
                Tail::Zero => format!("truncated_fractional(s={s})"),
                Tail::Exponential { rate } => {
                    format!("truncated_fractional(s={s}, exp tail rate={rate})")
                }
            };
            Kernel::radial(
                name,
                move |r| {
                    if r < 1.0 {
                        inv_pow(r, p)
                    } else {
                        match tail {
                            Tail::Zero => 0.0,
                            Tail::Exponential { rate } => (-rate * (r - 1.0)).exp(),
                        }
                    }
                },
                true,
            )
            .with_j5(J5Params { c: 1.0, s, r0: Some(1.0) })
        }
        KernelSpec::ConstantOne => Kernel::radial("constant_one", |_| 1.0, true),
        KernelSpec::Gaussian4 => Kernel::radial("gaussian4", |r| 4.0 * (-r * r).exp(), true),
        KernelSpec::Rogers { gamma } => {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::param("gamma", format!("must be > 0, got {gamma}")));
            }
            Kernel::radial(
                format!("rogers(gamma={gamma})"),
                move |r| if r == 0.0 { f64::INFINITY } else { (-gamma * r).exp() / r },
                true,
            )
        }
        KernelSpec::Power { exponent } => {
            if !(exponent > 0.0 && exponent.is_finite()) {
                return Err(Error::param("exponent", format!("must be > 0, got {exponent}")));
            }
            let k = Kernel::radial(format!("power(p={exponent})"), move |r| inv_pow(r, exponent), true);
            let s = 0.5 * (exponent - 3.0);
            if s > 0.0 && s < 1.0 {
                k.with_j5(J5Params { c: 1.0, s, r0: None })
            } else {
                k
            }
        }
    };
    kernel.spec = Some(*spec);
    Ok(kernel)
}

/// Outcome of the (J1) symmetry spot check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryCheck {
    pub symmetric: bool,
    pub max_asymmetry: f64,
    pub samples: usize,
}

/// Compares `j(z)` with `j(-z)` at `samples` random points spread over
/// several decades of `|z|`.
pub fn check_symmetry(k: &Kernel, samples: usize, seed: u64) -> Result<SymmetryCheck> {
    if samples == 0 {
        return Err(Error::param("samples", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let z = random_point(&mut rng, 1e-2, 1e2);
        let a = k.raw(&z);
        let b = k.raw(&(-z));
        let diff = if a.is_infinite() && b.is_infinite() {
            0.0
        } else if a.is_infinite() || b.is_infinite() {
            f64::INFINITY
        } else {
            (a - b).abs()
        };
        worst = worst.max(diff);
    }
    Ok(SymmetryCheck {
        symmetric: worst == 0.0,
        max_asymmetry: worst,
        samples,
    })
}

fn random_direction(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// A random point with log-uniform radius in `[r_min, r_max]`.
fn random_point(rng: &mut impl Rng, r_min: f64, r_max: f64) -> Vec3 {
    let t: f64 = rng.random();
    let r = (r_min.ln() + t * (r_max / r_min).ln()).exp();
    random_direction(rng) * r
}

/// Settings for the radial Lévy-constant quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialQuadrature {
    /// Inner cutoff; the part below it is extrapolated from the local power law.
    pub inner_cutoff: f64,
    /// First outer cutoff; doubled until the relative change is below `rel_tol`.
    pub outer_start: f64,
    pub rel_tol: f64,
    pub max_doublings: usize,
    /// Samples for the Monte Carlo fallback on non-radial kernels.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for RadialQuadrature {
    fn default() -> Self {
        RadialQuadrature {
            inner_cutoff: 1e-8,
            outer_start: 1.0,
            rel_tol: 1e-8,
            max_doublings: 160,
            mc_samples: 200_000,
            seed: 7,
        }
    }
}

/// Estimate of `L_j = ∫ min{1,|z|^2} j(z) dz`. `value == None` means the
/// truncated integrals did not stabilize (reported as infinite).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevyEstimate {
    pub value: Option<f64>,
    pub error: f64,
    pub outer_cutoff: f64,
    pub stochastic: bool,
}

impl LevyEstimate {
    pub fn is_infinite(&self) -> bool {
        self.value.is_none()
    }
}

/// Integral of `f` over `[0, b]` where `f` may be singular at 0. Returns
/// `None` if the local exponent at the cutoff shows non-integrability.
fn integrate_from_origin<F: Fn(f64) -> f64>(f: F, eps: f64, b: f64, rel_tol: f64) -> Option<(f64, f64)> {
    if b <= eps {
        return Some((0.0, 0.0));
    }
    let main = integrate_geometric(&f, eps, b, rel_tol);
    let fe = f(eps);
    let corr = if fe == 0.0 {
        0.0
    } else {
        match local_exponent(&f, eps) {
            Some(a) if a > -1.0 => eps * fe / (a + 1.0),
            Some(_) => return None,
            None => 0.0,
        }
    };
    Some((main.value + corr, main.error + 1e-3 * corr.abs()))
}

/// Lévy constant of `k`. Radial kernels use adaptive radial quadrature with
/// cutoff doubling; anything else falls back to Monte Carlo (flagged).
pub fn levy_constant(k: &Kernel, quad: &RadialQuadrature) -> Result<LevyEstimate> {
    let Some(g) = k.radial.as_ref() else {
        return Ok(levy_monte_carlo(k, quad));
    };
    let four_pi = 4.0 * PI;
    let inner = |r: f64| r.powi(4) * g(r);
    let Some((core, core_err)) = integrate_from_origin(inner, quad.inner_cutoff, 1.0, quad.rel_tol * 1e-2)
    else {
        return Ok(LevyEstimate {
            value: None,
            error: f64::INFINITY,
            outer_cutoff: 1.0,
            stochastic: false,
        });
    };
    let outer = |r: f64| r * r * g(r);
    let mut total = core;
    let mut err = core_err;
    let mut lo = 1.0f64.max(quad.outer_start);
    if lo > 1.0 {
        let p = integrate(outer, 1.0, lo, 0.0, quad.rel_tol * 1e-2, 400);
        total += p.value;
        err += p.error;
    }
    let mut prev_piece = f64::INFINITY;
    let mut growing = 0usize;
    for _ in 0..quad.max_doublings {
        let hi = 2.0 * lo;
        let piece = integrate(outer, lo, hi, 0.0, quad.rel_tol * 1e-2, 400);
        total += piece.value;
        err += piece.error;
        lo = hi;
        if piece.value.abs() <= quad.rel_tol * total.abs() {
            let tail = match local_exponent(outer, lo) {
                Some(a) if a < -1.0 => -lo * outer(lo) / (a + 1.0),
                _ => 0.0,
            };
            return Ok(LevyEstimate {
                value: Some(four_pi * (total + tail)),
                error: four_pi * (err + piece.value.abs() + 1e-3 * tail.abs()),
                outer_cutoff: lo,
                stochastic: false,
            });
        }
        if piece.value >= prev_piece {
            growing += 1;
            if growing >= 8 {
                break;
            }
        } else {
            growing = 0;
        }
        prev_piece = piece.value;
    }
    Ok(LevyEstimate {
        value: None,
        error: f64::INFINITY,
        outer_cutoff: lo,
        stochastic: false,
    })
}

/// Log-radial importance sampling of `min{1,|z|^2} j(z)` on a ball of
/// radius `outer_start * 2^20`.
fn levy_monte_carlo(k: &Kernel, quad: &RadialQuadrature) -> LevyEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(quad.seed);
    let r_min = quad.inner_cutoff;
    let r_max = quad.outer_start * 2f64.powi(20);
    let log_span = (r_max / r_min).ln();
    let n = quad.mc_samples.max(1);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let z = random_point(&mut rng, r_min, r_max);
        let r = z.norm();
        let v = r.powi(2).min(1.0) * k.raw(&z) * 4.0 * PI * r.powi(3) * log_span;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    let stderr = (var / n as f64).sqrt();
    LevyEstimate {
        value: if mean.is_finite() { Some(mean) } else { None },
        error: 3.0 * stderr,
        outer_cutoff: r_max,
        stochastic: true,
    }
}

/// Essential infimum of `j` over `|z| < diameter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfimumEstimate {
    pub value: f64,
    /// True when obtained from radial monotonicity (no sampling).
    pub exact: bool,
    pub samples: usize,
}

pub fn essential_infimum(k: &Kernel, diameter: f64) -> Result<InfimumEstimate> {
    if !(diameter > 0.0 && diameter.is_finite()) {
        return Err(Error::param("diameter", format!("must be > 0, got {diameter}")));
    }
    if k.radial_monotone {
        if let Some(v) = k.profile(diameter) {
            return Ok(InfimumEstimate {
                value: v,
                exact: true,
                samples: 0,
            });
        }
    }
    const SAMPLES: usize = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best = f64::INFINITY;
    for _ in 0..SAMPLES {
        let u: f64 = rng.random();
        let z = random_direction(&mut rng) * (diameter * u.cbrt());
        best = best.min(k.raw(&z));
    }
    Ok(InfimumEstimate {
        value: best,
        exact: false,
        samples: SAMPLES,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum J3Verdict {
    Diverging,
    Converging,
    Inconclusive,
}

/// Heuristic (J3) diagnostic. A finite computation cannot decide
/// non-integrability; `verdict` is a labeled guess.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct J3Diagnostic {
    pub eps: Vec<f64>,
    pub integrals: Vec<f64>,
    /// Slope of `log I(eps)` against `log(1/eps)`.
    pub exponent: f64,
    pub verdict: J3Verdict,
    pub heuristic: bool,
}

/// `I(eps) = ∫_{B_1 \ B_eps} j` for a radial kernel.
pub fn ball_shell_integral(k: &Kernel, eps: f64) -> Result<f64> {
    let g = k
        .radial
        .as_ref()
        .ok_or_else(|| Error::Unsupported("shell integrals need a radial kernel".into()))?;
    Ok(4.0 * PI * integrate_geometric(|r| r * r * g(r), eps, 1.0, 1e-11).value)
}

pub fn check_non_integrability(k: &Kernel, eps_grid: &[f64]) -> Result<J3Diagnostic> {
    if eps_grid.len() < 2 {
        return Err(Error::param("eps_grid", "needs at least two values"));
    }
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) || eps_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::param("eps_grid", "must be strictly decreasing inside (0, 1)"));
    }
    let integrals = eps_grid
        .iter()
        .map(|&e| ball_shell_integral(k, e))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = eps_grid.iter().map(|e| (1.0 / e).ln()).collect();
    let exponent = if integrals.iter().all(|&v| v > 0.0) {
        let ys: Vec<f64> = integrals.iter().map(|v| v.ln()).collect();
        least_squares_slope(&xs, &ys)
    } else {
        0.0
    };
    // Growth per unit of log(1/eps) over the first and last grid steps.
    let n = integrals.len();
    let rate = |i: usize| (integrals[i + 1] - integrals[i]) / (xs[i + 1] - xs[i]);
    let first_rate = rate(0);
    let last_rate = rate(n - 2);
    let last = integrals[n - 1];
    let rel_last = if last > 0.0 { last_rate / last } else { 0.0 };
    let stabilizing = rel_last.abs() < 1e-3;
    let sustained_growth = last_rate > 0.0 && last_rate >= 0.5 * first_rate && rel_last > 1e-3;
    let verdict = if exponent > 0.05 || sustained_growth {
        J3Verdict::Diverging
    } else if exponent.abs() <= 0.05 && stabilizing {
        J3Verdict::Converging
    } else {
        J3Verdict::Inconclusive
    };
    Ok(J3Diagnostic {
        eps: eps_grid.to_vec(),
        integrals,
        exponent,
        verdict,
        heuristic: true,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// `∫_{B_R} |z|^2 j(z) dz` for a radial kernel.
pub fn second_moment(k: &Kernel, radius: f64) -> Result<f64> {
    let g = k
        .radial
        .as_ref()
        .ok_or_else(|| Error::Unsupported("moments need a radial kernel".into()))?;
    let f = |r: f64| r.powi(4) * g(r);
    let near = radius.min(1.0);
    let (mut total, _) = integrate_from_origin(f, 1e-8, near, 1e-11)
        .ok_or_else(|| Error::InvalidKernel("second moment diverges at the origin".into()))?;
    if radius > 1.0 {
        // break at 1 (truncation point of the built-in families)
        total += integrate(f, 1.0, radius, 0.0, 1e-11, 2000).value;
    }
    Ok(4.0 * PI * total)
}

/// Rows `(R, (1/R^2) ∫_{B_R} |z|^2 j)`; these should go to zero for
/// kernels with a finite Lévy constant.
pub fn tail_decay_table(k: &Kernel, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    if radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("R_list", "must be positive and increasing"));
    }
    radii
        .iter()
        .map(|&r| Ok((r, second_moment(k, r)? / (r * r))))
        .collect()
}

/// Fitted `(C, s)` of `j(r) ≈ C r^{-(3+2s)}` on `(r_min, r_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct J5Fit {
    pub c: f64,
    pub s: f64,
    pub r_max: f64,
}

pub fn fit_j5(k: &Kernel, r_max: f64) -> Option<J5Fit> {
    let g = k.radial.as_ref()?;
    let r_min = r_max * 1e-3;
    let n = 24;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let r = r_min * (r_max / r_min).powf(i as f64 / (n - 1) as f64) * (1.0 - 1e-9);
        let v = g(r);
        if !(v > 0.0 && v.is_finite()) {
            return None;
        }
        xs.push(r.ln());
        ys.push(v.ln());
    }
    let slope = least_squares_slope(&xs, &ys);
    let s = -(slope + 3.0) / 2.0;
    if !(s > 0.0 && s < 1.0) {
        return None;
    }
    // smallest C with j >= C r^{-(3+2s)} on the samples
    let c = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x).exp())
        .fold(f64::INFINITY, f64::min);
    Some(J5Fit { c, s, r_max })
}

/// Combined diagnostics for one kernel.
#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub kernel: String,
    pub symmetry: SymmetryCheck,
    pub levy_constant: LevyEstimate,
    pub j3: Option<J3Diagnostic>,
    pub infimum_table: Vec<(f64, InfimumEstimate)>,
    pub tail_decay_table: Vec<(f64, f64)>,
    pub j5_declared: Option<J5Params>,
    pub j5_fit: Option<J5Fit>,
}

pub const DEFAULT_EPS_GRID: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
pub const DEFAULT_TAIL_RADII: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

pub fn kernel_report(k: &Kernel, diameters: &[f64], seed: u64) -> Result<KernelReport> {
    let symmetry = check_symmetry(k, 1000, seed)?;
    let levy = levy_constant(k, &RadialQuadrature::default())?;
    let j3 = if k.is_radial() {
        Some(check_non_integrability(k, &DEFAULT_EPS_GRID)?)
    } else {
        None
    };
    let infimum_table = diameters
        .iter()
        .map(|&d| Ok((d, essential_infimum(k, d)?)))
        .collect::<Result<Vec<_>>>()?;
    let tail = if k.is_radial() {
        tail_decay_table(k, &DEFAULT_TAIL_RADII)?
    } else {
        Vec::new()
    };
    let fit_radius = k.j5.and_then(|p| p.r0).unwrap_or(1.0);
    Ok(KernelReport {
        kernel: k.name.clone(),
        symmetry,
        levy_constant: levy,
        j3,
        infimum_table,
        tail_decay_table: tail,
        j5_declared: k.j5,
        j5_fit: fit_j5(k, fit_radius),
    })
}

impl KernelReport {
    /// Plain-text rendering for terminals and logs.
    pub fn to_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "kernel: {}", self.kernel);
        let _ = writeln!(
            out,
            "(J1) symmetric: {} (max |j(z)-j(-z)| = {:.3e} over {} samples)",
            self.symmetry.symmetric, self.symmetry.max_asymmetry, self.symmetry.samples
        );
        match self.levy_constant.value {
            Some(v) => {
                let _ = writeln!(
                    out,
                    "(J2) L_j = {v:.10} +/- {:.2e}{}",
                    self.levy_constant.error,
                    if self.levy_constant.stochastic { " (Monte Carlo)" } else { "" }
                );
            }
            None => {
                let _ = writeln!(out, "(J2) L_j = infinite (no stabilization up to R = {:.3e})", self.levy_constant.outer_cutoff);
            }
        }
        if let Some(j3) = &self.j3 {
            let _ = writeln!(
                out,
                "(J3) heuristic verdict: {:?} (fitted exponent {:.4})",
                j3.verdict, j3.exponent
            );
            for (e, i) in j3.eps.iter().zip(&j3.integrals) {
                let _ = writeln!(out, "     eps = {e:<10.3e} I(eps) = {i:.6e}");
            }
        }
        let _ = writeln!(out, "(J4) essential infimum over |z| < d:");
        for (d, q) in &self.infimum_table {
            let _ = writeln!(
                out,
                "     d = {d:<10.4} Q = {:.6e}{}",
                q.value,
                if q.exact { "" } else { " (sampled)" }
            );
        }
        if let Some(p) = self.j5_declared {
            let _ = writeln!(out, "(J5) declared: C = {}, s = {}, R0 = {}", p.c, p.s, p.r0_or_inf());
        }
        if let Some(f) = self.j5_fit {
            let _ = writeln!(out, "(J5) fitted on (0, {}): C = {:.6}, s = {:.6}", f.r_max, f.c, f.s);
        }
        let _ = writeln!(out, "tail decay (1/R^2) int_B_R |z|^2 j:");
        for (r, t) in &self.tail_decay_table {
            let _ = writeln!(out, "     R = {r:<8} T = {t:.6e}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn frac(s: f64) -> Kernel {
        make_builtin_kernel(&KernelSpec::Fractional { s }).unwrap()
    }

    #[test]
    fn builtin_values() {
        assert_eq!(frac(0.5).value(&Vec3::new(1.0, 0.0, 0.0)), KernelValue::Finite(1.0));
        let g = make_builtin_kernel(&KernelSpec::Gaussian4).unwrap();
        assert_eq!(g.value(&Vec3::zeros()), KernelValue::Finite(4.0));
        let c = make_builtin_kernel(&KernelSpec::ConstantOne).unwrap();
        assert_eq!(c.value(&Vec3::new(3.0, -2.0, 7.0)), KernelValue::Finite(1.0));
        assert!(frac(0.5).value(&Vec3::zeros()).is_infinite());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(make_builtin_kernel(&KernelSpec::Fractional { s: 1.0 }).is_err());
        assert!(make_builtin_kernel(&KernelSpec::Fractional { s: 0.0 }).is_err());
        assert!(make_builtin_kernel(&KernelSpec::Rogers { gamma: -1.0 }).is_err());
        assert!(make_builtin_kernel(&KernelSpec::TruncatedFractional {
            s: 0.5,
            tail: Tail::Exponential { rate: 0.0 }
        })
        .is_err());
    }

    #[test]
    fn fractional_kernels_carry_j5() {
        let p = frac(0.3).j5_params().unwrap();
        assert_eq!((p.c, p.s, p.r0), (1.0, 0.3, None));
        let t = make_builtin_kernel(&KernelSpec::TruncatedFractional { s: 0.5, tail: Tail::Zero })
            .unwrap()
            .scaled(2.0)
            .unwrap();
        let p = t.j5_params().unwrap();
        assert_eq!((p.c, p.r0), (2.0, Some(1.0)));
    }

    #[test]
    fn symmetry_of_radial_and_asymmetric_kernels() {
        let r = check_symmetry(&frac(0.5), 500, 1).unwrap();
        assert!(r.symmetric);
        assert_eq!(r.max_asymmetry, 0.0);
        let asym = Kernel::custom("max(z1,0)", |z| z.x.max(0.0));
        let r = check_symmetry(&asym, 500, 1).unwrap();
        assert!(!r.symmetric);
        assert!(r.max_asymmetry > 0.0);
        assert!(check_symmetry(&asym, 0, 1).is_err());
    }

    #[test]
    fn levy_constant_of_fractional_matches_closed_form() {
        for s in [0.25, 0.5, 0.75] {
            let oracle = 4.0 * PI * (1.0 / (2.0 - 2.0 * s) + 1.0 / (2.0 * s));
            let est = levy_constant(&frac(s), &RadialQuadrature::default()).unwrap();
            assert_relative_eq!(est.value.unwrap(), oracle, max_relative = 1e-6);
        }
    }

    #[test]
    fn levy_constant_flags_divergence() {
        let c = make_builtin_kernel(&KernelSpec::ConstantOne).unwrap();
        assert!(levy_constant(&c, &RadialQuadrature::default()).unwrap().is_infinite());
        // |z|^-3: logarithmic divergence at infinity
        let p3 = make_builtin_kernel(&KernelSpec::Power { exponent: 3.0 }).unwrap();
        assert!(levy_constant(&p3, &RadialQuadrature::default()).unwrap().is_infinite());
        // |z|^-5.5: too singular at the origin
        let p = make_builtin_kernel(&KernelSpec::Power { exponent: 5.5 }).unwrap();
        assert!(levy_constant(&p, &RadialQuadrature::default()).unwrap().is_infinite());
    }

    #[test]
    fn levy_constant_of_gaussian_matches_independent_quadrature() {
        // Oracle: plain adaptive quadrature of the two radial pieces at 1e-12.
        let core = integrate(|r: f64| 4.0 * r.powi(4) * (-r * r).exp(), 0.0, 1.0, 0.0, 1e-13, 200).value;
        let tail = integrate(|r: f64| 4.0 * r * r * (-r * r).exp(), 1.0, 40.0, 0.0, 1e-13, 2000).value;
        let oracle = 4.0 * PI * (core + tail);
        let g = make_builtin_kernel(&KernelSpec::Gaussian4).unwrap();
        let est = levy_constant(&g, &RadialQuadrature::default()).unwrap();
        assert_relative_eq!(est.value.unwrap(), oracle, max_relative = 1e-8);
        assert!(!est.stochastic);
    }

    #[test]
    fn monte_carlo_fallback_is_flagged() {
        let g = make_builtin_kernel(&KernelSpec::Gaussian4).unwrap();
        let exact = levy_constant(&g, &RadialQuadrature::default()).unwrap().value.unwrap();
        let anisotropic = Kernel::custom("gauss-nonradial", |z| 4.0 * (-z.norm_squared()).exp());
        let est = levy_constant(&anisotropic, &RadialQuadrature::default()).unwrap();
        assert!(est.stochastic);
        assert!((est.value.unwrap() - exact).abs() < est.error.max(0.05 * exact));
    }

    #[test]
    fn infimum_values() {
        let g = make_builtin_kernel(&KernelSpec::Gaussian4).unwrap();
        let r = 0.7;
        let q = essential_infimum(&g, 2.0 * r).unwrap();
        assert!(q.exact);
        assert_relative_eq!(q.value, 4.0 * (-4.0 * r * r).exp(), max_relative = 1e-15);
        let c = make_builtin_kernel(&KernelSpec::ConstantOne).unwrap();
        assert_eq!(essential_infimum(&c, 5.0).unwrap().value, 1.0);
        let d: f64 = 1.3;
        assert_relative_eq!(
            essential_infimum(&frac(0.25), d).unwrap().value,
            d.powf(-3.5),
            max_relative = 1e-15
        );
        // sampled path never goes below the true infimum
        let nonradial = Kernel::custom("g", |z| 4.0 * (-z.norm_squared()).exp());
        let q = essential_infimum(&nonradial, 1.0).unwrap();
        assert!(!q.exact && q.value >= 4.0 * (-1.0f64).exp());
        assert!(essential_infimum(&c, 0.0).is_err());
    }

    #[test]
    fn j3_verdicts() {
        let d = check_non_integrability(&frac(0.5), &DEFAULT_EPS_GRID).unwrap();
        assert_eq!(d.verdict, J3Verdict::Diverging);
        // oracle I(eps) = 4 pi (eps^{-2s} - 1) / (2s)
        for (e, i) in d.eps.iter().zip(&d.integrals) {
            assert_relative_eq!(*i, 4.0 * PI * (1.0 / e - 1.0), max_relative = 1e-9);
        }
        assert!((d.exponent - 1.0).abs() < 0.05);
        let g = make_builtin_kernel(&KernelSpec::Gaussian4).unwrap();
        assert_eq!(check_non_integrability(&g, &DEFAULT_EPS_GRID).unwrap().verdict, J3Verdict::Converging);
        let p3 = make_builtin_kernel(&KernelSpec::Power { exponent: 3.0 }).unwrap();
        let d = check_non_integrability(&p3, &DEFAULT_EPS_GRID).unwrap();
        assert_eq!(d.verdict, J3Verdict::Diverging);
        for (e, i) in d.eps.iter().zip(&d.integrals) {
            assert_relative_eq!(*i, 4.0 * PI * (1.0 / e).ln(), max_relative = 1e-9);
        }
        assert!(check_non_integrability(&g, &[1e-2, 1e-1]).is_err());
    }

    #[test]
    fn tail_decay_closed_forms() {
        let c = make_builtin_kernel(&KernelSpec::ConstantOne).unwrap();
        let rows = tail_decay_table(&c, &[1.0, 2.0, 4.0]).unwrap();
        for (r, t) in rows {
            assert_relative_eq!(t, 4.0 * PI / 5.0 * r.powi(3), max_relative = 1e-9);
        }
        // fractional(0.5): |z|^2 j = |z|^-2, so the moment is 4 pi R and T = 4 pi / R
        let rows = tail_decay_table(&frac(0.5), &[1.0, 2.0, 10.0, 100.0]).unwrap();
        for (r, t) in &rows {
            let oracle = 4.0 * PI / r;
            assert_relative_eq!(*t, oracle, max_relative = 1e-8);
        }
        assert!(rows.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(tail_decay_table(&c, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn j5_fit_recovers_fractional_parameters() {
        let k = frac(0.4).scaled(3.0).unwrap();
        let f = fit_j5(&k, 1.0).unwrap();
        assert_relative_eq!(f.s, 0.4, max_relative = 1e-9);
        assert_relative_eq!(f.c, 3.0, max_relative = 1e-9);
        assert!(fit_j5(&make_builtin_kernel(&KernelSpec::Gaussian4).unwrap(), 1.0).is_none());
    }

    #[test]
    fn report_renders() {
        let g = make_builtin_kernel(&KernelSpec::Gaussian4).unwrap();
        let rep = kernel_report(&g, &[0.5, 1.0, 2.0], 3).unwrap();
        let t = rep.to_table();
        assert!(t.contains("(J1) symmetric: true"));
        assert!(t.contains("Converging"));
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"levy_constant\""));
    }
}
