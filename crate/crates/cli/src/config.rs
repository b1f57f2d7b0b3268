//! Run configuration: TOML schema, `--set` overrides and validation.
//!
//! Every section rejects unknown keys. Errors carry the dotted key path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nlmag::energies::{Anisotropy, DmiKernel, EnergyConfig};
use nlmag::kernels::{make_builtin_kernel, J5Params, Kernel, KernelSpec, Tail};
use nlmag::minimize::{InitKind, MinimizeOptions, StepRule};
use nlmag::regimes::{ClassifyThresholds, SweepSettings};
use nlmag::Vec3;

#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub output: OutputConfig,
    pub kernel: KernelConfig,
    pub mesh: MeshConfig,
    pub energy: EnergyTerms,
    pub field: FieldConfig,
    pub minimize: MinimizeConfig,
    pub sweep: SweepConfig,
    pub kernel_check: KernelCheckConfig,
    pub constants: ConstantsConfig,
    pub vortex_gap: VortexGapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            output: OutputConfig::default(),
            kernel: KernelConfig::default(),
            mesh: MeshConfig::default(),
            energy: EnergyTerms::default(),
            field: FieldConfig::default(),
            minimize: MinimizeConfig::default(),
            sweep: SweepConfig::default(),
            kernel_check: KernelCheckConfig::default(),
            constants: ConstantsConfig::default(),
            vortex_gap: VortexGapConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write gnuplot scripts.
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            plots: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// fractional | truncated_fractional | constant_one | gaussian4 | rogers | power
    pub kind: String,
    pub s: Option<f64>,
    /// Exponential tail rate of `truncated_fractional`; absent means zero tail.
    pub tail_rate: Option<f64>,
    pub gamma: Option<f64>,
    pub exponent: Option<f64>,
    pub amplitude: f64,
    /// Overrides the declared lower bound `j >= C |z|^{-(3+2s)}` on `|z| < r0`.
    pub j5: Option<J5Params>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kind: "gaussian4".into(),
            s: None,
            tail_rate: None,
            gamma: None,
            exponent: None,
            amplitude: 1.0,
            j5: None,
        }
    }
}

impl KernelConfig {
    fn require(&self, v: Option<f64>, name: &str) -> Result<f64, ConfigError> {
        v.ok_or_else(|| err(&format!("kernel.{name}"), format!("required for kind `{}`", self.kind)))
    }

    fn forbid(&self, v: Option<f64>, name: &str) -> Result<(), ConfigError> {
        match v {
            Some(_) => Err(err(&format!("kernel.{name}"), format!("not used by kind `{}`", self.kind))),
            None => Ok(()),
        }
    }

    pub fn spec(&self) -> Result<KernelSpec, ConfigError> {
        let in_unit = |v: f64, name: &str| {
            if v > 0.0 && v < 1.0 {
                Ok(v)
            } else {
                Err(err(&format!("kernel.{name}"), format!("must lie in (0, 1), got {v}")))
            }
        };
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(err(&format!("kernel.{name}"), format!("must be > 0, got {v}")))
            }
        };
        let spec = match self.kind.as_str() {
            "fractional" => {
                self.forbid(self.tail_rate, "tail_rate")?;
                KernelSpec::Fractional {
                    s: in_unit(self.require(self.s, "s")?, "s")?,
                }
            }
            "truncated_fractional" => KernelSpec::TruncatedFractional {
                s: in_unit(self.require(self.s, "s")?, "s")?,
                tail: match self.tail_rate {
                    None => Tail::Zero,
                    Some(rate) => Tail::Exponential {
                        rate: positive(rate, "tail_rate")?,
                    },
                },
            },
            "constant_one" => KernelSpec::ConstantOne,
            "gaussian4" => KernelSpec::Gaussian4,
            "rogers" => KernelSpec::Rogers {
                gamma: positive(self.require(self.gamma, "gamma")?, "gamma")?,
            },
            "power" => KernelSpec::Power {
                exponent: positive(self.require(self.exponent, "exponent")?, "exponent")?,
            },
            other => {
                return Err(err(
                    "kernel.kind",
                    format!(
                        "unknown kernel `{other}` (expected fractional, truncated_fractional, constant_one, gaussian4, rogers or power)"
                    ),
                ))
            }
        };
        if !matches!(spec, KernelSpec::Fractional { .. } | KernelSpec::TruncatedFractional { .. }) {
            self.forbid(self.s, "s")?;
            self.forbid(self.tail_rate, "tail_rate")?;
        }
        if !matches!(spec, KernelSpec::Rogers { .. }) {
            self.forbid(self.gamma, "gamma")?;
        }
        if !matches!(spec, KernelSpec::Power { .. }) {
            self.forbid(self.exponent, "exponent")?;
        }
        Ok(spec)
    }

    pub fn build(&self) -> Result<Kernel, ConfigError> {
        let spec = self.spec()?;
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(err("kernel.amplitude", format!("must be finite and >= 0, got {}", self.amplitude)));
        }
        let mut k = make_builtin_kernel(&spec)
            .and_then(|k| k.scaled(self.amplitude))
            .map_err(|e| err("kernel", e.to_string()))?;
        if let Some(j5) = self.j5 {
            if !(j5.c > 0.0) {
                return Err(err("kernel.j5.c", format!("must be > 0, got {}", j5.c)));
            }
            if !(j5.s > 0.0 && j5.s < 1.0) {
                return Err(err("kernel.j5.s", format!("must lie in (0, 1), got {}", j5.s)));
            }
            if let Some(r0) = j5.r0 {
                if !(r0 > 0.0) {
                    return Err(err("kernel.j5.r0", format!("must be > 0, got {r0}")));
                }
            }
            k = k.with_j5(j5);
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub radius: f64,
    /// Cell size; mutually exclusive with `cells_per_diameter`.
    pub spacing: Option<f64>,
    pub cells_per_diameter: Option<usize>,
    /// Rescale the cell weight so the mesh volume equals the ball volume.
    pub normalize_volume: bool,
    /// Gauss–Legendre nodes in the polar angle for surface quadratures.
    pub n_theta: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            radius: 1.0,
            spacing: None,
            cells_per_diameter: None,
            normalize_volume: false,
            n_theta: 64,
        }
    }
}

pub const DEFAULT_CELLS_PER_DIAMETER: usize = 16;

impl MeshConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(err("mesh.radius", format!("must be > 0, got {}", self.radius)));
        }
        match (self.spacing, self.cells_per_diameter) {
            (Some(_), Some(_)) => {
                return Err(err("mesh.spacing", "set either mesh.spacing or mesh.cells_per_diameter, not both"))
            }
            (Some(h), None) if !(h > 0.0 && h < self.radius) => {
                return Err(err("mesh.spacing", format!("must satisfy 0 < h < radius = {}, got {h}", self.radius)))
            }
            (None, Some(n)) if n < 2 => return Err(err("mesh.cells_per_diameter", format!("must be >= 2, got {n}"))),
            _ => {}
        }
        if self.n_theta < 8 {
            return Err(err("mesh.n_theta", format!("must be >= 8, got {}", self.n_theta)));
        }
        Ok(())
    }

    pub fn build(&self) -> nlmag::Result<nlmag::geometry::BallMesh> {
        let mesh = match self.spacing {
            Some(h) => nlmag::geometry::build_ball_mesh(self.radius, h)?,
            None => nlmag::geometry::build_ball_mesh_per_diameter(
                self.radius,
                self.cells_per_diameter.unwrap_or(DEFAULT_CELLS_PER_DIAMETER),
            )?,
        };
        Ok(if self.normalize_volume { mesh.with_normalized_volume() } else { mesh })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisotropyConfig {
    pub axis: [f64; 3],
    pub strength: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmiConfig {
    pub strength: f64,
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyTerms {
    pub exchange: bool,
    pub magnetostatic: bool,
    pub anisotropy: Option<AnisotropyConfig>,
    pub dmi: Option<DmiConfig>,
}

impl Default for EnergyTerms {
    fn default() -> Self {
        EnergyTerms {
            exchange: true,
            magnetostatic: true,
            anisotropy: None,
            dmi: None,
        }
    }
}

impl EnergyTerms {
    pub fn build(&self, kernel: &KernelConfig) -> Result<EnergyConfig, ConfigError> {
        let exchange = if self.exchange { Some(kernel.build()?) } else { None };
        let anisotropy = self
            .anisotropy
            .as_ref()
            .map(|a| {
                let axis = Vec3::from(a.axis);
                if !(axis.norm() > 0.0) {
                    return Err(err("energy.anisotropy.axis", "must be nonzero"));
                }
                Anisotropy::uniaxial(axis, a.strength).map_err(|e| err("energy.anisotropy.strength", e.to_string()))
            })
            .transpose()?;
        let dmi = self
            .dmi
            .as_ref()
            .map(|d| {
                if !(d.length > 0.0) {
                    return Err(err("energy.dmi.length", format!("must be > 0, got {}", d.length)));
                }
                DmiKernel::gaussian(d.strength, d.length).map_err(|e| err("energy.dmi.strength", e.to_string()))
            })
            .transpose()?;
        Ok(EnergyConfig {
            exchange,
            magnetostatic: self.magnetostatic,
            anisotropy,
            dmi,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    /// constant | vortex | random | file
    pub kind: String,
    /// Direction of a `constant` field.
    pub sigma: [f64; 3],
    /// CSV written by a previous run, for `file`.
    pub path: Option<PathBuf>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            kind: "vortex".into(),
            sigma: [0.0, 0.0, 1.0],
            path: None,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.kind.as_str() {
            "constant" => {
                let n = Vec3::from(self.sigma).norm();
                if (n - 1.0).abs() > 1e-12 {
                    return Err(err("field.sigma", format!("must be a unit vector, |sigma| = {n}")));
                }
            }
            "vortex" | "random" => {}
            "file" => {
                if self.path.is_none() {
                    return Err(err("field.path", "required for kind `file`"));
                }
            }
            other => {
                return Err(err(
                    "field.kind",
                    format!("unknown field `{other}` (expected constant, vortex, random or file)"),
                ))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// barzilai_borwein | fixed
    pub step_rule: String,
    /// Step of the `fixed` rule.
    pub step: Option<f64>,
    /// Random initial fields (seeds `seed`, `seed + 1`, ...).
    pub restarts: usize,
    /// Deterministic initial fields: constant_e3 and/or vortex.
    pub inits: Vec<String>,
    pub record_trace: bool,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            max_iters: 2000,
            grad_tol: 1e-6,
            step_rule: "barzilai_borwein".into(),
            step: None,
            restarts: 3,
            inits: vec!["constant_e3".into(), "vortex".into()],
            record_trace: true,
        }
    }
}

impl MinimizeConfig {
    pub fn options(&self, seed: u64) -> Result<MinimizeOptions, ConfigError> {
        if self.max_iters == 0 {
            return Err(err("minimize.max_iters", "must be >= 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(err("minimize.grad_tol", format!("must be > 0, got {}", self.grad_tol)));
        }
        let step_rule = match (self.step_rule.as_str(), self.step) {
            ("barzilai_borwein", None) => StepRule::BarzilaiBorweinWithBacktracking,
            ("barzilai_borwein", Some(_)) => return Err(err("minimize.step", "only used by step_rule = \"fixed\"")),
            ("fixed", Some(step)) if step > 0.0 && step.is_finite() => StepRule::Fixed { step },
            ("fixed", Some(step)) => return Err(err("minimize.step", format!("must be > 0, got {step}"))),
            ("fixed", None) => return Err(err("minimize.step", "required for step_rule = \"fixed\"")),
            (other, _) => {
                return Err(err(
                    "minimize.step_rule",
                    format!("unknown rule `{other}` (expected barzilai_borwein or fixed)"),
                ))
            }
        };
        let mut init_kinds = Vec::new();
        for name in &self.inits {
            init_kinds.push(match name.as_str() {
                "constant_e3" => InitKind::ConstantE3,
                "vortex" => InitKind::Vortex,
                other => {
                    return Err(err(
                        "minimize.inits",
                        format!("unknown init `{other}` (expected constant_e3 or vortex; random fields come from minimize.restarts)"),
                    ))
                }
            });
        }
        init_kinds.extend((0..self.restarts as u64).map(|k| InitKind::Random { seed: seed + k }));
        if init_kinds.is_empty() {
            return Err(err("minimize.inits", "no initial fields (empty inits and restarts = 0)"));
        }
        Ok(MinimizeOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            step_rule,
            init_kinds,
            record_trace: self.record_trace,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
    pub cells_per_diameter: usize,
    pub normalize_volume: bool,
    pub deficit_threshold: f64,
    pub constant_band: f64,
    pub margin: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let t = ClassifyThresholds::default();
        SweepConfig {
            r_min: 0.005,
            r_max: 5.0,
            points: 10,
            cells_per_diameter: 16,
            normalize_volume: true,
            deficit_threshold: t.deficit,
            constant_band: t.constant_band,
            margin: t.margin,
        }
    }
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<f64>, ConfigError> {
        if !(self.r_min > 0.0) {
            return Err(err("sweep.r_min", format!("must be > 0, got {}", self.r_min)));
        }
        if !(self.r_max > self.r_min && self.r_max.is_finite()) {
            return Err(err("sweep.r_max", format!("must exceed sweep.r_min = {}, got {}", self.r_min, self.r_max)));
        }
        if self.points < 2 {
            return Err(err("sweep.points", format!("must be >= 2, got {}", self.points)));
        }
        nlmag::regimes::geometric_grid(self.r_min, self.r_max, self.points).map_err(|e| err("sweep", e.to_string()))
    }

    pub fn settings(&self) -> Result<SweepSettings, ConfigError> {
        if self.cells_per_diameter < 2 {
            return Err(err("sweep.cells_per_diameter", format!("must be >= 2, got {}", self.cells_per_diameter)));
        }
        for (key, v) in [
            ("sweep.deficit_threshold", self.deficit_threshold),
            ("sweep.constant_band", self.constant_band),
            ("sweep.margin", self.margin),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(err(key, format!("must lie in (0, 1), got {v}")));
            }
        }
        Ok(SweepSettings {
            cells_per_diameter: self.cells_per_diameter,
            normalize_volume: self.normalize_volume,
            thresholds: ClassifyThresholds {
                deficit: self.deficit_threshold,
                constant_band: self.constant_band,
                margin: self.margin,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelCheckConfig {
    /// Diameters of the infimum table.
    pub diameters: Vec<f64>,
    /// Radius range scanned for `C_R < 3`.
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
}

impl Default for KernelCheckConfig {
    fn default() -> Self {
        KernelCheckConfig {
            diameters: vec![0.5, 1.0, 2.0, 5.0],
            r_min: 0.01,
            r_max: 10.0,
            points: 400,
        }
    }
}

impl KernelCheckConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.diameters.is_empty() || self.diameters.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(err("kernel_check.diameters", "must be a non-empty list of positive numbers"));
        }
        if !(self.r_min > 0.0) {
            return Err(err("kernel_check.r_min", format!("must be > 0, got {}", self.r_min)));
        }
        if !(self.r_max > self.r_min) {
            return Err(err("kernel_check.r_max", "must exceed kernel_check.r_min"));
        }
        if self.points < 2 {
            return Err(err("kernel_check.points", "must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    /// Cell size of the volumetric checks on the unit ball.
    pub spacing: f64,
    pub n_theta: usize,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            spacing: 0.05,
            n_theta: 64,
        }
    }
}

impl ConstantsConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.spacing > 0.0 && self.spacing < 1.0) {
            return Err(err("constants.spacing", format!("must lie in (0, 1), got {}", self.spacing)));
        }
        if self.n_theta < 8 {
            return Err(err("constants.n_theta", format!("must be >= 8, got {}", self.n_theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VortexGapConfig {
    pub radii: Vec<f64>,
    pub n_theta: usize,
    /// Also compare `J(vortex) + W(vortex)` with the constant energy for the
    /// configured kernel on `comparison_radii`.
    pub comparison: bool,
    pub comparison_radii: Vec<f64>,
    pub cells_per_diameter: usize,
}

impl Default for VortexGapConfig {
    fn default() -> Self {
        VortexGapConfig {
            radii: vec![0.5, 1.0, 2.0],
            n_theta: 128,
            comparison: false,
            comparison_radii: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            cells_per_diameter: 16,
        }
    }
}

impl VortexGapConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.radii.is_empty() || self.radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(err("vortex_gap.radii", "must be a non-empty list of positive numbers"));
        }
        if self.n_theta < 8 {
            return Err(err("vortex_gap.n_theta", format!("must be >= 8, got {}", self.n_theta)));
        }
        if self.comparison {
            let r = &self.comparison_radii;
            if r.is_empty() || r.iter().any(|&x| !(x > 0.0)) || r.windows(2).any(|w| w[1] <= w[0]) {
                return Err(err("vortex_gap.comparison_radii", "must be positive and increasing"));
            }
            if self.cells_per_diameter < 2 {
                return Err(err("vortex_gap.cells_per_diameter", "must be >= 2"));
            }
        }
        Ok(())
    }
}

/// Parses `key=value` into a dotted path and a TOML value. Values that do
/// not parse as TOML are taken as bare strings.
pub fn parse_override(s: &str) -> Result<(Vec<String>, toml::Value), ConfigError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| err(s, "override must have the form key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.trim().is_empty()) {
        return Err(err(key, "empty key segment in override"));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.split('.').map(|p| p.trim().to_string()).collect(), value))
}

pub fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), ConfigError> {
    let dotted = path.join(".");
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| err(&dotted, format!("`{p}` is not a section")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Reads the config file, applies overrides in order and deserializes
/// strictly.
pub fn load(path: &Path, overrides: &[(Vec<String>, toml::Value)]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err("<file>", format!("cannot read {}: {e}", path.display())))?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| err("<file>", format!("{}: {e}", path.display())))?;
    for (p, v) in overrides {
        apply_override(&mut table, p, v.clone())?;
    }
    from_table(table)
}

pub fn from_table(table: toml::Table) -> Result<RunConfig, ConfigError> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let key = e.path().to_string();
        let message = e.into_inner().to_string();
        err(&key, message.lines().next().unwrap_or_default().trim())
    })
}
