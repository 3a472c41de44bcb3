//! Experiment configuration schema. Unknown keys are rejected everywhere and
//! parse errors carry the path of the offending key.

use std::path::{Path, PathBuf};

use cellhom_core::bvp::Load;
use cellhom_core::cellsolver::RestartPlan;
use cellhom_core::energy::{BoundParams, SamplePlan};
use cellhom_core::geometry::{parse_mask, LayeredTessellation, Phase, Shape, Tessellation};
use cellhom_core::tensor::{from_rows, Mat2};
use cellhom_core::{EnergyModel, HeterogeneousField, MonotoneCoefficient, StoredEnergy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },
}

impl ConfigError {
    pub fn at(path: &str, message: impl Into<String>) -> Self {
        ConfigError::Schema { path: path.into(), message: message.into() }
    }
}

type Matrix = [[f64; 2]; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tessellation: Option<TessellationSpec>,
    #[serde(default)]
    pub materials: Materials,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub samples: SampleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub load: LoadSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub two_scale: TwoScaleSpec,
    #[serde(default)]
    pub restarts: RestartSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Background,
    Slab { direction: [f64; 2], breakpoints: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
    /// Mask file with header `dim n labels` followed by `n²` row-major labels.
    Mask { path: PathBuf, value: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub label: usize,
    pub shape: ShapeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TessellationSpec {
    /// `e_2`-laminate with the lower phase (label 0) occupying `fraction`.
    Laminate {
        #[serde(default = "half")]
        fraction: f64,
    },
    /// Disk (label 1) in a matrix (label 0).
    Disk {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Homogeneous,
    Phases {
        #[serde(default = "two")]
        dim: usize,
        phases: Vec<PhaseSpec>,
    },
}

fn half() -> f64 {
    0.5
}

fn two() -> usize {
    2
}

impl TessellationSpec {
    /// Builds the tessellation; mask paths resolve relative to `base`.
    pub fn build(&self, base: &Path) -> Result<Tessellation, ConfigError> {
        let bad = |e: cellhom_core::GeometryError| ConfigError::at("tessellation", e.to_string());
        match self {
            TessellationSpec::Laminate { fraction } => {
                if !(*fraction > 0.0 && *fraction < 1.0) {
                    return Err(ConfigError::at("tessellation.fraction", "must lie in (0, 1)"));
                }
                Ok(Tessellation::laminate_e2_fraction(*fraction, 0, 1))
            }
            TessellationSpec::Disk { center, radius } => {
                let t = Tessellation::disk(*center, *radius);
                Tessellation::new(t.phases).map_err(bad)
            }
            TessellationSpec::Homogeneous => Ok(Tessellation::homogeneous(0)),
            TessellationSpec::Phases { dim, phases } => {
                if *dim != 2 {
                    return Err(ConfigError::at("tessellation.dim", format!("dimension {dim} is not supported")));
                }
                let mut out = Vec::with_capacity(phases.len());
                for (i, p) in phases.iter().enumerate() {
                    let shape = match &p.shape {
                        ShapeSpec::Background => Shape::Background,
                        ShapeSpec::Slab { direction, breakpoints } => {
                            Shape::Slab { direction: *direction, breakpoints: *breakpoints }
                        }
                        ShapeSpec::Disk { center, radius } => Shape::Disk { center: *center, radius: *radius },
                        ShapeSpec::Polygon { vertices } => Shape::Polygon { vertices: vertices.clone() },
                        ShapeSpec::Mask { path, value } => {
                            let full = base.join(path);
                            let text = std::fs::read_to_string(&full)
                                .map_err(|e| ConfigError::at(&format!("tessellation.phases[{i}].shape.path"), e.to_string()))?;
                            let (n, cells) = parse_mask(&text)
                                .map_err(|e| ConfigError::at(&format!("tessellation.phases[{i}].shape.path"), e.to_string()))?;
                            Shape::Mask { n, cells, value: *value }
                        }
                    };
                    out.push(Phase { label: p.label, shape });
                }
                Tessellation::new(out).map_err(bad)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredSpec {
    pub c2: f64,
    pub cp: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// `a(F) = λ_ℓ F` per label.
    Linear { moduli: Vec<f64> },
    /// `a_R(F) = DV(R + F) − DV(R)` with `R` the rotation by `angle`.
    Shifted {
        #[serde(default)]
        angle: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Materials {
    #[serde(default = "default_stored")]
    pub stored: Vec<StoredSpec>,
    #[serde(default)]
    pub bound: BoundParams,
    #[serde(default = "default_coefficient")]
    pub coefficient: CoefficientSpec,
    /// Sample count of the class validators.
    #[serde(default = "default_validation")]
    pub validation_samples: usize,
}

fn default_validation() -> usize {
    4000
}

fn default_stored() -> Vec<StoredSpec> {
    vec![StoredSpec { c2: 1.0, cp: 0.1, p: 4.0 }, StoredSpec { c2: 2.0, cp: 0.1, p: 4.0 }]
}

fn default_coefficient() -> CoefficientSpec {
    CoefficientSpec::Linear { moduli: vec![1.0, 4.0] }
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            stored: default_stored(),
            bound: BoundParams::default(),
            coefficient: default_coefficient(),
            validation_samples: default_validation(),
        }
    }
}

impl Materials {
    pub fn stored_energies(&self) -> Vec<StoredEnergy> {
        self.stored.iter().map(|s| StoredEnergy::new(s.c2, s.cp, s.p)).collect()
    }

    pub fn stored_field(&self, tess: &Tessellation) -> Result<HeterogeneousField<StoredEnergy>, ConfigError> {
        HeterogeneousField::new(tess.clone(), self.stored_energies())
            .map_err(|e| ConfigError::at("materials.stored", e.to_string()))
    }

    pub fn model(&self, tess: &Tessellation) -> Result<EnergyModel, ConfigError> {
        EnergyModel::new(self.stored_field(tess)?, self.bound).map_err(|e| ConfigError::at("materials.bound", e.to_string()))
    }

    pub fn coefficient_field(&self, tess: &Tessellation) -> Result<HeterogeneousField<MonotoneCoefficient>, ConfigError> {
        match &self.coefficient {
            CoefficientSpec::Linear { moduli } => {
                if let Some(l) = moduli.iter().find(|l| !(**l > 0.0)) {
                    return Err(ConfigError::at("materials.coefficient.moduli", format!("modulus {l} must be positive")));
                }
                HeterogeneousField::new(tess.clone(), moduli.iter().map(|l| MonotoneCoefficient::linear(*l)).collect())
                    .map_err(|e| ConfigError::at("materials.coefficient.moduli", e.to_string()))
            }
            CoefficientSpec::Shifted { angle } => {
                let model = self.model(tess)?;
                Ok(model.v.shifted(cellhom_core::tensor::rotation(*angle)))
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.coefficient, CoefficientSpec::Linear { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Elements per period.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Periods per side of a multi-cell.
    #[serde(default = "one")]
    pub k: usize,
    /// Resolution ladder; empty means `[n]`.
    #[serde(default)]
    pub ladder: Vec<usize>,
    /// Multi-cell sizes; empty means `[1, 2]`.
    #[serde(default)]
    pub k_list: Vec<usize>,
    /// Periods per side of the macroscopic domain, i.e. `1/ε`.
    #[serde(default = "default_periods")]
    pub periods: Vec<usize>,
}

fn default_n() -> usize {
    32
}

fn one() -> usize {
    1
}

fn default_periods() -> Vec<usize> {
    vec![4, 8, 16]
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n: default_n(), k: 1, ladder: Vec::new(), k_list: Vec::new(), periods: default_periods() }
    }
}

impl GridSpec {
    pub fn ladder(&self) -> Vec<usize> {
        if self.ladder.is_empty() {
            vec![self.n]
        } else {
            self.ladder.clone()
        }
    }

    pub fn k_list(&self) -> Vec<usize> {
        if self.k_list.is_empty() {
            vec![1, 2]
        } else {
            self.k_list.clone()
        }
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let bad_n = |n: usize| n < 4 || !n.is_multiple_of(2);
        if bad_n(self.n) {
            return Err(ConfigError::at("grid.n", "must be even and at least 4"));
        }
        if let Some(i) = self.ladder.iter().position(|&n| bad_n(n)) {
            return Err(ConfigError::at(&format!("grid.ladder[{i}]"), "must be even and at least 4"));
        }
        if self.k == 0 {
            return Err(ConfigError::at("grid.k", "must be positive"));
        }
        if let Some(i) = self.k_list.iter().position(|&k| k == 0) {
            return Err(ConfigError::at(&format!("grid.k_list[{i}]"), "must be positive"));
        }
        if let Some(i) = self.periods.iter().position(|&k| k == 0) {
            return Err(ConfigError::at(&format!("grid.periods[{i}]"), "must be positive"));
        }
        Ok(())
    }
}

/// Macroscopic gradients: an explicit list, or seeded samples `R(I + tS)` cycling over `dists`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    #[serde(default)]
    pub f: Option<Vec<Matrix>>,
    #[serde(default = "default_dists")]
    pub dists: Vec<f64>,
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_dists() -> Vec<f64> {
    vec![0.02, 0.05, 0.1]
}

fn default_count() -> usize {
    12
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { f: None, dists: default_dists(), count: default_count() }
    }
}

impl SampleSpec {
    pub fn matrices(&self, seed: u64) -> Result<Vec<Mat2>, ConfigError> {
        match &self.f {
            Some(list) if list.is_empty() => Err(ConfigError::at("samples.f", "empty list")),
            Some(list) => Ok(list.iter().map(|m| from_rows(*m)).collect()),
            None => {
                if self.dists.is_empty() || self.dists.iter().any(|t| !(*t >= 0.0 && *t < 1.0)) {
                    return Err(ConfigError::at("samples.dists", "need distances in [0, 1)"));
                }
                if self.count == 0 {
                    return Err(ConfigError::at("samples.count", "must be positive"));
                }
                Ok(SamplePlan { count: self.count, seed }.near_rotations(&self.dists))
            }
        }
    }
}

/// Acceptance thresholds, echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "t_residual")]
    pub corrector_residual: f64,
    #[serde(default = "t_flux")]
    pub flux: f64,
    #[serde(default = "t_null")]
    pub null_lagrangian: f64,
    #[serde(default = "t_abs")]
    pub single_cell_abs: f64,
    #[serde(default = "t_rel")]
    pub single_cell_rel: f64,
    #[serde(default = "t_bracket")]
    pub bracket: f64,
    #[serde(default = "t_floor")]
    pub bracket_floor: f64,
    #[serde(default = "t_fd")]
    pub fd_ratio: [f64; 2],
    #[serde(default = "t_spread")]
    pub spread: f64,
    #[serde(default = "t_gamma")]
    pub exponent: f64,
    #[serde(default = "t_monotone")]
    pub monotone: f64,
    #[serde(default = "t_representative")]
    pub representative: f64,
    #[serde(default = "t_transmission")]
    pub transmission_flux: f64,
    #[serde(default = "t_jump")]
    pub transmission_jump: f64,
    #[serde(default = "t_energy")]
    pub energy_match: f64,
    #[serde(default)]
    pub max_e: Option<f64>,
}

fn t_residual() -> f64 {
    1e-10
}
fn t_flux() -> f64 {
    1e-8
}
fn t_null() -> f64 {
    1e-10
}
fn t_abs() -> f64 {
    1e-8
}
fn t_rel() -> f64 {
    1e-3
}
fn t_bracket() -> f64 {
    1e-6
}
fn t_floor() -> f64 {
    1e-8
}
fn t_fd() -> [f64; 2] {
    [8.0, 12.5]
}
fn t_spread() -> f64 {
    2.0
}
fn t_gamma() -> f64 {
    0.1
}
fn t_monotone() -> f64 {
    2.0
}
fn t_representative() -> f64 {
    1e-8
}
fn t_transmission() -> f64 {
    1e-8
}
fn t_jump() -> f64 {
    0.01
}
fn t_energy() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayeredSpec {
    pub direction: [f64; 2],
    pub breakpoints: Vec<f64>,
    pub labels: Vec<usize>,
    #[serde(default)]
    pub periodic: bool,
}

impl LayeredSpec {
    pub fn build(&self) -> Result<LayeredTessellation, ConfigError> {
        let r = if self.periodic {
            LayeredTessellation::periodic(self.direction, self.breakpoints.clone(), self.labels.clone())
        } else {
            LayeredTessellation::new(self.direction, self.breakpoints.clone(), self.labels.clone())
        };
        r.map_err(|e| ConfigError::at("geometry.comparator", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    #[serde(default = "half")]
    pub s: f64,
    #[serde(default = "default_centers")]
    pub centers: usize,
    /// Radius ladder `2^{-j}`, `j = 0..=levels`.
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_mc")]
    pub samples: usize,
    /// Optional fixed comparator evaluated at `center`.
    #[serde(default)]
    pub comparator: Option<LayeredSpec>,
    #[serde(default)]
    pub center: [f64; 2],
}

fn default_centers() -> usize {
    16
}
fn default_levels() -> usize {
    8
}
fn default_mc() -> usize {
    100_000
}

impl Default for GeometrySpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    /// Load shape; with `lambdas` its amplitude is rescaled to hit each target `Λ`.
    #[serde(default = "default_load")]
    pub shape: Load,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    /// Macroscopic gradient; identity when absent.
    #[serde(default)]
    pub f: Option<Matrix>,
}

fn default_load() -> Load {
    Load::Sine { amplitude: [1.0, 0.5], wave: [1, 1] }
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self { shape: default_load(), lambdas: vec![0.02, 0.05], f: None }
    }
}

/// Dirichlet data `g(x) = F x + L·P(x/L)` with `P = q ⊙ (x₁² − x₂², 2x₁x₂)`, or the
/// exact transmission profile when `transmission` is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default = "default_data_f")]
    pub f: Matrix,
    #[serde(default = "default_quadratic")]
    pub quadratic: [f64; 2],
    #[serde(default)]
    pub transmission: Option<[f64; 2]>,
    /// Periods per side of the cube domain.
    #[serde(default = "default_domain")]
    pub periods: usize,
}

fn default_data_f() -> Matrix {
    [[0.05, 0.02], [-0.01, 0.04]]
}
fn default_quadratic() -> [f64; 2] {
    [0.05, 0.03]
}
fn default_domain() -> usize {
    16
}

impl Default for DataSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl DataSpec {
    pub fn polynomial(&self, side: f64) -> impl Fn([f64; 2]) -> [f64; 2] + '_ {
        let f = self.f;
        let q = self.quadratic;
        move |x: [f64; 2]| {
            let (y1, y2) = (x[0] / side, x[1] / side);
            [
                f[0][0] * x[0] + f[0][1] * x[1] + side * q[0] * (y1 * y1 - y2 * y2),
                f[1][0] * x[0] + f[1][1] * x[1] + side * q[1] * 2.0 * y1 * y2,
            ]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoScaleSpec {
    /// Cube sides in macroscopic units.
    #[serde(default = "default_r")]
    pub r: Vec<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_spacing")]
    pub lattice_spacing: f64,
    #[serde(default = "default_budget")]
    pub lattice_budget: usize,
}

fn default_r() -> Vec<f64> {
    vec![0.0625]
}
fn default_rho() -> f64 {
    0.2
}
fn default_spacing() -> f64 {
    0.05
}
fn default_budget() -> usize {
    4096
}

impl Default for TwoScaleSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartSpec {
    #[serde(default = "default_random")]
    pub random: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_random() -> usize {
    8
}
fn default_amplitude() -> f64 {
    0.1
}

impl Default for RestartSpec {
    fn default() -> Self {
        Self { random: default_random(), amplitude: default_amplitude() }
    }
}

impl RestartSpec {
    pub fn plan(&self, seed: u64) -> RestartPlan {
        RestartPlan { random: self.random, amplitude: self.amplitude, seed }
    }
}

/// One axis of a sweep; each value produces an independent run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepSpec {
    F(Vec<Matrix>),
    Eps(Vec<usize>),
    Resolution(Vec<usize>),
    K(Vec<usize>),
}

impl SweepSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SweepSpec::F(_) => "f",
            SweepSpec::Eps(_) => "eps",
            SweepSpec::Resolution(_) => "resolution",
            SweepSpec::K(_) => "k",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepSpec::F(v) => v.len(),
            SweepSpec::Eps(v) | SweepSpec::Resolution(v) | SweepSpec::K(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every run configuration must pass the grid checks.
    pub fn check(&self, base: &ExperimentConfig) -> Result<(), ConfigError> {
        for i in 0..self.len() {
            if let Err(e) = self.apply(base, i).0.grid.check() {
                return Err(ConfigError::at(&format!("sweep.values[{i}]"), e.to_string()));
            }
        }
        Ok(())
    }

    /// The `i`-th run configuration and its axis label.
    pub fn apply(&self, base: &ExperimentConfig, i: usize) -> (ExperimentConfig, String) {
        let mut c = base.clone();
        c.sweep = None;
        let label = match self {
            SweepSpec::F(v) => {
                c.samples.f = Some(vec![v[i]]);
                c.load.f = Some(v[i]);
                c.data.f = v[i];
                format!("{:?}", v[i])
            }
            SweepSpec::Eps(v) => {
                c.grid.periods = vec![v[i]];
                c.data.periods = v[i];
                format!("{}", v[i])
            }
            SweepSpec::Resolution(v) => {
                c.grid.n = v[i];
                c.grid.ladder = Vec::new();
                format!("{}", v[i])
            }
            SweepSpec::K(v) => {
                c.grid.k = v[i];
                c.grid.k_list = vec![v[i]];
                format!("{}", v[i])
            }
        };
        (c, label)
    }
}

impl ExperimentConfig {
    /// Parses JSON text, reporting the path of the first offending key.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Schema { path: if path.is_empty() { ".".into() } else { path }, message: e.into_inner().to_string() }
        })?;
        cfg.grid.check()?;
        if let Some(spec) = &cfg.sweep {
            spec.check(&cfg)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    pub fn tessellation(&self, base: &Path) -> Result<Tessellation, ConfigError> {
        self.tessellation.as_ref().ok_or_else(|| ConfigError::at("tessellation", "missing key"))?.build(base)
    }

    /// Seed for stochastic steps; mandatory when such a step runs.
    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| ConfigError::at("seed", "missing key (required by a stochastic step)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_report_their_path() {
        let err = ExperimentConfig::from_json(r#"{"grid": {"n": 16, "m": 3}}"#).unwrap_err();
        match err {
            ConfigError::Schema { path, .. } => assert_eq!(path, "grid.m"),
            other => panic!("{other}"),
        }
        let err = ExperimentConfig::from_json(r#"{"materials": {"stored": [{"c2": 1, "cp": 0.1, "p": 4, "q": 1}]}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("materials.stored[0]"), "{err}");
    }

    #[test]
    fn defaults_fill_everything() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c.grid.n, 32);
        assert_eq!(c.tolerances.fd_ratio, [8.0, 12.5]);
        assert_eq!(c.samples.matrices(0).unwrap().len(), 12);
        assert!(c.require_seed().is_err());
    }

    #[test]
    fn grid_values_are_checked() {
        let err = ExperimentConfig::from_json(r#"{"grid": {"ladder": [16, 7]}}"#).unwrap_err();
        assert!(err.to_string().contains("grid.ladder[1]"), "{err}");
    }

    #[test]
    fn tessellation_presets_build() {
        let c = ExperimentConfig::from_json(r#"{"tessellation": {"kind": "disk", "radius": 0.3}}"#).unwrap();
        assert_eq!(c.tessellation(Path::new(".")).unwrap().labels(), vec![0, 1]);
        let c = ExperimentConfig::from_json(r#"{"tessellation": {"kind": "disk", "radius": 0.9}}"#).unwrap();
        assert!(c.tessellation(Path::new(".")).is_err());
    }

    #[test]
    fn sweep_overrides_one_axis() {
        let c = ExperimentConfig::from_json(r#"{"sweep": {"axis": "resolution", "values": [16, 32]}}"#).unwrap();
        let s = c.sweep.clone().unwrap();
        let (run, label) = s.apply(&c, 1);
        assert_eq!(run.grid.n, 32);
        assert_eq!(label, "32");
        assert!(run.sweep.is_none());
    }
}
