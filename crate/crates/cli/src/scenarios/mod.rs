mod cell;
mod domain;
mod energy;

use std::path::{Path, PathBuf};

use cellhom_core::tensor::Mat2;
use cellhom_core::SolverError;
use clap::ValueEnum;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{num, RunReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ValidateEnergy,
    TessRegularity,
    Corrector,
    HomEnergy,
    SingleCellCheck,
    UniformLipschitz,
    ExcessDecay,
    LayeredDecay,
    TwoScale,
    BucklingSearch,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::ValidateEnergy => "validate-energy",
            Scenario::TessRegularity => "tess-regularity",
            Scenario::Corrector => "corrector",
            Scenario::HomEnergy => "hom-energy",
            Scenario::SingleCellCheck => "single-cell-check",
            Scenario::UniformLipschitz => "uniform-lipschitz",
            Scenario::ExcessDecay => "excess-decay",
            Scenario::LayeredDecay => "layered-decay",
            Scenario::TwoScale => "two-scale",
            Scenario::BucklingSearch => "buckling-search",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::value_variants().iter().copied().find(|s| s.name() == name)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Inputs shared by all scenarios of one run.
pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    /// Directory that relative paths in the config resolve against.
    pub base: PathBuf,
    pub out: PathBuf,
}

impl Ctx<'_> {
    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.cfg.require_seed()
    }

    pub fn base(&self) -> &Path {
        &self.base
    }
}

pub(crate) fn dispatch(scenario: Scenario, ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    match scenario {
        Scenario::ValidateEnergy => energy::validate_energy(ctx, report),
        Scenario::TessRegularity => cell::tess_regularity(ctx, report),
        Scenario::Corrector => cell::corrector(ctx, report),
        Scenario::HomEnergy => energy::hom_energy(ctx, report),
        Scenario::SingleCellCheck => energy::single_cell_check(ctx, report),
        Scenario::UniformLipschitz => domain::uniform_lipschitz(ctx, report),
        Scenario::ExcessDecay => domain::excess_decay(ctx, report),
        Scenario::LayeredDecay => domain::layered_decay(ctx, report),
        Scenario::TwoScale => domain::two_scale(ctx, report),
        Scenario::BucklingSearch => energy::buckling_search(ctx, report),
    }
}

/// Matrix entries in row order `F11, F12, F21, F22`.
pub(crate) fn entries(m: &Mat2) -> [String; 4] {
    [num(m[(0, 0)]), num(m[(0, 1)]), num(m[(1, 0)]), num(m[(1, 1)])]
}

pub(crate) const MATRIX_HEADER: [&str; 4] = ["f11", "f12", "f21", "f22"];

pub(crate) fn header<'a>(prefix: &[&'a str], suffix: &[&'a str]) -> Vec<&'a str> {
    prefix.iter().chain(MATRIX_HEADER.iter()).chain(suffix).copied().collect()
}
