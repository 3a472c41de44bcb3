//! Energy densities, convex bounds, monotone coefficient maps and their validators.

pub mod bound;
pub mod coefficient;
pub mod dist;
pub mod profile;
pub mod sampling;
pub mod stored;
pub mod validate;

use thiserror::Error;

use crate::geometry::{GeometryError, Tessellation};
use crate::tensor::{Mat2, Mat4};

pub use bound::{build_matching_bound, search_matching_bound, BoundParams, ConvexBound};
pub use coefficient::{coefficient_distance, omega, MonotoneCoefficient};
pub use dist::{dist_so2, dist_so_svd};
pub use sampling::SamplePlan;
pub use stored::StoredEnergy;
pub use validate::{validate_bound, validate_coefficient, validate_stored, AxiomVerdict, ClassVerdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("outside C3 tube: dist {dist:.4} >= {tube}")]
    OutsideTube { dist: f64, tube: f64 },
    #[error("matching bound infeasible for (mu = {mu}, delta = {delta}): {reason}")]
    Infeasible { mu: f64, delta: f64, reason: String },
    #[error("phase label {0} has no assigned density")]
    MissingPhase(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Pointwise constitutive law: energy, its gradient (flux) and Hessian (tangent).
pub trait PointLaw: Sync + Send {
    fn energy(&self, f: &Mat2) -> f64;
    fn flux(&self, f: &Mat2) -> Mat2;
    fn tangent(&self, f: &Mat2) -> Mat4;
}

/// A tessellation with one law per phase label.
#[derive(Clone, Debug)]
pub struct HeterogeneousField<L> {
    pub tess: Tessellation,
    pub phases: Vec<L>,
}

impl<L> HeterogeneousField<L> {
    pub fn new(tess: Tessellation, phases: Vec<L>) -> Result<Self, EnergyError> {
        for label in tess.labels() {
            if label >= phases.len() {
                return Err(EnergyError::MissingPhase(label));
            }
        }
        Ok(Self { tess, phases })
    }

    pub fn law_at(&self, x: [f64; 2]) -> &L {
        &self.phases[self.tess.label_at(x)]
    }

    pub fn map<M>(&self, f: impl Fn(&L) -> M) -> HeterogeneousField<M> {
        HeterogeneousField { tess: self.tess.clone(), phases: self.phases.iter().map(f).collect() }
    }
}

impl HeterogeneousField<StoredEnergy> {
    pub fn matching_bound(&self, params: BoundParams) -> Result<HeterogeneousField<ConvexBound>, EnergyError> {
        let phases = self
            .phases
            .iter()
            .map(|w| ConvexBound::new(*w, params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HeterogeneousField { tess: self.tess.clone(), phases })
    }
}

impl HeterogeneousField<ConvexBound> {
    /// Shifted-gradient coefficient field `a_R(x, F) = DV(x, R + F) − DV(x, R)`.
    pub fn shifted(&self, r: Mat2) -> HeterogeneousField<MonotoneCoefficient> {
        self.map(|v| MonotoneCoefficient::shifted(v.clone(), r))
    }
}
