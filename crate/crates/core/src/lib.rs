//! Periodic homogenization of nonlinearly elastic composites.

pub mod bvp;
pub mod cellsolver;
pub mod energy;
pub mod geometry;
pub mod regularity;
pub mod tensor;

pub use cellsolver::{CellProblem, CorrectorSet, DiscreteField, EnergyModel, Grid, SolverError, Strategy};
pub use energy::{BoundParams, ConvexBound, EnergyError, HeterogeneousField, MonotoneCoefficient, PointLaw, StoredEnergy};
pub use geometry::{GeometryError, Labeling, LayeredTessellation, Tessellation};
pub use tensor::{Mat2, Mat4};
