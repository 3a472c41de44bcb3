//! Regularity diagnostics: excess, layered decay, the A-quantity, perturbation
//! profiles, uniform Lipschitz ratios and the two-scale expansion error.

mod excess;
mod twoscale;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::bvp::{solve_eps_problem, EpsProblem, EpsReport, Load};
use crate::cellsolver::{solve_linearized, CellProblem, CorrectorSet, EnergyModel, Grid, SolverError};
use crate::energy::{coefficient_distance, HeterogeneousField, MonotoneCoefficient, PointLaw};
use crate::geometry::{ball_points, Labeling};
use crate::tensor::{basis, Mat2};

pub use excess::{
    excess, excess_curve, excess_decay_experiment, layered_decay_experiment, transmission_data, ExcessCurve, ExcessValue,
    LayeredDecay, Window,
};
pub use twoscale::{two_scale_expansion, TwoScaleReport};

/// Least-squares power law `y ≈ c·x^γ` on log–log axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub log_constant: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
}

/// Fits `y ≈ c x^γ` over positive pairs; `None` below four usable points.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Option<PowerFit> {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 1e-300).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len();
    if n < 4 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let exponent = sxy / sxx;
    let log_constant = my - exponent * mx;
    let residual = (pts.iter().map(|p| (p.1 - log_constant - exponent * p.0).powi(2)).sum::<f64>() / n as f64).sqrt();
    Some(PowerFit { exponent, log_constant, residual, points: n })
}

/// Cached cell correctors of a field, aligned with physical grids of the same
/// resolution per period.
pub struct CellOracle<L> {
    pub cell: CellProblem<L>,
    cache: Mutex<HashMap<[u64; 4], Arc<CorrectorSet>>>,
    sens: Mutex<HashMap<[u64; 4], Arc<[Vec<Mat2>; 4]>>>,
}

fn key(f: &Mat2) -> [u64; 4] {
    [f[(0, 0)].to_bits(), f[(1, 0)].to_bits(), f[(0, 1)].to_bits(), f[(1, 1)].to_bits()]
}

impl<L: PointLaw + Clone> CellOracle<L> {
    pub fn new(field: HeterogeneousField<L>, n: usize) -> Self {
        Self { cell: CellProblem::new(field, n, 1), cache: Mutex::new(HashMap::new()), sens: Mutex::new(HashMap::new()) }
    }

    pub fn solves(&self) -> usize {
        self.cache.lock().expect("oracle lock").len()
    }

    pub fn corrector(&self, f: &Mat2) -> Result<Arc<CorrectorSet>, SolverError> {
        let k = key(f);
        if let Some(c) = self.cache.lock().expect("oracle lock").get(&k) {
            return Ok(c.clone());
        }
        let c = Arc::new(self.cell.solve_corrector(*f)?);
        self.cache.lock().expect("oracle lock").insert(k, c.clone());
        Ok(c)
    }

    /// `∇ψ_{E_k}` at cell quadrature points for the four unit matrices.
    pub fn sensitivities(&self, corr: &CorrectorSet) -> Result<Arc<[Vec<Mat2>; 4]>, SolverError> {
        let k = key(&corr.f);
        if let Some(s) = self.sens.lock().expect("oracle lock").get(&k) {
            return Ok(s.clone());
        }
        let t = self.cell.linearization(corr);
        let grid = &self.cell.grid;
        let mut out: [Vec<Mat2>; 4] = Default::default();
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = grid.gradients(&solve_linearized(grid, &t, &basis(i))?);
        }
        let s = Arc::new(out);
        self.sens.lock().expect("oracle lock").insert(k, s.clone());
        Ok(s)
    }

    fn index(&self, y: f64, round: bool) -> usize {
        let n = self.cell.grid.n as f64;
        let t = (y + 0.5) * n;
        let i = if round { t.round() } else { t.floor() };
        (i as i64).rem_euclid(self.cell.grid.n as i64) as usize
    }

    /// Cell quadrature index matching quadrature point `q` of element `e` of `grid`.
    pub fn cell_qp(&self, grid: &Grid, e: usize, q: usize) -> usize {
        let x = grid.element_center(e);
        let (i, j) = (self.index(x[0] / grid.eps, false), self.index(x[1] / grid.eps, false));
        4 * (j * self.cell.grid.n + i) + q
    }

    /// Cell node matching node `node` of `grid`.
    pub fn cell_node(&self, grid: &Grid, node: usize) -> usize {
        let x = grid.node_position(node);
        let (i, j) = (self.index(x[0] / grid.eps, true), self.index(x[1] / grid.eps, true));
        j * self.cell.grid.n + i
    }
}

/// Per-point `A = (∇′u, J_2)` with `∇′u = ∂_1 u` and `J_2 = a(∇u) e_2`.
#[derive(Clone, Debug, Serialize)]
pub struct AQuantity {
    pub values: Vec<[f64; 4]>,
    /// `max |A|/|∇u|` and `max |∇u|/|A|` over points with `∇u ≠ 0`.
    pub max_a_over_grad: f64,
    pub max_grad_over_a: f64,
    /// `c̄(β) = (1 + β^{-3})^{1/2}`.
    pub cbar: f64,
}

impl AQuantity {
    pub fn within_bounds(&self) -> bool {
        self.max_a_over_grad <= self.cbar * (1.0 + 1e-12) && self.max_grad_over_a <= self.cbar * (1.0 + 1e-12)
    }
}

pub fn cbar(beta: f64) -> f64 {
    (1.0 + beta.powi(-3)).sqrt()
}

/// A-quantity of gradients `grads` with fluxes `fluxes` for an `e_2`-layered field of class `A_β`.
pub fn a_quantity(grads: &[Mat2], fluxes: &[Mat2], beta: f64) -> AQuantity {
    let mut values = Vec::with_capacity(grads.len());
    let (mut up, mut down) = (0.0f64, 0.0f64);
    for (g, p) in grads.iter().zip(fluxes) {
        let a = [g[(0, 0)], g[(1, 0)], p[(0, 1)], p[(1, 1)]];
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ng = g.norm();
        if ng > 0.0 && na > 0.0 {
            up = up.max(na / ng);
            down = down.max(ng / na);
        }
        values.push(a);
    }
    AQuantity { values, max_a_over_grad: up, max_grad_over_a: down, cbar: cbar(beta) }
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationProfile {
    /// `(r, r^{-s} (⨍_{B_r} d(a, ā)²)^{1/2})`.
    pub curve: Vec<(f64, f64)>,
    pub sup: f64,
    /// Pairwise phase distances `d(P_i, P̄_j)`.
    pub phase_distances: Vec<Vec<f64>>,
}

/// `r ↦ r^{-s} ‖d(a, ā)‖_{L²(B_r)}` for piecewise-constant coefficient fields.
#[allow(clippy::too_many_arguments)]
pub fn perturbation_profile(
    tess: &impl Labeling,
    phases: &[MonotoneCoefficient],
    comparator: &impl Labeling,
    comparator_phases: &[MonotoneCoefficient],
    center: [f64; 2],
    radii: &[f64],
    s: f64,
    samples: usize,
    seed: u64,
    directions: &[Mat2],
) -> Result<PerturbationProfile, crate::geometry::GeometryError> {
    let la = tess.label_set();
    let lb = comparator.label_set();
    if !(la.iter().all(|l| lb.contains(l)) || lb.iter().all(|l| la.contains(l))) {
        return Err(crate::geometry::GeometryError::Incomparable(la, lb));
    }
    let d: Vec<Vec<f64>> = phases
        .iter()
        .map(|a| comparator_phases.iter().map(|b| coefficient_distance(a, b, directions)).collect())
        .collect();
    let mut curve = Vec::new();
    let mut sup = 0.0f64;
    for &r in radii {
        let pts = ball_points(center, r, samples, seed);
        let m = pts.iter().map(|x| d[tess.label_at(*x)][comparator.label_at(*x)].powi(2)).sum::<f64>() / pts.len() as f64;
        let v = r.powf(-s) * m.sqrt();
        sup = sup.max(v);
        curve.push((r, v));
    }
    Ok(PerturbationProfile { curve, sup, phase_distances: d })
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzRow {
    pub eps: f64,
    pub lambda: f64,
    pub certified: bool,
    pub max_dist: f64,
    /// `‖dist(F + ∇u, SO(2))‖_∞ / Λ`.
    pub dist_ratio: f64,
    /// `‖∇u‖_∞(middle half) / (‖∇u‖_{L²} + ‖f‖_{L^q})`.
    pub grad_ratio: f64,
    /// Same ratio with the max over the whole cell, interfaces included.
    pub grad_ratio_full: f64,
    pub report: EpsReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzSweep {
    pub rows: Vec<LipschitzRow>,
    /// `max/min` of the distance ratio across ε.
    pub dist_spread: f64,
    pub grad_spread: f64,
    pub all_certified: bool,
}

impl LipschitzSweep {
    pub fn pass(&self) -> bool {
        self.all_certified && self.dist_spread < 2.0
    }
}

fn spread(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.filter(|x| x.is_finite()).collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if v.is_empty() || max == 0.0 {
        1.0
    } else {
        max / min
    }
}

/// Solves the ε-problem for each number of periods at fixed elements per period.
pub fn uniform_lipschitz_sweep(
    model: &EnergyModel,
    f: Mat2,
    load: &Load,
    periods: &[usize],
    n: usize,
    seed: u64,
) -> Result<LipschitzSweep, SolverError> {
    let mut rows = Vec::new();
    for &k in periods {
        let prob = EpsProblem { periods: k, n, f, load: load.clone(), model: model.clone(), lambda_warning: 0.1, seed };
        let sol = solve_eps_problem(&prob)?;
        let grid = &sol.u.grid;
        let grads = grid.gradients(&sol.u.values);
        let full = grads.iter().map(|g| g.norm()).fold(0.0, f64::max);
        let r = sol.report;
        let denom = r.grad_l2 + r.lambda.load_norm;
        let ratio = |x: f64| if denom > 0.0 { x / denom } else { f64::NAN };
        rows.push(LipschitzRow {
            eps: r.eps,
            lambda: r.lambda.value,
            certified: r.certified,
            max_dist: r.max_dist,
            dist_ratio: if r.lambda.value > 0.0 { r.max_dist / r.lambda.value } else { f64::NAN },
            grad_ratio: ratio(r.grad_max_interior),
            grad_ratio_full: ratio(full),
            report: r,
        });
    }
    Ok(LipschitzSweep {
        dist_spread: spread(rows.iter().map(|r| r.dist_ratio)),
        grad_spread: spread(rows.iter().map(|r| r.grad_ratio)),
        all_certified: rows.iter().all(|r| r.certified),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::SamplePlan;
    use crate::geometry::{LayeredTessellation, Tessellation};

    #[test]
    fn power_fit_recovers_exponent() {
        let x = [1.0, 2.0, 4.0, 8.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.7)).collect();
        let f = fit_power_law(&x, &y).unwrap();
        assert!((f.exponent - 0.7).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!(fit_power_law(&x[..3], &y[..3]).is_none());
    }

    #[test]
    fn a_quantity_of_zero_gradient() {
        let a = a_quantity(&[Mat2::zeros(); 4], &[Mat2::zeros(); 4], 0.5);
        assert!(a.values.iter().all(|v| v.iter().all(|x| *x == 0.0)));
        assert!(a.within_bounds());
        assert!((a.cbar - 3.0).abs() < 1e-15);
    }

    #[test]
    fn perturbation_profile_plateau() {
        let disk = Tessellation::disk([0.0, 0.0], 0.3);
        let half = LayeredTessellation::new([1.0, 0.0], vec![0.3], vec![1, 0]).unwrap();
        let phases = [MonotoneCoefficient::linear(1.0), MonotoneCoefficient::linear(4.0)];
        let dirs = SamplePlan { count: 32, seed: 0 }.matrices();
        let same = perturbation_profile(&disk, &phases, &disk, &phases, [0.3, 0.0], &[0.1, 0.05], 0.5, 4000, 1, &dirs).unwrap();
        assert_eq!(same.sup, 0.0);
        let p = perturbation_profile(&disk, &phases, &half, &phases, [0.3, 0.0], &[0.1], 0.0, 20_000, 1, &dirs).unwrap();
        let m = crate::geometry::sym_diff_measure(&disk, &half, [0.3, 0.0], 0.1, 20_000, 1).unwrap();
        assert!((p.curve[0].1 - 3.0 * (m.value / 2.0).sqrt()).abs() < 1e-12);
    }
}
