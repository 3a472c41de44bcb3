//! Heterogeneous boundary-value problems: the ε-periodic problem with load,
//! Dirichlet problems on cubes, and homogenized reference problems.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cellsolver::linalg::{axpy, norm};
use crate::cellsolver::{
    newton, smooth_perturbation, CellProblem, DiscreteField, EnergyModel, Functional, Grid, NewtonOptions, SolveLog,
    SolverError,
};
use crate::energy::dist::dist_so2;
use crate::energy::{HeterogeneousField, MonotoneCoefficient, PointLaw};
use crate::geometry::Tessellation;
use crate::tensor::{apply, Mat2, Mat4};

/// Exponent of the load norm in `Λ`.
pub const LOAD_EXPONENT: f64 = 4.0;

/// Body force on `Q_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Load {
    Zero,
    /// `f(x) = A sin(2π k·x)`.
    Sine { amplitude: [f64; 2], wave: [i32; 2] },
    /// Nodal values on the problem grid.
    Nodal { values: Vec<[f64; 2]> },
}

impl Load {
    /// Nodal values on `grid`, projected to mean zero; the flag reports a non-trivial projection.
    pub fn sample(&self, grid: &Grid) -> (Vec<[f64; 2]>, bool) {
        let mut v: Vec<[f64; 2]> = match self {
            Load::Zero => vec![[0.0; 2]; grid.nodes()],
            Load::Sine { amplitude, wave } => (0..grid.nodes())
                .map(|node| {
                    let x = grid.node_position(node);
                    let s = (std::f64::consts::TAU * (wave[0] as f64 * x[0] + wave[1] as f64 * x[1])).sin();
                    [amplitude[0] * s, amplitude[1] * s]
                })
                .collect(),
            Load::Nodal { values } => values.clone(),
        };
        let n = v.len() as f64;
        let mean = [v.iter().map(|x| x[0]).sum::<f64>() / n, v.iter().map(|x| x[1]).sum::<f64>() / n];
        let scale = v.iter().map(|x| x[0].abs().max(x[1].abs())).fold(0.0, f64::max);
        let projected = mean[0].abs().max(mean[1].abs()) > 1e-14 * scale.max(f64::MIN_POSITIVE);
        v.iter_mut().for_each(|x| {
            x[0] -= mean[0];
            x[1] -= mean[1];
        });
        (v, projected)
    }
}

/// `Λ(f, F) = ‖f‖_{L^q(Q_1)} + dist(F, SO(2))`, `q = 4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LoadMeasure {
    pub load_norm: f64,
    pub dist: f64,
    pub value: f64,
}

impl LoadMeasure {
    pub fn new(grid: &Grid, f: &[[f64; 2]], macro_f: &Mat2) -> Self {
        let w = grid.h * grid.h;
        let s: f64 = f.iter().map(|v| (v[0] * v[0] + v[1] * v[1]).powf(LOAD_EXPONENT / 2.0) * w).sum();
        let load_norm = s.powf(1.0 / LOAD_EXPONENT);
        let dist = dist_so2(macro_f);
        Self { load_norm, dist, value: load_norm + dist }
    }
}

/// ε-periodic minimization problem on `Q_1` with `1/ε` periods.
#[derive(Clone, Debug)]
pub struct EpsProblem {
    pub periods: usize,
    /// Elements per period.
    pub n: usize,
    pub f: Mat2,
    pub load: Load,
    pub model: EnergyModel,
    /// Above this `Λ` a warning is recorded.
    pub lambda_warning: f64,
    /// Seed of the perturbation check.
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsReport {
    pub eps: f64,
    pub lambda: LoadMeasure,
    pub certified: bool,
    /// Quadrature-point max of `dist(F + ∇u, SO(2))`.
    pub max_dist: f64,
    /// Same max restricted to the middle half of the cell.
    pub max_dist_interior: f64,
    pub delta: f64,
    /// Euler–Lagrange residual of `W` at the computed `u`, relative.
    pub w_residual: f64,
    /// Lowest `W`-energy change among the perturbations (non-negative when the check passes).
    pub perturbation_margin: Option<f64>,
    pub load_projected: bool,
    pub warnings: Vec<String>,
    pub log: SolveLog,
    /// Normalized `L²` and interior max of `∇u`.
    pub grad_l2: f64,
    pub grad_max_interior: f64,
}

pub struct EpsSolution {
    pub u: DiscreteField,
    pub report: EpsReport,
}

impl EpsProblem {
    pub fn eps(&self) -> f64 {
        1.0 / self.periods as f64
    }

    pub fn grid(&self) -> Grid {
        Grid::periodic(&self.model.w.tess, self.n, self.periods, self.eps())
    }
}

fn in_middle(grid: &Grid, x: [f64; 2]) -> bool {
    let half = grid.side() as f64 * grid.h / 4.0;
    x[0].abs() <= half && x[1].abs() <= half
}

/// Minimizes the convex surrogate `∫ V(x/ε, F + ∇u) − f·u` and certifies it against `W`.
pub fn solve_eps_problem(prob: &EpsProblem) -> Result<EpsSolution, SolverError> {
    let grid = Arc::new(prob.grid());
    let (f_nodal, load_projected) = prob.load.sample(&grid);
    let lambda = LoadMeasure::new(&grid, &f_nodal, &prob.f);
    let mut warnings = Vec::new();
    if prob.n < 16 {
        warnings.push(format!("{} elements per period; at least 16 resolve the microstructure", prob.n));
    }
    if lambda.value > prob.lambda_warning {
        warnings.push(format!("load measure {:.4} exceeds {}", lambda.value, prob.lambda_warning));
    }
    let area = grid.h * grid.h;
    let b: Vec<f64> = f_nodal.iter().flat_map(|v| [v[0] * area, v[1] * area]).collect();
    let vfun = Functional::new(&grid, &prob.model.v.phases, prob.f).with_load(&b);
    let (u, log) = newton(&vfun, vec![0.0; grid.dofs()], &NewtonOptions::default())?;
    let totals = vfun.total_gradients(&u);
    let dists: Vec<f64> = totals.par_iter().map(dist_so2).collect();
    let max_dist = dists.iter().copied().fold(0.0, f64::max);
    let mut max_dist_interior = 0.0f64;
    let mut grad_max_interior = 0.0f64;
    let mut grad_sq = 0.0;
    for (q, (d, t)) in dists.iter().zip(&totals).enumerate() {
        let du = (t - prob.f).norm();
        grad_sq += du * du;
        if in_middle(&grid, grid.qp_position(q / 4, q % 4)) {
            max_dist_interior = max_dist_interior.max(*d);
            grad_max_interior = grad_max_interior.max(du);
        }
    }
    let delta = prob.model.delta();
    let certified = max_dist < delta;
    let wfun = Functional::new(&grid, &prob.model.w.phases, prob.f).with_load(&b);
    let (gw, scale) = wfun.gradient(&u);
    let gw0 = norm(&wfun.gradient(&vec![0.0; grid.dofs()]).0);
    let w_residual = norm(&gw) / if gw0 > 0.0 { gw0 } else { scale.max(f64::MIN_POSITIVE) };
    let perturbation_margin = certified.then(|| perturbation_check(&wfun, &u, prob.seed));
    let report = EpsReport {
        eps: prob.eps(),
        lambda,
        certified,
        max_dist,
        max_dist_interior,
        delta,
        w_residual,
        perturbation_margin,
        load_projected,
        warnings,
        log,
        grad_l2: (grad_sq / totals.len() as f64).sqrt(),
        grad_max_interior,
    };
    Ok(EpsSolution { u: DiscreteField { grid, values: u }, report })
}

/// Minimum of `E_W(u + p) − E_W(u)` over 20 smooth perturbations at each amplitude in `{1e−2, 1e−3}`,
/// offset by a roundoff allowance.
fn perturbation_check<L: PointLaw>(fun: &Functional<L>, u: &[f64], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e0 = fun.energy(u);
    let tol = 1e-12 * (e0.abs() + fun.grid.volume());
    let mut margin = f64::INFINITY;
    for amp in [1e-2, 1e-3] {
        for _ in 0..20 {
            let p = smooth_perturbation(fun.grid, amp, &mut rng);
            let mut trial = u.to_vec();
            axpy(&mut trial, 1.0, &p);
            margin = margin.min(fun.energy(&trial) - e0 + tol);
        }
    }
    margin
}

/// Cube domain `Q_{kε}` with `n` elements per period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeDomain {
    pub periods: usize,
    pub n: usize,
    pub eps: f64,
}

impl CubeDomain {
    pub fn grid(&self, tess: &Tessellation) -> Grid {
        Grid::dirichlet(tess, self.n, self.periods, self.eps)
    }

    pub fn side(&self) -> f64 {
        self.periods as f64 * self.eps
    }
}

/// Newton solve of `−div a(x/ε, ∇u) = f` with `u = g` on the boundary.
pub fn solve_dirichlet<L: PointLaw>(
    field: &HeterogeneousField<L>,
    domain: &CubeDomain,
    g: impl Fn([f64; 2]) -> [f64; 2],
    f: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<(DiscreteField, SolveLog), SolverError> {
    let grid = Arc::new(domain.grid(&field.tess));
    let (u, log) = dirichlet_on_grid(&grid, &field.phases, g, f)?;
    Ok((DiscreteField { grid, values: u }, log))
}

/// Dirichlet solve on a prepared grid with laws indexed by the grid labels.
pub fn dirichlet_on_grid<L: PointLaw>(
    grid: &Grid,
    laws: &[L],
    g: impl Fn([f64; 2]) -> [f64; 2],
    f: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<(Vec<f64>, SolveLog), SolverError> {
    let mut u0 = vec![0.0; grid.dofs()];
    let mut b = vec![0.0; grid.dofs()];
    let area = grid.h * grid.h;
    for node in 0..grid.nodes() {
        let x = grid.node_position(node);
        let gv = g(x);
        u0[2 * node] = gv[0];
        u0[2 * node + 1] = gv[1];
        if !grid.is_boundary(node) {
            let fv = f(x);
            b[2 * node] = fv[0] * area;
            b[2 * node + 1] = fv[1] * area;
        }
    }
    let fun = Functional::new(grid, laws, Mat2::zeros()).with_load(&b);
    newton(&fun, u0, &NewtonOptions::default())
}

/// Homogenized coefficient map `F ↦ a_0(F)` for the macroscopic problem.
pub enum HomogenizedMap {
    /// `a_0(F) = T F` with a constant tensor.
    Linear(Mat4),
    /// Multilinear interpolation of cell-problem values on a lattice of spacing `spacing`.
    Lattice(Box<LatticeMap>),
}

pub struct LatticeMap {
    pub cell: CellProblem<MonotoneCoefficient>,
    pub spacing: f64,
    pub budget: usize,
    cache: Mutex<HashMap<[i64; 4], (f64, Mat2)>>,
}

impl LatticeMap {
    pub fn new(cell: CellProblem<MonotoneCoefficient>, spacing: f64, budget: usize) -> Self {
        Self { cell, spacing, budget, cache: Mutex::new(HashMap::new()) }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    fn node(&self, key: [i64; 4]) -> Result<(f64, Mat2), SolverError> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        if self.cached() >= self.budget {
            return Err(SolverError::NoConvergence {
                what: "homogenized lattice: cache budget exceeded, use a denser F-lattice or a larger budget",
                residuals: Vec::new(),
            });
        }
        let f = Mat2::new(key[0] as f64, key[2] as f64, key[1] as f64, key[3] as f64) * self.spacing;
        let corr = self.cell.solve_corrector(f)?;
        let v = (corr.energy, corr.a0);
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    /// Interpolated `(energy, a_0, Da_0)` at `F`.
    pub fn eval(&self, f: &Mat2) -> Result<(f64, Mat2, Mat4), SolverError> {
        let v = crate::tensor::vec4(f) / self.spacing;
        let base: [i64; 4] = std::array::from_fn(|i| v[i].floor() as i64);
        let t: [f64; 4] = std::array::from_fn(|i| v[i] - base[i] as f64);
        let mut e = 0.0;
        let mut a = Mat2::zeros();
        let mut da = Mat4::zeros();
        for corner in 0..16usize {
            let bits: [usize; 4] = std::array::from_fn(|i| (corner >> i) & 1);
            let key: [i64; 4] = std::array::from_fn(|i| base[i] + bits[i] as i64);
            let w: [f64; 4] = std::array::from_fn(|i| if bits[i] == 1 { t[i] } else { 1.0 - t[i] });
            let weight: f64 = w.iter().product();
            let (ec, ac) = self.node(key)?;
            e += weight * ec;
            a += ac * weight;
            for j in 0..4 {
                let others: f64 = (0..4).filter(|&i| i != j).map(|i| w[i]).product();
                let dw = if bits[j] == 1 { 1.0 } else { -1.0 } * others / self.spacing;
                da.column_mut(j).axpy(dw, &crate::tensor::vec4(&ac), 1.0);
            }
        }
        Ok((e, a, da))
    }
}

impl HomogenizedMap {
    pub fn eval(&self, f: &Mat2) -> Result<(f64, Mat2, Mat4), SolverError> {
        match self {
            HomogenizedMap::Linear(t) => {
                let a = apply(t, f);
                Ok((0.5 * a.dot(f), a, *t))
            }
            HomogenizedMap::Lattice(l) => l.eval(f),
        }
    }
}

/// Point law adapter; lattice failures are recorded and reported after the solve.
struct MapLaw<'a> {
    map: &'a HomogenizedMap,
    failure: Mutex<Option<SolverError>>,
}

impl MapLaw<'_> {
    fn get(&self, f: &Mat2) -> (f64, Mat2, Mat4) {
        match self.map.eval(f) {
            Ok(v) => v,
            Err(e) => {
                self.failure.lock().expect("failure lock").get_or_insert(e);
                (f64::NAN, Mat2::zeros(), Mat4::identity())
            }
        }
    }
}

impl PointLaw for MapLaw<'_> {
    fn energy(&self, f: &Mat2) -> f64 {
        self.get(f).0
    }
    fn flux(&self, f: &Mat2) -> Mat2 {
        self.get(f).1
    }
    fn tangent(&self, f: &Mat2) -> Mat4 {
        self.get(f).2
    }
}

/// Newton solve of `div a_0(∇u_0) = f` on a homogeneous cube grid.
pub fn solve_homogenized(
    map: &HomogenizedMap,
    domain: &CubeDomain,
    g: impl Fn([f64; 2]) -> [f64; 2],
    f: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<(DiscreteField, SolveLog), SolverError> {
    let grid = Arc::new(domain.grid(&Tessellation::homogeneous(0)));
    let law = MapLaw { map, failure: Mutex::new(None) };
    let laws = std::slice::from_ref(&law);
    let result = dirichlet_on_grid(&grid, laws, g, f);
    if let Some(e) = law.failure.lock().expect("failure lock").take() {
        return Err(e);
    }
    let (u, log) = result?;
    Ok((DiscreteField { grid, values: u }, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{BoundParams, StoredEnergy};
    use crate::tensor::rotation;

    fn model(tess: Tessellation) -> EnergyModel {
        let w = HeterogeneousField::new(tess, vec![StoredEnergy::new(1.0, 0.1, 4.0), StoredEnergy::new(2.0, 0.1, 4.0)]).unwrap();
        EnergyModel::new(w, BoundParams::default()).unwrap()
    }

    #[test]
    fn ground_state_is_zero() {
        let prob = EpsProblem {
            periods: 2,
            n: 8,
            f: rotation(0.4),
            load: Load::Zero,
            model: model(Tessellation::laminate_e2(0, 1)),
            lambda_warning: 0.1,
            seed: 0,
        };
        let sol = solve_eps_problem(&prob).unwrap();
        assert!(sol.u.max_abs() < 1e-14);
        assert!(sol.report.certified);
        assert_eq!(sol.report.lambda.value, 0.0);
    }

    #[test]
    fn certified_run_solves_the_original_problem() {
        let prob = EpsProblem {
            periods: 2,
            n: 8,
            f: rotation(0.2) * 1.03,
            load: Load::Sine { amplitude: [0.0, 0.02], wave: [1, 0] },
            model: model(Tessellation::disk([0.0, 0.0], 0.3)),
            lambda_warning: 0.1,
            seed: 3,
        };
        let sol = solve_eps_problem(&prob).unwrap();
        let r = &sol.report;
        assert!(r.certified);
        assert!(r.w_residual < 1e-8, "{}", r.w_residual);
        assert!(r.perturbation_margin.unwrap() >= 0.0);
        assert!(!r.load_projected);
    }

    #[test]
    fn affine_data_on_homogeneous_medium() {
        let field = HeterogeneousField::new(Tessellation::homogeneous(0), vec![MonotoneCoefficient::linear(2.0)]).unwrap();
        let dom = CubeDomain { periods: 2, n: 4, eps: 0.5 };
        let f = Mat2::new(0.3, -0.1, 0.2, 0.5);
        let (u, _) = solve_dirichlet(&field, &dom, |x| [f[(0, 0)] * x[0] + f[(0, 1)] * x[1], f[(1, 0)] * x[0] + f[(1, 1)] * x[1]], |_| [0.0; 2]).unwrap();
        for g in u.gradients() {
            assert!((g - f).norm() < 1e-12);
        }
    }

    #[test]
    fn lattice_interpolation_is_exact_for_linear_laws() {
        let field = HeterogeneousField::new(
            Tessellation::laminate_e2(0, 1),
            vec![MonotoneCoefficient::linear(1.0), MonotoneCoefficient::linear(4.0)],
        )
        .unwrap();
        let cell = CellProblem::new(field, 8, 1);
        let map = LatticeMap::new(cell, 0.05, 64);
        let f = Mat2::new(0.013, 0.021, -0.007, 0.032);
        let (_, a, da) = map.eval(&f).unwrap();
        let exact = Mat2::new(2.5 * 0.013, 1.6 * 0.021, 2.5 * -0.007, 1.6 * 0.032);
        assert!((a - exact).norm() < 1e-10, "{a} vs {exact}");
        assert!((apply(&da, &f) - exact).norm() < 1e-10);
        assert!(map.cached() <= 16);
        let tiny = LatticeMap::new(CellProblem::new(
            HeterogeneousField::new(Tessellation::homogeneous(0), vec![MonotoneCoefficient::linear(1.0)]).unwrap(), 4, 1), 0.05, 3);
        assert!(tiny.eval(&f).is_err());
    }
}
