//! Periodic cell problems: correctors, homogenized coefficients, energies and tangents.

pub mod grid;
pub mod linalg;
pub mod solve;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::energy::dist::dist_so2;
use crate::energy::{ConvexBound, EnergyError, HeterogeneousField, PointLaw, StoredEnergy};
use crate::tensor::{apply, basis, ddot, form, Mat2, Mat4};

pub use grid::{DiscreteField, Grid};
pub use linalg::{pcg, CgReport, DirichletPoisson, Laplacian, PeriodicPoisson};
pub use solve::{lbfgs, newton, Functional, LbfgsOptions, NewtonOptions, SolveLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("{what} did not converge; residual history {residuals:?}")]
    NoConvergence { what: &'static str, residuals: Vec<f64> },
    #[error("linear solver stalled at relative residual {residual:.3e} after {iterations} iterations")]
    LinearSolver { residual: f64, iterations: usize },
    #[error("outside the certified neighborhood: max dist {max_dist:.4} >= delta {delta}")]
    Uncertified { max_dist: f64, delta: f64 },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Corrector `φ(F)` with derived cell averages.
#[derive(Clone, Debug)]
pub struct CorrectorSet {
    pub f: Mat2,
    pub phi: DiscreteField,
    /// `F + ∇φ` at quadrature points.
    pub grads: Vec<Mat2>,
    /// `⨍ a(F + ∇φ)`.
    pub a0: Mat2,
    /// `⨍ W(F + ∇φ)` for the potential of the law.
    pub energy: f64,
    /// Final gradient norm relative to the initial one (or to its roundoff scale).
    pub residual: f64,
    pub log: SolveLog,
}

impl CorrectorSet {
    /// Normalized `L²` norm of `∇φ`.
    pub fn grad_norm(&self) -> f64 {
        (self.grads.iter().map(|g| (g - self.f).norm_squared()).sum::<f64>() / self.grads.len() as f64).sqrt()
    }

    /// Quadrature-point max of `|∇φ|`.
    pub fn grad_max(&self) -> f64 {
        self.grads.iter().map(|g| (g - self.f).norm()).fold(0.0, f64::max)
    }

    /// `|⨍ det(F + ∇φ) − det F|`.
    pub fn det_defect(&self) -> f64 {
        let avg = self.grads.iter().map(|g| g.determinant()).sum::<f64>() / self.grads.len() as f64;
        (avg - self.f.determinant()).abs()
    }

    /// Quadrature-point max of `dist(F + ∇φ, SO(2))`.
    pub fn max_dist(&self) -> f64 {
        self.grads.par_iter().map(dist_so2).reduce(|| 0.0, f64::max)
    }
}

/// Flux corrector in 2D: `σ_i12 = s_i = −σ_i21`.
#[derive(Clone, Debug)]
pub struct FluxCorrector {
    /// Nodal `s_i`, component-interleaved like displacements.
    pub s: DiscreteField,
    /// `⨍|−∂_kσ_ijk − J_ij|² / ⨍|a(F + ∇φ)|²`, square-rooted (strong identity at quadrature points).
    pub strong_residual: f64,
    /// Residual of the weak Poisson equations relative to their right-hand side.
    pub weak_residual: f64,
    /// `max |σ_ijk + σ_ikj|`.
    pub antisymmetry: f64,
}

impl FluxCorrector {
    /// `σ_ijk` at node `node` (indices 0-based).
    pub fn sigma(&self, node: usize, i: usize, j: usize, k: usize) -> f64 {
        let s = self.s.values[2 * node + i];
        match (j, k) {
            (0, 1) => s,
            (1, 0) => -s,
            _ => 0.0,
        }
    }
}

/// One cell problem: a coefficient field on a periodic grid of `k` periods.
pub struct CellProblem<L> {
    pub field: HeterogeneousField<L>,
    pub grid: Arc<Grid>,
    pub opts: NewtonOptions,
}

impl<L: PointLaw + Clone> CellProblem<L> {
    pub fn new(field: HeterogeneousField<L>, n: usize, k: usize) -> Self {
        let grid = Arc::new(Grid::cell(&field.tess, n, k));
        Self { field, grid, opts: NewtonOptions::default() }
    }

    pub fn functional(&self, f: Mat2) -> Functional<'_, L> {
        Functional::new(&self.grid, &self.field.phases, f)
    }

    /// Newton solve of `div a(F + ∇φ) = 0` from `φ = 0`.
    pub fn solve_corrector(&self, f: Mat2) -> Result<CorrectorSet, SolverError> {
        self.solve_corrector_from(f, vec![0.0; self.grid.dofs()])
    }

    pub fn solve_corrector_from(&self, f: Mat2, u0: Vec<f64>) -> Result<CorrectorSet, SolverError> {
        let fun = self.functional(f);
        let g0 = linalg::norm(&fun.gradient(&vec![0.0; self.grid.dofs()]).0);
        let (u, log) = newton(&fun, u0, &self.opts)?;
        Ok(self.assemble(f, u, log, g0))
    }

    fn assemble(&self, f: Mat2, u: Vec<f64>, log: SolveLog, g0: f64) -> CorrectorSet {
        let fun = self.functional(f);
        let grads = fun.total_gradients(&u);
        let fluxes = fun.fluxes(&u);
        let (g, scale) = fun.gradient(&u);
        let gn = linalg::norm(&g);
        let residual = if gn == 0.0 { 0.0 } else { gn / g0.max(scale) };
        let energy = fun.energy(&u) / self.grid.volume();
        let a0 = self.grid.average(&fluxes);
        CorrectorSet { f, phi: DiscreteField { grid: self.grid.clone(), values: u }, grads, a0, energy, residual, log }
    }

    /// `a_0(F) = ⨍ a(F + ∇φ)`.
    pub fn homogenized_coefficient(corr: &CorrectorSet) -> Mat2 {
        corr.a0
    }

    /// Periodic flux corrector from two scalar Poisson solves.
    pub fn flux_corrector(&self, corr: &CorrectorSet) -> FluxCorrector {
        let grid = &self.grid;
        let fun = self.functional(corr.f);
        let fluxes = fun.fluxes(&corr.phi.values);
        let j: Vec<Mat2> = fluxes.iter().map(|p| p - corr.a0).collect();
        let poisson = PeriodicPoisson::new(grid.side());
        let mut values = vec![0.0; grid.dofs()];
        let mut weak_num = 0.0;
        let mut weak_den = 0.0;
        let mut strong_num = 0.0;
        let mut strong_den = 0.0;
        for i in 0..2 {
            let v: Vec<[f64; 2]> = j.iter().map(|m| [m[(i, 1)], -m[(i, 0)]]).collect();
            let mut b = grid.scatter_scalar(&v);
            let mean = b.iter().sum::<f64>() / b.len() as f64;
            b.iter_mut().for_each(|x| *x -= mean);
            let s = poisson.solve(&b);
            let gs = grid.scalar_gradients(&s);
            let ks = grid.scatter_scalar(&gs);
            weak_num += ks.iter().zip(&b).map(|(a, c)| (a - c).powi(2)).sum::<f64>();
            weak_den += b.iter().map(|x| x * x).sum::<f64>();
            for (q, g) in gs.iter().enumerate() {
                // −∂_2 σ_i12 = J_i1 and −∂_1 σ_i21 = J_i2
                let r1 = -g[1] - j[q][(i, 0)];
                let r2 = g[0] - j[q][(i, 1)];
                strong_num += r1 * r1 + r2 * r2;
                strong_den += fluxes[q][(i, 0)].powi(2) + fluxes[q][(i, 1)].powi(2);
            }
            for (node, val) in s.iter().enumerate() {
                values[2 * node + i] = *val;
            }
        }
        let ratio = |n: f64, d: f64| if d > 0.0 { (n / d).sqrt() } else { n.sqrt() };
        FluxCorrector {
            s: DiscreteField { grid: grid.clone(), values },
            strong_residual: ratio(strong_num, strong_den),
            weak_residual: ratio(weak_num, weak_den),
            antisymmetry: 0.0,
        }
    }

    /// Tangent `L_F = Da(F + ∇φ)` at quadrature points.
    pub fn linearization(&self, corr: &CorrectorSet) -> Vec<Mat4> {
        self.functional(corr.f).tangents(&corr.phi.values)
    }

    /// `ψ_G` solving `div L_F(G + ∇ψ) = 0`.
    pub fn linearized_corrector(&self, corr: &CorrectorSet, g: &Mat2) -> Result<DiscreteField, SolverError> {
        let t = self.linearization(corr);
        let psi = solve_linearized(&self.grid, &t, g)?;
        Ok(DiscreteField { grid: self.grid.clone(), values: psi })
    }

    /// `Da_0(F)[G] = ⨍ L_F(G + ∇ψ_G)`.
    pub fn homogenized_tangent(&self, corr: &CorrectorSet, g: &Mat2) -> Result<Mat2, SolverError> {
        let t = self.linearization(corr);
        let psi = solve_linearized(&self.grid, &t, g)?;
        Ok(tangent_average(&self.grid, &t, g, &psi))
    }

    /// Full tensor `Da_0(F)` in vectorized form.
    pub fn homogenized_tangent_tensor(&self, corr: &CorrectorSet) -> Result<Mat4, SolverError> {
        let t = self.linearization(corr);
        let mut out = Mat4::zeros();
        for k in 0..4 {
            let g = basis(k);
            let psi = solve_linearized(&self.grid, &t, &g)?;
            out.set_column(k, &crate::tensor::vec4(&tangent_average(&self.grid, &t, &g, &psi)));
        }
        Ok(out)
    }
}

fn tangent_average(grid: &Grid, t: &[Mat4], g: &Mat2, psi: &[f64]) -> Mat2 {
    let dpsi = grid.gradients(psi);
    let vals: Vec<Mat2> = t.iter().zip(&dpsi).map(|(l, d)| apply(l, &(g + d))).collect();
    grid.average(&vals)
}

/// Periodic mean-zero `ψ` with `∫ T(G + ∇ψ) : ∇v = 0` for all `v`.
pub fn solve_linearized(grid: &Grid, t: &[Mat4], g: &Mat2) -> Result<Vec<f64>, SolverError> {
    let rhs_flux: Vec<Mat2> = t.iter().map(|l| -apply(l, g)).collect();
    let b = grid.scatter(&rhs_flux);
    let scale = linalg::norm(&grid.scatter_abs(&rhs_flux));
    let lap = Laplacian::for_grid(grid);
    let sc = solve::tangent_scale(t);
    let (x, rep) = pcg(|v| grid.apply_tangent(t, v), |r| lap.apply(r, sc), &b, 1e-12, 4 * grid.dofs(), |v| grid.project(v));
    let mut r = grid.apply_tangent(t, &x);
    linalg::axpy(&mut r, -1.0, &b);
    grid.project(&mut r);
    let rn = linalg::norm(&r);
    if !rep.converged && rn > 1e-10 * linalg::norm(&b).max(1e-3 * scale) {
        return Err(SolverError::LinearSolver { residual: rep.residual, iterations: rep.iterations });
    }
    Ok(x)
}

/// Restart plan of the nonconvex direct path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartPlan {
    pub random: usize,
    /// Normalized `L²` size of the perturbation gradient.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for RestartPlan {
    fn default() -> Self {
        Self { random: 8, amplitude: 0.1, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Newton on the convex bound `V`.
    Convex,
    /// L-BFGS on `W` from several starts.
    Direct(RestartPlan),
}

#[derive(Clone, Debug, Serialize)]
pub struct Basin {
    pub start: String,
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct EnergyResult {
    /// Energy per unit volume of the best minimizer.
    pub value: f64,
    pub u: DiscreteField,
    pub basins: Vec<Basin>,
    pub verdict: &'static str,
}

/// Stored energy together with its matching convex bound on the same tessellation.
#[derive(Clone, Debug)]
pub struct EnergyModel {
    pub w: HeterogeneousField<StoredEnergy>,
    pub v: HeterogeneousField<ConvexBound>,
}

impl EnergyModel {
    pub fn new(w: HeterogeneousField<StoredEnergy>, params: crate::energy::BoundParams) -> Result<Self, SolverError> {
        let v = w.matching_bound(params)?;
        Ok(Self { w, v })
    }

    pub fn mu(&self) -> f64 {
        self.v.phases[0].params.mu
    }

    pub fn delta(&self) -> f64 {
        self.v.phases.iter().map(|v| v.params.delta).fold(f64::INFINITY, f64::min)
    }
}

/// Smooth periodic perturbation: random low Fourier modes scaled to the given gradient size.
pub fn smooth_perturbation(grid: &Grid, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let l = grid.side() as f64 * grid.h;
    let modes = 3i32;
    let mut coeffs = Vec::new();
    for p in -modes..=modes {
        for q in 0..=modes {
            if q == 0 && p <= 0 {
                continue;
            }
            let c: [f64; 4] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            coeffs.push((p, q, c));
        }
    }
    let mut u = vec![0.0; grid.dofs()];
    for node in 0..grid.nodes() {
        let x = grid.node_position(node);
        for (p, q, c) in &coeffs {
            let th = std::f64::consts::TAU * (*p as f64 * x[0] + *q as f64 * x[1]) / l;
            let decay = 1.0 / (1.0 + (p * p + q * q) as f64);
            let (s, co) = th.sin_cos();
            u[2 * node] += decay * (c[0] * co + c[1] * s);
            u[2 * node + 1] += decay * (c[2] * co + c[3] * s);
        }
    }
    grid.project(&mut u);
    let gn = grid.norm_l2(&grid.gradients(&u));
    if gn > 0.0 {
        u.iter_mut().for_each(|x| *x *= amplitude / gn);
    }
    u
}

/// `W_hom^(k)(F)` (direct) or `V_hom^(k)(F)` (convex) on an `n`-per-period grid.
pub fn multi_cell_energy(model: &EnergyModel, f: Mat2, n: usize, k: usize, strategy: Strategy) -> Result<EnergyResult, SolverError> {
    multi_cell_energy_with(model, f, n, k, strategy, Vec::new())
}

/// As [`multi_cell_energy`], with extra named starts for the direct path.
pub fn multi_cell_energy_with(
    model: &EnergyModel,
    f: Mat2,
    n: usize,
    k: usize,
    strategy: Strategy,
    extra: Vec<(String, Vec<f64>)>,
) -> Result<EnergyResult, SolverError> {
    match strategy {
        Strategy::Convex => {
            let cell = CellProblem::new(model.v.clone(), n, k);
            let corr = cell.solve_corrector(f)?;
            let basins = vec![Basin {
                start: "zero".into(),
                energy: corr.energy,
                converged: corr.log.converged,
                iterations: corr.log.iterations(),
            }];
            Ok(EnergyResult { value: corr.energy, u: corr.phi, basins, verdict: "convex: global minimum" })
        }
        Strategy::Direct(plan) => {
            let grid = Arc::new(Grid::cell(&model.w.tess, n, k));
            let vcell = CellProblem::new(model.v.clone(), n, 1);
            let vcorr = vcell.solve_corrector(f)?;
            let mut starts: Vec<(String, Vec<f64>)> = vec![
                ("zero".into(), vec![0.0; grid.dofs()]),
                ("v-corrector".into(), grid.tile(&vcell.grid, &vcorr.phi.values)),
            ];
            for (name, u0) in extra {
                if u0.len() != grid.dofs() {
                    return Err(SolverError::Invalid(format!("start `{name}` has {} dofs, grid has {}", u0.len(), grid.dofs())));
                }
                starts.push((name, u0));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            for r in 0..plan.random {
                starts.push((format!("random-{r}"), smooth_perturbation(&grid, plan.amplitude, &mut rng)));
            }
            let fun = Functional::new(&grid, &model.w.phases, f);
            let opts = LbfgsOptions::default();
            let runs: Vec<(String, Vec<f64>, f64, SolveLog)> = starts
                .into_par_iter()
                .map(|(name, u0)| {
                    let (u, e, log) = lbfgs(&fun, u0, &opts);
                    (name, u, e, log)
                })
                .collect();
            let vol = grid.volume();
            let mut best = 0;
            for (i, r) in runs.iter().enumerate() {
                if r.2 < runs[best].2 {
                    best = i;
                }
            }
            let basins = runs
                .iter()
                .map(|(name, _, e, log)| Basin {
                    start: name.clone(),
                    energy: e / vol,
                    converged: log.converged,
                    iterations: log.iterations(),
                })
                .collect();
            let (_, u, e, _) = runs.into_iter().nth(best).expect("at least two starts");
            Ok(EnergyResult {
                value: e / vol,
                u: DiscreteField { grid, values: u },
                basins,
                verdict: "nonconvex: best-of-restarts",
            })
        }
    }
}

pub fn single_cell_energy(model: &EnergyModel, f: Mat2, n: usize, strategy: Strategy) -> Result<EnergyResult, SolverError> {
    multi_cell_energy(model, f, n, 1, strategy)
}

/// V-corrector certified to stay inside the matching tube, where it also solves the `W` problem.
pub fn certified_corrector(model: &EnergyModel, f: Mat2, n: usize) -> Result<(CellProblem<ConvexBound>, CorrectorSet), SolverError> {
    let cell = CellProblem::new(model.v.clone(), n, 1);
    let corr = cell.solve_corrector(f)?;
    let max_dist = corr.max_dist();
    let delta = model.delta();
    if max_dist >= delta {
        return Err(SolverError::Uncertified { max_dist, delta });
    }
    Ok((cell, corr))
}

/// `DW_hom(F)[G] = ⨍ DW(F + ∇φ)[G]` in the certified neighborhood.
pub fn hom_energy_gradient(model: &EnergyModel, f: Mat2, g: &Mat2, n: usize) -> Result<f64, SolverError> {
    let (cell, corr) = certified_corrector(model, f, n)?;
    let vals: Vec<f64> = corr
        .grads
        .iter()
        .enumerate()
        .map(|(q, m)| ddot(&model.w.phases[cell.grid.labels[q / 4]].eval_d(m), g))
        .collect();
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// `D²W_hom(F)[G,G] = min_ψ ⨍ D²W(F + ∇φ)[G + ∇ψ, G + ∇ψ]`.
pub fn hom_energy_hessian(model: &EnergyModel, f: Mat2, g: &Mat2, n: usize) -> Result<f64, SolverError> {
    let (cell, corr) = certified_corrector(model, f, n)?;
    let t: Vec<Mat4> = corr
        .grads
        .iter()
        .enumerate()
        .map(|(q, m)| model.w.phases[cell.grid.labels[q / 4]].eval_d2(m))
        .collect::<Result<_, _>>()?;
    let psi = solve_linearized(&cell.grid, &t, g)?;
    let dpsi = cell.grid.gradients(&psi);
    let vals: Vec<f64> = t.iter().zip(&dpsi).map(|(l, d)| form(l, &(g + d), &(g + d))).collect();
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Rank-one positivity scan: `min D²W_hom(F)[a(θ₁)⊗b(θ₂)]` over an angle grid.
pub fn rank_one_scan(model: &EnergyModel, f: Mat2, n: usize, angles: usize) -> Result<(f64, [f64; 2]), SolverError> {
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for i in 0..angles {
        for j in 0..angles {
            let t1 = std::f64::consts::PI * i as f64 / angles as f64;
            let t2 = std::f64::consts::PI * j as f64 / angles as f64;
            let g = crate::tensor::outer([t1.cos(), t1.sin()], [t2.cos(), t2.sin()]);
            let v = hom_energy_hessian(model, f, &g, n)?;
            if v < best.0 {
                best = (v, [t1, t2]);
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzScan {
    /// `(i, j, ‖∇φ(F_i) − ∇φ(F_j)‖_{L²} / |F_i − F_j|, same with L^∞)`.
    pub pairs: Vec<(usize, usize, f64, f64)>,
    pub max_ratio_l2: f64,
    pub max_ratio_inf: f64,
    /// `max_i ‖∇φ(F_i)‖_∞ / |F_i − R|`.
    pub fitted_c: f64,
}

/// Lipschitz table of `F ↦ ∇φ(F)` over the samples; `base` is the reference point `R`.
pub fn corrector_lipschitz_scan<L: PointLaw + Clone>(
    cell: &CellProblem<L>,
    samples: &[Mat2],
    base: &Mat2,
) -> Result<LipschitzScan, SolverError> {
    let correctors = samples
        .par_iter()
        .map(|f| cell.solve_corrector(*f))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pairs = Vec::new();
    let (mut l2, mut linf) = (0.0f64, 0.0f64);
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let df = (samples[i] - samples[j]).norm();
            if df == 0.0 {
                continue;
            }
            let (a, b) = (&correctors[i], &correctors[j]);
            let mut s2 = 0.0;
            let mut sinf = 0.0f64;
            for (ga, gb) in a.grads.iter().zip(&b.grads) {
                let d = (ga - a.f) - (gb - b.f);
                s2 += d.norm_squared();
                sinf = sinf.max(d.norm());
            }
            let r2 = (s2 / a.grads.len() as f64).sqrt() / df;
            let rinf = sinf / df;
            l2 = l2.max(r2);
            linf = linf.max(rinf);
            pairs.push((i, j, r2, rinf));
        }
    }
    let fitted_c = samples
        .iter()
        .zip(&correctors)
        .filter(|(f, _)| (*f - base).norm() > 0.0)
        .map(|(f, c)| c.grad_max() / (f - base).norm())
        .fold(0.0, f64::max);
    Ok(LipschitzScan { pairs, max_ratio_l2: l2, max_ratio_inf: linf, fitted_c })
}
