//! Discrete energies `u ↦ Σ_q w_q W(x_q, F + ∇u) − b·u`, Newton and L-BFGS.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use super::grid::Grid;
use super::linalg::{axpy, dot, norm, pcg, Laplacian};
use super::SolverError;
use crate::energy::PointLaw;
use crate::tensor::{Mat2, Mat4};

/// Energy functional of a displacement `u` with affine part `F`.
pub struct Functional<'a, L> {
    pub grid: &'a Grid,
    /// Laws indexed by phase label.
    pub laws: &'a [L],
    pub f: Mat2,
    /// Nodal load vector `b`, energy term `−b·u`.
    pub load: Option<&'a [f64]>,
}

impl<'a, L: PointLaw> Functional<'a, L> {
    pub fn new(grid: &'a Grid, laws: &'a [L], f: Mat2) -> Self {
        Self { grid, laws, f, load: None }
    }

    pub fn with_load(mut self, load: &'a [f64]) -> Self {
        self.load = Some(load);
        self
    }

    fn law(&self, qp: usize) -> &L {
        &self.laws[self.grid.labels[qp / 4]]
    }

    /// `F + ∇u` at quadrature points.
    pub fn total_gradients(&self, u: &[f64]) -> Vec<Mat2> {
        let mut g = self.grid.gradients(u);
        g.iter_mut().for_each(|m| *m += self.f);
        g
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.energy_and_scale(u).0
    }

    /// Energy and the sum of absolute contributions.
    fn energy_and_scale(&self, u: &[f64]) -> (f64, f64) {
        let g = self.total_gradients(u);
        let vals: Vec<f64> = g.par_iter().enumerate().map(|(q, m)| self.law(q).energy(m)).collect();
        let w = self.grid.weight();
        let mut e = 0.0;
        let mut a = 0.0;
        for v in vals {
            e += w * v;
            a += w * v.abs();
        }
        if let Some(b) = self.load {
            let bu = dot(b, u);
            e -= bu;
            a += b.iter().zip(u).map(|(x, y)| (x * y).abs()).sum::<f64>();
        }
        (e, a)
    }

    /// Flux field `DW(F + ∇u)` at quadrature points.
    pub fn fluxes(&self, u: &[f64]) -> Vec<Mat2> {
        let g = self.total_gradients(u);
        g.par_iter().enumerate().map(|(q, m)| self.law(q).flux(m)).collect()
    }

    /// Projected gradient and its roundoff scale.
    pub fn gradient(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let p = self.fluxes(u);
        let mut r = self.grid.scatter(&p);
        let mut scale = norm(&self.grid.scatter_abs(&p));
        if let Some(b) = self.load {
            axpy(&mut r, -1.0, b);
            scale += norm(b);
        }
        self.grid.project(&mut r);
        (r, scale)
    }

    pub fn tangents(&self, u: &[f64]) -> Vec<Mat4> {
        let g = self.total_gradients(u);
        g.par_iter().enumerate().map(|(q, m)| self.law(q).tangent(m)).collect()
    }
}

/// Mean of the tangent diagonal, used to scale the Laplacian preconditioner.
pub fn tangent_scale(t: &[Mat4]) -> f64 {
    let s = t.iter().map(|m| m.trace()).sum::<f64>() / (4.0 * t.len() as f64);
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NewtonOptions {
    pub rtol: f64,
    pub cg_rtol: f64,
    pub max_iter: usize,
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, cg_rtol: 1e-12, max_iter: 50, armijo: 1e-4 }
    }
}

/// Relative gradient norms by iteration and inner iteration counts.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveLog {
    pub residuals: Vec<f64>,
    pub inner_iterations: usize,
    pub converged: bool,
}

impl SolveLog {
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

fn converged(g: f64, g0: f64, scale: f64, rtol: f64) -> bool {
    g <= rtol * g0 || g <= 1e-13 * scale
}

/// Armijo backtracking with a roundoff allowance; `None` when no step decreases the energy.
fn line_search<L: PointLaw>(
    fun: &Functional<L>,
    u: &[f64],
    e0: f64,
    slope: f64,
    d: &[f64],
    c: f64,
    tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut alpha = 1.0;
    for _ in 0..40 {
        let mut trial = u.to_vec();
        axpy(&mut trial, alpha, d);
        fun.grid.normalize(&mut trial);
        let e = fun.energy(&trial);
        if e.is_finite() && e <= e0 + c * alpha * slope + tol {
            return Some((trial, e));
        }
        alpha *= 0.5;
    }
    None
}

/// Full step accepted on residual decrease alone, for when energy differences are below roundoff.
fn residual_step<L: PointLaw>(fun: &Functional<L>, u: &[f64], d: &[f64], gn: f64) -> Option<(Vec<f64>, f64)> {
    let mut trial = u.to_vec();
    axpy(&mut trial, 1.0, d);
    fun.grid.normalize(&mut trial);
    let (gt, _) = fun.gradient(&trial);
    (norm(&gt) < gn).then(|| {
        let et = fun.energy(&trial);
        (trial, et)
    })
}

/// Roundoff regime: the predicted decrease is invisible in the energy.
fn below_roundoff(slope: f64, e_scale: f64) -> bool {
    -slope <= 1e-10 * e_scale
}

/// Newton with backtracking on a convex functional, starting from `u0`.
pub fn newton<L: PointLaw>(fun: &Functional<L>, u0: Vec<f64>, opts: &NewtonOptions) -> Result<(Vec<f64>, SolveLog), SolverError> {
    let grid = fun.grid;
    let lap = Laplacian::for_grid(grid);
    let mut u = u0;
    grid.normalize(&mut u);
    let mut log = SolveLog::default();
    let (mut g, mut scale) = fun.gradient(&u);
    let g0 = norm(&g);
    let rel = |x: f64| if g0 > 0.0 { x / g0 } else { 0.0 };
    log.residuals.push(rel(g0));
    let (mut e, mut e_scale) = fun.energy_and_scale(&u);
    for _ in 0..opts.max_iter {
        let gn = norm(&g);
        if converged(gn, g0, scale, opts.rtol) {
            log.converged = true;
            return Ok((u, log));
        }
        let t = fun.tangents(&u);
        let sc = tangent_scale(&t);
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let (d, rep) = pcg(
            |v| grid.apply_tangent(&t, v),
            |r| lap.apply(r, sc),
            &rhs,
            opts.cg_rtol,
            4 * grid.dofs(),
            |v| grid.project(v),
        );
        log.inner_iterations += rep.iterations;
        let slope = dot(&g, &d);
        let tol = 1e-14 * e_scale;
        let step = if slope < 0.0 && below_roundoff(slope, e_scale) {
            residual_step(fun, &u, &d, gn).or_else(|| line_search(fun, &u, e, slope, &d, opts.armijo, tol))
        } else if slope < 0.0 {
            line_search(fun, &u, e, slope, &d, opts.armijo, tol).or_else(|| residual_step(fun, &u, &d, gn))
        } else {
            residual_step(fun, &u, &d, gn)
        };
        let Some((un, en)) = step else {
            return Err(SolverError::NoConvergence { what: "newton line search", residuals: log.residuals });
        };
        u = un;
        e = en;
        e_scale = fun.energy_and_scale(&u).1;
        let gs = fun.gradient(&u);
        g = gs.0;
        scale = gs.1;
        log.residuals.push(rel(norm(&g)));
    }
    if converged(norm(&g), g0, scale, opts.rtol) {
        log.converged = true;
        return Ok((u, log));
    }
    Err(SolverError::NoConvergence { what: "newton", residuals: log.residuals })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub rtol: f64,
    pub max_iter: usize,
    pub armijo: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 12, rtol: 1e-9, max_iter: 4000, armijo: 1e-4 }
    }
}

/// Limited-memory BFGS with a Laplacian-preconditioned initial inverse Hessian.
///
/// Returns the last iterate even when the tolerance is not met; the log records it.
pub fn lbfgs<L: PointLaw>(fun: &Functional<L>, u0: Vec<f64>, opts: &LbfgsOptions) -> (Vec<f64>, f64, SolveLog) {
    let grid = fun.grid;
    let lap = Laplacian::for_grid(grid);
    let mut u = u0;
    grid.normalize(&mut u);
    let mut log = SolveLog::default();
    let (mut e, mut e_scale) = fun.energy_and_scale(&u);
    let (mut g, mut scale) = fun.gradient(&u);
    let g0 = norm(&g);
    let rel = |x: f64| if g0 > 0.0 { x / g0 } else { 0.0 };
    log.residuals.push(rel(g0));
    let t0 = fun.tangents(&u);
    let mut gamma = 1.0 / tangent_scale(&t0);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    for _ in 0..opts.max_iter {
        let gn = norm(&g);
        if converged(gn, g0, scale, opts.rtol) {
            log.converged = true;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(&mut q, -a, y);
            alphas.push(a);
        }
        let mut r = lap.apply(&q, 1.0 / gamma);
        grid.project(&mut r);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &r);
            axpy(&mut r, a - b, s);
        }
        let mut d: Vec<f64> = r.iter().map(|x| -x).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = lap.apply(&g, -1.0 / gamma);
            grid.project(&mut d);
            slope = dot(&g, &d);
        }
        let step = if below_roundoff(slope, e_scale) {
            residual_step(fun, &u, &d, gn).or_else(|| line_search(fun, &u, e, slope, &d, opts.armijo, 1e-14 * e_scale))
        } else {
            line_search(fun, &u, e, slope, &d, opts.armijo, 1e-14 * e_scale)
        };
        let Some((un, en)) = step else {
            if hist.is_empty() {
                break;
            }
            hist.clear();
            continue;
        };
        let (gn_vec, sc) = fun.gradient(&un);
        let s: Vec<f64> = un.iter().zip(&u).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn_vec.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            let py = lap.apply(&y, 1.0);
            gamma = sy / dot(&y, &py).max(1e-300);
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > opts.memory {
                hist.pop_front();
            }
        }
        u = un;
        e = en;
        e_scale = fun.energy_and_scale(&u).1;
        g = gn_vec;
        scale = sc;
        log.inner_iterations += 1;
        log.residuals.push(rel(norm(&g)));
    }
    if converged(norm(&g), g0, scale, opts.rtol) {
        log.converged = true;
    }
    (u, e, log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{BoundParams, ConvexBound, MonotoneCoefficient, StoredEnergy};
    use crate::geometry::Tessellation;

    #[test]
    fn gradient_matches_energy_differences() {
        let tess = Tessellation::laminate_e2(0, 1);
        let grid = Grid::cell(&tess, 6, 1);
        let laws = [StoredEnergy::new(1.0, 0.1, 4.0), StoredEnergy::new(2.0, 0.1, 4.0)];
        let f = Mat2::new(1.05, 0.02, -0.01, 0.98);
        let fun = Functional::new(&grid, &laws, f);
        let u: Vec<f64> = (0..grid.dofs()).map(|i| 0.01 * (i as f64 * 0.7).sin()).collect();
        let (g, _) = fun.gradient(&u);
        let dir: Vec<f64> = (0..grid.dofs()).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut dp = dir.clone();
        grid.project(&mut dp);
        let h = 1e-6;
        let plus: Vec<f64> = u.iter().zip(&dp).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = u.iter().zip(&dp).map(|(a, b)| a - h * b).collect();
        let fd = (fun.energy(&plus) - fun.energy(&minus)) / (2.0 * h);
        assert!((fd - dot(&g, &dp)).abs() < 1e-7 * fd.abs().max(1.0));
    }

    #[test]
    fn newton_and_lbfgs_agree_on_a_convex_problem() {
        let tess = Tessellation::disk([0.0, 0.0], 0.3);
        let grid = Grid::cell(&tess, 8, 1);
        let w = [StoredEnergy::new(1.0, 0.1, 4.0), StoredEnergy::new(2.0, 0.1, 4.0)];
        let v: Vec<ConvexBound> = w.iter().map(|w| ConvexBound::new(*w, BoundParams::default()).unwrap()).collect();
        let f = Mat2::new(1.05, 0.03, 0.0, 0.99);
        let fun = Functional::new(&grid, &v, f);
        let (un, log) = newton(&fun, vec![0.0; grid.dofs()], &NewtonOptions::default()).unwrap();
        assert!(log.converged && log.iterations() < 15);
        let (ul, el, llog) = lbfgs(&fun, vec![0.0; grid.dofs()], &LbfgsOptions::default());
        assert!(llog.converged);
        assert!((fun.energy(&un) - el).abs() < 1e-12);
        let diff: Vec<f64> = un.iter().zip(&ul).map(|(a, b)| a - b).collect();
        assert!(grid.norm_l2(&grid.gradients(&diff)) < 1e-6);
    }

    #[test]
    fn zero_load_zero_macro_is_solved_immediately() {
        let tess = Tessellation::laminate_e2(0, 1);
        let grid = Grid::cell(&tess, 4, 1);
        let laws = [MonotoneCoefficient::linear(1.0), MonotoneCoefficient::linear(4.0)];
        let fun = Functional::new(&grid, &laws, Mat2::zeros());
        let (u, log) = newton(&fun, vec![0.0; grid.dofs()], &NewtonOptions::default()).unwrap();
        assert_eq!(log.iterations(), 0);
        assert!(u.iter().all(|x| *x == 0.0));
    }
}
