//! Preconditioned conjugate gradients and FFT/DST inverses of the Q1 Laplacian.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::grid::Grid;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += alpha * b);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` from `x = 0`; `project` restricts every iterate to the
/// admissible subspace.
pub fn pcg(
    a: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    max_iter: usize,
    project: impl Fn(&mut [f64]),
) -> (Vec<f64>, CgReport) {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    project(&mut r);
    let target = rtol * norm(&r);
    let mut res = norm(&r);
    if res == 0.0 {
        return (x, CgReport { iterations: 0, residual: 0.0, converged: true });
    }
    let mut z = precond(&r);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let mut ap = a(&p);
        project(&mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return (x, CgReport { iterations: it, residual: res, converged: false });
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        res = norm(&r);
        if res <= target {
            return (x, CgReport { iterations: it, residual: res, converged: true });
        }
        z = precond(&r);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    (x, CgReport { iterations: max_iter, residual: res, converged: false })
}

/// Symbol of the Q1 Laplacian stiffness at frequencies with cosines `(cx, cy)`.
fn q1_symbol(cx: f64, cy: f64) -> f64 {
    8.0 / 3.0 - (2.0 / 3.0) * (cx + cy) - (4.0 / 3.0) * cx * cy
}

fn transform_2d(data: &mut [Complex<f64>], m: usize, fft: &Arc<dyn Fft<f64>>) {
    for row in data.chunks_mut(m) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); m];
    for i in 0..m {
        for j in 0..m {
            col[j] = data[j * m + i];
        }
        fft.process(&mut col);
        for j in 0..m {
            data[j * m + i] = col[j];
        }
    }
}

/// Exact inverse of the periodic scalar Q1 stiffness on mean-zero data.
pub struct PeriodicPoisson {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    inv_symbol: Vec<f64>,
}

impl PeriodicPoisson {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let mut inv_symbol = vec![0.0; m * m];
        for q in 0..m {
            for p in 0..m {
                if p == 0 && q == 0 {
                    continue;
                }
                let cx = (std::f64::consts::TAU * p as f64 / m as f64).cos();
                let cy = (std::f64::consts::TAU * q as f64 / m as f64).cos();
                inv_symbol[q * m + p] = 1.0 / q1_symbol(cx, cy);
            }
        }
        Self { m, forward, inverse, inv_symbol }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut data: Vec<Complex<f64>> = b.iter().map(|&v| Complex::new(v, 0.0)).collect();
        transform_2d(&mut data, m, &self.forward);
        data.iter_mut().zip(&self.inv_symbol).for_each(|(d, s)| *d *= *s);
        transform_2d(&mut data, m, &self.inverse);
        let scale = 1.0 / (m * m) as f64;
        data.iter().map(|c| c.re * scale).collect()
    }
}

/// Exact inverse of the scalar Q1 stiffness with homogeneous Dirichlet nodes
/// on a box of `m` elements per side.
pub struct DirichletPoisson {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    inv_symbol: Vec<f64>,
}

impl DirichletPoisson {
    pub fn new(m: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * m);
        let k = m - 1;
        let mut inv_symbol = vec![0.0; k * k];
        for q in 0..k {
            for p in 0..k {
                let cx = (std::f64::consts::PI * (p + 1) as f64 / m as f64).cos();
                let cy = (std::f64::consts::PI * (q + 1) as f64 / m as f64).cos();
                inv_symbol[q * k + p] = 1.0 / q1_symbol(cx, cy);
            }
        }
        Self { m, fft, inv_symbol }
    }

    /// DST-I of length `m − 1`, unnormalized.
    fn dst(&self, x: &mut [f64]) {
        let m = self.m;
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * m];
        for (j, v) in x.iter().enumerate() {
            buf[j + 1] = Complex::new(*v, 0.0);
            buf[2 * m - j - 1] = Complex::new(-*v, 0.0);
        }
        self.fft.process(&mut buf);
        for (p, v) in x.iter_mut().enumerate() {
            *v = -buf[p + 1].im / 2.0;
        }
    }

    fn dst_2d(&self, data: &mut [f64]) {
        let k = self.m - 1;
        for row in data.chunks_mut(k) {
            self.dst(row);
        }
        let mut col = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                col[j] = data[j * k + i];
            }
            self.dst(&mut col);
            for j in 0..k {
                data[j * k + i] = col[j];
            }
        }
    }

    /// Input and output are full `(m+1)²` nodal vectors; boundary entries are ignored / zero.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (m, k) = (self.m, self.m - 1);
        let s = m + 1;
        let mut inner: Vec<f64> = (0..k * k).map(|idx| b[(idx / k + 1) * s + idx % k + 1]).collect();
        self.dst_2d(&mut inner);
        inner.iter_mut().zip(&self.inv_symbol).for_each(|(v, l)| *v *= *l);
        self.dst_2d(&mut inner);
        let scale = (2.0 / m as f64).powi(2);
        let mut out = vec![0.0; s * s];
        for idx in 0..k * k {
            out[(idx / k + 1) * s + idx % k + 1] = inner[idx] * scale;
        }
        out
    }
}

/// Componentwise Laplacian inverse matching the grid's boundary conditions.
pub enum Laplacian {
    Periodic(PeriodicPoisson),
    Dirichlet(DirichletPoisson),
}

impl Laplacian {
    pub fn for_grid(grid: &Grid) -> Self {
        if grid.periodic {
            Self::Periodic(PeriodicPoisson::new(grid.side()))
        } else {
            Self::Dirichlet(DirichletPoisson::new(grid.side()))
        }
    }

    pub fn solve_scalar(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Self::Periodic(p) => p.solve(b),
            Self::Dirichlet(d) => d.solve(b),
        }
    }

    /// Applies the inverse to each displacement component, divided by `scale`.
    pub fn apply(&self, r: &[f64], scale: f64) -> Vec<f64> {
        let nodes = r.len() / 2;
        let mut out = vec![0.0; r.len()];
        for c in 0..2 {
            let comp: Vec<f64> = (0..nodes).map(|i| r[2 * i + c]).collect();
            let sol = self.solve_scalar(&comp);
            for i in 0..nodes {
                out[2 * i + c] = sol[i] / scale;
            }
        }
        out
    }
}
