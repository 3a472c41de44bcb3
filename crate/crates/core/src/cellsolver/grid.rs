//! Uniform bilinear (Q1) grids, periodic or with a pinned boundary.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::geometry::Tessellation;
use crate::tensor::{Mat2, Mat4};

/// 2×2 Gauss points on the reference square `[0,1]²`.
const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Uniform grid of `m = k·n` square elements per side.
///
/// Element size is `ε/n`; coefficients are read from the tessellation at
/// `x/ε`, so `n` elements resolve one period.
#[derive(Clone, Debug)]
pub struct Grid {
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub h: f64,
    pub periodic: bool,
    pub origin: [f64; 2],
    /// Phase label per element, row-major from the lower-left corner.
    pub labels: Vec<usize>,
    dn: [[[f64; 2]; 4]; 4],
}

impl Grid {
    /// Periodic grid on `Q_k` scaled by `ε`, centered at the origin.
    pub fn periodic(tess: &Tessellation, n: usize, k: usize, eps: f64) -> Self {
        Self::build(tess, n, k, eps, true)
    }

    /// Grid on the same box with Dirichlet nodes on its boundary.
    pub fn dirichlet(tess: &Tessellation, n: usize, k: usize, eps: f64) -> Self {
        Self::build(tess, n, k, eps, false)
    }

    /// Unit-cell grid used by the cell problems.
    pub fn cell(tess: &Tessellation, n: usize, k: usize) -> Self {
        Self::periodic(tess, n, k, 1.0)
    }

    fn build(tess: &Tessellation, n: usize, k: usize, eps: f64, periodic: bool) -> Self {
        assert!(n >= 2 && n.is_multiple_of(2), "elements per period must be even");
        let m = n * k;
        let h = eps / n as f64;
        let origin = [-(m as f64) * h / 2.0; 2];
        let mut labels = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                let x = [(i as f64 + 0.5) / n as f64 - k as f64 / 2.0, (j as f64 + 0.5) / n as f64 - k as f64 / 2.0];
                labels.push(tess.label_at(x));
            }
        }
        let mut dn = [[[0.0; 2]; 4]; 4];
        for (q, d) in dn.iter_mut().enumerate() {
            let (xi, eta) = (GAUSS[q % 2], GAUSS[q / 2]);
            *d = [
                [-(1.0 - eta) / h, -(1.0 - xi) / h],
                [(1.0 - eta) / h, -xi / h],
                [eta / h, xi / h],
                [-eta / h, (1.0 - xi) / h],
            ];
        }
        Self { n, k, eps, h, periodic, origin, labels, dn }
    }

    /// Elements per side.
    pub fn side(&self) -> usize {
        self.n * self.k
    }

    /// Nodes per side.
    pub fn node_side(&self) -> usize {
        if self.periodic {
            self.side()
        } else {
            self.side() + 1
        }
    }

    pub fn elements(&self) -> usize {
        self.side() * self.side()
    }

    pub fn nodes(&self) -> usize {
        self.node_side() * self.node_side()
    }

    pub fn dofs(&self) -> usize {
        2 * self.nodes()
    }

    pub fn qps(&self) -> usize {
        4 * self.elements()
    }

    /// Quadrature weight (all equal).
    pub fn weight(&self) -> f64 {
        self.h * self.h / 4.0
    }

    /// Domain area.
    pub fn volume(&self) -> f64 {
        let l = self.side() as f64 * self.h;
        l * l
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        let s = self.node_side();
        if self.periodic {
            (j % s) * s + (i % s)
        } else {
            j * s + i
        }
    }

    pub fn node_position(&self, node: usize) -> [f64; 2] {
        let s = self.node_side();
        [self.origin[0] + (node % s) as f64 * self.h, self.origin[1] + (node / s) as f64 * self.h]
    }

    /// Counter-clockwise nodes of element `e`.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let m = self.side();
        let (i, j) = (e % m, e / m);
        [self.node_index(i, j), self.node_index(i + 1, j), self.node_index(i + 1, j + 1), self.node_index(i, j + 1)]
    }

    pub fn element_center(&self, e: usize) -> [f64; 2] {
        let m = self.side();
        [
            self.origin[0] + ((e % m) as f64 + 0.5) * self.h,
            self.origin[1] + ((e / m) as f64 + 0.5) * self.h,
        ]
    }

    pub fn qp_position(&self, e: usize, q: usize) -> [f64; 2] {
        let m = self.side();
        [
            self.origin[0] + ((e % m) as f64 + GAUSS[q % 2]) * self.h,
            self.origin[1] + ((e / m) as f64 + GAUSS[q / 2]) * self.h,
        ]
    }

    /// Shape-function gradients at quadrature point `q`.
    pub fn shape_gradients(&self, q: usize) -> &[[f64; 2]; 4] {
        &self.dn[q]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        if self.periodic {
            return false;
        }
        let s = self.node_side();
        let (i, j) = (node % s, node / s);
        i == 0 || j == 0 || i == s - 1 || j == s - 1
    }

    /// `∇u` at every quadrature point, `(∇u)_{ab} = ∂_b u_a`.
    pub fn gradients(&self, u: &[f64]) -> Vec<Mat2> {
        let mut out = vec![Mat2::zeros(); self.qps()];
        out.par_chunks_mut(4).enumerate().for_each(|(e, chunk)| {
            let nodes = self.element_nodes(e);
            for (q, g) in chunk.iter_mut().enumerate() {
                let dn = &self.dn[q];
                let mut m = Mat2::zeros();
                for (a, &node) in nodes.iter().enumerate() {
                    let (u1, u2) = (u[2 * node], u[2 * node + 1]);
                    m[(0, 0)] += u1 * dn[a][0];
                    m[(0, 1)] += u1 * dn[a][1];
                    m[(1, 0)] += u2 * dn[a][0];
                    m[(1, 1)] += u2 * dn[a][1];
                }
                *g = m;
            }
        });
        out
    }

    /// `Σ_q w_q P(q) : ∇N` assembled into a nodal vector; boundary entries of
    /// non-periodic grids are zeroed.
    pub fn scatter(&self, p: &[Mat2]) -> Vec<f64> {
        let w = self.weight();
        let local: Vec<[f64; 8]> = (0..self.elements())
            .into_par_iter()
            .map(|e| {
                let mut r = [0.0; 8];
                for q in 0..4 {
                    let pq = &p[4 * e + q];
                    let dn = &self.dn[q];
                    for a in 0..4 {
                        r[2 * a] += w * (pq[(0, 0)] * dn[a][0] + pq[(0, 1)] * dn[a][1]);
                        r[2 * a + 1] += w * (pq[(1, 0)] * dn[a][0] + pq[(1, 1)] * dn[a][1]);
                    }
                }
                r
            })
            .collect();
        let mut out = vec![0.0; self.dofs()];
        for (e, r) in local.iter().enumerate() {
            for (a, &node) in self.element_nodes(e).iter().enumerate() {
                out[2 * node] += r[2 * a];
                out[2 * node + 1] += r[2 * a + 1];
            }
        }
        self.mask(&mut out);
        out
    }

    /// Assembly of `|P| : |∇N|` entrywise; a roundoff scale for [`Grid::scatter`].
    pub fn scatter_abs(&self, p: &[Mat2]) -> Vec<f64> {
        let a: Vec<Mat2> = p.iter().map(|m| m.abs()).collect();
        let w = self.weight();
        let mut out = vec![0.0; self.dofs()];
        for e in 0..self.elements() {
            for (k, &node) in self.element_nodes(e).iter().enumerate() {
                for q in 0..4 {
                    let (pq, dn) = (&a[4 * e + q], &self.dn[q][k]);
                    out[2 * node] += w * (pq[(0, 0)] * dn[0].abs() + pq[(0, 1)] * dn[1].abs());
                    out[2 * node + 1] += w * (pq[(1, 0)] * dn[0].abs() + pq[(1, 1)] * dn[1].abs());
                }
            }
        }
        out
    }

    /// Scalar version of [`Grid::scatter`]: `Σ_q w_q v(q)·∇N`.
    pub fn scatter_scalar(&self, v: &[[f64; 2]]) -> Vec<f64> {
        let w = self.weight();
        let mut out = vec![0.0; self.nodes()];
        for e in 0..self.elements() {
            for (a, &node) in self.element_nodes(e).iter().enumerate() {
                let mut acc = 0.0;
                for q in 0..4 {
                    let dn = &self.dn[q];
                    acc += w * (v[4 * e + q][0] * dn[a][0] + v[4 * e + q][1] * dn[a][1]);
                }
                out[node] += acc;
            }
        }
        out
    }

    /// Scalar gradients at quadrature points.
    pub fn scalar_gradients(&self, s: &[f64]) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; self.qps()];
        for e in 0..self.elements() {
            let nodes = self.element_nodes(e);
            for q in 0..4 {
                let dn = &self.dn[q];
                let mut g = [0.0; 2];
                for (a, &node) in nodes.iter().enumerate() {
                    g[0] += s[node] * dn[a][0];
                    g[1] += s[node] * dn[a][1];
                }
                out[4 * e + q] = g;
            }
        }
        out
    }

    /// `Σ_q w_q T(q)[∇v(q)] : ∇N`.
    pub fn apply_tangent(&self, tangents: &[Mat4], v: &[f64]) -> Vec<f64> {
        let g = self.gradients(v);
        let p: Vec<Mat2> = g.par_iter().zip(tangents).map(|(g, t)| crate::tensor::apply(t, g)).collect();
        self.scatter(&p)
    }

    /// Zeroes pinned entries.
    pub fn mask(&self, v: &mut [f64]) {
        if self.periodic {
            return;
        }
        for node in 0..self.nodes() {
            if self.is_boundary(node) {
                v[2 * node] = 0.0;
                v[2 * node + 1] = 0.0;
            }
        }
    }

    /// Removes the constant mode per component on periodic grids; masks otherwise.
    pub fn project(&self, v: &mut [f64]) {
        if !self.periodic {
            self.mask(v);
            return;
        }
        let n = self.nodes() as f64;
        for c in 0..2 {
            let mean: f64 = v.iter().skip(c).step_by(2).sum::<f64>() / n;
            v.iter_mut().skip(c).step_by(2).for_each(|x| *x -= mean);
        }
    }

    /// Removes the constant mode of an iterate on periodic grids; pinned values are kept.
    pub fn normalize(&self, u: &mut [f64]) {
        if self.periodic {
            self.project(u);
        }
    }

    /// Quadrature average `⨍ f`.
    pub fn average(&self, values: &[Mat2]) -> Mat2 {
        values.iter().fold(Mat2::zeros(), |a, b| a + b) / values.len() as f64
    }

    /// Normalized `L²` norm `(⨍ |f|²)^{1/2}` over quadrature points.
    pub fn norm_l2(&self, values: &[Mat2]) -> f64 {
        (values.iter().map(|m| m.norm_squared()).sum::<f64>() / values.len() as f64).sqrt()
    }

    /// Affine nodal field `x ↦ F x`.
    pub fn affine(&self, f: &Mat2) -> Vec<f64> {
        let mut u = vec![0.0; self.dofs()];
        for node in 0..self.nodes() {
            let x = self.node_position(node);
            u[2 * node] = f[(0, 0)] * x[0] + f[(0, 1)] * x[1];
            u[2 * node + 1] = f[(1, 0)] * x[0] + f[(1, 1)] * x[1];
        }
        u
    }

    /// Tiles a periodic field of a grid with `k = 1` onto this grid.
    pub fn tile(&self, coarse: &Grid, u: &[f64]) -> Vec<f64> {
        assert!(self.periodic && coarse.periodic && coarse.n == self.n);
        let s = self.node_side();
        let c = coarse.node_side();
        let mut out = vec![0.0; self.dofs()];
        for j in 0..s {
            for i in 0..s {
                let src = coarse.node_index(i % c, j % c);
                let dst = self.node_index(i, j);
                out[2 * dst] = u[2 * src];
                out[2 * dst + 1] = u[2 * src + 1];
            }
        }
        out
    }

    /// Text dump: header `dim n k periodic`, then one `u1 u2` line per node row-major.
    pub fn dump(&self, u: &[f64]) -> String {
        let mut s = format!("2 {} {} {}\n", self.n, self.k, self.periodic as u8);
        for node in 0..self.nodes() {
            let _ = writeln!(s, "{:.17e} {:.17e}", u[2 * node], u[2 * node + 1]);
        }
        s
    }
}

/// Nodal vector field on a grid.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.dofs()];
        Self { grid, values }
    }

    pub fn gradients(&self) -> Vec<Mat2> {
        self.grid.gradients(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn dump(&self) -> String {
        self.grid.dump(&self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_labels() {
        let t = Tessellation::laminate_e2(0, 1);
        let g = Grid::cell(&t, 8, 2);
        assert_eq!(g.side(), 16);
        assert_eq!(g.dofs(), 2 * 256);
        assert_eq!(g.labels.iter().filter(|&&l| l == 0).count(), 128);
        assert!((g.volume() - 4.0).abs() < 1e-14);
        let d = Grid::dirichlet(&t, 8, 1, 0.5);
        assert_eq!(d.nodes(), 81);
        assert!((d.h - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn affine_gradients_are_exact() {
        let t = Tessellation::homogeneous(0);
        let g = Grid::dirichlet(&t, 4, 2, 1.0);
        let f = Mat2::new(0.3, -0.2, 1.1, 0.7);
        for grad in g.gradients(&g.affine(&f)) {
            assert!((grad - f).norm() < 1e-13);
        }
    }

    #[test]
    fn scatter_of_constant_flux_vanishes_periodically() {
        let t = Tessellation::homogeneous(0);
        let g = Grid::cell(&t, 6, 1);
        let p = vec![Mat2::new(1.0, 2.0, 3.0, 4.0); g.qps()];
        assert!(g.scatter(&p).iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn scatter_is_adjoint_of_gradients() {
        let t = Tessellation::homogeneous(0);
        let g = Grid::cell(&t, 4, 1);
        let u: Vec<f64> = (0..g.dofs()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let p: Vec<Mat2> = (0..g.qps()).map(|i| Mat2::new(i as f64, 1.0, -2.0, (i % 3) as f64)).collect();
        let lhs: f64 = g.scatter(&p).iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.gradients(&u).iter().zip(&p).map(|(a, b)| g.weight() * a.dot(b)).sum();
        assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn tiling_preserves_gradients() {
        let t = Tessellation::laminate_e2(0, 1);
        let g1 = Grid::cell(&t, 4, 1);
        let g2 = Grid::cell(&t, 4, 2);
        let u: Vec<f64> = (0..g1.dofs()).map(|i| (i as f64 * 0.37).sin()).collect();
        let big = g2.tile(&g1, &u);
        let a = g1.gradients(&u);
        let b = g2.gradients(&big);
        assert!((g1.norm_l2(&a) - g2.norm_l2(&b)).abs() < 1e-13);
    }
}
