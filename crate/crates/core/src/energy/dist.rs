//! Distance to the rotation group and conformal coordinates of 2×2 matrices.

use nalgebra::DMatrix;

use crate::tensor::{Mat2, Mat4};

/// Conformal / anticonformal splitting `F = [[p, -q], [q, p]] + [[r, s], [s, -r]]`.
#[derive(Clone, Copy, Debug)]
pub struct Conformal {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
}

impl Conformal {
    pub fn of(f: &Mat2) -> Self {
        Self {
            p: 0.5 * (f[(0, 0)] + f[(1, 1)]),
            q: 0.5 * (f[(1, 0)] - f[(0, 1)]),
            r: 0.5 * (f[(0, 0)] - f[(1, 1)]),
            s: 0.5 * (f[(0, 1)] + f[(1, 0)]),
        }
    }

    pub fn rho(&self) -> f64 {
        self.p.hypot(self.q)
    }

    pub fn b2(&self) -> f64 {
        self.r * self.r + self.s * self.s
    }

    /// Linear map `vec(F) -> (p, q, r, s)`.
    pub fn map() -> Mat4 {
        Mat4::new(
            0.5, 0.0, 0.0, 0.5, //
            0.0, 0.5, -0.5, 0.0, //
            0.5, 0.0, 0.0, -0.5, //
            0.0, 0.5, 0.5, 0.0,
        )
    }
}

/// Squared distance from `F` to SO(2): `|F|² + 2 − 2|(F11+F22, F21−F12)|`.
pub fn dist2_so2(f: &Mat2) -> f64 {
    let t1 = f[(0, 0)] + f[(1, 1)];
    let t2 = f[(1, 0)] - f[(0, 1)];
    (f.norm_squared() + 2.0 - 2.0 * t1.hypot(t2)).max(0.0)
}

pub fn dist_so2(f: &Mat2) -> f64 {
    dist2_so2(f).sqrt()
}

/// Nearest rotation (polar factor); the identity when `F` has no conformal part.
pub fn nearest_rotation(f: &Mat2) -> Mat2 {
    let t1 = f[(0, 0)] + f[(1, 1)];
    let t2 = f[(1, 0)] - f[(0, 1)];
    let c = t1.hypot(t2);
    if c == 0.0 {
        return Mat2::identity();
    }
    Mat2::new(t1 / c, -t2 / c, t2 / c, t1 / c)
}

/// Distance to SO(d) for d = 2 or 3 through singular values, flipping the
/// smallest one when `det F < 0`.
pub fn dist_so_svd(f: &DMatrix<f64>) -> f64 {
    assert!(f.is_square(), "dist_so_svd needs a square matrix");
    let det = f.determinant();
    let mut sv: Vec<f64> = f.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if det < 0.0 {
        let last = sv.len() - 1;
        sv[last] = -sv[last];
    }
    sv.iter().map(|x| (x - 1.0) * (x - 1.0)).sum::<f64>().sqrt()
}

/// First and second derivative of `dist²` at `F` (vectorized Hessian).
/// Valid where `F` has a nonzero conformal part.
pub fn dist2_derivatives(f: &Mat2) -> (Mat2, Mat4) {
    let t1 = f[(0, 0)] + f[(1, 1)];
    let t2 = f[(1, 0)] - f[(0, 1)];
    let c = t1.hypot(t2);
    let grad = 2.0 * (f - nearest_rotation(f));
    // tau(G) = T vec(G)
    let ta = [1.0, 0.0, 0.0, 1.0];
    let tb = [0.0, 1.0, -1.0, 0.0];
    let mut hess = Mat4::identity() * 2.0;
    if c > 0.0 {
        let (n1, n2) = (t1 / c, t2 / c);
        for i in 0..4 {
            for j in 0..4 {
                let tt = ta[i] * ta[j] + tb[i] * tb[j];
                let ni = n1 * ta[i] + n2 * tb[i];
                let nj = n1 * ta[j] + n2 * tb[j];
                hess[(i, j)] -= 2.0 * (tt - ni * nj) / c;
            }
        }
    }
    (grad, hess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{form, rotation};

    #[test]
    fn conformal_invariants() {
        let f = Mat2::new(1.2, -0.3, 0.5, 0.7);
        let z = Conformal::of(&f);
        let rho = z.rho();
        assert!((f.norm_squared() - 2.0 * (rho * rho + z.b2())).abs() < 1e-14);
        assert!((f.determinant() - (rho * rho - z.b2())).abs() < 1e-14);
        let d2 = 2.0 * (rho - 1.0).powi(2) + 2.0 * z.b2();
        assert!((dist2_so2(&f) - d2).abs() < 1e-14);
    }

    #[test]
    fn rotations_have_zero_distance() {
        for k in 0..8 {
            let r = rotation(0.7 * k as f64);
            assert!(dist_so2(&r) < 1e-7);
        }
    }

    #[test]
    fn svd_route_matches_closed_form() {
        let samples = [
            Mat2::new(1.2, 0.0, 0.0, 1.0),
            Mat2::new(0.3, -1.1, 0.8, 0.2),
            Mat2::new(-0.5, 0.2, 0.1, 0.9),
            Mat2::new(2.0, 1.0, 1.0, -0.5),
        ];
        for f in samples {
            let d = DMatrix::from_column_slice(2, 2, f.as_slice());
            assert!((dist_so_svd(&d) - dist_so2(&f)).abs() < 1e-12, "{f}");
        }
    }

    #[test]
    fn svd_route_in_three_dimensions() {
        let d = DMatrix::from_row_slice(3, 3, &[1.1, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.95]);
        assert!((dist_so_svd(&d) - (0.01f64 + 0.0025).sqrt()).abs() < 1e-12);
        let refl = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0]);
        assert!((dist_so_svd(&refl) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = Mat2::new(1.1, 0.2, -0.1, 0.95);
        let g = Mat2::new(0.3, -0.2, 0.5, 0.1);
        let (d1, d2) = dist2_derivatives(&f);
        let h = 1e-5;
        let fp = dist2_so2(&(f + g * h));
        let fm = dist2_so2(&(f - g * h));
        let f0 = dist2_so2(&f);
        assert!(((fp - fm) / (2.0 * h) - d1.dot(&g)).abs() < 1e-9);
        assert!(((fp - 2.0 * f0 + fm) / (h * h) - form(&d2, &g, &g)).abs() < 1e-4);
    }
}
