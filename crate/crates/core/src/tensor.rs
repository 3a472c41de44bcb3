//! Small fixed-size linear algebra used at quadrature points.
//!
//! Second-order tensors are `Mat2`. Fourth-order tensors act on the
//! column-major vectorization `vec(G) = (G11, G21, G12, G22)`.

use nalgebra::{Matrix2, Matrix4, Vector4};

pub type Mat2 = Matrix2<f64>;
pub type Mat4 = Matrix4<f64>;
pub type Vec4 = Vector4<f64>;

#[inline]
pub fn vec4(m: &Mat2) -> Vec4 {
    Vec4::new(m[(0, 0)], m[(1, 0)], m[(0, 1)], m[(1, 1)])
}

#[inline]
pub fn mat2(v: &Vec4) -> Mat2 {
    Mat2::new(v[0], v[2], v[1], v[3])
}

/// `T : G` for a fourth-order tensor in vectorized form.
#[inline]
pub fn apply(t: &Mat4, g: &Mat2) -> Mat2 {
    mat2(&(t * vec4(g)))
}

/// Quadratic form `T[G, H]`.
#[inline]
pub fn form(t: &Mat4, g: &Mat2, h: &Mat2) -> f64 {
    vec4(g).dot(&(t * vec4(h)))
}

/// Frobenius inner product.
#[inline]
pub fn ddot(a: &Mat2, b: &Mat2) -> f64 {
    a.dot(b)
}

/// Unit basis matrix `E_k` with `vec4(E_k) = e_k`.
pub fn basis(k: usize) -> Mat2 {
    let mut v = Vec4::zeros();
    v[k] = 1.0;
    mat2(&v)
}

pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

pub fn outer(a: [f64; 2], b: [f64; 2]) -> Mat2 {
    Mat2::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
}

/// Matrix from row-major nested arrays, as used in configs and reports.
pub fn from_rows(rows: [[f64; 2]; 2]) -> Mat2 {
    Mat2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
}

pub fn to_rows(m: &Mat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Gradient of `det` at `F` (the cofactor matrix).
pub fn cofactor(f: &Mat2) -> Mat2 {
    Mat2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)])
}

/// Hessian of `det` in vectorized form; `D²det[G,G] = 2 det G`.
pub fn det_hessian() -> Mat4 {
    let mut t = Mat4::zeros();
    // det = F11 F22 - F12 F21 ; vec indices 0:F11 1:F21 2:F12 3:F22
    t[(0, 3)] = 1.0;
    t[(3, 0)] = 1.0;
    t[(1, 2)] = -1.0;
    t[(2, 1)] = -1.0;
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_roundtrip_and_basis() {
        let m = Mat2::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(mat2(&vec4(&m)), m);
        assert_eq!(basis(2), Mat2::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(from_rows(to_rows(&m)), m);
    }

    #[test]
    fn det_derivatives() {
        let f = Mat2::new(1.3, -0.2, 0.4, 0.9);
        let g = Mat2::new(0.1, 0.7, -0.3, 0.2);
        let h = 1e-6;
        let fd = ((f + g * h).determinant() - (f - g * h).determinant()) / (2.0 * h);
        assert!((fd - ddot(&cofactor(&f), &g)).abs() < 1e-9);
        assert!((form(&det_hessian(), &g, &g) - 2.0 * g.determinant()).abs() < 1e-14);
    }
}
