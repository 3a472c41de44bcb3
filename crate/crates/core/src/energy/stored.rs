//! The isotropic model family `W(F) = c₂ dist²(F, SO(2)) + c_p dist^p(F, SO(2))`.

use serde::{Deserialize, Serialize};

use super::dist::{dist2_derivatives, dist2_so2};
use super::{EnergyError, PointLaw};
use crate::tensor::{Mat2, Mat4, Vec4};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredEnergy {
    pub c2: f64,
    pub cp: f64,
    pub p: f64,
    /// Radius of the tube around SO(2) on which second derivatives are served.
    #[serde(default = "default_tube")]
    pub tube: f64,
}

fn default_tube() -> f64 {
    0.5
}

/// `(x^e, e x^(e-1), e(e-1) x^(e-2))` with the limits at `x = 0`.
pub(crate) fn pow_derivs(x: f64, e: f64) -> (f64, f64, f64) {
    if x > 0.0 {
        let v = x.powf(e);
        (v, e * v / x, e * (e - 1.0) * v / (x * x))
    } else {
        let v = if e == 0.0 { 1.0 } else { 0.0 };
        let d1 = if e == 1.0 { 1.0 } else if e > 1.0 { 0.0 } else { f64::INFINITY };
        let d2 = if e == 2.0 {
            2.0
        } else if e > 2.0 || e == 1.0 {
            0.0
        } else {
            f64::INFINITY
        };
        (v, d1, d2)
    }
}

impl StoredEnergy {
    pub fn new(c2: f64, cp: f64, p: f64) -> Self {
        Self { c2, cp, p, tube: default_tube() }
    }

    /// Scalar profile `w(s)` with `s = dist²` and its first two derivatives.
    pub fn profile(&self, s: f64) -> (f64, f64, f64) {
        let (v, d1, d2) = pow_derivs(s, 0.5 * self.p);
        (
            self.c2 * s + self.cp * v,
            self.c2 + self.cp * d1,
            self.cp * d2,
        )
    }

    pub fn eval(&self, f: &Mat2) -> f64 {
        self.profile(dist2_so2(f)).0
    }

    pub fn eval_d(&self, f: &Mat2) -> Mat2 {
        let s = dist2_so2(f);
        let (_, w1, _) = self.profile(s);
        let (ds, _) = dist2_derivatives(f);
        ds * w1
    }

    /// Second derivative without the tube check.
    pub fn eval_d2_unchecked(&self, f: &Mat2) -> Mat4 {
        let s = dist2_so2(f);
        let (_, w1, w2) = self.profile(s);
        let (ds, d2s) = dist2_derivatives(f);
        let v: Vec4 = crate::tensor::vec4(&ds);
        let rank1 = if w2 == 0.0 { Mat4::zeros() } else { v * v.transpose() * w2 };
        rank1 + d2s * w1
    }

    pub fn eval_d2(&self, f: &Mat2) -> Result<Mat4, EnergyError> {
        let d = dist2_so2(f).sqrt();
        if d >= self.tube {
            return Err(EnergyError::OutsideTube { dist: d, tube: self.tube });
        }
        Ok(self.eval_d2_unchecked(f))
    }
}

impl PointLaw for StoredEnergy {
    fn energy(&self, f: &Mat2) -> f64 {
        self.eval(f)
    }
    fn flux(&self, f: &Mat2) -> Mat2 {
        self.eval_d(f)
    }
    fn tangent(&self, f: &Mat2) -> Mat4 {
        self.eval_d2_unchecked(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{form, rotation};

    #[test]
    fn minimum_on_rotations() {
        let w = StoredEnergy::new(1.0, 0.5, 4.0);
        let r = rotation(0.4);
        assert!(w.eval(&r).abs() < 1e-14);
        assert!(w.eval_d(&r).norm() < 1e-7);
    }

    #[test]
    fn first_derivative_against_fd() {
        let w = StoredEnergy::new(1.0, 0.0, 4.0);
        let f = Mat2::new(1.1, 0.0, 0.0, 1.0);
        let h = 1e-5;
        let d = w.eval_d(&f);
        for k in 0..4 {
            let e = crate::tensor::basis(k);
            let fd = (w.eval(&(f + e * h)) - w.eval(&(f - e * h))) / (2.0 * h);
            assert!((fd - d.dot(&e)).abs() < 1e-8);
        }
    }

    #[test]
    fn second_derivative_against_fd() {
        let w = StoredEnergy::new(2.0, 0.7, 4.0);
        let f = Mat2::new(1.05, 0.1, -0.05, 0.93);
        let g = Mat2::new(0.2, -0.4, 0.3, 0.5);
        let h = 1e-4;
        let dp = w.eval_d(&(f + g * h));
        let dm = w.eval_d(&(f - g * h));
        let fd = (dp - dm) / (2.0 * h);
        let t = w.eval_d2(&f).unwrap();
        assert!((fd - crate::tensor::apply(&t, &g)).norm() < 1e-7);
        assert!((form(&t, &g, &g) - fd.dot(&g)).abs() < 1e-7);
    }

    #[test]
    fn tube_is_enforced() {
        let w = StoredEnergy::new(1.0, 1.0, 4.0);
        let far = Mat2::new(3.0, 0.0, 0.0, 0.2);
        assert!(matches!(w.eval_d2(&far), Err(EnergyError::OutsideTube { .. })));
    }

    #[test]
    fn frame_indifference() {
        let w = StoredEnergy::new(1.0, 0.3, 4.0);
        let f = Mat2::new(0.7, 0.4, -0.2, 1.3);
        for k in 0..8 {
            let r = rotation(0.9 * k as f64 + 0.1);
            assert!((w.eval(&(r * f)) - w.eval(&f)).abs() < 1e-13);
        }
    }
}
