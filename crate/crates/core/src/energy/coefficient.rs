//! Monotone coefficient maps `a(F)` of class `A_β` with modulus `ω(t) = min{t, 1}`.

use super::bound::ConvexBound;
use super::PointLaw;
use crate::tensor::{ddot, Mat2, Mat4};

pub fn omega(t: f64) -> f64 {
    t.min(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub enum MonotoneCoefficient {
    /// `a(F) = λF`.
    Linear { lambda: f64 },
    /// `a_R(F) = DV(R + F) − DV(R)`.
    Shifted { bound: ConvexBound, r: Mat2, dv_r: Mat2, v_r: f64 },
}

impl MonotoneCoefficient {
    pub fn linear(lambda: f64) -> Self {
        Self::Linear { lambda }
    }

    pub fn shifted(bound: ConvexBound, r: Mat2) -> Self {
        let (v_r, dv_r, _) = bound.eval_all(&r);
        Self::Shifted { bound, r, dv_r, v_r }
    }

    pub fn eval(&self, f: &Mat2) -> Mat2 {
        match self {
            Self::Linear { lambda } => f * *lambda,
            Self::Shifted { bound, r, dv_r, .. } => bound.eval_d(&(r + f)) - dv_r,
        }
    }

    pub fn eval_d(&self, f: &Mat2) -> Mat4 {
        match self {
            Self::Linear { lambda } => Mat4::identity() * *lambda,
            Self::Shifted { bound, r, .. } => bound.eval_d2(&(r + f)),
        }
    }

    /// Convex potential with `D potential = a` and `potential(0) = 0`.
    pub fn potential(&self, f: &Mat2) -> f64 {
        match self {
            Self::Linear { lambda } => 0.5 * lambda * f.norm_squared(),
            Self::Shifted { bound, r, dv_r, v_r } => bound.eval(&(r + f)) - v_r - ddot(dv_r, f),
        }
    }
}

impl PointLaw for MonotoneCoefficient {
    fn energy(&self, f: &Mat2) -> f64 {
        self.potential(f)
    }
    fn flux(&self, f: &Mat2) -> Mat2 {
        self.eval(f)
    }
    fn tangent(&self, f: &Mat2) -> Mat4 {
        self.eval_d(f)
    }
}

/// Estimate of `d(a, ā) = sup_{F≠0} |a(F) − ā(F)| / |F|` over the given
/// directions at radii `{0.1, 1, 10}`.
pub fn coefficient_distance(a: &MonotoneCoefficient, abar: &MonotoneCoefficient, directions: &[Mat2]) -> f64 {
    let mut best: f64 = 0.0;
    for dir in directions {
        let n = dir.norm();
        if n == 0.0 {
            continue;
        }
        for &radius in &[0.1, 1.0, 10.0] {
            let f = dir * (radius / n);
            best = best.max((a.eval(&f) - abar.eval(&f)).norm() / radius);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::bound::BoundParams;
    use crate::energy::sampling::SamplePlan;
    use crate::energy::stored::StoredEnergy;
    use crate::tensor::{apply, basis};

    #[test]
    fn zero_at_origin() {
        let v = ConvexBound::new(StoredEnergy::new(1.0, 0.1, 4.0), BoundParams::default()).unwrap();
        let a = MonotoneCoefficient::shifted(v, crate::tensor::rotation(0.3));
        assert!(a.eval(&Mat2::zeros()).norm() < 1e-15);
        assert_eq!(a.potential(&Mat2::zeros()), 0.0);
        assert_eq!(MonotoneCoefficient::linear(2.0).eval(&Mat2::zeros()), Mat2::zeros());
    }

    #[test]
    fn potential_gradient_is_the_map() {
        let v = ConvexBound::new(StoredEnergy::new(2.0, 0.1, 4.0), BoundParams::default()).unwrap();
        let a = MonotoneCoefficient::shifted(v, Mat2::identity());
        let f = Mat2::new(0.05, -0.02, 0.08, 0.01);
        let h = 1e-6;
        for k in 0..4 {
            let e = basis(k);
            let fd = (a.potential(&(f + e * h)) - a.potential(&(f - e * h))) / (2.0 * h);
            assert!((fd - a.eval(&f).dot(&e)).abs() < 1e-8);
            let fd2 = (a.eval(&(f + e * h)) - a.eval(&(f - e * h))) / (2.0 * h);
            assert!((fd2 - apply(&a.eval_d(&f), &e)).norm() < 1e-6);
        }
    }

    #[test]
    fn distance_between_linear_phases() {
        let dirs = SamplePlan { count: 64, seed: 1 }.matrices();
        let d = coefficient_distance(&MonotoneCoefficient::linear(1.0), &MonotoneCoefficient::linear(4.0), &dirs);
        assert!((d - 3.0).abs() < 1e-12);
        let same = coefficient_distance(&MonotoneCoefficient::linear(1.5), &MonotoneCoefficient::linear(1.5), &dirs);
        assert_eq!(same, 0.0);
    }
}
