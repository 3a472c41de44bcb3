//! Matching convex lower bound `V ≤ W + μ det` with equality near SO(2).
//!
//! `W + μ det` splits in conformal coordinates as `f(ρ) + (2c₂ − μ)b² + c_p s^{p/2}`
//! with `f(ρ) = (μ + 2c₂)ρ² − 4c₂ρ + 2c₂` and `s = dist²`. The bound replaces
//! `f` by a convex radial profile `f̃ ≤ f` that agrees with `f` on the tube, fades
//! the `c_p` term between `dist = δ` and `2δ`, and blends to a quadratic for large `|F|`.

use serde::{Deserialize, Serialize};

use super::dist::Conformal;
use super::profile::{smoothstep, Ramp, RampProfile};
use super::stored::{pow_derivs, StoredEnergy};
use super::{EnergyError, PointLaw};
use crate::tensor::{mat2, Mat2, Mat4, Vec4};

/// Parameters shared by all phases of a matching bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub mu: f64,
    pub delta: f64,
    /// Inner radius of the far-field blend shell.
    pub r1: f64,
    /// Width of the far-field blend shell; `r_out = r1 + width`.
    pub width: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self { mu: 1.25, delta: 0.2, r1: 4.0, width: 16.0 }
    }
}

impl BoundParams {
    pub fn r_out(&self) -> f64 {
        self.r1 + self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexBound {
    pub w: StoredEnergy,
    pub params: BoundParams,
    profile: RampProfile,
    /// Far-field quadratic `Q = a_tail + b_tail ρ² + (2c₂ − μ) b²`.
    a_tail: f64,
    b_tail: f64,
}

/// Partial derivatives of `Ψ(ρ, β)` with `β = b²`.
#[derive(Default, Clone, Copy, Debug)]
struct Psi {
    v: f64,
    r: f64,
    r_over: f64,
    rr: f64,
    be: f64,
    bb: f64,
    rb: f64,
}

impl ConvexBound {
    pub fn new(w: StoredEnergy, params: BoundParams) -> Result<Self, EnergyError> {
        let BoundParams { mu, delta, r1, width } = params;
        let c2 = w.c2;
        let infeasible = |why: &str| EnergyError::Infeasible { mu, delta, reason: why.to_string() };
        if !(mu > 0.0 && delta > 0.0 && r1 > 0.0 && width > 0.0) {
            return Err(infeasible("parameters must be positive"));
        }
        if mu >= 2.0 * c2 {
            return Err(infeasible("mu must be below 2 c2"));
        }
        let f2 = 2.0 * (mu + 2.0 * c2);
        let fp = |r: f64| 2.0 * (mu + 2.0 * c2) * r - 4.0 * c2;
        let fv = |r: f64| (mu + 2.0 * c2) * r * r - 4.0 * c2 * r + 2.0 * c2;
        let rho_a = 1.0 - delta / 2f64.sqrt();
        let rho_b = 1.0 + delta / 2f64.sqrt();
        let slope_a = fp(rho_a);
        if slope_a <= 0.0 {
            return Err(infeasible("delta too large for the inner profile"));
        }
        let ell = slope_a / f2;
        if rho_a - ell <= 0.0 {
            return Err(infeasible("inner ramp leaves the admissible range"));
        }
        let m = (slope_a - f2 * ell / 2.0) / (rho_a - ell / 2.0);
        let b_tail = (mu + 2.0 * c2) - c2 / rho_b;
        let big_l = 2.0 * (2.0 * b_tail * rho_b - fp(rho_b)) / (f2 - 2.0 * b_tail);
        let mut profile = RampProfile {
            a0: 0.0,
            m,
            ramps: vec![
                Ramp { start: rho_a - ell, width: ell, jump: f2 - m },
                Ramp { start: rho_b, width: big_l, jump: 2.0 * b_tail - f2 },
            ],
        };
        profile.a0 = fv(rho_a) - profile.value(rho_a);
        let rho_c = rho_b + big_l;
        let a_tail = profile.value(rho_c) - b_tail * rho_c * rho_c;
        Ok(Self { w, params, profile, a_tail, b_tail })
    }

    /// Far-field quadratic `Q(F)`.
    pub fn quadratic(&self, f: &Mat2) -> f64 {
        let z = Conformal::of(f);
        let rho = z.rho();
        self.a_tail + self.b_tail * rho * rho + (2.0 * self.w.c2 - self.params.mu) * z.b2()
    }

    /// Radial profile `f̃` standing in for the conformal part of `W + μ det`.
    pub fn radial_profile(&self) -> &RampProfile {
        &self.profile
    }

    fn fade(&self, s: f64) -> (f64, f64, f64) {
        let delta = self.params.delta;
        let p = self.w.p;
        let t = s.sqrt();
        if t <= delta {
            return pow_derivs(s, 0.5 * p);
        }
        if t >= 2.0 * delta {
            return (0.0, 0.0, 0.0);
        }
        let (sv, s1, s2) = smoothstep((t - delta) / delta);
        let (tp, tp1, tp2) = pow_derivs(t, p);
        let k = tp * (1.0 - sv);
        let kt = tp1 * (1.0 - sv) - tp * s1 / delta;
        let ktt = tp2 * (1.0 - sv) - 2.0 * tp1 * s1 / delta - tp * s2 / (delta * delta);
        (k, kt / (2.0 * t), (ktt - kt / t) / (4.0 * t * t))
    }

    fn psi(&self, rho: f64, beta: f64) -> Psi {
        let c2 = self.w.c2;
        let cp = self.w.cp;
        let BoundParams { mu, delta, r1, width } = self.params;
        let g = 2.0 * c2 - mu;
        let prof = &self.profile;
        let ft = prof.value(rho);
        let ft1 = prof.first(rho);
        let ft1o = prof.first_over_rho(rho);
        let ft2 = prof.second(rho);
        let mut out = Psi {
            v: ft + g * beta,
            r: ft1,
            r_over: ft1o,
            rr: ft2,
            be: g,
            ..Psi::default()
        };

        let s = 2.0 * (rho - 1.0) * (rho - 1.0) + 2.0 * beta;
        if cp != 0.0 && s.sqrt() < 2.0 * delta {
            let (k, ks, kss) = self.fade(s);
            let sr = 4.0 * (rho - 1.0);
            out.v += cp * k;
            out.r += cp * ks * sr;
            out.r_over += cp * ks * sr / rho;
            out.rr += cp * (kss * sr * sr + 4.0 * ks);
            out.be += 2.0 * cp * ks;
            out.bb += 4.0 * cp * kss;
            out.rb += 2.0 * cp * kss * sr;
        }

        let n = (2.0 * rho * rho + 2.0 * beta).sqrt();
        if n > r1 {
            let (z, z1, z2) = smoothstep((n - r1) / width);
            let (z1, z2) = (z1 / width, z2 / (width * width));
            let e = ft - self.a_tail - self.b_tail * rho * rho;
            let er = ft1 - 2.0 * self.b_tail * rho;
            let er_over = ft1o - 2.0 * self.b_tail;
            let err = ft2 - 2.0 * self.b_tail;
            let n3 = n * n * n;
            let nr = 2.0 * rho / n;
            let nb = 1.0 / n;
            let nrr = 2.0 / n - 4.0 * rho * rho / n3;
            let nbb = -1.0 / n3;
            let nrb = -2.0 * rho / n3;
            let zr = z1 * nr;
            let zr_over = z1 * 2.0 / n;
            let zrr = z2 * nr * nr + z1 * nrr;
            let zb = z1 * nb;
            let zbb = z2 * nb * nb + z1 * nbb;
            let zrb = z2 * nr * nb + z1 * nrb;
            out.v -= z * e;
            out.r -= zr * e + z * er;
            out.r_over -= zr_over * e + z * er_over;
            out.rr -= zrr * e + 2.0 * zr * er + z * err;
            out.be -= zb * e;
            out.bb -= zbb * e;
            out.rb -= zrb * e + zb * er;
        }
        out
    }

    pub fn eval(&self, f: &Mat2) -> f64 {
        let z = Conformal::of(f);
        self.psi(z.rho(), z.b2()).v
    }

    /// Value, gradient and vectorized Hessian.
    pub fn eval_all(&self, f: &Mat2) -> (f64, Mat2, Mat4) {
        let z = Conformal::of(f);
        let rho = z.rho();
        let ps = self.psi(rho, z.b2());
        let gz = Vec4::new(ps.r_over * z.p, ps.r_over * z.q, 2.0 * ps.be * z.r, 2.0 * ps.be * z.s);
        let mut hz = Mat4::zeros();
        let (xh0, xh1) = if rho > 0.0 { (z.p / rho, z.q / rho) } else { (0.0, 0.0) };
        let xh = [xh0, xh1];
        let y = [z.r, z.s];
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                hz[(i, j)] = ps.r_over * id + (ps.rr - ps.r_over) * xh[i] * xh[j];
                hz[(2 + i, 2 + j)] = 2.0 * ps.be * id + 4.0 * ps.bb * y[i] * y[j];
                hz[(i, 2 + j)] = 2.0 * ps.rb * xh[i] * y[j];
                hz[(2 + j, i)] = hz[(i, 2 + j)];
            }
        }
        let m = Conformal::map();
        let grad = mat2(&(m.transpose() * gz));
        let hess = m.transpose() * hz * m;
        (ps.v, grad, hess)
    }

    pub fn eval_d(&self, f: &Mat2) -> Mat2 {
        self.eval_all(f).1
    }

    pub fn eval_d2(&self, f: &Mat2) -> Mat4 {
        self.eval_all(f).2
    }

    /// `W + μ det − V`, nonnegative by construction.
    pub fn gap(&self, f: &Mat2) -> f64 {
        self.w.eval(f) + self.params.mu * f.determinant() - self.eval(f)
    }
}

impl PointLaw for ConvexBound {
    fn energy(&self, f: &Mat2) -> f64 {
        self.eval(f)
    }
    fn flux(&self, f: &Mat2) -> Mat2 {
        self.eval_d(f)
    }
    fn tangent(&self, f: &Mat2) -> Mat4 {
        self.eval_d2(f)
    }
}

/// Extreme eigenvalues of `D²V` over a set of matrices, with the minimizing sample.
pub fn hessian_spectrum(v: &ConvexBound, samples: &[Mat2]) -> (f64, f64, Mat2) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut worst = Mat2::zeros();
    for f in samples {
        let h = v.eval_d2(f);
        let sym = (h + h.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let mn = eig.min();
        if mn < lo {
            lo = mn;
            worst = *f;
        }
        hi = hi.max(eig.max());
    }
    (lo, hi, worst)
}

/// Build and verify the matching bound for every phase. The verifier samples
/// `W + μ det − V ≥ −tol` and `D²V ≥ β_min`; the first violation is reported.
pub fn build_matching_bound(
    phases: &[StoredEnergy],
    params: BoundParams,
    samples: &[Mat2],
    beta_min: f64,
) -> Result<(Vec<ConvexBound>, f64), EnergyError> {
    let mut out = Vec::with_capacity(phases.len());
    let mut beta = f64::INFINITY;
    for w in phases {
        let v = ConvexBound::new(*w, params)?;
        for f in samples {
            let gap = v.gap(f);
            let scale = 1.0 + v.w.eval(f).abs() + f.norm_squared();
            if gap < -1e-12 * scale {
                return Err(EnergyError::Infeasible {
                    mu: params.mu,
                    delta: params.delta,
                    reason: format!("W + mu det - V = {gap:e} at F = {:?}", crate::tensor::to_rows(f)),
                });
            }
        }
        let (lo, hi, worst) = hessian_spectrum(&v, samples);
        if lo < beta_min {
            return Err(EnergyError::Infeasible {
                mu: params.mu,
                delta: params.delta,
                reason: format!(
                    "min eigenvalue of D2V = {lo:.4} at F = {:?}",
                    crate::tensor::to_rows(&worst)
                ),
            });
        }
        beta = beta.min(lo).min(1.0 / hi);
        out.push(v);
    }
    Ok((out, beta))
}

/// Grid search over `(μ, δ)` for the largest certified convexity constant.
pub fn search_matching_bound(
    phases: &[StoredEnergy],
    mus: &[f64],
    deltas: &[f64],
    r1: f64,
    width: f64,
    samples: &[Mat2],
) -> Option<(BoundParams, f64)> {
    let mut best: Option<(BoundParams, f64)> = None;
    for &mu in mus {
        for &delta in deltas {
            let params = BoundParams { mu, delta, r1, width };
            if let Ok((_, beta)) = build_matching_bound(phases, params, samples, 1e-3) {
                if best.is_none_or(|(_, b)| beta > b) {
                    best = Some((params, beta));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::dist::dist_so2;
    use crate::energy::sampling::SamplePlan;
    use crate::tensor::{apply, basis, rotation};

    fn soft() -> ConvexBound {
        ConvexBound::new(StoredEnergy::new(1.0, 0.1, 4.0), BoundParams::default()).unwrap()
    }

    #[test]
    fn equality_inside_tube() {
        let v = soft();
        let delta = v.params.delta;
        for k in 0..16 {
            let th = 0.37 * k as f64;
            let dir = Mat2::new(th.cos(), (2.0 * th).sin(), (3.0 * th).cos(), th.sin());
            let mut f = rotation(th) + dir * 0.01;
            // scale the perturbation to dist = delta/2
            let d = dist_so2(&f);
            f = rotation(th) + (f - rotation(th)) * (0.5 * delta / d);
            let d = dist_so2(&f);
            assert!(d < delta);
            assert!(v.gap(&f).abs() < 1e-12, "gap {} at dist {d}", v.gap(&f));
        }
    }

    #[test]
    fn quadratic_far_field() {
        let v = soft();
        let r_out = v.params.r_out();
        for k in 0..8 {
            let th = 0.9 * k as f64;
            let mut f = Mat2::new(th.cos(), th.sin() * 2.0, -0.3, (th * 1.7).sin());
            f *= 2.0 * r_out / f.norm();
            assert!((v.eval(&f) - v.quadratic(&f)).abs() < 1e-9 * v.eval(&f).abs());
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let v = soft();
        let plan = SamplePlan { count: 200, seed: 3 };
        let h = 1e-5;
        for f in plan.matrices() {
            let (_, d1, d2) = v.eval_all(&f);
            for k in 0..4 {
                let e = basis(k);
                let fd = (v.eval(&(f + e * h)) - v.eval(&(f - e * h))) / (2.0 * h);
                let scale = 1.0 + d1.norm();
                assert!((fd - d1.dot(&e)).abs() < 1e-6 * scale, "grad at {f}");
                let fd2 = (v.eval_d(&(f + e * h)) - v.eval_d(&(f - e * h))) / (2.0 * h);
                let scale2 = 1.0 + d2.norm();
                assert!((fd2 - apply(&d2, &e)).norm() < 1e-5 * scale2, "hess at {f}");
            }
        }
    }

    #[test]
    fn frame_indifference() {
        let v = soft();
        let f = Mat2::new(0.4, 1.7, -0.9, 0.3);
        for k in 0..8 {
            let r = rotation(0.8 * k as f64 + 0.2);
            assert!((v.eval(&(r * f)) - v.eval(&f)).abs() < 1e-12);
            assert!((v.eval(&(f * r)) - v.eval(&f)).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_sampling_certifies_default_phases() {
        let phases = [StoredEnergy::new(1.0, 0.1, 4.0), StoredEnergy::new(2.0, 0.1, 4.0)];
        let samples = SamplePlan { count: 10_000, seed: 11 }.matrices();
        let (_, beta) = build_matching_bound(&phases, BoundParams::default(), &samples, 0.05).unwrap();
        assert!(beta > 0.05);
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        let w = StoredEnergy::new(1.0, 0.1, 4.0);
        let bad = BoundParams { mu: 2.5, ..BoundParams::default() };
        assert!(matches!(ConvexBound::new(w, bad), Err(EnergyError::Infeasible { .. })));
        let too_wide = BoundParams { delta: 1.2, ..BoundParams::default() };
        assert!(ConvexBound::new(w, too_wide).is_err());
    }
}
