//! Sampling validators for the classes `W_α^p`, `V_β` and `A_β`.

use serde::Serialize;

use super::bound::ConvexBound;
use super::coefficient::{omega, MonotoneCoefficient};
use super::dist::dist_so2;
use super::sampling::{gaussian_matrix, SamplePlan};
use super::stored::StoredEnergy;
use crate::tensor::{to_rows, Mat2};

#[derive(Clone, Debug, Serialize)]
pub struct AxiomVerdict {
    pub axiom: String,
    pub pass: bool,
    pub measured: f64,
    pub witness: Option<[[f64; 2]; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassVerdict {
    pub class: String,
    /// Best class constant fitted from the samples (α or β).
    pub fitted: f64,
    pub samples: usize,
    pub seed: u64,
    pub axioms: Vec<AxiomVerdict>,
}

impl ClassVerdict {
    pub fn pass(&self) -> bool {
        self.axioms.iter().all(|a| a.pass)
    }

    pub fn axiom(&self, name: &str) -> Option<&AxiomVerdict> {
        self.axioms.iter().find(|a| a.axiom == name)
    }
}

/// Running minimum with its witness.
struct Worst {
    value: f64,
    witness: Option<Mat2>,
}

impl Worst {
    fn min() -> Self {
        Self { value: f64::INFINITY, witness: None }
    }
    fn max() -> Self {
        Self { value: f64::NEG_INFINITY, witness: None }
    }
    fn lower(&mut self, v: f64, f: &Mat2) {
        if v < self.value {
            self.value = v;
            self.witness = Some(*f);
        }
    }
    fn raise(&mut self, v: f64, f: &Mat2) {
        if v > self.value {
            self.value = v;
            self.witness = Some(*f);
        }
    }
    fn verdict(&self, axiom: &str, pass: bool) -> AxiomVerdict {
        AxiomVerdict {
            axiom: axiom.to_string(),
            pass,
            measured: self.value,
            witness: self.witness.as_ref().map(to_rows),
        }
    }
}

/// Largest `c` with `c x − 1/c ≤ y` for `x > 0`.
fn growth_constant(y: f64, x: f64) -> f64 {
    (y + (y * y + 4.0 * x).sqrt()) / (2.0 * x)
}

/// Points at distance `< radius` from SO(2).
fn tube_samples(plan: &SamplePlan, radius: f64) -> Vec<Mat2> {
    let mut rng = plan.rng();
    let rots = plan.rotations();
    rots.iter()
        .map(|r| {
            let g = gaussian_matrix(&mut rng);
            let t: f64 = rand::Rng::random_range(&mut rng, 0.0..0.95);
            let mut f = r + g * (t * radius / g.norm());
            if dist_so2(&f) >= radius {
                f = *r;
            }
            f
        })
        .collect()
}

pub fn validate_stored(w: &StoredEnergy, plan: &SamplePlan) -> ClassVerdict {
    let samples = plan.matrices();
    let rots = plan.rotations();
    let mut w1 = Worst::min();
    let mut w2 = Worst::max();
    let mut w3 = Worst::min();
    for (f, r) in samples.iter().zip(&rots) {
        let val = w.eval(f);
        let nf = f.norm();
        if nf > 0.0 {
            w1.lower(growth_constant(val, nf.powf(w.p)), f);
        }
        let frame = (w.eval(&(r * f)) - val).abs() / (1.0 + val.abs());
        w2.raise(frame, f);
        let d = dist_so2(f);
        if d > 1e-8 {
            w3.lower(val / (d * d), f);
        }
    }
    let id = Mat2::identity();
    let natural = w.eval(&id).abs() < 1e-14;
    // third derivatives by central differences of the analytic second derivative
    let mut alpha4 = w.tube.min(w1.value).min(w3.value);
    let mut w4 = Worst::max();
    let h = 1e-5;
    let mut rng = plan.rng();
    while alpha4 > 1e-3 {
        w4 = Worst::max();
        for f in tube_samples(plan, alpha4) {
            let mut g = gaussian_matrix(&mut rng);
            g /= g.norm();
            let d2p = w.eval_d2_unchecked(&(f + g * h));
            let d2m = w.eval_d2_unchecked(&(f - g * h));
            let d3 = ((d2p - d2m) / (2.0 * h)).norm();
            let n = w.eval(&f).abs().max(w.eval_d(&f).norm()).max(w.eval_d2_unchecked(&f).norm()).max(d3);
            w4.raise(n, &f);
        }
        if w4.value < 1.0 / alpha4 {
            break;
        }
        alpha4 *= 0.5;
    }
    let pass4 = w4.value.is_finite() && w4.value < 1.0 / alpha4 && alpha4 > 1e-3;
    let fitted = w1.value.min(w3.value).min(alpha4);
    ClassVerdict {
        class: "W_alpha^p".into(),
        fitted,
        samples: samples.len(),
        seed: plan.seed,
        axioms: vec![
            w1.verdict("W1", w1.value > 0.0),
            w2.verdict("W2", w2.value < 1e-10),
            AxiomVerdict {
                axiom: "W3".into(),
                pass: natural && w3.value > 0.0,
                measured: w3.value,
                witness: w3.witness.as_ref().map(to_rows),
            },
            AxiomVerdict {
                axiom: "W4".into(),
                pass: pass4,
                measured: alpha4,
                witness: w4.witness.as_ref().map(to_rows),
            },
        ],
    }
}

pub fn validate_bound(v: &ConvexBound, plan: &SamplePlan) -> ClassVerdict {
    let samples = plan.matrices();
    let rots = plan.rotations();
    let mut lower = Worst::min();
    let mut upper = Worst::min();
    let mut grad = Worst::min();
    let mut eig_lo = Worst::min();
    let mut eig_hi = Worst::max();
    let mut gap = Worst::min();
    let mut frame = Worst::max();
    for (f, r) in samples.iter().zip(&rots) {
        let (val, d1, d2) = v.eval_all(f);
        let n2 = f.norm_squared();
        if n2 > 0.0 {
            lower.lower(growth_constant(val, n2), f);
        }
        if val > 0.0 {
            upper.lower((n2 + 1.0) / val, f);
        }
        let dn = d1.norm();
        if dn > 0.0 {
            grad.lower((1.0 + n2.sqrt()) / dn, f);
        }
        let eig = ((d2 + d2.transpose()) * 0.5).symmetric_eigenvalues();
        eig_lo.lower(eig.min(), f);
        eig_hi.raise(eig.max(), f);
        let scale = 1.0 + v.w.eval(f).abs() + n2;
        gap.lower(v.gap(f) / scale, f);
        frame.raise((v.eval(&(r * f)) - val).abs() / (1.0 + val.abs()), f);
    }
    let mut matching = Worst::max();
    for f in tube_samples(plan, v.params.delta) {
        matching.raise(v.gap(&f).abs(), &f);
    }
    let mut far = Worst::max();
    let r_out = v.params.r_out();
    for f in samples.iter().take(500) {
        let n = f.norm();
        if n == 0.0 {
            continue;
        }
        let g = f * (1.5 * r_out / n);
        let q = v.quadratic(&g);
        far.raise((v.eval(&g) - q).abs() / (1.0 + q.abs()), &g);
    }
    let beta = lower
        .value
        .min(upper.value)
        .min(grad.value)
        .min(eig_lo.value)
        .min(1.0 / eig_hi.value)
        .min(1.0);
    let mut axioms = vec![
        lower.verdict("growth_lower", lower.value > 0.0),
        upper.verdict("growth_upper", upper.value > 0.0),
        grad.verdict("gradient_bound", grad.value > 0.0),
        eig_lo.verdict("hessian_lower", eig_lo.value > 0.0),
        eig_hi.verdict("hessian_upper", eig_hi.value.is_finite()),
        gap.verdict("WgeqV", gap.value >= -1e-12),
        matching.verdict("W=V", matching.value <= 1e-12),
        frame.verdict("frame_indifference", frame.value < 1e-10),
        far.verdict("quadratic_far_field", far.value < 1e-10),
    ];
    axioms.push(AxiomVerdict {
        axiom: "V_beta".into(),
        pass: beta > 0.0,
        measured: beta,
        witness: None,
    });
    ClassVerdict { class: "V_beta".into(), fitted: beta, samples: samples.len(), seed: plan.seed, axioms }
}

pub fn validate_coefficient(a: &MonotoneCoefficient, plan: &SamplePlan) -> ClassVerdict {
    let pairs = plan.pairs();
    let mut mono = Worst::min();
    let mut lip = Worst::min();
    let mut modulus = Worst::min();
    for (f, g) in &pairs {
        let df = f - g;
        let n = df.norm();
        if n == 0.0 {
            continue;
        }
        let da = a.eval(f) - a.eval(g);
        mono.lower(da.dot(&df) / (n * n), f);
        let dn = da.norm();
        if dn > 0.0 {
            lip.lower(n / dn, f);
        }
        let dd = (a.eval_d(f) - a.eval_d(g)).norm();
        if dd > 0.0 {
            modulus.lower(omega(n) / dd, f);
        }
    }
    let zero = a.eval(&Mat2::zeros()).norm();
    let beta = 1f64.min(mono.value).min(lip.value).min(modulus.value);
    // Lemma-type inequality β|F e₂|² ≤ (1/β)(|a(F)e₂|² + (1/β)|F(Id − e₂⊗e₂)|²)
    let mut layered = Worst::min();
    for (f, _) in &pairs {
        let fe2 = f.column(1).norm_squared();
        if fe2 == 0.0 {
            continue;
        }
        let rhs = (a.eval(f).column(1).norm_squared() + f.column(0).norm_squared() / beta) / beta;
        layered.lower(rhs - beta * fe2, f);
    }
    ClassVerdict {
        class: "A_beta".into(),
        fitted: beta,
        samples: pairs.len(),
        seed: plan.seed,
        axioms: vec![
            AxiomVerdict { axiom: "a(0)=0".into(), pass: zero < 1e-12, measured: zero, witness: None },
            mono.verdict("monotonicity", mono.value > 0.0),
            lip.verdict("lipschitz", lip.value > 0.0),
            modulus.verdict("derivative_modulus", modulus.value > 0.0),
            layered.verdict("layered_inequality", layered.value >= -1e-12),
        ],
    }
}
