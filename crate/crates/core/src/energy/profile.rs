//! Quintic smoothstep and radial profiles built from smoothstep ramps of the
//! second derivative. All integrals are exact polynomials.

/// `S(x) = 10x³ − 15x⁴ + 6x⁵` clamped to `[0, 1]`, with `S'` and `S''`.
#[inline]
pub fn smoothstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let x2 = x * x;
        let om = 1.0 - x;
        (
            x2 * x * (10.0 - 15.0 * x + 6.0 * x2),
            30.0 * x2 * om * om,
            60.0 * x * om * (1.0 - 2.0 * x),
        )
    }
}

/// `∫₀ˣ S`.
#[inline]
fn int1(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        x - 0.5
    } else {
        let x4 = x * x * x * x;
        x4 * (2.5 - 3.0 * x + x * x)
    }
}

/// `∫₀ˣ ∫₀ʸ S`.
#[inline]
fn int2(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        let y = x - 1.0;
        1.0 / 7.0 + 0.5 * y + 0.5 * y * y
    } else {
        let x5 = x * x * x * x * x;
        x5 * (0.5 - 0.5 * x + x * x / 7.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ramp {
    pub start: f64,
    pub width: f64,
    pub jump: f64,
}

/// Even radial profile on `[0, ∞)` with `h'' = m + Σ jump·S((ρ − start)/width)`.
/// Every ramp must start at a positive radius so that `h'(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct RampProfile {
    pub a0: f64,
    pub m: f64,
    pub ramps: Vec<Ramp>,
}

impl RampProfile {
    pub fn value(&self, rho: f64) -> f64 {
        let mut v = self.a0 + 0.5 * self.m * rho * rho;
        for r in &self.ramps {
            v += r.jump * r.width * r.width * int2((rho - r.start) / r.width);
        }
        v
    }

    pub fn first(&self, rho: f64) -> f64 {
        let mut v = self.m * rho;
        for r in &self.ramps {
            v += r.jump * r.width * int1((rho - r.start) / r.width);
        }
        v
    }

    /// `h'(ρ)/ρ`, finite at the origin.
    pub fn first_over_rho(&self, rho: f64) -> f64 {
        let mut v = self.m;
        for r in &self.ramps {
            let i = int1((rho - r.start) / r.width);
            if i != 0.0 {
                v += r.jump * r.width * i / rho;
            }
        }
        v
    }

    pub fn second(&self, rho: f64) -> f64 {
        let mut v = self.m;
        for r in &self.ramps {
            v += r.jump * smoothstep((rho - r.start) / r.width).0;
        }
        v
    }
}
