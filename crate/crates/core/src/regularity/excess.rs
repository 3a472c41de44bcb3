use serde::Serialize;

use super::{fit_power_law, CellOracle, PowerFit};
use crate::bvp::{dirichlet_on_grid, CubeDomain};
use crate::cellsolver::{Grid, SolveLog, SolverError};
use crate::energy::{HeterogeneousField, PointLaw};
use crate::geometry::{Labeling, LayeredTessellation};
use crate::tensor::{ddot, Mat2};
use nalgebra::{Matrix4, Vector4};

/// Axis-aligned cube `{|x − center|_∞ < side/2}`; elements count by their centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Window {
    pub center: [f64; 2],
    pub side: f64,
}

impl Window {
    fn contains(&self, x: [f64; 2]) -> bool {
        let r = self.side / 2.0 + 1e-12;
        (x[0] - self.center[0]).abs() < r && (x[1] - self.center[1]).abs() < r
    }

    pub fn elements(&self, grid: &Grid) -> Vec<usize> {
        (0..grid.elements()).filter(|&e| self.contains(grid.element_center(e))).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExcessValue {
    /// `inf_F (⨍_Q |∇u − F − ∇φ(F)|²)^{1/2}`.
    pub value: f64,
    pub f: [[f64; 2]; 2],
    pub iterations: usize,
    /// Set when Gauss–Newton stalled and a grid search supplied the minimizer.
    pub fallback: bool,
    /// Excess without correctors, `(⨍_Q |∇u − (∇u)_Q|²)^{1/2}`.
    pub plain: f64,
    pub qps: usize,
}

const GN_TOL: f64 = 1e-8;

struct Sample {
    qp: usize,
    cell: usize,
}

fn misfit<L: PointLaw + Clone>(
    oracle: &CellOracle<L>,
    g: &[Mat2],
    samples: &[Sample],
    f: &Mat2,
) -> Result<(f64, Vec<Mat2>, std::sync::Arc<crate::cellsolver::CorrectorSet>), SolverError> {
    let corr = oracle.corrector(f)?;
    let r: Vec<Mat2> = samples.iter().map(|s| g[s.qp] - corr.grads[s.cell]).collect();
    let j = r.iter().map(|m| m.norm_squared()).sum::<f64>() / r.len() as f64;
    Ok((j, r, corr))
}

/// Corrector excess of total gradients `g` (one per quadrature point of `grid`) on `window`.
pub fn excess<L: PointLaw + Clone>(
    grid: &Grid,
    g: &[Mat2],
    window: &Window,
    oracle: &CellOracle<L>,
) -> Result<ExcessValue, SolverError> {
    let samples: Vec<Sample> = window
        .elements(grid)
        .into_iter()
        .flat_map(|e| (0..4).map(move |q| (e, q)))
        .map(|(e, q)| Sample { qp: 4 * e + q, cell: oracle.cell_qp(grid, e, q) })
        .collect();
    let count = samples.len() as f64;
    let mean = samples.iter().map(|s| g[s.qp]).sum::<Mat2>() / count;
    let plain = (samples.iter().map(|s| (g[s.qp] - mean).norm_squared()).sum::<f64>() / count).sqrt();
    let scale = (samples.iter().map(|s| g[s.qp].norm_squared()).sum::<f64>() / count).sqrt().max(1e-300);

    let mut f = mean;
    let (mut j, mut r, mut corr) = misfit(oracle, g, &samples, &f)?;
    let mut iterations = 0;
    let mut stalled = false;
    while iterations < 40 {
        let sens = oracle.sensitivities(&corr)?;
        let mut m = Matrix4::<f64>::zeros();
        let mut b = Vector4::<f64>::zeros();
        for (s, res) in samples.iter().zip(&r) {
            let cols: [Mat2; 4] = std::array::from_fn(|k| crate::tensor::basis(k) + sens[k][s.cell]);
            for k in 0..4 {
                b[k] += ddot(&cols[k], res);
                for l in 0..4 {
                    m[(k, l)] += ddot(&cols[k], &cols[l]);
                }
            }
        }
        m /= count;
        b /= count;
        if 2.0 * b.norm() <= GN_TOL * scale || j <= (1e-15 * scale).powi(2) {
            break;
        }
        let Some(delta) = m.lu().solve(&b) else {
            stalled = true;
            break;
        };
        let step = crate::tensor::mat2(&delta);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = f + step * t;
            let (jt, rt, ct) = misfit(oracle, g, &samples, &trial)?;
            if jt < j {
                let tiny = j - jt <= 1e-15 * j;
                f = trial;
                (j, r, corr) = (jt, rt, ct);
                accepted = !tiny;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            stalled = 2.0 * b.norm() > 1e-4 * scale;
            break;
        }
    }
    if stalled {
        let (fs, js) = grid_search(oracle, g, &samples, f, j, scale)?;
        f = fs;
        j = js;
    }
    Ok(ExcessValue { value: j.sqrt(), f: crate::tensor::to_rows(&f), iterations, fallback: stalled, plain, qps: samples.len() })
}

fn grid_search<L: PointLaw + Clone>(
    oracle: &CellOracle<L>,
    g: &[Mat2],
    samples: &[Sample],
    mut f: Mat2,
    mut j: f64,
    scale: f64,
) -> Result<(Mat2, f64), SolverError> {
    let mut step = 0.05 * scale;
    for _ in 0..8 {
        let mut improved = true;
        while improved {
            improved = false;
            for k in 0..4 {
                for sign in [-1.0, 1.0] {
                    let trial = f + crate::tensor::basis(k) * (sign * step);
                    let (jt, _, _) = misfit(oracle, g, samples, &trial)?;
                    if jt < j {
                        f = trial;
                        j = jt;
                        improved = true;
                    }
                }
            }
        }
        step *= 0.5;
    }
    Ok((f, j))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExcessCurve {
    /// Cube sides, decreasing.
    pub radii: Vec<f64>,
    pub values: Vec<ExcessValue>,
    pub fit: Option<PowerFit>,
    /// Largest `Exc(r_{j+1}) / Exc(r_j)`.
    pub monotone_factor: f64,
    /// Largest `Exc(r_{j+1}) / ((r_j/r_{j+1}) Exc(r_j))`; at most 1 for nested cubes.
    pub nesting: f64,
    pub log: Option<SolveLog>,
}

impl ExcessCurve {
    pub fn from_values(radii: Vec<f64>, values: Vec<ExcessValue>, log: Option<SolveLog>) -> Self {
        let v: Vec<f64> = values.iter().map(|e| e.value).collect();
        let mut monotone_factor = 0.0f64;
        let mut nesting = 0.0f64;
        for i in 1..v.len() {
            if v[i - 1] > 0.0 {
                monotone_factor = monotone_factor.max(v[i] / v[i - 1]);
                nesting = nesting.max(v[i] / (radii[i - 1] / radii[i] * v[i - 1]));
            } else if v[i] > 0.0 {
                monotone_factor = f64::INFINITY;
                nesting = f64::INFINITY;
            }
        }
        Self { fit: fit_power_law(&radii, &v), radii, values, monotone_factor, nesting, log }
    }

    pub fn gamma(&self) -> f64 {
        self.fit.map_or(f64::NAN, |f| f.exponent)
    }

    pub fn pass(&self) -> bool {
        self.gamma() >= 0.1 && self.monotone_factor <= 2.0
    }
}

/// Excess of a discrete field over centered cubes of the given sides.
pub fn excess_curve<L: PointLaw + Clone>(
    grid: &Grid,
    u: &[f64],
    radii: &[f64],
    oracle: &CellOracle<L>,
) -> Result<Vec<ExcessValue>, SolverError> {
    let g = grid.gradients(u);
    radii.iter().map(|&r| excess(grid, &g, &Window { center: [0.0, 0.0], side: r }, oracle)).collect()
}

/// Solves the `a`-harmonic Dirichlet problem on `Q_K` (ε = 1) and records the excess
/// on centered cubes of side `K, K/2, …, 1`.
pub fn excess_decay_experiment<L: PointLaw + Clone>(
    field: &HeterogeneousField<L>,
    periods: usize,
    n: usize,
    g: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<ExcessCurve, SolverError> {
    let domain = CubeDomain { periods, n, eps: 1.0 };
    let grid = domain.grid(&field.tess);
    let (u, log) = dirichlet_on_grid(&grid, &field.phases, g, |_| [0.0, 0.0])?;
    let oracle = CellOracle::new(field.clone(), n);
    let mut radii = Vec::new();
    let mut r = periods as f64;
    while r >= 1.0 {
        radii.push(r);
        r /= 2.0;
    }
    let values = excess_curve(&grid, &u, &radii, &oracle)?;
    Ok(ExcessCurve::from_values(radii, values, Some(log)))
}

#[derive(Clone, Debug, Serialize)]
pub struct LayeredDecay {
    pub radii: Vec<f64>,
    /// `osc(∇′v, B_r)` with `∇′v = ∂_1 v`.
    pub grad_osc: Vec<f64>,
    /// `osc(J_2, B_r)` with `J_2 = a(∇v) e_2`.
    pub flux_osc: Vec<f64>,
    pub fit_grad: Option<PowerFit>,
    pub fit_flux: Option<PowerFit>,
    /// `‖∇v‖_∞(B_{R/4}) / ‖∇v‖_{L²(B_{R/2})}`.
    pub lipschitz_ratio: f64,
    /// `max |J_2 − (J_2)| / |(J_2)|` over `B_{R/2}`.
    pub flux_spread: f64,
    /// Mean `∂_2 v` on the lowest label over mean `∂_2 v` on the highest, in `B_{R/2}`.
    pub normal_ratio: f64,
    pub log: SolveLog,
    /// Solution gradients and fluxes at quadrature points inside `B_{R/2}`.
    #[serde(skip)]
    pub grads: Vec<Mat2>,
    #[serde(skip)]
    pub fluxes: Vec<Mat2>,
}

impl LayeredDecay {
    pub fn pass(&self) -> bool {
        let ok = |f: &Option<PowerFit>, osc: &[f64]| f.map_or(osc.iter().all(|v| *v <= 1e-12), |f| f.exponent >= 0.1);
        ok(&self.fit_grad, &self.grad_osc) && ok(&self.fit_flux, &self.flux_osc)
    }
}

fn osc(values: &[[f64; 2]]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().fold([0.0, 0.0], |a, v| [a[0] + v[0] / n, a[1] + v[1] / n]);
    (values.iter().map(|v| (v[0] - m[0]).powi(2) + (v[1] - m[1]).powi(2)).sum::<f64>() / n).sqrt()
}

/// Dirichlet solve on a cube for an `e_2`-layered field, with oscillation of the
/// tangential gradient and normal flux on shrinking centered balls.
pub fn layered_decay_experiment<L: PointLaw>(
    field: &HeterogeneousField<L>,
    domain: &CubeDomain,
    g: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<LayeredDecay, SolverError> {
    let grid = domain.grid(&field.tess);
    let (u, log) = dirichlet_on_grid(&grid, &field.phases, g, |_| [0.0, 0.0])?;
    let grads = grid.gradients(&u);
    let fluxes: Vec<Mat2> = (0..grads.len()).map(|i| field.phases[grid.labels[i / 4]].flux(&grads[i])).collect();
    let big = domain.side() / 2.0;
    let in_ball = |i: usize, r: f64| {
        let x = grid.qp_position(i / 4, i % 4);
        x[0].hypot(x[1]) < r
    };
    let mut radii = Vec::new();
    let mut r = big;
    while r >= 4.0 * grid.h {
        radii.push(r);
        r /= 2.0;
    }
    let mut grad_osc = Vec::new();
    let mut flux_osc = Vec::new();
    for &r in &radii {
        let ids: Vec<usize> = (0..grads.len()).filter(|&i| in_ball(i, r)).collect();
        grad_osc.push(osc(&ids.iter().map(|&i| [grads[i][(0, 0)], grads[i][(1, 0)]]).collect::<Vec<_>>()));
        flux_osc.push(osc(&ids.iter().map(|&i| [fluxes[i][(0, 1)], fluxes[i][(1, 1)]]).collect::<Vec<_>>()));
    }
    let outer: Vec<usize> = (0..grads.len()).filter(|&i| in_ball(i, big)).collect();
    let l2 = (outer.iter().map(|&i| grads[i].norm_squared()).sum::<f64>() / outer.len() as f64).sqrt();
    let sup = (0..grads.len()).filter(|&i| in_ball(i, big / 2.0)).map(|i| grads[i].norm()).fold(0.0, f64::max);

    let n = outer.len() as f64;
    let jm = outer.iter().fold([0.0, 0.0], |a, &i| [a[0] + fluxes[i][(0, 1)] / n, a[1] + fluxes[i][(1, 1)] / n]);
    let jn = jm[0].hypot(jm[1]);
    let spread = outer.iter().map(|&i| (fluxes[i][(0, 1)] - jm[0]).hypot(fluxes[i][(1, 1)] - jm[1])).fold(0.0, f64::max);
    let labels = field.tess.labels();
    let mean_normal = |label: usize| {
        let ids: Vec<&usize> = outer.iter().filter(|&&i| grid.labels[i / 4] == label).collect();
        let s = ids.iter().fold([0.0, 0.0], |a, &&i| [a[0] + grads[i][(0, 1)], a[1] + grads[i][(1, 1)]]);
        s[0].hypot(s[1]) / ids.len().max(1) as f64
    };
    let normal_ratio = match (labels.first(), labels.last()) {
        (Some(&lo), Some(&hi)) if lo != hi => mean_normal(lo) / mean_normal(hi),
        _ => 1.0,
    };
    Ok(LayeredDecay {
        fit_grad: fit_power_law(&radii, &grad_osc),
        fit_flux: fit_power_law(&radii, &flux_osc),
        radii,
        grad_osc,
        flux_osc,
        lipschitz_ratio: if l2 > 0.0 { sup / l2 } else { 0.0 },
        flux_spread: if jn > 0.0 { spread / jn } else { spread },
        normal_ratio,
        log,
        grads: outer.iter().map(|&i| grads[i]).collect(),
        fluxes: outer.iter().map(|&i| fluxes[i]).collect(),
    })
}

/// Exact transmission solution `u = c x_1 + t ∫_0^{x_2} λ(s/ε)^{-1} ds` for an `e_2`-layered
/// isotropic linear field with moduli indexed by label.
pub fn transmission_data(
    layers: &LayeredTessellation,
    eps: f64,
    moduli: Vec<f64>,
    column: [f64; 2],
    t: [f64; 2],
) -> impl Fn([f64; 2]) -> [f64; 2] + '_ {
    move |x: [f64; 2]| {
        let (a, b) = if x[1] >= 0.0 { (0.0, x[1]) } else { (x[1], 0.0) };
        let mut cuts = vec![a, b];
        if let Some(p) = layers.period {
            let lo = (a / (eps * p)).floor() as i64 - 1;
            let hi = (b / (eps * p)).ceil() as i64 + 1;
            for k in lo..=hi {
                for bp in &layers.breakpoints {
                    let s = eps * (bp + k as f64 * p);
                    if s > a && s < b {
                        cuts.push(s);
                    }
                }
            }
        } else {
            cuts.extend(layers.breakpoints.iter().map(|bp| eps * bp).filter(|s| *s > a && *s < b));
        }
        cuts.sort_by(|p, q| p.total_cmp(q));
        let integral: f64 = cuts
            .windows(2)
            .map(|w| (w[1] - w[0]) / moduli[layers.label_at([0.0, 0.5 * (w[0] + w[1]) / eps])])
            .sum();
        let s = if x[1] >= 0.0 { integral } else { -integral };
        [column[0] * x[0] + t[0] * s, column[1] * x[0] + t[1] * s]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::MonotoneCoefficient;
    use crate::geometry::Tessellation;

    fn laminate() -> HeterogeneousField<MonotoneCoefficient> {
        let tess = Tessellation::laminate_e2(0, 1);
        HeterogeneousField::new(tess, vec![MonotoneCoefficient::linear(1.0), MonotoneCoefficient::linear(4.0)]).unwrap()
    }

    #[test]
    fn corrector_representative_has_zero_excess() {
        let field = laminate();
        let n = 8;
        let oracle = CellOracle::new(field.clone(), n);
        let f = crate::tensor::from_rows([[0.3, -0.1], [0.2, 0.4]]);
        let grid = Grid::dirichlet(&field.tess, n, 4, 1.0);
        let corr = oracle.corrector(&f).unwrap();
        let g: Vec<Mat2> = (0..grid.elements())
            .flat_map(|e| (0..4).map(move |q| (e, q)))
            .map(|(e, q)| corr.grads[oracle.cell_qp(&grid, e, q)])
            .collect();
        for side in [4.0, 2.0, 1.0] {
            let e = excess(&grid, &g, &Window { center: [0.0, 0.0], side }, &oracle).unwrap();
            assert!(e.value < 1e-10, "side {side}: {}", e.value);
            assert!(!e.fallback);
        }
    }

    #[test]
    fn excess_bounded_by_plain_plus_corrector() {
        let field = laminate();
        let n = 8;
        let oracle = CellOracle::new(field.clone(), n);
        let grid = Grid::dirichlet(&field.tess, n, 2, 1.0);
        let u: Vec<f64> = (0..grid.nodes())
            .flat_map(|i| {
                let x = grid.node_position(i);
                [0.1 * x[0] * x[1], 0.05 * x[0] * x[0]]
            })
            .collect();
        let g = grid.gradients(&u);
        let w = Window { center: [0.0, 0.0], side: 2.0 };
        let e = excess(&grid, &g, &w, &oracle).unwrap();
        let mean = g.iter().sum::<Mat2>() / g.len() as f64;
        let corr = oracle.corrector(&mean).unwrap();
        let bound = e.plain + corr.grad_norm();
        assert!(e.value <= bound + 1e-12);
    }

    #[test]
    fn transmission_profile_is_exact() {
        let tess = Tessellation::laminate_e2(0, 1);
        let layers = tess.as_layered().unwrap();
        let eps = 0.25;
        let u = transmission_data(&layers, eps, vec![1.0, 4.0], [0.1, 0.0], [0.0, 1.0]);
        let mid = |s: f64| 1.0 / if layers.label_at([0.0, s / eps]) == 0 { 1.0 } else { 4.0 };
        let m = 200_000;
        let x2 = 0.73;
        let quad: f64 = (0..m).map(|i| mid((i as f64 + 0.5) * x2 / m as f64) * x2 / m as f64).sum();
        assert!((u([0.0, x2])[1] - quad).abs() < 1e-5);
        assert!((u([2.0, 0.0])[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn linear_transmission_has_constant_normal_flux() {
        let field = laminate();
        let layers = field.tess.as_layered().unwrap();
        let domain = CubeDomain { periods: 4, n: 8, eps: 0.25 };
        let g = transmission_data(&layers, domain.eps, vec![1.0, 4.0], [0.1, 0.0], [0.0, 1.0]);
        let d = layered_decay_experiment(&field, &domain, g).unwrap();
        assert!(d.flux_spread < 1e-8, "{}", d.flux_spread);
        assert!((d.normal_ratio - 4.0).abs() < 0.04, "{}", d.normal_ratio);
    }
}
