use serde::Serialize;

use super::CellOracle;
use crate::cellsolver::{Grid, SolverError};
use crate::energy::PointLaw;
use crate::tensor::Mat2;

#[derive(Clone, Debug, Serialize)]
pub struct CubeError {
    pub center: [f64; 2],
    pub f: [[f64; 2]; 2],
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoScaleReport {
    pub r: f64,
    pub rho: f64,
    pub eps: f64,
    pub active_cubes: usize,
    /// Normalized `L²` of `∇u − ∇u_0 − ∇ψ` over the active cubes.
    pub error: f64,
    /// Same without the corrector term.
    pub plain_error: f64,
    /// Normalized `L²` of `∇ψ − χ`, the cut-off defect.
    pub cutoff_defect: f64,
    pub cubes: Vec<CubeError>,
    pub corrector_solves: usize,
}

fn inside(x: [f64; 2], c: [f64; 2], half: f64) -> bool {
    (x[0] - c[0]).abs() < half && (x[1] - c[1]).abs() < half
}

/// Compares `u` with `u_0 + Σ_Q η_Q ε φ(·/ε, (∇u_0)_Q)` on cubes `Q` of side `r` that stay
/// `ρ L` away from the boundary of the side-`L` domain.
///
/// Needs `L/(2r) ∈ ℕ`, `r/ε ∈ ℕ` and `2r/L < ρ < 1/4`.
pub fn two_scale_expansion<L: PointLaw + Clone>(
    grid: &Grid,
    u: &[f64],
    u0: &[f64],
    oracle: &CellOracle<L>,
    r: f64,
    rho: f64,
) -> Result<TwoScaleReport, SolverError> {
    let side = grid.side() as f64 * grid.h;
    let eps = grid.eps;
    let integral = |v: f64| (v - v.round()).abs() < 1e-9 && v.round() >= 1.0;
    if !integral(side / (2.0 * r)) || !integral(r / eps) || !(2.0 * r / side < rho && rho < 0.25) {
        return Err(SolverError::Invalid(format!(
            "two-scale cubes need L/(2r) and r/eps integral and 2r/L < rho < 1/4 (L = {side}, r = {r}, eps = {eps}, rho = {rho})"
        )));
    }
    let count = (side / r).round() as usize;
    let limit = side / 2.0 - rho * side;
    let gu = grid.gradients(u);
    let g0 = grid.gradients(u0);
    let mut centers = Vec::new();
    for b in 0..count {
        for a in 0..count {
            let c = [-side / 2.0 + (a as f64 + 0.5) * r, -side / 2.0 + (b as f64 + 0.5) * r];
            if c[0].abs() + r / 2.0 <= limit + 1e-12 && c[1].abs() + r / 2.0 <= limit + 1e-12 {
                centers.push(c);
            }
        }
    }
    let cube_of = |x: [f64; 2]| centers.iter().position(|c| inside(x, *c, r / 2.0));

    let mut qps: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for e in 0..grid.elements() {
        if let Some(k) = cube_of(grid.element_center(e)) {
            qps[k].extend((0..4).map(|q| 4 * e + q));
        }
    }
    let mut correctors = Vec::with_capacity(centers.len());
    for ids in &qps {
        let f = ids.iter().map(|&i| g0[i]).sum::<Mat2>() / ids.len() as f64;
        correctors.push(oracle.corrector(&f)?);
    }

    let mut psi = vec![0.0; grid.dofs()];
    for node in 0..grid.nodes() {
        let x = grid.node_position(node);
        let Some(k) = cube_of(x) else { continue };
        let c = centers[k];
        let d = (x[0] - c[0]).abs().max((x[1] - c[1]).abs());
        let eta = ((r / 2.0 - d) / (eps / 2.0)).clamp(0.0, 1.0);
        let cn = oracle.cell_node(grid, node);
        let phi = &correctors[k].phi.values;
        psi[2 * node] = eta * eps * phi[2 * cn];
        psi[2 * node + 1] = eta * eps * phi[2 * cn + 1];
    }
    let gpsi = grid.gradients(&psi);

    let (mut err, mut plain, mut cut, mut total) = (0.0, 0.0, 0.0, 0usize);
    let mut cubes = Vec::with_capacity(centers.len());
    for (k, ids) in qps.iter().enumerate() {
        let corr = &correctors[k];
        let mut local = 0.0;
        for &i in ids {
            let chi = corr.grads[oracle.cell_qp(grid, i / 4, i % 4)] - corr.f;
            let d = (gu[i] - g0[i] - gpsi[i]).norm_squared();
            local += d;
            plain += (gu[i] - g0[i]).norm_squared();
            cut += (gpsi[i] - chi).norm_squared();
        }
        err += local;
        total += ids.len();
        cubes.push(CubeError {
            center: centers[k],
            f: crate::tensor::to_rows(&corr.f),
            error: (local / ids.len() as f64).sqrt(),
        });
    }
    let norm = |v: f64| if total > 0 { (v / total as f64).sqrt() } else { 0.0 };
    Ok(TwoScaleReport {
        r,
        rho,
        eps,
        active_cubes: centers.len(),
        error: norm(err),
        plain_error: norm(plain),
        cutoff_defect: norm(cut),
        cubes,
        corrector_solves: oracle.solves(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvp::{dirichlet_on_grid, CubeDomain};
    use crate::energy::{HeterogeneousField, MonotoneCoefficient};
    use crate::geometry::Tessellation;

    #[test]
    fn affine_data_on_laminate() {
        let tess = Tessellation::laminate_e2(0, 1);
        let field =
            HeterogeneousField::new(tess, vec![MonotoneCoefficient::linear(1.0), MonotoneCoefficient::linear(4.0)]).unwrap();
        let domain = CubeDomain { periods: 64, n: 4, eps: 1.0 / 64.0 };
        let grid = domain.grid(&field.tess);
        let f = crate::tensor::from_rows([[0.1, 0.2], [0.0, -0.1]]);
        let g = |x: [f64; 2]| [f[(0, 0)] * x[0] + f[(0, 1)] * x[1], f[(1, 0)] * x[0] + f[(1, 1)] * x[1]];
        let (u, _) = dirichlet_on_grid(&grid, &field.phases, g, |_| [0.0, 0.0]).unwrap();
        let u0: Vec<f64> = (0..grid.nodes()).flat_map(|i| g(grid.node_position(i))).collect();
        let oracle = CellOracle::new(field, 4);
        let rep = two_scale_expansion(&grid, &u, &u0, &oracle, 0.0625, 0.2).unwrap();
        assert_eq!(rep.active_cubes, 64);
        assert!(rep.error < 0.8 * rep.plain_error, "{} vs {}", rep.error, rep.plain_error);
        assert!(rep.cutoff_defect > 0.0);
    }

    #[test]
    fn rejects_inadmissible_cubes() {
        let tess = Tessellation::laminate_e2(0, 1);
        let field =
            HeterogeneousField::new(tess, vec![MonotoneCoefficient::linear(1.0), MonotoneCoefficient::linear(4.0)]).unwrap();
        let domain = CubeDomain { periods: 16, n: 4, eps: 1.0 / 16.0 };
        let grid = domain.grid(&field.tess);
        let u = vec![0.0; grid.dofs()];
        let oracle = CellOracle::new(field, 4);
        assert!(two_scale_expansion(&grid, &u, &u, &oracle, 0.125, 0.2).is_err());
        assert!(two_scale_expansion(&grid, &u, &u, &oracle, 0.05, 0.2).is_err());
        assert!(two_scale_expansion(&grid, &u, &u, &oracle, 0.0625, 0.1).is_err());
        assert!(two_scale_expansion(&grid, &u, &u, &oracle, 0.0625, 0.2).is_ok());
    }
}
