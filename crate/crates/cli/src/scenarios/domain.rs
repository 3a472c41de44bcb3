use cellhom_core::bvp::{dirichlet_on_grid, solve_dirichlet, solve_homogenized, CubeDomain, HomogenizedMap, LatticeMap, Load, LoadMeasure};
use cellhom_core::energy::{validate_coefficient, SamplePlan};
use cellhom_core::regularity::{
    a_quantity, excess, excess_curve, layered_decay_experiment, transmission_data, two_scale_expansion, uniform_lipschitz_sweep,
    CellOracle, ExcessCurve, Window,
};
use cellhom_core::tensor::{from_rows, Mat2};
use cellhom_core::{CellProblem, Grid, SolverError};

use super::{Ctx, ScenarioError};
use crate::config::{CoefficientSpec, ConfigError};
use crate::report::{num, RunReport, Table};

fn scaled_load(shape: &Load, factor: f64) -> Result<Load, ConfigError> {
    Ok(match shape {
        Load::Zero => return Err(ConfigError::at("load.shape", "a zero load cannot reach a target lambda above dist(F, SO(2))")),
        Load::Sine { amplitude, wave } => Load::Sine { amplitude: [amplitude[0] * factor, amplitude[1] * factor], wave: *wave },
        Load::Nodal { values } => Load::Nodal { values: values.iter().map(|v| [v[0] * factor, v[1] * factor]).collect() },
    })
}

fn spread_ok(values: &[f64], limit: f64) -> (bool, f64) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let s = if min > 0.0 { max / min } else { f64::INFINITY };
    (s < limit, s)
}

pub(super) fn uniform_lipschitz(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let cfg = ctx.cfg;
    let tess = cfg.tessellation(ctx.base())?;
    let model = cfg.materials.model(&tess)?;
    let seed = ctx.seed()?;
    let f = cfg.load.f.map(from_rows).unwrap_or_else(Mat2::identity);
    let n = cfg.grid.n;
    let periods = &cfg.grid.periods;
    if periods.is_empty() {
        return Err(ConfigError::at("grid.periods", "empty list").into());
    }
    let reference = Grid::periodic(&tess, n, periods[0], 1.0 / periods[0] as f64);
    let (base, _) = cfg.load.shape.sample(&reference);
    let base_measure = LoadMeasure::new(&reference, &base, &f);
    let targets = if cfg.load.lambdas.is_empty() { vec![base_measure.value] } else { cfg.load.lambdas.clone() };
    let mut table = Table::create(
        &ctx.out,
        "lipschitz.csv",
        &[
            "lambda_target", "periods", "eps", "lambda", "max_dist", "dist_ratio", "grad_ratio", "grad_ratio_full", "certified",
            "w_residual", "perturbation_margin",
        ],
    )?;
    for (t, &target) in targets.iter().enumerate() {
        let load = if cfg.load.lambdas.is_empty() {
            cfg.load.shape.clone()
        } else {
            let need = target - base_measure.dist;
            if !(need > 0.0) || base_measure.load_norm == 0.0 {
                return Err(ConfigError::at(&format!("load.lambdas[{t}]"), "target must exceed dist(F, SO(2)) with a nonzero load").into());
            }
            scaled_load(&cfg.load.shape, need / base_measure.load_norm)?
        };
        let sweep = uniform_lipschitz_sweep(&model, f, &load, periods, n, seed)?;
        for (row, &k) in sweep.rows.iter().zip(periods) {
            table.row([
                num(target),
                k.to_string(),
                num(row.eps),
                num(row.lambda),
                num(row.max_dist),
                num(row.dist_ratio),
                num(row.grad_ratio),
                num(row.grad_ratio_full),
                row.certified.to_string(),
                num(row.report.w_residual),
                row.report.perturbation_margin.map(num).unwrap_or_default(),
            ])?;
            report.warnings.extend(row.report.warnings.iter().map(|w| format!("eps = {}: {w}", row.eps)));
        }
        let label = format!("lambda={target}");
        report.check(
            format!("dist ratio spread {label}"),
            sweep.dist_spread < cfg.tolerances.spread,
            sweep.dist_spread,
            format!("< {}", cfg.tolerances.spread),
            "max/min over eps of max dist / lambda",
        );
        let worst = sweep.rows.iter().map(|r| r.max_dist).fold(0.0, f64::max);
        report.check(format!("certified {label}"), sweep.all_certified, worst, format!("max dist < {}", model.delta()), "");
        report.constant(format!("grad ratio spread {label}"), sweep.grad_spread);
        let full: Vec<f64> = sweep.rows.iter().map(|r| r.grad_ratio_full).collect();
        report.constant(format!("full grad ratio spread {label}"), spread_ok(&full, f64::INFINITY).1);
    }
    table.finish(report)?;
    Ok(())
}

fn radii_for(periods: usize) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut r = periods as f64;
    while r >= 1.0 {
        radii.push(r);
        r /= 2.0;
    }
    radii
}

pub(super) fn excess_decay(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let cfg = ctx.cfg;
    let tess = cfg.tessellation(ctx.base())?;
    let field = cfg.materials.coefficient_field(&tess)?;
    let k = cfg.data.periods;
    let n = cfg.grid.n;
    let tol = &cfg.tolerances;
    let domain = CubeDomain { periods: k, n, eps: 1.0 };
    let grid = domain.grid(&field.tess);
    let g = cfg.data.polynomial(k as f64);
    let (u, log) = dirichlet_on_grid(&grid, &field.phases, g, |_| [0.0, 0.0])?;
    let oracle = CellOracle::new(field.clone(), n);
    let radii = radii_for(k);
    let values = excess_curve(&grid, &u, &radii, &oracle)?;
    let grads = grid.gradients(&u);
    let mut triangle = 0.0f64;
    for r in &radii {
        let w = Window { center: [0.0, 0.0], side: *r };
        let ids = w.elements(&grid);
        let grads_ref = &grads;
        let mean = ids.iter().flat_map(|e| (0..4).map(move |q| grads_ref[4 * e + q])).sum::<Mat2>() / (4 * ids.len()) as f64;
        let e = excess(&grid, &grads, &w, &oracle)?;
        let bound = e.plain + oracle.corrector(&mean)?.grad_norm();
        triangle = triangle.max(e.value - bound);
    }
    let curve = ExcessCurve::from_values(radii.clone(), values, Some(log));
    let mut table = Table::create(&ctx.out, "excess.csv", &["r", "value", "plain", "f11", "f12", "f21", "f22", "fallback", "iterations", "fitted"])?;
    for (r, v) in radii.iter().zip(&curve.values) {
        let fitted = curve.fit.map_or(f64::NAN, |f| (f.log_constant + f.exponent * r.ln()).exp());
        table.row([
            num(*r),
            num(v.value),
            num(v.plain),
            num(v.f[0][0]),
            num(v.f[0][1]),
            num(v.f[1][0]),
            num(v.f[1][1]),
            v.fallback.to_string(),
            v.iterations.to_string(),
            num(fitted),
        ])?;
    }
    table.finish(report)?;
    let gamma = curve.gamma();
    report.check("fitted gamma", gamma >= tol.exponent, gamma, format!(">= {}", tol.exponent), curve.fit.map(|f| format!("log residual {:e}", f.residual)).unwrap_or_default());
    report.check("monotone within factor", curve.monotone_factor <= tol.monotone, curve.monotone_factor, format!("<= {}", tol.monotone), "largest Exc(r/2)/Exc(r)");
    report.check("nesting inequality", curve.nesting <= 1.0 + 1e-9, curve.nesting, "<= 1", "");
    report.check("triangle bound", triangle <= 1e-12, triangle, "<= 0", "Exc <= plain + |grad phi(F*)|");
    report.constant("fallbacks", curve.values.iter().filter(|v| v.fallback).count() as f64);

    let f = from_rows(cfg.data.f);
    let corr = oracle.corrector(&f)?;
    let rep: Vec<Mat2> = (0..grid.elements())
        .flat_map(|e| (0..4).map(move |q| (e, q)))
        .map(|(e, q)| corr.grads[oracle.cell_qp(&grid, e, q)])
        .collect();
    let mut worst = 0.0f64;
    for r in &radii {
        worst = worst.max(excess(&grid, &rep, &Window { center: [0.0, 0.0], side: *r }, &oracle)?.value);
    }
    report.check("corrector representative", worst <= tol.representative, worst, format!("<= {:e}", tol.representative), "");
    Ok(())
}

fn coefficient_beta(ctx: &Ctx, field: &cellhom_core::HeterogeneousField<cellhom_core::MonotoneCoefficient>) -> Result<f64, ConfigError> {
    let plan = SamplePlan { count: 2000, seed: ctx.cfg.seed.unwrap_or(0) };
    Ok(field.phases.iter().map(|a| validate_coefficient(a, &plan).fitted).fold(f64::INFINITY, f64::min))
}

pub(super) fn layered_decay(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let cfg = ctx.cfg;
    let tess = cfg.tessellation(ctx.base())?;
    let layers = tess
        .as_layered()
        .filter(|l| l.direction == [0.0, 1.0])
        .ok_or_else(|| ConfigError::at("tessellation", "layered-decay needs layers normal to e_2"))?;
    let field = cfg.materials.coefficient_field(&tess)?;
    let tol = &cfg.tolerances;
    let periods = cfg.data.periods;
    let domain = CubeDomain { periods, n: cfg.grid.n, eps: 1.0 / periods as f64 };
    let d = match (&cfg.data.transmission, &cfg.materials.coefficient) {
        (Some(t), CoefficientSpec::Linear { moduli }) => {
            let col = [cfg.data.f[0][0], cfg.data.f[1][0]];
            let g = transmission_data(&layers, domain.eps, moduli.clone(), col, *t);
            layered_decay_experiment(&field, &domain, g)?
        }
        (Some(_), _) => return Err(ConfigError::at("data.transmission", "needs a linear coefficient").into()),
        (None, _) => layered_decay_experiment(&field, &domain, cfg.data.polynomial(1.0))?,
    };
    let mut table = Table::create(&ctx.out, "decay.csv", &["r", "grad_osc", "flux_osc", "fitted_grad", "fitted_flux"])?;
    for (i, r) in d.radii.iter().enumerate() {
        let fit = |f: &Option<cellhom_core::regularity::PowerFit>| f.map_or(f64::NAN, |f| (f.log_constant + f.exponent * r.ln()).exp());
        table.row([*r, d.grad_osc[i], d.flux_osc[i], fit(&d.fit_grad), fit(&d.fit_flux)].map(num))?;
    }
    table.finish(report)?;
    report.constant("lipschitz ratio", d.lipschitz_ratio);
    match (&cfg.data.transmission, &cfg.materials.coefficient) {
        (Some(_), CoefficientSpec::Linear { moduli }) => {
            let labels = tess.labels();
            let expected = moduli[*labels.last().expect("labels")] / moduli[labels[0]];
            report.check("normal flux constant", d.flux_spread <= tol.transmission_flux, d.flux_spread, format!("<= {:e}", tol.transmission_flux), "relative to the mean flux");
            let rel = (d.normal_ratio / expected - 1.0).abs();
            report.check(
                "normal gradient jump",
                rel <= tol.transmission_jump,
                d.normal_ratio,
                format!("{expected} within {}%", 100.0 * tol.transmission_jump),
                "",
            );
        }
        _ => {
            for (name, fit, osc) in [("gradient decay exponent", d.fit_grad, &d.grad_osc), ("flux decay exponent", d.fit_flux, &d.flux_osc)] {
                match fit {
                    Some(f) => report.check(name, f.exponent >= tol.exponent, f.exponent, format!(">= {}", tol.exponent), format!("log residual {:e}", f.residual)),
                    None => {
                        let flat = osc.iter().all(|v| *v <= 1e-12);
                        report.check(name, flat, f64::NAN, "fit or vanishing oscillation", "fewer than four positive points")
                    }
                }
            }
        }
    }
    let beta = coefficient_beta(ctx, &field)?;
    let a = a_quantity(&d.grads, &d.fluxes, beta);
    let worst = a.max_a_over_grad.max(a.max_grad_over_a);
    report.check("A-quantity equivalence", a.within_bounds(), worst, format!("<= cbar = {:e}", a.cbar), format!("beta = {beta:e}"));
    Ok(())
}

pub(super) fn two_scale(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let cfg = ctx.cfg;
    let tess = cfg.tessellation(ctx.base())?;
    let field = cfg.materials.coefficient_field(&tess)?;
    let n = cfg.grid.n;
    let spec = &cfg.two_scale;
    if cfg.grid.periods.is_empty() || spec.r.is_empty() {
        return Err(ConfigError::at("two_scale.r", "need at least one period count and one cube side").into());
    }
    let map = if cfg.materials.is_linear() {
        let cell = CellProblem::new(field.clone(), n, 1);
        let corr = cell.solve_corrector(Mat2::zeros())?;
        HomogenizedMap::Linear(cell.homogenized_tangent_tensor(&corr)?)
    } else {
        HomogenizedMap::Lattice(Box::new(LatticeMap::new(CellProblem::new(field.clone(), n, 1), spec.lattice_spacing, spec.lattice_budget)))
    };
    let oracle = CellOracle::new(field.clone(), n);
    let g = cfg.data.polynomial(1.0);
    let mut table = Table::create(
        &ctx.out,
        "two_scale.csv",
        &["periods", "eps", "r", "rho", "active_cubes", "error", "plain_error", "cutoff_defect", "cutoff_normalized"],
    )?;
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); spec.r.len()];
    let mut cutoff: Vec<(f64, f64)> = Vec::new();
    let mut sorted = cfg.grid.periods.clone();
    sorted.sort_unstable();
    for &p in &sorted {
        let domain = CubeDomain { periods: p, n, eps: 1.0 / p as f64 };
        let (u, _) = solve_dirichlet(&field, &domain, &g, |_| [0.0, 0.0])?;
        let (u0, _) = solve_homogenized(&map, &domain, &g, |_| [0.0, 0.0])?;
        for (ri, &r) in spec.r.iter().enumerate() {
            let rep = match two_scale_expansion(&u.grid, &u.values, &u0.values, &oracle, r, spec.rho) {
                Err(SolverError::Invalid(msg)) => return Err(ConfigError::at(&format!("two_scale.r[{ri}]"), msg).into()),
                other => other?,
            };
            let fmax = rep.cubes.iter().map(|c| from_rows(c.f).norm()).fold(0.0, f64::max);
            let normalized = if fmax > 0.0 { rep.cutoff_defect / fmax } else { 0.0 };
            table.row([
                p.to_string(),
                num(domain.eps),
                num(r),
                num(spec.rho),
                rep.active_cubes.to_string(),
                num(rep.error),
                num(rep.plain_error),
                num(rep.cutoff_defect),
                num(normalized),
            ])?;
            errors[ri].push(rep.error);
            cutoff.push((r / domain.eps, normalized));
        }
    }
    table.finish(report)?;
    if sorted.len() > 1 {
        for (ri, e) in errors.iter().enumerate() {
            let worst = e.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            report.check(format!("error decreases with eps r={}", spec.r[ri]), worst < 1.0, worst, "< 1", "largest ratio of consecutive errors as eps halves");
        }
    }
    if cutoff.len() > 1 {
        let compensated: Vec<f64> = cutoff.iter().map(|(r, v)| v * r.sqrt()).collect();
        let (ok, s) = spread_ok(&compensated, 2.0);
        report.check("cutoff scaling", ok, s, "< 2", "max/min of defect * (r/eps)^(1/2) over all (eps, r)");
    }
    report.constant("corrector solves", oracle.solves() as f64);
    Ok(())
}
