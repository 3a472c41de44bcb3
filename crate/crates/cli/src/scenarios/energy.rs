use cellhom_core::cellsolver::{
    certified_corrector, hom_energy_gradient, multi_cell_energy, multi_cell_energy_with, rank_one_scan, single_cell_energy,
    EnergyResult,
};
use cellhom_core::energy::{dist_so2, validate_bound, validate_coefficient, validate_stored, ClassVerdict, SamplePlan};
use cellhom_core::tensor::{from_rows, Mat2};
use cellhom_core::{CellProblem, ConvexBound, EnergyModel, Grid, MonotoneCoefficient, Strategy};

use super::{entries, header, Ctx, ScenarioError};
use crate::config::{CoefficientSpec, ConfigError};
use crate::report::{num, RunReport, Table};

fn record_class(table: &mut Table, report: &mut RunReport, name: &str, phase: usize, v: &ClassVerdict) -> std::io::Result<()> {
    for a in &v.axioms {
        let witness = a.witness.map(|w| format!("{w:?}")).unwrap_or_default();
        table.row([v.class.clone(), phase.to_string(), a.axiom.clone(), a.pass.to_string(), num(a.measured), witness])?;
    }
    let failed: Vec<String> = v
        .axioms
        .iter()
        .filter(|a| !a.pass)
        .map(|a| match a.witness {
            Some(w) => format!("{} fails at F = {w:?} (measured {:e})", a.axiom, a.measured),
            None => format!("{} fails (measured {:e})", a.axiom, a.measured),
        })
        .collect();
    report.constant(format!("{name} phase {phase} fitted"), v.fitted);
    report.check(format!("{name} phase {phase}"), v.pass(), v.fitted, "all axioms", failed.join("; "));
    Ok(())
}

pub(super) fn validate_energy(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let m = &ctx.cfg.materials;
    if m.validation_samples < 1000 {
        return Err(ConfigError::at("materials.validation_samples", "need at least 1000 samples").into());
    }
    let plan = SamplePlan { count: m.validation_samples, seed: ctx.seed()? };
    let mut table = Table::create(&ctx.out, "axioms.csv", &["class", "phase", "axiom", "pass", "measured", "witness"])?;
    let stored = m.stored_energies();
    let mut bounds = Vec::new();
    for (i, w) in stored.iter().enumerate() {
        record_class(&mut table, report, "W class", i, &validate_stored(w, &plan))?;
        match ConvexBound::new(*w, m.bound) {
            Ok(v) => {
                record_class(&mut table, report, "V class", i, &validate_bound(&v, &plan))?;
                bounds.push(Some(v));
            }
            Err(e) => {
                report.check(format!("V class phase {i}"), false, f64::NAN, "construction", e.to_string());
                bounds.push(None);
            }
        }
    }
    let coefficients: Vec<Option<MonotoneCoefficient>> = match &m.coefficient {
        CoefficientSpec::Linear { moduli } => moduli.iter().map(|l| Some(MonotoneCoefficient::linear(*l))).collect(),
        CoefficientSpec::Shifted { angle } => bounds
            .iter()
            .map(|b| b.clone().map(|b| MonotoneCoefficient::shifted(b, cellhom_core::tensor::rotation(*angle))))
            .collect(),
    };
    for (i, a) in coefficients.iter().enumerate() {
        match a {
            Some(a) => record_class(&mut table, report, "A class", i, &validate_coefficient(a, &plan))?,
            None => report.check(format!("A class phase {i}"), false, f64::NAN, "construction", "matching bound unavailable"),
        }
    }
    table.finish(report)?;
    Ok(())
}

fn f_samples(ctx: &Ctx) -> Result<Vec<Mat2>, ConfigError> {
    let s = &ctx.cfg.samples;
    match s.f {
        Some(_) => s.matrices(0),
        None => s.matrices(ctx.seed()?),
    }
}

fn direct(ctx: &Ctx) -> Result<Strategy, ConfigError> {
    let r = &ctx.cfg.restarts;
    let seed = if r.random > 0 { ctx.seed()? } else { ctx.cfg.seed.unwrap_or(0) };
    Ok(Strategy::Direct(r.plan(seed)))
}

/// `⨍ W(F + ∇φ)` for the certified V-corrector.
fn w_hom(model: &EnergyModel, f: Mat2, n: usize) -> Result<f64, ScenarioError> {
    let (cell, corr) = certified_corrector(model, f, n)?;
    let grid: &Grid = &cell.grid;
    let s: f64 = corr.grads.iter().enumerate().map(|(q, g)| model.w.phases[grid.labels[q / 4]].eval(g)).sum();
    Ok(s / corr.grads.len() as f64)
}

fn fd_ratio(errors: [f64; 2]) -> f64 {
    if errors[1] > 0.0 {
        errors[0] / errors[1]
    } else {
        f64::INFINITY
    }
}

const FD_STEPS: [f64; 2] = [1e-3, 1e-4];

fn direction() -> Mat2 {
    let g = from_rows([[0.3, -0.2], [0.5, 0.1]]);
    g / g.norm()
}

fn v_hom_shifted(model: &EnergyModel, f: Mat2, n: usize) -> Result<(f64, EnergyResult), ScenarioError> {
    let r = multi_cell_energy(model, f, n, 1, Strategy::Convex)?;
    Ok((r.value - model.mu() * f.determinant(), r))
}

pub(super) fn hom_energy(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let cfg = ctx.cfg;
    let tess = cfg.tessellation(ctx.base())?;
    let model = cfg.materials.model(&tess)?;
    let n = cfg.grid.n;
    let fs = f_samples(ctx)?;
    let strategy = direct(ctx)?;
    let tol = &cfg.tolerances;
    let mut table = Table::create(&ctx.out, "energies.csv", &header(&["sample"], &["k", "w_direct", "v_minus_mu_det", "best_start"]))?;
    let mut floor = f64::INFINITY;
    for (i, f) in fs.iter().enumerate() {
        let (vh, _) = v_hom_shifted(&model, *f, n)?;
        for k in cfg.grid.k_list() {
            let r = multi_cell_energy(&model, *f, n, k, strategy)?;
            let best = r.basins.iter().min_by(|a, b| a.energy.total_cmp(&b.energy)).map(|b| b.start.clone()).unwrap_or_default();
            for b in &r.basins {
                floor = floor.min(b.energy - vh);
            }
            let mut row = vec![i.to_string()];
            row.extend(entries(f));
            row.extend([k.to_string(), num(r.value), num(vh), best]);
            table.row(row)?;
        }
    }
    table.finish(report)?;
    report.check("bracket floor", floor >= -tol.bracket_floor, floor, format!(">= -{:e}", tol.bracket_floor), "min over basins of W energy minus (V_hom - mu det F)");

    let f = fs[0];
    let g = direction();
    let mut fd = Table::create(&ctx.out, "derivatives.csv", &["quantity", "h", "error"])?;
    let exact = hom_energy_gradient(&model, f, &g, n)?;
    let w0 = w_hom(&model, f, n)?;
    let mut grad_err = [0.0; 2];
    for (j, h) in FD_STEPS.iter().enumerate() {
        grad_err[j] = ((w_hom(&model, f + g * *h, n)? - w0) / h - exact).abs();
        fd.row(["gradient".to_string(), num(*h), num(grad_err[j])])?;
    }
    let cell = CellProblem::new(model.v.clone(), n, 1);
    let corr = cell.solve_corrector(f)?;
    let tangent = cell.homogenized_tangent(&corr, &g)?;
    let mut tan_err = [0.0; 2];
    for (j, h) in FD_STEPS.iter().enumerate() {
        let shifted = cell.solve_corrector(f + g * *h)?;
        tan_err[j] = ((shifted.a0 - corr.a0) / *h - tangent).norm();
        fd.row(["tangent".to_string(), num(*h), num(tan_err[j])])?;
    }
    fd.finish(report)?;
    let band = tol.fd_ratio;
    let band_text = format!("[{}, {}]", band[0], band[1]);
    let gr = fd_ratio(grad_err);
    report.check("gradient FD ratio", gr >= band[0] && gr <= band[1], gr, band_text.clone(), "forward differences, h = 1e-3 -> 1e-4");
    let tr = fd_ratio(tan_err);
    report.check("tangent FD ratio", tr >= band[0] && tr <= band[1], tr, band_text, "forward differences of a_0 for DV, h = 1e-3 -> 1e-4");
    let (min, at) = rank_one_scan(&model, f, n, 12)?;
    report.check("rank-one positivity", min > 0.0, min, "> 0", format!("minimum at angles {at:?}"));
    report.constant("W_hom(F0)", w0);
    Ok(())
}

pub(super) fn single_cell_check(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let cfg = ctx.cfg;
    let tess = cfg.tessellation(ctx.base())?;
    let model = cfg.materials.model(&tess)?;
    let fs = f_samples(ctx)?;
    let strategy = direct(ctx)?;
    let tol = &cfg.tolerances;
    let mut table = Table::create(
        &ctx.out,
        "single_cell.csv",
        &header(&["n", "sample", "dist"], &["w1", "w2", "v_minus_mu_det", "diff", "allowed", "floor_margin", "v_max_dist"]),
    )?;
    for n in cfg.grid.ladder() {
        let (mut single, mut equal, mut floor) = (0.0f64, 0.0f64, f64::INFINITY);
        let mut uncertified = 0usize;
        for (i, f) in fs.iter().enumerate() {
            let (vh, vr) = v_hom_shifted(&model, *f, n)?;
            let vmax = vr.u.grid.gradients(&vr.u.values).iter().map(|g| dist_so2(&(g + f))).fold(0.0, f64::max);
            if vmax >= model.delta() {
                uncertified += 1;
            }
            let w1 = single_cell_energy(&model, *f, n, strategy)?;
            let w2 = multi_cell_energy(&model, *f, n, 2, strategy)?;
            let diff = (w2.value - w1.value).abs();
            let allowed = tol.single_cell_abs.max(tol.single_cell_rel * w1.value.abs());
            single = single.max(diff / allowed);
            equal = equal.max((w1.value - vh).abs());
            let margin = w1.basins.iter().chain(&w2.basins).map(|b| b.energy - vh).fold(f64::INFINITY, f64::min);
            floor = floor.min(margin);
            let mut row = vec![n.to_string(), i.to_string(), num(dist_so2(f))];
            row.extend(entries(f));
            row.extend([w1.value, w2.value, vh, diff, allowed, margin, vmax].map(num));
            table.row(row)?;
        }
        report.check(
            format!("single-cell formula n={n}"),
            single <= 1.0,
            single,
            format!("|W2 - W1| <= max({:e}, {:e} W1)", tol.single_cell_abs, tol.single_cell_rel),
            "measured is the worst ratio to the allowed gap",
        );
        report.check(format!("bracket equality n={n}"), equal <= tol.bracket, equal, format!("<= {:e}", tol.bracket), "max |W1 - (V_hom - mu det F)|");
        report.check(format!("bracket floor n={n}"), floor >= -tol.bracket_floor, floor, format!(">= -{:e}", tol.bracket_floor), "min over all basins");
        report.constant(format!("uncertified samples n={n}"), uncertified as f64);
    }
    table.finish(report)?;
    Ok(())
}

pub(super) fn buckling_search(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let cfg = ctx.cfg;
    let tess = cfg.tessellation(ctx.base())?;
    let model = cfg.materials.model(&tess)?;
    let n = cfg.grid.n;
    let fs: Vec<Mat2> = match &cfg.samples.f {
        Some(_) => cfg.samples.matrices(0)?,
        None => cfg.samples.dists.iter().map(|t| from_rows([[1.0 - t, 0.0], [0.0, 1.0]])).collect(),
    };
    let strategy = direct(ctx)?;
    let tol = &cfg.tolerances;
    let mut table = Table::create(&ctx.out, "buckling.csv", &header(&["sample"], &["k", "energy", "drop", "best_start"]))?;
    let mut buckled = 0usize;
    for (i, f) in fs.iter().enumerate() {
        let w1 = single_cell_energy(&model, *f, n, strategy)?;
        let certified = certified_corrector(&model, *f, n).is_ok();
        let (mut worst_rise, mut worst_gap) = (f64::NEG_INFINITY, 0.0f64);
        for k in cfg.grid.k_list().into_iter().filter(|&k| k > 1) {
            let grid = Grid::cell(&model.w.tess, n, k);
            let tiled = grid.tile(&w1.u.grid, &w1.u.values);
            let wk = multi_cell_energy_with(&model, *f, n, k, strategy, vec![("tiled-single-cell".into(), tiled)])?;
            let drop = w1.value - wk.value;
            let scale = tol.energy_match * w1.value.abs().max(1.0);
            if drop > scale {
                buckled += 1;
            }
            worst_rise = worst_rise.max(-drop);
            worst_gap = worst_gap.max(drop.abs() / tol.single_cell_abs.max(tol.single_cell_rel * w1.value.abs()));
            let best = wk.basins.iter().min_by(|a, b| a.energy.total_cmp(&b.energy)).map(|b| b.start.clone()).unwrap_or_default();
            let mut row = vec![i.to_string()];
            row.extend(entries(f));
            row.extend([k.to_string(), num(wk.value), num(drop), best]);
            table.row(row)?;
        }
        if worst_rise.is_finite() {
            let scale = tol.energy_match * w1.value.abs().max(1.0);
            report.check(format!("multi-cell consistency sample {i}"), worst_rise <= scale, worst_rise, format!("W_k <= W_1 + {scale:e}"), "");
            if certified {
                report.check(format!("single-cell near SO(2) sample {i}"), worst_gap <= 1.0, worst_gap, "ratio to allowed gap <= 1", "V-corrector certified");
            } else {
                report.uncertified(format!("single-cell near SO(2) sample {i}"), worst_gap, "V-corrector leaves the matching tube");
            }
        }
    }
    table.finish(report)?;
    report.constant("buckled samples", buckled as f64);
    Ok(())
}
