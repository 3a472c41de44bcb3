use cellhom_core::geometry::{default_radii, estimate_certificate, interface_centers, regularity_distance};
use cellhom_core::regularity::fit_power_law;
use cellhom_core::CellProblem;

use super::{entries, header, Ctx, ScenarioError};
use crate::config::ConfigError;
use crate::report::{num, RunReport, Table};

pub(super) fn tess_regularity(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let cfg = ctx.cfg;
    let g = &cfg.geometry;
    let tess = cfg.tessellation(ctx.base())?;
    let seed = ctx.seed()?;
    if !(g.s > 0.0) {
        return Err(ConfigError::at("geometry.s", "must be positive").into());
    }
    let radii = default_radii(g.levels);
    let bad = |e: cellhom_core::GeometryError| ConfigError::at("geometry", e.to_string());

    let own = regularity_distance(&tess, &tess, g.center, g.s, &radii, g.samples.min(10_000), seed).map_err(bad)?;
    report.check("self distance zero", own.value == 0.0, own.value, "== 0", "");

    let centers = interface_centers(&tess, g.centers);
    let cert = estimate_certificate(&tess, g.s, &centers, &radii, g.samples, seed);
    let mut table = Table::create(&ctx.out, "centers.csv", &["x1", "x2", "value", "radius", "confidence", "normal1", "normal2"])?;
    for c in &cert.centers {
        table.row([c.x[0], c.x[1], c.value, c.radius, c.confidence, c.comparator.direction[0], c.comparator.direction[1]].map(num))?;
    }
    table.finish(report)?;
    report.constant("E", cert.e);
    report.constant("s", cert.s);
    report.check("certificate finite", cert.e.is_finite(), cert.e, "finite", format!("{} centers, {} radii", centers.len(), radii.len()));
    if let Some(max_e) = cfg.tolerances.max_e {
        report.check("certificate bound", cert.e <= max_e, cert.e, format!("<= {max_e}"), "");
    }

    if let Some(spec) = &g.comparator {
        let layered = spec.build()?;
        let d = regularity_distance(&tess, &layered, g.center, g.s, &radii, g.samples, seed).map_err(bad)?;
        let r: Vec<f64> = d.curve.iter().map(|c| c.0).collect();
        let v: Vec<f64> = d.curve.iter().map(|c| c.0.powf(-g.s) * c.1.sqrt()).collect();
        let fit = fit_power_law(&r, &v);
        let mut curve = Table::create(&ctx.out, "curve.csv", &["r", "mismatch", "stderr", "value", "fitted"])?;
        for (c, val) in d.curve.iter().zip(&v) {
            let fitted = fit.map_or(f64::NAN, |f| (f.log_constant + f.exponent * c.0.ln()).exp());
            curve.row([c.0, c.1, c.2, *val, fitted].map(num))?;
        }
        curve.finish(report)?;
        report.constant("comparator distance", d.value);
        if let Some(f) = fit {
            report.constant("comparator slope", f.exponent);
        }
    }
    Ok(())
}

pub(super) fn corrector(ctx: &Ctx, report: &mut RunReport) -> Result<(), ScenarioError> {
    let cfg = ctx.cfg;
    let tess = cfg.tessellation(ctx.base())?;
    let field = cfg.materials.coefficient_field(&tess)?;
    let fs = match cfg.samples.f {
        Some(_) => cfg.samples.matrices(0)?,
        None => cfg.samples.matrices(ctx.seed()?)?,
    };
    let tol = &cfg.tolerances;
    let aligned = tess.as_layered().is_some();
    let ladder = cfg.grid.ladder();
    let mut table = Table::create(
        &ctx.out,
        "correctors.csv",
        &header(
            &["n", "sample"],
            &["a0_11", "a0_12", "a0_21", "a0_22", "grad_l2", "grad_max", "residual", "det_defect", "flux_strong", "flux_weak", "antisymmetry"],
        ),
    )?;
    let (mut residual, mut det, mut strong, mut weak, mut anti) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut finest: Vec<Vec<cellhom_core::Mat2>> = Vec::new();
    for &n in &ladder {
        let cell = CellProblem::new(field.clone(), n, cfg.grid.k);
        let mut a0s = Vec::new();
        for (i, f) in fs.iter().enumerate() {
            let corr = cell.solve_corrector(*f)?;
            let flux = cell.flux_corrector(&corr);
            residual = residual.max(corr.residual);
            det = det.max(corr.det_defect());
            strong = strong.max(flux.strong_residual);
            weak = weak.max(flux.weak_residual);
            anti = anti.max(flux.antisymmetry);
            let mut row = vec![n.to_string(), i.to_string()];
            row.extend(entries(f));
            row.extend(entries(&corr.a0));
            row.extend(
                [corr.grad_norm(), corr.grad_max(), corr.residual, corr.det_defect(), flux.strong_residual, flux.weak_residual, flux.antisymmetry]
                    .map(num),
            );
            table.row(row)?;
            if i == 0 {
                report.constant(format!("phi grad l2 n={n}"), corr.grad_norm());
                report.constant(format!("a0 norm n={n}"), corr.a0.norm());
            }
            a0s.push(corr.a0);
        }
        finest.push(a0s);
    }
    table.finish(report)?;
    if ladder.len() > 1 {
        let mut conv = Table::create(&ctx.out, "ladder.csv", &header(&["n", "sample"], &["diff_to_finest"]))?;
        let last = finest.last().expect("ladder").clone();
        for (n, a0s) in ladder.iter().zip(&finest) {
            for (i, (a, b)) in a0s.iter().zip(&last).enumerate() {
                let mut row = vec![n.to_string(), i.to_string()];
                row.extend(entries(a));
                row.push(num((a - b).norm()));
                conv.row(row)?;
            }
        }
        conv.finish(report)?;
    }
    report.check("corrector residual", residual <= tol.corrector_residual, residual, format!("<= {:e}", tol.corrector_residual), "relative");
    report.check("null Lagrangian", det <= tol.null_lagrangian, det, format!("<= {:e}", tol.null_lagrangian), "|avg det(F + grad phi) - det F|");
    report.check("flux antisymmetry", anti == 0.0, anti, "== 0", "stored antisymmetric");
    report.check("flux weak identity", weak <= tol.flux, weak, format!("<= {:e}", tol.flux), "normalized");
    if aligned {
        report.check("flux strong identity", strong <= tol.flux, strong, format!("<= {:e}", tol.flux), "grid-aligned laminate");
    } else {
        report.uncertified("flux strong identity", strong, "pointwise identity holds only for grid-aligned layers; weak form checked");
    }
    Ok(())
}
