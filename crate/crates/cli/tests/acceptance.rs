//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any FAIL.
//!
//! `cargo test -p cellhom-cli --test acceptance -- 3 11` runs a subset by number.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use cellhom_cli::{run, ExperimentConfig, RunReport, Scenario, Verdict};
use cellhom_core::bvp::CubeDomain;
use cellhom_core::cellsolver::{corrector_lipschitz_scan, hom_energy_gradient, multi_cell_energy, rank_one_scan, single_cell_energy, RestartPlan};
use cellhom_core::energy::dist::nearest_rotation;
use cellhom_core::energy::SamplePlan;
use cellhom_core::geometry::{default_radii, regularity_distance};
use cellhom_core::regularity::{excess, excess_decay_experiment, fit_power_law, layered_decay_experiment, transmission_data, CellOracle, Window};
use cellhom_core::tensor::{from_rows, outer, rotation};
use cellhom_core::{
    BoundParams, CellProblem, EnergyModel, HeterogeneousField, LayeredTessellation, Mat2, MonotoneCoefficient, StoredEnergy,
    Strategy, Tessellation,
};

struct Outcome {
    pass: bool,
    summary: String,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self { pass, summary: summary.into() }
    }
}

type Criterion = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Criterion); 12] = [
        ("laminate oracle", laminate_oracle),
        ("trivial correctors", trivial_correctors),
        ("single-cell formula", single_cell_formula),
        ("matching-bound bracket", matching_bound_bracket),
        ("corrector Lipschitz stability", corrector_lipschitz),
        ("uniform Lipschitz sweep", uniform_lipschitz),
        ("layered decay", layered_decay),
        ("excess decay", excess_decay),
        ("flux corrector", flux_corrector),
        ("derivative consistency", derivative_consistency),
        ("geometry", geometry),
        ("determinism", determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome::new(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {} ({:.1}s)",
            if out.pass { "PASS" } else { "FAIL" },
            out.summary,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn laminate_field(l1: f64, l2: f64) -> HeterogeneousField<MonotoneCoefficient> {
    HeterogeneousField::new(Tessellation::laminate_e2(0, 1), vec![MonotoneCoefficient::linear(l1), MonotoneCoefficient::linear(l2)])
        .expect("two phases")
}

fn model(tess: Tessellation) -> EnergyModel {
    let w = HeterogeneousField::new(tess, vec![StoredEnergy::new(1.0, 0.1, 4.0), StoredEnergy::new(2.0, 0.1, 4.0)]).expect("two phases");
    EnergyModel::new(w, BoundParams::default()).expect("matching bound")
}

fn disk() -> Tessellation {
    Tessellation::disk([0.0, 0.0], 0.3)
}

/// Samples `R(θ)(I + tS)` cycling through the distances.
fn near_so2(count: usize, seed: u64) -> Vec<Mat2> {
    SamplePlan { count, seed }.near_rotations(&[0.02, 0.05, 0.1])
}

fn e(m: &Mat2, i: usize, j: usize) -> f64 {
    m[(i, j)]
}

// 1
fn laminate_oracle() -> Outcome {
    let (l1, l2) = (1.0, 4.0);
    let field = laminate_field(l1, l2);
    // 1D oracle: the normal flux is constant across layers, the tangential gradient is.
    let m = 10_000;
    let lambda = |y: f64| if field.tess.label_at([0.0, y]) == 0 { l1 } else { l2 };
    let ys: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64 - 0.5).collect();
    let normal = 1.0 / (ys.iter().map(|y| 1.0 / lambda(*y)).sum::<f64>() / m as f64);
    let tangential = ys.iter().map(|y| lambda(*y)).sum::<f64>() / m as f64;

    let start = Instant::now();
    let cell = CellProblem::new(field, 32, 1);
    let a22 = cell.solve_corrector(outer([0.0, 1.0], [0.0, 1.0])).expect("solve").a0;
    let a11 = cell.solve_corrector(outer([1.0, 0.0], [1.0, 0.0])).expect("solve").a0;
    let secs = start.elapsed().as_secs_f64();
    let err = (e(&a22, 1, 1) - normal).abs().max((e(&a11, 0, 0) - tangential).abs());
    Outcome::new(
        err <= 1e-6 && secs < 5.0,
        format!("normal {:.10} vs {normal:.10}, tangential {:.10} vs {tangential:.10}, max err {err:.2e}, solve {secs:.2}s", e(&a22, 1, 1), e(&a11, 0, 0)),
    )
}

// 2
fn trivial_correctors() -> Outcome {
    let tol = 1e-10;
    let lam = CellProblem::new(model(Tessellation::laminate_e2(0, 1)).v.shifted(rotation(0.3)), 32, 1);
    let phi0 = lam.solve_corrector(Mat2::zeros()).expect("solve");
    let phi_zero = phi0.grad_max();
    let a0_zero = phi0.a0.norm();

    let homog = model(Tessellation::homogeneous(0));
    let hom_cell = CellProblem::new(homog.v.clone(), 32, 1);
    let phi_hom = near_so2(6, 1)
        .iter()
        .map(|f| hom_cell.solve_corrector(*f).expect("solve").grad_max())
        .fold(0.0, f64::max);

    let m = model(Tessellation::laminate_e2(0, 1));
    let plan = RestartPlan { random: 2, amplitude: 0.05, seed: 2 };
    let w_rot = [0.0, 0.7, 2.0, -2.5]
        .iter()
        .map(|t| single_cell_energy(&m, rotation(*t), 32, Strategy::Direct(plan)).expect("solve").value.abs())
        .fold(0.0, f64::max);

    let worst = phi_zero.max(a0_zero).max(phi_hom).max(w_rot);
    Outcome::new(
        worst <= tol,
        format!("|grad phi(0)| {phi_zero:.1e}, |a0(0)| {a0_zero:.1e}, homogeneous |grad phi| {phi_hom:.1e}, max W_hom(R) {w_rot:.1e}"),
    )
}

struct BracketRow {
    w1: f64,
    w2: f64,
    v_shift: f64,
    floor: f64,
}

fn bracket_rows(tess: Tessellation, n: usize) -> Vec<BracketRow> {
    let m = model(tess);
    let plan = RestartPlan { random: 2, amplitude: 0.05, seed: 5 };
    near_so2(12, 5)
        .iter()
        .map(|f| {
            let v = multi_cell_energy(&m, *f, n, 1, Strategy::Convex).expect("convex").value - m.mu() * f.determinant();
            let w1 = single_cell_energy(&m, *f, n, Strategy::Direct(plan)).expect("k=1");
            let w2 = multi_cell_energy(&m, *f, n, 2, Strategy::Direct(plan)).expect("k=2");
            let floor = w1.basins.iter().chain(&w2.basins).map(|b| b.energy - v).fold(f64::INFINITY, f64::min);
            BracketRow { w1: w1.value, w2: w2.value, v_shift: v, floor }
        })
        .collect()
}

fn all_bracket_rows() -> &'static [(String, Vec<BracketRow>)] {
    static ROWS: std::sync::OnceLock<Vec<(String, Vec<BracketRow>)>> = std::sync::OnceLock::new();
    ROWS.get_or_init(|| {
        let mut out = Vec::new();
        for (name, tess) in [("laminate", Tessellation::laminate_e2(0, 1)), ("disk", disk())] {
            for n in [32, 64] {
                out.push((format!("{name} n={n}"), bracket_rows(tess.clone(), n)));
            }
        }
        out
    })
}

// 3
fn single_cell_formula() -> Outcome {
    let start = Instant::now();
    let rows = all_bracket_rows();
    let secs = start.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, rs) in rows {
        let r = rs.iter().map(|r| (r.w2 - r.w1).abs() / 1e-8f64.max(1e-3 * r.w1.abs())).fold(0.0, f64::max);
        worst = worst.max(r);
        parts.push(format!("{name} {r:.1e}"));
    }
    Outcome::new(
        worst <= 1.0 && secs < 600.0,
        format!("worst |W2-W1|/allowed: {} ({} samples each, {secs:.0}s)", parts.join(", "), rows[0].1.len()),
    )
}

// 4
fn matching_bound_bracket() -> Outcome {
    let rows = all_bracket_rows();
    let equal = rows.iter().flat_map(|(_, r)| r).map(|r| (r.w1 - r.v_shift).abs()).fold(0.0, f64::max);
    let floor = rows.iter().flat_map(|(_, r)| r).map(|r| r.floor).fold(f64::INFINITY, f64::min);
    Outcome::new(
        equal <= 1e-6 && floor >= -1e-8,
        format!("max |W1 - (V_hom - mu det F)| {equal:.1e} (<= 1e-6), min basin energy - (V_hom - mu det F) {floor:.1e} (>= -1e-8)"),
    )
}

// 5
fn corrector_lipschitz() -> Outcome {
    let samples: Vec<Mat2> = near_so2(20, 17).iter().map(|f| nearest_rotation(f).transpose() * f).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, tess) in [("laminate", Tessellation::laminate_e2(0, 1)), ("disk", disk())] {
        let m = model(tess);
        let scans: Vec<_> = [32, 64]
            .iter()
            .map(|&n| corrector_lipschitz_scan(&CellProblem::new(m.v.clone(), n, 1), &samples, &Mat2::identity()).expect("scan"))
            .collect();
        let lip = scans[0].max_ratio_l2 / scans[1].max_ratio_l2;
        let fit = scans[0].fitted_c / scans[1].fitted_c;
        pass &= (lip - 1.0).abs() <= 0.2 && (fit - 1.0).abs() <= 0.2;
        parts.push(format!(
            "{name}: L {:.4}/{:.4} (ratio {lip:.3}), sup|grad phi|/|F-I| {:.4}/{:.4} (ratio {fit:.3})",
            scans[0].max_ratio_l2, scans[1].max_ratio_l2, scans[0].fitted_c, scans[1].fitted_c
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn run_config(scenario: Scenario, json: &str, out: &Path) -> RunReport {
    let cfg = ExperimentConfig::from_json(json).expect("config");
    run(scenario, &cfg, Path::new("."), out).expect("run")
}

fn measured(report: &RunReport, name: &str) -> (f64, Verdict) {
    let c = report.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("check `{name}` missing"));
    (c.measured, c.verdict)
}

// 6
fn uniform_lipschitz() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, tess) in [("laminate", r#"{ "kind": "laminate" }"#), ("disk", r#"{ "kind": "disk", "radius": 0.3 }"#)] {
        let json = format!(
            r#"{{ "seed": 13, "tessellation": {tess}, "grid": {{ "n": 4, "periods": [4, 8, 16] }}, "load": {{ "lambdas": [0.02, 0.05] }} }}"#
        );
        let report = run_config(Scenario::UniformLipschitz, &json, dir.path());
        for lambda in ["0.02", "0.05"] {
            let (spread, _) = measured(&report, &format!("dist ratio spread lambda={lambda}"));
            let (max_dist, cert) = measured(&report, &format!("certified lambda={lambda}"));
            pass &= spread < 2.0 && cert == Verdict::Pass;
            parts.push(format!("{name} lambda={lambda}: spread {spread:.3}, max dist {max_dist:.2e} {cert}"));
        }
    }
    Outcome::new(pass, parts.join("; "))
}

// 7
fn layered_decay() -> Outcome {
    let m = model(Tessellation::laminate_e2(0, 1));
    let nonlinear = m.v.shifted(rotation(0.2));
    let domain = CubeDomain { periods: 16, n: 4, eps: 1.0 / 16.0 };
    let g = |x: [f64; 2]| [0.05 * x[0] + 0.02 * x[1] + 0.05 * (x[0] * x[0] - x[1] * x[1]), -0.01 * x[0] + 0.04 * x[1] + 0.06 * x[0] * x[1]];
    let d = layered_decay_experiment(&nonlinear, &domain, g).expect("solve");
    let gamma_grad = d.fit_grad.map_or(f64::NAN, |f| f.exponent);
    let gamma_flux = d.fit_flux.map_or(f64::NAN, |f| f.exponent);

    let linear = laminate_field(1.0, 4.0);
    let layers = linear.tess.as_layered().expect("layered");
    let t = transmission_data(&layers, domain.eps, vec![1.0, 4.0], [0.0, 1.0], [0.0, 1.0]);
    let lin = layered_decay_experiment(&linear, &domain, t).expect("solve");
    let jump = lin.normal_ratio;
    let pass = gamma_grad >= 0.1 && gamma_flux >= 0.1 && lin.flux_spread <= 1e-8 && (jump / 4.0 - 1.0).abs() <= 0.01;
    Outcome::new(
        pass,
        format!(
            "gamma(grad') {gamma_grad:.3}, gamma(J_2) {gamma_flux:.3} (>= 0.1); transmission: J_2 spread {:.1e} (<= 1e-8), d2u jump {jump:.4} (4 +- 1%)",
            lin.flux_spread
        ),
    )
}

// 8
fn excess_decay() -> Outcome {
    let m = model(Tessellation::laminate_e2(0, 1));
    let field = m.v.shifted(rotation(0.2));
    let (periods, n) = (16, 4);
    let g = |x: [f64; 2]| {
        let y = [x[0] / 16.0, x[1] / 16.0];
        [0.05 * x[0] + 0.02 * x[1] + 0.8 * (y[0] * y[0] - y[1] * y[1]), -0.01 * x[0] + 0.04 * x[1] + 0.8 * y[0] * y[1]]
    };
    let curve = excess_decay_experiment(&field, periods, n, g).expect("solve");
    let gamma = curve.gamma();

    let oracle = CellOracle::new(field.clone(), n);
    let grid = CubeDomain { periods, n, eps: 1.0 }.grid(&field.tess);
    let f = from_rows([[0.05, 0.02], [-0.01, 0.04]]);
    let corr = oracle.corrector(&f).expect("corrector");
    let rep: Vec<Mat2> = (0..grid.elements())
        .flat_map(|e| (0..4).map(move |q| (e, q)))
        .map(|(e, q)| corr.grads[oracle.cell_qp(&grid, e, q)])
        .collect();
    let representative = curve
        .radii
        .iter()
        .map(|r| excess(&grid, &rep, &Window { center: [0.0, 0.0], side: *r }, &oracle).expect("excess").value)
        .fold(0.0, f64::max);
    let values: Vec<String> = curve.values.iter().map(|v| format!("{:.2e}", v.value)).collect();
    Outcome::new(
        curve.monotone_factor <= 2.0 && gamma >= 0.1 && representative <= 1e-8,
        format!(
            "Exc at r = {:?}: [{}], monotone factor {:.3} (<= 2), gamma {gamma:.3} (>= 0.1), representative {representative:.1e} (<= 1e-8)",
            curve.radii,
            values.join(", "),
            curve.monotone_factor
        ),
    )
}

// 9
fn flux_corrector() -> Outcome {
    let samples = near_so2(4, 9);
    let m = model(Tessellation::laminate_e2(0, 1));
    let lam = CellProblem::new(m.v.shifted(rotation(0.2)), 32, 1);
    let (mut strong, mut anti, mut det) = (0.0f64, 0.0f64, 0.0f64);
    for f in &samples {
        let a = f - rotation(0.2);
        let c = lam.solve_corrector(a).expect("solve");
        let s = lam.flux_corrector(&c);
        strong = strong.max(s.strong_residual);
        anti = anti.max(s.antisymmetry);
        det = det.max(c.det_defect());
    }
    let d = model(disk());
    let dc = CellProblem::new(d.v.shifted(rotation(0.2)), 32, 1);
    let (mut disk_weak, mut disk_strong, mut disk_det) = (0.0f64, 0.0f64, 0.0f64);
    for f in &samples {
        let c = dc.solve_corrector(f - rotation(0.2)).expect("solve");
        let s = dc.flux_corrector(&c);
        disk_weak = disk_weak.max(s.weak_residual);
        disk_strong = disk_strong.max(s.strong_residual);
        disk_det = disk_det.max(c.det_defect());
        anti = anti.max(s.antisymmetry);
    }
    det = det.max(disk_det);
    Outcome::new(
        strong <= 1e-8 && anti == 0.0 && det <= 1e-10 && disk_weak <= 1e-8,
        format!(
            "laminate strong residual {strong:.1e} (<= 1e-8); antisymmetry {anti:e}; null Lagrangian {det:.1e} (<= 1e-10); disk weak residual {disk_weak:.1e}, disk strong residual {disk_strong:.1e} (not asserted)"
        ),
    )
}

// 10
fn derivative_consistency() -> Outcome {
    let m = model(Tessellation::laminate_e2(0, 1));
    let n = 16;
    let f = from_rows([[0.98, -0.03], [0.04, 1.01]]);
    let g = from_rows([[0.3, -0.2], [0.5, 0.1]]).normalize();
    let w_hom = |x: Mat2| multi_cell_energy(&m, x, n, 1, Strategy::Convex).expect("convex").value - m.mu() * x.determinant();
    let exact = hom_energy_gradient(&m, f, &g, n).expect("gradient");
    let w0 = w_hom(f);
    let grad_err: Vec<f64> = [1e-3, 1e-4].iter().map(|h| ((w_hom(f + g * *h) - w0) / h - exact).abs()).collect();
    let grad_ratio = grad_err[0] / grad_err[1];

    let cell = CellProblem::new(m.v.clone(), n, 1);
    let c0 = cell.solve_corrector(f).expect("solve");
    let tangent = cell.homogenized_tangent(&c0, &g).expect("tangent");
    let tan_err: Vec<f64> = [1e-3, 1e-4]
        .iter()
        .map(|h| ((cell.solve_corrector(f + g * *h).expect("solve").a0 - c0.a0) / *h - tangent).norm())
        .collect();
    let tan_ratio = tan_err[0] / tan_err[1];

    let (rank_one, angles) = rank_one_scan(&m, f, n, 12).expect("scan");
    let ok = |r: f64| (8.0..=12.5).contains(&r);
    Outcome::new(
        ok(grad_ratio) && ok(tan_ratio) && rank_one > 0.0,
        format!(
            "gradient FD errors {:.2e} -> {:.2e} (ratio {grad_ratio:.2}), tangent FD errors {:.2e} -> {:.2e} (ratio {tan_ratio:.2}), min rank-one D2W_hom {rank_one:.4} at angles ({:.2}, {:.2})",
            grad_err[0], grad_err[1], tan_err[0], tan_err[1], angles[0], angles[1]
        ),
    )
}

/// Area of the intersection of disks with radii `r`, `big` and centers `d` apart.
fn lens_area(r: f64, big: f64, d: f64) -> f64 {
    let a = ((d * d + r * r - big * big) / (2.0 * d * r)).clamp(-1.0, 1.0).acos();
    let b = ((d * d + big * big - r * r) / (2.0 * d * big)).clamp(-1.0, 1.0).acos();
    let k = ((-d + r + big) * (d + r - big) * (d - r + big) * (d + r + big)).max(0.0).sqrt();
    r * r * a + big * big * b - 0.5 * k
}

// 11
fn geometry() -> Outcome {
    let big = 0.3;
    let tess = disk();
    let tangent = LayeredTessellation::new([1.0, 0.0], vec![big], vec![1, 0]).expect("half-plane");
    let x = [big, 0.0];
    // radii below the distance to the nearest periodic image
    let radii: Vec<f64> = default_radii(8).into_iter().filter(|r| *r <= 0.25).collect();
    let seed = 11;
    let own = regularity_distance(&tess, &tess, x, 0.5, &radii, 100_000, seed).expect("distance").value;

    // exact mismatch fraction: half-ball on the disk side minus the lens
    let exact_m = |r: f64| 2.0 * (PI * r * r / 2.0 - lens_area(r, big, big)) / (PI * r * r);
    let exact = radii.iter().map(|r| r.powf(-0.5) * exact_m(*r).sqrt()).fold(0.0, f64::max);
    let limit = (2.0 / (3.0 * PI * big)).sqrt();
    let half = regularity_distance(&tess, &tangent, x, 0.5, &radii, 100_000, seed).expect("distance");
    let rel = (half.value / exact - 1.0).abs();

    let one = regularity_distance(&tess, &tangent, x, 1.0, &radii, 100_000, seed).expect("distance");
    let r: Vec<f64> = one.curve.iter().map(|c| c.0).collect();
    let v: Vec<f64> = one.curve.iter().map(|c| c.0.recip() * c.1.sqrt()).collect();
    let slope = fit_power_law(&r, &v).map_or(f64::NAN, |f| f.exponent);
    let slope_rel = (slope / -0.5 - 1.0).abs();
    Outcome::new(
        own == 0.0 && rel <= 0.10 && slope_rel <= 0.15,
        format!(
            "self distance {own}; s=1/2: MC {:.4} vs lens oracle {exact:.4} (rel {rel:.3}, small-r limit {limit:.4}); s=1 slope {slope:.3} vs -0.5 (rel {slope_rel:.3})",
            half.value
        ),
    )
}

fn csv_bodies(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("output dir")
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).expect("csv")))
        .collect();
    out.sort();
    out
}

// 12
fn determinism() -> Outcome {
    let runs: [(Scenario, &str); 4] = [
        (Scenario::TessRegularity, r#"{ "seed": 4, "tessellation": { "kind": "disk", "radius": 0.25 }, "geometry": { "centers": 4, "levels": 5, "samples": 20000 } }"#),
        (Scenario::HomEnergy, r#"{ "seed": 4, "tessellation": { "kind": "laminate" }, "grid": { "n": 8, "k_list": [1, 2] }, "samples": { "count": 2 }, "restarts": { "random": 2 } }"#),
        (Scenario::UniformLipschitz, r#"{ "seed": 4, "tessellation": { "kind": "disk", "radius": 0.3 }, "grid": { "n": 4, "periods": [4, 8] } }"#),
        (Scenario::BucklingSearch, r#"{ "seed": 4, "tessellation": { "kind": "laminate" }, "grid": { "n": 8, "k_list": [2] }, "samples": { "dists": [0.05, 0.3] }, "restarts": { "random": 2, "amplitude": 0.2 } }"#),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (scenario, json) in runs {
        let a = tempfile::tempdir().expect("tempdir");
        let b = tempfile::tempdir().expect("tempdir");
        run_config(scenario, json, a.path());
        run_config(scenario, json, b.path());
        let (ca, cb) = (csv_bodies(a.path()), csv_bodies(b.path()));
        let same = !ca.is_empty() && ca == cb;
        pass &= same;
        parts.push(format!("{} {} csv {}", scenario.name(), ca.len(), if same { "identical" } else { "DIFFER" }));
    }
    Outcome::new(pass, parts.join(", "))
}
