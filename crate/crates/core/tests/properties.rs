use cellhom_core::energy::dist::{dist2_so2, dist_so2};
use cellhom_core::regularity::{excess, CellOracle, Window};
use cellhom_core::tensor::rotation;
use cellhom_core::{CellProblem, Grid, HeterogeneousField, Mat2, MonotoneCoefficient, StoredEnergy, Tessellation};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = Mat2> {
    prop::array::uniform4(-2.0..2.0f64).prop_map(|v| Mat2::new(v[0], v[1], v[2], v[3]))
}

fn laminate(theta: f64, moduli: [f64; 2]) -> CellProblem<MonotoneCoefficient> {
    let tess = Tessellation::laminate_e2_fraction(theta, 0, 1);
    let field = HeterogeneousField::new(tess, moduli.iter().map(|&l| MonotoneCoefficient::linear(l)).collect()).unwrap();
    CellProblem::new(field, 16, 1)
}

proptest! {
    #[test]
    fn distance_and_energy_are_frame_indifferent(f in matrix(), theta in -3.2..3.2f64) {
        let r = rotation(theta);
        let w = StoredEnergy::new(1.0, 0.1, 4.0);
        prop_assert!((dist_so2(&(r * f)) - dist_so2(&f)).abs() < 1e-12);
        let (a, b) = (w.eval(&(r * f)), w.eval(&f));
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn uniaxial_stretch_is_at_distance_of_the_stretch(theta in -3.2..3.2f64, s in 0.0..1.0f64) {
        let r = rotation(theta);
        prop_assert!(dist2_so2(&r) < 1e-14);
        let stretched = r * Mat2::new(1.0 + s, 0.0, 0.0, 1.0);
        prop_assert!((dist_so2(&stretched) - s).abs() < 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn determinant_is_a_null_lagrangian_for_correctors(f in matrix()) {
        let corr = laminate(0.5, [1.0, 4.0]).solve_corrector(f).unwrap();
        prop_assert!(corr.det_defect() < 1e-10 * (1.0 + f.norm_squared()));
        prop_assert!(corr.residual < 1e-8);
    }
}

#[test]
fn laminate_means_are_harmonic_across_and_arithmetic_along_the_layers() {
    for theta in [0.25, 0.5, 0.75] {
        let (l0, l1) = (1.0, 4.0);
        let cell = laminate(theta, [l0, l1]);
        let across = Mat2::new(0.0, 1.0, 0.0, 0.0);
        let along = Mat2::new(1.0, 0.0, 0.0, 0.0);
        let harmonic = 1.0 / (theta / l0 + (1.0 - theta) / l1);
        let arithmetic = theta * l0 + (1.0 - theta) * l1;
        let a_across = cell.solve_corrector(across).unwrap().a0;
        let a_along = cell.solve_corrector(along).unwrap().a0;
        assert!((a_across - across * harmonic).norm() < 1e-10, "theta {theta}: {a_across}");
        assert!((a_along - along * arithmetic).norm() < 1e-10, "theta {theta}: {a_along}");
    }
}

#[test]
fn homogeneous_excess_equals_the_plain_excess_of_a_harmonic_quadratic() {
    let tess = Tessellation::homogeneous(0);
    let field = HeterogeneousField::new(tess.clone(), vec![MonotoneCoefficient::linear(2.0)]).unwrap();
    let oracle = CellOracle::new(field, 4);
    let grid = Grid::periodic(&tess, 4, 8, 1.0);
    let q = 0.3;
    let base = Mat2::new(1.0, 0.2, -0.1, 0.9);
    // u = F x + q (x1² − x2², 2 x1 x2)
    let g: Vec<Mat2> = (0..grid.elements())
        .flat_map(|e| (0..4).map(move |k| (e, k)))
        .map(|(e, k)| {
            let [x, y] = grid.qp_position(e, k);
            base + Mat2::new(2.0 * x, -2.0 * y, 2.0 * y, 2.0 * x) * q
        })
        .collect();
    for side in [1.0, 2.0, 4.0] {
        let v = excess(&grid, &g, &Window { center: [0.0, 0.0], side }, &oracle).unwrap();
        let exact = 2.0 * q * side / 3f64.sqrt();
        assert!((v.plain - exact).abs() < 1e-12, "side {side}: {} vs {exact}", v.plain);
        assert!((v.value - v.plain).abs() < 1e-9 * exact, "side {side}: {} vs {}", v.value, v.plain);
        assert!(!v.fallback);
    }
}
