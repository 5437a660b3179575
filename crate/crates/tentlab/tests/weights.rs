use std::sync::OnceLock;

use approx::assert_relative_eq;
use tentlab::geometry::{DomainGeometry, C64};
use tentlab::linalg::{CMat, NodeMatrices};
use tentlab::projection::grid::QuadratureGrid;
use tentlab::projection::{holomorphic_embedding_ratio, BergmanProjection};
use tentlab::weights::{
    b2_constant, omega_field, reverse_holder_exponent, step_b2_check, GridFamily, MatrixWeightField, StepWeight,
    TildeWeight, WeightFamily, WeightSamples,
};

fn disc() -> &'static GridFamily {
    static GF: OnceLock<GridFamily> = OnceLock::new();
    GF.get_or_init(|| GridFamily::for_grid(QuadratureGrid::default_for(&DomainGeometry::disc()).unwrap()).unwrap())
}

fn constant(a: &CMat) -> WeightSamples {
    WeightSamples::from_matrices(NodeMatrices::from_fn(disc().grid().len(), a.nrows(), |_| a.clone())).unwrap()
}

fn psd() -> CMat {
    // Hermitian with eigenvalues 1 and 5.
    CMat::from_row_slice(
        2,
        2,
        &[
            C64::new(3.0, 0.0),
            C64::new(1.0, 1.7320508075688772),
            C64::new(1.0, -1.7320508075688772),
            C64::new(3.0, 0.0),
        ],
    )
}

#[test]
fn constant_matrix_weight_has_unit_b2_and_flat_omega() {
    let s = constant(&psd());
    let r = b2_constant(disc(), &s).unwrap();
    assert_relative_eq!(r.value, 1.0, epsilon = 1e-9);
    let step = StepWeight::build(disc(), 1, &s).unwrap();
    let v = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
    for cell in [0, 9, 40] {
        let om = omega_field(disc(), &step, cell, &v).unwrap();
        assert!(om.values.iter().all(|x| (x - 1.0).abs() < 1e-9), "cell {cell}");
        assert_eq!(reverse_holder_exponent(disc(), &om, 4.0).unwrap(), tentlab::weights::REVERSE_HOLDER_CAP);
    }
    assert!(step_b2_check(disc(), &step, r.value).unwrap() <= 1.0 + 1e-9);
}

#[test]
fn norm_is_invariant_under_scalar_multiples() {
    let grid = disc().grid();
    let p = BergmanProjection::assemble(grid, 48, 1).unwrap();
    let one = constant(&CMat::identity(1, 1));
    let seven = constant(&(CMat::identity(1, 1) * C64::new(7.0, 0.0)));
    let a = p.weighted_norm(grid, &one.w, &one.inv).unwrap().value;
    let b = p.weighted_norm(grid, &seven.w, &seven.inv).unwrap().value;
    assert_relative_eq!(a, b, max_relative = 1e-9);
    assert_relative_eq!(a, 1.0, epsilon = 0.02);
}

#[test]
fn embedding_ratio_of_half_power_is_stable_in_degree() {
    let grid = disc().grid();
    let field = MatrixWeightField::new(WeightFamily::ScalarPower { alpha: 0.5 }, 1).unwrap();
    let s = WeightSamples::on_grid(&field, grid).unwrap();
    let tilde = TildeWeight::build(disc(), &s).unwrap();
    let at = |deg| holomorphic_embedding_ratio(grid, &s.w, &tilde.samples.w, deg, 10, 3);
    let (d32, d64) = (at(32), at(64));
    assert!(d32.is_finite() && d32 > 0.0);
    assert!((d64 / d32 - 1.0).abs() < 0.05, "{d32} -> {d64}");

    let id = constant(&CMat::identity(2, 2));
    let tilde = TildeWeight::build(disc(), &id).unwrap();
    let r = holomorphic_embedding_ratio(grid, &id.w, &tilde.samples.w, 16, 10, 3);
    assert_relative_eq!(r, 1.0 / tilde.systems as f64, max_relative = 1e-9);
}
