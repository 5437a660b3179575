use tentlab::geometry::{DomainGeometry, DomainKind};
use tentlab::projection::grid::{GridParams, QuadratureGrid};
use tentlab::projection::{default_truncation, BergmanProjection};
use tentlab::weights::{MatrixWeightField, WeightFamily, WeightSamples};

fn norm(grid: &QuadratureGrid, p: &BergmanProjection, field: &MatrixWeightField) -> f64 {
    let s = WeightSamples::on_grid(field, grid).unwrap();
    p.weighted_norm(grid, &s.w, &s.inv).unwrap().value
}

#[test]
fn dual_weight_gives_the_same_norm() {
    let grid =
        QuadratureGrid::build(&DomainGeometry::disc(), GridParams::default_for(DomainKind::Disc).with_size(48, 64))
            .unwrap();
    let p = BergmanProjection::assemble(&grid, 40, 2).unwrap();
    for family in [
        WeightFamily::RotatedDiagonal { alpha: 0.2667, winding: 1 },
        WeightFamily::DiagonalPower { alpha: 0.4, beta: 0.2 },
    ] {
        let field = MatrixWeightField::new(family.clone(), 2).unwrap();
        let (a, b) = (norm(&grid, &p, &field), norm(&grid, &p, &field.dual()));
        assert!((a - b).abs() <= 1e-6 * a, "{family:?}: {a} vs {b}");
    }
}

#[test]
fn weighted_norm_is_stable_under_refinement() {
    let params = GridParams::default_for(DomainKind::Disc);
    let n = default_truncation(DomainKind::Disc);
    let field = MatrixWeightField::new(WeightFamily::ScalarPower { alpha: 0.5 }, 1).unwrap();
    let base = QuadratureGrid::build(&DomainGeometry::disc(), params).unwrap();
    let fine = QuadratureGrid::build(&DomainGeometry::disc(), params.doubled()).unwrap();
    let a = norm(&base, &BergmanProjection::assemble(&base, n, 1).unwrap(), &field);
    let b = norm(&fine, &BergmanProjection::assemble(&fine, 2 * n, 1).unwrap(), &field);
    assert!(a > 1.0 && b > 1.0);
    assert!((b - a).abs() <= 0.02 * a, "{a} -> {b}");
}
