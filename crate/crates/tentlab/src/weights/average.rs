//! Quadrature averages of matrix fields over tents, kubes and the domain, and
//! the B2 constant.

use super::regions::GridFamily;
use super::WeightSamples;
use crate::dyadic::KubeRef;
use crate::error::{LabError, Result};
use crate::linalg::{self, CMat, NodeMatrices, PSD_TOLERANCE};
use crate::projection::grid::MIN_NODES_PER_KUBE;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    Omega,
    Tent { system: usize, cell: usize },
    Kube { system: usize, kube: KubeRef },
}

fn scale(m: CMat, s: f64) -> CMat {
    m * crate::geometry::C64::new(s, 0.0)
}

/// Averages of one matrix field over every kube and tent of one system.
#[derive(Clone, Debug)]
pub(crate) struct SystemAverages {
    pub kubes: Vec<CMat>,
    pub root: CMat,
    pub tents: Vec<CMat>,
}

impl SystemAverages {
    pub fn compute(gf: &GridFamily, l: usize, m: &NodeMatrices) -> Self {
        let d = m.d();
        let sys = gf.system(l);
        let w = gf.grid().weights();
        let mut kubes = vec![CMat::zeros(d, d); sys.num_cells()];
        let mut root = CMat::zeros(d, d);
        let a = gf.assignment(l);
        for (node, &wn) in w.iter().enumerate() {
            let target = match a.kube_of(node) {
                KubeRef::Root => &mut root,
                KubeRef::Cell(c) => &mut kubes[c],
            };
            let b = m.block(node);
            for (i, x) in target.iter_mut().enumerate() {
                // nalgebra storage is column-major, the node block row-major
                let (r, c) = (i % d, i / d);
                *x += b[r * d + c] * wn;
            }
        }
        let mut tents = kubes.clone();
        for k in (1..=sys.max_level()).rev() {
            for id in sys.level_range(k) {
                let p = sys.parent(id).unwrap();
                let child = tents[id].clone();
                tents[p] += child;
            }
        }
        for (c, t) in tents.iter_mut().enumerate() {
            *t /= crate::geometry::C64::new(gf.tent_volume(l, c), 0.0);
        }
        for (c, k) in kubes.iter_mut().enumerate() {
            *k /= crate::geometry::C64::new(gf.kube_volume(l, KubeRef::Cell(c)), 0.0);
        }
        let root = scale(root, 1.0 / gf.kube_volume(l, KubeRef::Root));
        SystemAverages { kubes, root, tents }
    }
}

pub(crate) fn omega_average(gf: &GridFamily, m: &NodeMatrices) -> CMat {
    let d = m.d();
    let w = gf.grid().weights();
    let mut acc = CMat::zeros(d, d);
    for (node, &wi) in w.iter().enumerate() {
        acc += scale(m.matrix(node), wi);
    }
    scale(acc, 1.0 / gf.grid().total_weight())
}

fn check_psd(m: &CMat, region: &Region) -> Result<()> {
    let (values, _) = linalg::eigen(m);
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(top > 0.0) || low < -PSD_TOLERANCE * top || linalg::hermitian_defect(m) > 1e-10 * top {
        return Err(LabError::Data(format!("average over {region:?} is not Hermitian PSD (eigenvalues {values:?})")));
    }
    Ok(())
}

/// `<W>_B = int_B W dV / |B|` by quadrature.
pub fn average_matrix(gf: &GridFamily, m: &NodeMatrices, region: Region) -> Result<CMat> {
    let w = gf.grid().weights();
    let nodes: Vec<usize> = match region {
        Region::Omega => (0..gf.grid().len()).collect(),
        Region::Tent { system, cell } => gf.tent_nodes(system, cell),
        Region::Kube { system, kube } => {
            let a = gf.assignment(system);
            (0..gf.grid().len()).filter(|&n| a.kube_of(n) == kube).collect()
        }
    };
    if nodes.len() < MIN_NODES_PER_KUBE {
        return Err(LabError::Resolution(format!("{region:?} holds {} quadrature nodes", nodes.len())));
    }
    let d = m.d();
    let mut acc = CMat::zeros(d, d);
    let mut vol = 0.0;
    for &n in &nodes {
        acc += scale(m.matrix(n), w[n]);
        vol += w[n];
    }
    let avg = scale(acc, 1.0 / vol);
    check_psd(&avg, &region)?;
    Ok(avg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct B2Report {
    /// Sup over all dyadic tents of every system and the domain.
    pub value: f64,
    /// Term of the whole domain.
    pub omega: f64,
    /// Sup over dyadic tents only.
    pub tents: f64,
    /// Sup over tents below the top level only.
    pub small_tents: f64,
    pub argmax: Region,
}

/// `B2(W) = sup_B ||<W>_B^{1/2} <W^{-1}>_B^{1/2}||^2` over the tents of every
/// system of the family and the domain.
pub fn b2_constant(gf: &GridFamily, samples: &WeightSamples) -> Result<B2Report> {
    let omega = linalg::b2_term(&omega_average(gf, &samples.w), &omega_average(gf, &samples.inv))?;
    let mut report = B2Report { value: omega, omega, tents: 0.0, small_tents: 0.0, argmax: Region::Omega };
    for l in 0..gf.len() {
        let a = SystemAverages::compute(gf, l, &samples.w);
        let b = SystemAverages::compute(gf, l, &samples.inv);
        let sys = gf.system(l);
        for cell in 0..sys.num_cells() {
            let t = linalg::b2_term(&a.tents[cell], &b.tents[cell])
                .map_err(|e| LabError::Data(format!("tent {cell} of system {l}: {e}")))?;
            report.tents = report.tents.max(t);
            if sys.level_of(cell) > 0 {
                report.small_tents = report.small_tents.max(t);
            }
            if t > report.value {
                report.value = t;
                report.argmax = Region::Tent { system: l, cell };
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainGeometry, C64};
    use crate::projection::grid::QuadratureGrid;
    use crate::weights::{MatrixWeightField, WeightFamily};
    use approx::assert_abs_diff_eq;
    use std::sync::OnceLock;

    fn disc() -> &'static GridFamily {
        static GF: OnceLock<GridFamily> = OnceLock::new();
        GF.get_or_init(|| GridFamily::for_grid(QuadratureGrid::default_for(&DomainGeometry::disc()).unwrap()).unwrap())
    }

    fn samples(fam: WeightFamily, d: usize) -> WeightSamples {
        WeightSamples::on_grid(&MatrixWeightField::new(fam, d).unwrap(), disc().grid()).unwrap()
    }

    #[test]
    fn identity_average_and_b2() {
        let s = samples(WeightFamily::Identity, 2);
        let avg = average_matrix(disc(), &s.w, Region::Tent { system: 4, cell: 13 }).unwrap();
        assert!((avg - CMat::identity(2, 2)).camax() < 1e-13);
        assert_abs_diff_eq!(b2_constant(disc(), &s).unwrap().value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn defect_average_over_disc() {
        // <(1 - |z|^2) I2>_disc = 1/2
        let s = samples(WeightFamily::DiagonalPower { alpha: 0.0, beta: 0.0 }, 2);
        let v =
            NodeMatrices::from_fn(disc().grid().len(), 2, |i| s.w.matrix(i) * C64::new(disc().grid().defect(i), 0.0));
        let avg = average_matrix(disc(), &v, Region::Omega).unwrap();
        assert!((avg - scale(CMat::identity(2, 2), 0.5)).camax() < 1e-9);
    }

    #[test]
    fn scalar_half_power_b2() {
        // <w>_disc <w^-1>_disc = (2/3) * 2
        let r = b2_constant(disc(), &samples(WeightFamily::ScalarPower { alpha: 0.5 }, 1)).unwrap();
        assert_abs_diff_eq!(r.omega, 4.0 / 3.0, epsilon = 1e-4);
        assert!(r.value >= r.omega && r.value < 1.45, "{r:?}");
    }

    #[test]
    fn constant_unitary_conjugation_commutes_with_average() {
        let s = samples(WeightFamily::DiagonalPower { alpha: 0.4, beta: -0.2 }, 2);
        let (c, sn) = (0.6, 0.8);
        let u =
            CMat::from_row_slice(2, 2, &[C64::new(c, 0.0), C64::new(0.0, -sn), C64::new(0.0, -sn), C64::new(c, 0.0)]);
        let rotated = NodeMatrices::from_fn(disc().grid().len(), 2, |i| &u * s.w.matrix(i) * u.adjoint());
        let region = Region::Kube { system: 2, kube: KubeRef::Cell(30) };
        let lhs = average_matrix(disc(), &rotated, region).unwrap();
        let rhs = &u * average_matrix(disc(), &s.w, region).unwrap() * u.adjoint();
        assert!((lhs - rhs).camax() < 1e-12);
    }

    #[test]
    fn diagonal_b2_is_max_of_blocks() {
        let diag = b2_constant(disc(), &samples(WeightFamily::DiagonalPower { alpha: 0.4, beta: 0.1 }, 2)).unwrap();
        let a = b2_constant(disc(), &samples(WeightFamily::ScalarPower { alpha: 0.4 }, 1)).unwrap();
        let b = b2_constant(disc(), &samples(WeightFamily::ScalarPower { alpha: -0.1 }, 1)).unwrap();
        assert_abs_diff_eq!(diag.value, a.value.max(b.value), epsilon = 1e-12);
    }
}
