//! Dyadic systems resolved on a quadrature grid: per-node kubes, quadrature
//! kube and tent volumes, and bottom-up tent sums.

use std::ops::AddAssign;

use crate::dyadic::{AdjacentFamily, DyadicSystem, KubeRef};
use crate::error::Result;
use crate::projection::grid::{KubeAssignment, QuadratureGrid};

#[derive(Clone, Debug)]
pub struct GridFamily {
    grid: QuadratureGrid,
    family: AdjacentFamily,
    assignments: Vec<KubeAssignment>,
    tent_volumes: Vec<Vec<f64>>,
    kube_volumes: Vec<Vec<f64>>,
    root_volumes: Vec<f64>,
}

impl GridFamily {
    /// Resolves every system of `family` on `grid`.
    pub fn new(grid: QuadratureGrid, family: AdjacentFamily) -> Result<Self> {
        let mut assignments = Vec::with_capacity(family.len());
        for sys in family.systems() {
            assignments.push(grid.assign(sys)?);
        }
        let mut out = GridFamily {
            grid,
            family,
            assignments,
            tent_volumes: Vec::new(),
            kube_volumes: Vec::new(),
            root_volumes: Vec::new(),
        };
        for l in 0..out.family.len() {
            let w = out.grid.weights();
            let (kubes, root) = out.kube_sums(l, |i| w[i]);
            out.tent_volumes.push(out.tent_sums(l, kubes.clone()));
            out.kube_volumes.push(kubes);
            out.root_volumes.push(root);
        }
        Ok(out)
    }

    /// Base and cousin systems of `grid`'s geometry at the analysis depth.
    pub fn for_grid(grid: QuadratureGrid) -> Result<Self> {
        let levels = grid.params().levels;
        let family = AdjacentFamily::build(grid.geom(), crate::dyadic::DEFAULT_S, levels)?.with_cousins();
        Self::new(grid, family)
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn family(&self) -> &AdjacentFamily {
        &self.family
    }

    pub fn len(&self) -> usize {
        self.family.len()
    }

    pub fn is_empty(&self) -> bool {
        self.family.is_empty()
    }

    pub fn system(&self, l: usize) -> &DyadicSystem {
        &self.family.systems()[l]
    }

    pub fn assignment(&self, l: usize) -> &KubeAssignment {
        &self.assignments[l]
    }

    /// Quadrature volume of the tent of `cell` in system `l`.
    pub fn tent_volume(&self, l: usize, cell: usize) -> f64 {
        self.tent_volumes[l][cell]
    }

    pub fn kube_volume(&self, l: usize, kube: KubeRef) -> f64 {
        match kube {
            KubeRef::Root => self.root_volumes[l],
            KubeRef::Cell(c) => self.kube_volumes[l][c],
        }
    }

    /// Whether a cell's kube is the whole tent (deepest level).
    pub fn is_tail(&self, l: usize, cell: usize) -> bool {
        let sys = self.system(l);
        sys.level_of(cell) == sys.max_level()
    }

    /// Per-kube sums of a node quantity, plus the root-region sum.
    pub fn kube_sums<T: Copy + Default + AddAssign>(&self, l: usize, f: impl Fn(usize) -> T) -> (Vec<T>, T) {
        let mut cells = vec![T::default(); self.system(l).num_cells()];
        let mut root = T::default();
        for (node, &k) in self.assignments[l].raw().iter().enumerate() {
            match self.assignments[l].kube_of(node) {
                KubeRef::Root => root += f(node),
                KubeRef::Cell(_) => cells[k as usize] += f(node),
            }
        }
        (cells, root)
    }

    /// Tent sums from kube sums: each tent is its kube plus its children's tents.
    pub fn tent_sums<T: Copy + AddAssign>(&self, l: usize, mut sums: Vec<T>) -> Vec<T> {
        let sys = self.system(l);
        for k in (1..=sys.max_level()).rev() {
            for id in sys.level_range(k) {
                let p = sys.parent(id).unwrap();
                let v = sums[id];
                sums[p] += v;
            }
        }
        sums
    }

    /// Nodes of the tent of `cell` in system `l`.
    pub fn tent_nodes(&self, l: usize, cell: usize) -> Vec<usize> {
        let sys = self.system(l);
        let level = sys.level_of(cell);
        self.assignments[l]
            .raw()
            .iter()
            .enumerate()
            .filter(|&(node, _)| match self.assignments[l].kube_of(node) {
                KubeRef::Root => false,
                KubeRef::Cell(mut c) => {
                    while sys.level_of(c) > level {
                        c = sys.parent(c).unwrap();
                    }
                    c == cell
                }
            })
            .map(|(node, _)| node)
            .collect()
    }

    /// Largest quadrature volume ratio of a parent tent to a child tent.
    pub fn parent_child_ratio(&self, l: usize) -> f64 {
        let sys = self.system(l);
        let mut worst: f64 = 1.0;
        for k in 1..=sys.max_level() {
            for id in sys.level_range(k) {
                let p = sys.parent(id).unwrap();
                worst = worst.max(self.tent_volumes[l][p] / self.tent_volumes[l][id]);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainGeometry;
    use crate::linalg::compensated_sum;
    use approx::assert_relative_eq;

    #[test]
    fn tents_and_root_tile_the_disc() {
        let g = QuadratureGrid::default_for(&DomainGeometry::disc()).unwrap();
        let total = g.total_weight();
        let gf = GridFamily::for_grid(g).unwrap();
        assert_eq!(gf.len(), 9);
        for l in 0..gf.len() {
            let sys = gf.system(l);
            let top = compensated_sum(sys.level_range(0).map(|c| gf.tent_volume(l, c)));
            assert_relative_eq!(top + gf.kube_volume(l, KubeRef::Root), total, max_relative = 1e-12);
            let c = sys.level_range(1).start;
            let w = gf.grid().weights();
            let vol: f64 = gf.tent_nodes(l, c).iter().map(|&i| w[i]).sum();
            assert_relative_eq!(vol, gf.tent_volume(l, c), max_relative = 1e-12);
        }
    }
}
