//! Greedy separated nets and the induced cell tree on the unit sphere of C^2.

use rustc_hash::FxHashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LabError, Result};
use crate::geometry::{Point, C64};

/// Seed of the shared candidate sample.
pub const SPHERE_SAMPLE_SEED: u64 = 0x5EED_5A3B;
pub const MIN_SAMPLE: usize = 1 << 12;
pub const MAX_SAMPLE: usize = 1 << 20;

#[inline]
pub fn quasi_distance(p: &Point, q: &Point) -> f64 {
    (C64::new(1.0, 0.0) - p.inner(q)).norm()
}

/// Candidate sample size used for a finest separation `eps`.
pub fn default_sample_size(eps_finest: f64) -> usize {
    let want = (256.0 / (eps_finest * eps_finest)).ceil();
    (want.min(MAX_SAMPLE as f64) as usize).max(MIN_SAMPLE)
}

/// Uniform points on the unit sphere of C^2.
pub fn uniform_sphere_sample(count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let g: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let r = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r > 1e-12 {
                break Point::ball(C64::new(g[0] / r, g[1] / r), C64::new(g[2] / r, g[3] / r));
            }
        })
        .collect()
}

/// Euclidean bucket grid on R^4 sized so that quasi-distance `< eps` implies
/// membership in one of the 81 neighbouring buckets.
#[derive(Debug)]
pub struct SpatialHash {
    side: f64,
    buckets: FxHashMap<[i32; 4], Vec<(u32, Point)>>,
}

impl SpatialHash {
    pub fn new(eps: f64) -> Self {
        SpatialHash { side: (2.0 * eps).sqrt(), buckets: FxHashMap::default() }
    }

    fn key(&self, p: &Point) -> [i32; 4] {
        let c = [p.0[0].re, p.0[0].im, p.0[1].re, p.0[1].im];
        std::array::from_fn(|i| (c[i] / self.side).floor() as i32)
    }

    pub fn insert(&mut self, p: &Point, id: u32) {
        let k = self.key(p);
        self.buckets.entry(k).or_default().push((id, *p));
    }

    /// Calls `f` with every stored entry near `p`; stops early when `f` returns true.
    pub fn visit(&self, p: &Point, mut f: impl FnMut(u32, &Point) -> bool) {
        let k = self.key(p);
        for a in -1..=1 {
            for b in -1..=1 {
                for c in -1..=1 {
                    for d in -1..=1 {
                        if let Some(ids) = self.buckets.get(&[k[0] + a, k[1] + b, k[2] + c, k[3] + d]) {
                            for (id, q) in ids {
                                if f(*id, q) {
                                    return;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Nested greedy nets over a candidate sample with the induced cell tree.
#[derive(Debug, Clone)]
pub struct SphereTree {
    pub(crate) sample: std::sync::Arc<Vec<Point>>,
    /// Net points of each level (sample indices); siblings are contiguous.
    pub(crate) nets: Vec<Vec<u32>>,
    /// Parent position (in the previous level) of each net point.
    pub(crate) parents: Vec<Vec<u32>>,
    /// Finest-level cell owning each sample point.
    pub(crate) owner: Vec<u32>,
    pub(crate) separations: Vec<f64>,
}

impl SphereTree {
    pub fn build(
        sample: std::sync::Arc<Vec<Point>>,
        s: u32,
        delta: f64,
        max_level: usize,
        order_seed: u64,
    ) -> Result<Self> {
        let m = sample.len();
        let mut order: Vec<u32> = (0..m as u32).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(order_seed));
        let separations: Vec<f64> = (0..=max_level).map(|k| delta / (s as f64).powi(k as i32)).collect();

        let mut nets: Vec<Vec<u32>> = Vec::with_capacity(max_level + 1);
        for (k, &eps) in separations.iter().enumerate() {
            let mut net: Vec<u32> = if k == 0 { Vec::new() } else { nets[k - 1].clone() };
            let mut hash = SpatialHash::new(eps);
            for (pos, &idx) in net.iter().enumerate() {
                hash.insert(&sample[idx as usize], pos as u32);
            }
            for &idx in &order {
                let x = &sample[idx as usize];
                let mut covered = false;
                hash.visit(x, |_, q| {
                    if quasi_distance(x, q) < eps {
                        covered = true;
                    }
                    covered
                });
                if !covered {
                    hash.insert(x, net.len() as u32);
                    net.push(idx);
                }
            }
            if k > 0 && net.len() == nets[k - 1].len() {
                return Err(LabError::Construction(format!(
                    "candidate sample of {m} points too coarse for level {k} (separation {eps:e})"
                )));
            }
            nets.push(net);
        }

        // Nearest-parent assignment, ties to the lower index.
        let mut parents: Vec<Vec<u32>> = vec![Vec::new()];
        for k in 1..=max_level {
            let eps = separations[k - 1];
            let prev = &nets[k - 1];
            let mut hash = SpatialHash::new(eps);
            for (pos, &idx) in prev.iter().enumerate() {
                hash.insert(&sample[idx as usize], pos as u32);
            }
            let mut par = Vec::with_capacity(nets[k].len());
            for &idx in &nets[k] {
                let x = &sample[idx as usize];
                let mut best = (f64::INFINITY, u32::MAX);
                hash.visit(x, |pos, q| {
                    let d = quasi_distance(x, q);
                    if d < best.0 || (d == best.0 && pos < best.1) {
                        best = (d, pos);
                    }
                    false
                });
                if best.1 == u32::MAX {
                    return Err(LabError::Construction(format!("level-{k} point without parent")));
                }
                par.push(best.1);
            }
            parents.push(par);
        }

        // Reorder each level so that siblings are contiguous.
        for k in 1..=max_level {
            let mut perm: Vec<usize> = (0..nets[k].len()).collect();
            perm.sort_by_key(|&i| (parents[k][i], i));
            let new_net: Vec<u32> = perm.iter().map(|&i| nets[k][i]).collect();
            let new_par: Vec<u32> = perm.iter().map(|&i| parents[k][i]).collect();
            let mut inverse = vec![0u32; perm.len()];
            for (new_pos, &old) in perm.iter().enumerate() {
                inverse[old] = new_pos as u32;
            }
            nets[k] = new_net;
            parents[k] = new_par;
            if k < max_level {
                for p in parents[k + 1].iter_mut() {
                    *p = inverse[*p as usize];
                }
            }
        }

        let mut tree = SphereTree { sample, nets, parents, owner: Vec::new(), separations };
        let finest = tree.finest_hash();
        let owner: Vec<u32> = (0..m).map(|i| tree.nearest_finest(&finest, &tree.sample[i])).collect();
        tree.owner = owner;
        Ok(tree)
    }

    pub fn levels(&self) -> usize {
        self.nets.len()
    }

    pub fn level_len(&self, k: usize) -> usize {
        self.nets[k].len()
    }

    pub fn sample(&self) -> &[Point] {
        &self.sample
    }

    pub fn reference(&self, k: usize, pos: usize) -> Point {
        self.sample[self.nets[k][pos] as usize]
    }

    pub fn parent(&self, k: usize, pos: usize) -> Option<usize> {
        if k == 0 {
            None
        } else {
            Some(self.parents[k][pos] as usize)
        }
    }

    /// Children positions (in level `k + 1`) of cell `pos` at level `k`.
    pub fn children(&self, k: usize, pos: usize) -> std::ops::Range<usize> {
        if k + 1 >= self.levels() {
            return 0..0;
        }
        let par = &self.parents[k + 1];
        let start = par.partition_point(|&p| (p as usize) < pos);
        let end = par.partition_point(|&p| (p as usize) <= pos);
        start..end
    }

    pub fn finest_hash(&self) -> SpatialHash {
        let l = self.levels() - 1;
        let mut hash = SpatialHash::new(self.separations[l]);
        for (pos, &idx) in self.nets[l].iter().enumerate() {
            hash.insert(&self.sample[idx as usize], pos as u32);
        }
        hash
    }

    /// Finest cell of an arbitrary unit vector: nearest finest net point.
    pub fn nearest_finest(&self, hash: &SpatialHash, p: &Point) -> u32 {
        let l = self.levels() - 1;
        let net = &self.nets[l];
        let mut best = (f64::INFINITY, u32::MAX);
        hash.visit(p, |pos, q| {
            let d = quasi_distance(p, q);
            if d < best.0 || (d == best.0 && pos < best.1) {
                best = (d, pos);
            }
            false
        });
        if best.1 != u32::MAX && best.0 < self.separations[l] {
            return best.1;
        }
        // Off-sample point farther than the cover radius: exhaustive scan.
        for (pos, &idx) in net.iter().enumerate() {
            let d = quasi_distance(p, &self.sample[idx as usize]);
            if d < best.0 || (d == best.0 && (pos as u32) < best.1) {
                best = (d, pos as u32);
            }
        }
        best.1
    }

    /// Ancestor at level `k` of the finest cell `pos`.
    pub fn ancestor(&self, mut pos: usize, k: usize) -> usize {
        let mut level = self.levels() - 1;
        while level > k {
            pos = self.parents[level][pos] as usize;
            level -= 1;
        }
        pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn sample_is_on_sphere() {
        for p in uniform_sphere_sample(100, 3) {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_tree_is_consistent() {
        let sample = Arc::new(uniform_sphere_sample(4096, 1));
        let tree = SphereTree::build(sample, 2, 0.45, 2, 7).unwrap();
        for k in 1..tree.levels() {
            for pos in 0..tree.level_len(k) {
                let par = tree.parent(k, pos).unwrap();
                assert!(tree.children(k - 1, par).contains(&pos));
            }
        }
        let total: usize = (0..tree.level_len(0)).map(|p| tree.children(0, p).len()).sum();
        assert_eq!(total, tree.level_len(1));
    }
}
