//! Dyadic boundary cells, tents over them, kubes, adjacent families and
//! cousin systems with modified tent heights.

pub mod cache;
pub mod sphere;

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::geometry::{BoundaryPoint, DomainGeometry, DomainKind, Point};
use sphere::{quasi_distance, SpatialHash, SphereTree};

pub const DEFAULT_S: u32 = 2;
pub const DISC_BASE_ARCS: usize = 8;
pub const DEFAULT_DISC_MAX_LEVEL: usize = 16;
pub const MAX_DISC_LEVEL: usize = 24;
pub const MAX_BALL_LEVEL: usize = 10;
/// Measure tolerance for the partition and nesting checks.
pub const PARTITION_TOLERANCE: f64 = 1e-12;
/// One-third shifts of the base arc length.
pub const SHIFTS: [f64; 3] = [0.0, 1.0 / 3.0, 2.0 / 3.0];

/// Tent-height multiplier of a (cousin) system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeightMultiplier {
    Base,
    /// `(s + 2) / 3`
    Raised,
    /// `(2s + 1) / (3s)`
    Lowered,
}

impl HeightMultiplier {
    pub const ALL: [HeightMultiplier; 3] =
        [HeightMultiplier::Base, HeightMultiplier::Raised, HeightMultiplier::Lowered];

    pub fn value(&self, s: u32) -> f64 {
        let s = s as f64;
        match self {
            HeightMultiplier::Base => 1.0,
            HeightMultiplier::Raised => (s + 2.0) / 3.0,
            HeightMultiplier::Lowered => (2.0 * s + 1.0) / (3.0 * s),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            HeightMultiplier::Base => 0,
            HeightMultiplier::Raised => 1,
            HeightMultiplier::Lowered => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

/// A kube: either the root region or the kube of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KubeRef {
    Root,
    Cell(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CellExtent {
    /// Half-open arc `[start, start + length)` in radians.
    Arc { start: f64, length: f64 },
    /// Voronoi-style cell holding this many candidate-sample points.
    Sampled { samples: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicCell {
    pub id: usize,
    pub level: usize,
    pub index: usize,
    pub parent: Option<usize>,
    pub children: Range<usize>,
    pub reference: BoundaryPoint,
    pub extent: CellExtent,
    /// Boundary measure of the cell.
    pub measure: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tent {
    pub cell: usize,
    pub level: usize,
    pub height: f64,
    pub volume: f64,
    pub kube_volume: f64,
}

#[derive(Clone, Debug)]
enum Partition {
    Disc { base_arcs: usize, offset: f64 },
    Sphere { tree: Arc<SphereTree>, measures: Arc<Vec<Vec<f64>>>, hash: Arc<SpatialHash> },
}

/// One dyadic tree of boundary cells with its tents and kubes.
#[derive(Clone, Debug)]
pub struct DyadicSystem {
    geom: DomainGeometry,
    s: u32,
    delta: f64,
    shift: f64,
    multiplier: HeightMultiplier,
    max_level: usize,
    level_start: Vec<usize>,
    partition: Partition,
}

/// Seed of the greedy insertion order for a sphere system with shift label `t`.
pub fn sphere_order_seed(shift: f64) -> u64 {
    0xD1AD_0000 + (shift * 3.0).round() as u64
}

fn validate(geom: &DomainGeometry, s: u32, delta: f64, max_level: usize) -> Result<()> {
    if s < 2 {
        return Err(LabError::InvalidParameter(format!("s = {s} must be at least 2")));
    }
    if !(delta > 0.0 && delta < geom.epsilon0()) {
        return Err(LabError::InvalidParameter(format!("delta = {delta} not in (0, epsilon0 = {})", geom.epsilon0())));
    }
    let cap = match geom.kind() {
        DomainKind::Disc => MAX_DISC_LEVEL,
        DomainKind::Ball2 => MAX_BALL_LEVEL,
    };
    if max_level > cap {
        return Err(LabError::InvalidParameter(format!("max_level {max_level} exceeds {cap}")));
    }
    Ok(())
}

impl DyadicSystem {
    /// Builds one system. Disc cells are shifted dyadic arcs; ball cells come
    /// from nested greedy nets over a uniform candidate sample.
    pub fn build(geom: &DomainGeometry, s: u32, delta: f64, shift: f64, max_level: usize) -> Result<Self> {
        validate(geom, s, delta, max_level)?;
        match geom.kind() {
            DomainKind::Disc => Ok(Self::disc(geom, s, delta, shift, max_level)),
            DomainKind::Ball2 => {
                let eps = delta / (s as f64).powi(max_level as i32);
                let sample = Arc::new(sphere::uniform_sphere_sample(
                    sphere::default_sample_size(eps),
                    sphere::SPHERE_SAMPLE_SEED,
                ));
                Self::sphere(geom, s, delta, shift, max_level, sample)
            }
        }
    }

    fn disc(geom: &DomainGeometry, s: u32, delta: f64, shift: f64, max_level: usize) -> Self {
        let base_arcs = DISC_BASE_ARCS;
        let mut level_start = vec![0usize];
        for k in 0..=max_level {
            let n = base_arcs * (s as usize).pow(k as u32);
            level_start.push(level_start[k] + n);
        }
        let offset = shift * 2.0 * PI / base_arcs as f64;
        DyadicSystem {
            geom: *geom,
            s,
            delta,
            shift,
            multiplier: HeightMultiplier::Base,
            max_level,
            level_start,
            partition: Partition::Disc { base_arcs, offset },
        }
    }

    /// Ball system over a given candidate sample (shared across a family).
    pub fn sphere(
        geom: &DomainGeometry,
        s: u32,
        delta: f64,
        shift: f64,
        max_level: usize,
        sample: Arc<Vec<Point>>,
    ) -> Result<Self> {
        validate(geom, s, delta, max_level)?;
        if geom.kind() != DomainKind::Ball2 {
            return Err(LabError::InvalidParameter("sphere systems need the ball geometry".into()));
        }
        let tree = SphereTree::build(sample, s, delta, max_level, sphere_order_seed(shift))?;
        Ok(Self::from_tree(geom, s, delta, shift, max_level, tree))
    }

    pub(crate) fn from_tree(
        geom: &DomainGeometry,
        s: u32,
        delta: f64,
        shift: f64,
        max_level: usize,
        tree: SphereTree,
    ) -> Self {
        let weight = geom.boundary_area() / tree.sample().len() as f64;
        let mut counts: Vec<Vec<u32>> = (0..=max_level).map(|k| vec![0; tree.level_len(k)]).collect();
        for &own in &tree.owner {
            let mut pos = own as usize;
            for k in (0..=max_level).rev() {
                counts[k][pos] += 1;
                if k > 0 {
                    pos = tree.parents[k][pos] as usize;
                }
            }
        }
        let measures: Vec<Vec<f64>> =
            counts.iter().map(|level| level.iter().map(|&c| c as f64 * weight).collect()).collect();
        let mut level_start = vec![0usize];
        for k in 0..=max_level {
            level_start.push(level_start[k] + tree.level_len(k));
        }
        let hash = tree.finest_hash();
        DyadicSystem {
            geom: *geom,
            s,
            delta,
            shift,
            multiplier: HeightMultiplier::Base,
            max_level,
            level_start,
            partition: Partition::Sphere { tree: Arc::new(tree), measures: Arc::new(measures), hash: Arc::new(hash) },
        }
    }

    /// Cousin of this system: same cells, tent heights scaled by `m`.
    pub fn with_multiplier(&self, m: HeightMultiplier) -> Self {
        let mut out = self.clone();
        out.multiplier = m;
        out
    }

    pub fn geom(&self) -> &DomainGeometry {
        &self.geom
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn multiplier(&self) -> HeightMultiplier {
        self.multiplier
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn num_cells(&self) -> usize {
        *self.level_start.last().unwrap()
    }

    pub fn level_range(&self, k: usize) -> Range<usize> {
        self.level_start[k]..self.level_start[k + 1]
    }

    pub fn level_of(&self, id: usize) -> usize {
        self.level_start.partition_point(|&st| st <= id) - 1
    }

    pub(crate) fn sphere_tree(&self) -> Option<&Arc<SphereTree>> {
        match &self.partition {
            Partition::Sphere { tree, .. } => Some(tree),
            Partition::Disc { .. } => None,
        }
    }

    /// Tent height `s^{-k} delta` times the system multiplier.
    pub fn height(&self, level: usize) -> f64 {
        self.delta * self.multiplier.value(self.s) / (self.s as f64).powi(level as i32)
    }

    /// Unscaled dyadic length `s^{-k} delta`.
    pub fn scale(&self, level: i32) -> f64 {
        self.delta / (self.s as f64).powi(level)
    }

    fn arc_length(&self, level: usize) -> f64 {
        match self.partition {
            Partition::Disc { base_arcs, .. } => 2.0 * PI / (base_arcs * (self.s as usize).pow(level as u32)) as f64,
            Partition::Sphere { .. } => f64::NAN,
        }
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        let k = self.level_of(id);
        if k == 0 {
            return None;
        }
        let index = id - self.level_start[k];
        match &self.partition {
            Partition::Disc { .. } => Some(self.level_start[k - 1] + index / self.s as usize),
            Partition::Sphere { tree, .. } => Some(self.level_start[k - 1] + tree.parents[k][index] as usize),
        }
    }

    pub fn children(&self, id: usize) -> Range<usize> {
        let k = self.level_of(id);
        if k >= self.max_level {
            return 0..0;
        }
        let index = id - self.level_start[k];
        let base = self.level_start[k + 1];
        match &self.partition {
            Partition::Disc { .. } => {
                let s = self.s as usize;
                base + index * s..base + (index + 1) * s
            }
            Partition::Sphere { tree, .. } => {
                let r = tree.children(k, index);
                base + r.start..base + r.end
            }
        }
    }

    pub fn measure(&self, id: usize) -> f64 {
        let k = self.level_of(id);
        match &self.partition {
            Partition::Disc { .. } => self.arc_length(k),
            Partition::Sphere { measures, .. } => measures[k][id - self.level_start[k]],
        }
    }

    pub fn reference(&self, id: usize) -> BoundaryPoint {
        let k = self.level_of(id);
        let index = id - self.level_start[k];
        match &self.partition {
            Partition::Disc { offset, .. } => {
                let len = self.arc_length(k);
                BoundaryPoint::from_angle(offset + (index as f64 + 0.5) * len)
            }
            Partition::Sphere { tree, .. } => {
                BoundaryPoint::normalize(tree.reference(k, index)).expect("net points lie on the sphere")
            }
        }
    }

    pub fn cell(&self, id: usize) -> DyadicCell {
        let level = self.level_of(id);
        let index = id - self.level_start[level];
        let extent = match &self.partition {
            Partition::Disc { offset, .. } => {
                let len = self.arc_length(level);
                CellExtent::Arc { start: offset + index as f64 * len, length: len }
            }
            Partition::Sphere { tree, measures, .. } => {
                let w = self.geom.boundary_area() / tree.sample().len() as f64;
                CellExtent::Sampled { samples: (measures[level][index] / w).round() as usize }
            }
        };
        DyadicCell {
            id,
            level,
            index,
            parent: self.parent(id),
            children: self.children(id),
            reference: self.reference(id),
            extent,
            measure: self.measure(id),
        }
    }

    pub fn tent_volume(&self, id: usize) -> f64 {
        let h = self.height(self.level_of(id));
        self.measure(id) * self.geom.layer_factor(h, 0.0)
    }

    pub fn kube_volume(&self, id: usize) -> f64 {
        let k = self.level_of(id);
        if k == self.max_level {
            return self.tent_volume(id);
        }
        let (h, h_next) = (self.height(k), self.height(k + 1));
        self.measure(id) * self.geom.layer_factor(h, h_next)
    }

    /// Volume of the root region `|z| <= 1 - height(0)`.
    pub fn root_volume(&self) -> f64 {
        self.geom.centered_ball_volume(1.0 - self.height(0))
    }

    pub fn tent(&self, id: usize) -> Tent {
        let level = self.level_of(id);
        Tent {
            cell: id,
            level,
            height: self.height(level),
            volume: self.tent_volume(id),
            kube_volume: self.kube_volume(id),
        }
    }

    /// Global id of the level-`k` cell containing the boundary point `p`.
    pub fn cell_at_level(&self, k: usize, p: &BoundaryPoint) -> usize {
        match &self.partition {
            Partition::Disc { offset, .. } => {
                let len = self.arc_length(k);
                let n = self.level_start[k + 1] - self.level_start[k];
                let x = (p.angle() - offset).rem_euclid(2.0 * PI);
                let j = ((x / len).floor() as usize).min(n - 1);
                self.level_start[k] + j
            }
            Partition::Sphere { tree, hash, .. } => {
                let finest = tree.nearest_finest(hash, p.point()) as usize;
                self.level_start[k] + tree.ancestor(finest, k)
            }
        }
    }

    /// Level of the kube layer holding points at depth `t = 1 - |z|`; `None`
    /// for the root region. Layer boundaries go to the lower level.
    pub fn layer_of_depth(&self, t: f64) -> Option<usize> {
        if t >= self.height(0) {
            return None;
        }
        let mut k = 0;
        while k < self.max_level && t < self.height(k + 1) {
            k += 1;
        }
        Some(k)
    }

    pub fn locate_kube(&self, z: &Point) -> KubeRef {
        let r = z.norm();
        match self.layer_of_depth(1.0 - r) {
            None => KubeRef::Root,
            Some(k) => {
                let p = BoundaryPoint::normalize(*z).expect("points near the boundary are nonzero");
                KubeRef::Cell(self.cell_at_level(k, &p))
            }
        }
    }

    pub fn tent_contains(&self, id: usize, z: &Point) -> bool {
        let k = self.level_of(id);
        let t = 1.0 - z.norm();
        if !(t < self.height(k)) || t <= 0.0 {
            return false;
        }
        match BoundaryPoint::normalize(*z) {
            Ok(p) => self.cell_at_level(k, &p) == id,
            Err(_) => false,
        }
    }

    /// Ids of all tents containing `z`, coarsest first.
    pub fn tents_containing(&self, z: &Point) -> Vec<usize> {
        let t = 1.0 - z.norm();
        let Ok(p) = BoundaryPoint::normalize(*z) else {
            return Vec::new();
        };
        let deepest = match self.layer_of_depth(t) {
            None => return Vec::new(),
            Some(k) => k,
        };
        let mut id = self.cell_at_level(deepest, &p);
        let mut out = vec![id];
        while let Some(par) = self.parent(id) {
            out.push(par);
            id = par;
        }
        out.reverse();
        out
    }

    /// Sandwich constants: largest `c` and smallest `C` with
    /// `B(p, c s^{-k} delta) within Q within B(p, C s^{-k} delta)` for every cell.
    pub fn sandwich_constants(&self) -> (f64, f64) {
        match &self.partition {
            Partition::Disc { .. } => {
                let mut c_min = f64::INFINITY;
                let mut c_max: f64 = 0.0;
                for id in 0..self.num_cells() {
                    let cell = self.cell(id);
                    let CellExtent::Arc { start, length } = cell.extent else { unreachable!() };
                    let scale = self.scale(cell.level as i32);
                    let d_start = self.geom.boundary_distance(&cell.reference, &BoundaryPoint::from_angle(start));
                    let d_end =
                        self.geom.boundary_distance(&cell.reference, &BoundaryPoint::from_angle(start + length));
                    c_min = c_min.min(d_start.min(d_end) / scale);
                    c_max = c_max.max(d_start.max(d_end) / scale);
                }
                (c_min, c_max)
            }
            Partition::Sphere { tree, .. } => sphere_sandwich(self, tree),
        }
    }

    /// Runs every structural invariant and reports violations.
    pub fn check_invariants(&self) -> DyadicReport {
        let mut violations = Vec::new();
        let omega = self.geom.volume();
        let mut kube_volumes = vec![self.root_volume()];
        let mut kappa = f64::INFINITY;
        let mut max_children = 0usize;
        let area = self.geom.boundary_area();
        for k in 0..=self.max_level {
            let mut level_measures = Vec::with_capacity(self.level_range(k).len());
            for id in self.level_range(k) {
                let (tent, kube) = (self.tent_volume(id), self.kube_volume(id));
                kube_volumes.push(kube);
                level_measures.push(self.measure(id));
                if !(kube > 0.0 && kube <= tent * (1.0 + 1e-12)) {
                    violations.push(format!("cell {id}: kube volume {kube} vs tent {tent}"));
                }
                kappa = kappa.min(kube / tent);
                let ch = self.children(id);
                max_children = max_children.max(ch.len());
                if k < self.max_level {
                    if ch.is_empty() {
                        violations.push(format!("cell {id} has no children"));
                    }
                    let child_measure: f64 = ch.clone().map(|c| self.measure(c)).sum();
                    if (child_measure - self.measure(id)).abs() > PARTITION_TOLERANCE {
                        violations.push(format!("cell {id}: children measure {child_measure} != {}", self.measure(id)));
                    }
                    for c in ch {
                        if self.parent(c) != Some(id) {
                            violations.push(format!("cell {c}: parent link broken"));
                        }
                        if !self.nested_in(c, id) {
                            violations.push(format!("cell {c} not nested in {id}"));
                        }
                    }
                }
            }
            let level_measure = crate::linalg::compensated_sum(level_measures);
            if (level_measure - area).abs() > PARTITION_TOLERANCE {
                violations.push(format!("level {k}: cells cover measure {level_measure} of {area}"));
            }
        }
        let kube_sum = crate::linalg::compensated_sum(kube_volumes);
        let exhaustion_defect = (kube_sum - omega).abs();
        if exhaustion_defect > 1e-10 {
            violations.push(format!("kube volumes sum to {kube_sum}, expected {omega}"));
        }
        let (c_in, c_out) = self.sandwich_constants();
        if !(c_in > 0.0 && c_out.is_finite() && c_in <= c_out) {
            violations.push(format!("sandwich constants degenerate: c = {c_in}, C = {c_out}"));
        }
        DyadicReport {
            cells: self.num_cells(),
            max_children,
            kappa,
            exhaustion_defect,
            sandwich_inner: c_in,
            sandwich_outer: c_out,
            violations,
        }
    }

    fn nested_in(&self, child: usize, parent: usize) -> bool {
        match &self.partition {
            Partition::Disc { .. } => {
                let (c, p) = (self.cell(child), self.cell(parent));
                let (CellExtent::Arc { start: cs, length: cl }, CellExtent::Arc { start: ps, length: pl }) =
                    (c.extent, p.extent)
                else {
                    return false;
                };
                cs >= ps - 1e-12 && cs + cl <= ps + pl + 1e-12
            }
            Partition::Sphere { .. } => self.parent(child) == Some(parent),
        }
    }
}

fn sphere_sandwich(system: &DyadicSystem, tree: &SphereTree) -> (f64, f64) {
    let levels = tree.levels();
    let sample = tree.sample();
    let mut outer: Vec<Vec<f64>> = (0..levels).map(|k| vec![0.0; tree.level_len(k)]).collect();
    let mut inner: Vec<Vec<f64>> = (0..levels).map(|k| vec![tree.separations[k]; tree.level_len(k)]).collect();
    // Ancestors of every sample, finest first.
    let mut chain = vec![0usize; levels];
    for (i, x) in sample.iter().enumerate() {
        let mut pos = tree.owner[i] as usize;
        for k in (0..levels).rev() {
            chain[k] = pos;
            let d = quasi_distance(x, &tree.reference(k, pos));
            if d > outer[k][pos] {
                outer[k][pos] = d;
            }
            if k > 0 {
                pos = tree.parents[k][pos] as usize;
            }
        }
    }
    for (k, inner_k) in inner.iter_mut().enumerate() {
        let eps = tree.separations[k];
        let mut hash = SpatialHash::new(eps);
        for pos in 0..tree.level_len(k) {
            hash.insert(&tree.reference(k, pos), pos as u32);
        }
        for (i, x) in sample.iter().enumerate() {
            let own = tree.ancestor(tree.owner[i] as usize, k);
            hash.visit(x, |pos, q| {
                let pos = pos as usize;
                if pos != own {
                    let d = quasi_distance(x, q);
                    if d < inner_k[pos] {
                        inner_k[pos] = d;
                    }
                }
                false
            });
        }
    }
    let mut c_min = f64::INFINITY;
    let mut c_max: f64 = 0.0;
    for k in 0..levels {
        let scale = system.scale(k as i32);
        for pos in 0..tree.level_len(k) {
            c_min = c_min.min(inner[k][pos] / scale);
            c_max = c_max.max(outer[k][pos] / scale);
        }
    }
    (c_min, c_max)
}

/// Outcome of `DyadicSystem::check_invariants`.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicReport {
    pub cells: usize,
    pub max_children: usize,
    /// Smallest `|K| / |K^|`.
    pub kappa: f64,
    pub exhaustion_defect: f64,
    pub sandwich_inner: f64,
    pub sandwich_outer: f64,
    pub violations: Vec<String>,
}

impl DyadicReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reference points of the level-`k` net: equispaced angles on the circle,
/// greedy maximal nets on the sphere.
pub fn build_separated_net(geom: &DomainGeometry, s: u32, delta: f64, level: usize) -> Result<Vec<BoundaryPoint>> {
    let system = DyadicSystem::build(geom, s, delta, 0.0, level)?;
    Ok(system.level_range(level).map(|id| system.reference(id)).collect())
}

/// Tent selected by `AdjacentFamily::covering_tent`.
#[derive(Clone, Debug, PartialEq)]
pub struct Covering {
    /// `None` means the whole domain.
    pub tent: Option<(usize, usize)>,
    pub level: Option<usize>,
    pub tent_volume: f64,
    pub ball_tent_volume: f64,
    /// `|K^| / |B#(zeta, r)|`.
    pub lambda: f64,
    /// Angular length of the covering arc on the disc.
    pub arc_length: Option<f64>,
}

/// Kube with a fitted inner Euclidean ball, from `AdjacentFamily::inner_polydisc_check`.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerPolydisc {
    pub system: usize,
    pub kube: KubeRef,
    /// `-1` for the root region.
    pub level: i32,
    pub radius: f64,
    pub c: f64,
}

/// Adjacent dyadic systems, optionally augmented by cousins.
#[derive(Clone, Debug)]
pub struct AdjacentFamily {
    systems: Vec<DyadicSystem>,
    base_count: usize,
}

impl AdjacentFamily {
    /// Three shifted systems (disc) or three greedy nets with different
    /// insertion orders over one shared sample (ball).
    pub fn build(geom: &DomainGeometry, s: u32, max_level: usize) -> Result<Self> {
        Self::build_with_delta(geom, s, geom.delta0(), max_level)
    }

    /// As `build` with an explicit top-level scale.
    pub fn build_with_delta(geom: &DomainGeometry, s: u32, delta: f64, max_level: usize) -> Result<Self> {
        let systems = match geom.kind() {
            DomainKind::Disc => {
                SHIFTS.iter().map(|&t| DyadicSystem::build(geom, s, delta, t, max_level)).collect::<Result<Vec<_>>>()?
            }
            DomainKind::Ball2 => {
                validate(geom, s, delta, max_level)?;
                let eps = delta / (s as f64).powi(max_level as i32);
                let sample = Arc::new(sphere::uniform_sphere_sample(
                    sphere::default_sample_size(eps),
                    sphere::SPHERE_SAMPLE_SEED,
                ));
                SHIFTS
                    .iter()
                    .map(|&t| DyadicSystem::sphere(geom, s, delta, t, max_level, sample.clone()))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(AdjacentFamily { base_count: systems.len(), systems })
    }

    pub fn from_systems(systems: Vec<DyadicSystem>) -> Self {
        AdjacentFamily { base_count: systems.len(), systems }
    }

    /// The `3N` systems: every base system with each height multiplier.
    pub fn with_cousins(&self) -> Self {
        let base: Vec<&DyadicSystem> =
            self.systems.iter().filter(|s| s.multiplier() == HeightMultiplier::Base).collect();
        let mut systems = Vec::with_capacity(base.len() * 3);
        for m in HeightMultiplier::ALL {
            for sys in &base {
                systems.push(sys.with_multiplier(m));
            }
        }
        AdjacentFamily { base_count: base.len(), systems }
    }

    pub fn systems(&self) -> &[DyadicSystem] {
        &self.systems
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn base_count(&self) -> usize {
        self.base_count
    }

    pub fn geom(&self) -> &DomainGeometry {
        self.systems[0].geom()
    }

    /// Smallest tent of a base system containing `B#(zeta, r)`; the whole
    /// domain once `r >= delta0`.
    pub fn covering_tent(&self, zeta: &BoundaryPoint, r: f64) -> Result<Covering> {
        let geom = *self.geom();
        let ball_tent_volume = geom.tent_volume(zeta, r)?;
        let delta0 = self.systems[0].delta();
        let omega = Covering {
            tent: None,
            level: None,
            tent_volume: geom.volume(),
            ball_tent_volume,
            lambda: geom.volume() / ball_tent_volume,
            arc_length: None,
        };
        if r >= delta0 {
            return Ok(omega);
        }
        let probes: Vec<BoundaryPoint> = match geom.kind() {
            DomainKind::Disc => Vec::new(),
            DomainKind::Ball2 => {
                let mut pts = vec![*zeta];
                if let Some(tree) = self.systems[0].sphere_tree() {
                    pts.extend(
                        tree.sample()
                            .iter()
                            .filter(|x| quasi_distance(x, zeta.point()) < r)
                            .map(|x| BoundaryPoint::normalize(*x).unwrap()),
                    );
                }
                pts
            }
        };
        let mut best: Option<(usize, usize, usize)> = None;
        for (si, sys) in self.systems.iter().enumerate() {
            if sys.multiplier() != HeightMultiplier::Base {
                continue;
            }
            for k in (0..=sys.max_level()).rev() {
                if sys.height(k) < r {
                    continue;
                }
                if let Some(b) = best {
                    if b.2 >= k {
                        break;
                    }
                }
                let found = match geom.kind() {
                    DomainKind::Disc => disc_arc_cover(sys, k, zeta, r),
                    DomainKind::Ball2 => {
                        let id = sys.cell_at_level(k, &probes[0]);
                        probes.iter().all(|p| sys.cell_at_level(k, p) == id).then_some(id)
                    }
                };
                if let Some(id) = found {
                    best = Some((si, id, k));
                    break;
                }
            }
        }
        match best {
            None => Ok(omega),
            Some((si, id, k)) => {
                let sys = &self.systems[si];
                let tent_volume = sys.tent_volume(id);
                Ok(Covering {
                    tent: Some((si, id)),
                    level: Some(k),
                    tent_volume,
                    ball_tent_volume,
                    lambda: tent_volume / ball_tent_volume,
                    arc_length: (geom.kind() == DomainKind::Disc).then(|| sys.measure(id)),
                })
            }
        }
    }

    /// Kube (over all systems) containing `z` with the largest inner
    /// Euclidean ball around `z`, relative to its dyadic scale.
    pub fn inner_polydisc_check(&self, z: &Point) -> InnerPolydisc {
        let mut best: Option<InnerPolydisc> = None;
        for (si, sys) in self.systems.iter().enumerate() {
            let kube = sys.locate_kube(z);
            let (level, radius) = match kube {
                KubeRef::Root => (-1, (1.0 - sys.height(0)) - z.norm()),
                KubeRef::Cell(id) => (sys.level_of(id) as i32, kube_room(sys, id, z)),
            };
            let c = (radius / sys.scale(level)).min(1.0);
            let cand = InnerPolydisc { system: si, kube, level, radius: radius.max(0.0), c: c.max(0.0) };
            if best.as_ref().is_none_or(|b| cand.c > b.c) {
                best = Some(cand);
            }
        }
        best.expect("family is nonempty")
    }
}

fn disc_arc_cover(sys: &DyadicSystem, k: usize, zeta: &BoundaryPoint, r: f64) -> Option<usize> {
    let half = 2.0 * (r.min(2.0) / 2.0).asin();
    let Partition::Disc { offset, .. } = sys.partition else { return None };
    let len = sys.arc_length(k);
    let a = (zeta.angle() - half - offset).rem_euclid(2.0 * PI);
    let j = (a / len).floor();
    if a - j * len + 2.0 * half <= len {
        Some(sys.level_range(k).start + (j as usize).min(sys.level_range(k).len() - 1))
    } else {
        None
    }
}

/// Distance from `z` to the complement of its kube.
fn kube_room(sys: &DyadicSystem, id: usize, z: &Point) -> f64 {
    let k = sys.level_of(id);
    let r = z.norm();
    let outer = 1.0 - sys.height(k);
    let radial =
        if k == sys.max_level() { (r - outer).min(1.0 - r) } else { (r - outer).min((1.0 - sys.height(k + 1)) - r) };
    match sys.cell(id).extent {
        CellExtent::Arc { start, length } => {
            let theta = BoundaryPoint::normalize(*z).unwrap().angle();
            let d1 = (theta - start).rem_euclid(2.0 * PI).min(length);
            let d2 = length - d1;
            let side = |d: f64| if d >= PI / 2.0 { r } else { r * d.sin() };
            radial.min(side(d1)).min(side(d2))
        }
        CellExtent::Sampled { .. } => probe_room(sys, id, z, radial),
    }
}

/// Bisection on the radius of a probe sphere that stays inside the kube.
fn probe_room(sys: &DyadicSystem, id: usize, z: &Point, upper: f64) -> f64 {
    let kube = KubeRef::Cell(id);
    let dirs: Vec<Point> = sphere::uniform_sphere_sample(48, 0x9E0B)
        .into_iter()
        .chain((0..4).flat_map(|i| {
            let mut e = [0.0; 4];
            e[i] = 1.0;
            let p = Point::ball(crate::geometry::C64::new(e[0], e[1]), crate::geometry::C64::new(e[2], e[3]));
            [p, p.scale(-1.0)]
        }))
        .collect();
    let fits = |rho: f64| dirs.iter().all(|u| sys.locate_kube(&z.add(&u.scale(rho))) == kube);
    let (mut lo, mut hi) = (0.0, upper.max(0.0));
    if fits(hi) {
        return hi;
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn disc_system(level: usize) -> DyadicSystem {
        DyadicSystem::build(&DomainGeometry::disc(), 2, 0.4, 0.0, level).unwrap()
    }

    #[test]
    fn disc_cell_counts() {
        let sys = disc_system(3);
        assert_eq!(sys.num_cells(), 8 + 16 + 32 + 64);
        assert_eq!(sys.level_range(2).len(), 32);
    }

    #[test]
    fn disc_nets_are_equispaced() {
        let g = DomainGeometry::disc();
        assert_eq!(build_separated_net(&g, 2, 0.4, 0).unwrap().len(), 8);
        assert_eq!(build_separated_net(&g, 2, 0.4, 2).unwrap().len(), 32);
    }

    #[test]
    fn level_three_cells_nest() {
        let sys = disc_system(3);
        for id in sys.level_range(3) {
            let p = sys.parent(id).unwrap();
            assert!(sys.nested_in(id, p));
            assert!(sys.children(p).contains(&id));
        }
    }

    #[test]
    fn kube_of_layer() {
        let sys = disc_system(5);
        let delta = sys.delta();
        let z = Point::polar(1.0 - 0.3 * delta, 0.7);
        let KubeRef::Cell(id) = sys.locate_kube(&z) else { panic!("expected a cell kube") };
        assert_eq!(sys.level_of(id), 1);
        assert!(sys.tent_contains(id, &z));
        assert_eq!(sys.locate_kube(&Point::default()), KubeRef::Root);
    }

    #[test]
    fn layer_boundary_goes_to_lower_level() {
        let sys = disc_system(5);
        assert_eq!(sys.layer_of_depth(sys.height(2)), Some(1));
    }

    #[test]
    fn disc_partition_sums_to_pi() {
        let rep = disc_system(6).check_invariants();
        assert!(rep.is_ok(), "{:?}", rep.violations);
        assert!(rep.exhaustion_defect < 1e-10);
        assert_eq!(rep.max_children, 2);
    }

    #[test]
    fn cousin_multipliers() {
        assert_relative_eq!(HeightMultiplier::Raised.value(2), 4.0 / 3.0);
        assert_relative_eq!(HeightMultiplier::Lowered.value(2), 5.0 / 6.0);
        let fam = AdjacentFamily::build(&DomainGeometry::disc(), 2, 3).unwrap();
        let cousins = fam.with_cousins();
        assert_eq!(cousins.len(), 9);
        assert_eq!(cousins.base_count(), 3);
    }

    #[test]
    fn covering_at_top_scale_is_domain() {
        let fam = AdjacentFamily::build(&DomainGeometry::disc(), 2, 8).unwrap();
        let cov = fam.covering_tent(&BoundaryPoint::from_angle(0.3), 0.4).unwrap();
        assert!(cov.tent.is_none());
    }

    #[test]
    fn inner_ball_at_origin() {
        let fam = AdjacentFamily::build(&DomainGeometry::disc(), 2, 4).unwrap().with_cousins();
        let ip = fam.inner_polydisc_check(&Point::default());
        assert_eq!(ip.kube, KubeRef::Root);
        assert!(ip.radius >= (2.0 * 2.0 - 2.0) / 3.0 * 0.4);
    }
}
