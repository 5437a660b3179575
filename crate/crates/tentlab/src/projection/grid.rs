//! Tensor quadrature on rings: composite Gauss-Legendre in `u = |z|^2` with
//! panel breaks at every kube depth, times uniform angles on the torus.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::dyadic::{DyadicSystem, HeightMultiplier, KubeRef};
use crate::error::{LabError, Result};
use crate::geometry::{BoundaryPoint, DomainGeometry, DomainKind, Point, C64};

/// Kube of a node that lies in the root region.
pub const ROOT_KUBE: u32 = u32::MAX;
/// Minimum quadrature nodes required in every kube.
pub const MIN_NODES_PER_KUBE: usize = 4;

/// Depth of the analysis dyadic systems on the quadrature grid.
pub fn analysis_levels(kind: DomainKind) -> usize {
    match kind {
        DomainKind::Disc => 3,
        DomainKind::Ball2 => 2,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridParams {
    /// Radial node count `R`.
    pub radial: usize,
    /// Angular count `A` per circle of the torus.
    pub angular: usize,
    /// Grading exponent of the boundary panel.
    pub grading: f64,
    /// Dyadic depth whose kube boundaries are panel breaks.
    pub levels: usize,
    /// Number of halving panels below the deepest kube boundary.
    pub geometric_panels: usize,
}

impl GridParams {
    pub fn default_for(kind: DomainKind) -> Self {
        match kind {
            DomainKind::Disc => GridParams {
                radial: 64,
                angular: 128,
                grading: 5.0,
                levels: analysis_levels(kind),
                geometric_panels: 5,
            },
            DomainKind::Ball2 => {
                GridParams { radial: 40, angular: 32, grading: 5.0, levels: analysis_levels(kind), geometric_panels: 1 }
            }
        }
    }

    pub fn with_size(mut self, radial: usize, angular: usize) -> Self {
        self.radial = radial;
        self.angular = angular;
        self
    }

    pub fn doubled(&self) -> Self {
        GridParams { radial: 2 * self.radial, angular: 2 * self.angular, ..*self }
    }
}

/// One ring of nodes: fixed radius (and, on the ball, fixed `|z1|^2 / |z|^2`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ring {
    pub r: f64,
    /// `1 - r^2`, kept separately so boundary layers keep full precision.
    pub defect: f64,
    /// `|z1|^2 / |z|^2`; 1 on the disc.
    pub c: f64,
    /// Quadrature weight of each node on the ring.
    pub weight: f64,
    pub radial_index: usize,
    pub sphere_index: usize,
}

impl Ring {
    pub fn depth(&self) -> f64 {
        self.defect / (1.0 + self.r)
    }
}

#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    geom: DomainGeometry,
    params: GridParams,
    rings: Vec<Ring>,
    /// Nodes per ring: `A` on the disc, `A^2` on the ball.
    torus_size: usize,
    /// `|z1|^2 / |z|^2` values on the ball; `[1]` on the disc.
    sphere_c: Vec<f64>,
    nodes: Vec<Point>,
    weights: Vec<f64>,
}

/// Depths of all kube boundaries of the base and cousin systems, descending.
pub fn kube_depths(geom: &DomainGeometry, s: u32, levels: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for m in HeightMultiplier::ALL {
        for k in 0..=levels {
            out.push(geom.delta0() * m.value(s) / (s as f64).powi(k as i32));
        }
    }
    out.retain(|&t| t > 0.0 && t < 1.0);
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    out
}

fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(NonZeroUsize::new(n).expect("positive rule size")).as_node_weight_pairs().to_vec()
}

/// Radial rule in `u = |z|^2`: `(u, 1 - u, weight of du)` on `[0, 1]`.
fn radial_rule(geom: &DomainGeometry, params: &GridParams) -> Result<Vec<(f64, f64, f64)>> {
    let depths = kube_depths(geom, 2, params.levels);
    let t_min = *depths.last().unwrap();
    let u_of = |t: f64| (1.0 - t) * (1.0 - t);
    // Panel breaks in u, ascending; the root region gets two panels.
    let mut breaks = vec![0.0, 0.5 * u_of(depths[0])];
    breaks.extend(depths.iter().map(|&t| u_of(t)));
    for j in 1..=params.geometric_panels {
        breaks.push(u_of(t_min / 2f64.powi(j as i32)));
    }
    let u_end = *breaks.last().unwrap();
    let panels = breaks.len() - 1;
    let graded = (params.radial / 8).max(8);
    if params.radial < graded + 2 * panels {
        return Err(LabError::Resolution(format!(
            "{} radial nodes cannot cover {} panels plus a {graded}-node boundary panel",
            params.radial, panels
        )));
    }
    let rest = params.radial - graded;
    let (base, extra) = (rest / panels, rest % panels);
    let mut rule = Vec::with_capacity(params.radial);
    for p in 0..panels {
        // Remainder nodes go to the panels nearest the boundary.
        let n = base + usize::from(p >= panels - extra);
        let (a, b) = (breaks[p], breaks[p + 1]);
        for (x, w) in gauss_legendre(n) {
            let u = 0.5 * (a + b) + 0.5 * (b - a) * x;
            rule.push((u, 1.0 - u, 0.5 * (b - a) * w));
        }
    }
    // 1 - u = (1 - u_end) x^grading on the last panel.
    let v_end = 1.0 - u_end;
    let q = params.grading;
    for (x, w) in gauss_legendre(graded) {
        let y = 0.5 * (x + 1.0);
        let v = v_end * y.powf(q);
        rule.push((1.0 - v, v, 0.5 * w * v_end * q * y.powf(q - 1.0)));
    }
    rule.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    Ok(rule)
}

impl QuadratureGrid {
    /// Builds the grid. Total weight equals the domain volume.
    pub fn build(geom: &DomainGeometry, params: GridParams) -> Result<Self> {
        if params.radial < 8 || params.angular < 8 {
            return Err(LabError::InvalidParameter(format!(
                "grid needs R, A >= 8 (got R = {}, A = {})",
                params.radial, params.angular
            )));
        }
        if !(params.grading >= 1.0) {
            return Err(LabError::InvalidParameter(format!("grading {} must be >= 1", params.grading)));
        }
        let radial = radial_rule(geom, &params)?;
        let a = params.angular;
        let dtheta = 2.0 * PI / a as f64;
        let angles: Vec<f64> = (0..a).map(|j| (j as f64 + 0.5) * dtheta).collect();
        let (sphere, torus_size) = match geom.kind() {
            // dV = (1/2) du dtheta
            DomainKind::Disc => (vec![(1.0, 0.5 * dtheta)], a),
            // dV = (u/2) du * (1/2) dc dtheta1 dtheta2
            DomainKind::Ball2 => {
                let nc = a.div_ceil(4).max(8);
                let rule = gauss_legendre(nc)
                    .into_iter()
                    .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w * 0.5 * dtheta * dtheta))
                    .collect();
                (rule, a * a)
            }
        };
        let mut rings = Vec::with_capacity(radial.len() * sphere.len());
        let mut nodes = Vec::with_capacity(rings.capacity() * torus_size);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for (ri, &(u, defect, wu)) in radial.iter().enumerate() {
            let r = u.sqrt();
            let radial_w = match geom.kind() {
                DomainKind::Disc => wu,
                DomainKind::Ball2 => 0.5 * u * wu,
            };
            for (si, &(c, wc)) in sphere.iter().enumerate() {
                let weight = radial_w * wc;
                rings.push(Ring { r, defect, c, weight, radial_index: ri, sphere_index: si });
                match geom.kind() {
                    DomainKind::Disc => {
                        for &th in &angles {
                            nodes.push(Point::polar(r, th));
                            weights.push(weight);
                        }
                    }
                    DomainKind::Ball2 => {
                        let (m1, m2) = (r * c.sqrt(), r * (1.0 - c).sqrt());
                        for &t1 in &angles {
                            for &t2 in &angles {
                                nodes.push(Point::ball(C64::from_polar(m1, t1), C64::from_polar(m2, t2)));
                                weights.push(weight);
                            }
                        }
                    }
                }
            }
        }
        Ok(QuadratureGrid {
            geom: *geom,
            params,
            rings,
            torus_size,
            sphere_c: sphere.iter().map(|&(c, _)| c).collect(),
            nodes,
            weights,
        })
    }

    pub fn default_for(geom: &DomainGeometry) -> Result<Self> {
        Self::build(geom, GridParams::default_for(geom.kind()))
    }

    pub fn geom(&self) -> &DomainGeometry {
        &self.geom
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rings(&self) -> &[Ring] {
        &self.rings
    }

    pub fn torus_size(&self) -> usize {
        self.torus_size
    }

    /// Angular count per circle.
    pub fn angular(&self) -> usize {
        self.params.angular
    }

    pub fn ring_of(&self, node: usize) -> usize {
        node / self.torus_size
    }

    /// Index of the boundary direction of a node; shared by all radii.
    pub fn direction_of(&self, node: usize) -> usize {
        let ring = &self.rings[node / self.torus_size];
        ring.sphere_index * self.torus_size + node % self.torus_size
    }

    pub fn direction_count(&self) -> usize {
        self.sphere_c.len() * self.torus_size
    }

    /// Unit boundary point of direction `dir`.
    pub fn direction(&self, dir: usize) -> BoundaryPoint {
        let a = self.params.angular;
        let dtheta = 2.0 * PI / a as f64;
        let angle = |j: usize| (j as f64 + 0.5) * dtheta;
        match self.geom.kind() {
            DomainKind::Disc => BoundaryPoint::from_angle(angle(dir)),
            DomainKind::Ball2 => {
                let (si, t) = (dir / self.torus_size, dir % self.torus_size);
                let c = self.sphere_c[si];
                let p = Point::ball(
                    C64::from_polar(c.sqrt(), angle(t / a)),
                    C64::from_polar((1.0 - c).sqrt(), angle(t % a)),
                );
                BoundaryPoint::normalize(p).expect("unit direction")
            }
        }
    }

    /// `1 - |z|` of a node.
    pub fn depth(&self, node: usize) -> f64 {
        self.rings[node / self.torus_size].depth()
    }

    /// `1 - |z|^2` of a node.
    pub fn defect(&self, node: usize) -> f64 {
        self.rings[node / self.torus_size].defect
    }

    pub fn total_weight(&self) -> f64 {
        crate::linalg::compensated_sum(self.weights.iter().copied())
    }

    /// Quadrature of a scalar function.
    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        crate::linalg::compensated_sum(self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(z)))
    }

    /// Assigns every node to its kube in `system`, checking resolution.
    pub fn assign(&self, system: &DyadicSystem) -> Result<KubeAssignment> {
        let l = system.max_level();
        let finest: Vec<u32> =
            (0..self.direction_count()).map(|d| system.cell_at_level(l, &self.direction(d)) as u32).collect();
        // Ancestor tables per level for each finest cell.
        let mut ancestors: Vec<Vec<u32>> = vec![Vec::new(); l + 1];
        let fr = system.level_range(l);
        ancestors[l] = fr.clone().map(|id| id as u32).collect();
        for k in (0..l).rev() {
            ancestors[k] = ancestors[k + 1].iter().map(|&id| system.parent(id as usize).unwrap() as u32).collect();
        }
        let ring_layers: Vec<Option<usize>> =
            self.rings.iter().map(|ring| system.layer_of_depth(ring.depth())).collect();
        let mut kube = Vec::with_capacity(self.len());
        let mut counts = vec![0usize; system.num_cells()];
        let mut root_count = 0usize;
        for node in 0..self.len() {
            match ring_layers[node / self.torus_size] {
                None => {
                    kube.push(ROOT_KUBE);
                    root_count += 1;
                }
                Some(k) => {
                    let leaf = finest[self.direction_of(node)] as usize - fr.start;
                    let id = ancestors[k][leaf];
                    counts[id as usize] += 1;
                    kube.push(id);
                }
            }
        }
        if root_count < MIN_NODES_PER_KUBE {
            return Err(LabError::Resolution(format!("root region holds only {root_count} nodes")));
        }
        if let Some((id, &n)) = counts.iter().enumerate().find(|(_, &n)| n < MIN_NODES_PER_KUBE) {
            let k = system.level_of(id);
            return Err(LabError::Resolution(format!(
                "kube {id} (level {k}, index {}) holds {n} quadrature nodes; refine the grid",
                id - system.level_range(k).start
            )));
        }
        Ok(KubeAssignment { kube, counts, root_count })
    }
}

/// Kube of every grid node for one dyadic system.
#[derive(Clone, Debug)]
pub struct KubeAssignment {
    kube: Vec<u32>,
    counts: Vec<usize>,
    root_count: usize,
}

impl KubeAssignment {
    pub fn kube_of(&self, node: usize) -> KubeRef {
        match self.kube[node] {
            ROOT_KUBE => KubeRef::Root,
            id => KubeRef::Cell(id as usize),
        }
    }

    pub fn raw(&self) -> &[u32] {
        &self.kube
    }

    pub fn count(&self, kube: KubeRef) -> usize {
        match kube {
            KubeRef::Root => self.root_count,
            KubeRef::Cell(id) => self.counts[id],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn disc_grid_has_r_times_a_nodes() {
        let g = QuadratureGrid::default_for(&DomainGeometry::disc()).unwrap();
        assert_eq!(g.len(), 64 * 128);
        assert_abs_diff_eq!(g.total_weight(), PI, epsilon = 1e-10);
    }

    #[test]
    fn disc_second_moment() {
        let g = QuadratureGrid::default_for(&DomainGeometry::disc()).unwrap();
        assert_abs_diff_eq!(g.integrate(|z| z.norm_sqr()), PI / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn ball_volume() {
        let g = QuadratureGrid::default_for(&DomainGeometry::ball2()).unwrap();
        assert_abs_diff_eq!(g.total_weight(), PI * PI / 2.0, epsilon = 1e-10);
        // |z1|^2 integrates to pi^2 / 6 over the ball.
        assert_abs_diff_eq!(g.integrate(|z| z.0[0].norm_sqr()), PI * PI / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn too_few_radial_nodes() {
        let p = GridParams::default_for(DomainKind::Disc).with_size(8, 64);
        assert!(matches!(QuadratureGrid::build(&DomainGeometry::disc(), p), Err(LabError::Resolution(_))));
    }

    #[test]
    fn directions_match_nodes() {
        let g = QuadratureGrid::default_for(&DomainGeometry::ball2()).unwrap();
        for node in [0, 777, g.len() - 1] {
            let d = g.direction(g.direction_of(node));
            let p = BoundaryPoint::normalize(g.nodes()[node]).unwrap();
            assert!((d.point().sub(p.point())).norm() < 1e-12);
        }
    }

    #[test]
    fn every_kube_is_resolved() {
        let geom = DomainGeometry::disc();
        let g = QuadratureGrid::default_for(&geom).unwrap();
        let sys = DyadicSystem::build(&geom, 2, 0.4, 2.0 / 3.0, 3).unwrap();
        for m in HeightMultiplier::ALL {
            let a = g.assign(&sys.with_multiplier(m)).unwrap();
            assert!(a.count(KubeRef::Root) >= MIN_NODES_PER_KUBE);
        }
    }
}
