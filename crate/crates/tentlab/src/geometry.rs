//! Model domains: the unit disc in C and the unit ball in C^2.
//!
//! Both are described by the defining function `|z| - 1`, the radial
//! boundary projection and the quasi-metric `|1 - <p, q>|` on the sphere.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub type C64 = Complex64;

/// Cutoff below which `|1 - <z, w>|` is treated as a kernel singularity.
pub const KERNEL_SINGULARITY_CUTOFF: f64 = 1e-14;

/// A point of C^2; disc points keep the second coordinate at zero.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point(pub [C64; 2]);

impl Point {
    pub fn disc(z: C64) -> Self {
        Point([z, C64::new(0.0, 0.0)])
    }

    pub fn ball(z1: C64, z2: C64) -> Self {
        Point([z1, z2])
    }

    pub fn polar(r: f64, theta: f64) -> Self {
        Point::disc(C64::from_polar(r, theta))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Hermitian product `<self, other> = sum self_j * conj(other_j)`.
    pub fn inner(&self, other: &Point) -> C64 {
        self.0[0] * other.0[0].conj() + self.0[1] * other.0[1].conj()
    }

    pub fn scale(&self, t: f64) -> Point {
        Point([self.0[0] * t, self.0[1] * t])
    }

    pub fn add(&self, other: &Point) -> Point {
        Point([self.0[0] + other.0[0], self.0[1] + other.0[1]])
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point([self.0[0] - other.0[0], self.0[1] - other.0[1]])
    }

    pub fn mul_c(&self, c: C64) -> Point {
        Point([self.0[0] * c, self.0[1] * c])
    }
}

/// A point of the boundary sphere, `|p| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint(Point);

impl BoundaryPoint {
    /// Disc boundary point `e^{i theta}`.
    pub fn from_angle(theta: f64) -> Self {
        BoundaryPoint(Point::polar(1.0, theta))
    }

    /// Normalizes a nonzero point onto the sphere.
    pub fn normalize(p: Point) -> Result<Self> {
        let r = p.norm();
        if r == 0.0 {
            return Err(LabError::UndefinedProjection);
        }
        Ok(BoundaryPoint(p.scale(1.0 / r)))
    }

    pub fn point(&self) -> &Point {
        &self.0
    }

    /// Angle in `[0, 2 pi)` of the first coordinate.
    pub fn angle(&self) -> f64 {
        let a = self.0 .0[0].arg();
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainKind {
    Disc,
    Ball2,
}

impl DomainKind {
    pub fn name(&self) -> &'static str {
        match self {
            DomainKind::Disc => "disc",
            DomainKind::Ball2 => "ball2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "disc" => Ok(DomainKind::Disc),
            "ball2" | "ball" => Ok(DomainKind::Ball2),
            other => Err(LabError::InvalidParameter(format!("unknown geometry '{other}'"))),
        }
    }
}

pub const DEFAULT_EPSILON0: f64 = 0.5;
pub const DEFAULT_DISC_DELTA0: f64 = 0.4;
pub const DEFAULT_BALL_DELTA0: f64 = 0.45;

/// A model domain together with its collar width and top dyadic scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainGeometry {
    kind: DomainKind,
    epsilon0: f64,
    delta0: f64,
}

/// Distinguished-coordinate polydisc `D(q, delta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolydiscSpec {
    pub center: Point,
    pub delta: f64,
    /// `tau_1 = delta`, and `tau_2 = delta^(1/2)` on the ball.
    pub radii: Vec<f64>,
}

impl DomainGeometry {
    pub fn new(kind: DomainKind, epsilon0: f64, delta0: f64) -> Result<Self> {
        if !(epsilon0 > 0.0 && epsilon0 < 1.0) {
            return Err(LabError::InvalidParameter(format!("epsilon0 = {epsilon0} not in (0,1)")));
        }
        if !(delta0 > 0.0 && delta0 < epsilon0) {
            return Err(LabError::InvalidParameter(format!("delta0 = {delta0} not in (0, epsilon0 = {epsilon0})")));
        }
        Ok(DomainGeometry { kind, epsilon0, delta0 })
    }

    pub fn disc() -> Self {
        DomainGeometry { kind: DomainKind::Disc, epsilon0: DEFAULT_EPSILON0, delta0: DEFAULT_DISC_DELTA0 }
    }

    pub fn ball2() -> Self {
        DomainGeometry { kind: DomainKind::Ball2, epsilon0: DEFAULT_EPSILON0, delta0: DEFAULT_BALL_DELTA0 }
    }

    pub fn of_kind(kind: DomainKind) -> Self {
        match kind {
            DomainKind::Disc => Self::disc(),
            DomainKind::Ball2 => Self::ball2(),
        }
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    /// Complex dimension.
    pub fn n(&self) -> usize {
        match self.kind {
            DomainKind::Disc => 1,
            DomainKind::Ball2 => 2,
        }
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// Lebesgue volume of the domain.
    pub fn volume(&self) -> f64 {
        match self.kind {
            DomainKind::Disc => PI,
            DomainKind::Ball2 => PI * PI / 2.0,
        }
    }

    /// Surface measure of the boundary sphere.
    pub fn boundary_area(&self) -> f64 {
        match self.kind {
            DomainKind::Disc => 2.0 * PI,
            DomainKind::Ball2 => 2.0 * PI * PI,
        }
    }

    /// Volume of the ball of radius `r` centred at the origin.
    pub fn centered_ball_volume(&self, r: f64) -> f64 {
        self.volume() * r.powi(2 * self.n() as i32)
    }

    /// Volume of the shell `a <= |z| < b`, per unit boundary measure.
    pub fn radial_shell_factor(&self, a: f64, b: f64) -> f64 {
        let m = 2 * self.n() as i32;
        (b.powi(m) - a.powi(m)) / m as f64
    }

    /// Shell factor for depths `t_lo <= 1 - |z| < t_hi`, free of cancellation
    /// for thin layers near the boundary.
    pub fn layer_factor(&self, t_hi: f64, t_lo: f64) -> f64 {
        let m = 2 * self.n() as i32;
        let (a, b) = (1.0 - t_hi, 1.0 - t_lo);
        let sum: f64 = (0..m).map(|i| b.powi(m - 1 - i) * a.powi(i)).sum();
        (t_hi - t_lo) * sum / m as f64
    }

    pub fn rho(&self, z: &Point) -> f64 {
        z.norm() - 1.0
    }

    pub fn project_boundary(&self, z: &Point) -> Result<BoundaryPoint> {
        BoundaryPoint::normalize(*z)
    }

    /// Quasi-metric `|1 - <p, q>|`; the chord length on the circle.
    pub fn boundary_distance(&self, p: &BoundaryPoint, q: &BoundaryPoint) -> f64 {
        (C64::new(1.0, 0.0) - p.point().inner(q.point())).norm()
    }

    /// Membership of `z` in the tent over `B(zeta, delta)`.
    pub fn tent_contains(&self, zeta: &BoundaryPoint, delta: f64, z: &Point) -> bool {
        if delta >= self.epsilon0 {
            return z.norm() < 1.0;
        }
        let r = z.norm();
        if r >= 1.0 || 1.0 - r >= delta || r == 0.0 {
            return false;
        }
        let p = BoundaryPoint(z.scale(1.0 / r));
        self.boundary_distance(&p, zeta) < delta
    }

    /// Exact surface measure of the boundary ball `B(zeta, delta)`.
    pub fn boundary_ball_measure(&self, delta: f64) -> f64 {
        match self.kind {
            DomainKind::Disc => {
                if delta >= 2.0 {
                    2.0 * PI
                } else {
                    4.0 * (delta / 2.0).asin()
                }
            }
            DomainKind::Ball2 => {
                // <p, zeta> is uniformly distributed on the unit disc.
                2.0 * PI * lens_area(delta)
            }
        }
    }

    /// Model boundary measure `delta * prod_{j>=2} tau_j^2`.
    pub fn boundary_ball_measure_model(&self, delta: f64) -> f64 {
        match self.kind {
            DomainKind::Disc => delta,
            DomainKind::Ball2 => delta * delta,
        }
    }

    /// Exact volume of the tent `B#(zeta, delta)`; the whole domain once
    /// `delta >= epsilon0`.
    pub fn tent_volume(&self, _zeta: &BoundaryPoint, delta: f64) -> Result<f64> {
        if !(delta > 0.0) {
            return Err(LabError::InvalidParameter(format!("tent scale {delta} must be positive")));
        }
        if delta >= self.epsilon0 {
            return Ok(self.volume());
        }
        let shell = self.layer_factor(delta, 0.0);
        Ok(self.boundary_ball_measure(delta) * shell)
    }

    /// Model tent volume `delta^2 * prod_{j>=2} tau_j^2`.
    pub fn tent_volume_model(&self, _zeta: &BoundaryPoint, delta: f64) -> Result<f64> {
        if !(delta > 0.0) {
            return Err(LabError::InvalidParameter(format!("tent scale {delta} must be positive")));
        }
        Ok(match self.kind {
            DomainKind::Disc => delta * delta,
            DomainKind::Ball2 => delta * delta * delta,
        })
    }

    pub fn polydisc(&self, center: &Point, delta: f64) -> PolydiscSpec {
        let radii = match self.kind {
            DomainKind::Disc => vec![delta],
            DomainKind::Ball2 => vec![delta, delta.sqrt()],
        };
        PolydiscSpec { center: *center, delta, radii }
    }

    /// Smallest `eps` with `w` in `D(q, eps)`.
    pub fn polydisc_gauge(&self, q: &Point, w: &Point) -> f64 {
        let diff = w.sub(q);
        match self.kind {
            DomainKind::Disc => diff.0[0].norm(),
            DomainKind::Ball2 => {
                let nu = match BoundaryPoint::normalize(*q) {
                    Ok(p) => *p.point(),
                    Err(_) => Point::ball(C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
                };
                let normal = diff.inner(&nu);
                let tangential = diff.sub(&nu.mul_c(normal));
                normal.norm().max(tangential.norm_sqr())
            }
        }
    }

    pub fn polydisc_contains(&self, spec: &PolydiscSpec, w: &Point) -> bool {
        self.polydisc_gauge(&spec.center, w) < spec.delta
    }

    /// Closed-form Bergman kernel `K(z, w)`.
    pub fn bergman_kernel(&self, z: &Point, w: &Point) -> Result<C64> {
        let one_minus = C64::new(1.0, 0.0) - z.inner(w);
        let gap = one_minus.norm();
        if gap < KERNEL_SINGULARITY_CUTOFF {
            return Err(LabError::NearSingularKernel(gap));
        }
        Ok(match self.kind {
            DomainKind::Disc => one_minus.powi(-2) / PI,
            DomainKind::Ball2 => one_minus.powi(-3) * (2.0 / (PI * PI)),
        })
    }

    fn check_collar(&self, q: &Point) -> Result<()> {
        let depth = 1.0 - q.norm();
        if !(depth > 0.0 && depth < self.epsilon0) {
            return Err(LabError::OutsideCollar(depth));
        }
        Ok(())
    }

    /// `|K(q1, q2)| * |B#(pi(q1), t)|` with
    /// `t = |rho(q1)| + |rho(q2)| + inf{eps : q2 in D(q1, eps)}`.
    pub fn kernel_bound_ratio(&self, q1: &Point, q2: &Point) -> Result<f64> {
        self.check_collar(q1)?;
        self.check_collar(q2)?;
        let t = self.rho(q1).abs() + self.rho(q2).abs() + self.polydisc_gauge(q1, q2);
        let zeta = self.project_boundary(q1)?;
        let k = self.bergman_kernel(q1, q2)?;
        Ok(k.norm() * self.tent_volume(&zeta, t)?)
    }
}

/// Area of the intersection of the unit disc with the disc of radius
/// `delta` centred at 1.
fn lens_area(delta: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    if delta >= 2.0 {
        return PI;
    }
    let d2 = delta * delta;
    let a1 = (1.0 - d2 / 2.0).clamp(-1.0, 1.0).acos();
    let a2 = (delta / 2.0).clamp(-1.0, 1.0).acos();
    a1 + d2 * a2 - 0.5 * (d2 * (4.0 - d2)).sqrt()
}
