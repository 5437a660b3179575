//! Discretized Bergman projection `P`, the positive operator `P+`, weighted
//! operator norms and the holomorphic-embedding and transfer quantities.

pub mod grid;
pub mod norm;
pub mod positive;

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};
use crate::geometry::{DomainKind, Point, C64};
use crate::linalg::{self, CMat, NodeMatrices};
use grid::QuadratureGrid;
pub use norm::NormEstimate;
pub use positive::PositiveOperator;

pub const DEFAULT_DISC_TRUNCATION: usize = 96;
pub const DEFAULT_BALL_TRUNCATION: usize = 12;

/// Spectral filter applied to the kernel expansion above the truncation degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Taper {
    /// Orthogonal projection onto polynomials of degree at most `N`.
    Sharp,
    /// Degrees up to `N` kept, then a `cos^2` roll-off ending at `N + N/4`.
    Smooth,
}

impl Taper {
    /// Highest polynomial degree carried by the filtered kernel.
    pub fn kernel_degree(&self, truncation: usize) -> usize {
        match self {
            Taper::Sharp => truncation,
            Taper::Smooth => truncation + truncation / 4,
        }
    }

    /// Filter factor of degree `n`.
    pub fn factor(&self, n: usize, truncation: usize) -> f64 {
        if n <= truncation {
            return 1.0;
        }
        let end = self.kernel_degree(truncation);
        if n > end {
            return 0.0;
        }
        let x = (n - truncation) as f64 / (end - truncation + 1) as f64;
        (0.5 * PI * x).cos().powi(2)
    }
}

pub fn default_truncation(kind: DomainKind) -> usize {
    match kind {
        DomainKind::Disc => DEFAULT_DISC_TRUNCATION,
        DomainKind::Ball2 => DEFAULT_BALL_TRUNCATION,
    }
}

/// Orthonormal monomials of total degree at most `degree`.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    kind: DomainKind,
    degree: usize,
    exponents: Vec<[usize; 2]>,
    coefficients: Vec<f64>,
}

impl MonomialBasis {
    pub fn new(kind: DomainKind, degree: usize) -> Self {
        let mut exponents = Vec::new();
        let mut coefficients = Vec::new();
        for k in 0..=degree {
            match kind {
                DomainKind::Disc => {
                    exponents.push([k, 0]);
                    coefficients.push(((k + 1) as f64 / PI).sqrt());
                }
                DomainKind::Ball2 => {
                    for a1 in 0..=k {
                        // (k + 2)! / (a1! a2!) = (k + 1)(k + 2) binom(k, a1)
                        let norm = (k + 1) as f64 * (k + 2) as f64 * binomial(k, a1);
                        exponents.push([a1, k - a1]);
                        coefficients.push((norm / (PI * PI)).sqrt());
                    }
                }
            }
        }
        MonomialBasis { kind, degree, exponents, coefficients }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn exponents(&self) -> &[[usize; 2]] {
        &self.exponents
    }

    pub fn eval(&self, i: usize, z: &Point) -> C64 {
        let [a1, a2] = self.exponents[i];
        let mut v = C64::new(self.coefficients[i], 0.0) * z.0[0].powu(a1 as u32);
        if a2 > 0 {
            v *= z.0[1].powu(a2 as u32);
        }
        v
    }

    /// Total degree of basis function `i`.
    pub fn total_degree(&self, i: usize) -> usize {
        self.exponents[i][0] + self.exponents[i][1]
    }

    /// Modulus of basis function `i` on a ring.
    fn radial(&self, i: usize, ring: &grid::Ring) -> f64 {
        let [a1, a2] = self.exponents[i];
        match self.kind {
            DomainKind::Disc => self.coefficients[i] * ring.r.powi(a1 as i32),
            DomainKind::Ball2 => {
                let (m1, m2) = (ring.r * ring.c.sqrt(), ring.r * (1.0 - ring.c).sqrt());
                self.coefficients[i] * m1.powi(a1 as i32) * m2.powi(a2 as i32)
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// FFTs over the angular torus of a grid (one circle on the disc, two on the ball).
#[derive(Clone)]
pub struct TorusFft {
    a: usize,
    dims: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TorusFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TorusFft({}^{})", self.a, self.dims)
    }
}

impl TorusFft {
    pub fn new(kind: DomainKind, a: usize) -> Self {
        let mut planner = FftPlanner::new();
        TorusFft {
            a,
            dims: match kind {
                DomainKind::Disc => 1,
                DomainKind::Ball2 => 2,
            },
            forward: planner.plan_fft_forward(a),
            inverse: planner.plan_fft_inverse(a),
        }
    }

    pub fn size(&self) -> usize {
        self.a.pow(self.dims as u32)
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [C64]) {
        plan.process(buf);
        if self.dims == 2 {
            let a = self.a;
            let mut t = vec![C64::new(0.0, 0.0); buf.len()];
            transpose(buf, &mut t, a);
            plan.process(&mut t);
            transpose(&t, buf, a);
        }
    }

    /// Unnormalized `sum_j x_j e^{-2 pi i q.j / A}`.
    pub fn forward(&self, buf: &mut [C64]) {
        self.run(&self.forward, buf);
    }

    /// Unnormalized `sum_j x_j e^{+2 pi i q.j / A}`.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.run(&self.inverse, buf);
    }

    /// Buffer position of the (possibly negative) frequency `q`.
    pub fn index(&self, q: [i64; 2]) -> usize {
        let a = self.a as i64;
        match self.dims {
            1 => q[0].rem_euclid(a) as usize,
            _ => (q[0].rem_euclid(a) * a + q[1].rem_euclid(a)) as usize,
        }
    }

    /// `e^{i pi (q1 + q2) / A}`: shift from the half-step node offset.
    pub fn half_step_phase(&self, q: [i64; 2]) -> C64 {
        let s = if self.dims == 1 { q[0] } else { q[0] + q[1] };
        C64::from_polar(1.0, PI * s as f64 / self.a as f64)
    }
}

fn transpose(src: &[C64], dst: &mut [C64], a: usize) {
    for i in 0..a {
        for j in 0..a {
            dst[j * a + i] = src[i * a + j];
        }
    }
}

fn frequency(e: [usize; 2], kind: DomainKind) -> [i64; 2] {
    match kind {
        DomainKind::Disc => [e[0] as i64, 0],
        DomainKind::Ball2 => [e[0] as i64, e[1] as i64],
    }
}

/// Gram matrix `G[(i,k),(j,l)] = sum_nodes w conj(phi_i) V_kl phi_j`; identity
/// `V` when `values` is `None`.
pub fn gram(grid: &QuadratureGrid, basis: &MonomialBasis, values: Option<&NodeMatrices>, d: usize) -> CMat {
    let kind = grid.geom().kind();
    let fft = TorusFft::new(kind, grid.angular());
    let ts = grid.torus_size();
    let nb = basis.len();
    let freqs: Vec<[i64; 2]> = basis.exponents().iter().map(|&e| frequency(e, kind)).collect();
    // Index and phase of every frequency difference f_j - f_i.
    let mut shift = vec![(0usize, C64::new(0.0, 0.0)); nb * nb];
    for i in 0..nb {
        for j in 0..nb {
            let q = [freqs[j][0] - freqs[i][0], freqs[j][1] - freqs[i][1]];
            shift[i * nb + j] = (fft.index(q), fft.half_step_phase(q));
        }
    }
    let mut g = CMat::zeros(nb * d, nb * d);
    let mut radial = vec![0.0; nb];
    let mut buf = vec![C64::new(0.0, 0.0); ts];
    for (ri, ring) in grid.rings().iter().enumerate() {
        for (i, r) in radial.iter_mut().enumerate() {
            *r = basis.radial(i, ring);
        }
        for k in 0..d {
            for l in 0..d {
                match values {
                    None if k != l => continue,
                    None => buf.iter_mut().for_each(|x| *x = C64::new(1.0, 0.0)),
                    Some(v) => {
                        for (t, x) in buf.iter_mut().enumerate() {
                            *x = v.block(ri * ts + t)[k * d + l];
                        }
                    }
                }
                fft.inverse(&mut buf);
                for i in 0..nb {
                    let wi = ring.weight * radial[i];
                    if wi == 0.0 {
                        continue;
                    }
                    for j in 0..nb {
                        let (idx, phase) = shift[i * nb + j];
                        g[(i * d + k, j * d + l)] += buf[idx] * phase * (wi * radial[j]);
                    }
                }
            }
        }
    }
    g
}

/// `b_{i,k} = sum_nodes w conj(phi_i) f_k` for a node-major field `f` of width `d`.
pub fn analysis(grid: &QuadratureGrid, basis: &MonomialBasis, f: &[C64], d: usize) -> Vec<C64> {
    let kind = grid.geom().kind();
    let fft = TorusFft::new(kind, grid.angular());
    let ts = grid.torus_size();
    let nb = basis.len();
    let mut out = vec![C64::new(0.0, 0.0); nb * d];
    let mut buf = vec![C64::new(0.0, 0.0); ts];
    for (ri, ring) in grid.rings().iter().enumerate() {
        for k in 0..d {
            for (t, x) in buf.iter_mut().enumerate() {
                *x = f[(ri * ts + t) * d + k];
            }
            fft.forward(&mut buf);
            for (i, &e) in basis.exponents().iter().enumerate() {
                let q = frequency(e, kind);
                let phase = fft.half_step_phase(q).conj();
                out[i * d + k] += buf[fft.index(q)] * phase * (ring.weight * basis.radial(i, ring));
            }
        }
    }
    out
}

/// Node values of `sum_i c_{i,k} phi_i`.
pub fn synthesis(grid: &QuadratureGrid, basis: &MonomialBasis, c: &[C64], d: usize) -> Vec<C64> {
    let kind = grid.geom().kind();
    let fft = TorusFft::new(kind, grid.angular());
    let ts = grid.torus_size();
    let mut out = vec![C64::new(0.0, 0.0); grid.len() * d];
    let mut buf = vec![C64::new(0.0, 0.0); ts];
    for (ri, ring) in grid.rings().iter().enumerate() {
        for k in 0..d {
            buf.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            for (i, &e) in basis.exponents().iter().enumerate() {
                let q = frequency(e, kind);
                buf[fft.index(q)] += c[i * d + k] * fft.half_step_phase(q) * basis.radial(i, ring);
            }
            fft.inverse(&mut buf);
            for (t, x) in buf.iter().enumerate() {
                out[(ri * ts + t) * d + k] = *x;
            }
        }
    }
    out
}

/// Quadrature inner product `Re sum w <x, y>` of node-major fields.
pub fn quad_inner(grid: &QuadratureGrid, x: &[C64], y: &[C64], d: usize) -> f64 {
    let w = grid.weights();
    let mut acc = 0.0;
    for (n, (xs, ys)) in x.chunks(d).zip(y.chunks(d)).enumerate() {
        let mut s = 0.0;
        for (a, b) in xs.iter().zip(ys) {
            s += (a * b.conj()).re;
        }
        acc += w[n] * s;
    }
    acc
}

/// Discrete Bergman projection `P f = sum_ij phi_i C_ij <f, phi_j>_Q` with
/// `C = G0^{-1/2} diag(chi) G0^{-1/2}`, acting componentwise on `C^d` fields.
/// With the sharp taper this is the quadrature-orthogonal projection onto
/// polynomials of degree at most `N`.
#[derive(Clone, Debug)]
pub struct BergmanProjection {
    basis: MonomialBasis,
    d: usize,
    truncation: usize,
    taper: Taper,
    /// Scalar Gram matrix of the basis.
    gram: CMat,
    coupling: CMat,
}

impl BergmanProjection {
    pub fn assemble(grid: &QuadratureGrid, truncation: usize, d: usize) -> Result<Self> {
        Self::with_taper(grid, truncation, d, Taper::Smooth)
    }

    pub fn with_taper(grid: &QuadratureGrid, truncation: usize, d: usize, taper: Taper) -> Result<Self> {
        if truncation < 1 {
            return Err(LabError::InvalidParameter("truncation N must be at least 1".into()));
        }
        let degree = taper.kernel_degree(truncation);
        check_resolution(grid, degree)?;
        let basis = MonomialBasis::new(grid.geom().kind(), degree);
        let gram = gram(grid, &basis, None, 1);
        let coupling = match taper {
            Taper::Sharp => linalg::inverse(&gram)?,
            Taper::Smooth => {
                let h = linalg::hermitian_power(&gram, -0.5)?;
                let chi = nalgebra::DVector::from_iterator(
                    basis.len(),
                    (0..basis.len()).map(|i| C64::new(taper.factor(basis.total_degree(i), truncation), 0.0)),
                );
                &h * CMat::from_diagonal(&chi) * &h
            }
        };
        Ok(BergmanProjection { basis, d, truncation, taper, gram, coupling })
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn taper(&self) -> Taper {
        self.taper
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Largest deviation of the quadrature Gram matrix from the identity.
    pub fn gram_defect(&self) -> f64 {
        (&self.gram - CMat::identity(self.gram.nrows(), self.gram.ncols())).camax()
    }

    /// Polynomial coefficients of `P f`.
    pub fn coefficients(&self, grid: &QuadratureGrid, f: &[C64]) -> Vec<C64> {
        let d = self.d;
        let b = analysis(grid, &self.basis, f, d);
        let nb = self.basis.len();
        let mut c = vec![C64::new(0.0, 0.0); nb * d];
        for k in 0..d {
            for i in 0..nb {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..nb {
                    acc += self.coupling[(i, j)] * b[j * d + k];
                }
                c[i * d + k] = acc;
            }
        }
        c
    }

    pub fn apply(&self, grid: &QuadratureGrid, f: &[C64]) -> Vec<C64> {
        let c = self.coefficients(grid, f);
        synthesis(grid, &self.basis, &c, self.d)
    }

    /// `P f` at an arbitrary point from precomputed coefficients.
    pub fn evaluate(&self, c: &[C64], z: &Point) -> Vec<C64> {
        let d = self.d;
        let mut out = vec![C64::new(0.0, 0.0); d];
        for i in 0..self.basis.len() {
            let phi = self.basis.eval(i, z);
            for k in 0..d {
                out[k] += phi * c[i * d + k];
            }
        }
        out
    }

    /// `||P||` on `L^2(W)` from node values of `W` and `W^{-1}`:
    /// `sqrt(lambda_max(H^{1/2} C G_W C H^{1/2}))` with `H = G_{W^{-1}}`.
    pub fn weighted_norm(&self, grid: &QuadratureGrid, w: &NodeMatrices, w_inv: &NodeMatrices) -> Result<NormEstimate> {
        let d = self.d;
        if w.d() != d || w_inv.d() != d || w.len() != grid.len() {
            return Err(LabError::InvalidParameter("weight samples do not match the grid".into()));
        }
        let gw = gram(grid, &self.basis, Some(w), d);
        let h = gram(grid, &self.basis, Some(w_inv), d);
        let x = linalg::sqrt(&h)? * kron_identity(&self.coupling, d);
        let s = linalg::hermitian_part(&(&x * gw * x.adjoint()));
        let n = s.nrows();
        norm::power_iteration(
            n,
            |v| {
                let mut out = vec![C64::new(0.0, 0.0); n];
                for (i, o) in out.iter_mut().enumerate() {
                    for (j, x) in v.iter().enumerate() {
                        *o += s[(i, j)] * x;
                    }
                }
                out
            },
            norm::euclidean,
        )
    }
}

/// Angular samples must resolve every frequency difference of the kernel basis.
pub fn check_resolution(grid: &QuadratureGrid, degree: usize) -> Result<()> {
    if degree >= grid.angular() {
        return Err(LabError::Resolution(format!(
            "kernel degree {degree} needs more than {} angular nodes",
            grid.angular()
        )));
    }
    Ok(())
}

fn kron_identity(m: &CMat, d: usize) -> CMat {
    if d == 1 {
        return m.clone();
    }
    let n = m.nrows();
    let mut out = CMat::zeros(n * d, n * d);
    for i in 0..n {
        for j in 0..n {
            for k in 0..d {
                out[(i * d + k, j * d + k)] = m[(i, j)];
            }
        }
    }
    out
}

/// Ratios `||f||^2_{L^2(W)} / ||f||^2_{L^2(V)}` over holomorphic test functions:
/// every `z^m e_k` of degree at most `degree`, then `random` random vector
/// polynomials. Returns the maximum.
pub fn holomorphic_embedding_ratio(
    grid: &QuadratureGrid,
    w: &NodeMatrices,
    v: &NodeMatrices,
    degree: usize,
    random: usize,
    seed: u64,
) -> f64 {
    let d = w.d();
    let basis = MonomialBasis::new(grid.geom().kind(), degree);
    let gw = gram(grid, &basis, Some(w), d);
    let gv = gram(grid, &basis, Some(v), d);
    let mut best: f64 = 0.0;
    for i in 0..gw.nrows() {
        best = best.max(gw[(i, i)].re / gv[(i, i)].re);
    }
    for r in 0..random {
        let c = norm::random_vector(gw.nrows(), seed.wrapping_add(r as u64));
        let cv = nalgebra::DVector::from_vec(c);
        let num = (cv.adjoint() * &gw * &cv)[(0, 0)].re;
        let den = (cv.adjoint() * &gv * &cv)[(0, 0)].re;
        best = best.max(num / den);
    }
    best
}

/// `||P||_{L^2(W)} / (B2^{1/2} ||P||_{L^2(W~)})`.
pub fn transfer_ratio(norm_w: f64, b2: f64, norm_tilde: f64) -> f64 {
    norm_w / (b2.sqrt() * norm_tilde)
}
