//! Hermitian matrix helpers and flat per-node matrix storage.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{LabError, Result};
use crate::geometry::C64;

pub type CMat = DMatrix<C64>;

/// Relative eigenvalue floor applied before fractional powers.
pub const EIGEN_FLOOR: f64 = 1e-13;
/// Relative tolerance for negative eigenvalues before a matrix is rejected.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).camax()
}

/// Eigenvalues (ascending is not guaranteed) and eigenvectors.
pub fn eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].re;
    }
    eigen(m).0.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `m^p` for a positive semidefinite Hermitian `m`, with eigenvalues floored at
/// `EIGEN_FLOOR * max`.
pub fn hermitian_power(m: &CMat, p: f64) -> Result<CMat> {
    let n = m.nrows();
    if n == 1 {
        let v = m[(0, 0)].re;
        if !(v > 0.0) || !v.is_finite() {
            return Err(LabError::Data(format!("non-positive scalar weight value {v}")));
        }
        return Ok(CMat::from_element(1, 1, C64::new(v.powf(p), 0.0)));
    }
    let (values, vectors) = eigen(m);
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) || !top.is_finite() {
        return Err(LabError::Data(format!("matrix has no positive eigenvalue (max {top})")));
    }
    let floor = EIGEN_FLOOR * top;
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        if lam < -PSD_TOLERANCE * top {
            return Err(LabError::Data(format!("matrix not PSD: eigenvalue {lam} vs top {top}")));
        }
        let f = lam.max(floor).powf(p);
        for i in 0..n {
            scaled[(i, j)] *= f;
        }
    }
    Ok(scaled * vectors.adjoint())
}

pub fn sqrt(m: &CMat) -> Result<CMat> {
    hermitian_power(m, 0.5)
}

pub fn inv_sqrt(m: &CMat) -> Result<CMat> {
    hermitian_power(m, -0.5)
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    hermitian_power(m, -1.0)
}

/// `|| A^{1/2} B^{1/2} ||^2 = lambda_max(B^{1/2} A B^{1/2})`.
pub fn b2_term(a: &CMat, b: &CMat) -> Result<f64> {
    if a.nrows() == 1 {
        return Ok(a[(0, 0)].re * b[(0, 0)].re);
    }
    let bh = sqrt(b)?;
    Ok(max_eigenvalue(&(&bh * a * &bh)))
}

/// Conjugation `S M S` for Hermitian `S`.
pub fn conjugate(s: &CMat, m: &CMat) -> CMat {
    s * m * s
}

pub fn quadratic_form(m: &CMat, v: &[C64]) -> f64 {
    let d = m.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += v[i].conj() * m[(i, j)] * v[j];
        }
    }
    acc.re
}

pub fn mat_vec(m: &CMat, v: &[C64]) -> Vec<C64> {
    let d = m.nrows();
    (0..d).map(|i| (0..d).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// A `d x d` matrix per node, stored row-major in one flat buffer.
#[derive(Clone, Debug)]
pub struct NodeMatrices {
    d: usize,
    data: Vec<C64>,
}

impl NodeMatrices {
    pub fn from_fn(len: usize, d: usize, mut f: impl FnMut(usize) -> CMat) -> Self {
        let mut data = Vec::with_capacity(len * d * d);
        for i in 0..len {
            let m = f(i);
            for r in 0..d {
                for c in 0..d {
                    data.push(m[(r, c)]);
                }
            }
        }
        NodeMatrices { d, data }
    }

    pub fn try_from_fn(len: usize, d: usize, mut f: impl FnMut(usize) -> Result<CMat>) -> Result<Self> {
        let mut data = Vec::with_capacity(len * d * d);
        for i in 0..len {
            let m = f(i)?;
            for r in 0..d {
                for c in 0..d {
                    data.push(m[(r, c)]);
                }
            }
        }
        Ok(NodeMatrices { d, data })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.d * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, i: usize) -> &[C64] {
        let dd = self.d * self.d;
        &self.data[i * dd..(i + 1) * dd]
    }

    pub fn matrix(&self, i: usize) -> CMat {
        CMat::from_row_slice(self.d, self.d, self.block(i))
    }

    /// `out = M_i x` for the d-vector `x`.
    #[inline]
    pub fn apply(&self, i: usize, x: &[C64], out: &mut [C64]) {
        let d = self.d;
        let b = self.block(i);
        for r in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..d {
                acc += b[r * d + c] * x[c];
            }
            out[r] = acc;
        }
    }

    /// Applies the node matrices to a node-major vector field of length `len * d`.
    pub fn apply_field(&self, x: &[C64]) -> Vec<C64> {
        let d = self.d;
        let mut out = vec![C64::new(0.0, 0.0); x.len()];
        for (i, (xi, oi)) in x.chunks(d).zip(out.chunks_mut(d)).enumerate() {
            self.apply(i, xi, oi);
        }
        out
    }
}
