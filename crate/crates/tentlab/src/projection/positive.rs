//! The positive operator `P+` with kernel `|K_N(z, w)|`, applied ring by ring
//! as a circular convolution over the angular torus.

use super::grid::QuadratureGrid;
use super::norm::{self, NormEstimate};
use super::{check_resolution, quad_inner, MonomialBasis, Taper, TorusFft};
use crate::error::{LabError, Result};
use crate::geometry::C64;
use crate::linalg::NodeMatrices;

#[derive(Debug)]
pub struct PositiveOperator {
    fft: TorusFft,
    rings: usize,
    torus: usize,
    weights: Vec<f64>,
    /// Spectrum of `|K_N|` for each ring pair `a <= b`, packed upper-triangular.
    /// `|K_N|` is real and even in the angular offset, so the spectrum is real.
    spectra: Vec<Vec<f64>>,
}

impl PositiveOperator {
    pub fn assemble(grid: &QuadratureGrid, truncation: usize) -> Result<Self> {
        Self::with_taper(grid, truncation, Taper::Smooth)
    }

    /// Kernel `|sum_i chi_i phi_i(z) conj(phi_i(w))|`.
    pub fn with_taper(grid: &QuadratureGrid, truncation: usize, taper: Taper) -> Result<Self> {
        if truncation < 1 {
            return Err(LabError::InvalidParameter("truncation N must be at least 1".into()));
        }
        let kind = grid.geom().kind();
        let degree = taper.kernel_degree(truncation);
        check_resolution(grid, degree)?;
        let basis = MonomialBasis::new(kind, degree);
        let chi: Vec<f64> = (0..basis.len()).map(|i| taper.factor(basis.total_degree(i), truncation)).collect();
        let fft = TorusFft::new(kind, grid.angular());
        let ts = grid.torus_size();
        let rings = grid.rings();
        let radial: Vec<Vec<f64>> =
            rings.iter().map(|ring| (0..basis.len()).map(|i| basis.radial(i, ring)).collect()).collect();
        let index: Vec<usize> = basis.exponents().iter().map(|&e| fft.index(super::frequency(e, kind))).collect();
        let mut spectra = Vec::with_capacity(rings.len() * (rings.len() + 1) / 2);
        let mut buf = vec![C64::new(0.0, 0.0); ts];
        for a in 0..rings.len() {
            for b in a..rings.len() {
                buf.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
                for (i, &q) in index.iter().enumerate() {
                    buf[q] += chi[i] * radial[a][i] * radial[b][i];
                }
                // K_N at angular offset j, then |K_N| and its spectrum.
                fft.inverse(&mut buf);
                buf.iter_mut().for_each(|x| *x = C64::new(x.norm(), 0.0));
                fft.forward(&mut buf);
                spectra.push(buf.iter().map(|x| x.re).collect());
            }
        }
        Ok(PositiveOperator {
            fft,
            rings: rings.len(),
            torus: ts,
            weights: rings.iter().map(|r| r.weight).collect(),
            spectra,
        })
    }

    fn pair(&self, a: usize, b: usize) -> &[f64] {
        &self.spectra[packed(self.rings, a.min(b), a.max(b))]
    }

    /// `(P+ f)(z) = sum_w q(w) |K_N(z, w)| f(w)` for a node-major field of width `d`.
    pub fn apply(&self, f: &[C64], d: usize) -> Vec<C64> {
        let ts = self.torus;
        let mut hat = vec![C64::new(0.0, 0.0); self.rings * d * ts];
        let mut buf = vec![C64::new(0.0, 0.0); ts];
        for r in 0..self.rings {
            for k in 0..d {
                for (t, x) in buf.iter_mut().enumerate() {
                    *x = f[(r * ts + t) * d + k] * self.weights[r];
                }
                self.fft.forward(&mut buf);
                hat[(r * d + k) * ts..(r * d + k + 1) * ts].copy_from_slice(&buf);
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); f.len()];
        let scale = 1.0 / ts as f64;
        for a in 0..self.rings {
            for k in 0..d {
                buf.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
                for b in 0..self.rings {
                    let src = &hat[(b * d + k) * ts..(b * d + k + 1) * ts];
                    for ((x, s), h) in buf.iter_mut().zip(self.pair(a, b)).zip(src) {
                        *x += h * s;
                    }
                }
                self.fft.inverse(&mut buf);
                for (t, x) in buf.iter().enumerate() {
                    out[(a * ts + t) * d + k] = x * scale;
                }
            }
        }
        out
    }

    /// `||P+||` on `L^2(W)` given node values of `W` and `W^{-1/2}`.
    pub fn weighted_norm(
        &self,
        grid: &QuadratureGrid,
        w: &NodeMatrices,
        w_inv_sqrt: &NodeMatrices,
    ) -> Result<NormEstimate> {
        let d = w.d();
        if w_inv_sqrt.d() != d || w.len() != grid.len() || w_inv_sqrt.len() != grid.len() {
            return Err(LabError::InvalidParameter("weight samples do not match the grid".into()));
        }
        norm::power_iteration(
            grid.len() * d,
            |v| {
                let x = w_inv_sqrt.apply_field(v);
                let y = w.apply_field(&self.apply(&x, d));
                w_inv_sqrt.apply_field(&self.apply(&y, d))
            },
            |x, y| quad_inner(grid, x, y, d),
        )
    }
}

fn packed(n: usize, lo: usize, hi: usize) -> usize {
    lo * n - lo * (lo + 1) / 2 + hi
}
