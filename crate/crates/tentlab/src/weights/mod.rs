//! Matrix weights, their averages and B2 constants, step and tilde weights,
//! scalar traces, corona decompositions, reverse Hoelder exponents and the
//! dyadic maximal operator.

mod average;
mod corona;
mod regions;
mod step;

pub(crate) use average::SystemAverages;
pub use average::{average_matrix, b2_constant, B2Report, Region};
pub use corona::{
    corona_decompose, default_corona_threshold, dyadic_maximal, omega_field, reverse_holder_exponent,
    CoronaDecomposition, OmegaField, DEFAULT_REVERSE_HOLDER_C0, MAX_CORONA_THRESHOLD, REVERSE_HOLDER_CAP,
    REVERSE_HOLDER_STEP,
};
pub use regions::GridFamily;
pub use step::{lemma_chain_check, step_b2_check, ChainReport, StepWeight, TildeWeight};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::geometry::{Point, C64};
use crate::linalg::{self, CMat, NodeMatrices};
use crate::projection::grid::QuadratureGrid;

/// Largest admissible condition number of a weight at a quadrature node.
pub const MAX_CONDITION: f64 = 1e8;
/// Default bound on |alpha|, |beta| for power families.
pub const DEFAULT_MAX_EXPONENT: f64 = 0.9;
const RANDOM_MODES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum WeightFamily {
    Identity,
    /// `(1 - |z|^2)^alpha I`.
    ScalarPower {
        alpha: f64,
    },
    /// `diag((1 - |z|^2)^alpha, (1 - |z|^2)^(-beta))`.
    DiagonalPower {
        alpha: f64,
        beta: f64,
    },
    /// `U(m arg z) diag(v^alpha, v^(-alpha)) U(m arg z)*` with `U` a plane rotation.
    RotatedDiagonal {
        alpha: f64,
        winding: i32,
    },
    /// `exp(H(z))` for a smooth random Hermitian field with `||H|| <= amplitude`.
    RandomLogField {
        amplitude: f64,
        seed: u64,
    },
}

impl WeightFamily {
    pub fn name(&self) -> &'static str {
        match self {
            WeightFamily::Identity => "identity",
            WeightFamily::ScalarPower { .. } => "scalar_power",
            WeightFamily::DiagonalPower { .. } => "diagonal_power",
            WeightFamily::RotatedDiagonal { .. } => "rotated_diagonal",
            WeightFamily::RandomLogField { .. } => "random_log_field",
        }
    }

    /// The two CSV parameter columns.
    pub fn params(&self) -> (f64, f64) {
        match *self {
            WeightFamily::Identity => (0.0, 0.0),
            WeightFamily::ScalarPower { alpha } => (alpha, 0.0),
            WeightFamily::DiagonalPower { alpha, beta } => (alpha, beta),
            WeightFamily::RotatedDiagonal { alpha, winding } => (alpha, winding as f64),
            WeightFamily::RandomLogField { amplitude, seed } => (amplitude, seed as f64),
        }
    }

    /// The family of `W^{-1}`.
    pub fn dual(&self) -> WeightFamily {
        match *self {
            WeightFamily::Identity => WeightFamily::Identity,
            WeightFamily::ScalarPower { alpha } => WeightFamily::ScalarPower { alpha: -alpha },
            WeightFamily::DiagonalPower { alpha, beta } => WeightFamily::DiagonalPower { alpha: -alpha, beta: -beta },
            WeightFamily::RotatedDiagonal { alpha, winding } => {
                WeightFamily::RotatedDiagonal { alpha: -alpha, winding }
            }
            ref f @ WeightFamily::RandomLogField { .. } => f.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct LogMode {
    coefficient: CMat,
    frequency: [f64; 4],
    phase: f64,
}

/// `W = U diag(exp(l)) U*`: eigenbasis (identity when `None`) and log-eigenvalues.
#[derive(Clone, Debug)]
pub struct LogSpectrum {
    pub basis: Option<CMat>,
    pub logs: Vec<f64>,
}

impl LogSpectrum {
    pub fn power(&self, p: f64) -> CMat {
        let d = self.logs.len();
        let diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            d,
            self.logs.iter().map(|&l| C64::new((p * l).exp(), 0.0)),
        ));
        match &self.basis {
            None => diag,
            Some(u) => u * diag * u.adjoint(),
        }
    }

    pub fn condition(&self) -> f64 {
        let (lo, hi) = self.logs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| (a.min(l), b.max(l)));
        (hi - lo).exp()
    }
}

/// A Hermitian positive definite `d x d` field on the domain.
#[derive(Clone, Debug)]
pub struct MatrixWeightField {
    d: usize,
    family: WeightFamily,
    modes: Vec<LogMode>,
}

impl MatrixWeightField {
    /// Validates the family for dimension `d`; power exponents must satisfy `|alpha| < 1`.
    pub fn new(family: WeightFamily, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(LabError::InvalidParameter("weight dimension d must be positive".into()));
        }
        let check = |name: &str, a: f64| {
            if !a.is_finite() || a.abs() >= 1.0 {
                Err(LabError::WeightRejected(format!("{name} = {a} outside the B2-finite range |{name}| < 1")))
            } else {
                Ok(())
            }
        };
        let mut modes = Vec::new();
        match family {
            WeightFamily::Identity => {}
            WeightFamily::ScalarPower { alpha } => check("alpha", alpha)?,
            WeightFamily::DiagonalPower { alpha, beta } => {
                check("alpha", alpha)?;
                check("beta", beta)?;
                if d != 2 {
                    return Err(LabError::WeightRejected(format!("diagonal_power needs d = 2, got {d}")));
                }
            }
            WeightFamily::RotatedDiagonal { alpha, .. } => {
                check("alpha", alpha)?;
                if d != 2 {
                    return Err(LabError::WeightRejected(format!("rotated_diagonal needs d = 2, got {d}")));
                }
            }
            WeightFamily::RandomLogField { amplitude, seed } => {
                let cap = 0.5 * MAX_CONDITION.ln();
                if !(amplitude >= 0.0 && amplitude < cap) {
                    return Err(LabError::WeightRejected(format!("amplitude {amplitude} not in [0, {cap:.3})")));
                }
                modes = random_modes(d, amplitude, seed);
            }
        }
        Ok(MatrixWeightField { d, family, modes })
    }

    pub fn identity(d: usize) -> Self {
        MatrixWeightField { d, family: WeightFamily::Identity, modes: Vec::new() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn family(&self) -> &WeightFamily {
        &self.family
    }

    /// Field of `W^{-1}`.
    pub fn dual(&self) -> Self {
        let mut out = MatrixWeightField { d: self.d, family: self.family.dual(), modes: self.modes.clone() };
        for m in &mut out.modes {
            m.coefficient = -m.coefficient.clone();
        }
        out
    }

    /// Spectral form at `z`, where `defect = 1 - |z|^2` is passed separately
    /// so boundary layers keep full precision.
    pub fn spectrum(&self, z: &Point, defect: f64) -> LogSpectrum {
        let lv = defect.ln();
        match self.family {
            WeightFamily::Identity => LogSpectrum { basis: None, logs: vec![0.0; self.d] },
            WeightFamily::ScalarPower { alpha } => LogSpectrum { basis: None, logs: vec![alpha * lv; self.d] },
            WeightFamily::DiagonalPower { alpha, beta } => {
                LogSpectrum { basis: None, logs: vec![alpha * lv, -beta * lv] }
            }
            WeightFamily::RotatedDiagonal { alpha, winding } => {
                let theta = winding as f64 * z.0[0].arg();
                let (s, c) = theta.sin_cos();
                let u = CMat::from_row_slice(
                    2,
                    2,
                    &[C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)],
                );
                LogSpectrum { basis: Some(u), logs: vec![alpha * lv, -alpha * lv] }
            }
            WeightFamily::RandomLogField { .. } => {
                let p = [z.0[0].re, z.0[0].im, z.0[1].re, z.0[1].im];
                let mut h = CMat::zeros(self.d, self.d);
                for m in &self.modes {
                    let arg: f64 = m.frequency.iter().zip(&p).map(|(k, x)| k * x).sum::<f64>() + m.phase;
                    h += &m.coefficient * C64::new(arg.cos(), 0.0);
                }
                let (logs, vectors) = linalg::eigen(&h);
                LogSpectrum { basis: Some(vectors), logs }
            }
        }
    }

    pub fn eval(&self, z: &Point, defect: f64) -> CMat {
        self.spectrum(z, defect).power(1.0)
    }

    pub fn eval_at(&self, z: &Point) -> CMat {
        self.eval(z, 1.0 - z.norm_sqr())
    }

    pub fn power(&self, z: &Point, defect: f64, p: f64) -> CMat {
        self.spectrum(z, defect).power(p)
    }
}

fn random_modes(d: usize, amplitude: f64, seed: u64) -> Vec<LogMode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..RANDOM_MODES)
        .map(|_| {
            let mut a = CMat::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    a[(i, j)] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                }
            }
            let h = linalg::hermitian_part(&a);
            let norm = linalg::eigen(&h).0.iter().fold(0.0f64, |m, l| m.max(l.abs()));
            let coefficient = h * C64::new(amplitude / (RANDOM_MODES as f64 * norm.max(1e-300)), 0.0);
            let frequency = std::array::from_fn(|_| 2.0 * rng.sample::<f64, _>(StandardNormal));
            LogMode { coefficient, frequency, phase: rng.random_range(0.0..2.0 * PI) }
        })
        .collect()
}

/// `W`, `W^{-1}`, `W^{1/2}` and `W^{-1/2}` at every node of a grid.
#[derive(Clone, Debug)]
pub struct WeightSamples {
    pub w: NodeMatrices,
    pub inv: NodeMatrices,
    pub sqrt: NodeMatrices,
    pub inv_sqrt: NodeMatrices,
    pub max_condition: f64,
}

impl WeightSamples {
    pub fn on_grid(field: &MatrixWeightField, grid: &QuadratureGrid) -> Result<Self> {
        let d = field.d();
        let spectra: Vec<LogSpectrum> =
            (0..grid.len()).map(|i| field.spectrum(&grid.nodes()[i], grid.defect(i))).collect();
        let mut max_condition: f64 = 1.0;
        for (i, s) in spectra.iter().enumerate() {
            let c = s.condition();
            if !(c < MAX_CONDITION) {
                return Err(LabError::Data(format!(
                    "{} has condition number {c:e} at node {i} (limit {MAX_CONDITION:e})",
                    field.family().name()
                )));
            }
            max_condition = max_condition.max(c);
        }
        let at = |p: f64| NodeMatrices::from_fn(grid.len(), d, |i| spectra[i].power(p));
        Ok(WeightSamples { w: at(1.0), inv: at(-1.0), sqrt: at(0.5), inv_sqrt: at(-0.5), max_condition })
    }

    /// Samples of a field given only by its node matrices.
    pub fn from_matrices(w: NodeMatrices) -> Result<Self> {
        let d = w.d();
        let n = w.len();
        let mut max_condition: f64 = 1.0;
        let mut inv = Vec::with_capacity(n);
        let mut sqrt = Vec::with_capacity(n);
        let mut inv_sqrt = Vec::with_capacity(n);
        for i in 0..n {
            let (values, vectors) = linalg::eigen(&w.matrix(i));
            let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| (a.min(l), b.max(l)));
            if !(lo > 0.0) {
                return Err(LabError::Data(format!("weight singular at node {i} (eigenvalue {lo:e})")));
            }
            max_condition = max_condition.max(hi / lo);
            let spectrum = LogSpectrum { basis: Some(vectors), logs: values.iter().map(|l| l.ln()).collect() };
            inv.push(spectrum.power(-1.0));
            sqrt.push(spectrum.power(0.5));
            inv_sqrt.push(spectrum.power(-0.5));
        }
        let build = |v: Vec<CMat>| {
            let mut it = v.into_iter();
            NodeMatrices::from_fn(n, d, |_| it.next().unwrap())
        };
        Ok(WeightSamples { w, inv: build(inv), sqrt: build(sqrt), inv_sqrt: build(inv_sqrt), max_condition })
    }

    pub fn d(&self) -> usize {
        self.w.d()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainGeometry;

    #[test]
    fn alpha_zero_is_identity() {
        let w = MatrixWeightField::new(WeightFamily::ScalarPower { alpha: 0.0 }, 2).unwrap();
        let z = Point::polar(0.7, 1.1);
        assert!((w.eval_at(&z) - CMat::identity(2, 2)).camax() < 1e-15);
    }

    #[test]
    fn winding_zero_is_diagonal() {
        let r = MatrixWeightField::new(WeightFamily::RotatedDiagonal { alpha: 0.3, winding: 0 }, 2).unwrap();
        let d = MatrixWeightField::new(WeightFamily::DiagonalPower { alpha: 0.3, beta: 0.3 }, 2).unwrap();
        let z = Point::polar(0.9, 2.0);
        assert!((r.eval_at(&z) - d.eval_at(&z)).camax() < 1e-14);
    }

    #[test]
    fn out_of_range_exponent_is_rejected() {
        let err = MatrixWeightField::new(WeightFamily::ScalarPower { alpha: 0.99 }, 1);
        assert!(err.is_ok());
        assert!(matches!(
            MatrixWeightField::new(WeightFamily::ScalarPower { alpha: 1.0 }, 1),
            Err(LabError::WeightRejected(_))
        ));
        assert!(matches!(
            MatrixWeightField::new(WeightFamily::RotatedDiagonal { alpha: 0.2, winding: 1 }, 1),
            Err(LabError::WeightRejected(_))
        ));
    }

    #[test]
    fn dual_field_is_inverse() {
        let fams = [
            WeightFamily::RotatedDiagonal { alpha: 0.25, winding: 2 },
            WeightFamily::RandomLogField { amplitude: 1.5, seed: 3 },
        ];
        for fam in fams {
            let w = MatrixWeightField::new(fam, 2).unwrap();
            let z = Point::polar(0.8, 0.4);
            let prod = w.eval_at(&z) * w.dual().eval_at(&z);
            assert!((prod - CMat::identity(2, 2)).camax() < 1e-12);
            assert!(linalg::hermitian_defect(&w.eval_at(&z)) < 1e-12);
        }
    }

    #[test]
    fn samples_are_consistent() {
        let g = QuadratureGrid::default_for(&DomainGeometry::disc()).unwrap();
        let w = MatrixWeightField::new(WeightFamily::RotatedDiagonal { alpha: 0.2667, winding: 4 }, 2).unwrap();
        let s = WeightSamples::on_grid(&w, &g).unwrap();
        assert!(s.max_condition < MAX_CONDITION);
        for i in (0..g.len()).step_by(997) {
            let m = s.sqrt.matrix(i) * s.sqrt.matrix(i);
            assert!((m - s.w.matrix(i)).camax() < 1e-9 * s.max_condition);
        }
        let back = WeightSamples::from_matrices(s.w.clone()).unwrap();
        assert!((back.inv.matrix(5) - s.inv.matrix(5)).camax() < 1e-8);
    }
}
