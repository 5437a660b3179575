//! Weight generators, parameter sweeps over weight families, exponent fits
//! and the acceptance suite.

pub mod acceptance;
mod report;

pub use report::{fit_exponent, verify_main_theorem, ExponentFit, MainTheoremRatios, SweepSummary, CSV_COLUMNS};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domination::{self, DirectionSet, SquareForms};
use crate::dyadic::{self, AdjacentFamily};
use crate::error::{LabError, Result};
use crate::geometry::{DomainGeometry, DomainKind, C64};
use crate::linalg;
use crate::projection::grid::{GridParams, QuadratureGrid};
use crate::projection::norm::random_vector;
use crate::projection::positive::PositiveOperator;
use crate::projection::{self, BergmanProjection, Taper};
use crate::weights::{
    self, b2_constant, corona_decompose, default_corona_threshold, lemma_chain_check, omega_field,
    reverse_holder_exponent, step_b2_check, GridFamily, MatrixWeightField, StepWeight, TildeWeight, WeightFamily,
    WeightSamples, DEFAULT_REVERSE_HOLDER_C0,
};

/// Smallest admissible `(r - 1) B2` of a reverse Hoelder exponent.
pub const REVERSE_HOLDER_GAP: f64 = 0.01;
pub const DEFAULT_SEED: u64 = 20_240_601;
/// Rotated rows stay below this exponent so the node condition number fits.
pub const ROTATED_ALPHAS: [f64; 2] = [0.1333, 0.2667];
pub const ROTATED_WINDINGS: [i32; 3] = [1, 2, 4];
/// Random unit vectors probed per tent on top of the canonical basis.
pub const RANDOM_PROBES: usize = 8;

/// The canonical basis of `C^d` followed by `RANDOM_PROBES` seeded unit vectors.
fn probe_directions(d: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut out: Vec<Vec<C64>> =
        (0..d).map(|k| (0..d).map(|j| C64::new(if j == k { 1.0 } else { 0.0 }, 0.0)).collect()).collect();
    for r in 0..RANDOM_PROBES {
        let v = random_vector(d, seed.wrapping_add(r as u64));
        let n = linalg::vec_norm(&v);
        out.push(v.into_iter().map(|x| x / n).collect());
    }
    out
}

/// A weight family instance and its matrix dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightFamilySpec {
    pub family: WeightFamily,
    pub d: usize,
}

impl WeightFamilySpec {
    pub fn new(family: WeightFamily, d: usize) -> Self {
        WeightFamilySpec { family, d }
    }

    /// Builds a family from its name and two parameter values.
    pub fn parse(name: &str, p1: f64, p2: f64, d: Option<usize>) -> Result<Self> {
        let (family, natural_d) = match name {
            "identity" => (WeightFamily::Identity, 1),
            "scalar_power" => (WeightFamily::ScalarPower { alpha: p1 }, 1),
            "diagonal_power" => (WeightFamily::DiagonalPower { alpha: p1, beta: p2 }, 2),
            "rotated_diagonal" => {
                if p2.fract() != 0.0 {
                    return Err(LabError::InvalidParameter(format!("winding {p2} must be an integer")));
                }
                (WeightFamily::RotatedDiagonal { alpha: p1, winding: p2 as i32 }, 2)
            }
            "random_log_field" => {
                if p2 < 0.0 || p2.fract() != 0.0 {
                    return Err(LabError::InvalidParameter(format!("seed {p2} must be a nonnegative integer")));
                }
                (WeightFamily::RandomLogField { amplitude: p1, seed: p2 as u64 }, 2)
            }
            other => return Err(LabError::InvalidParameter(format!("unknown weight family '{other}'"))),
        };
        Ok(WeightFamilySpec { family, d: d.unwrap_or(natural_d) })
    }
}

/// Validates a spec against the declared exponent range and builds the field.
pub fn generate_weight(spec: &WeightFamilySpec, max_exponent: f64) -> Result<MatrixWeightField> {
    let exps: Vec<f64> = match spec.family {
        WeightFamily::ScalarPower { alpha } | WeightFamily::RotatedDiagonal { alpha, .. } => vec![alpha],
        WeightFamily::DiagonalPower { alpha, beta } => vec![alpha, beta],
        _ => vec![],
    };
    let field = MatrixWeightField::new(spec.family.clone(), spec.d)?;
    if let Some(a) = exps.iter().find(|a| a.abs() > max_exponent) {
        return Err(LabError::WeightRejected(format!("exponent {a} outside the declared range |.| <= {max_exponent}")));
    }
    Ok(field)
}

/// The default disc rows: 13 scalar exponents in `[-0.8, 0.8]` and six
/// rotated matrix rows; the ball uses five scalar exponents.
pub fn default_weights(kind: DomainKind) -> Vec<WeightFamilySpec> {
    match kind {
        DomainKind::Disc => {
            let mut rows: Vec<WeightFamilySpec> = (0..13)
                .map(|i| {
                    let alpha = ((-0.8 + 0.8 * i as f64 / 6.0) * 1e12).round() / 1e12;
                    WeightFamilySpec::new(WeightFamily::ScalarPower { alpha }, 1)
                })
                .collect();
            for winding in ROTATED_WINDINGS {
                for alpha in ROTATED_ALPHAS {
                    rows.push(WeightFamilySpec::new(WeightFamily::RotatedDiagonal { alpha, winding }, 2));
                }
            }
            rows
        }
        DomainKind::Ball2 => [-0.5, -0.25, 0.0, 0.25, 0.5]
            .into_iter()
            .map(|alpha| WeightFamilySpec::new(WeightFamily::ScalarPower { alpha }, 1))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub kind: DomainKind,
    pub grid: GridParams,
    pub truncation: usize,
    pub taper: Taper,
    pub weights: Vec<WeightFamilySpec>,
    pub max_exponent: f64,
    /// Skip the (weight independent) domination scan when false.
    pub domination: bool,
    pub directions: usize,
    pub samples: usize,
    pub polynomials: usize,
    pub polynomial_degree: usize,
    /// Random fields per row for the square functionals.
    pub square_fields: usize,
    /// Tents per row for the reverse Hoelder and corona checks.
    pub rh_tents: usize,
    pub embedding_degree: usize,
    pub embedding_random: usize,
    pub chain_random: usize,
    pub seed: u64,
    /// Write measured seconds; zeros keep the CSV byte-reproducible.
    pub timing: bool,
}

impl SweepConfig {
    pub fn default_for(kind: DomainKind) -> Self {
        let ball = kind == DomainKind::Ball2;
        SweepConfig {
            kind,
            grid: GridParams::default_for(kind),
            truncation: projection::default_truncation(kind),
            taper: Taper::Smooth,
            weights: default_weights(kind),
            max_exponent: weights::DEFAULT_MAX_EXPONENT,
            domination: true,
            directions: domination::DEFAULT_DIRECTIONS,
            samples: domination::DEFAULT_SAMPLES,
            polynomials: if ball { 10 } else { domination::DEFAULT_POLYNOMIALS },
            polynomial_degree: domination::DEFAULT_POLYNOMIAL_DEGREE,
            square_fields: if ball { 8 } else { 50 },
            rh_tents: 10,
            embedding_degree: if ball { 8 } else { 32 },
            embedding_random: 20,
            chain_random: 10,
            seed: DEFAULT_SEED,
            timing: true,
        }
    }

    /// Grid and truncation doubled, everything else kept.
    pub fn doubled(&self) -> Self {
        SweepConfig { grid: self.grid.doubled(), truncation: 2 * self.truncation, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::InvalidParameter(m));
        if self.truncation < 1 {
            return bad("truncation N must be at least 1".into());
        }
        if self.taper.kernel_degree(self.truncation) >= self.grid.angular {
            return bad(format!(
                "kernel degree {} needs more than {} angular nodes",
                self.taper.kernel_degree(self.truncation),
                self.grid.angular
            ));
        }
        if self.grid.radial < 8 || self.grid.angular < 8 {
            return bad("grid counts R and A must be at least 8".into());
        }
        if !(self.max_exponent > 0.0 && self.max_exponent < 1.0) {
            return bad(format!("max exponent {} must lie in (0, 1)", self.max_exponent));
        }
        if self.domination && (self.directions < 8 || self.samples == 0 || self.polynomials == 0) {
            return bad("domination needs at least 8 directions, one sample and one polynomial".into());
        }
        if self.rh_tents == 0 {
            return bad("at least one reverse Hoelder tent is needed".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationSummary {
    pub constant: f64,
    pub violations: usize,
    pub directions: usize,
    pub samples: usize,
    pub polynomials: usize,
    pub seconds: f64,
}

/// One sweep point. Numeric fields are NaN on failed rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: String,
    pub param1: f64,
    pub param2: f64,
    pub d: usize,
    pub seed: u64,
    pub b2: f64,
    pub b2_small_tents: f64,
    pub norm_w: f64,
    pub norm_tilde: f64,
    pub norm_pplus_tilde: f64,
    pub transfer_ratio: f64,
    pub domination_c: f64,
    /// Smallest reverse Hoelder exponent over the probed tents.
    pub reverse_holder_r: f64,
    pub reverse_holder_violations: usize,
    pub reverse_holder_tents: usize,
    pub corona_decompositions: usize,
    pub corona_packing_failures: usize,
    /// `max S1 / (B2 ||g||^2)`.
    pub s1_ratio: f64,
    /// `max S2 / (B2^2 ||g||^2)`.
    pub s2_ratio: f64,
    pub step_b2_max: f64,
    pub chain_excess: f64,
    pub embedding_ratio: f64,
    pub embedding_ratio_doubled: f64,
    pub grid_r: usize,
    pub grid_a: usize,
    pub trunc_n: usize,
    pub seconds: f64,
    pub failure: Option<String>,
}

impl SweepRow {
    fn blank(spec: &WeightFamilySpec, config: &SweepConfig, seed: u64) -> Self {
        let (param1, param2) = spec.family.params();
        SweepRow {
            family: spec.family.name().to_string(),
            param1,
            param2,
            d: spec.d,
            seed,
            b2: f64::NAN,
            b2_small_tents: f64::NAN,
            norm_w: f64::NAN,
            norm_tilde: f64::NAN,
            norm_pplus_tilde: f64::NAN,
            transfer_ratio: f64::NAN,
            domination_c: f64::NAN,
            reverse_holder_r: f64::NAN,
            reverse_holder_violations: 0,
            reverse_holder_tents: 0,
            corona_decompositions: 0,
            corona_packing_failures: 0,
            s1_ratio: f64::NAN,
            s2_ratio: f64::NAN,
            step_b2_max: f64::NAN,
            chain_excess: f64::NAN,
            embedding_ratio: f64::NAN,
            embedding_ratio_doubled: f64::NAN,
            grid_r: config.grid.radial,
            grid_a: config.grid.angular,
            trunc_n: config.truncation,
            seconds: 0.0,
            failure: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub domination: Option<DominationSummary>,
}

impl SweepReport {
    pub fn ok_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.is_ok())
    }

    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter_map(|r| r.failure.as_ref().map(|f| format!("{}({}, {}): {f}", r.family, r.param1, r.param2)))
            .collect()
    }
}

/// Grid, dyadic family and operators shared by the rows of a sweep.
pub struct SweepContext {
    pub config: SweepConfig,
    pub family: GridFamily,
    projections: Vec<(usize, BergmanProjection)>,
    positive: PositiveOperator,
}

impl SweepContext {
    pub fn new(config: SweepConfig) -> Result<Self> {
        config.validate()?;
        let geom = DomainGeometry::of_kind(config.kind);
        let family = AdjacentFamily::build(&geom, dyadic::DEFAULT_S, config.grid.levels)?;
        Self::with_family(config, family)
    }

    /// Context over given base systems (e.g. loaded from a cache); they must
    /// reach the grid's analysis depth.
    pub fn with_family(config: SweepConfig, family: AdjacentFamily) -> Result<Self> {
        config.validate()?;
        let geom = DomainGeometry::of_kind(config.kind);
        // the grid's panel breaks sit on the default kube boundaries
        let aligned = |s: &dyadic::DyadicSystem| {
            s.max_level() == config.grid.levels && s.s() == dyadic::DEFAULT_S && s.delta() == geom.delta0()
        };
        if family.geom().kind() != config.kind || !family.systems().iter().all(aligned) {
            return Err(LabError::InvalidParameter(format!(
                "dyadic systems must be {} systems with s = {}, delta = {} and depth {}",
                config.kind.name(),
                dyadic::DEFAULT_S,
                geom.delta0(),
                config.grid.levels
            )));
        }
        let grid = QuadratureGrid::build(&geom, config.grid)?;
        let mut dims: Vec<usize> = config.weights.iter().map(|s| s.d).collect();
        if config.domination {
            dims.push(2);
        }
        dims.sort_unstable();
        dims.dedup();
        let projections = dims
            .into_iter()
            .map(|d| Ok((d, BergmanProjection::with_taper(&grid, config.truncation, d, config.taper)?)))
            .collect::<Result<_>>()?;
        let positive = PositiveOperator::with_taper(&grid, config.truncation, config.taper)?;
        let family = GridFamily::new(grid, family.with_cousins())?;
        Ok(SweepContext { config, family, projections, positive })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        self.family.grid()
    }

    /// Projection acting on `C^d` fields.
    pub fn projection(&self, d: usize) -> Result<&BergmanProjection> {
        self.projections
            .iter()
            .find(|(k, _)| *k == d)
            .map(|(_, p)| p)
            .ok_or_else(|| LabError::InvalidParameter(format!("no projection assembled for d = {d}")))
    }

    pub fn positive(&self) -> &PositiveOperator {
        &self.positive
    }

    /// Largest `Re<P f(z), xi> / h_{Lf(z)}(xi)` over random `C^2` polynomials.
    pub fn domination_scan(&self, directions: usize, samples: usize, polynomials: usize) -> Result<DominationSummary> {
        let start = Instant::now();
        let c = &self.config;
        let dirs = DirectionSet::new(2, directions, domination::DIRECTION_SEED)?;
        let points = domination::stratified_samples(&self.family, samples, c.seed);
        let p = self.projection(2)?;
        let mut constant: f64 = 0.0;
        let mut violations = 0;
        for k in 0..polynomials {
            let f = domination::random_vector_polynomial(self.grid(), 2, c.polynomial_degree, c.seed + k as u64);
            let r = domination::domination_constant(&self.family, &f, &p.apply(self.grid(), &f), &points, &dirs);
            constant = constant.max(r.constant);
            violations += r.violations.len();
        }
        Ok(DominationSummary {
            constant,
            violations,
            directions,
            samples: points.len(),
            polynomials,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn run_row(&self, spec: &WeightFamilySpec, seed: u64) -> SweepRow {
        let start = Instant::now();
        let mut row = SweepRow::blank(spec, &self.config, seed);
        if let Err(e) = self.fill_row(spec, seed, &mut row) {
            let blank = SweepRow::blank(spec, &self.config, seed);
            row = SweepRow { failure: Some(e.to_string()), ..blank };
        }
        if self.config.timing {
            row.seconds = start.elapsed().as_secs_f64();
        }
        row
    }

    fn fill_row(&self, spec: &WeightFamilySpec, seed: u64, row: &mut SweepRow) -> Result<()> {
        let c = &self.config;
        let gf = &self.family;
        let grid = self.grid();
        let field = generate_weight(spec, c.max_exponent)?;
        let samples = WeightSamples::on_grid(&field, grid)?;
        let b2 = b2_constant(gf, &samples)?;
        row.b2 = b2.value;
        row.b2_small_tents = b2.small_tents;
        let p = self.projection(spec.d)?;
        row.norm_w = p.weighted_norm(grid, &samples.w, &samples.inv)?.value;
        let tilde = TildeWeight::build(gf, &samples)?;
        row.norm_tilde = p.weighted_norm(grid, &tilde.samples.w, &tilde.samples.inv)?.value;
        row.norm_pplus_tilde = self.positive.weighted_norm(grid, &tilde.samples.w, &tilde.samples.inv_sqrt)?.value;
        row.transfer_ratio = projection::transfer_ratio(row.norm_w, row.b2, row.norm_tilde);

        let mut step_max: f64 = 0.0;
        let mut chain: f64 = f64::NEG_INFINITY;
        let mut first = None;
        for l in 0..gf.len() {
            let step = StepWeight::build(gf, l, &samples)?;
            step_max = step_max.max(step_b2_check(gf, &step, row.b2)?);
            chain = chain.max(lemma_chain_check(gf, &samples, &step, c.chain_random, seed)?.max_relative_excess);
            if l == 0 {
                first = Some(step);
            }
        }
        row.step_b2_max = step_max;
        row.chain_excess = chain;
        let step = first.expect("nonempty family");

        let cells = gf.system(0).num_cells();
        let stride = (cells / c.rh_tents).max(1);
        let threshold = default_corona_threshold(row.b2);
        let mut r_min = f64::INFINITY;
        for (i, cell) in (0..cells).step_by(stride).take(c.rh_tents).enumerate() {
            row.reverse_holder_tents += 1;
            for v in probe_directions(spec.d, seed.wrapping_add(1000 + (i * RANDOM_PROBES) as u64)) {
                let omega = omega_field(gf, &step, cell, &v)?;
                match reverse_holder_exponent(gf, &omega, DEFAULT_REVERSE_HOLDER_C0) {
                    Ok(r) => {
                        r_min = r_min.min(r);
                        if r - 1.0 < REVERSE_HOLDER_GAP / row.b2 {
                            row.reverse_holder_violations += 1;
                        }
                    }
                    Err(LabError::ReverseHolderViolation { .. }) => row.reverse_holder_violations += 1,
                    Err(e) => return Err(e),
                }
                let corona = corona_decompose(gf, &omega, threshold)?;
                row.corona_decompositions += 1;
                if !corona.packing_holds() {
                    row.corona_packing_failures += 1;
                }
            }
        }
        row.reverse_holder_r = r_min;

        let forms = SquareForms::new(gf, &step)?;
        let (mut s1, mut s2): (f64, f64) = (0.0, 0.0);
        for k in 0..c.square_fields {
            let g =
                domination::random_vector_polynomial(grid, spec.d, c.polynomial_degree, seed.wrapping_add(k as u64));
            let sq = forms.evaluate(gf, &g)?;
            s1 = s1.max(sq.s1 / (row.b2 * sq.norm_sq));
            s2 = s2.max(sq.s2 / (row.b2 * row.b2 * sq.norm_sq));
        }
        row.s1_ratio = s1;
        row.s2_ratio = s2;

        let emb = |deg| {
            projection::holomorphic_embedding_ratio(grid, &samples.w, &tilde.samples.w, deg, c.embedding_random, seed)
        };
        row.embedding_ratio = emb(c.embedding_degree);
        row.embedding_ratio_doubled = emb(2 * c.embedding_degree);
        Ok(())
    }
}

/// Every row of the configuration; rows run in parallel and keep their order.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport> {
    let ctx = SweepContext::new(config.clone())?;
    run_sweep_with(&ctx)
}

pub fn run_sweep_with(ctx: &SweepContext) -> Result<SweepReport> {
    let c = &ctx.config;
    let domination = if c.domination {
        let mut d = ctx.domination_scan(c.directions, c.samples, c.polynomials)?;
        if !c.timing {
            d.seconds = 0.0;
        }
        Some(d)
    } else {
        None
    };
    let mut rows: Vec<SweepRow> =
        c.weights.par_iter().enumerate().map(|(i, spec)| ctx.run_row(spec, c.seed.wrapping_add(i as u64))).collect();
    if let Some(d) = &domination {
        for r in rows.iter_mut().filter(|r| r.is_ok()) {
            r.domination_c = d.constant;
        }
    }
    Ok(SweepReport { config: c.clone(), rows, domination })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_generate() {
        let s = WeightFamilySpec::parse("rotated_diagonal", 0.2, 3.0, None).unwrap();
        assert_eq!(s.d, 2);
        assert_eq!(s.family, WeightFamily::RotatedDiagonal { alpha: 0.2, winding: 3 });
        assert!(WeightFamilySpec::parse("rotated_diagonal", 0.2, 1.5, None).is_err());
        assert!(WeightFamilySpec::parse("bogus", 0.0, 0.0, None).is_err());
        let over = WeightFamilySpec::new(WeightFamily::ScalarPower { alpha: 0.95 }, 1);
        assert!(matches!(generate_weight(&over, 0.9), Err(LabError::WeightRejected(_))));
        let bad = WeightFamilySpec::new(WeightFamily::ScalarPower { alpha: 1.0 }, 1);
        assert!(matches!(generate_weight(&bad, 0.99), Err(LabError::WeightRejected(_))));
    }

    #[test]
    fn default_rows() {
        let rows = default_weights(DomainKind::Disc);
        assert_eq!(rows.len(), 19);
        assert_eq!(rows[6].family, WeightFamily::ScalarPower { alpha: 0.0 });
        assert_eq!(rows[0].family, WeightFamily::ScalarPower { alpha: -0.8 });
        assert!(rows[13..].iter().all(|r| r.d == 2));
        assert_eq!(default_weights(DomainKind::Ball2).len(), 5);
    }

    #[test]
    fn config_validation() {
        let mut c = SweepConfig::default_for(DomainKind::Disc);
        assert!(c.validate().is_ok());
        assert!(c.doubled().validate().is_ok());
        c.truncation = 110;
        assert!(c.validate().is_err());
    }
}
