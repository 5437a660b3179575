use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tentlab::dyadic::cache::{self, CacheKey};
use tentlab::dyadic::{AdjacentFamily, DyadicSystem, DEFAULT_S, SHIFTS};
use tentlab::geometry::{DomainGeometry, DomainKind};
use tentlab::harness::acceptance::AcceptanceSuite;
use tentlab::harness::{generate_weight, run_sweep_with, SweepContext, WeightFamilySpec};
use tentlab::linalg;
use tentlab::projection::grid::QuadratureGrid;
use tentlab::projection::BergmanProjection;
use tentlab::weights::{b2_constant, GridFamily, WeightSamples};
use tentlab::LabError;

use crate::config::{RunConfig, DEFAULT_CACHE_DIR};
use crate::error::{CliError, CliResult};

/// Area tolerance for the disc partition check.
const DISC_AREA_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DyadicRequest {
    pub s: u32,
    pub delta: f64,
    pub levels: usize,
    pub dir: PathBuf,
}

impl DyadicRequest {
    pub fn resolve(
        cfg: &RunConfig,
        s: Option<u32>,
        delta: Option<f64>,
        levels: Option<usize>,
        out: Option<PathBuf>,
    ) -> Self {
        DyadicRequest {
            s: s.unwrap_or(cfg.dyadic.s),
            delta: delta.unwrap_or(cfg.dyadic.delta),
            levels: levels.unwrap_or(cfg.dyadic.max_level),
            dir: out.or_else(|| cfg.dyadic.cache.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR)),
        }
    }

    fn build_command(&self, kind: DomainKind) -> String {
        format!(
            "tentlab dyadic build --geom {} --s {} --delta {} --levels {} --out {}",
            kind.name(),
            self.s,
            self.delta,
            self.levels,
            self.dir.display()
        )
    }
}

fn cache_file(dir: &Path, kind: DomainKind, k: usize) -> PathBuf {
    dir.join(format!("{}-{k}.tdc", kind.name()))
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Loads the three cached base systems, refusing caches built with other parameters.
fn load_family(kind: DomainKind, req: &DyadicRequest) -> CliResult<AdjacentFamily> {
    let geom = DomainGeometry::of_kind(kind);
    let mut systems = Vec::with_capacity(SHIFTS.len());
    for (k, &shift) in SHIFTS.iter().enumerate() {
        let path = cache_file(&req.dir, kind, k);
        if !path.exists() {
            return Err(LabError::Cache(format!(
                "no dyadic cache at {}; build it with `{}`",
                path.display(),
                req.build_command(kind)
            ))
            .into());
        }
        let key = CacheKey {
            geometry: kind.name().to_string(),
            epsilon0: geom.epsilon0(),
            delta0: geom.delta0(),
            s: req.s,
            delta: req.delta,
            shift,
            max_level: req.levels,
        };
        let system = cache::load(&path, Some(&key)).map_err(|e| match e {
            LabError::Cache(m) if m.starts_with("stale") => {
                LabError::Cache(format!("{m}; rebuild with `{}`", req.build_command(kind)))
            }
            other => other,
        })?;
        systems.push(system);
    }
    Ok(AdjacentFamily::from_systems(systems))
}

pub fn dyadic_build(kind: DomainKind, req: &DyadicRequest) -> CliResult<String> {
    let geom = DomainGeometry::of_kind(kind);
    let family = AdjacentFamily::build_with_delta(&geom, req.s, req.delta, req.levels)?;
    std::fs::create_dir_all(&req.dir).map_err(io_error(&req.dir))?;
    let mut cells = 0;
    for (k, sys) in family.systems().iter().enumerate() {
        cache::save(sys, &cache_file(&req.dir, kind, k))?;
        cells += sys.num_cells();
    }
    Ok(format!(
        "dyadic build: {} {} systems to level {}, {cells} cells -> {}",
        family.len(),
        kind.name(),
        req.levels,
        req.dir.display()
    ))
}

pub fn dyadic_check(kind: DomainKind, req: &DyadicRequest) -> CliResult<String> {
    let family = load_family(kind, req)?;
    let mut violations = Vec::new();
    let mut cells = 0;
    let mut area_error: f64 = 0.0;
    for sys in family.systems() {
        let report = sys.check_invariants();
        cells += report.cells;
        violations.extend(report.violations.iter().map(|v| format!("shift {}: {v}", sys.shift())));
        if kind == DomainKind::Disc {
            area_error = area_error.max(disc_area_error(sys));
        }
    }
    if area_error > DISC_AREA_TOLERANCE {
        violations.push(format!("kube areas miss pi by {area_error:e}"));
    }
    let mut line = format!(
        "dyadic check: {} {} systems to level {}, {cells} cells, {} violations",
        family.len(),
        kind.name(),
        req.levels,
        violations.len()
    );
    if kind == DomainKind::Disc {
        line += &format!(", area error {area_error:.1e}");
    }
    if violations.is_empty() {
        Ok(line)
    } else {
        Err(CliError::Failed(format!("{line}\n{}", violations.join("\n"))))
    }
}

fn disc_area_error(sys: &DyadicSystem) -> f64 {
    let total = linalg::compensated_sum((0..sys.num_cells()).map(|c| sys.kube_volume(c)).chain([sys.root_volume()]));
    (total - std::f64::consts::PI).abs()
}

/// Base systems at the grid's analysis depth, from the cache when one is configured.
fn analysis_family(cfg: &RunConfig) -> CliResult<AdjacentFamily> {
    let kind = cfg.kind();
    let geom = DomainGeometry::of_kind(kind);
    let levels = cfg.sweep.grid.levels;
    match &cfg.dyadic.cache {
        Some(dir) => {
            let req = DyadicRequest { s: DEFAULT_S, delta: geom.delta0(), levels, dir: dir.clone() };
            load_family(kind, &req)
        }
        None => Ok(AdjacentFamily::build(&geom, DEFAULT_S, levels)?),
    }
}

fn grid_family(cfg: &RunConfig) -> CliResult<GridFamily> {
    let family = analysis_family(cfg)?;
    let grid = QuadratureGrid::build(&DomainGeometry::of_kind(cfg.kind()), cfg.sweep.grid)?;
    Ok(GridFamily::new(grid, family.with_cousins())?)
}

fn write_csv(path: &Path, header: &[&str], row: &[String]) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path).map_err(io_error(path))?);
    writeln!(out, "{}\n{}", header.join(","), row.join(",")).map_err(io_error(path))?;
    out.flush().map_err(io_error(path))
}

fn weight_cells(spec: &WeightFamilySpec) -> Vec<String> {
    let (p1, p2) = spec.family.params();
    vec![spec.family.name().to_string(), p1.to_string(), p2.to_string(), spec.d.to_string()]
}

pub fn b2(cfg: &RunConfig, spec: &WeightFamilySpec, out: Option<&Path>) -> CliResult<String> {
    let field = generate_weight(spec, cfg.sweep.max_exponent)?;
    let gf = grid_family(cfg)?;
    let report = b2_constant(&gf, &WeightSamples::on_grid(&field, gf.grid())?)?;
    if let Some(path) = out {
        let mut row = weight_cells(spec);
        row.extend([report.value.to_string(), report.small_tents.to_string()]);
        write_csv(path, &["family", "param1", "param2", "d", "B2", "B2SmallTents"], &row)?;
    }
    Ok(format!("B2 = {:.6}", report.value))
}

/// `||P||_{L^2(W)}` at the configured truncation; the spread against half the
/// truncation on the same grid is reported as the uncertainty.
pub fn norm(cfg: &RunConfig, spec: &WeightFamilySpec, out: Option<&Path>) -> CliResult<String> {
    let field = generate_weight(spec, cfg.sweep.max_exponent)?;
    let c = &cfg.sweep;
    let grid = QuadratureGrid::build(&DomainGeometry::of_kind(cfg.kind()), c.grid)?;
    let samples = WeightSamples::on_grid(&field, &grid)?;
    let at = |n: usize| -> CliResult<f64> {
        let p = BergmanProjection::with_taper(&grid, n, spec.d, c.taper)?;
        Ok(p.weighted_norm(&grid, &samples.w, &samples.inv)?.value)
    };
    let value = at(c.truncation)?;
    let spread = (value - at((c.truncation / 2).max(1))?).abs();
    if let Some(path) = out {
        let mut row = weight_cells(spec);
        row.extend([value.to_string(), spread.to_string(), c.truncation.to_string()]);
        write_csv(path, &["family", "param1", "param2", "d", "normW", "spread", "truncN"], &row)?;
    }
    Ok(format!("norm = {value:.4} ± {spread:.4}"))
}

pub fn dominate(cfg: &RunConfig, out: Option<&Path>) -> CliResult<String> {
    let mut sweep = cfg.sweep.clone();
    sweep.weights.clear();
    sweep.domination = true;
    let ctx = SweepContext::with_family(sweep, analysis_family(cfg)?)?;
    let c = &ctx.config;
    let s = ctx.domination_scan(c.directions, c.samples, c.polynomials)?;
    if let Some(path) = out {
        let row = [s.constant, s.violations as f64, s.directions as f64, s.samples as f64, s.polynomials as f64];
        write_csv(
            path,
            &["dominationC", "violations", "directions", "samples", "polynomials"],
            &row.map(|x| x.to_string()),
        )?;
    }
    let line = format!(
        "C = {:.4} violations = {} directions = {} samples = {} polynomials = {}",
        s.constant, s.violations, s.directions, s.samples, s.polynomials
    );
    if s.violations == 0 {
        Ok(line)
    } else {
        Err(CliError::Failed(line))
    }
}

pub fn sweep(cfg: &RunConfig) -> CliResult<String> {
    let ctx = SweepContext::with_family(cfg.sweep.clone(), analysis_family(cfg)?)?;
    let report = run_sweep_with(&ctx)?;
    if let Some(path) = &cfg.csv {
        report.write_csv(BufWriter::new(File::create(path).map_err(io_error(path))?))?;
    }
    let json = cfg.json.clone().or_else(|| cfg.csv.as_ref().map(|p| p.with_extension("json")));
    if let Some(path) = &json {
        std::fs::write(path, report.summary_json()? + "\n").map_err(io_error(path))?;
    }
    let s = report.summary();
    let opt = |x: Option<f64>| x.map_or("null".to_string(), |v| format!("{v:.4}"));
    let line = format!(
        "rows = {} failures = {} fitted_exponent = {} max_ratio_B2sq = {:.4} max_ratio_B2_32 = {:.4} dominationC = {}",
        report.rows.len(),
        s.failures.len(),
        opt(s.fitted_exponent),
        s.max_ratio_b2sq,
        s.max_ratio_b2_32,
        opt(s.domination_c)
    );
    if s.failures.is_empty() {
        Ok(line)
    } else {
        Err(CliError::Failed(format!("{line}\n{}", s.failures.join("\n"))))
    }
}

/// Runs the acceptance criteria (all of them when `only` is empty), one line each.
pub fn verify(only: &[u8]) -> CliResult<String> {
    let ids: Vec<u8> = if only.is_empty() { (1..=12).collect() } else { only.to_vec() };
    let mut suite = AcceptanceSuite::new();
    let mut passed = 0;
    for &id in &ids {
        let outcome = suite.run(id);
        println!("{outcome}");
        passed += usize::from(outcome.passed);
    }
    let line = format!("verify passed = {passed}/{}", ids.len());
    if passed == ids.len() {
        Ok(line)
    } else {
        Err(CliError::Failed(line))
    }
}
