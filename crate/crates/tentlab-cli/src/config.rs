//! Run configuration: flat `key = value` text in sections, every default
//! embedded and printable.

use std::fmt::Write as _;
use std::path::PathBuf;

use ini::Ini;
use tentlab::dyadic::{self, DEFAULT_DISC_MAX_LEVEL};
use tentlab::geometry::{DomainGeometry, DomainKind};
use tentlab::harness::{generate_weight, SweepConfig, WeightFamilySpec};
use tentlab::projection::Taper;

use crate::error::{CliError, CliResult};

pub const DEFAULT_BALL_MAX_LEVEL: usize = 8;
pub const DEFAULT_CACHE_DIR: &str = "dyadic-cache";

/// Dyadic construction parameters for `dyadic build|check` and the optional
/// cache the analysis commands load their systems from.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicParams {
    pub s: u32,
    pub delta: f64,
    pub max_level: usize,
    /// Directory of cached systems; unset means build in memory.
    pub cache: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub sweep: SweepConfig,
    pub dyadic: DyadicParams,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl RunConfig {
    pub fn defaults(kind: DomainKind) -> Self {
        let geom = DomainGeometry::of_kind(kind);
        RunConfig {
            sweep: SweepConfig::default_for(kind),
            dyadic: DyadicParams {
                s: dyadic::DEFAULT_S,
                delta: geom.delta0(),
                max_level: match kind {
                    DomainKind::Disc => DEFAULT_DISC_MAX_LEVEL,
                    DomainKind::Ball2 => DEFAULT_BALL_MAX_LEVEL,
                },
                cache: None,
            },
            csv: None,
            json: None,
        }
    }

    pub fn kind(&self) -> DomainKind {
        self.sweep.kind
    }

    /// Parses config text over the defaults of its geometry (or of `kind`
    /// when given, which wins over the file).
    pub fn parse(text: &str, kind: Option<DomainKind>) -> CliResult<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let file_kind = match ini.get_from(Some("domain"), "geometry") {
            Some(g) => Some(DomainKind::parse(g)?),
            None => None,
        };
        let mut c = Self::defaults(kind.or(file_kind).unwrap_or(DomainKind::Disc));
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            if section == "weights" {
                let rows: Vec<&str> = props.get_all("weight").collect();
                if !rows.is_empty() {
                    c.sweep.weights = rows.into_iter().map(parse_weight).collect::<CliResult<_>>()?;
                }
            }
            for (key, value) in props.iter() {
                c.set(section, key, value)?;
            }
        }
        Ok(c)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> CliResult<()> {
        let s = &mut self.sweep;
        let path = |v: &str| if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        match (section, key) {
            ("domain", "geometry") | ("weights", "weight") => {}
            ("dyadic", "s") => self.dyadic.s = num(section, key, value)?,
            ("dyadic", "delta") => self.dyadic.delta = num(section, key, value)?,
            ("dyadic", "max_level") => self.dyadic.max_level = num(section, key, value)?,
            ("dyadic", "cache") => self.dyadic.cache = path(value),
            ("grid", "radial") => s.grid.radial = num(section, key, value)?,
            ("grid", "angular") => s.grid.angular = num(section, key, value)?,
            ("grid", "grading") => s.grid.grading = num(section, key, value)?,
            ("grid", "levels") => s.grid.levels = num(section, key, value)?,
            ("grid", "geometric_panels") => s.grid.geometric_panels = num(section, key, value)?,
            ("projection", "truncation") => s.truncation = num(section, key, value)?,
            ("projection", "taper") => {
                s.taper = match value {
                    "sharp" => Taper::Sharp,
                    "smooth" => Taper::Smooth,
                    _ => return Err(bad_value(section, key, value)),
                }
            }
            ("weights", "max_exponent") => s.max_exponent = num(section, key, value)?,
            ("domination", "enabled") => s.domination = num(section, key, value)?,
            ("domination", "directions") => s.directions = num(section, key, value)?,
            ("domination", "samples") => s.samples = num(section, key, value)?,
            ("domination", "polynomials") => s.polynomials = num(section, key, value)?,
            ("domination", "degree") => s.polynomial_degree = num(section, key, value)?,
            ("diagnostics", "square_fields") => s.square_fields = num(section, key, value)?,
            ("diagnostics", "rh_tents") => s.rh_tents = num(section, key, value)?,
            ("diagnostics", "embedding_degree") => s.embedding_degree = num(section, key, value)?,
            ("diagnostics", "embedding_random") => s.embedding_random = num(section, key, value)?,
            ("diagnostics", "chain_random") => s.chain_random = num(section, key, value)?,
            ("run", "seed") => s.seed = num(section, key, value)?,
            ("output", "timing") => s.timing = num(section, key, value)?,
            ("output", "csv") => self.csv = path(value),
            ("output", "json") => self.json = path(value),
            _ => return Err(CliError::Usage(format!("config: unknown key '{key}' in section [{section}]"))),
        }
        Ok(())
    }

    /// Every module precondition, checked before any job starts.
    pub fn validate(&self) -> CliResult<()> {
        self.sweep.validate()?;
        for spec in &self.sweep.weights {
            generate_weight(spec, self.sweep.max_exponent)?;
        }
        let geom = DomainGeometry::of_kind(self.kind());
        dyadic::DyadicSystem::build(&geom, self.dyadic.s, self.dyadic.delta, 0.0, 0)?;
        Ok(())
    }

    /// The effective configuration in the file format.
    pub fn render(&self) -> String {
        let s = &self.sweep;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        let mut section = |name: &str, rows: Vec<(&str, String)>| {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in rows {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        };
        section("domain", vec![("geometry", self.kind().name().to_string())]);
        section(
            "dyadic",
            vec![
                ("s", self.dyadic.s.to_string()),
                ("delta", self.dyadic.delta.to_string()),
                ("max_level", self.dyadic.max_level.to_string()),
                ("cache", path(&self.dyadic.cache)),
            ],
        );
        section(
            "grid",
            vec![
                ("radial", s.grid.radial.to_string()),
                ("angular", s.grid.angular.to_string()),
                ("grading", s.grid.grading.to_string()),
                ("levels", s.grid.levels.to_string()),
                ("geometric_panels", s.grid.geometric_panels.to_string()),
            ],
        );
        let taper = match s.taper {
            Taper::Sharp => "sharp",
            Taper::Smooth => "smooth",
        };
        section("projection", vec![("truncation", s.truncation.to_string()), ("taper", taper.to_string())]);
        let mut weights = vec![("max_exponent", s.max_exponent.to_string())];
        weights.extend(s.weights.iter().map(|w| ("weight", render_weight(w))));
        section("weights", weights);
        section(
            "domination",
            vec![
                ("enabled", s.domination.to_string()),
                ("directions", s.directions.to_string()),
                ("samples", s.samples.to_string()),
                ("polynomials", s.polynomials.to_string()),
                ("degree", s.polynomial_degree.to_string()),
            ],
        );
        section(
            "diagnostics",
            vec![
                ("square_fields", s.square_fields.to_string()),
                ("rh_tents", s.rh_tents.to_string()),
                ("embedding_degree", s.embedding_degree.to_string()),
                ("embedding_random", s.embedding_random.to_string()),
                ("chain_random", s.chain_random.to_string()),
            ],
        );
        section("run", vec![("seed", s.seed.to_string())]);
        section("output", vec![("csv", path(&self.csv)), ("json", path(&self.json)), ("timing", s.timing.to_string())]);
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }
}

fn bad_value(section: &str, key: &str, value: &str) -> CliError {
    CliError::Usage(format!("config: cannot parse [{section}] {key} = '{value}'"))
}

fn num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> CliResult<T> {
    value.trim().parse().map_err(|_| bad_value(section, key, value))
}

/// `name [param1 [param2 [d]]]`, missing parameters zero.
pub fn parse_weight(text: &str) -> CliResult<WeightFamilySpec> {
    let mut parts = text.split_whitespace();
    let name = parts.next().ok_or_else(|| CliError::Usage("config: empty weight row".into()))?;
    let mut nums = Vec::new();
    for p in parts {
        nums.push(p.parse::<f64>().map_err(|_| CliError::Usage(format!("config: bad weight row '{text}'")))?);
    }
    if nums.len() > 3 {
        return Err(CliError::Usage(format!("config: too many values in weight row '{text}'")));
    }
    let d = match nums.get(2) {
        Some(&d) if d >= 1.0 && d.fract() == 0.0 => Some(d as usize),
        Some(_) => return Err(CliError::Usage(format!("config: bad dimension in weight row '{text}'"))),
        None => None,
    };
    Ok(WeightFamilySpec::parse(name, nums.first().copied().unwrap_or(0.0), nums.get(1).copied().unwrap_or(0.0), d)?)
}

pub fn render_weight(w: &WeightFamilySpec) -> String {
    let (p1, p2) = w.family.params();
    format!("{} {p1} {p2} {}", w.family.name(), w.d)
}
