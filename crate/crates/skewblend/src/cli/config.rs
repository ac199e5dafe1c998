//! Declarative TOML configs: a system (constants plus `[[map]]` tables) and
//! the inputs of each subcommand. Every error carries the line and the field.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::blending::Mode;
use crate::cones::Cone;
use crate::error::Error;
use crate::intersect::HorizontalDisc;
use crate::regions::{Part, Region};
use crate::shift_space::{Symbol, TruncatedSequence};
use crate::skewproduct::{AffineMap, FiberMap, SkewSystem, Window};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path)?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
            if let Some(c) = self.column {
                write!(f, ":{c}")?;
            }
        }
        if let Some(k) = &self.field {
            write!(f, ": field `{k}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// One affine map, or a composition listed first-applied first.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MapEntry {
    Affine {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Composed {
        pieces: Vec<AffineEntry>,
        #[serde(default)]
        l_d: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
pub struct AffineEntry {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// A single part (`{kind = "box", lo = [..], hi = [..]}`) or a list of parts.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RegionEntry {
    One(Part),
    Many(Vec<Part>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GraphEntry {
    Constant(Vec<f64>),
    /// Keys are comma-separated words `ξ_{-k},…,ξ_{-1}`.
    Table(BTreeMap<String, Vec<f64>>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub c0: Option<f64>,
    pub l_d: Option<f64>,
    #[serde(default)]
    pub map: Vec<MapEntry>,
    pub window: Option<Window>,

    pub mode: Option<Mode>,
    pub symbols: Option<Vec<usize>>,
    #[serde(rename = "B", alias = "b")]
    pub b: Option<RegionEntry>,
    #[serde(rename = "D", alias = "d")]
    pub d: Option<RegionEntry>,
    pub grid: Option<f64>,
    pub d_cs: Option<RegionEntry>,
    pub d_cu: Option<RegionEntry>,

    pub phi: Option<MapEntry>,
    pub point: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub cs: Option<Vec<usize>>,

    pub ell: Option<usize>,
    pub samples: Option<usize>,
    pub cone: Option<Cone>,
    pub region: Option<RegionEntry>,
    pub lambda: Option<f64>,
    /// `unstable` (default) or `stable`.
    pub direction: Option<String>,

    pub source: Option<RegionEntry>,
    pub source_points: Option<Vec<Vec<f64>>>,
    pub target: Option<RegionEntry>,
    pub depth: Option<usize>,

    pub past: Option<Vec<usize>>,
    pub future: Option<Vec<usize>>,
    pub x: Option<Vec<f64>>,
    pub candidates: Option<Vec<Vec<f64>>>,
    pub horizon: Option<usize>,
    pub c_bound: Option<f64>,

    pub graph: Option<GraphEntry>,
    pub table_depth: Option<usize>,
    pub holder: Option<f64>,
    pub delta: Option<f64>,
}

/// A parsed config together with its source, for field diagnostics.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: String,
    pub text: String,
    pub config: Config,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let head = &text[..offset.min(text.len())];
    let line = head.matches('\n').count() + 1;
    let col = head.len() - head.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

pub fn parse_config(path: &str, text: &str) -> Result<LoadedConfig, ConfigError> {
    match toml::from_str::<Config>(text) {
        Ok(config) => Ok(LoadedConfig {
            path: path.into(),
            text: text.into(),
            config,
        }),
        Err(e) => {
            let (line, column) = match e.span() {
                Some(s) => {
                    let (l, c) = line_col(text, s.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            Err(ConfigError {
                path: path.into(),
                line,
                column,
                field: None,
                message: e.message().trim().to_string(),
            })
        }
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.display().to_string(),
        line: None,
        column: None,
        field: None,
        message: e.to_string(),
    })?;
    parse_config(&path.display().to_string(), &text)
}

fn affine(a: &[Vec<f64>], b: &[f64]) -> crate::Result<AffineMap> {
    AffineMap::new(crate::linalg::from_rows(a)?, nalgebra::DVector::from_row_slice(b))
}

impl MapEntry {
    pub fn to_fiber(&self) -> crate::Result<FiberMap> {
        match self {
            MapEntry::Affine { a, b } => FiberMap::affine(affine(a, b)?),
            MapEntry::Composed { pieces, l_d } => {
                let p = pieces.iter().map(|e| affine(&e.a, &e.b)).collect::<crate::Result<Vec<_>>>()?;
                FiberMap::composed(p)?.with_l_d(*l_d)
            }
        }
    }
}

impl RegionEntry {
    pub fn to_region(&self) -> crate::Result<Region> {
        match self {
            RegionEntry::One(p) => Region::new(vec![p.clone()]),
            RegionEntry::Many(ps) => Region::new(ps.clone()),
        }
    }
}

fn symbols(ids: &[usize]) -> crate::Result<Vec<Symbol>> {
    ids.iter().map(|&i| Symbol::new(i)).collect()
}

impl LoadedConfig {
    /// First line assigning `field`, as a top-level key, table or array of tables.
    pub fn line_of(&self, field: &str) -> Option<usize> {
        self.text
            .lines()
            .position(|l| {
                let t = l.trim_start();
                let key = t.trim_start_matches('[').trim_start_matches('[');
                key.strip_prefix(field)
                    .is_some_and(|rest| rest.trim_start().starts_with('=') || rest.trim_start().starts_with(']'))
            })
            .map(|i| i + 1)
    }

    pub fn field_error(&self, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line: self.line_of(field),
            column: None,
            field: Some(field.into()),
            message: message.into(),
        }
    }

    fn wrap<T>(&self, field: &str, r: crate::Result<T>) -> Result<T, ConfigError> {
        r.map_err(|e| self.field_error(field, e.to_string()))
    }

    pub fn require<'a, T>(&self, field: &str, v: &'a Option<T>) -> Result<&'a T, ConfigError> {
        v.as_ref().ok_or_else(|| self.field_error(field, "missing"))
    }

    /// Declared constants default to the tight ones.
    pub fn system(&self) -> Result<SkewSystem, ConfigError> {
        let c = &self.config;
        if c.map.is_empty() {
            return Err(self.field_error("map", "no [[map]] tables"));
        }
        let maps = c
            .map
            .iter()
            .enumerate()
            .map(|(i, m)| m.to_fiber().map_err(|e| self.field_error("map", format!("map {}: {e}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        let nu = *self.require("nu", &c.nu)?;
        let alpha = c.alpha.unwrap_or(1.0);
        let gamma = c
            .gamma
            .unwrap_or_else(|| maps.iter().map(|m| m.lip_lower()).fold(f64::INFINITY, f64::min));
        let gamma_hat = c
            .gamma_hat
            .unwrap_or_else(|| 1.0 / maps.iter().map(|m| m.lip_upper()).fold(0.0, f64::max));
        let mut sys = self.wrap("map", SkewSystem::one_step(maps, nu, alpha, gamma, gamma_hat))?;
        if let Some(l) = c.l_d {
            sys = self.wrap("l_d", sys.with_l_d(l))?;
        }
        if let Some(w) = &c.window {
            sys = self.wrap("window", sys.with_window(w.clone()))?;
        }
        let c0 = c.c0.unwrap_or_else(|| sys.tight_c0());
        self.wrap("c0", sys.with_c0(c0))
    }

    pub fn region(&self, field: &str, v: &Option<RegionEntry>) -> Result<Region, ConfigError> {
        let e = self.require(field, v)?;
        self.wrap(field, e.to_region())
    }

    pub fn symbol_list(&self, field: &str, v: &Option<Vec<usize>>) -> Result<Vec<Symbol>, ConfigError> {
        let ids = self.require(field, v)?;
        self.wrap(field, symbols(ids))
    }

    pub fn sequence(&self) -> Result<TruncatedSequence, ConfigError> {
        let past = self.config.past.as_deref().map(symbols).transpose();
        let past = self.wrap("past", past)?.unwrap_or_default();
        let future = self.symbol_list("future", &self.config.future)?;
        Ok(TruncatedSequence::new(past, future))
    }

    /// Disc config: `past`, `future`, `graph` (a vector or a word table),
    /// `delta`, and for tables `table_depth` and an optional `holder`.
    pub fn disc(&self, nu: f64, alpha: f64) -> Result<HorizontalDisc, ConfigError> {
        let base = self.sequence()?;
        let delta = *self.require("delta", &self.config.delta)?;
        match self.require("graph", &self.config.graph)? {
            GraphEntry::Constant(v) => self.wrap("graph", HorizontalDisc::constant(base, v.clone(), delta, nu, alpha)),
            GraphEntry::Table(t) => {
                let depth = *self.require("table_depth", &self.config.table_depth)?;
                let mut values = BTreeMap::new();
                for (k, v) in t {
                    let ids: Result<Vec<usize>, _> = k.split(',').map(|s| s.trim().parse::<usize>()).collect();
                    let ids = ids.map_err(|_| self.field_error("graph", format!("bad word key `{k}`")))?;
                    values.insert(self.wrap("graph", symbols(&ids))?, v.clone());
                }
                let holder = self.config.holder.unwrap_or(0.0);
                self.wrap("graph", HorizontalDisc::table(base, depth, values, holder, delta, nu, alpha))
            }
        }
    }
}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Error::Input(e.to_string())
    }
}
