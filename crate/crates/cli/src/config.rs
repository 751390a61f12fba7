//! On-disk scenario format. See `docs/config.md` for the grammar.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}:{line}:{column}: scenario '{scenario}': {message}")]
    Invalid { path: PathBuf, line: usize, column: usize, scenario: String, message: String },
    #[error("duplicate scenario name '{0}'")]
    DuplicateScenario(String),
    #[error("BDTRACE_SEED must be an unsigned integer, got '{0}'")]
    BadSeed(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub scenario: Vec<Spanned<ScenarioConfig>>,
}

pub type Bounds = Vec<[f64; 2]>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    /// Tolerance of every extrapolated limit.
    pub limit_tol: Option<f64>,
    pub domain: DomainConfig,
    #[serde(default)]
    pub charts: Vec<ChartConfig>,
    /// With explicit charts: whether their tiles cover the whole boundary.
    #[serde(default)]
    pub charts_cover_boundary: bool,
    pub field: FieldConfig,
    pub interface: Option<InterfaceConfig>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum DomainConfig {
    UnitBox,
    Subgraph {
        base: Bounds,
        bottom: f64,
        top: String,
        top_gradient: Option<Vec<String>>,
        lipschitz: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub name: String,
    pub origin: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    pub graph: String,
    pub gradient: Option<Vec<String>>,
    pub lipschitz: f64,
    pub inner: Bounds,
    pub outer: Bounds,
    pub tile: Bounds,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: String,
    pub value: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub skew: Option<Vec<f64>>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub u: Option<Vec<String>>,
    pub strain: Option<Vec<String>>,
    pub plus: Option<Box<FieldConfig>>,
    pub minus: Option<Box<FieldConfig>>,
    /// Box on which the field may be evaluated; unbounded when absent.
    pub window: Option<Bounds>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceConfig {
    pub graph: String,
    pub gradient: Option<Vec<String>>,
    pub window: Bounds,
    #[serde(default = "yes")]
    pub plus_above: bool,
    pub origin: Option<Vec<f64>>,
    pub axes: Option<Vec<Vec<f64>>>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_order() -> usize {
    6
}

fn default_cells() -> usize {
    16
}

fn default_levels() -> usize {
    1
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { order: default_order(), cells: default_cells(), levels: default_levels() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub kind: String,
    /// Prefix of the report rows; defaults to nothing.
    pub name: Option<String>,
    pub tol: Option<f64>,
    pub phi: Option<PhiConfig>,
    pub xi: Option<Vec<f64>>,
    pub radii: Option<Vec<f64>>,
    pub patch: Option<String>,
    pub directions: Option<Vec<Vec<f64>>>,
    pub eps_fractions: Option<Vec<f64>>,
    pub points: Option<usize>,
    pub rho0: Option<f64>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    pub kind: String,
    pub value: Option<String>,
    pub gradient: Option<Vec<String>>,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub power: Option<i32>,
}

/// A scenario with where it came from.
#[derive(Debug, Clone)]
pub struct Located {
    pub config: ScenarioConfig,
    pub path: PathBuf,
    pub line: usize,
    pub column: usize,
}

impl Located {
    pub fn invalid(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            path: self.path.clone(),
            line: self.line,
            column: self.column,
            scenario: self.config.name.clone(),
            message: message.into(),
        }
    }
}

fn line_col(text: &str, span: &Range<usize>) -> (usize, usize) {
    let before = &text[..span.start.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

pub fn parse_file(path: &Path, text: &str) -> Result<Vec<Located>, ConfigError> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(file
        .scenario
        .into_iter()
        .map(|s| {
            let (line, column) = line_col(text, &s.span());
            Located { config: s.into_inner(), path: path.to_path_buf(), line, column }
        })
        .collect())
}

/// Reads a config file, or every `*.toml` in a directory in name order.
pub fn load(path: &Path) -> Result<Vec<Located>, ConfigError> {
    let io = |source| ConfigError::Io { path: path.to_path_buf(), source };
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|source| ConfigError::Io { path: f.clone(), source })?;
        out.extend(parse_file(&f, &text)?);
    }
    let mut names: Vec<&str> = out.iter().map(|s| s.config.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(ConfigError::DuplicateScenario(w[0].to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_map_to_lines() {
        let text = "\n\n[[scenario]]\nname = \"a\"\ndim = 2\n[scenario.domain]\nkind = \"unit-box\"\n[scenario.field]\nkind = \"zero\"\n";
        let s = parse_file(Path::new("x.toml"), text).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].line, s[0].column), (3, 1));
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = parse_file(Path::new("x.toml"), "[[scenario]]\nname = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[[scenario]]\nname = \"a\"\ndim = 2\ncolour = 1\n[scenario.domain]\nkind = \"unit-box\"\n[scenario.field]\nkind = \"zero\"\n";
        assert!(parse_file(Path::new("x.toml"), text).is_err());
    }
}
