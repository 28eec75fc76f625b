//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "dim": 2,
//!   "metric": [["-1", "0"], ["0", "exp(0.6*x0)"]],
//!   "rank": 2,
//!   "connection": [[["x1", "0"], ["0", "1"]], [["0", {"re": "0", "im": "x0"}], ["0", "0"]]],
//!   "potential": [["1", "0"], ["0", "1"]],
//!   "chart_box": [[-5, 5], [-100, 100]],
//!   "time_orientation": [1, 0],
//!   "flow": {"xi": [1, 1], "smax": 10}
//! }
//! ```
//!
//! `connection` lists one `rank×rank` matrix per coordinate. Entries are
//! either a real expression string or `{"re": .., "im": ..}`. Every other
//! top-level key is kept as an experiment section.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cexpr::{CExpr, CExprMat};
use crate::expr::{parse_expression, ParseError, MAX_DIM};
use crate::geometry::{GeometryError, MetricChart};
use crate::symbols::{BundleConnection, Potential};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("in `{field}`: {source}")]
    Expr { field: String, source: ParseError },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A connection or potential entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(String),
    Complex { re: String, im: String },
}

impl Entry {
    fn parse(&self, field: &str) -> Result<CExpr, ConfigError> {
        let p = |s: &str| {
            parse_expression(s).map_err(|source| ConfigError::Expr {
                field: field.to_string(),
                source,
            })
        };
        Ok(match self {
            Entry::Real(s) => CExpr::real(p(s)?),
            Entry::Complex { re, im } => CExpr { re: p(re)?, im: p(im)? },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub metric: Vec<Vec<String>>,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection: Option<Vec<Vec<Vec<Entry>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<Vec<Entry>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_box: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_orientation: Option<Vec<f64>>,
    /// Per-experiment sections, keyed by experiment name.
    #[serde(flatten)]
    pub sections: BTreeMap<String, serde_json::Value>,
}

fn default_rank() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Shape checks plus parsing of every expression.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.dim;
        if !(2..=MAX_DIM).contains(&n) {
            return Err(ConfigError::Invalid(format!("dim must be in 2..=4, got {n}")));
        }
        if self.metric.len() != n || self.metric.iter().any(|r| r.len() != n) {
            return Err(ConfigError::Invalid(format!("metric must be {n}×{n}")));
        }
        let g = self.metric_exprs()?;
        for i in 0..n {
            for j in 0..i {
                if g[i * n + j] != g[j * n + i] && !numerically_equal(&g[i * n + j], &g[j * n + i], n) {
                    return Err(ConfigError::Invalid(format!("metric not symmetric at ({i},{j})")));
                }
            }
        }
        if self.rank == 0 {
            return Err(ConfigError::Invalid("rank must be positive".into()));
        }
        if let Some(b) = &self.chart_box {
            if b.len() != n || b.iter().any(|[lo, hi]| !(lo < hi)) {
                return Err(ConfigError::Invalid("chart_box needs dim intervals lo < hi".into()));
            }
        }
        if self.time_orientation.as_ref().is_some_and(|t| t.len() != n) {
            return Err(ConfigError::Invalid("time_orientation must have dim entries".into()));
        }
        if let Some(c) = &self.connection {
            if c.len() != n {
                return Err(ConfigError::Invalid("connection needs one matrix per coordinate".into()));
            }
        }
        self.connection()?;
        self.potential()?;
        Ok(())
    }

    fn metric_exprs(&self) -> Result<Vec<crate::expr::Expr>, ConfigError> {
        let mut g = Vec::with_capacity(self.dim * self.dim);
        for (i, row) in self.metric.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                g.push(parse_expression(s).map_err(|source| ConfigError::Expr {
                    field: format!("metric[{i}][{j}]"),
                    source,
                })?);
            }
        }
        Ok(g)
    }

    pub fn chart(&self) -> Result<MetricChart, ConfigError> {
        let bx = match &self.chart_box {
            Some(b) => b.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
            None => vec![(-1e3, 1e3); self.dim],
        };
        let mut chart = MetricChart::new("config", self.dim, self.metric_exprs()?, bx)?;
        if let Some(t) = &self.time_orientation {
            chart = chart.with_time_orientation(t.clone())?;
        }
        Ok(chart)
    }

    /// The configured connection, or the trivial one.
    pub fn connection(&self) -> Result<BundleConnection, ConfigError> {
        let Some(c) = &self.connection else {
            return Ok(BundleConnection::trivial(self.dim, self.rank));
        };
        let mats = c
            .iter()
            .enumerate()
            .map(|(mu, m)| parse_matrix(m, self.rank, &format!("connection[{mu}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BundleConnection::new(mats))
    }

    pub fn potential(&self) -> Result<Potential, ConfigError> {
        match &self.potential {
            None => Ok(Potential::zero(self.rank)),
            Some(m) => Ok(Potential {
                v: parse_matrix(m, self.rank, "potential")?,
            }),
        }
    }

    /// Deserialize one experiment section.
    pub fn section<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<Option<T>, ConfigError> {
        self.sections
            .get(name)
            .map(|v| serde_json::from_value(v.clone()).map_err(ConfigError::from))
            .transpose()
    }
}

fn parse_matrix(rows: &[Vec<Entry>], rank: usize, field: &str) -> Result<CExprMat, ConfigError> {
    if rows.len() != rank || rows.iter().any(|r| r.len() != rank) {
        return Err(ConfigError::Invalid(format!("{field} must be {rank}×{rank}")));
    }
    let mut data = Vec::with_capacity(rank * rank);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            data.push(e.parse(&format!("{field}[{i}][{j}]"))?);
        }
    }
    Ok(CExprMat { n: rank, data })
}

fn numerically_equal(a: &crate::expr::Expr, b: &crate::expr::Expr, dim: usize) -> bool {
    use crate::expr::eval_raw;
    let probes = [0.0, 0.37, -0.61, 1.3];
    (0..probes.len()).all(|k| {
        let mut s = [0.0; crate::expr::NUM_SLOTS];
        for (mu, v) in s.iter_mut().take(dim).enumerate() {
            *v = probes[(k + mu) % probes.len()] + 0.1 * mu as f64;
        }
        let (x, y) = (eval_raw(a, &s), eval_raw(b, &s));
        (x - y).abs() <= 1e-12 * (1.0 + x.abs()) || (x.is_nan() && y.is_nan())
    })
}

/// Named charts: `minkowski` (any `dim` in 2..=4) and `frw:a=<expr>` (dim 2).
pub fn named_chart(name: &str, dim: usize) -> Result<MetricChart, ConfigError> {
    if name == "minkowski" {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(ConfigError::Invalid(format!("dimension {dim} not in 2..=4")));
        }
        return Ok(MetricChart::minkowski(dim));
    }
    if let Some(a) = name.strip_prefix("frw:a=") {
        let a = parse_expression(a).map_err(|source| ConfigError::Expr {
            field: "chart".into(),
            source,
        })?;
        return Ok(MetricChart::frw(a)?);
    }
    Err(ConfigError::Invalid(format!("unknown chart `{name}`")))
}
