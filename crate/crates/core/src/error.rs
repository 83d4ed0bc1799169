use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Regression block a coefficient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    /// log of the horizontal (AFT) scale.
    Tau,
    /// log of the vertical (PH) scale.
    Beta,
    /// log of the power shape.
    Alpha,
    /// log(kappa + 1).
    Nu,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Tau, Block::Beta, Block::Alpha, Block::Nu];

    pub fn name(self) -> &'static str {
        match self {
            Block::Tau => "tau",
            Block::Beta => "beta",
            Block::Alpha => "alpha",
            Block::Nu => "nu",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tau" => Ok(Block::Tau),
            "beta" => Ok(Block::Beta),
            "alpha" => Ok(Block::Alpha),
            "nu" => Ok(Block::Nu),
            other => Err(Error::Spec(format!(
                "unknown regression component `{other}` (expected tau, beta, alpha or nu)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("probability {u} lies on the cure plateau (quantiles exist only for u < {max_u})")]
    CurePlateau { u: f64, max_u: f64 },

    #[error("link overflow in {block} block: linear predictor {value} exceeds 700 in magnitude")]
    LinkOverflow { block: Block, value: f64 },

    #[error("non-finite log-likelihood contribution at row {row}")]
    NonFiniteLikelihood { row: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("not a cure model: kappa = {kappa} is not in (-1, 0)")]
    NotCureModel { kappa: f64 },

    #[error("no starting point yields a finite log-likelihood")]
    NoFiniteStart,

    #[error("covariance unavailable: {0}")]
    NoCovariance(String),

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("{source_name}, line {line}: {msg}")]
    Data {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("fits in a model table were computed on different datasets")]
    MixedDatasets,

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
