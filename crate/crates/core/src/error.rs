use std::fmt;

use thiserror::Error;

/// One failed config invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {}", join_violations(.0))]
    Config(Vec<Violation>),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("infeasible: minimal spend {min_spend:.6} exceeds budget {budget:.6}")]
    Infeasible { min_spend: f64, budget: f64 },

    #[error("bonus factors decrease between types {at} and {}", .at + 1)]
    Monotonicity { at: usize },

    #[error("no candidate menu satisfied the monotonicity post-check")]
    MonotonicityPostcheck,

    #[error("round {round} outside [1, {total}]")]
    RoundOutOfRange { round: u32, total: u32 },

    #[error("could not draw {k} distinct types after {attempts} attempts")]
    TypeSampling { k: usize, attempts: usize },

    #[error("client `{0}` is already registered")]
    DuplicateId(String),

    #[error("client `{0}` is not registered")]
    Unregistered(String),

    #[error("no menu has been published")]
    NoActiveMenu,

    #[error("menu item {index} out of range 1..={k}")]
    ItemOutOfRange { index: usize, k: usize },

    #[error("ledger already settled")]
    AlreadySettled,

    #[error("malformed document: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
