//! One-based identifiers for servers and jobs.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Server `U_i`, `1 <= i <= K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServerId(pub usize);

/// Job `J_j`, equivalently point `j` of the design, `1 <= j <= J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub usize);

impl ServerId {
    pub fn get(self) -> usize {
        self.0
    }

    /// Reduce function assigned to this server (`phi_k -> U_k`).
    pub fn function(self) -> usize {
        self.0
    }
}

impl JobId {
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U{}", self.0)
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "J{}", self.0)
    }
}
