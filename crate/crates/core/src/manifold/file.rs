//! JSON problem-file schema.
//!
//! ```json
//! {
//!   "name": "sphere/z",
//!   "variables": ["x", "y", "z"],
//!   "constraints": [{ "g": "x^2 + y^2 + z^2", "c": 1 }],
//!   "objective": { "g": "z", "c": 1 },
//!   "box": [[-2, 2], [-2, 2], [-2, 2]],
//!   "seed": 42
//! }
//! ```
//!
//! `name`, `box`, `seed` and `provenance` are optional. `objective.c` may be
//! omitted, in which case only range and critical-point queries make sense.
//! Unknown fields are rejected.

use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub g: String,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub g: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

/// Where a generated problem came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub comment: String,
    /// Coefficients `a` of the subtracted linear term.
    pub a: Vec<f64>,
    pub seed: u64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub variables: Vec<String>,
    pub constraints: Vec<ConstraintSpec>,
    pub objective: ObjectiveSpec,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}
