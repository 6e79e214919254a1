//! Distance and kernel weight shared by the contrastive loss and the kNN.
//!
//! `w(z, z') = exp(-D(z, z') / tau)` with `D` the Euclidean distance or the
//! cosine distance `1 - z·z'` of unit vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{dot, squared_euclidean};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    #[default]
    Euclidean,
    Cosine,
}

impl DistanceMode {
    /// Distance between two vectors. Cosine mode assumes unit-norm inputs and
    /// clamps rounding noise below zero.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMode::Euclidean => squared_euclidean(a, b).sqrt(),
            DistanceMode::Cosine => (1.0 - dot(a, b)).max(0.0),
        }
    }

    /// `exp(-D / tau)`.
    pub fn weight(self, a: &[f64], b: &[f64], tau: f64) -> f64 {
        (-self.distance(a, b) / tau).exp()
    }
}

impl fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMode::Euclidean => "euclidean",
            DistanceMode::Cosine => "cosine",
        })
    }
}

impl FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(DistanceMode::Euclidean),
            "cosine" => Ok(DistanceMode::Cosine),
            other => Err(Error::Config(format!(
                "unknown distance mode {other:?} (expected euclidean or cosine)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        assert!((DistanceMode::Euclidean.distance(&a, &b) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(DistanceMode::Cosine.distance(&a, &b), 1.0);
        assert_eq!(DistanceMode::Euclidean.distance(&a, &a), 0.0);
        assert_eq!(DistanceMode::Cosine.weight(&a, &a, 0.1), 1.0);
    }

    #[test]
    fn parse() {
        assert_eq!(
            "cosine".parse::<DistanceMode>().unwrap(),
            DistanceMode::Cosine
        );
        assert!("manhattan".parse::<DistanceMode>().is_err());
    }
}
