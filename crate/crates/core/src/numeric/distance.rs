use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dissimilarity used to rank references against a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    Cosine,
    Manhattan,
    #[serde(alias = "chi2", alias = "chisquare")]
    ChiSquare,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 4] = [
        DistanceMetric::Euclidean,
        DistanceMetric::Cosine,
        DistanceMetric::Manhattan,
        DistanceMetric::ChiSquare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::Manhattan => "manhattan",
            DistanceMetric::ChiSquare => "chisquare",
        }
    }

    /// Rejects vectors the metric is undefined on (negative components under chi-square).
    pub fn check_domain(self, v: &[f64]) -> Result<()> {
        if self == DistanceMetric::ChiSquare {
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| **x < 0.0) {
                return Err(Error::NegativeComponent { index, value });
            }
        }
        Ok(())
    }

    /// Distance without validation. Callers must guarantee equal lengths and,
    /// for chi-square, non-negative components.
    pub fn eval_unchecked(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            DistanceMetric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                match (na > 0.0, nb > 0.0) {
                    (false, false) => 0.0,
                    (true, false) | (false, true) => 1.0,
                    // clamp: rounding can push the cosine slightly past ±1
                    (true, true) => (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0),
                }
            }
            DistanceMetric::ChiSquare => {
                0.5 * a
                    .iter()
                    .zip(b)
                    .filter(|(x, y)| *x + *y > 0.0)
                    .map(|(x, y)| (x - y) * (x - y) / (x + y))
                    .sum::<f64>()
            }
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(DistanceMetric::Euclidean),
            "cosine" => Ok(DistanceMetric::Cosine),
            "manhattan" | "l1" => Ok(DistanceMetric::Manhattan),
            "chisquare" | "chi2" | "chi-square" => Ok(DistanceMetric::ChiSquare),
            other => Err(Error::InvalidArgument(format!("unknown distance metric {other:?}"))),
        }
    }
}

pub fn distance(metric: DistanceMetric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    metric.check_domain(a)?;
    metric.check_domain(b)?;
    Ok(metric.eval_unchecked(a, b))
}
