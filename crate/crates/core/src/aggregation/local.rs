use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm::NORM_EPS;
use crate::store::FeatureTensor;

/// Normalization applied to activations before pooling or encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreL2 {
    /// Each spatial position's L-dimensional local descriptor gets unit norm.
    #[default]
    Descriptor,
    /// Each channel's H×W map gets unit norm.
    Channel,
    Off,
}

impl fmt::Display for PreL2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreL2::Descriptor => "descriptor",
            PreL2::Channel => "channel",
            PreL2::Off => "off",
        })
    }
}

impl FromStr for PreL2 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descriptor" => Ok(PreL2::Descriptor),
            "channel" => Ok(PreL2::Channel),
            "off" | "none" => Ok(PreL2::Off),
            other => Err(Error::InvalidArgument(format!("unknown pre-l2 mode {other:?}"))),
        }
    }
}

/// A feature tensor widened to f64, channel-major: `maps` is `L × (H·W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub maps: Array2<f64>,
    pub height: usize,
    pub width: usize,
}

impl FeatureMap {
    pub fn prepare(t: &FeatureTensor, pre_l2: PreL2) -> Result<Self> {
        t.validate()?;
        let data: Vec<f64> = t.data.iter().map(|&v| v as f64).collect();
        let maps = Array2::from_shape_vec((t.channels, t.spatial_len()), data)
            .map_err(|e| Error::Internal(e.to_string()))?;
        let mut fm = FeatureMap {
            maps,
            height: t.height,
            width: t.width,
        };
        fm.normalize(pre_l2);
        Ok(fm)
    }

    pub fn channels(&self) -> usize {
        self.maps.nrows()
    }

    pub fn spatial_len(&self) -> usize {
        self.maps.ncols()
    }

    /// Local descriptors as rows: `(H·W) × L`.
    pub fn descriptors(&self) -> ArrayView2<'_, f64> {
        self.maps.t()
    }

    /// Activation of channel `l` at row `y`, column `x`.
    #[inline]
    pub fn at(&self, l: usize, y: usize, x: usize) -> f64 {
        self.maps[[l, y * self.width + x]]
    }

    fn normalize(&mut self, mode: PreL2) {
        match mode {
            PreL2::Off => {}
            PreL2::Channel => {
                for mut row in self.maps.rows_mut() {
                    let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n > NORM_EPS {
                        row /= n;
                    }
                }
            }
            PreL2::Descriptor => {
                for mut col in self.maps.columns_mut() {
                    let n = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n > NORM_EPS {
                        col /= n;
                    }
                }
            }
        }
    }
}
