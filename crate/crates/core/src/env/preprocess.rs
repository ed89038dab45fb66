use serde::{Deserialize, Serialize};

use super::EnvError;

/// Reciprocal range mapping `P(d) = 1 / (d - c_d)`.
///
/// The map is decreasing and convex on the sensor range, so a change near
/// an obstacle moves the processed value far more than the same change at
/// long range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub c_d: f64,
    pub enabled: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            c_d: 0.0,
            enabled: true,
        }
    }
}

pub fn preprocess(d: f64, cfg: &PreprocessConfig) -> Result<f64, EnvError> {
    if !cfg.enabled {
        return Ok(d);
    }
    if !(d > cfg.c_d) {
        return Err(EnvError::PreprocessDomain { d, c_d: cfg.c_d });
    }
    Ok(1.0 / (d - cfg.c_d))
}
