use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::mean_std;
use crate::error::{Result, RgdError};

/// Gaussian kernel density estimate of the score prior `p(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub samples: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeModel {
    /// Bandwidth from Silverman's rule, `1.06·std·N^(-1/5)`.
    pub fn silverman(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(RgdError::Config(
                "Silverman bandwidth needs at least two samples".into(),
            ));
        }
        let (_, sd) = mean_std(&samples);
        let h = 1.06 * sd * (samples.len() as f64).powf(-0.2);
        Self::with_bandwidth(samples, h)
    }

    pub fn with_bandwidth(samples: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(RgdError::Config("KDE needs at least one sample".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(RgdError::Config(format!(
                "KDE bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(KdeModel { samples, bandwidth })
    }

    pub fn logpdf(&self, y: f64) -> f64 {
        let h = self.bandwidth;
        let norm = -(h * (2.0 * PI).sqrt()).ln() - (self.samples.len() as f64).ln();
        let mut max = f64::NEG_INFINITY;
        for &s in &self.samples {
            let z = (y - s) / h;
            max = max.max(-0.5 * z * z);
        }
        let sum: f64 = self
            .samples
            .iter()
            .map(|&s| {
                let z = (y - s) / h;
                (-0.5 * z * z - max).exp()
            })
            .sum();
        norm + max + sum.ln()
    }
}
