//! Ultrasound signal confidence: the probability that a random walk started
//! at a pixel reaches the transducer row before the deepest row.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::PolarFrame;
use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::sparse::CgSettings;
use crate::walker::{EdgeKind, LatticeGraph, SparseLaplacian};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    /// Depth attenuation exponent applied to intensities before differencing.
    pub alpha: f64,
    /// Sensitivity to intensity jumps between neighbours.
    pub beta: f64,
    /// Extra penalty on edges between scan lines.
    pub gamma: f64,
    /// Relative residual target of the solve.
    pub tolerance: f64,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        ConfidenceParams {
            alpha: 2.0,
            beta: 10.0,
            gamma: 0.05,
            tolerance: 1e-8,
        }
    }
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.alpha >= 0.0
            && self.beta.is_finite()
            && self.beta > 0.0
            && self.gamma.is_finite()
            && self.gamma >= 0.0
            && self.tolerance > 0.0
            && self.tolerance <= 1e-8;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid confidence parameters {self:?}")))
        }
    }
}

/// Per-pixel confidence in `[0, 1]`; row 0 of every scan line is 1, the last 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    values: Array2<f64>,
}

impl ConfidenceMap {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("confidence outside [0, 1]".into()));
        }
        Ok(ConfidenceMap { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Smallest admissible edge weight; keeps extreme intensity jumps from
/// underflowing to a disconnected lattice.
const WEIGHT_FLOOR: f64 = 1e-300;

/// Confidence lattice: `w = exp(−β |g_p − g_q| − γ·[angular])` where
/// `g = intensity · exp(−α d / (D − 1))`.
pub fn confidence_lattice(polar: &PolarFrame, params: &ConfidenceParams) -> Result<LatticeGraph> {
    params.validate()?;
    let depth = polar.n_depth();
    let scale = (depth - 1) as f64;
    let guide = Array2::from_shape_fn(polar.intensities().dim(), |(s, d)| {
        polar.intensities()[(s, d)] * (-params.alpha * d as f64 / scale).exp()
    });
    let (beta, gamma) = (params.beta, params.gamma);
    LatticeGraph::grid(guide.view(), true, |a, b, kind| {
        let extra = if kind == EdgeKind::Angular { gamma } else { 0.0 };
        (-beta * (a - b).abs() - extra).exp().max(WEIGHT_FLOOR)
    })
}

pub fn confidence_map(polar: &PolarFrame, params: &ConfidenceParams) -> Result<ConfidenceMap> {
    let graph = confidence_lattice(polar, params)?;
    let (rows, cols) = polar.intensities().dim();
    let marked: Vec<bool> = (0..rows * cols)
        .map(|node| {
            let d = node % cols;
            d == 0 || d == cols - 1
        })
        .collect();
    let lap = SparseLaplacian::partition(&graph, &marked)?;
    let boundary: Vec<f64> = lap
        .marked()
        .iter()
        .map(|&node| if node % cols == 0 { 1.0 } else { 0.0 })
        .collect();
    let settings = CgSettings {
        tolerance: params.tolerance,
        max_iterations: None,
    };
    let values = lap.solve_dirichlet(&boundary, &settings)?;
    let grid = Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::Config(e.to_string()))?
        .mapv(|v| v.clamp(0.0, 1.0));
    ConfidenceMap::new(grid)
}

/// Appends the confidence map as the final feature channel.
pub fn attach_confidence(mut features: FeatureStack, conf: &ConfidenceMap) -> Result<FeatureStack> {
    if features.manifest().confidence {
        return Err(Error::Config("feature stack already carries a confidence channel".into()));
    }
    if features.dim() != conf.values().dim() {
        return Err(Error::Config(format!(
            "confidence map {:?} does not match feature grid {:?}",
            conf.values().dim(),
            features.dim()
        )));
    }
    features.push_channel(conf.values().clone());
    features.manifest_mut().confidence = true;
    Ok(features)
}
