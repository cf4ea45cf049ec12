//! Frame-level orchestration: polar conversion, features, confidence, forest
//! posteriors, seeding, random walk, topology and scan conversion back.

use log::{info, warn};
use ndarray::Array2;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::confidence::{attach_confidence, confidence_map, ConfidenceMap};
use crate::data::{from_polar, from_polar_labels, labels_to_polar, to_polar, CartesianFrame, LabelMap, PolarFrame};
use crate::error::{Error, Result};
use crate::features::{multiscale_features, FeatureStack};
use crate::forest::{predict_posterior, train_forest, ForestModel, TrainingSet};
use crate::seeds::{sample_training_pixels, select_seeds};
use crate::walker::{argmax_labels, assemble_laplacian, build_lattice, enforce_topology, solve_labels, ProbabilityMaps};

/// Per-frame products that do not depend on the trained model.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub frame: CartesianFrame,
    pub polar: PolarFrame,
    pub confidence: ConfidenceMap,
    pub features: FeatureStack,
}

pub fn prepare_frame(frame: &CartesianFrame, config: &PipelineConfig) -> Result<PreparedFrame> {
    let polar = to_polar(frame, config.n_scanlines, config.n_depth)?;
    let confidence = confidence_map(&polar, &config.confidence)?;
    let features = multiscale_features(&polar, &config.schedule, config.nakagami_features)?;
    let features = attach_confidence(features, &confidence)?;
    Ok(PreparedFrame {
        frame: frame.clone(),
        polar,
        confidence,
        features,
    })
}

/// Draws the per-class training pixels of one labelled frame.
pub fn frame_training_set(
    prepared: &PreparedFrame,
    labels: &LabelMap,
    config: &PipelineConfig,
    rng_seed: u64,
) -> Result<TrainingSet> {
    if labels.dim() != prepared.frame.intensities().dim() {
        return Err(Error::Config("label map does not match its frame".into()));
    }
    let polar_labels = labels_to_polar(labels, prepared.polar.geometry());
    sample_training_pixels(&polar_labels, &prepared.features, config.forest.samples_per_class, rng_seed)
}

/// Trains the forest on labelled, prepared frames; frame `k` samples with
/// seed `rng_seed + k`.
pub fn train_on_frames(frames: &[(&PreparedFrame, &LabelMap)], config: &PipelineConfig) -> Result<ForestModel> {
    let (first, rest) = frames
        .split_first()
        .ok_or_else(|| Error::Training("no training frames".into()))?;
    let mut set = frame_training_set(first.0, first.1, config, config.rng_seed)?;
    for (k, (prepared, labels)) in rest.iter().enumerate() {
        let seed = config.rng_seed.wrapping_add(k as u64 + 1);
        set.extend(&frame_training_set(prepared, labels, config, seed)?)?;
    }
    info!("training forest on {} samples (per class {:?})", set.len(), set.class_counts());
    train_forest(&set, &config.forest)
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    /// Final polar labels (after topology when enabled).
    pub polar_labels: LabelMap,
    /// Walker posteriors, or forest posteriors when seeding failed.
    pub polar_posteriors: ProbabilityMaps,
    pub forest_posteriors: ProbabilityMaps,
    pub labels: LabelMap,
    /// Cartesian posterior of each class.
    pub posteriors: [Array2<f64>; 3],
    /// Seeding failed and the forest argmax was used instead of the walker.
    pub seeding_fallback: bool,
    pub seed_thresholds: Option<[f64; 3]>,
}

pub fn segment_prepared(model: &ForestModel, prepared: &PreparedFrame, config: &PipelineConfig) -> Result<Segmentation> {
    let forest_posteriors = predict_posterior(model, &prepared.features)?;
    let (posteriors, thresholds) = match select_seeds(&forest_posteriors, &config.seeds) {
        Ok(seeding) => {
            let graph = build_lattice(&prepared.polar, Some(prepared.confidence.values()), &config.walker)?;
            let lap = assemble_laplacian(&graph, &seeding.mask)?;
            (solve_labels(&lap, &seeding.mask, &config.walker)?, Some(seeding.thresholds))
        }
        Err(Error::Seeding(reason)) => {
            warn!("seeding failed ({reason}); falling back to forest argmax");
            (forest_posteriors.clone(), None)
        }
        Err(e) => return Err(e),
    };
    let raw = argmax_labels(&posteriors);
    let polar_labels = if config.topology { enforce_topology(&raw) } else { raw };

    let geometry = prepared.polar.geometry();
    let (w, h) = (prepared.frame.width(), prepared.frame.height());
    let labels = from_polar_labels(&polar_labels, geometry, w, h);
    let cartesian = |k: usize| from_polar(posteriors.maps()[k].view(), geometry, w, h);
    Ok(Segmentation {
        polar_labels,
        forest_posteriors,
        labels,
        posteriors: [cartesian(0), cartesian(1), cartesian(2)],
        seeding_fallback: thresholds.is_none(),
        seed_thresholds: thresholds,
        polar_posteriors: posteriors,
    })
}

pub fn segment_frame(model: &ForestModel, frame: &CartesianFrame, config: &PipelineConfig) -> Result<Segmentation> {
    segment_prepared(model, &prepare_frame(frame, config)?, config)
}

/// Prepares many frames in parallel, preserving order.
pub fn prepare_frames(frames: &[CartesianFrame], config: &PipelineConfig) -> Result<Vec<PreparedFrame>> {
    frames.par_iter().map(|f| prepare_frame(f, config)).collect()
}
