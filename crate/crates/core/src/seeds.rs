//! Distilling forest posteriors into random-walker seeds, and drawing
//! per-class training pixels from labelled frames.

use log::warn;
use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabelMap, Tissue};
use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::forest::TrainingSet;
use crate::walker::{argmax_labels, ProbabilityMaps};

/// Per-pixel optional seed class over a lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedMask {
    seeds: Array2<Option<Tissue>>,
}

impl SeedMask {
    pub fn new(seeds: Array2<Option<Tissue>>) -> Self {
        SeedMask { seeds }
    }

    pub fn grid(&self) -> &Array2<Option<Tissue>> {
        &self.seeds
    }

    pub fn dim(&self) -> (usize, usize) {
        self.seeds.dim()
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// Seed at row-major node index.
    pub fn get_flat(&self, node: usize) -> Option<Tissue> {
        let cols = self.seeds.ncols();
        self.seeds[(node / cols, node % cols)]
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<Tissue>> + '_ {
        self.seeds.iter().copied()
    }

    pub fn count(&self, tissue: Tissue) -> usize {
        self.iter().filter(|&s| s == Some(tissue)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedMode {
    /// Confident, eroded forest regions seed the walker.
    Sparse,
    /// Every pixel is seeded with the forest argmax (forest-only ablation).
    DenseArgmax,
}

impl std::str::FromStr for SeedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(SeedMode::Sparse),
            "dense-argmax" => Ok(SeedMode::DenseArgmax),
            other => Err(Error::Config(format!("unknown seed mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for SeedMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SeedMode::Sparse => "sparse",
            SeedMode::DenseArgmax => "dense-argmax",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub mode: SeedMode,
    /// Starting posterior threshold.
    pub threshold: f64,
    /// Chebyshev radius of the erosion applied to each argmax region.
    pub erosion_radius: usize,
    pub relax_step: f64,
    /// Lowest threshold tried before giving up.
    pub min_threshold: f64,
}

impl Default for SeedPolicy {
    fn default() -> Self {
        SeedPolicy {
            mode: SeedMode::Sparse,
            threshold: 0.9,
            erosion_radius: 2,
            relax_step: 0.05,
            min_threshold: 0.5,
        }
    }
}

impl SeedPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = self.threshold > 0.0
            && self.threshold <= 1.0
            && self.min_threshold > 0.0
            && self.min_threshold <= self.threshold
            && self.relax_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid seed policy {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seeding {
    pub mask: SeedMask,
    /// Threshold at which each class found seeds (after relaxation).
    pub thresholds: [f64; 3],
}

/// Erodes a boolean region by a `(2r + 1)²` square; rows wrap, columns do
/// not, and out-of-lattice neighbours are ignored.
pub fn erode(region: &Array2<bool>, radius: usize) -> Array2<bool> {
    if radius == 0 {
        return region.clone();
    }
    let (rows, cols) = region.dim();
    let mut along_depth = Array2::from_elem((rows, cols), false);
    for s in 0..rows {
        // distance to the next excluded cell on either side
        let mut run = 0usize;
        let mut left = vec![0usize; cols];
        for d in 0..cols {
            run = if region[(s, d)] { run + 1 } else { 0 };
            left[d] = run;
        }
        run = 0;
        for d in (0..cols).rev() {
            run = if region[(s, d)] { run + 1 } else { 0 };
            let need_left = radius.min(d) + 1;
            let need_right = radius.min(cols - 1 - d) + 1;
            along_depth[(s, d)] = left[d] >= need_left && run >= need_right;
        }
    }
    Array2::from_shape_fn((rows, cols), |(s, d)| {
        if 2 * radius + 1 >= rows {
            (0..rows).all(|r| along_depth[(r, d)])
        } else {
            (0..=2 * radius).all(|k| along_depth[((s + rows + k - radius) % rows, d)])
        }
    })
}

/// Confident, eroded argmax regions as seeds, relaxing per class when empty.
pub fn select_seeds(posteriors: &ProbabilityMaps, policy: &SeedPolicy) -> Result<Seeding> {
    policy.validate()?;
    let argmax = argmax_labels(posteriors);
    if policy.mode == SeedMode::DenseArgmax {
        let seeds = argmax.labels().mapv(Some);
        return Ok(Seeding {
            mask: SeedMask::new(seeds),
            thresholds: [0.0; 3],
        });
    }

    let mut seeds = Array2::from_elem(posteriors.dim(), None);
    let mut thresholds = [0.0; 3];
    for tissue in Tissue::ALL {
        let core = erode(&argmax.mask(tissue), policy.erosion_radius);
        let prob = posteriors.get(tissue);
        let mut step = 0;
        loop {
            let threshold = policy.threshold - step as f64 * policy.relax_step;
            if threshold < policy.min_threshold - 1e-12 {
                return Err(Error::Seeding(format!(
                    "no {tissue} seeds even at threshold {}",
                    policy.min_threshold
                )));
            }
            let chosen: Vec<(usize, usize)> = core
                .indexed_iter()
                .filter(|&(idx, &inside)| inside && prob[idx] >= threshold)
                .map(|(idx, _)| idx)
                .collect();
            if !chosen.is_empty() {
                for idx in chosen {
                    seeds[idx] = Some(tissue);
                }
                thresholds[tissue.index()] = threshold;
                break;
            }
            step += 1;
        }
    }
    Ok(Seeding {
        mask: SeedMask::new(seeds),
        thresholds,
    })
}

/// Uniformly draws up to `k_per_class` distinct pixels of each class.
pub fn sample_training_pixels(
    labels: &LabelMap,
    features: &FeatureStack,
    k_per_class: usize,
    rng_seed: u64,
) -> Result<TrainingSet> {
    if labels.dim() != features.dim() {
        return Err(Error::Config(format!(
            "label map {:?} does not match feature grid {:?}",
            labels.dim(),
            features.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut set = TrainingSet::new(features.n_features()).with_feature_hash(features.manifest().hash());
    for tissue in Tissue::ALL {
        let pixels: Vec<(usize, usize)> = labels
            .labels()
            .indexed_iter()
            .filter(|&(_, &t)| t == tissue)
            .map(|(idx, _)| idx)
            .collect();
        if pixels.is_empty() {
            return Err(Error::Sampling(format!("label map has no {tissue} pixels")));
        }
        let amount = k_per_class.min(pixels.len());
        if amount < k_per_class {
            warn!("only {amount} {tissue} pixels available, {k_per_class} requested");
        }
        let mut chosen = index::sample(&mut rng, pixels.len(), amount).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            set.push(&features.vector_at(pixels[i]), tissue)?;
        }
    }
    Ok(set)
}
