//! Random forest over per-pixel feature vectors, producing tissue posteriors.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Tissue;
use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::walker::ProbabilityMaps;

const MODEL_FORMAT: &str = "ivus-forest";
const MODEL_VERSION: u32 = 1;

/// Labelled feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    n_features: usize,
    values: Vec<f64>,
    labels: Vec<Tissue>,
    feature_hash: String,
}

impl TrainingSet {
    pub fn new(n_features: usize) -> Self {
        TrainingSet {
            n_features,
            ..Default::default()
        }
    }

    /// Tags the set with the manifest hash of the features it was drawn from.
    pub fn with_feature_hash(mut self, hash: String) -> Self {
        self.feature_hash = hash;
        self
    }

    pub fn push(&mut self, vector: &[f64], label: Tissue) -> Result<()> {
        if vector.len() != self.n_features {
            return Err(Error::Training(format!(
                "vector of length {} in a {}-feature training set",
                vector.len(),
                self.n_features
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite feature value".into()));
        }
        self.values.extend_from_slice(vector);
        self.labels.push(label);
        Ok(())
    }

    /// Concatenates another set built on the same features.
    pub fn extend(&mut self, other: &TrainingSet) -> Result<()> {
        if other.n_features != self.n_features || (!self.is_empty() && other.feature_hash != self.feature_hash) {
            return Err(Error::Training("training sets use different features".into()));
        }
        if self.is_empty() {
            self.feature_hash = other.feature_hash.clone();
        }
        self.values.extend_from_slice(&other.values);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> Tissue {
        self.labels[i]
    }

    pub fn feature_hash(&self) -> &str {
        &self.feature_hash
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for t in &self.labels {
            counts[t.index()] += 1;
        }
        counts
    }
}

/// Features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSubset {
    /// `ceil(sqrt(D))` features drawn without replacement per node.
    Sqrt,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Nodes with fewer samples become leaves.
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Bootstrap sample size as a fraction of the training set.
    pub percent_to_sample: f64,
    pub samples_per_class: usize,
    pub bootstrap: bool,
    pub feature_subset: FeatureSubset,
    pub rng_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 50,
            min_leaf: 50,
            max_depth: None,
            percent_to_sample: 1.0,
            samples_per_class: 500,
            bootstrap: true,
            feature_subset: FeatureSubset::Sqrt,
            rng_seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_trees > 0
            && self.min_leaf > 0
            && self.max_depth != Some(0)
            && self.percent_to_sample > 0.0
            && self.percent_to_sample <= 1.0
            && self.samples_per_class > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid forest configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// `x[feature] <= threshold` descends left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        probs: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> [f64; 3] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { probs } => return *probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

fn gini(counts: &[usize; 3], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best Gini split of `samples` on one feature; ties keep the lowest threshold.
fn best_threshold(data: &TrainingSet, samples: &[usize], feature: usize, parent: f64) -> Option<Candidate> {
    let mut pairs: Vec<(f64, usize)> = samples
        .iter()
        .map(|&i| (data.row(i)[feature], data.label(i).index()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let mut total = [0usize; 3];
    for &(_, c) in &pairs {
        total[c] += 1;
    }
    let mut left = [0usize; 3];
    let mut best: Option<Candidate> = None;
    for i in 0..n - 1 {
        left[pairs[i].1] += 1;
        let (a, b) = (pairs[i].0, pairs[i + 1].0);
        if a == b {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
        let nl = i + 1;
        let nr = n - nl;
        let gain = parent - (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
        if best.is_none_or(|c| gain > c.gain) {
            let mut threshold = 0.5 * (a + b);
            if threshold >= b {
                threshold = a;
            }
            best = Some(Candidate {
                gain,
                feature,
                threshold,
            });
        }
    }
    best
}

fn leaf(data: &TrainingSet, samples: &[usize]) -> Node {
    let mut counts = [0usize; 3];
    for &i in samples {
        counts[data.label(i).index()] += 1;
    }
    let n = samples.len() as f64;
    Node::Leaf {
        probs: counts.map(|c| c as f64 / n),
    }
}

fn grow_tree(data: &TrainingSet, samples: Vec<usize>, config: &ForestConfig, rng: &mut ChaCha8Rng) -> DecisionTree {
    let n_features = data.n_features();
    let mtry = match config.feature_subset {
        FeatureSubset::All => n_features,
        FeatureSubset::Sqrt => ((n_features as f64).sqrt().ceil() as usize).clamp(1, n_features),
    };
    let mut nodes = vec![Node::Leaf { probs: [0.0; 3] }];
    // (node slot, depth, samples); explicit stack keeps deep trees off the call stack
    let mut work = vec![(0usize, 0usize, samples)];
    while let Some((slot, depth, samples)) = work.pop() {
        let mut counts = [0usize; 3];
        for &i in &samples {
            counts[data.label(i).index()] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let stop = samples.len() < config.min_leaf || pure || config.max_depth.is_some_and(|m| depth >= m);
        let split = if stop {
            None
        } else {
            let parent = gini(&counts, samples.len());
            let mut features = if mtry == n_features {
                (0..n_features).collect::<Vec<_>>()
            } else {
                index::sample(rng, n_features, mtry).into_vec()
            };
            features.sort_unstable();
            let search = |features: &[usize]| {
                features
                    .iter()
                    .filter_map(|&f| best_threshold(data, &samples, f, parent))
                    .fold(None, |best: Option<Candidate>, c| match best {
                        Some(b) if b.gain >= c.gain => Some(b),
                        _ => Some(c),
                    })
            };
            // when every drawn feature is constant here, fall back to the rest
            search(&features).or_else(|| {
                let rest: Vec<usize> = (0..n_features).filter(|f| !features.contains(f)).collect();
                search(&rest)
            })
        };
        match split {
            None => nodes[slot] = leaf(data, &samples),
            Some(c) => {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    samples.iter().partition(|&&i| data.row(i)[c.feature] <= c.threshold);
                let l = nodes.len();
                nodes.push(Node::Leaf { probs: [0.0; 3] });
                nodes.push(Node::Leaf { probs: [0.0; 3] });
                nodes[slot] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: l,
                    right: l + 1,
                };
                work.push((l + 1, depth + 1, right));
                work.push((l, depth + 1, left));
            }
        }
    }
    DecisionTree { nodes }
}

/// Trained forest, serialised as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    format: String,
    version: u32,
    config: ForestConfig,
    n_features: usize,
    feature_hash: String,
    trees: Vec<DecisionTree>,
}

pub fn train_forest(data: &TrainingSet, config: &ForestConfig) -> Result<ForestModel> {
    config.validate()?;
    let counts = data.class_counts();
    for t in Tissue::ALL {
        if counts[t.index()] == 0 {
            return Err(Error::Training(format!("training set has no {t} samples")));
        }
    }
    let n = data.len();
    let draw = ((config.percent_to_sample * n as f64).round() as usize).max(1);
    let mut master = ChaCha8Rng::seed_from_u64(config.rng_seed);
    // all randomness is drawn up front in tree order so parallel growth is reproducible
    let plans: Vec<(Vec<usize>, u64)> = (0..config.n_trees)
        .map(|_| {
            let samples = if config.bootstrap {
                (0..draw).map(|_| master.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            (samples, master.random())
        })
        .collect();
    let trees = plans
        .into_par_iter()
        .map(|(samples, seed)| grow_tree(data, samples, config, &mut ChaCha8Rng::seed_from_u64(seed)))
        .collect();
    Ok(ForestModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        config: *config,
        n_features: data.n_features(),
        feature_hash: data.feature_hash().to_string(),
        trees,
    })
}

impl ForestModel {
    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn feature_hash(&self) -> &str {
        &self.feature_hash
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Mean of the per-tree leaf distributions.
    pub fn predict(&self, x: &[f64]) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for tree in &self.trees {
            let p = tree.predict(x);
            for k in 0..3 {
                acc[k] += p[k];
            }
        }
        acc.map(|v| v / self.trees.len() as f64)
    }

    /// Number of splits using each feature, over all trees.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_features];
        for tree in &self.trees {
            for node in tree.nodes() {
                if let Node::Split { feature, .. } = node {
                    counts[*feature] += 1;
                }
            }
        }
        counts
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ForestModel = serde_json::from_str(text).map_err(|e| Error::Format(format!("forest model: {e}")))?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model {} v{}",
                model.format, model.version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::ingest(path, e))?;
        Self::from_json(&text).map_err(|e| Error::ingest(path, e))
    }
}

/// Per-pixel forest posteriors over a feature stack.
pub fn predict_posterior(model: &ForestModel, features: &FeatureStack) -> Result<ProbabilityMaps> {
    if features.n_features() != model.n_features {
        return Err(Error::Config(format!(
            "model expects {} features, stack has {}",
            model.n_features,
            features.n_features()
        )));
    }
    if !model.feature_hash.is_empty() && model.feature_hash != features.manifest().hash() {
        return Err(Error::Config("feature manifest differs from the one the model was trained on".into()));
    }
    let dim = features.dim();
    let mut maps = [Array2::zeros(dim), Array2::zeros(dim), Array2::zeros(dim)];
    let rows: Vec<Vec<[f64; 3]>> = (0..dim.0)
        .into_par_iter()
        .map(|s| (0..dim.1).map(|d| model.predict(&features.vector_at((s, d)))).collect())
        .collect();
    for (k, map) in maps.iter_mut().enumerate() {
        for (s, mut row) in map.axis_iter_mut(Axis(0)).enumerate() {
            for (d, v) in row.iter_mut().enumerate() {
                *v = rows[s][d][k];
            }
        }
    }
    ProbabilityMaps::new(maps)
}
