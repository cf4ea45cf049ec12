//! Jaccard, Hausdorff and area-difference scoring, and grouped k-fold
//! cross-validation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::{info, warn};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::data::LabelMap;
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::pipeline::{prepare_frame, segment_prepared, train_on_frames, PreparedFrame};

fn same_shape(a: &Array2<bool>, b: &Array2<bool>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Config(format!("mask shapes {:?} and {:?} differ", a.dim(), b.dim())));
    }
    Ok(())
}

/// `|A ∩ B| / |A ∪ B|`, defined as 1 when both masks are empty.
pub fn jaccard(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<f64> {
    same_shape(pred, truth)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.iter().zip(truth) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// `|area(pred) − area(truth)| / area(truth)`; not symmetric.
pub fn pad(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<f64> {
    same_shape(pred, truth)?;
    let truth_area = truth.iter().filter(|&&v| v).count();
    if truth_area == 0 {
        return Err(Error::Metric("area difference undefined for an empty ground-truth region".into()));
    }
    let pred_area = pred.iter().filter(|&&v| v).count();
    Ok(pred_area.abs_diff(truth_area) as f64 / truth_area as f64)
}

/// Region pixels with a 4-neighbour outside the region or the frame, as `(x, y)`.
pub fn boundary_pixels(region: &Array2<bool>) -> Vec<(f64, f64)> {
    let (h, w) = region.dim();
    let inside = |y: isize, x: isize| y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && region[(y as usize, x as usize)];
    region
        .indexed_iter()
        .filter(|&((y, x), &v)| {
            let (y, x) = (y as isize, x as isize);
            v && !(inside(y - 1, x) && inside(y + 1, x) && inside(y, x - 1) && inside(y, x + 1))
        })
        .map(|((y, x), _)| (x as f64, y as f64))
        .collect()
}

/// Symmetric Hausdorff distance between point sets, scaled by `spacing`.
pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)], spacing: Option<f64>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Metric("Hausdorff distance of an empty contour".into()));
    }
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| {
        from.par_iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    };
    let d = directed(a, b).max(directed(b, a)).sqrt();
    Ok(d * spacing.unwrap_or(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub jcc: f64,
    /// `None` when a contour is empty and the frame is flagged.
    pub hd: Option<f64>,
    pub pad: Option<f64>,
}

fn score_region(pred: &Array2<bool>, truth: &Array2<bool>, spacing: Option<f64>) -> Result<RegionScore> {
    let jcc = jaccard(pred, truth)?;
    let hd = match hausdorff(&boundary_pixels(pred), &boundary_pixels(truth), spacing) {
        Ok(v) => Some(v),
        Err(Error::Metric(_)) => None,
        Err(e) => return Err(e),
    };
    let pad = match pad(pred, truth) {
        Ok(v) => Some(v),
        Err(Error::Metric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(RegionScore { jcc, hd, pad })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub name: String,
    pub group: String,
    pub fold: Option<usize>,
    pub lumen: RegionScore,
    /// Lumen plus media: everything inside the external elastic laminae.
    pub eel: RegionScore,
    /// The walker could not be seeded and forest labels were scored.
    pub fallback: bool,
}

/// Scores a predicted Cartesian label map against ground truth.
pub fn score_labels(pred: &LabelMap, truth: &LabelMap, spacing: Option<f64>) -> Result<(RegionScore, RegionScore)> {
    if pred.dim() != truth.dim() {
        return Err(Error::Config(format!(
            "prediction {:?} and ground truth {:?} differ in size",
            pred.dim(),
            truth.dim()
        )));
    }
    Ok((
        score_region(&pred.lumen_region(), &truth.lumen_region(), spacing)?,
        score_region(&pred.eel_region(), &truth.eel_region(), spacing)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, std, n })
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Lumen,
    Eel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Jcc,
    Hd,
    Pad,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub frames: Vec<FrameScore>,
    /// Test fold of each group, when produced by cross-validation.
    pub folds: BTreeMap<String, usize>,
    /// Text of the configuration that produced the report.
    pub config_echo: String,
    /// Unit of the Hausdorff column.
    pub hd_unit: String,
}

impl MetricReport {
    fn values(&self, region: Region, metric: Metric) -> Vec<f64> {
        self.frames
            .iter()
            .filter_map(|f| {
                let r = match region {
                    Region::Lumen => &f.lumen,
                    Region::Eel => &f.eel,
                };
                match metric {
                    Metric::Jcc => Some(r.jcc),
                    Metric::Hd => r.hd,
                    Metric::Pad => r.pad,
                }
            })
            .collect()
    }

    pub fn summary(&self, region: Region, metric: Metric) -> Option<Summary> {
        Summary::of(&self.values(region, metric))
    }

    /// Frames whose Hausdorff distance or area difference is undefined.
    pub fn flagged(&self) -> usize {
        self.frames
            .iter()
            .filter(|f| f.lumen.hd.is_none() || f.eel.hd.is_none() || f.lumen.pad.is_none() || f.eel.pad.is_none())
            .count()
    }

    /// Aligned mean ± std table: lumen and media (EEL) columns for JCC, HD, PAD.
    pub fn to_table(&self, method: &str) -> String {
        let cell = |r, m| self.summary(r, m).map_or_else(|| "n/a".to_string(), |s| s.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:^41} {:^41}", "", "Lumen", "Media (EEL)");
        let _ = writeln!(
            out,
            "{:<12} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13}",
            "Method",
            "JCC",
            format!("HD ({})", self.hd_unit),
            "PAD",
            "JCC",
            format!("HD ({})", self.hd_unit),
            "PAD"
        );
        let _ = writeln!(
            out,
            "{:<12} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13}",
            method,
            cell(Region::Lumen, Metric::Jcc),
            cell(Region::Lumen, Metric::Hd),
            cell(Region::Lumen, Metric::Pad),
            cell(Region::Eel, Metric::Jcc),
            cell(Region::Eel, Metric::Hd),
            cell(Region::Eel, Metric::Pad)
        );
        let _ = writeln!(out, "frames: {}, flagged: {}", self.frames.len(), self.flagged());
        out
    }

    /// One row per frame, comma separated, with a header.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
        let mut out = String::from("name,group,fold,fallback,lumen_jcc,lumen_hd,lumen_pad,eel_jcc,eel_hd,eel_pad\n");
        for f in &self.frames {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{},{:.6},{},{}",
                f.name,
                f.group,
                f.fold.map_or_else(String::new, |k| k.to_string()),
                f.fallback,
                f.lumen.jcc,
                opt(f.lumen.hd),
                opt(f.lumen.pad),
                f.eel.jcc,
                opt(f.eel.hd),
                opt(f.eel.pad)
            );
        }
        out
    }
}

/// Shuffles the distinct groups with the seed and deals them round-robin
/// into `k` folds.
pub fn assign_folds(groups: &[String], k: usize, rng_seed: u64) -> Result<BTreeMap<String, usize>> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs k ≥ 2, got {k}")));
    }
    let mut distinct: Vec<String> = groups.to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Config(format!(
            "{} groups cannot fill {k} folds",
            distinct.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    distinct.shuffle(&mut rng);
    Ok(distinct.into_iter().enumerate().map(|(i, g)| (g, i % k)).collect())
}

/// Generic grouped cross-validation: `train` sees the training samples of a
/// fold, `segment` labels one held-out sample.
pub fn crossval_with<M: Sync>(
    corpus: &[Sample],
    k: usize,
    rng_seed: u64,
    spacing: Option<f64>,
    train: impl Fn(&[usize]) -> Result<M>,
    segment: impl Fn(&M, usize) -> Result<(LabelMap, bool)> + Sync,
) -> Result<MetricReport> {
    let groups: Vec<String> = corpus.iter().map(|s| s.group.clone()).collect();
    let folds = assign_folds(&groups, k, rng_seed)?;
    let mut frames = Vec::with_capacity(corpus.len());
    for fold in 0..k {
        let (test, train_idx): (Vec<usize>, Vec<usize>) = (0..corpus.len()).partition(|&i| folds[&corpus[i].group] == fold);
        info!("fold {fold}: {} training, {} test frames", train_idx.len(), test.len());
        let model = train(&train_idx)?;
        let scored: Vec<FrameScore> = test
            .par_iter()
            .map(|&i| {
                let sample = &corpus[i];
                let (pred, fallback) = segment(&model, i)?;
                let (lumen, eel) = score_labels(&pred, &sample.labels, spacing)?;
                Ok(FrameScore {
                    name: sample.name.clone(),
                    group: sample.group.clone(),
                    fold: Some(fold),
                    lumen,
                    eel,
                    fallback,
                })
            })
            .collect::<Result<_>>()?;
        frames.extend(scored);
    }
    frames.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(MetricReport {
        frames,
        folds,
        config_echo: String::new(),
        hd_unit: if spacing.is_some() { "mm" } else { "px" }.into(),
    })
}

/// Prepares every frame once (features and confidence do not depend on the
/// model), then cross-validates the full pipeline.
pub fn crossval(corpus: &[Sample], k: usize, config: &PipelineConfig) -> Result<MetricReport> {
    config.validate()?;
    let prepared: Vec<PreparedFrame> = corpus
        .par_iter()
        .map(|s| prepare_frame(&s.frame, config))
        .collect::<Result<_>>()?;
    crossval_prepared(corpus, &prepared, k, config)
}

/// Cross-validation over frames already run through [`prepare_frame`].
pub fn crossval_prepared(
    corpus: &[Sample],
    prepared: &[PreparedFrame],
    k: usize,
    config: &PipelineConfig,
) -> Result<MetricReport> {
    let mut report = crossval_with(
        corpus,
        k,
        config.rng_seed,
        config.pixel_spacing_mm,
        |train| {
            let frames: Vec<(&PreparedFrame, &LabelMap)> =
                train.iter().map(|&i| (&prepared[i], &corpus[i].labels)).collect();
            train_on_frames(&frames, config)
        },
        |model, i| {
            let seg = segment_prepared(model, &prepared[i], config)?;
            if seg.seeding_fallback {
                warn!("{}: scored forest argmax after seeding failure", corpus[i].name);
            }
            Ok((seg.labels, seg.seeding_fallback))
        },
    )?;
    report.config_echo = config.to_text();
    Ok(report)
}
