//! Labelled frame corpora on disk.
//!
//! Two layouts are recognised, searched recursively under a root:
//!
//! * challenge layout: `frame_<id>.png` with contours `lum_frame_<id>.txt`
//!   and `med_frame_<id>.txt` anywhere under the root. The group of a frame
//!   is its stem without the trailing `_NNN` frame counter.
//! * phantom layout: `<name>_frame.png` with `<name>_labels.png` beside it;
//!   each phantom is its own group.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::{load_contours, load_frame, rasterize_labels, read_label_png, CartesianFrame, FrameOptions, LabelMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    /// Acquisition group; cross-validation folds never split a group.
    pub group: String,
    pub frame: CartesianFrame,
    pub labels: LabelMap,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::ingest(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::ingest(dir, e))?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            walk(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn file_name(path: &Path) -> &str {
    path.file_name().and_then(|n| n.to_str()).unwrap_or("")
}

/// `frame_01_0001_003` → `frame_01_0001`.
pub fn group_of(stem: &str) -> String {
    match stem.rsplit_once('_') {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head.to_string(),
        _ => stem.to_string(),
    }
}

enum Entry {
    Challenge { frame: PathBuf, lumen: PathBuf, media: PathBuf },
    Phantom { frame: PathBuf, labels: PathBuf },
}

fn discover(root: &Path) -> Result<Vec<(String, Entry)>> {
    let mut files = Vec::new();
    walk(root, &mut files)?;
    let by_name: BTreeMap<&str, &PathBuf> = files.iter().map(|p| (file_name(p), p)).collect();
    let mut entries = Vec::new();
    for path in &files {
        let name = file_name(path);
        if let Some(stem) = name.strip_suffix(".png").filter(|s| s.starts_with("frame_")) {
            let lumen = by_name.get(format!("lum_{stem}.txt").as_str());
            let media = by_name.get(format!("med_{stem}.txt").as_str());
            match (lumen, media) {
                (Some(l), Some(m)) => entries.push((
                    stem.to_string(),
                    Entry::Challenge {
                        frame: path.clone(),
                        lumen: (*l).clone(),
                        media: (*m).clone(),
                    },
                )),
                _ => log::warn!("{}: no lum_/med_ contour pair, skipped", path.display()),
            }
        } else if let Some(stem) = name.strip_suffix("_frame.png") {
            let labels = path.with_file_name(format!("{stem}_labels.png"));
            if labels.exists() {
                entries.push((stem.to_string(), Entry::Phantom { frame: path.clone(), labels }));
            } else {
                log::warn!("{}: no {stem}_labels.png, skipped", path.display());
            }
        }
    }
    Ok(entries)
}

/// Loads every labelled frame under `root`, sorted by name.
pub fn load_corpus(root: impl AsRef<Path>, options: &FrameOptions) -> Result<Vec<Sample>> {
    let root = root.as_ref();
    let entries = discover(root)?;
    if entries.is_empty() {
        return Err(Error::ingest(root, "no labelled frames found"));
    }
    let mut samples: Vec<Sample> = entries
        .into_par_iter()
        .map(|(name, entry)| match entry {
            Entry::Challenge { frame, lumen, media } => {
                let frame = load_frame(&frame, options)?;
                let contours = load_contours(&lumen, &media)?;
                let (labels, _) = rasterize_labels(&contours, &frame);
                Ok(Sample {
                    group: group_of(&name),
                    name,
                    frame,
                    labels,
                })
            }
            Entry::Phantom { frame: frame_path, labels } => {
                let frame = load_frame(&frame_path, options)?;
                let labels = read_label_png(&labels)?;
                if labels.dim() != frame.intensities().dim() {
                    return Err(Error::ingest(frame_path, "label image size differs from the frame"));
                }
                Ok(Sample {
                    group: name.clone(),
                    name,
                    frame,
                    labels,
                })
            }
        })
        .collect::<Result<_>>()?;
    samples.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(samples)
}
