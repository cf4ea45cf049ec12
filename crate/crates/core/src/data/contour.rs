use std::path::Path;

use log::warn;
use ndarray::Array2;

use super::{CartesianFrame, LabelMap, Tissue};
use crate::error::{Error, Result};

/// Closed polygon in Cartesian pixel coordinates; the closing edge is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(mut vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Format("non-finite contour coordinate".into()));
        }
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::Format(format!(
                "contour needs at least 3 vertices, found {}",
                vertices.len()
            )));
        }
        Ok(Polygon { vertices })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn reversed(&self) -> Polygon {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Polygon { vertices }
    }

    /// Even-odd fill sampled at pixel centres `(x, y)`.
    ///
    /// Per row, edge crossings are collected and pixels with
    /// `x_a <= x < x_b` between consecutive crossing pairs are filled. Edges
    /// are half-open in `y`, so shared vertices are counted once.
    pub fn mask(&self, width: usize, height: usize) -> Array2<bool> {
        let mut mask = Array2::from_elem((height, width), false);
        let n = self.vertices.len();
        let mut crossings = Vec::with_capacity(n);
        for row in 0..height {
            let py = row as f64;
            crossings.clear();
            for i in 0..n {
                let (xi, yi) = self.vertices[i];
                let (xj, yj) = self.vertices[(i + n - 1) % n];
                if (yi > py) != (yj > py) {
                    crossings.push(xi + (py - yi) * (xj - xi) / (yj - yi));
                }
            }
            crossings.sort_by(|a, b| a.total_cmp(b));
            for pair in crossings.chunks_exact(2) {
                let start = pair[0].ceil().max(0.0);
                let end = pair[1].ceil().min(width as f64);
                if start >= end {
                    continue;
                }
                for x in start as usize..end as usize {
                    mask[(row, x)] = true;
                }
            }
        }
        mask
    }
}

/// Ground-truth lumen and media-adventitia (EEL) borders of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet {
    pub lumen: Polygon,
    pub media: Polygon,
}

/// Parses a contour file body.
///
/// Two layouts are accepted. If every non-empty line holds exactly two
/// numbers (separated by whitespace and/or a comma) each line is one `x y`
/// vertex. Otherwise all numbers are read in order, their count must be
/// even, the first half are the x coordinates and the second half the y
/// coordinates.
pub fn parse_contour(text: &str) -> Result<Polygon> {
    let lines: Vec<Vec<&str>> = text
        .lines()
        .map(|line| {
            line.split(|c: char| c.is_whitespace() || c == ',' || c == ';')
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|tokens| !tokens.is_empty())
        .collect();
    let parse = |t: &str| -> Result<f64> {
        let v: f64 = t
            .parse()
            .map_err(|_| Error::Format(format!("unparsable coordinate {t:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Format(format!("non-finite coordinate {t:?}")))
        }
    };

    let vertices = if !lines.is_empty() && lines.iter().all(|l| l.len() == 2) {
        lines
            .iter()
            .map(|l| Ok((parse(l[0])?, parse(l[1])?)))
            .collect::<Result<Vec<_>>>()?
    } else {
        let values = lines
            .iter()
            .flatten()
            .map(|t| parse(t))
            .collect::<Result<Vec<_>>>()?;
        if values.len() % 2 != 0 {
            return Err(Error::Format(format!(
                "split layout needs an even coordinate count, found {}",
                values.len()
            )));
        }
        let (xs, ys) = values.split_at(values.len() / 2);
        xs.iter().copied().zip(ys.iter().copied()).collect()
    };
    Polygon::new(vertices)
}

fn read_polygon(path: &Path) -> Result<Polygon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::ingest(path, e))?;
    parse_contour(&text).map_err(|e| Error::ingest(path, e))
}

pub fn load_contours(lumen_path: impl AsRef<Path>, media_path: impl AsRef<Path>) -> Result<ContourSet> {
    Ok(ContourSet {
        lumen: read_polygon(lumen_path.as_ref())?,
        media: read_polygon(media_path.as_ref())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelWarning {
    /// Some lumen pixels fall outside the media polygon; lumen took precedence.
    LumenOutsideMedia { pixels: usize },
    /// The media band between the two contours is empty.
    EmptyMedia,
}

/// Rasterises contours into a lumen / media / externa partition.
///
/// Lumen takes precedence where the polygons disagree on nesting.
pub fn rasterize_labels(contours: &ContourSet, frame: &CartesianFrame) -> (LabelMap, Vec<LabelWarning>) {
    let (w, h) = (frame.width(), frame.height());
    let lumen = contours.lumen.mask(w, h);
    let media = contours.media.mask(w, h);
    let mut warnings = Vec::new();

    let outside = lumen.iter().zip(media.iter()).filter(|(&l, &m)| l && !m).count();
    if outside > 0 {
        warn!("{outside} lumen pixels lie outside the media contour; lumen takes precedence");
        warnings.push(LabelWarning::LumenOutsideMedia { pixels: outside });
    }
    let labels = Array2::from_shape_fn((h, w), |idx| {
        if lumen[idx] {
            Tissue::Lumen
        } else if media[idx] {
            Tissue::Media
        } else {
            Tissue::Externa
        }
    });
    let map = LabelMap::new(labels);
    if map.count(Tissue::Media) == 0 {
        warn!("media band is empty");
        warnings.push(LabelWarning::EmptyMedia);
    }
    (map, warnings)
}
