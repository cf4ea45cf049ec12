//! Frames, ground-truth contours and three-region label maps.
//!
//! Two coordinate domains coexist. A [`CartesianFrame`] is the image as
//! acquired (row `y`, column `x`, origin top-left). A [`PolarFrame`] is the
//! same frame resampled along rays from the catheter: row `s` is a scan line,
//! column `d` a depth sample, and depth 0 sits on the transducer.

mod contour;
mod io;
mod polar;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use contour::{load_contours, parse_contour, rasterize_labels, ContourSet, LabelWarning, Polygon};
pub use io::{
    load_frame, read_f32_grid, read_feature_stack, read_label_png, write_f32_grid,
    write_feature_stack, write_label_png, write_unit_png, FrameOptions,
};
pub use polar::{from_polar, from_polar_labels, labels_to_polar, to_polar, PolarGeometry};

pub const MIN_SCANLINES: usize = 8;
pub const MIN_DEPTH: usize = 16;

/// Tissue class of a pixel. Discriminants are the on-disk label values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tissue {
    Lumen = 1,
    Media = 2,
    Externa = 3,
}

impl Tissue {
    pub const ALL: [Tissue; 3] = [Tissue::Lumen, Tissue::Media, Tissue::Externa];

    /// Zero-based index, used for posterior channels.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(index: usize) -> Option<Tissue> {
        Self::ALL.get(index).copied()
    }

    pub fn from_value(value: u8) -> Option<Tissue> {
        match value {
            1 => Some(Tissue::Lumen),
            2 => Some(Tissue::Media),
            3 => Some(Tissue::Externa),
            _ => None,
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Tissue::Lumen => "lumen",
            Tissue::Media => "media",
            Tissue::Externa => "externa",
        }
    }
}

impl std::fmt::Display for Tissue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A B-mode frame in image coordinates with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianFrame {
    intensities: Array2<f64>,
    pixel_spacing_mm: Option<f64>,
    catheter_center: (f64, f64),
}

impl CartesianFrame {
    /// Builds a frame, defaulting the catheter to the geometric centre.
    pub fn new(
        intensities: Array2<f64>,
        pixel_spacing_mm: Option<f64>,
        catheter_center: Option<(f64, f64)>,
    ) -> Result<Self> {
        let (height, width) = intensities.dim();
        if width == 0 || height == 0 {
            return Err(Error::Format("frame has a zero dimension".into()));
        }
        if let Some(bad) = intensities.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Domain(format!("intensity {bad} outside [0, 1]")));
        }
        if let Some(spacing) = pixel_spacing_mm {
            if !(spacing.is_finite() && spacing > 0.0) {
                return Err(Error::Config(format!("pixel spacing {spacing} must be positive")));
            }
        }
        let center = catheter_center
            .unwrap_or(((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0));
        let inside = center.0 >= 0.0
            && center.1 >= 0.0
            && center.0 <= width as f64 - 1.0
            && center.1 <= height as f64 - 1.0;
        if !inside {
            return Err(Error::Config(format!(
                "catheter centre ({}, {}) outside a {width}x{height} frame",
                center.0, center.1
            )));
        }
        Ok(CartesianFrame {
            intensities,
            pixel_spacing_mm,
            catheter_center: center,
        })
    }

    pub fn width(&self) -> usize {
        self.intensities.ncols()
    }

    pub fn height(&self) -> usize {
        self.intensities.nrows()
    }

    /// Intensities indexed `[y, x]`.
    pub fn intensities(&self) -> &Array2<f64> {
        &self.intensities
    }

    pub fn pixel_spacing_mm(&self) -> Option<f64> {
        self.pixel_spacing_mm
    }

    pub fn catheter_center(&self) -> (f64, f64) {
        self.catheter_center
    }
}

/// A frame resampled onto scan lines. Rows are scan lines, columns depth.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarFrame {
    intensities: Array2<f64>,
    geometry: PolarGeometry,
}

impl PolarFrame {
    pub fn new(intensities: Array2<f64>, geometry: PolarGeometry) -> Result<Self> {
        let (n_scanlines, n_depth) = intensities.dim();
        if n_scanlines < MIN_SCANLINES || n_depth < MIN_DEPTH {
            return Err(Error::Config(format!(
                "polar grid {n_scanlines}x{n_depth} below the {MIN_SCANLINES}x{MIN_DEPTH} minimum"
            )));
        }
        if (geometry.n_scanlines, geometry.n_depth) != (n_scanlines, n_depth) {
            return Err(Error::Config(format!(
                "geometry {}x{} does not match grid {n_scanlines}x{n_depth}",
                geometry.n_scanlines, geometry.n_depth
            )));
        }
        if intensities.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite polar intensity".into()));
        }
        Ok(PolarFrame {
            intensities,
            geometry,
        })
    }

    /// Wraps a bare grid with unit radial spacing around a nominal centre.
    pub fn from_grid(intensities: Array2<f64>) -> Result<Self> {
        let (n_scanlines, n_depth) = intensities.dim();
        let geometry = PolarGeometry::nominal(n_scanlines, n_depth);
        PolarFrame::new(intensities, geometry)
    }

    pub fn n_scanlines(&self) -> usize {
        self.intensities.nrows()
    }

    pub fn n_depth(&self) -> usize {
        self.intensities.ncols()
    }

    /// Intensities indexed `[scanline, depth]`.
    pub fn intensities(&self) -> &Array2<f64> {
        &self.intensities
    }

    pub fn geometry(&self) -> &PolarGeometry {
        &self.geometry
    }

    pub fn radial_spacing_mm(&self) -> Option<f64> {
        self.geometry.radial_spacing_mm()
    }

    pub fn angular_step_rad(&self) -> f64 {
        self.geometry.angular_step()
    }

    /// The same frame rotated by `shift` scan lines: row `s` moves to `s + shift`.
    pub fn rotated(&self, shift: usize) -> PolarFrame {
        PolarFrame {
            intensities: roll_rows(&self.intensities, shift),
            geometry: self.geometry.clone(),
        }
    }
}

pub(crate) fn roll_rows<T: Clone>(grid: &Array2<T>, shift: usize) -> Array2<T> {
    let rows = grid.nrows();
    Array2::from_shape_fn(grid.dim(), |(r, c)| grid[((r + rows - shift % rows) % rows, c)].clone())
}

/// Hard per-pixel tissue labelling of a frame (either domain).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    labels: Array2<Tissue>,
}

impl LabelMap {
    pub fn new(labels: Array2<Tissue>) -> Self {
        LabelMap { labels }
    }

    pub fn filled(dim: (usize, usize), tissue: Tissue) -> Self {
        LabelMap {
            labels: Array2::from_elem(dim, tissue),
        }
    }

    pub fn from_values(values: &Array2<u8>) -> Result<Self> {
        let mut labels = Array2::from_elem(values.dim(), Tissue::Externa);
        for (dst, &v) in labels.iter_mut().zip(values.iter()) {
            *dst = Tissue::from_value(v)
                .ok_or_else(|| Error::Format(format!("label value {v} not in {{1, 2, 3}}")))?;
        }
        Ok(LabelMap { labels })
    }

    pub fn labels(&self) -> &Array2<Tissue> {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut Array2<Tissue> {
        &mut self.labels
    }

    pub fn dim(&self) -> (usize, usize) {
        self.labels.dim()
    }

    pub fn values(&self) -> Array2<u8> {
        self.labels.mapv(Tissue::value)
    }

    pub fn count(&self, tissue: Tissue) -> usize {
        self.labels.iter().filter(|&&t| t == tissue).count()
    }

    pub fn mask(&self, tissue: Tissue) -> Array2<bool> {
        self.labels.mapv(|t| t == tissue)
    }

    /// Lumen pixels.
    pub fn lumen_region(&self) -> Array2<bool> {
        self.mask(Tissue::Lumen)
    }

    /// Everything enclosed by the external elastic laminae (lumen and media).
    pub fn eel_region(&self) -> Array2<bool> {
        self.labels.mapv(|t| t != Tissue::Externa)
    }

    pub fn rotated(&self, shift: usize) -> LabelMap {
        LabelMap {
            labels: roll_rows(&self.labels, shift),
        }
    }
}
