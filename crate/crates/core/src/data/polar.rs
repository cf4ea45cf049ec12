use std::f64::consts::TAU;

use ndarray::{Array2, ArrayView2};

use super::{CartesianFrame, LabelMap, PolarFrame, Tissue, MIN_DEPTH, MIN_SCANLINES};
use crate::error::{Error, Result};

/// Mapping between a polar lattice and the Cartesian frame it was sampled from.
///
/// Scan line `s` points at angle `s * 2π / n_scanlines` (x right, y down),
/// depth sample `d` lies `d * radial_step` pixels from the catheter centre.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGeometry {
    pub n_scanlines: usize,
    pub n_depth: usize,
    pub center: (f64, f64),
    /// Pixels per depth sample.
    pub radial_step: f64,
    pub pixel_spacing_mm: Option<f64>,
}

impl PolarGeometry {
    /// Lattice reaching from the catheter to the nearest frame edge.
    pub fn for_frame(frame: &CartesianFrame, n_scanlines: usize, n_depth: usize) -> Result<Self> {
        if n_scanlines < MIN_SCANLINES || n_depth < MIN_DEPTH {
            return Err(Error::Config(format!(
                "polar grid {n_scanlines}x{n_depth} below the {MIN_SCANLINES}x{MIN_DEPTH} minimum"
            )));
        }
        let (cx, cy) = frame.catheter_center();
        let max_x = frame.width() as f64 - 1.0;
        let max_y = frame.height() as f64 - 1.0;
        let reach = cx.min(cy).min(max_x - cx).min(max_y - cy);
        if reach <= 0.0 {
            return Err(Error::Config(
                "catheter centre lies on the frame border; no radial extent".into(),
            ));
        }
        Ok(PolarGeometry {
            n_scanlines,
            n_depth,
            center: (cx, cy),
            radial_step: reach / (n_depth - 1) as f64,
            pixel_spacing_mm: frame.pixel_spacing_mm(),
        })
    }

    /// Unit radial step around the centre of a `(2 n_depth - 1)`-pixel square.
    pub fn nominal(n_scanlines: usize, n_depth: usize) -> Self {
        let c = n_depth.saturating_sub(1) as f64;
        PolarGeometry {
            n_scanlines,
            n_depth,
            center: (c, c),
            radial_step: 1.0,
            pixel_spacing_mm: None,
        }
    }

    /// Same lattice re-anchored in a square Cartesian frame of `size` pixels.
    pub fn fitted_to_square(&self, size: usize) -> Self {
        let c = (size as f64 - 1.0) / 2.0;
        PolarGeometry {
            center: (c, c),
            radial_step: c / (self.n_depth - 1) as f64,
            ..self.clone()
        }
    }

    pub fn angular_step(&self) -> f64 {
        TAU / self.n_scanlines as f64
    }

    pub fn max_radius(&self) -> f64 {
        self.radial_step * (self.n_depth - 1) as f64
    }

    pub fn radial_spacing_mm(&self) -> Option<f64> {
        self.pixel_spacing_mm.map(|s| s * self.radial_step)
    }

    /// Cartesian position of lattice node `(s, d)`.
    pub fn position(&self, s: f64, d: f64) -> (f64, f64) {
        let theta = s * self.angular_step();
        let r = d * self.radial_step;
        (self.center.0 + r * theta.cos(), self.center.1 + r * theta.sin())
    }

    /// Fractional `(scanline, depth)` of a Cartesian point; scanline in `[0, n_scanlines)`.
    pub fn lattice_coords(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let theta = dy.atan2(dx).rem_euclid(TAU);
        let s = (theta / self.angular_step()).rem_euclid(self.n_scanlines as f64);
        (s, dx.hypot(dy) / self.radial_step)
    }
}

fn bilinear_cartesian(img: &Array2<f64>, x: f64, y: f64) -> f64 {
    let (h, w) = img.dim();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = img[(y0, x0)] * (1.0 - fx) + img[(y0, x1)] * fx;
    let bottom = img[(y1, x0)] * (1.0 - fx) + img[(y1, x1)] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resamples a frame along `n_scanlines` rays of `n_depth` bilinear samples.
pub fn to_polar(frame: &CartesianFrame, n_scanlines: usize, n_depth: usize) -> Result<PolarFrame> {
    let geometry = PolarGeometry::for_frame(frame, n_scanlines, n_depth)?;
    let img = frame.intensities();
    let grid = Array2::from_shape_fn((n_scanlines, n_depth), |(s, d)| {
        let (x, y) = geometry.position(s as f64, d as f64);
        bilinear_cartesian(img, x, y)
    });
    PolarFrame::new(grid, geometry)
}

/// Nearest-neighbour resampling of a Cartesian label map onto a polar lattice.
pub fn labels_to_polar(labels: &LabelMap, geometry: &PolarGeometry) -> LabelMap {
    let (h, w) = labels.dim();
    let src = labels.labels();
    LabelMap::new(Array2::from_shape_fn(
        (geometry.n_scanlines, geometry.n_depth),
        |(s, d)| {
            let (x, y) = geometry.position(s as f64, d as f64);
            let xi = (x.round().max(0.0) as usize).min(w - 1);
            let yi = (y.round().max(0.0) as usize).min(h - 1);
            src[(yi, xi)]
        },
    ))
}

/// Inverse bilinear resampling of a polar scalar grid; zero beyond the sampled disk.
pub fn from_polar(
    polar: ArrayView2<'_, f64>,
    geometry: &PolarGeometry,
    width: usize,
    height: usize,
) -> Array2<f64> {
    let n_s = geometry.n_scanlines;
    let last_depth = (geometry.n_depth - 1) as f64;
    Array2::from_shape_fn((height, width), |(y, x)| {
        let (s, d) = geometry.lattice_coords(x as f64, y as f64);
        if d > last_depth + 1e-9 {
            return 0.0;
        }
        let d = d.min(last_depth);
        let s0 = s.floor() as usize % n_s;
        let s1 = (s0 + 1) % n_s;
        let fs = s - s.floor();
        let d0 = (d.floor() as usize).min(geometry.n_depth - 1);
        let d1 = (d0 + 1).min(geometry.n_depth - 1);
        let fd = d - d0 as f64;
        let near = polar[(s0, d0)] * (1.0 - fd) + polar[(s0, d1)] * fd;
        let far = polar[(s1, d0)] * (1.0 - fd) + polar[(s1, d1)] * fd;
        near * (1.0 - fs) + far * fs
    })
}

/// Nearest-neighbour inverse resampling of labels; externa beyond the sampled disk.
pub fn from_polar_labels(
    polar: &LabelMap,
    geometry: &PolarGeometry,
    width: usize,
    height: usize,
) -> LabelMap {
    let n_s = geometry.n_scanlines;
    let last_depth = (geometry.n_depth - 1) as f64;
    let src = polar.labels();
    LabelMap::new(Array2::from_shape_fn((height, width), |(y, x)| {
        let (s, d) = geometry.lattice_coords(x as f64, y as f64);
        if d > last_depth + 1e-9 {
            return Tissue::Externa;
        }
        let si = s.round() as usize % n_s;
        let di = (d.round() as usize).min(geometry.n_depth - 1);
        src[(si, di)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_frame(size: usize) -> CartesianFrame {
        let c = (size as f64 - 1.0) / 2.0;
        let img = Array2::from_shape_fn((size, size), |(y, x)| {
            let r = (x as f64 - c).hypot(y as f64 - c);
            0.5 + 0.5 * (r / 6.0).sin()
        });
        CartesianFrame::new(img, None, None).unwrap()
    }

    #[test]
    fn constant_image_gives_constant_polar() {
        let frame = CartesianFrame::new(Array2::from_elem((40, 30), 0.37), None, None).unwrap();
        let polar = to_polar(&frame, 16, 20).unwrap();
        assert!(polar.intensities().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn depth_reaches_nearest_edge() {
        let frame = CartesianFrame::new(Array2::zeros((41, 61)), None, None).unwrap();
        let g = PolarGeometry::for_frame(&frame, 8, 21).unwrap();
        assert_eq!(g.max_radius(), 20.0);
        assert_eq!(g.radial_step, 1.0);
    }

    #[test]
    fn ring_scanlines_agree_under_grid_symmetry() {
        // Rays related by a symmetry of the pixel grid (multiples of 90°, and the
        // diagonals among themselves) sample identical values.
        let polar = to_polar(&ring_frame(101), 8, 40).unwrap();
        let p = polar.intensities();
        for d in 0..40 {
            for s in [2, 4, 6] {
                assert!((p[(s, d)] - p[(0, d)]).abs() < 1e-6);
            }
            for s in [3, 5, 7] {
                assert!((p[(s, d)] - p[(1, d)]).abs() < 1e-6);
            }
            // All rays agree up to bilinear interpolation error.
            assert!((p[(1, d)] - p[(0, d)]).abs() < 0.02);
        }
    }

    #[test]
    fn smooth_radial_gradient_round_trips() {
        let size = 384;
        let c = (size as f64 - 1.0) / 2.0;
        let img = Array2::from_shape_fn((size, size), |(y, x)| {
            ((x as f64 - c).hypot(y as f64 - c) / c).min(1.0)
        });
        let frame = CartesianFrame::new(img.clone(), None, None).unwrap();
        let polar = to_polar(&frame, 256, 256).unwrap();
        let back = from_polar(polar.intensities().view(), polar.geometry(), size, size);
        let mut max_err: f64 = 0.0;
        for ((y, x), v) in back.indexed_iter() {
            if (x as f64 - c).hypot(y as f64 - c) <= c {
                max_err = max_err.max((v - img[(y, x)]).abs());
            }
        }
        assert!(max_err < 0.02, "round trip error {max_err}");
    }

    #[test]
    fn constant_polar_fills_the_disk() {
        let g = PolarGeometry::nominal(16, 20);
        let polar = Array2::from_elem((16, 20), 0.8);
        let size = 39;
        let cart = from_polar(polar.view(), &g, size, size);
        for ((y, x), v) in cart.indexed_iter() {
            let r = (x as f64 - 19.0).hypot(y as f64 - 19.0);
            if r <= 19.0 {
                assert!((v - 0.8).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn impulse_stays_within_its_sector() {
        let g = PolarGeometry::nominal(32, 40);
        let mut polar = Array2::zeros((32, 40));
        let line = 5;
        polar.row_mut(line).fill(1.0);
        let cart = from_polar(polar.view(), &g, 79, 79);
        let step = g.angular_step();
        let target = line as f64 * step;
        let mut lit = 0;
        for ((y, x), v) in cart.indexed_iter() {
            let (dx, dy) = (x as f64 - 39.0, y as f64 - 39.0);
            if dx == 0.0 && dy == 0.0 {
                continue;
            }
            let theta = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
            let diff = (theta - target).abs().min(std::f64::consts::TAU - (theta - target).abs());
            let in_sector = diff < step && dx.hypot(dy) <= 39.0;
            if *v != 0.0 {
                lit += 1;
                assert!(in_sector, "pixel ({x},{y}) lit outside sector");
            }
        }
        assert!(lit > 0);
    }

    #[test]
    fn label_resampling_stays_in_label_set() {
        let g = PolarGeometry::nominal(16, 20);
        let labels = LabelMap::new(Array2::from_shape_fn((16, 20), |(s, d)| {
            Tissue::from_index((s + d) % 3).unwrap()
        }));
        let cart = from_polar_labels(&labels, &g, 39, 39);
        let values = cart.values();
        assert!(values.iter().all(|v| (1..=3).contains(v)));
        // corners lie beyond the disk
        assert_eq!(cart.labels()[(0, 0)], Tissue::Externa);
    }
}
