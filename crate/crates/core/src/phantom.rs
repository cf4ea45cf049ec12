//! Synthetic IVUS frames with known vessel geometry and per-tissue Nakagami
//! speckle, used as ground truth for estimator and pipeline tests.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    from_polar, CartesianFrame, LabelMap, PolarFrame, PolarGeometry, Tissue, MIN_DEPTH, MIN_SCANLINES,
};
use crate::error::{Error, Result};
use crate::features::NakagamiParams;

/// Percentiles of the log envelope mapped to 0 and 1 by the display transform.
const DISPLAY_PERCENTILES: (f64, f64) = (0.001, 0.999);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub n_scanlines: usize,
    pub n_depth: usize,
    /// Lumen boundary depth (in depth samples) of each scan line.
    pub lumen_radius: Vec<f64>,
    /// External elastic laminae depth of each scan line.
    pub media_radius: Vec<f64>,
    pub lumen: NakagamiParams,
    pub media: NakagamiParams,
    pub externa: NakagamiParams,
    /// Envelope decays as `exp(−coeff · d / (n_depth − 1))`.
    pub attenuation_coeff: f64,
    pub rng_seed: u64,
}

impl PhantomSpec {
    /// Concentric circular vessel with the same radii on every scan line.
    pub fn concentric(n_scanlines: usize, n_depth: usize, lumen: f64, media: f64) -> Self {
        let externa = NakagamiParams { m: 2.0, omega: 1.0 };
        PhantomSpec {
            n_scanlines,
            n_depth,
            lumen_radius: vec![lumen; n_scanlines],
            media_radius: vec![media; n_scanlines],
            lumen: NakagamiParams { m: 0.8, omega: 0.1 },
            media: NakagamiParams { m: 1.5, omega: 0.4 },
            externa,
            attenuation_coeff: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scanlines < MIN_SCANLINES || self.n_depth < MIN_DEPTH {
            return Err(Error::Config(format!(
                "phantom grid {}x{} below the {MIN_SCANLINES}x{MIN_DEPTH} minimum",
                self.n_scanlines, self.n_depth
            )));
        }
        if self.lumen_radius.len() != self.n_scanlines || self.media_radius.len() != self.n_scanlines {
            return Err(Error::Config("radius profiles must have one entry per scan line".into()));
        }
        let limit = self.n_depth as f64;
        for (s, (&l, &m)) in self.lumen_radius.iter().zip(&self.media_radius).enumerate() {
            if !(l > 0.0 && l < m && m < limit) {
                return Err(Error::Config(format!(
                    "scan line {s}: need 0 < lumen ({l}) < media ({m}) < {limit}"
                )));
            }
        }
        for p in [self.lumen, self.media, self.externa] {
            NakagamiParams::new(p.m, p.omega).map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(self.attenuation_coeff.is_finite() && self.attenuation_coeff >= 0.0) {
            return Err(Error::Config(format!("attenuation {} must be ≥ 0", self.attenuation_coeff)));
        }
        Ok(())
    }

    pub fn params(&self, tissue: Tissue) -> NakagamiParams {
        match tissue {
            Tissue::Lumen => self.lumen,
            Tissue::Media => self.media,
            Tissue::Externa => self.externa,
        }
    }

    /// Tissue at a fractional lattice position; boundaries interpolate
    /// linearly between scan lines.
    pub fn tissue_at(&self, s: f64, d: f64) -> Tissue {
        let n = self.n_scanlines;
        let s0 = s.floor();
        let t = s - s0;
        let i0 = (s0 as isize).rem_euclid(n as isize) as usize;
        let i1 = (i0 + 1) % n;
        let lerp = |v: &[f64]| v[i0] + t * (v[i1] - v[i0]);
        if d < lerp(&self.lumen_radius) {
            Tissue::Lumen
        } else if d < lerp(&self.media_radius) {
            Tissue::Media
        } else {
            Tissue::Externa
        }
    }

    pub fn polar_labels(&self) -> LabelMap {
        LabelMap::new(Array2::from_shape_fn((self.n_scanlines, self.n_depth), |(s, d)| {
            self.tissue_at(s as f64, d as f64)
        }))
    }
}

/// A generated frame with its envelope and ground truth.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    /// Attenuated envelope before log compression.
    pub envelope: Array2<f64>,
    pub polar: PolarFrame,
    pub labels: LabelMap,
}

impl Phantom {
    /// Scan-converts the phantom into a `size × size` frame centred on the
    /// catheter, with labels rasterised from the analytic boundaries.
    pub fn to_cartesian(&self, size: usize, pixel_spacing_mm: Option<f64>) -> Result<(CartesianFrame, LabelMap)> {
        let geometry = self.polar.geometry().fitted_to_square(size);
        let image = from_polar(self.polar.intensities().view(), &geometry, size, size).mapv(|v| v.clamp(0.0, 1.0));
        let frame = CartesianFrame::new(image, pixel_spacing_mm, None)?;
        let last = (self.spec.n_depth - 1) as f64;
        let labels = LabelMap::new(Array2::from_shape_fn((size, size), |(y, x)| {
            let (s, d) = geometry.lattice_coords(x as f64, y as f64);
            if d > last {
                Tissue::Externa
            } else {
                self.spec.tissue_at(s, d)
            }
        }));
        Ok((frame, labels))
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Draws an envelope per pixel from its tissue's Nakagami law
/// (`R² ~ Gamma(m, Ω/m)`), attenuates with depth and log-compresses so the
/// 0.1 and 99.9 percentiles of `ln r` map to 0 and 1.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let labels = spec.polar_labels();
    let laws: Vec<Gamma<f64>> = Tissue::ALL
        .iter()
        .map(|&t| {
            let p = spec.params(t);
            Gamma::new(p.m, p.omega / p.m).map_err(|e| Error::Config(e.to_string()))
        })
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let depth_scale = (spec.n_depth - 1) as f64;
    let envelope = Array2::from_shape_fn((spec.n_scanlines, spec.n_depth), |(s, d)| {
        let power = laws[labels.labels()[(s, d)].index()].sample(&mut rng);
        power.sqrt().max(f64::MIN_POSITIVE) * (-spec.attenuation_coeff * d as f64 / depth_scale).exp()
    });

    let log = envelope.mapv(f64::ln);
    let mut sorted: Vec<f64> = log.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, DISPLAY_PERCENTILES.0);
    let hi = percentile(&sorted, DISPLAY_PERCENTILES.1);
    if hi - lo <= 0.0 {
        return Err(Error::DegenerateStatistics("phantom envelope has no dynamic range".into()));
    }
    let intensities = log.mapv(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0));
    let polar = PolarFrame::new(intensities, PolarGeometry::nominal(spec.n_scanlines, spec.n_depth))?;
    Ok(Phantom {
        spec: spec.clone(),
        envelope,
        polar,
        labels,
    })
}

/// Ranges for a family of phantoms. Radii and thickness are fractions of
/// `n_depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteVariation {
    pub n_scanlines: usize,
    pub n_depth: usize,
    /// Mean semi-axis of the lumen ellipse.
    pub lumen_radius: (f64, f64),
    pub media_thickness: (f64, f64),
    /// Largest major/minor axis ratio.
    pub max_aspect: f64,
    /// Largest catheter offset from the lumen centre, as a fraction of the
    /// lumen minor semi-axis.
    pub max_offset: f64,
    /// Nakagami shape ranges of lumen, media and externa.
    pub lumen_shape: (f64, f64),
    pub media_shape: (f64, f64),
    pub externa_shape: (f64, f64),
    /// Nakagami scale ranges; their order gives the dark lumen, grey media
    /// and bright externa of B-mode images.
    pub lumen_omega: (f64, f64),
    pub media_omega: (f64, f64),
    pub externa_omega: (f64, f64),
    pub attenuation: (f64, f64),
}

impl Default for SuiteVariation {
    fn default() -> Self {
        SuiteVariation {
            n_scanlines: 256,
            n_depth: 256,
            lumen_radius: (0.2, 0.35),
            media_thickness: (0.08, 0.2),
            max_aspect: 1.4,
            max_offset: 0.5,
            lumen_shape: (0.7, 1.2),
            media_shape: (1.0, 2.0),
            externa_shape: (1.5, 3.0),
            lumen_omega: (0.03, 0.06),
            media_omega: (0.2, 0.35),
            externa_omega: (1.0, 1.5),
            attenuation: (0.3, 1.0),
        }
    }
}

impl SuiteVariation {
    fn validate(&self) -> Result<()> {
        let range_ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        let ok = range_ok(self.lumen_radius)
            && range_ok(self.media_thickness)
            && [self.lumen_shape, self.media_shape, self.externa_shape]
                .into_iter()
                .chain([self.lumen_omega, self.media_omega, self.externa_omega])
                .all(|r| range_ok(r) && r.0 > 0.0)
            && range_ok(self.attenuation)
            && self.lumen_radius.0 > 0.0
            && self.media_thickness.0 > 0.0
            && self.attenuation.0 >= 0.0
            && self.max_aspect >= 1.0
            && (0.0..1.0).contains(&self.max_offset);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid phantom variation {self:?}")))
        }
    }
}

/// Distance along direction `theta` from the catheter to an ellipse that
/// contains it.
fn ray_to_ellipse(theta: f64, center: (f64, f64), axes: (f64, f64), rotation: f64) -> f64 {
    let (c, s) = (rotation.cos(), rotation.sin());
    // express the ray and the catheter offset in the ellipse frame
    let ux = (theta.cos() * c + theta.sin() * s) / axes.0;
    let uy = (-theta.cos() * s + theta.sin() * c) / axes.1;
    let px = (-center.0 * c - center.1 * s) / axes.0;
    let py = (center.0 * s - center.1 * c) / axes.1;
    let a = ux * ux + uy * uy;
    let b = 2.0 * (px * ux + py * uy);
    let k = px * px + py * py - 1.0;
    (-b + (b * b - 4.0 * a * k).sqrt()) / (2.0 * a)
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Spec of one suite member: elliptical lumen off the catheter axis,
/// media band of varying thickness, tissue statistics within the ranges.
fn suite_spec(variation: &SuiteVariation, rng: &mut ChaCha8Rng) -> PhantomSpec {
    let nd = variation.n_depth as f64;
    let radius = uniform(rng, variation.lumen_radius) * nd;
    let aspect = uniform(rng, (1.0, variation.max_aspect));
    let axes = (radius * aspect.sqrt(), radius / aspect.sqrt());
    let rotation = rng.random_range(0.0..TAU);
    let offset = uniform(rng, (0.0, variation.max_offset)) * axes.1;
    let direction = rng.random_range(0.0..TAU);
    let center = (offset * direction.cos(), offset * direction.sin());
    let thickness = uniform(rng, variation.media_thickness) * nd;
    let media_axes = (axes.0 + thickness, axes.1 + thickness * uniform(rng, (0.8, 1.2)));
    let media_rotation = rotation + uniform(rng, (-0.3, 0.3));

    let angle = |s: usize| s as f64 * TAU / variation.n_scanlines as f64;
    let ceiling = nd - 2.0;
    let lumen_radius: Vec<f64> = (0..variation.n_scanlines)
        .map(|s| ray_to_ellipse(angle(s), center, axes, rotation).clamp(1.0, ceiling - 2.0))
        .collect();
    let media_radius: Vec<f64> = (0..variation.n_scanlines)
        .map(|s| {
            let r = ray_to_ellipse(angle(s), center, media_axes, media_rotation);
            r.max(lumen_radius[s] + 2.0).min(ceiling)
        })
        .collect();

    let mut law = |shape: (f64, f64), omega: (f64, f64)| NakagamiParams {
        m: uniform(rng, shape),
        omega: uniform(rng, omega),
    };
    let lumen = law(variation.lumen_shape, variation.lumen_omega);
    let media = law(variation.media_shape, variation.media_omega);
    let externa = law(variation.externa_shape, variation.externa_omega);
    PhantomSpec {
        n_scanlines: variation.n_scanlines,
        n_depth: variation.n_depth,
        lumen_radius,
        media_radius,
        lumen,
        media,
        externa,
        attenuation_coeff: uniform(rng, variation.attenuation),
        rng_seed: rng.random(),
    }
}

/// Deterministic family of `count` phantoms; specs are drawn sequentially
/// and frames are generated in parallel.
pub fn phantom_suite(count: usize, variation: &SuiteVariation, rng_seed: u64) -> Result<Vec<Phantom>> {
    if count == 0 {
        return Err(Error::Config("phantom suite needs at least one member".into()));
    }
    variation.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let specs: Vec<PhantomSpec> = (0..count).map(|_| suite_spec(variation, &mut rng)).collect();
    specs.par_iter().map(generate_phantom).collect()
}
