//! Backscatter statistics of speckle over multiscale scan-line windows.
//!
//! The envelope `r` of an echo from randomly placed scatterers follows a
//! Nakagami law `N(r | m, Ω)`. After log compression the intensity
//! `i = ln r` of a Rayleigh envelope (Nakagami with `m = 1`) has the
//! Fisher-Tippett density
//!
//! ```text
//! F(i | σ) = 2 exp([2i − ln 2σ²] − exp[2i − ln 2σ²])
//! ```
//!
//! whose mean is `½(ln 2σ² − γ)` (γ the Euler–Mascheroni constant) and whose
//! variance is the constant `π²/24`. Since the variance carries no
//! information about σ, the scale is recovered from the window mean.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, PolarFrame};
use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Variance of `i` under the Fisher-Tippett law, independent of σ.
pub const FISHER_TIPPETT_VARIANCE: f64 = std::f64::consts::PI * std::f64::consts::PI / 24.0;

/// σ assigned to windows whose samples are all equal.
pub const SIGMA_FLOOR: f64 = 1e-6;

const MIN_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NakagamiParams {
    pub m: f64,
    pub omega: f64,
}

impl NakagamiParams {
    pub fn new(m: f64, omega: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0 && omega.is_finite() && omega > 0.0) {
            return Err(Error::Domain(format!("Nakagami parameters m={m}, Ω={omega} must be positive")));
        }
        Ok(NakagamiParams { m, omega })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherTippettParams {
    sigma: f64,
    location: f64,
}

impl FisherTippettParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Domain(format!("Fisher-Tippett σ={sigma} must be positive")));
        }
        Ok(FisherTippettParams {
            sigma,
            location: (2.0 * sigma * sigma).ln(),
        })
    }

    /// σ whose Fisher-Tippett mean equals `mean`.
    fn from_mean(mean: f64) -> f64 {
        ((2.0 * mean + EULER_GAMMA).exp() / 2.0).sqrt()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `ln(2σ²)`.
    pub fn location(&self) -> f64 {
        self.location
    }
}

fn mean_and_variance(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var)
}

/// Spread below this fraction of the magnitude counts as zero variance.
fn is_degenerate(mean: f64, var: f64) -> bool {
    var <= 1e-24 * mean.abs().max(1.0).powi(2)
}

/// Moment estimate `Ω = E[R²]`, `m = E[R²]² / E[(R² − E[R²])²]`.
pub fn estimate_nakagami(samples: &[f64]) -> Result<NakagamiParams> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::DegenerateStatistics(format!(
            "{} samples, need at least {MIN_SAMPLES}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!("envelope sample {bad} is negative or non-finite")));
    }
    let (omega, var) = mean_and_variance(samples.iter().map(|r| r * r));
    if is_degenerate(omega, var) {
        return Err(Error::DegenerateStatistics("R² has zero variance".into()));
    }
    NakagamiParams::new(omega * omega / var, omega)
}

/// Moment-closure estimate of σ from log-compressed intensities.
pub fn estimate_fisher_tippett(intensities: &[f64]) -> Result<FisherTippettParams> {
    if intensities.len() < MIN_SAMPLES {
        return Err(Error::DegenerateStatistics(format!(
            "{} samples, need at least {MIN_SAMPLES}",
            intensities.len()
        )));
    }
    if intensities.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite intensity sample".into()));
    }
    let (mean, var) = mean_and_variance(intensities.iter().copied());
    if is_degenerate(mean, var) {
        return Err(Error::DegenerateStatistics("intensities have zero variance".into()));
    }
    FisherTippettParams::new(FisherTippettParams::from_mean(mean))
}

/// Window sizes `(τ_trans, τ_axial)`: scan lines × depth samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSchedule {
    windows: Vec<(usize, usize)>,
}

impl WindowSchedule {
    pub fn new(windows: Vec<(usize, usize)>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Config("window schedule is empty".into()));
        }
        for (i, &(t, a)) in windows.iter().enumerate() {
            if t < 3 || a < 3 || t % 2 == 0 || a % 2 == 0 {
                return Err(Error::Config(format!("window ({t}, {a}) must be odd and at least 3 in both axes")));
            }
            if windows[..i].contains(&(t, a)) {
                return Err(Error::Config(format!("window ({t}, {a}) listed twice")));
            }
        }
        Ok(WindowSchedule { windows })
    }

    pub fn windows(&self) -> &[(usize, usize)] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Parses a comma list of `TRANSxAXIAL` entries, e.g. `3x3,3x5`.
    pub fn parse(text: &str) -> Result<Self> {
        let windows = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| {
                let (t, a) = item
                    .split_once('x')
                    .ok_or_else(|| Error::Config(format!("window {item:?} is not TRANSxAXIAL")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("window {item:?} is not TRANSxAXIAL")))
                };
                Ok((parse(t)?, parse(a)?))
            })
            .collect::<Result<Vec<_>>>()?;
        WindowSchedule::new(windows)
    }

    pub fn to_text(&self) -> String {
        self.windows
            .iter()
            .map(|(t, a)| format!("{t}x{a}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl Default for WindowSchedule {
    /// Three scan lines by 3, 5, …, 29 depth samples.
    fn default() -> Self {
        WindowSchedule {
            windows: (3..=29).step_by(2).map(|a| (3, a)).collect(),
        }
    }
}

/// What each channel of a feature stack means.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub schedule: WindowSchedule,
    /// Per-window Nakagami `(m, Ω)` pairs follow the Fisher-Tippett pairs.
    pub nakagami: bool,
    /// Signal confidence is the final channel.
    pub confidence: bool,
}

impl FeatureManifest {
    pub fn n_features(&self) -> usize {
        let per_window = if self.nakagami { 4 } else { 2 };
        per_window * self.schedule.len() + usize::from(self.confidence)
    }

    pub fn channel_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_features());
        for (t, a) in self.schedule.windows() {
            names.push(format!("mean_intensity_{t}x{a}"));
            names.push(format!("ft_sigma_{t}x{a}"));
        }
        if self.nakagami {
            for (t, a) in self.schedule.windows() {
                names.push(format!("nakagami_m_{t}x{a}"));
                names.push(format!("nakagami_omega_{t}x{a}"));
            }
        }
        if self.confidence {
            names.push("confidence".into());
        }
        names
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "schedule = {}", self.schedule.to_text());
        let _ = writeln!(out, "nakagami = {}", self.nakagami);
        let _ = writeln!(out, "confidence = {}", self.confidence);
        for (i, name) in self.channel_names().iter().enumerate() {
            let _ = writeln!(out, "channel.{i} = {name}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut schedule = None;
        let mut nakagami = false;
        let mut confidence = false;
        for line in text.lines() {
            let Some((key, value)) = line.split_once('=') else { continue };
            let value = value.trim();
            let flag = || value.parse::<bool>().map_err(|_| Error::Format(format!("bad flag {value:?}")));
            match key.trim() {
                "schedule" => schedule = Some(WindowSchedule::parse(value)?),
                "nakagami" => nakagami = flag()?,
                "confidence" => confidence = flag()?,
                _ => {}
            }
        }
        Ok(FeatureManifest {
            schedule: schedule.ok_or_else(|| Error::Format("manifest lacks a schedule".into()))?,
            nakagami,
            confidence,
        })
    }

    /// SHA-256 of the channel layout, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-pixel ordered feature vectors over a polar lattice, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    channels: Vec<Array2<f64>>,
    manifest: FeatureManifest,
    degenerate_windows: usize,
}

impl FeatureStack {
    pub fn new(channels: Vec<Array2<f64>>, manifest: FeatureManifest) -> Result<Self> {
        if channels.len() != manifest.n_features() {
            return Err(Error::Config(format!(
                "{} channels for a manifest of {}",
                channels.len(),
                manifest.n_features()
            )));
        }
        let dim = channels.first().map(|c| c.dim()).unwrap_or((0, 0));
        if channels.iter().any(|c| c.dim() != dim) {
            return Err(Error::Config("feature channels differ in shape".into()));
        }
        if channels.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::Domain("non-finite feature value".into()));
        }
        Ok(FeatureStack {
            channels,
            manifest,
            degenerate_windows: 0,
        })
    }

    pub fn n_scanlines(&self) -> usize {
        self.channels[0].nrows()
    }

    pub fn n_depth(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.channels[0].dim()
    }

    pub fn n_features(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, k: usize) -> &Array2<f64> {
        &self.channels[k]
    }

    pub fn channels(&self) -> &[Array2<f64>] {
        &self.channels
    }

    pub fn manifest(&self) -> &FeatureManifest {
        &self.manifest
    }

    /// Pixel-window pairs that fell back to [`SIGMA_FLOOR`].
    pub fn degenerate_windows(&self) -> usize {
        self.degenerate_windows
    }

    pub fn vector_at(&self, idx: (usize, usize)) -> Vec<f64> {
        self.channels.iter().map(|c| c[idx]).collect()
    }

    pub(crate) fn push_channel(&mut self, channel: Array2<f64>) {
        self.channels.push(channel);
    }

    pub(crate) fn manifest_mut(&mut self) -> &mut FeatureManifest {
        &mut self.manifest
    }

    /// Writes the binary stack and a `<path>.manifest` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        data::write_feature_stack(path, &self.channels)?;
        std::fs::write(manifest_path(path), self.manifest.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let channels = data::read_feature_stack(path)?;
        let text = std::fs::read_to_string(manifest_path(path)).map_err(|e| Error::Ingest {
            path: manifest_path(path),
            reason: e.to_string(),
        })?;
        FeatureStack::new(channels, FeatureManifest::from_text(&text)?)
    }
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest");
    name.into()
}

/// Centred window sums of `x^power` along depth, replicate-padded.
fn radial_sums(grid: &Array2<f64>, half: usize, power: i32) -> Array2<f64> {
    let (rows, cols) = grid.dim();
    let width = 2 * half + 1;
    let mut out = Array2::zeros((rows, cols));
    let mut prefix = vec![0.0; cols + 2 * half + 1];
    for s in 0..rows {
        let row = grid.row(s);
        for k in 0..cols + 2 * half {
            let d = k.saturating_sub(half).min(cols - 1);
            prefix[k + 1] = prefix[k] + row[d].powi(power);
        }
        for d in 0..cols {
            out[(s, d)] = prefix[d + width] - prefix[d];
        }
    }
    out
}

/// Adds `2·half + 1` neighbouring scan lines (wrapping) in a fixed order.
fn angular_sums(grid: &Array2<f64>, half: usize) -> Array2<f64> {
    let (rows, cols) = grid.dim();
    let mut out = Array2::zeros((rows, cols));
    for s in 0..rows {
        for k in 0..=2 * half {
            let src = (s + rows * (half + 1) + k - half) % rows;
            for d in 0..cols {
                out[(s, d)] += grid[(src, d)];
            }
        }
    }
    out
}

struct WindowChannels {
    pairs: [Array2<f64>; 2],
    nakagami: Option<[Array2<f64>; 2]>,
    degenerate: usize,
}

fn window_channels(frame: &Array2<f64>, (t, a): (usize, usize), nakagami: bool) -> WindowChannels {
    let (ht, ha) = (t / 2, a / 2);
    let n = (t * a) as f64;
    let moment = |power: i32| angular_sums(&radial_sums(frame, ha, power), ht).mapv(|v| v / n);
    let m1 = moment(1);
    let m2 = moment(2);
    let mut degenerate = 0;
    let mut sigma = Array2::zeros(frame.dim());
    for ((idx, &mean), &sq) in m1.indexed_iter().zip(m2.iter()) {
        let var = (sq - mean * mean).max(0.0);
        sigma[idx] = if var <= 1e-12 {
            degenerate += 1;
            SIGMA_FLOOR
        } else {
            FisherTippettParams::from_mean(mean)
        };
    }
    let nakagami = nakagami.then(|| {
        let m4 = moment(4);
        let mut shape = Array2::zeros(frame.dim());
        let mut omega = Array2::zeros(frame.dim());
        for ((idx, &om), &fourth) in m2.indexed_iter().zip(m4.iter()) {
            let var = (fourth - om * om).max(0.0);
            omega[idx] = om.max(SIGMA_FLOOR);
            shape[idx] = if var <= 1e-12 { SIGMA_FLOOR } else { om * om / var };
        }
        [shape, omega]
    });
    WindowChannels {
        pairs: [m1, sigma],
        nakagami,
        degenerate,
    }
}

/// Multiscale Fisher-Tippett `(mean intensity, σ)` channels, two per window.
///
/// Channel `2k` is the mean intensity and `2k + 1` the σ of schedule entry
/// `k`. Windows are centred, wrap across the angular seam and replicate the
/// first/last depth sample at the radial borders. With `nakagami` set, each
/// window additionally contributes `(m, Ω)` computed on the intensities,
/// appended after all Fisher-Tippett pairs.
pub fn multiscale_features(polar: &PolarFrame, schedule: &WindowSchedule, nakagami: bool) -> Result<FeatureStack> {
    let (rows, cols) = polar.intensities().dim();
    if let Some(&(t, a)) = schedule.windows().iter().find(|&&(t, a)| t > rows || a > cols) {
        return Err(Error::Config(format!(
            "window ({t}, {a}) exceeds the {rows}x{cols} polar frame"
        )));
    }
    let per_window: Vec<WindowChannels> = schedule
        .windows()
        .par_iter()
        .map(|&w| window_channels(polar.intensities(), w, nakagami))
        .collect();

    let mut channels = Vec::new();
    let mut extra = Vec::new();
    let mut degenerate = 0;
    for w in per_window {
        degenerate += w.degenerate;
        channels.extend(w.pairs);
        if let Some(nk) = w.nakagami {
            extra.extend(nk);
        }
    }
    channels.extend(extra);
    let manifest = FeatureManifest {
        schedule: schedule.clone(),
        nakagami,
        confidence: false,
    };
    let mut stack = FeatureStack::new(channels, manifest)?;
    stack.degenerate_windows = degenerate;
    Ok(stack)
}
