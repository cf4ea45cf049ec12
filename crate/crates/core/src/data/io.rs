use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader};
use ndarray::Array2;

use super::{CartesianFrame, LabelMap};
use crate::error::{Error, Result};

/// Acquisition metadata not stored in the raster itself.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameOptions {
    pub pixel_spacing_mm: Option<f64>,
    /// Overrides the default geometric-centre catheter position.
    pub catheter_center: Option<(f64, f64)>,
}

/// Loads an 8- or 16-bit grayscale PNG/PGM, scaling by the full range of its bit depth.
pub fn load_frame(path: impl AsRef<Path>, options: &FrameOptions) -> Result<CartesianFrame> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| Error::ingest(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::ingest(path, e))?
        .decode()
        .map_err(|e| Error::ingest(path, e))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::ingest(path, "zero-dimension image"));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f64> = match &img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 65535.0)
            .collect(),
        _ => img
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 255.0)
            .collect(),
    };
    let grid = Array2::from_shape_vec((h, w), values).map_err(|e| Error::ingest(path, e))?;
    CartesianFrame::new(grid, options.pixel_spacing_mm, options.catheter_center)
        .map_err(|e| Error::ingest(path, e))
}

fn write_u32(out: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<usize> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf) as usize)
}

pub(crate) fn write_planes(out: &mut impl Write, planes: &[&Array2<f64>]) -> Result<()> {
    for plane in planes {
        for &v in plane.iter() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_plane(input: &mut impl Read, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut bytes = vec![0u8; rows * cols * 4];
    input.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))
}

/// Writes `u32 width, u32 height` (little-endian) then row-major `f32` values.
pub fn write_f32_grid(path: impl AsRef<Path>, grid: &Array2<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_u32(&mut out, grid.ncols())?;
    write_u32(&mut out, grid.nrows())?;
    write_planes(&mut out, &[grid])?;
    out.flush()?;
    Ok(())
}

pub fn read_f32_grid(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut input = BufReader::new(File::open(path).map_err(|e| Error::ingest(path, e))?);
    let width = read_u32(&mut input)?;
    let height = read_u32(&mut input)?;
    read_plane(&mut input, height, width).map_err(|e| Error::ingest(path, e))
}

/// Writes `u32 width, u32 height, u32 n_features` then channel-major `f32` planes.
pub fn write_feature_stack(path: impl AsRef<Path>, planes: &[Array2<f64>]) -> Result<()> {
    let first = planes
        .first()
        .ok_or_else(|| Error::Format("feature stack without channels".into()))?;
    let mut out = BufWriter::new(File::create(path)?);
    write_u32(&mut out, first.ncols())?;
    write_u32(&mut out, first.nrows())?;
    write_u32(&mut out, planes.len())?;
    let refs: Vec<&Array2<f64>> = planes.iter().collect();
    write_planes(&mut out, &refs)?;
    out.flush()?;
    Ok(())
}

pub fn read_feature_stack(path: impl AsRef<Path>) -> Result<Vec<Array2<f64>>> {
    let path = path.as_ref();
    let mut input = BufReader::new(File::open(path).map_err(|e| Error::ingest(path, e))?);
    let width = read_u32(&mut input)?;
    let height = read_u32(&mut input)?;
    let channels = read_u32(&mut input)?;
    (0..channels)
        .map(|_| read_plane(&mut input, height, width))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::ingest(path, e))
}

fn save_gray(path: &Path, grid: Array2<u8>) -> Result<()> {
    let (h, w) = grid.dim();
    let (raw, _) = grid.into_raw_vec_and_offset();
    let img = GrayImage::from_raw(w as u32, h as u32, raw)
        .ok_or_else(|| Error::Format("raster size mismatch".into()))?;
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::ingest(path, e))
}

/// 8-bit PNG with raw label values 1, 2, 3.
pub fn write_label_png(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    save_gray(path.as_ref(), labels.values())
}

pub fn read_label_png(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| Error::ingest(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::ingest(path, e))?
        .decode()
        .map_err(|e| Error::ingest(path, e))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grid = Array2::from_shape_vec((h, w), img.into_raw()).map_err(|e| Error::ingest(path, e))?;
    LabelMap::from_values(&grid).map_err(|e| Error::ingest(path, e))
}

/// Preview PNG of a `[0, 1]` scalar grid (value × 255).
pub fn write_unit_png(path: impl AsRef<Path>, grid: &Array2<f64>) -> Result<()> {
    save_gray(
        path.as_ref(),
        grid.mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    )
}
