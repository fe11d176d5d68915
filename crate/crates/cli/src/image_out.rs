//! 8-bit PNG output.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use pmri_core::LabelMap;

use crate::CliError;

/// Background, CSF, GM, WM.
pub const LABEL_PALETTE: [[u8; 3]; 4] = [[0, 0, 0], [66, 133, 244], [219, 68, 55], [244, 180, 0]];

/// Maps `[lo, hi]` linearly onto 0..=255, clamping outside the window.
pub fn window_to_u8(values: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if !(span > 0.0) || !v.is_finite() {
                return 0;
            }
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

pub fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn encoder<'a>(path: &Path, w: usize, h: usize) -> Result<png::Encoder<'a, BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(png::Encoder::new(BufWriter::new(file), w as u32, h as u32))
}

fn finish(path: &Path, mut enc: png::Encoder<'_, BufWriter<File>>, data: &[u8]) -> Result<(), CliError> {
    enc.set_depth(png::BitDepth::Eight);
    let fail = |e: png::EncodingError| CliError::data(format!("cannot write {}: {e}", path.display()));
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(data).map_err(fail)?;
    writer.finish().map_err(fail)
}

/// Grayscale PNG windowed to `[lo, hi]`.
pub fn write_gray_png(path: &Path, values: &[f64], height: usize, width: usize, lo: f64, hi: f64) -> Result<(), CliError> {
    let mut enc = encoder(path, width, height)?;
    enc.set_color(png::ColorType::Grayscale);
    finish(path, enc, &window_to_u8(values, lo, hi))
}

/// Palette PNG of a label map.
pub fn write_label_png(path: &Path, labels: &LabelMap) -> Result<(), CliError> {
    let mut enc = encoder(path, labels.width, labels.height)?;
    enc.set_color(png::ColorType::Indexed);
    enc.set_palette(LABEL_PALETTE.concat());
    let idx: Vec<u8> = labels.labels.iter().map(|&l| l.min(3)).collect();
    finish(path, enc, &idx)
}
