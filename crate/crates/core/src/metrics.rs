//! Image-quality and segmentation metrics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::types::{LabelMap, NUM_CLASSES};

/// `20 log10(||x_org|| / ||x_org - x_rec||)`; `+inf` when the two are equal.
pub fn snr_db(x_rec: &[f64], x_org: &[f64]) -> Result<f64> {
    if x_rec.len() != x_org.len() {
        return Err(Error::Shape("SNR inputs differ in length".into()));
    }
    let norm = x_org.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("SNR reference image is zero".into()));
    }
    let err = x_org
        .iter()
        .zip(x_rec)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (norm / err).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - r;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    taps
}

/// Gaussian-weighted local mean; the window is truncated at the borders and
/// renormalized over the pixels that remain.
fn local_mean(x: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = SSIM_WINDOW / 2;
    let pass = |src: &[f64], len: usize, stride: usize, count: usize, step: usize| {
        let mut out = vec![0.0; src.len()];
        for line in 0..count {
            let base = line * step;
            for i in 0..len {
                let (lo, hi) = (i.saturating_sub(r), (i + r).min(len - 1));
                let (mut acc, mut wsum) = (0.0, 0.0);
                for j in lo..=hi {
                    let t = taps[j + r - i];
                    acc += t * src[base + j * stride];
                    wsum += t;
                }
                out[base + i * stride] = acc / wsum;
            }
        }
        out
    };
    let rows = pass(x, w, 1, h, w);
    pass(&rows, h, w, w, 1)
}

/// Mean structural similarity of two real images, with dynamic range `max(x_org)`.
pub fn ssim(x_rec: &[f64], x_org: &[f64], height: usize, width: usize) -> Result<f64> {
    let n = height * width;
    if x_rec.len() != n || x_org.len() != n || n == 0 {
        return Err(Error::Shape(format!("SSIM inputs must both be {height}x{width}")));
    }
    let l = x_org.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let taps = gaussian_taps();
    let mx = local_mean(x_rec, height, width, &taps);
    let my = local_mean(x_org, height, width, &taps);
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mxx = local_mean(&sq(x_rec, x_rec), height, width, &taps);
    let myy = local_mean(&sq(x_org, x_org), height, width, &taps);
    let mxy = local_mean(&sq(x_rec, x_org), height, width, &taps);
    let mut total = 0.0;
    for p in 0..n {
        let (ux, uy) = (mx[p], my[p]);
        let vx = mxx[p] - ux * ux;
        let vy = myy[p] - uy * uy;
        let cxy = mxy[p] - ux * uy;
        let num = (2.0 * ux * uy + c1) * (2.0 * cxy + c2);
        let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
        total += if den == 0.0 { 1.0 } else { num / den };
    }
    Ok(total / n as f64)
}

/// Dice overlap of class `class`; 1.0 when neither map contains it.
pub fn dice(pred: &LabelMap, reference: &LabelMap, class: u8) -> Result<f64> {
    if pred.height != reference.height || pred.width != reference.width {
        return Err(Error::Shape("label maps differ in shape".into()));
    }
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &r) in pred.labels.iter().zip(&reference.labels) {
        let (ip, ir) = (p == class, r == class);
        a += ip as usize;
        b += ir as usize;
        both += (ip && ir) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (a + b) as f64)
}

/// Dice for the tissue classes (every class except background).
pub fn tissue_dice(pred: &LabelMap, reference: &LabelMap) -> Result<[f64; NUM_CLASSES - 1]> {
    let mut out = [0.0; NUM_CLASSES - 1];
    for (k, d) in out.iter_mut().enumerate() {
        *d = dice(pred, reference, (k + 1) as u8)?;
    }
    Ok(out)
}

/// One evaluated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub dataset_id: String,
    pub method: String,
    pub snr_db: f64,
    pub ssim: f64,
    /// CSF, GM, WM; absent for methods without segmentation.
    pub dice: Option<[f64; NUM_CLASSES - 1]>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

pub const CSV_HEADER: &str = "dataset_id,method,snr_db,ssim,dice_csf,dice_gm,dice_wm";

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

impl EvalReport {
    pub fn push(&mut self, row: EvalRow) {
        self.rows.push(row);
    }

    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    /// Per-method means; Dice means cover only rows that carry Dice values.
    pub fn means(&self) -> Vec<EvalRow> {
        self.methods()
            .into_iter()
            .map(|m| {
                let rows: Vec<&EvalRow> = self.rows.iter().filter(|r| r.method == m).collect();
                let k = rows.len() as f64;
                let with_dice: Vec<&[f64; 3]> = rows.iter().filter_map(|r| r.dice.as_ref()).collect();
                let dice = (!with_dice.is_empty()).then(|| {
                    let mut d = [0.0; 3];
                    for v in &with_dice {
                        for c in 0..3 {
                            d[c] += v[c];
                        }
                    }
                    d.map(|x| x / with_dice.len() as f64)
                });
                EvalRow {
                    dataset_id: "mean".into(),
                    method: m,
                    snr_db: rows.iter().map(|r| r.snr_db).sum::<f64>() / k,
                    ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / k,
                    dice,
                }
            })
            .collect()
    }

    pub fn mean_of(&self, method: &str) -> Option<EvalRow> {
        self.means().into_iter().find(|r| r.method == method)
    }

    /// Per-dataset rows followed by one `mean` row per method.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in self.rows.iter().chain(self.means().iter()) {
            let dice = match &r.dice {
                Some(d) => d.map(fmt_num).join(","),
                None => ",,".into(),
            };
            let _ = writeln!(s, "{},{},{},{},{}", r.dataset_id, r.method, fmt_num(r.snr_db), fmt_num(r.ssim), dice);
        }
        s
    }
}
