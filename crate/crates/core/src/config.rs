//! Run configuration.
//!
//! The config file is a UTF-8 JSON object. Every key is optional; missing
//! keys take the defaults listed on [`RunConfig`]. An empty (or
//! whitespace-only) file yields the defaults. Unknown keys are rejected so
//! that typos surface as errors.
//!
//! | key                 | type      | default        |
//! |---------------------|-----------|----------------|
//! | `patch_size`        | integer   | 8              |
//! | `patch_stride`      | integer   | 4              |
//! | `lambda`            | number    | 100            |
//! | `clear_lambda`      | number    | 1e-3           |
//! | `rank_threshold`    | number    | 1e-3           |
//! | `unroll`            | integer   | 3              |
//! | `alpha`             | number    | 1e-4           |
//! | `eps_scale`         | number    | 0.01           |
//! | `eps_min_ratio`     | number    | 1e-8           |
//! | `cg_tol`            | number    | 1e-8           |
//! | `cg_max_iter`       | integer   | 200            |
//! | `irls_iters`        | integer   | 15             |
//! | `learning_rate`     | number    | 1e-4           |
//! | `adam_beta1`        | number    | 0.9            |
//! | `adam_beta2`        | number    | 0.999          |
//! | `adam_eps`          | number    | 1e-8           |
//! | `epochs`            | integer   | 300            |
//! | `labelled_fraction` | number    | 1.0            |
//! | `widths`            | [int; 3]  | [16, 32, 64]   |
//! | `seed`              | integer   | 0              |

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    /// Patch side length M.
    pub patch_size: usize,
    pub patch_stride: usize,
    /// Data-consistency weight of the unrolled network.
    pub lambda: f64,
    /// Nuclear-norm weight of the locally low-rank solver.
    pub clear_lambda: f64,
    pub rank_threshold: f64,
    /// Number of unrolled iterations K.
    pub unroll: usize,
    /// Segmentation loss weight.
    pub alpha: f64,
    /// Initial IRLS smoothing as a fraction of the largest squared patch singular value.
    pub eps_scale: f64,
    /// Floor of the IRLS smoothing relative to its initial value.
    pub eps_min_ratio: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub irls_iters: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub labelled_fraction: f64,
    /// Encoder channel widths per resolution level.
    pub widths: [usize; 3],
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            patch_stride: 4,
            lambda: 100.0,
            clear_lambda: 1e-3,
            rank_threshold: 1e-3,
            unroll: 3,
            alpha: 1e-4,
            eps_scale: 0.01,
            eps_min_ratio: 1e-8,
            cg_tol: 1e-8,
            cg_max_iter: 200,
            irls_iters: 15,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 300,
            labelled_fraction: 1.0,
            widths: [16, 32, 64],
            seed: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "patch_size",
    "patch_stride",
    "lambda",
    "clear_lambda",
    "rank_threshold",
    "unroll",
    "alpha",
    "eps_scale",
    "eps_min_ratio",
    "cg_tol",
    "cg_max_iter",
    "irls_iters",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "epochs",
    "labelled_fraction",
    "widths",
    "seed",
];

fn number(map: &Map<String, Value>, key: &str, default: f64) -> Result<f64> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::config(key, format!("expected a finite number, got {v}"))),
    }
}

fn integer(map: &Map<String, Value>, key: &str, default: u64) -> Result<u64> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Error::config(key, format!("expected a non-negative integer, got {v}"))),
    }
}

fn count(map: &Map<String, Value>, key: &str, default: usize) -> Result<usize> {
    let v = integer(map, key, default as u64)?;
    usize::try_from(v).map_err(|_| Error::config(key, "value too large"))
}

impl RunConfig {
    /// Parses a config document; see the module docs for the schema.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::config("<document>", format!("invalid JSON: {e}")))?;
        let map = value
            .as_object()
            .ok_or_else(|| Error::config("<document>", "top level must be an object"))?;
        if let Some(unknown) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::config(unknown, "unknown key"));
        }

        let d = Self::default();
        let widths = match map.get("widths") {
            None => d.widths,
            Some(v) => {
                let arr = v
                    .as_array()
                    .filter(|a| a.len() == 3)
                    .ok_or_else(|| Error::config("widths", "expected an array of 3 integers"))?;
                let mut w = [0usize; 3];
                for (slot, item) in w.iter_mut().zip(arr) {
                    *slot = item
                        .as_u64()
                        .filter(|&x| (1..=4096).contains(&x))
                        .ok_or_else(|| Error::config("widths", format!("bad width {item}")))?
                        as usize;
                }
                w
            }
        };
        let cfg = Self {
            patch_size: count(map, "patch_size", d.patch_size)?,
            patch_stride: count(map, "patch_stride", d.patch_stride)?,
            lambda: number(map, "lambda", d.lambda)?,
            clear_lambda: number(map, "clear_lambda", d.clear_lambda)?,
            rank_threshold: number(map, "rank_threshold", d.rank_threshold)?,
            unroll: count(map, "unroll", d.unroll)?,
            alpha: number(map, "alpha", d.alpha)?,
            eps_scale: number(map, "eps_scale", d.eps_scale)?,
            eps_min_ratio: number(map, "eps_min_ratio", d.eps_min_ratio)?,
            cg_tol: number(map, "cg_tol", d.cg_tol)?,
            cg_max_iter: count(map, "cg_max_iter", d.cg_max_iter)?,
            irls_iters: count(map, "irls_iters", d.irls_iters)?,
            learning_rate: number(map, "learning_rate", d.learning_rate)?,
            adam_beta1: number(map, "adam_beta1", d.adam_beta1)?,
            adam_beta2: number(map, "adam_beta2", d.adam_beta2)?,
            adam_eps: number(map, "adam_eps", d.adam_eps)?,
            epochs: count(map, "epochs", d.epochs)?,
            labelled_fraction: number(map, "labelled_fraction", d.labelled_fraction)?,
            widths,
            seed: integer(map, "seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 1 {
            return Err(Error::config("patch_size", "must be at least 1"));
        }
        if self.patch_stride < 1 || self.patch_stride > self.patch_size {
            return Err(Error::config("patch_stride", "must lie in [1, patch_size]"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::config("lambda", "must be positive"));
        }
        if !(self.clear_lambda >= 0.0) {
            return Err(Error::config("clear_lambda", "must be non-negative"));
        }
        if !(self.rank_threshold > 0.0 && self.rank_threshold < 1.0) {
            return Err(Error::config("rank_threshold", "must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", "alpha out of range [0, 1)"));
        }
        if !(self.eps_scale > 0.0) {
            return Err(Error::config("eps_scale", "must be positive"));
        }
        if !(self.eps_min_ratio > 0.0 && self.eps_min_ratio <= 1.0) {
            return Err(Error::config("eps_min_ratio", "must lie in (0, 1]"));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::config("cg_tol", "must be positive"));
        }
        if self.cg_max_iter < 1 {
            return Err(Error::config("cg_max_iter", "must be at least 1"));
        }
        if self.irls_iters < 1 {
            return Err(Error::config("irls_iters", "must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(Error::config("adam_beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("adam_beta2", "must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps", "must be positive"));
        }
        if !(self.labelled_fraction > 0.0 && self.labelled_fraction <= 1.0) {
            return Err(Error::config("labelled_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::parse(&text)
}
