//! From distance map to segmentation: normalization, thresholding, Dice and
//! Dice-versus-threshold curves.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, DistanceMap};

pub const DEFAULT_SWEEP_STEPS: usize = 256;

/// Min-max rescales a map to `[0, 1]`. Constant maps become all zeros.
pub fn normalize_map(map: &DistanceMap) -> DistanceMap {
    let (lo, hi) = map.min_max();
    let (lo, hi) = (lo as f64, hi as f64);
    let range = hi - lo;
    let data = map
        .data()
        .iter()
        .map(|&v| {
            if range > 0.0 {
                // clamp guards the last ulp of the f64 -> f32 cast
                (((v as f64 - lo) / range) as f32).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    DistanceMap::new(map.height(), map.width(), data, true).expect("values lie in [0, 1]")
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(format!("threshold {t} outside [0, 1]")));
    }
    Ok(())
}

/// Selects every pixel whose normalized distance is at most `t`.
pub fn threshold_segment(map: &DistanceMap, t: f64) -> Result<BinaryMask> {
    if !map.is_normalized() {
        return Err(Error::NotNormalized);
    }
    check_threshold(t)?;
    BinaryMask::new(
        map.height(),
        map.width(),
        map.data().iter().map(|&v| v as f64 <= t).collect(),
    )
}

fn check_dims(a: (u32, u32), b: (u32, u32)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

fn dice_from_counts(intersection: usize, a: usize, b: usize) -> f64 {
    if a + b == 0 {
        1.0
    } else {
        2.0 * intersection as f64 / (a + b) as f64
    }
}

/// `2|A∩B| / (|A| + |B|)`, with two empty masks scoring 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let (mut inter, mut na, mut nb) = (0, 0, 0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    Ok(dice_from_counts(inter, na, nb))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiceCurve {
    pub thresholds: Vec<f64>,
    pub dice: Vec<f64>,
    pub best_threshold: f64,
    pub best_dice: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub best_threshold: f64,
    pub best_dice: f64,
}

impl DiceCurve {
    /// Builds a curve from samples sorted by threshold, picking the first maximum.
    pub fn from_samples(thresholds: Vec<f64>, dice: Vec<f64>) -> Result<Self> {
        if thresholds.len() != dice.len() || thresholds.is_empty() {
            return Err(Error::param(
                "curve needs equally many thresholds and scores",
            ));
        }
        if thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::param("curve thresholds must be sorted"));
        }
        let mut best = 0;
        for (i, &d) in dice.iter().enumerate() {
            if d > dice[best] {
                best = i;
            }
        }
        Ok(Self {
            best_threshold: thresholds[best],
            best_dice: dice[best],
            thresholds,
            dice,
        })
    }

    pub fn summary(&self) -> CurveSummary {
        CurveSummary {
            best_threshold: self.best_threshold,
            best_dice: self.best_dice,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,dice\n");
        for (t, d) in self.thresholds.iter().zip(&self.dice) {
            writeln!(out, "{t},{d}").unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("threshold,dice") {
            return Err(Error::Csv("expected header \"threshold,dice\"".into()));
        }
        let (mut thresholds, mut dice) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let parsed = line
                .split_once(',')
                .and_then(|(t, d)| Some((t.parse::<f64>().ok()?, d.parse::<f64>().ok()?)));
            let (t, d) =
                parsed.ok_or_else(|| Error::Csv(format!("bad row {}: {line:?}", i + 2)))?;
            thresholds.push(t);
            dice.push(d);
        }
        Self::from_samples(thresholds, dice)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string(&self.summary()).expect("summary serializes")
    }

    /// Writes `path` as CSV and the best point next to it as `<stem>.json`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv())?;
        std::fs::write(path.with_extension("json"), self.summary_json())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Map values paired with ground-truth membership, sorted by value.
fn ranked(map: &DistanceMap, gt: &BinaryMask) -> Result<(Vec<(f32, bool)>, usize)> {
    if !map.is_normalized() {
        return Err(Error::NotNormalized);
    }
    check_dims(map.dims(), gt.dims())?;
    let mut pairs: Vec<(f32, bool)> = map
        .data()
        .iter()
        .copied()
        .zip(gt.data().iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((pairs, gt.count()))
}

/// Dice of the threshold segmentation at each `t` in ascending `thresholds`.
fn sweep_sorted(pairs: &[(f32, bool)], gt_count: usize, thresholds: &[f64]) -> Vec<f64> {
    let (mut taken, mut hits) = (0usize, 0usize);
    thresholds
        .iter()
        .map(|&t| {
            while taken < pairs.len() && pairs[taken].0 as f64 <= t {
                hits += pairs[taken].1 as usize;
                taken += 1;
            }
            dice_from_counts(hits, taken, gt_count)
        })
        .collect()
}

/// Dice at `n_steps` evenly spaced thresholds `k / (n_steps - 1)`.
pub fn dice_sweep(map: &DistanceMap, gt: &BinaryMask, n_steps: usize) -> Result<DiceCurve> {
    if n_steps < 2 {
        return Err(Error::param(format!(
            "sweep needs at least 2 steps, got {n_steps}"
        )));
    }
    let (pairs, gt_count) = ranked(map, gt)?;
    let last = (n_steps - 1) as f64;
    let thresholds: Vec<f64> = (0..n_steps).map(|k| k as f64 / last).collect();
    let dice = sweep_sorted(&pairs, gt_count, &thresholds);
    DiceCurve::from_samples(thresholds, dice)
}

/// Dice at every distinct map value: the exact optimum over all thresholds.
pub fn dice_sweep_exhaustive(map: &DistanceMap, gt: &BinaryMask) -> Result<DiceCurve> {
    let (pairs, gt_count) = ranked(map, gt)?;
    let mut thresholds: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
    thresholds.dedup();
    let dice = sweep_sorted(&pairs, gt_count, &thresholds);
    DiceCurve::from_samples(thresholds, dice)
}
