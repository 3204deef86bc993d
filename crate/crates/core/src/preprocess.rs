//! Front-ends that turn a raw cube into the channel stacks the solvers consume:
//! per-pixel L1 spectral normalization, a PCA feature stand-in and RGB
//! reconstruction from band averages.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ChannelStack;

/// Divides every pixel spectrum by its L1 norm. All-zero spectra are left as-is.
pub fn l1_normalize(stack: &ChannelStack) -> ChannelStack {
    let mut data = Vec::with_capacity(stack.data().len());
    for spectrum in stack.spectra() {
        let norm: f64 = spectrum.iter().map(|&v| (v as f64).abs()).sum();
        if norm > 0.0 {
            data.extend(spectrum.iter().map(|&v| (v as f64 / norm) as f32));
        } else {
            data.extend_from_slice(spectrum);
        }
    }
    ChannelStack::new(stack.height(), stack.width(), stack.channels(), data)
        .expect("normalized spectra are finite")
}

/// Principal axes of the channel covariance, strongest first.
#[derive(Clone, Debug)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Unit eigenvectors, one per retained component.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the population covariance, non-increasing.
    pub variances: Vec<f64>,
}

impl PcaBasis {
    pub fn fit(stack: &ChannelStack, k: u32) -> Result<Self> {
        let c = stack.channels() as usize;
        if k == 0 || k as usize > c {
            return Err(Error::param(format!("component count {k} outside 1..={c}")));
        }
        let n = stack.pixel_count() as f64;

        let mut mean = vec![0.0f64; c];
        for spectrum in stack.spectra() {
            for (m, &v) in mean.iter_mut().zip(spectrum) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);

        let mut cov = DMatrix::<f64>::zeros(c, c);
        let mut centered = vec![0.0f64; c];
        for spectrum in stack.spectra() {
            for ((d, &v), m) in centered.iter_mut().zip(spectrum).zip(&mean) {
                *d = v as f64 - m;
            }
            for i in 0..c {
                for j in i..c {
                    cov[(i, j)] += centered[i] * centered[j];
                }
            }
        }
        for i in 0..c {
            for j in i..c {
                let v = cov[(i, j)] / n;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }

        let eigen = SymmetricEigen::try_new(cov, 1e-14, 10_000)
            .ok_or_else(|| Error::Eigen(format!("no convergence on {c}x{c} covariance")))?;

        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

        let mut components = Vec::with_capacity(k as usize);
        let mut variances = Vec::with_capacity(k as usize);
        for &idx in order.iter().take(k as usize) {
            let mut v: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
            let pivot =
                v.iter().enumerate().fold(
                    0,
                    |best, (i, x)| if x.abs() > v[best].abs() { i } else { best },
                );
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(v);
            variances.push(eigen.eigenvalues[idx].max(0.0));
        }

        Ok(Self {
            mean,
            components,
            variances,
        })
    }

    pub fn project(&self, stack: &ChannelStack) -> Result<ChannelStack> {
        if stack.channels() as usize != self.mean.len() {
            return Err(Error::param(format!(
                "basis fitted on {} channels, stack has {}",
                self.mean.len(),
                stack.channels()
            )));
        }
        let k = self.components.len();
        let mut data = Vec::with_capacity(stack.pixel_count() * k);
        for spectrum in stack.spectra() {
            for axis in &self.components {
                let dot: f64 = spectrum
                    .iter()
                    .zip(&self.mean)
                    .zip(axis)
                    .map(|((&v, m), a)| (v as f64 - m) * a)
                    .sum();
                data.push(dot as f32);
            }
        }
        ChannelStack::new(stack.height(), stack.width(), k as u32, data)
    }
}

/// Projects mean-centered spectra onto the top `k` principal axes.
pub fn pca_features(stack: &ChannelStack, k: u32) -> Result<ChannelStack> {
    PcaBasis::fit(stack, k)?.project(stack)
}

/// Per-output-channel band weights for RGB reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandWeights {
    pub r: Vec<f32>,
    pub g: Vec<f32>,
    pub b: Vec<f32>,
}

impl BandWeights {
    /// Equal-weight averages over three contiguous band thirds. Bands are assumed
    /// to be ordered by increasing wavelength, so the last third feeds red.
    pub fn band_thirds(channels: u32) -> Self {
        let c = channels as usize;
        let third = |g: usize| {
            let start = g * c / 3;
            let end = (g + 1) * c / 3;
            // fewer than three bands: reuse the nearest band
            let range = if end > start {
                start..end
            } else {
                start.min(c - 1)..start.min(c - 1) + 1
            };
            let share = 1.0 / range.len() as f32;
            (0..c)
                .map(|i| if range.contains(&i) { share } else { 0.0 })
                .collect::<Vec<f32>>()
        };
        Self {
            b: third(0),
            g: third(1),
            r: third(2),
        }
    }

    pub fn identity3() -> Self {
        Self {
            r: vec![1.0, 0.0, 0.0],
            g: vec![0.0, 1.0, 0.0],
            b: vec![0.0, 0.0, 1.0],
        }
    }

    pub fn validate(&self, channels: u32) -> Result<()> {
        for (name, w) in [("r", &self.r), ("g", &self.g), ("b", &self.b)] {
            if w.len() != channels as usize {
                return Err(Error::param(format!(
                    "{name} weights have {} entries, stack has {channels} channels",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::param(format!("{name} weights must be non-negative")));
            }
            let sum: f64 = w.iter().map(|&v| v as f64).sum();
            if (sum - 1.0).abs() > 1e-5 {
                return Err(Error::param(format!("{name} weights sum to {sum}, not 1")));
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read(path)?)
    }
}

/// Collapses a cube to three channels (R, G, B order) by weighted band averages.
pub fn rgb_reconstruct(stack: &ChannelStack, weights: &BandWeights) -> Result<ChannelStack> {
    weights.validate(stack.channels())?;
    let mut data = Vec::with_capacity(stack.pixel_count() * 3);
    for spectrum in stack.spectra() {
        for w in [&weights.r, &weights.g, &weights.b] {
            let v: f64 = spectrum
                .iter()
                .zip(w)
                .map(|(&s, &w)| s as f64 * w as f64)
                .sum();
            data.push(v as f32);
        }
    }
    ChannelStack::new(stack.height(), stack.width(), 3, data)
}
