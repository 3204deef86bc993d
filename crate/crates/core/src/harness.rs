//! Batch comparison of distance-map methods.
//!
//! Every image's ground truth is skeletonized into scribbles, each method turns
//! those scribbles into a normalized distance map, and a threshold sweep records
//! the best Dice the method can reach. Reports aggregate the per-image maxima.
//!
//! Datasets are flat directories: `<id>.cst` holds the cube, `<id>.gt.pgm` the
//! ground truth and an optional `<id>.features.cst` precomputed features.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::distance::{euclidean_edt, geodesic_exact, geodesic_raster, DistanceParams};
use crate::error::{Error, Result};
use crate::preprocess::{l1_normalize, pca_features, rgb_reconstruct, BandWeights};
use crate::segment::{dice_sweep, normalize_map, DiceCurve, DEFAULT_SWEEP_STEPS};
use crate::skeleton::{mask_to_scribbles, skeletonize};
use crate::tensor::{
    read_channel_stack, read_mask_pgm, write_channel_stack, write_mask_pgm, BinaryMask,
    ChannelStack, DistanceMap, ScribbleSet,
};

pub const STACK_SUFFIX: &str = ".cst";
pub const FEATURES_SUFFIX: &str = ".features.cst";
pub const GT_SUFFIX: &str = ".gt.pgm";

/// Channel count of the PCA stand-in used when no feature stack is supplied.
pub const STAND_IN_FEATURES: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodName {
    Features,
    Hyperspectral,
    Rgb,
    Euclidean,
}

impl MethodName {
    pub const ALL: [MethodName; 4] = [
        MethodName::Features,
        MethodName::Hyperspectral,
        MethodName::Rgb,
        MethodName::Euclidean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Features => "features",
            MethodName::Hyperspectral => "hyperspectral",
            MethodName::Rgb => "rgb",
            MethodName::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    GeodesicRaster,
    GeodesicExact,
    EuclideanEdt,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodSpec {
    pub name: MethodName,
    pub solver: Solver,
    pub params: DistanceParams,
}

impl MethodSpec {
    pub fn geodesic(name: MethodName, params: DistanceParams) -> Self {
        Self {
            name,
            solver: Solver::GeodesicRaster,
            params,
        }
    }

    pub fn euclidean() -> Self {
        Self {
            name: MethodName::Euclidean,
            solver: Solver::EuclideanEdt,
            params: DistanceParams::default(),
        }
    }

    /// The four compared methods: raster geodesic maps over features, the raw cube
    /// and its RGB reconstruction, plus the Euclidean baseline.
    pub fn standard(params: DistanceParams) -> Vec<MethodSpec> {
        vec![
            Self::geodesic(MethodName::Features, params),
            Self::geodesic(MethodName::Hyperspectral, params),
            Self::geodesic(MethodName::Rgb, params),
            Self::euclidean(),
        ]
    }

    fn validate(methods: &[MethodSpec]) -> Result<()> {
        for (i, m) in methods.iter().enumerate() {
            if methods[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::param(format!("method {} listed twice", m.name)));
            }
            if (m.name == MethodName::Euclidean) != (m.solver == Solver::EuclideanEdt) {
                return Err(Error::param(format!(
                    "method {} cannot use solver {:?}",
                    m.name, m.solver
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the batch path: raster sweeps run until they settle.
pub fn batch_params(lambda: f64) -> DistanceParams {
    DistanceParams {
        max_iterations: 1000,
        ..DistanceParams::converged(lambda)
    }
}

/// PCA over L1-normalized spectra, standing in for learned features.
pub fn feature_stand_in(stack: &ChannelStack) -> Result<ChannelStack> {
    pca_features(
        &l1_normalize(stack),
        stack.channels().min(STAND_IN_FEATURES),
    )
}

/// An image and the channel stacks derived from it, computed on demand.
pub struct MethodInputs<'a> {
    pub hyperspectral: &'a ChannelStack,
    features: Option<ChannelStack>,
    rgb: Option<ChannelStack>,
}

impl<'a> MethodInputs<'a> {
    pub fn new(hyperspectral: &'a ChannelStack, features: Option<ChannelStack>) -> Result<Self> {
        if let Some(f) = &features {
            if f.dims() != hyperspectral.dims() {
                return Err(Error::DimensionMismatch {
                    expected: hyperspectral.dims(),
                    actual: f.dims(),
                });
            }
        }
        Ok(Self {
            hyperspectral,
            features,
            rgb: None,
        })
    }

    pub fn source(&mut self, name: MethodName) -> Result<&ChannelStack> {
        Ok(match name {
            MethodName::Features => {
                if self.features.is_none() {
                    self.features = Some(feature_stand_in(self.hyperspectral)?);
                }
                self.features.as_ref().unwrap()
            }
            MethodName::Rgb => {
                if self.rgb.is_none() {
                    let weights = BandWeights::band_thirds(self.hyperspectral.channels());
                    self.rgb = Some(rgb_reconstruct(self.hyperspectral, &weights)?);
                }
                self.rgb.as_ref().unwrap()
            }
            MethodName::Hyperspectral | MethodName::Euclidean => self.hyperspectral,
        })
    }

    /// Raw (unnormalized) distance map of one method.
    pub fn distance_map(
        &mut self,
        method: &MethodSpec,
        seeds: &ScribbleSet,
    ) -> Result<DistanceMap> {
        match method.solver {
            Solver::EuclideanEdt => {
                let (h, w) = self.hyperspectral.dims();
                euclidean_edt(seeds, h, w)
            }
            Solver::GeodesicRaster => {
                geodesic_raster(self.source(method.name)?, seeds, &method.params)
            }
            Solver::GeodesicExact => {
                geodesic_exact(self.source(method.name)?, seeds, &method.params)
            }
        }
    }
}

/// How report rows record solver runtime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Timing {
    #[default]
    WallClock,
    /// Write 0 so reports are byte-reproducible.
    Disabled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub image: String,
    pub method: MethodName,
    pub best_dice: f64,
    pub best_threshold: f64,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug)]
pub struct ImageEvaluation {
    pub scribbles: ScribbleSet,
    pub curves: Vec<(MethodName, DiceCurve)>,
    pub rows: Vec<ReportRow>,
}

/// Runs every method on one image with scribbles taken from the ground-truth skeleton.
pub fn evaluate_image(
    id: &str,
    stack: &ChannelStack,
    features: Option<ChannelStack>,
    gt: &BinaryMask,
    methods: &[MethodSpec],
    n_steps: usize,
    timing: Timing,
) -> Result<ImageEvaluation> {
    let in_context = |source: Error| Error::Image {
        id: id.to_string(),
        source: Box::new(source),
    };
    MethodSpec::validate(methods).map_err(in_context)?;
    if gt.dims() != stack.dims() {
        return Err(in_context(Error::DimensionMismatch {
            expected: stack.dims(),
            actual: gt.dims(),
        }));
    }
    if gt.is_empty() {
        return Err(in_context(Error::param("ground truth mask is empty")));
    }
    let scribbles = mask_to_scribbles(&skeletonize(gt)).map_err(in_context)?;
    let mut inputs = MethodInputs::new(stack, features).map_err(in_context)?;

    let mut curves = Vec::with_capacity(methods.len());
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let started = Instant::now();
        let map = inputs
            .distance_map(method, &scribbles)
            .map_err(in_context)?;
        let curve = dice_sweep(&normalize_map(&map), gt, n_steps).map_err(in_context)?;
        let runtime_ms = match timing {
            Timing::WallClock => started.elapsed().as_secs_f64() * 1e3,
            Timing::Disabled => 0.0,
        };
        rows.push(ReportRow {
            image: id.to_string(),
            method: method.name,
            best_dice: curve.best_dice,
            best_threshold: curve.best_threshold,
            runtime_ms,
        });
        curves.push((method.name, curve));
    }
    Ok(ImageEvaluation {
        scribbles,
        curves,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub method: MethodName,
    pub images: usize,
    pub mean_best_dice: f64,
    pub median_best_dice: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    /// Images that could not be read or evaluated, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl EvalReport {
    /// Mean and median of per-image best Dice, methods in order of first appearance.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut methods: Vec<MethodName> = Vec::new();
        for row in &self.rows {
            if !methods.contains(&row.method) {
                methods.push(row.method);
            }
        }
        methods
            .into_iter()
            .map(|method| {
                let mut scores: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.method == method)
                    .map(|r| r.best_dice)
                    .collect();
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                scores.sort_by(f64::total_cmp);
                let mid = scores.len() / 2;
                let median = if scores.len() % 2 == 1 {
                    scores[mid]
                } else {
                    (scores[mid - 1] + scores[mid]) / 2.0
                };
                AggregateRow {
                    method,
                    images: scores.len(),
                    mean_best_dice: mean,
                    median_best_dice: median,
                }
            })
            .collect()
    }

    pub fn mean_best_dice(&self, method: MethodName) -> Option<f64> {
        self.aggregate()
            .into_iter()
            .find(|a| a.method == method)
            .map(|a| a.mean_best_dice)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,method,best_dice,best_threshold,runtime_ms\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.3}",
                r.image, r.method, r.best_dice, r.best_threshold, r.runtime_ms
            )
            .unwrap();
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("method,images,mean_best_dice,median_best_dice\n");
        for a in self.aggregate() {
            writeln!(
                out,
                "{},{},{},{}",
                a.method, a.images, a.mean_best_dice, a.median_best_dice
            )
            .unwrap();
        }
        out
    }

    pub fn skipped_csv(&self) -> String {
        let mut out = String::from("image,error\n");
        for (id, reason) in &self.skipped {
            writeln!(out, "{id},\"{}\"", reason.replace('"', "\"\"")).unwrap();
        }
        out
    }

    /// Parses the rows of a `report.csv`.
    pub fn rows_from_csv(text: &str) -> Result<Vec<ReportRow>> {
        let mut lines = text.lines();
        if lines.next() != Some("image,method,best_dice,best_threshold,runtime_ms") {
            return Err(Error::Csv("unexpected report header".into()));
        }
        lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let bad = || Error::Csv(format!("bad report row {line:?}"));
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 5 {
                    return Err(bad());
                }
                Ok(ReportRow {
                    image: cols[0].to_string(),
                    method: cols[1].parse()?,
                    best_dice: cols[2].parse().map_err(|_| bad())?,
                    best_threshold: cols[3].parse().map_err(|_| bad())?,
                    runtime_ms: cols[4].parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }
}

/// Image ids of a dataset directory, sorted.
pub fn dataset_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        if name.ends_with(FEATURES_SUFFIX) {
            continue;
        }
        if let Some(id) = name.strip_suffix(STACK_SUFFIX) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

#[derive(Clone, Copy, Debug)]
pub struct BatchOptions {
    pub n_steps: usize,
    pub timing: Timing,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            n_steps: DEFAULT_SWEEP_STEPS,
            timing: Timing::WallClock,
        }
    }
}

fn load_and_evaluate(
    dir: &Path,
    id: &str,
    methods: &[MethodSpec],
    options: &BatchOptions,
) -> Result<ImageEvaluation> {
    let in_context = |source: Error| Error::Image {
        id: id.to_string(),
        source: Box::new(source),
    };
    let stack = read_channel_stack(dir.join(format!("{id}{STACK_SUFFIX}"))).map_err(in_context)?;
    let gt = read_mask_pgm(dir.join(format!("{id}{GT_SUFFIX}"))).map_err(in_context)?;
    let features_path = dir.join(format!("{id}{FEATURES_SUFFIX}"));
    let features = if features_path.exists() {
        Some(read_channel_stack(features_path).map_err(in_context)?)
    } else {
        None
    };
    evaluate_image(
        id,
        &stack,
        features,
        &gt,
        methods,
        options.n_steps,
        options.timing,
    )
}

/// Evaluates every image in `dataset` and writes `report.csv`, `aggregate.csv`,
/// `skipped.csv` and per-image curves under `out_dir/curves`.
pub fn run_batch(
    dataset: &Path,
    methods: &[MethodSpec],
    out_dir: &Path,
    options: &BatchOptions,
) -> Result<EvalReport> {
    MethodSpec::validate(methods)?;
    let ids = dataset_ids(dataset)?;
    let curves_dir = out_dir.join("curves");
    fs::create_dir_all(&curves_dir)?;

    // images finish in any order; results are collected in id order
    let results: Vec<Result<ImageEvaluation>> = ids
        .par_iter()
        .map(|id| load_and_evaluate(dataset, id, methods, options))
        .collect();

    let mut report = EvalReport::default();
    for (id, result) in ids.iter().zip(results) {
        match result {
            Ok(eval) => {
                for (method, curve) in &eval.curves {
                    curve.write(curves_dir.join(format!("{id}.{method}.csv")))?;
                }
                report.rows.extend(eval.rows);
            }
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                report.skipped.push((id.clone(), e.to_string()));
            }
        }
    }
    fs::write(out_dir.join("report.csv"), report.to_csv())?;
    fs::write(out_dir.join("aggregate.csv"), report.aggregate_csv())?;
    fs::write(out_dir.join("skipped.csv"), report.skipped_csv())?;
    Ok(report)
}

/// A synthetic image: an axis-aligned elliptical blob with its own spectral signature.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub hyperspectral: ChannelStack,
    pub features: ChannelStack,
    pub gt: BinaryMask,
}

/// Spectra inside and outside the blob. The inside spectrum rises with band index
/// and the outside one falls, so they differ by 0.9 to 1.3 in every band.
pub fn phantom_signatures(channels: u32) -> (Vec<f32>, Vec<f32>) {
    let span = (channels.max(2) - 1) as f32;
    let inside = (0..channels).map(|c| 1.2 + 0.2 * c as f32 / span).collect();
    let outside = (0..channels).map(|c| 0.3 - 0.2 * c as f32 / span).collect();
    (inside, outside)
}

/// Deterministic phantom; the features stack carries a quarter of the cube's noise.
pub fn make_phantom(
    height: u32,
    width: u32,
    channels: u32,
    noise_sigma: f64,
    seed: u64,
) -> Result<Phantom> {
    if height < 16 || width < 16 || channels == 0 {
        return Err(Error::param(format!(
            "phantom needs at least 16x16x1, got {height}x{width}x{channels}"
        )));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::param(format!(
            "noise sigma {noise_sigma} must be >= 0"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (height as f64, width as f64);
    let cx = w * rng.gen_range(0.4..0.6);
    let cy = h * rng.gen_range(0.4..0.6);
    let (long, short) = (rng.gen_range(0.3..0.4), rng.gen_range(0.12..0.2));
    let (ax, ay) = if rng.gen_bool(0.5) {
        (w * long, h * short)
    } else {
        (w * short, h * long)
    };
    let gt = BinaryMask::from_fn(height, width, |x, y| {
        let dx = (x as f64 - cx) / ax;
        let dy = (y as f64 - cy) / ay;
        dx * dx + dy * dy <= 1.0
    })?;

    let (inside, outside) = phantom_signatures(channels);
    let noisy = |sigma: f64, rng: &mut ChaCha8Rng| -> Result<ChannelStack> {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
        ChannelStack::from_fn(height, width, channels, |x, y, c| {
            let base = if gt.get(x, y) {
                inside[c as usize]
            } else {
                outside[c as usize]
            };
            if sigma > 0.0 {
                base + normal.sample(rng) as f32
            } else {
                base
            }
        })
    };
    let hyperspectral = noisy(noise_sigma, &mut rng)?;
    let features = noisy(noise_sigma / 4.0, &mut rng)?;
    Ok(Phantom {
        hyperspectral,
        features,
        gt,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct PhantomSpec {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub noise_sigma: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            height: 128,
            width: 128,
            channels: 8,
            noise_sigma: 0.3,
        }
    }
}

/// Writes `count` phantoms named `phantom_000`, … with seeds `seed`, `seed + 1`, ….
pub fn write_phantom_dataset(
    dir: &Path,
    count: usize,
    spec: &PhantomSpec,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(count);
    for i in 0..count {
        let id = format!("phantom_{i:03}");
        let p = make_phantom(
            spec.height,
            spec.width,
            spec.channels,
            spec.noise_sigma,
            seed.wrapping_add(i as u64),
        )?;
        let stack_path = dir.join(format!("{id}{STACK_SUFFIX}"));
        write_channel_stack(&p.hyperspectral, &stack_path)?;
        write_channel_stack(&p.features, dir.join(format!("{id}{FEATURES_SUFFIX}")))?;
        write_mask_pgm(&p.gt, dir.join(format!("{id}{GT_SUFFIX}")))?;
        written.push(stack_path);
    }
    Ok(written)
}
