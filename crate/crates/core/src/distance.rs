//! Distance map solvers.
//!
//! Adjacent pixels `i`, `j` are joined by an edge of cost
//!
//! ```text
//! cost(i, j) = sqrt((1 - λ) · d_spatial(i, j)² + λ · ‖I(i) − I(j)‖²)
//! ```
//!
//! with `d_spatial` equal to 1 for axial and √2 for diagonal steps. The geodesic
//! distance of a pixel is the cheapest path cost to any foreground seed.
//! [`geodesic_exact`] computes it with a label-setting shortest-path search and
//! serves as the reference for the iterated raster-scan solver
//! [`geodesic_raster`]. [`euclidean_edt`] ignores image content altogether.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{ChannelStack, DistanceMap, ScribbleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::param(format!(
                "connectivity must be 4 or 8, got {n}"
            ))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceParams {
    /// Weight of the image term against the spatial step length; 1 is purely geodesic.
    pub lambda: f64,
    pub connectivity: Connectivity,
    /// Upper bound on forward/backward sweep pairs for the raster solver.
    pub max_iterations: u32,
    /// The raster solver stops once a sweep pair moves no pixel by more than this.
    pub convergence_epsilon: f64,
}

impl Default for DistanceParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            connectivity: Connectivity::Eight,
            max_iterations: 4,
            convergence_epsilon: 1e-6,
        }
    }
}

impl DistanceParams {
    /// Parameters for running the raster solver until it settles.
    pub fn converged(lambda: f64) -> Self {
        Self {
            lambda,
            max_iterations: 10_000,
            ..Self::default()
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_connectivity(mut self, connectivity: Connectivity) -> Self {
        self.connectivity = connectivity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::param(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        if self.convergence_epsilon.is_nan() || self.convergence_epsilon <= 0.0 {
            return Err(Error::param("convergence_epsilon must be positive"));
        }
        Ok(())
    }
}

/// Cost of the edge between two spectra that are `spatial_sq` squared pixels apart.
#[inline]
pub fn edge_cost(a: &[f32], b: &[f32], spatial_sq: f64, lambda: f64) -> f64 {
    let image_sq: f64 = a
        .iter()
        .zip(b)
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum();
    ((1.0 - lambda) * spatial_sq + lambda * image_sq).sqrt()
}

fn check_inputs(
    stack: &ChannelStack,
    seeds: &ScribbleSet,
    params: &DistanceParams,
) -> Result<Vec<usize>> {
    params.validate()?;
    if stack.dims() != seeds.dims() {
        return Err(Error::DimensionMismatch {
            expected: stack.dims(),
            actual: seeds.dims(),
        });
    }
    seeds.seed_indices()
}

fn into_map(height: u32, width: u32, dist: &[f64], normalized: bool) -> DistanceMap {
    DistanceMap::new(
        height,
        width,
        dist.iter().map(|&d| d as f32).collect(),
        normalized,
    )
    .expect("solver distances are finite and non-negative")
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    pixel: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties on pixel index for a fixed pop order
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.pixel.cmp(&self.pixel))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const AXIAL: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const DIAGONAL: [(i32, i32); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Exact geodesic distances by Dijkstra's algorithm on the pixel graph.
pub fn geodesic_exact(
    stack: &ChannelStack,
    seeds: &ScribbleSet,
    params: &DistanceParams,
) -> Result<DistanceMap> {
    let seed_pixels = check_inputs(stack, seeds, params)?;
    let (h, w) = (stack.height() as i32, stack.width() as i32);
    let mut dist = vec![f64::INFINITY; stack.pixel_count()];
    let mut done = vec![false; stack.pixel_count()];
    let mut heap = BinaryHeap::new();
    for &p in &seed_pixels {
        dist[p] = 0.0;
        heap.push(Frontier {
            dist: 0.0,
            pixel: p,
        });
    }

    let mut steps: Vec<((i32, i32), f64)> = AXIAL.iter().map(|&o| (o, 1.0)).collect();
    if params.connectivity == Connectivity::Eight {
        steps.extend(DIAGONAL.iter().map(|&o| (o, 2.0)));
    }

    while let Some(Frontier { dist: d, pixel }) = heap.pop() {
        if done[pixel] {
            continue;
        }
        done[pixel] = true;
        let (x, y) = ((pixel as i32) % w, (pixel as i32) / w);
        for &((dx, dy), spatial_sq) in &steps {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let next = (ny * w + nx) as usize;
            if done[next] {
                continue;
            }
            let candidate = d + edge_cost(
                stack.spectrum(pixel),
                stack.spectrum(next),
                spatial_sq,
                params.lambda,
            );
            if candidate < dist[next] {
                dist[next] = candidate;
                heap.push(Frontier {
                    dist: candidate,
                    pixel: next,
                });
            }
        }
    }
    Ok(into_map(stack.height(), stack.width(), &dist, false))
}

/// How the raster solver orders pixel updates within a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SweepSchedule {
    /// Plain row-major order.
    #[default]
    Sequential,
    /// Pixels on the same `x + 2y` front have no mutual dependencies and are
    /// relaxed in parallel, fronts in order. Bitwise identical to `Sequential`.
    Wavefront,
}

// Slots in the per-pixel table of edges leading to later (anti-causal) neighbours.
const EAST: usize = 0;
const SOUTH_WEST: usize = 1;
const SOUTH: usize = 2;
const SOUTH_EAST: usize = 3;

/// Iterated forward/backward raster-scan relaxation of the geodesic distance.
pub struct RasterSolver {
    height: usize,
    width: usize,
    eight: bool,
    /// Costs of edges to the E, SW, S and SE neighbours; infinite off the grid.
    edges: Vec<[f64; 4]>,
    dist: Vec<f64>,
    sweep_pairs: u32,
}

impl RasterSolver {
    pub fn new(stack: &ChannelStack, seeds: &ScribbleSet, params: &DistanceParams) -> Result<Self> {
        let seed_pixels = check_inputs(stack, seeds, params)?;
        let (h, w) = (stack.height() as usize, stack.width() as usize);
        let eight = params.connectivity == Connectivity::Eight;
        let lambda = params.lambda;

        let edges = (0..h * w)
            .into_par_iter()
            .with_min_len(1024)
            .map(|p| {
                let (x, y) = (p % w, p / w);
                let here = stack.spectrum(p);
                let cost = |q: usize, spatial_sq: f64| {
                    edge_cost(here, stack.spectrum(q), spatial_sq, lambda)
                };
                let mut e = [f64::INFINITY; 4];
                if x + 1 < w {
                    e[EAST] = cost(p + 1, 1.0);
                }
                if y + 1 < h {
                    e[SOUTH] = cost(p + w, 1.0);
                    if eight && x > 0 {
                        e[SOUTH_WEST] = cost(p + w - 1, 2.0);
                    }
                    if eight && x + 1 < w {
                        e[SOUTH_EAST] = cost(p + w + 1, 2.0);
                    }
                }
                e
            })
            .collect();

        let mut dist = vec![f64::INFINITY; h * w];
        for p in seed_pixels {
            dist[p] = 0.0;
        }
        Ok(Self {
            height: h,
            width: w,
            eight,
            edges,
            dist,
            sweep_pairs: 0,
        })
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn sweep_pairs(&self) -> u32 {
        self.sweep_pairs
    }

    /// Relaxed value of pixel `p` from its causal (up/left) neighbours.
    #[inline]
    fn forward_value(&self, p: usize) -> f64 {
        let (x, y, w) = (p % self.width, p / self.width, self.width);
        let d = &self.dist;
        let mut best = d[p];
        if x > 0 {
            best = best.min(d[p - 1] + self.edges[p - 1][EAST]);
        }
        if y > 0 {
            let up = p - w;
            if self.eight && x > 0 {
                best = best.min(d[up - 1] + self.edges[up - 1][SOUTH_EAST]);
            }
            best = best.min(d[up] + self.edges[up][SOUTH]);
            if self.eight && x + 1 < w {
                best = best.min(d[up + 1] + self.edges[up + 1][SOUTH_WEST]);
            }
        }
        best
    }

    /// Relaxed value of pixel `p` from its anti-causal (down/right) neighbours.
    #[inline]
    fn backward_value(&self, p: usize) -> f64 {
        let (x, y, w) = (p % self.width, p / self.width, self.width);
        let d = &self.dist;
        let e = &self.edges[p];
        let mut best = d[p];
        if x + 1 < w {
            best = best.min(d[p + 1] + e[EAST]);
        }
        if y + 1 < self.height {
            let down = p + w;
            if self.eight && x + 1 < w {
                best = best.min(d[down + 1] + e[SOUTH_EAST]);
            }
            best = best.min(d[down] + e[SOUTH]);
            if self.eight && x > 0 {
                best = best.min(d[down - 1] + e[SOUTH_WEST]);
            }
        }
        best
    }

    fn change(old: f64, new: f64) -> f64 {
        if old == new {
            0.0
        } else {
            // covers the first assignment from infinity
            old - new
        }
    }

    fn sweep_sequential(&mut self, forward: bool) -> f64 {
        let n = self.dist.len();
        let mut max_change = 0.0f64;
        for i in 0..n {
            let p = if forward { i } else { n - 1 - i };
            let new = if forward {
                self.forward_value(p)
            } else {
                self.backward_value(p)
            };
            max_change = max_change.max(Self::change(self.dist[p], new));
            self.dist[p] = new;
        }
        max_change
    }

    fn sweep_wavefront(&mut self, forward: bool) -> f64 {
        let (h, w) = (self.height, self.width);
        let last_front = (w - 1) + 2 * (h - 1);
        let mut max_change = 0.0f64;
        let mut updates: Vec<(usize, f64)> = Vec::with_capacity(h);
        for step in 0..=last_front {
            let front = if forward { step } else { last_front - step };
            let y_lo = front.saturating_sub(w - 1).div_ceil(2);
            let y_hi = (front / 2).min(h - 1);
            if y_lo > y_hi {
                continue;
            }
            let this = &*self;
            (y_lo..y_hi + 1)
                .into_par_iter()
                .with_min_len(64)
                .map(|y| {
                    let p = y * w + (front - 2 * y);
                    let v = if forward {
                        this.forward_value(p)
                    } else {
                        this.backward_value(p)
                    };
                    (p, v)
                })
                .collect_into_vec(&mut updates);
            for &(p, new) in &updates {
                max_change = max_change.max(Self::change(self.dist[p], new));
                self.dist[p] = new;
            }
        }
        max_change
    }

    /// One forward then one backward sweep; returns the largest per-pixel decrease.
    pub fn sweep_pair(&mut self, schedule: SweepSchedule) -> f64 {
        let change = match schedule {
            SweepSchedule::Sequential => self
                .sweep_sequential(true)
                .max(self.sweep_sequential(false)),
            SweepSchedule::Wavefront => self.sweep_wavefront(true).max(self.sweep_wavefront(false)),
        };
        self.sweep_pairs += 1;
        change
    }

    /// Sweeps until converged or out of budget; returns whether it converged.
    pub fn run(&mut self, params: &DistanceParams, schedule: SweepSchedule) -> bool {
        while self.sweep_pairs < params.max_iterations {
            if self.sweep_pair(schedule) <= params.convergence_epsilon {
                return true;
            }
        }
        false
    }

    pub fn to_map(&self) -> DistanceMap {
        debug_assert!(self.dist.iter().all(|d| d.is_finite()));
        into_map(self.height as u32, self.width as u32, &self.dist, false)
    }
}

#[derive(Clone, Debug)]
pub struct RasterOutcome {
    pub map: DistanceMap,
    pub sweep_pairs: u32,
    pub converged: bool,
}

/// Raster-scan geodesic distances with an explicit update schedule.
pub fn geodesic_raster_scheduled(
    stack: &ChannelStack,
    seeds: &ScribbleSet,
    params: &DistanceParams,
    schedule: SweepSchedule,
) -> Result<RasterOutcome> {
    let mut solver = RasterSolver::new(stack, seeds, params)?;
    let converged = solver.run(params, schedule);
    Ok(RasterOutcome {
        map: solver.to_map(),
        sweep_pairs: solver.sweep_pairs(),
        converged,
    })
}

/// Raster-scan geodesic distances, single-threaded row-major sweeps.
pub fn geodesic_raster(
    stack: &ChannelStack,
    seeds: &ScribbleSet,
    params: &DistanceParams,
) -> Result<DistanceMap> {
    Ok(geodesic_raster_scheduled(stack, seeds, params, SweepSchedule::Sequential)?.map)
}

/// Lower envelope of parabolas `(q - i)² + f[i]` sampled at every `q`.
fn squared_edt_1d(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            let Some(&v) = sites.last() else {
                sites.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let (qf, vf) = (q as f64, v as f64);
            let s = ((fq + qf * qf) - (f[v] + vf * vf)) / (2.0 * (qf - vf));
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < sites.len() && bounds[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - sites[k] as f64;
        *o = d * d + f[sites[k]];
    }
}

/// Exact Euclidean distance from every pixel to its nearest foreground seed.
///
/// Separable squared-distance transform (columns, then rows) followed by a
/// square root.
pub fn euclidean_edt(seeds: &ScribbleSet, height: u32, width: u32) -> Result<DistanceMap> {
    if seeds.dims() != (height, width) {
        return Err(Error::DimensionMismatch {
            expected: (height, width),
            actual: seeds.dims(),
        });
    }
    let (h, w) = (height as usize, width as usize);
    let mut grid = vec![f64::INFINITY; h * w];
    for p in seeds.seed_indices()? {
        grid[p] = 0.0;
    }

    let columns: Vec<Vec<f64>> = (0..w)
        .into_par_iter()
        .map_init(
            || (vec![0.0; h], Vec::new(), Vec::new()),
            |(col, sites, bounds), x| {
                for y in 0..h {
                    col[y] = grid[y * w + x];
                }
                let mut out = vec![0.0; h];
                squared_edt_1d(col, &mut out, sites, bounds);
                out
            },
        )
        .collect();
    for (x, col) in columns.iter().enumerate() {
        for (y, &v) in col.iter().enumerate() {
            grid[y * w + x] = v;
        }
    }

    let mut result = vec![0.0f64; h * w];
    result
        .par_chunks_mut(w)
        .zip(grid.par_chunks(w))
        .for_each_init(
            || (Vec::new(), Vec::new()),
            |(sites, bounds), (out, row)| {
                squared_edt_1d(row, out, sites, bounds);
                out.iter_mut().for_each(|v| *v = v.sqrt());
            },
        );
    Ok(into_map(height, width, &result, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(values: &[f32]) -> ChannelStack {
        ChannelStack::new(1, values.len() as u32, 1, values.to_vec()).unwrap()
    }

    fn random_stack(h: u32, w: u32, c: u32, rng: &mut ChaCha8Rng) -> ChannelStack {
        ChannelStack::from_fn(h, w, c, |_, _, _| rng.gen_range(0.0..1.0)).unwrap()
    }

    fn random_seeds(h: u32, w: u32, n: usize, rng: &mut ChaCha8Rng) -> ScribbleSet {
        let mut coords = Vec::new();
        while coords.len() < n {
            let p = (rng.gen_range(0..w), rng.gen_range(0..h));
            if !coords.contains(&p) {
                coords.push(p);
            }
        }
        ScribbleSet::foreground(&coords, h, w).unwrap()
    }

    fn brute_force_edt(seeds: &ScribbleSet, h: u32, w: u32) -> Vec<f64> {
        let pts: Vec<(f64, f64)> = seeds
            .points()
            .iter()
            .map(|p| (p.x as f64, p.y as f64))
            .collect();
        (0..h * w)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                pts.iter()
                    .map(|(sx, sy)| ((x - sx).powi(2) + (y - sy).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn one_by_three_examples() {
        let stack = row(&[0.0, 1.0, 3.0]);
        let seeds = ScribbleSet::foreground(&[(0, 0)], 1, 3).unwrap();
        let geo = DistanceParams::default();
        assert_eq!(
            geodesic_exact(&stack, &seeds, &geo).unwrap().data(),
            &[0.0, 1.0, 3.0]
        );

        let out = geodesic_raster_scheduled(
            &stack,
            &seeds,
            &DistanceParams {
                max_iterations: 1,
                ..geo
            },
            SweepSchedule::Sequential,
        )
        .unwrap();
        assert_eq!(out.sweep_pairs, 1);
        assert_eq!(out.map.data(), &[0.0, 1.0, 3.0]);

        let spatial = geo.with_lambda(0.0);
        assert_eq!(
            geodesic_exact(&stack, &seeds, &spatial).unwrap().data(),
            &[0.0, 1.0, 2.0]
        );
        assert_eq!(
            geodesic_raster(&stack, &seeds, &spatial).unwrap().data(),
            &[0.0, 1.0, 2.0]
        );
    }

    #[test]
    fn constant_image_is_zero_everywhere() {
        let stack = ChannelStack::new(5, 6, 2, vec![0.7; 60]).unwrap();
        let seeds = ScribbleSet::foreground(&[(4, 3)], 5, 6).unwrap();
        let p = DistanceParams::default();
        assert!(geodesic_exact(&stack, &seeds, &p)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert!(geodesic_raster(&stack, &seeds, &p)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn seeds_everywhere_settle_after_one_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = random_stack(4, 5, 3, &mut rng);
        let all: Vec<(u32, u32)> = (0..4).flat_map(|y| (0..5).map(move |x| (x, y))).collect();
        let seeds = ScribbleSet::foreground(&all, 4, 5).unwrap();
        let out = geodesic_raster_scheduled(
            &stack,
            &seeds,
            &DistanceParams::default(),
            SweepSchedule::Sequential,
        )
        .unwrap();
        assert_eq!(out.sweep_pairs, 1);
        assert!(out.converged);
        assert!(out.map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let stack = row(&[0.0, 1.0]);
        let no_fg = ScribbleSet::new(vec![], 1, 2).unwrap();
        let p = DistanceParams::default();
        assert!(matches!(
            geodesic_exact(&stack, &no_fg, &p),
            Err(Error::EmptySeeds)
        ));
        assert!(matches!(
            geodesic_raster(&stack, &no_fg, &p),
            Err(Error::EmptySeeds)
        ));
        assert!(matches!(
            euclidean_edt(&no_fg, 1, 2),
            Err(Error::EmptySeeds)
        ));

        let other = ScribbleSet::foreground(&[(0, 0)], 2, 2).unwrap();
        assert!(matches!(
            geodesic_exact(&stack, &other, &p),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            euclidean_edt(&other, 1, 2),
            Err(Error::DimensionMismatch { .. })
        ));

        let seeds = ScribbleSet::foreground(&[(0, 0)], 1, 2).unwrap();
        assert!(geodesic_exact(&stack, &seeds, &p.with_lambda(1.5)).is_err());
        assert!(geodesic_raster(
            &stack,
            &seeds,
            &DistanceParams {
                max_iterations: 0,
                ..p
            }
        )
        .is_err());
        assert!(Connectivity::from_count(6).is_err());
    }

    #[test]
    fn edt_examples() {
        let seeds = ScribbleSet::foreground(&[(0, 0)], 5, 4).unwrap();
        let map = euclidean_edt(&seeds, 5, 4).unwrap();
        assert_eq!(map.get(3, 4), 5.0);

        let all: Vec<(u32, u32)> = (0..3).flat_map(|y| (0..3).map(move |x| (x, y))).collect();
        let seeds = ScribbleSet::foreground(&all, 3, 3).unwrap();
        assert!(euclidean_edt(&seeds, 3, 3)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn edt_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let (h, w) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
            let n = rng.gen_range(1..=((h * w) as usize).min(12));
            let seeds = random_seeds(h, w, n, &mut rng);
            let ours = euclidean_edt(&seeds, h, w).unwrap();
            for (a, b) in ours.data().iter().zip(brute_force_edt(&seeds, h, w)) {
                assert!((*a as f64 - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn raster_converges_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for conn in [Connectivity::Four, Connectivity::Eight] {
            for lambda in [0.0, 0.5, 1.0] {
                let stack = random_stack(20, 17, 3, &mut rng);
                let seeds = random_seeds(20, 17, 3, &mut rng);
                let params = DistanceParams::converged(lambda).with_connectivity(conn);
                let exact = geodesic_exact(&stack, &seeds, &params).unwrap();
                let out =
                    geodesic_raster_scheduled(&stack, &seeds, &params, SweepSchedule::Sequential)
                        .unwrap();
                assert!(out.converged);
                for (a, b) in out.map.data().iter().zip(exact.data()) {
                    assert!((a - b).abs() <= 1e-4, "{conn:?} {lambda}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn raster_sweeps_never_increase_and_stay_above_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let stack = random_stack(24, 24, 4, &mut rng);
        let seeds = random_seeds(24, 24, 2, &mut rng);
        let params = DistanceParams::converged(1.0);
        let exact = geodesic_exact(&stack, &seeds, &params).unwrap();
        let mut solver = RasterSolver::new(&stack, &seeds, &params).unwrap();
        let mut previous = solver.distances().to_vec();
        for _ in 0..6 {
            solver.sweep_pair(SweepSchedule::Sequential);
            for ((now, before), lower) in solver.distances().iter().zip(&previous).zip(exact.data())
            {
                assert!(now <= before);
                assert!(*now >= *lower as f64 - 1e-4);
            }
            previous = solver.distances().to_vec();
        }
    }

    #[test]
    fn wavefront_schedule_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (h, w) in [(1, 9), (9, 1), (13, 29), (31, 7)] {
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let stack = random_stack(h, w, 2, &mut rng);
                let seeds = random_seeds(h, w, 2, &mut rng);
                let params = DistanceParams::default().with_connectivity(conn);
                let seq =
                    geodesic_raster_scheduled(&stack, &seeds, &params, SweepSchedule::Sequential)
                        .unwrap();
                let par =
                    geodesic_raster_scheduled(&stack, &seeds, &params, SweepSchedule::Wavefront)
                        .unwrap();
                let bits =
                    |m: &DistanceMap| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&seq.map), bits(&par.map));
                assert_eq!(seq.sweep_pairs, par.sweep_pairs);
            }
        }
    }

    #[test]
    fn spatial_chamfer_bounds_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let stack = random_stack(16, 16, 2, &mut rng);
        let seeds = random_seeds(16, 16, 3, &mut rng);
        let chamfer =
            geodesic_exact(&stack, &seeds, &DistanceParams::default().with_lambda(0.0)).unwrap();
        let edt = euclidean_edt(&seeds, 16, 16).unwrap();
        for (c, e) in chamfer.data().iter().zip(edt.data()) {
            assert!(c + 1e-5 >= *e);
        }
    }

    #[test]
    fn zero_only_at_seeds_when_edges_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let stack = random_stack(10, 12, 3, &mut rng);
        let seeds = random_seeds(10, 12, 4, &mut rng);
        let seed_set = seeds.seed_indices().unwrap();
        for map in [
            geodesic_exact(&stack, &seeds, &DistanceParams::default()).unwrap(),
            geodesic_raster(&stack, &seeds, &DistanceParams::default()).unwrap(),
            euclidean_edt(&seeds, 10, 12).unwrap(),
        ] {
            for (i, &v) in map.data().iter().enumerate() {
                assert_eq!(v == 0.0, seed_set.contains(&i), "pixel {i} = {v}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn adding_seeds_never_increases_distance(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stack = random_stack(12, 10, 2, &mut rng);
            let small = random_seeds(12, 10, 2, &mut rng);
            let mut coords: Vec<(u32, u32)> = small.points().iter().map(|p| (p.x, p.y)).collect();
            let extra = random_seeds(12, 10, 3, &mut rng);
            for p in extra.points() {
                if !coords.contains(&(p.x, p.y)) {
                    coords.push((p.x, p.y));
                }
            }
            let big = ScribbleSet::foreground(&coords, 12, 10).unwrap();
            let params = DistanceParams::converged(lambda);
            let pairs = [
                (geodesic_exact(&stack, &small, &params).unwrap(), geodesic_exact(&stack, &big, &params).unwrap()),
                (geodesic_raster(&stack, &small, &params).unwrap(), geodesic_raster(&stack, &big, &params).unwrap()),
                (euclidean_edt(&small, 12, 10).unwrap(), euclidean_edt(&big, 12, 10).unwrap()),
            ];
            for (before, after) in pairs {
                for (b, a) in before.data().iter().zip(after.data()) {
                    prop_assert!(a <= b);
                }
            }
        }

        #[test]
        fn pure_geodesic_scales_with_image(seed in any::<u64>(), factor in prop::sample::select(vec![0.5f32, 2.0, 10.0])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stack = random_stack(9, 11, 3, &mut rng);
            let seeds = random_seeds(9, 11, 2, &mut rng);
            let params = DistanceParams::default();
            let base = geodesic_exact(&stack, &seeds, &params).unwrap();
            let scaled = geodesic_exact(&stack.scaled(factor).unwrap(), &seeds, &params).unwrap();
            for (b, s) in base.data().iter().zip(scaled.data()) {
                let want = *b as f64 * factor as f64;
                prop_assert!((*s as f64 - want).abs() <= 1e-5 * want.max(1e-12));
            }
        }
    }
}
