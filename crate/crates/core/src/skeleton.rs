//! Zhang–Suen thinning and skeleton-derived scribbles.

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, ScribblePoint, ScribbleSet};

/// Neighbours P2..P9 clockwise from north; pixels outside the frame read as background.
fn neighbours(mask: &BinaryMask, x: u32, y: u32) -> [bool; 8] {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let at = |dx: i64, dy: i64| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get(nx as u32, ny as u32)
    };
    [
        at(0, -1),
        at(1, -1),
        at(1, 0),
        at(1, 1),
        at(0, 1),
        at(-1, 1),
        at(-1, 0),
        at(-1, -1),
    ]
}

/// Whether the pixel with neighbourhood `n` is deleted in sub-iteration `first` or second.
fn deletable(n: &[bool; 8], first: bool) -> bool {
    let [p2, _, p4, _, p6, _, p8, _] = *n;
    let b = n.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    if first {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// One sub-iteration; deletions are decided on the unmodified input.
///
/// A component whose every pixel qualifies for deletion (the classic case is an
/// isolated 2×2 block) keeps its first pixel in row-major order.
fn thin_pass(mask: &mut BinaryMask, first: bool) -> bool {
    let mut doomed: Vec<usize> = mask
        .ones()
        .filter(|&(x, y)| deletable(&neighbours(mask, x, y), first))
        .map(|(x, y)| y as usize * mask.width() as usize + x as usize)
        .collect();
    if doomed.is_empty() {
        return false;
    }

    let labels = component_labels(mask);
    let components = labels.iter().flatten().max().map_or(0, |&l| l + 1);
    let mut survivors = vec![0usize; components];
    for label in labels.iter().flatten() {
        survivors[*label] += 1;
    }
    for &p in &doomed {
        survivors[labels[p].unwrap()] -= 1;
    }
    let mut spared = vec![false; components];
    doomed.retain(|&p| {
        let label = labels[p].unwrap();
        if survivors[label] == 0 && !spared[label] {
            spared[label] = true;
            false
        } else {
            true
        }
    });

    let w = mask.width() as usize;
    for &p in &doomed {
        mask.set((p % w) as u32, (p / w) as u32, false);
    }
    !doomed.is_empty()
}

/// Thins the foreground to one-pixel-wide curves by Zhang–Suen iteration.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut out = mask.clone();
    loop {
        let a = thin_pass(&mut out, true);
        let b = thin_pass(&mut out, false);
        if !a && !b {
            return out;
        }
    }
}

/// Every skeleton pixel as a foreground scribble, row-major.
pub fn mask_to_scribbles(skeleton: &BinaryMask) -> Result<ScribbleSet> {
    let points: Vec<ScribblePoint> = skeleton
        .ones()
        .map(|(x, y)| ScribblePoint::foreground(x, y))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptySeeds);
    }
    ScribbleSet::new(points, skeleton.height(), skeleton.width())
}

/// 8-connected component label of every foreground pixel, numbered in row-major
/// order of first appearance.
fn component_labels(mask: &BinaryMask) -> Vec<Option<usize>> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut labels = vec![None; w * h];
    let mut stack = Vec::new();
    let mut next = 0;
    for start in 0..w * h {
        if !mask.data()[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if mask.data()[q] && labels[q].is_none() {
                        labels[q] = Some(next);
                        stack.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// Number of 8-connected foreground components.
pub fn count_components(mask: &BinaryMask) -> usize {
    component_labels(mask)
        .iter()
        .flatten()
        .max()
        .map_or(0, |&l| l + 1)
}
