//! Repair pass that turns an arbitrary label raster into a valid
//! [`SuperpixelMap`].
//!
//! Each round relabels the raster into its 4-connected components (numbered
//! in row-major discovery order, which makes the pass idempotent), then
//! applies the first repair that is due:
//!
//! - a component below `min_size` is absorbed into the 4-adjacent component
//!   with the closest mean spectrum (smallest components first),
//! - a component above the size cap is split in two by a local 2-means
//!   clustering over spectrum and scaled position, with a connected
//!   BFS-prefix split as fallback when the clustering collapses.
//!
//! Every tie resolves to the lowest label or pixel index, so the output is a
//! pure function of the input raster.

use std::collections::VecDeque;

use super::{euclid, HmsConfig, SuperpixelMap};
use crate::error::{Error, Result};
use crate::pca::ReducedImage;

/// Turn `assignment` into a partition of 4-connected superpixels whose sizes
/// lie within the configured bounds.
///
/// The lower bound is best-effort in one corner case: once only a single
/// component remains it has nothing left to merge with and is returned even
/// if small. Repairs that keep cycling (absorptions re-creating oversized
/// components and vice versa) are cut off with a numerical error after a
/// generous round budget rather than returning an invalid map.
pub fn enforce_connectivity(
    assignment: &[u32],
    img: &ReducedImage,
    cfg: &HmsConfig,
) -> Result<SuperpixelMap> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    cfg.validate(w, h)?;
    if assignment.len() != n {
        return Err(Error::Dimension(format!(
            "assignment has {} entries for a {w}x{h} image",
            assignment.len()
        )));
    }
    let min_size = cfg.min_size;
    let max_size = cfg.max_superpixel_size(n);
    let spatial_factor = cfg.spatial_factor(n);

    let mut labels = assignment.to_vec();
    let rounds = 16 * cfg.k_init + 256;
    for _ in 0..rounds {
        let comps = relabel_components(&mut labels, w, h);

        if comps.len() > 1 {
            let mut smallest: Option<(usize, usize)> = None; // (size, label)
            for (label, members) in comps.iter().enumerate() {
                if members.len() < min_size && smallest.map_or(true, |(s, _)| members.len() < s) {
                    smallest = Some((members.len(), label));
                }
            }
            if let Some((_, label)) = smallest {
                absorb_component(label, &comps, &mut labels, img);
                continue;
            }
        }

        let mut largest: Option<(usize, usize)> = None;
        for (label, members) in comps.iter().enumerate() {
            if members.len() as f64 > max_size && largest.map_or(true, |(s, _)| members.len() > s) {
                largest = Some((members.len(), label));
            }
        }
        if let Some((_, label)) = largest {
            let new_label = comps.len() as u32;
            split_component(
                &comps[label],
                &mut labels,
                img,
                spatial_factor,
                min_size,
                new_label,
            );
            continue;
        }

        let map = SuperpixelMap::from_assignment(w, h, labels)?;
        debug_assert!(map.validate().is_ok());
        return Ok(map);
    }
    Err(Error::Numerical(format!(
        "connectivity repair did not stabilize within {rounds} rounds"
    )))
}

/// Relabel the raster into its 4-connected components. Component numbers
/// follow the row-major position of each component's first pixel; member
/// lists are returned sorted.
fn relabel_components(labels: &mut Vec<u32>, w: usize, h: usize) -> Vec<Vec<u32>> {
    let n = w * h;
    let mut new_labels = vec![u32::MAX; n];
    let mut comps: Vec<Vec<u32>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if new_labels[start] != u32::MAX {
            continue;
        }
        let label = comps.len() as u32;
        let old = labels[start];
        let mut members = Vec::new();
        new_labels[start] = label;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            members.push(p as u32);
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if new_labels[q] == u32::MAX && labels[q] == old {
                    new_labels[q] = label;
                    queue.push_back(q);
                }
            };
            if y > 0 {
                visit(p - w);
            }
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    *labels = new_labels;
    comps
}

fn mean_spectrum(pixels: &[u32], img: &ReducedImage) -> Vec<f64> {
    let mut mean = vec![0.0f64; img.dims()];
    for &p in pixels {
        for (k, &v) in img.spectrum_at(p as usize).iter().enumerate() {
            mean[k] += v;
        }
    }
    let c = pixels.len() as f64;
    mean.iter_mut().for_each(|v| *v /= c);
    mean
}

/// Merge component `label` into the 4-adjacent component with the closest
/// mean spectrum (ties to the lowest label).
fn absorb_component(label: usize, comps: &[Vec<u32>], labels: &mut [u32], img: &ReducedImage) {
    let (w, h) = (img.width(), img.height());
    let members = &comps[label];
    let mut candidates = Vec::new();
    for &p in members {
        let p = p as usize;
        let (x, y) = (p % w, p / w);
        let mut add = |q: usize| {
            if labels[q] as usize != label {
                candidates.push(labels[q]);
            }
        };
        if y > 0 {
            add(p - w);
        }
        if x > 0 {
            add(p - 1);
        }
        if x + 1 < w {
            add(p + 1);
        }
        if y + 1 < h {
            add(p + w);
        }
    }
    candidates.sort_unstable();
    candidates.dedup();

    let own_mean = mean_spectrum(members, img);
    let mut best: Option<(f64, u32)> = None;
    for &c in &candidates {
        let d = euclid(&own_mean, &mean_spectrum(&comps[c as usize], img));
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    if let Some((_, target)) = best {
        for &p in members {
            labels[p as usize] = target;
        }
    }
}

/// Split one oversized component in two. A local 2-means over spectrum and
/// scaled position is tried first, seeded at the extreme pixels of the
/// longer bounding-box axis; if either part comes out empty or below
/// `min_size`, a BFS from seed A takes the first half of the pixels as a
/// guaranteed-connected part instead. Part A keeps the component's label,
/// part B gets `new_label`.
fn split_component(
    members: &[u32],
    labels: &mut [u32],
    img: &ReducedImage,
    spatial_factor: f64,
    min_size: usize,
    new_label: u32,
) {
    let w = img.width();
    let size = members.len();

    let (mut min_x, mut max_x, mut min_y, mut max_y) = (usize::MAX, 0usize, usize::MAX, 0usize);
    for &p in members {
        let (x, y) = (p as usize % w, p as usize / w);
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let split_x = (max_x - min_x) >= (max_y - min_y);
    let coord = |p: u32| {
        if split_x {
            p as usize % w
        } else {
            p as usize / w
        }
    };

    // Seeds: the first members attaining the extreme coordinates.
    let mut seed_a = members[0];
    let mut seed_b = members[0];
    for &p in &members[1..] {
        if coord(p) < coord(seed_a) {
            seed_a = p;
        }
        if coord(p) > coord(seed_b) {
            seed_b = p;
        }
    }

    let position = |p: u32| ((p as usize % w) as f64, (p as usize / w) as f64);
    let center_of = |pixels: &[u32]| -> (f64, f64, Vec<f64>) {
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut spec = vec![0.0f64; img.dims()];
        for &p in pixels {
            let (x, y) = position(p);
            cx += x;
            cy += y;
            for (k, &v) in img.spectrum_at(p as usize).iter().enumerate() {
                spec[k] += v;
            }
        }
        let c = pixels.len() as f64;
        spec.iter_mut().for_each(|v| *v /= c);
        (cx / c, cy / c, spec)
    };
    let dist = |p: u32, center: &(f64, f64, Vec<f64>)| {
        let (x, y) = position(p);
        let spatial = ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt();
        euclid(img.spectrum_at(p as usize), &center.2) + spatial_factor * spatial
    };

    let mut center_a = center_of(&[seed_a]);
    let mut center_b = center_of(&[seed_b]);
    let mut in_b = vec![false; size];
    for _ in 0..10 {
        let mut changed = false;
        for (i, &p) in members.iter().enumerate() {
            let to_b = dist(p, &center_b) < dist(p, &center_a);
            if in_b[i] != to_b {
                in_b[i] = to_b;
                changed = true;
            }
        }
        let part_a: Vec<u32> = members
            .iter()
            .zip(&in_b)
            .filter(|(_, &b)| !b)
            .map(|(&p, _)| p)
            .collect();
        let part_b: Vec<u32> = members
            .iter()
            .zip(&in_b)
            .filter(|(_, &b)| b)
            .map(|(&p, _)| p)
            .collect();
        if part_a.is_empty() || part_b.is_empty() {
            break;
        }
        center_a = center_of(&part_a);
        center_b = center_of(&part_b);
        if !changed {
            break;
        }
    }

    let part_b: Vec<u32> = members
        .iter()
        .zip(&in_b)
        .filter(|(_, &b)| b)
        .map(|(&p, _)| p)
        .collect();
    let part_b = if part_b.len() < min_size || size - part_b.len() < min_size {
        bfs_prefix_complement(members, size.div_ceil(2), labels.len(), w, seed_a)
    } else {
        part_b
    };
    for &p in &part_b {
        labels[p as usize] = new_label;
    }
}

/// Everything but the first `take` pixels of a BFS over `members` from
/// `seed` (neighbors visited in ascending pixel order). The taken prefix is
/// always 4-connected.
fn bfs_prefix_complement(members: &[u32], take: usize, n: usize, w: usize, seed: u32) -> Vec<u32> {
    let h = n / w;
    let mut in_comp = vec![false; n];
    for &p in members {
        in_comp[p as usize] = true;
    }
    let mut in_prefix = vec![false; n];
    let mut visited = vec![false; n];
    let mut queue = VecDeque::new();
    visited[seed as usize] = true;
    queue.push_back(seed as usize);
    let mut taken = 0;
    while let Some(p) = queue.pop_front() {
        if taken == take {
            break;
        }
        in_prefix[p] = true;
        taken += 1;
        let (x, y) = (p % w, p / w);
        let mut visit = |q: usize| {
            if in_comp[q] && !visited[q] {
                visited[q] = true;
                queue.push_back(q);
            }
        };
        if y > 0 {
            visit(p - w);
        }
        if x > 0 {
            visit(p - 1);
        }
        if x + 1 < w {
            visit(p + 1);
        }
        if y + 1 < h {
            visit(p + w);
        }
    }
    members
        .iter()
        .copied()
        .filter(|&p| !in_prefix[p as usize])
        .collect()
}
