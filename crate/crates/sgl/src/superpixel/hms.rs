//! The seed-based segmentation loop.
//!
//! Staged per iteration:
//!
//! 1. **Assign** every pixel to its best seed among those within a `2S x 2S`
//!    search window (`S = sqrt(n / k_init)`), under a distance that adds the
//!    Frobenius distance between covariance logarithms, the Euclidean
//!    spectral distance, and the scaled spatial distance. Pixels outside all
//!    windows fall back to a full scan. The sum of winning distances is the
//!    iteration's energy.
//! 2. **Accept or stop**: an energy increase rejects the new assignment and
//!    ends the loop; a relative decrease below the configured threshold
//!    accepts it and ends the loop.
//! 3. **Update** each seed to the mean position, spectrum, and covariance
//!    logarithm of its pixels, dropping seeds that lost all pixels, and
//!    accumulating each seed's manifold area.
//! 4. **Merge** seeds whose area fell below half the mean into their
//!    spectrally closest neighbor, then **split** seeds above twice the mean
//!    along their higher-variance spatial axis.
//!
//! All tie-breaks go to the lowest index, so the result is a pure function
//! of its inputs regardless of thread count.

use rayon::prelude::*;

use super::connectivity::enforce_connectivity;
use super::{euclid, CovarianceField, HmsConfig, SuperpixelMap};
use crate::error::{Error, Result};
use crate::pca::ReducedImage;

/// State of one seed during segmentation.
#[derive(Debug, Clone)]
pub struct SeedState {
    /// Seed position in pixel coordinates.
    pub x: f64,
    pub y: f64,
    /// Mean reduced spectrum of the seed's region.
    pub spectrum: Vec<f64>,
    /// Mean covariance logarithm of the region, flattened row-major.
    pub log_cov: Vec<f64>,
    /// Manifold area of the region (sum of member pixel area elements).
    pub area: f64,
}

/// Outcome of [`hms_segment`].
#[derive(Debug, Clone)]
pub struct HmsResult {
    pub map: SuperpixelMap,
    /// Number of accepted assignment iterations.
    pub iterations: usize,
    /// Energy of each accepted iteration; never increasing.
    pub energy_history: Vec<f64>,
}

impl HmsResult {
    /// Energy of the final accepted assignment.
    pub fn final_energy(&self) -> f64 {
        *self.energy_history.last().expect("at least one iteration")
    }
}

/// Distance between a pixel and a seed: Frobenius distance of covariance
/// logarithms + spectral distance + `(compactness / S) *` spatial distance.
pub fn pixel_to_seed_distance(
    pixel: usize,
    seed: &SeedState,
    img: &ReducedImage,
    field: &CovarianceField,
    cfg: &HmsConfig,
) -> f64 {
    distance(
        pixel,
        seed,
        img,
        field,
        cfg.spatial_factor(img.num_pixels()),
    )
}

fn distance(
    pixel: usize,
    seed: &SeedState,
    img: &ReducedImage,
    field: &CovarianceField,
    spatial_factor: f64,
) -> f64 {
    let cov_term = euclid(field.log_at(pixel), &seed.log_cov);
    let spectral_term = euclid(img.spectrum_at(pixel), &seed.spectrum);
    let dx = (pixel % img.width()) as f64 - seed.x;
    let dy = (pixel / img.width()) as f64 - seed.y;
    cov_term + spectral_term + spatial_factor * (dx * dx + dy * dy).sqrt()
}

/// Among `neighbors`, the superpixel whose spectrum is closest to that of
/// `i` (ties resolve to the lowest index). `None` when no candidate remains.
pub fn spectral_merge(i: usize, neighbors: &[u32], spectra: &[Vec<f64>]) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for &j in neighbors {
        if j as usize == i {
            continue;
        }
        let d = euclid(&spectra[i], &spectra[j as usize]);
        let better = match best {
            None => true,
            Some((bd, bj)) => d < bd || (d == bd && j < bj),
        };
        if better {
            best = Some((d, j));
        }
    }
    best.map(|(_, j)| j)
}

/// Segment `img` into superpixels.
///
/// The returned map is always a partition of the image into 4-connected
/// superpixels whose sizes lie within the configured bounds.
pub fn hms_segment(
    img: &ReducedImage,
    field: &CovarianceField,
    cfg: &HmsConfig,
) -> Result<HmsResult> {
    cfg.validate(img.width(), img.height())?;
    if field.width() != img.width() || field.height() != img.height() || field.dims() != img.dims()
    {
        return Err(Error::Dimension(format!(
            "covariance field {}x{}x{} does not match image {}x{}x{}",
            field.width(),
            field.height(),
            field.dims(),
            img.width(),
            img.height(),
            img.dims()
        )));
    }

    let n = img.num_pixels();
    let spatial_factor = cfg.spatial_factor(n);
    let search_radius = cfg.grid_interval(n);
    let area_elems = area_elements(img, spatial_factor);

    let mut seeds = initial_seeds(img, field, cfg)?;
    let mut labels = Vec::new();
    let mut energy_history = Vec::new();
    let mut iterations = 0;
    let mut prev_energy = f64::INFINITY;

    for iter in 1..=cfg.max_iters {
        let (new_labels, energy) = assign_pixels(img, field, &seeds, spatial_factor, search_radius);
        if iter > 1 && energy > prev_energy {
            // The reshaped seeds made things worse; keep the previous state.
            break;
        }
        labels = new_labels;
        energy_history.push(energy);
        iterations = iter;
        let relative_decrease = if prev_energy.is_finite() && prev_energy > 0.0 {
            (prev_energy - energy) / prev_energy
        } else {
            f64::INFINITY
        };
        prev_energy = energy;
        if iter == cfg.max_iters || relative_decrease < cfg.energy_decrease_threshold {
            break;
        }

        let (mut new_seeds, relabeled, mut lists) = update_seeds(&labels, img, field, &area_elems);
        labels = relabeled;
        reshape_seeds(
            &mut new_seeds,
            &mut labels,
            &mut lists,
            img,
            field,
            &area_elems,
        );
        seeds = new_seeds;
    }

    let map = enforce_connectivity(&labels, img, cfg)?;
    Ok(HmsResult {
        map,
        iterations,
        energy_history,
    })
}

// ── Manifold area ────────────────────────────────────────────────────────────

/// Per-pixel area element of the embedding
/// `p -> (sf * x, sf * y, spectrum(p))`: the parallelogram area of the
/// forward differences along x and y (backward at the far borders), via the
/// Gram determinant. Degenerate axes (single-pixel extent) contribute zero.
fn area_elements(img: &ReducedImage, spatial_factor: f64) -> Vec<f64> {
    let (w, h, a) = (img.width(), img.height(), img.dims());
    let sf2 = spatial_factor * spatial_factor;
    let mut out = vec![0.0f64; img.num_pixels()];
    let mut du = vec![0.0f64; a];
    let mut dv = vec![0.0f64; a];
    for y in 0..h {
        for x in 0..w {
            let spectral_diff = |target: &mut [f64], p1: (usize, usize), p0: (usize, usize)| {
                let s1 = img.spectrum(p1.0, p1.1);
                let s0 = img.spectrum(p0.0, p0.1);
                for k in 0..a {
                    target[k] = s1[k] - s0[k];
                }
            };
            let u_sq;
            if w == 1 {
                du.iter_mut().for_each(|v| *v = 0.0);
                u_sq = 0.0;
            } else {
                let (x1, x0) = if x + 1 < w { (x + 1, x) } else { (x, x - 1) };
                spectral_diff(&mut du, (x1, y), (x0, y));
                u_sq = sf2 + du.iter().map(|v| v * v).sum::<f64>();
            }
            let v_sq;
            if h == 1 {
                dv.iter_mut().for_each(|v| *v = 0.0);
                v_sq = 0.0;
            } else {
                let (y1, y0) = if y + 1 < h { (y + 1, y) } else { (y, y - 1) };
                spectral_diff(&mut dv, (x, y1), (x, y0));
                v_sq = sf2 + dv.iter().map(|v| v * v).sum::<f64>();
            }
            // The spatial components of u and v are orthogonal, so the dot
            // product reduces to the spectral parts.
            let dot: f64 = du.iter().zip(&dv).map(|(a, b)| a * b).sum();
            let gram = (u_sq * v_sq - dot * dot).max(0.0);
            out[y * w + x] = gram.sqrt();
        }
    }
    out
}

// ── Seed initialization ──────────────────────────────────────────────────────

fn seed_from_pixel(pixel: usize, img: &ReducedImage, field: &CovarianceField) -> SeedState {
    SeedState {
        x: (pixel % img.width()) as f64,
        y: (pixel / img.width()) as f64,
        spectrum: img.spectrum_at(pixel).to_vec(),
        log_cov: field.log_at(pixel).to_vec(),
        area: 0.0,
    }
}

/// Squared-difference image gradient used to nudge seeds off edges.
fn gradient(img: &ReducedImage, x: usize, y: usize) -> f64 {
    let (w, h) = (img.width(), img.height());
    let xm = x.saturating_sub(1);
    let xp = (x + 1).min(w - 1);
    let ym = y.saturating_sub(1);
    let yp = (y + 1).min(h - 1);
    let sq = |p1: &[f64], p0: &[f64]| -> f64 {
        p1.iter()
            .zip(p0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    sq(img.spectrum(xp, y), img.spectrum(xm, y)) + sq(img.spectrum(x, yp), img.spectrum(x, ym))
}

/// Plant `k_init` seeds on a near-square grid, each perturbed to the
/// lowest-gradient pixel of its 3x3 neighborhood (ties keep the first in
/// row-major scan order).
fn initial_seeds(
    img: &ReducedImage,
    field: &CovarianceField,
    cfg: &HmsConfig,
) -> Result<Vec<SeedState>> {
    let (w, h) = (img.width(), img.height());
    let k = cfg.k_init;
    let mut ny = ((k as f64 * h as f64 / w as f64).sqrt().round() as usize).clamp(1, h.min(k));
    let mut nx = k.div_ceil(ny);
    if nx > w {
        nx = w;
        ny = k.div_ceil(nx);
    }
    if nx > w || ny > h {
        return Err(Error::Config(format!(
            "cannot place {k} seeds on a {w}x{h} image"
        )));
    }

    let mut seeds = Vec::with_capacity(k);
    for idx in 0..k {
        let (ci, cj) = (idx % nx, idx / nx);
        let cx = (((ci as f64 + 0.5) * w as f64 / nx as f64).floor() as usize).min(w - 1);
        let cy = (((cj as f64 + 0.5) * h as f64 / ny as f64).floor() as usize).min(h - 1);
        let mut best: Option<(f64, usize)> = None;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let px = cx as i64 + dx;
                let py = cy as i64 + dy;
                if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                    continue;
                }
                let (px, py) = (px as usize, py as usize);
                let g = gradient(img, px, py);
                if best.map_or(true, |(bg, _)| g < bg) {
                    best = Some((g, py * w + px));
                }
            }
        }
        let (_, pixel) = best.expect("3x3 neighborhood is never empty");
        seeds.push(seed_from_pixel(pixel, img, field));
    }
    Ok(seeds)
}

// ── Assignment ───────────────────────────────────────────────────────────────

/// Assign every pixel to the best seed within `search_radius` along each
/// axis; pixels outside every window fall back to a full scan. Returns the
/// label raster and the energy (sum of winning distances, accumulated in
/// fixed row-major order).
fn assign_pixels(
    img: &ReducedImage,
    field: &CovarianceField,
    seeds: &[SeedState],
    spatial_factor: f64,
    search_radius: f64,
) -> (Vec<u32>, f64) {
    let (w, h) = (img.width(), img.height());
    let n = img.num_pixels();
    let cell = search_radius.max(1.0);
    let bw = (w as f64 / cell).ceil() as usize + 1;
    let bh = (h as f64 / cell).ceil() as usize + 1;
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); bw * bh];
    for (s, seed) in seeds.iter().enumerate() {
        let bx = ((seed.x / cell) as usize).min(bw - 1);
        let by = ((seed.y / cell) as usize).min(bh - 1);
        buckets[by * bw + bx].push(s as u32);
    }

    let mut labels = vec![u32::MAX; n];
    let mut dists = vec![f64::INFINITY; n];
    labels
        .par_chunks_mut(w)
        .zip(dists.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (label_row, dist_row))| {
            let by = ((y as f64 / cell) as usize).min(bh - 1);
            for x in 0..w {
                let bx = ((x as f64 / cell) as usize).min(bw - 1);
                let pixel = y * w + x;
                let mut best = f64::INFINITY;
                let mut best_seed = u32::MAX;
                for nby in by.saturating_sub(1)..=(by + 1).min(bh - 1) {
                    for nbx in bx.saturating_sub(1)..=(bx + 1).min(bw - 1) {
                        for &s in &buckets[nby * bw + nbx] {
                            let seed = &seeds[s as usize];
                            if (x as f64 - seed.x).abs() > search_radius
                                || (y as f64 - seed.y).abs() > search_radius
                            {
                                continue;
                            }
                            let d = distance(pixel, seed, img, field, spatial_factor);
                            if d < best || (d == best && s < best_seed) {
                                best = d;
                                best_seed = s;
                            }
                        }
                    }
                }
                label_row[x] = best_seed;
                dist_row[x] = best;
            }
        });

    // Pixels no window reached: full scan (rare; keeps the cover total).
    for pixel in 0..n {
        if labels[pixel] == u32::MAX {
            let mut best = f64::INFINITY;
            let mut best_seed = u32::MAX;
            for (s, seed) in seeds.iter().enumerate() {
                let d = distance(pixel, seed, img, field, spatial_factor);
                if d < best || (d == best && (s as u32) < best_seed) {
                    best = d;
                    best_seed = s as u32;
                }
            }
            labels[pixel] = best_seed;
            dists[pixel] = best;
        }
    }

    let energy = dists.iter().sum();
    (labels, energy)
}

// ── Seed update ──────────────────────────────────────────────────────────────

/// Recompute each seed as the mean of its pixels and drop seeds that lost
/// every pixel (labels are compacted accordingly). Also returns the member
/// pixel lists, sorted row-major.
fn update_seeds(
    labels: &[u32],
    img: &ReducedImage,
    field: &CovarianceField,
    area_elems: &[f64],
) -> (Vec<SeedState>, Vec<u32>, Vec<Vec<u32>>) {
    let a = img.dims();
    let aa = a * a;
    let k_old = labels.iter().map(|&l| l as usize).max().unwrap_or(0) + 1;

    let mut counts = vec![0usize; k_old];
    let mut sum_x = vec![0.0f64; k_old];
    let mut sum_y = vec![0.0f64; k_old];
    let mut sum_spec = vec![0.0f64; k_old * a];
    let mut sum_log = vec![0.0f64; k_old * aa];
    let mut sum_area = vec![0.0f64; k_old];
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); k_old];

    let w = img.width();
    for (pixel, &label) in labels.iter().enumerate() {
        let l = label as usize;
        counts[l] += 1;
        sum_x[l] += (pixel % w) as f64;
        sum_y[l] += (pixel / w) as f64;
        for (k, &v) in img.spectrum_at(pixel).iter().enumerate() {
            sum_spec[l * a + k] += v;
        }
        for (k, &v) in field.log_at(pixel).iter().enumerate() {
            sum_log[l * aa + k] += v;
        }
        sum_area[l] += area_elems[pixel];
        lists[l].push(pixel as u32);
    }

    let mut remap = vec![u32::MAX; k_old];
    let mut seeds = Vec::new();
    let mut new_lists = Vec::new();
    for l in 0..k_old {
        if counts[l] == 0 {
            continue;
        }
        let c = counts[l] as f64;
        remap[l] = seeds.len() as u32;
        seeds.push(SeedState {
            x: sum_x[l] / c,
            y: sum_y[l] / c,
            spectrum: sum_spec[l * a..(l + 1) * a].iter().map(|v| v / c).collect(),
            log_cov: sum_log[l * aa..(l + 1) * aa]
                .iter()
                .map(|v| v / c)
                .collect(),
            area: sum_area[l],
        });
        new_lists.push(std::mem::take(&mut lists[l]));
    }
    let relabeled = labels.iter().map(|&l| remap[l as usize]).collect();
    (seeds, relabeled, new_lists)
}

// ── Merge and split ──────────────────────────────────────────────────────────

/// 4-neighborhood adjacency between labels, sorted and deduplicated.
fn label_adjacency(labels: &[u32], w: usize, h: usize, k: usize) -> Vec<Vec<u32>> {
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); k];
    for y in 0..h {
        for x in 0..w {
            let here = labels[y * w + x];
            if x + 1 < w {
                let right = labels[y * w + x + 1];
                if right != here {
                    adjacency[here as usize].push(right);
                    adjacency[right as usize].push(here);
                }
            }
            if y + 1 < h {
                let below = labels[(y + 1) * w + x];
                if below != here {
                    adjacency[here as usize].push(below);
                    adjacency[below as usize].push(here);
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    adjacency
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn seed_from_members(
    members: &[u32],
    img: &ReducedImage,
    field: &CovarianceField,
    area_elems: &[f64],
) -> SeedState {
    let a = img.dims();
    let aa = a * a;
    let w = img.width();
    let mut seed = SeedState {
        x: 0.0,
        y: 0.0,
        spectrum: vec![0.0; a],
        log_cov: vec![0.0; aa],
        area: 0.0,
    };
    for &p in members {
        let p = p as usize;
        seed.x += (p % w) as f64;
        seed.y += (p / w) as f64;
        for (k, &v) in img.spectrum_at(p).iter().enumerate() {
            seed.spectrum[k] += v;
        }
        for (k, &v) in field.log_at(p).iter().enumerate() {
            seed.log_cov[k] += v;
        }
        seed.area += area_elems[p];
    }
    let c = members.len() as f64;
    seed.x /= c;
    seed.y /= c;
    seed.spectrum.iter_mut().for_each(|v| *v /= c);
    seed.log_cov.iter_mut().for_each(|v| *v /= c);
    seed
}

/// Merge seeds whose area is below half the pass-start mean into their
/// spectrally closest neighbor, then split seeds above twice that mean along
/// their higher-variance spatial axis. Labels and member lists stay
/// consistent with the seed list throughout.
fn reshape_seeds(
    seeds: &mut Vec<SeedState>,
    labels: &mut [u32],
    lists: &mut Vec<Vec<u32>>,
    img: &ReducedImage,
    field: &CovarianceField,
    area_elems: &[f64],
) {
    let k = seeds.len();
    if k == 0 {
        return;
    }
    let mean_area = seeds.iter().map(|s| s.area).sum::<f64>() / k as f64;
    let (w, h) = (img.width(), img.height());

    // Merge phase. All choices use pass-start spectra and adjacency; chains
    // of merges resolve through union-find.
    let adjacency = label_adjacency(labels, w, h, k);
    let spectra: Vec<Vec<f64>> = seeds.iter().map(|s| s.spectrum.clone()).collect();
    let mut parent: Vec<usize> = (0..k).collect();
    let mut merged_any = false;
    for i in 0..k {
        if seeds[i].area >= 0.5 * mean_area {
            continue;
        }
        let ri = find(&mut parent, i);
        let candidates: Vec<u32> = adjacency[i]
            .iter()
            .copied()
            .filter(|&j| find(&mut parent, j as usize) != ri)
            .collect();
        if let Some(j) = spectral_merge(i, &candidates, &spectra) {
            let rj = find(&mut parent, j as usize);
            parent[ri] = rj;
            merged_any = true;
        }
    }
    if merged_any {
        let roots: Vec<usize> = (0..k).map(|i| find(&mut parent, i)).collect();
        let mut remap = vec![u32::MAX; k];
        let mut next = 0u32;
        for &r in &roots {
            if remap[r] == u32::MAX {
                remap[r] = next;
                next += 1;
            }
        }
        let mut new_lists: Vec<Vec<u32>> = vec![Vec::new(); next as usize];
        for i in 0..k {
            new_lists[remap[roots[i]] as usize].append(&mut lists[i]);
        }
        for list in &mut new_lists {
            list.sort_unstable();
        }
        let new_seeds = new_lists
            .iter()
            .map(|members| seed_from_members(members, img, field, area_elems))
            .collect();
        for l in labels.iter_mut() {
            *l = remap[roots[*l as usize]];
        }
        *seeds = new_seeds;
        *lists = new_lists;
    }

    // Split phase, against the same pass-start mean area. New halves are
    // appended and not revisited this pass.
    let k_cur = seeds.len();
    for i in 0..k_cur {
        if seeds[i].area <= 2.0 * mean_area || lists[i].len() < 2 {
            continue;
        }
        let members = &lists[i];
        let c = members.len() as f64;
        let (mut mx, mut my) = (0.0f64, 0.0f64);
        for &p in members {
            mx += (p as usize % w) as f64;
            my += (p as usize / w) as f64;
        }
        mx /= c;
        my /= c;
        let (mut var_x, mut var_y) = (0.0f64, 0.0f64);
        for &p in members {
            let dx = (p as usize % w) as f64 - mx;
            let dy = (p as usize / w) as f64 - my;
            var_x += dx * dx;
            var_y += dy * dy;
        }
        let split_x = var_x >= var_y;
        let threshold = if split_x { mx } else { my };
        let coord = |p: u32| {
            if split_x {
                (p as usize % w) as f64
            } else {
                (p as usize / w) as f64
            }
        };
        let half_a: Vec<u32> = members
            .iter()
            .copied()
            .filter(|&p| coord(p) < threshold)
            .collect();
        let half_b: Vec<u32> = members
            .iter()
            .copied()
            .filter(|&p| coord(p) >= threshold)
            .collect();
        if half_a.is_empty() || half_b.is_empty() {
            continue;
        }
        let new_label = seeds.len() as u32;
        for &p in &half_b {
            labels[p as usize] = new_label;
        }
        seeds[i] = seed_from_members(&half_a, img, field, area_elems);
        seeds.push(seed_from_members(&half_b, img, field, area_elems));
        lists[i] = half_a;
        lists.push(half_b);
    }
}
