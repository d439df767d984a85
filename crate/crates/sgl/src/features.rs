//! Per-superpixel features: mean spectra, neighbor-weighted spectra, and
//! centroids.
//!
//! Each superpixel is summarized three ways: the mean reduced spectrum of
//! its pixels, a weighted combination of the mean spectra of its *adjacent*
//! superpixels (weights are a softmax of negative squared spectral
//! distances, scaled by the kernel parameter `h`), and the centroid of its
//! pixel positions. Centroids use integer pixel-center coordinates (no +0.5
//! offset); only relative distances between them are ever consumed.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pca::ReducedImage;
use crate::superpixel::euclid_sq;
use crate::superpixel::SuperpixelMap;

/// The three per-superpixel feature families, extracted together.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelFeatures {
    mean: Vec<Vec<f64>>,
    weighted: Vec<Vec<f64>>,
    centroid: Vec<(f64, f64)>,
    h: f64,
}

impl SuperpixelFeatures {
    /// Extract all three feature families from a segmentation.
    pub fn extract(map: &SuperpixelMap, img: &ReducedImage, h: f64) -> Result<Self> {
        let mean = mean_features(map, img);
        let weighted = weighted_features(map, &mean, h)?;
        let centroid = centroids(map);
        Ok(Self {
            mean,
            weighted,
            centroid,
            h,
        })
    }

    /// Assemble features directly from per-superpixel vectors, e.g. to
    /// drive graph construction from externally computed features. Only
    /// shapes are checked, not the extraction invariants.
    pub fn from_parts(
        mean: Vec<Vec<f64>>,
        weighted: Vec<Vec<f64>>,
        centroid: Vec<(f64, f64)>,
        h: f64,
    ) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Config(format!(
                "feature kernel h must be positive and finite, got {h}"
            )));
        }
        if mean.len() != weighted.len() || mean.len() != centroid.len() {
            return Err(Error::Dimension(format!(
                "feature families disagree on the superpixel count: {} mean, {} weighted, {} centroid",
                mean.len(),
                weighted.len(),
                centroid.len()
            )));
        }
        let dims = mean.first().map_or(0, Vec::len);
        if mean.iter().chain(&weighted).any(|v| v.len() != dims) {
            return Err(Error::Dimension(
                "all mean and weighted vectors must share one dimensionality".to_string(),
            ));
        }
        Ok(Self {
            mean,
            weighted,
            centroid,
            h,
        })
    }

    /// Number of superpixels.
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Spectral dimensionality of the mean and weighted features.
    pub fn dims(&self) -> usize {
        self.mean.first().map_or(0, Vec::len)
    }

    /// Kernel scalar the weighted features were built with.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Mean spectrum of superpixel `i`.
    pub fn mean_of(&self, i: usize) -> &[f64] {
        &self.mean[i]
    }

    /// Neighbor-weighted spectrum of superpixel `i`.
    pub fn weighted_of(&self, i: usize) -> &[f64] {
        &self.weighted[i]
    }

    /// Pixel-position centroid of superpixel `i`.
    pub fn centroid_of(&self, i: usize) -> (f64, f64) {
        self.centroid[i]
    }
}

/// Mean reduced spectrum of each superpixel.
///
/// Panics if `map` and `img` disagree on the image dimensions; a valid map
/// over `img` is a precondition.
pub fn mean_features(map: &SuperpixelMap, img: &ReducedImage) -> Vec<Vec<f64>> {
    assert_eq!(
        (map.width(), map.height()),
        (img.width(), img.height()),
        "superpixel map and image dimensions disagree"
    );
    let a = img.dims();
    (0..map.len())
        .into_par_iter()
        .map(|i| {
            let pixels = map.pixels_of(i);
            let mut mean = vec![0.0f64; a];
            for &p in pixels {
                for (k, &v) in img.spectrum_at(p as usize).iter().enumerate() {
                    mean[k] += v;
                }
            }
            let c = pixels.len() as f64;
            mean.iter_mut().for_each(|v| *v /= c);
            mean
        })
        .collect()
}

/// Normalized weights of superpixel `i` over its adjacent superpixels, in
/// the order of [`SuperpixelMap::neighbors_of`]: a softmax of
/// `-‖mean_z - mean_i‖² / h`. Positive and summing to one.
pub fn neighbor_weights(
    i: usize,
    map: &SuperpixelMap,
    means: &[Vec<f64>],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!(
            "feature kernel h must be positive and finite, got {h}"
        )));
    }
    let neighbors = map.neighbors_of(i);
    if neighbors.is_empty() {
        return Err(Error::Data(format!(
            "superpixel {i} has no adjacent superpixel; weighted features need at least two superpixels"
        )));
    }
    let scores: Vec<f64> = neighbors
        .iter()
        .map(|&z| euclid_sq(&means[z as usize], &means[i]))
        .collect();
    // Shift by the smallest squared distance before exponentiating so the
    // largest term is exactly 1; the normalization cancels the shift.
    let shift = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = scores.iter().map(|&s| (-(s - shift) / h).exp()).collect();
    let norm: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= norm);
    Ok(weights)
}

/// Neighbor-weighted spectrum of each superpixel: the convex combination of
/// adjacent superpixels' mean spectra under [`neighbor_weights`].
///
/// Fails when any superpixel has no neighbor (a single-superpixel map) or
/// when `h` is invalid.
pub fn weighted_features(map: &SuperpixelMap, means: &[Vec<f64>], h: f64) -> Result<Vec<Vec<f64>>> {
    assert_eq!(
        means.len(),
        map.len(),
        "one mean vector per superpixel is required"
    );
    let a = means.first().map_or(0, Vec::len);
    (0..map.len())
        .into_par_iter()
        .map(|i| {
            let weights = neighbor_weights(i, map, means, h)?;
            let mut out = vec![0.0f64; a];
            for (&z, &w) in map.neighbors_of(i).iter().zip(&weights) {
                for (k, &v) in means[z as usize].iter().enumerate() {
                    out[k] += w * v;
                }
            }
            Ok(out)
        })
        .collect()
}

/// Pixel-position centroid of each superpixel.
pub fn centroids(map: &SuperpixelMap) -> Vec<(f64, f64)> {
    let w = map.width();
    (0..map.len())
        .into_par_iter()
        .map(|i| {
            let pixels = map.pixels_of(i);
            let (mut cx, mut cy) = (0.0f64, 0.0f64);
            for &p in pixels {
                cx += (p as usize % w) as f64;
                cy += (p as usize / w) as f64;
            }
            let c = pixels.len() as f64;
            (cx / c, cy / c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A pseudo-random partition: nearest of `k` fixed sites (ties to the
    /// lowest site), with the first `k` pixels pinned so every label occurs.
    fn random_map(w: usize, h: usize, k: usize, seed: u64) -> SuperpixelMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sites: Vec<(f64, f64)> = (0..k)
            .map(|_| (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64)))
            .collect();
        let mut assignment = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let mut best = (f64::INFINITY, 0u32);
                for (s, &(sx, sy)) in sites.iter().enumerate() {
                    let d = (x as f64 - sx).powi(2) + (y as f64 - sy).powi(2);
                    if d < best.0 {
                        best = (d, s as u32);
                    }
                }
                assignment.push(best.1);
            }
        }
        for (p, a) in assignment.iter_mut().take(k).enumerate() {
            *a = p as u32;
        }
        SuperpixelMap::from_assignment(w, h, assignment).unwrap()
    }

    fn random_image(w: usize, h: usize, dims: usize, seed: u64) -> ReducedImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * dims)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        ReducedImage::from_data(w, h, dims, data).unwrap()
    }

    #[test]
    fn means_and_centroids_match_direct_summation() {
        let map = random_map(14, 11, 6, 3);
        let img = random_image(14, 11, 3, 4);
        let means = mean_features(&map, &img);
        let cents = centroids(&map);

        // Oracle: one pass over the raster, accumulating by label.
        let mut sums = vec![vec![0.0f64; 3]; map.len()];
        let mut pos = vec![(0.0f64, 0.0f64); map.len()];
        let mut counts = vec![0usize; map.len()];
        for y in 0..11 {
            for x in 0..14 {
                let l = map.assignment()[y * 14 + x] as usize;
                counts[l] += 1;
                pos[l].0 += x as f64;
                pos[l].1 += y as f64;
                for (k, &v) in img.spectrum(x, y).iter().enumerate() {
                    sums[l][k] += v;
                }
            }
        }
        for i in 0..map.len() {
            let c = counts[i] as f64;
            for k in 0..3 {
                assert_relative_eq!(means[i][k], sums[i][k] / c, epsilon = 1e-12);
            }
            assert_relative_eq!(cents[i].0, pos[i].0 / c, epsilon = 1e-12);
            assert_relative_eq!(cents[i].1, pos[i].1 / c, epsilon = 1e-12);
        }
    }

    #[test]
    fn singleton_and_pair_means() {
        // Two singleton superpixels side by side.
        let map = SuperpixelMap::from_assignment(2, 1, vec![0, 1]).unwrap();
        let img = ReducedImage::from_data(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let means = mean_features(&map, &img);
        assert_eq!(means[0], vec![1.0, 2.0]);
        assert_eq!(means[1], vec![3.0, 4.0]);

        // Both pixels in one superpixel: the arithmetic mean.
        let map = SuperpixelMap::from_assignment(2, 1, vec![0, 0]).unwrap();
        let means = mean_features(&map, &img);
        assert_eq!(means[0], vec![2.0, 3.0]);
    }

    #[test]
    fn centroid_of_symmetric_corners_is_the_center() {
        // Label 0 on the four corners of a 3x3 grid, label 1 elsewhere.
        let assignment = vec![0, 1, 0, 1, 1, 1, 0, 1, 0];
        let map = SuperpixelMap::from_assignment(3, 3, assignment).unwrap();
        let cents = centroids(&map);
        assert_eq!(cents[0], (1.0, 1.0));

        // A singleton sits exactly on its pixel.
        let mut assignment = vec![0u32; 8 * 4];
        assignment[3 * 8 + 7] = 1;
        let map = SuperpixelMap::from_assignment(8, 4, assignment).unwrap();
        assert_eq!(centroids(&map)[1], (7.0, 3.0));
    }

    #[test]
    fn weighted_features_match_plain_softmax_evaluation() {
        // Three singletons in a row; the middle one has neighbors at squared
        // spectral distances 1.0 and 4.0.
        let map = SuperpixelMap::from_assignment(3, 1, vec![0, 1, 2]).unwrap();
        let img = ReducedImage::from_data(3, 1, 1, vec![1.0, 0.0, -2.0]).unwrap();
        let means = mean_features(&map, &img);
        let wf = weighted_features(&map, &means, 15.0).unwrap();

        // Oracle: the unshifted textbook softmax, written out by hand.
        let e1 = (-1.0f64 / 15.0).exp();
        let e4 = (-4.0f64 / 15.0).exp();
        let expected = (e1 * 1.0 + e4 * -2.0) / (e1 + e4);
        assert_relative_eq!(wf[1][0], expected, epsilon = 1e-12);

        let weights = neighbor_weights(1, &map, &means, 15.0).unwrap();
        assert_relative_eq!(weights[0], e1 / (e1 + e4), epsilon = 1e-12);
        assert_relative_eq!(weights[1], e4 / (e1 + e4), epsilon = 1e-12);

        // A single neighbor gets weight exactly 1, copying its mean.
        assert_eq!(wf[0], means[1]);
        assert_eq!(neighbor_weights(0, &map, &means, 15.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn equal_neighbor_means_give_exactly_uniform_weights() {
        // Center superpixel surrounded by four neighbors with identical
        // means (value 2.0); the center itself differs.
        let assignment = vec![1, 1, 2, 0, 0, 2, 3, 4, 4];
        let map = SuperpixelMap::from_assignment(3, 3, assignment).unwrap();
        let mut data = vec![2.0f64; 9];
        data[3] = 7.0;
        data[4] = 7.0;
        let img = ReducedImage::from_data(3, 3, 1, data).unwrap();
        let means = mean_features(&map, &img);
        let weights = neighbor_weights(0, &map, &means, 15.0).unwrap();
        assert_eq!(weights, vec![0.25, 0.25, 0.25, 0.25]);
        let wf = weighted_features(&map, &means, 15.0).unwrap();
        assert_relative_eq!(wf[0][0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn weights_are_positive_normalized_and_flatten_as_h_grows() {
        let map = random_map(16, 12, 7, 11);
        let img = random_image(16, 12, 3, 12);
        let means = mean_features(&map, &img);
        for i in 0..map.len() {
            let weights = neighbor_weights(i, &map, &means, 15.0).unwrap();
            assert!(weights.iter().all(|&w| w > 0.0));
            assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);

            // h -> infinity flattens the softmax to uniform.
            let flat = neighbor_weights(i, &map, &means, 1e12).unwrap();
            let uniform = 1.0 / flat.len() as f64;
            for &w in &flat {
                assert!((w - uniform).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn weighted_features_are_convex_combinations_of_neighbor_means() {
        let map = random_map(15, 13, 6, 21);
        let img = random_image(15, 13, 4, 22);
        let means = mean_features(&map, &img);
        let wf = weighted_features(&map, &means, 15.0).unwrap();
        for (i, wfi) in wf.iter().enumerate() {
            for k in 0..4 {
                let neighbor_vals = map.neighbors_of(i).iter().map(|&z| means[z as usize][k]);
                let lo = neighbor_vals.clone().fold(f64::INFINITY, f64::min);
                let hi = neighbor_vals.fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    (lo - 1e-12..=hi + 1e-12).contains(&wfi[k]),
                    "component {k} of superpixel {i} is {} outside [{lo}, {hi}]",
                    wfi[k]
                );
            }
        }
    }

    #[test]
    fn permuting_labels_permutes_features() {
        let map = random_map(13, 9, 5, 31);
        let img = random_image(13, 9, 2, 32);
        let perm: Vec<u32> = vec![3, 0, 4, 1, 2];
        let permuted_assignment: Vec<u32> =
            map.assignment().iter().map(|&l| perm[l as usize]).collect();
        let permuted = SuperpixelMap::from_assignment(13, 9, permuted_assignment).unwrap();

        let base = SuperpixelFeatures::extract(&map, &img, 15.0).unwrap();
        let moved = SuperpixelFeatures::extract(&permuted, &img, 15.0).unwrap();
        for (i, &to) in perm.iter().enumerate() {
            let j = to as usize;
            assert_eq!(base.mean_of(i), moved.mean_of(j));
            assert_eq!(base.centroid_of(i), moved.centroid_of(j));
            for k in 0..2 {
                assert_relative_eq!(
                    base.weighted_of(i)[k],
                    moved.weighted_of(j)[k],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn single_superpixel_map_is_rejected() {
        let map = SuperpixelMap::from_assignment(4, 4, vec![0; 16]).unwrap();
        let img = random_image(4, 4, 2, 41);
        let means = mean_features(&map, &img);
        let err = weighted_features(&map, &means, 15.0).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn invalid_h_is_rejected() {
        let map = SuperpixelMap::from_assignment(2, 1, vec![0, 1]).unwrap();
        let img = ReducedImage::from_data(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let means = mean_features(&map, &img);
        for h in [0.0, -3.0, f64::NAN, f64::INFINITY] {
            let err = weighted_features(&map, &means, h).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "h = {h} was accepted");
        }
    }
}
