//! Superpixel segmentation of a reduced image.
//!
//! The segmenter is a k-means-style loop over seeds that live on a manifold
//! blending spectral values, local covariance structure, and scaled spatial
//! position. Each iteration assigns pixels to seeds within a local search
//! window, then updates seed states and splits/merges seeds whose manifold
//! area drifts far from the mean. A connectivity pass at the end guarantees
//! every superpixel is a 4-connected component within configured size bounds.
//!
//! Organized as:
//! - [`covariance`]: per-pixel covariance descriptors and the matrix
//!   log/exp helpers they rely on,
//! - [`hms`]: seed initialization, the manifold distance, and the main loop,
//! - [`connectivity`]: the final repair pass.

mod connectivity;
mod covariance;
mod hms;

pub use connectivity::enforce_connectivity;
pub use covariance::{exp_matrix, log_matrix, CovarianceField};
pub use hms::{hms_segment, pixel_to_seed_distance, spectral_merge, HmsResult, SeedState};

use crate::error::{Error, Result};

/// Parameters of the segmentation loop.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HmsConfig {
    /// Number of seeds planted initially.
    pub k_init: usize,
    /// Spatial compactness weight `m`; the spatial term of the distance is
    /// scaled by `m / sqrt(n / k_init)`.
    pub compactness: f64,
    /// Side length of the (odd) covariance estimation window.
    pub cov_window: usize,
    /// Diagonal loading added to each local covariance, scaled by its mean
    /// eigenvalue (used as-is for zero-variance windows).
    pub cov_regularization: f64,
    /// Maximum number of assignment iterations.
    pub max_iters: usize,
    /// Smallest superpixel size the connectivity pass will leave behind.
    pub min_size: usize,
    /// Largest superpixel size, as a multiple of the mean size `n / k_init`.
    pub max_size_factor: f64,
    /// Stop when the relative energy decrease falls below this value.
    pub energy_decrease_threshold: f64,
}

impl Default for HmsConfig {
    fn default() -> Self {
        Self {
            k_init: 100,
            compactness: 10.0,
            cov_window: 5,
            cov_regularization: 1e-6,
            max_iters: 10,
            min_size: 8,
            max_size_factor: 10.0,
            energy_decrease_threshold: 0.10,
        }
    }
}

impl HmsConfig {
    /// Check the configuration against an image of `width x height` pixels.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let n = width * height;
        if self.k_init < 2 {
            return Err(Error::Config("k_init must be at least 2".to_string()));
        }
        if (n as f64) / (self.k_init as f64) < 15.0 {
            return Err(Error::Config(format!(
                "k_init {} too large for {n} pixels: mean superpixel size n/k_init must be at least 15",
                self.k_init
            )));
        }
        if !(self.compactness.is_finite() && self.compactness > 0.0) {
            return Err(Error::Config(format!(
                "compactness must be positive and finite, got {}",
                self.compactness
            )));
        }
        if self.cov_window < 3 || self.cov_window % 2 == 0 {
            return Err(Error::Config(format!(
                "cov_window must be an odd value of at least 3, got {}",
                self.cov_window
            )));
        }
        if self.cov_window > width.min(height) {
            return Err(Error::Config(format!(
                "cov_window {} exceeds the smaller image side {}",
                self.cov_window,
                width.min(height)
            )));
        }
        if !(self.cov_regularization.is_finite() && self.cov_regularization > 0.0) {
            return Err(Error::Config(format!(
                "cov_regularization must be positive and finite, got {}",
                self.cov_regularization
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".to_string()));
        }
        if self.min_size == 0 {
            return Err(Error::Config("min_size must be at least 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.energy_decrease_threshold) {
            return Err(Error::Config(format!(
                "energy_decrease_threshold must lie in [0, 1), got {}",
                self.energy_decrease_threshold
            )));
        }
        let max_size = self.max_superpixel_size(n);
        if !(max_size.is_finite() && max_size >= 2.0 * self.min_size as f64) {
            return Err(Error::Config(format!(
                "size bounds are infeasible: max size {max_size:.1} must be at least twice min_size {}",
                self.min_size
            )));
        }
        Ok(())
    }

    /// Expected seed spacing `S = sqrt(n / k_init)` in pixels.
    pub fn grid_interval(&self, num_pixels: usize) -> f64 {
        (num_pixels as f64 / self.k_init as f64).sqrt()
    }

    /// Weight applied to spatial distances: `compactness / S`.
    pub fn spatial_factor(&self, num_pixels: usize) -> f64 {
        self.compactness / self.grid_interval(num_pixels)
    }

    /// Upper size bound enforced on final superpixels.
    pub fn max_superpixel_size(&self, num_pixels: usize) -> f64 {
        self.max_size_factor * num_pixels as f64 / self.k_init as f64
    }
}

/// A complete segmentation: a label per pixel plus derived structure.
///
/// Labels are contiguous in `0..len()`. Member lists are sorted row-major and
/// the adjacency relation (4-neighborhood between superpixels) is symmetric
/// and irreflexive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    assignment: Vec<u32>,
    superpixels: Vec<Vec<u32>>,
    adjacency: Vec<Vec<u32>>,
}

impl SuperpixelMap {
    /// Build the derived structure from a per-pixel label raster. Labels must
    /// already be contiguous (`0..=max` all present); they are not renumbered.
    pub fn from_assignment(width: usize, height: usize, assignment: Vec<u32>) -> Result<Self> {
        if assignment.len() != width * height {
            return Err(Error::Dimension(format!(
                "assignment of {width}x{height} needs {} entries, got {}",
                width * height,
                assignment.len()
            )));
        }
        let count = match assignment.iter().max() {
            Some(&m) => m as usize + 1,
            None => {
                return Err(Error::Dimension(
                    "assignment must cover at least one pixel".to_string(),
                ))
            }
        };
        let mut superpixels: Vec<Vec<u32>> = vec![Vec::new(); count];
        for (pixel, &label) in assignment.iter().enumerate() {
            superpixels[label as usize].push(pixel as u32);
        }
        if let Some(gap) = superpixels.iter().position(Vec::is_empty) {
            return Err(Error::Data(format!(
                "superpixel labels are not contiguous: label {gap} has no pixels"
            )));
        }

        let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); count];
        for y in 0..height {
            for x in 0..width {
                let here = assignment[y * width + x];
                if x + 1 < width {
                    let right = assignment[y * width + x + 1];
                    if right != here {
                        adjacency[here as usize].push(right);
                        adjacency[right as usize].push(here);
                    }
                }
                if y + 1 < height {
                    let below = assignment[(y + 1) * width + x];
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

        Ok(Self {
            width,
            height,
            assignment,
            superpixels,
            adjacency,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of superpixels.
    pub fn len(&self) -> usize {
        self.superpixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.superpixels.is_empty()
    }

    /// Per-pixel labels, row-major.
    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Row-major sorted member pixels of superpixel `i`.
    pub fn pixels_of(&self, i: usize) -> &[u32] {
        &self.superpixels[i]
    }

    /// Sorted labels of superpixels sharing a 4-neighbor edge with `i`.
    pub fn neighbors_of(&self, i: usize) -> &[u32] {
        &self.adjacency[i]
    }

    /// Re-derive and check every structural invariant: the member lists
    /// partition the image, each superpixel is 4-connected, and adjacency is
    /// symmetric and irreflexive.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.assignment.len()];
        let mut total = 0usize;
        for (label, pixels) in self.superpixels.iter().enumerate() {
            if pixels.is_empty() {
                return Err(Error::Data(format!("superpixel {label} is empty")));
            }
            total += pixels.len();
            for &p in pixels {
                let p = p as usize;
                if p >= seen.len() || seen[p] {
                    return Err(Error::Data(format!(
                        "pixel {p} appears in more than one superpixel"
                    )));
                }
                seen[p] = true;
                if self.assignment[p] as usize != label {
                    return Err(Error::Data(format!(
                        "pixel {p} listed under superpixel {label} but assigned {}",
                        self.assignment[p]
                    )));
                }
            }
        }
        if total != self.assignment.len() {
            return Err(Error::Data(format!(
                "superpixels cover {total} of {} pixels",
                self.assignment.len()
            )));
        }

        for label in 0..self.len() {
            if !self.is_connected(label) {
                return Err(Error::Data(format!(
                    "superpixel {label} is not 4-connected"
                )));
            }
        }

        for (i, neighbors) in self.adjacency.iter().enumerate() {
            for &j in neighbors {
                if j as usize == i {
                    return Err(Error::Data(format!("superpixel {i} adjacent to itself")));
                }
                if !self.adjacency[j as usize].contains(&(i as u32)) {
                    return Err(Error::Data(format!(
                        "adjacency not symmetric between {i} and {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn is_connected(&self, label: usize) -> bool {
        let pixels = &self.superpixels[label];
        let mut visited = std::collections::HashSet::with_capacity(pixels.len());
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(pixels[0]);
        visited.insert(pixels[0]);
        let (w, h) = (self.width as u32, self.height as u32);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            let mut push = |q: u32| {
                if self.assignment[q as usize] as usize == label && visited.insert(q) {
                    queue.push_back(q);
                }
            };
            if x > 0 {
                push(p - 1);
            }
            if x + 1 < w {
                push(p + 1);
            }
            if y > 0 {
                push(p - w);
            }
            if y + 1 < h {
                push(p + w);
            }
        }
        visited.len() == pixels.len()
    }
}

/// Squared Euclidean distance between equal-length slices.
pub(crate) fn euclid_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance between equal-length slices (for flattened matrices
/// this is the Frobenius distance).
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    euclid_sq(a, b).sqrt()
}
