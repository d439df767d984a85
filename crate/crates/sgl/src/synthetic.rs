//! Synthetic labeled scenes: rectangular class tiles plus Gaussian band noise.
//!
//! Used by the test suites and the `synth` subcommand to produce scenes with
//! known structure: the image is cut into a `tiles_x x tiles_y` grid, each tile
//! carries one class spectrum, and i.i.d. `N(0, sigma^2)` noise is added per
//! band. Generation is fully determined by the spec (including its seed).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cube::{GroundTruth, HyperspectralCube};
use crate::error::{Error, Result};
use crate::io::Scene;

/// Rectangular tiling: tile `(tx, ty)` covers pixels with
/// `x in [round(W*tx/tiles_x), round(W*(tx+1)/tiles_x))` and analogously in
/// `y`, and is assigned class `(ty * tiles_x + tx) mod num_classes + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RegionLayout {
    pub tiles_x: usize,
    pub tiles_y: usize,
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSceneSpec {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub num_classes: u16,
    /// One spectrum per class, each of length `bands`.
    pub class_spectra: Vec<Vec<f32>>,
    /// Standard deviation of the additive per-band Gaussian noise.
    pub noise_sigma: f64,
    pub layout: RegionLayout,
    pub seed: u64,
}

/// Smallest pairwise Euclidean distance between class spectra.
pub fn min_spectrum_separation(class_spectra: &[Vec<f32>]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..class_spectra.len() {
        for j in i + 1..class_spectra.len() {
            let d2: f64 = class_spectra[i]
                .iter()
                .zip(&class_spectra[j])
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum();
            min = min.min(d2.sqrt());
        }
    }
    min
}

fn tile_edges(extent: usize, tiles: usize) -> Vec<usize> {
    (0..=tiles)
        .map(|t| ((extent as f64 * t as f64) / tiles as f64).round() as usize)
        .collect()
}

impl SyntheticSceneSpec {
    /// Class of the pixel at `(x, y)` under the tile layout.
    pub fn class_at(&self, x: usize, y: usize) -> u16 {
        let xs = tile_edges(self.width, self.layout.tiles_x);
        let ys = tile_edges(self.height, self.layout.tiles_y);
        let tx = (0..self.layout.tiles_x)
            .find(|&t| x < xs[t + 1])
            .unwrap_or(self.layout.tiles_x - 1);
        let ty = (0..self.layout.tiles_y)
            .find(|&t| y < ys[t + 1])
            .unwrap_or(self.layout.tiles_y - 1);
        ((ty * self.layout.tiles_x + tx) % self.num_classes as usize) as u16 + 1
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return Err(Error::Config(format!(
                "scene dimensions must be positive, got {}x{}x{}",
                self.width, self.height, self.bands
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be at least 1".to_string()));
        }
        if self.layout.tiles_x == 0 || self.layout.tiles_y == 0 {
            return Err(Error::Config(
                "layout must have at least one tile".to_string(),
            ));
        }
        if self.class_spectra.len() != self.num_classes as usize {
            return Err(Error::Dimension(format!(
                "{} class spectra for {} classes",
                self.class_spectra.len(),
                self.num_classes
            )));
        }
        for (i, s) in self.class_spectra.iter().enumerate() {
            if s.len() != self.bands {
                return Err(Error::Dimension(format!(
                    "class {} spectrum has {} bands, expected {}",
                    i + 1,
                    s.len(),
                    self.bands
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "class {} spectrum contains a non-finite value",
                    i + 1
                )));
            }
        }
        if self.num_classes > 1 && min_spectrum_separation(&self.class_spectra) == 0.0 {
            return Err(Error::Data(
                "class spectra must be pairwise distinct".to_string(),
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Generate the scene described by `spec`.
///
/// Fails if the layout leaves any class without pixels (for example more
/// classes than tiles, or a tile of zero width).
pub fn generate_synthetic_scene(spec: &SyntheticSceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h, b) = (spec.width, spec.height, spec.bands);

    let mut labels = vec![0u16; w * h];
    let mut class_pixels = vec![0usize; spec.num_classes as usize];
    for y in 0..h {
        for x in 0..w {
            let class = spec.class_at(x, y);
            labels[y * w + x] = class;
            class_pixels[class as usize - 1] += 1;
        }
    }
    if let Some(missing) = class_pixels.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!(
            "degenerate layout: class {} is assigned zero pixels",
            missing + 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = if spec.noise_sigma > 0.0 {
        Some(
            Normal::new(0.0, spec.noise_sigma)
                .map_err(|e| Error::Config(format!("invalid noise distribution: {e}")))?,
        )
    } else {
        None
    };

    let mut samples = vec![0.0f32; w * h * b];
    for pixel in 0..w * h {
        let spectrum = &spec.class_spectra[labels[pixel] as usize - 1];
        let out = &mut samples[pixel * b..(pixel + 1) * b];
        match &noise {
            Some(dist) => {
                for (band, slot) in out.iter_mut().enumerate() {
                    *slot = (spectrum[band] as f64 + dist.sample(&mut rng)) as f32;
                }
            }
            None => out.copy_from_slice(spectrum),
        }
    }

    let cube = HyperspectralCube::from_samples(w, h, b, samples)?;
    let ground_truth = GroundTruth::new(w, h, labels, Some(spec.num_classes))?;
    Ok(Scene {
        cube,
        ground_truth: Some(ground_truth),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_class_spec(noise_sigma: f64, seed: u64) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            width: 20,
            height: 16,
            bands: 5,
            num_classes: 4,
            class_spectra: vec![
                vec![1.0, 0.0, 0.0, 0.5, 0.2],
                vec![0.0, 1.0, 0.0, 0.5, 0.8],
                vec![0.0, 0.0, 1.0, 0.1, 0.4],
                vec![0.7, 0.7, 0.0, 0.9, 0.1],
            ],
            noise_sigma,
            layout: RegionLayout {
                tiles_x: 2,
                tiles_y: 2,
            },
            seed,
        }
    }

    #[test]
    fn zero_noise_reproduces_class_spectra_exactly() {
        let spec = four_class_spec(0.0, 1);
        let scene = generate_synthetic_scene(&spec).unwrap();
        let gt = scene.ground_truth.as_ref().unwrap();
        for y in 0..spec.height {
            for x in 0..spec.width {
                let class = gt.label(x, y);
                assert_eq!(class, spec.class_at(x, y));
                assert_eq!(
                    scene.cube.spectrum(x, y),
                    spec.class_spectra[class as usize - 1].as_slice()
                );
            }
        }
        // 2x2 tiles on 20x16: quadrants of 10x8 pixels each.
        assert_eq!(gt.label(9, 7), 1);
        assert_eq!(gt.label(10, 7), 2);
        assert_eq!(gt.label(9, 8), 3);
        assert_eq!(gt.label(10, 8), 4);
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_synthetic_scene(&four_class_spec(0.3, 5)).unwrap();
        let b = generate_synthetic_scene(&four_class_spec(0.3, 5)).unwrap();
        assert_eq!(a.cube, b.cube);
        let c = generate_synthetic_scene(&four_class_spec(0.3, 6)).unwrap();
        assert_ne!(a.cube, c.cube);
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let mut spec = four_class_spec(0.1, 11);
        spec.width = 40;
        spec.height = 40;
        let scene = generate_synthetic_scene(&spec).unwrap();
        // Sample variance of band 0 within the class-1 tile (20x20 pixels).
        let mean_val = spec.class_spectra[0][0] as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let n = 20 * 20;
        for y in 0..20 {
            for x in 0..20 {
                let d = scene.cube.value(x, y, 0) as f64 - mean_val;
                sum += d;
                sum_sq += d * d;
            }
        }
        let var = (sum_sq - sum * sum / n as f64) / (n as f64 - 1.0);
        let expected = 0.1f64 * 0.1;
        assert!(
            (var - expected).abs() < 0.2 * expected,
            "sample variance {var:.5} not within 20% of {expected:.5}"
        );
    }

    #[test]
    fn rejects_layout_leaving_a_class_empty() {
        let mut spec = four_class_spec(0.0, 1);
        // One tile cannot host four classes.
        spec.layout = RegionLayout {
            tiles_x: 1,
            tiles_y: 1,
        };
        assert!(matches!(
            generate_synthetic_scene(&spec).unwrap_err(),
            Error::Data(_)
        ));
    }

    #[test]
    fn rejects_duplicate_spectra_and_bad_sigma() {
        let mut spec = four_class_spec(0.0, 1);
        spec.class_spectra[1] = spec.class_spectra[0].clone();
        assert!(matches!(
            generate_synthetic_scene(&spec).unwrap_err(),
            Error::Data(_)
        ));

        let mut spec = four_class_spec(-0.5, 1);
        spec.noise_sigma = -0.5;
        assert!(matches!(
            generate_synthetic_scene(&spec).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn min_separation_is_the_smallest_pairwise_distance() {
        let spectra = vec![
            vec![0.0f32, 0.0],
            vec![3.0, 4.0], // distance 5 from class 1
            vec![3.0, 1.0], // distance 3 from class 2
        ];
        assert!((min_spectrum_separation(&spectra) - 3.0).abs() < 1e-12);
    }
}
