//! Seeded selection of training pixels from a ground-truth raster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::GroundTruth;
use crate::error::{Error, Result};

/// One labeled training pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingSample {
    pub x: usize,
    pub y: usize,
    pub class: u16,
}

/// A reproducible draw of training pixels, stratified by class.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    samples: Vec<TrainingSample>,
    per_class: usize,
    seed: u64,
    /// Classes that had fewer than `per_class` labeled pixels (all taken).
    short_classes: Vec<u16>,
}

impl TrainingSet {
    pub fn samples(&self) -> &[TrainingSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Classes whose full labeled population was smaller than the request.
    pub fn short_classes(&self) -> &[u16] {
        &self.short_classes
    }

    /// Row-major boolean mask of training pixels.
    pub fn mask(&self, width: usize, height: usize) -> Vec<bool> {
        let mut mask = vec![false; width * height];
        for s in &self.samples {
            mask[s.y * width + s.x] = true;
        }
        mask
    }
}

/// Draw `per_class` training pixels per class, uniformly without replacement.
///
/// Classes are processed in ascending order from a single ChaCha stream, so a
/// given `(ground truth, per_class, seed)` always yields the same set. Classes
/// with fewer than `per_class` labeled pixels contribute all of them and are
/// recorded in [`TrainingSet::short_classes`].
pub fn sample_training_pixels(
    gt: &GroundTruth,
    per_class: usize,
    seed: u64,
) -> Result<TrainingSet> {
    if per_class == 0 {
        return Err(Error::Config("per_class must be at least 1".to_string()));
    }
    if gt.labeled_count() == 0 {
        return Err(Error::Data(
            "ground truth has no labeled pixels".to_string(),
        ));
    }

    let width = gt.width();
    let num_classes = gt.num_classes() as usize;
    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); num_classes];
    for (idx, &label) in gt.labels().iter().enumerate() {
        if label != 0 {
            by_class[label as usize - 1].push(idx as u32);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut short_classes = Vec::new();
    for (class_idx, pixels) in by_class.iter_mut().enumerate() {
        let class = class_idx as u16 + 1;
        if pixels.is_empty() {
            short_classes.push(class);
            continue;
        }
        let take = per_class.min(pixels.len());
        if take < per_class {
            short_classes.push(class);
        }
        // Partial Fisher-Yates: after i swaps the prefix is a uniform draw.
        for i in 0..take {
            let j = rng.gen_range(i..pixels.len());
            pixels.swap(i, j);
        }
        let mut chosen: Vec<u32> = pixels[..take].to_vec();
        chosen.sort_unstable();
        for idx in chosen {
            samples.push(TrainingSample {
                x: idx as usize % width,
                y: idx as usize / width,
                class,
            });
        }
    }

    Ok(TrainingSet {
        samples,
        per_class,
        seed,
        short_classes,
    })
}
