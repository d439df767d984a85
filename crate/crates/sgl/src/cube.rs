//! In-memory multi-band image cube and per-pixel ground-truth labels.
//!
//! A cube is a dense `width x height x bands` block of `f32` samples. Samples
//! are stored pixel-interleaved (all bands of a pixel contiguous) so that
//! spectrum access — the dominant pattern downstream — is a plain slice.
//! On-disk layout is band-sequential; the conversion lives in [`crate::io`].

use crate::error::{Error, Result};

/// Dense multi-band raster with `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperspectralCube {
    width: usize,
    height: usize,
    bands: usize,
    /// Pixel-interleaved samples: `samples[(y * width + x) * bands + b]`.
    samples: Vec<f32>,
    band_names: Option<Vec<String>>,
}

impl HyperspectralCube {
    /// Build a cube from pixel-interleaved samples, validating shape and
    /// finiteness. The first NaN/Inf sample is reported with its coordinates.
    pub fn from_samples(
        width: usize,
        height: usize,
        bands: usize,
        samples: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::Dimension(format!(
                "cube dimensions must be positive, got {width}x{height}x{bands}"
            )));
        }
        let expected = width * height * bands;
        if samples.len() != expected {
            return Err(Error::Dimension(format!(
                "cube of {width}x{height}x{bands} needs {expected} samples, got {}",
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            let pixel = pos / bands;
            return Err(Error::NonFinite {
                x: pixel % width,
                y: pixel / width,
                band: pos % bands,
            });
        }
        Ok(Self {
            width,
            height,
            bands,
            samples,
            band_names: None,
        })
    }

    /// Attach per-band names (length must match the band count).
    pub fn with_band_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.bands {
            return Err(Error::Dimension(format!(
                "{} band names for {} bands",
                names.len(),
                self.bands
            )));
        }
        self.band_names = Some(names);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Number of pixels (`width * height`).
    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn band_names(&self) -> Option<&[String]> {
        self.band_names.as_deref()
    }

    /// Single sample value at `(x, y, band)`.
    pub fn value(&self, x: usize, y: usize, band: usize) -> f32 {
        debug_assert!(x < self.width && y < self.height && band < self.bands);
        self.samples[(y * self.width + x) * self.bands + band]
    }

    /// Full spectrum of the pixel at `(x, y)` as a contiguous slice.
    pub fn spectrum(&self, x: usize, y: usize) -> &[f32] {
        self.spectrum_at(y * self.width + x)
    }

    /// Full spectrum of the pixel with row-major index `pixel`.
    pub fn spectrum_at(&self, pixel: usize) -> &[f32] {
        let start = pixel * self.bands;
        &self.samples[start..start + self.bands]
    }

    /// All samples, pixel-interleaved.
    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    /// Return a copy with the listed 0-based band indices removed.
    /// Duplicate indices are tolerated; out-of-range indices are an error.
    pub fn drop_bands(&self, exclude: &[usize]) -> Result<Self> {
        if exclude.is_empty() {
            return Ok(self.clone());
        }
        let mut drop = vec![false; self.bands];
        for &b in exclude {
            if b >= self.bands {
                return Err(Error::Config(format!(
                    "exclude_bands index {b} out of range for {} bands",
                    self.bands
                )));
            }
            drop[b] = true;
        }
        let kept: Vec<usize> = (0..self.bands).filter(|&b| !drop[b]).collect();
        if kept.is_empty() {
            return Err(Error::Config(
                "exclude_bands removes every band".to_string(),
            ));
        }
        let mut samples = Vec::with_capacity(self.num_pixels() * kept.len());
        for pixel in 0..self.num_pixels() {
            let spectrum = self.spectrum_at(pixel);
            samples.extend(kept.iter().map(|&b| spectrum[b]));
        }
        let band_names = self
            .band_names
            .as_ref()
            .map(|names| kept.iter().map(|&b| names[b].clone()).collect());
        Ok(Self {
            width: self.width,
            height: self.height,
            bands: kept.len(),
            samples,
            band_names,
        })
    }
}

/// Per-pixel class labels aligned with a cube. Label `0` means "unlabeled";
/// classes are numbered `1..=num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    width: usize,
    height: usize,
    labels: Vec<u16>,
    num_classes: u16,
}

impl GroundTruth {
    /// Build a label raster. When `num_classes` is `None` it is inferred as
    /// the maximum label present; when given, every label must be `<=` it.
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u16>,
        num_classes: Option<u16>,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "label raster of {width}x{height} needs {} entries, got {}",
                width * height,
                labels.len()
            )));
        }
        let max_label = labels.iter().copied().max().unwrap_or(0);
        let num_classes = match num_classes {
            Some(c) => {
                if max_label > c {
                    return Err(Error::Data(format!(
                        "label {max_label} exceeds declared num_classes {c}"
                    )));
                }
                c
            }
            None => max_label,
        };
        Ok(Self {
            width,
            height,
            labels,
            num_classes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn label(&self, x: usize, y: usize) -> u16 {
        debug_assert!(x < self.width && y < self.height);
        self.labels[y * self.width + x]
    }

    /// Row-major label raster.
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    /// Number of pixels carrying a non-zero label.
    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}
