//! Spectral dimensionality reduction by principal component analysis.
//!
//! The model is fit on the band-by-band sample covariance of all pixels
//! (centering only by default; optional per-band standardization). The number
//! of retained components is the smallest count whose cumulative explained
//! variance ratio reaches the configured threshold. Component signs are fixed
//! by making each component's largest-magnitude coefficient positive, so a
//! fit is a pure function of its input.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cube::HyperspectralCube;
use crate::error::{Error, Result};

/// Options for [`pca_fit`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PcaOptions {
    /// Retain the smallest number of components whose cumulative explained
    /// variance ratio reaches this value. Must lie in `(0, 1]`.
    pub variance_threshold: f64,
    /// Divide each centered band by its standard deviation before fitting.
    pub standardize: bool,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            variance_threshold: 0.999,
            standardize: false,
        }
    }
}

/// A fitted PCA basis.
#[derive(Debug, Clone)]
pub struct PcaModel {
    /// Per-band mean of the training cube.
    mean: DVector<f64>,
    /// Per-band divisors when standardization was requested.
    band_scale: Option<DVector<f64>>,
    /// Retained components, one per row; rows are orthonormal.
    components: DMatrix<f64>,
    /// Eigenvalues of the retained components, descending.
    eigenvalues: DVector<f64>,
    /// Explained variance ratio of the retained components.
    explained_variance_ratio: Vec<f64>,
    /// Sum of all eigenvalues of the fitted covariance.
    total_variance: f64,
    /// Set when the cube had no spectral variance at all. The single
    /// retained component is then the first canonical basis vector and its
    /// explained variance ratio is 1 by convention.
    zero_variance: bool,
}

impl PcaModel {
    /// Number of retained components.
    pub fn dims(&self) -> usize {
        self.components.nrows()
    }

    /// Number of input bands the model was fit on.
    pub fn bands(&self) -> usize {
        self.components.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Retained components as rows.
    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn zero_variance(&self) -> bool {
        self.zero_variance
    }
}

/// A reduced image: per-pixel coefficient vectors in the PCA basis,
/// stored pixel-interleaved in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedImage {
    width: usize,
    height: usize,
    dims: usize,
    data: Vec<f64>,
}

impl ReducedImage {
    /// Build a reduced image from raw pixel-interleaved data (mainly for
    /// tests and synthetic fixtures).
    pub fn from_data(width: usize, height: usize, dims: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || dims == 0 {
            return Err(Error::Dimension(format!(
                "reduced image dimensions must be positive, got {width}x{height}x{dims}"
            )));
        }
        if data.len() != width * height * dims {
            return Err(Error::Dimension(format!(
                "reduced image of {width}x{height}x{dims} needs {} values, got {}",
                width * height * dims,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            dims,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of retained spectral dimensions per pixel.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn spectrum(&self, x: usize, y: usize) -> &[f64] {
        self.spectrum_at(y * self.width + x)
    }

    pub fn spectrum_at(&self, pixel: usize) -> &[f64] {
        let start = pixel * self.dims;
        &self.data[start..start + self.dims]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Fit a PCA basis on every pixel of `cube`.
pub fn pca_fit(cube: &HyperspectralCube, options: &PcaOptions) -> Result<PcaModel> {
    if !(options.variance_threshold > 0.0 && options.variance_threshold <= 1.0) {
        return Err(Error::Config(format!(
            "variance_threshold must lie in (0, 1], got {}",
            options.variance_threshold
        )));
    }
    let n = cube.num_pixels();
    if n < 2 {
        return Err(Error::Data("PCA needs at least two pixels".to_string()));
    }
    let b = cube.bands();

    let mut mean = DVector::<f64>::zeros(b);
    for pixel in 0..n {
        for (band, &v) in cube.spectrum_at(pixel).iter().enumerate() {
            mean[band] += v as f64;
        }
    }
    mean /= n as f64;

    let band_scale = if options.standardize {
        let mut var = DVector::<f64>::zeros(b);
        for pixel in 0..n {
            for (band, &v) in cube.spectrum_at(pixel).iter().enumerate() {
                let d = v as f64 - mean[band];
                var[band] += d * d;
            }
        }
        var /= (n - 1) as f64;
        // Constant bands get divisor 1 so they simply contribute zeros.
        Some(var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }))
    } else {
        None
    };

    // Band-by-band sample covariance of the (centered, possibly scaled) data.
    let mut cov = DMatrix::<f64>::zeros(b, b);
    let mut centered = vec![0.0f64; b];
    for pixel in 0..n {
        let spectrum = cube.spectrum_at(pixel);
        for band in 0..b {
            let mut d = spectrum[band] as f64 - mean[band];
            if let Some(scale) = &band_scale {
                d /= scale[band];
            }
            centered[band] = d;
        }
        for i in 0..b {
            let di = centered[i];
            for j in i..b {
                cov[(i, j)] += di * centered[j];
            }
        }
    }
    cov /= (n - 1) as f64;
    for i in 0..b {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }

    let eig = cov.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total_variance: f64 = eigenvalues.iter().sum();

    if total_variance <= 0.0 {
        let mut components = DMatrix::<f64>::zeros(1, b);
        components[(0, 0)] = 1.0;
        return Ok(PcaModel {
            mean,
            band_scale,
            components,
            eigenvalues: DVector::from_element(1, 0.0),
            explained_variance_ratio: vec![1.0],
            total_variance: 0.0,
            zero_variance: true,
        });
    }

    let ratios: Vec<f64> = eigenvalues.iter().map(|l| l / total_variance).collect();
    let mut retained = b;
    let mut cumulative = 0.0;
    for (i, r) in ratios.iter().enumerate() {
        cumulative += r;
        if cumulative >= options.variance_threshold {
            retained = i + 1;
            break;
        }
    }

    let mut components = DMatrix::<f64>::zeros(retained, b);
    for (row, &src) in order.iter().take(retained).enumerate() {
        let column = eig.eigenvectors.column(src);
        // Sign convention: the largest-magnitude coefficient is positive
        // (ties broken by the lowest band index).
        let mut pivot = 0;
        for band in 1..b {
            if column[band].abs() > column[pivot].abs() {
                pivot = band;
            }
        }
        let flip = if column[pivot] < 0.0 { -1.0 } else { 1.0 };
        for band in 0..b {
            components[(row, band)] = flip * column[band];
        }
    }

    Ok(PcaModel {
        mean,
        band_scale,
        components,
        eigenvalues: DVector::from_vec(eigenvalues[..retained].to_vec()),
        explained_variance_ratio: ratios[..retained].to_vec(),
        total_variance,
        zero_variance: false,
    })
}

/// Project every pixel of `cube` onto the retained components.
pub fn pca_reduce(cube: &HyperspectralCube, model: &PcaModel) -> Result<ReducedImage> {
    let b = cube.bands();
    if b != model.bands() {
        return Err(Error::Dimension(format!(
            "cube has {b} bands but the model was fit on {}",
            model.bands()
        )));
    }
    let dims = model.dims();
    let mut data = vec![0.0f64; cube.num_pixels() * dims];
    data.par_chunks_mut(dims)
        .enumerate()
        .for_each(|(pixel, out)| {
            let spectrum = cube.spectrum_at(pixel);
            let mut centered = vec![0.0f64; b];
            for band in 0..b {
                let mut d = spectrum[band] as f64 - model.mean[band];
                if let Some(scale) = &model.band_scale {
                    d /= scale[band];
                }
                centered[band] = d;
            }
            for (a, slot) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (band, &c) in centered.iter().enumerate() {
                    acc += model.components[(a, band)] * c;
                }
                *slot = acc;
            }
        });
    ReducedImage::from_data(cube.width(), cube.height(), dims, data)
}
