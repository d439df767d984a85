//! Per-pixel local covariance descriptors.
//!
//! Every pixel gets the sample covariance of the reduced spectra inside a
//! small window centered on it (clamped at the image borders), made strictly
//! positive definite by diagonal loading, together with its matrix logarithm.
//! Distances between descriptors are then plain Frobenius distances between
//! the logarithms, which is what the segmentation distance consumes.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pca::ReducedImage;

/// Matrix logarithm of a symmetric positive-definite matrix via its
/// eigendecomposition. Eigenvalues are floored at `1e-12` so that marginally
/// non-positive inputs (from floating-point roundoff) stay usable.
pub fn log_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    map_symmetric_eigenvalues(m, |l| l.max(1e-12).ln())
}

/// Matrix exponential of a symmetric matrix via its eigendecomposition.
pub fn exp_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    map_symmetric_eigenvalues(m, f64::exp)
}

fn map_symmetric_eigenvalues(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    debug_assert_eq!(m.nrows(), m.ncols());
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let scale = f(eig.eigenvalues[k]);
        let v = eig.eigenvectors.column(k);
        for i in 0..n {
            let vi = scale * v[i];
            for j in 0..n {
                out[(i, j)] += vi * v[j];
            }
        }
    }
    out
}

/// Covariance descriptor and its logarithm for every pixel, stored as
/// flattened row-major `dims x dims` blocks.
#[derive(Debug, Clone)]
pub struct CovarianceField {
    width: usize,
    height: usize,
    dims: usize,
    cov: Vec<f64>,
    log_cov: Vec<f64>,
}

impl CovarianceField {
    /// Estimate the field over `img` with a `window x window` neighborhood.
    ///
    /// The window must be odd, at least 3, and no larger than the smaller
    /// image side. Each covariance gets `regularization * mean eigenvalue`
    /// added to its diagonal (`regularization` itself on windows with zero
    /// variance), so every descriptor is positive definite even on constant
    /// regions.
    pub fn compute(img: &ReducedImage, window: usize, regularization: f64) -> Result<Self> {
        let (w, h, a) = (img.width(), img.height(), img.dims());
        if window < 3 || window % 2 == 0 {
            return Err(Error::Config(format!(
                "covariance window must be an odd value of at least 3, got {window}"
            )));
        }
        if window > w.min(h) {
            return Err(Error::Config(format!(
                "covariance window {window} exceeds the smaller image side {}",
                w.min(h)
            )));
        }
        if !(regularization.is_finite() && regularization > 0.0) {
            return Err(Error::Config(format!(
                "covariance regularization must be positive and finite, got {regularization}"
            )));
        }

        let aa = a * a;
        let r = window / 2;
        let mut cov = vec![0.0f64; img.num_pixels() * aa];
        let mut log_cov = vec![0.0f64; img.num_pixels() * aa];
        cov.par_chunks_mut(aa)
            .zip(log_cov.par_chunks_mut(aa))
            .enumerate()
            .for_each(|(pixel, (cov_out, log_out))| {
                let (x, y) = (pixel % w, pixel / w);
                let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
                let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
                let count = (x1 - x0 + 1) * (y1 - y0 + 1);

                let mut mean = vec![0.0f64; a];
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        for (k, &v) in img.spectrum(xx, yy).iter().enumerate() {
                            mean[k] += v;
                        }
                    }
                }
                for m in &mut mean {
                    *m /= count as f64;
                }

                let mut s = DMatrix::<f64>::zeros(a, a);
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        let spec = img.spectrum(xx, yy);
                        for i in 0..a {
                            let di = spec[i] - mean[i];
                            for j in i..a {
                                s[(i, j)] += di * (spec[j] - mean[j]);
                            }
                        }
                    }
                }
                s /= (count - 1) as f64;
                for i in 0..a {
                    for j in 0..i {
                        s[(i, j)] = s[(j, i)];
                    }
                }

                let trace: f64 = (0..a).map(|i| s[(i, i)]).sum();
                let load = if trace > 0.0 {
                    regularization * trace / a as f64
                } else {
                    regularization
                };
                for i in 0..a {
                    s[(i, i)] += load;
                }

                let lg = log_matrix(&s);
                for i in 0..a {
                    for j in 0..a {
                        cov_out[i * a + j] = s[(i, j)];
                        log_out[i * a + j] = lg[(i, j)];
                    }
                }
            });

        Ok(Self {
            width: w,
            height: h,
            dims: a,
            cov,
            log_cov,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Side length of each descriptor matrix.
    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Flattened covariance of the pixel with row-major index `pixel`.
    pub fn cov_at(&self, pixel: usize) -> &[f64] {
        let aa = self.dims * self.dims;
        &self.cov[pixel * aa..(pixel + 1) * aa]
    }

    /// Flattened matrix logarithm of the covariance at `pixel`.
    pub fn log_at(&self, pixel: usize) -> &[f64] {
        let aa = self.dims * self.dims;
        &self.log_cov[pixel * aa..(pixel + 1) * aa]
    }

    /// Covariance at `pixel` as a matrix (test and diagnostic use).
    pub fn cov_matrix(&self, pixel: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dims, self.dims, self.cov_at(pixel))
    }

    /// Matrix logarithm at `pixel` as a matrix (test and diagnostic use).
    pub fn log_matrix_at(&self, pixel: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dims, self.dims, self.log_at(pixel))
    }
}
