//! Classification accuracy metrics: confusion matrix, overall and average
//! accuracy, and Cohen's kappa.
//!
//! Evaluation covers pixels that carry a ground-truth class (label `>= 1`)
//! and, unless the caller opts in, skips training pixels so the scores reflect
//! generalization rather than recall of the supervision. A prediction of `0`
//! marks a pixel the classifier could not assign (no label mass reached it);
//! such pixels count as errors in every accuracy figure but contribute no
//! predicted-class mass to the chance-agreement term of kappa, since an
//! absence of prediction is not a prediction.

use serde::{Deserialize, Serialize};

use crate::cube::GroundTruth;
use crate::error::{Error, Result};
use crate::sampling::TrainingSet;

/// Square tally of evaluated pixels: rows are true classes, columns predicted.
///
/// Classes are numbered `1..=num_classes` in rasters; row and column `0` of
/// the internal storage hold class 1. Pixels predicted as the `0` sentinel are
/// counted per true class in a separate lane rather than as a column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    /// Row-major `num_classes * num_classes` counts, `[true - 1][pred - 1]`.
    counts: Vec<u64>,
    /// Per-true-class count of pixels predicted as the `0` sentinel.
    unclassified: Vec<u64>,
}

impl ConfusionMatrix {
    /// Empty matrix over `num_classes` classes.
    pub fn new(num_classes: u16) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Config(
                "confusion matrix needs at least one class".into(),
            ));
        }
        let c = num_classes as usize;
        Ok(Self {
            num_classes: c,
            counts: vec![0; c * c],
            unclassified: vec![0; c],
        })
    }

    /// Tally one evaluated pixel. `true_class` must be an actual class
    /// (`>= 1`); `predicted` may be the `0` sentinel for an unclassified pixel.
    pub fn record(&mut self, true_class: u16, predicted: u16) -> Result<()> {
        let c = self.num_classes;
        if true_class == 0 || true_class as usize > c {
            return Err(Error::Data(format!(
                "true class {true_class} outside 1..={c}"
            )));
        }
        if predicted as usize > c {
            return Err(Error::Data(format!(
                "predicted class {predicted} outside 0..={c}"
            )));
        }
        let t = true_class as usize - 1;
        if predicted == 0 {
            self.unclassified[t] += 1;
        } else {
            self.counts[t * c + predicted as usize - 1] += 1;
        }
        Ok(())
    }

    /// Tally a per-pixel prediction raster against the ground truth.
    ///
    /// Only pixels with a ground-truth class are evaluated. When `exclude` is
    /// given, its training pixels are left out as well; pass `None` to score
    /// every labeled pixel (for example to fold the training set back in).
    pub fn from_predictions(
        pred: &[u16],
        gt: &GroundTruth,
        exclude: Option<&TrainingSet>,
    ) -> Result<Self> {
        let (w, h) = (gt.width(), gt.height());
        if pred.len() != w * h {
            return Err(Error::Dimension(format!(
                "prediction raster has {} entries for a {w}x{h} ground truth",
                pred.len()
            )));
        }
        if gt.labeled_count() == 0 {
            return Err(Error::Data("ground truth has no labeled pixels".into()));
        }
        let excluded = match exclude {
            Some(train) => {
                for s in train.samples() {
                    if s.x >= w || s.y >= h {
                        return Err(Error::Dimension(format!(
                            "training pixel ({}, {}) outside the {w}x{h} raster",
                            s.x, s.y
                        )));
                    }
                }
                Some(train.mask(w, h))
            }
            None => None,
        };
        let mut matrix = Self::new(gt.num_classes())?;
        for (i, (&p, &t)) in pred.iter().zip(gt.labels()).enumerate() {
            if t == 0 || excluded.as_ref().is_some_and(|m| m[i]) {
                continue;
            }
            matrix.record(t, p)?;
        }
        if matrix.total() == 0 {
            return Err(Error::Data(
                "no pixels left to evaluate: every labeled pixel is in the training set".into(),
            ));
        }
        Ok(matrix)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Pixels of `true_class` predicted as `predicted` (`0` = unclassified).
    pub fn count(&self, true_class: u16, predicted: u16) -> u64 {
        let t = self.row_index(true_class);
        if predicted == 0 {
            self.unclassified[t]
        } else {
            assert!(
                predicted as usize <= self.num_classes,
                "predicted class out of range"
            );
            self.counts[t * self.num_classes + predicted as usize - 1]
        }
    }

    /// Evaluated pixels of `true_class`, unclassified ones included.
    pub fn true_total(&self, true_class: u16) -> u64 {
        let t = self.row_index(true_class);
        let c = self.num_classes;
        self.counts[t * c..(t + 1) * c].iter().sum::<u64>() + self.unclassified[t]
    }

    /// Pixels predicted as `predicted`; the `0` sentinel returns the total
    /// number of unclassified pixels.
    pub fn predicted_total(&self, predicted: u16) -> u64 {
        if predicted == 0 {
            return self.unclassified.iter().sum();
        }
        assert!(
            predicted as usize <= self.num_classes,
            "predicted class out of range"
        );
        let p = predicted as usize - 1;
        (0..self.num_classes)
            .map(|t| self.counts[t * self.num_classes + p])
            .sum()
    }

    /// All evaluated pixels.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.unclassified.iter().sum::<u64>()
    }

    /// Correctly classified pixels (the matrix trace).
    pub fn correct(&self) -> u64 {
        (0..self.num_classes)
            .map(|t| self.counts[t * self.num_classes + t])
            .sum()
    }

    fn row_index(&self, true_class: u16) -> usize {
        assert!(
            true_class >= 1 && true_class as usize <= self.num_classes,
            "true class out of range"
        );
        true_class as usize - 1
    }
}

/// Summary accuracy figures reduced from a [`ConfusionMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Overall accuracy: fraction of evaluated pixels classified correctly.
    pub oa: f64,
    /// Average accuracy: mean per-class accuracy over evaluated classes.
    pub aa: f64,
    /// Chance-corrected agreement `(p_o - p_e) / (1 - p_e)`.
    pub kappa: f64,
    /// True when chance agreement reached 1 and `kappa` fell back to its
    /// defined limit (1 for a perfect prediction, 0 otherwise).
    pub kappa_degenerate: bool,
    /// Per-class accuracy; `None` for classes with no evaluated pixel.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Number of evaluated pixels.
    pub n_eval: u64,
}

impl MetricsReport {
    /// Reduce a confusion matrix to its summary figures.
    pub fn from_confusion(matrix: &ConfusionMatrix) -> Result<Self> {
        let total = matrix.total();
        if total == 0 {
            return Err(Error::Data("no evaluated pixels to score".into()));
        }
        let c = matrix.num_classes() as u16;
        let n = total as f64;
        let oa = matrix.correct() as f64 / n;

        let mut per_class_accuracy = Vec::with_capacity(c as usize);
        let mut acc_sum = 0.0;
        let mut acc_count = 0u32;
        for t in 1..=c {
            let row = matrix.true_total(t);
            if row == 0 {
                per_class_accuracy.push(None);
            } else {
                let acc = matrix.count(t, t) as f64 / row as f64;
                acc_sum += acc;
                acc_count += 1;
                per_class_accuracy.push(Some(acc));
            }
        }
        // At least one row is populated whenever total > 0.
        let aa = acc_sum / f64::from(acc_count);

        // Chance agreement pairs each true-class marginal with the matching
        // predicted-class marginal; a single division at the end keeps small
        // integer cases exact.
        let mut pairs = 0.0;
        for t in 1..=c {
            pairs += matrix.true_total(t) as f64 * matrix.predicted_total(t) as f64;
        }
        let pe = pairs / (n * n);
        let (kappa, kappa_degenerate) = if pe >= 1.0 {
            (if oa == 1.0 { 1.0 } else { 0.0 }, true)
        } else {
            ((oa - pe) / (1.0 - pe), false)
        };

        Ok(Self {
            oa,
            aa,
            kappa,
            kappa_degenerate,
            per_class_accuracy,
            n_eval: total,
        })
    }
}

/// Score a per-pixel classification against the ground truth.
///
/// Training pixels are excluded from evaluation when `exclude` is provided;
/// pass `None` to score every labeled pixel.
pub fn compute_metrics(
    pred: &[u16],
    gt: &GroundTruth,
    exclude: Option<&TrainingSet>,
) -> Result<MetricsReport> {
    MetricsReport::from_confusion(&ConfusionMatrix::from_predictions(pred, gt, exclude)?)
}
