use rayon::prelude::*;

use crate::error::{DifwError, Result};

use super::batch::TimeSeriesBatch;
use super::joint::{align_to_target, align_with, mean_of_rows, AlignmentConfig, Warper};

/// Upper bound on the per-centroid optimization at prediction time.
pub const MAX_PREDICT_STEPS: usize = 100;

#[derive(Debug, Clone)]
struct Fitted {
    warper: Warper,
    centroids: Vec<Vec<f64>>,
}

/// Nearest-centroid classifier whose centroids are jointly aligned class
/// averages, and whose test signals are warped toward each centroid before
/// measuring the distance.
#[derive(Debug, Clone)]
pub struct NearestCentroid {
    pub config: AlignmentConfig,
    /// Adam steps per (test signal, centroid) pair, capped at
    /// [`MAX_PREDICT_STEPS`].
    pub predict_steps: usize,
    fitted: Option<Fitted>,
}

impl NearestCentroid {
    pub fn new(config: AlignmentConfig) -> Self {
        Self {
            config,
            predict_steps: MAX_PREDICT_STEPS,
            fitted: None,
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn centroids(&self) -> Option<&[Vec<f64>]> {
        self.fitted.as_ref().map(|f| f.centroids.as_slice())
    }

    /// Aligns each class separately and keeps the mean aligned signal.
    pub fn fit(&mut self, train: &TimeSeriesBatch) -> Result<()> {
        let labels = train
            .labels()
            .ok_or_else(|| DifwError::invalid("nearest-centroid training needs labels"))?;
        let warper = Warper::new(&self.config, train.len(), train.n_channels())?;
        let mut centroids = Vec::with_capacity(train.n_classes());
        for k in 0..train.n_classes() {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
            let class = train.subset(&members)?;
            let result = align_with(&warper, &class, &self.config)?;
            centroids.push(mean_of_rows(&result.aligned.rows()));
        }
        self.fitted = Some(Fitted { warper, centroids });
        Ok(())
    }

    /// Squared distance from each test signal to each centroid after warping
    /// the signal toward that centroid.
    pub fn distances(&self, test: &TimeSeriesBatch) -> Result<Vec<Vec<f64>>> {
        let fitted = self
            .fitted
            .as_ref()
            .ok_or_else(|| DifwError::InvalidState("the classifier has not been fitted".into()))?;
        check_shape(&fitted.centroids, test)?;
        let steps = self.predict_steps.min(MAX_PREDICT_STEPS);
        (0..test.n_signals())
            .into_par_iter()
            .map(|i| {
                fitted
                    .centroids
                    .iter()
                    .map(|c| {
                        align_to_target(&fitted.warper, test.signal(i), c, steps, self.config.learning_rate)
                            .map(|r| r.2)
                    })
                    .collect::<Result<Vec<f64>>>()
                    .map_err(|e| DifwError::at_point(i, e))
            })
            .collect()
    }

    pub fn predict(&self, test: &TimeSeriesBatch) -> Result<Vec<usize>> {
        Ok(self.distances(test)?.iter().map(|d| argmin(d)).collect())
    }
}

/// Nearest centroid on plain (unaligned) class means.
#[derive(Debug, Clone, Default)]
pub struct EuclideanNcc {
    centroids: Option<Vec<Vec<f64>>>,
}

impl EuclideanNcc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fit(&mut self, train: &TimeSeriesBatch) -> Result<()> {
        if train.labels().is_none() {
            return Err(DifwError::invalid("nearest-centroid training needs labels"));
        }
        self.centroids = Some(
            (0..train.n_classes())
                .map(|k| train.mean_of(&train.class_members(k)))
                .collect(),
        );
        Ok(())
    }

    pub fn centroids(&self) -> Option<&[Vec<f64>]> {
        self.centroids.as_deref()
    }

    pub fn predict(&self, test: &TimeSeriesBatch) -> Result<Vec<usize>> {
        let centroids = self
            .centroids
            .as_ref()
            .ok_or_else(|| DifwError::InvalidState("the classifier has not been fitted".into()))?;
        check_shape(centroids, test)?;
        Ok((0..test.n_signals())
            .map(|i| {
                let d: Vec<f64> = centroids.iter().map(|c| squared_distance(test.signal(i), c)).collect();
                argmin(&d)
            })
            .collect())
    }
}

fn check_shape(centroids: &[Vec<f64>], test: &TimeSeriesBatch) -> Result<()> {
    let width = test.n_channels() * test.len();
    match centroids.first() {
        Some(c) if c.len() != width => Err(DifwError::invalid(format!(
            "test signals have {width} samples, centroids have {}",
            c.len()
        ))),
        _ => Ok(()),
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the smallest value; ties go to the lower index.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = k;
        }
    }
    best
}

pub fn ncc_fit(train: &TimeSeriesBatch, config: &AlignmentConfig) -> Result<NearestCentroid> {
    let mut model = NearestCentroid::new(config.clone());
    model.fit(train)?;
    Ok(model)
}

pub fn ncc_predict(model: &NearestCentroid, test: &TimeSeriesBatch) -> Result<Vec<usize>> {
    model.predict(test)
}

/// Fraction of predictions equal to the labels.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / predicted.len() as f64
}
