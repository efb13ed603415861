use crate::error::{DifwError, Result};

/// `N` signals with `C` channels of `T` samples each, on a shared uniform
/// time grid over `[0, 1]`. Optional labels are class indices `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesBatch {
    n_signals: usize,
    n_channels: usize,
    len: usize,
    /// Signal-major, then channel-major.
    data: Vec<f64>,
    labels: Option<Vec<usize>>,
    n_classes: usize,
}

impl TimeSeriesBatch {
    /// Single-channel batch from one row per signal.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::multichannel(rows.into_iter().map(|r| vec![r]).collect())
    }

    /// Batch from `signals[i][channel][t]`.
    pub fn multichannel(signals: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_signals = signals.len();
        if n_signals == 0 {
            return Err(DifwError::invalid("a batch needs at least one signal"));
        }
        let n_channels = signals[0].len();
        if n_channels == 0 {
            return Err(DifwError::invalid("signals need at least one channel"));
        }
        let len = signals[0][0].len();
        if len < 2 {
            return Err(DifwError::invalid("signals need at least two samples"));
        }
        let mut data = Vec::with_capacity(n_signals * n_channels * len);
        for (i, s) in signals.into_iter().enumerate() {
            if s.len() != n_channels {
                return Err(DifwError::invalid(format!(
                    "signal {i} has {} channels, expected {n_channels}",
                    s.len()
                )));
            }
            for (c, ch) in s.into_iter().enumerate() {
                if ch.len() != len {
                    return Err(DifwError::invalid(format!(
                        "signal {i} channel {c} has {} samples, expected {len}",
                        ch.len()
                    )));
                }
                if ch.iter().any(|v| !v.is_finite()) {
                    return Err(DifwError::invalid(format!("signal {i} has non-finite samples")));
                }
                data.extend(ch);
            }
        }
        Ok(Self {
            n_signals,
            n_channels,
            len,
            data,
            labels: None,
            n_classes: 1,
        })
    }

    /// Attaches class labels, which must cover `0..K` for some `K`.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n_signals {
            return Err(DifwError::invalid(format!(
                "{} labels for {} signals",
                labels.len(),
                self.n_signals
            )));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(DifwError::invalid(format!("class {missing} has no signals")));
        }
        self.labels = Some(labels);
        self.n_classes = k;
        Ok(self)
    }

    pub fn n_signals(&self) -> usize {
        self.n_signals
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.n_signals == 0
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Samples of signal `i`, all channels back to back.
    pub fn signal(&self, i: usize) -> &[f64] {
        let w = self.n_channels * self.len;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn channel(&self, i: usize, c: usize) -> &[f64] {
        let s = self.signal(i);
        &s[c * self.len..(c + 1) * self.len]
    }

    /// Rows as `signal[channel * T + t]`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_signals).map(|i| self.signal(i).to_vec()).collect()
    }

    /// Signals of class `k` with their batch indices.
    pub fn class_members(&self, k: usize) -> Vec<usize> {
        match &self.labels {
            None => (0..self.n_signals).collect(),
            Some(l) => (0..self.n_signals).filter(|&i| l[i] == k).collect(),
        }
    }

    /// Sub-batch of the given signals (labels kept as they are).
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let signals = idx
            .iter()
            .map(|&i| (0..self.n_channels).map(|c| self.channel(i, c).to_vec()).collect())
            .collect();
        Self::multichannel(signals)
    }

    /// Rebuilds a batch with new flattened rows of the same shape.
    pub fn with_rows(&self, rows: Vec<Vec<f64>>) -> Result<Self> {
        let signals = rows
            .into_iter()
            .map(|r| r.chunks(self.len).map(<[f64]>::to_vec).collect())
            .collect();
        let b = Self::multichannel(signals)?;
        match &self.labels {
            Some(l) => b.with_labels(l.clone()),
            None => Ok(b),
        }
    }

    /// Pointwise mean of the given signals.
    pub fn mean_of(&self, idx: &[usize]) -> Vec<f64> {
        mean_rows(idx.iter().map(|&i| self.signal(i)), self.n_channels * self.len)
    }
}

pub(crate) fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Vec<f64> {
    let mut sum = vec![0.0; width];
    let mut n = 0usize;
    for r in rows {
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
        n += 1;
    }
    if n > 0 {
        for s in &mut sum {
            *s /= n as f64;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_labels() {
        let b = TimeSeriesBatch::from_rows(vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]).unwrap();
        assert_eq!((b.n_signals(), b.n_channels(), b.len()), (2, 1, 3));
        assert_eq!(b.mean_of(&[0, 1]), vec![2.0, 2.0, 2.0]);
        assert!(b.clone().with_labels(vec![0]).is_err());
        assert!(b.clone().with_labels(vec![1, 1]).is_err());
        let b = b.with_labels(vec![1, 0]).unwrap();
        assert_eq!(b.n_classes(), 2);
        assert_eq!(b.class_members(1), vec![0]);
    }

    #[test]
    fn ragged_batches_are_rejected() {
        assert!(TimeSeriesBatch::from_rows(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(TimeSeriesBatch::from_rows(vec![]).is_err());
        assert!(TimeSeriesBatch::from_rows(vec![vec![f64::NAN, 1.0]]).is_err());
    }

    #[test]
    fn multichannel_layout() {
        let b = TimeSeriesBatch::multichannel(vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]]]).unwrap();
        assert_eq!(b.channel(0, 1), &[3.0, 4.0]);
        assert_eq!(b.signal(0), &[1.0, 2.0, 3.0, 4.0]);
    }
}
