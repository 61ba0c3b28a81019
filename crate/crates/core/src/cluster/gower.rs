use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::features::FeatureKind;

/// Feature kinds plus the population ranges that scale numeric terms.
///
/// A feature whose range is zero over the fitting population carries no
/// information and is left out of both numerator and denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GowerSpace {
    pub kinds: Vec<FeatureKind>,
    pub ranges: Vec<f64>,
}

impl GowerSpace {
    pub fn new(kinds: Vec<FeatureKind>, ranges: Vec<f64>) -> Result<Self, ClusterError> {
        if kinds.len() != ranges.len() {
            return Err(ClusterError::MismatchedSchema {
                expected: kinds.len(),
                found: ranges.len(),
            });
        }
        Ok(GowerSpace { kinds, ranges })
    }

    /// Ranges `max - min` of every column over `rows`.
    pub fn fit<V: AsRef<[f64]>>(kinds: &[FeatureKind], rows: &[V]) -> Result<Self, ClusterError> {
        let width = kinds.len();
        let mut lo = vec![f64::INFINITY; width];
        let mut hi = vec![f64::NEG_INFINITY; width];
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(ClusterError::MismatchedSchema {
                    expected: width,
                    found: row.len(),
                });
            }
            for (f, &x) in row.iter().enumerate() {
                lo[f] = lo[f].min(x);
                hi[f] = hi[f].max(x);
            }
        }
        let ranges = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| if h > l { h - l } else { 0.0 })
            .collect();
        Ok(GowerSpace {
            kinds: kinds.to_vec(),
            ranges,
        })
    }

    pub fn width(&self) -> usize {
        self.kinds.len()
    }

    /// Number of features that enter the average.
    pub fn contributing(&self) -> usize {
        self.ranges.iter().filter(|&&r| r > 0.0).count()
    }

    pub fn check(&self, row: &[f64]) -> Result<(), ClusterError> {
        if row.len() != self.width() {
            return Err(ClusterError::MismatchedSchema {
                expected: self.width(),
                found: row.len(),
            });
        }
        Ok(())
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64, ClusterError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.distance_unchecked(a, b))
    }

    /// Mean over contributing features of `|a - b| / range` (clamped to 1)
    /// for numeric and percentage features and of the mismatch indicator
    /// for binary ones.
    pub fn distance_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for f in 0..self.kinds.len() {
            let range = self.ranges[f];
            if range <= 0.0 {
                continue;
            }
            count += 1;
            sum += match self.kinds[f] {
                FeatureKind::Binary => {
                    if a[f] != b[f] {
                        1.0
                    } else {
                        0.0
                    }
                }
                FeatureKind::Numeric | FeatureKind::Percentage => ((a[f] - b[f]).abs() / range).min(1.0),
            };
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// Condensed upper-triangular dissimilarity matrix, row-major over `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    space: Option<GowerSpace>,
}

#[inline]
pub(crate) fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

impl DistanceMatrix {
    /// Wraps an existing condensed vector of length `n (n - 1) / 2`.
    pub fn from_condensed(n: usize, data: Vec<f64>) -> Result<Self, ClusterError> {
        if n < 2 {
            return Err(ClusterError::TooFewPoints(n));
        }
        let expected = n * (n - 1) / 2;
        if data.len() != expected {
            return Err(ClusterError::MismatchedSchema {
                expected,
                found: data.len(),
            });
        }
        Ok(DistanceMatrix { n, data, space: None })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn condensed(&self) -> &[f64] {
        &self.data
    }

    /// The Gower space (kinds and ranges) the matrix was computed in.
    pub fn space(&self) -> Option<&GowerSpace> {
        self.space.as_ref()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.data[condensed_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.data[condensed_index(self.n, j, i)],
        }
    }
}

/// All pairwise Gower dissimilarities, with ranges fitted on `rows`.
pub fn distance_matrix<V: AsRef<[f64]> + Sync>(kinds: &[FeatureKind], rows: &[V]) -> Result<DistanceMatrix, ClusterError> {
    let n = rows.len();
    if n < 2 {
        return Err(ClusterError::TooFewPoints(n));
    }
    let space = GowerSpace::fit(kinds, rows)?;
    let mut data = vec![0.0; n * (n - 1) / 2];

    let mut slices: Vec<(usize, &mut [f64])> = Vec::with_capacity(n - 1);
    let mut rest = data.as_mut_slice();
    for i in 0..n - 1 {
        let (row, tail) = rest.split_at_mut(n - i - 1);
        slices.push((i, row));
        rest = tail;
    }
    slices.into_par_iter().for_each(|(i, out)| {
        let a = rows[i].as_ref();
        for (slot, b) in out.iter_mut().zip(&rows[i + 1..]) {
            *slot = space.distance_unchecked(a, b.as_ref());
        }
    });

    Ok(DistanceMatrix {
        n,
        data,
        space: Some(space),
    })
}
