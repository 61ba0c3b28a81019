//! Gower dissimilarities and Ward hierarchical clustering.

mod gower;
mod ward;

use std::io::Write;
use std::path::Path;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gower::{distance_matrix, DistanceMatrix, GowerSpace};
pub use ward::{ward_cluster, ward_update};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("expected {expected} values, found {found}")]
    MismatchedSchema { expected: usize, found: usize },
    #[error("clustering needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("cluster count {k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("assignment covers {assignment} points but the matrix has {matrix}")]
    SizeMismatch { assignment: usize, matrix: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Ward merge cost on the squared-dissimilarity scale.
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// `merges.csv`: step,left,right,height,size.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "step,left,right,height,size")?;
        for (step, m) in self.merges.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", step + 1, m.left, m.right, m.height, m.size)?;
        }
        out.flush()
    }
}

/// Cluster label (1-based) per point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<u32>,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member count per label, index 0 for label 1.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l as usize - 1] += 1;
        }
        sizes
    }
}

/// Undoes the last `k - 1` merges. Labels are numbered 1..=k in order of
/// each cluster's smallest member index.
pub fn cut(dendrogram: &Dendrogram, k: usize) -> Result<ClusterAssignment, ClusterError> {
    let n = dendrogram.n;
    if k < 1 || k > n {
        return Err(ClusterError::KOutOfRange { k, n });
    }
    let mut uf = UnionFind::<usize>::new(n);
    let mut leaf_of: Vec<usize> = (0..n).collect();
    for m in dendrogram.merges.iter().take(n - k) {
        let (l, r) = (leaf_of[m.left], leaf_of[m.right]);
        uf.union(l, r);
        leaf_of.push(l);
    }
    let mut label_of_root = vec![0u32; n];
    let mut next = 0u32;
    let labels = (0..n)
        .map(|i| {
            let root = uf.find(i);
            if label_of_root[root] == 0 {
                next += 1;
                label_of_root[root] = next;
            }
            label_of_root[root]
        })
        .collect();
    Ok(ClusterAssignment { k, labels })
}

/// Pairwise within-cluster sum of squares
/// `W = Σ_c 1/(2 n_c) Σ_{i,j ∈ c} d_ij²`.
pub fn within_dispersion(matrix: &DistanceMatrix, assignment: &ClusterAssignment) -> Result<f64, ClusterError> {
    let n = matrix.len();
    if assignment.len() != n {
        return Err(ClusterError::SizeMismatch {
            assignment: assignment.len(),
            matrix: n,
        });
    }
    let labels = &assignment.labels;
    let sizes = assignment.sizes();
    let data = matrix.condensed();
    // Row sums are computed independently and added in row order, so the
    // result does not depend on the thread count.
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let start = if i == 0 { 0 } else { n * i - i * (i + 1) / 2 };
            let row = &data[start..start + (n - i - 1)];
            let li = labels[i];
            row.iter()
                .zip(&labels[i + 1..])
                .filter(|(_, &lj)| lj == li)
                .map(|(d, _)| d * d)
                .sum()
        })
        .collect();
    Ok(row_sums
        .iter()
        .zip(labels)
        .map(|(s, &l)| s / sizes[l as usize - 1] as f64)
        .sum())
}
