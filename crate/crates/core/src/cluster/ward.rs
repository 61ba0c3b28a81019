//! Ward agglomerative clustering on a dissimilarity matrix.
//!
//! Costs live on the squared-dissimilarity scale: two singletons start at
//! `d²` and merged clusters are updated with the Lance-Williams recurrence
//! with Ward coefficients. On that scale the cost of merging `A` and `B` is
//! twice the increase of the pairwise within-cluster sum of squares.
//!
//! The search follows the generic algorithm with a nearest-neighbour list:
//! every active row keeps its nearest neighbour among higher rows and a
//! priority queue orders rows by that distance. Rows whose neighbour was
//! merged away keep a lower bound and are rescanned lazily when they reach the
//! front. Among equal costs the pair with the smallest `(row, column)` merges
//! first, which makes the merge sequence identical to an exhaustive search.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::gower::condensed_index;
use super::{Dendrogram, DistanceMatrix, Merge};

/// Total order on `f64` for the priority queue.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Lance-Williams update of `D(i ∪ j, k)` with Ward coefficients.
#[inline]
pub fn ward_update(d_ik: f64, d_jk: f64, d_ij: f64, n_i: usize, n_j: usize, n_k: usize) -> f64 {
    let (n_i, n_j, n_k) = (n_i as f64, n_j as f64, n_k as f64);
    ((n_i + n_k) * d_ik + (n_j + n_k) * d_jk - n_k * d_ij) / (n_i + n_j + n_k)
}

struct Work {
    n: usize,
    cost: Vec<f64>,
}

impl Work {
    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.cost[condensed_index(self.n, i, j)]
        } else {
            self.cost[condensed_index(self.n, j, i)]
        }
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = if i < j {
            condensed_index(self.n, i, j)
        } else {
            condensed_index(self.n, j, i)
        };
        self.cost[k] = v;
    }
}

/// Runs Ward linkage; the result has `n - 1` merges with non-decreasing
/// heights. Node ids follow the usual convention: leaves are `0..n`, merge
/// `s` creates node `n + s`.
pub fn ward_cluster(matrix: &DistanceMatrix) -> Dendrogram {
    let n = matrix.len();
    let mut work = Work {
        n,
        cost: matrix.condensed().iter().map(|d| d * d).collect(),
    };

    let mut size = vec![1usize; n];
    let mut node = (0..n).collect::<Vec<usize>>();
    // Rows are linked so scans skip merged-away rows.
    let mut next: Vec<usize> = (1..=n).collect();
    let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();

    let mut neighbour = vec![usize::MAX; n];
    let mut key = vec![f64::INFINITY; n];
    let mut stale = vec![false; n];
    let mut queue: BTreeSet<(Cost, usize)> = BTreeSet::new();

    let scan = |work: &Work, next: &[usize], i: usize| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut j = next[i];
        while j < n {
            let d = work.get(i, j);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((j, d));
            }
            j = next[j];
        }
        best
    };

    for i in 0..n.saturating_sub(1) {
        if let Some((j, d)) = scan(&work, &next, i) {
            neighbour[i] = j;
            key[i] = d;
            queue.insert((Cost(d), i));
        }
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    while merges.len() + 1 < n {
        let &(Cost(_), a) = queue.first().expect("queue holds every row with a later active row");
        if stale[a] {
            queue.remove(&(Cost(key[a]), a));
            stale[a] = false;
            match scan(&work, &next, a) {
                Some((j, d)) => {
                    neighbour[a] = j;
                    key[a] = d;
                    queue.insert((Cost(d), a));
                }
                None => key[a] = f64::INFINITY,
            }
            continue;
        }
        queue.remove(&(Cost(key[a]), a));
        let b = neighbour[a];
        let height = key[a];
        let d_ab = work.get(a, b);
        debug_assert_eq!(d_ab, height);

        let (left, right) = (node[a].min(node[b]), node[a].max(node[b]));
        let merged_size = size[a] + size[b];
        merges.push(Merge {
            left,
            right,
            height,
            size: merged_size,
        });

        // Retire row b.
        if key[b].is_finite() {
            queue.remove(&(Cost(key[b]), b));
        }
        key[b] = f64::INFINITY;
        let (p, q) = (prev[b], next[b]);
        if p != usize::MAX {
            next[p] = q;
        }
        if q < n {
            prev[q] = p;
        }

        // Row a becomes the merged cluster.
        // Row 0 is never retired, so walks start there.
        let mut k = 0;
        while k < n {
            if k != a {
                let v = ward_update(work.get(a, k), work.get(b, k), d_ab, size[a], size[b], size[k]);
                work.set(a, k, v);
            }
            k = next[k];
        }
        size[a] = merged_size;
        node[a] = n + merges.len() - 1;

        // Neighbour bookkeeping for rows before a.
        let mut x = 0;
        while x < a {
            let d = work.get(x, a);
            if stale[x] {
                if d < key[x] {
                    reprioritise(&mut queue, &mut key, x, d);
                }
            } else if neighbour[x] == a || neighbour[x] == b {
                // key[x] was exact, so no other row undercuts it and none
                // below b ties it.
                if d <= key[x] {
                    neighbour[x] = a;
                    reprioritise(&mut queue, &mut key, x, d);
                } else {
                    stale[x] = true;
                }
            } else if d < key[x] || (d == key[x] && a < neighbour[x]) {
                neighbour[x] = a;
                reprioritise(&mut queue, &mut key, x, d);
            }
            x = next[x];
        }
        // Rows between a and b that pointed at b lose their neighbour.
        let mut x = next[a];
        while x < b {
            if !stale[x] && neighbour[x] == b {
                stale[x] = true;
            }
            x = next[x];
        }
        // Row a rescans its whole (changed) row.
        stale[a] = false;
        match scan(&work, &next, a) {
            Some((j, d)) => {
                neighbour[a] = j;
                key[a] = d;
                queue.insert((Cost(d), a));
            }
            None => key[a] = f64::INFINITY,
        }
    }

    Dendrogram { n, merges }
}

fn reprioritise(queue: &mut BTreeSet<(Cost, usize)>, key: &mut [f64], x: usize, d: f64) {
    queue.remove(&(Cost(key[x]), x));
    key[x] = d;
    queue.insert((Cost(d), x));
}
