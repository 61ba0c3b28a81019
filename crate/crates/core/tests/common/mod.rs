//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segforge::FeatureKind;

/// Gower dissimilarity written out term by term.
pub fn gower(kinds: &[FeatureKind], ranges: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut terms = Vec::new();
    for f in 0..kinds.len() {
        if ranges[f] == 0.0 {
            continue;
        }
        let term = if kinds[f] == FeatureKind::Binary {
            f64::from(u8::from(a[f] != b[f]))
        } else {
            let scaled = (a[f] - b[f]).abs() / ranges[f];
            if scaled > 1.0 {
                1.0
            } else {
                scaled
            }
        };
        terms.push(term);
    }
    if terms.is_empty() {
        0.0
    } else {
        terms.iter().sum::<f64>() / terms.len() as f64
    }
}

/// Column ranges `max - min`.
pub fn ranges(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows[0].len();
    (0..width)
        .map(|f| {
            let col = rows.iter().map(|r| r[f]);
            let max = col.clone().fold(f64::MIN, f64::max);
            let min = col.fold(f64::MAX, f64::min);
            max - min
        })
        .collect()
}

pub fn random_kinds(rng: &mut ChaCha8Rng, width: usize) -> Vec<FeatureKind> {
    (0..width)
        .map(|_| match rng.gen_range(0..3) {
            0 => FeatureKind::Numeric,
            1 => FeatureKind::Percentage,
            _ => FeatureKind::Binary,
        })
        .collect()
}

/// Random rows: numeric values in [0, 50), percentages in [0, 1], binary 0/1.
pub fn random_rows(rng: &mut ChaCha8Rng, kinds: &[FeatureKind], n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            kinds
                .iter()
                .map(|k| match k {
                    FeatureKind::Numeric => rng.gen_range(0.0..50.0),
                    FeatureKind::Percentage => rng.gen_range(0.0..=1.0),
                    FeatureKind::Binary => f64::from(rng.gen_range(0..2u8)),
                })
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One brute-force merge: the two member sets and the Ward cost.
#[derive(Debug, Clone)]
pub struct OracleMerge {
    pub a: BTreeSet<usize>,
    pub b: BTreeSet<usize>,
    pub cost: f64,
}

/// `Σ_{i<j∈C} d²_ij / |C|`.
fn pair_ss(d: &dyn Fn(usize, usize) -> f64, members: &[usize]) -> f64 {
    let mut s = 0.0;
    for (x, &i) in members.iter().enumerate() {
        for &j in &members[x + 1..] {
            s += d(i, j).powi(2);
        }
    }
    s / members.len() as f64
}

/// Ward clustering by exhaustive search: every step evaluates
/// `2 (SS(A ∪ B) - SS(A) - SS(B))` for all cluster pairs from their members
/// and merges the cheapest, ties to the pair with the smallest member indices.
pub fn ward(n: usize, d: &dyn Fn(usize, usize) -> f64) -> Vec<OracleMerge> {
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let mut union = clusters[x].clone();
                union.extend(&clusters[y]);
                let cost = 2.0 * (pair_ss(d, &union) - pair_ss(d, &clusters[x]) - pair_ss(d, &clusters[y]));
                let key = |c: &Vec<usize>| *c.iter().min().unwrap();
                let better = match best {
                    None => true,
                    Some((bc, bx, by)) => {
                        let tol = 1e-12 * bc.abs().max(1e-300);
                        if (cost - bc).abs() <= tol {
                            let mine = (key(&clusters[x]).min(key(&clusters[y])), key(&clusters[x]).max(key(&clusters[y])));
                            let theirs = (
                                key(&clusters[bx]).min(key(&clusters[by])),
                                key(&clusters[bx]).max(key(&clusters[by])),
                            );
                            mine < theirs
                        } else {
                            cost < bc
                        }
                    }
                };
                if better {
                    best = Some((cost, x, y));
                }
            }
        }
        let (cost, x, y) = best.unwrap();
        let b = clusters.remove(y);
        let a = clusters[x].clone();
        clusters[x].extend(&b);
        merges.push(OracleMerge {
            a: a.into_iter().collect(),
            b: b.into_iter().collect(),
            cost,
        });
    }
    merges
}

/// Members of every dendrogram node, leaves first.
pub fn node_members(d: &segforge::Dendrogram) -> Vec<BTreeSet<usize>> {
    let mut nodes: Vec<BTreeSet<usize>> = (0..d.n).map(|i| BTreeSet::from([i])).collect();
    for m in &d.merges {
        let mut u = nodes[m.left].clone();
        u.extend(&nodes[m.right]);
        nodes.push(u);
    }
    nodes
}

/// Compares a dendrogram with the oracle merge sequence; returns the first
/// discrepancy.
pub fn compare_with_oracle(d: &segforge::Dendrogram, oracle: &[OracleMerge]) -> Result<(), String> {
    let nodes = node_members(d);
    if d.merges.len() != oracle.len() {
        return Err(format!("{} merges vs {}", d.merges.len(), oracle.len()));
    }
    for (s, (m, o)) in d.merges.iter().zip(oracle).enumerate() {
        let got = BTreeSet::from([nodes[m.left].clone(), nodes[m.right].clone()]);
        let want = BTreeSet::from([o.a.clone(), o.b.clone()]);
        if got != want {
            return Err(format!("step {s}: merged {got:?}, oracle {want:?}"));
        }
        let rel = (m.height - o.cost).abs() / o.cost.abs().max(1e-12);
        if rel > 1e-9 && (m.height - o.cost).abs() > 1e-15 {
            return Err(format!("step {s}: height {} vs oracle {}", m.height, o.cost));
        }
    }
    Ok(())
}

/// Canonical partition: sets of indices sharing a label.
pub fn partition(labels: &[u32]) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().insert(i);
    }
    groups.into_values().collect()
}

/// Nearest exemplar by exhaustive scan; ties go to the lower index.
pub fn nearest(kinds: &[FeatureKind], ranges: &[f64], exemplars: &[Vec<f64>], q: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, e) in exemplars.iter().enumerate() {
        let d = gower(kinds, ranges, q, e);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Share of items whose cluster's majority class is their own class.
pub fn purity<L: std::hash::Hash + Eq, C: std::hash::Hash + Eq>(clusters: &[L], classes: &[C]) -> f64 {
    let mut table: HashMap<&L, HashMap<&C, usize>> = HashMap::new();
    for (l, c) in clusters.iter().zip(classes) {
        *table.entry(l).or_default().entry(c).or_default() += 1;
    }
    let hits: usize = table.values().map(|row| row.values().max().copied().unwrap_or(0)).sum();
    hits as f64 / clusters.len() as f64
}

/// Pairwise precision, recall and F1 of a predicted grouping against truth.
pub fn pairwise_f1(predicted: &HashMap<String, String>, truth: &HashMap<String, String>) -> (f64, f64, f64) {
    fn pairs(groups: &HashMap<String, String>) -> BTreeSet<(&str, &str)> {
        let mut by: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, g) in groups {
            by.entry(g.as_str()).or_default().push(id.as_str());
        }
        let mut out = BTreeSet::new();
        for members in by.values() {
            for (x, a) in members.iter().enumerate() {
                for b in &members[x + 1..] {
                    out.insert(if a < b { (*a, *b) } else { (*b, *a) });
                }
            }
        }
        out
    }
    let p = pairs(predicted);
    let t = pairs(truth);
    let tp = p.intersection(&t).count() as f64;
    let precision = if p.is_empty() { 1.0 } else { tp / p.len() as f64 };
    let recall = if t.is_empty() { 1.0 } else { tp / t.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Percentage-feature check: value count per column.
pub fn distinct(values: impl Iterator<Item = f64>) -> usize {
    values.map(f64::to_bits).collect::<BTreeSet<_>>().len()
}

/// Partition of profile ids induced by a golden map.
pub fn partition_of(map: &segforge::GoldenMap) -> BTreeSet<BTreeSet<String>> {
    let mut groups: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for (p, g) in map.iter() {
        groups.entry(g).or_default().insert(p.to_string());
    }
    groups.into_values().collect()
}
