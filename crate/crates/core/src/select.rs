//! Cluster-count selection and label propagation.
//!
//! The criterion series `c_k = W_k / W_1` is turned into drop-form
//! differences; an elbow sits at `k` when the curvature at `k + 1` exceeds
//! the drop at `k + 1`, and its strength is that excess divided by `k`.
//! Repeated sampled trials vote on the strongest elbow and the winning trial
//! becomes the exemplar set of a 1-nearest-neighbour classifier.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{cut, distance_matrix, ward_cluster, within_dispersion, ClusterAssignment, ClusterError, GowerSpace};
use crate::features::{Feature, FeatureKind, FeatureVector, ReductionCaps};
use crate::pms::Date;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("no elbow found: every relative strength is zero")]
    NoElbowFound,
    #[error("criterion series needs at least 3 values, got {0}")]
    SeriesTooShort(usize),
    #[error("criterion must start at 1, got {0}")]
    BadFirstCriterion(f64),
    #[error("every trial failed to find an elbow")]
    AllTrialsFailed,
    #[error("invalid trial configuration: {0}")]
    InvalidConfig(String),
    #[error("model has no exemplars")]
    EmptyModel,
    #[error("schema mismatch: model expects {expected} features, query has {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SelectError {
    SelectError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowRow {
    pub k: usize,
    pub criterion: f64,
    pub first_order_difference: Option<f64>,
    pub second_order_difference: Option<f64>,
    pub elbow_binary: Option<bool>,
    pub relative_strength: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowTable {
    pub rows: Vec<ElbowRow>,
}

/// Builds the elbow table for `c_1..c_K` (`criterion[0]` is `k = 1`).
///
/// `d1_k = c_{k-1} - c_k`, `d2_k = d1_{k-1} - d1_k`. Elbow and strength are
/// defined from `k = 2`; the last row has no successor and is never an elbow.
pub fn elbow_table(criterion: &[f64]) -> Result<ElbowTable, SelectError> {
    let kmax = criterion.len();
    if kmax < 3 {
        return Err(SelectError::SeriesTooShort(kmax));
    }
    if (criterion[0] - 1.0).abs() > 1e-9 {
        return Err(SelectError::BadFirstCriterion(criterion[0]));
    }
    if criterion.windows(2).any(|w| w[1] > w[0] + 1e-12) {
        log::warn!("criterion series is not non-increasing");
    }

    let d1: Vec<Option<f64>> = (0..kmax)
        .map(|i| (i >= 1).then(|| criterion[i - 1] - criterion[i]))
        .collect();
    let d2: Vec<Option<f64>> = (0..kmax)
        .map(|i| match (i >= 2).then(|| (d1[i - 1], d1[i])) {
            Some((Some(a), Some(b))) => Some(a - b),
            _ => None,
        })
        .collect();

    let rows = (0..kmax)
        .map(|i| {
            let k = i + 1;
            let (elbow, strength) = if k == 1 {
                (None, None)
            } else if k == kmax {
                (Some(false), Some(0.0))
            } else {
                let (a, b) = (d2[i + 1].expect("defined from k = 3"), d1[i + 1].expect("defined from k = 2"));
                let elbow = a > b;
                (Some(elbow), Some(if elbow { (a - b) / k as f64 } else { 0.0 }))
            };
            ElbowRow {
                k,
                criterion: criterion[i],
                first_order_difference: d1[i],
                second_order_difference: d2[i],
                elbow_binary: elbow,
                relative_strength: strength,
            }
        })
        .collect();
    Ok(ElbowTable { rows })
}

impl ElbowTable {
    /// Largest relative strength, ties to the smaller `k`.
    pub fn optimal_k(&self) -> Result<usize, SelectError> {
        let mut best: Option<(usize, f64)> = None;
        for row in &self.rows {
            let s = row.relative_strength.unwrap_or(0.0);
            if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
                best = Some((row.k, s));
            }
        }
        best.map(|(k, _)| k).ok_or(SelectError::NoElbowFound)
    }

    pub fn kmax(&self) -> usize {
        self.rows.len()
    }

    /// elbow.csv with values rounded to 3 decimals and `-` for undefined cells.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("cluster,criterion,first_order_difference,second_order_difference,elbow_binary,relative_strength\n");
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), round3);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.k,
                round3(r.criterion),
                cell(r.first_order_difference),
                cell(r.second_order_difference),
                r.elbow_binary.map_or("-", |b| if b { "1" } else { "0" }),
                cell(r.relative_strength),
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SelectError> {
        std::fs::write(path, self.to_csv()).map_err(|e| io_err(path, e))
    }
}

pub fn optimal_k(table: &ElbowTable) -> Result<usize, SelectError> {
    table.optimal_k()
}

/// Three decimals without trailing zeros, so 0.820 prints as `0.82`.
/// Values within 1e-9 of a half round away from zero, so differences of
/// three-decimal inputs such as 0.044 / 8 print as 0.006.
pub fn round3(x: f64) -> String {
    let nudged = x + x.signum() * 1e-9;
    let s = format!("{:.3}", (nudged * 1000.0).round() / 1000.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".to_string(),
        _ => s.to_string(),
    }
}

/// `c_k = W_k / W_1` for `k = 1..=kmax` along the Ward dendrogram of `rows`.
pub fn criterion_series<V: AsRef<[f64]> + Sync>(
    kinds: &[FeatureKind],
    rows: &[V],
    kmax: usize,
) -> Result<(Vec<f64>, CutSource), SelectError> {
    let matrix = distance_matrix(kinds, rows)?;
    let dendrogram = ward_cluster(&matrix);
    let mut w = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        w.push(within_dispersion(&matrix, &cut(&dendrogram, k)?)?);
    }
    let w1 = w[0];
    let series = w.iter().map(|&wk| if w1 > 0.0 { wk / w1 } else { 1.0 }).collect();
    let space = matrix.space().cloned().expect("distance_matrix records its space");
    Ok((series, CutSource { dendrogram, space }))
}

/// What a trial keeps of its clustering after the matrix is dropped.
#[derive(Debug, Clone)]
pub struct CutSource {
    pub dendrogram: crate::cluster::Dendrogram,
    pub space: GowerSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trials: usize,
    pub sample_size: usize,
    pub k_max: usize,
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            trials: 15,
            sample_size: 10_000,
            k_max: 20,
            seed: 0,
        }
    }
}

impl TrialConfig {
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    /// Population indices of the sample, ascending.
    pub sample: Vec<usize>,
    pub sample_ids: Vec<String>,
    pub elbow: ElbowTable,
    pub optimal_k: usize,
    pub assignment: ClusterAssignment,
    pub space: GowerSpace,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub elbow: ElbowTable,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    ExtremelyStable,
    Stable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    /// Votes per optimal `k` over the trials that found an elbow.
    pub votes: BTreeMap<usize, usize>,
    pub failed_trials: usize,
    pub mode_k: usize,
    /// Mode votes divided by all trials, failed ones included.
    pub mode_frequency: f64,
    pub stability: Stability,
}

impl StabilityVerdict {
    pub fn from_votes(optimal: &[usize], failed_trials: usize) -> Result<Self, SelectError> {
        let mut votes = BTreeMap::new();
        for &k in optimal {
            *votes.entry(k).or_insert(0usize) += 1;
        }
        // BTreeMap iterates ascending, so strict > keeps the smaller k on ties.
        let (mode_k, mode_votes) = votes
            .iter()
            .fold(None, |best: Option<(usize, usize)>, (&k, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((k, c)),
            })
            .ok_or(SelectError::AllTrialsFailed)?;
        let total = optimal.len() + failed_trials;
        let mode_frequency = mode_votes as f64 / total as f64;
        let stability = if votes.len() == 1 && failed_trials == 0 {
            Stability::ExtremelyStable
        } else if mode_frequency >= 0.5 {
            Stability::Stable
        } else {
            Stability::Unstable
        };
        Ok(StabilityVerdict {
            votes,
            failed_trials,
            mode_k,
            mode_frequency,
            stability,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrialsResult {
    pub outcomes: Vec<TrialOutcome>,
    pub failures: Vec<TrialFailure>,
    pub verdict: StabilityVerdict,
}

impl TrialsResult {
    /// The earliest trial whose optimum equals the mode.
    pub fn base_trial(&self) -> &TrialOutcome {
        self.outcomes
            .iter()
            .find(|t| t.optimal_k == self.verdict.mode_k)
            .expect("the mode was voted by some trial")
    }
}

/// Seeded uniform sample without replacement, ascending.
pub fn sample_indices(population: usize, sample_size: usize, seed: u64) -> Vec<usize> {
    if sample_size >= population {
        return (0..population).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, population, sample_size).into_vec();
    idx.sort_unstable();
    idx
}

/// Runs the sampled trials one after another; each trial parallelises its
/// own distance matrix, which bounds peak memory to one matrix.
pub fn run_trials(vectors: &[FeatureVector], config: &TrialConfig) -> Result<TrialsResult, SelectError> {
    if config.trials == 0 {
        return Err(SelectError::InvalidConfig("trial count must be positive".into()));
    }
    if config.k_max < 3 {
        return Err(SelectError::InvalidConfig(format!("k_max {} is below 3", config.k_max)));
    }
    if config.sample_size < config.k_max {
        return Err(SelectError::InvalidConfig(format!(
            "sample size {} is below k_max {}",
            config.sample_size, config.k_max
        )));
    }
    if vectors.len() < config.k_max {
        return Err(SelectError::InvalidConfig(format!(
            "population of {} is below k_max {}",
            vectors.len(),
            config.k_max
        )));
    }
    if config.sample_size >= vectors.len() {
        log::warn!(
            "sample size {} covers the population of {}; every trial uses all vectors",
            config.sample_size,
            vectors.len()
        );
    }
    let kinds = Feature::kinds();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for trial in 0..config.trials {
        let start = Instant::now();
        let seed = config.trial_seed(trial);
        let sample = sample_indices(vectors.len(), config.sample_size, seed);
        let rows: Vec<&[f64]> = sample.iter().map(|&i| vectors[i].as_ref()).collect();
        let (series, source) = criterion_series(&kinds, &rows, config.k_max)?;
        let elbow = elbow_table(&series)?;
        match elbow.optimal_k() {
            Ok(k) => {
                let assignment = cut(&source.dendrogram, k)?;
                let seconds = start.elapsed().as_secs_f64();
                log::info!("trial {trial} (seed {seed}): optimal k = {k} in {seconds:.2}s");
                outcomes.push(TrialOutcome {
                    trial,
                    seed,
                    sample_ids: sample.iter().map(|&i| vectors[i].golden_id.clone()).collect(),
                    sample,
                    elbow,
                    optimal_k: k,
                    assignment,
                    space: source.space,
                    seconds,
                });
            }
            Err(e) => {
                log::warn!("trial {trial} (seed {seed}) excluded from the vote: {e}");
                failures.push(TrialFailure {
                    trial,
                    seed,
                    elbow,
                    reason: e.to_string(),
                });
            }
        }
    }
    let optimal: Vec<usize> = outcomes.iter().map(|t| t.optimal_k).collect();
    let verdict = StabilityVerdict::from_votes(&optimal, failures.len())?;
    Ok(TrialsResult {
        outcomes,
        failures,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub golden_id: String,
    pub label: u32,
    pub values: Vec<f64>,
}

/// Frozen classifier: exemplars, their Gower space and the reduction caps
/// that produced their values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentModel {
    pub model_id: String,
    pub as_of: Date,
    pub k: usize,
    pub seed: u64,
    pub base_trial: usize,
    pub features: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub ranges: Vec<f64>,
    pub caps: ReductionCaps,
    pub segment_names: BTreeMap<u32, String>,
    pub exemplars: Vec<Exemplar>,
}

impl SegmentModel {
    /// Model from the base trial of `result`, whose sample indexes `vectors`.
    pub fn from_trials(
        result: &TrialsResult,
        vectors: &[FeatureVector],
        caps: ReductionCaps,
        as_of: Date,
        seed: u64,
        segment_names: BTreeMap<u32, String>,
    ) -> Self {
        let base = result.base_trial();
        let exemplars = base
            .sample
            .iter()
            .zip(&base.assignment.labels)
            .map(|(&i, &label)| Exemplar {
                golden_id: vectors[i].golden_id.clone(),
                label,
                values: vectors[i].values.to_vec(),
            })
            .collect();
        SegmentModel {
            model_id: format!("{as_of}-k{}-seed{seed}-trial{}", base.optimal_k, base.trial),
            as_of,
            k: base.optimal_k,
            seed,
            base_trial: base.trial,
            features: Feature::ALL.iter().map(|f| f.name().to_string()).collect(),
            kinds: base.space.kinds.clone(),
            ranges: base.space.ranges.clone(),
            caps,
            segment_names,
            exemplars,
        }
    }

    pub fn space(&self) -> GowerSpace {
        GowerSpace {
            kinds: self.kinds.clone(),
            ranges: self.ranges.clone(),
        }
    }

    pub fn segment_name(&self, label: u32) -> String {
        self.segment_names
            .get(&label)
            .cloned()
            .unwrap_or_else(|| format!("Segment {label}"))
    }

    pub fn write_json(&self, path: &Path) -> Result<(), SelectError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| io_err(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self, SelectError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(path, e))
    }
}

/// Label of the Gower-nearest exemplar for every vector; equal distances go
/// to the earliest exemplar.
pub fn propagate_1nn<V: AsRef<[f64]> + Sync>(model: &SegmentModel, vectors: &[V]) -> Result<ClusterAssignment, SelectError> {
    if model.exemplars.is_empty() {
        return Err(SelectError::EmptyModel);
    }
    let space = model.space();
    let width = space.width();
    if let Some(e) = model.exemplars.iter().find(|e| e.values.len() != width) {
        return Err(SelectError::SchemaMismatch {
            expected: width,
            found: e.values.len(),
        });
    }
    if let Some(v) = vectors.iter().find(|v| v.as_ref().len() != width) {
        return Err(SelectError::SchemaMismatch {
            expected: width,
            found: v.as_ref().len(),
        });
    }
    let labels = vectors
        .par_iter()
        .map(|q| {
            let q = q.as_ref();
            let mut best = (f64::INFINITY, model.exemplars[0].label);
            for e in &model.exemplars {
                let d = space.distance_unchecked(q, &e.values);
                if d < best.0 {
                    best = (d, e.label);
                    if d == 0.0 {
                        break;
                    }
                }
            }
            best.1
        })
        .collect();
    Ok(ClusterAssignment { k: model.k, labels })
}

/// `segments.csv`: golden_id,cluster_label.
pub fn write_segments_csv(path: &Path, ids: &[&str], assignment: &ClusterAssignment) -> Result<(), SelectError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "golden_id,cluster_label")?;
        for (id, label) in ids.iter().zip(&assignment.labels) {
            writeln!(out, "{id},{label}")?;
        }
        out.flush()
    };
    write().map_err(|e| io_err(path, e))
}

pub fn read_segments_csv(path: &Path) -> Result<BTreeMap<String, u32>, SelectError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let label = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| io_err(path, format!("bad cluster label in {rec:?}")))?;
        out.insert(rec.get(0).unwrap_or_default().to_string(), label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_constant_series_have_no_elbow() {
        let linear: Vec<f64> = (0..20).map(|i| 1.0 - 0.04 * i as f64).collect();
        let t = elbow_table(&linear).unwrap();
        assert!(t.rows.iter().all(|r| r.elbow_binary != Some(true)));
        assert!(matches!(t.optimal_k(), Err(SelectError::NoElbowFound)));

        let constant = vec![1.0; 20];
        let t = elbow_table(&constant).unwrap();
        assert!(t.rows[1..].iter().all(|r| r.first_order_difference == Some(0.0)));
        assert!(matches!(t.optimal_k(), Err(SelectError::NoElbowFound)));
    }

    #[test]
    fn sharp_knee_is_found() {
        // slope 0.2 until k = 4, then 0.01
        let c: Vec<f64> = (1..=12)
            .map(|k| if k <= 4 { 1.0 - 0.2 * (k - 1) as f64 } else { 0.4 - 0.01 * (k - 4) as f64 })
            .collect();
        assert_eq!(elbow_table(&c).unwrap().optimal_k().unwrap(), 4);
    }

    #[test]
    fn equal_strengths_pick_smaller_k() {
        let mut rows: Vec<ElbowRow> = (1..=12)
            .map(|k| ElbowRow {
                k,
                criterion: 1.0,
                first_order_difference: None,
                second_order_difference: None,
                elbow_binary: Some(false),
                relative_strength: Some(0.0),
            })
            .collect();
        rows[3].relative_strength = Some(0.01);
        rows[8].relative_strength = Some(0.01);
        assert_eq!(ElbowTable { rows }.optimal_k().unwrap(), 4);
    }

    #[test]
    fn series_validation() {
        assert!(matches!(elbow_table(&[1.0, 0.5]), Err(SelectError::SeriesTooShort(2))));
        assert!(matches!(elbow_table(&[0.9, 0.5, 0.4]), Err(SelectError::BadFirstCriterion(_))));
    }

    #[test]
    fn csv_formatting() {
        let t = elbow_table(&[1.0, 0.975, 0.883, 0.82]).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "1,1,-,-,-,-");
        assert_eq!(lines[2], "2,0.975,0.025,-,0,0");
        assert_eq!(lines[4], "4,0.82,0.063,0.029,0,0");
        assert_eq!(round3(-0.0001), "0");
        assert_eq!(round3(-0.067), "-0.067");
    }

    #[test]
    fn verdict_classes() {
        let v = StabilityVerdict::from_votes(&[8; 15], 0).unwrap();
        assert_eq!(v.stability, Stability::ExtremelyStable);
        let mut votes = vec![8; 8];
        votes.extend([4, 4, 5, 6, 7, 9, 11]);
        let v = StabilityVerdict::from_votes(&votes, 0).unwrap();
        assert_eq!((v.mode_k, v.stability), (8, Stability::Stable));
        assert_eq!(v.votes.values().sum::<usize>(), 15);
        let v = StabilityVerdict::from_votes(&[3, 3, 4, 4, 5, 6], 0).unwrap();
        assert_eq!((v.mode_k, v.stability), (3, Stability::Unstable));
        let v = StabilityVerdict::from_votes(&[5, 5], 1).unwrap();
        assert_eq!(v.stability, Stability::Stable);
        assert!(StabilityVerdict::from_votes(&[], 3).is_err());
    }

    #[test]
    fn sampling_is_seeded_sorted_and_unique() {
        let a = sample_indices(1000, 100, 7);
        assert_eq!(a, sample_indices(1000, 100, 7));
        assert_ne!(a, sample_indices(1000, 100, 8));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_indices(5, 10, 1), vec![0, 1, 2, 3, 4]);
    }

    fn toy_model(exemplars: Vec<(Vec<f64>, u32)>) -> SegmentModel {
        SegmentModel {
            model_id: "m".into(),
            as_of: Date::from_ymd_opt(2020, 1, 1).unwrap(),
            k: 2,
            seed: 0,
            base_trial: 0,
            features: vec!["x".into(), "y".into()],
            kinds: vec![FeatureKind::Numeric, FeatureKind::Binary],
            ranges: vec![10.0, 1.0],
            caps: ReductionCaps { caps: vec![] },
            segment_names: BTreeMap::new(),
            exemplars: exemplars
                .into_iter()
                .enumerate()
                .map(|(i, (values, label))| Exemplar {
                    golden_id: format!("E{i}"),
                    label,
                    values,
                })
                .collect(),
        }
    }

    #[test]
    fn nearest_neighbour_rules() {
        let m = toy_model(vec![(vec![0.0, 0.0], 1), (vec![4.0, 0.0], 2), (vec![9.0, 1.0], 1)]);
        let own = propagate_1nn(&m, &[[0.0, 0.0], [4.0, 0.0], [9.0, 1.0]]).unwrap();
        assert_eq!(own.labels, vec![1, 2, 1]);
        // 2.0 is equidistant from exemplars 0 and 1
        assert_eq!(propagate_1nn(&m, &[[2.0, 0.0]]).unwrap().labels, vec![1]);
        let m2 = toy_model(vec![(vec![4.0, 0.0], 2), (vec![0.0, 0.0], 1)]);
        assert_eq!(propagate_1nn(&m2, &[[2.0, 0.0]]).unwrap().labels, vec![2]);

        assert!(matches!(
            propagate_1nn(&m, &[vec![1.0]]),
            Err(SelectError::SchemaMismatch { expected: 2, found: 1 })
        ));
        let empty = toy_model(vec![]);
        assert!(matches!(propagate_1nn(&empty, &[[0.0, 0.0]]), Err(SelectError::EmptyModel)));
    }

    #[test]
    fn model_and_segments_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy_model(vec![(vec![0.0, 0.0], 1), (vec![4.0, 1.0], 2)]);
        let path = dir.path().join("model.json");
        m.write_json(&path).unwrap();
        assert_eq!(SegmentModel::read_json(&path).unwrap(), m);

        let seg = dir.path().join("segments.csv");
        let a = ClusterAssignment { k: 2, labels: vec![2, 1] };
        write_segments_csv(&seg, &["A", "B"], &a).unwrap();
        assert_eq!(std::fs::read_to_string(&seg).unwrap(), "golden_id,cluster_label\nA,2\nB,1\n");
        let back = read_segments_csv(&seg).unwrap();
        assert_eq!(back["A"], 2);
    }
}
