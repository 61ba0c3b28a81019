//! Segment membership over time.
//!
//! A trained model is replayed at earlier timestamps with its frozen caps and
//! Gower ranges, so labels at different timestamps live in one space.
//! Consecutive snapshots are compared profile by profile; profiles that enter
//! the cohort between two timestamps come from the New Guests node.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::Months;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::features::{build_features, Feature, FeatureError, FeatureVector};
use crate::golden::GoldenMap;
use crate::pms::{Dataset, Date};
use crate::select::{propagate_1nn, SegmentModel, SelectError};

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("no profile has arrived before {0}")]
    EmptyCohort(Date),
    #[error("timestamp {t} is after the model's training date {model}")]
    AfterModel { t: Date, model: Date },
    #[error("timestamps must increase: {from} is not before {to}")]
    TimestampOrder { from: Date, to: Date },
    #[error("snapshots come from different models: {0} and {1}")]
    ModelMismatch(String, String),
    #[error("profile {0} left the cohort between snapshots")]
    CohortShrank(String),
    #[error("no profile moved from {from} to {to}")]
    EmptyTransition { from: SegmentNode, to: SegmentNode },
    #[error("new guests have no earlier feature vector to compare with")]
    NoBaseline,
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl fmt::Display) -> TimelineError {
    TimelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SegmentNode {
    NewGuests,
    Segment(u32),
    Outflow,
}

impl fmt::Display for SegmentNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentNode::NewGuests => f.write_str("NewGuests"),
            SegmentNode::Segment(l) => write!(f, "{l}"),
            SegmentNode::Outflow => f.write_str("Outflow"),
        }
    }
}

impl FromStr for SegmentNode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "NewGuests" => Ok(SegmentNode::NewGuests),
            "Outflow" => Ok(SegmentNode::Outflow),
            _ => s
                .parse()
                .map(SegmentNode::Segment)
                .map_err(|_| format!("unknown segment node {s:?}")),
        }
    }
}

impl Serialize for SegmentNode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SegmentNode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Labels of the cohort at one timestamp, with the raw feature vectors they
/// were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotAssignment {
    pub timestamp: Date,
    pub model_id: String,
    pub labels: BTreeMap<String, SegmentNode>,
    pub features: Vec<FeatureVector>,
}

impl SnapshotAssignment {
    pub fn cohort_size(&self) -> usize {
        self.labels.len()
    }

    pub fn counts(&self) -> BTreeMap<SegmentNode, usize> {
        let mut out = BTreeMap::new();
        for &node in self.labels.values() {
            *out.entry(node).or_insert(0) += 1;
        }
        out
    }
}

/// Labels the cohort at `t` with `model`. With `outflow_after_years`, guests
/// whose latest arrival is at least that many years before `t` are moved to
/// the Outflow node.
pub fn snapshot(
    dataset: &Dataset,
    golden_map: &GoldenMap,
    model: &SegmentModel,
    t: Date,
    outflow_after_years: Option<u32>,
) -> Result<SnapshotAssignment, TimelineError> {
    if t > model.as_of {
        return Err(TimelineError::AfterModel { t, model: model.as_of });
    }
    let features = match build_features(dataset, golden_map, t) {
        Err(FeatureError::EmptyCohort(d)) => return Err(TimelineError::EmptyCohort(d)),
        other => other?,
    };
    let reduced = model.caps.apply(&features);
    let assignment = propagate_1nn(model, &reduced)?;

    let inactive_before = outflow_after_years.map(|y| {
        t.checked_sub_months(Months::new(12 * y))
            .expect("outflow window stays within the calendar")
    });
    let last_arrival: HashMap<&str, Date> = match inactive_before {
        None => HashMap::new(),
        Some(_) => {
            let mut last = HashMap::new();
            for r in dataset.reservations.iter().filter(|r| r.arrival_date < t) {
                let e = last.entry(golden_map.golden_of(&r.profile_id)).or_insert(r.arrival_date);
                *e = (*e).max(r.arrival_date);
            }
            last
        }
    };

    let labels = features
        .iter()
        .zip(&assignment.labels)
        .map(|(v, &label)| {
            let outflow = inactive_before
                .is_some_and(|limit| last_arrival.get(v.golden_id.as_str()).is_some_and(|&d| d <= limit));
            let node = if outflow { SegmentNode::Outflow } else { SegmentNode::Segment(label) };
            (v.golden_id.clone(), node)
        })
        .collect();
    Ok(SnapshotAssignment {
        timestamp: t,
        model_id: model.model_id.clone(),
        labels,
        features,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCount {
    pub from: SegmentNode,
    pub to: SegmentNode,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub from_timestamp: Date,
    pub to_timestamp: Date,
    pub model_id: String,
    /// Non-zero cells ordered by `(from, to)`.
    pub counts: Vec<TransitionCount>,
}

impl TransitionTable {
    pub fn count(&self, from: SegmentNode, to: SegmentNode) -> usize {
        self.counts
            .iter()
            .find(|c| c.from == from && c.to == to)
            .map_or(0, |c| c.count)
    }

    pub fn row_sum(&self, from: SegmentNode) -> usize {
        self.counts.iter().filter(|c| c.from == from).map(|c| c.count).sum()
    }

    pub fn column_sum(&self, to: SegmentNode) -> usize {
        self.counts.iter().filter(|c| c.to == to).map(|c| c.count).sum()
    }

    pub fn new_guests(&self) -> usize {
        self.row_sum(SegmentNode::NewGuests)
    }

    /// Cohort size at the earlier timestamp.
    pub fn total_from(&self) -> usize {
        self.counts
            .iter()
            .filter(|c| c.from != SegmentNode::NewGuests)
            .map(|c| c.count)
            .sum()
    }

    /// Cohort size at the later timestamp.
    pub fn total_to(&self) -> usize {
        self.counts.iter().map(|c| c.count).sum()
    }
}

/// Counts profiles by (node at `s1`, node at `s2`).
pub fn transitions(s1: &SnapshotAssignment, s2: &SnapshotAssignment) -> Result<TransitionTable, TimelineError> {
    if s1.timestamp >= s2.timestamp {
        return Err(TimelineError::TimestampOrder {
            from: s1.timestamp,
            to: s2.timestamp,
        });
    }
    if s1.model_id != s2.model_id {
        return Err(TimelineError::ModelMismatch(s1.model_id.clone(), s2.model_id.clone()));
    }
    if let Some(id) = s1.labels.keys().find(|id| !s2.labels.contains_key(*id)) {
        return Err(TimelineError::CohortShrank(id.clone()));
    }
    let mut cells: BTreeMap<(SegmentNode, SegmentNode), usize> = BTreeMap::new();
    for (id, &to) in &s2.labels {
        let from = s1.labels.get(id).copied().unwrap_or(SegmentNode::NewGuests);
        *cells.entry((from, to)).or_insert(0) += 1;
    }
    Ok(TransitionTable {
        from_timestamp: s1.timestamp,
        to_timestamp: s2.timestamp,
        model_id: s1.model_id.clone(),
        counts: cells
            .into_iter()
            .map(|((from, to), count)| TransitionCount { from, to, count })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDelta {
    pub feature: Feature,
    /// Mean change per profile, or the percent change of the mean for
    /// revenue features (`None` when the earlier mean is zero).
    pub delta: Option<f64>,
    pub percent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionExplanation {
    pub from: SegmentNode,
    pub to: SegmentNode,
    pub profiles: usize,
    pub deltas: Vec<FeatureDelta>,
}

/// Mean feature change over the profiles that moved from `from` to `to`,
/// computed on the unreduced vectors.
pub fn explain(
    from: SegmentNode,
    to: SegmentNode,
    s1: &SnapshotAssignment,
    s2: &SnapshotAssignment,
) -> Result<TransitionExplanation, TimelineError> {
    if from == SegmentNode::NewGuests {
        return Err(TimelineError::NoBaseline);
    }
    let before: HashMap<&str, &FeatureVector> = s1.features.iter().map(|v| (v.golden_id.as_str(), v)).collect();
    let pairs: Vec<(&FeatureVector, &FeatureVector)> = s2
        .features
        .iter()
        .filter(|v| s2.labels.get(&v.golden_id) == Some(&to) && s1.labels.get(&v.golden_id) == Some(&from))
        .filter_map(|v| before.get(v.golden_id.as_str()).map(|b| (*b, v)))
        .collect();
    if pairs.is_empty() {
        return Err(TimelineError::EmptyTransition { from, to });
    }
    let n = pairs.len() as f64;
    let deltas = Feature::ALL
        .iter()
        .map(|&f| {
            let mean_before = pairs.iter().map(|(b, _)| b.get(f)).sum::<f64>() / n;
            let mean_after = pairs.iter().map(|(_, a)| a.get(f)).sum::<f64>() / n;
            if f.is_revenue() {
                FeatureDelta {
                    feature: f,
                    delta: (mean_before != 0.0).then(|| (mean_after - mean_before) / mean_before * 100.0),
                    percent: true,
                }
            } else {
                FeatureDelta {
                    feature: f,
                    delta: Some(mean_after - mean_before),
                    percent: false,
                }
            }
        })
        .collect();
    Ok(TransitionExplanation {
        from,
        to,
        profiles: pairs.len(),
        deltas,
    })
}

pub const DEFAULT_FLOW_THRESHOLD: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: String,
    pub timestamp: Date,
    pub segment: SegmentNode,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowLink {
    pub from: String,
    pub to: String,
    pub count: usize,
    /// Share of the cohort at the later timestamp, 6 decimals.
    pub share: f64,
    pub displayed: bool,
}

/// Sankey-ready graph: one node per (timestamp, segment) and one link per
/// non-zero transition cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowExport {
    pub threshold: f64,
    pub nodes: Vec<FlowNode>,
    pub links: Vec<FlowLink>,
}

fn node_id(t: Date, node: SegmentNode) -> String {
    format!("{t}/{node}")
}

/// Builds the flow graph; links whose share is below `threshold` stay in the
/// export with `displayed = false`.
pub fn flow_export(tables: &[TransitionTable], threshold: f64) -> Result<FlowExport, TimelineError> {
    for w in tables.windows(2) {
        if w[0].to_timestamp != w[1].from_timestamp {
            return Err(TimelineError::TimestampOrder {
                from: w[0].to_timestamp,
                to: w[1].from_timestamp,
            });
        }
    }
    // Sources come from the first table and the New Guests rows; every other
    // node is a column total, which also equals the next table's row total.
    let mut nodes: BTreeMap<(Date, SegmentNode), usize> = BTreeMap::new();
    let mut links = Vec::new();
    for (i, table) in tables.iter().enumerate() {
        let total = table.total_to();
        for c in &table.counts {
            if i == 0 || c.from == SegmentNode::NewGuests {
                *nodes.entry((table.from_timestamp, c.from)).or_insert(0) += c.count;
            }
            *nodes.entry((table.to_timestamp, c.to)).or_insert(0) += c.count;
            let share = if total == 0 { 0.0 } else { c.count as f64 / total as f64 };
            links.push(FlowLink {
                from: node_id(table.from_timestamp, c.from),
                to: node_id(table.to_timestamp, c.to),
                count: c.count,
                share: (share * 1e6).round() / 1e6,
                displayed: c.count > 0 && c.count as f64 >= threshold * total as f64,
            });
        }
    }
    let nodes = nodes
        .into_iter()
        .map(|((timestamp, segment), count)| FlowNode {
            id: node_id(timestamp, segment),
            timestamp,
            segment,
            count,
        })
        .collect();
    Ok(FlowExport {
        threshold,
        nodes,
        links,
    })
}

impl FlowExport {
    pub fn write_json(&self, path: &Path) -> Result<(), TimelineError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| io_err(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }
}

/// `transitions.csv`: from_timestamp,to_timestamp,from_segment,to_segment,count.
pub fn transitions_csv(tables: &[TransitionTable]) -> String {
    let mut out = String::from("from_timestamp,to_timestamp,from_segment,to_segment,count\n");
    for t in tables {
        for c in &t.counts {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.from_timestamp, t.to_timestamp, c.from, c.to, c.count
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Date {
        s.parse().unwrap()
    }

    fn snap(t: &str, labels: &[(&str, SegmentNode)]) -> SnapshotAssignment {
        SnapshotAssignment {
            timestamp: d(t),
            model_id: "m".into(),
            labels: labels.iter().map(|(id, n)| (id.to_string(), *n)).collect(),
            features: vec![],
        }
    }

    use SegmentNode::*;

    #[test]
    fn node_text_round_trip() {
        for n in [NewGuests, Segment(7), Outflow] {
            assert_eq!(n.to_string().parse::<SegmentNode>().unwrap(), n);
        }
        assert!("x".parse::<SegmentNode>().is_err());
        assert_eq!(serde_json::to_string(&Segment(3)).unwrap(), "\"3\"");
    }

    #[test]
    fn unchanged_cohort_is_diagonal() {
        let s1 = snap("2019-01-01", &[("A", Segment(1)), ("B", Segment(2))]);
        let mut s2 = s1.clone();
        s2.timestamp = d("2020-01-01");
        let t = transitions(&s1, &s2).unwrap();
        assert_eq!(t.new_guests(), 0);
        assert_eq!(t.count(Segment(1), Segment(1)), 1);
        assert_eq!(t.count(Segment(1), Segment(2)), 0);
        assert_eq!(t.total_from(), t.total_to());
    }

    #[test]
    fn new_guest_and_conservation() {
        let s1 = snap("2019-01-01", &[("A", Segment(1)), ("B", Segment(2))]);
        let s2 = snap("2020-01-01", &[("A", Segment(2)), ("B", Segment(2)), ("C", Segment(1))]);
        let t = transitions(&s1, &s2).unwrap();
        assert_eq!(t.new_guests(), 1);
        assert_eq!(t.total_to(), t.total_from() + t.new_guests());
        assert_eq!(t.column_sum(Segment(2)), 2);
        assert_eq!(t.row_sum(Segment(1)), 1);
    }

    #[test]
    fn transition_errors() {
        let s1 = snap("2019-01-01", &[("A", Segment(1))]);
        let s2 = snap("2018-01-01", &[("A", Segment(1))]);
        assert!(matches!(transitions(&s1, &s2), Err(TimelineError::TimestampOrder { .. })));
        let mut s3 = snap("2020-01-01", &[("A", Segment(1))]);
        s3.model_id = "other".into();
        assert!(matches!(transitions(&s1, &s3), Err(TimelineError::ModelMismatch(..))));
        let s4 = snap("2020-01-01", &[("B", Segment(1))]);
        assert!(matches!(transitions(&s1, &s4), Err(TimelineError::CohortShrank(_))));
    }

    #[test]
    fn threshold_arithmetic() {
        let mut labels: Vec<(String, SegmentNode)> = (0..10_000).map(|i| (format!("P{i:05}"), Segment(1))).collect();
        let s1 = SnapshotAssignment {
            timestamp: d("2019-01-01"),
            model_id: "m".into(),
            labels: labels.iter().cloned().collect(),
            features: vec![],
        };
        labels[0].1 = Segment(2);
        let s2 = SnapshotAssignment {
            timestamp: d("2020-01-01"),
            labels: labels.into_iter().collect(),
            ..s1.clone()
        };
        let t = transitions(&s1, &s2).unwrap();
        let f = flow_export(std::slice::from_ref(&t), DEFAULT_FLOW_THRESHOLD).unwrap();
        let small = f.links.iter().find(|l| l.count == 1).unwrap();
        assert!(!small.displayed);
        assert_eq!(small.share, 0.0001);
        let all = flow_export(std::slice::from_ref(&t), 0.0).unwrap();
        assert!(all.links.iter().all(|l| l.displayed));
        assert_eq!(f.links.iter().map(|l| l.count).sum::<usize>(), t.total_to());
    }

    #[test]
    fn flow_nodes_chain_over_three_timestamps() {
        let s1 = snap("2018-01-01", &[("A", Segment(1))]);
        let s2 = snap("2019-01-01", &[("A", Segment(1)), ("B", Segment(2))]);
        let s3 = snap("2020-01-01", &[("A", Segment(2)), ("B", Segment(2)), ("C", Segment(1))]);
        let tables = [transitions(&s1, &s2).unwrap(), transitions(&s2, &s3).unwrap()];
        let f = flow_export(&tables, 0.001).unwrap();
        let count = |id: &str| f.nodes.iter().find(|n| n.id == id).unwrap().count;
        assert_eq!(count("2018-01-01/1"), 1);
        assert_eq!(count("2019-01-01/1"), 1);
        assert_eq!(count("2019-01-01/2"), 1);
        assert_eq!(count("2018-01-01/NewGuests"), 1);
        assert_eq!(count("2019-01-01/NewGuests"), 1);
        assert_eq!(count("2020-01-01/2"), 2);
        assert!(flow_export(&[tables[1].clone(), tables[0].clone()], 0.0).is_err());

        let csv = transitions_csv(&tables);
        assert!(csv.contains("2018-01-01,2019-01-01,NewGuests,2,1\n"));
    }

    #[test]
    fn explanation_needs_movers() {
        let s1 = snap("2019-01-01", &[("A", Segment(1))]);
        let s2 = snap("2020-01-01", &[("A", Segment(1))]);
        assert!(matches!(
            explain(Segment(1), Segment(2), &s1, &s2),
            Err(TimelineError::EmptyTransition { .. })
        ));
        assert!(matches!(explain(NewGuests, Segment(1), &s1, &s2), Err(TimelineError::NoBaseline)));
    }
}
