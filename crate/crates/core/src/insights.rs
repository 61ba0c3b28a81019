//! Descriptive statistics, per-segment attribute overviews and opt-in
//! target lists. Shares are percentages.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{Datelike, Duration};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{is_week_stay, is_weekend_stay, Feature, FeatureKind, FeatureVector};
use crate::pms::{ChannelClass, Dataset, Date, Profile, Reservation, Status};

#[derive(Debug, Error)]
pub enum InsightsError {
    #[error("assignment has {labels} labels for {vectors} feature vectors")]
    SizeMismatch { labels: usize, vectors: usize },
    #[error("target list needs at least one segment")]
    NoSegments,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> InsightsError {
    InsightsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn pct(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        100.0 * part / whole
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusMix {
    pub historic: f64,
    pub cancelled: f64,
    pub no_show: f64,
}

impl StatusMix {
    fn from_weights(h: f64, c: f64, n: f64) -> Self {
        let total = h + c + n;
        StatusMix {
            historic: pct(h, total),
            cancelled: pct(c, total),
            no_show: pct(n, total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatPoint {
    /// `YYYY-MM` of the arrival month.
    pub month: String,
    pub staying_profiles: usize,
    pub repeat_all_time: f64,
    pub repeat_trailing_365: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionCell {
    pub group: bool,
    pub company: bool,
    pub agency: bool,
    pub first_time_stayers: usize,
    pub returned: usize,
    pub retention: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayTypeShares {
    pub year: i32,
    pub stays: usize,
    pub week: f64,
    pub weekend: f64,
    pub other: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeBin {
    pub from_days: i64,
    /// Exclusive; `None` for the open last bin.
    pub to_days: Option<i64>,
    pub reservations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelShares {
    pub direct: f64,
    pub indirect: f64,
}

/// `eda.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaReport {
    pub reservations: usize,
    pub profiles: usize,
    pub status_by_reservation: StatusMix,
    pub status_by_room_night: StatusMix,
    /// Profiles with more than one stay among profiles with at least one.
    pub repeat_share: f64,
    pub repeat_series: Vec<RepeatPoint>,
    pub retention: Vec<RetentionCell>,
    pub stay_types: Vec<StayTypeShares>,
    pub lead_time_mean: f64,
    pub lead_time_histogram: Vec<LeadTimeBin>,
    pub channels: ChannelShares,
}

pub const LEAD_TIME_BIN_DAYS: i64 = 30;
pub const LEAD_TIME_BINS: i64 = 12;

/// Exploratory statistics over all reservations; repeat, retention, stay
/// type and lead time figures use stays (Historic reservations) only.
pub fn eda_report(dataset: &Dataset) -> EdaReport {
    let res = &dataset.reservations;
    let weight = |f: &dyn Fn(&Reservation) -> f64, s: Status| res.iter().filter(|r| r.status == s).map(f).sum::<f64>();
    let status_by_reservation = StatusMix::from_weights(
        weight(&|_| 1.0, Status::Historic),
        weight(&|_| 1.0, Status::Cancelled),
        weight(&|_| 1.0, Status::NoShow),
    );
    let nights = |r: &Reservation| r.length_of_stay as f64;
    let status_by_room_night = StatusMix::from_weights(
        weight(&nights, Status::Historic),
        weight(&nights, Status::Cancelled),
        weight(&nights, Status::NoShow),
    );

    let stays: Vec<&Reservation> = res.iter().filter(|r| r.status == Status::Historic).collect();
    let mut by_profile: BTreeMap<&str, Vec<&Reservation>> = BTreeMap::new();
    for r in &stays {
        by_profile.entry(r.profile_id.as_str()).or_default().push(r);
    }
    for v in by_profile.values_mut() {
        v.sort_by(|a, b| (a.arrival_date, &a.reservation_id).cmp(&(b.arrival_date, &b.reservation_id)));
    }
    let repeaters = by_profile.values().filter(|v| v.len() > 1).count();
    let repeat_share = pct(repeaters as f64, by_profile.len() as f64);

    let repeat_series = repeat_series(&by_profile);

    let mut retention: BTreeMap<(bool, bool, bool), (usize, usize)> = BTreeMap::new();
    for v in by_profile.values() {
        let first = v[0];
        let cell = retention
            .entry((first.group_id.is_some(), first.company_id.is_some(), first.agency_id.is_some()))
            .or_default();
        cell.0 += 1;
        cell.1 += usize::from(v.len() > 1);
    }
    let retention = retention
        .into_iter()
        .map(|((group, company, agency), (n, back))| RetentionCell {
            group,
            company,
            agency,
            first_time_stayers: n,
            returned: back,
            retention: pct(back as f64, n as f64),
        })
        .collect();

    let mut years: BTreeMap<i32, (usize, usize, usize)> = BTreeMap::new();
    for r in &stays {
        let e = years.entry(r.arrival_date.year()).or_default();
        e.0 += 1;
        e.1 += usize::from(is_week_stay(r));
        e.2 += usize::from(is_weekend_stay(r));
    }
    let stay_types = years
        .into_iter()
        .map(|(year, (n, week, weekend))| StayTypeShares {
            year,
            stays: n,
            week: pct(week as f64, n as f64),
            weekend: pct(weekend as f64, n as f64),
            other: pct((n - week - weekend) as f64, n as f64),
        })
        .collect();

    let lead_time_mean = if stays.is_empty() {
        0.0
    } else {
        stays.iter().map(|r| r.lead_time as f64).sum::<f64>() / stays.len() as f64
    };
    let mut bins = vec![0usize; LEAD_TIME_BINS as usize + 1];
    for r in &stays {
        bins[(r.lead_time / LEAD_TIME_BIN_DAYS).min(LEAD_TIME_BINS) as usize] += 1;
    }
    let lead_time_histogram = bins
        .into_iter()
        .enumerate()
        .map(|(i, reservations)| {
            let i = i as i64;
            LeadTimeBin {
                from_days: i * LEAD_TIME_BIN_DAYS,
                to_days: (i < LEAD_TIME_BINS).then_some((i + 1) * LEAD_TIME_BIN_DAYS),
                reservations,
            }
        })
        .collect();

    let direct = res.iter().filter(|r| r.channel_class == ChannelClass::Direct).count();
    let channels = ChannelShares {
        direct: pct(direct as f64, res.len() as f64),
        indirect: pct((res.len() - direct) as f64, res.len() as f64),
    };

    EdaReport {
        reservations: res.len(),
        profiles: dataset.profiles.len(),
        status_by_reservation,
        status_by_room_night,
        repeat_share,
        repeat_series,
        retention,
        stay_types,
        lead_time_mean,
        lead_time_histogram,
        channels,
    }
}

/// Per arrival month: the share of staying profiles with an earlier stay
/// (ever, and within the preceding 365 days). Months starting within 365
/// days of the first stay are left out as warm-up.
fn repeat_series(by_profile: &BTreeMap<&str, Vec<&Reservation>>) -> Vec<RepeatPoint> {
    let Some(first) = by_profile.values().map(|v| v[0].arrival_date).min() else {
        return Vec::new();
    };
    let warm_up_end = first + Duration::days(365);
    let month_start = |d: Date| d.with_day(1).expect("day 1 exists");

    // month -> (staying, with earlier stay, with stay in the last 365 days)
    let mut months: BTreeMap<Date, (usize, usize, usize)> = BTreeMap::new();
    for stays in by_profile.values() {
        let mut seen_month = None;
        for (i, r) in stays.iter().enumerate() {
            let m = month_start(r.arrival_date);
            if seen_month == Some(m) {
                continue;
            }
            seen_month = Some(m);
            let e = months.entry(m).or_default();
            e.0 += 1;
            if i > 0 {
                e.1 += 1;
                let prev = stays[i - 1].arrival_date;
                e.2 += usize::from(prev >= r.arrival_date - Duration::days(365));
            }
        }
    }
    months
        .into_iter()
        .filter(|(m, _)| *m >= warm_up_end)
        .map(|(m, (n, ever, recent))| RepeatPoint {
            month: m.format("%Y-%m").to_string(),
            staying_profiles: n,
            repeat_all_time: pct(ever as f64, n as f64),
            repeat_trailing_365: pct(recent as f64, n as f64),
        })
        .collect()
}

impl EdaReport {
    pub fn write_json(&self, path: &Path) -> Result<(), InsightsError> {
        write_json(path, self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), InsightsError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Cell {
    /// Mean; percentage features are scaled to 0..100.
    Mean { value: f64 },
    /// Mean relative to the population mean, which is 100.
    Relative { value: f64 },
    Binary { true_pct: f64, false_pct: f64 },
}

/// One column of the attribute overview. `label` is `None` for the overall
/// population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentProfile {
    pub label: Option<u32>,
    pub size: usize,
    pub share: f64,
    pub cells: Vec<(Feature, Cell)>,
}

impl SegmentProfile {
    pub fn cell(&self, f: Feature) -> Option<Cell> {
        self.cells.iter().find(|(g, _)| *g == f).map(|(_, c)| *c)
    }
}

/// Features listed in the overview: everything but RevenueAverage.
pub fn profile_features() -> impl Iterator<Item = Feature> {
    Feature::ALL.into_iter().filter(|&f| f != Feature::RevenueAverage)
}

/// Per-segment columns in label order followed by the overall column.
pub fn segment_profile(vectors: &[FeatureVector], labels: &[u32]) -> Result<Vec<SegmentProfile>, InsightsError> {
    if vectors.len() != labels.len() {
        return Err(InsightsError::SizeMismatch {
            labels: labels.len(),
            vectors: vectors.len(),
        });
    }
    let mean_of = |members: &[&FeatureVector], f: Feature| {
        if members.is_empty() {
            0.0
        } else {
            members.iter().map(|v| v.get(f)).sum::<f64>() / members.len() as f64
        }
    };
    let all: Vec<&FeatureVector> = vectors.iter().collect();
    let overall_means: HashMap<Feature, f64> = profile_features().map(|f| (f, mean_of(&all, f))).collect();
    let n = vectors.len() as f64;

    let column = |label: Option<u32>, members: &[&FeatureVector]| {
        let cells = profile_features()
            .map(|f| {
                let m = mean_of(members, f);
                let cell = if f.is_revenue() {
                    let base = overall_means[&f];
                    Cell::Relative {
                        value: if base != 0.0 { 100.0 * m / base } else { 100.0 },
                    }
                } else {
                    match f.kind() {
                        FeatureKind::Binary => Cell::Binary {
                            true_pct: 100.0 * m,
                            false_pct: 100.0 * (1.0 - m),
                        },
                        FeatureKind::Percentage => Cell::Mean { value: 100.0 * m },
                        FeatureKind::Numeric => Cell::Mean { value: m },
                    }
                };
                (f, cell)
            })
            .collect();
        SegmentProfile {
            label,
            size: members.len(),
            share: if n > 0.0 { members.len() as f64 / n } else { 0.0 },
            cells,
        }
    };

    let mut groups: BTreeMap<u32, Vec<&FeatureVector>> = BTreeMap::new();
    for (v, &l) in vectors.iter().zip(labels) {
        groups.entry(l).or_default().push(v);
    }
    let mut out: Vec<SegmentProfile> = groups.iter().map(|(&l, m)| column(Some(l), m)).collect();
    out.push(column(None, &all));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighlightRule {
    /// Means at or above `high` times the overall value are highlighted.
    pub high: f64,
    /// Means below `low` times the overall value are highlighted.
    pub low: f64,
    /// Percentage-point gap for frequencies and percentage features.
    pub gap: f64,
}

impl Default for HighlightRule {
    fn default() -> Self {
        HighlightRule {
            high: 1.5,
            low: 0.5,
            gap: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Highlight {
    pub label: u32,
    pub feature: Feature,
    /// `TRUE` or `FALSE` for binary features, empty otherwise.
    pub category: String,
}

/// Cells that stand out against the overall column. A zero baseline flags
/// any positive segment value.
pub fn characteristic_highlight(profiles: &[SegmentProfile], rule: &HighlightRule) -> Vec<Highlight> {
    let Some(overall) = profiles.iter().find(|p| p.label.is_none()) else {
        return Vec::new();
    };
    let ratio_flag = |s: f64, o: f64| {
        if o == 0.0 {
            s > 0.0
        } else {
            s >= rule.high * o || s < rule.low * o
        }
    };
    let mut out = Vec::new();
    for p in profiles {
        let Some(label) = p.label else { continue };
        for &(f, cell) in &p.cells {
            let Some(base) = overall.cell(f) else { continue };
            let category = match (cell, base) {
                (Cell::Relative { value: s }, Cell::Relative { value: o }) => ratio_flag(s, o).then(String::new),
                (Cell::Mean { value: s }, Cell::Mean { value: o }) => {
                    let hit = if f.kind() == FeatureKind::Percentage {
                        (s - o).abs() >= rule.gap
                    } else {
                        ratio_flag(s, o)
                    };
                    hit.then(String::new)
                }
                (Cell::Binary { true_pct: s, .. }, Cell::Binary { true_pct: o, .. }) => {
                    if s - o >= rule.gap {
                        Some("TRUE".to_string())
                    } else if o - s >= rule.gap {
                        Some("FALSE".to_string())
                    } else {
                        None
                    }
                }
                _ => None,
            };
            if let Some(category) = category {
                out.push(Highlight {
                    label,
                    feature: f,
                    category,
                });
            }
        }
    }
    out
}

/// Category label and the accessor that reads it from a cell.
type CellRow = (&'static str, fn(Cell) -> f64);

/// `segment_profile.csv`: one row per attribute (two for binary ones), one
/// column per segment and a final overall column, 2 decimals.
pub fn segment_profile_csv(profiles: &[SegmentProfile], names: &dyn Fn(u32) -> String) -> String {
    let mut out = String::from("attribute,category");
    for p in profiles {
        out.push(',');
        out.push_str(&p.label.map_or_else(|| "Overall".to_string(), names).replace(',', " "));
    }
    out.push('\n');
    out.push_str("Size,share");
    for p in profiles {
        out.push_str(&format!(",{:.2}", 100.0 * p.share));
    }
    out.push('\n');
    for f in profile_features() {
        let rows: Vec<CellRow> = if f.kind() == FeatureKind::Binary && !f.is_revenue() {
            vec![
                ("FALSE", |c| match c {
                    Cell::Binary { false_pct, .. } => false_pct,
                    _ => f64::NAN,
                }),
                ("TRUE", |c| match c {
                    Cell::Binary { true_pct, .. } => true_pct,
                    _ => f64::NAN,
                }),
            ]
        } else {
            vec![("", |c| match c {
                Cell::Mean { value } | Cell::Relative { value } => value,
                Cell::Binary { .. } => f64::NAN,
            })]
        };
        for (category, get) in rows {
            out.push_str(f.name());
            out.push(',');
            out.push_str(category);
            for p in profiles {
                let v = p.cell(f).map_or(f64::NAN, get);
                out.push_str(&format!(",{:.2}", v + 0.0));
            }
            out.push('\n');
        }
    }
    out
}

/// `highlights.csv`: segment,attribute,category.
pub fn highlights_csv(highlights: &[Highlight]) -> String {
    let mut out = String::from("segment,attribute,category\n");
    for h in highlights {
        out.push_str(&format!("{},{},{}\n", h.label, h.feature.name(), h.category));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub golden_id: String,
    pub email: String,
    pub segment: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetList {
    pub segments: BTreeSet<u32>,
    /// Members of the chosen segments.
    pub members: usize,
    pub targets: Vec<Target>,
}

impl TargetList {
    pub fn share(&self) -> f64 {
        if self.members == 0 {
            0.0
        } else {
            self.targets.len() as f64 / self.members as f64
        }
    }

    /// `targets.csv`: golden_id,email,segment.
    pub fn to_csv(&self) -> Result<String, InsightsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| InsightsError::Io {
            path: "targets.csv".into(),
            message: e.to_string(),
        };
        w.write_record(["golden_id", "email", "segment"]).map_err(err)?;
        for t in &self.targets {
            w.write_record([t.golden_id.as_str(), t.email.as_str(), &t.segment.to_string()])
                .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| InsightsError::Io {
            path: "targets.csv".into(),
            message: e.to_string(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Opt-in profiles with an email address in the chosen segments, ordered by
/// golden id. `labels` maps golden ids to segments.
pub fn target_list(
    labels: &BTreeMap<String, u32>,
    profiles: &[Profile],
    segments: &BTreeSet<u32>,
) -> Result<TargetList, InsightsError> {
    if segments.is_empty() {
        return Err(InsightsError::NoSegments);
    }
    let by_id: HashMap<&str, &Profile> = profiles.iter().map(|p| (p.profile_id.as_str(), p)).collect();
    let mut members = 0;
    let mut targets = Vec::new();
    for (id, &segment) in labels.iter().filter(|(_, s)| segments.contains(s)) {
        members += 1;
        let Some(p) = by_id.get(id.as_str()) else { continue };
        let email = p.email.as_deref().map(str::trim).unwrap_or_default();
        if p.marketing_opt_in && !email.is_empty() {
            targets.push(Target {
                golden_id: id.clone(),
                email: email.to_string(),
                segment,
            });
        }
    }
    Ok(TargetList {
        segments: segments.clone(),
        members,
        targets,
    })
}
