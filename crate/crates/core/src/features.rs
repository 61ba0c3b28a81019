//! The 25-attribute guest profile vector and its value-space reduction.
//!
//! Vectors are built per golden profile from every reservation arriving
//! strictly before the `as_of` date. Revenue excludes `Other` folio lines.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::golden::GoldenMap;
use crate::pms::{ChannelClass, Dataset, Date, Money, Reservation, Status, TxnClass};

pub const FEATURE_COUNT: usize = 25;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no profile has a reservation arriving before {0}")]
    EmptyCohort(Date),
    #[error("dimensionality reduction needs at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("features file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Range-scaled count, decimal or revenue amount.
    Numeric,
    /// Share of a total in [0, 1].
    Percentage,
    Binary,
}

/// Which value-space reduction a feature receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Snap to the 0.2 grid.
    Grid,
    /// Cap at the 95% nearest-rank quantile.
    QuantileCap,
    /// Round to the nearest 100, cap at the rounded 99% quantile.
    RevenueCap,
    Keep,
}

macro_rules! features {
    ($($variant:ident => $name:literal, $kind:ident, $reduction:ident;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Feature {
            $($variant,)*
        }

        impl Feature {
            pub const ALL: [Feature; FEATURE_COUNT] = [$(Feature::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Feature::$variant => $name,)*
                }
            }

            pub fn kind(self) -> FeatureKind {
                match self {
                    $(Feature::$variant => FeatureKind::$kind,)*
                }
            }

            pub fn reduction(self) -> Reduction {
                match self {
                    $(Feature::$variant => Reduction::$reduction,)*
                }
            }
        }
    };
}

features! {
    ReservationsTotal => "ReservationsTotal", Numeric, QuantileCap;
    ReservationsHistoric => "ReservationsHistoric", Percentage, Grid;
    ReservationsCancelled => "ReservationsCancelled", Percentage, Grid;
    ReservationsCompany => "ReservationsCompany", Percentage, Grid;
    ReservationsAgency => "ReservationsAgency", Percentage, Grid;
    ReservationsGroup => "ReservationsGroup", Percentage, Grid;
    ReservationsSourceDirect => "ReservationsSourceDirect", Percentage, Grid;
    ReservationsSourceIndirect => "ReservationsSourceIndirect", Percentage, Grid;
    RevenueTotal => "RevenueTotal", Numeric, RevenueCap;
    RevenueAverage => "RevenueAverage", Numeric, RevenueCap;
    RevenueTotalRoom => "RevenueTotalRoom", Numeric, RevenueCap;
    RevenueTotalAncillary => "RevenueTotalAncillary", Numeric, RevenueCap;
    RepeatBinary => "RepeatBinary", Binary, Keep;
    RepeatTotal => "RepeatTotal", Numeric, QuantileCap;
    RepeatFrequencyMediumBinary => "RepeatFrequencyMediumBinary", Binary, Keep;
    RepeatLast365Binary => "RepeatLast365Binary", Binary, Keep;
    WeekStay => "WeekStay", Percentage, Grid;
    WeekendStay => "WeekendStay", Percentage, Grid;
    LosAverage => "LOSAverage", Numeric, QuantileCap;
    SingleNightBinary => "SingleNightBinary", Binary, Keep;
    ShortStayBinary => "ShortStayBinary", Binary, Keep;
    MediumStayBinary => "MediumStayBinary", Binary, Keep;
    LastMinuteBookerBinary => "LastMinuteBookerBinary", Binary, Keep;
    EarlyBirdBookerBinary => "EarlyBirdBookerBinary", Binary, Keep;
    LoyaltyBinary => "LoyaltyBinary", Binary, Keep;
}

impl Feature {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_revenue(self) -> bool {
        self.reduction() == Reduction::RevenueCap
    }

    pub fn kinds() -> Vec<FeatureKind> {
        Feature::ALL.iter().map(|f| f.kind()).collect()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, FeatureError> {
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| FeatureError::Format(format!("unknown feature {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub golden_id: String,
    pub as_of: Date,
    pub values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.values[f.index()]
    }

    pub fn set(&mut self, f: Feature, v: f64) {
        self.values[f.index()] = v;
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Inputs of the business-logic flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawAggregates {
    pub los_average: f64,
    pub lead_time_average: f64,
    pub repeat_total: f64,
    pub has_loyalty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BusinessFlags {
    pub room_night_stay: bool,
    pub short_stay: bool,
    pub long_stay: bool,
    pub last_minute: bool,
    pub early_bird: bool,
    pub repeat_frequency_medium: bool,
    pub loyalty_member: bool,
}

pub const LAST_MINUTE_LEAD_DAYS: f64 = 3.0;
pub const EARLY_BIRD_LEAD_DAYS: f64 = 45.0;

/// Hotel business rules on profile-level aggregates.
///
/// The stay-length bands partition every positive average: `(0, 1]`,
/// `(1, 3]` and above 3 nights.
pub fn apply_business_logic(raw: &RawAggregates) -> BusinessFlags {
    let los = raw.los_average;
    BusinessFlags {
        room_night_stay: los > 0.0 && los <= 1.0,
        short_stay: los > 1.0 && los <= 3.0,
        long_stay: los > 3.0,
        last_minute: raw.lead_time_average < LAST_MINUTE_LEAD_DAYS,
        early_bird: raw.lead_time_average > EARLY_BIRD_LEAD_DAYS,
        repeat_frequency_medium: raw.repeat_total > 1.0,
        loyalty_member: raw.has_loyalty,
    }
}

fn is_week_day(d: Weekday) -> bool {
    !matches!(d, Weekday::Sat | Weekday::Sun)
}

fn is_weekend_day(d: Weekday) -> bool {
    matches!(d, Weekday::Fri | Weekday::Sat | Weekday::Sun)
}

/// Stay shorter than 5 nights arriving and departing Monday to Friday.
pub fn is_week_stay(r: &Reservation) -> bool {
    r.length_of_stay < 5 && is_week_day(r.arrival_date.weekday()) && is_week_day(r.departure_date.weekday())
}

/// Stay shorter than 3 nights arriving and departing Friday to Sunday.
pub fn is_weekend_stay(r: &Reservation) -> bool {
    r.length_of_stay < 3 && is_weekend_day(r.arrival_date.weekday()) && is_weekend_day(r.departure_date.weekday())
}

#[derive(Default)]
struct Accumulator {
    total: u32,
    historic: u32,
    cancelled: u32,
    company: u32,
    agency: u32,
    group: u32,
    direct: u32,
    indirect: u32,
    week: u32,
    weekend: u32,
    los_sum: i64,
    lead_sum: i64,
    room: Money,
    ancillary: Money,
    recent: bool,
}

/// One vector per golden profile with at least one reservation arriving
/// before `as_of`, sorted by golden id.
pub fn build_features(dataset: &Dataset, golden_map: &GoldenMap, as_of: Date) -> Result<Vec<FeatureVector>, FeatureError> {
    let recent_from = as_of - Duration::days(365);

    let mut revenue: HashMap<&str, (Money, Money)> = HashMap::new();
    for f in &dataset.folios {
        let e = revenue.entry(f.reservation_id.as_str()).or_default();
        match f.classification {
            TxnClass::Room => e.0 += f.amount,
            TxnClass::Ancillary => e.1 += f.amount,
            TxnClass::Other => {}
        }
    }

    let mut acc: BTreeMap<&str, Accumulator> = BTreeMap::new();
    for r in dataset.reservations.iter().filter(|r| r.arrival_date < as_of) {
        let a = acc.entry(golden_map.golden_of(&r.profile_id)).or_default();
        a.total += 1;
        match r.status {
            Status::Historic => a.historic += 1,
            Status::Cancelled => a.cancelled += 1,
            Status::NoShow => {}
        }
        a.company += u32::from(r.company_id.is_some());
        a.agency += u32::from(r.agency_id.is_some());
        a.group += u32::from(r.group_id.is_some());
        match r.channel_class {
            ChannelClass::Direct => a.direct += 1,
            ChannelClass::Indirect => a.indirect += 1,
        }
        a.week += u32::from(is_week_stay(r));
        a.weekend += u32::from(is_weekend_stay(r));
        a.los_sum += r.length_of_stay;
        a.lead_sum += r.lead_time;
        if let Some(&(room, anc)) = revenue.get(r.reservation_id.as_str()) {
            a.room += room;
            a.ancillary += anc;
        }
        a.recent |= r.arrival_date >= recent_from;
    }

    if acc.is_empty() {
        return Err(FeatureError::EmptyCohort(as_of));
    }

    let mut loyal: HashMap<&str, bool> = HashMap::new();
    for p in &dataset.profiles {
        *loyal.entry(golden_map.golden_of(&p.profile_id)).or_default() |= p.loyalty_level.is_some();
    }

    Ok(acc
        .into_iter()
        .map(|(golden_id, a)| {
            let total = f64::from(a.total);
            let share = |count: u32| f64::from(count) / total;
            let revenue_total = (a.room + a.ancillary).as_major();
            let raw = RawAggregates {
                los_average: a.los_sum as f64 / total,
                lead_time_average: a.lead_sum as f64 / total,
                repeat_total: total - 1.0,
                has_loyalty: loyal.get(golden_id).copied().unwrap_or(false),
            };
            let flags = apply_business_logic(&raw);
            let bit = |b: bool| if b { 1.0 } else { 0.0 };

            let mut v = FeatureVector {
                golden_id: golden_id.to_string(),
                as_of,
                values: [0.0; FEATURE_COUNT],
            };
            use Feature::*;
            v.set(ReservationsTotal, total);
            v.set(ReservationsHistoric, share(a.historic));
            v.set(ReservationsCancelled, share(a.cancelled));
            v.set(ReservationsCompany, share(a.company));
            v.set(ReservationsAgency, share(a.agency));
            v.set(ReservationsGroup, share(a.group));
            v.set(ReservationsSourceDirect, share(a.direct));
            v.set(ReservationsSourceIndirect, share(a.indirect));
            v.set(RevenueTotal, revenue_total);
            v.set(RevenueAverage, revenue_total / total);
            v.set(RevenueTotalRoom, a.room.as_major());
            v.set(RevenueTotalAncillary, a.ancillary.as_major());
            v.set(RepeatBinary, bit(a.total > 1));
            v.set(RepeatTotal, raw.repeat_total);
            v.set(RepeatFrequencyMediumBinary, bit(flags.repeat_frequency_medium));
            v.set(RepeatLast365Binary, bit(a.recent));
            v.set(WeekStay, share(a.week));
            v.set(WeekendStay, share(a.weekend));
            v.set(LosAverage, raw.los_average);
            v.set(SingleNightBinary, bit(flags.room_night_stay));
            v.set(ShortStayBinary, bit(flags.short_stay));
            v.set(MediumStayBinary, bit(flags.long_stay));
            v.set(LastMinuteBookerBinary, bit(flags.last_minute));
            v.set(EarlyBirdBookerBinary, bit(flags.early_bird));
            v.set(LoyaltyBinary, bit(raw.has_loyalty));
            v
        })
        .collect())
}

/// Nearest-rank quantile: the value at 1-based rank `ceil(p * n)` of the
/// ascending sort.
pub fn nearest_rank_quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty population");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // the epsilon absorbs representation error such as 0.95 * 100 = 95.00000000000001
    let rank = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

/// Nearest multiple of 0.2, halves rounded up.
pub fn snap_to_grid(v: f64) -> f64 {
    let steps = (v * 5.0 + 0.5 + 1e-9).floor();
    (steps / 5.0).clamp(0.0, 1.0)
}

/// Nearest multiple of 100, halves rounded away from zero.
pub fn round_to_hundred(v: f64) -> f64 {
    (v / 100.0).round() * 100.0
}

pub const INTEGER_CAP_QUANTILE: f64 = 0.95;
pub const REVENUE_CAP_QUANTILE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCap {
    pub feature: Feature,
    pub rule: Reduction,
    pub quantile: f64,
    pub cap: f64,
}

/// Population caps of the reduction rules, frozen so the same transform can
/// be replayed on other populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCaps {
    pub caps: Vec<FeatureCap>,
}

impl ReductionCaps {
    pub fn fit(vectors: &[FeatureVector]) -> Result<Self, FeatureError> {
        if vectors.len() < 2 {
            return Err(FeatureError::TooFewVectors(vectors.len()));
        }
        let caps = Feature::ALL
            .iter()
            .filter_map(|&f| {
                let column: Vec<f64> = vectors.iter().map(|v| v.get(f)).collect();
                match f.reduction() {
                    Reduction::QuantileCap => Some(FeatureCap {
                        feature: f,
                        rule: Reduction::QuantileCap,
                        quantile: INTEGER_CAP_QUANTILE,
                        cap: nearest_rank_quantile(&column, INTEGER_CAP_QUANTILE),
                    }),
                    Reduction::RevenueCap => Some(FeatureCap {
                        feature: f,
                        rule: Reduction::RevenueCap,
                        quantile: REVENUE_CAP_QUANTILE,
                        cap: round_to_hundred(nearest_rank_quantile(&column, REVENUE_CAP_QUANTILE)),
                    }),
                    Reduction::Grid | Reduction::Keep => None,
                }
            })
            .collect();
        Ok(ReductionCaps { caps })
    }

    pub fn cap_of(&self, f: Feature) -> Option<f64> {
        self.caps.iter().find(|c| c.feature == f).map(|c| c.cap)
    }

    pub fn apply_one(&self, v: &FeatureVector) -> FeatureVector {
        let mut out = v.clone();
        for f in Feature::ALL {
            let x = v.get(f);
            let reduced = match f.reduction() {
                Reduction::Grid => snap_to_grid(x),
                Reduction::QuantileCap => self.cap_of(f).map_or(x, |cap| x.min(cap)),
                Reduction::RevenueCap => {
                    let r = round_to_hundred(x);
                    self.cap_of(f).map_or(r, |cap| r.min(cap))
                }
                Reduction::Keep => x,
            };
            out.set(f, reduced);
        }
        out
    }

    pub fn apply(&self, vectors: &[FeatureVector]) -> Vec<FeatureVector> {
        vectors.iter().map(|v| self.apply_one(v)).collect()
    }
}

/// Fits the population caps and applies all three reduction rules.
pub fn reduce_dimensionality(vectors: &[FeatureVector]) -> Result<(Vec<FeatureVector>, ReductionCaps), FeatureError> {
    let caps = ReductionCaps::fit(vectors)?;
    Ok((caps.apply(vectors), caps))
}

/// `features_meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub as_of: Date,
    pub profiles: usize,
    pub caps: ReductionCaps,
}

pub fn write_features_csv(path: &Path, vectors: &[FeatureVector]) -> Result<(), FeatureError> {
    let err = |e: csv::Error| FeatureError::Format(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["golden_id".to_string(), "as_of".to_string()];
    header.extend(Feature::ALL.iter().map(|f| f.name().to_string()));
    w.write_record(&header).map_err(err)?;
    for v in vectors {
        let mut rec = vec![v.golden_id.clone(), v.as_of.to_string()];
        rec.extend(v.values.iter().map(|x| format_value(*x)));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| FeatureError::Format(e.to_string()))
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_value(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>, FeatureError> {
    let fmt_err = |m: String| FeatureError::Format(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| fmt_err(e.to_string()))?;
    let headers = r.headers().map_err(|e| fmt_err(e.to_string()))?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fmt_err(format!("missing column {name}")))
    };
    let id_col = position("golden_id")?;
    let as_of_col = position("as_of")?;
    let cols: Vec<usize> = Feature::ALL
        .iter()
        .map(|f| position(f.name()))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| fmt_err(e.to_string()))?;
        let as_of = NaiveDate::parse_from_str(&rec[as_of_col], "%Y-%m-%d")
            .map_err(|_| fmt_err(format!("bad as_of {:?}", &rec[as_of_col])))?;
        let mut values = [0.0; FEATURE_COUNT];
        for (slot, &c) in values.iter_mut().zip(&cols) {
            *slot = rec[c]
                .trim()
                .parse()
                .map_err(|_| fmt_err(format!("bad number {:?}", &rec[c])))?;
        }
        out.push(FeatureVector {
            golden_id: rec[id_col].to_string(),
            as_of,
            values,
        });
    }
    Ok(out)
}
