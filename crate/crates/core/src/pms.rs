//! Relational PMS source tables: profiles, reservations and folios.
//!
//! Every table is one UTF-8 CSV file with a header row. Columns are looked up
//! by name, so column order is free and unknown columns are ignored. Dates are
//! ISO-8601 (`YYYY-MM-DD`), amounts are decimal currency with at most two
//! fractional digits and are held as integer minor units.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Date = NaiveDate;

pub const PROFILE_COLUMNS: [&str; 9] = [
    "profile_id",
    "first_name",
    "last_name",
    "email",
    "phone",
    "address",
    "loyalty_level",
    "marketing_opt_in",
    "created_at",
];

pub const RESERVATION_COLUMNS: [&str; 10] = [
    "reservation_id",
    "profile_id",
    "status",
    "booking_date",
    "arrival_date",
    "departure_date",
    "source_channel",
    "group_id",
    "company_id",
    "agency_id",
];

pub const FOLIO_COLUMNS: [&str; 4] = ["folio_id", "reservation_id", "transaction_code", "amount"];

#[derive(Debug, Error)]
pub enum PmsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file} line {line}: invalid {column} value {value:?}")]
    InvalidValue {
        file: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{file} line {line}: duplicate id {id:?}")]
    DuplicateId { file: String, line: u64, id: String },
    #[error("{file} line {line}: {column} {id:?} does not reference an existing row")]
    DanglingForeignKey {
        file: String,
        line: u64,
        column: String,
        id: String,
    },
    #[error("reservations line {line}: reservation {reservation_id:?} has negative lead time {lead_time}")]
    NegativeLeadTime {
        line: u64,
        reservation_id: String,
        lead_time: i64,
    },
    #[error("reservations line {line}: reservation {reservation_id:?} has invalid length of stay {length_of_stay}")]
    InvalidLengthOfStay {
        line: u64,
        reservation_id: String,
        length_of_stay: i64,
    },
    #[error("reservations line {line}: source channel {channel:?} has no direct/indirect mapping")]
    UnmappedChannel { line: u64, channel: String },
    #[error("folios line {line}: transaction code {code:?} has no room/ancillary/other mapping")]
    UnmappedTransactionCode { line: u64, code: String },
    #[error("invalid mapping config: {0}")]
    Config(String),
}

/// Currency amount in integer minor units (cents).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_minor(minor: i64) -> Self {
        Money(minor)
    }

    pub const fn minor(self) -> i64 {
        self.0
    }

    /// Amount in major units (e.g. euros).
    pub fn as_major(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Money {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        let (negative, digits) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (whole, frac) = match digits.split_once('.') {
            Some((w, f)) => (w, f),
            None => (digits, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return Err(());
        }
        if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(());
        }
        if frac.len() > 2 {
            return Err(());
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| ())? };
        let frac_minor: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| ())? * 10,
            _ => frac.parse().map_err(|_| ())?,
        };
        let minor = whole.checked_mul(100).and_then(|w| w.checked_add(frac_minor)).ok_or(())?;
        Ok(Money(if negative { -minor } else { minor }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Historic,
    Cancelled,
    NoShow,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Historic => "Historic",
            Status::Cancelled => "Cancelled",
            Status::NoShow => "NoShow",
        })
    }
}

impl FromStr for Status {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let folded: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match folded.as_str() {
            "historic" | "stay" => Ok(Status::Historic),
            "cancelled" | "canceled" => Ok(Status::Cancelled),
            "noshow" => Ok(Status::NoShow),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelClass {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxnClass {
    Room,
    Ancillary,
    Other,
}

impl TxnClass {
    pub fn is_revenue(self) -> bool {
        !matches!(self, TxnClass::Other)
    }
}

/// Source channel name to direct/indirect classification.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelMap(pub BTreeMap<String, ChannelClass>);

impl ChannelMap {
    pub fn classify(&self, channel: &str) -> Option<ChannelClass> {
        self.0.get(channel).copied()
    }
}

/// Transaction code to Room/Ancillary/Other classification.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxnMap(pub BTreeMap<String, TxnClass>);

impl TxnMap {
    pub fn classify(&self, code: &str) -> Option<TxnClass> {
        self.0.get(code).copied()
    }
}

/// The `[channels]` and `[transactions]` config sections.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mappings {
    #[serde(default)]
    pub channels: ChannelMap,
    #[serde(default)]
    pub transactions: TxnMap,
}

impl Mappings {
    pub fn from_toml_str(text: &str) -> Result<Self, PmsError> {
        toml::from_str(text).map_err(|e| PmsError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PmsError> {
        let text = fs::read_to_string(path).map_err(|source| PmsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("mappings always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub profile_id: String,
    pub first_name: Option<String>,
    pub last_name: Option<String>,
    pub email: Option<String>,
    pub phone: Option<String>,
    pub address: Option<String>,
    pub loyalty_level: Option<String>,
    pub marketing_opt_in: bool,
    pub created_at: Date,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reservation {
    pub reservation_id: String,
    pub profile_id: String,
    pub status: Status,
    pub booking_date: Date,
    pub arrival_date: Date,
    pub departure_date: Date,
    pub source_channel: String,
    pub channel_class: ChannelClass,
    pub group_id: Option<String>,
    pub company_id: Option<String>,
    pub agency_id: Option<String>,
    pub lead_time: i64,
    pub length_of_stay: i64,
}

impl Reservation {
    /// Builds a reservation and fills in the derived day counts.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        reservation_id: impl Into<String>,
        profile_id: impl Into<String>,
        status: Status,
        booking_date: Date,
        arrival_date: Date,
        departure_date: Date,
        source_channel: impl Into<String>,
        channel_class: ChannelClass,
    ) -> Self {
        Reservation {
            reservation_id: reservation_id.into(),
            profile_id: profile_id.into(),
            status,
            booking_date,
            arrival_date,
            departure_date,
            source_channel: source_channel.into(),
            channel_class,
            group_id: None,
            company_id: None,
            agency_id: None,
            lead_time: (arrival_date - booking_date).num_days(),
            length_of_stay: (departure_date - arrival_date).num_days(),
        }
    }
}

/// A folio line as read from disk, before classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolioRow {
    pub folio_id: String,
    pub reservation_id: String,
    pub transaction_code: String,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folio {
    pub folio_id: String,
    pub reservation_id: String,
    pub transaction_code: String,
    pub amount: Money,
    pub classification: TxnClass,
}

impl Folio {
    /// Amount counted as revenue; `Other` lines (taxes, tips) contribute nothing.
    pub fn revenue(&self) -> Money {
        if self.classification.is_revenue() {
            self.amount
        } else {
            Money::ZERO
        }
    }
}

/// Validated, immutable in-memory copy of the three PMS tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub profiles: Vec<Profile>,
    pub reservations: Vec<Reservation>,
    pub folios: Vec<Folio>,
}

impl Dataset {
    pub fn reservations_by_profile(&self) -> HashMap<&str, Vec<&Reservation>> {
        let mut map: HashMap<&str, Vec<&Reservation>> = HashMap::new();
        for r in &self.reservations {
            map.entry(r.profile_id.as_str()).or_default().push(r);
        }
        map
    }

    pub fn folios_by_reservation(&self) -> HashMap<&str, Vec<&Folio>> {
        let mut map: HashMap<&str, Vec<&Folio>> = HashMap::new();
        for f in &self.folios {
            map.entry(f.reservation_id.as_str()).or_default().push(f);
        }
        map
    }

    pub fn revenue_by_class(&self, class: TxnClass) -> Money {
        self.folios
            .iter()
            .filter(|f| f.classification == class)
            .map(|f| f.amount)
            .sum()
    }

    pub fn total_revenue(&self) -> Money {
        self.folios.iter().map(Folio::revenue).sum()
    }

    /// Keeps only reservations arriving strictly before `cutoff` and their folios.
    pub fn truncate_before(&self, cutoff: Date) -> Dataset {
        let reservations: Vec<Reservation> = self
            .reservations
            .iter()
            .filter(|r| r.arrival_date < cutoff)
            .cloned()
            .collect();
        let kept: HashSet<&str> = reservations.iter().map(|r| r.reservation_id.as_str()).collect();
        let folios = self
            .folios
            .iter()
            .filter(|f| kept.contains(f.reservation_id.as_str()))
            .cloned()
            .collect();
        Dataset {
            profiles: self.profiles.clone(),
            reservations,
            folios,
        }
    }

    /// Writes the three tables in canonical form into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), PmsError> {
        fs::create_dir_all(dir).map_err(|source| PmsError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let paths = DataPaths::in_dir(dir);
        write_profiles(&paths.profiles, &self.profiles)?;
        write_reservations(&paths.reservations, &self.reservations)?;
        write_folios(&paths.folios, &self.folios)
    }
}

/// Locations of the three source tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub profiles: PathBuf,
    pub reservations: PathBuf,
    pub folios: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        DataPaths {
            profiles: dir.join("profiles.csv"),
            reservations: dir.join("reservations.csv"),
            folios: dir.join("folios.csv"),
        }
    }
}

struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, file: &str, required: &[&str]) -> Result<Self, PmsError> {
        let bytes = fs::read(path).map_err(|source| PmsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(bytes.as_slice());
        let csv_err = |source| PmsError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let headers = reader.headers().map_err(csv_err)?.clone();
        let columns: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        for col in required {
            if !columns.contains_key(*col) {
                return Err(PmsError::MissingColumn {
                    file: file.to_string(),
                    column: (*col).to_string(),
                });
            }
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, record));
        }
        Ok(Table {
            file: file.to_string(),
            columns,
            rows,
        })
    }

    fn raw<'r>(&self, record: &'r csv::StringRecord, column: &str) -> &'r str {
        self.columns
            .get(column)
            .and_then(|&i| record.get(i))
            .map(str::trim)
            .unwrap_or("")
    }

    fn optional(&self, record: &csv::StringRecord, column: &str) -> Option<String> {
        let v = self.raw(record, column);
        (!v.is_empty()).then(|| v.to_string())
    }

    fn required(&self, line: u64, record: &csv::StringRecord, column: &str) -> Result<String, PmsError> {
        let v = self.raw(record, column);
        if v.is_empty() {
            return Err(self.invalid(line, column, v));
        }
        Ok(v.to_string())
    }

    fn parse<T: FromStr>(&self, line: u64, record: &csv::StringRecord, column: &str) -> Result<T, PmsError> {
        let v = self.raw(record, column);
        v.parse().map_err(|_| self.invalid(line, column, v))
    }

    fn date(&self, line: u64, record: &csv::StringRecord, column: &str) -> Result<Date, PmsError> {
        let v = self.raw(record, column);
        NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| self.invalid(line, column, v))
    }

    fn invalid(&self, line: u64, column: &str, value: &str) -> PmsError {
        PmsError::InvalidValue {
            file: self.file.clone(),
            line,
            column: column.to_string(),
            value: value.to_string(),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" | "t" => Some(true),
        "false" | "0" | "no" | "n" | "f" | "" => Some(false),
        _ => None,
    }
}

/// Reads and validates the three tables, deriving lead time, length of stay,
/// channel class and folio classification.
pub fn ingest(paths: &DataPaths, maps: &Mappings) -> Result<Dataset, PmsError> {
    let profiles = read_profiles(&paths.profiles)?;
    let reservations = read_reservations(&paths.reservations, &maps.channels, &profiles)?;
    let rows = read_folio_rows(&paths.folios, &reservations)?;
    let folios = classify_transactions(rows, &maps.transactions)?;
    Ok(Dataset {
        profiles,
        reservations,
        folios,
    })
}

pub fn read_profiles(path: &Path) -> Result<Vec<Profile>, PmsError> {
    let table = Table::read(path, "profiles", &PROFILE_COLUMNS)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let profile_id = table.required(line, rec, "profile_id")?;
        if !seen.insert(profile_id.clone()) {
            return Err(PmsError::DuplicateId {
                file: table.file.clone(),
                line,
                id: profile_id,
            });
        }
        let opt_in_raw = table.raw(rec, "marketing_opt_in");
        let marketing_opt_in =
            parse_bool(opt_in_raw).ok_or_else(|| table.invalid(line, "marketing_opt_in", opt_in_raw))?;
        out.push(Profile {
            profile_id,
            first_name: table.optional(rec, "first_name"),
            last_name: table.optional(rec, "last_name"),
            email: table.optional(rec, "email"),
            phone: table.optional(rec, "phone"),
            address: table.optional(rec, "address"),
            loyalty_level: table.optional(rec, "loyalty_level"),
            marketing_opt_in,
            created_at: table.date(line, rec, "created_at")?,
        });
    }
    Ok(out)
}

pub fn read_reservations(
    path: &Path,
    channels: &ChannelMap,
    profiles: &[Profile],
) -> Result<Vec<Reservation>, PmsError> {
    let table = Table::read(path, "reservations", &RESERVATION_COLUMNS)?;
    let known: HashSet<&str> = profiles.iter().map(|p| p.profile_id.as_str()).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let reservation_id = table.required(line, rec, "reservation_id")?;
        if !seen.insert(reservation_id.clone()) {
            return Err(PmsError::DuplicateId {
                file: table.file.clone(),
                line,
                id: reservation_id,
            });
        }
        let profile_id = table.required(line, rec, "profile_id")?;
        if !known.contains(profile_id.as_str()) {
            return Err(PmsError::DanglingForeignKey {
                file: table.file.clone(),
                line,
                column: "profile_id".into(),
                id: profile_id,
            });
        }
        let status: Status = table.parse(line, rec, "status")?;
        let booking_date = table.date(line, rec, "booking_date")?;
        let arrival_date = table.date(line, rec, "arrival_date")?;
        let departure_date = table.date(line, rec, "departure_date")?;
        let source_channel = table.raw(rec, "source_channel").to_string();
        let channel_class = channels
            .classify(&source_channel)
            .ok_or_else(|| PmsError::UnmappedChannel {
                line,
                channel: source_channel.clone(),
            })?;
        let mut r = Reservation::new(
            reservation_id,
            profile_id,
            status,
            booking_date,
            arrival_date,
            departure_date,
            source_channel,
            channel_class,
        );
        r.group_id = table.optional(rec, "group_id");
        r.company_id = table.optional(rec, "company_id");
        r.agency_id = table.optional(rec, "agency_id");
        if r.lead_time < 0 {
            return Err(PmsError::NegativeLeadTime {
                line,
                reservation_id: r.reservation_id,
                lead_time: r.lead_time,
            });
        }
        if !stay_length_valid(r.status, r.length_of_stay) {
            return Err(PmsError::InvalidLengthOfStay {
                line,
                reservation_id: r.reservation_id,
                length_of_stay: r.length_of_stay,
            });
        }
        out.push(r);
    }
    Ok(out)
}

fn stay_length_valid(status: Status, length_of_stay: i64) -> bool {
    match status {
        Status::Historic => length_of_stay >= 1,
        Status::Cancelled | Status::NoShow => length_of_stay >= 0,
    }
}

pub fn read_folio_rows(path: &Path, reservations: &[Reservation]) -> Result<Vec<FolioRow>, PmsError> {
    let table = Table::read(path, "folios", &FOLIO_COLUMNS)?;
    let known: HashSet<&str> = reservations.iter().map(|r| r.reservation_id.as_str()).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let folio_id = table.required(line, rec, "folio_id")?;
        if !seen.insert(folio_id.clone()) {
            return Err(PmsError::DuplicateId {
                file: table.file.clone(),
                line,
                id: folio_id,
            });
        }
        let reservation_id = table.required(line, rec, "reservation_id")?;
        if !known.contains(reservation_id.as_str()) {
            return Err(PmsError::DanglingForeignKey {
                file: table.file.clone(),
                line,
                column: "reservation_id".into(),
                id: reservation_id,
            });
        }
        out.push(FolioRow {
            folio_id,
            reservation_id,
            transaction_code: table.required(line, rec, "transaction_code")?,
            amount: table.parse(line, rec, "amount")?,
        });
    }
    Ok(out)
}

/// Attaches a Room/Ancillary/Other class to every folio line. Errors name the
/// 1-based data row (header excluded) of the first unmapped code.
pub fn classify_transactions(rows: Vec<FolioRow>, txn_map: &TxnMap) -> Result<Vec<Folio>, PmsError> {
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            let classification =
                txn_map
                    .classify(&row.transaction_code)
                    .ok_or_else(|| PmsError::UnmappedTransactionCode {
                        line: i as u64 + 2,
                        code: row.transaction_code.clone(),
                    })?;
            Ok(Folio {
                folio_id: row.folio_id,
                reservation_id: row.reservation_id,
                transaction_code: row.transaction_code,
                amount: row.amount,
                classification,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateProfileId { profile_id: String },
    DuplicateReservationId { reservation_id: String },
    DuplicateFolioId { folio_id: String },
    DanglingProfile { reservation_id: String, profile_id: String },
    DanglingReservation { folio_id: String, reservation_id: String },
    NegativeLeadTime { reservation_id: String, lead_time: i64 },
    LengthOfStay { reservation_id: String, length_of_stay: i64 },
    DerivedMismatch { reservation_id: String, field: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every integrity violation without touching the data.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();

    let mut profiles = HashSet::new();
    for p in &dataset.profiles {
        if !profiles.insert(p.profile_id.as_str()) {
            violations.push(Violation::DuplicateProfileId {
                profile_id: p.profile_id.clone(),
            });
        }
    }

    let mut reservations = HashSet::new();
    for r in &dataset.reservations {
        if !reservations.insert(r.reservation_id.as_str()) {
            violations.push(Violation::DuplicateReservationId {
                reservation_id: r.reservation_id.clone(),
            });
        }
        if !profiles.contains(r.profile_id.as_str()) {
            violations.push(Violation::DanglingProfile {
                reservation_id: r.reservation_id.clone(),
                profile_id: r.profile_id.clone(),
            });
        }
        let lead_time = (r.arrival_date - r.booking_date).num_days();
        let length_of_stay = (r.departure_date - r.arrival_date).num_days();
        if lead_time < 0 {
            violations.push(Violation::NegativeLeadTime {
                reservation_id: r.reservation_id.clone(),
                lead_time,
            });
        }
        if !stay_length_valid(r.status, length_of_stay) {
            violations.push(Violation::LengthOfStay {
                reservation_id: r.reservation_id.clone(),
                length_of_stay,
            });
        }
        for (field, stored, recomputed) in [
            ("lead_time", r.lead_time, lead_time),
            ("length_of_stay", r.length_of_stay, length_of_stay),
        ] {
            if stored != recomputed {
                violations.push(Violation::DerivedMismatch {
                    reservation_id: r.reservation_id.clone(),
                    field: field.into(),
                });
            }
        }
    }

    let mut folios = HashSet::new();
    for f in &dataset.folios {
        if !folios.insert(f.folio_id.as_str()) {
            violations.push(Violation::DuplicateFolioId {
                folio_id: f.folio_id.clone(),
            });
        }
        if !reservations.contains(f.reservation_id.as_str()) {
            violations.push(Violation::DanglingReservation {
                folio_id: f.folio_id.clone(),
                reservation_id: f.reservation_id.clone(),
            });
        }
    }

    ValidationReport { violations }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, PmsError> {
    csv::Writer::from_path(path).map_err(|source| PmsError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<(), PmsError> {
    w.flush().map_err(|source| PmsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn opt(v: &Option<String>) -> &str {
    v.as_deref().unwrap_or("")
}

pub fn write_profiles(path: &Path, profiles: &[Profile]) -> Result<(), PmsError> {
    let mut w = csv_writer(path)?;
    let err = |source| PmsError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(PROFILE_COLUMNS).map_err(err)?;
    for p in profiles {
        let opt_in = if p.marketing_opt_in { "true" } else { "false" };
        let created = p.created_at.format("%Y-%m-%d").to_string();
        w.write_record([
            p.profile_id.as_str(),
            opt(&p.first_name),
            opt(&p.last_name),
            opt(&p.email),
            opt(&p.phone),
            opt(&p.address),
            opt(&p.loyalty_level),
            opt_in,
            created.as_str(),
        ])
        .map_err(err)?;
    }
    finish(w, path)
}

pub fn write_reservations(path: &Path, reservations: &[Reservation]) -> Result<(), PmsError> {
    let mut w = csv_writer(path)?;
    let err = |source| PmsError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(RESERVATION_COLUMNS).map_err(err)?;
    for r in reservations {
        let status = r.status.to_string();
        let booking = r.booking_date.format("%Y-%m-%d").to_string();
        let arrival = r.arrival_date.format("%Y-%m-%d").to_string();
        let departure = r.departure_date.format("%Y-%m-%d").to_string();
        w.write_record([
            r.reservation_id.as_str(),
            r.profile_id.as_str(),
            status.as_str(),
            booking.as_str(),
            arrival.as_str(),
            departure.as_str(),
            r.source_channel.as_str(),
            opt(&r.group_id),
            opt(&r.company_id),
            opt(&r.agency_id),
        ])
        .map_err(err)?;
    }
    finish(w, path)
}

pub fn write_folios(path: &Path, folios: &[Folio]) -> Result<(), PmsError> {
    let mut w = csv_writer(path)?;
    let err = |source| PmsError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(FOLIO_COLUMNS).map_err(err)?;
    for f in folios {
        let amount = f.amount.to_string();
        w.write_record([
            f.folio_id.as_str(),
            f.reservation_id.as_str(),
            f.transaction_code.as_str(),
            amount.as_str(),
        ])
        .map_err(err)?;
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> Date {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn maps() -> Mappings {
        Mappings::from_toml_str(
            r#"
            [channels]
            Website = "direct"
            OTA = "indirect"

            [transactions]
            RM101 = "room"
            FB = "ancillary"
            CITYTAX = "other"
            "#,
        )
        .unwrap()
    }

    fn write_files(dir: &Path, profiles: &str, reservations: &str, folios: &str) -> DataPaths {
        let paths = DataPaths::in_dir(dir);
        fs::write(&paths.profiles, profiles).unwrap();
        fs::write(&paths.reservations, reservations).unwrap();
        fs::write(&paths.folios, folios).unwrap();
        paths
    }

    const PROFILES: &str = "profile_id,first_name,last_name,email,phone,address,loyalty_level,marketing_opt_in,created_at\n\
        P1,Ann,Lee,ann@example.com,,,,true,2019-01-01\n";
    const RES_HEADER: &str =
        "reservation_id,profile_id,status,booking_date,arrival_date,departure_date,source_channel,group_id,company_id,agency_id\n";
    const FOLIO_HEADER: &str = "folio_id,reservation_id,transaction_code,amount\n";

    #[test]
    fn money_parses_and_formats() {
        assert_eq!("12.5".parse::<Money>(), Ok(Money::from_minor(1250)));
        assert_eq!("12".parse::<Money>(), Ok(Money::from_minor(1200)));
        assert_eq!("-3.07".parse::<Money>(), Ok(Money::from_minor(-307)));
        assert!("1.234".parse::<Money>().is_err());
        assert!("abc".parse::<Money>().is_err());
        assert_eq!(Money::from_minor(-5).to_string(), "-0.05");
        assert_eq!(Money::from_minor(123456).to_string(), "1234.56");
    }

    #[test]
    fn empty_reservations_file_is_fine() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_files(dir.path(), PROFILES, RES_HEADER, FOLIO_HEADER);
        let ds = ingest(&paths, &maps()).unwrap();
        assert_eq!(ds.profiles.len(), 1);
        assert!(ds.reservations.is_empty());
        assert!(ds.folios.is_empty());
    }

    #[test]
    fn dangling_profile_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let res = format!("{RES_HEADER}R1,P9,Historic,2019-03-01,2019-03-04,2019-03-05,Website,,,\n");
        let paths = write_files(dir.path(), PROFILES, &res, FOLIO_HEADER);
        match ingest(&paths, &maps()) {
            Err(PmsError::DanglingForeignKey { line, id, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(id, "P9");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lead_time_is_date_difference() {
        let dir = tempfile::tempdir().unwrap();
        let res = format!("{RES_HEADER}R1,P1,Historic,2019-03-01,2019-03-04,2019-03-06,Website,,,\n");
        let folios = format!("{FOLIO_HEADER}F1,R1,RM101,120.00\nF2,R1,CITYTAX,7.00\n");
        let paths = write_files(dir.path(), PROFILES, &res, &folios);
        let ds = ingest(&paths, &maps()).unwrap();
        assert_eq!(ds.reservations[0].lead_time, 3);
        assert_eq!(ds.reservations[0].length_of_stay, 2);
        assert_eq!(ds.total_revenue(), Money::from_minor(12000));
    }

    #[test]
    fn ingest_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let res = format!("{RES_HEADER}R1,P1,Historic,2019-03-05,2019-03-04,2019-03-06,Website,,,\n");
        let paths = write_files(dir.path(), PROFILES, &res, FOLIO_HEADER);
        assert!(matches!(
            ingest(&paths, &maps()),
            Err(PmsError::NegativeLeadTime { lead_time: -1, .. })
        ));

        let res = format!("{RES_HEADER}R1,P1,Historic,2019-03-01,2019-03-04,2019-03-06,Fax,,,\n");
        let paths = write_files(dir.path(), PROFILES, &res, FOLIO_HEADER);
        assert!(matches!(ingest(&paths, &maps()), Err(PmsError::UnmappedChannel { .. })));

        let res = format!("{RES_HEADER}R1,P1,Historic,2019-03-01,2019-03-04,2019-03-06,Website,,,\n");
        let folios = format!("{FOLIO_HEADER}F1,R1,MINIBAR,3.00\n");
        let paths = write_files(dir.path(), PROFILES, &res, &folios);
        assert!(matches!(
            ingest(&paths, &maps()),
            Err(PmsError::UnmappedTransactionCode { line: 2, .. })
        ));

        let paths = write_files(dir.path(), "profile_id,first_name\nP1,Ann\n", RES_HEADER, FOLIO_HEADER);
        match ingest(&paths, &maps()) {
            Err(PmsError::MissingColumn { column, .. }) => assert_eq!(column, "last_name"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_files(dir.path(), PROFILES, RES_HEADER, FOLIO_HEADER);
        fs::remove_file(&paths.folios).unwrap();
        let err = ingest(&paths, &maps()).unwrap_err();
        assert!(err.to_string().contains("folios.csv"), "{err}");
    }

    #[test]
    fn classify_transactions_maps_codes() {
        let rows = vec![
            FolioRow {
                folio_id: "F1".into(),
                reservation_id: "R1".into(),
                transaction_code: "CITYTAX".into(),
                amount: Money::from_minor(500),
            },
            FolioRow {
                folio_id: "F2".into(),
                reservation_id: "R1".into(),
                transaction_code: "RM101".into(),
                amount: Money::from_minor(10000),
            },
        ];
        let folios = classify_transactions(rows, &maps().transactions).unwrap();
        assert_eq!(folios[0].classification, TxnClass::Other);
        assert_eq!(folios[0].revenue(), Money::ZERO);
        assert_eq!(folios[1].classification, TxnClass::Room);
        assert_eq!(folios[1].revenue(), Money::from_minor(10000));

        let unknown = vec![FolioRow {
            folio_id: "F3".into(),
            reservation_id: "R1".into(),
            transaction_code: "XYZ".into(),
            amount: Money::ZERO,
        }];
        assert!(matches!(
            classify_transactions(unknown, &maps().transactions),
            Err(PmsError::UnmappedTransactionCode { .. })
        ));
    }

    fn valid_dataset() -> Dataset {
        let profile = Profile {
            profile_id: "P1".into(),
            first_name: None,
            last_name: None,
            email: None,
            phone: None,
            address: None,
            loyalty_level: None,
            marketing_opt_in: false,
            created_at: date("2019-01-01"),
        };
        let r = Reservation::new(
            "R1",
            "P1",
            Status::Historic,
            date("2019-03-01"),
            date("2019-03-04"),
            date("2019-03-05"),
            "Website",
            ChannelClass::Direct,
        );
        let f = Folio {
            folio_id: "F1".into(),
            reservation_id: "R1".into(),
            transaction_code: "RM101".into(),
            amount: Money::from_minor(100),
            classification: TxnClass::Room,
        };
        Dataset {
            profiles: vec![profile],
            reservations: vec![r],
            folios: vec![f],
        }
    }

    #[test]
    fn validate_reports_without_mutating() {
        let ds = valid_dataset();
        assert!(validate(&ds).is_empty());

        let mut bad = ds.clone();
        bad.reservations[0].departure_date = date("2019-03-02");
        bad.reservations[0].length_of_stay = -2;
        let report = validate(&bad);
        assert_eq!(
            report.violations,
            vec![Violation::LengthOfStay {
                reservation_id: "R1".into(),
                length_of_stay: -2
            }]
        );

        let mut bad = ds.clone();
        bad.folios[0].reservation_id = "R404".into();
        let report = validate(&bad);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::DanglingReservation { .. }));
    }

    #[test]
    fn cancelled_reservations_keep_their_length() {
        let mut ds = valid_dataset();
        ds.reservations[0].status = Status::Cancelled;
        ds.reservations[0].departure_date = date("2019-03-04");
        ds.reservations[0].length_of_stay = 0;
        assert!(validate(&ds).is_empty());
    }
}
