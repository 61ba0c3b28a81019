//! Rule-based match and merge of duplicate profiles into golden profiles.
//!
//! Two profiles match when every field of at least one [`MergeRule`] agrees
//! after normalization, either exactly or on its Soundex key. Matches are
//! closed transitively with a union-find, so the result is a partition of the
//! input profiles. Empty fields never match.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pms::{Dataset, Date, Profile, Reservation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("name is empty after normalization")]
    EmptyName,
    #[error("no merge rules supplied")]
    NoRules,
    #[error("invalid merge rule: {0}")]
    InvalidRule(String),
    #[error("golden map: {0}")]
    GoldenMap(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactField {
    FirstName,
    LastName,
    Email,
    Phone,
    Address,
}

impl ContactField {
    fn is_name(self) -> bool {
        matches!(self, ContactField::FirstName | ContactField::LastName)
    }

    fn value(self, p: &Profile) -> Option<&str> {
        match self {
            ContactField::FirstName => p.first_name.as_deref(),
            ContactField::LastName => p.last_name.as_deref(),
            ContactField::Email => p.email.as_deref(),
            ContactField::Phone => p.phone.as_deref(),
            ContactField::Address => p.address.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    Phonetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMatch {
    pub field: ContactField,
    pub mode: MatchMode,
}

/// A conjunction of field comparisons; profiles merge when any rule holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRule {
    pub fields: Vec<FieldMatch>,
}

impl MergeRule {
    pub fn new(fields: impl IntoIterator<Item = (ContactField, MatchMode)>) -> Result<Self, MergeError> {
        let rule = MergeRule {
            fields: fields
                .into_iter()
                .map(|(field, mode)| FieldMatch { field, mode })
                .collect(),
        };
        rule.check()?;
        Ok(rule)
    }

    pub fn check(&self) -> Result<(), MergeError> {
        if self.fields.is_empty() {
            return Err(MergeError::InvalidRule("rule has no fields".into()));
        }
        for fm in &self.fields {
            if fm.mode == MatchMode::Phonetic && !fm.field.is_name() {
                return Err(MergeError::InvalidRule(format!(
                    "phonetic matching is only defined for names, not {:?}",
                    fm.field
                )));
            }
        }
        Ok(())
    }

    /// Blocking key for a profile, or `None` when any field is missing.
    fn key(&self, p: &Profile) -> Option<Vec<String>> {
        self.fields
            .iter()
            .map(|fm| {
                let raw = fm.field.value(p)?;
                let v = match fm.mode {
                    MatchMode::Exact => normalize(fm.field, raw),
                    MatchMode::Phonetic => phonetic_key(raw).ok()?,
                };
                (!v.is_empty()).then_some(v)
            })
            .collect()
    }
}

/// Email exact, or phonetic first and last name plus exact phone or address.
pub fn default_rules() -> Vec<MergeRule> {
    use ContactField::*;
    use MatchMode::*;
    vec![
        MergeRule::new([(Email, Exact)]).unwrap(),
        MergeRule::new([(FirstName, Phonetic), (LastName, Phonetic), (Phone, Exact)]).unwrap(),
        MergeRule::new([(FirstName, Phonetic), (LastName, Phonetic), (Address, Exact)]).unwrap(),
    ]
}

pub fn normalize(field: ContactField, raw: &str) -> String {
    match field {
        ContactField::Phone => raw.chars().filter(char::is_ascii_digit).collect(),
        ContactField::Email => raw.trim().to_lowercase(),
        ContactField::Address | ContactField::FirstName | ContactField::LastName => {
            raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
        }
    }
}

fn fold_diacritic(c: char) -> char {
    match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' | 'À' | 'Á' | 'Â' | 'Ã' | 'Ä' | 'Å' => 'A',
        'ç' | 'Ç' => 'C',
        'è' | 'é' | 'ê' | 'ë' | 'È' | 'É' | 'Ê' | 'Ë' => 'E',
        'ì' | 'í' | 'î' | 'ï' | 'Ì' | 'Í' | 'Î' | 'Ï' => 'I',
        'ñ' | 'Ñ' => 'N',
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' | 'Ò' | 'Ó' | 'Ô' | 'Õ' | 'Ö' | 'Ø' => 'O',
        'ù' | 'ú' | 'û' | 'ü' | 'Ù' | 'Ú' | 'Û' | 'Ü' => 'U',
        'ý' | 'ÿ' | 'Ý' => 'Y',
        'ß' => 'S',
        other => other.to_ascii_uppercase(),
    }
}

fn soundex_digit(c: char) -> Option<char> {
    match c {
        'B' | 'F' | 'P' | 'V' => Some('1'),
        'C' | 'G' | 'J' | 'K' | 'Q' | 'S' | 'X' | 'Z' => Some('2'),
        'D' | 'T' => Some('3'),
        'L' => Some('4'),
        'M' | 'N' => Some('5'),
        'R' => Some('6'),
        _ => None,
    }
}

/// American Soundex key: the first letter followed by three digits.
///
/// Letters are folded to ASCII upper case first; `H` and `W` do not separate
/// equal codes, vowels do.
pub fn phonetic_key(name: &str) -> Result<String, MergeError> {
    let letters: Vec<char> = name
        .chars()
        .map(fold_diacritic)
        .filter(char::is_ascii_alphabetic)
        .collect();
    let (&first, rest) = letters.split_first().ok_or(MergeError::EmptyName)?;

    let mut key = String::with_capacity(4);
    key.push(first);
    let mut last = soundex_digit(first);
    for &c in rest {
        if key.len() == 4 {
            break;
        }
        if c == 'H' || c == 'W' {
            continue;
        }
        match soundex_digit(c) {
            Some(d) if Some(d) != last => {
                key.push(d);
                last = Some(d);
            }
            Some(_) => {}
            None => last = None,
        }
    }
    while key.len() < 4 {
        key.push('0');
    }
    Ok(key)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenProfile {
    pub golden_id: String,
    pub member_profile_ids: Vec<String>,
    pub first_name: Option<String>,
    pub last_name: Option<String>,
    pub email: Option<String>,
    pub phone: Option<String>,
    pub address: Option<String>,
    pub loyalty_level: Option<String>,
    pub marketing_opt_in: bool,
    pub created_at: Date,
}

impl GoldenProfile {
    /// The golden profile as a plain profile row keyed by its golden id.
    pub fn to_profile(&self) -> Profile {
        Profile {
            profile_id: self.golden_id.clone(),
            first_name: self.first_name.clone(),
            last_name: self.last_name.clone(),
            email: self.email.clone(),
            phone: self.phone.clone(),
            address: self.address.clone(),
            loyalty_level: self.loyalty_level.clone(),
            marketing_opt_in: self.marketing_opt_in,
            created_at: self.created_at,
        }
    }
}

/// Profile id to golden id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenMap(BTreeMap<String, String>);

impl GoldenMap {
    pub fn identity(profiles: &[Profile]) -> Self {
        GoldenMap(
            profiles
                .iter()
                .map(|p| (p.profile_id.clone(), p.profile_id.clone()))
                .collect(),
        )
    }

    /// Golden id of `profile_id`; unknown ids map to themselves.
    pub fn golden_of<'a>(&'a self, profile_id: &'a str) -> &'a str {
        self.0.get(profile_id).map(String::as_str).unwrap_or(profile_id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MergeError> {
        let err = |e: csv::Error| MergeError::GoldenMap(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["profile_id", "golden_id"]).map_err(err)?;
        for (p, g) in &self.0 {
            w.write_record([p, g]).map_err(err)?;
        }
        w.flush().map_err(|e| MergeError::GoldenMap(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Self, MergeError> {
        let bytes = fs::read(path).map_err(|e| MergeError::GoldenMap(format!("{}: {e}", path.display())))?;
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        let mut map = BTreeMap::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| MergeError::GoldenMap(e.to_string()))?;
            let (Some(p), Some(g)) = (rec.get(0), rec.get(1)) else {
                return Err(MergeError::GoldenMap("expected profile_id,golden_id".into()));
            };
            map.insert(p.to_string(), g.to_string());
        }
        Ok(GoldenMap(map))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenSet {
    pub profiles: Vec<GoldenProfile>,
}

impl GoldenSet {
    pub fn golden_map(&self) -> GoldenMap {
        GoldenMap(
            self.profiles
                .iter()
                .flat_map(|g| {
                    g.member_profile_ids
                        .iter()
                        .map(move |m| (m.clone(), g.golden_id.clone()))
                })
                .collect(),
        )
    }

    /// Replaces member profiles by golden profiles and re-points reservations.
    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        let map = self.golden_map();
        let reservations = dataset
            .reservations
            .iter()
            .map(|r| Reservation {
                profile_id: map.golden_of(&r.profile_id).to_string(),
                ..r.clone()
            })
            .collect();
        Dataset {
            profiles: self.profiles.iter().map(GoldenProfile::to_profile).collect(),
            reservations,
            folios: dataset.folios.clone(),
        }
    }
}

/// Merges profiles matched by any rule into golden profiles.
///
/// The golden id is the smallest member profile id. Contact fields survive
/// from the most recently created member (ties: smallest id); loyalty is the
/// maximum present level and the opt-in flag is the logical OR.
pub fn match_merge(profiles: &[Profile], rules: &[MergeRule]) -> Result<GoldenSet, MergeError> {
    if rules.is_empty() {
        return Err(MergeError::NoRules);
    }
    for rule in rules {
        rule.check()?;
    }

    let mut order: Vec<&Profile> = profiles.iter().collect();
    order.sort_by(|a, b| a.profile_id.cmp(&b.profile_id));
    let n = order.len();
    let mut uf = UnionFind::<usize>::new(n);

    for rule in rules {
        let mut blocks: HashMap<Vec<String>, usize> = HashMap::new();
        for (i, p) in order.iter().enumerate() {
            if let Some(key) = rule.key(p) {
                match blocks.get(&key) {
                    Some(&first) => {
                        uf.union(first, i);
                    }
                    None => {
                        blocks.insert(key, i);
                    }
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(uf.find(i)).or_default().push(i);
    }

    let mut goldens: Vec<GoldenProfile> = groups
        .into_values()
        .map(|members| {
            let members: Vec<&Profile> = members.into_iter().map(|i| order[i]).collect();
            survive(&members)
        })
        .collect();
    goldens.sort_by(|a, b| a.golden_id.cmp(&b.golden_id));
    Ok(GoldenSet { profiles: goldens })
}

/// `members` are sorted by profile id.
fn survive(members: &[&Profile]) -> GoldenProfile {
    let survivor = members
        .iter()
        .copied()
        .fold(members[0], |best, p| if p.created_at > best.created_at { p } else { best });
    GoldenProfile {
        golden_id: members[0].profile_id.clone(),
        member_profile_ids: members.iter().map(|p| p.profile_id.clone()).collect(),
        first_name: survivor.first_name.clone(),
        last_name: survivor.last_name.clone(),
        email: survivor.email.clone(),
        phone: survivor.phone.clone(),
        address: survivor.address.clone(),
        loyalty_level: members.iter().filter_map(|p| p.loyalty_level.clone()).max(),
        marketing_opt_in: members.iter().any(|p| p.marketing_opt_in),
        created_at: members.iter().map(|p| p.created_at).min().expect("non-empty group"),
    }
}
