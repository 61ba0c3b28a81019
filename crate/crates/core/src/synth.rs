//! Seeded synthetic PMS data with planted guest archetypes.
//!
//! Every profile draws from its own ChaCha stream (`seed`, stream = profile
//! index), so growing the profile count leaves earlier profiles unchanged.
//! Injected duplicates are perturbed copies that the default match rules can
//! recover: a re-cased email, or a vowel-swapped name with the same phone or
//! address.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, Duration, Weekday};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pms::{
    ChannelClass, ChannelMap, Dataset, Date, Folio, Mappings, Money, PmsError, Profile, Reservation, Status, TxnClass,
    TxnMap,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pms(#[from] PmsError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub const MAX_DUPLICATE_RATE: f64 = 0.2;

/// Behaviour of one planted guest type. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Archetype {
    pub name: String,
    pub weight: f64,
    /// Probability of booking more than once.
    pub repeat_probability: f64,
    pub extra_reservations: (u32, u32),
    pub cancel_probability: f64,
    pub no_show_probability: f64,
    pub direct_probability: f64,
    pub group_probability: f64,
    pub company_probability: f64,
    pub agency_probability: f64,
    pub length_of_stay: (u32, u32),
    pub lead_time: (u32, u32),
    /// Probability of a Friday or Saturday arrival; otherwise Monday to Wednesday.
    pub weekend_probability: f64,
    pub nightly_rate: (u32, u32),
    pub ancillary_probability: f64,
    pub ancillary_spend: (u32, u32),
    pub opt_in_probability: f64,
    pub loyalty_probability: f64,
}

impl Archetype {
    fn probabilities(&self) -> [(&'static str, f64); 11] {
        [
            ("weight", self.weight),
            ("repeat_probability", self.repeat_probability),
            ("cancel_probability", self.cancel_probability),
            ("no_show_probability", self.no_show_probability),
            ("direct_probability", self.direct_probability),
            ("group_probability", self.group_probability),
            ("company_probability", self.company_probability),
            ("agency_probability", self.agency_probability),
            ("weekend_probability", self.weekend_probability),
            ("ancillary_probability", self.ancillary_probability),
            ("opt_in_probability", self.opt_in_probability),
        ]
    }

    fn check(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(format!("archetype {}: {m}", self.name)));
        for (name, p) in self.probabilities().into_iter().chain([("loyalty_probability", self.loyalty_probability)]) {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        if self.cancel_probability + self.no_show_probability > 1.0 + 1e-12 {
            return bad("cancel and no-show probabilities exceed 1".into());
        }
        for (name, (lo, hi)) in [
            ("extra_reservations", self.extra_reservations),
            ("length_of_stay", self.length_of_stay),
            ("lead_time", self.lead_time),
            ("nightly_rate", self.nightly_rate),
            ("ancillary_spend", self.ancillary_spend),
        ] {
            if lo > hi {
                return bad(format!("{name} range ({lo}, {hi}) is empty"));
            }
        }
        if self.length_of_stay.0 < 1 {
            return bad("length_of_stay must start at 1".into());
        }
        Ok(())
    }
}

fn archetype(name: &str, weight: f64) -> Archetype {
    Archetype {
        name: name.into(),
        weight,
        repeat_probability: 0.05,
        extra_reservations: (1, 1),
        cancel_probability: 0.05,
        no_show_probability: 0.01,
        direct_probability: 0.5,
        group_probability: 0.0,
        company_probability: 0.0,
        agency_probability: 0.0,
        length_of_stay: (1, 3),
        lead_time: (0, 30),
        weekend_probability: 0.3,
        nightly_rate: (90, 150),
        ancillary_probability: 0.3,
        ancillary_spend: (10, 60),
        opt_in_probability: 0.5,
        loyalty_probability: 0.0,
    }
}

/// Agent-booked group traveller, direct weekend leisure guest, indirect
/// booker who cancels, and repeat loyalist.
pub fn default_archetypes() -> Vec<Archetype> {
    vec![
        Archetype {
            group_probability: 0.9,
            agency_probability: 0.9,
            direct_probability: 0.05,
            length_of_stay: (3, 5),
            lead_time: (60, 150),
            weekend_probability: 0.0,
            nightly_rate: (70, 100),
            opt_in_probability: 0.3,
            ..archetype("GroupTraveller", 0.3)
        },
        Archetype {
            direct_probability: 0.95,
            length_of_stay: (1, 2),
            lead_time: (0, 2),
            weekend_probability: 1.0,
            nightly_rate: (120, 200),
            ancillary_probability: 0.7,
            ancillary_spend: (40, 150),
            opt_in_probability: 0.6,
            ..archetype("WeekendLeisure", 0.3)
        },
        Archetype {
            cancel_probability: 0.95,
            no_show_probability: 0.0,
            direct_probability: 0.05,
            agency_probability: 0.8,
            length_of_stay: (1, 4),
            lead_time: (10, 40),
            opt_in_probability: 0.2,
            ..archetype("CancelledIndirect", 0.2)
        },
        Archetype {
            repeat_probability: 1.0,
            extra_reservations: (2, 6),
            cancel_probability: 0.02,
            no_show_probability: 0.0,
            direct_probability: 0.9,
            company_probability: 0.8,
            length_of_stay: (1, 3),
            lead_time: (4, 30),
            weekend_probability: 0.0,
            nightly_rate: (150, 260),
            ancillary_probability: 0.8,
            ancillary_spend: (60, 250),
            opt_in_probability: 0.8,
            loyalty_probability: 0.9,
            ..archetype("RepeatLoyalist", 0.2)
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub profiles: usize,
    /// First and last possible arrival date.
    pub start: Date,
    pub end: Date,
    pub duplicate_rate: f64,
    /// Share of profiles that disclose an email address.
    pub email_rate: f64,
    pub archetypes: Vec<Archetype>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 42,
            profiles: 5000,
            start: Date::from_ymd_opt(2015, 1, 1).expect("valid date"),
            end: Date::from_ymd_opt(2019, 12, 31).expect("valid date"),
            duplicate_rate: 0.0,
            email_rate: 0.95,
            archetypes: default_archetypes(),
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let config: GeneratorConfig = toml::from_str(text).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn check(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.profiles == 0 {
            return bad("profile count must be positive".into());
        }
        if self.start > self.end {
            return bad(format!("start {} is after end {}", self.start, self.end));
        }
        if !(0.0..=MAX_DUPLICATE_RATE).contains(&self.duplicate_rate) {
            return bad(format!("duplicate_rate {} is outside [0, {MAX_DUPLICATE_RATE}]", self.duplicate_rate));
        }
        if !(0.0..=1.0).contains(&self.email_rate) {
            return bad(format!("email_rate {} is outside [0, 1]", self.email_rate));
        }
        if self.archetypes.is_empty() {
            return bad("at least one archetype is needed".into());
        }
        let names: BTreeSet<&str> = self.archetypes.iter().map(|a| a.name.as_str()).collect();
        if names.len() != self.archetypes.len() {
            return bad("archetype names must be unique".into());
        }
        for a in &self.archetypes {
            a.check()?;
        }
        let total: f64 = self.archetypes.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("archetype weights sum to {total}, not 1"));
        }
        Ok(())
    }
}

pub const DIRECT_CHANNELS: [&str; 3] = ["Website", "Phone", "WalkIn"];
pub const INDIRECT_CHANNELS: [&str; 3] = ["GDS", "OTA", "Wholesaler"];

/// Channel and transaction-code mappings matching the generated data.
pub fn default_mappings() -> Mappings {
    let channels = DIRECT_CHANNELS
        .iter()
        .map(|c| (c.to_string(), ChannelClass::Direct))
        .chain(INDIRECT_CHANNELS.iter().map(|c| (c.to_string(), ChannelClass::Indirect)))
        .collect();
    let transactions = [
        ("RM", TxnClass::Room),
        ("FB", TxnClass::Ancillary),
        ("SPA", TxnClass::Ancillary),
        ("CITYTAX", TxnClass::Other),
        ("TIP", TxnClass::Other),
    ]
    .iter()
    .map(|(c, t)| (c.to_string(), *t))
    .collect();
    Mappings {
        channels: ChannelMap(channels),
        transactions: TxnMap(transactions),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub profile_id: String,
    pub archetype: String,
    /// Id of the original profile for duplicates, the profile's own id otherwise.
    pub dup_group: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub mappings: Mappings,
    pub truth: Vec<GroundTruth>,
}

const FIRST_NAMES: [&str; 40] = [
    "Anna", "Bram", "Carla", "Daan", "Eva", "Femke", "Gerrit", "Hanna", "Iris", "Jasper", "Karin", "Lucas", "Maria",
    "Niels", "Olga", "Pieter", "Quinten", "Rosa", "Sander", "Tessa", "Umberto", "Vera", "Willem", "Xenia", "Yara",
    "Zeno", "Amelie", "Bastian", "Chloe", "Dirk", "Elena", "Frank", "Greta", "Hugo", "Ilse", "Jonas", "Kees", "Lotte",
    "Marco", "Nora",
];

const LAST_NAMES: [&str; 40] = [
    "Jansen", "DeVries", "Bakker", "Visser", "Smit", "Meijer", "Mulder", "Bos", "Vos", "Peters", "Hendriks", "Dekker",
    "Brouwer", "Dijkstra", "Koster", "Prins", "Huisman", "Kuiper", "Veenstra", "Schouten", "Willems", "Hoekstra",
    "Maas", "Verhoeven", "Koning", "Postma", "Blom", "Sanders", "Gerritsen", "Lammers", "Martens", "Kramer", "Jonker",
    "Nijland", "Wouters", "Molenaar", "Boer", "Groot", "Timmermans", "Wolters",
];

const STREETS: [&str; 10] = [
    "Keizersgracht",
    "Herengracht",
    "Prinsengracht",
    "Damrak",
    "Rokin",
    "Kalverstraat",
    "Leidsestraat",
    "Vijzelstraat",
    "Utrechtsestraat",
    "Spuistraat",
];

const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

fn in_range(rng: &mut ChaCha8Rng, (lo, hi): (u32, u32)) -> u32 {
    rng.gen_range(lo..=hi)
}

/// Replaces one non-initial vowel, which leaves the Soundex code unchanged.
fn vowel_variant(rng: &mut ChaCha8Rng, name: &str) -> String {
    let chars: Vec<char> = name.chars().collect();
    let positions: Vec<usize> = (1..chars.len()).filter(|&i| VOWELS.contains(&chars[i])).collect();
    let Some(&pos) = positions.get(rng.gen_range(0..positions.len().max(1))) else {
        return name.to_uppercase();
    };
    let mut out = chars.clone();
    out[pos] = *pick(rng, &VOWELS.iter().copied().filter(|&v| v != chars[pos]).collect::<Vec<_>>());
    out.into_iter().collect()
}

fn shift_to_weekday(d: Date, targets: &[Weekday], rng: &mut ChaCha8Rng) -> Date {
    let target = *pick(rng, targets);
    let delta = (target.num_days_from_monday() as i64 - d.weekday().num_days_from_monday() as i64).rem_euclid(7);
    d + Duration::days(delta)
}

struct Generated {
    profiles: Vec<Profile>,
    reservations: Vec<Reservation>,
    folios: Vec<Folio>,
    truth: Vec<GroundTruth>,
}

fn generate_profile(config: &GeneratorConfig, index: usize) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let arch = config
        .archetypes
        .iter()
        .find(|a| {
            acc += a.weight;
            u < acc
        })
        .unwrap_or_else(|| config.archetypes.last().expect("checked non-empty"));

    let id = format!("P{index:06}");
    let first = *pick(&mut rng, &FIRST_NAMES);
    let last = *pick(&mut rng, &LAST_NAMES);
    let has_email = rng.gen_bool(config.email_rate);
    let email = has_email.then(|| format!("{}.{}.{index}@example.com", first.to_lowercase(), last.to_lowercase()));
    let phone = format!("06-{:08}", index);
    let address = format!("{} {} {}, Amsterdam", pick(&mut rng, &STREETS), index % 997 + 1, index / 997 + 1);

    let span = (config.end - config.start).num_days();
    let count = 1 + if rng.gen_bool(arch.repeat_probability) {
        in_range(&mut rng, arch.extra_reservations)
    } else {
        0
    };
    let mut reservations = Vec::new();
    let mut folios = Vec::new();
    for j in 0..count {
        let mut arrival = config.start + Duration::days(rng.gen_range(0..=span));
        arrival = if rng.gen_bool(arch.weekend_probability) {
            shift_to_weekday(arrival, &[Weekday::Fri, Weekday::Sat], &mut rng)
        } else {
            shift_to_weekday(arrival, &[Weekday::Mon, Weekday::Tue, Weekday::Wed], &mut rng)
        };
        if arrival > config.end {
            arrival -= Duration::days(7);
        }
        if arrival < config.start {
            arrival = config.start;
        }
        let los = i64::from(in_range(&mut rng, arch.length_of_stay));
        let lead = i64::from(in_range(&mut rng, arch.lead_time));
        let roll: f64 = rng.gen();
        let status = if roll < arch.cancel_probability {
            Status::Cancelled
        } else if roll < arch.cancel_probability + arch.no_show_probability {
            Status::NoShow
        } else {
            Status::Historic
        };
        let direct = rng.gen_bool(arch.direct_probability);
        let (channel, class) = if direct {
            (*pick(&mut rng, &DIRECT_CHANNELS), ChannelClass::Direct)
        } else {
            (*pick(&mut rng, &INDIRECT_CHANNELS), ChannelClass::Indirect)
        };
        let rid = format!("R{index:06}-{j:02}");
        let mut r = Reservation::new(
            rid.clone(),
            id.clone(),
            status,
            arrival - Duration::days(lead),
            arrival,
            arrival + Duration::days(los),
            channel,
            class,
        );
        r.group_id = rng
            .gen_bool(arch.group_probability)
            .then(|| format!("G{:04}", rng.gen_range(0..500)));
        r.company_id = rng
            .gen_bool(arch.company_probability)
            .then(|| format!("C{:04}", rng.gen_range(0..300)));
        r.agency_id = rng
            .gen_bool(arch.agency_probability)
            .then(|| format!("A{:03}", rng.gen_range(0..50)));

        if status == Status::Historic {
            let mut line = 0;
            let mut push = |code: &str, minor: i64| {
                folios.push(Folio {
                    folio_id: format!("F{index:06}-{j:02}-{line}"),
                    reservation_id: rid.clone(),
                    transaction_code: code.to_string(),
                    amount: Money::from_minor(minor),
                    classification: default_class(code),
                });
                line += 1;
            };
            let rate = i64::from(in_range(&mut rng, arch.nightly_rate));
            push("RM", rate * los * 100 + rng.gen_range(0..100));
            if rng.gen_bool(arch.ancillary_probability) {
                let code = if rng.gen_bool(0.7) { "FB" } else { "SPA" };
                push(code, i64::from(in_range(&mut rng, arch.ancillary_spend)) * 100);
            }
            push("CITYTAX", 300 * los);
            if rng.gen_bool(0.1) {
                push("TIP", 500);
            }
        }
        reservations.push(r);
    }

    let first_booking = reservations.iter().map(|r| r.booking_date).min().expect("at least one reservation");
    let profile = Profile {
        profile_id: id.clone(),
        first_name: Some(first.to_string()),
        last_name: Some(last.to_string()),
        email,
        phone: Some(phone.clone()),
        address: Some(address.clone()),
        loyalty_level: rng
            .gen_bool(arch.loyalty_probability)
            .then(|| pick(&mut rng, &["Silver", "Gold", "Platinum"]).to_string()),
        marketing_opt_in: rng.gen_bool(arch.opt_in_probability),
        created_at: first_booking - Duration::days(rng.gen_range(0..30)),
    };
    let mut out = Generated {
        profiles: vec![profile.clone()],
        reservations,
        folios: Vec::new(),
        truth: vec![GroundTruth {
            profile_id: id.clone(),
            archetype: arch.name.clone(),
            dup_group: id.clone(),
        }],
    };

    if rng.gen_bool(config.duplicate_rate) {
        let dup_id = format!("{id}D");
        let pattern = if profile.email.is_some() { rng.gen_range(0..3) } else { rng.gen_range(1..3) };
        let (email, phone, address) = match pattern {
            0 => (profile.email.as_ref().map(|e| e.to_uppercase()), None, None),
            1 => (None, Some(format!("06 {} {}", &phone[3..7], &phone[7..])), None),
            _ => (None, None, Some(address.to_uppercase())),
        };
        let dup = Profile {
            profile_id: dup_id.clone(),
            first_name: Some(if pattern == 0 { first.to_string() } else { vowel_variant(&mut rng, first) }),
            last_name: Some(if pattern == 0 { last.to_string() } else { vowel_variant(&mut rng, last) }),
            email,
            phone,
            address,
            loyalty_level: None,
            marketing_opt_in: rng.gen_bool(arch.opt_in_probability),
            created_at: profile.created_at + Duration::days(rng.gen_range(1..400)),
        };
        // Later stays move to the duplicate half of the time.
        for r in out.reservations.iter_mut().skip(1) {
            if rng.gen_bool(0.5) {
                r.profile_id = dup_id.clone();
            }
        }
        out.profiles.push(dup);
        out.truth.push(GroundTruth {
            profile_id: dup_id,
            archetype: arch.name.clone(),
            dup_group: id,
        });
    }
    out.folios = folios;
    out
}

fn default_class(code: &str) -> TxnClass {
    default_mappings()
        .transactions
        .classify(code)
        .expect("generator only emits mapped codes")
}

/// Generates the three tables and the ground truth.
pub fn generate(config: &GeneratorConfig) -> Result<SynthOutput, SynthError> {
    config.check()?;
    let parts: Vec<Generated> = (0..config.profiles)
        .into_par_iter()
        .map(|i| generate_profile(config, i))
        .collect();
    let mut dataset = Dataset::default();
    let mut truth = Vec::new();
    for p in parts {
        dataset.profiles.extend(p.profiles);
        dataset.reservations.extend(p.reservations);
        dataset.folios.extend(p.folios);
        truth.extend(p.truth);
    }
    Ok(SynthOutput {
        dataset,
        mappings: default_mappings(),
        truth,
    })
}

impl SynthOutput {
    /// Archetype per profile id.
    pub fn archetype_of(&self) -> BTreeMap<&str, &str> {
        self.truth
            .iter()
            .map(|t| (t.profile_id.as_str(), t.archetype.as_str()))
            .collect()
    }

    /// Writes profiles.csv, reservations.csv, folios.csv, ground_truth.csv
    /// and maps.toml into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        self.dataset.write_dir(dir)?;
        let io = |path: &Path, e: &dyn std::fmt::Display| SynthError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let truth_path = dir.join("ground_truth.csv");
        let mut w = csv::Writer::from_path(&truth_path).map_err(|e| io(&truth_path, &e))?;
        w.write_record(["profile_id", "archetype", "dup_group"])
            .map_err(|e| io(&truth_path, &e))?;
        for t in &self.truth {
            w.write_record([&t.profile_id, &t.archetype, &t.dup_group])
                .map_err(|e| io(&truth_path, &e))?;
        }
        w.flush().map_err(|e| io(&truth_path, &e))?;
        let maps = dir.join("maps.toml");
        std::fs::write(&maps, self.mappings.to_toml_string()).map_err(|e| io(&maps, &e))
    }
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>, SynthError> {
    let io = |e: csv::Error| SynthError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    r.deserialize().collect::<Result<_, _>>().map_err(io)
}
