mod common;

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use segforge::golden::{default_rules, match_merge, phonetic_key, GoldenMap};
use segforge::pms::Profile;

const FIRST: [&str; 4] = ["Robert", "Rupert", "Anna", "Anne"];
const LAST: [&str; 4] = ["Jansen", "Janssen", "Bakker", "Visser"];
const EMAIL: [&str; 3] = ["a@x.nl", "A@X.NL ", "b@x.nl"];
const PHONE: [&str; 3] = ["06-1234", "06 12 34", "06-9999"];
const ADDRESS: [&str; 2] = ["Damrak 1", "damrak  1"];

/// Small profile sets drawn from few values so that matches are common.
fn profiles() -> impl Strategy<Value = Vec<Profile>> {
    let opt = |n: usize| prop::option::weighted(0.6, 0..n);
    prop::collection::vec((0..4usize, 0..4usize, opt(3), opt(3), opt(2), 0..400i64), 1..30).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (f, l, e, p, a, day))| Profile {
                profile_id: format!("P{i:03}"),
                first_name: Some(FIRST[f].into()),
                last_name: Some(LAST[l].into()),
                email: e.map(|e| EMAIL[e].into()),
                phone: p.map(|p| PHONE[p].into()),
                address: a.map(|a| ADDRESS[a].into()),
                loyalty_level: None,
                marketing_opt_in: false,
                created_at: "2018-01-01".parse::<chrono::NaiveDate>().unwrap() + chrono::Duration::days(day),
            })
            .collect()
    })
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Whether any default rule links the two profiles, written independently of
/// the blocking implementation.
fn linked(a: &Profile, b: &Profile) -> bool {
    let email = matches!((&a.email, &b.email), (Some(x), Some(y)) if x.trim().to_lowercase() == y.trim().to_lowercase());
    let sound = |x: &Option<String>, y: &Option<String>| match (x, y) {
        (Some(x), Some(y)) => phonetic_key(x).unwrap() == phonetic_key(y).unwrap(),
        _ => false,
    };
    let names = sound(&a.first_name, &b.first_name) && sound(&a.last_name, &b.last_name);
    let digits = |s: &str| s.chars().filter(char::is_ascii_digit).collect::<String>();
    let phone = matches!((&a.phone, &b.phone), (Some(x), Some(y)) if digits(x) == digits(y));
    let address = matches!((&a.address, &b.address), (Some(x), Some(y)) if squash(x) == squash(y));
    email || (names && (phone || address))
}

/// Connected components of the pairwise link graph.
fn oracle_partition(profiles: &[Profile]) -> BTreeSet<BTreeSet<String>> {
    let n = profiles.len();
    let mut component: Vec<usize> = (0..n).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in 0..n {
                if linked(&profiles[i], &profiles[j]) && component[j] > component[i] {
                    component[j] = component[i];
                    changed = true;
                }
            }
        }
    }
    let mut groups: HashMap<usize, BTreeSet<String>> = HashMap::new();
    for (i, c) in component.iter().enumerate() {
        groups.entry(*c).or_default().insert(profiles[i].profile_id.clone());
    }
    groups.into_values().collect()
}

proptest! {
    #[test]
    fn merge_equals_the_link_graph_components(ps in profiles()) {
        let map = match_merge(&ps, &default_rules()).unwrap().golden_map();
        prop_assert_eq!(common::partition_of(&map), oracle_partition(&ps));
    }

    #[test]
    fn merging_is_idempotent(ps in profiles()) {
        let once = match_merge(&ps, &default_rules()).unwrap();
        let goldens: Vec<Profile> = once.profiles.iter().map(|g| g.to_profile()).collect();
        let twice = match_merge(&goldens, &default_rules()).unwrap();
        prop_assert_eq!(twice.profiles.len(), once.profiles.len());
    }

    #[test]
    fn merging_ignores_input_order(ps in profiles(), seed: u64) {
        use rand::seq::SliceRandom;
        let mut shuffled = ps.clone();
        shuffled.shuffle(&mut common::rng(seed));
        let a = match_merge(&ps, &default_rules()).unwrap();
        let b = match_merge(&shuffled, &default_rules()).unwrap();
        prop_assert_eq!(common::partition_of(&a.golden_map()), common::partition_of(&b.golden_map()));
        prop_assert_eq!(a.profiles, b.profiles);
    }

    #[test]
    fn every_profile_maps_to_a_member_golden(ps in profiles()) {
        let set = match_merge(&ps, &default_rules()).unwrap();
        let map = set.golden_map();
        prop_assert_eq!(map.len(), ps.len());
        for g in &set.profiles {
            for m in &g.member_profile_ids {
                prop_assert_eq!(map.golden_of(m), g.golden_id.as_str());
            }
        }
    }
}

#[test]
fn soundex_reference_codes() {
    for (name, code) in [
        ("Robert", "R163"),
        ("Rupert", "R163"),
        ("Rubin", "R150"),
        ("Ashcraft", "A261"),
        ("Ashcroft", "A261"),
        ("Tymczak", "T522"),
        ("Pfister", "P236"),
        ("Honeyman", "H555"),
        ("Lee", "L000"),
    ] {
        assert_eq!(phonetic_key(name).unwrap(), code, "{name}");
    }
    assert!(phonetic_key("  ").is_err());
}

#[test]
fn golden_map_csv_round_trip() {
    let ps: Vec<Profile> = (0..5)
        .map(|i| Profile {
            profile_id: format!("P{i}"),
            first_name: Some("Anna".into()),
            last_name: Some("Bakker".into()),
            email: Some(if i < 3 { "a@x.nl".into() } else { format!("{i}@x.nl") }),
            phone: None,
            address: None,
            loyalty_level: None,
            marketing_opt_in: true,
            created_at: "2019-01-01".parse().unwrap(),
        })
        .collect();
    let map = match_merge(&ps, &default_rules()).unwrap().golden_map();
    assert_eq!(common::partition_of(&map).len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("golden_map.csv");
    map.write_csv(&path).unwrap();
    assert_eq!(GoldenMap::read_csv(&path).unwrap(), map);
}
