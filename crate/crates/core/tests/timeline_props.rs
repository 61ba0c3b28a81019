mod common;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use proptest::prelude::*;
use segforge::features::{build_features, reduce_dimensionality, Feature};
use segforge::pipeline::{feature_stage, select_stage};
use segforge::pms::{ChannelClass, Dataset, Profile, Reservation, Status};
use segforge::select::Exemplar;
use segforge::synth::{generate, GeneratorConfig};
use segforge::timeline::{explain, flow_export, snapshot, transitions, SegmentNode, TimelineError};
use segforge::{GoldenMap, GowerSpace, SegmentModel, TrialConfig};

fn day(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn stay(id: &str, profile: &str, arrival: &str) -> Reservation {
    let a = day(arrival);
    Reservation::new(
        id,
        profile,
        Status::Historic,
        a - chrono::Duration::days(10),
        a + chrono::Duration::days(2),
        a + chrono::Duration::days(3),
        "Website",
        ChannelClass::Direct,
    )
}

/// Ten one-time guests, ten guests who return during 2018 and ten guests
/// who first arrive during 2018.
fn planted() -> Dataset {
    let mut profiles = Vec::new();
    let mut reservations = Vec::new();
    for i in 0..30 {
        let id = format!("P{i:02}");
        profiles.push(Profile {
            profile_id: id.clone(),
            first_name: None,
            last_name: None,
            email: None,
            phone: None,
            address: None,
            loyalty_level: None,
            marketing_opt_in: false,
            created_at: day("2016-01-01"),
        });
        let first = if i < 20 { "2017-03-06" } else { "2018-05-07" };
        reservations.push(stay(&format!("R{i:02}a"), &id, first));
        if (10..20).contains(&i) {
            reservations.push(stay(&format!("R{i:02}b"), &id, "2018-09-03"));
        }
    }
    Dataset {
        profiles,
        reservations,
        folios: Vec::new(),
    }
}

/// Model with one exemplar per planted behaviour: label 1 one-time, label 2
/// returning.
fn planted_model(dataset: &Dataset, map: &GoldenMap, as_of: NaiveDate) -> SegmentModel {
    let raw = build_features(dataset, map, as_of).unwrap();
    let (reduced, caps) = reduce_dimensionality(&raw).unwrap();
    let space = GowerSpace::fit(&Feature::kinds(), &reduced).unwrap();
    let pick = |id: &str, label| {
        let v = reduced.iter().find(|v| v.golden_id == id).unwrap();
        Exemplar {
            golden_id: id.into(),
            label,
            values: v.values.to_vec(),
        }
    };
    SegmentModel {
        model_id: "planted".into(),
        as_of,
        k: 2,
        seed: 0,
        base_trial: 0,
        features: Feature::ALL.iter().map(|f| f.name().to_string()).collect(),
        kinds: space.kinds,
        ranges: space.ranges,
        caps,
        segment_names: BTreeMap::new(),
        exemplars: vec![pick("P00", 1), pick("P10", 2)],
    }
}

#[test]
fn planted_movers_are_counted_and_explained() {
    let dataset = planted();
    let map = GoldenMap::identity(&dataset.profiles);
    let (t1, t2) = (day("2018-01-01"), day("2019-01-01"));
    let model = planted_model(&dataset, &map, t2);
    let s1 = snapshot(&dataset, &map, &model, t1, None).unwrap();
    let s2 = snapshot(&dataset, &map, &model, t2, None).unwrap();
    assert_eq!(s1.cohort_size(), 20);
    assert_eq!(s2.cohort_size(), 30);
    let table = transitions(&s1, &s2).unwrap();
    let one = SegmentNode::Segment(1);
    let two = SegmentNode::Segment(2);
    assert_eq!(table.count(one, one), 10);
    assert_eq!(table.count(one, two), 10);
    assert_eq!(table.count(SegmentNode::NewGuests, one), 10);
    assert_eq!(table.new_guests(), 10);

    let why = explain(one, two, &s1, &s2).unwrap();
    assert_eq!(why.profiles, 10);
    let delta = |f: Feature| why.deltas.iter().find(|d| d.feature == f).unwrap().delta;
    assert_eq!(delta(Feature::ReservationsTotal), Some(1.0));
    assert_eq!(delta(Feature::RepeatBinary), Some(1.0));
    assert_eq!(delta(Feature::RepeatTotal), Some(1.0));
    assert_eq!(delta(Feature::LosAverage), Some(0.0));
    assert_eq!(delta(Feature::RevenueTotal), None);

    let stayers = explain(one, one, &s1, &s2).unwrap();
    for d in &stayers.deltas {
        // Their only stay ages out of the trailing year.
        let want = if d.feature == Feature::RepeatLast365Binary { -1.0 } else { 0.0 };
        assert!(d.delta.is_none_or(|x| x == want), "{d:?}");
    }
    assert!(matches!(explain(SegmentNode::NewGuests, one, &s1, &s2), Err(TimelineError::NoBaseline)));
    assert!(matches!(explain(two, one, &s1, &s2), Err(TimelineError::EmptyTransition { .. })));
}

#[test]
fn lapsed_guests_flow_out() {
    let dataset = planted();
    let map = GoldenMap::identity(&dataset.profiles);
    let t = day("2019-06-01");
    let model = planted_model(&dataset, &map, t);
    let s = snapshot(&dataset, &map, &model, t, Some(2)).unwrap();
    // The one-time 2017 guests last arrived more than two years before t.
    assert_eq!(s.counts().get(&SegmentNode::Outflow), Some(&10));
    assert!(matches!(
        snapshot(&dataset, &map, &model, day("2020-01-01"), None),
        Err(TimelineError::AfterModel { .. })
    ));
    assert!(matches!(
        snapshot(&dataset, &map, &model, day("2010-01-01"), None),
        Err(TimelineError::EmptyCohort(_))
    ));
}

#[test]
fn flow_links_respect_the_display_threshold() {
    let dataset = planted();
    let map = GoldenMap::identity(&dataset.profiles);
    let ts = [day("2018-01-01"), day("2018-07-01"), day("2019-01-01")];
    let model = planted_model(&dataset, &map, ts[2]);
    let snaps: Vec<_> = ts.iter().map(|&t| snapshot(&dataset, &map, &model, t, None).unwrap()).collect();
    let tables: Vec<_> = snaps.windows(2).map(|w| transitions(&w[0], &w[1]).unwrap()).collect();
    let flows = flow_export(&tables, 0.3).unwrap();
    for link in &flows.links {
        assert_eq!(link.displayed, link.share >= 0.3 - 1e-6, "{link:?}");
    }
    let node = |id: &str| flows.nodes.iter().find(|n| n.id == id).unwrap().count;
    assert_eq!(node("2018-01-01/1"), 20);
    assert_eq!(node("2019-01-01/2"), 10);
    let into: usize = flows.links.iter().filter(|l| l.to == "2019-01-01/1").map(|l| l.count).sum();
    assert_eq!(into, node("2019-01-01/1"));
    assert!(flow_export(&[tables[1].clone(), tables[0].clone()], 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cohorts_only_grow_and_transitions_conserve(seed in 0u64..1000, cuts in prop::collection::btree_set(0i64..1400, 1..4)) {
        let config = GeneratorConfig { seed, profiles: 250, ..GeneratorConfig::default() };
        let synth = generate(&config).unwrap();
        let map = GoldenMap::identity(&synth.dataset.profiles);
        let training = day("2020-01-01");
        let features = feature_stage(&synth.dataset, &map, training).unwrap();
        let trials = TrialConfig { trials: 1, sample_size: 120, k_max: 8, seed };
        let Ok((_, model)) = select_stage(&features.reduced, &features.meta, &trials, BTreeMap::new()) else {
            return Ok(());
        };
        let mut ts: Vec<NaiveDate> = cuts.iter().map(|&d| day("2015-06-01") + chrono::Duration::days(d)).collect();
        ts.push(training);
        let snaps: Vec<_> = ts.iter().map(|&t| snapshot(&synth.dataset, &map, &model, t, Some(1)).unwrap()).collect();
        for w in snaps.windows(2) {
            let table = transitions(&w[0], &w[1]).unwrap();
            prop_assert_eq!(w[1].cohort_size(), w[0].cohort_size() + table.new_guests());
            for (node, &n) in &w[0].counts() {
                prop_assert_eq!(table.row_sum(*node), n);
            }
            for (node, &n) in &w[1].counts() {
                prop_assert_eq!(table.column_sum(*node), n);
            }
        }
    }
}
