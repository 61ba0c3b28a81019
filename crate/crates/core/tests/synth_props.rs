mod common;

use std::collections::BTreeMap;

use segforge::features::{build_features, Feature};
use segforge::pms::{ingest, validate, DataPaths, Mappings};
use segforge::synth::{default_archetypes, generate, read_ground_truth, GeneratorConfig};
use segforge::{GoldenMap, GowerSpace};

#[test]
fn archetype_counts_follow_the_weights() {
    let weights = [0.4, 0.3, 0.2, 0.1];
    let mut archetypes = default_archetypes();
    for (a, w) in archetypes.iter_mut().zip(weights) {
        a.weight = w;
    }
    let n = 5000;
    let synth = generate(&GeneratorConfig {
        profiles: n,
        seed: 99,
        archetypes: archetypes.clone(),
        ..GeneratorConfig::default()
    })
    .unwrap();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &synth.truth {
        *counts.entry(t.archetype.as_str()).or_default() += 1;
    }
    for (a, w) in archetypes.iter().zip(weights) {
        let expected = n as f64 * w;
        let sigma = (n as f64 * w * (1.0 - w)).sqrt();
        let got = counts[a.name.as_str()] as f64;
        assert!((got - expected).abs() <= 3.0 * sigma, "{}: {got} vs {expected} ± {}", a.name, 3.0 * sigma);
    }
}

#[test]
fn generation_is_seeded_and_independent_of_threads() {
    let config = GeneratorConfig {
        profiles: 400,
        seed: 7,
        duplicate_rate: 0.1,
        ..GeneratorConfig::default()
    };
    let a = generate(&config).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| generate(&config).unwrap());
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.truth, b.truth);
    let c = generate(&GeneratorConfig { seed: 8, ..config }).unwrap();
    assert_ne!(a.dataset, c.dataset);
}

#[test]
fn written_tables_ingest_cleanly() {
    let synth = generate(&GeneratorConfig {
        profiles: 300,
        seed: 2,
        duplicate_rate: 0.2,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    synth.write_dir(dir.path()).unwrap();
    let maps = Mappings::load(&dir.path().join("maps.toml")).unwrap();
    let back = ingest(&DataPaths::in_dir(dir.path()), &maps).unwrap();
    assert!(validate(&back).is_empty());
    assert_eq!(back, synth.dataset);
    assert_eq!(read_ground_truth(&dir.path().join("ground_truth.csv")).unwrap(), synth.truth);
}

#[test]
fn archetypes_are_separated_in_gower_space() {
    let synth = generate(&GeneratorConfig {
        profiles: 800,
        seed: 12,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let map = GoldenMap::identity(&synth.dataset.profiles);
    let vectors = build_features(&synth.dataset, &map, "2020-01-01".parse().unwrap()).unwrap();
    let archetype = synth.archetype_of();
    let space = GowerSpace::fit(&Feature::kinds(), &vectors).unwrap();
    let (mut within, mut between) = ((0.0, 0usize), (0.0, 0usize));
    for (i, a) in vectors.iter().enumerate() {
        for b in &vectors[i + 1..] {
            let d = space.distance(&a.values, &b.values).unwrap();
            let slot = if archetype[a.golden_id.as_str()] == archetype[b.golden_id.as_str()] {
                &mut within
            } else {
                &mut between
            };
            slot.0 += d;
            slot.1 += 1;
        }
    }
    let within = within.0 / within.1 as f64;
    let between = between.0 / between.1 as f64;
    assert!(between > within * 1.5, "between {between} within {within}");
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(GeneratorConfig::from_toml_str("profiles = 0").is_err());
    assert!(GeneratorConfig::from_toml_str("duplicate_rate = 0.5").is_err());
    assert!(GeneratorConfig::from_toml_str("mystery = 1").is_err());
    let ok = GeneratorConfig::from_toml_str("seed = 3\nprofiles = 10\nstart = \"2018-01-01\"").unwrap();
    assert_eq!((ok.seed, ok.profiles), (3, 10));
}
