//! End-to-end run: ingest, merge, features, selection, classification,
//! timeline and report.
//!
//! Every stage is also exposed on its own so the command-line tool can run
//! them separately from earlier artifacts. Files are first written with a
//! `.partial` suffix and renamed once the whole run succeeded.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{build_features, reduce_dimensionality, write_features_csv, FeatureMeta, FeatureVector};
use crate::golden::{default_rules, match_merge, GoldenMap, GoldenSet};
use crate::insights::{
    characteristic_highlight, eda_report, highlights_csv, segment_profile, segment_profile_csv, target_list,
    HighlightRule,
};
use crate::pms::{ingest, validate, DataPaths, Dataset, Date, Mappings};
use crate::select::{propagate_1nn, run_trials, write_segments_csv, SegmentModel, TrialConfig, TrialsResult};
use crate::timeline::{flow_export, snapshot, transitions, transitions_csv, FlowExport, TransitionTable};

pub const CONFIG_ENV: &str = "SEGFORGE_CONFIG";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("model: {0}")]
    Model(String),
    #[error("output: {0}")]
    Output(String),
}

impl PipelineError {
    /// 2 for configuration, 3 for data, 4 for model errors and 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Model(_) => 4,
            PipelineError::Output(_) => 1,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn model_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Model(e.to_string())
}

fn out_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Output(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Directory holding profiles.csv, reservations.csv and folios.csv.
    pub data_dir: PathBuf,
    /// Channel and transaction-code mappings; defaults to `data_dir/maps.toml`.
    pub maps: Option<PathBuf>,
    pub output: PathBuf,
    /// Evaluation timestamps, strictly increasing; the model is trained at the last.
    pub timestamps: Vec<Date>,
    pub seed: u64,
    pub trials: usize,
    pub sample_size: usize,
    pub k_max: usize,
    pub merge_profiles: bool,
    pub flow_threshold: f64,
    pub outflow_after_years: Option<u32>,
    pub highlight: HighlightRule,
    /// Segments exported to targets.csv; empty means all.
    pub target_segments: Vec<u32>,
    /// Display names keyed by cluster label.
    pub segment_names: BTreeMap<String, String>,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let trials = TrialConfig::default();
        PipelineConfig {
            data_dir: PathBuf::from("data"),
            maps: None,
            output: PathBuf::from("out"),
            timestamps: Vec::new(),
            seed: trials.seed,
            trials: trials.trials,
            sample_size: trials.sample_size,
            k_max: trials.k_max,
            merge_profiles: true,
            flow_threshold: crate::timeline::DEFAULT_FLOW_THRESHOLD,
            outflow_after_years: None,
            highlight: HighlightRule::default(),
            target_segments: Vec::new(),
            segment_names: BTreeMap::new(),
            threads: None,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut c: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut c.data_dir);
        resolve(&mut c.output);
        if let Some(m) = c.maps.as_mut() {
            resolve(m);
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn maps_path(&self) -> PathBuf {
        self.maps.clone().unwrap_or_else(|| self.data_dir.join("maps.toml"))
    }

    pub fn trial_config(&self) -> TrialConfig {
        TrialConfig {
            trials: self.trials,
            sample_size: self.sample_size,
            k_max: self.k_max,
            seed: self.seed,
        }
    }

    pub fn segment_names(&self) -> Result<BTreeMap<u32, String>, PipelineError> {
        self.segment_names
            .iter()
            .map(|(k, v)| {
                k.parse()
                    .map(|k| (k, v.clone()))
                    .map_err(|_| PipelineError::Config(format!("segment name key {k:?} is not a label")))
            })
            .collect()
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if let Some(w) = self.timestamps.windows(2).find(|w| w[0] >= w[1]) {
            return bad(format!("timestamps must be strictly increasing: {} then {}", w[0], w[1]));
        }
        if self.trials == 0 || self.k_max < 3 || self.sample_size < self.k_max {
            return bad(format!(
                "need trials > 0, k_max >= 3 and sample_size >= k_max (got {}, {}, {})",
                self.trials, self.k_max, self.sample_size
            ));
        }
        if !(0.0..=1.0).contains(&self.flow_threshold) {
            return bad(format!("flow_threshold {} is outside [0, 1]", self.flow_threshold));
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        self.segment_names()?;
        Ok(())
    }

    /// The configured timestamps, or the day after the latest arrival in
    /// `dataset` when none are set.
    pub fn resolve_timestamps(&self, dataset: &Dataset) -> Result<Vec<Date>, PipelineError> {
        if !self.timestamps.is_empty() {
            return Ok(self.timestamps.clone());
        }
        let last = dataset
            .reservations
            .iter()
            .map(|r| r.arrival_date)
            .max()
            .ok_or_else(|| PipelineError::Data("no reservations to derive a timestamp from".into()))?;
        Ok(vec![last.succ_opt().expect("date in range")])
    }
}

/// Collects output files under `.partial` names and renames them on commit.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| out_err(format!("{}: {e}", dir.display())))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path to write `name` to; it becomes final on [`Artifacts::commit`].
    pub fn path(&mut self, name: &str) -> Result<PathBuf, PipelineError> {
        let target = self.dir.join(name);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent).map_err(|e| out_err(format!("{}: {e}", parent.display())))?;
        }
        let mut partial = target.clone().into_os_string();
        partial.push(".partial");
        self.written.push(target);
        Ok(PathBuf::from(partial))
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
        let path = self.path(name)?;
        std::fs::write(&path, contents).map_err(|e| out_err(format!("{}: {e}", path.display())))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).map_err(out_err)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, PipelineError> {
        for target in &self.written {
            let mut partial = target.clone().into_os_string();
            partial.push(".partial");
            std::fs::rename(&partial, target).map_err(|e| out_err(format!("{}: {e}", target.display())))?;
        }
        Ok(self.written)
    }
}

pub fn load_dataset(data_dir: &Path, maps: &Path) -> Result<(Dataset, Mappings), PipelineError> {
    let mappings = Mappings::load(maps).map_err(|e| PipelineError::Config(e.to_string()))?;
    let dataset = ingest(&DataPaths::in_dir(data_dir), &mappings).map_err(data_err)?;
    let report = validate(&dataset);
    if !report.is_empty() {
        return Err(PipelineError::Data(format!(
            "{} integrity violations, first: {:?}",
            report.violations.len(),
            report.violations[0]
        )));
    }
    Ok((dataset, mappings))
}

/// Golden profiles, or one golden profile per source profile when merging is off.
pub fn merge_stage(dataset: &Dataset, merge: bool) -> Result<(GoldenSet, GoldenMap), PipelineError> {
    let rules = default_rules();
    let set = if merge {
        match_merge(&dataset.profiles, &rules).map_err(data_err)?
    } else {
        let singletons: Vec<_> = dataset
            .profiles
            .iter()
            .map(|p| match_merge(std::slice::from_ref(p), &rules).map(|s| s.profiles))
            .collect::<Result<Vec<_>, _>>()
            .map_err(data_err)?
            .into_iter()
            .flatten()
            .collect();
        GoldenSet { profiles: singletons }
    };
    let map = set.golden_map();
    Ok((set, map))
}

pub struct FeatureStage {
    pub raw: Vec<FeatureVector>,
    pub reduced: Vec<FeatureVector>,
    pub meta: FeatureMeta,
}

pub fn feature_stage(dataset: &Dataset, golden_map: &GoldenMap, as_of: Date) -> Result<FeatureStage, PipelineError> {
    let raw = build_features(dataset, golden_map, as_of).map_err(data_err)?;
    let (reduced, caps) = reduce_dimensionality(&raw).map_err(data_err)?;
    Ok(FeatureStage {
        meta: FeatureMeta {
            as_of,
            profiles: raw.len(),
            caps,
        },
        raw,
        reduced,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub sample_size: usize,
    pub optimal_k: Option<usize>,
    pub failure: Option<String>,
}

/// `selection.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub config: TrialConfig,
    pub trials: Vec<TrialSummary>,
    pub verdict: crate::select::StabilityVerdict,
    pub base_trial: usize,
}

pub fn selection_report(result: &TrialsResult, config: &TrialConfig) -> SelectionReport {
    let mut trials: Vec<TrialSummary> = result
        .outcomes
        .iter()
        .map(|t| TrialSummary {
            trial: t.trial,
            seed: t.seed,
            sample_size: t.sample.len(),
            optimal_k: Some(t.optimal_k),
            failure: None,
        })
        .chain(result.failures.iter().map(|f| TrialSummary {
            trial: f.trial,
            seed: f.seed,
            sample_size: config.sample_size,
            optimal_k: None,
            failure: Some(f.reason.clone()),
        }))
        .collect();
    trials.sort_by_key(|t| t.trial);
    SelectionReport {
        config: config.clone(),
        trials,
        verdict: result.verdict.clone(),
        base_trial: result.base_trial().trial,
    }
}

/// Writes `elbow/trial_XX.csv` for every trial, failed ones included.
pub fn write_elbow_tables(artifacts: &mut Artifacts, result: &TrialsResult) -> Result<(), PipelineError> {
    let tables = result
        .outcomes
        .iter()
        .map(|t| (t.trial, &t.elbow))
        .chain(result.failures.iter().map(|f| (f.trial, &f.elbow)));
    for (trial, table) in tables {
        artifacts.write(&format!("elbow/trial_{:02}.csv", trial + 1), table.to_csv())?;
    }
    Ok(())
}

pub fn select_stage(
    reduced: &[FeatureVector],
    meta: &FeatureMeta,
    trials: &TrialConfig,
    segment_names: BTreeMap<u32, String>,
) -> Result<(TrialsResult, SegmentModel), PipelineError> {
    let result = run_trials(reduced, trials).map_err(model_err)?;
    let model = SegmentModel::from_trials(&result, reduced, meta.caps.clone(), meta.as_of, trials.seed, segment_names);
    Ok((result, model))
}

pub struct TimelineStage {
    pub tables: Vec<TransitionTable>,
    pub flows: FlowExport,
}

pub fn timeline_stage(
    dataset: &Dataset,
    golden_map: &GoldenMap,
    model: &SegmentModel,
    timestamps: &[Date],
    threshold: f64,
    outflow_after_years: Option<u32>,
) -> Result<TimelineStage, PipelineError> {
    let snapshots = timestamps
        .iter()
        .map(|&t| snapshot(dataset, golden_map, model, t, outflow_after_years).map_err(model_err))
        .collect::<Result<Vec<_>, _>>()?;
    let tables = snapshots
        .windows(2)
        .map(|w| transitions(&w[0], &w[1]).map_err(model_err))
        .collect::<Result<Vec<_>, _>>()?;
    let flows = flow_export(&tables, threshold).map_err(model_err)?;
    Ok(TimelineStage { tables, flows })
}

/// Writes eda.json, segment_profile.csv, highlights.csv and targets.csv.
#[allow(clippy::too_many_arguments)]
pub fn report_stage(
    artifacts: &mut Artifacts,
    golden_dataset: &Dataset,
    raw: &[FeatureVector],
    labels: &[u32],
    model: &SegmentModel,
    rule: &HighlightRule,
    target_segments: &[u32],
) -> Result<(), PipelineError> {
    artifacts.write_json("eda.json", &eda_report(golden_dataset))?;
    let profiles = segment_profile(raw, labels).map_err(model_err)?;
    artifacts.write("segment_profile.csv", segment_profile_csv(&profiles, &|l| model.segment_name(l)))?;
    artifacts.write("highlights.csv", highlights_csv(&characteristic_highlight(&profiles, rule)))?;
    let by_id: BTreeMap<String, u32> = raw.iter().map(|v| v.golden_id.clone()).zip(labels.iter().copied()).collect();
    let segments: BTreeSet<u32> = if target_segments.is_empty() {
        labels.iter().copied().collect()
    } else {
        target_segments.iter().copied().collect()
    };
    let targets = target_list(&by_id, &golden_dataset.profiles, &segments).map_err(model_err)?;
    artifacts.write("targets.csv", targets.to_csv().map_err(out_err)?)
}

/// `run_manifest.json`; everything but `timings` is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub as_of: Date,
    pub timestamps: Vec<Date>,
    pub profiles: usize,
    pub golden_profiles: usize,
    pub reservations: usize,
    pub model_id: String,
    pub k: usize,
    pub verdict: crate::select::StabilityVerdict,
    pub artifacts: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub files: Vec<PathBuf>,
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, PipelineError> + Send,
) -> Result<T, PipelineError> {
    match threads {
        Some(0) => Err(PipelineError::Config("threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?
            .install(f),
        None => f(),
    }
}

/// Reads a JSON artifact written by an earlier stage.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

/// Runs every stage into `config.output`, inside a thread pool of
/// `config.threads` workers when set.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    config.check()?;
    with_threads(config.threads, || run_stages(config))
}

fn run_stages(config: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    let mut out = Artifacts::new(&config.output)?;

    let (dataset, _) = load_dataset(&config.data_dir, &config.maps_path())?;
    let timestamps = config.resolve_timestamps(&dataset)?;
    let as_of = *timestamps.last().expect("at least one timestamp");
    lap("ingest", &mut timings);

    let (golden, golden_map) = merge_stage(&dataset, config.merge_profiles)?;
    let golden_path = out.path("golden_map.csv")?;
    golden_map.write_csv(&golden_path).map_err(out_err)?;
    lap("merge", &mut timings);

    let features = feature_stage(&dataset, &golden_map, as_of)?;
    let features_path = out.path("features.csv")?;
    write_features_csv(&features_path, &features.reduced).map_err(out_err)?;
    out.write_json("features_meta.json", &features.meta)?;
    lap("features", &mut timings);

    let trial_config = config.trial_config();
    let (trials, model) = select_stage(
        &features.reduced,
        &features.meta,
        &trial_config,
        config.segment_names()?,
    )?;
    write_elbow_tables(&mut out, &trials)?;
    out.write_json("selection.json", &selection_report(&trials, &trial_config))?;
    let model_path = out.path("model.json")?;
    model.write_json(&model_path).map_err(out_err)?;
    for t in &trials.outcomes {
        timings.insert(format!("trial_{:02}", t.trial + 1), t.seconds);
    }
    lap("select", &mut timings);

    let population = propagate_1nn(&model, &features.reduced).map_err(model_err)?;
    let ids: Vec<&str> = features.reduced.iter().map(|v| v.golden_id.as_str()).collect();
    let segments_path = out.path("segments.csv")?;
    write_segments_csv(&segments_path, &ids, &population).map_err(out_err)?;
    lap("classify", &mut timings);

    let timeline = timeline_stage(
        &dataset,
        &golden_map,
        &model,
        &timestamps,
        config.flow_threshold,
        config.outflow_after_years,
    )?;
    out.write("transitions.csv", transitions_csv(&timeline.tables))?;
    out.write_json("flows.json", &timeline.flows)?;
    lap("timeline", &mut timings);

    let golden_dataset = golden.apply(&dataset);
    report_stage(
        &mut out,
        &golden_dataset,
        &features.raw,
        &population.labels,
        &model,
        &config.highlight,
        &config.target_segments,
    )?;
    lap("report", &mut timings);

    let mut artifacts: Vec<String> = out
        .written
        .iter()
        .filter_map(|p| p.strip_prefix(out.dir()).ok())
        .map(|p| p.display().to_string())
        .collect();
    artifacts.push("run_manifest.json".into());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        as_of,
        timestamps,
        profiles: dataset.profiles.len(),
        golden_profiles: golden.profiles.len(),
        reservations: dataset.reservations.len(),
        model_id: model.model_id.clone(),
        k: model.k,
        verdict: trials.verdict.clone(),
        artifacts,
        timings,
    };
    out.write_json("run_manifest.json", &manifest)?;
    let files = out.commit()?;
    Ok(RunSummary { manifest, files })
}
