//! `segforge`: guest segmentation from PMS exports.
//!
//! Each subcommand runs one stage from the artifacts of earlier stages; `run`
//! does everything at once. Settings come from a TOML file (`--config` or
//! `SEGFORGE_CONFIG`) and flags override them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use segforge::features::{read_features_csv, FeatureMeta};
use segforge::pipeline::{
    feature_stage, load_dataset, merge_stage, read_json, report_stage, run_pipeline, select_stage, selection_report,
    timeline_stage, with_threads, write_elbow_tables, Artifacts, PipelineConfig, PipelineError, CONFIG_ENV,
};
use segforge::select::{propagate_1nn, read_segments_csv, write_segments_csv};
use segforge::synth::{generate, GeneratorConfig};
use segforge::timeline::transitions_csv;
use segforge::{GoldenMap, SegmentModel};

#[derive(Parser)]
#[command(name = "segforge", version, about = "Guest segmentation for hotel PMS data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the three PMS tables.
    Ingest(Common),
    /// Collapse duplicate profiles into golden profiles (golden_map.csv).
    MergeProfiles {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_merge: bool,
    },
    /// Build and reduce profile vectors (features.csv, features_meta.json).
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        golden_map: Option<PathBuf>,
        #[arg(long)]
        as_of: Option<NaiveDate>,
        #[arg(long)]
        no_merge: bool,
    },
    /// Choose k over sampled trials and freeze the model.
    SelectK {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        meta: Option<PathBuf>,
        #[command(flatten)]
        trials: TrialArgs,
    },
    /// Label every profile vector with the model (segments.csv).
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Replay the model over several timestamps (transitions.csv, flows.json).
    Timeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        golden_map: Option<PathBuf>,
        #[command(flatten)]
        timeline: TimelineArgs,
        #[arg(long)]
        no_merge: bool,
    },
    /// Descriptive statistics, segment overview, highlights and targets.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        segments: Option<PathBuf>,
        /// Segments exported to targets.csv, comma separated; all by default.
        #[arg(long, value_delimiter = ',')]
        target_segments: Option<Vec<u32>>,
        #[arg(long)]
        no_merge: bool,
    },
    /// Generate synthetic PMS data with planted archetypes.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        profiles: Option<usize>,
        /// Generator settings (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long)]
        duplicate_rate: Option<f64>,
    },
    /// Run every stage into the output directory.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        trials: TrialArgs,
        #[command(flatten)]
        timeline: TimelineArgs,
        #[arg(long)]
        no_merge: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Pipeline settings (TOML).
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Directory with profiles.csv, reservations.csv and folios.csv.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Channel and transaction-code mappings; defaults to <data>/maps.toml.
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TrialArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TimelineArgs {
    /// Evaluation dates, comma separated and increasing; the model is trained at the last.
    #[arg(long, value_delimiter = ',')]
    timestamps: Option<Vec<NaiveDate>>,
    /// Minimum share of the later cohort for a flow to be displayed.
    #[arg(long)]
    threshold: Option<f64>,
    /// Years without an arrival after which a guest counts as outflow.
    #[arg(long)]
    outflow_after: Option<u32>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(d) = &self.data {
            c.data_dir = d.clone();
        }
        if let Some(m) = &self.maps {
            c.maps = Some(m.clone());
        }
        if let Some(o) = &self.out {
            c.output = o.clone();
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        Ok(c)
    }
}

impl TrialArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        c.trials = self.trials.unwrap_or(c.trials);
        c.sample_size = self.sample.unwrap_or(c.sample_size);
        c.k_max = self.kmax.unwrap_or(c.k_max);
        c.seed = self.seed.unwrap_or(c.seed);
    }
}

impl TimelineArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(ts) = &self.timestamps {
            c.timestamps = ts.clone();
        }
        c.flow_threshold = self.threshold.unwrap_or(c.flow_threshold);
        if self.outflow_after.is_some() {
            c.outflow_after_years = self.outflow_after;
        }
    }
}

fn artifact(explicit: &Option<PathBuf>, c: &PipelineConfig, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| c.output.join(name))
}

fn golden_map_for(
    explicit: &Option<PathBuf>,
    dataset: &segforge::Dataset,
    merge: bool,
) -> Result<GoldenMap, PipelineError> {
    match explicit {
        Some(path) => GoldenMap::read_csv(path).map_err(|e| PipelineError::Data(e.to_string())),
        None => Ok(merge_stage(dataset, merge)?.1),
    }
}

fn load_model(path: &Path) -> Result<SegmentModel, PipelineError> {
    SegmentModel::read_json(path).map_err(|e| PipelineError::Model(e.to_string()))
}

fn out_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Output(e.to_string())
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Ingest(common) => {
            let c = common.config()?;
            let (dataset, _) = load_dataset(&c.data_dir, &c.maps_path())?;
            println!(
                "{} profiles, {} reservations, {} folio lines: valid",
                dataset.profiles.len(),
                dataset.reservations.len(),
                dataset.folios.len()
            );
            Ok(())
        }
        Command::MergeProfiles { common, no_merge } => {
            let c = common.config()?;
            let (dataset, _) = load_dataset(&c.data_dir, &c.maps_path())?;
            let (set, map) = with_threads(c.threads, || merge_stage(&dataset, c.merge_profiles && !no_merge))?;
            let mut out = Artifacts::new(&c.output)?;
            map.write_csv(&out.path("golden_map.csv")?).map_err(out_err)?;
            out.commit()?;
            println!("{} profiles -> {} golden profiles", dataset.profiles.len(), set.profiles.len());
            Ok(())
        }
        Command::Features {
            common,
            golden_map,
            as_of,
            no_merge,
        } => {
            let c = common.config()?;
            let (dataset, _) = load_dataset(&c.data_dir, &c.maps_path())?;
            let map = golden_map_for(&golden_map, &dataset, c.merge_profiles && !no_merge)?;
            let as_of = match as_of {
                Some(d) => d,
                None => *c.resolve_timestamps(&dataset)?.last().expect("at least one timestamp"),
            };
            let stage = with_threads(c.threads, || feature_stage(&dataset, &map, as_of))?;
            let mut out = Artifacts::new(&c.output)?;
            segforge::features::write_features_csv(&out.path("features.csv")?, &stage.reduced).map_err(out_err)?;
            out.write_json("features_meta.json", &stage.meta)?;
            out.commit()?;
            println!("{} profile vectors as of {as_of}", stage.reduced.len());
            Ok(())
        }
        Command::SelectK {
            common,
            features,
            meta,
            trials,
        } => {
            let mut c = common.config()?;
            trials.apply(&mut c);
            c.check()?;
            let vectors = read_features_csv(&artifact(&features, &c, "features.csv"))
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            let meta: FeatureMeta = read_json(&artifact(&meta, &c, "features_meta.json"))?;
            let config = c.trial_config();
            let (result, model) = with_threads(c.threads, || {
                select_stage(&vectors, &meta, &config, c.segment_names()?)
            })?;
            let mut out = Artifacts::new(&c.output)?;
            write_elbow_tables(&mut out, &result)?;
            out.write_json("selection.json", &selection_report(&result, &config))?;
            model.write_json(&out.path("model.json")?).map_err(out_err)?;
            out.commit()?;
            let v = &result.verdict;
            println!(
                "k = {} ({:?}, {} of {} trials), model {}",
                model.k,
                v.stability,
                v.votes.get(&v.mode_k).copied().unwrap_or(0),
                config.trials,
                model.model_id
            );
            Ok(())
        }
        Command::Classify {
            common,
            model,
            features,
        } => {
            let c = common.config()?;
            let model = load_model(&artifact(&model, &c, "model.json"))?;
            let vectors = read_features_csv(&artifact(&features, &c, "features.csv"))
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            let labels = with_threads(c.threads, || {
                propagate_1nn(&model, &vectors).map_err(|e| PipelineError::Model(e.to_string()))
            })?;
            let ids: Vec<&str> = vectors.iter().map(|v| v.golden_id.as_str()).collect();
            let mut out = Artifacts::new(&c.output)?;
            write_segments_csv(&out.path("segments.csv")?, &ids, &labels).map_err(out_err)?;
            out.commit()?;
            let sizes: BTreeMap<u32, usize> = labels.labels.iter().fold(BTreeMap::new(), |mut m, &l| {
                *m.entry(l).or_default() += 1;
                m
            });
            println!("{} profiles labelled: {sizes:?}", ids.len());
            Ok(())
        }
        Command::Timeline {
            common,
            model,
            golden_map,
            timeline,
            no_merge,
        } => {
            let mut c = common.config()?;
            timeline.apply(&mut c);
            c.check()?;
            let model = load_model(&artifact(&model, &c, "model.json"))?;
            let (dataset, _) = load_dataset(&c.data_dir, &c.maps_path())?;
            let map = golden_map_for(&golden_map, &dataset, c.merge_profiles && !no_merge)?;
            let timestamps = if c.timestamps.is_empty() {
                vec![model.as_of]
            } else {
                c.timestamps.clone()
            };
            let stage = with_threads(c.threads, || {
                timeline_stage(
                    &dataset,
                    &map,
                    &model,
                    &timestamps,
                    c.flow_threshold,
                    c.outflow_after_years,
                )
            })?;
            let mut out = Artifacts::new(&c.output)?;
            out.write("transitions.csv", transitions_csv(&stage.tables))?;
            out.write_json("flows.json", &stage.flows)?;
            out.commit()?;
            println!("{} transition tables over {} timestamps", stage.tables.len(), timestamps.len());
            Ok(())
        }
        Command::Report {
            common,
            model,
            segments,
            target_segments,
            no_merge,
        } => {
            let c = common.config()?;
            let model = load_model(&artifact(&model, &c, "model.json"))?;
            let by_id = read_segments_csv(&artifact(&segments, &c, "segments.csv"))
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            let (dataset, _) = load_dataset(&c.data_dir, &c.maps_path())?;
            let (golden, map) = merge_stage(&dataset, c.merge_profiles && !no_merge)?;
            let raw = segforge::features::build_features(&dataset, &map, model.as_of)
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            let labels = raw
                .iter()
                .map(|v| {
                    by_id.get(&v.golden_id).copied().ok_or_else(|| {
                        PipelineError::Model(format!("{} has no segment in segments.csv", v.golden_id))
                    })
                })
                .collect::<Result<Vec<u32>, _>>()?;
            let targets = target_segments.unwrap_or_else(|| c.target_segments.clone());
            let mut out = Artifacts::new(&c.output)?;
            report_stage(
                &mut out,
                &golden.apply(&dataset),
                &raw,
                &labels,
                &model,
                &c.highlight,
                &targets,
            )?;
            out.commit()?;
            println!("report for {} profiles written to {}", raw.len(), c.output.display());
            Ok(())
        }
        Command::Synth {
            seed,
            profiles,
            config,
            out,
            duplicate_rate,
        } => {
            let config_err = |e: segforge::synth::SynthError| PipelineError::Config(e.to_string());
            let mut g = match config {
                Some(path) => GeneratorConfig::load(&path).map_err(config_err)?,
                None => GeneratorConfig::default(),
            };
            g.seed = seed.unwrap_or(g.seed);
            g.profiles = profiles.unwrap_or(g.profiles);
            g.duplicate_rate = duplicate_rate.unwrap_or(g.duplicate_rate);
            let synth = generate(&g).map_err(config_err)?;
            synth.write_dir(&out).map_err(out_err)?;
            println!(
                "{} profiles, {} reservations written to {}",
                synth.dataset.profiles.len(),
                synth.dataset.reservations.len(),
                out.display()
            );
            Ok(())
        }
        Command::Run {
            common,
            trials,
            timeline,
            no_merge,
        } => {
            let mut c = common.config()?;
            trials.apply(&mut c);
            timeline.apply(&mut c);
            c.merge_profiles &= !no_merge;
            let summary = run_pipeline(&c)?;
            let m = &summary.manifest;
            println!(
                "k = {} ({:?}) over {} golden profiles; {} artifacts in {}",
                m.k,
                m.verdict.stability,
                m.golden_profiles,
                summary.files.len(),
                c.output.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("segforge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
