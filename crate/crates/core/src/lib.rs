//! Guest segmentation for hotel property-management data.
//!
//! The crate turns the three relational PMS tables (profiles, reservations,
//! folios) into labelled guest segments:
//!
//! * [`pms`] ingests and validates the CSV tables and classifies channels and
//!   transaction codes.
//! * [`golden`] collapses duplicate profiles into golden profiles with a
//!   rule-based match and merge (exact and Soundex keys).
//! * [`features`] builds the 25-attribute mixed-type profile vector as of a
//!   cutoff date and reduces its value space.
//! * [`cluster`] computes Gower dissimilarities and runs Ward agglomerative
//!   clustering.
//! * [`select`] chooses the cluster count with the elbow criterion and its
//!   relative strength over repeated sampled trials, then propagates labels
//!   with a 1-nearest-neighbour classifier.
//! * [`timeline`] replays a trained model over several timestamps and counts
//!   segment transitions, including the stream of new guests.
//! * [`insights`] produces descriptive statistics, per-segment attribute
//!   overviews and opt-in target lists.
//! * [`synth`] generates seeded synthetic PMS data with planted archetypes.
//! * [`pipeline`] wires everything into one reproducible run.

pub mod cluster;
pub mod features;
pub mod golden;
pub mod insights;
pub mod pipeline;
pub mod pms;
pub mod select;
pub mod synth;
pub mod timeline;

pub use cluster::{ClusterAssignment, Dendrogram, DistanceMatrix, GowerSpace};
pub use features::{Feature, FeatureKind, FeatureVector, ReductionCaps};
pub use golden::{GoldenMap, GoldenProfile, GoldenSet, MergeRule};
pub use pms::{Dataset, Mappings, Money};
pub use select::{ElbowTable, SegmentModel, StabilityVerdict, TrialConfig};
pub use timeline::{SegmentNode, SnapshotAssignment, TransitionTable};
