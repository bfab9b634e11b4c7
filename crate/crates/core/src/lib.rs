//! Collection, unification and distribution of labeled inertial-sensor datasets.
//!
//! The crate is organised along the data path:
//!
//! * [`driver`] turns declarative manifests into parsed [`model::RawRecording`]s.
//! * [`aligner`] converts units, remaps axes, resamples to the canonical rate
//!   and optionally separates gravity.
//! * [`labels`] scores raw labels against the canonical dictionary and keeps
//!   the human review decisions.
//! * [`store`] persists canonical recordings as checksummed segment files
//!   with a JSON-Lines catalog.
//! * [`composer`] answers queries and cuts recordings into labeled windows.
//! * [`classifier`] trains, serializes and serves baseline activity models.
//! * [`platform`] wires all of the above into import jobs and a model registry.

pub mod aligner;
pub mod classifier;
pub mod composer;
pub mod driver;
pub mod labels;
pub mod model;
pub mod platform;
pub mod store;

pub use model::{
    normalize_label_text, validate_raw, CanonicalRecording, DeclaredUnit, LabelDictionary,
    LabelSpan, RawRecording, Sample, SampleTiming, SensorKind, Violation, Window,
    CANONICAL_RATE_HZ, STANDARD_GRAVITY,
};
