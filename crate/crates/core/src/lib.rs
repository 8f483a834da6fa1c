//! Facial action unit synchrony in dyadic video and trust prediction.

pub mod baselines;
pub mod config;
pub mod controls;
pub mod error;
pub mod pipeline;
pub mod prediction;
pub mod preprocess;
pub mod pursuit;
pub mod seed;
pub mod session;
pub mod synth;
pub mod warping;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use pipeline::{FeatureMethod, FeatureTable, ProcessedSession};
pub use prediction::{CvOptions, CvReport, ElasticNetFit, FeatureMatrix};
pub use session::{Role, Session, Subject, TrustLabel};
pub use synth::SynthSpec;
pub use warping::{AlignmentConstraints, WarpMethod, WarpingPath};
