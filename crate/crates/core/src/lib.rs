//! Unlearning-aware training for split models.
//!
//! A network is split into a feature extractor and a linear SVM head. The
//! extractor is trained only on a ranked core set of samples (those most often
//! selected as support vectors across seeded runs) while the SVM sees the whole
//! corpus. Forgetting a sample outside the core set and outside the current
//! support set is then free, forgetting any other non-core sample costs one SVM
//! refit, and forgetting core samples falls back to an approximate SVM-only
//! refit that can be audited with a membership-inference attack.
//!
//! Module map:
//! - [`data`]: corpora, sample-ID sets, IDX loading, forget-set directives.
//! - [`nn`]: feature extractor with a temporary softmax prediction layer.
//! - [`svm`]: dual soft-margin SVM (SMO), one-vs-rest, Platt calibration.
//! - [`ranking`]: support-vector frequency ranking and core-set selection.
//! - [`pipeline`]: unlearning-aware training, request dispatch, witnesses.
//! - [`audit`]: cross-entropy membership inference and agreement statistics.

pub mod audit;
pub mod codec;
pub mod data;
pub mod nn;
pub mod pipeline;
pub mod ranking;
pub mod svm;

pub use data::{IdSet, LabeledDataset, SampleId};
pub use nn::{ArchSpec, EmbeddingSet, FeatureExtractor, TrainConfig};
pub use pipeline::{SplitModel, UnlearnMode, UnlearnOutcome, UnlearnRequest};
pub use ranking::CoreRanking;
pub use svm::{BinarySvm, OvrSvm, SvmConfig};
