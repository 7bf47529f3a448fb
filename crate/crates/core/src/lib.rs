//! Therblig toolkit core: symbols and contact sets, the three contact
//! consistency rules with candidate filtering, Gumbel-Softmax relaxed rule
//! losses with analytic gradients, evaluation metrics, synthetic data
//! generation and the canonical annotation record format.

pub mod datagen;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod record;
pub mod rules;
pub mod vocab;

pub use error::{Error, Result};
pub use rules::{apply_tuple, fold_sequence, Rule, RuleViolation, Rules, ValidationReport, DEFAULT_MAX_LEN};
pub use vocab::{hand_to_set, ContactSet, HandContact, ObjectId, ObjectVocabulary, Therblig, TherbligSequence, Verb};
