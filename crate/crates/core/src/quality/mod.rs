//! Quality filtering: contamination-based datasets, a hashed linear
//! classifier and threshold filtering of scored corpora.

pub mod classifier;
pub mod contaminate;
pub mod filter;
pub mod recipe;

pub use classifier::{auc, ClassifierModel, Example, FeatureSpec, Hyperparams, QualityScorer, TrainingMeta};
pub use contaminate::{contaminate, ContaminationRule, DonorPool, Op, Unit};
pub use filter::{filter, score_corpus, FilterRun, QualityScore};
pub use recipe::{build_dataset, load_dataset, Dataset, QualityRecipe};
