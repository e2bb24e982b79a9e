//! Design, analysis and simulation of two-stage SMARTs for non-inferiority
//! and equivalence comparisons of embedded adaptive interventions.

pub mod design;
pub mod error;
pub mod inference;
pub mod normal;
pub mod planning;
pub mod simulation;
pub mod trial_file;

pub use design::{AiPair, Cell, CellMeans, EmbeddedAi, Path, RandomizationProbs, SmartDesign, Stage1, Stage2, Standardized, Tactic};
pub use error::{Error, Result};
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile, Probability, ZScore};
