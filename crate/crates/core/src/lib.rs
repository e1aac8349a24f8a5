//! Interactive familywise error rate control with masked p-values.

pub mod audit;
pub mod baselines;
pub mod basis;
pub mod error;
pub mod masking;
pub mod normal;
pub mod scoring;
pub mod session;
pub mod shrinkers;
pub mod simulation;
pub mod tree;

pub use error::{Error, Result};
pub use masking::{MaskedPair, MaskingScheme, Sign};
pub use session::{AnalystView, Disclosure, Journal, Session, SessionConfig, Status, StepOutcome};
pub use tree::Tree;
