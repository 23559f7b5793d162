//! Cross-validated held-out likelihood comparison and the statistics
//! reported alongside it.

mod correlation;
mod cv;
mod delta;
mod permutation;
mod pos;
mod seeds;
mod vif;

pub use correlation::{average_ranks, correlation, Correlation, CorrelationMethod};
pub use cv::{cross_validate, CvResult, FoldFit, ModelSpec};
pub use delta::{delta_llh, stars, DeltaLlh, TestUnit};
pub use permutation::{paired_permutation_test, Sidedness};
pub use pos::{pos_group_summary, Interval, PosGroup, TaggedRow, BOOTSTRAP_RESAMPLES};
pub use seeds::derive_seed;
pub use vif::{vif, Vif, VIF_WARN};
