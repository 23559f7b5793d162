//! Pipeline stages. Each one reads the serialized output of earlier stages
//! from the run directory and writes its own subdirectory.

pub mod evaluate;
pub mod extract;
pub mod fit;
pub mod ingest;
pub mod report;

/// Group label of a participant; ids are only unique within a study.
pub fn participant_label(study: &str, participant: &str) -> String {
    format!("{study}/{participant}")
}

/// `all` plus the configured language pairs, in that order.
pub fn scopes(cfg: &crate::config::RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.scopes.pooled {
        out.push(POOLED.to_string());
    }
    out.extend(cfg.scopes.language_pairs.iter().cloned());
    out
}

pub const POOLED: &str = "all";
