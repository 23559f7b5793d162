//! Stage scheduling, the run manifest and the overwrite rules.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tdiff_stats::evaluation::derive_seed;

use crate::config::LoadedConfig;
use crate::error::{CliError, Result};
use crate::stages;
use crate::tsv;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Extract,
    Fit,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Extract, Stage::Fit, Stage::Evaluate, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn previous(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|&s| s == self)?;
        i.checked_sub(1).map(|j| Stage::ALL[j])
    }

    /// This stage and every stage after it.
    pub fn onwards(self) -> &'static [Stage] {
        let i = Stage::ALL.iter().position(|&s| s == self).unwrap_or(0);
        &Stage::ALL[i..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pending,
    Done,
    Failed,
}

/// Seeds of every random procedure, all derived from the configured seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub folds: u64,
    /// Base of the per-comparison permutation seeds.
    pub permutation: u64,
    pub bootstrap: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Seeds {
            master,
            folds: derive_seed(master, "folds"),
            permutation: derive_seed(master, "perm"),
            bootstrap: derive_seed(master, "pos"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: Seeds,
    pub stages: BTreeMap<Stage, StageStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Manifest {
    pub fn new(cfg: &LoadedConfig) -> Self {
        Manifest {
            config_hash: cfg.config.hash(),
            config: serde_json::to_value(&cfg.config).expect("configuration always serializes"),
            seeds: Seeds::from_master(cfg.config.seed),
            stages: Stage::ALL.iter().map(|&s| (s, StageStatus::Pending)).collect(),
            failed_stage: None,
            failure: None,
        }
    }

    pub fn status(&self, stage: Stage) -> StageStatus {
        self.stages.get(&stage).copied().unwrap_or(StageStatus::Pending)
    }

    pub fn load(run_dir: &Path) -> Result<Manifest> {
        tsv::read_json(&run_dir.join(MANIFEST_FILE))
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        tsv::write_json(&run_dir.join(MANIFEST_FILE), self)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub force: bool,
}

/// Everything a stage needs: the configuration, the run directory and the
/// derived seeds.
pub struct StageContext<'a> {
    pub cfg: &'a LoadedConfig,
    pub run_dir: PathBuf,
    pub seeds: Seeds,
}

impl StageContext<'_> {
    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.run_dir.join(stage.name())
    }
}

fn remove_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

/// Runs `stages` in order against the run directory named by the config.
///
/// A stage needs its predecessor completed under the same configuration
/// hash. Existing stage output is only replaced with `force`, which also
/// clears every later stage. A failing stage is recorded in the manifest
/// and its partial output is left in place.
pub fn run_stages(cfg: &LoadedConfig, stages: &[Stage], opts: &RunOptions) -> Result<Manifest> {
    cfg.validate()?;
    let run_dir = cfg.output_dir();
    fs::create_dir_all(&run_dir).map_err(|e| CliError::io(&run_dir, e))?;

    let fresh = Manifest::new(cfg);
    let mut manifest = match Manifest::load(&run_dir) {
        Ok(m) if m.config_hash == fresh.config_hash => m,
        Ok(_) if !opts.force => {
            return Err(CliError::Validation(format!(
                "{} holds a run with a different configuration; use --force to replace it",
                run_dir.display()
            )))
        }
        Ok(_) => {
            for s in Stage::ALL {
                remove_dir(&run_dir.join(s.name()))?;
            }
            fresh
        }
        Err(_) if run_dir.join(MANIFEST_FILE).exists() && !opts.force => {
            return Err(CliError::Validation(format!(
                "{} has an unreadable manifest; use --force to replace it",
                run_dir.display()
            )))
        }
        Err(_) => fresh,
    };

    let ctx = StageContext {
        cfg,
        run_dir: run_dir.clone(),
        seeds: manifest.seeds.clone(),
    };
    for &stage in stages {
        if let Some(prev) = stage.previous() {
            // the report renders partial runs too
            if stage != Stage::Report && manifest.status(prev) != StageStatus::Done {
                return Err(CliError::Validation(format!(
                    "stage {} needs a completed {} stage",
                    stage.name(),
                    prev.name()
                )));
            }
        }
        let dir = ctx.dir(stage);
        if dir.exists() {
            if !opts.force {
                return Err(CliError::Validation(format!(
                    "{} exists; use --force to overwrite",
                    dir.display()
                )));
            }
            for &s in stage.onwards() {
                remove_dir(&ctx.dir(s))?;
                manifest.stages.insert(s, StageStatus::Pending);
            }
        }
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        manifest.failed_stage = None;
        manifest.failure = None;
        manifest.save(&run_dir)?;

        log::info!("stage {} started", stage.name());
        let outcome = match stage {
            Stage::Ingest => stages::ingest::run(&ctx),
            Stage::Extract => stages::extract::run(&ctx),
            Stage::Fit => stages::fit::run(&ctx),
            Stage::Evaluate => stages::evaluate::run(&ctx),
            Stage::Report => stages::report::render(&run_dir),
        };
        match outcome {
            Ok(()) => {
                manifest.stages.insert(stage, StageStatus::Done);
                manifest.save(&run_dir)?;
                log::info!("stage {} done", stage.name());
            }
            Err(e) => {
                manifest.stages.insert(stage, StageStatus::Failed);
                manifest.failed_stage = Some(stage);
                manifest.failure = Some(e.to_string());
                manifest.save(&run_dir)?;
                return Err(match e {
                    CliError::Stage { .. } => e,
                    other => CliError::Stage {
                        stage: stage.name().into(),
                        detail: other.to_string(),
                    },
                });
            }
        }
    }
    Ok(manifest)
}
