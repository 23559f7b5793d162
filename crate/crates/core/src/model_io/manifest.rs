use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

use super::format::FORMAT_VERSION;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub pair_id: String,
    /// File name relative to the dump directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFailure {
    pub pair_id: String,
    pub reason: String,
}

/// `manifest.json` of a dump directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpManifest {
    pub format_version: u16,
    pub lm_model: String,
    pub mt_model: String,
    pub lm_tokenizer: String,
    pub mt_tokenizer: String,
    pub layers: usize,
    pub heads: usize,
    pub pairs: Vec<PairEntry>,
    #[serde(default)]
    pub failures: Vec<ExportFailure>,
}

impl DumpManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
        let manifest: DumpManifest =
            serde_json::from_str(&text).map_err(|e| CoreError::json(&path, e))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(CoreError::Format {
                path,
                detail: format!(
                    "manifest format version {} (expected {FORMAT_VERSION})",
                    manifest.format_version
                ),
            });
        }
        Ok(manifest)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CoreError::json(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CoreError::io(&path, e))
    }

    pub fn files_by_pair(&self, dir: &Path) -> BTreeMap<String, PathBuf> {
        self.pairs
            .iter()
            .map(|p| (p.pair_id.clone(), dir.join(&p.file)))
            .collect()
    }

    /// Pair ids listed in the manifest whose file is missing on disk.
    pub fn missing_files(&self, dir: &Path) -> Vec<String> {
        self.pairs
            .iter()
            .filter(|p| !dir.join(&p.file).is_file())
            .map(|p| p.pair_id.clone())
            .collect()
    }

    /// A file name safe for any pair id.
    pub fn file_name_for(pair_id: &str) -> String {
        let stem: String = pair_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{stem}.tdwb")
    }
}
