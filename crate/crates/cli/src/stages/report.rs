//! Renders the summary document and plot-ready tables from a run
//! directory. Every number shown is copied verbatim from a result table;
//! the renderer computes nothing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tdiff_core::ingest::{DurationMeasure, UnitLevel};

use crate::config::{side_prefix, RunConfig};
use crate::error::{CliError, Result};
use crate::run::{Manifest, Stage, StageStatus, MANIFEST_FILE};
use crate::stages::fit::{model_defs, BASELINE};
use crate::stages::scopes;
use crate::tsv::Table;

pub const MISSING: &str = "missing";
pub const NOT_APPLICABLE: &str = "-";

fn optional_table(path: &Path) -> Result<Option<Table>> {
    if path.exists() {
        Table::read(path).map(Some)
    } else {
        Ok(None)
    }
}

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

/// Field accessor for rows of a result table.
struct Fields<'a> {
    table: &'a Table,
}

impl<'a> Fields<'a> {
    fn get(&self, row: &'a [String], name: &str) -> &'a str {
        self.table.column(name).map_or("", |i| row[i].as_str())
    }

    fn find(&self, conds: &[(&str, &str)]) -> Option<&'a Vec<String>> {
        self.table
            .rows
            .iter()
            .find(|r| conds.iter().all(|(k, v)| self.get(r, k) == *v))
    }
}

fn delta_cell(delta: Option<&Table>, scope: &str, level: UnitLevel, m: DurationMeasure, model: &str, cmp: &str) -> String {
    let Some(t) = delta else { return MISSING.into() };
    let f = Fields { table: t };
    match f.find(&[
        ("scope", scope),
        ("measure", m.as_str()),
        ("level", level.as_str()),
        ("model", model),
        ("comparison", cmp),
    ]) {
        Some(r) => {
            let stars = f.get(r, "stars");
            let ci = format!("[{}, {}]", f.get(r, "ci_lo"), f.get(r, "ci_hi"));
            if stars.is_empty() {
                format!("{} {ci}", f.get(r, "mean"))
            } else {
                format!("{} {ci} {stars}", f.get(r, "mean"))
            }
        }
        None => MISSING.into(),
    }
}

fn coefficient_cell(coefs: Option<&Table>, scope: &str, level: UnitLevel, m: DurationMeasure, model: &str) -> String {
    let Some(t) = coefs else { return MISSING.into() };
    let f = Fields { table: t };
    let term = format!("{}.{model}", side_prefix(m));
    match f.find(&[
        ("scope", scope),
        ("measure", m.as_str()),
        ("level", level.as_str()),
        ("model", model),
        ("term", &term),
    ]) {
        Some(r) => format!("{} ({})", f.get(r, "estimate"), f.get(r, "std_error")),
        None => MISSING.into(),
    }
}

/// Model names in first-seen order over the configured measures.
fn model_rows(cfg: &RunConfig, supplementary: bool) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for &m in &cfg.measures {
        for d in model_defs(cfg, m) {
            if d.name != BASELINE && d.name.contains('+') == supplementary && !names.contains(&d.name) {
                names.push(d.name);
            }
        }
    }
    names
}

fn has_model(cfg: &RunConfig, m: DurationMeasure, model: &str) -> bool {
    model_defs(cfg, m).iter().any(|d| d.name == model)
}

fn copy_section(out: &mut String, title: &str, table: Option<&Table>, empty: &str) {
    let _ = writeln!(out, "## {title}\n");
    match table {
        Some(t) if !t.rows.is_empty() => md_table(out, &t.header, &t.rows),
        Some(_) => {
            let _ = writeln!(out, "{empty}\n");
        }
        None => {
            let _ = writeln!(out, "{MISSING}\n");
        }
    }
}

pub fn render(run_dir: &Path) -> Result<()> {
    let manifest = Manifest::load(run_dir)
        .map_err(|e| CliError::Render(format!("cannot read {}: {e}", run_dir.join(MANIFEST_FILE).display())))?;
    let cfg: RunConfig = serde_json::from_value(manifest.config.clone())
        .map_err(|e| CliError::Render(format!("manifest holds an unusable configuration: {e}")))?;
    let out_dir = run_dir.join(Stage::Report.name());
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;

    let ingest = run_dir.join(Stage::Ingest.name());
    let fit = run_dir.join(Stage::Fit.name());
    let eval = run_dir.join(Stage::Evaluate.name());
    let counts = optional_table(&ingest.join("counts.tsv"))?;
    let cells = optional_table(&fit.join("cells.tsv"))?;
    let errors = optional_table(&fit.join("cell_errors.tsv"))?;
    let coefs = optional_table(&fit.join("coefficients.tsv"))?;
    let delta = optional_table(&eval.join("delta_llh.tsv"))?;
    let vif = optional_table(&eval.join("vif.tsv"))?;
    let corr = optional_table(&eval.join("correlations.tsv"))?;
    let pos = optional_table(&eval.join("pos_summary.tsv"))?;

    let mut md = String::new();
    let _ = writeln!(md, "# Translation difficulty analysis\n");
    let _ = writeln!(md, "- config hash: `{}`", manifest.config_hash);
    let _ = writeln!(md, "- seed: {}", manifest.seeds.master);
    let status: Vec<String> = Stage::ALL
        .iter()
        .filter(|&&s| s != Stage::Report)
        .map(|&s| {
            let st = match manifest.status(s) {
                StageStatus::Done => "done",
                StageStatus::Failed => "failed",
                StageStatus::Pending => "not run",
            };
            format!("{} {st}", s.name())
        })
        .collect();
    let _ = writeln!(md, "- stages: {}", status.join(", "));
    if let (Some(stage), Some(msg)) = (manifest.failed_stage, &manifest.failure) {
        let _ = writeln!(md, "- failed stage: {} ({msg})", stage.name());
    }
    md.push('\n');

    copy_section(&mut md, "Samples after filtering", counts.as_ref(), "No observations.");

    let measures: Vec<String> = cfg.measures.iter().map(|m| m.as_str().to_string()).collect();
    let header = |first: &str| -> Vec<String> { std::iter::once(first.to_string()).chain(measures.iter().cloned()).collect() };

    let _ = writeln!(md, "## Held-out log-likelihood gain\n");
    let _ = writeln!(
        md,
        "Mean per-observation difference in held-out log-likelihood (nats) over the compared model, \
         95% interval over fold means, and permutation-test stars (* p < .05, ** p < .01, *** p < .001). \
         `{MISSING}` marks a cell without a result, `{NOT_APPLICABLE}` a model not defined for the measure.\n"
    );
    let singles = model_rows(&cfg, false);
    let supplementary = model_rows(&cfg, true);
    if singles.is_empty() && supplementary.is_empty() {
        let _ = writeln!(md, "Only the baseline model was configured; there are no comparisons.\n");
    }
    for scope in scopes(&cfg) {
        for &level in &cfg.levels {
            for (models, against_surprisal, title) in [
                (&singles, false, "over the baseline"),
                (&supplementary, true, "over surprisal alone"),
            ] {
                if models.is_empty() {
                    continue;
                }
                let _ = writeln!(md, "### {scope}, {} level, {title}\n", level.as_str());
                let rows: Vec<Vec<String>> = models
                    .iter()
                    .map(|model| {
                        let mut row = vec![model.clone()];
                        for &m in &cfg.measures {
                            let cmp = match model.split_once('+') {
                                Some((s, _)) if against_surprisal => s,
                                _ => BASELINE,
                            };
                            row.push(if has_model(&cfg, m, model) {
                                delta_cell(delta.as_ref(), &scope, level, m, model, cmp)
                            } else {
                                NOT_APPLICABLE.into()
                            });
                        }
                        row
                    })
                    .collect();
                md_table(&mut md, &header("model"), &rows);
            }
        }
    }

    if !singles.is_empty() {
        let _ = writeln!(md, "## Feature coefficients\n");
        let _ = writeln!(
            md,
            "Estimate (standard error) of the feature in each single-feature model fitted on all rows, \
             predictors standardized.\n"
        );
        for scope in scopes(&cfg) {
            for &level in &cfg.levels {
                let _ = writeln!(md, "### {scope}, {} level\n", level.as_str());
                let rows: Vec<Vec<String>> = singles
                    .iter()
                    .map(|model| {
                        let mut row = vec![model.clone()];
                        for &m in &cfg.measures {
                            row.push(if has_model(&cfg, m, model) {
                                coefficient_cell(coefs.as_ref(), &scope, level, m, model)
                            } else {
                                NOT_APPLICABLE.into()
                            });
                        }
                        row
                    })
                    .collect();
                md_table(&mut md, &header("feature"), &rows);
            }
        }
    }

    copy_section(&mut md, "Fitted cells", cells.as_ref(), "No cells.");
    copy_section(&mut md, "Fit errors", errors.as_ref(), "None.");

    let flagged = vif.as_ref().map(|t| {
        let f = Fields { table: t };
        Table {
            header: t.header.clone(),
            rows: t.rows.iter().filter(|r| f.get(r, "flagged") == "true").cloned().collect(),
        }
    });
    copy_section(
        &mut md,
        &format!("Collinearity warnings (VIF above {})", tdiff_stats::evaluation::VIF_WARN),
        flagged.as_ref(),
        "No predictor above the threshold.",
    );
    copy_section(&mut md, "Feature correlations", corr.as_ref(), "No correlations computed.");
    copy_section(&mut md, "Part-of-speech summary", pos.as_ref(), "No tagged word-level observations.");

    let path = out_dir.join("report.md");
    fs::write(&path, md).map_err(|e| CliError::io(&path, e))?;

    let mut plots: BTreeMap<&str, Option<&Table>> = BTreeMap::new();
    plots.insert("delta_llh.csv", delta.as_ref());
    plots.insert("coefficients.csv", coefs.as_ref());
    plots.insert("pos.csv", pos.as_ref());
    for (name, t) in plots {
        if let Some(t) = t {
            t.write_csv(&out_dir.join(name))?;
        }
    }
    Ok(())
}
