//! Cross-validated fits of the baseline and every extended model, per
//! scope, measure and unit level.

use std::collections::BTreeMap;
use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tdiff_core::ingest::{DurationMeasure, UnitLevel};
use tdiff_core::features::{SOURCE_ATTENTION_FEATURES, TARGET_ATTENTION_FEATURES};
use tdiff_stats::evaluation::{cross_validate, CvResult, FoldFit, ModelSpec};
use tdiff_stats::regression::{FitResult, ModelKind};
use tdiff_stats::{DesignMatrix, GroupFactor, Scaling};

use crate::config::{side_prefix, surprisal_for, RunConfig, CONTROL_COLUMNS};
use crate::error::{CliError, Result};
use crate::features_table::{FeatureRow, FeatureTable};
use crate::run::{Stage, StageContext};
use crate::stages::{scopes, POOLED};
use crate::tsv::{self, Table};

pub const BASELINE: &str = "baseline";
pub const PARTICIPANT_FACTOR: &str = "participant";
pub const LANGUAGE_FACTOR: &str = "language";
/// Digits of the coefficient table.
const DIGITS: usize = 6;

/// One model of a cell: its name and its prefixed predictor columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDef {
    pub name: String,
    pub columns: Vec<String>,
}

/// Baseline (controls only), one model per configured feature, and with
/// supplementary models enabled, surprisal plus each attentional feature.
pub fn model_defs(cfg: &RunConfig, m: DurationMeasure) -> Vec<ModelDef> {
    let prefix = side_prefix(m);
    let col = |f: &str| format!("{prefix}.{f}");
    let controls: Vec<String> = CONTROL_COLUMNS.iter().map(|c| col(c)).collect();
    let with = |extra: &[&str]| -> Vec<String> { controls.iter().cloned().chain(extra.iter().map(|f| col(f))).collect() };
    let mut defs = vec![ModelDef {
        name: BASELINE.into(),
        columns: controls.clone(),
    }];
    let features = cfg.features.for_measure(m);
    for f in features {
        defs.push(ModelDef {
            name: f.clone(),
            columns: with(&[f]),
        });
    }
    let attention: Vec<&String> = features
        .iter()
        .filter(|f| SOURCE_ATTENTION_FEATURES.contains(&f.as_str()) || TARGET_ATTENTION_FEATURES.contains(&f.as_str()))
        .collect();
    if cfg.features.supplementary && !attention.is_empty() {
        let s = surprisal_for(m);
        if !features.iter().any(|f| f == s) {
            defs.push(ModelDef {
                name: s.into(),
                columns: with(&[s]),
            });
        }
        for f in attention {
            defs.push(ModelDef {
                name: format!("{s}+{f}"),
                columns: with(&[s, f]),
            });
        }
    }
    defs
}

/// The models a model is compared against: the baseline, and for a
/// surprisal-plus-feature model also the surprisal-only model.
pub fn comparisons(model: &str) -> Vec<String> {
    match model.split_once('+') {
        Some((s, _)) => vec![BASELINE.into(), s.into()],
        None if model == BASELINE => Vec::new(),
        None => vec![BASELINE.into()],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub scope: String,
    pub measure: DurationMeasure,
    pub level: UnitLevel,
}

impl Cell {
    pub fn key(&self) -> String {
        format!("{}.{}.{}", self.scope, self.measure.as_str(), self.level.as_str())
    }
}

pub fn cells(cfg: &RunConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for scope in scopes(cfg) {
        for &level in &cfg.levels {
            for &measure in &cfg.measures {
                out.push(Cell {
                    scope: scope.clone(),
                    measure,
                    level,
                });
            }
        }
    }
    out
}

/// Rows of `table` that belong to the cell and have the response and every
/// column of `needed`.
pub fn cell_rows<'a>(table: &'a FeatureTable, cell: &Cell, needed: &[String]) -> Result<Vec<&'a FeatureRow>> {
    let idx = needed
        .iter()
        .map(|c| {
            table.index(c).ok_or_else(|| CliError::Stage {
                stage: Stage::Fit.name().into(),
                detail: format!("feature table lacks column {c}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let y = table.index(cell.measure.as_str()).expect("duration columns are always present");
    Ok(table
        .rows
        .iter()
        .filter(|r| r.level == cell.level && (cell.scope == POOLED || r.language_pair == cell.scope))
        .filter(|r| r.values[y].is_some() && idx.iter().all(|&i| r.values[i].is_some()))
        .collect())
}

pub fn cell_design(table: &FeatureTable, rows: &[&FeatureRow], columns: &[String], measure: DurationMeasure) -> Result<DesignMatrix> {
    let idx: Vec<usize> = columns.iter().map(|c| table.index(c).expect("checked by cell_rows")).collect();
    let y = table.index(measure.as_str()).expect("duration columns are always present");
    let x: Vec<Vec<f64>> = rows.iter().map(|r| idx.iter().map(|&i| r.values[i].unwrap()).collect()).collect();
    let groups = vec![
        GroupFactor::new(PARTICIPANT_FACTOR, rows.iter().map(|r| r.participant.clone()).collect()),
        GroupFactor::new(LANGUAGE_FACTOR, rows.iter().map(|r| r.language_pair.clone()).collect()),
    ];
    Ok(DesignMatrix::from_rows(
        columns.to_vec(),
        &x,
        rows.iter().map(|r| r.values[y].unwrap()).collect(),
        groups,
    )?)
}

/// Every model fitted on a cell, as stored in `fits/<cell>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFits {
    pub columns: Vec<String>,
    pub folds: Vec<FoldFit>,
    /// Fit on all rows of the cell, with predictors standardized on them.
    pub full: FitResult,
}

fn fit_model(design: &DesignMatrix, folds: &[usize], units: &[String], spec: &ModelSpec) -> std::result::Result<(CvResult, FitResult), String> {
    let cv = cross_validate(design, folds, units, spec).map_err(|e| e.to_string())?;
    let selected = design.select(&spec.columns).map_err(|e| e.to_string())?;
    let scaling = Scaling::fit(&selected).map_err(|e| e.to_string())?;
    let full = spec
        .fit(&scaling.apply(&selected).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    Ok((cv, full))
}

pub fn model_kind(cfg: &RunConfig, cell: &Cell) -> ModelKind {
    if cell.scope == POOLED {
        cfg.model.pooled
    } else {
        cfg.model.per_pair
    }
}

pub fn run(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.cfg.config;
    let out = ctx.dir(Stage::Fit);
    let table = FeatureTable::read(&ctx.dir(Stage::Extract).join("features.tsv"))?;
    for sub in ["llh", "fits"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
    }

    struct Prepared<'a> {
        cell: Cell,
        defs: Vec<ModelDef>,
        rows: Vec<&'a FeatureRow>,
        design: Option<DesignMatrix>,
        error: Option<String>,
    }

    let mut prepared = Vec::new();
    for cell in cells(cfg) {
        let defs = model_defs(cfg, cell.measure);
        let mut needed: Vec<String> = defs.iter().flat_map(|d| d.columns.iter().cloned()).collect();
        needed.sort();
        needed.dedup();
        let rows = cell_rows(&table, &cell, &needed)?;
        let (design, error) = if rows.len() < 2 * cfg.folds.k {
            (None, Some(format!("{} usable rows, too few for {} folds", rows.len(), cfg.folds.k)))
        } else {
            match cell_design(&table, &rows, &needed, cell.measure) {
                Ok(d) => (Some(d), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        prepared.push(Prepared {
            cell,
            defs,
            rows,
            design,
            error,
        });
    }

    let jobs: Vec<(usize, usize)> = prepared
        .iter()
        .enumerate()
        .filter(|(_, p)| p.design.is_some())
        .flat_map(|(c, p)| (0..p.defs.len()).map(move |m| (c, m)))
        .collect();
    let results: Vec<std::result::Result<(CvResult, FitResult), String>> = jobs
        .par_iter()
        .map(|&(c, m)| {
            let p = &prepared[c];
            let design = p.design.as_ref().expect("jobs only for prepared designs");
            let folds: Vec<usize> = p.rows.iter().map(|r| r.fold).collect();
            let units: Vec<String> = p.rows.iter().map(|r| r.source_sentence_id.clone()).collect();
            let mut spec = ModelSpec::new(model_kind(cfg, &p.cell), p.defs[m].columns.clone());
            spec.predictive = cfg.model.predictive;
            fit_model(design, &folds, &units, &spec)
        })
        .collect();
    let mut by_cell: BTreeMap<usize, Vec<(usize, std::result::Result<(CvResult, FitResult), String>)>> = BTreeMap::new();
    for (&(c, m), r) in jobs.iter().zip(results) {
        by_cell.entry(c).or_default().push((m, r));
    }

    let mut cells_t = Table::new(["scope", "measure", "level", "model_kind", "n", "status"]);
    let mut errors_t = Table::new(["scope", "measure", "level", "model", "error"]);
    let mut coef_t = Table::new(["scope", "measure", "level", "model", "term", "estimate", "std_error"]);
    for (c, p) in prepared.iter().enumerate() {
        let cell = &p.cell;
        let lead = || vec![cell.scope.clone(), cell.measure.as_str().to_string(), cell.level.as_str().to_string()];
        let kind = match model_kind(cfg, cell) {
            ModelKind::Ols => "ols",
            ModelKind::Mixed => "mixed",
        };
        if let Some(e) = &p.error {
            let mut row = lead();
            row.extend([kind.into(), p.rows.len().to_string(), "skipped".into()]);
            cells_t.push(row);
            let mut row = lead();
            row.extend(["*".into(), e.clone()]);
            errors_t.push(row);
            continue;
        }
        let mut llh = Table::new(
            ["obs_id", "fold", "language_pair"]
                .into_iter()
                .map(String::from)
                .chain(p.defs.iter().map(|d| d.name.clone())),
        );
        let mut cols: Vec<Option<Vec<f64>>> = vec![None; p.defs.len()];
        let mut fits: BTreeMap<String, ModelFits> = BTreeMap::new();
        for (m, r) in by_cell.remove(&c).unwrap_or_default() {
            let def = &p.defs[m];
            match r {
                Ok((cv, full)) => {
                    for w in &full.diagnostics.warnings {
                        log::warn!("{} {}: {w}", cell.key(), def.name);
                    }
                    for coef in &full.coefficients {
                        let mut row = lead();
                        row.extend([
                            def.name.clone(),
                            coef.name.clone(),
                            tsv::fixed(coef.estimate, DIGITS),
                            tsv::fixed(coef.std_error, DIGITS),
                        ]);
                        coef_t.push(row);
                    }
                    for re in &full.random_effects {
                        let mut row = lead();
                        row.extend([def.name.clone(), format!("var({})", re.factor), tsv::fixed(re.variance, DIGITS), tsv::NA.into()]);
                        coef_t.push(row);
                    }
                    let mut row = lead();
                    row.extend([def.name.clone(), "var(residual)".into(), tsv::fixed(full.sigma2, DIGITS), tsv::NA.into()]);
                    coef_t.push(row);
                    cols[m] = Some(cv.llh.clone());
                    fits.insert(
                        def.name.clone(),
                        ModelFits {
                            columns: def.columns.clone(),
                            folds: cv.fits,
                            full,
                        },
                    );
                }
                Err(e) => {
                    let mut row = lead();
                    row.extend([def.name.clone(), e]);
                    errors_t.push(row);
                }
            }
        }
        for (i, r) in p.rows.iter().enumerate() {
            let mut row = vec![r.obs_id.clone(), r.fold.to_string(), r.language_pair.clone()];
            row.extend(cols.iter().map(|c| c.as_ref().map_or_else(|| tsv::NA.to_string(), |v| tsv::num(v[i]))));
            llh.push(row);
        }
        llh.write(&out.join("llh").join(format!("{}.tsv", cell.key())))?;
        tsv::write_json(&out.join("fits").join(format!("{}.json", cell.key())), &fits)?;
        let status = if fits.len() == p.defs.len() { "ok" } else { "partial" };
        let mut row = lead();
        row.extend([kind.into(), p.rows.len().to_string(), status.into()]);
        cells_t.push(row);
    }
    cells_t.write(&out.join("cells.tsv"))?;
    errors_t.write(&out.join("cell_errors.tsv"))?;
    coef_t.write(&out.join("coefficients.tsv"))?;
    Ok(())
}
