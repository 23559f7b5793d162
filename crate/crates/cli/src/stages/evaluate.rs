//! Held-out likelihood differences with significance tests, collinearity,
//! feature correlations and the part-of-speech summary.

use statrs::distribution::{ContinuousCDF, StudentsT};
use tdiff_core::ingest::UnitLevel;
use tdiff_stats::evaluation::{
    correlation, delta_llh, derive_seed, pos_group_summary, stars, vif, CorrelationMethod, TaggedRow,
};

use crate::error::{CliError, Result};
use crate::features_table::FeatureTable;
use crate::run::{Stage, StageContext};
use crate::stages::fit::{cell_design, cell_rows, cells, comparisons, model_defs, Cell};
use crate::stages::{scopes, POOLED};
use crate::tsv::{self, Table};

/// Digits of the displayed statistics.
const DIGITS: usize = 6;

/// Two-sided 95% t interval over fold means.
pub fn fold_interval(fold_means: &[f64]) -> Option<(f64, f64)> {
    let v: Vec<f64> = fold_means.iter().copied().filter(|m| m.is_finite()).collect();
    let k = v.len();
    if k < 2 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / k as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64).ok()?.inverse_cdf(0.975);
    let half = t * (var / k as f64).sqrt();
    Some((mean - half, mean + half))
}

fn llh_columns(table: &Table, path: &std::path::Path) -> Result<(Vec<usize>, Vec<(String, Vec<Option<f64>>)>)> {
    let fold_i = table.require("fold", path)?;
    let folds = table
        .rows
        .iter()
        .map(|r| {
            r[fold_i].parse().map_err(|_| CliError::Stage {
                stage: Stage::Evaluate.name().into(),
                detail: format!("{}: bad fold {:?}", path.display(), r[fold_i]),
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    let models = table.header[3..]
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), table.rows.iter().map(|r| tsv::parse_opt(&r[3 + j])).collect()))
        .collect();
    Ok((folds, models))
}

fn delta_table(ctx: &StageContext, cells: &[Cell]) -> Result<Table> {
    let cfg = &ctx.cfg.config;
    let mut t = Table::new([
        "scope", "measure", "level", "model", "comparison", "n", "mean", "ci_lo", "ci_hi", "p_value", "stars",
    ]);
    let llh_dir = ctx.dir(Stage::Fit).join("llh");
    for cell in cells {
        let path = llh_dir.join(format!("{}.tsv", cell.key()));
        if !path.exists() {
            continue;
        }
        let table = Table::read(&path)?;
        let (folds, models) = llh_columns(&table, &path)?;
        let column = |name: &str| -> Option<Vec<f64>> {
            let (_, v) = models.iter().find(|(n, _)| n == name)?;
            v.iter().copied().collect()
        };
        for (model, _) in &models {
            let Some(ext) = column(model) else { continue };
            for cmp in comparisons(model) {
                let Some(base) = column(&cmp) else { continue };
                let seed = derive_seed(ctx.seeds.permutation, &format!("{}/{model}/{cmp}", cell.key()));
                let d = delta_llh(&ext, &base, &folds)?.with_test(cfg.test.n_perm, seed, cfg.test.sidedness, cfg.test.unit);
                let p = d.p_value.expect("test was run");
                let (lo, hi) = fold_interval(&d.fold_means).map_or((tsv::NA.into(), tsv::NA.into()), |(lo, hi)| {
                    (tsv::fixed(lo, DIGITS), tsv::fixed(hi, DIGITS))
                });
                t.push(vec![
                    cell.scope.clone(),
                    cell.measure.as_str().into(),
                    cell.level.as_str().into(),
                    model.clone(),
                    cmp,
                    d.deltas.len().to_string(),
                    tsv::fixed(d.mean, DIGITS),
                    lo,
                    hi,
                    tsv::fixed(p, DIGITS),
                    stars(p).into(),
                ]);
            }
        }
    }
    Ok(t)
}

fn vif_table(ctx: &StageContext, features: &FeatureTable, cells: &[Cell]) -> Result<Table> {
    let mut t = Table::new(["scope", "measure", "level", "n", "column", "vif", "flagged"]);
    for cell in cells {
        // controls plus every single-feature model's column
        let mut columns: Vec<String> = Vec::new();
        for d in model_defs(&ctx.cfg.config, cell.measure) {
            if d.name.contains('+') {
                continue;
            }
            for c in d.columns {
                if !columns.contains(&c) {
                    columns.push(c);
                }
            }
        }
        let rows = cell_rows(features, cell, &columns)?;
        if rows.len() <= columns.len() + 1 {
            continue;
        }
        let design = cell_design(features, &rows, &columns, cell.measure)?;
        match vif(&design) {
            Ok(values) => {
                for v in values {
                    t.push(vec![
                        cell.scope.clone(),
                        cell.measure.as_str().into(),
                        cell.level.as_str().into(),
                        rows.len().to_string(),
                        v.column,
                        tsv::fixed(v.value, 4),
                        v.flagged.to_string(),
                    ]);
                }
            }
            Err(e) => log::warn!("VIF for {}: {e}", cell.key()),
        }
    }
    Ok(t)
}

fn correlation_table(ctx: &StageContext, features: &FeatureTable) -> Result<Table> {
    let cfg = &ctx.cfg.config;
    let mut t = Table::new(["scope", "level", "x", "y", "method", "n", "r", "p_value"]);
    for scope in scopes(cfg) {
        for &level in &cfg.levels {
            for [a, b] in &cfg.analysis.correlations {
                let (ia, ib) = match (features.index(a), features.index(b)) {
                    (Some(ia), Some(ib)) => (ia, ib),
                    _ => continue,
                };
                let (x, y): (Vec<f64>, Vec<f64>) = features
                    .rows
                    .iter()
                    .filter(|r| r.level == level && (scope == POOLED || r.language_pair == scope))
                    .filter_map(|r| Some((r.values[ia]?, r.values[ib]?)))
                    .unzip();
                for method in [CorrelationMethod::Pearson, CorrelationMethod::Spearman] {
                    let Ok(c) = correlation(&x, &y, method) else { continue };
                    t.push(vec![
                        scope.clone(),
                        level.as_str().into(),
                        a.clone(),
                        b.clone(),
                        match method {
                            CorrelationMethod::Pearson => "pearson".into(),
                            CorrelationMethod::Spearman => "spearman".into(),
                        },
                        c.n.to_string(),
                        tsv::fixed(c.coefficient, DIGITS),
                        tsv::fixed(c.p_value, DIGITS),
                    ]);
                }
            }
        }
    }
    Ok(t)
}

fn pos_table(ctx: &StageContext, features: &FeatureTable) -> Result<Table> {
    let names = &ctx.cfg.config.analysis.pos_predictors;
    let mut t = Table::new(["tag", "n", "variable", "mean", "lo", "hi", "degenerate"]);
    let difficulty = features.index("avg_dur").expect("avg_dur is a feature column");
    let idx: Vec<usize> = names.iter().filter_map(|n| features.index(n)).collect();
    let rows: Vec<TaggedRow> = features
        .rows
        .iter()
        .filter(|r| r.level == UnitLevel::Word)
        .filter_map(|r| {
            Some(TaggedRow {
                tag: r.pos_tag.clone()?,
                difficulty: r.values[difficulty]?,
                predictors: idx.iter().map(|&i| r.values[i]).collect::<Option<Vec<f64>>>()?,
            })
        })
        .collect();
    if rows.is_empty() {
        log::warn!("no tagged word-level rows; part-of-speech summary is empty");
        return Ok(t);
    }
    for g in pos_group_summary(&rows, names, ctx.seeds.bootstrap)? {
        let iv = std::iter::once(("avg_dur".to_string(), g.difficulty)).chain(g.predictors.iter().cloned());
        for (name, i) in iv {
            t.push(vec![
                g.tag.clone(),
                g.n.to_string(),
                name,
                tsv::fixed(i.mean, DIGITS),
                tsv::fixed(i.lo, DIGITS),
                tsv::fixed(i.hi, DIGITS),
                g.degenerate.to_string(),
            ]);
        }
    }
    Ok(t)
}

pub fn run(ctx: &StageContext) -> Result<()> {
    let out = ctx.dir(Stage::Evaluate);
    let cells = cells(&ctx.cfg.config);
    let features = FeatureTable::read(&ctx.dir(Stage::Extract).join("features.tsv"))?;
    delta_table(ctx, &cells)?.write(&out.join("delta_llh.tsv"))?;
    vif_table(ctx, &features, &cells)?.write(&out.join("vif.tsv"))?;
    correlation_table(ctx, &features)?.write(&out.join("correlations.tsv"))?;
    pos_table(ctx, &features)?.write(&out.join("pos_summary.tsv"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_interval_matches_hand_computation() {
        // mean 2, sd 1, k = 3, t(0.975, 2) = 4.302652729911275
        let (lo, hi) = fold_interval(&[1.0, 2.0, 3.0]).unwrap();
        let half = 4.302652729911275 / 3f64.sqrt();
        assert!((lo - (2.0 - half)).abs() < 1e-9);
        assert!((hi - (2.0 + half)).abs() < 1e-9);
        assert!(fold_interval(&[1.0]).is_none());
        assert!(fold_interval(&[1.0, f64::NAN]).is_none());
    }
}
