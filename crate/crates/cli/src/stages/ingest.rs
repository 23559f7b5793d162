//! Parses the study tables, filters observations and assigns folds.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use tdiff_core::ingest::{
    assign_folds, assign_folds_stratified, drop_cross_sentence_alignments, filter_and_scale, parse_tables,
    sample_counts, write_observations, write_sentences, FilterReport,
};

use crate::error::{CliError, Result};
use crate::run::{Stage, StageContext};
use crate::tsv::{self, Table};

#[derive(Debug, Serialize)]
struct Summary {
    sentences: usize,
    rows_parsed: usize,
    rows_rejected: usize,
    cross_sentence_dropped: usize,
    filter: FilterReport,
    level_dropped: usize,
    observations: usize,
    source_sentences: usize,
    fold_sizes: Vec<usize>,
}

pub fn run(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.cfg.config;
    let out = ctx.dir(Stage::Ingest);
    let parsed = parse_tables(&ctx.cfg.tables_dir(), &cfg.schema)?;
    let rows_parsed = parsed.observations.len();

    let mut rejects = Table::new(["file", "row", "reason"]);
    for r in &parsed.rejects {
        rejects.push(vec![r.file.clone(), r.row.to_string(), r.reason.clone()]);
    }
    rejects.write(&out.join("rejects.tsv"))?;
    if !parsed.rejects.is_empty() {
        log::warn!("{} table rows rejected; see rejects.tsv", parsed.rejects.len());
    }

    let (obs, cross) = drop_cross_sentence_alignments(parsed.observations);
    let (obs, filter) = filter_and_scale(obs);
    let before = obs.len();
    let obs: Vec<_> = obs.into_iter().filter(|o| cfg.levels.contains(&o.level)).collect();
    let level_dropped = before - obs.len();
    if obs.is_empty() {
        return Err(CliError::Stage {
            stage: Stage::Ingest.name().into(),
            detail: "no observations left after filtering".into(),
        });
    }

    let folds = if cfg.folds.stratify_by_language {
        // a text read in several language pairs goes to the stratum of the
        // alphabetically first one
        let mut strata: BTreeMap<String, String> = BTreeMap::new();
        for o in &obs {
            strata
                .entry(o.source_sentence_id.clone())
                .and_modify(|s| {
                    if o.language_pair < *s {
                        *s = o.language_pair.clone();
                    }
                })
                .or_insert_with(|| o.language_pair.clone());
        }
        assign_folds_stratified(&strata, cfg.folds.k, ctx.seeds.folds)?
    } else {
        let ids: BTreeSet<String> = obs.iter().map(|o| o.source_sentence_id.clone()).collect();
        assign_folds(&ids, cfg.folds.k, ctx.seeds.folds)?
    };

    write_observations(&out.join("observations.jsonl"), &obs)?;
    let used: BTreeSet<&str> = obs.iter().map(|o| o.pair_id.as_str()).collect();
    let sentences = parsed
        .sentences
        .iter()
        .filter(|(id, _)| used.contains(id.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    write_sentences(&out.join("sentences.jsonl"), &sentences)?;
    tsv::write_json(&out.join("folds.json"), &folds)?;

    let mut counts = Table::new(["language_pair", "level", "measure", "n"]);
    for ((lp, level, m), n) in sample_counts(&obs) {
        counts.push(vec![lp, level.as_str().into(), m.as_str().into(), n.to_string()]);
    }
    counts.write(&out.join("counts.tsv"))?;

    let summary = Summary {
        sentences: sentences.len(),
        rows_parsed,
        rows_rejected: parsed.rejects.len(),
        cross_sentence_dropped: cross.count(),
        filter,
        level_dropped,
        observations: obs.len(),
        source_sentences: folds.folds.len(),
        fold_sizes: folds.fold_sizes(),
    };
    tsv::write_json(&out.join("summary.json"), &summary)?;
    Ok(())
}
