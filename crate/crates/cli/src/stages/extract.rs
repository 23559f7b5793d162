//! Joins observations with model dumps and computes the feature table.

use std::collections::BTreeMap;

use rayon::prelude::*;
use tdiff_core::features::{avg_translation_duration, AlignedPair, Controls, FrequencyTable};
use tdiff_core::ingest::{read_observations, read_sentences, BehavioralObservation, DurationMeasure, FoldAssignment};
use tdiff_core::model_io::{read_dump_checked, DumpManifest};
use tdiff_core::{SegmentRef, Side};

use crate::error::{CliError, Result};
use crate::features_table::{feature_columns, FeatureRow, FeatureTable};
use crate::run::{Stage, StageContext};
use crate::stages::participant_label;
use crate::tsv::{self, Table};

struct Diagnostic {
    pair_id: String,
    obs_id: String,
    kind: &'static str,
    detail: String,
}

struct RowBuilder<'a> {
    columns: &'a [String],
    values: Vec<Option<f64>>,
}

impl RowBuilder<'_> {
    fn set(&mut self, column: &str, v: f64) {
        let i = self
            .columns
            .iter()
            .position(|c| c == column)
            .unwrap_or_else(|| panic!("no feature column {column}"));
        self.values[i] = Some(v);
    }

    fn controls(&mut self, prefix: &str, c: &Controls) {
        self.set(&format!("{prefix}.length"), c.length_tokens);
        self.set(&format!("{prefix}.mean_log_freq"), c.mean_log_freq);
        self.set(&format!("{prefix}.mean_pos_quantile"), c.mean_pos_quantile);
    }
}

fn side_values(
    aligned: &AlignedPair,
    seg: &SegmentRef,
    freq: &FrequencyTable,
    row: &mut RowBuilder,
) -> std::result::Result<(), String> {
    let err = |e: tdiff_core::CoreError| e.to_string();
    match seg.side {
        Side::Source => {
            row.controls("src", &aligned.controls(seg, freq).map_err(err)?);
            row.set("src.s_lm", aligned.lm_surprisal(seg).map_err(err)?);
            for (name, v) in aligned.source_features(seg).map_err(err)?.named() {
                row.set(&format!("src.{name}"), v);
            }
        }
        Side::Target => {
            row.controls("tgt", &aligned.controls(seg, freq).map_err(err)?);
            row.set("tgt.s_lm", aligned.lm_surprisal(seg).map_err(err)?);
            row.set("tgt.s_mt", aligned.mt_surprisal(seg).map_err(err)?);
            for (name, v) in aligned.target_features(seg).map_err(err)?.named() {
                row.set(&format!("tgt.{name}"), v);
            }
        }
    }
    Ok(())
}

fn observation_row(
    o: &BehavioralObservation,
    aligned: &AlignedPair,
    freq: &FrequencyTable,
    fold: usize,
    columns: &[String],
    diags: &mut Vec<Diagnostic>,
) -> FeatureRow {
    let mut row = RowBuilder {
        columns,
        values: vec![None; columns.len()],
    };
    for m in DurationMeasure::ALL {
        if let Some(d) = o.duration(m) {
            row.set(m.as_str(), d);
        }
    }
    for side in [Side::Source, Side::Target] {
        if let Some(seg) = o.segment_on(side) {
            let mut scratch = RowBuilder {
                columns,
                values: vec![None; columns.len()],
            };
            // a side is either complete or entirely missing
            match side_values(aligned, seg, freq, &mut scratch) {
                Ok(()) => {
                    for (dst, src) in row.values.iter_mut().zip(scratch.values) {
                        if src.is_some() {
                            *dst = src;
                        }
                    }
                }
                Err(detail) => diags.push(Diagnostic {
                    pair_id: o.pair_id.clone(),
                    obs_id: o.obs_id.clone(),
                    kind: if side == Side::Source { "source_features" } else { "target_features" },
                    detail,
                }),
            }
        }
    }
    if let (Some(d), Some(src)) = (o.dur, o.segment_on(Side::Source)) {
        let ms = if o.log_scaled { d.exp() } else { d };
        if let Ok(v) = avg_translation_duration(ms, src.indices.len()) {
            row.set("avg_dur", v);
        }
    }
    FeatureRow {
        obs_id: o.obs_id.clone(),
        participant: participant_label(&o.study_id, &o.participant_id),
        language_pair: o.language_pair.clone(),
        level: o.level,
        pair_id: o.pair_id.clone(),
        source_sentence_id: o.source_sentence_id.clone(),
        fold,
        pos_tag: o.pos_tag.clone(),
        values: row.values,
    }
}

pub fn run(ctx: &StageContext) -> Result<()> {
    let ingest = ctx.dir(Stage::Ingest);
    let out = ctx.dir(Stage::Extract);
    let obs = read_observations(&ingest.join("observations.jsonl"))?;
    let sentences = read_sentences(&ingest.join("sentences.jsonl"))?;
    let folds: FoldAssignment = tsv::read_json(&ingest.join("folds.json"))?;

    let dumps_dir = ctx.cfg.dumps_dir();
    let manifest = DumpManifest::load(&dumps_dir)?;
    let files = manifest.files_by_pair(&dumps_dir);
    let mut freq = FrequencyTable::load(&ctx.cfg.frequency_file())?;
    if let Some(floor) = ctx.cfg.config.analysis.frequency_floor {
        freq = freq.with_floor(floor)?;
    }

    let mut by_pair: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        by_pair.entry(o.pair_id.as_str()).or_default().push(i);
    }
    let columns = feature_columns();
    let groups: Vec<(&str, Vec<usize>)> = by_pair.into_iter().collect();

    let results: Vec<Result<(Vec<(usize, FeatureRow)>, Vec<Diagnostic>)>> = groups
        .par_iter()
        .map(|(pair_id, idx)| {
            let mut diags = Vec::new();
            let whole_pair = |kind: &'static str, detail: String| Diagnostic {
                pair_id: pair_id.to_string(),
                obs_id: tsv::NA.into(),
                kind,
                detail,
            };
            let Some(path) = files.get(*pair_id) else {
                diags.push(whole_pair("missing_dump", format!("{} observations skipped", idx.len())));
                return Ok((Vec::new(), diags));
            };
            let Some(pair) = sentences.get(*pair_id) else {
                return Err(CliError::Stage {
                    stage: Stage::Extract.name().into(),
                    detail: format!("observation refers to unknown pair {pair_id}"),
                });
            };
            let (dump, warnings) = match read_dump_checked(path) {
                Ok(x) => x,
                Err(e) => {
                    diags.push(whole_pair("unreadable_dump", e.to_string()));
                    return Ok((Vec::new(), diags));
                }
            };
            for w in warnings {
                diags.push(whole_pair("dump_warning", format!("{w:?}")));
            }
            let aligned = match AlignedPair::new(&dump, pair) {
                Ok(a) => a,
                Err(e) => {
                    diags.push(whole_pair("alignment", e.to_string()));
                    return Ok((Vec::new(), diags));
                }
            };
            for side in [Side::Source, Side::Target] {
                let orphans = aligned.map(side, tdiff_core::features::Tokenization::Nmt).orphans();
                if !orphans.is_empty() {
                    diags.push(whole_pair("orphan_subwords", format!("{}: {orphans:?}", side.as_str())));
                }
            }
            let mut rows = Vec::with_capacity(idx.len());
            for &i in idx {
                let o = &obs[i];
                let fold = folds.fold_of(&o.source_sentence_id).ok_or_else(|| CliError::Stage {
                    stage: Stage::Extract.name().into(),
                    detail: format!("sentence {} has no fold", o.source_sentence_id),
                })?;
                rows.push((i, observation_row(o, &aligned, &freq, fold, &columns, &mut diags)));
            }
            Ok((rows, diags))
        })
        .collect();

    let mut rows = Vec::with_capacity(obs.len());
    let mut diag_table = Table::new(["pair_id", "obs_id", "kind", "detail"]);
    for r in results {
        let (r, d) = r?;
        rows.extend(r);
        for d in d {
            diag_table.push(vec![d.pair_id, d.obs_id, d.kind.into(), d.detail]);
        }
    }
    rows.sort_by_key(|(i, _)| *i);
    if rows.is_empty() {
        diag_table.write(&out.join("diagnostics.tsv"))?;
        return Err(CliError::Stage {
            stage: Stage::Extract.name().into(),
            detail: "no observation could be matched with a model dump".into(),
        });
    }
    FeatureTable::new(rows.into_iter().map(|(_, r)| r).collect()).write(&out.join("features.tsv"))?;
    diag_table.write(&out.join("diagnostics.tsv"))?;
    Ok(())
}
