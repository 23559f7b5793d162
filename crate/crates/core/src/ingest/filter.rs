use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BehavioralObservation, DurationMeasure};

/// Durations below this are treated as measurement noise.
pub const MIN_DURATION_MS: f64 = 20.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Fields removed per measure.
    pub removed_fields: BTreeMap<String, usize>,
    /// Observations left without any duration, removed entirely.
    pub dropped: Vec<String>,
}

/// Field-wise: removes each duration below 20 ms and log-scales (natural
/// log of ms) the survivors. Observations left with no duration are dropped.
pub fn filter_and_scale(obs: Vec<BehavioralObservation>) -> (Vec<BehavioralObservation>, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::with_capacity(obs.len());
    for mut o in obs {
        if o.log_scaled {
            kept.push(o);
            continue;
        }
        for m in DurationMeasure::ALL {
            let slot = o.duration_mut(m);
            if let Some(ms) = *slot {
                if ms < MIN_DURATION_MS {
                    *slot = None;
                    *report.removed_fields.entry(m.as_str().to_string()).or_insert(0) += 1;
                } else {
                    *slot = Some(ms.ln());
                }
            }
        }
        o.log_scaled = true;
        if o.has_duration() {
            kept.push(o);
        } else {
            report.dropped.push(o.obs_id);
        }
    }
    (kept, report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossSentenceReport {
    pub dropped: Vec<String>,
}

impl CrossSentenceReport {
    pub fn count(&self) -> usize {
        self.dropped.len()
    }
}

fn crosses(o: &BehavioralObservation) -> bool {
    o.source_sentence_ids.len() > 1
        || o.target_sentence_ids.len() > 1
        || matches!(
            (o.source_sentence_ids.first(), o.target_sentence_ids.first()),
            (Some(s), Some(t)) if s != t
        )
}

/// Removes observations whose unit or alignment touches more than one
/// sentence on either side, or links a source sentence to a different
/// target sentence.
pub fn drop_cross_sentence_alignments(
    obs: Vec<BehavioralObservation>,
) -> (Vec<BehavioralObservation>, CrossSentenceReport) {
    let mut report = CrossSentenceReport::default();
    let kept = obs
        .into_iter()
        .filter(|o| {
            let c = crosses(o);
            if c {
                report.dropped.push(o.obs_id.clone());
            }
            !c
        })
        .collect();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{IndexSet, SegmentRef, Side};
    use crate::ingest::UnitLevel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn obs(id: &str, s: Option<f64>, t: Option<f64>, d: Option<f64>) -> BehavioralObservation {
        BehavioralObservation {
            obs_id: id.into(),
            study_id: "S".into(),
            participant_id: "P1".into(),
            language_pair: "en-da".into(),
            level: UnitLevel::Word,
            pair_id: "S/P1/1".into(),
            source_sentence_id: "S/1".into(),
            unit: SegmentRef {
                side: Side::Source,
                indices: IndexSet::from([1]),
            },
            aligned_counterpart: None,
            source_sentence_ids: vec!["1".into()],
            target_sentence_ids: vec!["1".into()],
            trt_s: s,
            trt_t: t,
            dur: d,
            log_scaled: false,
            pos_tag: None,
        }
    }

    #[test]
    fn below_floor_removed() {
        let (kept, report) = filter_and_scale(vec![obs("a", None, Some(50.0), Some(19.0))]);
        assert_eq!(kept[0].dur, None);
        assert_eq!(report.removed_fields["Dur"], 1);
    }

    #[test]
    fn boundary_is_kept() {
        let (kept, _) = filter_and_scale(vec![obs("a", None, None, Some(20.0))]);
        assert_abs_diff_eq!(kept[0].dur.unwrap(), 2.9957, epsilon = 1e-4);
        assert_eq!(kept[0].dur.unwrap(), 20f64.ln());
    }

    #[test]
    fn field_wise_filtering() {
        let (kept, report) = filter_and_scale(vec![obs("a", Some(15.0), None, Some(100.0))]);
        assert_eq!(kept[0].trt_s, None);
        assert_eq!(kept[0].dur, Some(100f64.ln()));
        assert!(report.dropped.is_empty());
    }

    #[test]
    fn empty_rows_dropped_and_reported() {
        let (kept, report) = filter_and_scale(vec![obs("a", Some(5.0), None, Some(10.0))]);
        assert!(kept.is_empty());
        assert_eq!(report.dropped, vec!["a".to_string()]);
    }

    #[test]
    fn scaling_is_applied_once() {
        let (kept, _) = filter_and_scale(vec![obs("a", None, None, Some(400.0))]);
        let (again, _) = filter_and_scale(kept.clone());
        assert_eq!(kept, again);
    }

    #[test]
    fn cross_sentence_rules() {
        let mut two_src = obs("two", None, None, Some(100.0));
        two_src.source_sentence_ids = vec!["1".into(), "2".into()];
        let mut shifted = obs("shift", None, None, Some(100.0));
        shifted.target_sentence_ids = vec!["2".into()];
        let mut unaligned = obs("none", None, None, Some(100.0));
        unaligned.target_sentence_ids.clear();
        let (kept, report) =
            drop_cross_sentence_alignments(vec![obs("ok", None, None, Some(100.0)), two_src, shifted, unaligned]);
        let ids: Vec<_> = kept.iter().map(|o| o.obs_id.as_str()).collect();
        assert_eq!(ids, ["ok", "none"]);
        assert_eq!(report.dropped, vec!["two".to_string(), "shift".to_string()]);
    }

    #[test]
    fn ten_rows_two_crossing() {
        let rows: Vec<_> = (0..10)
            .map(|i| {
                let mut o = obs(&format!("r{i}"), None, None, Some(100.0));
                if i == 3 || i == 7 {
                    o.target_sentence_ids = vec!["1".into(), "2".into()];
                }
                o
            })
            .collect();
        let (kept, report) = drop_cross_sentence_alignments(rows);
        assert_eq!(kept.len(), 8);
        assert_eq!(report.count(), 2);
    }

    proptest! {
        #[test]
        fn survivors_are_at_least_log_floor(vals in proptest::collection::vec(proptest::option::of(0.5f64..5000.0), 3..30)) {
            let rows: Vec<_> = vals
                .chunks(3)
                .enumerate()
                .map(|(i, c)| obs(&i.to_string(), c[0], c.get(1).copied().flatten(), c.get(2).copied().flatten()))
                .collect();
            let (kept, _) = filter_and_scale(rows);
            for o in &kept {
                prop_assert!(o.has_duration());
                for m in DurationMeasure::ALL {
                    if let Some(v) = o.duration(m) {
                        prop_assert!(v >= MIN_DURATION_MS.ln());
                    }
                }
            }
        }
    }
}
