use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};

use super::seeds::derive_seed;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedRow {
    pub tag: String,
    pub difficulty: f64,
    pub predictors: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosGroup {
    pub tag: String,
    pub n: usize,
    pub difficulty: Interval,
    pub predictors: Vec<(String, Interval)>,
    /// A single-row group: its interval collapses onto the mean.
    pub degenerate: bool,
}

/// Linear interpolation between order statistics of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-tag means of difficulty and each predictor with 95% percentile
/// bootstrap intervals, ordered from most to least difficult.
pub fn pos_group_summary(rows: &[TaggedRow], predictor_names: &[String], seed: u64) -> Result<Vec<PosGroup>> {
    if rows.is_empty() {
        return Err(StatsError::Empty("no tagged observations".into()));
    }
    let width = predictor_names.len();
    if let Some(r) = rows.iter().find(|r| r.predictors.len() != width) {
        return Err(StatsError::Contract(format!(
            "row tagged {} has {} predictors, expected {width}",
            r.tag,
            r.predictors.len()
        )));
    }
    let mut by_tag: BTreeMap<&str, Vec<&TaggedRow>> = BTreeMap::new();
    for r in rows {
        by_tag.entry(r.tag.as_str()).or_default().push(r);
    }

    let mut out = Vec::with_capacity(by_tag.len());
    for (tag, members) in by_tag {
        let n = members.len();
        // column 0 is difficulty, then the predictors
        let value = |r: &TaggedRow, c: usize| if c == 0 { r.difficulty } else { r.predictors[c - 1] };
        let means: Vec<f64> = (0..=width)
            .map(|c| members.iter().map(|r| value(r, c)).sum::<f64>() / n as f64)
            .collect();
        let mut boot: Vec<Vec<f64>> = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES); width + 1];
        if n > 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("pos/{tag}")));
            let mut sums = vec![0.0; width + 1];
            for _ in 0..BOOTSTRAP_RESAMPLES {
                sums.fill(0.0);
                for _ in 0..n {
                    let r = members[rng.random_range(0..n)];
                    for (c, s) in sums.iter_mut().enumerate() {
                        *s += value(r, c);
                    }
                }
                for (c, s) in sums.iter().enumerate() {
                    boot[c].push(s / n as f64);
                }
            }
        }
        let intervals: Vec<Interval> = (0..=width)
            .map(|c| {
                if n == 1 {
                    return Interval {
                        mean: means[c],
                        lo: means[c],
                        hi: means[c],
                    };
                }
                let b = &mut boot[c];
                b.sort_by(f64::total_cmp);
                Interval {
                    mean: means[c],
                    lo: quantile(b, 0.025),
                    hi: quantile(b, 0.975),
                }
            })
            .collect();
        out.push(PosGroup {
            tag: tag.to_string(),
            n,
            difficulty: intervals[0],
            predictors: predictor_names.iter().cloned().zip(intervals[1..].iter().copied()).collect(),
            degenerate: n == 1,
        });
    }
    out.sort_by(|a, b| b.difficulty.mean.total_cmp(&a.difficulty.mean).then_with(|| a.tag.cmp(&b.tag)));
    Ok(out)
}
