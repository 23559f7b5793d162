use crate::error::{CoreError, Result};
use crate::index::IndexSet;
use crate::model_io::{LogProbStream, TokenLogProbs};

/// Sum of negative log-probabilities (nats) over 0-based subword positions.
pub fn segment_surprisal_sum(logprobs: &TokenLogProbs, subwords: &IndexSet) -> Result<f64> {
    if subwords.is_empty() {
        return Err(CoreError::Domain("surprisal of an empty segment".into()));
    }
    subwords.iter().try_fold(0.0, |acc, pos| {
        let lp = logprobs.at_position(pos).ok_or_else(|| {
            CoreError::Domain(format!(
                "{} has no log-probability for position {pos} ({} values)",
                logprobs.stream.name(),
                logprobs.values.len()
            ))
        })?;
        Ok(acc - lp)
    })
}

fn per_token(logprobs: &TokenLogProbs, subwords: &IndexSet) -> Result<f64> {
    Ok(segment_surprisal_sum(logprobs, subwords)? / subwords.len() as f64)
}

/// Monolingual surprisal per subword token.
pub fn lm_surprisal(logprobs: &TokenLogProbs, subwords: &IndexSet) -> Result<f64> {
    match logprobs.stream {
        LogProbStream::LmSource | LogProbStream::LmTarget => per_token(logprobs, subwords),
        LogProbStream::MtTarget => Err(CoreError::Unsupported(
            "monolingual surprisal requested from translation-model log-probabilities".into(),
        )),
    }
}

/// Translation surprisal per subword token. Only target segments have one:
/// the model reads the whole source before scoring anything.
pub fn mt_surprisal(logprobs: &TokenLogProbs, subwords: &IndexSet) -> Result<f64> {
    match logprobs.stream {
        LogProbStream::MtTarget => per_token(logprobs, subwords),
        LogProbStream::LmSource => Err(CoreError::Unsupported(
            "translation surprisal is undefined for source segments".into(),
        )),
        LogProbStream::LmTarget => Err(CoreError::Unsupported(
            "translation surprisal requested from language-model log-probabilities".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lp(stream: LogProbStream, probs: &[f64]) -> TokenLogProbs {
        TokenLogProbs {
            stream,
            values: probs.iter().map(|p| p.ln() as f32).collect(),
        }
    }

    #[test]
    fn certain_token_has_zero_surprisal() {
        let l = lp(LogProbStream::LmSource, &[1.0, 0.5]);
        let s = lm_surprisal(&l, &IndexSet::from([1])).unwrap();
        assert_eq!(s, 0.0);
        assert!(s.is_sign_positive());
        let m = lp(LogProbStream::MtTarget, &[1.0]);
        assert_eq!(mt_surprisal(&m, &IndexSet::from([1])).unwrap(), 0.0);
    }

    #[test]
    fn mean_over_subwords() {
        // positions 1 and 2 score p = 0.5 and 0.25
        let l = lp(LogProbStream::LmTarget, &[0.5, 0.25]);
        let s = lm_surprisal(&l, &IndexSet::from([1, 2])).unwrap();
        assert_abs_diff_eq!(s, (0.5f64.ln() + 0.25f64.ln()) / -2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s, 1.0397, epsilon = 1e-4);
    }

    #[test]
    fn whole_sentence_is_sentence_mean() {
        let probs = [0.9, 0.1, 0.3, 0.6];
        let l = lp(LogProbStream::LmSource, &probs);
        let all = IndexSet::range(1, 4);
        let expected = probs.iter().map(|p| -(*p as f32).ln() as f64).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(lm_surprisal(&l, &all).unwrap(), expected, epsilon = 1e-6);
    }

    #[test]
    fn stream_checks() {
        let src = lp(LogProbStream::LmSource, &[0.5]);
        assert!(matches!(
            mt_surprisal(&src, &IndexSet::from([1])),
            Err(CoreError::Unsupported(_))
        ));
        let mt = lp(LogProbStream::MtTarget, &[0.5]);
        assert!(lm_surprisal(&mt, &IndexSet::from([1])).is_err());
    }

    #[test]
    fn position_zero_and_empty_are_errors() {
        let l = lp(LogProbStream::LmSource, &[0.5]);
        assert!(matches!(
            lm_surprisal(&l, &IndexSet::from([0])),
            Err(CoreError::Domain(_))
        ));
        assert!(lm_surprisal(&l, &IndexSet::new()).is_err());
        assert!(lm_surprisal(&l, &IndexSet::from([2])).is_err());
    }
}
