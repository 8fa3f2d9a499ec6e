//! Word-level precision, recall and F1 computed on LCS alignments, and the
//! exact-match / fuzzy-F metrics used for multiword-token transduction.

use thiserror::Error;

use crate::conllu::Document;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("system has {system} sentences but gold has {gold}")]
    SentenceCountMismatch { system: usize, gold: usize },
    #[error("candidate has {candidate} instances but reference has {reference}")]
    InstanceCountMismatch { candidate: usize, reference: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub matched: usize,
    pub candidate_len: usize,
    pub reference_len: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalResult {
    /// Scores from integer counts. Both sides empty counts as a perfect match.
    pub fn from_counts(matched: usize, candidate_len: usize, reference_len: usize) -> Self {
        assert!(matched <= candidate_len.min(reference_len));
        let (precision, recall, f1) = if candidate_len == 0 && reference_len == 0 {
            (1.0, 1.0, 1.0)
        } else {
            let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
            // 2RP / (R + P) reduces to 2m / (|c| + |r|), which keeps exact
            // results for exact inputs
            (
                ratio(matched, candidate_len),
                ratio(matched, reference_len),
                ratio(2 * matched, candidate_len + reference_len),
            )
        };
        EvalResult {
            matched,
            candidate_len,
            reference_len,
            precision,
            recall,
            f1,
        }
    }

    /// True when the result was computed over no words at all.
    pub fn is_empty(&self) -> bool {
        self.candidate_len == 0 && self.reference_len == 0
    }
}

/// Length of the longest common subsequence of two sequences.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn lcs_match<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> usize {
    let c: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    lcs_len(&c, &r)
}

pub fn prf<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> EvalResult {
    EvalResult::from_counts(
        lcs_match(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

/// Micro-averaged scores over aligned sentence lists.
pub fn corpus_prf_words<S: AsRef<str>>(
    system: &[Vec<S>],
    gold: &[Vec<S>],
) -> Result<EvalResult, EvalError> {
    if system.len() != gold.len() {
        return Err(EvalError::SentenceCountMismatch {
            system: system.len(),
            gold: gold.len(),
        });
    }
    let (mut m, mut c, mut r) = (0, 0, 0);
    for (s, g) in system.iter().zip(gold) {
        m += lcs_match(s, g);
        c += s.len();
        r += g.len();
    }
    Ok(EvalResult::from_counts(m, c, r))
}

pub fn corpus_prf(system: &Document, gold: &Document) -> Result<EvalResult, EvalError> {
    let words = |d: &Document| -> Vec<Vec<String>> {
        d.sentences
            .iter()
            .map(|s| s.words.iter().map(|w| w.form.clone()).collect())
            .collect()
    };
    corpus_prf_words(&words(system), &words(gold))
}

/// Separator placed between components when comparing transductions at the
/// character level.
pub const COMPONENT_SEPARATOR: char = '\u{1F}';

/// Exact-match accuracy and mean LCS-based fuzzy F-score of transductions.
pub fn acc_mfs(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
) -> Result<(f64, f64), EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::InstanceCountMismatch {
            candidate: candidates.len(),
            reference: references.len(),
        });
    }
    if candidates.is_empty() {
        return Ok((1.0, 1.0));
    }
    let sep = COMPONENT_SEPARATOR.to_string();
    let mut exact = 0usize;
    let mut fuzzy = 0.0;
    for (c, r) in candidates.iter().zip(references) {
        if c == r {
            exact += 1;
        }
        let cs: Vec<char> = c.join(&sep).chars().collect();
        let rs: Vec<char> = r.join(&sep).chars().collect();
        fuzzy += fuzzy_f(&cs, &rs);
    }
    let n = candidates.len() as f64;
    Ok((exact as f64 / n, fuzzy / n))
}

/// LCS-based F-score of two character strings.
pub fn fuzzy_f(candidate: &[char], reference: &[char]) -> f64 {
    EvalResult::from_counts(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
    .f1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_match(&v(&["a", "b"]), &v(&["a", "b"])), 2);
        assert_eq!(lcs_match(&v(&["a", "b", "c"]), &v(&["a", "bc"])), 1);
        assert_eq!(lcs_match(&v(&["ab", "c"]), &v(&["a", "bc"])), 0);
    }

    #[test]
    fn prf_examples() {
        let r = prf(&v(&["a", "b", "c"]), &v(&["a", "bc"]));
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.precision, 1.0 / 3.0);
        assert_eq!(r.f1, 0.4);
        let r = prf(&v(&["x", "y"]), &v(&["x", "y"]));
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = prf(&v(&[]), &v(&["x"]));
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let r = prf::<String>(&[], &[]);
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn micro_average() {
        // (m, |c|, |r|) = (1, 3, 2) and (2, 2, 2)
        let sys = vec![v(&["a", "b", "c"]), v(&["x", "y"])];
        let gold = vec![v(&["a", "bc"]), v(&["x", "y"])];
        let r = corpus_prf_words(&sys, &gold).unwrap();
        assert_eq!((r.matched, r.candidate_len, r.reference_len), (3, 5, 4));
        assert_eq!(r.recall, 0.75);
        assert_eq!(r.precision, 0.6);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);

        let empty: Vec<Vec<String>> = vec![];
        let r = corpus_prf_words(&empty, &empty).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.f1, 1.0);
        assert!(corpus_prf_words(&sys, &gold[..1]).is_err());
    }

    #[test]
    fn transduction_metrics() {
        let (acc, mfs) = acc_mfs(&[v(&["de", "le"])], &[v(&["de", "le"])]).unwrap();
        assert_eq!((acc, mfs), (1.0, 1.0));
        let f = fuzzy_f(&['a', 'b', 'c'], &['a', 'b', 'd']);
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        let (acc, _) = acc_mfs(&[v(&["ab"]), v(&["xy"])], &[v(&["ab"]), v(&["zw"])]).unwrap();
        assert_eq!(acc, 0.5);
        assert!(acc_mfs(&[v(&["a"])], &[]).is_err());
    }
}
