//! First-order linear-chain CRF: scoring, partition function, gradients and
//! Viterbi decoding.
//!
//! Emissions are `len x K` row-major. Transitions are a `(K + 2) x (K + 2)`
//! matrix over the tags plus a start state (index `K`) and a stop state
//! (index `K + 1`); only `start -> tag`, `tag -> tag` and `tag -> stop`
//! entries are used.

use crate::numeric::graph::logsumexp;
use crate::numeric::Tensor;

pub fn start_index(k: usize) -> usize {
    k
}

pub fn stop_index(k: usize) -> usize {
    k + 1
}

#[inline]
fn tr(trans: &[f64], k: usize, from: usize, to: usize) -> f64 {
    trans[from * (k + 2) + to]
}

fn check_shapes(emissions: &[f64], trans: &Tensor, k: usize) {
    assert!(
        k > 0 && emissions.len().is_multiple_of(k),
        "emissions are not len x K"
    );
    assert_eq!(trans.shape(), &[k + 2, k + 2], "transition matrix shape");
}

/// Unnormalised score of one tag sequence.
pub fn sequence_score(emissions: &[f64], trans: &Tensor, k: usize, tags: &[usize]) -> f64 {
    check_shapes(emissions, trans, k);
    let t = trans.data();
    let mut prev = start_index(k);
    let mut score = 0.0;
    for (pos, &tag) in tags.iter().enumerate() {
        assert!(tag < k, "tag index {tag} out of range for {k} tags");
        score += tr(t, k, prev, tag) + emissions[pos * k + tag];
        prev = tag;
    }
    score + tr(t, k, prev, stop_index(k))
}

/// Forward log-potentials `alpha[pos * k + tag]`.
fn forward(emissions: &[f64], t: &[f64], k: usize) -> Vec<f64> {
    let len = emissions.len() / k;
    let mut alpha = vec![0.0; len * k];
    for j in 0..k {
        alpha[j] = tr(t, k, start_index(k), j) + emissions[j];
    }
    let mut scratch = vec![0.0; k];
    for pos in 1..len {
        for j in 0..k {
            for i in 0..k {
                scratch[i] = alpha[(pos - 1) * k + i] + tr(t, k, i, j);
            }
            alpha[pos * k + j] = logsumexp(&scratch) + emissions[pos * k + j];
        }
    }
    alpha
}

fn backward(emissions: &[f64], t: &[f64], k: usize) -> Vec<f64> {
    let len = emissions.len() / k;
    let mut beta = vec![0.0; len * k];
    for i in 0..k {
        beta[(len - 1) * k + i] = tr(t, k, i, stop_index(k));
    }
    let mut scratch = vec![0.0; k];
    for pos in (0..len - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                scratch[j] =
                    tr(t, k, i, j) + emissions[(pos + 1) * k + j] + beta[(pos + 1) * k + j];
            }
            beta[pos * k + i] = logsumexp(&scratch);
        }
    }
    beta
}

fn final_scores(alpha: &[f64], t: &[f64], k: usize) -> Vec<f64> {
    let len = alpha.len() / k;
    (0..k)
        .map(|i| alpha[(len - 1) * k + i] + tr(t, k, i, stop_index(k)))
        .collect()
}

/// `log Z`, summed over every tag sequence of the emission length.
pub fn log_partition(emissions: &[f64], trans: &Tensor, k: usize) -> f64 {
    check_shapes(emissions, trans, k);
    if emissions.is_empty() {
        return tr(trans.data(), k, start_index(k), stop_index(k));
    }
    let alpha = forward(emissions, trans.data(), k);
    logsumexp(&final_scores(&alpha, trans.data(), k))
}

pub fn neg_log_likelihood(emissions: &[f64], trans: &Tensor, k: usize, gold: &[usize]) -> f64 {
    log_partition(emissions, trans, k) - sequence_score(emissions, trans, k, gold)
}

/// Loss with gradients with respect to the emissions (`len x K`) and the
/// transition matrix.
pub fn nll_with_grads(
    emissions: &[f64],
    trans: &Tensor,
    k: usize,
    gold: &[usize],
) -> (f64, Vec<f64>, Vec<f64>) {
    check_shapes(emissions, trans, k);
    let len = emissions.len() / k;
    assert_eq!(gold.len(), len, "gold length differs from emissions");
    let t = trans.data();
    let n = k + 2;
    let mut g_emit = vec![0.0; len * k];
    let mut g_trans = vec![0.0; n * n];
    if len == 0 {
        return (0.0, g_emit, g_trans);
    }
    let alpha = forward(emissions, t, k);
    let beta = backward(emissions, t, k);
    let log_z = logsumexp(&final_scores(&alpha, t, k));

    for pos in 0..len {
        for j in 0..k {
            let p = (alpha[pos * k + j] + beta[pos * k + j] - log_z).exp();
            g_emit[pos * k + j] = p;
        }
    }
    for j in 0..k {
        g_trans[start_index(k) * n + j] += g_emit[j];
        g_trans[j * n + stop_index(k)] += g_emit[(len - 1) * k + j];
    }
    for pos in 1..len {
        for i in 0..k {
            for j in 0..k {
                let p = (alpha[(pos - 1) * k + i]
                    + tr(t, k, i, j)
                    + emissions[pos * k + j]
                    + beta[pos * k + j]
                    - log_z)
                    .exp();
                g_trans[i * n + j] += p;
            }
        }
    }
    // subtract the gold path counts
    let mut prev = start_index(k);
    for (pos, &tag) in gold.iter().enumerate() {
        assert!(tag < k, "tag index {tag} out of range for {k} tags");
        g_emit[pos * k + tag] -= 1.0;
        g_trans[prev * n + tag] -= 1.0;
        prev = tag;
    }
    g_trans[prev * n + stop_index(k)] -= 1.0;

    let loss = log_z - sequence_score(emissions, trans, k, gold);
    (loss, g_emit, g_trans)
}

/// Highest-scoring tag sequence. Ties go to the lowest tag index.
pub fn viterbi(emissions: &[f64], trans: &Tensor, k: usize) -> Vec<usize> {
    check_shapes(emissions, trans, k);
    let len = emissions.len() / k;
    if len == 0 {
        return Vec::new();
    }
    let t = trans.data();
    let mut score: Vec<f64> = (0..k)
        .map(|j| tr(t, k, start_index(k), j) + emissions[j])
        .collect();
    let mut backptr = vec![0usize; len * k];
    let mut next = vec![0.0; k];
    for pos in 1..len {
        for j in 0..k {
            let mut best = 0;
            let mut best_score = score[0] + tr(t, k, 0, j);
            for (i, s) in score.iter().enumerate().skip(1) {
                let cand = s + tr(t, k, i, j);
                if cand > best_score {
                    best_score = cand;
                    best = i;
                }
            }
            backptr[pos * k + j] = best;
            next[j] = best_score + emissions[pos * k + j];
        }
        std::mem::swap(&mut score, &mut next);
    }
    let mut last = 0;
    let mut last_score = f64::NEG_INFINITY;
    for (j, s) in score.iter().enumerate() {
        let total = s + tr(t, k, j, stop_index(k));
        if total > last_score {
            last_score = total;
            last = j;
        }
    }
    let mut path = vec![0; len];
    path[len - 1] = last;
    for pos in (1..len).rev() {
        path[pos - 1] = backptr[pos * k + path[pos]];
    }
    path
}
