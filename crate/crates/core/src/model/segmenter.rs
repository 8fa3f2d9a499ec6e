//! The segmentation network: n-gram embeddings, a bidirectional GRU and a
//! linear-chain CRF over boundary tags.

use rand::Rng;

use super::crf;
use super::vocab::Vocab;
use crate::numeric::{
    dropout_mask, glorot_init, Graph, ParamId, ParamStore, Tensor, TrainConfig, Var,
};
use crate::tags::{BoundaryTag, UnitMode};

/// Bucket lengths; sequences are padded up to the smallest bucket that holds
/// them.
pub const BUCKETS: [usize; 7] = [10, 20, 40, 80, 140, 200, 300];
/// Longest unit sequence fed to the network in one piece.
pub const MAX_PIECE_LEN: usize = 300;

pub fn bucket_for(len: usize) -> usize {
    BUCKETS
        .iter()
        .copied()
        .find(|&b| b >= len)
        .unwrap_or(MAX_PIECE_LEN.max(len))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruIds {
    /// Input projection `in x 3H`, gates ordered update, reset, candidate.
    pub w_x: ParamId,
    /// Recurrent projection for the update and reset gates, `H x 2H`.
    pub u_zr: ParamId,
    /// Recurrent projection for the candidate, applied to `r * h`, `H x H`.
    pub u_h: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegParamIds {
    pub embeddings: Vec<ParamId>,
    pub forward: GruIds,
    pub backward: GruIds,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub transitions: ParamId,
}

/// All learned state of the segmenter.
#[derive(Debug, Clone)]
pub struct SegModel {
    pub vocab: Vocab,
    pub unit_mode: UnitMode,
    pub tagset: Vec<BoundaryTag>,
    pub config: TrainConfig,
    pub params: ParamStore,
    pub ids: SegParamIds,
}

/// One padded mini-batch. Features and tags are time-major: entry
/// `t * batch + b` belongs to sequence `b` at position `t`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Vec<Vec<usize>>,
    pub tags: Vec<usize>,
    pub lengths: Vec<usize>,
    pub padded_len: usize,
}

impl Batch {
    /// `seqs[b][order][t]` features, optional gold tags per sequence.
    pub fn new(seqs: &[&[Vec<usize>]], tags: Option<&[&[usize]]>) -> Self {
        assert!(!seqs.is_empty(), "empty batch");
        let lengths: Vec<usize> = seqs.iter().map(|s| s[0].len()).collect();
        let padded_len = bucket_for(*lengths.iter().max().unwrap_or(&1));
        let b = seqs.len();
        let orders = seqs[0].len();
        let mut features = vec![vec![0usize; padded_len * b]; orders];
        let mut tag_out = vec![0usize; padded_len * b];
        for (bi, seq) in seqs.iter().enumerate() {
            for (o, feats) in seq.iter().enumerate() {
                for (t, &f) in feats.iter().enumerate() {
                    features[o][t * b + bi] = f;
                }
            }
            if let Some(tags) = tags {
                for (t, &tag) in tags[bi].iter().enumerate() {
                    tag_out[t * b + bi] = tag;
                }
            }
        }
        Batch {
            features,
            tags: tag_out,
            lengths,
            padded_len,
        }
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    /// Emission rows of sequence `b`, in time order.
    fn rows_of(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.size();
        (0..self.lengths[b]).map(move |t| t * n + b)
    }
}

fn add_gru(
    params: &mut ParamStore,
    prefix: &str,
    input: usize,
    state: usize,
    rng: &mut impl Rng,
) -> GruIds {
    GruIds {
        w_x: params.add(
            format!("{prefix}/w_x"),
            glorot_init(&[input, 3 * state], rng),
        ),
        u_zr: params.add(
            format!("{prefix}/u_zr"),
            glorot_init(&[state, 2 * state], rng),
        ),
        u_h: params.add(format!("{prefix}/u_h"), glorot_init(&[state, state], rng)),
        bias: params.add(format!("{prefix}/b"), Tensor::zeros(&[1, 3 * state])),
    }
}

/// Dropout randomness for a training pass; `None` means inference.
pub type DropoutRng<'r> = Option<&'r mut dyn rand::RngCore>;

impl SegModel {
    /// Freshly initialised model. Parameter declaration order is fixed and
    /// doubles as the serialisation order.
    pub fn new(
        vocab: Vocab,
        unit_mode: UnitMode,
        tagset: Vec<BoundaryTag>,
        config: TrainConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let e = config.char_embedding_size;
        let h = config.rnn_state_size;
        let k = tagset.len();
        let mut params = ParamStore::new();
        let embeddings = vocab
            .orders
            .iter()
            .enumerate()
            .map(|(o, v)| {
                params.add(
                    format!("seg/emb{}", o + 1),
                    glorot_init(&[v.size(), e], rng),
                )
            })
            .collect::<Vec<_>>();
        let input = e * embeddings.len();
        let forward = add_gru(&mut params, "seg/gru_fw", input, h, rng);
        let backward = add_gru(&mut params, "seg/gru_bw", input, h, rng);
        let out_w = params.add("seg/out/w", glorot_init(&[2 * h, k], rng));
        let out_b = params.add("seg/out/b", Tensor::zeros(&[1, k]));
        let transitions = params.add("seg/crf/transitions", glorot_init(&[k + 2, k + 2], rng));
        SegModel {
            vocab,
            unit_mode,
            tagset,
            config,
            params,
            ids: SegParamIds {
                embeddings,
                forward,
                backward,
                out_w,
                out_b,
                transitions,
            },
        }
    }

    pub fn uses_ngrams(&self) -> bool {
        self.vocab.uses_ngrams()
    }

    pub fn tag_index(&self, tag: BoundaryTag) -> Option<usize> {
        self.tagset.iter().position(|&t| t == tag)
    }

    /// Width of the per-position input vector.
    pub fn input_width(&self) -> usize {
        self.config.char_embedding_size * self.ids.embeddings.len()
    }

    /// Concatenated n-gram embeddings for every (time, sequence) row.
    pub fn represent(&self, g: &mut Graph, batch: &Batch) -> Var {
        let parts: Vec<Var> = self
            .ids
            .embeddings
            .iter()
            .zip(&batch.features)
            .map(|(&table, idx)| g.gather_rows(table, idx))
            .collect();
        if parts.len() == 1 {
            parts[0]
        } else {
            g.concat_cols(&parts)
        }
    }

    fn mask(&self, batch: &Batch, t: usize) -> Option<Tensor> {
        let h = self.config.rnn_state_size;
        if batch.lengths.iter().all(|&l| t < l) {
            return None;
        }
        let mut m = Vec::with_capacity(batch.size() * h);
        for &l in &batch.lengths {
            let v = if t < l { 1.0 } else { 0.0 };
            m.extend(std::iter::repeat_n(v, h));
        }
        Some(Tensor::matrix(batch.size(), h, m))
    }

    /// Runs one GRU direction, returning the state at every time step.
    fn run_gru(
        &self,
        g: &mut Graph,
        ids: GruIds,
        xw: Var,
        batch: &Batch,
        reverse: bool,
    ) -> Vec<Var> {
        let h_size = self.config.rnn_state_size;
        let n = batch.size();
        let t_len = batch.padded_len;
        let u_zr = g.param(ids.u_zr);
        let u_h = g.param(ids.u_h);
        let mut h = g.constant(Tensor::zeros(&[n, h_size]));
        let mut states = vec![h; t_len];
        // steps past the longest sequence are fully masked; their states stay
        // zero and are never read by the loss
        let live = batch.lengths.iter().copied().max().unwrap_or(0).min(t_len);
        let order: Vec<usize> = if reverse {
            (0..live).rev().collect()
        } else {
            (0..live).collect()
        };
        for t in order {
            let x_t = g.slice_rows(xw, t * n, (t + 1) * n);
            let x_zr = g.slice_cols(x_t, 0, 2 * h_size);
            let x_h = g.slice_cols(x_t, 2 * h_size, 3 * h_size);
            let h_zr = g.matmul(h, u_zr);
            let zr = g.add(x_zr, h_zr);
            let zr = g.sigmoid(zr);
            let z = g.slice_cols(zr, 0, h_size);
            let r = g.slice_cols(zr, h_size, 2 * h_size);
            let rh = g.mul(r, h);
            let rh_u = g.matmul(rh, u_h);
            let cand = g.add(x_h, rh_u);
            let cand = g.tanh(cand);
            // h' = z * h + (1 - z) * cand = cand + z * (h - cand)
            let diff = g.sub(h, cand);
            let zd = g.mul(z, diff);
            let mut h_new = g.add(cand, zd);
            if let Some(m) = self.mask(batch, t) {
                let keep = m.map(|x| 1.0 - x);
                let a = g.mul_const(h_new, m);
                let b = g.mul_const(h, keep);
                h_new = g.add(a, b);
            }
            h = h_new;
            states[t] = h;
        }
        states
    }

    fn maybe_dropout(&self, g: &mut Graph, x: Var, rng: &mut DropoutRng) -> Var {
        match rng {
            Some(r) if self.config.dropout_rate > 0.0 => {
                let shape = g.value(x).shape().to_vec();
                let mask = dropout_mask(&shape, self.config.dropout_rate, r);
                g.mul_const(x, mask)
            }
            _ => x,
        }
    }

    /// Per-position BiGRU features, `(T * B) x 2H`, time-major.
    pub fn bigru_encode(&self, g: &mut Graph, batch: &Batch, rng: &mut DropoutRng) -> Var {
        let x = self.represent(g, batch);
        let x = self.maybe_dropout(g, x, rng);
        let mut outputs = Vec::with_capacity(2);
        for (ids, reverse) in [(self.ids.forward, false), (self.ids.backward, true)] {
            let w = g.param(ids.w_x);
            let b = g.param(ids.bias);
            let xw = g.matmul(x, w);
            let xw = g.add_row(xw, b);
            outputs.push(self.run_gru(g, ids, xw, batch, reverse));
        }
        let per_step: Vec<Var> = (0..batch.padded_len)
            .map(|t| g.concat_cols(&[outputs[0][t], outputs[1][t]]))
            .collect();
        let out = g.concat_rows(&per_step);
        self.maybe_dropout(g, out, rng)
    }

    /// Emission scores, `(T * B) x K`.
    pub fn emissions(&self, g: &mut Graph, batch: &Batch, rng: &mut DropoutRng) -> Var {
        let feats = self.bigru_encode(g, batch, rng);
        let w = g.param(self.ids.out_w);
        let b = g.param(self.ids.out_b);
        let e = g.matmul(feats, w);
        g.add_row(e, b)
    }

    fn sequence_emissions(&self, all: &Tensor, batch: &Batch, b: usize) -> Vec<f64> {
        let k = self.tagset.len();
        let mut e = Vec::with_capacity(batch.lengths[b] * k);
        for row in batch.rows_of(b) {
            e.extend_from_slice(all.row_slice(row));
        }
        e
    }

    /// Mean CRF negative log-likelihood of the batch, recorded on the graph.
    pub fn batch_loss(&self, g: &mut Graph, batch: &Batch, rng: &mut DropoutRng) -> Var {
        let emissions = self.emissions(g, batch, rng);
        let trans_var = g.param(self.ids.transitions);
        let k = self.tagset.len();
        let all = g.value(emissions).clone();
        let trans = &g.value(trans_var).clone();
        let scale = 1.0 / batch.size() as f64;
        let mut g_emit = Tensor::zeros(all.shape());
        let mut g_trans = Tensor::zeros(trans.shape());
        let mut total = 0.0;
        for b in 0..batch.size() {
            let e = self.sequence_emissions(&all, batch, b);
            let gold: Vec<usize> = batch.rows_of(b).map(|r| batch.tags[r]).collect();
            let (loss, ge, gt) = crf::nll_with_grads(&e, trans, k, &gold);
            total += loss * scale;
            for (pos, row) in batch.rows_of(b).enumerate() {
                let dst = &mut g_emit.data_mut()[row * k..(row + 1) * k];
                for (d, s) in dst.iter_mut().zip(&ge[pos * k..(pos + 1) * k]) {
                    *d += s * scale;
                }
            }
            for (d, s) in g_trans.data_mut().iter_mut().zip(&gt) {
                *d += s * scale;
            }
        }
        g.fused_scalar(total, vec![(emissions, g_emit), (trans_var, g_trans)])
    }

    /// Viterbi tag indices for every sequence of the batch.
    pub fn decode_batch(&self, batch: &Batch) -> Vec<Vec<usize>> {
        let mut g = Graph::new(&self.params);
        let emissions = self.emissions(&mut g, batch, &mut None);
        let all = g.value(emissions);
        let trans = self.params.value(self.ids.transitions);
        (0..batch.size())
            .map(|b| {
                crf::viterbi(
                    &self.sequence_emissions(all, batch, b),
                    trans,
                    self.tagset.len(),
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn units(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    fn small_model(uses_ngrams: bool, state: usize) -> SegModel {
        let corpus = [units("abcab"), units("bcabc"), units("cabca")];
        let vocab = Vocab::build(corpus.iter().map(Vec::as_slice), uses_ngrams);
        let config = TrainConfig {
            char_embedding_size: 3,
            rnn_state_size: state,
            dropout_rate: 0.0,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        SegModel::new(
            vocab,
            UnitMode::Character,
            BoundaryTag::PLAIN.to_vec(),
            config,
            &mut rng,
        )
    }

    #[test]
    fn bucket_lengths() {
        assert_eq!(bucket_for(1), 10);
        assert_eq!(bucket_for(10), 10);
        assert_eq!(bucket_for(11), 20);
        assert_eq!(bucket_for(300), 300);
    }

    #[test]
    fn representation_width() {
        let m = small_model(true, 4);
        assert_eq!(m.input_width(), 9);
        let feats = m.vocab.features(&units("abc"));
        let batch = Batch::new(&[&feats], None);
        let mut g = Graph::new(&m.params);
        let x = m.represent(&mut g, &batch);
        assert_eq!(g.value(x).shape(), &[10, 9]);
        let m = small_model(false, 4);
        assert_eq!(m.input_width(), 3);
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let mut m = small_model(false, 4);
        for p in m.params.iter_mut() {
            if p.name.starts_with("seg/gru") {
                p.value.fill(0.0);
            }
        }
        let feats = m.vocab.features(&units("abca"));
        let batch = Batch::new(&[&feats], None);
        let mut g = Graph::new(&m.params);
        let out = m.bigru_encode(&mut g, &batch, &mut None);
        assert!(g.value(out).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reversal_swaps_directions() {
        let mut m = small_model(false, 4);
        // tie both directions to the same weights
        let fw: Vec<Tensor> = ["w_x", "u_zr", "u_h", "b"]
            .iter()
            .map(|n| {
                m.params
                    .value(m.params.find(&format!("seg/gru_fw/{n}")).unwrap())
                    .clone()
            })
            .collect();
        for (n, v) in ["w_x", "u_zr", "u_h", "b"].iter().zip(fw) {
            let id = m.params.find(&format!("seg/gru_bw/{n}")).unwrap();
            m.params.get_mut(id).value = v;
        }
        let h = m.config.rnn_state_size;
        let run = |s: &str| {
            let feats = m.vocab.features(&units(s));
            let batch = Batch::new(&[&feats], None);
            let mut g = Graph::new(&m.params);
            let out = m.bigru_encode(&mut g, &batch, &mut None);
            (0..s.len())
                .map(|t| g.value(out).row_slice(t).to_vec())
                .collect::<Vec<_>>()
        };
        let a = run("abcc");
        let b = run("ccba");
        for t in 0..4 {
            let (fa, ba) = a[t].split_at(h);
            let (fb, bb) = b[3 - t].split_at(h);
            for (x, y) in fa.iter().zip(bb).chain(ba.iter().zip(fb)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn padding_does_not_change_loss() {
        let m = small_model(true, 4);
        let f1 = m.vocab.features(&units("abca"));
        let f2 = m.vocab.features(&units("bc"));
        let t1 = [0usize, 1, 2, 3];
        let t2 = [0usize, 2];
        let loss_of = |seqs: &[&[Vec<usize>]], tags: &[&[usize]]| {
            let batch = Batch::new(seqs, Some(tags));
            let mut g = Graph::new(&m.params);
            let l = m.batch_loss(&mut g, &batch, &mut None);
            g.value(l).item() * batch.size() as f64
        };
        let joint = loss_of(&[&f1, &f2], &[&t1, &t2]);
        let separate = loss_of(&[&f1], &[&t1]) + loss_of(&[&f2], &[&t2]);
        assert!((joint - separate).abs() < 1e-10);
    }

    #[test]
    fn full_loss_gradient_check() {
        let mut m = small_model(true, 3);
        let feats = m.vocab.features(&units("abcb"));
        let tags = [0usize, 2, 3, 1];
        let batch = Batch::new(&[&feats], Some(&[&tags]));
        let model = m.clone();
        let err = check_gradients(
            &mut m.params,
            |p| {
                let mut g = Graph::new(p);
                let l = model.batch_loss(&mut g, &batch, &mut None);
                (g.value(l).item(), g.backward(l))
            },
            1e-5,
        );
        assert!(err < 1e-4, "relative error {err}");
    }
}
