//! Transduction of non-segmental multiword tokens into their words.
//!
//! Surfaces are looked up in a dictionary collected from training data. When
//! the training data holds enough distinct multiword tokens, misses are sent
//! through a character-level attention encoder-decoder instead.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conllu::Document;
use crate::eval::acc_mfs;
use crate::numeric::optim::{adagrad_update_all, clip_store_grads};
use crate::numeric::{
    glorot_init, lr_schedule, Graph, ParamId, ParamStore, Tensor, TrainConfig, Var,
};

/// Default minimum number of distinct non-segmental multiword tokens above
/// which the encoder-decoder is trained.
pub const ENCDEC_THRESHOLD: usize = 200;
/// Fewest training pairs the encoder-decoder accepts.
pub const MIN_ENCDEC_PAIRS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MwtError {
    #[error("{0} unique multiword tokens are too few to train the encoder-decoder (need {MIN_ENCDEC_PAIRS})")]
    TooFewPairs(usize),
}

/// Maps a multiword-token surface to its words.
pub trait Transduce {
    fn transduce(&self, surface: &str) -> Vec<String>;
}

/// Leaves every surface as a single word.
pub struct Identity;

impl Transduce for Identity {
    fn transduce(&self, surface: &str) -> Vec<String> {
        vec![surface.to_string()]
    }
}

/// Surface to components, with every alternative seen in training.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransductionTable {
    pub entries: BTreeMap<String, Vec<String>>,
    pub alternatives: BTreeMap<String, BTreeMap<Vec<String>, usize>>,
}

impl TransductionTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<&[String]> {
        self.entries.get(surface).map(Vec::as_slice)
    }

    /// Adds one observed transduction; the stored entry is re-chosen.
    pub fn observe(&mut self, surface: &str, components: Vec<String>) {
        let alts = self.alternatives.entry(surface.to_string()).or_default();
        *alts.entry(components).or_default() += 1;
        // most frequent alternative; ties go to the smallest sequence since
        // the map iterates in ascending order
        let best = alts
            .iter()
            .fold(None::<(&Vec<String>, usize)>, |best, (c, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((c, n)),
            })
            .map(|(c, _)| c.clone())
            .unwrap_or_default();
        self.entries.insert(surface.to_string(), best);
    }

    /// Share of surfaces with exactly one transduction.
    pub fn unambiguous_ratio(&self) -> f64 {
        if self.alternatives.is_empty() {
            return 1.0;
        }
        let single = self.alternatives.values().filter(|a| a.len() == 1).count();
        single as f64 / self.alternatives.len() as f64
    }
}

/// Collects every non-segmental multiword token of the documents.
pub fn build_table<'a>(docs: impl IntoIterator<Item = &'a Document>) -> TransductionTable {
    let mut table = TransductionTable::default();
    for doc in docs {
        for s in &doc.sentences {
            for t in &s.tokens {
                if s.is_non_segmental(t) {
                    let words = s.token_words(t).iter().map(|w| w.form.clone()).collect();
                    table.observe(&t.form, words);
                }
            }
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransductionPolicy {
    pub has_encdec: bool,
}

impl TransductionPolicy {
    pub fn decide(table: &TransductionTable, threshold: usize) -> Self {
        TransductionPolicy {
            has_encdec: table.len() > threshold,
        }
    }
}

pub const UNK: usize = 0;
pub const START: usize = 1;
pub const STOP: usize = 2;
pub const SEP: usize = 3;
const SPECIALS: usize = 4;

/// Character inventory of the transducer; indices below 4 are reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    pub chars: Vec<char>,
}

impl CharVocab {
    pub fn build<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a [String])>) -> Self {
        let mut set = std::collections::BTreeSet::new();
        for (surface, comps) in pairs {
            set.extend(surface.chars());
            for c in comps {
                set.extend(c.chars());
            }
        }
        CharVocab {
            chars: set.into_iter().collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.chars.len() + SPECIALS
    }

    pub fn index(&self, c: char) -> usize {
        self.chars.binary_search(&c).map_or(UNK, |i| i + SPECIALS)
    }

    pub fn symbol(&self, i: usize) -> Option<char> {
        i.checked_sub(SPECIALS)
            .and_then(|j| self.chars.get(j).copied())
    }

    pub fn encode_surface(&self, surface: &str) -> Vec<usize> {
        surface.chars().map(|c| self.index(c)).collect()
    }

    /// Components joined by the separator symbol and closed by the stop
    /// symbol.
    pub fn encode_target(&self, comps: &[String]) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, c) in comps.iter().enumerate() {
            if i > 0 {
                out.push(SEP);
            }
            out.extend(c.chars().map(|ch| self.index(ch)));
        }
        out.push(STOP);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmIds {
    /// Input projection `E x 4H`, gates ordered input, forget, output, cell.
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransducerIds {
    pub embedding: ParamId,
    pub encoder: LstmIds,
    pub decoder: LstmIds,
    pub att_enc: ParamId,
    pub att_dec: ParamId,
    pub att_v: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Attention encoder-decoder over characters.
#[derive(Debug, Clone)]
pub struct TransducerModel {
    pub vocab: CharVocab,
    pub embedding_size: usize,
    pub state_size: usize,
    pub share_weights: bool,
    pub params: ParamStore,
    pub ids: TransducerIds,
}

fn add_lstm(
    params: &mut ParamStore,
    prefix: &str,
    input: usize,
    state: usize,
    rng: &mut impl Rng,
) -> LstmIds {
    let mut bias = Tensor::zeros(&[1, 4 * state]);
    // forget gate starts open
    bias.data_mut()[state..2 * state].fill(1.0);
    LstmIds {
        w_x: params.add(
            format!("{prefix}/w_x"),
            glorot_init(&[input, 4 * state], rng),
        ),
        w_h: params.add(
            format!("{prefix}/w_h"),
            glorot_init(&[state, 4 * state], rng),
        ),
        bias: params.add(format!("{prefix}/b"), bias),
    }
}

struct LstmState {
    h: Var,
    c: Var,
}

struct DecoderState {
    lstm: LstmState,
    context: Var,
}

impl TransducerModel {
    pub fn new(
        vocab: CharVocab,
        embedding_size: usize,
        state_size: usize,
        share_weights: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let v = vocab.size();
        let (e, h) = (embedding_size, state_size);
        let mut params = ParamStore::new();
        let embedding = params.add("mwt/emb", glorot_init(&[v, e], rng));
        // inputs are a character embedding and the previous attention context
        let encoder = add_lstm(&mut params, "mwt/lstm", e + h, h, rng);
        let decoder = if share_weights {
            encoder
        } else {
            add_lstm(&mut params, "mwt/dec_lstm", e + h, h, rng)
        };
        let att_enc = params.add("mwt/att/w_enc", glorot_init(&[h, h], rng));
        let att_dec = params.add("mwt/att/w_dec", glorot_init(&[h, h], rng));
        let att_v = params.add("mwt/att/v", glorot_init(&[h, 1], rng));
        let out_w = params.add("mwt/out/w", glorot_init(&[2 * h, v], rng));
        let out_b = params.add("mwt/out/b", Tensor::zeros(&[1, v]));
        TransducerModel {
            vocab,
            embedding_size,
            state_size,
            share_weights,
            params,
            ids: TransducerIds {
                embedding,
                encoder,
                decoder,
                att_enc,
                att_dec,
                att_v,
                out_w,
                out_b,
            },
        }
    }

    fn lstm_step(&self, g: &mut Graph, ids: LstmIds, x: Var, state: &LstmState) -> LstmState {
        let h = self.state_size;
        let w_x = g.param(ids.w_x);
        let w_h = g.param(ids.w_h);
        let b = g.param(ids.bias);
        let xw = g.matmul(x, w_x);
        let hw = g.matmul(state.h, w_h);
        let pre = g.add(xw, hw);
        let pre = g.add_row(pre, b);
        let gates = g.slice_cols(pre, 0, 3 * h);
        let gates = g.sigmoid(gates);
        let i = g.slice_cols(gates, 0, h);
        let f = g.slice_cols(gates, h, 2 * h);
        let o = g.slice_cols(gates, 2 * h, 3 * h);
        let cand = g.slice_cols(pre, 3 * h, 4 * h);
        let cand = g.tanh(cand);
        let fc = g.mul(f, state.c);
        let ic = g.mul(i, cand);
        let c = g.add(fc, ic);
        let tc = g.tanh(c);
        let h_new = g.mul(o, tc);
        LstmState { h: h_new, c }
    }

    /// Encoder states stacked as `n x H`, their attention projection, and
    /// the final state.
    fn encode(&self, g: &mut Graph, input: &[usize]) -> (Var, Var, LstmState) {
        let zeros = Tensor::zeros(&[1, self.state_size]);
        let mut state = LstmState {
            h: g.constant(zeros.clone()),
            c: g.constant(zeros),
        };
        let embedded = g.gather_rows(self.ids.embedding, input);
        let no_context = g.constant(Tensor::zeros(&[1, self.state_size]));
        let mut hs = Vec::with_capacity(input.len());
        for t in 0..input.len() {
            let e = g.slice_rows(embedded, t, t + 1);
            let x = g.concat_cols(&[e, no_context]);
            state = self.lstm_step(g, self.ids.encoder, x, &state);
            hs.push(state.h);
        }
        let enc = g.concat_rows(&hs);
        let w = g.param(self.ids.att_enc);
        let proj = g.matmul(enc, w);
        (enc, proj, state)
    }

    /// One decoder step: returns the output logits and the new state,
    /// whose context feeds the next step.
    fn decode_step(
        &self,
        g: &mut Graph,
        prev: usize,
        state: &DecoderState,
        enc: Var,
        enc_proj: Var,
    ) -> (Var, DecoderState) {
        let e = g.gather_rows(self.ids.embedding, &[prev]);
        let x = g.concat_cols(&[e, state.context]);
        let state = &state.lstm;
        let state = self.lstm_step(g, self.ids.decoder, x, state);
        let w_dec = g.param(self.ids.att_dec);
        let q = g.matmul(state.h, w_dec);
        let scores = g.add_row(enc_proj, q);
        let scores = g.tanh(scores);
        let v = g.param(self.ids.att_v);
        let scores = g.matmul(scores, v);
        let scores = g.transpose(scores);
        let weights = g.softmax_rows(scores);
        let context = g.matmul(weights, enc);
        let joined = g.concat_cols(&[state.h, context]);
        let w = g.param(self.ids.out_w);
        let b = g.param(self.ids.out_b);
        let logits = g.matmul(joined, w);
        let logits = g.add_row(logits, b);
        (
            logits,
            DecoderState {
                lstm: state,
                context,
            },
        )
    }

    fn start_state(&self, g: &mut Graph, lstm: LstmState) -> DecoderState {
        let context = g.constant(Tensor::zeros(&[1, self.state_size]));
        DecoderState { lstm, context }
    }

    /// Teacher-forced cross-entropy summed over the target symbols.
    pub fn pair_loss(&self, g: &mut Graph, surface: &str, comps: &[String]) -> Var {
        let input = self.vocab.encode_surface(surface);
        let target = self.vocab.encode_target(comps);
        let (enc, proj, last) = self.encode(g, &input);
        let mut state = self.start_state(g, last);
        let mut prev = START;
        let mut losses = Vec::with_capacity(target.len());
        for &y in &target {
            let (logits, next) = self.decode_step(g, prev, &state, enc, proj);
            let lse = g.logsumexp_rows(logits);
            let gold = g.slice_cols(logits, y, y + 1);
            losses.push(g.sub(lse, gold));
            state = next;
            prev = y;
        }
        let all = g.concat_cols(&losses);
        g.sum(all)
    }

    /// Greedy decoding, at most `3 * len + 5` symbols.
    pub fn decode_symbols(&self, surface: &str) -> Vec<usize> {
        let input = self.vocab.encode_surface(surface);
        if input.is_empty() {
            return Vec::new();
        }
        let max_steps = 3 * input.len() + 5;
        let mut g = Graph::new(&self.params);
        let (enc, proj, last) = self.encode(&mut g, &input);
        let mut state = self.start_state(&mut g, last);
        let mut prev = START;
        let mut out = Vec::new();
        for _ in 0..max_steps {
            let (logits, next) = self.decode_step(&mut g, prev, &state, enc, proj);
            let row = g.value(logits).data();
            // first maximum wins
            let mut best = 0;
            for (i, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = i;
                }
            }
            if best == STOP {
                break;
            }
            out.push(best);
            state = next;
            prev = best;
        }
        out
    }

    pub fn decode(&self, surface: &str) -> Vec<String> {
        let mut comps = vec![String::new()];
        for s in self.decode_symbols(surface) {
            if s == SEP {
                comps.push(String::new());
            } else if let Some(c) = self.vocab.symbol(s) {
                comps.last_mut().expect("non-empty").push(c);
            }
        }
        comps.retain(|c| !c.is_empty());
        if comps.is_empty() {
            vec![surface.to_string()]
        } else {
            comps
        }
    }
}

pub fn decode_encdec(model: &TransducerModel, surface: &str) -> Vec<String> {
    model.decode(surface)
}

/// Per-epoch validation accuracy of encoder-decoder training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncDecLog {
    pub validation_acc: Vec<f64>,
    pub validation_mfs: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub train_pairs: usize,
    pub validation_pairs: usize,
}

impl EncDecLog {
    pub fn best_acc(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.validation_acc[e])
    }
}

pub type Pair = (String, Vec<String>);

/// Training pairs and held-out validation pairs (5%, at least one).
pub fn split_pairs(table: &TransductionTable, seed: u64) -> (Vec<Pair>, Vec<Pair>) {
    let mut pairs: Vec<Pair> = table
        .entries
        .iter()
        .map(|(s, c)| (s.clone(), c.clone()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d77_7400);
    pairs.shuffle(&mut rng);
    let n_val = ((pairs.len() as f64 * 0.05).round() as usize)
        .max(1)
        .min(pairs.len());
    let val = pairs.split_off(pairs.len() - n_val);
    (pairs, val)
}

pub fn validation_scores(model: &TransducerModel, pairs: &[Pair]) -> (f64, f64) {
    let cands: Vec<Vec<String>> = pairs.iter().map(|(s, _)| model.decode(s)).collect();
    let refs: Vec<Vec<String>> = pairs.iter().map(|(_, c)| c.clone()).collect();
    acc_mfs(&cands, &refs).expect("equal lengths")
}

/// Trains on `train` and keeps the weights of the epoch with the best exact
/// match rate on `validation` (earliest epoch on ties).
pub fn train_encdec(
    train: &[Pair],
    validation: &[Pair],
    cfg: &TrainConfig,
    share_weights: bool,
) -> Result<(TransducerModel, EncDecLog), MwtError> {
    let total = train.len() + validation.len();
    if total < MIN_ENCDEC_PAIRS {
        return Err(MwtError::TooFewPairs(total));
    }
    let vocab = CharVocab::build(train.iter().map(|(s, c)| (s.as_str(), c.as_slice())));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x656e_6364);
    let mut model = TransducerModel::new(
        vocab,
        cfg.char_embedding_size,
        cfg.rnn_state_size,
        share_weights,
        &mut rng,
    );
    let mut log = EncDecLog {
        train_pairs: train.len(),
        validation_pairs: validation.len(),
        ..EncDecLog::default()
    };
    let mut best: Option<(f64, ParamStore)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.encdec_epochs {
        order.shuffle(&mut rng);
        let lr = lr_schedule(cfg.initial_lr_encdec, cfg.decay_rate, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let grads = {
                let mut g = Graph::new(&model.params);
                let losses: Vec<Var> = chunk
                    .iter()
                    .map(|&i| model.pair_loss(&mut g, &train[i].0, &train[i].1))
                    .collect();
                let all = g.concat_cols(&losses);
                let total = g.sum(all);
                let mean = g.affine(total, 1.0 / chunk.len() as f64, 0.0);
                g.backward(mean)
            };
            grads.accumulate_into(&mut model.params);
            clip_store_grads(&mut model.params, cfg.grad_clip_norm);
            adagrad_update_all(&mut model.params, lr);
        }
        let (acc, mfs) = validation_scores(&model, validation);
        log::info!(
            "encoder-decoder epoch {}: validation ACC {acc:.4} MFS {mfs:.4}",
            epoch + 1
        );
        log.validation_acc.push(acc);
        log.validation_mfs.push(mfs);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model.params.clone()));
            log.best_epoch = Some(epoch);
        }
    }
    if let Some((_, params)) = best {
        model.params.copy_values_from(&params);
    }
    Ok((model, log))
}

/// Dictionary lookup backed by an optional encoder-decoder.
#[derive(Debug, Clone)]
pub struct Transducer {
    pub policy: TransductionPolicy,
    pub table: TransductionTable,
    pub model: Option<TransducerModel>,
}

impl Transducer {
    pub fn dictionary_only(table: TransductionTable) -> Self {
        Transducer {
            policy: TransductionPolicy { has_encdec: false },
            table,
            model: None,
        }
    }
}

pub fn transduce(
    policy: TransductionPolicy,
    table: &TransductionTable,
    model: Option<&TransducerModel>,
    surface: &str,
) -> Vec<String> {
    if let Some(c) = table.get(surface) {
        if !c.is_empty() {
            return c.to_vec();
        }
    }
    match (policy.has_encdec, model) {
        (true, Some(m)) => m.decode(surface),
        _ => vec![surface.to_string()],
    }
}

impl Transduce for Transducer {
    fn transduce(&self, surface: &str) -> Vec<String> {
        transduce(self.policy, &self.table, self.model.as_ref(), surface)
    }
}

/// Writes `surface<TAB>comp1<US>comp2...` lines in surface order.
pub fn write_table(table: &TransductionTable) -> String {
    let mut out = String::new();
    for (surface, comps) in &table.entries {
        out.push_str(surface);
        out.push('\t');
        out.push_str(&comps.join("\u{1F}"));
        out.push('\n');
    }
    out
}

pub fn read_table(input: &str) -> Result<TransductionTable, String> {
    let mut table = TransductionTable::default();
    for (i, line) in input.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (surface, comps) = line
            .split_once('\t')
            .ok_or_else(|| format!("mwt.tsv line {}: missing tab", i + 1))?;
        let comps: Vec<String> = comps.split('\u{1F}').map(str::to_string).collect();
        if comps.iter().any(String::is_empty) {
            return Err(format!("mwt.tsv line {}: empty component", i + 1));
        }
        table.entries.insert(surface.to_string(), comps.clone());
        table
            .alternatives
            .entry(surface.to_string())
            .or_default()
            .insert(comps, 1);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{SegmentSpec, Sentence};
    use crate::numeric::gradcheck::check_gradients;

    fn comps(c: &[&str]) -> Vec<String> {
        c.iter().map(|s| s.to_string()).collect()
    }

    fn doc_with(mwts: &[(&str, &[&str])]) -> Document {
        let segs: Vec<SegmentSpec> = mwts
            .iter()
            .map(|(s, c)| SegmentSpec {
                surface: s.to_string(),
                words: comps(c),
                space_after: true,
            })
            .collect();
        Document::new("t", vec![Sentence::from_segments(None, &segs)])
    }

    #[test]
    fn table_most_frequent() {
        let du: (&str, &[&str]) = ("du", &["de", "le"]);
        let doc = doc_with(&[du, du, du, du, du]);
        let t = build_table([&doc]);
        assert_eq!(t.get("du"), Some(&comps(&["de", "le"])[..]));

        let a: (&str, &[&str]) = ("xy", &["x", "a"]);
        let b: (&str, &[&str]) = ("xy", &["x", "b"]);
        let doc = doc_with(&[b, a, a, a]);
        assert_eq!(build_table([&doc]).get("xy"), Some(&comps(&["x", "a"])[..]));
        // tie goes to the smaller sequence
        let doc = doc_with(&[b, a]);
        assert_eq!(build_table([&doc]).get("xy"), Some(&comps(&["x", "a"])[..]));

        // segmental tokens are not collected
        let seg: (&str, &[&str]) = ("qu'environ", &["qu'", "environ"]);
        assert!(build_table([&doc_with(&[seg])]).is_empty());
    }

    #[test]
    fn policy_threshold() {
        let mut t = TransductionTable::default();
        for i in 0..200 {
            t.observe(&format!("s{i}"), comps(&["a", "b"]));
        }
        assert!(!TransductionPolicy::decide(&t, ENCDEC_THRESHOLD).has_encdec);
        t.observe("s200", comps(&["a", "b"]));
        assert!(TransductionPolicy::decide(&t, ENCDEC_THRESHOLD).has_encdec);
    }

    #[test]
    fn transduce_paths() {
        let mut t = TransductionTable::default();
        t.observe("du", comps(&["de", "le"]));
        let p = TransductionPolicy { has_encdec: false };
        assert_eq!(transduce(p, &t, None, "du"), comps(&["de", "le"]));
        assert_eq!(transduce(p, &t, None, "au"), comps(&["au"]));
    }

    #[test]
    fn table_file_round_trip() {
        let mut t = TransductionTable::default();
        t.observe("du", comps(&["de", "le"]));
        t.observe("al", comps(&["a", "el"]));
        let text = write_table(&t);
        assert_eq!(text, "al\ta\u{1F}el\ndu\tde\u{1F}le\n");
        assert_eq!(read_table(&text).unwrap().entries, t.entries);
    }

    fn tiny_model(share: bool) -> TransducerModel {
        let pairs = [("ab".to_string(), comps(&["a", "bc"]))];
        let vocab = CharVocab::build(pairs.iter().map(|(s, c)| (s.as_str(), c.as_slice())));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        TransducerModel::new(vocab, 3, 4, share, &mut rng)
    }

    #[test]
    fn encdec_gradient_check() {
        for share in [true, false] {
            let mut m = tiny_model(share);
            let model = m.clone();
            let err = check_gradients(
                &mut m.params,
                |p| {
                    let mut g = Graph::new(p);
                    let l = model.pair_loss(&mut g, "abca", &comps(&["a", "b"]));
                    (g.value(l).item(), g.backward(l))
                },
                1e-5,
            );
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn decoding_is_total_and_bounded() {
        let m = tiny_model(true);
        assert!(m.decode_symbols("ab").len() <= 11);
        let out = m.decode("\u{2603}\u{2603}zz");
        assert!(!out.is_empty() && out.iter().all(|c| !c.is_empty()));
        assert_eq!(m.decode(""), comps(&[""]));
    }

    #[test]
    fn teacher_forced_loss_decreases() {
        let mut m = tiny_model(true);
        let target = comps(&["a", "bc"]);
        let mut losses = Vec::new();
        for _ in 0..4 {
            let grads = {
                let mut g = Graph::new(&m.params);
                let l = m.pair_loss(&mut g, "ab", &target);
                losses.push(g.value(l).item());
                g.backward(l)
            };
            grads.accumulate_into(&mut m.params);
            clip_store_grads(&mut m.params, 5.0);
            adagrad_update_all(&mut m.params, 0.3);
        }
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn too_few_pairs() {
        let pairs: Vec<Pair> = (0..5).map(|i| (format!("s{i}"), comps(&["a"]))).collect();
        assert_eq!(
            train_encdec(&pairs, &[], &TrainConfig::default(), true).unwrap_err(),
            MwtError::TooFewPairs(5)
        );
    }
}
