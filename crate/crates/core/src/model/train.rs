//! Mini-batch training of the segmenter and batched prediction.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::segmenter::{bucket_for, Batch, SegModel, MAX_PIECE_LEN};
use super::vocab::Vocab;
use crate::conllu::{reconstruct_text, Document, SegmentSpec, Sentence};
use crate::eval::{corpus_prf_words, EvalResult};
use crate::mwt::Transduce;
use crate::numeric::optim::{adagrad_update_all, clip_store_grads};
use crate::numeric::{lr_schedule, Graph, ParamStore, TrainConfig};
use crate::tags::{
    decode_tags, encode_tags, repair_tags, unitize, BoundaryTag, Segment, SegmentKind, UnitMode,
    UnitSequence,
};

/// Sentences decoded together at prediction time.
const PREDICT_BATCH: usize = 32;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no usable training sentences")]
    NoTrainingData,
    #[error("no development sentences")]
    NoDevData,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// A sentence turned into units and gold tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub units: UnitSequence,
    pub tags: Vec<BoundaryTag>,
}

/// Tags every sentence of `doc`; sentences whose tokens cannot be located
/// in the text are skipped with a warning.
pub fn prepare(doc: &Document, mode: UnitMode) -> (Vec<TaggedSentence>, Vec<String>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (i, s) in doc.sentences.iter().enumerate() {
        let units = unitize(&reconstruct_text(s), mode);
        if units.is_empty() {
            continue;
        }
        match encode_tags(s, &units) {
            Ok(tags) => out.push(TaggedSentence { units, tags }),
            Err(e) => {
                let msg = format!("{}: sentence {} skipped: {e}", doc.source_name, i + 1);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    (out, warnings)
}

/// The nine-tag set when any gold tag is overlined, the five plain tags
/// otherwise.
pub fn choose_tagset(sentences: &[TaggedSentence]) -> Vec<BoundaryTag> {
    let overlined = sentences
        .iter()
        .flat_map(|s| &s.tags)
        .any(|t| t.is_overlined());
    if overlined {
        BoundaryTag::ALL.to_vec()
    } else {
        BoundaryTag::PLAIN.to_vec()
    }
}

/// Per-epoch development scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub dev_f1: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub train_sentences: usize,
    pub skipped_sentences: usize,
    pub warnings: Vec<String>,
}

impl TrainLog {
    pub fn best_f1(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.dev_f1[e])
    }
}

/// Cuts a sequence into consecutive pieces of at most [`MAX_PIECE_LEN`].
pub fn piece_ranges(len: usize) -> Vec<(usize, usize)> {
    (0..len)
        .step_by(MAX_PIECE_LEN)
        .map(|s| (s, (s + MAX_PIECE_LEN).min(len)))
        .collect()
}

struct Instance {
    features: Vec<Vec<usize>>,
    tags: Vec<usize>,
}

fn instances(model: &SegModel, sentences: &[TaggedSentence]) -> Vec<Instance> {
    let mut out = Vec::new();
    for s in sentences {
        // n-gram context comes from the whole sentence, not the piece
        let feats = model.vocab.features(&s.units.units);
        let tags: Vec<usize> = s
            .tags
            .iter()
            .map(|&t| model.tag_index(t).expect("tag outside the model tagset"))
            .collect();
        for (a, b) in piece_ranges(tags.len()) {
            out.push(Instance {
                features: feats.iter().map(|f| f[a..b].to_vec()).collect(),
                tags: tags[a..b].to_vec(),
            });
        }
    }
    out
}

/// Groups instance indices by bucket, chunks them and shuffles the batches.
fn epoch_batches(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in order {
        buckets.entry(bucket_for(lengths[i])).or_default().push(i);
    }
    let mut batches: Vec<Vec<usize>> = buckets
        .values()
        .flat_map(|idx| idx.chunks(batch_size).map(<[usize]>::to_vec))
        .collect();
    batches.shuffle(rng);
    batches
}

/// Gold word forms of every sentence.
pub fn gold_words(doc: &Document) -> Vec<Vec<String>> {
    doc.sentences
        .iter()
        .map(|s| s.words.iter().map(|w| w.form.clone()).collect())
        .collect()
}

pub fn raw_texts(doc: &Document) -> Vec<String> {
    doc.sentences.iter().map(reconstruct_text).collect()
}

/// Word-level scores of the model on `doc`, multiword tokens expanded by
/// `transducer`.
pub fn evaluate_model(model: &SegModel, doc: &Document, transducer: &dyn Transduce) -> EvalResult {
    let predictions = predict(model, &raw_texts(doc));
    let system: Vec<Vec<String>> = predictions.iter().map(|p| p.words(transducer)).collect();
    corpus_prf_words(&system, &gold_words(doc)).expect("one prediction per sentence")
}

/// Trains a segmenter and keeps the weights of the epoch with the best
/// development F1 (earliest on ties). With zero epochs the initial weights
/// are returned.
pub fn train_main(
    train: &Document,
    dev: &Document,
    mode: UnitMode,
    uses_ngrams: bool,
    cfg: &TrainConfig,
    transducer: &dyn Transduce,
) -> Result<(SegModel, TrainLog), TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    if dev.sentences.is_empty() {
        return Err(TrainError::NoDevData);
    }
    let (sentences, warnings) = prepare(train, mode);
    if sentences.is_empty() {
        return Err(TrainError::NoTrainingData);
    }
    let vocab = Vocab::build(
        sentences.iter().map(|s| s.units.units.as_slice()),
        uses_ngrams,
    );
    let tagset = choose_tagset(&sentences);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SegModel::new(vocab, mode, tagset, cfg.clone(), &mut init_rng);
    let mut log = TrainLog {
        train_sentences: sentences.len(),
        skipped_sentences: warnings.len(),
        warnings,
        ..TrainLog::default()
    };

    let data = instances(&model, &sentences);
    let lengths: Vec<usize> = data.iter().map(|d| d.tags.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7472_6169));
    let mut best: Option<(f64, ParamStore)> = None;
    model.params.zero_grads();
    for epoch in 0..cfg.main_epochs {
        let lr = lr_schedule(cfg.initial_lr_main, cfg.decay_rate, epoch);
        for batch_idx in epoch_batches(&lengths, cfg.batch_size, &mut rng) {
            let feats: Vec<&[Vec<usize>]> = batch_idx
                .iter()
                .map(|&i| data[i].features.as_slice())
                .collect();
            let tags: Vec<&[usize]> = batch_idx.iter().map(|&i| data[i].tags.as_slice()).collect();
            let batch = Batch::new(&feats, Some(&tags));
            let grads = {
                let mut g = Graph::new(&model.params);
                let mut drop_rng: Option<&mut dyn rand::RngCore> = Some(&mut rng);
                let loss = model.batch_loss(&mut g, &batch, &mut drop_rng);
                g.backward(loss)
            };
            grads.accumulate_into(&mut model.params);
            clip_store_grads(&mut model.params, cfg.grad_clip_norm);
            adagrad_update_all(&mut model.params, lr);
        }
        let f1 = evaluate_model(&model, dev, transducer).f1;
        log::info!("epoch {}: dev F1 {f1:.4}", epoch + 1);
        log.dev_f1.push(f1);
        if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
            best = Some((f1, model.params.clone()));
            log.best_epoch = Some(epoch);
        }
    }
    if let Some((_, params)) = best {
        model.params.copy_values_from(&params);
    }
    Ok((model, log))
}

/// The segmentation of one raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub units: UnitSequence,
    /// Repaired tags, one per unit.
    pub tags: Vec<BoundaryTag>,
    pub segments: Vec<Segment>,
}

impl Prediction {
    /// Syntactic words, multiword tokens expanded by `transducer`.
    pub fn words(&self, transducer: &dyn Transduce) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.segments {
            match s.kind {
                SegmentKind::Word => out.push(s.surface.clone()),
                SegmentKind::Multiword => out.extend(transducer.transduce(&s.surface)),
            }
        }
        out
    }

    pub fn mwt_surfaces(&self) -> Vec<&str> {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Multiword)
            .map(|s| s.surface.as_str())
            .collect()
    }

    /// A CoNLL-U sentence with range lines for expanded multiword tokens.
    pub fn to_sentence(&self, transducer: &dyn Transduce) -> Sentence {
        let specs: Vec<SegmentSpec> = self
            .segments
            .iter()
            .map(|s| SegmentSpec {
                surface: s.surface.clone(),
                words: match s.kind {
                    SegmentKind::Word => vec![s.surface.clone()],
                    SegmentKind::Multiword => transducer.transduce(&s.surface),
                },
                space_after: s.space_after,
            })
            .collect();
        Sentence::from_segments(Some(self.units.text.clone()), &specs)
    }
}

/// Segments raw texts. Texts longer than [`MAX_PIECE_LEN`] units are decoded
/// piecewise and the tag sequences concatenated.
pub fn predict(model: &SegModel, texts: &[String]) -> Vec<Prediction> {
    let units: Vec<UnitSequence> = texts.iter().map(|t| unitize(t, model.unit_mode)).collect();
    // (sentence, start, features of the piece)
    let mut pieces: Vec<(usize, usize, Vec<Vec<usize>>)> = Vec::new();
    for (si, u) in units.iter().enumerate() {
        let feats = model.vocab.features(&u.units);
        for (a, b) in piece_ranges(u.len()) {
            pieces.push((si, a, feats.iter().map(|f| f[a..b].to_vec()).collect()));
        }
    }
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.sort_by_key(|&i| pieces[i].2[0].len());
    let mut tag_idx: Vec<Vec<usize>> = units.iter().map(|u| vec![0; u.len()]).collect();
    for chunk in order.chunks(PREDICT_BATCH) {
        let feats: Vec<&[Vec<usize>]> = chunk.iter().map(|&i| pieces[i].2.as_slice()).collect();
        let batch = Batch::new(&feats, None);
        for (&i, path) in chunk.iter().zip(model.decode_batch(&batch)) {
            let (si, start, _) = &pieces[i];
            tag_idx[*si][*start..*start + path.len()].copy_from_slice(&path);
        }
    }
    units
        .into_iter()
        .zip(tag_idx)
        .map(|(units, idx)| {
            let raw: Vec<BoundaryTag> = idx.iter().map(|&i| model.tagset[i]).collect();
            let tags = repair_tags(&raw);
            let segments = decode_tags(&units, &tags).expect("one tag per unit");
            Prediction {
                units,
                tags,
                segments,
            }
        })
        .collect()
}
