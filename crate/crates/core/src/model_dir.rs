//! On-disk model directory: `meta`, `vocab.tsv`, `params.bin`, `mwt.tsv`
//! and `train.log`. Every file is written deterministically so identical
//! models give byte-identical directories.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::train::TrainLog;
use crate::model::vocab::NgramVocab;
use crate::model::{SegModel, Vocab};
use crate::mwt::{
    read_table, write_table, CharVocab, EncDecLog, Transducer, TransducerModel, TransductionPolicy,
};
use crate::numeric::{ParamStore, Tensor, TrainConfig};
use crate::tags::{BoundaryTag, UnitMode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Format { file: String, message: String },
    #[error("unsupported model format version {0} (expected {FORMAT_VERSION})")]
    Version(String),
}

fn format_err(file: &str, message: impl Into<String>) -> ModelError {
    ModelError::Format {
        file: file.to_string(),
        message: message.into(),
    }
}

/// A trained segmenter with its multiword-token transducer.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub segmenter: SegModel,
    pub transducer: Transducer,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(format!(
                    "bad escape \\{}",
                    other.map_or(String::new(), String::from)
                ))
            }
        }
    }
    Ok(out)
}

fn write_meta(bundle: &ModelBundle) -> String {
    let seg = &bundle.segmenter;
    let c = &seg.config;
    let tagset: Vec<&str> = seg.tagset.iter().map(|t| t.as_str()).collect();
    let sizes: Vec<String> = seg
        .vocab
        .orders
        .iter()
        .map(|o| o.size().to_string())
        .collect();
    let mut m = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(m, "{k}={v}");
    };
    kv("format_version", FORMAT_VERSION.to_string());
    kv("unit_mode", seg.unit_mode.as_str().to_string());
    kv("uses_ngrams", seg.uses_ngrams().to_string());
    kv("tagset", tagset.join(","));
    kv("vocab_sizes", sizes.join(","));
    kv("char_embedding_size", c.char_embedding_size.to_string());
    kv("rnn_state_size", c.rnn_state_size.to_string());
    kv("initial_lr_main", c.initial_lr_main.to_string());
    kv("decay_rate", c.decay_rate.to_string());
    kv("grad_clip_norm", c.grad_clip_norm.to_string());
    kv("initial_lr_encdec", c.initial_lr_encdec.to_string());
    kv("dropout_rate", c.dropout_rate.to_string());
    kv("batch_size", c.batch_size.to_string());
    kv("main_epochs", c.main_epochs.to_string());
    kv("encdec_epochs", c.encdec_epochs.to_string());
    kv("seed", c.seed.to_string());
    kv(
        "has_encdec",
        bundle.transducer.policy.has_encdec.to_string(),
    );
    match &bundle.transducer.model {
        Some(t) => {
            kv("mwt_model", "true".into());
            kv("mwt_embedding_size", t.embedding_size.to_string());
            kv("mwt_state_size", t.state_size.to_string());
            kv("mwt_share_weights", t.share_weights.to_string());
        }
        None => kv("mwt_model", "false".into()),
    }
    m
}

fn write_vocab(bundle: &ModelBundle) -> String {
    let mut out = String::new();
    for (o, order) in bundle.segmenter.vocab.orders.iter().enumerate() {
        for (term, idx) in order.entries() {
            let _ = writeln!(out, "{}\t{}\t{idx}", o + 1, escape(term));
        }
    }
    if let Some(t) = &bundle.transducer.model {
        for (i, c) in t.vocab.chars.iter().enumerate() {
            let _ = writeln!(out, "mwt\t{}\t{}", escape(&c.to_string()), i + 4);
        }
    }
    out
}

fn write_params(out: &mut Vec<u8>, store: &ParamStore) {
    for p in store.iter() {
        out.extend_from_slice(&(p.name.len() as u64).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u64).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in p.value.data() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
}

fn write_log(log: &TrainLog, encdec: Option<&EncDecLog>) -> String {
    let mut out = String::from("stage\tepoch\tmetric\tvalue\n");
    for (e, f1) in log.dev_f1.iter().enumerate() {
        let _ = writeln!(out, "main\t{}\tdev_f1\t{f1}", e + 1);
    }
    if let Some(e) = log.best_epoch {
        let _ = writeln!(out, "main\t{}\tbest\t{}", e + 1, log.dev_f1[e]);
    }
    if let Some(enc) = encdec {
        for (e, (acc, mfs)) in enc
            .validation_acc
            .iter()
            .zip(&enc.validation_mfs)
            .enumerate()
        {
            let _ = writeln!(out, "encdec\t{}\tvalidation_acc\t{acc}", e + 1);
            let _ = writeln!(out, "encdec\t{}\tvalidation_mfs\t{mfs}", e + 1);
        }
        if let Some(e) = enc.best_epoch {
            let _ = writeln!(out, "encdec\t{}\tbest\t{}", e + 1, enc.validation_acc[e]);
        }
    }
    out
}

fn write_file(dir: &Path, name: &str, data: &[u8]) -> Result<(), ModelError> {
    let path = dir.join(name);
    fs::write(&path, data).map_err(|source| ModelError::Io { path, source })
}

/// Writes the model directory, creating it if needed.
pub fn save(
    dir: &Path,
    bundle: &ModelBundle,
    log: &TrainLog,
    encdec: Option<&EncDecLog>,
) -> Result<(), ModelError> {
    fs::create_dir_all(dir).map_err(|source| ModelError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut params = Vec::new();
    write_params(&mut params, &bundle.segmenter.params);
    if let Some(t) = &bundle.transducer.model {
        write_params(&mut params, &t.params);
    }
    write_file(dir, "meta", write_meta(bundle).as_bytes())?;
    write_file(dir, "vocab.tsv", write_vocab(bundle).as_bytes())?;
    write_file(dir, "params.bin", &params)?;
    write_file(
        dir,
        "mwt.tsv",
        write_table(&bundle.transducer.table).as_bytes(),
    )?;
    write_file(dir, "train.log", write_log(log, encdec).as_bytes())?;
    Ok(())
}

fn read_text(dir: &Path, name: &str) -> Result<String, ModelError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|source| ModelError::Io { path, source })
}

struct Meta(BTreeMap<String, String>);

impl Meta {
    fn parse(text: &str) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err("meta", format!("line {}: expected key=value", i + 1)))?;
            map.insert(k.to_string(), v.to_string());
        }
        Ok(Meta(map))
    }

    fn raw(&self, key: &str) -> Result<&str, ModelError> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| format_err("meta", format!("missing key {key}")))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, ModelError> {
        let v = self.raw(key)?;
        v.parse()
            .map_err(|_| format_err("meta", format!("bad value for {key}: {v}")))
    }
}

type Record = (String, Vec<usize>, Vec<f64>);

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err("params.bin", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize, ModelError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize)
    }
}

fn read_params(bytes: &[u8]) -> Result<Vec<Record>, ModelError> {
    let err = |m: &str| format_err("params.bin", m);
    let mut cur = Cursor { bytes, pos: 0 };
    let mut records = Vec::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u64()?;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| err("parameter name is not UTF-8"))?;
        let rank = cur.u64()?;
        if rank > 8 {
            return Err(err("implausible rank"));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64()?);
        }
        let n = shape
            .iter()
            .try_fold(4usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| err("implausible size"))?;
        let data = cur
            .take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        records.push((name, shape, data));
    }
    Ok(records)
}

fn assign(store: &mut ParamStore, records: &mut HashMap<String, Record>) -> Result<(), ModelError> {
    for p in store.iter_mut() {
        let (_, shape, data) = records
            .remove(&p.name)
            .ok_or_else(|| format_err("params.bin", format!("missing parameter {}", p.name)))?;
        if shape != p.value.shape() {
            return Err(format_err(
                "params.bin",
                format!(
                    "parameter {} has shape {shape:?}, expected {:?}",
                    p.name,
                    p.value.shape()
                ),
            ));
        }
        p.value = Tensor::new(shape, data);
    }
    Ok(())
}

fn parse_bool(meta: &Meta, key: &str) -> Result<bool, ModelError> {
    meta.get::<bool>(key)
}

/// Reads a model directory written by [`save`].
pub fn load(dir: &Path) -> Result<ModelBundle, ModelError> {
    let meta = Meta::parse(&read_text(dir, "meta")?)?;
    let version = meta.raw("format_version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(ModelError::Version(version.to_string()));
    }
    let unit_mode = UnitMode::parse(meta.raw("unit_mode")?)
        .ok_or_else(|| format_err("meta", "unknown unit_mode"))?;
    let uses_ngrams = parse_bool(&meta, "uses_ngrams")?;
    let tagset = meta
        .raw("tagset")?
        .split(',')
        .map(|t| {
            BoundaryTag::parse(t).ok_or_else(|| format_err("meta", format!("unknown tag {t}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let config = TrainConfig {
        char_embedding_size: meta.get("char_embedding_size")?,
        rnn_state_size: meta.get("rnn_state_size")?,
        initial_lr_main: meta.get("initial_lr_main")?,
        decay_rate: meta.get("decay_rate")?,
        grad_clip_norm: meta.get("grad_clip_norm")?,
        initial_lr_encdec: meta.get("initial_lr_encdec")?,
        dropout_rate: meta.get("dropout_rate")?,
        batch_size: meta.get("batch_size")?,
        main_epochs: meta.get("main_epochs")?,
        encdec_epochs: meta.get("encdec_epochs")?,
        seed: meta.get("seed")?,
    };

    let orders = if uses_ngrams { 3 } else { 1 };
    let mut indices = vec![HashMap::new(); orders];
    let mut mwt_chars: Vec<(usize, char)> = Vec::new();
    for (i, line) in read_text(dir, "vocab.tsv")?.lines().enumerate() {
        let bad = |m: String| format_err("vocab.tsv", format!("line {}: {m}", i + 1));
        let mut cols = line.split('\t');
        let (Some(order), Some(surface), Some(index), None) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(bad("expected three columns".into()));
        };
        let surface = unescape(surface).map_err(bad)?;
        let index: usize = index
            .parse()
            .map_err(|_| bad(format!("bad index {index}")))?;
        if order == "mwt" {
            let mut cs = surface.chars();
            match (cs.next(), cs.next()) {
                (Some(c), None) => mwt_chars.push((index, c)),
                _ => return Err(bad("transducer entry must be one character".into())),
            }
            continue;
        }
        let o: usize = order
            .parse()
            .map_err(|_| bad(format!("bad order {order}")))?;
        if o == 0 || o > orders || index == 0 {
            return Err(bad(format!("order {o} index {index} out of range")));
        }
        indices[o - 1].insert(surface, index);
    }
    let vocab = Vocab {
        orders: indices
            .into_iter()
            .map(|index| NgramVocab {
                index,
                counts: BTreeMap::new(),
            })
            .collect(),
    };
    let sizes: Vec<String> = vocab.orders.iter().map(|o| o.size().to_string()).collect();
    if sizes.join(",") != meta.raw("vocab_sizes")? {
        return Err(format_err("vocab.tsv", "sizes disagree with meta"));
    }

    let bytes = fs::read(dir.join("params.bin")).map_err(|source| ModelError::Io {
        path: dir.join("params.bin"),
        source,
    })?;
    let mut records: HashMap<String, Record> = read_params(&bytes)?
        .into_iter()
        .map(|r| (r.0.clone(), r))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut segmenter = SegModel::new(vocab, unit_mode, tagset, config, &mut rng);
    assign(&mut segmenter.params, &mut records)?;

    let model = if parse_bool(&meta, "mwt_model")? {
        mwt_chars.sort();
        if mwt_chars
            .iter()
            .enumerate()
            .any(|(i, &(idx, _))| idx != i + 4)
        {
            return Err(format_err(
                "vocab.tsv",
                "transducer indices are not contiguous",
            ));
        }
        let chars = CharVocab {
            chars: mwt_chars.into_iter().map(|(_, c)| c).collect(),
        };
        let mut t = TransducerModel::new(
            chars,
            meta.get("mwt_embedding_size")?,
            meta.get("mwt_state_size")?,
            parse_bool(&meta, "mwt_share_weights")?,
            &mut rng,
        );
        assign(&mut t.params, &mut records)?;
        Some(t)
    } else {
        None
    };
    if let Some(name) = records.keys().min() {
        return Err(format_err(
            "params.bin",
            format!("unexpected parameter {name}"),
        ));
    }
    let table = read_table(&read_text(dir, "mwt.tsv")?).map_err(|m| format_err("mwt.tsv", m))?;
    Ok(ModelBundle {
        segmenter,
        transducer: Transducer {
            policy: TransductionPolicy {
                has_encdec: parse_bool(&meta, "has_encdec")?,
            },
            table,
            model,
        },
    })
}
