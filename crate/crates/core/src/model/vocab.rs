use std::collections::{BTreeMap, HashMap};

/// Marks positions before the first unit.
pub const BOS: &str = "\u{2}";
/// Marks positions after the last unit.
pub const EOS: &str = "\u{3}";
const JOIN: char = '\u{1}';

pub const UNK_INDEX: usize = 0;

/// Index map of one n-gram order. Index 0 is the order's UNK entry; terms
/// seen only once in training are not indexed and fall back to it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NgramVocab {
    pub index: HashMap<String, usize>,
    pub counts: BTreeMap<String, usize>,
}

impl NgramVocab {
    fn from_counts(counts: BTreeMap<String, usize>) -> Self {
        let mut index = HashMap::new();
        for (term, &n) in &counts {
            if n >= 2 {
                index.insert(term.clone(), index.len() + 1);
            }
        }
        NgramVocab { index, counts }
    }

    /// Number of embedding rows, UNK included.
    pub fn size(&self) -> usize {
        self.index.len() + 1
    }

    pub fn lookup(&self, term: &str) -> usize {
        self.index.get(term).copied().unwrap_or(UNK_INDEX)
    }

    /// Terms sorted by index.
    pub fn entries(&self) -> Vec<(&str, usize)> {
        let mut e: Vec<(&str, usize)> = self.index.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        e.sort_by_key(|&(_, i)| i);
        e
    }
}

/// Unigram, and optionally bigram and trigram, vocabularies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pub orders: Vec<NgramVocab>,
}

/// The n-gram keys of position `i`: the unit itself, the bigram ending at it
/// and the trigram centred on it.
pub fn ngram_keys(units: &[String], i: usize, orders: usize) -> Vec<String> {
    let prev = if i == 0 { BOS } else { units[i - 1].as_str() };
    let next = units.get(i + 1).map_or(EOS, String::as_str);
    let cur = units[i].as_str();
    let mut keys = vec![cur.to_string()];
    if orders > 1 {
        keys.push(format!("{prev}{JOIN}{cur}"));
    }
    if orders > 2 {
        keys.push(format!("{prev}{JOIN}{cur}{JOIN}{next}"));
    }
    keys
}

impl Vocab {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a [String]>, uses_ngrams: bool) -> Self {
        let orders = if uses_ngrams { 3 } else { 1 };
        let mut counts = vec![BTreeMap::<String, usize>::new(); orders];
        for units in sentences {
            for i in 0..units.len() {
                for (o, key) in ngram_keys(units, i, orders).into_iter().enumerate() {
                    *counts[o].entry(key).or_default() += 1;
                }
            }
        }
        Vocab {
            orders: counts.into_iter().map(NgramVocab::from_counts).collect(),
        }
    }

    pub fn uses_ngrams(&self) -> bool {
        self.orders.len() > 1
    }

    /// Per-order index sequences for a unit sequence.
    pub fn features(&self, units: &[String]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::with_capacity(units.len()); self.orders.len()];
        for i in 0..units.len() {
            for (o, key) in ngram_keys(units, i, self.orders.len()).iter().enumerate() {
                out[o].push(self.orders[o].lookup(key));
            }
        }
        out
    }

    /// Bigram and trigram maps, empty when n-grams are disabled.
    pub fn bigrams(&self) -> Option<&NgramVocab> {
        self.orders.get(1)
    }

    pub fn trigrams(&self) -> Option<&NgramVocab> {
        self.orders.get(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    #[test]
    fn singletons_fall_back_to_unk() {
        let corpus = [units("aa"), units("aa")];
        let v = Vocab::build(corpus.iter().map(Vec::as_slice), false);
        assert_eq!(v.orders.len(), 1);
        assert_eq!(v.orders[0].size(), 2);
        assert_eq!(v.orders[0].lookup("a"), 1);
        assert_eq!(v.orders[0].lookup("b"), UNK_INDEX);
        assert!(v.bigrams().is_none());
    }

    #[test]
    fn bigram_seen_once_is_unk() {
        let corpus = [units("xy"), units("yy")];
        let v = Vocab::build(corpus.iter().map(Vec::as_slice), true);
        let f = v.features(&units("xy"));
        // x occurs once, y three times
        assert_eq!(f[0], vec![UNK_INDEX, v.orders[0].lookup("y")]);
        assert_ne!(f[0][1], UNK_INDEX);
        // the bigram x->y occurs once
        assert_eq!(f[1][1], UNK_INDEX);
    }

    #[test]
    fn boundary_symbols() {
        let u = units("ab");
        let keys = ngram_keys(&u, 0, 3);
        assert_eq!(keys[1], format!("{BOS}\u{1}a"));
        assert_eq!(keys[2], format!("{BOS}\u{1}a\u{1}b"));
        let keys = ngram_keys(&u, 1, 3);
        assert_eq!(keys[2], format!("a\u{1}b\u{1}{EOS}"));
    }
}
