//! Boundary tags over character or syllable units.
//!
//! Plain tags `B I E S` mark word positions, `X` marks units outside every
//! token, and the overlined variants mark multiword tokens whose words do not
//! concatenate back to the surface and therefore have to be transduced.

use std::fmt;

use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::conllu::{is_segmental, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    B,
    I,
    E,
    S,
    X,
    BBar,
    IBar,
    EBar,
    SBar,
}

impl BoundaryTag {
    pub const PLAIN: [BoundaryTag; 5] = [Self::B, Self::I, Self::E, Self::S, Self::X];
    pub const ALL: [BoundaryTag; 9] = [
        Self::B,
        Self::I,
        Self::E,
        Self::S,
        Self::X,
        Self::BBar,
        Self::IBar,
        Self::EBar,
        Self::SBar,
    ];

    pub fn is_overlined(self) -> bool {
        matches!(self, Self::BBar | Self::IBar | Self::EBar | Self::SBar)
    }

    fn with_overline(self, overlined: bool) -> Self {
        use BoundaryTag::*;
        match (self.base(), overlined) {
            (B, true) => BBar,
            (I, true) => IBar,
            (E, true) => EBar,
            (S, true) => SBar,
            (b, _) => b,
        }
    }

    /// The plain tag with the overline removed.
    pub fn base(self) -> Self {
        use BoundaryTag::*;
        match self {
            BBar => B,
            IBar => I,
            EBar => E,
            SBar => S,
            t => t,
        }
    }

    /// Debug-format name: overlined tags carry a trailing `*`.
    pub fn as_str(self) -> &'static str {
        use BoundaryTag::*;
        match self {
            B => "B",
            I => "I",
            E => "E",
            S => "S",
            X => "X",
            BBar => "B*",
            IBar => "I*",
            EBar => "E*",
            SBar => "S*",
        }
    }

    /// Rendering with a combining macron, e.g. `B̄`.
    pub fn as_overlined_str(self) -> &'static str {
        use BoundaryTag::*;
        match self {
            BBar => "B\u{304}",
            IBar => "I\u{304}",
            EBar => "E\u{304}",
            SBar => "S\u{304}",
            t => t.as_str(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s || t.as_overlined_str() == s)
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Renders a tag sequence as one string using combining macrons.
pub fn tags_to_string(tags: &[BoundaryTag]) -> String {
    tags.iter().map(|t| t.as_overlined_str()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitMode {
    Character,
    Syllable,
}

impl UnitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitMode::Character => "character",
            UnitMode::Syllable => "syllable",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "character" | "char" => Some(UnitMode::Character),
            "syllable" => Some(UnitMode::Syllable),
            _ => None,
        }
    }
}

/// Units of a raw text together with their character spans in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSequence {
    pub units: Vec<String>,
    pub mode: UnitMode,
    /// `[start, end)` in Unicode scalar values of `text`.
    pub spans: Vec<(usize, usize)>,
    pub text: String,
}

impl UnitSequence {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// The raw text from the start of unit `first` to the end of unit `last`.
    pub fn surface(&self, first: usize, last: usize) -> String {
        let (start, _) = self.spans[first];
        let (_, end) = self.spans[last];
        self.text.chars().skip(start).take(end - start).collect()
    }
}

fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

pub fn unitize(raw_text: &str, mode: UnitMode) -> UnitSequence {
    let chars: Vec<char> = raw_text.chars().collect();
    let mut units = Vec::new();
    let mut spans = Vec::new();
    match mode {
        UnitMode::Character => {
            for (i, c) in chars.iter().enumerate() {
                units.push(c.to_string());
                spans.push((i, i + 1));
            }
        }
        UnitMode::Syllable => {
            let mut i = 0;
            while i < chars.len() {
                if chars[i].is_whitespace() {
                    i += 1;
                    continue;
                }
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() {
                    i += 1;
                }
                let end = i;
                // leading and trailing punctuation become units of their own
                let mut lo = start;
                while lo < end && is_punctuation(chars[lo]) {
                    units.push(chars[lo].to_string());
                    spans.push((lo, lo + 1));
                    lo += 1;
                }
                let mut hi = end;
                while hi > lo && is_punctuation(chars[hi - 1]) {
                    hi -= 1;
                }
                if lo < hi {
                    units.push(chars[lo..hi].iter().collect());
                    spans.push((lo, hi));
                }
                for (k, c) in chars.iter().enumerate().take(end).skip(hi) {
                    units.push(c.to_string());
                    spans.push((k, k + 1));
                }
            }
        }
    }
    UnitSequence {
        units,
        mode,
        spans,
        text: raw_text.to_string(),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TagError {
    #[error("token {token} ({form:?}) not found in sentence text at character {position}")]
    TokenNotFound {
        token: usize,
        form: String,
        position: usize,
    },
    #[error("token {token} ({form:?}) does not align with unit boundaries")]
    UnitMisaligned { token: usize, form: String },
    #[error("unit and tag counts differ ({units} vs {tags})")]
    LengthMismatch { units: usize, tags: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn tag_span(tags: &mut [BoundaryTag], first: usize, last: usize, overlined: bool) {
    use BoundaryTag::*;
    if first == last {
        tags[first] = S.with_overline(overlined);
        return;
    }
    tags[first] = B.with_overline(overlined);
    for t in &mut tags[first + 1..last] {
        *t = I.with_overline(overlined);
    }
    tags[last] = E.with_overline(overlined);
}

/// Index of the units exactly covering the char span `[start, end)`.
fn units_covering(units: &UnitSequence, start: usize, end: usize) -> Option<(usize, usize)> {
    let first = units.spans.iter().position(|&(s, _)| s == start)?;
    let last = units.spans.iter().rposition(|&(_, e)| e == end)?;
    if last < first {
        return None;
    }
    // no unit may straddle either boundary
    if units.spans[first..=last]
        .iter()
        .any(|&(s, e)| s < start || e > end)
    {
        return None;
    }
    Some((first, last))
}

/// Gold tags for a sentence over the given units.
pub fn encode_tags(
    sentence: &Sentence,
    units: &UnitSequence,
) -> Result<Vec<BoundaryTag>, TagError> {
    let text: Vec<char> = units.text.chars().collect();
    let mut tags = vec![BoundaryTag::X; units.len()];
    let mut cursor = 0usize;
    for (ti, token) in sentence.tokens.iter().enumerate() {
        let form: Vec<char> = token.form.chars().collect();
        while cursor < text.len() && text[cursor].is_whitespace() && !form[0].is_whitespace() {
            cursor += 1;
        }
        let not_found = || TagError::TokenNotFound {
            token: ti + 1,
            form: token.form.clone(),
            position: cursor,
        };
        let start = if text[cursor.min(text.len())..].starts_with(&form) {
            cursor
        } else {
            // characters outside any token are skipped and stay X
            (cursor..text.len())
                .find(|&p| text[p..].starts_with(&form))
                .ok_or_else(not_found)?
        };
        let end = start + form.len();
        let misaligned = || TagError::UnitMisaligned {
            token: ti + 1,
            form: token.form.clone(),
        };
        let words = sentence.token_words(token);
        if token.is_multiword_range && !is_segmental(&token.form, words) {
            let (first, last) = units_covering(units, start, end).ok_or_else(misaligned)?;
            tag_span(&mut tags, first, last, true);
        } else if token.is_multiword_range {
            let mut wstart = start;
            for w in words {
                let wend = wstart + w.form.chars().count();
                let (first, last) = units_covering(units, wstart, wend).ok_or_else(misaligned)?;
                tag_span(&mut tags, first, last, false);
                wstart = wend;
            }
        } else {
            let (first, last) = units_covering(units, start, end).ok_or_else(misaligned)?;
            tag_span(&mut tags, first, last, false);
        }
        cursor = end;
    }
    Ok(tags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Word,
    /// A non-segmental multiword token still to be transduced.
    Multiword,
}

/// A decoded span of units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub surface: String,
    pub kind: SegmentKind,
    pub first_unit: usize,
    pub last_unit: usize,
    /// Whether whitespace follows the segment in the raw text.
    pub space_after: bool,
}

/// Splits units into words and multiword-token surfaces. Tags are repaired
/// first so any sequence decodes.
pub fn decode_tags(units: &UnitSequence, tags: &[BoundaryTag]) -> Result<Vec<Segment>, TagError> {
    if units.len() != tags.len() {
        return Err(TagError::LengthMismatch {
            units: units.len(),
            tags: tags.len(),
        });
    }
    let tags = repair_tags(tags);
    let chars: Vec<char> = units.text.chars().collect();
    let mut segments = Vec::new();
    let mut open: Option<usize> = None;
    for (i, tag) in tags.iter().enumerate() {
        let close = match tag.base() {
            BoundaryTag::B => {
                open = Some(i);
                None
            }
            BoundaryTag::I => None,
            BoundaryTag::E => open.take().map(|s| (s, i)),
            BoundaryTag::S => Some((i, i)),
            _ => None,
        };
        if let Some((first, last)) = close {
            let end = units.spans[last].1;
            segments.push(Segment {
                surface: units.surface(first, last),
                kind: if tag.is_overlined() {
                    SegmentKind::Multiword
                } else {
                    SegmentKind::Word
                },
                first_unit: first,
                last_unit: last,
                space_after: chars.get(end).is_some_and(|c| c.is_whitespace()),
            });
        }
    }
    Ok(segments)
}

/// Word surfaces and multiword-token surfaces of a decoding.
pub fn split_segments(segments: &[Segment]) -> (Vec<String>, Vec<String>) {
    let mut words = Vec::new();
    let mut mwts = Vec::new();
    for s in segments {
        match s.kind {
            SegmentKind::Word => words.push(s.surface.clone()),
            SegmentKind::Multiword => mwts.push(s.surface.clone()),
        }
    }
    (words, mwts)
}

/// Left-to-right repair into a sequence of well-formed spans.
pub fn repair_tags(tags: &[BoundaryTag]) -> Vec<BoundaryTag> {
    use BoundaryTag::*;
    let mut out: Vec<BoundaryTag> = Vec::with_capacity(tags.len());
    // overline flag of the currently open span
    let mut open: Option<bool> = None;

    fn close_previous(out: &mut [BoundaryTag]) {
        if let Some(prev) = out.last_mut() {
            let ov = prev.is_overlined();
            *prev = match prev.base() {
                B => S.with_overline(ov),
                I => E.with_overline(ov),
                _ => *prev,
            };
        }
    }

    for &tag in tags {
        let ov = tag.is_overlined();
        let fixed = match tag.base() {
            X => {
                if open.take().is_some() {
                    close_previous(&mut out);
                }
                X
            }
            B => {
                if open.is_some() {
                    close_previous(&mut out);
                }
                open = Some(ov);
                tag
            }
            I => match open {
                Some(o) if o == ov => tag,
                Some(_) => {
                    close_previous(&mut out);
                    open = Some(ov);
                    B.with_overline(ov)
                }
                None => {
                    open = Some(ov);
                    B.with_overline(ov)
                }
            },
            E => match open {
                Some(o) if o == ov => {
                    open = None;
                    tag
                }
                Some(_) => {
                    close_previous(&mut out);
                    open = None;
                    S.with_overline(ov)
                }
                None => S.with_overline(ov),
            },
            _ => {
                if open.take().is_some() {
                    close_previous(&mut out);
                }
                tag
            }
        };
        out.push(fixed);
    }
    if open.is_some() {
        close_previous(&mut out);
    }
    out
}

/// `unit<TAB>tag` lines, blank line after each sentence.
pub fn write_tag_debug(sentences: &[(UnitSequence, Vec<BoundaryTag>)]) -> String {
    let mut out = String::new();
    for (units, tags) in sentences {
        for (u, t) in units.units.iter().zip(tags) {
            out.push_str(u);
            out.push('\t');
            out.push_str(t.as_str());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Units and tags of one sentence in the debug format.
pub type DebugSentence = (Vec<String>, Vec<BoundaryTag>);

pub fn read_tag_debug(input: &str) -> Result<Vec<DebugSentence>, TagError> {
    let mut out = Vec::new();
    let mut units = Vec::new();
    let mut tags = Vec::new();
    for (i, line) in input.split('\n').enumerate() {
        if line.is_empty() {
            if !units.is_empty() {
                out.push((std::mem::take(&mut units), std::mem::take(&mut tags)));
            }
            continue;
        }
        let (unit, tag) = line.rsplit_once('\t').ok_or_else(|| TagError::Format {
            line: i + 1,
            message: "missing tab".into(),
        })?;
        let tag = BoundaryTag::parse(tag).ok_or_else(|| TagError::Format {
            line: i + 1,
            message: format!("unknown tag {tag:?}"),
        })?;
        units.push(unit.to_string());
        tags.push(tag);
    }
    if !units.is_empty() {
        out.push((units, tags));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{SegmentSpec, Sentence};
    use BoundaryTag::*;

    fn seg(surface: &str, words: &[&str], space_after: bool) -> SegmentSpec {
        SegmentSpec {
            surface: surface.into(),
            words: words.iter().map(|w| w.to_string()).collect(),
            space_after,
        }
    }

    #[test]
    fn unitize_modes() {
        let u = unitize("ab c", UnitMode::Character);
        assert_eq!(u.units, vec!["a", "b", " ", "c"]);
        let u = unitize("xin chào!", UnitMode::Syllable);
        assert_eq!(u.units, vec!["xin", "chào", "!"]);
        let u = unitize("a, b", UnitMode::Syllable);
        assert_eq!(u.units, vec!["a", ",", "b"]);
        let u = unitize("(tôi)", UnitMode::Syllable);
        assert_eq!(u.units, vec!["(", "tôi", ")"]);
        assert_eq!(u.surface(0, 2), "(tôi)");
    }

    #[test]
    fn chinese_example() {
        let s = Sentence::from_segments(
            None,
            &[
                seg("夏天", &["夏天"], false),
                seg("太", &["太"], false),
                seg("热", &["热"], false),
            ],
        );
        let units = unitize("夏天太热", UnitMode::Character);
        assert_eq!(encode_tags(&s, &units).unwrap(), vec![B, E, S, S]);
    }

    #[test]
    fn arabic_split_and_transduced() {
        // wamimma: و + مما when split, و + من + ما when transduced
        let split = Sentence::from_segments(None, &[seg("ومما", &["و", "مما"], true)]);
        let units = unitize("ومما", UnitMode::Character);
        assert_eq!(encode_tags(&split, &units).unwrap(), vec![S, B, I, E]);
        let transduced = Sentence::from_segments(None, &[seg("ومما", &["و", "من", "ما"], true)]);
        assert_eq!(
            encode_tags(&transduced, &units).unwrap(),
            vec![BBar, IBar, IBar, EBar]
        );
    }

    #[test]
    fn syllable_mode_words_with_spaces() {
        let s = Sentence::from_segments(
            None,
            &[
                seg("xin chào", &["xin chào"], false),
                seg("!", &["!"], true),
            ],
        );
        let units = unitize("xin chào!", UnitMode::Syllable);
        let tags = encode_tags(&s, &units).unwrap();
        assert_eq!(tags, vec![B, E, S]);
        let (words, mwts) = split_segments(&decode_tags(&units, &tags).unwrap());
        assert_eq!(words, vec!["xin chào", "!"]);
        assert!(mwts.is_empty());
    }

    #[test]
    fn decode_examples() {
        let units = unitize("abc", UnitMode::Character);
        let (w, _) = split_segments(&decode_tags(&units, &[S, S, S]).unwrap());
        assert_eq!(w, vec!["a", "b", "c"]);
        let units = unitize("ab c", UnitMode::Character);
        let segs = decode_tags(&units, &[B, E, X, S]).unwrap();
        let (w, _) = split_segments(&segs);
        assert_eq!(w, vec!["ab", "c"]);
        assert!(segs[0].space_after);
        assert!(!segs[1].space_after);
    }

    #[test]
    fn repair_examples() {
        assert_eq!(repair_tags(&[I, I]), vec![B, E]);
        assert_eq!(repair_tags(&[B, X]), vec![S, X]);
        let valid = vec![B, I, E, X, S, BBar, EBar, SBar];
        assert_eq!(repair_tags(&valid), valid);
        // plain to overlined switch inside an open span
        assert_eq!(repair_tags(&[B, IBar, EBar]), vec![S, BBar, EBar]);
        assert_eq!(repair_tags(&[B, I, EBar]), vec![B, E, SBar]);
    }

    #[test]
    fn length_mismatch() {
        let units = unitize("ab", UnitMode::Character);
        assert!(matches!(
            decode_tags(&units, &[S]),
            Err(TagError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn debug_format_round_trip() {
        let units = unitize("du", UnitMode::Character);
        let text = write_tag_debug(&[(units, vec![BBar, EBar])]);
        assert_eq!(text, "d\tB*\nu\tE*\n\n");
        let back = read_tag_debug(&text).unwrap();
        assert_eq!(
            back,
            vec![(vec!["d".to_string(), "u".to_string()], vec![BBar, EBar])]
        );
    }

    #[test]
    fn misplaced_token_is_an_error() {
        let s = Sentence::from_segments(None, &[seg("zz", &["zz"], true)]);
        let units = unitize("ab", UnitMode::Character);
        assert!(matches!(
            encode_tags(&s, &units),
            Err(TagError::TokenNotFound { .. })
        ));
    }
}
