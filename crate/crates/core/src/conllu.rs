//! CoNLL-U reading and writing.
//!
//! Only the ID, FORM and MISC (`SpaceAfter=No`) columns are interpreted. Every
//! other column is carried through untouched so that a parsed document can be
//! written back out unchanged.

use std::fmt::Write as _;

use thiserror::Error;

pub const COLUMN_COUNT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConlluError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
}

/// A surface token. Plain words have `id_start == id_end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id_start: u32,
    pub id_end: u32,
    pub form: String,
    pub is_multiword_range: bool,
    pub space_after: bool,
}

impl Token {
    pub fn word_count(&self) -> usize {
        (self.id_end - self.id_start + 1) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub id: u32,
    pub form: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Word(u32),
    Range(u32, u32),
    /// Decimal id such as `8.1`; kept for output only.
    Empty,
}

/// One token line with all ten columns kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub kind: LineKind,
    pub columns: Vec<String>,
}

impl Line {
    fn blank(id: String, form: &str, misc: &str) -> Self {
        let mut columns = vec!["_".to_string(); COLUMN_COUNT];
        columns[0] = id;
        columns[1] = form.to_string();
        columns[9] = misc.to_string();
        Line {
            kind: LineKind::Empty,
            columns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    /// Comment lines without the leading `#`, in input order.
    pub comments: Vec<String>,
    pub raw_text: Option<String>,
    pub tokens: Vec<Token>,
    pub words: Vec<Word>,
    pub lines: Vec<Line>,
}

/// How a token of a [`Sentence`] built by [`Sentence::from_segments`] looks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpec {
    pub surface: String,
    /// Syntactic words; a single element for plain tokens.
    pub words: Vec<String>,
    pub space_after: bool,
}

impl Sentence {
    /// Builds a sentence from already segmented tokens, producing range lines
    /// for every token that has more than one word.
    pub fn from_segments(raw_text: Option<String>, segments: &[SegmentSpec]) -> Self {
        let mut lines = Vec::new();
        let mut next_id = 1u32;
        for seg in segments {
            let misc = if seg.space_after {
                "_"
            } else {
                "SpaceAfter=No"
            };
            if seg.words.len() > 1 {
                let end = next_id + seg.words.len() as u32 - 1;
                let mut line = Line::blank(format!("{next_id}-{end}"), &seg.surface, misc);
                line.kind = LineKind::Range(next_id, end);
                lines.push(line);
                for w in &seg.words {
                    let mut line = Line::blank(next_id.to_string(), w, "_");
                    line.kind = LineKind::Word(next_id);
                    lines.push(line);
                    next_id += 1;
                }
            } else {
                let form = seg.words.first().unwrap_or(&seg.surface);
                let mut line = Line::blank(next_id.to_string(), form, misc);
                line.kind = LineKind::Word(next_id);
                lines.push(line);
                next_id += 1;
            }
        }
        let mut comments = Vec::new();
        if let Some(text) = &raw_text {
            comments.push(format!(" text = {text}"));
        }
        let (tokens, words) = derive_structure(&lines);
        Sentence {
            comments,
            raw_text,
            tokens,
            words,
            lines,
        }
    }

    pub fn word_forms(&self) -> Vec<&str> {
        self.words.iter().map(|w| w.form.as_str()).collect()
    }

    /// The words covered by `token`.
    pub fn token_words(&self, token: &Token) -> &[Word] {
        let start = self
            .words
            .iter()
            .position(|w| w.id == token.id_start)
            .unwrap_or(self.words.len());
        let end = (start + token.word_count()).min(self.words.len());
        &self.words[start..end]
    }

    /// True when the token's words do not concatenate back to its surface.
    pub fn is_non_segmental(&self, token: &Token) -> bool {
        token.is_multiword_range && !is_segmental(&token.form, self.token_words(token))
    }

    /// Text rebuilt from token forms and their `SpaceAfter` flags.
    pub fn text_from_tokens(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(&t.form);
            if t.space_after && i + 1 < self.tokens.len() {
                out.push(' ');
            }
        }
        out
    }
}

pub fn is_segmental(surface: &str, words: &[Word]) -> bool {
    let mut rest = surface;
    for w in words {
        match rest.strip_prefix(w.form.as_str()) {
            Some(r) => rest = r,
            None => return false,
        }
    }
    rest.is_empty()
}

/// The character stream a sentence was segmented from.
pub fn reconstruct_text(sentence: &Sentence) -> String {
    match &sentence.raw_text {
        Some(t) => t.clone(),
        None => sentence.text_from_tokens(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    pub sentences: Vec<Sentence>,
    pub source_name: String,
    /// Non-fatal findings, e.g. a `# text` comment that disagrees with the
    /// forms. Not part of structural equality in practice, but kept here so
    /// callers can surface them.
    pub warnings: Vec<String>,
}

impl Document {
    pub fn new(source_name: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Document {
            sentences,
            source_name: source_name.into(),
            warnings: Vec::new(),
        }
    }
}

fn text_comment_value(comment: &str) -> Option<&str> {
    let c = comment.trim_start();
    let rest = c.strip_prefix("text")?;
    let rest = rest.trim_start().strip_prefix('=')?;
    Some(rest.strip_prefix(' ').unwrap_or(rest))
}

fn parse_id(field: &str, line: usize) -> Result<LineKind, ConlluError> {
    let bad = || ConlluError::Malformed {
        line,
        message: format!("invalid id {field:?}"),
    };
    if let Some((a, b)) = field.split_once('-') {
        let a: u32 = a.parse().map_err(|_| bad())?;
        let b: u32 = b.parse().map_err(|_| bad())?;
        if a == 0 || b < a {
            return Err(ConlluError::Structure {
                line,
                message: format!("invalid range {field}"),
            });
        }
        if b == a {
            // degenerate `n-n` ranges are not multiword tokens
            return Err(ConlluError::Structure {
                line,
                message: format!("range {field} covers a single word"),
            });
        }
        Ok(LineKind::Range(a, b))
    } else if field.contains('.') {
        let (a, b) = field.split_once('.').ok_or_else(bad)?;
        a.parse::<u32>().map_err(|_| bad())?;
        b.parse::<u32>().map_err(|_| bad())?;
        Ok(LineKind::Empty)
    } else {
        let id: u32 = field.parse().map_err(|_| bad())?;
        if id == 0 {
            return Err(bad());
        }
        Ok(LineKind::Word(id))
    }
}

fn space_after(misc: &str) -> bool {
    !misc.split('|').any(|item| item == "SpaceAfter=No")
}

fn derive_structure(lines: &[Line]) -> (Vec<Token>, Vec<Word>) {
    let mut tokens = Vec::new();
    let mut words = Vec::new();
    let mut covered_until = 0u32;
    for line in lines {
        match line.kind {
            LineKind::Range(a, b) => {
                tokens.push(Token {
                    id_start: a,
                    id_end: b,
                    form: line.columns[1].clone(),
                    is_multiword_range: true,
                    space_after: space_after(&line.columns[9]),
                });
                covered_until = b;
            }
            LineKind::Word(id) => {
                words.push(Word {
                    id,
                    form: line.columns[1].clone(),
                });
                if id > covered_until {
                    tokens.push(Token {
                        id_start: id,
                        id_end: id,
                        form: line.columns[1].clone(),
                        is_multiword_range: false,
                        space_after: space_after(&line.columns[9]),
                    });
                }
            }
            LineKind::Empty => {}
        }
    }
    (tokens, words)
}

/// Checks id order and range coverage; `first_line` is the input line number
/// of `lines[0]`.
fn validate(lines: &[Line], line_numbers: &[usize]) -> Result<(), ConlluError> {
    let mut expected = 1u32;
    let mut open_range: Option<(u32, u32, usize)> = None;
    for (line, &ln) in lines.iter().zip(line_numbers) {
        match line.kind {
            LineKind::Word(id) => {
                if id != expected {
                    return Err(ConlluError::Structure {
                        line: ln,
                        message: format!("expected word id {expected}, found {id}"),
                    });
                }
                expected += 1;
                if let Some((_, b, _)) = open_range {
                    if id >= b {
                        open_range = None;
                    }
                }
            }
            LineKind::Range(a, b) => {
                if let Some((ra, rb, rl)) = open_range {
                    return Err(ConlluError::Structure {
                        line: ln,
                        message: format!(
                            "range {a}-{b} overlaps range {ra}-{rb} opened on line {rl}"
                        ),
                    });
                }
                if a != expected {
                    return Err(ConlluError::Structure {
                        line: ln,
                        message: format!("range {a}-{b} does not start at next word id {expected}"),
                    });
                }
                open_range = Some((a, b, ln));
            }
            LineKind::Empty => {}
        }
    }
    if let Some((a, b, ln)) = open_range {
        return Err(ConlluError::Structure {
            line: ln,
            message: format!("range {a}-{b} covers missing word ids"),
        });
    }
    Ok(())
}

struct PendingSentence {
    comments: Vec<String>,
    lines: Vec<Line>,
    line_numbers: Vec<usize>,
}

impl PendingSentence {
    fn new() -> Self {
        PendingSentence {
            comments: Vec::new(),
            lines: Vec::new(),
            line_numbers: Vec::new(),
        }
    }

    fn is_empty(&self) -> bool {
        self.comments.is_empty() && self.lines.is_empty()
    }

    fn finish(self, warnings: &mut Vec<String>) -> Result<Option<Sentence>, ConlluError> {
        if self.lines.is_empty() {
            // comment-only blocks (e.g. `# newdoc`) carry no sentence
            return Ok(None);
        }
        validate(&self.lines, &self.line_numbers)?;
        let (tokens, words) = derive_structure(&self.lines);
        let raw_text = self
            .comments
            .iter()
            .find_map(|c| text_comment_value(c).map(str::to_string));
        let sentence = Sentence {
            comments: self.comments,
            raw_text,
            tokens,
            words,
            lines: self.lines,
        };
        if let Some(text) = &sentence.raw_text {
            let rebuilt = sentence.text_from_tokens();
            if &rebuilt != text {
                warnings.push(format!(
                    "line {}: `# text` differs from token forms ({text:?} vs {rebuilt:?}); using `# text`",
                    self.line_numbers[0]
                ));
            }
        }
        Ok(Some(sentence))
    }
}

pub fn parse_document(input: &str, source_name: &str) -> Result<Document, ConlluError> {
    let mut doc = Document::new(source_name, Vec::new());
    let mut pending = PendingSentence::new();
    for (idx, raw_line) in input.split('\n').enumerate() {
        let ln = idx + 1;
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if line.trim().is_empty() {
            if !pending.is_empty() {
                let done = std::mem::replace(&mut pending, PendingSentence::new());
                if let Some(s) = done.finish(&mut doc.warnings)? {
                    doc.sentences.push(s);
                }
            }
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if !pending.lines.is_empty() {
                return Err(ConlluError::Malformed {
                    line: ln,
                    message: "comment inside token lines".into(),
                });
            }
            pending.comments.push(comment.to_string());
            continue;
        }
        let columns: Vec<String> = line.split('\t').map(str::to_string).collect();
        if columns.len() != COLUMN_COUNT {
            return Err(ConlluError::Malformed {
                line: ln,
                message: format!("expected {COLUMN_COUNT} columns, found {}", columns.len()),
            });
        }
        let kind = parse_id(&columns[0], ln)?;
        if columns[1].is_empty() {
            return Err(ConlluError::Malformed {
                line: ln,
                message: "empty FORM".into(),
            });
        }
        pending.lines.push(Line { kind, columns });
        pending.line_numbers.push(ln);
    }
    if !pending.is_empty() {
        if let Some(s) = pending.finish(&mut doc.warnings)? {
            doc.sentences.push(s);
        }
    }
    Ok(doc)
}

/// Writes canonical CoNLL-U: LF line endings, each sentence followed by one
/// blank line. An empty document produces an empty string.
pub fn serialize_document(doc: &Document) -> String {
    let mut out = String::new();
    for sentence in &doc.sentences {
        let mut wrote_text = false;
        for c in &sentence.comments {
            match (text_comment_value(c), &sentence.raw_text) {
                (Some(_), Some(text)) => {
                    let _ = writeln!(out, "# text = {text}");
                    wrote_text = true;
                }
                (Some(_), None) => {}
                (None, _) => {
                    let _ = writeln!(out, "#{c}");
                }
            }
        }
        if let (false, Some(text)) = (wrote_text, &sentence.raw_text) {
            let _ = writeln!(out, "# text = {text}");
        }
        for line in &sentence.lines {
            out.push_str(&line.columns.join("\t"));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, form: &str, misc: &str) -> String {
        format!("{id}\t{form}\t_\t_\t_\t_\t_\t_\t_\t{misc}\n")
    }

    #[test]
    fn empty_input() {
        let doc = parse_document("", "x").unwrap();
        assert!(doc.sentences.is_empty());
        assert_eq!(serialize_document(&doc), "");
    }

    #[test]
    fn french_du_range() {
        let input = row("1-2", "du", "_") + &row("1", "de", "_") + &row("2", "le", "_");
        let doc = parse_document(&input, "fr").unwrap();
        let s = &doc.sentences[0];
        assert_eq!(
            s.tokens,
            vec![Token {
                id_start: 1,
                id_end: 2,
                form: "du".into(),
                is_multiword_range: true,
                space_after: true
            }]
        );
        assert_eq!(s.word_forms(), vec!["de", "le"]);
        assert!(s.is_non_segmental(&s.tokens[0]));

        let out = serialize_document(&doc);
        let first = out.lines().next().unwrap();
        assert!(first.starts_with("1-2\tdu"));
    }

    #[test]
    fn reconstruct_from_space_after() {
        let input = row("1", "ab", "SpaceAfter=No") + &row("2", ".", "_");
        let doc = parse_document(&input, "x").unwrap();
        assert_eq!(reconstruct_text(&doc.sentences[0]), "ab.");

        let input = row("1", "On", "_") + &row("2", "va", "SpaceAfter=No") + &row("3", ".", "_");
        let doc = parse_document(&input, "x").unwrap();
        assert_eq!(reconstruct_text(&doc.sentences[0]), "On va.");

        let doc = parse_document(&row("1", "X", "_"), "x").unwrap();
        assert_eq!(reconstruct_text(&doc.sentences[0]), "X");
    }

    #[test]
    fn text_comment_wins_with_warning() {
        let input = "# text = a  b\n".to_string() + &row("1", "a", "_") + &row("2", "b", "_");
        let doc = parse_document(&input, "x").unwrap();
        assert_eq!(reconstruct_text(&doc.sentences[0]), "a  b");
        assert_eq!(doc.warnings.len(), 1);
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let input = row("1", "a", "_") + "2\tb\t_\n";
        match parse_document(&input, "x") {
            Err(ConlluError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        // non-monotone ids
        let input = row("1", "a", "_") + &row("3", "b", "_");
        assert!(matches!(
            parse_document(&input, "x"),
            Err(ConlluError::Structure { line: 2, .. })
        ));
        // overlapping ranges
        let input = row("1-2", "ab", "_") + &row("1", "a", "_") + &row("2-3", "bc", "_");
        assert!(matches!(
            parse_document(&input, "x"),
            Err(ConlluError::Structure { .. })
        ));
        // range with missing words
        let input = row("1-3", "abc", "_") + &row("1", "a", "_") + &row("2", "b", "_");
        assert!(matches!(
            parse_document(&input, "x"),
            Err(ConlluError::Structure { line: 1, .. })
        ));
    }

    #[test]
    fn empty_nodes_are_kept_but_not_words() {
        let input = row("1", "a", "_") + &row("1.1", "e", "_") + &row("2", "b", "_");
        let doc = parse_document(&input, "x").unwrap();
        assert_eq!(doc.sentences[0].word_forms(), vec!["a", "b"]);
        assert_eq!(serialize_document(&doc), input + "\n");
    }

    #[test]
    fn three_sentence_round_trip_is_byte_identical() {
        let mut input = String::new();
        input += "# sent_id = 1\n# text = du vin\n";
        input += &row("1-2", "du", "_");
        input += "1\tde\tde\tADP\t_\t_\t3\tcase\t_\t_\n";
        input += "2\tle\tle\tDET\t_\t_\t3\tdet\t_\t_\n";
        input += "3\tvin\tvin\tNOUN\t_\t_\t0\troot\t_\t_\n\n";
        input += "# sent_id = 2\n";
        input += &row("1", "ab", "SpaceAfter=No");
        input += &row("2", ".", "_");
        input += "\n";
        input += &row("1", "x", "_");
        input += "\n";
        let doc = parse_document(&input, "x").unwrap();
        assert_eq!(doc.sentences.len(), 3);
        assert_eq!(serialize_document(&doc), input);
    }

    #[test]
    fn from_segments_builds_ranges() {
        let s = Sentence::from_segments(
            Some("du vin.".into()),
            &[
                SegmentSpec {
                    surface: "du".into(),
                    words: vec!["de".into(), "le".into()],
                    space_after: true,
                },
                SegmentSpec {
                    surface: "vin".into(),
                    words: vec!["vin".into()],
                    space_after: false,
                },
                SegmentSpec {
                    surface: ".".into(),
                    words: vec![".".into()],
                    space_after: true,
                },
            ],
        );
        assert_eq!(s.word_forms(), vec!["de", "le", "vin", "."]);
        assert_eq!(s.text_from_tokens(), "du vin.");
        let doc = Document::new("x", vec![s]);
        let text = serialize_document(&doc);
        let back = parse_document(&text, "x").unwrap();
        assert_eq!(back.sentences, doc.sentences);
    }
}
