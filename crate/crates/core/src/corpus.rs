//! Synthetic structured documents, character tokenization and line tagging.
//!
//! Generated documents use a small markdown-like surface syntax:
//!
//! ```text
//! # heading words
//! body sentence. body sentence.
//! key points:
//! - bullet words
//! - bullet words
//! follow these steps.
//! 1. step words
//! 2. step words
//!
//! # next heading
//! ```
//!
//! Sections are separated by one blank line. A bullet block is always
//! introduced by a body line ending in `:`; numbered blocks are introduced by
//! an ordinary sentence. All word content comes from [`LEXICON`].

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SeededRng, Stream};

pub type TokenId = u32;

/// Padding symbol; always token id 0.
pub const PAD: char = '\u{0}';
/// Line content separating documents in a corpus file.
pub const DOC_SEPARATOR: &str = "\u{1d}";

pub const LEXICON: [&str; 64] = [
    "system", "report", "data", "model", "layer", "signal", "value", "index", "table", "record", "field", "state",
    "input", "output", "error", "check", "level", "range", "limit", "point", "chart", "graph", "node", "link", "path",
    "route", "query", "cache", "store", "batch", "queue", "event", "stage", "phase", "cycle", "trend", "score",
    "metric", "sample", "result", "review", "update", "change", "policy", "process", "method", "design", "section",
    "summary", "detail", "note", "issue", "ticket", "support", "client", "server", "network", "storage", "memory",
    "device", "module", "version", "release", "budget",
];

const BULLET_INTROS: [&str; 4] = ["key points:", "main items:", "consider the following:", "notes:"];
const NUMBERED_INTROS: [&str; 3] = [
    "follow these steps.",
    "the procedure is as follows.",
    "proceed in order.",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineTag {
    Heading,
    Bullet,
    Numbered,
    Body,
    Blank,
}

/// Character vocabulary. Id 0 is [`PAD`], the remaining symbols are sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<char>,
    index: HashMap<char, TokenId>,
}

impl Vocab {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut chars = BTreeSet::new();
        for t in texts {
            chars.extend(t.chars().filter(|&c| c != PAD));
        }
        let mut symbols = vec![PAD];
        symbols.extend(chars);
        Self::from_symbols(symbols).expect("pad-first symbol table")
    }

    /// Every character the synthetic generator can emit.
    pub fn generator() -> Self {
        let mut all = String::from(" \n#-.:0123456789");
        all.extend(LEXICON.iter().flat_map(|w| w.chars()));
        for s in BULLET_INTROS.iter().chain(NUMBERED_INTROS.iter()) {
            all.push_str(s);
        }
        Self::from_texts([all.as_str()])
    }

    /// From an explicit table whose first entry must be [`PAD`].
    pub fn from_symbols(symbols: Vec<char>) -> Result<Self> {
        if symbols.first() != Some(&PAD) {
            return Err(Error::ModelParse {
                field: "vocab".into(),
                message: "first symbol must be the pad symbol".into(),
            });
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i as TokenId).is_some() {
                return Err(Error::ModelParse {
                    field: "vocab".into(),
                    message: format!("duplicate symbol {c:?}"),
                });
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn pad_id(&self) -> TokenId {
        0
    }

    pub fn id(&self, c: char) -> Option<TokenId> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, id: TokenId) -> Option<char> {
        self.symbols.get(id as usize).copied()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }
}

/// Character-level ids; characters outside the vocabulary map to pad.
pub fn tokenize(text: &str, vocab: &Vocab) -> Vec<TokenId> {
    text.chars().map(|c| vocab.id(c).unwrap_or(vocab.pad_id())).collect()
}

/// Inverse of [`tokenize`] on covered text. Pad and invalid ids are dropped.
pub fn detokenize(tokens: &[TokenId], vocab: &Vocab) -> String {
    tokens
        .iter()
        .filter(|&&t| t != vocab.pad_id())
        .filter_map(|&t| vocab.symbol(t))
        .collect()
}

/// Heading level (number of leading `#`) of a line, ignoring leading spaces.
pub fn heading_level(line: &str) -> Option<usize> {
    let t = line.trim_start_matches(' ');
    let n = t.chars().take_while(|&c| c == '#').count();
    (n > 0).then_some(n)
}

/// Number of a `N. ` list line, ignoring leading spaces.
pub fn list_number(line: &str) -> Option<u64> {
    let t = line.trim_start_matches(' ');
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || !t[digits..].starts_with(". ") {
        return None;
    }
    t[..digits].parse().ok()
}

pub fn tag_line(line: &str) -> LineTag {
    let t = line.trim_start_matches(' ');
    if t.trim().is_empty() {
        LineTag::Blank
    } else if t.starts_with('#') {
        LineTag::Heading
    } else if t.starts_with("- ") {
        LineTag::Bullet
    } else if list_number(t).is_some() {
        LineTag::Numbered
    } else {
        LineTag::Body
    }
}

/// The lines of a text as tagged: an empty text has no lines.
pub fn lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        Vec::new()
    } else {
        text.split('\n').collect()
    }
}

/// Rule-based per-line structural tags.
pub fn annotate_structure(text: &str) -> Vec<LineTag> {
    lines(text).into_iter().map(tag_line).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub docs: usize,
    pub seed: u64,
    pub sections_range: [usize; 2],
    pub bullets_range: [usize; 2],
    pub numbered_range: [usize; 2],
    pub body_sentences_range: [usize; 2],
    pub max_len: usize,
    pub pad_to: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            docs: 200,
            seed: 0,
            sections_range: [1, 3],
            bullets_range: [0, 4],
            numbered_range: [0, 4],
            body_sentences_range: [1, 2],
            max_len: 256,
            pad_to: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.docs == 0 {
            return Err(Error::InvalidConfig("docs must be ≥ 1".into()));
        }
        for (name, [lo, hi]) in [
            ("sections_range", self.sections_range),
            ("bullets_range", self.bullets_range),
            ("numbered_range", self.numbered_range),
            ("body_sentences_range", self.body_sentences_range),
        ] {
            if lo > hi {
                return Err(Error::InvalidConfig(format!("{name}: lo {lo} > hi {hi}")));
            }
        }
        if self.sections_range[0] == 0 {
            return Err(Error::InvalidConfig(
                "sections_range: documents need ≥ 1 section".into(),
            ));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Generator parameters recorded with each synthetic document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocMeta {
    pub seed: u64,
    pub index: usize,
    /// `(bullets, numbered, body sentences)` per section.
    pub sections: Vec<(usize, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuredDoc {
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub tags: Vec<LineTag>,
    pub meta: Option<DocMeta>,
}

impl StructuredDoc {
    /// Tags a plain text with [`annotate_structure`] and tokenizes it.
    pub fn from_text(text: String, vocab: &Vocab) -> Self {
        let tags = annotate_structure(&text);
        let tokens = tokenize(&text, vocab);
        Self {
            text,
            tokens,
            tags,
            meta: None,
        }
    }
}

fn words(rng: &mut SeededRng, lo: usize, hi: usize) -> String {
    let n = rng.range_inclusive(lo, hi);
    (0..n)
        .map(|_| LEXICON[rng.below(LEXICON.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic synthetic document `index` of `spec`.
pub fn gen_structured_doc(spec: &CorpusSpec, index: usize) -> StructuredDoc {
    debug_assert!(index < spec.docs);
    let mut rng = SeededRng::new(spec.seed, Stream::Corpus, index as u64);
    let draw = |rng: &mut SeededRng, [lo, hi]: [usize; 2]| rng.range_inclusive(lo, hi);

    let n_sections = draw(&mut rng, spec.sections_range);
    let mut out: Vec<(String, LineTag)> = Vec::new();
    let mut meta = DocMeta {
        seed: spec.seed,
        index,
        sections: Vec::with_capacity(n_sections),
    };
    for s in 0..n_sections {
        if s > 0 {
            out.push((String::new(), LineTag::Blank));
        }
        let bullets = draw(&mut rng, spec.bullets_range);
        let numbered = draw(&mut rng, spec.numbered_range);
        let sentences = draw(&mut rng, spec.body_sentences_range);
        meta.sections.push((bullets, numbered, sentences));

        out.push((format!("# {}", words(&mut rng, 1, 3)), LineTag::Heading));
        if sentences > 0 {
            let body: Vec<String> = (0..sentences).map(|_| format!("{}.", words(&mut rng, 3, 6))).collect();
            out.push((body.join(" "), LineTag::Body));
        }
        if bullets > 0 {
            let intro = BULLET_INTROS[rng.below(BULLET_INTROS.len())];
            out.push((intro.to_owned(), LineTag::Body));
            for _ in 0..bullets {
                out.push((format!("- {}", words(&mut rng, 1, 3)), LineTag::Bullet));
            }
        }
        if numbered > 0 {
            let intro = NUMBERED_INTROS[rng.below(NUMBERED_INTROS.len())];
            out.push((intro.to_owned(), LineTag::Body));
            for k in 1..=numbered {
                out.push((format!("{k}. {}", words(&mut rng, 2, 4)), LineTag::Numbered));
            }
        }
    }
    let text = out.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join("\n");
    let tags = out.into_iter().map(|(_, t)| t).collect();
    let tokens = tokenize(&text, &Vocab::generator());
    StructuredDoc {
        text,
        tokens,
        tags,
        meta: Some(meta),
    }
}

/// All documents of `spec`, in index order.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<StructuredDoc> {
    (0..spec.docs).map(|i| gen_structured_doc(spec, i)).collect()
}

/// Corpus file body: documents separated by a line holding only `\x1d`.
pub fn corpus_to_string<S: AsRef<str>>(docs: &[S]) -> String {
    let mut out = String::new();
    for (i, d) in docs.iter().enumerate() {
        if i > 0 {
            out.push_str(DOC_SEPARATOR);
            out.push('\n');
        }
        out.push_str(d.as_ref());
        out.push('\n');
    }
    out
}

pub fn parse_corpus(content: &str) -> Vec<String> {
    let mut docs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let body = content.strip_suffix('\n').unwrap_or(content);
    if body.is_empty() {
        return docs;
    }
    for line in body.split('\n') {
        if line == DOC_SEPARATOR {
            docs.push(current.join("\n"));
            current.clear();
        } else {
            current.push(line);
        }
    }
    docs.push(current.join("\n"));
    docs
}

pub fn write_corpus_file<S: AsRef<str>>(path: &Path, docs: &[S]) -> Result<usize> {
    let body = corpus_to_string(docs);
    fs::write(path, &body).map_err(|e| Error::io(path, e))?;
    Ok(body.len())
}

pub fn read_corpus_file(path: &Path) -> Result<Vec<String>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_corpus(&content))
}

#[derive(Clone, Debug)]
pub enum CorpusSource {
    Files(Vec<PathBuf>),
    Synthetic(CorpusSpec),
}

/// Raw document texts in source order.
pub fn read_documents(source: &CorpusSource) -> Result<Vec<String>> {
    match source {
        CorpusSource::Files(paths) => {
            let mut docs = Vec::new();
            for p in paths {
                docs.extend(read_corpus_file(p)?);
            }
            Ok(docs)
        }
        CorpusSource::Synthetic(spec) => Ok(generate_corpus(spec).into_iter().map(|d| d.text).collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub window: Vec<TokenId>,
    pub target: TokenId,
}

/// Tokenized documents and the sliding-window pairs drawn from them.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub docs: Vec<Vec<TokenId>>,
    pub window: usize,
    pub pad: TokenId,
}

impl Dataset {
    /// Pairs of one document: one per position after the first, windows left-padded.
    pub fn doc_examples(&self, doc: usize) -> impl Iterator<Item = Example> + '_ {
        let toks = &self.docs[doc];
        let w = self.window;
        (1..toks.len()).map(move |t| {
            let start = t.saturating_sub(w);
            let mut window = vec![self.pad; w - (t - start)];
            window.extend_from_slice(&toks[start..t]);
            Example {
                window,
                target: toks[t],
            }
        })
    }

    /// Pairs of the given documents in document order, then position.
    pub fn examples_for(&self, docs: &[usize]) -> Vec<Example> {
        docs.iter().flat_map(|&d| self.doc_examples(d)).collect()
    }

    pub fn examples(&self) -> Vec<Example> {
        (0..self.docs.len()).flat_map(|d| self.doc_examples(d)).collect()
    }

    pub fn num_examples(&self) -> usize {
        self.docs.iter().map(|d| d.len().saturating_sub(1)).sum()
    }
}

/// Tokenizes, truncates to `max_len`, right-pads to `pad_to` (capped at `max_len`).
pub fn build_dataset<S: AsRef<str>>(
    texts: &[S],
    vocab: &Vocab,
    window: usize,
    max_len: usize,
    pad_to: usize,
) -> Result<Dataset> {
    if texts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if window == 0 {
        return Err(Error::InvalidConfig("window must be ≥ 1".into()));
    }
    let docs = texts
        .iter()
        .map(|t| {
            let mut toks = tokenize(t.as_ref(), vocab);
            toks.truncate(max_len);
            let target = pad_to.min(max_len);
            if toks.len() < target {
                toks.resize(target, vocab.pad_id());
            }
            toks
        })
        .collect();
    Ok(Dataset {
        docs,
        window,
        pad: vocab.pad_id(),
    })
}

/// Reads or generates documents, then builds the dataset and tagged documents.
pub fn load_corpus(
    source: &CorpusSource,
    vocab: &Vocab,
    window: usize,
    max_len: usize,
    pad_to: usize,
) -> Result<(Dataset, Vec<StructuredDoc>)> {
    let texts = read_documents(source)?;
    let dataset = build_dataset(&texts, vocab, window, max_len, pad_to)?;
    let docs = texts.into_iter().map(|t| StructuredDoc::from_text(t, vocab)).collect();
    Ok((dataset, docs))
}
