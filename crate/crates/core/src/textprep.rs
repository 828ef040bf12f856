//! Lowercasing, punctuation-splitting, greedy longest-match subword
//! tokenization into fixed-length sequences.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{sha256_hex, write_atomic};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

pub const DEFAULT_SEQ_LEN: usize = 128;
pub const MIN_VOCAB_SIZE: usize = 300;
const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary size {0} is below the minimum of {MIN_VOCAB_SIZE}")]
    VocabTooSmall(usize),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("span {start}..{end} is outside the real tokens 1..{limit}")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        limit: usize,
    },
    #[error("sequence length {0} leaves no room for [CLS] and [SEP]")]
    SeqLenTooShort(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Specials {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
}

/// Token list where line number equals id.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    specials: Specials,
    digest: String,
}

/// One lowercased pre-token with the source byte span of every char.
struct Word {
    chars: Vec<char>,
    spans: Vec<(usize, usize)>,
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())
}

/// Splits on whitespace, isolates punctuation, lowercases.
fn pre_tokenize(text: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut cur = Word {
        chars: Vec::new(),
        spans: Vec::new(),
    };
    let flush = |cur: &mut Word, words: &mut Vec<Word>| {
        if !cur.chars.is_empty() {
            words.push(std::mem::replace(
                cur,
                Word {
                    chars: Vec::new(),
                    spans: Vec::new(),
                },
            ));
        }
    };
    for (start, c) in text.char_indices() {
        let end = start + c.len_utf8();
        if c.is_whitespace() {
            flush(&mut cur, &mut words);
        } else if is_punct(c) {
            flush(&mut cur, &mut words);
            words.push(Word {
                chars: c.to_lowercase().collect(),
                spans: c.to_lowercase().map(|_| (start, end)).collect(),
            });
        } else {
            for lc in c.to_lowercase() {
                cur.chars.push(lc);
                cur.spans.push((start, end));
            }
        }
    }
    flush(&mut cur, &mut words);
    words
}

/// Lowercased, punctuation-separated word sequence of `text`.
pub fn words(text: &str) -> Vec<String> {
    pre_tokenize(text)
        .into_iter()
        .map(|w| w.chars.into_iter().collect())
        .collect()
}

impl Vocabulary {
    /// Builds a vocabulary of at most `max_size` entries from frequent whole
    /// words, single-character fallback pieces and frequent affix pieces.
    pub fn build<'a, I>(corpus: I, max_size: usize) -> Result<Vocabulary, TextError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if max_size < MIN_VOCAB_SIZE {
            return Err(TextError::VocabTooSmall(max_size));
        }
        let mut freq: HashMap<String, u64> = HashMap::new();
        let mut char_freq: HashMap<char, u64> = HashMap::new();
        let mut seen_any = false;
        for text in corpus {
            for w in pre_tokenize(text) {
                seen_any = true;
                for &c in &w.chars {
                    *char_freq.entry(c).or_default() += 1;
                }
                *freq.entry(w.chars.into_iter().collect()).or_default() += 1;
            }
        }
        if !seen_any {
            return Err(TextError::EmptyCorpus);
        }

        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK].map(String::from).to_vec();
        let mut present: HashSet<String> = tokens.iter().cloned().collect();
        let mut push = |tok: String, tokens: &mut Vec<String>| {
            if tokens.len() < max_size && present.insert(tok.clone()) {
                tokens.push(tok);
            }
        };

        // Character fallback: ASCII alphanumerics always, then seen characters.
        for c in ('a'..='z').chain('0'..='9') {
            push(c.to_string(), &mut tokens);
            push(format!("{CONTINUATION}{c}"), &mut tokens);
        }
        let mut chars: Vec<(char, u64)> = char_freq.into_iter().collect();
        chars.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for (c, _) in &chars {
            push(c.to_string(), &mut tokens);
            if !is_punct(*c) {
                push(format!("{CONTINUATION}{c}"), &mut tokens);
            }
        }

        let mut word_list: Vec<(&String, u64)> = freq
            .iter()
            .filter(|(w, _)| w.chars().count() >= 2)
            .map(|(w, f)| (w, *f))
            .collect();
        word_list.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

        let mut affix: HashMap<String, u64> = HashMap::new();
        for (w, f) in &word_list {
            let cs: Vec<char> = w.chars().collect();
            let n = cs.len();
            for i in 2..=n.saturating_sub(1).min(6) {
                *affix.entry(cs[..i].iter().collect()).or_default() += f;
            }
            for i in (n.saturating_sub(5)).max(1)..=n.saturating_sub(2) {
                let s: String = cs[i..].iter().collect();
                *affix.entry(format!("{CONTINUATION}{s}")).or_default() += f;
            }
        }
        let mut affix_list: Vec<(String, u64)> = affix.into_iter().collect();
        affix_list.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

        let base: HashSet<&str> = tokens.iter().map(String::as_str).collect();
        let remaining = max_size.saturating_sub(tokens.len());
        let word_budget = (remaining * 3).div_ceil(4);
        let words_taken: Vec<String> = word_list
            .iter()
            .filter(|(w, _)| !base.contains(w.as_str()))
            .take(word_budget)
            .map(|(w, _)| (*w).clone())
            .collect();
        let affix_budget = remaining - words_taken.len();
        let taken: HashSet<&str> = words_taken.iter().map(String::as_str).collect();
        let affixes_taken: Vec<String> = affix_list
            .iter()
            .map(|(a, _)| a.clone())
            .filter(|a| !base.contains(a.as_str()) && !taken.contains(a.as_str()))
            .take(affix_budget)
            .collect();
        drop(taken);
        drop(base);
        for w in words_taken {
            push(w, &mut tokens);
        }
        for a in affixes_taken {
            push(a, &mut tokens);
        }
        // Fill any slack with further words.
        for (w, _) in &word_list {
            push((*w).clone(), &mut tokens);
        }
        Vocabulary::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary, TextError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains('\n') {
                return Err(TextError::InvalidVocab(format!("bad token at line {}", i + 1)));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(TextError::InvalidVocab(format!("duplicate token {t:?}")));
            }
        }
        let find = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| TextError::InvalidVocab(format!("missing special {s}")))
        };
        let specials = Specials {
            pad: find(PAD)?,
            unk: find(UNK)?,
            cls: find(CLS)?,
            sep: find(SEP)?,
            mask: find(MASK)?,
        };
        let mut v = Vocabulary {
            tokens,
            index,
            specials,
            digest: String::new(),
        };
        v.digest = sha256_hex(v.to_text().as_bytes());
        Ok(v)
    }

    /// One token per line, newline-terminated.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Vocabulary, TextError> {
        Vocabulary::from_tokens(text.lines().map(String::from).collect())
    }

    pub fn load(path: &Path) -> Result<Vocabulary, TextError> {
        Vocabulary::from_text(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TextError> {
        write_atomic(path, self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn specials(&self) -> Specials {
        self.specials
    }

    pub fn is_special(&self, id: u32) -> bool {
        let s = self.specials;
        id == s.pad || id == s.cls || id == s.sep || id == s.mask
    }

    /// SHA-256 of the vocabulary file contents.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

/// Fixed-length token ids with attention mask and source alignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub surfaces: Vec<String>,
    /// Byte offsets into the source text; `None` for specials and padding.
    pub char_spans: Vec<Option<(usize, usize)>>,
    pub truncated: bool,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of positions with mask 1, specials included.
    pub fn num_real(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Position of the terminating `[SEP]`.
    pub fn sep_position(&self) -> usize {
        self.num_real() - 1
    }

    /// Real positions that are not `[CLS]`/`[SEP]`.
    pub fn content_positions(&self) -> Range<usize> {
        1..self.sep_position()
    }

    pub fn is_continuation(&self, pos: usize) -> bool {
        self.surfaces[pos].starts_with(CONTINUATION) && self.surfaces[pos].len() > CONTINUATION.len()
    }

    /// Positions of the whole word containing `pos` (head plus `##` pieces).
    pub fn word_range(&self, pos: usize) -> Range<usize> {
        let content = self.content_positions();
        if !content.contains(&pos) {
            return pos..pos + 1;
        }
        let mut start = pos;
        while start > content.start && self.is_continuation(start) {
            start -= 1;
        }
        let mut end = pos + 1;
        while end < content.end && self.is_continuation(end) {
            end += 1;
        }
        start..end
    }

    /// Merged surface of the word containing `pos`.
    pub fn word_text(&self, pos: usize) -> String {
        merge_pieces(self.word_range(pos).map(|i| self.surfaces[i].as_str()))
    }
}

fn merge_pieces<'a>(pieces: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for p in pieces {
        match p.strip_prefix(CONTINUATION).filter(|s| !s.is_empty()) {
            Some(rest) => out.push_str(rest),
            None => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(p);
            }
        }
    }
    out
}

/// Greedy longest-match-first segmentation of one word.
fn word_pieces(vocab: &Vocabulary, word: &Word) -> Option<Vec<(u32, Range<usize>)>> {
    let n = word.chars.len();
    if n > MAX_WORD_CHARS {
        return None;
    }
    let mut out = Vec::new();
    let mut start = 0;
    let mut buf = String::new();
    while start < n {
        let mut found = None;
        for end in (start + 1..=n).rev() {
            buf.clear();
            if start > 0 {
                buf.push_str(CONTINUATION);
            }
            buf.extend(&word.chars[start..end]);
            if let Some(id) = vocab.id_of(&buf) {
                found = Some((id, start..end));
                break;
            }
        }
        let (id, range) = found?;
        start = range.end;
        out.push((id, range));
    }
    Some(out)
}

/// Tokenizes to the default 128 positions.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> TokenSequence {
    tokenize_to(text, vocab, DEFAULT_SEQ_LEN).expect("default length is valid")
}

/// Tokenizes to exactly `seq_len` positions: `[CLS]`, pieces, `[SEP]`, `[PAD]`s.
pub fn tokenize_to(text: &str, vocab: &Vocabulary, seq_len: usize) -> Result<TokenSequence, TextError> {
    if seq_len < 2 {
        return Err(TextError::SeqLenTooShort(seq_len));
    }
    let sp = vocab.specials();
    let budget = seq_len - 2;
    let mut ids = vec![sp.cls];
    let mut surfaces = vec![CLS.to_string()];
    let mut spans = vec![None];
    let mut truncated = false;

    'words: for word in pre_tokenize(text) {
        let pieces = word_pieces(vocab, &word);
        let pieces = match pieces {
            Some(p) => p,
            None => vec![(sp.unk, 0..word.chars.len())],
        };
        for (id, range) in pieces {
            if ids.len() > budget {
                truncated = true;
                break 'words;
            }
            let span = (word.spans[range.start].0, word.spans[range.end - 1].1);
            ids.push(id);
            surfaces.push(vocab.token(id).unwrap_or(UNK).to_string());
            spans.push(Some(span));
        }
    }
    ids.push(sp.sep);
    surfaces.push(SEP.to_string());
    spans.push(None);
    let real = ids.len();
    ids.resize(seq_len, sp.pad);
    surfaces.resize(seq_len, PAD.to_string());
    spans.resize(seq_len, None);
    let mut mask = vec![1u8; real];
    mask.resize(seq_len, 0);
    Ok(TokenSequence {
        ids,
        mask,
        surfaces,
        char_spans: spans,
        truncated,
    })
}

/// Text of positions `range`, with `##` pieces merged into their words.
pub fn detokenize_span(seq: &TokenSequence, range: Range<usize>) -> Result<String, TextError> {
    let content = seq.content_positions();
    if range.start >= range.end || range.start < content.start || range.end > content.end {
        return Err(TextError::SpanOutOfRange {
            start: range.start,
            end: range.end,
            limit: content.end,
        });
    }
    Ok(merge_pieces(range.map(|i| seq.surfaces[i].as_str())))
}
