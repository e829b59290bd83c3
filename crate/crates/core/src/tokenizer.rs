//! Greedy longest-match wordpiece tokenization against the table vocabulary.

use crate::embedding::{EmbeddingTable, TokenId, UNK};
use crate::error::{Error, Result};

pub type TokenSequence = Vec<TokenId>;

const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_ascii() && !c.is_alphanumeric() && !c.is_whitespace())
}

/// Lowercase, then split on whitespace with every punctuation character as
/// its own word.
fn pre_split(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        let mut cur = String::new();
        for c in chunk.chars().flat_map(char::to_lowercase) {
            if is_punctuation(c) {
                if !cur.is_empty() {
                    words.push(std::mem::take(&mut cur));
                }
                words.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            words.push(cur);
        }
    }
    words
}

fn wordpiece(word: &str, table: &EmbeddingTable, unk: TokenId, out: &mut Vec<TokenId>) {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    if chars.len() > MAX_WORD_CHARS {
        out.push(unk);
        return;
    }
    let vocab = table.vocab();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            let lo = chars[start].0;
            let hi = chars.get(end).map_or(word.len(), |&(b, _)| b);
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.push_str(&word[lo..hi]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        match found {
            Some((id, end)) => {
                pieces.push(id);
                start = end;
            }
            None => {
                out.push(unk);
                return;
            }
        }
    }
    out.extend(pieces);
}

/// Tokenize `text`, truncating to `max_len` tokens. Requires `[UNK]` in the
/// vocabulary.
pub fn tokenize(text: &str, table: &EmbeddingTable, max_len: usize) -> Result<TokenSequence> {
    let unk = table.vocab().id(UNK).ok_or(Error::MissingSpecialToken(UNK))?;
    let mut ids = Vec::new();
    for word in pre_split(text) {
        if ids.len() >= max_len {
            break;
        }
        wordpiece(&word, table, unk, &mut ids);
    }
    ids.truncate(max_len);
    Ok(ids)
}

/// Join tokens with spaces, fusing `##` continuations onto the previous one.
pub fn detokenize(seq: &[TokenId], table: &EmbeddingTable) -> Result<String> {
    let mut out = String::new();
    for &id in seq {
        table.check_id(id)?;
        let tok = table.vocab().token(id).unwrap_or_default();
        match tok.strip_prefix(CONTINUATION) {
            Some(rest) if !out.is_empty() => out.push_str(rest),
            _ => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
    }
    Ok(out)
}
