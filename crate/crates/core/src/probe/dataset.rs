use std::path::Path;

use crate::embedding::{EmbeddingTable, TokenId};
use crate::error::{Error, Result};
use crate::tokenizer::{tokenize, TokenSequence};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub first: TokenSequence,
    /// Second sentence of a pair task.
    pub second: Option<TokenSequence>,
    pub label: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    pub examples: Vec<LabeledExample>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn is_pair(&self) -> bool {
        self.examples.first().is_some_and(|e| e.second.is_some())
    }

    pub fn labels(&self) -> impl Iterator<Item = u8> + '_ {
        self.examples.iter().map(|e| e.label)
    }

    pub(crate) fn validate(&self, table: &EmbeddingTable) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        let pair = self.is_pair();
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.label > 1 {
                return Err(Error::InvalidParameter(format!("example {i}: label must be 0 or 1")));
            }
            if ex.second.is_some() != pair {
                return Err(Error::InvalidParameter(format!(
                    "example {i}: mixes single-sentence and pair examples"
                )));
            }
            for seq in std::iter::once(&ex.first).chain(ex.second.as_ref()) {
                if seq.is_empty() {
                    return Err(Error::InvalidParameter(format!("example {i}: empty sequence")));
                }
                seq.iter().try_for_each(|&id: &TokenId| table.check_id(id))?;
            }
        }
        Ok(())
    }
}

/// Parse `label<TAB>text` or `label<TAB>text1<TAB>text2` lines. Blank lines
/// are skipped.
pub fn parse_tsv(content: &str, table: &EmbeddingTable, max_len: usize) -> Result<LabeledDataset> {
    let mut examples = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let label = match fields[0].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::load(
                    format!("line {lineno}"),
                    format!("label must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let (first, second) = match fields.len() {
            2 => (tokenize(fields[1], table, max_len)?, None),
            3 => (
                tokenize(fields[1], table, max_len)?,
                Some(tokenize(fields[2], table, max_len)?),
            ),
            n => {
                return Err(Error::load(
                    format!("line {lineno}"),
                    format!("expected 2 or 3 tab-separated fields, found {n}"),
                ))
            }
        };
        if first.is_empty() || second.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::load(format!("line {lineno}"), "empty text"));
        }
        examples.push(LabeledExample {
            first,
            second,
            label,
        });
    }
    let ds = LabeledDataset { examples };
    if !ds.is_empty() {
        ds.validate(table)?;
    }
    Ok(ds)
}

pub fn load_tsv(path: impl AsRef<Path>, table: &EmbeddingTable, max_len: usize) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&content, table, max_len)
}
