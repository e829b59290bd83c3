use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"DXPV1";

/// On-disk table format.
///
/// * `text`: first line `"<|V|> <n>"`, then one `"token c1 ... cn"` line per
///   token, whitespace separated.
/// * `binary`: magic `DXPV1`, little-endian `u32` |V| and `u32` n, then |V|
///   tokens each as `u32` byte length + UTF-8 bytes, then row-major `f32`
///   little-endian components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Text,
    Binary,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(TableFormat::Text),
            "binary" => Ok(TableFormat::Binary),
            other => Err(Error::InvalidParameter(format!(
                "unknown table format {other:?} (expected text or binary)"
            ))),
        }
    }
}

pub fn load_table(path: impl AsRef<Path>, format: TableFormat) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        TableFormat::Text => read_text(reader),
        TableFormat::Binary => read_binary(reader),
    }
}

fn read_text(reader: impl BufRead) -> Result<EmbeddingTable> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::load("line 1", e.to_string()))?,
        None => return Err(Error::load("line 1", "missing header")),
    };
    let mut fields = header.split_whitespace();
    let (vocab_size, dim) = match (fields.next(), fields.next(), fields.next()) {
        (Some(v), Some(n), None) => {
            let v: usize = v
                .parse()
                .map_err(|_| Error::load("line 1", format!("bad vocabulary size {v:?}")))?;
            let n: usize = n
                .parse()
                .map_err(|_| Error::load("line 1", format!("bad dimension {n:?}")))?;
            (v, n)
        }
        _ => return Err(Error::load("line 1", "header must be \"<vocab size> <dim>\"")),
    };
    if dim == 0 {
        return Err(Error::load("line 1", "dimension must be positive"));
    }

    let mut tokens = Vec::with_capacity(vocab_size);
    let mut data = Vec::with_capacity(vocab_size * dim);
    for (row, line) in lines.enumerate() {
        let lineno = row + 2;
        let line = line.map_err(|e| Error::load(format!("line {lineno}"), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if tokens.len() == vocab_size {
            return Err(Error::load(
                format!("line {lineno}"),
                format!("more rows than the declared {vocab_size}"),
            ));
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default().to_owned();
        let before = data.len();
        for part in parts {
            let v: f32 = part.parse().map_err(|_| {
                Error::load(format!("line {lineno}"), format!("bad component {part:?}"))
            })?;
            data.push(v);
        }
        let got = data.len() - before;
        if got != dim {
            return Err(Error::load(
                format!("line {lineno} (row {})", tokens.len() + 1),
                format!("expected {dim} components, found {got}"),
            ));
        }
        tokens.push(token);
    }
    if tokens.len() != vocab_size {
        return Err(Error::load(
            "end of file",
            format!("expected {vocab_size} rows, found {}", tokens.len()),
        ));
    }
    EmbeddingTable::new(tokens, data, dim)
}

fn read_u32(reader: &mut impl Read, offset: &mut u64, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|e| Error::load(format!("offset {offset}"), format!("{what}: {e}")))?;
    *offset += 4;
    Ok(u32::from_le_bytes(buf))
}

fn read_binary(mut reader: impl Read) -> Result<EmbeddingTable> {
    let mut offset = 0u64;
    let mut magic = [0u8; 5];
    reader
        .read_exact(&mut magic)
        .map_err(|e| Error::load("offset 0", format!("magic: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::load("offset 0", "bad magic bytes"));
    }
    offset += 5;
    let vocab_size = read_u32(&mut reader, &mut offset, "vocabulary size")? as usize;
    let dim = read_u32(&mut reader, &mut offset, "dimension")? as usize;
    if dim == 0 {
        return Err(Error::load("offset 9", "dimension must be positive"));
    }

    let mut tokens = Vec::with_capacity(vocab_size);
    for _ in 0..vocab_size {
        let start = offset;
        let len = read_u32(&mut reader, &mut offset, "token length")? as usize;
        let mut bytes = vec![0u8; len];
        reader
            .read_exact(&mut bytes)
            .map_err(|e| Error::load(format!("offset {offset}"), format!("token bytes: {e}")))?;
        offset += len as u64;
        let token = String::from_utf8(bytes)
            .map_err(|_| Error::load(format!("offset {start}"), "token is not UTF-8"))?;
        tokens.push(token);
    }

    let mut raw = vec![0u8; vocab_size * dim * 4];
    reader
        .read_exact(&mut raw)
        .map_err(|e| Error::load(format!("offset {offset}"), format!("matrix: {e}")))?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingTable::new(tokens, data, dim)
}

pub fn write_text(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{} {}", table.len(), table.dim()).map_err(io)?;
    for (i, token) in table.vocab().tokens().iter().enumerate() {
        write!(w, "{token}").map_err(io)?;
        for x in table.row(i) {
            write!(w, " {x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_binary(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(table.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(table.dim() as u32).to_le_bytes()).map_err(io)?;
    for token in table.vocab().tokens() {
        w.write_all(&(token.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(token.as_bytes()).map_err(io)?;
    }
    for x in table.data() {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}
