use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::{seeded_rng, Error, Result};

/// Fixed-dimension vectors keyed by token or unit id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalEmbeddingTable {
    dim: usize,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl ExternalEmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index
            .get(key)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Like [`get`](Self::get) but a missing key is an error.
    pub fn lookup(&self, key: &str) -> Result<&[f32]> {
        self.get(key)
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    /// Approximate heap bytes held by vector storage.
    pub fn storage_bytes(&self) -> usize {
        self.data.capacity() * std::mem::size_of::<f32>()
    }

    /// Insert a vector; returns `false` (and leaves the table unchanged) if
    /// the key already exists.
    pub fn insert(&mut self, key: String, vector: &[f32]) -> Result<bool> {
        if self.is_empty() && self.dim == 0 {
            self.dim = vector.len();
        }
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub(crate) fn write_to(&self, w: &mut crate::binio::Writer) -> Result<()> {
        w.u64(self.dim as u64).json(&self.keys)?.f32s(&self.data);
        Ok(())
    }

    pub(crate) fn read_from(r: &mut crate::binio::Reader<'_>) -> Result<Self> {
        let dim = r.u64()? as usize;
        let keys: Vec<String> = r.json()?;
        let data = r.f32s()?;
        if data.len() != keys.len() * dim {
            return Err(Error::BadFormat("embedding table size mismatch".into()));
        }
        let mut table = Self::new(dim);
        for (k, v) in keys.into_iter().zip(data.chunks(dim.max(1))) {
            table.insert(k, v)?;
        }
        Ok(table)
    }

    fn shrink(&mut self) {
        self.data.shrink_to_fit();
        self.keys.shrink_to_fit();
    }
}

fn parse_floats(fields: &mut dyn Iterator<Item = &str>, line: usize, buf: &mut Vec<f32>) -> Result<()> {
    buf.clear();
    for f in fields {
        buf.push(f.parse::<f32>().map_err(|e| Error::Parse {
            line,
            message: format!("bad float {f:?}: {e}"),
        })?);
    }
    if buf.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parse {
            line,
            message: "non-finite value".into(),
        });
    }
    Ok(())
}

/// Streaming parse of `token f1 f2 ... fd` lines. A leading word2vec-style
/// `count dim` header line is skipped. Repeated tokens keep their first vector.
pub fn read_word_embeddings<R: BufRead>(reader: R) -> Result<ExternalEmbeddingTable> {
    read_text_table(reader, false)
}

pub fn load_word_embeddings(path: &Path) -> Result<ExternalEmbeddingTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_word_embeddings(BufReader::with_capacity(1 << 16, file))
}

fn read_text_table<R: BufRead>(reader: R, unique: bool) -> Result<ExternalEmbeddingTable> {
    let mut table = ExternalEmbeddingTable::default();
    let mut buf = Vec::new();
    let mut first = true;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = n + 1;
        let mut fields = line.split_whitespace();
        let Some(key) = fields.next() else { continue };
        if first {
            first = false;
            let rest: Vec<&str> = line.split_whitespace().skip(1).collect();
            if rest.len() == 1 && key.parse::<u64>().is_ok() && rest[0].parse::<u64>().is_ok() {
                continue;
            }
        }
        parse_floats(&mut fields, line_no, &mut buf)?;
        if buf.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "no vector values".into(),
            });
        }
        let inserted = table.insert(key.to_string(), &buf).map_err(|e| match e {
            Error::DimMismatch { expected, got } => Error::Parse {
                line: line_no,
                message: format!("expected {expected} values, found {got}"),
            },
            other => other,
        })?;
        if !inserted && unique {
            return Err(Error::DuplicateId(key.to_string()));
        }
    }
    table.shrink();
    Ok(table)
}

#[derive(Deserialize)]
struct UnitRecord {
    id: String,
    vector: Vec<f32>,
}

/// Unit embeddings from JSONL (`{"id", "vector"}` per line) or the
/// whitespace text format keyed by unit id. Duplicate ids are errors.
pub fn read_unit_embeddings<R: BufRead>(mut reader: R) -> Result<ExternalEmbeddingTable> {
    let is_json = loop {
        let buf = reader.fill_buf()?;
        match buf.iter().find(|b| !b.is_ascii_whitespace()) {
            Some(&b) => break b == b'{',
            None if buf.is_empty() => return Ok(ExternalEmbeddingTable::default()),
            None => {
                let n = buf.len();
                reader.consume(n);
            }
        }
    };
    if !is_json {
        return read_text_table(reader, true);
    }
    let mut table = ExternalEmbeddingTable::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UnitRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if rec.vector.is_empty() || rec.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line: n + 1,
                message: "empty or non-finite vector".into(),
            });
        }
        if !table.insert(rec.id.clone(), &rec.vector)? {
            return Err(Error::DuplicateId(rec.id));
        }
    }
    table.shrink();
    Ok(table)
}

pub fn load_unit_embeddings(path: &Path) -> Result<ExternalEmbeddingTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_unit_embeddings(BufReader::new(file))
}

/// Random Gaussian vectors (std `1/sqrt(dim)`) for the given tokens; a
/// stand-in for pretrained word vectors on synthetic corpora.
pub fn synthesize_word_embeddings<S: AsRef<str>>(
    tokens: &[S],
    dim: usize,
    seed: u64,
) -> ExternalEmbeddingTable {
    let mut rng = seeded_rng(seed);
    let normal = Normal::new(0.0f32, 1.0 / (dim as f32).sqrt()).expect("valid std");
    let mut table = ExternalEmbeddingTable::new(dim);
    let mut v = vec![0.0f32; dim];
    for t in tokens {
        v.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
        table
            .insert(t.as_ref().to_string(), &v)
            .expect("dimension is fixed");
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn word_table() {
        let t = read_word_embeddings(Cursor::new("ai 1 2 3\nrace 0.5 -1 2e-1\n")).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("race").unwrap(), &[0.5, -1.0, 0.2]);
        assert!(t.get("war").is_none());
    }

    #[test]
    fn word_table_errors() {
        assert!(read_word_embeddings(Cursor::new("a 1 2 3\nb 1 2\n")).is_err());
        assert!(read_word_embeddings(Cursor::new("a 1 x 3\n")).is_err());
        assert!(read_word_embeddings(Cursor::new("a\n")).is_err());
    }

    #[test]
    fn word2vec_header_skipped() {
        let t = read_word_embeddings(Cursor::new("2 2\na 1 2\nb 3 4\n")).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn unit_table_jsonl() {
        let lines: String = (0..5)
            .map(|i| {
                let v: Vec<f32> = (0..768).map(|j| (i * j) as f32 * 1e-3).collect();
                serde_json::json!({"id": format!("doc#{i}"), "vector": v}).to_string() + "\n"
            })
            .collect();
        let t = read_unit_embeddings(Cursor::new(lines)).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.dim(), 768);
        assert!(t.lookup("doc#4").is_ok());
        assert!(matches!(t.lookup("doc#9"), Err(Error::MissingEmbedding(_))));
    }

    #[test]
    fn unit_table_duplicates_and_empty() {
        let dup = "{\"id\":\"a\",\"vector\":[1]}\n{\"id\":\"a\",\"vector\":[2]}\n";
        assert!(matches!(
            read_unit_embeddings(Cursor::new(dup)),
            Err(Error::DuplicateId(_))
        ));
        assert!(matches!(
            read_unit_embeddings(Cursor::new("a 1 2\na 3 4\n")),
            Err(Error::DuplicateId(_))
        ));
        let empty = read_unit_embeddings(Cursor::new("")).unwrap();
        assert!(empty.is_empty());
        assert!(empty.lookup("x").is_err());
        let mismatch = "{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[2]}\n";
        assert!(read_unit_embeddings(Cursor::new(mismatch)).is_err());
    }

    #[test]
    fn unit_table_text_format() {
        let t = read_unit_embeddings(Cursor::new("\n\nd1#0 1 2\nd1#1 3 4\n")).unwrap();
        assert_eq!(t.get("d1#1").unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn synthetic_vectors_deterministic() {
        let a = synthesize_word_embeddings(&["x", "y"], 8, 3);
        let b = synthesize_word_embeddings(&["x", "y"], 8, 3);
        assert_eq!(a, b);
        assert_eq!(a.dim(), 8);
    }
}
