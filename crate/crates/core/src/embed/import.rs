//! Externally computed vectors, served verbatim.
//!
//! File layout, little-endian: magic `CLAV`, version u8 = 1, dim u32,
//! count u32; then per record a u16 key length, the UTF-8 key
//! (`doc_id:index` or `query:<id>`) and dim f32 values.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::binio;
use crate::corpus::{Corpus, Paragraph};
use crate::embed::{build_index, EmbeddingBackend, SkipReport, Vector, VectorIndex};
use crate::error::{Error, Result};
use crate::textprep::Normalizer;

const MAGIC: &[u8; 4] = b"CLAV";
const VERSION: u8 = 1;
pub const QUERY_PREFIX: &str = "query:";

#[derive(Debug, Clone, PartialEq)]
pub struct ImportBackend {
    name: String,
    dim: usize,
    keys: Vec<String>,
    vectors: HashMap<String, Vector>,
}

impl ImportBackend {
    /// Parses an import file. Truncated input and records that disagree with
    /// the header dimension are format errors.
    pub fn read_from(name: &str, r: &mut impl Read) -> Result<Self> {
        Self::parse(name, r).map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Format("truncated import file (records disagree with the header dimension?)".into())
            }
            other => other,
        })
    }

    fn parse(name: &str, r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 5];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("missing CLAV magic".into()));
        }
        if head[4] != VERSION {
            return Err(Error::Format(format!("unsupported import version {}", head[4])));
        }
        let dim = binio::read_u32(r)? as usize;
        if dim == 0 {
            return Err(Error::Format("import dimension is zero".into()));
        }
        let count = binio::read_u32(r)? as usize;
        let mut keys = Vec::with_capacity(count);
        let mut vectors = HashMap::with_capacity(count);
        for _ in 0..count {
            let key = binio::read_str16(r)?;
            let values = (0..dim)
                .map(|_| binio::read_f32(r).map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            let vector = Vector::new(values).map_err(|e| Error::Format(format!("record `{key}`: {e}")))?;
            if vectors.insert(key.clone(), vector).is_some() {
                return Err(Error::Format(format!("duplicate key `{key}`")));
            }
            keys.push(key);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format(
                "trailing bytes after the last record (records disagree with the header dimension)".into(),
            ));
        }
        Ok(ImportBackend {
            name: name.to_owned(),
            dim,
            keys,
            vectors,
        })
    }

    pub fn open(name: &str, path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::read(path, e))?;
        Self::read_from(name, &mut BufReader::new(file))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Keys in file order.
    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn get(&self, key: &str) -> Option<&Vector> {
        self.vectors.get(key)
    }

    pub fn query_vector(&self, query_id: &str) -> Option<&Vector> {
        self.vectors.get(&format!("{QUERY_PREFIX}{query_id}"))
    }

    /// Errors on the first paragraph key that does not name a corpus
    /// paragraph.
    pub fn check_keys(&self, corpus: &Corpus) -> Result<()> {
        for key in self.keys.iter().filter(|k| !k.starts_with(QUERY_PREFIX)) {
            let resolved = key
                .rsplit_once(':')
                .and_then(|(doc, idx)| Some((doc, idx.parse::<u32>().ok()?)))
                .and_then(|(doc, idx)| corpus.paragraph(doc, idx));
            if resolved.is_none() {
                return Err(Error::Format(format!("key `{key}` does not name a corpus paragraph")));
            }
        }
        Ok(())
    }
}

impl EmbeddingBackend for ImportBackend {
    fn id(&self) -> String {
        format!("import:{}", self.name)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn normalized(&self) -> bool {
        false
    }

    fn embed(&self, _tokens: &[String]) -> Result<Vector> {
        Err(Error::Unembeddable(
            "free text (imported vectors only cover keyed paragraphs and queries)".into(),
        ))
    }

    fn embed_paragraph(&self, paragraph: &Paragraph, _tokens: &[String]) -> Result<Vector> {
        self.get(&paragraph.reference.key())
            .cloned()
            .ok_or_else(|| Error::Unembeddable(paragraph.reference.to_string()))
    }

    fn embed_query(&self, query_id: &str, _tokens: &[String]) -> Result<Vector> {
        self.query_vector(query_id)
            .cloned()
            .ok_or_else(|| Error::Unembeddable(format!("query `{query_id}`")))
    }
}

/// Writes records in the import format. Values are stored as f32.
pub fn write_import(w: &mut impl Write, dim: usize, records: &[(String, Vec<f64>)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    binio::write_u32(w, dim as u32)?;
    binio::write_u32(w, records.len() as u32)?;
    for (key, values) in records {
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: values.len(),
            });
        }
        binio::write_str16(w, key)?;
        for &x in values {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_import_file(path: &Path, dim: usize, records: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_import(&mut w, dim, records)?;
    w.flush()?;
    Ok(())
}

/// Opens an import file and indexes the corpus paragraphs it covers.
/// Paragraph keys that do not resolve in the corpus are rejected.
pub fn load_import_backend(
    name: &str,
    path: &Path,
    corpus: &Corpus,
    normalizer: &Normalizer,
) -> Result<(ImportBackend, VectorIndex, SkipReport)> {
    let backend = ImportBackend::open(name, path)?;
    backend
        .check_keys(corpus)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (index, skipped) = build_index(corpus, &backend, normalizer)?;
    Ok((backend, index, skipped))
}
