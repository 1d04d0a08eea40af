//! Paged plain-text corpus with paragraph-level provenance.
//!
//! Two source formats are accepted. A directory of `*.txt` files, where a
//! form feed (`0x0C`) separates pages and one or more blank lines separate
//! paragraphs, or a line-delimited record file (`.plex.jsonl`) with one
//! `{doc, page, para, text}` object per line. The serialized corpus cache is
//! the record format preceded by a header line that carries the document
//! table and a checksum over the record lines.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAGE_BREAK: char = '\x0C';
pub const RECORD_EXTENSION: &str = ".plex.jsonl";
const CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub page_count: u32,
}

/// Location of a paragraph: document, 1-based page and 0-based position
/// within the document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParagraphRef {
    pub doc_id: String,
    pub page: u32,
    pub index: u32,
}

impl ParagraphRef {
    pub fn new(doc_id: impl Into<String>, page: u32, index: u32) -> Self {
        ParagraphRef {
            doc_id: doc_id.into(),
            page,
            index,
        }
    }

    /// Key used by the vector file formats: `doc_id:index`.
    pub fn key(&self) -> String {
        format!("{}:{}", self.doc_id, self.index)
    }

    /// Ordering used to break score ties: (doc_id, page, index).
    pub fn tie_key(&self) -> (&str, u32, u32) {
        (&self.doc_id, self.page, self.index)
    }
}

impl fmt::Display for ParagraphRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} p.{} #{}", self.doc_id, self.page, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub reference: ParagraphRef,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    /// Paragraphs with fewer characters than this are dropped.
    pub min_chars: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { min_chars: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub paragraphs: usize,
    pub pages: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow<'a> {
    pub previous: Option<&'a Paragraph>,
    pub target: &'a Paragraph,
    pub next: Option<&'a Paragraph>,
}

/// Immutable paragraph store, ordered by document id and then index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    paragraphs: Vec<Paragraph>,
    lookup: HashMap<(String, u32), usize>,
    doc_lookup: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents && self.paragraphs == other.paragraphs
    }
}

impl Eq for Corpus {}

impl Corpus {
    /// Builds a corpus after checking every provenance invariant.
    pub fn new(mut documents: Vec<Document>, mut paragraphs: Vec<Paragraph>) -> Result<Self> {
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        let mut doc_lookup = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if doc.page_count == 0 {
                return Err(Error::InvalidInput(format!(
                    "document `{}` has no pages",
                    doc.id
                )));
            }
            if doc_lookup.insert(doc.id.clone(), i).is_some() {
                return Err(Error::DuplicateDocument(doc.id.clone()));
            }
        }

        paragraphs.sort_by(|a, b| {
            (&a.reference.doc_id, a.reference.index).cmp(&(&b.reference.doc_id, b.reference.index))
        });
        let mut lookup = HashMap::with_capacity(paragraphs.len());
        for (i, para) in paragraphs.iter().enumerate() {
            let r = &para.reference;
            let doc = doc_lookup
                .get(&r.doc_id)
                .map(|&d| &documents[d])
                .ok_or_else(|| Error::InvalidInput(format!("paragraph {r} names an unknown document")))?;
            if r.page < 1 || r.page > doc.page_count {
                return Err(Error::InvalidInput(format!(
                    "paragraph {r} lies outside pages 1..={}",
                    doc.page_count
                )));
            }
            if para.text.trim().is_empty() {
                return Err(Error::InvalidInput(format!("paragraph {r} is empty")));
            }
            if para.text.contains(PAGE_BREAK) {
                return Err(Error::InvalidInput(format!("paragraph {r} contains a page break")));
            }
            if lookup.insert((r.doc_id.clone(), r.index), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate paragraph index {} in document `{}`",
                    r.index, r.doc_id
                )));
            }
            if i > 0 {
                let prev = &paragraphs[i - 1].reference;
                if prev.doc_id == r.doc_id && prev.page > r.page {
                    return Err(Error::InvalidInput(format!(
                        "paragraph {r} is on an earlier page than its predecessor {prev}"
                    )));
                }
            }
        }

        Ok(Corpus {
            documents,
            paragraphs,
            lookup,
            doc_lookup,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.doc_lookup.get(id).map(|&i| &self.documents[i])
    }

    pub fn paragraph(&self, doc_id: &str, index: u32) -> Option<&Paragraph> {
        self.position(doc_id, index).map(|i| &self.paragraphs[i])
    }

    fn position(&self, doc_id: &str, index: u32) -> Option<usize> {
        // HashMap<(String, u32)> cannot be probed with a borrowed &str.
        self.lookup.get(&(doc_id.to_owned(), index)).copied()
    }

    /// Paragraphs of one document in index order.
    pub fn document_paragraphs(&self, doc_id: &str) -> &[Paragraph] {
        let start = self
            .paragraphs
            .partition_point(|p| p.reference.doc_id.as_str() < doc_id);
        let end = self
            .paragraphs
            .partition_point(|p| p.reference.doc_id.as_str() <= doc_id);
        &self.paragraphs[start..end]
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            documents: self.documents.len(),
            paragraphs: self.paragraphs.len(),
            pages: self.documents.iter().map(|d| u64::from(d.page_count)).sum(),
        }
    }

    /// Previous, target and next paragraph. Neighbors never cross a
    /// document boundary but may cross a page boundary.
    pub fn get_context(&self, reference: &ParagraphRef) -> Result<ContextWindow<'_>> {
        let pos = self
            .position(&reference.doc_id, reference.index)
            .filter(|&i| self.paragraphs[i].reference.page == reference.page)
            .ok_or_else(|| Error::NotFound(format!("paragraph {reference}")))?;
        let same_doc = |i: usize| {
            let p = &self.paragraphs[i];
            (p.reference.doc_id == reference.doc_id).then_some(p)
        };
        Ok(ContextWindow {
            previous: pos.checked_sub(1).and_then(same_doc),
            target: &self.paragraphs[pos],
            next: (pos + 1 < self.paragraphs.len()).then(|| same_doc(pos + 1)).flatten(),
        })
    }

    /// Serializes to the cache format: header line, then one record per
    /// paragraph.
    pub fn to_records(&self) -> String {
        let body = records_body(&self.paragraphs);
        let header = CacheHeader {
            clav_corpus: CACHE_FORMAT_VERSION,
            checksum: checksum(&body),
            documents: self.documents.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        out.push_str(&body);
        out
    }

    pub fn checksum(&self) -> String {
        checksum(&records_body(&self.paragraphs))
    }

    pub fn write_records(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_records())?;
        Ok(())
    }
}

/// One line of the record format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub doc: String,
    pub page: i64,
    pub para: i64,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    clav_corpus: u32,
    checksum: String,
    documents: Vec<Document>,
}

fn records_body(paragraphs: &[Paragraph]) -> String {
    let mut body = String::new();
    for p in paragraphs {
        let record = Record {
            doc: p.reference.doc_id.clone(),
            page: i64::from(p.reference.page),
            para: i64::from(p.reference.index),
            text: p.text.clone(),
        };
        body.push_str(&serde_json::to_string(&record).expect("record serializes"));
        body.push('\n');
    }
    body
}

fn checksum(body: &str) -> String {
    sha256_hex(body.as_bytes())
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Reads a corpus from a directory of paged text files or from a record file.
pub fn ingest_corpus(source: &Path, options: &IngestOptions) -> Result<Corpus> {
    let meta = fs::metadata(source).map_err(|e| Error::read(source, e))?;
    if meta.is_dir() {
        ingest_directory(source, options)
    } else {
        let text = fs::read_to_string(source).map_err(|e| Error::read(source, e))?;
        parse_records(&text, source)
    }
}

fn ingest_directory(dir: &Path, options: &IngestOptions) -> Result<Corpus> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::read(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::read(dir, e)))
        .collect::<Result<_>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "txt"));
    files.sort();

    let mut documents = Vec::with_capacity(files.len());
    let mut paragraphs = Vec::new();
    let mut seen = HashSet::new();
    for path in files {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::ingest(&path, "file name is not valid UTF-8"))?
            .to_owned();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateDocument(id));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::read(&path, e))?;
        let (doc, paras) = parse_paged_text(&id, &text, options);
        documents.push(doc);
        paragraphs.extend(paras);
    }
    Corpus::new(documents, paragraphs)
}

/// Splits one paged text into its document entry and paragraphs.
///
/// A single trailing form feed (as most extractors emit after the last page)
/// does not open a new page.
pub fn parse_paged_text(id: &str, text: &str, options: &IngestOptions) -> (Document, Vec<Paragraph>) {
    let mut pages: Vec<&str> = text.split(PAGE_BREAK).collect();
    if pages.len() > 1 && pages.last().is_some_and(|p| p.trim().is_empty()) {
        pages.pop();
    }

    let mut paragraphs = Vec::new();
    let mut index = 0u32;
    for (page_no, page) in (1u32..).zip(&pages) {
        let mut current: Vec<&str> = Vec::new();
        let mut flush = |current: &mut Vec<&str>, paragraphs: &mut Vec<Paragraph>| {
            if current.is_empty() {
                return;
            }
            let text = current.join(" ");
            current.clear();
            if text.chars().count() < options.min_chars {
                return;
            }
            paragraphs.push(Paragraph {
                reference: ParagraphRef::new(id, page_no, index),
                text,
            });
            index += 1;
        };
        for line in page.lines() {
            let line = line.trim();
            if line.is_empty() {
                flush(&mut current, &mut paragraphs);
            } else {
                current.push(line);
            }
        }
        flush(&mut current, &mut paragraphs);
    }

    let doc = Document {
        id: id.to_owned(),
        title: id.to_owned(),
        page_count: pages.len() as u32,
    };
    (doc, paragraphs)
}

/// Parses the record format, with or without the cache header line.
pub fn parse_records(text: &str, origin: &Path) -> Result<Corpus> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();

    let mut header: Option<CacheHeader> = None;
    if let Some((_, first)) = lines.peek() {
        if first.contains("\"clav_corpus\"") {
            let h: CacheHeader = serde_json::from_str(first)
                .map_err(|e| Error::ingest(origin, format!("bad cache header: {e}")))?;
            if h.clav_corpus != CACHE_FORMAT_VERSION {
                return Err(Error::ingest(
                    origin,
                    format!("unsupported cache version {}", h.clav_corpus),
                ));
            }
            header = Some(h);
            lines.next();
        }
    }

    let mut paragraphs = Vec::new();
    let mut max_page: BTreeMap<String, u32> = BTreeMap::new();
    for (line_no, line) in lines {
        let record: Record = serde_json::from_str(line)
            .map_err(|e| Error::ingest(origin, format!("line {}: {e}", line_no + 1)))?;
        if record.page < 1 {
            return Err(Error::ingest(
                origin,
                format!("line {}: page {} is below 1", line_no + 1, record.page),
            ));
        }
        let page = u32::try_from(record.page)
            .map_err(|_| Error::ingest(origin, format!("line {}: page out of range", line_no + 1)))?;
        let index = u32::try_from(record.para).map_err(|_| {
            Error::ingest(origin, format!("line {}: para {} out of range", line_no + 1, record.para))
        })?;
        let text = record.text.trim();
        if text.is_empty() {
            return Err(Error::ingest(origin, format!("line {}: empty text", line_no + 1)));
        }
        let entry = max_page.entry(record.doc.clone()).or_insert(0);
        *entry = (*entry).max(page);
        paragraphs.push(Paragraph {
            reference: ParagraphRef::new(record.doc, page, index),
            text: text.to_owned(),
        });
    }

    let documents = match header {
        Some(h) => {
            let body = records_body_sorted(&paragraphs);
            if checksum(&body) != h.checksum {
                return Err(Error::ingest(origin, "corpus checksum mismatch"));
            }
            h.documents
        }
        None => max_page
            .into_iter()
            .map(|(id, pages)| Document {
                title: id.clone(),
                id,
                page_count: pages,
            })
            .collect(),
    };
    Corpus::new(documents, paragraphs).map_err(|e| match e {
        Error::DuplicateDocument(_) => e,
        other => Error::ingest(origin, other.to_string()),
    })
}

fn records_body_sorted(paragraphs: &[Paragraph]) -> String {
    let mut sorted: Vec<Paragraph> = paragraphs.to_vec();
    sorted.sort_by(|a, b| {
        (&a.reference.doc_id, a.reference.index).cmp(&(&b.reference.doc_id, b.reference.index))
    });
    records_body(&sorted)
}
