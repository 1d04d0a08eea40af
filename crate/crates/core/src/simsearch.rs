//! Ranking paragraphs against keyword+variant queries, token diffs between a
//! query and its hits, and threshold-based community detection.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ParagraphRef};
use crate::embed::{cosine_slices, EmbeddingBackend, VectorIndex};
use crate::error::{Error, Result};
use crate::textprep::{tokenize, Normalizer};

pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub keyword: String,
    pub variant_sentence: String,
    pub source_doc: Option<String>,
    pub source_page: Option<u32>,
}

impl Query {
    pub fn new(id: impl Into<String>, keyword: impl Into<String>, sentence: impl Into<String>) -> Self {
        Query {
            id: id.into(),
            keyword: keyword.into(),
            variant_sentence: sentence.into(),
            source_doc: None,
            source_page: None,
        }
    }
}

/// One line of a query file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRecord {
    id: String,
    #[serde(default)]
    keyword: String,
    sentence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    page: Option<u32>,
}

pub fn parse_queries(text: &str) -> Result<Vec<Query>> {
    let mut seen = HashSet::new();
    let mut queries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: QueryRecord = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("query line {}: {e}", n + 1)))?;
        if r.sentence.trim().is_empty() {
            return Err(Error::InvalidInput(format!("query `{}` has an empty sentence", r.id)));
        }
        if !seen.insert(r.id.clone()) {
            return Err(Error::InvalidInput(format!("duplicate query id `{}`", r.id)));
        }
        queries.push(Query {
            id: r.id,
            keyword: r.keyword,
            variant_sentence: r.sentence,
            source_doc: r.doc,
            source_page: r.page,
        });
    }
    Ok(queries)
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    parse_queries(&text)
}

pub fn queries_to_jsonl(queries: &[Query]) -> String {
    let mut out = String::new();
    for q in queries {
        let r = QueryRecord {
            id: q.id.clone(),
            keyword: q.keyword.clone(),
            sentence: q.variant_sentence.clone(),
            doc: q.source_doc.clone(),
            page: q.source_page,
        };
        out.push_str(&serde_json::to_string(&r).expect("query serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    Equal,
    OnlyQuery,
    OnlyHit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSpan {
    pub kind: DiffKind,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub reference: ParagraphRef,
    pub score: f64,
    pub text: String,
    pub context_prev: Option<String>,
    pub context_next: Option<String>,
    pub diff: Vec<DiffSpan>,
}

/// Token diff of two texts over their surface tokens.
pub fn diff_highlight(query_text: &str, hit_text: &str) -> Vec<DiffSpan> {
    let a: Vec<String> = tokenize(query_text).into_iter().map(|t| t.surface).collect();
    let b: Vec<String> = tokenize(hit_text).into_iter().map(|t| t.surface).collect();
    diff_tokens(&a, &b)
}

/// LCS alignment of two token sequences. Within each gap between common
/// tokens the query-only run comes before the hit-only run.
pub fn diff_tokens(query: &[String], hit: &[String]) -> Vec<DiffSpan> {
    let (n, m) = (query.len(), hit.len());
    let w = m + 1;
    // lcs[i * w + j] = LCS length of query[i..] and hit[j..]
    let mut lcs = vec![0u32; (n + 1) * w];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * w + j] = if query[i] == hit[j] {
                lcs[(i + 1) * w + j + 1] + 1
            } else {
                lcs[(i + 1) * w + j].max(lcs[i * w + j + 1])
            };
        }
    }

    let mut spans: Vec<DiffSpan> = Vec::new();
    let mut push = |kind: DiffKind, token: &String| match spans.last_mut() {
        Some(s) if s.kind == kind => s.tokens.push(token.clone()),
        _ => spans.push(DiffSpan {
            kind,
            tokens: vec![token.clone()],
        }),
    };
    let (mut gap_q, mut gap_h): (Vec<&String>, Vec<&String>) = (Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && query[i] == hit[j] {
            gap_q.drain(..).for_each(|t| push(DiffKind::OnlyQuery, t));
            gap_h.drain(..).for_each(|t| push(DiffKind::OnlyHit, t));
            push(DiffKind::Equal, &query[i]);
            i += 1;
            j += 1;
        } else if j == m || (i < n && lcs[(i + 1) * w + j] >= lcs[i * w + j + 1]) {
            gap_q.push(&query[i]);
            i += 1;
        } else {
            gap_h.push(&hit[j]);
            j += 1;
        }
    }
    gap_q.drain(..).for_each(|t| push(DiffKind::OnlyQuery, t));
    gap_h.drain(..).for_each(|t| push(DiffKind::OnlyHit, t));
    spans
}

/// Tokens of `spans` with the given kinds, in order.
pub fn reconstruct(spans: &[DiffSpan], side: DiffKind) -> Vec<String> {
    spans
        .iter()
        .filter(|s| s.kind == DiffKind::Equal || s.kind == side)
        .flat_map(|s| s.tokens.iter().cloned())
        .collect()
}

/// Exact cosine scan: the `top_k` rows most similar to `query`, by
/// descending score and then (doc_id, page, index).
pub fn rank(index: &VectorIndex, query: &[f64], top_k: usize) -> Result<Vec<(usize, f64)>> {
    if query.len() != index.dim() {
        return Err(Error::DimensionMismatch {
            left: index.dim(),
            right: query.len(),
        });
    }
    let mut scored = (0..index.len())
        .map(|i| cosine_slices(query, index.row_slice(i)).map(|s| (i, s)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.refs[a.0].tie_key().cmp(&index.refs[b.0].tie_key()))
    });
    scored.truncate(top_k);
    Ok(scored)
}

/// Everything a search needs, borrowed.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub corpus: &'a Corpus,
    pub index: &'a VectorIndex,
    pub backend: &'a dyn EmbeddingBackend,
    pub normalizer: &'a Normalizer,
}

impl<'a> SearchContext<'a> {
    pub fn search(&self, query: &Query, top_k: usize) -> Result<Vec<SearchHit>> {
        if self.index.backend_id != self.backend.id() {
            return Err(Error::InvalidInput(format!(
                "index was built with `{}`, not `{}`",
                self.index.backend_id,
                self.backend.id()
            )));
        }
        let tokens = self.normalizer.terms(&query.variant_sentence);
        let vector = self.backend.embed_query(&query.id, &tokens)?;
        if vector.is_zero() {
            return Err(Error::Unembeddable(format!("query `{}`", query.id)));
        }
        rank(self.index, vector.values(), top_k)?
            .into_iter()
            .map(|(row, score)| {
                let ctx = self.corpus.get_context(&self.index.refs[row])?;
                Ok(SearchHit {
                    reference: ctx.target.reference.clone(),
                    score,
                    text: ctx.target.text.clone(),
                    context_prev: ctx.previous.map(|p| p.text.clone()),
                    context_next: ctx.next.map(|p| p.text.clone()),
                    diff: diff_highlight(&query.variant_sentence, &ctx.target.text),
                })
            })
            .collect()
    }

    /// Runs every query. A failing query is recorded and the batch goes on.
    pub fn run_query_set(&self, queries: &[Query], top_k: usize) -> ResultBundle {
        let results = queries
            .par_iter()
            .map(|q| QueryResult {
                query_id: q.id.clone(),
                outcome: self.search(q, top_k).map_err(|e| e.to_string()),
            })
            .collect();
        ResultBundle {
            backend: self.backend.id(),
            results,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query_id: String,
    pub outcome: std::result::Result<Vec<SearchHit>, String>,
}

/// Ranked lists of one backend for a query set.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub backend: String,
    pub results: Vec<QueryResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HitLine {
    query_id: String,
    backend: String,
    rank: u32,
    doc: String,
    page: u32,
    para: u32,
    score: f64,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prev: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    next: Option<String>,
    diff: Vec<DiffSpan>,
}

/// A query without hits: either an error or an empty ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyLine {
    query_id: String,
    backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    hits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum BundleLine {
    Hit(HitLine),
    Empty(EmptyLine),
}

impl ResultBundle {
    pub fn hits(&self, query_id: &str) -> Option<&[SearchHit]> {
        self.results
            .iter()
            .find(|r| r.query_id == query_id)
            .and_then(|r| r.outcome.as_deref().ok())
    }

    /// Whether the bundle has a hit at 1-based `rank` for the query.
    pub fn has_rank(&self, query_id: &str, rank: u32) -> bool {
        rank >= 1 && self.hits(query_id).is_some_and(|h| rank as usize <= h.len())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let lines: Vec<BundleLine> = match &r.outcome {
                Ok(hits) if !hits.is_empty() => hits
                    .iter()
                    .enumerate()
                    .map(|(i, h)| {
                        BundleLine::Hit(HitLine {
                            query_id: r.query_id.clone(),
                            backend: self.backend.clone(),
                            rank: i as u32 + 1,
                            doc: h.reference.doc_id.clone(),
                            page: h.reference.page,
                            para: h.reference.index,
                            score: h.score,
                            text: h.text.clone(),
                            prev: h.context_prev.clone(),
                            next: h.context_next.clone(),
                            diff: h.diff.clone(),
                        })
                    })
                    .collect(),
                Ok(_) => vec![BundleLine::Empty(EmptyLine {
                    query_id: r.query_id.clone(),
                    backend: self.backend.clone(),
                    error: None,
                    hits: 0,
                })],
                Err(e) => vec![BundleLine::Empty(EmptyLine {
                    query_id: r.query_id.clone(),
                    backend: self.backend.clone(),
                    error: Some(e.clone()),
                    hits: 0,
                })],
            };
            for line in lines {
                out.push_str(&serde_json::to_string(&line).expect("bundle line serializes"));
                out.push('\n');
            }
        }
        out
    }

    /// Parses a bundle. Lines of one query must be contiguous with ranks
    /// 1, 2, ...; all lines must name the same backend.
    pub fn parse(text: &str) -> Result<Self> {
        let mut backend: Option<String> = None;
        let mut results: Vec<QueryResult> = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fail = |m: String| Error::Format(format!("bundle line {}: {m}", n + 1));
            let parsed: BundleLine = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
            let (qid, b) = match &parsed {
                BundleLine::Hit(h) => (&h.query_id, &h.backend),
                BundleLine::Empty(e) => (&e.query_id, &e.backend),
            };
            match &backend {
                None => backend = Some(b.clone()),
                Some(x) if x != b => return Err(fail(format!("mixed backends `{x}` and `{b}`"))),
                _ => {}
            }
            let continuing = results.last().is_some_and(|r| &r.query_id == qid);
            match parsed {
                BundleLine::Hit(h) => {
                    if !continuing {
                        if !seen.insert(h.query_id.clone()) {
                            return Err(fail(format!("query `{}` is not contiguous", h.query_id)));
                        }
                        results.push(QueryResult {
                            query_id: h.query_id.clone(),
                            outcome: Ok(Vec::new()),
                        });
                    }
                    let hits = match &mut results.last_mut().expect("pushed above").outcome {
                        Ok(hits) if hits.len() + 1 == h.rank as usize => hits,
                        _ => return Err(fail(format!("unexpected rank {} for `{}`", h.rank, h.query_id))),
                    };
                    hits.push(SearchHit {
                        reference: ParagraphRef::new(h.doc, h.page, h.para),
                        score: h.score,
                        text: h.text,
                        context_prev: h.prev,
                        context_next: h.next,
                        diff: h.diff,
                    });
                }
                BundleLine::Empty(e) => {
                    if continuing || !seen.insert(e.query_id.clone()) || e.hits != 0 {
                        return Err(fail(format!("unexpected entry for `{}`", e.query_id)));
                    }
                    results.push(QueryResult {
                        query_id: e.query_id,
                        outcome: e.error.map_or(Ok(Vec::new()), Err),
                    });
                }
            }
        }
        Ok(ResultBundle {
            backend: backend.unwrap_or_default(),
            results,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Community {
    pub members: Vec<ParagraphRef>,
    pub centroid_ref: ParagraphRef,
}

/// Groups rows whose cosine similarity to a seed row is at least
/// `threshold`. Candidates are the neighbor sets of every row (the row
/// included) with at least `min_size` members, taken largest first, ties by
/// seed row. A candidate whose seed is already claimed is dropped; otherwise
/// it keeps its unclaimed members if enough remain.
pub fn detect_communities(index: &VectorIndex, threshold: f64, min_size: usize) -> Result<Vec<Community>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!("threshold must be in (0, 1], got {threshold}")));
    }
    if min_size == 0 {
        return Err(Error::InvalidInput("min_size must be at least 1".into()));
    }
    let n = index.len();
    let mut unit = Array2::<f64>::zeros((n, index.dim()));
    for i in 0..n {
        let row = index.row(i);
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        unit.row_mut(i).assign(&(&row / norm));
    }
    let sims = unit.dot(&unit.t());

    let mut candidates: Vec<(usize, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let members = (0..n).filter(|&j| j == i || sims[[i, j]] >= threshold).collect();
            (i, members)
        })
        .filter(|(_, m): &(usize, Vec<usize>)| m.len() >= min_size)
        .collect();
    candidates.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));

    let mut claimed = vec![false; n];
    let mut out = Vec::new();
    for (seed, members) in candidates {
        if claimed[seed] {
            continue;
        }
        let free: Vec<usize> = members.into_iter().filter(|&j| !claimed[j]).collect();
        if free.len() < min_size {
            continue;
        }
        free.iter().for_each(|&j| claimed[j] = true);
        out.push(Community {
            members: free.iter().map(|&j| index.refs[j].clone()).collect(),
            centroid_ref: index.refs[seed].clone(),
        });
    }
    Ok(out)
}
