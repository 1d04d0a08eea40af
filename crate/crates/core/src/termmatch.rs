//! Term-match frequencies between feature configurations and document pages.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::textprep::Normalizer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub id: String,
    pub name: String,
    pub terms: BTreeSet<String>,
}

impl FeatureConfig {
    /// Extracts the term set from `text`; a configuration without terms is
    /// rejected.
    pub fn from_text(id: &str, name: &str, text: &str, norm: &Normalizer) -> Result<Self> {
        let terms = extract_terms(text, norm);
        if terms.is_empty() {
            return Err(Error::InvalidInput(format!(
                "feature configuration `{id}` has no terms"
            )));
        }
        Ok(FeatureConfig {
            id: id.to_owned(),
            name: name.to_owned(),
            terms,
        })
    }
}

/// Input line of a feature configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TruthMark {
    pub config: String,
    pub page: u32,
}

/// Rows are configurations, columns are pages `1..=page_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermMatchMatrix {
    pub config_ids: Vec<String>,
    pub doc_id: String,
    pub page_count: u32,
    pub cells: Vec<Vec<u64>>,
    pub truth_marks: BTreeSet<TruthMark>,
}

impl TermMatchMatrix {
    pub fn cell(&self, config: usize, page: u32) -> u64 {
        self.cells[config][page as usize - 1]
    }

    /// Comma-separated integer cells, one line per configuration.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.cells {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn sidecar(&self) -> HeatmapSidecar {
        HeatmapSidecar {
            doc_id: self.doc_id.clone(),
            configs: self.config_ids.clone(),
            pages: self.page_count,
            truth: self.truth_marks.iter().cloned().collect(),
        }
    }

    pub fn sidecar_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serializes");
        s.push('\n');
        s
    }

    /// Rebuilds a matrix from the two emitted files' contents.
    pub fn from_parts(csv: &str, sidecar: &HeatmapSidecar) -> Result<Self> {
        let cells: Vec<Vec<u64>> = csv
            .lines()
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<u64>()
                            .map_err(|e| Error::Format(format!("heatmap cell `{c}`: {e}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        if cells.len() != sidecar.configs.len()
            || cells.iter().any(|r| r.len() != sidecar.pages as usize)
        {
            return Err(Error::Format(
                "heatmap CSV shape does not match its sidecar".into(),
            ));
        }
        Ok(TermMatchMatrix {
            config_ids: sidecar.configs.clone(),
            doc_id: sidecar.doc_id.clone(),
            page_count: sidecar.pages,
            cells,
            truth_marks: sidecar.truth.iter().cloned().collect(),
        })
    }
}

/// JSON sidecar written next to the CSV: labels plus ground-truth marks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub doc_id: String,
    pub configs: Vec<String>,
    pub pages: u32,
    pub truth: Vec<TruthMark>,
}

pub fn extract_terms(config_text: &str, norm: &Normalizer) -> BTreeSet<String> {
    norm.terms(config_text).into_iter().collect()
}

/// Counts, per configuration and page, the tokens whose normalized form is
/// one of the configuration's terms.
pub fn match_matrix(
    configs: &[FeatureConfig],
    doc_id: &str,
    corpus: &Corpus,
    norm: &Normalizer,
) -> Result<TermMatchMatrix> {
    let doc = corpus
        .document(doc_id)
        .ok_or_else(|| Error::NotFound(format!("document `{doc_id}`")))?;

    // term -> rows that contain it
    let mut rows_by_term: HashMap<&str, Vec<usize>> = HashMap::new();
    for (row, config) in configs.iter().enumerate() {
        for term in &config.terms {
            rows_by_term.entry(term.as_str()).or_default().push(row);
        }
    }

    let mut cells = vec![vec![0u64; doc.page_count as usize]; configs.len()];
    for para in corpus.document_paragraphs(doc_id) {
        let col = para.reference.page as usize - 1;
        for token in norm.process(&para.text) {
            if let Some(rows) = rows_by_term.get(token.normalized.as_str()) {
                for &row in rows {
                    cells[row][col] += 1;
                }
            }
        }
    }

    Ok(TermMatchMatrix {
        config_ids: configs.iter().map(|c| c.id.clone()).collect(),
        doc_id: doc_id.to_owned(),
        page_count: doc.page_count,
        cells,
        truth_marks: BTreeSet::new(),
    })
}

pub fn heatmap_paths(dir: &Path, doc_id: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{doc_id}.heatmap.csv")),
        dir.join(format!("{doc_id}.truth.json")),
    )
}

/// Writes `<doc_id>.heatmap.csv` and `<doc_id>.truth.json` into `dir`.
pub fn emit_heatmap(matrix: &TermMatchMatrix, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let (csv_path, json_path) = heatmap_paths(dir, &matrix.doc_id);
    fs::write(&csv_path, matrix.to_csv())?;
    fs::write(&json_path, matrix.sidecar_json())?;
    Ok((csv_path, json_path))
}

pub fn read_heatmap(dir: &Path, doc_id: &str) -> Result<TermMatchMatrix> {
    let (csv_path, json_path) = heatmap_paths(dir, doc_id);
    let csv = fs::read_to_string(&csv_path).map_err(|e| Error::read(&csv_path, e))?;
    let json = fs::read_to_string(&json_path).map_err(|e| Error::read(&json_path, e))?;
    TermMatchMatrix::from_parts(&csv, &serde_json::from_str(&json)?)
}

/// Reads `{id, name, text}` lines and extracts each configuration's terms.
pub fn read_feature_configs(path: &Path, norm: &Normalizer) -> Result<Vec<FeatureConfig>> {
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    let mut configs = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: FeatureRecord = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), n + 1)))?;
        configs.push(FeatureConfig::from_text(&rec.id, &rec.name, &rec.text, norm)?);
    }
    Ok(configs)
}

/// Reads `{config, page}` lines. Marks for other documents may carry a
/// `doc` field and are filtered by the caller.
pub fn read_truth_marks(path: &Path) -> Result<Vec<(Option<String>, TruthMark)>> {
    #[derive(Deserialize)]
    struct Line {
        doc: Option<String>,
        config: String,
        page: u32,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let line: Line = serde_json::from_str(l)?;
            Ok((
                line.doc,
                TruthMark {
                    config: line.config,
                    page: line.page,
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_paged_text, IngestOptions};
    use crate::textprep::NormalizationConfig;
    use std::collections::HashSet;

    fn no_stem() -> Normalizer {
        Normalizer::load(&NormalizationConfig {
            stem: false,
            ..Default::default()
        })
        .unwrap()
    }

    fn corpus_of(text: &str) -> Corpus {
        let (doc, paras) = parse_paged_text("d", text, &IngestOptions { min_chars: 1 });
        Corpus::new(vec![doc], paras).unwrap()
    }

    #[test]
    fn extract_terms_composes_pipeline() {
        let terms = extract_terms("Semesteravdrag 4,6%", &no_stem());
        let expected: BTreeSet<String> = ["semesteravdrag", "4,6", "%"].iter().map(|s| s.to_string()).collect();
        assert_eq!(terms, expected);
        assert!(extract_terms("", &no_stem()).is_empty());
        assert_eq!(extract_terms("lön lön lön", &no_stem()).len(), 1);
    }

    #[test]
    fn empty_config_is_rejected() {
        assert!(FeatureConfig::from_text("c", "c", "", &no_stem()).is_err());
    }

    #[test]
    fn counts_occurrences_not_distinct_terms() {
        let norm = Normalizer::from_parts(
            NormalizationConfig { min_len: 1, stem: false, ..Default::default() },
            HashSet::new(),
            Vec::new(),
            None,
        );
        let corpus = corpus_of("x y x");
        let config = FeatureConfig { id: "c".into(), name: "c".into(), terms: ["x".to_string()].into() };
        let missing = FeatureConfig { id: "m".into(), name: "m".into(), terms: ["z".to_string()].into() };
        let m = match_matrix(&[config, missing], "d", &corpus, &norm).unwrap();
        assert_eq!(m.cell(0, 1), 2);
        assert!(m.cells[1].iter().all(|&c| c == 0));
    }

    #[test]
    fn unknown_document_is_not_found() {
        let corpus = corpus_of("text");
        let err = match_matrix(&[], "nope", &corpus, &no_stem()).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }

    #[test]
    fn minimal_csv_and_sidecar() {
        let mut m = TermMatchMatrix {
            config_ids: vec!["c1".into()],
            doc_id: "d".into(),
            page_count: 1,
            cells: vec![vec![3]],
            truth_marks: BTreeSet::new(),
        };
        assert_eq!(m.to_csv().trim_end(), "3");
        m.truth_marks.insert(TruthMark { config: "c1".into(), page: 5 });
        let v: serde_json::Value = serde_json::from_str(&m.sidecar_json()).unwrap();
        assert_eq!(v["truth"][0], serde_json::json!({"config": "c1", "page": 5}));
    }

    #[test]
    fn csv_shape_mismatch_is_format_error() {
        let sidecar = HeatmapSidecar { doc_id: "d".into(), configs: vec!["a".into()], pages: 2, truth: vec![] };
        assert!(TermMatchMatrix::from_parts("1,2,3\n", &sidecar).is_err());
        assert!(TermMatchMatrix::from_parts("1,x\n", &sidecar).is_err());
    }
}
