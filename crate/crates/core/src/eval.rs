//! Relevance judgments over ranked lists, average precision and MAP.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simsearch::ResultBundle;

/// AP over a judged list, normalized by the relevant items in that list.
/// A list without relevant items scores 0.
pub fn average_precision(flags: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &relevant) in flags.iter().enumerate() {
        if relevant {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn mean_average_precision(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::InvalidInput("MAP of an empty list".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedRun {
    pub query_id: String,
    pub backend_id: String,
    pub flags: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Judgment {
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    pub query_id: String,
    pub backend_id: String,
    pub rank: u32,
    pub relevant: bool,
}

/// Append-only judgment log. File-backed stores sync every line before
/// acknowledging it.
#[derive(Debug, Default)]
pub struct JudgmentStore {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: Vec<Judgment>,
}

impl JudgmentStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a log file and loads its entries.
    pub fn open(path: &Path) -> Result<Self> {
        let entries = match fs::read_to_string(path) {
            Ok(text) => parse_judgments(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::read(path, e)),
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JudgmentStore {
            path: Some(path.to_owned()),
            file: Some(file),
            entries,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> &[Judgment] {
        &self.entries
    }

    fn append(&mut self, judgment: Judgment) -> Result<()> {
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_string(&judgment)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        self.entries.push(judgment);
        Ok(())
    }
}

pub fn parse_judgments(text: &str) -> Result<Vec<Judgment>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("judgment line {}: {e}", n + 1))))
        .collect()
}

fn bundle_for<'a>(bundles: &'a [ResultBundle], backend_id: &str) -> Option<&'a ResultBundle> {
    bundles.iter().find(|b| b.backend == backend_id)
}

/// Appends a judgment for a hit that exists in one of the bundles.
pub fn record_judgment(
    store: &mut JudgmentStore,
    bundles: &[ResultBundle],
    query_id: &str,
    backend_id: &str,
    rank: u32,
    relevant: bool,
    ts: u64,
) -> Result<()> {
    if !bundle_for(bundles, backend_id).is_some_and(|b| b.has_rank(query_id, rank)) {
        return Err(Error::NotFound(format!(
            "result (query `{query_id}`, backend `{backend_id}`, rank {rank})"
        )));
    }
    store.append(Judgment {
        ts,
        query_id: query_id.to_owned(),
        backend_id: backend_id.to_owned(),
        rank,
        relevant,
    })
}

/// Latest judgment per hit, cut at the first unjudged rank. Judgments that
/// do not match a bundle hit are ignored, as are lists whose first rank is
/// unjudged.
pub fn compile_runs(store: &JudgmentStore, bundles: &[ResultBundle]) -> Vec<JudgedRun> {
    let mut latest: BTreeMap<(&str, &str), HashMap<u32, bool>> = BTreeMap::new();
    for j in store.entries() {
        if bundle_for(bundles, &j.backend_id).is_some_and(|b| b.has_rank(&j.query_id, j.rank)) {
            latest
                .entry((&j.query_id, &j.backend_id))
                .or_default()
                .insert(j.rank, j.relevant);
        }
    }
    latest
        .into_iter()
        .filter_map(|((query_id, backend_id), marks)| {
            let flags: Vec<bool> = (1..).map_while(|r| marks.get(&r).copied()).collect();
            (!flags.is_empty()).then(|| JudgedRun {
                query_id: query_id.to_owned(),
                backend_id: backend_id.to_owned(),
                flags,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApRow {
    pub query_id: String,
    pub backend_id: String,
    pub ap: f64,
}

/// AP per (query, backend), ordered by query id then backend, and MAP per
/// backend.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ApRow>,
    pub map_per_backend: BTreeMap<String, f64>,
}

pub fn compile_report(store: &JudgmentStore, bundles: &[ResultBundle]) -> EvalReport {
    let rows = compile_runs(store, bundles)
        .into_iter()
        .map(|r| ApRow {
            ap: average_precision(&r.flags),
            query_id: r.query_id,
            backend_id: r.backend_id,
        })
        .collect();
    EvalReport::from_rows(rows)
}

impl EvalReport {
    pub fn from_rows(mut rows: Vec<ApRow>) -> Self {
        rows.sort_by(|a, b| (&a.query_id, &a.backend_id).cmp(&(&b.query_id, &b.backend_id)));
        let mut by_backend: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &rows {
            by_backend.entry(r.backend_id.clone()).or_default().push(r.ap);
        }
        let map_per_backend = by_backend
            .into_iter()
            .map(|(b, aps)| {
                let map = mean_average_precision(&aps).expect("grouped lists are non-empty");
                (b, map)
            })
            .collect();
        EvalReport { rows, map_per_backend }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `query_id,backend_id,ap` rows, then one `MAP,<backend>,<map>` row per
    /// backend. Numbers carry at most six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id,backend_id,ap\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.query_id, r.backend_id, format_score(r.ap)));
        }
        for (b, map) in &self.map_per_backend {
            out.push_str(&format!("MAP,{b},{}\n", format_score(*map)));
        }
        out
    }
}

/// Six decimals with trailing zeros removed: 0.74216, 1, 0.
pub fn format_score(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_owned()
    }
}

/// Reads `query_id,backend_id,ap` rows (header and `MAP` rows skipped).
pub fn parse_ap_csv(text: &str) -> Result<Vec<ApRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("query_id,") || line.starts_with("MAP,") {
            continue;
        }
        let fail = |m: &str| Error::Format(format!("AP line {}: {m}", n + 1));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let [query_id, backend_id, ap] = cols[..] else {
            return Err(fail("expected three columns"));
        };
        let ap: f64 = ap.parse().map_err(|_| fail("AP is not a number"))?;
        if !(0.0..=1.0).contains(&ap) {
            return Err(fail("AP outside [0, 1]"));
        }
        rows.push(ApRow {
            query_id: query_id.to_owned(),
            backend_id: backend_id.to_owned(),
            ap,
        });
    }
    Ok(rows)
}
