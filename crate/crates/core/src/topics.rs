//! LDA topic model fitted by collapsed Gibbs sampling, UMass coherence,
//! topic-count selection and keyword localization.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::ops::RangeInclusive;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"CLAT";
const MODEL_VERSION: u8 = 1;

/// Normalized tokens of one document, in any order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicDocument {
    pub id: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaParams {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaParams {
    /// `alpha = 50/k`, `beta = 0.01`, 1000 sweeps.
    pub fn new(k: usize, seed: u64) -> Self {
        LdaParams {
            k,
            alpha: 50.0 / k as f64,
            beta: 0.01,
            iterations: 1000,
            seed,
        }
    }

    pub fn with_k(self, k: usize) -> Self {
        LdaParams { k, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub k: usize,
    pub vocabulary: Vec<String>,
    pub doc_ids: Vec<String>,
    /// K x V topic-term probabilities.
    pub phi: Array2<f64>,
    /// D x K document-topic probabilities.
    pub theta: Array2<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
}

/// Collapsed Gibbs sampler state. Exposed so callers can observe the count
/// tables between sweeps.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    k: usize,
    vocabulary: Vec<String>,
    doc_ids: Vec<String>,
    docs: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
    doc_topic: Vec<u32>,
    topic_word: Vec<u32>,
    topic_total: Vec<u32>,
    alpha: f64,
    beta: f64,
    seed: u64,
    sweeps: usize,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl GibbsSampler {
    /// Builds the vocabulary and draws a uniformly random initial topic for
    /// every token.
    pub fn new(documents: &[TopicDocument], params: &LdaParams) -> Result<Self> {
        if params.k < 2 {
            return Err(Error::InvalidInput(format!("k must be at least 2, got {}", params.k)));
        }
        if documents.is_empty() {
            return Err(Error::InvalidInput("cannot fit a topic model to an empty corpus".into()));
        }
        if let Some(doc) = documents.iter().find(|d| d.tokens.is_empty()) {
            return Err(Error::InvalidInput(format!("document `{}` has no tokens", doc.id)));
        }
        let total: usize = documents.iter().map(|d| d.tokens.len()).sum();
        if params.k > total {
            return Err(Error::InvalidInput(format!(
                "k = {} exceeds the corpus token count {total}",
                params.k
            )));
        }
        if !(params.alpha > 0.0 && params.beta > 0.0) {
            return Err(Error::InvalidInput("alpha and beta must be positive".into()));
        }

        let vocabulary: Vec<String> = documents
            .iter()
            .flat_map(|d| d.tokens.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let word_ids: HashMap<&str, u32> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i as u32))
            .collect();
        let docs: Vec<Vec<u32>> = documents
            .iter()
            .map(|d| d.tokens.iter().map(|t| word_ids[t.as_str()]).collect())
            .collect();

        let k = params.k;
        let v = vocabulary.len();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut doc_topic = vec![0u32; docs.len() * k];
        let mut topic_word = vec![0u32; k * v];
        let mut topic_total = vec![0u32; k];
        let assignments = docs
            .iter()
            .enumerate()
            .map(|(d, words)| {
                words
                    .iter()
                    .map(|&w| {
                        let z = rng.random_range(0..k);
                        doc_topic[d * k + z] += 1;
                        topic_word[z * v + w as usize] += 1;
                        topic_total[z] += 1;
                        z as u32
                    })
                    .collect()
            })
            .collect();

        Ok(GibbsSampler {
            k,
            vocabulary,
            doc_ids: documents.iter().map(|d| d.id.clone()).collect(),
            docs,
            assignments,
            doc_topic,
            topic_word,
            topic_total,
            alpha: params.alpha,
            beta: params.beta,
            seed: params.seed,
            sweeps: 0,
            rng,
            weights: vec![0.0; k],
        })
    }

    /// Resamples the topic of every token once.
    pub fn sweep(&mut self) {
        let k = self.k;
        let v = self.vocabulary.len();
        let v_beta = v as f64 * self.beta;
        for (d, words) in self.docs.iter().enumerate() {
            for (i, &w) in words.iter().enumerate() {
                let w = w as usize;
                let old = self.assignments[d][i] as usize;
                self.doc_topic[d * k + old] -= 1;
                self.topic_word[old * v + w] -= 1;
                self.topic_total[old] -= 1;

                let mut cumulative = 0.0;
                for t in 0..k {
                    let p = (f64::from(self.doc_topic[d * k + t]) + self.alpha)
                        * (f64::from(self.topic_word[t * v + w]) + self.beta)
                        / (f64::from(self.topic_total[t]) + v_beta);
                    cumulative += p;
                    self.weights[t] = cumulative;
                }
                let u = self.rng.random::<f64>() * cumulative;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.assignments[d][i] = new as u32;
                self.doc_topic[d * k + new] += 1;
                self.topic_word[new * v + w] += 1;
                self.topic_total[new] += 1;
            }
        }
        self.sweeps += 1;
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    /// Checks that the count tables agree with the token totals: the
    /// topic-word table sums to the corpus size and each document's
    /// topic counts sum to its length.
    pub fn check_counts(&self) -> std::result::Result<(), String> {
        let k = self.k;
        let word_total: u64 = self.topic_word.iter().map(|&c| u64::from(c)).sum();
        if word_total != self.total_tokens() as u64 {
            return Err(format!(
                "topic-word counts sum to {word_total}, corpus has {} tokens",
                self.total_tokens()
            ));
        }
        let v = self.vocabulary.len();
        for t in 0..k {
            let row: u64 = self.topic_word[t * v..(t + 1) * v].iter().map(|&c| u64::from(c)).sum();
            if row != u64::from(self.topic_total[t]) {
                return Err(format!("topic {t}: row sum {row} != total {}", self.topic_total[t]));
            }
        }
        for (d, words) in self.docs.iter().enumerate() {
            let s: u64 = self.doc_topic[d * k..(d + 1) * k].iter().map(|&c| u64::from(c)).sum();
            if s != words.len() as u64 {
                return Err(format!("document {d}: topic counts sum to {s}, length {}", words.len()));
            }
        }
        Ok(())
    }

    /// Smoothed point estimates from the current counts.
    pub fn model(&self) -> TopicModel {
        let k = self.k;
        let v = self.vocabulary.len();
        let d = self.docs.len();
        let phi = Array2::from_shape_fn((k, v), |(t, w)| {
            (f64::from(self.topic_word[t * v + w]) + self.beta)
                / (f64::from(self.topic_total[t]) + v as f64 * self.beta)
        });
        let theta = Array2::from_shape_fn((d, k), |(doc, t)| {
            (f64::from(self.doc_topic[doc * k + t]) + self.alpha)
                / (self.docs[doc].len() as f64 + k as f64 * self.alpha)
        });
        TopicModel {
            k,
            vocabulary: self.vocabulary.clone(),
            doc_ids: self.doc_ids.clone(),
            phi,
            theta,
            alpha: self.alpha,
            beta: self.beta,
            seed: self.seed,
            iterations: self.sweeps,
        }
    }
}

pub fn fit_lda(documents: &[TopicDocument], params: &LdaParams) -> Result<TopicModel> {
    if params.iterations < 1 {
        return Err(Error::InvalidInput("at least one Gibbs sweep is required".into()));
    }
    let mut sampler = GibbsSampler::new(documents, params)?;
    for _ in 0..params.iterations {
        sampler.sweep();
    }
    Ok(sampler.model())
}

impl TopicModel {
    pub fn num_docs(&self) -> usize {
        self.theta.nrows()
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.vocabulary.binary_search_by(|w| w.as_str().cmp(term)).ok()
    }

    /// Terms ranked by descending probability, ties by vocabulary order.
    pub fn top_terms(&self, topic: usize, n: usize) -> Result<Vec<(String, f64)>> {
        Ok(self
            .top_term_ids(topic, n)?
            .into_iter()
            .map(|w| (self.vocabulary[w].clone(), self.phi[[topic, w]]))
            .collect())
    }

    fn top_term_ids(&self, topic: usize, n: usize) -> Result<Vec<usize>> {
        if topic >= self.k {
            return Err(Error::NotFound(format!("topic {topic} (model has {})", self.k)));
        }
        if n < 1 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        let row = self.phi.row(topic);
        let mut ids: Vec<usize> = (0..self.vocabulary.len()).collect();
        ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        ids.truncate(n);
        Ok(ids)
    }

    /// Binary layout, little-endian: magic `CLAT`, version u8, k u32, V u32,
    /// D u32, alpha f64, beta f64, seed u64, iterations u32; then phi and
    /// theta as row-major f64; then the vocabulary and the document ids as
    /// u32-length-prefixed UTF-8 strings.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&[MODEL_VERSION])?;
        for n in [self.k, self.vocabulary.len(), self.num_docs()] {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        w.write_all(&self.alpha.to_le_bytes())?;
        w.write_all(&self.beta.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.iterations as u32).to_le_bytes())?;
        for x in self.phi.iter().chain(self.theta.iter()) {
            w.write_all(&x.to_le_bytes())?;
        }
        for s in self.vocabulary.iter().chain(&self.doc_ids) {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic[..4] != MODEL_MAGIC || magic[4] != MODEL_VERSION {
            return Err(Error::Format("not a topic model file".into()));
        }
        let k = read_u32(r)? as usize;
        let v = read_u32(r)? as usize;
        let d = read_u32(r)? as usize;
        let alpha = read_f64(r)?;
        let beta = read_f64(r)?;
        let seed = read_u64(r)?;
        let iterations = read_u32(r)? as usize;
        let phi = (0..k * v).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let theta = (0..d * k).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let vocabulary = (0..v).map(|_| read_string(r)).collect::<Result<Vec<_>>>()?;
        let doc_ids = (0..d).map(|_| read_string(r)).collect::<Result<Vec<_>>>()?;
        let shape_err = |e: ndarray::ShapeError| Error::Format(e.to_string());
        Ok(TopicModel {
            k,
            vocabulary,
            doc_ids,
            phi: Array2::from_shape_vec((k, v), phi).map_err(shape_err)?,
            theta: Array2::from_shape_vec((d, k), theta).map_err(shape_err)?,
            alpha,
            beta,
            seed,
            iterations,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub per_topic: Vec<f64>,
    pub mean: f64,
    pub top_n: usize,
}

/// Document sets per term, for co-occurrence counting.
#[derive(Debug, Clone, Default)]
pub struct DocumentFrequencies {
    docs_with: HashMap<String, Vec<u32>>,
}

impl DocumentFrequencies {
    pub fn new(documents: &[TopicDocument]) -> Self {
        let mut docs_with: HashMap<String, Vec<u32>> = HashMap::new();
        for (d, doc) in documents.iter().enumerate() {
            for term in doc.tokens.iter().collect::<BTreeSet<_>>() {
                docs_with.entry(term.clone()).or_default().push(d as u32);
            }
        }
        DocumentFrequencies { docs_with }
    }

    pub fn df(&self, term: &str) -> usize {
        self.docs_with.get(term).map_or(0, Vec::len)
    }

    pub fn co_df(&self, a: &str, b: &str) -> usize {
        let (Some(x), Some(y)) = (self.docs_with.get(a), self.docs_with.get(b)) else {
            return 0;
        };
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// UMass coherence of an ordered term list: the sum over ordered pairs
/// `j < i` of `ln((D(w_i, w_j) + 1) / D(w_j))`, skipping pairs where
/// `D(w_j) = 0`.
pub fn umass_score(terms: &[&str], freqs: &DocumentFrequencies) -> f64 {
    let mut score = 0.0;
    for i in 1..terms.len() {
        for j in 0..i {
            let dj = freqs.df(terms[j]);
            if dj == 0 {
                continue;
            }
            let co = freqs.co_df(terms[i], terms[j]);
            score += ((co as f64 + 1.0) / dj as f64).ln();
        }
    }
    score
}

pub fn coherence(model: &TopicModel, documents: &[TopicDocument], top_n: usize) -> Result<CoherenceReport> {
    if top_n < 2 {
        return Err(Error::InvalidInput("coherence needs top_n of at least 2".into()));
    }
    let freqs = DocumentFrequencies::new(documents);
    let per_topic = (0..model.k)
        .map(|t| {
            let ids = model.top_term_ids(t, top_n)?;
            let terms: Vec<&str> = ids.iter().map(|&w| model.vocabulary[w].as_str()).collect();
            Ok(umass_score(&terms, &freqs))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(CoherenceReport {
        per_topic,
        mean,
        top_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub best_k: usize,
    pub scores: Vec<(usize, f64)>,
}

/// Fits one model per k (seeded with `params.seed + k`) and keeps the k
/// with the highest mean coherence; ties go to the smaller k.
pub fn select_k(
    documents: &[TopicDocument],
    k_range: RangeInclusive<usize>,
    params: &LdaParams,
    top_n: usize,
) -> Result<KSelection> {
    if k_range.is_empty() || *k_range.start() < 2 {
        return Err(Error::InvalidInput(format!(
            "k range {}..={} must be non-empty and start at 2 or more",
            k_range.start(),
            k_range.end()
        )));
    }
    let scores = k_range
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let p = LdaParams {
                k,
                seed: params.seed.wrapping_add(k as u64),
                ..*params
            };
            let model = fit_lda(documents, &p)?;
            Ok((k, coherence(&model, documents, top_n)?.mean))
        })
        .collect::<Result<Vec<_>>>()?;
    let best_k = scores
        .iter()
        .fold(None::<(usize, f64)>, |best, &(k, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((k, c)),
        })
        .map(|(k, _)| k)
        .expect("range is non-empty");
    Ok(KSelection { best_k, scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordLocation {
    pub keyword: String,
    pub out_of_vocabulary: bool,
    pub topics: Vec<usize>,
    pub documents: Vec<String>,
}

/// For each keyword: the topics listing it among their `top_n` terms, and
/// the documents whose weight on one of those topics exceeds
/// `theta_threshold`.
pub fn locate_keywords(
    model: &TopicModel,
    keywords: &[String],
    top_n: usize,
    theta_threshold: f64,
) -> Result<Vec<KeywordLocation>> {
    let top_sets: Vec<BTreeSet<usize>> = (0..model.k)
        .map(|t| model.top_term_ids(t, top_n).map(|ids| ids.into_iter().collect()))
        .collect::<Result<_>>()?;
    Ok(keywords
        .iter()
        .map(|keyword| {
            let Some(w) = model.term_index(keyword) else {
                return KeywordLocation {
                    keyword: keyword.clone(),
                    out_of_vocabulary: true,
                    topics: Vec::new(),
                    documents: Vec::new(),
                };
            };
            let topics: Vec<usize> = (0..model.k).filter(|&t| top_sets[t].contains(&w)).collect();
            let documents = (0..model.num_docs())
                .filter(|&d| topics.iter().any(|&t| model.theta[[d, t]] > theta_threshold))
                .map(|d| model.doc_ids[d].clone())
                .collect();
            KeywordLocation {
                keyword: keyword.clone(),
                out_of_vocabulary: false,
                topics,
                documents,
            }
        })
        .collect())
}
