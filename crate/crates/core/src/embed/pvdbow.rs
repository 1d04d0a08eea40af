//! PV-DBOW paragraph vectors trained with negative sampling.
//!
//! Each training step takes a paragraph and one of its tokens and pushes
//! the paragraph vector towards the token's output vector (label 1) and
//! away from `negative` tokens drawn from the unigram^0.75 distribution
//! (label 0), under the logistic loss.

use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::binio;
use crate::corpus::Paragraph;
use crate::embed::{EmbeddingBackend, Vector};
use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"CLAV";
const MODEL_VERSION: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvDbowParams {
    pub dim: usize,
    pub epochs: usize,
    pub negative: usize,
    pub lr0: f64,
    pub min_count: u64,
    pub seed: u64,
    pub infer_steps: usize,
}

impl Default for PvDbowParams {
    fn default() -> Self {
        PvDbowParams {
            dim: 100,
            epochs: 50,
            negative: 5,
            lr0: 0.025,
            min_count: 2,
            seed: 0,
            infer_steps: 50,
        }
    }
}

/// A paragraph to train on, keyed `doc_id:index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingDocument {
    pub key: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvDbow {
    params: PvDbowParams,
    vocabulary: Vec<String>,
    counts: Vec<u64>,
    word_ids: HashMap<String, usize>,
    doc_keys: Vec<String>,
    doc_ids: HashMap<String, usize>,
    doc_vectors: Array2<f64>,
    output: Array2<f64>,
    epoch_losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln(sigmoid(x))`, computed without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Logistic loss of one positive/negative target set:
/// `sum_i -ln(sigmoid(s_i * doc . out_i))` with `s_i = +1` for label 1 and
/// `-1` for label 0.
pub fn negative_sampling_loss(doc: &[f64], outputs: &[&[f64]], labels: &[bool]) -> f64 {
    outputs
        .iter()
        .zip(labels)
        .map(|(out, &label)| {
            let z = super::dot(doc, out);
            neg_log_sigmoid(if label { z } else { -z })
        })
        .sum()
}

/// Gradients of [`negative_sampling_loss`] with respect to the paragraph
/// vector and to each output vector. With `g_i = sigmoid(doc . out_i) - label_i`
/// they are `sum_i g_i out_i` and `g_i doc`.
pub fn negative_sampling_gradients(
    doc: &[f64],
    outputs: &[&[f64]],
    labels: &[bool],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut grad_doc = vec![0.0; doc.len()];
    let grad_out = outputs
        .iter()
        .zip(labels)
        .map(|(out, &label)| {
            let g = sigmoid(super::dot(doc, out)) - f64::from(u8::from(label));
            for (gd, o) in grad_doc.iter_mut().zip(out.iter()) {
                *gd += g * o;
            }
            doc.iter().map(|d| g * d).collect()
        })
        .collect();
    (grad_doc, grad_out)
}

/// One SGD step on `doc` and the touched output rows. Gradients are taken
/// at the pre-step parameters. Returns the loss.
fn sgd_step(
    doc: &mut [f64],
    output: &mut Array2<f64>,
    targets: &[(usize, bool)],
    lr: f64,
    doc_grad: &mut [f64],
) -> f64 {
    doc_grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for &(word, label) in targets {
        let mut out = output.row_mut(word);
        let out = out.as_slice_mut().expect("standard layout");
        let z = super::dot(doc, out);
        loss += neg_log_sigmoid(if label { z } else { -z });
        let g = sigmoid(z) - f64::from(u8::from(label));
        for ((gd, o), d) in doc_grad.iter_mut().zip(out.iter_mut()).zip(doc.iter()) {
            *gd += g * *o;
            *o -= lr * g * d;
        }
    }
    for (d, g) in doc.iter_mut().zip(doc_grad.iter()) {
        *d -= lr * g;
    }
    loss
}

/// Same step with the output vectors frozen.
fn inference_step(doc: &mut [f64], output: &Array2<f64>, targets: &[(usize, bool)], lr: f64, doc_grad: &mut [f64]) {
    doc_grad.iter_mut().for_each(|g| *g = 0.0);
    for &(word, label) in targets {
        let out = output.row(word);
        let out = out.as_slice().expect("standard layout");
        let g = sigmoid(super::dot(doc, out)) - f64::from(u8::from(label));
        for (gd, o) in doc_grad.iter_mut().zip(out) {
            *gd += g * o;
        }
    }
    for (d, g) in doc.iter_mut().zip(doc_grad.iter()) {
        *d -= lr * g;
    }
}

fn random_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect()
}

struct NoiseSampler {
    dist: WeightedIndex<f64>,
}

impl NoiseSampler {
    fn new(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        WeightedIndex::new(weights)
            .map(|dist| NoiseSampler { dist })
            .map_err(|e| Error::InvalidInput(format!("negative-sampling table: {e}")))
    }

    fn targets(&self, rng: &mut impl Rng, positive: usize, negative: usize, buf: &mut Vec<(usize, bool)>) {
        buf.clear();
        buf.push((positive, true));
        for _ in 0..negative {
            let w = self.dist.sample(rng);
            if w != positive {
                buf.push((w, false));
            }
        }
    }
}

/// Linear decay from `lr0` at progress 0 to `lr0 / 100` at progress 1.
fn learning_rate(lr0: f64, progress: f64) -> f64 {
    lr0 * (1.0 - 0.99 * progress.clamp(0.0, 1.0))
}

/// Trains paragraph and output vectors on the given paragraphs.
pub fn train_pvdbow(documents: &[TrainingDocument], params: &PvDbowParams) -> Result<PvDbow> {
    if params.dim == 0 || params.epochs == 0 {
        return Err(Error::InvalidInput("dim and epochs must be positive".into()));
    }
    let mut raw_counts: HashMap<&str, u64> = HashMap::new();
    for d in documents {
        for t in &d.tokens {
            *raw_counts.entry(t).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, u64)> = raw_counts
        .into_iter()
        .filter(|&(_, c)| c >= params.min_count)
        .collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let word_ids: HashMap<String, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, (w, _))| (w.to_string(), i))
        .collect();

    let mut doc_keys = Vec::new();
    let mut docs: Vec<Vec<usize>> = Vec::new();
    for d in documents {
        let ids: Vec<usize> = d.tokens.iter().filter_map(|t| word_ids.get(t).copied()).collect();
        if !ids.is_empty() {
            doc_keys.push(d.key.clone());
            docs.push(ids);
        }
    }
    if docs.len() < 2 || vocab.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "degenerate training corpus: {} trainable paragraphs, {} vocabulary entries",
            docs.len(),
            vocab.len()
        )));
    }
    let doc_ids: HashMap<String, usize> = doc_keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
    if doc_ids.len() != doc_keys.len() {
        return Err(Error::InvalidInput("duplicate training paragraph key".into()));
    }

    let counts: Vec<u64> = vocab.iter().map(|&(_, c)| c).collect();
    let noise = NoiseSampler::new(&counts)?;
    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut doc_vectors = Array2::zeros((docs.len(), dim));
    for mut row in doc_vectors.rows_mut() {
        row.assign(&ndarray::Array1::from(random_vector(&mut rng, dim)));
    }
    let mut output = Array2::zeros((vocab.len(), dim));

    let tokens_per_epoch: usize = docs.iter().map(Vec::len).sum();
    let total_steps = (tokens_per_epoch * params.epochs) as f64;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut targets = Vec::with_capacity(params.negative + 1);
    let mut doc_grad = vec![0.0; dim];
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(params.epochs);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &d in &order {
            for &w in &docs[d] {
                let lr = learning_rate(params.lr0, step as f64 / total_steps);
                noise.targets(&mut rng, w, params.negative, &mut targets);
                let mut row = doc_vectors.row_mut(d);
                let doc = row.as_slice_mut().expect("standard layout");
                epoch_loss += sgd_step(doc, &mut output, &targets, lr, &mut doc_grad);
                step += 1;
            }
        }
        epoch_losses.push(epoch_loss / tokens_per_epoch as f64);
    }

    Ok(PvDbow {
        params: *params,
        vocabulary: vocab.iter().map(|(w, _)| w.to_string()).collect(),
        counts,
        word_ids,
        doc_keys,
        doc_ids,
        doc_vectors,
        output,
        epoch_losses,
    })
}

impl PvDbow {
    pub fn params(&self) -> &PvDbowParams {
        &self.params
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.word_ids.contains_key(token)
    }

    /// Mean loss per training step, one entry per epoch.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn paragraph_keys(&self) -> &[String] {
        &self.doc_keys
    }

    /// Trained vector of a training paragraph.
    pub fn paragraph_vector(&self, key: &str) -> Option<Vector> {
        self.doc_ids
            .get(key)
            .map(|&i| Vector(self.doc_vectors.row(i).to_vec()))
    }

    /// Fits a fresh paragraph vector to `tokens` with the output vectors
    /// frozen. Tokens outside the vocabulary are ignored.
    pub fn infer_vector(&self, tokens: &[String], infer_steps: usize, seed: u64) -> Result<Vector> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("cannot infer a vector for an empty token list".into()));
        }
        let ids: Vec<usize> = tokens.iter().filter_map(|t| self.word_ids.get(t).copied()).collect();
        if ids.is_empty() {
            return Err(Error::Unembeddable("text".into()));
        }
        let noise = NoiseSampler::new(&self.counts)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc = random_vector(&mut rng, self.params.dim);
        let mut targets = Vec::with_capacity(self.params.negative + 1);
        let mut doc_grad = vec![0.0; self.params.dim];
        let total = (infer_steps * ids.len()) as f64;
        let mut step = 0usize;
        for _ in 0..infer_steps {
            for &w in &ids {
                let lr = learning_rate(self.params.lr0, step as f64 / total);
                noise.targets(&mut rng, w, self.params.negative, &mut targets);
                inference_step(&mut doc, &self.output, &targets, lr, &mut doc_grad);
                step += 1;
            }
        }
        Vector::new(doc)
    }

    /// Layout mirrors the import format, with f64 values: magic `CLAV`,
    /// version u8 = 2, dim u32, paragraph count u32, paragraph records
    /// (u16 key length + key + dim f64); then vocabulary count u32 and
    /// token records (u16 length + token + count u64 + dim f64 output
    /// vector); then the hyperparameters and per-epoch losses.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&[MODEL_VERSION])?;
        binio::write_u32(w, self.params.dim as u32)?;
        binio::write_u32(w, self.doc_keys.len() as u32)?;
        for (i, key) in self.doc_keys.iter().enumerate() {
            binio::write_str16(w, key)?;
            for &x in self.doc_vectors.row(i) {
                binio::write_f64(w, x)?;
            }
        }
        binio::write_u32(w, self.vocabulary.len() as u32)?;
        for (i, token) in self.vocabulary.iter().enumerate() {
            binio::write_str16(w, token)?;
            binio::write_u64(w, self.counts[i])?;
            for &x in self.output.row(i) {
                binio::write_f64(w, x)?;
            }
        }
        let p = &self.params;
        binio::write_u32(w, p.epochs as u32)?;
        binio::write_u32(w, p.negative as u32)?;
        binio::write_f64(w, p.lr0)?;
        binio::write_u64(w, p.min_count)?;
        binio::write_u64(w, p.seed)?;
        binio::write_u32(w, p.infer_steps as u32)?;
        binio::write_u32(w, self.epoch_losses.len() as u32)?;
        for &l in &self.epoch_losses {
            binio::write_f64(w, l)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 5];
        r.read_exact(&mut head)?;
        if &head[..4] != MODEL_MAGIC || head[4] != MODEL_VERSION {
            return Err(Error::Format("not a PV-DBOW model file".into()));
        }
        let dim = binio::read_u32(r)? as usize;
        let n_docs = binio::read_u32(r)? as usize;
        let mut doc_keys = Vec::with_capacity(n_docs);
        let mut doc_data = Vec::with_capacity(n_docs * dim);
        for _ in 0..n_docs {
            doc_keys.push(binio::read_str16(r)?);
            for _ in 0..dim {
                doc_data.push(binio::read_f64(r)?);
            }
        }
        let n_words = binio::read_u32(r)? as usize;
        let mut vocabulary = Vec::with_capacity(n_words);
        let mut counts = Vec::with_capacity(n_words);
        let mut out_data = Vec::with_capacity(n_words * dim);
        for _ in 0..n_words {
            vocabulary.push(binio::read_str16(r)?);
            counts.push(binio::read_u64(r)?);
            for _ in 0..dim {
                out_data.push(binio::read_f64(r)?);
            }
        }
        let epochs = binio::read_u32(r)? as usize;
        let negative = binio::read_u32(r)? as usize;
        let lr0 = binio::read_f64(r)?;
        let min_count = binio::read_u64(r)?;
        let seed = binio::read_u64(r)?;
        let infer_steps = binio::read_u32(r)? as usize;
        let n_losses = binio::read_u32(r)? as usize;
        let epoch_losses = (0..n_losses).map(|_| binio::read_f64(r)).collect::<Result<Vec<_>>>()?;
        let shape_err = |e: ndarray::ShapeError| Error::Format(e.to_string());
        Ok(PvDbow {
            params: PvDbowParams {
                dim,
                epochs,
                negative,
                lr0,
                min_count,
                seed,
                infer_steps,
            },
            word_ids: vocabulary.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect(),
            doc_ids: doc_keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect(),
            vocabulary,
            counts,
            doc_keys,
            doc_vectors: Array2::from_shape_vec((n_docs, dim), doc_data).map_err(shape_err)?,
            output: Array2::from_shape_vec((n_words, dim), out_data).map_err(shape_err)?,
            epoch_losses,
        })
    }
}

impl EmbeddingBackend for PvDbow {
    fn id(&self) -> String {
        "pvdbow".into()
    }

    fn dim(&self) -> usize {
        self.params.dim
    }

    fn normalized(&self) -> bool {
        false
    }

    fn embed(&self, tokens: &[String]) -> Result<Vector> {
        if tokens.is_empty() {
            return Err(Error::Unembeddable("empty text".into()));
        }
        self.infer_vector(tokens, self.params.infer_steps, self.params.seed)
    }

    /// Training paragraphs get their trained vector; others are inferred.
    fn embed_paragraph(&self, paragraph: &Paragraph, tokens: &[String]) -> Result<Vector> {
        match self.paragraph_vector(&paragraph.reference.key()) {
            Some(v) => Ok(v),
            None => self
                .embed(tokens)
                .map_err(|_| Error::Unembeddable(paragraph.reference.to_string())),
        }
    }
}
