//! Paragraph embeddings behind one interface, plus the cosine-searchable
//! paragraph index.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::corpus::{Corpus, Paragraph, ParagraphRef};
use crate::error::{Error, Result};
use crate::textprep::Normalizer;

mod binio;
pub mod import;
pub mod pvdbow;
pub mod tfidf;

pub use import::{load_import_backend, write_import_file, ImportBackend};
pub use pvdbow::{train_pvdbow, PvDbow, PvDbowParams, TrainingDocument};
pub use tfidf::{fit_tfidf, TfIdf};

const INDEX_MAGIC: &[u8; 4] = b"CLAI";
const INDEX_VERSION: u8 = 1;

/// Dense embedding with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("vector must have at least one dimension".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("vector has non-finite entries".into()));
        }
        Ok(Vector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &Vector, v: &Vector) -> Result<f64> {
    cosine_slices(u.values(), v.values())
}

pub fn cosine_slices(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// A paragraph embedding model.
///
/// `embed` handles free text. Paragraphs and queries go through their own
/// hooks so backends holding precomputed vectors (trained paragraph
/// vectors, imported files) can serve those instead.
pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    /// Whether every produced vector has unit length.
    fn normalized(&self) -> bool;

    fn embed(&self, tokens: &[String]) -> Result<Vector>;

    fn embed_paragraph(&self, paragraph: &Paragraph, tokens: &[String]) -> Result<Vector> {
        self.embed(tokens)
            .map_err(|e| rename_unembeddable(e, &paragraph.reference.to_string()))
    }

    fn embed_query(&self, query_id: &str, tokens: &[String]) -> Result<Vector> {
        self.embed(tokens)
            .map_err(|e| rename_unembeddable(e, &format!("query `{query_id}`")))
    }
}

fn rename_unembeddable(e: Error, what: &str) -> Error {
    match e {
        Error::Unembeddable(_) => Error::Unembeddable(what.to_owned()),
        other => other,
    }
}

/// Exact-scan index: one row per embeddable paragraph, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    pub backend_id: String,
    pub normalized: bool,
    pub refs: Vec<ParagraphRef>,
    pub matrix: Array2<f64>,
}

impl VectorIndex {
    pub fn empty(backend_id: impl Into<String>, dim: usize, normalized: bool) -> Self {
        VectorIndex {
            backend_id: backend_id.into(),
            normalized,
            refs: Vec::new(),
            matrix: Array2::zeros((0, dim)),
        }
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(i)
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        self.matrix
            .row(i)
            .to_slice()
            .expect("index matrix is in standard layout")
    }

    /// Binary layout, little-endian: magic `CLAI`, version u8, backend id
    /// (u16 length + UTF-8), normalized flag u8, dim u32, count u32; then per
    /// row: doc id (u16 length + UTF-8), page u32, index u32, dim f64 values.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&[INDEX_VERSION])?;
        binio::write_str16(w, &self.backend_id)?;
        w.write_all(&[u8::from(self.normalized)])?;
        binio::write_u32(w, self.dim() as u32)?;
        binio::write_u32(w, self.len() as u32)?;
        for (i, r) in self.refs.iter().enumerate() {
            binio::write_str16(w, &r.doc_id)?;
            binio::write_u32(w, r.page)?;
            binio::write_u32(w, r.index)?;
            for x in self.matrix.row(i) {
                w.write_all(&x.to_le_bytes())?;
            }
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
        if &head[..4] != INDEX_MAGIC || head[4] != INDEX_VERSION {
            return Err(Error::Format("not a vector index file".into()));
        }
        let backend_id = binio::read_str16(r)?;
        let normalized = binio::read_u8(r)? != 0;
        let dim = binio::read_u32(r)? as usize;
        let count = binio::read_u32(r)? as usize;
        let mut refs = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for _ in 0..count {
            let doc_id = binio::read_str16(r)?;
            let page = binio::read_u32(r)?;
            let index = binio::read_u32(r)?;
            refs.push(ParagraphRef { doc_id, page, index });
            for _ in 0..dim {
                data.push(binio::read_f64(r)?);
            }
        }
        let matrix = Array2::from_shape_vec((count, dim), data).map_err(|e| Error::Format(e.to_string()))?;
        Ok(VectorIndex {
            backend_id,
            normalized,
            refs,
            matrix,
        })
    }
}

/// Paragraphs left out of an index, with the reason.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkipReport {
    pub skipped: Vec<(ParagraphRef, String)>,
}

impl SkipReport {
    pub fn len(&self) -> usize {
        self.skipped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skipped.is_empty()
    }
}

/// Embeds every paragraph of the corpus. Unembeddable paragraphs are left
/// out and listed in the skip report; other errors abort.
pub fn build_index(
    corpus: &Corpus,
    backend: &dyn EmbeddingBackend,
    normalizer: &Normalizer,
) -> Result<(VectorIndex, SkipReport)> {
    let embedded: Vec<Result<Vector>> = corpus
        .paragraphs()
        .par_iter()
        .map(|p| backend.embed_paragraph(p, &normalizer.terms(&p.text)))
        .collect();

    let dim = backend.dim();
    let mut refs = Vec::new();
    let mut data = Vec::new();
    let mut report = SkipReport::default();
    for (p, result) in corpus.paragraphs().iter().zip(embedded) {
        match result {
            Ok(v) => {
                if v.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        left: dim,
                        right: v.dim(),
                    });
                }
                refs.push(p.reference.clone());
                data.extend(v.into_inner());
            }
            Err(Error::Unembeddable(_)) | Err(Error::ZeroVector) => {
                report.skipped.push((p.reference.clone(), "no in-vocabulary tokens".into()));
            }
            Err(e) => return Err(e),
        }
    }
    let matrix = Array2::from_shape_vec((refs.len(), dim), data).expect("row lengths checked");
    Ok((
        VectorIndex {
            backend_id: backend.id(),
            normalized: backend.normalized(),
            refs,
            matrix,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_identity_orthogonal_and_hand_value() {
        assert!((cosine(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let c = cosine(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap();
        assert!((c - 0.974_631_846_197_076_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(Error::ZeroVector)));
        assert!(matches!(
            cosine(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Vector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn index_binary_round_trip() {
        let index = VectorIndex {
            backend_id: "tfidf".into(),
            normalized: true,
            refs: vec![ParagraphRef::new("a", 1, 0), ParagraphRef::new("bå", 3, 7)],
            matrix: Array2::from_shape_vec((2, 2), vec![0.1, -2.5, 1e-300, 3.0]).unwrap(),
        };
        let back = VectorIndex::read_from(&mut index.to_bytes().as_slice()).unwrap();
        assert_eq!(back, index);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            u in proptest::collection::vec(-10.0f64..10.0, 5),
            w in proptest::collection::vec(-10.0f64..10.0, 5),
            a in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&u) > 1e-6 && norm(&w) > 1e-6);
            let (uu, ww) = (v(&u), v(&w));
            prop_assert_eq!(cosine(&uu, &ww).unwrap(), cosine(&ww, &uu).unwrap());
            let scaled = v(&u.iter().map(|x| x * a).collect::<Vec<_>>());
            prop_assert!((cosine(&scaled, &ww).unwrap() - cosine(&uu, &ww).unwrap()).abs() < 1e-12);
        }
    }
}
