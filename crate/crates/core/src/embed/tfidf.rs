use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::embed::{EmbeddingBackend, Vector};
use crate::error::{Error, Result};

/// Smoothed TF-IDF over the corpus vocabulary, L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdf {
    vocabulary: Vec<String>,
    positions: HashMap<String, usize>,
    idf: Vec<f64>,
    documents: usize,
}

/// Fits vocabulary and `idf(w) = ln((1 + D) / (1 + df(w))) + 1`.
pub fn fit_tfidf(corpus_tokens: &[Vec<String>]) -> Result<TfIdf> {
    if corpus_tokens.is_empty() {
        return Err(Error::InvalidInput("cannot fit TF-IDF to an empty corpus".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in corpus_tokens {
        for t in tokens.iter().map(String::as_str).collect::<BTreeSet<_>>() {
            *df.entry(t).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(Error::InvalidInput("TF-IDF corpus has no tokens".into()));
    }
    let d = corpus_tokens.len() as f64;
    let vocabulary: Vec<String> = df.keys().map(|s| s.to_string()).collect();
    let idf = df
        .values()
        .map(|&n| ((1.0 + d) / (1.0 + n as f64)).ln() + 1.0)
        .collect();
    let positions = vocabulary.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    Ok(TfIdf {
        vocabulary,
        positions,
        idf,
        documents: corpus_tokens.len(),
    })
}

impl TfIdf {
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.positions.get(term).map(|&i| self.idf[i])
    }

    pub fn documents(&self) -> usize {
        self.documents
    }
}

impl EmbeddingBackend for TfIdf {
    fn id(&self) -> String {
        "tfidf".into()
    }

    fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    fn normalized(&self) -> bool {
        true
    }

    fn embed(&self, tokens: &[String]) -> Result<Vector> {
        let mut values = vec![0.0; self.vocabulary.len()];
        for t in tokens {
            if let Some(&i) = self.positions.get(t) {
                values[i] += 1.0;
            }
        }
        for (x, idf) in values.iter_mut().zip(&self.idf) {
            *x *= idf;
        }
        let n = super::norm(&values);
        if n == 0.0 {
            return Err(Error::Unembeddable("text".into()));
        }
        values.iter_mut().for_each(|x| *x /= n);
        Vector::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::cosine;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn idf_matches_hand_computation() {
        // D = 3; df(a)=3, df(b)=2, df(c)=1
        let corpus = vec![toks("a b"), toks("a b c"), toks("a")];
        let m = fit_tfidf(&corpus).unwrap();
        assert!((m.idf("a").unwrap() - ((4.0f64 / 4.0).ln() + 1.0)).abs() < 1e-12);
        assert!((m.idf("b").unwrap() - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-12);
        assert!((m.idf("c").unwrap() - ((4.0f64 / 2.0).ln() + 1.0)).abs() < 1e-12);

        // embed("a b b") = normalize(1*idf_a, 2*idf_b, 0)
        let v = m.embed(&toks("a b b")).unwrap();
        let (ia, ib) = (1.0, 2.0 * ((4.0f64 / 3.0).ln() + 1.0));
        let n = (ia * ia + ib * ib).sqrt();
        assert!((v.values()[0] - ia / n).abs() < 1e-12);
        assert!((v.values()[1] - ib / n).abs() < 1e-12);
        assert_eq!(v.values()[2], 0.0);
    }

    #[test]
    fn identical_paragraphs_have_cosine_one() {
        let m = fit_tfidf(&[toks("x y z"), toks("y q")]).unwrap();
        let a = m.embed(&toks("x y z")).unwrap();
        let b = m.embed(&toks("x y z")).unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn oov_only_is_unembeddable() {
        let m = fit_tfidf(&[toks("x y")]).unwrap();
        assert!(matches!(m.embed(&toks("nope never")), Err(Error::Unembeddable(_))));
        assert!(fit_tfidf(&[]).is_err());
    }
}
