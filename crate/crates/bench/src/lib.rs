//! Synthetic inputs shared by the benchmarks.

use clav_core::corpus::{Corpus, Document, Paragraph, ParagraphRef};
use clav_core::topics::TopicDocument;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `docs` documents of `per_doc` paragraphs, `words` tokens each, over a
/// vocabulary of `vocab` made-up words.
pub fn corpus(docs: usize, per_doc: usize, words: usize, vocab: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = Uniform::new(0, vocab).expect("vocab > 0");
    let mut documents = Vec::new();
    let mut paragraphs = Vec::new();
    for d in 0..docs {
        let id = format!("doc{d:03}");
        for i in 0..per_doc {
            let text = (0..words)
                .map(|_| format!("ord{:04}", pick.sample(&mut rng)))
                .collect::<Vec<_>>()
                .join(" ");
            paragraphs.push(Paragraph {
                reference: ParagraphRef::new(&id, 1 + (i / 5) as u32, i as u32),
                text,
            });
        }
        documents.push(Document {
            title: id.clone(),
            id,
            page_count: per_doc.div_ceil(5).max(1) as u32,
        });
    }
    Corpus::new(documents, paragraphs).expect("well-formed synthetic corpus")
}

/// Documents drawn from `topics` disjoint word groups.
pub fn topic_documents(n: usize, len: usize, topics: usize, seed: u64) -> Vec<TopicDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word = Uniform::new(0, 50).expect("non-empty");
    (0..n)
        .map(|d| TopicDocument {
            id: format!("d{d}"),
            tokens: (0..len)
                .map(|_| format!("t{}w{:02}", d % topics, word.sample(&mut rng)))
                .collect(),
        })
        .collect()
}

pub fn tokens(n: usize, vocab: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = Uniform::new(0, vocab).expect("vocab > 0");
    (0..n).map(|_| format!("w{}", pick.sample(&mut rng))).collect()
}
