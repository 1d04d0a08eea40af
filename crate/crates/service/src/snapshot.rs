use std::collections::BTreeMap;

use clav_core::corpus::Corpus;
use clav_core::embed::{build_index, EmbeddingBackend, VectorIndex};
use clav_core::simsearch::{read_queries, Query, ResultBundle, SearchContext};
use clav_core::textprep::Normalizer;
use clav_core::topics::{coherence, CoherenceReport, TopicModel};
use clav_core::workspace::{RunConfig, Workspace};
use clav_core::Result;

pub struct LoadedBackend {
    pub backend: Box<dyn EmbeddingBackend>,
    pub index: VectorIndex,
}

pub struct LoadedTopics {
    pub model: TopicModel,
    pub coherence: CoherenceReport,
}

/// Immutable view of a workspace. Requests hold an `Arc` to the snapshot
/// they started on; a reload swaps in a new one.
pub struct Snapshot {
    pub config: RunConfig,
    pub corpus: Corpus,
    pub normalizer: Normalizer,
    pub backends: BTreeMap<String, LoadedBackend>,
    pub queries: Vec<Query>,
    pub bundles: Vec<ResultBundle>,
    pub topics: BTreeMap<usize, LoadedTopics>,
    /// Artifacts that could not be loaded, with the reason.
    pub warnings: Vec<String>,
}

impl Snapshot {
    /// Loads the corpus and every usable artifact. Indexes that are missing
    /// or stale are rebuilt and written back.
    pub fn load(ws: &Workspace) -> Result<Self> {
        let config = ws.config()?;
        let corpus = ws.load_corpus(&config)?;
        let normalizer = Normalizer::load(&config.normalization)?;
        let mut warnings = Vec::new();

        let mut backends = BTreeMap::new();
        for id in ws.available_backends() {
            let backend = match ws.open_backend(&config, &corpus, &normalizer, &id) {
                Ok(b) => b,
                Err(e) => {
                    warnings.push(format!("backend `{id}`: {e}"));
                    continue;
                }
            };
            let index = match ws.load_index(&config, &corpus, &id) {
                Ok(index) => index,
                Err(_) => match build_index(&corpus, backend.as_ref(), &normalizer) {
                    Ok((index, _)) => {
                        if let Err(e) = ws.save_index(&config, &corpus, &index) {
                            warnings.push(format!("backend `{id}`: index not saved: {e}"));
                        }
                        index
                    }
                    Err(e) => {
                        warnings.push(format!("backend `{id}`: {e}"));
                        continue;
                    }
                },
            };
            backends.insert(id, LoadedBackend { backend, index });
        }

        let queries = if ws.queries_path().exists() {
            read_queries(&ws.queries_path())?
        } else {
            Vec::new()
        };
        let bundles = ws.load_bundles()?;

        let mut topics = BTreeMap::new();
        let ks = ws.fitted_topic_counts();
        if !ks.is_empty() {
            let docs = Workspace::topic_documents(&config, &corpus, &normalizer);
            for k in ks {
                match ws
                    .load_topic_model(&config, &corpus, k)
                    .and_then(|model| Ok((coherence(&model, &docs, config.coherence_top_n)?, model)))
                {
                    Ok((coherence, model)) => {
                        topics.insert(k, LoadedTopics { model, coherence });
                    }
                    Err(e) => warnings.push(format!("topics k={k}: {e}")),
                }
            }
        }

        Ok(Snapshot {
            config,
            corpus,
            normalizer,
            backends,
            queries,
            bundles,
            topics,
            warnings,
        })
    }

    pub fn search_context(&self, backend_id: &str) -> Option<SearchContext<'_>> {
        self.backends.get(backend_id).map(|b| SearchContext {
            corpus: &self.corpus,
            index: &b.index,
            backend: b.backend.as_ref(),
            normalizer: &self.normalizer,
        })
    }
}
