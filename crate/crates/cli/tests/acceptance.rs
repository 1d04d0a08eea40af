//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clav_core::corpus::{ingest_corpus, Corpus, Document, IngestOptions, Paragraph, ParagraphRef};
use clav_core::embed::pvdbow::{negative_sampling_gradients, negative_sampling_loss};
use clav_core::embed::{
    build_index, cosine_slices, fit_tfidf, train_pvdbow, PvDbowParams, TrainingDocument, VectorIndex,
};
use clav_core::eval::{average_precision, compile_report, mean_average_precision, record_judgment, JudgmentStore};
use clav_core::simsearch::{
    detect_communities, diff_tokens, reconstruct, DiffKind, Query, QueryResult, ResultBundle, SearchContext, SearchHit,
};
use clav_core::termmatch::{emit_heatmap, match_matrix, read_heatmap, FeatureConfig, TermMatchMatrix, TruthMark};
use clav_core::textprep::{NormalizationConfig, Normalizer};
use clav_core::topics::{select_k, GibbsSampler, LdaParams, TopicDocument, TopicModel};

use common::{ok, paged_corpus, tree, zipf_word};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: impl std::fmt::Display) -> String {
    e.to_string()
}

const DOC2VEC_AP: [f64; 10] = [1.0, 0.6044, 0.0, 0.0, 1.0, 0.8571, 0.9601, 1.0, 1.0, 1.0];
const SBERT_AP: [f64; 10] = [0.8987, 0.56, 0.0, 0.0, 1.0, 0.7656, 0.8807, 0.8, 1.0, 0.887];

/// Judged lists of length 20 whose APs round to the published values.
const FLAGS: &[(f64, &str)] = &[
    (0.0, "0"),
    (0.6044, "10100111001010110101"),
    (0.8571, "11110111110011001011"),
    (0.9601, "11111111110100101"),
    (0.8987, "11111111100001110011"),
    (0.56, "11000000010000010001"),
    (0.7656, "11101101010011100011"),
    (0.8807, "1111111001101011011"),
    (0.8, "1110000101"),
    (0.887, "1111011111110000011"),
];

fn flags_for(ap: f64) -> Vec<bool> {
    if ap == 1.0 {
        return vec![true; 20];
    }
    let (_, bits) = FLAGS.iter().find(|(x, _)| *x == ap).expect("fixture for every published AP");
    let mut flags: Vec<bool> = bits.chars().map(|c| c == '1').collect();
    flags.resize(20, false);
    flags
}

fn table_one() -> Check {
    let d = mean_average_precision(&DOC2VEC_AP).map_err(e2s)?;
    let s = mean_average_precision(&SBERT_AP).map_err(e2s)?;
    ensure((d - 0.74216).abs() <= 1e-6, || format!("Doc2Vec MAP {d}"))?;
    ensure((s - 0.6792).abs() <= 1e-12 && (s - 0.679).abs() < 5e-4, || format!("SBERT MAP {s}"))?;

    // The same numbers through judgments and the report compiler.
    let mut store = JudgmentStore::in_memory();
    let mut bundles = Vec::new();
    for backend in ["doc2vec", "sbert"] {
        let results = (0..10)
            .map(|q| QueryResult {
                query_id: format!("p{:02}", q + 1),
                outcome: Ok((0..20)
                    .map(|i| SearchHit {
                        reference: ParagraphRef::new("cla", 1, i),
                        score: 1.0 - f64::from(i) / 40.0,
                        text: String::new(),
                        context_prev: None,
                        context_next: None,
                        diff: Vec::new(),
                    })
                    .collect()),
            })
            .collect();
        bundles.push(ResultBundle {
            backend: backend.into(),
            results,
        });
    }
    let mut ts = 0;
    for (backend, column) in [("doc2vec", DOC2VEC_AP), ("sbert", SBERT_AP)] {
        for (q, &ap) in column.iter().enumerate() {
            for (r, &rel) in flags_for(ap).iter().enumerate() {
                ts += 1;
                record_judgment(&mut store, &bundles, &format!("p{:02}", q + 1), backend, r as u32 + 1, rel, ts)
                    .map_err(e2s)?;
            }
        }
    }
    let report = compile_report(&store, &bundles);
    let cd = report.map_per_backend["doc2vec"];
    let cs = report.map_per_backend["sbert"];
    ensure((cd - 0.74216).abs() <= 1e-6, || format!("compiled Doc2Vec MAP {cd}"))?;
    ensure((cs - 0.679).abs() < 5e-4, || format!("compiled SBERT MAP {cs}"))?;
    Ok(format!("Doc2Vec {d:.6}, SBERT {s:.4}; compiled from 400 judgments: {cd:.6}, {cs:.4}"))
}

/// Precision at every relevant rank, straight from the definition.
fn brute_force_ap(flags: &[bool]) -> f64 {
    let relevant = flags.iter().filter(|&&f| f).count();
    if relevant == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for k in 1..=flags.len() {
        if flags[k - 1] {
            let hits = flags[..k].iter().filter(|&&f| f).count();
            sum += hits as f64 / k as f64;
        }
    }
    sum / relevant as f64
}

fn ap_oracle() -> Check {
    let mut lists = 0;
    for n in 0..=8usize {
        for mask in 0u32..(1 << n) {
            let flags: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let (got, want) = (average_precision(&flags), brute_force_ap(&flags));
            ensure(got.to_bits() == want.to_bits(), || format!("{flags:?}: {got} != {want}"))?;
            lists += 1;
        }
    }
    Ok(format!("{lists} lists identical"))
}

fn planted_topic_corpus(seed: u64) -> Vec<TopicDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..200)
        .map(|d| TopicDocument {
            id: format!("d{d:03}"),
            tokens: (0..100).map(|_| zipf_word(&mut rng, d % 3)).collect(),
        })
        .collect()
}

fn check_stochastic(model: &TopicModel) -> Result<(), String> {
    for (name, m) in [("phi", &model.phi), ("theta", &model.theta)] {
        for (i, row) in m.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            ensure((s - 1.0).abs() <= 1e-9, || format!("k={} {name} row {i} sums to {s}", model.k))?;
        }
    }
    Ok(())
}

fn planted_of(term: &str) -> usize {
    term[1..2].parse().expect("planted word")
}

fn lda_recovery(fitted: &mut Vec<TopicModel>) -> Check {
    let docs = planted_topic_corpus(2024);
    let params = LdaParams {
        iterations: 500,
        ..LdaParams::new(3, 11)
    };
    let mut sampler = GibbsSampler::new(&docs, &params).map_err(e2s)?;
    sampler.check_counts()?;
    for sweep in 1..=params.iterations {
        sampler.sweep();
        sampler.check_counts().map_err(|e| format!("after sweep {sweep}: {e}"))?;
    }
    let model = sampler.model();

    // counts[t][p]: top-10 terms of topic t drawn from planted topic p.
    let mut counts = [[0usize; 3]; 3];
    for (t, row) in counts.iter_mut().enumerate() {
        for (term, _) in model.top_terms(t, 10).map_err(e2s)? {
            row[planted_of(&term)] += 1;
        }
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let best = perms
        .iter()
        .max_by_key(|p| (0..3).map(|t| counts[t][p[t]]).sum::<usize>())
        .expect("non-empty");
    let purity: Vec<f64> = (0..3).map(|t| counts[t][best[t]] as f64 / 10.0).collect();
    ensure(purity.iter().all(|&p| p >= 0.8), || format!("purity {purity:?}"))?;
    fitted.push(model);

    let selection = select_k(&docs, 2..=6, &params, 10).map_err(e2s)?;
    ensure(selection.best_k == 3, || format!("select_k chose {}: {:?}", selection.best_k, selection.scores))?;
    Ok(format!(
        "purity {purity:?}, counts conserved over {} sweeps, best_k=3",
        params.iterations
    ))
}

fn stochasticity(fitted: &mut Vec<TopicModel>) -> Check {
    let docs = planted_topic_corpus(7);
    for k in 2..=6 {
        let params = LdaParams {
            iterations: 100,
            ..LdaParams::new(k, k as u64)
        };
        fitted.push(clav_core::topics::fit_lda(&docs, &params).map_err(e2s)?);
    }
    let tiny = vec![
        TopicDocument {
            id: "a".into(),
            tokens: vec!["x".into()],
        },
        TopicDocument {
            id: "b".into(),
            tokens: vec!["y".into(), "y".into()],
        },
    ];
    fitted.push(clav_core::topics::fit_lda(&tiny, &LdaParams::new(2, 3)).map_err(e2s)?);
    for model in fitted.iter() {
        check_stochastic(model)?;
    }
    Ok(format!("{} models", fitted.len()))
}

const WORDS: &[&str] = &[
    "arbetstagare", "arbetsgivare", "lön", "semester", "sjuklön", "avdrag", "procent", "timme", "månad", "pension",
    "premie", "övertid", "ersättning", "uppsägning", "anställning", "provanställning", "arbetstid", "förläggning",
    "helgdag", "ob-tillägg", "kollektivavtal", "förbund", "lokal", "överenskommelse", "tvist", "förhandling",
    "reseersättning", "traktamente", "föräldraledighet", "tjänstledighet",
];

fn tfidf_self_retrieval() -> Check {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in 0..6 {
        let pages: Vec<String> = (0..4)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let n = rng.random_range(6..18);
                        let words: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
                        format!("{} {}.", words.join(" "), rng.random_range(1..100))
                    })
                    .collect::<Vec<_>>()
                    .join("\n\n")
            })
            .collect();
        fs::write(dir.path().join(format!("kollektivavtal-{d}.txt")), pages.join("\x0c")).map_err(e2s)?;
    }
    let corpus = ingest_corpus(dir.path(), &IngestOptions::default()).map_err(e2s)?;
    let norm = Normalizer::load(&NormalizationConfig::default()).map_err(e2s)?;
    let tokens: Vec<Vec<String>> = corpus.paragraphs().iter().map(|p| norm.terms(&p.text)).collect();
    let tfidf = fit_tfidf(&tokens).map_err(e2s)?;
    let (index, _) = build_index(&corpus, &tfidf, &norm).map_err(e2s)?;
    let ctx = SearchContext {
        corpus: &corpus,
        index: &index,
        backend: &tfidf,
        normalizer: &norm,
    };
    ensure(index.len() >= 60, || format!("only {} paragraphs indexed", index.len()))?;
    for r in &index.refs {
        let text = &corpus.paragraph(&r.doc_id, r.index).expect("indexed paragraph exists").text;
        let hits = ctx.search(&Query::new("self", "", text.clone()), 1).map_err(e2s)?;
        ensure(hits[0].reference == *r, || format!("{r}: rank 1 is {}", hits[0].reference))?;
        ensure((hits[0].score - 1.0).abs() <= 1e-9, || format!("{r}: score {}", hits[0].score))?;
    }
    Ok(format!("{} paragraphs", index.len()))
}

fn pvdbow_duplicates() -> Check {
    // 460 distinct paragraphs over 10 Zipf topics, then 20 exact copies.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut docs: Vec<TrainingDocument> = (0..480)
        .map(|i| {
            let topic = rng.random_range(0..10);
            TrainingDocument {
                key: format!("fixture:{i}"),
                tokens: (0..30).map(|_| zipf_word(&mut rng, topic)).collect(),
            }
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..20).map(|j| (j * 23, 480 + j)).collect();
    for &(a, b) in &pairs {
        docs.push(TrainingDocument {
            key: format!("fixture:{b}"),
            tokens: docs[a].tokens.clone(),
        });
    }
    let mut rates = Vec::new();
    for seed in [1u64, 2, 3] {
        let params = PvDbowParams {
            dim: 50,
            epochs: 50,
            seed,
            ..PvDbowParams::default()
        };
        let model = train_pvdbow(&docs, &params).map_err(e2s)?;
        let vectors: Vec<Vec<f64>> = docs
            .iter()
            .map(|d| model.paragraph_vector(&d.key).expect("trained").into_inner())
            .collect();
        let in_top3 = |q: usize, target: usize| {
            let mut sims: Vec<(usize, f64)> = (0..vectors.len())
                .filter(|&j| j != q)
                .map(|j| (j, cosine_slices(&vectors[q], &vectors[j]).unwrap_or(-1.0)))
                .collect();
            sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            sims[..3].iter().any(|&(j, _)| j == target)
        };
        let found = pairs
            .iter()
            .map(|&(a, b)| usize::from(in_top3(a, b)) + usize::from(in_top3(b, a)))
            .sum::<usize>();
        rates.push(found as f64 / (2 * pairs.len()) as f64);
    }
    let mut sorted = rates.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[1];
    ensure(median >= 0.9, || format!("rates per seed {rates:?}, median {median}"))?;
    Ok(format!("{} paragraphs, top-3 rate per seed {rates:?}", docs.len()))
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let dim = rng.random_range(2..9);
        let n_out = rng.random_range(1..7);
        let doc: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let outs: Vec<Vec<f64>> = (0..n_out)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<bool> = (0..n_out).map(|i| i == 0 || rng.random_bool(0.2)).collect();
        let refs: Vec<&[f64]> = outs.iter().map(Vec::as_slice).collect();
        let (g_doc, g_out) = negative_sampling_gradients(&doc, &refs, &labels);

        let loss_with = |doc: &[f64], outs: &[Vec<f64>]| {
            let refs: Vec<&[f64]> = outs.iter().map(Vec::as_slice).collect();
            negative_sampling_loss(doc, &refs, &labels)
        };
        let mut compare = |analytic: f64, numeric: f64, what: String| -> Result<(), String> {
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            ensure(rel <= 1e-6, || format!("case {case} {what}: analytic {analytic}, numeric {numeric}"))
        };
        for j in 0..dim {
            let (mut plus, mut minus) = (doc.clone(), doc.clone());
            plus[j] += h;
            minus[j] -= h;
            let numeric = (loss_with(&plus, &outs) - loss_with(&minus, &outs)) / (2.0 * h);
            compare(g_doc[j], numeric, format!("d/doc[{j}]"))?;
        }
        for i in 0..n_out {
            for j in 0..dim {
                let (mut plus, mut minus) = (outs.clone(), outs.clone());
                plus[i][j] += h;
                minus[i][j] -= h;
                let numeric = (loss_with(&doc, &plus) - loss_with(&doc, &minus)) / (2.0 * h);
                compare(g_out[i][j], numeric, format!("d/out[{i}][{j}]"))?;
            }
        }
    }
    Ok(format!("100 cases, worst relative error {worst:.2e}"))
}

fn diff_reconstruction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let vocab = ["a", "b", "c", "d", "e", "f"];
    for case in 0..1000 {
        let seq = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let n = rng.random_range(0..25);
            (0..n).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect()
        };
        let (q, h) = (seq(&mut rng), seq(&mut rng));
        let spans = diff_tokens(&q, &h);
        ensure(reconstruct(&spans, DiffKind::OnlyQuery) == q, || format!("case {case}: query side differs"))?;
        ensure(reconstruct(&spans, DiffKind::OnlyHit) == h, || format!("case {case}: hit side differs"))?;
    }
    Ok("1000 pairs".into())
}

fn community_recovery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 12;
    let mut rows = Vec::new();
    let mut refs = Vec::new();
    for cluster in 0..3 {
        for member in 0..4 {
            let mut v = vec![0.0; dim];
            v[cluster * 4] = 1.0;
            v[cluster * 4 + 1] = 0.3;
            for x in v.iter_mut() {
                *x += rng.random_range(-0.01..0.01);
            }
            rows.push(v);
            refs.push(ParagraphRef::new(format!("c{cluster}"), 1, member));
        }
    }
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let c = cosine_slices(&rows[i], &rows[j]).map_err(e2s)?;
            if i / 4 == j / 4 {
                ensure(c > 0.99, || format!("intra-cluster cosine {c}"))?;
            } else {
                ensure(c < 0.3, || format!("inter-cluster cosine {c}"))?;
            }
        }
    }
    let matrix = Array2::from_shape_vec((rows.len(), dim), rows.concat()).map_err(e2s)?;
    let index = VectorIndex {
        backend_id: "planted".into(),
        normalized: false,
        refs,
        matrix,
    };
    let communities = detect_communities(&index, 0.9, 2).map_err(e2s)?;
    ensure(communities.len() == 3, || format!("{} communities", communities.len()))?;
    let mut seen = HashSet::new();
    for c in &communities {
        ensure(c.members.len() == 4, || format!("community of size {}", c.members.len()))?;
        let docs: BTreeSet<&str> = c.members.iter().map(|r| r.doc_id.as_str()).collect();
        ensure(docs.len() == 1, || format!("mixed community {docs:?}"))?;
        for m in &c.members {
            ensure(seen.insert(m.clone()), || format!("{m} in two communities"))?;
        }
    }
    Ok("3 communities of 4".into())
}

fn run_cli_pipeline(inputs: &Path, ws: &Path) {
    let s = |p: &Path| p.to_str().expect("utf-8 path").to_owned();
    let base = ["--seed", "42", "--set", "pvdbow.dim=20", "--set", "pvdbow.epochs=10"];
    let steps: Vec<Vec<String>> = vec![
        vec!["ingest".into(), s(&inputs.join("src"))],
        vec!["embed".into(), "train".into()],
        vec!["index".into()],
        vec!["index".into(), "--backend".into(), "pvdbow".into()],
        vec!["search".into(), "--queries".into(), s(&inputs.join("queries.jsonl"))],
        vec!["search".into(), "--backend".into(), "pvdbow".into()],
        vec!["eval".into(), "judge".into(), "--query".into(), "q1".into(), "--backend".into(), "pvdbow".into(), "--rank".into(), "1".into(), "--relevant".into(), "true".into(), "--ts".into(), "10".into()],
        vec!["eval".into(), "judge".into(), "--query".into(), "q1".into(), "--backend".into(), "pvdbow".into(), "--rank".into(), "2".into(), "--relevant".into(), "false".into(), "--ts".into(), "11".into()],
        vec!["eval".into(), "report".into()],
    ];
    for step in &steps {
        let mut args: Vec<&str> = base.to_vec();
        args.extend(step.iter().map(String::as_str));
        ok(ws, &args);
    }
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(e2s)?;
    paged_corpus(&dir.path().join("src"), 10);
    fs::write(
        dir.path().join("queries.jsonl"),
        "{\"id\":\"q1\",\"keyword\":\"t1w00\",\"sentence\":\"t1w00 t1w02 t1w01 t1w00\"}\n\
         {\"id\":\"q2\",\"keyword\":\"t0w03\",\"sentence\":\"t0w03 t0w00 t0w07\"}\n",
    )
    .map_err(e2s)?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_cli_pipeline(dir.path(), &a);
    run_cli_pipeline(dir.path(), &b);
    let (ta, tb) = (tree(&a), tree(&b));
    ensure(ta.keys().eq(tb.keys()), || "different artifact sets".into())?;
    for (path, bytes) in &ta {
        ensure(bytes == &tb[path], || format!("{} differs", path.display()))?;
    }
    Ok(format!("{} artifacts byte-identical", ta.len()))
}

fn heatmap_exactness() -> Check {
    let norm = Normalizer::from_parts(
        NormalizationConfig {
            stem: false,
            ..NormalizationConfig::default()
        },
        HashSet::new(),
        Vec::new(),
        None,
    );
    let pages = [
        vec!["Pension och premie betalas.", "Premie betalas igen."],
        vec!["Semester, semester och lön."],
        vec!["Inget av intresse här."],
        vec!["Lön, pension, semester och PREMIE."],
    ];
    let mut paragraphs = Vec::new();
    for (p, texts) in pages.iter().enumerate() {
        for text in texts {
            let i = paragraphs.len() as u32;
            paragraphs.push(Paragraph {
                reference: ParagraphRef::new("cla", p as u32 + 1, i),
                text: text.to_string(),
            });
        }
    }
    let corpus = Corpus::new(
        vec![Document {
            id: "cla".into(),
            title: "CLA".into(),
            page_count: 4,
        }],
        paragraphs,
    )
    .map_err(e2s)?;
    let config = |id: &str, terms: &[&str]| FeatureConfig {
        id: id.into(),
        name: id.to_uppercase(),
        terms: terms.iter().map(|t| t.to_string()).collect(),
    };
    let configs = [
        config("pension", &["pension", "premie"]),
        config("semester", &["semester"]),
        config("lon", &["lön", "premie"]),
    ];
    let mut m = match_matrix(&configs, "cla", &corpus, &norm).map_err(e2s)?;
    let expected = vec![vec![3, 0, 0, 2], vec![0, 2, 0, 1], vec![2, 1, 0, 2]];
    ensure(m.cells == expected, || format!("cells {:?}", m.cells))?;
    ensure(m.to_csv() == "3,0,0,2\n0,2,0,1\n2,1,0,2\n", || format!("csv {:?}", m.to_csv()))?;

    m.truth_marks.insert(TruthMark {
        config: "semester".into(),
        page: 2,
    });
    let dir = tempfile::tempdir().map_err(e2s)?;
    emit_heatmap(&m, dir.path()).map_err(e2s)?;
    let back: TermMatchMatrix = read_heatmap(dir.path(), "cla").map_err(e2s)?;
    ensure(back == m, || "CSV round-trip changed the matrix".into())?;
    Ok("3x4 counts exact, CSV round-trips".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut fitted = Vec::new();
    let mut report = |name: &str, limit: Option<Duration>, check: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&result, limit) {
            if elapsed > limit {
                result = Err(format!("took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{elapsed:.2?}]");
            }
        }
    };
    let secs = |s| Some(Duration::from_secs(s));

    report("Table-1 MAP reproduction", secs(1), &mut table_one);
    report("AP oracle equivalence", secs(10), &mut ap_oracle);
    report("LDA planted-topic recovery", secs(120), &mut || lda_recovery(&mut fitted));
    report("Stochasticity of phi and theta", None, &mut || stochasticity(&mut fitted));
    report("TF-IDF self-retrieval", None, &mut tfidf_self_retrieval);
    report("PV-DBOW duplicate retrieval", secs(180), &mut pvdbow_duplicates);
    report("Gradient check", None, &mut gradient_check);
    report("Diff reconstruction", None, &mut diff_reconstruction);
    report("Community recovery", None, &mut community_recovery);
    report("Determinism of the CLI pipeline", None, &mut determinism);
    report("Heatmap exactness", None, &mut heatmap_exactness);

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
