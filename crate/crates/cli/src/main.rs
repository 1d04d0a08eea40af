//! `clav`: ingest paged contracts, build heatmaps, topic models and
//! paragraph indexes, run query sets, judge results and report MAP.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use clav_core::corpus::{ingest_corpus, Corpus};
use clav_core::embed::{build_index, train_pvdbow, TrainingDocument};
use clav_core::eval::{compile_report, parse_ap_csv, record_judgment, EvalReport, JudgmentStore};
use clav_core::simsearch::{detect_communities, queries_to_jsonl, read_queries, SearchContext};
use clav_core::termmatch::{emit_heatmap, match_matrix, read_feature_configs, read_truth_marks};
use clav_core::textprep::Normalizer;
use clav_core::topics::{coherence, fit_lda, locate_keywords, select_k};
use clav_core::workspace::{stamp, RunConfig, Workspace};
use clav_core::Error;

#[derive(Parser)]
#[command(name = "clav", version, about = "Contract-variability analysis pipeline")]
struct Cli {
    /// Workspace directory [default: ./.clav]
    #[arg(long, global = true, env = "CLAV_WORKSPACE", value_name = "DIR")]
    workspace: Option<PathBuf>,

    /// Config file [default: <workspace>/clav.conf]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a config key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Seed for every randomized step
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a directory of paged .txt files or a record file into the workspace
    Ingest {
        source: PathBuf,
        /// Drop paragraphs shorter than this many characters
        #[arg(long)]
        min_chars: Option<usize>,
    },
    /// Term-match counts per feature configuration and page
    Heatmap {
        /// Feature configurations, one {id, name, text} object per line
        #[arg(long)]
        configs: PathBuf,
        /// Document to analyze [default: all]
        #[arg(long)]
        doc: Option<String>,
        /// Ground-truth marks, one {doc?, config, page} object per line
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// LDA topic models
    Topics {
        #[command(subcommand)]
        command: TopicsCommand,
    },
    /// Paragraph embedding models
    Embed {
        #[command(subcommand)]
        command: EmbedCommand,
    },
    /// Embed every paragraph with a backend and store the index
    Index {
        #[command(flatten)]
        backend: BackendArg,
    },
    /// Run a query set against an index and write the result bundle
    Search {
        /// Query file, one {id, keyword, sentence, doc?, page?} object per line
        /// [default: the workspace's last query set]
        #[arg(long)]
        queries: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArg,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Group near-identical paragraphs of an index
    Communities {
        #[command(flatten)]
        backend: BackendArg,
        /// Minimum cosine similarity to the seed paragraph
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        min_size: Option<usize>,
    },
    /// Relevance judgments and average precision
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Serve the HTTP API and the workbench
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Print the effective configuration
    Config,
}

#[derive(Args)]
struct BackendArg {
    /// `tfidf`, `pvdbow` or `import:<name>` [default: config `backend`]
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Subcommand)]
enum TopicsCommand {
    /// Fit one model and report its coherence
    Fit {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Fit a model per k and pick the most coherent
    SelectK {
        #[arg(long)]
        min: Option<usize>,
        #[arg(long)]
        max: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Topics and documents where keywords are prominent
    Keywords {
        #[arg(long)]
        k: Option<usize>,
        /// One keyword per line
        #[arg(long)]
        keywords: PathBuf,
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
    },
}

#[derive(Subcommand)]
enum EmbedCommand {
    /// Train PV-DBOW paragraph vectors on the corpus
    Train {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Register externally computed vectors as backend `import:<name>`
    Import {
        #[arg(long)]
        name: String,
        file: PathBuf,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Record whether one ranked hit is relevant
    Judge {
        #[arg(long)]
        query: String,
        #[arg(long)]
        backend: String,
        /// 1-based rank in the result bundle
        #[arg(long)]
        rank: u32,
        #[arg(long, action = clap::ArgAction::Set, value_name = "true|false")]
        relevant: bool,
        /// Timestamp in milliseconds [default: now]
        #[arg(long)]
        ts: Option<u64>,
    },
    /// AP per query and backend with MAP footer rows
    Report {
        /// Report over a `query_id,backend_id,ap` file instead of the judgment log
        #[arg(long)]
        aps: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            e => Failure::Data(e),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

struct Ctx {
    ws: Workspace,
    cfg: RunConfig,
}

impl Ctx {
    fn set(&mut self, key: &str, value: Option<impl ToString>) -> CliResult {
        if let Some(v) = value {
            self.cfg.set(key, &v.to_string())?;
        }
        Ok(())
    }

    fn corpus(&self) -> CliResult<Corpus> {
        Ok(self.ws.load_corpus(&self.cfg)?)
    }

    fn normalizer(&self) -> CliResult<Normalizer> {
        Ok(Normalizer::load(&self.cfg.normalization)?)
    }

    fn backend_id(&mut self, arg: BackendArg) -> CliResult<String> {
        self.set("backend", arg.backend)?;
        Ok(self.cfg.backend.clone())
    }
}

fn run(cli: Cli) -> CliResult {
    let ws = Workspace::resolve(cli.workspace.as_deref());
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => ws.config()?,
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let mut ctx = Ctx { ws, cfg };

    match cli.command {
        Command::Ingest { source, min_chars } => {
            ctx.set("min_chars", min_chars)?;
            let corpus = ingest_corpus(&source, &ctx.cfg.ingest_options())?;
            ctx.ws.init()?;
            ctx.ws.save_corpus(&ctx.cfg, &corpus)?;
            println!("{}", serde_json::to_string(&corpus.stats()).expect("stats serialize"));
        }
        Command::Heatmap { configs, doc, truth } => heatmap(&ctx, configs, doc, truth)?,
        Command::Topics { command } => topics(&mut ctx, command)?,
        Command::Embed { command } => embed(&mut ctx, command)?,
        Command::Index { backend } => {
            let id = ctx.backend_id(backend)?;
            let corpus = ctx.corpus()?;
            let norm = ctx.normalizer()?;
            let backend = ctx.ws.open_backend(&ctx.cfg, &corpus, &norm, &id)?;
            let (index, skipped) = build_index(&corpus, backend.as_ref(), &norm)?;
            ctx.ws.save_index(&ctx.cfg, &corpus, &index)?;
            for (r, why) in &skipped.skipped {
                eprintln!("skipped {r}: {why}");
            }
            println!("indexed {} paragraphs with {id} ({} skipped)", index.len(), skipped.len());
        }
        Command::Search { queries, backend, top_k } => {
            let id = ctx.backend_id(backend)?;
            ctx.set("search.top_k", top_k)?;
            search(&ctx, queries, &id)?;
        }
        Command::Communities {
            backend,
            threshold,
            min_size,
        } => {
            let id = ctx.backend_id(backend)?;
            ctx.set("communities.threshold", threshold)?;
            ctx.set("communities.min_size", min_size)?;
            let corpus = ctx.corpus()?;
            let index = ctx.ws.load_index(&ctx.cfg, &corpus, &id)?;
            let communities = detect_communities(&index, ctx.cfg.community_threshold, ctx.cfg.community_min_size)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let json = serde_json::to_string_pretty(&communities).expect("communities serialize") + "\n";
            let s = stamp(&[
                ("index", &ctx.ws.read_stamp(&ctx.ws.index_path(&id)).unwrap_or_default()),
                ("settings", &ctx.cfg.section(&["communities.threshold", "communities.min_size"])),
            ]);
            ctx.ws.write_artifact(&ctx.ws.communities_path(&id), json.as_bytes(), &s)?;
            print!("{json}");
        }
        Command::Eval { command } => eval(&ctx, command)?,
        Command::Serve { bind } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .with_writer(std::io::stderr)
                .init();
            let runtime = tokio::runtime::Runtime::new().map_err(Error::Io)?;
            runtime.block_on(clav_service::serve(ctx.ws, &bind))?;
        }
        Command::Config => print!("{}", ctx.cfg.to_text()),
    }
    Ok(())
}

fn heatmap(ctx: &Ctx, configs: PathBuf, doc: Option<String>, truth: Option<PathBuf>) -> CliResult {
    let corpus = ctx.corpus()?;
    let norm = ctx.normalizer()?;
    let configs = read_feature_configs(&configs, &norm)?;
    let marks = match &truth {
        Some(path) => read_truth_marks(path)?,
        None => Vec::new(),
    };
    let ids: BTreeSet<&str> = configs.iter().map(|c| c.id.as_str()).collect();
    if let Some((_, m)) = marks.iter().find(|(_, m)| !ids.contains(m.config.as_str())) {
        return Err(Failure::Data(Error::NotFound(format!("configuration `{}` in truth marks", m.config))));
    }
    let docs: Vec<String> = match doc {
        Some(d) => vec![d],
        None => corpus.documents().iter().map(|d| d.id.clone()).collect(),
    };
    for doc_id in docs {
        let mut matrix = match_matrix(&configs, &doc_id, &corpus, &norm)?;
        for (d, mark) in &marks {
            if d.as_deref().is_none_or(|d| d == doc_id) {
                if mark.page == 0 || mark.page > matrix.page_count {
                    return Err(Failure::Data(Error::InvalidInput(format!(
                        "truth mark page {} outside `{doc_id}` (1..={})",
                        mark.page, matrix.page_count
                    ))));
                }
                matrix.truth_marks.insert(mark.clone());
            }
        }
        let (csv, json) = emit_heatmap(&matrix, &ctx.ws.heatmap_dir())?;
        println!("{}\t{}", csv.display(), json.display());
    }
    Ok(())
}

fn topics(ctx: &mut Ctx, command: TopicsCommand) -> CliResult {
    match command {
        TopicsCommand::Fit { k, iterations } => {
            ctx.set("lda.k", k)?;
            ctx.set("lda.iterations", iterations)?;
            let corpus = ctx.corpus()?;
            let norm = ctx.normalizer()?;
            let k = ctx.cfg.lda_k;
            let docs = Workspace::topic_documents(&ctx.cfg, &corpus, &norm);
            let model = fit_lda(&docs, &ctx.cfg.lda_params(k))?;
            let report = coherence(&model, &docs, ctx.cfg.coherence_top_n)?;
            let s = Workspace::topics_stamp(&ctx.cfg, &corpus, k);
            ctx.ws.write_artifact(&ctx.ws.topic_model_path(k), &model.to_bytes(), &s)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            ctx.ws.write_artifact(&ctx.ws.coherence_path(k), json.as_bytes(), &s)?;
            println!("k={k} mean_coherence={}", report.mean);
            for t in 0..k {
                let terms: Vec<String> = model.top_terms(t, ctx.cfg.coherence_top_n)?.into_iter().map(|x| x.0).collect();
                println!("topic {t}\t{}\t{}", report.per_topic[t], terms.join(" "));
            }
        }
        TopicsCommand::SelectK { min, max, iterations } => {
            ctx.set("lda.k_min", min)?;
            ctx.set("lda.k_max", max)?;
            ctx.set("lda.iterations", iterations)?;
            let corpus = ctx.corpus()?;
            let norm = ctx.normalizer()?;
            let docs = Workspace::topic_documents(&ctx.cfg, &corpus, &norm);
            let (lo, hi) = (ctx.cfg.k_min, ctx.cfg.k_max);
            let selection = select_k(&docs, lo..=hi, &ctx.cfg.lda_params(lo), ctx.cfg.coherence_top_n)
                .map_err(|e| match e {
                    Error::InvalidInput(m) => Failure::Usage(m),
                    e => Failure::Data(e),
                })?;
            let s = stamp(&[
                ("tokens", &Workspace::tokens_stamp(&ctx.cfg, &corpus)),
                ("lda", &ctx.cfg.section(&["lda.alpha", "lda.beta", "lda.iterations", "lda.unit", "lda.k_min", "lda.k_max", "lda.top_n", "seed"])),
            ]);
            let json = serde_json::to_string_pretty(&selection).expect("selection serializes") + "\n";
            ctx.ws.write_artifact(&ctx.ws.select_k_path(), json.as_bytes(), &s)?;
            println!("best_k={}", selection.best_k);
            for (k, c) in &selection.scores {
                println!("k={k}\t{c}");
            }
        }
        TopicsCommand::Keywords { k, keywords, top_n, theta } => {
            ctx.set("lda.k", k)?;
            ctx.set("keywords.top_n", top_n)?;
            ctx.set("keywords.theta", theta)?;
            let corpus = ctx.corpus()?;
            let norm = ctx.normalizer()?;
            let model = ctx.ws.load_topic_model(&ctx.cfg, &corpus, ctx.cfg.lda_k)?;
            let text = fs::read_to_string(&keywords).map_err(|e| Failure::Data(Error::Io(e)))?;
            let mut seen = BTreeSet::new();
            let terms: Vec<String> = text
                .lines()
                .flat_map(|l| norm.terms(l))
                .filter(|t| seen.insert(t.clone()))
                .collect();
            let found = locate_keywords(&model, &terms, ctx.cfg.keyword_top_n, ctx.cfg.keyword_theta)?;
            println!("{}", serde_json::to_string_pretty(&found).expect("locations serialize"));
        }
    }
    Ok(())
}

fn embed(ctx: &mut Ctx, command: EmbedCommand) -> CliResult {
    match command {
        EmbedCommand::Train { dim, epochs } => {
            ctx.set("pvdbow.dim", dim)?;
            ctx.set("pvdbow.epochs", epochs)?;
            let corpus = ctx.corpus()?;
            let norm = ctx.normalizer()?;
            let docs: Vec<TrainingDocument> = corpus
                .paragraphs()
                .iter()
                .map(|p| TrainingDocument {
                    key: p.reference.key(),
                    tokens: norm.terms(&p.text),
                })
                .collect();
            let model = train_pvdbow(&docs, &ctx.cfg.pvdbow_params())?;
            let s = Workspace::pvdbow_stamp(&ctx.cfg, &corpus);
            ctx.ws.write_artifact(&ctx.ws.pvdbow_path(), &model.to_bytes(), &s)?;
            println!(
                "trained {} paragraph vectors over {} tokens; final epoch loss {}",
                model.paragraph_keys().len(),
                model.vocabulary().len(),
                model.epoch_losses().last().copied().unwrap_or(f64::NAN)
            );
        }
        EmbedCommand::Import { name, file } => {
            let corpus = ctx.corpus()?;
            let backend = ctx.ws.save_import(&name, &file, &corpus)?;
            use clav_core::embed::EmbeddingBackend;
            println!("imported {} vectors of dim {} as {}", backend.keys().len(), backend.dim(), backend.id());
        }
    }
    Ok(())
}

fn search(ctx: &Ctx, queries: Option<PathBuf>, id: &str) -> CliResult {
    let path = queries.unwrap_or_else(|| ctx.ws.queries_path());
    if !path.exists() {
        return Err(Failure::Usage(format!("no query file at {}; pass --queries", path.display())));
    }
    let queries = read_queries(&path)?;
    let corpus = ctx.corpus()?;
    let norm = ctx.normalizer()?;
    let index = ctx.ws.load_index(&ctx.cfg, &corpus, id)?;
    let backend = ctx.ws.open_backend(&ctx.cfg, &corpus, &norm, id)?;
    let search = SearchContext {
        corpus: &corpus,
        index: &index,
        backend: backend.as_ref(),
        normalizer: &norm,
    };
    let bundle = search.run_query_set(&queries, ctx.cfg.top_k);
    let queries_jsonl = queries_to_jsonl(&queries);
    let index_stamp = ctx.ws.read_stamp(&ctx.ws.index_path(id)).unwrap_or_default();
    let s = Workspace::bundle_stamp(&index_stamp, &ctx.cfg, &queries_jsonl);
    ctx.ws.write_artifact(&ctx.ws.bundle_path(id), bundle.to_jsonl().as_bytes(), &s)?;
    fs::write(ctx.ws.queries_path(), queries_jsonl).map_err(Error::Io)?;
    for r in &bundle.results {
        match &r.outcome {
            Ok(hits) => println!("{}\t{} hits", r.query_id, hits.len()),
            Err(e) => {
                println!("{}\terror", r.query_id);
                eprintln!("query {}: {e}", r.query_id);
            }
        }
    }
    println!("{}", ctx.ws.bundle_path(id).display());
    Ok(())
}

fn eval(ctx: &Ctx, command: EvalCommand) -> CliResult {
    match command {
        EvalCommand::Judge {
            query,
            backend,
            rank,
            relevant,
            ts,
        } => {
            let bundles = ctx.ws.load_bundles()?;
            let mut store = JudgmentStore::open(&ctx.ws.judgments_path())?;
            let ts = ts.unwrap_or_else(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0)
            });
            record_judgment(&mut store, &bundles, &query, &backend, rank, relevant, ts)?;
            let line = serde_json::to_string(store.entries().last().expect("just recorded")).expect("judgment serializes");
            println!("{line}");
        }
        EvalCommand::Report { aps } => {
            let report = match aps {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Failure::Data(Error::Io(e)))?;
                    EvalReport::from_rows(parse_ap_csv(&text)?)
                }
                None => {
                    let bundles = ctx.ws.load_bundles()?;
                    let store = JudgmentStore::open(&ctx.ws.judgments_path())?;
                    let report = compile_report(&store, &bundles);
                    let s = stamp(&[("judgments", &fs::read_to_string(ctx.ws.judgments_path()).unwrap_or_default())]);
                    ctx.ws.write_artifact(&ctx.ws.report_json_path(), report.to_json().as_bytes(), &s)?;
                    ctx.ws.write_artifact(&ctx.ws.report_csv_path(), report.to_csv().as_bytes(), &s)?;
                    report
                }
            };
            print!("{}", report.to_csv());
        }
    }
    Ok(())
}
