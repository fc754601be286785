use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use super::config::{EmbedderConfig, INDEX_FILE};
use super::{parse_filter, CliError};
use crate::bench::{self, BenchConfig};
use crate::cache::{ResponseCache, DEFAULT_CAPACITY, DEFAULT_TTL_MS};
use crate::clock::{Clock, SystemClock};
use crate::conversation::ConversationStore;
use crate::document::{Document, Metadata};
use crate::embed::fixture_embed;
use crate::filter::{FilterExpr, FilterParseError};
use crate::fixture::{shoe_documents, DEMO_FILTER, DEMO_QUESTION, DEMO_RANKING, SHOES};
use crate::index::{
    HnswParams, IndexError, IndexKind, IvfParams, SearchHit, SharedIndex, VectorIndex,
};
use crate::pipeline::{MockLlm, Pipeline, PromptTemplate, DEFAULT_TEMPLATE_NAME};
use crate::situational::ProfileStore;
use crate::vector::{euclidean_distance, Vector};

/// Tolerance for comparing demo figures with the published two-decimal values.
const DEMO_TOLERANCE: f64 = 0.005;

/// The filter source with a caret under the offending column.
pub fn render_filter_error(input: &str, error: &FilterParseError) -> String {
    let pad = " ".repeat(error.column.saturating_sub(1));
    format!("{error}\n  {input}\n  {pad}^")
}

/// One line of a JSONL catalog.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CatalogRecord {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(default)]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub catalog: PathBuf,
    pub index_dir: PathBuf,
    pub embedder: EmbedderConfig,
    pub kind: IndexKind,
    pub hnsw: HnswParams,
    pub nlist: Option<usize>,
    pub nprobe: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub ingested: usize,
    /// `(line number, reason)` for every skipped line.
    pub skipped: Vec<(usize, String)>,
    pub index_path: PathBuf,
}

/// Reads the catalog, embeds records without an embedding, builds the index
/// and writes it with the embedder description into `index_dir`. Malformed
/// lines are reported on `warnings` and skipped; an embedding whose length
/// disagrees with the embedder is a hard error.
pub fn ingest(opts: &IngestOptions, warnings: &mut dyn Write) -> Result<IngestReport, CliError> {
    let text = fs::read_to_string(&opts.catalog).map_err(|source| CliError::Io {
        path: opts.catalog.clone(),
        source,
    })?;
    let embedder = opts.embedder.provider()?;
    let dim = embedder.dim();
    let mut docs = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<CatalogRecord>(line)
            .map_err(|e| format!("malformed record: {e}"))
            .and_then(|record| {
                let embedding = match record.embedding {
                    Some(values) => {
                        Vector::new(values).map_err(|e| format!("invalid embedding: {e}"))?
                    }
                    None => embedder
                        .embed(&record.text)
                        .map_err(|e| format!("cannot embed text: {e}"))?,
                };
                Ok((record.id, record.text, record.metadata, embedding))
            });
        let (id, text, metadata, embedding) = match parsed {
            Ok(parts) => parts,
            Err(reason) => {
                let _ = writeln!(
                    warnings,
                    "warning: {}:{line_no}: {reason}; line skipped",
                    opts.catalog.display()
                );
                skipped.push((line_no, reason));
                continue;
            }
        };
        if embedding.dim() != dim {
            return Err(CliError::Data(format!(
                "{}:{line_no}: embedding has {} dimensions but the index uses {dim}",
                opts.catalog.display(),
                embedding.dim()
            )));
        }
        match Document::new(id, text, metadata, embedding) {
            Ok(doc) => docs.push(doc),
            Err(e) => {
                let reason = format!("invalid document: {e}");
                let _ = writeln!(
                    warnings,
                    "warning: {}:{line_no}: {reason}; line skipped",
                    opts.catalog.display()
                );
                skipped.push((line_no, reason));
            }
        }
    }
    if docs.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no valid records",
            opts.catalog.display()
        )));
    }

    let mut index = match opts.kind {
        IndexKind::Flat => VectorIndex::flat(),
        IndexKind::Hnsw => {
            VectorIndex::hnsw(opts.hnsw).map_err(|e| CliError::Usage(e.to_string()))?
        }
        IndexKind::Ivf => {
            let mut params = IvfParams::for_training_size(docs.len());
            params.seed = opts.embedder.seed;
            if let Some(nlist) = opts.nlist {
                params.nlist = nlist;
                params.nprobe = 8.min(nlist);
            }
            if let Some(nprobe) = opts.nprobe {
                params.nprobe = nprobe;
            }
            let vectors: Vec<Vector> = docs.iter().map(|d| d.embedding().clone()).collect();
            let mut index = VectorIndex::ivf();
            index.train_ivf(&vectors, params).map_err(|e| match e {
                IndexError::InvalidParams(_) | IndexError::InsufficientTrainingData { .. } => {
                    CliError::Usage(e.to_string())
                }
                other => other.into(),
            })?;
            index
        }
    };
    let ingested = docs.len();
    for doc in docs {
        index.insert(doc)?;
    }
    fs::create_dir_all(&opts.index_dir).map_err(|source| CliError::Io {
        path: opts.index_dir.clone(),
        source,
    })?;
    let index_path = opts.index_dir.join(INDEX_FILE);
    index.save(&index_path)?;
    opts.embedder.save(&opts.index_dir)?;
    Ok(IngestReport {
        ingested,
        skipped,
        index_path,
    })
}

fn load_index(index_dir: &Path) -> Result<(VectorIndex, EmbedderConfig), CliError> {
    let embedder = EmbedderConfig::load(index_dir)?;
    let path = index_dir.join(INDEX_FILE);
    let index = VectorIndex::load(&path).map_err(|e| match e {
        IndexError::Io(source) => CliError::Io { path, source },
        other => other.into(),
    })?;
    Ok((index, embedder))
}

/// Embeds `question` the way the index was built and returns the top `k`
/// hits with their documents.
pub fn query(
    index_dir: &Path,
    question: &str,
    k: usize,
    filter: Option<&FilterExpr>,
) -> Result<Vec<(SearchHit, Document)>, CliError> {
    if k == 0 {
        return Err(CliError::Usage("--k must be positive".into()));
    }
    let (index, embedder) = load_index(index_dir)?;
    let vector = embedder
        .provider()?
        .embed(question)
        .map_err(|e| CliError::Data(format!("cannot embed question: {e}")))?;
    Ok(SharedIndex::new(index).search_with_documents(&vector, k, filter)?)
}

/// Runs the worked running-shoes example end to end and checks each figure.
/// Returns whether everything matched.
pub fn demo_shoes(out: &mut dyn Write) -> Result<bool, CliError> {
    let w = |e: std::io::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    let query = fixture_embed(DEMO_QUESTION).expect("demo question has a fixture embedding");
    let mut index = VectorIndex::flat();
    for doc in shoe_documents() {
        index.insert(doc)?;
    }
    let mut problems = Vec::new();

    writeln!(out, "Question: {DEMO_QUESTION}").map_err(w)?;
    writeln!(out, "Query embedding: ({:.1}, {:.1})", query[0], query[1]).map_err(w)?;
    writeln!(out).map_err(w)?;
    writeln!(out, "Euclidean distances:").map_err(w)?;
    let mut distances = Vec::new();
    for shoe in &SHOES {
        let doc = shoe.document();
        let d = euclidean_distance(&query, doc.embedding()).expect("same dimension");
        writeln!(
            out,
            "  {:<24} ({:.1}, {:.1})  {d:.2}",
            shoe.name, shoe.embedding[0], shoe.embedding[1]
        )
        .map_err(w)?;
        if (d - shoe.expected_distance).abs() > DEMO_TOLERANCE {
            problems.push(format!(
                "distance {}: expected {:.2}, got {d:.4}",
                shoe.id, shoe.expected_distance
            ));
        }
        distances.push(format!("{}:{d:.2}", shoe.id));
    }

    writeln!(out).map_err(w)?;
    writeln!(out, "Ranking (nearest first):").map_err(w)?;
    let ranked = index.search(&query, SHOES.len())?;
    for hit in &ranked {
        writeln!(
            out,
            "  {}. {:<18} {:.2}",
            hit.rank, hit.doc_id, hit.distance
        )
        .map_err(w)?;
    }
    let ranking: Vec<&str> = ranked.iter().map(|h| h.doc_id.as_str()).collect();
    if ranking != DEMO_RANKING {
        problems.push(format!(
            "ranking: expected {}, got {}",
            DEMO_RANKING.join(","),
            ranking.join(",")
        ));
    }

    writeln!(out).map_err(w)?;
    let filter = parse_filter(DEMO_FILTER)?;
    writeln!(out, "Filter: {filter}").map_err(w)?;
    let top = index.search_filtered(&query, 1, &filter)?;
    let (top_id, top_price) = match top.first() {
        Some(hit) => {
            let doc = index.get(&hit.doc_id).expect("hit is live");
            let name = doc
                .metadata()
                .get("name")
                .map(ToString::to_string)
                .unwrap_or_default();
            let price = doc.metadata().get("price").and_then(|p| p.as_number());
            writeln!(
                out,
                "Top recommendation: {name} ({}), price ${}, distance {:.2}",
                hit.doc_id,
                price.map(|p| p.to_string()).unwrap_or_else(|| "?".into()),
                hit.distance
            )
            .map_err(w)?;
            (hit.doc_id.clone(), price)
        }
        None => {
            writeln!(out, "Top recommendation: none").map_err(w)?;
            (String::new(), None)
        }
    };
    let reebok = &SHOES[2];
    if top_id != reebok.id || top_price != Some(reebok.price) {
        problems.push(format!(
            "top recommendation: expected {} at {}, got {top_id:?} at {top_price:?}",
            reebok.id, reebok.price
        ));
    }

    writeln!(out).map_err(w)?;
    writeln!(out, "RESULT distances={}", distances.join(",")).map_err(w)?;
    writeln!(out, "RESULT ranking={}", ranking.join(",")).map_err(w)?;
    writeln!(
        out,
        "RESULT top={top_id} price={}",
        top_price.map(|p| p.to_string()).unwrap_or_default()
    )
    .map_err(w)?;
    for p in &problems {
        writeln!(out, "MISMATCH {p}").map_err(w)?;
    }
    writeln!(
        out,
        "{}",
        if problems.is_empty() {
            "DEMO_OK"
        } else {
            "DEMO_FAIL"
        }
    )
    .map_err(w)?;
    Ok(problems.is_empty())
}

#[derive(Debug, Clone)]
pub struct ChatOptions {
    pub session: String,
    pub user: String,
    pub k: usize,
    pub filter: Option<FilterExpr>,
    pub verbose: bool,
    pub index_dir: PathBuf,
    pub home: PathBuf,
    pub history_window: Option<usize>,
    pub cache_capacity: Option<usize>,
    pub cache_ttl_ms: Option<u64>,
    pub template: Option<String>,
    pub profiles_seed: Option<PathBuf>,
    pub store_questions: bool,
}

fn load_template(home: &Path, name: Option<&str>) -> Result<PromptTemplate, CliError> {
    let dir = home.join("templates");
    match name {
        None => Ok(PromptTemplate::default()),
        Some(name)
            if name == DEFAULT_TEMPLATE_NAME && !dir.join(format!("{name}.txt")).exists() =>
        {
            Ok(PromptTemplate::default())
        }
        Some(name) => Ok(PromptTemplate::load(&dir, name)?),
    }
}

/// Answers each nonempty input line through the full pipeline. Per-turn
/// failures are reported on `err` and the loop continues.
pub fn chat(
    opts: &ChatOptions,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let w = |e: std::io::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    let (index, embedder) = load_index(&opts.index_dir)?;
    let template = load_template(&opts.home, opts.template.as_deref())?;
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let conversations = ConversationStore::open_with(
        opts.home.join("conversations.jsonl"),
        Arc::clone(&clock),
        false,
    )?;
    let profiles =
        ProfileStore::open_with(opts.home.join("profiles.jsonl"), Arc::clone(&clock), false)?;
    if let Some(seed) = &opts.profiles_seed {
        profiles.load_seed(seed)?;
    }
    let cache = ResponseCache::with_clock(
        opts.cache_capacity.unwrap_or(DEFAULT_CAPACITY),
        opts.cache_ttl_ms.unwrap_or(DEFAULT_TTL_MS),
        Arc::clone(&clock),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut pipeline = Pipeline::new(
        Arc::new(SharedIndex::new(index)),
        Arc::from(embedder.provider()?),
        Arc::new(MockLlm::new()),
    )
    .with_conversations(Arc::new(conversations))
    .with_profiles(Arc::new(profiles))
    .with_cache(Arc::new(cache))
    .with_template(template)
    .with_clock(clock)
    .with_question_index(opts.store_questions);
    if let Some(n) = opts.history_window {
        pipeline = pipeline.with_history_window(n);
    }

    for line in input.lines() {
        let line = line.map_err(|source| CliError::Io {
            path: PathBuf::from("<stdin>"),
            source,
        })?;
        let question = line.trim();
        if question.is_empty() {
            continue;
        }
        match pipeline.handle_query(
            &opts.session,
            &opts.user,
            question,
            opts.k,
            opts.filter.as_ref(),
        ) {
            Ok(response) => {
                if response.cached {
                    writeln!(out, "[cached] {}", response.text).map_err(w)?;
                } else {
                    writeln!(out, "{}", response.text).map_err(w)?;
                }
                if opts.verbose {
                    let ids: Vec<String> = response
                        .retrieved
                        .iter()
                        .map(|h| format!("{} ({:.2})", h.doc_id, h.distance))
                        .collect();
                    writeln!(
                        out,
                        "retrieved: {}",
                        if ids.is_empty() {
                            "-".into()
                        } else {
                            ids.join(", ")
                        }
                    )
                    .map_err(w)?;
                    let stages: Vec<String> = response
                        .latency
                        .iter()
                        .map(|(s, ms)| format!("{s}={ms:.3}ms"))
                        .collect();
                    writeln!(out, "latency: {}", stages.join(" ")).map_err(w)?;
                }
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
            }
        }
        out.flush().map_err(w)?;
    }
    Ok(())
}

/// Runs the benchmark and prints recall and latency. Latency lines start
/// with `latency:` so that output comparisons can drop them.
pub fn bench(config: &BenchConfig, out: &mut dyn Write) -> Result<bench::BenchReport, CliError> {
    let w = |e: std::io::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    let report = bench::run(config).map_err(|e| match e {
        IndexError::InvalidParams(_)
        | IndexError::InvalidK
        | IndexError::InsufficientTrainingData { .. } => CliError::Usage(e.to_string()),
        other => other.into(),
    })?;
    writeln!(
        out,
        "kind={} n={} dim={} k={} queries={} seed={}",
        report.kind, report.n, report.dim, report.k, report.queries, config.seed
    )
    .map_err(w)?;
    writeln!(out, "recall@{}={:.4}", report.k, report.recall).map_err(w)?;
    writeln!(
        out,
        "latency: build_ms={:.1} p50_us={:.1} p95_us={:.1}",
        report.build_ms, report.p50_us, report.p95_us
    )
    .map_err(w)?;
    Ok(report)
}
