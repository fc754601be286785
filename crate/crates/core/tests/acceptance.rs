//! Acceptance suite. Each criterion prints one PASS or FAIL line with its
//! measured runtime; the process fails if any criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use common::{brute_force, docs, id_vectors, recall, unit_vectors, within};
use contextdb::cache::ResponseCache;
use contextdb::conversation::{ConversationStore, Role};
use contextdb::pipeline::{MockLlm, Pipeline};
use contextdb::{
    metadata, Clock, Document, FilterExpr, FixtureEmbedder, HnswParams, IvfParams, ManualClock,
    Metadata, SharedIndex, Vector, VectorIndex,
};
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn vector(v: &[f64]) -> Vector {
    Vector::new(v.to_vec()).unwrap()
}

// 1. Worked example through the real binary.
fn shoe_demo() -> Outcome {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_contextdb"))
        .arg("demo-shoes")
        .output()
        .map_err(|e| e.to_string())?;
    let secs = within(started, 1.0)?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    check(out.status.code() == Some(0), || {
        format!("exit {:?}", out.status.code())
    })?;
    check(stdout.lines().last() == Some("DEMO_OK"), || {
        "last line is not DEMO_OK".into()
    })?;

    let result: HashMap<&str, &str> = stdout
        .lines()
        .filter_map(|l| l.strip_prefix("RESULT "))
        .flat_map(|l| l.split(' '))
        .filter_map(|kv| kv.split_once('='))
        .collect();
    // Distance Calculations 1 to 4 and The Result.
    let published = [
        ("nike-zoomx", 1.97),
        ("adidas-ultraboost", 1.12),
        ("reebok-floatride", 0.22),
        ("asics-gel-kayano", 0.58),
    ];
    let printed: HashMap<&str, f64> = result["distances"]
        .split(',')
        .map(|p| {
            let (id, d) = p.split_once(':').unwrap();
            (id, d.parse().unwrap())
        })
        .collect();
    for (id, want) in published {
        let got = printed[id];
        check((got - want).abs() <= 0.005, || {
            format!("{id}: {got} vs {want}")
        })?;
    }
    check(
        result["ranking"] == "reebok-floatride,asics-gel-kayano,adidas-ultraboost,nike-zoomx",
        || format!("ranking {}", result["ranking"]),
    )?;
    check(
        result["top"] == "reebok-floatride" && result["price"] == "90",
        || format!("top {} at {}", result["top"], result["price"]),
    )?;
    Ok(format!(
        "distances 1.97/1.12/0.22/0.58, Reebok Floatride at $90 ({secs:.2} s)"
    ))
}

// 2. Flat search against a full scan.
fn flat_oracle() -> Outcome {
    let started = Instant::now();
    let vectors = unit_vectors(1_000, 16, 2);
    let corpus = docs(&vectors, |_| Metadata::new());
    let table = id_vectors(&corpus);
    let mut index = VectorIndex::flat();
    for d in corpus {
        index.insert(d).unwrap();
    }
    for q in unit_vectors(100, 16, 3) {
        let truth = brute_force(&table, &q, 10);
        let hits = index.search(&vector(&q), 10).unwrap();
        check(hits.len() == truth.len(), || "length differs".into())?;
        for (hit, (id, d)) in hits.iter().zip(&truth) {
            check(
                &hit.doc_id == id && (hit.distance - d).abs() <= 1e-6,
                || format!("{} {} vs {} {}", hit.doc_id, hit.distance, id, d),
            )?;
        }
    }
    let secs = within(started, 10.0)?;
    Ok(format!("1000 docs, 100 queries identical ({secs:.2} s)"))
}

// 3. HNSW recall with the default parameters.
fn hnsw_quality() -> Outcome {
    let started = Instant::now();
    let vectors = unit_vectors(10_000, 64, 4);
    let corpus = docs(&vectors, |_| Metadata::new());
    let table = id_vectors(&corpus);
    let params = HnswParams {
        m: 16,
        ef_construction: 200,
        ef_search: 64,
        seed: 42,
    };
    let build = || {
        let mut index = VectorIndex::hnsw(params).unwrap();
        for d in &corpus {
            index.insert(d.clone()).unwrap();
        }
        index
    };
    let a = build();
    let b = build();
    let queries = unit_vectors(100, 64, 5);
    let mut total = 0.0;
    for q in &queries {
        let q = vector(q);
        let hits = a.search(&q, 10).unwrap();
        check(hits == b.search(&q, 10).unwrap(), || {
            "two builds with one seed disagree".into()
        })?;
        let ids: Vec<String> = hits.into_iter().map(|h| h.doc_id).collect();
        total += recall(&brute_force(&table, q.as_slice(), 10), &ids);
    }
    let mean = total / queries.len() as f64;
    let secs = within(started, 60.0)?;
    check(mean >= 0.95, || {
        format!("recall@10 = {mean:.4} < 0.95 ({secs:.1} s)")
    })?;
    Ok(format!(
        "recall@10 = {mean:.4}, deterministic ({secs:.1} s)"
    ))
}

// 4. IVF: exhaustive probing is exact and recall grows with nprobe.
fn ivf_bound() -> Outcome {
    let started = Instant::now();
    let vectors = unit_vectors(1_000, 16, 6);
    let corpus = docs(&vectors, |_| Metadata::new());
    let table = id_vectors(&corpus);
    let training: Vec<Vector> = vectors.iter().map(|v| vector(v)).collect();
    let params = IvfParams::for_training_size(corpus.len());
    let mut index = VectorIndex::ivf();
    index.train_ivf(&training, params).unwrap();
    for d in corpus {
        index.insert(d).unwrap();
    }
    let VectorIndex::Ivf(ivf) = &mut index else {
        unreachable!()
    };
    let queries: Vec<Vector> = unit_vectors(100, 16, 7).iter().map(|q| vector(q)).collect();
    let nlist = params.nlist;
    let mut previous = -1.0;
    for nprobe in 1..=nlist {
        ivf.set_nprobe(nprobe).unwrap();
        let mut total = 0.0;
        for q in &queries {
            let truth = brute_force(&table, q.as_slice(), 10);
            let hits = ivf.search(q, 10).unwrap();
            if nprobe == nlist {
                for (hit, (id, d)) in hits.iter().zip(&truth) {
                    check(
                        &hit.doc_id == id && (hit.distance - d).abs() <= 1e-9,
                        || format!("nprobe=nlist differs: {} vs {id}", hit.doc_id),
                    )?;
                }
            }
            let ids: Vec<String> = hits.into_iter().map(|h| h.doc_id).collect();
            total += recall(&truth, &ids);
        }
        let mean = total / queries.len() as f64;
        check(mean >= previous, || {
            format!("recall fell from {previous} to {mean} at nprobe={nprobe}")
        })?;
        previous = mean;
    }
    check(previous == 1.0, || format!("exhaustive recall {previous}"))?;
    let secs = within(started, 30.0)?;
    Ok(format!(
        "nlist={nlist}, exact at nprobe=nlist, monotone over 1..={nlist} ({secs:.2} s)"
    ))
}

// 5. Filtered search against filter-then-scan.
const BRANDS: [&str; 5] = ["Nike", "Adidas", "Reebok", "ASICS", "Puma"];

fn hybrid_filter() -> Outcome {
    let started = Instant::now();
    let vectors = unit_vectors(500, 8, 8);
    let mut meta_rng = common::rng(9);
    let metas: Vec<(f64, &str)> = (0..500)
        .map(|_| {
            (
                meta_rng.random_range(20..200) as f64,
                BRANDS[meta_rng.random_range(0..5)],
            )
        })
        .collect();
    let corpus = docs(
        &vectors,
        |i| metadata! { "price" => metas[i].0, "brand" => metas[i].1 },
    );
    let mut index = VectorIndex::flat();
    for d in &corpus {
        index.insert(d.clone()).unwrap();
    }

    let mut r = common::rng(10);
    for trial in 0..200 {
        // Random conjunction of a numeric bound and optionally a brand test.
        let bound: i64 = r.random_range(0..220);
        let (op, numeric): (&str, fn(f64, f64) -> bool) = match r.random_range(0..4) {
            0 => ("<", |a, b| a < b),
            1 => ("<=", |a, b| a <= b),
            2 => (">", |a, b| a > b),
            _ => (">=", |a, b| a >= b),
        };
        let brand_clause = match r.random_range(0..3) {
            0 => None,
            1 => Some((
                format!(" && brand=\"{}\"", BRANDS[trial % 5]),
                vec![BRANDS[trial % 5]],
            )),
            _ => {
                let set = vec![BRANDS[trial % 5], BRANDS[(trial + 2) % 5]];
                Some((
                    format!(" && brand in (\"{}\", \"{}\")", set[0], set[1]),
                    set,
                ))
            }
        };
        let text = format!(
            "price{op}{bound}{}",
            brand_clause.as_ref().map_or("", |(t, _)| t.as_str())
        );
        let filter = FilterExpr::parse(&text).map_err(|e| format!("{text}: {e}"))?;

        let survivors: Vec<(String, Vec<f64>)> = (0..500)
            .filter(|&i| {
                numeric(metas[i].0, bound as f64)
                    && brand_clause
                        .as_ref()
                        .is_none_or(|(_, set)| set.contains(&metas[i].1))
            })
            .map(|i| (format!("d{i:05}"), vectors[i].clone()))
            .collect();
        let k = r.random_range(1..=20);
        let q: Vec<f64> = unit_vectors(1, 8, 1_000 + trial as u64).remove(0);
        let truth = brute_force(&survivors, &q, k);
        let hits = index.search_filtered(&vector(&q), k, &filter).unwrap();
        let got: Vec<(&str, f64)> = hits
            .iter()
            .map(|h| (h.doc_id.as_str(), h.distance))
            .collect();
        check(
            got.len() == truth.len()
                && got
                    .iter()
                    .zip(&truth)
                    .all(|(a, b)| a.0 == b.0 && (a.1 - b.1).abs() <= 1e-9),
            || format!("trial {trial} `{text}` k={k}: {got:?} vs {truth:?}"),
        )?;
    }
    let secs = within(started, 10.0)?;
    Ok(format!("200 randomized trials match ({secs:.2} s)"))
}

// 6. Concurrent appends, then recovery from disk.
fn conversation_durability() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("conversations.jsonl");
    let store = Arc::new(ConversationStore::open(&path).unwrap());
    let threads: Vec<_> = (0..10)
        .map(|t| {
            let store = Arc::clone(&store);
            std::thread::spawn(move || {
                for i in 0..100 {
                    let session = format!("s{}", (t + i) % 10);
                    store
                        .append_message(
                            &session,
                            Role::User,
                            format!("t{t} i{i}"),
                            metadata! { "thread" => t as i64 },
                        )
                        .unwrap();
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    let before: BTreeMap<String, Vec<_>> = (0..10)
        .map(|s| {
            (
                format!("s{s}"),
                store.get_history(&format!("s{s}"), usize::MAX),
            )
        })
        .collect();
    drop(store);

    let reopened = ConversationStore::open(&path).unwrap();
    for (session, expected) in &before {
        let mut paged = Vec::new();
        let mut from = 0;
        loop {
            let page = reopened.page(session, from, 7);
            if page.is_empty() {
                break;
            }
            from += page.len() as u64;
            paged.extend(page);
        }
        let seqs: Vec<u64> = paged.iter().map(|m| m.seq).collect();
        check(seqs == (0..100).collect::<Vec<u64>>(), || {
            format!("{session}: seqs {seqs:?}")
        })?;
        check(&paged == expected, || {
            format!("{session}: contents differ after reopen")
        })?;
        // Every (thread, i) pair that targets this session is present exactly once.
        let s: usize = session[1..].parse().unwrap();
        let mut texts: Vec<&str> = paged.iter().map(|m| m.text.as_str()).collect();
        texts.sort_unstable();
        let mut want: Vec<String> = (0..10)
            .flat_map(|t| {
                (0..100)
                    .filter(move |i| (t + i) % 10 == s)
                    .map(move |i| format!("t{t} i{i}"))
            })
            .collect();
        want.sort_unstable();
        check(texts == want, || format!("{session}: wrong message set"))?;
    }
    let secs = within(started, 10.0)?;
    Ok(format!(
        "10 sessions x 100 contiguous seqs after reopen ({secs:.2} s)"
    ))
}

// 7. Cache against a reference simulator.
struct Reference {
    capacity: usize,
    /// Recency order, least recent first: (key, value, inserted_at, ttl).
    entries: Vec<(String, String, u64, u64)>,
}

impl Reference {
    fn get(&mut self, key: &str, now: u64) -> Option<String> {
        let pos = self.entries.iter().position(|e| e.0 == key)?;
        let e = &self.entries[pos];
        if now >= e.2 + e.3 {
            return None;
        }
        let e = self.entries.remove(pos);
        let v = e.1.clone();
        self.entries.push(e);
        Some(v)
    }

    fn put(&mut self, key: &str, value: &str, ttl: u64, now: u64) {
        if let Some(pos) = self.entries.iter().position(|e| e.0 == key) {
            self.entries.remove(pos);
        } else if self.entries.len() >= self.capacity {
            let victim = self
                .entries
                .iter()
                .position(|e| now >= e.2 + e.3)
                .unwrap_or(0);
            self.entries.remove(victim);
        }
        self.entries
            .push((key.to_owned(), value.to_owned(), now, ttl));
    }
}

fn cache_contract() -> Outcome {
    let started = Instant::now();
    let capacity = 16;
    let clock = Arc::new(ManualClock::new(0));
    let cache = ResponseCache::with_clock(capacity, 1_000, clock.clone()).unwrap();
    let mut reference = Reference {
        capacity,
        entries: Vec::new(),
    };
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let (mut hits, mut evict_pressure) = (0, 0);
    for op in 0..10_000 {
        clock.advance(r.random_range(0..40));
        let now = clock.now_ms();
        let key = format!("k{}", r.random_range(0..40));
        if r.random_bool(0.5) {
            let ttl = r.random_range(1..600);
            let value = format!("v{op}");
            if reference.entries.len() >= capacity {
                evict_pressure += 1;
            }
            cache.put(&key, value.clone(), ttl, now);
            reference.put(&key, &value, ttl, now);
        } else {
            let want = reference.get(&key, now);
            let entry = cache.peek(&key);
            let got = cache.get(&key, now);
            check(got == want, || {
                format!("op {op} get {key} at {now}: {got:?} vs {want:?}")
            })?;
            if got.is_some() {
                hits += 1;
                let e = entry.unwrap();
                check(now < e.inserted_at + e.ttl, || {
                    format!("op {op}: expired entry served")
                })?;
            }
        }
        check(cache.len() <= capacity, || {
            format!("op {op}: {} entries", cache.len())
        })?;
    }
    check(hits > 500 && evict_pressure > 500, || {
        format!("trace too easy: {hits} hits, {evict_pressure} full puts")
    })?;
    let secs = within(started, 5.0)?;
    Ok(format!(
        "10000 ops, {hits} hits, all decisions match ({secs:.2} s)"
    ))
}

// 8. Full pipeline with the fixture embedder and the mock model.
fn end_to_end() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("conversations.jsonl");
    let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(1_000));
    let mut index = VectorIndex::flat();
    for d in contextdb::fixture::shoe_documents() {
        index.insert(d).unwrap();
    }
    let llm = Arc::new(MockLlm::new());
    let conversations =
        Arc::new(ConversationStore::open_with(&log, Arc::clone(&clock), false).unwrap());
    let pipeline = Pipeline::new(
        Arc::new(SharedIndex::new(index)),
        Arc::new(FixtureEmbedder),
        llm.clone(),
    )
    .with_conversations(Arc::clone(&conversations))
    .with_clock(clock);
    pipeline
        .profiles()
        .put_profile(
            "shopper",
            metadata! { "preferred_brand" => "Reebok", "budget" => 100 },
        )
        .unwrap();
    pipeline
        .handle_query("s", "shopper", "ASICS Gel-Kayano", 1, None)
        .unwrap();

    let question = "I need comfortable running shoes under $100";
    let filter = FilterExpr::parse("price<100").unwrap();
    let first = pipeline
        .handle_query("s", "shopper", question, 1, Some(&filter))
        .unwrap();
    let prompt = first.prompt.clone().ok_or("no prompt on a miss")?;
    let rendered = &prompt.rendered;
    check(
        rendered.contains("user: ASICS Gel-Kayano\nassistant: "),
        || "history block missing".into(),
    )?;
    check(
        rendered.contains("budget=100\npreferred_brand=Reebok"),
        || "situational fields missing".into(),
    )?;
    let reebok_line = rendered
        .lines()
        .find(|l| l.starts_with("reebok-floatride "))
        .ok_or("no Reebok line")?;
    check(reebok_line.contains("(distance=0.22)"), || {
        reebok_line.to_owned()
    })?;
    check(
        !first.cached && first.text.contains("reebok-floatride"),
        || first.text.clone(),
    )?;

    let second = pipeline
        .handle_query("s", "shopper", question, 1, Some(&filter))
        .unwrap();
    check(second.cached && second.text == first.text, || {
        "repeat was not served from cache".into()
    })?;

    let messages = conversations.total_messages();
    let bytes = std::fs::read(&log).unwrap();
    llm.set_failing(true);
    check(
        pipeline
            .handle_query("s", "shopper", "Reebok Floatride", 1, None)
            .is_err(),
        || "failing model did not fail".into(),
    )?;
    check(conversations.total_messages() == messages, || {
        "failed call added messages".into()
    })?;
    check(std::fs::read(&log).unwrap() == bytes, || {
        "failed call wrote to the log".into()
    })?;
    let secs = within(started, 5.0)?;
    Ok(format!(
        "prompt has all contexts, repeat cached, failure writes nothing ({secs:.2} s)"
    ))
}

// 9. Snapshot save/load for every index kind.
fn snapshot_round_trip() -> Outcome {
    let started = Instant::now();
    let vectors = unit_vectors(2_000, 16, 12);
    let corpus: Vec<Document> = docs(&vectors, |i| metadata! { "bucket" => (i % 7) as i64 });
    let training: Vec<Vector> = vectors.iter().map(|v| vector(v)).collect();
    let dir = tempfile::tempdir().unwrap();
    let queries: Vec<Vector> = unit_vectors(50, 16, 13).iter().map(|q| vector(q)).collect();
    let filter = FilterExpr::parse("bucket>=3").unwrap();
    let mut ivf = VectorIndex::ivf();
    ivf.train_ivf(&training, IvfParams::for_training_size(training.len()))
        .unwrap();
    for mut index in [
        VectorIndex::flat(),
        VectorIndex::hnsw(HnswParams::default()).unwrap(),
        ivf,
    ] {
        for d in &corpus {
            index.insert(d.clone()).unwrap();
        }
        // Deletions must survive too.
        for i in (0..2_000).step_by(13) {
            index.remove(&format!("d{i:05}"));
        }
        let path = dir.path().join(format!("{}.ctx", index.kind()));
        index.save(&path).unwrap();
        let loaded = VectorIndex::load(&path).unwrap();
        check(
            loaded.kind() == index.kind() && loaded.len() == index.len(),
            || "shape differs".into(),
        )?;
        for q in &queries {
            check(
                index.search(q, 10).unwrap() == loaded.search(q, 10).unwrap(),
                || format!("{} search differs", index.kind()),
            )?;
            check(
                index.search_filtered(q, 10, &filter).unwrap()
                    == loaded.search_filtered(q, 10, &filter).unwrap(),
                || format!("{} filtered search differs", index.kind()),
            )?;
        }
        // Both copies keep evolving identically.
        let mut loaded = loaded;
        let extra =
            Document::new("extra", "", metadata! { "bucket" => 1 }, queries[0].clone()).unwrap();
        index.insert(extra.clone()).unwrap();
        loaded.insert(extra).unwrap();
        check(
            index.search(&queries[1], 10).unwrap() == loaded.search(&queries[1], 10).unwrap(),
            || format!("{} diverges after a post-load insert", index.kind()),
        )?;
    }
    let secs = within(started, 10.0)?;
    Ok(format!(
        "flat, hnsw, ivf identical on 50 queries ({secs:.2} s)"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("shoe demo regression", shoe_demo),
        ("flat-oracle equivalence", flat_oracle),
        ("HNSW quality", hnsw_quality),
        ("IVF exactness bound", ivf_bound),
        ("hybrid-filter correctness", hybrid_filter),
        ("conversation durability/ordering", conversation_durability),
        ("cache contract", cache_contract),
        ("end-to-end pipeline", end_to_end),
        ("snapshot round-trip", snapshot_round_trip),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {} {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} {name}: {why}", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
