//! End-to-end tests of the `contextdb` binary with golden stdout.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_contextdb");
const QUESTION: &str = "I need comfortable running shoes under $100";

fn catalog() -> String {
    fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/shoes.jsonl")).unwrap()
}

fn run(home: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .env("CONTEXTDB_HOME", home)
        .env_remove("RUST_LOG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    if let Some(text) = stdin {
        pipe.write_all(text.as_bytes()).unwrap();
    }
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Drops latency-tagged lines so outputs can be compared byte for byte.
fn mask_latency(s: &str) -> String {
    s.lines()
        .filter(|l| !l.starts_with("latency:"))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn ingest_shoes(home: &Path) {
    let path = home.join("shoes.jsonl");
    fs::write(&path, catalog()).unwrap();
    let o = run(
        home,
        &[
            "ingest",
            "--catalog",
            path.to_str().unwrap(),
            "--embedder",
            "fixture",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn shipped_catalog_matches_fixture() {
    assert_eq!(catalog(), contextdb::fixture::shoe_catalog_jsonl());
}

#[test]
fn demo_shoes_golden() {
    let home = tempfile::tempdir().unwrap();
    let o = run(home.path(), &["demo-shoes"], None);
    assert_eq!(o.status.code(), Some(0));
    let expected = "\
Question: I need comfortable running shoes under $100
Query embedding: (3.0, 2.7)

Euclidean distances:
  Nike ZoomX Infinity Run  (1.2, 3.5)  1.97
  Adidas UltraBoost        (2.0, 3.2)  1.12
  Reebok Floatride         (3.1, 2.9)  0.22
  ASICS Gel-Kayano         (2.5, 3.0)  0.58

Ranking (nearest first):
  1. reebok-floatride   0.22
  2. asics-gel-kayano   0.58
  3. adidas-ultraboost  1.12
  4. nike-zoomx         1.97

Filter: price<100
Top recommendation: Reebok Floatride (reebok-floatride), price $90, distance 0.22

RESULT distances=nike-zoomx:1.97,adidas-ultraboost:1.12,reebok-floatride:0.22,asics-gel-kayano:0.58
RESULT ranking=reebok-floatride,asics-gel-kayano,adidas-ultraboost,nike-zoomx
RESULT top=reebok-floatride price=90
DEMO_OK
";
    assert_eq!(stdout(&o), expected);
}

#[test]
fn ingest_and_query_golden() {
    let home = tempfile::tempdir().unwrap();
    let path = home.path().join("shoes.jsonl");
    fs::write(&path, catalog()).unwrap();
    let o = run(
        home.path(),
        &[
            "ingest",
            "--catalog",
            path.to_str().unwrap(),
            "--embedder",
            "fixture",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("ingested 4 documents into "));
    assert!(home.path().join("index/index.ctx").exists());
    assert!(home.path().join("index/embedder.toml").exists());

    let o = run(home.path(), &["query", "--q", QUESTION, "--k", "4"], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "\
1. reebok-floatride distance=0.22 brand=Reebok name=Reebok Floatride price=90
2. asics-gel-kayano distance=0.58 brand=ASICS name=ASICS Gel-Kayano price=110
3. adidas-ultraboost distance=1.12 brand=Adidas name=Adidas UltraBoost price=120
4. nike-zoomx distance=1.97 brand=Nike name=Nike ZoomX Infinity Run price=150
"
    );
    let again = run(home.path(), &["query", "--q", QUESTION, "--k", "4"], None);
    assert_eq!(again.stdout, o.stdout);

    let o = run(
        home.path(),
        &[
            "query",
            "--q",
            QUESTION,
            "--k",
            "1",
            "--filter",
            "price<100",
        ],
        None,
    );
    assert_eq!(
        stdout(&o),
        "1. reebok-floatride distance=0.22 brand=Reebok name=Reebok Floatride price=90\n"
    );

    let o = run(
        home.path(),
        &["query", "--q", QUESTION, "--filter", "price<50"],
        None,
    );
    assert_eq!(stdout(&o), "no results\n");
}

#[test]
fn bad_filter_is_a_usage_error_with_column() {
    let home = tempfile::tempdir().unwrap();
    ingest_shoes(home.path());
    let o = run(
        home.path(),
        &[
            "query",
            "--q",
            QUESTION,
            "--k",
            "1",
            "--filter",
            "price<<100",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("column 7"), "{err}");
    assert!(err.contains("  price<<100\n        ^"), "{err}");
}

#[test]
fn filter_type_mismatch_is_a_data_error() {
    let home = tempfile::tempdir().unwrap();
    ingest_shoes(home.path());
    let o = run(
        home.path(),
        &["query", "--q", QUESTION, "--filter", "brand<3"],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("type mismatch"));
}

#[test]
fn malformed_line_is_skipped_with_its_number() {
    let home = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for i in 1..=100 {
        if i == 37 {
            text.push_str("{\"id\": \"broken\", \"text\": \n");
        } else {
            text.push_str(&format!("{{\"id\":\"doc-{i}\",\"text\":\"document number {i}\",\"metadata\":{{\"n\":{i}}}}}\n"));
        }
    }
    let path = home.path().join("catalog.jsonl");
    fs::write(&path, text).unwrap();
    let o = run(
        home.path(),
        &[
            "ingest",
            "--catalog",
            path.to_str().unwrap(),
            "--embedder",
            "hash",
            "--dim",
            "16",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(
        stdout(&o).starts_with("ingested 99 documents"),
        "{}",
        stdout(&o)
    );
    assert!(
        stderr(&o).contains("catalog.jsonl:37: malformed record"),
        "{}",
        stderr(&o)
    );

    let o = run(
        home.path(),
        &["query", "--q", "document number 5", "--k", "1"],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).starts_with("1. doc-5 distance=0.00 "),
        "{}",
        stdout(&o)
    );
}

#[test]
fn ingest_data_errors_exit_2() {
    let home = tempfile::tempdir().unwrap();
    let empty = home.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = run(
        home.path(),
        &["ingest", "--catalog", empty.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no valid records"));

    let o = run(
        home.path(),
        &["ingest", "--catalog", "/definitely/not/here.jsonl"],
        None,
    );
    assert_eq!(o.status.code(), Some(2));

    let o = run(home.path(), &["query", "--q", "x"], None);
    assert_eq!(o.status.code(), Some(2));

    let bad = home.path().join("bad.jsonl");
    fs::write(
        &bad,
        "{\"id\":\"a\",\"text\":\"x\",\"embedding\":[1.0,2.0,3.0]}\n",
    )
    .unwrap();
    let o = run(
        home.path(),
        &[
            "ingest",
            "--catalog",
            bad.to_str().unwrap(),
            "--embedder",
            "fixture",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.jsonl:1"));
}

#[test]
fn usage_errors_exit_1() {
    let home = tempfile::tempdir().unwrap();
    assert_eq!(run(home.path(), &["nonsense"], None).status.code(), Some(1));
    assert_eq!(run(home.path(), &["query"], None).status.code(), Some(1));
    assert_eq!(
        run(home.path(), &["bench", "--kind", "lsh"], None)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(home.path(), &["bench", "--n", "10"], None)
            .status
            .code(),
        Some(1)
    );
    let o = run(home.path(), &["--help"], None);
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["ingest", "query", "demo-shoes", "chat", "bench"] {
        assert!(stdout(&o).contains(cmd), "help lists {cmd}");
    }
}

#[test]
fn all_index_kinds_ingest_and_agree() {
    let home = tempfile::tempdir().unwrap();
    let path = home.path().join("shoes.jsonl");
    fs::write(&path, catalog()).unwrap();
    let mut outputs = Vec::new();
    for kind in ["flat", "hnsw", "ivf"] {
        let dir = home.path().join(kind);
        let o = run(
            home.path(),
            &[
                "ingest",
                "--catalog",
                path.to_str().unwrap(),
                "--embedder",
                "fixture",
                "--kind",
                kind,
                "--index",
                dir.to_str().unwrap(),
            ],
            None,
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let q = run(
            home.path(),
            &[
                "query",
                "--index",
                dir.to_str().unwrap(),
                "--q",
                QUESTION,
                "--k",
                "4",
            ],
            None,
        );
        outputs.push(stdout(&q));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn chat_session_round_trip() {
    let home = tempfile::tempdir().unwrap();
    ingest_shoes(home.path());
    let input = format!("{QUESTION}\n{QUESTION}\n");
    let o = run(
        home.path(),
        &[
            "chat",
            "--session",
            "s1",
            "--user",
            "u1",
            "--k",
            "1",
            "--filter",
            "price<100",
        ],
        Some(&input),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let answer = format!("[mock] question: {QUESTION} | retrieved: [reebok-floatride]\n\nReferences: reebok-floatride\n");
    assert_eq!(stdout(&o), format!("{answer}[cached] {answer}"));

    // Two distinct turns then EOF: four new messages on disk.
    let o = run(
        home.path(),
        &["chat", "--session", "s2", "--user", "u1"],
        Some("Reebok Floatride\nASICS Gel-Kayano\n"),
    );
    assert_eq!(o.status.code(), Some(0));
    let log = fs::read_to_string(home.path().join("conversations.jsonl")).unwrap();
    assert_eq!(
        log.lines()
            .filter(|l| l.contains("\"session_id\":\"s2\""))
            .count(),
        4
    );
    assert_eq!(
        log.lines()
            .filter(|l| l.contains("\"session_id\":\"s1\""))
            .count(),
        2
    );
}

#[test]
fn chat_verbose_lists_every_stage_and_survives_errors() {
    let home = tempfile::tempdir().unwrap();
    ingest_shoes(home.path());
    let o = run(
        home.path(),
        &[
            "chat",
            "--session",
            "s",
            "--user",
            "u",
            "--k",
            "2",
            "--verbose",
        ],
        Some(&format!("not in the fixture\n{QUESTION}\n")),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("embed stage failed"));
    let out = stdout(&o);
    let latency = out.lines().find(|l| l.starts_with("latency:")).unwrap();
    for stage in [
        "cache",
        "history",
        "situation",
        "embed",
        "search",
        "llm",
        "persist",
    ] {
        assert!(
            latency.contains(&format!(" {stage}="))
                || latency.starts_with(&format!("latency: {stage}="))
        );
    }
    assert_eq!(
        mask_latency(&out),
        format!(
            "[mock] question: {QUESTION} | retrieved: [reebok-floatride, asics-gel-kayano]\n\nReferences: reebok-floatride, asics-gel-kayano\nretrieved: reebok-floatride (0.22), asics-gel-kayano (0.58)\n"
        )
    );
}

#[test]
fn chat_uses_profiles_templates_and_history() {
    let home = tempfile::tempdir().unwrap();
    ingest_shoes(home.path());
    let seed = home.path().join("seed.jsonl");
    fs::write(&seed, "{\"user_id\":\"u\",\"fields\":{\"budget\":100}}\n").unwrap();
    fs::create_dir_all(home.path().join("templates")).unwrap();
    fs::write(
        home.path().join("templates/terse.txt"),
        "{question}|{history}|{situation}|{retrieved}",
    )
    .unwrap();
    fs::write(home.path().join("templates/broken.txt"), "{question}").unwrap();
    let o = run(
        home.path(),
        &[
            "chat",
            "--session",
            "s",
            "--user",
            "u",
            "--template",
            "terse",
            "--profiles-seed",
            seed.to_str().unwrap(),
        ],
        Some("Reebok Floatride\n"),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let profiles = fs::read_to_string(home.path().join("profiles.jsonl")).unwrap();
    assert!(profiles.contains("\"budget\":100"));

    let o = run(
        home.path(),
        &[
            "chat",
            "--session",
            "s",
            "--user",
            "u",
            "--template",
            "broken",
        ],
        Some("x\n"),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing placeholder"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let home = tempfile::tempdir().unwrap();
    fs::write(
        home.path().join("config.toml"),
        "embedder = \"fixture\"\nk = 2\n",
    )
    .unwrap();
    let path = home.path().join("shoes.jsonl");
    fs::write(&path, catalog()).unwrap();
    let o = run(
        home.path(),
        &["ingest", "--catalog", path.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(home.path(), &["query", "--q", QUESTION], None);
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = run(home.path(), &["query", "--q", QUESTION, "--k", "3"], None);
    assert_eq!(stdout(&o).lines().count(), 3);

    fs::write(home.path().join("config.toml"), "k = \"many\"\n").unwrap();
    assert_eq!(
        run(home.path(), &["query", "--q", QUESTION], None)
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn home_flag_overrides_environment() {
    let env_home = tempfile::tempdir().unwrap();
    let flag_home = tempfile::tempdir().unwrap();
    ingest_shoes(flag_home.path());
    let o = run(
        env_home.path(),
        &[
            "query",
            "--q",
            QUESTION,
            "--home",
            flag_home.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn bench_flat_and_exhaustive_ivf_are_exact() {
    let home = tempfile::tempdir().unwrap();
    let o = run(
        home.path(),
        &[
            "bench", "--n", "500", "--dim", "8", "--k", "5", "--kind", "flat", "--seed", "1",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        mask_latency(&stdout(&o)),
        "kind=flat n=500 dim=8 k=5 queries=100 seed=1\nrecall@5=1.0000\n"
    );
    let o = run(
        home.path(),
        &[
            "bench", "--n", "500", "--dim", "8", "--k", "5", "--kind", "ivf", "--nlist", "10",
            "--nprobe", "10", "--seed", "1",
        ],
        None,
    );
    assert!(stdout(&o).contains("recall@5=1.0000"), "{}", stdout(&o));
    let args = [
        "bench",
        "--n",
        "1000",
        "--dim",
        "8",
        "--k",
        "5",
        "--kind",
        "hnsw",
        "--ef-search",
        "16",
        "--seed",
        "3",
    ];
    let a = run(home.path(), &args, None);
    let b = run(home.path(), &args, None);
    assert_eq!(mask_latency(&stdout(&a)), mask_latency(&stdout(&b)));
}
