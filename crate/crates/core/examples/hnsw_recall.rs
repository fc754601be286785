//! Measures HNSW recall@10 against the exact flat scan on random unit vectors.
//!
//! ```bash
//! cargo run --release --example hnsw_recall -- 10000 64
//! ```

use contextdb::bench::{run, BenchConfig};
use contextdb::IndexKind;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let dim: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(64);

    println!(
        "{:>10} {:>8} {:>10} {:>10} {:>10}",
        "ef_search", "recall", "p50_us", "p95_us", "build_ms"
    );
    for ef in [16, 32, 64, 128] {
        let mut config = BenchConfig::new(IndexKind::Hnsw, n, dim, 10, 42);
        config.hnsw.ef_search = ef;
        let report = run(&config).expect("benchmark");
        println!(
            "{:>10} {:>8.4} {:>10.1} {:>10.1} {:>10.0}",
            ef, report.recall, report.p50_us, report.p95_us, report.build_ms
        );
    }
}
