//! The full query workflow: cache, history, profile, embedding, filtered
//! retrieval, engineered prompt, model call, persistence.
//!
//! ```bash
//! cargo run --example rag_pipeline
//! ```

use std::sync::Arc;

use contextdb::fixture::{shoe_documents, DEMO_FILTER, DEMO_QUESTION};
use contextdb::pipeline::{MockLlm, Pipeline};
use contextdb::{metadata, FilterExpr, FixtureEmbedder, SharedIndex, VectorIndex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut index = VectorIndex::flat();
    for doc in shoe_documents() {
        index.insert(doc)?;
    }
    let llm = Arc::new(MockLlm::new());
    let pipeline = Pipeline::new(
        Arc::new(SharedIndex::new(index)),
        Arc::new(FixtureEmbedder),
        llm.clone(),
    );
    pipeline.profiles().put_profile(
        "shopper",
        metadata! { "preferred_brand" => "Reebok", "budget" => 100 },
    )?;
    let budget = FilterExpr::parse(DEMO_FILTER)?;

    pipeline.handle_query("s1", "shopper", "Reebok Floatride", 1, None)?;
    let response = pipeline.handle_query("s1", "shopper", DEMO_QUESTION, 1, Some(&budget))?;
    println!(
        "=== engineered prompt ===\n{}",
        response.prompt.as_ref().unwrap().rendered
    );
    println!("=== response ===\n{}\n", response.text);
    for (stage, ms) in &response.latency {
        println!("{stage:>9}: {ms:.3} ms");
    }

    let again = pipeline.handle_query("s1", "shopper", DEMO_QUESTION, 1, Some(&budget))?;
    println!(
        "\nrepeat: cached={} stages={}",
        again.cached,
        again.latency.len()
    );

    llm.set_failing(true);
    let before = pipeline.conversations().session_len("s1");
    let err = pipeline
        .handle_query("s1", "shopper", "ASICS Gel-Kayano", 1, None)
        .unwrap_err();
    println!(
        "model down: {err} (stage {}), messages {} -> {}",
        err.stage(),
        before,
        pipeline.conversations().session_len("s1")
    );
    Ok(())
}
