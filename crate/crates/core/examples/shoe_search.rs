//! The running-shoes walkthrough: embed the shopper's question, rank the
//! catalog by Euclidean distance, then apply the budget filter.
//!
//! ```bash
//! cargo run --example shoe_search
//! ```

use contextdb::fixture::{shoe_documents, DEMO_FILTER, DEMO_QUESTION};
use contextdb::{fixture_embed, FilterExpr, FlatIndex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut index = FlatIndex::new();
    for doc in shoe_documents() {
        index.insert(doc)?;
    }

    let query = fixture_embed(DEMO_QUESTION)?;
    println!("question: {DEMO_QUESTION}");
    println!("embedding: {:?}\n", query.as_slice());

    println!("all shoes, nearest first:");
    for hit in index.search(&query, 4)? {
        println!(
            "  {}. {:<18} distance={:.2}",
            hit.rank, hit.doc_id, hit.distance
        );
    }

    let budget = FilterExpr::parse(DEMO_FILTER)?;
    let best = &index.search_filtered(&query, 1, &budget)?[0];
    let doc = index.get(&best.doc_id).expect("hit is indexed");
    println!(
        "\nwith {budget}: {} at ${} (distance={:.2})",
        doc.metadata()["name"],
        doc.metadata()["price"],
        best.distance
    );
    Ok(())
}
