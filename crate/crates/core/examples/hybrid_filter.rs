//! Vector search combined with metadata predicates on every index kind.
//!
//! ```bash
//! cargo run --example hybrid_filter
//! ```

use contextdb::bench::random_unit_vectors;
use contextdb::{metadata, Document, FilterExpr, HnswParams, IvfParams, VectorIndex};

const CATEGORIES: [&str; 4] = ["running", "trail", "walking", "court"];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vectors = random_unit_vectors(2_000, 16, 7);
    let docs: Vec<Document> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let meta = metadata! {
                "category" => CATEGORIES[i % 4],
                "price" => (40 + (i * 37) % 160) as i64,
                "in_stock" => i % 3 != 0,
            };
            Document::new(
                format!("sku-{i:04}"),
                format!("product {i}"),
                meta,
                v.clone(),
            )
            .expect("valid")
        })
        .collect();

    let mut flat = VectorIndex::flat();
    let mut hnsw = VectorIndex::hnsw(HnswParams::default())?;
    let mut ivf = VectorIndex::ivf();
    ivf.train_ivf(&vectors, IvfParams::for_training_size(vectors.len()))?;
    for doc in docs {
        flat.insert(doc.clone())?;
        hnsw.insert(doc.clone())?;
        ivf.insert(doc)?;
    }

    let query = &random_unit_vectors(1, 16, 99)[0];
    let filter =
        FilterExpr::parse(r#"category in ("running", "trail") && price<100 && in_stock=true"#)?;
    println!("filter: {filter}\n");
    for index in [&flat, &hnsw, &ivf] {
        let hits = index.search_filtered(query, 5, &filter)?;
        let ids: Vec<String> = hits
            .iter()
            .map(|h| format!("{}({:.3})", h.doc_id, h.distance))
            .collect();
        println!("{:<5} {}", index.kind(), ids.join(" "));
    }

    // Comparing a string field with a number is a type error, not a silent miss.
    let bad = FilterExpr::parse("category<3")?;
    match flat.search_filtered(query, 5, &bad) {
        Ok(_) => println!("\nunexpected success"),
        Err(e) => println!("\ncategory<3 -> {e}"),
    }
    Ok(())
}
