//! IVF: train a k-means coarse quantizer, then trade recall for speed with
//! `nprobe`.
//!
//! ```bash
//! cargo run --release --example ivf_search
//! ```

use contextdb::bench::{as_documents, random_unit_vectors, recall_at_k};
use contextdb::{FlatIndex, IvfParams, VectorIndex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 5_000;
    let vectors = random_unit_vectors(n, 32, 1);
    let queries = random_unit_vectors(100, 32, 2);

    let params = IvfParams::for_training_size(n);
    let mut index = VectorIndex::ivf();
    index.train_ivf(&vectors, params)?;
    let mut oracle = FlatIndex::new();
    for doc in as_documents(vectors) {
        oracle.insert(doc.clone())?;
        index.insert(doc)?;
    }
    let VectorIndex::Ivf(ivf) = &mut index else {
        unreachable!()
    };
    let sizes = ivf.list_sizes();
    println!(
        "nlist={} list sizes: min {} max {}",
        params.nlist,
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    );

    println!("{:>7} {:>10}", "nprobe", "recall@10");
    for nprobe in [1, 2, 4, 8, 16, 32, params.nlist] {
        ivf.set_nprobe(nprobe)?;
        let mut total = 0.0;
        for q in &queries {
            total += recall_at_k(&oracle.search(q, 10)?, &ivf.search(q, 10)?);
        }
        println!("{nprobe:>7} {:>10.3}", total / queries.len() as f64);
    }
    Ok(())
}
