//! Save an index to a checksummed snapshot and load it back.
//!
//! ```bash
//! cargo run --example snapshot
//! ```

use contextdb::bench::{as_documents, random_unit_vectors};
use contextdb::{HnswParams, IndexError, VectorIndex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut index = VectorIndex::hnsw(HnswParams::default())?;
    for doc in as_documents(random_unit_vectors(500, 8, 3)) {
        index.insert(doc)?;
    }
    let dir = std::env::temp_dir().join("contextdb-snapshot-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("index.ctx");
    index.save(&path)?;
    println!(
        "wrote {} ({} bytes)",
        path.display(),
        std::fs::metadata(&path)?.len()
    );

    let loaded = VectorIndex::load(&path)?;
    let query = &random_unit_vectors(1, 8, 4)[0];
    assert_eq!(index.search(query, 5)?, loaded.search(query, 5)?);
    println!(
        "reloaded {} {} documents; search results identical",
        loaded.len(),
        loaded.kind()
    );

    // Flip one payload byte: the checksum catches it.
    let mut bytes = index.to_bytes();
    let middle = bytes.len() / 2;
    bytes[middle] ^= 0xff;
    match VectorIndex::from_bytes(&bytes) {
        Err(IndexError::Corrupt(why)) => println!("tampered snapshot rejected: {why}"),
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
