//! Situational context: user profiles with equality lookups by field.
//!
//! ```bash
//! cargo run --example profiles
//! ```

use contextdb::metadata;
use contextdb::situational::ProfileStore;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("contextdb-profiles-example");
    let _ = std::fs::remove_dir_all(&dir);
    let path = dir.join("profiles.jsonl");

    let store = ProfileStore::open(&path)?;
    store.put_profile(
        "u1",
        metadata! { "preferred_brand" => "Reebok", "budget" => 100 },
    )?;
    store.put_profile(
        "u2",
        metadata! { "preferred_brand" => "Nike", "budget" => 200 },
    )?;
    store.put_profile(
        "u3",
        metadata! { "preferred_brand" => "Reebok", "budget" => 80 },
    )?;
    let updated = store.update_field("u1", "budget", 150.into())?;
    println!(
        "u1 after update: {:?} (updated_at {})",
        updated.fields, updated.updated_at
    );

    let fans: Vec<String> = store
        .query_by_field("preferred_brand", &"Reebok".into())
        .into_iter()
        .map(|p| p.user_id)
        .collect();
    println!("Reebok fans: {fans:?}");

    // Typed equality: the number 100 and the string "100" are different values.
    println!(
        "budget == \"150\": {} profiles",
        store.query_by_field("budget", &"150".into()).len()
    );

    drop(store);
    let reopened = ProfileStore::open(&path)?;
    println!(
        "after reopen u1 budget = {}",
        reopened.get_profile("u1").unwrap().fields["budget"]
    );
    match reopened.update_field("nobody", "budget", 1.into()) {
        Err(e) => println!("update on a missing profile: {e}"),
        Ok(_) => println!("unexpected success"),
    }
    Ok(())
}
