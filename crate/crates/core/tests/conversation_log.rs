//! Conversation store durability, crash recovery and append cost.

use std::fs::OpenOptions;
use std::io::Write;
use std::time::Instant;

use contextdb::conversation::{ConversationStore, Role};
use contextdb::{metadata, Metadata};

#[test]
fn torn_tail_is_truncated_on_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    {
        let store = ConversationStore::open(&path).unwrap();
        store
            .append_message("s", Role::User, "one", Metadata::new())
            .unwrap();
        store
            .append_message("s", Role::Assistant, "two", metadata! { "rating" => 5 })
            .unwrap();
    }
    let intact = std::fs::read(&path).unwrap();
    // A crash mid-write leaves a partial line behind.
    OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap()
        .write_all(b"{\"session_id\":\"s\",\"seq\":2,\"ro")
        .unwrap();

    let store = ConversationStore::open(&path).unwrap();
    assert_eq!(store.session_len("s"), 2);
    assert_eq!(std::fs::read(&path).unwrap(), intact);
    let m = store
        .append_message("s", Role::User, "three", Metadata::new())
        .unwrap();
    assert_eq!(m.seq, 2);
    drop(store);

    let history = ConversationStore::open(&path).unwrap().get_history("s", 10);
    let texts: Vec<&str> = history.iter().map(|m| m.text.as_str()).collect();
    assert_eq!(texts, ["one", "two", "three"]);
    assert_eq!(history[1].metadata["rating"], 5.into());
}

#[test]
fn every_field_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    let written: Vec<_> = {
        let store = ConversationStore::open(&path).unwrap();
        (0..50)
            .map(|i| {
                let role = [Role::User, Role::Assistant, Role::System][i % 3];
                store
                    .append_message(
                        &format!("s{}", i % 4),
                        role,
                        format!("line {i}\nwith \"quotes\""),
                        metadata! { "i" => i as i64 },
                    )
                    .unwrap()
            })
            .collect()
    };
    let store = ConversationStore::open(&path).unwrap();
    for m in written {
        let back = store.page(&m.session_id, m.seq, 1);
        assert_eq!(back, vec![m]);
    }
}

#[test]
fn hundred_thousand_appends_stay_linear() {
    let dir = tempfile::tempdir().unwrap();
    let store = ConversationStore::open(dir.path().join("log.jsonl")).unwrap();
    let started = Instant::now();
    let mut chunk_secs = Vec::new();
    for chunk in 0..10 {
        let t = Instant::now();
        for i in 0..10_000 {
            let n = chunk * 10_000 + i;
            store
                .append_message(
                    &format!("s{}", n % 50),
                    Role::User,
                    format!("message {n}"),
                    Metadata::new(),
                )
                .unwrap();
        }
        chunk_secs.push(t.elapsed().as_secs_f64());
    }
    let total = started.elapsed().as_secs_f64();
    println!(
        "100k appends in {total:.2} s; first 10k {:.3} s, last 10k {:.3} s",
        chunk_secs[0], chunk_secs[9]
    );
    assert_eq!(store.total_messages(), 100_000);
    assert!(total < 30.0, "{total} s");
    // Allow noise but not growth with the amount already stored.
    assert!(chunk_secs[9] < chunk_secs[0] * 3.0 + 0.05, "{chunk_secs:?}");
}
