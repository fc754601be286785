//! Durable, session-scoped chat history in an append-only JSONL log.
//!
//! ```bash
//! cargo run --example conversation_log
//! ```

use contextdb::conversation::{ConversationStore, NewMessage, Role};
use contextdb::{metadata, Metadata};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("contextdb-conversation-example");
    let _ = std::fs::remove_dir_all(&dir);
    let path = dir.join("conversations.jsonl");

    {
        let store = ConversationStore::open(&path)?;
        store.append_message("alice", Role::User, "Any trail shoes?", Metadata::new())?;
        store.append_batch(
            "alice",
            vec![
                NewMessage::new(Role::Assistant, "Try the Salomon Speedcross."),
                NewMessage::new(Role::User, "Under $100?")
                    .with_metadata(metadata! { "channel" => "web" }),
            ],
        )?;
        store.append_message("bob", Role::User, "Where is my order?", Metadata::new())?;
    }

    // Reopen: the log is replayed and every session comes back in order.
    let store = ConversationStore::open(&path)?;
    for summary in store.list_sessions() {
        println!("{}: {} messages", summary.session_id, summary.message_count);
    }
    println!("\nlast two messages for alice:");
    for m in store.get_history("alice", 2) {
        println!("  #{} {}: {}", m.seq, m.role, m.text);
    }
    println!("\nlog file:\n{}", std::fs::read_to_string(&path)?);
    Ok(())
}
