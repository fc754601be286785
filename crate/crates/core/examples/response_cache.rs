//! TTL plus LRU response cache driven by an injected clock.
//!
//! ```bash
//! cargo run --example response_cache
//! ```

use std::sync::Arc;

use contextdb::cache::{cache_key, ResponseCache};
use contextdb::{Clock, ManualClock};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock = Arc::new(ManualClock::new(0));
    let cache = ResponseCache::with_clock(2, 1_000, clock.clone())?;

    let key = cache_key("u1", "  Comfortable running SHOES? ");
    assert_eq!(key, cache_key("u1", "comfortable running shoes?"));
    cache.put_now(&key, "Try the Reebok Floatride.");
    clock.advance(999);
    println!("at t=999:  {:?}", cache.get_now(&key));
    clock.advance(1);
    println!("at t=1000: {:?}", cache.get_now(&key));

    // Least recently used goes first when the cache is full.
    let now = clock.now_ms();
    cache.put("a", "A", 10_000, now);
    cache.put("b", "B", 10_000, now);
    cache.get("a", now);
    cache.put("c", "C", 10_000, now);
    println!(
        "after a, b, get a, c: a={:?} b={:?} c={:?}",
        cache.get("a", now),
        cache.get("b", now),
        cache.get("c", now)
    );
    Ok(())
}
