//! Pushes 25 calls through a 10-per-minute limiter on a virtual clock and
//! prints when each one was admitted.
//!
//! `cargo run --example rate_limiter`

use std::time::Duration;

use incident_eval::backend::{Clock, SharedRateLimiter, VirtualClock};

fn main() {
    let clock = VirtualClock::new();
    let limiter = SharedRateLimiter::new(10, Duration::from_secs(60));
    for call in 1..=25 {
        let waited = limiter.acquire(&clock);
        println!(
            "call {call:>2} admitted at t = {:>6.1} s (waited {:>4.1} s)",
            clock.now().as_secs_f64(),
            waited.as_secs_f64()
        );
        clock.advance(Duration::from_secs(2));
    }
}
