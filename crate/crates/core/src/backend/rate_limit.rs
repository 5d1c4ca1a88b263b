use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use super::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Permit {
    Granted,
    /// Time until the oldest admitted call leaves the window.
    Wait(Duration),
}

/// Sliding-window call limiter: at most `capacity` admissions in any trailing
/// `window`.
#[derive(Debug, Clone)]
pub struct RateLimiter {
    capacity: usize,
    window: Duration,
    recent: VecDeque<Duration>,
}

impl RateLimiter {
    pub fn new(capacity: usize, window: Duration) -> Self {
        assert!(capacity > 0, "rate limiter capacity must be positive");
        RateLimiter {
            capacity,
            window,
            recent: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn window(&self) -> Duration {
        self.window
    }

    /// Admission times still inside the window, oldest first.
    pub fn recent_call_times(&self) -> impl Iterator<Item = Duration> + '_ {
        self.recent.iter().copied()
    }

    pub fn acquire_permit(&mut self, now: Duration) -> Permit {
        while let Some(&oldest) = self.recent.front() {
            if now.saturating_sub(oldest) >= self.window {
                self.recent.pop_front();
            } else {
                break;
            }
        }
        if self.recent.len() < self.capacity {
            self.recent.push_back(now);
            Permit::Granted
        } else {
            let oldest = self.recent[0];
            Permit::Wait((oldest + self.window).saturating_sub(now))
        }
    }
}

/// A [`RateLimiter`] shared between callers; all mutation goes through one
/// lock.
#[derive(Debug)]
pub struct SharedRateLimiter {
    inner: Mutex<RateLimiter>,
}

impl SharedRateLimiter {
    pub fn new(capacity: usize, window: Duration) -> Self {
        SharedRateLimiter {
            inner: Mutex::new(RateLimiter::new(capacity, window)),
        }
    }

    pub fn try_acquire(&self, now: Duration) -> Permit {
        self.inner
            .lock()
            .expect("rate limiter lock poisoned")
            .acquire_permit(now)
    }

    /// Blocks on `clock` until a permit is granted; returns the time waited.
    pub fn acquire(&self, clock: &dyn Clock) -> Duration {
        let mut waited = Duration::ZERO;
        loop {
            match self.try_acquire(clock.now()) {
                Permit::Granted => return waited,
                Permit::Wait(d) => {
                    clock.sleep(d);
                    waited += d;
                }
            }
        }
    }
}
