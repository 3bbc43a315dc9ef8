//! Sliding-window request gate and the clocks it runs against.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Monotonic time source. `now` is measured from an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

/// Wall-clock time.
#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Virtual time: `sleep` advances the clock instantly.
#[derive(Debug, Default)]
pub struct SimulatedClock {
    now: Mutex<Duration>,
}

impl SimulatedClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        *self.now.lock().expect("clock poisoned") += by;
    }
}

impl Clock for SimulatedClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock poisoned")
    }

    fn sleep(&self, duration: Duration) {
        self.advance(duration);
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("max_requests must be at least 1")]
    ZeroRequests,
    #[error("rate-limit window must be positive")]
    ZeroWindow,
}

/// Request budget and retry schedule for backend calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimitPolicy {
    pub max_requests: usize,
    pub window: Duration,
    pub max_retries: u32,
    /// First retry waits this long; each further retry doubles it.
    pub backoff_base: Duration,
}

impl Default for RateLimitPolicy {
    /// 15 requests per 60 s, three retries starting at 2 s.
    fn default() -> Self {
        Self {
            max_requests: 15,
            window: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_secs(2),
        }
    }
}

impl RateLimitPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.max_requests == 0 {
            return Err(PolicyError::ZeroRequests);
        }
        if self.window.is_zero() {
            return Err(PolicyError::ZeroWindow);
        }
        Ok(())
    }

    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        self.backoff_base.saturating_mul(1u32.checked_shl(retry).unwrap_or(u32::MAX))
    }
}

/// Admits at most `max_requests` calls in any window of length `window`:
/// a call at time `t` is admitted only if fewer than `max_requests` calls
/// happened in `(t - window, t]`.
#[derive(Debug)]
pub struct RateGate {
    policy: RateLimitPolicy,
    issued: Mutex<VecDeque<Duration>>,
}

impl RateGate {
    pub fn new(policy: RateLimitPolicy) -> Result<Self, PolicyError> {
        policy.validate()?;
        Ok(Self {
            policy,
            issued: Mutex::new(VecDeque::with_capacity(policy.max_requests)),
        })
    }

    /// Blocks (on `clock`) until a call may be issued, records it, and
    /// returns the issue time and how long the caller waited.
    pub fn acquire(&self, clock: &dyn Clock) -> (Duration, Duration) {
        let mut issued = self.issued.lock().expect("rate gate poisoned");
        let mut waited = Duration::ZERO;
        loop {
            let now = clock.now();
            while issued
                .front()
                .is_some_and(|&t| t + self.policy.window <= now)
            {
                issued.pop_front();
            }
            if issued.len() < self.policy.max_requests {
                issued.push_back(now);
                return (now, waited);
            }
            let oldest = *issued.front().expect("window is full");
            let wait = oldest + self.policy.window - now;
            clock.sleep(wait);
            waited += wait;
        }
    }
}
