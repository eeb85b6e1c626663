use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use super::{LlmBackend, Message};
use crate::error::LlmError;

/// Token bucket refilled continuously at `rpm` requests per minute, with a
/// burst of one minute's worth.
pub struct RateLimiter {
    state: Mutex<(f64, Instant)>,
    rpm: f64,
}

impl RateLimiter {
    pub fn new(rpm: f64) -> Self {
        let rpm = rpm.max(1e-3);
        RateLimiter { state: Mutex::new((rpm, Instant::now())), rpm }
    }

    /// One limiter per provider name for the whole process.
    pub fn shared(provider: &str, rpm: f64) -> Arc<RateLimiter> {
        static LIMITERS: OnceLock<Mutex<HashMap<String, Arc<RateLimiter>>>> = OnceLock::new();
        let mut map = LIMITERS.get_or_init(Default::default).lock().unwrap();
        map.entry(provider.to_string()).or_insert_with(|| Arc::new(RateLimiter::new(rpm))).clone()
    }

    /// Time to wait before a token is available; takes the token if zero.
    fn try_take(&self) -> Duration {
        let mut st = self.state.lock().unwrap();
        let now = Instant::now();
        let refill = now.duration_since(st.1).as_secs_f64() * self.rpm / 60.0;
        st.0 = (st.0 + refill).min(self.rpm);
        st.1 = now;
        if st.0 >= 1.0 {
            st.0 -= 1.0;
            Duration::ZERO
        } else {
            Duration::from_secs_f64((1.0 - st.0) * 60.0 / self.rpm)
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = self.try_take();
            if wait.is_zero() {
                return;
            }
            std::thread::sleep(wait);
        }
    }
}

pub struct RateLimited<B> {
    inner: B,
    limiter: Arc<RateLimiter>,
}

impl<B: LlmBackend> RateLimited<B> {
    pub fn new(inner: B, limiter: Arc<RateLimiter>) -> Self {
        RateLimited { inner, limiter }
    }
}

impl<B: LlmBackend> LlmBackend for RateLimited<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, messages: &[Message]) -> Result<String, LlmError> {
        self.limiter.acquire();
        self.inner.complete(messages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_then_wait() {
        let l = RateLimiter::new(2.0);
        assert!(l.try_take().is_zero());
        assert!(l.try_take().is_zero());
        assert!(l.try_take() > Duration::from_secs(20));
    }
}
