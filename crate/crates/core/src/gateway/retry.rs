use std::thread;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use rand::Rng;

use super::GatewayError;

/// Failure of a single backend attempt.
#[derive(Debug)]
pub enum BackendError {
    /// Network failure, timeout, HTTP 429 or 5xx. Retried.
    Transient(String),
    /// Any other 4xx. Not retried.
    Rejected { status: u16, message: String },
    /// Anything else that retrying cannot fix.
    Fatal(GatewayError),
}

/// Exponential backoff: `base · 2^attempt`, jittered by ±20%.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let nominal = self.base_delay.as_secs_f64() * 2f64.powi(attempt as i32);
        let jitter = rand::thread_rng().gen_range(0.8..=1.2);
        Duration::from_secs_f64(nominal * jitter)
    }

    /// Run `attempt` until it succeeds, fails permanently, or `max_retries`
    /// retries are spent (so at most `max_retries + 1` calls).
    pub fn run<T>(&self, mut attempt: impl FnMut() -> Result<T, BackendError>) -> Result<T, GatewayError> {
        let mut n = 0;
        loop {
            match attempt() {
                Ok(v) => return Ok(v),
                Err(BackendError::Transient(msg)) if n >= self.max_retries => {
                    return Err(GatewayError::NetworkExhausted {
                        attempts: n + 1,
                        last: msg,
                    })
                }
                Err(BackendError::Transient(msg)) => {
                    log::warn!("attempt {} failed: {msg}; retrying", n + 1);
                    thread::sleep(self.delay(n));
                    n += 1;
                }
                Err(BackendError::Rejected { status, message }) => {
                    return Err(GatewayError::Rejected { status, message })
                }
                Err(BackendError::Fatal(e)) => return Err(e),
            }
        }
    }
}

/// Counting semaphore bounding in-flight dispatches.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.permits.lock();
        while *free == 0 {
            self.freed.wait(&mut free);
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock() += 1;
        self.0.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn fast(max_retries: u32) -> RetryPolicy {
        RetryPolicy {
            max_retries,
            base_delay: Duration::from_millis(1),
        }
    }

    #[test]
    fn transient_errors_are_retried_until_success() {
        let calls = AtomicUsize::new(0);
        let out = fast(4).run(|| {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(BackendError::Transient("503".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(out.unwrap(), 7);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_are_bounded() {
        let calls = AtomicUsize::new(0);
        let out: Result<(), _> = fast(4).run(|| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Transient("down".into()))
        });
        assert!(matches!(out, Err(GatewayError::NetworkExhausted { attempts: 5, .. })));
        assert_eq!(calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let calls = AtomicUsize::new(0);
        let out: Result<(), _> = fast(4).run(|| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Rejected { status: 400, message: "bad".into() })
        });
        assert!(matches!(out, Err(GatewayError::Rejected { status: 400, .. })));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_doubles_with_jitter() {
        let p = RetryPolicy {
            max_retries: 4,
            base_delay: Duration::from_secs(1),
        };
        for attempt in 0..4 {
            let d = p.delay(attempt).as_secs_f64();
            let nominal = 2f64.powi(attempt as i32);
            assert!(d >= 0.8 * nominal - 1e-9 && d <= 1.2 * nominal + 1e-9, "{d}");
        }
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        let sem = Semaphore::new(3);
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..12 {
                s.spawn(|| {
                    let _p = sem.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }
}
