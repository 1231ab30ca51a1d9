use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::http::{Clock, HttpRequest, HttpResponse, Transport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "duration_ms")]
    pub base_delay: Duration,
    #[serde(with = "duration_ms")]
    pub max_delay: Duration,
    pub jitter_fraction: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            jitter_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("max_attempts must be at least 1")]
    NoAttempts,
    #[error("base_delay exceeds max_delay")]
    DelayOrder,
    #[error("jitter_fraction {0} outside [0, 1]")]
    Jitter(f64),
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.max_attempts == 0 {
            return Err(PolicyError::NoAttempts);
        }
        if self.base_delay > self.max_delay {
            return Err(PolicyError::DelayOrder);
        }
        if !(0.0..=1.0).contains(&self.jitter_fraction) {
            return Err(PolicyError::Jitter(self.jitter_fraction));
        }
        Ok(())
    }

    /// Un-jittered delay before the `retry`-th retry (1-based):
    /// `min(max_delay, base_delay * 2^(retry-1))`.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 2f64.powi(retry.saturating_sub(1).min(62) as i32);
        let raw = self.base_delay.as_secs_f64() * factor;
        Duration::from_secs_f64(raw.min(self.max_delay.as_secs_f64()))
    }

    /// Applies a uniform factor in `[1 - jitter, 1 + jitter]`.
    pub fn jittered<R: Rng + ?Sized>(&self, delay: Duration, rng: &mut R) -> Duration {
        if self.jitter_fraction == 0.0 {
            return delay;
        }
        let j = self.jitter_fraction;
        let factor = rng.random_range((1.0 - j)..=(1.0 + j));
        Duration::from_secs_f64(delay.as_secs_f64() * factor)
    }
}

/// How a single response should be treated by the retry loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    Success,
    Retry,
    RateLimited,
    Credential,
    Fatal,
}

/// True when a response carries one of the rate-limit headers GitHub,
/// Stack Exchange and most JSON APIs use.
pub fn has_rate_limit_headers(resp: &HttpResponse) -> bool {
    resp.header("retry-after").is_some()
        || resp.header("x-ratelimit-remaining") == Some("0")
        || resp.header("x-ratelimit-reset").is_some() && resp.header("x-ratelimit-remaining").is_some()
}

pub fn classify(resp: &HttpResponse) -> Disposition {
    match resp.status {
        200..=299 => Disposition::Success,
        429 => Disposition::RateLimited,
        403 if has_rate_limit_headers(resp) => Disposition::RateLimited,
        401 | 403 => Disposition::Credential,
        500..=599 => Disposition::Retry,
        _ => Disposition::Fatal,
    }
}

/// Delay the server asked for, from `retry-after` (seconds) or GitHub's
/// `x-ratelimit-reset` (epoch seconds) relative to `now`.
pub fn retry_after_hint(resp: &HttpResponse, now: chrono::DateTime<chrono::Utc>) -> Option<Duration> {
    if let Some(secs) = resp.header("retry-after").and_then(|v| v.trim().parse::<f64>().ok()) {
        if secs >= 0.0 {
            return Some(Duration::from_secs_f64(secs));
        }
    }
    if resp.header("x-ratelimit-remaining") == Some("0") {
        let reset = resp.header("x-ratelimit-reset")?.trim().parse::<i64>().ok()?;
        let wait = reset - now.timestamp();
        return Some(Duration::from_secs(wait.max(0) as u64));
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fetched {
    pub response: HttpResponse,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FetchError {
    #[error("credentials rejected (HTTP {status})")]
    Credential { status: u16, attempts: u32 },
    #[error("rate limit still exceeded after {attempts} attempts (HTTP {status}, retry-after {retry_after:?})")]
    RateLimited {
        status: u16,
        attempts: u32,
        retry_after: Option<Duration>,
    },
    #[error("HTTP {status} after {attempts} attempts")]
    Status { status: u16, attempts: u32, body: String },
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("invalid retry policy: {0}")]
    Policy(#[from] PolicyError),
}

impl FetchError {
    pub fn attempts(&self) -> u32 {
        match self {
            FetchError::Credential { attempts, .. }
            | FetchError::RateLimited { attempts, .. }
            | FetchError::Status { attempts, .. }
            | FetchError::Transport { attempts, .. } => *attempts,
            FetchError::Policy(_) => 0,
        }
    }
}

/// Sends `request`, retrying transport failures, 5xx, 429 and rate-limited
/// 403 responses up to `policy.max_attempts` total attempts.
///
/// Before the k-th retry the loop sleeps `policy.backoff(k)` scaled by a
/// uniform jitter factor, unless the response carried a retry-after hint, in
/// which case the hint is used verbatim.
pub fn fetch_with_retry<R: Rng + ?Sized>(
    transport: &dyn Transport,
    request: &HttpRequest,
    policy: &RetryPolicy,
    clock: &dyn Clock,
    rng: &mut R,
) -> Result<Fetched, FetchError> {
    policy.validate()?;
    let mut attempt = 0;
    loop {
        attempt += 1;
        let last = attempt >= policy.max_attempts;
        let hint = match transport.send(request) {
            Err(e) => {
                if last {
                    return Err(FetchError::Transport {
                        attempts: attempt,
                        message: e.0,
                    });
                }
                None
            }
            Ok(resp) => match classify(&resp) {
                Disposition::Success => {
                    return Ok(Fetched {
                        response: resp,
                        attempts: attempt,
                    })
                }
                Disposition::Credential => {
                    return Err(FetchError::Credential {
                        status: resp.status,
                        attempts: attempt,
                    })
                }
                Disposition::Fatal => {
                    return Err(FetchError::Status {
                        status: resp.status,
                        attempts: attempt,
                        body: truncate(&resp.body, 512),
                    })
                }
                Disposition::Retry if last => {
                    return Err(FetchError::Status {
                        status: resp.status,
                        attempts: attempt,
                        body: truncate(&resp.body, 512),
                    })
                }
                Disposition::RateLimited if last => {
                    return Err(FetchError::RateLimited {
                        status: resp.status,
                        attempts: attempt,
                        retry_after: retry_after_hint(&resp, clock.now()),
                    })
                }
                Disposition::Retry | Disposition::RateLimited => retry_after_hint(&resp, clock.now()),
            },
        };
        let delay = match hint {
            Some(h) => h,
            None => policy.jittered(policy.backoff(attempt), rng),
        };
        tracing::debug!(url = %request.url, attempt, ?delay, "retrying request");
        clock.sleep(delay);
    }
}

fn truncate(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
