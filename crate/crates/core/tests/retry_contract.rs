use std::time::Duration;

use chrono::DateTime;
use greylit_core::connectors::http::{FakeClock, HttpRequest, HttpResponse, ReplayTransport, Transcript};
use greylit_core::connectors::retry::{fetch_with_retry, FetchError, RetryPolicy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const URL: &str = "https://api.test/search";
const EPOCH: i64 = 1_700_000_000;

fn clock() -> FakeClock {
    FakeClock::new(DateTime::from_timestamp(EPOCH, 0).unwrap())
}

fn replay(responses: &[HttpResponse]) -> ReplayTransport {
    let mut t = Transcript::default();
    for r in responses {
        t.push(HttpRequest::get(URL), r.clone());
    }
    ReplayTransport::new(t)
}

fn policy(max_attempts: u32, base_ms: u64, max_ms: u64, jitter: f64) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        base_delay: Duration::from_millis(base_ms),
        max_delay: Duration::from_millis(max_ms),
        jitter_fraction: jitter,
    }
}

fn run(t: &ReplayTransport, p: &RetryPolicy, c: &FakeClock, seed: u64) -> Result<u32, FetchError> {
    fetch_with_retry(t, &HttpRequest::get(URL), p, c, &mut ChaCha8Rng::seed_from_u64(seed)).map(|f| f.attempts)
}

#[test]
fn delays_double_until_the_cap() {
    let t = replay(&[HttpResponse::new(500, "")]);
    let c = clock();
    let err = run(&t, &policy(6, 250, 2_000, 0.0), &c, 0).unwrap_err();
    assert!(matches!(
        err,
        FetchError::Status {
            status: 500,
            attempts: 6,
            ..
        }
    ));
    let ms: Vec<u128> = c.sleeps().iter().map(Duration::as_millis).collect();
    assert_eq!(ms, vec![250, 500, 1_000, 2_000, 2_000]);
    assert_eq!(t.send_count(), 6);
}

#[test]
fn retry_after_seconds_overrides_backoff() {
    let t = replay(&[
        HttpResponse::new(429, "").with_header("Retry-After", "7"),
        HttpResponse::new(503, ""),
        HttpResponse::new(200, "{}"),
    ]);
    let c = clock();
    assert_eq!(run(&t, &policy(5, 100, 10_000, 0.5), &c, 3).unwrap(), 3);
    let sleeps = c.sleeps();
    assert_eq!(sleeps[0], Duration::from_secs(7));
    // The second retry has no hint, so it is back-off(2) = 200 ms +/- 50%.
    assert!(sleeps[1] >= Duration::from_millis(100) && sleeps[1] <= Duration::from_millis(300));
}

#[test]
fn github_reset_header_is_relative_to_the_clock() {
    let t = replay(&[
        HttpResponse::new(403, "")
            .with_header("x-ratelimit-remaining", "0")
            .with_header("x-ratelimit-reset", (EPOCH + 42).to_string()),
        HttpResponse::new(200, "{}"),
    ]);
    let c = clock();
    assert_eq!(run(&t, &policy(3, 100, 1_000, 0.0), &c, 0).unwrap(), 2);
    assert_eq!(c.sleeps(), vec![Duration::from_secs(42)]);
}

#[test]
fn exhausted_rate_limit_reports_the_hint() {
    let t = replay(&[HttpResponse::new(429, "").with_header("retry-after", "3")]);
    let c = clock();
    let err = run(&t, &policy(2, 100, 1_000, 0.0), &c, 0).unwrap_err();
    assert_eq!(
        err,
        FetchError::RateLimited {
            status: 429,
            attempts: 2,
            retry_after: Some(Duration::from_secs(3))
        }
    );
    assert_eq!(c.sleeps().len(), 1);
}

#[test]
fn transport_failures_are_retried() {
    let t = ReplayTransport::new(Transcript::default());
    let c = clock();
    let err = run(&t, &policy(3, 10, 100, 0.0), &c, 0).unwrap_err();
    assert!(matches!(err, FetchError::Transport { attempts: 3, .. }));
    assert_eq!(c.sleeps(), vec![Duration::from_millis(10), Duration::from_millis(20)]);
}

#[test]
fn credential_and_client_errors_are_not_retried() {
    for status in [401, 403, 400, 404, 422] {
        let t = replay(&[HttpResponse::new(status, "")]);
        let c = clock();
        let err = run(&t, &policy(5, 10, 100, 0.0), &c, 0).unwrap_err();
        assert_eq!(err.attempts(), 1, "status {status}");
        assert!(c.sleeps().is_empty());
    }
}

#[test]
fn invalid_policy_sends_nothing() {
    let t = replay(&[HttpResponse::new(200, "")]);
    let err = run(&t, &policy(0, 10, 100, 0.0), &clock(), 0).unwrap_err();
    assert!(matches!(err, FetchError::Policy(_)));
    assert_eq!(t.send_count(), 0);
}

proptest! {
    #[test]
    fn attempts_never_exceed_max_and_jitter_stays_in_bounds(
        max_attempts in 1u32..8,
        base_ms in 1u64..500,
        cap_factor in 1u64..64,
        jitter in 0.0f64..=1.0,
        failures in 0usize..10,
        seed in any::<u64>(),
    ) {
        let mut responses: Vec<HttpResponse> = (0..failures).map(|_| HttpResponse::new(502, "")).collect();
        responses.push(HttpResponse::new(200, "{}"));
        let t = replay(&responses);
        let c = clock();
        let p = policy(max_attempts, base_ms, base_ms * cap_factor, jitter);
        let out = run(&t, &p, &c, seed);

        prop_assert!(t.send_count() as u32 <= max_attempts);
        match out {
            Ok(n) => prop_assert_eq!(n as usize, failures + 1),
            Err(e) => {
                prop_assert!(failures as u32 >= max_attempts);
                prop_assert_eq!(e.attempts(), max_attempts);
            }
        }
        let sleeps = c.sleeps();
        prop_assert_eq!(sleeps.len(), t.send_count() - 1);
        for (k, s) in sleeps.iter().enumerate() {
            let nominal = p.backoff(k as u32 + 1).as_secs_f64();
            let s = s.as_secs_f64();
            prop_assert!(s >= nominal * (1.0 - jitter) - 1e-9 && s <= nominal * (1.0 + jitter) + 1e-9);
            prop_assert!(nominal <= p.max_delay.as_secs_f64() + 1e-12);
            prop_assert!((nominal - (p.base_delay.as_secs_f64() * 2f64.powi(k as i32)).min(p.max_delay.as_secs_f64())).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_gives_same_delays(seed in any::<u64>()) {
        let p = policy(4, 100, 5_000, 0.3);
        let delays = |s| {
            let t = replay(&[HttpResponse::new(503, "")]);
            let c = clock();
            let _ = run(&t, &p, &c, s);
            c.sleeps()
        };
        prop_assert_eq!(delays(seed), delays(seed));
    }
}
