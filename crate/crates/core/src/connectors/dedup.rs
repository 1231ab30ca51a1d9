use std::collections::{HashMap, HashSet};

use url::Url;

use super::item::RetrievedItem;
use crate::par::{self, ExecMode};

/// Default Jaccard threshold over 3-token shingles.
pub const DEFAULT_SHINGLE_THRESHOLD: f64 = 0.9;
const SHINGLE_SIZE: usize = 3;

/// Canonical form of a URL for duplicate detection: lower-cased scheme and
/// host, default port, fragment and trailing slash removed, tracking
/// parameters (`utm_*`, `gclid`, `fbclid`) dropped and the remaining query
/// parameters sorted. Unparseable input is only trimmed and lower-cased.
pub fn normalize_url(raw: &str) -> String {
    let Ok(url) = Url::parse(raw.trim()) else {
        return raw.trim().to_lowercase();
    };
    let mut out = format!("{}://", url.scheme());
    if let Some(host) = url.host_str() {
        out.push_str(&host.to_lowercase());
    }
    if let Some(port) = url.port() {
        out.push_str(&format!(":{port}"));
    }
    out.push_str(url.path().trim_end_matches('/'));

    let mut params: Vec<(String, String)> = url
        .query_pairs()
        .filter(|(k, _)| !is_tracking_param(k))
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    params.sort();
    if !params.is_empty() {
        let query = url::form_urlencoded::Serializer::new(String::new())
            .extend_pairs(params)
            .finish();
        out.push('?');
        out.push_str(&query);
    }
    out
}

fn is_tracking_param(key: &str) -> bool {
    let k = key.to_ascii_lowercase();
    k.starts_with("utm_") || k == "gclid" || k == "fbclid"
}

/// 3-token shingles of the lower-cased, whitespace-normalized text. Texts
/// shorter than three tokens yield a single shingle of all their tokens.
pub fn shingles(text: &str) -> HashSet<String> {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.is_empty() {
        return HashSet::new();
    }
    if tokens.len() < SHINGLE_SIZE {
        return HashSet::from([tokens.join(" ")]);
    }
    tokens.windows(SHINGLE_SIZE).map(|w| w.join(" ")).collect()
}

pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Anything with a URL, title and snippet can be de-duplicated.
pub trait DedupKey {
    fn url(&self) -> &str;
    fn title(&self) -> &str;
    fn snippet(&self) -> &str;
}

impl<T: DedupKey + ?Sized> DedupKey for &T {
    fn url(&self) -> &str {
        (**self).url()
    }
    fn title(&self) -> &str {
        (**self).title()
    }
    fn snippet(&self) -> &str {
        (**self).snippet()
    }
}

impl DedupKey for RetrievedItem {
    fn url(&self) -> &str {
        &self.url
    }
    fn title(&self) -> &str {
        &self.title
    }
    fn snippet(&self) -> &str {
        &self.snippet
    }
}

/// Indices of the items that survive near-duplicate elimination, ascending.
///
/// An item is dropped when its normalized URL equals that of an earlier
/// survivor, or when the Jaccard similarity of its title+snippet shingles
/// with an earlier survivor's is at least `threshold`.
pub fn survivor_indices<T: DedupKey + Sync>(items: &[T], threshold: f64, mode: ExecMode) -> Vec<usize> {
    let keys: Vec<(String, HashSet<String>)> = par::map(mode, items, |it| {
        (
            normalize_url(it.url()),
            shingles(&format!("{} {}", it.title(), it.snippet())),
        )
    });
    let mut by_url: HashMap<&str, usize> = HashMap::new();
    let mut survivors: Vec<usize> = Vec::new();
    for (i, (url, sh)) in keys.iter().enumerate() {
        if by_url.contains_key(url.as_str()) {
            continue;
        }
        if survivors.iter().any(|&s| jaccard(&keys[s].1, sh) >= threshold) {
            continue;
        }
        by_url.insert(url, i);
        survivors.push(i);
    }
    survivors
}

/// Removes near-duplicates, keeping the earliest item of each class and the
/// input order of survivors.
pub fn deduplicate(items: &[RetrievedItem]) -> Vec<RetrievedItem> {
    deduplicate_with(items, DEFAULT_SHINGLE_THRESHOLD, ExecMode::default())
}

pub fn deduplicate_with(items: &[RetrievedItem], threshold: f64, mode: ExecMode) -> Vec<RetrievedItem> {
    survivor_indices(items, threshold, mode)
        .into_iter()
        .map(|i| items[i].clone())
        .collect()
}
