use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The result sources a run can harvest from.
///
/// The declaration order is the canonical order used wherever ordering
/// matters (query distribution, feature layout, result listing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    GithubRepos,
    GithubIssues,
    Stackoverflow,
    Websearch,
}

impl Source {
    pub const ALL: [Source; 4] = [
        Source::GithubRepos,
        Source::GithubIssues,
        Source::Stackoverflow,
        Source::Websearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::GithubRepos => "github_repos",
            Source::GithubIssues => "github_issues",
            Source::Stackoverflow => "stackoverflow",
            Source::Websearch => "websearch",
        }
    }

    pub fn is_github(self) -> bool {
        matches!(self, Source::GithubRepos | Source::GithubIssues)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown source '{0}' (expected one of github_repos, github_issues, stackoverflow, websearch)")]
pub struct UnknownSource(pub String);

impl FromStr for Source {
    type Err = UnknownSource;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Source::ALL
            .into_iter()
            .find(|src| src.as_str() == s.trim())
            .ok_or_else(|| UnknownSource(s.to_string()))
    }
}

/// Binary relevance of an item to its search intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Irrelevant,
    Relevant,
}

impl Label {
    pub fn is_relevant(self) -> bool {
        self == Label::Relevant
    }

    pub fn from_relevant(relevant: bool) -> Self {
        if relevant {
            Label::Relevant
        } else {
            Label::Irrelevant
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Relevant => "relevant",
            Label::Irrelevant => "irrelevant",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "relevant" => Ok(Label::Relevant),
            "irrelevant" => Ok(Label::Irrelevant),
            other => Err(format!("unknown label '{other}'")),
        }
    }
}

/// Collapses internal whitespace runs to a single space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Hex-encoded SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(text.as_bytes()))
}
