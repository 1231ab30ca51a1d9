use std::fmt;

use super::{qualifier, FieldTarget, QualifierValue, StructuredQuery};
use crate::source::Source;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyTerms,
    BlankTerm { index: usize },
    QuoteInTerm { index: usize },
    FieldTargetNotAllowed { target: FieldTarget, source: Source },
    UnknownQualifier { key: String, source: Source },
    WrongValueType { key: String, expected: &'static str },
    InvertedDateRange,
    NegativeMinScore(i64),
    BadFiletype(String),
    BadKind { value: String, source: Source },
    BlankValue { key: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTerms => write!(f, "query has no non-empty search phrase"),
            Violation::BlankTerm { index } => write!(f, "term {index} is blank"),
            Violation::QuoteInTerm { index } => write!(f, "term {index} contains a double quote"),
            Violation::FieldTargetNotAllowed { target, source } => {
                write!(f, "field target '{}' not allowed for {source}", target.as_str())
            }
            Violation::UnknownQualifier { key, source } => write!(f, "qualifier '{key}' not allowed for {source}"),
            Violation::WrongValueType { key, expected } => write!(f, "qualifier '{key}' must be {expected}"),
            Violation::InvertedDateRange => write!(f, "created range start is after its end"),
            Violation::NegativeMinScore(v) => write!(f, "min_score {v} is negative"),
            Violation::BadFiletype(v) => write!(f, "filetype '{v}' is not alphanumeric"),
            Violation::BadKind { value, source } => write!(f, "kind '{value}' is not valid for {source}"),
            Violation::BlankValue { key } => write!(f, "qualifier '{key}' has a blank value"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        f.write_str(&self.messages().join("; "))
    }
}

/// Reports every problem with `q`; never fails.
pub fn validate_query(q: &StructuredQuery) -> ValidationReport {
    let mut v = Vec::new();

    if !q.terms.iter().any(|t| !t.trim().is_empty()) {
        v.push(Violation::EmptyTerms);
    } else {
        for (index, t) in q.terms.iter().enumerate() {
            if t.trim().is_empty() {
                v.push(Violation::BlankTerm { index });
            } else if q.source == Source::Websearch && t.contains('"') {
                v.push(Violation::QuoteInTerm { index });
            }
        }
    }

    for &target in &q.field_targets {
        if !FieldTarget::allowed_for(q.source).contains(&target) {
            v.push(Violation::FieldTargetNotAllowed {
                target,
                source: q.source,
            });
        }
    }

    let allowed = qualifier::allowed_for(q.source);
    for (key, value) in &q.qualifiers {
        if !allowed.contains(&key.as_str()) {
            v.push(Violation::UnknownQualifier {
                key: key.clone(),
                source: q.source,
            });
            continue;
        }
        check_value(q.source, key, value, &mut v);
    }

    ValidationReport { violations: v }
}

fn check_value(source: Source, key: &str, value: &QualifierValue, v: &mut Vec<Violation>) {
    let wrong = |expected| Violation::WrongValueType {
        key: key.to_string(),
        expected,
    };
    match key {
        qualifier::LANGUAGE | qualifier::SITE => match value {
            QualifierValue::Text(s) if s.trim().is_empty() => v.push(Violation::BlankValue { key: key.into() }),
            QualifierValue::Text(s) if key == qualifier::SITE && s.contains(char::is_whitespace) => {
                v.push(wrong("a host name without whitespace"))
            }
            QualifierValue::Text(_) => {}
            _ => v.push(wrong("a string")),
        },
        qualifier::KIND => match value {
            QualifierValue::Text(s) => {
                let expected = if source == Source::GithubIssues {
                    "issue"
                } else {
                    "repo"
                };
                if s != expected {
                    v.push(Violation::BadKind {
                        value: s.clone(),
                        source,
                    });
                }
            }
            _ => v.push(wrong("a string")),
        },
        qualifier::CREATED => match value {
            QualifierValue::Range(r) if !r.is_ordered() => v.push(Violation::InvertedDateRange),
            QualifierValue::Range(_) => {}
            _ => v.push(wrong("a {start, end} date range")),
        },
        qualifier::TAGS => match value {
            QualifierValue::List(tags) => {
                if tags
                    .iter()
                    .any(|t| t.trim().is_empty() || t.contains(char::is_whitespace))
                {
                    v.push(wrong("a list of non-blank tags without whitespace"));
                }
            }
            _ => v.push(wrong("a list of tags")),
        },
        qualifier::ACCEPTED_ANSWER => {
            if !matches!(value, QualifierValue::Flag(_)) {
                v.push(wrong("a boolean"));
            }
        }
        qualifier::MIN_SCORE => match value {
            QualifierValue::Int(n) if *n < 0 => v.push(Violation::NegativeMinScore(*n)),
            QualifierValue::Int(_) => {}
            _ => v.push(wrong("an integer")),
        },
        qualifier::FILETYPE => match value {
            QualifierValue::Text(s) if s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric()) => {
                v.push(Violation::BadFiletype(s.clone()))
            }
            QualifierValue::Text(_) => {}
            _ => v.push(wrong("a string")),
        },
        _ => unreachable!("vocabulary checked by caller"),
    }
}
