use super::{qualifier, validate_query, FieldTarget, QualifierValue, StructuredQuery, ValidationReport};
use crate::source::Source;

/// Renders `q` in its platform's native search syntax.
///
/// - GitHub: terms, `in:` selectors, `is:issue`, `language:X`,
///   `created:START..END`
/// - Stack Overflow: terms (prefixed `title:`/`body:` when exactly one of
///   the two is targeted), `[tag]` tokens, `isaccepted:yes`, `score:N..`
/// - web search: quoted phrases, `site:HOST`, `filetype:EXT`
///
/// Term order is kept as given. Invalid queries are refused with their
/// validation report.
pub fn render_query(q: &StructuredQuery) -> Result<String, ValidationReport> {
    let report = validate_query(q);
    if !report.is_ok() {
        return Err(report);
    }
    let mut parts: Vec<String> = Vec::new();
    match q.source {
        Source::GithubRepos | Source::GithubIssues => {
            parts.extend(q.terms.iter().map(|t| t.trim().to_string()));
            parts.extend(q.field_targets.iter().map(|t| format!("in:{}", t.as_str())));
            if q.qualifier_text(qualifier::KIND) == Some("issue") {
                parts.push("is:issue".into());
            }
            if let Some(lang) = q.qualifier_text(qualifier::LANGUAGE) {
                parts.push(format!("language:{}", quote_if_spaced(lang.trim())));
            }
            if let Some(QualifierValue::Range(r)) = q.qualifiers.get(qualifier::CREATED) {
                parts.push(format!("created:{}..{}", r.start, r.end));
            }
        }
        Source::Stackoverflow => {
            let only: Vec<_> = q.field_targets.iter().collect();
            let prefix = match only.as_slice() {
                [FieldTarget::Title] => Some("title"),
                [FieldTarget::Body] => Some("body"),
                _ => None,
            };
            for t in &q.terms {
                let t = t.trim();
                parts.push(match prefix {
                    Some(p) => format!("{p}:\"{t}\""),
                    None => t.to_string(),
                });
            }
            if let Some(QualifierValue::List(tags)) = q.qualifiers.get(qualifier::TAGS) {
                parts.extend(tags.iter().map(|t| format!("[{t}]")));
            }
            if let Some(QualifierValue::Flag(true)) = q.qualifiers.get(qualifier::ACCEPTED_ANSWER) {
                parts.push("isaccepted:yes".into());
            }
            if let Some(QualifierValue::Int(n)) = q.qualifiers.get(qualifier::MIN_SCORE) {
                parts.push(format!("score:{n}.."));
            }
        }
        Source::Websearch => {
            parts.extend(q.terms.iter().map(|t| format!("\"{}\"", t.trim())));
            if let Some(site) = q.qualifier_text(qualifier::SITE) {
                parts.push(format!("site:{site}"));
            }
            if let Some(ext) = q.qualifier_text(qualifier::FILETYPE) {
                parts.push(format!("filetype:{ext}"));
            }
        }
    }
    Ok(parts.join(" "))
}

fn quote_if_spaced(s: &str) -> String {
    if s.contains(char::is_whitespace) {
        format!("\"{s}\"")
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::DateRange;

    #[test]
    fn github_issue_query_renders_all_qualifiers() {
        let d = |s: &str| s.parse().unwrap();
        let q = StructuredQuery::new(Source::GithubIssues, ["saga pattern", "compensation"])
            .qualifier(qualifier::KIND, QualifierValue::Text("issue".into()))
            .qualifier(qualifier::LANGUAGE, QualifierValue::Text("java".into()))
            .qualifier(
                qualifier::CREATED,
                QualifierValue::Range(DateRange::new(d("2020-01-01"), d("2024-12-31"))),
            );
        assert_eq!(
            render_query(&q).unwrap(),
            "saga pattern compensation is:issue language:java created:2020-01-01..2024-12-31"
        );
    }

    #[test]
    fn stackoverflow_query_renders_tags_and_score() {
        let q = StructuredQuery::new(Source::Stackoverflow, ["memory leak"])
            .qualifier(qualifier::TAGS, QualifierValue::List(vec!["c++".into()]))
            .qualifier(qualifier::MIN_SCORE, QualifierValue::Int(5));
        assert_eq!(render_query(&q).unwrap(), "memory leak [c++] score:5..");
    }

    #[test]
    fn websearch_query_quotes_phrases() {
        let q = StructuredQuery::new(Source::Websearch, ["microservice tracing"]).qualifier(
            qualifier::SITE,
            QualifierValue::Text("engineering.atspotify.com".into()),
        );
        assert_eq!(
            render_query(&q).unwrap(),
            "\"microservice tracing\" site:engineering.atspotify.com"
        );
    }

    #[test]
    fn invalid_query_is_refused() {
        let q = StructuredQuery::new(Source::Websearch, [""]);
        assert!(render_query(&q).is_err());
    }
}
