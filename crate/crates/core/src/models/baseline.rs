use crate::connectors::RetrievedItem;
use crate::embedding::canonical_fields;
use crate::llm::{LlmClient, LlmRequest};
use crate::planner::SearchIntent;
use crate::source::Label;

pub const BASELINE_PROMPT_VERSION: &str = "relevance-baseline/v1";

const SYSTEM: &str = "You screen search results for a literature review. \
Answer with exactly one word: yes if the item is relevant to the research intent, no otherwise.";

/// Longest excerpt of any one field placed in the prompt.
const FIELD_CHARS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BaselineError {
    #[error("baseline llm call failed: {0}")]
    Llm(String),
    #[error("baseline answer '{0}' is neither yes nor no")]
    Parse(String),
}

/// Asks the LLM for a one-token yes/no relevance judgement at temperature 0.
pub fn llm_relevance_baseline(
    llm: &dyn LlmClient,
    model: &str,
    intent: &SearchIntent,
    item: &RetrievedItem,
) -> Result<Label, BaselineError> {
    let mut user = format!(
        "[{BASELINE_PROMPT_VERSION}]\nResearch intent: {}\n\nItem ({}):\n",
        intent.prompt, item.source
    );
    for &field in canonical_fields(item.source) {
        if let Some(text) = item.field_text(field) {
            let excerpt: String = text.chars().take(FIELD_CHARS).collect();
            user.push_str(&format!("{field}: {excerpt}\n"));
        }
    }
    user.push_str("\nIs this item relevant to the research intent? Answer yes or no.");
    let request = LlmRequest {
        model: model.to_string(),
        temperature: 0.0,
        system: SYSTEM.to_string(),
        user,
        max_tokens: Some(1),
    };
    let answer = llm.complete(&request).map_err(|e| BaselineError::Llm(e.0))?;
    parse_answer(&answer)
}

fn parse_answer(answer: &str) -> Result<Label, BaselineError> {
    let token = answer
        .split_whitespace()
        .next()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    match token.as_str() {
        "yes" | "relevant" => Ok(Label::Relevant),
        "no" | "irrelevant" => Ok(Label::Irrelevant),
        _ => Err(BaselineError::Parse(answer.trim().to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectors::FetchProvenance;
    use crate::llm::{ScriptedLlm, UnavailableLlm};
    use crate::source::Source;
    use chrono::TimeZone;

    fn item() -> RetrievedItem {
        let at = chrono::Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
        RetrievedItem {
            item_id: "stackoverflow:1".into(),
            source: Source::Stackoverflow,
            url: "https://stackoverflow.com/q/1".into(),
            title: "Flaky tests in CI".into(),
            snippet: "Tests fail randomly".into(),
            extras: Default::default(),
            provenance: FetchProvenance {
                query_id: "q".into(),
                request_id: "q/p1".into(),
                page_number: 1,
                fetched_at: at,
                endpoint: "x".into(),
                attempt_count: 1,
            },
        }
    }

    fn intent() -> SearchIntent {
        SearchIntent::new(
            "test flakiness",
            chrono::Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        )
    }

    #[test]
    fn maps_the_closed_vocabulary() {
        let yes = ScriptedLlm::always("Yes");
        assert_eq!(
            llm_relevance_baseline(&yes, "m", &intent(), &item()),
            Ok(Label::Relevant)
        );
        let req = &yes.requests()[0];
        assert_eq!((req.temperature, req.max_tokens), (0.0, Some(1)));
        assert!(req.user.contains(BASELINE_PROMPT_VERSION) && req.user.contains("Flaky tests in CI"));

        assert_eq!(
            llm_relevance_baseline(&ScriptedLlm::always("no."), "m", &intent(), &item()),
            Ok(Label::Irrelevant)
        );
        assert!(matches!(
            llm_relevance_baseline(&ScriptedLlm::always("maybe"), "m", &intent(), &item()),
            Err(BaselineError::Parse(_))
        ));
    }

    #[test]
    fn transport_failure_is_not_masked() {
        assert!(matches!(
            llm_relevance_baseline(&UnavailableLlm, "m", &intent(), &item()),
            Err(BaselineError::Llm(_))
        ));
    }
}
