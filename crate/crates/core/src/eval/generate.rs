//! Negative-constraint query generation through the generation templates.

use thiserror::Error;

use super::data::Formulation;
use crate::translate::prompts::PromptTemplate;
use crate::translate::{complete_with_retry, ChatModel, LlmError, RetryPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("{formulation} takes {expected} negative documents, got {got}")]
    WrongNegativeCount {
        formulation: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model returned no query")]
    EmptyGeneration,
    #[error(transparent)]
    Endpoint(#[from] LlmError),
}

pub fn template_for(formulation: Formulation) -> PromptTemplate {
    match formulation {
        Formulation::AMinusA => PromptTemplate::GenerateAMinusA,
        Formulation::AMinusAUnionB => PromptTemplate::GenerateAMinusAUnionB,
        Formulation::AMinusAUnionBMinusB => PromptTemplate::GenerateAMinusAUnionBMinusB,
    }
}

/// Fills the generation template. The trailing `%QUERY%` slot is left empty
/// for the model to complete.
pub fn generation_prompt(
    positive: &str,
    negatives: &[&str],
    formulation: Formulation,
) -> Result<String, GenerateError> {
    let expected = formulation.negative_count();
    if negatives.len() != expected {
        return Err(GenerateError::WrongNegativeCount {
            formulation: formulation.as_str(),
            expected,
            got: negatives.len(),
        });
    }
    let mut values: Vec<(&str, &str)> = vec![("%POSITIVE DOCUMENT%", positive)];
    if expected == 1 {
        values.push(("%NEGATIVE DOCUMENT%", negatives[0]));
    } else {
        values.push(("%NEGATIVE DOCUMENT 1%", negatives[0]));
        values.push(("%NEGATIVE DOCUMENT 2%", negatives[1]));
        values.push(("%NEGATIVE DOCUMENT 3%", negatives[2]));
    }
    values.push(("%QUERY%", ""));
    Ok(template_for(formulation)
        .instantiate(&values)
        .expect("generation placeholders are fixed"))
}

/// First non-empty line of the reply, without a leading `Query:` label.
pub fn parse_generated_query(reply: &str) -> Option<String> {
    reply
        .lines()
        .map(|l| {
            let l = l.trim();
            l.strip_prefix("Query:").map(str::trim).unwrap_or(l)
        })
        .find(|l| !l.is_empty())
        .map(str::to_string)
}

pub fn generate_negconstraint(
    positive: &str,
    negatives: &[&str],
    formulation: Formulation,
    model: &dyn ChatModel,
    temperature: f64,
    retry: RetryPolicy,
) -> Result<String, GenerateError> {
    let prompt = generation_prompt(positive, negatives, formulation)?;
    let reply = complete_with_retry(model, &prompt, temperature, retry)?;
    parse_generated_query(&reply).ok_or(GenerateError::EmptyGeneration)
}
