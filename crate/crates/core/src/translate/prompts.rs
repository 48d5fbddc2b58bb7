//! Prompt templates, stored verbatim under `prompts/`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("no value supplied for placeholder {0}")]
    MissingValue(&'static str),
    #[error("{0} is not a placeholder of this template")]
    UnknownPlaceholder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptTemplate {
    QueryToFol,
    DocumentToFol,
    GenerateAMinusA,
    GenerateAMinusAUnionB,
    GenerateAMinusAUnionBMinusB,
}

impl PromptTemplate {
    pub const ALL: [PromptTemplate; 5] = [
        PromptTemplate::QueryToFol,
        PromptTemplate::DocumentToFol,
        PromptTemplate::GenerateAMinusA,
        PromptTemplate::GenerateAMinusAUnionB,
        PromptTemplate::GenerateAMinusAUnionBMinusB,
    ];

    pub fn text(self) -> &'static str {
        match self {
            PromptTemplate::QueryToFol => include_str!("../../prompts/query_to_fol.txt"),
            PromptTemplate::DocumentToFol => include_str!("../../prompts/document_to_fol.txt"),
            PromptTemplate::GenerateAMinusA => include_str!("../../prompts/generate_a_minus_a.txt"),
            PromptTemplate::GenerateAMinusAUnionB => {
                include_str!("../../prompts/generate_a_minus_a_union_b.txt")
            }
            PromptTemplate::GenerateAMinusAUnionBMinusB => {
                include_str!("../../prompts/generate_a_minus_a_union_b_minus_b.txt")
            }
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            PromptTemplate::QueryToFol => "query_to_fol.txt",
            PromptTemplate::DocumentToFol => "document_to_fol.txt",
            PromptTemplate::GenerateAMinusA => "generate_a_minus_a.txt",
            PromptTemplate::GenerateAMinusAUnionB => "generate_a_minus_a_union_b.txt",
            PromptTemplate::GenerateAMinusAUnionBMinusB => "generate_a_minus_a_union_b_minus_b.txt",
        }
    }

    /// Placeholders in the order they appear in the template.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            PromptTemplate::QueryToFol => &["%QUERY%"],
            PromptTemplate::DocumentToFol => &["%DOCUMENT%"],
            PromptTemplate::GenerateAMinusA | PromptTemplate::GenerateAMinusAUnionB => {
                &["%POSITIVE DOCUMENT%", "%NEGATIVE DOCUMENT%", "%QUERY%"]
            }
            PromptTemplate::GenerateAMinusAUnionBMinusB => &[
                "%POSITIVE DOCUMENT%",
                "%NEGATIVE DOCUMENT 1%",
                "%NEGATIVE DOCUMENT 2%",
                "%NEGATIVE DOCUMENT 3%",
                "%QUERY%",
            ],
        }
    }

    /// Substitutes every placeholder in one left-to-right pass, so values
    /// that happen to contain placeholder text are left alone.
    pub fn instantiate(self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let placeholders = self.placeholders();
        if let Some((bad, _)) = values.iter().find(|(p, _)| !placeholders.contains(p)) {
            return Err(PromptError::UnknownPlaceholder(bad.to_string()));
        }
        let lookup = |p: &'static str| {
            values
                .iter()
                .find(|(k, _)| *k == p)
                .map(|(_, v)| *v)
                .ok_or(PromptError::MissingValue(p))
        };

        let template = self.text();
        let mut out = String::with_capacity(template.len() + 256);
        let mut rest = template;
        loop {
            let next = placeholders
                .iter()
                .filter_map(|p| rest.find(p).map(|at| (at, *p)))
                .min_by_key(|(at, _)| *at);
            match next {
                Some((at, p)) => {
                    out.push_str(&rest[..at]);
                    out.push_str(lookup(p)?);
                    rest = &rest[at + p.len()..];
                }
                None => {
                    out.push_str(rest);
                    return Ok(out);
                }
            }
        }
    }
}

pub fn query_prompt(query: &str) -> String {
    PromptTemplate::QueryToFol
        .instantiate(&[("%QUERY%", query)])
        .expect("template placeholders are fixed")
}

pub fn document_prompt(document: &str) -> String {
    PromptTemplate::DocumentToFol
        .instantiate(&[("%DOCUMENT%", document)])
        .expect("template placeholders are fixed")
}
