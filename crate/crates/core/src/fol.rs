//! Lexical handling of first-order-logic text emitted by the translator.
//!
//! Formulas are segmented into classified tokens. ASCII aliases for the
//! connectives and quantifiers are accepted and canonicalized to their
//! Unicode symbols; the original byte span of every token is kept so the
//! source can always be reconstructed.
//!
//! No well-formedness checking happens here: unbalanced brackets or
//! dangling connectives tokenize fine.

use serde::Serialize;
use thiserror::Error;

/// Canonical negation symbol.
pub const NEGATION: &str = "¬";

/// The binary connectives of the logical connective set (negation excluded).
pub const BINARY_CONNECTIVES: [&str; 5] = ["→", "↔", "∧", "∨", "⊕"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FolError {
    #[error("formula is empty")]
    EmptyFormula,
    #[error("unknown symbol {symbol:?} at byte {position}")]
    UnknownSymbol { position: usize, symbol: char },
    #[error("no formula found in LLM response")]
    NoFormulaFound,
    #[error("formula list is empty")]
    EmptyList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TokenClass {
    Negation,
    BinaryConnective,
    Quantifier,
    Predicate,
    Term,
    Punctuation,
}

impl TokenClass {
    pub const ALL: [TokenClass; 6] = [
        TokenClass::Negation,
        TokenClass::BinaryConnective,
        TokenClass::Quantifier,
        TokenClass::Predicate,
        TokenClass::Term,
        TokenClass::Punctuation,
    ];

    /// Whether tokens of this class belong to the logical connective set.
    pub fn is_connective(self) -> bool {
        matches!(self, TokenClass::Negation | TokenClass::BinaryConnective)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TokenClass::Negation => "negation",
            TokenClass::BinaryConnective => "binary_connective",
            TokenClass::Quantifier => "quantifier",
            TokenClass::Predicate => "predicate",
            TokenClass::Term => "term",
            TokenClass::Punctuation => "punctuation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FolToken {
    /// Canonical surface (aliases rewritten to Unicode symbols).
    pub surface: String,
    pub class: TokenClass,
    /// Byte offsets `[start, end)` into the source formula.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FolTokenSeq {
    pub tokens: Vec<FolToken>,
    pub source: String,
}

impl FolTokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn classes(&self) -> Vec<TokenClass> {
        self.tokens.iter().map(|t| t.class).collect()
    }

    /// Source text covered by token `idx`, before alias normalization.
    pub fn source_slice(&self, idx: usize) -> &str {
        let (s, e) = self.tokens[idx].span;
        &self.source[s..e]
    }

    /// Rebuilds the source from token spans and the whitespace between them.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.source.len());
        let mut cursor = 0;
        for tok in &self.tokens {
            out.push_str(&self.source[cursor..tok.span.0]);
            out.push_str(&self.source[tok.span.0..tok.span.1]);
            cursor = tok.span.1;
        }
        out.push_str(&self.source[cursor..]);
        out
    }
}

// Multi-character operator aliases, longest first so "<->" wins over "->".
const SYMBOL_ALIASES: &[(&str, &str, TokenClass)] = &[
    ("<->", "↔", TokenClass::BinaryConnective),
    ("->", "→", TokenClass::BinaryConnective),
    ("¬", "¬", TokenClass::Negation),
    ("~", "¬", TokenClass::Negation),
    ("∧", "∧", TokenClass::BinaryConnective),
    ("&", "∧", TokenClass::BinaryConnective),
    ("∨", "∨", TokenClass::BinaryConnective),
    ("|", "∨", TokenClass::BinaryConnective),
    ("→", "→", TokenClass::BinaryConnective),
    ("↔", "↔", TokenClass::BinaryConnective),
    ("⊕", "⊕", TokenClass::BinaryConnective),
    ("∀", "∀", TokenClass::Quantifier),
    ("∃", "∃", TokenClass::Quantifier),
];

const PUNCTUATION: &[char] = &['(', ')', '[', ']', ',', '.', ';', ':', '=', '≠'];

fn word_alias(word: &str) -> Option<(&'static str, TokenClass)> {
    match word {
        "not" => Some(("¬", TokenClass::Negation)),
        "xor" => Some(("⊕", TokenClass::BinaryConnective)),
        "forall" => Some(("∀", TokenClass::Quantifier)),
        "exists" => Some(("∃", TokenClass::Quantifier)),
        _ => None,
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// Splits a formula into classified tokens.
///
/// An identifier immediately followed by `(` is a predicate (or function
/// symbol); any other identifier is a term. The words `not`, `xor`,
/// `forall` and `exists` are read as operators unless used as a predicate.
pub fn tokenize_fol(formula: &str) -> Result<FolTokenSeq, FolError> {
    if formula.trim().is_empty() {
        return Err(FolError::EmptyFormula);
    }
    let mut tokens = Vec::new();
    let mut pos = 0;
    let bytes_len = formula.len();

    while pos < bytes_len {
        let rest = &formula[pos..];
        let c = rest.chars().next().expect("pos is on a char boundary");

        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }

        if let Some(&(alias, canon, class)) =
            SYMBOL_ALIASES.iter().find(|(alias, _, _)| rest.starts_with(alias))
        {
            tokens.push(FolToken {
                surface: canon.to_string(),
                class,
                span: (pos, pos + alias.len()),
            });
            pos += alias.len();
            continue;
        }

        if PUNCTUATION.contains(&c) {
            tokens.push(FolToken {
                surface: c.to_string(),
                class: TokenClass::Punctuation,
                span: (pos, pos + c.len_utf8()),
            });
            pos += c.len_utf8();
            continue;
        }

        if is_ident_char(c) {
            let len: usize = rest
                .chars()
                .take_while(|&ch| is_ident_char(ch))
                .map(char::len_utf8)
                .sum();
            let word = &rest[..len];
            let called = rest[len..].starts_with('(');
            let (surface, class) = match (called, word_alias(word)) {
                (false, Some((canon, class))) => (canon.to_string(), class),
                (true, _) => (word.to_string(), TokenClass::Predicate),
                (false, None) => (word.to_string(), TokenClass::Term),
            };
            tokens.push(FolToken {
                surface,
                class,
                span: (pos, pos + len),
            });
            pos += len;
            continue;
        }

        return Err(FolError::UnknownSymbol {
            position: pos,
            symbol: c,
        });
    }

    Ok(FolTokenSeq {
        tokens,
        source: formula.to_string(),
    })
}

/// Rewrites every alias in `formula` to its canonical Unicode symbol,
/// keeping all other bytes (including whitespace) untouched.
pub fn normalize_fol(formula: &str) -> Result<String, FolError> {
    let seq = tokenize_fol(formula)?;
    let mut out = String::with_capacity(formula.len());
    let mut cursor = 0;
    for tok in &seq.tokens {
        out.push_str(&formula[cursor..tok.span.0]);
        out.push_str(&tok.surface);
        cursor = tok.span.1;
    }
    out.push_str(&formula[cursor..]);
    Ok(out)
}

/// Pulls the formulas out of a translator response.
///
/// Only lines after the last `Conclusion:` header are considered, and of
/// those only lines carrying a `:::` separator; the explanation after the
/// separator is dropped.
pub fn extract_fol_from_llm_response(response: &str) -> Result<Vec<String>, FolError> {
    let lines: Vec<&str> = response.lines().collect();
    let header = lines
        .iter()
        .rposition(|l| strip_decoration(l).starts_with("Conclusion:"))
        .ok_or(FolError::NoFormulaFound)?;

    let mut formulas = Vec::new();
    let header_line = strip_decoration(lines[header]);
    let first = header_line["Conclusion:".len()..].trim();
    let tail = std::iter::once(first).chain(lines[header + 1..].iter().map(|l| l.trim()));
    for line in tail {
        if let Some((lhs, _)) = line.split_once(":::") {
            let lhs = lhs.trim();
            if !lhs.is_empty() {
                formulas.push(lhs.to_string());
            }
        }
    }
    if formulas.is_empty() {
        return Err(FolError::NoFormulaFound);
    }
    Ok(formulas)
}

// Markdown emphasis around headers ("**Conclusion:**") is common in chat output.
fn strip_decoration(line: &str) -> String {
    line.trim().replace("**", "").trim_start_matches('#').trim().to_string()
}

/// Joins the formulas of one text into a single newline-separated FOL text.
pub fn join_formulas<S: AsRef<str>>(formulas: &[S]) -> Result<String, FolError> {
    if formulas.is_empty() {
        return Err(FolError::EmptyList);
    }
    Ok(formulas
        .iter()
        .map(|f| f.as_ref())
        .collect::<Vec<_>>()
        .join("\n"))
}
