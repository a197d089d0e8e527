//! The `<think>…</think><answer>…</answer>` training-target grammar.

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

const TAG_LITERALS: [&str; 4] = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TargetError {
    #[error("{part} contains the tag literal `{tag}`")]
    TagLiteral { part: &'static str, tag: &'static str },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("text does not match the <think>…</think><answer>…</answer> grammar")]
    Grammar,
}

/// Returns the first target tag literal found in `text`.
pub fn find_tag_literal(text: &str) -> Option<&'static str> {
    TAG_LITERALS.into_iter().find(|t| text.contains(t))
}

fn check_part(part: &'static str, text: &str) -> Result<(), TargetError> {
    if text.is_empty() {
        return Err(TargetError::Empty(part));
    }
    match find_tag_literal(text) {
        Some(tag) => Err(TargetError::TagLiteral { part, tag }),
        None => Ok(()),
    }
}

/// Serializes a think/answer pair. Both parts must be nonempty and tag-free.
pub fn render_target(think: &str, answer: &str) -> Result<String, TargetError> {
    check_part("think", think)?;
    check_part("answer", answer)?;
    Ok(format!(
        "{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"
    ))
}

/// Parses a serialized target exactly; no surrounding whitespace is accepted.
pub fn parse_target(text: &str) -> Result<(&str, &str), TargetError> {
    let rest = text.strip_prefix(THINK_OPEN).ok_or(TargetError::Grammar)?;
    let rest = rest.strip_suffix(ANSWER_CLOSE).ok_or(TargetError::Grammar)?;
    let (think, answer) = rest
        .split_once(&format!("{THINK_CLOSE}{ANSWER_OPEN}"))
        .ok_or(TargetError::Grammar)?;
    check_part("think", think).map_err(|_| TargetError::Grammar)?;
    check_part("answer", answer).map_err(|_| TargetError::Grammar)?;
    Ok((think, answer))
}
