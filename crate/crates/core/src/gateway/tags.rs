//! Flat, case-sensitive `<Tag>…</Tag>` extraction for model replies.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TagError {
    #[error("no <{0}> block in reply")]
    Absent(String),
    #[error("<{0}> block is not closed")]
    Unclosed(String),
    #[error("invalid rating `{0}` (expected 0 or 1)")]
    InvalidRating(String),
}

impl TagError {
    pub fn tag(&self) -> Option<&str> {
        match self {
            TagError::Absent(t) | TagError::Unclosed(t) => Some(t),
            TagError::InvalidRating(_) => Some("Rating"),
        }
    }
}

/// Returns the trimmed content of the first `<tag>` block.
pub fn parse_tagged<'a>(text: &'a str, tag: &str) -> Result<&'a str, TagError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open).ok_or_else(|| TagError::Absent(tag.to_string()))? + open.len();
    let len = text[start..]
        .find(&close)
        .ok_or_else(|| TagError::Unclosed(tag.to_string()))?;
    Ok(text[start..start + len].trim())
}

pub fn wrap(tag: &str, content: &str) -> String {
    format!("<{tag}>{content}</{tag}>")
}

/// Extracts the `<Rating>` block and parses its sole integer, which must be 0 or 1.
pub fn parse_rating(text: &str) -> Result<u8, TagError> {
    let inner = parse_tagged(text, "Rating")?;
    match inner.parse::<i64>() {
        Ok(0) => Ok(0),
        Ok(1) => Ok(1),
        _ => Err(TagError::InvalidRating(inner.to_string())),
    }
}

/// Nonempty, trimmed lines of a block.
pub fn block_lines(block: &str) -> Vec<String> {
    block
        .lines()
        .map(|l| l.trim().trim_start_matches(['-', '*', '•']).trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}
