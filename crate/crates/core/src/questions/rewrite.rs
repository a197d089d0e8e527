use std::sync::OnceLock;

use regex::Regex;

use super::{Outcome, QuestionError};
use crate::gateway::template::REWRITE_OPEN;
use crate::gateway::{parse_tagged, CompletionRequest, Gateway};
use crate::model::{OpenQuestion, QuestionSeed, Record, Rejection};

pub const STAGE: &str = "rewrite";

fn label_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[\s(\[])[A-U]\)").unwrap())
}

/// Case-insensitive containment on word boundaries.
pub fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let hay = haystack.to_lowercase();
    let needle = needle.trim().to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let is_word = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
    hay.match_indices(&needle).any(|(at, m)| {
        let before = hay[..at].chars().next_back();
        let after = hay[at + m.len()..].chars().next();
        !is_word(before) && !is_word(after)
    })
}

/// Checks that an open stem no longer depends on the seed's options.
pub fn check_open_stem(stem: &str, seed: &QuestionSeed) -> Result<(), String> {
    if stem.trim().is_empty() {
        return Err("open stem is empty".into());
    }
    if let Some(text) = seed.options.texts().find(|t| contains_phrase(stem, t)) {
        return Err(format!("open stem contains option text `{text}`"));
    }
    let lower = stem.to_lowercase();
    if lower.contains("following") && lower.contains("option") {
        return Err("open stem refers to the options".into());
    }
    if let Some(m) = label_marker().find(stem) {
        return Err(format!("open stem contains option marker `{}`", m.as_str().trim()));
    }
    Ok(())
}

fn parse_rewrite(reply: &str) -> (String, String) {
    let stem = parse_tagged(reply, "Question").unwrap_or(reply.trim());
    let notes = parse_tagged(reply, "Notes").unwrap_or("");
    (stem.to_string(), notes.to_string())
}

/// Rewrites a closed-form seed into an open question, re-asking once when the
/// result still leans on the options.
pub fn rewrite_open(
    gateway: &Gateway,
    backend: &str,
    seed: &QuestionSeed,
) -> Result<Outcome<OpenQuestion>, QuestionError> {
    seed.validate()
        .map_err(|e| QuestionError::Precondition(format!("seed {}: {e}", seed.id)))?;
    let prompt = gateway
        .templates()
        .render(REWRITE_OPEN, [("stem", seed.stem.as_str())])?;
    let mut reason = String::new();
    for _ in 0..2 {
        let reply = gateway.complete(&CompletionRequest::new(backend, prompt.clone()).with_session(seed.id.clone()))?;
        let (open_stem, rewrite_notes) = parse_rewrite(&reply);
        let open = OpenQuestion {
            seed_id: seed.id.clone(),
            open_stem,
            rewrite_notes,
        };
        match check_open_stem(&open.open_stem, seed).and_then(|_| open.check_against(seed).map_err(|e| e.to_string())) {
            Ok(()) => return Ok(Outcome::Accepted(open)),
            Err(e) => reason = e,
        }
    }
    Ok(Outcome::Rejected(Rejection::new(STAGE, &seed.id, reason)))
}
