use super::deid::RuleSet;
use super::FoundryError;
use crate::gateway::tags::block_lines;
use crate::gateway::template::EMR_EXTRACT;
use crate::gateway::{CompletionRequest, Gateway};
use crate::model::{DialogueRecord, Emr, Rejection};
use crate::questions::Outcome;

pub const STAGE: &str = "emr";
pub const NOT_REPORTED: &str = "not reported";

const SECTIONS: [&str; 6] = [
    "chief complaint",
    "present illness",
    "past history",
    "allergy history",
    "exams",
    "diagnosis",
];

/// Splits a labeled-section reply into the six section bodies.
fn sections(reply: &str) -> [String; 6] {
    let mut out: [String; 6] = Default::default();
    let mut current: Option<usize> = None;
    for line in reply.lines() {
        let trimmed = line.trim().trim_start_matches(['-', '*']).trim();
        let lower = trimmed.to_lowercase();
        let label = SECTIONS.iter().position(|s| {
            lower
                .strip_prefix(s)
                .is_some_and(|rest| rest.trim_start().starts_with(':'))
        });
        match label {
            Some(i) => {
                let body = trimmed[trimmed.find(':').unwrap() + 1..].trim();
                out[i] = body.to_string();
                current = Some(i);
            }
            None => {
                if let Some(i) = current {
                    if !trimmed.is_empty() {
                        if !out[i].is_empty() {
                            out[i].push('\n');
                        }
                        out[i].push_str(trimmed);
                    }
                }
            }
        }
    }
    out
}

fn reported(text: &str) -> Option<String> {
    let t = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if t.is_empty() || t.eq_ignore_ascii_case(NOT_REPORTED) {
        None
    } else {
        Some(t)
    }
}

/// Parses an extraction reply; complaint and diagnosis are required.
pub fn parse_emr(reply: &str) -> Result<Emr, String> {
    let [complaint, illness, past, allergy, exams, diagnosis] = sections(reply);
    let chief_complaint = reported(&complaint).ok_or("chief complaint missing")?;
    let diagnosis = reported(&diagnosis).ok_or("diagnosis missing")?;
    let optional = |s: &str| reported(s).unwrap_or_else(|| NOT_REPORTED.to_string());
    let mut exam_list: Vec<String> = block_lines(&exams.replace(';', "\n"))
        .into_iter()
        .filter(|e| !e.eq_ignore_ascii_case(NOT_REPORTED))
        .collect();
    if exam_list.is_empty() {
        exam_list.push(NOT_REPORTED.to_string());
    }
    Ok(Emr {
        chief_complaint,
        present_illness: optional(&illness),
        past_history: optional(&past),
        allergy_history: optional(&allergy),
        exams: exam_list,
        diagnosis,
    })
}

fn deidentify_emr(emr: Emr, rules: &RuleSet) -> Emr {
    Emr {
        chief_complaint: rules.deidentify(&emr.chief_complaint),
        present_illness: rules.deidentify(&emr.present_illness),
        past_history: rules.deidentify(&emr.past_history),
        allergy_history: rules.deidentify(&emr.allergy_history),
        exams: emr.exams.iter().map(|e| rules.deidentify(e)).collect(),
        diagnosis: rules.deidentify(&emr.diagnosis),
    }
}

/// Extracts a structured record from an already de-identified dialogue.
pub fn generate_emr(
    gateway: &Gateway,
    backend: &str,
    dialogue: &DialogueRecord,
    rules: &RuleSet,
) -> Result<Outcome<Emr>, FoundryError> {
    let transcript = dialogue.transcript();
    if let Some(m) = rules.find_match(&transcript) {
        return Err(FoundryError::Precondition(format!(
            "dialogue {} still matches rule `{}`",
            dialogue.id, m.rule
        )));
    }
    let prompt = gateway
        .templates()
        .render(EMR_EXTRACT, [("dialogue", transcript.as_str())])?;
    let reply = gateway.complete(&CompletionRequest::new(backend, prompt).with_session(dialogue.id.clone()))?;
    Ok(match parse_emr(&reply) {
        Ok(emr) => Outcome::Accepted(deidentify_emr(emr, rules)),
        Err(reason) => Outcome::Rejected(Rejection::new(STAGE, &dialogue.id, reason)),
    })
}
