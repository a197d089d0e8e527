use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::FoundryError;
use crate::gateway::tags::block_lines;
use crate::gateway::template::{DISTRACTORS, QUESTION_FORMULATE};
use crate::gateway::{parse_tagged, CompletionRequest, Gateway};
use crate::model::{Emr, Rejection, FOUNDRY_OPTION_COUNT, NONE_OF_THE_ABOVE};
use crate::questions::{contains_phrase, Outcome};

pub const STAGE: &str = "question";
/// Diagnostic options besides "None of the above".
pub const DIAGNOSTIC_OPTIONS: usize = FOUNDRY_OPTION_COUNT - 1;

/// Disease-name vocabulary, matched case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    canonical: HashMap<String, String>,
}

impl Vocabulary {
    pub fn from_terms<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Self {
        let mut canonical = HashMap::new();
        for term in terms {
            let term = term.as_ref().trim();
            if term.is_empty() || term.starts_with('#') {
                continue;
            }
            canonical.entry(term.to_lowercase()).or_insert_with(|| term.to_string());
        }
        Vocabulary { canonical }
    }

    /// One term per line; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self, FoundryError> {
        let text = std::fs::read_to_string(path).map_err(|e| FoundryError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::from_terms(text.lines()))
    }

    /// The vocabulary's spelling of `term`, if present.
    pub fn canonical(&self, term: &str) -> Option<&str> {
        let key = term.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        self.canonical.get(&key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }
}

/// 64-bit FNV-1a, used to derive per-item shuffle seeds.
pub fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Asks for a case vignette whose answer is the record's diagnosis.
pub fn formulate_question(
    gateway: &Gateway,
    backend: &str,
    id: &str,
    emr: &Emr,
) -> Result<Outcome<(String, String)>, FoundryError> {
    emr.check()
        .map_err(|e| FoundryError::Precondition(format!("{id}: {e}")))?;
    let exams = emr.exams.join("; ");
    let prompt = gateway.templates().render(
        QUESTION_FORMULATE,
        [
            ("chief_complaint", emr.chief_complaint.as_str()),
            ("present_illness", emr.present_illness.as_str()),
            ("past_history", emr.past_history.as_str()),
            ("allergy_history", emr.allergy_history.as_str()),
            ("exams", exams.as_str()),
            ("diagnosis", emr.diagnosis.as_str()),
        ],
    )?;
    let reply = gateway.complete(&CompletionRequest::new(backend, prompt).with_session(id))?;
    let question = parse_tagged(&reply, "Question").unwrap_or(reply.trim()).to_string();
    if question.is_empty() {
        return Ok(Outcome::Rejected(Rejection::new(STAGE, id, "empty question")));
    }
    if contains_phrase(&question, &emr.diagnosis) {
        return Ok(Outcome::Rejected(Rejection::new(
            STAGE,
            id,
            "question reveals the diagnosis",
        )));
    }
    Ok(Outcome::Accepted((question, emr.diagnosis.clone())))
}

/// Asks for candidate distractors, one per line in an `<Options>` block.
pub fn propose_distractors(
    gateway: &Gateway,
    backend: &str,
    id: &str,
    question: &str,
    diagnosis: &str,
    count: usize,
) -> Result<Vec<String>, FoundryError> {
    let count = count.to_string();
    let prompt = gateway.templates().render(
        DISTRACTORS,
        [
            ("count", count.as_str()),
            ("question", question),
            ("diagnosis", diagnosis),
        ],
    )?;
    let reply = gateway.complete(&CompletionRequest::new(backend, prompt).with_session(id))?;
    Ok(parse_tagged(&reply, "Options").map(block_lines).unwrap_or_default())
}

/// Builds the 21 options: the answer and distractors drawn in pool order,
/// shuffled over indexes 0–19, then "None of the above" at index 20.
///
/// Pool entries outside the vocabulary or equal to the answer or an earlier
/// pick are skipped. With `nota_keyed` the answer is withheld and index 20
/// is correct.
pub fn expand_options(
    answer: &str,
    pool: &[String],
    vocabulary: &Vocabulary,
    seed: u64,
    item_id: &str,
    nota_keyed: bool,
) -> Result<(Vec<String>, usize), FoundryError> {
    let answer = vocabulary
        .canonical(answer)
        .ok_or_else(|| FoundryError::AnswerNotInVocabulary(answer.to_string()))?;
    let needed = if nota_keyed {
        DIAGNOSTIC_OPTIONS
    } else {
        DIAGNOSTIC_OPTIONS - 1
    };
    let mut seen: HashSet<String> = [answer.to_lowercase(), NONE_OF_THE_ABOVE.to_lowercase()].into();
    let mut options: Vec<String> = Vec::with_capacity(FOUNDRY_OPTION_COUNT);
    if !nota_keyed {
        options.push(answer.to_string());
    }
    for entry in pool {
        if options.len() == DIAGNOSTIC_OPTIONS {
            break;
        }
        let Some(term) = vocabulary.canonical(entry) else {
            continue;
        };
        if seen.insert(term.to_lowercase()) {
            options.push(term.to_string());
        }
    }
    if options.len() < DIAGNOSTIC_OPTIONS {
        let available = options.len() - usize::from(!nota_keyed);
        return Err(FoundryError::PoolTooSmall { needed, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(item_id));
    options.shuffle(&mut rng);
    let answer_index = if nota_keyed {
        DIAGNOSTIC_OPTIONS
    } else {
        options.iter().position(|o| o == answer).expect("answer was inserted")
    };
    options.push(NONE_OF_THE_ABOVE.to_string());
    Ok((options, answer_index))
}
