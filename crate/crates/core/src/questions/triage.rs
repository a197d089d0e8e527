use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::QuestionError;
use crate::eval::{extract_choice, render_mcq_prompt};
use crate::gateway::{CompletionRequest, Gateway};
use crate::model::{Difficulty, Label, QuestionSeed};

pub const DEFAULT_EASY_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VotingRule {
    /// Easy only if every member answers correctly.
    #[default]
    AllCorrectEasy,
    /// Easy if more than half answer correctly.
    Majority,
    /// Easy if any member answers correctly.
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriagePanel {
    pub members: Vec<String>,
    #[serde(default)]
    pub voting_rule: VotingRule,
}

impl TriagePanel {
    pub fn new<S: Into<String>>(members: impl IntoIterator<Item = S>) -> Self {
        TriagePanel {
            members: members.into_iter().map(Into::into).collect(),
            voting_rule: VotingRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub member: String,
    /// None when the member's answer could not be mapped to an option.
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriageOutcome {
    pub difficulty: Difficulty,
    pub votes: Vec<Vote>,
}

/// Asks each panel member the closed-form question; an unmappable answer is
/// recorded and counts as incorrect.
pub fn triage_difficulty(
    gateway: &Gateway,
    seed: &QuestionSeed,
    panel: &TriagePanel,
) -> Result<TriageOutcome, QuestionError> {
    if panel.members.is_empty() {
        return Err(QuestionError::Precondition("triage panel is empty".into()));
    }
    let prompt = render_mcq_prompt(gateway, &seed.stem, &seed.options)?;
    let mut votes = Vec::with_capacity(panel.members.len());
    for member in &panel.members {
        let reply = gateway.complete(&CompletionRequest::new(member, prompt.clone()).with_session(seed.id.clone()))?;
        votes.push(Vote {
            member: member.clone(),
            label: extract_choice(&reply, &seed.options),
        });
    }
    let correct = votes.iter().filter(|v| v.label == Some(seed.correct_label)).count();
    let easy = match panel.voting_rule {
        VotingRule::AllCorrectEasy => correct == votes.len(),
        VotingRule::Majority => 2 * correct > votes.len(),
        VotingRule::Any => correct > 0,
    };
    Ok(TriageOutcome {
        difficulty: if easy { Difficulty::Easy } else { Difficulty::Hard },
        votes,
    })
}

/// All of `hard` followed by a uniformly sampled ⌊fraction·|easy|⌋ subset of
/// `easy`, kept in input order.
pub fn sample_training_pool<T: Clone>(
    easy: &[T],
    hard: &[T],
    easy_fraction: f64,
    seed: u64,
) -> Result<Vec<T>, QuestionError> {
    if !(0.0..=1.0).contains(&easy_fraction) {
        return Err(QuestionError::Precondition(format!(
            "easy_fraction {easy_fraction} outside [0, 1]"
        )));
    }
    let n = (easy_fraction * easy.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, easy.len(), n).into_vec();
    picked.sort_unstable();
    let mut pool = hard.to_vec();
    pool.extend(picked.into_iter().map(|i| easy[i].clone()));
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockScript;
    use crate::model::{OptionMap, SeedSource};

    fn seed() -> QuestionSeed {
        QuestionSeed {
            id: "s1".into(),
            source: SeedSource::ExamBank,
            stem: "Fever and crackles. Most likely diagnosis?".into(),
            options: OptionMap::from_texts(["pneumonia", "asthma", "bronchitis"]),
            correct_label: "A".parse().unwrap(),
            ground_truth: "crackles".into(),
            difficulty: Default::default(),
        }
    }

    fn panel_run(a: &str, b: &str, rule: VotingRule) -> TriageOutcome {
        let gw = Gateway::new()
            .with_mock("m1", MockScript::queue([a]))
            .with_mock("m2", MockScript::queue([b]));
        let mut panel = TriagePanel::new(["m1", "m2"]);
        panel.voting_rule = rule;
        triage_difficulty(&gw, &seed(), &panel).unwrap()
    }

    #[test]
    fn voting() {
        let a = "<answer>A</answer>";
        let b = "<answer>asthma</answer>";
        assert_eq!(panel_run(a, a, VotingRule::AllCorrectEasy).difficulty, Difficulty::Easy);
        assert_eq!(panel_run(a, b, VotingRule::AllCorrectEasy).difficulty, Difficulty::Hard);
        let out = panel_run("no idea", a, VotingRule::AllCorrectEasy);
        assert_eq!(out.difficulty, Difficulty::Hard);
        assert_eq!(out.votes[0].label, None);
        assert_eq!(panel_run(a, b, VotingRule::Any).difficulty, Difficulty::Easy);
        assert_eq!(panel_run(a, b, VotingRule::Majority).difficulty, Difficulty::Hard);
    }

    #[test]
    fn empty_panel() {
        let gw = Gateway::new();
        assert!(triage_difficulty(&gw, &seed(), &TriagePanel::new(Vec::<String>::new())).is_err());
    }

    #[test]
    fn pool_sizes() {
        let hard: Vec<u32> = (0..10).collect();
        let easy: Vec<u32> = (100..120).collect();
        assert_eq!(sample_training_pool(&easy, &hard, 0.1, 7).unwrap().len(), 12);
        assert_eq!(sample_training_pool(&easy, &hard, 0.0, 7).unwrap(), hard);
        let all = sample_training_pool(&easy, &hard, 1.0, 7).unwrap();
        assert_eq!(all, hard.iter().chain(&easy).copied().collect::<Vec<_>>());
        assert!(sample_training_pool(&easy, &hard, 1.5, 7).is_err());
    }

    #[test]
    fn pool_is_reproducible() {
        let easy: Vec<u32> = (0..1000).collect();
        let a = sample_training_pool(&easy, &[], 0.3, 42).unwrap();
        assert_eq!(a, sample_training_pool(&easy, &[], 0.3, 42).unwrap());
        assert_ne!(a, sample_training_pool(&easy, &[], 0.3, 43).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }
}
