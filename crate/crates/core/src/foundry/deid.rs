use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::FoundryError;

/// Passes over the text before giving up on reaching a fixpoint.
const MAX_PASSES: usize = 8;

/// A named pattern and the bracketed placeholder that replaces its matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeidRule {
    pub name: String,
    pub pattern: String,
    pub replacement: String,
}

impl DeidRule {
    pub fn new(name: &str, pattern: &str, replacement: &str) -> Self {
        DeidRule {
            name: name.into(),
            pattern: pattern.into(),
            replacement: replacement.into(),
        }
    }
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\[[A-Z_]+\]$").unwrap())
}

/// Compiled rules, applied in declared order.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<(DeidRule, Regex)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleMatch {
    pub rule: String,
    pub text: String,
}

const SURNAMES: &[&str] = &[
    "Zhang", "Wang", "Li", "Liu", "Chen", "Yang", "Huang", "Zhao", "Wu", "Zhou", "Xu", "Sun", "Ma", "Zhu", "Hu", "Guo",
    "He", "Lin", "Gao", "Luo", "Smith", "Johnson", "Williams", "Brown", "Jones", "Garcia", "Miller", "Davis",
];

const CITIES: &[&str] = &[
    "Beijing",
    "Shanghai",
    "Guangzhou",
    "Shenzhen",
    "Chengdu",
    "Wuhan",
    "Hangzhou",
    "Nanjing",
    "Tianjin",
    "Chongqing",
    "Xi'an",
    "Suzhou",
    "Changsha",
    "Zhengzhou",
    "Boston",
    "London",
    "New York",
    "Chicago",
];

impl RuleSet {
    pub fn new(rules: Vec<DeidRule>) -> Result<Self, FoundryError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            if !placeholder().is_match(&rule.replacement) {
                return Err(FoundryError::Rule(format!(
                    "rule `{}`: replacement `{}` is not a bracketed placeholder",
                    rule.name, rule.replacement
                )));
            }
            let re = Regex::new(&rule.pattern).map_err(|e| FoundryError::Rule(format!("rule `{}`: {e}", rule.name)))?;
            compiled.push((rule, re));
        }
        for (rule, _) in &compiled {
            if let Some((other, _)) = compiled.iter().find(|(_, re)| re.is_match(&rule.replacement)) {
                return Err(FoundryError::Rule(format!(
                    "placeholder `{}` of rule `{}` matches rule `{}`",
                    rule.replacement, rule.name, other.name
                )));
            }
        }
        Ok(RuleSet { rules: compiled })
    }

    /// Names, institutions, locations, phone numbers and ID numbers.
    pub fn builtin() -> Self {
        let surnames = SURNAMES.join("|");
        let cities = CITIES.join("|");
        RuleSet::new(vec![
            DeidRule::new("title_name", r"\b(?:Dr|Mr|Mrs|Ms|Miss)\.?\s+[A-Z][a-z]+\b", "[NAME]"),
            DeidRule::new("name", &format!(r"\b(?:{surnames})\s+[A-Z][a-z]+\b"), "[NAME]"),
            DeidRule::new(
                "institution",
                r"\b(?:[A-Z][A-Za-z']+\s+)+(?:Hospital|Clinic|Medical Center|Health Center|University)\b",
                "[INSTITUTION]",
            ),
            DeidRule::new("location", &format!(r"\b(?:{cities})\b"), "[LOCATION]"),
            DeidRule::new("id_number", r"\b\d{17}[\dXx]\b|\b(?:MRN|ID)\s*[:#]?\s*\d{5,}\b", "[ID]"),
            DeidRule::new("phone", r"\b1[3-9]\d{9}\b|\b\d{3}-\d{3,4}-\d{4}\b", "[PHONE]"),
        ])
        .expect("builtin rules are valid")
    }

    pub fn rules(&self) -> impl Iterator<Item = &DeidRule> {
        self.rules.iter().map(|(r, _)| r)
    }

    fn pass(&self, text: &str) -> String {
        let mut out = text.to_string();
        for (rule, re) in &self.rules {
            if let std::borrow::Cow::Owned(replaced) = re.replace_all(&out, rule.replacement.as_str()) {
                out = replaced;
            }
        }
        out
    }

    /// Applies every rule in order, repeating until nothing changes.
    pub fn deidentify(&self, text: &str) -> String {
        let mut current = self.pass(text);
        for _ in 1..MAX_PASSES {
            let next = self.pass(&current);
            if next == current {
                break;
            }
            current = next;
        }
        current
    }

    pub fn find_match(&self, text: &str) -> Option<RuleMatch> {
        self.rules.iter().find_map(|(rule, re)| {
            re.find(text).map(|m| RuleMatch {
                rule: rule.name.clone(),
                text: m.as_str().to_string(),
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn replaces_in_order() {
        let rules = RuleSet::builtin();
        assert_eq!(
            rules.deidentify("Zhang San visited Beijing Hospital"),
            "[NAME] visited [INSTITUTION]"
        );
        assert_eq!(
            rules.deidentify("Lives in Wuhan, call 13812345678."),
            "Lives in [LOCATION], call [PHONE]."
        );
        assert_eq!(rules.deidentify("MRN: 1234567 seen by Dr. Lee"), "[ID] seen by [NAME]");
        assert_eq!(rules.deidentify("cough for 3 days"), "cough for 3 days");
    }

    #[test]
    fn rejects_bad_rules() {
        assert!(RuleSet::new(vec![DeidRule::new("x", "(", "[X]")]).is_err());
        assert!(RuleSet::new(vec![DeidRule::new("x", "a", "name")]).is_err());
        assert!(RuleSet::new(vec![DeidRule::new("x", r"\[", "[X]")]).is_err());
    }

    #[test]
    fn detects_matches() {
        let rules = RuleSet::builtin();
        assert_eq!(rules.find_match("from Shanghai").unwrap().rule, "location");
        assert!(rules.find_match("[NAME] from [LOCATION]").is_none());
    }

    proptest! {
        #[test]
        fn idempotent(words in prop::collection::vec(
            prop_oneof![
                Just("Zhang".to_string()), Just("Wei".to_string()), Just("Beijing".to_string()),
                Just("Hospital".to_string()), Just("Dr.".to_string()), Just("13812345678".to_string()),
                Just("Li".to_string()), Just("Ming".to_string()), Just("City".to_string()),
                "[a-z]{1,6}", "[A-Z][a-z]{1,6}", "[0-9]{1,18}",
            ],
            0..30,
        )) {
            let rules = RuleSet::builtin();
            let text = words.join(" ");
            let once = rules.deidentify(&text);
            prop_assert_eq!(rules.deidentify(&once), once.clone());
            prop_assert!(rules.find_match(&once).is_none(), "{}", once);
        }
    }
}
