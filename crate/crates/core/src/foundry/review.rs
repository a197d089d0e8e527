use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::checklist::is_known_criterion;
use crate::model::{read_records, write_records, Decision, FoundryItem, ReviewEntry, ReviewStatus};

pub const MAX_TIER: u8 = 3;
pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 200;

/// One reviewer's verdict on an item at a tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    #[serde(default)]
    pub item_id: String,
    pub tier: u8,
    pub reviewer_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub criterion: Option<String>,
    #[serde(default)]
    pub note: String,
    pub expected_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReviewError {
    #[error("item `{0}` not found")]
    NotFound(String),
    #[error("version conflict: expected {expected}, stored {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error("invalid transition: {0}")]
    InvalidTransition(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("persistence failed: {0}")]
    Persist(String),
}

pub trait Clock: Send + Sync {
    /// Seconds since the Unix epoch.
    fn now(&self) -> i64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> i64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0)
    }
}

/// Always returns the same instant.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub i64);

impl Clock for FixedClock {
    fn now(&self) -> i64 {
        self.0
    }
}

/// A reject must name a checklist criterion; any criterion given must exist.
pub fn check_decision(decision: &ReviewDecision) -> Result<(), ReviewError> {
    match (&decision.decision, &decision.criterion) {
        (Decision::Reject, None) => Err(ReviewError::InvalidDecision("reject requires a criterion".into())),
        (_, Some(c)) if !is_known_criterion(c) => Err(ReviewError::InvalidDecision(format!("unknown criterion `{c}`"))),
        _ => Ok(()),
    }
}

/// Pure transition: checks the decision against the item and applies it.
pub fn apply_review(item: &mut FoundryItem, decision: &ReviewDecision, timestamp: i64) -> Result<(), ReviewError> {
    check_decision(decision)?;
    if decision.expected_version != item.review.version {
        return Err(ReviewError::Conflict {
            expected: decision.expected_version,
            actual: item.review.version,
        });
    }
    if item.review.status != ReviewStatus::Pending {
        return Err(ReviewError::InvalidTransition(format!(
            "item `{}` is {:?}, not pending",
            item.id, item.review.status
        )));
    }
    if decision.tier != item.review.tier {
        return Err(ReviewError::InvalidTransition(format!(
            "item `{}` is at tier {}, decision is for tier {}",
            item.id, item.review.tier, decision.tier
        )));
    }
    let review = &mut item.review;
    match decision.decision {
        Decision::Approve if review.tier < MAX_TIER => review.tier += 1,
        Decision::Approve => review.status = ReviewStatus::Final,
        Decision::Reject => review.status = ReviewStatus::Rejected,
    }
    review.history.push(ReviewEntry {
        tier: decision.tier,
        reviewer_id: decision.reviewer_id.clone(),
        decision: decision.decision,
        criterion: decision.criterion.clone(),
        note: decision.note.clone(),
        timestamp,
    });
    review.version += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub items: Vec<FoundryItem>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
}

/// Review queue over a fixed set of items. Each item has its own lock, so
/// decisions on different items never wait on each other.
pub struct ReviewStore {
    items: BTreeMap<String, Mutex<FoundryItem>>,
    roster: Option<HashMap<String, u8>>,
    clock: Box<dyn Clock>,
    persist_to: Option<PathBuf>,
    persist_lock: Mutex<()>,
}

impl ReviewStore {
    pub fn new(items: impl IntoIterator<Item = FoundryItem>) -> Self {
        ReviewStore {
            items: items.into_iter().map(|i| (i.id.clone(), Mutex::new(i))).collect(),
            roster: None,
            clock: Box::new(SystemClock),
            persist_to: None,
            persist_lock: Mutex::new(()),
        }
    }

    /// Loads items from JSONL and writes every change back to the same file.
    pub fn open(path: &Path) -> Result<Self, ReviewError> {
        let items = read_records::<FoundryItem>(path)
            .and_then(|r| r.collect::<Result<Vec<_>, _>>())
            .map_err(|e| ReviewError::Persist(e.to_string()))?;
        Ok(Self::new(items).persisting_to(path))
    }

    pub fn persisting_to(mut self, path: &Path) -> Self {
        self.persist_to = Some(path.to_path_buf());
        self
    }

    pub fn with_clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    /// Restricts each reviewer to one tier.
    pub fn with_roster(mut self, roster: HashMap<String, u8>) -> Self {
        self.roster = Some(roster);
        self
    }

    pub fn get(&self, id: &str) -> Option<FoundryItem> {
        self.items.get(id).map(|m| m.lock().unwrap().clone())
    }

    pub fn all(&self) -> Vec<FoundryItem> {
        self.items.values().map(|m| m.lock().unwrap().clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items matching the filters, ordered by id; pages start at 1.
    pub fn list(&self, tier: Option<u8>, status: Option<ReviewStatus>, page: usize, page_size: usize) -> Page {
        let page = page.max(1);
        let page_size = page_size.clamp(1, MAX_PAGE_SIZE);
        let matching: Vec<FoundryItem> = self
            .all()
            .into_iter()
            .filter(|i| tier.is_none_or(|t| i.review.tier == t))
            .filter(|i| status.is_none_or(|s| i.review.status == s))
            .collect();
        let total = matching.len();
        let items = matching
            .into_iter()
            .skip((page - 1) * page_size)
            .take(page_size)
            .collect();
        Page {
            items,
            page,
            page_size,
            total,
        }
    }

    pub fn decide(&self, decision: &ReviewDecision) -> Result<FoundryItem, ReviewError> {
        let slot = self
            .items
            .get(&decision.item_id)
            .ok_or_else(|| ReviewError::NotFound(decision.item_id.clone()))?;
        check_decision(decision)?;
        if let Some(roster) = &self.roster {
            match roster.get(&decision.reviewer_id) {
                None => {
                    return Err(ReviewError::Forbidden(format!(
                        "unknown reviewer `{}`",
                        decision.reviewer_id
                    )));
                }
                Some(&t) if t != decision.tier => {
                    return Err(ReviewError::Forbidden(format!(
                        "reviewer `{}` reviews at tier {t}, not {}",
                        decision.reviewer_id, decision.tier
                    )));
                }
                Some(_) => {}
            }
        }
        let updated = {
            let mut item = slot.lock().unwrap();
            apply_review(&mut item, decision, self.clock.now())?;
            item.clone()
        };
        self.persist()?;
        Ok(updated)
    }

    fn persist(&self) -> Result<(), ReviewError> {
        let Some(path) = &self.persist_to else {
            return Ok(());
        };
        let _guard = self.persist_lock.lock().unwrap();
        let snapshot = self.all();
        let tmp = path.with_extension("jsonl.tmp");
        write_records(&tmp, snapshot.iter()).map_err(|e| ReviewError::Persist(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| ReviewError::Persist(format!("{}: {e}", path.display())))
    }
}
