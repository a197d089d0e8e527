use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{FoundryItem, Gender, Patient};

pub const AGE_BUCKETS: [(u32, u32); 4] = [(0, 20), (21, 40), (41, 60), (61, 90)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub count: usize,
    /// Percentage of all items, rounded to 2 decimals.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeBucket {
    pub min: u32,
    pub max: u32,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoundryStats {
    pub total: usize,
    pub male: Share,
    pub female: Share,
    pub age_buckets: Vec<AgeBucket>,
    pub departments: BTreeMap<String, Share>,
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (count as f64 * 10_000.0 / total as f64).round() / 100.0
}

pub fn stats_from<'a>(records: impl IntoIterator<Item = (&'a Patient, &'a str)>) -> FoundryStats {
    let mut total = 0;
    let mut male = 0;
    let mut ages = [0usize; AGE_BUCKETS.len()];
    let mut departments: BTreeMap<String, usize> = BTreeMap::new();
    for (patient, department) in records {
        total += 1;
        if patient.gender == Gender::Male {
            male += 1;
        }
        if let Some(i) = AGE_BUCKETS
            .iter()
            .position(|(lo, hi)| (*lo..=*hi).contains(&patient.age))
        {
            ages[i] += 1;
        }
        *departments.entry(department.to_string()).or_default() += 1;
    }
    let share = |count| Share {
        count,
        percent: percent(count, total),
    };
    FoundryStats {
        total,
        male: share(male),
        female: share(total - male),
        age_buckets: AGE_BUCKETS
            .iter()
            .zip(ages)
            .map(|((min, max), count)| AgeBucket {
                min: *min,
                max: *max,
                count,
                percent: percent(count, total),
            })
            .collect(),
        departments: departments.into_iter().map(|(d, c)| (d, share(c))).collect(),
    }
}

/// Gender split, age-bucket and department histograms.
pub fn compute_stats(items: &[FoundryItem]) -> FoundryStats {
    stats_from(items.iter().map(|i| (&i.patient, i.department.as_str())))
}
