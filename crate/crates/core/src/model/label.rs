use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of option labels available (`A` through `U`).
pub const MAX_OPTIONS: usize = 21;

/// An MCQ option label, one of the first 21 uppercase Latin letters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(u8);

impl Label {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < MAX_OPTIONS).then_some(Label(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_char(self) -> char {
        (b'A' + self.0) as char
    }

    pub fn all() -> impl Iterator<Item = Label> {
        (0..MAX_OPTIONS as u8).map(Label)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid option label `{0}` (expected one of A-U)")]
pub struct InvalidLabel(pub String);

impl FromStr for Label {
    type Err = InvalidLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c @ 'A'..='U'), None) => Ok(Label(c as u8 - b'A')),
            _ => Err(InvalidLabel(s.to_string())),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered label to text map for closed-form questions.
///
/// Deserialization keeps every entry it sees, duplicates included, so that
/// record validation can report a duplicate label as a field error instead of
/// silently keeping the last value.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OptionMap {
    entries: Vec<(Label, String)>,
}

impl OptionMap {
    /// Builds a map with labels assigned in order starting at `A`.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| (Label::from_index(i).expect("at most 21 options"), t.into()))
            .collect();
        OptionMap { entries }
    }

    pub fn from_entries(entries: Vec<(Label, String)>) -> Self {
        OptionMap { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label: Label) -> Option<&str> {
        self.entries.iter().find(|(l, _)| *l == label).map(|(_, t)| t.as_str())
    }

    pub fn contains(&self, label: Label) -> bool {
        self.get(label).is_some()
    }

    /// Entries in label order.
    pub fn iter(&self) -> impl Iterator<Item = (Label, &str)> {
        let mut sorted: Vec<_> = self.entries.iter().map(|(l, t)| (*l, t.as_str())).collect();
        sorted.sort_by_key(|(l, _)| *l);
        sorted.into_iter()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(_, t)| t.as_str())
    }

    /// Checks label uniqueness, count bounds and pairwise-distinct texts.
    pub fn check(&self) -> Result<(), String> {
        if !(2..=MAX_OPTIONS).contains(&self.entries.len()) {
            return Err(format!("expected 2-21 options, found {}", self.entries.len()));
        }
        let mut seen = BTreeMap::new();
        for (label, text) in &self.entries {
            if seen.insert(*label, ()).is_some() {
                return Err(format!("duplicate label {label}"));
            }
            if text.trim().is_empty() {
                return Err(format!("option {label} is empty"));
            }
        }
        for (i, (la, a)) in self.entries.iter().enumerate() {
            for (lb, b) in &self.entries[i + 1..] {
                if a == b {
                    return Err(format!("options {la} and {lb} share the same text"));
                }
            }
        }
        Ok(())
    }
}

impl Serialize for OptionMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (label, text) in self.iter() {
            map.serialize_entry(&label, text)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for OptionMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct OptionMapVisitor;

        impl<'de> Visitor<'de> for OptionMapVisitor {
            type Value = OptionMap;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from option labels A-U to option text")
            }

            fn visit_map<M: MapAccess<'de>>(self, mut access: M) -> Result<OptionMap, M::Error> {
                let mut entries = Vec::new();
                while let Some((label, text)) = access.next_entry::<Label, String>()? {
                    entries.push((label, text));
                }
                Ok(OptionMap { entries })
            }
        }

        deserializer.deserialize_map(OptionMapVisitor)
    }
}
