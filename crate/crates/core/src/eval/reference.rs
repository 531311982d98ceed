use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::Time;

/// Best known bounds of one benchmark instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub name: String,
    pub ub: Time,
    #[serde(default)]
    pub lb: Option<Time>,
    #[serde(default)]
    pub optimal: Option<bool>,
    #[serde(default)]
    pub source: String,
}

/// Instance name (lower case) to reference values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReferenceTable {
    entries: BTreeMap<String, Reference>,
}

impl ReferenceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Time)>) -> Self {
        let mut t = Self::new();
        for (name, ub) in pairs {
            t.insert(Reference {
                name: name.to_string(),
                ub,
                lb: None,
                optimal: None,
                source: String::new(),
            });
        }
        t
    }

    /// CSV with columns `name,ub[,lb,optimal,source]`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut t = Self::new();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        for row in r.deserialize() {
            t.insert(row?);
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, mut r: Reference) {
        r.name = r.name.to_lowercase();
        self.entries.insert(r.name.clone(), r);
    }

    pub fn get(&self, name: &str) -> Option<&Reference> {
        self.entries.get(&name.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Reference> {
        self.entries.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_csv_with_optional_columns() {
        let t = ReferenceTable::from_csv("name,ub,lb,optimal,source\nTA01,1231,1231,true,\"x, y\"\nta02,1244,,,\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("ta01").unwrap().ub, 1231);
        assert_eq!(t.get("TA02").unwrap().lb, None);
        assert!(t.get("ta03").is_none());
        assert!(ReferenceTable::from_csv("name,ub\nx,abc\n").is_err());
    }
}
