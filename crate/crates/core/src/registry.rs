//! Name-keyed registries of interchangeable strategies.
//!
//! Consensus rules, problem kinds and experiment presets all live behind a
//! trait object and are looked up by the name used in configs and on the
//! command line.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Anything that can be stored in a [`Registry`].
pub trait Named {
    fn name(&self) -> &str;
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `item` under its own name, replacing any previous entry.
    pub fn register(&mut self, item: Arc<T>) -> &mut Self {
        self.entries.insert(item.name().to_string(), item);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownName {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<T>> {
        self.entries.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dummy(&'static str);

    impl Named for Dummy {
        fn name(&self) -> &str {
            self.0
        }
    }

    #[test]
    fn lookup_and_unknown() {
        let mut reg: Registry<Dummy> = Registry::new("dummy");
        reg.register(Arc::new(Dummy("b"))).register(Arc::new(Dummy("a")));
        assert_eq!(reg.names(), vec!["a", "b"]);
        assert_eq!(reg.get("a").unwrap().name(), "a");
        let err = reg.get("zzz").err().unwrap().to_string();
        assert!(err.contains("unknown dummy 'zzz'"), "{err}");
        assert!(err.contains("a, b"));
    }
}
