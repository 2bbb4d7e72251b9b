//! Hierarchical content names, prefix relations and exclude-filter matching.
//!
//! Names are the routing and matching key everywhere in the simulator: FIB
//! lookup is longest-prefix over names, cache lookup is prefix match with an
//! exclude set, and enumeration attacks walk a cache by growing that set.
//!
//! Ordering is component-wise and byte-exact, so a name sorts immediately
//! before all of its extensions. [`match_with_exclude`] relies on this to
//! pick the lexicographically smallest candidate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Why a piece of text is not a valid name.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NameError {
    #[error("name {text:?} must begin with '/'")]
    MissingLeadingSlash { text: String },
    /// `position` is 1-based: the first component after the root is 1.
    #[error("name {text:?} has an empty component at position {position}")]
    EmptyComponent { text: String, position: usize },
    #[error("component {component:?} contains '/'")]
    SlashInComponent { component: String },
}

/// A hierarchical content name such as `/umass/cs/cs660/student/report`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name {
    components: Vec<String>,
}

impl Name {
    /// The root name `/`, a prefix of every name.
    pub fn root() -> Self {
        Name::default()
    }

    pub fn parse(text: &str) -> Result<Self, NameError> {
        let rest = text
            .strip_prefix('/')
            .ok_or_else(|| NameError::MissingLeadingSlash { text: text.to_string() })?;
        if rest.is_empty() {
            return Ok(Name::root());
        }
        let mut components = Vec::new();
        for (i, part) in rest.split('/').enumerate() {
            if part.is_empty() {
                return Err(NameError::EmptyComponent { text: text.to_string(), position: i + 1 });
            }
            components.push(part.to_string());
        }
        Ok(Name { components })
    }

    pub fn from_components<I, S>(parts: I) -> Result<Self, NameError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut name = Name::root();
        for part in parts {
            name = name.child(part)?;
        }
        Ok(name)
    }

    /// A copy of this name with one more component.
    pub fn child(&self, component: impl Into<String>) -> Result<Name, NameError> {
        let component = component.into();
        if component.is_empty() {
            return Err(NameError::EmptyComponent {
                text: format!("{self}/"),
                position: self.components.len() + 1,
            });
        }
        if component.contains('/') {
            return Err(NameError::SlashInComponent { component });
        }
        let mut components = self.components.clone();
        components.push(component);
        Ok(Name { components })
    }

    /// Like [`Name::child`] for components the caller has already formatted
    /// from trusted parts (numbers, hex). Panics on an invalid component.
    pub fn join(&self, component: impl fmt::Display) -> Name {
        self.child(component.to_string()).expect("generated name component is valid")
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_root(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_root()
    }

    pub fn first(&self) -> Option<&str> {
        self.components.first().map(String::as_str)
    }

    pub fn last(&self) -> Option<&str> {
        self.components.last().map(String::as_str)
    }

    /// The name without its last component; the root is its own parent.
    pub fn parent(&self) -> Name {
        let mut components = self.components.clone();
        components.pop();
        Name { components }
    }

    /// The first `len` components.
    pub fn truncated(&self, len: usize) -> Name {
        Name { components: self.components[..len.min(self.components.len())].to_vec() }
    }

    pub fn is_prefix_of(&self, other: &Name) -> bool {
        is_prefix(self, other)
    }

    pub fn contains_text(&self, needle: &str) -> bool {
        self.components.iter().any(|c| c.contains(needle))
    }
}

/// True iff `a`'s components are a leading subsequence of `b`'s.
pub fn is_prefix(a: &Name, b: &Name) -> bool {
    a.components.len() <= b.components.len()
        && a.components.iter().zip(&b.components).all(|(x, y)| x == y)
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.components.is_empty() {
            return f.write_str("/");
        }
        for c in &self.components {
            write!(f, "/{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Name {
    type Err = NameError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Name::parse(s)
    }
}

impl Serialize for Name {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Name {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Name::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// A set of full names a prefix query must not return.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ExcludeFilter {
    excluded: BTreeSet<Name>,
}

impl ExcludeFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: Name) -> bool {
        self.excluded.insert(name)
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.excluded.contains(name)
    }

    pub fn is_empty(&self) -> bool {
        self.excluded.is_empty()
    }

    pub fn len(&self) -> usize {
        self.excluded.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Name> {
        self.excluded.iter()
    }

    /// A candidate matches iff `prefix` is a prefix of it and it is not excluded.
    pub fn admits(&self, prefix: &Name, candidate: &Name) -> bool {
        is_prefix(prefix, candidate) && !self.excluded.contains(candidate)
    }
}

impl FromIterator<Name> for ExcludeFilter {
    fn from_iter<I: IntoIterator<Item = Name>>(iter: I) -> Self {
        ExcludeFilter { excluded: iter.into_iter().collect() }
    }
}

/// The lexicographically smallest candidate matching `(prefix, filter)`.
pub fn match_with_exclude<'a, I>(prefix: &Name, filter: &ExcludeFilter, candidates: I) -> Option<Name>
where
    I: IntoIterator<Item = &'a Name>,
{
    candidates.into_iter().filter(|c| filter.admits(prefix, c)).min().cloned()
}
