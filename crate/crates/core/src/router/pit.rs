use std::collections::{BTreeMap, BTreeSet};

use crate::names::Name;
use crate::packet::FaceId;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PitEntry {
    pub faces: BTreeSet<FaceId>,
    pub nonces: BTreeSet<u64>,
    pub created: SimTime,
    pub expiry: SimTime,
}

/// What [`Pit::register`] did with an interest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PitOutcome {
    /// A new entry was created; the interest must go upstream.
    Created,
    /// An entry for the name already existed; the face was added to it.
    Aggregated,
    DuplicateNonce,
    Overflow,
}

/// Pending Interest Table keyed on exact name. Aggregating into an existing
/// entry keeps its original expiry.
#[derive(Clone, Debug)]
pub struct Pit {
    entries: BTreeMap<Name, PitEntry>,
    by_expiry: BTreeSet<(SimTime, Name)>,
    capacity: Option<usize>,
    timeout: SimDuration,
}

impl Pit {
    pub fn new(capacity: Option<usize>, timeout: SimDuration) -> Self {
        Pit { entries: BTreeMap::new(), by_expiry: BTreeSet::new(), capacity, timeout }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn get(&self, name: &Name) -> Option<&PitEntry> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.entries.contains_key(name)
    }

    /// True if `nonce` was already recorded for `name`.
    pub fn seen_nonce(&self, name: &Name, nonce: u64) -> bool {
        self.entries.get(name).is_some_and(|e| e.nonces.contains(&nonce))
    }

    /// Removes entries with `expiry < now` and returns how many went.
    pub fn expire(&mut self, now: SimTime) -> usize {
        let mut removed = 0;
        while let Some((expiry, _)) = self.by_expiry.first() {
            if *expiry >= now {
                break;
            }
            let (_, name) = self.by_expiry.pop_first().expect("non-empty");
            self.entries.remove(&name);
            removed += 1;
        }
        removed
    }

    /// Records an interest. Does not expire anything; callers expire first.
    pub fn register(&mut self, name: &Name, face: FaceId, nonce: u64, now: SimTime) -> PitOutcome {
        if let Some(entry) = self.entries.get_mut(name) {
            if !entry.nonces.insert(nonce) {
                return PitOutcome::DuplicateNonce;
            }
            entry.faces.insert(face);
            return PitOutcome::Aggregated;
        }
        if self.capacity.is_some_and(|cap| self.entries.len() >= cap) {
            return PitOutcome::Overflow;
        }
        self.insert_new(name.clone(), face, nonce, now);
        PitOutcome::Created
    }

    /// True if a new entry could be created right now.
    pub fn has_room(&self) -> bool {
        self.capacity.is_none_or(|cap| self.entries.len() < cap)
    }

    fn insert_new(&mut self, name: Name, face: FaceId, nonce: u64, now: SimTime) {
        let expiry = now + self.timeout;
        self.by_expiry.insert((expiry, name.clone()));
        self.entries.insert(
            name,
            PitEntry { faces: [face].into(), nonces: [nonce].into(), created: now, expiry },
        );
    }

    /// Removes and returns the entry satisfied by data named `name`.
    pub fn take(&mut self, name: &Name) -> Option<PitEntry> {
        let entry = self.entries.remove(name)?;
        self.by_expiry.remove(&(entry.expiry, name.clone()));
        Some(entry)
    }

    pub fn names(&self) -> impl Iterator<Item = &Name> {
        self.entries.keys()
    }
}
