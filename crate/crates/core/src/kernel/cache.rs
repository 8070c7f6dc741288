use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;

use crate::bifiltration::BiFiltration;
use crate::persistence::{PersistenceDiagram, Workspace};
use crate::slicing::{entry_values_into, SliceKey, SliceLine};

type Key = (u64, usize, SliceKey);

/// Concurrent memo of slice diagrams keyed by bi-filtration fingerprint,
/// homology degree and canonical slice.
///
/// Diagrams are always computed on the canonical representative of a slice,
/// so a hit and a miss return identical values. Once `capacity` entries are
/// stored, new diagrams are computed but no longer inserted.
#[derive(Debug)]
pub struct DiagramCache {
    map: DashMap<Key, Arc<PersistenceDiagram>>,
    capacity: usize,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Default for DiagramCache {
    fn default() -> Self {
        DiagramCache::with_capacity(DEFAULT_CAPACITY)
    }
}

pub const DEFAULT_CAPACITY: usize = 1 << 18;

impl DiagramCache {
    pub fn with_capacity(capacity: usize) -> Self {
        DiagramCache {
            map: DashMap::new(),
            capacity,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn hit_rate(&self) -> f64 {
        let (h, m) = (self.hits(), self.misses());
        if h + m == 0 {
            0.0
        } else {
            h as f64 / (h + m) as f64
        }
    }

    /// Diagram of `x` restricted to the canonical form of `line`.
    pub fn diagram(
        &self,
        x: &BiFiltration,
        line: &SliceLine,
        degree: usize,
    ) -> Arc<PersistenceDiagram> {
        let line = line.canonical();
        let mut values = Vec::new();
        self.get_or_compute(x.fingerprint(), degree, line.key(), || {
            entry_values_into(x, &line, &mut values);
            Workspace::default().diagram_of_values(x, &values, degree)
        })
    }

    pub(crate) fn get_or_compute(
        &self,
        fingerprint: u64,
        degree: usize,
        key: SliceKey,
        compute: impl FnOnce() -> PersistenceDiagram,
    ) -> Arc<PersistenceDiagram> {
        let k = (fingerprint, degree, key);
        if let Some(d) = self.map.get(&k) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Arc::clone(&d);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let d = Arc::new(compute());
        if self.map.len() < self.capacity {
            // Another worker may have raced us; both computed the same diagram.
            self.map.entry(k).or_insert_with(|| Arc::clone(&d));
        }
        d
    }
}
