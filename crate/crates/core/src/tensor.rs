//! Sparse transition-frequency tensor.
//!
//! An R-step state machine stores, for every observed path of `R + 1`
//! consecutive states (ordered oldest to newest), how often that path was
//! walked. Only observed paths are stored, so memory is proportional to the
//! number of distinct paths instead of `m^(R+1)`.

use std::collections::HashMap;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::StateIndex;

pub(crate) type PathKey = SmallVec<[StateIndex; 4]>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionTensor {
    arity: usize,
    dimension: usize,
    counts: HashMap<PathKey, u64>,
    mass: u64,
}

impl TransitionTensor {
    /// Creates an empty tensor for an R-step machine (arity `steps + 1`).
    pub fn new(steps: usize, dimension: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("transition steps must be at least 1".into()));
        }
        Ok(Self {
            arity: steps + 1,
            dimension,
            counts: HashMap::new(),
            mass: 0,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn steps(&self) -> usize {
        self.arity - 1
    }

    /// Number of states along each axis.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Total number of recorded paths.
    pub fn mass(&self) -> u64 {
        self.mass
    }

    /// Number of distinct paths with a non-zero count.
    pub fn distinct_paths(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Adds one axis slot. `new_index` must equal the current dimension.
    pub fn grow_dimension(&mut self, new_index: StateIndex) -> Result<()> {
        if new_index.as_usize() != self.dimension {
            return Err(Error::NonContiguousGrowth {
                expected: self.dimension,
                actual: new_index.as_usize(),
            });
        }
        self.dimension += 1;
        Ok(())
    }

    /// Grows the dimension up to `dimension` if it is currently smaller.
    pub fn ensure_dimension(&mut self, dimension: usize) {
        self.dimension = self.dimension.max(dimension);
    }

    fn check_path(&self, path: &[StateIndex]) -> Result<()> {
        if path.len() != self.arity {
            return Err(Error::Arity {
                expected: self.arity,
                actual: path.len(),
            });
        }
        if let Some(bad) = path.iter().find(|s| s.as_usize() >= self.dimension) {
            return Err(Error::StateOutOfRange {
                index: bad.0,
                dimension: self.dimension,
            });
        }
        Ok(())
    }

    /// Increments the count of `path` and returns the new count.
    pub fn record(&mut self, path: &[StateIndex]) -> Result<u64> {
        self.add(path, 1)
    }

    /// Adds `count` observations of `path`. Used when rebuilding from a dump.
    pub fn add(&mut self, path: &[StateIndex], count: u64) -> Result<u64> {
        self.check_path(path)?;
        if count == 0 {
            return Ok(self.count_unchecked(path));
        }
        self.mass += count;
        if let Some(slot) = self.counts.get_mut(path) {
            *slot += count;
            return Ok(*slot);
        }
        self.counts.insert(PathKey::from_slice(path), count);
        Ok(count)
    }

    fn count_unchecked(&self, path: &[StateIndex]) -> u64 {
        self.counts.get(path).copied().unwrap_or(0)
    }

    /// Frequency of `path`, or 0 when it was never observed.
    pub fn count(&self, path: &[StateIndex]) -> Result<u64> {
        if path.len() != self.arity {
            return Err(Error::Arity {
                expected: self.arity,
                actual: path.len(),
            });
        }
        Ok(self.count_unchecked(path))
    }

    /// Counts of every continuation of `prefix` (length `arity - 1`), indexed
    /// by the final state. Zero entries are omitted.
    pub fn continuations(&self, prefix: &[StateIndex]) -> Result<Vec<(StateIndex, u64)>> {
        if prefix.len() + 1 != self.arity {
            return Err(Error::Arity {
                expected: self.arity - 1,
                actual: prefix.len(),
            });
        }
        let mut key = PathKey::from_slice(prefix);
        key.push(StateIndex(0));
        let last = key.len() - 1;
        let mut out = Vec::new();
        for next in 0..self.dimension as u32 {
            key[last] = StateIndex(next);
            if let Some(&c) = self.counts.get(key.as_slice()) {
                out.push((StateIndex(next), c));
            }
        }
        Ok(out)
    }

    /// All `(path, count)` entries in lexicographic path order.
    pub fn entries(&self) -> Vec<(&[StateIndex], u64)> {
        let mut out: Vec<_> = self
            .counts
            .iter()
            .map(|(k, &c)| (k.as_slice(), c))
            .collect();
        out.sort_unstable_by(|a, b| a.0.cmp(b.0));
        out
    }

    /// Iterates entries in arbitrary order.
    pub fn iter(&self) -> impl Iterator<Item = (&[StateIndex], u64)> {
        self.counts.iter().map(|(k, &c)| (k.as_slice(), c))
    }

    /// Rebuilds the tensor with every state index passed through `f`.
    pub fn remap(
        &self,
        dimension: usize,
        f: impl Fn(StateIndex) -> StateIndex,
    ) -> Result<TransitionTensor> {
        let mut out = TransitionTensor::new(self.arity - 1, dimension)?;
        for (path, count) in self.iter() {
            let mapped: PathKey = path.iter().map(|&s| f(s)).collect();
            out.add(&mapped, count)?;
        }
        Ok(out)
    }

    /// Sums out the last axis, producing the tensor of one fewer step.
    pub fn marginalize_last(&self) -> Result<TransitionTensor> {
        if self.arity <= 2 {
            return Err(Error::Config(
                "cannot marginalize a one-step tensor further".into(),
            ));
        }
        let mut out = TransitionTensor::new(self.arity - 2, self.dimension)?;
        for (path, count) in self.iter() {
            out.add(&path[..path.len() - 1], count)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[u32]) -> Vec<StateIndex> {
        v.iter().copied().map(StateIndex).collect()
    }

    #[test]
    fn unseen_path_is_zero() {
        let t = TransitionTensor::new(2, 5).unwrap();
        assert_eq!(t.count(&p(&[1, 3, 4])).unwrap(), 0);
    }

    #[test]
    fn record_increments_and_tracks_mass() {
        let mut t = TransitionTensor::new(2, 5).unwrap();
        assert_eq!(t.record(&p(&[1, 3, 4])).unwrap(), 1);
        assert_eq!(t.record(&p(&[1, 3, 4])).unwrap(), 2);
        t.record(&p(&[0, 1, 2])).unwrap();
        assert_eq!(t.mass(), 3);
        assert_eq!(t.distinct_paths(), 2);
        let total: u64 = t.iter().map(|(_, c)| c).sum();
        assert_eq!(total, t.mass());
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let mut t = TransitionTensor::new(1, 3).unwrap();
        assert!(matches!(
            t.record(&p(&[0, 1, 2])),
            Err(Error::Arity {
                expected: 2,
                actual: 3
            })
        ));
        assert!(matches!(t.count(&p(&[0])), Err(Error::Arity { .. })));
    }

    #[test]
    fn out_of_range_state_is_rejected() {
        let mut t = TransitionTensor::new(1, 2).unwrap();
        assert!(matches!(
            t.record(&p(&[0, 2])),
            Err(Error::StateOutOfRange { index: 2, .. })
        ));
    }

    #[test]
    fn growth_must_be_contiguous() {
        let mut t = TransitionTensor::new(1, 0).unwrap();
        t.grow_dimension(StateIndex(0)).unwrap();
        assert_eq!(t.dimension(), 1);
        assert!(matches!(
            t.grow_dimension(StateIndex(3)),
            Err(Error::NonContiguousGrowth {
                expected: 1,
                actual: 3
            })
        ));
    }

    #[test]
    fn growth_preserves_counts() {
        let mut t = TransitionTensor::new(1, 5).unwrap();
        t.record(&p(&[0, 4])).unwrap();
        t.record(&p(&[4, 2])).unwrap();
        let before = t
            .entries()
            .into_iter()
            .map(|(k, c)| (k.to_vec(), c))
            .collect::<Vec<_>>();
        t.grow_dimension(StateIndex(5)).unwrap();
        let after = t
            .entries()
            .into_iter()
            .map(|(k, c)| (k.to_vec(), c))
            .collect::<Vec<_>>();
        assert_eq!(before, after);
        assert_eq!(t.dimension(), 6);
    }

    #[test]
    fn zero_steps_is_a_config_error() {
        assert!(matches!(TransitionTensor::new(0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn continuations_list_nonzero_successors() {
        let mut t = TransitionTensor::new(1, 3).unwrap();
        t.record(&p(&[0, 1])).unwrap();
        t.record(&p(&[0, 1])).unwrap();
        t.record(&p(&[0, 2])).unwrap();
        let c = t.continuations(&p(&[0])).unwrap();
        assert_eq!(c, vec![(StateIndex(1), 2), (StateIndex(2), 1)]);
        assert!(t.continuations(&p(&[2])).unwrap().is_empty());
    }
}
