use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Stable identifier of a sample in the corpus it was loaded from.
pub type SampleId = u64;

/// Sorted, duplicate-free set of sample IDs.
///
/// Every subset the unlearning machinery talks about (forget sets, core sets,
/// support sets, retained pools) is an `IdSet` over the corpus ID space.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdSet(Vec<SampleId>);

impl IdSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    /// Builds a set from arbitrary IDs, sorting and dropping duplicates.
    pub fn from_unsorted(mut ids: Vec<SampleId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self(ids)
    }

    /// Wraps an already sorted, duplicate-free vector.
    pub fn from_sorted(ids: Vec<SampleId>) -> Result<Self, DataError> {
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidParam(
                "id list is not strictly ascending".into(),
            ));
        }
        Ok(Self(ids))
    }

    pub fn range(n: u64) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    /// Position of `id` inside the sorted set.
    pub fn position(&self, id: SampleId) -> Option<usize> {
        self.0.binary_search(&id).ok()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = SampleId> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[SampleId] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<SampleId> {
        self.0
    }

    pub fn union(&self, other: &IdSet) -> IdSet {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        IdSet(out)
    }

    pub fn intersection(&self, other: &IdSet) -> IdSet {
        IdSet(self.0.iter().copied().filter(|&id| other.contains(id)).collect())
    }

    pub fn difference(&self, other: &IdSet) -> IdSet {
        IdSet(self.0.iter().copied().filter(|&id| !other.contains(id)).collect())
    }

    pub fn is_subset(&self, other: &IdSet) -> bool {
        self.0.iter().all(|&id| other.contains(id))
    }

    pub fn is_disjoint(&self, other: &IdSet) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.0.iter().all(|&id| !large.contains(id))
    }

    /// Draws `n` distinct members uniformly at random; deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<IdSet, DataError> {
        if n > self.len() {
            return Err(DataError::InvalidParam(format!(
                "cannot draw {n} ids from a pool of {}",
                self.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = index::sample(&mut rng, self.len(), n);
        Ok(IdSet::from_unsorted(
            picked.into_iter().map(|i| self.0[i]).collect(),
        ))
    }
}

impl fmt::Debug for IdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len() <= 16 {
            f.debug_set().entries(self.0.iter()).finish()
        } else {
            write!(f, "IdSet(len={}, first={:?})", self.len(), &self.0[..8])
        }
    }
}

impl FromIterator<SampleId> for IdSet {
    fn from_iter<T: IntoIterator<Item = SampleId>>(iter: T) -> Self {
        IdSet::from_unsorted(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a IdSet {
    type Item = &'a SampleId;
    type IntoIter = std::slice::Iter<'a, SampleId>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
