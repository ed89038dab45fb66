use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use crate::env::EpisodeStatus;

/// Encoded observation row, shared between consecutive transitions.
pub type Features = Arc<[f32]>;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Features,
    /// Normalised action.
    pub a: [f64; 2],
    pub r: f64,
    pub s_next: Features,
    /// Terminal for bootstrapping: set on success and collision only.
    pub done: bool,
    /// Episode status after the step, kept for auditing.
    pub status: EpisodeStatus,
}

impl Transition {
    pub fn done_for(status: EpisodeStatus) -> bool {
        matches!(status, EpisodeStatus::Success | EpisodeStatus::Collision)
    }
}

/// Fixed-capacity FIFO ring with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    /// Slot the next push overwrites once full; also the oldest item.
    head: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::new(),
            capacity,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// `n` items drawn uniformly with replacement; `None` until the buffer
    /// holds at least `n`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&T>> {
        if n == 0 || self.items.len() < n {
            return None;
        }
        Some((0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect())
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }
}

/// A minibatch as matrices, one row per transition.
#[derive(Clone, Debug)]
pub struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    /// `(M, 1)`.
    pub r: Array2<f64>,
    pub s_next: Array2<f64>,
    /// `(M, 1)`, 1.0 for terminal transitions.
    pub done: Array2<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let m = ts.len();
        let w = ts.first().map_or(0, |t| t.s.len());
        let feats = |f: &dyn Fn(&Transition) -> &Features| {
            Array2::from_shape_fn((m, w), |(i, j)| f64::from(f(ts[i])[j]))
        };
        Self {
            s: feats(&|t| &t.s),
            a: Array2::from_shape_fn((m, 2), |(i, j)| ts[i].a[j]),
            r: Array2::from_shape_fn((m, 1), |(i, _)| ts[i].r),
            s_next: feats(&|t| &t.s_next),
            done: Array2::from_shape_fn((m, 1), |(i, _)| if ts[i].done { 1.0 } else { 0.0 }),
        }
    }

    pub fn len(&self) -> usize {
        self.s.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.s.nrows() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn no_sample_before_min_size() {
        let mut b = ReplayBuffer::new(10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for i in 0..4 {
            assert!(b.sample(5, &mut rng).is_none());
            b.push(i);
        }
        b.push(4);
        let s = b.sample(5, &mut rng).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|x| **x < 5));
    }

    #[test]
    fn eviction_is_fifo() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..7 {
            b.push(i);
            assert!(b.len() <= 3);
        }
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![4, 5, 6]);
        b.push(7);
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![5, 6, 7]);
    }

    #[test]
    fn done_flag_excludes_timeouts() {
        assert!(Transition::done_for(EpisodeStatus::Success));
        assert!(Transition::done_for(EpisodeStatus::Collision));
        assert!(!Transition::done_for(EpisodeStatus::Timeout));
        assert!(!Transition::done_for(EpisodeStatus::Running));
    }

    #[test]
    fn batch_layout() {
        let f = |v: &[f32]| -> Features { Arc::from(v) };
        let t = Transition {
            s: f(&[1.0, 2.0]),
            a: [0.5, -0.5],
            r: 3.0,
            s_next: f(&[4.0, 5.0]),
            done: true,
            status: EpisodeStatus::Success,
        };
        let b = Batch::from_transitions(&[&t, &t]);
        assert_eq!(b.len(), 2);
        assert_eq!(b.s[[1, 1]], 2.0);
        assert_eq!(b.s_next[[0, 0]], 4.0);
        assert_eq!(b.done[[1, 0]], 1.0);
        assert_eq!(b.a[[0, 1]], -0.5);
    }
}
