use alloc::collections::BinaryHeap;
use core::cmp::{Ordering, Reverse};

struct Entry<E> {
    time: f64,
    tie: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.tie.cmp(&other.tie))
    }
}

/// Min-queue on `(time, insertion counter)`. The counter makes the order total,
/// so equal-time events pop in the order they were pushed.
pub(crate) struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    next_tie: u64,
}

impl<E> EventQueue<E> {
    pub(crate) fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_tie: 0,
        }
    }

    pub(crate) fn push(&mut self, time: f64, event: E) {
        let tie = self.next_tie;
        self.next_tie += 1;
        self.heap.push(Reverse(Entry { time, tie, event }));
    }

    pub(crate) fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub(crate) fn pop(&mut self) -> Option<(f64, E)> {
        self.heap.pop().map(|Reverse(e)| (e.time, e.event))
    }

    pub(crate) fn len(&self) -> usize {
        self.heap.len()
    }

    /// Pending events in processing order.
    pub(crate) fn sorted(&self) -> alloc::vec::Vec<(f64, &E)> {
        let mut all: alloc::vec::Vec<&Entry<E>> = self.heap.iter().map(|Reverse(e)| e).collect();
        all.sort();
        all.into_iter().map(|e| (e.time, &e.event)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn pops_by_time_then_insertion() {
        let mut q = EventQueue::new();
        q.push(2.0, 'a');
        q.push(1.0, 'b');
        q.push(2.0, 'c');
        q.push(1.0, 'd');
        q.push(0.5, 'e');
        assert_eq!(q.sorted().into_iter().map(|(_, e)| *e).collect::<Vec<_>>(), ['e', 'b', 'd', 'a', 'c']);
        let order: Vec<char> = core::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, ['e', 'b', 'd', 'a', 'c']);
        assert_eq!(q.len(), 0);
        assert_eq!(q.peek_time(), None);
    }
}
