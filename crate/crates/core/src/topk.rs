use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// An item id with its score. Ordered so that "greater" means "ranks
/// earlier": higher score first, then lower id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub id: usize,
    pub score: f64,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best `k` items, best first. Ties on score go to the lower id.
pub fn top_k(items: impl IntoIterator<Item = Scored>, k: usize) -> Vec<Scored> {
    if k == 0 {
        return Vec::new();
    }
    // min-heap of the current best k
    let mut heap: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::with_capacity(k + 1);
    for item in items {
        if heap.len() < k {
            heap.push(std::cmp::Reverse(item));
        } else if let Some(worst) = heap.peek() {
            if item > worst.0 {
                heap.pop();
                heap.push(std::cmp::Reverse(item));
            }
        }
    }
    let mut out: Vec<Scored> = heap.into_iter().map(|r| r.0).collect();
    out.sort_by(|a, b| b.cmp(a));
    out
}
