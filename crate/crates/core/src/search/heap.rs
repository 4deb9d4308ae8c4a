//! Array-backed min-max heap: O(1) access to both ends, O(log n) removal
//! from either end. Even levels are min levels, odd levels max levels.

#[derive(Clone, Debug, Default)]
pub struct MinMaxHeap<T> {
    data: Vec<T>,
}

fn is_min_level(i: usize) -> bool {
    (usize::BITS - (i + 1).leading_zeros() - 1) % 2 == 0
}

impl<T: Ord> MinMaxHeap<T> {
    pub fn new() -> Self {
        Self { data: Vec::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            data: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn clear(&mut self) {
        self.data.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    pub fn peek_min(&self) -> Option<&T> {
        self.data.first()
    }

    pub fn peek_max(&self) -> Option<&T> {
        self.max_index().map(|i| &self.data[i])
    }

    fn max_index(&self) -> Option<usize> {
        match self.data.len() {
            0 => None,
            1 => Some(0),
            2 => Some(1),
            _ => Some(if self.data[1] >= self.data[2] { 1 } else { 2 }),
        }
    }

    pub fn push(&mut self, item: T) {
        self.data.push(item);
        self.bubble_up(self.data.len() - 1);
    }

    pub fn pop_min(&mut self) -> Option<T> {
        self.remove_at(0)
    }

    pub fn pop_max(&mut self) -> Option<T> {
        let i = self.max_index()?;
        self.remove_at(i)
    }

    fn remove_at(&mut self, i: usize) -> Option<T> {
        if i >= self.data.len() {
            return None;
        }
        let item = self.data.swap_remove(i);
        if i < self.data.len() {
            self.trickle_down(i);
        }
        Some(item)
    }

    fn bubble_up(&mut self, i: usize) {
        if i == 0 {
            return;
        }
        let parent = (i - 1) / 2;
        if is_min_level(i) {
            if self.data[i] > self.data[parent] {
                self.data.swap(i, parent);
                self.bubble_up_by(parent, |a, b| a > b);
            } else {
                self.bubble_up_by(i, |a, b| a < b);
            }
        } else if self.data[i] < self.data[parent] {
            self.data.swap(i, parent);
            self.bubble_up_by(parent, |a, b| a < b);
        } else {
            self.bubble_up_by(i, |a, b| a > b);
        }
    }

    fn bubble_up_by(&mut self, mut i: usize, better: impl Fn(&T, &T) -> bool) {
        while i > 2 {
            let grand = ((i - 1) / 2 - 1) / 2;
            if better(&self.data[i], &self.data[grand]) {
                self.data.swap(i, grand);
                i = grand;
            } else {
                break;
            }
        }
    }

    fn trickle_down(&mut self, i: usize) {
        if is_min_level(i) {
            self.trickle_down_by(i, |a, b| a < b);
        } else {
            self.trickle_down_by(i, |a, b| a > b);
        }
    }

    fn trickle_down_by(&mut self, mut i: usize, better: impl Fn(&T, &T) -> bool) {
        let n = self.data.len();
        loop {
            let first_child = 2 * i + 1;
            if first_child >= n {
                return;
            }
            // Best among children and grandchildren.
            let mut m = first_child;
            let candidates = [first_child + 1, 4 * i + 3, 4 * i + 4, 4 * i + 5, 4 * i + 6];
            for &c in &candidates {
                if c < n && better(&self.data[c], &self.data[m]) {
                    m = c;
                }
            }
            if m > first_child + 1 {
                // Grandchild.
                if better(&self.data[m], &self.data[i]) {
                    self.data.swap(m, i);
                    let parent = (m - 1) / 2;
                    if better(&self.data[parent], &self.data[m]) {
                        self.data.swap(m, parent);
                    }
                    i = m;
                } else {
                    return;
                }
            } else {
                if better(&self.data[m], &self.data[i]) {
                    self.data.swap(m, i);
                }
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Clone, Debug)]
    enum Op {
        Push(i32),
        PopMin,
        PopMax,
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            3 => (-50i32..50).prop_map(Op::Push),
            1 => Just(Op::PopMin),
            1 => Just(Op::PopMax),
        ]
    }

    proptest! {
        #[test]
        fn matches_sorted_vec_model(ops in proptest::collection::vec(op(), 0..300)) {
            let mut heap = MinMaxHeap::new();
            let mut model: Vec<i32> = Vec::new();
            for op in ops {
                match op {
                    Op::Push(x) => {
                        heap.push(x);
                        model.push(x);
                        model.sort();
                    }
                    Op::PopMin => {
                        let want = if model.is_empty() { None } else { Some(model.remove(0)) };
                        prop_assert_eq!(heap.pop_min(), want);
                    }
                    Op::PopMax => {
                        prop_assert_eq!(heap.pop_max(), model.pop());
                    }
                }
                prop_assert_eq!(heap.len(), model.len());
                prop_assert_eq!(heap.peek_min(), model.first());
                prop_assert_eq!(heap.peek_max(), model.last());
            }
        }
    }

    #[test]
    fn drains_in_order_from_both_ends() {
        let mut h = MinMaxHeap::new();
        for x in [5, 1, 9, 3, 7, 2, 8, 6, 4, 0] {
            h.push(x);
        }
        assert_eq!(h.pop_min(), Some(0));
        assert_eq!(h.pop_max(), Some(9));
        let mut rest = Vec::new();
        while let Some(x) = h.pop_min() {
            rest.push(x);
        }
        assert_eq!(rest, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(h.pop_max(), None);
    }
}
