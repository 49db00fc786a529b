//! Delete-min container for values in [0, 1).
//!
//! Values are kept as their IEEE bit patterns, which order like the values
//! themselves for non-negative floats. Everything at or below the active
//! bucket lives in a four-ary heap; higher buckets are plain unsorted vectors
//! that are heapified only once the heap runs dry. The active bucket follows
//! the minimum, so the heap stays small while appends to the far buckets
//! touch only a few hot vector tails.

const BUCKETS: usize = 1 << BUCKET_BITS;
const BUCKET_BITS: u32 = 12;

#[inline]
fn bucket_of(bits: u64) -> usize {
    let v = f64::from_bits(bits);
    ((v * BUCKETS as f64) as usize).min(BUCKETS - 1)
}

#[derive(Clone, Debug)]
pub struct MinQueue {
    // invariant: every element whose bucket is <= active is in `heap`,
    // and `heap` is nonempty whenever `len > 0`.
    heap: QuadHeap,
    buckets: Vec<Vec<u64>>,
    active: usize,
    len: usize,
    // heap size right after the last demotion; a demotion runs once the heap
    // has grown well past it
    settled: usize,
}

impl Default for MinQueue {
    fn default() -> Self {
        Self::new()
    }
}

impl MinQueue {
    pub fn new() -> Self {
        Self {
            heap: QuadHeap::default(),
            buckets: vec![Vec::new(); BUCKETS],
            active: 0,
            len: 0,
            settled: 0,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn peek_min(&self) -> Option<f64> {
        self.heap.peek().map(f64::from_bits)
    }

    #[inline]
    pub fn push(&mut self, value: f64) {
        let bits = value.to_bits();
        let b = bucket_of(bits);
        if self.len == 0 {
            self.active = b;
            self.heap.push(bits);
        } else if b <= self.active {
            self.heap.push(bits);
            self.maybe_demote();
        } else {
            self.buckets[b].push(bits);
        }
        self.len += 1;
    }

    pub fn pop_min(&mut self) -> Option<f64> {
        let top = self.heap.pop()?;
        self.len -= 1;
        if self.heap.is_empty() {
            self.refill();
        }
        Some(f64::from_bits(top))
    }

    /// Removes the minimum and inserts `value` in one operation. The caller
    /// guarantees the queue is nonempty.
    #[inline]
    pub fn replace_min(&mut self, value: f64) -> f64 {
        let bits = value.to_bits();
        let b = bucket_of(bits);
        if b <= self.active {
            let old = self.heap.replace_top(bits);
            self.maybe_demote();
            f64::from_bits(old)
        } else {
            let old = self.heap.pop().expect("replace_min on empty queue");
            self.buckets[b].push(bits);
            if self.heap.is_empty() {
                self.refill();
            }
            f64::from_bits(old)
        }
    }

    fn refill(&mut self) {
        debug_assert!(self.heap.is_empty());
        if self.len == 0 {
            return;
        }
        let next = (self.active + 1..BUCKETS)
            .find(|&b| !self.buckets[b].is_empty())
            .expect("queue length positive but no bucket holds elements");
        self.active = next;
        let chunk = std::mem::take(&mut self.buckets[next]);
        self.heap = QuadHeap::from_vec(chunk);
        self.settled = self.heap.items.len();
    }

    /// The active bucket only moves up when the heap empties, so an early
    /// high minimum would leave everything below it in the heap for good.
    /// Once the heap doubles, lower the active bucket to the minimum's and
    /// return everything above it to the bucket vectors.
    #[inline]
    fn maybe_demote(&mut self) {
        if self.heap.items.len() <= 2 * self.settled + 256 {
            return;
        }
        let target = bucket_of(self.heap.peek().expect("heap nonempty"));
        let items = std::mem::take(&mut self.heap.items);
        let mut keep = Vec::with_capacity(items.len() / 2);
        for bits in items {
            let b = bucket_of(bits);
            if b <= target {
                keep.push(bits);
            } else {
                self.buckets[b].push(bits);
            }
        }
        self.active = target;
        self.heap = QuadHeap::from_vec(keep);
        self.settled = self.heap.items.len();
    }

    /// All stored values in ascending order.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.iter().collect();
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.heap
            .items
            .iter()
            .chain(self.buckets.iter().flatten())
            .map(|&b| f64::from_bits(b))
    }
}

/// Four-ary min-heap of keys.
#[derive(Clone, Debug, Default)]
struct QuadHeap {
    items: Vec<u64>,
}

impl QuadHeap {
    fn from_vec(items: Vec<u64>) -> Self {
        let mut h = Self { items };
        let len = h.items.len();
        if len > 1 {
            for i in (0..=(len - 2) / 4).rev() {
                let v = h.items[i];
                h.sift_down(i, v);
            }
        }
        h
    }

    #[inline]
    fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[inline]
    fn peek(&self) -> Option<u64> {
        self.items.first().copied()
    }

    #[inline]
    fn push(&mut self, v: u64) {
        let a = &mut self.items;
        a.push(v);
        let mut i = a.len() - 1;
        while i > 0 {
            let p = (i - 1) / 4;
            if v >= a[p] {
                break;
            }
            a[i] = a[p];
            i = p;
        }
        a[i] = v;
    }

    #[inline]
    fn pop(&mut self) -> Option<u64> {
        let last = self.items.pop()?;
        if self.items.is_empty() {
            return Some(last);
        }
        Some(self.replace_top(last))
    }

    /// Replaces the minimum by `v`; the heap must be nonempty.
    #[inline]
    fn replace_top(&mut self, v: u64) -> u64 {
        let old = self.items[0];
        self.sift_down(0, v);
        old
    }

    #[inline]
    fn sift_down(&mut self, mut i: usize, v: u64) {
        let a = &mut self.items[..];
        let len = a.len();
        loop {
            let c = 4 * i + 1;
            if c + 3 < len {
                let m01 = if a[c + 1] < a[c] { c + 1 } else { c };
                let m23 = if a[c + 3] < a[c + 2] { c + 3 } else { c + 2 };
                let m = if a[m23] < a[m01] { m23 } else { m01 };
                if a[m] >= v {
                    break;
                }
                a[i] = a[m];
                i = m;
            } else {
                if c < len {
                    let mut m = c;
                    for j in c + 1..len {
                        if a[j] < a[m] {
                            m = j;
                        }
                    }
                    if a[m] < v {
                        a[i] = a[m];
                        i = m;
                    }
                }
                break;
            }
        }
        a[i] = v;
    }
}
