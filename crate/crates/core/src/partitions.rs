//! Set partitions as restricted growth strings.
//!
//! A restricted growth string `a` of length `n` has `a[0] = 0` and
//! `a[i] <= 1 + max(a[..i])`. These strings are in bijection with the
//! partitions of `0..n` and coincide with the canonical labels used by
//! [`Clustering`](crate::graph::Clustering), so lexicographic order on them
//! is the canonical tie-break order everywhere in the crate.

/// Bell number `B(n)` via the Bell triangle. Exact up to `n = 25`.
pub fn bell(n: usize) -> u128 {
    let mut row: Vec<u128> = vec![1];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &x in &row {
            let last = *next.last().unwrap();
            next.push(last + x);
        }
        row = next;
    }
    row[0]
}

/// Number of partitions of an `n`-set into at most `k` blocks.
pub fn partitions_at_most(n: usize, k: usize) -> u128 {
    // Stirling numbers of the second kind, row by row.
    let mut s = vec![0u128; k + 1];
    s[0] = 1;
    for _ in 0..n {
        for j in (1..=k).rev() {
            s[j] = s[j - 1] + j as u128 * s[j];
        }
        s[0] = 0;
    }
    s.iter().sum()
}

/// Lexicographic iterator over restricted growth strings, optionally capped
/// at `max_blocks` blocks.
#[derive(Clone, Debug)]
pub struct RestrictedGrowth {
    a: Vec<usize>,
    // prefix maxima: m[i] = max(a[..=i])
    m: Vec<usize>,
    cap: usize,
    started: bool,
    done: bool,
}

impl RestrictedGrowth {
    pub fn new(n: usize, max_blocks: Option<usize>) -> RestrictedGrowth {
        let cap = max_blocks.unwrap_or(n).min(n.max(1));
        RestrictedGrowth {
            a: vec![0; n],
            m: vec![0; n],
            cap,
            started: false,
            done: cap == 0 && n > 0,
        }
    }

    /// Advances to the next string; returns `false` when exhausted.
    pub fn advance(&mut self) -> bool {
        if self.done {
            return false;
        }
        if !self.started {
            self.started = true;
            return true;
        }
        let n = self.a.len();
        let mut i = n;
        while i > 1 {
            i -= 1;
            let limit = (self.m[i - 1] + 1).min(self.cap - 1);
            if self.a[i] < limit {
                self.a[i] += 1;
                self.m[i] = self.m[i - 1].max(self.a[i]);
                for j in i + 1..n {
                    self.a[j] = 0;
                    self.m[j] = self.m[i];
                }
                return true;
            }
        }
        self.done = true;
        false
    }

    pub fn current(&self) -> &[usize] {
        &self.a
    }

    pub fn blocks(&self) -> usize {
        self.m.last().map_or(0, |&m| m + 1)
    }
}

/// Calls `f(string, blocks)` for every partition of `0..n` in lexicographic
/// order.
pub fn for_each_partition(n: usize, max_blocks: Option<usize>, mut f: impl FnMut(&[usize], usize)) {
    let mut it = RestrictedGrowth::new(n, max_blocks);
    while it.advance() {
        f(it.current(), it.blocks());
    }
}
