//! Double sum-tree.
//!
//! Every leaf carries a sampling factor `p^alpha` and a replacing factor
//! `1 / p^alpha`; every internal node carries the sums of both over its
//! subtree, plus the max and min leaf priority so that new experiences can be
//! stored at the current maximum and the lowest-priority slot can be found in
//! `O(log D)`.
//!
//! Leaves are padded to a power of two. Empty leaves contribute zero to both
//! sums and are never returned by a prefix search.

use crate::error::{AcerError, Result};

/// Which of the two per-leaf factors a prefix search runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Sampling,
    Replacing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    sampling: f64,
    replacing: f64,
    max_priority: f64,
    min_priority: f64,
}

impl Node {
    const EMPTY: Node = Node {
        sampling: 0.0,
        replacing: 0.0,
        max_priority: f64::NEG_INFINITY,
        min_priority: f64::INFINITY,
    };

    fn combine(a: &Node, b: &Node) -> Node {
        Node {
            sampling: a.sampling + b.sampling,
            replacing: a.replacing + b.replacing,
            max_priority: a.max_priority.max(b.max_priority),
            min_priority: a.min_priority.min(b.min_priority),
        }
    }

    fn sum(&self, factor: Factor) -> f64 {
        match factor {
            Factor::Sampling => self.sampling,
            Factor::Replacing => self.replacing,
        }
    }
}

/// Result of an instrumented prefix search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchHit {
    pub leaf: usize,
    /// Tree nodes touched, root and leaf included.
    pub visits: usize,
}

#[derive(Debug, Clone)]
pub struct DoubleSumTree {
    capacity: usize,
    /// Number of leaves in the padded bottom level (a power of two).
    width: usize,
    alpha: f64,
    /// Heap layout, root at index 1, leaves at `width..2 * width`.
    nodes: Vec<Node>,
    priorities: Vec<Option<f64>>,
}

impl DoubleSumTree {
    pub fn new(capacity: usize, alpha: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(AcerError::Config("sum-tree capacity must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(AcerError::Config(format!("alpha {alpha} outside [0, 1]")));
        }
        let width = capacity.next_power_of_two();
        Ok(DoubleSumTree {
            capacity,
            width,
            alpha,
            nodes: vec![Node::EMPTY; 2 * width],
            priorities: vec![None; capacity],
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Sets leaf `leaf` to priority `p`, refreshing both sums up to the root.
    pub fn set(&mut self, leaf: usize, p: f64) -> Result<()> {
        if leaf >= self.capacity {
            return Err(AcerError::Domain(format!(
                "leaf {leaf} out of range for capacity {}",
                self.capacity
            )));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(AcerError::Domain(format!(
                "priority must be positive and finite, got {p}"
            )));
        }
        let factor = p.powf(self.alpha);
        self.priorities[leaf] = Some(p);
        self.write_leaf(
            leaf,
            Node {
                sampling: factor,
                replacing: 1.0 / factor,
                max_priority: p,
                min_priority: p,
            },
        );
        Ok(())
    }

    /// Empties a leaf.
    pub fn clear(&mut self, leaf: usize) {
        if leaf < self.capacity {
            self.priorities[leaf] = None;
            self.write_leaf(leaf, Node::EMPTY);
        }
    }

    fn write_leaf(&mut self, leaf: usize, node: Node) {
        let mut i = leaf + self.width;
        self.nodes[i] = node;
        while i > 1 {
            i /= 2;
            self.nodes[i] = Node::combine(&self.nodes[2 * i], &self.nodes[2 * i + 1]);
        }
    }

    pub fn priority(&self, leaf: usize) -> Option<f64> {
        self.priorities.get(leaf).copied().flatten()
    }

    pub fn sampling_factor(&self, leaf: usize) -> f64 {
        self.nodes[leaf + self.width].sampling
    }

    pub fn replacing_factor(&self, leaf: usize) -> f64 {
        self.nodes[leaf + self.width].replacing
    }

    pub fn total(&self, factor: Factor) -> f64 {
        self.nodes[1].sum(factor)
    }

    pub fn total_sampling(&self) -> f64 {
        self.nodes[1].sampling
    }

    pub fn total_replacing(&self) -> f64 {
        self.nodes[1].replacing
    }

    /// Largest stored priority, if any leaf is set.
    pub fn max_priority(&self) -> Option<f64> {
        let m = self.nodes[1].max_priority;
        m.is_finite().then_some(m)
    }

    pub fn min_priority(&self) -> Option<f64> {
        let m = self.nodes[1].min_priority;
        m.is_finite().then_some(m)
    }

    /// Leaf holding the minimum priority (leftmost on ties).
    pub fn argmin_priority(&self) -> Option<usize> {
        let min = self.min_priority()?;
        let mut i = 1;
        while i < self.width {
            i = if self.nodes[2 * i].min_priority == min {
                2 * i
            } else {
                2 * i + 1
            };
        }
        Some(i - self.width)
    }

    /// Upper bound on nodes touched by one prefix search.
    pub fn search_depth(&self) -> usize {
        self.width.trailing_zeros() as usize + 1
    }

    pub fn prefix_search(&self, target: f64, factor: Factor) -> Result<usize> {
        self.prefix_search_counted(target, factor).map(|h| h.leaf)
    }

    /// Finds the leaf whose cumulative-factor interval `[lo, hi)` contains
    /// `target`. Descends left iff `target < left sum`, so boundary values go
    /// right. Only subtrees with positive mass are entered, which keeps
    /// rounding from ever landing on an empty leaf.
    pub fn prefix_search_counted(&self, target: f64, factor: Factor) -> Result<SearchHit> {
        let total = self.total(factor);
        if !(target >= 0.0 && target < total) {
            return Err(AcerError::Domain(format!(
                "prefix-search target {target} outside [0, {total})"
            )));
        }
        let mut i = 1;
        let mut t = target;
        let mut visits = 1;
        while i < self.width {
            let left = self.nodes[2 * i].sum(factor);
            let right = self.nodes[2 * i + 1].sum(factor);
            if t < left || right <= 0.0 {
                i = 2 * i;
                if t >= left {
                    // Rounding pushed us past the left mass; clamp inside it.
                    t = left * (1.0 - f64::EPSILON);
                }
            } else {
                t -= left;
                if t >= right {
                    t = right * (1.0 - f64::EPSILON);
                }
                i = 2 * i + 1;
            }
            visits += 1;
        }
        Ok(SearchHit {
            leaf: i - self.width,
            visits,
        })
    }

    /// Brute-force sums over the leaves, for invariant checks.
    pub fn leaf_sums(&self) -> (f64, f64) {
        self.priorities
            .iter()
            .flatten()
            .fold((0.0, 0.0), |(s, r), &p| {
                let f = p.powf(self.alpha);
                (s + f, r + 1.0 / f)
            })
    }

    /// Checks every internal node against its children.
    pub fn check_consistency(&self, rel_tol: f64) -> bool {
        (1..self.width).all(|i| {
            let n = &self.nodes[i];
            let c = Node::combine(&self.nodes[2 * i], &self.nodes[2 * i + 1]);
            close(n.sampling, c.sampling, rel_tol) && close(n.replacing, c.replacing, rel_tol)
        })
    }
}

fn close(a: f64, b: f64, rel_tol: f64) -> bool {
    (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
