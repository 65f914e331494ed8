//! Persistent ordered sequence with access by key and by rank plus
//! associative range aggregation, worst-case O(log n) per operation.
//!
//! Entries live at the leaves of an immutable weight-balanced binary tree;
//! inner nodes cache subtree size, the subtree's maximum key (for routing)
//! and a user-supplied aggregate. Every update returns a new version and
//! leaves all previously obtained versions untouched, so a snapshot is a
//! clone of one `Arc`.
//!
//! Aggregates may depend on an entry's rank *within the queried range*: the
//! combine step receives the size of the left operand so rank-relative
//! values (e.g. max of `start - rank`) can be shifted when subtrees are
//! joined.

use std::cell::Cell;
use std::cmp::Ordering;
use std::fmt;
use std::marker::PhantomData;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RangeError {
    #[error("rank range [{lo}, {hi}] invalid for size {size}")]
    BadRange { lo: usize, hi: usize, size: usize },
    #[error("rank {rank} out of range for size {size}")]
    BadRank { rank: usize, size: usize },
}

/// An associative aggregation over entries, combined left-to-right. The
/// `left_len` argument to [`Aggregation::combine`] is the number of entries
/// aggregated into `left`, letting rank-relative aggregates shift the right
/// operand.
pub trait Aggregation<K, V> {
    type Agg: Clone;
    fn identity() -> Self::Agg;
    fn leaf(key: &K, value: &V) -> Self::Agg;
    fn combine(left: &Self::Agg, right: &Self::Agg, left_len: usize) -> Self::Agg;
}

/// No aggregation; range queries yield `()`.
#[derive(Clone, Debug, Default)]
pub struct NoAgg;

impl<K, V> Aggregation<K, V> for NoAgg {
    type Agg = ();
    fn identity() {}
    fn leaf(_: &K, _: &V) {}
    fn combine(_: &(), _: &(), _: usize) {}
}

thread_local! {
    static TOUCHES: Cell<u64> = const { Cell::new(0) };
}

fn touch() {
    TOUCHES.with(|t| t.set(t.get() + 1));
}

/// Logical node-touch counter (visits plus constructions) for the current
/// thread; the scaling checks assert on deltas of this.
pub fn node_touches() -> u64 {
    TOUCHES.with(|t| t.get())
}

pub fn reset_node_touches() {
    TOUCHES.with(|t| t.set(0));
}

enum Node<K, V, G> {
    Leaf {
        key: K,
        value: V,
        agg: G,
    },
    Inner {
        size: usize,
        max_key: K,
        agg: G,
        left: Arc<Node<K, V, G>>,
        right: Arc<Node<K, V, G>>,
    },
}

impl<K: Clone, V: Clone, G: Clone> Node<K, V, G> {
    fn size(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Inner { size, .. } => *size,
        }
    }

    fn max_key(&self) -> &K {
        match self {
            Node::Leaf { key, .. } => key,
            Node::Inner { max_key, .. } => max_key,
        }
    }

    fn agg(&self) -> &G {
        match self {
            Node::Leaf { agg, .. } => agg,
            Node::Inner { agg, .. } => agg,
        }
    }
}

type Link<K, V, G> = Arc<Node<K, V, G>>;

/// Persistent ordered map keyed by `K` with rank access and range
/// aggregation by `A`.
pub struct IdSetRq<K, V, A: Aggregation<K, V>> {
    root: Option<Link<K, V, A::Agg>>,
    _agg: PhantomData<A>,
}

impl<K, V, A: Aggregation<K, V>> Clone for IdSetRq<K, V, A> {
    fn clone(&self) -> Self {
        IdSetRq {
            root: self.root.clone(),
            _agg: PhantomData,
        }
    }
}

// Weight-balance: neither child may exceed DELTA times the other; a
// violated side is fixed with a single or double rotation.
const DELTA: usize = 3;
const RATIO: usize = 2;

impl<K: Ord + Clone, V: Clone, A: Aggregation<K, V>> Default for IdSetRq<K, V, A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Ord + Clone, V: Clone, A: Aggregation<K, V>> IdSetRq<K, V, A> {
    pub fn new() -> Self {
        IdSetRq {
            root: None,
            _agg: PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.root.as_ref().map_or(0, |r| r.size())
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    fn leaf(key: K, value: V) -> Link<K, V, A::Agg> {
        touch();
        let agg = A::leaf(&key, &value);
        Arc::new(Node::Leaf { key, value, agg })
    }

    fn mk(l: Link<K, V, A::Agg>, r: Link<K, V, A::Agg>) -> Link<K, V, A::Agg> {
        touch();
        let size = l.size() + r.size();
        let agg = A::combine(l.agg(), r.agg(), l.size());
        let max_key = r.max_key().clone();
        Arc::new(Node::Inner {
            size,
            max_key,
            agg,
            left: l,
            right: r,
        })
    }

    fn balance(l: Link<K, V, A::Agg>, r: Link<K, V, A::Agg>) -> Link<K, V, A::Agg> {
        let (ls, rs) = (l.size(), r.size());
        if ls > DELTA * rs {
            let Node::Inner {
                left: ll,
                right: lr,
                ..
            } = &*l
            else {
                unreachable!("left-heavy node of size > 3 must be inner");
            };
            if lr.size() < RATIO * ll.size() {
                Self::mk(ll.clone(), Self::mk(lr.clone(), r))
            } else {
                let Node::Inner {
                    left: lrl,
                    right: lrr,
                    ..
                } = &**lr
                else {
                    // lr.size >= 2*ll.size >= 2 so it is inner
                    unreachable!()
                };
                Self::mk(
                    Self::mk(ll.clone(), lrl.clone()),
                    Self::mk(lrr.clone(), r),
                )
            }
        } else if rs > DELTA * ls {
            let Node::Inner {
                left: rl,
                right: rr,
                ..
            } = &*r
            else {
                unreachable!("right-heavy node of size > 3 must be inner");
            };
            if rl.size() < RATIO * rr.size() {
                Self::mk(Self::mk(l, rl.clone()), rr.clone())
            } else {
                let Node::Inner {
                    left: rll,
                    right: rlr,
                    ..
                } = &**rl
                else {
                    unreachable!()
                };
                Self::mk(
                    Self::mk(l, rll.clone()),
                    Self::mk(rlr.clone(), rr.clone()),
                )
            }
        } else {
            Self::mk(l, r)
        }
    }

    fn ins(node: &Link<K, V, A::Agg>, key: K, value: V) -> Link<K, V, A::Agg> {
        touch();
        match &**node {
            Node::Leaf { key: k, .. } => match key.cmp(k) {
                Ordering::Equal => Self::leaf(key, value),
                Ordering::Less => Self::mk(Self::leaf(key, value), node.clone()),
                Ordering::Greater => Self::mk(node.clone(), Self::leaf(key, value)),
            },
            Node::Inner { left, right, .. } => {
                if key <= *left.max_key() {
                    Self::balance(Self::ins(left, key, value), right.clone())
                } else {
                    Self::balance(left.clone(), Self::ins(right, key, value))
                }
            }
        }
    }

    fn del(node: &Link<K, V, A::Agg>, key: &K) -> Option<Option<Link<K, V, A::Agg>>> {
        touch();
        match &**node {
            Node::Leaf { key: k, .. } => {
                if k == key {
                    Some(None)
                } else {
                    None
                }
            }
            Node::Inner { left, right, .. } => {
                if *key <= *left.max_key() {
                    match Self::del(left, key)? {
                        None => Some(Some(right.clone())),
                        Some(nl) => Some(Some(Self::balance(nl, right.clone()))),
                    }
                } else {
                    match Self::del(right, key)? {
                        None => Some(Some(left.clone())),
                        Some(nr) => Some(Some(Self::balance(left.clone(), nr))),
                    }
                }
            }
        }
    }

    /// Insert/replace when `value` is `Some`, delete when `None`. Returns
    /// the new version, leaving `self` unchanged. Deleting a missing key
    /// returns an identical version.
    pub fn update(&self, key: K, value: Option<V>) -> Self {
        match value {
            Some(v) => self.insert(key, v),
            None => self.remove(&key),
        }
    }

    pub fn insert(&self, key: K, value: V) -> Self {
        let root = match &self.root {
            None => Self::leaf(key, value),
            Some(r) => Self::ins(r, key, value),
        };
        IdSetRq {
            root: Some(root),
            _agg: PhantomData,
        }
    }

    pub fn remove(&self, key: &K) -> Self {
        match &self.root {
            None => self.clone(),
            Some(r) => match Self::del(r, key) {
                None => self.clone(),
                Some(new_root) => IdSetRq {
                    root: new_root,
                    _agg: PhantomData,
                },
            },
        }
    }

    pub fn contains(&self, key: &K) -> bool {
        self.get(key).is_some()
    }

    /// Access by key: the entry's rank and value.
    pub fn get(&self, key: &K) -> Option<(usize, &V)> {
        let mut node = self.root.as_deref()?;
        let mut rank = 0usize;
        loop {
            touch();
            match node {
                Node::Leaf { key: k, value, .. } => {
                    return if k == key { Some((rank, value)) } else { None };
                }
                Node::Inner { left, right, .. } => {
                    if *key <= *left.max_key() {
                        node = left;
                    } else {
                        rank += left.size();
                        node = right;
                    }
                }
            }
        }
    }

    /// Access by rank: the `rank`-th smallest entry.
    pub fn select(&self, rank: usize) -> Option<(&K, &V)> {
        if rank >= self.len() {
            return None;
        }
        let mut node = self.root.as_deref()?;
        let mut rank = rank;
        loop {
            touch();
            match node {
                Node::Leaf { key, value, .. } => return Some((key, value)),
                Node::Inner { left, right, .. } => {
                    if rank < left.size() {
                        node = left;
                    } else {
                        rank -= left.size();
                        node = right;
                    }
                }
            }
        }
    }

    /// Number of keys on which the (monotone, true-then-false) predicate
    /// holds; equivalently the rank of the first key where it fails.
    pub fn partition_point(&self, pred: impl Fn(&K) -> bool) -> usize {
        let mut node = match self.root.as_deref() {
            None => return 0,
            Some(n) => n,
        };
        let mut acc = 0usize;
        loop {
            touch();
            match node {
                Node::Leaf { key, .. } => {
                    return acc + usize::from(pred(key));
                }
                Node::Inner { left, right, .. } => {
                    if pred(left.max_key()) {
                        acc += left.size();
                        node = right;
                    } else {
                        node = left;
                    }
                }
            }
        }
    }

    fn agg_range(node: &Link<K, V, A::Agg>, lo: usize, hi: usize) -> A::Agg {
        touch();
        if lo == 0 && hi == node.size() {
            return node.agg().clone();
        }
        match &**node {
            Node::Leaf { agg, .. } => agg.clone(),
            Node::Inner { left, right, .. } => {
                let ls = left.size();
                if hi <= ls {
                    Self::agg_range(left, lo, hi)
                } else if lo >= ls {
                    Self::agg_range(right, lo - ls, hi - ls)
                } else {
                    let la = Self::agg_range(left, lo, ls);
                    let ra = Self::agg_range(right, 0, hi - ls);
                    A::combine(&la, &ra, ls - lo)
                }
            }
        }
    }

    /// Aggregate over ranks `lo..=hi` (inclusive), with rank-relative parts
    /// measured from `lo`.
    pub fn range_agg(&self, lo: usize, hi: usize) -> Result<A::Agg, RangeError> {
        let size = self.len();
        if lo > hi || hi >= size {
            return Err(RangeError::BadRange { lo, hi, size });
        }
        Ok(Self::agg_range(self.root.as_ref().unwrap(), lo, hi + 1))
    }

    /// Aggregate over the half-open rank range `lo..hi`; empty ranges give
    /// the identity.
    pub fn range_agg_half_open(&self, lo: usize, hi: usize) -> Result<A::Agg, RangeError> {
        let size = self.len();
        if lo > hi || hi > size {
            return Err(RangeError::BadRange { lo, hi, size });
        }
        if lo == hi {
            return Ok(A::identity());
        }
        Ok(Self::agg_range(self.root.as_ref().unwrap(), lo, hi))
    }

    pub fn iter(&self) -> Iter<'_, K, V, A::Agg> {
        let mut stack = Vec::new();
        if let Some(r) = self.root.as_deref() {
            stack.push(r);
        }
        Iter { stack }
    }

    pub fn height(&self) -> usize {
        fn h<K, V, G>(n: &Node<K, V, G>) -> usize {
            match n {
                Node::Leaf { .. } => 1,
                Node::Inner { left, right, .. } => 1 + h(left).max(h(right)),
            }
        }
        self.root.as_deref().map_or(0, h)
    }

    /// Full structural verification: key order, size caches, weight balance
    /// and aggregate caches (recomputed bottom-up). Test support.
    pub fn check_consistency(&self) -> bool
    where
        A::Agg: PartialEq,
    {
        fn go<K: Ord + Clone, V: Clone, A: Aggregation<K, V>>(
            n: &Node<K, V, A::Agg>,
        ) -> Option<(usize, K, K, A::Agg)>
        where
            A::Agg: PartialEq,
        {
            match n {
                Node::Leaf { key, value, agg } => {
                    let expect = A::leaf(key, value);
                    if *agg != expect {
                        return None;
                    }
                    Some((1, key.clone(), key.clone(), expect))
                }
                Node::Inner {
                    size,
                    max_key,
                    agg,
                    left,
                    right,
                } => {
                    let (lsz, lmin, lmax, lagg) = go::<K, V, A>(left)?;
                    let (rsz, rmin, rmax, ragg) = go::<K, V, A>(right)?;
                    if lmax >= rmin || *size != lsz + rsz || *max_key != rmax {
                        return None;
                    }
                    if lsz > DELTA * rsz || rsz > DELTA * lsz {
                        return None;
                    }
                    let expect = A::combine(&lagg, &ragg, lsz);
                    if *agg != expect {
                        return None;
                    }
                    Some((lsz + rsz, lmin, rmax, expect))
                }
            }
        }
        match self.root.as_deref() {
            None => true,
            Some(r) => go::<K, V, A>(r).is_some(),
        }
    }
}

impl<K: Ord + Clone + fmt::Debug, V: Clone + fmt::Debug, A: Aggregation<K, V>> fmt::Debug
    for IdSetRq<K, V, A>
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

pub struct Iter<'a, K, V, G> {
    stack: Vec<&'a Node<K, V, G>>,
}

impl<'a, K, V, G> Iterator for Iter<'a, K, V, G> {
    type Item = (&'a K, &'a V);
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.stack.pop()? {
                Node::Leaf { key, value, .. } => return Some((key, value)),
                Node::Inner { left, right, .. } => {
                    self.stack.push(right);
                    self.stack.push(left);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct MaxAgg;
    impl Aggregation<i64, i64> for MaxAgg {
        type Agg = Option<i64>;
        fn identity() -> Option<i64> {
            None
        }
        fn leaf(_: &i64, v: &i64) -> Option<i64> {
            Some(*v)
        }
        fn combine(l: &Option<i64>, r: &Option<i64>, _: usize) -> Option<i64> {
            match (l, r) {
                (Some(a), Some(b)) => Some(*a.max(b)),
                (Some(a), None) => Some(*a),
                (None, b) => *b,
            }
        }
    }

    type Set = IdSetRq<i64, i64, MaxAgg>;

    #[test]
    fn update_examples() {
        let s = Set::new().insert(3, 30).insert(1, 10).insert(2, 20);
        let keys: Vec<i64> = s.iter().map(|(k, _)| *k).collect();
        assert_eq!(keys, vec![1, 2, 3]);

        let s2 = s.remove(&2);
        assert_eq!(s2.iter().map(|(k, _)| *k).collect::<Vec<_>>(), vec![1, 3]);
        // old version untouched
        assert_eq!(s.iter().map(|(k, _)| *k).collect::<Vec<_>>(), vec![1, 2, 3]);
        // idempotent delete
        let s3 = s.remove(&9);
        assert_eq!(s3.iter().map(|(k, _)| *k).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn access_examples() {
        let s = Set::new().insert(1, 10).insert(2, 20).insert(3, 30);
        assert_eq!(s.select(0), Some((&1, &10)));
        assert_eq!(s.get(&3), Some((2, &30)));
        assert_eq!(s.get(&4), None);
        assert_eq!(s.select(3), None);
    }

    #[test]
    fn range_agg_examples() {
        let s = Set::new().insert(0, 5).insert(1, 1).insert(2, 7);
        assert_eq!(s.range_agg(0, 2).unwrap(), Some(7));
        assert_eq!(s.range_agg(1, 1).unwrap(), Some(1));
        assert!(s.range_agg(1, 3).is_err());
    }

    #[test]
    fn update_replaces() {
        let s = Set::new().insert(1, 10).insert(1, 11);
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(&1), Some((0, &11)));
    }

    #[test]
    fn partition_point_works() {
        let s = (0..100).fold(Set::new(), |s, i| s.insert(i * 2, i));
        assert_eq!(s.partition_point(|k| *k < 50), 25);
        assert_eq!(s.partition_point(|k| *k <= 50), 26);
        assert_eq!(s.partition_point(|_| false), 0);
        assert_eq!(s.partition_point(|_| true), 100);
    }

    #[test]
    fn balance_and_height() {
        let mut s = Set::new();
        for i in 0..4096 {
            s = s.insert(i, i);
        }
        assert!(s.check_consistency());
        // sorted-order insertion is the classic worst case
        let n = s.len() as f64;
        assert!((s.height() as f64) <= 2.5 * n.log2() + 3.0, "h={}", s.height());
        for i in (0..4096).step_by(2) {
            s = s.remove(&i);
        }
        assert!(s.check_consistency());
        assert_eq!(s.len(), 2048);
    }
}
