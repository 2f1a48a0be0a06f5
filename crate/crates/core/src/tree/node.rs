use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::ConstructionError;

pub const MAX_DEPTH: u32 = 32;

/// A node of `2^{<ω}` of length at most [`MAX_DEPTH`].
///
/// The derived order is `<_L` extended to a total order: a prefix comes
/// before its extensions, and at the first differing bit `1` comes before
/// `0`. Bit `i` is stored inverted at position `31 - i` so that plain
/// `(key, len)` comparison gives exactly that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Node {
    key: u64,
    len: u8,
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.key, self.len).cmp(&(other.key, other.len))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Node {
    pub const ROOT: Node = Node { key: 0, len: 0 };

    pub fn len(self) -> u32 {
        self.len as u32
    }

    pub fn is_root(self) -> bool {
        self.len == 0
    }

    pub fn bit(self, i: u32) -> u8 {
        assert!(i < self.len(), "bit {i} of a node of length {}", self.len);
        1 - ((self.key >> (31 - i)) & 1) as u8
    }

    pub fn last_bit(self) -> Option<u8> {
        (self.len > 0).then(|| self.bit(self.len() - 1))
    }

    pub fn child(self, b: u8) -> Node {
        assert!(self.len() < MAX_DEPTH, "tree depth exceeded");
        let stored = (1 - b as u64) << (31 - self.len());
        Node { key: self.key | stored, len: self.len + 1 }
    }

    pub fn prefix(self, l: u32) -> Node {
        assert!(l <= self.len());
        let mask = if l == 0 { 0 } else { (u64::MAX << (32 - l)) & 0xFFFF_FFFF };
        Node { key: self.key & mask, len: l as u8 }
    }

    /// `self ⊆ other`.
    pub fn is_prefix_of(self, other: Node) -> bool {
        self.len <= other.len && other.prefix(self.len()) == self
    }

    /// Length of the longest common prefix.
    pub fn common(self, other: Node) -> u32 {
        let n = self.len.min(other.len) as u32;
        (0..n).find(|&i| self.bit(i) != other.bit(i)).unwrap_or(n)
    }

    /// `self <_L other` by branching: neither is a prefix of the other and
    /// `self` takes 1 where `other` takes 0.
    pub fn branches_left_of(self, other: Node) -> bool {
        let c = self.common(other);
        c < self.len() && c < other.len() && self.bit(c) == 1
    }

    /// `self <_L other`: a proper prefix, or branching left.
    pub fn left_of(self, other: Node) -> bool {
        self != other && self < other
    }

    /// First node after the subtree rooted here, as a range bound.
    pub fn subtree_end(self) -> Node {
        Node { key: self.key + (1u64 << (32 - self.len())), len: 0 }
    }

    pub fn is_square_len(self) -> bool {
        is_square(self.len())
    }

    pub fn is_r_node(self) -> bool {
        self.len > 0 && self.is_square_len()
    }

    pub fn is_a_node(self) -> bool {
        self.len > 0 && !self.is_square_len()
    }

    pub fn is_positive(self) -> bool {
        self.is_a_node() && self.last_bit() == Some(1)
    }

    /// Balls rest only at R-nodes and positive A-nodes.
    pub fn is_resting(self) -> bool {
        self.is_r_node() || self.is_positive()
    }

    /// The greatest R-node strictly below `self` in length, or the root.
    pub fn r_parent(self) -> Node {
        let j = isqrt(self.len().saturating_sub(1));
        self.prefix(if self.is_root() { 0 } else { j * j })
    }

    pub fn prefixes(self) -> impl Iterator<Item = Node> {
        (0..=self.len()).map(move |l| self.prefix(l))
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len == 0 {
            return f.write_str("λ");
        }
        for i in 0..self.len() {
            write!(f, "{}", self.bit(i))?;
        }
        Ok(())
    }
}

impl FromStr for Node {
    type Err = ConstructionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConstructionError::NotAQuestion { node: s.to_string() };
        if s == "λ" || s.is_empty() {
            return Ok(Node::ROOT);
        }
        if s.len() > MAX_DEPTH as usize {
            return Err(bad());
        }
        let mut n = Node::ROOT;
        for c in s.chars() {
            n = n.child(match c {
                '0' => 0,
                '1' => 1,
                _ => return Err(bad()),
            });
        }
        Ok(n)
    }
}

impl serde::Serialize for Node {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub fn isqrt(n: u32) -> u32 {
    let mut r = (n as f64).sqrt() as u32;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

pub fn is_square(n: u32) -> bool {
    let r = isqrt(n);
    r * r == n
}

/// The question coded at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Question {
    /// "Is `(W_j ∩ R̃_δ) \ A` infinite?"
    R { j: u64, delta: Node },
    /// "Does `W_j ⊔ (W_{e_b} ∩ R_β) = R_β`?"
    T { j: u64, k: u32, b: u8, beta: Node },
}

/// Decodes the question at `node` from its length.
///
/// Length `j² - 1` codes an R-question; lengths `j² + 2k - 2` and
/// `j² + 2k - 1` (`1 <= k <= j`) code T-questions about `e_0` and `e_1`.
/// Every node, including R-nodes and the root, falls under one of these.
pub fn question_at(node: Node) -> Question {
    let l = node.len();
    if is_square(l + 1) {
        let j = isqrt(l + 1);
        return Question::R { j: j as u64, delta: node.prefix((j - 1) * (j - 1)) };
    }
    let j = isqrt(l);
    let off = l - j * j;
    let k = off / 2 + 1;
    Question::T { j: j as u64, k, b: (off % 2) as u8, beta: node.prefix(k * k) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(s: &str) -> Node {
        s.parse().unwrap()
    }

    #[test]
    fn display_roundtrip() {
        for s in ["λ", "0", "1", "0110", "1111111"] {
            assert_eq!(n(s).to_string(), s);
        }
    }

    #[test]
    fn left_order() {
        assert!(n("1").left_of(n("0")));
        assert!(n("0").left_of(n("01")));
        assert!(n("01").left_of(n("00")));
        assert!(n("01").branches_left_of(n("00")));
        assert!(!n("0").branches_left_of(n("01")));
        assert!(n("10").left_of(n("0")));
    }

    #[test]
    fn kinds() {
        assert!(n("0").is_r_node());
        assert!(n("01").is_positive());
        assert!(!n("00").is_positive());
        assert!(n("0000").is_r_node());
        assert_eq!(n("000001").r_parent(), n("0000"));
        assert_eq!(n("0000").r_parent(), n("0"));
        assert_eq!(n("0").r_parent(), Node::ROOT);
    }

    #[test]
    fn question_lengths() {
        let q = |l: usize| question_at(n(&"0".repeat(l)));
        assert_eq!(q(3), Question::R { j: 2, delta: n("0") });
        assert_eq!(q(0), Question::R { j: 1, delta: Node::ROOT });
        assert_eq!(q(6), Question::T { j: 2, k: 2, b: 0, beta: n("0000") });
        assert_eq!(q(7), Question::T { j: 2, k: 2, b: 1, beta: n("0000") });
        assert_eq!(q(4), Question::T { j: 2, k: 1, b: 0, beta: n("0") });
        assert_eq!(q(8), Question::R { j: 3, delta: n("0000") });
        assert_eq!(q(10), Question::T { j: 3, k: 1, b: 1, beta: n("0") });
        // 2j T-question nodes strictly between the R-question nodes.
        for j in 1..5u32 {
            let t = ((j * j)..((j + 1) * (j + 1) - 1)).filter(|&l| matches!(q(l as usize), Question::T { .. })).count();
            assert_eq!(t as u32, 2 * j);
        }
    }

    proptest! {
        #[test]
        fn order_is_left_or_prefix(a in 0u32..(1 << 6), la in 0u32..7, b in 0u32..(1 << 6), lb in 0u32..7) {
            let mk = |bits: u32, l: u32| (0..l).fold(Node::ROOT, |nd, i| nd.child(((bits >> i) & 1) as u8));
            let (x, y) = (mk(a, la), mk(b, lb));
            if x != y {
                let expected = (x.is_prefix_of(y)) || x.branches_left_of(y);
                prop_assert_eq!(x.left_of(y), expected);
            }
            if !x.is_prefix_of(y) {
                prop_assert_eq!(x.subtree_end() <= y || y < x, true);
            } else {
                prop_assert!(y < x.subtree_end());
            }
        }
    }
}
