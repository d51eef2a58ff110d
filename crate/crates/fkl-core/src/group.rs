//! Group descriptors and group elements for `Z^d` and the free group `F_r`.
//!
//! Elements of `Z^d` are exponent vectors; elements of `F_r` are reduced
//! words stored run-length encoded as `(generator, exponent)` runs.
//! Reduction is enforced at construction so equal elements compare equal.

use crate::error::{FklError, Result};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupDescriptor {
    /// The free abelian group of the given rank.
    Zd(usize),
    /// The free group of the given rank.
    Free(usize),
}

impl GroupDescriptor {
    pub fn rank(&self) -> usize {
        match *self {
            GroupDescriptor::Zd(d) => d,
            GroupDescriptor::Free(r) => r,
        }
    }

    /// Deterministic generator names: x,y,z,w then x1..xd for Z^d;
    /// a,b,c then g1..gr for F_r.
    pub fn generator_name(&self, index: usize) -> String {
        match *self {
            GroupDescriptor::Zd(d) => {
                debug_assert!(index < d);
                if d <= 4 {
                    ["x", "y", "z", "w"][index].to_string()
                } else {
                    format!("x{}", index + 1)
                }
            }
            GroupDescriptor::Free(r) => {
                debug_assert!(index < r);
                if r <= 3 {
                    ["a", "b", "c"][index].to_string()
                } else {
                    format!("g{}", index + 1)
                }
            }
        }
    }

    /// Inverse of `generator_name`.
    pub fn generator_index(&self, name: &str) -> Option<usize> {
        let rank = self.rank();
        match *self {
            GroupDescriptor::Zd(d) => {
                if d <= 4 {
                    ["x", "y", "z", "w"][..d].iter().position(|&n| n == name)
                } else {
                    name.strip_prefix('x')
                        .and_then(|s| s.parse::<usize>().ok())
                        .filter(|&i| i >= 1 && i <= rank)
                        .map(|i| i - 1)
                }
            }
            GroupDescriptor::Free(r) => {
                if r <= 3 {
                    ["a", "b", "c"][..r].iter().position(|&n| n == name)
                } else {
                    name.strip_prefix('g')
                        .and_then(|s| s.parse::<usize>().ok())
                        .filter(|&i| i >= 1 && i <= rank)
                        .map(|i| i - 1)
                }
            }
        }
    }
}

impl fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GroupDescriptor::Zd(d) => write!(f, "Z^{}", d),
            GroupDescriptor::Free(r) => write!(f, "F_{}", r),
        }
    }
}

/// A group element, tied to a [`GroupDescriptor`] by context.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupElement {
    /// Exponent vector of length d.
    Zd(Vec<i64>),
    /// Reduced word: runs of (generator index 0-based, nonzero exponent),
    /// adjacent runs never share a generator.
    Free(Vec<(usize, i64)>),
}

impl GroupElement {
    pub fn identity(group: GroupDescriptor) -> Self {
        match group {
            GroupDescriptor::Zd(d) => GroupElement::Zd(vec![0; d]),
            GroupDescriptor::Free(_) => GroupElement::Free(Vec::new()),
        }
    }

    pub fn generator(group: GroupDescriptor, index: usize, exponent: i64) -> Result<Self> {
        if index >= group.rank() {
            return Err(FklError::InvalidArgument(format!(
                "generator index {} out of range for {}",
                index + 1,
                group
            )));
        }
        match group {
            GroupDescriptor::Zd(d) => {
                let mut v = vec![0; d];
                v[index] = exponent;
                Ok(GroupElement::Zd(v))
            }
            GroupDescriptor::Free(_) => {
                if exponent == 0 {
                    Ok(GroupElement::Free(Vec::new()))
                } else {
                    Ok(GroupElement::Free(vec![(index, exponent)]))
                }
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            GroupElement::Zd(v) => v.iter().all(|&e| e == 0),
            GroupElement::Free(w) => w.is_empty(),
        }
    }

    pub fn belongs_to(&self, group: GroupDescriptor) -> bool {
        match (self, group) {
            (GroupElement::Zd(v), GroupDescriptor::Zd(d)) => v.len() == d,
            (GroupElement::Free(w), GroupDescriptor::Free(r)) => {
                w.iter().all(|&(g, e)| g < r && e != 0)
            }
            _ => false,
        }
    }

    /// Group multiplication with reduction.
    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        match (self, other) {
            (GroupElement::Zd(a), GroupElement::Zd(b)) => {
                debug_assert_eq!(a.len(), b.len());
                GroupElement::Zd(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            (GroupElement::Free(a), GroupElement::Free(b)) => {
                let mut runs: Vec<(usize, i64)> = a.clone();
                for &(g, e) in b {
                    push_run(&mut runs, g, e);
                }
                GroupElement::Free(runs)
            }
            _ => panic!("group element family mismatch"),
        }
    }

    pub fn inverse(&self) -> GroupElement {
        match self {
            GroupElement::Zd(v) => GroupElement::Zd(v.iter().map(|&e| -e).collect()),
            GroupElement::Free(w) => {
                GroupElement::Free(w.iter().rev().map(|&(g, e)| (g, -e)).collect())
            }
        }
    }

    /// Word length: sum of |exponents| for free words, l1 of the exponent
    /// vector for Z^d.
    pub fn length(&self) -> u64 {
        match self {
            GroupElement::Zd(v) => v.iter().map(|e| e.unsigned_abs()).sum(),
            GroupElement::Free(w) => w.iter().map(|(_, e)| e.unsigned_abs()).sum(),
        }
    }

    /// Canonical printer. The identity prints as `e`.
    pub fn display(&self, group: GroupDescriptor) -> String {
        if self.is_identity() {
            return "e".to_string();
        }
        match self {
            GroupElement::Zd(v) => {
                let mut parts = Vec::new();
                for (i, &e) in v.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    let name = group.generator_name(i);
                    if e == 1 {
                        parts.push(name);
                    } else {
                        parts.push(format!("{}^{}", name, e));
                    }
                }
                parts.join("*")
            }
            GroupElement::Free(w) => {
                let mut parts = Vec::new();
                for &(g, e) in w {
                    let name = group.generator_name(g);
                    if e == 1 {
                        parts.push(name);
                    } else {
                        parts.push(format!("{}^{}", name, e));
                    }
                }
                parts.join("*")
            }
        }
    }
}

fn push_run(runs: &mut Vec<(usize, i64)>, g: usize, e: i64) {
    if e == 0 {
        return;
    }
    if let Some(last) = runs.last_mut() {
        if last.0 == g {
            last.1 += e;
            if last.1 == 0 {
                runs.pop();
            }
            return;
        }
    }
    runs.push((g, e));
}

/// Ordering used by the canonical printer: lexicographic by exponent vector
/// for Z^d, length-then-lex for free words.
pub fn canonical_order(a: &GroupElement, b: &GroupElement) -> std::cmp::Ordering {
    match (a, b) {
        (GroupElement::Zd(x), GroupElement::Zd(y)) => x.cmp(y),
        (GroupElement::Free(_), GroupElement::Free(_)) => {
            a.length().cmp(&b.length()).then_with(|| a.cmp(b))
        }
        _ => panic!("group element family mismatch"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_reduction_cancels() {
        let g = GroupDescriptor::Free(2);
        let a = GroupElement::generator(g, 0, 1).unwrap();
        let ainv = GroupElement::generator(g, 0, -1).unwrap();
        assert!(a.mul(&ainv).is_identity());
        let b = GroupElement::generator(g, 1, 1).unwrap();
        let ab = a.mul(&b);
        assert_eq!(ab, GroupElement::Free(vec![(0, 1), (1, 1)]));
        let back = ab.mul(&b.inverse()).mul(&ainv);
        assert!(back.is_identity());
    }

    #[test]
    fn zd_add_exponents() {
        let g = GroupDescriptor::Zd(2);
        let x = GroupElement::generator(g, 0, 3).unwrap();
        let y = GroupElement::generator(g, 1, -1).unwrap();
        assert_eq!(x.mul(&y), GroupElement::Zd(vec![3, -1]));
    }

    #[test]
    fn generator_names_round_trip() {
        let g5 = GroupDescriptor::Zd(5);
        assert_eq!(g5.generator_name(0), "x1");
        assert_eq!(g5.generator_index("x5"), Some(4));
        let f2 = GroupDescriptor::Free(2);
        assert_eq!(f2.generator_name(1), "b");
        assert_eq!(f2.generator_index("b"), Some(1));
        assert_eq!(f2.generator_index("c"), None);
    }
}
