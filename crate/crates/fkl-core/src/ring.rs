//! Exact arithmetic in the integral group ring `Z(G)` and in matrices over
//! it, for `G = Z^d` or `G = F_r`.
//!
//! Coefficients are arbitrary-precision integers throughout; trace moments
//! overflow 64 bits already at modest powers. Multiplication reduces words
//! eagerly, so supports stay canonical. Support growth is guarded by a
//! configurable ceiling (`DEFAULT_SUPPORT_CEILING`).

use crate::error::{FklError, Result};
use crate::group::{canonical_order, GroupDescriptor, GroupElement};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::collections::HashMap;
use std::fmt;

/// Abort threshold for convolution support growth (number of stored terms).
pub const DEFAULT_SUPPORT_CEILING: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupRingElement {
    group: GroupDescriptor,
    terms: HashMap<GroupElement, BigInt>,
}

impl GroupRingElement {
    pub fn zero(group: GroupDescriptor) -> Self {
        GroupRingElement {
            group,
            terms: HashMap::new(),
        }
    }

    pub fn one(group: GroupDescriptor) -> Self {
        Self::from_term(group, GroupElement::identity(group), BigInt::one())
    }

    pub fn constant(group: GroupDescriptor, c: impl Into<BigInt>) -> Self {
        Self::from_term(group, GroupElement::identity(group), c.into())
    }

    pub fn from_term(group: GroupDescriptor, g: GroupElement, c: BigInt) -> Self {
        let mut terms = HashMap::new();
        if !c.is_zero() {
            debug_assert!(g.belongs_to(group));
            terms.insert(g, c);
        }
        GroupRingElement { group, terms }
    }

    pub fn from_terms<I>(group: GroupDescriptor, it: I) -> Self
    where
        I: IntoIterator<Item = (GroupElement, BigInt)>,
    {
        let mut f = Self::zero(group);
        for (g, c) in it {
            f.add_term(g, c);
        }
        f
    }

    pub fn group(&self) -> GroupDescriptor {
        self.group
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn support_size(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, g: &GroupElement) -> BigInt {
        self.terms.get(g).cloned().unwrap_or_else(BigInt::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&GroupElement, &BigInt)> {
        self.terms.iter()
    }

    /// Support in canonical print order.
    pub fn sorted_terms(&self) -> Vec<(&GroupElement, &BigInt)> {
        let mut v: Vec<_> = self.terms.iter().collect();
        v.sort_by(|a, b| canonical_order(a.0, b.0));
        v
    }

    pub fn add_term(&mut self, g: GroupElement, c: BigInt) {
        if c.is_zero() {
            return;
        }
        debug_assert!(g.belongs_to(self.group));
        use std::collections::hash_map::Entry;
        match self.terms.entry(g) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    fn check_group(&self, other: &GroupRingElement) -> Result<()> {
        if self.group != other.group {
            return Err(FklError::GroupMismatch(format!(
                "{} vs {}",
                self.group, other.group
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &GroupRingElement) -> Result<GroupRingElement> {
        self.check_group(other)?;
        let mut out = self.clone();
        for (g, c) in &other.terms {
            out.add_term(g.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> GroupRingElement {
        GroupRingElement {
            group: self.group,
            terms: self.terms.iter().map(|(g, c)| (g.clone(), -c)).collect(),
        }
    }

    pub fn sub(&self, other: &GroupRingElement) -> Result<GroupRingElement> {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &BigInt) -> GroupRingElement {
        if c.is_zero() {
            return Self::zero(self.group);
        }
        GroupRingElement {
            group: self.group,
            terms: self.terms.iter().map(|(g, a)| (g.clone(), a * c)).collect(),
        }
    }

    /// Convolution product.
    pub fn multiply(&self, other: &GroupRingElement) -> Result<GroupRingElement> {
        self.multiply_with_ceiling(other, DEFAULT_SUPPORT_CEILING)
    }

    pub fn multiply_with_ceiling(
        &self,
        other: &GroupRingElement,
        ceiling: usize,
    ) -> Result<GroupRingElement> {
        self.check_group(other)?;
        let mut out = GroupRingElement::zero(self.group);
        // iterate over the smaller support on the outside
        let (small, big) = if self.support_size() <= other.support_size() {
            (self, other)
        } else {
            (other, self)
        };
        let left_is_small = std::ptr::eq(small, self);
        for (a, ca) in &small.terms {
            for (b, cb) in &big.terms {
                let g = if left_is_small { a.mul(b) } else { b.mul(a) };
                let entry = out.terms.entry(g).or_insert_with(BigInt::zero);
                *entry += ca * cb;
            }
            if out.terms.len() > ceiling {
                return Err(FklError::ceiling(
                    "support-size",
                    format!("convolution support exceeded {} terms", ceiling),
                ));
            }
        }
        out.terms.retain(|_, c| !c.is_zero());
        Ok(out)
    }

    /// The adjoint `f* = sum conj(a_{g^-1}) g`; coefficients are integers so
    /// this just reverses group elements.
    pub fn adjoint(&self) -> GroupRingElement {
        GroupRingElement {
            group: self.group,
            terms: self
                .terms
                .iter()
                .map(|(g, c)| (g.inverse(), c.clone()))
                .collect(),
        }
    }

    /// The normalized trace: coefficient at the identity.
    pub fn trace_tau(&self) -> BigInt {
        self.coefficient(&GroupElement::identity(self.group))
    }

    pub fn l1_norm(&self) -> BigInt {
        self.terms.values().map(|c| c.abs()).sum()
    }

    pub fn linf_coeff(&self) -> BigInt {
        self.terms
            .values()
            .map(|c| c.abs())
            .max()
            .unwrap_or_else(BigInt::zero)
    }

    /// Max word length over the support.
    pub fn max_word_length(&self) -> u64 {
        self.terms.keys().map(|g| g.length()).max().unwrap_or(0)
    }

    pub fn display(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, (g, c)) in self.sorted_terms().into_iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if i == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            if g.is_identity() {
                out.push_str(&abs.to_string());
            } else if abs.is_one() {
                out.push_str(&g.display(self.group));
            } else {
                out.push_str(&format!("{}*{}", abs, g.display(self.group)));
            }
        }
        out
    }
}

impl fmt::Display for GroupRingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

/// A rectangular matrix over `Z(G)`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupRingMatrix {
    group: GroupDescriptor,
    rows: usize,
    cols: usize,
    entries: Vec<GroupRingElement>,
}

impl GroupRingMatrix {
    pub fn new(group: GroupDescriptor, rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        GroupRingMatrix {
            group,
            rows,
            cols,
            entries: vec![GroupRingElement::zero(group); rows * cols],
        }
    }

    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: Vec<GroupRingElement>,
    ) -> Result<Self> {
        assert_eq!(entries.len(), rows * cols);
        let group = entries[0].group();
        if entries.iter().any(|e| e.group() != group) {
            return Err(FklError::GroupMismatch(
                "matrix entries over different groups".into(),
            ));
        }
        Ok(GroupRingMatrix {
            group,
            rows,
            cols,
            entries,
        })
    }

    pub fn scalar(group: GroupDescriptor, n: usize, f: &GroupRingElement) -> Self {
        let mut m = Self::new(group, n, n);
        for i in 0..n {
            *m.entry_mut(i, i) = f.clone();
        }
        m
    }

    pub fn from_element(f: GroupRingElement) -> Self {
        let group = f.group();
        GroupRingMatrix {
            group,
            rows: 1,
            cols: 1,
            entries: vec![f],
        }
    }

    pub fn identity(group: GroupDescriptor, n: usize) -> Self {
        Self::scalar(group, n, &GroupRingElement::one(group))
    }

    pub fn group(&self) -> GroupDescriptor {
        self.group
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &GroupRingElement {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut GroupRingElement {
        &mut self.entries[i * self.cols + j]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Adjoint: transpose with entrywise `*`.
    pub fn mat_adjoint(&self) -> GroupRingMatrix {
        let mut out = GroupRingMatrix::new(self.group, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.entry_mut(j, i) = self.entry(i, j).adjoint();
            }
        }
        out
    }

    /// Transpose without the entrywise adjoint.
    pub fn transpose_plain(&self) -> GroupRingMatrix {
        let mut out = GroupRingMatrix::new(self.group, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.entry_mut(j, i) = self.entry(i, j).clone();
            }
        }
        out
    }

    pub fn mat_multiply(&self, other: &GroupRingMatrix) -> Result<GroupRingMatrix> {
        self.mat_multiply_with_ceiling(other, DEFAULT_SUPPORT_CEILING)
    }

    pub fn mat_multiply_with_ceiling(
        &self,
        other: &GroupRingMatrix,
        ceiling: usize,
    ) -> Result<GroupRingMatrix> {
        if self.group != other.group {
            return Err(FklError::GroupMismatch("matrix product".into()));
        }
        if self.cols != other.rows {
            return Err(FklError::ShapeMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = GroupRingMatrix::new(self.group, self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = GroupRingElement::zero(self.group);
                for k in 0..self.cols {
                    let p = self
                        .entry(i, k)
                        .multiply_with_ceiling(other.entry(k, j), ceiling)?;
                    acc = acc.add(&p)?;
                    if acc.support_size() > ceiling {
                        return Err(FklError::ceiling(
                            "support-size",
                            format!("matrix entry support exceeded {} terms", ceiling),
                        ));
                    }
                }
                *out.entry_mut(i, j) = acc;
            }
        }
        Ok(out)
    }

    pub fn mat_add(&self, other: &GroupRingMatrix) -> Result<GroupRingMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(FklError::ShapeMismatch("matrix sum".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.entries.iter_mut().zip(&other.entries) {
            *a = a.add(b)?;
        }
        Ok(out)
    }

    pub fn mat_scale(&self, c: &BigInt) -> GroupRingMatrix {
        let mut out = self.clone();
        for e in &mut out.entries {
            *e = e.scale(c);
        }
        out
    }

    /// `Tr (x) tau`: sum of diagonal identity coefficients.
    pub fn mat_trace(&self) -> Result<BigInt> {
        if !self.is_square() {
            return Err(FklError::ShapeMismatch(format!(
                "trace of {}x{} matrix",
                self.rows, self.cols
            )));
        }
        Ok((0..self.rows).map(|i| self.entry(i, i).trace_tau()).sum())
    }

    /// Trace of a product `Tr (x) tau (A B)` without forming `A B`:
    /// sum over i,k,g of `A_{ik}^(g) B_{ki}^(g^-1)`.
    pub fn trace_of_product(&self, other: &GroupRingMatrix) -> Result<BigInt> {
        if self.group != other.group {
            return Err(FklError::GroupMismatch("trace of product".into()));
        }
        if self.cols != other.rows || self.rows != other.cols {
            return Err(FklError::ShapeMismatch("trace of product".into()));
        }
        let mut acc = BigInt::zero();
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.entry(i, k);
                let b = other.entry(k, i);
                let (small, big) = if a.support_size() <= b.support_size() {
                    (a, b)
                } else {
                    (b, a)
                };
                for (g, c) in small.terms() {
                    let d = big.coefficient(&g.inverse());
                    if !d.is_zero() {
                        acc += c * d;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// `moment(F, k) = Tr (x) tau((F* F)^k)`, exactly.
    pub fn moment(&self, k: u32) -> Result<BigInt> {
        self.moment_with_ceiling(k, DEFAULT_SUPPORT_CEILING)
    }

    pub fn moment_with_ceiling(&self, k: u32, ceiling: usize) -> Result<BigInt> {
        if k == 0 {
            return Err(FklError::InvalidArgument("moment requires k >= 1".into()));
        }
        Ok(self
            .moments_up_to(k, ceiling)?
            .pop()
            .expect("k >= 1 so the moment list is nonempty"))
    }

    /// All moments `Tr (x) tau((F*F)^j)` for `j = 1..=k_max`.
    ///
    /// Powers of `G = F*F` are formed only up to `ceil(k_max/2)`; the moment
    /// of order `a+b` is recovered as the trace of `G^a G^b` via
    /// [`Self::trace_of_product`]. This roughly halves the support blow-up.
    pub fn moments_up_to(&self, k_max: u32, ceiling: usize) -> Result<Vec<BigInt>> {
        let gram = self.mat_adjoint().mat_multiply_with_ceiling(self, ceiling)?;
        moments_of_power_sequence(&gram, k_max, ceiling)
    }

    /// Coefficient-norm bound on the operator norm of the left regular
    /// representation of this matrix and of every sofic lift: the max of
    /// max-row and max-column sums of entry l1 masses.
    pub fn mat_l1_bound(&self) -> BigInt {
        let l1 = |i: usize, j: usize| self.entry(i, j).l1_norm();
        let row_max = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| l1(i, j)).sum::<BigInt>())
            .max()
            .unwrap_or_else(BigInt::zero);
        let col_max = (0..self.cols)
            .map(|j| (0..self.rows).map(|i| l1(i, j)).sum::<BigInt>())
            .max()
            .unwrap_or_else(BigInt::zero);
        row_max.max(col_max)
    }

    /// Max word length over all entry supports.
    pub fn max_word_length(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| e.max_word_length())
            .max()
            .unwrap_or(0)
    }

    pub fn display(&self) -> String {
        let rows: Vec<String> = (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self.entry(i, j).display())
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .collect();
        format!("[{}]", rows.join("; "))
    }
}

/// Traces of `H^j` for `j = 1..=k_max`, where `H` is square self-adjoint or
/// not; only products of stored half powers are traced.
pub fn moments_of_power_sequence(
    h: &GroupRingMatrix,
    k_max: u32,
    ceiling: usize,
) -> Result<Vec<BigInt>> {
    let half = (k_max as usize + 1) / 2;
    // powers[a] = H^a for a = 0..=half
    let mut powers: Vec<GroupRingMatrix> = Vec::with_capacity(half + 1);
    powers.push(GroupRingMatrix::identity(h.group(), h.rows()));
    for _ in 0..half {
        let next = powers.last().unwrap().mat_multiply_with_ceiling(h, ceiling)?;
        powers.push(next);
    }
    let mut out = Vec::with_capacity(k_max as usize);
    for j in 1..=k_max as usize {
        let a = j / 2;
        let b = j - a;
        out.push(powers[a].trace_of_product(&powers[b])?);
    }
    Ok(out)
}
