//! Sofic approximations and lifts of group-ring matrices to integer block
//! matrices.
//!
//! Two families are implemented, both exact homomorphisms: cyclic quotients
//! `Z^d -> prod Z/N_k` acting on the torus grid, and seeded uniformly random
//! homomorphisms `F_r -> S_d` (independent Fisher-Yates permutations per
//! generator). Permutation matrices follow the convention
//! `P_sigma e_j = e_{sigma(j)}`, acting on column vectors on the left.

use crate::error::{FklError, Result};
use crate::group::{GroupDescriptor, GroupElement};
use crate::ring::GroupRingMatrix;
use num_bigint::BigInt;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;

/// Dense-work ceiling: `(m + n) * degree` for spectral-size operations.
pub const DENSE_SIZE_CEILING: usize = 20_000;

/// A permutation of `{0..d-1}` stored as its image array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(pub Vec<usize>);

impl Permutation {
    pub fn identity(d: usize) -> Self {
        Permutation((0..d).collect())
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn apply(&self, j: usize) -> usize {
        self.0[j]
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        self.0.iter().all(|&i| {
            i < seen.len() && !std::mem::replace(&mut seen[i], true)
        })
    }

    /// Composition `(self o other)(j) = self(other(j))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation(other.0.iter().map(|&j| self.0[j]).collect())
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (j, &i) in self.0.iter().enumerate() {
            inv[i] = j;
        }
        Permutation(inv)
    }

    pub fn pow(&self, e: i64) -> Permutation {
        let base = if e < 0 { self.inverse() } else { self.clone() };
        let mut e = e.unsigned_abs();
        let mut acc = Permutation::identity(self.degree());
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = sq.compose(&acc);
            }
            sq = sq.compose(&sq);
            e >>= 1;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SoficProvenance {
    /// Finite quotient `Z^d / (N_1 x ... x N_d)`.
    Cyclic(Vec<usize>),
    /// Uniform random homomorphism `F_r -> S_d` from the given seed.
    RandomHom(u64),
}

#[derive(Debug, Clone)]
pub struct SoficApprox {
    group: GroupDescriptor,
    degree: usize,
    generators: Vec<Permutation>,
    provenance: SoficProvenance,
}

impl SoficApprox {
    /// Cyclic quotient sofic map for `Z^d`: generator `k` translates by one
    /// in coordinate `k` of the grid `prod Z/N_k`; the degree is `prod N_k`.
    pub fn cyclic(sizes: &[usize]) -> Result<SoficApprox> {
        if sizes.is_empty() || sizes.iter().any(|&n| n == 0) {
            return Err(FklError::InvalidArgument(
                "cyclic sofic sizes must be positive".into(),
            ));
        }
        let d = sizes.len();
        let degree: usize = sizes.iter().product();
        // grid index j <-> mixed-radix digits (j_1,...,j_d), coordinate k
        // has stride prod_{l>k} N_l.
        let mut strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1];
        }
        let mut generators = Vec::with_capacity(d);
        for k in 0..d {
            let mut img = vec![0usize; degree];
            for (j, slot) in img.iter_mut().enumerate() {
                let digit = (j / strides[k]) % sizes[k];
                let next = (digit + 1) % sizes[k];
                *slot = j - digit * strides[k] + next * strides[k];
            }
            generators.push(Permutation(img));
        }
        Ok(SoficApprox {
            group: GroupDescriptor::Zd(d),
            degree,
            generators,
            provenance: SoficProvenance::Cyclic(sizes.to_vec()),
        })
    }

    /// Uniformly random homomorphism `F_r -> S_d`, seeded and reproducible.
    pub fn random_hom(rank: usize, degree: usize, seed: u64) -> Result<SoficApprox> {
        if rank == 0 || degree == 0 {
            return Err(FklError::InvalidArgument(
                "random-hom sofic requires rank >= 1 and degree >= 1".into(),
            ));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut generators = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut img: Vec<usize> = (0..degree).collect();
            img.shuffle(&mut rng);
            generators.push(Permutation(img));
        }
        Ok(SoficApprox {
            group: GroupDescriptor::Free(rank),
            degree,
            generators,
            provenance: SoficProvenance::RandomHom(seed),
        })
    }

    pub fn group(&self) -> GroupDescriptor {
        self.group
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn provenance(&self) -> &SoficProvenance {
        &self.provenance
    }
    pub fn generator(&self, k: usize) -> &Permutation {
        &self.generators[k]
    }

    /// Word evaluation; exact homomorphism for both families.
    pub fn evaluate(&self, g: &GroupElement) -> Result<Permutation> {
        if !g.belongs_to(self.group) {
            return Err(FklError::GroupMismatch(format!(
                "element does not belong to {}",
                self.group
            )));
        }
        match g {
            GroupElement::Zd(exps) => {
                if let SoficProvenance::Cyclic(sizes) = &self.provenance {
                    // direct translation on the torus grid
                    let d = sizes.len();
                    let mut strides = vec![1usize; d];
                    for k in (0..d.saturating_sub(1)).rev() {
                        strides[k] = strides[k + 1] * sizes[k + 1];
                    }
                    let mut img = vec![0usize; self.degree];
                    for (j, slot) in img.iter_mut().enumerate() {
                        let mut out = 0usize;
                        for k in 0..d {
                            let digit = (j / strides[k]) % sizes[k];
                            let shift = exps[k].rem_euclid(sizes[k] as i64) as usize;
                            out += ((digit + shift) % sizes[k]) * strides[k];
                        }
                        *slot = out;
                    }
                    Ok(Permutation(img))
                } else {
                    unreachable!("Zd elements only evaluate on cyclic approximations")
                }
            }
            GroupElement::Free(runs) => {
                let mut acc = Permutation::identity(self.degree);
                for &(gen, exp) in runs {
                    // left action: word a*b acts as P_a P_b
                    acc = acc.compose(&self.generators[gen].pow(exp));
                }
                Ok(acc)
            }
        }
    }

    /// Per-pair multiplicativity defect `u_d({j : s(g)s(h)(j) != s(gh)(j)})`
    /// and freeness defect `u_d({j : s(g)(j) = s(h)(j)})`.
    pub fn defect(&self, pairs: &[(GroupElement, GroupElement)]) -> Result<Vec<DefectRow>> {
        let d = self.degree as f64;
        pairs
            .iter()
            .map(|(g, h)| {
                let pg = self.evaluate(g)?;
                let ph = self.evaluate(h)?;
                let pgh = self.evaluate(&g.mul(h))?;
                let mult_bad = (0..self.degree)
                    .filter(|&j| pg.apply(ph.apply(j)) != pgh.apply(j))
                    .count();
                let coincide = (0..self.degree)
                    .filter(|&j| pg.apply(j) == ph.apply(j))
                    .count();
                Ok(DefectRow {
                    g: g.clone(),
                    h: h.clone(),
                    multiplicativity: mult_bad as f64 / d,
                    freeness: coincide as f64 / d,
                })
            })
            .collect()
    }

    /// Lift a group-ring matrix to an integer block matrix:
    /// block `(s,t)` is `sum_g fhat_{st}(g) P_{sigma(g)}`.
    pub fn lift(&self, f: &GroupRingMatrix) -> Result<IntegerBlockMatrix> {
        self.lift_with_ceiling(f, DENSE_SIZE_CEILING)
    }

    pub fn lift_with_ceiling(
        &self,
        f: &GroupRingMatrix,
        ceiling: usize,
    ) -> Result<IntegerBlockMatrix> {
        if f.group() != self.group {
            return Err(FklError::GroupMismatch("lift".into()));
        }
        let (m, n, d) = (f.rows(), f.cols(), self.degree);
        if (m + n) * d > ceiling {
            return Err(FklError::ceiling(
                "dense-size",
                format!("(m+n)*d = {} exceeds {}", (m + n) * d, ceiling),
            ));
        }
        let mut blocks = BTreeMap::new();
        for s in 0..m {
            for t in 0..n {
                let entry = f.entry(s, t);
                if entry.is_zero() {
                    continue;
                }
                let mut block: BTreeMap<(usize, usize), BigInt> = BTreeMap::new();
                for (g, c) in entry.sorted_terms() {
                    let p = self.evaluate(g)?;
                    for j in 0..d {
                        let i = p.apply(j);
                        let slot = block.entry((i, j)).or_insert_with(BigInt::zero);
                        *slot += c;
                    }
                }
                block.retain(|_, c| !c.is_zero());
                if !block.is_empty() {
                    blocks.insert((s, t), block);
                }
            }
        }
        Ok(IntegerBlockMatrix {
            block_rows: m,
            block_cols: n,
            degree: d,
            blocks,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DefectRow {
    pub g: GroupElement,
    pub h: GroupElement,
    pub multiplicativity: f64,
    pub freeness: f64,
}

/// Sparse exact-integer block matrix `sigma(f)`, blocks of size `d x d` in
/// an `m x n` block grid. Dense index of block-row `s`, inner row `i` is
/// `s*d + i` (and likewise for columns).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerBlockMatrix {
    block_rows: usize,
    block_cols: usize,
    degree: usize,
    blocks: BTreeMap<(usize, usize), BTreeMap<(usize, usize), BigInt>>,
}

impl IntegerBlockMatrix {
    pub fn new(block_rows: usize, block_cols: usize, degree: usize) -> Self {
        IntegerBlockMatrix {
            block_rows,
            block_cols,
            degree,
            blocks: BTreeMap::new(),
        }
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }
    pub fn block_cols(&self) -> usize {
        self.block_cols
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn dense_rows(&self) -> usize {
        self.block_rows * self.degree
    }
    pub fn dense_cols(&self) -> usize {
        self.block_cols * self.degree
    }

    pub fn set(&mut self, s: usize, t: usize, i: usize, j: usize, v: BigInt) {
        if v.is_zero() {
            if let Some(b) = self.blocks.get_mut(&(s, t)) {
                b.remove(&(i, j));
            }
            return;
        }
        self.blocks
            .entry((s, t))
            .or_default()
            .insert((i, j), v);
    }

    pub fn get(&self, s: usize, t: usize, i: usize, j: usize) -> BigInt {
        self.blocks
            .get(&(s, t))
            .and_then(|b| b.get(&(i, j)))
            .cloned()
            .unwrap_or_else(BigInt::zero)
    }

    /// Nonzero entries as `(dense_row, dense_col, value)`, sorted by block
    /// then position.
    pub fn triplets(&self) -> Vec<(usize, usize, BigInt)> {
        let mut out = Vec::new();
        for (&(s, t), block) in &self.blocks {
            for (&(i, j), v) in block {
                out.push((s * self.degree + i, t * self.degree + j, v.clone()));
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.blocks.values().map(|b| b.len()).sum()
    }

    pub fn max_abs_entry(&self) -> BigInt {
        use num_traits::Signed;
        self.blocks
            .values()
            .flat_map(|b| b.values())
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(BigInt::zero)
    }

    /// Exact sparse product.
    pub fn multiply(&self, other: &IntegerBlockMatrix) -> Result<IntegerBlockMatrix> {
        if self.block_cols != other.block_rows || self.degree != other.degree {
            return Err(FklError::ShapeMismatch("block matrix product".into()));
        }
        let mut out = IntegerBlockMatrix::new(self.block_rows, other.block_cols, self.degree);
        for (&(s, k), ablock) in &self.blocks {
            for t in 0..other.block_cols {
                if let Some(bblock) = other.blocks.get(&(k, t)) {
                    // column index of entries in bblock, grouped by row
                    let target = out.blocks.entry((s, t)).or_default();
                    for (&(ai, aj), av) in ablock {
                        for (&(bi, bj), bv) in bblock {
                            if aj == bi {
                                let slot =
                                    target.entry((ai, bj)).or_insert_with(BigInt::zero);
                                *slot += av * bv;
                            }
                        }
                    }
                }
            }
        }
        for block in out.blocks.values_mut() {
            block.retain(|_, v| !v.is_zero());
        }
        out.blocks.retain(|_, b| !b.is_empty());
        Ok(out)
    }

    pub fn transpose(&self) -> IntegerBlockMatrix {
        let mut out = IntegerBlockMatrix::new(self.block_cols, self.block_rows, self.degree);
        for (&(s, t), block) in &self.blocks {
            for (&(i, j), v) in block {
                out.set(t, s, j, i, v.clone());
            }
        }
        out
    }

    /// Normalized trace `Tr (x) tr_d`: sum over diagonal blocks of
    /// (1/d)*trace, returned as (integer trace sum, degree) to stay exact.
    pub fn trace_sum(&self) -> Result<BigInt> {
        if self.block_rows != self.block_cols {
            return Err(FklError::ShapeMismatch("trace of non-square".into()));
        }
        let mut acc = BigInt::zero();
        for s in 0..self.block_rows {
            if let Some(block) = self.blocks.get(&(s, s)) {
                for i in 0..self.degree {
                    if let Some(v) = block.get(&(i, i)) {
                        acc += v;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Exact integer trace of `(A^T A)^k` (unnormalized). Divide by the
    /// degree for `Tr (x) tr_d`.
    pub fn gram_power_trace(&self, k: u32) -> Result<BigInt> {
        let gram = self.transpose().multiply(self)?;
        let mut p = gram.clone();
        for _ in 1..k {
            p = p.multiply(&gram)?;
        }
        p.trace_sum()
    }

    /// Dense f64 realization (row-major), for spectral work.
    pub fn to_dense_f64(&self) -> Vec<Vec<f64>> {
        let (r, c) = (self.dense_rows(), self.dense_cols());
        let mut out = vec![vec![0.0; c]; r];
        for (i, j, v) in self.triplets() {
            out[i][j] = bigint_to_f64(&v);
        }
        out
    }
}

pub fn bigint_to_f64(v: &BigInt) -> f64 {
    use num_traits::ToPrimitive;
    v.to_f64().expect("entry convertible to f64")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_element, parse_matrix};
    use num_bigint::BigInt;

    #[test]
    fn cyclic_z_generator_is_a_cycle() {
        let s = SoficApprox::cyclic(&[3]).unwrap();
        assert_eq!(s.generator(0).0, vec![1, 2, 0]);
        let x3 = GroupElement::Zd(vec![3]);
        assert_eq!(s.evaluate(&x3).unwrap(), Permutation::identity(3));
        let x2 = GroupElement::Zd(vec![2]);
        assert_eq!(s.evaluate(&x2).unwrap().0, vec![2, 0, 1]);
    }

    #[test]
    fn cyclic_z2_generators_commute() {
        let s = SoficApprox::cyclic(&[2, 2]).unwrap();
        assert_eq!(s.degree(), 4);
        let a = s.generator(0);
        let b = s.generator(1);
        assert_eq!(a.compose(b), b.compose(a));
        assert!(a.is_bijection() && b.is_bijection());
        assert_ne!(a, b);
    }

    #[test]
    fn random_hom_is_deterministic() {
        let s1 = SoficApprox::random_hom(1, 5, 42).unwrap();
        let s2 = SoficApprox::random_hom(1, 5, 42).unwrap();
        assert_eq!(s1.generator(0), s2.generator(0));
        assert!(s1.generator(0).is_bijection());
        let s3 = SoficApprox::random_hom(2, 1, 7).unwrap();
        assert_eq!(s3.generator(0), &Permutation::identity(1));
        assert_eq!(s3.generator(1), &Permutation::identity(1));
    }

    #[test]
    fn evaluation_is_homomorphism() {
        let s = SoficApprox::random_hom(2, 50, 11).unwrap();
        let g = GroupElement::Free(vec![(0, 2), (1, -1)]);
        let h = GroupElement::Free(vec![(1, 1), (0, -1), (1, 3)]);
        let lhs = s.evaluate(&g.mul(&h)).unwrap();
        let rhs = s.evaluate(&g).unwrap().compose(&s.evaluate(&h).unwrap());
        assert_eq!(lhs, rhs);
        assert_eq!(
            s.evaluate(&GroupElement::identity(GroupDescriptor::Free(2)))
                .unwrap(),
            Permutation::identity(50)
        );
    }

    #[test]
    fn defects_on_cyclic_quotient() {
        let s = SoficApprox::cyclic(&[5]).unwrap();
        let x = GroupElement::Zd(vec![1]);
        let x5 = GroupElement::Zd(vec![5]);
        let e = GroupElement::Zd(vec![0]);
        let rows = s
            .defect(&[(x.clone(), x.clone()), (x5.clone(), e.clone())])
            .unwrap();
        assert_eq!(rows[0].multiplicativity, 0.0);
        // sigma(x^5) = id coincides with sigma(e) everywhere
        assert_eq!(rows[1].freeness, 1.0);
    }

    #[test]
    fn lift_of_constant_is_scalar() {
        let s = SoficApprox::random_hom(2, 7, 3).unwrap();
        let f = parse_matrix("2", GroupDescriptor::Free(2)).unwrap();
        let a = s.lift(&f).unwrap();
        for i in 0..7 {
            assert_eq!(a.get(0, 0, i, i), BigInt::from(2));
        }
        assert_eq!(a.nnz(), 7);
    }

    #[test]
    fn lift_of_x_minus_2_is_circulant() {
        let s = SoficApprox::cyclic(&[3]).unwrap();
        let f = parse_matrix("x-2", GroupDescriptor::Zd(1)).unwrap();
        let a = s.lift(&f).unwrap();
        // column j: -2 at row j, +1 at row j+1 mod 3
        for j in 0..3 {
            assert_eq!(a.get(0, 0, j, j), BigInt::from(-2));
            assert_eq!(a.get(0, 0, (j + 1) % 3, j), BigInt::from(1));
        }
        assert_eq!(a.nnz(), 6);
    }

    #[test]
    fn lift_is_multiplicative() {
        let g = GroupDescriptor::Free(2);
        let s = SoficApprox::random_hom(2, 20, 5).unwrap();
        let f = parse_matrix("a + 2*b^-1", g).unwrap();
        let h = parse_matrix("b - a^-1*b", g).unwrap();
        let fh = f.mat_multiply(&h).unwrap();
        let lhs = s.lift(&fh).unwrap();
        let rhs = s.lift(&f).unwrap().multiply(&s.lift(&h).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn entry_bound_holds() {
        let g = GroupDescriptor::Zd(1);
        let s = SoficApprox::cyclic(&[4]).unwrap();
        let f = parse_matrix("3*x - 2 + x^-1", g).unwrap();
        let a = s.lift(&f).unwrap();
        let bound = parse_element("3*x - 2 + x^-1", g).unwrap().l1_norm();
        assert!(a.max_abs_entry() <= bound);
    }

    #[test]
    fn moment_transfer_exact_at_large_n() {
        // cyclic Z with N > 2k*(max word length): normalized lift moments
        // equal group-ring moments exactly.
        let g = GroupDescriptor::Zd(1);
        let f = parse_matrix("x-2", g).unwrap();
        let s = SoficApprox::cyclic(&[11]).unwrap();
        let a = s.lift(&f).unwrap();
        for k in 1..=3u32 {
            let t = a.gram_power_trace(k).unwrap();
            let m = f.moment(k).unwrap();
            assert_eq!(t, m * BigInt::from(11));
        }
    }
}
