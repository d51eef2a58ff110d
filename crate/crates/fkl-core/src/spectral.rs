//! Empirical spectral measures of integer lifts, truncated and positive
//! log-determinants, tail log-integrals, and weak* moment diagnostics.
//!
//! Zero atoms are never identified by floating point: the zero count comes
//! from an exact rank computation and the that many smallest singular values
//! are overwritten with exact zeros.

use crate::error::{FklError, Result};
use crate::lattice::{exact_rank, IntMat, RankProvenance};
use crate::ring::GroupRingMatrix;
use crate::sofic::{IntegerBlockMatrix, SoficApprox, DENSE_SIZE_CEILING};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

/// Relative cutoff for sanity-checking the certified zero count against the
/// numerically tiny cluster of singular values.
pub const ZERO_CLUSTER_RTOL: f64 = 1e-8;

/// Atomic measure with `n*d` atoms of weight `1/d` each (total mass `n`).
#[derive(Debug, Clone)]
pub struct SpectralMeasure {
    block_width: usize,
    degree: usize,
    /// Sorted ascending; the first `certified_zeros` entries are exact 0.
    values: Vec<f64>,
    certified_zeros: usize,
    pub provenance: String,
}

impl SpectralMeasure {
    pub fn from_values(
        block_width: usize,
        degree: usize,
        mut values: Vec<f64>,
        certified_zeros: usize,
        provenance: String,
    ) -> Result<SpectralMeasure> {
        if values.len() != block_width * degree {
            return Err(FklError::ShapeMismatch(
                "atom count must be block_width * degree".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FklError::InvalidArgument(
                "singular values must be finite and nonnegative".into(),
            ));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for v in values.iter_mut().take(certified_zeros) {
            *v = 0.0;
        }
        Ok(SpectralMeasure {
            block_width,
            degree,
            values,
            certified_zeros,
            provenance,
        })
    }

    pub fn block_width(&self) -> usize {
        self.block_width
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn certified_zeros(&self) -> usize {
        self.certified_zeros
    }
    /// Sorted atom values, weight 1/degree each.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total mass as an exact rational: atom count / degree = block width.
    pub fn total_mass(&self) -> BigRational {
        BigRational::new(BigInt::from(self.values.len()), BigInt::from(self.degree))
    }

    /// CSV with one row per distinct atom value (zeros aggregated).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,weight_num,weight_den,certified_zero\n");
        let mut i = 0;
        while i < self.values.len() {
            let v = self.values[i];
            let mut j = i;
            while j < self.values.len() && self.values[j] == v {
                j += 1;
            }
            let zero = i < self.certified_zeros;
            out.push_str(&format!("{},{},{},{}\n", v, j - i, self.degree, zero));
            i = j;
        }
        out
    }
}

/// Singular-value spectral measure of a square lift. The zero-atom count is
/// taken from `exact_zero_count` when supplied, otherwise from an exact rank
/// computation; it is cross-checked against the numerically tiny cluster.
pub fn singular_spectrum(
    a: &IntegerBlockMatrix,
    exact_zero_count: Option<usize>,
) -> Result<SpectralMeasure> {
    if a.block_rows() != a.block_cols() {
        return Err(FklError::ShapeMismatch(
            "spectral measure requires a square lift".into(),
        ));
    }
    let size = a.dense_rows();
    if (a.dense_rows() + a.dense_cols()) > DENSE_SIZE_CEILING {
        return Err(FklError::ceiling(
            "dense-size",
            format!("dense work at {} exceeds {}", size, DENSE_SIZE_CEILING),
        ));
    }
    let dense = IntMat::from_block_matrix(a);
    let (z, rank_tag) = match exact_zero_count {
        Some(z) => (z, "caller"),
        None => {
            let r = exact_rank(&dense);
            let tag = match r.provenance {
                RankProvenance::Exact => "exact-rank",
                RankProvenance::ProbabilisticExact => "probabilistic-exact-rank",
            };
            (size - r.rank, tag)
        }
    };

    let mat = faer::Mat::<f64>::from_fn(size, size, |i, j| {
        dense.get(i, j).to_f64().expect("lift entry fits in f64")
    });
    let mut sv = mat.singular_values();
    sv.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let scale = sv.last().copied().unwrap_or(0.0).max(1.0);
    let tol = ZERO_CLUSTER_RTOL * scale;
    let tiny = sv.iter().take_while(|&&v| v < tol).count();
    if tiny != z {
        return Err(FklError::InvalidArgument(format!(
            "certified zero count {z} disagrees with the numerically tiny cluster \
             ({tiny} values below {tol:.3e})"
        )));
    }

    SpectralMeasure::from_values(
        a.block_rows(),
        a.degree(),
        sv,
        z,
        format!("svd d={} zeros={} ({})", a.degree(), z, rank_tag),
    )
}

/// log Det⁺ rate: sum of weight·log(value) over strictly positive atoms.
/// The empty positive part gives 0 (Det⁺ of the zero operator is 1).
pub fn det_plus(m: &SpectralMeasure) -> f64 {
    tail_log_integral(m, 0.0, false)
}

/// Alias emphasising the integral form ∫_(0,∞) log t dμ.
pub fn log_det_plus_rate(m: &SpectralMeasure) -> f64 {
    det_plus(m)
}

/// Truncated determinant: atoms in (0, δ], closed right end.
pub fn det_truncated(m: &SpectralMeasure, delta: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Err(FklError::InvalidArgument("delta must be positive".into()));
    }
    let w = 1.0 / m.degree as f64;
    Ok(m
        .values
        .iter()
        .filter(|&&v| v > 0.0 && v <= delta)
        .map(|&v| w * v.ln())
        .sum())
}

/// Σ weight·log(value) over atoms with value > a (≥ a when closed). Zero
/// atoms never contribute (they carry no log mass in Det⁺).
pub fn tail_log_integral(m: &SpectralMeasure, a: f64, closed: bool) -> f64 {
    let w = 1.0 / m.degree as f64;
    m.values
        .iter()
        .filter(|&&v| v > 0.0 && if closed { v >= a } else { v > a })
        .map(|&v| w * v.ln())
        .sum()
}

/// Σ weight·value^p for even p; matches moment(F, p/2) on exact lifts.
pub fn measure_moment(m: &SpectralMeasure, p: u32) -> Result<f64> {
    if p == 0 || p % 2 != 0 {
        return Err(FklError::InvalidArgument(
            "moment order must be a positive even integer".into(),
        ));
    }
    let w = 1.0 / m.degree as f64;
    Ok(m.values.iter().map(|&v| w * v.powi(p as i32)).sum())
}

#[derive(Debug, Clone)]
pub struct WeakStarRow {
    pub degree: usize,
    pub k: u32,
    /// (1/d)·Tr (AᵀA)^k of the lift, exact integer trace divided by d.
    pub empirical_moment: f64,
    /// Tr⊗τ((F*F)^k), exact.
    pub exact_moment: f64,
    pub gap: f64,
}

/// Weak* convergence diagnostic: empirical lift moments against exact
/// group-ring moments, for each sofic level and k = 1..=k_max. The lift
/// moments use sparse exact integer traces, so the table is meaningful far
/// beyond the dense spectral ceiling.
pub fn weak_star_report(
    f: &GroupRingMatrix,
    sofics: &[SoficApprox],
    k_max: u32,
) -> Result<Vec<WeakStarRow>> {
    let mut rows = Vec::new();
    for s in sofics {
        // sparse-only: no dense ceiling applies here
        let lift = s.lift_with_ceiling(f, usize::MAX)?;
        for k in 1..=k_max {
            let t = lift.gram_power_trace(k)?;
            let exact_int = f.moment(k)?;
            let empirical =
                BigRational::new(t.clone(), BigInt::from(s.degree()));
            let gap = (&empirical - BigRational::from(exact_int.clone()))
                .to_f64()
                .unwrap_or(f64::NAN)
                .abs();
            rows.push(WeakStarRow {
                degree: s.degree(),
                k,
                empirical_moment: empirical.to_f64().unwrap_or(f64::NAN),
                exact_moment: exact_int.to_f64().unwrap_or(f64::NAN),
                gap,
            });
        }
    }
    Ok(rows)
}
