//! Entropy bound assembly: approximate kernels, brute-force microstate
//! counts at tiny scale, upper/lower bounds built from spectral and lattice
//! ingredients, the determinant-approximation experiment, and the ball-shift
//! overlap estimate.
//!
//! Norm conventions: entropy-side vectors use the normalized l2 norm
//! ((1/n)·Σ|x_j|²)^{1/2}; the submodule test (lattice module) is the one
//! place with unnormalized l2(d·n).

use crate::error::{FklError, Result};
use crate::fk::{mahler_quadrature, series_log_det};
use crate::group::GroupDescriptor;
use crate::lattice::{
    det_exact, exact_rank, rank_perturbation, small_vector_count, IntMat, PerturbationMode,
};
use crate::ring::GroupRingMatrix;
use crate::sofic::SoficApprox;
use crate::spectral::{det_plus, singular_spectrum, tail_log_integral, SpectralMeasure};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub const MICROSTATE_DIM_CEILING: usize = 8;
pub const MICROSTATE_POINT_BUDGET: usize = 30_000_000;

/// ln |v| for big integers, stable far past f64 range.
pub fn ln_abs_bigint(v: &BigInt) -> f64 {
    let a = v.abs();
    if a.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = a.bits();
    if bits <= 900 {
        a.to_f64().unwrap().ln()
    } else {
        let top = (&a >> (bits - 64)).to_f64().unwrap();
        top.ln() + (bits - 64) as f64 * std::f64::consts::LN_2
    }
}

/// Membership in the approximate kernel Ξ_δ(T) = {ξ : ‖Tξ‖_{2,Z^m} < δ};
/// the distance to the integer lattice separates per coordinate, so nearest
/// -integer rounding realizes the infimum.
pub fn xi_membership(t: &IntMat, xi: &[f64], delta: f64) -> Result<bool> {
    if xi.len() != t.cols() {
        return Err(FklError::ShapeMismatch("xi length".into()));
    }
    let m = t.rows();
    let mut acc = 0.0;
    for i in 0..m {
        let y: f64 = (0..t.cols())
            .map(|j| t.get(i, j).to_f64().unwrap() * xi[j])
            .sum();
        let frac = y - y.round();
        acc += frac * frac;
    }
    Ok((acc / m as f64).sqrt() < delta)
}

#[derive(Debug, Clone)]
pub struct MicrostateCounts {
    pub admitted: usize,
    /// Size of a greedy ε-separated subset: a valid lower bound for N_ε.
    pub packing: usize,
    pub packing_radius: f64,
    /// Size of a greedy cover of the admitted grid points.
    pub covering: usize,
    /// Cover radius including grid slack: ε + √(nd)/g.
    pub covering_radius: f64,
}

/// Brute-force microstate counting on the torus grid (i/g)_{i<g} per
/// coordinate with the wrap-around quotient metric θ₂. Greedy lexicographic
/// selection keeps the outputs deterministic; the packing stays a true
/// lower bound regardless of greed quality.
pub fn brute_count_microstates(
    t: &IntMat,
    delta: f64,
    eps: f64,
    g: usize,
) -> Result<MicrostateCounts> {
    let n = t.cols();
    if n > MICROSTATE_DIM_CEILING {
        return Err(FklError::ceiling(
            "microstate-dim",
            format!("dimension {n} exceeds {MICROSTATE_DIM_CEILING}"),
        ));
    }
    if !(eps > 0.0 && delta > 0.0) {
        return Err(FklError::InvalidArgument("need delta, eps > 0".into()));
    }
    if (g as f64) < 4.0 / eps {
        return Err(FklError::InvalidArgument(format!(
            "grid too coarse: need g >= 4/eps = {}",
            4.0 / eps
        )));
    }
    let total = (g as f64).powi(n as i32);
    if total > MICROSTATE_POINT_BUDGET as f64 {
        return Err(FklError::ceiling(
            "microstate-grid",
            format!("{g}^{n} grid points exceed {MICROSTATE_POINT_BUDGET}"),
        ));
    }

    // admitted grid points in lexicographic order
    let mut admitted: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let xi: Vec<f64> = idx.iter().map(|&i| i as f64 / g as f64).collect();
        if xi_membership(t, &xi, delta)? {
            admitted.push(xi);
        }
        let mut k = n;
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < g {
                break;
            }
            idx[k] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
    }

    let theta2 = |a: &[f64], b: &[f64]| -> f64 {
        let s: f64 = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| {
                let d = (x - y).abs();
                let d = d.min(1.0 - d);
                d * d
            })
            .sum();
        (s / n as f64).sqrt()
    };

    let mut packing: Vec<&Vec<f64>> = Vec::new();
    for p in &admitted {
        if packing.iter().all(|q| theta2(p, q) >= eps) {
            packing.push(p);
        }
    }
    let mut covering: Vec<&Vec<f64>> = Vec::new();
    for p in &admitted {
        if covering.iter().all(|q| theta2(p, q) > eps) {
            covering.push(p);
        }
    }
    Ok(MicrostateCounts {
        admitted: admitted.len(),
        packing: packing.len(),
        packing_radius: eps,
        covering: covering.len(),
        covering_radius: eps + (n as f64).sqrt() / g as f64,
    })
}

/// Upper bound for the packing-entropy rate: ∫_{[4δ/ε,∞)} log t dμ_{|x|}.
/// Requires 4δ < ε and an invertible x (no certified zero atoms).
pub fn entropy_upper_bound(mx: &SpectralMeasure, delta: f64, eps: f64) -> Result<f64> {
    if !(delta > 0.0 && eps > 0.0 && 4.0 * delta < eps) {
        return Err(FklError::InvalidArgument(
            "parameters must satisfy 0 < 4*delta < eps".into(),
        ));
    }
    if mx.certified_zeros() > 0 {
        return Err(FklError::InvalidArgument(
            "upper bound requires an invertible perturbation (no zero atoms)".into(),
        ));
    }
    Ok(tail_log_integral(mx, 4.0 * delta / eps, true))
}

/// Explicit analytic bound (1/n)·log ω_n(r) ≤ B(r, n) for r ≤ 1,
/// with the Stirling slack made explicit as δ(n) = (3 + log n)/n.
pub fn omega_rate_bound(r: f64, n: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(FklError::InvalidArgument(
            "analytic omega bound only valid for radius in [0,1]".into(),
        ));
    }
    if n == 0 {
        return Err(FklError::InvalidArgument("n must be positive".into()));
    }
    let ln2 = std::f64::consts::LN_2;
    let stirling = (3.0 + (n as f64).ln()) / n as f64;
    let entropy = if r >= 1.0 { 0.0 } else { -(1.0 - r) * (1.0 - r).ln() };
    let branch = if r == 0.0 {
        0.0
    } else {
        (r * 4f64.ln() - r * r.ln()).max(r + 2.0 * ln2 * r)
    };
    Ok(stirling + ln2 * r + entropy + branch)
}

#[derive(Debug, Clone)]
pub struct LowerBoundBreakdown {
    pub value: f64,
    pub tail_term: f64,
    pub truncated_mass_term: f64,
    /// −(1/d)·log ω_{dn}(εM + 2δ)
    pub omega_main_term: f64,
    /// −(1/d)·log ω_{|A|}(2εM)
    pub omega_image_term: f64,
    /// true when an ω term used the analytic bound instead of the exact
    /// count
    pub bound_mode: bool,
}

fn omega_log_term(r: f64, dims: u64, degree: f64) -> Result<(f64, bool)> {
    let rr = BigRational::from_float(r)
        .ok_or_else(|| FklError::InvalidArgument("radius must be finite".into()))?;
    match small_vector_count(dims, &rr) {
        Ok(count) => Ok((ln_abs_bigint(&count) / degree, false)),
        Err(FklError::ResourceCeiling { .. }) => {
            let b = omega_rate_bound(r, dims)?;
            Ok((b * dims as f64 / degree, true))
        }
        Err(e) => Err(e),
    }
}

/// Four-term lower bound for the packing-entropy rate:
/// ∫_(δ/ε,∞) log t dμ + log(δ/ε)·μ((0,δ/ε])
///   − (1/d)·log ω_{dn}(εM+2δ) − (1/d)·log ω_{|A|}(2εM).
pub fn entropy_lower_bound(
    mx: &SpectralMeasure,
    delta: f64,
    eps: f64,
    block_width: usize,
    m_bound: f64,
) -> Result<LowerBoundBreakdown> {
    if !(delta > 0.0 && eps > 0.0) {
        return Err(FklError::InvalidArgument("need delta, eps > 0".into()));
    }
    if mx.certified_zeros() > 0 {
        return Err(FklError::InvalidArgument(
            "lower bound requires an invertible perturbation (no zero atoms)".into(),
        ));
    }
    let max_atom = mx.values().last().copied().unwrap_or(0.0);
    if m_bound < max_atom {
        return Err(FklError::InvalidArgument(format!(
            "M = {m_bound} must dominate the largest atom {max_atom}"
        )));
    }
    let d = mx.degree();
    let n = block_width;
    let cut = delta / eps;

    let tail_term = tail_log_integral(mx, cut, false);
    let small_mass =
        mx.values().iter().filter(|&&v| v > 0.0 && v <= cut).count() as f64 / d as f64;
    let truncated_mass_term = if small_mass > 0.0 { cut.ln() * small_mass } else { 0.0 };

    let (main_log, main_bound) =
        omega_log_term(eps * m_bound + 2.0 * delta, (d * n) as u64, d as f64)?;
    // invertible x: |A| = n·d selected rows
    let (image_log, image_bound) =
        omega_log_term(2.0 * eps * m_bound, (d * n) as u64, d as f64)?;

    Ok(LowerBoundBreakdown {
        value: tail_term + truncated_mass_term - main_log - image_log,
        tail_term,
        truncated_mass_term,
        omega_main_term: -main_log,
        omega_image_term: -image_log,
        bound_mode: main_bound || image_bound,
    })
}

#[derive(Debug, Clone)]
pub struct DetApproxRow {
    pub degree: usize,
    /// dim ker / d = (n·d − rank) / d, exact rank.
    pub kernel_fraction: f64,
    /// (1/d)·log Det⁺ of the lift; exact big-integer determinant when the
    /// lift is invertible, SVD with certified zero count otherwise.
    pub log_det_rate: f64,
    pub perturbed_rate: Option<f64>,
    pub reference: Option<f64>,
    pub gap: Option<f64>,
}

/// The determinant-approximation experiment: per sofic level, the kernel
/// fraction and normalized log Det⁺ of the lift (optionally of its rank
/// perturbation), against an oracle reference when one applies. Sequences
/// are recorded without asserting convergence.
pub fn det_approx_experiment(
    f: &GroupRingMatrix,
    sofics: &[SoficApprox],
    perturb: bool,
) -> Result<Vec<DetApproxRow>> {
    if f.rows() != f.cols() {
        return Err(FklError::ShapeMismatch(
            "determinant experiment requires square f".into(),
        ));
    }
    let reference = match f.group() {
        GroupDescriptor::Zd(d) if d <= 3 => Some(mahler_quadrature(f, 1e-7)?.value),
        _ => series_log_det(f, 12, None).ok().map(|r| r.value),
    };
    let mut rows = Vec::with_capacity(sofics.len());
    for s in sofics {
        let lift = s.lift(f)?;
        let dense = IntMat::from_block_matrix(&lift);
        let d = s.degree();
        let size = dense.rows();
        let det = det_exact(&dense)?;
        let (rank, log_det_rate) = if det.is_zero() {
            let rank = exact_rank(&dense).rank;
            let mx = singular_spectrum(&lift, Some(size - rank))?;
            (rank, det_plus(&mx))
        } else {
            (size, ln_abs_bigint(&det) / d as f64)
        };
        let kernel_fraction = (size - rank) as f64 / d as f64;
        let perturbed_rate = if perturb {
            let p = rank_perturbation(&lift, PerturbationMode::SquareInvertible)?;
            Some(ln_abs_bigint(&det_exact(&p.x)?) / d as f64)
        } else {
            None
        };
        rows.push(DetApproxRow {
            degree: d,
            kernel_fraction,
            log_det_rate,
            perturbed_rate,
            reference,
            gap: reference.map(|r| (log_det_rate - r).abs()),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct OverlapEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Monte-Carlo estimate of vol(R·B ∖ (R·B + ξ)) / vol(R·B) for ‖ξ‖₂ = s
/// (unnormalized l2; the ball is rotation invariant so ξ = s·e₁).
pub fn ball_shift_overlap(
    n: usize,
    radius: f64,
    shift: f64,
    samples: u64,
    seed: u64,
) -> Result<OverlapEstimate> {
    if n == 0 || !(radius > 0.0) || shift < 0.0 {
        return Err(FklError::InvalidArgument(
            "need n >= 1, radius > 0, shift >= 0".into(),
        ));
    }
    if samples < 10_000 {
        return Err(FklError::InvalidArgument(
            "at least 10^4 samples required".into(),
        ));
    }
    if shift == 0.0 {
        return Ok(OverlapEstimate {
            estimate: 0.0,
            std_error: 0.0,
            samples,
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut outside = 0u64;
    for _ in 0..samples {
        // uniform in the n-ball: gaussian direction, radius ~ U^{1/n}
        let mut g = vec![0.0f64; n];
        let mut norm2 = 0.0;
        for slot in g.iter_mut() {
            // Box-Muller
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            *slot = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            norm2 += *slot * *slot;
        }
        let u: f64 = rng.gen_range(0.0f64..1.0);
        let scale = radius * u.powf(1.0 / n as f64) / norm2.sqrt();
        // outside the shifted ball B + s·e1  <=>  ‖y − s·e1‖ > R
        let mut dist2 = 0.0;
        for (k, &gk) in g.iter().enumerate() {
            let yk = gk * scale - if k == 0 { shift } else { 0.0 };
            dist2 += yk * yk;
        }
        if dist2.sqrt() > radius {
            outside += 1;
        }
    }
    let p = outside as f64 / samples as f64;
    Ok(OverlapEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}
