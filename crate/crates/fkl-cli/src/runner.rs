use std::path::{Path, PathBuf};
use std::time::Instant;

use fkl_core::entropy::{
    ball_shift_overlap, det_approx_experiment, entropy_lower_bound, entropy_upper_bound,
    ln_abs_bigint,
};
use fkl_core::fk::{mahler_quadrature, series_log_det, ErrorBound};
use fkl_core::lattice::{
    det_exact, exact_rank, rank_perturbation, IntMat, PerturbationMode, RankProvenance,
};
use fkl_core::parse::parse_matrix;
use fkl_core::ring::GroupRingMatrix;
use fkl_core::sofic::SoficApprox;
use fkl_core::spectral::{singular_spectrum, weak_star_report};
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::spec::ExperimentSpec;
use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub spec: ExperimentSpec,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// sha256 of the canonical spec JSON.
    pub input_hash: String,
    pub wall_ms: u128,
    pub peak_rss_kb: u64,
}

impl ExperimentRecord {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn provenance_str(p: &RankProvenance) -> &'static str {
    match p {
        RankProvenance::Exact => "exact",
        RankProvenance::ProbabilisticExact => "probabilistic-exact",
    }
}

fn peak_rss_kb() -> u64 {
    std::fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("VmHWM:"))
                .and_then(|l| l.split_whitespace().nth(1))
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0)
}

fn parse_spec_element(spec: &ExperimentSpec) -> Result<GroupRingMatrix, CliError> {
    let text = spec
        .element
        .as_ref()
        .ok_or_else(|| CliError::Schema("element required".into()))?;
    Ok(parse_matrix(text, spec.group.descriptor())?)
}

/// Run the per-level task for every sofic level on the configured thread
/// pool; rayon's indexed collect keeps the row order identical for any
/// thread budget.
fn per_level<F>(
    sofics: &[SoficApprox],
    threads: usize,
    task: F,
) -> Result<Vec<Vec<String>>, CliError>
where
    F: Fn(&SoficApprox) -> Result<Vec<Vec<String>>, CliError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let nested: Vec<Vec<Vec<String>>> =
        pool.install(|| sofics.par_iter().map(&task).collect::<Result<_, _>>())?;
    Ok(nested.into_iter().flatten().collect())
}

pub fn run(
    spec: &ExperimentSpec,
    out_override: Option<&Path>,
    threads_override: Option<usize>,
) -> Result<ExperimentRecord, CliError> {
    spec.validate()?;
    let started = Instant::now();
    let threads = threads_override.or(spec.threads).unwrap_or(1).max(1);
    let p = &spec.params;

    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match spec.operation.as_str() {
        "detapprox" => {
            let f = parse_spec_element(spec)?;
            let sofics = spec.sofics()?;
            let perturb = p.perturb.unwrap_or(false);
            let rows = per_level(&sofics, threads, |s| {
                let out = det_approx_experiment(&f, std::slice::from_ref(s), perturb)?;
                Ok(out
                    .iter()
                    .map(|r| {
                        vec![
                            r.degree.to_string(),
                            fmt(r.kernel_fraction),
                            fmt(r.log_det_rate),
                            fmt_opt(r.perturbed_rate),
                            fmt_opt(r.reference),
                            fmt_opt(r.gap),
                        ]
                    })
                    .collect())
            })?;
            (
                vec![
                    "degree",
                    "kernel_fraction",
                    "rate_log",
                    "perturbed_rate_log",
                    "reference_log",
                    "gap",
                ],
                rows,
            )
        }
        "weakstar" => {
            let f = parse_spec_element(spec)?;
            let sofics = spec.sofics()?;
            let k_max = p.k_max.unwrap_or(3);
            let rows = per_level(&sofics, threads, |s| {
                let out = weak_star_report(&f, std::slice::from_ref(s), k_max)?;
                Ok(out
                    .iter()
                    .map(|r| {
                        vec![
                            r.degree.to_string(),
                            r.k.to_string(),
                            fmt(r.empirical_moment),
                            fmt(r.exact_moment),
                            fmt(r.gap),
                        ]
                    })
                    .collect())
            })?;
            (
                vec!["degree", "k", "empirical_moment", "exact_moment", "gap"],
                rows,
            )
        }
        "entropy-bounds" => {
            let f = parse_spec_element(spec)?;
            let sofics = spec.sofics()?;
            let delta = p.delta.unwrap();
            let eps = p.eps.unwrap();
            let rows = per_level(&sofics, threads, |s| {
                let lift = s.lift(&f)?;
                let m = singular_spectrum(&lift, None)?;
                let m_bound = p.m_bound.unwrap_or_else(|| {
                    let op = f.mat_l1_bound().to_f64().unwrap_or(f64::INFINITY);
                    op.max(m.values().last().copied().unwrap_or(0.0))
                });
                let upper = entropy_upper_bound(&m, delta, eps)?;
                let lower = entropy_lower_bound(&m, delta, eps, f.cols(), m_bound)?;
                Ok(vec![vec![
                    s.degree().to_string(),
                    fmt(lower.value),
                    fmt(upper),
                    fmt(upper - lower.value),
                    fmt(lower.tail_term),
                    fmt(lower.truncated_mass_term),
                    fmt(lower.omega_main_term),
                    fmt(lower.omega_image_term),
                    lower.bound_mode.to_string(),
                ]])
            })?;
            (
                vec![
                    "degree",
                    "lower_log",
                    "upper_log",
                    "gap",
                    "tail_term_log",
                    "mass_term_log",
                    "omega_main_log",
                    "omega_image_log",
                    "bound_mode",
                ],
                rows,
            )
        }
        "lattice" => {
            let f = parse_spec_element(spec)?;
            let sofics = spec.sofics()?;
            let rows = per_level(&sofics, threads, |s| {
                let dense = IntMat::from_block_matrix(&s.lift(&f)?);
                let det = det_exact(&dense)?;
                let (rank, prov) = if det.is_zero() {
                    let r = exact_rank(&dense);
                    (r.rank, provenance_str(&r.provenance))
                } else {
                    (dense.rows(), "exact")
                };
                let rate = if det.is_zero() {
                    String::new()
                } else {
                    fmt(ln_abs_bigint(&det) / s.degree() as f64)
                };
                Ok(vec![vec![
                    s.degree().to_string(),
                    dense.rows().to_string(),
                    rank.to_string(),
                    prov.to_string(),
                    det.abs().to_string(),
                    rate,
                ]])
            })?;
            (
                vec!["degree", "size", "rank", "rank_provenance", "det_abs", "rate_log"],
                rows,
            )
        }
        "submodule" => {
            let f = parse_spec_element(spec)?;
            let alpha = parse_matrix(p.alpha.as_ref().unwrap(), spec.group.descriptor())?;
            let sofics = spec.sofics()?;
            let c = p.c.unwrap();
            let rows = per_level(&sofics, threads, |s| {
                let lift = s.lift(&f)?;
                let x = rank_perturbation(&lift, PerturbationMode::SquareInvertible)?;
                let rep = fkl_core::lattice::submodule_test(&f, &alpha, s, &x, c)?;
                Ok(vec![vec![
                    rep.degree.to_string(),
                    rep.members.to_string(),
                    fmt(rep.fraction),
                ]])
            })?;
            (vec!["degree", "members", "fraction"], rows)
        }
        "overlap" => {
            let est = ball_shift_overlap(
                p.n.unwrap(),
                p.radius.unwrap(),
                p.shift.unwrap(),
                p.samples.unwrap_or(100_000),
                p.seed.unwrap_or(0),
            )?;
            (
                vec!["n", "radius", "shift", "samples", "estimate", "std_error"],
                vec![vec![
                    p.n.unwrap().to_string(),
                    fmt(p.radius.unwrap()),
                    fmt(p.shift.unwrap()),
                    est.samples.to_string(),
                    fmt(est.estimate),
                    fmt(est.std_error),
                ]],
            )
        }
        "mahler" | "series" => {
            let f = parse_spec_element(spec)?;
            let r = if spec.operation == "mahler" {
                mahler_quadrature(&f, p.tol.unwrap_or(1e-7))?
            } else {
                series_log_det(&f, p.k_max.unwrap_or(12), None)?
            };
            let err = match r.error {
                ErrorBound::Certified(e) => fmt(e),
                ErrorBound::Heuristic => "heuristic".into(),
            };
            (
                vec!["value_log", "error", "method", "tolerance_met"],
                vec![vec![
                    fmt(r.value),
                    err,
                    r.method.to_string(),
                    r.tolerance_met.to_string(),
                ]],
            )
        }
        "spectrum" => {
            let f = parse_spec_element(spec)?;
            let sofics = spec.sofics()?;
            let rows = per_level(&sofics, threads, |s| {
                let m = singular_spectrum(&s.lift(&f)?, None)?;
                Ok(m.to_csv()
                    .lines()
                    .skip(1)
                    .map(|l| {
                        let mut row = vec![s.degree().to_string()];
                        row.extend(l.split(',').map(str::to_string));
                        row
                    })
                    .collect())
            })?;
            (
                vec!["degree", "value", "weight_num", "weight_den", "certified_zero"],
                rows,
            )
        }
        "perturb" => {
            let f = parse_spec_element(spec)?;
            let sofics = spec.sofics()?;
            let rows = per_level(&sofics, threads, |s| {
                let x = rank_perturbation(&s.lift(&f)?, PerturbationMode::SquareInvertible)?;
                Ok(vec![vec![
                    s.degree().to_string(),
                    x.rank.rank.to_string(),
                    provenance_str(&x.rank.provenance).to_string(),
                    fmt(x.agreement_fraction()),
                    fmt(x.perturbation_bound()),
                ]])
            })?;
            (
                vec![
                    "degree",
                    "rank",
                    "rank_provenance",
                    "agreement_fraction",
                    "perturbation_bound",
                ],
                rows,
            )
        }
        other => {
            return Err(CliError::Schema(format!("operation `{other}` unknown")));
        }
    };

    let record = ExperimentRecord {
        spec: spec.clone(),
        header: header.iter().map(|s| s.to_string()).collect(),
        rows,
        input_hash: {
            let mut h = Sha256::new();
            h.update(spec.canonical_json().as_bytes());
            format!("{:x}", h.finalize())
        },
        wall_ms: started.elapsed().as_millis(),
        peak_rss_kb: peak_rss_kb(),
    };

    if let Some(dir) = out_override.map(PathBuf::from).or_else(|| {
        spec.output_dir.as_ref().map(PathBuf::from)
    }) {
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Other(format!("create {}: {e}", dir.display())))?;
        let csv_path = dir.join(format!("{}.csv", spec.name));
        std::fs::write(&csv_path, record.to_csv())
            .map_err(|e| CliError::Other(format!("write {}: {e}", csv_path.display())))?;
        let json_path = dir.join(format!("{}.json", spec.name));
        let body = serde_json::to_string_pretty(&record)
            .map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(&json_path, body)
            .map_err(|e| CliError::Other(format!("write {}: {e}", json_path.display())))?;
    }
    Ok(record)
}
