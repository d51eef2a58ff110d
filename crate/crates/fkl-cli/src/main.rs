mod report;
mod runner;
mod spec;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fkl_core::fk::{mahler_quadrature, series_log_det};
use fkl_core::group::GroupDescriptor;
use fkl_core::lattice::{small_vector_count, smith_normal_form, IntMat};
use fkl_core::parse::parse_matrix;
use fkl_core::sofic::SoficApprox;
use fkl_core::spectral::singular_spectrum;
use fkl_core::FklError;
use num_bigint::BigInt;
use num_rational::BigRational;

#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Core(FklError),
    Other(String),
}

impl From<FklError> for CliError {
    fn from(e: FklError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Core(FklError::ResourceCeiling { .. }) => 3,
            CliError::Core(FklError::OracleRefusal(_)) => 4,
            // remaining core errors are spec-content problems
            CliError::Core(_) => 2,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Schema(m) => format!("schema error: {m}"),
            CliError::Core(e) => e.to_string(),
            CliError::Other(m) => m.clone(),
        }
    }
}

#[derive(Parser)]
#[command(name = "fkl", about = "laboratory for determinants and entropy of algebraic actions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct GroupArgs {
    /// dimension of Z^d
    #[arg(long, conflicts_with = "free")]
    d: Option<usize>,
    /// rank of the free group F_r
    #[arg(long)]
    free: Option<usize>,
}

impl GroupArgs {
    fn descriptor(&self) -> Result<GroupDescriptor, CliError> {
        match (self.d, self.free) {
            (Some(d), None) => Ok(GroupDescriptor::Zd(d)),
            (None, Some(r)) => Ok(GroupDescriptor::Free(r)),
            _ => Err(CliError::Schema("pass exactly one of --d or --free".into())),
        }
    }
}

#[derive(Args, Clone)]
struct SoficArgs {
    /// cyclic quotient sizes, comma separated (Z^d)
    #[arg(long, value_delimiter = ',')]
    cyclic: Option<Vec<usize>>,
    /// degree of a random homomorphism level (free groups)
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SoficArgs {
    fn build(&self, group: &GroupDescriptor) -> Result<SoficApprox, CliError> {
        match (group, &self.cyclic, self.degree) {
            (GroupDescriptor::Zd(d), Some(sizes), None) => {
                if sizes.len() != *d {
                    return Err(CliError::Schema(format!("--cyclic needs {d} sizes")));
                }
                Ok(SoficApprox::cyclic(sizes)?)
            }
            (GroupDescriptor::Free(r), None, Some(deg)) => {
                Ok(SoficApprox::random_hom(*r, deg, self.seed)?)
            }
            _ => Err(CliError::Schema(
                "pass --cyclic for --d groups, --degree [--seed] for --free groups".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// run an experiment spec (JSON, one experiment per file)
    Run {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// render SVG + text summary from experiment records
    Report {
        records: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// logarithmic Mahler measure by adaptive torus quadrature
    Mahler {
        #[arg(long)]
        element: String,
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
    /// log-determinant by the dominant-diagonal power series
    Series {
        #[arg(long)]
        element: String,
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long, default_value_t = 12)]
        k_max: u32,
    },
    /// Smith normal form of an integer matrix (MatrixMarket file)
    Snf { matrix: PathBuf },
    /// sofic lift of a group-ring matrix, as MatrixMarket
    Lift {
        #[arg(long)]
        element: String,
        #[command(flatten)]
        group: GroupArgs,
        #[command(flatten)]
        sofic: SoficArgs,
    },
    /// singular-value spectral measure of a lift, as CSV
    Spectrum {
        #[arg(long)]
        element: String,
        #[command(flatten)]
        group: GroupArgs,
        #[command(flatten)]
        sofic: SoficArgs,
    },
    /// count integer vectors in the normalized l1 ball of radius r
    CountSmall {
        #[arg(long)]
        n: u64,
        /// radius, an integer or fraction like 1/2
        #[arg(long)]
        r: String,
    },
}

fn parse_rational(text: &str) -> Result<BigRational, CliError> {
    let bad = |_| CliError::Schema(format!("cannot parse rational `{text}`"));
    match text.split_once('/') {
        Some((p, q)) => Ok(BigRational::new(
            p.trim().parse::<BigInt>().map_err(bad)?,
            q.trim().parse::<BigInt>().map_err(bad)?,
        )),
        None => Ok(BigRational::from(text.trim().parse::<BigInt>().map_err(bad)?)),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Run { spec, out, threads } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| CliError::Other(format!("read {}: {e}", spec.display())))?;
            let spec = spec::ExperimentSpec::parse(&text)?;
            let record = runner::run(&spec, out.as_deref(), threads)?;
            print!("{}", record.to_csv());
        }
        Cmd::Report { records, out } => {
            if records.is_empty() {
                return Err(CliError::Schema("report needs at least one record".into()));
            }
            let mut recs = Vec::new();
            for path in &records {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Other(format!("read {}: {e}", path.display())))?;
                recs.push(
                    serde_json::from_str(&text)
                        .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?,
                );
            }
            let summary = report::text_summary(&recs);
            print!("{summary}");
            let svg = report::svg_plot(&recs);
            if svg.is_none() {
                println!("no data");
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)
                    .map_err(|e| CliError::Other(format!("create {}: {e}", dir.display())))?;
                std::fs::write(dir.join("report.txt"), &summary)
                    .map_err(|e| CliError::Other(e.to_string()))?;
                if let Some(svg) = svg {
                    std::fs::write(dir.join("report.svg"), svg)
                        .map_err(|e| CliError::Other(e.to_string()))?;
                }
            }
        }
        Cmd::Mahler { element, group, tol } => {
            let f = parse_matrix(&element, group.descriptor()?)?;
            let r = mahler_quadrature(&f, tol)?;
            println!(
                "value_log={} method={} tolerance_met={} error={:?}",
                r.value, r.method, r.tolerance_met, r.error
            );
        }
        Cmd::Series { element, group, k_max } => {
            let f = parse_matrix(&element, group.descriptor()?)?;
            let r = series_log_det(&f, k_max, None)?;
            println!(
                "value_log={} method={} tolerance_met={} error={:?}",
                r.value, r.method, r.tolerance_met, r.error
            );
        }
        Cmd::Snf { matrix } => {
            let text = std::fs::read_to_string(&matrix)
                .map_err(|e| CliError::Other(format!("read {}: {e}", matrix.display())))?;
            let t = IntMat::from_matrix_market(&text)?;
            let snf = smith_normal_form(&t)?;
            let factors: Vec<String> =
                snf.invariant_factors().iter().map(|v| v.to_string()).collect();
            println!("rank={}", snf.rank());
            println!("invariant_factors={}", factors.join(","));
        }
        Cmd::Lift { element, group, sofic } => {
            let g = group.descriptor()?;
            let f = parse_matrix(&element, g)?;
            let s = sofic.build(&g)?;
            let dense = IntMat::from_block_matrix(&s.lift(&f)?);
            print!("{}", dense.to_matrix_market());
        }
        Cmd::Spectrum { element, group, sofic } => {
            let g = group.descriptor()?;
            let f = parse_matrix(&element, g)?;
            let s = sofic.build(&g)?;
            let m = singular_spectrum(&s.lift(&f)?, None)?;
            print!("{}", m.to_csv());
        }
        Cmd::CountSmall { n, r } => {
            let r = parse_rational(&r)?;
            println!("{}", small_vector_count(n, &r)?);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}
