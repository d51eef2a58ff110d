use fkl_core::group::GroupDescriptor;
use fkl_core::sofic::SoficApprox;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupSpec {
    Zd { d: usize },
    Free { rank: usize },
}

impl GroupSpec {
    pub fn descriptor(&self) -> GroupDescriptor {
        match *self {
            GroupSpec::Zd { d } => GroupDescriptor::Zd(d),
            GroupSpec::Free { rank } => GroupDescriptor::Free(rank),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SoficSpec {
    Cyclic { cyclic: Vec<usize> },
    RandomHom { degree: usize, seed: u64 },
}

impl SoficSpec {
    pub fn build(&self, group: &GroupSpec) -> Result<SoficApprox, CliError> {
        match (self, group) {
            (SoficSpec::Cyclic { cyclic }, GroupSpec::Zd { d }) => {
                if cyclic.len() != *d {
                    return Err(CliError::Schema(format!(
                        "sofic.cyclic must list {d} sizes for Z^{d}"
                    )));
                }
                Ok(SoficApprox::cyclic(cyclic)?)
            }
            (SoficSpec::RandomHom { degree, seed }, GroupSpec::Free { rank }) => {
                Ok(SoficApprox::random_hom(*rank, *degree, *seed)?)
            }
            (SoficSpec::Cyclic { .. }, GroupSpec::Free { .. }) => Err(CliError::Schema(
                "sofic.cyclic only applies to group type \"zd\"".into(),
            )),
            (SoficSpec::RandomHom { .. }, GroupSpec::Zd { .. }) => Err(CliError::Schema(
                "sofic random_hom only applies to group type \"free\"".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub delta: Option<f64>,
    pub eps: Option<f64>,
    pub k_max: Option<u32>,
    pub tol: Option<f64>,
    pub c: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub n: Option<usize>,
    pub radius: Option<f64>,
    pub shift: Option<f64>,
    pub perturb: Option<bool>,
    pub alpha: Option<String>,
    pub m_bound: Option<f64>,
}

pub const OPERATIONS: &[&str] = &[
    "detapprox",
    "weakstar",
    "entropy-bounds",
    "lattice",
    "submodule",
    "overlap",
    "mahler",
    "series",
    "spectrum",
    "perturb",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub group: GroupSpec,
    #[serde(default)]
    pub element: Option<String>,
    #[serde(default)]
    pub sofic: Vec<SoficSpec>,
    pub operation: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn positive(field: &str, v: Option<f64>) -> Result<(), CliError> {
    if let Some(x) = v {
        if !(x > 0.0 && x.is_finite()) {
            return Err(CliError::Schema(format!(
                "params.{field} must be positive and finite, got {x}"
            )));
        }
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<ExperimentSpec, CliError> {
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.is_empty() {
            return Err(CliError::Schema("name must be non-empty".into()));
        }
        if !OPERATIONS.contains(&self.operation.as_str()) {
            return Err(CliError::Schema(format!(
                "operation `{}` is not one of {:?}",
                self.operation, OPERATIONS
            )));
        }
        positive("delta", self.params.delta)?;
        positive("eps", self.params.eps)?;
        positive("tol", self.params.tol)?;
        positive("c", self.params.c)?;
        positive("radius", self.params.radius)?;
        positive("m_bound", self.params.m_bound)?;
        if let Some(s) = self.params.shift {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(CliError::Schema(format!(
                    "params.shift must be non-negative and finite, got {s}"
                )));
            }
        }
        let needs_element = !matches!(self.operation.as_str(), "overlap");
        if needs_element && self.element.is_none() {
            return Err(CliError::Schema(format!(
                "operation `{}` requires an element",
                self.operation
            )));
        }
        let needs_sofic = matches!(
            self.operation.as_str(),
            "detapprox"
                | "weakstar"
                | "entropy-bounds"
                | "lattice"
                | "submodule"
                | "spectrum"
                | "perturb"
        );
        if needs_sofic && self.sofic.is_empty() {
            return Err(CliError::Schema(format!(
                "operation `{}` requires at least one sofic level",
                self.operation
            )));
        }
        match self.operation.as_str() {
            "entropy-bounds" => {
                for f in ["delta", "eps"] {
                    let v = if f == "delta" { self.params.delta } else { self.params.eps };
                    if v.is_none() {
                        return Err(CliError::Schema(format!(
                            "entropy-bounds requires params.{f}"
                        )));
                    }
                }
            }
            "submodule" => {
                if self.params.alpha.is_none() {
                    return Err(CliError::Schema("submodule requires params.alpha".into()));
                }
                if self.params.c.is_none() {
                    return Err(CliError::Schema("submodule requires params.c".into()));
                }
            }
            "overlap" => {
                for (f, missing) in [
                    ("n", self.params.n.is_none()),
                    ("radius", self.params.radius.is_none()),
                    ("shift", self.params.shift.is_none()),
                ] {
                    if missing {
                        return Err(CliError::Schema(format!("overlap requires params.{f}")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn sofics(&self) -> Result<Vec<SoficApprox>, CliError> {
        self.sofic.iter().map(|s| s.build(&self.group)).collect()
    }

    /// Canonical JSON used for the content hash: serde_json with preserved
    /// field order of the struct definition.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialization is infallible")
    }
}
