//! JSON problem files: the on-disk schema (versioned with `"schema": 1`)
//! and its conversion into a runnable [`ProblemSpec`].

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::dynamics::{DynError, HamiltonianDensity, LagrangianDensity};
use crate::fields::{FieldError, ScalarField};
use crate::geometry::{x_names, BundleDims, Connection, SectionE};
use crate::verify::{ProblemSpec, SampleBox, Tolerances};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid problem JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {0}; this build reads version 1")]
    Schema(u64),
    #[error("m and n must be at least 1")]
    BadDims,
    #[error("at least one of \"lagrangian\" or \"hamiltonian\" is required")]
    NoDensity,
    #[error("bad christoffel key {key:?}: expected \"k,i,j\" with 1-based indices up to {m}")]
    BadGammaKey { key: String, m: usize },
    #[error("section {name:?} must list exactly {n} fibre components, got {got}")]
    BadSection { name: String, n: usize, got: usize },
    #[error("box bounds must satisfy lo < hi and be finite")]
    BadBox,
    #[error("in {what}: {source}")]
    Density {
        what: String,
        #[source]
        source: DynError,
    },
    #[error("in {what}: {source}")]
    Field {
        what: String,
        #[source]
        source: FieldError,
    },
}

fn default_samples() -> usize {
    50
}

/// Top-level document. Unknown keys are rejected so typos in problem
/// files surface as errors rather than silently falling back to
/// defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema: u64,
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub lagrangian: Option<String>,
    #[serde(default)]
    pub hamiltonian: Option<String>,
    #[serde(default)]
    pub connection: Option<ConnectionFile>,
    #[serde(default)]
    pub sections: BTreeMap<String, Vec<String>>,
    #[serde(rename = "box", default)]
    pub sample_box: Option<BoxFile>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Option<TolerancesFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionFile {
    #[serde(default = "default_symmetric")]
    pub symmetric: bool,
    #[serde(default)]
    pub gamma: BTreeMap<String, String>,
}

fn default_symmetric() -> bool {
    true
}

/// Either one interval for every coordinate or a per-variable map;
/// variables absent from the map sample from [-1, 1].
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum BoxFile {
    Interval([f64; 2]),
    PerVar(BTreeMap<String, [f64; 2]>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesFile {
    #[serde(default)]
    pub tau_eq: Option<f64>,
    #[serde(default)]
    pub tau_pde: Option<f64>,
    #[serde(default)]
    pub tau_rank: Option<f64>,
}

impl FromStr for ProblemFile {
    type Err = ProblemError;

    fn from_str(src: &str) -> Result<ProblemFile, ProblemError> {
        Ok(serde_json::from_str(src)?)
    }
}

impl ProblemFile {
    pub fn from_path(path: impl AsRef<Path>) -> Result<ProblemFile, ProblemError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ProblemFile::from_str(&src)
    }

    /// Parses every expression, assembles the connection and sections,
    /// and resolves sampling policy into a runnable spec.
    pub fn into_spec(self) -> Result<ProblemSpec, ProblemError> {
        if self.schema != 1 {
            return Err(ProblemError::Schema(self.schema));
        }
        if self.m == 0 || self.n == 0 {
            return Err(ProblemError::BadDims);
        }
        if self.lagrangian.is_none() && self.hamiltonian.is_none() {
            return Err(ProblemError::NoDensity);
        }
        let dims = BundleDims::new(self.m, self.n);

        let lagrangian = self
            .lagrangian
            .as_deref()
            .map(|src| {
                LagrangianDensity::parse(src, dims).map_err(|source| ProblemError::Density {
                    what: "lagrangian".into(),
                    source,
                })
            })
            .transpose()?;
        let hamiltonian = self
            .hamiltonian
            .as_deref()
            .map(|src| {
                HamiltonianDensity::parse(src, dims).map_err(|source| ProblemError::Density {
                    what: "hamiltonian".into(),
                    source,
                })
            })
            .transpose()?;

        let connection = match &self.connection {
            None => Connection::zero(self.m),
            Some(cf) => parse_connection(cf, self.m)?,
        };

        let mut sections = Vec::with_capacity(self.sections.len());
        for (name, comps) in &self.sections {
            if comps.len() != self.n {
                return Err(ProblemError::BadSection {
                    name: name.clone(),
                    n: self.n,
                    got: comps.len(),
                });
            }
            let phi = SectionE::parse(comps, self.m).map_err(|source| ProblemError::Field {
                what: format!("section \"{name}\""),
                source,
            })?;
            sections.push((name.clone(), phi));
        }

        let sample_box = match self.sample_box {
            None => SampleBox::default(),
            Some(BoxFile::Interval([lo, hi])) => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(ProblemError::BadBox);
                }
                SampleBox::uniform(lo, hi)
            }
            Some(BoxFile::PerVar(map)) => {
                let mut per_var = BTreeMap::new();
                for (name, [lo, hi]) in map {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(ProblemError::BadBox);
                    }
                    per_var.insert(name, (lo, hi));
                }
                SampleBox::with_overrides(-1.0, 1.0, per_var)
            }
        };

        let mut tolerances = Tolerances::default();
        if let Some(t) = &self.tolerances {
            if let Some(v) = t.tau_eq {
                tolerances.tau_eq = v;
            }
            if let Some(v) = t.tau_pde {
                tolerances.tau_pde = v;
            }
            if let Some(v) = t.tau_rank {
                tolerances.tau_rank = v;
            }
        }

        Ok(ProblemSpec {
            dims,
            lagrangian,
            hamiltonian,
            connection,
            sections,
            sample_box,
            sample_count: self.samples,
            seed: self.seed,
            tolerances,
        })
    }
}

/// Keys are "k,i,j" with 1-based indices; absent entries are zero.
fn parse_connection(cf: &ConnectionFile, m: usize) -> Result<Connection, ProblemError> {
    let vars = x_names(m);
    let zero = ScalarField::constant(0.0, vars.clone());
    let mut gamma = vec![vec![vec![zero; m]; m]; m];
    for (key, src) in &cf.gamma {
        let bad = || ProblemError::BadGammaKey { key: key.clone(), m };
        let idx: Vec<usize> = key
            .split(',')
            .map(|part| part.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let [k, i, j] = idx[..] else {
            return Err(bad());
        };
        if !(1..=m).contains(&k) || !(1..=m).contains(&i) || !(1..=m).contains(&j) {
            return Err(bad());
        }
        gamma[k - 1][i - 1][j - 1] =
            ScalarField::parse(src, vars.clone()).map_err(|source| ProblemError::Field {
                what: format!("christoffel \"{key}\""),
                source,
            })?;
    }
    Ok(Connection::new(m, gamma, cf.symmetric))
}
