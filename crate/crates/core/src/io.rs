//! TOML model files and CSV/JSON result writers.
//!
//! A model file names its states, lists each decision state's successors,
//! factor map and ambiguity set (by reference to a named block), and gives
//! either a stage partition or a discount factor. Parsing is strict: unknown
//! keys are errors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ambiguity::{
    build_hybrid_wasserstein_mad, build_mixture, build_phi_divergence_tv, build_support_only, build_uncertain_mean,
    build_wasserstein, AmbiguityError, FactorMap, LiftedAmbiguitySet, Metric, MixtureComponent,
};
use crate::dp::{Decision, DpError, DpSolution, DrMdpModel, Horizon, State};
use crate::geometry::{AffinePiece, GeometryError, LinearRow, PolyhedralSet, PwlConvexFn};
use crate::newsvendor::ExperimentTable;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("serialization failed: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unsupported format_version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("{context}: {message}")]
    Model { context: String, message: String },
    #[error("ambiguity '{name}': {source}")]
    Ambiguity {
        name: String,
        #[source]
        source: AmbiguityError,
    },
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn model_err(context: impl Into<String>, message: impl ToString) -> IoError {
    IoError::Model { context: context.into(), message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub horizon: HorizonSpec,
    #[serde(default, rename = "ambiguity")]
    pub ambiguities: Vec<AmbiguitySpec>,
    #[serde(rename = "state")]
    pub states: Vec<StateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonSpec {
    /// state names per stage; the first stage holds the initial state
    Finite { stages: Vec<Vec<String>> },
    Infinite { discount: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub successors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambiguity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_map: Option<FactorMapSpec>,
}

/// `p` has one row per (action, successor) pair, action-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorMapSpec {
    pub actions: usize,
    pub p: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Simplex { dim: usize },
    Point { at: Vec<f64> },
    /// rows `[a..., b]` meaning `a.x <= b` (and `a.x = b` for `eq`)
    Polyhedron {
        dim: usize,
        #[serde(default)]
        ineq: Vec<Vec<f64>>,
        #[serde(default)]
        eq: Vec<Vec<f64>>,
    },
}

impl SetSpec {
    pub fn build(&self) -> Result<PolyhedralSet, GeometryError> {
        match self {
            SetSpec::Box { lower, upper } => PolyhedralSet::boxed(lower, upper),
            SetSpec::Simplex { dim } => Ok(PolyhedralSet::simplex(*dim)),
            SetSpec::Point { at } => Ok(PolyhedralSet::point(at)),
            SetSpec::Polyhedron { dim, ineq, eq } => {
                let rows = |rs: &[Vec<f64>]| -> Result<Vec<LinearRow>, GeometryError> {
                    rs.iter()
                        .map(|r| match r.split_last() {
                            Some((b, a)) if a.len() == *dim => Ok(LinearRow::new(a.to_vec(), *b)),
                            _ => Err(GeometryError::DimensionMismatch {
                                context: "polyhedron row",
                                expected: dim + 1,
                                found: r.len(),
                            }),
                        })
                        .collect()
                };
                PolyhedralSet::new(*dim, rows(ineq)?, rows(eq)?)
            }
        }
    }
}

/// Sum of max-blocks; each piece is `[coef..., constant]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PwlSpec {
    pub dim: usize,
    pub blocks: Vec<Vec<Vec<f64>>>,
}

impl PwlSpec {
    fn build(&self) -> Result<PwlConvexFn, GeometryError> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|p| {
                        let (c, a) = p.split_last().ok_or(GeometryError::Invalid("empty affine piece".into()))?;
                        Ok(AffinePiece::new(a.to_vec(), *c))
                    })
                    .collect::<Result<Vec<_>, GeometryError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        PwlConvexFn::new(self.dim, blocks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub support: SetSpec,
    #[serde(default)]
    pub mean_equality: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub g: Vec<PwlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_set: Option<SetSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmbiguitySpec {
    SupportOnly {
        name: String,
        support: SetSpec,
    },
    UncertainMean {
        name: String,
        support: SetSpec,
        mean_lower: Vec<f64>,
        mean_upper: Vec<f64>,
        center: Vec<f64>,
        theta: f64,
        norm: Metric,
    },
    TotalVariation {
        name: String,
        samples: Vec<Vec<f64>>,
        theta: f64,
    },
    Wasserstein {
        name: String,
        samples: Vec<Vec<f64>>,
        theta: f64,
        support: SetSpec,
        metric: Metric,
    },
    WassersteinMad {
        name: String,
        samples: Vec<Vec<f64>>,
        theta: f64,
        support: SetSpec,
        metric: Metric,
        mean_lower: Vec<f64>,
        mean_upper: Vec<f64>,
        mad: f64,
    },
    Mixture {
        name: String,
        components: Vec<ComponentSpec>,
        weights: SetSpec,
    },
}

impl AmbiguitySpec {
    pub fn name(&self) -> &str {
        match self {
            AmbiguitySpec::SupportOnly { name, .. }
            | AmbiguitySpec::UncertainMean { name, .. }
            | AmbiguitySpec::TotalVariation { name, .. }
            | AmbiguitySpec::Wasserstein { name, .. }
            | AmbiguitySpec::WassersteinMad { name, .. }
            | AmbiguitySpec::Mixture { name, .. } => name,
        }
    }

    pub fn build(&self) -> Result<LiftedAmbiguitySet, IoError> {
        let name = self.name().to_string();
        let geo = |what: &str| {
            let ctx = format!("ambiguity '{name}' {what}");
            move |e: GeometryError| model_err(ctx.clone(), e)
        };
        let built = match self {
            AmbiguitySpec::SupportOnly { support, .. } => build_support_only(support.build().map_err(geo("support"))?),
            AmbiguitySpec::UncertainMean { support, mean_lower, mean_upper, center, theta, norm, .. } => {
                build_uncertain_mean(support.build().map_err(geo("support"))?, mean_lower, mean_upper, center, *theta, *norm)
            }
            AmbiguitySpec::TotalVariation { samples, theta, .. } => build_phi_divergence_tv(samples, *theta),
            AmbiguitySpec::Wasserstein { samples, theta, support, metric, .. } => {
                build_wasserstein(samples, *theta, support.build().map_err(geo("support"))?, *metric)
            }
            AmbiguitySpec::WassersteinMad { samples, theta, support, metric, mean_lower, mean_upper, mad, .. } => {
                build_hybrid_wasserstein_mad(
                    samples,
                    *theta,
                    support.build().map_err(geo("support"))?,
                    *metric,
                    mean_lower,
                    mean_upper,
                    *mad,
                )
            }
            AmbiguitySpec::Mixture { components, weights, .. } => {
                let comps = components
                    .iter()
                    .enumerate()
                    .map(|(n, c)| {
                        let what = format!("component {n}");
                        Ok(MixtureComponent {
                            support: c.support.build().map_err(geo(&what))?,
                            mean_equality: c.mean_equality,
                            g: c.g.iter().map(|g| g.build().map_err(geo(&what))).collect::<Result<_, _>>()?,
                            moment_set: c.moment_set.as_ref().map(|m| m.build().map_err(geo(&what))).transpose()?,
                        })
                    })
                    .collect::<Result<Vec<_>, IoError>>()?;
                build_mixture(comps, weights.build().map_err(geo("weights"))?)
            }
        };
        built.map_err(|source| IoError::Ambiguity { name, source })
    }
}

impl ModelFile {
    /// Parses TOML; syntax errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let file: ModelFile = toml::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(IoError::Version { found: file.format_version });
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        Ok(toml::to_string(self)?)
    }

    /// Builds the model; each ambiguity block is built once and shared by
    /// every state referencing it.
    pub fn build(&self) -> Result<DrMdpModel, IoError> {
        let mut index = HashMap::new();
        for (i, s) in self.states.iter().enumerate() {
            if index.insert(s.name.as_str(), i).is_some() {
                return Err(model_err(format!("state '{}'", s.name), "duplicate state name"));
            }
        }
        let mut sets: HashMap<&str, Arc<LiftedAmbiguitySet>> = HashMap::new();
        for spec in &self.ambiguities {
            if sets.insert(spec.name(), Arc::new(spec.build()?)).is_some() {
                return Err(model_err(format!("ambiguity '{}'", spec.name()), "duplicate name"));
            }
        }
        let lookup = |ctx: &str, name: &str| index.get(name).copied().ok_or_else(|| model_err(ctx, format!("unknown state '{name}'")));

        let mut states = Vec::with_capacity(self.states.len());
        for s in &self.states {
            let ctx = format!("state '{}'", s.name);
            let decision = match (&s.factor_map, &s.ambiguity) {
                (None, None) if s.successors.is_empty() => None,
                (Some(fm), Some(amb)) => {
                    let ambiguity = sets.get(amb.as_str()).cloned().ok_or_else(|| model_err(&ctx, format!("unknown ambiguity '{amb}'")))?;
                    let successors = s.successors.iter().map(|n| lookup(&ctx, n)).collect::<Result<Vec<_>, _>>()?;
                    let factor_map = fm.build(ambiguity.factor_dim(), successors.len()).map_err(|m| model_err(&ctx, m))?;
                    Some(Decision { successors, factor_map, ambiguity })
                }
                _ => return Err(model_err(&ctx, "decision states need successors, factor_map and ambiguity together")),
            };
            states.push(State { name: s.name.clone(), decision });
        }
        let horizon = match &self.horizon {
            HorizonSpec::Finite { stages } => Horizon::Finite {
                stages: stages
                    .iter()
                    .map(|st| st.iter().map(|n| lookup("horizon", n)).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<_, _>>()?,
            },
            HorizonSpec::Infinite { discount } => Horizon::Infinite { discount: *discount },
        };
        let terminal = self.states.iter().map(|s| s.terminal.unwrap_or(0.0)).collect();
        Ok(DrMdpModel::new(states, horizon, Some(terminal))?)
    }
}

impl FactorMapSpec {
    fn build(&self, d: usize, nn: usize) -> Result<FactorMap, String> {
        let na = self.actions;
        let p0 = self.p0.clone().unwrap_or_else(|| vec![0.0; na * nn]);
        let r0 = self.r0.clone().unwrap_or_else(|| vec![0.0; na]);
        if self.p.len() != na * nn {
            return Err(format!("factor map needs {} rows in p ({na} actions x {nn} successors), found {}", na * nn, self.p.len()));
        }
        FactorMap::new(d, na, nn, self.p.clone(), p0, self.r.clone(), r0).map_err(|e| e.to_string())
    }
}

// ---------------------------------------------------------------------------
// outputs

/// `state,value` rows.
pub fn values_csv(model: &DrMdpModel, values: &[f64]) -> String {
    let mut out = String::from("state,value\n");
    for (s, v) in model.states().iter().zip(values) {
        let _ = writeln!(out, "{},{v:.12}", s.name);
    }
    out
}

/// `state,action,probability` rows for decision states.
pub fn policy_csv(model: &DrMdpModel, sol: &DpSolution) -> String {
    let mut out = String::from("state,action,probability\n");
    for (s, d) in model.states().iter().zip(&sol.policy.dists) {
        for (a, p) in d.iter().enumerate() {
            let _ = writeln!(out, "{},{a},{p:.12}", s.name);
        }
    }
    out
}

pub fn records_csv(table: &ExperimentTable) -> String {
    let mut out = String::from("theta,N,repetition,mean_cost\n");
    for r in &table.records {
        let _ = writeln!(out, "{},{},{},{:.10}", r.theta, r.train_size, r.repetition, r.mean_cost);
    }
    out
}

pub fn summary_csv(table: &ExperimentTable) -> String {
    let mut out = String::from("theta,N,mean,std\n");
    for c in &table.summary {
        let _ = writeln!(out, "{},{},{:.10},{:.10}", c.theta, c.train_size, c.mean, c.std);
    }
    out
}
