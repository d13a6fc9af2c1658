//! Experiment configuration: a single JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::{EnvKind, Environment, Schedule, WeightRule};
use crate::error::{Error, Result};
use crate::graph::{GraphFamily, Label};
use crate::walker::TruncationPolicy;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphSpec {
    Line,
    Grid2d,
    Tree {
        branching: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        root_degree: Option<usize>,
    },
    /// Edge-list file, relative to the config file.
    EdgeList { path: PathBuf },
    Explicit { edges: Vec<(usize, usize)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Static,
    Scheduled(Schedule),
    OnceReinforced { delta: f64 },
    LinearReinforced { increment: f64 },
    Tabulated { configs: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub horizon: usize,
    pub radius: usize,
}

impl Default for TraceSpec {
    fn default() -> Self {
        TraceSpec {
            horizon: 200,
            radius: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Residual allowed for linear solves and exact identities.
    pub solver: f64,
    /// Monte Carlo agreement threshold in standard errors.
    pub mc_sigma: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            solver: 1e-10,
            mc_sigma: 4.0,
        }
    }
}

/// Sample sizes for the verification suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    pub thomson_flows: usize,
    pub rayleigh_bumps: usize,
    pub perturbation_pairs: usize,
    pub identity_networks: usize,
    /// Largest radius used by the random-configuration checks.
    pub random_radius: usize,
    pub exact_horizon: usize,
    pub martingale_depth: usize,
    /// Radius of the star used by the martingale checks; defaults to `max(D_max, 2)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub martingale_radius: Option<usize>,
    pub freeze_level: f64,
    pub crossing_trials: usize,
    pub ellipticity_trials: usize,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            thomson_flows: 1000,
            rayleigh_bumps: 200,
            perturbation_pairs: 100,
            identity_networks: 100,
            random_radius: 6,
            exact_horizon: 4,
            martingale_depth: 2,
            martingale_radius: None,
            freeze_level: 150.0,
            crossing_trials: 2000,
            ellipticity_trials: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub format: Format,
}

fn default_probe() -> usize {
    4
}

fn default_max_radius() -> usize {
    1000
}

fn default_visit_radius() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub graph: GraphSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<i64>>,
    #[serde(default)]
    pub weights: WeightRule,
    pub environment: EnvSpec,
    pub radii: Vec<usize>,
    pub horizon: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<i64>>,
    #[serde(default = "default_probe")]
    pub probe_radius: usize,
    #[serde(default)]
    pub trace: TraceSpec,
    #[serde(default = "default_max_radius")]
    pub max_radius: usize,
    #[serde(default = "default_truncation")]
    pub truncation: TruncationPolicy,
    #[serde(default = "default_visit_radius")]
    pub visit_radius: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub checks: CheckSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_truncation() -> TruncationPolicy {
    TruncationPolicy::Stop
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {:?} is not supported (expected {SCHEMA_VERSION:?})",
                self.schema_version
            ));
        }
        if self.radii.is_empty() || self.radii[0] == 0 {
            return bad("radii must be non-empty and positive".into());
        }
        if self.radii.windows(2).any(|w| w[0] >= w[1]) {
            return bad("radii must be strictly ascending".into());
        }
        if self.horizon == 0 || self.trials == 0 {
            return bad("horizon and trials must be at least 1".into());
        }
        if self.probe_radius < 2 {
            return bad("probe_radius must be at least 2".into());
        }
        if self.trace.horizon == 0 || self.trace.radius == 0 {
            return bad("trace horizon and radius must be at least 1".into());
        }
        for (name, v) in [
            ("solver", self.tolerances.solver),
            ("mc_sigma", self.tolerances.mc_sigma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("tolerance {name} must be positive"));
            }
        }
        if !(self.checks.freeze_level >= 1.0) {
            return bad("freeze_level must be at least 1".into());
        }
        match self.weights {
            WeightRule::Constant { value } if !(value.is_finite() && value > 0.0) => {
                return bad(format!("constant weight {value} must be positive"));
            }
            WeightRule::Geometric { ratio } => {
                if !(ratio.is_finite() && ratio > 0.0) {
                    return bad(format!("geometric ratio {ratio} must be positive"));
                }
                if self.graph != GraphSpec::Line {
                    return bad("geometric weights need the line family".into());
                }
            }
            _ => {}
        }
        self.environment().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn environment(&self) -> Result<Environment> {
        let kind = match &self.environment {
            EnvSpec::Static => return Ok(Environment::static_env(self.weights.clone())),
            EnvSpec::Scheduled(s) => EnvKind::Scheduled(s.clone()),
            EnvSpec::OnceReinforced { delta } => EnvKind::OnceReinforced { delta: *delta },
            EnvSpec::LinearReinforced { increment } => EnvKind::LinearReinforced {
                increment: *increment,
            },
            EnvSpec::Tabulated { configs } => EnvKind::Tabulated {
                configs: configs.clone(),
            },
        };
        Environment::new(kind, self.weights.clone())
    }

    /// Graph family, resolving edge-list paths against `base_dir`.
    pub fn family(&self, base_dir: &Path) -> Result<GraphFamily> {
        let family = match &self.graph {
            GraphSpec::Line => GraphFamily::line(),
            GraphSpec::Grid2d => GraphFamily::grid2d(),
            GraphSpec::Tree {
                branching,
                root_degree: None,
            } => GraphFamily::tree(*branching)?,
            GraphSpec::Tree {
                branching,
                root_degree: Some(r),
            } => GraphFamily::tree_with_root_degree(*branching, *r)?,
            GraphSpec::EdgeList { path } => GraphFamily::from_edge_list_file(&base_dir.join(path))?,
            GraphSpec::Explicit { edges } => GraphFamily::explicit(edges)?,
        };
        let family = match &self.origin {
            Some(o) => family.with_origin(Label(o.clone()))?,
            None => family,
        };
        Ok(match &self.name {
            Some(n) => family.with_name(n.clone()),
            None => family,
        })
    }

    pub fn start_label(&self) -> Option<Label> {
        self.start.clone().map(Label)
    }
}

/// Reads, parses and validates a config file. Returns it with its raw bytes.
pub fn load(path: &Path) -> Result<(ExperimentConfig, Vec<u8>)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
    let cfg = ExperimentConfig::from_json(text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.family(base).map_err(|e| Error::Config(e.to_string()))?;
    Ok((cfg, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": "1",
        "graph": {"family": "line"},
        "environment": {"kind": "static"},
        "radii": [2, 4, 8],
        "horizon": 100,
        "trials": 10
    }"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.probe_radius, 4);
        assert_eq!(cfg.truncation, TruncationPolicy::Stop);
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_values() {
        let neg = MINIMAL.replace(
            r#""environment""#,
            r#""weights": {"rule": "constant", "value": -1.0}, "environment""#,
        );
        assert!(matches!(ExperimentConfig::from_json(&neg), Err(Error::Config(_))));
        let unsorted = MINIMAL.replace("[2, 4, 8]", "[4, 2]");
        assert!(ExperimentConfig::from_json(&unsorted).is_err());
        let zero = MINIMAL.replace(r#""trials": 10"#, r#""trials": 0"#);
        assert!(ExperimentConfig::from_json(&zero).is_err());
        let version = MINIMAL.replace(r#""1""#, r#""2""#);
        assert!(ExperimentConfig::from_json(&version).is_err());
        let unknown = MINIMAL.replace(r#""trials": 10"#, r#""trials": 10, "colour": 1"#);
        assert!(ExperimentConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn scheduled_environment_parses() {
        let text = MINIMAL.replace(
            r#"{"kind": "static"}"#,
            r#"{"kind": "scheduled", "formula": "decay", "rate": 0.5, "amplitude": 1.0, "exponent": 2.0}"#,
        );
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert!(!cfg.environment().unwrap().is_adaptive());
    }
}
