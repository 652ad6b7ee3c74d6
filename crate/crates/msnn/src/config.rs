//! Experiment configuration.
//!
//! A config file is TOML with one table per concern. Every key is optional:
//! the file is merged over the defaults of its case, and the merged result
//! (the "resolved" config) is what `report.txt` embeds.
//!
//! ```toml
//! [case]
//! id = "laplace1d"
//! s = 12.0
//!
//! [mesh]
//! elements = [10]
//!
//! [net]
//! hidden = [4, 8, 5]
//! seeds = [0, 1, 2]
//!
//! [loss]
//! variant = "energy"      # approx-l2, energy, collocation, each also as *-residual-free
//! alpha_p = 100.0
//! beta_d = 1.0
//! beta_c = 1.0
//!
//! [quadrature]
//! kind = "nodal-grid"     # or gauss-cells (cells, points_per_dim), monte-carlo (points, seed)
//! counts = [301]
//!
//! [train]
//! epochs = 28000
//! learning_rate = 0.001
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//! log_every = 100
//!
//! [solver]
//! smoothing = true
//!
//! [output]
//! dir = "runs/laplace1d"
//! sample = [2001]
//! reference_cache = "reference/poisson2d-slit-100x100.txt"
//! ```

use std::path::PathBuf;

use msnn_core::multiscale::{QuadratureSpec, SolveConfig};
use msnn_core::problems::DEFAULT_LOCALIZATION;
use msnn_core::training::TrainConfig;
use msnn_core::{get_case, CaseId, LossVariant, Penalties, ProblemCase};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown case {0:?}")]
    UnknownCase(String),
    #[error("unknown loss variant {0:?}")]
    UnknownLoss(String),
    #[error("{key} needs {expected} entries, got {got}")]
    Arity { key: &'static str, expected: usize, got: usize },
    #[error("parameter s only applies to laplace1d")]
    UnexpectedS,
    #[error("at least one seed is required")]
    NoSeeds,
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// Elements per axis.
    pub elements: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub hidden: Vec<usize>,
    /// One independent training run per seed.
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub variant: String,
    pub alpha_p: f64,
    pub beta_d: f64,
    pub beta_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QuadratureSection {
    NodalGrid { counts: Vec<usize> },
    GaussCells { cells: Vec<usize>, points_per_dim: usize },
    MonteCarlo { points: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub log_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub smoothing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Points per axis of the grid `fields.csv` is sampled on.
    pub sample: Vec<usize>,
    /// Where the slit reference solution is cached.
    pub reference_cache: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: CaseSection,
    pub mesh: MeshSection,
    pub net: NetSection,
    pub loss: LossSection,
    pub quadrature: QuadratureSection,
    pub train: TrainSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];
pub const DEFAULT_REFERENCE_CACHE: &str = "reference/poisson2d-slit-100x100.txt";

fn per_axis(v: [usize; 2], dim: usize) -> Vec<usize> {
    v[..dim].to_vec()
}

fn axes(key: &'static str, v: &[usize], dim: usize) -> Result<[usize; 2], ConfigError> {
    if v.len() != dim {
        return Err(ConfigError::Arity { key, expected: dim, got: v.len() });
    }
    Ok(if dim == 1 { [v[0], 1] } else { [v[0], v[1]] })
}

impl ExperimentConfig {
    /// Defaults of `id`; `s` applies to laplace1d only.
    pub fn defaults(id: CaseId, s: Option<f64>) -> Result<Self, ConfigError> {
        if s.is_some() && id != CaseId::Laplace1d {
            return Err(ConfigError::UnexpectedS);
        }
        let case = get_case(id, s).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let dim = case.dim();
        let solve = SolveConfig::defaults(&case);
        let p = solve.penalties;
        let t = solve.train;
        let sample = case.evaluation_rule().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let sample = match sample.kind {
            msnn_core::quadrature::QuadratureKind::NodalGrid { counts } => per_axis(counts, dim),
            _ => unreachable!("evaluation rules are nodal grids"),
        };
        Ok(ExperimentConfig {
            case: CaseSection {
                id: id.name().into(),
                s: (id == CaseId::Laplace1d).then_some(s.unwrap_or(DEFAULT_LOCALIZATION)),
            },
            mesh: MeshSection { elements: per_axis(case.mesh_counts, dim) },
            net: NetSection { hidden: case.hidden.clone(), seeds: DEFAULT_SEEDS.to_vec() },
            loss: LossSection { variant: solve.loss.name().into(), alpha_p: p.alpha_p, beta_d: p.beta_d, beta_c: p.beta_c },
            quadrature: QuadratureSection::NodalGrid { counts: per_axis(case.quadrature_counts, dim) },
            train: TrainSection {
                epochs: t.epochs,
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
                log_every: t.log_every,
            },
            solver: SolverSection { smoothing: solve.smoothing },
            output: OutputSection {
                dir: PathBuf::from("runs").join(id.name()),
                sample,
                reference_cache: DEFAULT_REFERENCE_CACHE.into(),
            },
        })
    }

    /// Parses a config file and fills every missing key from the defaults
    /// of its case. `case_override` replaces (or supplies) `[case] id`.
    pub fn from_toml(text: &str, case_override: Option<&str>) -> Result<Self, ConfigError> {
        let mut file: toml::Table = toml::from_str(text)?;
        let case = file.entry("case").or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let case = case.as_table_mut().ok_or_else(|| ConfigError::Invalid("[case] must be a table".into()))?;
        if let Some(id) = case_override {
            if case.get("id").and_then(|v| v.as_str()) != Some(id) {
                case.insert("id".into(), toml::Value::String(id.into()));
                case.remove("s");
            }
        }
        let id = case.get("id").and_then(|v| v.as_str()).ok_or_else(|| ConfigError::Invalid("[case] id is required".into()))?;
        let id = CaseId::from_name(id).ok_or_else(|| ConfigError::UnknownCase(id.into()))?;
        let s = case.get("s").map(|v| v.as_float().or(v.as_integer().map(|i| i as f64)));
        let s = match s {
            Some(None) => return Err(ConfigError::Invalid("[case] s must be a number".into())),
            Some(Some(v)) => Some(v),
            None => None,
        };
        let defaults = toml::Table::try_from(Self::defaults(id, s)?).expect("config serializes to a table");
        let merged = merge(defaults, file);
        let cfg: ExperimentConfig = merged.try_into()?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn case_id(&self) -> Result<CaseId, ConfigError> {
        CaseId::from_name(&self.case.id).ok_or_else(|| ConfigError::UnknownCase(self.case.id.clone()))
    }

    pub fn problem(&self) -> Result<ProblemCase, ConfigError> {
        let id = self.case_id()?;
        if self.case.s.is_some() && id != CaseId::Laplace1d {
            return Err(ConfigError::UnexpectedS);
        }
        get_case(id, self.case.s).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// The case plus the solver settings of a single seed-independent run,
    /// validated against the case kind.
    pub fn resolve(&self) -> Result<(ProblemCase, SolveConfig), ConfigError> {
        let case = self.problem()?;
        let dim = case.dim();
        let variant = LossVariant::from_name(&self.loss.variant).ok_or_else(|| ConfigError::UnknownLoss(self.loss.variant.clone()))?;
        let quadrature = match &self.quadrature {
            QuadratureSection::NodalGrid { counts } => QuadratureSpec::NodalGrid { counts: axes("quadrature.counts", counts, dim)? },
            QuadratureSection::GaussCells { cells, points_per_dim } => {
                QuadratureSpec::GaussCells { cells: axes("quadrature.cells", cells, dim)?, points_per_dim: *points_per_dim }
            }
            QuadratureSection::MonteCarlo { points, seed } => QuadratureSpec::MonteCarlo { points: *points, seed: *seed },
        };
        if self.net.seeds.is_empty() {
            return Err(ConfigError::NoSeeds);
        }
        // TOML integers are signed
        let mc_seed = match self.quadrature {
            QuadratureSection::MonteCarlo { seed, .. } => Some(seed),
            _ => None,
        };
        if let Some(s) = self.net.seeds.iter().chain(&mc_seed).find(|&&s| s > i64::MAX as u64) {
            return Err(ConfigError::Invalid(format!("seed {s} exceeds {}", i64::MAX)));
        }
        axes("output.sample", &self.output.sample, dim)?;
        let t = &self.train;
        let solve = SolveConfig {
            mesh_counts: axes("mesh.elements", &self.mesh.elements, dim)?,
            hidden: self.net.hidden.clone(),
            loss: variant,
            penalties: Penalties { alpha_p: self.loss.alpha_p, beta_d: self.loss.beta_d, beta_c: self.loss.beta_c },
            quadrature,
            smoothing: self.solver.smoothing,
            train: TrainConfig {
                epochs: t.epochs,
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
                seed: self.net.seeds[0],
                log_every: t.log_every,
            },
        };
        solve.validate(&case).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok((case, solve))
    }

    pub fn sample_counts(&self) -> [usize; 2] {
        let s = &self.output.sample;
        [s[0], s.get(1).copied().unwrap_or(1)]
    }
}

/// Recursive table merge; a `[quadrature]` table naming a `kind` replaces
/// the default wholesale since each kind has its own keys.
fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !(k == "quadrature" && o.contains_key("kind")) => {
                *b = merge(std::mem::take(b), o);
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for id in CaseId::ALL {
            let cfg = ExperimentConfig::defaults(id, None).unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml(), None).unwrap();
            assert_eq!(back, cfg);
            let (case, solve) = back.resolve().unwrap();
            let mut expected = SolveConfig::defaults(&case);
            expected.train.seed = DEFAULT_SEEDS[0];
            assert_eq!(solve, expected, "{}", id.name());
        }
    }

    #[test]
    fn a_minimal_file_picks_up_case_defaults() {
        let cfg = ExperimentConfig::from_toml("[case]\nid = \"laplace1d\"\ns = 12\n[train]\nepochs = 5\n", None).unwrap();
        assert_eq!(cfg.case.s, Some(12.0));
        assert_eq!(cfg.mesh.elements, vec![10]);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.beta2, 0.999);
        assert_eq!(cfg.quadrature, QuadratureSection::NodalGrid { counts: vec![301] });
    }

    #[test]
    fn quadrature_kind_replaces_the_default_table() {
        let text = "[case]\nid = \"approx2d-cont\"\n[quadrature]\nkind = \"gauss-cells\"\ncells = [4, 4]\npoints_per_dim = 3\n";
        let cfg = ExperimentConfig::from_toml(text, None).unwrap();
        let (_, solve) = cfg.resolve().unwrap();
        assert_eq!(solve.quadrature, QuadratureSpec::GaussCells { cells: [4, 4], points_per_dim: 3 });
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            "[case]\nid = \"burgers\"\n",
            "[train]\nepochs = 5\n",
            "[case]\nid = \"approx1d-cont\"\n[loss]\nvariant = \"energy\"\n",
            "[case]\nid = \"laplace1d\"\n[loss]\nvariant = \"approx-l2\"\n",
            "[case]\nid = \"approx1d-cont\"\ns = 3.0\n",
            "[case]\nid = \"approx1d-cont\"\n[mesh]\nelements = [4, 4]\n",
            "[case]\nid = \"approx1d-cont\"\n[net]\nseeds = []\n",
            "[case]\nid = \"approx1d-cont\"\n[train]\nepoch = 5\n",
            "[case]\nid = \"approx1d-cont\"\n[train]\nlearning_rate = -1.0\n",
            "[case]\nid = \"laplace1d\"\ns = -2.0\n",
        ];
        for text in bad {
            assert!(ExperimentConfig::from_toml(text, None).is_err(), "{text}");
        }
    }

    #[test]
    fn seeds_must_fit_a_toml_integer() {
        let mut cfg = ExperimentConfig::defaults(CaseId::Approx1dCont, None).unwrap();
        cfg.net.seeds = vec![u64::MAX];
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn case_override_drops_a_foreign_s() {
        let cfg = ExperimentConfig::from_toml("[case]\nid = \"laplace1d\"\ns = 12.0\n", Some("approx1d-cont")).unwrap();
        assert_eq!(cfg.case, CaseSection { id: "approx1d-cont".into(), s: None });
    }
}
