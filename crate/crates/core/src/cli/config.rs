//! Experiment configuration, read from JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::pseudoquon::{RankOneDeformation, SimilarityOperator, SplitSupport};
use crate::qcore::QParam;
use crate::{C64, CVector};
use crate::fock::FockVector;

use super::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub q: f64,
    #[serde(rename = "K", alias = "k", default = "default_k")]
    pub k: usize,
    pub family: FamilyConfig,
    #[serde(default)]
    pub tasks: Vec<TaskEntry>,
    /// Per-metric overrides keyed `task.metric`.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    64
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Identity,
    /// `u`, `v` as lists of `[re, im]`; both omitted selects the standard
    /// split-support pair.
    RankOne {
        alpha_def: [f64; 2],
        #[serde(default)]
        u: Option<Vec<[f64; 2]>>,
        #[serde(default)]
        v: Option<Vec<[f64; 2]>>,
    },
    Position { gamma: f64 },
}

impl FamilyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyConfig::Identity => "identity",
            FamilyConfig::RankOne { .. } => "rank_one",
            FamilyConfig::Position { .. } => "position",
        }
    }

    /// Whether this is the standard split-support configuration.
    pub fn is_standard_split(&self) -> bool {
        matches!(self, FamilyConfig::RankOne { u: None, v: None, .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Mutator,
    Family,
    Theta,
    Bicoherent,
    Resolution,
    Position,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Mutator => "mutator",
            TaskKind::Family => "family",
            TaskKind::Theta => "theta",
            TaskKind::Bicoherent => "bicoherent",
            TaskKind::Resolution => "resolution",
            TaskKind::Position => "position",
        }
    }
}

/// A task given either by name or with parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TaskEntry {
    Name(TaskKind),
    Detailed(TaskConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Mutator,
    Family,
    Theta,
    Bicoherent {
        #[serde(default)]
        z_grid: ZGrid,
    },
    Resolution {
        #[serde(default = "default_k_mom")]
        k_mom: usize,
        #[serde(default = "default_n_theta")]
        n_theta: usize,
        #[serde(default = "default_pairs")]
        pairs: usize,
        /// Random test vectors live in indices below this.
        #[serde(default = "default_support")]
        support: usize,
    },
    Position {
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
}

fn default_k_mom() -> usize {
    12
}
fn default_n_theta() -> usize {
    64
}
fn default_pairs() -> usize {
    20
}
fn default_support() -> usize {
    6
}
fn default_n_max() -> usize {
    6
}

/// Polar grid with radii up to `radius_fraction · ρ`, or up to `r_max`
/// when given (required at q = 1 where ρ is infinite).
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZGrid {
    pub radius_fraction: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub r_max: Option<f64>,
}

impl Default for ZGrid {
    fn default() -> Self {
        Self { radius_fraction: 0.9, n_r: 5, n_theta: 8, r_max: None }
    }
}

impl ZGrid {
    pub fn outer_radius(&self, rho: f64) -> f64 {
        self.r_max.unwrap_or(self.radius_fraction * rho)
    }
}

impl TaskEntry {
    pub fn resolve(&self) -> TaskConfig {
        match self {
            TaskEntry::Detailed(t) => t.clone(),
            TaskEntry::Name(k) => TaskConfig::default_for(*k),
        }
    }
}

impl TaskConfig {
    pub fn default_for(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Mutator => TaskConfig::Mutator,
            TaskKind::Family => TaskConfig::Family,
            TaskKind::Theta => TaskConfig::Theta,
            TaskKind::Bicoherent => TaskConfig::Bicoherent { z_grid: ZGrid::default() },
            TaskKind::Resolution => TaskConfig::Resolution {
                k_mom: default_k_mom(),
                n_theta: default_n_theta(),
                pairs: default_pairs(),
                support: default_support(),
            },
            TaskKind::Position => TaskConfig::Position { n_max: default_n_max() },
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            TaskConfig::Mutator => TaskKind::Mutator,
            TaskConfig::Family => TaskKind::Family,
            TaskConfig::Theta => TaskKind::Theta,
            TaskConfig::Bicoherent { .. } => TaskKind::Bicoherent,
            TaskConfig::Resolution { .. } => TaskKind::Resolution,
            TaskConfig::Position { .. } => TaskKind::Position,
        }
    }
}

fn to_vector(raw: &[[f64; 2]]) -> FockVector {
    FockVector(CVector::from_iterator(raw.len(), raw.iter().map(|[re, im]| C64::new(*re, *im))))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn task_list(&self) -> Vec<TaskConfig> {
        let mut tasks: Vec<TaskConfig> = self.tasks.iter().map(TaskEntry::resolve).collect();
        // Stable sort keeps duplicates in file order.
        tasks.sort_by_key(|t| t.kind());
        tasks
    }

    pub fn qparam(&self) -> QParam {
        QParam::new(self.q).expect("validated")
    }

    /// The similarity operator of a Fock-space family.
    pub fn similarity(&self) -> Result<Option<SimilarityOperator>, CliError> {
        match &self.family {
            FamilyConfig::Identity => Ok(Some(SimilarityOperator::Identity)),
            FamilyConfig::RankOne { alpha_def, u, v } => {
                let alpha = C64::new(alpha_def[0], alpha_def[1]);
                let def = match (u, v) {
                    (None, None) => SplitSupport::standard().deformation(alpha),
                    (Some(u), Some(v)) => RankOneDeformation::new(to_vector(u), to_vector(v), alpha),
                    _ => return Err(CliError::Config("family: give both u and v or neither".into())),
                }
                .map_err(|e| CliError::Config(format!("family: {e}")))?;
                Ok(Some(SimilarityOperator::RankOne(def)))
            }
            FamilyConfig::Position { .. } => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if !self.q.is_finite() {
            return bad("q", "must be finite".into());
        }
        if self.k < 2 {
            return bad("K", format!("truncation {} is below 2", self.k));
        }
        let fock = !matches!(self.family, FamilyConfig::Position { .. });
        if fock {
            if self.q <= -1.0 {
                return bad("q", format!("{} is outside (-1, inf) where ladder families exist", self.q));
            }
            self.similarity()?;
        } else if let FamilyConfig::Position { gamma } = self.family {
            if !(self.q > 0.0 && self.q < 1.0) {
                return bad("q", format!("{} is outside (0, 1) required by the position family", self.q));
            }
            if !gamma.is_finite() {
                return bad("family.gamma", "must be finite".into());
            }
        }
        for (i, task) in self.tasks.iter().map(TaskEntry::resolve).enumerate() {
            let field = format!("tasks[{i}]");
            match task {
                TaskConfig::Mutator | TaskConfig::Family | TaskConfig::Theta if !fock => {
                    return bad(&field, format!("{} needs a Fock-space family", task.kind().name()));
                }
                TaskConfig::Bicoherent { z_grid } => {
                    if !fock {
                        return bad(&field, "bicoherent needs a Fock-space family".into());
                    }
                    if !(self.q > 0.0 && self.q <= 1.0) {
                        return bad("q", format!("{} leaves the coherent-state radius undefined; need 0 < q <= 1", self.q));
                    }
                    let zf = format!("{field}.z_grid");
                    if !(z_grid.radius_fraction > 0.0 && z_grid.radius_fraction < 1.0) || z_grid.n_r == 0 || z_grid.n_theta == 0 {
                        return bad(&zf, "radius_fraction in (0, 1) and nonzero counts required".into());
                    }
                    let rho = self.qparam().coherent_radius();
                    match z_grid.r_max {
                        None if rho.is_infinite() => {
                            return bad(&zf, "the radius is infinite at q = 1; give r_max".into());
                        }
                        Some(r) if !(r > 0.0 && r < rho) => {
                            return bad(&format!("{zf}.r_max"), format!("{r} is outside (0, {rho})"));
                        }
                        _ => {}
                    }
                }
                TaskConfig::Resolution { k_mom, n_theta, support, .. } => {
                    if !fock {
                        return bad(&field, "resolution needs a Fock-space family".into());
                    }
                    if !(self.q > 0.0 && self.q < 1.0) {
                        return bad("q", format!("{} is outside (0, 1) required by the moment problem", self.q));
                    }
                    if k_mom == 0 || support == 0 || support > k_mom || support >= self.k {
                        return bad(&field, format!("need 0 < support <= k_mom and support < K, got support {support}, k_mom {k_mom}"));
                    }
                    if n_theta < support {
                        return bad(&field, format!("n_theta {n_theta} cannot resolve products of degree {}", support - 1));
                    }
                }
                TaskConfig::Position { .. } if fock => {
                    return bad(&field, "position needs the position family".into());
                }
                _ => {}
            }
        }
        for (key, tol) in &self.tolerances {
            if !(tol.is_finite() && *tol >= 0.0) {
                return bad(&format!("tolerances.{key}"), format!("{tol} is not a nonnegative number"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let cfg = ExperimentConfig::from_json(r#"{"q":0.5,"K":64,"family":{"kind":"identity"},"tasks":["mutator"]}"#).unwrap();
        assert_eq!(cfg.k, 64);
        assert_eq!(cfg.task_list()[0].kind(), TaskKind::Mutator);
    }

    #[test]
    fn detailed_tasks_and_order() {
        let cfg = ExperimentConfig::from_json(
            r#"{"q":0.5,"K":64,"family":{"kind":"rank_one","alpha_def":[0,1]},
                "tasks":[{"kind":"resolution","k_mom":8},"family",{"kind":"bicoherent","z_grid":{"radius_fraction":0.5,"n_r":2,"n_theta":4}}]}"#,
        )
        .unwrap();
        let kinds: Vec<_> = cfg.task_list().iter().map(|t| t.kind()).collect();
        assert_eq!(kinds, vec![TaskKind::Family, TaskKind::Bicoherent, TaskKind::Resolution]);
        assert!(cfg.family.is_standard_split());
    }

    #[test]
    fn field_paths_in_errors() {
        let err = ExperimentConfig::from_json(r#"{"q":0.5,"family":{"kind":"position","gamma":"x"}}"#).unwrap_err();
        assert!(err.to_string().contains("family"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"q":0.5,"family":{"kind":"identity"},"tasks":["bogus"]}"#).unwrap_err();
        assert!(err.to_string().contains("tasks[0]"), "{err}");
    }

    #[test]
    fn out_of_domain_rejections() {
        let err = ExperimentConfig::from_json(r#"{"q":1.5,"family":{"kind":"identity"},"tasks":["bicoherent"]}"#).unwrap_err();
        assert!(err.to_string().contains("radius"), "{err}");
        assert!(ExperimentConfig::from_json(r#"{"q":0.5,"family":{"kind":"identity"},"tasks":["position"]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"q":0.5,"family":{"kind":"position","gamma":0.3},"tasks":["theta"]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"q":0.5,"family":{"kind":"rank_one","alpha_def":[-1,0]}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"q":0.5,"K":1,"family":{"kind":"identity"}}"#).is_err());
        // q > 1 is fine for purely algebraic tasks
        assert!(ExperimentConfig::from_json(r#"{"q":1.5,"family":{"kind":"identity"},"tasks":["mutator"]}"#).is_ok());
    }
}
