use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fewshot::SolverSettings;
use crate::mnist::{DEFAULT_FEWSHOT_PAIR, DEFAULT_META_PAIRS};
use crate::tasks::TaskFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SubspaceRecoveryGlm,
    SubspaceRecoveryRelu,
    FewShotSynthetic,
    FewShotMnist,
    ConcentrationStudy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SubspaceRecoveryGlm => "subspace_recovery_glm",
            Self::SubspaceRecoveryRelu => "subspace_recovery_relu",
            Self::FewShotSynthetic => "few_shot_synthetic",
            Self::FewShotMnist => "few_shot_mnist",
            Self::ConcentrationStudy => "concentration_study",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Self::SubspaceRecoveryGlm,
            Self::SubspaceRecoveryRelu,
            Self::FewShotSynthetic,
            Self::FewShotMnist,
            Self::ConcentrationStudy,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// Task-generator parameters. Only the fields relevant to the experiment's
/// task family are used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParamsConfig {
    /// Norm bound on GLM task parameters; `inf` leaves the Gaussian draw as is.
    pub theta_norm_max: f64,
    pub hidden: usize,
    pub noise_std: f64,
}

impl Default for TaskParamsConfig {
    fn default() -> Self {
        Self { theta_norm_max: f64::INFINITY, hidden: 20, noise_std: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewShotConfig {
    /// Few-shot training set sizes.
    pub n: Vec<usize>,
    /// Held-out samples per few-shot task. Unset means 1000 for synthetic
    /// tasks and every remaining image for MNIST.
    pub eval_n: Option<usize>,
    /// Radius `a` of the parameter ball; `inf` is unconstrained.
    pub norm_budget: f64,
    /// Also fit with `P = I_d`.
    pub baseline: bool,
    pub solver: SolverSettings,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self {
            n: Vec::new(),
            eval_n: None,
            norm_budget: f64::INFINITY,
            baseline: true,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnistConfig {
    /// Directory holding the four IDX files.
    pub dir: PathBuf,
    pub pairs: Vec<[u8; 2]>,
    pub per_class: usize,
    pub fewshot_pair: [u8; 2],
    /// Split the few-shot task draws from (`train` or `t10k`).
    pub fewshot_split: String,
}

impl Default for MnistConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data/mnist"),
            pairs: DEFAULT_META_PAIRS.iter().map(|&(a, b)| [a, b]).collect(),
            per_class: 500,
            fewshot_pair: [DEFAULT_FEWSHOT_PAIR.0, DEFAULT_FEWSHOT_PAIR.1],
            fewshot_split: "t10k".into(),
        }
    }
}

impl MnistConfig {
    pub fn pair_list(&self) -> Vec<(u8, u8)> {
        self.pairs.iter().map(|&[a, b]| (a, b)).collect()
    }
}

/// One experiment: a Cartesian grid over `d × r × k × n`, replicated over `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub d: Vec<usize>,
    pub r: Vec<usize>,
    #[serde(default)]
    pub k: Vec<usize>,
    /// Meta-training samples per task.
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub task: TaskParamsConfig,
    #[serde(default)]
    pub fewshot: FewShotConfig,
    /// Monte-Carlo inputs for population risks; 0 skips them.
    #[serde(default)]
    pub mc_samples: usize,
    #[serde(default)]
    pub mnist: MnistConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// One cell of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub seed: u64,
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub n: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = super::presets::preset_text(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset `{name}` (known: {})", super::presets::PRESET_NAMES.join(", "))))?;
        Self::from_toml(text)
    }

    pub fn family(&self) -> TaskFamily {
        match self.kind {
            ExperimentKind::SubspaceRecoveryRelu => TaskFamily::ReluNet { hidden: self.task.hidden, noise_std: self.task.noise_std },
            _ => TaskFamily::GlmLogistic { theta_norm_max: self.task.theta_norm_max },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let positive = |name: &str, values: &[usize]| -> Result<()> {
            if values.contains(&0) {
                return Err(Error::InvalidConfig(format!("{name} grid values must be positive")));
            }
            Ok(())
        };
        positive("r", &self.r)?;
        positive("fewshot.n", &self.fewshot.n)?;
        if self.r.is_empty() {
            return bad("r grid is empty".into());
        }
        if self.kind == ExperimentKind::FewShotMnist {
            if self.mnist.per_class == 0 {
                return bad("mnist.per_class must be positive".into());
            }
            if self.fewshot.n.is_empty() {
                return bad("fewshot.n grid is empty".into());
            }
            if !matches!(self.mnist.fewshot_split.as_str(), "train" | "t10k") {
                return bad(format!("mnist.fewshot_split must be `train` or `t10k`, got `{}`", self.mnist.fewshot_split));
            }
        } else {
            for (name, values) in [("d", &self.d), ("k", &self.k), ("n", &self.n)] {
                if values.is_empty() {
                    return bad(format!("{name} grid is empty"));
                }
                positive(name, values)?;
            }
            if let Some(&n) = self.n.iter().find(|&&n| n % 2 != 0) {
                return bad(format!("meta n values must be even, got {n}"));
            }
            for &d in &self.d {
                if let Some(&r) = self.r.iter().find(|&&r| r > d) {
                    return bad(format!("r = {r} exceeds d = {d}"));
                }
            }
            if self.kind == ExperimentKind::FewShotSynthetic && self.fewshot.n.is_empty() {
                return bad("fewshot.n grid is empty".into());
            }
        }
        if self.kind == ExperimentKind::SubspaceRecoveryRelu && (self.task.hidden == 0 || self.task.noise_std < 0.0) {
            return bad("relu tasks need hidden > 0 and noise_std >= 0".into());
        }
        if self.task.theta_norm_max <= 0.0 || self.fewshot.norm_budget <= 0.0 {
            return bad("norm bounds must be positive".into());
        }
        if self.fewshot.solver.step_size <= 0.0 || self.fewshot.solver.tol < 0.0 {
            return bad("solver step_size must be positive and tol nonnegative".into());
        }
        Ok(())
    }

    /// Grid points in output order: seed-major, then `d`, `r`, `k`, `n`.
    ///
    /// MNIST experiments have one point per seed; their `r` and few-shot `n`
    /// grids are swept inside the point so the eigendecomposition is shared.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &seed in &self.seeds {
            if self.kind == ExperimentKind::FewShotMnist {
                points.push(GridPoint { seed, d: 0, r: 0, k: self.mnist.pairs.len(), n: 2 * self.mnist.per_class });
                continue;
            }
            for &d in &self.d {
                for &r in &self.r {
                    for &k in &self.k {
                        for &n in &self.n {
                            points.push(GridPoint { seed, d, r, k, n });
                        }
                    }
                }
            }
        }
        points
    }

    /// Seed of one grid point, derived from its coordinates rather than its position.
    pub fn point_seed(&self, p: &GridPoint) -> u64 {
        crate::linalg::derive_seed(&[self.master_seed, self.kind.tag(), p.seed, p.d as u64, p.r as u64, p.k as u64, p.n as u64])
    }
}
