use crate::error::{Error, Result};
use crate::fewshot::{classification_accuracy, risk_gap, solve_erm, FewShotModel, FewShotProblem, GlmTruth, RiskEstimate, SolverSettings};
use crate::linalg::{sym_eig, DenseMatrix, SeededRng};
use crate::mnist::{build_digit_pair_tasks, build_fewshot_task, ImageSet};
use crate::moments::{glm_population_m, moment_estimator, moment_estimator_from, MomentMatrix};
use crate::subspace::{davis_kahan_check, max_principal_angle, procrustes_align, recover_subspace, subspace_correlation, AlignmentResult, RecoveredSubspace};
use crate::tasks::{sample_task, task_spec_stream, MetaConfig, MetaDataset, TaskData, TaskKind, TaskSpec};

use super::{ExperimentConfig, ExperimentKind, GridPoint};

/// Few-shot data streams sit in the upper half of the stream space, clear of
/// the meta-training layout. The evaluation set uses the base stream and a
/// training set of size `n` uses `FEWSHOT_STREAM + 1 + n`.
pub const FEWSHOT_STREAM: u64 = 1 << 63;

fn train_stream(n: usize) -> u64 {
    FEWSHOT_STREAM + 1 + n as u64
}

/// One metric value produced by a grid point, with the coordinates it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl Metric {
    fn new(p: (usize, usize, usize), name: &str, value: f64) -> Self {
        Self { n: p.0, k: p.1, r: p.2, name: name.to_owned(), value, stderr: None }
    }

    fn estimate(p: (usize, usize, usize), name: &str, est: RiskEstimate) -> Self {
        Self { stderr: Some(est.stderr), ..Self::new(p, name, est.value) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FewShotParams {
    pub n: usize,
    pub eval_n: usize,
    pub norm_budget: f64,
    pub solver: SolverSettings,
    /// Monte-Carlo inputs for the excess population risk; 0 skips it.
    pub mc_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Algorithm1Params {
    pub meta: MetaConfig,
    pub fewshot: Option<FewShotParams>,
}

#[derive(Debug, Clone)]
pub struct MetaTraining {
    pub dataset: MetaDataset,
    pub moment: MomentMatrix,
    pub subspace: RecoveredSubspace,
    pub alignment: AlignmentResult,
}

impl MetaTraining {
    /// `Ûᵀ`, the `r×d` projection handed to the few-shot solver.
    pub fn projection(&self) -> DenseMatrix {
        self.subspace.basis.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct FewShotOutcome {
    pub model: FewShotModel,
    pub accuracy: f64,
    pub risk_gap: Option<RiskEstimate>,
}

#[derive(Debug, Clone)]
pub struct Algorithm1Output {
    pub meta: MetaTraining,
    pub new_task: Option<TaskSpec>,
    pub fewshot: Option<FewShotOutcome>,
    pub metrics: Vec<Metric>,
}

/// Generate, estimate `M̂`, keep its top-`r` eigenvectors and align them to `W`.
pub fn meta_train(config: &MetaConfig) -> Result<MetaTraining> {
    let dataset = MetaDataset::generate(config)?;
    let moment = moment_estimator(&dataset)?;
    let subspace = recover_subspace(&moment, config.r)?;
    let alignment = procrustes_align(&subspace, &dataset.representation)?;
    Ok(MetaTraining { dataset, moment, subspace, alignment })
}

fn subspace_metrics(meta: &MetaTraining, at: (usize, usize, usize)) -> Result<Vec<Metric>> {
    let w_t = meta.dataset.representation.matrix().transpose();
    Ok(vec![
        Metric::new(at, "subspace_correlation", subspace_correlation(&meta.subspace, &meta.dataset.representation)?),
        Metric::new(at, "procrustes_frobenius", meta.alignment.frobenius_residual),
        Metric::new(at, "procrustes_spectral", meta.alignment.spectral_residual),
        Metric::new(at, "max_principal_angle", max_principal_angle(&meta.subspace.basis, &w_t)?),
        Metric::new(at, "spectral_gap", meta.subspace.spectral_gap),
    ])
}

/// The new task: the next task id under the same seed and representation.
pub fn new_task(meta: &MetaTraining, config: &MetaConfig) -> TaskSpec {
    let id = config.k;
    config.family.sample(&mut SeededRng::new(config.seed, task_spec_stream(id)), &meta.dataset.representation, id)
}

/// Fits logistic ERM on `P x` and scores it on `eval`.
pub fn fit_and_evaluate(
    projection: &DenseMatrix,
    train: &TaskData,
    eval: &TaskData,
    truth: Option<&GlmTruth<'_>>,
    params: &FewShotParams,
    mc_seed: u64,
) -> Result<FewShotOutcome> {
    let problem = FewShotProblem::new(projection.clone(), &train.inputs, train.labels.clone(), params.norm_budget)?;
    let model = solve_erm(&problem, &params.solver)?;
    let accuracy = classification_accuracy(&model.theta, projection, &eval.inputs, &eval.labels)?;
    let risk_gap = match truth {
        Some(truth) if params.mc_samples > 0 => Some(risk_gap(&model.theta, projection, truth, params.mc_samples, mc_seed)?),
        _ => None,
    };
    Ok(FewShotOutcome { model, accuracy, risk_gap })
}

/// Meta-training followed, when requested, by few-shot learning on a fresh task.
pub fn run_algorithm1(params: &Algorithm1Params) -> Result<Algorithm1Output> {
    let cfg = &params.meta;
    let meta = meta_train(cfg)?;
    let mut metrics = subspace_metrics(&meta, (cfg.n, cfg.k, cfg.r))?;
    let (mut spec, mut fewshot) = (None, None);
    if let Some(fs) = &params.fewshot {
        if cfg.family.kind() != TaskKind::GlmLogistic {
            return Err(Error::WrongTaskKind { expected: TaskKind::GlmLogistic.name(), found: cfg.family.kind().name() });
        }
        let task = new_task(&meta, cfg);
        let rep = &meta.dataset.representation;
        let eval = sample_task(&mut SeededRng::new(cfg.seed, FEWSHOT_STREAM), &task, rep, fs.eval_n);
        let train = sample_task(&mut SeededRng::new(cfg.seed, train_stream(fs.n)), &task, rep, fs.n);
        let truth = GlmTruth { rep, theta_star: task.theta()? };
        let outcome = fit_and_evaluate(&meta.projection(), &train, &eval, Some(&truth), fs, cfg.seed)?;
        let at = (fs.n, cfg.k, cfg.r);
        metrics.push(Metric::new(at, "accuracy", outcome.accuracy));
        metrics.push(Metric::new(at, "train_loss", outcome.model.final_loss()));
        if let Some(gap) = outcome.risk_gap {
            metrics.push(Metric::estimate(at, "risk_gap", gap));
        }
        spec = Some(task);
        fewshot = Some(outcome);
    }
    Ok(Algorithm1Output { meta, new_task: spec, fewshot, metrics })
}

/// Shared inputs loaded once per sweep.
#[derive(Debug, Default)]
pub struct SweepContext {
    /// Meta-training and few-shot image sets.
    pub mnist: Option<(ImageSet, ImageSet)>,
}

impl SweepContext {
    pub fn for_config(config: &ExperimentConfig) -> Result<Self> {
        if config.kind != ExperimentKind::FewShotMnist {
            return Ok(Self::default());
        }
        let train = ImageSet::load(&config.mnist.dir, "train")?;
        let fewshot = if config.mnist.fewshot_split == "train" { train.clone() } else { ImageSet::load(&config.mnist.dir, &config.mnist.fewshot_split)? };
        Ok(Self { mnist: Some((train, fewshot)) })
    }
}

/// All metrics of one grid point, seeded by `seed`.
pub fn run_point(config: &ExperimentConfig, point: &GridPoint, seed: u64, ctx: &SweepContext) -> Result<Vec<Metric>> {
    let meta_cfg = MetaConfig { seed, d: point.d, r: point.r, k: point.k, n: point.n, family: config.family() };
    let at = (point.n, point.k, point.r);
    match config.kind {
        ExperimentKind::SubspaceRecoveryGlm | ExperimentKind::SubspaceRecoveryRelu => {
            let meta = meta_train(&meta_cfg)?;
            let mut metrics = subspace_metrics(&meta, at)?;
            if meta_cfg.family.kind() == TaskKind::GlmLogistic {
                let oracle = glm_population_m(&meta.dataset.specs(), &meta.dataset.representation)?;
                metrics.push(Metric::new(at, "moment_error", meta.moment.spectral_distance(&oracle)?));
            }
            Ok(metrics)
        }
        ExperimentKind::ConcentrationStudy => concentration_point(&meta_cfg),
        ExperimentKind::FewShotSynthetic => synthetic_fewshot_point(config, &meta_cfg),
        ExperimentKind::FewShotMnist => mnist_point(config, seed, ctx),
    }
}

fn concentration_point(cfg: &MetaConfig) -> Result<Vec<Metric>> {
    let at = (cfg.n, cfg.k, cfg.r);
    let dataset = MetaDataset::generate(cfg)?;
    let m_hat = moment_estimator(&dataset)?;
    let oracle = glm_population_m(&dataset.specs(), &dataset.representation)?;
    let eig = sym_eig(&oracle.matrix)?;
    let mut metrics = vec![
        Metric::new(at, "moment_error", m_hat.spectral_distance(&oracle)?),
        Metric::new(at, "lambda_r", eig.eigenvalues[cfg.r - 1]),
    ];
    match davis_kahan_check(&m_hat, &oracle, &dataset.representation, cfg.r) {
        Ok(dk) => {
            metrics.push(Metric::new(at, "davis_kahan_lhs", dk.lhs));
            metrics.push(Metric::new(at, "davis_kahan_rhs", dk.rhs));
            metrics.push(Metric::new(at, "davis_kahan_holds", if dk.holds { 1.0 } else { 0.0 }));
        }
        Err(Error::GapViolated { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(metrics)
}

fn fewshot_params(config: &ExperimentConfig, n: usize, eval_n: usize) -> FewShotParams {
    FewShotParams { n, eval_n, norm_budget: config.fewshot.norm_budget, solver: config.fewshot.solver, mc_samples: config.mc_samples }
}

fn synthetic_fewshot_point(config: &ExperimentConfig, cfg: &MetaConfig) -> Result<Vec<Metric>> {
    let meta = meta_train(cfg)?;
    let mut metrics = subspace_metrics(&meta, (cfg.n, cfg.k, cfg.r))?;
    let task = new_task(&meta, cfg);
    let rep = &meta.dataset.representation;
    let truth = GlmTruth { rep, theta_star: task.theta()? };
    let eval_n = config.fewshot.eval_n.unwrap_or(1000);
    let eval = sample_task(&mut SeededRng::new(cfg.seed, FEWSHOT_STREAM), &task, rep, eval_n);
    let projection = meta.projection();
    let identity = DenseMatrix::identity(cfg.d);
    for &n in &config.fewshot.n {
        let params = fewshot_params(config, n, eval_n);
        let train = sample_task(&mut SeededRng::new(cfg.seed, train_stream(n)), &task, rep, n);
        let at = (n, cfg.k, cfg.r);
        let mc_seed = crate::linalg::derive_seed(&[cfg.seed, n as u64]);
        let mut fits = vec![("", &projection)];
        if config.fewshot.baseline {
            fits.push(("_baseline", &identity));
        }
        for (suffix, p) in fits {
            let out = fit_and_evaluate(p, &train, &eval, Some(&truth), &params, mc_seed)?;
            metrics.push(Metric::new(at, &format!("accuracy{suffix}"), out.accuracy));
            if let Some(gap) = out.risk_gap {
                metrics.push(Metric::estimate(at, &format!("risk_gap{suffix}"), gap));
            }
        }
    }
    Ok(metrics)
}

fn mnist_point(config: &ExperimentConfig, seed: u64, ctx: &SweepContext) -> Result<Vec<Metric>> {
    let (train_set, fewshot_set) = ctx.mnist.as_ref().ok_or_else(|| Error::InvalidConfig("MNIST images not loaded".into()))?;
    let pairs = config.mnist.pair_list();
    let k = pairs.len();
    let dataset = build_digit_pair_tasks(train_set, &pairs, config.mnist.per_class, seed)?;
    let m_hat = moment_estimator_from(dataset.task_data())?;
    let eig = sym_eig(&m_hat.matrix)?;
    let d = dataset.d();
    let top = eig.eigenvalues[0].abs().max(f64::MIN_POSITIVE);
    let rank = eig.eigenvalues.iter().filter(|&&v| v.abs() > 1e-10 * top).count();
    let mut metrics = vec![Metric::new((2 * config.mnist.per_class, k, 0), "moment_rank", rank as f64)];

    let projections = config
        .r
        .iter()
        .map(|&r| {
            if r > d {
                return Err(Error::RankOutOfRange { r, d });
            }
            Ok((r, RecoveredSubspace::from_eigen(&eig, r)?.basis.transpose()))
        })
        .collect::<Result<Vec<_>>>()?;
    let [a, b] = config.mnist.fewshot_pair;
    for &n in &config.fewshot.n {
        let mut rng = SeededRng::new(seed, train_stream(n));
        let split = build_fewshot_task(fewshot_set, (a, b), n, config.fewshot.eval_n, &dataset.centering, &pairs, &mut rng)?;
        let params = fewshot_params(config, n, split.eval_labels.len());
        let train = TaskData::new(0, split.train_inputs, split.train_labels)?;
        let eval = TaskData::new(0, split.eval_inputs, split.eval_labels)?;
        for (r, p) in &projections {
            let out = fit_and_evaluate(p, &train, &eval, None, &params, seed)?;
            metrics.push(Metric::new((n, k, *r), "accuracy", out.accuracy));
        }
        if config.fewshot.baseline {
            let out = fit_and_evaluate(&DenseMatrix::identity(d), &train, &eval, None, &params, seed)?;
            metrics.push(Metric::new((n, k, d), "accuracy_baseline", out.accuracy));
        }
    }
    Ok(metrics)
}
