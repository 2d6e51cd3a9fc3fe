//! Ground-truth representation, task families and seeded data generation.
//!
//! Every task's label depends on its input only through `W x`, where `W` is
//! an `r×d` matrix with orthonormal rows shared by all tasks. Two families are
//! provided: logistic GLMs with binary labels and two-hidden-layer ReLU
//! regressors with Gaussian label noise.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::MatrixBundle;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, orthonormalize_rows, sample_gaussian_matrix, DenseMatrix, SeededRng};

/// `r×d` matrix with orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    w: DenseMatrix,
}

impl Representation {
    /// Wraps `w`, checking `W Wᵀ = I` to 1e-10.
    pub fn new(w: DenseMatrix) -> Result<Self> {
        if w.rows() == 0 || w.rows() > w.cols() {
            return Err(Error::RankOutOfRange { r: w.rows(), d: w.cols() });
        }
        let err = w.row_orthonormality_error();
        if !(err <= 1e-10) {
            return Err(Error::DimensionMismatch(format!("representation rows are not orthonormal (error {err:e})")));
        }
        Ok(Self { w })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn r(&self) -> usize {
        self.w.rows()
    }

    pub fn d(&self) -> usize {
        self.w.cols()
    }

    /// `W x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.w.matvec(x).expect("input dimension matches d")
    }

    /// `Wᵀ z`, lifting a subspace vector to the ambient space.
    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        self.w.transpose_matvec(z).expect("vector dimension matches r")
    }

    /// Replaces `W` by `Q W` for an `r×r` orthogonal `Q`.
    pub fn rotated(&self, q: &DenseMatrix) -> Result<Self> {
        Self::new(q.matmul(&self.w)?)
    }
}

/// Orthonormalized `r×d` Gaussian draw.
pub fn make_representation(rng: &mut SeededRng, r: usize, d: usize) -> Result<Representation> {
    if r == 0 || r > d {
        return Err(Error::RankOutOfRange { r, d });
    }
    let mut last_err = None;
    for _ in 0..2 {
        match orthonormalize_rows(&sample_gaussian_matrix(rng, r, d, 1.0)) {
            Ok(w) => return Representation::new(w),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    GlmLogistic,
    ReluNet,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::GlmLogistic => "glm_logistic",
            TaskKind::ReluNet => "relu_net",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskParams {
    /// `E[y | x] = φ(θᵀ W x)` with the logistic `φ`.
    Glm { theta: Vec<f64> },
    /// `y = w3 · relu(w2 · relu(w1 · W x)) + N(0, noise_std²)`.
    Relu { w1: DenseMatrix, w2: DenseMatrix, w3: Vec<f64>, noise_std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: usize,
    pub params: TaskParams,
}

impl TaskSpec {
    pub fn glm(id: usize, theta: Vec<f64>) -> Self {
        Self { id, params: TaskParams::Glm { theta } }
    }

    pub fn kind(&self) -> TaskKind {
        match self.params {
            TaskParams::Glm { .. } => TaskKind::GlmLogistic,
            TaskParams::Relu { .. } => TaskKind::ReluNet,
        }
    }

    pub fn theta(&self) -> Result<&[f64]> {
        match &self.params {
            TaskParams::Glm { theta } => Ok(theta),
            TaskParams::Relu { .. } => Err(Error::WrongTaskKind { expected: "glm_logistic", found: "relu_net" }),
        }
    }

    /// `E[y | x]`.
    pub fn mean(&self, rep: &Representation, x: &[f64]) -> f64 {
        match &self.params {
            TaskParams::Glm { theta } => logistic(dot(theta, &rep.project(x))),
            TaskParams::Relu { w1, w2, w3, .. } => relu_forward(w1, w2, w3, &rep.project(x)),
        }
    }

    /// Draws a label for input `x`.
    pub fn sample_label(&self, rep: &Representation, x: &[f64], rng: &mut SeededRng) -> f64 {
        let mean = self.mean(rep, x);
        match &self.params {
            TaskParams::Glm { .. } => {
                if rng.bernoulli(mean) {
                    1.0
                } else {
                    0.0
                }
            }
            TaskParams::Relu { noise_std, .. } => {
                let eps = rng.standard_normal();
                if *noise_std == 0.0 {
                    mean
                } else {
                    mean + noise_std * eps
                }
            }
        }
    }
}

/// Logistic function, evaluated without overflow for any finite `t`.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᵗ)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn relu_forward(w1: &DenseMatrix, w2: &DenseMatrix, w3: &[f64], z: &[f64]) -> f64 {
    let h1: Vec<f64> = w1.matvec(z).expect("w1 matches r").into_iter().map(|v| v.max(0.0)).collect();
    let h2: Vec<f64> = w2.matvec(&h1).expect("w2 is square").into_iter().map(|v| v.max(0.0)).collect();
    dot(w3, &h2)
}

/// Gaussian `θ ∈ R^r`, rescaled onto the ball of radius `theta_norm_max` when it falls outside.
pub fn sample_glm_task(rng: &mut SeededRng, rep: &Representation, theta_norm_max: f64, id: usize) -> TaskSpec {
    assert!(theta_norm_max > 0.0, "theta norm bound must be positive");
    let theta = project_to_ball(rng.normal_vec(rep.r()), theta_norm_max);
    TaskSpec::glm(id, theta)
}

/// Euclidean projection onto `{‖θ‖ ≤ radius}`.
pub fn project_to_ball(mut theta: Vec<f64>, radius: f64) -> Vec<f64> {
    let norm = norm2(&theta);
    if norm > radius {
        let scale = radius / norm;
        theta.iter_mut().for_each(|v| *v *= scale);
    }
    theta
}

/// Gaussian weights of shapes `hidden×r`, `hidden×hidden` and `1×hidden`.
pub fn sample_relu_task(rng: &mut SeededRng, rep: &Representation, hidden: usize, noise_std: f64, id: usize) -> TaskSpec {
    assert!(hidden >= 1, "hidden width must be positive");
    let w1 = sample_gaussian_matrix(rng, hidden, rep.r(), 1.0);
    let w2 = sample_gaussian_matrix(rng, hidden, hidden, 1.0);
    let w3 = rng.normal_vec(hidden);
    TaskSpec { id, params: TaskParams::Relu { w1, w2, w3, noise_std } }
}

pub fn glm_mean(spec: &TaskSpec, rep: &Representation, x: &[f64]) -> Result<f64> {
    let theta = spec.theta()?;
    Ok(logistic(dot(theta, &rep.project(x))))
}

pub fn relu_mean(spec: &TaskSpec, rep: &Representation, x: &[f64]) -> Result<f64> {
    match &spec.params {
        TaskParams::Relu { w1, w2, w3, .. } => Ok(relu_forward(w1, w2, w3, &rep.project(x))),
        TaskParams::Glm { .. } => Err(Error::WrongTaskKind { expected: "relu_net", found: "glm_logistic" }),
    }
}

/// One task's samples: `n×d` inputs and `n` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub id: usize,
    pub inputs: DenseMatrix,
    pub labels: Vec<f64>,
}

impl TaskData {
    pub fn new(id: usize, inputs: DenseMatrix, labels: Vec<f64>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self { id, inputs, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.inputs.cols()
    }
}

/// `n` standard Gaussian inputs followed by their labels, all drawn from `rng`.
pub fn generate_task_data(rng: &mut SeededRng, spec: &TaskSpec, rep: &Representation, n: usize) -> Result<TaskData> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::OddSampleCount(n));
    }
    Ok(sample_task(rng, spec, rep, n))
}

/// Like [`generate_task_data`] without the even-count requirement, for
/// few-shot training and evaluation sets.
pub fn sample_task(rng: &mut SeededRng, spec: &TaskSpec, rep: &Representation, n: usize) -> TaskData {
    let inputs = sample_gaussian_matrix(rng, n, rep.d(), 1.0);
    let labels = (0..n).map(|i| spec.sample_label(rep, inputs.row(i), rng)).collect();
    TaskData { id: spec.id, inputs, labels }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskFamily {
    GlmLogistic {
        /// Radius of the ball the task parameters are projected onto; `inf` disables it.
        theta_norm_max: f64,
    },
    ReluNet {
        hidden: usize,
        noise_std: f64,
    },
}

impl TaskFamily {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskFamily::GlmLogistic { .. } => TaskKind::GlmLogistic,
            TaskFamily::ReluNet { .. } => TaskKind::ReluNet,
        }
    }

    pub fn sample(&self, rng: &mut SeededRng, rep: &Representation, id: usize) -> TaskSpec {
        match *self {
            TaskFamily::GlmLogistic { theta_norm_max } => sample_glm_task(rng, rep, theta_norm_max, id),
            TaskFamily::ReluNet { hidden, noise_std } => sample_relu_task(rng, rep, hidden, noise_std, id),
        }
    }
}

/// Everything needed to regenerate a meta-training dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaConfig {
    pub seed: u64,
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub n: usize,
    pub family: TaskFamily,
}

/// RNG stream layout under one seed: the representation uses stream 0, task
/// `j` draws its parameters from stream `2j + 1` and its samples from `2j + 2`.
pub const REPRESENTATION_STREAM: u64 = 0;

pub fn task_spec_stream(id: usize) -> u64 {
    2 * id as u64 + 1
}

pub fn task_data_stream(id: usize) -> u64 {
    2 * id as u64 + 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub spec: TaskSpec,
    pub data: TaskData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub representation: Representation,
    pub tasks: Vec<Task>,
    pub kind: TaskKind,
    pub seed: u64,
}

impl MetaDataset {
    pub fn k(&self) -> usize {
        self.tasks.len()
    }

    pub fn d(&self) -> usize {
        self.representation.d()
    }

    pub fn r(&self) -> usize {
        self.representation.r()
    }

    pub fn specs(&self) -> Vec<TaskSpec> {
        self.tasks.iter().map(|t| t.spec.clone()).collect()
    }

    pub fn data(&self) -> impl Iterator<Item = &TaskData> {
        self.tasks.iter().map(|t| &t.data)
    }

    /// Fresh dataset under `config`. Tasks are generated in parallel on
    /// id-keyed streams, so the result does not depend on scheduling.
    pub fn generate(config: &MetaConfig) -> Result<Self> {
        let representation = make_representation(&mut SeededRng::new(config.seed, REPRESENTATION_STREAM), config.r, config.d)?;
        Self::generate_with(config, representation)
    }

    /// Same as [`MetaDataset::generate`] with a caller-supplied representation.
    pub fn generate_with(config: &MetaConfig, representation: Representation) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::EmptyDataset);
        }
        if config.n < 2 || config.n % 2 != 0 {
            return Err(Error::OddSampleCount(config.n));
        }
        let tasks = (0..config.k)
            .into_par_iter()
            .map(|id| {
                let spec = config.family.sample(&mut SeededRng::new(config.seed, task_spec_stream(id)), &representation, id);
                let data = generate_task_data(&mut SeededRng::new(config.seed, task_data_stream(id)), &spec, &representation, config.n)?;
                Ok(Task { spec, data })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { representation, tasks, kind: config.family.kind(), seed: config.seed })
    }

    /// Writes `header.toml`, `representation.bin` and one `task_NNNNN.bin` per task.
    pub fn save(&self, dir: &Path) -> Result<()> {
        DatasetHeader {
            format_version: 1,
            d: self.d(),
            r: self.r(),
            k: self.k(),
            kind: self.kind.into(),
            seed: self.seed,
        }
        .write(dir)?;
        MatrixBundle::new().with("w", self.representation.matrix().clone()).write(&dir.join(REPRESENTATION_FILE))?;
        for task in &self.tasks {
            task_bundle(task).write(&dir.join(task_file_name(task.spec.id)))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header = DatasetHeader::read(dir)?;
        let kind = match header.kind {
            DatasetKind::GlmLogistic => TaskKind::GlmLogistic,
            DatasetKind::ReluNet => TaskKind::ReluNet,
            DatasetKind::MnistDigitPair => {
                return Err(Error::Format { path: dir.join(HEADER_FILE), reason: "MNIST collections have no task parameters; use load_task_data".into() })
            }
        };
        let rep_path = dir.join(REPRESENTATION_FILE);
        let representation = Representation::new(MatrixBundle::read(&rep_path)?.require("w", &rep_path)?.clone())?;
        if representation.d() != header.d || representation.r() != header.r {
            return Err(Error::Format { path: rep_path, reason: "shape disagrees with header".into() });
        }
        let mut tasks = Vec::with_capacity(header.k);
        for id in 0..header.k {
            let path = dir.join(task_file_name(id));
            tasks.push(task_from_bundle(id, kind, &MatrixBundle::read(&path)?, &path)?);
        }
        Ok(Self { representation, tasks, kind, seed: header.seed })
    }

    /// One row per sample: `task,label,x0,...,x{d-1}`.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        write!(out, "task,label")?;
        for j in 0..self.d() {
            write!(out, ",x{j}")?;
        }
        writeln!(out)?;
        for task in &self.tasks {
            for (i, y) in task.data.labels.iter().enumerate() {
                write!(out, "{},{}", task.spec.id, y)?;
                for v in task.data.inputs.row(i) {
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub const HEADER_FILE: &str = "header.toml";
pub const REPRESENTATION_FILE: &str = "representation.bin";

pub fn task_file_name(id: usize) -> String {
    format!("task_{id:05}.bin")
}

/// Kind recorded in a dataset directory's header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    GlmLogistic,
    ReluNet,
    MnistDigitPair,
}

impl From<TaskKind> for DatasetKind {
    fn from(kind: TaskKind) -> Self {
        match kind {
            TaskKind::GlmLogistic => DatasetKind::GlmLogistic,
            TaskKind::ReluNet => DatasetKind::ReluNet,
        }
    }
}

/// Contents of `header.toml`. `r` is 0 for real-data collections without a ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub kind: DatasetKind,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(HEADER_FILE);
        toml::from_str(&fs::read_to_string(&path)?).map_err(|e| Error::Format { path, reason: e.to_string() })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(HEADER_FILE), toml::to_string(self).expect("header serializes"))?;
        Ok(())
    }
}

/// Samples of every task in a dataset directory of any kind, in id order.
pub fn load_task_data(dir: &Path) -> Result<(DatasetHeader, Vec<TaskData>)> {
    let header = DatasetHeader::read(dir)?;
    let mut tasks = Vec::with_capacity(header.k);
    for id in 0..header.k {
        let path = dir.join(task_file_name(id));
        let bundle = MatrixBundle::read(&path)?;
        let inputs = bundle.require("x", &path)?.clone();
        if inputs.cols() != header.d {
            return Err(Error::Format { path, reason: format!("expected {} columns", header.d) });
        }
        tasks.push(TaskData::new(id, inputs, bundle.require("y", &path)?.as_slice().to_vec())?);
    }
    Ok((header, tasks))
}

/// `W` of a dataset directory, when it has one.
pub fn load_representation(dir: &Path) -> Result<Option<Representation>> {
    let path = dir.join(REPRESENTATION_FILE);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(Representation::new(MatrixBundle::read(&path)?.require("w", &path)?.clone())?))
}

fn task_bundle(task: &Task) -> MatrixBundle {
    let mut bundle = MatrixBundle::new();
    match &task.spec.params {
        TaskParams::Glm { theta } => {
            bundle.push("theta", DenseMatrix::column_vector(theta));
        }
        TaskParams::Relu { w1, w2, w3, noise_std } => {
            bundle
                .push("w1", w1.clone())
                .push("w2", w2.clone())
                .push("w3", DenseMatrix::from_rows(&[w3.as_slice()]))
                .push("noise_std", DenseMatrix::from_rows(&[[*noise_std]]));
        }
    }
    bundle
        .with("x", task.data.inputs.clone())
        .with("y", DenseMatrix::column_vector(&task.data.labels))
}

fn task_from_bundle(id: usize, kind: TaskKind, bundle: &MatrixBundle, path: &Path) -> Result<Task> {
    let params = match kind {
        TaskKind::GlmLogistic => TaskParams::Glm { theta: bundle.require("theta", path)?.as_slice().to_vec() },
        TaskKind::ReluNet => TaskParams::Relu {
            w1: bundle.require("w1", path)?.clone(),
            w2: bundle.require("w2", path)?.clone(),
            w3: bundle.require("w3", path)?.as_slice().to_vec(),
            noise_std: bundle.require("noise_std", path)?.as_slice()[0],
        },
    };
    let inputs = bundle.require("x", path)?.clone();
    let labels = bundle.require("y", path)?.as_slice().to_vec();
    Ok(Task { spec: TaskSpec { id, params }, data: TaskData::new(id, inputs, labels)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep_from(rows: &[&[f64]]) -> Representation {
        Representation::new(DenseMatrix::from_rows(rows)).unwrap()
    }

    #[test]
    fn representation_shapes() {
        let mut rng = SeededRng::new(3, 0);
        let square = make_representation(&mut rng, 3, 3).unwrap();
        assert!(square.matrix().row_orthonormality_error() < 1e-10);
        let fig1_rep = make_representation(&mut rng, 5, 50).unwrap();
        assert_eq!((fig1_rep.r(), fig1_rep.d()), (5, 50));
        assert!(fig1_rep.matrix().row_orthonormality_error() < 1e-10);
        let line = make_representation(&mut rng, 1, 2).unwrap();
        assert!((norm2(line.matrix().row(0)) - 1.0).abs() < 1e-14);
        assert!(matches!(make_representation(&mut rng, 0, 4), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(make_representation(&mut rng, 5, 4), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn glm_theta_projection() {
        let rep = make_representation(&mut SeededRng::new(1, 0), 5, 8).unwrap();
        let raw = sample_glm_task(&mut SeededRng::new(9, 1), &rep, f64::INFINITY, 0);
        assert_eq!(raw.theta().unwrap(), SeededRng::new(9, 1).normal_vec(5).as_slice());
        assert_eq!(project_to_ball(vec![3.0, 0.0], 1.0), vec![1.0, 0.0]);
        assert_eq!(project_to_ball(vec![0.6, 0.8], 1.0), vec![0.6, 0.8]);
        let capped = sample_glm_task(&mut SeededRng::new(9, 1), &rep, 0.5, 0);
        assert!((norm2(capped.theta().unwrap()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn glm_theta_draws_are_centered() {
        let rep = make_representation(&mut SeededRng::new(1, 0), 5, 5).unwrap();
        let mut rng = SeededRng::new(77, 0);
        let mut mean = [0.0; 5];
        for id in 0..1000 {
            let spec = sample_glm_task(&mut rng, &rep, 5.0, id);
            for (m, t) in mean.iter_mut().zip(spec.theta().unwrap()) {
                *m += t / 1000.0;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.15), "{mean:?}");
    }

    #[test]
    fn relu_shapes_and_determinism() {
        let rep = make_representation(&mut SeededRng::new(1, 0), 5, 50).unwrap();
        let a = sample_relu_task(&mut SeededRng::new(4, 4), &rep, 20, 1.0, 2);
        let b = sample_relu_task(&mut SeededRng::new(4, 4), &rep, 20, 1.0, 2);
        assert_eq!(a, b);
        match &a.params {
            TaskParams::Relu { w1, w2, w3, noise_std } => {
                assert_eq!(w1.shape(), (20, 5));
                assert_eq!(w2.shape(), (20, 20));
                assert_eq!(w3.len(), 20);
                assert_eq!(*noise_std, 1.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn scalar_relu_chain() {
        let rep = rep_from(&[&[1.0]]);
        let spec = |w1: f64, w2: f64, w3: f64| TaskSpec {
            id: 0,
            params: TaskParams::Relu {
                w1: DenseMatrix::from_rows(&[[w1]]),
                w2: DenseMatrix::from_rows(&[[w2]]),
                w3: vec![w3],
                noise_std: 0.0,
            },
        };
        assert_eq!(relu_mean(&spec(2.0, 3.0, -1.5), &rep, &[0.5]).unwrap(), -4.5);
        assert_eq!(relu_mean(&spec(2.0, 3.0, -1.5), &rep, &[-0.5]).unwrap(), 0.0);
        assert_eq!(relu_mean(&spec(2.0, -3.0, 1.0), &rep, &[0.5]).unwrap(), 0.0);
        assert_eq!(relu_mean(&spec(2.0, 3.0, 1.0), &rep, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn logistic_values() {
        let rep = rep_from(&[&[1.0, 0.0]]);
        let spec = TaskSpec::glm(0, vec![2.0]);
        assert_eq!(glm_mean(&spec, &rep, &[0.0, 5.0]).unwrap(), 0.5);
        let v = glm_mean(&spec, &rep, &[1.5, 7.0]).unwrap();
        // 1 / (1 + e^-3)
        assert!((v - 0.952_574_126_822_433_4).abs() < 1e-15);
        let sat = glm_mean(&spec, &rep, &[25.0, 0.0]).unwrap();
        assert!(1.0 - sat < 1e-20 && sat <= 1.0);
        assert!(logistic(-800.0) >= 0.0 && logistic(-800.0).is_finite());
        assert!(logistic(800.0) == 1.0);
        assert!(glm_mean(&sample_relu_task(&mut SeededRng::new(0, 0), &rep, 2, 1.0, 0), &rep, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    }

    #[test]
    fn odd_sample_counts_are_rejected() {
        let rep = rep_from(&[&[1.0]]);
        let spec = TaskSpec::glm(0, vec![1.0]);
        let mut rng = SeededRng::new(0, 0);
        assert!(matches!(generate_task_data(&mut rng, &spec, &rep, 3), Err(Error::OddSampleCount(3))));
        assert!(matches!(generate_task_data(&mut rng, &spec, &rep, 0), Err(Error::OddSampleCount(0))));
        assert_eq!(generate_task_data(&mut rng, &spec, &rep, 2).unwrap().n(), 2);
    }

    #[test]
    fn zero_theta_gives_fair_coins() {
        let rep = make_representation(&mut SeededRng::new(0, 0), 2, 4).unwrap();
        let data = generate_task_data(&mut SeededRng::new(5, 5), &TaskSpec::glm(0, vec![0.0, 0.0]), &rep, 10_000).unwrap();
        let mean = data.labels.iter().sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
        assert!(data.labels.iter().all(|&y| y == 0.0 || y == 1.0));
    }

    #[test]
    fn noiseless_relu_labels_are_exact() {
        let rep = make_representation(&mut SeededRng::new(0, 0), 3, 6).unwrap();
        let mut spec = sample_relu_task(&mut SeededRng::new(1, 1), &rep, 4, 0.0, 0);
        let data = generate_task_data(&mut SeededRng::new(2, 2), &spec, &rep, 50).unwrap();
        for i in 0..50 {
            assert_eq!(data.labels[i], relu_mean(&spec, &rep, data.inputs.row(i)).unwrap());
        }
        if let TaskParams::Relu { noise_std, .. } = &mut spec.params {
            *noise_std = 1.0;
        }
        let noisy = generate_task_data(&mut SeededRng::new(2, 2), &spec, &rep, 50).unwrap();
        assert_ne!(noisy.labels, data.labels);
    }

    #[test]
    fn steep_logistic_follows_its_conditional_law() {
        let rep = rep_from(&[&[1.0]]);
        let spec = TaskSpec::glm(0, vec![10.0]);
        let data = generate_task_data(&mut SeededRng::new(8, 0), &spec, &rep, 10_000).unwrap();
        let (mut hits, mut total) = (0.0, 0.0);
        for i in 0..data.n() {
            if data.inputs[(i, 0)] > 1.0 {
                total += 1.0;
                hits += data.labels[i];
            }
        }
        assert!(total > 1000.0);
        assert!(hits / total > 0.99);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for family in [
            TaskFamily::GlmLogistic { theta_norm_max: f64::INFINITY },
            TaskFamily::ReluNet { hidden: 3, noise_std: 1.0 },
        ] {
            let cfg = MetaConfig { seed: 12, d: 5, r: 2, k: 3, n: 4, family };
            let ds = MetaDataset::generate(&cfg).unwrap();
            let path = dir.path().join(family.kind().name());
            ds.save(&path).unwrap();
            assert_eq!(MetaDataset::load(&path).unwrap(), ds);
            ds.export_csv(&path.join("samples.csv")).unwrap();
            let csv = fs::read_to_string(path.join("samples.csv")).unwrap();
            assert_eq!(csv.lines().count(), 1 + 3 * 4);
            assert!(csv.starts_with("task,label,x0,x1,x2,x3,x4\n"));
        }
    }
}
