//! Synthetic point-cloud classification: spheres against ring tori.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{KernelSpec, TrainSettings};
use super::curve::median;
use crate::diffusion::{Diffusion, SeriesDiffusion, SpectralDiffusion};
use crate::geograph::{build_graph, CloudSource, KernelConfig, PointCloud};
use crate::gnn::{gnn_forward_with, train, Dataset, GnnArch, Loss, Nonlinearity, Pooling, Sample, Target};
use crate::manifold::{ManifoldKind, ManifoldModel};
use crate::{Error, Result};

/// Ring torus radii in `R^3`.
pub const TORUS_MAJOR: f64 = 1.0;
pub const TORUS_MINOR: f64 = 0.4;
/// Scale jitter range.
pub const SCALE_RANGE: (f64, f64) = (0.9, 1.1);
pub const MIN_CLOUD_POINTS: usize = 50;

/// Labelled point clouds; `labels[i]` indexes `shapes`.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudSet {
    pub shapes: Vec<ManifoldKind>,
    pub clouds: Vec<PointCloud>,
    pub labels: Vec<usize>,
}

impl CloudSet {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(q));
    q.to_rotation_matrix().into_inner()
}

fn shape_point(shape: ManifoldKind, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    match shape {
        ManifoldKind::Sphere => loop {
            let g = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let r = g.norm();
            if r > 1e-12 {
                return g / r;
            }
        },
        // Area element (R + r cos v) du dv, sampled by rejection.
        _ => loop {
            let u = 2.0 * PI * rng.random::<f64>();
            let v = 2.0 * PI * rng.random::<f64>();
            let w: f64 = rng.random();
            if w * (TORUS_MAJOR + TORUS_MINOR) <= TORUS_MAJOR + TORUS_MINOR * v.cos() {
                let ring = TORUS_MAJOR + TORUS_MINOR * v.cos();
                return Vector3::new(ring * u.cos(), ring * u.sin(), TORUS_MINOR * v.sin());
            }
        },
    }
}

/// One cloud: rotation and scale are drawn first, then the points, so the
/// first `k` points do not depend on `n`.
pub fn shape_cloud(shape: ManifoldKind, n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = random_rotation(&mut rng);
    let scale = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
    let mut coords = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let p = rot * shape_point(shape, &mut rng) * scale;
        coords.extend_from_slice(p.as_slice());
    }
    PointCloud::new(coords, 3, CloudSource::Manifold(shape))
}

/// Balanced dataset with `per_class` clouds of `n` points per shape.
///
/// Spheres are unit spheres and tori are ring tori with radii
/// [`TORUS_MAJOR`] and [`TORUS_MINOR`], both in `R^3`; every cloud gets an
/// independent uniform rotation and a scale from [`SCALE_RANGE`]. Classes
/// alternate, and cloud `i` of class `c` depends only on `(seed, i, c)`.
pub fn synth_pointcloud_task(shapes: &[ManifoldKind], n: usize, per_class: usize, seed: u64) -> Result<CloudSet> {
    if n < MIN_CLOUD_POINTS {
        return Err(Error::invalid(format!("need at least {MIN_CLOUD_POINTS} points per cloud, got {n}")));
    }
    if shapes.len() < 2 {
        return Err(Error::invalid("need at least two shapes"));
    }
    if let Some(s) = shapes.iter().find(|s| !matches!(s, ManifoldKind::Sphere | ManifoldKind::FlatTorus)) {
        return Err(Error::invalid(format!("shape `{s}` has no embedding in R^3")));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut set = CloudSet { shapes: shapes.to_vec(), clouds: Vec::new(), labels: Vec::new() };
    for _ in 0..per_class {
        for (c, &shape) in shapes.iter().enumerate() {
            let sub: u64 = master.random();
            set.clouds.push(shape_cloud(shape, n, sub)?);
            set.labels.push(c);
        }
    }
    Ok(set)
}

/// The three compared models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Linear filter bank (identity nonlinearity).
    GraphFilter,
    Gnn,
    /// GNN trained with the smoothness penalty.
    LipschitzGnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::GraphFilter, ModelKind::Gnn, ModelKind::LipschitzGnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GraphFilter => "graph_filter",
            ModelKind::Gnn => "gnn",
            ModelKind::LipschitzGnn => "lipschitz_gnn",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    #[serde(default = "default_shapes")]
    pub shapes: Vec<ManifoldKind>,
    /// Points per training cloud.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    /// Sizes of the test clouds the trained models are transferred to.
    #[serde(default = "default_transfer_n")]
    pub transfer_n: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Model initialisations; accuracies are reported as medians over them.
    #[serde(default = "default_init_seeds")]
    pub init_seeds: Vec<u64>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_taps")]
    pub taps: usize,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_lipschitz")]
    pub lipschitz_weight: f64,
    #[serde(default)]
    pub train: TrainSettings,
}

fn default_shapes() -> Vec<ManifoldKind> {
    vec![ManifoldKind::Sphere, ManifoldKind::FlatTorus]
}
fn default_n() -> usize {
    300
}
fn default_per_class() -> usize {
    40
}
fn default_test_per_class() -> usize {
    20
}
fn default_transfer_n() -> Vec<usize> {
    vec![1000]
}
fn default_init_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_kernel() -> KernelSpec {
    KernelSpec { scale: Some(4.0 * PI), ..KernelSpec::dense() }
}
fn default_hidden() -> usize {
    8
}
fn default_taps() -> usize {
    3
}
fn default_step() -> f64 {
    0.5
}
fn default_lipschitz() -> f64 {
    0.3
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_CLOUD_POINTS {
            return Err(Error::config("n", format!("must be at least {MIN_CLOUD_POINTS}")));
        }
        if self.transfer_n.iter().any(|&n| n < MIN_CLOUD_POINTS) {
            return Err(Error::config("transfer_n", format!("must be at least {MIN_CLOUD_POINTS}")));
        }
        if self.per_class == 0 || self.test_per_class == 0 {
            return Err(Error::config("per_class", "need at least one cloud per class"));
        }
        if self.init_seeds.is_empty() {
            return Err(Error::config("init_seeds", "need at least one seed"));
        }
        if self.hidden == 0 || self.taps == 0 {
            return Err(Error::config("hidden", "widths and taps must be positive"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::config("step", "must be positive"));
        }
        if !(self.lipschitz_weight >= 0.0) {
            return Err(Error::config("lipschitz_weight", "must be nonnegative"));
        }
        self.kernel.validate("kernel")?;
        self.train.to_config(Loss::CrossEntropy, 0.0);
        Ok(())
    }

    /// The cloud kernel; shape-agnostic, with `d = 2`.
    pub fn kernel_config(&self) -> KernelConfig {
        self.kernel.kernel(&ManifoldModel::sphere())
    }

    pub fn arch(&self, model: ModelKind, init: u64) -> Result<GnnArch> {
        let sigma = match model {
            ModelKind::GraphFilter => Nonlinearity::Identity,
            _ => Nonlinearity::Relu,
        };
        GnnArch::random(vec![3, self.hidden, self.hidden], self.taps, sigma, init)?
            .with_step(self.step)?
            .with_readout(self.shapes.len(), Pooling::Mean, init.wrapping_add(1))
    }

    fn penalty(&self, model: ModelKind) -> f64 {
        if model == ModelKind::LipschitzGnn {
            self.lipschitz_weight
        } else {
            0.0
        }
    }
}

/// Graph and input features of every cloud.
pub fn cloud_dataset(set: &CloudSet, kernel: &KernelConfig, step: f64) -> Result<Dataset> {
    let prepared: Vec<Result<(Arc<dyn Diffusion>, DMatrix<f64>)>> = set
        .clouds
        .par_iter()
        .map(|c| {
            let g = build_graph(c, &kernel.resolve(c.len())?)?;
            let diff: Arc<dyn Diffusion> = if c.len() <= crate::spectral::DENSE_LIMIT {
                Arc::new(SpectralDiffusion::new(&g, step)?)
            } else {
                Arc::new(SeriesDiffusion::new(&g, step))
            };
            Ok((diff, c.to_matrix()))
        })
        .collect();
    let mut data = Dataset { graphs: Vec::new(), samples: Vec::new() };
    for (i, p) in prepared.into_iter().enumerate() {
        let (diff, x) = p?;
        data.graphs.push(diff);
        data.samples.push(Sample { graph: i, input: x, target: Target::Class(set.labels[i]) });
    }
    Ok(data)
}

/// Fraction of samples whose largest logit is the label.
pub fn accuracy(arch: &GnnArch, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let mut hits = 0;
    for s in &data.samples {
        let out = gnn_forward_with(arch, data.graphs[s.graph].as_ref(), &s.input)?;
        let row = out.output().row(0);
        let pred = row.iter().enumerate().fold(0, |b, (j, v)| if *v > row[b] { j } else { b });
        if let Target::Class(c) = s.target {
            hits += usize::from(pred == c);
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: ModelKind,
    pub init: u64,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub rows: Vec<AccuracyRow>,
    /// Final training loss per `(model, init)`, in row order of `ModelKind::ALL x init_seeds`.
    pub final_losses: Vec<f64>,
}

impl ClassifyReport {
    pub fn median_accuracy(&self, model: ModelKind, n: usize) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.model == model && r.n == n).map(|r| r.accuracy).collect();
        (!v.is_empty()).then(|| median(&v))
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "model,init,n,accuracy")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{:e}", r.model.name(), r.init, r.n, r.accuracy)?;
        }
        Ok(())
    }
}

/// Trains every model kind for every initialisation on clouds of `cfg.n`
/// points and measures test accuracy at `cfg.n` and each transfer size.
///
/// Test clouds of different sizes share their seeds, so the smaller ones
/// are prefixes of the larger.
pub fn classify_experiment(cfg: &ClassifyConfig, jobs: Option<usize>) -> Result<(ClassifyReport, Vec<(ModelKind, u64, GnnArch)>)> {
    cfg.validate()?;
    let kernel = cfg.kernel_config();
    let train_set = synth_pointcloud_task(&cfg.shapes, cfg.n, cfg.per_class, cfg.seed)?;
    let test_seed = cfg.seed.wrapping_add(0x5EED);
    let mut test_sizes = vec![cfg.n];
    test_sizes.extend(cfg.transfer_n.iter().copied().filter(|n| *n != cfg.n));
    let (train_data, tests) = super::sweep::with_jobs(jobs, || -> Result<_> {
        let train_data = cloud_dataset(&train_set, &kernel, cfg.step)?;
        let mut tests = Vec::new();
        for &n in &test_sizes {
            let set = synth_pointcloud_task(&cfg.shapes, n, cfg.test_per_class, test_seed)?;
            tests.push((n, cloud_dataset(&set, &kernel, cfg.step)?));
        }
        Ok((train_data, tests))
    })??;

    let jobs_list: Vec<(ModelKind, u64)> =
        ModelKind::ALL.iter().flat_map(|&m| cfg.init_seeds.iter().map(move |&s| (m, s))).collect();
    let trained: Vec<Result<(ModelKind, u64, GnnArch, f64)>> = super::sweep::with_jobs(jobs, || {
        jobs_list
            .par_iter()
            .map(|&(model, init)| {
                let arch = cfg.arch(model, init)?;
                let mut tc = cfg.train.to_config(Loss::CrossEntropy, cfg.penalty(model));
                tc.seed = cfg.train.seed.wrapping_add(init);
                let (trained, report) = train(&arch, &train_data, &tc)?;
                Ok((model, init, trained, *report.losses.last().expect("epochs >= 1")))
            })
            .collect()
    })?;

    let mut report = ClassifyReport { rows: Vec::new(), final_losses: Vec::new() };
    let mut models = Vec::new();
    for t in trained {
        let (model, init, arch, loss) = t?;
        report.final_losses.push(loss);
        for (n, data) in &tests {
            report.rows.push(AccuracyRow { model, init, n: *n, accuracy: accuracy(&arch, data)? });
        }
        models.push((model, init, arch));
    }
    Ok((report, models))
}
