use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{gnn_backward, gnn_forward_with, GnnArch, Penalty, Pooling};
use crate::diffusion::Diffusion;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean squared error over all output entries.
    Mse,
    /// Softmax cross-entropy on a pooled output row.
    CrossEntropy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: Loss,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight `C_L` of the smoothness penalty.
    pub penalty_weight: f64,
    /// Number of grid eigenvalues for the penalty.
    pub penalty_points: usize,
    /// Upper end of the penalty grid; defaults to the largest spectral
    /// bound over the dataset's graphs.
    pub lambda_max: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: Loss::Mse,
            optimizer: Optimizer::adam(),
            learning_rate: 0.005,
            epochs: 40,
            batch_size: 10,
            penalty_weight: 0.0,
            penalty_points: 64,
            lambda_max: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be nonnegative and finite"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(Error::config("penalty_weight", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    /// Node-level regression target, `n x out`.
    Signal(DMatrix<f64>),
}

#[derive(Clone, Debug)]
pub struct Sample {
    /// Index into [`Dataset::graphs`].
    pub graph: usize,
    /// `n x F_0` input features.
    pub input: DMatrix<f64>,
    pub target: Target,
}

/// Samples living on a shared set of graphs.
#[derive(Clone)]
pub struct Dataset {
    pub graphs: Vec<Arc<dyn Diffusion>>,
    pub samples: Vec<Sample>,
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset").field("graphs", &self.graphs.len()).field("samples", &self.samples.len()).finish()
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn validate(&self, loss: Loss) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.graph >= self.graphs.len() {
                return Err(Error::invalid(format!("sample {i} refers to missing graph {}", s.graph)));
            }
            match (&s.target, loss) {
                (Target::Class(_), Loss::CrossEntropy) | (Target::Signal(_), Loss::Mse) => {}
                _ => return Err(Error::invalid(format!("sample {i}: target does not match the loss"))),
            }
        }
        Ok(())
    }
}

/// Per-epoch training trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean data loss over the epoch's samples, measured before each update.
    pub losses: Vec<f64>,
    /// Penalty value at the end of each epoch.
    pub penalties: Vec<f64>,
}

impl TrainReport {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "epoch,loss,penalty")?;
        for (e, (l, p)) in self.losses.iter().zip(&self.penalties).enumerate() {
            writeln!(w, "{},{l:e},{p:e}", e + 1)?;
        }
        Ok(())
    }
}

/// Loss value and `dLoss/d output`.
pub(crate) fn loss_and_grad(loss: Loss, output: &DMatrix<f64>, target: &Target) -> Result<(f64, DMatrix<f64>)> {
    match (loss, target) {
        (Loss::Mse, Target::Signal(t)) => {
            if t.shape() != output.shape() {
                return Err(Error::DimensionMismatch { expected: output.len(), got: t.len() });
            }
            let diff = output - t;
            let m = diff.len() as f64;
            Ok((diff.norm_squared() / m, diff * (2.0 / m)))
        }
        (Loss::CrossEntropy, Target::Class(c)) => {
            if output.nrows() != 1 || *c >= output.ncols() {
                return Err(Error::invalid("cross-entropy needs a pooled output row and a valid class"));
            }
            let row = output.row(0);
            let mx = row.max();
            let exps: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
            let z: f64 = exps.iter().sum();
            let loss = -(exps[*c] / z).ln();
            let grad = DMatrix::from_fn(1, output.ncols(), |_, j| exps[j] / z - if j == *c { 1.0 } else { 0.0 });
            Ok((loss, grad))
        }
        _ => Err(Error::invalid("target does not match the loss")),
    }
}

/// Mean loss of `arch` over the dataset.
pub fn dataset_loss(arch: &GnnArch, data: &Dataset, loss: Loss) -> Result<f64> {
    data.validate(loss)?;
    let mut total = 0.0;
    for s in &data.samples {
        let cache = gnn_forward_with(arch, data.graphs[s.graph].as_ref(), &s.input)?;
        total += loss_and_grad(loss, cache.output(), &s.target)?.0;
    }
    Ok(total / data.len() as f64)
}

struct OptState {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        OptState { kind, lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], mask: Option<&[bool]>) {
        self.t += 1;
        for i in 0..params.len() {
            if mask.is_some_and(|m| !m[i]) {
                continue;
            }
            match self.kind {
                Optimizer::Sgd => params[i] -= self.lr * grad[i],
                Optimizer::Adam { beta1, beta2 } => {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let mh = self.m[i] / (1.0 - beta1.powi(self.t));
                    let vh = self.v[i] / (1.0 - beta2.powi(self.t));
                    params[i] -= self.lr * mh / (vh.sqrt() + 1e-8);
                }
            }
        }
    }
}

fn penalty_for(data: &Dataset, cfg: &TrainConfig) -> Option<Penalty> {
    if cfg.penalty_weight == 0.0 {
        return None;
    }
    let lambda_max = cfg
        .lambda_max
        .unwrap_or_else(|| data.graphs.iter().map(|g| g.spectral_bound()).fold(0.0, f64::max));
    Some(Penalty { weight: cfg.penalty_weight, points: cfg.penalty_points, lambda_max })
}

/// Minibatch training. Deterministic given `cfg.seed`: the sample order is
/// reshuffled every epoch from a single seeded stream.
pub fn train(arch: &GnnArch, data: &Dataset, cfg: &TrainConfig) -> Result<(GnnArch, TrainReport)> {
    cfg.validate()?;
    data.validate(cfg.loss)?;
    let mut arch = arch.clone();
    let penalty = penalty_for(data, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptState::new(cfg.optimizer, cfg.learning_rate, arch.num_params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport { losses: Vec::with_capacity(cfg.epochs), penalties: Vec::with_capacity(cfg.epochs) };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; arch.num_params()];
            for &i in batch {
                let s = &data.samples[i];
                let diff = data.graphs[s.graph].as_ref();
                let cache = gnn_forward_with(&arch, diff, &s.input)?;
                let (l, lg) = loss_and_grad(cfg.loss, cache.output(), &s.target)?;
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch, loss: l });
                }
                total += l;
                let g = gnn_backward(&arch, diff, &cache, &lg, None)?.flatten();
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b / batch.len() as f64;
                }
            }
            if let Some(p) = &penalty {
                let (_, pg) = p.eval(&arch);
                for (a, b) in grad.iter_mut().zip(pg.concat()) {
                    *a += b;
                }
            }
            let mut params = arch.params();
            opt.step(&mut params, &grad, None);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged { epoch, loss: f64::NAN });
            }
            arch.set_params(&params)?;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        report.losses.push(mean);
        report.penalties.push(penalty.as_ref().map_or(0.0, |p| p.eval(&arch).0));
    }
    Ok((arch, report))
}

/// Refits only the readout on features computed with the frozen filters,
/// by full-batch descent. The best readout seen, the initial one included,
/// is kept, so the loss never increases.
pub fn readout_retrain(arch: &GnnArch, data: &Dataset, cfg: &TrainConfig) -> Result<(GnnArch, TrainReport)> {
    cfg.validate()?;
    data.validate(cfg.loss)?;
    let readout = arch.readout().ok_or_else(|| Error::invalid("architecture has no readout to retrain"))?;
    let pooling = readout.pooling;
    // Frozen final-layer features per sample.
    let mut feats = Vec::with_capacity(data.len());
    for s in &data.samples {
        let cache = gnn_forward_with(arch, data.graphs[s.graph].as_ref(), &s.input)?;
        feats.push(cache.features().clone());
    }
    let nf = arch.num_filter_params();
    let mut arch = arch.clone();
    let eval = |arch: &GnnArch| -> Result<(f64, Vec<f64>)> {
        let r = arch.readout().expect("readout present");
        let mut total = 0.0;
        let mut gw = DMatrix::zeros(r.weight.nrows(), r.weight.ncols());
        let mut gb = DVector::zeros(r.bias.len());
        for (x, s) in feats.iter().zip(&data.samples) {
            let input = match pooling {
                Pooling::Mean => DMatrix::from_row_slice(1, x.ncols(), x.row_mean().as_slice()),
                Pooling::None => x.clone(),
            };
            let mut y = &input * r.weight.transpose();
            for mut row in y.row_iter_mut() {
                row += r.bias.transpose();
            }
            let (l, lg) = loss_and_grad(cfg.loss, &y, &s.target)?;
            total += l;
            gw += lg.transpose() * &input;
            gb += lg.row_sum().transpose();
        }
        let m = data.len() as f64;
        let mut grad = vec![0.0; nf];
        grad.extend((gw / m).transpose().iter());
        grad.extend((gb / m).iter());
        Ok((total / m, grad))
    };
    let mut opt = OptState::new(cfg.optimizer, cfg.learning_rate, arch.num_params());
    let mask: Vec<bool> = (0..arch.num_params()).map(|i| i >= nf).collect();
    let (mut best_loss, mut grad) = eval(&arch)?;
    let mut best = arch.clone();
    let mut report = TrainReport { losses: vec![], penalties: vec![] };
    for epoch in 1..=cfg.epochs {
        let mut params = arch.params();
        opt.step(&mut params, &grad, Some(&mask));
        arch.set_params(&params)?;
        let (l, g) = eval(&arch)?;
        if !l.is_finite() {
            return Err(Error::Diverged { epoch, loss: l });
        }
        if l < best_loss {
            best_loss = l;
            best = arch.clone();
        }
        grad = g;
        report.losses.push(l);
        report.penalties.push(0.0);
    }
    Ok((best, report))
}
