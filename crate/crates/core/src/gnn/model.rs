use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{Diffusion, SeriesDiffusion};
use crate::filterbank::{derivative_raw, FilterCoeffs};
use crate::geograph::GeoGraph;
use crate::{Error, Result};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Pointwise nonlinearity. ReLU and tanh satisfy `sigma(0) = 0` and are
/// 1-Lipschitz.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    Tanh,
    Identity,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Nonlinearity::Relu => a.max(0.0),
            Nonlinearity::Tanh => a.tanh(),
            Nonlinearity::Identity => a,
        }
    }

    /// Derivative, taking 0 at the ReLU kink.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => 1.0 - a.tanh().powi(2),
            Nonlinearity::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Nonlinearity::Relu),
            "tanh" => Ok(Nonlinearity::Tanh),
            "identity" => Ok(Nonlinearity::Identity),
            _ => Err(Error::invalid(format!("unknown nonlinearity `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Node-level outputs.
    None,
    /// Mean over nodes before the affine map.
    Mean,
}

/// Affine map `y = W x + b` applied to final-layer features.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout {
    /// `out x F_L`
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub pooling: Pooling,
}

impl Readout {
    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Layer widths, filter taps and readout.
///
/// Taps of filter `(l, p, q)` live at
/// `coeffs[l][((p * F_l + q) * K_t + k]` with `F_l` the layer's input width.
/// Every mutation bumps a version so stale forward caches are detected.
#[derive(Clone, Debug)]
pub struct GnnArch {
    widths: Vec<usize>,
    taps: usize,
    step: f64,
    coeffs: Vec<Vec<f64>>,
    nonlinearity: Nonlinearity,
    readout: Option<Readout>,
    version: u64,
}

impl PartialEq for GnnArch {
    fn eq(&self, other: &Self) -> bool {
        self.widths == other.widths
            && self.taps == other.taps
            && self.step == other.step
            && self.coeffs == other.coeffs
            && self.nonlinearity == other.nonlinearity
            && self.readout == other.readout
    }
}

impl GnnArch {
    /// All-zero coefficients, unit step, no readout.
    pub fn zeros(widths: Vec<usize>, taps: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("need at least one layer (two widths)"));
        }
        if widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if taps == 0 {
            return Err(Error::invalid("filters need at least one tap"));
        }
        let coeffs = widths.windows(2).map(|w| vec![0.0; w[0] * w[1] * taps]).collect();
        Ok(GnnArch { widths, taps, step: 1.0, coeffs, nonlinearity, readout: None, version: fresh_version() })
    }

    /// Taps drawn i.i.d. uniform on `+-1/sqrt(K_t F_{l-1})`.
    pub fn random(widths: Vec<usize>, taps: usize, nonlinearity: Nonlinearity, seed: u64) -> Result<Self> {
        let mut arch = Self::zeros(widths, taps, nonlinearity)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..arch.num_layers() {
            let bound = 1.0 / ((taps * arch.widths[l]) as f64).sqrt();
            for c in arch.coeffs[l].iter_mut() {
                *c = rng.random_range(-bound..=bound);
            }
        }
        Ok(arch)
    }

    /// One layer, one filter.
    pub fn single_filter(h: &FilterCoeffs, nonlinearity: Nonlinearity) -> Self {
        let mut arch = Self::zeros(vec![1, 1], h.taps(), nonlinearity).expect("valid shape");
        arch.coeffs[0].copy_from_slice(h.coeffs());
        arch.step = h.step();
        arch
    }

    pub fn with_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {step}")));
        }
        self.step = step;
        self.version = fresh_version();
        Ok(self)
    }

    /// Attaches a readout with weights uniform on `+-1/sqrt(F_L)` and zero bias.
    pub fn with_readout(mut self, out_dim: usize, pooling: Pooling, seed: u64) -> Result<Self> {
        if out_dim == 0 {
            return Err(Error::invalid("readout dimension must be positive"));
        }
        let f = *self.widths.last().expect("nonempty");
        let bound = 1.0 / (f as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7265_6164);
        let weight = DMatrix::from_fn(out_dim, f, |_, _| rng.random_range(-bound..=bound));
        self.readout = Some(Readout { weight, bias: DVector::zeros(out_dim), pooling });
        self.version = fresh_version();
        Ok(self)
    }

    pub fn set_readout(&mut self, readout: Option<Readout>) -> Result<()> {
        if let Some(r) = &readout {
            let f = *self.widths.last().expect("nonempty");
            if r.weight.ncols() != f || r.bias.len() != r.weight.nrows() {
                return Err(Error::DimensionMismatch { expected: f, got: r.weight.ncols() });
            }
        }
        self.readout = readout;
        self.version = fresh_version();
        Ok(())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn readout(&self) -> Option<&Readout> {
        self.readout.as_ref()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn layer_coeffs(&self, l: usize) -> &[f64] {
        &self.coeffs[l]
    }

    fn offset(&self, l: usize, p: usize, q: usize) -> usize {
        (p * self.widths[l] + q) * self.taps
    }

    pub fn taps_of(&self, l: usize, p: usize, q: usize) -> &[f64] {
        let o = self.offset(l, p, q);
        &self.coeffs[l][o..o + self.taps]
    }

    /// Filter mapping input feature `q` to output feature `p` of layer `l`
    /// (0-based).
    pub fn filter(&self, l: usize, p: usize, q: usize) -> FilterCoeffs {
        FilterCoeffs::with_step(self.taps_of(l, p, q).to_vec(), self.step)
            .expect("stored taps are finite")
            .learned()
    }

    pub fn set_filter(&mut self, l: usize, p: usize, q: usize, taps: &[f64]) -> Result<()> {
        if taps.len() != self.taps {
            return Err(Error::DimensionMismatch { expected: self.taps, got: taps.len() });
        }
        let o = self.offset(l, p, q);
        self.coeffs[l][o..o + self.taps].copy_from_slice(taps);
        self.version = fresh_version();
        Ok(())
    }

    pub fn filter_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn num_filter_params(&self) -> usize {
        self.coeffs.iter().map(Vec::len).sum()
    }

    pub fn num_params(&self) -> usize {
        self.num_filter_params() + self.readout.as_ref().map_or(0, |r| r.weight.len() + r.bias.len())
    }

    /// Filter taps layer by layer, then readout weights (row-major) and bias.
    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.coeffs.concat();
        if let Some(r) = &self.readout {
            v.extend(r.weight.transpose().iter());
            v.extend(r.bias.iter());
        }
        v
    }

    pub fn set_params(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        let mut off = 0;
        for layer in self.coeffs.iter_mut() {
            let len = layer.len();
            layer.copy_from_slice(&v[off..off + len]);
            off += len;
        }
        if let Some(r) = &mut self.readout {
            let (rows, cols) = r.weight.shape();
            for i in 0..rows {
                for j in 0..cols {
                    r.weight[(i, j)] = v[off + i * cols + j];
                }
            }
            off += rows * cols;
            for i in 0..rows {
                r.bias[i] = v[off + i];
            }
        }
        self.version = fresh_version();
        Ok(())
    }

    /// Writes a text checkpoint: a header line with the shape followed by
    /// one row of taps per filter and the readout rows.
    pub fn write_checkpoint(&self, mut w: impl Write) -> Result<()> {
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        let readout = match &self.readout {
            None => "none".to_string(),
            Some(r) => format!("{}:{}", r.out_dim(), if r.pooling == Pooling::Mean { "mean" } else { "none" }),
        };
        writeln!(
            w,
            "# geognn widths={} taps={} step={:e} sigma={} readout={}",
            widths.join(","),
            self.taps,
            self.step,
            self.nonlinearity.name(),
            readout
        )?;
        for l in 0..self.num_layers() {
            for p in 0..self.widths[l + 1] {
                for q in 0..self.widths[l] {
                    let row: Vec<String> = self.taps_of(l, p, q).iter().map(|x| format!("{x:e}")).collect();
                    writeln!(w, "h {l} {p} {q} {}", row.join(" "))?;
                }
            }
        }
        if let Some(r) = &self.readout {
            for i in 0..r.out_dim() {
                let row: Vec<String> = r.weight.row(i).iter().map(|x| format!("{x:e}")).collect();
                writeln!(w, "w {i} {} {:e}", row.join(" "), r.bias[i])?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty checkpoint".into()))??;
        let field = |key: &str| -> Result<String> {
            header
                .split_whitespace()
                .find_map(|t| t.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("checkpoint header lacks `{key}`")))
        };
        let bad = |what: &str| Error::Parse(format!("bad checkpoint {what}"));
        let widths: Vec<usize> = field("widths")?
            .split(',')
            .map(|s| s.parse().map_err(|_| bad("widths")))
            .collect::<Result<_>>()?;
        let taps: usize = field("taps")?.parse().map_err(|_| bad("taps"))?;
        let step: f64 = field("step")?.parse().map_err(|_| bad("step"))?;
        let sigma: Nonlinearity = field("sigma")?.parse()?;
        let mut arch = GnnArch::zeros(widths, taps, sigma)?.with_step(step)?;
        let readout = field("readout")?;
        if readout != "none" {
            let (d, pool) = readout.split_once(':').ok_or_else(|| bad("readout"))?;
            let d: usize = d.parse().map_err(|_| bad("readout"))?;
            let pooling = if pool == "mean" { Pooling::Mean } else { Pooling::None };
            arch = arch.with_readout(d, pooling, 0)?;
        }
        for line in lines {
            let line = line?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            let nums = |s: &[&str]| -> Result<Vec<f64>> { s.iter().map(|t| t.parse().map_err(|_| bad("value"))).collect() };
            let idx = |s: &str| -> Result<usize> { s.parse().map_err(|_| bad("index")) };
            match toks.first() {
                Some(&"h") if toks.len() == 4 + taps => {
                    let (l, p, q) = (idx(toks[1])?, idx(toks[2])?, idx(toks[3])?);
                    if l >= arch.num_layers() || p >= arch.widths[l + 1] || q >= arch.widths[l] {
                        return Err(bad("filter index"));
                    }
                    arch.set_filter(l, p, q, &nums(&toks[4..])?)?;
                }
                Some(&"w") => {
                    let i = idx(toks[1])?;
                    let vals = nums(&toks[2..])?;
                    let r = arch.readout.as_mut().ok_or_else(|| bad("readout row"))?;
                    if i >= r.out_dim() || vals.len() != r.weight.ncols() + 1 {
                        return Err(bad("readout row"));
                    }
                    for (j, v) in vals[..vals.len() - 1].iter().enumerate() {
                        r.weight[(i, j)] = *v;
                    }
                    r.bias[i] = vals[vals.len() - 1];
                }
                None => {}
                Some(t) if t.starts_with('#') => {}
                _ => return Err(Error::Parse(format!("unrecognised checkpoint line `{line}`"))),
            }
        }
        arch.version = fresh_version();
        Ok(arch)
    }
}

/// Intermediates of a forward pass, consumed by [`gnn_backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    /// `E^k X_{l-1}` for each layer and tap.
    powers: Vec<Vec<DMatrix<f64>>>,
    /// Pre-activations per layer.
    pre: Vec<DMatrix<f64>>,
    /// Features, input first.
    features: Vec<DMatrix<f64>>,
    pooled: Option<DVector<f64>>,
    output: DMatrix<f64>,
}

impl ForwardCache {
    /// Readout output, or final features when there is no readout. Pooled
    /// outputs are a single row.
    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }

    /// Final-layer features before the readout.
    pub fn features(&self) -> &DMatrix<f64> {
        self.features.last().expect("input present")
    }

    /// Features of layer `l`, 0 being the input.
    pub fn layer(&self, l: usize) -> &DMatrix<f64> {
        &self.features[l]
    }

    pub fn version(&self) -> u64 {
        self.version
    }
}

/// Forward pass on a graph, diffusing with scaled Taylor steps.
pub fn gnn_forward(arch: &GnnArch, g: &GeoGraph, x: &DMatrix<f64>) -> Result<ForwardCache> {
    gnn_forward_with(arch, &SeriesDiffusion::new(g, arch.step), x)
}

pub fn gnn_forward_with(arch: &GnnArch, diff: &dyn Diffusion, x: &DMatrix<f64>) -> Result<ForwardCache> {
    if x.ncols() != arch.widths[0] {
        return Err(Error::DimensionMismatch { expected: arch.widths[0], got: x.ncols() });
    }
    if x.nrows() != diff.len() {
        return Err(Error::DimensionMismatch { expected: diff.len(), got: x.nrows() });
    }
    if (diff.step() - arch.step).abs() > 1e-15 * arch.step {
        return Err(Error::invalid("diffusion step differs from the architecture's"));
    }
    let sigma = arch.nonlinearity;
    let mut powers = Vec::with_capacity(arch.num_layers());
    let mut pre = Vec::with_capacity(arch.num_layers());
    let mut features = vec![x.clone()];
    for l in 0..arch.num_layers() {
        let (fin, fout) = (arch.widths[l], arch.widths[l + 1]);
        let pw = diff.powers(&features[l], arch.taps);
        let mut z = DMatrix::zeros(x.nrows(), fout);
        for (k, pk) in pw.iter().enumerate() {
            let hk = DMatrix::from_fn(fin, fout, |q, p| arch.coeffs[l][arch.offset(l, p, q) + k]);
            z += pk * hk;
        }
        features.push(z.map(|a| sigma.apply(a)));
        pre.push(z);
        powers.push(pw);
    }
    let last = features.last().expect("input present");
    let (pooled, output) = match &arch.readout {
        None => (None, last.clone()),
        Some(r) => match r.pooling {
            Pooling::None => {
                let mut y = last * r.weight.transpose();
                for mut row in y.row_iter_mut() {
                    row += r.bias.transpose();
                }
                (None, y)
            }
            Pooling::Mean => {
                let mean: DVector<f64> = last.row_mean().transpose();
                let y = &r.weight * &mean + &r.bias;
                (Some(mean), DMatrix::from_row_slice(1, y.len(), y.as_slice()))
            }
        },
    };
    Ok(ForwardCache { version: arch.version, powers, pre, features, pooled, output })
}

/// Squared-derivative smoothness penalty
/// `C_L sum_filters mean_j h'(lambda_j)^2` on `points` equispaced
/// eigenvalues in `[0, lambda_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub weight: f64,
    pub points: usize,
    pub lambda_max: f64,
}

impl Penalty {
    fn grid(&self) -> Vec<f64> {
        let m = self.points.max(2);
        (0..m).map(|j| self.lambda_max * j as f64 / (m - 1) as f64).collect()
    }

    /// Penalty value and its gradient in the filter-tap layout.
    pub fn eval(&self, arch: &GnnArch) -> (f64, Vec<Vec<f64>>) {
        let mut grads: Vec<Vec<f64>> = arch.coeffs.iter().map(|c| vec![0.0; c.len()]).collect();
        if self.weight == 0.0 {
            return (0.0, grads);
        }
        let grid = self.grid();
        let inv = 1.0 / grid.len() as f64;
        let t = arch.step;
        let mut value = 0.0;
        for (l, layer) in arch.coeffs.iter().enumerate() {
            for (f, taps) in layer.chunks_exact(arch.taps).enumerate() {
                for &lam in &grid {
                    let d = derivative_raw(taps, t, lam);
                    value += inv * d * d;
                    let e = (-t * lam).exp();
                    let mut pow = 1.0;
                    for k in 0..arch.taps {
                        grads[l][f * arch.taps + k] += self.weight * inv * 2.0 * d * (-(k as f64) * t * pow);
                        pow *= e;
                    }
                }
            }
        }
        (self.weight * value, grads)
    }
}

/// Gradients in the same layout as [`GnnArch::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub filters: Vec<Vec<f64>>,
    pub readout_weight: Option<DMatrix<f64>>,
    pub readout_bias: Option<DVector<f64>>,
    /// Gradient with respect to the input features.
    pub input: DMatrix<f64>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.filters.concat();
        if let (Some(w), Some(b)) = (&self.readout_weight, &self.readout_bias) {
            v.extend(w.transpose().iter());
            v.extend(b.iter());
        }
        v
    }
}

/// Backpropagates `loss_grad = dLoss/d output` through a cached forward
/// pass, adding the penalty gradient when given.
pub fn gnn_backward(
    arch: &GnnArch,
    diff: &dyn Diffusion,
    cache: &ForwardCache,
    loss_grad: &DMatrix<f64>,
    penalty: Option<&Penalty>,
) -> Result<Gradients> {
    if cache.version != arch.version {
        return Err(Error::StaleCache { cache: cache.version, model: arch.version });
    }
    if loss_grad.shape() != cache.output.shape() {
        return Err(Error::DimensionMismatch { expected: cache.output.len(), got: loss_grad.len() });
    }
    let n = cache.features[0].nrows();
    let last = cache.features.last().expect("input present");
    let (mut g, readout_weight, readout_bias) = match &arch.readout {
        None => (loss_grad.clone(), None, None),
        Some(r) => match r.pooling {
            Pooling::None => {
                let dw = loss_grad.transpose() * last;
                let db = loss_grad.row_sum().transpose();
                (loss_grad * &r.weight, Some(dw), Some(db))
            }
            Pooling::Mean => {
                let gy = loss_grad.row(0).transpose();
                let mean = cache.pooled.as_ref().expect("pooled features cached");
                let dw = &gy * mean.transpose();
                let dmean = r.weight.tr_mul(&gy) / n as f64;
                let g = DMatrix::from_fn(n, last.ncols(), |_, j| dmean[j]);
                (g, Some(dw), Some(gy))
            }
        },
    };
    let sigma = arch.nonlinearity;
    let mut filters: Vec<Vec<f64>> = arch.coeffs.iter().map(|c| vec![0.0; c.len()]).collect();
    for l in (0..arch.num_layers()).rev() {
        let (fin, fout) = (arch.widths[l], arch.widths[l + 1]);
        let delta = g.zip_map(&cache.pre[l], |a, z| a * sigma.derivative(z));
        let mut ws = Vec::with_capacity(arch.taps);
        for (k, pk) in cache.powers[l].iter().enumerate() {
            // dH_k[p][q] = sum_i delta[i, p] (E^k x)[i, q]
            let dh = delta.tr_mul(pk);
            for p in 0..fout {
                for q in 0..fin {
                    filters[l][arch.offset(l, p, q) + k] = dh[(p, q)];
                }
            }
            let hk = DMatrix::from_fn(fout, fin, |p, q| arch.coeffs[l][arch.offset(l, p, q) + k]);
            ws.push(&delta * hk);
        }
        // E is symmetric, so the adjoint of sum_k E^k (.) H_k^T is sum_k E^k (.) H_k.
        g = diff.combine(&ws);
    }
    if let Some(pen) = penalty {
        let (_, pg) = pen.eval(arch);
        for (a, b) in filters.iter_mut().zip(pg) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
    Ok(Gradients { filters, readout_weight, readout_bias, input: g })
}
