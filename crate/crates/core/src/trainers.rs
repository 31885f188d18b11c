//! VaR and ES learners built on [`crate::nn`], [`crate::losses`] and [`crate::optim`].
//!
//! Inputs are standardized column by column and, by default, so is the
//! response; models carry both maps and undo them at prediction time, so
//! callers always work in original units.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{
    crossing_penalty, es_target, joint_loss, pinball_loss, AlphaLevel, JointLossSpec,
    TruncationBound,
};
use crate::nn::{interp_head_eval, InterpGrid, Network};
use crate::optim::{linear_least_squares, train, BatchLoss, TrainConfig};
use crate::rng::{indexed, stream, Stream};

/// Rows per parallel work item; the reduction runs in chunk order.
const CHUNK: usize = 256;

/// Hidden-layer layout. `width = None` means twice the network input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Arch {
    pub hidden_layers: usize,
    pub width: Option<usize>,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            width: None,
        }
    }
}

impl Arch {
    pub fn hidden(&self, input_dim: usize) -> Vec<usize> {
        vec![self.width.unwrap_or(2 * input_dim).max(1); self.hidden_layers]
    }
}

/// How responses are mapped before training.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TransformKind {
    Identity,
    /// Affine map to zero mean and unit variance.
    #[default]
    Standardize,
    /// `h₁(y) = tanh(y / scale)`.
    Tanh {
        scale: f64,
    },
}

/// Fitted monotone response map `h₁` with inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputTransform {
    Identity,
    Affine { shift: f64, scale: f64 },
    Tanh { scale: f64 },
}

impl OutputTransform {
    pub fn fit(kind: TransformKind, y: &[f64]) -> Result<Self> {
        Ok(match kind {
            TransformKind::Identity => Self::Identity,
            TransformKind::Standardize => {
                let (m, s) = mean_std(y);
                Self::Affine { shift: m, scale: s }
            }
            TransformKind::Tanh { scale } => {
                if !(scale > 0.0) {
                    return Err(Error::Input("tanh transform scale must be positive".into()));
                }
                Self::Tanh { scale }
            }
        })
    }

    /// `h₁(y)`.
    pub fn forward(&self, y: f64) -> f64 {
        match *self {
            Self::Identity => y,
            Self::Affine { shift, scale } => (y - shift) / scale,
            Self::Tanh { scale } => (y / scale).tanh(),
        }
    }

    /// `h₁⁻¹(u)`.
    pub fn inverse(&self, u: f64) -> f64 {
        match *self {
            Self::Identity => u,
            Self::Affine { shift, scale } => shift + scale * u,
            Self::Tanh { scale } => {
                let lim = 1.0 - f64::EPSILON;
                scale * u.clamp(-lim, lim).atanh()
            }
        }
    }
}

/// Mean and population standard deviation; a zero deviation is reported as 1.
fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let s = var.sqrt();
    (m, if s > 1e-12 * m.abs().max(1.0) { s } else { 1.0 })
}

/// Per-column affine input standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Fits a scaler on row-major `rows` with `dim` columns.
    pub fn fit(rows: &[f64], dim: usize) -> Self {
        let mut shift = Vec::with_capacity(dim);
        let mut scale = Vec::with_capacity(dim);
        for j in 0..dim {
            let col: Vec<f64> = rows.iter().skip(j).step_by(dim).copied().collect();
            let (m, s) = mean_std(&col);
            shift.push(m);
            scale.push(s);
        }
        Self { shift, scale }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply_into(&self, raw: &[f64], out: &mut [f64]) {
        for (j, (o, r)) in out.iter_mut().zip(raw).enumerate() {
            *o = (r - self.shift[j]) / self.scale[j];
        }
    }

    pub fn apply_rows(&self, raw: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; raw.len()];
        for (r, o) in raw.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.apply_into(r, o);
        }
        out
    }
}

/// How a VaR model handles the confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AlphaMode {
    SingleAlpha {
        alpha: f64,
    },
    /// α is input 0 of the network.
    Continuum {
        alpha_low: f64,
        alpha_high: f64,
    },
    /// One output per knot, combined by [`interp_head_eval`].
    InterpGrid {
        grid: InterpGrid,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub mode: AlphaMode,
    pub input: Scaler,
    pub transform: OutputTransform,
    pub net: Network,
}

impl VarModel {
    /// Number of raw feature columns (without α).
    pub fn feature_dim(&self) -> usize {
        match self.mode {
            AlphaMode::Continuum { .. } => self.input.dim() - 1,
            _ => self.input.dim(),
        }
    }

    pub fn covers(&self, alpha: f64) -> bool {
        match &self.mode {
            AlphaMode::SingleAlpha { alpha: a } => *a == alpha,
            AlphaMode::Continuum {
                alpha_low,
                alpha_high,
            } => alpha >= *alpha_low && alpha <= *alpha_high,
            AlphaMode::InterpGrid { grid } => grid.contains(alpha),
        }
    }

    fn check_alpha(&self, alpha: f64) -> Result<()> {
        if self.covers(alpha) {
            return Ok(());
        }
        Err(Error::Usage(match &self.mode {
            AlphaMode::SingleAlpha { alpha: a } => {
                format!("model was trained at alpha = {a}, asked for {alpha}")
            }
            AlphaMode::Continuum {
                alpha_low,
                alpha_high,
            } => format!("alpha {alpha} outside trained range [{alpha_low}, {alpha_high}]"),
            AlphaMode::InterpGrid { grid } => format!(
                "alpha {alpha} outside grid range [{}, {}]",
                grid.lo(),
                grid.hi()
            ),
        }))
    }

    /// Scaled network input for `(x, α)`.
    fn net_input(&self, x: &[f64], alpha: f64, buf: &mut Vec<f64>) -> Result<()> {
        if x.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.feature_dim(),
                x.len()
            )));
        }
        buf.clear();
        if matches!(self.mode, AlphaMode::Continuum { .. }) {
            buf.push(alpha);
        }
        buf.extend_from_slice(x);
        let raw = buf.clone();
        self.input.apply_into(&raw, buf);
        Ok(())
    }

    /// Network output mapped back through `h₁⁻¹`.
    fn read_output(&self, out: &[f64], alpha: f64) -> Result<f64> {
        let u = match &self.mode {
            AlphaMode::InterpGrid { grid } => interp_head_eval(out, alpha, grid)?,
            _ => out[0],
        };
        Ok(self.transform.inverse(u))
    }

    /// Raw network output combined over the head (before `h₁⁻¹`).
    pub fn predict_raw(&self, x: &[f64], alpha: f64) -> Result<f64> {
        self.check_alpha(alpha)?;
        let mut buf = Vec::new();
        self.net_input(x, alpha, &mut buf)?;
        let out = self.net.predict(&buf)?;
        match &self.mode {
            AlphaMode::InterpGrid { grid } => interp_head_eval(&out, alpha, grid),
            _ => Ok(out[0]),
        }
    }

    pub fn predict(&self, x: &[f64], alpha: f64) -> Result<f64> {
        self.check_alpha(alpha)?;
        let mut buf = Vec::new();
        self.net_input(x, alpha, &mut buf)?;
        let out = self.net.predict(&buf)?;
        self.read_output(&out, alpha)
    }

    /// Predictions for row-major features `xs` at one α.
    pub fn predict_rows(&self, xs: &[f64], alpha: f64) -> Result<Vec<f64>> {
        self.check_alpha(alpha)?;
        let d = self.feature_dim();
        if !xs.len().is_multiple_of(d) {
            return Err(Error::Shape(
                "feature block is not a multiple of the feature dim".into(),
            ));
        }
        let rows: Vec<&[f64]> = xs.chunks_exact(d).collect();
        let chunks: Vec<Result<Vec<f64>>> = rows
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut buf = Vec::new();
                let mut cache = self.net.new_cache();
                chunk
                    .iter()
                    .map(|x| {
                        self.net_input(x, alpha, &mut buf)?;
                        let out = self.net.forward_into(&buf, &mut cache)?;
                        self.read_output(out, alpha)
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(rows.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    /// Last-hidden-layer activations at `(x, α)`.
    pub fn hidden_features(&self, x: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let mut buf = Vec::new();
        self.net_input(x, alpha, &mut buf)?;
        self.net.hidden_features(&buf, &mut self.net.new_cache())
    }
}

/// Everything a fit needs besides data and α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub arch: Arch,
    pub train: TrainConfig,
    pub transform: TransformKind,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            arch: Arch::default(),
            train: TrainConfig::default(),
            transform: TransformKind::Standardize,
        }
    }
}

/// Row loss: `(row, outputs, tangent, d_out, d_tan) -> loss`.
trait RowLoss: Fn(usize, &[f64], &[f64], &mut [f64], &mut [f64]) -> f64 + Sync {}
impl<F: Fn(usize, &[f64], &[f64], &mut [f64], &mut [f64]) -> f64 + Sync> RowLoss for F {}

/// Mean loss and gradient over `rows`, chunked for parallelism and reduced in order.
fn batch_loss<F: RowLoss>(
    net: &Network,
    inputs: &[f64],
    rows: &[usize],
    tangent: bool,
    row_loss: &F,
) -> Result<BatchLoss> {
    let d = net.input_dim();
    let o = net.output_dim();
    let parts: Vec<Result<(f64, Vec<f64>)>> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; net.n_params()];
            let mut total = 0.0;
            let mut d_out = vec![0.0; o];
            let mut d_tan = vec![0.0; o];
            if tangent {
                let mut cache = net.new_tangent_cache();
                for &i in chunk {
                    net.forward_tangent_into(&inputs[i * d..(i + 1) * d], &mut cache)?;
                    d_out.iter_mut().for_each(|v| *v = 0.0);
                    d_tan.iter_mut().for_each(|v| *v = 0.0);
                    total += row_loss(i, cache.output(), cache.tangent(), &mut d_out, &mut d_tan);
                    net.backward_with_tangent(&cache, &d_out, &d_tan, &mut grad)?;
                }
            } else {
                let mut cache = net.new_cache();
                for &i in chunk {
                    net.forward_into(&inputs[i * d..(i + 1) * d], &mut cache)?;
                    d_out.iter_mut().for_each(|v| *v = 0.0);
                    total += row_loss(i, cache.output(), &[], &mut d_out, &mut d_tan);
                    net.backward_accumulate(&cache, &d_out, &mut grad, None)?;
                }
            }
            Ok((total, grad))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; net.n_params()];
    for p in parts {
        let (l, g) = p?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let k = rows.len() as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    Ok(BatchLoss {
        loss: loss / k,
        grad,
    })
}

/// Fresh network, or a copy of `warm` when its shape fits.
fn init_net(
    input_dim: usize,
    output_dim: usize,
    cfg: &FitConfig,
    warm: Option<&Network>,
) -> Result<Network> {
    let hidden = cfg.arch.hidden(input_dim);
    if let Some(w) = warm {
        let shapes_ok = w.input_dim() == input_dim
            && w.output_dim() == output_dim
            && w.n_hidden() == hidden.len()
            && w.layer_specs()[..hidden.len()]
                .iter()
                .zip(&hidden)
                .all(|(s, &h)| s.out_dim == h);
        if !shapes_ok {
            return Err(Error::Shape(
                "warm-start network does not match the architecture".into(),
            ));
        }
        return Ok(w.clone());
    }
    Network::init(
        input_dim,
        &hidden,
        output_dim,
        &mut stream(cfg.train.seed, Stream::Init),
    )
}

fn check_nonempty(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Input("dataset is empty".into()));
    }
    Ok(())
}

/// Outcome of a fit: the model and its per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct Fitted<M> {
    pub model: M,
    pub history: Vec<f64>,
}

/// Single-α VaR by pinball regression.
pub fn fit_var_single(data: &Dataset, alpha: AlphaLevel, cfg: &FitConfig) -> Result<VarModel> {
    Ok(fit_var_single_warm(data, alpha, cfg, None)?.model)
}

/// As [`fit_var_single`], optionally starting from `warm`'s weights.
pub fn fit_var_single_warm(
    data: &Dataset,
    alpha: AlphaLevel,
    cfg: &FitConfig,
    warm: Option<&Network>,
) -> Result<Fitted<VarModel>> {
    check_nonempty(data)?;
    let d = data.dim();
    let input = Scaler::fit(data.x(), d);
    let inputs = input.apply_rows(data.x());
    let transform = OutputTransform::fit(cfg.transform, data.y())?;
    let y: Vec<f64> = data.y().iter().map(|&v| transform.forward(v)).collect();
    let mut net = init_net(d, 1, cfg, warm)?;
    let row_loss = |i: usize, out: &[f64], _: &[f64], d_out: &mut [f64], _: &mut [f64]| {
        let (l, g) = pinball_loss(y[i], out[0], alpha);
        d_out[0] = g;
        l
    };
    let history = train(
        &mut net,
        data.len(),
        |net, rows| batch_loss(net, &inputs, rows, false, &row_loss),
        &cfg.train,
    )?;
    Ok(Fitted {
        model: VarModel {
            mode: AlphaMode::SingleAlpha { alpha: alpha.get() },
            input,
            transform,
            net,
        },
        history,
    })
}

/// Per-row α: the dataset's column when present, otherwise uniform on `[lo, hi]`
/// from the α stream of `seed` (one draw per row, fixed for the whole fit).
fn alpha_column(data: &Dataset, lo: f64, hi: f64, seed: u64) -> Result<Vec<f64>> {
    if let Some(a) = data.alpha() {
        if let Some(bad) = a.iter().find(|&&v| v < lo || v > hi) {
            return Err(Error::Input(format!(
                "alpha column entry {bad} outside [{lo}, {hi}]"
            )));
        }
        return Ok(a.to_vec());
    }
    Ok((0..data.len())
        .map(|i| {
            let mut rng = indexed(seed, Stream::Alpha, i as u64);
            rng.random_range(lo..=hi)
        })
        .collect())
}

fn check_alpha_range(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && hi < 1.0 && lo < hi) {
        return Err(Error::Input(format!(
            "alpha range [{lo}, {hi}] must satisfy 0 < low < high < 1"
        )));
    }
    Ok(())
}

/// Multi-α VaR with α as an input. Per-row loss is `(1−αᵢ)·pinball` plus
/// `λ(−∂q/∂α)⁺`, the derivative taken with respect to the standardized α input
/// in standardized response units. `λ > 0` is scheme (I), `λ = 0` scheme (II).
pub fn fit_var_multi_continuum(
    data: &Dataset,
    alpha_range: (f64, f64),
    lambda: f64,
    cfg: &FitConfig,
) -> Result<VarModel> {
    Ok(fit_var_multi_continuum_warm(data, alpha_range, lambda, cfg, None)?.model)
}

pub fn fit_var_multi_continuum_warm(
    data: &Dataset,
    alpha_range: (f64, f64),
    lambda: f64,
    cfg: &FitConfig,
    warm: Option<&Network>,
) -> Result<Fitted<VarModel>> {
    check_nonempty(data)?;
    let (lo, hi) = alpha_range;
    check_alpha_range(lo, hi)?;
    if !(lambda >= 0.0) {
        return Err(Error::Input(
            "crossing penalty lambda must be nonnegative".into(),
        ));
    }
    let alphas = alpha_column(data, lo, hi, cfg.train.seed)?;
    let d = data.dim();
    let mut raw = Vec::with_capacity(data.len() * (d + 1));
    for i in 0..data.len() {
        raw.push(alphas[i]);
        raw.extend_from_slice(data.row(i));
    }
    let input = Scaler::fit(&raw, d + 1);
    let inputs = input.apply_rows(&raw);
    let transform = OutputTransform::fit(cfg.transform, data.y())?;
    let y: Vec<f64> = data.y().iter().map(|&v| transform.forward(v)).collect();
    let levels: Vec<AlphaLevel> = alphas
        .iter()
        .map(|&a| AlphaLevel::new(a))
        .collect::<Result<_>>()?;
    let mut net = init_net(d + 1, 1, cfg, warm)?;
    let tangent = lambda > 0.0;
    let row_loss = |i: usize, out: &[f64], tan: &[f64], d_out: &mut [f64], d_tan: &mut [f64]| {
        let w = 1.0 - levels[i].get();
        let (l, g) = pinball_loss(y[i], out[0], levels[i]);
        d_out[0] = w * g;
        let mut loss = w * l;
        if tangent {
            let (p, dp) = crossing_penalty(tan[0], lambda);
            d_tan[0] = dp;
            loss += p;
        }
        loss
    };
    let history = train(
        &mut net,
        data.len(),
        |net, rows| batch_loss(net, &inputs, rows, tangent, &row_loss),
        &cfg.train,
    )?;
    Ok(Fitted {
        model: VarModel {
            mode: AlphaMode::Continuum {
                alpha_low: lo,
                alpha_high: hi,
            },
            input,
            transform,
            net,
        },
        history,
    })
}

/// Multi-α VaR through a K-output interpolation head (scheme (III)).
/// Per-row loss is `(1−αᵢ)·pinball` at the interpolated output.
pub fn fit_var_multi_interp(
    data: &Dataset,
    grid: &InterpGrid,
    cfg: &FitConfig,
) -> Result<VarModel> {
    Ok(fit_var_multi_interp_warm(data, grid, cfg, None)?.model)
}

pub fn fit_var_multi_interp_warm(
    data: &Dataset,
    grid: &InterpGrid,
    cfg: &FitConfig,
    warm: Option<&Network>,
) -> Result<Fitted<VarModel>> {
    check_nonempty(data)?;
    let alphas = alpha_column(data, grid.lo(), grid.hi(), cfg.train.seed)?;
    let d = data.dim();
    let k = grid.len();
    let input = Scaler::fit(data.x(), d);
    let inputs = input.apply_rows(data.x());
    let transform = OutputTransform::fit(cfg.transform, data.y())?;
    let y: Vec<f64> = data.y().iter().map(|&v| transform.forward(v)).collect();
    let coefs: Vec<Vec<f64>> = alphas
        .iter()
        .map(|&a| grid.coefficients(a))
        .collect::<Result<_>>()?;
    let levels: Vec<AlphaLevel> = alphas
        .iter()
        .map(|&a| AlphaLevel::new(a))
        .collect::<Result<_>>()?;
    let mut net = init_net(d, k, cfg, warm)?;
    let row_loss = |i: usize, out: &[f64], _: &[f64], d_out: &mut [f64], _: &mut [f64]| {
        let c = &coefs[i];
        let q: f64 = c.iter().zip(out).map(|(c, o)| c * o).sum();
        let w = 1.0 - levels[i].get();
        let (l, g) = pinball_loss(y[i], q, levels[i]);
        for (dj, cj) in d_out.iter_mut().zip(c) {
            *dj = w * g * cj;
        }
        w * l
    };
    let history = train(
        &mut net,
        data.len(),
        |net, rows| batch_loss(net, &inputs, rows, false, &row_loss),
        &cfg.train,
    )?;
    Ok(Fitted {
        model: VarModel {
            mode: AlphaMode::InterpGrid { grid: grid.clone() },
            input,
            transform,
            net,
        },
        history,
    })
}

/// VaR used as the first step of the ES regression.
#[derive(Clone, Copy)]
pub enum VarCandidate<'a> {
    Model(&'a VarModel),
    /// A known quantile function of the feature row.
    Exact(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

impl VarCandidate<'_> {
    fn predict_rows(&self, data: &Dataset, alpha: f64) -> Result<Vec<f64>> {
        match self {
            VarCandidate::Model(m) => m.predict_rows(data.x(), alpha),
            VarCandidate::Exact(f) => Ok((0..data.len()).map(|i| f(data.row(i))).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsMethod {
    /// A fresh network trained on the squared residual loss.
    FullNet,
    /// The VaR network's hidden stack frozen, output layer by least squares.
    FrozenLr,
    /// Second output of a joint VaR/ES network.
    Joint,
}

/// ES model `ŝ = q̂ + max(ẑ, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsModel {
    pub alpha: f64,
    pub method: EsMethod,
    pub trunc: TruncationBound,
    /// VaR model the increment was fitted against, absent for exact candidates.
    pub var_model: Option<VarModel>,
    pub input: Scaler,
    /// Raw α prepended to the features (frozen features of a continuum VaR net).
    pub alpha_feature: Option<f64>,
    /// Maps the increment network output to original units.
    pub increment_transform: OutputTransform,
    pub increment_net: Network,
}

impl EsModel {
    fn net_input(&self, x: &[f64], buf: &mut Vec<f64>) -> Result<()> {
        let expect = self.input.dim() - usize::from(self.alpha_feature.is_some());
        if x.len() != expect {
            return Err(Error::Shape(format!(
                "ES model expects {expect} features, got {}",
                x.len()
            )));
        }
        buf.clear();
        buf.extend(self.alpha_feature);
        buf.extend_from_slice(x);
        let raw = buf.clone();
        self.input.apply_into(&raw, buf);
        Ok(())
    }

    fn check_alpha(&self, alpha: f64) -> Result<()> {
        if alpha != self.alpha {
            return Err(Error::Usage(format!(
                "ES model was trained at alpha = {}, asked for {alpha}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// `ẑ(x)` before clamping, in original units.
    pub fn predict_increment(&self, x: &[f64]) -> Result<f64> {
        let mut buf = Vec::new();
        self.net_input(x, &mut buf)?;
        let out = self.increment_net.predict(&buf)?;
        Ok(self.increment_transform.inverse(out[0]))
    }

    /// `q + max(ẑ(x), 0)` for a caller-supplied VaR value `q`.
    pub fn predict_with_var(&self, x: &[f64], q: f64) -> Result<f64> {
        Ok(q + self.predict_increment(x)?.max(0.0))
    }

    pub fn predict(&self, x: &[f64], alpha: f64) -> Result<f64> {
        self.check_alpha(alpha)?;
        let vm = self.var_model.as_ref().ok_or_else(|| {
            Error::Usage("ES model was fitted against an exact VaR; use predict_with_var".into())
        })?;
        let q = vm.predict(x, alpha)?;
        self.predict_with_var(x, q)
    }

    /// Clamped increments `max(ẑ, 0)` for row-major `xs`.
    pub fn predict_increment_rows(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let d = self.input.dim() - usize::from(self.alpha_feature.is_some());
        let rows: Vec<&[f64]> = xs.chunks_exact(d).collect();
        let chunks: Vec<Result<Vec<f64>>> = rows
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut buf = Vec::new();
                let mut cache = self.increment_net.new_cache();
                chunk
                    .iter()
                    .map(|x| {
                        self.net_input(x, &mut buf)?;
                        let out = self.increment_net.forward_into(&buf, &mut cache)?;
                        Ok(self.increment_transform.inverse(out[0]).max(0.0))
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(rows.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}

/// Two-step ES: regress `T_B((1−α)⁻¹(Y − q̂(X))⁺)` on `X`.
pub fn fit_es_two_step(
    data: &Dataset,
    var: VarCandidate<'_>,
    alpha: AlphaLevel,
    method: EsMethod,
    trunc: TruncationBound,
    cfg: &FitConfig,
) -> Result<EsModel> {
    check_nonempty(data)?;
    let a = alpha.get();
    if let VarCandidate::Model(m) = var {
        if !m.covers(a) {
            return Err(Error::Usage(format!(
                "VaR model does not cover alpha = {a}"
            )));
        }
    }
    let q = var.predict_rows(data, a)?;
    let targets: Vec<f64> = data
        .y()
        .iter()
        .zip(&q)
        .map(|(&y, &q)| es_target(y, q, alpha, trunc))
        .collect();
    let var_model = match var {
        VarCandidate::Model(m) => Some(m.clone()),
        VarCandidate::Exact(_) => None,
    };
    match method {
        EsMethod::FullNet => {
            let d = data.dim();
            let input = Scaler::fit(data.x(), d);
            let inputs = input.apply_rows(data.x());
            let transform = OutputTransform::fit(TransformKind::Standardize, &targets)?;
            let t: Vec<f64> = targets.iter().map(|&v| transform.forward(v)).collect();
            let mut net = init_net(d, 1, cfg, None)?;
            let row_loss = |i: usize, out: &[f64], _: &[f64], d_out: &mut [f64], _: &mut [f64]| {
                let r = out[0] - t[i];
                d_out[0] = 2.0 * r;
                r * r
            };
            train(
                &mut net,
                data.len(),
                |net, rows| batch_loss(net, &inputs, rows, false, &row_loss),
                &cfg.train,
            )?;
            Ok(EsModel {
                alpha: a,
                method,
                trunc,
                var_model,
                input,
                alpha_feature: None,
                increment_transform: transform,
                increment_net: net,
            })
        }
        EsMethod::FrozenLr => {
            let vm = match var {
                VarCandidate::Model(m) if m.net.n_hidden() >= 1 => m,
                _ => {
                    return Err(Error::Usage(
                        "frozen-feature ES needs a VaR network with at least one hidden layer"
                            .into(),
                    ))
                }
            };
            let m = vm.net.layer_specs()[vm.net.n_hidden()].in_dim + 1;
            let n = data.len();
            let rows: Vec<usize> = (0..n).collect();
            let feats: Vec<Result<Vec<f64>>> = rows
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut buf = Vec::new();
                    let mut cache = vm.net.new_cache();
                    let mut out = Vec::with_capacity(chunk.len() * m);
                    for &i in chunk {
                        vm.net_input(data.row(i), a, &mut buf)?;
                        out.extend(vm.net.hidden_features(&buf, &mut cache)?);
                        out.push(1.0);
                    }
                    Ok(out)
                })
                .collect();
            let mut phi = Vec::with_capacity(n * m);
            for f in feats {
                phi.extend(f?);
            }
            let w = linear_least_squares(&phi, n, m, &targets, 1e-10 * n as f64)?;
            let increment_net = vm
                .net
                .with_output_layer(1, w[..m - 1].to_vec(), vec![w[m - 1]])?;
            Ok(EsModel {
                alpha: a,
                method,
                trunc,
                var_model,
                input: vm.input.clone(),
                alpha_feature: matches!(vm.mode, AlphaMode::Continuum { .. }).then_some(a),
                increment_transform: OutputTransform::Identity,
                increment_net,
            })
        }
        EsMethod::Joint => Err(Error::Usage(
            "joint ES models come from fit_joint, not the two-step fit".into(),
        )),
    }
}

/// Joint VaR/ES regression with one 2-output network `(v, g)`, `z = v + g`,
/// trained on the joint score in standardized response units.
pub fn fit_joint(
    data: &Dataset,
    alpha: AlphaLevel,
    spec: JointLossSpec,
    cfg: &FitConfig,
) -> Result<(VarModel, EsModel)> {
    check_nonempty(data)?;
    let d = data.dim();
    let input = Scaler::fit(data.x(), d);
    let inputs = input.apply_rows(data.x());
    let (shift, scale) = mean_std(data.y());
    let y: Vec<f64> = data.y().iter().map(|&v| (v - shift) / scale).collect();
    let mut net = init_net(d, 2, cfg, None)?;
    let row_loss = |i: usize, out: &[f64], _: &[f64], d_out: &mut [f64], _: &mut [f64]| {
        let (l, dv, dz) = joint_loss(y[i], out[0], out[0] + out[1], alpha, spec);
        d_out[0] = dv + dz;
        d_out[1] = dz;
        l
    };
    train(
        &mut net,
        data.len(),
        |net, rows| batch_loss(net, &inputs, rows, false, &row_loss),
        &cfg.train,
    )?;
    let var = VarModel {
        mode: AlphaMode::SingleAlpha { alpha: alpha.get() },
        input: input.clone(),
        transform: OutputTransform::Affine { shift, scale },
        net: net.select_outputs(&[0])?,
    };
    let es = EsModel {
        alpha: alpha.get(),
        method: EsMethod::Joint,
        trunc: TruncationBound::NONE,
        var_model: Some(var.clone()),
        input,
        alpha_feature: None,
        increment_transform: OutputTransform::Affine { shift: 0.0, scale },
        increment_net: net.select_outputs(&[1])?,
    };
    Ok((var, es))
}

/// Mean pinball loss of `model` at `alpha` over `data` (original units).
pub fn mean_pinball(model: &VarModel, data: &Dataset, alpha: AlphaLevel) -> Result<f64> {
    let q = model.predict_rows(data.x(), alpha.get())?;
    Ok(data
        .y()
        .iter()
        .zip(&q)
        .map(|(&y, &q)| pinball_loss(y, q, alpha).0)
        .sum::<f64>()
        / data.len().max(1) as f64)
}
