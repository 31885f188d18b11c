//! Error estimation without ground truth, plain metrics, and the nested
//! Monte Carlo VaR benchmark.
//!
//! The twin estimators use two responses drawn conditionally independently on
//! the same feature row: products of indicators or positive parts of the two
//! copies estimate squared conditional expectations without inner simulation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::AlphaLevel;
use crate::oracles::normal::norm_ppf;
use crate::rng::{indexed, Rng, Stream};
use crate::trainers::VarModel;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Square-root estimate of a mean whose population value is a squared distance.
///
/// `point = √max(m, 0)`; the interval maps the normal interval `m ± 1.96·se`
/// through the same monotone map, so it stays valid when `m` is near 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqrtEstimate {
    pub point: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub ci_halfwidth: f64,
    /// Unclamped sample mean of the per-row terms.
    pub inner: f64,
    pub inner_se: f64,
    pub n_used: usize,
}

impl SqrtEstimate {
    fn from_terms(terms: &[f64]) -> Self {
        let n = terms.len() as f64;
        let mean = terms.iter().sum::<f64>() / n;
        let var = if terms.len() > 1 {
            terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let se = (var / n).sqrt();
        let root = |v: f64| v.max(0.0).sqrt();
        let (lo, hi) = (root(mean - Z95 * se), root(mean + Z95 * se));
        Self {
            point: root(mean),
            ci_lo: lo,
            ci_hi: hi,
            ci_halfwidth: 0.5 * (hi - lo),
            inner: mean,
            inner_se: se,
            n_used: terms.len(),
        }
    }

    /// Whether `v` lies in `[ci_lo, ci_hi]`.
    pub fn covers(&self, v: f64) -> bool {
        v >= self.ci_lo && v <= self.ci_hi
    }
}

pub type PValueErrorEstimate = SqrtEstimate;

fn twins(data: &Dataset) -> Result<(&[f64], &[f64])> {
    let y2 = data
        .y_twin()
        .ok_or_else(|| Error::Input("twin responses are required".into()))?;
    Ok((data.y(), y2))
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!(
            "{what}: {a} predictions for {b} rows"
        )));
    }
    if a == 0 {
        return Err(Error::Input(format!("{what}: no rows")));
    }
    Ok(())
}

/// L² distance in p-values, `‖P[Y ≥ q̂(X) | X] − (1−α)‖`, from twin samples.
///
/// Per row: `(1−α)(1−α−2Aᵢ) + Bᵢ` with `Aᵢ` the average of the two exceedance
/// indicators and `Bᵢ = 1{min(Y⁽¹⁾, Y⁽²⁾) > q̂}`.
pub fn pvalue_error_estimate(
    q_hat: &[f64],
    data: &Dataset,
    alpha: AlphaLevel,
) -> Result<PValueErrorEstimate> {
    let (y1, y2) = twins(data)?;
    check_len(q_hat.len(), y1.len(), "pvalue_error_estimate")?;
    let t = 1.0 - alpha.get();
    let terms: Vec<f64> = (0..y1.len())
        .map(|i| {
            let q = q_hat[i];
            let a = 0.5 * (f64::from(u8::from(y1[i] > q)) + f64::from(u8::from(y2[i] > q)));
            let b = f64::from(u8::from(y1[i].min(y2[i]) > q));
            t * (t - 2.0 * a) + b
        })
        .collect();
    Ok(SqrtEstimate::from_terms(&terms))
}

/// ES error proxy `‖ŝ − q̂ − E[(1−α)⁻¹(Y − q̂)⁺ | X]‖` from twin samples.
pub fn es_error_proxy(
    q_hat: &[f64],
    s_hat: &[f64],
    data: &Dataset,
    alpha: AlphaLevel,
) -> Result<SqrtEstimate> {
    let (y1, y2) = twins(data)?;
    check_len(q_hat.len(), y1.len(), "es_error_proxy")?;
    check_len(s_hat.len(), y1.len(), "es_error_proxy")?;
    let k = alpha.tail_factor();
    let terms: Vec<f64> = (0..y1.len())
        .map(|i| {
            let inc = s_hat[i] - q_hat[i];
            let p1 = (y1[i] - q_hat[i]).max(0.0);
            let p2 = (y2[i] - q_hat[i]).max(0.0);
            inc * inc + k * k * p1 * p2 - k * inc * (p1 + p2)
        })
        .collect();
    Ok(SqrtEstimate::from_terms(&terms))
}

/// Population standard deviation (divisor `n`).
fn pop_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// `√mean((pred − truth)²) / std(truth)`.
pub fn normalized_rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || truth.len() < 2 {
        return Err(Error::Shape(format!(
            "normalized_rmse needs equal lengths ≥ 2, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let sd = pop_std(truth);
    if !(sd > 0.0) {
        return Err(Error::Metric("truth has zero variance".into()));
    }
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(mse.sqrt() / sd)
}

/// Fraction of rows with `q̂_{α_hi}(x) < q̂_{α_lo}(x)` for each pair.
pub fn crossing_rate(model: &VarModel, xs: &[f64], pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(hi, lo)| {
            if !(hi > lo) {
                return Err(Error::Input(format!(
                    "crossing pair ({hi}, {lo}) must have hi > lo"
                )));
            }
            let a = model.predict_rows(xs, hi)?;
            let b = model.predict_rows(xs, lo)?;
            Ok(crossing_rate_values(&a, &b))
        })
        .collect()
}

/// Fraction of positions where `hi[i] < lo[i]`.
pub fn crossing_rate_values(hi: &[f64], lo: &[f64]) -> f64 {
    let n = hi.len().min(lo.len());
    if n == 0 {
        return 0.0;
    }
    hi.iter().zip(lo).filter(|(h, l)| h < l).count() as f64 / n as f64
}

/// `∫₀¹ |F_a⁻¹(u) − F_b⁻¹(u)| du` for the empirical laws of `a` and `b`.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("wasserstein_1d needs nonempty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    // walk the merged breakpoints i/na and j/nb
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < na && j < nb {
        let next_a = (i + 1) as f64 / na as f64;
        let next_b = (j + 1) as f64 / nb as f64;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        // compare integer cross-products to avoid rounding at shared breakpoints
        let (ka, kb) = ((i + 1) * nb, (j + 1) * na);
        if ka <= kb {
            i += 1;
        }
        if kb <= ka {
            j += 1;
        }
    }
    Ok(total)
}

/// Least-squares line through `(log n, log rmse)`; returns `(slope, intercept)`.
pub fn convergence_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Input(
            "convergence_slope needs at least 2 points".into(),
        ));
    }
    if points.iter().any(|&(n, r)| !(n > 0.0 && r > 0.0)) {
        return Err(Error::Input(
            "convergence_slope needs positive n and rmse".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input(
            "convergence_slope needs at least two distinct n".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Conditional sampler for the nested benchmark: fills `out` with i.i.d.
/// draws of the response at outer node `node`.
pub trait InnerSampler: Sync {
    fn sample(&self, node: usize, rng: &mut Rng, out: &mut [f64]);
}

impl<F: Fn(usize, &mut Rng, &mut [f64]) + Sync> InnerSampler for F {
    fn sample(&self, node: usize, rng: &mut Rng, out: &mut [f64]) {
        self(node, rng, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaOptimizer {
    PlainSa,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSchedule {
    Constant,
    /// `γ / √(k + 1)` at iteration `k`.
    InvSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaInit {
    /// `mean + std·Φ⁻¹(α)` of the first inner batch.
    GaussianMoment,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NestedMcConfig {
    pub n_inner: usize,
    pub iterations: usize,
    /// Step scale, multiplied per node by the first batch's standard deviation.
    pub gamma: f64,
    pub alpha: f64,
    pub optimizer: SaOptimizer,
    pub schedule: GammaSchedule,
    pub init: SaInit,
    pub seed: u64,
}

impl Default for NestedMcConfig {
    fn default() -> Self {
        Self {
            n_inner: 1024,
            iterations: 256,
            gamma: 1.0,
            alpha: 0.95,
            optimizer: SaOptimizer::PlainSa,
            schedule: GammaSchedule::Constant,
            init: SaInit::GaussianMoment,
            seed: 0,
        }
    }
}

impl NestedMcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_inner == 0 {
            return Err(Error::Input("n_inner must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Input("iterations must be positive".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Input("gamma must be positive".into()));
        }
        AlphaLevel::new(self.alpha)?;
        Ok(())
    }
}

/// Robbins–Monro quantile search at one node.
fn sa_node<S: InnerSampler + ?Sized>(
    sampler: &S,
    node: usize,
    cfg: &NestedMcConfig,
) -> Result<f64> {
    let mut rng = indexed(cfg.seed, Stream::Inner, node as u64);
    let mut batch = vec![0.0; cfg.n_inner];
    sampler.sample(node, &mut rng, &mut batch);
    let n = batch.len() as f64;
    let mean = batch.iter().sum::<f64>() / n;
    let sd = (batch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    // a constant first batch gives no scale; fall back to a relative one
    let gamma = cfg.gamma
        * if sd > 0.0 {
            sd
        } else {
            1e-9 * mean.abs().max(1.0)
        };
    let mut v = match cfg.init {
        SaInit::GaussianMoment => mean + sd * norm_ppf(cfg.alpha)?,
        SaInit::Zero => 0.0,
    };
    let target = 1.0 - cfg.alpha;
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in 0..cfg.iterations {
        if k > 0 {
            sampler.sample(node, &mut rng, &mut batch);
        }
        let p = batch.iter().filter(|&&y| y >= v).count() as f64 / n;
        let step = match cfg.schedule {
            GammaSchedule::Constant => gamma,
            GammaSchedule::InvSqrt => gamma / ((k + 1) as f64).sqrt(),
        };
        let signal = p - target;
        match cfg.optimizer {
            SaOptimizer::PlainSa => v += step * signal,
            SaOptimizer::Adam => {
                let g = -signal;
                m1 = b1 * m1 + (1.0 - b1) * g;
                m2 = b2 * m2 + (1.0 - b2) * g * g;
                let t = (k + 1) as i32;
                let mh = m1 / (1.0 - b1.powi(t));
                let vh = m2 / (1.0 - b2.powi(t));
                v -= step * mh / (vh.sqrt() + eps);
            }
        }
    }
    Ok(v)
}

/// Per-node VaR by stochastic approximation with fresh inner batches.
/// Node `i` draws from its own counter-based stream, so results do not depend
/// on evaluation order.
pub fn nested_var_sa<S: InnerSampler + ?Sized>(
    sampler: &S,
    n_nodes: usize,
    cfg: &NestedMcConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    (0..n_nodes)
        .into_par_iter()
        .map(|node| sa_node(sampler, node, cfg))
        .collect()
}

/// `√mean((pᵢ − (1−α))²)` for exact exceedance probabilities `pᵢ = P[Y ≥ v̂ᵢ | node i]`.
pub fn pvalue_error_exact(exceed_probs: &[f64], alpha: f64) -> Result<f64> {
    if exceed_probs.is_empty() {
        return Err(Error::Input("no nodes".into()));
    }
    let t = 1.0 - alpha;
    Ok(
        (exceed_probs.iter().map(|p| (p - t).powi(2)).sum::<f64>() / exceed_probs.len() as f64)
            .sqrt(),
    )
}

/// One JSON-lines row of experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub method: String,
    pub alpha: f64,
    pub n: usize,
    /// Feature dimension, when the experiment sweeps it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Evaluation time, for time-indexed experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub seed: u64,
    pub run: usize,
    pub rmse_norm: Option<f64>,
    pub pvalue_err: Option<f64>,
    pub pvalue_err_ci_hi: Option<f64>,
    pub es_proxy: Option<f64>,
    pub crossing: BTreeMap<String, f64>,
    pub wasserstein: Option<f64>,
    /// Left empty in deterministic output; timings go to a separate file.
    pub wall_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl MetricsRecord {
    pub fn new(
        experiment: &str,
        method: &str,
        alpha: f64,
        n: usize,
        seed: u64,
        run: usize,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            method: method.into(),
            alpha,
            n,
            d: None,
            t: None,
            seed,
            run,
            rmse_norm: None,
            pvalue_err: None,
            pvalue_err_ci_hi: None,
            es_proxy: None,
            crossing: BTreeMap::new(),
            wasserstein: None,
            wall_ms: None,
            extra: BTreeMap::new(),
        }
    }
}
