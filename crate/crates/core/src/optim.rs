//! Adam, the minibatch training loop, and a normal-equations least-squares solver.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 1024,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Input("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Input("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Input(
                "learning_rate must be finite and nonnegative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Input("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Input("eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, state of {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Mean loss of a minibatch and the gradient of that mean.
pub struct BatchLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Runs `epochs × ⌈n/batch_size⌉` Adam steps; returns the per-epoch mean loss.
///
/// `loss_fn(net, rows)` evaluates the mean loss over the dataset rows `rows`.
/// Rows are reshuffled every epoch from the shuffle stream of `cfg.seed`.
pub fn train<F>(net: &mut Network, n: usize, mut loss_fn: F, cfg: &TrainConfig) -> Result<Vec<f64>>
where
    F: FnMut(&Network, &[usize]) -> Result<BatchLoss>,
{
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    let mut rng = stream(cfg.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = AdamState::new(net.n_params());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for rows in order.chunks(cfg.batch_size) {
            let BatchLoss { loss, grad } = loss_fn(net, rows)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    step,
                    message: format!("non-finite loss or gradient (loss = {loss})"),
                });
            }
            adam_step(net.params_mut(), &grad, &mut state, cfg)?;
            total += loss * rows.len() as f64;
            step += 1;
        }
        history.push(total / n as f64);
    }
    Ok(history)
}

/// Solves `min_w ‖Φw − t‖² + ridge·‖w‖²` through the normal equations.
///
/// `features` is row-major `n × m`.
pub fn linear_least_squares(
    features: &[f64],
    n: usize,
    m: usize,
    targets: &[f64],
    ridge: f64,
) -> Result<Vec<f64>> {
    if n == 0 || m == 0 {
        return Err(Error::Input("least squares needs n ≥ 1 and m ≥ 1".into()));
    }
    if features.len() != n * m || targets.len() != n {
        return Err(Error::Shape(format!(
            "least squares: {} features for {n}×{m}, {} targets",
            features.len(),
            targets.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Input("ridge must be nonnegative".into()));
    }
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (row, &t) in features.chunks_exact(m).zip(targets) {
        for i in 0..m {
            rhs[i] += row[i] * t;
            for j in 0..=i {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
        gram[(i, i)] += ridge;
    }
    let scale = (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let singular = || {
        Error::Solver(format!(
            "normal equations are singular with ridge = {ridge}; use ridge > 0"
        ))
    };
    let chol = gram.cholesky().ok_or_else(singular)?;
    // Cholesky can succeed on numerically rank-deficient systems; reject tiny pivots.
    let l = chol.l_dirty();
    let min_pivot = (0..m)
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if ridge == 0.0 && !(min_pivot > scale * 1e-13) {
        return Err(singular());
    }
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(w.iter().copied().collect())
}
