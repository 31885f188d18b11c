//! Dynamic initial margin on a one-factor Vasicek economy.
//!
//! The portfolio holds fixed-vs-float swaps that all start at time 0 with
//! annual coupons and resets on integer years. The float coupon paid at year
//! `j` is fixed at `j − 1` from the simple rate of the zero bond `P(j−1, j)`,
//! so the state `(r_t, t, r_fix)` (with `r_fix` the short rate at the last
//! reset) is Markov and prices every swap in closed form.
//!
//! `MtM_t` is the portfolio value plus undiscounted cumulated cash flows. A
//! coupon paid on a grid date belongs to the cash at that date, and the swap
//! values are ex-coupon.

use std::io::{Read, Write};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::AlphaLevel;
use crate::nn::InterpGrid;
use crate::oracles::normal::norm_ppf;
use crate::rng::{indexed, splitmix64, stream, Rng, Stream};
use crate::trainers::{
    fit_var_multi_continuum_warm, fit_var_multi_interp_warm, fit_var_single_warm, FitConfig,
    Fitted, VarModel,
};
use crate::validation::{nested_var_sa, NestedMcConfig};

/// Features per state row: `r_t`, `t`, `r_fix`.
pub const STATE_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub kappa: f64,
    pub theta: f64,
    pub sigma_r: f64,
    pub r0: f64,
    pub n_swaps: usize,
    pub horizon_years: f64,
    /// Grid intervals over the horizon; must give a whole number per year.
    pub steps: usize,
    /// Margin period of risk in years, a whole number of grid steps.
    pub delta: f64,
    /// Seed of the portfolio draw.
    pub seed: u64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            kappa: 0.1,
            theta: 0.03,
            sigma_r: 0.02,
            r0: 0.02,
            n_swaps: 20,
            horizon_years: 10.0,
            steps: 40,
            delta: 0.25,
            seed: 0,
        }
    }
}

impl MarketConfig {
    pub fn dt(&self) -> f64 {
        self.horizon_years / self.steps as f64
    }

    /// Grid steps per year, when that is a whole number.
    fn steps_per_year(&self) -> Result<usize> {
        let spy = self.steps as f64 / self.horizon_years;
        let r = spy.round();
        if r < 1.0 || (spy - r).abs() > 1e-9 * spy {
            return Err(Error::Input(format!(
                "{} steps over {} years does not put coupon dates on the grid",
                self.steps, self.horizon_years
            )));
        }
        Ok(r as usize)
    }

    /// `δ` as a number of grid steps.
    pub fn delta_steps(&self) -> Result<usize> {
        let m = self.delta / self.dt();
        let r = m.round();
        if !(self.delta > 0.0) || r < 1.0 || (m - r).abs() > 1e-9 * m {
            return Err(Error::Input(format!(
                "delta {} is not a positive multiple of the grid step {}",
                self.delta,
                self.dt()
            )));
        }
        if r as usize > self.steps {
            return Err(Error::Input(format!(
                "delta {} reaches beyond the {}-year grid",
                self.delta, self.horizon_years
            )));
        }
        Ok(r as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::Input("kappa must be positive".into()));
        }
        if !(self.sigma_r >= 0.0) {
            return Err(Error::Input("sigma_r must be nonnegative".into()));
        }
        if !(self.theta.is_finite() && self.r0.is_finite()) {
            return Err(Error::Input("theta and r0 must be finite".into()));
        }
        if self.steps < 2 {
            return Err(Error::Input("steps must be at least 2".into()));
        }
        if !(self.horizon_years >= 1.0) {
            return Err(Error::Input("horizon must be at least one year".into()));
        }
        self.steps_per_year()?;
        self.delta_steps()?;
        Ok(())
    }
}

/// One fixed-vs-float swap with annual coupons on years `1..=maturity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Swap {
    pub notional: f64,
    /// `+1` receives float and pays fixed, `−1` the reverse.
    pub direction: f64,
    pub fixed_rate: f64,
    pub maturity: usize,
}

/// Market model plus the portfolio drawn from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub cfg: MarketConfig,
    swaps: Vec<Swap>,
    spy: usize,
    delta_steps: usize,
    /// Per whole year `y`: float notional of live swaps and fixed-leg
    /// coefficients on the bonds maturing at `y + 1, …`.
    legs: Vec<(f64, Vec<f64>)>,
}

/// State at one grid date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub r: f64,
    /// Short rate at the last reset date.
    pub r_fix: f64,
}

impl Market {
    /// Draws the portfolio: maturities uniform on whole years in `[1, 10]`
    /// (capped by the horizon), notionals uniform on `[0.5, 1.5]`, all paying
    /// fixed, and fixed rate equal to the inception par rate plus a
    /// `N(0, 0.5%²)` spread.
    pub fn new(cfg: MarketConfig) -> Result<Self> {
        cfg.validate()?;
        let spy = cfg.steps_per_year()?;
        let delta_steps = cfg.delta_steps()?;
        let mut rng = stream(cfg.seed, Stream::Spec);
        let max_mat = (cfg.horizon_years.floor() as usize).clamp(1, 10);
        let mut m = Self {
            cfg,
            swaps: Vec::new(),
            spy,
            delta_steps,
            legs: Vec::new(),
        };
        for _ in 0..m.cfg.n_swaps {
            let maturity = rng.random_range(1..=max_mat);
            let notional = rng.random_range(0.5..1.5);
            let spread: f64 = StandardNormal.sample(&mut rng);
            let fixed_rate = m.par_rate(maturity) + 0.005 * spread;
            m.swaps.push(Swap {
                notional,
                direction: 1.0,
                fixed_rate,
                maturity,
            });
        }
        m.build_legs();
        Ok(m)
    }

    fn build_legs(&mut self) {
        let max_mat = self.max_maturity();
        self.legs = (0..max_mat)
            .map(|y| {
                let live = || self.swaps.iter().filter(move |w| w.maturity > y);
                let float: f64 = live().map(|w| w.direction * w.notional).sum();
                let coefs = (y + 1..=max_mat)
                    .map(|j| {
                        live()
                            .filter(|w| w.maturity >= j)
                            .map(|w| {
                                let last = if w.maturity == j { 1.0 } else { 0.0 };
                                -w.direction * w.notional * (w.fixed_rate + last)
                            })
                            .sum()
                    })
                    .collect();
                (float, coefs)
            })
            .collect();
    }

    pub fn swaps(&self) -> &[Swap] {
        &self.swaps
    }

    fn max_maturity(&self) -> usize {
        self.swaps.iter().map(|w| w.maturity).max().unwrap_or(0)
    }

    /// Market with an explicit portfolio.
    pub fn with_swaps(cfg: MarketConfig, swaps: Vec<Swap>) -> Result<Self> {
        let mut m = Self::new(MarketConfig { n_swaps: 0, ..cfg })?;
        m.cfg.n_swaps = swaps.len();
        m.swaps = swaps;
        m.build_legs();
        Ok(m)
    }

    pub fn steps(&self) -> usize {
        self.cfg.steps
    }

    pub fn delta_steps(&self) -> usize {
        self.delta_steps
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.spy as f64
    }

    /// Zero-coupon bond `P(t, t+τ)` at short rate `r`.
    pub fn zcb(&self, tau: f64, r: f64) -> f64 {
        let MarketConfig {
            kappa: k,
            theta,
            sigma_r: s,
            ..
        } = self.cfg;
        let b = (1.0 - (-k * tau).exp()) / k;
        let ln_a = (theta - s * s / (2.0 * k * k)) * (b - tau) - s * s * b * b / (4.0 * k);
        (ln_a - b * r).exp()
    }

    /// Rate making a swap of maturity `m` worth zero at time 0.
    pub fn par_rate(&self, maturity: usize) -> f64 {
        let r0 = self.cfg.r0;
        let annuity: f64 = (1..=maturity).map(|j| self.zcb(j as f64, r0)).sum();
        (1.0 - self.zcb(maturity as f64, r0)) / annuity
    }

    /// Conditional mean and standard deviation of `r` after `m` grid steps.
    pub fn rate_transition(&self, r: f64, m: usize) -> (f64, f64) {
        let h = m as f64 * self.cfg.dt();
        let k = self.cfg.kappa;
        let e = (-k * h).exp();
        let mean = r * e + self.cfg.theta * (1.0 - e);
        let sd = self.cfg.sigma_r * ((1.0 - e * e) / (2.0 * k)).sqrt();
        (mean, sd)
    }

    /// Ex-coupon portfolio value at grid step `k`.
    pub fn value(&self, k: usize, s: State) -> f64 {
        let year = k / self.spy;
        let Some((float, coefs)) = self.legs.get(year) else {
            return 0.0;
        };
        let t = self.time(k);
        let mut v = 0.0;
        for (i, c) in coefs.iter().enumerate() {
            v += c * self.zcb((year + 1 + i) as f64 - t, s.r);
        }
        v + float * self.zcb((year + 1) as f64 - t, s.r) / self.zcb(1.0, s.r_fix)
    }

    /// [`Market::value`] priced swap by swap.
    pub fn value_by_swap(&self, k: usize, s: State) -> f64 {
        let t = self.time(k);
        let year = k / self.spy;
        let fix_growth = 1.0 / self.zcb(1.0, s.r_fix);
        let p = |j: usize| self.zcb(j as f64 - t, s.r);
        self.swaps
            .iter()
            .filter(|w| w.maturity > year)
            .map(|w| {
                let annuity: f64 = (year + 1..=w.maturity).map(p).sum();
                let float = fix_growth * p(year + 1) - p(w.maturity);
                w.direction * w.notional * (float - w.fixed_rate * annuity)
            })
            .sum()
    }

    /// Net cash flow paid on coupon year `j`, with `r_fix` the rate at `j − 1`.
    pub fn coupon_cash(&self, j: usize, r_fix: f64) -> f64 {
        let float_rate = 1.0 / self.zcb(1.0, r_fix) - 1.0;
        self.swaps
            .iter()
            .filter(|w| w.maturity >= j)
            .map(|w| w.direction * w.notional * (float_rate - w.fixed_rate))
            .sum()
    }

    fn initial_state(&self) -> State {
        State {
            r: self.cfg.r0,
            r_fix: self.cfg.r0,
        }
    }

    /// Moves from step `k` to `k + 1` with standard normal shock `z`; returns
    /// the new state and the cash paid on arrival.
    pub fn step(&self, k: usize, s: State, z: f64) -> (State, f64) {
        let (mean, sd) = self.rate_transition(s.r, 1);
        let r = mean + sd * z;
        let k1 = k + 1;
        if k1.is_multiple_of(self.spy) {
            let cash = self.coupon_cash(k1 / self.spy, s.r_fix);
            (State { r, r_fix: r }, cash)
        } else {
            (State { r, r_fix: s.r_fix }, 0.0)
        }
    }

    /// `MtM_{k+m} − MtM_k` along one freshly simulated window.
    pub fn increment<R: rand::Rng + ?Sized>(
        &self,
        k: usize,
        s: State,
        m: usize,
        rng: &mut R,
    ) -> f64 {
        let v0 = self.value(k, s);
        let mut cur = s;
        let mut cash = 0.0;
        for i in 0..m {
            let z: f64 = StandardNormal.sample(rng);
            let (next, c) = self.step(k + i, cur, z);
            cur = next;
            cash += c;
        }
        self.value(k + m, cur) + cash - v0
    }

    /// Conditional `VaR_α` of the one-step increment from `s` at step `k`,
    /// when the increment is monotone in the next short rate over ±8 standard
    /// deviations; `None` otherwise.
    pub fn exact_one_step_im(&self, k: usize, s: State, alpha: f64) -> Result<Option<f64>> {
        if k + 1 > self.cfg.steps {
            return Err(Error::Input(format!("step {k} has no next grid date")));
        }
        let z = norm_ppf(alpha)?;
        let v0 = self.value(k, s);
        let reset = (k + 1).is_multiple_of(self.spy);
        let cash = if reset {
            self.coupon_cash((k + 1) / self.spy, s.r_fix)
        } else {
            0.0
        };
        let inc = |r: f64| {
            let next = State {
                r,
                r_fix: if reset { r } else { s.r_fix },
            };
            self.value(k + 1, next) + cash - v0
        };
        let (mean, sd) = self.rate_transition(s.r, 1);
        if sd == 0.0 {
            return Ok(Some(inc(mean)));
        }
        let vals: Vec<f64> = (0..=160)
            .map(|i| inc(mean + sd * (i as f64 / 10.0 - 8.0)))
            .collect();
        let up = vals.windows(2).all(|w| w[1] > w[0]);
        let down = vals.windows(2).all(|w| w[1] < w[0]);
        Ok(if up {
            Some(inc(mean + sd * z))
        } else if down {
            Some(inc(mean - sd * z))
        } else {
            None
        })
    }

    /// Feature row of a state at step `k`.
    pub fn features(&self, k: usize, s: State) -> [f64; STATE_DIM] {
        [s.r, self.time(k), s.r_fix]
    }

    /// Steps `k` whose margin window `(t_k, t_k + δ]` contains a coupon date on
    /// which some swap still pays, and whose next step also has a label.
    pub fn coupon_window_steps(&self) -> Vec<usize> {
        let m = self.delta_steps;
        let last = self.cfg.steps - m;
        (0..last)
            .filter(|&k| {
                (k + 1..=k + m).any(|j| {
                    j % self.spy == 0 && self.swaps.iter().any(|w| w.maturity >= j / self.spy)
                })
            })
            .collect()
    }
}

/// Simulated outer paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub state_dim: usize,
    /// `n_paths × times.len() × state_dim`.
    pub states: Vec<f64>,
    /// `n_paths × times.len()`.
    pub mtm: Vec<f64>,
}

const PATHSET_MAGIC: &[u8; 8] = b"RQPATHS1";

impl PathSet {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let o = (path * self.n_times() + k) * self.state_dim;
        &self.states[o..o + self.state_dim]
    }

    pub fn mtm(&self, path: usize, k: usize) -> f64 {
        self.mtm[path * self.n_times() + k]
    }

    /// Little-endian columnar dump: magic, `n_paths`, `n_times`, `state_dim` as
    /// u64, then times, states and mtm as f64.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(PATHSET_MAGIC)?;
        for v in [self.n_paths, self.n_times(), self.state_dim] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in self.times.iter().chain(&self.states).chain(&self.mtm) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut inp: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        inp.read_exact(&mut magic)?;
        if &magic != PATHSET_MAGIC {
            return Err(Error::Input("not a path-set file".into()));
        }
        let mut word = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            inp.read_exact(&mut word)?;
            *d = u64::from_le_bytes(word) as usize;
        }
        let [n_paths, n_times, state_dim] = dims;
        let mut read_vec = |len: usize| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                inp.read_exact(&mut word)?;
                v.push(f64::from_le_bytes(word));
            }
            Ok(v)
        };
        let times = read_vec(n_times)?;
        let states = read_vec(n_paths * n_times * state_dim)?;
        let mtm = read_vec(n_paths * n_times)?;
        Ok(Self {
            times,
            n_paths,
            state_dim,
            states,
            mtm,
        })
    }

    /// One line per `(path, step)`: `path,step,t,r,r_fix,mtm`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "path,step,t,r,r_fix,mtm")?;
        for p in 0..self.n_paths {
            for k in 0..self.n_times() {
                let s = self.state(p, k);
                writeln!(
                    out,
                    "{p},{k},{},{},{},{}",
                    self.times[k],
                    s[0],
                    s[2],
                    self.mtm(p, k)
                )?;
            }
        }
        Ok(())
    }
}

/// Simulates `n_paths` paths over steps `0..=until`. Path `i` uses its own
/// counter-based stream under `seed`.
fn simulate_until(market: &Market, n_paths: usize, seed: u64, until: usize) -> PathSet {
    let nt = until + 1;
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = indexed(seed, Stream::Outer, p as u64);
            let mut states = Vec::with_capacity(nt * STATE_DIM);
            let mut mtm = Vec::with_capacity(nt);
            let mut s = market.initial_state();
            let mut cash = 0.0;
            for k in 0..nt {
                if k > 0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let (next, c) = market.step(k - 1, s, z);
                    s = next;
                    cash += c;
                }
                states.extend_from_slice(&market.features(k, s));
                mtm.push(market.value(k, s) + cash);
            }
            (states, mtm)
        })
        .collect();
    let mut states = Vec::with_capacity(n_paths * nt * STATE_DIM);
    let mut mtm = Vec::with_capacity(n_paths * nt);
    for (s, m) in per_path {
        states.extend(s);
        mtm.extend(m);
    }
    PathSet {
        times: (0..nt).map(|k| market.time(k)).collect(),
        n_paths,
        state_dim: STATE_DIM,
        states,
        mtm,
    }
}

/// Exact-transition simulation of `n_paths` outer paths over the whole grid.
pub fn simulate_paths(market: &Market, n_paths: usize, seed: u64) -> Result<PathSet> {
    if n_paths == 0 {
        return Err(Error::Input("n_paths must be positive".into()));
    }
    Ok(simulate_until(market, n_paths, seed, market.steps()))
}

/// Training rows of one grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct ImStep {
    pub k: usize,
    pub t: f64,
    /// Features `(r_t, t, r_fix)` and responses `MtM_{t+δ} − MtM_t`.
    pub data: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImLabelSet {
    pub delta_steps: usize,
    pub steps: Vec<ImStep>,
}

/// Path-wise IM labels for every step whose window ends on the grid.
pub fn im_labels(paths: &PathSet, delta_steps: usize) -> Result<ImLabelSet> {
    let nt = paths.n_times();
    if delta_steps == 0 || delta_steps >= nt {
        return Err(Error::Input(format!(
            "margin period of {delta_steps} steps does not fit a grid of {nt} dates"
        )));
    }
    let steps = (0..nt - delta_steps)
        .map(|k| {
            let mut x = Vec::with_capacity(paths.n_paths * paths.state_dim);
            let mut y = Vec::with_capacity(paths.n_paths);
            for p in 0..paths.n_paths {
                x.extend_from_slice(paths.state(p, k));
                y.push(paths.mtm(p, k + delta_steps) - paths.mtm(p, k));
            }
            if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "non-finite IM label {bad} at step {k}"
                )));
            }
            Ok(ImStep {
                k,
                t: paths.times[k],
                data: Dataset::new(paths.state_dim, x, y)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImLabelSet { delta_steps, steps })
}

/// How each step's VaR model is learned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum ImMethod {
    Single {
        alpha: f64,
    },
    Continuum {
        alpha_low: f64,
        alpha_high: f64,
        lambda: f64,
    },
    Interp {
        grid: InterpGrid,
    },
}

/// Trains one model per step from the last step backward. With `warm_start`,
/// step `k` starts from the weights trained at step `k + 1`. Models come back
/// in forward time order.
pub fn learn_im_backward(
    labels: &ImLabelSet,
    method: &ImMethod,
    cfg: &FitConfig,
    warm_start: bool,
) -> Result<Vec<Fitted<VarModel>>> {
    if labels.steps.is_empty() {
        return Err(Error::Input("no label steps".into()));
    }
    if let Some(s) = labels.steps.iter().find(|s| s.data.is_empty()) {
        return Err(Error::Input(format!("step {} has no rows", s.k)));
    }
    let mut out: Vec<Fitted<VarModel>> = Vec::with_capacity(labels.steps.len());
    for step in labels.steps.iter().rev() {
        let mut c = cfg.clone();
        c.train.seed = splitmix64(cfg.train.seed ^ step.k as u64);
        let warm = if warm_start {
            out.last().map(|f| &f.model.net)
        } else {
            None
        };
        let fitted = match method {
            ImMethod::Single { alpha } => {
                fit_var_single_warm(&step.data, AlphaLevel::new(*alpha)?, &c, warm)?
            }
            ImMethod::Continuum {
                alpha_low,
                alpha_high,
                lambda,
            } => fit_var_multi_continuum_warm(
                &step.data,
                (*alpha_low, *alpha_high),
                *lambda,
                &c,
                warm,
            )?,
            ImMethod::Interp { grid } => fit_var_multi_interp_warm(&step.data, grid, &c, warm)?,
        };
        out.push(fitted);
    }
    out.reverse();
    Ok(out)
}

/// Nested benchmark at one grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct ImBenchmark {
    pub k: usize,
    /// Outer node feature rows, `n_outer × STATE_DIM`.
    pub features: Vec<f64>,
    pub im: Vec<f64>,
}

/// Draws `n_outer` states at step `k` from `outer_seed` and estimates
/// `VaR_α(MtM_{t+δ} − MtM_t | X_t)` per node by stochastic approximation on
/// fresh window resimulations.
pub fn benchmark_im_nested(
    market: &Market,
    n_outer: usize,
    outer_seed: u64,
    nested: &NestedMcConfig,
    k: usize,
) -> Result<ImBenchmark> {
    let m = market.delta_steps();
    if k + m > market.steps() {
        return Err(Error::Input(format!(
            "step {k} plus a {m}-step window is past the grid"
        )));
    }
    if n_outer == 0 {
        return Err(Error::Input("n_outer must be positive".into()));
    }
    let paths = simulate_until(market, n_outer, outer_seed, k);
    let nodes: Vec<State> = (0..n_outer)
        .map(|p| {
            let s = paths.state(p, k);
            State {
                r: s[0],
                r_fix: s[2],
            }
        })
        .collect();
    let sampler = |node: usize, rng: &mut Rng, out: &mut [f64]| {
        for v in out.iter_mut() {
            *v = market.increment(k, nodes[node], m, rng);
        }
    };
    let im = nested_var_sa(&sampler, n_outer, nested)?;
    let features = nodes.iter().flat_map(|&s| market.features(k, s)).collect();
    Ok(ImBenchmark { k, features, im })
}

/// Of the coupon-window steps `k`, how many have `means[k + 1] < means[k]`;
/// `means` is indexed by step. Returns `(drops, total)`.
pub fn sawtooth_count(market: &Market, means: &[f64]) -> (usize, usize) {
    let ks: Vec<usize> = market
        .coupon_window_steps()
        .into_iter()
        .filter(|&k| k + 1 < means.len())
        .collect();
    let drops = ks.iter().filter(|&&k| means[k + 1] < means[k]).count();
    (drops, ks.len())
}
