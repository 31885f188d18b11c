//! Feedforward softplus networks.
//!
//! A [`Network`] is a stack of dense layers `z = W a + b`, `a' = σ(z)`, with
//! softplus hidden layers and an affine output layer. All parameters live in
//! one flat vector (layer by layer, weights row-major `out × in`, then biases),
//! which is also the layout of every gradient this module produces.
//!
//! Three differentiation paths are provided:
//!
//! - [`Network::backward`]: reverse mode, `∂(d_out · y)/∂θ` and `∂/∂x`.
//! - [`Network::forward_with_alpha_tangent`]: forward mode along input 0,
//!   fused with the primal pass.
//! - [`Network::backward_with_tangent`]: reverse mode through the fused pass,
//!   needed to train against penalties on `∂y/∂x₀`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Identity,
}

/// Softplus value and derivative, `(log(1 + eˣ), 1/(1 + e⁻ˣ))`.
#[inline]
pub fn softplus_eval(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let value = x.max(0.0) + e.ln_1p();
    let deriv = if x >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    };
    (value, deriv)
}

impl Activation {
    /// Returns `(σ(z), σ'(z), σ''(z))`.
    #[inline]
    fn eval2(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Softplus => {
                let (v, s) = softplus_eval(z);
                (v, s, s * (1.0 - s))
            }
            Activation::Identity => (z, 1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    specs: Vec<LayerSpec>,
    /// Offset of each layer's weight block in `params`.
    offsets: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer pre-activations and activations for one input.
///
/// `acts[0]` is the input; `acts[l + 1]` and `pres[l]` belong to layer `l`.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub pres: Vec<Vec<f64>>,
    pub acts: Vec<Vec<f64>>,
}

/// Forward cache extended with the tangent along input 0.
///
/// `tans[0] = e₀`; `tan_pres[l] = W_l tans[l]` and `tans[l + 1] = tan_pres[l] ⊙ σ'(pres[l])`.
#[derive(Debug, Clone, Default)]
pub struct TangentCache {
    pub fwd: ForwardCache,
    pub tan_pres: Vec<Vec<f64>>,
    pub tans: Vec<Vec<f64>>,
}

impl TangentCache {
    pub fn output(&self) -> &[f64] {
        self.fwd.output()
    }

    pub fn tangent(&self) -> &[f64] {
        self.tans.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    fn matches(&self, net: &Network) -> bool {
        self.acts.len() == net.specs.len() + 1
            && self.pres.len() == net.specs.len()
            && net.specs.iter().enumerate().all(|(l, s)| {
                self.acts[l].len() == s.in_dim
                    && self.pres[l].len() == s.out_dim
                    && self.acts[l + 1].len() == s.out_dim
            })
    }
}

/// Parameter gradient (flat, same layout as [`Network::params`]) and input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Strictly increasing interpolation knots in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct InterpGrid {
    knots: Vec<f64>,
}

impl TryFrom<Vec<f64>> for InterpGrid {
    type Error = Error;
    fn try_from(knots: Vec<f64>) -> Result<Self> {
        InterpGrid::new(knots)
    }
}

impl From<InterpGrid> for Vec<f64> {
    fn from(g: InterpGrid) -> Self {
        g.knots
    }
}

impl InterpGrid {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Input(format!(
                "interpolation grid needs at least 2 knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Input(
                "interpolation knots must lie in (0, 1)".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input(
                "interpolation knots must be strictly increasing".into(),
            ));
        }
        Ok(Self { knots })
    }

    /// `k` knots evenly spaced on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Input(
                "interpolation grid needs at least 2 knots".into(),
            ));
        }
        let step = (hi - lo) / (k - 1) as f64;
        let mut knots: Vec<f64> = (0..k).map(|j| lo + j as f64 * step).collect();
        knots[k - 1] = hi;
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lo(&self) -> f64 {
        self.knots[0]
    }

    pub fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn contains(&self, alpha: f64) -> bool {
        alpha >= self.lo() && alpha <= self.hi()
    }

    /// Coefficients `c` with `interp_head_eval(out, α) = Σ c_j out_j`.
    pub fn coefficients(&self, alpha: f64) -> Result<Vec<f64>> {
        if !self.contains(alpha) {
            return Err(Error::Range(format!(
                "alpha {alpha} outside interpolation range [{}, {}]",
                self.lo(),
                self.hi()
            )));
        }
        let k = self.knots.len();
        let mut c = vec![0.0; k];
        c[0] = 1.0;
        for j in 1..k {
            let lo = self.knots[j - 1];
            if alpha >= lo {
                c[j] = alpha.min(self.knots[j]) - lo;
            }
        }
        Ok(c)
    }
}

/// Piecewise-linear quantile head: `out[0] + Σ_j (min(α, α_{j+1}) − α_j)·out[j]·1{α ≥ α_j}`.
pub fn interp_head_eval(outputs: &[f64], alpha: f64, grid: &InterpGrid) -> Result<f64> {
    if outputs.len() != grid.len() {
        return Err(Error::Shape(format!(
            "interpolation head expects {} outputs, got {}",
            grid.len(),
            outputs.len()
        )));
    }
    let c = grid.coefficients(alpha)?;
    Ok(c.iter().zip(outputs).map(|(c, o)| c * o).sum())
}

impl Network {
    /// Builds a network from layer specs and a flat parameter vector.
    pub fn new(specs: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (l, s) in specs.iter().enumerate() {
            if s.in_dim == 0 || s.out_dim == 0 {
                return Err(Error::Shape(format!("layer {l} has a zero dimension")));
            }
            if l > 0 && specs[l - 1].out_dim != s.in_dim {
                return Err(Error::Shape(format!(
                    "layer {l} expects {} inputs but layer {} emits {}",
                    s.in_dim,
                    l - 1,
                    specs[l - 1].out_dim
                )));
            }
        }
        if specs.last().map(|s| s.activation) != Some(Activation::Identity) {
            return Err(Error::Shape(
                "output layer must be affine (identity)".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(specs.len());
        let mut n = 0;
        for s in &specs {
            offsets.push(n);
            n += s.out_dim * (s.in_dim + 1);
        }
        if params.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input("network parameters must be finite".into()));
        }
        Ok(Self {
            specs,
            offsets,
            params,
        })
    }

    /// Builds a network from explicit `(spec, weights, biases)` triples.
    pub fn from_layers(layers: Vec<(LayerSpec, Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let mut specs = Vec::with_capacity(layers.len());
        let mut params = Vec::new();
        for (l, (spec, w, b)) in layers.into_iter().enumerate() {
            if w.len() != spec.in_dim * spec.out_dim || b.len() != spec.out_dim {
                return Err(Error::Shape(format!(
                    "layer {l}: weight/bias sizes do not match {}x{}",
                    spec.out_dim, spec.in_dim
                )));
            }
            specs.push(spec);
            params.extend(w);
            params.extend(b);
        }
        Self::new(specs, params)
    }

    /// Softplus MLP with Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut specs = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for &h in hidden {
            specs.push(LayerSpec {
                in_dim: prev,
                out_dim: h,
                activation: Activation::Softplus,
            });
            prev = h;
        }
        specs.push(LayerSpec {
            in_dim: prev,
            out_dim: output_dim,
            activation: Activation::Identity,
        });
        if specs.iter().any(|s| s.in_dim == 0 || s.out_dim == 0) {
            return Err(Error::Shape("layer dimensions must be positive".into()));
        }
        let mut params = Vec::new();
        for s in &specs {
            let limit = (6.0 / (s.in_dim + s.out_dim) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit)
                .map_err(|e| Error::Input(format!("bad init range: {e}")))?;
            params.extend((0..s.in_dim * s.out_dim).map(|_| dist.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, s.out_dim));
        }
        Self::new(specs, params)
    }

    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].out_dim
    }

    pub fn n_hidden(&self) -> usize {
        self.specs.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Row-major `out × in` weights of layer `l`.
    pub fn weights(&self, l: usize) -> &[f64] {
        let s = &self.specs[l];
        let o = self.offsets[l];
        &self.params[o..o + s.in_dim * s.out_dim]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let s = &self.specs[l];
        let o = self.offsets[l] + s.in_dim * s.out_dim;
        &self.params[o..o + s.out_dim]
    }

    /// Range of layer `l`'s parameters inside the flat vector.
    pub fn layer_param_range(&self, l: usize) -> std::ops::Range<usize> {
        let s = &self.specs[l];
        let o = self.offsets[l];
        o..o + s.out_dim * (s.in_dim + 1)
    }

    /// Same hidden stack, output layer replaced by `(weights, bias)`.
    pub fn with_output_layer(&self, out_dim: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let last = self.specs.len() - 1;
        let in_dim = self.specs[last].in_dim;
        let mut layers = Vec::with_capacity(self.specs.len());
        for l in 0..last {
            layers.push((
                self.specs[l],
                self.weights(l).to_vec(),
                self.bias(l).to_vec(),
            ));
        }
        layers.push((
            LayerSpec {
                in_dim,
                out_dim,
                activation: Activation::Identity,
            },
            w,
            b,
        ));
        Self::from_layers(layers)
    }

    /// Keeps only the selected output units.
    pub fn select_outputs(&self, rows: &[usize]) -> Result<Self> {
        let last = self.specs.len() - 1;
        let spec = self.specs[last];
        if rows.iter().any(|&r| r >= spec.out_dim) {
            return Err(Error::Shape("selected output unit out of range".into()));
        }
        let w = self.weights(last);
        let b = self.bias(last);
        let mut nw = Vec::with_capacity(rows.len() * spec.in_dim);
        for &r in rows {
            nw.extend_from_slice(&w[r * spec.in_dim..(r + 1) * spec.in_dim]);
        }
        let nb = rows.iter().map(|&r| b[r]).collect();
        self.with_output_layer(rows.len(), nw, nb)
    }

    pub fn new_cache(&self) -> ForwardCache {
        let mut acts = Vec::with_capacity(self.specs.len() + 1);
        acts.push(vec![0.0; self.input_dim()]);
        let mut pres = Vec::with_capacity(self.specs.len());
        for s in &self.specs {
            pres.push(vec![0.0; s.out_dim]);
            acts.push(vec![0.0; s.out_dim]);
        }
        ForwardCache { pres, acts }
    }

    pub fn new_tangent_cache(&self) -> TangentCache {
        let fwd = self.new_cache();
        let tans = fwd.acts.clone();
        let tan_pres = fwd.pres.clone();
        TangentCache {
            fwd,
            tan_pres,
            tans,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Forward pass into a reusable cache; returns the output slice.
    pub fn forward_into<'c>(&self, x: &[f64], cache: &'c mut ForwardCache) -> Result<&'c [f64]> {
        self.check_input(x)?;
        if !cache.matches(self) {
            *cache = self.new_cache();
        }
        cache.acts[0].copy_from_slice(x);
        for (l, s) in self.specs.iter().enumerate() {
            let w = self.weights(l);
            let b = self.bias(l);
            let (head, tail) = cache.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            let pre = &mut cache.pres[l];
            for o in 0..s.out_dim {
                let row = &w[o * s.in_dim..(o + 1) * s.in_dim];
                let z = row.iter().zip(input).fold(b[o], |acc, (w, a)| acc + w * a);
                pre[o] = z;
                out[o] = match s.activation {
                    Activation::Softplus => softplus_eval(z).0,
                    Activation::Identity => z,
                };
            }
        }
        Ok(cache.output())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let mut cache = self.new_cache();
        let y = self.forward_into(x, &mut cache)?.to_vec();
        Ok((y, cache))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Row-major batch evaluation; `xs.len()` must be a multiple of the input dim.
    pub fn forward_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if !xs.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "batch length {} is not a multiple of input dim {d}",
                xs.len()
            )));
        }
        let mut cache = self.new_cache();
        let mut out = Vec::with_capacity(xs.len() / d * self.output_dim());
        for row in xs.chunks_exact(d) {
            out.extend_from_slice(self.forward_into(row, &mut cache)?);
        }
        Ok(out)
    }

    /// Activations of the last hidden layer (the input itself for an affine net).
    pub fn hidden_features(&self, x: &[f64], cache: &mut ForwardCache) -> Result<Vec<f64>> {
        self.forward_into(x, cache)?;
        Ok(cache.acts[self.specs.len() - 1].clone())
    }

    /// Accumulates `∂(d_out·y)/∂θ` into `grad` and, when given, writes `∂/∂x` into `d_input`.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        d_out: &[f64],
        grad: &mut [f64],
        d_input: Option<&mut [f64]>,
    ) -> Result<()> {
        self.check_backward(cache, d_out, grad)?;
        let mut delta_next: Vec<f64> = d_out.to_vec();
        let n_layers = self.specs.len();
        for l in (0..n_layers).rev() {
            let s = &self.specs[l];
            // dL/dz for this layer
            let mut dz = delta_next;
            if s.activation == Activation::Softplus {
                for (d, &z) in dz.iter_mut().zip(&cache.pres[l]) {
                    *d *= softplus_eval(z).1;
                }
            }
            let input = &cache.acts[l];
            let o = self.offsets[l];
            let nw = s.in_dim * s.out_dim;
            for (r, &d) in dz.iter().enumerate() {
                if d != 0.0 {
                    let gw = &mut grad[o + r * s.in_dim..o + (r + 1) * s.in_dim];
                    for (g, a) in gw.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                grad[o + nw + r] += d;
            }
            if l > 0 || d_input.is_some() {
                let w = self.weights(l);
                let mut da = vec![0.0; s.in_dim];
                for (r, &d) in dz.iter().enumerate() {
                    if d != 0.0 {
                        let row = &w[r * s.in_dim..(r + 1) * s.in_dim];
                        for (a, w) in da.iter_mut().zip(row) {
                            *a += d * w;
                        }
                    }
                }
                delta_next = da;
            } else {
                delta_next = Vec::new();
            }
        }
        if let Some(dx) = d_input {
            if dx.len() != self.input_dim() {
                return Err(Error::Shape(
                    "input gradient buffer has wrong length".into(),
                ));
            }
            dx.copy_from_slice(&delta_next);
        }
        Ok(())
    }

    fn check_backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &[f64]) -> Result<()> {
        if !cache.matches(self) {
            return Err(Error::Shape(
                "forward cache does not match this network".into(),
            ));
        }
        if d_out.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "d_out has length {}, network emits {}",
                d_out.len(),
                self.output_dim()
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer has wrong length".into()));
        }
        Ok(())
    }

    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64]) -> Result<Gradients> {
        let mut params = vec![0.0; self.params.len()];
        let mut input = vec![0.0; self.input_dim()];
        self.backward_accumulate(cache, d_out, &mut params, Some(&mut input))?;
        Ok(Gradients { params, input })
    }

    /// Fused primal + tangent pass along input 0 into a reusable cache.
    pub fn forward_tangent_into(&self, x: &[f64], cache: &mut TangentCache) -> Result<()> {
        self.check_input(x)?;
        if !cache.fwd.matches(self) || cache.tans.len() != self.specs.len() + 1 {
            *cache = self.new_tangent_cache();
        }
        cache.fwd.acts[0].copy_from_slice(x);
        cache.tans[0].iter_mut().for_each(|t| *t = 0.0);
        cache.tans[0][0] = 1.0;
        for (l, s) in self.specs.iter().enumerate() {
            let w = self.weights(l);
            let b = self.bias(l);
            let (ah, at) = cache.fwd.acts.split_at_mut(l + 1);
            let (th, tt) = cache.tans.split_at_mut(l + 1);
            let input = &ah[l];
            let tin = &th[l];
            for o in 0..s.out_dim {
                let row = &w[o * s.in_dim..(o + 1) * s.in_dim];
                let mut z = b[o];
                let mut u = 0.0;
                for ((w, a), t) in row.iter().zip(input).zip(tin) {
                    z += w * a;
                    u += w * t;
                }
                cache.fwd.pres[l][o] = z;
                cache.tan_pres[l][o] = u;
                match s.activation {
                    Activation::Softplus => {
                        let (v, d) = softplus_eval(z);
                        at[0][o] = v;
                        tt[0][o] = u * d;
                    }
                    Activation::Identity => {
                        at[0][o] = z;
                        tt[0][o] = u;
                    }
                }
            }
        }
        Ok(())
    }

    /// Output and its derivative with respect to input 0, in one pass.
    pub fn forward_with_alpha_tangent(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut cache = self.new_tangent_cache();
        self.forward_tangent_into(x, &mut cache)?;
        Ok((cache.output().to_vec(), cache.tangent().to_vec()))
    }

    /// Accumulates `∂(d_out·y + d_tan·∂y/∂x₀)/∂θ` into `grad`.
    pub fn backward_with_tangent(
        &self,
        cache: &TangentCache,
        d_out: &[f64],
        d_tan: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_backward(&cache.fwd, d_out, grad)?;
        if d_tan.len() != self.output_dim() || cache.tans.len() != self.specs.len() + 1 {
            return Err(Error::Shape(
                "tangent adjoint does not match network".into(),
            ));
        }
        let mut a_bar: Vec<f64> = d_out.to_vec();
        let mut t_bar: Vec<f64> = d_tan.to_vec();
        for l in (0..self.specs.len()).rev() {
            let s = &self.specs[l];
            let mut z_bar = vec![0.0; s.out_dim];
            let mut u_bar = vec![0.0; s.out_dim];
            for o in 0..s.out_dim {
                let (_, d1, d2) = s.activation.eval2(cache.fwd.pres[l][o]);
                u_bar[o] = t_bar[o] * d1;
                z_bar[o] = a_bar[o] * d1 + t_bar[o] * cache.tan_pres[l][o] * d2;
            }
            let input = &cache.fwd.acts[l];
            let tin = &cache.tans[l];
            let off = self.offsets[l];
            let nw = s.in_dim * s.out_dim;
            for o in 0..s.out_dim {
                let gw = &mut grad[off + o * s.in_dim..off + (o + 1) * s.in_dim];
                for ((g, a), t) in gw.iter_mut().zip(input).zip(tin) {
                    *g += z_bar[o] * a + u_bar[o] * t;
                }
                grad[off + nw + o] += z_bar[o];
            }
            if l > 0 {
                let w = self.weights(l);
                let mut na = vec![0.0; s.in_dim];
                let mut nt = vec![0.0; s.in_dim];
                for o in 0..s.out_dim {
                    let row = &w[o * s.in_dim..(o + 1) * s.in_dim];
                    for i in 0..s.in_dim {
                        na[i] += z_bar[o] * row[i];
                        nt[i] += u_bar[o] * row[i];
                    }
                }
                a_bar = na;
                t_bar = nt;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    #[serde(rename = "in")]
    in_dim: usize,
    #[serde(rename = "out")]
    out_dim: usize,
    activation: Activation,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    layers: Vec<LayerJson>,
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let layers = (0..self.specs.len())
            .map(|l| LayerJson {
                in_dim: self.specs[l].in_dim,
                out_dim: self.specs[l].out_dim,
                activation: self.specs[l].activation,
                w: self.weights(l).to_vec(),
                b: self.bias(l).to_vec(),
            })
            .collect();
        NetworkJson { layers }.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let json = NetworkJson::deserialize(de)?;
        let layers = json
            .layers
            .into_iter()
            .map(|l| {
                (
                    LayerSpec {
                        in_dim: l.in_dim,
                        out_dim: l.out_dim,
                        activation: l.activation,
                    },
                    l.w,
                    l.b,
                )
            })
            .collect();
        Network::from_layers(layers).map_err(serde::de::Error::custom)
    }
}
