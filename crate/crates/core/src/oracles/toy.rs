//! Conditionally Gaussian toy model: `Y | X ~ N(P₁(X), P₂(X)²)`, `X ~ N(0, I_d)`.
//!
//! `P₁` and `P₂` are degree-2 polynomials over the basis `1, xᵢ, xᵢxⱼ (i < j)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normal::{gaussian_excess_mean, gaussian_var_es};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{indexed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianToySpec {
    pub d: usize,
    /// Coefficients of `P₁` (conditional mean).
    pub lambda: Vec<f64>,
    /// Coefficients of `P₂` (`σ = |P₂|`).
    pub mu: Vec<f64>,
}

/// `1 + d + d(d−1)/2`.
pub fn basis_size(d: usize) -> usize {
    1 + d + d * d.saturating_sub(1) / 2
}

fn eval_poly(coef: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut s = coef[0];
    for i in 0..d {
        s += coef[1 + i] * x[i];
    }
    let mut k = 1 + d;
    for i in 0..d {
        for j in i + 1..d {
            s += coef[k] * x[i] * x[j];
            k += 1;
        }
    }
    s
}

impl GaussianToySpec {
    pub fn new(d: usize, lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let m = basis_size(d);
        if d == 0 || lambda.len() != m || mu.len() != m {
            return Err(Error::Shape(format!(
                "toy spec with d={d} needs {m} coefficients per polynomial"
            )));
        }
        Ok(Self { d, lambda, mu })
    }

    /// All coefficients i.i.d. standard normal.
    pub fn sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        let m = basis_size(d);
        let lambda = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let mu = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        Self::new(d, lambda, mu)
    }

    /// `(μ(x), σ(x))`.
    pub fn moments(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.d {
            return Err(Error::Shape(format!(
                "toy model expects {} features, got {}",
                self.d,
                x.len()
            )));
        }
        Ok((eval_poly(&self.lambda, x), eval_poly(&self.mu, x).abs()))
    }

    /// Closed-form conditional `(VaR_α, ES_α)` at `x`.
    pub fn var_es(&self, x: &[f64], alpha: f64) -> Result<(f64, f64)> {
        let (m, s) = self.moments(x)?;
        gaussian_var_es(m, s, alpha)
    }

    /// `E[(Y − q)⁺ | X = x]`.
    pub fn excess_mean(&self, x: &[f64], q: f64) -> Result<f64> {
        let (m, s) = self.moments(x)?;
        Ok(gaussian_excess_mean(m, s, q))
    }

    /// `n` rows; row `i` draws from its own counter-based stream so rows are
    /// reproducible individually. With `twins`, a second response uses an
    /// independent normal on the same row.
    pub fn generate(&self, n: usize, seed: u64, twins: bool) -> Dataset {
        let d = self.d;
        let mut x = vec![0.0; n * d];
        let mut y = vec![0.0; n];
        let mut y2 = if twins { vec![0.0; n] } else { Vec::new() };
        for i in 0..n {
            let mut rng = indexed(seed, Stream::Data, i as u64);
            let row = &mut x[i * d..(i + 1) * d];
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let m = eval_poly(&self.lambda, row);
            let s = eval_poly(&self.mu, row).abs();
            let z: f64 = StandardNormal.sample(&mut rng);
            y[i] = m + s * z;
            if twins {
                let z2: f64 = StandardNormal.sample(&mut rng);
                y2[i] = m + s * z2;
            }
        }
        let ds = Dataset::new(d, x, y).expect("shapes are consistent by construction");
        if twins {
            ds.with_twin(y2).expect("twin length matches")
        } else {
            ds
        }
    }
}

/// Free-function form of [`GaussianToySpec::var_es`].
pub fn toy_var_es_closed(spec: &GaussianToySpec, x: &[f64], alpha: f64) -> Result<(f64, f64)> {
    spec.var_es(x, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn basis_sizes() {
        assert_eq!(basis_size(1), 2);
        assert_eq!(basis_size(5), 16);
        assert_eq!(basis_size(25), 326);
        let mut rng = stream(1, Stream::Spec);
        let spec = GaussianToySpec::sample(25, &mut rng).unwrap();
        assert_eq!(spec.lambda.len(), 326);
    }

    #[test]
    fn polynomial_evaluation() {
        // P = 1 + 2x₀ + 3x₁ + 4x₀x₁
        let spec =
            GaussianToySpec::new(2, vec![1.0, 2.0, 3.0, 4.0], vec![-2.0, 0.0, 0.0, 0.0]).unwrap();
        let (m, s) = spec.moments(&[0.5, -1.0]).unwrap();
        assert!((m - (1.0 + 1.0 - 3.0 - 2.0)).abs() < 1e-15);
        assert_eq!(s, 2.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = GaussianToySpec::sample(4, &mut stream(9, Stream::Spec)).unwrap();
        let b = GaussianToySpec::sample(4, &mut stream(9, Stream::Spec)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.generate(50, 3, true), b.generate(50, 3, true));
    }

    #[test]
    fn degenerate_spec_is_constant() {
        let m = basis_size(3);
        let mut lambda = vec![0.0; m];
        lambda[0] = 2.5;
        let spec = GaussianToySpec::new(3, lambda, vec![0.0; m]).unwrap();
        let ds = spec.generate(100, 1, false);
        assert!(ds.y().iter().all(|&y| y == 2.5));
    }

    #[test]
    fn centering_and_twin_independence() {
        let spec = GaussianToySpec::sample(3, &mut stream(2, Stream::Spec)).unwrap();
        let n = 20_000;
        let ds = spec.generate(n, 4, true);
        let (mut s, mut s2, mut c, mut zz) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let (m, sd) = spec.moments(ds.row(i)).unwrap();
            let z1 = (ds.y()[i] - m) / sd;
            let z2 = (ds.y_twin().unwrap()[i] - m) / sd;
            s += z1;
            s2 += z1 * z1;
            c += z1 * z2;
            zz += z2 * z2;
        }
        let nf = n as f64;
        assert!((s / nf).abs() < 4.0 / nf.sqrt());
        assert!((s2 / nf - 1.0).abs() < 0.05);
        let corr = c / (s2 * zz).sqrt();
        assert!(corr.abs() < 4.0 / nf.sqrt());
    }

    #[test]
    fn closed_form_properties() {
        let spec = GaussianToySpec::sample(3, &mut stream(3, Stream::Spec)).unwrap();
        let x = [0.2, -0.4, 1.0];
        let (m, s) = spec.moments(&x).unwrap();
        let (v, e) = spec.var_es(&x, 0.5).unwrap();
        assert!((v - m).abs() < 1e-12);
        assert!((e - (m + s * 2.0 * super::super::normal::norm_pdf(0.0))).abs() < 1e-12);
        let mut prev = f64::NEG_INFINITY;
        for a in [0.5, 0.9, 0.95, 0.99, 0.999] {
            let (v, e) = spec.var_es(&x, a).unwrap();
            assert!(e >= v && v > prev);
            prev = v;
        }
    }
}
