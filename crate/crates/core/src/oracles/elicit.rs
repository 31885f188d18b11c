//! Brute-force checks that VaR, ES-given-VaR and (VaR, ES) are the minimizers
//! of their expected scores, evaluated exactly on grids.
//!
//! Expected scores are computed in closed form from the law (atoms, uniform
//! density, or a sorted sample with prefix sums), so the only approximation is
//! the grid itself.

use crate::error::{Error, Result};
use crate::losses::{AlphaLevel, JointLossSpec};

const DEFAULT_GRID: usize = 2001;
const TIE_TOL: f64 = 1e-12;

/// Finite law with strictly increasing atoms and positive probabilities summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Input("discrete law needs at least one atom".into()));
        }
        if atoms.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Input(
                "atom values must be strictly increasing".into(),
            ));
        }
        if atoms.iter().any(|a| !(a.1 > 0.0) || !a.0.is_finite()) {
            return Err(Error::Input("atom probabilities must be positive".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("atom probabilities sum to {total}")));
        }
        Ok(Self {
            values: atoms.iter().map(|a| a.0).collect(),
            probs: atoms.iter().map(|a| a.1).collect(),
        })
    }

    pub fn point(c: f64) -> Self {
        Self {
            values: vec![c],
            probs: vec![1.0],
        }
    }
}

/// A law on the real line, specified exactly enough to evaluate expected scores.
#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Discrete(DiscreteDist),
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Empirical law of a sample (stored sorted, with prefix sums).
    Sample(SampleLaw),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleLaw {
    sorted: Vec<f64>,
    /// `prefix[i] = Σ_{k<i} sorted[k]`
    prefix: Vec<f64>,
}

impl SampleLaw {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(
                "sample law needs finite, nonempty samples".into(),
            ));
        }
        samples.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(samples.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for v in &samples {
            acc += v;
            prefix.push(acc);
        }
        Ok(Self {
            sorted: samples,
            prefix,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Empirical quantile `inf{t : F_n(t) ≥ p}`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    /// `(F(t−), F(t))`.
    fn cdf_pair(&self, t: f64) -> (f64, f64) {
        let n = self.sorted.len() as f64;
        let below = self.sorted.partition_point(|&v| v < t) as f64;
        let at_or_below = self.sorted.partition_point(|&v| v <= t) as f64;
        (below / n, at_or_below / n)
    }

    /// `E[(Y − v)⁺]`.
    fn excess_mean(&self, v: f64) -> f64 {
        let n = self.sorted.len();
        let k = self.sorted.partition_point(|&y| y <= v);
        let tail_sum = self.prefix[n] - self.prefix[k];
        (tail_sum - (n - k) as f64 * v) / n as f64
    }
}

impl Law {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Input("uniform law needs lo < hi".into()));
        }
        Ok(Law::Uniform { lo, hi })
    }

    pub fn sample(samples: Vec<f64>) -> Result<Self> {
        Ok(Law::Sample(SampleLaw::new(samples)?))
    }

    /// The law of `c·Y` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Input("scale factor must be positive".into()));
        }
        Ok(match self {
            Law::Discrete(d) => Law::Discrete(DiscreteDist {
                values: d.values.iter().map(|v| c * v).collect(),
                probs: d.probs.clone(),
            }),
            Law::Uniform { lo, hi } => Law::Uniform {
                lo: c * lo,
                hi: c * hi,
            },
            Law::Sample(s) => {
                Law::Sample(SampleLaw::new(s.sorted.iter().map(|v| c * v).collect())?)
            }
        })
    }

    /// `(F(t−), F(t))`.
    pub fn cdf_pair(&self, t: f64) -> (f64, f64) {
        match self {
            Law::Discrete(d) => {
                let mut below = 0.0;
                let mut at = 0.0;
                for (&v, &p) in d.values.iter().zip(&d.probs) {
                    if v < t {
                        below += p;
                    } else if v == t {
                        at += p;
                    }
                }
                (below, below + at)
            }
            Law::Uniform { lo, hi } => {
                let f = ((t - lo) / (hi - lo)).clamp(0.0, 1.0);
                (f, f)
            }
            Law::Sample(s) => s.cdf_pair(t),
        }
    }

    /// `inf{t : F(t) ≥ α}`.
    pub fn quantile(&self, alpha: f64) -> f64 {
        match self {
            Law::Discrete(d) => {
                let mut acc = 0.0;
                for (&v, &p) in d.values.iter().zip(&d.probs) {
                    acc += p;
                    if acc >= alpha - 1e-15 {
                        return v;
                    }
                }
                d.values[d.values.len() - 1]
            }
            Law::Uniform { lo, hi } => lo + alpha * (hi - lo),
            Law::Sample(s) => s.quantile(alpha),
        }
    }

    /// `E[(Y − v)⁺]`.
    pub fn excess_mean(&self, v: f64) -> f64 {
        match self {
            Law::Discrete(d) => d
                .values
                .iter()
                .zip(&d.probs)
                .map(|(&y, &p)| p * (y - v).max(0.0))
                .sum(),
            Law::Uniform { lo, hi } => {
                if v <= *lo {
                    0.5 * (lo + hi) - v
                } else if v >= *hi {
                    0.0
                } else {
                    (hi - v).powi(2) / (2.0 * (hi - lo))
                }
            }
            Law::Sample(s) => s.excess_mean(v),
        }
    }

    /// `E[((Y − v)⁺)²]`.
    pub fn excess_second_moment(&self, v: f64) -> f64 {
        match self {
            Law::Discrete(d) => d
                .values
                .iter()
                .zip(&d.probs)
                .map(|(&y, &p)| p * (y - v).max(0.0).powi(2))
                .sum(),
            Law::Uniform { lo, hi } => {
                let a = v.max(*lo);
                if a >= *hi {
                    0.0
                } else {
                    ((hi - v).powi(3) - (a - v).powi(3)) / (3.0 * (hi - lo))
                }
            }
            Law::Sample(s) => {
                let k = s.sorted.partition_point(|&y| y <= v);
                s.sorted[k..].iter().map(|&y| (y - v).powi(2)).sum::<f64>() / s.sorted.len() as f64
            }
        }
    }

    /// Default search range: atom range padded by 1, the uniform support, or
    /// the `[1e−4, 1 − 1e−4]` empirical quantile range (padded by 1 if degenerate).
    pub fn default_range(&self) -> (f64, f64) {
        let (lo, hi) = match self {
            Law::Discrete(d) => (d.values[0] - 1.0, d.values[d.values.len() - 1] + 1.0),
            Law::Uniform { lo, hi } => (*lo, *hi),
            Law::Sample(s) => (s.quantile(1e-4), s.quantile(1.0 - 1e-4)),
        };
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    }
}

/// `k` evenly spaced points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k < 2 {
        return vec![lo];
    }
    let h = (hi - lo) / (k - 1) as f64;
    (0..k).map(|i| lo + i as f64 * h).collect()
}

fn default_grid(law: &Law) -> Vec<f64> {
    let (lo, hi) = law.default_range();
    let mut g = uniform_grid(lo, hi, DEFAULT_GRID);
    if let Law::Discrete(d) = law {
        g.extend_from_slice(&d.values);
        g.sort_by(f64::total_cmp);
        g.dedup();
    }
    g
}

/// Expected pinball score `E[(1−α)⁻¹(Y−v)⁺ + v]`.
pub fn expected_pinball(law: &Law, v: f64, alpha: AlphaLevel) -> f64 {
    alpha.tail_factor() * law.excess_mean(v) + v
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileMinimizers {
    /// Grid points attaining the minimum (within `1e−12`).
    pub argmin: Vec<f64>,
    pub min_value: f64,
    /// `inf{t : F(t) ≥ α}`.
    pub quantile: f64,
    /// Grid spacing near the quantile (largest local gap).
    pub resolution: f64,
}

impl QuantileMinimizers {
    /// Whether `t` lies within one grid cell of the argmin set's hull.
    pub fn covers(&self, t: f64) -> bool {
        let lo = self.argmin[0];
        let hi = self.argmin[self.argmin.len() - 1];
        t >= lo - self.resolution && t <= hi + self.resolution
    }
}

fn grid_resolution(grid: &[f64]) -> f64 {
    grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

pub fn brute_force_quantile_minimizer(
    law: &Law,
    alpha: AlphaLevel,
    grid: Option<&[f64]>,
) -> Result<QuantileMinimizers> {
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_grid(law);
            &owned
        }
    };
    if grid.is_empty() {
        return Err(Error::Input("empty grid".into()));
    }
    let scores: Vec<f64> = grid
        .iter()
        .map(|&v| expected_pinball(law, v, alpha))
        .collect();
    let min_value = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_TOL * min_value.abs().max(1.0);
    let argmin = grid
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s <= min_value + tol)
        .map(|(&v, _)| v)
        .collect();
    Ok(QuantileMinimizers {
        argmin,
        min_value,
        quantile: law.quantile(alpha.get()),
        resolution: grid_resolution(grid),
    })
}

/// ES via the minimum value of the expected pinball score of `c·Y`, divided by `c`.
pub fn es_by_scaled_minimum(
    law: &Law,
    alpha: AlphaLevel,
    c: f64,
    grid_points: usize,
) -> Result<f64> {
    let scaled = law.scaled(c)?;
    let (lo, hi) = scaled.default_range();
    let mut grid = uniform_grid(lo, hi, grid_points.max(2));
    let q = scaled.quantile(alpha.get());
    grid.push(q);
    let r = brute_force_quantile_minimizer(&scaled, alpha, Some(&grid))?;
    Ok(r.min_value / c)
}

/// ES of the law computed from its definition (tail integral of the quantile):
/// `VaR + (1−α)⁻¹E[(Y − VaR)⁺]`.
pub fn law_es(law: &Law, alpha: AlphaLevel) -> f64 {
    let q = law.quantile(alpha.get());
    q + alpha.tail_factor() * law.excess_mean(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsMinimizer {
    pub argmin: f64,
    /// `(1−α)⁻¹E[(Y − q)⁺]`, the exact minimizer of the expected score.
    pub target: f64,
    pub resolution: f64,
}

/// Grid argmin over `z` of `E[(z − (1−α)⁻¹(Y−q)⁺)²]`.
///
/// `q` must be an α-quantile of the law, `F(q−) ≤ α ≤ F(q)`; for sample laws
/// the check allows `quantile_tol` of slack on both sides.
pub fn brute_force_es_minimizer(
    law: &Law,
    q: f64,
    alpha: AlphaLevel,
    grid: Option<&[f64]>,
    quantile_tol: f64,
) -> Result<EsMinimizer> {
    let a = alpha.get();
    let (left, right) = law.cdf_pair(q);
    if left > a + quantile_tol || right < a - quantile_tol {
        return Err(Error::Precondition(format!(
            "{q} is not an alpha-quantile: F(q-) = {left}, F(q) = {right}, alpha = {a}"
        )));
    }
    let k = alpha.tail_factor();
    let m1 = k * law.excess_mean(q);
    let m2 = k * k * law.excess_second_moment(q);
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            let (_, hi) = law.default_range();
            owned = uniform_grid(0.0, (k * (hi - q)).max(1.0), DEFAULT_GRID);
            &owned
        }
    };
    if grid.is_empty() {
        return Err(Error::Input("empty grid".into()));
    }
    let mut best = (f64::INFINITY, grid[0]);
    for &z in grid {
        let score = z * z - 2.0 * z * m1 + m2;
        if score < best.0 {
            best = (score, z);
        }
    }
    Ok(EsMinimizer {
        argmin: best.1,
        target: m1,
        resolution: grid_resolution(grid),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointMinimizer {
    pub v: f64,
    pub z: f64,
    pub cell_v: f64,
    pub cell_z: f64,
}

/// Expected joint score `E[w + v + h₂'(z)(z − v − w) − h₂(z)]`, `w = (1−α)⁻¹(Y−v)⁺`.
pub fn expected_joint(law: &Law, v: f64, z: f64, alpha: AlphaLevel, spec: JointLossSpec) -> f64 {
    let w = alpha.tail_factor() * law.excess_mean(v);
    let (h, h1, _) = spec.h2(z);
    w + v + h1 * (z - v - w) - h
}

/// 2-D grid argmin of the expected joint score. Default grids: 2001 points on
/// the law's default range in each coordinate.
pub fn brute_force_joint_minimizer(
    law: &Law,
    alpha: AlphaLevel,
    grid_v: Option<&[f64]>,
    grid_z: Option<&[f64]>,
    spec: JointLossSpec,
) -> Result<JointMinimizer> {
    let (lo, hi) = law.default_range();
    let default = uniform_grid(lo, hi, DEFAULT_GRID);
    let gv = grid_v.unwrap_or(&default);
    let gz = grid_z.unwrap_or(&default);
    if gv.is_empty() || gz.is_empty() {
        return Err(Error::Input("empty grid".into()));
    }
    let k = alpha.tail_factor();
    let hz: Vec<(f64, f64)> = gz.iter().map(|&z| (spec.h2(z).0, spec.h2(z).1)).collect();
    let mut best = (f64::INFINITY, gv[0], gz[0]);
    for &v in gv {
        let w = k * law.excess_mean(v);
        for (&z, &(h, h1)) in gz.iter().zip(&hz) {
            let s = w + v + h1 * (z - v - w) - h;
            if s < best.0 {
                best = (s, v, z);
            }
        }
    }
    Ok(JointMinimizer {
        v: best.1,
        z: best.2,
        cell_v: grid_resolution(gv),
        cell_z: grid_resolution(gz),
    })
}

/// Composite midpoint rule for `(1−α)⁻¹ ∫_α¹ VaR_β dβ`.
pub fn acerbi_es<F>(quantile_fn: F, alpha: AlphaLevel, n_points: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if n_points < 2 {
        return Err(Error::Input(
            "acerbi quadrature needs at least 2 panels".into(),
        ));
    }
    let a = alpha.get();
    let h = (1.0 - a) / n_points as f64;
    let mut sum = 0.0;
    for i in 0..n_points {
        let beta = a + (i as f64 + 0.5) * h;
        let q = quantile_fn(beta);
        if !q.is_finite() {
            return Err(Error::Integration(format!("quantile at {beta} is {q}")));
        }
        sum += q;
    }
    Ok(sum / n_points as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::normal::{gaussian_var_es, norm_ppf};

    fn a(x: f64) -> AlphaLevel {
        AlphaLevel::new(x).unwrap()
    }

    fn two_point(p0: f64) -> Law {
        Law::Discrete(DiscreteDist::new(vec![(0.0, p0), (1.0, 1.0 - p0)]).unwrap())
    }

    #[test]
    fn quantile_minimizer_flat_segment() {
        let r = brute_force_quantile_minimizer(&two_point(0.5), a(0.5), None).unwrap();
        assert_eq!(r.quantile, 0.0);
        assert_eq!(r.argmin[0], 0.0);
        assert_eq!(*r.argmin.last().unwrap(), 1.0);
        assert!(r.argmin.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(r.argmin.contains(&r.quantile));
    }

    #[test]
    fn quantile_minimizer_unique() {
        let r = brute_force_quantile_minimizer(&two_point(0.3), a(0.5), None).unwrap();
        assert_eq!(r.argmin, vec![1.0]);
        assert_eq!(r.quantile, 1.0);
        let pm = Law::Discrete(DiscreteDist::point(5.0));
        let r = brute_force_quantile_minimizer(&pm, a(0.2), None).unwrap();
        assert_eq!(r.argmin, vec![5.0]);
    }

    #[test]
    fn discrete_law_validation() {
        assert!(DiscreteDist::new(vec![]).is_err());
        assert!(DiscreteDist::new(vec![(1.0, 0.5), (0.0, 0.5)]).is_err());
        assert!(DiscreteDist::new(vec![(0.0, 0.5), (1.0, 0.6)]).is_err());
        assert!(brute_force_quantile_minimizer(&two_point(0.5), a(0.5), Some(&[])).is_err());
    }

    #[test]
    fn es_minimizer_uniform_and_point_mass() {
        let u = Law::uniform(0.0, 1.0).unwrap();
        let r = brute_force_es_minimizer(&u, 0.75, a(0.75), None, 0.0).unwrap();
        assert!((r.target - 0.125).abs() < 1e-15);
        assert!((r.argmin - 0.125).abs() <= r.resolution);
        let pm = Law::Discrete(DiscreteDist::point(2.0));
        let r = brute_force_es_minimizer(&pm, 2.0, a(0.9), None, 0.0).unwrap();
        assert_eq!(r.argmin, 0.0);
        let err = brute_force_es_minimizer(&u, 0.5, a(0.75), None, 0.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn acerbi_reference_cases() {
        let e = acerbi_es(|_| 3.25, a(0.4), 10).unwrap();
        assert_eq!(e, 3.25);
        let e = acerbi_es(|b| b, a(0.75), 1000).unwrap();
        assert!((e - 0.875).abs() < 1e-6);
        let e = acerbi_es(|b| norm_ppf(b).unwrap(), a(0.95), 100_000).unwrap();
        let (_, es) = gaussian_var_es(0.0, 1.0, 0.95).unwrap();
        assert!((e - es).abs() < 1e-4 && (e - 2.062_713).abs() < 1e-4);
        assert!(matches!(
            acerbi_es(|_| f64::NAN, a(0.5), 10),
            Err(Error::Integration(_))
        ));
    }

    #[test]
    fn scaled_minimum_recovers_es_on_discrete_law() {
        let law = Law::Discrete(
            DiscreteDist::new(vec![(-1.0, 0.2), (0.5, 0.5), (2.0, 0.2), (4.0, 0.1)]).unwrap(),
        );
        let alpha = a(0.85);
        let es = law_es(&law, alpha);
        // atoms beyond VaR: 2.0 with mass .05 counted from the split atom, 4.0 with .1
        assert!((es - (2.0 * 0.05 + 4.0 * 0.1) / 0.15).abs() < 1e-12);
        for c in [0.5, 2.0] {
            let e = es_by_scaled_minimum(&law, alpha, c, 2001).unwrap();
            assert!((e - es).abs() < 1e-12, "c={c}: {e} vs {es}");
        }
    }

    #[test]
    fn joint_minimizer_point_mass() {
        let law = Law::sample(vec![1.5; 100]).unwrap();
        let r =
            brute_force_joint_minimizer(&law, a(0.9), None, None, JointLossSpec::ExpNeg).unwrap();
        assert!((r.v - 1.5).abs() < 1e-12 && (r.z - 1.5).abs() < 1e-12);
    }
}
