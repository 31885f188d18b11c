//! Scoring functions for VaR, ES and the joint pair, plus the crossing penalty.
//!
//! Every function returns the loss together with the partials the trainers
//! need. At kinks the subgradient of the `y ≤ v` branch is used.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confidence level `α ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AlphaLevel(f64);

impl AlphaLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Input(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `1 / (1 − α)`.
    pub fn tail_factor(self) -> f64 {
        1.0 / (1.0 - self.0)
    }
}

impl TryFrom<f64> for AlphaLevel {
    type Error = Error;
    fn try_from(a: f64) -> Result<Self> {
        Self::new(a)
    }
}

impl From<AlphaLevel> for f64 {
    fn from(a: AlphaLevel) -> f64 {
        a.0
    }
}

/// Optional symmetric clamp `T_B(t) = max(−B, min(B, t))`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Option<f64>", into = "Option<f64>")]
pub struct TruncationBound(Option<f64>);

impl TruncationBound {
    pub const NONE: Self = Self(None);

    pub fn new(b: Option<f64>) -> Result<Self> {
        match b {
            Some(b) if !(b > 0.0) => Err(Error::Input(format!(
                "truncation bound must be positive, got {b}"
            ))),
            _ => Ok(Self(b)),
        }
    }

    pub fn bound(self) -> Option<f64> {
        self.0
    }

    pub fn apply(self, t: f64) -> f64 {
        match self.0 {
            Some(b) => t.clamp(-b, b),
            None => t,
        }
    }
}

impl TryFrom<Option<f64>> for TruncationBound {
    type Error = Error;
    fn try_from(b: Option<f64>) -> Result<Self> {
        Self::new(b)
    }
}

impl From<TruncationBound> for Option<f64> {
    fn from(b: TruncationBound) -> Self {
        b.0
    }
}

/// Choice of the strictly convex `h₂` in the joint score. Only `h₂(z) = e^{−z}` is offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointLossSpec {
    #[default]
    ExpNeg,
}

impl JointLossSpec {
    /// `(h₂(z), h₂'(z), h₂''(z))`.
    pub fn h2(self, z: f64) -> (f64, f64, f64) {
        match self {
            JointLossSpec::ExpNeg => {
                let e = (-z).exp();
                (e, -e, e)
            }
        }
    }
}

/// `(1−α)⁻¹(y−v)⁺ + v` and its derivative in `v`.
#[inline]
pub fn pinball_loss(y: f64, v: f64, alpha: AlphaLevel) -> (f64, f64) {
    let k = alpha.tail_factor();
    if y > v {
        (k * (y - v) + v, 1.0 - k)
    } else {
        (v, 1.0)
    }
}

/// Two-step residual target `T_B((1−α)⁻¹(y−v̂)⁺)`.
#[inline]
pub fn es_target(y: f64, v_hat: f64, alpha: AlphaLevel, trunc: TruncationBound) -> f64 {
    trunc.apply(alpha.tail_factor() * (y - v_hat).max(0.0))
}

/// `(z − t)²` against the two-step target `t`, and its derivative in `z`.
#[inline]
pub fn es_square_loss(
    y: f64,
    v_hat: f64,
    z: f64,
    alpha: AlphaLevel,
    trunc: TruncationBound,
) -> (f64, f64) {
    let r = z - es_target(y, v_hat, alpha, trunc);
    (r * r, 2.0 * r)
}

/// Joint VaR/ES score with `h₁ = id`; returns `(loss, ∂/∂v, ∂/∂z)`.
#[inline]
pub fn joint_loss(
    y: f64,
    v: f64,
    z: f64,
    alpha: AlphaLevel,
    spec: JointLossSpec,
) -> (f64, f64, f64) {
    let k = alpha.tail_factor();
    let (w, dw) = if y > v { (k * (y - v), -k) } else { (0.0, 0.0) };
    let (h, h1, h2) = spec.h2(z);
    let loss = w + v + h1 * (z - v - w) - h;
    let dv = (1.0 + dw) * (1.0 - h1);
    let dz = h2 * (z - v - w);
    (loss, dv, dz)
}

/// `λ(−t)⁺` on the α-derivative `t` of the quantile, and its derivative in `t`.
#[inline]
pub fn crossing_penalty(dq_dalpha: f64, lambda: f64) -> (f64, f64) {
    if dq_dalpha < 0.0 {
        (-lambda * dq_dalpha, -lambda)
    } else {
        (0.0, 0.0)
    }
}
