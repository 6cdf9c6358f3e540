//! Terminal payoffs with their declared regularity.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// `scale · (w·y − strike)^+`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub strike: f64,
    pub scale: f64,
}

impl Hyperplane {
    pub fn level(&self, y: &[f64]) -> f64 {
        self.normal.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() - self.strike
    }

    pub fn call(&self, y: &[f64]) -> f64 {
        self.scale * self.level(y).max(0.0)
    }
}

/// How the leading term of a payoff can be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum PayoffKind {
    /// Call on a linear functional; closed form.
    Call(Hyperplane),
    /// Constant; closed form.
    Constant(f64),
    /// `w·y + c`; closed form.
    Linear { normal: Vec<f64>, offset: f64 },
    /// Anything else; quadrature, split along `kink` when given.
    Custom { kink: Option<Hyperplane> },
}

type PayoffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A payoff `φ(y)` together with its B-homogeneous Hölder exponent `k`.
#[derive(Clone)]
pub struct Payoff {
    name: String,
    exponent: f64,
    kind: PayoffKind,
    func: PayoffFn,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff").field("name", &self.name).field("exponent", &self.exponent).field("kind", &self.kind).finish()
    }
}

impl Payoff {
    /// Arbitrary payoff with declared exponent.
    pub fn custom(
        name: impl Into<String>,
        exponent: f64,
        kink: Option<Hyperplane>,
        func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(exponent >= 0.0) {
            return Err(Error::InvalidInput(format!("payoff exponent {exponent} must be non-negative")));
        }
        Ok(Self { name: name.into(), exponent, kind: PayoffKind::Custom { kink }, func: Arc::new(func) })
    }

    /// Call on `w·y` with exponent `k`.
    pub fn call(name: impl Into<String>, exponent: f64, plane: Hyperplane) -> Self {
        let p = plane.clone();
        Self { name: name.into(), exponent, kind: PayoffKind::Call(plane), func: Arc::new(move |y| p.call(y)) }
    }

    /// Fixed-strike arithmetic average call `(A_T / T − K)^+` on `y = (S, A)`.
    pub fn fixed_strike_asian(strike: f64, maturity: f64) -> Result<Self> {
        if !(maturity > 0.0) {
            return Err(Error::InvalidInput(format!("maturity {maturity} must be positive")));
        }
        Ok(Self::call(
            "fixed-strike-asian",
            3.0,
            Hyperplane { normal: vec![0.0, 1.0], strike: strike * maturity, scale: 1.0 / maturity },
        ))
    }

    /// Floating-strike arithmetic average call `(S_T − A_T / T)^+`.
    pub fn floating_strike_asian(maturity: f64) -> Result<Self> {
        if !(maturity > 0.0) {
            return Err(Error::InvalidInput(format!("maturity {maturity} must be positive")));
        }
        Ok(Self::call(
            "floating-strike-asian",
            1.0,
            Hyperplane { normal: vec![1.0, -1.0 / maturity], strike: 0.0, scale: 1.0 },
        ))
    }

    /// A constant has every exponent; the largest admissible one is declared
    /// by the pricer, so `0` is stored here.
    pub fn constant(c: f64) -> Self {
        Self { name: "constant".into(), exponent: 0.0, kind: PayoffKind::Constant(c), func: Arc::new(move |_| c) }
    }

    /// `w·y + offset`, exponent `min σ_j` over the coordinates it uses.
    pub fn linear(normal: Vec<f64>, offset: f64, exponent: f64) -> Self {
        let w = normal.clone();
        Self {
            name: "linear".into(),
            exponent,
            kind: PayoffKind::Linear { normal, offset },
            func: Arc::new(move |y| w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + offset),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        (self.func)(y)
    }

    /// Rejects exponents outside `[0, 2r + 1]` for a structure of depth `r`.
    pub fn validate(&self, depth: usize, dim: usize) -> Result<()> {
        let max = (2 * depth + 1) as f64;
        if self.exponent > max {
            return Err(Error::InvalidInput(format!("payoff exponent {} exceeds 2r+1 = {max}", self.exponent)));
        }
        let len = match &self.kind {
            PayoffKind::Call(h) => Some(h.normal.len()),
            PayoffKind::Custom { kink: Some(h) } => Some(h.normal.len()),
            PayoffKind::Linear { normal, .. } => Some(normal.len()),
            _ => None,
        };
        match len {
            Some(n) if n != dim => Err(Error::DimensionMismatch { expected: dim, got: n }),
            _ => Ok(()),
        }
    }
}
