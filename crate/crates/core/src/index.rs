//! Multi-indices over the spatial coordinates.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Largest spatial dimension supported by the packed multi-index.
pub const MAX_DIM: usize = 8;

/// A d-tuple of non-negative integers, stored inline.
///
/// Entries beyond `dim` are always zero, so the derived ordering and hashing
/// only depend on the meaningful part.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    dim: u8,
    e: [u8; MAX_DIM],
}

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "dimension {dim} exceeds MAX_DIM");
        Self { dim: dim as u8, e: [0; MAX_DIM] }
    }

    /// The unit multi-index `e_i`.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut m = Self::zero(dim);
        m.e[i] = 1;
        m
    }

    pub fn from_slice(entries: &[u32]) -> Self {
        let mut m = Self::zero(entries.len());
        for (slot, &v) in m.e.iter_mut().zip(entries) {
            *slot = u8::try_from(v).expect("multi-index entry exceeds 255");
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn get(&self, i: usize) -> u32 {
        self.e[i] as u32
    }

    pub fn set(&mut self, i: usize, v: u32) {
        assert!(i < self.dim());
        self.e[i] = u8::try_from(v).expect("multi-index entry exceeds 255");
    }

    pub fn entries(&self) -> impl Iterator<Item = u32> + '_ {
        self.e[..self.dim()].iter().map(|&v| v as u32)
    }

    /// Euclidean height `|β| = Σ β_j`.
    pub fn height(&self) -> u32 {
        self.entries().sum()
    }

    /// Weighted length `Σ w_j β_j`; with the dilation exponents this is the B-length.
    pub fn weighted(&self, weights: &[u32]) -> u32 {
        self.entries().zip(weights).map(|(b, &w)| b * w).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.e.iter().all(|&v| v == 0)
    }

    /// `β!` as the product of componentwise factorials.
    pub fn factorial(&self) -> f64 {
        self.entries().map(factorial).product()
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut m = *self;
        for i in 0..self.dim() {
            m.e[i] = self.e[i] + other.e[i];
        }
        m
    }

    /// `self - other` when `other ≤ self` componentwise.
    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        let mut m = *self;
        for i in 0..self.dim() {
            m.e[i] = self.e[i].checked_sub(other.e[i])?;
        }
        Some(m)
    }

    pub fn inc(&self, i: usize) -> Self {
        let mut m = *self;
        m.e[i] += 1;
        m
    }

    /// Componentwise `self ≤ other`.
    pub fn le(&self, other: &Self) -> bool {
        (0..self.dim()).all(|i| self.e[i] <= other.e[i])
    }

    /// Evaluates the monomial `v^β`.
    pub fn monomial(&self, v: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (i, b) in self.entries().enumerate() {
            if b > 0 {
                acc *= v[i].powi(b as i32);
            }
        }
        acc
    }

    /// All multi-indices `ν ≤ self`.
    pub fn lower_set(&self) -> Vec<Self> {
        let mut out = vec![Self::zero(self.dim())];
        for i in 0..self.dim() {
            let mut next = Vec::with_capacity(out.len() * (self.e[i] as usize + 1));
            for m in &out {
                for v in 0..=self.e[i] {
                    let mut m2 = *m;
                    m2.e[i] = v;
                    next.push(m2);
                }
            }
            out = next;
        }
        out
    }

    /// All multi-indices of dimension `dim` whose weighted length is at most `max`.
    pub fn enumerate_weighted(dim: usize, weights: &[u32], max: u32) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur = Self::zero(dim);
        fn rec(i: usize, budget: u32, weights: &[u32], cur: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
            if i == cur.dim() {
                out.push(*cur);
                return;
            }
            let w = weights[i].max(1);
            let mut v = 0;
            while v * w <= budget {
                cur.e[i] = v as u8;
                rec(i + 1, budget - v * w, weights, cur, out);
                v += 1;
            }
            cur.e[i] = 0;
        }
        rec(0, max, weights, &mut cur, &mut out);
        out
    }
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `n! / (n-k)!`
pub(crate) fn falling(n: u32, k: u32) -> f64 {
    ((n - k + 1)..=n).map(f64::from).product()
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    falling(n, k) / factorial(k)
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.entries().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    /// Parses `"2,1"`, `"(2,1)"` or `"2 1"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || Error::ParseMultiIndex(s.to_string());
        let body = s.trim();
        let body = body.strip_prefix('(').map_or(body, |b| b.strip_suffix(')').unwrap_or(b));
        let parts: Vec<&str> = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        if parts.is_empty() || parts.len() > MAX_DIM {
            return Err(err());
        }
        let mut m = Self::zero(parts.len());
        for (i, p) in parts.iter().enumerate() {
            m.e[i] = p.parse::<u8>().map_err(|_| err())?;
        }
        Ok(m)
    }
}
