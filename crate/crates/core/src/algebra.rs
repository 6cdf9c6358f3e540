//! Normal-ordered differential operators with polynomial time coefficients.
//!
//! A term is `c · Θ^b Δ_1^{k_1}… · X^δ · D^α`, where `X` are multiplication
//! operators by the spatial increment and `D` are spatial derivatives. Every
//! operator is kept in normal order (multiplications to the left of
//! derivatives). Storage is ordered so printing and iteration are
//! deterministic.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::GroupPoint;
use crate::index::{binomial, falling, MultiIndex};
use crate::poly::Poly;

/// Number of time variables: slot 0 is the horizon `Θ`, the rest are
/// integration variables.
pub const TIME_SLOTS: usize = 5;
pub const THETA: usize = 0;

/// Relative magnitude below which coefficients are dropped after products.
pub const PRUNE_TOLERANCE: f64 = 1e-15;

/// Exponents of `(Θ, Δ_1, …, Δ_4)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TimeMonomial(pub [u8; TIME_SLOTS]);

impl TimeMonomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(slot: usize, power: u32) -> Self {
        let mut m = Self::default();
        m.0[slot] = power as u8;
        m
    }

    pub fn get(&self, slot: usize) -> u32 {
        self.0[slot] as u32
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut m = *self;
        for (a, b) in m.0.iter_mut().zip(other.0) {
            *a += b;
        }
        m
    }

    pub fn eval(&self, values: &[f64; TIME_SLOTS]) -> f64 {
        self.0.iter().zip(values).filter(|(e, _)| **e > 0).map(|(&e, v)| v.powi(e as i32)).product()
    }

    /// True when only `Θ` appears.
    pub fn is_horizon_only(&self) -> bool {
        self.0[1..].iter().all(|&e| e == 0)
    }

    fn rename(&self, from: usize, to: usize) -> Self {
        let mut m = *self;
        m.0[to] += m.0[from];
        m.0[from] = 0;
        m
    }
}

impl fmt::Display for TimeMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Theta^{}", self.0[0])?;
        for (i, &e) in self.0.iter().enumerate().skip(1) {
            if e > 0 {
                write!(f, " * Delta{i}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Polynomial in the time slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimePolynomial {
    terms: BTreeMap<TimeMonomial, f64>,
}

impl TimePolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(c, TimeMonomial::one())
    }

    pub fn monomial(c: f64, m: TimeMonomial) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    /// `Σ_k coeffs[k] · slot^k`.
    pub fn univariate(slot: usize, coeffs: &[f64]) -> Self {
        let mut p = Self::zero();
        for (k, &c) in coeffs.iter().enumerate() {
            p.add_term(TimeMonomial::var(slot, k as u32), c);
        }
        p
    }

    pub fn add_term(&mut self, m: TimeMonomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(m).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TimeMonomial, &f64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (m, c) in &other.terms {
            p.add_term(*m, *c);
        }
        p
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero();
        for (m, c) in &self.terms {
            p.add_term(*m, c * s);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                p.add_term(m1.mul(m2), c1 * c2);
            }
        }
        p
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::constant(1.0), |acc, _| acc.mul(self))
    }

    pub fn eval(&self, values: &[f64; TIME_SLOTS]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(values)).sum()
    }

    pub fn integrate_to_horizon(&self, var: usize, lower: Option<usize>) -> Self {
        let mut p = Self::zero();
        for (m, c) in &self.terms {
            for (n, s) in integrate_monomial(m, var, lower) {
                p.add_term(n, c * s);
            }
        }
        p
    }

    /// Value at `Θ = theta` with all other slots zero.
    pub fn eval_horizon(&self, theta: f64) -> f64 {
        let mut v = [0.0; TIME_SLOTS];
        v[THETA] = theta;
        self.eval(&v)
    }
}

/// `∫_{lower}^{Θ} m d(slot var)`, where `lower` is another slot or zero.
pub fn integrate_monomial(m: &TimeMonomial, var: usize, lower: Option<usize>) -> Vec<(TimeMonomial, f64)> {
    let k = m.get(var) + 1;
    let mut rest = *m;
    rest.0[var] = 0;
    let mut out = vec![(rest.mul(&TimeMonomial::var(THETA, k)), 1.0 / k as f64)];
    if let Some(l) = lower {
        out.push((rest.mul(&TimeMonomial::var(l, k)), -1.0 / k as f64));
    }
    out
}

/// Key of a normal-ordered term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermKey {
    pub delta: MultiIndex,
    pub alpha: MultiIndex,
    pub time: TimeMonomial,
}

/// Finite sum of terms `c · time · X^δ · D^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalOrderedOperator {
    dim: usize,
    base: Option<GroupPoint>,
    terms: BTreeMap<TermKey, f64>,
}

impl NormalOrderedOperator {
    pub fn zero(dim: usize) -> Self {
        Self { dim, base: None, terms: BTreeMap::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::derivative(dim, MultiIndex::zero(dim), 1.0)
    }

    /// `c · D^α`.
    pub fn derivative(dim: usize, alpha: MultiIndex, c: f64) -> Self {
        let mut op = Self::zero(dim);
        op.add_term(TermKey { delta: MultiIndex::zero(dim), alpha, time: TimeMonomial::one() }, c);
        op
    }

    /// Multiplication by `X_j`.
    pub fn multiplication(dim: usize, j: usize) -> Self {
        let mut op = Self::zero(dim);
        op.add_term(
            TermKey { delta: MultiIndex::unit(dim, j), alpha: MultiIndex::zero(dim), time: TimeMonomial::one() },
            1.0,
        );
        op
    }

    /// Tags the operator with the expansion point it was built for.
    pub fn with_base(mut self, base: GroupPoint) -> Self {
        self.base = Some(base);
        self
    }

    pub fn base(&self) -> Option<&GroupPoint> {
        self.base.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &f64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, key: &TermKey) -> f64 {
        self.terms.get(key).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, key: TermKey, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(key).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(&key);
        }
    }

    fn merged_base(&self, other: &Self) -> Result<Option<GroupPoint>> {
        match (&self.base, &other.base) {
            (Some(a), Some(b)) if a != b => Err(Error::BasePointMismatch),
            (Some(a), _) => Ok(Some(a.clone())),
            (None, b) => Ok(b.clone()),
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, 1.0)
    }

    /// `self + s · other`.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = self.clone();
        out.base = self.merged_base(other)?;
        for (k, c) in &other.terms {
            out.add_term(*k, s * c);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self { dim: self.dim, base: self.base.clone(), terms: BTreeMap::new() };
        for (k, c) in &self.terms {
            out.add_term(*k, s * c);
        }
        out
    }

    /// Multiplies every coefficient by a time polynomial.
    pub fn scale_time(&self, p: &TimePolynomial) -> Self {
        let mut out = Self { dim: self.dim, base: self.base.clone(), terms: BTreeMap::new() };
        for (k, c) in &self.terms {
            for (m, pc) in p.terms() {
                out.add_term(TermKey { time: k.time.mul(m), ..*k }, c * pc);
            }
        }
        out
    }

    /// Composition `self ∘ other`, brought back to normal order.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        normal_order_product(self, other)
    }

    /// Drops terms whose coefficient is below `rel` times the largest one.
    pub fn prune(&mut self, rel: f64) {
        let max = self.terms.values().fold(0.0f64, |m, c| m.max(c.abs()));
        let cut = rel * max;
        self.terms.retain(|_, c| c.abs() >= cut && *c != 0.0);
    }

    /// Applies `f` to every time monomial, which may expand it into several.
    pub fn map_time(&self, f: impl Fn(&TimeMonomial) -> Vec<(TimeMonomial, f64)>) -> Self {
        let mut out = Self { dim: self.dim, base: self.base.clone(), terms: BTreeMap::new() };
        for (k, c) in &self.terms {
            for (m, s) in f(&k.time) {
                out.add_term(TermKey { time: m, ..*k }, c * s);
            }
        }
        out
    }

    /// Moves the exponent of one time slot onto another.
    pub fn rename_slot(&self, from: usize, to: usize) -> Self {
        self.map_time(|m| vec![(m.rename(from, to), 1.0)])
    }

    /// Integrates slot `var` over `[lower, Θ]`, with `lower` either another
    /// slot or zero.
    pub fn integrate_to_horizon(&self, var: usize, lower: Option<usize>) -> Self {
        self.map_time(|m| integrate_monomial(m, var, lower))
    }

    /// Sets a time slot to zero.
    pub fn vanish_slot(&self, slot: usize) -> Self {
        self.map_time(|m| if m.get(slot) == 0 { vec![(*m, 1.0)] } else { Vec::new() })
    }

    /// Evaluates all time slots, leaving a constant-coefficient operator.
    pub fn at_times(&self, values: &[f64; TIME_SLOTS]) -> Self {
        self.map_time(|m| vec![(TimeMonomial::one(), m.eval(values))])
    }

    /// Coefficient polynomials grouped by `(δ, α)`.
    pub fn grouped(&self) -> BTreeMap<(MultiIndex, MultiIndex), TimePolynomial> {
        let mut out: BTreeMap<(MultiIndex, MultiIndex), TimePolynomial> = BTreeMap::new();
        for (k, c) in &self.terms {
            out.entry((k.delta, k.alpha)).or_default().add_term(k.time, *c);
        }
        out
    }

    /// Derivative weights `α ↦ Σ c(Θ) X^δ` at horizon `theta` and spatial
    /// increment `increment`; only horizon-only time monomials are allowed.
    pub fn stencil(&self, theta: f64, increment: &[f64]) -> Result<BTreeMap<MultiIndex, f64>> {
        if increment.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: increment.len() });
        }
        let mut out: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (k, c) in &self.terms {
            if !k.time.is_horizon_only() {
                return Err(Error::InvalidInput("operator still contains integration variables".into()));
            }
            let w = c * theta.powi(k.time.get(THETA) as i32) * k.delta.monomial(increment);
            if w != 0.0 {
                *out.entry(k.alpha).or_insert(0.0) += w;
            }
        }
        Ok(out)
    }

    /// The `δ = 0` part of the stencil, i.e. the operator seen at the
    /// expansion point itself, as `(α, Θ-power, coefficient)`.
    pub fn at_base_point(&self) -> Vec<(MultiIndex, u32, f64)> {
        self.terms
            .iter()
            .filter(|(k, _)| k.delta.is_zero() && k.time.is_horizon_only())
            .map(|(k, c)| (k.alpha, k.time.get(THETA), *c))
            .collect()
    }

    /// Applies a constant-coefficient operator (time slots evaluated) to a
    /// polynomial in `x`, with `X` taken as multiplication by `x` itself.
    pub fn apply_to_poly(&self, times: &[f64; TIME_SLOTS], f: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (k, c) in &self.terms {
            let mut g = f.clone();
            for i in 0..self.dim {
                for _ in 0..k.alpha.get(i) {
                    g = crate::poly::Differentiable::dx(&g, i);
                }
            }
            let mut betas = vec![0u32; self.dim];
            for (i, b) in betas.iter_mut().enumerate() {
                *b = k.delta.get(i);
            }
            let x_delta = Poly::monomial(c * k.time.eval(times), 0, &betas);
            out = out.add(&x_delta.mul(&g));
        }
        out
    }

    /// Largest `|α|` appearing.
    pub fn max_derivative_order(&self) -> u32 {
        self.terms.keys().map(|k| k.alpha.height()).max().unwrap_or(0)
    }
}

impl fmt::Display for NormalOrderedOperator {
    /// One term per line: `coeff * Theta^b * Delta-monomial * x^delta * D^alpha`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, c) in &self.terms {
            writeln!(f, "{c:+.16e} * {} * x^{} * D^{}", k.time, k.delta, k.alpha)?;
        }
        Ok(())
    }
}

/// `P ∘ Q` in normal order, using
/// `D^{α1} X^{δ2} = Σ_{ν ≤ α1, ν ≤ δ2} C(α1, ν) δ2!/(δ2 − ν)! X^{δ2 − ν} D^{α1 − ν}`.
pub fn normal_order_product(p: &NormalOrderedOperator, q: &NormalOrderedOperator) -> Result<NormalOrderedOperator> {
    p.check_dim(q)?;
    let base = p.merged_base(q)?;
    let dim = p.dim;
    let mut out = NormalOrderedOperator { dim, base, terms: BTreeMap::new() };
    for (kp, cp) in &p.terms {
        for (kq, cq) in &q.terms {
            let time = kp.time.mul(&kq.time);
            let c = cp * cq;
            if kp.alpha.is_zero() || kq.delta.is_zero() {
                out.add_term(TermKey { delta: kp.delta.add(&kq.delta), alpha: kp.alpha.add(&kq.alpha), time }, c);
                continue;
            }
            let mut bound = MultiIndex::zero(dim);
            for i in 0..dim {
                bound.set(i, kp.alpha.get(i).min(kq.delta.get(i)));
            }
            for nu in bound.lower_set() {
                let mut w = 1.0;
                for i in 0..dim {
                    let n = nu.get(i);
                    if n > 0 {
                        w *= binomial(kp.alpha.get(i), n) * falling(kq.delta.get(i), n);
                    }
                }
                let delta = kp.delta.add(&kq.delta.checked_sub(&nu).expect("nu <= delta"));
                let alpha = kp.alpha.checked_sub(&nu).expect("nu <= alpha").add(&kq.alpha);
                out.add_term(TermKey { delta, alpha, time }, c * w);
            }
        }
    }
    out.prune(PRUNE_TOLERANCE);
    Ok(out)
}
