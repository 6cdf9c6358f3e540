//! Polynomials in `(t, x)` and exponential-polynomial functions with exact
//! derivatives, used as closed-form derivative oracles for coefficients and
//! test functions.

use std::collections::BTreeMap;

use crate::geometry::{BlockStructure, GroupPoint};
use crate::index::MAX_DIM;

type Exponents = [u8; MAX_DIM + 1];

/// Functions of `(t, x)` closed under `∂_{x_i}` and the drift field
/// `Y = ∂_t + ⟨Bx, ∇⟩`.
pub trait Differentiable: Clone + Send + Sync {
    fn eval(&self, z: &GroupPoint) -> f64;
    fn dx(&self, i: usize) -> Self;
    fn lie_y(&self, b: &BlockStructure) -> Self;
}

/// A real polynomial in `t` (variable 0) and `x_1..x_d` (variables 1..=d).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    terms: BTreeMap<Exponents, f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term([0; MAX_DIM + 1], c);
        p
    }

    /// The monomial `c · t^{k} · x^{β}` with `beta[i]` the power of `x_{i+1}`.
    pub fn monomial(c: f64, k: u32, beta: &[u32]) -> Self {
        let mut e = [0u8; MAX_DIM + 1];
        e[0] = k as u8;
        for (i, &b) in beta.iter().enumerate() {
            e[i + 1] = b as u8;
        }
        let mut p = Self::zero();
        p.add_term(e, c);
        p
    }

    /// The coordinate `x_i` (zero-based).
    pub fn x(i: usize) -> Self {
        let mut beta = [0u32; MAX_DIM];
        beta[i] = 1;
        Self::monomial(1.0, 0, &beta)
    }

    pub fn t() -> Self {
        Self::monomial(1.0, 1, &[])
    }

    fn add_term(&mut self, e: Exponents, c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(e).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.remove(&e);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterates `(time power, spatial powers, coefficient)`.
    pub fn terms(&self) -> impl Iterator<Item = (u32, Vec<u32>, f64)> + '_ {
        self.terms.iter().map(|(e, &c)| (e[0] as u32, e[1..].iter().map(|&v| v as u32).collect(), c))
    }

    pub fn eval_parts(&self, t: f64, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, &c)| {
                let mut v = c * t.powi(e[0] as i32);
                for (i, &p) in e[1..].iter().enumerate() {
                    if p > 0 {
                        v *= x[i].powi(p as i32);
                    }
                }
                v
            })
            .sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero();
        for (e, &c) in &self.terms {
            p.add_term(*e, c * s);
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (e, &c) in &other.terms {
            p.add_term(*e, c);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero();
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let mut e = [0u8; MAX_DIM + 1];
                for k in 0..=MAX_DIM {
                    e[k] = ea[k] + eb[k];
                }
                p.add_term(e, ca * cb);
            }
        }
        p
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::constant(1.0), |acc, _| acc.mul(self))
    }

    fn partial_var(&self, var: usize) -> Self {
        let mut p = Self::zero();
        for (e, &c) in &self.terms {
            if e[var] > 0 {
                let mut e2 = *e;
                e2[var] -= 1;
                p.add_term(e2, c * e[var] as f64);
            }
        }
        p
    }

    pub fn dt(&self) -> Self {
        self.partial_var(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().map(|&v| v as u32).sum()).max().unwrap_or(0)
    }
}

impl Differentiable for Poly {
    fn eval(&self, z: &GroupPoint) -> f64 {
        self.eval_parts(z.t, z.x.as_slice())
    }

    fn dx(&self, i: usize) -> Self {
        self.partial_var(i + 1)
    }

    fn lie_y(&self, b: &BlockStructure) -> Self {
        let bm = b.matrix();
        let d = b.dim();
        let mut out = self.dt();
        for i in 0..d {
            let di = self.dx(i);
            if di.is_zero() {
                continue;
            }
            // (Bx)_i = Σ_j B_ij x_j
            let mut bx = Poly::zero();
            for j in 0..d {
                if bm[(i, j)] != 0.0 {
                    bx = bx.add(&Poly::x(j).scale(bm[(i, j)]));
                }
            }
            out = out.add(&di.mul(&bx));
        }
        out
    }
}

/// `q(t,x) · exp(p(t,x))` for polynomials `p`, `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpPoly {
    pub q: Poly,
    pub p: Poly,
}

impl ExpPoly {
    pub fn new(q: Poly, p: Poly) -> Self {
        Self { q, p }
    }

    pub fn exp_of(p: Poly) -> Self {
        Self { q: Poly::constant(1.0), p }
    }
}

impl Differentiable for ExpPoly {
    fn eval(&self, z: &GroupPoint) -> f64 {
        self.q.eval(z) * self.p.eval(z).exp()
    }

    fn dx(&self, i: usize) -> Self {
        Self { q: self.q.dx(i).add(&self.q.mul(&self.p.dx(i))), p: self.p.clone() }
    }

    fn lie_y(&self, b: &BlockStructure) -> Self {
        Self { q: self.q.lie_y(b).add(&self.q.mul(&self.p.lie_y(b))), p: self.p.clone() }
    }
}
