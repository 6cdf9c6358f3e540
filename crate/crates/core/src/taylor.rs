//! Intrinsic Taylor polynomials graded by `2k + |β|_B`.
//!
//! A jet stores the Lie derivatives `Y^k ∂^β f(ζ)` needed by
//! `T_n(f, ζ)(t,x) = Σ_{2k+|β|_B ≤ n} Y^k∂^β f(ζ) / (k! β!) · (t-s)^k (x - e^{(t-s)B}ξ)^β`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{BlockStructure, GroupPoint};
use crate::index::{factorial, MultiIndex};
use crate::poly::Differentiable;

/// Highest order accepted by [`finite_difference_jet`].
pub const MAX_FD_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicJet {
    base: GroupPoint,
    order: usize,
    coeffs: BTreeMap<(u32, MultiIndex), f64>,
}

impl IntrinsicJet {
    /// Validates that every key satisfies `2k + |β|_B ≤ order` and that the
    /// value entry `(0, 0)` is present.
    pub fn new(
        structure: &BlockStructure,
        base: GroupPoint,
        order: usize,
        coeffs: BTreeMap<(u32, MultiIndex), f64>,
    ) -> Result<Self> {
        let d = structure.dim();
        if base.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: base.dim() });
        }
        for (k, beta) in coeffs.keys() {
            if beta.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: beta.dim() });
            }
            let g = 2 * k + structure.b_length(beta);
            if g as usize > order {
                return Err(Error::JetMismatch(format!("entry Y^{k}∂^{beta} has intrinsic order {g} > {order}")));
            }
        }
        if !coeffs.contains_key(&(0, MultiIndex::zero(d))) {
            return Err(Error::JetMismatch("jet is missing the value entry".into()));
        }
        Ok(Self { base, order, coeffs })
    }

    pub fn base(&self) -> &GroupPoint {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.coeffs[&(0, MultiIndex::zero(self.base.dim()))]
    }

    pub fn get(&self, k: u32, beta: &MultiIndex) -> f64 {
        self.coeffs.get(&(k, *beta)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, MultiIndex, f64)> + '_ {
        self.coeffs.iter().map(|(&(k, b), &v)| (k, b, v))
    }

    /// Entries of intrinsic order exactly `m`, i.e. `2k + |β|_B = m`.
    pub fn graded<'a>(&'a self, structure: &'a BlockStructure, m: usize) -> impl Iterator<Item = (u32, MultiIndex, f64)> + 'a {
        self.entries().filter(move |(k, b, _)| (2 * k + structure.b_length(b)) as usize == m)
    }

    /// The same jet restricted to order `m ≤ order`.
    pub fn truncate(&self, structure: &BlockStructure, m: usize) -> Result<Self> {
        if m > self.order {
            return Err(Error::InsufficientJet { needed: m, available: self.order });
        }
        let coeffs = self
            .coeffs
            .iter()
            .filter(|((k, b), _)| (2 * k + structure.b_length(b)) as usize <= m)
            .map(|(k, v)| (*k, *v))
            .collect();
        Ok(Self { base: self.base.clone(), order: m, coeffs })
    }
}

/// All keys `(k, β)` with `2k + |β|_B ≤ n`.
pub fn jet_keys(structure: &BlockStructure, n: usize) -> Vec<(u32, MultiIndex)> {
    let mut out = Vec::new();
    for k in 0..=(n / 2) as u32 {
        let budget = n as u32 - 2 * k;
        for beta in MultiIndex::enumerate_weighted(structure.dim(), structure.sigma(), budget) {
            out.push((k, beta));
        }
    }
    out
}

/// Exact jet of a function with closed-form derivatives.
pub fn exact_jet<F: Differentiable>(f: &F, structure: &BlockStructure, base: &GroupPoint, n: usize) -> IntrinsicJet {
    let mut coeffs = BTreeMap::new();
    for (k, beta) in jet_keys(structure, n) {
        let mut g = f.clone();
        for (i, b) in beta.entries().enumerate() {
            for _ in 0..b {
                g = g.dx(i);
            }
        }
        for _ in 0..k {
            g = g.lie_y(structure);
        }
        coeffs.insert((k, beta), g.eval(base));
    }
    IntrinsicJet { base: base.clone(), order: n, coeffs }
}

/// Evaluates `T_n(f, ζ)(z)`.
pub fn taylor_eval(jet: &IntrinsicJet, structure: &BlockStructure, z: &GroupPoint) -> f64 {
    let dt = z.t - jet.base.t;
    let inc = &z.x - structure.exp(dt) * &jet.base.x;
    let inc = inc.as_slice();
    jet.entries()
        .map(|(k, beta, c)| c / (factorial(k) * beta.factorial()) * dt.powi(k as i32) * beta.monomial(inc))
        .sum()
}

/// `T_n(f,ζ)(z) − T_{n−1}(f,ζ)(z)` for jets of consecutive orders at the same base point.
pub fn taylor_increment(
    jet_n: &IntrinsicJet,
    jet_prev: &IntrinsicJet,
    structure: &BlockStructure,
    z: &GroupPoint,
) -> Result<f64> {
    if jet_n.base != jet_prev.base {
        return Err(Error::BasePointMismatch);
    }
    if jet_prev.order + 1 != jet_n.order {
        return Err(Error::JetMismatch(format!(
            "increment needs orders n and n-1, got {} and {}",
            jet_n.order, jet_prev.order
        )));
    }
    Ok(taylor_eval(jet_n, structure, z) - taylor_eval(jet_prev, structure, z))
}

#[derive(Clone, Copy)]
enum Direction {
    Drift,
    Coord(usize),
}

/// Jet by nested central differences with one Richardson step.
///
/// Spatial derivatives move along `x + δe_i`; the drift derivative moves along
/// the integral curve `e^{δY}(t,x) = (t+δ, e^{δB}x)`. The derivative data is
/// `Y^k(∂^β f)`, so drift differences are the outermost levels.
pub fn finite_difference_jet<F>(f: F, structure: &BlockStructure, base: &GroupPoint, n: usize) -> Result<IntrinsicJet>
where
    F: Fn(&GroupPoint) -> f64,
{
    if n > MAX_FD_ORDER {
        return Err(Error::JetOrderTooHigh(n));
    }
    if base.dim() != structure.dim() {
        return Err(Error::DimensionMismatch { expected: structure.dim(), got: base.dim() });
    }
    let scale = structure.homogeneous_norm(base).max(1.0);
    let mut coeffs = BTreeMap::new();
    for (k, beta) in jet_keys(structure, n) {
        let mut ops = vec![Direction::Drift; k as usize];
        for (i, b) in beta.entries().enumerate() {
            ops.extend(std::iter::repeat_n(Direction::Coord(i), b as usize));
        }
        let v = if ops.is_empty() {
            f(base)
        } else {
            let h = f64::EPSILON.powf(1.0 / (ops.len() as f64 + 4.0)) * scale;
            let coarse = nested_difference(&f, structure, &ops, base, h);
            let fine = nested_difference(&f, structure, &ops, base, h / 2.0);
            (4.0 * fine - coarse) / 3.0
        };
        coeffs.insert((k, beta), v);
    }
    Ok(IntrinsicJet { base: base.clone(), order: n, coeffs })
}

fn nested_difference<F>(f: &F, structure: &BlockStructure, ops: &[Direction], z: &GroupPoint, h: f64) -> f64
where
    F: Fn(&GroupPoint) -> f64,
{
    let Some((&first, rest)) = ops.split_first() else {
        return f(z);
    };
    let shift = |delta: f64| match first {
        Direction::Drift => GroupPoint { t: z.t + delta, x: structure.exp(delta) * &z.x },
        Direction::Coord(i) => {
            let mut w = z.clone();
            w.x[i] += delta;
            w
        }
    };
    let plus = nested_difference(f, structure, rest, &shift(h), h);
    let minus = nested_difference(f, structure, rest, &shift(-h), h);
    (plus - minus) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{ExpPoly, Poly};

    fn prototype_a11() -> Poly {
        // a11 = 0.09 + 0.3 x1 + 0.2 x1^2 + 0.1 x2 + 0.05 t + 0.4 t x1
        Poly::constant(0.09)
            .add(&Poly::x(0).scale(0.3))
            .add(&Poly::monomial(0.2, 0, &[2, 0]))
            .add(&Poly::x(1).scale(0.1))
            .add(&Poly::t().scale(0.05))
            .add(&Poly::monomial(0.4, 1, &[1, 0]))
    }

    #[test]
    fn order_zero_is_constant() {
        let b = BlockStructure::asian();
        let f = prototype_a11();
        let zeta = GroupPoint::from_slice(0.1, &[1.0, 0.5]);
        let jet = exact_jet(&f, &b, &zeta, 0);
        let z = GroupPoint::from_slice(0.7, &[3.0, -2.0]);
        assert_eq!(taylor_eval(&jet, &b, &z), f.eval(&zeta));
        assert_eq!(taylor_eval(&jet, &b, &zeta), jet.value());
    }

    #[test]
    fn second_order_matches_prototype_display() {
        let b = BlockStructure::asian();
        let f = prototype_a11();
        let (s, xi1, xi2) = (0.1, 1.0, 0.5);
        let zeta = GroupPoint::from_slice(s, &[xi1, xi2]);
        let jet = exact_jet(&f, &b, &zeta, 2);
        let z = GroupPoint::from_slice(0.25, &[1.2, 0.4]);
        let (t, x1) = (z.t, z.x[0]);
        let d1 = 0.3 + 0.4 * xi1 + 0.4 * s;
        let d11 = 0.4;
        // (∂_s + ξ1 ∂_ξ2) a11 = (0.05 + 0.4 ξ1) + ξ1 · 0.1
        let ya = 0.05 + 0.4 * xi1 + xi1 * 0.1;
        let expected = f.eval(&zeta) + (x1 - xi1) * d1 + (x1 - xi1).powi(2) / 2.0 * d11 + (t - s) * ya;
        assert!((taylor_eval(&jet, &b, &z) - expected).abs() < 1e-14);
    }

    #[test]
    fn average_coordinate_enters_at_third_order() {
        let b = BlockStructure::asian();
        let f = Poly::x(1);
        let zeta = GroupPoint::from_slice(0.2, &[0.7, 1.3]);
        let z = GroupPoint::from_slice(0.5, &[0.9, 2.0]);
        let t2 = taylor_eval(&exact_jet(&f, &b, &zeta, 2), &b, &z);
        assert!((t2 - (1.3 + 0.3 * 0.7)).abs() < 1e-14);
        let t3 = taylor_eval(&exact_jet(&f, &b, &zeta, 3), &b, &z);
        assert!((t3 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn increments() {
        let b = BlockStructure::asian();
        let zeta = GroupPoint::from_slice(0.1, &[1.0, 0.5]);
        let z = GroupPoint::from_slice(0.4, &[1.3, 0.2]);
        let c = Poly::constant(2.5);
        for n in 1..4 {
            let inc = taylor_increment(&exact_jet(&c, &b, &zeta, n), &exact_jet(&c, &b, &zeta, n - 1), &b, &z).unwrap();
            assert_eq!(inc, 0.0);
        }
        let f = prototype_a11();
        let j1 = exact_jet(&f, &b, &zeta, 1);
        let j0 = exact_jet(&f, &b, &zeta, 0);
        let inc = taylor_increment(&j1, &j0, &b, &z).unwrap();
        let d1 = 0.3 + 0.4 + 0.04;
        assert!((inc - 0.3 * d1).abs() < 1e-14);
        let j3 = exact_jet(&f, &b, &zeta, 3);
        let j2 = exact_jet(&f, &b, &zeta, 2);
        let inc3 = taylor_increment(&j3, &j2, &b, &z).unwrap();
        // order-3 terms: (x2 - ξ2 - (t-s)ξ1) ∂_ξ2 a + (t-s)(x1-ξ1) Y∂_ξ1 a
        let y_d1 = 0.4; // Y(0.3 + 0.4 x1 + 0.4 t) = 0.4
        let expected = (0.2 - 0.5 - 0.3 * 1.0) * 0.1 + 0.3 * 0.3 * y_d1;
        assert!((inc3 - expected).abs() < 1e-14);

        let other = exact_jet(&f, &b, &z, 0);
        assert_eq!(taylor_increment(&j1, &other, &b, &z), Err(Error::BasePointMismatch));
        assert!(taylor_increment(&j3, &j1, &b, &z).is_err());
    }

    #[test]
    fn jet_validation() {
        let b = BlockStructure::asian();
        let zeta = GroupPoint::from_slice(0.0, &[1.0, 0.0]);
        let mut coeffs = BTreeMap::new();
        coeffs.insert((0, MultiIndex::zero(2)), 1.0);
        coeffs.insert((0, MultiIndex::from_slice(&[0, 1])), 1.0);
        assert!(IntrinsicJet::new(&b, zeta.clone(), 2, coeffs.clone()).is_err());
        assert!(IntrinsicJet::new(&b, zeta.clone(), 3, coeffs.clone()).is_ok());
        coeffs.remove(&(0, MultiIndex::zero(2)));
        assert!(IntrinsicJet::new(&b, zeta, 3, coeffs).is_err());
    }

    #[test]
    fn finite_differences_reproduce_polynomial_jets() {
        let b = BlockStructure::asian();
        let f = prototype_a11().add(&Poly::monomial(0.05, 0, &[4, 0])).add(&Poly::monomial(-0.1, 2, &[0, 0]));
        let zeta = GroupPoint::from_slice(0.1, &[0.8, 0.4]);
        let exact = exact_jet(&f, &b, &zeta, 4);
        let fd = finite_difference_jet(|z| f.eval(z), &b, &zeta, 4).unwrap();
        for (k, beta, v) in exact.entries() {
            let w = fd.get(k, &beta);
            assert!((v - w).abs() < 1e-6, "Y^{k} ∂^{beta}: exact {v}, fd {w}");
        }
        assert!(matches!(finite_difference_jet(|z| f.eval(z), &b, &zeta, 5), Err(Error::JetOrderTooHigh(5))));
    }

    #[test]
    fn finite_differences_black_scholes_curvature() {
        let b = BlockStructure::asian();
        let sig = 0.3;
        let zeta = GroupPoint::from_slice(0.0, &[1.1, 0.2]);
        let fd = finite_difference_jet(|z| sig * sig * z.x[0] * z.x[0], &b, &zeta, 2).unwrap();
        assert!((fd.get(0, &MultiIndex::from_slice(&[2, 0])) - 2.0 * sig * sig).abs() < 1e-8);
        assert!(fd.get(1, &MultiIndex::zero(2)).abs() < 1e-9);
    }

    #[test]
    fn finite_differences_on_smooth_function() {
        let b = BlockStructure::asian();
        let f = ExpPoly::exp_of(Poly::x(0).scale(0.5).add(&Poly::x(1).scale(-0.3)).add(&Poly::t().scale(0.2)));
        let zeta = GroupPoint::from_slice(0.1, &[0.4, -0.2]);
        let exact = exact_jet(&f, &b, &zeta, 4);
        let fd = finite_difference_jet(|z| f.eval(z), &b, &zeta, 4).unwrap();
        for (k, beta, v) in exact.entries() {
            assert!((v - fd.get(k, &beta)).abs() < 1e-6);
        }
    }
}
