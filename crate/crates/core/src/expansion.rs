//! Expansion operators `G_n` and `L_n` built from Taylor jets of the
//! coefficients.
//!
//! `G_n(Δ)` collects the order-`n` part of the coefficient increment, with
//! the spatial increment replaced by the shift operators `M̃_j` and the
//! derivatives by `W_i`. The correction operators are
//! `L_n = Σ_h Σ_{i_1+…+i_h=n} ∫_{0<Δ_1<…<Δ_h<Θ} G_{i_1}(Δ_1)…G_{i_h}(Δ_h)`,
//! computed through `R_m(ℓ) = Σ_i ∫_ℓ^Θ G_i(Δ) R_{m-i}(Δ) dΔ`, `L_n = R_n(0)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::algebra::{NormalOrderedOperator, TermKey, TimeMonomial, TimePolynomial, TIME_SLOTS};
use crate::error::{Error, Result};
use crate::geometry::{BlockStructure, GroupPoint};
use crate::index::MultiIndex;
use crate::model::CoefficientModel;
use crate::taylor::{jet_keys, IntrinsicJet};

/// Highest expansion order supported.
pub const MAX_ORDER: usize = 4;

const LOWER: usize = 1;
const INNER: usize = 2;

/// `W_i(Δ) = Σ_l (e^{-ΔB*})_{il} ∂_l`, with `Δ` in time slot `slot`.
pub fn w_operator(structure: &BlockStructure, i: usize, slot: usize) -> NormalOrderedOperator {
    let d = structure.dim();
    let e = structure.exp_poly().reflect().transpose();
    let mut op = NormalOrderedOperator::zero(d);
    for l in 0..d {
        for (k, c) in e.entry(i, l).into_iter().enumerate() {
            op.add_term(
                TermKey { delta: MultiIndex::zero(d), alpha: MultiIndex::unit(d, l), time: TimeMonomial::var(slot, k as u32) },
                c,
            );
        }
    }
    op
}

/// `M̃_j(Δ) = Σ_l (e^{ΔB})_{jl} X_l + Σ_l (C(Δ) e^{-ΔB*})_{jl} ∂_l`.
///
/// Applied to the leading term this reproduces multiplication of the kernel
/// by the forward coordinate `y_j`, expressed through the backward variable.
pub fn m_operator(structure: &BlockStructure, a0: &DMatrix<f64>, j: usize, slot: usize) -> NormalOrderedOperator {
    let d = structure.dim();
    let e = structure.exp_poly();
    let shift = structure.covariance_poly(a0).mul(&e.reflect().transpose());
    let mut op = NormalOrderedOperator::zero(d);
    for l in 0..d {
        for (k, c) in e.entry(j, l).into_iter().enumerate() {
            op.add_term(
                TermKey { delta: MultiIndex::unit(d, l), alpha: MultiIndex::zero(d), time: TimeMonomial::var(slot, k as u32) },
                c,
            );
        }
        for (k, c) in shift.entry(j, l).into_iter().enumerate() {
            op.add_term(
                TermKey { delta: MultiIndex::zero(d), alpha: MultiIndex::unit(d, l), time: TimeMonomial::var(slot, k as u32) },
                c,
            );
        }
    }
    op
}

/// Jets of the coefficients at a common base point.
#[derive(Debug, Clone)]
pub struct CoefficientJets {
    pub diffusion: Vec<Vec<IntrinsicJet>>,
    pub drift: Option<Vec<IntrinsicJet>>,
}

impl CoefficientJets {
    /// Extracts jets of order `order` (drift to `order - 1`) from a model.
    pub fn from_model(model: &dyn CoefficientModel, base: &GroupPoint, order: usize) -> Result<Self> {
        let p0 = model.structure().p0();
        let mut diffusion: Vec<Vec<Option<IntrinsicJet>>> = vec![vec![None; p0]; p0];
        for i in 0..p0 {
            for j in i..p0 {
                let jet = model.diffusion_jet(i, j, base, order)?;
                diffusion[j][i] = Some(jet.clone());
                diffusion[i][j] = Some(jet);
            }
        }
        let diffusion = diffusion.into_iter().map(|r| r.into_iter().map(|j| j.expect("filled")).collect()).collect();
        let drift = if model.has_drift() && order >= 1 {
            Some((0..p0).map(|i| model.drift_jet(i, base, order - 1)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(Self { diffusion, drift })
    }

    fn base(&self) -> &GroupPoint {
        self.diffusion[0][0].base()
    }

    /// Frozen diffusion block at the base point.
    pub fn frozen_diffusion(&self) -> DMatrix<f64> {
        let p0 = self.diffusion.len();
        DMatrix::from_fn(p0, p0, |i, j| self.diffusion[i][j].value())
    }
}

/// Builder for `G_n` and `L_n` at a fixed base point `z̄`.
///
/// `tau = t - t̄` is the offset of the pricing time from the base time; it is
/// zero when expanding at the current point.
#[derive(Debug, Clone)]
pub struct OperatorBuilder {
    structure: BlockStructure,
    base: GroupPoint,
    tau: f64,
    a0: DMatrix<f64>,
    jets: CoefficientJets,
    order: usize,
}

impl OperatorBuilder {
    pub fn new(structure: BlockStructure, jets: CoefficientJets, tau: f64) -> Result<Self> {
        let p0 = structure.p0();
        if jets.diffusion.len() != p0 || jets.diffusion.iter().any(|r| r.len() != p0) {
            return Err(Error::DimensionMismatch { expected: p0, got: jets.diffusion.len() });
        }
        let base = jets.base().clone();
        if base.dim() != structure.dim() {
            return Err(Error::DimensionMismatch { expected: structure.dim(), got: base.dim() });
        }
        let mut order = usize::MAX;
        for jet in jets.diffusion.iter().flatten() {
            if jet.base() != &base {
                return Err(Error::BasePointMismatch);
            }
            order = order.min(jet.order());
        }
        if let Some(drift) = &jets.drift {
            if drift.len() != p0 {
                return Err(Error::DimensionMismatch { expected: p0, got: drift.len() });
            }
            for jet in drift {
                if jet.base() != &base {
                    return Err(Error::BasePointMismatch);
                }
                order = order.min(jet.order() + 1);
            }
        }
        let a0 = jets.frozen_diffusion();
        Ok(Self { structure, base, tau, a0, jets, order })
    }

    pub fn from_model(model: &dyn CoefficientModel, base: GroupPoint, t: f64, order: usize) -> Result<Self> {
        let jets = CoefficientJets::from_model(model, &base, order)?;
        Self::new(model.structure().clone(), jets, t - base.t)
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn base(&self) -> &GroupPoint {
        &self.base
    }

    pub fn frozen_diffusion(&self) -> &DMatrix<f64> {
        &self.a0
    }

    /// Largest `n` for which the jets suffice.
    pub fn available_order(&self) -> usize {
        self.order
    }

    /// `G_n(Δ)` with `Δ` in time slot `slot`.
    pub fn g(&self, n: usize, slot: usize) -> Result<NormalOrderedOperator> {
        if n == 0 || n > MAX_ORDER {
            return Err(Error::OrderTooHigh { requested: n, max: MAX_ORDER });
        }
        if n > self.order {
            return Err(Error::InsufficientJet { needed: n, available: self.order });
        }
        let d = self.structure.dim();
        let p0 = self.structure.p0();
        let ms: Vec<_> = (0..d).map(|j| m_operator(&self.structure, &self.a0, j, slot)).collect();
        let ws: Vec<_> = (0..p0).map(|i| w_operator(&self.structure, i, slot)).collect();
        let mut powers: BTreeMap<(usize, u32), NormalOrderedOperator> = BTreeMap::new();
        let shift = TimePolynomial::univariate(slot, &[self.tau, 1.0]);

        let increment = |k: u32, beta: &MultiIndex, powers: &mut BTreeMap<(usize, u32), NormalOrderedOperator>| -> Result<NormalOrderedOperator> {
            let mut op = NormalOrderedOperator::identity(d);
            for j in 0..d {
                let e = beta.get(j);
                if e == 0 {
                    continue;
                }
                if let std::collections::btree_map::Entry::Vacant(slot) = powers.entry((j, e)) {
                    let mut p = NormalOrderedOperator::identity(d);
                    for _ in 0..e {
                        p = p.compose(&ms[j])?;
                    }
                    slot.insert(p);
                }
                op = op.compose(&powers[&(j, e)])?;
            }
            Ok(op.scale_time(&shift.pow(k)).scale(1.0 / (crate::index::factorial(k) * beta.factorial())))
        };

        let mut out = NormalOrderedOperator::zero(d);
        for (k, beta) in jet_keys(&self.structure, n) {
            if 2 * k as usize + self.structure.b_length(&beta) as usize != n {
                continue;
            }
            let mut second = NormalOrderedOperator::zero(d);
            for i in 0..p0 {
                for j in 0..p0 {
                    let c = self.jets.diffusion[i][j].get(k, &beta);
                    if c != 0.0 {
                        second = second.add_scaled(&ws[i].compose(&ws[j])?, 0.5 * c)?;
                    }
                }
            }
            if !second.is_empty() {
                out = out.add(&increment(k, &beta, &mut powers)?.compose(&second)?)?;
            }
        }
        if let Some(drift) = &self.jets.drift {
            for (k, beta) in jet_keys(&self.structure, n - 1) {
                if 2 * k as usize + self.structure.b_length(&beta) as usize != n - 1 {
                    continue;
                }
                let mut first = NormalOrderedOperator::zero(d);
                for (i, jet) in drift.iter().enumerate() {
                    let c = jet.get(k, &beta);
                    if c != 0.0 {
                        first = first.add_scaled(&ws[i], c)?;
                    }
                }
                if !first.is_empty() {
                    out = out.add(&increment(k, &beta, &mut powers)?.compose(&first)?)?;
                }
            }
        }
        out.prune(crate::algebra::PRUNE_TOLERANCE);
        Ok(out.with_base(self.base.clone()))
    }

    /// `L_1, …, L_n` through the nested-integral recursion.
    pub fn l_operators(&self, n: usize) -> Result<Vec<NormalOrderedOperator>> {
        if n > MAX_ORDER {
            return Err(Error::OrderTooHigh { requested: n, max: MAX_ORDER });
        }
        let d = self.structure.dim();
        let gs = (1..=n).map(|i| self.g(i, INNER)).collect::<Result<Vec<_>>>()?;
        // r[m] = R_m(ℓ) with ℓ in slot LOWER
        let mut r: Vec<NormalOrderedOperator> = vec![NormalOrderedOperator::identity(d).with_base(self.base.clone())];
        for m in 1..=n {
            let mut acc = NormalOrderedOperator::zero(d).with_base(self.base.clone());
            for i in 1..=m {
                let inner = r[m - i].rename_slot(LOWER, INNER);
                let prod = gs[i - 1].compose(&inner)?;
                acc = acc.add(&prod.integrate_to_horizon(INNER, Some(LOWER)))?;
            }
            acc.prune(crate::algebra::PRUNE_TOLERANCE);
            r.push(acc);
        }
        Ok(r.into_iter().skip(1).map(|op| op.vanish_slot(LOWER)).collect())
    }

    pub fn l(&self, n: usize) -> Result<NormalOrderedOperator> {
        if n == 0 {
            return Ok(NormalOrderedOperator::identity(self.structure.dim()).with_base(self.base.clone()));
        }
        Ok(self.l_operators(n)?.pop().expect("n >= 1"))
    }

    /// `L_n` summed directly over compositions of `n`; used as a cross-check
    /// of the recursion.
    pub fn l_direct(&self, n: usize) -> Result<NormalOrderedOperator> {
        if n == 0 || n > TIME_SLOTS - 1 {
            return Err(Error::OrderTooHigh { requested: n, max: TIME_SLOTS - 1 });
        }
        let d = self.structure.dim();
        let mut out = NormalOrderedOperator::zero(d).with_base(self.base.clone());
        for comp in compositions(n) {
            let h = comp.len();
            let mut prod = NormalOrderedOperator::identity(d);
            for (pos, &i) in comp.iter().enumerate() {
                prod = prod.compose(&self.g(i, pos + 1)?)?;
            }
            for slot in (1..=h).rev() {
                let lower = if slot > 1 { Some(slot - 1) } else { None };
                prod = prod.integrate_to_horizon(slot, lower);
            }
            out = out.add(&prod)?;
        }
        out.prune(crate::algebra::PRUNE_TOLERANCE);
        Ok(out)
    }
}

/// Ordered compositions of `n` into positive parts.
pub fn compositions(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for mut rest in compositions(n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// `∫_{0<Δ_1<…<Δ_h<Θ} Π Δ_i^{k_i}` as a polynomial in `Θ`.
pub fn simplex_integral(exponents: &[u32]) -> Result<TimePolynomial> {
    let h = exponents.len();
    if h > TIME_SLOTS - 1 {
        return Err(Error::OrderTooHigh { requested: h, max: TIME_SLOTS - 1 });
    }
    let mut m = TimeMonomial::one();
    for (i, &k) in exponents.iter().enumerate() {
        m = m.mul(&TimeMonomial::var(i + 1, k));
    }
    let mut p = TimePolynomial::monomial(1.0, m);
    for slot in (1..=h).rev() {
        p = p.integrate_to_horizon(slot, if slot > 1 { Some(slot - 1) } else { None });
    }
    Ok(p)
}

/// Convenience wrapper: `G_n` in slot 1 for the given jets.
pub fn build_g(structure: &BlockStructure, jets: &CoefficientJets, tau: f64, n: usize) -> Result<NormalOrderedOperator> {
    OperatorBuilder::new(structure.clone(), jets.clone(), tau)?.g(n, 1)
}

/// Convenience wrapper: `L_n` for the given jets.
pub fn build_l(structure: &BlockStructure, jets: &CoefficientJets, tau: f64, n: usize) -> Result<NormalOrderedOperator> {
    OperatorBuilder::new(structure.clone(), jets.clone(), tau)?.l(n)
}

/// Horizon powers appearing in the base-point stencil of an operator.
pub fn theta_powers(op: &NormalOrderedOperator) -> BTreeMap<MultiIndex, Vec<u32>> {
    let mut out: BTreeMap<MultiIndex, Vec<u32>> = BTreeMap::new();
    for (alpha, b, _) in op.at_base_point() {
        out.entry(alpha).or_default().push(b);
    }
    out
}
