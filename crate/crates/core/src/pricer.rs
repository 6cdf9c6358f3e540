//! Expansion prices `U_N = u_0 + Σ_{n≤N} L_n u_0` and their spatial
//! derivatives.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;

use crate::algebra::NormalOrderedOperator;
use crate::error::{Error, Result};
use crate::expansion::{OperatorBuilder, MAX_ORDER};
use crate::geometry::{BlockStructure, GroupPoint};
use crate::index::MultiIndex;
use crate::kernel::{GaussianKernel, LeadingTerm, LeadingValues};
use crate::model::CoefficientModel;
use crate::payoff::Payoff;

/// Where the coefficients are expanded.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum BasePoint {
    /// `z̄ = (t, x)`, the pricing point.
    #[default]
    Current,
    /// `z̄ = (T, x)`.
    Terminal,
    /// A fixed point, e.g. to differentiate with the expansion point frozen.
    Fixed(GroupPoint),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PricingOptions {
    pub base: BasePoint,
    /// Per-axis rule size for payoffs without a closed-form leading term.
    pub quadrature_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Number of derivatives in the stencil of each `u_n`, `n ≥ 1`.
    pub stencil_sizes: Vec<usize>,
    /// Number of normal-ordered terms of each `L_n`.
    pub operator_terms: Vec<usize>,
    pub closed_form: bool,
    pub quadrature_converged: bool,
    pub max_quadrature_change: f64,
    pub outside_domain: bool,
    /// Greeks requested with `|α|_B > N`.
    pub greeks_beyond_order: Vec<MultiIndex>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionResult {
    pub base: GroupPoint,
    /// `u_0, …, u_N`.
    pub orders: Vec<f64>,
    /// `U_0, …, U_N`.
    pub cumulative: Vec<f64>,
    pub greeks: BTreeMap<MultiIndex, f64>,
    pub diagnostics: Diagnostics,
    pub payoff_exponent: f64,
    /// `(N + k + 1) / 2`.
    pub predicted_order: f64,
}

impl ExpansionResult {
    pub fn value(&self) -> f64 {
        *self.cumulative.last().expect("at least u_0")
    }

    pub fn order(&self) -> usize {
        self.orders.len() - 1
    }
}

/// `(N + k + 1) / 2`, the short-time exponent of the error of `U_N`.
pub fn error_order_estimate(structure: &BlockStructure, k: f64, n: usize) -> Result<f64> {
    let max = (2 * structure.depth() + 1) as f64;
    if !(0.0..=max).contains(&k) {
        return Err(Error::InvalidInput(format!("payoff exponent {k} outside [0, {max}]")));
    }
    Ok((n as f64 + k + 1.0) / 2.0)
}

/// Whether the same exponent also governs the small-diffusion regime in
/// `M θ`, which needs coefficients depending only on the first block.
pub fn small_vol_applicable(model: &dyn CoefficientModel) -> bool {
    model.depends_only_on_diffusive_block()
}

/// A built expansion at one state, reusable for several derivative queries.
pub struct Expansion<'a> {
    structure: BlockStructure,
    payoff: &'a Payoff,
    lead: LeadingTerm<'a>,
    operators: Vec<NormalOrderedOperator>,
    base: GroupPoint,
    theta: f64,
    x: DVector<f64>,
    increment: Vec<f64>,
    outside_domain: bool,
}

impl<'a> Expansion<'a> {
    pub fn new(
        model: &dyn CoefficientModel,
        payoff: &'a Payoff,
        t: f64,
        maturity: f64,
        x: &[f64],
        order: usize,
        options: &PricingOptions,
    ) -> Result<Self> {
        let structure = model.structure().clone();
        let d = structure.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if !(maturity > t) {
            return Err(Error::NonPositiveHorizon { t, maturity });
        }
        if order > MAX_ORDER {
            return Err(Error::OrderTooHigh { requested: order, max: MAX_ORDER });
        }
        payoff.validate(structure.depth(), d)?;
        let xv = DVector::from_column_slice(x);
        let base = match &options.base {
            BasePoint::Current => GroupPoint::new(t, xv.clone()),
            BasePoint::Terminal => GroupPoint::new(maturity, xv.clone()),
            BasePoint::Fixed(z) => {
                if z.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: z.dim() });
                }
                z.clone()
            }
        };
        let builder = OperatorBuilder::from_model(model, base.clone(), t, order)?;
        let theta = maturity - t;
        let kernel = GaussianKernel::new(&structure, builder.frozen_diffusion(), theta)?;
        let lead = LeadingTerm::new(kernel, payoff, options.quadrature_points);
        let operators = if order == 0 { Vec::new() } else { builder.l_operators(order)? };
        let increment = (&xv - structure.exp(t - base.t) * &base.x).iter().copied().collect();
        let outside_domain = !model.in_domain(&xv);
        Ok(Self { structure, payoff, lead, operators, base, theta, x: xv, increment, outside_domain })
    }

    pub fn operators(&self) -> &[NormalOrderedOperator] {
        &self.operators
    }

    pub fn leading_term(&self) -> &LeadingTerm<'a> {
        &self.lead
    }

    pub fn order(&self) -> usize {
        self.operators.len()
    }

    fn derivative_stencils(&self, alpha: &MultiIndex) -> Result<Vec<BTreeMap<MultiIndex, f64>>> {
        let d = self.structure.dim();
        let da = NormalOrderedOperator::derivative(d, *alpha, 1.0);
        self.operators
            .iter()
            .map(|l| {
                let op = if alpha.is_zero() { l.clone() } else { da.compose(l)? };
                op.stencil(self.theta, &self.increment)
            })
            .collect()
    }

    fn leading(&self, alphas: &BTreeSet<MultiIndex>) -> Result<LeadingValues> {
        let list: Vec<MultiIndex> = alphas.iter().copied().collect();
        self.lead.derivatives(&self.x, &list)
    }

    /// Per-order contributions to `D^α U_N`, `α = 0` giving the price.
    pub fn contributions(&self, alpha: &MultiIndex) -> Result<(Vec<f64>, LeadingValues, Vec<usize>)> {
        let stencils = self.derivative_stencils(alpha)?;
        let mut needed: BTreeSet<MultiIndex> = stencils.iter().flat_map(|s| s.keys().copied()).collect();
        needed.insert(*alpha);
        let lead = self.leading(&needed)?;
        let mut out = vec![lead.values[alpha]];
        for s in &stencils {
            out.push(s.iter().fold(0.0, |acc, (a, w)| acc + w * lead.values[a]));
        }
        Ok((out, lead, stencils.iter().map(|s| s.len()).collect()))
    }

    /// `D^α U_N` with the expansion point held fixed.
    pub fn greeks(&self, alphas: &[MultiIndex]) -> Result<BTreeMap<MultiIndex, f64>> {
        let mut out = BTreeMap::new();
        for a in alphas {
            let (parts, _, _) = self.contributions(a)?;
            out.insert(*a, parts.iter().fold(0.0, |acc, v| acc + v));
        }
        Ok(out)
    }

    pub fn delta(&self) -> Result<f64> {
        let a = MultiIndex::unit(self.structure.dim(), 0);
        Ok(self.greeks(&[a])?[&a])
    }

    pub fn gamma(&self) -> Result<f64> {
        let a = MultiIndex::unit(self.structure.dim(), 0).inc(0);
        Ok(self.greeks(&[a])?[&a])
    }

    pub fn result(&self, greeks: &[MultiIndex]) -> Result<ExpansionResult> {
        let (orders, lead, stencil_sizes) = self.contributions(&MultiIndex::zero(self.structure.dim()))?;
        let cumulative = orders
            .iter()
            .scan(0.0, |acc, u| {
                *acc += u;
                Some(*acc)
            })
            .collect();
        let n = self.order();
        let diagnostics = Diagnostics {
            stencil_sizes,
            operator_terms: self.operators.iter().map(|l| l.len()).collect(),
            closed_form: lead.closed_form,
            quadrature_converged: lead.converged,
            max_quadrature_change: lead.max_change,
            outside_domain: self.outside_domain,
            greeks_beyond_order: greeks
                .iter()
                .filter(|a| self.structure.b_length(a) as usize > n)
                .copied()
                .collect(),
        };
        let k = self.payoff.exponent();
        Ok(ExpansionResult {
            base: self.base.clone(),
            orders,
            cumulative,
            greeks: self.greeks(greeks)?,
            diagnostics,
            payoff_exponent: k,
            predicted_order: error_order_estimate(&self.structure, k, n)?,
        })
    }
}

/// `U_N(t, x)` with per-order terms and the requested Greeks.
#[allow(clippy::too_many_arguments)]
pub fn price(
    model: &dyn CoefficientModel,
    payoff: &Payoff,
    t: f64,
    maturity: f64,
    x: &[f64],
    order: usize,
    options: &PricingOptions,
    greeks: &[MultiIndex],
) -> Result<ExpansionResult> {
    Expansion::new(model, payoff, t, maturity, x, order, options)?.result(greeks)
}
