//! Diffusion coefficient models and their intrinsic derivative data.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{BlockStructure, GroupPoint};
use crate::poly::{Differentiable, Poly};
use crate::taylor::{exact_jet, finite_difference_jet, IntrinsicJet};

/// Coefficients `a_ij`, `a_i` (`i, j ≤ p0`) of the generator
/// `½ Σ a_ij ∂_ij + Σ a_i ∂_i + ⟨Bx, ∇⟩`.
///
/// Jets default to finite differences; models with closed-form derivatives
/// should override them.
pub trait CoefficientModel: Send + Sync {
    fn structure(&self) -> &BlockStructure;

    fn diffusion(&self, i: usize, j: usize, z: &GroupPoint) -> f64;

    fn drift(&self, _i: usize, _z: &GroupPoint) -> f64 {
        0.0
    }

    /// Whether any first-order coefficient may be non-zero.
    fn has_drift(&self) -> bool {
        false
    }

    fn diffusion_jet(&self, i: usize, j: usize, base: &GroupPoint, order: usize) -> Result<IntrinsicJet> {
        finite_difference_jet(|z| self.diffusion(i, j, z), self.structure(), base, order)
    }

    fn drift_jet(&self, i: usize, base: &GroupPoint, order: usize) -> Result<IntrinsicJet> {
        finite_difference_jet(|z| self.drift(i, z), self.structure(), base, order)
    }

    /// True when the coefficients only depend on the first `p0` coordinates,
    /// which makes the error bounds uniform in the small-diffusion limit.
    fn depends_only_on_diffusive_block(&self) -> bool {
        false
    }

    /// Membership in the domain where the generator is of Kolmogorov type.
    fn in_domain(&self, _x: &DVector<f64>) -> bool {
        true
    }

    fn name(&self) -> String {
        "custom".into()
    }
}

/// The `p0 × p0` diffusion block `A_0(z)`.
pub fn diffusion_matrix(model: &dyn CoefficientModel, z: &GroupPoint) -> DMatrix<f64> {
    let p0 = model.structure().p0();
    DMatrix::from_fn(p0, p0, |i, j| model.diffusion(i, j, z))
}

/// Checks symmetry and positive definiteness of `A_0` at the given points and
/// returns the extreme eigenvalues seen, `(min, max)`.
pub fn check_parabolicity(model: &dyn CoefficientModel, points: &[GroupPoint]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for z in points {
        let a = diffusion_matrix(model, z);
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-12 * a.amax().max(1.0) {
            return Err(Error::NotSpd(format!("A0 is not symmetric at t = {}", z.t)));
        }
        let eig = a.symmetric_eigenvalues();
        let (mn, mx) = (eig.min(), eig.max());
        if !(mn > 0.0) {
            return Err(Error::NotSpd(format!("A0 has eigenvalue {mn:.3e} at t = {}", z.t)));
        }
        lo = lo.min(mn);
        hi = hi.max(mx);
    }
    Ok((lo, hi))
}

/// Model whose coefficients are polynomials in `(t, x)`; jets are exact.
#[derive(Debug, Clone)]
pub struct PolynomialModel {
    structure: BlockStructure,
    diffusion: Vec<Vec<Poly>>,
    drift: Vec<Poly>,
    name: String,
}

impl PolynomialModel {
    /// `diffusion` must be a symmetric `p0 × p0` array; `drift` has `p0` entries
    /// or is empty for a driftless model.
    pub fn new(structure: BlockStructure, diffusion: Vec<Vec<Poly>>, drift: Vec<Poly>) -> Result<Self> {
        let p0 = structure.p0();
        if diffusion.len() != p0 || diffusion.iter().any(|row| row.len() != p0) {
            return Err(Error::DimensionMismatch { expected: p0, got: diffusion.len() });
        }
        for i in 0..p0 {
            for j in 0..i {
                if diffusion[i][j] != diffusion[j][i] {
                    return Err(Error::NotSpd(format!("diffusion entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        if !drift.is_empty() && drift.len() != p0 {
            return Err(Error::DimensionMismatch { expected: p0, got: drift.len() });
        }
        Ok(Self { structure, diffusion, drift, name: "polynomial".into() })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Black–Scholes averaged diffusion `dS = σ S dW`, `dA = S dt`: `a11 = σ² x1²`.
    pub fn black_scholes_asian(sigma: f64) -> Self {
        let a11 = Poly::monomial(sigma * sigma, 0, &[2, 0]);
        Self::new(BlockStructure::asian(), vec![vec![a11]], Vec::new())
            .expect("prototype model")
            .with_name("bs-asian")
    }

    /// Constant diffusion block `a0` (no drift).
    pub fn constant(structure: BlockStructure, a0: &DMatrix<f64>) -> Result<Self> {
        let p0 = structure.p0();
        if a0.shape() != (p0, p0) {
            return Err(Error::DimensionMismatch { expected: p0, got: a0.nrows() });
        }
        let diffusion = (0..p0).map(|i| (0..p0).map(|j| Poly::constant(a0[(i, j)])).collect()).collect();
        Ok(Self::new(structure, diffusion, Vec::new())?.with_name("constant"))
    }

    /// Driftless averaged Bachelier model `dS = σ dW`, `dA = S dt`.
    pub fn bachelier_asian(sigma: f64) -> Self {
        Self::constant(BlockStructure::asian(), &DMatrix::from_element(1, 1, sigma * sigma))
            .expect("prototype model")
            .with_name("bachelier-asian")
    }

    pub fn diffusion_poly(&self, i: usize, j: usize) -> &Poly {
        &self.diffusion[i][j]
    }
}

impl CoefficientModel for PolynomialModel {
    fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    fn diffusion(&self, i: usize, j: usize, z: &GroupPoint) -> f64 {
        self.diffusion[i][j].eval(z)
    }

    fn drift(&self, i: usize, z: &GroupPoint) -> f64 {
        self.drift.get(i).map_or(0.0, |p| p.eval(z))
    }

    fn has_drift(&self) -> bool {
        self.drift.iter().any(|p| !p.is_zero())
    }

    fn diffusion_jet(&self, i: usize, j: usize, base: &GroupPoint, order: usize) -> Result<IntrinsicJet> {
        Ok(exact_jet(&self.diffusion[i][j], &self.structure, base, order))
    }

    fn drift_jet(&self, i: usize, base: &GroupPoint, order: usize) -> Result<IntrinsicJet> {
        let zero = Poly::zero();
        Ok(exact_jet(self.drift.get(i).unwrap_or(&zero), &self.structure, base, order))
    }

    fn depends_only_on_diffusive_block(&self) -> bool {
        let p0 = self.structure.p0();
        let ok = |p: &Poly| p.terms().all(|(k, beta, _)| k == 0 && beta[p0..].iter().all(|&b| b == 0));
        self.diffusion.iter().flatten().all(ok) && self.drift.iter().all(ok)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

type CoefficientFn = Arc<dyn Fn(usize, usize, &GroupPoint) -> f64 + Send + Sync>;

/// Model given by a closure for `a_ij`; jets come from finite differences.
#[derive(Clone)]
pub struct ClosureModel {
    structure: BlockStructure,
    diffusion: CoefficientFn,
    first_block_only: bool,
    name: String,
}

impl ClosureModel {
    pub fn new(
        structure: BlockStructure,
        name: impl Into<String>,
        first_block_only: bool,
        diffusion: impl Fn(usize, usize, &GroupPoint) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { structure, diffusion: Arc::new(diffusion), first_block_only, name: name.into() }
    }

    /// Averaged CEV diffusion `dS = σ S^γ dW`, `dA = S dt`, with `|S|` used
    /// off the positive half-line.
    pub fn cev_asian(sigma: f64, gamma: f64) -> Self {
        Self::new(BlockStructure::asian(), "cev-asian", true, move |_, _, z| {
            let s = z.x[0].abs();
            sigma * sigma * s.powf(2.0 * gamma)
        })
    }
}

impl CoefficientModel for ClosureModel {
    fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    fn diffusion(&self, i: usize, j: usize, z: &GroupPoint) -> f64 {
        (self.diffusion)(i, j, z)
    }

    fn depends_only_on_diffusive_block(&self) -> bool {
        self.first_block_only
    }

    fn in_domain(&self, x: &DVector<f64>) -> bool {
        x[0] > 0.0
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::MultiIndex;

    #[test]
    fn black_scholes_jets() {
        let m = PolynomialModel::black_scholes_asian(0.3);
        let z = GroupPoint::from_slice(0.0, &[1.2, 0.1]);
        let jet = m.diffusion_jet(0, 0, &z, 4).unwrap();
        assert!((jet.value() - 0.09 * 1.44).abs() < 1e-15);
        assert!((jet.get(0, &MultiIndex::from_slice(&[1, 0])) - 2.0 * 0.09 * 1.2).abs() < 1e-15);
        assert!((jet.get(0, &MultiIndex::from_slice(&[2, 0])) - 0.18).abs() < 1e-15);
        assert_eq!(jet.get(1, &MultiIndex::zero(2)), 0.0);
        assert!(m.depends_only_on_diffusive_block());
        assert!(!m.has_drift());
    }

    #[test]
    fn parabolicity_check() {
        let m = PolynomialModel::black_scholes_asian(0.3);
        let pts = [GroupPoint::from_slice(0.0, &[1.0, 0.0]), GroupPoint::from_slice(0.0, &[2.0, 0.0])];
        let (lo, hi) = check_parabolicity(&m, &pts).unwrap();
        assert!((lo - 0.09).abs() < 1e-15 && (hi - 0.36).abs() < 1e-15);
        let degenerate = [GroupPoint::from_slice(0.0, &[0.0, 0.0])];
        assert!(check_parabolicity(&m, &degenerate).is_err());
    }

    #[test]
    fn asymmetric_polynomial_model_rejected() {
        let b = BlockStructure::new(2, vec![]).unwrap();
        let d = vec![vec![Poly::constant(1.0), Poly::constant(0.1)], vec![Poly::constant(0.2), Poly::constant(1.0)]];
        assert!(PolynomialModel::new(b, d, vec![]).is_err());
    }

    #[test]
    fn cev_uses_finite_difference_jets() {
        let m = ClosureModel::cev_asian(0.3, 1.0);
        let z = GroupPoint::from_slice(0.0, &[1.0, 0.0]);
        let jet = m.diffusion_jet(0, 0, &z, 2).unwrap();
        assert!((jet.get(0, &MultiIndex::from_slice(&[1, 0])) - 0.18).abs() < 1e-8);
    }
}
