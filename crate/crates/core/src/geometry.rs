//! Block drift matrices and the homogeneous group they induce.
//!
//! A [`BlockStructure`] holds the nilpotent drift matrix `B` with sub-diagonal
//! blocks `B_1, …, B_r`, the dilation exponents `σ_j ∈ {1, 3, …, 2r+1}` and
//! the group law `(t,x) ∘ (s,ξ) = (t+s, e^{sB}x + ξ)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::index::{MultiIndex, MAX_DIM};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockStructure {
    sizes: Vec<usize>,
    blocks: Vec<DMatrix<f64>>,
    b: DMatrix<f64>,
    /// `powers[k] = B^k / k!` for `k = 0..=r`.
    scaled_powers: Vec<DMatrix<f64>>,
    sigma: Vec<u32>,
}

/// A point `(t, x)` of the group `ℝ × ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub t: f64,
    pub x: DVector<f64>,
}

impl GroupPoint {
    pub fn new(t: f64, x: impl Into<DVector<f64>>) -> Self {
        Self { t, x: x.into() }
    }

    pub fn from_slice(t: f64, x: &[f64]) -> Self {
        Self { t, x: DVector::from_column_slice(x) }
    }

    pub fn identity(d: usize) -> Self {
        Self { t: 0.0, x: DVector::zeros(d) }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

impl BlockStructure {
    /// Builds the structure from the sub-diagonal blocks; `blocks[j-1]` is `B_j`
    /// of shape `p_j × p_{j-1}`. With no blocks the operator is parabolic in
    /// dimension `p0`.
    pub fn new(p0: usize, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if p0 == 0 {
            return Err(Error::InvalidStructure("p0 must be at least 1".into()));
        }
        let mut sizes = vec![p0];
        for (j, blk) in blocks.iter().enumerate() {
            let prev = sizes[j];
            if blk.ncols() != prev {
                return Err(Error::InvalidStructure(format!(
                    "block B_{} has {} columns, expected p_{} = {prev}",
                    j + 1,
                    blk.ncols(),
                    j
                )));
            }
            let pj = blk.nrows();
            if pj == 0 || pj > prev {
                return Err(Error::InvalidStructure(format!(
                    "block sizes must satisfy p_{} ≥ p_{} ≥ 1, got {prev} and {pj}",
                    j,
                    j + 1
                )));
            }
            if blk.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidStructure(format!("block B_{} has non-finite entries", j + 1)));
            }
            let sv = blk.clone().singular_values();
            let smax = sv.max();
            let rank = sv.iter().filter(|&&s| s > RANK_TOL * smax && s > 0.0).count();
            if rank != pj {
                return Err(Error::InvalidStructure(format!(
                    "block B_{} has rank {rank}, expected full rank {pj}",
                    j + 1
                )));
            }
            sizes.push(pj);
        }
        let d: usize = sizes.iter().sum();
        if d > MAX_DIM {
            return Err(Error::InvalidStructure(format!("dimension {d} exceeds the supported maximum {MAX_DIM}")));
        }

        let mut b = DMatrix::zeros(d, d);
        let mut row0 = p0;
        let mut col0 = 0;
        for (j, blk) in blocks.iter().enumerate() {
            b.view_mut((row0, col0), (blk.nrows(), blk.ncols())).copy_from(blk);
            col0 += sizes[j];
            row0 += sizes[j + 1];
        }

        let r = blocks.len();
        let mut scaled_powers = Vec::with_capacity(r + 1);
        let mut pk = DMatrix::identity(d, d);
        for k in 0..=r {
            if k > 0 {
                pk = &pk * &b / k as f64;
            }
            scaled_powers.push(pk.clone());
        }

        let sigma = sizes
            .iter()
            .enumerate()
            .flat_map(|(j, &p)| std::iter::repeat_n(2 * j as u32 + 1, p))
            .collect();

        Ok(Self { sizes, blocks, b, scaled_powers, sigma })
    }

    /// Builds the structure from block sizes and row-major block entries.
    pub fn from_sizes(sizes: &[usize], entries: &[Vec<f64>]) -> Result<Self> {
        let Some((&p0, rest)) = sizes.split_first() else {
            return Err(Error::InvalidStructure("at least one block size is required".into()));
        };
        if entries.len() != rest.len() {
            return Err(Error::InvalidStructure(format!(
                "{} block sizes need {} blocks, got {}",
                sizes.len(),
                rest.len(),
                entries.len()
            )));
        }
        let mut prev = p0;
        let mut blocks = Vec::with_capacity(rest.len());
        for (j, (&pj, vals)) in rest.iter().zip(entries).enumerate() {
            if pj.checked_mul(prev).is_none_or(|n| n != vals.len()) {
                return Err(Error::InvalidStructure(format!(
                    "block B_{} needs {pj}×{prev} entries, got {}",
                    j + 1,
                    vals.len()
                )));
            }
            blocks.push(DMatrix::from_row_slice(pj, prev, vals));
            prev = pj;
        }
        Self::new(p0, blocks)
    }

    /// The arithmetic-average prototype `B = [[0,0],[1,0]]`.
    pub fn asian() -> Self {
        Self::new(1, vec![DMatrix::from_element(1, 1, 1.0)]).expect("prototype structure")
    }

    /// The chain `p = (1, 1, …, 1)` with unit blocks, dimension `r + 1`.
    pub fn chain(r: usize) -> Self {
        Self::new(1, vec![DMatrix::from_element(1, 1, 1.0); r]).expect("chain structure")
    }

    /// `B = 0` in dimension `d`.
    pub fn parabolic(d: usize) -> Self {
        Self::new(d, Vec::new()).expect("parabolic structure")
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn p0(&self) -> usize {
        self.sizes[0]
    }

    /// Number of sub-diagonal blocks `r`.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Dilation exponents `σ_1, …, σ_d`.
    pub fn sigma(&self) -> &[u32] {
        &self.sigma
    }

    pub fn b_length(&self, beta: &MultiIndex) -> u32 {
        beta.weighted(&self.sigma)
    }

    /// `e^{tB} = Σ_{k≤r} (tB)^k / k!`, exact for the nilpotent `B`.
    pub fn exp(&self, t: f64) -> DMatrix<f64> {
        let mut out = self.scaled_powers[0].clone();
        let mut tk = 1.0;
        for p in &self.scaled_powers[1..] {
            tk *= t;
            out += p * tk;
        }
        out
    }

    /// `e^{tB}` as a matrix polynomial in `t`.
    pub fn exp_poly(&self) -> MatrixPolynomial {
        MatrixPolynomial { coeffs: self.scaled_powers.clone() }
    }

    pub fn compose(&self, z: &GroupPoint, w: &GroupPoint) -> GroupPoint {
        GroupPoint { t: z.t + w.t, x: self.exp(w.t) * &z.x + &w.x }
    }

    pub fn inverse(&self, z: &GroupPoint) -> GroupPoint {
        GroupPoint { t: -z.t, x: -(self.exp(-z.t) * &z.x) }
    }

    /// Spatial dilation `D₀(λ) = diag(λ^{σ_1}, …, λ^{σ_d})`.
    pub fn spatial_dilation(&self, lambda: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.sigma.iter().map(|&s| lambda.powi(s as i32)),
        ))
    }

    pub fn dilate_spatial(&self, lambda: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_lambda(lambda)?;
        Ok(DVector::from_iterator(
            x.len(),
            x.iter().zip(&self.sigma).map(|(v, &s)| v * lambda.powi(s as i32)),
        ))
    }

    /// `D(λ)(t,x) = (λ²t, D₀(λ)x)`.
    pub fn dilate(&self, lambda: f64, z: &GroupPoint) -> Result<GroupPoint> {
        Ok(GroupPoint { t: lambda * lambda * z.t, x: self.dilate_spatial(lambda, &z.x)? })
    }

    /// `[x]_B = Σ |x_j|^{1/σ_j}`.
    pub fn spatial_norm(&self, x: &DVector<f64>) -> f64 {
        x.iter().zip(&self.sigma).map(|(v, &s)| v.abs().powf(1.0 / s as f64)).sum()
    }

    /// `‖(t,x)‖_B = |t|^{1/2} + [x]_B`.
    pub fn homogeneous_norm(&self, z: &GroupPoint) -> f64 {
        z.t.abs().sqrt() + self.spatial_norm(&z.x)
    }

    /// Embeds a `p0 × p0` block into the top-left corner of a `d × d` zero matrix.
    pub fn embed_diffusion(&self, a0: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let p0 = self.p0();
        let mut a = DMatrix::zeros(d, d);
        a.view_mut((0, 0), (p0, p0)).copy_from(a0);
        a
    }

    /// Covariance `C(t) = ∫₀ᵗ e^{uB} A e^{uB*} du` for the embedded diffusion block.
    pub fn covariance(&self, a0: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        self.covariance_poly(a0).eval(t)
    }

    /// The covariance as an exact matrix polynomial in `t`.
    pub fn covariance_poly(&self, a0: &DMatrix<f64>) -> MatrixPolynomial {
        let a = self.embed_diffusion(a0);
        let e = self.exp_poly();
        let inner = e.mul(&MatrixPolynomial::constant(a)).mul(&e.transpose());
        inner.integrate()
    }

    /// `M_v(t) = e^{-tB} C(t) e^{-tB*}`.
    pub fn shift_covariance(&self, a0: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        let em = self.exp(-t);
        &em * self.covariance(a0, t) * em.transpose()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveDilation(lambda))
    }
}

/// A matrix whose entries are polynomials in one real variable,
/// stored as `Σ_k coeffs[k] t^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomial {
    pub coeffs: Vec<DMatrix<f64>>,
}

impl MatrixPolynomial {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Self { coeffs: vec![m] }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs[0].shape()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let mut acc = self.coeffs.last().expect("non-empty").clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc * t + c;
        }
        acc
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (r, _) = self.shape();
        let (_, c) = other.shape();
        let mut coeffs = vec![DMatrix::zeros(r, c); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Self { coeffs }
    }

    pub fn transpose(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|m| m.transpose()).collect() }
    }

    /// Substitutes `t → -t`.
    pub fn reflect(&self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, m)| if k % 2 == 1 { -m } else { m.clone() })
                .collect(),
        }
    }

    /// Antiderivative vanishing at zero.
    pub fn integrate(&self) -> Self {
        let (r, c) = self.shape();
        let mut coeffs = vec![DMatrix::zeros(r, c)];
        for (k, m) in self.coeffs.iter().enumerate() {
            coeffs.push(m / (k + 1) as f64);
        }
        Self { coeffs }
    }

    /// Polynomial coefficients of entry `(i, j)`, lowest degree first.
    pub fn entry(&self, i: usize, j: usize) -> Vec<f64> {
        self.coeffs.iter().map(|m| m[(i, j)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn prototype_exponential() {
        let b = BlockStructure::asian();
        let e = b.exp(0.7);
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.7, 1.0]));
        assert_eq!(b.exp(0.0), DMatrix::identity(2, 2));
        assert_eq!(b.sigma(), &[1, 3]);
    }

    #[test]
    fn chain_exponential_matches_hand_expansion() {
        let b = BlockStructure::chain(2);
        let e = b.exp(1.0);
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.5, 1.0, 1.0]);
        assert_relative_eq!(e, expected, epsilon = 1e-15);
        assert_eq!(b.sigma(), &[1, 3, 5]);
        let b3 = b.matrix() * b.matrix() * b.matrix();
        assert_eq!(max_abs(&b3), 0.0);
    }

    #[test]
    fn rejects_rank_deficient_blocks() {
        let blk = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(BlockStructure::new(2, vec![blk]), Err(Error::InvalidStructure(_))));
        let wide = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(BlockStructure::new(1, vec![wide]).is_err());
        assert!(BlockStructure::from_sizes(&[2, 1], &[vec![1.0]]).is_err());
        assert!(BlockStructure::from_sizes(&[2, 1], &[vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn group_law_examples() {
        let b = BlockStructure::asian();
        let z = GroupPoint::from_slice(1.0, &[1.0, 0.0]);
        let w = GroupPoint::from_slice(1.0, &[0.0, 0.0]);
        let zw = b.compose(&z, &w);
        assert_eq!(zw, GroupPoint::from_slice(2.0, &[1.0, 1.0]));
        let id = GroupPoint::identity(2);
        assert_eq!(b.compose(&z, &id), z);
        let r = b.compose(&z, &b.inverse(&z));
        assert!(r.t.abs() < 1e-15 && r.x.norm() < 1e-15);
    }

    #[test]
    fn dilation_examples() {
        let b = BlockStructure::asian();
        let z = GroupPoint::from_slice(1.0, &[1.0, 1.0]);
        assert_eq!(b.dilate(2.0, &z).unwrap(), GroupPoint::from_slice(4.0, &[2.0, 8.0]));
        assert_eq!(b.dilate(1.0, &z).unwrap(), z);
        assert!(matches!(b.dilate(0.0, &z), Err(Error::NonPositiveDilation(_))));
        assert!(b.dilate(-1.0, &z).is_err());
        let dz = b.dilate(2.0, &z).unwrap();
        assert_eq!(b.homogeneous_norm(&dz), 6.0);
        assert_eq!(b.homogeneous_norm(&GroupPoint::identity(2)), 0.0);
    }

    #[test]
    fn prototype_covariance() {
        let b = BlockStructure::asian();
        let a = DMatrix::from_element(1, 1, 0.09);
        let th = 0.3;
        let c = b.covariance(&a, th);
        let expected =
            DMatrix::from_row_slice(2, 2, &[0.09 * th, 0.09 * th * th / 2.0, 0.09 * th * th / 2.0, 0.09 * th.powi(3) / 3.0]);
        assert_relative_eq!(c, expected, epsilon = 1e-16);
    }

    #[test]
    fn matrix_polynomial_reflect() {
        let b = BlockStructure::chain(2);
        let p = b.exp_poly().reflect();
        assert_relative_eq!(p.eval(0.4), b.exp(-0.4), epsilon = 1e-15);
    }
}
