//! Gauss rules built with the Golub–Welsch eigenvalue method.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

fn golub_welsch(n: usize, off: impl Fn(usize) -> f64, mass: f64) -> Rule {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = off(k);
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mass * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // the rule is symmetric; enforce it exactly
    for i in 0..n / 2 {
        let (x, w) = ((pairs[n - 1 - i].0 - pairs[i].0) / 2.0, (pairs[i].1 + pairs[n - 1 - i].1) / 2.0);
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// Gauss–Hermite rule for the standard normal density (weights sum to one).
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n > 0, "empty rule");
    golub_welsch(n, |k| (k as f64).sqrt(), 1.0)
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0, "empty rule");
    golub_welsch(n, |k| k as f64 / ((4 * k * k - 1) as f64).sqrt(), 2.0)
}

/// Gauss–Legendre rule on `[a, b]` with the standard normal density folded
/// into the weights.
pub fn normal_legendre(n: usize, a: f64, b: f64) -> Rule {
    let base = gauss_legendre(n);
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    let c = (2.0 * std::f64::consts::PI).sqrt().recip();
    let nodes: Vec<f64> = base.nodes.iter().map(|x| mid + half * x).collect();
    let weights = base.weights.iter().zip(&nodes).map(|(w, x)| w * half * c * (-x * x / 2.0).exp()).collect();
    Rule { nodes, weights }
}
