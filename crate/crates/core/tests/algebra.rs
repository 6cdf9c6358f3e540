use std::collections::BTreeMap;

use kolmo::algebra::{normal_order_product, NormalOrderedOperator, TimeMonomial, THETA, TIME_SLOTS};
use kolmo::expansion::{compositions, m_operator, simplex_integral, w_operator, OperatorBuilder};
use kolmo::quadrature::gauss_legendre;
use kolmo::{BlockStructure, Differentiable, ExpPoly, GroupPoint, MultiIndex, Poly, PolynomialModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Σ c X^δ D^α g` with `X = x`, for an operator whose time slots are fixed.
fn apply(op: &NormalOrderedOperator, times: &[f64; TIME_SLOTS], g: &ExpPoly) -> ExpPoly {
    let mut q = Poly::zero();
    for (k, c) in op.terms() {
        let mut h = g.clone();
        for i in 0..op.dim() {
            for _ in 0..k.alpha.get(i) {
                h = h.dx(i);
            }
        }
        let delta: Vec<u32> = (0..op.dim()).map(|i| k.delta.get(i)).collect();
        q = q.add(&Poly::monomial(c * k.time.eval(times), 0, &delta).mul(&h.q));
    }
    ExpPoly::new(q, g.p.clone())
}

fn gaussian_test_function() -> ExpPoly {
    let p = Poly::monomial(-0.5, 0, &[2, 0]).add(&Poly::monomial(-0.3, 0, &[0, 2])).add(&Poly::monomial(0.2, 0, &[1, 1])).add(&Poly::x(0).scale(0.1));
    ExpPoly::new(Poly::constant(1.0).add(&Poly::monomial(0.3, 0, &[1, 0])), p)
}

fn grouped_at(op: &NormalOrderedOperator, delta: &[u32], alpha: &[u32], theta: f64) -> f64 {
    op.grouped()
        .get(&(MultiIndex::from_slice(delta), MultiIndex::from_slice(alpha)))
        .map_or(0.0, |p| p.eval_horizon(theta))
}

#[test]
fn w_examples() {
    let s = BlockStructure::asian();
    let w1 = w_operator(&s, 0, THETA);
    assert_eq!(grouped_at(&w1, &[0, 0], &[1, 0], 0.4), 1.0);
    assert!((grouped_at(&w1, &[0, 0], &[0, 1], 0.4) + 0.4).abs() < 1e-15);
    assert_eq!(grouped_at(&w1, &[0, 0], &[0, 1], 0.0), 0.0);
    let p = BlockStructure::parabolic(2);
    for i in 0..2 {
        let w = w_operator(&p, i, THETA);
        assert_eq!(w.len(), 1);
        assert_eq!(grouped_at(&w, &[0, 0], if i == 0 { &[1, 0] } else { &[0, 1] }, 3.0), 1.0);
    }
}

#[test]
fn m_examples() {
    let s = BlockStructure::asian();
    let a = 0.2;
    let a0 = DMatrix::from_element(1, 1, a);
    let c = s.covariance(&a0, 0.7);
    assert!((c[(0, 0)] - a * 0.7).abs() < 1e-15);
    assert!((c[(0, 1)] - a * 0.49 / 2.0).abs() < 1e-15);
    assert!((c[(1, 1)] - a * 0.343 / 3.0).abs() < 1e-15);
    let d = 0.7;
    let m1 = m_operator(&s, &a0, 0, THETA);
    assert_eq!(grouped_at(&m1, &[1, 0], &[0, 0], d), 1.0);
    assert!((grouped_at(&m1, &[0, 0], &[1, 0], d) - a * d).abs() < 1e-15);
    assert!((grouped_at(&m1, &[0, 0], &[0, 1], d) + a * d * d / 2.0).abs() < 1e-15);
    // second component from e^{ΔB}(x + e^{-ΔB} C e^{-ΔB*} ∇); see the ledger for the sign
    let m2 = m_operator(&s, &a0, 1, THETA);
    assert!((grouped_at(&m2, &[1, 0], &[0, 0], d) - d).abs() < 1e-15);
    assert_eq!(grouped_at(&m2, &[0, 1], &[0, 0], d), 1.0);
    assert!((grouped_at(&m2, &[0, 0], &[1, 0], d) - a * d * d / 2.0).abs() < 1e-15);
    assert!((grouped_at(&m2, &[0, 0], &[0, 1], d) + a * d.powi(3) / 6.0).abs() < 1e-15);
    // Δ = 0: plain multiplication
    let at0 = m2.at_times(&[0.0; TIME_SLOTS]);
    assert_eq!(at0, NormalOrderedOperator::multiplication(2, 1));
}

#[test]
fn squared_w() {
    let s = BlockStructure::asian();
    let w = w_operator(&s, 0, THETA);
    let sq = normal_order_product(&w, &w).unwrap();
    let d = 0.3;
    assert_eq!(grouped_at(&sq, &[0, 0], &[2, 0], d), 1.0);
    assert!((grouped_at(&sq, &[0, 0], &[1, 1], d) + 2.0 * d).abs() < 1e-15);
    assert!((grouped_at(&sq, &[0, 0], &[0, 2], d) - d * d).abs() < 1e-15);
    assert_eq!(sq.len(), 3);
}

#[test]
fn shift_components_commute_on_test_function() {
    let s = BlockStructure::asian();
    let a0 = DMatrix::from_element(1, 1, 0.3);
    let times = [0.6, 0.0, 0.0, 0.0, 0.0];
    let m1 = m_operator(&s, &a0, 0, THETA);
    let m2 = m_operator(&s, &a0, 1, THETA);
    let g = gaussian_test_function();
    let a = apply(&m1.compose(&m2).unwrap(), &times, &g);
    let b = apply(&m2.compose(&m1).unwrap(), &times, &g);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let z = GroupPoint::from_slice(0.0, &[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
        let (va, vb) = (a.eval(&z), b.eval(&z));
        assert!((va - vb).abs() < 1e-10 * (1.0 + va.abs()));
    }
}

#[test]
fn product_matches_successive_application() {
    let s = BlockStructure::chain(2);
    let a0 = DMatrix::from_element(1, 1, 0.5);
    let times = [0.8, 0.3, 0.0, 0.0, 0.0];
    let p = m_operator(&s, &a0, 2, 1).compose(&w_operator(&s, 0, THETA)).unwrap();
    let q = w_operator(&s, 0, 1).compose(&m_operator(&s, &a0, 1, THETA)).unwrap();
    let pq = normal_order_product(&p, &q).unwrap();
    let gp = Poly::monomial(-0.4, 0, &[2, 0, 0]).add(&Poly::monomial(-0.2, 0, &[0, 2, 0])).add(&Poly::monomial(-0.1, 0, &[0, 0, 2])).add(&Poly::monomial(0.3, 0, &[1, 0, 1]));
    let g = ExpPoly::new(Poly::constant(1.0).add(&Poly::x(1)), gp);
    let lhs = apply(&pq, &times, &g);
    let rhs = apply(&p, &times, &apply(&q, &times, &g));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let z = GroupPoint::from_slice(0.0, &x);
        let (l, r) = (lhs.eval(&z), rhs.eval(&z));
        assert!((l - r).abs() <= 1e-9 * l.abs().max(r.abs()).max(1e-12));
    }
}

fn prototype_builder() -> OperatorBuilder {
    let a = Poly::constant(0.09)
        .add(&Poly::monomial(0.05, 0, &[1, 0]))
        .add(&Poly::monomial(0.03, 0, &[2, 0]))
        .add(&Poly::monomial(0.02, 0, &[0, 1]))
        .add(&Poly::monomial(0.04, 1, &[0, 0]))
        .add(&Poly::monomial(0.01, 0, &[3, 0]));
    let m = PolynomialModel::new(BlockStructure::asian(), vec![vec![a]], vec![]).unwrap();
    OperatorBuilder::from_model(&m, GroupPoint::from_slice(0.0, &[1.0, 0.0]), 0.0, 4).unwrap()
}

#[test]
fn g_terms_lie_in_index_set() {
    let s = BlockStructure::asian();
    let b = prototype_builder();
    for n in 1..=3 {
        let g = b.g(n, 1).unwrap();
        assert!(!g.is_empty());
        for (k, _) in g.terms() {
            let a = k.alpha.height() as i64;
            let ab = s.b_length(&k.alpha) as i64;
            let db = s.b_length(&k.delta) as i64;
            let q = k.time.get(1) as i64;
            assert!(a >= 1 && a <= n as i64 + 2, "{k:?}");
            assert!(db <= n as i64);
            assert_eq!(2 * q, ab - db + n as i64 - 2, "{k:?}");
            assert!(k.time.get(THETA) == 0);
        }
    }
}

#[test]
fn first_order_g_matches_integrand() {
    let (a, da) = (0.09, 0.3);
    let coeff = Poly::constant(a).add(&Poly::monomial(da, 0, &[1, 0]));
    let m = PolynomialModel::new(BlockStructure::asian(), vec![vec![coeff]], vec![]).unwrap();
    let b = OperatorBuilder::from_model(&m, GroupPoint::identity(2), 0.0, 1).unwrap();
    let g = b.g(1, 1).unwrap();
    let d = 0.4;
    let times = [0.0, d, 0.0, 0.0, 0.0];
    let v = |dl: &[u32], al: &[u32]| {
        g.at_times(&times).grouped().get(&(MultiIndex::from_slice(dl), MultiIndex::from_slice(al))).map_or(0.0, |p| p.eval_horizon(1.0))
    };
    // ½ a' [X1 + aΔ∂1 − (a/2)Δ²∂2](∂11 − 2Δ∂12 + Δ²∂22)
    let h = da / 2.0;
    let expected: Vec<(&[u32], &[u32], f64)> = vec![
        (&[1, 0], &[2, 0], h),
        (&[1, 0], &[1, 1], -2.0 * d * h),
        (&[1, 0], &[0, 2], d * d * h),
        (&[0, 0], &[3, 0], h * a * d),
        (&[0, 0], &[2, 1], h * (-2.0 * a * d * d - a * d * d / 2.0)),
        (&[0, 0], &[1, 2], h * (a * d.powi(3) + a * d.powi(3))),
        (&[0, 0], &[0, 3], -h * a * d.powi(4) / 2.0),
    ];
    for (dl, al, c) in expected {
        assert!((v(dl, al) - c).abs() < 1e-15, "{dl:?} {al:?}");
    }
}

#[test]
fn second_order_assembles_from_compositions() {
    assert_eq!(compositions(2), vec![vec![1, 1], vec![2]]);
    assert_eq!(compositions(4).len(), 8);
    let b = prototype_builder();
    let l2 = b.l(2).unwrap();
    let g1a = b.g(1, 1).unwrap();
    let g1b = b.g(1, 2).unwrap();
    let two = g1a.compose(&g1b).unwrap().integrate_to_horizon(2, Some(1)).integrate_to_horizon(1, None);
    let one = b.g(2, 1).unwrap().integrate_to_horizon(1, None);
    let sum = two.add(&one).unwrap();
    let diff = sum.add_scaled(&l2, -1.0).unwrap();
    let scale = l2.terms().fold(0.0f64, |m, (_, c)| m.max(c.abs()));
    assert!(diff.terms().all(|(_, c)| c.abs() < 1e-13 * scale));
}

#[test]
fn base_point_stencil() {
    let b = prototype_builder();
    let s = BlockStructure::asian();
    for n in 1..=4 {
        let l = b.l(n).unwrap();
        for (alpha, power, _) in l.at_base_point() {
            assert_eq!(2 * power as usize, s.b_length(&alpha) as usize + n);
        }
    }
    let mut only_x = NormalOrderedOperator::multiplication(2, 0);
    only_x = only_x.compose(&NormalOrderedOperator::derivative(2, MultiIndex::unit(2, 1), 1.0)).unwrap();
    assert!(only_x.at_base_point().is_empty());
    assert!(only_x.stencil(1.0, &[0.0, 0.0]).unwrap().is_empty());
}

#[test]
fn simplex_integrals_match_quadrature() {
    let rule = gauss_legendre(12);
    let theta = 1.3;
    // nested rule over 0 < Δ1 < … < Δh < Θ, innermost variable first
    fn nested(rule: &kolmo::quadrature::Rule, exps: &[u32], lo: f64, hi: f64) -> f64 {
        if exps.is_empty() {
            return 1.0;
        }
        let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| {
                let s = mid + half * x;
                w * half * s.powi(exps[0] as i32) * nested(rule, &exps[1..], s, hi)
            })
            .sum()
    }
    let mut exps_list: Vec<Vec<u32>> = Vec::new();
    for h in 1..=3usize {
        let mut idx = vec![0u32; h];
        loop {
            exps_list.push(idx.clone());
            let mut k = 0;
            while k < h {
                idx[k] += 1;
                if idx[k] <= 4 {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == h {
                break;
            }
        }
    }
    for exps in exps_list {
        let exact = simplex_integral(&exps).unwrap().eval_horizon(theta);
        let numeric = nested(&rule, &exps, 0.0, theta);
        assert!((exact - numeric).abs() <= 1e-10 * exact.abs(), "{exps:?}: {exact} vs {numeric}");
    }
}

#[test]
fn shift_covariance_homogeneity() {
    for (s, a0) in [
        (BlockStructure::asian(), DMatrix::from_element(1, 1, 0.4)),
        (BlockStructure::chain(2), DMatrix::from_element(1, 1, 1.3)),
    ] {
        let m1 = s.shift_covariance(&a0, 1.0);
        for d in [0.1, 1.0, 2.5] {
            let up = s.spatial_dilation(f64::sqrt(d));
            let m = s.shift_covariance(&a0, d);
            assert!((&m - &up * &m1 * &up).amax() <= 1e-12 * m.amax());
        }
    }
}

#[test]
fn printing_is_deterministic() {
    let b = prototype_builder();
    let a = b.l(2).unwrap().to_string();
    let c = prototype_builder().l(2).unwrap().to_string();
    assert_eq!(a, c);
    let first = a.lines().next().unwrap();
    assert!(first.contains(" * Theta^") && first.contains(" * x^(") && first.contains(" * D^("));
    let mut counts: BTreeMap<TimeMonomial, usize> = BTreeMap::new();
    for (k, _) in b.l(2).unwrap().terms() {
        *counts.entry(k.time).or_default() += 1;
    }
    assert!(counts.keys().all(|m| m.is_horizon_only()));
}
