use kolmo::mc::{convergence_table, simulate_price, McConfig, Scheme};
use kolmo::model::PolynomialModel;
use kolmo::payoff::Payoff;
use kolmo::pricer::{price, PricingOptions};
use kolmo::{Error, Result};

#[test]
fn linear_payoff_mean() {
    let m = PolynomialModel::black_scholes_asian(0.4);
    let p = Payoff::linear(vec![0.0, 1.0], 0.0, 3.0);
    let cfg = McConfig { paths: 20_000, steps_per_unit_time: 200, ..McConfig::default() };
    let (x, theta) = ([0.9, 0.3], 0.5);
    let e = simulate_price(&m, &p, 0.0, theta, &x, &cfg).unwrap();
    let expect = x[1] + x[0] * theta;
    assert!((e.mean - expect).abs() < 4.0 * e.stderr.max(1e-12), "{} ± {}", e.mean, e.stderr);
    assert_eq!(e.steps, 100);
}

#[test]
fn reproducible_for_a_seed() {
    let m = PolynomialModel::black_scholes_asian(0.3);
    let p = Payoff::fixed_strike_asian(1.0, 0.25).unwrap();
    let cfg = McConfig { paths: 10_000, steps_per_unit_time: 400, seed: 7, ..McConfig::default() };
    let a = simulate_price(&m, &p, 0.0, 0.25, &[1.0, 0.0], &cfg).unwrap();
    let b = simulate_price(&m, &p, 0.0, 0.25, &[1.0, 0.0], &cfg).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    let c = simulate_price(&m, &p, 0.0, 0.25, &[1.0, 0.0], &McConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(a.mean, c.mean);
}

#[test]
fn antithetic_does_not_inflate_error() {
    let m = PolynomialModel::black_scholes_asian(0.3);
    let p = Payoff::fixed_strike_asian(1.0, 0.25).unwrap();
    let base = McConfig { paths: 40_000, steps_per_unit_time: 200, ..McConfig::default() };
    let anti = simulate_price(&m, &p, 0.0, 0.25, &[1.0, 0.0], &base).unwrap();
    let plain = simulate_price(&m, &p, 0.0, 0.25, &[1.0, 0.0], &McConfig { antithetic: false, ..base }).unwrap();
    assert!(anti.stderr <= 1.05 * plain.stderr, "{} vs {}", anti.stderr, plain.stderr);
}

#[test]
fn step_halving_is_within_noise() {
    let m = PolynomialModel::black_scholes_asian(0.3);
    let p = Payoff::fixed_strike_asian(1.0, 0.25).unwrap();
    let cfg = McConfig { paths: 100_000, steps_per_unit_time: 1000, scheme: Scheme::EulerTrapezoid, ..McConfig::default() };
    let fine = simulate_price(&m, &p, 0.0, 0.25, &[1.0, 0.0], &cfg).unwrap();
    let coarse = simulate_price(&m, &p, 0.0, 0.25, &[1.0, 0.0], &McConfig { steps_per_unit_time: 500, seed: 3, ..cfg }).unwrap();
    let se = (fine.stderr.powi(2) + coarse.stderr.powi(2)).sqrt();
    assert!((fine.mean - coarse.mean).abs() < 3.0 * se);
}

#[test]
fn second_order_agrees_with_simulation() {
    let m = PolynomialModel::black_scholes_asian(0.3);
    let p = Payoff::fixed_strike_asian(1.0, 0.25).unwrap();
    let cfg = McConfig { paths: 1_000_000, steps_per_unit_time: 2000, seed: 42, antithetic: true, scheme: Scheme::EulerTrapezoid };
    let e = simulate_price(&m, &p, 0.0, 0.25, &[1.0, 0.0], &cfg).unwrap();
    assert_eq!(e.steps, 500);
    assert!(e.stderr < 2e-4);
    let u2 = price(&m, &p, 0.0, 0.25, &[1.0, 0.0], 2, &PricingOptions::default(), &[]).unwrap().value();
    assert!((u2 - e.mean).abs() < 3.0 * e.stderr, "U2 {u2} MC {} ± {}", e.mean, e.stderr);
}

#[test]
fn exact_expansion_is_noise_dominated() {
    let m = PolynomialModel::bachelier_asian(0.3);
    let problem = |theta: f64| -> Result<(f64, f64, Vec<f64>, Payoff)> {
        Ok((0.0, theta, vec![0.3, 0.0], Payoff::fixed_strike_asian(0.3, theta)?))
    };
    let cfg = McConfig { paths: 20_000, steps_per_unit_time: 1000, scheme: Scheme::EulerTrapezoid, ..McConfig::default() };
    let table = convergence_table(&m, &problem, &[0.2, 0.1, 0.05], &cfg, &[0, 2], &PricingOptions::default()).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(table.rows.iter().all(|r| r.noise_dominated.iter().all(|b| *b)));
    assert!(table.slopes.iter().all(Option::is_none));
}

#[test]
fn rejects_bad_configs() {
    let m = PolynomialModel::black_scholes_asian(0.3);
    let p = Payoff::constant(1.0);
    let odd = McConfig { paths: 1001, ..McConfig::default() };
    assert!(matches!(simulate_price(&m, &p, 0.0, 1.0, &[1.0, 0.0], &odd), Err(Error::InvalidInput(_))));
    let none = McConfig { steps_per_unit_time: 0, ..McConfig::default() };
    assert!(simulate_price(&m, &p, 0.0, 1.0, &[1.0, 0.0], &none).is_err());
    assert!(simulate_price(&m, &p, 1.0, 1.0, &[1.0, 0.0], &McConfig::default()).is_err());
}
