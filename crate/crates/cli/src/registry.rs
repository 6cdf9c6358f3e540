//! Named models and payoffs that a config file can refer to.

use kolmo::model::ClosureModel;
use kolmo::payoff::{Hyperplane, Payoff};
use kolmo::{BlockStructure, CoefficientModel, PolynomialModel};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::{ModelSection, PayoffSection, StructureSection};
use crate::error::{CliError, CliResult};

pub const MODEL_IDS: [&str; 4] = ["bs-asian", "bachelier-asian", "cev-asian", "constant"];
pub const PAYOFF_IDS: [&str; 5] = ["fixed-call", "floating-call", "call", "linear", "constant"];

/// A model from the registry together with the parameters it was built from.
pub struct ModelSpec {
    pub id: String,
    pub params: Value,
    model: Box<dyn CoefficientModel>,
}

fn positive(name: &str, v: Option<f64>, flag: &str) -> CliResult<f64> {
    let v = v.ok_or_else(|| CliError::missing(name, flag))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(CliError::Config(format!("`{name}` must be positive and finite, got {v}")));
    }
    Ok(v)
}

impl ModelSpec {
    pub fn resolve(m: &ModelSection, structure: Option<&StructureSection>) -> CliResult<Self> {
        let id = m.id.clone().ok_or_else(|| CliError::missing("model.id", "--model"))?;
        let asian = BlockStructure::asian();
        let custom = structure.map(StructureSection::build).transpose()?;
        if id != "constant" {
            if let Some(s) = &custom {
                if s.sizes() != asian.sizes() || s.matrix() != asian.matrix() {
                    return Err(CliError::Config(format!("model `{id}` is defined on the Asian structure only")));
                }
            }
        }
        let (model, params): (Box<dyn CoefficientModel>, Value) = match id.as_str() {
            "bs-asian" => {
                let sigma = positive("model.sigma", m.sigma, "--sigma")?;
                (Box::new(PolynomialModel::black_scholes_asian(sigma)), json!({ "sigma": sigma }))
            }
            "bachelier-asian" => {
                let sigma = positive("model.sigma", m.sigma, "--sigma")?;
                (Box::new(PolynomialModel::bachelier_asian(sigma)), json!({ "sigma": sigma }))
            }
            "cev-asian" => {
                let sigma = positive("model.sigma", m.sigma, "--sigma")?;
                let gamma = m.gamma.ok_or_else(|| CliError::missing("model.gamma", "--gamma"))?;
                if !gamma.is_finite() {
                    return Err(CliError::Config(format!("`model.gamma` must be finite, got {gamma}")));
                }
                (Box::new(ClosureModel::cev_asian(sigma, gamma)), json!({ "sigma": sigma, "gamma": gamma }))
            }
            "constant" => {
                let s = custom.unwrap_or(asian);
                let p0 = s.p0();
                let a0 = match (&m.diffusion, m.sigma) {
                    (Some(rows), _) => {
                        if rows.len() != p0 || rows.iter().any(|r| r.len() != p0) {
                            return Err(CliError::Config(format!("`model.diffusion` must be {p0} × {p0}")));
                        }
                        DMatrix::from_fn(p0, p0, |i, j| rows[i][j])
                    }
                    (None, Some(_)) => {
                        let sigma = positive("model.sigma", m.sigma, "--sigma")?;
                        DMatrix::identity(p0, p0) * (sigma * sigma)
                    }
                    (None, None) => return Err(CliError::missing("model.diffusion", "--sigma")),
                };
                let rows: Vec<Vec<f64>> = (0..p0).map(|i| a0.row(i).iter().copied().collect()).collect();
                let params = json!({ "diffusion": rows, "sizes": s.sizes() });
                (Box::new(PolynomialModel::constant(s, &a0)?), params)
            }
            other => {
                return Err(CliError::Config(format!("unknown model `{other}`; known: {}", MODEL_IDS.join(", "))));
            }
        };
        Ok(Self { id, params, model })
    }

    pub fn model(&self) -> &dyn CoefficientModel {
        self.model.as_ref()
    }

    pub fn structure(&self) -> &BlockStructure {
        self.model.structure()
    }

    pub fn describe(&self) -> Value {
        let mut v = json!({ "id": self.id });
        if let (Some(o), Some(p)) = (v.as_object_mut(), self.params.as_object()) {
            o.extend(p.clone());
        }
        v
    }
}

/// A payoff recipe; some payoffs depend on the maturity, so the payoff itself
/// is built per horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum PayoffSpec {
    FixedCall { strike: f64 },
    FloatingCall,
    Call { normal: Vec<f64>, strike: f64, scale: f64, exponent: Option<f64> },
    Linear { normal: Vec<f64>, offset: f64, exponent: f64 },
    Constant { value: f64 },
}

fn finite(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("`{name}` must be finite, got {v}")))
    }
}

impl PayoffSpec {
    pub fn resolve(p: &PayoffSection) -> CliResult<Self> {
        let id = p.id.clone().ok_or_else(|| CliError::missing("payoff.id", "--payoff"))?;
        let strike = || -> CliResult<f64> { finite("payoff.strike", p.strike.ok_or_else(|| CliError::missing("payoff.strike", "--strike"))?) };
        let normal = || -> CliResult<Vec<f64>> {
            let n = p.normal.clone().ok_or_else(|| CliError::missing("payoff.normal", "the config file"))?;
            if n.is_empty() || n.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("`payoff.normal` must be a non-empty finite vector".into()));
            }
            Ok(n)
        };
        Ok(match id.as_str() {
            "fixed-call" => PayoffSpec::FixedCall { strike: strike()? },
            "floating-call" => PayoffSpec::FloatingCall,
            "call" => PayoffSpec::Call {
                normal: normal()?,
                strike: strike()?,
                scale: finite("payoff.scale", p.scale.unwrap_or(1.0))?,
                exponent: p.exponent.map(|e| finite("payoff.exponent", e)).transpose()?,
            },
            "linear" => PayoffSpec::Linear {
                normal: normal()?,
                offset: finite("payoff.offset", p.offset.unwrap_or(0.0))?,
                exponent: finite("payoff.exponent", p.exponent.unwrap_or(1.0))?,
            },
            "constant" => PayoffSpec::Constant {
                value: finite("payoff.value", p.value.ok_or_else(|| CliError::missing("payoff.value", "the config file"))?)?,
            },
            other => {
                return Err(CliError::Config(format!("unknown payoff `{other}`; known: {}", PAYOFF_IDS.join(", "))));
            }
        })
    }

    /// The payoff for maturity `T` on a structure; exponents default to
    /// `2r + 1` for calls on a generic hyperplane.
    pub fn build(&self, maturity: f64, structure: &BlockStructure) -> CliResult<Payoff> {
        let d = structure.dim();
        let needs_asian = matches!(self, PayoffSpec::FixedCall { .. } | PayoffSpec::FloatingCall);
        if needs_asian && d != 2 {
            return Err(CliError::Config("Asian payoffs need the two-dimensional (S, A) state".into()));
        }
        let payoff = match self {
            PayoffSpec::FixedCall { strike } => Payoff::fixed_strike_asian(*strike, maturity)?,
            PayoffSpec::FloatingCall => Payoff::floating_strike_asian(maturity)?,
            PayoffSpec::Call { normal, strike, scale, exponent } => Payoff::call(
                "call",
                exponent.unwrap_or((2 * structure.depth() + 1) as f64),
                Hyperplane { normal: normal.clone(), strike: *strike, scale: *scale },
            ),
            PayoffSpec::Linear { normal, offset, exponent } => Payoff::linear(normal.clone(), *offset, *exponent),
            PayoffSpec::Constant { value } => Payoff::constant(*value),
        };
        payoff.validate(structure.depth(), d)?;
        Ok(payoff)
    }

    pub fn describe(&self) -> Value {
        match self {
            PayoffSpec::FixedCall { strike } => json!({ "id": "fixed-call", "strike": strike }),
            PayoffSpec::FloatingCall => json!({ "id": "floating-call" }),
            PayoffSpec::Call { normal, strike, scale, exponent } => {
                json!({ "id": "call", "normal": normal, "strike": strike, "scale": scale, "exponent": exponent })
            }
            PayoffSpec::Linear { normal, offset, exponent } => {
                json!({ "id": "linear", "normal": normal, "offset": offset, "exponent": exponent })
            }
            PayoffSpec::Constant { value } => json!({ "id": "constant", "value": value }),
        }
    }
}
