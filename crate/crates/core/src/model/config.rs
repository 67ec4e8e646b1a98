//! JSON model description.
//!
//! ```json
//! {
//!   "capacitance": 1.0,
//!   "leak": {"g": 0.1, "E": -65.0},
//!   "m_current": {"g": 0.0, "E": -90.0, "winf": "...", "tau": "...", "phi": 1.0},
//!   "currents": [{"name": "Na", "g": 35.0, "E": 55.0,
//!                 "gates": [{"name": "m", "power": 3}, {"name": "h", "power": 1}]}],
//!   "gates": [{"name": "m", "xinf": "...", "instantaneous": true},
//!             {"name": "h", "alpha": "...", "beta": "...", "phi": 5.0}],
//!   "window": [-120.0, 60.0],
//!   "i_app": 0.0
//! }
//! ```
//!
//! A gate is given either by `xinf` and `tau` or by the rate constants
//! `alpha` and `beta`, in which case `xinf = alpha/(alpha+beta)` and
//! `tau = 1/(alpha+beta)`.

use serde::{Deserialize, Serialize};

use super::{CurrentSpec, GateFactor, GateSpec, GatingFn, Leak, MCurrent, NeuronModel};
use crate::error::{Error, Result};
use crate::expr::KineticExpr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub capacitance: f64,
    pub leak: LeakConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_current: Option<MCurrentConfig>,
    #[serde(default)]
    pub currents: Vec<CurrentConfig>,
    #[serde(default)]
    pub gates: Vec<GateConfig>,
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    #[serde(default)]
    pub i_app: f64,
}

fn default_window() -> [f64; 2] {
    [-120.0, 60.0]
}

fn default_phi() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakConfig {
    pub g: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCurrentConfig {
    pub g: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub winf: String,
    pub tau: String,
    #[serde(default = "default_phi")]
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentConfig {
    pub name: String,
    pub g: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub gates: Vec<GateRefConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateRefConfig {
    pub name: String,
    pub power: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xinf: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<String>,
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default)]
    pub instantaneous: bool,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn build(&self) -> Result<NeuronModel> {
        if !(self.capacitance > 0.0) {
            return Err(Error::config("capacitance", "must be positive"));
        }
        let [lo, hi] = self.window;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config("window", "expected finite [lo, hi] with lo < hi"));
        }
        check_conductance("leak.g", self.leak.g)?;

        let m_current = match &self.m_current {
            None => None,
            Some(m) => {
                check_conductance("m_current.g", m.g)?;
                check_phi("m_current.phi", m.phi)?;
                Some(MCurrent {
                    g: m.g,
                    e_rev: m.e,
                    steady: GatingFn::new(parse_field("m_current.winf", &m.winf)?),
                    tau: GatingFn::new(parse_field("m_current.tau", &m.tau)?),
                    phi: m.phi,
                })
            }
        };

        let mut gates = Vec::with_capacity(self.gates.len());
        for (i, g) in self.gates.iter().enumerate() {
            if gates.iter().any(|x: &GateSpec| x.name == g.name) {
                return Err(Error::config(format!("gates[{i}].name"), "duplicate gate name"));
            }
            gates.push(build_gate(i, g)?);
        }

        let mut currents = Vec::with_capacity(self.currents.len());
        for (i, c) in self.currents.iter().enumerate() {
            check_conductance(&format!("currents[{i}].g"), c.g)?;
            let mut factors = Vec::with_capacity(c.gates.len());
            for (k, r) in c.gates.iter().enumerate() {
                let field = format!("currents[{i}].gates[{k}]");
                let gate = gates
                    .iter()
                    .position(|g| g.name == r.name)
                    .ok_or_else(|| Error::config(&field, format!("unknown gate `{}`", r.name)))?;
                if r.power < 1 {
                    return Err(Error::config(field, "power must be at least 1"));
                }
                factors.push(GateFactor { gate, power: r.power });
            }
            currents.push(CurrentSpec {
                name: c.name.clone(),
                g: c.g,
                e_rev: c.e,
                gates: factors,
            });
        }

        let model = NeuronModel::assemble(
            self.capacitance,
            Leak {
                g: self.leak.g,
                e_rev: self.leak.e,
            },
            m_current,
            currents,
            gates,
            self.i_app,
            (lo, hi),
        );
        model.check_kinetics()?;
        Ok(model)
    }
}

fn check_conductance(field: &str, g: f64) -> Result<()> {
    if g >= 0.0 && g.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "conductance must be finite and non-negative"))
    }
}

fn check_phi(field: &str, phi: f64) -> Result<()> {
    if phi > 0.0 && phi.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "temperature factor must be positive"))
    }
}

fn parse_field(field: &str, text: &str) -> Result<KineticExpr> {
    KineticExpr::parse(text).map_err(|e| Error::config(field, e.to_string()))
}

fn build_gate(i: usize, g: &GateConfig) -> Result<GateSpec> {
    let field = |name: &str| format!("gates[{i}].{name}");
    check_phi(&field("phi"), g.phi)?;
    let (steady, tau) = match (&g.xinf, &g.tau, &g.alpha, &g.beta) {
        (Some(x), tau, None, None) => {
            let steady = parse_field(&field("xinf"), x)?;
            let tau = match tau {
                Some(t) => parse_field(&field("tau"), t)?,
                None if g.instantaneous => KineticExpr::constant(1.0),
                None => return Err(Error::config(field("tau"), "required for a dynamic gate")),
            };
            (steady, tau)
        }
        (None, None, Some(a), Some(b)) => {
            let a = format!("({a})");
            let b = format!("({b})");
            (
                parse_field(&field("alpha"), &format!("{a}/({a}+{b})"))?,
                parse_field(&field("beta"), &format!("1/({a}+{b})"))?,
            )
        }
        _ => {
            return Err(Error::config(
                field("xinf"),
                "give either xinf (and tau) or alpha and beta",
            ))
        }
    };
    Ok(GateSpec {
        name: g.name.clone(),
        steady: GatingFn::new(steady),
        tau: GatingFn::new(tau),
        phi: g.phi,
        instantaneous: g.instantaneous,
    })
}
