//! Built-in models: Wang–Buzsáki, Stiefel and reduced Traub–Miles, each
//! with an M-current. `g_M` and `I_app` default to zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{
    CurrentConfig, GateConfig, GateRefConfig, LeakConfig, MCurrentConfig, ModelConfig,
};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    WangBuzsaki,
    Stiefel,
    Rtm,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::WangBuzsaki, Preset::Stiefel, Preset::Rtm];

    pub fn name(self) -> &'static str {
        match self {
            Preset::WangBuzsaki => "wang-buzsaki",
            Preset::Stiefel => "stiefel",
            Preset::Rtm => "rtm",
        }
    }

    pub fn config(self) -> ModelConfig {
        match self {
            Preset::WangBuzsaki => wang_buzsaki(),
            Preset::Stiefel => stiefel(),
            Preset::Rtm => rtm(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wang-buzsaki" | "wb" => Ok(Preset::WangBuzsaki),
            "stiefel" => Ok(Preset::Stiefel),
            "rtm" => Ok(Preset::Rtm),
            other => Err(Error::config("model", format!("unknown preset `{other}`"))),
        }
    }
}

fn gate_xinf(name: &str, xinf: &str, tau: Option<&str>, phi: f64, instantaneous: bool) -> GateConfig {
    GateConfig {
        name: name.into(),
        xinf: Some(xinf.into()),
        tau: tau.map(Into::into),
        alpha: None,
        beta: None,
        phi,
        instantaneous,
    }
}

fn gate_rates(name: &str, alpha: &str, beta: &str, phi: f64, instantaneous: bool) -> GateConfig {
    GateConfig {
        name: name.into(),
        xinf: None,
        tau: None,
        alpha: Some(alpha.into()),
        beta: Some(beta.into()),
        phi,
        instantaneous,
    }
}

fn sodium_potassium(g_na: f64, e_na: f64, g_k: f64, e_k: f64) -> Vec<CurrentConfig> {
    let r = |name: &str, power| GateRefConfig {
        name: name.into(),
        power,
    };
    vec![
        CurrentConfig {
            name: "Na".into(),
            g: g_na,
            e: e_na,
            gates: vec![r("m", 3), r("h", 1)],
        },
        CurrentConfig {
            name: "K".into(),
            g: g_k,
            e: e_k,
            gates: vec![r("n", 4)],
        },
    ]
}

fn wang_buzsaki() -> ModelConfig {
    ModelConfig {
        capacitance: 1.0,
        leak: LeakConfig { g: 0.1, e: -65.0 },
        m_current: Some(MCurrentConfig {
            g: 0.0,
            e: -90.0,
            winf: "1/(exp(-(V+27)/7)+1)".into(),
            tau: "1/(0.003*(exp((V+63)/15)+exp(-(V+63)/15)))".into(),
            phi: 1.0,
        }),
        currents: sodium_potassium(35.0, 55.0, 9.0, -90.0),
        gates: vec![
            gate_rates(
                "m",
                "-0.1*(V+35)/(exp(-0.1*(V+35))-1)",
                "4*exp(-(V+60)/18)",
                1.0,
                true,
            ),
            gate_rates(
                "h",
                "0.07*exp(-(V+58)/20)",
                "1/(exp(-0.1*(V+28))+1)",
                5.0,
                false,
            ),
            gate_rates(
                "n",
                "-0.01*(V+34)/(exp(-0.1*(V+34))-1)",
                "0.125*exp(-(V+44)/80)",
                5.0,
                false,
            ),
        ],
        window: [-120.0, 60.0],
        i_app: 0.0,
    }
}

fn stiefel() -> ModelConfig {
    ModelConfig {
        capacitance: 1.0,
        leak: LeakConfig { g: 0.02, e: -60.0 },
        m_current: Some(MCurrentConfig {
            g: 0.0,
            e: -90.0,
            winf: "1/(exp(-(V+39)/5)+1)".into(),
            tau: "75".into(),
            phi: 1.0,
        }),
        currents: sodium_potassium(24.0, 55.0, 3.0, -90.0),
        gates: vec![
            gate_xinf("m", "1/(exp(-(V+30)/9.5)+1)", None, 1.0, true),
            gate_xinf(
                "h",
                "1/(exp((V+53)/7)+1)",
                Some("0.37+2.78/(exp((V+40.5)/6)+1)"),
                1.0,
                false,
            ),
            gate_xinf(
                "n",
                "1/(exp(-(V+30)/10)+1)",
                Some("0.37+1.85/(exp((V+27)/15)+1)"),
                1.0,
                false,
            ),
        ],
        window: [-120.0, 60.0],
        i_app: 0.0,
    }
}

fn rtm() -> ModelConfig {
    ModelConfig {
        capacitance: 1.0,
        leak: LeakConfig { g: 0.1, e: -67.0 },
        m_current: Some(MCurrentConfig {
            g: 0.0,
            e: -100.0,
            winf: "1/(exp(-(V+35)/10)+1)".into(),
            tau: "400/(3.3*exp((V+35)/20)+exp(-(V+35)/20))".into(),
            phi: 1.0,
        }),
        currents: sodium_potassium(100.0, 50.0, 80.0, -100.0),
        gates: vec![
            gate_rates(
                "m",
                "0.32*(V+54)/(1-exp(-(V+54)/4))",
                "0.28*(V+27)/(exp((V+27)/5)-1)",
                1.0,
                false,
            ),
            gate_rates(
                "h",
                "0.128*exp(-(V+50)/18)",
                "4/(exp(-(V+27)/5)+1)",
                1.0,
                false,
            ),
            gate_rates(
                "n",
                "0.032*(V+52)/(1-exp(-(V+52)/5))",
                // Traub–Miles potassium deactivation rate.
                "0.5*exp(-(V+57)/40)",
                1.0,
                false,
            ),
        ],
        window: [-120.0, 60.0],
        i_app: 0.0,
    }
}
