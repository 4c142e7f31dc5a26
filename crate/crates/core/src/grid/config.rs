//! JSON grid description and the shipped templates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKind {
    Generator,
    Load,
    NonUnit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusConfig {
    pub id: usize,
    pub kind: BusKind,
}

/// Series branch with complex admittance `g + jb`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    pub from: usize,
    pub to: usize,
    pub admittance: [f64; 2],
}

/// Three-state stabilizer: washout followed by two lead-lag stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PssParams {
    pub gain: f64,
    pub washout: f64,
    pub lead1: f64,
    pub lag1: f64,
    pub lead2: f64,
    pub lag2: f64,
}

/// Flux-decay generator with AVR and stabilizer, in per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Nominal angular frequency (rad/s).
    pub omega0: f64,
    pub inertia: f64,
    pub damping: f64,
    pub tau_d: f64,
    pub xd: f64,
    pub xd_prime: f64,
    pub xq: f64,
    pub tau_e: f64,
    pub k_avr: f64,
    pub pss: PssParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub bus: usize,
    pub params: GeneratorParams,
    /// Scheduled active power.
    pub dispatch: f64,
    /// Terminal voltage magnitude setpoint.
    pub voltage: f64,
}

/// Constant-impedance load; `impedance` is the real 2×2 form of the
/// complex impedance acting on `(Re V, Im V)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadConfig {
    pub bus: usize,
    pub impedance: [[f64; 2]; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgcConfig {
    pub k_p: f64,
    pub k_i: f64,
    /// Participation factors, one per generator in `generators` order.
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default)]
    pub name: String,
    pub buses: Vec<BusConfig>,
    pub lines: Vec<LineConfig>,
    pub generators: Vec<GeneratorConfig>,
    pub loads: Vec<LoadConfig>,
    pub agc: AgcConfig,
}

impl GridConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("grid config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid config serializes")
    }

    /// Scales every load impedance by `factor`.
    pub fn scale_loads(&mut self, factor: f64) {
        for l in &mut self.loads {
            for row in &mut l.impedance {
                for z in row {
                    *z *= factor;
                }
            }
        }
    }
}

/// Real 2×2 form of the complex number `re + j·im`.
pub fn complex_block(re: f64, im: f64) -> [[f64; 2]; 2] {
    [[re, -im], [im, re]]
}

/// Impedance drawing `p + jq` at unit voltage.
pub fn load_impedance(p: f64, q: f64) -> [[f64; 2]; 2] {
    // S = |V|²/conj(z)  ⇒  z = |V|²/conj(S)
    let den = p * p + q * q;
    complex_block(p / den, q / den)
}

fn series_admittance(r: f64, x: f64) -> [f64; 2] {
    let den = r * r + x * x;
    [r / den, -x / den]
}

pub fn desk4_generator() -> GeneratorParams {
    GeneratorParams {
        omega0: 2.0 * std::f64::consts::PI * 60.0,
        inertia: 10.0,
        damping: 2.0,
        tau_d: 5.0,
        xd: 1.8,
        xd_prime: 0.3,
        xq: 1.7,
        tau_e: 0.05,
        k_avr: -50.0,
        pss: PssParams { gain: -1.0, washout: 10.0, lead1: 0.05, lag1: 0.02, lead2: 3.0, lag2: 5.4 },
    }
}

/// Four machines on a six-bus ring: generators at buses 1–4 behind
/// step-up branches to load buses 5–8, plus two non-unit buses 9 and 10.
pub fn desk4() -> GridConfig {
    let mut buses = Vec::new();
    for id in 1..=4 {
        buses.push(BusConfig { id, kind: BusKind::Generator });
    }
    for id in 5..=8 {
        buses.push(BusConfig { id, kind: BusKind::Load });
    }
    for id in 9..=10 {
        buses.push(BusConfig { id, kind: BusKind::NonUnit });
    }
    let step_up = series_admittance(0.01, 0.05);
    let ring = series_admittance(0.01, 0.1);
    let mut lines: Vec<LineConfig> = (1..=4).map(|g| LineConfig { from: g, to: g + 4, admittance: step_up }).collect();
    for (from, to) in [(5, 6), (6, 9), (9, 7), (7, 8), (8, 10), (10, 5)] {
        lines.push(LineConfig { from, to, admittance: ring });
    }
    let generators =
        (1..=4).map(|bus| GeneratorConfig { bus, params: desk4_generator(), dispatch: 1.0, voltage: 1.0 }).collect();
    let loads = (5..=8).map(|bus| LoadConfig { bus, impedance: load_impedance(0.917, 0.275) }).collect();
    GridConfig {
        name: "desk4".into(),
        buses,
        lines,
        generators,
        loads,
        agc: AgcConfig { k_p: 5.0, k_i: 2.0, alpha: vec![0.25; 4] },
    }
}

const IEEE68_LOAD_BUSES: [usize; 35] = [
    1, 3, 4, 7, 8, 9, 12, 15, 16, 17, 18, 20, 21, 23, 24, 25, 26, 27, 28, 29, 33, 36, 39, 40, 41, 42, 44, 45, 46, 47,
    48, 49, 50, 51, 52,
];

/// Bus typing of the 68-bus benchmark (generators at buses 53–68, 35 load
/// buses). Branches and every numeric parameter are placeholders to be
/// replaced by user data: the branch list is a connected backbone, not the
/// benchmark's transmission data.
pub fn ieee68_topology() -> GridConfig {
    let buses = (1..=68)
        .map(|id| {
            let kind = if id >= 53 {
                BusKind::Generator
            } else if IEEE68_LOAD_BUSES.contains(&id) {
                BusKind::Load
            } else {
                BusKind::NonUnit
            };
            BusConfig { id, kind }
        })
        .collect();
    let placeholder = series_admittance(0.01, 0.1);
    let mut lines: Vec<LineConfig> =
        (1..52).map(|b| LineConfig { from: b, to: b + 1, admittance: placeholder }).collect();
    lines.push(LineConfig { from: 52, to: 1, admittance: placeholder });
    for (k, g) in (53..=68).enumerate() {
        lines.push(LineConfig { from: g, to: 2 + 3 * k, admittance: series_admittance(0.0, 0.05) });
    }
    let generators =
        (53..=68).map(|bus| GeneratorConfig { bus, params: desk4_generator(), dispatch: 1.0, voltage: 1.0 }).collect();
    let per_load = 16.0 / IEEE68_LOAD_BUSES.len() as f64;
    let loads = IEEE68_LOAD_BUSES
        .iter()
        .map(|&bus| LoadConfig { bus, impedance: load_impedance(per_load, 0.3 * per_load) })
        .collect();
    GridConfig {
        name: "ieee68-topology".into(),
        buses,
        lines,
        generators,
        loads,
        agc: AgcConfig { k_p: 5.0, k_i: 2.0, alpha: vec![1.0 / 16.0; 16] },
    }
}

/// Looks up a shipped template by name.
pub fn template(name: &str) -> Result<GridConfig> {
    match name {
        "desk4" => Ok(desk4()),
        "ieee68-topology" => Ok(ieee68_topology()),
        other => Err(Error::Config(format!("unknown grid template `{other}`"))),
    }
}
