//! Validated grid model and network reduction.

use std::collections::HashMap;

use nalgebra::Matrix2;

use super::config::{AgcConfig, BusKind, GeneratorParams, GridConfig};
use crate::error::{Error, Result};
use crate::linalg::{conditioning_ratio, Mat, SINGULAR_RTOL};

#[derive(Clone, Debug)]
pub struct Generator {
    pub bus: usize,
    pub params: GeneratorParams,
    pub dispatch: f64,
    pub voltage: f64,
}

#[derive(Clone, Debug)]
pub struct Load {
    pub bus: usize,
    pub impedance: Matrix2<f64>,
}

/// Grid with buses indexed by position; `bus_ids` keeps the config labels.
#[derive(Clone, Debug)]
pub struct GridModel {
    pub name: String,
    pub bus_ids: Vec<usize>,
    pub kinds: Vec<BusKind>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub agc: AgcConfig,
    /// Real bus admittance matrix (2 rows per bus), branches only.
    pub y_bus: Mat,
}

/// Network seen from the generator terminals: `I = y · V` over `gens`.
#[derive(Clone, Debug)]
pub struct ReducedNetwork {
    /// Generator indices taking part, in order.
    pub gens: Vec<usize>,
    pub y: Mat,
    /// Maps the stacked terminal voltages of `gens` to every bus voltage.
    pub recover: Mat,
}

impl GridModel {
    pub fn ngen(&self) -> usize {
        self.generators.len()
    }

    pub fn nbus(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn bus_index(&self, id: usize) -> Result<usize> {
        self.bus_ids.iter().position(|&b| b == id).ok_or_else(|| Error::Config(format!("unknown bus {id}")))
    }

    /// Generator index attached to bus position `bus`, if any.
    pub fn generator_at(&self, bus: usize) -> Option<usize> {
        self.generators.iter().position(|g| g.bus == bus)
    }

    /// Bus admittance with the load admittances added on the diagonal.
    pub fn augmented_admittance(&self) -> Mat {
        let mut y = self.y_bus.clone();
        for l in &self.loads {
            let inv = l.impedance.try_inverse().expect("validated at build");
            let k = 2 * l.bus;
            for r in 0..2 {
                for c in 0..2 {
                    y[(k + r, k + c)] += inv[(r, c)];
                }
            }
        }
        y
    }

    /// Eliminates every bus without a generator.
    pub fn kron_reduce(&self) -> Result<ReducedNetwork> {
        self.reduce(None)
    }

    /// Same as [`Self::kron_reduce`] with bus `fault_bus` held at zero
    /// voltage. A faulted generator bus drops out of `gens`.
    pub fn kron_reduce_faulted(&self, fault_bus: usize) -> Result<ReducedNetwork> {
        if fault_bus >= self.nbus() {
            return Err(Error::Config(format!("fault bus position {fault_bus} out of range")));
        }
        self.reduce(Some(fault_bus))
    }

    fn reduce(&self, grounded: Option<usize>) -> Result<ReducedNetwork> {
        let yt = self.augmented_admittance();
        let gens: Vec<usize> = (0..self.ngen()).filter(|&g| Some(self.generators[g].bus) != grounded).collect();
        let kept: Vec<usize> = gens.iter().map(|&g| self.generators[g].bus).collect();
        let interior: Vec<usize> = (0..self.nbus())
            .filter(|b| !kept.contains(b) && Some(*b) != grounded && self.generator_at(*b).is_none())
            .collect();
        let idx = |buses: &[usize]| -> Vec<usize> { buses.iter().flat_map(|&b| [2 * b, 2 * b + 1]).collect() };
        let (ki, ii) = (idx(&kept), idx(&interior));
        let block =
            |rows: &[usize], cols: &[usize]| Mat::from_fn(rows.len(), cols.len(), |r, c| yt[(rows[r], cols[c])]);
        let ygg = block(&ki, &ki);
        let ygr = block(&ki, &ii);
        let yrg = block(&ii, &ki);
        let yrr = block(&ii, &ii);
        // V_interior = -Yrr⁻¹ Yrg V_kept
        let elim = if ii.is_empty() {
            Mat::zeros(0, ki.len())
        } else {
            if conditioning_ratio(&yrr) < SINGULAR_RTOL {
                return Err(Error::Computation("interior-bus admittance block is singular".into()));
            }
            let lu = yrr.lu();
            -lu.solve(&yrg).ok_or_else(|| Error::Computation("interior-bus admittance block is singular".into()))?
        };
        let y = &ygg + &ygr * &elim;
        let mut recover = Mat::zeros(2 * self.nbus(), ki.len());
        for (c, &k) in ki.iter().enumerate() {
            recover[(k, c)] = 1.0;
        }
        for (r, &i) in ii.iter().enumerate() {
            for c in 0..ki.len() {
                recover[(i, c)] = elim[(r, c)];
            }
        }
        Ok(ReducedNetwork { gens, y, recover })
    }
}

fn check_params(p: &GeneratorParams, bus: usize) -> Result<()> {
    let positive = [
        ("omega0", p.omega0),
        ("inertia", p.inertia),
        ("tau_d", p.tau_d),
        ("xd", p.xd),
        ("xd_prime", p.xd_prime),
        ("xq", p.xq),
        ("tau_e", p.tau_e),
        ("pss.washout", p.pss.washout),
        ("pss.lag1", p.pss.lag1),
        ("pss.lag2", p.pss.lag2),
    ];
    for (name, v) in positive {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("generator at bus {bus}: {name} must be positive, got {v}")));
        }
    }
    if !(p.damping >= 0.0) {
        return Err(Error::Config(format!("generator at bus {bus}: damping must be non-negative")));
    }
    if p.xd <= p.xd_prime {
        return Err(Error::Config(format!("generator at bus {bus}: xd must exceed xd_prime")));
    }
    Ok(())
}

/// Validates a configuration and assembles the bus admittance matrix.
pub fn build_grid(config: &GridConfig) -> Result<GridModel> {
    let mut pos = HashMap::new();
    for (i, b) in config.buses.iter().enumerate() {
        if pos.insert(b.id, i).is_some() {
            return Err(Error::Config(format!("duplicate bus {}", b.id)));
        }
    }
    let lookup = |id: usize, what: &str| -> Result<usize> {
        pos.get(&id).copied().ok_or_else(|| Error::Config(format!("{what} refers to unknown bus {id}")))
    };
    let kinds: Vec<BusKind> = config.buses.iter().map(|b| b.kind).collect();
    let nb = kinds.len();

    let mut y_bus = Mat::zeros(2 * nb, 2 * nb);
    for l in &config.lines {
        let (f, t) = (lookup(l.from, "line")?, lookup(l.to, "line")?);
        if f == t {
            return Err(Error::Config(format!("line {}–{} is a self-loop", l.from, l.to)));
        }
        let [g, b] = l.admittance;
        let blk = [[g, -b], [b, g]];
        for r in 0..2 {
            for c in 0..2 {
                y_bus[(2 * f + r, 2 * f + c)] += blk[r][c];
                y_bus[(2 * t + r, 2 * t + c)] += blk[r][c];
                y_bus[(2 * f + r, 2 * t + c)] -= blk[r][c];
                y_bus[(2 * t + r, 2 * f + c)] -= blk[r][c];
            }
        }
    }

    let mut generators = Vec::new();
    for g in &config.generators {
        let bus = lookup(g.bus, "generator")?;
        if kinds[bus] != BusKind::Generator {
            return Err(Error::Config(format!("generator placed on non-generator bus {}", g.bus)));
        }
        if generators.iter().any(|x: &Generator| x.bus == bus) {
            return Err(Error::Config(format!("bus {} carries two generators", g.bus)));
        }
        check_params(&g.params, g.bus)?;
        if !(g.voltage > 0.0) {
            return Err(Error::Config(format!("generator at bus {}: voltage setpoint must be positive", g.bus)));
        }
        generators.push(Generator { bus, params: g.params.clone(), dispatch: g.dispatch, voltage: g.voltage });
    }
    for (i, k) in kinds.iter().enumerate() {
        if *k == BusKind::Generator && !generators.iter().any(|g| g.bus == i) {
            return Err(Error::Config(format!("generator bus {} has no generator", config.buses[i].id)));
        }
    }

    let mut loads = Vec::new();
    for l in &config.loads {
        let bus = lookup(l.bus, "load")?;
        if kinds[bus] != BusKind::Load {
            return Err(Error::Config(format!("load placed on non-load bus {}", l.bus)));
        }
        if loads.iter().any(|x: &Load| x.bus == bus) {
            return Err(Error::Config(format!("bus {} carries two loads", l.bus)));
        }
        let z = Matrix2::new(l.impedance[0][0], l.impedance[0][1], l.impedance[1][0], l.impedance[1][1]);
        let sv = z.singular_values();
        if !(sv[1] > SINGULAR_RTOL * sv[0]) {
            return Err(Error::Config(format!("load at bus {}: impedance is singular", l.bus)));
        }
        loads.push(Load { bus, impedance: z });
    }
    for (i, k) in kinds.iter().enumerate() {
        if *k == BusKind::Load && !loads.iter().any(|l| l.bus == i) {
            return Err(Error::Config(format!("load bus {} has no load", config.buses[i].id)));
        }
    }

    if config.agc.alpha.len() != generators.len() {
        return Err(Error::Config(format!(
            "agc.alpha has {} entries for {} generators",
            config.agc.alpha.len(),
            generators.len()
        )));
    }
    if config.agc.alpha.iter().any(|a| !(*a >= 0.0)) || !(config.agc.k_p >= 0.0) || !(config.agc.k_i >= 0.0) {
        return Err(Error::Config("agc gains and participation factors must be non-negative".into()));
    }

    Ok(GridModel {
        name: config.name.clone(),
        bus_ids: config.buses.iter().map(|b| b.id).collect(),
        kinds,
        generators,
        loads,
        agc: config.agc.clone(),
        y_bus,
    })
}
