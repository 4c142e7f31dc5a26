//! Nonlinear time-domain simulation with ground faults and retrofit modules.

use nalgebra::Vector2;

use super::equilibrium::{agc_command, solve_voltages, Equilibrium, GridState};
use super::generator::{self, FREQ, STATES};
use super::linearize::linearized_network;
use super::linearize::PORT_WIDTH;
use super::model::{GridModel, ReducedNetwork};
use crate::analysis::{l2_norm, simulate_lti, time_grid, Input, Trajectory};
use crate::error::{Error, Result};
use crate::lti::StateSpace;
use crate::network::entire_closed_loop;
use crate::DVector;

/// Bus voltage forced to zero for `duration` seconds from `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultEvent {
    /// Bus position in the grid model.
    pub bus: usize,
    pub duration: f64,
}

impl FaultEvent {
    pub fn new(bus: usize) -> Self {
        Self { bus, duration: 0.1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scenario {
    pub fault: Option<FaultEvent>,
    /// Added to the stacked generator states at `t = 0`.
    pub initial_offset: Option<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct GridRun {
    /// Frequency deviation of every generator.
    pub omega: Trajectory,
    pub omega_l2: f64,
    pub final_state: GridState,
}

/// Realization of a retrofit module in the nonlinear simulation.
#[derive(Clone, Copy, Debug)]
pub enum Module<'a> {
    /// Linear controller acting on deviations of `(y, v)` or of `y` alone.
    Linear(&'a StateSpace),
    /// Output-rectifying module whose rectifier is a copy of the nonlinear
    /// generator driven by the measured terminal voltage and mechanical
    /// power with zero control input. The internal stabilizer acts on the
    /// state minus the copy. Its linearization is the linear output-rectifying
    /// controller; unlike it, the copy follows a uniform rotation of every
    /// angle, which leaves its output unchanged.
    Rectified(&'a StateSpace),
}

impl Module<'_> {
    fn nstates(&self) -> usize {
        match self {
            Module::Linear(k) => k.nstates(),
            Module::Rectified(k) => STATES + k.nstates(),
        }
    }

    fn check(&self, i: usize) -> Result<()> {
        let (k, widths) = match self {
            Module::Linear(k) => (k, [STATES, STATES + PORT_WIDTH]),
            Module::Rectified(k) => (k, [STATES, STATES]),
        };
        if k.noutputs() != 1 || !widths.contains(&k.ninputs()) {
            return Err(Error::dim(format!(
                "module {i} is {}->{}, expected {} inputs and 1 output",
                k.ninputs(),
                k.noutputs(),
                if widths[0] == widths[1] {
                    format!("{}", widths[0])
                } else {
                    format!("{} or {}", widths[0], widths[1])
                }
            )));
        }
        Ok(())
    }
}

/// Everything the right-hand side needs besides the state.
struct Plant<'a> {
    grid: &'a GridModel,
    eq: &'a Equilibrium,
    modules: &'a [Option<Module<'a>>],
    offsets: Vec<usize>,
}

impl Plant<'_> {
    fn deriv(&self, net: &ReducedNetwork, s: &[f64], active: bool) -> Result<Vec<f64>> {
        let n = self.grid.ngen();
        let x = &s[..STATES * n];
        let v = solve_voltages(self.grid, net, x)?;
        let state = GridState { x: DVector::from_column_slice(x), agc: s[STATES * n] };
        let command = agc_command(self.grid, &state);
        let mut out = vec![0.0; s.len()];
        let mut mean = 0.0;
        for (i, g) in self.grid.generators.iter().enumerate() {
            let xi = &x[STATES * i..STATES * (i + 1)];
            let dmech = -self.grid.agc.alpha[i] * command;
            let sp = &self.eq.setpoints[i];
            let mut u = 0.0;
            let at = self.offsets[i];
            match (active, self.modules[i]) {
                (true, Some(Module::Linear(k))) => {
                    let m = self.module_input(i, xi, v[i], dmech, k.ninputs());
                    u = stabilizer_step(k, &s[at..at + k.nstates()], &m, &mut out[at..at + k.nstates()]);
                }
                (true, Some(Module::Rectified(k))) => {
                    let x0 = self.eq.state.generator(i);
                    let copy: Vec<f64> = (0..STATES).map(|j| x0[j] + s[at + j]).collect();
                    let fc = generator::dynamics(&g.params, sp, &copy, v[i], 0.0, sp.mechanical + dmech);
                    out[at..at + STATES].copy_from_slice(&fc);
                    let m = DVector::from_fn(STATES, |j, _| xi[j] - copy[j]);
                    let ks = at + STATES;
                    u = stabilizer_step(k, &s[ks..ks + k.nstates()], &m, &mut out[ks..ks + k.nstates()]);
                }
                _ => {}
            }
            let f = generator::dynamics(&g.params, sp, xi, v[i], u, sp.mechanical + dmech);
            out[STATES * i..STATES * (i + 1)].copy_from_slice(&f);
            mean += xi[FREQ] / n as f64;
        }
        out[STATES * n] = mean;
        Ok(out)
    }

    /// Deviation of `(state, terminal voltage, mechanical power)` from the
    /// operating point, truncated to what the module reads.
    fn module_input(&self, i: usize, xi: &[f64], v: Vector2<f64>, dmech: f64, width: usize) -> DVector<f64> {
        let x0 = self.eq.state.generator(i);
        let v0 = self.eq.voltages[i];
        let mut m = DVector::zeros(STATES + PORT_WIDTH);
        for k in 0..STATES {
            m[k] = xi[k] - x0[k];
        }
        m[STATES] = v.x - v0.x;
        m[STATES + 1] = v.y - v0.y;
        m[STATES + 2] = dmech;
        m.rows(0, width).into_owned()
    }
}

/// Writes the controller state derivative into `dz` and returns its output.
fn stabilizer_step(k: &StateSpace, z: &[f64], m: &DVector<f64>, dz: &mut [f64]) -> f64 {
    let z = DVector::from_column_slice(z);
    dz.copy_from_slice((&k.a * &z + &k.b * m).as_slice());
    (&k.c * &z + &k.d * m)[0]
}

/// Classical RK4 on the differential-algebraic grid model, solving the
/// network at every stage. A fault occupies the first `duration` seconds
/// and `horizon` seconds follow it. Modules engage when the fault clears,
/// starting from zero internal state, so the disturbance they see is the
/// post-fault state rather than the fault itself.
pub fn simulate_grid(
    grid: &GridModel,
    eq: &Equilibrium,
    scenario: &Scenario,
    modules: &[Option<Module>],
    dt: f64,
    horizon: f64,
) -> Result<GridRun> {
    let n = grid.ngen();
    if modules.len() != n {
        return Err(Error::dim(format!("{} module slots for {n} generators", modules.len())));
    }
    let mut offsets = Vec::with_capacity(n);
    let mut total = STATES * n + 1;
    for (i, m) in modules.iter().enumerate() {
        offsets.push(total);
        if let Some(k) = m {
            k.check(i)?;
            total += k.nstates();
        }
    }
    let fault_steps = match scenario.fault {
        Some(f) if !(f.duration >= 0.0) => return Err(Error::Config("fault duration must be non-negative".into())),
        Some(f) => (f.duration / dt).round() as usize,
        None => 0,
    };
    let times = time_grid(dt, fault_steps as f64 * dt + horizon)?;
    let normal = grid.kron_reduce()?;
    let faulted = match scenario.fault {
        Some(f) => Some(grid.kron_reduce_faulted(f.bus)?),
        None => None,
    };
    let plant = Plant { grid, eq, modules, offsets };

    let mut s = vec![0.0; total];
    s[..STATES * n].copy_from_slice(eq.state.x.as_slice());
    s[STATES * n] = eq.state.agc;
    if let Some(off) = &scenario.initial_offset {
        if off.len() != STATES * n {
            return Err(Error::dim(format!("initial offset has {} entries, expected {}", off.len(), STATES * n)));
        }
        for k in 0..STATES * n {
            s[k] += off[k];
        }
    }

    let omega_of = |s: &[f64]| DVector::from_fn(n, |i, _| s[STATES * i + FREQ]);
    let mut values = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        values.push(omega_of(&s));
        if k + 1 == times.len() {
            break;
        }
        let (net, active) = match &faulted {
            Some(f) if k < fault_steps => (f, false),
            _ => (&normal, true),
        };
        let k1 = plant.deriv(net, &s, active)?;
        let k2 = plant.deriv(net, &axpy(&s, 0.5 * dt, &k1), active)?;
        let k3 = plant.deriv(net, &axpy(&s, 0.5 * dt, &k2), active)?;
        let k4 = plant.deriv(net, &axpy(&s, dt, &k3), active)?;
        for j in 0..total {
            s[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !s.iter().all(|x| x.is_finite()) {
            return Err(Error::Computation(format!("simulation diverged at t = {:.3}", times[k + 1])));
        }
    }
    let omega = Trajectory { times, values, dt };
    let omega_l2 = l2_norm(&omega);
    let final_state = GridState { x: DVector::from_column_slice(&s[..STATES * n]), agc: s[STATES * n] };
    Ok(GridRun { omega, omega_l2, final_state })
}

fn axpy(s: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    s.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// Writes `t,omega_1,…,omega_N` rows.
/// Largest gap between the nonlinear and the linearized frequency response
/// to an initial offset of the generator states, together with the peak of
/// the linear response. No modules, AGC included.
pub fn linearization_gap(
    grid: &GridModel,
    eq: &Equilibrium,
    offset: &DVector<f64>,
    dt: f64,
    horizon: f64,
) -> Result<(f64, f64)> {
    let n = grid.ngen();
    let scenario = Scenario { fault: None, initial_offset: Some(offset.clone()) };
    let modules = vec![None; n];
    let nonlinear = simulate_grid(grid, eq, &scenario, &modules, dt, horizon)?;
    let net = linearized_network(grid, eq, true)?;
    let zeros: Vec<StateSpace> = (0..n).map(|_| StateSpace::zero(1, STATES)).collect();
    let cl = entire_closed_loop(&net, &zeros)?;
    let mut x0 = DVector::zeros(cl.nstates());
    x0.rows_mut(0, STATES * n).copy_from(offset);
    let linear = simulate_lti(&cl, &Input::Zero, &x0, dt, horizon)?;
    let gap = nonlinear.omega.values.iter().zip(&linear.values).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    Ok((gap, linear.peak()))
}

pub fn omega_csv(run: &GridRun) -> String {
    let n = run.omega.width();
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",omega_{i}"));
    }
    out.push('\n');
    for (t, w) in run.omega.times.iter().zip(&run.omega.values) {
        out.push_str(&format!("{t:.6}"));
        for x in w.iter() {
            out.push_str(&format!(",{x:.9e}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::config;
    use super::super::equilibrium::solve_equilibrium;
    use super::super::model::build_grid;
    use super::*;
    use num_complex::Complex64;

    const NONE: [Option<Module>; 4] = [None; 4];

    fn desk4() -> (GridModel, Equilibrium) {
        let grid = build_grid(&config::desk4()).unwrap();
        let eq = solve_equilibrium(&grid, None).unwrap();
        (grid, eq)
    }

    #[test]
    fn equilibrium_is_invariant_without_fault() {
        let (grid, eq) = desk4();
        let run = simulate_grid(&grid, &eq, &Scenario::default(), &NONE, 1e-3, 10.0).unwrap();
        assert!(run.omega.peak() <= 1e-10, "peak {}", run.omega.peak());
        let drift = (&run.final_state.x - &eq.state.x).amax();
        assert!(drift <= 1e-9, "drift {drift}");
    }

    #[test]
    fn linearization_predicts_small_perturbations() {
        let (grid, eq) = desk4();
        for slot in [FREQ, STATES + 2, 3 * STATES] {
            let mut offset = DVector::zeros(STATES * 4);
            offset[slot] = 1e-4;
            let (gap, scale) = linearization_gap(&grid, &eq, &offset, 1e-3, 2.0).unwrap();
            assert!(scale > 0.0 && gap <= 1e-3 * scale, "slot {slot}: gap {gap} vs scale {scale}");
        }
    }

    #[test]
    fn terminal_power_identity_holds_along_fault_trajectory() {
        let (grid, eq) = desk4();
        let red = grid.kron_reduce().unwrap();
        let fault = Scenario { fault: Some(FaultEvent::new(grid.bus_index(6).unwrap())), initial_offset: None };
        let mut state = eq.state.clone();
        for horizon in [0.05, 0.5, 1.0] {
            let run = simulate_grid(&grid, &eq, &fault, &NONE, 1e-3, horizon).unwrap();
            state = run.final_state;
            let v = solve_voltages(&grid, &red, state.x.as_slice()).unwrap();
            for (i, g) in grid.generators.iter().enumerate() {
                let xi = state.generator(i);
                let cur = generator::current(&g.params, xi, v[i]);
                let s = Complex64::new(v[i].x, v[i].y) * Complex64::new(cur.x, -cur.y);
                let (p, q) = generator::power(&g.params, xi, v[i]);
                assert!((s.re - p).abs() <= 1e-8 && (s.im - q).abs() <= 1e-8);
            }
        }
        assert!(state.frequencies().amax() > 0.0);
    }

    #[test]
    fn fault_disturbs_and_grid_recovers() {
        let (grid, eq) = desk4();
        let fault = Scenario { fault: Some(FaultEvent::new(grid.bus_index(1).unwrap())), initial_offset: None };
        let run = simulate_grid(&grid, &eq, &fault, &NONE, 1e-3, 20.0).unwrap();
        assert!(run.omega_l2 > 0.0);
        let last = run.omega.values.last().unwrap().amax();
        assert!(last < 0.05 * run.omega.peak(), "last {last}, peak {}", run.omega.peak());
        let csv = omega_csv(&run);
        assert!(csv.starts_with("t,omega_1,omega_2,omega_3,omega_4\n"));
        assert_eq!(csv.lines().count(), run.omega.len() + 1);
    }

    #[test]
    fn module_shape_is_checked() {
        let (grid, eq) = desk4();
        let bad = StateSpace::zero(1, 3);
        let modules = [Some(Module::Linear(&bad)), None, None, None];
        assert!(simulate_grid(&grid, &eq, &Scenario::default(), &modules, 1e-3, 0.1).is_err());
        let wide = StateSpace::zero(1, STATES + PORT_WIDTH);
        let modules = [Some(Module::Rectified(&wide)), None, None, None];
        assert!(simulate_grid(&grid, &eq, &Scenario::default(), &modules, 1e-3, 0.1).is_err());
    }
}
