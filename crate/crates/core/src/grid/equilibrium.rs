//! Operating points of the grid.

use nalgebra::Vector2;

use super::generator::{self, Setpoints, ANGLE, EMF, FIELD, STATES};
use super::model::{GridModel, ReducedNetwork};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::DVector;

/// Dynamic state of the grid: stacked generator states and the AGC integrator.
#[derive(Clone, Debug, PartialEq)]
pub struct GridState {
    pub x: DVector<f64>,
    pub agc: f64,
}

impl GridState {
    pub fn generator(&self, i: usize) -> &[f64] {
        &self.x.as_slice()[STATES * i..STATES * (i + 1)]
    }

    pub fn frequencies(&self) -> DVector<f64> {
        DVector::from_fn(self.x.len() / STATES, |i, _| self.x[STATES * i + generator::FREQ])
    }
}

#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub state: GridState,
    /// Terminal voltages at the operating point.
    pub voltages: Vec<Vector2<f64>>,
    pub setpoints: Vec<Setpoints>,
    /// Infinity norm of the differential-algebraic residual.
    pub residual: f64,
}

/// Terminal voltages of every generator for the given states. Generators
/// outside `net.gens` (a faulted terminal) get zero voltage.
pub fn solve_voltages(grid: &GridModel, net: &ReducedNetwork, x: &[f64]) -> Result<Vec<Vector2<f64>>> {
    let k = net.gens.len();
    let mut a = net.y.clone();
    let mut rhs = DVector::zeros(2 * k);
    for (j, &g) in net.gens.iter().enumerate() {
        let (m, c) = generator::current_affine(&grid.generators[g].params, &x[STATES * g..STATES * (g + 1)]);
        for r in 0..2 {
            rhs[2 * j + r] = c[r];
            for s in 0..2 {
                a[(2 * j + r, 2 * j + s)] -= m[(r, s)];
            }
        }
    }
    let sol = a.lu().solve(&rhs).ok_or_else(|| Error::Computation("network equations are singular".into()))?;
    let mut v = vec![Vector2::zeros(); grid.ngen()];
    for (j, &g) in net.gens.iter().enumerate() {
        v[g] = Vector2::new(sol[2 * j], sol[2 * j + 1]);
    }
    Ok(v)
}

/// Mechanical power of each generator including the AGC action.
pub fn mechanical_power(grid: &GridModel, setpoints: &[Setpoints], state: &GridState) -> Vec<f64> {
    let command = agc_command(grid, state);
    setpoints.iter().zip(&grid.agc.alpha).map(|(sp, a)| sp.mechanical - a * command).collect()
}

/// Broadcast AGC command `kP·ω̄ + kI·∫ω̄`.
pub fn agc_command(grid: &GridModel, state: &GridState) -> f64 {
    grid.agc.k_p * state.frequencies().mean() + grid.agc.k_i * state.agc
}

/// Infinity norm of the dynamics and network mismatch at `state`.
pub fn dae_residual(grid: &GridModel, setpoints: &[Setpoints], state: &GridState, v: &[Vector2<f64>]) -> Result<f64> {
    let net = grid.kron_reduce()?;
    let mech = mechanical_power(grid, setpoints, state);
    let mut worst = state.frequencies().mean().abs();
    let mut vg = DVector::zeros(2 * grid.ngen());
    for (i, g) in grid.generators.iter().enumerate() {
        let f = generator::dynamics(&g.params, &setpoints[i], state.generator(i), v[i], 0.0, mech[i]);
        worst = f.iter().fold(worst, |m, r| m.max(r.abs()));
        vg[2 * i] = v[i].x;
        vg[2 * i + 1] = v[i].y;
    }
    let inj = &net.y * &vg;
    for (i, g) in grid.generators.iter().enumerate() {
        let cur = generator::current(&g.params, state.generator(i), v[i]);
        worst = worst.max((cur.x - inj[2 * i]).abs()).max((cur.y - inj[2 * i + 1]).abs());
    }
    Ok(worst)
}

/// Power-flow style residual over `(δ, E, Re V, Im V)` per generator plus
/// the distributed slack.
fn flow_residual(grid: &GridModel, net: &ReducedNetwork, dispatch: &[f64], share: &[f64], z: &[f64]) -> DVector<f64> {
    let n = grid.ngen();
    let mut r = DVector::zeros(4 * n + 1);
    let slack = z[4 * n];
    let mut vg = DVector::zeros(2 * n);
    for i in 0..n {
        vg[2 * i] = z[4 * i + 2];
        vg[2 * i + 1] = z[4 * i + 3];
    }
    let inj = &net.y * &vg;
    for (i, g) in grid.generators.iter().enumerate() {
        let x = [z[4 * i], 0.0, z[4 * i + 1], 0.0, 0.0, 0.0, 0.0];
        let v = Vector2::new(z[4 * i + 2], z[4 * i + 3]);
        let (pe, _) = generator::power(&g.params, &x, v);
        let cur = generator::current(&g.params, &x, v);
        r[4 * i] = pe - dispatch[i] - share[i] * slack;
        r[4 * i + 1] = v.norm() - g.voltage;
        r[4 * i + 2] = cur.x - inj[2 * i];
        r[4 * i + 3] = cur.y - inj[2 * i + 1];
    }
    r[4 * n] = z[3];
    r
}

fn newton(
    grid: &GridModel,
    net: &ReducedNetwork,
    dispatch: &[f64],
    share: &[f64],
    mut z: Vec<f64>,
) -> std::result::Result<Vec<f64>, (usize, f64)> {
    const MAX_ITERS: usize = 60;
    let m = z.len();
    let mut r = flow_residual(grid, net, dispatch, share, &z);
    for it in 0..MAX_ITERS {
        let norm = r.amax();
        if norm < 1e-13 {
            return Ok(z);
        }
        let mut jac = Mat::zeros(m, m);
        for c in 0..m {
            let h = 1e-7 * z[c].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += h;
            zm[c] -= h;
            let col = (flow_residual(grid, net, dispatch, share, &zp) - flow_residual(grid, net, dispatch, share, &zm))
                / (2.0 * h);
            jac.set_column(c, &col);
        }
        let Some(step) = jac.lu().solve(&r) else {
            return Err((it, norm));
        };
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a - t * b).collect();
            let rt = flow_residual(grid, net, dispatch, share, &trial);
            if rt.amax() < norm || t < 1e-4 {
                z = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
        if !r.amax().is_finite() {
            return Err((it, f64::INFINITY));
        }
    }
    let norm = r.amax();
    if norm < 1e-11 {
        Ok(z)
    } else {
        Err((MAX_ITERS, norm))
    }
}

/// Solves for the operating point with every terminal at its voltage
/// setpoint and the mismatch against `dispatch` shared by AGC participation.
pub fn solve_equilibrium(grid: &GridModel, dispatch: Option<&[f64]>) -> Result<Equilibrium> {
    let n = grid.ngen();
    let dispatch: Vec<f64> = match dispatch {
        Some(d) if d.len() != n => {
            return Err(Error::Config(format!("dispatch has {} entries for {n} generators", d.len())))
        }
        Some(d) => d.to_vec(),
        None => grid.generators.iter().map(|g| g.dispatch).collect(),
    };
    let total: f64 = grid.agc.alpha.iter().sum();
    let share: Vec<f64> =
        if total > 0.0 { grid.agc.alpha.iter().map(|a| a / total).collect() } else { vec![1.0 / n as f64; n] };
    let net = grid.kron_reduce()?;

    let mut best = (0, f64::INFINITY);
    let mut solution = None;
    for angle in [0.4, 0.8, 0.1, 1.2] {
        let mut z = vec![0.0; 4 * n + 1];
        for (i, g) in grid.generators.iter().enumerate() {
            z[4 * i] = angle;
            z[4 * i + 1] = 1.2;
            z[4 * i + 2] = g.voltage;
        }
        match newton(grid, &net, &dispatch, &share, z) {
            Ok(z) if physical(grid, &z) => {
                solution = Some(z);
                break;
            }
            Ok(_) => {}
            Err(e) if e.1 < best.1 => best = e,
            Err(_) => {}
        }
    }
    let z = solution.ok_or(Error::NonConvergence { iterations: best.0, residual: best.1 })?;

    let mut x = DVector::zeros(STATES * n);
    let mut voltages = Vec::with_capacity(n);
    let mut setpoints = Vec::with_capacity(n);
    for (i, g) in grid.generators.iter().enumerate() {
        let p = &g.params;
        let v = Vector2::new(z[4 * i + 2], z[4 * i + 3]);
        let (delta, e) = (z[4 * i], z[4 * i + 1]);
        let (_, vq) = generator::machine_frame(delta, v);
        let ratio = p.xd / p.xd_prime;
        let field = ratio * e - (ratio - 1.0) * vq;
        x[STATES * i + ANGLE] = delta;
        x[STATES * i + EMF] = e;
        x[STATES * i + FIELD] = field;
        let gen = [delta, 0.0, e, field, 0.0, 0.0, 0.0];
        let (pe, _) = generator::power(p, &gen, v);
        setpoints.push(Setpoints { mechanical: pe, field, voltage: v.norm() });
        voltages.push(v);
    }
    let state = GridState { x, agc: 0.0 };
    let residual = dae_residual(grid, &setpoints, &state, &voltages)?;
    if residual > 1e-10 {
        return Err(Error::NonConvergence { iterations: 0, residual });
    }
    Ok(Equilibrium { state, voltages, setpoints, residual })
}

/// Internal voltage positive and rotor ahead of the terminal by less than 90°.
fn physical(grid: &GridModel, z: &[f64]) -> bool {
    (0..grid.ngen()).all(|i| {
        let v = Vector2::new(z[4 * i + 2], z[4 * i + 3]);
        let (_, vq) = generator::machine_frame(z[4 * i], v);
        z[4 * i + 1] > 0.0 && vq > 0.0
    })
}

#[cfg(test)]
mod tests {
    use super::super::config;
    use super::super::model::build_grid;
    use super::*;

    #[test]
    fn desk4_equilibrium_has_small_residual() {
        let grid = build_grid(&config::desk4()).unwrap();
        let eq = solve_equilibrium(&grid, None).unwrap();
        assert!(eq.residual <= 1e-10, "residual {}", eq.residual);
        for (v, g) in eq.voltages.iter().zip(&grid.generators) {
            assert!((v.norm() - g.voltage).abs() < 1e-10);
        }
        let solved = solve_voltages(&grid, &grid.kron_reduce().unwrap(), eq.state.x.as_slice()).unwrap();
        for (a, b) in solved.iter().zip(&eq.voltages) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn dispatch_beyond_transfer_capacity_does_not_converge() {
        // Machine 1 does not participate and cannot export 30 pu through its branch.
        let mut c = config::desk4();
        c.agc.alpha = vec![0.0, 1.0, 1.0, 1.0];
        c.generators[0].dispatch = 30.0;
        let grid = build_grid(&c).unwrap();
        assert!(matches!(solve_equilibrium(&grid, None), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn dispatch_length_is_checked() {
        let grid = build_grid(&config::desk4()).unwrap();
        assert!(solve_equilibrium(&grid, Some(&[1.0])).is_err());
    }
}
