//! Linearized grid: generator plants, AGC and the network interaction.

use nalgebra::Vector2;

use super::equilibrium::Equilibrium;
use super::generator::{self, FREQ, STATES};
use super::model::GridModel;
use crate::error::{Error, Result};
use crate::linalg::{range_and_complement, singular_values, spectral_abscissa, Mat};
use crate::lti::{PartitionedPlant, StateSpace};
use crate::network::{assemble_network, NetworkModel};

const FD_STEP: f64 = 1e-6;
const EQUILIBRIUM_TOL: f64 = 1e-8;

/// Width of the interaction ports: terminal voltage and mechanical power
/// in, terminal current and frequency out.
pub const PORT_WIDTH: usize = 3;

/// Linear plant of generator `i` at the operating point.
///
/// Ports: `v = (Re V, Im V, U)`, `d` enters every state, `u` is the AVR
/// reference, `w = (Re I, Im I, ω)`, `z = ω`, `y` is the full state.
pub fn linearize_generator(grid: &GridModel, eq: &Equilibrium, i: usize) -> Result<PartitionedPlant> {
    if i >= grid.ngen() {
        return Err(Error::Config(format!("generator {i} out of range")));
    }
    let p = &grid.generators[i].params;
    let sp = &eq.setpoints[i];
    let x0: Vec<f64> = eq.state.generator(i).to_vec();
    let v0 = eq.voltages[i];

    // Arguments: state (7), voltage (2), reference input, mechanical power.
    let nargs = STATES + 4;
    let mut args0 = x0.clone();
    args0.extend([v0.x, v0.y, 0.0, sp.mechanical]);
    let eval = |a: &[f64]| -> (Vec<f64>, Vector2<f64>) {
        let v = Vector2::new(a[STATES], a[STATES + 1]);
        let f = generator::dynamics(p, sp, &a[..STATES], v, a[STATES + 2], a[STATES + 3]);
        (f.to_vec(), generator::current(p, &a[..STATES], v))
    };
    let (f0, _) = eval(&args0);
    let drift = f0.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    if drift > EQUILIBRIUM_TOL {
        return Err(Error::NotEquilibrium { residual: drift });
    }

    let mut jf = Mat::zeros(STATES, nargs);
    let mut jg = Mat::zeros(2, nargs);
    for c in 0..nargs {
        let h = FD_STEP * args0[c].abs().max(1.0);
        let mut ap = args0.clone();
        let mut am = args0.clone();
        ap[c] += h;
        am[c] -= h;
        let ((fp, gp), (fm, gm)) = (eval(&ap), eval(&am));
        for r in 0..STATES {
            jf[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
        for r in 0..2 {
            jg[(r, c)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }

    let a = jf.columns(0, STATES).into_owned();
    let bv = Mat::from_fn(STATES, PORT_WIDTH, |r, c| if c < 2 { jf[(r, STATES + c)] } else { jf[(r, STATES + 3)] });
    let bd = Mat::identity(STATES, STATES);
    let bu = jf.columns(STATES + 2, 1).into_owned();
    let mut cw = Mat::zeros(PORT_WIDTH, STATES);
    cw.view_mut((0, 0), (2, STATES)).copy_from(&jg.columns(0, STATES));
    cw[(2, FREQ)] = 1.0;
    let mut cz = Mat::zeros(1, STATES);
    cz[(0, FREQ)] = 1.0;
    let cy = Mat::identity(STATES, STATES);

    let (m_in, m_out) = (PORT_WIDTH + STATES + 1, PORT_WIDTH + 1 + STATES);
    let mut d = Mat::zeros(m_out, m_in);
    d.view_mut((0, 0), (2, 2)).copy_from(&jg.columns(STATES, 2));
    PartitionedPlant::from_blocks(a, [&bv, &bd, &bu], [&cw, &cz, &cy], Some(d))
}

/// Linear AGC from stacked frequency deviations to stacked mechanical
/// power deviations. Static when the integral gain is zero.
pub fn agc_controller(grid: &GridModel) -> StateSpace {
    let n = grid.ngen();
    let agc = &grid.agc;
    let mean = Mat::from_element(1, n, 1.0 / n as f64);
    let alpha = Mat::from_iterator(n, 1, agc.alpha.iter().copied());
    let d = &alpha * &mean * -agc.k_p;
    if agc.k_i == 0.0 {
        return StateSpace::static_gain(d);
    }
    StateSpace::new(Mat::zeros(1, 1), mean, &alpha * -agc.k_i, d).expect("AGC dimensions are consistent")
}

/// Interaction from stacked `w` to stacked `v`: the reduced network maps
/// terminal currents to voltages and, when `with_agc` is set, the AGC maps
/// frequencies to mechanical power.
pub fn network_interaction(grid: &GridModel, with_agc: bool) -> Result<StateSpace> {
    let n = grid.ngen();
    let net = grid.kron_reduce()?;
    let z = net
        .y
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Computation("reduced admittance matrix is singular".into()))?;
    let agc = if with_agc { agc_controller(grid) } else { StateSpace::static_gain(Mat::zeros(n, n)) };
    let w = PORT_WIDTH * n;
    let ns = agc.nstates();
    let mut b = Mat::zeros(ns, w);
    let mut c = Mat::zeros(w, ns);
    let mut d = Mat::zeros(w, w);
    for i in 0..n {
        for j in 0..n {
            for r in 0..2 {
                for s in 0..2 {
                    d[(PORT_WIDTH * i + r, PORT_WIDTH * j + s)] = z[(2 * i + r, 2 * j + s)];
                }
            }
            d[(PORT_WIDTH * i + 2, PORT_WIDTH * j + 2)] = agc.d[(i, j)];
        }
        for k in 0..ns {
            b[(k, PORT_WIDTH * i + 2)] = agc.b[(k, i)];
            c[(PORT_WIDTH * i + 2, k)] = agc.c[(i, k)];
        }
    }
    StateSpace::new(agc.a.clone(), b, c, d)
}

/// Every generator linearized and coupled through the network (and the AGC
/// when `with_agc` is set).
pub fn linearized_network(grid: &GridModel, eq: &Equilibrium, with_agc: bool) -> Result<NetworkModel> {
    let subsystems = (0..grid.ngen()).map(|i| linearize_generator(grid, eq, i)).collect::<Result<Vec<_>>>()?;
    assemble_network(subsystems, network_interaction(grid, with_agc)?)
}

/// Spectral abscissa of `a` after removing one structural zero eigenvalue,
/// the uniform rotation of every angle. A zero mode is removed only when
/// `a` is numerically singular; otherwise this is the plain abscissa.
pub fn quotient_abscissa(a: &Mat) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let sv = singular_values(a);
    let scale = sv[0].max(1.0);
    if sv[n - 1] > 1e-9 * scale {
        return spectral_abscissa(a);
    }
    if n > 1 && sv[n - 2] <= 1e-9 * scale {
        return Err(Error::RankDeficient("more than one structural zero mode".into()));
    }
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Computation("SVD failed".into()))?;
    let (min_idx, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc });
    let null = vt.row(min_idx).transpose();
    let (_, rest) = range_and_complement(&Mat::from_column_slice(n, 1, null.as_slice()));
    spectral_abscissa(&(rest.transpose() * a * &rest))
}

#[cfg(test)]
mod tests {
    use super::super::config;
    use super::super::equilibrium::solve_equilibrium;
    use super::super::model::build_grid;
    use super::*;
    use crate::network::{entire_closed_loop, preexisting_system};

    fn desk4() -> (GridModel, Equilibrium) {
        let grid = build_grid(&config::desk4()).unwrap();
        let eq = solve_equilibrium(&grid, None).unwrap();
        (grid, eq)
    }

    #[test]
    fn generators_are_stable_with_terminal_held() {
        let (grid, eq) = desk4();
        for i in 0..grid.ngen() {
            let g = linearize_generator(&grid, &eq, i).unwrap();
            assert!(g.sys.is_hurwitz(0.0).unwrap(), "generator {i}: {:?}", g.sys.poles().unwrap());
        }
    }

    #[test]
    fn preexisting_grid_is_stable_modulo_rotation() {
        let (grid, eq) = desk4();
        for agc in [false, true] {
            let net = linearized_network(&grid, &eq, agc).unwrap();
            let sys = preexisting_system(&net).unwrap();
            let abscissa = quotient_abscissa(&sys.a).unwrap();
            assert!(abscissa < 0.0, "agc {agc}: abscissa {abscissa}");
        }
    }

    #[test]
    fn non_equilibrium_is_rejected() {
        let (grid, mut eq) = desk4();
        eq.state.x[FREQ] = 0.1;
        assert!(matches!(linearize_generator(&grid, &eq, 0), Err(Error::NotEquilibrium { .. })));
    }

    #[test]
    fn dc_gain_matches_steady_state_sensitivity() {
        // Shift the terminal voltage and re-solve the generator's own steady
        // state by Newton; compare with G_yv(0).
        let (grid, eq) = desk4();
        let g = linearize_generator(&grid, &eq, 0).unwrap();
        let gyv = g.block("y", "v").unwrap().dc_gain().unwrap();
        let p = &grid.generators[0].params;
        let sp = eq.setpoints[0];
        let h = 1e-5;
        let settle = |col: usize, shift: f64| -> Vec<f64> {
            let mut v = eq.voltages[0];
            v[col] += shift;
            let mut x: Vec<f64> = eq.state.generator(0).to_vec();
            for _ in 0..20 {
                let f0 = generator::dynamics(p, &sp, &x, v, 0.0, sp.mechanical);
                let step = g.sys.a.clone().lu().solve(&Mat::from_column_slice(STATES, 1, &f0)).unwrap();
                for k in 0..STATES {
                    x[k] -= step[k];
                }
            }
            x
        };
        for col in 0..2 {
            let (up, down) = (settle(col, h), settle(col, -h));
            for k in 0..STATES {
                let fd = (up[k] - down[k]) / (2.0 * h);
                let lin = gyv[(k, col)];
                assert!((fd - lin).abs() <= 1e-4 * lin.abs().max(1.0), "{k},{col}: {fd} vs {lin}");
            }
        }
    }

    #[test]
    fn agc_is_static_without_integral_action() {
        let mut c = config::desk4();
        c.agc.k_i = 0.0;
        let grid = build_grid(&c).unwrap();
        let k = agc_controller(&grid);
        assert!(k.is_static());
        assert!((k.d[(0, 0)] + 0.25 * 5.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn quotient_removes_only_the_rotation_mode() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]);
        assert!((quotient_abscissa(&a).unwrap() + 1.0).abs() < 1e-12);
        let b = Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        assert!((quotient_abscissa(&b).unwrap() + 1.0).abs() < 1e-12);
        assert!(quotient_abscissa(&Mat::zeros(2, 2)).is_err());
        let (grid, eq) = desk4();
        let net = linearized_network(&grid, &eq, true).unwrap();
        let zeros: Vec<StateSpace> = (0..4).map(|_| StateSpace::zero(1, STATES)).collect();
        let cl = entire_closed_loop(&net, &zeros).unwrap();
        assert!(quotient_abscissa(&cl.a).unwrap() < 0.0);
    }
}
