//! Frequency locus of the loop the AGC closes: broadcast command to mean
//! frequency, with the AGC itself removed.

use std::fmt::Write as _;

use num_complex::Complex64;

use super::equilibrium::Equilibrium;
use super::generator::STATES;
use super::linearize::{linearized_network, PORT_WIDTH};
use super::model::GridModel;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::lti::StateSpace;
use crate::network::entire_closed_loop;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocusPoint {
    pub omega: f64,
    /// `None` where `jω` sits on a pole.
    pub value: Option<Complex64>,
}

/// Linearized map from a broadcast command `ū` (each generator receives
/// `α_i·ū` of extra mechanical power) to the mean frequency deviation, with
/// the network closed and the AGC open.
pub fn agc_loop(grid: &GridModel, eq: &Equilibrium) -> Result<StateSpace> {
    let n = grid.ngen();
    let net = linearized_network(grid, eq, false)?;
    let zeros: Vec<StateSpace> = (0..n).map(|_| StateSpace::zero(1, STATES)).collect();
    let cl = entire_closed_loop(&net, &zeros)?;
    // d enters every state, so the mechanical input column of B_v injects U.
    let mut inject = Mat::zeros(STATES * n, 1);
    for (i, g) in net.subsystems.iter().enumerate() {
        let col = g.ports.input_range("v")?.start + PORT_WIDTH - 1;
        for r in 0..STATES {
            inject[(STATES * i + r, 0)] = grid.agc.alpha[i] * g.sys.b[(r, col)];
        }
    }
    let mean = Mat::from_element(1, n, 1.0 / n as f64);
    cl.postmul(&inject)?.premul(&mean)
}

/// Locus of [`agc_loop`] over `omegas`. Points on a pole are kept with no
/// value rather than aborting the sweep.
pub fn agc_nyquist(grid: &GridModel, eq: &Equilibrium, omegas: &[f64]) -> Result<Vec<LocusPoint>> {
    let g = agc_loop(grid, eq)?;
    omegas
        .iter()
        .map(|&omega| match g.freq_response(omega) {
            Ok(m) => Ok(LocusPoint { omega, value: Some(m[(0, 0)]) }),
            Err(Error::SingularResolvent { .. }) => Ok(LocusPoint { omega, value: None }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Largest excursion into the left half plane relative to the largest
/// magnitude, `max(-Re G) / max|G|`, over the evaluated points.
pub fn passivity_shortage(locus: &[LocusPoint]) -> f64 {
    let values = locus.iter().filter_map(|p| p.value);
    let (worst, peak) = values.fold((0.0_f64, 0.0_f64), |(w, m), z| (w.max(-z.re), m.max(z.norm())));
    if peak == 0.0 {
        0.0
    } else {
        worst / peak
    }
}

/// Long-format CSV `case,omega,re,im,on_pole` for labelled loci.
pub fn locus_csv(loci: &[(String, Vec<LocusPoint>)]) -> String {
    let mut out = String::from("case,omega,re,im,on_pole\n");
    for (label, points) in loci {
        for p in points {
            let (re, im, flag) = match p.value {
                Some(z) => (z.re, z.im, 0),
                None => (f64::NAN, f64::NAN, 1),
            };
            writeln!(out, "{label},{:e},{re:e},{im:e},{flag}", p.omega).expect("writing to a String cannot fail");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::config;
    use super::super::equilibrium::solve_equilibrium;
    use super::super::model::build_grid;
    use super::*;
    use crate::analysis::log_grid;

    #[test]
    fn desk4_locus_is_nearly_positive_real() {
        let grid = build_grid(&config::desk4()).unwrap();
        let eq = solve_equilibrium(&grid, None).unwrap();
        let locus = agc_nyquist(&grid, &eq, &log_grid(-3.0, 3.0, 400)).unwrap();
        assert!(locus.iter().all(|p| p.value.is_some()));
        assert!(passivity_shortage(&locus) <= 0.05, "shortage {}", passivity_shortage(&locus));
    }

    #[test]
    fn locus_vanishes_at_high_frequency() {
        let grid = build_grid(&config::desk4()).unwrap();
        let eq = solve_equilibrium(&grid, None).unwrap();
        let low = agc_nyquist(&grid, &eq, &[1e-3]).unwrap()[0].value.unwrap().norm();
        let high = agc_nyquist(&grid, &eq, &[1e7]).unwrap()[0].value.unwrap().norm();
        assert!(agc_loop(&grid, &eq).unwrap().d[(0, 0)] == 0.0);
        assert!(high < 1e-6 * low, "{high} vs {low}");
    }

    #[test]
    fn load_variation_gives_two_loci() {
        let omegas = log_grid(-3.0, 2.0, 50);
        let mut loci = Vec::new();
        for factor in [0.9, 1.1] {
            let mut c = config::desk4();
            c.scale_loads(factor);
            let grid = build_grid(&c).unwrap();
            let eq = solve_equilibrium(&grid, None).unwrap();
            loci.push((format!("loads_x{factor}"), agc_nyquist(&grid, &eq, &omegas).unwrap()));
        }
        assert_ne!(loci[0].1, loci[1].1);
        let csv = locus_csv(&loci);
        assert_eq!(csv.lines().count(), 1 + 2 * omegas.len());
        assert!(csv.lines().nth(1).unwrap().starts_with("loads_x0.9,"));
    }

    #[test]
    fn poles_on_the_axis_are_flagged() {
        let locus =
            [LocusPoint { omega: 1.0, value: None }, LocusPoint { omega: 2.0, value: Some(Complex64::new(-1.0, 0.0)) }];
        assert_eq!(passivity_shortage(&locus), 1.0);
        assert!(locus_csv(&[("x".into(), locus.to_vec())]).contains("x,1e0,NaN,NaN,1"));
    }
}
