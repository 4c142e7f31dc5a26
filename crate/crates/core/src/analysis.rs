//! Measurement instruments: internal stability of a closed loop, the H∞
//! norm, exact-discretization simulation and L2 signal norms.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lti::{append, close_links, PartitionedPlant, StateSpace};

/// Uniformly sampled vector signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn width(&self) -> usize {
        self.values.first().map(|v| v.len()).unwrap_or(0)
    }

    /// One scalar channel over time.
    pub fn channel(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    /// Largest absolute entry over all samples and channels.
    pub fn peak(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    /// Keeps only the listed channels.
    pub fn project(&self, channels: &[usize]) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            values: self.values.iter().map(|v| DVector::from_fn(channels.len(), |k, _| v[channels[k]])).collect(),
            dt: self.dt,
        }
    }
}

/// Drive signal for [`simulate_lti`].
#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Zero,
    /// One input vector per grid point, held constant over each step.
    Samples(Vec<DVector<f64>>),
    /// Dirac impulse in the given input direction, applied at `t = 0` as an
    /// initial-state jump `B·dir`. The output's own impulsive part `D·dir·δ(t)`
    /// is not sampled.
    Impulse(DVector<f64>),
    /// Constant input from `t = 0`.
    Step(DVector<f64>),
}

/// Sample grid `0, dt, …, N·dt` with `N = round(horizon/dt)`.
pub fn time_grid(dt: f64, horizon: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(horizon > 0.0) || !dt.is_finite() || !horizon.is_finite() {
        return Err(Error::Config(format!("dt = {dt} and horizon = {horizon} must be positive")));
    }
    let steps = (horizon / dt).round() as usize;
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

/// Checks that closing `k` around `g` (and `env` around its interaction
/// channel) yields a Hurwitz monolithic state matrix.
///
/// `k` reads either `y` or `(y, v)`; `env` maps `w` to `v`.
pub fn internal_stability(g: &PartitionedPlant, k: &StateSpace, env: Option<&StateSpace>) -> Result<bool> {
    closed_loop(g, k, env)?.is_hurwitz(0.0)
}

/// Monolithic closed loop of [`internal_stability`], with `d` as input and
/// `z` as output. States are ordered plant, controller, environment.
pub fn closed_loop(g: &PartitionedPlant, k: &StateSpace, env: Option<&StateSpace>) -> Result<StateSpace> {
    let ny = g.output_width("y")?;
    let nu = g.input_width("u")?;
    let nv = g.input_width("v").unwrap_or(0);
    let reads_v = if k.ninputs() == ny {
        false
    } else if k.ninputs() == ny + nv {
        true
    } else {
        return Err(Error::dim(format!(
            "controller takes {} inputs; plant measures y ({ny}) and v ({nv})",
            k.ninputs()
        )));
    };
    if k.noutputs() != nu {
        return Err(Error::dim(format!("controller gives {} outputs, plant u has {nu}", k.noutputs())));
    }
    let plant = if reads_v { g.with_v_passthrough()? } else { g.clone() };
    let ports = &plant.ports;
    let (pm, pp) = (plant.sys.ninputs(), plant.sys.noutputs());

    let mut blocks = vec![&plant.sys, k];
    if let Some(e) = env {
        if e.ninputs() != g.output_width("w")? || e.noutputs() != nv {
            return Err(Error::dim(format!(
                "environment is {}->{}, plant has w ({}) and v ({nv})",
                e.ninputs(),
                e.noutputs(),
                g.output_width("w")?
            )));
        }
        blocks.push(e);
    }
    let all = append(&blocks);
    let (km, kp) = (k.ninputs(), k.noutputs());

    let mut links = Vec::new();
    for (j, i) in ports.input_range("u")?.enumerate() {
        links.push((i, pp + j));
    }
    let mut meas: Vec<usize> = ports.output_range("y")?.collect();
    if reads_v {
        meas.extend(ports.output_range("v_meas")?);
    }
    for (j, o) in meas.into_iter().enumerate() {
        links.push((pm + j, o));
    }
    if env.is_some() {
        for (j, i) in ports.input_range("v")?.enumerate() {
            links.push((i, pp + kp + j));
        }
        for (j, o) in ports.output_range("w")?.enumerate() {
            links.push((pm + km + j, o));
        }
    }
    // With no environment, v stays an external input and is dropped here.
    let keep: Vec<usize> = ports.output_range("z")?.collect();
    let cl = close_links(&all, &links, &keep)?;
    if env.is_none() && nv > 0 {
        let d_cols: Vec<usize> = {
            let v = ports.input_range("v")?;
            let externals: Vec<usize> = (0..all.ninputs()).filter(|i| !links.iter().any(|(li, _)| li == i)).collect();
            externals.iter().enumerate().filter(|(_, i)| !v.contains(i)).map(|(k, _)| k).collect()
        };
        return Ok(cl.select(&(0..cl.noutputs()).collect::<Vec<_>>(), &d_cols));
    }
    Ok(cl)
}

fn sigma_max_at(sys: &StateSpace, omega: f64) -> Result<f64> {
    Ok(linalg::max_singular_value_c(&sys.freq_response(omega)?))
}

/// Log-spaced frequencies on `[10^lo, 10^hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..points).map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (points - 1) as f64)).collect()
}

/// Largest `σ_max(G(jω))` over a frequency list.
pub fn grid_peak(sys: &StateSpace, omegas: &[f64]) -> Result<(f64, f64)> {
    let mut best = (0.0, 0.0);
    for &w in omegas {
        let s = sigma_max_at(sys, w)?;
        if s > best.0 {
            best = (s, w);
        }
    }
    Ok(best)
}

const DENSE_POINTS: usize = 2000;

/// ‖G‖∞ of a stable system.
///
/// A frequency sweep seeds a lower bound, which is then raised by the
/// Boyd–Balakrishnan iteration: imaginary-axis eigenvalues of the
/// Hamiltonian at `γ = (1 + 2·tol)·lb` bracket the frequencies where
/// `σ_max > γ`, and their midpoints give the next lower bound. The result
/// is an attained value `lb` with `lb ≤ ‖G‖∞ ≤ (1 + 2·tol)·lb`.
///
/// Systems whose peak is at round-off level relative to the size of their
/// realization (structurally cancelled maps) are reported from a dense
/// 2000-point grid instead.
pub fn hinf_norm(sys: &StateSpace, tol: f64) -> Result<f64> {
    let tol = tol.max(1e-14);
    let dmax = linalg::max_singular_value(&sys.d);
    let n = sys.nstates();
    if n == 0 || sys.ninputs() == 0 || sys.noutputs() == 0 {
        return Ok(dmax);
    }
    if !sys.is_hurwitz(0.0)? {
        let worst = sys.poles()?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::Unstable(format!("spectral abscissa {worst:.3e}")));
    }

    let mut omegas = vec![0.0];
    omegas.extend(log_grid(-4.0, 4.0, DENSE_POINTS));
    for p in sys.poles()? {
        if p.im.abs() > 0.0 {
            omegas.push(p.im.abs());
        }
        omegas.push(p.norm());
    }
    let (mut lb, _) = grid_peak(sys, &omegas)?;
    lb = lb.max(dmax);

    let cf = sys.c.norm();
    let df = sys.d.norm();
    let mut scale = df;
    for &w in omegas.iter().step_by(20) {
        let resolvent = crate::lti::StateSpace {
            a: sys.a.clone(),
            b: sys.b.clone(),
            c: Mat::identity(n, n),
            d: Mat::zeros(n, sys.ninputs()),
        }
        .freq_response(w)?;
        scale = scale.max(cf * resolvent.norm() + df);
    }
    if lb <= 1e-8 * scale {
        return Ok(lb);
    }

    let a_norm = linalg::max_abs(&sys.a).max(1.0);
    for _ in 0..100 {
        let gamma = (1.0 + 2.0 * tol) * lb;
        let freqs = match imaginary_crossings(sys, gamma, a_norm) {
            Ok(f) => f,
            Err(_) => return Ok(lb),
        };
        if freqs.is_empty() {
            return Ok(lb);
        }
        let mut probes = Vec::with_capacity(freqs.len());
        if freqs.len() == 1 {
            probes.push(freqs[0]);
        } else {
            probes.extend(freqs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        }
        let (peak, _) = grid_peak(sys, &probes)?;
        if peak <= lb {
            return Ok(lb);
        }
        lb = peak;
    }
    Ok(lb)
}

/// Nonnegative frequencies `ω` for which `γ` is a singular value of
/// `G(jω)`, read off the Hamiltonian's imaginary-axis eigenvalues.
fn imaginary_crossings(sys: &StateSpace, gamma: f64, a_norm: f64) -> Result<Vec<f64>> {
    let (a, b, c, d) = (&sys.a, &sys.b, &sys.c, &sys.d);
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    let r = Mat::identity(m, m) * (gamma * gamma) - d.transpose() * d;
    let r_inv = linalg::checked_inverse(&r)?;
    let ah = a + b * &r_inv * d.transpose() * c;
    let top_right = b * &r_inv * b.transpose();
    let bottom_left = -(c.transpose() * (Mat::identity(p, p) + d * &r_inv * d.transpose()) * c);
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&ah);
    h.view_mut((0, n), (n, n)).copy_from(&top_right);
    h.view_mut((n, 0), (n, n)).copy_from(&bottom_left);
    h.view_mut((n, n), (n, n)).copy_from(&(-ah.transpose()));

    let thresh = 1e-8 * a_norm;
    let mut freqs: Vec<f64> =
        linalg::eigenvalues(&h)?.into_iter().filter(|l| l.re.abs() < thresh && l.im >= 0.0).map(|l| l.im).collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    Ok(freqs)
}

/// Exact zero-order-hold discretization `(Φ, Γ)` for step `dt`.
pub fn zoh(a: &Mat, b: &Mat, dt: f64) -> (Mat, Mat) {
    let n = a.nrows();
    let m = b.ncols();
    let mut big = Mat::zeros(n + m, n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    big.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = linalg::expm(&big);
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// State and output trajectories of a simulation.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub states: Trajectory,
    pub outputs: Trajectory,
}

/// Simulates `sys` from `x0` on `0, dt, …, T` with the input held over each
/// step. Returns the output trajectory.
pub fn simulate_lti(sys: &StateSpace, input: &Input, x0: &DVector<f64>, dt: f64, horizon: f64) -> Result<Trajectory> {
    Ok(simulate_lti_full(sys, input, x0, dt, horizon)?.outputs)
}

pub fn simulate_lti_full(
    sys: &StateSpace,
    input: &Input,
    x0: &DVector<f64>,
    dt: f64,
    horizon: f64,
) -> Result<Simulation> {
    let times = time_grid(dt, horizon)?;
    let (n, m) = (sys.nstates(), sys.ninputs());
    if x0.len() != n {
        return Err(Error::dim(format!("initial state has {} entries, system has {n} states", x0.len())));
    }
    let check_width = |v: &DVector<f64>| {
        if v.len() == m {
            Ok(())
        } else {
            Err(Error::dim(format!("input vector has {} entries, system has {m} inputs", v.len())))
        }
    };
    let mut x = x0.clone();
    let zero = DVector::zeros(m);
    let constant = match input {
        Input::Zero => Some(zero.clone()),
        Input::Impulse(dir) => {
            check_width(dir)?;
            x += &sys.b * dir;
            Some(zero.clone())
        }
        Input::Step(level) => {
            check_width(level)?;
            Some(level.clone())
        }
        Input::Samples(samples) => {
            if samples.len() != times.len() {
                return Err(Error::dim(format!("{} input samples for {} grid points", samples.len(), times.len())));
            }
            for s in samples {
                check_width(s)?;
            }
            None
        }
    };
    let u_at = |k: usize| -> &DVector<f64> {
        match (input, &constant) {
            (Input::Samples(s), _) => &s[k],
            (_, Some(c)) => c,
            _ => unreachable!(),
        }
    };

    let (phi, gamma) = zoh(&sys.a, &sys.b, dt);
    let mut states = Vec::with_capacity(times.len());
    let mut outputs = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let u = u_at(k);
        outputs.push(&sys.c * &x + &sys.d * u);
        states.push(x.clone());
        if k + 1 < times.len() {
            x = &phi * &x + &gamma * u;
        }
    }
    Ok(Simulation {
        states: Trajectory { times: times.clone(), values: states, dt },
        outputs: Trajectory { times, values: outputs, dt },
    })
}

/// `√(∫‖x(t)‖² dt)` by the trapezoid rule.
pub fn l2_norm(x: &Trajectory) -> f64 {
    let sq: Vec<f64> = x.values.iter().map(|v| v.norm_squared()).collect();
    let mut acc = 0.0;
    for k in 1..sq.len() {
        acc += 0.5 * (x.times[k] - x.times[k - 1]) * (sq[k] + sq[k - 1]);
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::mat;
    use crate::synthetic::{random_stable, unit_lag_plant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn environment_gain_moves_pole() {
        let g = unit_lag_plant();
        let k0 = StateSpace::zero(1, 1);
        assert!(internal_stability(&g, &k0, Some(&StateSpace::scalar(0.5))).unwrap());
        assert!(!internal_stability(&g, &k0, Some(&StateSpace::scalar(2.0))).unwrap());
        assert!(internal_stability(&g, &k0, None).unwrap());
        let cl = closed_loop(&g, &k0, Some(&StateSpace::scalar(0.5))).unwrap();
        assert!((cl.a[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_loop_without_environment_keeps_d_only() {
        let g = unit_lag_plant();
        let k = StateSpace::static_gain(mat(1, 2, &[-1.0, 0.0]));
        let cl = closed_loop(&g, &k, None).unwrap();
        assert_eq!((cl.ninputs(), cl.noutputs()), (1, 1));
        assert!((cl.a[(0, 0)] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn hinf_reference_values() {
        let lag = StateSpace::first_order(1.0, 1.0);
        assert!((hinf_norm(&lag, 1e-9).unwrap() - 1.0).abs() < 1e-9);
        let g = StateSpace::first_order(2.0, 4.0);
        assert!((hinf_norm(&g, 1e-9).unwrap() - 0.5).abs() < 1e-9);
        // 1/(s² + 0.2 s + 1)
        let res = StateSpace::new(
            mat(2, 2, &[0.0, 1.0, -1.0, -0.2]),
            mat(2, 1, &[0.0, 1.0]),
            mat(1, 2, &[1.0, 0.0]),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let zeta: f64 = 0.1;
        let peak = 1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt());
        let h = hinf_norm(&res, 1e-9).unwrap();
        assert!((h - peak).abs() < 1e-6, "{h} vs {peak}");
        assert!((h - 5.02519).abs() < 1e-4);
    }

    #[test]
    fn hinf_rejects_unstable() {
        assert!(matches!(hinf_norm(&StateSpace::first_order(1.0, -1.0), 1e-6), Err(Error::Unstable(_))));
    }

    #[test]
    fn hinf_with_feedthrough_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let g = random_stable(&mut rng, 4, 2, 3, 1.0);
            let h = hinf_norm(&g, 1e-10).unwrap();
            let (grid, _) = grid_peak(&g, &log_grid(-4.0, 4.0, 4000)).unwrap();
            assert!(h >= grid * (1.0 - 1e-9), "{h} < grid {grid}");
            assert!(h <= grid * (1.0 + 1e-3), "{h} ≫ grid {grid}");
        }
    }

    #[test]
    fn hinf_of_cancelled_map_is_tiny() {
        let lag = StateSpace::first_order(1.0, 1.0);
        let diff = crate::lti::sub(&lag, &lag).unwrap();
        assert!(hinf_norm(&diff, 1e-9).unwrap() < 1e-12);
    }

    #[test]
    fn exponential_decay() {
        let g = StateSpace::first_order(1.0, 1.0);
        let y = simulate_lti(&g, &Input::Zero, &DVector::from_element(1, 1.0), 1e-3, 1.0).unwrap();
        assert!((y.values.last().unwrap()[0] - (-1f64).exp()).abs() < 1e-9);
        assert_eq!(y.len(), 1001);
    }

    #[test]
    fn zero_in_zero_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_stable(&mut rng, 3, 2, 2, 1.0);
        let y = simulate_lti(&g, &Input::Zero, &DVector::zeros(3), 0.01, 2.0).unwrap();
        assert_eq!(y.peak(), 0.0);
    }

    #[test]
    fn impulse_of_lag_samples_exponential() {
        let g = StateSpace::first_order(1.0, 1.0);
        let y =
            simulate_lti(&g, &Input::Impulse(DVector::from_element(1, 1.0)), &DVector::zeros(1), 0.01, 3.0).unwrap();
        for (t, v) in y.times.iter().zip(&y.values) {
            assert!((v[0] - (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn step_response_of_lag() {
        let g = StateSpace::first_order(1.0, 1.0);
        let y = simulate_lti(&g, &Input::Step(DVector::from_element(1, 1.0)), &DVector::zeros(1), 0.01, 3.0).unwrap();
        for (t, v) in y.times.iter().zip(&y.values) {
            assert!((v[0] - (1.0 - (-t).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_reference_values() {
        let dt = 1e-3;
        let g = StateSpace::first_order(1.0, 1.0);
        let y = simulate_lti(&g, &Input::Zero, &DVector::from_element(1, 1.0), dt, 20.0).unwrap();
        assert!((l2_norm(&y) - 0.5f64.sqrt()).abs() < 1e-4);

        let times = time_grid(dt, 4.0).unwrap();
        let ones = Trajectory { values: vec![DVector::from_element(1, 1.0); times.len()], times: times.clone(), dt };
        assert!((l2_norm(&ones) - 2.0).abs() < 1e-6);
        let zeros = Trajectory { values: vec![DVector::zeros(2); times.len()], times, dt };
        assert_eq!(l2_norm(&zeros), 0.0);
    }

    #[test]
    fn bad_grid_is_rejected() {
        assert!(time_grid(0.0, 1.0).is_err());
        assert!(time_grid(0.1, -1.0).is_err());
    }
}
