//! Networks of subsystems coupled through an interaction map `L` from the
//! stacked interaction outputs `w` to the stacked interaction inputs `v`.
//!
//! Stacked signals are subsystem-major: `col(v_1, …, v_N)` with each `v_i`
//! in its own port order.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::{hinf_norm, simulate_lti, time_grid, Input};
use crate::error::{Error, Result};
use crate::lti::{add, append, close_links, feedback, series_all, PartitionedPlant, StateSpace};
use crate::synthetic::{gaussian_matrix, random_hurwitz};
use crate::youla::hat_maps;

const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct NetworkModel {
    pub subsystems: Vec<PartitionedPlant>,
    /// Maps stacked `w` to stacked `v`.
    pub interaction: StateSpace,
}

fn total_width(subsystems: &[PartitionedPlant], port: &str, input: bool) -> Result<usize> {
    let mut total = 0;
    for g in subsystems {
        total += if input { g.input_width(port)? } else { g.output_width(port)? };
    }
    Ok(total)
}

pub fn assemble_network(subsystems: Vec<PartitionedPlant>, interaction: StateSpace) -> Result<NetworkModel> {
    if subsystems.is_empty() {
        return Err(Error::Config("a network needs at least one subsystem".into()));
    }
    let nw = total_width(&subsystems, "w", false)?;
    let nv = total_width(&subsystems, "v", true)?;
    if interaction.ninputs() != nw {
        return Err(Error::PortWidth(format!(
            "interaction takes {} inputs, stacked w has width {nw}",
            interaction.ninputs()
        )));
    }
    if interaction.noutputs() != nv {
        return Err(Error::PortWidth(format!(
            "interaction gives {} outputs, stacked v has width {nv}",
            interaction.noutputs()
        )));
    }
    Ok(NetworkModel { subsystems, interaction })
}

impl NetworkModel {
    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    /// `diag(G_{out,in; 1}, …, G_{out,in; N})`.
    pub fn stacked(&self, output: &str, input: &str) -> Result<StateSpace> {
        let blocks = self.subsystems.iter().map(|g| g.block(output, input)).collect::<Result<Vec<_>>>()?;
        Ok(append(&blocks.iter().collect::<Vec<_>>()))
    }

    /// Offset of subsystem `i`'s slice within a stacked port.
    fn stacked_offset(&self, i: usize, port: &str, input: bool) -> Result<usize> {
        total_width(&self.subsystems[..i], port, input)
    }

    /// The same network with another interaction map.
    pub fn with_interaction(&self, interaction: StateSpace) -> Result<NetworkModel> {
        assemble_network(self.subsystems.clone(), interaction)
    }
}

/// The preexisting loop of `𝐆_wv` and `L`, as the map from an injection at
/// the stacked `v` to the stacked `w`.
pub fn preexisting_system(net: &NetworkModel) -> Result<StateSpace> {
    feedback(&net.stacked("w", "v")?, &net.interaction)
}

pub fn preexisting_is_stable(net: &NetworkModel, margin: f64) -> Result<bool> {
    preexisting_system(net)?.is_hurwitz(margin)
}

/// Monolithic closed loop with stacked `d` as input. Outputs are stacked
/// `z` followed by the controller outputs `u_1, …, u_N`.
fn wire(net: &NetworkModel, controllers: &[StateSpace]) -> Result<(StateSpace, usize)> {
    let n = net.len();
    if controllers.len() != n {
        return Err(Error::dim(format!("{} controllers for {n} subsystems", controllers.len())));
    }
    let mut blocks: Vec<&StateSpace> = net.subsystems.iter().map(|g| &g.sys).collect();
    blocks.push(&net.interaction);
    blocks.extend(controllers.iter());
    let all = append(&blocks);

    let mut in_off = Vec::with_capacity(blocks.len());
    let mut out_off = Vec::with_capacity(blocks.len());
    let (mut mi, mut po) = (0, 0);
    for b in &blocks {
        in_off.push(mi);
        out_off.push(po);
        mi += b.ninputs();
        po += b.noutputs();
    }
    let l_in = in_off[n];
    let l_out = out_off[n];

    let mut links = Vec::new();
    let mut keep_z = Vec::new();
    for (i, g) in net.subsystems.iter().enumerate() {
        let ports = &g.ports;
        let v_at = net.stacked_offset(i, "v", true)?;
        let w_at = net.stacked_offset(i, "w", false)?;
        for (j, col) in ports.input_range("v")?.enumerate() {
            links.push((in_off[i] + col, l_out + v_at + j));
        }
        for (j, row) in ports.output_range("w")?.enumerate() {
            links.push((l_in + w_at + j, out_off[i] + row));
        }
        let k = &controllers[i];
        let ny = g.output_width("y")?;
        let nv = g.input_width("v")?;
        let nu = g.input_width("u")?;
        if k.noutputs() != nu || (k.ninputs() != ny && k.ninputs() != ny + nv) {
            return Err(Error::dim(format!(
                "controller {i} is {}->{}, subsystem has y ({ny}), v ({nv}), u ({nu})",
                k.ninputs(),
                k.noutputs()
            )));
        }
        let (k_in, k_out) = (in_off[n + 1 + i], out_off[n + 1 + i]);
        for (j, col) in ports.input_range("u")?.enumerate() {
            links.push((in_off[i] + col, k_out + j));
        }
        for (j, row) in ports.output_range("y")?.enumerate() {
            links.push((k_in + j, out_off[i] + row));
        }
        if k.ninputs() == ny + nv && nv > 0 {
            for j in 0..nv {
                links.push((k_in + ny + j, l_out + v_at + j));
            }
        }
        keep_z.extend(ports.output_range("z")?.map(|r| out_off[i] + r));
    }
    let nz = keep_z.len();
    let mut keep = keep_z;
    for i in 0..n {
        keep.extend((0..controllers[i].noutputs()).map(|j| out_off[n + 1 + i] + j));
    }
    Ok((close_links(&all, &links, &keep)?, nz))
}

/// Entire map `T_zd` of the network with the given local controllers, each
/// reading `y_i` or `(y_i, v_i)`.
pub fn entire_closed_loop(net: &NetworkModel, controllers: &[StateSpace]) -> Result<StateSpace> {
    let (cl, nz) = wire(net, controllers)?;
    let cols: Vec<usize> = (0..cl.ninputs()).collect();
    Ok(cl.select(&(0..nz).collect::<Vec<_>>(), &cols))
}

/// Map from stacked `d` to the control input `u_i` of subsystem `i`.
pub fn control_response(net: &NetworkModel, controllers: &[StateSpace], i: usize) -> Result<StateSpace> {
    let (cl, nz) = wire(net, controllers)?;
    let start = nz + controllers[..i].iter().map(|k| k.noutputs()).sum::<usize>();
    let rows: Vec<usize> = (start..start + controllers[i].noutputs()).collect();
    Ok(cl.select(&rows, &(0..cl.ninputs()).collect::<Vec<_>>()))
}

/// `diag(M̂_zd,i) + 𝐆_zv (I - L 𝐆_wv)⁻¹ L diag(M̂_wd,i)` for output-rectifying
/// controllers built on the given internal stabilizers.
pub fn structured_closed_loop(net: &NetworkModel, k_hats: &[StateSpace]) -> Result<StateSpace> {
    let (mz, mw) = stacked_hat_maps(net, k_hats)?;
    let coupling = feedback(&net.interaction, &net.stacked("w", "v")?)?;
    add(&mz, &series_all(&[&net.stacked("z", "v")?, &coupling, &mw])?)
}

fn stacked_hat_maps(net: &NetworkModel, k_hats: &[StateSpace]) -> Result<(StateSpace, StateSpace)> {
    if k_hats.len() != net.len() {
        return Err(Error::dim(format!("{} stabilizers for {} subsystems", k_hats.len(), net.len())));
    }
    let mut mz = Vec::new();
    let mut mw = Vec::new();
    for (i, (g, k)) in net.subsystems.iter().zip(k_hats).enumerate() {
        let (z, w) = hat_maps(g, k).map_err(|e| match e {
            Error::NotStabilizing { .. } => Error::NotStabilizing { subsystem: Some(i) },
            other => other,
        })?;
        mz.push(z);
        mw.push(w);
    }
    Ok((append(&mz.iter().collect::<Vec<_>>()), append(&mw.iter().collect::<Vec<_>>())))
}

/// `‖𝐆_zv (I - L 𝐆_wv)⁻¹ L‖∞`.
pub fn interaction_gain_delta(net: &NetworkModel) -> Result<f64> {
    if !preexisting_is_stable(net, 0.0)? {
        return Err(Error::PreexistingInstability);
    }
    let coupling = feedback(&net.interaction, &net.stacked("w", "v")?)?;
    hinf_norm(&series_all(&[&net.stacked("z", "v")?, &coupling])?, NORM_TOL)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceLedger {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: f64,
    pub bound: f64,
}

/// `max α_i + δ·max β_i`.
pub fn performance_bound(alpha: &[f64], beta: &[f64], delta: f64) -> PerformanceLedger {
    let amax = alpha.iter().copied().fold(0.0, f64::max);
    let bmax = beta.iter().copied().fold(0.0, f64::max);
    PerformanceLedger { alpha: alpha.to_vec(), beta: beta.to_vec(), delta, bound: amax + delta * bmax }
}

/// Measures `α_i = ‖M̂_zd,i‖∞`, `β_i = ‖M̂_wd,i‖∞` and `δ` for the network.
pub fn measure_ledger(net: &NetworkModel, k_hats: &[StateSpace]) -> Result<PerformanceLedger> {
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for (i, (g, k)) in net.subsystems.iter().zip(k_hats).enumerate() {
        let (mz, mw) = hat_maps(g, k).map_err(|e| match e {
            Error::NotStabilizing { .. } => Error::NotStabilizing { subsystem: Some(i) },
            other => other,
        })?;
        alpha.push(hinf_norm(&mz, NORM_TOL)?);
        beta.push(hinf_norm(&mw, NORM_TOL)?);
    }
    Ok(performance_bound(&alpha, &beta, interaction_gain_delta(net)?))
}

/// Test signals standing in for the set of admissible disturbances.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalFamily {
    pub impulse: bool,
    pub step: bool,
    /// Seeded Gaussian noise through a first-order low-pass at this cutoff
    /// (rad/s).
    pub noise: Option<(u64, f64)>,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for SignalFamily {
    fn default() -> Self {
        Self { impulse: true, step: true, noise: Some((0, 10.0)), dt: 1e-3, horizon: 20.0 }
    }
}

/// Gaussian white noise filtered by `c/(s+c)`, sampled on the grid of
/// `dt`, `horizon` with the filter discretized exactly.
pub fn band_limited_noise(seed: u64, cutoff: f64, dt: f64, horizon: f64) -> Result<Vec<f64>> {
    let times = time_grid(dt, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = (-cutoff * dt).exp();
    let mut x = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for _ in &times {
        out.push(x);
        let w: f64 = StandardNormal.sample(&mut rng);
        x = decay * x + (1.0 - decay) * w;
    }
    Ok(out)
}

/// Peak `|u_i|` when the disturbance of subsystem `j` alone is driven by the
/// signal family, one disturbance channel at a time.
pub fn self_responsibility_check(
    net: &NetworkModel,
    controllers: &[StateSpace],
    i: usize,
    j: usize,
    family: &SignalFamily,
) -> Result<f64> {
    if i >= net.len() || j >= net.len() {
        return Err(Error::dim(format!("subsystem index out of range for {} subsystems", net.len())));
    }
    let resp = control_response(net, controllers, i)?;
    let d_at = net.stacked_offset(j, "d", true)?;
    let nd = net.subsystems[j].input_width("d")?;
    let m = resp.ninputs();
    let x0 = DVector::zeros(resp.nstates());
    let unit = |c: usize| {
        let mut e = DVector::zeros(m);
        e[d_at + c] = 1.0;
        e
    };
    let mut peak = 0.0_f64;
    for c in 0..nd {
        let mut inputs = Vec::new();
        if family.impulse {
            inputs.push(Input::Impulse(unit(c)));
        }
        if family.step {
            inputs.push(Input::Step(unit(c)));
        }
        if let Some((seed, cutoff)) = family.noise {
            let noise = band_limited_noise(seed.wrapping_add(c as u64), cutoff, family.dt, family.horizon)?;
            inputs.push(Input::Samples(noise.iter().map(|&x| unit(c) * x).collect()));
        }
        for input in &inputs {
            peak = peak.max(simulate_lti(&resp, input, &x0, family.dt, family.horizon)?.peak());
        }
    }
    Ok(peak)
}

/// Random interaction with a static part and a first-order dynamic part,
/// scaled by `scale`. Admissibility is not checked.
pub fn random_interaction<R: Rng + ?Sized>(rng: &mut R, nw: usize, nv: usize, scale: f64) -> StateSpace {
    let k = rng.random_range(0..=2);
    let a = random_hurwitz(rng, k);
    StateSpace {
        a,
        b: gaussian_matrix(rng, k, nw),
        c: gaussian_matrix(rng, nv, k) * scale,
        d: gaussian_matrix(rng, nv, nw) * scale,
    }
}

/// An interaction keeping the preexisting system Hurwitz with margin
/// `1e-6`, drawn with geometrically shrinking scale. `None` after
/// `attempts` rejections.
pub fn random_admissible_interaction<R: Rng + ?Sized>(
    rng: &mut R,
    net: &NetworkModel,
    scale: f64,
    attempts: usize,
) -> Result<Option<StateSpace>> {
    let nw = total_width(&net.subsystems, "w", false)?;
    let nv = total_width(&net.subsystems, "v", true)?;
    let mut s = scale;
    for _ in 0..attempts {
        let l = random_interaction(rng, nw, nv, s);
        let candidate = net.with_interaction(l.clone())?;
        match preexisting_is_stable(&candidate, 1e-6) {
            Ok(true) => return Ok(Some(l)),
            Ok(false) | Err(Error::IllPosed { .. }) => s *= 0.8,
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::mat;
    use crate::synthetic::unit_lag_plant;
    use crate::youla::{grid_gap, output_rectifying_controller};

    fn pair_network(coupling: f64) -> NetworkModel {
        let l = StateSpace::static_gain(mat(2, 2, &[0.0, coupling, coupling, 0.0]));
        assemble_network(vec![unit_lag_plant(), unit_lag_plant()], l).unwrap()
    }

    fn rectified(net: &NetworkModel, k: f64) -> Vec<StateSpace> {
        net.subsystems
            .iter()
            .map(|g| output_rectifying_controller(g, &StateSpace::scalar(k)).unwrap().controller)
            .collect()
    }

    #[test]
    fn assembly_checks_widths() {
        assert_eq!(pair_network(0.3).len(), 2);
        let single = assemble_network(vec![unit_lag_plant()], StateSpace::zero(1, 1)).unwrap();
        assert_eq!(single.len(), 1);
        let err = assemble_network(vec![unit_lag_plant(), unit_lag_plant()], StateSpace::zero(2, 3)).unwrap_err();
        assert!(matches!(err, Error::PortWidth(_)));
    }

    #[test]
    fn preexisting_examples() {
        assert!(preexisting_is_stable(&pair_network(0.3), 0.0).unwrap());
        assert!(!preexisting_is_stable(&pair_network(2.0), 0.0).unwrap());
        let iso = pair_network(0.0);
        let pre = preexisting_system(&iso).unwrap();
        assert_eq!(pre.a, mat(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
    }

    #[test]
    fn entire_loop_with_zero_controllers_is_open_network() {
        let net = pair_network(0.3);
        let t = entire_closed_loop(&net, &[StateSpace::zero(1, 1), StateSpace::zero(1, 1)]).unwrap();
        // z = (sI - A - 0.3 J)⁻¹ d with J the swap matrix.
        let a = mat(2, 2, &[-1.0, 0.3, 0.3, -1.0]);
        let expected = StateSpace::new(a, Mat::identity(2, 2), Mat::identity(2, 2), Mat::zeros(2, 2)).unwrap();
        assert!(grid_gap(&t, &expected, 50).unwrap() < 1e-14);
    }

    use crate::linalg::Mat;

    #[test]
    fn entire_loop_agrees_with_structured() {
        let net = pair_network(0.3);
        let ks = rectified(&net, -1.0);
        let t = entire_closed_loop(&net, &ks).unwrap();
        assert!(t.is_hurwitz(0.0).unwrap());
        let s = structured_closed_loop(&net, &[StateSpace::scalar(-1.0), StateSpace::scalar(-1.0)]).unwrap();
        assert!((t.dc_gain().unwrap() - s.dc_gain().unwrap()).amax() < 1e-12);
        assert!(grid_gap(&t, &s, 200).unwrap() < 1e-8);
    }

    #[test]
    fn non_retrofit_controller_can_destabilize() {
        // A plain output feedback tuned on the isolated plant destabilizes
        // the strongly coupled pair; the rectified version does not.
        let net = pair_network(0.9);
        let plain = vec![StateSpace::static_gain(mat(1, 1, &[0.5])), StateSpace::zero(1, 1)];
        assert!(crate::youla::stabilizes(&StateSpace::first_order(1.0, 1.0), &plain[0]).unwrap());
        assert!(!entire_closed_loop(&net, &plain).unwrap().is_hurwitz(0.0).unwrap());
        let retro = vec![
            output_rectifying_controller(&net.subsystems[0], &StateSpace::scalar(0.5)).unwrap().controller,
            StateSpace::zero(1, 1),
        ];
        assert!(entire_closed_loop(&net, &retro).unwrap().is_hurwitz(0.0).unwrap());
    }

    #[test]
    fn structured_special_cases() {
        let iso = pair_network(0.0);
        let k = [StateSpace::scalar(-1.0), StateSpace::scalar(-2.0)];
        let s = structured_closed_loop(&iso, &k).unwrap();
        let diag = append(&[&StateSpace::first_order(1.0, 2.0), &StateSpace::first_order(1.0, 3.0)]);
        assert!(grid_gap(&s, &diag, 50).unwrap() < 1e-14);

        let net = pair_network(0.3);
        let zeros = [StateSpace::zero(1, 1), StateSpace::zero(1, 1)];
        let open = entire_closed_loop(&net, &zeros).unwrap();
        assert!(grid_gap(&structured_closed_loop(&net, &zeros).unwrap(), &open, 100).unwrap() < 1e-12);

        let err = structured_closed_loop(&net, &[StateSpace::scalar(-1.0), StateSpace::scalar(3.0)]).unwrap_err();
        assert_eq!(err, Error::NotStabilizing { subsystem: Some(1) });
    }

    #[test]
    fn delta_examples() {
        let single = assemble_network(vec![unit_lag_plant()], StateSpace::scalar(0.5)).unwrap();
        assert!((interaction_gain_delta(&single).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(interaction_gain_delta(&pair_network(0.0)).unwrap(), 0.0);

        let net = pair_network(0.3);
        let delta = interaction_gain_delta(&net).unwrap();
        let coupling = feedback(&net.interaction, &net.stacked("w", "v").unwrap()).unwrap();
        let m = series_all(&[&net.stacked("z", "v").unwrap(), &coupling]).unwrap();
        let (grid, _) = crate::analysis::grid_peak(&m, &crate::analysis::log_grid(-4.0, 4.0, 2000)).unwrap();
        assert!((delta - grid).abs() <= 1e-4 * delta);

        assert!(matches!(interaction_gain_delta(&pair_network(2.0)), Err(Error::PreexistingInstability)));
    }

    #[test]
    fn bound_on_single_lag() {
        let single = assemble_network(vec![unit_lag_plant()], StateSpace::scalar(0.5)).unwrap();
        let ledger = measure_ledger(&single, &[StateSpace::scalar(-1.0)]).unwrap();
        assert!((ledger.bound - 1.0).abs() < 1e-9);
        let t = structured_closed_loop(&single, &[StateSpace::scalar(-1.0)]).unwrap();
        assert!((hinf_norm(&t, 1e-10).unwrap() - 1.0).abs() < 1e-6);

        let l = performance_bound(&[0.3, 0.7], &[0.2, 0.1], 0.0);
        assert_eq!(l.bound, 0.7);
    }

    #[test]
    fn self_responsibility() {
        let net = pair_network(0.3);
        let ks = vec![
            output_rectifying_controller(&net.subsystems[0], &StateSpace::scalar(-1.0)).unwrap().controller,
            StateSpace::zero(1, 1),
        ];
        let family = SignalFamily { horizon: 10.0, dt: 1e-2, ..SignalFamily::default() };
        assert!(self_responsibility_check(&net, &ks, 0, 1, &family).unwrap() <= 1e-9);
        assert!(self_responsibility_check(&net, &ks, 0, 0, &family).unwrap() > 1e-3);

        let plain = vec![StateSpace::scalar(-1.0), StateSpace::zero(1, 1)];
        assert!(self_responsibility_check(&net, &plain, 0, 1, &family).unwrap() > 1e-3);
    }

    #[test]
    fn noise_is_reproducible() {
        let a = band_limited_noise(4, 10.0, 1e-2, 5.0).unwrap();
        let b = band_limited_noise(4, 10.0, 1e-2, 5.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, band_limited_noise(5, 10.0, 1e-2, 5.0).unwrap());
    }

    #[test]
    fn admissible_interactions_keep_preexisting_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = pair_network(0.0);
        for _ in 0..10 {
            let l = random_admissible_interaction(&mut rng, &net, 1.0, 50).unwrap().unwrap();
            assert!(preexisting_is_stable(&net.with_interaction(l).unwrap(), 1e-6).unwrap());
        }
    }
}
