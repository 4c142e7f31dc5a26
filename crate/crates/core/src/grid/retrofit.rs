//! Retrofit modules for the grid generators.

use super::equilibrium::Equilibrium;
use super::linearize::linearize_generator;
use super::model::GridModel;
use crate::analysis::hinf_norm;
use crate::error::Result;
use crate::linalg::{eigenvalues, Mat};
use crate::lqr::{tune_to_gain_bound, weight_sweep, TunedStabilizer};
use crate::youla::{output_rectifying_controller, RetrofitController};

const NORM_TOL: f64 = 1e-8;
/// Fastest closed-loop mode a module may create (rad/s); keeps the loop
/// resolvable by the fixed-step integrator at millisecond steps.
pub const MAX_RATE: f64 = 1000.0;

fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Module for one generator together with its tuning record.
#[derive(Clone, Debug)]
pub struct GridModule {
    pub generator: usize,
    pub controller: RetrofitController,
    pub tuning: TunedStabilizer,
    /// Open-loop interaction gain the tuning was held to.
    pub beta_bound: f64,
}

/// Designs an output-rectifying module for generator `i`: the internal
/// stabilizer is the LQR candidate with the smallest disturbance-to-frequency
/// gain whose interaction gain does not exceed the open-loop value, among
/// the weights that keep every closed-loop mode below [`MAX_RATE`].
pub fn design_module(grid: &GridModel, eq: &Equilibrium, i: usize) -> Result<GridModule> {
    let g = linearize_generator(grid, eq, i)?;
    let beta_bound = hinf_norm(&g.block("w", "d")?, NORM_TOL)?;
    let g_yu = g.block("y", "u")?;
    let mut tuning = tune_to_gain_bound(&g, beta_bound, None, 0)?;
    for sweep in (1..=weight_sweep().len()).rev() {
        let t = tune_to_gain_bound(&g, beta_bound, None, sweep)?;
        let closed = &g_yu.a + &g_yu.b * &t.k_hat.d * &g_yu.c;
        if spectral_radius(&closed)? <= MAX_RATE {
            tuning = t;
            break;
        }
    }
    let controller = output_rectifying_controller(&g, &tuning.k_hat)?;
    Ok(GridModule { generator: i, controller, tuning, beta_bound })
}

pub fn design_modules(grid: &GridModel, eq: &Equilibrium) -> Result<Vec<GridModule>> {
    (0..grid.ngen()).map(|i| design_module(grid, eq, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::super::config;
    use super::super::equilibrium::solve_equilibrium;
    use super::super::generator::STATES;
    use super::super::linearize::{linearized_network, quotient_abscissa};
    use super::super::model::build_grid;
    use super::super::sim::{simulate_grid, FaultEvent, Module, Scenario};
    use super::*;
    use crate::lti::StateSpace;
    use crate::network::entire_closed_loop;
    use crate::DVector;

    fn setup() -> (GridModel, Equilibrium, Vec<GridModule>) {
        let grid = build_grid(&config::desk4()).unwrap();
        let eq = solve_equilibrium(&grid, None).unwrap();
        let modules = design_modules(&grid, &eq).unwrap();
        (grid, eq, modules)
    }

    #[test]
    fn modules_respect_gain_bound_and_rate_cap() {
        let (grid, eq, modules) = setup();
        for m in &modules {
            assert!(m.controller.is_retrofit(), "module {}", m.generator);
            assert!(m.tuning.beta_achieved <= m.beta_bound * (1.0 + 1e-9));
            let g = linearize_generator(&grid, &eq, m.generator).unwrap();
            let g_yu = g.block("y", "u").unwrap();
            let closed = &g_yu.a + &g_yu.b * &m.tuning.k_hat.d * &g_yu.c;
            assert!(spectral_radius(&closed).unwrap() <= MAX_RATE);
        }
    }

    #[test]
    fn every_module_subset_keeps_the_grid_stable() {
        let (grid, eq, modules) = setup();
        let net = linearized_network(&grid, &eq, true).unwrap();
        for mask in 0..16u32 {
            let ks: Vec<StateSpace> = modules
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    if mask & (1 << i) != 0 {
                        m.controller.controller.clone()
                    } else {
                        StateSpace::zero(1, STATES + super::super::linearize::PORT_WIDTH)
                    }
                })
                .collect();
            let cl = entire_closed_loop(&net, &ks).unwrap();
            let abscissa = quotient_abscissa(&cl.a).unwrap();
            assert!(abscissa < 0.0, "subset {mask:04b}: abscissa {abscissa}");
        }
    }

    #[test]
    fn rectified_module_linearizes_to_linear_module() {
        let (grid, eq, modules) = setup();
        let m = &modules[1];
        let mut offset = DVector::zeros(STATES * grid.ngen());
        offset[STATES] = 1e-4;
        offset[STATES * 2 + 2] = -1e-4;
        let scenario = Scenario { fault: None, initial_offset: Some(offset) };
        let mut slots = [None; 4];
        slots[1] = Some(Module::Linear(&m.controller.controller));
        let linear = simulate_grid(&grid, &eq, &scenario, &slots, 1e-3, 2.0).unwrap();
        slots[1] = Some(Module::Rectified(&m.tuning.k_hat));
        let rectified = simulate_grid(&grid, &eq, &scenario, &slots, 1e-3, 2.0).unwrap();
        let scale = linear.omega.peak();
        let gap =
            linear.omega.values.iter().zip(&rectified.omega.values).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        assert!(gap <= 1e-3 * scale, "gap {gap} vs scale {scale}");
    }

    #[test]
    fn rectified_module_is_silent_at_equilibrium() {
        let (grid, eq, modules) = setup();
        let slots: Vec<_> = modules.iter().map(|m| Some(Module::Rectified(&m.tuning.k_hat))).collect();
        let run = simulate_grid(&grid, &eq, &Scenario::default(), &slots, 1e-3, 2.0).unwrap();
        assert!(run.omega.peak() <= 1e-10);
    }

    #[test]
    fn local_module_reduces_frequency_excursion_after_terminal_fault() {
        let (grid, eq, modules) = setup();
        for m in &modules {
            let i = m.generator;
            let scenario = Scenario { fault: Some(FaultEvent::new(grid.generators[i].bus)), initial_offset: None };
            let without = simulate_grid(&grid, &eq, &scenario, &[None; 4], 1e-3, 10.0).unwrap();
            let mut slots = [None; 4];
            slots[i] = Some(Module::Rectified(&m.tuning.k_hat));
            let with = simulate_grid(&grid, &eq, &scenario, &slots, 1e-3, 10.0).unwrap();
            assert!(with.omega_l2 < without.omega_l2, "generator {i}: {} vs {}", with.omega_l2, without.omega_l2);
        }
    }
}
