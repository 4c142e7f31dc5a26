//! Flux-decay generator with AVR and three-state stabilizer.
//!
//! State order: rotor angle, frequency deviation, internal voltage, field
//! voltage, then the washout and the two lead-lag states.

use nalgebra::{Matrix2, Vector2};

use super::config::GeneratorParams;

pub const STATES: usize = 7;
pub const ANGLE: usize = 0;
pub const FREQ: usize = 1;
pub const EMF: usize = 2;
pub const FIELD: usize = 3;

/// Operating-point constants of one generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Setpoints {
    pub mechanical: f64,
    pub field: f64,
    pub voltage: f64,
}

fn rot(delta: f64) -> Matrix2<f64> {
    let (s, c) = delta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Terminal voltage in the machine frame: `(|V| sin(δ-∠V), |V| cos(δ-∠V))`.
pub fn machine_frame(delta: f64, v: Vector2<f64>) -> (f64, f64) {
    let (s, c) = delta.sin_cos();
    (v.x * s - v.y * c, v.x * c + v.y * s)
}

/// Current injected into the terminal bus, written `I = m·V + c`.
pub fn current_affine(p: &GeneratorParams, x: &[f64]) -> (Matrix2<f64>, Vector2<f64>) {
    let delta = x[ANGLE];
    let (s, c) = delta.sin_cos();
    let scale = Matrix2::new(1.0 / p.xq, 0.0, 0.0, 1.0 / p.xd_prime);
    let to_frame = Matrix2::new(s, -c, c, s);
    let m = rot(delta) * scale * to_frame;
    let k = Vector2::new(s, -c) * (x[EMF] / p.xd_prime);
    (m, k)
}

pub fn current(p: &GeneratorParams, x: &[f64], v: Vector2<f64>) -> Vector2<f64> {
    let (m, k) = current_affine(p, x);
    m * v + k
}

/// Active and reactive power delivered at the terminal, `V·conj(I)`.
pub fn power(p: &GeneratorParams, x: &[f64], v: Vector2<f64>) -> (f64, f64) {
    let (vd, vq) = machine_frame(x[ANGLE], v);
    let e = x[EMF];
    let pe = e * vd / p.xd_prime + (1.0 / p.xq - 1.0 / p.xd_prime) * vd * vq;
    let qe = e * vq / p.xd_prime - vq * vq / p.xd_prime - vd * vd / p.xq;
    (pe, qe)
}

/// Washout output, first lead-lag output and stabilizer output.
fn pss_stages(p: &GeneratorParams, x: &[f64]) -> (f64, f64, f64) {
    let s = &p.pss;
    let y1 = s.gain * x[FREQ] - x[4];
    let y2 = s.lead1 / s.lag1 * y1 + (1.0 - s.lead1 / s.lag1) * x[5];
    (y1, y2, s.lead2 / s.lag2 * y2 + (1.0 - s.lead2 / s.lag2) * x[6])
}

/// Stabilizer output for the given state.
pub fn pss_output(p: &GeneratorParams, x: &[f64]) -> f64 {
    pss_stages(p, x).2
}

/// Time derivative of the state. `u` is the AVR reference input and
/// `mechanical` the mechanical power (setpoint plus AGC action).
pub fn dynamics(
    p: &GeneratorParams,
    sp: &Setpoints,
    x: &[f64],
    v: Vector2<f64>,
    u: f64,
    mechanical: f64,
) -> [f64; STATES] {
    let (_, vq) = machine_frame(x[ANGLE], v);
    let (pe, _) = power(p, x, v);
    let vmag = v.norm();
    let ratio = p.xd / p.xd_prime;
    let s = &p.pss;
    let (y1, y2, upss) = pss_stages(p, x);
    [
        p.omega0 * x[FREQ],
        (-p.damping * x[FREQ] + mechanical - pe) / p.inertia,
        (-ratio * x[EMF] + (ratio - 1.0) * vq + x[FIELD]) / p.tau_d,
        (-x[FIELD] + sp.field + p.k_avr * (vmag - sp.voltage + upss + u)) / p.tau_e,
        y1 / s.washout,
        (y1 - x[5]) / s.lag1,
        (y2 - x[6]) / s.lag2,
    ]
}

#[cfg(test)]
mod tests {
    use super::super::config::desk4_generator;
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn terminal_power_is_voltage_times_conjugate_current() {
        let p = desk4_generator();
        for k in 0..20 {
            let t = k as f64;
            let x = [0.3 * t.sin() + 0.2, 0.01, 1.0 + 0.1 * t.cos(), 1.5, 0.0, 0.0, 0.0];
            let v = Vector2::new(0.9 + 0.05 * (2.0 * t).sin(), 0.2 * (0.7 * t).cos());
            let i = current(&p, &x, v);
            let s = Complex64::new(v.x, v.y) * Complex64::new(i.x, -i.y);
            let (pe, qe) = power(&p, &x, v);
            assert!((s.re - pe).abs() < 1e-12 && (s.im - qe).abs() < 1e-12);
        }
    }

    #[test]
    fn current_matches_machine_frame_formula() {
        let p = desk4_generator();
        let x = [0.7, 0.0, 1.1, 1.0, 0.0, 0.0, 0.0];
        let v = Complex64::from_polar(0.98, 0.2);
        let phi = x[0] - v.arg();
        let expected = Complex64::from_polar(1.0, x[0])
            * Complex64::new(v.norm() * phi.sin() / p.xq, (v.norm() * phi.cos() - x[2]) / p.xd_prime);
        let got = current(&p, &x, Vector2::new(v.re, v.im));
        assert!((got.x - expected.re).abs() < 1e-14 && (got.y - expected.im).abs() < 1e-14);
    }

    #[test]
    fn stabilizer_is_silent_at_rest() {
        let p = desk4_generator();
        assert_eq!(pss_output(&p, &[0.4, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]), 0.0);
    }
}
