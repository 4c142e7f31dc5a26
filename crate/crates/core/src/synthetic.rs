//! Small fixed plants and seeded random generators used by tests, sweeps
//! and the self-test.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::Result;
use crate::linalg::{self, Mat};
use crate::lti::{PartitionedPlant, PortSpec, StateSpace};

/// The scalar plant `ẋ = -x + v + d + u`, `w = z = y = x`: every one of its
/// nine blocks is `1/(s+1)`.
pub fn unit_lag_plant() -> PartitionedPlant {
    let one = Mat::from_element(1, 1, 1.0);
    PartitionedPlant::from_blocks(Mat::from_element(1, 1, -1.0), [&one, &one, &one], [&one, &one, &one], None)
        .expect("unit lag plant is consistent")
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Random Hurwitz matrix whose spectral abscissa lies in `[-1, -0.1]`.
pub fn random_hurwitz<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let a = gaussian_matrix(rng, n, n);
    let abscissa = linalg::spectral_abscissa(&a).expect("eigenvalues of a finite matrix");
    let margin: f64 = Uniform::new(0.1, 1.0).expect("valid range").sample(rng);
    a - Mat::identity(n, n) * (abscissa + margin)
}

/// Random stable system with `n` states and a feedthrough scaled by
/// `d_scale` (zero gives a strictly proper system).
pub fn random_stable<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    outputs: usize,
    inputs: usize,
    d_scale: f64,
) -> StateSpace {
    StateSpace {
        a: random_hurwitz(rng, n),
        b: gaussian_matrix(rng, n, inputs),
        c: gaussian_matrix(rng, outputs, n),
        d: gaussian_matrix(rng, outputs, inputs) * d_scale,
    }
}

/// Random stable partitioned plant. `D` is zero on the `(y, u)` and
/// `(w, v)` blocks so every loop closed through them is well posed.
pub fn random_plant<R: Rng + ?Sized>(rng: &mut R, n: usize, ports: PortSpec) -> Result<PartitionedPlant> {
    let m = ports.input_width();
    let p = ports.output_width();
    let mut sys = random_stable(rng, n, p, m, 0.3);
    for (out, inp) in [("y", "u"), ("w", "v")] {
        if let (Ok(r), Ok(c)) = (ports.output_range(out), ports.input_range(inp)) {
            for i in r {
                for j in c.clone() {
                    sys.d[(i, j)] = 0.0;
                }
            }
        }
    }
    PartitionedPlant::new(sys, ports)
}

/// Random plant with `1..=max_states` states and every port width drawn
/// from `1..=2`.
pub fn random_small_plant<R: Rng + ?Sized>(rng: &mut R, max_states: usize) -> Result<PartitionedPlant> {
    let n = rng.random_range(1..=max_states);
    let nv = rng.random_range(1..=2);
    let nd = rng.random_range(1..=2);
    let nu = rng.random_range(1..=2);
    let nw = rng.random_range(1..=2);
    let nz = rng.random_range(1..=2);
    let ny = rng.random_range(1..=2);
    random_plant(rng, n, PortSpec::standard(nv, nd, nu, nw, nz, ny))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_hurwitz_is_stable_with_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..8 {
            let a = random_hurwitz(&mut rng, n);
            let s = linalg::spectral_abscissa(&a).unwrap();
            assert!((-1.0 - 1e-9..=-0.1 + 1e-9).contains(&s), "abscissa {s}");
        }
    }

    #[test]
    fn random_plant_has_clean_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_small_plant(&mut rng, 4).unwrap();
        assert!(g.sys.is_hurwitz(0.0).unwrap());
        assert!(g.block("y", "u").unwrap().d.iter().all(|x| *x == 0.0));
        assert!(g.block("w", "v").unwrap().d.iter().all(|x| *x == 0.0));
    }
}
