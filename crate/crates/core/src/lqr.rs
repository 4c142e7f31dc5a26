//! LQR design of internal stabilizers.

use num_complex::Complex64;

use crate::analysis::hinf_norm;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat};
use crate::lti::{PartitionedPlant, StateSpace};
use crate::youla::hat_maps;

/// Data of `AᵀP + PA - P B Rw⁻¹ Bᵀ P + Qw = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CareProblem {
    pub a: Mat,
    pub b: Mat,
    pub qw: Mat,
    pub rw: Mat,
}

impl CareProblem {
    pub fn new(a: Mat, b: Mat, qw: Mat, rw: Mat) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if a.ncols() != n || b.nrows() != n || qw.shape() != (n, n) || rw.shape() != (m, m) {
            return Err(Error::dim(format!(
                "CARE data: A {:?}, B {:?}, Qw {:?}, Rw {:?}",
                a.shape(),
                b.shape(),
                qw.shape(),
                rw.shape()
            )));
        }
        Ok(Self { a, b, qw, rw })
    }

    pub fn residual(&self, p: &Mat) -> Mat {
        let rinv_bt = self.rw.clone().try_inverse().unwrap_or_else(|| Mat::zeros(self.rw.nrows(), self.rw.ncols()))
            * self.b.transpose();
        self.a.transpose() * p + p * &self.a - p * &self.b * rinv_bt * p + &self.qw
    }
}

fn symmetric_defect(m: &Mat) -> f64 {
    linalg::max_abs(&(m - m.transpose()))
}

/// PBH test: `[λI - A, B]` has full row rank for every `λ` with `Re λ ≥ 0`.
pub fn is_stabilizable(a: &Mat, b: &Mat) -> Result<bool> {
    let n = a.nrows();
    let scale = 1.0 + linalg::max_abs(a) + linalg::max_abs(b);
    for lam in linalg::eigenvalues(a)? {
        if lam.re < -1e-12 * scale {
            continue;
        }
        let mut m = CMat::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = Complex64::new(-a[(i, j)], 0.0);
            }
            m[(i, i)] += lam;
            for j in 0..b.ncols() {
                m[(i, n + j)] = Complex64::new(b[(i, j)], 0.0);
            }
        }
        let sv = nalgebra::SVD::new(m, false, false).singular_values;
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if smin <= 1e-10 * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Stabilizing solution of the continuous-time algebraic Riccati equation.
///
/// The stable invariant subspace of the Hamiltonian is read from a reordered
/// complex Schur form; Newton–Kleinman steps polish the result when the
/// residual is above `1e-10·(1 + ‖P‖)`.
pub fn solve_care(prob: &CareProblem) -> Result<Mat> {
    let CareProblem { a, b, qw, rw } = prob;
    let n = a.nrows();
    if symmetric_defect(qw) > 1e-10 * (1.0 + linalg::max_abs(qw)) {
        return Err(Error::Config("state weight is not symmetric".into()));
    }
    if linalg::eigenvalues(qw)?.iter().any(|l| l.re < -1e-10 * (1.0 + linalg::max_abs(qw))) {
        return Err(Error::Config("state weight is not positive semidefinite".into()));
    }
    if symmetric_defect(rw) > 1e-10 * (1.0 + linalg::max_abs(rw)) || rw.clone().cholesky().is_none() {
        return Err(Error::Config("input weight is not symmetric positive definite".into()));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    if !is_stabilizable(a, b)? {
        return Err(Error::NotStabilizable);
    }
    let rinv = rw.clone().try_inverse().ok_or_else(|| Error::Config("input weight is singular".into()))?;
    let g = b * &rinv * b.transpose();

    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-qw));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let h_scale = linalg::max_abs(&h).max(1.0);
    let (mut z, mut t) = linalg::complex_schur(&linalg::to_complex(&h))?;
    if (0..2 * n).any(|i| t[(i, i)].re.abs() <= 1e-12 * h_scale) {
        return Err(Error::HamiltonianDichotomy);
    }
    let k = linalg::reorder_schur(&mut z, &mut t, |l| l.re < 0.0);
    if k != n {
        return Err(Error::HamiltonianDichotomy);
    }
    let u11 = z.view((0, 0), (n, n)).into_owned();
    let u21 = z.view((n, 0), (n, n)).into_owned();
    let u11t = u11.transpose();
    // X U11 = U21  ⇔  U11ᵀ Xᵀ = U21ᵀ
    let xt = u11t.lu().solve(&u21.transpose()).ok_or(Error::HamiltonianDichotomy)?;
    let mut p = linalg::symmetrize(&xt.transpose().map(|z| z.re));

    let tol = |p: &Mat| 1e-10 * (1.0 + p.norm());
    let mut res = prob.residual(&p).norm();
    let mut iters = 0;
    while res > tol(&p) && iters < 20 {
        let f = &rinv * b.transpose() * &p;
        let ac = a - b * &f;
        let rhs = -(qw + f.transpose() * rw * &f);
        let next = match linalg::solve_lyapunov(&ac.transpose(), &rhs) {
            Ok(x) => x,
            Err(_) => break,
        };
        let next_res = prob.residual(&next).norm();
        if !(next_res < res) {
            break;
        }
        p = next;
        res = next_res;
        iters += 1;
    }
    if !res.is_finite() {
        return Err(Error::NonConvergence { iterations: iters, residual: res });
    }
    let closed = a - &g * &p;
    if linalg::spectral_abscissa(&closed)? >= 0.0 {
        return Err(Error::HamiltonianDichotomy);
    }
    Ok(p)
}

/// LQR gain `F = Rw⁻¹ Bᵀ P`.
pub fn lqr_gain(prob: &CareProblem) -> Result<Mat> {
    let p = solve_care(prob)?;
    let rinv = prob.rw.clone().try_inverse().ok_or_else(|| Error::Config("input weight is singular".into()))?;
    Ok(rinv * prob.b.transpose() * p)
}

/// Static state feedback `u = -F x` as a memoryless controller.
pub fn lqr_controller(prob: &CareProblem) -> Result<StateSpace> {
    Ok(StateSpace::static_gain(-lqr_gain(prob)?))
}

/// Output of [`tune_to_gain_bound`].
#[derive(Clone, Debug)]
pub struct TunedStabilizer {
    pub k_hat: StateSpace,
    /// ‖M̂_zd‖∞ of the returned stabilizer.
    pub alpha: f64,
    /// ‖M̂_wd‖∞ of the returned stabilizer.
    pub beta_achieved: f64,
    /// State-weight multiplier, `None` for the zero controller.
    pub weight_scale: Option<f64>,
}

/// Weight multipliers `2⁻⁴, …, 2⁸`.
pub fn weight_sweep() -> Vec<f64> {
    (-4..=8).map(|k| 2f64.powi(k)).collect()
}

const GAIN_TOL: f64 = 1e-10;

/// Searches LQR stabilizers `K̂ = -F C_y⁻¹` (weights `Qw = c·I`, `Rw = I`)
/// plus `K̂ = 0` for the smallest ‖M̂_zd‖∞ subject to ‖M̂_wd‖∞ ≤ `beta`.
///
/// Iterates run in a fixed order (zero controller, then increasing `c`);
/// at most `max_iters` weights are tried. With `alpha_target` the search
/// stops at the first feasible iterate reaching it.
pub fn tune_to_gain_bound(
    g: &PartitionedPlant,
    beta: f64,
    alpha_target: Option<f64>,
    max_iters: usize,
) -> Result<TunedStabilizer> {
    let g_yu = g.block("y", "u")?;
    let n = g.nstates();
    let ny = g_yu.noutputs();
    let nu = g_yu.ninputs();
    if ny != n || linalg::max_abs(&g_yu.d) != 0.0 {
        return Err(Error::Config("gain-bound tuning needs a full, strictly proper state measurement".into()));
    }
    let cy_inv =
        linalg::checked_inverse(&g_yu.c).map_err(|_| Error::Config("measurement matrix is not invertible".into()))?;

    let evaluate = |k_hat: StateSpace, scale: Option<f64>| -> Result<TunedStabilizer> {
        let (mz, mw) = hat_maps(g, &k_hat)?;
        Ok(TunedStabilizer {
            alpha: hinf_norm(&mz, GAIN_TOL)?,
            beta_achieved: hinf_norm(&mw, GAIN_TOL)?,
            k_hat,
            weight_scale: scale,
        })
    };

    let mut candidates = vec![evaluate(StateSpace::zero(nu, ny), None)?];
    // Same basis as the measurement so that state feedback maps through C_y⁻¹.
    let a_x = &g_yu.a;
    let b_x = &g_yu.b;
    for &c in weight_sweep().iter().take(max_iters) {
        if let Some(t) = alpha_target {
            if let Some(hit) = candidates.iter().find(|c| feasible(c, beta) && c.alpha <= t) {
                return Ok(hit.clone());
            }
        }
        let prob = CareProblem::new(a_x.clone(), b_x.clone(), Mat::identity(n, n) * c, Mat::identity(nu, nu))?;
        let f = lqr_gain(&prob)?;
        candidates.push(evaluate(StateSpace::static_gain(-(f * &cy_inv)), Some(c))?);
    }
    if let Some(t) = alpha_target {
        if let Some(hit) = candidates.iter().find(|c| feasible(c, beta) && c.alpha <= t) {
            return Ok(hit.clone());
        }
    }
    let mut best: Option<&TunedStabilizer> = None;
    for c in candidates.iter().filter(|c| feasible(c, beta)) {
        if best.is_none_or(|b| c.alpha < b.alpha) {
            best = Some(c);
        }
    }
    match best {
        Some(b) => Ok(b.clone()),
        None => Err(Error::InfeasibleBound {
            beta,
            best: candidates.iter().map(|c| c.beta_achieved).fold(f64::INFINITY, f64::min),
        }),
    }
}

fn feasible(c: &TunedStabilizer, beta: f64) -> bool {
    c.beta_achieved <= beta * (1.0 + 1e-12)
}
