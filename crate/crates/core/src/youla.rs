//! Youla parameterization of local controllers and the retrofit condition.
//!
//! For a stable subsystem every stabilizing controller of the local channel
//! is `K = (I + Q·G_yu)⁻¹ Q` for a stable `Q`. The controller is a retrofit
//! controller exactly when `G_wu·Q·G_yv = 0`: it then leaves the map from
//! interaction input `v` to interaction output `w` untouched, so no
//! environment can tell it was added.
//!
//! Two constructions meet the condition structurally:
//! an output rectifier `R = [I, -G_yv]` that strips the interaction from
//! the measurement (`K = K̂·R`), and, for state measurement, a projection
//! onto state directions the interaction cannot reach (`K = K̂·X`).

use crate::analysis::{hinf_norm, log_grid};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lti::{
    append, close_links, feedback, hstack, lft_lower, series, series_all, PartitionedPlant, PortSpec, StateSpace,
};

/// Residual norms at or below this certify a retrofit controller.
pub const RETROFIT_TOL: f64 = 1e-9;

/// Relative accuracy requested from the H∞ routine for certificates.
const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    GeneralQ,
    OutputRectifying,
    StateProjection,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::GeneralQ => "general-q",
            ControllerKind::OutputRectifying => "output-rectifying",
            ControllerKind::StateProjection => "state-projection",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RetrofitController {
    /// Acts on `y`, or on `(y, v)` for output-rectifying controllers.
    pub controller: StateSpace,
    pub kind: ControllerKind,
    pub internal_stabilizer: Option<StateSpace>,
    pub rectifier: Option<StateSpace>,
    /// ‖G_wu·Q·G_yv‖∞ for the controller's Youla parameter.
    pub residual_norm: f64,
}

impl RetrofitController {
    pub fn is_retrofit(&self) -> bool {
        self.residual_norm <= RETROFIT_TOL
    }
}

fn check_youla_dims(g_yu: &StateSpace, other: &StateSpace, what: &str) -> Result<()> {
    if other.ninputs() != g_yu.noutputs() || other.noutputs() != g_yu.ninputs() {
        return Err(Error::dim(format!(
            "{what} is {}->{}, channel is {}->{}",
            other.ninputs(),
            other.noutputs(),
            g_yu.ninputs(),
            g_yu.noutputs()
        )));
    }
    Ok(())
}

/// Closes `u = H(y, u)` for a two-input map `H`, returning `y ↦ u`.
fn close_on_self(h: &StateSpace, ny: usize) -> Result<StateSpace> {
    let nu = h.noutputs();
    let links: Vec<(usize, usize)> = (0..nu).map(|j| (ny + j, j)).collect();
    let keep: Vec<usize> = (0..nu).collect();
    close_links(h, &links, &keep)
}

/// `K = (I + Q·G_yu)⁻¹ Q`. Both `G_yu` and `Q` are expected to be stable.
pub fn youla_controller(g_yu: &StateSpace, q: &StateSpace) -> Result<StateSpace> {
    check_youla_dims(g_yu, q, "Q")?;
    let ny = g_yu.noutputs();
    // u = Q (y - G_yu u)
    let h = series(q, &hstack(&[&StateSpace::identity(ny), &g_yu.neg()])?)?;
    close_on_self(&h, ny)
}

/// `Q = K (I - G_yu·K)⁻¹`, the inverse of [`youla_controller`].
pub fn youla_parameter(k: &StateSpace, g_yu: &StateSpace) -> Result<StateSpace> {
    check_youla_dims(g_yu, k, "K")?;
    let ny = g_yu.noutputs();
    // u = K (y + G_yu u)
    let h = series(k, &hstack(&[&StateSpace::identity(ny), g_yu])?)?;
    close_on_self(&h, ny)
}

/// `G_{m,v}` matching the width of a controller or Youla parameter: `m` is
/// `y` or `(y, v)`.
fn measurement_block(g: &PartitionedPlant, width: usize, input: &str) -> Result<StateSpace> {
    let ny = g.output_width("y")?;
    let nv = g.input_width("v")?;
    if width == ny {
        g.block("y", input)
    } else if width == ny + nv {
        g.measurement_block(input)
    } else {
        Err(Error::dim(format!("width {width} matches neither y ({ny}) nor (y, v) ({})", ny + nv)))
    }
}

/// `G_wu·Q·G_yv` and its H∞ norm. `Q` may read `y` or `(y, v)`.
pub fn retrofit_residual(g: &PartitionedPlant, q: &StateSpace) -> Result<(StateSpace, f64)> {
    let g_wu = g.block("w", "u")?;
    let g_mv = measurement_block(g, q.ninputs(), "v")?;
    if q.noutputs() != g_wu.ninputs() {
        return Err(Error::dim(format!("Q gives {} outputs, u has {}", q.noutputs(), g_wu.ninputs())));
    }
    let residual = series_all(&[&g_wu, q, &g_mv])?;
    let norm = hinf_norm(&residual, NORM_TOL)?;
    Ok((residual, norm))
}

/// Whether `k` (positive feedback) internally stabilizes the channel `g`.
pub fn stabilizes(g: &StateSpace, k: &StateSpace) -> Result<bool> {
    if k.ninputs() != g.noutputs() || k.noutputs() != g.ninputs() {
        return Err(Error::dim(format!(
            "controller is {}->{}, channel is {}->{}",
            k.ninputs(),
            k.noutputs(),
            g.ninputs(),
            g.noutputs()
        )));
    }
    let (gm, gp) = (g.ninputs(), g.noutputs());
    let all = append(&[g, k]);
    let mut links: Vec<(usize, usize)> = (0..gm).map(|j| (j, gp + j)).collect();
    links.extend((0..gp).map(|j| (gm + j, j)));
    close_links(&all, &links, &[])?.is_hurwitz(0.0)
}

/// The interaction map `v ↦ w` of `g` with `k` attached.
pub fn interaction_map(g: &PartitionedPlant, k: &StateSpace) -> Result<StateSpace> {
    let ny = g.output_width("y")?;
    let reads_v = k.ninputs() != ny;
    let plant = if reads_v { g.with_v_passthrough()? } else { g.clone() };
    let ports = &plant.ports;
    let (pm, pp) = (plant.sys.ninputs(), plant.sys.noutputs());
    let all = append(&[&plant.sys, k]);
    let mut links: Vec<(usize, usize)> = ports.input_range("u")?.enumerate().map(|(j, i)| (i, pp + j)).collect();
    let mut meas: Vec<usize> = ports.output_range("y")?.collect();
    if reads_v {
        meas.extend(ports.output_range("v_meas")?);
    }
    if meas.len() != k.ninputs() {
        return Err(Error::dim(format!("controller takes {} inputs, measurement has {}", k.ninputs(), meas.len())));
    }
    links.extend(meas.into_iter().enumerate().map(|(j, o)| (pm + j, o)));
    let keep: Vec<usize> = ports.output_range("w")?.collect();
    let cl = close_links(&all, &links, &keep)?;
    // External inputs are (v, d) in port order; keep v.
    let nv = ports.input_range("v")?.len();
    Ok(cl.select(&(0..cl.noutputs()).collect::<Vec<_>>(), &(0..nv).collect::<Vec<_>>()))
}

/// Certifies an arbitrary controller by recovering its Youla parameter.
pub fn certify(g: &PartitionedPlant, k: &StateSpace) -> Result<RetrofitController> {
    let g_mu = measurement_block(g, k.ninputs(), "u")?;
    if !stabilizes(&g_mu, k)? {
        return Err(Error::NotStabilizing { subsystem: None });
    }
    let q = youla_parameter(k, &g_mu)?;
    let (_, residual_norm) = retrofit_residual(g, &q)?;
    Ok(RetrofitController {
        controller: k.clone(),
        kind: ControllerKind::GeneralQ,
        internal_stabilizer: None,
        rectifier: None,
        residual_norm,
    })
}

/// Controller generated by a given stable Youla parameter.
pub fn general_q_controller(g: &PartitionedPlant, q: &StateSpace) -> Result<RetrofitController> {
    let g_mu = measurement_block(g, q.ninputs(), "u")?;
    let controller = youla_controller(&g_mu, q)?;
    let (_, residual_norm) = retrofit_residual(g, q)?;
    Ok(RetrofitController {
        controller,
        kind: ControllerKind::GeneralQ,
        internal_stabilizer: None,
        rectifier: None,
        residual_norm,
    })
}

/// `R = [I, -G_yv]` acting on `(y, v)`.
pub fn output_rectifier(g: &PartitionedPlant) -> Result<StateSpace> {
    if !g.ports.has_input("v") {
        return Err(Error::MissingPort("v".into()));
    }
    if !g.ports.has_output("y") {
        return Err(Error::MissingPort("y".into()));
    }
    let g_yv = g.block("y", "v")?;
    hstack(&[&StateSpace::identity(g_yv.noutputs()), &g_yv.neg()])
}

/// `K = K̂·R` for an internal stabilizer `K̂` of `G_yu`.
pub fn output_rectifying_controller(g: &PartitionedPlant, k_hat: &StateSpace) -> Result<RetrofitController> {
    let g_yu = g.block("y", "u")?;
    if !stabilizes(&g_yu, k_hat)? {
        return Err(Error::NotStabilizing { subsystem: None });
    }
    let rectifier = output_rectifier(g)?;
    let controller = series(k_hat, &rectifier)?;
    let q = youla_parameter(&controller, &g.measurement_block("u")?)?;
    let (_, residual_norm) = retrofit_residual(g, &q)?;
    Ok(RetrofitController {
        controller,
        kind: ControllerKind::OutputRectifying,
        internal_stabilizer: Some(k_hat.clone()),
        rectifier: Some(rectifier),
        residual_norm,
    })
}

/// `(M̂_zd, M̂_wd)`: the disturbance maps of the isolated subsystem under
/// `K̂`, i.e. `G_zd + G_zu K̂ (I - G_yu K̂)⁻¹ G_yd` and the same with `w`.
pub fn hat_maps(g: &PartitionedPlant, k_hat: &StateSpace) -> Result<(StateSpace, StateSpace)> {
    if !stabilizes(&g.block("y", "u")?, k_hat)? {
        return Err(Error::NotStabilizing { subsystem: None });
    }
    let mz = lft_lower(&g.blocks(&["z", "y"], &["d", "u"])?, k_hat)?;
    let mw = lft_lower(&g.blocks(&["w", "y"], &["d", "u"])?, k_hat)?;
    Ok((mz, mw))
}

/// `T_zd = M̂_zd + G_zv (I - Ḡ G_wv)⁻¹ Ḡ M̂_wd` for a subsystem under
/// `K̂·R` in the environment `Ḡ` (mapping `w` to `v`).
pub fn cascade_tzd(g: &PartitionedPlant, k_hat: &StateSpace, env: &StateSpace) -> Result<StateSpace> {
    let g_wv = g.block("w", "v")?;
    if !stabilizes(&g_wv, env)? {
        return Err(Error::PreexistingInstability);
    }
    let (mz, mw) = hat_maps(g, k_hat)?;
    let coupling = feedback(env, &g_wv)?;
    let g_zv = g.block("z", "v")?;
    crate::lti::add(&mz, &series_all(&[&g_zv, &coupling, &mw])?)
}

/// Complementary projections for the state-measurement construction:
/// `P` annihilates the interaction input matrix, `P̄` captures it.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionPair {
    pub p: Mat,
    pub pbar: Mat,
    pub pdag: Mat,
    pub pbardag: Mat,
}

/// How far a pair is from its defining conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDefects {
    /// max |P†P + P̄†P̄ - I|
    pub completeness: f64,
    /// max |P L|
    pub annihilation: f64,
    /// σ_min/σ_max of P̄ L (1 when L is empty)
    pub capture_ratio: f64,
    /// Spectral abscissae of P A P† and P̄ A P̄†.
    pub abscissa: (f64, f64),
}

impl ProjectionPair {
    pub fn rank(&self) -> usize {
        self.p.nrows()
    }

    pub fn defects(&self, a: &Mat, l: &Mat) -> Result<PairDefects> {
        let n = a.nrows();
        let completeness = linalg::max_abs(&(&self.pdag * &self.p + &self.pbardag * &self.pbar - Mat::identity(n, n)));
        let annihilation = linalg::max_abs(&(&self.p * l));
        let capture_ratio = if l.ncols() == 0 { 1.0 } else { linalg::conditioning_ratio(&(&self.pbar * l)) };
        let abscissa_of = |m: Mat| -> Result<f64> {
            if m.nrows() == 0 {
                Ok(f64::NEG_INFINITY)
            } else {
                linalg::spectral_abscissa(&m)
            }
        };
        Ok(PairDefects {
            completeness,
            annihilation,
            capture_ratio,
            abscissa: (abscissa_of(&self.p * a * &self.pdag)?, abscissa_of(&self.pbar * a * &self.pbardag)?),
        })
    }

    /// Checks the defining conditions at working tolerances.
    pub fn validate(&self, a: &Mat, l: &Mat) -> Result<()> {
        let n = a.nrows();
        let shapes_ok = self.p.ncols() == n
            && self.pbar.ncols() == n
            && self.pdag.shape() == (n, self.p.nrows())
            && self.pbardag.shape() == (n, self.pbar.nrows())
            && self.p.nrows() + self.pbar.nrows() == n
            && l.nrows() == n;
        if !shapes_ok {
            return Err(Error::InvalidPair("shapes do not match the state dimension".into()));
        }
        let d = self.defects(a, l)?;
        let scale = 1.0 + linalg::max_abs(l);
        if d.completeness > 1e-8 {
            return Err(Error::InvalidPair(format!("P†P + P̄†P̄ - I = {:.3e}", d.completeness)));
        }
        if d.annihilation > 1e-10 * scale {
            return Err(Error::InvalidPair(format!("P L = {:.3e}", d.annihilation)));
        }
        if !l.is_empty() && linalg::max_abs(l) > 0.0 && d.capture_ratio < linalg::SINGULAR_RTOL {
            return Err(Error::InvalidPair("P̄ L is singular".into()));
        }
        if d.abscissa.0 >= 0.0 || d.abscissa.1 >= 0.0 {
            return Err(Error::InvalidPair("projected state matrices are not Hurwitz".into()));
        }
        Ok(())
    }
}

/// Orthonormal basis of the row space of `p`, each row with its largest
/// entry positive. Equals `T P` for an invertible `T`.
fn orthonormal_rows(p: &Mat) -> Mat {
    if p.nrows() == 0 {
        return p.clone();
    }
    let mut q = p.transpose().qr().q();
    for mut col in q.column_iter_mut() {
        let lead = col.iter().copied().fold(0.0_f64, |best, x| if x.abs() > best.abs() + 1e-12 { x } else { best });
        if lead < 0.0 {
            col.neg_mut();
        }
    }
    q.transpose()
}

/// Builds a projection pair for Hurwitz `a` and interaction input `l`.
///
/// Solves `A V + V Aᵀ = -I`, factors `V = V_c V_cᵀ`, and splits the state
/// space along the image of `V_c⁻¹ L` and its orthogonal complement. The
/// rows of `P` and `P̄` are finally orthonormalized, which changes the pair
/// only by an invertible left factor. An all-zero `l` gives `P = I`.
pub fn state_projection(a: &Mat, l: &Mat) -> Result<ProjectionPair> {
    let n = a.nrows();
    if a.ncols() != n || l.nrows() != n {
        return Err(Error::dim(format!("A is {}x{}, L is {}x{}", a.nrows(), a.ncols(), l.nrows(), l.ncols())));
    }
    let lw = l.ncols();
    if lw == 0 || linalg::max_abs(l) == 0.0 {
        return Ok(ProjectionPair {
            p: Mat::identity(n, n),
            pbar: Mat::zeros(0, n),
            pdag: Mat::identity(n, n),
            pbardag: Mat::zeros(n, 0),
        });
    }
    if lw > n {
        return Err(Error::RankDeficient(format!("L has {lw} columns but only {n} rows")));
    }
    if linalg::spectral_abscissa(a)? >= 0.0 {
        return Err(Error::Unstable("state matrix is not Hurwitz".into()));
    }
    let v = linalg::solve_lyapunov(a, &(-Mat::identity(n, n)))?;
    let vc = v.cholesky().ok_or_else(|| Error::Computation("Lyapunov solution is not positive definite".into()))?.l();
    let vc_inv = vc
        .clone()
        .solve_lower_triangular(&Mat::identity(n, n))
        .ok_or_else(|| Error::Computation("Cholesky factor is singular".into()))?;
    let m = &vc_inv * l;
    if linalg::conditioning_ratio(&m) < linalg::SINGULAR_RTOL {
        return Err(Error::RankDeficient("interaction input matrix L".into()));
    }
    let (range, complement) = linalg::range_and_complement(&m);
    let p = orthonormal_rows(&(complement.transpose() * &vc_inv));
    let pbar = orthonormal_rows(&(range.transpose() * &vc_inv));
    // Round-off entries are flushed so that coordinate-aligned splits come
    // out exact; the duals are then the columns of the stacked inverse.
    let (p, pbar) = (flush_roundoff(&p), flush_roundoff(&pbar));
    let stacked = linalg::vcat(n, &[&p, &pbar]);
    let inv = linalg::checked_inverse(&stacked)?;
    let r = p.nrows();
    Ok(ProjectionPair { p, pbar, pdag: inv.columns(0, r).into_owned(), pbardag: inv.columns(r, n - r).into_owned() })
}

/// Zeroes entries below a few ulps of their row's largest entry.
fn flush_roundoff(m: &Mat) -> Mat {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let cut = 4.0 * f64::EPSILON * row.amax();
        row.apply(|x| {
            if x.abs() <= cut {
                *x = 0.0;
            }
        });
    }
    out
}

/// The state rectifier `X` (input `x`, output `ξ̂`) and the projected channel
/// `Ĝ_ξu` it exposes.
pub fn state_rectifier(a: &Mat, b: &Mat, l: &Mat, pair: &ProjectionPair) -> Result<(StateSpace, StateSpace)> {
    pair.validate(a, l)?;
    if b.nrows() != a.nrows() {
        return Err(Error::dim(format!("B has {} rows, A is {}x{}", b.nrows(), a.nrows(), a.ncols())));
    }
    let r = pair.rank();
    let (p, pdag) = (&pair.p, &pair.pdag);
    let a_xi = p * a * pdag;
    let x = StateSpace::new(a_xi.clone(), p * a * &pair.pbardag * &pair.pbar, -Mat::identity(r, r), p.clone())?;
    let g_hat = StateSpace::new(a_xi, p * b, Mat::identity(r, r), Mat::zeros(r, b.ncols()))?;
    Ok((x, g_hat))
}

/// `X̄`, `X†`, `X̄†` completing `X` to a unimodular pair.
pub fn rectifier_complements(a: &Mat, pair: &ProjectionPair) -> Result<(StateSpace, StateSpace, StateSpace)> {
    let (p, pbar, pdag, pbardag) = (&pair.p, &pair.pbar, &pair.pdag, &pair.pbardag);
    let nb = pbar.nrows();
    let n = a.nrows();
    let xbar = StateSpace::new(pbar * a * pbardag, pbar * a * pdag * p, -Mat::identity(nb, nb), pbar.clone())?;
    let xdag = StateSpace::new(a.clone(), pbardag * pbar * a * pdag, Mat::identity(n, n), pdag.clone())?;
    let xbardag = StateSpace::new(a.clone(), pdag * p * a * pbardag, Mat::identity(n, n), pbardag.clone())?;
    Ok((xbar, xdag, xbardag))
}

/// Largest entry of `X†X + X̄†X̄ - I` over a frequency list.
pub fn unimodular_defect(a: &Mat, pair: &ProjectionPair, x: &StateSpace, omegas: &[f64]) -> Result<f64> {
    let (xbar, xdag, xbardag) = rectifier_complements(a, pair)?;
    let n = a.nrows();
    let eye = linalg::to_complex(&Mat::identity(n, n));
    let mut worst = 0.0_f64;
    for &w in omegas {
        let prod = xdag.freq_response(w)? * x.freq_response(w)? + xbardag.freq_response(w)? * xbar.freq_response(w)?;
        worst = worst.max((prod - &eye).map(|z| z.norm()).max());
    }
    Ok(worst)
}

/// Plant with full state measurement: `ẋ = A x + L v + d + B u`,
/// `w = z = y = x`.
pub fn full_state_plant(a: &Mat, b: &Mat, l: &Mat) -> Result<PartitionedPlant> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    let sys = StateSpace::new(
        a.clone(),
        linalg::hcat(n, &[l, &eye, b]),
        linalg::vcat(n, &[&eye, &eye, &eye]),
        Mat::zeros(3 * n, l.ncols() + n + b.ncols()),
    )?;
    PartitionedPlant::new(sys, PortSpec::standard(l.ncols(), n, b.ncols(), n, n, n))
}

/// `K = K̂·X` for state measurement, with `K̂` stabilizing `Ĝ_ξu`.
pub fn state_projection_controller(a: &Mat, b: &Mat, l: &Mat, k_hat: &StateSpace) -> Result<RetrofitController> {
    let pair = state_projection(a, l)?;
    let (x, g_hat) = state_rectifier(a, b, l, &pair)?;
    if !stabilizes(&g_hat, k_hat)? {
        return Err(Error::NotStabilizing { subsystem: None });
    }
    let controller = series(k_hat, &x)?;
    let plant = full_state_plant(a, b, l)?;
    let q = youla_parameter(&controller, &plant.block("y", "u")?)?;
    let (_, residual_norm) = retrofit_residual(&plant, &q)?;
    Ok(RetrofitController {
        controller,
        kind: ControllerKind::StateProjection,
        internal_stabilizer: Some(k_hat.clone()),
        rectifier: Some(x),
        residual_norm,
    })
}

/// Largest entrywise gap between two transfer maps on `points` log-spaced
/// frequencies in `[10⁻³, 10³]`.
pub fn grid_gap(g1: &StateSpace, g2: &StateSpace, points: usize) -> Result<f64> {
    if g1.noutputs() != g2.noutputs() || g1.ninputs() != g2.ninputs() {
        return Err(Error::dim("grid_gap: shapes differ"));
    }
    let mut worst = 0.0_f64;
    for w in log_grid(-3.0, 3.0, points) {
        let d = g1.freq_response(w)? - g2.freq_response(w)?;
        worst = worst.max(d.map(|z| z.norm()).max());
    }
    Ok(worst)
}
