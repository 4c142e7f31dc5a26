//! Continuous-time state-space systems, port partitioning and
//! interconnection algebra.
//!
//! Feedback everywhere uses the positive convention `u = K y`, so a lower
//! LFT closes through `I - D22·Dk`. Interconnections never minimize: states
//! are concatenated in a documented order so closed-loop eigenvalues stay
//! visible.

use std::ops::Range;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, hcat, select_cols, select_rows, vcat, CMat, Mat};

/// Real realization `ẋ = A x + B u`, `y = C x + D u`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim(format!("A is {}x{}, expected square", a.nrows(), a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::dim(format!("A is {n}x{n} but B has {} rows", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::dim(format!("A is {n}x{n} but C has {} columns", c.ncols())));
        }
        if d.nrows() != c.nrows() {
            return Err(Error::dim(format!("C has {} rows but D has {}", c.nrows(), d.nrows())));
        }
        if d.ncols() != b.ncols() {
            return Err(Error::dim(format!("B has {} columns but D has {}", b.ncols(), d.ncols())));
        }
        Ok(Self { a, b, c, d })
    }

    /// A memoryless system `y = D u`.
    pub fn static_gain(d: Mat) -> Self {
        let (p, m) = d.shape();
        Self { a: Mat::zeros(0, 0), b: Mat::zeros(0, m), c: Mat::zeros(p, 0), d }
    }

    pub fn zero(outputs: usize, inputs: usize) -> Self {
        Self::static_gain(Mat::zeros(outputs, inputs))
    }

    pub fn identity(width: usize) -> Self {
        Self::static_gain(Mat::identity(width, width))
    }

    pub fn scalar(k: f64) -> Self {
        Self::static_gain(Mat::from_element(1, 1, k))
    }

    /// `1/(s+a)`-style scalar lag `gain/(s + pole)`.
    pub fn first_order(gain: f64, pole: f64) -> Self {
        Self {
            a: Mat::from_element(1, 1, -pole),
            b: Mat::from_element(1, 1, 1.0),
            c: Mat::from_element(1, 1, gain),
            d: Mat::zeros(1, 1),
        }
    }

    pub fn nstates(&self) -> usize {
        self.a.nrows()
    }

    pub fn ninputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn noutputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_static(&self) -> bool {
        self.nstates() == 0
    }

    pub fn is_hurwitz(&self, margin: f64) -> Result<bool> {
        if self.nstates() == 0 {
            return Ok(true);
        }
        let eig = linalg::eigenvalues(&self.a)?;
        Ok(eig.iter().all(|l| l.re < -margin))
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        linalg::eigenvalues(&self.a)
    }

    /// `G(s) = C (sI - A)⁻¹ B + D` at an arbitrary complex point.
    pub fn eval(&self, s: Complex64) -> Result<CMat> {
        let n = self.nstates();
        let d = linalg::to_complex(&self.d);
        if n == 0 {
            return Ok(d);
        }
        let mut m = linalg::to_complex(&(-&self.a));
        for i in 0..n {
            m[(i, i)] += s;
        }
        let scale = 1.0 + s.norm() + linalg::max_abs(&self.a);
        let lu = m.lu();
        let u = lu.u();
        let min_piv = u.diagonal().iter().map(|x| x.norm()).fold(f64::INFINITY, f64::min);
        if min_piv <= 1e-13 * scale {
            return Err(Error::SingularResolvent { omega: s.im });
        }
        let x = lu.solve(&linalg::to_complex(&self.b)).ok_or(Error::SingularResolvent { omega: s.im })?;
        Ok(linalg::to_complex(&self.c) * x + d)
    }

    pub fn freq_response(&self, omega: f64) -> Result<CMat> {
        self.eval(Complex64::new(0.0, omega))
    }

    /// `-C A⁻¹ B + D`.
    pub fn dc_gain(&self) -> Result<Mat> {
        Ok(self.freq_response(0.0)?.map(|z| z.re))
    }

    /// Keeps the listed outputs and inputs; the state is untouched.
    pub fn select(&self, outputs: &[usize], inputs: &[usize]) -> StateSpace {
        StateSpace {
            a: self.a.clone(),
            b: select_cols(&self.b, inputs),
            c: select_rows(&self.c, outputs),
            d: select_cols(&select_rows(&self.d, outputs), inputs),
        }
    }

    pub fn scale(&self, k: f64) -> StateSpace {
        StateSpace { a: self.a.clone(), b: self.b.clone(), c: &self.c * k, d: &self.d * k }
    }

    pub fn neg(&self) -> StateSpace {
        self.scale(-1.0)
    }

    /// `T · G` for a static matrix `T` on the output side.
    pub fn premul(&self, t: &Mat) -> Result<StateSpace> {
        if t.ncols() != self.noutputs() {
            return Err(Error::dim(format!(
                "premultiplier has {} columns, system has {} outputs",
                t.ncols(),
                self.noutputs()
            )));
        }
        Ok(StateSpace { a: self.a.clone(), b: self.b.clone(), c: t * &self.c, d: t * &self.d })
    }

    /// `G · T` for a static matrix `T` on the input side.
    pub fn postmul(&self, t: &Mat) -> Result<StateSpace> {
        if t.nrows() != self.ninputs() {
            return Err(Error::dim(format!(
                "postmultiplier has {} rows, system has {} inputs",
                t.nrows(),
                self.ninputs()
            )));
        }
        Ok(StateSpace { a: self.a.clone(), b: &self.b * t, c: self.c.clone(), d: &self.d * t })
    }

    /// State coordinate change `x = T z`.
    pub fn similarity(&self, t: &Mat) -> Result<StateSpace> {
        let ti = linalg::checked_inverse(t)?;
        StateSpace::new(&ti * &self.a * t, &ti * &self.b, &self.c * t, self.d.clone())
    }
}

pub fn make_state_space(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<StateSpace> {
    StateSpace::new(a, b, c, d)
}

pub fn is_hurwitz(sys: &StateSpace, margin: f64) -> Result<bool> {
    sys.is_hurwitz(margin)
}

pub fn freq_response(sys: &StateSpace, omega: f64) -> Result<CMat> {
    sys.freq_response(omega)
}

/// `left · right`: the signal passes through `right` first. States are
/// ordered `[right; left]`.
pub fn series(left: &StateSpace, right: &StateSpace) -> Result<StateSpace> {
    if left.ninputs() != right.noutputs() {
        return Err(Error::dim(format!(
            "series: left takes {} inputs, right gives {} outputs",
            left.ninputs(),
            right.noutputs()
        )));
    }
    let (nr, nl) = (right.nstates(), left.nstates());
    let mut a = Mat::zeros(nr + nl, nr + nl);
    a.view_mut((0, 0), (nr, nr)).copy_from(&right.a);
    a.view_mut((nr, nr), (nl, nl)).copy_from(&left.a);
    a.view_mut((nr, 0), (nl, nr)).copy_from(&(&left.b * &right.c));
    let b = vcat(right.ninputs(), &[&right.b, &(&left.b * &right.d)]);
    let c = hcat(left.noutputs(), &[&(&left.d * &right.c), &left.c]);
    let d = &left.d * &right.d;
    StateSpace::new(a, b, c, d)
}

/// Chained product `g[0] · g[1] · … · g[k]`.
pub fn series_all(chain: &[&StateSpace]) -> Result<StateSpace> {
    let (last, rest) = chain.split_last().ok_or_else(|| Error::dim("empty product"))?;
    let mut acc = (*last).clone();
    for g in rest.iter().rev() {
        acc = series(g, &acc)?;
    }
    Ok(acc)
}

/// Parallel sum; states `[g1; g2]`.
pub fn add(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    if g1.ninputs() != g2.ninputs() || g1.noutputs() != g2.noutputs() {
        return Err(Error::dim(format!(
            "add: {}x{} vs {}x{}",
            g1.noutputs(),
            g1.ninputs(),
            g2.noutputs(),
            g2.ninputs()
        )));
    }
    let a = linalg::block_diag(&[&g1.a, &g2.a]);
    let b = vcat(g1.ninputs(), &[&g1.b, &g2.b]);
    let c = hcat(g1.noutputs(), &[&g1.c, &g2.c]);
    StateSpace::new(a, b, c, &g1.d + &g2.d)
}

pub fn sub(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    add(g1, &g2.neg())
}

/// Block-diagonal stacking `diag(g_1, …, g_k)`.
pub fn append(blocks: &[&StateSpace]) -> StateSpace {
    let a: Vec<&Mat> = blocks.iter().map(|g| &g.a).collect();
    let b: Vec<&Mat> = blocks.iter().map(|g| &g.b).collect();
    let c: Vec<&Mat> = blocks.iter().map(|g| &g.c).collect();
    let d: Vec<&Mat> = blocks.iter().map(|g| &g.d).collect();
    StateSpace {
        a: linalg::block_diag(&a),
        b: linalg::block_diag(&b),
        c: linalg::block_diag(&c),
        d: linalg::block_diag(&d),
    }
}

/// `[g_1, …, g_k]`: inputs concatenated, outputs summed.
pub fn hstack(blocks: &[&StateSpace]) -> Result<StateSpace> {
    let p = blocks.first().map(|g| g.noutputs()).unwrap_or(0);
    if blocks.iter().any(|g| g.noutputs() != p) {
        return Err(Error::dim("hstack: output widths differ"));
    }
    let all = append(blocks);
    let sum = hcat(p, &vec![&Mat::identity(p, p); blocks.len()]);
    all.premul(&sum)
}

/// `[g_1; …; g_k]`: one shared input, outputs concatenated.
pub fn vstack(blocks: &[&StateSpace]) -> Result<StateSpace> {
    let m = blocks.first().map(|g| g.ninputs()).unwrap_or(0);
    if blocks.iter().any(|g| g.ninputs() != m) {
        return Err(Error::dim("vstack: input widths differ"));
    }
    let all = append(blocks);
    let fan = vcat(m, &vec![&Mat::identity(m, m); blocks.len()]);
    all.postmul(&fan)
}

/// Closes unit-gain links `input[i] ← output[o]` on `sys`.
///
/// Unlinked inputs remain external (in their original order); the returned
/// outputs are the rows listed in `keep`, evaluated on the closed loop.
pub fn close_links(sys: &StateSpace, links: &[(usize, usize)], keep: &[usize]) -> Result<StateSpace> {
    let m = sys.ninputs();
    let p = sys.noutputs();
    let mut linked = vec![false; m];
    for &(i, o) in links {
        if i >= m || o >= p {
            return Err(Error::dim(format!("link ({i} <- {o}) outside {m} inputs / {p} outputs")));
        }
        if linked[i] {
            return Err(Error::dim(format!("input {i} is linked twice")));
        }
        linked[i] = true;
    }
    if let Some(&k) = keep.iter().find(|&&k| k >= p) {
        return Err(Error::dim(format!("kept output {k} outside {p} outputs")));
    }
    let internal: Vec<usize> = links.iter().map(|&(i, _)| i).collect();
    let external: Vec<usize> = (0..m).filter(|i| !linked[*i]).collect();

    // e = F y_all with F selecting the linked outputs.
    let ne = internal.len();
    let mut f = Mat::zeros(ne, p);
    for (k, &(_, o)) in links.iter().enumerate() {
        f[(k, o)] = 1.0;
    }
    let b_e = select_cols(&sys.b, &internal);
    let b_r = select_cols(&sys.b, &external);
    let d_e = select_cols(&sys.d, &internal);
    let d_r = select_cols(&sys.d, &external);

    let loop_mat = Mat::identity(ne, ne) - &f * &d_e;
    let w = linalg::checked_inverse(&loop_mat)?;
    // e = W F (C x + D_r r)
    let wf = &w * &f;
    let e_x = &wf * &sys.c;
    let e_r = &wf * &d_r;

    let a = &sys.a + &b_e * &e_x;
    let b = &b_r + &b_e * &e_r;
    let c_all = &sys.c + &d_e * &e_x;
    let d_all = &d_r + &d_e * &e_r;
    StateSpace::new(a, b, select_rows(&c_all, keep), select_rows(&d_all, keep))
}

fn check_loop(d22: &Mat, dk: &Mat) -> Result<()> {
    let n = d22.nrows();
    let ratio = linalg::conditioning_ratio(&(Mat::identity(n, n) - d22 * dk));
    if ratio < linalg::SINGULAR_RTOL {
        return Err(Error::IllPosed { ratio });
    }
    Ok(())
}

/// Lower LFT `𝓕_l(P, K)`: the last `K.noutputs()` inputs and last
/// `K.ninputs()` outputs of `P` are closed through `u = K y`.
/// States are `[P; K]`.
pub fn lft_lower(p: &StateSpace, k: &StateSpace) -> Result<StateSpace> {
    let nu = k.noutputs();
    let ny = k.ninputs();
    if nu > p.ninputs() || ny > p.noutputs() {
        return Err(Error::dim(format!(
            "lft_lower: K is {ny}->{nu}, P only has {} inputs / {} outputs",
            p.ninputs(),
            p.noutputs()
        )));
    }
    let (m1, p1) = (p.ninputs() - nu, p.noutputs() - ny);
    let d22 = p.d.view((p1, m1), (ny, nu)).into_owned();
    check_loop(&d22, &k.d)?;
    let g = append(&[p, k]);
    // inputs: [w (m1), u (nu), k_in (ny)]; outputs: [z (p1), y (ny), k_out (nu)]
    let mut links = Vec::with_capacity(nu + ny);
    for j in 0..nu {
        links.push((m1 + j, p1 + ny + j));
    }
    for j in 0..ny {
        links.push((m1 + nu + j, p1 + j));
    }
    let keep: Vec<usize> = (0..p1).collect();
    close_links(&g, &links, &keep)
}

/// Upper LFT `𝓕_u(P, Δ)`: the first `Δ.noutputs()` inputs and first
/// `Δ.ninputs()` outputs of `P` are closed through `v = Δ w`.
/// States are `[P; Δ]`.
pub fn lft_upper(p: &StateSpace, delta: &StateSpace) -> Result<StateSpace> {
    let nv = delta.noutputs();
    let nw = delta.ninputs();
    if nv > p.ninputs() || nw > p.noutputs() {
        return Err(Error::dim(format!(
            "lft_upper: Δ is {nw}->{nv}, P only has {} inputs / {} outputs",
            p.ninputs(),
            p.noutputs()
        )));
    }
    let d11 = p.d.view((0, 0), (nw, nv)).into_owned();
    check_loop(&d11, &delta.d)?;
    let (m, pp) = (p.ninputs(), p.noutputs());
    let g = append(&[p, delta]);
    // inputs: [v (nv), d, Δ_in (nw)]; outputs: [w (nw), z, Δ_out (nv)]
    let mut links = Vec::with_capacity(nv + nw);
    for j in 0..nv {
        links.push((j, pp + j));
    }
    for j in 0..nw {
        links.push((m + j, j));
    }
    let keep: Vec<usize> = (nw..pp).collect();
    close_links(&g, &links, &keep)
}

/// `(I - G·K)⁻¹`-style feedback of two blocks: returns the map from an
/// injection `r` at the input of `forward` to its output, with
/// `forward` driven by `r + back(out)`.
pub fn feedback(forward: &StateSpace, back: &StateSpace) -> Result<StateSpace> {
    if back.ninputs() != forward.noutputs() || back.noutputs() != forward.ninputs() {
        return Err(Error::dim("feedback: incompatible loop widths"));
    }
    // out = forward·[I, I]·(r, back(out))
    let m = forward.ninputs();
    let summed = series(forward, &hstack(&[&StateSpace::identity(m), back])?)?;
    // summed inputs: [r (m), back_in (p)], output: out (p)
    let p = forward.noutputs();
    let links: Vec<(usize, usize)> = (0..p).map(|j| (m + j, j)).collect();
    let keep: Vec<usize> = (0..p).collect();
    close_links(&summed, &links, &keep)
}

/// Named input and output ports of a partitioned plant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PortSpec {
    pub inputs: Vec<(String, usize)>,
    pub outputs: Vec<(String, usize)>,
}

impl PortSpec {
    pub fn new(inputs: Vec<(String, usize)>, outputs: Vec<(String, usize)>) -> Result<Self> {
        for list in [&inputs, &outputs] {
            for (i, (name, _)) in list.iter().enumerate() {
                if list[..i].iter().any(|(n, _)| n == name) {
                    return Err(Error::PortWidth(format!("duplicate port name `{name}`")));
                }
            }
        }
        Ok(Self { inputs, outputs })
    }

    /// The `(v, d, u) → (w, z, y)` layout.
    pub fn standard(v: usize, d: usize, u: usize, w: usize, z: usize, y: usize) -> Self {
        Self {
            inputs: vec![("v".into(), v), ("d".into(), d), ("u".into(), u)],
            outputs: vec![("w".into(), w), ("z".into(), z), ("y".into(), y)],
        }
    }

    pub fn input_width(&self) -> usize {
        self.inputs.iter().map(|(_, w)| w).sum()
    }

    pub fn output_width(&self) -> usize {
        self.outputs.iter().map(|(_, w)| w).sum()
    }

    fn range_in(list: &[(String, usize)], name: &str) -> Result<Range<usize>> {
        let mut start = 0;
        for (n, w) in list {
            if n == name {
                return Ok(start..start + w);
            }
            start += w;
        }
        Err(Error::MissingPort(name.to_string()))
    }

    pub fn input_range(&self, name: &str) -> Result<Range<usize>> {
        Self::range_in(&self.inputs, name)
    }

    pub fn output_range(&self, name: &str) -> Result<Range<usize>> {
        Self::range_in(&self.outputs, name)
    }

    pub fn has_input(&self, name: &str) -> bool {
        self.inputs.iter().any(|(n, _)| n == name)
    }

    pub fn has_output(&self, name: &str) -> bool {
        self.outputs.iter().any(|(n, _)| n == name)
    }
}

/// A plant with labelled ports `(v, d, u) → (w, z, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedPlant {
    pub sys: StateSpace,
    pub ports: PortSpec,
}

impl PartitionedPlant {
    pub fn new(sys: StateSpace, ports: PortSpec) -> Result<Self> {
        if ports.input_width() != sys.ninputs() {
            return Err(Error::PortWidth(format!(
                "input ports sum to {}, system has {} inputs",
                ports.input_width(),
                sys.ninputs()
            )));
        }
        if ports.output_width() != sys.noutputs() {
            return Err(Error::PortWidth(format!(
                "output ports sum to {}, system has {} outputs",
                ports.output_width(),
                sys.noutputs()
            )));
        }
        Ok(Self { sys, ports })
    }

    /// Builds a standard plant from its port matrices. Blocks of `D` not
    /// given are zero.
    pub fn from_blocks(a: Mat, b: [&Mat; 3], c: [&Mat; 3], d: Option<Mat>) -> Result<Self> {
        let n = a.nrows();
        let widths_in = [b[0].ncols(), b[1].ncols(), b[2].ncols()];
        let widths_out = [c[0].nrows(), c[1].nrows(), c[2].nrows()];
        let bm = hcat(n, &b);
        let cm = vcat(n, &c);
        let (m, p) = (bm.ncols(), cm.nrows());
        let sys = StateSpace::new(a, bm, cm, d.unwrap_or_else(|| Mat::zeros(p, m)))?;
        let ports =
            PortSpec::standard(widths_in[0], widths_in[1], widths_in[2], widths_out[0], widths_out[1], widths_out[2]);
        Self::new(sys, ports)
    }

    pub fn nstates(&self) -> usize {
        self.sys.nstates()
    }

    pub fn input_width(&self, name: &str) -> Result<usize> {
        Ok(self.ports.input_range(name)?.len())
    }

    pub fn output_width(&self, name: &str) -> Result<usize> {
        Ok(self.ports.output_range(name)?.len())
    }

    fn indices(&self, outputs: &[&str], inputs: &[&str]) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut rows = Vec::new();
        for name in outputs {
            rows.extend(self.ports.output_range(name)?);
        }
        let mut cols = Vec::new();
        for name in inputs {
            cols.extend(self.ports.input_range(name)?);
        }
        Ok((rows, cols))
    }

    /// The sub-transfer `G_{out,in}` (full state kept).
    pub fn block(&self, output: &str, input: &str) -> Result<StateSpace> {
        self.blocks(&[output], &[input])
    }

    /// Stacked sub-transfer from the listed inputs to the listed outputs.
    pub fn blocks(&self, outputs: &[&str], inputs: &[&str]) -> Result<StateSpace> {
        let (rows, cols) = self.indices(outputs, inputs)?;
        Ok(self.sys.select(&rows, &cols))
    }

    /// The plant with the interaction input `v` copied to an extra output
    /// named `v_meas`, so controllers reading `(y, v)` can be wired as an
    /// ordinary output feedback.
    pub fn with_v_passthrough(&self) -> Result<PartitionedPlant> {
        let v = self.ports.input_range("v")?;
        let (n, m) = (self.nstates(), self.sys.ninputs());
        let mut d_extra = Mat::zeros(v.len(), m);
        for (k, j) in v.clone().enumerate() {
            d_extra[(k, j)] = 1.0;
        }
        let sys = StateSpace::new(
            self.sys.a.clone(),
            self.sys.b.clone(),
            vcat(n, &[&self.sys.c, &Mat::zeros(v.len(), n)]),
            vcat(m, &[&self.sys.d, &d_extra]),
        )?;
        let mut ports = self.ports.clone();
        ports.outputs.push(("v_meas".into(), v.len()));
        PartitionedPlant::new(sys, ports)
    }

    /// `G_{(y,v), input}`: the measurement `y` stacked with the identity
    /// (or zero) action of `input` on the measured interaction `v`.
    pub fn measurement_block(&self, input: &str) -> Result<StateSpace> {
        self.with_v_passthrough()?.blocks(&["y", "v_meas"], &[input])
    }
}

pub fn partition_plant(sys: StateSpace, ports: PortSpec) -> Result<PartitionedPlant> {
    PartitionedPlant::new(sys, ports)
}

#[cfg(test)]
pub(crate) fn mat(rows: usize, cols: usize, data: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, data)
}
