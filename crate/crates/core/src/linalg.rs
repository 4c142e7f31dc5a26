//! Dense linear-algebra kernels shared by the control modules.
//!
//! Everything here works on `nalgebra::DMatrix`. The complex Schur form is
//! the workhorse: it backs eigenvalue ordering for the Riccati solver and
//! the Bartels–Stewart Sylvester/Lyapunov solver.

use nalgebra::{DMatrix, Schur, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Relative singular-value threshold below which a square matrix is treated
/// as singular.
pub const SINGULAR_RTOL: f64 = 1e-10;

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Horizontal concatenation. `rows` is needed when every block is empty.
pub fn hcat(rows: usize, blocks: &[&Mat]) -> Mat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat: row count mismatch");
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(b);
        c0 += b.ncols();
    }
    out
}

/// Vertical concatenation. `cols` is needed when every block is empty.
pub fn vcat(cols: usize, blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vcat: column count mismatch");
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(b);
        r0 += b.nrows();
    }
    out
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Rows `idx` of `m`, in the given order.
pub fn select_rows(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Columns `idx` of `m`, in the given order.
pub fn select_cols(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn max_singular_value(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn max_singular_value_c(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    SVD::new(m.clone(), false, false).singular_values.iter().fold(0.0_f64, |acc, &s| acc.max(s))
}

/// σ_min/σ_max of a square matrix; 1 for the empty matrix.
pub fn conditioning_ratio(m: &Mat) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        (Some(_), Some(_)) => 0.0,
        _ => 1.0,
    }
}

/// Inverse of `m`, refusing matrices whose singular-value ratio is below
/// [`SINGULAR_RTOL`].
pub fn checked_inverse(m: &Mat) -> Result<Mat> {
    let ratio = conditioning_ratio(m);
    if ratio < SINGULAR_RTOL {
        return Err(Error::IllPosed { ratio });
    }
    m.clone().try_inverse().ok_or(Error::IllPosed { ratio })
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![Complex64::new(a[(0, 0)], 0.0)]);
    }
    if !a.iter().all(|x| x.is_finite()) {
        return Err(Error::Computation("non-finite entry in eigenvalue problem".into()));
    }
    let balanced = balance(a);
    for eps in [f64::EPSILON, 1e-14, 1e-12] {
        if let Some(schur) = Schur::try_new(balanced.clone(), eps, 200 * n + 2000) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::Computation("real Schur iteration did not converge".into()))
}

/// Diagonal similarity by powers of two that evens out row and column
/// norms; eigenvalues are unchanged and rounding is not introduced.
pub fn balance(a: &Mat) -> Mat {
    let n = a.nrows();
    let mut b = a.clone();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let (mut c, mut r) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if c + r < 0.95 * total {
                converged = false;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    b
}

/// Largest real part among the eigenvalues (the spectral abscissa).
pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Complex Schur decomposition `m = Z T Zᴴ` with `T` upper triangular.
pub fn complex_schur(m: &CMat) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((CMat::zeros(0, 0), CMat::zeros(0, 0)));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 200 * n + 2000)
        .ok_or_else(|| Error::Computation("complex Schur iteration did not converge".into()))?;
    let (z, mut t) = schur.unpack();
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok((z, t))
}

/// Reorders a complex Schur form so that every diagonal entry accepted by
/// `select` moves to the leading block. Returns the size of that block.
pub fn reorder_schur(z: &mut CMat, t: &mut CMat, select: impl Fn(Complex64) -> bool) -> usize {
    let n = t.nrows();
    let mut placed = 0;
    for j in 0..n {
        if select(t[(j, j)]) {
            let mut i = j;
            while i > placed {
                swap_adjacent(z, t, i - 1);
                i -= 1;
            }
            placed += 1;
        }
    }
    placed
}

/// Swaps the diagonal entries `k` and `k+1` of an upper-triangular `t` with
/// a single Givens rotation, accumulating it into `z`.
fn swap_adjacent(z: &mut CMat, t: &mut CMat, k: usize) {
    let n = t.nrows();
    let a = t[(k, k)];
    let b = t[(k + 1, k + 1)];
    let x1 = t[(k, k + 1)];
    let x2 = b - a;
    let r = (x1.norm_sqr() + x2.norm_sqr()).sqrt();
    if r == 0.0 {
        return;
    }
    let g1 = x1 / r;
    let g2 = x2 / r;
    for i in 0..n {
        let tik = t[(i, k)];
        let tik1 = t[(i, k + 1)];
        t[(i, k)] = tik * g1 + tik1 * g2;
        t[(i, k + 1)] = -tik * g2.conj() + tik1 * g1.conj();
        let zik = z[(i, k)];
        let zik1 = z[(i, k + 1)];
        z[(i, k)] = zik * g1 + zik1 * g2;
        z[(i, k + 1)] = -zik * g2.conj() + zik1 * g1.conj();
    }
    for j in 0..n {
        let tkj = t[(k, j)];
        let tk1j = t[(k + 1, j)];
        t[(k, j)] = g1.conj() * tkj + g2.conj() * tk1j;
        t[(k + 1, j)] = -g2 * tkj + g1 * tk1j;
    }
    t[(k + 1, k)] = Complex64::new(0.0, 0.0);
    t[(k, k)] = b;
    t[(k + 1, k + 1)] = a;
}

/// Solves the Sylvester equation `A X + X B = C` by Bartels–Stewart on the
/// complex Schur forms of `A` and `B`.
pub fn solve_sylvester(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let (n, m) = (a.nrows(), b.nrows());
    if a.ncols() != n || b.ncols() != m || c.nrows() != n || c.ncols() != m {
        return Err(Error::dim(format!(
            "Sylvester: A {}x{}, B {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if n == 0 || m == 0 {
        return Ok(Mat::zeros(n, m));
    }
    let (u, ta) = complex_schur(&to_complex(a))?;
    let (v, tb) = complex_schur(&to_complex(b))?;
    let f = u.adjoint() * to_complex(c) * &v;
    let scale = ta.iter().chain(tb.iter()).map(|x| x.norm()).fold(1.0_f64, f64::max);

    let mut y = CMat::zeros(n, m);
    for j in 0..m {
        let mut rhs = f.column(j).into_owned();
        for k in 0..j {
            let coef = tb[(k, j)];
            if coef.norm() != 0.0 {
                rhs -= y.column(k) * coef;
            }
        }
        let shift = tb[(j, j)];
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for l in (i + 1)..n {
                acc -= ta[(i, l)] * y[(l, j)];
            }
            let piv = ta[(i, i)] + shift;
            if piv.norm() <= 1e-14 * scale {
                return Err(Error::Computation("Sylvester equation is singular (λ_i(A) + λ_j(B) ≈ 0)".into()));
            }
            y[(i, j)] = acc / piv;
        }
    }
    let x = u * y * v.adjoint();
    Ok(x.map(|z| z.re))
}

/// Solves `A X + X Aᵀ = C`.
pub fn solve_lyapunov(a: &Mat, c: &Mat) -> Result<Mat> {
    let x = solve_sylvester(a, &a.transpose(), c)?;
    Ok(symmetrize(&x))
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Matrix exponential; the empty matrix maps to itself.
pub fn expm(a: &Mat) -> Mat {
    if a.nrows() == 0 {
        return a.clone();
    }
    a.exp()
}

/// For a full-column-rank `m` (n×r), returns `(range, complement)` with
/// orthonormal columns: `range` (n×r) spans the image of `m` and
/// `complement` (n×(n−r)) its orthogonal complement.
pub fn range_and_complement(m: &Mat) -> (Mat, Mat) {
    let n = m.nrows();
    let r = m.ncols();
    let stacked = hcat(n, &[m, &Mat::identity(n, n)]);
    let q = stacked.qr().q();
    let q = q.columns(0, n).into_owned();
    (q.columns(0, r).into_owned(), q.columns(r, n - r).into_owned())
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sylvester_matches_kronecker_solve() {
        let a = Mat::from_row_slice(3, 3, &[-1.0, 2.0, 0.5, 0.0, -3.0, 1.0, 0.3, 0.0, -2.0]);
        let b = Mat::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.5]);
        let c = Mat::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = solve_sylvester(&a, &b, &c).unwrap();
        let resid = &a * &x + &x * &b - &c;
        assert!(resid.norm() < 1e-12, "residual {}", resid.norm());

        // vec(AX + XB) = (I⊗A + Bᵀ⊗I) vec(X)
        let k = Mat::identity(2, 2).kronecker(&a) + b.transpose().kronecker(&Mat::identity(3, 3));
        let vx = k.lu().solve(&DMatrix::from_column_slice(6, 1, c.as_slice())).unwrap();
        let x2 = Mat::from_column_slice(3, 2, vx.as_slice());
        assert!((x - x2).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_diagonal() {
        let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
        let v = solve_lyapunov(&a, &(-Mat::identity(2, 2))).unwrap();
        assert!((v[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((v[(1, 1)] - 0.25).abs() < 1e-14);
        assert!(v[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn schur_reordering_moves_stable_block_first() {
        let m = Mat::from_row_slice(
            4,
            4,
            &[
                1.0, 2.0, 0.0, 1.0, //
                -1.0, -3.0, 1.0, 0.0, //
                0.5, 0.0, 2.0, 1.0, //
                0.0, 1.0, 0.0, -4.0,
            ],
        );
        let (mut z, mut t) = complex_schur(&to_complex(&m)).unwrap();
        let k = reorder_schur(&mut z, &mut t, |l| l.re < 0.0);
        let stable = eigenvalues(&m).unwrap().iter().filter(|l| l.re < 0.0).count();
        assert_eq!(k, stable);
        for i in 0..4 {
            assert_eq!(t[(i, i)].re < 0.0, i < k);
        }
        let recon = &z * &t * z.adjoint();
        let err = (recon - to_complex(&m)).map(|x| x.norm()).max();
        assert!(err < 1e-12, "reconstruction error {err}");
    }

    #[test]
    fn range_complement_is_orthogonal() {
        let m = Mat::from_row_slice(3, 1, &[0.0, 2.0, 0.0]);
        let (r, c) = range_and_complement(&m);
        assert_eq!(r.ncols(), 1);
        assert_eq!(c.ncols(), 2);
        assert!((c.transpose() * &m).norm() < 1e-15);
        let q = hcat(3, &[&r, &c]);
        assert!((q.transpose() * q - Mat::identity(3, 3)).norm() < 1e-14);
    }
}
