use nalgebra::{Complex, DMatrix};

/// SVD with the matrix prescaled to unit max entry. Degenerate scales
/// (zeros, denormals) otherwise stall the iterative kernel.
fn scaled_svd(
    m: &DMatrix<f64>,
    compute_u: bool,
    compute_v: bool,
) -> Option<(nalgebra::linalg::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, f64)> {
    let s = m.amax();
    if s == 0.0 || !s.is_finite() {
        return None;
    }
    let scaled = m / s;
    Some((scaled.svd(compute_u, compute_v), s))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    match scaled_svd(m, false, false) {
        Some((svd, s)) => svd.singular_values[0] * s,
        None => 0.0,
    }
}

/// Orthonormal basis of the column space, keeping singular directions with
/// `sigma > tol * sigma_max`.
pub fn column_space_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let nrows = m.nrows();
    if nrows == 0 || m.ncols() == 0 {
        return DMatrix::zeros(nrows, 0);
    }
    let Some((svd, _)) = scaled_svd(m, true, false) else {
        return DMatrix::zeros(nrows, 0);
    };
    let u = svd.u.as_ref().expect("svd with u requested");
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return DMatrix::zeros(nrows, 0);
    }
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > tol * smax)
        .count();
    u.columns(0, rank).into_owned()
}

/// Numerical rank with relative tolerance.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    column_space_basis(m, tol).ncols()
}

/// Smallest and largest singular values, `(0, 0)` for a zero matrix.
pub fn sv_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0.0, 0.0);
    }
    match scaled_svd(m, false, false) {
        Some((svd, s)) => {
            let sv = &svd.singular_values;
            (sv[sv.len() - 1] * s, sv[0] * s)
        }
        None => (0.0, 0.0),
    }
}

/// Left singular vectors with singular value above an absolute threshold.
pub fn left_singular_basis(m: &DMatrix<f64>, abs_threshold: f64) -> DMatrix<f64> {
    let nrows = m.nrows();
    let Some((svd, s)) = scaled_svd(m, true, false) else {
        return DMatrix::zeros(nrows, 0);
    };
    let u = svd.u.as_ref().expect("svd with u requested");
    let mut cols = Vec::new();
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        if sv * s > abs_threshold {
            cols.push(i);
        }
    }
    let mut out = DMatrix::zeros(nrows, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases. Subspaces of different dimension are maximally apart.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let overlap = a.transpose() * b;
    let sv = overlap.svd(false, false).singular_values;
    let c = sv[sv.len() - 1].clamp(-1.0, 1.0);
    c.acos()
}

/// Eigenvalue range of a symmetric matrix, as `(min, max)`.
pub fn symmetric_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Hermitian eigenvalue range of a complex matrix via its real symmetric
/// embedding `[[Re, -Im], [Im, Re]]` (each eigenvalue doubled).
pub fn hermitian_eig_range(m: &DMatrix<Complex<f64>>) -> (f64, f64) {
    let n = m.nrows();
    if n == 0 {
        return (0.0, 0.0);
    }
    let herm = (m + m.adjoint()) * Complex::new(0.5, 0.0);
    let mut emb = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = herm[(i, j)];
            emb[(i, j)] = v.re;
            emb[(i + n, j + n)] = v.re;
            emb[(i + n, j)] = v.im;
            emb[(i, j + n)] = -v.im;
        }
    }
    symmetric_eig_range(&emb)
}

/// Complex SVD with prescaling and bounded iterations.
pub fn complex_svd(
    m: &DMatrix<Complex<f64>>,
    compute_u: bool,
    compute_v: bool,
) -> Option<(
    nalgebra::linalg::SVD<Complex<f64>, nalgebra::Dyn, nalgebra::Dyn>,
    f64,
)> {
    let s = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if s == 0.0 || !s.is_finite() {
        return None;
    }
    let scaled = m / Complex::new(s, 0.0);
    Some((scaled.svd(compute_u, compute_v), s))
}

/// Orthonormal basis of the numerical kernel of a complex matrix: right
/// singular vectors with `sigma <= tol * sigma_max`.
pub fn complex_kernel(m: &DMatrix<Complex<f64>>, tol: f64) -> DMatrix<Complex<f64>> {
    let n = m.ncols();
    let Some((svd, _)) = complex_svd(m, false, true) else {
        // zero matrix: the kernel is everything
        return DMatrix::identity(n, n);
    };
    let v_t = svd.v_t.as_ref().expect("svd with v_t requested");
    let smax = svd.singular_values.max();
    let mut cols = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol * smax.max(f64::MIN_POSITIVE) {
            cols.push(v_t.row(i).adjoint());
        }
    }
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Dense Sylvester solve `A X - X B = C` via the Kronecker linear system.
/// Solvable whenever the spectra of `A` and `B` are disjoint.
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let p = a.nrows();
    let q = b.nrows();
    if p == 0 || q == 0 {
        return Some(DMatrix::zeros(p, q));
    }
    // vec(AX - XB) = (I_q (x) A - B^T (x) I_p) vec(X)
    let mut k = DMatrix::zeros(p * q, p * q);
    for j in 0..q {
        for i in 0..p {
            let row = j * p + i;
            for l in 0..p {
                k[(row, j * p + l)] += a[(i, l)];
            }
            for l in 0..q {
                k[(row, l * p + i)] -= b[(l, j)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let sol = k.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(p, q, sol.as_slice()))
}
