//! Ordered real Schur decomposition.
//!
//! nalgebra provides the (unordered) real Schur form `A = Q T Q^T`; this
//! module normalizes 2x2 blocks with real eigenvalues into 1x1 blocks and
//! reorders the quasi-triangular factor by orthogonal swaps of adjacent
//! diagonal blocks so that a selected eigenvalue group leads. The swap stages
//! the standard invariant-subspace construction: solve the small Sylvester
//! equation for the coupling block, orthonormalize, and apply the rotation.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::solve_sylvester;

#[derive(Debug, Clone)]
pub struct RealSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

/// Diagonal block layout of a quasi-triangular matrix: start index and size
/// (1 or 2) of each block.
pub fn blocks_of(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Eigenvalues of one diagonal block.
pub fn block_eigenvalues(t: &DMatrix<f64>, start: usize, size: usize) -> Vec<Complex<f64>> {
    if size == 1 {
        return vec![Complex::new(t[(start, start)], 0.0)];
    }
    let (a, b) = (t[(start, start)], t[(start, start + 1)]);
    let (c, d) = (t[(start + 1, start)], t[(start + 1, start + 1)]);
    let tr = a + d;
    let disc = (a - d) * (a - d) + 4.0 * b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        vec![
            Complex::new(0.5 * (tr + s), 0.0),
            Complex::new(0.5 * (tr - s), 0.0),
        ]
    } else {
        let s = (-disc).sqrt() * 0.5;
        vec![
            Complex::new(0.5 * tr, s),
            Complex::new(0.5 * tr, -s),
        ]
    }
}

fn apply_givens(schur: &mut RealSchur, i: usize, c: f64, s: f64) {
    // Right-multiply columns (i, i+1) of T and Q by G, left-multiply rows of T
    // by G^T, where G = [[c, -s], [s, c]].
    let n = schur.t.nrows();
    for r in 0..n {
        let (a, b) = (schur.t[(r, i)], schur.t[(r, i + 1)]);
        schur.t[(r, i)] = c * a + s * b;
        schur.t[(r, i + 1)] = -s * a + c * b;
        let (qa, qb) = (schur.q[(r, i)], schur.q[(r, i + 1)]);
        schur.q[(r, i)] = c * qa + s * qb;
        schur.q[(r, i + 1)] = -s * qa + c * qb;
    }
    for col in 0..n {
        let (a, b) = (schur.t[(i, col)], schur.t[(i + 1, col)]);
        schur.t[(i, col)] = c * a + s * b;
        schur.t[(i + 1, col)] = -s * a + c * b;
    }
}

/// Split any 2x2 diagonal block whose eigenvalues are real into two 1x1
/// blocks using a Givens rotation aligned with an eigenvector.
fn normalize_blocks(schur: &mut RealSchur) {
    let n = schur.t.nrows();
    let mut i = 0;
    while i + 1 < n {
        if schur.t[(i + 1, i)] == 0.0 {
            i += 1;
            continue;
        }
        let (a, b) = (schur.t[(i, i)], schur.t[(i, i + 1)]);
        let (c2, d) = (schur.t[(i + 1, i)], schur.t[(i + 1, i + 1)]);
        let disc = (a - d) * (a - d) + 4.0 * b * c2;
        if disc < 0.0 {
            i += 2;
            continue;
        }
        // Real eigenvalues: rotate an eigenvector of the larger eigenvalue
        // into the first coordinate.
        let s = disc.sqrt();
        let lambda = if (a + d) >= 0.0 {
            0.5 * (a + d + s)
        } else {
            0.5 * (a + d - s)
        };
        // (block - lambda I) v = 0
        let (v0, v1) = if b.abs() >= c2.abs() {
            (b, lambda - a)
        } else {
            (lambda - d, c2)
        };
        let norm = (v0 * v0 + v1 * v1).sqrt();
        if norm == 0.0 {
            i += 2;
            continue;
        }
        let (g_c, g_s) = (v0 / norm, v1 / norm);
        apply_givens(schur, i, g_c, g_s);
        schur.t[(i + 1, i)] = 0.0;
        i += 1;
    }
}

/// True when the matrix already has valid real-Schur block structure
/// (upper quasi-triangular with no overlapping 2x2 blocks).
fn is_quasi_triangular(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    for r in 0..n {
        for c in 0..n {
            if r > c + 1 && a[(r, c)] != 0.0 {
                return false;
            }
        }
    }
    let mut i = 0;
    while i + 1 < n {
        if a[(i + 1, i)] != 0.0 {
            if i + 2 < n && a[(i + 2, i + 1)] != 0.0 {
                return false;
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    true
}

/// Real Schur decomposition with all real-eigenvalue blocks split to 1x1.
pub fn real_schur(a: &DMatrix<f64>) -> Result<RealSchur> {
    // A quasi-triangular matrix is its own Schur form; bypassing the QR
    // iteration keeps exactly-representable spectra (e.g. decoupled modes
    // with a unit multiplier) bit-exact.
    let (q, t) = if is_quasi_triangular(a) {
        (DMatrix::identity(a.nrows(), a.nrows()), a.clone())
    } else {
        nalgebra::linalg::Schur::try_new(a.clone(), 1e-14, 0)
            .ok_or(Error::SchurFailure)?
            .unpack()
    };
    let mut out = RealSchur { q, t };
    normalize_blocks(&mut out);
    // Clear negligible subdiagonal fill so the block scan stays consistent.
    let n = out.t.nrows();
    let scale = a.norm().max(1.0);
    for i in 0..n.saturating_sub(1) {
        if out.t[(i + 1, i)] != 0.0 && out.t[(i + 1, i)].abs() < 1e-300 * scale {
            out.t[(i + 1, i)] = 0.0;
        }
    }
    for r in 0..n {
        for c in 0..n {
            if r > c + 1 {
                out.t[(r, c)] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Swap the adjacent diagonal blocks at `(i, p)` and `(i+p, q_size)`.
fn swap_adjacent(schur: &mut RealSchur, i: usize, p: usize, q_size: usize) -> Result<()> {
    let a = schur.t.view((i, i), (p, p)).into_owned();
    let b = schur.t.view((i + p, i + p), (q_size, q_size)).into_owned();
    let c = schur.t.view((i, i + p), (p, q_size)).into_owned();
    // Columns of [X; I] span the invariant subspace carrying sigma(B):
    // A X - X B = -C.
    let x = solve_sylvester(&a, &b, &(-&c))
        .ok_or_else(|| Error::ReorderFailure("coupling Sylvester solve failed".into()))?;
    let m = p + q_size;
    let mut basis = DMatrix::zeros(m, q_size);
    basis.view_mut((0, 0), (p, q_size)).copy_from(&x);
    basis
        .view_mut((p, 0), (q_size, q_size))
        .copy_from(&DMatrix::identity(q_size, q_size));
    // Full orthogonal factor of the tall QR.
    let qr = basis.qr();
    let q_thin = qr.q();
    let mut w = DMatrix::zeros(m, m);
    w.view_mut((0, 0), (m, q_size)).copy_from(&q_thin);
    // Complete with the orthogonal complement via Gram-Schmidt against q_thin.
    let mut filled = q_size;
    for basis_col in 0..m {
        if filled == m {
            break;
        }
        let mut v = DVector::zeros(m);
        v[basis_col] = 1.0;
        for j in 0..filled {
            let wj = w.column(j).into_owned();
            let proj = wj.dot(&v);
            v -= wj * proj;
        }
        // repeat once for numerical orthogonality
        for j in 0..filled {
            let wj = w.column(j).into_owned();
            let proj = wj.dot(&v);
            v -= wj * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            w.set_column(filled, &(v / norm));
            filled += 1;
        }
    }
    if filled != m {
        return Err(Error::ReorderFailure(
            "failed to complete orthogonal basis in block swap".into(),
        ));
    }

    // T <- diag-embedded W^T * T * W; Q <- Q * W.
    let n = schur.t.nrows();
    let mut w_full = DMatrix::identity(n, n);
    w_full.view_mut((i, i), (m, m)).copy_from(&w);
    schur.t = &w_full.transpose() * &schur.t * &w_full;
    schur.q = &schur.q * &w_full;
    // Zero the structural subdiagonal block and re-split real pairs.
    for r in 0..q_size {
        for cidx in 0..p {
            schur.t[(i + q_size + cidx, i + r)] = 0.0;
        }
    }
    let nrows = schur.t.nrows();
    for r in 0..nrows {
        for cidx in 0..nrows {
            if r > cidx + 1 {
                schur.t[(r, cidx)] = 0.0;
            }
        }
    }
    normalize_blocks(schur);
    Ok(())
}

/// Reorder the Schur form so blocks satisfying `select` (on their eigenvalue)
/// come first. Returns the dimension of the leading selected group.
pub fn reorder(schur: &mut RealSchur, select: impl Fn(Complex<f64>) -> bool) -> Result<usize> {
    loop {
        let blocks = blocks_of(&schur.t);
        let flags: Vec<bool> = blocks
            .iter()
            .map(|&(s, sz)| select(block_eigenvalues(&schur.t, s, sz)[0]))
            .collect();
        // First unselected block followed (later) by a selected one.
        let mut swap_at = None;
        for w in 0..blocks.len().saturating_sub(1) {
            if !flags[w] && flags[w + 1] {
                swap_at = Some(w);
                break;
            }
        }
        match swap_at {
            None => break,
            Some(w) => {
                let (s1, p) = blocks[w];
                let (_, q_size) = blocks[w + 1];
                swap_adjacent(schur, s1, p, q_size)?;
            }
        }
    }
    let blocks = blocks_of(&schur.t);
    let mut dim = 0;
    for &(s, sz) in &blocks {
        if select(block_eigenvalues(&schur.t, s, sz)[0]) {
            dim += sz;
        } else {
            break;
        }
    }
    Ok(dim)
}

/// All eigenvalues of a quasi-triangular matrix in block order.
pub fn all_eigenvalues(t: &DMatrix<f64>) -> Vec<Complex<f64>> {
    blocks_of(t)
        .into_iter()
        .flat_map(|(s, sz)| block_eigenvalues(t, s, sz))
        .collect()
}
