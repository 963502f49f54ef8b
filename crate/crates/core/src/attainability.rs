use nalgebra::{Complex, DMatrix};

use crate::coeffs::Side;
use crate::error::{Error, Result};
use crate::linalg;
use crate::spectral::SpectralSplit;
use crate::system::{ControlSubspace, PeriodicSystem};

/// Default relative rank tolerance separating genuine rank deficiency from
/// quadrature noise.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Margins within a factor of this of their tolerance are refused as
/// undecidable rather than silently classified.
pub const UNDECIDABLE_FACTOR: f64 = 10.0;

/// Attainable-subspace Gramian over `[0, kT]`:
/// `G_k = int_0^{kT} Phi(kT,s) D(s) Pi_Z D(s)^T Phi(kT,s)^T ds`.
#[derive(Debug, Clone)]
pub struct Gramian {
    pub matrix: DMatrix<f64>,
    pub horizon_periods: usize,
    pub subspace: ControlSubspace,
    pub quadrature_steps: usize,
}

/// Forward co-integration of the Lyapunov ODE
/// `G' = M G + G M^T + D Pi_Z D^T`, `G(0) = 0`, on the propagator grid.
pub fn gramian(system: &PeriodicSystem, z: &ControlSubspace, k: usize) -> Result<Gramian> {
    assert!(k >= 1, "gramian horizon must be at least one period");
    z.validate(system.n_u)?;
    let pi = z.projector(system.n_u);
    let n = system.n_x;
    let m = system.grid.samples_per_period();
    let h = system.grid.step();
    let steps = m * k;
    let forcing = |t: f64, side: Side| -> DMatrix<f64> {
        let d = system.input(t, side);
        &d * &pi * d.transpose()
    };
    let mut g = DMatrix::zeros(n, n);
    for i in 0..steps {
        let a = h * i as f64;
        let mid = a + 0.5 * h;
        let b = a + h;
        let m1 = system.drift(a, Side::Right);
        let m2 = system.drift(mid, Side::Right);
        let m3 = system.drift(b, Side::Left);
        let f1 = forcing(a, Side::Right);
        let f2 = forcing(mid, Side::Right);
        let f3 = forcing(b, Side::Left);
        let k1 = &m1 * &g + &g * m1.transpose() + &f1;
        let y2 = &g + &k1 * (0.5 * h);
        let k2 = &m2 * &y2 + &y2 * m2.transpose() + &f2;
        let y3 = &g + &k2 * (0.5 * h);
        let k3 = &m2 * &y3 + &y3 * m2.transpose() + &f2;
        let y4 = &g + &k3 * h;
        let k4 = &m3 * &y4 + &y4 * m3.transpose() + &f3;
        g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    g = (&g + &g.transpose()) * 0.5;
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinitePropagation);
    }
    Ok(Gramian {
        matrix: g,
        horizon_periods: k,
        subspace: z.clone(),
        quadrature_steps: steps,
    })
}

/// Orthonormal basis of `range(G)`, keeping singular directions above
/// `tol * sigma_max`.
pub fn attainable_basis(g: &Gramian, tol: f64) -> DMatrix<f64> {
    linalg::column_space_basis(&g.matrix, tol)
}

/// Largest principal angle between `range(G_k)` and the recursive span
/// `[B1, P B1, ..., P^{k-1} B1]` with `B1 = attainable_basis(G_1)`.
pub fn recursion_check(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    split: &SpectralSplit,
    k: usize,
) -> Result<f64> {
    assert!(k >= 1, "recursion horizon must be at least one period");
    let g_k = gramian(system, z, k)?;
    let direct = attainable_basis(&g_k, DEFAULT_RANK_TOL);
    let g_1 = gramian(system, z, 1)?;
    let b_1 = attainable_basis(&g_1, DEFAULT_RANK_TOL);
    let n = system.n_x;
    let mut stacked = DMatrix::zeros(n, b_1.ncols() * k);
    let mut power = b_1.clone();
    for j in 0..k {
        stacked
            .view_mut((0, j * b_1.ncols()), (n, b_1.ncols()))
            .copy_from(&power);
        power = &split.poincare * power;
    }
    let recursive = linalg::column_space_basis(&stacked, DEFAULT_RANK_TOL);
    Ok(linalg::max_principal_angle(&direct, &recursive))
}

/// Verdict, margin and decision threshold of one certificate.
#[derive(Debug, Clone, Copy)]
pub struct CertOutcome {
    pub verdict: bool,
    /// The decisive singular value / eigenvalue (infinite when trivially true).
    pub margin: f64,
    /// The tolerance the margin was compared against.
    pub threshold: f64,
    /// Margin lies within a factor 10 of the threshold.
    pub undecidable: bool,
}

fn decide(margin: f64, threshold: f64) -> CertOutcome {
    if threshold == 0.0 {
        return CertOutcome {
            verdict: margin > 0.0,
            margin,
            threshold,
            undecidable: false,
        };
    }
    let verdict = margin > threshold;
    let undecidable =
        margin >= threshold / UNDECIDABLE_FACTOR && margin <= threshold * UNDECIDABLE_FACTOR;
    CertOutcome {
        verdict,
        margin,
        threshold,
        undecidable,
    }
}

fn trivially_true() -> CertOutcome {
    CertOutcome {
        verdict: true,
        margin: f64::INFINITY,
        threshold: 0.0,
        undecidable: false,
    }
}

/// Certificate (b): the projected attainable subspace fills `H1`, tested as
/// full rank of `U1^T P G_{n0} P^T U1`.
pub fn certify_b(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    split: &SpectralSplit,
    rank_tol: f64,
) -> Result<CertOutcome> {
    if split.n0 == 0 {
        return Ok(trivially_true());
    }
    let g = gramian(system, z, split.n0)?;
    Ok(certify_b_with(&g, split, rank_tol))
}

pub(crate) fn certify_b_with(g: &Gramian, split: &SpectralSplit, rank_tol: f64) -> CertOutcome {
    let u1 = &split.basis_h1;
    let core = u1.transpose() * &split.p * &g.matrix * split.p.transpose() * u1;
    let (smin, smax) = linalg::sv_range(&core);
    decide(smin, rank_tol * smax)
}

/// Certificate (c): unique continuation on `[0, n0 T]` for dual data in
/// `P^* H1`, tested as positive definiteness of the Gramian restricted to
/// `range(P^T)`.
pub fn certify_c(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    split: &SpectralSplit,
    rank_tol: f64,
) -> Result<CertOutcome> {
    if split.n0 == 0 {
        return Ok(trivially_true());
    }
    let g = gramian(system, z, split.n0)?;
    Ok(certify_c_with(&g, split, rank_tol))
}

pub(crate) fn certify_c_with(g: &Gramian, split: &SpectralSplit, rank_tol: f64) -> CertOutcome {
    // Orthonormal basis of range(P^T): singular vectors of P^T with sigma >= 1.
    let basis = linalg::left_singular_basis(&split.p.transpose(), 0.5);
    let restricted = basis.transpose() * &g.matrix * &basis;
    let (lo, hi) = linalg::symmetric_eig_range(&restricted);
    decide(lo.max(0.0), rank_tol * hi.max(0.0))
}

/// Certificate (d): unique continuation on `[0, T]` for unstable
/// eigenvectors of the adjoint one-period map, tested per distinct unstable
/// multiplier through the eigenspace-restricted one-period Gramian.
pub fn certify_d(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    split: &SpectralSplit,
    rank_tol: f64,
) -> Result<CertOutcome> {
    if split.n0 == 0 {
        return Ok(trivially_true());
    }
    let g1 = gramian(system, z, 1)?;
    certify_d_with(&g1, split, rank_tol)
}

pub(crate) fn certify_d_with(
    g1: &Gramian,
    split: &SpectralSplit,
    rank_tol: f64,
) -> Result<CertOutcome> {
    let n = split.p.nrows();
    let pt_c = split
        .poincare
        .transpose()
        .map(|v| Complex::new(v, 0.0));
    let g_c = g1.matrix.map(|v| Complex::new(v, 0.0));
    let mut worst_margin = f64::INFINITY;
    let mut worst_threshold = 0.0;
    let mut verdict = true;
    let mut undecidable = false;
    for mult in split.multipliers.iter().filter(|m| m.unstable) {
        if mult.value.im < 0.0 {
            // conjugate pair: the conjugate eigenspace gives the same spectrum
            continue;
        }
        let shifted = DMatrix::from_diagonal_element(n, n, mult.value) - &pt_c;
        let kernel = linalg::complex_kernel(&shifted, 1e-8);
        let kernel = if kernel.ncols() == 0 {
            // fall back to the single smallest singular direction
            let (svd, _) = linalg::complex_svd(&shifted, false, true)
                .ok_or(Error::EmptyEigenspace {
                    re: mult.value.re,
                    im: mult.value.im,
                })?;
            let v_t = svd.v_t.as_ref().expect("svd with v_t");
            let smax = svd.singular_values.max();
            let (idx, &smin) = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .expect("nonempty singular values");
            if smin > 1e-6 * smax {
                return Err(Error::EmptyEigenspace {
                    re: mult.value.re,
                    im: mult.value.im,
                });
            }
            let mut k = DMatrix::zeros(n, 1);
            k.set_column(0, &v_t.row(idx).adjoint());
            k
        } else {
            kernel
        };
        let w = kernel.adjoint() * &g_c * &kernel;
        let (lo, hi) = linalg::hermitian_eig_range(&w);
        let outcome = decide(lo.max(0.0), rank_tol * hi.max(0.0));
        if outcome.margin < worst_margin {
            worst_margin = outcome.margin;
            worst_threshold = outcome.threshold;
        }
        verdict &= outcome.verdict;
        undecidable |= outcome.undecidable;
    }
    Ok(CertOutcome {
        verdict,
        margin: worst_margin,
        threshold: worst_threshold,
        undecidable,
    })
}

/// Verdicts and margins of the three equivalent stabilizability conditions.
#[derive(Debug, Clone)]
pub struct StabilizabilityCertificate {
    pub verdict_b: bool,
    pub verdict_c: bool,
    pub verdict_d: bool,
    pub margin_b: f64,
    pub margin_c: f64,
    pub margin_d: f64,
    pub rank_tolerance: f64,
    pub agreement: bool,
    pub undecidable: bool,
    pub n0: usize,
    pub delta_bar: f64,
    pub borderline: bool,
}

impl StabilizabilityCertificate {
    pub fn stabilizable(&self) -> bool {
        self.agreement && self.verdict_b
    }
}

/// Run all three certificates and cross-check their agreement.
pub fn certify_all(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    split: &SpectralSplit,
    rank_tol: f64,
) -> Result<StabilizabilityCertificate> {
    let (b, c, d) = if split.n0 == 0 {
        (trivially_true(), trivially_true(), trivially_true())
    } else {
        let g_n0 = gramian(system, z, split.n0)?;
        let g_1 = if split.n0 == 1 {
            g_n0.clone()
        } else {
            gramian(system, z, 1)?
        };
        (
            certify_b_with(&g_n0, split, rank_tol),
            certify_c_with(&g_n0, split, rank_tol),
            certify_d_with(&g_1, split, rank_tol)?,
        )
    };
    Ok(StabilizabilityCertificate {
        verdict_b: b.verdict,
        verdict_c: c.verdict,
        verdict_d: d.verdict,
        margin_b: b.margin,
        margin_c: c.margin,
        margin_d: d.margin,
        rank_tolerance: rank_tol,
        agreement: b.verdict == c.verdict && c.verdict == d.verdict,
        undecidable: b.undecidable || c.undecidable || d.undecidable,
        n0: split.n0,
        delta_bar: split.delta_bar,
        borderline: split.borderline,
    })
}

/// Extract a finite-dimensional control subspace `Z_hat <= Z` that preserves
/// certificate (b): sample the minimum-norm controls hitting a basis of
/// `H1`, orthonormalize their values, and truncate by SVD to the smallest
/// sufficient dimension.
pub fn finite_reduction(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    split: &SpectralSplit,
    rank_tol: f64,
) -> Result<(ControlSubspace, CertOutcome)> {
    let cert = certify_b(system, z, split, rank_tol)?;
    if !cert.verdict {
        return Err(Error::NotStabilizable {
            detail: format!("certificate (b) false (margin {:.3e})", cert.margin),
        });
    }
    if split.n0 == 0 {
        return Ok((z.clone(), cert));
    }
    let n0 = split.n0;
    let pi = z.projector(system.n_u);
    let g = gramian(system, z, n0)?;
    let core = split.basis_h1.transpose() * &split.p * &g.matrix * split.p.transpose()
        * &split.basis_h1;
    let core_inv = core
        .lu()
        .try_inverse()
        .ok_or(Error::DeadbeatGramianSingular)?;
    // w_j = P^T U1 Ghat^{-1} e_j; u_j(s) = Pi_Z D(s)^T Phi(n0 T, s)^T w_j.
    let w = split.p.transpose() * &split.basis_h1 * core_inv;
    let horizon = n0 as f64 * system.period;
    let m_steps = system.grid.samples_per_period() * n0;
    let h = horizon / m_steps as f64;
    let psi = crate::propagator::adjoint_matrix_sweep(system, horizon, &w);
    // Stack all sampled control values (n_u x (nodes * n0)).
    let mut stacked = DMatrix::zeros(system.n_u, psi.len() * n0);
    for (i, x) in psi.iter().enumerate() {
        let t = if i == m_steps { horizon } else { h * i as f64 };
        let side = if i == m_steps { Side::Left } else { Side::Right };
        let u_val = &pi * system.input(t, side).transpose() * x;
        stacked
            .view_mut((0, i * n0), (system.n_u, n0))
            .copy_from(&u_val);
    }
    let directions = linalg::column_space_basis(&stacked, 1e-12);
    for m_hat in 1..=directions.ncols() {
        let candidate = ControlSubspace::Basis(directions.columns(0, m_hat).into_owned());
        let c = certify_b(system, &candidate, split, rank_tol)?;
        if c.verdict && !c.undecidable {
            return Ok((candidate, c));
        }
    }
    // The full direction set spans Pi_Z of the originals; certificate (b)
    // held for Z, so this is unreachable unless tolerances disagree.
    Err(Error::NotStabilizable {
        detail: "finite reduction could not re-certify any truncation".into(),
    })
}
