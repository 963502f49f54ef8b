//! Shared helpers for the integration suites: a standalone reference
//! integrator and quadrature kept independent of the library's propagator,
//! plus deterministic random-system utilities.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pfstab::coeffs::Side;
use pfstab::system::PeriodicSystem;

/// Reference RK4 for `y' = f(t, y)` with `n` uniform steps, written directly
/// against closures so oracle values do not share the library's sweep code.
pub fn ref_rk4<F>(f: F, t0: f64, t1: f64, y0: DVector<f64>, n: usize) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    for i in 0..n {
        let t = t0 + h * i as f64;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &(&y + &k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&y + &k2 * (0.5 * h)));
        let k4 = f(t + h, &(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

/// Reference transition matrix via column propagation on a fine grid.
pub fn ref_transition(system: &PeriodicSystem, s: f64, t: f64, steps: usize) -> DMatrix<f64> {
    let n = system.n_x;
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let col = ref_rk4(
            |tau, y| system.drift(tau, Side::Right) * y,
            s,
            t,
            e,
            steps,
        );
        out.set_column(j, &col);
    }
    out
}

/// Composite Simpson quadrature (even interval count).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals % 2 == 0);
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Deterministic Haar-like orthonormal basis of a random m0-dimensional
/// subspace of R^{n_u}, built from a seeded LCG + QR.
pub fn random_subspace_basis(n_u: usize, m0: usize, seed: u64) -> DMatrix<f64> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
    };
    let g = DMatrix::from_fn(n_u, m0, |_, _| next());
    let qr = g.qr();
    qr.q().columns(0, m0).into_owned()
}

/// Largest eigenvalue-modulus of a matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Reference backward sweep of `Psi(s) = Phi(t_end, s)` on a fine grid,
/// written directly against the drift closure.
pub fn ref_transition_from(
    sys: &PeriodicSystem,
    t_end: f64,
    steps: usize,
) -> Vec<DMatrix<f64>> {
    let n = sys.n_x;
    let h = t_end / steps as f64;
    let mut psi = DMatrix::identity(n, n);
    let mut rev = vec![psi.clone()];
    for i in 0..steps {
        let a = t_end - h * i as f64;
        let f = |t: f64, m: &DMatrix<f64>| -> DMatrix<f64> { -(m * sys.drift(t, Side::Right)) };
        let k1 = f(a, &psi);
        let k2 = f(a - 0.5 * h, &(&psi + &k1 * (-0.5 * h)));
        let k3 = f(a - 0.5 * h, &(&psi + &k2 * (-0.5 * h)));
        let k4 = f(a - h, &(&psi + &k3 * (-h)));
        psi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (-h / 6.0);
        rev.push(psi.clone());
    }
    rev.reverse();
    rev
}

/// Brute-force LQ oracle: minimize `eps int ||u||^2 + ||y(NT)||^2` over
/// piecewise-constant controls on `intervals` uniform intervals, entirely
/// through the reference integrator and a dense normal-equation solve.
pub fn brute_force_lq_cost(
    sys: &PeriodicSystem,
    eps: f64,
    n_periods: usize,
    intervals: usize,
    h0: &DVector<f64>,
) -> f64 {
    let horizon = n_periods as f64 * sys.period;
    let n = sys.n_x;
    let n_u = sys.n_u;
    let fine_per_interval = 64usize;
    let fine = intervals * fine_per_interval;
    let psi = ref_transition_from(sys, horizon, fine);
    let hf = horizon / fine as f64;
    let mut g = DMatrix::zeros(n, intervals * n_u);
    for i in 0..intervals {
        let mut acc = DMatrix::zeros(n, n_u);
        for j in 0..fine_per_interval {
            let idx = i * fine_per_interval + j;
            let t0 = hf * idx as f64;
            let t1 = hf * (idx + 1) as f64;
            let a = &psi[idx] * sys.input(t0, Side::Right);
            let b = &psi[idx + 1] * sys.input(t1, Side::Left);
            acc += (a + b) * (0.5 * hf);
        }
        g.view_mut((0, i * n_u), (n, n_u)).copy_from(&acc);
    }
    let phi_h = &psi[0] * h0;
    let dt = horizon / intervals as f64;
    let normal = DMatrix::identity(intervals * n_u, intervals * n_u) * (eps * dt)
        + g.transpose() * &g;
    let rhs = -(g.transpose() * &phi_h);
    let u = normal.lu().solve(&rhs).expect("normal equations solvable");
    let resid = phi_h + &g * &u;
    eps * dt * u.norm_squared() + resid.norm_squared()
}
