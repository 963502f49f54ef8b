use nalgebra::{DMatrix, DVector};

use crate::coeffs::Side;
use crate::error::{Error, Result};
use crate::system::{ControlSubspace, PeriodicSystem, SampledControl};

/// One-period transition matrix `P(t0) = Phi(t0 + T, t0)` with a step-doubling
/// convergence witness.
#[derive(Debug, Clone)]
pub struct Monodromy {
    pub matrix: DMatrix<f64>,
    pub base_time: f64,
    pub integrator_steps: usize,
    /// `||P_h - P_{h/2}||_F` from recomputation with doubled steps.
    pub convergence_witness: f64,
}

/// Number of fixed-size RK4 steps used to cover `[s, t]` on the system grid.
fn step_count(span: f64, h: f64) -> usize {
    if span <= 0.0 {
        return 0;
    }
    let k = span / h;
    let rounded = k.round();
    if (k - rounded).abs() <= 1e-9 * k.max(1.0) && rounded >= 1.0 {
        rounded as usize
    } else {
        k.ceil() as usize
    }
}

/// Classical RK4 sweep for `Y' = M(t) Y + F(t)` over `[s, t]`.
///
/// `F` is evaluated at the three stage offsets per step; the step's final
/// stage takes left limits so jumps sitting on nodes stay one-sided.
///
/// Grid steps whose local rate `||M|| h` exceeds the RK4 stability margin
/// are refined by deterministic substeps (high-gain closed loops put fast
/// boundary layers far above the open-loop time scale); recorded nodes stay
/// on the nominal grid.
fn rk4_sweep<F>(
    system: &PeriodicSystem,
    s: f64,
    t: f64,
    y0: DMatrix<f64>,
    mut forcing: Option<F>,
    mut record: Option<&mut Vec<DMatrix<f64>>>,
) -> DMatrix<f64>
where
    F: FnMut(f64, Side) -> DMatrix<f64>,
{
    let h_nominal = system.grid.step();
    let n = step_count(t - s, h_nominal);
    if let Some(rec) = record.as_deref_mut() {
        rec.push(y0.clone());
    }
    if n == 0 {
        return y0;
    }
    let dt = (t - s) / n as f64;
    let mut y = y0;
    for i in 0..n {
        let a = s + dt * i as f64;
        let b = if i + 1 == n { t } else { a + dt };
        let head = system.drift(a, Side::Right);
        // max row-sum norm as a cheap local rate bound
        let rate = head
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let substeps = ((dt * rate) / 1.0).ceil().max(1.0).min(4096.0) as usize;
        let ds = dt / substeps as f64;
        for j in 0..substeps {
            let sa = a + ds * j as f64;
            let mid = sa + 0.5 * ds;
            let sb = if j + 1 == substeps { b } else { sa + ds };
            let end_side = if j + 1 == substeps { Side::Left } else { Side::Right };
            let m1 = if j == 0 {
                head.clone()
            } else {
                system.drift(sa, Side::Right)
            };
            let m2 = system.drift(mid, Side::Right);
            let m3 = system.drift(sb, end_side);
            let (f1, f2, f3) = match forcing.as_mut() {
                Some(f) => (
                    f(sa, Side::Right),
                    f(mid, Side::Right),
                    f(sb, end_side),
                ),
                None => {
                    let z = DMatrix::zeros(y.nrows(), y.ncols());
                    (z.clone(), z.clone(), z)
                }
            };
            let k1 = &m1 * &y + &f1;
            let k2 = &m2 * (&y + &k1 * (0.5 * ds)) + &f2;
            let k3 = &m2 * (&y + &k2 * (0.5 * ds)) + &f2;
            let k4 = &m3 * (&y + &k3 * ds) + &f3;
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (ds / 6.0);
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.push(y.clone());
        }
    }
    y
}

/// `Phi(t, s) * Y0` by fixed-step RK4 on `Y' = M(tau) Y`.
pub fn propagate(
    system: &PeriodicSystem,
    s: f64,
    t: f64,
    y0: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if t < s {
        return Err(Error::BackwardSpan { s, t });
    }
    if y0.nrows() != system.n_x {
        return Err(Error::DimensionMismatch(format!(
            "initial data has {} rows, state dimension is {}",
            y0.nrows(),
            system.n_x
        )));
    }
    Ok(rk4_sweep::<fn(f64, Side) -> DMatrix<f64>>(
        system,
        s,
        t,
        y0.clone(),
        None,
        None,
    ))
}

/// Full transition matrix `Phi(t, s)`.
pub fn transition(system: &PeriodicSystem, s: f64, t: f64) -> Result<DMatrix<f64>> {
    propagate(system, s, t, &DMatrix::identity(system.n_x, system.n_x))
}

/// Poincare map at `t0`, with a step-doubling convergence witness.
pub fn monodromy(system: &PeriodicSystem, t0: f64) -> Result<Monodromy> {
    let coarse = transition(system, t0, t0 + system.period)?;
    let fine = {
        let mut doubled = system.clone();
        doubled.grid = crate::grid::TimeGrid::new(
            system.period,
            system.grid.samples_per_period() * 2,
        )?;
        transition(&doubled, t0, t0 + system.period)?
    };
    if !coarse.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinitePropagation);
    }
    let witness = (&coarse - &fine).norm();
    Ok(Monodromy {
        matrix: coarse,
        base_time: t0,
        integrator_steps: system.grid.samples_per_period(),
        convergence_witness: witness,
    })
}

/// A state trajectory sampled on integration nodes.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Mild solution `y(t) = Phi(t,s) h + int_s^t Phi(t,r) D(r) Pi_Z u(r) dr`,
/// computed by co-integrating the forced equation on the grid.
pub fn mild_solution(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    s: f64,
    h: &DVector<f64>,
    u: &SampledControl,
    t_end: f64,
) -> Result<Trajectory> {
    if t_end < s {
        return Err(Error::BackwardSpan { s, t: t_end });
    }
    if h.len() != system.n_x {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, state dimension is {}",
            h.len(),
            system.n_x
        )));
    }
    if !u.covers(s, t_end) {
        return Err(Error::ControlCoverage { s, t_end });
    }
    z.validate(system.n_u)?;
    let residual = u.subspace_residual(z, system.n_u);
    if residual > 1e-10 * (1.0 + u.values.iter().map(|v| v.norm()).fold(0.0, f64::max)) {
        return Err(Error::ControlOutsideSubspace { residual });
    }
    let pi = z.projector(system.n_u);
    let mut states_mat: Vec<DMatrix<f64>> = Vec::new();
    let y0 = DMatrix::from_column_slice(system.n_x, 1, h.as_slice());
    let forcing = |t: f64, side: Side| -> DMatrix<f64> {
        let d = system.input(t, side);
        let uv = &pi * u.eval(t);
        let f = d * uv;
        DMatrix::from_column_slice(f.len(), 1, f.as_slice())
    };
    rk4_sweep(system, s, t_end, y0, Some(forcing), Some(&mut states_mat));
    let n = step_count(t_end - s, system.grid.step());
    let dt = if n == 0 { 0.0 } else { (t_end - s) / n as f64 };
    let times: Vec<f64> = (0..states_mat.len())
        .map(|i| if i == n { t_end } else { s + dt * i as f64 })
        .collect();
    let states = states_mat
        .into_iter()
        .map(|m| DVector::from_column_slice(m.as_slice()))
        .collect();
    Ok(Trajectory { times, states })
}

/// Matrix-valued adjoint sweep `X(s) = Phi(t_end, s)^T W` on grid nodes
/// (ascending in `s`), from the backward equation `X' = -M(s)^T X`.
pub(crate) fn adjoint_matrix_sweep(
    system: &PeriodicSystem,
    t_end: f64,
    terminal: &DMatrix<f64>,
) -> Vec<DMatrix<f64>> {
    let h_nominal = system.grid.step();
    let n = step_count(t_end, h_nominal);
    let mut x = terminal.clone();
    let mut rev = vec![x.clone()];
    if n > 0 {
        let dt = t_end / n as f64;
        for i in 0..n {
            let a = t_end - dt * i as f64;
            let mid = a - 0.5 * dt;
            let b = if i + 1 == n { 0.0 } else { a - dt };
            let m1 = system.drift(a, Side::Left).transpose();
            let m2 = system.drift(mid, Side::Right).transpose();
            let m3 = system.drift(b, Side::Right).transpose();
            let k1 = &m1 * &x;
            let k2 = &m2 * (&x + &k1 * (0.5 * dt));
            let k3 = &m2 * (&x + &k2 * (0.5 * dt));
            let k4 = &m3 * (&x + &k3 * dt);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            rev.push(x.clone());
        }
    }
    rev.reverse();
    rev
}

/// Recorded transition sweep: `Phi(t_i, s)` at every grid node of `[s, t]`.
pub fn transition_samples(
    system: &PeriodicSystem,
    s: f64,
    t: f64,
) -> Result<(Vec<f64>, Vec<DMatrix<f64>>)> {
    if t < s {
        return Err(Error::BackwardSpan { s, t });
    }
    let mut rec = Vec::new();
    rk4_sweep::<fn(f64, Side) -> DMatrix<f64>>(
        system,
        s,
        t,
        DMatrix::identity(system.n_x, system.n_x),
        None,
        Some(&mut rec),
    );
    let n = step_count(t - s, system.grid.step());
    let dt = if n == 0 { 0.0 } else { (t - s) / n as f64 };
    let times = (0..rec.len())
        .map(|i| if i == n { t } else { s + dt * i as f64 })
        .collect();
    Ok((times, rec))
}

/// Adjoint trajectory `psi(s) = Phi(t_end, s)^T xi`, solved backward from
/// `psi(t_end) = xi` via `psi'(s) = -M(s)^T psi(s)`.
pub fn adjoint_propagate(
    system: &PeriodicSystem,
    t_end: f64,
    xi: &DVector<f64>,
) -> Result<Trajectory> {
    if t_end < 0.0 {
        return Err(Error::BackwardSpan { s: 0.0, t: t_end });
    }
    if xi.len() != system.n_x {
        return Err(Error::DimensionMismatch(format!(
            "terminal data has {} entries, state dimension is {}",
            xi.len(),
            system.n_x
        )));
    }
    let h_nominal = system.grid.step();
    let n = step_count(t_end, h_nominal);
    let mut psi = xi.clone();
    let mut rev_states = vec![psi.clone()];
    if n > 0 {
        let dt = t_end / n as f64;
        // integrate in sigma = t_end - s; psi' = M(t_end - sigma)^T psi
        for i in 0..n {
            let a = t_end - dt * i as f64;
            let mid = a - 0.5 * dt;
            let b = if i + 1 == n { 0.0 } else { a - dt };
            // Moving left in time: the final stage sits at the left end of the
            // step, where the right limit is the one-sided value to use.
            let m1 = system.drift(a, Side::Left).transpose();
            let m2 = system.drift(mid, Side::Right).transpose();
            let m3 = system.drift(b, Side::Right).transpose();
            let k1 = &m1 * &psi;
            let k2 = &m2 * (&psi + &k1 * (0.5 * dt));
            let k3 = &m2 * (&psi + &k2 * (0.5 * dt));
            let k4 = &m3 * (&psi + &k3 * dt);
            psi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            rev_states.push(psi.clone());
        }
    }
    rev_states.reverse();
    let dt = if n == 0 { 0.0 } else { t_end / n as f64 };
    let times: Vec<f64> = (0..rev_states.len())
        .map(|i| {
            if i == n {
                t_end
            } else {
                dt * i as f64
            }
        })
        .collect();
    Ok(Trajectory {
        times,
        states: rev_states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::MatrixCurve;
    use crate::system::build_system;
    use nalgebra::dmatrix;

    fn scalar(a: f64, period: f64, m: usize) -> PeriodicSystem {
        build_system(
            MatrixCurve::Constant(dmatrix![a]),
            MatrixCurve::Constant(dmatrix![1.0]),
            period,
            m,
            "scalar",
        )
        .unwrap()
    }

    #[test]
    fn identity_at_equal_times() {
        let sys = scalar(1.3, 1.0, 64);
        let y0 = dmatrix![2.5];
        let y = propagate(&sys, 0.4, 0.4, &y0).unwrap();
        assert_eq!(y, y0);
    }

    #[test]
    fn rejects_backward_span() {
        let sys = scalar(0.0, 1.0, 64);
        assert!(matches!(
            propagate(&sys, 1.0, 0.5, &dmatrix![1.0]),
            Err(Error::BackwardSpan { .. })
        ));
    }

    #[test]
    fn scalar_exponential() {
        let sys = scalar(1.0, 1.0, 256);
        let y = propagate(&sys, 0.0, 1.0, &dmatrix![1.0]).unwrap();
        assert!((y[(0, 0)] - 1.0f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn stable_scalar_monodromy() {
        let sys = scalar(-1.0, 1.0, 256);
        let m = monodromy(&sys, 0.0).unwrap();
        assert!((m.matrix[(0, 0)] - (-1.0f64).exp()).abs() < 1e-8);
        assert!(m.convergence_witness < 1e-9);
    }

    #[test]
    fn autonomy_shifts_base_time() {
        let drift = dmatrix![0.1, 1.0; -1.0, -0.2];
        let sys = build_system(
            MatrixCurve::Constant(drift),
            MatrixCurve::Constant(DMatrix::identity(2, 2)),
            1.0,
            256,
            "autonomous",
        )
        .unwrap();
        let p0 = monodromy(&sys, 0.0).unwrap().matrix;
        for &t0 in &[1.0 / 3.0, 0.5] {
            let pt = monodromy(&sys, t0).unwrap().matrix;
            assert!((&p0 - &pt).norm() < 1e-8, "t0 = {t0}");
        }
    }

    #[test]
    fn switching_open_loop_monodromy_is_one() {
        let sys = build_system(
            MatrixCurve::Constant(dmatrix![0.0]),
            MatrixCurve::Switching {
                breaks: vec![0.0, 1.0],
                values: vec![dmatrix![1.0], dmatrix![-1.0]],
            },
            2.0,
            256,
            "switching",
        )
        .unwrap();
        let m = monodromy(&sys, 0.0).unwrap();
        assert_eq!(m.matrix[(0, 0)], 1.0);
    }

    #[test]
    fn mild_zero_control_matches_propagator() {
        let sys = scalar(0.7, 1.0, 128);
        let u = SampledControl::zero(0.0, sys.grid.step(), 129, 1);
        let h = DVector::from_element(1, 2.0);
        let traj = mild_solution(&sys, &ControlSubspace::Full, 0.0, &h, &u, 1.0).unwrap();
        let direct = propagate(&sys, 0.0, 1.0, &dmatrix![2.0]).unwrap();
        assert!((traj.last()[0] - direct[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn mild_constant_control_quadrature() {
        // m = 0, d = 1, u = 1: y(t) = h + t
        let sys = scalar(0.0, 1.0, 256);
        let nodes = 257;
        let u = SampledControl {
            start: 0.0,
            step: sys.grid.step(),
            values: vec![DVector::from_element(1, 1.0); nodes],
        };
        let h = DVector::from_element(1, 0.3);
        let traj = mild_solution(&sys, &ControlSubspace::Full, 0.0, &h, &u, 1.0).unwrap();
        assert!((traj.last()[0] - 1.3).abs() < 1e-9);
    }

    #[test]
    fn mild_rejects_uncovering_control() {
        let sys = scalar(0.0, 1.0, 64);
        let u = SampledControl::zero(0.0, sys.grid.step(), 10, 1);
        let h = DVector::zeros(1);
        assert!(matches!(
            mild_solution(&sys, &ControlSubspace::Full, 0.0, &h, &u, 1.0),
            Err(Error::ControlCoverage { .. })
        ));
    }

    #[test]
    fn adjoint_zero_horizon() {
        let sys = scalar(0.4, 1.0, 64);
        let xi = DVector::from_element(1, 3.0);
        let traj = adjoint_propagate(&sys, 0.0, &xi).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.states[0][0], 3.0);
    }

    #[test]
    fn adjoint_matches_transposed_forward() {
        let drift = dmatrix![0.1, 0.8, -0.3; -0.5, 0.0, 0.2; 0.4, -0.1, -0.6];
        let sys = build_system(
            MatrixCurve::Cosine {
                base: drift.clone(),
                modulation: drift.transpose() * 0.5,
                cycles: 1,
            },
            MatrixCurve::Constant(DMatrix::identity(3, 3)),
            1.0,
            256,
            "random3",
        )
        .unwrap();
        let t_end = 1.5;
        let xi = DVector::from_column_slice(&[0.3, -1.2, 0.7]);
        let traj = adjoint_propagate(&sys, t_end, &xi).unwrap();
        let phi = transition(&sys, 0.0, t_end).unwrap();
        let expected = phi.transpose() * &xi;
        assert!((traj.states[0].clone() - expected).norm() < 1e-8);
    }

    #[test]
    fn adjoint_symmetric_drift_reduces_to_forward() {
        let m = dmatrix![-0.4, 0.2; 0.2, -0.9];
        let sys = build_system(
            MatrixCurve::Constant(m.clone()),
            MatrixCurve::Constant(DMatrix::identity(2, 2)),
            1.0,
            256,
            "symmetric",
        )
        .unwrap();
        let xi = DVector::from_column_slice(&[1.0, -1.0]);
        let traj = adjoint_propagate(&sys, 1.0, &xi).unwrap();
        let fwd = transition(&sys, 0.0, 1.0).unwrap() * &xi;
        assert!((traj.states[0].clone() - fwd).norm() < 1e-9);
    }
}
