use nalgebra::{Complex, DMatrix, DVector};

use crate::attainability::{certify_all, StabilizabilityCertificate, DEFAULT_RANK_TOL};
use crate::coeffs::{MatrixCurve, Side};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::propagator::{
    adjoint_matrix_sweep, mild_solution, monodromy, transition, transition_samples,
};
use crate::spectral::{split, stable_envelope_constant, SpectralSplit};
use crate::system::{ControlSubspace, PeriodicSystem, SampledControl};

/// Hard cap on the multi-period synthesis horizon.
pub const HORIZON_CAP: usize = 4096;

/// Feedback gain values over one law period.
#[derive(Debug, Clone)]
pub enum GainValues {
    /// Values at uniform nodes `0, h, .., period`, piecewise-linear between.
    Sampled(Vec<DMatrix<f64>>),
    /// Piecewise constant on `[breaks[i], breaks[i+1])`.
    PiecewiseConstant {
        breaks: Vec<f64>,
        values: Vec<DMatrix<f64>>,
    },
}

/// A periodic gain curve (matrix-valued, extended periodically).
#[derive(Debug, Clone)]
pub struct GainCurve {
    pub period: f64,
    pub values: GainValues,
}

impl GainCurve {
    pub fn eval(&self, t: f64, side: Side) -> DMatrix<f64> {
        match &self.values {
            GainValues::Sampled(values) => {
                let m = values.len() - 1;
                let mut r = t - self.period * (t / self.period).floor();
                match side {
                    Side::Right => {
                        if r >= self.period || self.period - r <= 1e-12 * self.period {
                            r = 0.0;
                        }
                    }
                    Side::Left => {
                        if t > 0.0 && r <= 1e-12 * self.period {
                            r = self.period;
                        }
                    }
                }
                let h = self.period / m as f64;
                let x = (r / h).clamp(0.0, m as f64);
                let i = (x.floor() as usize).min(m - 1);
                let w = x - i as f64;
                &values[i] * (1.0 - w) + &values[i + 1] * w
            }
            GainValues::PiecewiseConstant { breaks, values } => {
                let tol = 1e-9 * self.period;
                let mut r = t - self.period * (t / self.period).floor();
                match side {
                    Side::Right => {
                        if r >= self.period || self.period - r <= 1e-12 * self.period {
                            r = 0.0;
                        }
                    }
                    Side::Left => {
                        if t > 0.0 && r <= 1e-12 * self.period {
                            r = self.period;
                        }
                    }
                }
                let mut idx = 0;
                for (j, &b) in breaks.iter().enumerate() {
                    let inside = match side {
                        Side::Right => r >= b - tol,
                        Side::Left => r > b + tol,
                    };
                    if inside {
                        idx = j;
                    }
                }
                values[idx].clone()
            }
        }
    }

    pub fn jump_points(&self) -> Vec<f64> {
        match &self.values {
            GainValues::Sampled(_) => vec![0.0],
            GainValues::PiecewiseConstant { breaks, .. } => breaks.clone(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match &self.values {
            GainValues::Sampled(v) => v[0].shape(),
            GainValues::PiecewiseConstant { values, .. } => values[0].shape(),
        }
    }
}

/// How the feedback law was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    DeadbeatLq,
    PeriodicRiccati,
    External,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::DeadbeatLq => "deadbeat-lq",
            Provenance::PeriodicRiccati => "periodic-riccati",
            Provenance::External => "external",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "deadbeat-lq" => Some(Provenance::DeadbeatLq),
            "periodic-riccati" => Some(Provenance::PeriodicRiccati),
            "external" => Some(Provenance::External),
            _ => None,
        }
    }
}

/// A periodic feedback law `u(t) = Z_b K(t) y(t)` with `K` sampled in the
/// coordinates of the control subspace basis (`m0 x n_x` per node).
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    pub period: f64,
    /// Orthonormal basis of `Z` (`n_u x m0`).
    pub z_basis: DMatrix<f64>,
    pub gains: GainCurve,
    pub provenance: Provenance,
    pub epsilon: Option<f64>,
    pub horizon_periods: Option<usize>,
}

impl FeedbackLaw {
    /// Zero law over one period.
    pub fn zero(system: &PeriodicSystem, z: &ControlSubspace) -> Self {
        let m0 = z.dim(system.n_u);
        let nodes = system.grid.samples_per_period() + 1;
        FeedbackLaw {
            period: system.period,
            z_basis: z.basis_matrix(system.n_u),
            gains: GainCurve {
                period: system.period,
                values: GainValues::Sampled(vec![DMatrix::zeros(m0, system.n_x); nodes]),
            },
            provenance: Provenance::PeriodicRiccati,
            epsilon: None,
            horizon_periods: None,
        }
    }

    /// Gain mapped to input-space coordinates: `Z_b K(t)` (`n_u x n_x`).
    pub fn gain_curve_u(&self) -> GainCurve {
        let lift = |v: &DMatrix<f64>| &self.z_basis * v;
        let values = match &self.gains.values {
            GainValues::Sampled(v) => GainValues::Sampled(v.iter().map(lift).collect()),
            GainValues::PiecewiseConstant { breaks, values } => GainValues::PiecewiseConstant {
                breaks: breaks.clone(),
                values: values.iter().map(lift).collect(),
            },
        };
        GainCurve {
            period: self.period,
            values,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match &self.gains.values {
            GainValues::Sampled(v) => v.iter().all(|m| m.iter().all(|x| x.is_finite())),
            GainValues::PiecewiseConstant { values, .. } => {
                values.iter().all(|m| m.iter().all(|x| x.is_finite()))
            }
        };
        if !finite {
            return Err(Error::NonFiniteCoefficient { t: f64::NAN });
        }
        if self.provenance == Provenance::PeriodicRiccati {
            let k0 = self.gains.eval(0.0, Side::Right);
            let kt = self.gains.eval(self.period, Side::Left);
            let gap = (&k0 - &kt).norm();
            if gap > 1e-8 * k0.norm().max(1.0) {
                return Err(Error::ReorderFailure(format!(
                    "periodic gain endpoint mismatch {gap:.3e}"
                )));
            }
        }
        Ok(())
    }
}

/// Closed-loop system `y' = (M(t) + D(t) Z_b K(t)) y` over the law's period.
pub fn closed_loop(system: &PeriodicSystem, law: &FeedbackLaw) -> Result<PeriodicSystem> {
    let ratio = law.period / system.period;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-9 * ratio.max(1.0) || k < 1.0 {
        return Err(Error::PeriodMismatch {
            law_period: law.period,
            system_period: system.period,
        });
    }
    let k = k as usize;
    law.validate()?;
    let (gain_rows, gain_cols) = law.gains.shape();
    if law.z_basis.nrows() != system.n_u
        || law.z_basis.ncols() != gain_rows
        || gain_cols != system.n_x
    {
        return Err(Error::DimensionMismatch(format!(
            "law gain is ({} x {}) over a {}-dim control basis; system has n_x = {}, n_u = {}",
            gain_rows,
            gain_cols,
            law.z_basis.ncols(),
            system.n_x,
            system.n_u
        )));
    }
    let drift = MatrixCurve::ClosedLoop {
        drift: Box::new(system.drift_curve().clone()),
        input: Box::new(system.input_curve().clone()),
        coeff_period: system.period,
        gain: Box::new(law.gain_curve_u()),
    };
    let grid = TimeGrid::new(law.period, system.grid.samples_per_period() * k)?;
    let mut cl = system.with_drift(drift, format!("{} (closed loop)", system.label));
    cl.period = law.period;
    cl.grid = grid;
    Ok(cl)
}

/// Deadbeat-on-unstable construction: for each `h1 in H1`, the minimum-norm
/// control annihilating the unstable projection at the `n0 T` horizon.
#[derive(Debug, Clone)]
pub struct DeadbeatMap {
    pub horizon: f64,
    steps: usize,
    /// `B_hat(s_i) = U1^T P Phi(n0 T, s_i) D(s_i) Z_b` at grid nodes.
    b_hat: Vec<DMatrix<f64>>,
    /// Inverse of the reachability Gramian `int B_hat B_hat^T ds`.
    w_inv: DMatrix<f64>,
    /// `A_hat^{n0}`, the matrix of `P1^{n0}` in the `H1` basis.
    a_pow: DMatrix<f64>,
    z_basis: DMatrix<f64>,
    system: PeriodicSystem,
    z: ControlSubspace,
    split: SpectralSplit,
}

/// Build the deadbeat map. Requires certificate (b) to hold.
pub fn deadbeat_unstable(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    split: &SpectralSplit,
    rank_tol: f64,
) -> Result<DeadbeatMap> {
    let cert = crate::attainability::certify_b(system, z, split, rank_tol)?;
    if !cert.verdict {
        return Err(Error::NotStabilizable {
            detail: format!("certificate (b) false (margin {:.3e})", cert.margin),
        });
    }
    let n0 = split.n0;
    let horizon = n0 as f64 * system.period;
    let steps = system.grid.samples_per_period() * n0;
    let z_basis = z.basis_matrix(system.n_u);
    let mut b_hat = Vec::new();
    let mut w = DMatrix::zeros(n0, n0);
    if n0 > 0 {
        let terminal = split.p.transpose() * &split.basis_h1; // Phi^T P^T U1 sweeps
        let x = adjoint_matrix_sweep(system, horizon, &terminal);
        let h = horizon / steps as f64;
        for (i, xi) in x.iter().enumerate() {
            let t = if i == steps { horizon } else { h * i as f64 };
            let side = if i == steps { Side::Left } else { Side::Right };
            // B_hat(s)^T = Z_b^T D(s)^T Phi(n0T,s)^T P^T U1
            let bt = z_basis.transpose() * system.input(t, side).transpose() * xi;
            b_hat.push(bt.transpose());
        }
        // Exact L2 Gram of the piecewise-linear interpolant of B_hat.
        for i in 0..steps {
            let (b0, b1) = (&b_hat[i], &b_hat[i + 1]);
            w += (b0 * b0.transpose() + b1 * b1.transpose()) * (h / 3.0)
                + (b0 * b1.transpose() + b1 * b0.transpose()) * (h / 6.0);
        }
    }
    let w_inv = if n0 > 0 {
        let chol = w.clone().cholesky().ok_or(Error::DeadbeatGramianSingular)?;
        chol.inverse()
    } else {
        DMatrix::zeros(0, 0)
    };
    let a_hat = split.basis_h1.transpose() * &split.poincare * &split.basis_h1;
    let mut a_pow = DMatrix::identity(n0, n0);
    for _ in 0..n0 {
        a_pow = &a_pow * &a_hat;
    }
    Ok(DeadbeatMap {
        horizon,
        steps,
        b_hat,
        w_inv,
        a_pow,
        z_basis,
        system: system.clone(),
        z: z.clone(),
        split: split.clone(),
    })
}

impl DeadbeatMap {
    /// The control for initial state `h1` and the resulting terminal state
    /// `y(n0 T; 0, h1, u)`. Two discrete-consistency refinement passes keep
    /// the simulated unstable projection below roundoff.
    pub fn control_and_final(&self, h1: &DVector<f64>) -> Result<(SampledControl, DVector<f64>)> {
        let n0 = self.split.n0;
        let h = if self.steps > 0 {
            self.horizon / self.steps as f64
        } else {
            self.system.grid.step()
        };
        let mut u = SampledControl::zero(0.0, h, self.steps + 1, self.system.n_u);
        if n0 == 0 {
            return Ok((u, h1.clone()));
        }
        let mut target = &self.a_pow * (self.split.basis_h1.transpose() * h1);
        let mut y_end = DVector::zeros(self.system.n_x);
        for _pass in 0..2 {
            let correction = &self.w_inv * &target;
            for (i, b) in self.b_hat.iter().enumerate() {
                let beta = -(b.transpose() * &correction);
                u.values[i] += &self.z_basis * beta;
            }
            let traj = mild_solution(&self.system, &self.z, 0.0, h1, &u, self.horizon)?;
            y_end = traj.last().clone();
            target = self.split.basis_h1.transpose() * (&self.split.p * &y_end);
        }
        Ok((u, y_end))
    }

    pub fn control_for(&self, h1: &DVector<f64>) -> Result<SampledControl> {
        Ok(self.control_and_final(h1)?.0)
    }

    /// `||P y(n0 T; 0, h1, u)||` for the constructed control.
    pub fn residual(&self, h1: &DVector<f64>) -> Result<f64> {
        let (_, y_end) = self.control_and_final(h1)?;
        Ok((&self.split.p * y_end).norm())
    }
}

/// Constants of the multi-period feasibility stage.
#[derive(Debug, Clone, Copy)]
pub struct HorizonParams {
    /// `N0`: number of periods of the finite-horizon law.
    pub n_periods: usize,
    /// `eps0`: admissible control-cost weight bound.
    pub epsilon0: f64,
    /// `delta0 = (1 + delta_bar) / 2`.
    pub delta0: f64,
    pub c_rho0: f64,
    pub c_deadbeat: f64,
    pub l_norm: f64,
}

/// Estimate the horizon `N0` and control-weight bound `eps0` that make the
/// multi-period stage contract, from the constructed deadbeat controls.
pub fn horizon_and_epsilon(
    system: &PeriodicSystem,
    split: &SpectralSplit,
    deadbeat: &DeadbeatMap,
) -> Result<HorizonParams> {
    let delta_bar = split.delta_bar;
    let delta0 = 0.5 * (1.0 + delta_bar);
    let n0 = split.n0;
    let p_norm = linalg::spectral_norm(&split.p);
    if n0 == 0 {
        return Ok(HorizonParams {
            n_periods: 0,
            epsilon0: delta0 - delta0 * delta0,
            delta0,
            c_rho0: 1.0,
            c_deadbeat: 0.0,
            l_norm: 0.0,
        });
    }
    let c_rho0 = stable_envelope_constant(split, delta0, 512);
    // Deadbeat responses over the H1 basis.
    let mut y_cols = DMatrix::zeros(system.n_x, n0);
    let mut controls = Vec::with_capacity(n0);
    for j in 0..n0 {
        let eta = split.basis_h1.column(j).into_owned();
        let (u, y_end) = deadbeat.control_and_final(&eta)?;
        y_cols.set_column(j, &y_end);
        controls.push(u);
    }
    let c_deadbeat = linalg::spectral_norm(&y_cols);
    // ||L||: operator norm of h1 -> u^{h1} through the control Gram matrix.
    let mut gram = DMatrix::zeros(n0, n0);
    for j in 0..n0 {
        for k in j..n0 {
            let v = controls[j].l2_inner(&controls[k]);
            gram[(j, k)] = v;
            gram[(k, j)] = v;
        }
    }
    let (_, l_sq) = linalg::symmetric_eig_range(&gram);
    let l_norm = l_sq.max(0.0).sqrt();

    let i_minus_p = DMatrix::identity(split.n_x(), split.n_x()) - &split.p;
    let numerator = c_rho0.ln()
        + (c_deadbeat * delta0.powi(-(n0 as i32)) * p_norm + linalg::spectral_norm(&i_minus_p))
            .ln();
    let ratio = numerator / (1.0 / delta0).ln();
    let n_periods = (ratio.ceil().max(0.0) as usize + 2).max(n0).max(1);
    if n_periods > HORIZON_CAP {
        return Err(Error::HorizonCap {
            n0: n_periods,
            cap: HORIZON_CAP,
        });
    }
    let epsilon0 = (delta0 - delta0 * delta0) / (l_norm * p_norm + 1.0).powi(2);
    Ok(HorizonParams {
        n_periods,
        epsilon0,
        delta0,
        c_rho0,
        c_deadbeat,
        l_norm,
    })
}

/// Running-cost weights of a Riccati solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateWeight {
    Zero,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlWeight {
    Epsilon(f64),
    Identity,
}

/// Backward Riccati solution sampled on grid nodes.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub times: Vec<f64>,
    pub q: Vec<DMatrix<f64>>,
    pub terminal: DMatrix<f64>,
    pub state_weight: StateWeight,
    pub control_weight: ControlWeight,
    /// `||Phi_closed(span, 0)||` of the optimal closed loop over the sweep
    /// horizon, recovered from the Hamiltonian pair.
    pub span_transition_norm: f64,
}

impl RiccatiSolution {
    pub fn value_at_zero(&self) -> &DMatrix<f64> {
        &self.q[0]
    }

    pub fn validate(&self) -> Result<()> {
        for q in &self.q {
            let sym = (q - q.transpose()).norm();
            if sym > 1e-9 * q.norm().max(1.0) {
                return Err(Error::ReorderFailure(format!(
                    "Riccati iterate asymmetric ({sym:.3e})"
                )));
            }
            let (lo, hi) = linalg::symmetric_eig_range(q);
            if lo < -1e-9 * hi.max(1.0) {
                return Err(Error::ReorderFailure(format!(
                    "Riccati iterate indefinite (min eig {lo:.3e})"
                )));
            }
        }
        Ok(())
    }
}

/// One backward Riccati sweep over `[0, span]`:
/// `Q' = -M^T Q - Q M - S + Q R_inv(t) Q`, `Q(span) = terminal`,
/// where `R_inv(t) = (1/eps) D Pi_Z D^T` and `S` is the running state cost.
///
/// Integrated through the equivalent linear Hamiltonian flow
/// `[X; Y]' = [[M, -R_inv], [-S, -M^T]] [X; Y]` with `Q = Y X^{-1}` and a
/// QR renormalization of the stacked pair at every node: the quadratic form
/// of the Riccati ODE is stiff for small `eps`, the linear flow is not (its
/// local rates stay at the scale of `M` itself).
fn riccati_sweep(
    system: &PeriodicSystem,
    pi: &DMatrix<f64>,
    span: f64,
    terminal: &DMatrix<f64>,
    state_cost: f64,
    inv_eps: f64,
) -> Result<(Vec<DMatrix<f64>>, bool, f64)> {
    let n = system.n_x;
    let steps = ((span / system.grid.step()).round() as usize).max(1);
    let h = span / steps as f64;
    let hamiltonian = |t: f64, side: Side| -> DMatrix<f64> {
        let m = system.drift(t, side);
        let d = system.input(t, side);
        let g = (&d * pi * d.transpose()) * inv_eps;
        let mut ham = DMatrix::zeros(2 * n, 2 * n);
        ham.view_mut((0, 0), (n, n)).copy_from(&m);
        ham.view_mut((0, n), (n, n)).copy_from(&(-g));
        for i in 0..n {
            ham[(n + i, i)] = -state_cost;
        }
        ham.view_mut((n, n), (n, n)).copy_from(&(-m.transpose()));
        ham
    };
    let recover_q = |z: &DMatrix<f64>| -> Option<DMatrix<f64>> {
        let x = z.view((0, 0), (n, n)).into_owned();
        let y = z.view((n, 0), (n, n)).into_owned();
        let x_inv = x.lu().try_inverse()?;
        let q = y * x_inv;
        Some((&q + &q.transpose()) * 0.5)
    };
    let x_of = |z: &DMatrix<f64>| -> DMatrix<f64> { z.view((0, 0), (n, n)).into_owned() };
    let mut z = DMatrix::zeros(2 * n, n);
    z.view_mut((0, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    z.view_mut((n, 0), (n, n)).copy_from(terminal);
    z = z.qr().q();
    // Phi_cl(span, t) of the optimal closed loop accumulates through the
    // sweep identity Phi_cl(t_i, t_{i+1}) = X(t_i) X(t_{i+1})^{-1}; any
    // common right normalization of the pair cancels in the product.
    let mut phi_cl = DMatrix::identity(n, n);
    let mut rev = Vec::with_capacity(steps + 1);
    match recover_q(&z) {
        Some(q) => rev.push(q),
        None => return Ok((Vec::new(), true, f64::INFINITY)),
    }
    for i in 0..steps {
        let a = span - h * i as f64;
        let mid = a - 0.5 * h;
        let b = a - h;
        let m1 = hamiltonian(a, Side::Left);
        let m2 = hamiltonian(mid, Side::Right);
        let m3 = hamiltonian(b, Side::Right);
        // integrating in sigma = span - t: dZ/dsigma = -H Z
        let k1 = -(&m1 * &z);
        let k2 = -(&m2 * (&z + &k1 * (0.5 * h)));
        let k3 = -(&m2 * (&z + &k2 * (0.5 * h)));
        let k4 = -(&m3 * (&z + &k3 * h));
        let z_pre = &z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !z_pre.iter().all(|v| v.is_finite()) {
            return Ok((Vec::new(), true, f64::INFINITY));
        }
        let x_next_inv = match x_of(&z_pre).lu().try_inverse() {
            Some(inv) => inv,
            None => return Ok((Vec::new(), true, f64::INFINITY)),
        };
        phi_cl = &phi_cl * x_of(&z) * x_next_inv;
        // Q = Y X^{-1} is invariant under right multiplication of the pair
        z = z_pre.qr().q();
        match recover_q(&z) {
            Some(q) => {
                let magnitude = q.amax();
                if !magnitude.is_finite() || magnitude > 1e14 {
                    return Ok((Vec::new(), true, f64::INFINITY));
                }
                rev.push(q);
            }
            None => return Ok((Vec::new(), true, f64::INFINITY)),
        }
    }
    rev.reverse();
    let span_norm = linalg::spectral_norm(&phi_cl);
    Ok((rev, false, span_norm))
}

/// Gains `K(t_i) = -(1/eps) Z_b^T D(t_i)^T Q(t_i)` in `Z` coordinates.
///
/// Every node takes the right-sided coefficient limit; at `t = span` the
/// periodic fold lands on `D(0+)`, so a converged periodic `Q` yields
/// `K(period) = K(0)` even when `D` jumps at the period wrap.
fn gains_from_q(
    system: &PeriodicSystem,
    z_basis: &DMatrix<f64>,
    q: &[DMatrix<f64>],
    span: f64,
    inv_eps: f64,
) -> Vec<DMatrix<f64>> {
    let steps = q.len() - 1;
    let h = span / steps as f64;
    q.iter()
        .enumerate()
        .map(|(i, qi)| {
            let t = if i == steps { span } else { h * i as f64 };
            -(z_basis.transpose() * system.input(t, Side::Right).transpose() * qi) * inv_eps
        })
        .collect()
}

/// Finite-horizon Riccati stage: terminal cost `||y(NT)||^2`, zero running
/// state cost, control cost `eps`. Returns the `NT`-periodic feasibility law.
pub fn finite_horizon_riccati(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    epsilon: f64,
    n_periods: usize,
) -> Result<(RiccatiSolution, FeedbackLaw)> {
    assert!(epsilon > 0.0, "control cost must be positive");
    assert!(n_periods >= 1, "horizon must cover at least one period");
    z.validate(system.n_u)?;
    let n = system.n_x;
    let pi = z.projector(system.n_u);
    let span = n_periods as f64 * system.period;
    let terminal = DMatrix::identity(n, n);
    let (q, blew_up, span_norm) = riccati_sweep(system, &pi, span, &terminal, 0.0, 1.0 / epsilon)?;
    if blew_up {
        return Err(Error::RiccatiBlowup { magnitude: 1e14 });
    }
    let steps = q.len() - 1;
    let h = span / steps as f64;
    let times = (0..=steps)
        .map(|i| if i == steps { span } else { h * i as f64 })
        .collect();
    let z_basis = z.basis_matrix(system.n_u);
    let gains = gains_from_q(system, &z_basis, &q, span, 1.0 / epsilon);
    let law = FeedbackLaw {
        period: span,
        z_basis,
        gains: GainCurve {
            period: span,
            values: GainValues::Sampled(gains),
        },
        provenance: Provenance::DeadbeatLq,
        epsilon: Some(epsilon),
        horizon_periods: Some(n_periods),
    };
    let sol = RiccatiSolution {
        times,
        q,
        terminal,
        state_weight: StateWeight::Zero,
        control_weight: ControlWeight::Epsilon(epsilon),
        span_transition_norm: span_norm,
    };
    Ok((sol, law))
}

/// One backward value sweep over a single period with running costs
/// `||y||^2 + ||u||^2` and the given terminal weight: the map iterated by
/// `periodic_riccati`, exposed for cross-checks.
pub fn periodic_value_sweep(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    terminal: &DMatrix<f64>,
) -> Result<RiccatiSolution> {
    z.validate(system.n_u)?;
    let pi = z.projector(system.n_u);
    let span = system.period;
    let (q, blew_up, span_norm) = riccati_sweep(system, &pi, span, terminal, 1.0, 1.0)?;
    if blew_up {
        return Err(Error::RiccatiBlowup { magnitude: 1e14 });
    }
    let steps = q.len() - 1;
    let h = span / steps as f64;
    let times = (0..=steps)
        .map(|i| if i == steps { span } else { h * i as f64 })
        .collect();
    Ok(RiccatiSolution {
        times,
        q,
        terminal: terminal.clone(),
        state_weight: StateWeight::Identity,
        control_weight: ControlWeight::Identity,
        span_transition_norm: span_norm,
    })
}

/// Result of the one-period value iteration.
#[derive(Debug, Clone)]
pub struct PeriodicRiccati {
    pub solution: RiccatiSolution,
    pub law: FeedbackLaw,
    pub iterations: usize,
    pub residual: f64,
}

/// T-periodic Riccati solution by value iteration on the one-period map
/// `S -> Q(0)` with running costs `||y||^2 + ||u||^2` and terminal cost `S`.
pub fn periodic_riccati(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    s0: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<PeriodicRiccati> {
    z.validate(system.n_u)?;
    let n = system.n_x;
    assert_eq!(s0.nrows(), n, "seed dimension mismatch");
    let pi = z.projector(system.n_u);
    let span = system.period;
    let mut s = (s0 + s0.transpose()) * 0.5;
    let mut trace: Vec<f64> = Vec::new();
    for iter in 1..=max_iters {
        let (q, blew_up, span_norm) = riccati_sweep(system, &pi, span, &s, 1.0, 1.0)?;
        if blew_up {
            return Err(Error::RiccatiDivergence);
        }
        let s_next = q[0].clone();
        let residual = (&s_next - &s).norm();
        trace.push(residual);
        if trace.len() > 8 {
            trace.remove(0);
        }
        if s_next.norm() > 1e12 {
            return Err(Error::RiccatiDivergence);
        }
        if residual <= tol * (1.0 + s.norm()) {
            let steps = q.len() - 1;
            let h = span / steps as f64;
            let times = (0..=steps)
                .map(|i| if i == steps { span } else { h * i as f64 })
                .collect();
            let z_basis = z.basis_matrix(system.n_u);
            let gains = gains_from_q(system, &z_basis, &q, span, 1.0);
            let law = FeedbackLaw {
                period: span,
                z_basis,
                gains: GainCurve {
                    period: span,
                    values: GainValues::Sampled(gains),
                },
                provenance: Provenance::PeriodicRiccati,
                epsilon: None,
                horizon_periods: None,
            };
            let solution = RiccatiSolution {
                times,
                q,
                terminal: s_next,
                state_weight: StateWeight::Identity,
                control_weight: ControlWeight::Identity,
                span_transition_norm: span_norm,
            };
            return Ok(PeriodicRiccati {
                solution,
                law,
                iterations: iter,
                residual,
            });
        }
        s = s_next;
    }
    Err(Error::RiccatiNoConvergence {
        iterations: max_iters,
        trace,
    })
}

/// Closed-loop stability report.
#[derive(Debug, Clone)]
pub struct ClosedLoopReport {
    pub spectrum: Vec<Complex<f64>>,
    pub spectral_radius: f64,
    /// Envelope constants of `||y(t)|| <= M e^{-delta t} ||h||` fitted from
    /// the canonical initial states over six law periods.
    pub decay_m: f64,
    pub decay_delta: f64,
    pub stable: bool,
    pub law_period: f64,
}

/// Verify a law by closed-loop Floquet analysis and a decay fit.
pub fn verify_law(system: &PeriodicSystem, law: &FeedbackLaw) -> Result<ClosedLoopReport> {
    let cl = closed_loop(system, law)?;
    let mono = transition(&cl, 0.0, cl.period)?;
    let spectrum: Vec<Complex<f64>> = mono.complex_eigenvalues().iter().cloned().collect();
    let spectral_radius = spectrum.iter().map(|z| z.norm()).fold(0.0, f64::max);

    let horizon = 6.0 * cl.period;
    let (times, samples) = transition_samples(&cl, 0.0, horizon)?;
    // Frobenius envelope of the transition matrix: a valid bound for every
    // unit initial state.
    let norms: Vec<f64> = samples.iter().map(|m| m.norm().max(1e-300)).collect();
    // Slope fitted on the decay regime [2 P, 6 P].
    let start_idx = times
        .iter()
        .position(|&t| t >= 2.0 * cl.period - 1e-12)
        .unwrap_or(0);
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut count = 0.0;
    for i in start_idx..times.len() {
        let x = times[i];
        let y = norms[i].ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        count += 1.0;
    }
    let slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    let delta = -slope;
    // Envelope constant making the bound hold at every sample.
    let m_env = times
        .iter()
        .zip(&norms)
        .map(|(&t, &r)| r * (delta * t).exp())
        .fold(0.0, f64::max);
    let stable = spectral_radius < 1.0 - 1e-9;
    Ok(ClosedLoopReport {
        spectrum,
        spectral_radius,
        decay_m: m_env,
        decay_delta: delta,
        stable,
        law_period: law.period,
    })
}

/// Options for the synthesis pipeline.
#[derive(Debug, Clone, Copy)]
pub struct SynthesisOptions {
    pub rank_tol: f64,
    pub unit_margin: f64,
    pub riccati_tol: f64,
    pub max_iters: usize,
    pub epsilon: Option<f64>,
    pub horizon: Option<usize>,
    pub allow_borderline: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            rank_tol: DEFAULT_RANK_TOL,
            unit_margin: 0.0,
            riccati_tol: 1e-10,
            max_iters: 2000,
            epsilon: None,
            horizon: None,
            allow_borderline: false,
        }
    }
}

/// Everything the synthesis pipeline produces.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub law: FeedbackLaw,
    pub report: ClosedLoopReport,
    pub certificate: StabilizabilityCertificate,
    /// `||Phi_closed(NT, 0)||` of the finite-horizon feasibility stage.
    pub feasibility_norm: Option<f64>,
    /// `sqrt(delta0)` bound the feasibility stage must satisfy.
    pub feasibility_bound: Option<f64>,
    pub epsilon_used: Option<f64>,
    pub horizon_used: Option<usize>,
    pub riccati_iterations: usize,
}

/// Full pipeline: certify, build the deadbeat + finite-horizon feasibility
/// witness, then the T-periodic Riccati law, and verify the closed loop.
pub fn synthesize(
    system: &PeriodicSystem,
    z: &ControlSubspace,
    opts: &SynthesisOptions,
) -> Result<Synthesis> {
    let mono = monodromy(system, 0.0)?;
    let sp = split(&mono, opts.unit_margin)?;
    if sp.borderline && !opts.allow_borderline {
        return Err(Error::BorderlineRefusal);
    }
    let certificate = certify_all(system, z, &sp, opts.rank_tol)?;
    if certificate.undecidable {
        return Err(Error::Undecidable {
            detail: format!(
                "margins (b, c, d) = ({:.3e}, {:.3e}, {:.3e}) within a factor 10 of tolerance",
                certificate.margin_b, certificate.margin_c, certificate.margin_d
            ),
        });
    }
    if !certificate.stabilizable() {
        return Err(Error::NotStabilizable {
            detail: format!(
                "certificates (b, c, d) = ({}, {}, {}), margin_b = {:.3e}",
                certificate.verdict_b,
                certificate.verdict_c,
                certificate.verdict_d,
                certificate.margin_b
            ),
        });
    }

    if sp.n0 == 0 {
        let law = FeedbackLaw::zero(system, z);
        let report = verify_law(system, &law)?;
        return Ok(Synthesis {
            law,
            report,
            certificate,
            feasibility_norm: None,
            feasibility_bound: None,
            epsilon_used: None,
            horizon_used: None,
            riccati_iterations: 0,
        });
    }

    let deadbeat = deadbeat_unstable(system, z, &sp, opts.rank_tol)?;
    let hp = horizon_and_epsilon(system, &sp, &deadbeat)?;
    let epsilon = opts.epsilon.unwrap_or(0.5 * hp.epsilon0);
    let n_periods = opts.horizon.unwrap_or(hp.n_periods).max(1);
    // The optimal closed-loop span transition comes out of the Hamiltonian
    // sweep itself; re-integrating the loop would be hopelessly stiff for
    // small eps (gains scale like 1/eps).
    let (sol_fh, _law_fh) = finite_horizon_riccati(system, z, epsilon, n_periods)?;
    let feasibility_norm = sol_fh.span_transition_norm;
    let feasibility_bound = hp.delta0.sqrt();
    if feasibility_norm > feasibility_bound + 1e-9 {
        return Err(Error::SynthesisVerificationFailed {
            radius: feasibility_norm,
        });
    }

    let s0 = DMatrix::zeros(system.n_x, system.n_x);
    let pr = periodic_riccati(system, z, &s0, opts.riccati_tol, opts.max_iters)?;
    let report = verify_law(system, &pr.law)?;
    if report.spectral_radius >= 1.0 {
        return Err(Error::SynthesisVerificationFailed {
            radius: report.spectral_radius,
        });
    }
    Ok(Synthesis {
        law: pr.law,
        report,
        certificate,
        feasibility_norm: Some(feasibility_norm),
        feasibility_bound: Some(feasibility_bound),
        epsilon_used: Some(epsilon),
        horizon_used: Some(n_periods),
        riccati_iterations: pr.iterations,
    })
}
