use nalgebra::{DMatrix, DVector};

use crate::coeffs::{MatrixCurve, Side};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Control subspace descriptor `Z` of the input space `U = R^{n_u}`.
#[derive(Debug, Clone)]
pub enum ControlSubspace {
    Full,
    /// Orthonormal columns spanning `Z` (an `n_u x m0` matrix).
    Basis(DMatrix<f64>),
}

impl ControlSubspace {
    pub fn basis(columns: DMatrix<f64>) -> Result<Self> {
        let m0 = columns.ncols();
        let gram = columns.transpose() * &columns;
        let residual = (&gram - DMatrix::identity(m0, m0)).norm();
        if residual > 1e-10 {
            return Err(Error::BasisNotOrthonormal { residual });
        }
        Ok(ControlSubspace::Basis(columns))
    }

    pub fn validate(&self, n_u: usize) -> Result<()> {
        match self {
            ControlSubspace::Full => Ok(()),
            ControlSubspace::Basis(b) => {
                if b.nrows() != n_u || b.ncols() > n_u {
                    return Err(Error::BasisTooLarge {
                        m0: b.ncols(),
                        n_u,
                    });
                }
                let gram = b.transpose() * b;
                let residual = (&gram - DMatrix::identity(b.ncols(), b.ncols())).norm();
                if residual > 1e-10 {
                    return Err(Error::BasisNotOrthonormal { residual });
                }
                Ok(())
            }
        }
    }

    /// Subspace dimension `m0` (equals `n_u` for the full space).
    pub fn dim(&self, n_u: usize) -> usize {
        match self {
            ControlSubspace::Full => n_u,
            ControlSubspace::Basis(b) => b.ncols(),
        }
    }

    /// Orthonormal basis matrix of `Z` as an `n_u x m0` matrix.
    pub fn basis_matrix(&self, n_u: usize) -> DMatrix<f64> {
        match self {
            ControlSubspace::Full => DMatrix::identity(n_u, n_u),
            ControlSubspace::Basis(b) => b.clone(),
        }
    }

    /// Orthogonal projector `Pi_Z` onto `Z` in `U`.
    pub fn projector(&self, n_u: usize) -> DMatrix<f64> {
        match self {
            ControlSubspace::Full => DMatrix::identity(n_u, n_u),
            ControlSubspace::Basis(b) => b * b.transpose(),
        }
    }
}

/// The system `y'(t) = M(t) y(t) + D(t) u(t)` with `T`-periodic coefficients.
#[derive(Debug, Clone)]
pub struct PeriodicSystem {
    pub n_x: usize,
    pub n_u: usize,
    pub period: f64,
    pub grid: TimeGrid,
    pub label: String,
    drift: MatrixCurve,
    input: MatrixCurve,
}

impl PeriodicSystem {
    pub fn drift(&self, t: f64, side: Side) -> DMatrix<f64> {
        self.drift.eval(t, self.period, side)
    }

    pub fn input(&self, t: f64, side: Side) -> DMatrix<f64> {
        self.input.eval(t, self.period, side)
    }

    pub fn drift_curve(&self) -> &MatrixCurve {
        &self.drift
    }

    pub fn input_curve(&self) -> &MatrixCurve {
        &self.input
    }

    /// Replace the drift, keeping grid and dimensions (used for closed loops).
    pub fn with_drift(&self, drift: MatrixCurve, label: String) -> Self {
        Self {
            drift,
            label,
            ..self.clone()
        }
    }
}

fn check_finite(m: &DMatrix<f64>, t: f64) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteCoefficient { t })
    }
}

/// Build and validate a periodic system.
///
/// The coefficient curves are periodically extended (`t -> t mod T`), sampled
/// at every node and half-node for finiteness, and switching breaks are
/// required to sit on grid nodes so the RK4 order is preserved between jumps.
pub fn build_system(
    drift: MatrixCurve,
    input: MatrixCurve,
    period: f64,
    samples_per_period: usize,
    label: impl Into<String>,
) -> Result<PeriodicSystem> {
    let grid = TimeGrid::new(period, samples_per_period)?;
    let (n_x, n_x2) = drift.shape();
    if n_x != n_x2 {
        return Err(Error::DimensionMismatch(format!(
            "drift must be square, got {n_x}x{n_x2}"
        )));
    }
    let (dn, n_u) = input.shape();
    if dn != n_x {
        return Err(Error::DimensionMismatch(format!(
            "input has {dn} rows but the state dimension is {n_x}"
        )));
    }

    for curve in [&drift, &input] {
        for &b in &curve.jump_points() {
            if !grid.is_node(b) {
                return Err(Error::JumpOffGrid { t: b });
            }
        }
        if let MatrixCurve::Sampled { values } = curve {
            if values.len() != samples_per_period + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "sampled coefficient has {} nodes, expected {}",
                    values.len(),
                    samples_per_period + 1
                )));
            }
            // Node values at 0 and T must agree for the extension to be continuous.
            let scale = values[0].norm().max(values[samples_per_period].norm());
            let residual = (&values[0] - &values[samples_per_period]).norm();
            if residual > 1e-12 * scale.max(1.0) {
                return Err(Error::NotPeriodic {
                    t: period,
                    residual,
                });
            }
        }
        let h = grid.step();
        for i in 0..=2 * samples_per_period {
            let t = 0.5 * h * i as f64;
            check_finite(&curve.eval(t, period, Side::Right), t)?;
        }
    }

    Ok(PeriodicSystem {
        n_x,
        n_u,
        period,
        grid,
        label: label.into(),
        drift,
        input,
    })
}

/// The projected input map `t -> D(t) * Pi_Z`.
pub fn project_control(system: &PeriodicSystem, z: &ControlSubspace) -> Result<MatrixCurve> {
    z.validate(system.n_u)?;
    Ok(MatrixCurve::Projected {
        inner: Box::new(system.input_curve().clone()),
        factor: z.projector(system.n_u),
    })
}

/// A control signal sampled on grid nodes over `[start, end]`, valued in `U`
/// and constrained to `range(Z)`, interpolated piecewise-linearly.
#[derive(Debug, Clone)]
pub struct SampledControl {
    pub start: f64,
    pub step: f64,
    /// `u(t_i)` in `U` coordinates, one `n_u`-vector per node.
    pub values: Vec<DVector<f64>>,
}

impl SampledControl {
    pub fn zero(start: f64, step: f64, nodes: usize, n_u: usize) -> Self {
        Self {
            start,
            step,
            values: vec![DVector::zeros(n_u); nodes],
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    pub fn covers(&self, s: f64, t_end: f64) -> bool {
        let tol = 1e-9 * self.step.max(1.0);
        self.start <= s + tol && self.end() >= t_end - tol
    }

    /// Piecewise-linear evaluation; clamps outside the sampled range.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let m = self.values.len() - 1;
        let x = ((t - self.start) / self.step).clamp(0.0, m as f64);
        let i = (x.floor() as usize).min(m.saturating_sub(1));
        if self.values.len() == 1 {
            return self.values[0].clone();
        }
        let w = x - i as f64;
        &self.values[i] * (1.0 - w) + &self.values[i + 1] * w
    }

    /// Largest distance of any sample from `range(Z)`.
    pub fn subspace_residual(&self, z: &ControlSubspace, n_u: usize) -> f64 {
        let pi = z.projector(n_u);
        self.values
            .iter()
            .map(|u| (u - &pi * u).norm())
            .fold(0.0, f64::max)
    }

    /// `L^2` inner product of two controls on the same grid (exact for the
    /// piecewise-linear interpolants).
    pub fn l2_inner(&self, other: &SampledControl) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let h = self.step;
        let mut acc = 0.0;
        for i in 0..self.values.len() - 1 {
            let (f0, f1) = (&self.values[i], &self.values[i + 1]);
            let (g0, g1) = (&other.values[i], &other.values[i + 1]);
            acc += h
                * (f0.dot(g0) / 3.0 + (f0.dot(g1) + f1.dot(g0)) / 6.0 + f1.dot(g1) / 3.0);
        }
        acc
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_system_builds() {
        let sys = build_system(
            MatrixCurve::Constant(dmatrix![0.0]),
            MatrixCurve::Constant(dmatrix![1.0]),
            1.0,
            64,
            "scalar",
        )
        .unwrap();
        assert_eq!(sys.n_x, 1);
        assert_eq!(sys.n_u, 1);
    }

    #[test]
    fn rejects_nan_coefficient() {
        let err = build_system(
            MatrixCurve::Constant(dmatrix![f64::NAN]),
            MatrixCurve::Constant(dmatrix![1.0]),
            1.0,
            64,
            "bad",
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteCoefficient { .. }));
    }

    #[test]
    fn rejects_nonpositive_period() {
        let err = build_system(
            MatrixCurve::Constant(dmatrix![0.0]),
            MatrixCurve::Constant(dmatrix![1.0]),
            -1.0,
            64,
            "bad",
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidPeriod(_)));
    }

    #[test]
    fn rejects_jump_off_grid() {
        let drift = MatrixCurve::Switching {
            breaks: vec![0.0, 0.3],
            values: vec![dmatrix![1.0], dmatrix![-1.0]],
        };
        let err = build_system(
            drift,
            MatrixCurve::Constant(dmatrix![1.0]),
            1.0,
            64,
            "bad",
        )
        .unwrap_err();
        assert!(matches!(err, Error::JumpOffGrid { .. }));
    }

    #[test]
    fn periodic_extension_is_exact() {
        let drift = MatrixCurve::Cosine {
            base: dmatrix![0.5],
            modulation: dmatrix![2.0],
            cycles: 1,
        };
        let sys = build_system(
            drift,
            MatrixCurve::Constant(dmatrix![1.0]),
            0.7,
            64,
            "cosine",
        )
        .unwrap();
        for k in 0..40 {
            let t = 0.123 + 0.7 * (k as f64) * 0.17 * 5.0 / 40.0;
            let folded = t - 0.7 * (t / 0.7).floor();
            assert_eq!(
                sys.drift(t, Side::Right)[(0, 0)],
                sys.drift(folded, Side::Right)[(0, 0)]
            );
        }
    }

    #[test]
    fn projector_identity_for_full() {
        let sys = build_system(
            MatrixCurve::Constant(dmatrix![0.0, 0.0; 0.0, 0.0]),
            MatrixCurve::Constant(dmatrix![1.0, 0.0; 0.0, 1.0]),
            1.0,
            64,
            "id",
        )
        .unwrap();
        let m = project_control(&sys, &ControlSubspace::Full).unwrap();
        let v = m.eval(0.37, 1.0, Side::Right);
        assert_eq!(v, DMatrix::identity(2, 2));
    }

    #[test]
    fn coordinate_projector_zeroes_column() {
        let sys = build_system(
            MatrixCurve::Constant(DMatrix::zeros(2, 2)),
            MatrixCurve::Constant(DMatrix::identity(2, 2)),
            1.0,
            64,
            "id",
        )
        .unwrap();
        let z = ControlSubspace::basis(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let m = project_control(&sys, &z).unwrap();
        let v = m.eval(0.2, 1.0, Side::Right);
        assert_eq!(v[(0, 0)], 1.0);
        assert_eq!(v[(0, 1)], 0.0);
        assert_eq!(v[(1, 1)], 0.0);
    }

    #[test]
    fn project_control_idempotent() {
        let sys = build_system(
            MatrixCurve::Constant(DMatrix::zeros(3, 3)),
            MatrixCurve::Cosine {
                base: DMatrix::from_fn(3, 2, |i, j| (i + j) as f64),
                modulation: DMatrix::from_fn(3, 2, |i, j| (i * j) as f64 - 1.0),
                cycles: 1,
            },
            1.0,
            64,
            "cos",
        )
        .unwrap();
        let z =
            ControlSubspace::basis(DMatrix::from_column_slice(2, 1, &[0.6, 0.8])).unwrap();
        let once = project_control(&sys, &z).unwrap();
        let twice = MatrixCurve::Projected {
            inner: Box::new(once.clone()),
            factor: z.projector(2),
        };
        for &t in &[0.0, 0.21, 0.5, 0.99] {
            let a = once.eval(t, 1.0, Side::Right);
            let b = twice.eval(t, 1.0, Side::Right);
            assert!((a - b).norm() < 1e-14);
        }
    }
}
