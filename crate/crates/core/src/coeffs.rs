use nalgebra::DMatrix;

/// One-sided limit selector for coefficient evaluation.
///
/// Piecewise-constant (switching) coefficients are discontinuous at their
/// break points. An RK4 step ending exactly on a break must use the left
/// limit for its final stage while the step starting there uses the right
/// limit; continuous coefficients ignore the distinction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// T-periodic matrix-valued coefficient.
///
/// Scenario files carry either a closed-form tag (constant, cosine-modulated,
/// switching) or dense per-node samples with piecewise-linear interpolation.
/// Evaluation always folds the time argument into one period first, so the
/// periodic extension `t -> t mod T` is exact.
#[derive(Debug, Clone)]
pub enum MatrixCurve {
    Constant(DMatrix<f64>),
    /// `base + modulation * cos(2*pi*cycles*t/T)`
    Cosine {
        base: DMatrix<f64>,
        modulation: DMatrix<f64>,
        cycles: u32,
    },
    /// Piecewise constant on `[breaks[i], breaks[i+1])`, last piece ends at `T`.
    Switching {
        breaks: Vec<f64>,
        values: Vec<DMatrix<f64>>,
    },
    /// Values at the uniform grid nodes `0, h, .., T`, piecewise-linear in between.
    Sampled { values: Vec<DMatrix<f64>> },
    /// `inner(t) * factor`, used for control-subspace projection.
    Projected {
        inner: Box<MatrixCurve>,
        factor: DMatrix<f64>,
    },
    /// `drift(t) + input(t) * gain(t)`: closed-loop drift. The coefficient
    /// curves fold with their own period (the open-loop period), the gain
    /// with the law period.
    ClosedLoop {
        drift: Box<MatrixCurve>,
        input: Box<MatrixCurve>,
        coeff_period: f64,
        gain: Box<crate::synthesis::GainCurve>,
    },
}

/// Fold `t` into `[0, T)` taking the right-sided representative.
fn fold_right(t: f64, period: f64) -> f64 {
    let mut r = t - period * (t / period).floor();
    // Rounding can land a hair below T; snap back to 0.
    if r >= period || period - r <= 1e-12 * period {
        r = 0.0;
    }
    if r < 0.0 {
        r = 0.0;
    }
    r
}

/// Fold `t` into `(0, T]` taking the left-sided representative (for t > 0).
fn fold_left(t: f64, period: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let r = t - period * (t / period).floor();
    if r <= 1e-12 * period {
        period
    } else {
        r
    }
}

impl MatrixCurve {
    /// Evaluate at `t` (periodically extended), taking the requested one-sided limit.
    pub fn eval(&self, t: f64, period: f64, side: Side) -> DMatrix<f64> {
        match self {
            MatrixCurve::Constant(m) => m.clone(),
            MatrixCurve::Cosine {
                base,
                modulation,
                cycles,
            } => {
                let tau = fold_right(t, period);
                let c = (2.0 * std::f64::consts::PI * *cycles as f64 * tau / period).cos();
                base + modulation * c
            }
            MatrixCurve::Switching { breaks, values } => {
                let tau = match side {
                    Side::Right => fold_right(t, period),
                    Side::Left => fold_left(t, period),
                };
                let tol = 1e-9 * period;
                let idx = match side {
                    // piece with breaks[i] <= tau < breaks[i+1]
                    Side::Right => {
                        let mut i = 0;
                        for (j, &b) in breaks.iter().enumerate() {
                            if tau >= b - tol {
                                i = j;
                            }
                        }
                        i
                    }
                    // piece with breaks[i] < tau <= next break
                    Side::Left => {
                        let mut i = 0;
                        for (j, &b) in breaks.iter().enumerate() {
                            if tau > b + tol {
                                i = j;
                            }
                        }
                        i
                    }
                };
                values[idx].clone()
            }
            MatrixCurve::Sampled { values } => {
                let tau = fold_right(t, period);
                let m = values.len() - 1;
                let h = period / m as f64;
                let x = tau / h;
                let i = (x.floor() as usize).min(m - 1);
                let w = x - i as f64;
                &values[i] * (1.0 - w) + &values[i + 1] * w
            }
            MatrixCurve::Projected { inner, factor } => inner.eval(t, period, side) * factor,
            MatrixCurve::ClosedLoop {
                drift,
                input,
                coeff_period,
                gain,
            } => {
                drift.eval(t, *coeff_period, side)
                    + input.eval(t, *coeff_period, side) * gain.eval(t, side)
            }
        }
    }

    /// Row/column dimensions of the coefficient values.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixCurve::Constant(m) => m.shape(),
            MatrixCurve::Cosine { base, .. } => base.shape(),
            MatrixCurve::Switching { values, .. } => values[0].shape(),
            MatrixCurve::Sampled { values } => values[0].shape(),
            MatrixCurve::Projected { inner, factor } => (inner.shape().0, factor.ncols()),
            MatrixCurve::ClosedLoop { drift, .. } => drift.shape(),
        }
    }

    /// Break points (within one period) at which the value may jump.
    pub fn jump_points(&self) -> Vec<f64> {
        match self {
            MatrixCurve::Switching { breaks, .. } => breaks.clone(),
            MatrixCurve::Projected { inner, .. } => inner.jump_points(),
            MatrixCurve::ClosedLoop {
                drift,
                input,
                coeff_period,
                gain,
            } => {
                // replicate open-loop jumps over the law period
                let reps = (gain.period / coeff_period).round().max(1.0) as usize;
                let mut j = Vec::new();
                for r in 0..reps {
                    let shift = r as f64 * coeff_period;
                    j.extend(drift.jump_points().iter().map(|b| b + shift));
                    j.extend(input.jump_points().iter().map(|b| b + shift));
                }
                j.extend(gain.jump_points());
                j
            }
            _ => Vec::new(),
        }
    }
}
