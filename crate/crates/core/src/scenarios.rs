//! Concrete example systems: 1-D heat equations with periodic potentials,
//! the rank-one-control counterexample, the scalar switching system whose
//! stabilization needs a genuinely time-varying gain, and seeded random
//! periodic systems for property suites.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coeffs::MatrixCurve;
use crate::error::{Error, Result};
use crate::grid::DEFAULT_SAMPLES_PER_PERIOD;
use crate::synthesis::{FeedbackLaw, GainCurve, GainValues, Provenance};
use crate::system::{build_system, ControlSubspace, PeriodicSystem};

const PI: f64 = std::f64::consts::PI;

/// Spatial profile of the potential `a(x, t) = p(x) g(t)` on `(0, 1)`.
#[derive(Debug, Clone)]
pub enum SpaceProfile {
    Constant(f64),
    /// Values on a uniform grid over `[0, 1]` (endpoints included),
    /// piecewise-linear in between.
    Samples(Vec<f64>),
}

impl SpaceProfile {
    fn eval(&self, x: f64) -> f64 {
        match self {
            SpaceProfile::Constant(c) => *c,
            SpaceProfile::Samples(v) => {
                let m = v.len() - 1;
                let s = (x.clamp(0.0, 1.0)) * m as f64;
                let i = (s.floor() as usize).min(m - 1);
                let w = s - i as f64;
                v[i] * (1.0 - w) + v[i + 1] * w
            }
        }
    }
}

/// Time modulation `g(t) = 1 + amplitude cos(2 pi t / T)`.
#[derive(Debug, Clone, Copy)]
pub enum TimeModulation {
    Constant,
    Cosine { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    SpectralGalerkin,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    /// Indicator of the control window (internal control).
    Indicator,
    /// Rank-one input through the first Laplacian mode.
    RankOneMode1,
}

/// Specification of a controlled 1-D heat equation
/// `dy/dt = y_xx - a(x,t) y + chi_omega u` on `(0, 1)` with Dirichlet ends.
#[derive(Debug, Clone)]
pub struct HeatSpec {
    pub modes_or_gridpoints: usize,
    pub potential_space: SpaceProfile,
    pub potential_time: TimeModulation,
    pub window: (f64, f64),
    pub period: f64,
    pub discretization: Discretization,
    pub control_kind: ControlKind,
    pub samples_per_period: usize,
}

impl HeatSpec {
    pub fn spectral(modes: usize, c: f64, period: f64) -> Self {
        HeatSpec {
            modes_or_gridpoints: modes,
            potential_space: SpaceProfile::Constant(c),
            potential_time: TimeModulation::Constant,
            window: (0.1, 0.9),
            period,
            discretization: Discretization::SpectralGalerkin,
            control_kind: ControlKind::Indicator,
            samples_per_period: DEFAULT_SAMPLES_PER_PERIOD,
        }
    }
}

/// Exact overlap integrals of the sine modes over a window:
/// `int_a^b 2 sin(j pi x) sin(k pi x) dx`.
fn sine_overlap(j: usize, k: usize, a: f64, b: f64) -> f64 {
    let j = j as f64;
    let k = k as f64;
    let anti = |x: f64| -> f64 {
        if j == k {
            x - (2.0 * k * PI * x).sin() / (2.0 * k * PI)
        } else {
            ((j - k) * PI * x).sin() / ((j - k) * PI) - ((j + k) * PI * x).sin() / ((j + k) * PI)
        }
    };
    anti(b) - anti(a)
}

/// Galerkin matrix of multiplication by `p(x)` in the sine basis, by Simpson
/// quadrature on a fine grid.
fn galerkin_potential(profile: &SpaceProfile, modes: usize) -> DMatrix<f64> {
    match profile {
        // multiplication by a constant is exactly c I in an orthonormal basis
        SpaceProfile::Constant(c) => DMatrix::identity(modes, modes) * *c,
        SpaceProfile::Samples(_) => {
            let quad_points = 2048usize;
            let hx = 1.0 / quad_points as f64;
            let mut g = DMatrix::zeros(modes, modes);
            for j in 0..modes {
                for k in j..modes {
                    let f = |x: f64| {
                        profile.eval(x)
                            * (2.0
                                * ((j + 1) as f64 * PI * x).sin()
                                * ((k + 1) as f64 * PI * x).sin())
                    };
                    let mut acc = f(0.0) + f(1.0);
                    for i in 1..quad_points {
                        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                        acc += w * f(i as f64 * hx);
                    }
                    let v = acc * hx / 3.0;
                    g[(j, k)] = v;
                    g[(k, j)] = v;
                }
            }
            g
        }
    }
}

/// Build the heat system from a spec.
pub fn heat_1d(spec: &HeatSpec) -> Result<PeriodicSystem> {
    let (a, b) = spec.window;
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::InvalidWindow { a, b });
    }
    let n = spec.modes_or_gridpoints;
    let (base_lin, pot): (DMatrix<f64>, DMatrix<f64>) = match spec.discretization {
        Discretization::SpectralGalerkin => {
            let lambda = DVector::from_fn(n, |k, _| {
                let kk = (k + 1) as f64;
                -(kk * PI) * (kk * PI)
            });
            (
                DMatrix::from_diagonal(&lambda),
                galerkin_potential(&spec.potential_space, n),
            )
        }
        Discretization::FiniteDifference => {
            let hx = 1.0 / (n + 1) as f64;
            let mut lap = DMatrix::zeros(n, n);
            for i in 0..n {
                lap[(i, i)] = -2.0 / (hx * hx);
                if i + 1 < n {
                    lap[(i, i + 1)] = 1.0 / (hx * hx);
                    lap[(i + 1, i)] = 1.0 / (hx * hx);
                }
            }
            let pot = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    spec.potential_space.eval((i + 1) as f64 * hx)
                } else {
                    0.0
                }
            });
            (lap, pot)
        }
    };
    // y' = (Laplacian - a(.,t)) y + D u
    let drift = match spec.potential_time {
        TimeModulation::Constant => MatrixCurve::Constant(&base_lin - &pot),
        TimeModulation::Cosine { amplitude } => MatrixCurve::Cosine {
            base: &base_lin - &pot,
            modulation: &pot * (-amplitude),
            cycles: 1,
        },
    };
    let input = match (spec.control_kind, spec.discretization) {
        (ControlKind::Indicator, Discretization::SpectralGalerkin) => {
            MatrixCurve::Constant(DMatrix::from_fn(n, n, |j, k| {
                sine_overlap(j + 1, k + 1, a, b)
            }))
        }
        (ControlKind::Indicator, Discretization::FiniteDifference) => {
            let hx = 1.0 / (n + 1) as f64;
            let cols: Vec<usize> = (0..n)
                .filter(|&i| {
                    let x = (i + 1) as f64 * hx;
                    a <= x && x <= b
                })
                .collect();
            if cols.is_empty() {
                return Err(Error::InvalidWindow { a, b });
            }
            let mut d = DMatrix::zeros(n, cols.len());
            for (j, &i) in cols.iter().enumerate() {
                d[(i, j)] = 1.0;
            }
            MatrixCurve::Constant(d)
        }
        (ControlKind::RankOneMode1, Discretization::SpectralGalerkin) => {
            let mut d = DMatrix::zeros(n, n);
            d[(0, 0)] = 1.0;
            MatrixCurve::Constant(d)
        }
        (ControlKind::RankOneMode1, Discretization::FiniteDifference) => {
            let hx = 1.0 / (n + 1) as f64;
            let mode = DVector::from_fn(n, |i, _| {
                (2.0f64).sqrt() * (PI * (i + 1) as f64 * hx).sin()
            });
            // rank-one u -> <u, xi_1>_h xi_1 with the grid inner product
            MatrixCurve::Constant(&mode * (mode.transpose() * hx))
        }
    };
    let label = format!(
        "heat-1d-{}-{}",
        match spec.discretization {
            Discretization::SpectralGalerkin => "spectral",
            Discretization::FiniteDifference => "fd",
        },
        n
    );
    build_system(drift, input, spec.period, spec.samples_per_period, label)
}

/// The non-stabilizable heat configuration: shifted spectrum
/// `diag(lambda_2 - lambda_k)` driven through the rank-one input `e1 e1^T`.
/// Guaranteed two unstable multipliers (`e^{(l2-l1)T} > 1` and `e^0 = 1`).
pub fn counterexample_h1state(modes: usize, period: f64) -> Result<PeriodicSystem> {
    assert!(modes >= 3, "counterexample needs at least 3 modes");
    let lambda = |k: usize| -> f64 {
        let kk = k as f64;
        kk * PI * kk * PI
    };
    let l2 = lambda(2);
    let drift = DMatrix::from_fn(modes, modes, |i, j| {
        if i == j {
            l2 - lambda(i + 1)
        } else {
            0.0
        }
    });
    let mut input = DMatrix::zeros(modes, modes);
    input[(0, 0)] = 1.0;
    build_system(
        MatrixCurve::Constant(drift),
        MatrixCurve::Constant(input),
        period,
        DEFAULT_SAMPLES_PER_PERIOD,
        format!("heat-counterexample-{modes}"),
    )
}

/// The scalar 2-periodic switching system `y' = s(t) u` with
/// `s = +1 on [0,1), -1 on [1,2)`. No constant gain can stabilize it (the
/// one-period map is identically 1), while the alternating gain
/// `k(t) = 1 on [0,1), 2 on [1,2)` contracts by `e^{-1}` per period; both
/// laws are returned for verification.
pub fn switching_scalar() -> Result<(PeriodicSystem, FeedbackLaw)> {
    let system = build_system(
        MatrixCurve::Constant(DMatrix::zeros(1, 1)),
        MatrixCurve::Switching {
            breaks: vec![0.0, 1.0],
            values: vec![
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, -1.0),
            ],
        },
        2.0,
        DEFAULT_SAMPLES_PER_PERIOD,
        "switching-scalar",
    )?;
    let alternating_k = FeedbackLaw {
        period: 2.0,
        z_basis: DMatrix::identity(1, 1),
        gains: GainCurve {
            period: 2.0,
            values: GainValues::PiecewiseConstant {
                breaks: vec![0.0, 1.0],
                values: vec![
                    DMatrix::from_element(1, 1, 1.0),
                    DMatrix::from_element(1, 1, 2.0),
                ],
            },
        },
        provenance: Provenance::External,
        epsilon: None,
        horizon_periods: None,
    };
    Ok((system, alternating_k))
}

/// A constant gain for the switching system.
pub fn switching_constant_gain(c: f64) -> FeedbackLaw {
    FeedbackLaw {
        period: 2.0,
        z_basis: DMatrix::identity(1, 1),
        gains: GainCurve {
            period: 2.0,
            values: GainValues::PiecewiseConstant {
                breaks: vec![0.0],
                values: vec![DMatrix::from_element(1, 1, c)],
            },
        },
        provenance: Provenance::External,
        epsilon: None,
        horizon_periods: None,
    }
}

/// Deterministic random periodic system with a prescribed number of unstable
/// multipliers (moduli kept clear of the borderline band and of extreme
/// growth; the stable part is kept at `delta_bar <= 0.9` so synthesis
/// horizons stay bounded).
pub fn random_periodic(
    n_x: usize,
    n_u: usize,
    seed: u64,
    unstable_target: usize,
) -> Result<PeriodicSystem> {
    assert!((1..=16).contains(&n_x), "state dimension must be in 1..=16");
    assert!((1..=n_x).contains(&n_u), "input dimension must be in 1..=n_x");
    assert!(unstable_target <= n_x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n_x as f64).sqrt();
    let period = 1.0;
    let attempts = 50;
    for attempt in 0..attempts {
        let c = DMatrix::from_fn(n_x, n_x, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * scale
        });
        let e = DMatrix::from_fn(n_x, n_x, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * scale * 0.7
        });
        let input = DMatrix::from_fn(n_x, n_u, |_, _| rng.sample::<f64, _>(StandardNormal));
        if crate::linalg::rank(&input, 1e-9) < n_u {
            continue;
        }
        let base = build_system(
            MatrixCurve::Cosine {
                base: c.clone(),
                modulation: e.clone(),
                cycles: 1,
            },
            MatrixCurve::Constant(input.clone()),
            period,
            DEFAULT_SAMPLES_PER_PERIOD,
            format!("random-{n_x}x{n_u}-seed{seed}-try{attempt}"),
        )?;
        let mono = crate::propagator::monodromy(&base, 0.0)?;
        let mut moduli: Vec<f64> = mono
            .matrix
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect();
        moduli.sort_by(|x, y| y.partial_cmp(x).unwrap());
        // Shifting the drift by alpha I scales every multiplier by e^{alpha T}.
        let shift_factor = if unstable_target == 0 {
            0.9 / moduli[0]
        } else {
            let pivot = moduli[unstable_target - 1];
            if pivot <= 0.0 {
                continue;
            }
            let s = 1.07 / pivot;
            if unstable_target < n_x && moduli[unstable_target] * s > 0.9 {
                continue; // gap too small for a clean split
            }
            if moduli[0] * s > 1e6 {
                continue; // would be extremely unstable
            }
            s
        };
        let alpha = shift_factor.ln() / period;
        let shifted = &c + DMatrix::identity(n_x, n_x) * alpha;
        return build_system(
            MatrixCurve::Cosine {
                base: shifted,
                modulation: e,
                cycles: 1,
            },
            MatrixCurve::Constant(input),
            period,
            DEFAULT_SAMPLES_PER_PERIOD,
            format!("random-{n_x}x{n_u}-seed{seed}"),
        );
    }
    Err(Error::TargetUnreachable { attempts })
}

/// A named scenario: system plus control subspace.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub system: PeriodicSystem,
    pub control: ControlSubspace,
}

/// The canonical scenario set exercised by the acceptance suite and emitted
/// by the CLI generator.
pub fn shipped() -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    let (switching, _) = switching_scalar()?;
    out.push(Scenario {
        name: "switching",
        system: switching,
        control: ControlSubspace::Full,
    });
    out.push(Scenario {
        name: "stable-scalar",
        system: build_system(
            MatrixCurve::Constant(DMatrix::from_element(1, 1, -1.0)),
            MatrixCurve::Constant(DMatrix::from_element(1, 1, 1.0)),
            1.0,
            DEFAULT_SAMPLES_PER_PERIOD,
            "stable-scalar",
        )?,
        control: ControlSubspace::Full,
    });
    out.push(Scenario {
        name: "heat-stable-spectral",
        system: heat_1d(&HeatSpec::spectral(5, -2.5 * PI * PI, 0.1))?,
        control: ControlSubspace::Full,
    });
    // The fastest FD mode has |lambda| ~ 4 (n+1)^2; the fixed RK4 step must
    // resolve it, so this scenario uses a finer grid in time and a modest
    // spatial resolution.
    out.push(Scenario {
        name: "heat-stable-fd",
        system: heat_1d(&HeatSpec {
            modes_or_gridpoints: 24,
            potential_space: SpaceProfile::Constant(-2.5 * PI * PI),
            potential_time: TimeModulation::Constant,
            window: (0.1, 0.9),
            period: 0.1,
            discretization: Discretization::FiniteDifference,
            control_kind: ControlKind::Indicator,
            samples_per_period: 512,
        })?,
        control: ControlSubspace::Full,
    });
    out.push(Scenario {
        name: "heat-cosine-spectral",
        system: heat_1d(&HeatSpec {
            modes_or_gridpoints: 4,
            potential_space: SpaceProfile::Constant(-20.0),
            potential_time: TimeModulation::Cosine { amplitude: 0.3 },
            window: (0.2, 0.7),
            period: 0.5,
            discretization: Discretization::SpectralGalerkin,
            control_kind: ControlKind::Indicator,
            samples_per_period: DEFAULT_SAMPLES_PER_PERIOD,
        })?,
        control: ControlSubspace::Full,
    });
    out.push(Scenario {
        name: "heat-counterexample-3",
        system: counterexample_h1state(3, 0.1)?,
        control: ControlSubspace::Full,
    });
    out.push(Scenario {
        name: "heat-counterexample-8",
        system: counterexample_h1state(8, 0.1)?,
        control: ControlSubspace::Full,
    });
    out.push(Scenario {
        name: "random-4x2",
        system: random_periodic(4, 2, 7, 2)?,
        control: ControlSubspace::Full,
    });
    Ok(out)
}
