use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg;
use crate::propagator::{transition, Monodromy};
use crate::schur;
use crate::system::PeriodicSystem;

/// Width of the band around the unit circle in which multipliers are flagged
/// borderline: the stability dichotomy is exact, floating point is not.
pub const BORDERLINE_BAND: f64 = 1e-6;

/// Largest multiplier modulus the pipeline accepts before declaring the
/// system unsupported (transition matrices overflow certification tolerances).
pub const MODULUS_CAP: f64 = 1e8;

/// One Floquet multiplier with its clustering data.
#[derive(Debug, Clone)]
pub struct Multiplier {
    pub value: Complex<f64>,
    pub modulus: f64,
    pub unstable: bool,
    pub borderline: bool,
    /// Algebraic multiplicity of the cluster this eigenvalue represents.
    pub multiplicity: usize,
}

/// Splitting of the state space into unstable (`H1`) and stable (`H2`)
/// Floquet subspaces of the one-period map.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    /// Distinct multipliers sorted by modulus, descending (one entry per
    /// cluster, carrying the cluster's algebraic multiplicity).
    pub multipliers: Vec<Multiplier>,
    /// Count of distinct unstable multipliers.
    pub n: usize,
    /// Total algebraic multiplicity of unstable multipliers (= dim H1).
    pub n0: usize,
    /// Largest stable multiplier modulus (0 when all multipliers are unstable).
    pub delta_bar: f64,
    /// Real projector onto H1 along H2.
    pub p: DMatrix<f64>,
    /// Orthonormal basis of H1 (n_x x n0).
    pub basis_h1: DMatrix<f64>,
    /// Orthonormal basis of H2 (n_x x (n_x - n0)).
    pub basis_h2: DMatrix<f64>,
    /// Unit-circle classification margin used (`|lambda| >= 1 - margin` is unstable).
    pub threshold: f64,
    /// Any multiplier within `1e-6` of the unit circle.
    pub borderline: bool,
    /// The one-period map the split was computed from.
    pub poincare: DMatrix<f64>,
}

impl SpectralSplit {
    pub fn n_x(&self) -> usize {
        self.p.nrows()
    }

    /// Smallest unstable multiplier modulus (None when n0 = 0).
    pub fn min_unstable_modulus(&self) -> Option<f64> {
        self.multipliers
            .iter()
            .filter(|m| m.unstable)
            .map(|m| m.modulus)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }
}

/// Cluster raw eigenvalues into distinct multipliers with multiplicities.
fn cluster(eigs: &[Complex<f64>], threshold: f64) -> Vec<Multiplier> {
    let mut sorted: Vec<Complex<f64>> = eigs.to_vec();
    sorted.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    let mut out: Vec<Multiplier> = Vec::new();
    for z in sorted {
        let tol = 1e-7 * (1.0 + z.norm());
        if let Some(last) = out
            .iter_mut()
            .find(|m| (m.value - z).norm() <= tol)
        {
            last.multiplicity += 1;
            continue;
        }
        let modulus = z.norm();
        out.push(Multiplier {
            value: z,
            modulus,
            unstable: modulus >= 1.0 - threshold,
            borderline: (modulus - 1.0).abs() < BORDERLINE_BAND,
            multiplicity: 1,
        });
    }
    out
}

/// Split the state space via an ordered real Schur decomposition of the
/// one-period map (unstable block leading), with the projector obtained from
/// a Sylvester solve for the coupling block.
pub fn split(monodromy: &Monodromy, unit_margin: f64) -> Result<SpectralSplit> {
    let p_mat = &monodromy.matrix;
    if !p_mat.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteCoefficient {
            t: monodromy.base_time,
        });
    }
    let n_x = p_mat.nrows();
    let threshold = unit_margin.max(0.0);

    let mut sch = schur::real_schur(p_mat)?;
    let n0 = schur::reorder(&mut sch, |z| z.norm() >= 1.0 - threshold)?;

    let eigs = schur::all_eigenvalues(&sch.t);
    for e in &eigs {
        if e.norm() > MODULUS_CAP {
            return Err(Error::ExtremeInstability { modulus: e.norm() });
        }
    }
    let multipliers = cluster(&eigs, threshold);
    let n = multipliers.iter().filter(|m| m.unstable).count();
    let n0_check: usize = multipliers
        .iter()
        .filter(|m| m.unstable)
        .map(|m| m.multiplicity)
        .sum();
    if n0_check != n0 {
        return Err(Error::ReorderFailure(format!(
            "unstable block dimension {n0} disagrees with multiplicity count {n0_check}"
        )));
    }
    let delta_bar = multipliers
        .iter()
        .filter(|m| !m.unstable)
        .map(|m| m.modulus)
        .fold(0.0, f64::max);
    let borderline = multipliers.iter().any(|m| m.borderline);

    // P = Q [[I, Y], [0, 0]] Q^T where T11 Y - Y T22 = T12.
    let t11 = sch.t.view((0, 0), (n0, n0)).into_owned();
    let t22 = sch.t.view((n0, n0), (n_x - n0, n_x - n0)).into_owned();
    let t12 = sch.t.view((0, n0), (n0, n_x - n0)).into_owned();
    let y = linalg::solve_sylvester(&t11, &t22, &t12)
        .ok_or_else(|| Error::ReorderFailure("projector Sylvester solve failed".into()))?;
    let mut pt = DMatrix::zeros(n_x, n_x);
    pt.view_mut((0, 0), (n0, n0))
        .copy_from(&DMatrix::identity(n0, n0));
    pt.view_mut((0, n0), (n0, n_x - n0)).copy_from(&y);
    let p = &sch.q * pt * sch.q.transpose();

    let basis_h1 = sch.q.columns(0, n0).into_owned();
    // ker P = span of Q [-Y; I].
    let basis_h2 = if n0 < n_x {
        let mut k = DMatrix::zeros(n_x, n_x - n0);
        k.view_mut((0, 0), (n0, n_x - n0)).copy_from(&(-&y));
        k.view_mut((n0, 0), (n_x - n0, n_x - n0))
            .copy_from(&DMatrix::identity(n_x - n0, n_x - n0));
        let kq = &sch.q * k;
        kq.qr().q()
    } else {
        DMatrix::zeros(n_x, 0)
    };

    Ok(SpectralSplit {
        multipliers,
        n,
        n0,
        delta_bar,
        p,
        basis_h1,
        basis_h2,
        threshold,
        borderline,
        poincare: p_mat.clone(),
    })
}

/// Default contour radius: the geometric midpoint of the spectral gap,
/// clipped into `(delta_bar, 1)`.
pub fn default_riesz_radius(split: &SpectralSplit) -> f64 {
    let fallback = 0.5 * (split.delta_bar + 1.0);
    match split.min_unstable_modulus() {
        None => fallback,
        Some(lo_unstable) => {
            if split.delta_bar == 0.0 {
                (0.5 * lo_unstable).min(fallback)
            } else {
                let gm = (split.delta_bar * lo_unstable).sqrt();
                if gm >= 1.0 || gm <= split.delta_bar {
                    fallback
                } else {
                    gm
                }
            }
        }
    }
}

/// Spectral projector onto the multipliers outside `B(0, radius)`, computed
/// as `I` minus the counterclockwise Riesz integral of the resolvent over
/// `|lambda| = radius`, by the trapezoid rule (spectrally accurate here).
pub fn riesz_projection(
    monodromy: &Monodromy,
    radius: f64,
    quadrature_points: usize,
) -> Result<DMatrix<f64>> {
    let m = &monodromy.matrix;
    let n = m.nrows();
    let eigs = m.complex_eigenvalues();
    let mut closest = f64::INFINITY;
    let mut closest_mod = 0.0;
    for e in eigs.iter() {
        let d = (e.norm() - radius).abs();
        if d < closest {
            closest = d;
            closest_mod = e.norm();
        }
    }
    if closest < 1e-8 {
        return Err(Error::RadiusOutsideGap {
            radius,
            closest: closest_mod,
        });
    }
    let mc = m.map(|v| Complex::new(v, 0.0));
    let npts = quadrature_points.max(32);
    let mut acc: DMatrix<Complex<f64>> = DMatrix::zeros(n, n);
    for j in 0..npts {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / npts as f64;
        let lambda = Complex::from_polar(radius, theta);
        let shifted = DMatrix::from_diagonal_element(n, n, lambda) - &mc;
        let lu = shifted.lu();
        let inv = lu
            .try_inverse()
            .ok_or(Error::SingularResolvent)?;
        acc += inv * lambda;
    }
    let interior = acc / Complex::new(npts as f64, 0.0);
    let max_imag = interior.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if max_imag > 1e-10 * (1.0 + interior.iter().map(|z| z.norm()).fold(0.0, f64::max)) {
        return Err(Error::ReorderFailure(format!(
            "Riesz projector has non-real part {max_imag:.3e}"
        )));
    }
    let interior_re = interior.map(|z| z.re);
    Ok(DMatrix::identity(n, n) - interior_re)
}

/// Projector at time `t`: `P(t) = Phi(t,0) P Phi(t,0)^{-1}`.
pub fn projector_at(
    system: &PeriodicSystem,
    split: &SpectralSplit,
    t: f64,
) -> Result<DMatrix<f64>> {
    let phi = transition(system, 0.0, t)?;
    let (smin, smax) = linalg::sv_range(&phi);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > 1e12 {
        return Err(Error::SingularTransition { cond });
    }
    let inv = phi
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularTransition { cond })?;
    Ok(&phi * &split.p * inv)
}

/// Dual projector `P~ = P^T`, the projector onto `P^* H1 = P^* H`.
pub fn dual_projector(split: &SpectralSplit) -> DMatrix<f64> {
    split.p.transpose()
}

/// Least-squares fit of `log || Phi(kT,0)|_{H2} ||` against `-rho k T` for
/// `k = 1..k_max`; returns the fitted constant and decay rate `(C_rho, rho)`,
/// with `rho` measured per unit time.
pub fn stable_decay_fit(split: &SpectralSplit, period: f64, k_max: usize) -> Result<(f64, f64)> {
    if split.n0 == split.n_x() {
        return Err(Error::TrivialStableSubspace);
    }
    let k_max = k_max.max(4);
    // Work with the restriction R = U2^T P U2: H2 is invariant, so
    // Phi(kT,0)|_{H2} is R^k in the U2 coordinates. Powering the full map
    // would re-amplify the unstable directions through roundoff.
    let restriction = split.basis_h2.transpose() * &split.poincare * &split.basis_h2;
    let period_norms: Vec<f64> = {
        let mut norms = Vec::with_capacity(k_max);
        let mut power = DMatrix::identity(restriction.nrows(), restriction.ncols());
        for _ in 1..=k_max {
            power = &restriction * power;
            let v = linalg::spectral_norm(&power);
            if v <= 0.0 {
                break;
            }
            norms.push(v);
        }
        norms
    };
    if period_norms.len() < 2 {
        return Err(Error::TrivialStableSubspace);
    }
    // linear regression of ln(norm_k) on k
    let n = period_norms.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, &v) in period_norms.iter().enumerate() {
        let x = (i + 1) as f64;
        let y = v.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    Ok((intercept.exp(), -slope / period))
}

/// Envelope constant `C` with `||Phi(kT,0)|_{H2}|| <= C * delta0^k` for all
/// sampled `k` (taken over a long horizon so the transient is covered).
pub fn stable_envelope_constant(split: &SpectralSplit, delta0: f64, k_max: usize) -> f64 {
    if split.n0 == split.n_x() {
        return 1.0;
    }
    let restriction = split.basis_h2.transpose() * &split.poincare * &split.basis_h2;
    let mut c = 1.0f64; // k = 0 term: orthonormal basis has norm 1
    let mut power = DMatrix::identity(restriction.nrows(), restriction.ncols());
    let mut denom = 1.0;
    for _ in 1..=k_max {
        power = &restriction * power;
        denom *= delta0;
        let norm = linalg::spectral_norm(&power);
        if norm == 0.0 {
            break;
        }
        c = c.max(norm / denom);
        // once well past the transient the ratio only shrinks
        if norm < 1e-12 * denom * c {
            break;
        }
    }
    c
}

/// Rows of the multiplier report CSV.
pub fn multiplier_csv(split: &SpectralSplit) -> String {
    let mut out = String::from("re,im,modulus,classification,algebraic_multiplicity\n");
    for m in &split.multipliers {
        let class = if m.borderline {
            "borderline"
        } else if m.unstable {
            "unstable"
        } else {
            "stable"
        };
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{},{}\n",
            m.value.re, m.value.im, m.modulus, class, m.multiplicity
        ));
    }
    out
}
