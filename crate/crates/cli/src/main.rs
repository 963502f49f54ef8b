//! `pfstab` — analyze, certify, synthesize, verify and simulate periodic
//! feedback stabilization for linear time-periodic systems.
//!
//! Exit codes form a total contract:
//!   0  success
//!   1  parse / IO / incompatibility error
//!   2  numerical failure
//!   3  borderline Floquet multipliers (analysis warning or synthesis refusal)
//!   4  not stabilizable (certificates false / closed loop unstable)
//!   5  certificate disagreement or undecidable margins
//!   6  synthesis verification failure

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use pfstab::attainability::{certify_all, DEFAULT_RANK_TOL};
use pfstab::coeffs::Side;
use pfstab::error::Error;
use pfstab::propagator::{monodromy, transition_samples};
use pfstab::scenarios;
use pfstab::schema;
use pfstab::spectral::{multiplier_csv, split};
use pfstab::synthesis::{closed_loop, synthesize, verify_law, SynthesisOptions};
use pfstab::system::{ControlSubspace, PeriodicSystem};

#[derive(Parser)]
#[command(name = "pfstab", version, about = "periodic feedback stabilization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Relative rank tolerance for certificate margins.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    /// Unit-circle margin: |lambda| >= 1 - margin is classified unstable.
    #[arg(long, default_value_t = 0.0)]
    unit_margin: f64,
    /// Override the number of integration steps per period.
    #[arg(long)]
    samples_per_period: Option<usize>,
}

#[derive(Args, Clone)]
struct RiccatiOpts {
    /// Control-cost weight for the finite-horizon stage (default eps0/2).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Horizon (in periods) of the finite-horizon stage (default N0).
    #[arg(long = "horizon-N")]
    horizon_n: Option<usize>,
    /// Relative fixed-point tolerance of the periodic Riccati iteration.
    #[arg(long, default_value_t = 1e-10)]
    riccati_tol: f64,
    /// Maximum periodic Riccati sweeps.
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    /// Proceed even when multipliers sit on the borderline band.
    #[arg(long, default_value_t = false)]
    allow_borderline: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Floquet analysis: multipliers and the unstable/stable splitting.
    Analyze(CommonOpts),
    /// Evaluate the three equivalent stabilizability certificates.
    Certify(CommonOpts),
    /// Construct a T-periodic stabilizing feedback law.
    Synthesize {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        riccati: RiccatiOpts,
    },
    /// Verify a feedback law by closed-loop Floquet analysis.
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        /// Feedback-law JSON file.
        #[arg(long)]
        law: PathBuf,
    },
    /// Simulate the open or closed loop and write a trajectory CSV.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Feedback-law JSON file (omit for the open loop).
        #[arg(long)]
        law: Option<PathBuf>,
        /// Initial state as comma-separated values (default: first canonical vector).
        #[arg(long)]
        initial: Option<String>,
        /// Horizon in law periods (system periods for the open loop).
        #[arg(long, default_value_t = 6)]
        periods: usize,
    },
    /// Emit generator scenarios as JSON files.
    Scenario {
        /// One of: switching, stable-scalar, heat-stable-spectral, heat-stable-fd,
        /// heat-cosine-spectral, heat-counterexample, random, all.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Modes for heat-counterexample (>= 3).
        #[arg(long, default_value_t = 3)]
        modes: usize,
        /// Period for heat-counterexample.
        #[arg(long, default_value_t = 0.1)]
        period: f64,
        /// State dimension for random scenarios.
        #[arg(long, default_value_t = 4)]
        nx: usize,
        /// Input dimension for random scenarios.
        #[arg(long, default_value_t = 2)]
        nu: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        unstable_target: usize,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::ScenarioParse(_)
        | Error::DimensionMismatch(_)
        | Error::InvalidPeriod(_)
        | Error::GridTooCoarse(_)
        | Error::JumpOffGrid { .. }
        | Error::NotPeriodic { .. }
        | Error::BackwardSpan { .. }
        | Error::ControlCoverage { .. }
        | Error::ControlOutsideSubspace { .. }
        | Error::BasisNotOrthonormal { .. }
        | Error::BasisTooLarge { .. }
        | Error::InvalidWindow { .. }
        | Error::PeriodMismatch { .. } => 1,
        Error::BorderlineRefusal => 3,
        Error::NotStabilizable { .. } => 4,
        Error::Undecidable { .. } => 5,
        Error::SynthesisVerificationFailed { .. } => 6,
        _ => 2,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code_for(&e))
}

fn io_fail(e: std::io::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(1)
}

#[derive(Serialize)]
struct Tolerances {
    rank_tol: f64,
    unit_margin: f64,
    samples_per_period: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    riccati_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon_n: Option<usize>,
}

impl Tolerances {
    fn new(common: &CommonOpts, system: &PeriodicSystem) -> Self {
        Tolerances {
            rank_tol: common.rank_tol,
            unit_margin: common.unit_margin,
            samples_per_period: system.grid.samples_per_period(),
            riccati_tol: None,
            max_iters: None,
            epsilon: None,
            horizon_n: None,
        }
    }
}

#[derive(Serialize)]
struct SplitReport {
    label: String,
    n: usize,
    n0: usize,
    delta_bar: f64,
    borderline: bool,
    monodromy_witness: f64,
    tolerances: Tolerances,
}

#[derive(Serialize)]
struct Margins {
    b: Option<f64>,
    c: Option<f64>,
    d: Option<f64>,
}

#[derive(Serialize)]
struct BorderlineFlag {
    re: f64,
    im: f64,
    modulus: f64,
}

#[derive(Serialize)]
struct CertificateReport {
    verdict_b: bool,
    verdict_c: bool,
    verdict_d: bool,
    margins: Margins,
    n0: usize,
    delta_bar: f64,
    borderline_flags: Vec<BorderlineFlag>,
    rank_tolerance: f64,
    agreement: bool,
    undecidable: bool,
    tolerances: Tolerances,
}

#[derive(Serialize)]
struct SpectrumEntry {
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct ClosedLoopReportFile {
    law_period: f64,
    spectral_radius: f64,
    stable: bool,
    decay_m: f64,
    decay_delta: f64,
    spectrum: Vec<SpectrumEntry>,
    tolerances: Tolerances,
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn load_scenario(common: &CommonOpts) -> Result<(PeriodicSystem, ControlSubspace), ExitCode> {
    let text = std::fs::read_to_string(&common.scenario).map_err(io_fail)?;
    let (mut system, z) = schema::from_scenario_str(&text).map_err(fail)?;
    if let Some(m) = common.samples_per_period {
        let curve_d = system.drift_curve().clone();
        let curve_i = system.input_curve().clone();
        system = pfstab::system::build_system(curve_d, curve_i, system.period, m, system.label)
            .map_err(fail)?;
    }
    Ok((system, z))
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), ExitCode> {
    std::fs::create_dir_all(dir).map_err(io_fail)?;
    std::fs::write(dir.join(name), contents).map_err(io_fail)
}

fn json_string<T: Serialize>(value: &T) -> Result<String, ExitCode> {
    pfstab::jsonfmt::to_string(value).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn borderline_flags(sp: &pfstab::SpectralSplit) -> Vec<BorderlineFlag> {
    sp.multipliers
        .iter()
        .filter(|m| m.borderline)
        .map(|m| BorderlineFlag {
            re: m.value.re,
            im: m.value.im,
            modulus: m.modulus,
        })
        .collect()
}

fn run_analyze(common: &CommonOpts) -> Result<u8, ExitCode> {
    validate_overrides(common, None)?;
    let (system, _z) = load_scenario(common)?;
    let mono = monodromy(&system, 0.0).map_err(fail)?;
    let sp = split(&mono, common.unit_margin).map_err(fail)?;
    write_out(&common.out, "multipliers.csv", &multiplier_csv(&sp))?;
    let report = SplitReport {
        label: system.label.clone(),
        n: sp.n,
        n0: sp.n0,
        delta_bar: sp.delta_bar,
        borderline: sp.borderline,
        monodromy_witness: mono.convergence_witness,
        tolerances: Tolerances::new(common, &system),
    };
    write_out(&common.out, "split.json", &json_string(&report)?)?;
    Ok(if sp.borderline { 3 } else { 0 })
}

fn run_certify(common: &CommonOpts) -> Result<u8, ExitCode> {
    validate_overrides(common, None)?;
    let (system, z) = load_scenario(common)?;
    let mono = monodromy(&system, 0.0).map_err(fail)?;
    let sp = split(&mono, common.unit_margin).map_err(fail)?;
    let cert = certify_all(&system, &z, &sp, common.rank_tol).map_err(fail)?;
    let report = CertificateReport {
        verdict_b: cert.verdict_b,
        verdict_c: cert.verdict_c,
        verdict_d: cert.verdict_d,
        margins: Margins {
            b: finite_or_none(cert.margin_b),
            c: finite_or_none(cert.margin_c),
            d: finite_or_none(cert.margin_d),
        },
        n0: cert.n0,
        delta_bar: cert.delta_bar,
        borderline_flags: borderline_flags(&sp),
        rank_tolerance: cert.rank_tolerance,
        agreement: cert.agreement,
        undecidable: cert.undecidable,
        tolerances: Tolerances::new(common, &system),
    };
    write_out(&common.out, "certificate.json", &json_string(&report)?)?;
    Ok(if cert.undecidable || !cert.agreement {
        5
    } else if cert.verdict_b {
        0
    } else {
        4
    })
}

fn closed_loop_report_file(
    report: &pfstab::ClosedLoopReport,
    tolerances: Tolerances,
) -> ClosedLoopReportFile {
    ClosedLoopReportFile {
        law_period: report.law_period,
        spectral_radius: report.spectral_radius,
        stable: report.stable,
        decay_m: report.decay_m,
        decay_delta: report.decay_delta,
        spectrum: report
            .spectrum
            .iter()
            .map(|z| SpectrumEntry { re: z.re, im: z.im })
            .collect(),
        tolerances,
    }
}

fn validate_overrides(common: &CommonOpts, riccati: Option<&RiccatiOpts>) -> Result<(), ExitCode> {
    let bad = |msg: &str| -> Result<(), ExitCode> {
        eprintln!("error: {msg}");
        Err(ExitCode::from(1))
    };
    if !(common.rank_tol > 0.0) {
        return bad("--rank-tol must be positive");
    }
    if common.unit_margin < 0.0 {
        return bad("--unit-margin must be non-negative");
    }
    if let Some(r) = riccati {
        if let Some(e) = r.epsilon {
            if !(e > 0.0) {
                return bad("--epsilon must be positive");
            }
        }
        if let Some(n) = r.horizon_n {
            if n == 0 {
                return bad("--horizon-N must be at least 1");
            }
        }
        if !(r.riccati_tol > 0.0) {
            return bad("--riccati-tol must be positive");
        }
        if r.max_iters == 0 {
            return bad("--max-iters must be at least 1");
        }
    }
    Ok(())
}

fn run_synthesize(common: &CommonOpts, riccati: &RiccatiOpts) -> Result<u8, ExitCode> {
    validate_overrides(common, Some(riccati))?;
    let (system, z) = load_scenario(common)?;
    let opts = SynthesisOptions {
        rank_tol: common.rank_tol,
        unit_margin: common.unit_margin,
        riccati_tol: riccati.riccati_tol,
        max_iters: riccati.max_iters,
        epsilon: riccati.epsilon,
        horizon: riccati.horizon_n,
        allow_borderline: riccati.allow_borderline,
    };
    let outcome = synthesize(&system, &z, &opts).map_err(fail)?;
    write_out(
        &common.out,
        "law.json",
        &schema::to_law_string(&outcome.law).map_err(fail)?,
    )?;
    let mut tol = Tolerances::new(common, &system);
    tol.riccati_tol = Some(riccati.riccati_tol);
    tol.max_iters = Some(riccati.max_iters);
    tol.epsilon = outcome.epsilon_used;
    tol.horizon_n = outcome.horizon_used;
    let report = closed_loop_report_file(&outcome.report, tol);
    write_out(&common.out, "report.json", &json_string(&report)?)?;
    Ok(if outcome.report.spectral_radius < 1.0 {
        0
    } else {
        6
    })
}

fn run_verify(common: &CommonOpts, law_path: &Path) -> Result<u8, ExitCode> {
    let (system, _z) = load_scenario(common)?;
    let law_text = std::fs::read_to_string(law_path).map_err(io_fail)?;
    let law = schema::from_law_str(&law_text).map_err(fail)?;
    let report = verify_law(&system, &law).map_err(fail)?;
    let file = closed_loop_report_file(&report, Tolerances::new(common, &system));
    write_out(&common.out, "report.json", &json_string(&file)?)?;
    Ok(if report.stable { 0 } else { 4 })
}

fn run_simulate(
    common: &CommonOpts,
    law_path: Option<&Path>,
    initial: Option<&str>,
    periods: usize,
) -> Result<u8, ExitCode> {
    let (system, z) = load_scenario(common)?;
    let law = match law_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_fail)?;
            Some(schema::from_law_str(&text).map_err(fail)?)
        }
        None => None,
    };
    let h = match initial {
        Some(text) => {
            let vals: Result<Vec<f64>, _> =
                text.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| {
                eprintln!("error: invalid --initial: {e}");
                ExitCode::from(1)
            })?;
            if vals.len() != system.n_x {
                eprintln!(
                    "error: initial state has {} entries, state dimension is {}",
                    vals.len(),
                    system.n_x
                );
                return Err(ExitCode::from(1));
            }
            DVector::from_vec(vals)
        }
        None => {
            let mut e1 = DVector::zeros(system.n_x);
            e1[0] = 1.0;
            e1
        }
    };
    // control columns: the law's coordinates when closing the loop, the
    // scenario subspace dimension (all-zero columns) for the open loop
    let m0 = match &law {
        Some(law) => law.gains.shape().0,
        None => z.dim(system.n_u),
    };
    let (sim_system, gain_curve) = match &law {
        Some(law) => {
            let cl = closed_loop(&system, law).map_err(fail)?;
            (cl, Some(law.gains.clone()))
        }
        None => (system.clone(), None),
    };
    let horizon = periods as f64 * sim_system.period;
    let (times, samples) = transition_samples(&sim_system, 0.0, horizon).map_err(fail)?;
    let mut csv = String::new();
    csv.push_str("t");
    for i in 1..=system.n_x {
        csv.push_str(&format!(",y{i}"));
    }
    csv.push_str(",norm");
    for i in 1..=m0 {
        csv.push_str(&format!(",u{i}"));
    }
    csv.push('\n');
    for (t, phi) in times.iter().zip(samples.iter()) {
        let y = phi * &h;
        csv.push_str(&format!("{:.16e}", t));
        for i in 0..system.n_x {
            csv.push_str(&format!(",{:.16e}", y[i]));
        }
        csv.push_str(&format!(",{:.16e}", y.norm()));
        match &gain_curve {
            Some(g) => {
                let u = g.eval(*t, Side::Right) * &y;
                for i in 0..m0 {
                    csv.push_str(&format!(",{:.16e}", u[i]));
                }
            }
            None => {
                for _ in 0..m0 {
                    csv.push_str(",0.0000000000000000e0");
                }
            }
        }
        csv.push('\n');
    }
    write_out(&common.out, "trajectory.csv", &csv)?;
    Ok(0)
}

fn run_scenario(
    kind: &str,
    out: &Path,
    modes: usize,
    period: f64,
    nx: usize,
    nu: usize,
    seed: u64,
    unstable_target: usize,
) -> Result<u8, ExitCode> {
    let write_scenario =
        |name: &str, system: &PeriodicSystem, z: &ControlSubspace| -> Result<(), ExitCode> {
            let text = schema::to_scenario_string(system, z).map_err(fail)?;
            write_out(out, &format!("{name}.json"), &text)
        };
    match kind {
        "all" => {
            for sc in scenarios::shipped().map_err(fail)? {
                write_scenario(sc.name, &sc.system, &sc.control)?;
            }
            // include the hand-built stabilizing law for the switching system
            let (_, alternating_k) = scenarios::switching_scalar().map_err(fail)?;
            write_out(
                out,
                "switching-alternating-law.json",
                &schema::to_law_string(&alternating_k).map_err(fail)?,
            )?;
        }
        "switching" => {
            let (system, alternating_k) = scenarios::switching_scalar().map_err(fail)?;
            write_scenario("switching", &system, &ControlSubspace::Full)?;
            write_out(
                out,
                "switching-alternating-law.json",
                &schema::to_law_string(&alternating_k).map_err(fail)?,
            )?;
        }
        "heat-counterexample" => {
            let system = scenarios::counterexample_h1state(modes, period).map_err(fail)?;
            write_scenario(
                &format!("heat-counterexample-{modes}"),
                &system,
                &ControlSubspace::Full,
            )?;
        }
        "random" => {
            let system =
                scenarios::random_periodic(nx, nu, seed, unstable_target).map_err(fail)?;
            write_scenario(
                &format!("random-{nx}x{nu}-seed{seed}"),
                &system,
                &ControlSubspace::Full,
            )?;
        }
        name => {
            let all = scenarios::shipped().map_err(fail)?;
            let sc = all.iter().find(|s| s.name == name).ok_or_else(|| {
                eprintln!("error: unknown scenario kind `{name}`");
                ExitCode::from(1)
            })?;
            write_scenario(sc.name, &sc.system, &sc.control)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(common) => run_analyze(common),
        Command::Certify(common) => run_certify(common),
        Command::Synthesize { common, riccati } => run_synthesize(common, riccati),
        Command::Verify { common, law } => run_verify(common, law),
        Command::Simulate {
            common,
            law,
            initial,
            periods,
        } => run_simulate(common, law.as_deref(), initial.as_deref(), *periods),
        Command::Scenario {
            kind,
            out,
            modes,
            period,
            nx,
            nu,
            seed,
            unstable_target,
        } => run_scenario(kind, out, *modes, *period, *nx, *nu, *seed, *unstable_target),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(code) => code,
    }
}
