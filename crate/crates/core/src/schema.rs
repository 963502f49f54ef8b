//! Scenario file schema.
//!
//! A scenario is a JSON document
//! `{label, n_x, n_u, period, drift, input, control_subspace, grid}` where
//! coefficient objects carry a `kind` tag plus closed-form `params` or dense
//! per-node `samples`. Unknown keys are rejected.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coeffs::MatrixCurve;
use crate::error::{Error, Result};
use crate::system::{build_system, ControlSubspace, PeriodicSystem};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub label: String,
    pub n_x: usize,
    pub n_u: usize,
    pub period: f64,
    pub drift: CoeffSpec,
    pub input: CoeffSpec,
    pub control_subspace: SubspaceSpec,
    pub grid: GridSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub samples_per_period: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceSpec {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffSpec {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CosineParams {
    base: Vec<Vec<f64>>,
    modulation: Vec<Vec<f64>>,
    cycles: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwitchingParams {
    breaks: Vec<f64>,
    matrices: Vec<Vec<Vec<f64>>>,
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::ScenarioParse("matrix has no rows".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::ScenarioParse("matrix rows have inconsistent lengths".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn parse_params<T: for<'de> Deserialize<'de>>(spec: &CoeffSpec) -> Result<T> {
    let params = spec
        .params
        .as_ref()
        .ok_or_else(|| Error::ScenarioParse(format!("kind `{}` requires `params`", spec.kind)))?;
    serde_json::from_value(params.clone()).map_err(|e| Error::ScenarioParse(e.to_string()))
}

impl CoeffSpec {
    pub fn to_curve(&self) -> Result<MatrixCurve> {
        match self.kind.as_str() {
            "constant" => {
                let p: ConstantParams = parse_params(self)?;
                Ok(MatrixCurve::Constant(rows_to_matrix(&p.matrix)?))
            }
            "cosine" => {
                let p: CosineParams = parse_params(self)?;
                Ok(MatrixCurve::Cosine {
                    base: rows_to_matrix(&p.base)?,
                    modulation: rows_to_matrix(&p.modulation)?,
                    cycles: p.cycles,
                })
            }
            "switching" => {
                let p: SwitchingParams = parse_params(self)?;
                if p.breaks.len() != p.matrices.len() || p.breaks.is_empty() {
                    return Err(Error::ScenarioParse(
                        "switching coefficient needs matching `breaks` and `matrices`".into(),
                    ));
                }
                let values = p
                    .matrices
                    .iter()
                    .map(|m| rows_to_matrix(m))
                    .collect::<Result<Vec<_>>>()?;
                Ok(MatrixCurve::Switching {
                    breaks: p.breaks.clone(),
                    values,
                })
            }
            "samples" => {
                let samples = self.samples.as_ref().ok_or_else(|| {
                    Error::ScenarioParse("kind `samples` requires `samples`".into())
                })?;
                let values = samples
                    .iter()
                    .map(|m| rows_to_matrix(m))
                    .collect::<Result<Vec<_>>>()?;
                if values.len() < 2 {
                    return Err(Error::ScenarioParse(
                        "sampled coefficient needs at least two nodes".into(),
                    ));
                }
                Ok(MatrixCurve::Sampled { values })
            }
            other => Err(Error::ScenarioParse(format!(
                "unknown coefficient kind `{other}`"
            ))),
        }
    }

    pub fn from_curve(curve: &MatrixCurve) -> Result<Self> {
        match curve {
            MatrixCurve::Constant(m) => Ok(CoeffSpec {
                kind: "constant".into(),
                params: Some(serde_json::to_value(ConstantParams {
                    matrix: matrix_to_rows(m),
                })
                .expect("serializable")),
                samples: None,
            }),
            MatrixCurve::Cosine {
                base,
                modulation,
                cycles,
            } => Ok(CoeffSpec {
                kind: "cosine".into(),
                params: Some(serde_json::to_value(CosineParams {
                    base: matrix_to_rows(base),
                    modulation: matrix_to_rows(modulation),
                    cycles: *cycles,
                })
                .expect("serializable")),
                samples: None,
            }),
            MatrixCurve::Switching { breaks, values } => Ok(CoeffSpec {
                kind: "switching".into(),
                params: Some(serde_json::to_value(SwitchingParams {
                    breaks: breaks.clone(),
                    matrices: values.iter().map(matrix_to_rows).collect(),
                })
                .expect("serializable")),
                samples: None,
            }),
            MatrixCurve::Sampled { values } => Ok(CoeffSpec {
                kind: "samples".into(),
                params: None,
                samples: Some(values.iter().map(matrix_to_rows).collect()),
            }),
            MatrixCurve::Projected { .. } | MatrixCurve::ClosedLoop { .. } => Err(
                Error::ScenarioParse("derived coefficient curves are not serializable".into()),
            ),
        }
    }
}

/// Serialize a system + control subspace into the scenario schema.
pub fn to_scenario_file(
    system: &PeriodicSystem,
    z: &ControlSubspace,
) -> Result<ScenarioFile> {
    let control_subspace = match z {
        ControlSubspace::Full => SubspaceSpec {
            kind: "full".into(),
            basis: None,
        },
        ControlSubspace::Basis(b) => SubspaceSpec {
            kind: "basis".into(),
            basis: Some(matrix_to_rows(b)),
        },
    };
    Ok(ScenarioFile {
        label: system.label.clone(),
        n_x: system.n_x,
        n_u: system.n_u,
        period: system.period,
        drift: CoeffSpec::from_curve(system.drift_curve())?,
        input: CoeffSpec::from_curve(system.input_curve())?,
        control_subspace,
        grid: GridSpec {
            samples_per_period: system.grid.samples_per_period(),
        },
    })
}

/// Parse and validate a scenario document.
pub fn from_scenario_str(text: &str) -> Result<(PeriodicSystem, ControlSubspace)> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| Error::ScenarioParse(e.to_string()))?;
    let drift = file.drift.to_curve()?;
    let input = file.input.to_curve()?;
    let system = build_system(
        drift,
        input,
        file.period,
        file.grid.samples_per_period,
        file.label.clone(),
    )?;
    if system.n_x != file.n_x || system.n_u != file.n_u {
        return Err(Error::ScenarioParse(format!(
            "declared dimensions ({}, {}) disagree with coefficients ({}, {})",
            file.n_x, file.n_u, system.n_x, system.n_u
        )));
    }
    let z = match file.control_subspace.kind.as_str() {
        "full" => ControlSubspace::Full,
        "basis" => {
            let rows = file.control_subspace.basis.as_ref().ok_or_else(|| {
                Error::ScenarioParse("control_subspace kind `basis` requires `basis`".into())
            })?;
            ControlSubspace::basis(rows_to_matrix(rows)?)?
        }
        other => {
            return Err(Error::ScenarioParse(format!(
                "unknown control_subspace kind `{other}`"
            )))
        }
    };
    z.validate(system.n_u)?;
    Ok((system, z))
}

/// Emit the scenario document with deterministic formatting.
pub fn to_scenario_string(system: &PeriodicSystem, z: &ControlSubspace) -> Result<String> {
    let file = to_scenario_file(system, z)?;
    crate::jsonfmt::to_string(&file).map_err(|e| Error::ScenarioParse(e.to_string()))
}

/// Feedback-law file: gains are stored row-major per node, in the
/// coordinates of the control basis.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawFile {
    pub period: f64,
    pub grid_nodes: Vec<f64>,
    pub gains: Vec<Vec<f64>>,
    pub control_basis: Vec<Vec<f64>>,
    pub provenance: String,
    pub epsilon: Option<f64>,
    #[serde(rename = "N")]
    pub horizon_periods: Option<usize>,
    pub interpolation: String,
}

use crate::synthesis::{FeedbackLaw, GainCurve, GainValues, Provenance};

fn flatten_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn to_law_file(law: &FeedbackLaw) -> LawFile {
    let (grid_nodes, gains, interpolation) = match &law.gains.values {
        GainValues::Sampled(values) => {
            let m = values.len() - 1;
            let h = law.period / m as f64;
            let nodes = (0..=m)
                .map(|i| if i == m { law.period } else { h * i as f64 })
                .collect();
            (
                nodes,
                values.iter().map(flatten_row_major).collect(),
                "piecewise-linear".to_string(),
            )
        }
        GainValues::PiecewiseConstant { breaks, values } => (
            breaks.clone(),
            values.iter().map(flatten_row_major).collect(),
            "piecewise-constant".to_string(),
        ),
    };
    LawFile {
        period: law.period,
        grid_nodes,
        gains,
        control_basis: matrix_to_rows(&law.z_basis),
        provenance: law.provenance.as_str().to_string(),
        epsilon: law.epsilon,
        horizon_periods: law.horizon_periods,
        interpolation,
    }
}

pub fn to_law_string(law: &FeedbackLaw) -> Result<String> {
    crate::jsonfmt::to_string(&to_law_file(law)).map_err(|e| Error::ScenarioParse(e.to_string()))
}

pub fn from_law_str(text: &str) -> Result<FeedbackLaw> {
    let file: LawFile =
        serde_json::from_str(text).map_err(|e| Error::ScenarioParse(e.to_string()))?;
    let z_basis = rows_to_matrix(&file.control_basis)?;
    let m0 = z_basis.ncols();
    if file.gains.is_empty() {
        return Err(Error::ScenarioParse("law has no gain samples".into()));
    }
    let flat_len = file.gains[0].len();
    if m0 == 0 || flat_len % m0 != 0 {
        return Err(Error::ScenarioParse(
            "gain length is not a multiple of the control basis dimension".into(),
        ));
    }
    let n_x = flat_len / m0;
    let unflatten = |flat: &Vec<f64>| -> Result<DMatrix<f64>> {
        if flat.len() != m0 * n_x {
            return Err(Error::ScenarioParse("inconsistent gain sample lengths".into()));
        }
        Ok(DMatrix::from_fn(m0, n_x, |i, j| flat[i * n_x + j]))
    };
    let values = file
        .gains
        .iter()
        .map(unflatten)
        .collect::<Result<Vec<_>>>()?;
    let gains = match file.interpolation.as_str() {
        "piecewise-linear" => {
            if file.grid_nodes.len() != values.len() || values.len() < 2 {
                return Err(Error::ScenarioParse(
                    "sampled law needs one gain per grid node".into(),
                ));
            }
            let h = file.period / (values.len() - 1) as f64;
            for (i, &t) in file.grid_nodes.iter().enumerate() {
                if (t - h * i as f64).abs() > 1e-9 * file.period {
                    return Err(Error::ScenarioParse(
                        "sampled law grid nodes must be uniform over [0, period]".into(),
                    ));
                }
            }
            GainValues::Sampled(values)
        }
        "piecewise-constant" => {
            if file.grid_nodes.len() != values.len()
                || values.is_empty()
                || file.grid_nodes.first() != Some(&0.0)
                || file.grid_nodes.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(Error::ScenarioParse(
                    "piecewise-constant law needs matching, increasing breaks starting at 0"
                        .into(),
                ));
            }
            GainValues::PiecewiseConstant {
                breaks: file.grid_nodes.clone(),
                values,
            }
        }
        other => {
            return Err(Error::ScenarioParse(format!(
                "unknown interpolation `{other}`"
            )))
        }
    };
    let provenance = Provenance::parse(&file.provenance).ok_or_else(|| {
        Error::ScenarioParse(format!("unknown provenance `{}`", file.provenance))
    })?;
    let law = FeedbackLaw {
        period: file.period,
        z_basis,
        gains: GainCurve {
            period: file.period,
            values: gains,
        },
        provenance,
        epsilon: file.epsilon,
        horizon_periods: file.horizon_periods,
    };
    law.validate()?;
    Ok(law)
}
