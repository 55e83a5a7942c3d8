//! JSON scenario files for all four backends.
//!
//! ```json
//! {
//!   "id": "four-state",
//!   "backend": "classical",
//!   "event": [0],
//!   "tolerance": 1e-9,
//!   "model": {
//!     "prior": ["1/4", "1/4", "1/4", "1/4"],
//!     "alice": [0, 0, 1, 1],
//!     "bob": [0, 0, 0, 1],
//!     "measurement": [0, 1, 1, 0]
//!   }
//! }
//! ```
//!
//! `event` lists outcome indices of the third (event) axis; for the
//! classical backend these are cells of the `measurement` partition.
//! Probabilities may be JSON numbers or exact rationals written as strings
//! (`"1/3"`, `"0.25"`); a table or prior given entirely as strings is
//! evaluated in exact arithmetic. Complex entries are numbers or `[re, im]`
//! pairs, matrices are lists of rows.
//!
//! Model payloads:
//!
//! * `table`: `{"shape": [ni, nj, nk], "values": [...]}` in row-major order.
//! * `classical`: `prior` plus per-state cell indices `alice`, `bob`, `measurement`.
//! * `quantum`: `{"state": M, "instruments": {"a": I, "b": I, "e": I}, "order": "ABE" | "AEB"}`
//!   or `{"paper_example": {"theta", "phi", "q", "r", "state"?}}`. An instrument
//!   is a list of branches, each a list of Kraus matrices, or
//!   `{"projective": [vectors]}`.
//! * `process`: `{"labs": {"a": [din, dout], ...}, "instruments": {...}}` and
//!   either `"w"` (dense matrix or `{"entries": [[row, col, z], ...]}`) or
//!   `"state"` with `"orders": [{"order": "BAE", "weight": 0.5}, ...]`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::{embed_classical, ClassicalModel, Partition};
use crate::error::Error;
use crate::linalg::{c, CMatrix, SparseMatrix};
use crate::probability::{Event, JointDistribution, OutcomeSpace, Prob, DEFAULT_TOL};
use crate::process::{self, Lab, LabDims, ProcessMatrix};
use crate::quantum::{self, CpMap, DensityMatrix, Instrument, Order, QuantumScenario, INSTRUMENT_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("malformed field `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("invalid `{field}`: {message}")]
    Validation {
        field: String,
        message: String,
        diagnostics: Vec<String>,
    },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, err: impl fmt::Display) -> Self {
        Self::Validation {
            field: field.into(),
            message: err.to_string(),
            diagnostics: Vec::new(),
        }
    }

    /// Syntax and schema errors, as opposed to semantic validation failures.
    pub fn is_parse_error(&self) -> bool {
        !matches!(self, Self::Validation { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Table,
    Classical,
    Quantum,
    Process,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::Table, Backend::Classical, Backend::Quantum, Backend::Process];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Table => "table",
            Backend::Classical => "classical",
            Backend::Quantum => "quantum",
            Backend::Process => "process",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown backend `{s}` (expected table, classical, quantum or process)"))
    }
}

/// A joint table in floating-point or exact arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub enum Joint {
    Float(JointDistribution<f64>),
    Exact(JointDistribution<BigRational>),
}

impl Joint {
    pub fn to_f64(&self) -> JointDistribution<f64> {
        match self {
            Joint::Float(p) => p.clone(),
            Joint::Exact(p) => p.to_f64(),
        }
    }

    pub fn space(&self) -> &OutcomeSpace {
        match self {
            Joint::Float(p) => p.space(),
            Joint::Exact(p) => p.space(),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Joint::Exact(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classical {
    Float(ClassicalModel<f64>),
    Exact(ClassicalModel<BigRational>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Table(Joint),
    Classical(Classical),
    Quantum(QuantumScenario),
    Process {
        w: ProcessMatrix,
        instruments: [Instrument; 3],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub backend: Backend,
    pub tol: f64,
    pub seed: u64,
    pub event: Event,
    pub model: Model,
}

impl Scenario {
    /// The joint outcome table of the scenario, computed by its backend.
    pub fn joint(&self) -> Result<Joint, Error> {
        Ok(match &self.model {
            Model::Table(j) => j.clone(),
            Model::Classical(Classical::Float(m)) => Joint::Float(embed_classical(m)?.0),
            Model::Classical(Classical::Exact(m)) => Joint::Exact(embed_classical(m)?.0),
            Model::Quantum(q) => Joint::Float(quantum::sequential_joint(q)?),
            Model::Process { w, instruments: [a, b, e] } => Joint::Float(process::process_joint(w, a, b, e)?),
        })
    }
}

/// A probability given as a JSON number or as exact text.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Float(f64),
    Text(String),
}

/// Parses `"a/b"`, integers and finite decimals such as `"0.125"` exactly; exponents are not accepted.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        return (!d.is_zero()).then(|| BigRational::new(n, d));
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|ch| ch.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{whole}{frac}").parse().ok()?;
    let value = BigRational::new(digits, num_traits::pow(BigInt::from(10), frac.len()));
    Some(if neg { -value } else { value })
}

enum Numbers {
    Float(Vec<f64>),
    Exact(Vec<BigRational>),
}

fn numbers(field: &str, raw: &[Scalar]) -> Result<Numbers, ScenarioError> {
    let all_text = !raw.is_empty() && raw.iter().all(|s| matches!(s, Scalar::Text(_)));
    let mut exact = Vec::with_capacity(raw.len());
    let mut float = Vec::with_capacity(raw.len());
    for (n, s) in raw.iter().enumerate() {
        match s {
            Scalar::Float(x) => float.push(*x),
            Scalar::Text(t) => {
                let q = parse_rational(t)
                    .ok_or_else(|| ScenarioError::invalid(format!("{field}[{n}]"), format!("`{t}` is not a rational number")))?;
                float.push(Prob::to_f64(&q));
                exact.push(q);
            }
        }
    }
    Ok(if all_text { Numbers::Exact(exact) } else { Numbers::Float(float) })
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum ComplexJson {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexJson> for Complex64 {
    fn from(z: ComplexJson) -> Self {
        match z {
            ComplexJson::Real(x) => c(x, 0.0),
            ComplexJson::Pair([re, im]) => c(re, im),
        }
    }
}

type MatrixJson = Vec<Vec<ComplexJson>>;

fn matrix(field: &str, rows: &MatrixJson) -> Result<CMatrix, ScenarioError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(ScenarioError::invalid(field, "matrix rows must be nonempty and of equal length"));
    }
    Ok(CMatrix::from_fn(n, m, |r, s| rows[r][s].into()))
}

fn vector(v: &[ComplexJson]) -> Vec<Complex64> {
    v.iter().map(|&z| z.into()).collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    id: Option<String>,
    backend: Backend,
    event: Vec<usize>,
    #[serde(default)]
    tolerance: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
    model: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableJson {
    shape: [usize; 3],
    values: Vec<Scalar>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassicalJson {
    prior: Vec<Scalar>,
    alice: Vec<usize>,
    bob: Vec<usize>,
    measurement: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InstrumentJson {
    Projective { projective: Vec<Vec<ComplexJson>> },
    Kraus(Vec<Vec<MatrixJson>>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstrumentsJson {
    a: InstrumentJson,
    b: InstrumentJson,
    e: InstrumentJson,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleJson {
    theta: f64,
    phi: f64,
    q: f64,
    r: f64,
    #[serde(default)]
    state: Option<MatrixJson>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QuantumJson {
    Example {
        paper_example: ExampleJson,
    },
    Explicit {
        state: MatrixJson,
        instruments: InstrumentsJson,
        order: Order,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabsJson {
    a: [usize; 2],
    b: [usize; 2],
    e: [usize; 2],
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProcessWJson {
    Sparse { entries: Vec<(usize, usize, ComplexJson)> },
    Dense(MatrixJson),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderWeightJson {
    order: String,
    weight: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessJson {
    labs: LabsJson,
    instruments: InstrumentsJson,
    #[serde(default)]
    w: Option<ProcessWJson>,
    #[serde(default)]
    state: Option<MatrixJson>,
    #[serde(default)]
    orders: Option<Vec<OrderWeightJson>>,
}

fn typed<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T, ScenarioError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { prefix.to_string() } else { format!("{prefix}.{inner}") };
        ScenarioError::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

/// Parses and fully validates a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_named(text, "scenario")
}

/// As [`parse_scenario`], using `default_id` when the file has no `id`.
pub fn parse_scenario_named(text: &str, default_id: &str) -> Result<Scenario, ScenarioError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let raw: RawScenario = serde_path_to_error::deserialize(value).map_err(|e| ScenarioError::Schema {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })?;
    let tol = raw.tolerance.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(ScenarioError::invalid("tolerance", format!("{tol} is not in (0, 1)")));
    }
    let (model, space) = match raw.backend {
        Backend::Table => table_model(typed(raw.model, "model")?, tol)?,
        Backend::Classical => classical_model(typed(raw.model, "model")?, &raw.event, tol)?,
        Backend::Quantum => quantum_model(typed(raw.model, "model")?, &raw.event)?,
        Backend::Process => process_model(typed(raw.model, "model")?, raw.seed.unwrap_or(0))?,
    };
    let event = Event::new(&space, raw.event.iter().copied()).map_err(|e| ScenarioError::invalid("event", e))?;
    Ok(Scenario {
        id: raw.id.unwrap_or_else(|| default_id.to_string()),
        backend: raw.backend,
        tol,
        seed: raw.seed.unwrap_or(0),
        event,
        model,
    })
}

fn table_model(t: TableJson, tol: f64) -> Result<(Model, OutcomeSpace), ScenarioError> {
    let [ni, nj, nk] = t.shape;
    let space = OutcomeSpace::new(ni, nj, nk).map_err(|e| ScenarioError::invalid("model.shape", e))?;
    let joint = match numbers("model.values", &t.values)? {
        Numbers::Float(v) => Joint::Float(JointDistribution::new(space.clone(), v, tol).map_err(|e| ScenarioError::invalid("model.values", e))?),
        Numbers::Exact(v) => Joint::Exact(JointDistribution::new(space.clone(), v, tol).map_err(|e| ScenarioError::invalid("model.values", e))?),
    };
    Ok((Model::Table(joint), space))
}

fn classical_model(m: ClassicalJson, event: &[usize], tol: f64) -> Result<(Model, OutcomeSpace), ScenarioError> {
    let part = |field: &str, cells: Vec<usize>| {
        Partition::from_assignment(cells).map_err(|e| ScenarioError::invalid(format!("model.{field}"), e))
    };
    let (a, b, e) = (part("alice", m.alice)?, part("bob", m.bob)?, part("measurement", m.measurement)?);
    let space = OutcomeSpace::new(a.num_cells(), b.num_cells(), e.num_cells()).map_err(|err| ScenarioError::invalid("model", err))?;
    let cells = event.iter().copied();
    let model = match numbers("model.prior", &m.prior)? {
        Numbers::Float(p) => Classical::Float(ClassicalModel::new(p, a, b, e, cells, tol).map_err(|err| ScenarioError::invalid("model", err))?),
        Numbers::Exact(p) => Classical::Exact(ClassicalModel::new(p, a, b, e, cells, tol).map_err(|err| ScenarioError::invalid("model", err))?),
    };
    Ok((Model::Classical(model), space))
}

fn instrument(field: &str, raw: &InstrumentJson) -> Result<Instrument, ScenarioError> {
    let branches: Vec<CpMap> = match raw {
        InstrumentJson::Projective { projective } => projective
            .iter()
            .map(|v| CpMap::projector(crate::linalg::projector(&vector(v))))
            .collect::<Result<_, _>>()
            .map_err(|e| ScenarioError::invalid(field, e))?,
        InstrumentJson::Kraus(branches) => {
            let mut out = Vec::with_capacity(branches.len());
            for (n, ks) in branches.iter().enumerate() {
                let mats = ks
                    .iter()
                    .enumerate()
                    .map(|(m, k)| matrix(&format!("{field}[{n}][{m}]"), k))
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(CpMap::new(mats).map_err(|e| ScenarioError::invalid(format!("{field}[{n}]"), e))?);
            }
            out
        }
    };
    let unchecked = Instrument::new_unchecked(branches).map_err(|e| ScenarioError::invalid(field, e))?;
    let diag = quantum::validate_instrument(&unchecked, INSTRUMENT_TOL);
    if !diag.passes {
        let mut diagnostics = vec![format!("trace-preservation deviation {:e}", diag.tp_deviation)];
        diagnostics.extend(
            diag.choi_min_eigenvalues
                .iter()
                .enumerate()
                .map(|(n, l)| format!("branch {n}: minimum Choi eigenvalue {l:e}")),
        );
        return Err(ScenarioError::Validation {
            field: field.into(),
            message: "instrument failed validation".into(),
            diagnostics,
        });
    }
    Ok(unchecked)
}

fn instruments(raw: &InstrumentsJson) -> Result<[Instrument; 3], ScenarioError> {
    Ok([
        instrument("model.instruments.a", &raw.a)?,
        instrument("model.instruments.b", &raw.b)?,
        instrument("model.instruments.e", &raw.e)?,
    ])
}

fn state(field: &str, raw: &MatrixJson) -> Result<DensityMatrix, ScenarioError> {
    DensityMatrix::new(matrix(field, raw)?).map_err(|e| ScenarioError::invalid(field, e))
}

fn quantum_model(q: QuantumJson, event: &[usize]) -> Result<(Model, OutcomeSpace), ScenarioError> {
    let scenario = match q {
        QuantumJson::Example { paper_example: ex } => {
            let rho = match &ex.state {
                Some(m) => state("model.paper_example.state", m)?,
                None => DensityMatrix::maximally_mixed(4),
            };
            let s = quantum::paper_example(ex.theta, ex.phi, ex.q, ex.r, rho)
                .map_err(|e| ScenarioError::invalid("model.paper_example", e))?;
            let [a, b, e] = s.instruments();
            let (a, b, e) = (a.clone(), b.clone(), e.clone());
            QuantumScenario::new(s.state().clone(), a, b, e, Order::Abe, event.iter().copied())
                .map_err(|err| ScenarioError::invalid("event", err))?
        }
        QuantumJson::Explicit {
            state: rho,
            instruments: raw,
            order,
        } => {
            let rho = state("model.state", &rho)?;
            let [a, b, e] = instruments(&raw)?;
            QuantumScenario::new(rho, a, b, e, order, event.iter().copied()).map_err(|err| match err {
                Error::DimensionMismatch(_) => ScenarioError::invalid("model.instruments", err),
                other => ScenarioError::invalid("event", other),
            })?
        }
    };
    let space = scenario.space();
    Ok((Model::Quantum(scenario), space))
}

/// Parses an order such as `"BAE"` into the lab sequence.
pub fn parse_lab_order(text: &str) -> Option<[Lab; 3]> {
    let labs: Vec<Lab> = text
        .chars()
        .map(|ch| match ch.to_ascii_uppercase() {
            'A' => Some(Lab::A),
            'B' => Some(Lab::B),
            'E' => Some(Lab::E),
            _ => None,
        })
        .collect::<Option<_>>()?;
    let order: [Lab; 3] = labs.try_into().ok()?;
    let distinct = order[0] != order[1] && order[1] != order[2] && order[0] != order[2];
    distinct.then_some(order)
}

fn process_model(p: ProcessJson, seed: u64) -> Result<(Model, OutcomeSpace), ScenarioError> {
    let dims = |d: [usize; 2]| LabDims::new(d[0], d[1]);
    let labs = [dims(p.labs.a), dims(p.labs.b), dims(p.labs.e)];
    let instruments = instruments(&p.instruments)?;
    let w = match (p.w, p.state, p.orders) {
        (Some(raw), None, None) => {
            let size: usize = labs.iter().map(|l| l.dim_in * l.dim_out).product();
            let sparse = match raw {
                ProcessWJson::Dense(rows) => SparseMatrix::from_dense(&matrix("model.w", &rows)?),
                ProcessWJson::Sparse { entries } => {
                    let mut m = SparseMatrix::zeros(size);
                    for (n, &(r, s, z)) in entries.iter().enumerate() {
                        if r >= size || s >= size {
                            return Err(ScenarioError::invalid(format!("model.w.entries[{n}]"), format!("index outside a {size}x{size} matrix")));
                        }
                        m.add_entry(r, s, z.into());
                    }
                    m
                }
            };
            if sparse.dim() != size {
                return Err(ScenarioError::invalid("model.w", format!("matrix is {0}x{0}, labs need {size}x{size}", sparse.dim())));
            }
            let diag = process::validate_process(&sparse, labs, seed).map_err(|e| ScenarioError::invalid("model.w", e))?;
            if !diag.passes {
                return Err(ScenarioError::Validation {
                    field: "model.w".into(),
                    message: "process matrix failed validation".into(),
                    diagnostics: vec![
                        format!("hermiticity deviation {:e}", diag.hermitian_deviation),
                        match diag.min_eigenvalue {
                            Some(l) => format!("minimum eigenvalue {l:e}"),
                            None => "positivity not checked (matrix too large)".into(),
                        },
                        format!("trace deviation {:e}", diag.trace_deviation),
                        format!("normalisation probe deviation {:e}", diag.normalization_probe),
                    ],
                });
            }
            ProcessMatrix::new_unchecked(labs, sparse).map_err(|e| ScenarioError::invalid("model.w", e))?
        }
        (None, Some(rho), Some(orders)) => {
            let rho = state("model.state", &rho)?;
            let mut ws = Vec::with_capacity(orders.len());
            let mut weights = Vec::with_capacity(orders.len());
            for (n, o) in orders.iter().enumerate() {
                let field = format!("model.orders[{n}]");
                let order = parse_lab_order(&o.order)
                    .ok_or_else(|| ScenarioError::invalid(&field, format!("`{}` is not an ordering of A, B, E", o.order)))?;
                ws.push(process::embed_definite_order(&rho, labs, order).map_err(|e| ScenarioError::invalid(&field, e))?);
                weights.push(o.weight);
            }
            process::mix_processes(&ws, &weights).map_err(|e| ScenarioError::invalid("model.orders", e))?
        }
        _ => {
            return Err(ScenarioError::invalid(
                "model",
                "give either `w`, or `state` together with `orders`",
            ))
        }
    };
    let [a, b, e] = &instruments;
    for (lab, instr) in Lab::ALL.iter().zip([a, b, e]) {
        let d = labs[lab.index()];
        if instr.dim_in() != d.dim_in || instr.dim_out() != d.dim_out {
            return Err(ScenarioError::invalid(
                format!("model.instruments.{}", format!("{lab:?}").to_lowercase()),
                format!("instrument is {}->{}, lab is {}->{}", instr.dim_in(), instr.dim_out(), d.dim_in, d.dim_out),
            ));
        }
    }
    let space = OutcomeSpace::new(a.num_outcomes(), b.num_outcomes(), e.num_outcomes()).map_err(|err| ScenarioError::invalid("model.instruments", err))?;
    Ok((Model::Process { w, instruments }, space))
}
