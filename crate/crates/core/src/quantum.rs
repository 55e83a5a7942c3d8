//! Density matrices, instruments in Kraus form and sequential joint probabilities.
//!
//! Three instruments act one after another on a shared system. The joint
//! probability of the selected branches is the trace of the composed
//! (unnormalised) branch maps applied to the initial state. The table is
//! always reported with axes `(i, j, k)` = (Alice, Bob, event measurement),
//! whatever the temporal order.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, HERMITIAN_TOL, PSD_TOL};
use crate::probability::{Event, JointDistribution, OutcomeSpace, DEFAULT_TOL};
use crate::process::choi_of_branch;

/// Trace-preservation tolerance for instruments.
pub const INSTRUMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidDensityMatrix(format!(
                "shape {}x{} is not square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let herm = linalg::hermitian_deviation(&matrix);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidDensityMatrix(format!("hermiticity deviation {herm:e}")));
        }
        let tr = linalg::trace(&matrix);
        if (tr - c(1.0, 0.0)).norm() > DEFAULT_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} is not 1")));
        }
        let min = linalg::min_eigenvalue(&matrix);
        if min < -PSD_TOL {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { matrix })
    }

    /// `|ψ⟩⟨ψ|` for a vector normalised here.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidDensityMatrix("zero state vector".into()));
        }
        let v: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
        Self::new(linalg::projector(&v))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: linalg::identity(dim) * c(1.0 / dim as f64, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

/// A completely positive map `ρ ↦ Σ_m K_m ρ K_m†`, one branch of an instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct CpMap {
    dim_in: usize,
    dim_out: usize,
    kraus: Vec<CMatrix>,
}

impl CpMap {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::DimensionMismatch("branch with no Kraus operators".into()))?;
        let (dim_out, dim_in) = first.shape();
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::DimensionMismatch("empty Kraus operator".into()));
        }
        if let Some(k) = kraus.iter().find(|k| k.shape() != (dim_out, dim_in)) {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operator of shape {:?} in a {dim_out}x{dim_in} branch",
                k.shape()
            )));
        }
        Ok(Self {
            dim_in,
            dim_out,
            kraus,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim_in: dim,
            dim_out: dim,
            kraus: vec![linalg::identity(dim)],
        }
    }

    /// `ρ ↦ P ρ P`.
    pub fn projector(p: CMatrix) -> Result<Self> {
        Self::new(vec![p])
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// `Σ_m K_m† K_m`.
    pub fn effect(&self) -> CMatrix {
        self.kraus
            .iter()
            .fold(CMatrix::zeros(self.dim_in, self.dim_in), |acc, k| acc + k.adjoint() * k)
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self {
            kraus: self.kraus.iter().map(|k| k * c(f, 0.0)).collect(),
            ..self.clone()
        }
    }
}

/// The unnormalised post-measurement state `Σ_m K_m ρ K_m†`.
pub fn apply_branch(map: &CpMap, rho: &CMatrix) -> Result<CMatrix> {
    if rho.shape() != (map.dim_in, map.dim_in) {
        return Err(Error::DimensionMismatch(format!(
            "branch expects {0}x{0} input, got {1}x{2}",
            map.dim_in,
            rho.nrows(),
            rho.ncols()
        )));
    }
    Ok(map
        .kraus
        .iter()
        .fold(CMatrix::zeros(map.dim_out, map.dim_out), |acc, k| acc + k * rho * k.adjoint()))
}

/// A finite collection of CP maps whose sum is trace preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    dim_in: usize,
    dim_out: usize,
    branches: Vec<CpMap>,
}

impl Instrument {
    /// Builds an instrument, rejecting it if `Σ K†K` is further than
    /// [`INSTRUMENT_TOL`] from the identity.
    pub fn new(branches: Vec<CpMap>) -> Result<Self> {
        let instr = Self::new_unchecked(branches)?;
        let deviation = instr.tp_deviation();
        if deviation > INSTRUMENT_TOL {
            return Err(Error::NotTracePreserving { deviation });
        }
        Ok(instr)
    }

    /// Builds an instrument checking only that branch dimensions agree.
    pub fn new_unchecked(branches: Vec<CpMap>) -> Result<Self> {
        let first = branches
            .first()
            .ok_or_else(|| Error::DimensionMismatch("instrument with no branches".into()))?;
        let (dim_in, dim_out) = (first.dim_in, first.dim_out);
        if branches.iter().any(|b| b.dim_in != dim_in || b.dim_out != dim_out) {
            return Err(Error::DimensionMismatch("branches disagree on dimensions".into()));
        }
        Ok(Self {
            dim_in,
            dim_out,
            branches,
        })
    }

    /// One projective branch per vector; the vectors must form an orthonormal basis.
    pub fn projective(basis: &[Vec<Complex64>]) -> Result<Self> {
        Self::new(
            basis
                .iter()
                .map(|v| CpMap::projector(linalg::projector(v)))
                .collect::<Result<_>>()?,
        )
    }

    /// Single-outcome identity channel.
    pub fn trivial(dim: usize) -> Self {
        Self {
            dim_in: dim,
            dim_out: dim,
            branches: vec![CpMap::identity(dim)],
        }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn branches(&self) -> &[CpMap] {
        &self.branches
    }

    pub fn num_outcomes(&self) -> usize {
        self.branches.len()
    }

    /// Largest entry of `Σ_branches Σ_m K†K − I`.
    pub fn tp_deviation(&self) -> f64 {
        let total = self
            .branches
            .iter()
            .fold(CMatrix::zeros(self.dim_in, self.dim_in), |acc, b| acc + b.effect());
        linalg::max_abs(&(total - linalg::identity(self.dim_in)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentDiagnostics {
    /// Minimum eigenvalue of each branch's Choi matrix.
    pub choi_min_eigenvalues: Vec<f64>,
    pub tp_deviation: f64,
    pub passes: bool,
}

pub fn validate_instrument(instr: &Instrument, tol: f64) -> InstrumentDiagnostics {
    let choi_min_eigenvalues: Vec<f64> = instr
        .branches
        .iter()
        .map(|b| linalg::min_eigenvalue(choi_of_branch(b).matrix()))
        .collect();
    let tp_deviation = instr.tp_deviation();
    let passes = tp_deviation <= tol && choi_min_eigenvalues.iter().all(|&l| l >= -tol.max(PSD_TOL));
    InstrumentDiagnostics {
        choi_min_eigenvalues,
        tp_deviation,
        passes,
    }
}

/// Temporal order of the three measurements.
///
/// Other orders are obtained by relabelling instruments and transposing the
/// resulting table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    /// Alice, then Bob, then the event measurement.
    #[serde(rename = "ABE")]
    Abe,
    /// Alice, then the event measurement, then Bob.
    #[serde(rename = "AEB")]
    Aeb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumScenario {
    state: DensityMatrix,
    instr_a: Instrument,
    instr_b: Instrument,
    instr_e: Instrument,
    order: Order,
    event: Event,
}

impl QuantumScenario {
    pub fn new(
        state: DensityMatrix,
        instr_a: Instrument,
        instr_b: Instrument,
        instr_e: Instrument,
        order: Order,
        event: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let chain = match order {
            Order::Abe => [&instr_a, &instr_b, &instr_e],
            Order::Aeb => [&instr_a, &instr_e, &instr_b],
        };
        let mut dim = state.dim();
        for (n, instr) in chain.iter().enumerate() {
            if instr.dim_in != dim {
                return Err(Error::DimensionMismatch(format!(
                    "instrument {n} in temporal order expects dimension {}, receives {dim}",
                    instr.dim_in
                )));
            }
            dim = instr.dim_out;
        }
        let space = OutcomeSpace::new(instr_a.num_outcomes(), instr_b.num_outcomes(), instr_e.num_outcomes())?;
        let event = Event::new(&space, event)?;
        Ok(Self {
            state,
            instr_a,
            instr_b,
            instr_e,
            order,
            event,
        })
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    pub fn instruments(&self) -> [&Instrument; 3] {
        [&self.instr_a, &self.instr_b, &self.instr_e]
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn event(&self) -> &Event {
        &self.event
    }

    pub fn space(&self) -> OutcomeSpace {
        OutcomeSpace::new(
            self.instr_a.num_outcomes(),
            self.instr_b.num_outcomes(),
            self.instr_e.num_outcomes(),
        )
        .expect("instruments have at least one branch")
    }
}

/// `tr(X Y)` without forming the product.
fn trace_product(x: &CMatrix, y: &CMatrix) -> Complex64 {
    let n = x.nrows();
    let mut acc = c(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            acc += x[(a, b)] * y[(b, a)];
        }
    }
    acc
}

/// Joint probabilities indexed by temporal position `(t0, t1, t2)`, flattened row-major.
fn chain_probabilities(rho: &CMatrix, chain: [&Instrument; 3]) -> Result<Vec<f64>> {
    let last_effects: Vec<CMatrix> = chain[2].branches.iter().map(CpMap::effect).collect();
    let mut out = Vec::with_capacity(chain.iter().map(|x| x.num_outcomes()).product());
    for first in &chain[0].branches {
        let s1 = apply_branch(first, rho)?;
        for second in &chain[1].branches {
            let s2 = apply_branch(second, &s1)?;
            for effect in &last_effects {
                if effect.nrows() != s2.nrows() {
                    return Err(Error::DimensionMismatch("chain dimensions do not compose".into()));
                }
                out.push(trace_product(effect, &s2).re);
            }
        }
    }
    Ok(out)
}

/// `p(i, j, k) = tr 𝖤_k ∘ 𝖡_j ∘ 𝖠_i[ρ]`, or `tr 𝖡_j ∘ 𝖤_k ∘ 𝖠_i[ρ]` for [`Order::Aeb`].
pub fn sequential_joint(s: &QuantumScenario) -> Result<JointDistribution> {
    let space = s.space();
    let rho = s.state.matrix();
    let values = match s.order {
        Order::Abe => chain_probabilities(rho, [&s.instr_a, &s.instr_b, &s.instr_e])?,
        Order::Aeb => {
            let temporal = chain_probabilities(rho, [&s.instr_a, &s.instr_e, &s.instr_b])?;
            let (nj, nk) = (space.size_j(), space.size_k());
            let mut v = vec![0.0; space.len()];
            for (i, j, k) in space.triples() {
                v[space.flat_index(i, j, k)] = temporal[(i * nk + k) * nj + j];
            }
            v
        }
    };
    JointDistribution::new(space, values, DEFAULT_TOL)
}

fn check_example_parameters(q: f64, r: f64) -> Result<()> {
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::ParameterOutOfRange(format!("q = {q} must satisfy 0 < q < 1/2")));
    }
    if !(r > 0.0 && r < 1.0 - 2.0 * q) {
        return Err(Error::ParameterOutOfRange(format!("r = {r} must satisfy 0 < r < 1 - 2q")));
    }
    Ok(())
}

/// Bob's basis `|b_j⟩` and the vector `|e₀⟩` of the four-dimensional example,
/// written in Alice's (computational) basis.
pub fn example_vectors(theta: f64, phi: f64, q: f64, r: f64) -> Result<([Vec<Complex64>; 4], Vec<Complex64>)> {
    check_example_parameters(q, r)?;
    let (ct, st) = (theta.cos(), theta.sin());
    let (cp, sp) = (phi.cos(), phi.sin());
    let real = |v: [f64; 4]| v.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>();
    let b = [
        real([ct, st, 0.0, 0.0]),
        real([-st, ct, 0.0, 0.0]),
        real([0.0, 0.0, cp, sp]),
        real([0.0, 0.0, -sp, cp]),
    ];
    let amps = [q.sqrt(), q.sqrt(), r.sqrt(), (1.0 - 2.0 * q - r).sqrt()];
    let mut e0 = vec![c(0.0, 0.0); 4];
    for (bj, &w) in b.iter().zip(&amps) {
        for (x, &z) in e0.iter_mut().zip(bj) {
            *x += z * w;
        }
    }
    Ok((b, e0))
}

/// The four-dimensional noncommuting example: Alice measures the computational
/// basis, Bob the rotated basis `|b_j⟩`, and the event is the projector onto `|e₀⟩`.
pub fn paper_example(theta: f64, phi: f64, q: f64, r: f64, rho: DensityMatrix) -> Result<QuantumScenario> {
    let (b, e0) = example_vectors(theta, phi, q, r)?;
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch(format!("state has dimension {}, expected 4", rho.dim())));
    }
    let computational: Vec<Vec<Complex64>> = (0..4)
        .map(|x| (0..4).map(|y| c(if x == y { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    let instr_a = Instrument::projective(&computational)?;
    let instr_b = Instrument::projective(&b)?;
    let p0 = linalg::projector(&e0);
    let p1 = linalg::identity(4) - &p0;
    let instr_e = Instrument::new(vec![CpMap::projector(p0)?, CpMap::projector(p1)?])?;
    QuantumScenario::new(rho, instr_a, instr_b, instr_e, Order::Abe, [0])
}

/// Closed-form posteriors of the four-dimensional example for the event `k = 0`.
pub fn closed_form_posteriors(theta: f64, phi: f64, q: f64, r: f64) -> Result<([f64; 4], [f64; 4])> {
    check_example_parameters(q, r)?;
    let _ = theta;
    let (c2, s2) = (phi.cos().powi(2), phi.sin().powi(2));
    let rest = 1.0 - 2.0 * q - r;
    let q_a = [q, q, c2 * r + s2 * rest, s2 * r + c2 * rest];
    let q_b = [q, q, r, rest];
    Ok((q_a, q_b))
}

/// A generic angle pair used in examples and tests.
pub const EXAMPLE_ANGLES: (f64, f64) = (std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_3);
