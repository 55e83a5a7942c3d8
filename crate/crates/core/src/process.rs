//! Choi operators and process matrices.
//!
//! # Conventions
//!
//! The Choi operator of a CP map `M: L(H_in) → L(H_out)` is
//! `C = Σ_{a,b} |a⟩⟨b| ⊗ M(|a⟩⟨b|)` on `H_in ⊗ H_out` (input factor first),
//! built from the unnormalised maximally entangled vector `Σ_a |a⟩|a⟩`.
//!
//! A process matrix acts on `A_in ⊗ A_out ⊗ B_in ⊗ B_out ⊗ E_in ⊗ E_out`,
//! in exactly that factor order, and assigns
//! `p(i, j, k) = tr[(C_{A,i} ⊗ C_{B,j} ⊗ C_{E,k}) W]`.
//! With this Choi convention a state `ρ` fed into a lab appears in `W` as
//! `ρᵀ`, an identity wire from one lab's output to another's input as the
//! unnormalised maximally entangled projector, and a discarded output as
//! the identity.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, SparseMatrix, HERMITIAN_TOL, PSD_TOL};
use crate::probability::{JointDistribution, OutcomeSpace, DEFAULT_TOL};
use crate::quantum::{CpMap, DensityMatrix, Instrument};
use crate::random;

/// Trace tolerance for process matrices.
pub const PROCESS_TRACE_TOL: f64 = 1e-8;
/// Largest process dimension for which positivity is checked by dense diagonalisation.
pub const DENSE_CHECK_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiOperator {
    dim_in: usize,
    dim_out: usize,
    matrix: CMatrix,
}

impl ChoiOperator {
    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

pub fn choi_of_branch(branch: &CpMap) -> ChoiOperator {
    let (din, dout) = (branch.dim_in(), branch.dim_out());
    let n = din * dout;
    let mut matrix = CMatrix::zeros(n, n);
    for k in branch.kraus() {
        // (I ⊗ K) Σ_a |a⟩|a⟩
        let v: Vec<Complex64> = (0..n).map(|x| k[(x % dout, x / dout)]).collect();
        matrix += linalg::projector(&v);
    }
    ChoiOperator {
        dim_in: din,
        dim_out: dout,
        matrix,
    }
}

/// One of the three laboratories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lab {
    A,
    B,
    E,
}

impl Lab {
    pub const ALL: [Lab; 3] = [Lab::A, Lab::B, Lab::E];

    /// Position of the lab in the canonical factor order.
    pub fn index(self) -> usize {
        match self {
            Lab::A => 0,
            Lab::B => 1,
            Lab::E => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabDims {
    pub dim_in: usize,
    pub dim_out: usize,
}

impl LabDims {
    pub fn new(dim_in: usize, dim_out: usize) -> Self {
        Self { dim_in, dim_out }
    }

    fn size(self) -> usize {
        self.dim_in * self.dim_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessMatrix {
    labs: [LabDims; 3],
    matrix: SparseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDiagnostics {
    pub hermitian_deviation: f64,
    /// `None` when the matrix is too large to diagonalise densely.
    pub min_eigenvalue: Option<f64>,
    /// `|tr W − d_A,out d_B,out d_E,out|`.
    pub trace_deviation: f64,
    /// `max |Σ_ijk p(i,j,k) − 1|` over random valid instruments.
    pub normalization_probe: f64,
    pub passes: bool,
}

fn full_dim(labs: &[LabDims; 3]) -> usize {
    labs.iter().map(|l| l.size()).product()
}

fn output_product(labs: &[LabDims; 3]) -> f64 {
    labs.iter().map(|l| l.dim_out as f64).product()
}

impl ProcessMatrix {
    /// Validates hermiticity, trace and (up to [`DENSE_CHECK_LIMIT`]) positivity.
    pub fn new(labs: [LabDims; 3], matrix: SparseMatrix) -> Result<Self> {
        let w = Self::structural(labs, matrix)?;
        if w.dim() <= DENSE_CHECK_LIMIT {
            let min = linalg::min_eigenvalue(&w.matrix.to_dense());
            if min < -PSD_TOL {
                return Err(Error::InvalidProcess(format!("negative eigenvalue {min:e}")));
            }
        }
        Ok(w)
    }

    /// Hermiticity and trace checks only; used for matrices that are positive by construction.
    fn structural(labs: [LabDims; 3], matrix: SparseMatrix) -> Result<Self> {
        let w = Self::new_unchecked(labs, matrix)?;
        let herm = w.matrix.hermitian_deviation();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidProcess(format!("hermiticity deviation {herm:e}")));
        }
        let dev = w.trace_deviation();
        if dev > PROCESS_TRACE_TOL {
            return Err(Error::InvalidProcess(format!("trace deviation {dev:e}")));
        }
        Ok(w)
    }

    /// Checks only that the matrix size matches the lab dimensions.
    pub fn new_unchecked(labs: [LabDims; 3], matrix: SparseMatrix) -> Result<Self> {
        if labs.iter().any(|l| l.dim_in == 0 || l.dim_out == 0) {
            return Err(Error::DimensionMismatch("lab dimensions must be positive".into()));
        }
        if matrix.dim() != full_dim(&labs) {
            return Err(Error::DimensionMismatch(format!(
                "process matrix of size {} for labs needing {}",
                matrix.dim(),
                full_dim(&labs)
            )));
        }
        Ok(Self { labs, matrix })
    }

    pub fn labs(&self) -> [LabDims; 3] {
        self.labs
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self {
            labs: self.labs,
            matrix: self.matrix.scale(f),
        }
    }

    fn trace_deviation(&self) -> f64 {
        (self.matrix.trace() - c(output_product(&self.labs), 0.0)).norm()
    }
}

fn choi_set(instr: &Instrument, expected: LabDims, lab: Lab) -> Result<Vec<CMatrix>> {
    if instr.dim_in() != expected.dim_in || instr.dim_out() != expected.dim_out {
        return Err(Error::DimensionMismatch(format!(
            "instrument for lab {lab:?} is {}->{}, process expects {}->{}",
            instr.dim_in(),
            instr.dim_out(),
            expected.dim_in,
            expected.dim_out
        )));
    }
    Ok(instr.branches().iter().map(|b| choi_of_branch(b).matrix).collect())
}

/// Raw `tr[(C_i ⊗ C_j ⊗ C_k) W]` values in row-major `(i, j, k)` order.
fn process_values(w: &ProcessMatrix, instr: [&Instrument; 3]) -> Result<Vec<f64>> {
    let chois: Vec<Vec<CMatrix>> = Lab::ALL
        .iter()
        .map(|&lab| choi_set(instr[lab.index()], w.labs[lab.index()], lab))
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = w.labs.iter().map(|l| l.size()).collect();
    let counts: Vec<usize> = chois.iter().map(Vec::len).collect();
    let (ni, nj, nk) = (counts[0], counts[1], counts[2]);
    let mut acc = vec![c(0.0, 0.0); ni * nj * nk];
    let mut va = vec![c(0.0, 0.0); ni];
    let mut vb = vec![c(0.0, 0.0); nj];
    let mut ve = vec![c(0.0, 0.0); nk];
    for (r, s, z) in w.matrix.iter() {
        let rd = linalg::split_index(r, &sizes);
        let sd = linalg::split_index(s, &sizes);
        // tr[X W] = Σ_{r,s} X_{s r} W_{r s}
        for (slot, v) in [&mut va, &mut vb, &mut ve].into_iter().enumerate() {
            for (x, cm) in v.iter_mut().zip(&chois[slot]) {
                *x = cm[(sd[slot], rd[slot])];
            }
        }
        for (i, &a) in va.iter().enumerate() {
            if a == c(0.0, 0.0) {
                continue;
            }
            let za = z * a;
            for (j, &b) in vb.iter().enumerate() {
                if b == c(0.0, 0.0) {
                    continue;
                }
                let zab = za * b;
                let base = (i * nj + j) * nk;
                for (k, &e) in ve.iter().enumerate() {
                    acc[base + k] += zab * e;
                }
            }
        }
    }
    Ok(acc.into_iter().map(|z| z.re).collect())
}

/// `p(i, j, k) = tr[(Ã_i ⊗ B̃_j ⊗ Ẽ_k) W]`.
pub fn process_joint(
    w: &ProcessMatrix,
    instr_a: &Instrument,
    instr_b: &Instrument,
    instr_e: &Instrument,
) -> Result<JointDistribution> {
    let values = process_values(w, [instr_a, instr_b, instr_e])?;
    let space = OutcomeSpace::new(instr_a.num_outcomes(), instr_b.num_outcomes(), instr_e.num_outcomes())?;
    JointDistribution::new(space, values, DEFAULT_TOL)
}

/// Process matrix of a definite causal order: `ρ` enters the first lab in
/// `order`, each lab's output is wired to the next lab's input and the last
/// output is discarded.
pub fn embed_definite_order(rho: &DensityMatrix, labs: [LabDims; 3], order: [Lab; 3]) -> Result<ProcessMatrix> {
    let mut seen = [false; 3];
    for lab in order {
        if std::mem::replace(&mut seen[lab.index()], true) {
            return Err(Error::DimensionMismatch(format!("lab {lab:?} appears twice in the order")));
        }
    }
    let chain: Vec<LabDims> = order.iter().map(|l| labs[l.index()]).collect();
    if chain[0].dim_in != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "first lab expects dimension {}, state has {}",
            chain[0].dim_in,
            rho.dim()
        )));
    }
    for pair in chain.windows(2) {
        if pair[0].dim_out != pair[1].dim_in {
            return Err(Error::DimensionMismatch(format!(
                "output dimension {} wired into input dimension {}",
                pair[0].dim_out, pair[1].dim_in
            )));
        }
    }

    let w_chain = SparseMatrix::from_dense(&rho.matrix().transpose())
        .kron(&SparseMatrix::from_dense(&linalg::max_entangled_projector(chain[0].dim_out)))
        .kron(&SparseMatrix::from_dense(&linalg::max_entangled_projector(chain[1].dim_out)))
        .kron(&SparseMatrix::identity(chain[2].dim_out));

    let chain_dims: Vec<usize> = chain.iter().flat_map(|l| [l.dim_in, l.dim_out]).collect();
    let perm: Vec<usize> = (0..6)
        .map(|t| {
            let lab = Lab::ALL[t / 2];
            let pos = order.iter().position(|&l| l == lab).expect("order is a permutation");
            2 * pos + t % 2
        })
        .collect();
    ProcessMatrix::structural(labs, w_chain.permute_factors(&chain_dims, &perm))
}

/// Convex combination `Σ_n λ_n W_n`.
pub fn mix_processes(ws: &[ProcessMatrix], weights: &[f64]) -> Result<ProcessMatrix> {
    let first = ws
        .first()
        .ok_or_else(|| Error::BadWeights("no processes to mix".into()))?;
    if ws.len() != weights.len() {
        return Err(Error::BadWeights(format!("{} processes but {} weights", ws.len(), weights.len())));
    }
    if let Some(w) = weights.iter().find(|&&w| w.is_nan() || w < 0.0) {
        return Err(Error::BadWeights(format!("weight {w} is negative")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadWeights(format!("weights sum to {total}")));
    }
    if ws.iter().any(|w| w.labs != first.labs) {
        return Err(Error::DimensionMismatch("processes have different lab dimensions".into()));
    }
    let mut matrix = SparseMatrix::zeros(first.dim());
    for (w, &lambda) in ws.iter().zip(weights) {
        matrix.add_scaled(&w.matrix, lambda);
    }
    ProcessMatrix::structural(first.labs, matrix)
}

/// Number of random instrument triples used by the normalisation probe.
pub const PROBE_TRIALS: usize = 16;

/// Checks a candidate process matrix: hermiticity, positivity, trace, and that
/// random valid instruments in every lab produce normalised tables.
pub fn validate_process(matrix: &SparseMatrix, labs: [LabDims; 3], seed: u64) -> Result<ProcessDiagnostics> {
    let w = ProcessMatrix::new_unchecked(labs, matrix.clone())?;
    let hermitian_deviation = matrix.hermitian_deviation();
    let min_eigenvalue = (w.dim() <= DENSE_CHECK_LIMIT).then(|| linalg::min_eigenvalue(&matrix.to_dense()));
    let trace_deviation = w.trace_deviation();
    let mut normalization_probe: f64 = 0.0;
    for t in 0..PROBE_TRIALS {
        let mut rng = random::trial_rng(seed, t as u64);
        let instr: Vec<Instrument> = labs
            .iter()
            .map(|l| random::random_instrument(l.dim_in, l.dim_out, 3, &mut rng))
            .collect();
        let values = process_values(&w, [&instr[0], &instr[1], &instr[2]])?;
        normalization_probe = normalization_probe.max((values.iter().sum::<f64>() - 1.0).abs());
    }
    let passes = hermitian_deviation <= HERMITIAN_TOL
        && min_eigenvalue.is_none_or(|l| l >= -PSD_TOL)
        && trace_deviation <= PROCESS_TRACE_TOL
        && normalization_probe <= PROCESS_TRACE_TOL;
    Ok(ProcessDiagnostics {
        hermitian_deviation,
        min_eigenvalue,
        trace_deviation,
        normalization_probe,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{sequential_joint, Order, QuantumScenario};

    fn ket(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x, 0.0)).collect()
    }

    fn pauli() -> [CMatrix; 4] {
        let m = |v: [Complex64; 4]| CMatrix::from_row_slice(2, 2, &v);
        let (o, z, i) = (c(1., 0.), c(0., 0.), c(0., 1.));
        [m([o, z, z, o]), m([z, o, o, z]), m([z, -i, i, z]), m([o, z, z, -o])]
    }

    #[test]
    fn identity_choi_is_max_entangled() {
        for d in 1..=3 {
            let ch = choi_of_branch(&CpMap::identity(d));
            assert_eq!(ch.matrix(), &linalg::max_entangled_projector(d));
            assert!((linalg::trace(ch.matrix()).re - d as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn depolarizing_choi() {
        // Kraus {σ_μ / 2}: ρ ↦ tr(ρ) I/2
        let kraus = pauli().iter().map(|p| p * c(0.5, 0.0)).collect();
        let ch = choi_of_branch(&CpMap::new(kraus).unwrap());
        let expected = linalg::identity(4) * c(0.5, 0.0);
        assert!(linalg::max_abs(&(ch.matrix() - expected)) < 1e-15);
        assert!((linalg::trace(ch.matrix()).re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn projector_choi_is_rank_one() {
        let ch = choi_of_branch(&CpMap::projector(linalg::projector(&ket(&[1., 0.]))).unwrap());
        let eig = linalg::hermitian_eigenvalues(ch.matrix());
        let nonzero = eig.iter().filter(|l| l.abs() > 1e-12).count();
        assert_eq!(nonzero, 1);
        assert!((linalg::trace(ch.matrix()).re - 1.0).abs() < 1e-15);
    }

    fn qubit_labs() -> [LabDims; 3] {
        [LabDims::new(2, 2); 3]
    }

    fn some_instruments() -> [Instrument; 3] {
        let mut rng = random::trial_rng(11, 0);
        [
            random::random_instrument(2, 2, 3, &mut rng),
            random::random_projective_instrument(2, 2, &mut rng),
            random::random_kraus_instrument(2, 2, 2, 2, &mut rng),
        ]
    }

    fn max_diff(a: &JointDistribution, b: &JointDistribution) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn definite_order_matches_sequential() {
        let rho = random::random_density_matrix(2, &mut random::trial_rng(5, 0));
        let [a, b, e] = some_instruments();
        for (order, labs) in [(Order::Abe, [Lab::A, Lab::B, Lab::E]), (Order::Aeb, [Lab::A, Lab::E, Lab::B])] {
            let seq = sequential_joint(
                &QuantumScenario::new(rho.clone(), a.clone(), b.clone(), e.clone(), order, [0]).unwrap(),
            )
            .unwrap();
            let w = embed_definite_order(&rho, qubit_labs(), labs).unwrap();
            let proc = process_joint(&w, &a, &b, &e).unwrap();
            assert!(max_diff(&seq, &proc) < 1e-10, "{order:?}");
        }
    }

    #[test]
    fn trivial_instruments_give_unit_table() {
        let rho = DensityMatrix::maximally_mixed(2);
        let w = embed_definite_order(&rho, qubit_labs(), [Lab::B, Lab::E, Lab::A]).unwrap();
        let t = Instrument::trivial(2);
        let p = process_joint(&w, &t, &t, &t).unwrap();
        assert_eq!(p.space().sizes(), [1, 1, 1]);
        assert!((p.values()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn halved_process_is_not_normalized() {
        let rho = DensityMatrix::maximally_mixed(2);
        let w = embed_definite_order(&rho, qubit_labs(), [Lab::A, Lab::B, Lab::E]).unwrap().scaled(0.5);
        let [a, b, e] = some_instruments();
        assert!(matches!(process_joint(&w, &a, &b, &e), Err(Error::NotNormalized { .. })));
        assert!(ProcessMatrix::new(w.labs(), w.matrix().clone()).is_err());
    }

    #[test]
    fn single_lab_chain() {
        let rho = random::random_density_matrix(3, &mut random::trial_rng(9, 0));
        let labs = [LabDims::new(3, 2), LabDims::new(2, 1), LabDims::new(1, 1)];
        let w = embed_definite_order(&rho, labs, [Lab::A, Lab::B, Lab::E]).unwrap();
        assert!((w.matrix().trace().re - 2.0).abs() < 1e-12);
        let trivial_rest = CMatrix::from_row_slice(1, 1, &[c(1.0, 0.0)]);
        // W = ρᵀ ⊗ |Φ⁺⟩⟨Φ⁺| on (A_out, B_in) ⊗ 1 ⊗ 1
        let expected = rho
            .matrix()
            .transpose()
            .kronecker(&linalg::max_entangled_projector(2))
            .kronecker(&trivial_rest);
        assert!(linalg::max_abs(&(w.matrix().to_dense() - expected)) < 1e-15);
    }

    #[test]
    fn embedding_rejects_bad_wiring() {
        let rho = DensityMatrix::maximally_mixed(2);
        let labs = [LabDims::new(2, 3), LabDims::new(2, 2), LabDims::new(2, 2)];
        assert!(embed_definite_order(&rho, labs, [Lab::A, Lab::B, Lab::E]).is_err());
        assert!(embed_definite_order(&rho, qubit_labs(), [Lab::A, Lab::A, Lab::E]).is_err());
        assert!(embed_definite_order(&DensityMatrix::maximally_mixed(3), qubit_labs(), [Lab::A, Lab::B, Lab::E]).is_err());
    }

    #[test]
    fn process_joint_checks_dimensions() {
        let w = embed_definite_order(&DensityMatrix::maximally_mixed(2), qubit_labs(), [Lab::A, Lab::B, Lab::E]).unwrap();
        let t2 = Instrument::trivial(2);
        let t3 = Instrument::trivial(3);
        assert!(matches!(process_joint(&w, &t2, &t3, &t2), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn mixtures() {
        let rho = random::random_density_matrix(2, &mut random::trial_rng(6, 0));
        let w1 = embed_definite_order(&rho, qubit_labs(), [Lab::A, Lab::B, Lab::E]).unwrap();
        let w2 = embed_definite_order(&rho, qubit_labs(), [Lab::B, Lab::A, Lab::E]).unwrap();
        assert_eq!(mix_processes(&[w1.clone(), w2.clone()], &[1.0, 0.0]).unwrap().matrix().to_dense(), w1.matrix().to_dense());

        let [a, b, e] = some_instruments();
        let mix = mix_processes(&[w1.clone(), w2.clone()], &[0.5, 0.5]).unwrap();
        let pm = process_joint(&mix, &a, &b, &e).unwrap();
        let s1 = sequential_joint(&QuantumScenario::new(rho.clone(), a.clone(), b.clone(), e.clone(), Order::Abe, [0]).unwrap()).unwrap();
        // B before A: relabel and transpose back
        let s2 = sequential_joint(&QuantumScenario::new(rho.clone(), b.clone(), a.clone(), e.clone(), Order::Abe, [0]).unwrap())
            .unwrap()
            .transpose_ij();
        for (n, v) in pm.values().iter().enumerate() {
            assert!((v - 0.5 * (s1.values()[n] + s2.values()[n])).abs() < 1e-10);
        }

        assert!(matches!(mix_processes(&[w1.clone(), w2.clone()], &[0.5, 0.3]), Err(Error::BadWeights(_))));
        assert!(matches!(mix_processes(&[w1.clone(), w2], &[1.2, -0.2]), Err(Error::BadWeights(_))));
        let other = embed_definite_order(&DensityMatrix::maximally_mixed(2), [LabDims::new(2, 2), LabDims::new(2, 2), LabDims::new(2, 1)], [Lab::A, Lab::B, Lab::E]).unwrap();
        assert!(matches!(mix_processes(&[w1, other], &[0.5, 0.5]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn validation_diagnostics() {
        let rho = random::random_density_matrix(2, &mut random::trial_rng(8, 0));
        let w = embed_definite_order(&rho, qubit_labs(), [Lab::E, Lab::A, Lab::B]).unwrap();
        let d = validate_process(w.matrix(), w.labs(), 1).unwrap();
        assert!(d.passes, "{d:?}");
        assert!(d.min_eigenvalue.unwrap() > -1e-12);

        let mut bad = w.matrix().clone();
        bad.add_scaled(&SparseMatrix::from_dense(&{
            let mut m = CMatrix::zeros(64, 64);
            m[(0, 1)] = c(1e-3, 0.0);
            m
        }), 1.0);
        let d = validate_process(&bad, w.labs(), 1).unwrap();
        assert!(!d.passes);
        assert!(d.hermitian_deviation > 1e-4);

        // positive but with the wrong trace
        let d = validate_process(&SparseMatrix::identity(64), w.labs(), 1).unwrap();
        assert!(!d.passes);
        assert!(d.trace_deviation > 1.0);
        assert!(d.min_eigenvalue.unwrap() > 0.0);
    }
}
