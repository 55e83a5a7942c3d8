//! Seeded generators for random states, instruments, models and tables.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::classical::{ClassicalModel, Partition};
use crate::linalg::{self, c, CMatrix};
use crate::probability::{JointDistribution, OutcomeSpace, DEFAULT_TOL};
use crate::quantum::{CpMap, DensityMatrix, Instrument};

/// Deterministic generator for trial `index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Haar-distributed unitary via QR of a Ginibre matrix with the phases of `R` divided out.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(d, d, rng).qr();
    let (mut q, r) = qr.unpack();
    for col in 0..d {
        let diag = r[(col, col)];
        let phase = if diag.norm() > 0.0 { diag / diag.norm() } else { c(1.0, 0.0) };
        for row in 0..d {
            q[(row, col)] *= phase;
        }
    }
    q
}

/// Random mixed state of random rank.
pub fn random_density_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let rank = rng.random_range(1..=d);
    let g = ginibre(d, rank, rng);
    let rho = &g * g.adjoint();
    let tr = linalg::trace(&rho).re;
    let rho = rho * c(1.0 / tr, 0.0);
    // enforce exact hermiticity before validation
    let rho = (&rho + rho.adjoint()) * c(0.5, 0.0);
    DensityMatrix::new(rho).expect("Ginibre construction yields a state")
}

/// Random pure state restricted to the first `support` basis vectors.
pub fn random_pure_state_on<R: Rng + ?Sized>(d: usize, support: usize, rng: &mut R) -> DensityMatrix {
    let mut psi = vec![c(0.0, 0.0); d];
    for x in psi.iter_mut().take(support) {
        *x = c(rng.sample(StandardNormal), rng.sample(StandardNormal));
    }
    DensityMatrix::pure(&psi).expect("nonzero vector")
}

/// Splits `0..n` into `groups` nonempty random groups.
fn random_grouping<R: Rng + ?Sized>(n: usize, groups: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = vec![Vec::new(); groups];
    for (pos, &x) in order.iter().enumerate() {
        let g = if pos < groups { pos } else { rng.random_range(0..groups) };
        out[g].push(x);
    }
    out
}

/// Projective instrument onto groups of columns of a Haar-random unitary.
pub fn random_projective_instrument<R: Rng + ?Sized>(d: usize, max_outcomes: usize, rng: &mut R) -> Instrument {
    let u = haar_unitary(d, rng);
    let outcomes = rng.random_range(1..=d.min(max_outcomes).max(1));
    let branches = random_grouping(d, outcomes, rng)
        .into_iter()
        .map(|cols| {
            let p = cols.iter().fold(CMatrix::zeros(d, d), |acc, &col| {
                let v: Vec<Complex64> = u.column(col).iter().copied().collect();
                acc + linalg::projector(&v)
            });
            CpMap::projector(p).expect("square projector")
        })
        .collect();
    Instrument::new(branches).expect("projectors resolve the identity")
}

/// General instrument: Ginibre Kraus operators rescaled by `S^{-1/2}` with `S = Σ K†K`.
pub fn random_kraus_instrument<R: Rng + ?Sized>(
    d_in: usize,
    d_out: usize,
    outcomes: usize,
    max_kraus: usize,
    rng: &mut R,
) -> Instrument {
    let outcomes = outcomes.max(1);
    loop {
        let mut counts: Vec<usize> = (0..outcomes).map(|_| rng.random_range(1..=max_kraus.max(1))).collect();
        // Σ K†K has rank at most (number of operators) · d_out
        while counts.iter().sum::<usize>() * d_out < d_in {
            let n = rng.random_range(0..outcomes);
            counts[n] += 1;
        }
        let raw: Vec<Vec<CMatrix>> = counts
            .iter()
            .map(|&m| (0..m).map(|_| ginibre(d_out, d_in, rng)).collect())
            .collect();
        let s = raw
            .iter()
            .flatten()
            .fold(CMatrix::zeros(d_in, d_in), |acc, k| acc + k.adjoint() * k);
        let Some(inv) = linalg::inverse_sqrt_psd(&s) else {
            continue;
        };
        let branches = raw
            .into_iter()
            .map(|ks| CpMap::new(ks.into_iter().map(|k| k * &inv).collect()).expect("consistent shapes"))
            .collect();
        if let Ok(instr) = Instrument::new(branches) {
            return instr;
        }
    }
}

/// Projective (when square, half of the time) or general Kraus instrument.
pub fn random_instrument<R: Rng + ?Sized>(d_in: usize, d_out: usize, max_outcomes: usize, rng: &mut R) -> Instrument {
    if d_in == d_out && rng.random_bool(0.5) {
        random_projective_instrument(d_in, max_outcomes, rng)
    } else {
        let outcomes = rng.random_range(1..=max_outcomes.max(1));
        random_kraus_instrument(d_in, d_out, outcomes, 2, rng)
    }
}

fn random_assignment<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Partition {
    let cells = rng.random_range(1..=n);
    let mut assignment = vec![0; n];
    for (c, group) in random_grouping(n, cells, rng).into_iter().enumerate() {
        for s in group {
            assignment[s] = c;
        }
    }
    Partition::from_assignment(assignment).expect("all cells nonempty")
}

/// Random ontic model with a strictly positive rational prior over at most `max_states` states.
pub fn random_rational_model<R: Rng + ?Sized>(max_states: usize, rng: &mut R) -> ClassicalModel<BigRational> {
    let n = rng.random_range(1..=max_states.max(1));
    let weights: Vec<i64> = (0..n).map(|_| rng.random_range(1..=6)).collect();
    let total: i64 = weights.iter().sum();
    let prior = weights
        .iter()
        .map(|&w| BigRational::new(BigInt::from(w), BigInt::from(total)))
        .collect();
    let part_e = random_assignment(n, rng);
    let event: Vec<usize> = (0..part_e.num_cells()).filter(|_| rng.random_bool(0.5)).collect();
    ClassicalModel::new(
        prior,
        random_assignment(n, rng),
        random_assignment(n, rng),
        part_e,
        event,
        DEFAULT_TOL,
    )
    .expect("generated model is valid")
}

/// Random table with small integer weights (many ties and zeros), normalised in floating point.
pub fn random_joint_table<R: Rng + ?Sized>(max_outcomes: usize, rng: &mut R) -> JointDistribution {
    let m = max_outcomes.max(1);
    let space = OutcomeSpace::new(rng.random_range(1..=m), rng.random_range(1..=m), rng.random_range(1..=m))
        .expect("positive sizes");
    loop {
        let weights: Vec<u32> = (0..space.len())
            .map(|_| if rng.random_bool(0.4) { 0 } else { rng.random_range(1..=3) })
            .collect();
        let total: u32 = weights.iter().sum();
        if total == 0 {
            continue;
        }
        let values = weights.iter().map(|&w| w as f64 / total as f64).collect();
        return JointDistribution::new(space, values, DEFAULT_TOL).expect("normalised by construction");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = trial_rng(1, 0);
        for d in 1..=4 {
            let u = haar_unitary(d, &mut rng);
            let err = linalg::max_abs(&(u.adjoint() * &u - linalg::identity(d)));
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn generated_instruments_are_valid() {
        let mut rng = trial_rng(2, 0);
        for _ in 0..200 {
            let d_in = rng.random_range(1..=4);
            let d_out = rng.random_range(1..=4);
            let instr = random_instrument(d_in, d_out, 4, &mut rng);
            assert!(instr.tp_deviation() < 1e-10);
            assert!(instr.num_outcomes() <= 4);
        }
    }

    #[test]
    fn narrowing_instruments_terminate() {
        let mut rng = trial_rng(4, 0);
        let instr = random_kraus_instrument(4, 1, 1, 1, &mut rng);
        assert!(instr.tp_deviation() < 1e-10);
        assert!(instr.branches()[0].kraus().len() >= 4);
    }

    #[test]
    fn trial_streams_are_reproducible_and_distinct() {
        let a: u64 = trial_rng(7, 3).random();
        let b: u64 = trial_rng(7, 3).random();
        let other: u64 = trial_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn random_models_and_tables_validate() {
        let mut rng = trial_rng(3, 0);
        for _ in 0..50 {
            let m = random_rational_model(8, &mut rng);
            assert!(m.num_states() <= 8);
            let t = random_joint_table(4, &mut rng);
            assert!(t.space().sizes().iter().all(|&n| n <= 4));
        }
    }
}
