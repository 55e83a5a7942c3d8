//! Randomised search for agreement violations.
//!
//! Trial `t` of a run seeded with `s` draws everything from
//! [`random::trial_rng`]`(s, t)`, so any trial can be regenerated on its own
//! with [`generate_trial`] and trials may run in parallel without changing
//! the result.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agreement;
use crate::classical::embed_classical;
use crate::error::Result;
use crate::probability::{Event, JointDistribution, Prob, DEFAULT_TOL};
use crate::process::{self, Lab, LabDims};
use crate::quantum::{self, DensityMatrix, Instrument, Order, QuantumScenario};
use crate::random;
use crate::scenario::{Backend, Joint};

/// Largest number of branches per random instrument.
pub const MAX_OUTCOMES: usize = 4;

/// A generated instance together with a short description of its kind.
#[derive(Debug, Clone)]
pub struct Trial {
    pub joint: Joint,
    pub event: Event,
    pub variant: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub backend: String,
    pub seed: u64,
    pub max_dim: usize,
    pub trials: usize,
    pub closures: usize,
    pub violations: usize,
    pub singular_witnesses: usize,
    /// Closures that needed more than `|I| + |J|` changing iterations.
    pub termination_failures: usize,
    pub errors: usize,
    /// Indices of trials with a violation, witness, termination failure or error.
    pub failing_trials: Vec<u64>,
    /// Histogram of `|A*| + |B*|` over all closures.
    pub closure_sizes: BTreeMap<usize, usize>,
    /// Number of trials of each generated kind.
    pub variants: BTreeMap<String, usize>,
}

impl FuzzSummary {
    pub fn passes(&self) -> bool {
        self.failing_trials.is_empty()
    }
}

fn random_event<R: Rng + ?Sized>(size_k: usize, rng: &mut R) -> Vec<usize> {
    (0..size_k).filter(|_| rng.random_bool(0.5)).collect()
}

fn random_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    if rng.random_bool(0.3) {
        let support = rng.random_range(1..=d);
        random::random_pure_state_on(d, support, rng)
    } else {
        random::random_density_matrix(d, rng)
    }
}

/// Four chain dimensions: all equal half of the time, otherwise independent.
fn chain_dims<R: Rng + ?Sized>(max_dim: usize, rng: &mut R) -> [usize; 4] {
    if rng.random_bool(0.5) {
        [rng.random_range(1..=max_dim); 4]
    } else {
        std::array::from_fn(|_| rng.random_range(1..=max_dim))
    }
}

/// Builds trial `index` of a run seeded with `seed`.
pub fn generate_trial(backend: Backend, max_dim: usize, seed: u64, index: u64) -> Result<Trial> {
    let max_dim = max_dim.max(1);
    let mut rng = random::trial_rng(seed, index);
    match backend {
        Backend::Table => {
            let joint = random::random_joint_table(max_dim, &mut rng);
            let event = Event::new(joint.space(), random_event(joint.space().size_k(), &mut rng))?;
            Ok(Trial {
                joint: Joint::Float(joint),
                event,
                variant: "table",
            })
        }
        Backend::Classical => {
            let model = random::random_rational_model(2 * max_dim, &mut rng);
            let (joint, event) = embed_classical(&model)?;
            Ok(Trial {
                joint: Joint::Exact(joint),
                event,
                variant: "classical",
            })
        }
        Backend::Quantum => {
            let d = chain_dims(max_dim, &mut rng);
            let order = if rng.random_bool(0.5) { Order::Abe } else { Order::Aeb };
            let rho = random_state(d[0], &mut rng);
            let mut chain: Vec<Instrument> = (0..3)
                .map(|n| random::random_instrument(d[n], d[n + 1], MAX_OUTCOMES, &mut rng))
                .collect();
            let third = chain.pop().expect("three instruments");
            let second = chain.pop().expect("three instruments");
            let first = chain.pop().expect("three instruments");
            let (a, b, e) = match order {
                Order::Abe => (first, second, third),
                Order::Aeb => (first, third, second),
            };
            let event = random_event(e.num_outcomes(), &mut rng);
            let s = QuantumScenario::new(rho, a, b, e, order, event)?;
            Ok(Trial {
                joint: Joint::Float(quantum::sequential_joint(&s)?),
                event: s.event().clone(),
                variant: match order {
                    Order::Abe => "ABE",
                    Order::Aeb => "AEB",
                },
            })
        }
        Backend::Process => {
            let mixture = rng.random_bool(0.5);
            let (w, labs, variant) = if mixture {
                let d = rng.random_range(1..=max_dim);
                let labs = [LabDims::new(d, d); 3];
                let rho = random_state(d, &mut rng);
                let mut orders = all_orders();
                orders.shuffle(&mut rng);
                let count = rng.random_range(2..=3);
                let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let weights: Vec<f64> = raw.iter().map(|x| x / total).collect();
                let ws = orders[..count]
                    .iter()
                    .map(|&o| process::embed_definite_order(&rho, labs, o))
                    .collect::<Result<Vec<_>>>()?;
                (process::mix_processes(&ws, &weights)?, labs, "mixture")
            } else {
                let d = chain_dims(max_dim, &mut rng);
                let order = *all_orders().choose(&mut rng).expect("six orders");
                let mut labs = [LabDims::new(1, 1); 3];
                for (pos, lab) in order.iter().enumerate() {
                    labs[lab.index()] = LabDims::new(d[pos], d[pos + 1]);
                }
                let rho = random_state(d[0], &mut rng);
                (process::embed_definite_order(&rho, labs, order)?, labs, "definite")
            };
            let instr: Vec<Instrument> = labs
                .iter()
                .map(|l| random::random_instrument(l.dim_in, l.dim_out, MAX_OUTCOMES, &mut rng))
                .collect();
            let joint = process::process_joint(&w, &instr[0], &instr[1], &instr[2])?;
            let event = Event::new(joint.space(), random_event(joint.space().size_k(), &mut rng))?;
            Ok(Trial {
                joint: Joint::Float(joint),
                event,
                variant,
            })
        }
    }
}

/// The six orderings of the three labs.
pub fn all_orders() -> Vec<[Lab; 3]> {
    let [a, b, e] = Lab::ALL;
    vec![[a, b, e], [a, e, b], [b, a, e], [b, e, a], [e, a, b], [e, b, a]]
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialOutcome {
    pub closures: usize,
    pub violations: usize,
    pub witnesses: usize,
    pub termination_failures: usize,
    /// `|A*| + |B*|` for each closure.
    pub sizes: Vec<usize>,
}

fn check<P: Prob>(p: &JointDistribution<P>, event: &Event, tol: f64) -> Result<TrialOutcome> {
    let [ni, nj, _] = p.space().sizes();
    let reports = agreement::verify_agreement(p, event, tol)?;
    Ok(TrialOutcome {
        closures: reports.len(),
        violations: agreement::count_violations(&reports),
        witnesses: agreement::singular_disagreement_witnesses(p, event, tol)?.len(),
        termination_failures: reports.iter().filter(|r| r.steps > ni + nj).count(),
        sizes: reports.iter().map(|r| r.a_star.len() + r.b_star.len()).collect(),
    })
}

/// Runs the agreement checks on one trial.
pub fn check_trial(trial: &Trial, tol: f64) -> Result<TrialOutcome> {
    match &trial.joint {
        Joint::Float(p) => check(p, &trial.event, tol),
        Joint::Exact(p) => check(p, &trial.event, tol),
    }
}

/// Runs `trials` random instances of `backend` with dimensions (and outcome
/// counts for tables) bounded by `max_dim`; classical models get up to
/// `2 · max_dim` states.
pub fn fuzz_search(backend: Backend, trials: usize, max_dim: usize, seed: u64) -> FuzzSummary {
    fuzz_search_with_tol(backend, trials, max_dim, seed, DEFAULT_TOL)
}

pub fn fuzz_search_with_tol(backend: Backend, trials: usize, max_dim: usize, seed: u64, tol: f64) -> FuzzSummary {
    let results: Vec<(u64, Option<&'static str>, Result<TrialOutcome>)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| match generate_trial(backend, max_dim, seed, t) {
            Ok(trial) => (t, Some(trial.variant), check_trial(&trial, tol)),
            Err(e) => (t, None, Err(e)),
        })
        .collect();

    let mut summary = FuzzSummary {
        backend: backend.name().to_string(),
        seed,
        max_dim,
        trials,
        ..FuzzSummary::default()
    };
    for (t, variant, outcome) in results {
        if let Some(v) = variant {
            *summary.variants.entry(v.to_string()).or_insert(0) += 1;
        }
        match outcome {
            Ok(o) => {
                summary.closures += o.closures;
                summary.violations += o.violations;
                summary.singular_witnesses += o.witnesses;
                summary.termination_failures += o.termination_failures;
                for s in o.sizes {
                    *summary.closure_sizes.entry(s).or_insert(0) += 1;
                }
                if o.violations + o.witnesses + o.termination_failures > 0 {
                    summary.failing_trials.push(t);
                }
            }
            Err(_) => {
                summary.errors += 1;
                summary.failing_trials.push(t);
            }
        }
    }
    summary
}
