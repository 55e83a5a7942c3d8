//! Common-knowledge closure and agreement checks over a joint outcome table.
//!
//! Alice observes `i`, Bob observes `j`, and both condition the same table
//! on their own outcome. Starting from the outcomes at which each agent holds
//! a given posterior, the closure repeatedly keeps only those outcomes at
//! which the agent is certain the other agent's outcome is still in the
//! other set. The fixed point is reached after finitely many strict
//! shrinkages; a nonempty fixed point means the posteriors are common
//! knowledge, and in that case they must coincide.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::classical::{ClassicalModel, Partition};
use crate::error::{Error, Result};
use crate::probability::{Event, JointDistribution, Prob};

/// One point of the closure trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CKState {
    pub a: BTreeSet<usize>,
    pub b: BTreeSet<usize>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CKReport<P = f64> {
    pub q_a: P,
    pub q_b: P,
    pub a_star: BTreeSet<usize>,
    pub b_star: BTreeSet<usize>,
    /// Iterations that changed a set before the fixed point was reached.
    pub steps: usize,
    pub ck_holds: bool,
    pub agrees: bool,
    pub mass_a_star: P,
    pub mass_b_star: P,
    /// First positive-mass pair in `A* × B*`.
    pub witness: Option<(usize, usize)>,
}

impl<P: Prob> CKReport<P> {
    /// Common knowledge of unequal posteriors.
    pub fn is_violation(&self) -> bool {
        self.ck_holds && !self.agrees
    }

    pub fn to_f64(&self) -> CKReport<f64> {
        CKReport {
            q_a: self.q_a.to_f64(),
            q_b: self.q_b.to_f64(),
            a_star: self.a_star.clone(),
            b_star: self.b_star.clone(),
            steps: self.steps,
            ck_holds: self.ck_holds,
            agrees: self.agrees,
            mass_a_star: self.mass_a_star.to_f64(),
            mass_b_star: self.mass_b_star.to_f64(),
            witness: self.witness,
        }
    }
}

fn mask(size: usize, set: &BTreeSet<usize>) -> Vec<bool> {
    (0..size).map(|x| set.contains(&x)).collect()
}

fn unit(size: usize, x: usize) -> Vec<bool> {
    (0..size).map(|y| y == x).collect()
}

/// Outcomes of positive mass at which each agent's posterior equals `q_a` (resp. `q_b`) within `tol`.
pub fn initial_sets<P: Prob>(
    p: &JointDistribution<P>,
    event: &Event,
    q_a: &P,
    q_b: &P,
    tol: f64,
) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
    let level = |posts: Vec<Option<P>>, q: &P| -> BTreeSet<usize> {
        posts
            .iter()
            .enumerate()
            .filter(|(_, x)| x.as_ref().is_some_and(|x| x.close_to(q, tol)))
            .map(|(n, _)| n)
            .collect()
    };
    let p = p.clone().with_tol(tol);
    Ok((
        level(p.posteriors_alice(event)?, q_a),
        level(p.posteriors_bob(event)?, q_b),
    ))
}

/// One simultaneous knowledge update:
/// `A' = {i ∈ A : p(B | i) ≥ 1 − tol}` and `B' = {j ∈ B : p(A | j) ≥ 1 − tol}`.
pub fn ck_step<P: Prob>(p: &JointDistribution<P>, s: &CKState, tol: f64) -> CKState {
    let [ni, nj, _] = p.space().sizes();
    let (ma, mb) = (mask(ni, &s.a), mask(nj, &s.b));
    let certain = |given: P, both: P| given.exceeds(tol) && (both / given).is_certain(tol);
    let a = s
        .a
        .iter()
        .copied()
        .filter(|&i| {
            let mi = unit(ni, i);
            certain(p.rect_mass(Some(&mi), None, None), p.rect_mass(Some(&mi), Some(&mb), None))
        })
        .collect();
    let b = s
        .b
        .iter()
        .copied()
        .filter(|&j| {
            let mj = unit(nj, j);
            certain(p.rect_mass(None, Some(&mj), None), p.rect_mass(Some(&ma), Some(&mj), None))
        })
        .collect();
    CKState { a, b, n: s.n + 1 }
}

/// Iterates [`ck_step`] from the given sets to the fixed point, returning the
/// fixed point and the number of iterations that changed it.
pub fn closure_from<P: Prob>(
    p: &JointDistribution<P>,
    a0: BTreeSet<usize>,
    b0: BTreeSet<usize>,
    tol: f64,
) -> (CKState, usize) {
    let mut state = CKState { a: a0, b: b0, n: 0 };
    let mut changes = 0;
    loop {
        let next = ck_step(p, &state, tol);
        if next.a == state.a && next.b == state.b {
            return (state, changes);
        }
        changes += 1;
        state = next;
    }
}

fn report_from<P: Prob>(
    p: &JointDistribution<P>,
    q_a: P,
    q_b: P,
    a0: BTreeSet<usize>,
    b0: BTreeSet<usize>,
    tol: f64,
) -> CKReport<P> {
    let [ni, nj, _] = p.space().sizes();
    let (fixed, steps) = closure_from(p, a0, b0, tol);
    let (ma, mb) = (mask(ni, &fixed.a), mask(nj, &fixed.b));
    let mass_a_star = p.rect_mass(Some(&ma), None, None);
    let mass_b_star = p.rect_mass(None, Some(&mb), None);
    let ck_holds =
        !fixed.a.is_empty() && !fixed.b.is_empty() && mass_a_star.exceeds(tol) && mass_b_star.exceeds(tol);
    let witness = fixed
        .a
        .iter()
        .flat_map(|&i| fixed.b.iter().map(move |&j| (i, j)))
        .find(|&(i, j)| p.prob_ij(i, j).exceeds(tol));
    CKReport {
        agrees: q_a.close_to(&q_b, tol),
        q_a,
        q_b,
        a_star: fixed.a,
        b_star: fixed.b,
        steps,
        ck_holds,
        mass_a_star,
        mass_b_star,
        witness,
    }
}

/// The common-knowledge closure for the posterior pair `(q_a, q_b)`.
pub fn ck_closure<P: Prob>(p: &JointDistribution<P>, event: &Event, q_a: &P, q_b: &P, tol: f64) -> Result<CKReport<P>> {
    let (a0, b0) = initial_sets(p, event, q_a, q_b, tol)?;
    Ok(report_from(p, q_a.clone(), q_b.clone(), a0, b0, tol))
}

/// Whether the posteriors held at outcomes `(i, j)` are common knowledge there.
pub fn is_common_knowledge<P: Prob>(p: &JointDistribution<P>, event: &Event, i: usize, j: usize, tol: f64) -> Result<bool> {
    let p = p.clone().with_tol(tol);
    let q_a = p.posterior_alice(i, event)?;
    let q_b = p.posterior_bob(j, event)?;
    let r = ck_closure(&p, event, &q_a, &q_b, tol)?;
    Ok(r.a_star.contains(&i) && r.b_star.contains(&j))
}

/// Groups defined posteriors into clusters of values within `tol` of their neighbour.
fn cluster<P: Prob>(posts: &[Option<P>], tol: f64) -> Vec<(P, BTreeSet<usize>)> {
    let mut attained: Vec<(P, usize)> = posts
        .iter()
        .enumerate()
        .filter_map(|(n, x)| x.clone().map(|x| (x, n)))
        .collect();
    attained.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("posteriors are finite"));
    let mut out: Vec<(P, BTreeSet<usize>)> = Vec::new();
    let mut last: Option<P> = None;
    for (q, n) in attained {
        match (&last, out.last_mut()) {
            (Some(prev), Some((_, members))) if prev.close_to(&q, tol) => {
                members.insert(n);
            }
            _ => out.push((q.clone(), BTreeSet::from([n]))),
        }
        last = Some(q);
    }
    out
}

/// Runs the closure for every pair of attained Alice and Bob posterior values.
///
/// Posteriors within `tol` of each other are treated as one value; the
/// reported `q` of a cluster is its smallest member. A report with
/// [`CKReport::is_violation`] would contradict the agreement theorem.
pub fn verify_agreement<P: Prob>(p: &JointDistribution<P>, event: &Event, tol: f64) -> Result<Vec<CKReport<P>>> {
    let p = p.clone().with_tol(tol);
    let alice = cluster(&p.posteriors_alice(event)?, tol);
    let bob = cluster(&p.posteriors_bob(event)?, tol);
    let mut reports = Vec::with_capacity(alice.len() * bob.len());
    for (q_a, a0) in &alice {
        for (q_b, b0) in &bob {
            reports.push(report_from(&p, q_a.clone(), q_b.clone(), a0.clone(), b0.clone(), tol));
        }
    }
    Ok(reports)
}

pub fn count_violations<P: Prob>(reports: &[CKReport<P>]) -> usize {
    reports.iter().filter(|r| r.is_violation()).count()
}

/// Positive-mass pairs `(i, j)` in a common-knowledge closure at which one agent
/// is certain of the event and the other certain of its complement.
pub fn singular_disagreement_witnesses<P: Prob>(p: &JointDistribution<P>, event: &Event, tol: f64) -> Result<Vec<(usize, usize)>> {
    let p = p.clone().with_tol(tol);
    let qa = p.posteriors_alice(event)?;
    let qb = p.posteriors_bob(event)?;
    let mut out = Vec::new();
    for (i, a) in qa.iter().enumerate() {
        for (j, b) in qb.iter().enumerate() {
            let (Some(a), Some(b)) = (a, b) else { continue };
            let opposed = (a.is_certain(tol) && b.is_negligible(tol)) || (a.is_negligible(tol) && b.is_certain(tol));
            if opposed && p.prob_ij(i, j).exceeds(tol) && is_common_knowledge(&p, event, i, j, tol)? {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

/// `true` when no singular disagreement exists; always the case for a valid table.
pub fn singular_disagreement_check<P: Prob>(p: &JointDistribution<P>, event: &Event, tol: f64) -> Result<bool> {
    Ok(singular_disagreement_witnesses(p, event, tol)?.is_empty())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round<P = f64> {
    /// Alice's announced posterior given her outcome and Bob's public consistency set.
    pub alice: P,
    /// Alice outcomes consistent with all announcements so far.
    pub consistent_a: BTreeSet<usize>,
    pub bob: P,
    pub consistent_b: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript<P = f64> {
    pub rounds: Vec<Round<P>>,
    pub final_alice: P,
    pub final_bob: P,
    /// The terminal public rectangle `R_A × R_B`.
    pub rect_a: BTreeSet<usize>,
    pub rect_b: BTreeSet<usize>,
}

/// Alternating public announcement of posteriors.
///
/// Both agents start from the full outcome axes as the public rectangle
/// `R_A × R_B`. In each round Alice announces `p(E | i, R_B)` and everyone
/// removes from `R_A` the outcomes that would have produced a different
/// announcement; Bob then announces `p(E | R_A, j)` and `R_B` is refined the
/// same way. The protocol stops after a round in which neither set changed.
/// Each non-final round removes at least one outcome, so at most
/// `|I| + |J| − 1` rounds are needed.
pub fn dynamic_protocol<P: Prob>(
    p: &JointDistribution<P>,
    event: &Event,
    i: usize,
    j: usize,
    max_rounds: usize,
    tol: f64,
) -> Result<Transcript<P>> {
    let p = p.clone().with_tol(tol);
    p.prob_event(event)?;
    let [ni, nj, _] = p.space().sizes();
    if i >= ni || j >= nj {
        return Err(Error::IndexOutOfRange {
            what: if i >= ni { "Alice outcome" } else { "Bob outcome" },
            index: if i >= ni { i } else { j },
            size: if i >= ni { ni } else { nj },
        });
    }
    let pair = p.prob_ij(i, j);
    if !pair.exceeds(tol) {
        return Err(Error::ZeroProbabilityConditioning {
            mass: pair.to_f64(),
            tol,
        });
    }
    let mut rect_a: BTreeSet<usize> = (0..ni).collect();
    let mut rect_b: BTreeSet<usize> = (0..nj).collect();
    let mut rounds = Vec::new();
    while rounds.len() < max_rounds {
        let mb = mask(nj, &rect_b);
        let alice_post = |x: usize| p.posterior_on(Some(&unit(ni, x)), Some(&mb), event).ok();
        let alice = alice_post(i).expect("true pair lies in the rectangle");
        let next_a: BTreeSet<usize> = rect_a
            .iter()
            .copied()
            .filter(|&x| alice_post(x).is_some_and(|q| q.close_to(&alice, tol)))
            .collect();

        let ma = mask(ni, &next_a);
        let bob_post = |y: usize| p.posterior_on(Some(&ma), Some(&unit(nj, y)), event).ok();
        let bob = bob_post(j).expect("true pair lies in the rectangle");
        let next_b: BTreeSet<usize> = rect_b
            .iter()
            .copied()
            .filter(|&y| bob_post(y).is_some_and(|q| q.close_to(&bob, tol)))
            .collect();

        let stable = next_a == rect_a && next_b == rect_b;
        rect_a = next_a;
        rect_b = next_b;
        rounds.push(Round {
            alice: alice.clone(),
            consistent_a: rect_a.clone(),
            bob: bob.clone(),
            consistent_b: rect_b.clone(),
        });
        if stable {
            return Ok(Transcript {
                rounds,
                final_alice: alice,
                final_bob: bob,
                rect_a,
                rect_b,
            });
        }
    }
    Err(Error::NoConvergence(max_rounds))
}

/// `p(E | R_A × R_B)`.
pub fn rectangle_posterior<P: Prob>(
    p: &JointDistribution<P>,
    event: &Event,
    rect_a: &BTreeSet<usize>,
    rect_b: &BTreeSet<usize>,
) -> Result<P> {
    p.prob_event(event)?;
    let [ni, nj, _] = p.space().sizes();
    p.posterior_on(Some(&mask(ni, rect_a)), Some(&mask(nj, rect_b)), event)
}

/// Treats the outcome triples as ontic states: state `(i, j, k)` (row-major)
/// carries prior `p(i, j, k)`, and the three partitions group states by
/// their `i`, `j` and `k` coordinate respectively.
pub fn as_effective_state_space<P: Prob>(p: &JointDistribution<P>, event: &Event) -> Result<ClassicalModel<P>> {
    let space = p.space();
    let by = |coord: fn((usize, usize, usize)) -> usize| {
        Partition::from_assignment(space.triples().map(coord).collect())
    };
    ClassicalModel::new(
        p.values().to_vec(),
        by(|t| t.0)?,
        by(|t| t.1)?,
        by(|t| t.2)?,
        event.members().iter().copied(),
        p.tol(),
    )
}
