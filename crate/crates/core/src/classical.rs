//! Finite ontic models: a prior over world states and three partitions.
//!
//! Alice and Bob learn which cell of their partition contains the true world
//! state; the event of interest is a union of cells of a third partition.
//! [`embed_classical`] turns such a model into a joint outcome table so the
//! classical machinery can be checked against the operational one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::{Event, JointDistribution, OutcomeSpace, Prob};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Agent {
    Alice,
    Bob,
}

/// A partition of `{0, …, n-1}` given as one cell index per state.
///
/// Cells are numbered `0..num_cells` and every cell is nonempty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    num_cells: usize,
}

impl Partition {
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidPartition("no states".into()));
        }
        let num_cells = assignment.iter().max().map_or(0, |m| m + 1);
        let used: BTreeSet<usize> = assignment.iter().copied().collect();
        if used.len() != num_cells {
            let missing = (0..num_cells).find(|c| !used.contains(c)).unwrap_or_default();
            return Err(Error::InvalidPartition(format!("cell {missing} is empty")));
        }
        Ok(Self {
            assignment,
            num_cells,
        })
    }

    /// Builds a partition from explicit cells, which must be disjoint and cover `0..num_states`.
    pub fn from_cells(num_states: usize, cells: &[Vec<usize>]) -> Result<Self> {
        let mut assignment = vec![usize::MAX; num_states];
        for (c, cell) in cells.iter().enumerate() {
            for &s in cell {
                if s >= num_states {
                    return Err(Error::InvalidPartition(format!("state {s} out of range")));
                }
                if assignment[s] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("state {s} is in two cells")));
                }
                assignment[s] = c;
            }
        }
        if let Some(s) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidPartition(format!("state {s} is not covered")));
        }
        Self::from_assignment(assignment)
    }

    /// The one-cell partition.
    pub fn trivial(num_states: usize) -> Self {
        Self {
            assignment: vec![0; num_states],
            num_cells: 1,
        }
    }

    pub fn num_states(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn cell_of(&self, state: usize) -> usize {
        self.assignment[state]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn members(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cell)
            .map(|(s, _)| s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalModel<P = f64> {
    prior: Vec<P>,
    part_a: Partition,
    part_b: Partition,
    part_e: Partition,
    event_cells: BTreeSet<usize>,
    tol: f64,
}

impl<P: Prob> ClassicalModel<P> {
    pub fn new(
        prior: Vec<P>,
        part_a: Partition,
        part_b: Partition,
        part_e: Partition,
        event_cells: impl IntoIterator<Item = usize>,
        tol: f64,
    ) -> Result<Self> {
        let n = prior.len();
        if n == 0 {
            return Err(Error::InvalidPrior("empty state space".into()));
        }
        for (name, part) in [("Alice", &part_a), ("Bob", &part_b), ("event", &part_e)] {
            if part.num_states() != n {
                return Err(Error::InvalidPartition(format!(
                    "{name} partition covers {} states, prior has {n}",
                    part.num_states()
                )));
            }
        }
        if let Some(s) = prior.iter().position(|p| p.is_negative()) {
            return Err(Error::InvalidPrior(format!("negative mass at state {s}")));
        }
        let total = prior.iter().cloned().fold(P::zero(), |a, b| a + b);
        if !total.close_to(&P::one(), tol) {
            return Err(Error::InvalidPrior(format!("total mass {} is not 1", total.to_f64())));
        }
        let event_cells: BTreeSet<usize> = event_cells.into_iter().collect();
        if let Some(&c) = event_cells.iter().find(|&&c| c >= part_e.num_cells()) {
            return Err(Error::IndexOutOfRange {
                what: "event cell",
                index: c,
                size: part_e.num_cells(),
            });
        }
        Ok(Self {
            prior,
            part_a,
            part_b,
            part_e,
            event_cells,
            tol,
        })
    }

    pub fn num_states(&self) -> usize {
        self.prior.len()
    }

    pub fn prior(&self) -> &[P] {
        &self.prior
    }

    pub fn partition(&self, agent: Agent) -> &Partition {
        match agent {
            Agent::Alice => &self.part_a,
            Agent::Bob => &self.part_b,
        }
    }

    pub fn event_partition(&self) -> &Partition {
        &self.part_e
    }

    pub fn event_cells(&self) -> &BTreeSet<usize> {
        &self.event_cells
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn in_event(&self, state: usize) -> bool {
        self.event_cells.contains(&self.part_e.cell_of(state))
    }

    fn cell_mass(&self, agent: Agent, cell: usize) -> P {
        self.partition(agent)
            .members(cell)
            .fold(P::zero(), |acc, s| acc + self.prior[s].clone())
    }

    /// `p(E ∩ Π_cell) / p(Π_cell)` for one agent's cell.
    pub fn classical_posterior(&self, agent: Agent, cell: usize) -> Result<P> {
        let part = self.partition(agent);
        if cell >= part.num_cells() {
            return Err(Error::IndexOutOfRange {
                what: "partition cell",
                index: cell,
                size: part.num_cells(),
            });
        }
        let mass = self.cell_mass(agent, cell);
        if !mass.exceeds(self.tol) {
            return Err(Error::ZeroMassCell { agent, cell });
        }
        let hit = part
            .members(cell)
            .filter(|&s| self.in_event(s))
            .fold(P::zero(), |acc, s| acc + self.prior[s].clone());
        Ok(hit / mass)
    }

    /// Posterior the agent would hold if the world were in `state`; `None` on a null cell.
    pub fn posterior_at(&self, agent: Agent, state: usize) -> Option<P> {
        self.classical_posterior(agent, self.partition(agent).cell_of(state)).ok()
    }

    /// The fixed point of the classical knowledge iteration, as per-state membership
    /// masks for `A_∞` and `B_∞`, plus the number of iterations that changed a set.
    ///
    /// A cell counts as contained in the other agent's set when all of its
    /// states of positive prior mass are; null states carry no information.
    pub fn classical_closure(&self, q_a: &P, q_b: &P) -> (Vec<bool>, Vec<bool>, usize) {
        let n = self.num_states();
        let level = |agent, q: &P| -> Vec<bool> {
            (0..n)
                .map(|s| self.posterior_at(agent, s).is_some_and(|p| p.close_to(q, self.tol)))
                .collect()
        };
        let mut a = level(Agent::Alice, q_a);
        let mut b = level(Agent::Bob, q_b);
        let support: Vec<bool> = self.prior.iter().map(|p| p.exceeds(self.tol)).collect();

        let knows = |part: &Partition, state: usize, other: &[bool]| {
            part.members(part.cell_of(state)).all(|s| !support[s] || other[s])
        };

        let mut steps = 0;
        loop {
            let next_a: Vec<bool> = (0..n).map(|s| a[s] && knows(&self.part_a, s, &b)).collect();
            let next_b: Vec<bool> = (0..n).map(|s| b[s] && knows(&self.part_b, s, &a)).collect();
            if next_a == a && next_b == b {
                return (a, b, steps);
            }
            a = next_a;
            b = next_b;
            steps += 1;
        }
    }

    /// Whether posteriors `(q_a, q_b)` are common knowledge at world state `omega`.
    pub fn classical_ck_at(&self, omega: usize, q_a: &P, q_b: &P) -> Result<bool> {
        if omega >= self.num_states() {
            return Err(Error::InvalidState(omega));
        }
        let (a, b, _) = self.classical_closure(q_a, q_b);
        Ok(a[omega] && b[omega])
    }
}

/// The joint outcome table `p(i, j, k) = Σ_{ω ∈ Π_i^A ∩ Π_j^B ∩ Π_k^E} p(ω)`
/// together with the event made of the model's event cells.
pub fn embed_classical<P: Prob>(model: &ClassicalModel<P>) -> Result<(JointDistribution<P>, Event)> {
    let space = OutcomeSpace::new(
        model.part_a.num_cells(),
        model.part_b.num_cells(),
        model.part_e.num_cells(),
    )?;
    let mut values = vec![P::zero(); space.len()];
    for (s, mass) in model.prior.iter().enumerate() {
        let idx = space.flat_index(
            model.part_a.cell_of(s),
            model.part_b.cell_of(s),
            model.part_e.cell_of(s),
        );
        values[idx] = values[idx].clone() + mass.clone();
    }
    let event = Event::new(&space, model.event_cells.iter().copied())?;
    let joint = JointDistribution::new(space, values, model.tol)?;
    Ok((joint, event))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probability::DEFAULT_TOL;
    use num_rational::BigRational;

    // Ω = {1,2,3,4} (indices 0..4), uniform.
    fn four_state() -> ClassicalModel {
        ClassicalModel::new(
            vec![0.25; 4],
            Partition::from_cells(4, &[vec![0, 1], vec![2, 3]]).unwrap(),
            Partition::from_cells(4, &[vec![0, 1, 2], vec![3]]).unwrap(),
            Partition::from_assignment(vec![0, 1, 1, 0]).unwrap(),
            [0],
            DEFAULT_TOL,
        )
        .unwrap()
    }

    // Brute force over worlds, written independently of the model code.
    fn enumerate_posterior(cell: &[usize], event: &[usize]) -> f64 {
        let hit = cell.iter().filter(|s| event.contains(s)).count();
        hit as f64 / cell.len() as f64
    }

    #[test]
    fn partitions_validate() {
        assert!(Partition::from_cells(3, &[vec![0], vec![0, 1, 2]]).is_err());
        assert!(Partition::from_cells(3, &[vec![0], vec![1]]).is_err());
        assert!(Partition::from_assignment(vec![0, 2]).is_err());
        let p = Partition::from_assignment(vec![1, 0, 1]).unwrap();
        assert_eq!(p.members(1).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn model_validation() {
        let t = Partition::trivial(2);
        assert!(ClassicalModel::new(vec![0.5, 0.4], t.clone(), t.clone(), t.clone(), [0], DEFAULT_TOL).is_err());
        assert!(ClassicalModel::new(vec![1.5, -0.5], t.clone(), t.clone(), t.clone(), [0], DEFAULT_TOL).is_err());
        assert!(ClassicalModel::new(vec![0.5, 0.5], t.clone(), t.clone(), t.clone(), [1], DEFAULT_TOL).is_err());
        assert!(ClassicalModel::new(vec![0.5, 0.5], t.clone(), Partition::trivial(3), t, [0], DEFAULT_TOL).is_err());
    }

    #[test]
    fn posteriors_match_enumeration() {
        let m = four_state();
        let event = [0, 3];
        assert_eq!(m.classical_posterior(Agent::Alice, 0).unwrap(), enumerate_posterior(&[0, 1], &event));
        assert_eq!(m.classical_posterior(Agent::Alice, 0).unwrap(), 0.5);
        assert_eq!(m.classical_posterior(Agent::Bob, 1).unwrap(), enumerate_posterior(&[3], &event));
        assert_eq!(m.classical_posterior(Agent::Bob, 1).unwrap(), 1.0);
        assert!((m.classical_posterior(Agent::Bob, 0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(m.classical_posterior(Agent::Bob, 2).is_err());
    }

    #[test]
    fn certain_event_has_posterior_one() {
        let m = ClassicalModel::new(
            vec![0.1, 0.2, 0.3, 0.4],
            Partition::from_assignment(vec![0, 1, 0, 1]).unwrap(),
            Partition::from_assignment(vec![0, 0, 1, 1]).unwrap(),
            Partition::from_assignment(vec![0, 1, 1, 0]).unwrap(),
            [0, 1],
            DEFAULT_TOL,
        )
        .unwrap();
        for cell in 0..2 {
            assert_eq!(m.classical_posterior(Agent::Alice, cell).unwrap(), 1.0);
            assert_eq!(m.classical_posterior(Agent::Bob, cell).unwrap(), 1.0);
        }
    }

    #[test]
    fn zero_mass_cell_is_an_error() {
        let m = ClassicalModel::new(
            vec![1.0, 0.0],
            Partition::from_assignment(vec![0, 1]).unwrap(),
            Partition::trivial(2),
            Partition::trivial(2),
            [0],
            DEFAULT_TOL,
        )
        .unwrap();
        assert_eq!(
            m.classical_posterior(Agent::Alice, 1).unwrap_err(),
            Error::ZeroMassCell { agent: Agent::Alice, cell: 1 }
        );
    }

    #[test]
    fn common_knowledge_at_a_state() {
        // trivial partitions: nobody learns anything
        let t = Partition::trivial(4);
        let m = ClassicalModel::new(
            vec![0.25; 4],
            t.clone(),
            t,
            Partition::from_assignment(vec![0, 1, 1, 0]).unwrap(),
            [0],
            DEFAULT_TOL,
        )
        .unwrap();
        for w in 0..4 {
            assert!(m.classical_ck_at(w, &0.5, &0.5).unwrap());
        }

        // B_1 = {1,2,3}, B_2 = ∅, then A_3 = ∅
        let m = four_state();
        let (a, b, steps) = m.classical_closure(&0.5, &(1.0 / 3.0));
        assert_eq!(a, vec![false; 4]);
        assert_eq!(b, vec![false; 4]);
        assert_eq!(steps, 3);
        assert!(!m.classical_ck_at(0, &0.5, &(1.0 / 3.0)).unwrap());

        // unattainable Alice posterior
        assert!(!m.classical_ck_at(0, &0.7, &1.0).unwrap());
        assert_eq!(m.classical_ck_at(9, &0.5, &0.5).unwrap_err(), Error::InvalidState(9));
    }

    #[test]
    fn embedding_of_four_state_model() {
        let (p, e) = embed_classical(&four_state()).unwrap();
        assert_eq!(p.space().sizes(), [2, 2, 2]);
        let mut expected = [0.0; 8];
        for (i, j, k) in [(0, 0, 0), (0, 0, 1), (1, 0, 1), (1, 1, 0)] {
            expected[p.space().flat_index(i, j, k)] = 0.25;
        }
        assert_eq!(p.values(), &expected[..]);
        assert_eq!(e.members().iter().copied().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn embedding_of_point_mass_and_trivial_model() {
        let m = ClassicalModel::new(
            vec![0.0, 0.0, 1.0],
            Partition::from_assignment(vec![0, 1, 1]).unwrap(),
            Partition::from_assignment(vec![0, 0, 1]).unwrap(),
            Partition::from_assignment(vec![1, 0, 1]).unwrap(),
            [0],
            DEFAULT_TOL,
        )
        .unwrap();
        let (p, _) = embed_classical(&m).unwrap();
        assert_eq!(*p.get(1, 1, 1), 1.0);
        assert_eq!(p.values().iter().sum::<f64>(), 1.0);

        let t = Partition::trivial(3);
        let m = ClassicalModel::new(vec![0.2, 0.3, 0.5], t.clone(), t.clone(), t, [0], DEFAULT_TOL).unwrap();
        let (p, _) = embed_classical(&m).unwrap();
        assert_eq!(p.space().sizes(), [1, 1, 1]);
        assert_eq!(p.values(), &[1.0]);
    }

    #[test]
    fn exact_rational_models() {
        let q = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        let m = ClassicalModel::new(
            vec![q(1, 3), q(1, 6), q(1, 2)],
            Partition::from_assignment(vec![0, 0, 1]).unwrap(),
            Partition::from_assignment(vec![0, 1, 1]).unwrap(),
            Partition::from_assignment(vec![0, 1, 0]).unwrap(),
            [0],
            DEFAULT_TOL,
        )
        .unwrap();
        assert_eq!(m.classical_posterior(Agent::Alice, 0).unwrap(), q(2, 3));
        assert_eq!(m.classical_posterior(Agent::Bob, 1).unwrap(), q(3, 4));
    }
}
