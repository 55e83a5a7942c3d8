//! Finite joint distributions over outcome triples `(i, j, k)`.
//!
//! Alice observes `i`, Bob observes `j` and both reason about the outcome `k`
//! of a third measurement. Everything the agreement machinery needs is
//! computed from a [`JointDistribution`] by marginalisation and conditioning.
//!
//! Distributions are generic over the [`Prob`] scalar so the same code runs
//! in floating point (quantum and process backends) and in exact rational
//! arithmetic (classical cross-checks).

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for normalisation and probability equality.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Scalar type of a probability table.
///
/// Floating-point scalars honour the tolerance passed to each comparison;
/// exact scalars ignore it and compare exactly.
pub trait Prob: Clone + PartialOrd + fmt::Debug + Send + Sync + Signed + 'static {
    fn to_f64(&self) -> f64;

    /// The comparison slack used for this scalar type given a requested tolerance.
    fn slack(tol: f64) -> Self;

    /// `self > tol` (floating point) or `self > 0` (exact).
    fn exceeds(&self, tol: f64) -> bool {
        *self > Self::slack(tol)
    }

    fn close_to(&self, other: &Self, tol: f64) -> bool {
        (self.clone() - other.clone()).abs() <= Self::slack(tol)
    }

    /// `self >= 1 - tol`.
    fn is_certain(&self, tol: f64) -> bool {
        *self >= Self::one() - Self::slack(tol)
    }

    fn is_negligible(&self, tol: f64) -> bool {
        self.abs() <= Self::slack(tol)
    }
}

impl Prob for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }

    fn slack(tol: f64) -> Self {
        tol
    }
}

impl Prob for BigRational {
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn slack(_tol: f64) -> Self {
        BigRational::from_integer(BigInt::from(0))
    }
}

fn sum<P: Prob>(iter: impl IntoIterator<Item = P>) -> P {
    iter.into_iter().fold(P::zero(), |acc, x| acc + x)
}

/// One of the three outcome axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// Alice's outcome `i`.
    I,
    /// Bob's outcome `j`.
    J,
    /// Outcome `k` of the measurement the event is about.
    K,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::I, Axis::J, Axis::K];

    fn slot(self) -> usize {
        match self {
            Axis::I => 0,
            Axis::J => 1,
            Axis::K => 2,
        }
    }
}

/// The product space `I × J × K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    sizes: [usize; 3],
    #[serde(default)]
    labels: [Option<Vec<String>>; 3],
}

impl OutcomeSpace {
    pub fn new(size_i: usize, size_j: usize, size_k: usize) -> Result<Self> {
        if size_i == 0 || size_j == 0 || size_k == 0 {
            return Err(Error::InvalidSpace(format!(
                "axis sizes must be positive, got {size_i}x{size_j}x{size_k}"
            )));
        }
        Ok(Self {
            sizes: [size_i, size_j, size_k],
            labels: [None, None, None],
        })
    }

    /// Attaches unique text labels to one axis.
    pub fn with_labels(mut self, axis: Axis, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.size(axis) {
            return Err(Error::InvalidSpace(format!(
                "{} labels for axis {axis:?} of size {}",
                labels.len(),
                self.size(axis)
            )));
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::InvalidSpace(format!("duplicate labels on axis {axis:?}")));
        }
        self.labels[axis.slot()] = Some(labels);
        Ok(self)
    }

    pub fn size(&self, axis: Axis) -> usize {
        self.sizes[axis.slot()]
    }

    pub fn size_i(&self) -> usize {
        self.sizes[0]
    }

    pub fn size_j(&self) -> usize {
        self.sizes[1]
    }

    pub fn size_k(&self) -> usize {
        self.sizes[2]
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.sizes
    }

    pub fn labels(&self, axis: Axis) -> Option<&[String]> {
        self.labels[axis.slot()].as_deref()
    }

    /// Number of outcome triples.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major flat index of `(i, j, k)`.
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.sizes[1] + j) * self.sizes[2] + k
    }

    /// Iterates `(i, j, k)` in row-major order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let [si, sj, sk] = self.sizes;
        (0..si).flat_map(move |i| (0..sj).flat_map(move |j| (0..sk).map(move |k| (i, j, k))))
    }

    fn check(&self, axis: Axis, index: usize) -> Result<()> {
        let size = self.size(axis);
        if index >= size {
            return Err(Error::IndexOutOfRange {
                what: match axis {
                    Axis::I => "Alice outcome",
                    Axis::J => "Bob outcome",
                    Axis::K => "event outcome",
                },
                index,
                size,
            });
        }
        Ok(())
    }
}

/// A subset `E` of the event-measurement outcomes `K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    size_k: usize,
    members: BTreeSet<usize>,
}

impl Event {
    pub fn new(space: &OutcomeSpace, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let members: BTreeSet<usize> = members.into_iter().collect();
        for &k in &members {
            space.check(Axis::K, k)?;
        }
        Ok(Self {
            size_k: space.size_k(),
            members,
        })
    }

    pub fn empty(space: &OutcomeSpace) -> Self {
        Self {
            size_k: space.size_k(),
            members: BTreeSet::new(),
        }
    }

    pub fn full(space: &OutcomeSpace) -> Self {
        Self {
            size_k: space.size_k(),
            members: (0..space.size_k()).collect(),
        }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.members.contains(&k)
    }

    pub fn members(&self) -> &BTreeSet<usize> {
        &self.members
    }

    pub fn size_k(&self) -> usize {
        self.size_k
    }

    fn mask(&self) -> Vec<bool> {
        (0..self.size_k).map(|k| self.members.contains(&k)).collect()
    }

    fn check_space(&self, space: &OutcomeSpace) -> Result<()> {
        if self.size_k != space.size_k() {
            return Err(Error::DimensionMismatch(format!(
                "event defined over {} outcomes, distribution has {}",
                self.size_k,
                space.size_k()
            )));
        }
        Ok(())
    }
}

/// A subset of one axis, lifted to `M` by taking full ranges on the other axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisSet {
    pub axis: Axis,
    pub members: BTreeSet<usize>,
}

impl AxisSet {
    pub fn new(axis: Axis, members: impl IntoIterator<Item = usize>) -> Self {
        Self {
            axis,
            members: members.into_iter().collect(),
        }
    }
}

/// A marginal table over the retained axes, in the order `I`, `J`, `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<P = f64> {
    pub axes: Vec<Axis>,
    pub shape: Vec<usize>,
    pub values: Vec<P>,
}

impl<P: Prob> Table<P> {
    pub fn get(&self, index: &[usize]) -> &P {
        let flat = index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&x, &n)| acc * n + x);
        &self.values[flat]
    }

    pub fn total(&self) -> P {
        sum(self.values.iter().cloned())
    }
}

/// A validated common prior `p(i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution<P = f64> {
    space: OutcomeSpace,
    values: Vec<P>,
    tol: f64,
}

/// Validates a raw row-major table against `space`.
///
/// Entries in `[-tol, 0)` are clamped to zero; anything more negative, or a
/// total mass further than `tol` from one, is rejected.
pub fn validate_joint<P: Prob>(
    raw: Vec<P>,
    space: OutcomeSpace,
    tol: f64,
) -> Result<JointDistribution<P>> {
    JointDistribution::new(space, raw, tol)
}

impl<P: Prob> JointDistribution<P> {
    pub fn new(space: OutcomeSpace, mut values: Vec<P>, tol: f64) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::DimensionMismatch(format!(
                "table has {} entries, space {:?} needs {}",
                values.len(),
                space.sizes(),
                space.len()
            )));
        }
        for (index, v) in values.iter_mut().enumerate() {
            if *v < -P::slack(tol) || v.to_f64().is_nan() {
                return Err(Error::NegativeMass {
                    index,
                    value: v.to_f64(),
                });
            }
            if v.is_negative() {
                *v = P::zero();
            }
        }
        let total = sum(values.iter().cloned());
        if !total.close_to(&P::one(), tol) {
            return Err(Error::NotNormalized {
                total: total.to_f64(),
                tol,
            });
        }
        Ok(Self { space, values, tol })
    }

    /// Point mass at `(i, j, k)`.
    pub fn point_mass(space: OutcomeSpace, i: usize, j: usize, k: usize) -> Result<Self> {
        space.check(Axis::I, i)?;
        space.check(Axis::J, j)?;
        space.check(Axis::K, k)?;
        let mut values = vec![P::zero(); space.len()];
        values[space.flat_index(i, j, k)] = P::one();
        Self::new(space, values, DEFAULT_TOL)
    }

    pub fn space(&self) -> &OutcomeSpace {
        &self.space
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn values(&self) -> &[P] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> &P {
        &self.values[self.space.flat_index(i, j, k)]
    }

    /// Copy of this distribution with a different tolerance.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Same table with the roles of Alice and Bob exchanged.
    pub fn transpose_ij(&self) -> Self {
        let [si, sj, sk] = self.space.sizes();
        let space = OutcomeSpace {
            sizes: [sj, si, sk],
            labels: [
                self.space.labels[1].clone(),
                self.space.labels[0].clone(),
                self.space.labels[2].clone(),
            ],
        };
        let mut values = vec![P::zero(); self.values.len()];
        for (i, j, k) in self.space.triples() {
            values[space.flat_index(j, i, k)] = self.get(i, j, k).clone();
        }
        Self {
            space,
            values,
            tol: self.tol,
        }
    }

    pub fn to_f64(&self) -> JointDistribution<f64> {
        JointDistribution {
            space: self.space.clone(),
            values: self.values.iter().map(Prob::to_f64).collect(),
            tol: self.tol,
        }
    }

    /// Mass of the rectangle selected by per-axis masks (`None` = whole axis).
    pub(crate) fn rect_mass(&self, a: Option<&[bool]>, b: Option<&[bool]>, e: Option<&[bool]>) -> P {
        let keep = |mask: Option<&[bool]>, x: usize| mask.is_none_or(|m| m[x]);
        let mut acc = P::zero();
        for (i, j, k) in self.space.triples() {
            if keep(a, i) && keep(b, j) && keep(e, k) {
                acc = acc + self.get(i, j, k).clone();
            }
        }
        acc
    }

    fn masks(&self, sets: &[&AxisSet]) -> Result<[Option<Vec<bool>>; 3]> {
        let mut masks: [Option<Vec<bool>>; 3] = [None, None, None];
        for set in sets {
            let size = self.space.size(set.axis);
            for &x in &set.members {
                self.space.check(set.axis, x)?;
            }
            let slot = &mut masks[set.axis.slot()];
            let mask = slot.get_or_insert_with(|| vec![true; size]);
            for (x, m) in mask.iter_mut().enumerate() {
                *m &= set.members.contains(&x);
            }
        }
        Ok(masks)
    }

    /// Probability of the intersection of the lifted axis sets.
    pub fn mass(&self, sets: &[&AxisSet]) -> Result<P> {
        let [a, b, e] = self.masks(sets)?;
        Ok(self.rect_mass(a.as_deref(), b.as_deref(), e.as_deref()))
    }

    /// `p(target ∩ given) / p(given)` for lifted axis sets.
    pub fn conditional(&self, target: &[&AxisSet], given: &[&AxisSet]) -> Result<P> {
        let denom = self.mass(given)?;
        if !denom.exceeds(self.tol) {
            return Err(Error::ZeroProbabilityConditioning {
                mass: denom.to_f64(),
                tol: self.tol,
            });
        }
        let all: Vec<&AxisSet> = target.iter().chain(given).copied().collect();
        Ok(self.mass(&all)? / denom)
    }

    pub fn conditional_prob(&self, target: &AxisSet, given: &AxisSet) -> Result<P> {
        self.conditional(&[target], &[given])
    }

    /// Sums over the dropped axes.
    pub fn marginal(&self, axes: &[Axis]) -> Result<Table<P>> {
        let kept: BTreeSet<Axis> = axes.iter().copied().collect();
        if kept.is_empty() {
            return Err(Error::EmptyAxes);
        }
        let axes: Vec<Axis> = kept.into_iter().collect();
        let shape: Vec<usize> = axes.iter().map(|&a| self.space.size(a)).collect();
        let mut values = vec![P::zero(); shape.iter().product()];
        for (i, j, k) in self.space.triples() {
            let coords = [i, j, k];
            let flat = axes
                .iter()
                .zip(&shape)
                .fold(0, |acc, (a, &n)| acc * n + coords[a.slot()]);
            values[flat] = values[flat].clone() + self.get(i, j, k).clone();
        }
        Ok(Table {
            axes,
            shape,
            values,
        })
    }

    /// `p(i)`.
    pub fn prob_i(&self, i: usize) -> P {
        let sk = self.space.size_k();
        let sj = self.space.size_j();
        let start = self.space.flat_index(i, 0, 0);
        sum(self.values[start..start + sj * sk].iter().cloned())
    }

    /// `p(j)`.
    pub fn prob_j(&self, j: usize) -> P {
        let mut acc = P::zero();
        for i in 0..self.space.size_i() {
            for k in 0..self.space.size_k() {
                acc = acc + self.get(i, j, k).clone();
            }
        }
        acc
    }

    /// `p(i, j)`.
    pub fn prob_ij(&self, i: usize, j: usize) -> P {
        let start = self.space.flat_index(i, j, 0);
        sum(self.values[start..start + self.space.size_k()].iter().cloned())
    }

    /// `p(E)`.
    pub fn prob_event(&self, event: &Event) -> Result<P> {
        event.check_space(&self.space)?;
        Ok(self.rect_mass(None, None, Some(&event.mask())))
    }

    /// Alice's posterior `p(E | i)`.
    pub fn posterior_alice(&self, i: usize, event: &Event) -> Result<P> {
        self.space.check(Axis::I, i)?;
        event.check_space(&self.space)?;
        let mut a = vec![false; self.space.size_i()];
        a[i] = true;
        self.posterior_on(Some(&a), None, event)
    }

    /// Bob's posterior `p(E | j)`.
    pub fn posterior_bob(&self, j: usize, event: &Event) -> Result<P> {
        self.space.check(Axis::J, j)?;
        event.check_space(&self.space)?;
        let mut b = vec![false; self.space.size_j()];
        b[j] = true;
        self.posterior_on(None, Some(&b), event)
    }

    /// `p(E | rectangle)`.
    pub(crate) fn posterior_on(&self, a: Option<&[bool]>, b: Option<&[bool]>, event: &Event) -> Result<P> {
        let denom = self.rect_mass(a, b, None);
        if !denom.exceeds(self.tol) {
            return Err(Error::ZeroProbabilityConditioning {
                mass: denom.to_f64(),
                tol: self.tol,
            });
        }
        if event.members.is_empty() {
            return Ok(P::zero());
        }
        if event.members.len() == self.space.size_k() {
            return Ok(P::one());
        }
        Ok(self.rect_mass(a, b, Some(&event.mask())) / denom)
    }

    /// Alice's posterior for every outcome, `None` where `p(i)` is negligible.
    pub fn posteriors_alice(&self, event: &Event) -> Result<Vec<Option<P>>> {
        event.check_space(&self.space)?;
        (0..self.space.size_i())
            .map(|i| match self.posterior_alice(i, event) {
                Ok(p) => Ok(Some(p)),
                Err(Error::ZeroProbabilityConditioning { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }

    pub fn posteriors_bob(&self, event: &Event) -> Result<Vec<Option<P>>> {
        event.check_space(&self.space)?;
        (0..self.space.size_j())
            .map(|j| match self.posterior_bob(j, event) {
                Ok(p) => Ok(Some(p)),
                Err(Error::ZeroProbabilityConditioning { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }
}
