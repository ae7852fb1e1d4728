//! Step-density measures on `[0, 1]`, consensus and necklace instances, and
//! the two oracle query types.

use std::cell::Cell;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SplitError};
use crate::rational::{self, Rational};

/// A piecewise-constant density over rational breakpoints.
///
/// `StepMeasure::new` insists on total mass one. Unnormalized step functions
/// (the summed density of an instance) are built internally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepMeasure {
    breakpoints: Vec<Rational>,
    densities: Vec<Rational>,
    /// cumulative[j] = mass of [0, breakpoints[j]]
    cumulative: Vec<Rational>,
}

impl StepMeasure {
    pub fn new(breakpoints: Vec<Rational>, densities: Vec<Rational>) -> Result<Self> {
        let m = Self::unnormalized(breakpoints, densities)?;
        if !m.total().is_one() {
            return domain(format!(
                "measure has total mass {}, expected 1",
                rational::format(m.total())
            ));
        }
        Ok(m)
    }

    pub(crate) fn unnormalized(
        breakpoints: Vec<Rational>,
        densities: Vec<Rational>,
    ) -> Result<Self> {
        if breakpoints.len() < 2 || densities.len() + 1 != breakpoints.len() {
            return domain("need at least two breakpoints and one density per segment");
        }
        if !breakpoints[0].is_zero() || !breakpoints.last().unwrap().is_one() {
            return domain("breakpoints must start at 0 and end at 1");
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return domain("breakpoints must be strictly increasing");
        }
        if densities.iter().any(|d| d.is_negative()) {
            return domain("densities must be non-negative");
        }
        let mut cumulative = Vec::with_capacity(breakpoints.len());
        let mut acc = rational::zero();
        cumulative.push(acc.clone());
        for (w, d) in breakpoints.windows(2).zip(&densities) {
            acc += (&w[1] - &w[0]) * d;
            cumulative.push(acc.clone());
        }
        Ok(StepMeasure {
            breakpoints,
            densities,
            cumulative,
        })
    }

    /// Constant density one.
    pub fn uniform() -> Self {
        Self::new(
            vec![rational::zero(), rational::one()],
            vec![rational::one()],
        )
        .unwrap()
    }

    pub fn breakpoints(&self) -> &[Rational] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[Rational] {
        &self.densities
    }

    pub fn total(&self) -> &Rational {
        self.cumulative.last().unwrap()
    }

    fn segment_of(&self, x: &Rational) -> usize {
        // last j with breakpoints[j] <= x, clamped to a valid segment
        let j = self.breakpoints.partition_point(|b| b <= x);
        j.saturating_sub(1).min(self.densities.len() - 1)
    }

    /// Mass of `[0, x]`.
    pub fn cdf(&self, x: &Rational) -> Rational {
        let j = self.segment_of(x);
        &self.cumulative[j] + (x - &self.breakpoints[j]) * &self.densities[j]
    }

    /// Exact integral of the density over `[a, b]`.
    pub fn mass(&self, a: &Rational, b: &Rational) -> Result<Rational> {
        check_unit(a)?;
        check_unit(b)?;
        if a > b {
            return domain("interval endpoints out of order");
        }
        Ok(self.cdf(b) - self.cdf(a))
    }

    /// Smallest `y >= x` with mass `[x, y]` equal to `delta`, if any.
    pub fn point_after(&self, x: &Rational, delta: &Rational) -> Option<Rational> {
        if delta.is_zero() {
            return Some(x.clone());
        }
        let target = self.cdf(x) + delta;
        if &target > self.total() {
            return None;
        }
        // smallest segment j whose right end reaches the target
        let j = self.cumulative[1..].partition_point(|c| c < &target);
        let d = &self.densities[j];
        debug_assert!(!d.is_zero());
        Some(&self.breakpoints[j] + (&target - &self.cumulative[j]) / d)
    }
}

fn check_unit(x: &Rational) -> Result<()> {
    if x.is_negative() || x > &rational::one() {
        return domain(format!("point {} outside [0, 1]", rational::format(x)));
    }
    Ok(())
}

/// `n` probability measures on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ConsensusInstance {
    measures: Vec<StepMeasure>,
    sum: StepMeasure,
}

impl ConsensusInstance {
    pub fn new(measures: Vec<StepMeasure>) -> Result<Self> {
        if measures.is_empty() {
            return domain("an instance needs at least one measure");
        }
        let sum = sum_of(&measures)?;
        Ok(ConsensusInstance { measures, sum })
    }

    pub fn n(&self) -> usize {
        self.measures.len()
    }

    pub fn measures(&self) -> &[StepMeasure] {
        &self.measures
    }

    pub fn measure(&self, i: usize) -> Result<&StepMeasure> {
        self.measures
            .get(i)
            .ok_or_else(|| SplitError::Domain(format!("measure index {i} out of range")))
    }

    /// The summed density `mu = mu_1 + ... + mu_n`, total mass `n`.
    pub fn sum_measure(&self) -> &StepMeasure {
        &self.sum
    }

    pub fn measure_of_interval(&self, i: usize, a: &Rational, b: &Rational) -> Result<Rational> {
        self.measure(i)?.mass(a, b)
    }

    /// Mass vector `(mu_1([a,b]), ..., mu_n([a,b]))`.
    pub fn mass_vector(&self, a: &Rational, b: &Rational) -> Vec<Rational> {
        self.measures.iter().map(|m| m.cdf(b) - m.cdf(a)).collect()
    }

    /// Smallest `y >= x` with `mu_i([x, y]) = delta`, or 1 when none exists.
    pub fn oracle_point(&self, x: &Rational, i: usize, delta: &Rational) -> Result<Rational> {
        Ok(self
            .oracle_point_opt(x, i, delta)?
            .unwrap_or_else(rational::one))
    }

    pub fn oracle_point_opt(
        &self,
        x: &Rational,
        i: usize,
        delta: &Rational,
    ) -> Result<Option<Rational>> {
        check_unit(x)?;
        if delta.is_negative() {
            return domain("delta must be non-negative");
        }
        Ok(self.measure(i)?.point_after(x, delta))
    }

    /// Smallest `y >= x` with `sum_i mu_i([x, y]) = delta`, or 1 when none exists.
    pub fn oracle_sum_point(&self, x: &Rational, delta: &Rational) -> Result<Rational> {
        check_unit(x)?;
        if delta.is_negative() {
            return domain("delta must be non-negative");
        }
        Ok(self.sum.point_after(x, delta).unwrap_or_else(rational::one))
    }
}

fn sum_of(measures: &[StepMeasure]) -> Result<StepMeasure> {
    let mut points: Vec<Rational> = measures
        .iter()
        .flat_map(|m| m.breakpoints.iter().cloned())
        .collect();
    points.sort();
    points.dedup();
    let mut cursors = vec![0usize; measures.len()];
    let mut densities = Vec::with_capacity(points.len() - 1);
    for w in points.windows(2) {
        let mut d = rational::zero();
        for (m, c) in measures.iter().zip(cursors.iter_mut()) {
            while m.breakpoints[*c + 1] <= w[0] {
                *c += 1;
            }
            d += &m.densities[*c];
        }
        densities.push(d);
    }
    StepMeasure::unnormalized(points, densities)
}

/// Wraps an instance and counts oracle queries.
pub struct CountingOracle<'a> {
    instance: &'a ConsensusInstance,
    calls: Cell<usize>,
}

impl<'a> CountingOracle<'a> {
    pub fn new(instance: &'a ConsensusInstance) -> Self {
        CountingOracle {
            instance,
            calls: Cell::new(0),
        }
    }

    pub fn instance(&self) -> &ConsensusInstance {
        self.instance
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }

    pub fn point(&self, x: &Rational, i: usize, delta: &Rational) -> Result<Option<Rational>> {
        self.calls.set(self.calls.get() + 1);
        self.instance.oracle_point_opt(x, i, delta)
    }

    /// Counts `queries` answered outside this type on the same instance.
    pub(crate) fn record(&self, queries: usize) {
        self.calls.set(self.calls.get() + queries);
    }

    pub fn sum_point(&self, x: &Rational, delta: &Rational) -> Result<Rational> {
        self.calls.set(self.calls.get() + 1);
        self.instance.oracle_sum_point(x, delta)
    }
}

/// Beads ordered along a line, colors `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NecklaceInstance {
    beads: Vec<usize>,
    color_counts: Vec<usize>,
}

impl NecklaceInstance {
    /// The number of colors is `max(beads) + 1`; every color must occur.
    pub fn new(beads: Vec<usize>) -> Result<Self> {
        if beads.is_empty() {
            return domain("a necklace needs at least one bead");
        }
        let n = beads.iter().max().unwrap() + 1;
        Self::with_colors(beads, n)
    }

    pub fn with_colors(beads: Vec<usize>, n: usize) -> Result<Self> {
        if beads.is_empty() {
            return domain("a necklace needs at least one bead");
        }
        let mut color_counts = vec![0usize; n];
        for &b in &beads {
            if b >= n {
                return domain(format!("bead color {b} outside [0, {n})"));
            }
            color_counts[b] += 1;
        }
        if let Some(c) = color_counts.iter().position(|&c| c == 0) {
            return domain(format!("color {c} has no beads"));
        }
        Ok(NecklaceInstance {
            beads,
            color_counts,
        })
    }

    pub fn beads(&self) -> &[usize] {
        &self.beads
    }

    pub fn len(&self) -> usize {
        self.beads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beads.is_empty()
    }

    pub fn n(&self) -> usize {
        self.color_counts.len()
    }

    pub fn color_counts(&self) -> &[usize] {
        &self.color_counts
    }

    /// `m = max_i m_i`.
    pub fn max_count(&self) -> usize {
        *self.color_counts.iter().max().unwrap()
    }
}

/// Position map produced by [`necklace_to_consensus`]: bead `j` occupies
/// `[j/N, (j+1)/N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeadMap {
    pub beads: usize,
}

impl BeadMap {
    pub fn boundary(&self, gap: usize) -> Rational {
        rational::q(gap as i64, self.beads as i64)
    }

    /// Position scaled to bead units, `x * N`.
    pub fn to_bead_units(&self, x: &Rational) -> Rational {
        x * rational::int(self.beads as i64)
    }
}

/// Replaces every bead of color `i` by an interval of `mu_i`-mass `1/m_i`
/// and zero mass for other colors. All bead intervals have length `1/N`.
pub fn necklace_to_consensus(necklace: &NecklaceInstance) -> (ConsensusInstance, BeadMap) {
    let total = necklace.len();
    let nn = rational::int(total as i64);
    let mut measures = Vec::with_capacity(necklace.n());
    for (color, &m) in necklace.color_counts().iter().enumerate() {
        let dens = &nn / rational::int(m as i64);
        let mut bps = vec![rational::zero()];
        let mut ds: Vec<Rational> = Vec::new();
        let mut run_start = 0;
        for j in 1..=total {
            let same =
                j < total && (necklace.beads[j] == color) == (necklace.beads[run_start] == color);
            if !same {
                bps.push(rational::q(j as i64, total as i64));
                ds.push(if necklace.beads[run_start] == color {
                    dens.clone()
                } else {
                    rational::zero()
                });
                run_start = j;
            }
        }
        measures.push(StepMeasure::new(bps, ds).expect("necklace measure is normalized"));
    }
    let inst = ConsensusInstance::new(measures).expect("non-empty necklace");
    (inst, BeadMap { beads: total })
}

/// On-disk instance document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum InstanceFile {
    Consensus { measures: Vec<MeasureFile> },
    Necklace { beads: Vec<usize> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    #[serde(with = "rational::serde_qvec")]
    pub breakpoints: Vec<Rational>,
    #[serde(with = "rational::serde_qvec")]
    pub densities: Vec<Rational>,
}

impl InstanceFile {
    pub fn from_consensus(inst: &ConsensusInstance) -> Self {
        InstanceFile::Consensus {
            measures: inst
                .measures()
                .iter()
                .map(|m| MeasureFile {
                    breakpoints: m.breakpoints.clone(),
                    densities: m.densities.clone(),
                })
                .collect(),
        }
    }

    pub fn from_necklace(necklace: &NecklaceInstance) -> Self {
        InstanceFile::Necklace {
            beads: necklace.beads.clone(),
        }
    }

    pub fn into_consensus(self) -> Result<ConsensusInstance> {
        match self {
            InstanceFile::Consensus { measures } => ConsensusInstance::new(
                measures
                    .into_iter()
                    .map(|m| StepMeasure::new(m.breakpoints, m.densities))
                    .collect::<Result<_>>()?,
            ),
            InstanceFile::Necklace { .. } => {
                domain("expected a consensus instance, found a necklace")
            }
        }
    }

    pub fn into_necklace(self) -> Result<NecklaceInstance> {
        match self {
            InstanceFile::Necklace { beads } => NecklaceInstance::new(beads),
            InstanceFile::Consensus { .. } => {
                domain("expected a necklace, found a consensus instance")
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, one, q, zero};

    /// density 2 on [0, 1/2], 0 after
    fn front_loaded() -> StepMeasure {
        StepMeasure::new(vec![zero(), q(1, 2), one()], vec![int(2), zero()]).unwrap()
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(StepMeasure::new(vec![zero(), one()], vec![int(2)]).is_err());
        assert!(StepMeasure::new(
            vec![zero(), q(1, 2), q(1, 2), one()],
            vec![one(), one(), one()]
        )
        .is_err());
        assert!(StepMeasure::new(vec![zero(), q(1, 2), one()], vec![int(3), int(-1)]).is_err());
        assert!(StepMeasure::new(vec![q(1, 4), one()], vec![q(4, 3)]).is_err());
    }

    #[test]
    fn interval_masses() {
        let u = StepMeasure::uniform();
        assert_eq!(u.mass(&q(1, 5), &q(7, 10)).unwrap(), q(1, 2));
        assert_eq!(front_loaded().mass(&zero(), &q(1, 4)).unwrap(), q(1, 2));
        assert_eq!(u.mass(&q(1, 3), &q(1, 3)).unwrap(), zero());
        assert!(u.mass(&q(-1, 3), &q(1, 3)).is_err());
        assert!(u.mass(&q(1, 2), &q(3, 2)).is_err());
    }

    #[test]
    fn point_oracle() {
        let inst = ConsensusInstance::new(vec![StepMeasure::uniform(), front_loaded()]).unwrap();
        assert_eq!(inst.oracle_point(&zero(), 0, &q(1, 4)).unwrap(), q(1, 4));
        assert_eq!(inst.oracle_point(&q(9, 10), 0, &q(1, 5)).unwrap(), one());
        assert_eq!(inst.oracle_point(&zero(), 1, &one()).unwrap(), q(1, 2));
        assert!(inst.oracle_point(&zero(), 2, &one()).is_err());
    }

    #[test]
    fn sum_oracle() {
        let inst =
            ConsensusInstance::new(vec![StepMeasure::uniform(), StepMeasure::uniform()]).unwrap();
        assert_eq!(inst.oracle_sum_point(&zero(), &one()).unwrap(), q(1, 2));
        assert_eq!(inst.oracle_sum_point(&zero(), &int(2)).unwrap(), one());
        assert_eq!(inst.oracle_sum_point(&q(1, 3), &zero()).unwrap(), q(1, 3));
        assert_eq!(inst.sum_measure().total(), &int(2));
    }

    #[test]
    fn necklace_conversion() {
        let nk = NecklaceInstance::new(vec![0, 1, 0]).unwrap();
        assert_eq!(nk.color_counts(), &[2, 1]);
        let (inst, map) = necklace_to_consensus(&nk);
        let masses: Vec<Vec<Rational>> = (0..3)
            .map(|j| inst.mass_vector(&map.boundary(j), &map.boundary(j + 1)))
            .collect();
        assert_eq!(masses[0], vec![q(1, 2), zero()]);
        assert_eq!(masses[1], vec![zero(), one()]);
        assert_eq!(masses[2], vec![q(1, 2), zero()]);

        let (single, _) = necklace_to_consensus(&NecklaceInstance::new(vec![0]).unwrap());
        assert_eq!(single.measure(0).unwrap().total(), &one());

        let (pair, map) = necklace_to_consensus(&NecklaceInstance::new(vec![0, 0]).unwrap());
        assert_eq!(
            pair.measure_of_interval(0, &zero(), &map.boundary(1))
                .unwrap(),
            q(1, 2)
        );
    }

    #[test]
    fn necklace_rejects_missing_color() {
        assert!(NecklaceInstance::with_colors(vec![0, 0], 2).is_err());
        assert!(NecklaceInstance::new(vec![]).is_err());
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = ConsensusInstance::new(vec![front_loaded()]).unwrap();
        let text = InstanceFile::from_consensus(&inst).to_json();
        assert!(text.contains("\"1/2\""));
        let back = InstanceFile::from_json(&text)
            .unwrap()
            .into_consensus()
            .unwrap();
        assert_eq!(back.measures(), inst.measures());
        let nk = InstanceFile::from_json(r#"{"type":"necklace","beads":[0,1,0,1]}"#)
            .unwrap()
            .into_necklace()
            .unwrap();
        assert_eq!(nk.color_counts(), &[2, 2]);
    }
}
