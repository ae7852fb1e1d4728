//! Cut sets, assignments, share accounting and validation.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::measure::{ConsensusInstance, NecklaceInstance};
use crate::rational::{self, Rational};

/// Cuts on `[0, 1]` plus one agent per resulting interval.
///
/// Interval `j` is `[cuts[j-1], cuts[j])` with the conventions `cuts[-1] = 0`
/// and a closed last interval ending at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub k: usize,
    #[serde(with = "rational::serde_qvec")]
    pub cuts: Vec<Rational>,
    pub assignee: Vec<usize>,
    /// `shares[a][i]` is agent `a`'s mass of measure `i`.
    #[serde(with = "rational::serde_qmat")]
    pub shares: Vec<Vec<Rational>>,
}

fn check_assignees(k: usize, cuts: usize, assignee: &[usize]) -> Result<()> {
    if k == 0 {
        return domain("need at least one agent");
    }
    if assignee.len() != cuts + 1 {
        return domain(format!(
            "{} cuts need {} assignees, got {}",
            cuts,
            cuts + 1,
            assignee.len()
        ));
    }
    if let Some(a) = assignee.iter().find(|&&a| a >= k) {
        return domain(format!("agent {a} outside [0, {k})"));
    }
    Ok(())
}

/// Computes exact shares for the given cuts and assignees.
pub fn build_allocation(
    instance: &ConsensusInstance,
    cuts: Vec<Rational>,
    assignee: Vec<usize>,
    k: usize,
) -> Result<Allocation> {
    check_assignees(k, cuts.len(), &assignee)?;
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return domain("cuts must be strictly increasing");
    }
    if cuts.first().is_some_and(|c| c <= &rational::zero())
        || cuts.last().is_some_and(|c| c >= &rational::one())
    {
        return domain("cuts must lie strictly inside (0, 1)");
    }
    let shares = interval_shares(instance, &cuts, &assignee, k);
    Ok(Allocation {
        k,
        cuts,
        assignee,
        shares,
    })
}

fn interval_shares(
    instance: &ConsensusInstance,
    cuts: &[Rational],
    assignee: &[usize],
    k: usize,
) -> Vec<Vec<Rational>> {
    let mut shares = vec![vec![rational::zero(); instance.n()]; k];
    for (i, measure) in instance.measures().iter().enumerate() {
        let mut prev = rational::zero();
        for (j, &a) in assignee.iter().enumerate() {
            let at = cuts
                .get(j)
                .map_or_else(|| measure.total().clone(), |c| measure.cdf(c));
            shares[a][i] += &at - &prev;
            prev = at;
        }
    }
    shares
}

impl Allocation {
    /// Wraps precomputed shares; callers that can recompute should prefer
    /// [`build_allocation`].
    pub fn from_parts(
        k: usize,
        cuts: Vec<Rational>,
        assignee: Vec<usize>,
        shares: Vec<Vec<Rational>>,
    ) -> Result<Self> {
        check_assignees(k, cuts.len(), &assignee)?;
        if shares.len() != k {
            return domain("shares need one row per agent");
        }
        Ok(Allocation {
            k,
            cuts,
            assignee,
            shares,
        })
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts.len()
    }

    /// Drops cuts between neighbouring intervals owned by the same agent.
    pub fn merged(mut self) -> Self {
        let (cuts, assignee) = merge_runs(
            std::mem::take(&mut self.cuts),
            std::mem::take(&mut self.assignee),
        );
        self.cuts = cuts;
        self.assignee = assignee;
        self
    }

    /// True when the stored shares match a recount against `instance`.
    pub fn shares_consistent(&self, instance: &ConsensusInstance) -> bool {
        interval_shares(instance, &self.cuts, &self.assignee, self.k) == self.shares
    }

    pub fn min_share(&self) -> Rational {
        self.shares
            .iter()
            .flatten()
            .min()
            .cloned()
            .unwrap_or_else(rational::zero)
    }
}

pub(crate) fn merge_runs<P>(cuts: Vec<P>, assignee: Vec<usize>) -> (Vec<P>, Vec<usize>) {
    let mut out_cuts = Vec::with_capacity(cuts.len());
    let mut out_assignee = vec![assignee[0]];
    for (c, a) in cuts.into_iter().zip(assignee.into_iter().skip(1)) {
        if *out_assignee.last().unwrap() != a {
            out_cuts.push(c);
            out_assignee.push(a);
        }
    }
    (out_cuts, out_assignee)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    #[serde(with = "rational::serde_qvec")]
    pub per_measure_max_pair_gap: Vec<Rational>,
    #[serde(with = "rational::serde_q")]
    pub overall: Rational,
}

/// Largest pairwise share gap per measure, i.e. max minus min over agents.
pub fn absolute_discrepancy(allocation: &Allocation) -> DiscrepancyReport {
    let n = allocation.shares.first().map_or(0, Vec::len);
    let per: Vec<Rational> = (0..n)
        .map(|i| {
            let col = allocation.shares.iter().map(|row| &row[i]);
            let hi = col.clone().max().unwrap();
            let lo = col.min().unwrap();
            hi - lo
        })
        .collect();
    let overall = per.iter().max().cloned().unwrap_or_else(rational::zero);
    DiscrepancyReport {
        per_measure_max_pair_gap: per,
        overall,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub pass: bool,
    pub cuts: usize,
    #[serde(with = "rational::serde_q")]
    pub discrepancy: Rational,
    #[serde(with = "rational::serde_q")]
    pub bound: Rational,
    /// Set when the stored shares do not add up to one per measure.
    pub conservation_error: Option<usize>,
}

/// Passes iff the absolute discrepancy is at most `2 eps / k`.
pub fn validate_proper_consensus(
    allocation: &Allocation,
    epsilon: &Rational,
    k: usize,
) -> ConsensusReport {
    let bound = epsilon * rational::q(2, k as i64);
    let disc = absolute_discrepancy(allocation).overall;
    let n = allocation.shares.first().map_or(0, Vec::len);
    let conservation_error = (0..n).find(|&i| {
        let total: Rational = allocation.shares.iter().map(|row| &row[i]).sum();
        total != rational::one()
    });
    ConsensusReport {
        pass: allocation.k == k && disc <= bound && conservation_error.is_none(),
        cuts: allocation.num_cuts(),
        discrepancy: disc,
        bound,
        conservation_error,
    }
}

/// Cuts between beads plus one agent per run of beads.
///
/// A cut `g` separates bead `g - 1` from bead `g`, so `1 <= g < N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NecklaceAllocation {
    pub k: usize,
    pub cuts: Vec<usize>,
    pub assignee: Vec<usize>,
    /// `counts[a][c]` is the number of color-`c` beads agent `a` holds.
    pub counts: Vec<Vec<usize>>,
}

pub fn build_necklace_allocation(
    necklace: &NecklaceInstance,
    cuts: Vec<usize>,
    assignee: Vec<usize>,
    k: usize,
) -> Result<NecklaceAllocation> {
    check_assignees(k, cuts.len(), &assignee)?;
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return domain("cuts must be strictly increasing");
    }
    if cuts.first() == Some(&0) || cuts.last().is_some_and(|&c| c >= necklace.len()) {
        return domain("cuts must lie strictly between beads");
    }
    let mut counts = vec![vec![0usize; necklace.n()]; k];
    let mut piece = 0;
    for (j, &color) in necklace.beads().iter().enumerate() {
        if piece < cuts.len() && cuts[piece] == j {
            piece += 1;
        }
        counts[assignee[piece]][color] += 1;
    }
    Ok(NecklaceAllocation {
        k,
        cuts,
        assignee,
        counts,
    })
}

impl NecklaceAllocation {
    pub fn num_cuts(&self) -> usize {
        self.cuts.len()
    }

    pub fn merged(mut self) -> Self {
        let (cuts, assignee) = merge_runs(
            std::mem::take(&mut self.cuts),
            std::mem::take(&mut self.assignee),
        );
        self.cuts = cuts;
        self.assignee = assignee;
        self
    }

    /// Owner of every bead, in order.
    pub fn owners(&self, len: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut piece = 0;
        for j in 0..len {
            if piece < self.cuts.len() && self.cuts[piece] == j {
                piece += 1;
            }
            out.push(self.assignee[piece]);
        }
        out
    }

    /// Per-color spread `max_a counts[a][c] - min_a counts[a][c]`.
    pub fn color_discrepancy(&self) -> Vec<usize> {
        let n = self.counts.first().map_or(0, Vec::len);
        (0..n)
            .map(|c| {
                let col = self.counts.iter().map(|row| row[c]);
                col.clone().max().unwrap() - col.min().unwrap()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NecklaceReport {
    pub pass: bool,
    pub cuts: usize,
    pub max_discrepancy: usize,
    /// `(agent, color, count)` triples outside `{floor(m_c/k), ceil(m_c/k)}`.
    pub violations: Vec<(usize, usize, usize)>,
}

/// Passes iff every agent holds `floor(m_c/k)` or `ceil(m_c/k)` beads of
/// every color.
pub fn validate_proper_necklace(
    necklace: &NecklaceInstance,
    allocation: &NecklaceAllocation,
    k: usize,
) -> NecklaceReport {
    let mut violations = Vec::new();
    if allocation.k != k || allocation.counts.len() != k {
        violations.push((k, 0, 0));
    } else {
        for (a, row) in allocation.counts.iter().enumerate() {
            for (c, (&have, &m)) in row.iter().zip(necklace.color_counts()).enumerate() {
                if have != m / k && have != m.div_ceil(k) {
                    violations.push((a, c, have));
                }
            }
        }
    }
    NecklaceReport {
        pass: violations.is_empty(),
        cuts: allocation.num_cuts(),
        max_discrepancy: allocation
            .color_discrepancy()
            .into_iter()
            .max()
            .unwrap_or(0),
        violations,
    }
}

/// Sum of shares per measure, useful for conservation checks.
pub fn share_totals(allocation: &Allocation) -> Vec<Rational> {
    let n = allocation.shares.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            allocation
                .shares
                .iter()
                .fold(Rational::zero(), |acc, row| acc + &row[i])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::StepMeasure;
    use crate::rational::{one, q, zero};

    fn uniform1() -> ConsensusInstance {
        ConsensusInstance::new(vec![StepMeasure::uniform()]).unwrap()
    }

    #[test]
    fn halves_of_uniform() {
        let a = build_allocation(&uniform1(), vec![q(1, 2)], vec![0, 1], 2).unwrap();
        assert_eq!(a.shares, vec![vec![q(1, 2)], vec![q(1, 2)]]);
        assert_eq!(absolute_discrepancy(&a).overall, zero());
        assert!(validate_proper_consensus(&a, &zero(), 2).pass);
    }

    #[test]
    fn whole_interval_to_one_agent() {
        let a = build_allocation(&uniform1(), vec![], vec![0], 2).unwrap();
        assert_eq!(a.shares[0], vec![one()]);
        assert_eq!(absolute_discrepancy(&a).overall, one());
        assert!(build_allocation(&uniform1(), vec![q(1, 2)], vec![0], 2).is_err());
    }

    #[test]
    fn discrepancy_from_unequal_shares() {
        let a = build_allocation(&uniform1(), vec![q(3, 4)], vec![0, 1], 2).unwrap();
        assert_eq!(absolute_discrepancy(&a).overall, q(1, 2));
    }

    #[test]
    fn proper_bound_is_inclusive_and_scales_with_k() {
        let eps = q(1, 4);
        // k = 2, discrepancy exactly eps
        let a = build_allocation(&uniform1(), vec![q(5, 8)], vec![0, 1], 2).unwrap();
        assert!(validate_proper_consensus(&a, &eps, 2).pass);
        // k = 4, discrepancy eps against bound eps/2
        let b = build_allocation(
            &uniform1(),
            vec![q(1, 4), q(1, 2), q(3, 4)],
            vec![0, 1, 2, 3],
            4,
        )
        .unwrap();
        let b = Allocation {
            shares: vec![vec![q(3, 8)], vec![q(1, 4)], vec![q(1, 4)], vec![q(1, 8)]],
            ..b
        };
        assert!(!validate_proper_consensus(&b, &eps, 4).pass);
    }

    #[test]
    fn necklace_counts() {
        let nk = NecklaceInstance::new(vec![0, 1, 0, 1]).unwrap();
        let a = build_necklace_allocation(&nk, vec![2], vec![0, 1], 2).unwrap();
        assert_eq!(a.counts, vec![vec![1, 1], vec![1, 1]]);
        assert!(validate_proper_necklace(&nk, &a, 2).pass);
        let all = build_necklace_allocation(&nk, vec![], vec![0], 2).unwrap();
        assert!(!validate_proper_necklace(&nk, &all, 2).pass);
        let single = NecklaceInstance::new(vec![0]).unwrap();
        let s = build_necklace_allocation(&single, vec![], vec![1], 2).unwrap();
        assert!(validate_proper_necklace(&single, &s, 2).pass);
    }

    #[test]
    fn merging_drops_redundant_cuts() {
        let a = build_allocation(&uniform1(), vec![q(1, 4), q(1, 2)], vec![0, 0, 1], 2)
            .unwrap()
            .merged();
        assert_eq!(a.cuts, vec![q(1, 2)]);
        assert_eq!(a.assignee, vec![0, 1]);
    }
}
