//! Every agent gets at least `1/(kn)` of every measure with `n(k-1)` cuts.

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::allocation::{build_allocation, Allocation};
use crate::error::{domain, Result, SplitError};
use crate::measure::{ConsensusInstance, CountingOracle, StepMeasure};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedInterval {
    #[serde(with = "rational::serde_q")]
    pub left: Rational,
    #[serde(with = "rational::serde_q")]
    pub right: Rational,
    pub label: usize,
}

/// Sweeps left to right making `kn` marks. Each mark closes the shortest
/// interval worth `1/(kn)` to some measure that has fewer than `k` labels.
pub fn mark_phase(oracle: &CountingOracle<'_>, k: usize) -> Result<Vec<MarkedInterval>> {
    if k == 0 {
        return domain("need at least one agent");
    }
    if let Some(marks) = small::mark_phase(oracle, k) {
        return Ok(marks);
    }
    let n = oracle.instance().n();
    let quantum = rational::q(1, (k * n) as i64);
    let mut used = vec![0usize; n];
    let mut x = rational::zero();
    let mut marks = Vec::with_capacity(k * n);
    for _ in 0..k * n {
        let mut best: Option<(Rational, usize)> = None;
        for i in (0..n).filter(|&i| used[i] < k) {
            if let Some(y) = oracle.point(&x, i, &quantum)? {
                if best.as_ref().is_none_or(|(b, _)| &y < b) {
                    best = Some((y, i));
                }
            }
        }
        let (y, label) =
            best.ok_or_else(|| SplitError::Internal("marking ran out of measure".into()))?;
        used[label] += 1;
        marks.push(MarkedInterval {
            left: x,
            right: y.clone(),
            label,
        });
        x = y;
    }
    Ok(marks)
}

/// The same sweep in checked `i128` fractions; `None` on overflow.
mod small {
    use super::*;

    type Small = Ratio<i128>;

    fn small(r: &Rational) -> Option<Small> {
        Some(Ratio::new_raw(r.numer().to_i128()?, r.denom().to_i128()?))
    }

    fn big(r: &Small) -> Rational {
        Rational::new((*r.numer()).into(), (*r.denom()).into())
    }

    struct Measure {
        breakpoints: Vec<Small>,
        densities: Vec<Small>,
        cumulative: Vec<Small>,
    }

    impl Measure {
        fn new(m: &StepMeasure) -> Option<Self> {
            let breakpoints = m
                .breakpoints()
                .iter()
                .map(small)
                .collect::<Option<Vec<_>>>()?;
            let densities: Vec<Small> = m.densities().iter().map(small).collect::<Option<_>>()?;
            let mut cumulative = vec![Small::from_integer(0)];
            for (j, d) in densities.iter().enumerate() {
                let w = breakpoints[j + 1]
                    .checked_sub(&breakpoints[j])?
                    .checked_mul(d)?;
                cumulative.push(cumulative[j].checked_add(&w)?);
            }
            Some(Measure {
                breakpoints,
                densities,
                cumulative,
            })
        }

        /// `Err(())` on overflow, `Ok(None)` if the measure runs out.
        fn point_after(&self, x: &Small, delta: &Small) -> Result<Option<Small>, ()> {
            let j = self
                .breakpoints
                .partition_point(|b| b <= x)
                .saturating_sub(1)
                .min(self.densities.len() - 1);
            let at = x
                .checked_sub(&self.breakpoints[j])
                .and_then(|d| d.checked_mul(&self.densities[j]));
            let target = at
                .and_then(|a| a.checked_add(&self.cumulative[j]))
                .and_then(|c| c.checked_add(delta))
                .ok_or(())?;
            if &target > self.cumulative.last().unwrap() {
                return Ok(None);
            }
            let j = self.cumulative[1..].partition_point(|c| c < &target);
            let y = target
                .checked_sub(&self.cumulative[j])
                .and_then(|t| t.checked_div(&self.densities[j]))
                .and_then(|t| t.checked_add(&self.breakpoints[j]))
                .ok_or(())?;
            Ok(Some(y))
        }
    }

    pub(super) fn mark_phase(oracle: &CountingOracle<'_>, k: usize) -> Option<Vec<MarkedInterval>> {
        let instance = oracle.instance();
        let measures = instance
            .measures()
            .iter()
            .map(Measure::new)
            .collect::<Option<Vec<_>>>()?;
        let n = measures.len();
        let quantum = Small::new(1, (k * n) as i128);
        let mut used = vec![0usize; n];
        let mut x = Small::from_integer(0);
        let mut marks = Vec::with_capacity(k * n);
        let mut queries = 0;
        for _ in 0..k * n {
            let mut best: Option<(Small, usize)> = None;
            for i in (0..n).filter(|&i| used[i] < k) {
                queries += 1;
                if let Some(y) = measures[i].point_after(&x, &quantum).ok()? {
                    if best.as_ref().is_none_or(|(b, _)| &y < b) {
                        best = Some((y, i));
                    }
                }
            }
            let (y, label) = best?;
            used[label] += 1;
            marks.push(MarkedInterval {
                left: big(&x),
                right: big(&y),
                label,
            });
            x = y;
        }
        oracle.record(queries);
        Some(marks)
    }
}

/// Splits a sequence in which each of `n` labels occurs exactly `k` times so
/// that every agent gets one of each. Returns `(cut positions, assignees)`
/// where a cut `p` falls before bead `p`.
pub fn split_uniform_necklace(labels: &[usize], k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if k == 0 {
        return domain("need at least one agent");
    }
    let n = labels.iter().max().map_or(0, |&m| m + 1);
    let mut occurrences = vec![0usize; n];
    for &l in labels {
        occurrences[l] += 1;
    }
    if occurrences.iter().any(|&c| c != k) {
        return domain("every label must occur exactly k times");
    }
    let mut seen = vec![false; n];
    let mut cuts = Vec::new();
    let mut pieces: Vec<Vec<usize>> = Vec::new();
    for (p, &l) in labels.iter().enumerate() {
        if seen[l] {
            cuts.push(p);
            pieces.push(vec![l]);
        } else {
            seen[l] = true;
            match pieces.last_mut() {
                Some(piece) => piece.push(l),
                None => pieces.push(vec![l]),
            }
        }
    }
    let mut holds = vec![vec![false; n]; k];
    let mut assignee = Vec::with_capacity(pieces.len());
    for piece in &pieces {
        let a = (0..k)
            .find(|&a| piece.iter().all(|&l| !holds[a][l]))
            .ok_or_else(|| SplitError::Internal("no agent lacks the piece's labels".into()))?;
        for &l in piece {
            holds[a][l] = true;
        }
        assignee.push(a);
    }
    Ok((cuts, assignee))
}

#[derive(Debug, Clone)]
pub struct Type1Outcome {
    pub allocation: Allocation,
    pub marks: Vec<MarkedInterval>,
    pub oracle_calls: usize,
}

/// Marks, then splits the label sequence. The leftover piece after the last
/// mark joins the last marked interval.
pub fn type1_solve(instance: &ConsensusInstance, k: usize) -> Result<Type1Outcome> {
    let oracle = CountingOracle::new(instance);
    let marks = mark_phase(&oracle, k)?;
    let labels: Vec<usize> = marks.iter().map(|m| m.label).collect();
    let (cut_beads, assignee) = split_uniform_necklace(&labels, k)?;
    let cuts = cut_beads.iter().map(|&p| marks[p].left.clone()).collect();
    let allocation = build_allocation(instance, cuts, assignee, k)?;
    Ok(Type1Outcome {
        allocation,
        marks,
        oracle_calls: oracle.calls(),
    })
}
