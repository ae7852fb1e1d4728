//! Offline necklace halving by moving the marks of a continuous solution to
//! bead boundaries, and the circular two-color splitter.

use std::collections::BTreeSet;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::allocation::{build_necklace_allocation, NecklaceAllocation};
use crate::error::{domain, Result, SplitError};
use crate::measure::{necklace_to_consensus, NecklaceInstance};
use crate::offline::offline_halving;
use crate::rational::{self, Rational};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixStats {
    pub initial_marks: usize,
    pub merged: usize,
    pub shifted_pairs: usize,
    pub rounded: usize,
    /// Largest change of any agent's color total caused by rounding, in beads.
    #[serde(with = "rational::serde_q")]
    pub rounding_shift: Rational,
}

/// Marks in bead units and the owners of the intervals between them.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Marks {
    beads: usize,
    at: Vec<Rational>,
    owners: Vec<usize>,
}

impl Marks {
    fn left(&self, j: usize) -> Rational {
        if j == 0 {
            rational::zero()
        } else {
            self.at[j - 1].clone()
        }
    }

    fn right(&self, j: usize) -> Rational {
        self.at
            .get(j)
            .cloned()
            .unwrap_or_else(|| rational::int(self.beads as i64))
    }

    /// Drops empty intervals and merges neighbours with the same owner.
    /// Returns how many marks disappeared.
    fn normalize(&mut self) -> usize {
        let before = self.at.len();
        let mut j = 0;
        while j < self.owners.len() && self.owners.len() > 1 {
            if self.left(j) == self.right(j) {
                self.owners.remove(j);
                self.at.remove(if j < self.at.len() { j } else { j - 1 });
                continue;
            }
            j += 1;
        }
        let mut j = 1;
        while j < self.owners.len() {
            if self.owners[j] == self.owners[j - 1] {
                self.owners.remove(j);
                self.at.remove(j - 1);
            } else {
                j += 1;
            }
        }
        before - self.at.len()
    }

    fn is_floating(&self, i: usize) -> bool {
        !self.at[i].is_integer()
    }

    fn color_at(&self, necklace: &NecklaceInstance, i: usize) -> usize {
        let bead = self.at[i].floor().to_integer();
        necklace.beads()[usize::try_from(bead).expect("mark inside the necklace")]
    }

    /// `+1` if moving mark `i` right gives agent 0 more, else `-1`.
    fn sign(&self, i: usize) -> Rational {
        if self.owners[i] == 0 {
            rational::one()
        } else {
            -rational::one()
        }
    }

    /// Exact bead totals `[agent][color]` with fractional beads.
    fn totals(&self, necklace: &NecklaceInstance, k: usize) -> Vec<Vec<Rational>> {
        let mut out = vec![vec![rational::zero(); necklace.n()]; k];
        for (j, &a) in self.owners.iter().enumerate() {
            let (l, r) = (self.left(j), self.right(j));
            let mut b = l.floor().to_integer();
            while rational::Rational::from_integer(b.clone()) < r {
                let lo = Rational::from_integer(b.clone()).max(l.clone());
                let hi = Rational::from_integer(&b + 1).min(r.clone());
                let idx = usize::try_from(&b).unwrap();
                out[a][necklace.beads()[idx]] += hi - lo;
                b += 1;
            }
        }
        out
    }
}

/// Moves marks of a two-agent solution to bead boundaries. `marks` are in
/// bead units (`0 < x < N`), `owners` has one more entry than `marks`.
pub fn fix_marks(
    necklace: &NecklaceInstance,
    marks: Vec<Rational>,
    owners: Vec<usize>,
) -> Result<(NecklaceAllocation, FixStats)> {
    if owners.len() != marks.len() + 1 || owners.iter().any(|&a| a > 1) {
        return domain("need one owner in {0, 1} per interval");
    }
    let mut m = Marks {
        beads: necklace.len(),
        at: marks,
        owners,
    };
    let mut stats = FixStats {
        initial_marks: m.at.len(),
        rounding_shift: rational::zero(),
        ..Default::default()
    };
    stats.merged += m.normalize();
    // pairs of floating marks in beads of the same color, leftmost first
    loop {
        let floating: Vec<usize> = (0..m.at.len()).filter(|&i| m.is_floating(i)).collect();
        let pair = floating.iter().enumerate().find_map(|(a, &p)| {
            let c = m.color_at(necklace, p);
            floating[a + 1..]
                .iter()
                .find(|&&q| m.color_at(necklace, q) == c)
                .map(|&q| (p, q))
        });
        let Some((p, q)) = pair else { break };
        shift_pair(&mut m, p, q);
        stats.shifted_pairs += 1;
        stats.merged += m.normalize();
    }
    let before = m.totals(necklace, 2);
    for i in 0..m.at.len() {
        if m.is_floating(i) {
            let x = &m.at[i];
            let lo = x.floor();
            let frac = x - &lo;
            // ties go left
            m.at[i] = if frac * rational::int(2) > rational::one() {
                lo + rational::one()
            } else {
                lo
            };
            stats.rounded += 1;
        }
    }
    let after = m.totals(necklace, 2);
    stats.rounding_shift = before
        .iter()
        .flatten()
        .zip(after.iter().flatten())
        .map(|(x, y)| rational::abs(&(x - y)))
        .max()
        .unwrap_or_else(rational::zero);
    stats.merged += m.normalize();
    let cuts =
        m.at.iter()
            .map(|x| {
                usize::try_from(x.to_integer())
                    .map_err(|_| SplitError::Internal("mark out of range".into()))
            })
            .collect::<Result<Vec<usize>>>()?;
    Ok((
        build_necklace_allocation(necklace, cuts, m.owners, 2)?,
        stats,
    ))
}

/// Moves floating marks `p < q` by `d_p > 0` and `d_q = -s_p s_q d_p`,
/// keeping both agents' totals, until one of them reaches a bead boundary
/// or runs into another mark.
fn shift_pair(m: &mut Marks, p: usize, q: usize) {
    let dq = -(m.sign(p) * m.sign(q));
    let n = rational::int(m.beads as i64);
    let room = |x: &Rational, dir: &Rational| -> Rational {
        if dir.is_positive() {
            x.floor() + rational::one() - x
        } else {
            x - x.floor()
        }
    };
    let mut step = room(&m.at[p], &rational::one()).min(room(&m.at[q], &dq));
    // neighbours of p on the right, q on either side
    let next_p = m.at.get(p + 1).cloned().unwrap_or_else(|| n.clone());
    if p + 1 == q {
        if dq.is_negative() {
            step = step.min((&m.at[q] - &m.at[p]) / rational::int(2));
        }
    } else {
        step = step.min(&next_p - &m.at[p]);
    }
    if dq.is_positive() {
        let next_q = m.at.get(q + 1).cloned().unwrap_or_else(|| n.clone());
        step = step.min(next_q - &m.at[q]);
    } else if p + 1 != q {
        step = step.min(&m.at[q] - &m.at[q - 1]);
    }
    m.at[p] += &step;
    m.at[q] += &step * &dq;
}

#[derive(Debug, Clone)]
pub struct OfflineNecklaceRun {
    pub allocation: NecklaceAllocation,
    pub continuous_cuts: usize,
    pub stats: FixStats,
}

/// Halves a necklace with per-color discrepancy at most one bead using at
/// most `n (3 + ceil(log2 m))` cuts.
pub fn offline_necklace_halving(necklace: &NecklaceInstance) -> Result<OfflineNecklaceRun> {
    let (instance, map) = necklace_to_consensus(necklace);
    let epsilon = rational::q(1, 2 * necklace.max_count() as i64);
    let run = offline_halving(&instance, &epsilon)?;
    let marks = run
        .allocation
        .cuts
        .iter()
        .map(|x| map.to_bead_units(x))
        .collect();
    let (allocation, stats) = fix_marks(necklace, marks, run.allocation.assignee.clone())?;
    Ok(OfflineNecklaceRun {
        allocation,
        continuous_cuts: run.allocation.num_cuts(),
        stats,
    })
}

pub fn necklace_cut_bound(n: usize, m: usize) -> usize {
    let l = rational::ceil_log2(&rational::int(m as i64)).max(0) as usize;
    n * (3 + l)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircularSplit {
    /// Cut positions on the circle; position `p` lies just before bead `p`.
    pub circle_cuts: Vec<usize>,
    /// The same split on the necklace opened before bead 0.
    pub allocation: NecklaceAllocation,
    /// Windows examined per level.
    pub windows_scanned: Vec<usize>,
}

/// Two colors, `k` agents, `k` dividing both counts: repeatedly take an arc
/// of `(m_1 + m_2)/k` beads holding exactly `m_1/k` beads of color 0.
pub fn two_color_circular_split(necklace: &NecklaceInstance, k: usize) -> Result<CircularSplit> {
    if necklace.n() != 2 {
        return domain("circular split needs exactly two colors");
    }
    let counts = necklace.color_counts();
    if k == 0 || !counts[0].is_multiple_of(k) || !counts[1].is_multiple_of(k) {
        return domain("k must divide both color counts");
    }
    let total = necklace.len();
    let len = total / k;
    let want = counts[0] / k;
    let beads = necklace.beads();
    let mut owner: Vec<Option<usize>> = vec![None; total];
    let mut cuts: BTreeSet<usize> = BTreeSet::new();
    let mut windows_scanned = Vec::new();
    for agent in 0..k {
        let remaining: Vec<usize> = (0..total).filter(|&b| owner[b].is_none()).collect();
        if agent + 1 == k {
            for b in remaining {
                owner[b] = Some(agent);
            }
            windows_scanned.push(0);
            break;
        }
        let r = remaining.len();
        let new_cuts = |s: usize| -> BTreeSet<usize> {
            [remaining[s], (remaining[(s + len - 1) % r] + 1) % total]
                .into_iter()
                .collect()
        };
        let mut first_valid = None;
        let mut chosen = None;
        let mut zeros = (0..len).filter(|&i| beads[remaining[i]] == 0).count();
        let mut scanned = 0;
        for s in 0..r {
            scanned += 1;
            if zeros == want {
                first_valid.get_or_insert(s);
                if new_cuts(s).is_disjoint(&cuts) {
                    chosen = Some(s);
                    break;
                }
            }
            zeros -= (beads[remaining[s]] == 0) as usize;
            zeros += (beads[remaining[(s + len) % r]] == 0) as usize;
        }
        windows_scanned.push(scanned);
        let s = chosen
            .or(first_valid)
            .ok_or_else(|| SplitError::Internal("no balanced window on the circle".into()))?;
        for i in 0..len {
            owner[remaining[(s + i) % r]] = Some(agent);
        }
        cuts.extend(new_cuts(s));
    }
    let owners: Vec<usize> = owner.into_iter().map(|o| o.unwrap()).collect();
    // cut points are exactly where the owner changes around the circle
    let circle_cuts: Vec<usize> = (0..total)
        .filter(|&p| owners[p] != owners[(p + total - 1) % total])
        .collect();
    let linear: Vec<usize> = circle_cuts.iter().copied().filter(|&p| p != 0).collect();
    let mut assignee = vec![owners[0]];
    assignee.extend(linear.iter().map(|&p| owners[p]));
    let allocation = build_necklace_allocation(necklace, linear, assignee, k)?;
    Ok(CircularSplit {
        circle_cuts,
        allocation,
        windows_scanned,
    })
}


#[cfg(test)]
mod random_tests {
    use super::*;
    use crate::allocation::validate_proper_necklace;
    use crate::generate::generate_necklace;

    #[test]
    fn random_necklaces_are_proper() {
        for seed in 0..20 {
            let counts = vec![2 + (seed as usize % 5), 3, 4 + (seed as usize % 3)];
            let nk = generate_necklace(seed, &counts).unwrap();
            let run = offline_necklace_halving(&nk).unwrap();
            let rep = validate_proper_necklace(&nk, &run.allocation, 2);
            assert!(rep.pass, "seed {seed}: {rep:?}");
            assert!(run.allocation.num_cuts() <= necklace_cut_bound(3, nk.max_count()));
        }
    }
}
