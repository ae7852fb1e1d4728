//! Offline consensus halving and splitting by rounding a fractional
//! solution one basic step at a time.
//!
//! The interval is cut into pieces of equal summed mass, every piece starts
//! with the same fractional coefficient, and exact kernel steps push
//! coefficients to 0 or 1 while keeping `sum_r c_r v_r` fixed. Pieces that
//! stay fractional are halved and the process repeats until they are small
//! enough to be given away.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::allocation::{build_allocation, merge_runs, Allocation};
use crate::error::{domain, Result, SplitError};
use crate::measure::ConsensusInstance;
use crate::rational::{self, Rational};

/// A union of disjoint intervals, left to right.
pub type Part = Vec<(Rational, Rational)>;

fn sum_mass(instance: &ConsensusInstance, a: &Rational, b: &Rational) -> Rational {
    let s = instance.sum_measure();
    s.cdf(b) - s.cdf(a)
}

pub fn part_mass(instance: &ConsensusInstance, part: &Part) -> Rational {
    part.iter().map(|(a, b)| sum_mass(instance, a, b)).sum()
}

pub fn part_vector(instance: &ConsensusInstance, part: &Part) -> Vec<Rational> {
    let mut v = vec![rational::zero(); instance.n()];
    for (a, b) in part {
        for (x, m) in v.iter_mut().zip(instance.mass_vector(a, b)) {
            *x += m;
        }
    }
    v
}

/// Splits off the shortest prefix of `part` with summed mass `target`.
fn take_prefix(instance: &ConsensusInstance, part: &Part, target: &Rational) -> (Part, Part) {
    let mut prefix = Vec::new();
    let mut suffix = Vec::new();
    let mut need = target.clone();
    for (a, b) in part {
        if need.is_zero() {
            suffix.push((a.clone(), b.clone()));
            continue;
        }
        let m = sum_mass(instance, a, b);
        if m < need {
            need -= m;
            prefix.push((a.clone(), b.clone()));
            continue;
        }
        let y = instance
            .oracle_sum_point(a, &need)
            .expect("point inside [0, 1]");
        let y = if &y > b { b.clone() } else { y };
        if &y > a {
            prefix.push((a.clone(), y.clone()));
        }
        if &y < b {
            suffix.push((y, b.clone()));
        }
        need = rational::zero();
    }
    (prefix, suffix)
}

/// Splits `region` into `parts` pieces of equal summed mass.
pub fn equal_sum_parts(instance: &ConsensusInstance, region: &Part, parts: usize) -> Vec<Part> {
    let quantum = part_mass(instance, region) / rational::int(parts as i64);
    let mut rest = region.clone();
    let mut out = Vec::with_capacity(parts);
    for _ in 1..parts {
        let (p, r) = take_prefix(instance, &rest, &quantum);
        out.push(p);
        rest = r;
    }
    out.push(rest);
    out
}

/// Cuts splitting `[0, 1]` into `parts` pieces of summed mass `n / parts`.
pub fn equal_sum_partition(instance: &ConsensusInstance, parts: usize) -> Result<Vec<Rational>> {
    if parts == 0 {
        return domain("need at least one part");
    }
    let quantum = rational::int(instance.n() as i64) / rational::int(parts as i64);
    let mut x = rational::zero();
    let mut cuts = Vec::with_capacity(parts - 1);
    for _ in 1..parts {
        x = instance.oracle_sum_point(&x, &quantum)?;
        cuts.push(x.clone());
    }
    Ok(cuts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientSystem {
    pub parts: Vec<Part>,
    pub vectors: Vec<Vec<Rational>>,
    pub coefficients: Vec<Rational>,
}

impl CoefficientSystem {
    pub fn new(instance: &ConsensusInstance, parts: Vec<Part>, start: &Rational) -> Self {
        let vectors = parts.iter().map(|p| part_vector(instance, p)).collect();
        let coefficients = vec![start.clone(); parts.len()];
        CoefficientSystem {
            parts,
            vectors,
            coefficients,
        }
    }

    /// Builds a system directly from vectors, with empty parts.
    pub fn from_vectors(vectors: Vec<Vec<Rational>>, coefficients: Vec<Rational>) -> Self {
        CoefficientSystem {
            parts: vec![Vec::new(); vectors.len()],
            vectors,
            coefficients,
        }
    }

    pub fn is_floating(&self, r: usize) -> bool {
        let c = &self.coefficients[r];
        !c.is_zero() && !c.is_one()
    }

    pub fn floating(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&r| self.is_floating(r))
            .collect()
    }

    /// `sum_r c_r v_r`.
    pub fn weighted_sum(&self) -> Vec<Rational> {
        let n = self.vectors.first().map_or(0, Vec::len);
        let mut out = vec![rational::zero(); n];
        for (v, c) in self.vectors.iter().zip(&self.coefficients) {
            if !c.is_zero() {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += c * x;
                }
            }
        }
        out
    }

    fn mu(&self, r: usize) -> Rational {
        self.vectors[r].iter().sum()
    }
}

/// Reduced row echelon form of the floating columns, kept up to date while
/// columns and measures leave. Every pivot column is a unit vector, and
/// `trans` records each row as a combination of the measure rows.
struct Echelon {
    /// Part index of each column.
    cols: Vec<usize>,
    rows: Vec<Vec<Rational>>,
    /// `rows[r] = sum_j trans[r][j] * (row of dims[j])`.
    trans: Vec<Vec<Rational>>,
    /// Column position of each row's pivot; `None` for zero rows.
    pivot: Vec<Option<usize>>,
    dims: Vec<usize>,
}

impl Echelon {
    fn new(system: &CoefficientSystem, dims: &[usize], cols: Vec<usize>) -> Self {
        let d = dims.len();
        let rows: Vec<Vec<Rational>> = dims
            .iter()
            .map(|&i| cols.iter().map(|&r| system.vectors[r][i].clone()).collect())
            .collect();
        let trans = (0..d)
            .map(|r| {
                (0..d)
                    .map(|j| {
                        if r == j {
                            rational::one()
                        } else {
                            rational::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        let mut e = Echelon {
            cols,
            rows,
            trans,
            pivot: vec![None; d],
            dims: dims.to_vec(),
        };
        let mut row = 0;
        for col in 0..e.cols.len() {
            if row == d {
                break;
            }
            let Some(p) = (row..d).find(|&r| !e.rows[r][col].is_zero()) else {
                continue;
            };
            e.rows.swap(row, p);
            e.trans.swap(row, p);
            e.eliminate(row, col);
            e.pivot[row] = Some(col);
            row += 1;
        }
        e
    }

    fn scale_row(v: &mut [Rational], f: &Rational) {
        for x in v.iter_mut().filter(|x| !x.is_zero()) {
            *x *= f;
        }
    }

    fn sub_row(target: &mut [Rational], f: &Rational, source: &[Rational]) {
        for (x, s) in target.iter_mut().zip(source) {
            if !s.is_zero() {
                *x -= f * s;
            }
        }
    }

    /// Scales `row` so that `col` is one and clears `col` in every other row.
    fn eliminate(&mut self, row: usize, col: usize) {
        let inv = self.rows[row][col].recip();
        if !inv.is_one() {
            Self::scale_row(&mut self.rows[row], &inv);
            Self::scale_row(&mut self.trans[row], &inv);
        }
        let pr = self.rows[row].clone();
        let pt = self.trans[row].clone();
        for r in (0..self.rows.len()).filter(|&r| r != row) {
            if self.rows[r][col].is_zero() {
                continue;
            }
            let f = self.rows[r][col].clone();
            Self::sub_row(&mut self.rows[r], &f, &pr);
            Self::sub_row(&mut self.trans[r], &f, &pt);
        }
    }

    fn is_pivot(&self, col: usize) -> bool {
        self.pivot.contains(&Some(col))
    }

    /// Kernel vector of the first free column, first nonzero entry positive.
    fn kernel(&self) -> Option<Vec<Rational>> {
        let free = (0..self.cols.len()).find(|&c| !self.is_pivot(c))?;
        let mut z = vec![rational::zero(); self.cols.len()];
        z[free] = rational::one();
        for (row, p) in self.pivot.iter().enumerate() {
            if let Some(pc) = *p {
                z[pc] = -self.rows[row][free].clone();
            }
        }
        if z.iter()
            .find(|x| !x.is_zero())
            .is_some_and(|x| x.is_negative())
        {
            z.iter_mut().for_each(|x| *x = -x.clone());
        }
        Some(z)
    }

    /// Appends the column of part `r`, expressed through `trans`.
    fn add_column(&mut self, system: &CoefficientSystem, r: usize) {
        let a: Vec<&Rational> = self.dims.iter().map(|&i| &system.vectors[r][i]).collect();
        for (row, t) in self.rows.iter_mut().zip(&self.trans) {
            let mut e = rational::zero();
            for (x, y) in t.iter().zip(&a) {
                if !x.is_zero() && !y.is_zero() {
                    e += x * *y;
                }
            }
            row.push(e);
        }
        let col = self.cols.len();
        self.cols.push(r);
        if let Some(row) = (0..self.rows.len())
            .find(|&row| self.pivot[row].is_none() && !self.rows[row][col].is_zero())
        {
            self.eliminate(row, col);
            self.pivot[row] = Some(col);
        }
    }

    /// Drops column `col`, re-pivoting its row on another column if needed.
    fn remove_column(&mut self, col: usize) {
        if let Some(row) = self.pivot.iter().position(|&p| p == Some(col)) {
            let replacement = (0..self.cols.len())
                .find(|&c| c != col && !self.is_pivot(c) && !self.rows[row][c].is_zero());
            self.pivot[row] = replacement;
            if let Some(c) = replacement {
                self.eliminate(row, c);
            }
        }
        for r in self.rows.iter_mut() {
            r.remove(col);
        }
        for p in self.pivot.iter_mut().flatten() {
            if *p > col {
                *p -= 1;
            }
        }
        self.cols.remove(col);
    }

    /// Drops the constraint of the measure at position `j` of the dims.
    fn remove_dim(&mut self, j: usize) {
        let candidates = (0..self.rows.len()).filter(|&r| !self.trans[r][j].is_zero());
        let chosen = candidates
            .clone()
            .find(|&r| self.pivot[r].is_none())
            .or_else(|| candidates.clone().next());
        if let Some(row) = chosen {
            let inv = self.trans[row][j].recip();
            let pr = self.rows[row].clone();
            let pt = self.trans[row].clone();
            for r in (0..self.rows.len()).filter(|&r| r != row) {
                if self.trans[r][j].is_zero() {
                    continue;
                }
                let f = &self.trans[r][j] * &inv;
                Self::sub_row(&mut self.rows[r], &f, &pr);
                Self::sub_row(&mut self.trans[r], &f, &pt);
            }
            self.rows.remove(row);
            self.trans.remove(row);
            self.pivot.remove(row);
        }
        for t in self.trans.iter_mut() {
            t.remove(j);
        }
        self.dims.remove(j);
    }
}

/// Largest `t >= 0` keeping every `c + t z` inside `[0, 1]`.
fn max_step(coeffs: &[&Rational], z: &[Rational]) -> Rational {
    coeffs
        .iter()
        .zip(z)
        .filter(|(_, d)| !d.is_zero())
        .map(|(&c, d)| {
            if d.is_positive() {
                (rational::one() - c) / d
            } else {
                c / -d
            }
        })
        .min()
        .expect("kernel vector is nonzero")
}

fn reduce_echelon(
    system: &mut CoefficientSystem,
    ech: &mut Echelon,
    waiting: &mut Vec<usize>,
) -> Result<usize> {
    let dims = ech.dims.len();
    let mut steps = 0;
    loop {
        while ech.cols.len() <= dims {
            match waiting.pop() {
                Some(r) => ech.add_column(system, r),
                None => return Ok(steps),
            }
        }
        let z = ech.kernel().ok_or_else(|| {
            SplitError::Internal("no kernel vector despite surplus columns".into())
        })?;
        let coeffs: Vec<&Rational> = ech.cols.iter().map(|&r| &system.coefficients[r]).collect();
        let up = max_step(&coeffs, &z);
        let neg: Vec<Rational> = z.iter().map(|x| -x.clone()).collect();
        let down = max_step(&coeffs, &neg);
        let (t, dir) = if down < up { (down, &neg) } else { (up, &z) };
        for (&r, d) in ech.cols.iter().zip(dir) {
            if !d.is_zero() {
                system.coefficients[r] += &t * d;
            }
        }
        let mut c = ech.cols.len();
        while c > 0 {
            c -= 1;
            if !system.is_floating(ech.cols[c]) {
                ech.remove_column(c);
            }
        }
        steps += 1;
    }
}

/// Starts an echelon form on the first `dims + 1` floating columns; the
/// rest wait, last floating part on top.
fn start_echelon(system: &CoefficientSystem, dims: &[usize]) -> (Echelon, Vec<usize>) {
    let floating = system.floating();
    let split = floating.len().min(dims.len() + 1);
    let waiting: Vec<usize> = floating[split..].iter().rev().copied().collect();
    (
        Echelon::new(system, dims, floating[..split].to_vec()),
        waiting,
    )
}

/// Moves floating coefficients along exact kernel directions until at most
/// `dims.len()` remain floating. Each step follows the kernel vector of the
/// first free column of the echelon form, in whichever direction reaches a
/// bound first (positive on ties). Returns the number of steps taken.
pub fn reduce_floating(system: &mut CoefficientSystem, dims: &[usize]) -> Result<usize> {
    if system.floating().len() <= dims.len() {
        return Ok(0);
    }
    let (mut ech, mut waiting) = start_echelon(system, dims);
    reduce_echelon(system, &mut ech, &mut waiting)
}

/// Retires measures whose floating mass is at most `threshold`, lowest
/// index first, until every coefficient is 0 or 1. Returns the retirement
/// order.
pub fn final_assignment(
    system: &mut CoefficientSystem,
    dims: &[usize],
    threshold: &Rational,
) -> Result<Vec<usize>> {
    let mut dims = dims.to_vec();
    let mut retired = Vec::new();
    let (mut ech, mut waiting) = start_echelon(system, &dims);
    reduce_echelon(system, &mut ech, &mut waiting)?;
    while !ech.cols.is_empty() {
        let pos = dims
            .iter()
            .position(|&i| {
                ech.cols
                    .iter()
                    .map(|&r| &system.vectors[r][i])
                    .sum::<Rational>()
                    <= *threshold
            })
            .ok_or_else(|| SplitError::Internal("no measure with small floating mass".into()))?;
        retired.push(dims.remove(pos));
        ech.remove_dim(pos);
        reduce_echelon(system, &mut ech, &mut waiting)?;
    }
    Ok(retired)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundingStats {
    pub rounds: usize,
    pub reductions: usize,
    /// Whether every reduction ended with floating count within dimension.
    pub floating_within_dims: bool,
}

/// Splits `region` into (owned, rest) where the owned side carries about
/// `fraction` of every measure of the region, within `threshold`.
fn round_region(
    instance: &ConsensusInstance,
    region: &Part,
    fraction: &Rational,
    threshold: &Rational,
    stats: &mut RoundingStats,
) -> Result<(Vec<Part>, Vec<Part>)> {
    let n = instance.n();
    let dims: Vec<usize> = (0..n).collect();
    let parts = equal_sum_parts(instance, region, 2 * n);
    let mut system = CoefficientSystem::new(instance, parts, fraction);
    let target = system.weighted_sum();
    let reduce = |system: &mut CoefficientSystem, stats: &mut RoundingStats| -> Result<()> {
        stats.reductions += reduce_floating(system, &dims)?;
        stats.floating_within_dims &= system.floating().len() <= n;
        debug_assert_eq!(system.weighted_sum(), target);
        Ok(())
    };
    reduce(&mut system, stats)?;
    let mut rounds = 0;
    while system.floating().iter().any(|&r| system.mu(r) > *threshold) {
        let mut next = CoefficientSystem {
            parts: Vec::new(),
            vectors: Vec::new(),
            coefficients: Vec::new(),
        };
        for r in 0..system.parts.len() {
            let c = system.coefficients[r].clone();
            if system.is_floating(r) {
                let half = system.mu(r) / rational::int(2);
                let (a, b) = take_prefix(instance, &system.parts[r], &half);
                for p in [a, b] {
                    next.vectors.push(part_vector(instance, &p));
                    next.parts.push(p);
                    next.coefficients.push(c.clone());
                }
            } else {
                next.parts.push(std::mem::take(&mut system.parts[r]));
                next.vectors.push(std::mem::take(&mut system.vectors[r]));
                next.coefficients.push(c);
            }
        }
        system = next;
        reduce(&mut system, stats)?;
        rounds += 1;
    }
    stats.rounds = stats.rounds.max(rounds);
    final_assignment(&mut system, &dims, threshold)?;
    let mut owned = Vec::new();
    let mut rest = Vec::new();
    for (p, c) in system.parts.into_iter().zip(system.coefficients) {
        if c.is_one() {
            owned.push(p);
        } else {
            rest.push(p);
        }
    }
    Ok((owned, rest))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineRun {
    pub allocation: Allocation,
    pub stats: RoundingStats,
}

fn assemble(
    instance: &ConsensusInstance,
    pieces: Vec<(Rational, Rational, usize)>,
    k: usize,
) -> Result<Allocation> {
    let mut pieces: Vec<_> = pieces.into_iter().filter(|(a, b, _)| a < b).collect();
    pieces.sort_by(|x, y| x.0.cmp(&y.0));
    let cuts: Vec<Rational> = pieces[1..].iter().map(|p| p.0.clone()).collect();
    let assignee: Vec<usize> = pieces.iter().map(|p| p.2).collect();
    let (cuts, assignee) = merge_runs(cuts, assignee);
    build_allocation(instance, cuts, assignee, k)
}

fn check_epsilon(epsilon: &Rational) -> Result<()> {
    if !epsilon.is_positive() || epsilon > &rational::one() {
        return domain("epsilon must lie in (0, 1]");
    }
    Ok(())
}

/// Both agents get every measure within `eps/2` of one half, using at most
/// `n (2 + ceil(log2(1/eps))) - 1` cuts. Agent 0 receives the pieces whose
/// coefficient rounded to one.
pub fn offline_halving(instance: &ConsensusInstance, epsilon: &Rational) -> Result<OfflineRun> {
    check_epsilon(epsilon)?;
    let mut stats = RoundingStats {
        floating_within_dims: true,
        ..Default::default()
    };
    let whole = vec![(rational::zero(), rational::one())];
    let half = rational::q(1, 2);
    let (owned, rest) = round_region(instance, &whole, &half, &(epsilon * &half), &mut stats)?;
    let pieces = owned
        .into_iter()
        .flatten()
        .map(|(a, b)| (a, b, 0))
        .chain(rest.into_iter().flatten().map(|(a, b)| (a, b, 1)))
        .collect();
    Ok(OfflineRun {
        allocation: assemble(instance, pieces, 2)?,
        stats,
    })
}

/// `k`-agent splitting by recursive bisection of the agent set with
/// tolerance `eps / (3k)` per level.
pub fn offline_splitting(
    instance: &ConsensusInstance,
    epsilon: &Rational,
    k: usize,
) -> Result<OfflineRun> {
    check_epsilon(epsilon)?;
    if k < 2 {
        return domain("offline splitting needs k >= 2");
    }
    let eps_prime = epsilon / rational::int(3 * k as i64);
    let threshold = &eps_prime / rational::int(2);
    let mut stats = RoundingStats {
        floating_within_dims: true,
        ..Default::default()
    };
    let mut pieces = Vec::new();
    let mut work: Vec<(Part, usize, usize)> =
        vec![(vec![(rational::zero(), rational::one())], 0, k)];
    while let Some((region, first, size)) = work.pop() {
        if size == 1 {
            pieces.extend(region.into_iter().map(|(a, b)| (a, b, first)));
            continue;
        }
        let low = size / 2;
        let fraction = rational::q(low as i64, size as i64);
        let (owned, rest) = round_region(instance, &region, &fraction, &threshold, &mut stats)?;
        work.push((normalize(owned), first, low));
        work.push((normalize(rest), first + low, size - low));
    }
    Ok(OfflineRun {
        allocation: assemble(instance, pieces, k)?,
        stats,
    })
}

/// Flattens parts into one sorted region, joining touching intervals.
fn normalize(parts: Vec<Part>) -> Part {
    let mut all: Part = parts.into_iter().flatten().filter(|(a, b)| a < b).collect();
    all.sort_by(|x, y| x.0.cmp(&y.0));
    let mut out: Part = Vec::with_capacity(all.len());
    for (a, b) in all {
        match out.last_mut() {
            Some(last) if last.1 == a => last.1 = b,
            _ => out.push((a, b)),
        }
    }
    out
}

pub fn halving_cut_bound(n: usize, epsilon: &Rational) -> usize {
    let l = rational::ceil_log2(&epsilon.recip()).max(0) as usize;
    n * (2 + l) - 1
}

pub fn splitting_cut_bound(n: usize, k: usize, epsilon: &Rational) -> usize {
    let x = rational::int(3 * k as i64) / epsilon;
    let l = rational::ceil_log2(&x).max(0) as usize;
    n * (k - 1) * (2 + l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::absolute_discrepancy;
    use crate::measure::StepMeasure;
    use crate::rational::{int, one, q, zero};

    fn uniform(n: usize) -> ConsensusInstance {
        ConsensusInstance::new(vec![StepMeasure::uniform(); n]).unwrap()
    }

    #[test]
    fn partition_examples() {
        assert_eq!(equal_sum_partition(&uniform(1), 2).unwrap(), vec![q(1, 2)]);
        assert_eq!(
            equal_sum_partition(&uniform(2), 4).unwrap(),
            vec![q(1, 4), q(1, 2), q(3, 4)]
        );
        let front = ConsensusInstance::new(vec![StepMeasure::new(
            vec![zero(), q(1, 2), one()],
            vec![int(2), zero()],
        )
        .unwrap()])
        .unwrap();
        assert_eq!(equal_sum_partition(&front, 2).unwrap(), vec![q(1, 4)]);
    }

    #[test]
    fn reduce_two_halves() {
        let mut s = CoefficientSystem::from_vectors(
            vec![vec![q(1, 2)], vec![q(1, 2)]],
            vec![q(1, 2), q(1, 2)],
        );
        reduce_floating(&mut s, &[0]).unwrap();
        assert_eq!(s.coefficients, vec![one(), zero()]);
    }

    #[test]
    fn reduce_noop_when_within_dims() {
        let mut s = CoefficientSystem::from_vectors(vec![vec![q(1, 2), q(1, 3)]], vec![q(1, 2)]);
        assert_eq!(reduce_floating(&mut s, &[0, 1]).unwrap(), 0);
        assert_eq!(s.coefficients, vec![q(1, 2)]);
    }

    #[test]
    fn reduce_three_preserves_sum() {
        let mut s = CoefficientSystem::from_vectors(
            vec![vec![q(1, 4)], vec![q(1, 4)], vec![q(1, 2)]],
            vec![q(1, 2); 3],
        );
        let before = s.weighted_sum();
        reduce_floating(&mut s, &[0]).unwrap();
        assert!(s.floating().len() <= 1);
        assert_eq!(s.weighted_sum(), before);
    }

    #[test]
    fn final_assignment_pigeonhole() {
        let eps = q(1, 4);
        let half = &eps / int(2);
        let vectors = vec![
            vec![half.clone(), zero(), zero()],
            vec![zero(), half.clone(), zero()],
            vec![zero(), zero(), half.clone()],
        ];
        let mut s = CoefficientSystem::from_vectors(vectors, vec![q(1, 2); 3]);
        let retired = final_assignment(&mut s, &[0, 1, 2], &half).unwrap();
        assert!(s.floating().is_empty());
        assert!(!retired.is_empty());
        let mut empty = CoefficientSystem::from_vectors(vec![], vec![]);
        assert!(final_assignment(&mut empty, &[0], &half)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn halving_single_uniform() {
        let run = offline_halving(&uniform(1), &q(1, 2)).unwrap();
        assert_eq!(run.allocation.cuts, vec![q(1, 2)]);
        assert_eq!(run.allocation.assignee, vec![0, 1]);
        assert_eq!(absolute_discrepancy(&run.allocation).overall, zero());
    }

    #[test]
    fn halving_uniform_pair() {
        let run = offline_halving(&uniform(2), &q(1, 2)).unwrap();
        assert!(absolute_discrepancy(&run.allocation).overall <= q(1, 2));
        assert!(run.allocation.num_cuts() <= 5);
        let vacuous = offline_halving(&uniform(2), &one()).unwrap();
        assert!(vacuous.allocation.num_cuts() <= 3);
    }

    #[test]
    fn three_way_uniform() {
        let eps = q(1, 2);
        let run = offline_splitting(&uniform(1), &eps, 3).unwrap();
        assert!(absolute_discrepancy(&run.allocation).overall <= &eps * q(2, 3));
    }

    #[test]
    fn bounds() {
        assert_eq!(halving_cut_bound(2, &q(1, 2)), 5);
        assert_eq!(halving_cut_bound(3, &q(1, 64)), 23);
        assert_eq!(splitting_cut_bound(1, 2, &one()), 5);
    }
}
