//! Online input: cut candidates `0 = x_1 < ... < x_m = 1` with per-gap masses.
//!
//! Gaps are stored run-length encoded. A [`GapRun`] splits `[start, end]`
//! into `count` equal gaps that all carry the same masses. Mass of measure
//! `i` in such a gap is `numerators[i] / denominators[i]`, so every share an
//! online algorithm accumulates is an exact integer count.

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::measure::{ConsensusInstance, StepMeasure};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapRun {
    #[serde(with = "rational::serde_q")]
    pub start: Rational,
    #[serde(with = "rational::serde_q")]
    pub end: Rational,
    pub count: u64,
    pub numerators: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnlineStream {
    pub k: usize,
    pub denominators: Vec<u64>,
    pub runs: Vec<GapRun>,
}

/// Stream document: either the compact run form or explicit candidates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StreamFile {
    Runs(OnlineStream),
    Explicit {
        k: usize,
        #[serde(with = "rational::serde_qvec")]
        candidates: Vec<Rational>,
        /// `gap_masses[j][i]`: mass of measure `i` in gap `j`.
        #[serde(with = "rational::serde_qmat")]
        gap_masses: Vec<Vec<Rational>>,
    },
}

impl StreamFile {
    pub fn into_stream(self) -> Result<OnlineStream> {
        match self {
            StreamFile::Runs(s) => {
                s.check_shape()?;
                Ok(s)
            }
            StreamFile::Explicit {
                k,
                candidates,
                gap_masses,
            } => OnlineStream::from_explicit(k, &candidates, &gap_masses),
        }
    }
}

/// Per-gap mass cap for the stream's agent count.
pub fn stream_cap(n: usize, k: usize, epsilon: f64) -> f64 {
    if k <= 2 {
        epsilon * epsilon / (100.0 * rational::log2_floored(n))
    } else {
        epsilon * epsilon / (100.0 * k as f64 * rational::log2_floored(n * k))
    }
}

/// A gap as seen by an online algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapRef {
    pub run: usize,
    /// Position inside the run, `0..count`.
    pub offset: u64,
}

impl OnlineStream {
    pub fn n(&self) -> usize {
        self.denominators.len()
    }

    pub fn num_gaps(&self) -> u64 {
        self.runs.iter().map(|r| r.count).sum()
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || self.runs.is_empty() {
            return domain("a stream needs at least one measure and one gap");
        }
        if self.k == 0 {
            return domain("need at least one agent");
        }
        if self.denominators.contains(&0) {
            return domain("zero mass denominator");
        }
        let mut left = rational::zero();
        for r in &self.runs {
            if r.start != left || r.end <= r.start || r.count == 0 || r.numerators.len() != n {
                return domain("runs must tile [0, 1] left to right with n numerators each");
            }
            left = r.end.clone();
        }
        if !left.is_integer() || left != rational::one() {
            return domain("runs must end at 1");
        }
        Ok(())
    }

    /// Builds the compact form from explicit candidates and gap masses.
    pub fn from_explicit(
        k: usize,
        candidates: &[Rational],
        gap_masses: &[Vec<Rational>],
    ) -> Result<Self> {
        if candidates.len() < 2 || gap_masses.len() + 1 != candidates.len() {
            return domain("need m candidates and m - 1 gap mass vectors");
        }
        let n = gap_masses[0].len();
        let mut denominators = vec![1u64; n];
        for g in gap_masses {
            if g.len() != n {
                return domain("every gap needs one mass per measure");
            }
            for (d, m) in denominators.iter_mut().zip(g) {
                if m < &rational::zero() {
                    return domain("gap masses must be non-negative");
                }
                let md = m
                    .denom()
                    .to_u64()
                    .ok_or_else(|| crate::SplitError::Domain("denominator exceeds u64".into()))?;
                *d = rational::lcm_u64(*d, md)
                    .ok_or_else(|| crate::SplitError::Domain("denominator exceeds u64".into()))?;
            }
        }
        let mut runs = Vec::with_capacity(gap_masses.len());
        for (w, g) in candidates.windows(2).zip(gap_masses) {
            let numerators = g
                .iter()
                .zip(&denominators)
                .map(|(m, &d)| (m * rational::int(d as i64)).to_integer().to_u64())
                .collect::<Option<Vec<u64>>>()
                .ok_or_else(|| crate::SplitError::Domain("numerator exceeds u64".into()))?;
            runs.push(GapRun {
                start: w[0].clone(),
                end: w[1].clone(),
                count: 1,
                numerators,
            });
        }
        let s = OnlineStream {
            k,
            denominators,
            runs,
        };
        s.check_shape()?;
        Ok(s)
    }

    /// Iterates gaps in order.
    pub fn gaps(&self) -> impl Iterator<Item = GapRef> + '_ {
        self.runs
            .iter()
            .enumerate()
            .flat_map(|(run, r)| (0..r.count).map(move |offset| GapRef { run, offset }))
    }

    /// Left endpoint of a gap, which is the cut candidate preceding it.
    pub fn left_of(&self, gap: GapRef) -> Rational {
        let r = &self.runs[gap.run];
        &r.start + (&r.end - &r.start) * rational::from_u64_ratio(gap.offset, r.count)
    }

    pub fn numerators(&self, gap: GapRef) -> &[u64] {
        &self.runs[gap.run].numerators
    }

    /// Masses of the gaps in a run as floats.
    pub fn run_masses_f64(&self, run: usize) -> Vec<f64> {
        self.runs[run]
            .numerators
            .iter()
            .zip(&self.denominators)
            .map(|(&a, &d)| a as f64 / d as f64)
            .collect()
    }

    pub fn run_length_f64(&self, run: usize) -> f64 {
        let r = &self.runs[run];
        rational::to_f64(&(&r.end - &r.start)) / r.count as f64
    }

    /// The step-density instance the stream describes.
    pub fn to_instance(&self) -> Result<ConsensusInstance> {
        let mut measures = Vec::with_capacity(self.n());
        for (i, &d) in self.denominators.iter().enumerate() {
            let mut bps = vec![rational::zero()];
            let mut dens: Vec<Rational> = Vec::new();
            for r in &self.runs {
                let mass = rational::from_u64_ratio(r.numerators[i] * r.count, d);
                let density = mass / (&r.end - &r.start);
                if dens.last() == Some(&density) {
                    *bps.last_mut().unwrap() = r.end.clone();
                } else {
                    bps.push(r.end.clone());
                    dens.push(density);
                }
            }
            measures.push(StepMeasure::new(bps, dens)?);
        }
        ConsensusInstance::new(measures)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapReport {
    pub pass: bool,
    pub cap: f64,
    /// First `(gap index, measure)` whose mass exceeds the cap.
    pub first_violation: Option<(u64, usize)>,
    /// First measure whose gap masses do not sum to one.
    pub mass_error: Option<usize>,
}

/// Checks every gap mass against the cap for the stream's `k`, and that the
/// gap masses of every measure sum to exactly one.
pub fn validate_stream_caps(stream: &OnlineStream, epsilon: f64) -> CapReport {
    let cap = stream_cap(stream.n(), stream.k, epsilon);
    let mut first_violation = None;
    let mut index = 0u64;
    for r in &stream.runs {
        if first_violation.is_none() {
            if let Some(i) = r
                .numerators
                .iter()
                .zip(&stream.denominators)
                .position(|(&a, &d)| a as f64 > cap * d as f64)
            {
                first_violation = Some((index, i));
            }
        }
        index += r.count;
    }
    let mass_error = (0..stream.n()).find(|&i| {
        let total: u128 = stream
            .runs
            .iter()
            .map(|r| r.numerators[i] as u128 * r.count as u128)
            .sum();
        total != stream.denominators[i] as u128
    });
    CapReport {
        pass: first_violation.is_none() && mass_error.is_none(),
        cap,
        first_violation,
        mass_error,
    }
}

/// Exact share `num / den` as a rational.
pub(crate) fn share(num: u64, den: u64) -> Rational {
    if num == 0 {
        Rational::zero()
    } else {
        rational::from_u64_ratio(num, den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn uniform_stream(n: usize, gaps: u64) -> OnlineStream {
        OnlineStream {
            k: 2,
            denominators: vec![gaps; n],
            runs: vec![GapRun {
                start: rational::zero(),
                end: rational::one(),
                count: gaps,
                numerators: vec![1; n],
            }],
        }
    }

    #[test]
    fn cap_example() {
        // n = 4, eps = 1/2: cap = (1/4) / 200 = 1/800
        assert!((stream_cap(4, 2, 0.5) - 1.0 / 800.0).abs() < 1e-15);
        assert!(validate_stream_caps(&uniform_stream(4, 800), 0.5).pass);
        let r = validate_stream_caps(&uniform_stream(4, 799), 0.5);
        assert_eq!(r.first_violation, Some((0, 0)));
    }

    #[test]
    fn single_gap_fails() {
        let r = validate_stream_caps(&uniform_stream(2, 1), 0.5);
        assert!(!r.pass);
        assert_eq!(r.first_violation, Some((0, 0)));
    }

    #[test]
    fn empty_measure_fails_total() {
        let mut s = uniform_stream(2, 1000);
        s.runs[0].numerators[1] = 0;
        let r = validate_stream_caps(&s, 0.5);
        assert_eq!(r.mass_error, Some(1));
        assert!(!r.pass);
    }

    #[test]
    fn explicit_form_round_trips() {
        let cands = vec![rational::zero(), q(1, 3), rational::one()];
        let masses = vec![vec![q(1, 2), q(1, 4)], vec![q(1, 2), q(3, 4)]];
        let s = OnlineStream::from_explicit(2, &cands, &masses).unwrap();
        assert_eq!(s.denominators, vec![2, 4]);
        let gaps: Vec<GapRef> = s.gaps().collect();
        assert_eq!(s.left_of(gaps[1]), q(1, 3));
        let inst = s.to_instance().unwrap();
        assert_eq!(
            inst.mass_vector(&rational::zero(), &q(1, 3)),
            vec![q(1, 2), q(1, 4)]
        );
    }
}
