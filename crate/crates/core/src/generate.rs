//! Seeded instance generators.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};
use crate::measure::{ConsensusInstance, NecklaceInstance, StepMeasure};
use crate::rational::{self, Rational};
use crate::stream::{stream_cap, GapRun, OnlineStream};

/// Integer weight units per segment; every measure spreads
/// `UNITS * segments` units over its segments.
const UNITS: u64 = 8;

/// `weights[i][j]` for measure `i` on segment `j`: a uniformly random
/// composition of `UNITS * segments` into `segments` non-negative parts.
fn random_weights(rng: &mut ChaCha8Rng, n: usize, segments: usize) -> Vec<Vec<u64>> {
    let total = UNITS * segments as u64;
    (0..n)
        .map(|_| {
            // stars and bars: segments - 1 bars among total + segments - 1 slots
            let slots = total + segments as u64 - 1;
            let mut bars = rand::seq::index::sample(rng, slots as usize, segments - 1).into_vec();
            bars.sort_unstable();
            let mut row = Vec::with_capacity(segments);
            let mut prev: i64 = -1;
            for &b in &bars {
                row.push((b as i64 - prev - 1) as u64);
                prev = b as i64;
            }
            row.push((slots as i64 - prev - 1) as u64);
            row
        })
        .collect()
}

/// `n` step measures on `segments` equal segments with random integer
/// weights, normalized exactly.
pub fn generate_instance(seed: u64, n: usize, segments: usize) -> Result<ConsensusInstance> {
    if n == 0 || segments == 0 {
        return domain("need n >= 1 and segments >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = random_weights(&mut rng, n, segments);
    let bps: Vec<Rational> = (0..=segments)
        .map(|j| rational::q(j as i64, segments as i64))
        .collect();
    let measures = weights
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            let dens = row
                .iter()
                .map(|&w| rational::q((w as usize * segments) as i64, total as i64))
                .collect();
            StepMeasure::new(bps.clone(), dens)
        })
        .collect::<Result<_>>()?;
    ConsensusInstance::new(measures)
}

/// The stream form of [`generate_instance`] with the same seed: every
/// segment is cut into the same number of equal gaps, the least number that
/// keeps every gap within the cap for `epsilon` and `k`.
pub fn generate_stream(
    seed: u64,
    n: usize,
    segments: usize,
    epsilon: f64,
    k: usize,
) -> Result<OnlineStream> {
    if n == 0 || segments == 0 || k == 0 {
        return domain("need n, segments and k at least 1");
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return domain("epsilon must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = random_weights(&mut rng, n, segments);
    let cap = stream_cap(n, k, epsilon);
    let totals: Vec<u64> = weights.iter().map(|row| row.iter().sum()).collect();
    let mut per_segment = 1u64;
    for (row, &total) in weights.iter().zip(&totals) {
        for &w in row {
            let mut g = ((w as f64 / (total as f64 * cap)).ceil() as u64).max(1);
            while w as f64 > cap * (total * g) as f64 {
                g += 1;
            }
            per_segment = per_segment.max(g);
        }
    }
    let runs = (0..segments)
        .map(|j| GapRun {
            start: rational::q(j as i64, segments as i64),
            end: rational::q(j as i64 + 1, segments as i64),
            count: per_segment,
            numerators: weights.iter().map(|row| row[j]).collect(),
        })
        .collect();
    Ok(OnlineStream {
        k,
        denominators: totals.iter().map(|&t| t * per_segment).collect(),
        runs,
    })
}

/// A seeded shuffle of the bead multiset with the given color counts.
pub fn generate_necklace(seed: u64, counts: &[usize]) -> Result<NecklaceInstance> {
    if counts.is_empty() || counts.contains(&0) {
        return domain("color counts must be positive");
    }
    let mut beads: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &m)| std::iter::repeat_n(c, m))
        .collect();
    beads.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    NecklaceInstance::with_colors(beads, counts.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::validate_stream_caps;

    #[test]
    fn deterministic() {
        let a = generate_instance(7, 3, 10).unwrap();
        let b = generate_instance(7, 3, 10).unwrap();
        assert_eq!(a.measures(), b.measures());
        assert!(a.measures().iter().all(|m| m.total() == &rational::one()));
        assert_eq!(
            generate_necklace(3, &[2, 2]).unwrap(),
            generate_necklace(3, &[2, 2]).unwrap()
        );
    }

    #[test]
    fn stream_matches_instance_and_caps() {
        let s = generate_stream(11, 4, 8, 0.1, 2).unwrap();
        assert!(validate_stream_caps(&s, 0.1).pass);
        let inst = generate_instance(11, 4, 8).unwrap();
        let replay = s.to_instance().unwrap();
        for j in 0..8 {
            let (a, b) = (rational::q(j, 8), rational::q(j + 1, 8));
            assert_eq!(replay.mass_vector(&a, &b), inst.mass_vector(&a, &b));
        }
    }

    #[test]
    fn necklace_histogram() {
        let nk = generate_necklace(5, &[5, 3, 1]).unwrap();
        assert_eq!(nk.color_counts(), &[5, 3, 1]);
        let mut sorted = generate_necklace(9, &[2, 2]).unwrap().beads().to_vec();
        sorted.sort();
        assert_eq!(sorted, vec![0, 0, 1, 1]);
    }
}
