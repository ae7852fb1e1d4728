//! Online necklace splitting: beads arrive one by one, colors with few
//! remaining beads become critical and are handed out one bead at a time.

use serde::{Deserialize, Serialize};

use crate::allocation::{NecklaceAllocation, NecklaceReport};
use crate::error::Result;
use crate::game::{play_necklace, EveryBead, FixedNecklace, GameTranscript, NecklaceBalancer};
use crate::measure::NecklaceInstance;
use crate::potential::{Potential, PotentialParams};
use crate::rational::log2_floored;

/// Parameters of a run, derived from `n`, `m` and `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NecklaceParams {
    pub epsilon: f64,
    pub potential: PotentialParams,
    /// Remaining-bead threshold below which a color is critical.
    pub threshold: f64,
    /// A color with `1/m_i` above this is critical from the start.
    pub initial_cap: f64,
    /// Bound on a color's bead discrepancy when it turns critical.
    pub critical_discrepancy: f64,
    pub fallback: bool,
}

impl NecklaceParams {
    pub fn halving(n: usize, m: usize) -> Self {
        let l = log2_floored(n);
        let mf = m as f64;
        let epsilon = 10.0 * (l / mf).cbrt();
        NecklaceParams {
            epsilon,
            potential: PotentialParams::halving(n, epsilon),
            threshold: 20.0 * mf.powf(2.0 / 3.0) * l.cbrt(),
            initial_cap: epsilon * epsilon / (100.0 * l),
            critical_discrepancy: 10.0 * mf.powf(2.0 / 3.0) * l.cbrt(),
            fallback: l > mf / 1000.0,
        }
    }

    pub fn splitting(n: usize, m: usize, k: usize) -> Self {
        let mf = m as f64;
        let epsilon = (k as f64 / mf).cbrt();
        let potential = PotentialParams::splitting(n, k, epsilon);
        NecklaceParams {
            epsilon,
            potential,
            threshold: 10.0 * (k as f64).cbrt() * mf.powf(2.0 / 3.0),
            initial_cap: potential.g,
            critical_discrepancy: epsilon * mf,
            fallback: k > m,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NecklaceStats {
    pub fallback: bool,
    pub initially_critical: usize,
    pub forced_cuts: usize,
    pub potential_cuts: usize,
    /// Every color turned critical with discrepancy within the bound and
    /// more remaining beads than its discrepancy.
    pub critical_invariant_ok: bool,
    pub psi_monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Current {
    Empty,
    Normal,
    Critical(usize),
}

/// The potential balancer with critical colors.
#[derive(Debug, Clone)]
pub struct CriticalColorBalancer {
    params: NecklaceParams,
    k: usize,
    counts: Vec<usize>,
    remaining: Vec<usize>,
    critical: Vec<bool>,
    /// `held[c][a]`
    held: Vec<Vec<usize>>,
    pending: Vec<usize>,
    pending_colors: Vec<usize>,
    current: Current,
    potential: Potential,
    stats: NecklaceStats,
    fallback: Option<EveryBead>,
}

impl CriticalColorBalancer {
    pub fn new(counts: &[usize], k: usize, params: NecklaceParams) -> Self {
        let n = counts.len();
        let mut potential = Potential::new(n, k, params.potential);
        let critical: Vec<bool> = counts
            .iter()
            .map(|&m| 1.0 / m as f64 > params.initial_cap)
            .collect();
        for (i, _) in critical.iter().enumerate().filter(|(_, &c)| c) {
            potential.deactivate(i);
        }
        let stats = NecklaceStats {
            fallback: params.fallback,
            initially_critical: critical.iter().filter(|&&c| c).count(),
            critical_invariant_ok: true,
            psi_monotone: true,
            ..Default::default()
        };
        CriticalColorBalancer {
            params,
            k,
            counts: counts.to_vec(),
            remaining: counts.to_vec(),
            critical,
            held: vec![vec![0; k]; n],
            pending: vec![0; n],
            pending_colors: Vec::new(),
            current: Current::Empty,
            potential,
            stats,
            fallback: params.fallback.then(|| EveryBead::new(n, k)),
        }
    }

    pub fn halving(counts: &[usize]) -> Self {
        let m = counts.iter().copied().max().unwrap_or(1);
        Self::new(counts, 2, NecklaceParams::halving(counts.len(), m))
    }

    pub fn splitting(counts: &[usize], k: usize) -> Self {
        let m = counts.iter().copied().max().unwrap_or(1);
        Self::new(counts, k, NecklaceParams::splitting(counts.len(), m, k))
    }

    pub fn stats(&self) -> NecklaceStats {
        let mut s = self.stats.clone();
        s.psi_monotone = self.potential.monotone();
        s
    }

    fn masses(&self) -> Vec<f64> {
        self.pending
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(i, (&p, &m))| {
                if self.critical[i] {
                    0.0
                } else {
                    p as f64 / m as f64
                }
            })
            .collect()
    }

    /// Closes the current interval; returns its owner.
    fn close(&mut self) -> usize {
        let agent = match self.current {
            Current::Critical(c) => {
                let row = &self.held[c];
                (0..self.k).min_by_key(|&a| row[a]).unwrap()
            }
            _ => {
                let masses = self.masses();
                self.potential.assign(&masses)
            }
        };
        for &c in &self.pending_colors {
            self.held[c][agent] += std::mem::take(&mut self.pending[c]);
        }
        self.pending_colors.clear();
        self.current = Current::Empty;
        agent
    }

    fn push(&mut self, color: usize) {
        if self.pending[color] == 0 {
            self.pending_colors.push(color);
        }
        self.pending[color] += 1;
    }

    fn turn_critical(&mut self, color: usize) {
        self.critical[color] = true;
        self.potential.deactivate(color);
        let mut have: Vec<usize> = self.held[color].clone();
        // beads still pending count toward whoever ends up with them; take
        // the worst case
        let hi = *have.iter().max().unwrap() + self.pending[color];
        have.sort();
        let disc = (hi - have[0]) as f64;
        let remaining = self.remaining[color] as f64;
        if disc > self.params.critical_discrepancy || remaining <= disc {
            self.stats.critical_invariant_ok = false;
        }
    }
}

impl NecklaceBalancer for CriticalColorBalancer {
    fn name(&self) -> String {
        "potential-necklace".into()
    }

    fn on_bead(&mut self, color: usize) -> Option<usize> {
        if let Some(f) = self.fallback.as_mut() {
            let out = f.on_bead(color);
            self.stats.forced_cuts += out.is_some() as usize;
            return out;
        }
        if !self.critical[color] && (self.remaining[color] as f64) < self.params.threshold {
            self.turn_critical(color);
        }
        self.remaining[color] -= 1;
        let out = if self.critical[color] {
            if self.current == Current::Empty {
                None
            } else {
                self.stats.forced_cuts += 1;
                Some(self.close())
            }
        } else {
            match self.current {
                Current::Empty => None,
                Current::Critical(_) => {
                    self.stats.forced_cuts += 1;
                    Some(self.close())
                }
                Current::Normal => {
                    let g = self.params.potential.g;
                    let over = self
                        .pending_colors
                        .iter()
                        .chain(std::iter::once(&color))
                        .any(|&c| {
                            let extra = (c == color) as usize;
                            !self.critical[c]
                                && (self.pending[c] + extra) as f64 / self.counts[c] as f64 > g
                        });
                    if over {
                        self.stats.potential_cuts += 1;
                        Some(self.close())
                    } else {
                        None
                    }
                }
            }
        };
        self.push(color);
        self.current = if self.critical[color] {
            Current::Critical(color)
        } else {
            Current::Normal
        };
        out
    }

    fn finish(&mut self) -> usize {
        match self.fallback.as_mut() {
            Some(f) => f.finish(),
            None => self.close(),
        }
    }

    fn diagnostics(&self) -> Vec<String> {
        let s = self.stats();
        vec![format!(
            "necklace: fallback {}, initially critical {}, forced cuts {}, potential cuts {}, critical invariant {}, psi monotone {}",
            s.fallback, s.initially_critical, s.forced_cuts, s.potential_cuts, s.critical_invariant_ok, s.psi_monotone
        )]
    }
}

#[derive(Debug, Clone)]
pub struct NecklaceRun {
    pub allocation: NecklaceAllocation,
    pub transcript: GameTranscript,
    pub report: NecklaceReport,
    pub stats: NecklaceStats,
    pub params: NecklaceParams,
}

fn run(
    necklace: &NecklaceInstance,
    mut balancer: CriticalColorBalancer,
    k: usize,
) -> Result<NecklaceRun> {
    let params = balancer.params;
    let mut adv = FixedNecklace::new(necklace.clone());
    let game = play_necklace(&mut balancer, &mut adv, k)?;
    Ok(NecklaceRun {
        allocation: game.allocation,
        transcript: game.transcript,
        report: game.report,
        stats: balancer.stats(),
        params,
    })
}

/// Online necklace halving.
pub fn run_online_necklace_halving(necklace: &NecklaceInstance) -> Result<NecklaceRun> {
    run(
        necklace,
        CriticalColorBalancer::halving(necklace.color_counts()),
        2,
    )
}

/// Online necklace splitting among `k` agents.
pub fn run_online_necklace_splitting(necklace: &NecklaceInstance, k: usize) -> Result<NecklaceRun> {
    run(
        necklace,
        CriticalColorBalancer::splitting(necklace.color_counts(), k),
        k,
    )
}

/// `41 n (log n)^{1/3} m^{2/3}`.
pub fn necklace_halving_cut_bound(n: usize, m: usize) -> f64 {
    41.0 * n as f64 * log2_floored(n).cbrt() * (m as f64).powf(2.0 / 3.0)
}

/// `n k^{1/3} m^{2/3} (log(nk))^{1/3}`, to be scaled by a constant.
pub fn necklace_splitting_cut_scale(n: usize, m: usize, k: usize) -> f64 {
    n as f64 * (k as f64).cbrt() * (m as f64).powf(2.0 / 3.0) * log2_floored(n * k).cbrt()
}
