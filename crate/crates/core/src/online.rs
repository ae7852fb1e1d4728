//! Online consensus halving and k-agent splitting driven by the potential.

use serde::{Deserialize, Serialize};

use crate::allocation::{validate_proper_consensus, Allocation, ConsensusReport};
use crate::error::{domain, Result};
use crate::game::{ConsensusBalancer, Event, GameTranscript, GapView};
use crate::potential::{Potential, PotentialParams};
use crate::rational::{self, log2_floored, Rational};
use crate::stream::{share, validate_stream_caps, OnlineStream};

/// Lazy cutting plus potential-minimizing assignment.
#[derive(Debug, Clone)]
pub struct PotentialBalancer {
    potential: Potential,
    pending: Vec<f64>,
    started: bool,
}

impl PotentialBalancer {
    pub fn new(n: usize, k: usize, params: PotentialParams) -> Self {
        PotentialBalancer {
            potential: Potential::new(n, k, params),
            pending: vec![0.0; n],
            started: false,
        }
    }

    pub fn halving(n: usize, epsilon: f64) -> Self {
        Self::new(n, 2, PotentialParams::halving(n, epsilon))
    }

    pub fn splitting(n: usize, k: usize, epsilon: f64) -> Self {
        Self::new(n, k, PotentialParams::splitting(n, k, epsilon))
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }
}

impl ConsensusBalancer for PotentialBalancer {
    fn name(&self) -> String {
        "potential".into()
    }

    fn at_candidate(&mut self, gap: GapView<'_>) -> Option<usize> {
        let g = self.potential.params().g;
        let cut = self.started
            && self.pending.iter().any(|&p| p > 0.0)
            && self
                .pending
                .iter()
                .zip(gap.masses)
                .any(|(&p, &m)| p + m > g);
        self.started = true;
        let out = if cut {
            let a = self.potential.assign(&self.pending);
            self.pending.iter_mut().for_each(|p| *p = 0.0);
            Some(a)
        } else {
            None
        };
        for (p, &m) in self.pending.iter_mut().zip(gap.masses) {
            *p += m;
        }
        out
    }

    fn finish(&mut self) -> usize {
        let a = self.potential.assign(&self.pending);
        self.pending.iter_mut().for_each(|p| *p = 0.0);
        a
    }

    fn diagnostics(&self) -> Vec<String> {
        vec![format!(
            "potential: initial ln psi {:.6}, final ln psi {:.6}, largest step change {:.3e}, monotone {}",
            self.potential.initial_ln_psi(),
            self.potential.ln_psi(),
            self.potential.max_increase(),
            self.potential.monotone()
        )]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineRun {
    pub allocation: Allocation,
    pub transcript: GameTranscript,
    pub report: ConsensusReport,
    /// Proven cut bound for the parameters used.
    pub cut_bound: f64,
    /// Largest single-measure mass of any interval.
    pub max_interval_mass: f64,
    pub psi_monotone: bool,
}

/// Drives a balancer over a stream with exact integer share accounting.
pub fn run_stream(
    stream: &OnlineStream,
    balancer: &mut dyn ConsensusBalancer,
) -> Result<(Allocation, GameTranscript, f64)> {
    let n = stream.n();
    let k = stream.k;
    let mut shares = vec![vec![0u64; n]; k];
    let mut pending = vec![0u64; n];
    let mut cuts = Vec::new();
    let mut assignee = Vec::new();
    let mut t = GameTranscript {
        balancer: balancer.name(),
        adversary: "stream".into(),
        events: Vec::new(),
        cuts: 0,
        aborted: false,
        certificate: None,
    };
    let mut max_mass = 0.0f64;
    let mut index = 0u64;
    let mut reveal_from = 0u64;
    let interval_mass = |pending: &[u64]| {
        pending
            .iter()
            .zip(&stream.denominators)
            .map(|(&p, &d)| p as f64 / d as f64)
            .fold(0.0, f64::max)
    };
    for (run, r) in stream.runs.iter().enumerate() {
        let masses = stream.run_masses_f64(run);
        let view = GapView {
            length: stream.run_length_f64(run),
            masses: &masses,
        };
        for offset in 0..r.count {
            if let Some(a) = balancer.at_candidate(view) {
                if index == 0 || a >= k {
                    return domain(format!("balancer made an illegal cut at gap {index}"));
                }
                max_mass = max_mass.max(interval_mass(&pending));
                for (s, p) in shares[a].iter_mut().zip(pending.iter_mut()) {
                    *s += std::mem::take(p);
                }
                let point = stream.left_of(crate::stream::GapRef { run, offset });
                t.events.push(Event::Reveal {
                    first: reveal_from,
                    count: index + 1 - reveal_from,
                });
                reveal_from = index + 1;
                t.events.push(Event::Cut {
                    candidate: index,
                    point: rational::format(&point),
                    agent: a,
                });
                cuts.push(point);
                assignee.push(a);
            }
            for (p, &m) in pending.iter_mut().zip(&r.numerators) {
                *p += m;
            }
            index += 1;
        }
    }
    if reveal_from < index {
        t.events.push(Event::Reveal {
            first: reveal_from,
            count: index - reveal_from,
        });
    }
    let last = balancer.finish();
    max_mass = max_mass.max(interval_mass(&pending));
    for (s, p) in shares[last].iter_mut().zip(&pending) {
        *s += p;
    }
    assignee.push(last);
    t.events.push(Event::Assign { agent: last });
    t.events.extend(
        balancer
            .diagnostics()
            .into_iter()
            .map(|message| Event::Diagnostic { message }),
    );
    t.cuts = cuts.len();
    let exact: Vec<Vec<Rational>> = shares
        .iter()
        .map(|row| {
            row.iter()
                .zip(&stream.denominators)
                .map(|(&a, &d)| share(a, d))
                .collect()
        })
        .collect();
    Ok((
        Allocation::from_parts(k, cuts, assignee, exact)?,
        t,
        max_mass,
    ))
}

fn run_with(
    stream: &OnlineStream,
    epsilon: &Rational,
    mut balancer: PotentialBalancer,
    cut_bound: f64,
) -> Result<OnlineRun> {
    let caps = validate_stream_caps(stream, rational::to_f64(epsilon));
    if !caps.pass {
        return domain(format!(
            "stream violates its caps (cap {:.3e}, first violation {:?}, mass error {:?})",
            caps.cap, caps.first_violation, caps.mass_error
        ));
    }
    let (allocation, transcript, max_interval_mass) = run_stream(stream, &mut balancer)?;
    let report = validate_proper_consensus(&allocation, epsilon, stream.k);
    Ok(OnlineRun {
        allocation,
        transcript,
        report,
        cut_bound,
        max_interval_mass,
        psi_monotone: balancer.potential().monotone(),
    })
}

/// Online halving: discrepancy at most `eps` with at most
/// `16 n log n / eps^2` cuts.
pub fn run_online_halving(stream: &OnlineStream, epsilon: &Rational) -> Result<OnlineRun> {
    if stream.k != 2 {
        return domain("online halving needs a stream with k = 2");
    }
    let n = stream.n();
    let e = rational::to_f64(epsilon);
    let bound = halving_cut_bound(n, e);
    run_with(stream, epsilon, PotentialBalancer::halving(n, e), bound)
}

/// Online k-agent splitting: discrepancy at most `eps / k` with at most
/// `200 k n log(nk) / eps^2` cuts.
pub fn run_online_splitting(stream: &OnlineStream, epsilon: &Rational) -> Result<OnlineRun> {
    let n = stream.n();
    let k = stream.k;
    let e = rational::to_f64(epsilon);
    let bound = splitting_cut_bound(n, k, e);
    run_with(
        stream,
        epsilon,
        PotentialBalancer::splitting(n, k, e),
        bound,
    )
}

pub fn halving_cut_bound(n: usize, epsilon: f64) -> f64 {
    16.0 * n as f64 * log2_floored(n) / (epsilon * epsilon)
}

pub fn splitting_cut_bound(n: usize, k: usize, epsilon: f64) -> f64 {
    200.0 * k as f64 * n as f64 * log2_floored(n * k) / (epsilon * epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::absolute_discrepancy;
    use crate::rational::q;
    use crate::stream::GapRun;

    fn uniform_stream(n: usize, k: usize, gaps: u64) -> OnlineStream {
        OnlineStream {
            k,
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
    fn single_uniform_measure() {
        let run = run_online_halving(&uniform_stream(1, 2, 400), &q(1, 2)).unwrap();
        assert!(absolute_discrepancy(&run.allocation).overall <= q(1, 2));
        assert!(run.report.pass);
        assert!(run.psi_monotone);
        assert!(run
            .allocation
            .shares_consistent(&uniform_stream(1, 2, 400).to_instance().unwrap()));
    }

    #[test]
    fn cap_violation_is_rejected() {
        let mut s = uniform_stream(2, 2, 400);
        s.denominators[1] = 1;
        s.runs = vec![
            GapRun {
                start: rational::zero(),
                end: q(1, 2),
                count: 200,
                numerators: vec![1, 0],
            },
            GapRun {
                start: q(1, 2),
                end: q(1, 2) + q(1, 400),
                count: 1,
                numerators: vec![1, 1],
            },
            GapRun {
                start: q(1, 2) + q(1, 400),
                end: rational::one(),
                count: 199,
                numerators: vec![1, 0],
            },
        ];
        assert!(run_online_halving(&s, &q(1, 2)).is_err());
    }

    #[test]
    fn three_agents_on_one_measure() {
        let eps = q(1, 2);
        let n = 1;
        let cap = crate::stream::stream_cap(n, 3, 0.5);
        let gaps = (1.0 / cap).ceil() as u64;
        let run = run_online_splitting(&uniform_stream(n, 3, gaps), &eps).unwrap();
        assert!(absolute_discrepancy(&run.allocation).overall <= q(1, 6));
        assert!((run.transcript.cuts as f64) < run.cut_bound);
        assert!(run.max_interval_mass <= PotentialParams::splitting(n, 3, 0.5).g);
    }
}
