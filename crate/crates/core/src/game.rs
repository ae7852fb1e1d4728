//! The online protocol between a balancer and an adversary.
//!
//! The runner pulls one gap (or bead) at a time from the adversary and
//! shows it to the balancer, which answers whether to cut at the left end of
//! that gap and, if so, who gets the interval that just closed. Decisions are
//! final. The runner keeps exact books on positions, masses and shares.

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::allocation::{
    build_necklace_allocation, validate_proper_consensus, validate_proper_necklace, Allocation,
    ConsensusReport, NecklaceAllocation, NecklaceReport,
};
use crate::error::{Result, SplitError};
use crate::measure::NecklaceInstance;
use crate::rational::{self, Rational};
use crate::stream::{share, OnlineStream};

/// What a balancer sees of one gap.
#[derive(Debug, Clone, Copy)]
pub struct GapView<'a> {
    pub length: f64,
    pub masses: &'a [f64],
}

pub trait ConsensusBalancer {
    fn name(&self) -> String;

    /// Called once per gap `[x_j, x_{j+1}]`, in order. Returning `Some(a)`
    /// cuts at `x_j` and gives the interval since the previous cut to agent
    /// `a`. The first call must return `None`.
    fn at_candidate(&mut self, gap: GapView<'_>) -> Option<usize>;

    /// Owner of the final interval.
    fn finish(&mut self) -> usize;

    /// Free-form notes for the transcript, e.g. potential monotonicity.
    fn diagnostics(&self) -> Vec<String> {
        Vec::new()
    }
}

pub trait NecklaceBalancer {
    fn name(&self) -> String;

    /// Called for every bead in order. `Some(a)` cuts before this bead and
    /// gives the beads since the previous cut to agent `a`. The first call
    /// must return `None`.
    fn on_bead(&mut self, color: usize) -> Option<usize>;

    fn finish(&mut self) -> usize;

    fn diagnostics(&self) -> Vec<String> {
        Vec::new()
    }
}

/// A gap produced by an adversary: exact length and per-measure masses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gap {
    pub length: Rational,
    pub masses: Vec<Rational>,
}

pub trait ConsensusAdversary {
    fn name(&self) -> String;
    fn n(&self) -> usize;
    /// The next gap, or `None` once `[0, 1]` is covered.
    fn next_gap(&mut self) -> Option<Gap>;
    /// The balancer cut at the left end of the most recent gap.
    fn on_cut(&mut self, agent: usize);
    fn certificate(&self) -> Option<Certificate> {
        None
    }
    fn punish_events(&self) -> Vec<Event> {
        Vec::new()
    }
}

pub trait NecklaceAdversary {
    fn name(&self) -> String;
    fn color_counts(&self) -> Vec<usize>;
    fn next_bead(&mut self) -> Option<usize>;
    fn on_cut(&mut self, agent: usize);
    fn certificate(&self) -> Option<Certificate> {
        None
    }
    fn punish_events(&self) -> Vec<Event> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    /// Gaps (or beads) `first .. first + count` were revealed.
    Reveal {
        first: u64,
        count: u64,
    },
    /// Cut at the left end of gap (or before bead) `candidate`.
    Cut {
        candidate: u64,
        point: String,
        agent: usize,
    },
    /// The final interval went to `agent`.
    Assign {
        agent: usize,
    },
    Punish {
        candidate: u64,
        reason: String,
    },
    Diagnostic {
        message: String,
    },
}

/// One step of an adversary's potential accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateStep {
    pub cut: usize,
    pub growth: String,
    pub required: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub statement: String,
    pub steps: Vec<CertificateStep>,
    pub pass: bool,
    /// Cuts made while the adversary was still in its forcing phase.
    pub forcing_cuts: usize,
    /// Cuts the accounting says a balancer must have made by now.
    pub required_cuts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub balancer: String,
    pub adversary: String,
    pub events: Vec<Event>,
    pub cuts: usize,
    pub aborted: bool,
    pub certificate: Option<Certificate>,
}

impl GameTranscript {
    fn new(balancer: String, adversary: String) -> Self {
        GameTranscript {
            balancer,
            adversary,
            events: Vec::new(),
            cuts: 0,
            aborted: false,
            certificate: None,
        }
    }

    fn reveal(&mut self, index: u64) {
        if let Some(Event::Reveal { first, count }) = self.events.last_mut() {
            if *first + *count == index {
                *count += 1;
                return;
            }
        }
        self.events.push(Event::Reveal {
            first: index,
            count: 1,
        });
    }

    fn abort(&mut self, message: String) {
        self.aborted = true;
        self.events.push(Event::Diagnostic { message });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

#[derive(Debug, Clone)]
pub struct ConsensusGame {
    pub transcript: GameTranscript,
    pub allocation: Allocation,
    pub report: ConsensusReport,
    /// Everything the adversary revealed, for replay.
    pub realized: Option<OnlineStream>,
}

/// Plays `balancer` against `adversary` with `k` agents and validates the
/// result at tolerance `epsilon`.
pub fn play_consensus(
    balancer: &mut dyn ConsensusBalancer,
    adversary: &mut dyn ConsensusAdversary,
    k: usize,
    epsilon: &Rational,
) -> Result<ConsensusGame> {
    let n = adversary.n();
    let mut t = GameTranscript::new(balancer.name(), adversary.name());
    let mut shares = vec![vec![rational::zero(); n]; k];
    let mut pending = vec![rational::zero(); n];
    let mut revealed = vec![rational::zero(); n];
    let mut position = rational::zero();
    let mut cuts = Vec::new();
    let mut assignee = Vec::new();
    let mut candidates = vec![rational::zero()];
    let mut gap_masses = Vec::new();
    let mut index = 0u64;
    let mut masses_f = vec![0.0; n];
    while let Some(gap) = adversary.next_gap() {
        if gap.masses.len() != n
            || !gap.length.is_positive()
            || gap.masses.iter().any(|m| m.is_negative())
        {
            t.abort(format!("adversary produced a malformed gap at {index}"));
            break;
        }
        for (r, m) in revealed.iter_mut().zip(&gap.masses) {
            *r += m;
        }
        let end = &position + &gap.length;
        if end > rational::one() || revealed.iter().any(|r| r > &rational::one()) {
            t.abort(format!(
                "adversary exceeded [0, 1] or a unit mass at gap {index}"
            ));
            break;
        }
        t.reveal(index);
        for (f, m) in masses_f.iter_mut().zip(&gap.masses) {
            *f = rational::to_f64(m);
        }
        let view = GapView {
            length: rational::to_f64(&gap.length),
            masses: &masses_f,
        };
        if let Some(a) = balancer.at_candidate(view) {
            if index == 0 || a >= k {
                t.abort(format!("balancer made an illegal cut at gap {index}"));
                break;
            }
            for (s, p) in shares[a].iter_mut().zip(pending.iter_mut()) {
                *s += std::mem::replace(p, rational::zero());
            }
            t.events.push(Event::Cut {
                candidate: index,
                point: rational::format(&position),
                agent: a,
            });
            cuts.push(position.clone());
            assignee.push(a);
            adversary.on_cut(a);
        }
        for (p, m) in pending.iter_mut().zip(&gap.masses) {
            *p += m;
        }
        position = end;
        candidates.push(position.clone());
        gap_masses.push(gap.masses);
        index += 1;
    }
    if !t.aborted && (position != rational::one() || revealed.iter().any(|r| r != &rational::one()))
    {
        t.abort("adversary stopped before covering [0, 1] with unit masses".into());
    }
    let last = balancer.finish();
    let last = if last < k { last } else { 0 };
    for (s, p) in shares[last].iter_mut().zip(pending) {
        *s += p;
    }
    assignee.push(last);
    t.events.push(Event::Assign { agent: last });
    t.events.extend(adversary.punish_events());
    t.events.extend(
        balancer
            .diagnostics()
            .into_iter()
            .map(|message| Event::Diagnostic { message }),
    );
    t.cuts = cuts.len();
    t.certificate = adversary.certificate();
    let allocation = Allocation::from_parts(k, cuts, assignee, shares)?;
    let mut report = validate_proper_consensus(&allocation, epsilon, k);
    report.pass &= !t.aborted;
    let realized = if t.aborted || gap_masses.is_empty() {
        None
    } else {
        OnlineStream::from_explicit(k, &candidates, &gap_masses).ok()
    };
    Ok(ConsensusGame {
        transcript: t,
        allocation,
        report,
        realized,
    })
}

#[derive(Debug, Clone)]
pub struct NecklaceGame {
    pub transcript: GameTranscript,
    pub allocation: NecklaceAllocation,
    pub report: NecklaceReport,
    pub realized: NecklaceInstance,
}

pub fn play_necklace(
    balancer: &mut dyn NecklaceBalancer,
    adversary: &mut dyn NecklaceAdversary,
    k: usize,
) -> Result<NecklaceGame> {
    let counts = adversary.color_counts();
    let mut t = GameTranscript::new(balancer.name(), adversary.name());
    let mut beads = Vec::new();
    let mut cuts = Vec::new();
    let mut assignee = Vec::new();
    let mut used = vec![0usize; counts.len()];
    while let Some(color) = adversary.next_bead() {
        let j = beads.len();
        if color >= counts.len() || used[color] >= counts[color] {
            t.abort(format!(
                "adversary revealed too many beads of color {color}"
            ));
            break;
        }
        used[color] += 1;
        beads.push(color);
        t.reveal(j as u64);
        if let Some(a) = balancer.on_bead(color) {
            if j == 0 || a >= k {
                t.abort(format!("balancer made an illegal cut before bead {j}"));
                break;
            }
            t.events.push(Event::Cut {
                candidate: j as u64,
                point: j.to_string(),
                agent: a,
            });
            cuts.push(j);
            assignee.push(a);
            adversary.on_cut(a);
        }
    }
    let realized = NecklaceInstance::with_colors(beads, counts.len());
    let complete = realized
        .as_ref()
        .is_ok_and(|r| r.color_counts() == counts.as_slice());
    if !t.aborted && !complete {
        t.abort("adversary stopped before revealing every bead".into());
    }
    let realized = realized.map_err(|e| SplitError::Protocol(e.to_string()))?;
    let last = balancer.finish();
    let last = if last < k { last } else { 0 };
    assignee.push(last);
    t.events.push(Event::Assign { agent: last });
    t.events.extend(adversary.punish_events());
    t.events.extend(
        balancer
            .diagnostics()
            .into_iter()
            .map(|message| Event::Diagnostic { message }),
    );
    t.cuts = cuts.len();
    t.certificate = adversary.certificate();
    let allocation = build_necklace_allocation(&realized, cuts, assignee, k)?;
    let mut report = validate_proper_necklace(&realized, &allocation, k);
    report.pass &= !t.aborted;
    Ok(NecklaceGame {
        transcript: t,
        allocation,
        report,
        realized,
    })
}

/// Never cuts.
#[derive(Debug, Default)]
pub struct NeverCut;

impl ConsensusBalancer for NeverCut {
    fn name(&self) -> String {
        "never-cut".into()
    }
    fn at_candidate(&mut self, _: GapView<'_>) -> Option<usize> {
        None
    }
    fn finish(&mut self) -> usize {
        0
    }
}

impl NecklaceBalancer for NeverCut {
    fn name(&self) -> String {
        "never-cut".into()
    }
    fn on_bead(&mut self, _: usize) -> Option<usize> {
        None
    }
    fn finish(&mut self) -> usize {
        0
    }
}

/// Cuts as soon as the uncut stretch reaches `step` in length and
/// alternates between two agents.
#[derive(Debug)]
pub struct FixedStep {
    step: f64,
    since: f64,
    next: usize,
}

impl FixedStep {
    pub fn new(step: f64) -> Self {
        FixedStep {
            step,
            since: 0.0,
            next: 0,
        }
    }

    fn take(&mut self) -> usize {
        let a = self.next;
        self.next = 1 - a;
        a
    }
}

impl ConsensusBalancer for FixedStep {
    fn name(&self) -> String {
        format!("fixed-step({})", self.step)
    }
    fn at_candidate(&mut self, gap: GapView<'_>) -> Option<usize> {
        let out = if self.since >= self.step {
            self.since = 0.0;
            Some(self.take())
        } else {
            None
        };
        self.since += gap.length;
        out
    }
    fn finish(&mut self) -> usize {
        self.take()
    }
}

/// Cuts before every bead and gives each bead to an agent with the fewest
/// beads of its color.
#[derive(Debug, Clone)]
pub struct EveryBead {
    k: usize,
    held: Vec<Vec<usize>>,
    pending: Option<usize>,
}

impl EveryBead {
    pub fn new(n: usize, k: usize) -> Self {
        EveryBead {
            k,
            held: vec![vec![0; k]; n],
            pending: None,
        }
    }

    fn give(&mut self, color: usize) -> usize {
        let row = &mut self.held[color];
        let a = (0..self.k).min_by_key(|&a| row[a]).unwrap();
        row[a] += 1;
        a
    }
}

impl NecklaceBalancer for EveryBead {
    fn name(&self) -> String {
        "every-bead".into()
    }
    fn on_bead(&mut self, color: usize) -> Option<usize> {
        let out = self.pending.map(|c| self.give(c));
        self.pending = Some(color);
        out
    }
    fn finish(&mut self) -> usize {
        self.pending.take().map_or(0, |c| self.give(c))
    }
}

/// Cuts every `step` beads, alternating agents.
#[derive(Debug)]
pub struct FixedBeads {
    step: usize,
    since: usize,
    next: usize,
}

impl FixedBeads {
    pub fn new(step: usize) -> Self {
        FixedBeads {
            step: step.max(1),
            since: 0,
            next: 0,
        }
    }
}

impl NecklaceBalancer for FixedBeads {
    fn name(&self) -> String {
        format!("fixed-beads({})", self.step)
    }
    fn on_bead(&mut self, _: usize) -> Option<usize> {
        let out = if self.since >= self.step {
            self.since = 0;
            let a = self.next;
            self.next = 1 - a;
            Some(a)
        } else {
            None
        };
        self.since += 1;
        out
    }
    fn finish(&mut self) -> usize {
        self.next
    }
}

/// Replays a fixed stream as an adversary that ignores the balancer.
#[derive(Debug, Clone)]
pub struct StreamAdversary {
    stream: OnlineStream,
    run: usize,
    offset: u64,
}

impl StreamAdversary {
    pub fn new(stream: OnlineStream) -> Self {
        StreamAdversary {
            stream,
            run: 0,
            offset: 0,
        }
    }
}

impl ConsensusAdversary for StreamAdversary {
    fn name(&self) -> String {
        "stream".into()
    }
    fn n(&self) -> usize {
        self.stream.n()
    }
    fn next_gap(&mut self) -> Option<Gap> {
        let r = self.stream.runs.get(self.run)?;
        let length = (&r.end - &r.start) / rational::int(r.count as i64);
        let masses = r
            .numerators
            .iter()
            .zip(&self.stream.denominators)
            .map(|(&a, &d)| share(a, d))
            .collect();
        self.offset += 1;
        if self.offset == r.count {
            self.offset = 0;
            self.run += 1;
        }
        Some(Gap { length, masses })
    }
    fn on_cut(&mut self, _: usize) {}
}

/// Replays a fixed necklace.
#[derive(Debug, Clone)]
pub struct FixedNecklace {
    necklace: NecklaceInstance,
    next: usize,
}

impl FixedNecklace {
    pub fn new(necklace: NecklaceInstance) -> Self {
        FixedNecklace { necklace, next: 0 }
    }
}

impl NecklaceAdversary for FixedNecklace {
    fn name(&self) -> String {
        "fixed".into()
    }
    fn color_counts(&self) -> Vec<usize> {
        self.necklace.color_counts().to_vec()
    }
    fn next_bead(&mut self) -> Option<usize> {
        let c = self.necklace.beads().get(self.next).copied();
        self.next += 1;
        c
    }
    fn on_cut(&mut self, _: usize) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::GapRun;

    fn uniform_stream(gaps: u64) -> OnlineStream {
        OnlineStream {
            k: 2,
            denominators: vec![gaps],
            runs: vec![GapRun {
                start: rational::zero(),
                end: rational::one(),
                count: gaps,
                numerators: vec![1],
            }],
        }
    }

    #[test]
    fn never_cut_fails_validation() {
        let mut adv = StreamAdversary::new(uniform_stream(10));
        let game = play_consensus(&mut NeverCut, &mut adv, 2, &rational::q(1, 4)).unwrap();
        assert_eq!(game.transcript.cuts, 0);
        assert!(!game.report.pass);
        assert_eq!(
            game.transcript.events[0],
            Event::Reveal {
                first: 0,
                count: 10
            }
        );
    }

    #[test]
    fn fixed_step_halves_uniform() {
        let mut adv = StreamAdversary::new(uniform_stream(10));
        let game =
            play_consensus(&mut FixedStep::new(0.49), &mut adv, 2, &rational::zero()).unwrap();
        assert_eq!(game.allocation.cuts, vec![rational::q(1, 2)]);
        assert!(game.report.pass);
        assert_eq!(game.realized.unwrap().num_gaps(), 10);
    }

    #[test]
    fn every_bead_is_proper() {
        let nk = NecklaceInstance::new(vec![0, 1, 0, 1, 1]).unwrap();
        let mut adv = FixedNecklace::new(nk.clone());
        let game = play_necklace(&mut EveryBead::new(2, 2), &mut adv, 2).unwrap();
        assert!(game.report.pass);
        assert_eq!(game.realized, nk);
    }

    struct EagerCutter;
    impl ConsensusBalancer for EagerCutter {
        fn name(&self) -> String {
            "eager".into()
        }
        fn at_candidate(&mut self, _: GapView<'_>) -> Option<usize> {
            Some(0)
        }
        fn finish(&mut self) -> usize {
            0
        }
    }

    #[test]
    fn cut_at_zero_aborts() {
        let mut adv = StreamAdversary::new(uniform_stream(4));
        let game = play_consensus(&mut EagerCutter, &mut adv, 2, &rational::one()).unwrap();
        assert!(game.transcript.aborted);
        assert!(!game.report.pass);
    }
}
