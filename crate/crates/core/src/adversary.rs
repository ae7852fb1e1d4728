//! Adaptive lower-bound adversaries for the online games.
//!
//! Each adversary keeps one measure (or color) in reserve. While the
//! balancer keeps every tracked discrepancy small, the adversary feeds input
//! that makes a potential grow with every cut; once a discrepancy gets too
//! large it spends the reserve on a tail that no finite number of cuts can
//! balance.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};

use crate::error::{domain, Result};
use crate::game::{
    Certificate, CertificateStep, ConsensusAdversary, Event, Gap, NecklaceAdversary,
};
use crate::rational::{self, Rational};

/// `x^2 + y^2 + 5 scale (x - y)`.
pub fn potential_m(x: &Rational, y: &Rational, scale: &Rational) -> Rational {
    x * x + y * y + rational::int(5) * scale * (x - y)
}

fn small_fraction(gamma: &Rational) -> Option<(i128, i128)> {
    Some((gamma.numer().to_i128()?, gamma.denom().to_i128()?))
}

/// `a_j = ceil(gamma j) - ceil(gamma (j - 1))` for `j = 1..=len`.
pub fn balanced_binary_sequence(gamma: &Rational, len: usize) -> Vec<u8> {
    if let Some((p, q)) =
        small_fraction(gamma).filter(|&(p, q)| p.abs() < (1 << 60) && q < (1 << 60))
    {
        let ceil = |j: i128| (p * j).div_euclid(q) + i128::from((p * j).rem_euclid(q) != 0);
        return (1..=len as i128)
            .map(|j| u8::from(ceil(j) > ceil(j - 1)))
            .collect();
    }
    let mut prev = rational::zero().to_integer();
    (1..=len)
        .map(|j| {
            let c = rational::ceil(&(gamma * rational::int(j as i64)));
            let bit = if c > prev { 1 } else { 0 };
            prev = c;
            bit
        })
        .collect()
}

/// Largest `|ones(j) - gamma j|` over all prefixes.
pub fn max_prefix_deviation(bits: &[u8], gamma: &Rational) -> Rational {
    if let Some((p, q)) =
        small_fraction(gamma).filter(|&(p, q)| p.abs() < (1 << 60) && q < (1 << 60))
    {
        let mut ones = 0i128;
        let mut worst = 0i128;
        for (j, &b) in bits.iter().enumerate() {
            ones += i128::from(b);
            worst = worst.max((ones * q - p * (j as i128 + 1)).abs());
        }
        return Rational::new(worst.into(), q.into());
    }
    let mut ones = 0i64;
    let mut worst = rational::zero();
    for (j, &b) in bits.iter().enumerate() {
        ones += b as i64;
        let d = rational::abs(&(rational::int(ones) - gamma * rational::int(j as i64 + 1)));
        worst = worst.max(d);
    }
    worst
}

/// Spreads `remaining` masses uniformly over `gaps` equal gaps covering
/// `(position, 1]`. Only legal once the tracked discrepancy `x` reached
/// `2 epsilon`.
pub fn punishment_tail(
    position: &Rational,
    x: &Rational,
    epsilon: &Rational,
    remaining: &[Rational],
    gaps: usize,
) -> Result<Vec<Gap>> {
    if rational::abs(x) < epsilon * rational::int(2) {
        return domain("punishment needs a discrepancy of at least 2 epsilon");
    }
    if position >= &rational::one() || gaps == 0 {
        return domain("no room left for a tail");
    }
    Ok(uniform_gaps(&(rational::one() - position), remaining, gaps))
}

fn uniform_gaps(length: &Rational, remaining: &[Rational], gaps: usize) -> Vec<Gap> {
    let g = rational::int(gaps as i64);
    let gap = Gap {
        length: length / &g,
        masses: remaining.iter().map(|m| m / &g).collect(),
    };
    vec![gap; gaps]
}

/// Final discrepancies `(measure 1, reserved measure)` when the tail is cut
/// into pieces of the given relative `lengths` (summing to 1) with `signs`
/// `+1` for agent 0 and `-1` for agent 1. The tail holds `mu` of measure 1.
pub fn tail_discrepancies(
    x: &Rational,
    mu: &Rational,
    lengths: &[Rational],
    signs: &[i8],
) -> (Rational, Rational) {
    let s: Rational = lengths
        .iter()
        .zip(signs)
        .map(|(l, &e)| l * rational::int(e as i64))
        .sum();
    (x + mu * &s, s)
}

/// Tries every cut set drawn from `grid - 1` equally spaced interior points
/// (at most `max_cuts` of them) and every sign pattern. Returns a pattern that
/// keeps both discrepancies within `epsilon`, if one exists.
pub fn exhaustive_punishment_check(
    x: &Rational,
    mu: &Rational,
    epsilon: &Rational,
    grid: usize,
    max_cuts: usize,
) -> Option<(Vec<Rational>, Vec<i8>)> {
    let points = grid.saturating_sub(1);
    for mask in 0u32..(1u32 << points) {
        if mask.count_ones() as usize > max_cuts {
            continue;
        }
        let mut bounds = vec![0usize];
        bounds.extend((1..=points).filter(|i| mask & (1 << (i - 1)) != 0));
        bounds.push(grid);
        let lengths: Vec<Rational> = bounds
            .windows(2)
            .map(|w| rational::q((w[1] - w[0]) as i64, grid as i64))
            .collect();
        for signs in 0u32..(1u32 << lengths.len()) {
            let e: Vec<i8> = (0..lengths.len())
                .map(|i| if signs & (1 << i) != 0 { 1 } else { -1 })
                .collect();
            let (d1, d2) = tail_discrepancies(x, mu, &lengths, &e);
            if rational::abs(&d2) < *epsilon && rational::abs(&d1) <= *epsilon {
                return Some((lengths, e));
            }
        }
    }
    None
}

/// Gap count used by the consensus adversaries: fine enough that one gap of
/// lag never matters, `ceil(8 / epsilon^2)`.
pub fn consensus_gap_count(epsilon: &Rational) -> usize {
    rational::ceil(&(rational::int(8) / (epsilon * epsilon)))
        .to_usize()
        .unwrap_or(usize::MAX)
}

fn signed(agent: usize, v: &Rational) -> Rational {
    if agent == 0 {
        v.clone()
    } else {
        -v.clone()
    }
}

#[derive(Debug, Clone)]
struct Punishment {
    at: u64,
    reason: String,
}

/// Two measures; measure 1 arrives at density 1, measure 2 is the threat.
#[derive(Debug, Clone)]
pub struct ConsensusAdversaryN2 {
    epsilon: Rational,
    gaps: usize,
    forcing_gaps: usize,
    h: Rational,
    next: usize,
    tail_start: Option<usize>,
    x: Rational,
    open: Rational,
    last: Rational,
    punishment: Option<Punishment>,
    steps: Vec<CertificateStep>,
    forcing_cuts: usize,
}

impl ConsensusAdversaryN2 {
    pub fn new(epsilon: &Rational) -> Result<Self> {
        if !epsilon.is_positive() || epsilon >= &rational::q(1, 4) {
            return domain("epsilon must lie in (0, 1/4)");
        }
        let gaps = consensus_gap_count(epsilon);
        let forcing_gaps = (rational::int(gaps as i64) * (rational::one() - epsilon))
            .floor()
            .to_usize()
            .unwrap();
        Ok(ConsensusAdversaryN2 {
            epsilon: epsilon.clone(),
            gaps,
            forcing_gaps,
            h: rational::q(1, gaps as i64),
            next: 0,
            tail_start: None,
            x: rational::zero(),
            open: rational::zero(),
            last: rational::zero(),
            punishment: None,
            steps: Vec::new(),
            forcing_cuts: 0,
        })
    }

    pub fn punished(&self) -> bool {
        self.punishment.is_some()
    }

    /// Cuts forced inside the density-1 prefix when no punishment happens.
    pub fn required_forcing_cuts(&self) -> usize {
        let l = &self.h * rational::int(self.forcing_gaps as i64);
        (rational::ceil(&(l / (&self.epsilon * rational::int(4)))) - BigInt::from(1))
            .to_usize()
            .unwrap_or(0)
    }

    fn punish(&mut self, reason: String) {
        self.tail_start = Some(self.next);
        self.punishment = Some(Punishment {
            at: self.next as u64,
            reason,
        });
    }
}

impl ConsensusAdversary for ConsensusAdversaryN2 {
    fn name(&self) -> String {
        "consensus-n2".into()
    }
    fn n(&self) -> usize {
        2
    }
    fn next_gap(&mut self) -> Option<Gap> {
        if self.next == self.gaps {
            return None;
        }
        if self.tail_start.is_none() {
            if self.open >= &self.epsilon * rational::int(4) {
                self.punish(format!(
                    "uncut stretch of measure 1 reached {}",
                    rational::format(&self.open)
                ));
            } else if self.next == self.forcing_gaps {
                self.tail_start = Some(self.next);
            }
        }
        let m2 = match self.tail_start {
            Some(t) => rational::q(1, (self.gaps - t) as i64),
            None => rational::zero(),
        };
        self.next += 1;
        self.open += &self.h;
        self.last = self.h.clone();
        Some(Gap {
            length: self.h.clone(),
            masses: vec![self.h.clone(), m2],
        })
    }
    fn on_cut(&mut self, agent: usize) {
        let closed = &self.open - &self.last;
        self.open = self.last.clone();
        if self.tail_start.is_some() {
            return;
        }
        self.x += signed(agent, &closed);
        self.forcing_cuts += 1;
        let limit = &self.epsilon * rational::int(4);
        self.steps.push(CertificateStep {
            cut: self.forcing_cuts,
            growth: rational::format(&closed),
            required: format!("< {}", rational::format(&limit)),
            ok: closed < limit,
        });
        if rational::abs(&self.x) >= &self.epsilon * rational::int(2) {
            self.punish(format!(
                "measure-1 discrepancy {} after a cut",
                rational::format(&self.x)
            ));
        }
    }
    fn certificate(&self) -> Option<Certificate> {
        let required = self.required_forcing_cuts();
        let ok = self.steps.iter().all(|s| s.ok);
        Some(Certificate {
            statement:
                "every interval of the density-1 prefix holds less than 4 epsilon of measure 1"
                    .into(),
            pass: ok && (self.punished() || self.forcing_cuts >= required),
            steps: self.steps.clone(),
            forcing_cuts: self.forcing_cuts,
            required_cuts: if self.punished() { 0 } else { required },
        })
    }
    fn punish_events(&self) -> Vec<Event> {
        self.punishment
            .iter()
            .map(|p| Event::Punish {
                candidate: p.at,
                reason: p.reason.clone(),
            })
            .collect()
    }
}

/// Resolution of the mixing proportion used by [`ConsensusAdversaryN3`].
const GAMMA_BITS: u32 = 16;

/// `(10 e - 4 y) / (20 e + 4 (x - y))`.
pub fn mixing_gamma(x: &Rational, y: &Rational, scale: &Rational) -> Rational {
    let four = rational::int(4);
    (rational::int(10) * scale - &four * y) / (rational::int(20) * scale + four * (x - y))
}

fn dyadic(gamma: &Rational) -> Rational {
    let d = 1i64 << GAMMA_BITS;
    let r = (gamma * rational::int(d))
        .round()
        .to_integer()
        .to_i64()
        .unwrap_or(0)
        .clamp(1, d - 1);
    rational::q(r, d)
}

/// Three measures; measures 1 and 2 arrive in proportions that make the
/// potential grow quadratically in every interval, measure 3 is the threat.
#[derive(Debug, Clone)]
pub struct ConsensusAdversaryN3 {
    epsilon: Rational,
    gaps: usize,
    h: Rational,
    next: usize,
    gamma: Rational,
    /// Masses of the current gap template.
    template: [Rational; 2],
    revealed: [Rational; 2],
    tail: Option<Gap>,
    forcing_mass: Rational,
    x: Rational,
    y: Rational,
    open: [Rational; 2],
    last: [Rational; 2],
    punishment: Option<Punishment>,
    steps: Vec<CertificateStep>,
    slack: Rational,
    forcing_cuts: usize,
}

impl ConsensusAdversaryN3 {
    pub fn new(epsilon: &Rational) -> Result<Self> {
        if !epsilon.is_positive() || epsilon >= &rational::q(1, 8) {
            return domain("epsilon must lie in (0, 1/8)");
        }
        let gaps = consensus_gap_count(epsilon);
        let mut a = ConsensusAdversaryN3 {
            epsilon: epsilon.clone(),
            gaps,
            h: rational::q(1, gaps as i64),
            next: 0,
            gamma: rational::zero(),
            template: [rational::zero(), rational::zero()],
            revealed: [rational::zero(), rational::zero()],
            tail: None,
            forcing_mass: rational::zero(),
            x: rational::zero(),
            y: rational::zero(),
            open: [rational::zero(), rational::zero()],
            last: [rational::zero(), rational::zero()],
            punishment: None,
            steps: Vec::new(),
            slack: rational::zero(),
            forcing_cuts: 0,
        };
        a.retune();
        Ok(a)
    }

    pub fn gamma(&self) -> &Rational {
        &self.gamma
    }

    pub fn state(&self) -> (&Rational, &Rational) {
        (&self.x, &self.y)
    }

    pub fn punished(&self) -> bool {
        self.punishment.is_some()
    }

    fn retune(&mut self) {
        self.gamma = dyadic(&mixing_gamma(&self.x, &self.y, &self.epsilon));
        let four_h = &self.h * rational::int(4);
        self.template = [
            &four_h * &self.gamma,
            &four_h * (rational::one() - &self.gamma),
        ];
    }

    fn start_tail(&mut self) {
        let left = self.gaps - self.next;
        let remaining = [
            rational::one() - &self.revealed[0],
            rational::one() - &self.revealed[1],
            rational::one(),
        ];
        let length = &self.h * rational::int(left as i64);
        self.tail = uniform_gaps(&length, &remaining, left).pop();
    }

    fn punish(&mut self, reason: String) {
        self.punishment = Some(Punishment {
            at: self.next as u64,
            reason,
        });
        self.start_tail();
    }

    /// Allowance per interval for the dyadic proportion and the gap that was
    /// revealed before the balancer's cut.
    fn allowance(&self, alpha: &Rational) -> Rational {
        let e = &self.epsilon;
        rational::int(72) * e * &self.h + alpha * e * rational::q(1, 1 << (GAMMA_BITS - 4))
    }

    /// Smallest `r` with `A^2 / (2 r) <= 28 e^2 + slack`, where `A` is the
    /// measure revealed in the forcing phase minus what the last open
    /// interval can hold.
    pub fn required_cuts(&self) -> usize {
        let e = &self.epsilon;
        let a = &self.forcing_mass - rational::int(8) * e;
        if !a.is_positive() {
            return 0;
        }
        let cap = rational::int(28) * e * e + &self.slack;
        rational::ceil(&(&a * &a / (rational::int(2) * cap)))
            .to_usize()
            .unwrap_or(0)
    }
}

impl ConsensusAdversary for ConsensusAdversaryN3 {
    fn name(&self) -> String {
        "consensus-n3".into()
    }
    fn n(&self) -> usize {
        3
    }
    fn next_gap(&mut self) -> Option<Gap> {
        if self.next == self.gaps {
            return None;
        }
        if self.tail.is_none() {
            let limit = &self.epsilon * rational::int(4);
            if let Some(i) = (0..2).find(|&i| self.open[i] >= limit) {
                let reason = format!(
                    "uncut stretch of measure {} reached {}",
                    i + 1,
                    rational::format(&self.open[i])
                );
                self.punish(reason);
            } else if (0..2).any(|i| &self.revealed[i] + &self.template[i] > rational::one()) {
                self.start_tail();
            }
        }
        self.next += 1;
        if let Some(t) = &self.tail {
            return Some(t.clone());
        }
        for i in 0..2 {
            self.revealed[i] += &self.template[i];
            self.open[i] += &self.template[i];
            self.forcing_mass += &self.template[i];
        }
        self.last = self.template.clone();
        let [a, b] = self.template.clone();
        Some(Gap {
            length: self.h.clone(),
            masses: vec![a, b, rational::zero()],
        })
    }
    fn on_cut(&mut self, agent: usize) {
        if self.tail.is_some() {
            return;
        }
        let p: Vec<Rational> = (0..2).map(|i| &self.open[i] - &self.last[i]).collect();
        self.open = self.last.clone();
        let before = potential_m(&self.x, &self.y, &self.epsilon);
        self.x += signed(agent, &p[0]);
        self.y += signed(agent, &p[1]);
        let after = potential_m(&self.x, &self.y, &self.epsilon);
        let alpha = &p[0] + &p[1];
        let allowance = self.allowance(&alpha);
        let required = &alpha * &alpha / rational::int(2) - &allowance;
        self.slack += allowance;
        self.forcing_cuts += 1;
        let growth = after - before;
        self.steps.push(CertificateStep {
            cut: self.forcing_cuts,
            ok: growth >= required,
            growth: rational::format(&growth),
            required: rational::format(&required),
        });
        let bound = &self.epsilon * rational::int(2);
        if rational::abs(&self.x) >= bound || rational::abs(&self.y) >= bound {
            let reason = format!(
                "discrepancies ({}, {}) after a cut",
                rational::format(&self.x),
                rational::format(&self.y)
            );
            self.punish(reason);
        } else {
            self.retune();
        }
    }
    fn certificate(&self) -> Option<Certificate> {
        let ok = self.steps.iter().all(|s| s.ok);
        let required = if self.punished() {
            0
        } else {
            self.required_cuts()
        };
        Some(Certificate {
            statement: "M grows by at least alpha^2/2 minus a rounding allowance per interval of the feasible prefix".into(),
            pass: ok && (self.punished() || self.forcing_cuts >= required),
            steps: self.steps.clone(),
            forcing_cuts: self.forcing_cuts,
            required_cuts: required,
        })
    }
    fn punish_events(&self) -> Vec<Event> {
        self.punishment
            .iter()
            .map(|p| Event::Punish {
                candidate: p.at,
                reason: p.reason.clone(),
            })
            .collect()
    }
}

/// Colors from a balanced sequence: bit 1 becomes `one`, bit 0 `zero`. If
/// `first` is given and occurs, the sequence is arranged to start with it
/// (the earliest later bead of that color is swapped to the front) and that
/// first bead is dropped, since the balancer has already seen it.
pub fn balanced_order(
    gamma: &Rational,
    len: usize,
    one: usize,
    zero: usize,
    first: Option<usize>,
) -> Vec<usize> {
    let mut seq: Vec<usize> = balanced_binary_sequence(gamma, len)
        .into_iter()
        .map(|b| if b == 1 { one } else { zero })
        .collect();
    if let Some(f) = first {
        if let Some(i) = seq.iter().position(|&c| c == f) {
            seq.swap(0, i);
            seq.remove(0);
        }
    }
    seq
}

/// Integer `floor(m^(2/3))`.
pub fn two_thirds_power(m: usize) -> usize {
    let m2 = (m as u128) * (m as u128);
    let mut s = (m2 as f64).cbrt() as u128;
    while s * s * s > m2 {
        s -= 1;
    }
    while (s + 1) * (s + 1) * (s + 1) <= m2 {
        s += 1;
    }
    s as usize
}

#[derive(Debug, Clone)]
enum Feed {
    Forcing,
    Queue(Vec<usize>, usize),
}

impl Feed {
    fn pop(&mut self) -> Option<usize> {
        match self {
            Feed::Queue(q, i) => {
                let c = q.get(*i).copied();
                *i += 1;
                c
            }
            Feed::Forcing => None,
        }
    }
}

/// Two colors; color 0 alone until a discrepancy of `floor(sqrt m)`, then
/// a balanced tail mixing the rest of color 0 with color 1.
#[derive(Debug, Clone)]
pub struct NecklaceAdversaryN2 {
    m: usize,
    delta: usize,
    used: [usize; 2],
    open: usize,
    x: i64,
    feed: Feed,
    punishment: Option<Punishment>,
    steps: Vec<CertificateStep>,
    forcing_cuts: usize,
    revealed: usize,
}

impl NecklaceAdversaryN2 {
    pub fn new(m: usize) -> Result<Self> {
        if m < 4 {
            return domain("need at least four beads per color");
        }
        let delta = m.isqrt();
        Ok(NecklaceAdversaryN2 {
            m,
            delta,
            used: [0, 0],
            open: 0,
            x: 0,
            feed: Feed::Forcing,
            punishment: None,
            steps: Vec::new(),
            forcing_cuts: 0,
            revealed: 0,
        })
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn punished(&self) -> bool {
        self.punishment.is_some()
    }

    /// Forcing intervals hold at most `2 delta - 1` beads.
    pub fn required_forcing_cuts(&self) -> usize {
        self.m.div_ceil(2 * self.delta - 1) - 1
    }

    fn tail(&mut self, first: Option<usize>, reason: String) {
        let alpha = self.m - self.used[0] + usize::from(first.is_some());
        let gamma = rational::q(self.m as i64, (alpha + self.m) as i64);
        let q = balanced_order(&gamma, alpha + self.m, 1, 0, first);
        self.punishment = Some(Punishment {
            at: self.revealed as u64,
            reason,
        });
        self.feed = Feed::Queue(q, 0);
    }
}

impl NecklaceAdversary for NecklaceAdversaryN2 {
    fn name(&self) -> String {
        "necklace-n2".into()
    }
    fn color_counts(&self) -> Vec<usize> {
        vec![self.m, self.m]
    }
    fn next_bead(&mut self) -> Option<usize> {
        if matches!(self.feed, Feed::Forcing) && self.open >= 2 * self.delta {
            self.tail(
                None,
                format!("{} beads of color 0 without a cut", self.open),
            );
        }
        let c = match self.feed {
            Feed::Forcing if self.used[0] < self.m => 0,
            Feed::Forcing if self.used[1] < self.m => 1,
            Feed::Forcing => return None,
            Feed::Queue(..) => self.feed.pop()?,
        };
        self.used[c] += 1;
        self.revealed += 1;
        self.open += 1;
        Some(c)
    }
    fn on_cut(&mut self, agent: usize) {
        let closed = self.open - 1;
        self.open = 1;
        if !matches!(self.feed, Feed::Forcing) || self.used[0] == self.m && self.used[1] > 0 {
            return;
        }
        self.x += if agent == 0 {
            closed as i64
        } else {
            -(closed as i64)
        };
        self.forcing_cuts += 1;
        self.steps.push(CertificateStep {
            cut: self.forcing_cuts,
            growth: closed.to_string(),
            required: format!("< {}", 2 * self.delta),
            ok: closed < 2 * self.delta,
        });
        if self.x.unsigned_abs() as usize >= self.delta {
            self.tail(
                Some(0),
                format!("color-0 discrepancy {} after a cut", self.x),
            );
        }
    }
    fn certificate(&self) -> Option<Certificate> {
        let ok = self.steps.iter().all(|s| s.ok);
        let required = if self.punished() {
            0
        } else {
            self.required_forcing_cuts()
        };
        Some(Certificate {
            statement: "every interval among the color-0 beads holds fewer than 2 sqrt(m) beads"
                .into(),
            pass: ok && (self.punished() || self.forcing_cuts >= required),
            steps: self.steps.clone(),
            forcing_cuts: self.forcing_cuts,
            required_cuts: required,
        })
    }
    fn punish_events(&self) -> Vec<Event> {
        self.punishment
            .iter()
            .map(|p| Event::Punish {
                candidate: p.at,
                reason: p.reason.clone(),
            })
            .collect()
    }
}

/// Three colors; the first `m + 4 m^(2/3)` beads mix colors 0 and 1 in
/// state-dependent proportions, color 2 is the threat.
#[derive(Debug, Clone)]
pub struct NecklaceAdversaryN3 {
    m: usize,
    scale: usize,
    forcing_len: usize,
    used: [usize; 3],
    revealed: usize,
    block: Vec<usize>,
    block_pos: usize,
    open: [usize; 3],
    last: usize,
    x: i64,
    y: i64,
    feed: Feed,
    punishment: Option<Punishment>,
    steps: Vec<CertificateStep>,
    forcing_cuts: usize,
    max_block_deviation: Rational,
}

impl NecklaceAdversaryN3 {
    pub fn new(m: usize) -> Result<Self> {
        if m < 8 {
            return domain("need at least eight beads per color");
        }
        let scale = two_thirds_power(m);
        let mut a = NecklaceAdversaryN3 {
            m,
            scale,
            forcing_len: (m + 4 * scale).min(2 * m),
            used: [0; 3],
            revealed: 0,
            block: Vec::new(),
            block_pos: 0,
            open: [0; 3],
            last: 0,
            x: 0,
            y: 0,
            feed: Feed::Forcing,
            punishment: None,
            steps: Vec::new(),
            forcing_cuts: 0,
            max_block_deviation: rational::zero(),
        };
        a.new_block(None);
        Ok(a)
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn punished(&self) -> bool {
        self.punishment.is_some()
    }

    /// Largest prefix deviation from the target proportions seen in any block.
    pub fn max_block_deviation(&self) -> &Rational {
        &self.max_block_deviation
    }

    pub fn gamma(&self) -> Rational {
        let s = rational::int(self.scale as i64);
        mixing_gamma(&rational::int(self.x), &rational::int(self.y), &s)
    }

    fn new_block(&mut self, first: Option<usize>) {
        let gamma = self.gamma();
        let len = self.forcing_len - self.revealed + usize::from(first.is_some());
        let mut full = balanced_order(&gamma, len, 0, 1, None);
        if let Some(f) = first {
            if let Some(i) = full.iter().position(|&c| c == f) {
                full.swap(0, i);
            }
        }
        let ones: Vec<u8> = full.iter().map(|&c| u8::from(c == 0)).collect();
        self.max_block_deviation = self
            .max_block_deviation
            .clone()
            .max(max_prefix_deviation(&ones, &gamma));
        if first.is_some() && !full.is_empty() {
            full.remove(0);
        }
        self.block = full;
        self.block_pos = 0;
    }

    /// Smallest `r` with `m^2 / (2 r) - 30 s r <= 12 s^2`.
    pub fn required_cuts(&self) -> usize {
        let (m, s) = (self.m as f64, self.scale as f64);
        (1..)
            .find(|&r| m * m / (2.0 * r as f64) - 30.0 * s * r as f64 <= 12.0 * s * s)
            .unwrap()
    }

    fn tail(&mut self, color: usize, first: Option<usize>, reason: String) {
        let lag = first.filter(|&f| f == color || f == 2);
        let alpha = self.m - self.used[color] + usize::from(lag == Some(color));
        let reserve = self.m - self.used[2] + usize::from(lag == Some(2));
        let gamma = rational::q(reserve as i64, (alpha + reserve) as i64);
        let mut q = balanced_order(&gamma, alpha + reserve, 2, color, lag);
        let other = 1 - color;
        q.extend(std::iter::repeat_n(other, self.m - self.used[other]));
        self.punishment = Some(Punishment {
            at: self.revealed as u64,
            reason,
        });
        self.feed = Feed::Queue(q, 0);
    }

    fn finish_forcing(&mut self) {
        let mut q = Vec::new();
        for c in 0..3 {
            q.extend(std::iter::repeat_n(c, self.m - self.used[c]));
        }
        self.feed = Feed::Queue(q, 0);
    }
}

impl NecklaceAdversary for NecklaceAdversaryN3 {
    fn name(&self) -> String {
        "necklace-n3".into()
    }
    fn color_counts(&self) -> Vec<usize> {
        vec![self.m; 3]
    }
    fn next_bead(&mut self) -> Option<usize> {
        if matches!(self.feed, Feed::Forcing) {
            if let Some(c) = (0..2).find(|&c| self.open[c] > 2 * self.scale) {
                self.tail(
                    c,
                    None,
                    format!("{} beads of color {c} without a cut", self.open[c]),
                );
            } else if self.revealed == self.forcing_len {
                self.finish_forcing();
            }
        }
        let c = match self.feed {
            Feed::Forcing => {
                let mut c = self.block[self.block_pos];
                self.block_pos += 1;
                if self.used[c] == self.m {
                    c = 1 - c;
                }
                c
            }
            Feed::Queue(..) => self.feed.pop()?,
        };
        self.used[c] += 1;
        self.revealed += 1;
        self.open[c] += 1;
        self.last = c;
        Some(c)
    }
    fn on_cut(&mut self, agent: usize) {
        let mut closed = self.open;
        closed[self.last] -= 1;
        self.open = [0; 3];
        self.open[self.last] = 1;
        if !matches!(self.feed, Feed::Forcing) {
            return;
        }
        let s = rational::int(self.scale as i64);
        let before = potential_m(&rational::int(self.x), &rational::int(self.y), &s);
        let sign = if agent == 0 { 1 } else { -1 };
        self.x += sign * closed[0] as i64;
        self.y += sign * closed[1] as i64;
        let after = potential_m(&rational::int(self.x), &rational::int(self.y), &s);
        let j = (closed[0] + closed[1]) as i64;
        let required = rational::q(j * j, 2) - rational::int(30 * self.scale as i64);
        let growth = after - before;
        self.forcing_cuts += 1;
        self.steps.push(CertificateStep {
            cut: self.forcing_cuts,
            ok: growth >= required,
            growth: rational::format(&growth),
            required: rational::format(&required),
        });
        let bound = self.scale as u64;
        if self.x.unsigned_abs() > bound || self.y.unsigned_abs() > bound {
            let color = if self.x.unsigned_abs() >= self.y.unsigned_abs() {
                0
            } else {
                1
            };
            self.tail(
                color,
                Some(self.last),
                format!("discrepancies ({}, {}) after a cut", self.x, self.y),
            );
        } else if self.revealed < self.forcing_len {
            self.new_block(Some(self.last));
        }
    }
    fn certificate(&self) -> Option<Certificate> {
        let ok = self.steps.iter().all(|s| s.ok);
        let required = if self.punished() {
            0
        } else {
            self.required_cuts()
        };
        Some(Certificate {
            statement:
                "M grows by at least j^2/2 - 30 m^(2/3) per cut of j beads in the forcing prefix"
                    .into(),
            pass: ok && (self.punished() || self.forcing_cuts >= required),
            steps: self.steps.clone(),
            forcing_cuts: self.forcing_cuts,
            required_cuts: required,
        })
    }
    fn punish_events(&self) -> Vec<Event> {
        self.punishment
            .iter()
            .map(|p| Event::Punish {
                candidate: p.at,
                reason: p.reason.clone(),
            })
            .collect()
    }
}

/// Fewest cuts a two-agent balancer needs after the adversary's tail
/// started, given color discrepancies `start` (agent 0 minus agent 1) at
/// the last cut, the beads of the tail, and the per-color limit `slack` on
/// the final discrepancy. Exhaustive dynamic program; `None` if no
/// completion is proper.
pub fn min_tail_cuts(start: [i64; 2], tail: &[usize], slack: i64) -> Option<usize> {
    use std::collections::HashMap;
    let mut layer: HashMap<(usize, i64, i64), usize> = HashMap::new();
    for owner in 0..2 {
        layer.insert((owner, start[0], start[1]), 0);
    }
    for (i, &c) in tail.iter().enumerate() {
        let mut next: HashMap<(usize, i64, i64), usize> = HashMap::new();
        for (&(owner, d0, d1), &cuts) in &layer {
            for o in 0..2 {
                let extra = usize::from(o != owner && i > 0);
                let s = if o == 0 { 1 } else { -1 };
                let key = if c == 0 {
                    (o, d0 + s, d1)
                } else {
                    (o, d0, d1 + s)
                };
                let e = next.entry(key).or_insert(usize::MAX);
                *e = (*e).min(cuts + extra);
            }
        }
        layer = next;
    }
    layer
        .into_iter()
        .filter(|&((_, d0, d1), _)| d0.abs() <= slack && d1.abs() <= slack)
        .map(|(_, c)| c)
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{play_consensus, play_necklace, EveryBead, FixedBeads, FixedStep, NeverCut};
    use crate::online::PotentialBalancer;
    use crate::online_necklace::CriticalColorBalancer;
    use crate::rational::q;

    #[test]
    fn potential_m_examples() {
        let e = q(1, 10);
        assert_eq!(
            potential_m(&rational::zero(), &rational::zero(), &e),
            rational::zero()
        );
        let x = &e * rational::int(2);
        assert_eq!(
            potential_m(&x, &-x.clone(), &e),
            rational::int(28) * &e * &e
        );
    }

    #[test]
    fn proportional_step_grows_m() {
        let e = q(1, 20);
        for (x, y) in [
            (q(0, 1), q(0, 1)),
            (q(3, 100), q(-1, 20)),
            (q(-9, 100), q(7, 100)),
        ] {
            let g = mixing_gamma(&x, &y, &e);
            let alpha = q(1, 7);
            let p = [&alpha * &g, &alpha * (rational::one() - &g)];
            let m0 = potential_m(&x, &y, &e);
            let plus = potential_m(&(&x + &p[0]), &(&y + &p[1]), &e) - &m0;
            let minus = potential_m(&(&x - &p[0]), &(&y - &p[1]), &e) - &m0;
            let half = &alpha * &alpha / rational::int(2);
            assert!(plus >= half && minus >= half);
        }
    }

    #[test]
    fn balanced_sequence_examples() {
        assert_eq!(balanced_binary_sequence(&rational::zero(), 4), vec![0; 4]);
        assert_eq!(
            balanced_binary_sequence(&q(1, 2), 6),
            vec![1, 0, 1, 0, 1, 0]
        );
        assert_eq!(
            balanced_binary_sequence(&q(1, 3), 6),
            vec![1, 0, 0, 1, 0, 0]
        );
        for g in [q(2, 7), q(5, 9), q(1, 1), q(13, 64)] {
            assert!(max_prefix_deviation(&balanced_binary_sequence(&g, 200), &g) < rational::one());
        }
    }

    #[test]
    fn gamma_is_a_proportion_on_the_box() {
        let e = q(1, 10);
        assert_eq!(
            mixing_gamma(&rational::zero(), &rational::zero(), &e),
            q(1, 2)
        );
        for i in -19..=19 {
            for j in -19..=19 {
                let g = mixing_gamma(&q(i, 100), &q(j, 100), &e);
                assert!(g.is_positive() && g < rational::one());
            }
        }
    }

    #[test]
    fn punishment_needs_large_discrepancy() {
        let e = q(1, 10);
        assert!(punishment_tail(
            &q(1, 2),
            &rational::zero(),
            &e,
            &[q(1, 2), rational::one()],
            4
        )
        .is_err());
        let tail = punishment_tail(&q(1, 2), &q(1, 5), &e, &[q(1, 2), rational::one()], 4).unwrap();
        assert_eq!(tail.len(), 4);
        assert_eq!(tail[0].masses, vec![q(1, 8), q(1, 4)]);
    }

    #[test]
    fn no_tail_pattern_escapes_punishment() {
        let e = q(1, 10);
        for mu in [q(1, 2), q(9, 10), q(99, 100)] {
            assert_eq!(exhaustive_punishment_check(&q(1, 5), &mu, &e, 10, 10), None);
        }
        // a small discrepancy can be repaired
        assert!(exhaustive_punishment_check(&q(1, 20), &q(1, 2), &e, 10, 10).is_some());
    }

    #[test]
    fn consensus_n2_games() {
        let e = q(1, 20);
        let mut adv = ConsensusAdversaryN2::new(&e).unwrap();
        let game = play_consensus(&mut FixedStep::new(0.04), &mut adv, 2, &e).unwrap();
        assert!(!adv.punished());
        assert!(game.transcript.cuts >= 5);
        assert!(game.transcript.certificate.unwrap().pass);

        let mut adv = ConsensusAdversaryN2::new(&e).unwrap();
        let game = play_consensus(&mut NeverCut, &mut adv, 2, &e).unwrap();
        assert!(adv.punished());
        assert!(!game.report.pass);

        let mut adv = ConsensusAdversaryN2::new(&e).unwrap();
        let game =
            play_consensus(&mut PotentialBalancer::halving(2, 0.05), &mut adv, 2, &e).unwrap();
        assert!(game.transcript.cuts >= 5);
        assert!(!game.transcript.aborted);
    }

    #[test]
    fn consensus_n3_against_potential_balancer() {
        for (e, need) in [(q(1, 10), 2), (q(1, 20), 8)] {
            let mut adv = ConsensusAdversaryN3::new(&e).unwrap();
            let eps = rational::to_f64(&e);
            let game =
                play_consensus(&mut PotentialBalancer::halving(3, eps), &mut adv, 2, &e).unwrap();
            let cert = game.transcript.certificate.clone().unwrap();
            assert!(!game.transcript.aborted);
            assert!(cert.pass, "{:?}", cert.steps.iter().find(|s| !s.ok));
            assert!(game.transcript.cuts >= need);
        }
    }

    #[test]
    fn consensus_n3_punishes_lazy_balancer() {
        let e = q(1, 10);
        let mut adv = ConsensusAdversaryN3::new(&e).unwrap();
        let game = play_consensus(&mut FixedStep::new(0.2), &mut adv, 2, &e).unwrap();
        assert!(adv.punished());
        assert!(!game.report.pass);
    }

    #[test]
    fn necklace_n2_games() {
        let m = 256;
        let mut adv = NecklaceAdversaryN2::new(m).unwrap();
        let game = play_necklace(&mut FixedBeads::new(15), &mut adv, 2).unwrap();
        assert!(!adv.punished());
        assert!(game.transcript.cuts >= 8);

        let mut adv = NecklaceAdversaryN2::new(m).unwrap();
        let game =
            play_necklace(&mut CriticalColorBalancer::halving(&[m, m]), &mut adv, 2).unwrap();
        assert!(game.transcript.cuts >= 8);
        assert!(game.report.pass);

        let mut adv = NecklaceAdversaryN2::new(m).unwrap();
        let game = play_necklace(&mut NeverCut, &mut adv, 2).unwrap();
        assert!(adv.punished() && !game.report.pass);
    }

    #[test]
    fn tail_forces_cuts_exhaustively() {
        for m in [16usize, 32, 64] {
            for delta in (2..=m / 2).step_by(2) {
                let alpha = m - delta;
                let gamma = q(m as i64, (alpha + m) as i64);
                let tail = balanced_order(&gamma, alpha + m, 1, 0, None);
                let cuts = min_tail_cuts([delta as i64, 0], &tail, 0).unwrap();
                // intervals after the triggering cut
                assert!(4 * (cuts + 1) >= delta, "m={m} delta={delta} cuts={cuts}");
            }
        }
    }

    #[test]
    fn swapped_order_keeps_deviation_below_two() {
        for (g, len) in [(q(1, 2), 40), (q(3, 7), 50), (q(9, 10), 30)] {
            for first in [0, 1] {
                let mut seq = balanced_order(&g, len, 1, 0, None);
                if let Some(i) = seq.iter().position(|&c| c == first) {
                    seq.swap(0, i);
                }
                let bits: Vec<u8> = seq.iter().map(|&c| c as u8).collect();
                assert!(max_prefix_deviation(&bits, &g) < rational::int(2));
            }
        }
    }

    #[test]
    fn necklace_n3_games() {
        let m = 4096;
        let mut adv = NecklaceAdversaryN3::new(m).unwrap();
        assert_eq!(adv.scale(), 256);
        assert_eq!(adv.gamma(), q(1, 2));
        let game =
            play_necklace(&mut CriticalColorBalancer::halving(&[m, m, m]), &mut adv, 2).unwrap();
        let cert = game.transcript.certificate.clone().unwrap();
        assert!(cert.pass, "{:?}", cert.steps.iter().find(|s| !s.ok));
        assert!(game.transcript.cuts * 60 >= 256);
        assert!(adv.max_block_deviation() < &rational::int(2));

        let mut adv = NecklaceAdversaryN3::new(64).unwrap();
        let game = play_necklace(&mut EveryBead::new(3, 2), &mut adv, 2).unwrap();
        assert!(game.report.pass);
    }
}
