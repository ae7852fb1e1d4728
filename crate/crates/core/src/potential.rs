//! The pessimistic-estimator potential that drives online assignment.
//!
//! For measure `i` and agents `a < b` with shares `x_a, x_b`, the pair term
//! is `cosh(lambda (x_a - x_b)) * exp(c lambda^2 g (1 - s_i))`, where `s_i`
//! is the allocated mass of measure `i`. With two agents `c = 1/2`; with `k`
//! agents `c = 2/k`. The total `psi` sums all pair terms of all active
//! measures and is handled through `ln psi`.

use serde::{Deserialize, Serialize};

use crate::rational::log2_floored;

const TIE_TOLERANCE: f64 = 1.0 / (1u64 << 40) as f64;
const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub g: f64,
    pub lambda: f64,
    pub tail: f64,
}

impl PotentialParams {
    /// `g = eps^2 / (8 log n)`, `lambda = 4 log n / eps`.
    pub fn halving(n: usize, epsilon: f64) -> Self {
        let l = log2_floored(n);
        PotentialParams {
            g: epsilon * epsilon / (8.0 * l),
            lambda: 4.0 * l / epsilon,
            tail: 0.5,
        }
    }

    /// `g = eps^2 / (100 k log(nk))`, `lambda = eps / (4g)`.
    pub fn splitting(n: usize, k: usize, epsilon: f64) -> Self {
        let g = epsilon * epsilon / (100.0 * k as f64 * log2_floored(n * k));
        PotentialParams {
            g,
            lambda: epsilon / (4.0 * g),
            tail: 2.0 / k as f64,
        }
    }
}

/// Cut iff the pending interval is nonempty and waiting one more gap would
/// push some measure above `g`.
pub fn decide_cut(pending: &[f64], lookahead: &[f64], g: f64) -> bool {
    pending.iter().any(|&p| p > 0.0) && lookahead.iter().any(|&l| l > g)
}

#[derive(Debug, Clone)]
pub struct Potential {
    params: PotentialParams,
    k: usize,
    /// `shares[i][a]`
    shares: Vec<Vec<f64>>,
    allocated: Vec<f64>,
    pair_sum: Vec<f64>,
    active: Vec<bool>,
    ln_psi: f64,
    initial_ln_psi: f64,
    max_increase: f64,
    assignments: usize,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn ln_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn pick(values: &[f64]) -> usize {
    let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .position(|&v| v - best <= TIE_TOLERANCE)
        .unwrap_or(0)
}

impl Potential {
    pub fn new(n: usize, k: usize, params: PotentialParams) -> Self {
        let pairs = (k * (k - 1) / 2).max(1) as f64;
        let mut p = Potential {
            params,
            k,
            shares: vec![vec![0.0; k]; n],
            allocated: vec![0.0; n],
            pair_sum: vec![pairs; n],
            active: vec![true; n],
            ln_psi: 0.0,
            initial_ln_psi: 0.0,
            max_increase: f64::NEG_INFINITY,
            assignments: 0,
        };
        p.ln_psi = p.total();
        p.initial_ln_psi = p.ln_psi;
        p
    }

    pub fn params(&self) -> PotentialParams {
        self.params
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn tail_term(&self, s: f64) -> f64 {
        let p = &self.params;
        p.tail * p.lambda * p.lambda * p.g * (1.0 - s)
    }

    fn term(&self, s: f64, pair_sum: f64) -> f64 {
        self.tail_term(s) + pair_sum.ln()
    }

    fn current_term(&self, i: usize) -> f64 {
        if self.active[i] {
            self.term(self.allocated[i], self.pair_sum[i])
        } else {
            f64::NEG_INFINITY
        }
    }

    fn total(&self) -> f64 {
        let terms: Vec<f64> = (0..self.shares.len())
            .map(|i| self.current_term(i))
            .collect();
        log_sum_exp(&terms)
    }

    fn pair_sum_of(&self, row: &[f64]) -> f64 {
        if self.k == 1 {
            return 1.0;
        }
        let mut s = 0.0;
        for a in 0..self.k {
            for b in a + 1..self.k {
                s += (self.params.lambda * (row[a] - row[b])).cosh();
            }
        }
        s
    }

    /// `ln psi` of the current state.
    pub fn ln_psi(&self) -> f64 {
        self.ln_psi
    }

    pub fn psi_total(&self) -> f64 {
        self.ln_psi.exp()
    }

    pub fn initial_ln_psi(&self) -> f64 {
        self.initial_ln_psi
    }

    fn candidate_terms(&self, masses: &[f64], agent: usize, out: &mut Vec<f64>) {
        let lambda = self.params.lambda;
        out.clear();
        out.extend((0..self.shares.len()).map(|i| {
            let v = masses[i];
            if v == 0.0 || !self.active[i] {
                return self.current_term(i);
            }
            let row = &self.shares[i];
            let ln_pairs = if self.k == 2 {
                ln_cosh(lambda * (row[0] - row[1] + if agent == 0 { v } else { -v }))
            } else {
                let mut s = self.pair_sum[i];
                for b in (0..self.k).filter(|&b| b != agent) {
                    s -= (lambda * (row[agent] - row[b])).cosh();
                    s += (lambda * (row[agent] + v - row[b])).cosh();
                }
                s.ln()
            };
            self.tail_term(self.allocated[i] + v) + ln_pairs
        }));
    }

    /// `ln psi` after hypothetically giving `masses` to `agent`.
    pub fn evaluate(&self, masses: &[f64], agent: usize) -> f64 {
        let mut terms = Vec::with_capacity(self.shares.len());
        self.candidate_terms(masses, agent, &mut terms);
        log_sum_exp(&terms)
    }

    /// Agent minimizing `psi` after the assignment; near-ties go to the
    /// lowest index.
    pub fn choose_assignee(&self, masses: &[f64]) -> usize {
        let values: Vec<f64> = (0..self.k).map(|a| self.evaluate(masses, a)).collect();
        pick(&values)
    }

    fn commit(&mut self, masses: &[f64], agent: usize) {
        for (i, &v) in masses.iter().enumerate() {
            if v != 0.0 {
                self.shares[i][agent] += v;
                self.allocated[i] += v;
                self.pair_sum[i] = self.pair_sum_of(&self.shares[i]);
            }
        }
        self.assignments += 1;
    }

    fn record(&mut self, next: f64) {
        self.max_increase = self.max_increase.max(next - self.ln_psi);
        self.ln_psi = next;
    }

    pub fn apply(&mut self, masses: &[f64], agent: usize) {
        self.commit(masses, agent);
        let next = self.total();
        self.record(next);
    }

    /// `ln psi` for both agents of a halving from one pass, using
    /// `cosh(u + w) = cosh u cosh w + sinh u sinh w`. None on overflow.
    fn two_agent_values(&self, masses: &[f64]) -> Option<[f64; 2]> {
        let p = &self.params;
        let c = p.tail * p.lambda * p.lambda * p.g;
        let (mut up, mut down) = (0.0, 0.0);
        for i in (0..self.shares.len()).filter(|&i| self.active[i]) {
            let row = &self.shares[i];
            let u = p.lambda * (row[0] - row[1]);
            let e = (c * (1.0 - self.allocated[i] - masses[i])).exp();
            let v = masses[i];
            if v == 0.0 {
                let t = e * u.cosh();
                up += t;
                down += t;
                continue;
            }
            let (eu, ew) = (u.exp(), (p.lambda * v).exp());
            let base = e * (eu + 1.0 / eu) * (ew + 1.0 / ew) / 4.0;
            let skew = e * (eu - 1.0 / eu) * (ew - 1.0 / ew) / 4.0;
            up += base + skew;
            down += base - skew;
        }
        let values = [up.ln(), down.ln()];
        values.iter().all(|v| v.is_finite()).then_some(values)
    }

    /// Chooses and applies; returns the agent.
    pub fn assign(&mut self, masses: &[f64]) -> usize {
        if self.k == 2 {
            if let Some(values) = self.two_agent_values(masses) {
                let a = pick(&values);
                self.commit(masses, a);
                self.record(values[a]);
                return a;
            }
        }
        let mut terms = Vec::with_capacity(self.shares.len());
        let values: Vec<f64> = (0..self.k)
            .map(|a| {
                self.candidate_terms(masses, a, &mut terms);
                log_sum_exp(&terms)
            })
            .collect();
        let a = pick(&values);
        self.commit(masses, a);
        self.record(values[a]);
        a
    }

    /// Removes a measure from the potential for good.
    pub fn deactivate(&mut self, i: usize) {
        if self.active[i] {
            self.active[i] = false;
            self.ln_psi = self.total();
        }
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn shares(&self, i: usize) -> &[f64] {
        &self.shares[i]
    }

    /// Largest observed `ln psi(t+1) - ln psi(t)` over all assignments.
    pub fn max_increase(&self) -> f64 {
        self.max_increase
    }

    /// True when no assignment increased `psi` beyond float slack.
    pub fn monotone(&self) -> bool {
        self.assignments == 0 || self.max_increase <= MONOTONE_SLACK
    }
}
