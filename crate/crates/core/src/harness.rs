//! Named strategies, batch runs over seeded instances, and report output.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    ConsensusAdversaryN2, ConsensusAdversaryN3, NecklaceAdversaryN2, NecklaceAdversaryN3,
};
use crate::allocation::{absolute_discrepancy, validate_proper_necklace};
use crate::error::{domain, Result};
use crate::game::{
    play_consensus, play_necklace, Certificate, ConsensusAdversary, ConsensusBalancer, EveryBead,
    FixedBeads, FixedNecklace, FixedStep, GameTranscript, NecklaceAdversary, NecklaceBalancer,
    NeverCut, StreamAdversary,
};
use crate::generate::{generate_instance, generate_necklace, generate_stream};
use crate::measure::NecklaceInstance;
use crate::offline::{self, offline_halving, offline_splitting};
use crate::offline_necklace::{
    necklace_cut_bound, offline_necklace_halving, two_color_circular_split,
};
use crate::online::{self, run_online_halving, run_online_splitting, PotentialBalancer};
use crate::online_necklace::{
    necklace_halving_cut_bound, necklace_splitting_cut_scale, run_online_necklace_halving,
    run_online_necklace_splitting, CriticalColorBalancer,
};
use crate::rational::{self, Rational};
use crate::type1::type1_solve;

pub const CONSENSUS_BALANCERS: &[&str] = &["potential", "never-cut", "fixed-step"];
pub const NECKLACE_BALANCERS: &[&str] = &[
    "potential-necklace",
    "every-bead",
    "never-cut",
    "fixed-beads",
];
pub const CONSENSUS_ADVERSARIES: &[&str] = &["consensus-n2", "consensus-n3", "stream"];
pub const NECKLACE_ADVERSARIES: &[&str] = &["necklace-n2", "necklace-n3", "fixed"];

/// Everything a game may need; each strategy reads the fields it uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub balancer: String,
    pub adversary: String,
    pub n: usize,
    pub k: usize,
    #[serde(with = "rational::serde_q")]
    pub epsilon: Rational,
    pub m: usize,
    pub seed: u64,
    pub segments: usize,
    /// Step for `fixed-step` (length) and `fixed-beads` (beads).
    pub step: Option<f64>,
}

impl Default for GameSpec {
    fn default() -> Self {
        GameSpec {
            balancer: "potential".into(),
            adversary: "consensus-n2".into(),
            n: 2,
            k: 2,
            epsilon: rational::q(1, 10),
            m: 256,
            seed: 0,
            segments: 4,
            step: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameResult {
    pub transcript: GameTranscript,
    pub pass: bool,
    pub cuts: usize,
    pub discrepancy: String,
    pub certificate: Option<Certificate>,
}

fn consensus_balancer(spec: &GameSpec, n: usize) -> Result<Box<dyn ConsensusBalancer>> {
    let eps = rational::to_f64(&spec.epsilon);
    Ok(match spec.balancer.as_str() {
        "potential" if spec.k == 2 => Box::new(PotentialBalancer::halving(n, eps)),
        "potential" => Box::new(PotentialBalancer::splitting(n, spec.k, eps)),
        "never-cut" => Box::new(NeverCut),
        "fixed-step" => Box::new(FixedStep::new(spec.step.unwrap_or(eps))),
        other => return domain(format!("unknown consensus balancer {other:?}")),
    })
}

fn necklace_balancer(spec: &GameSpec, counts: &[usize]) -> Result<Box<dyn NecklaceBalancer>> {
    Ok(match spec.balancer.as_str() {
        "potential-necklace" if spec.k == 2 => Box::new(CriticalColorBalancer::halving(counts)),
        "potential-necklace" => Box::new(CriticalColorBalancer::splitting(counts, spec.k)),
        "every-bead" => Box::new(EveryBead::new(counts.len(), spec.k)),
        "never-cut" => Box::new(NeverCut),
        "fixed-beads" => Box::new(FixedBeads::new(
            spec.step.map_or(1, |s| s.max(1.0) as usize),
        )),
        other => return domain(format!("unknown necklace balancer {other:?}")),
    })
}

/// Plays the named balancer against the named adversary.
pub fn run_game(spec: &GameSpec) -> Result<GameResult> {
    if spec.k < 2 {
        return domain("games need at least two agents");
    }
    let consensus: Option<Box<dyn ConsensusAdversary>> = match spec.adversary.as_str() {
        "consensus-n2" => Some(Box::new(ConsensusAdversaryN2::new(&spec.epsilon)?)),
        "consensus-n3" => Some(Box::new(ConsensusAdversaryN3::new(&spec.epsilon)?)),
        "stream" => {
            let eps = rational::to_f64(&spec.epsilon);
            Some(Box::new(StreamAdversary::new(generate_stream(
                spec.seed,
                spec.n,
                spec.segments,
                eps,
                spec.k,
            )?)))
        }
        _ => None,
    };
    if let Some(mut adversary) = consensus {
        let mut balancer = consensus_balancer(spec, adversary.n())?;
        let game = play_consensus(balancer.as_mut(), adversary.as_mut(), spec.k, &spec.epsilon)?;
        return Ok(GameResult {
            pass: game.report.pass,
            cuts: game.transcript.cuts,
            discrepancy: rational::format(&game.report.discrepancy),
            certificate: game.transcript.certificate.clone(),
            transcript: game.transcript,
        });
    }
    let mut adversary: Box<dyn NecklaceAdversary> = match spec.adversary.as_str() {
        "necklace-n2" => Box::new(NecklaceAdversaryN2::new(spec.m)?),
        "necklace-n3" => Box::new(NecklaceAdversaryN3::new(spec.m)?),
        "fixed" => Box::new(FixedNecklace::new(generate_necklace(
            spec.seed,
            &vec![spec.m; spec.n],
        )?)),
        other => return domain(format!("unknown adversary {other:?}")),
    };
    let mut balancer = necklace_balancer(spec, &adversary.color_counts())?;
    let game = play_necklace(balancer.as_mut(), adversary.as_mut(), spec.k)?;
    Ok(GameResult {
        pass: game.report.pass,
        cuts: game.transcript.cuts,
        discrepancy: game.report.max_discrepancy.to_string(),
        certificate: game.transcript.certificate.clone(),
        transcript: game.transcript,
    })
}

/// All proper two-agent splits of a small necklace, as bead owner lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteForce {
    pub min_cuts: usize,
    pub proper: BTreeSet<Vec<usize>>,
}

impl BruteForce {
    pub fn contains(&self, owners: &[usize]) -> bool {
        self.proper.contains(owners)
    }
}

pub const BRUTE_FORCE_MAX_BEADS: usize = 12;

/// Every owner assignment of every bead, hence every cut set.
pub fn brute_force_checker(necklace: &NecklaceInstance) -> Result<BruteForce> {
    let len = necklace.len();
    if len > BRUTE_FORCE_MAX_BEADS {
        return domain(format!(
            "brute force handles at most {BRUTE_FORCE_MAX_BEADS} beads"
        ));
    }
    let counts = necklace.color_counts();
    let mut proper = BTreeSet::new();
    let mut min_cuts = usize::MAX;
    for mask in 0u32..(1 << len) {
        let owners: Vec<usize> = (0..len).map(|b| (mask >> b) as usize & 1).collect();
        let mut held = vec![0usize; counts.len()];
        for (&o, &c) in owners.iter().zip(necklace.beads()) {
            held[c] += usize::from(o == 0);
        }
        let ok = held
            .iter()
            .zip(counts)
            .all(|(&h, &m)| h == m / 2 || h == m.div_ceil(2));
        if ok {
            let cuts = owners.windows(2).filter(|w| w[0] != w[1]).count();
            min_cuts = min_cuts.min(cuts);
            proper.insert(owners);
        }
    }
    Ok(BruteForce { min_cuts, proper })
}

/// One line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: String,
    pub n: usize,
    pub k: usize,
    pub eps_or_m: String,
    pub cuts: usize,
    pub bound: String,
    pub discrepancy: String,
    pub pass: bool,
}

/// One seeded solver run.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Type1 {
        n: usize,
        k: usize,
        seed: u64,
    },
    OnlineHalving {
        n: usize,
        epsilon: Rational,
        seed: u64,
    },
    OnlineSplitting {
        n: usize,
        k: usize,
        epsilon: Rational,
        seed: u64,
    },
    OfflineHalving {
        n: usize,
        epsilon: Rational,
        seed: u64,
    },
    OfflineSplitting {
        n: usize,
        k: usize,
        epsilon: Rational,
        seed: u64,
    },
    OfflineNecklace {
        n: usize,
        m: usize,
        seed: u64,
    },
    OnlineNecklace {
        n: usize,
        k: usize,
        m: usize,
        seed: u64,
    },
    Circular2 {
        k: usize,
        m: usize,
        seed: u64,
    },
}

/// Segments per measure in generated instances.
pub const SEGMENTS: usize = 8;

impl Task {
    pub fn run(&self) -> Result<ReportRow> {
        match self {
            Task::Type1 { n, k, seed } => {
                let inst = generate_instance(*seed, *n, SEGMENTS)?;
                let out = type1_solve(&inst, *k)?;
                let floor = rational::q(1, (n * k) as i64);
                let bound = n * (k - 1);
                let ok = out.allocation.shares.iter().flatten().all(|s| s >= &floor)
                    && out.allocation.num_cuts() <= bound
                    && out.oracle_calls <= 4 * n * n * k;
                Ok(row(
                    "type1",
                    *n,
                    *k,
                    String::new(),
                    out.allocation.num_cuts(),
                    bound.to_string(),
                    rational::format(&out.allocation.min_share()),
                    ok,
                ))
            }
            Task::OnlineHalving { n, epsilon, seed } => {
                let stream = generate_stream(*seed, *n, SEGMENTS, rational::to_f64(epsilon), 2)?;
                let run = run_online_halving(&stream, epsilon)?;
                let bound = online::halving_cut_bound(*n, rational::to_f64(epsilon));
                let ok = run.report.pass && run.psi_monotone && (run.report.cuts as f64) <= bound;
                Ok(row(
                    "online-halving",
                    *n,
                    2,
                    rational::format(epsilon),
                    run.report.cuts,
                    format!("{bound:.0}"),
                    rational::format(&run.report.discrepancy),
                    ok,
                ))
            }
            Task::OnlineSplitting {
                n,
                k,
                epsilon,
                seed,
            } => {
                let stream = generate_stream(*seed, *n, SEGMENTS, rational::to_f64(epsilon), *k)?;
                let run = run_online_splitting(&stream, epsilon)?;
                let bound = online::splitting_cut_bound(*n, *k, rational::to_f64(epsilon));
                let ok = run.report.pass && (run.report.cuts as f64) <= bound;
                Ok(row(
                    "online-splitting",
                    *n,
                    *k,
                    rational::format(epsilon),
                    run.report.cuts,
                    format!("{bound:.0}"),
                    rational::format(&run.report.discrepancy),
                    ok,
                ))
            }
            Task::OfflineHalving { n, epsilon, seed } => {
                let inst = generate_instance(*seed, *n, SEGMENTS)?;
                let run = offline_halving(&inst, epsilon)?;
                let rep = crate::allocation::validate_proper_consensus(&run.allocation, epsilon, 2);
                let bound = offline::halving_cut_bound(*n, epsilon);
                let ok = rep.pass && rep.cuts <= bound && run.stats.floating_within_dims;
                Ok(row(
                    "offline-halving",
                    *n,
                    2,
                    rational::format(epsilon),
                    rep.cuts,
                    bound.to_string(),
                    rational::format(&rep.discrepancy),
                    ok,
                ))
            }
            Task::OfflineSplitting {
                n,
                k,
                epsilon,
                seed,
            } => {
                let inst = generate_instance(*seed, *n, SEGMENTS)?;
                let run = offline_splitting(&inst, epsilon, *k)?;
                let rep =
                    crate::allocation::validate_proper_consensus(&run.allocation, epsilon, *k);
                let bound = offline::splitting_cut_bound(*n, *k, epsilon);
                Ok(row(
                    "offline-splitting",
                    *n,
                    *k,
                    rational::format(epsilon),
                    rep.cuts,
                    bound.to_string(),
                    rational::format(&absolute_discrepancy(&run.allocation).overall),
                    rep.pass && rep.cuts <= bound,
                ))
            }
            Task::OfflineNecklace { n, m, seed } => {
                let nk = generate_necklace(*seed, &vec![*m; *n])?;
                let run = offline_necklace_halving(&nk)?;
                let rep = validate_proper_necklace(&nk, &run.allocation, 2);
                let bound = necklace_cut_bound(*n, *m);
                Ok(row(
                    "offline-necklace",
                    *n,
                    2,
                    m.to_string(),
                    rep.cuts,
                    bound.to_string(),
                    rep.max_discrepancy.to_string(),
                    rep.pass && rep.cuts <= bound,
                ))
            }
            Task::OnlineNecklace { n, k, m, seed } => {
                let nk = generate_necklace(*seed, &vec![*m; *n])?;
                let (run, bound) = if *k == 2 {
                    (
                        run_online_necklace_halving(&nk)?,
                        necklace_halving_cut_bound(*n, *m),
                    )
                } else {
                    (
                        run_online_necklace_splitting(&nk, *k)?,
                        NECKLACE_SPLITTING_CONSTANT * necklace_splitting_cut_scale(*n, *m, *k),
                    )
                };
                let ok = run.report.pass && (run.report.cuts as f64) <= bound;
                Ok(row(
                    "online-necklace",
                    *n,
                    *k,
                    m.to_string(),
                    run.report.cuts,
                    format!("{bound:.0}"),
                    run.report.max_discrepancy.to_string(),
                    ok,
                ))
            }
            Task::Circular2 { k, m, seed } => {
                let nk = generate_necklace(*seed, &[*m, *m])?;
                let split = two_color_circular_split(&nk, *k)?;
                let exact = split
                    .allocation
                    .counts
                    .iter()
                    .all(|row| row.iter().all(|&c| c * k == *m));
                let cuts = split.circle_cuts.len();
                Ok(row(
                    "circular2",
                    2,
                    *k,
                    m.to_string(),
                    cuts,
                    (2 * k - 2).to_string(),
                    split
                        .allocation
                        .color_discrepancy()
                        .into_iter()
                        .max()
                        .unwrap_or(0)
                        .to_string(),
                    exact && cuts <= 2 * k - 2,
                ))
            }
        }
    }
}

/// Constant in front of the k-agent online necklace scale, fixed from runs.
pub const NECKLACE_SPLITTING_CONSTANT: f64 = 7.0;

#[allow(clippy::too_many_arguments)]
fn row(
    algorithm: &str,
    n: usize,
    k: usize,
    eps_or_m: String,
    cuts: usize,
    bound: String,
    discrepancy: String,
    pass: bool,
) -> ReportRow {
    ReportRow {
        algorithm: algorithm.into(),
        n,
        k,
        eps_or_m,
        cuts,
        bound,
        discrepancy,
        pass,
    }
}

/// Runs tasks on the thread pool; rows come back in task order.
pub fn run_batch(tasks: &[Task]) -> Vec<Result<ReportRow>> {
    tasks.par_iter().map(Task::run).collect()
}

/// Task grids by name, one instance per seed and grid point.
pub fn preset(name: &str, seeds: std::ops::Range<u64>) -> Result<Vec<Task>> {
    let eps = |d: i64| rational::q(1, d);
    if !PRESETS.contains(&name) {
        return domain(format!("unknown preset {name:?}"));
    }
    let mut out = Vec::new();
    for seed in seeds {
        match name {
            "type1" => {
                for n in [1, 2, 4, 8, 16, 32] {
                    for k in [1, 2, 4, 8] {
                        out.push(Task::Type1 { n, k, seed });
                    }
                }
            }
            "online-halving" => {
                for n in [4, 16, 64] {
                    for d in [2, 4, 10] {
                        out.push(Task::OnlineHalving {
                            n,
                            epsilon: eps(d),
                            seed,
                        });
                    }
                }
            }
            "online-splitting" => {
                for n in [2, 4] {
                    for k in [3, 4, 8] {
                        for d in [2, 4] {
                            out.push(Task::OnlineSplitting {
                                n,
                                k,
                                epsilon: eps(d),
                                seed,
                            });
                        }
                    }
                }
            }
            "offline-halving" => {
                for n in 1..=32 {
                    for d in [2, 8, 64] {
                        out.push(Task::OfflineHalving {
                            n,
                            epsilon: eps(d),
                            seed,
                        });
                    }
                }
            }
            "offline-necklace" => {
                for n in [1, 2, 4, 8] {
                    for m in [16, 256, 4096] {
                        out.push(Task::OfflineNecklace { n, m, seed });
                    }
                }
            }
            "online-necklace" => {
                for n in [2, 4, 8] {
                    for m in [1_000, 10_000, 100_000] {
                        out.push(Task::OnlineNecklace { n, k: 2, m, seed });
                    }
                }
            }
            "circular2" => {
                for k in 2..=8 {
                    out.push(Task::Circular2 { k, m: 6 * k, seed });
                }
            }
            "smoke" => {
                out.push(Task::Type1 { n: 3, k: 3, seed });
                out.push(Task::OnlineHalving {
                    n: 4,
                    epsilon: eps(4),
                    seed,
                });
                out.push(Task::OnlineSplitting {
                    n: 2,
                    k: 3,
                    epsilon: eps(2),
                    seed,
                });
                out.push(Task::OfflineHalving {
                    n: 4,
                    epsilon: eps(8),
                    seed,
                });
                out.push(Task::OfflineSplitting {
                    n: 2,
                    k: 3,
                    epsilon: eps(2),
                    seed,
                });
                out.push(Task::OfflineNecklace { n: 3, m: 64, seed });
                out.push(Task::OnlineNecklace {
                    n: 3,
                    k: 2,
                    m: 500,
                    seed,
                });
                out.push(Task::Circular2 { k: 3, m: 12, seed });
            }
            other => return domain(format!("unknown preset {other:?}")),
        }
    }
    Ok(out)
}

pub const PRESETS: &[&str] = &[
    "type1",
    "online-halving",
    "online-splitting",
    "offline-halving",
    "offline-necklace",
    "online-necklace",
    "circular2",
    "smoke",
];

pub const CSV_HEADER: &str = "algorithm,n,k,eps_or_m,cuts,bound,discrepancy,pass";

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.algorithm, r.n, r.k, r.eps_or_m, r.cuts, r.bound, r.discrepancy, r.pass
        ));
    }
    out
}

pub fn report_json(rows: &[ReportRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
    s.push('\n');
    s
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn emit_report(rows: &[ReportRow], stem: &std::path::Path) -> Result<()> {
    std::fs::write(stem.with_extension("csv"), report_csv(rows))?;
    std::fs::write(stem.with_extension("json"), report_json(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_examples() {
        // one cut in the middle already halves 1 2 1 2
        let bf = brute_force_checker(&NecklaceInstance::new(vec![0, 1, 0, 1]).unwrap()).unwrap();
        assert_eq!(bf.min_cuts, 1);
        assert!(bf.contains(&[0, 1, 1, 0]));
        let bf = brute_force_checker(&NecklaceInstance::new(vec![0, 0, 1, 1]).unwrap()).unwrap();
        assert_eq!(bf.min_cuts, 2);
        let bf = brute_force_checker(&NecklaceInstance::new(vec![0, 0]).unwrap()).unwrap();
        assert_eq!(bf.min_cuts, 1);
        assert!(bf.contains(&[0, 1]) && bf.contains(&[1, 0]));
        assert!(brute_force_checker(&NecklaceInstance::new(vec![0; 13]).unwrap()).is_err());
    }

    #[test]
    fn reports_are_stable() {
        assert_eq!(report_csv(&[]), format!("{CSV_HEADER}\n"));
        let tasks = preset("smoke", 0..1).unwrap();
        let a: Vec<ReportRow> = run_batch(&tasks).into_iter().map(|r| r.unwrap()).collect();
        let b: Vec<ReportRow> = run_batch(&tasks).into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(report_csv(&a), report_csv(&b));
        assert_eq!(report_csv(&a).lines().count(), tasks.len() + 1);
        assert!(a.iter().all(|r| r.pass), "{a:?}");
    }

    #[test]
    fn games_by_name() {
        let spec = GameSpec {
            epsilon: rational::q(1, 20),
            ..GameSpec::default()
        };
        let res = run_game(&spec).unwrap();
        assert!(res.cuts >= 5);
        let res = run_game(&GameSpec {
            balancer: "never-cut".into(),
            ..spec.clone()
        })
        .unwrap();
        assert!(!res.pass && res.cuts == 0);
        let spec = GameSpec {
            balancer: "potential-necklace".into(),
            adversary: "fixed".into(),
            n: 3,
            m: 200,
            ..GameSpec::default()
        };
        assert!(run_game(&spec).unwrap().pass);
        assert!(run_game(&GameSpec {
            balancer: "every-bead".into(),
            ..GameSpec::default()
        })
        .is_err());
    }
}
