//! The acceptance grid. Each test prints one `criterion N: PASS|FAIL` line
//! to stderr (uncaptured) and then asserts.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use fairsplit::adversary::{
    balanced_binary_sequence, exhaustive_punishment_check, max_prefix_deviation,
    ConsensusAdversaryN2, ConsensusAdversaryN3, NecklaceAdversaryN2,
};
use fairsplit::game::{play_consensus, play_necklace};
use fairsplit::generate::{generate_instance, generate_necklace, generate_stream};
use fairsplit::harness::brute_force_checker;
use fairsplit::offline::{halving_cut_bound, offline_halving};
use fairsplit::offline_necklace::{
    necklace_cut_bound, offline_necklace_halving, two_color_circular_split,
};
use fairsplit::online::{run_online_halving, run_online_splitting, PotentialBalancer};
use fairsplit::online_necklace::{
    necklace_halving_cut_bound, run_online_necklace_halving, CriticalColorBalancer,
};
use fairsplit::rational::{self, q};
use fairsplit::type1::type1_solve;
use fairsplit::{validate_proper_necklace, NecklaceInstance, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

/// Runs one criterion at a time so wall-clock limits are not shared.
fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: usize, failures: &[String], detail: String) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    writeln!(err, "criterion {n}: {status} ({detail})").unwrap();
    for f in failures.iter().take(5) {
        writeln!(err, "  {f}").unwrap();
    }
    assert!(failures.is_empty(), "criterion {n} failed: {failures:?}");
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn log2(x: f64) -> f64 {
    x.log2()
}

#[test]
fn criterion_01_type1_positive() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut runs = 0;
    for n in [1usize, 2, 4, 8, 16, 32] {
        for k in [1usize, 2, 4, 8] {
            for seed in 0..20 {
                let inst = generate_instance(seed, n, 8).unwrap();
                let out = type1_solve(&inst, k).unwrap();
                let floor = q(1, (n * k) as i64);
                runs += 1;
                if out.allocation.shares.iter().flatten().any(|s| s < &floor) {
                    failures.push(format!("n={n} k={k} seed={seed}: a share below 1/(nk)"));
                }
                if out.allocation.num_cuts() > n * (k - 1) {
                    failures.push(format!(
                        "n={n} k={k} seed={seed}: {} cuts",
                        out.allocation.num_cuts()
                    ));
                }
                if out.oracle_calls > 4 * n * n * k {
                    failures.push(format!(
                        "n={n} k={k} seed={seed}: {} oracle calls",
                        out.oracle_calls
                    ));
                }
            }
        }
    }
    let took = start.elapsed();
    if took > Duration::from_secs(5) {
        failures.push(format!("runtime {}", secs(took)));
    }
    report(1, &failures, format!("{runs} runs in {}", secs(took)));
}

#[test]
fn criterion_02_online_halving() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    let mut runs = 0;
    for n in [4usize, 16, 64] {
        for d in [2i64, 4, 10] {
            let eps = q(1, d);
            let e = 1.0 / d as f64;
            let bound = 16.0 * n as f64 * log2(n as f64) / (e * e);
            for seed in 0..50 {
                let stream = generate_stream(seed, n, 8, e, 2).unwrap();
                let run = run_online_halving(&stream, &eps).unwrap();
                runs += 1;
                worst_ratio = worst_ratio.max(run.report.cuts as f64 / bound);
                if !run.report.pass {
                    failures.push(format!(
                        "n={n} eps=1/{d} seed={seed}: discrepancy {}",
                        rational::format(&run.report.discrepancy)
                    ));
                }
                if run.report.cuts as f64 > bound {
                    failures.push(format!(
                        "n={n} eps=1/{d} seed={seed}: {} cuts > {bound}",
                        run.report.cuts
                    ));
                }
                if !run.psi_monotone {
                    failures.push(format!("n={n} eps=1/{d} seed={seed}: potential increased"));
                }
            }
        }
    }
    let took = start.elapsed();
    if took > Duration::from_secs(30) {
        failures.push(format!("runtime {}", secs(took)));
    }
    report(
        2,
        &failures,
        format!(
            "{runs} runs in {}, max cuts/bound {worst_ratio:.3}",
            secs(took)
        ),
    );
}

#[test]
fn criterion_03_online_splitting() {
    let _guard = serial();
    let mut failures = Vec::new();
    let mut runs = 0;
    for n in [2usize, 4] {
        for k in [3usize, 4, 8] {
            for d in [2i64, 4] {
                let eps = q(1, d);
                let e = 1.0 / d as f64;
                let bound = 200.0 * (k * n) as f64 * log2((n * k) as f64) / (e * e);
                let target = q(1, k as i64);
                let allowed = &eps / rational::int(k as i64);
                for seed in 0..10 {
                    let stream = generate_stream(seed, n, 8, e, k).unwrap();
                    let run = run_online_splitting(&stream, &eps).unwrap();
                    runs += 1;
                    let worst = run
                        .allocation
                        .shares
                        .iter()
                        .flatten()
                        .map(|s| rational::abs(&(s - &target)))
                        .max()
                        .unwrap();
                    if worst > allowed {
                        failures.push(format!(
                            "n={n} k={k} eps=1/{d} seed={seed}: deviation {}",
                            rational::format(&worst)
                        ));
                    }
                    if run.report.cuts as f64 > bound {
                        failures.push(format!(
                            "n={n} k={k} eps=1/{d} seed={seed}: {} cuts",
                            run.report.cuts
                        ));
                    }
                }
            }
        }
    }
    report(3, &failures, format!("{runs} runs"));
}

#[test]
fn criterion_04_offline_halving() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut runs = 0;
    for n in 1usize..=32 {
        for d in [2i64, 8, 64] {
            let eps = q(1, d);
            let inst = generate_instance(n as u64 * 1000 + d as u64, n, 8).unwrap();
            let run = offline_halving(&inst, &eps).unwrap();
            runs += 1;
            let lo = q(1, 2) - &eps / rational::int(2);
            let hi = q(1, 2) + &eps / rational::int(2);
            let tag = format!("n={n} eps=1/{d}");
            if !run.allocation.shares_consistent(&inst) {
                failures.push(format!("{tag}: shares do not match the measures"));
            }
            if run
                .allocation
                .shares
                .iter()
                .flatten()
                .any(|s| s < &lo || s > &hi)
            {
                failures.push(format!("{tag}: a share outside [1/2 - eps/2, 1/2 + eps/2]"));
            }
            if run.allocation.num_cuts() > halving_cut_bound(n, &eps) {
                failures.push(format!("{tag}: {} cuts", run.allocation.num_cuts()));
            }
            if !run.stats.floating_within_dims {
                failures.push(format!(
                    "{tag}: floating count exceeded the active dimension"
                ));
            }
            if d == 2 {
                let quarter = q(1, 4);
                if run.allocation.shares.iter().flatten().any(|s| s < &quarter)
                    || run.allocation.num_cuts() > 3 * n
                {
                    failures.push(format!("{tag}: quarter guarantee violated"));
                }
            }
        }
    }
    report(
        4,
        &failures,
        format!("{runs} runs in {}", secs(start.elapsed())),
    );
}

/// Every bead sequence of length `len` over `colors` colors that uses every
/// color.
fn all_necklaces(len: usize, colors: usize) -> Vec<NecklaceInstance> {
    let total = colors.pow(len as u32);
    (0..total)
        .filter_map(|mut code| {
            let beads: Vec<usize> = (0..len)
                .map(|_| {
                    let c = code % colors;
                    code /= colors;
                    c
                })
                .collect();
            NecklaceInstance::with_colors(beads, colors).ok()
        })
        .collect()
}

#[test]
fn criterion_05_offline_necklace() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut runs = 0;
    for n in [1usize, 2, 3, 5, 8] {
        for m in [2usize, 17, 256, 4096] {
            let nk = generate_necklace((n * 10_000 + m) as u64, &vec![m; n]).unwrap();
            let run = offline_necklace_halving(&nk).unwrap();
            runs += 1;
            let rep = validate_proper_necklace(&nk, &run.allocation, 2);
            if !rep.pass || rep.max_discrepancy > 1 {
                failures.push(format!("n={n} m={m}: not proper {:?}", rep.violations));
            }
            if rep.cuts > necklace_cut_bound(n, m) {
                failures.push(format!(
                    "n={n} m={m}: {} cuts > {}",
                    rep.cuts,
                    necklace_cut_bound(n, m)
                ));
            }
            if run.allocation.cuts.iter().any(|&c| c == 0 || c >= nk.len()) {
                failures.push(format!("n={n} m={m}: cut outside the bead boundaries"));
            }
        }
    }
    // exhaustive over short necklaces, sampled beyond
    let mut small: Vec<NecklaceInstance> = Vec::new();
    for len in 1..=8 {
        for colors in 1..=3 {
            small.extend(all_necklaces(len, colors));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let len = rng.gen_range(9..=12);
        let colors = rng.gen_range(1..=4);
        let beads: Vec<usize> = (0..len).map(|_| rng.gen_range(0..colors)).collect();
        if let Ok(nk) = NecklaceInstance::with_colors(beads, colors) {
            small.push(nk);
        }
    }
    let checked = small.len();
    for nk in small {
        let run = offline_necklace_halving(&nk).unwrap();
        let oracle = brute_force_checker(&nk).unwrap();
        if !oracle.contains(&run.allocation.owners(nk.len())) {
            failures.push(format!("{:?}: output not in the proper set", nk.beads()));
        }
    }
    report(
        5,
        &failures,
        format!(
            "{runs} random + {checked} brute-forced necklaces in {}",
            secs(start.elapsed())
        ),
    );
}

#[test]
fn criterion_06_online_necklace() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for n in [2usize, 4, 8] {
        for m in [1_000usize, 10_000, 100_000] {
            let nk = generate_necklace((n * 7 + m) as u64, &vec![m; n]).unwrap();
            let run = run_online_necklace_halving(&nk).unwrap();
            let bound = necklace_halving_cut_bound(n, m);
            worst_ratio = worst_ratio.max(run.report.cuts as f64 / bound);
            if !run.report.pass {
                failures.push(format!(
                    "n={n} m={m}: not proper {:?}",
                    run.report.violations
                ));
            }
            if run.report.cuts as f64 > bound {
                failures.push(format!(
                    "n={n} m={m}: {} cuts > {bound:.0}",
                    run.report.cuts
                ));
            }
        }
    }
    let took = start.elapsed();
    if took > Duration::from_secs(60) {
        failures.push(format!("runtime {}", secs(took)));
    }
    report(
        6,
        &failures,
        format!("9 runs in {}, max cuts/bound {worst_ratio:.3}", secs(took)),
    );
}

#[test]
fn criterion_07_adversary_games() {
    let _guard = serial();
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for (d, need) in [(10i64, 2usize), (20, 8)] {
        let eps = q(1, d);
        let mut adv = ConsensusAdversaryN3::new(&eps).unwrap();
        let mut bal = PotentialBalancer::halving(3, 1.0 / d as f64);
        let game = play_consensus(&mut bal, &mut adv, 2, &eps).unwrap();
        let cert = game.transcript.certificate.clone().unwrap();
        let want = (1.0 / (56.0 * (1.0 / d as f64).powi(2))).ceil() as usize;
        assert_eq!(want, need);
        notes.push(format!("n3 eps=1/{d}: {} forcing cuts", cert.forcing_cuts));
        if adv.punished() {
            failures.push(format!("n3 eps=1/{d}: balancer was punished"));
        }
        if cert.forcing_cuts < want {
            failures.push(format!(
                "n3 eps=1/{d}: {} forcing cuts < {want}",
                cert.forcing_cuts
            ));
        }
        if !cert.pass {
            failures.push(format!("n3 eps=1/{d}: certificate failed"));
        }
    }
    let eps = q(1, 20);
    let mut adv = ConsensusAdversaryN2::new(&eps).unwrap();
    let game = play_consensus(&mut PotentialBalancer::halving(2, 0.05), &mut adv, 2, &eps).unwrap();
    notes.push(format!("n2: {} cuts", game.transcript.cuts));
    if game.transcript.cuts < 5 || !game.transcript.certificate.unwrap().pass {
        failures.push(format!("n2: {} cuts", game.transcript.cuts));
    }
    let mut adv = NecklaceAdversaryN2::new(256).unwrap();
    let game = play_necklace(
        &mut CriticalColorBalancer::halving(&[256, 256]),
        &mut adv,
        2,
    )
    .unwrap();
    notes.push(format!("necklace n2: {} cuts", game.transcript.cuts));
    if game.transcript.cuts < 8 || !game.transcript.certificate.unwrap().pass {
        failures.push(format!("necklace n2: {} cuts", game.transcript.cuts));
    }
    report(7, &failures, notes.join(", "));
}

#[test]
fn criterion_08_balanced_sequences() {
    let _guard = serial();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = Rational::from_integer(0.into());
    for _ in 0..1000 {
        let den = rng.gen_range(1..=1_000_000i64);
        let gamma = q(rng.gen_range(0..=den), den);
        let bits = balanced_binary_sequence(&gamma, 10_000);
        let dev = max_prefix_deviation(&bits, &gamma);
        if dev >= rational::one() {
            failures.push(format!(
                "gamma {}: deviation {}",
                rational::format(&gamma),
                rational::format(&dev)
            ));
        }
        worst = worst.max(dev);
    }
    report(
        8,
        &failures,
        format!(
            "1000 gammas, worst deviation {:.6}",
            rational::to_f64(&worst)
        ),
    );
}

#[test]
fn criterion_09_circular_two_color() {
    let _guard = serial();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut runs = 0;
    let mut tight = 0;
    for k in 2usize..=8 {
        for i in 0..20u64 {
            let m1 = k * rng.gen_range(1..=6);
            let m2 = k * rng.gen_range(1..=6);
            let nk = generate_necklace(k as u64 * 100 + i, &[m1, m2]).unwrap();
            let split = two_color_circular_split(&nk, k).unwrap();
            runs += 1;
            let exact = split
                .allocation
                .counts
                .iter()
                .all(|row| row[0] * k == m1 && row[1] * k == m2);
            if !exact {
                failures.push(format!("k={k} {:?}: split not exact", nk.beads()));
            }
            if split.circle_cuts.len() == 2 * k - 2 {
                tight += 1;
            }
            if split.circle_cuts.len() > 2 * k - 2 {
                failures.push(format!(
                    "k={k} {:?}: {} cuts",
                    nk.beads(),
                    split.circle_cuts.len()
                ));
            }
        }
    }
    report(
        9,
        &failures,
        format!("{runs} necklaces, {tight} with exactly 2k-2 distinct cut points, none above"),
    );
}

#[test]
fn criterion_10_punishment() {
    let _guard = serial();
    let mut failures = Vec::new();
    let eps = q(1, 10);
    let x = &eps * rational::int(2);
    for mu in [q(1, 10), q(1, 2), q(9, 10), q(99, 100)] {
        if let Some((lengths, signs)) = exhaustive_punishment_check(&x, &mu, &eps, 11, 10) {
            failures.push(format!(
                "mu={}: escape with {} pieces, signs {signs:?}",
                rational::format(&mu),
                lengths.len()
            ));
        }
    }
    report(
        10,
        &failures,
        "tail grid of 11 pieces, up to 10 cuts, 4 values of mu".into(),
    );
}
