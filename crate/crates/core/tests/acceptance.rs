//! Acceptance suite. Runs every check, prints one PASS/FAIL line per check and
//! exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svcrank::cli::evaluate;
use svcrank::dataio::{generate_synthetic, Dataset, SyntheticParams};
use svcrank::ranking::{
    assemble_ranking, correspondence_value, count_pairs, predict, preference_matrix, priority_values, ConsumerId,
    ObservationSet, QualityScore, RankedList, RankingContext, ServiceId,
};
use svcrank::sim::{self, EventDetail, EventKind, FailureSpec, JobSpec, SimConfig, SubCloudSpec, TraceEvent};
use svcrank::{JobId, SubCloudId};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn main() {
    let checks: [Check; 9] = [
        ("pair counts match brute force over all permutation pairs, n <= 6", exhaustive_pair_counts),
        ("identical orderings give cv 1, reversed give -1, n in 2..=8", cv_endpoints),
        ("preference matrix algebra and shift invariance", preference_algebra),
        ("noiseless full observation recovers the truth exactly", noiseless_recovery),
        ("noise lowers mean cv", noise_monotonicity),
        ("non-positive correspondents never influence the ranking", filter_soundness),
        ("simulator capacity, rollback loss and work conservation", simulator_safety),
        ("rank, simulate and gen are byte-for-byte reproducible", determinism),
        ("hand-traced checkpoint and failure scenario", hand_trace),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name} ({detail}; {secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name} ({detail}; {secs:.2}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn sid(s: &str) -> ServiceId {
    ServiceId::new(s).unwrap()
}

fn cid(s: &str) -> ConsumerId {
    ConsumerId::new(s).unwrap()
}

fn service_names(n: usize) -> Vec<ServiceId> {
    (0..n).map(|i| sid(&format!("s{i}"))).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            prefix.push(x);
            go(prefix, rest, out);
            prefix.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

/// Brute-force pair classification. `pos_a[s]` is the position of service `s`.
fn brute_pairs(pos_a: &[usize], pos_b: &[usize]) -> (u64, u64) {
    let (mut consistent, mut variant) = (0, 0);
    for i in 0..pos_a.len() {
        for j in i + 1..pos_a.len() {
            let a = pos_a[i] < pos_a[j];
            let b = pos_b[i] < pos_b[j];
            if a == b {
                consistent += 1;
            } else {
                variant += 1;
            }
        }
    }
    (consistent, variant)
}

fn positions(perm: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; perm.len()];
    for (p, &s) in perm.iter().enumerate() {
        pos[s] = p;
    }
    pos
}

fn observations_for(consumer: &str, services: &[ServiceId], perm: &[usize]) -> ObservationSet {
    let samples = perm.iter().enumerate().map(|(p, &s)| (services[s].clone(), (p + 1) as f64));
    ObservationSet::with_samples(cid(consumer), samples).unwrap()
}

fn exhaustive_pair_counts() -> Outcome {
    let start = Instant::now();
    let mut compared = 0u64;
    for n in 1..=6 {
        let services = service_names(n);
        let common: BTreeSet<ServiceId> = services.iter().cloned().collect();
        let perms = permutations(n);
        let lists: Vec<RankedList> = perms
            .iter()
            .map(|p| RankedList::from_ordering(p.iter().map(|&s| services[s].clone()).collect()).unwrap())
            .collect();
        let pos: Vec<Vec<usize>> = perms.iter().map(|p| positions(p)).collect();
        let xs: Vec<ObservationSet> = perms.iter().map(|p| observations_for("x", &services, p)).collect();
        let ys: Vec<ObservationSet> = perms.iter().map(|p| observations_for("y", &services, p)).collect();
        for a in 0..perms.len() {
            for b in 0..perms.len() {
                let (consistent, variant) = brute_pairs(&pos[a], &pos[b]);
                match count_pairs(&lists[a], &lists[b], &common) {
                    Ok(counts) => ensure!(
                        n >= 2 && (counts.consistent, counts.variant) == (consistent, variant),
                        "n={n} {:?} vs {:?}: got {counts:?}, expected ({consistent}, {variant})",
                        perms[a],
                        perms[b]
                    ),
                    Err(e) => ensure!(n < 2, "n={n}: {e}"),
                }
                let cv = correspondence_value(&xs[a], &ys[b]);
                let expected = if n < 2 { 0.0 } else { (consistent as f64 - variant as f64) / (n * (n - 1) / 2) as f64 };
                ensure!(
                    cv.cv == expected && cv.n == n && (cv.consistent, cv.variant) == (consistent, variant),
                    "n={n} {:?} vs {:?}: cv {cv:?}, expected {expected}",
                    perms[a],
                    perms[b]
                );
                compared += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}, limit 10s");
    Ok(format!("{compared} ordered pairs"))
}

fn cv_endpoints() -> Outcome {
    for n in 2..=8 {
        let services = service_names(n);
        let forward: Vec<usize> = (0..n).collect();
        let backward: Vec<usize> = (0..n).rev().collect();
        let x = observations_for("x", &services, &forward);
        let same = correspondence_value(&x, &observations_for("y", &services, &forward));
        let rev = correspondence_value(&x, &observations_for("y", &services, &backward));
        ensure!(same.cv == 1.0, "n={n}: identical gave {}", same.cv);
        ensure!(rev.cv == -1.0, "n={n}: reversed gave {}", rev.cv);
    }
    Ok("7 sizes".into())
}

fn scores_from(values: &[f64]) -> BTreeMap<ServiceId, QualityScore> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let s = sid(&format!("s{i:02}"));
            (s.clone(), QualityScore::new(s, v))
        })
        .collect()
}

fn ranking_for(values: &[f64], implicit: &BTreeSet<ServiceId>) -> Result<(RankedList, Vec<u64>), String> {
    let m = preference_matrix(&scores_from(values)).map_err(|e| e.to_string())?;
    let bits = (0..m.len()).flat_map(|i| m.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect();
    let pv = priority_values(&m);
    Ok((assemble_ranking(&pv, implicit).map_err(|e| e.to_string())?, bits))
}

fn preference_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let trials = 1500;
    for trial in 0..trials {
        let n = rng.random_range(1..=25);
        // Quarter-integer scores with ties; shifting them by an integer is exact.
        let dyadic = trial % 2 == 0;
        let values: Vec<f64> = (0..n)
            .map(|_| if dyadic { f64::from(rng.random_range(-40..=40)) / 4.0 } else { rng.random_range(-50.0..50.0) })
            .collect();
        let scores = scores_from(&values);
        let m = preference_matrix(&scores).map_err(|e| e.to_string())?;
        let ids = m.services().to_vec();
        for x in &ids {
            ensure!(m.get(x, x) == Some(0.0), "trial {trial}: diagonal {x} is {:?}", m.get(x, x));
            for y in &ids {
                let (a, b) = (m.get(x, y).unwrap(), m.get(y, x).unwrap());
                ensure!(a == -b, "trial {trial}: p({x},{y})={a} but p({y},{x})={b}");
            }
        }
        let pv = priority_values(&m);
        ensure!(pv.total().abs() <= 1e-9, "trial {trial}: priority values sum to {}", pv.total());

        let implicit: BTreeSet<ServiceId> = ids.iter().filter(|_| rng.random_bool(0.3)).cloned().collect();
        let (base, base_bits) = ranking_for(&values, &implicit)?;
        let shift = if dyadic { f64::from(rng.random_range(-1000..=1000)) } else { rng.random_range(-100.0..100.0) };
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let (moved, moved_bits) = ranking_for(&shifted, &implicit)?;
        ensure!(base == moved, "trial {trial}: shift {shift} changed {:?} into {:?}", base.ordering(), moved.ordering());
        if dyadic {
            ensure!(base_bits == moved_bits, "trial {trial}: shift {shift} changed the matrix");
        }
    }
    Ok(format!("{trials} score vectors"))
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_svcrank")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("svcrank {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn noiseless_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = 0;
    for n in [5, 10, 20] {
        for seed in 1..=5 {
            let csv = dir.path().join(format!("gen_{n}_{seed}.csv"));
            let (seed_s, n_s) = (seed.to_string(), n.to_string());
            run_cli(&[
                "gen", "--seed", &seed_s, "--services", &n_s, "--consumers", "8", "--noise", "0", "--observe", "1", "--output",
                path_str(&csv),
            ])?;
            let report = run_cli(&["eval", "--input", path_str(&csv)])?;
            let mean = report
                .lines()
                .find_map(|l| l.strip_prefix("mean_cv\t"))
                .ok_or_else(|| format!("no mean_cv line in {report:?}"))?;
            let mean: f64 = mean.parse().map_err(|e| format!("{mean}: {e}"))?;
            ensure!(mean == 1.0, "seed {seed}, {n} services: mean cv {mean}");
            runs += 1;
        }
    }
    Ok(format!("{runs} datasets"))
}

fn noise_monotonicity() -> Outcome {
    let mean_over_seeds = |noise: f64| -> Result<f64, String> {
        let mut total = 0.0;
        for seed in 0..20 {
            let d = generate_synthetic(&SyntheticParams::new(seed, 10, 10, noise)).map_err(|e| e.to_string())?;
            total += evaluate(&d, 0.3, seed).map_err(|e| e.to_string())?.mean_cv;
        }
        Ok(total / 20.0)
    };
    let clean = mean_over_seeds(0.0)?;
    let noisy = mean_over_seeds(0.3)?;
    ensure!(noisy < clean, "noise 0.3 gave {noisy}, noise 0 gave {clean}");
    Ok(format!("mean cv {clean:.4} at noise 0, {noisy:.4} at noise 0.3"))
}

fn random_dataset(rng: &mut ChaCha8Rng, index: u64) -> Dataset {
    if index.is_multiple_of(2) {
        let params = SyntheticParams::new(rng.random(), rng.random_range(3..=12), rng.random_range(3..=12), rng.random_range(0.0..0.49))
            .with_observe_prob(rng.random_range(0.3..=1.0));
        return generate_synthetic(&params).unwrap();
    }
    let services = service_names(rng.random_range(3..=10));
    let consumers = (0..rng.random_range(3..=10))
        .map(|c| {
            let mut o = ObservationSet::new(cid(&format!("u{c}")));
            for s in &services {
                if rng.random_bool(0.7) {
                    o.insert(s.clone(), f64::from(rng.random_range(1..=50u32))).unwrap();
                }
            }
            o
        })
        .filter(|o| !o.is_empty())
        .collect();
    Dataset::from_observations(consumers).unwrap()
}

fn filter_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1);
    let mut deletions = 0;
    for index in 0..100 {
        let d = random_dataset(&mut rng, index);
        let active = d.consumers().choose(&mut rng).unwrap().clone();
        let implicit: BTreeSet<ServiceId> = active.services().into_iter().filter(|_| rng.random_bool(0.5)).collect();
        let history: Vec<ObservationSet> = d.consumers().iter().filter(|c| c.consumer() != active.consumer()).cloned().collect();
        let run = |history: Vec<ObservationSet>| -> Result<(Vec<ServiceId>, Vec<Option<u64>>), String> {
            let ctx = RankingContext::new(active.clone(), history, implicit.clone()).map_err(|e| e.to_string())?;
            let p = predict(&ctx, d.services()).map_err(|e| e.to_string())?;
            let bits = p.ranking.iter().map(|s| p.priorities.get(s).map(f64::to_bits)).collect();
            Ok((p.ranking.into_ordering(), bits))
        };
        let full = run(history.clone())?;
        let dropped: Vec<usize> =
            (0..history.len()).filter(|&i| correspondence_value(&active, &history[i]).cv <= 0.0).collect();
        for &i in &dropped {
            let mut fewer = history.clone();
            fewer.remove(i);
            ensure!(run(fewer)? == full, "dataset {index}: removing {} changed the output", history[i].consumer());
            deletions += 1;
        }
        let kept = history.iter().enumerate().filter(|(i, _)| !dropped.contains(i)).map(|(_, c)| c.clone()).collect();
        ensure!(run(kept)? == full, "dataset {index}: removing all non-positive consumers changed the output");
    }
    ensure!(deletions > 0, "no dataset had a non-positive consumer");
    Ok(format!("100 datasets, {deletions} single deletions"))
}

fn random_config(rng: &mut ChaCha8Rng) -> SimConfig {
    let subclouds: Vec<SubCloudSpec> = (0..rng.random_range(1..=4))
        .map(|i| SubCloudSpec { id: SubCloudId::new(format!("c{i}")).unwrap(), capacity: rng.random_range(1..=8) })
        .collect();
    let max_cap = subclouds.iter().map(|s| s.capacity).max().unwrap();
    let jobs = (0..rng.random_range(1..=15))
        .map(|i| JobSpec {
            id: JobId::new(format!("j{i:02}")).unwrap(),
            consumer: cid(&format!("u{}", rng.random_range(0..4))),
            service: sid(&format!("s{}", rng.random_range(0..5))),
            arrival_time: rng.random_range(0..=5000),
            total_work: rng.random_range(100..=8000),
            demand: rng.random_range(1..=max_cap),
        })
        .collect();
    let failures = (0..rng.random_range(0..=3))
        .map(|_| FailureSpec { subcloud: subclouds.choose(rng).unwrap().id.clone(), time: rng.random_range(0..=15000) })
        .collect();
    SimConfig {
        seed: rng.random(),
        checkpoint_interval: rng.random_range(200..=2000),
        checkpoint_overhead: rng.random_range(0..=150),
        subclouds,
        jobs,
        failures,
        migration_policy_threshold: if rng.random_bool(0.5) { rng.random_range(0.3..1.0) } else { 1.0 },
    }
}

/// Rebuilds per-sub-cloud allocation from the event log alone.
fn replay_capacity(config: &SimConfig, events: &[TraceEvent]) -> Result<(), String> {
    let demand: BTreeMap<&JobId, u32> = config.jobs.iter().map(|j| (&j.id, j.demand)).collect();
    let capacity: BTreeMap<&SubCloudId, u32> = config.subclouds.iter().map(|s| (&s.id, s.capacity)).collect();
    let mut used: BTreeMap<SubCloudId, u32> = BTreeMap::new();
    let mut running: BTreeMap<JobId, SubCloudId> = BTreeMap::new();
    for e in events {
        let (Some(job), Some(sc)) = (&e.detail.job, &e.detail.subcloud) else {
            continue;
        };
        let d = demand[job];
        match e.kind {
            EventKind::Start => {
                let u = used.entry(sc.clone()).or_default();
                *u += d;
                ensure!(*u <= capacity[sc], "t={}: {sc} holds {u} of {}", e.t, capacity[sc]);
                running.insert(job.clone(), sc.clone());
            }
            EventKind::Complete | EventKind::Rollback | EventKind::Migrate => {
                if let Some(at) = running.remove(job) {
                    ensure!(&at == sc, "t={}: {job} left {sc} but ran on {at}", e.t);
                    *used.get_mut(sc).unwrap() -= d;
                }
            }
            _ => {}
        }
    }
    ensure!(running.is_empty(), "jobs still running at the end: {running:?}");
    Ok(())
}

fn simulator_safety() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x51);
    let (mut rollbacks, mut conserved) = (0, 0);
    for i in 0..200 {
        let config = random_config(&mut rng);
        let trace = sim::run(&config).map_err(|e| format!("config {i}: {e}"))?;
        replay_capacity(&config, &trace.events).map_err(|e| format!("config {i}: {e}"))?;
        ensure!(trace.observations.len() == config.jobs.len(), "config {i}: not every job finished");

        let zero = SimConfig { checkpoint_overhead: 0, ..config.clone() };
        let trace = sim::run(&zero).map_err(|e| format!("config {i} without overhead: {e}"))?;
        replay_capacity(&zero, &trace.events).map_err(|e| format!("config {i} without overhead: {e}"))?;
        for e in trace.events.iter().filter(|e| e.kind == EventKind::Rollback) {
            let lost = e.detail.lost.unwrap();
            ensure!(lost < zero.checkpoint_interval, "config {i}: rollback at t={} lost {lost}", e.t);
            rollbacks += 1;
        }

        let calm = SimConfig { failures: Vec::new(), migration_policy_threshold: 1.0, ..config.clone() };
        let trace = sim::run(&calm).map_err(|e| format!("config {i} without failures: {e}"))?;
        replay_capacity(&calm, &trace.events).map_err(|e| format!("config {i} without failures: {e}"))?;
        for job in &calm.jobs {
            let mine = |k: EventKind| trace.events.iter().filter(move |e| e.kind == k && e.detail.job.as_ref() == Some(&job.id));
            let first_start = mine(EventKind::Start).next().ok_or_else(|| format!("config {i}: {} never started", job.id))?.t;
            let done = mine(EventKind::Complete).next().ok_or_else(|| format!("config {i}: {} never completed", job.id))?.t;
            let checkpoints = mine(EventKind::Checkpoint).count() as u64;
            let expected = (first_start - job.arrival_time) + job.total_work + checkpoints * calm.checkpoint_overhead;
            ensure!(
                done - job.arrival_time == expected,
                "config {i}: {} responded in {} but wait + work + overhead is {expected}",
                job.id,
                done - job.arrival_time
            );
            conserved += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}, limit 60s");
    Ok(format!("200 configs, {rollbacks} rollbacks, {conserved} jobs conserved"))
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let config = serde_json::to_string_pretty(&random_config(&mut ChaCha8Rng::seed_from_u64(7))).unwrap();
    let mut produced: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for dir in &dirs {
        let p = |name: &str| dir.path().join(name);
        std::fs::write(p("sim.json"), &config).map_err(|e| e.to_string())?;
        let mut stdout = run_cli(&[
            "gen", "--seed", "42", "--services", "12", "--consumers", "9", "--noise", "0.2", "--output",
            path_str(&p("obs.csv")),
        ])?
        .replace(path_str(dir.path()), "<dir>");
        stdout += &run_cli(&["rank", "--input", path_str(&p("obs.csv")), "--consumer", "user3", "--output", path_str(&p("rank.json"))])?;
        stdout += &run_cli(&[
            "simulate", "--config", path_str(&p("sim.json")), "--trace", path_str(&p("trace.json")), "--observations",
            path_str(&p("sim.csv")),
        ])?;
        let mut files = vec![("stdout".to_string(), stdout.into_bytes())];
        for name in ["obs.csv", "obs.truth.json", "rank.json", "trace.json", "sim.csv"] {
            files.push((name.to_string(), std::fs::read(p(name)).map_err(|e| format!("{name}: {e}"))?));
        }
        produced.push(files);
    }
    for (a, b) in produced[0].iter().zip(&produced[1]) {
        ensure!(a == b, "{} differs between runs", a.0);
    }
    Ok(format!("{} outputs compared", produced[0].len()))
}

fn hand_trace() -> Outcome {
    let config: SimConfig = serde_json::from_str(
        r#"{
            "checkpoint_interval": 2000,
            "checkpoint_overhead": 100,
            "subclouds": [{"id": "c1", "capacity": 1}],
            "jobs": [{"id": "j1", "consumer": "u1", "service": "s1", "arrival_time": 0, "total_work": 10000, "demand": 1}],
            "failures": [{"subcloud": "c1", "time": 5000}]
        }"#,
    )
    .map_err(|e| e.to_string())?;
    let job = |t, kind, progress, lost| TraceEvent {
        t,
        kind,
        detail: EventDetail {
            job: Some(JobId::new("j1").unwrap()),
            subcloud: Some(SubCloudId::new("c1").unwrap()),
            progress: Some(progress),
            lost,
            ..Default::default()
        },
    };
    // Checkpoints at progress 2000/4000/6000/8000; each adds 100 ms of stall.
    // The failure at 5000 finds progress 4800 (4000 + 800 after the stall
    // ending at 4200) and restores the 4000 snapshot. Restarting at 5000 the
    // job needs 6000 ms of work plus two stalls: done at 11200.
    let expected = vec![
        job(0, EventKind::Arrive, 0, None),
        job(0, EventKind::Start, 0, None),
        job(2000, EventKind::Checkpoint, 2000, None),
        job(4100, EventKind::Checkpoint, 4000, None),
        TraceEvent {
            t: 5000,
            kind: EventKind::Failure,
            detail: EventDetail { subcloud: Some(SubCloudId::new("c1").unwrap()), ..Default::default() },
        },
        job(5000, EventKind::Rollback, 4000, Some(800)),
        job(5000, EventKind::Start, 4000, None),
        job(7000, EventKind::Checkpoint, 6000, None),
        job(9100, EventKind::Checkpoint, 8000, None),
        job(11200, EventKind::Complete, 10000, None),
    ];
    let trace = sim::run(&config).map_err(|e| e.to_string())?;
    for (i, (got, want)) in trace.events.iter().zip(&expected).enumerate() {
        ensure!(got == want, "event {i}: got {got:?}, expected {want:?}");
    }
    ensure!(trace.events.len() == expected.len(), "{} events, expected {}", trace.events.len(), expected.len());
    let response = trace.observations.first().map(|o| o.response_time_ms);
    ensure!(response == Some(11200), "response time {response:?}, expected 11200");

    let calm = SimConfig { failures: Vec::new(), ..config };
    let response = sim::run(&calm).map_err(|e| e.to_string())?.observations[0].response_time_ms;
    ensure!(response == 10400, "failure-free response {response}, expected 10400");
    Ok("10 events, response 11200 ms".into())
}
