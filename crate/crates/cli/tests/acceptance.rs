//! Acceptance criteria 1-9. Runs as a plain binary so the verdict lines are
//! always printed; exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use masim_cases::cbf::{self, epsilon_term, solve_min_norm, InputBox, LinearConstraint};
use masim_cases::mpc::{self, intruder_branch_input, DubinsIntent};
use masim_cases::tasking;
use masim_cli::{Case, ScenarioFile};
use masim_core::agent::{
    Agent, AsyncConfig, AsyncCoordinator, EventBus, EventFilter, Phase, TraceLog, TraceMeta,
};
use masim_core::env::{InputBound, World2D};
use masim_core::logic::{estimate_risk, ltl_satisfies, parse, Formula, Interval, RiskQuery, Trace, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Verdict = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Verdict);

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

fn load(name: &str) -> ScenarioFile {
    ScenarioFile::load(&config(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Verdict {
    let file = load("usecase1");
    let Ok(Case::Encounter(cfg)) = file.case() else { return Err("usecase1 is not an encounter".into()) };
    let start = Instant::now();
    let run = mpc::closed_loop(cfg, file.seed).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let r = &run.report;
    let rho = cfg.mpc.rho;
    let below = r.separations.iter().filter(|s| s.separation < rho).count();
    let min = r.min_separation.unwrap_or(f64::NAN);
    let t_max = cfg.t_max;
    let arrived = r.ownship_arrival_step.is_some_and(|s| s <= t_max) && r.intruder_arrival_step.is_some_and(|s| s <= t_max);
    let expected = 3usize.pow(cfg.mpc.robust_horizon as u32);
    check(
        below == 0
            && !r.separations.is_empty()
            && arrived
            && elapsed < Duration::from_secs(60)
            && r.scenario_count == expected
            && cfg.mpc.horizon == 8
            && cfg.mpc.robust_horizon == 2,
        format!(
            "min separation {min:.3} vs rho {rho} over {} samples ({below} below), arrivals ownship {:?} intruder {:?} (t_max {t_max}), scenarios {} = 3^{}, runtime {:.2?}",
            r.separations.len(),
            r.ownship_arrival_step,
            r.intruder_arrival_step,
            r.scenario_count,
            cfg.mpc.robust_horizon,
            elapsed
        ),
    )
}

fn criterion_2() -> Verdict {
    let cfg = mpc::EncounterConfig::crossing();
    let intr = cfg.intruder.clone().expect("crossing has an intruder");
    let m = &cfg.mpc;
    let intent = DubinsIntent::new(intr.start, intr.target, m.intruder_speed, m.intruder_turn, m.te).map_err(|e| e.to_string())?;
    let n_r = 2usize;
    let t = 3.0;
    let mut mismatches = 0;
    let mut table = Vec::new();
    for j in 1..=9usize {
        let mut row = Vec::new();
        for k in 0..n_r {
            let block = 3usize.pow((n_r - k - 1) as u32);
            let c = j.div_ceil(block) % 3;
            let expected = match c {
                0 => m.intruder_turn.hi,
                1 => m.intruder_turn.lo,
                _ => intent.input(t + k as f64 * m.te),
            };
            let got = intruder_branch_input(j, k, n_r, m.intruder_turn, &intent, t).map_err(|e| e.to_string())?;
            if got != expected {
                mismatches += 1;
            }
            row.push(c);
        }
        table.push(row);
    }
    let literal = [[1, 1], [1, 2], [1, 0], [2, 1], [2, 2], [2, 0], [0, 1], [0, 2], [0, 0]];
    let literal_ok = table.iter().zip(literal).all(|(row, lit)| row[..] == lit[..]);
    check(
        mismatches == 0 && literal_ok,
        format!("9x2 selector table, {mismatches} mismatches, selector codes {table:?}"),
    )
}

fn criterion_3() -> Verdict {
    let file = load("usecase2");
    let Ok(Case::Formation(cfg)) = file.case() else { return Err("usecase2 is not a formation".into()) };
    let mut edges: Vec<(u32, u32)> = cfg.edges.iter().map(|e| (e.leader, e.follower)).collect();
    edges.sort_unstable();
    let star = edges == vec![(2, 1), (3, 1), (4, 1), (5, 1)] && cfg.agents.len() == 5;
    let start = Instant::now();
    let run = cbf::run_formation(cfg, file.seed).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let min = run.records.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let robust_min = run.report.robustness.values().copied().fold(f64::INFINITY, f64::min);
    check(
        star && min >= -1e-6 && run.report.robustness.len() == 5 && robust_min >= 0.0 && elapsed < Duration::from_secs(60),
        format!(
            "star graph {star}, {} barrier samples with min {min:.4}, min local robustness {robust_min:.4} over {} agents, runtime {elapsed:.2?}",
            run.records.len(),
            run.report.robustness.len()
        ),
    )
}

/// Minimum-norm grid points: the first allows each constraint a violation of
/// half a grid cell, the second none. The relaxed search decides
/// feasibility, the strict one gives the reference norm.
fn grid_solve(cons: &[LinearConstraint], bx: &InputBox, pitch: f64) -> (Option<[f64; 2]>, Option<[f64; 2]>) {
    let axis = |d: usize| {
        let n = ((bx.hi[d] - bx.lo[d]) / pitch).floor() as usize;
        let mut v: Vec<f64> = (0..=n).map(|i| bx.lo[d] + i as f64 * pitch).collect();
        if bx.hi[d] - v[n] > 1e-12 {
            v.push(bx.hi[d]);
        }
        v
    };
    let (xs, ys) = (axis(0), axis(1));
    let tol: Vec<f64> = cons.iter().map(|c| 0.5 * pitch * (c.a[0].abs() + c.a[1].abs()) + 1e-12).collect();
    let mut relaxed: Option<([f64; 2], f64)> = None;
    let mut strict: Option<([f64; 2], f64)> = None;
    let keep = |best: &mut Option<([f64; 2], f64)>, u: [f64; 2], n: f64| {
        if best.is_none_or(|(_, b)| n < b) {
            *best = Some((u, n));
        }
    };
    for &x in &xs {
        for &y in &ys {
            let n = x * x + y * y;
            if cons.iter().zip(&tol).all(|(c, t)| c.violation([x, y]) <= *t) {
                keep(&mut relaxed, [x, y], n);
                if cons.iter().all(|c| c.violation([x, y]) == 0.0) {
                    keep(&mut strict, [x, y], n);
                }
            }
        }
    }
    (relaxed.map(|(u, _)| u), strict.map(|(u, _)| u))
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut verdict_mismatch, mut infeasible, mut thin) = (0.0f64, 0, 0, 0);
    for _ in 0..1000 {
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for d in 0..2 {
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            lo[d] = f64::min(a, b);
            hi[d] = f64::max(a, b) + 0.05;
        }
        let bx = InputBox { lo, hi };
        let count = rng.random_range(0..=2);
        let cons: Vec<LinearConstraint> = (0..count)
            .map(|_| {
                let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s: f64 = rng.random_range(0.5..2.0);
                LinearConstraint::new([s * th.cos(), s * th.sin()], rng.random_range(-2.0..2.0))
            })
            .collect();
        let qp = solve_min_norm(&cons, &bx);
        let (relaxed, strict) = grid_solve(&cons, &bx, 1e-2);
        if qp.feasible != relaxed.is_some() {
            verdict_mismatch += 1;
            continue;
        }
        let norm = |u: [f64; 2]| u[0].hypot(u[1]);
        if relaxed.is_none() {
            infeasible += 1;
            continue;
        }
        match strict {
            Some(g) => worst = worst.max((norm(g) - norm(qp.u)).abs()),
            None => thin += 1,
        }
    }
    check(
        verdict_mismatch == 0 && worst <= 2e-2,
        format!(
            "1000 instances ({infeasible} infeasible, {thin} feasible sets thinner than the grid), verdict mismatches {verdict_mismatch}, max norm gap to the strict grid optimum {worst:.2e}"
        ),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut above_samples, mut vertex_mismatch) = (0, 0);
    let mut tightest = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=3);
        let grad: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let bounds: Vec<InputBound> =
            (0..m).map(|_| InputBound::new(rng.random_range(-2.0..0.0), rng.random_range(0.0..2.0))).collect();
        let gamma = rng.random_range(0.1..=1.0);
        let eps = epsilon_term(&grad, &f, &g, &bounds, gamma);

        let drift: f64 = grad.iter().zip(&f).map(|(a, b)| a * b).sum();
        let col: Vec<f64> = (0..m).map(|j| grad.iter().zip(&g).map(|(gi, row)| gi * row[j]).sum()).collect();
        let vertex_min = (0..1usize << m)
            .map(|mask| {
                (0..m)
                    .map(|j| {
                        let bound = if mask >> j & 1 == 1 { bounds[j].hi } else { bounds[j].lo };
                        gamma * bound * col[j]
                    })
                    .sum::<f64>()
                    + drift
            })
            .fold(f64::INFINITY, f64::min);
        if eps != vertex_min {
            vertex_mismatch += 1;
        }
        let value = |u: &[f64]| -> f64 {
            (0..n).map(|i| grad[i] * (f[i] + (0..m).map(|j| g[i][j] * u[j]).sum::<f64>())).sum()
        };
        let mut u = vec![0.0; m];
        let mut sample_min = f64::INFINITY;
        for _ in 0..100_000 {
            for j in 0..m {
                u[j] = gamma * rng.random_range(bounds[j].lo..=bounds[j].hi);
            }
            sample_min = sample_min.min(value(&u));
        }
        if eps > sample_min + 1e-12 {
            above_samples += 1;
        }
        tightest = tightest.min(sample_min - eps);
    }
    check(
        above_samples == 0 && vertex_mismatch == 0,
        format!(
            "1000 instances x 1e5 samples, {above_samples} above a sample, {vertex_mismatch} differ from the vertex minimum, closest sample gap {tightest:.2e}"
        ),
    )
}

/// Direct recursive semantics: every temporal operator unrolled over the
/// remaining positions.
fn brute(word: &[[bool; 2]], i: usize, f: &Formula) -> bool {
    let n = word.len();
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(p) => word[i][usize::from(p == "q")],
        Formula::Not(a) => !brute(word, i, a),
        Formula::And(a, b) => brute(word, i, a) && brute(word, i, b),
        Formula::Or(a, b) => brute(word, i, a) || brute(word, i, b),
        Formula::Next(a) => i + 1 < n && brute(word, i + 1, a),
        Formula::Until(a, b) => (i..n).any(|j| brute(word, j, b) && (i..j).all(|m| brute(word, m, a))),
        Formula::Eventually(_, a) => (i..n).any(|j| brute(word, j, a)),
        Formula::Always(_, a) => (i..n).all(|j| brute(word, j, a)),
        other => unreachable!("not generated: {other:?}"),
    }
}

/// Formulas of syntax-tree height at most `depth`, atoms counting as 1.
fn formulas(depth: usize) -> Vec<Formula> {
    let mut all = vec![Formula::atom("p"), Formula::atom("q")];
    for _ in 1..depth {
        let prev = all.clone();
        let unbounded = Interval { lo: 0.0, hi: f64::INFINITY };
        let mut next = prev.clone();
        for a in &prev {
            next.push(Formula::not(a.clone()));
            next.push(Formula::next(a.clone()));
            next.push(Formula::Eventually(unbounded, Box::new(a.clone())));
            next.push(Formula::Always(unbounded, Box::new(a.clone())));
            for b in &prev {
                next.push(Formula::and(a.clone(), b.clone()));
                next.push(Formula::or(a.clone(), b.clone()));
                next.push(Formula::until(a.clone(), b.clone()));
            }
        }
        all = next;
    }
    all
}

fn criterion_6() -> Verdict {
    let fs = formulas(3);
    let mut words = Vec::new();
    for len in 1..=6usize {
        for code in 0..(1usize << (2 * len)) {
            words.push((0..len).map(|i| [code >> (2 * i) & 1 == 1, code >> (2 * i + 1) & 1 == 1]).collect::<Vec<_>>());
        }
    }
    let (mut checks, mut disagreements) = (0u64, 0u64);
    for w in &words {
        let letters: Vec<String> = w
            .iter()
            .map(|l| [(l[0], "p"), (l[1], "q")].iter().filter(|(b, _)| *b).map(|(_, n)| *n).collect::<Vec<_>>().join(","))
            .collect();
        let refs: Vec<&str> = letters.iter().map(String::as_str).collect();
        let word = Word::from_strs(&["p", "q"], &refs).map_err(|e| e.to_string())?;
        for f in &fs {
            checks += 1;
            if ltl_satisfies(&word, 0, f).map_err(|e| e.to_string())? != brute(w, 0, f) {
                disagreements += 1;
            }
        }
    }
    check(
        disagreements == 0,
        format!(
            "{} formulas (height <= 3 over p, q with not, and, or, X, U, F, G) x {} words (length 1..6): {checks} checks, {disagreements} disagreements",
            fs.len(),
            words.len()
        ),
    )
}

fn criterion_7() -> Verdict {
    let f = parse("x1 >= 0").map_err(|e| e.to_string())?;
    let source = |rng: &mut ChaCha8Rng| {
        let x: f64 = StandardNormal.sample(rng);
        Trace::scalar(&[x]).expect("one sample")
    };
    let (mut covered, mut in_band) = (0, 0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..100 {
        let e = estimate_risk(source, &f, &RiskQuery::new(10_000, seed)).map_err(|e| e.to_string())?;
        if (e.p_hat - e.half_width..=e.p_hat + e.half_width).contains(&0.5) {
            covered += 1;
        }
        if (0.48..=0.52).contains(&e.p_hat) {
            in_band += 1;
        }
        lo = lo.min(e.p_hat);
        hi = hi.max(e.p_hat);
    }
    check(
        in_band == 100 && covered >= 90,
        format!("n = 1e4, p_hat in [{lo:.4}, {hi:.4}] ({in_band}/100 inside [0.48, 0.52]), 95% interval covers 0.5 in {covered}/100"),
    )
}

fn criterion_8() -> Verdict {
    let file = load("usecase3");
    let Ok(Case::Warehouse(cfg)) = file.case() else { return Err("usecase3 is not a warehouse".into()) };
    let run = tasking::run_warehouse(cfg, file.seed).map_err(|e| e.to_string())?;
    let r = &run.report;
    let worst = cfg
        .robots
        .iter()
        .max_by(|a, b| a.profile.noise.total_cmp(&b.profile.noise))
        .map(|w| w.name.clone())
        .unwrap_or_default();
    let worst_fetches = r.fetch_counts.get(&worst).copied().unwrap_or(0);
    let fetch_rows: Vec<_> = r.tasks.iter().filter(|t| t.kind == "fetch").collect();
    let fetch_met = fetch_rows.iter().all(|t| t.deadline_met);
    let home_by = r.tasks.iter().filter(|t| t.kind == "home").filter_map(|t| t.completion_step).max();
    let homes = r.tasks.iter().filter(|t| t.kind == "home").count();
    let all_home = homes == cfg.robots.len()
        && r.tasks.iter().filter(|t| t.kind == "home").all(|t| t.completion_step.is_some_and(|c| c <= 40));
    check(
        worst_fetches == 0 && fetch_met && !fetch_rows.is_empty() && all_home && r.exits.is_empty(),
        format!(
            "robot {worst} fetched {worst_fetches}, fetch counts {:?}, {}/{} fetch tasks on time, last robot home at step {:?}, {} exits, {} wall contacts",
            r.fetch_counts,
            fetch_rows.iter().filter(|t| t.deadline_met).count(),
            fetch_rows.len(),
            home_by,
            r.exits.len(),
            r.wall_collisions.len()
        ),
    )
}

type Events = Vec<(u32, String, Phase, u64)>;
type EventLog = Arc<Mutex<Events>>;

fn record(bus: &EventBus) -> EventLog {
    let log = EventLog::default();
    let sink = log.clone();
    // The subscription lives as long as the bus.
    std::mem::forget(bus.subscribe(EventFilter::all(), move |e| {
        sink.lock().expect("event log").push((e.agent_id, e.component.to_string(), e.phase, e.step));
    }));
    log
}

/// Per component: init pair, then compute and update pairs in order, an
/// error ending the iteration early.
fn phase_violations(events: &Events) -> usize {
    let mut last: BTreeMap<(u32, &str), Option<Phase>> = BTreeMap::new();
    let mut bad = 0;
    for (agent, comp, phase, _) in events {
        let prev = last.entry((*agent, comp.as_str())).or_insert(None);
        let ok = matches!(
            (*prev, phase),
            (None, Phase::PreInit | Phase::PreCompute)
                | (Some(Phase::PreInit), Phase::PostInit | Phase::ComponentError)
                | (Some(Phase::PreCompute), Phase::PostCompute | Phase::ComponentError)
                | (Some(Phase::PostCompute), Phase::PreUpdate)
                | (Some(Phase::PreUpdate), Phase::PostUpdate | Phase::ComponentError)
                | (Some(Phase::PostInit | Phase::PostUpdate | Phase::ComponentError), Phase::PreCompute)
        );
        if !ok {
            bad += 1;
        }
        *prev = Some(*phase);
    }
    bad
}

/// Sync only: within an agent and step, one component finishes its update
/// before the next component starts.
fn interleavings(events: &Events) -> usize {
    let mut open: Option<(u32, &str)> = None;
    let mut bad = 0;
    for (agent, comp, phase, _) in events {
        match phase {
            Phase::PreCompute | Phase::PreInit => {
                if open.is_some() {
                    bad += 1;
                }
                open = Some((*agent, comp.as_str()));
            }
            Phase::PostUpdate | Phase::PostInit | Phase::ComponentError => {
                if open != Some((*agent, comp.as_str())) {
                    bad += 1;
                }
                open = None;
            }
            _ => {
                if open != Some((*agent, comp.as_str())) {
                    bad += 1;
                }
            }
        }
    }
    bad
}

fn trace_bytes(trace: &TraceLog, meta: &TraceMeta) -> Vec<u8> {
    let mut out = Vec::new();
    trace.write_csv(meta, &mut out).expect("in-memory write");
    out
}

/// One sync run: trace bytes and the event log.
fn sync_run(file: &ScenarioFile) -> Result<(Vec<u8>, Events), String> {
    let meta = TraceMeta { seed: file.seed, config_hash: file.config_hash(), scenario: file.name.clone() };
    let (trace, log) = match file.case().map_err(|i| i.to_string())? {
        Case::Encounter(c) => {
            let enc = mpc::Encounter::new(c, file.seed).map_err(|e| e.to_string())?;
            let log = record(enc.coordinator().bus());
            (enc.run().map_err(|e| e.to_string())?.trace, log)
        }
        Case::Formation(c) => {
            let f = cbf::Formation::new(c, file.seed).map_err(|e| e.to_string())?;
            let log = record(f.coordinator().bus());
            (f.run().map_err(|e| e.to_string())?.trace, log)
        }
        Case::Warehouse(c) => {
            let w = tasking::Warehouse::new(c, file.seed).map_err(|e| e.to_string())?;
            let log = record(w.coordinator().bus());
            (w.run().map_err(|e| e.to_string())?.trace, log)
        }
    };
    let events = std::mem::take(&mut *log.lock().expect("event log"));
    Ok((trace_bytes(&trace, &meta), events))
}

fn async_events(file: &ScenarioFile) -> Result<(Events, u64), String> {
    let (world, agents): (World2D, Vec<Agent>) = match file.case().map_err(|i| i.to_string())? {
        Case::Encounter(c) => mpc::build_agents(c, file.seed).map_err(|e| e.to_string())?,
        Case::Formation(c) => {
            let p = cbf::build_agents(c, file.seed).map_err(|e| e.to_string())?;
            (p.world, p.agents)
        }
        Case::Warehouse(c) => tasking::build_agents(c, file.seed).map_err(|e| e.to_string())?,
    };
    let mut coord = AsyncCoordinator::new(world, file.seed);
    for a in agents {
        coord.add_agent(a).map_err(|e| e.to_string())?;
    }
    let log = record(coord.bus());
    let report = coord
        .run(AsyncConfig {
            wall_duration: Duration::from_millis(300),
            default_period: 0.01,
            world_period: Some(0.01),
            worker_threads: 4,
        })
        .map_err(|e| e.to_string())?;
    let events = std::mem::take(&mut *log.lock().expect("event log"));
    Ok((events, report.world_steps))
}

fn criterion_9() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["usecase1", "usecase2", "usecase3"] {
        let file = load(name);
        let (a, events) = sync_run(&file)?;
        let (b, _) = sync_run(&file)?;
        let identical = a == b && !a.is_empty();
        let sync_bad = phase_violations(&events) + interleavings(&events);
        let (async_log, world_steps) = async_events(&file)?;
        let async_bad = phase_violations(&async_log);
        ok &= identical && sync_bad == 0 && async_bad == 0 && !events.is_empty() && !async_log.is_empty();
        notes.push(format!(
            "{name}: traces identical {identical} ({} bytes), sync events {} with {sync_bad} violations, async events {} over {world_steps} world steps with {async_bad} violations",
            a.len(),
            events.len(),
            async_log.len()
        ));
    }
    check(ok, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "crossing encounter", criterion_1),
        (2, "branch selector table", criterion_2),
        (3, "star formation", criterion_3),
        (4, "min-norm QP vs grid", criterion_4),
        (5, "epsilon term exactness", criterion_5),
        (6, "LTL brute force", criterion_6),
        (7, "risk calibration", criterion_7),
        (8, "warehouse allocation", criterion_8),
        (9, "determinism and phase order", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, title, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| title.contains(x.as_str()) || *x == n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {n} ({title}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({title}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
