//! Acceptance run: one PASS/FAIL line per criterion on stdout, nonzero exit
//! if any criterion fails. Built with `harness = false`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use clap::Parser;
use common::oracle::{max_outage_rel_err, toy_mdp_distance};
use fogrelay::agent::QTable;
use fogrelay::cli;
use fogrelay::config::SimConfig;
use fogrelay::coordination::Mode;
use fogrelay::engine::{run_batch, run_experiment, BatchResult};
use fogrelay::metrics::{aggregate_batch, delivery_pct, SummaryRow, Timing};

const SEEDS: u32 = 10;
const RELAY_COUNTS: [usize; 5] = [1, 2, 3, 4, 5];

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn outage_oracle(rep: &mut Report) {
    let t = Instant::now();
    let (err, n) = max_outage_rel_err();
    let secs = t.elapsed().as_secs_f64();
    rep.check(
        "outage oracle",
        n == 10_000 && err <= 1e-12 && secs < 5.0,
        format!("{n} tuples, max rel err {err:.3e} (tol 1e-12), {secs:.2} s (limit 5 s)"),
    );
}

fn q_oracle(rep: &mut Report) {
    let t = Instant::now();
    let d = toy_mdp_distance(1_000_000, 1);
    let secs = t.elapsed().as_secs_f64();
    rep.check(
        "Q-learning oracle",
        d <= 1.0 && secs < 30.0,
        format!("L-inf {d:.4} after 1e6 steps (tol 1.0), {secs:.2} s (limit 30 s)"),
    );
}

fn hand_updates(rep: &mut Report) {
    let mut q = QTable::new(2, 2, 0.1, 0.9);
    let a = q.update(0, 0, 0.0, 1);
    let b = q.update(0, 0, 100.0, 1);
    let mut q = QTable::new(2, 2, 0.1, 0.9);
    q.set(0, 0, 10.0);
    q.set(1, 1, 10.0);
    let c = q.update(0, 0, 0.0, 1);
    rep.check(
        "hand-checked updates",
        a == 0.0 && b == 10.0 && c == 9.9,
        format!("0 -> {a}, 0 -> {b}, 10 -> {c} (expected 0, 10, 9.9)"),
    );
}

fn convergence(rep: &mut Report) {
    let t = Instant::now();
    let mut cfg = SimConfig::default();
    cfg.environment.relays = 3;
    cfg.agent.max_steps = 10_000;
    let mut early = [0.0f64; 3];
    let mut late = [0.0f64; 3];
    for seed in 0..SEEDS as u64 {
        let r = run_experiment(&cfg, seed, Mode::Decentralized).expect("run");
        for e in &r.episodes {
            for (i, s) in e.relays.iter().enumerate() {
                match e.episode {
                    1..=20 => early[i] += s.steps_alive as f64 / 20.0,
                    61..=100 => late[i] += s.steps_alive as f64 / 40.0,
                    _ => {}
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let ratios: Vec<f64> = (0..3).map(|i| late[i] / early[i]).collect();
    let detail = (0..3)
        .map(|i| {
            format!(
                "agent {i}: {:.1} -> {:.1} steps (ratio {:.3})",
                early[i] / SEEDS as f64,
                late[i] / SEEDS as f64,
                ratios[i]
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    rep.check(
        "convergence",
        ratios.iter().all(|&r| r <= 0.5) && secs < 300.0,
        format!("{detail}; limit ratio 0.5, {secs:.1} s (limit 300 s)"),
    );
}

/// One-sided exact sign test: probability of at least `k` successes out of
/// `n` fair coin flips.
fn sign_test(k: u32, n: u32) -> f64 {
    let mut c = 1.0f64;
    let mut tail = 0.0;
    for i in 0..=n {
        if i >= k {
            tail += c;
        }
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

fn summary(s: &[SummaryRow], mode: Mode, relays: usize) -> &SummaryRow {
    s.iter()
        .find(|r| r.mode == mode && r.relay_count == relays)
        .expect("summary row")
}

/// Per-seed mean delivery over the pooled tail episodes.
fn per_seed_delivery(batch: &BatchResult, mode: Mode, relays: usize, last_k: usize) -> BTreeMap<u32, f64> {
    batch
        .runs
        .iter()
        .filter(|r| r.mode == mode && r.relay_count == relays)
        .map(|r| {
            let tail = &r.episodes[r.episodes.len() - last_k..];
            let d = tail.iter().map(delivery_pct).sum::<f64>() / last_k as f64;
            (r.run, d)
        })
        .collect()
}

fn delivery(rep: &mut Report, batch: &BatchResult, s: &[SummaryRow], last_k: usize) {
    for n in [3, 4, 5] {
        let d = summary(s, Mode::Decentralized, n).delivery_mean;
        let c = summary(s, Mode::Centralized, n).delivery_mean;
        rep.check(
            &format!("delivery, {n} relays"),
            d >= 95.0 && c >= 95.0,
            format!("decentralized {d:.2}%, centralized {c:.2}% (both >= 95%)"),
        );
    }
    for n in [1, 2] {
        let d = summary(s, Mode::Decentralized, n).delivery_mean;
        let c = summary(s, Mode::Centralized, n).delivery_mean;
        let ds = per_seed_delivery(batch, Mode::Decentralized, n, last_k);
        let cs = per_seed_delivery(batch, Mode::Centralized, n, last_k);
        let (mut worse, mut untied) = (0, 0);
        for (run, dv) in &ds {
            let cv = cs[run];
            if cv != *dv {
                untied += 1;
                if cv > *dv {
                    worse += 1;
                }
            }
        }
        let p = sign_test(worse, untied);
        rep.check(
            &format!("delivery, {n} relays"),
            d >= c && p >= 0.05,
            format!(
                "decentralized {d:.2}% vs centralized {c:.2}%; centralized ahead on {worse}/{untied} seeds, one-sided p = {p:.4} (needs dec >= cen and p >= 0.05)"
            ),
        );
    }
}

fn energy(rep: &mut Report, s: &[SummaryRow]) {
    let dec: Vec<f64> = RELAY_COUNTS.iter().map(|&n| summary(s, Mode::Decentralized, n).energy_mean).collect();
    let cen: Vec<f64> = RELAY_COUNTS.iter().map(|&n| summary(s, Mode::Centralized, n).energy_mean).collect();
    for (i, n) in RELAY_COUNTS.iter().enumerate() {
        let improvement = 100.0 * (cen[i] - dec[i]) / cen[i];
        rep.check(
            &format!("energy direction, {n} relays"),
            dec[i] < cen[i],
            format!(
                "decentralized {:.4}% vs centralized {:.4}% (improvement {improvement:.1}%)",
                dec[i], cen[i]
            ),
        );
        if *n >= 2 {
            rep.check(
                &format!("energy improvement band, {n} relays"),
                (40.0..=95.0).contains(&improvement),
                format!("{improvement:.1}% (band [40%, 95%])"),
            );
        }
    }
    for (name, v) in [("decentralized", &dec), ("centralized", &cen)] {
        let mono = v.windows(2).all(|w| w[1] <= w[0]);
        let list = v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
        rep.check(
            &format!("energy non-increasing, {name}"),
            mono,
            format!("energy_pct over 1..5 relays: {list}"),
        );
    }
}

fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

fn time_scaling(rep: &mut Report, batch: &BatchResult, s: &[SummaryRow]) {
    let xs: Vec<f64> = RELAY_COUNTS.iter().map(|&n| n as f64).collect();
    let totals: Vec<f64> = RELAY_COUNTS
        .iter()
        .map(|&n| {
            batch
                .runs
                .iter()
                .filter(|r| r.relay_count == n)
                .map(|r| r.wall_ms)
                .sum()
        })
        .collect();
    let r2 = r_squared(&xs, &totals);
    let list = totals.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(", ");
    rep.check(
        "time linear in relay count",
        r2 >= 0.9,
        format!("total ms over 1..5 relays: {list}; R^2 = {r2:.3} (>= 0.9)"),
    );
    let per: Vec<f64> = RELAY_COUNTS
        .iter()
        .map(|&n| summary(s, Mode::Decentralized, n).per_agent_time_ms)
        .collect();
    let max = per.iter().cloned().fold(f64::MIN, f64::max);
    let min = per.iter().cloned().fold(f64::MAX, f64::min);
    let spread = if min > 0.0 { max / min - 1.0 } else { f64::INFINITY };
    let list = per.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    rep.check(
        "per-agent time, decentralized",
        spread < 0.25,
        format!("ms per agent over 1..5 relays: {list}; max/min - 1 = {:.1}% (< 25%)", 100.0 * spread),
    );
}

/// The `fogrelay` binary in the shared target directory, when it has been
/// built (as it is under `cargo test --workspace`).
fn fogrelay_binary() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let bin = dir.join(format!("fogrelay{}", std::env::consts::EXE_SUFFIX));
    bin.is_file().then_some(bin)
}

fn smoke_batch(out: &Path) -> Vec<u8> {
    let args = ["--quiet", "batch", "--smoke", "--seed", "0", "--out"];
    match fogrelay_binary() {
        Some(bin) => {
            let status = Command::new(bin).args(args).arg(out).status().expect("spawn fogrelay");
            assert!(status.success(), "batch --smoke failed");
        }
        None => {
            let argv = std::iter::once("fogrelay".into())
                .chain(args.iter().map(|a| a.to_string()))
                .chain(std::iter::once(out.display().to_string()));
            cli::run(cli::Cli::parse_from(argv)).expect("batch --smoke");
        }
    }
    std::fs::read(out.join("episodes.csv")).expect("episodes.csv")
}

fn determinism(rep: &mut Report) {
    let dir = tempfile::tempdir().expect("tempdir");
    let a = smoke_batch(&dir.path().join("smoke0"));
    let b = smoke_batch(&dir.path().join("smoke1"));
    let how = if fogrelay_binary().is_some() { "binary" } else { "in-process" };
    rep.check(
        "determinism",
        a == b,
        format!("two `batch --smoke` runs ({how}), {} bytes each, identical: {}", a.len(), a == b),
    );
}

fn invariants(rep: &mut Report) {
    for (name, prop) in common::INVARIANTS {
        let r = prop(common::CASES);
        let detail = match &r {
            Ok(()) => format!("{} cases", common::CASES),
            Err(e) => e.lines().next().unwrap_or("").to_string(),
        };
        rep.check(&format!("invariant {name}"), r.is_ok(), detail);
    }
}

fn main() -> ExitCode {
    let mut rep = Report { failed: 0 };
    outage_oracle(&mut rep);
    q_oracle(&mut rep);
    hand_updates(&mut rep);
    convergence(&mut rep);

    let cfg = SimConfig::default();
    let last_k = cfg.experiment.last_k;
    let batch = run_batch(&cfg, 0, SEEDS, &Mode::ALL, &RELAY_COUNTS, 1, &|_, _, _| {})
        .expect("batch");
    let s = aggregate_batch(&batch, last_k, Timing::Wall).expect("aggregate");
    delivery(&mut rep, &batch, &s, last_k as usize);
    energy(&mut rep, &s);
    time_scaling(&mut rep, &batch, &s);
    determinism(&mut rep);
    invariants(&mut rep);

    println!("acceptance: {} failed", rep.failed);
    if rep.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
