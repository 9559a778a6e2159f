//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. A single argument not starting with
//! `-` runs only the criteria whose name contains it.

use std::process::{Command, ExitCode};
use std::time::Instant;

use greedy_core::blocks::{
    alpha_unimodal_check, block_params, ell, renewal_transience, success_rates, truncated_start,
    TransienceOptions,
};
use greedy_core::coupling::{run_coupled, CoupledOptions};
use greedy_core::engine::{ModelConfig, RandomTape, Regime, ServiceKind};
use greedy_core::explicit_sim::{run_until_regeneration, ExplicitSim, Strategy};
use greedy_core::lyapunov::{
    constant_start, derive_constants, drift_experiment, run_seed, run_to_stopping,
    small_b_regeneration, small_b_start, StopKind,
};
use greedy_core::potential_sim::{
    is_proper, run_potential_until_regeneration, ClearProfile, PotentialSim, PotentialState,
};
use greedy_core::stats::ks_two_sample;

const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn config(lambda: f64, kind: ServiceKind) -> ModelConfig {
    ModelConfig::new(lambda, 1.0, 1.0, kind).unwrap()
}

/// Circle state after `steps` events, then on to the next service start.
fn circle_after(config: ModelConfig, seed: u64, level: f64, steps: usize) -> PotentialState {
    let start = PotentialState::serving(ClearProfile::constant_circle(level), 0.0);
    let mut sim = PotentialSim::new(config, &RandomTape::new(seed), start).unwrap();
    for k in 0.. {
        if k >= steps && sim.state().regime != Regime::Moving {
            break;
        }
        if sim.step().unwrap().is_none() {
            break;
        }
    }
    sim.state().clone()
}

/// Truncated lift of a serving circle state reached after a few events;
/// `None` when that state is idle.
fn lifted_start(config: ModelConfig, seed: u64, r: u64) -> Option<PotentialState> {
    let level = -0.5 - (r % 4) as f64 * 0.5;
    let st = circle_after(config, seed, level, (r % 25) as usize);
    (st.regime != Regime::Idle).then(|| truncated_start(&st).unwrap())
}

// A(u) = λ ∫ -u and N(u) = sup -u read directly off the pieces.
fn a_of(p: &ClearProfile, lambda: f64) -> f64 {
    lambda
        * p.pieces()
            .iter()
            .map(|q| (q.end - q.start) * (p.clock() - q.w))
            .sum::<f64>()
}

fn n_of(p: &ClearProfile) -> f64 {
    p.pieces()
        .iter()
        .map(|q| p.clock() - q.w)
        .fold(0.0, f64::max)
}

fn coupling() -> Verdict {
    let cfg = config(0.5, ServiceKind::Exponential);
    let start = PotentialState::serving(ClearProfile::constant_circle(-1.0), 0.0);
    let opts = CoupledOptions::default();
    let mut bad = Vec::new();
    let mut degenerate = 0;
    for r in 0..1000 {
        let rep = run_coupled(&cfg, &RandomTape::new(run_seed(SEED, 0, r)), &start, &opts).unwrap();
        degenerate += rep.degenerate as u32;
        let ev = |s: Option<greedy_core::coupling::Stamp>| s.map(|s| s.event);
        let (t_o, t_v) = (ev(rep.t_circle.t_o), ev(rep.t_circle.t_v));
        let (t_1, t_u) = (ev(rep.t_line.t_1), ev(rep.t_line.t_u));
        let t_min = match (t_u, t_1) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let stamps_ok = t_o == t_1 && t_v == t_min;
        if !rep.identities_ok || !stamps_ok {
            bad.push(r);
        }
    }
    verdict(
        bad.is_empty(),
        format!(
            "{} of 1000 runs broke an identity {:?}; {degenerate} degenerate",
            bad.len(),
            &bad[..bad.len().min(5)]
        ),
    )
}

fn representation() -> Verdict {
    let cfg = config(0.5, ServiceKind::Exponential);
    let n = 10_000u64;
    let (mut busy_e, mut served_e, mut busy_p, mut served_p) = (vec![], vec![], vec![], vec![]);
    for r in 0..n {
        let tape = RandomTape::new(run_seed(SEED, 1, r));
        let mut ex = ExplicitSim::empty(cfg, Strategy::Greedy, &tape, 0.0).unwrap();
        let o = run_until_regeneration(&mut ex, 1e5, false);
        busy_e.push(o.tau.unwrap() - o.first_arrival.unwrap());
        served_e.push(o.served as f64);
        let tape = RandomTape::new(run_seed(SEED, 2, r));
        let mut po = PotentialSim::new(cfg, &tape, PotentialState::empty_circle(0.0)).unwrap();
        let o = run_potential_until_regeneration(&mut po, 1e5, false).unwrap();
        busy_p.push(o.tau.unwrap() - o.first_arrival.unwrap());
        served_p.push(o.served as f64);
    }
    let a = ks_two_sample(&busy_e, &busy_p);
    let b = ks_two_sample(&served_e, &served_p);
    verdict(
        a.p_value >= 0.01 && b.p_value >= 0.01,
        format!(
            "KS busy period D = {:.4} p = {:.3}; served D = {:.4} p = {:.3}",
            a.statistic, a.p_value, b.statistic, b.p_value
        ),
    )
}

fn stability() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [
        ServiceKind::Exponential,
        ServiceKind::Deterministic,
        ServiceKind::Geometric { p: 0.25 },
    ] {
        let cfg = config(0.5, kind);
        let (mut censored, mut serving, mut total) = (0u64, 0.0, 0.0);
        for r in 0..10_000 {
            let mut sim = ExplicitSim::empty(
                cfg,
                Strategy::Greedy,
                &RandomTape::new(run_seed(SEED, 3, r)),
                0.0,
            )
            .unwrap();
            let o = run_until_regeneration(&mut sim, 1e5, false);
            censored += o.censored as u64;
            serving += o.split.serving;
            total += o.end_time;
        }
        // renewal-reward: the long-run serving fraction is λ/μ
        let frac = serving / total;
        let ok = censored == 0 && (frac - 0.5).abs() <= 0.05;
        pass &= ok;
        parts.push(format!(
            "{kind}: censored {censored}, serving fraction {frac:.4}"
        ));
    }
    verdict(pass, parts.join("; "))
}

fn drift() -> Verdict {
    let lambda = 0.5;
    let cfg = config(lambda, ServiceKind::Exponential);
    let c = derive_constants(lambda, 1.0, 1.0, 1.0).unwrap();
    let psi = 2.0 / (1.0 - lambda);
    let bs = [10.0, 20.0, 40.0];
    let (rows, reports) =
        drift_experiment(&cfg, &c, &bs, 1000, SEED, |b| constant_start(b, &c)).unwrap();
    let mut violations = 0u64;
    for rep in reports.iter().flatten() {
        let t = rep.elapsed;
        let slack = 1e-9 * rep.b_before.max(1.0);
        let removed: f64 = rep.removed.iter().sum();
        let a_pred = rep.a_before + lambda * (t - rep.split.idle) - removed;
        let ok = rep.b_after <= rep.b_before + t + slack
            && t <= psi * rep.b_before + slack
            && (rep.fired == StopKind::Deadline || rep.n_after <= rep.n_before / 2.0 + t + slack)
            && (rep.a_after - a_pred).abs() <= 1e-9 * rep.a_before.max(1.0)
            && rep.checks.all();
        violations += !ok as u64;
    }
    let trend = rows
        .windows(2)
        .all(|w| w[1].rho_hat <= w[0].rho_hat + w[0].half_width() + w[1].half_width());
    let rho: Vec<String> = rows
        .iter()
        .map(|r| format!("B={}: {:.3}", r.b_target, r.rho_hat))
        .collect();
    verdict(
        violations == 0 && trend,
        format!(
            "rho_hat {}; {violations} of 3000 runs broke an inequality",
            rho.join(", ")
        ),
    )
}

fn small_b() -> Verdict {
    let cfg = config(0.5, ServiceKind::Exponential);
    let c = derive_constants(0.5, 1.0, 1.0, 1.0).unwrap();
    let est = small_b_regeneration(&cfg, &c, 10_000, SEED, || small_b_start(&c)).unwrap();
    let bound = (1.0 - (-1.0f64).exp()) * (-1.0f64 - 1.0 - 0.5).exp();
    let hw = (est.ci_high - est.ci_low) / 2.0;
    let p = est.hits as f64 / est.n_runs as f64;
    verdict(
        p >= bound - 3.0 * hw && (est.bound - bound).abs() < 1e-15,
        format!("p_hat {p:.4} (CI half-width {hw:.4}) vs bound {bound:.4}"),
    )
}

fn invariants() -> Verdict {
    let lambda = 0.5;
    let cfg = config(lambda, ServiceKind::Exponential);
    let eps = (1.0 - lambda) * lambda / 8.0;
    let b_of = |p: &ClearProfile| a_of(p, lambda) + 4.0 * eps * n_of(p);
    let grid: Vec<f64> = (0..97).map(|i| i as f64 / 97.0).collect();

    // properness, B(u_{t+s}) <= B(u_t) + s and u_{t+s} >= u_t - s on the circle
    let (mut improper, mut bslow, mut uslow, mut events) = (0u64, 0u64, 0u64, 0u64);
    for r in 0..1000u64 {
        let start = if r % 3 == 0 {
            PotentialState::empty_circle(0.0)
        } else {
            PotentialState::serving(
                ClearProfile::constant_circle(-0.1 - (r % 30) as f64 * 0.1),
                0.0,
            )
        };
        let mut sim =
            PotentialSim::new(cfg, &RandomTape::new(run_seed(SEED, 4, r)), start).unwrap();
        let first = sim.profile().clone();
        let mut prev = first.clone();
        for _ in 0..300 {
            if sim.step().unwrap().is_none() {
                break;
            }
            events += 1;
            let cur = sim.profile();
            improper += !is_proper(sim.state()).proper as u64;
            for base in [&prev, &first] {
                let s = cur.clock() - base.clock();
                if b_of(cur) > b_of(base) + s + 1e-9 {
                    bslow += 1;
                }
                let cuts = base.pieces();
                let mut pts = grid.iter().copied().chain(cuts.iter().map(|q| q.start));
                if pts.any(|x| cur.u_at(x) < base.u_at(x) - s - 1e-9) {
                    uslow += 1;
                }
            }
            prev = cur.clone();
        }
    }

    // α-unimodality of the truncated line process at every event
    let (mut not_unimodal, mut line_events, mut idle_skips) = (0u64, 0u64, 0u64);
    for r in 0..1000u64 {
        let Some(st) = lifted_start(cfg, run_seed(SEED, 5, r), r) else {
            idle_skips += 1;
            continue;
        };
        not_unimodal += !alpha_unimodal_check(&st, 0.5) as u64;
        let mut sim = PotentialSim::new(cfg, &RandomTape::new(run_seed(SEED, 6, r)), st).unwrap();
        for _ in 0..150 {
            if sim.step().unwrap().is_none() {
                break;
            }
            line_events += 1;
            not_unimodal += !alpha_unimodal_check(sim.state(), 0.5) as u64;
        }
    }

    // G_t shapes in stopping runs, H_t shapes in coupled runs
    let c = derive_constants(lambda, 1.0, 1.0, 1.0).unwrap();
    let mut g_bad = 0u64;
    for r in 0..1000 {
        let mut sim = PotentialSim::new(
            cfg,
            &RandomTape::new(run_seed(SEED, 7, r)),
            constant_start(10.0, &c),
        )
        .unwrap();
        g_bad += !run_to_stopping(&mut sim, &c).unwrap().checks.g_shape as u64;
    }
    let start = PotentialState::serving(ClearProfile::constant_circle(-2.0), 0.0);
    let mut h_bad = 0u64;
    for r in 0..1000 {
        let rep = run_coupled(
            &cfg,
            &RandomTape::new(run_seed(SEED, 8, r)),
            &start,
            &CoupledOptions::default(),
        )
        .unwrap();
        h_bad += !rep.shapes_ok as u64;
    }

    let total = improper + bslow + uslow + not_unimodal + g_bad + h_bad;
    verdict(
        total == 0,
        format!(
            "circle: {improper} improper, {bslow} B growth, {uslow} u growth violations over {events} events; \
             line: {not_unimodal} not 1/2-unimodal over {line_events} events ({idle_skips} idle starts skipped); \
             G shape {g_bad}, H shape {h_bad}"
        ),
    )
}

fn parameters() -> Verdict {
    let mut bad = Vec::new();
    for j in 0..=16u32 {
        for (nj, nn, v) in [(10.0, 12.0, 1.0), (3.5, 7.25, 2.0), (100.0, 150.0, 0.5)] {
            let p = block_params(j, nj, nn, v);
            let ok = if j == 0 {
                p.q_minus == 1
                    && p.q_plus == 1
                    && p.x_minus == 9.0 / nn
                    && p.x_plus == 36.0
                    && p.m_minus == 1.0
                    && p.m_plus == 2.0 + 36.0 / v
            } else {
                let l = (54.0 * (j as f64).powf(0.25)).ceil();
                let x_plus = 3.0 * l / nj;
                p.ell == Some(l as u64)
                    && ell(j) == l as u64
                    && p.d == Some(l / 36.0)
                    && p.q_minus == l as u64
                    && p.q_plus == l as u64 + 1
                    && p.x_minus == (l - 1.0) / (3.0 * nn)
                    && p.x_plus == x_plus
                    && p.m_minus == l / 2.0
                    && p.m_plus == 2.0 * (l + 1.0) + 3.0 * x_plus / v
            };
            if !ok {
                bad.push(j);
            }
        }
    }
    let p1 = block_params(1, 10.0, 12.0, 1.0);
    let p0 = block_params(0, 10.0, 10.0, 1.0);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
    let examples = p1.ell == Some(54)
        && p1.d == Some(1.5)
        && close(p1.x_minus, 53.0 / 36.0)
        && close(p1.x_plus, 16.2)
        && p1.m_minus == 27.0
        && close(p1.m_plus, 158.6)
        && p0.x_minus == 0.9
        && p0.m_plus == 38.0
        && ell(16) == 108;
    verdict(
        bad.is_empty() && examples,
        format!(
            "mismatches at j = {bad:?}; worked examples {}",
            if examples { "ok" } else { "wrong" }
        ),
    )
}

fn transience() -> Verdict {
    let cfg = config(0.5, ServiceKind::Exponential);
    let opts = TransienceOptions::default();
    let fallback = truncated_start(&PotentialState::serving(
        ClearProfile::constant_circle(-1.0),
        0.0,
    ))
    .unwrap();
    let mut reports = Vec::new();
    for r in 0..200u64 {
        let st = lifted_start(cfg, run_seed(SEED, 9, r), r).unwrap_or_else(|| fallback.clone());
        reports.push(
            renewal_transience(&cfg, &RandomTape::new(run_seed(SEED, 10, r)), &st, &opts).unwrap(),
        );
    }
    let rates = success_rates(&reports, 8);
    let window: Vec<_> = rates.iter().filter(|s| (1..=8).contains(&s.j)).collect();
    let mut monotone = true;
    for (i, a) in window.iter().enumerate() {
        for b in &window[i + 1..] {
            monotone &= b.ci_high >= a.ci_low;
        }
    }
    let done: Vec<_> = reports.iter().filter(|r| !r.censored).collect();
    let transient = done.iter().all(|r| r.strongly_transient == Some(true));
    let traveled = done.iter().all(|r| r.traveled_bound_ok == Some(true));
    let served = done
        .iter()
        .all(|r| matches!((r.served_before_t_z, r.served_bound), (Some(n), Some(b)) if n <= b));
    let p: Vec<String> = window.iter().map(|s| format!("{:.2}", s.p_hat)).collect();
    verdict(
        monotone && transient && traveled && served,
        format!(
            "p_hat(1..8) = [{}]; {} of 200 uncensored; strong transience {transient}, 5/3 bound {traveled}, served bound {served}",
            p.join(", "),
            done.len()
        ),
    )
}

fn determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_greedy");
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        (
            "simulate",
            vec!["simulate", "--runs", "20", "--log", "{d}/log"],
            vec!["log"],
        ),
        (
            "simulate-potential",
            vec![
                "simulate",
                "--model",
                "potential",
                "--runs",
                "20",
                "--init",
                "const:-1",
            ],
            vec![],
        ),
        (
            "simulate-polling",
            vec![
                "simulate", "--model", "polling", "--runs", "20", "--format", "json",
            ],
            vec![],
        ),
        ("couple", vec!["couple", "--runs", "20"], vec![]),
        ("drift", vec!["drift", "--runs", "50"], vec![]),
        (
            "regen",
            vec!["regen", "--runs", "500", "--service", "det"],
            vec![],
        ),
        (
            "blocks",
            vec![
                "blocks",
                "--runs",
                "3",
                "--horizon",
                "500",
                "--summary",
                "{d}/sum",
                "--rates",
                "{d}/rates",
            ],
            vec!["sum", "rates"],
        ),
        (
            "walk",
            vec!["walk", "--rho", "0.01", "--runs", "500"],
            vec![],
        ),
        ("compare", vec!["compare", "--runs", "500"], vec![]),
    ];
    let mut bad = Vec::new();
    for (name, args, extras) in &cases {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let d = dir.path().join(format!("{name}-{rep}"));
            std::fs::create_dir_all(&d).unwrap();
            let ds = d.to_str().unwrap();
            let args: Vec<String> = args.iter().map(|a| a.replace("{d}", ds)).collect();
            let out = Command::new(bin)
                .args(&args)
                .args(["--seed", "42"])
                .output()
                .unwrap();
            let mut bytes = vec![out.stdout, vec![out.status.code().unwrap_or(-1) as u8]];
            for e in extras {
                bytes.push(std::fs::read(d.join(e)).unwrap_or_default());
            }
            outputs.push(bytes);
        }
        if outputs[0] != outputs[1] || outputs[0][0].is_empty() {
            bad.push(*name);
        }
    }
    verdict(
        bad.is_empty(),
        format!(
            "{} subcommand invocations compared, differing: {bad:?}",
            cases.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("coupling", coupling),
        ("representation", representation),
        ("stability", stability),
        ("drift", drift),
        ("small_b", small_b),
        ("invariants", invariants),
        ("parameters", parameters),
        ("transience", transience),
        ("determinism", determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|s| !name.contains(s)) {
            continue;
        }
        let t = Instant::now();
        let v = f();
        failed += !v.pass as u32;
        println!(
            "{} {}. {name} [{:.1}s]: {}",
            if v.pass { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
