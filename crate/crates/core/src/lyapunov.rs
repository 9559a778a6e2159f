//! Drift machinery on the circle: the constants, the functionals `A`, `N`,
//! `B`, the valley set, the revealed set `G_t`, the stopping times, and the
//! experiments built on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{derive_seed, ModelConfig, RandomTape, Regime, Stream, TimeSplit};
use crate::error::{Error, Result};
use crate::geometry::{grow_arc, Arc, ArcSet, CirclePoint};
use crate::potential_sim::{ClearProfile, PotentialSim, PotentialState};
use crate::stats::{wilson, Z95};

/// `η = 1 - λ`, `Ψ = 2/η`, `ε = ηλ/8`, `δ = ε/(2Ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub lambda: f64,
    pub mu: f64,
    pub speed: f64,
    pub eta: f64,
    pub psi: f64,
    pub eps: f64,
    pub delta: f64,
    pub b_star: f64,
}

pub fn derive_constants(lambda: f64, mu: f64, speed: f64, b_star: f64) -> Result<Constants> {
    if !(lambda > 0.0 && lambda < mu) {
        return Err(Error::InvalidConfig(format!(
            "drift constants need 0 < lambda < mu, got lambda = {lambda}, mu = {mu}"
        )));
    }
    let eta = 1.0 - lambda;
    if eta <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "eta = 1 - lambda must be positive, got {eta}"
        )));
    }
    let psi = 2.0 / eta;
    let eps = eta * lambda / 8.0;
    let delta = eps / (2.0 * psi);
    let c = Constants {
        lambda,
        mu,
        speed,
        eta,
        psi,
        eps,
        delta,
        b_star,
    };
    assert!(c.psi > 2.0 && 2.0 * c.delta * c.psi < 1.0 && 4.0 * c.eps < c.eta);
    assert!(c.lambda + 4.0 * c.eps < 1.0);
    Ok(c)
}

impl Constants {
    /// Depth of the constant potential with `B = b`.
    pub fn depth_for(&self, b: f64) -> f64 {
        b / (self.lambda + 4.0 * self.eps)
    }
}

pub fn functional_a(profile: &ClearProfile, lambda: f64) -> f64 {
    profile.total_intensity(lambda)
}

pub fn functional_n(profile: &ClearProfile) -> f64 {
    profile.depth()
}

pub fn functional_b(profile: &ClearProfile, c: &Constants) -> f64 {
    functional_a(profile, c.lambda) + 4.0 * c.eps * functional_n(profile)
}

/// `{u < -N/2}` as an open arc, the full circle, or empty when `N = 0`.
pub fn valley_set(profile: &ClearProfile) -> Result<ArcSet> {
    if !profile.is_circle() {
        return Err(Error::Contract("valley set of a line profile".into()));
    }
    let n = profile.depth();
    if n <= 0.0 {
        return Ok(ArcSet::Empty);
    }
    let t = profile.clock();
    let pieces = profile.pieces();
    let inside: Vec<bool> = pieces.iter().map(|p| p.w - t < -n / 2.0).collect();
    if inside.iter().all(|&b| b) {
        return Ok(ArcSet::Full);
    }
    // the run of valley pieces, read cyclically from a piece outside it
    let k = pieces.len();
    let first_out = inside.iter().position(|&b| !b).unwrap();
    let mut runs = Vec::new();
    let mut cur: Option<(f64, f64)> = None;
    for step in 1..=k {
        let i = (first_out + step) % k;
        let len = pieces[i].end - pieces[i].start;
        if inside[i] {
            cur = Some(match cur {
                None => (pieces[i].start, len),
                Some((s, l)) => (s, l + len),
            });
        } else if let Some(r) = cur.take() {
            runs.push(r);
        }
    }
    if let Some(r) = cur {
        runs.push(r);
    }
    match runs.len() {
        0 => Ok(ArcSet::Empty),
        1 => Ok(ArcSet::Arc(Arc::open(runs[0].0, runs[0].1))),
        _ => Err(Error::Contract(
            "valley set is disconnected; profile is not proper".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopKind {
    /// `G = R/Z`.
    Full,
    /// `G ⊇ U` before the circle was fully revealed.
    Valley,
    /// Elapsed time reached `ΨB`.
    Deadline,
}

impl StopKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopKind::Full => "T_o",
            StopKind::Valley => "T_v",
            StopKind::Deadline => "T_plus",
        }
    }
}

/// Per-run verdicts on the drift inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopChecks {
    /// `B' <= B + T` and the same along consecutive events.
    pub b_slow: bool,
    /// `T <= ΨB`.
    pub t_bounded: bool,
    /// `N' <= N/2 + T` when the stop is not the deadline.
    pub n_halved: bool,
    /// `A' = A + λT - Σ min(E_n, A_n-)` to 1e-9.
    pub a_balance: bool,
    /// `M + S + I = T` and `I = 0` before `T∘`.
    pub time_split: bool,
    /// `G` empty, a closed arc containing the server, or full, and growing.
    pub g_shape: bool,
}

impl StopChecks {
    pub fn all(&self) -> bool {
        self.b_slow
            && self.t_bounded
            && self.n_halved
            && self.a_balance
            && self.time_split
            && self.g_shape
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    pub fired: StopKind,
    pub elapsed: f64,
    pub a_before: f64,
    pub n_before: f64,
    pub b_before: f64,
    pub a_after: f64,
    pub n_after: f64,
    pub b_after: f64,
    pub split: TimeSplit,
    pub departures: u64,
    /// `B' <= (1 - ε) B`.
    pub success: bool,
    /// Intensity removed at each departure, `min(E_n, A_n-)`.
    pub removed: Vec<f64>,
    /// Marks `E_n` consumed, in order.
    pub marks: Vec<f64>,
    /// Remaining service time at the stop, if serving.
    pub residual_service: Option<f64>,
    pub checks: StopChecks,
}

/// Run the potential process from its current state to `T = min(T∘, T∨, T⁺)`.
pub fn run_to_stopping(sim: &mut PotentialSim, c: &Constants) -> Result<StoppingReport> {
    if !sim.profile().is_circle() {
        return Err(Error::Contract(
            "stopping times are defined on the circle".into(),
        ));
    }
    let lambda = c.lambda;
    let t0 = sim.clock();
    let split0 = sim.split();
    let a0 = functional_a(sim.profile(), lambda);
    let n0 = functional_n(sim.profile());
    let b0 = a0 + 4.0 * c.eps * n0;
    let valley = valley_set(sim.profile())?;
    let deadline = t0 + c.psi * b0;
    let dep0 = sim.departures();

    let mut g = ArcSet::Empty;
    let mut removed = Vec::new();
    let mut marks = Vec::new();
    let mut b_slow = true;
    let mut g_shape = true;
    let mut idle_early = false;
    let (mut t_prev, mut b_prev) = (t0, b0);

    let fired = if matches!(valley, ArcSet::Empty) {
        StopKind::Valley
    } else {
        loop {
            if sim.next_event_time() > deadline {
                sim.advance_to(deadline);
                break StopKind::Deadline;
            }
            let Some(ev) = sim.step()? else {
                sim.advance_to(deadline);
                break StopKind::Deadline;
            };
            let b_now = functional_b(sim.profile(), c);
            if b_now > b_prev + (ev.time - t_prev) + 1e-9 * b_prev.max(1.0) {
                b_slow = false;
            }
            t_prev = ev.time;
            b_prev = b_now;
            if !ev.kind.is_departure() {
                continue;
            }
            let d = *sim.last_departure().expect("departure recorded");
            removed.push(d.mass);
            marks.push(d.e);
            let before = g.measure();
            g = if d.went_idle {
                ArcSet::Full
            } else {
                grow_arc(g, Arc::from_lifted(d.cleared.0, d.cleared.1))?
            };
            let shape_ok = match g {
                ArcSet::Empty => false,
                ArcSet::Full => true,
                ArcSet::Arc(a) => {
                    crate::geometry::arc_contains(&a, CirclePoint::new(sim.state().server))
                }
            };
            if !shape_ok || g.measure() + 1e-12 < before {
                g_shape = false;
            }
            if g.is_full() {
                break StopKind::Full;
            }
            if sim.state().regime == Regime::Idle {
                idle_early = true;
            }
            if g.covers(&valley) {
                break StopKind::Valley;
            }
        }
    };

    let elapsed = sim.clock() - t0;
    let split = sim.split().since(&split0);
    let a1 = functional_a(sim.profile(), lambda);
    let n1 = functional_n(sim.profile());
    let b1 = a1 + 4.0 * c.eps * n1;
    let tol = 1e-9 * b0.max(1.0);
    let balance = a0 + lambda * (elapsed - split.idle) - removed.iter().sum::<f64>();
    let checks = StopChecks {
        b_slow: b_slow && b1 <= b0 + elapsed + tol,
        t_bounded: elapsed <= c.psi * b0 + tol,
        n_halved: fired == StopKind::Deadline || n1 <= n0 / 2.0 + elapsed + tol,
        a_balance: (a1 - balance).abs() <= 1e-9 * a0.max(1.0),
        time_split: (split.total() - elapsed).abs() <= 1e-9 * elapsed.max(1.0)
            && split.idle == 0.0
            && !idle_early,
        g_shape,
    };
    Ok(StoppingReport {
        fired,
        elapsed,
        a_before: a0,
        n_before: n0,
        b_before: b0,
        a_after: a1,
        n_after: n1,
        b_after: b1,
        split,
        departures: sim.departures() - dep0,
        success: b1 <= (1.0 - c.eps) * b0,
        removed,
        marks,
        residual_service: sim.residual_service(),
        checks,
    })
}

/// Constant potential with functional value `b`, server in service at 0.
pub fn constant_start(b: f64, c: &Constants) -> PotentialState {
    PotentialState::serving(ClearProfile::constant_circle(-c.depth_for(b)), 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub b_target: f64,
    pub n_runs: u64,
    pub failures: u64,
    pub rho_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_t: f64,
    pub mean_m: f64,
    pub mean_s: f64,
    pub mean_n_served: f64,
    /// Runs in which some drift inequality failed.
    pub check_violations: u64,
}

impl DriftRow {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

/// Replica seed for run `run` of series `series`.
pub fn run_seed(base: u64, series: u64, run: u64) -> u64 {
    derive_seed(derive_seed(base, series), run)
}

/// Failure fraction of `B' <= (1 - ε) B` over `n_runs` replicas per value.
pub fn drift_experiment<F>(
    config: &ModelConfig,
    c: &Constants,
    b_values: &[f64],
    n_runs: u64,
    base_seed: u64,
    init: F,
) -> Result<(Vec<DriftRow>, Vec<Vec<StoppingReport>>)>
where
    F: Fn(f64) -> PotentialState + Sync,
{
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for (k, &b) in b_values.iter().enumerate() {
        if !(b > 0.0) {
            return Err(Error::InvalidConfig(format!("drift needs B > 0, got {b}")));
        }
        let reports: Vec<StoppingReport> = (0..n_runs)
            .into_par_iter()
            .map(|r| {
                let tape = RandomTape::new(run_seed(base_seed, k as u64, r));
                let mut sim = PotentialSim::new(*config, &tape, init(b))?;
                run_to_stopping(&mut sim, c)
            })
            .collect::<Result<_>>()?;
        let failures = reports.iter().filter(|r| !r.success).count() as u64;
        let (lo, hi) = wilson(failures, n_runs, Z95);
        let m =
            |f: &dyn Fn(&StoppingReport) -> f64| reports.iter().map(f).sum::<f64>() / n_runs as f64;
        rows.push(DriftRow {
            b_target: b,
            n_runs,
            failures,
            rho_hat: failures as f64 / n_runs as f64,
            ci_low: lo,
            ci_high: hi,
            mean_t: m(&|r| r.elapsed),
            mean_m: m(&|r| r.split.moving),
            mean_s: m(&|r| r.split.serving),
            mean_n_served: m(&|r| r.departures as f64),
            check_violations: reports.iter().filter(|r| !r.checks.all()).count() as u64,
        });
        all.push(reports);
    }
    Ok((rows, all))
}

/// Smallest tested `B` whose failure fraction is at most `rho_star`.
pub fn choose_b_star(rows: &[DriftRow], rho_star: f64) -> Option<f64> {
    rows.iter()
        .filter(|r| r.rho_hat <= rho_star)
        .map(|r| r.b_target)
        .fold(None, |acc: Option<f64>, b| {
            Some(acc.map_or(b, |a| a.min(b)))
        })
}

/// `(1 - e^-1) exp(-B_* - 1 - 1/(2v))`.
pub fn small_b_bound(b_star: f64, speed: f64) -> f64 {
    (1.0 - (-1.0f64).exp()) * (-b_star - 1.0 - 1.0 / (2.0 * speed)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallBEstimate {
    pub n_runs: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub window: f64,
}

/// Default start for the small-`B` experiment: constant potential with
/// `B = B_*`, server at 0 heading to the antipode.
pub fn small_b_start(c: &Constants) -> PotentialState {
    PotentialState::moving(
        ClearProfile::constant_circle(-c.depth_for(c.b_star)),
        0.0,
        0.5,
    )
}

/// Frequency of a regeneration before `1/(2v) + 1`.
pub fn small_b_regeneration<F>(
    config: &ModelConfig,
    c: &Constants,
    n_runs: u64,
    base_seed: u64,
    init: F,
) -> Result<SmallBEstimate>
where
    F: Fn() -> PotentialState + Sync,
{
    let window = 1.0 / (2.0 * config.speed) + 1.0;
    let hits: Vec<bool> = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let tape = RandomTape::new(run_seed(base_seed, 0, r));
            let start = init();
            if functional_b(&start.profile, c) > c.b_star + 1e-12 {
                return Err(Error::InvalidConfig("small-B start exceeds B_*".into()));
            }
            let mut sim = PotentialSim::new(*config, &tape, start)?;
            let t0 = sim.clock();
            while sim.next_event_time() < t0 + window {
                match sim.step()? {
                    Some(ev) if ev.kind == crate::engine::EventKind::Regeneration => {
                        return Ok(true)
                    }
                    Some(_) => {}
                    None => return Ok(false),
                }
            }
            Ok(false)
        })
        .collect::<Result<_>>()?;
    let k = hits.iter().filter(|&&h| h).count() as u64;
    let (lo, hi) = wilson(k, n_runs, Z95);
    Ok(SmallBEstimate {
        n_runs,
        hits: k,
        p_hat: k as f64 / n_runs as f64,
        ci_low: lo,
        ci_high: hi,
        bound: small_b_bound(c.b_star, config.speed),
        window,
    })
}

/// Hitting time of `(-∞, 0]` by `s + Σ Y_i` with `P(Y = Ψ) = ρ`,
/// `P(Y = -ε) = 1 - ρ`; `None` when censored at `max_steps`.
pub fn walk_hitting_time(
    s: f64,
    rho: f64,
    psi: f64,
    eps: f64,
    tape: &RandomTape,
    max_steps: u64,
) -> Option<u64> {
    if s <= 0.0 {
        return Some(0);
    }
    let mut r = tape.reader();
    let mut ups = 0u64;
    for n in 1..=max_steps {
        if r.uniform(Stream::Auxiliary, n - 1) < rho {
            ups += 1;
        }
        let pos = s + ups as f64 * psi - (n - ups) as f64 * eps;
        if pos <= 1e-12 * s.max(1.0) {
            return Some(n);
        }
    }
    None
}

pub fn dominating_walk(
    s: f64,
    rho: f64,
    psi: f64,
    eps: f64,
    n_runs: u64,
    base_seed: u64,
    max_steps: u64,
) -> Result<Vec<Option<u64>>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!(
            "rho must lie in [0, 1), got {rho}"
        )));
    }
    Ok((0..n_runs)
        .into_par_iter()
        .map(|r| {
            walk_hitting_time(
                s,
                rho,
                psi,
                eps,
                &RandomTape::new(run_seed(base_seed, 0, r)),
                max_steps,
            )
        })
        .collect())
}

/// Iterate stopping periods until `B <= B_*`, returning every report and the
/// sequence `D_n = log(B / B_*)` at the start of each period and at the end.
pub fn iterate_to_threshold(
    sim: &mut PotentialSim,
    c: &Constants,
    max_periods: usize,
) -> Result<(Vec<StoppingReport>, Vec<f64>)> {
    let mut reports = Vec::new();
    let mut d = vec![(functional_b(sim.profile(), c) / c.b_star).ln()];
    while functional_b(sim.profile(), c) > c.b_star && reports.len() < max_periods {
        let rep = run_to_stopping(sim, c)?;
        d.push((rep.b_after / c.b_star).ln());
        reports.push(rep);
    }
    Ok((reports, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ServiceKind;

    fn consts(lambda: f64) -> Constants {
        derive_constants(lambda, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn constants_examples() {
        let c = consts(0.5);
        assert_eq!(
            (c.eta, c.psi, c.eps, c.delta),
            (0.5, 4.0, 0.03125, 0.00390625)
        );
        let c = consts(0.9);
        assert!(
            (c.eta - 0.1).abs() < 1e-15
                && (c.psi - 20.0).abs() < 1e-12
                && (c.eps - 0.01125).abs() < 1e-15
        );
        assert!(consts(1e-9).eps < 1e-9);
        assert!(derive_constants(1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn functional_examples() {
        let c = consts(0.5);
        let p = ClearProfile::constant_circle(-2.0);
        assert_eq!(functional_n(&p), 2.0);
        assert!((functional_b(&p, &c) - 1.25).abs() < 1e-15);
        let z = ClearProfile::empty_circle();
        assert_eq!((functional_n(&z), functional_b(&z, &c)), (0.0, 0.0));
        let two = ClearProfile::circle_from_levels(vec![0.0, 0.5, 1.0], vec![-2.0, -0.5]).unwrap();
        assert_eq!(functional_n(&two), 2.0);
        assert!((functional_a(&two, 0.5) - 0.625).abs() < 1e-15);
        assert!((functional_b(&two, &c) - 0.875).abs() < 1e-15);
    }

    #[test]
    fn valley_examples() {
        assert_eq!(
            valley_set(&ClearProfile::constant_circle(-2.0)).unwrap(),
            ArcSet::Full
        );
        let two = ClearProfile::circle_from_levels(vec![0.0, 0.5, 1.0], vec![-2.0, -0.5]).unwrap();
        assert_eq!(valley_set(&two).unwrap(), ArcSet::Arc(Arc::open(0.0, 0.5)));
        assert_eq!(
            valley_set(&ClearProfile::empty_circle()).unwrap(),
            ArcSet::Empty
        );
        let wrapped =
            ClearProfile::circle_from_levels(vec![0.0, 0.2, 0.8, 1.0], vec![-3.0, -0.5, -3.0])
                .unwrap();
        match valley_set(&wrapped).unwrap() {
            ArcSet::Arc(a) => {
                assert!((a.start.value() - 0.8).abs() < 1e-15 && (a.length - 0.4).abs() < 1e-15)
            }
            other => panic!("{other}"),
        }
        let split = ClearProfile::circle_from_levels(
            vec![0.0, 0.25, 0.5, 0.75, 1.0],
            vec![-3.0, 0.0, -3.0, 0.0],
        )
        .unwrap();
        assert!(valley_set(&split).is_err());
    }

    fn model(lambda: f64) -> ModelConfig {
        ModelConfig::new(lambda, 1.0, 1.0, ServiceKind::Exponential).unwrap()
    }

    #[test]
    fn full_valley_makes_stops_coincide() {
        let c = consts(0.5);
        for seed in 0..50 {
            let mut sim =
                PotentialSim::new(model(0.5), &RandomTape::new(seed), constant_start(10.0, &c))
                    .unwrap();
            let rep = run_to_stopping(&mut sim, &c).unwrap();
            assert_ne!(rep.fired, StopKind::Valley, "seed {seed}");
            assert!(rep.checks.all(), "seed {seed}: {:?}", rep.checks);
        }
    }

    #[test]
    fn empty_valley_stops_immediately() {
        let c = consts(0.5);
        let st = PotentialState::moving(ClearProfile::empty_circle(), 0.0, 0.3);
        let mut sim = PotentialSim::new(model(0.5), &RandomTape::new(1), st).unwrap();
        let rep = run_to_stopping(&mut sim, &c).unwrap();
        assert_eq!(rep.fired, StopKind::Valley);
        assert_eq!(rep.elapsed, 0.0);
    }

    #[test]
    fn a_balance_recomputed_from_tape() {
        let c = consts(0.5);
        let tape = RandomTape::new(5);
        let mut sim = PotentialSim::new(model(0.5), &tape, constant_start(10.0, &c)).unwrap();
        let rep = run_to_stopping(&mut sim, &c).unwrap();
        // the logged marks are the tape's E_n
        for (n, e) in rep.marks.iter().enumerate() {
            assert_eq!(*e, tape.draw(Stream::Exploration, n as u64));
        }
        let removed: f64 = rep
            .marks
            .iter()
            .zip(&rep.removed)
            .map(|(e, m)| {
                assert!(m <= e);
                *m
            })
            .sum();
        let expect = rep.a_before + 0.5 * rep.elapsed - removed;
        assert!((rep.a_after - expect).abs() < 1e-9);
    }

    #[test]
    fn bound_value() {
        assert!((small_b_bound(1.0, 1.0) - 0.0519).abs() < 5e-5);
    }

    #[test]
    fn small_b_single_customer_at_server() {
        // with few arrivals the chance is at least P(T < 1)
        let lambda = 0.1;
        let c = derive_constants(lambda, 1.0, 1.0, 1.0).unwrap();
        let est = small_b_regeneration(&model(lambda), &c, 4000, 3, || {
            PotentialState::serving(ClearProfile::empty_circle(), 0.0)
        })
        .unwrap();
        assert!(est.ci_high >= 1.0 - (-1.0f64).exp(), "{est:?}");
    }

    #[test]
    fn walk_examples() {
        let tape = RandomTape::new(1);
        assert_eq!(
            walk_hitting_time(1.0, 0.0, 4.0, 0.03125, &tape, 1000),
            Some(32)
        );
        assert_eq!(
            walk_hitting_time(0.0, 0.5, 4.0, 0.03125, &tape, 1000),
            Some(0)
        );
        // σ <= 96 exactly when none of the first 32 steps goes up: one up-step
        // of 4 costs 128 extra down-steps
        let n = 10_000;
        let s = dominating_walk(1.0, 0.001, 4.0, 0.03125, n, 9, 100_000).unwrap();
        let within = s
            .iter()
            .filter(|x| matches!(x, Some(k) if (*k as f64) <= 3.0 / 0.03125))
            .count();
        let p = within as f64 / n as f64;
        let exact = 0.999f64.powi(32);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((p - exact).abs() < 4.0 * se, "{p} vs {exact}");
        assert!(dominating_walk(1.0, 1.0, 4.0, 0.1, 1, 0, 10).is_err());
    }

    #[test]
    fn iterated_periods_reach_threshold() {
        let c = derive_constants(0.5, 1.0, 1.0, 2.0).unwrap();
        let mut sim =
            PotentialSim::new(model(0.5), &RandomTape::new(11), constant_start(8.0, &c)).unwrap();
        let (reps, d) = iterate_to_threshold(&mut sim, &c, 10_000).unwrap();
        assert_eq!(d.len(), reps.len() + 1);
        assert!(*d.last().unwrap() <= 1e-12);
        assert!(reps.iter().all(|r| r.checks.all()));
    }

    #[test]
    fn b_star_choice() {
        let row = |b: f64, rho: f64| DriftRow {
            b_target: b,
            n_runs: 10,
            failures: 0,
            rho_hat: rho,
            ci_low: 0.0,
            ci_high: 0.0,
            mean_t: 0.0,
            mean_m: 0.0,
            mean_s: 0.0,
            mean_n_served: 0.0,
            check_violations: 0,
        };
        let rows = vec![row(10.0, 0.3), row(20.0, 0.15), row(40.0, 0.1)];
        assert_eq!(choose_b_star(&rows, 0.2), Some(20.0));
        assert_eq!(choose_b_star(&rows, 0.05), None);
    }
}
