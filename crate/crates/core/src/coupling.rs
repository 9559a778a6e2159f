//! Three processes on one tape: the circle process, its periodic lift to
//! the line, and the lift truncated to a constant outside the valley hull.
//! They agree up to explicit stopping times; [`run_coupled`] checks the
//! agreement event by event.

use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, EventRecord, ModelConfig, RandomTape};
use crate::error::{Error, Result};
use crate::geometry::{arc_contains, dist, grow_arc, wrap, Arc, ArcSet, CirclePoint, EPS};
use crate::lyapunov::valley_set;
use crate::potential_sim::{is_proper, ClearProfile, Piece, PotentialSim, PotentialState, Tail};

/// A proper circle state rotated so that the server sits at 0, with the
/// target's representative in `[-1/2, 1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub state: PotentialState,
    pub target_rep: Option<f64>,
}

pub fn normalize(state: &PotentialState) -> Result<Normalized> {
    if !state.profile.is_circle() {
        return Err(Error::Contract("normalize expects a circle state".into()));
    }
    if !is_proper(state).proper {
        return Err(Error::Contract("normalize expects a proper state".into()));
    }
    let s = state.server;
    let profile = if s == 0.0 {
        state.profile.clone()
    } else {
        state.profile.rotated(s)
    };
    let target = state.target.map(|c| wrap(c - s));
    let target_rep = target.map(|c| if c >= 0.5 { c - 1.0 } else { c });
    Ok(Normalized {
        state: PotentialState {
            profile,
            server: 0.0,
            target,
            regime: state.regime,
        },
        target_rep,
    })
}

/// `ū(x) = u(x mod 1)`.
pub fn periodic_extension(profile: &ClearProfile) -> Result<ClearProfile> {
    profile.periodic_extension()
}

/// Truncation of a periodic lift.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub profile: ClearProfile,
    pub l: f64,
    pub r: f64,
    /// `l` or `r` undefined (`Ū` missed `[-1, 0]` or `[0, 1]`); replaced by 0.
    pub degenerate: bool,
}

/// `ũ = ū` on `(l, r)` and `-N/2` outside.
pub fn truncate(line: &ClearProfile, n: f64) -> Result<Truncation> {
    if line.is_circle() {
        return Err(Error::Contract("truncate expects a line profile".into()));
    }
    let t = line.clock();
    // rounding slivers at the period ends do not move l or r
    let deep = |p: &Piece| p.w - t < -n / 2.0 && p.end - p.start > EPS;
    let left: Vec<Piece> = line.pieces_between(-1.0, 0.0);
    let right: Vec<Piece> = line.pieces_between(0.0, 1.0);
    let l = left.iter().find(|p| deep(p)).map(|p| p.start);
    let r = right.iter().rev().find(|p| deep(p)).map(|p| p.end);
    let degenerate = l.is_none() || r.is_none();
    let (l, r) = (l.unwrap_or(0.0), r.unwrap_or(0.0));
    let outside = t - n / 2.0;
    let mut pieces = line.pieces_between(l, r);
    if pieces.is_empty() {
        pieces.push(Piece {
            start: l,
            end: l,
            w: outside,
        });
    }
    let profile = ClearProfile::line_from_pieces(t, &pieces, Tail::Constant { w: outside })?;
    Ok(Truncation {
        profile,
        l,
        r,
        degenerate,
    })
}

/// Event index (number of lockstep events processed) and time of a
/// stopping time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub event: u64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CircleTimes {
    #[serde(rename = "T_o")]
    pub t_o: Option<Stamp>,
    #[serde(rename = "T_v")]
    pub t_v: Option<Stamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LineTimes {
    #[serde(rename = "T_1")]
    pub t_1: Option<Stamp>,
    #[serde(rename = "T_U")]
    pub t_u: Option<Stamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub event: u64,
    pub time: f64,
    /// `circle/line`, `line/truncated`, or `stopping-times`.
    pub pair: String,
    pub quantity: String,
    pub lhs: f64,
    pub rhs: f64,
}

/// Distances traveled by the three servers up to `T∨`, and the checks
/// relating them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TravelAccounting {
    pub v_circle: f64,
    pub v_line: f64,
    pub v_truncated: f64,
    pub m_circle: f64,
    /// `M v = V` on the circle.
    pub moving_ok: bool,
    /// `V(circle) = V(line) <= V(truncated)` at `T∨`.
    pub chain_ok: bool,
    /// At most 2 traveled between consecutive departures before `T_U`.
    pub per_departure_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledReport {
    pub seed: u64,
    pub t_circle: CircleTimes,
    pub t_line: LineTimes,
    pub identities_ok: bool,
    pub first_divergence: Option<Divergence>,
    pub degenerate: bool,
    pub shapes_ok: bool,
    pub events: u64,
    pub l: f64,
    pub r: f64,
    pub travel: TravelAccounting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledOptions {
    pub tolerance: f64,
    pub horizon: f64,
    pub max_events: u64,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions {
            tolerance: 1e-9,
            horizon: 1e3,
            max_events: 1_000_000,
        }
    }
}

/// Largest difference of `u` between a circle profile and a line profile
/// read through the window `[L, L + 1)`.
pub fn projection_gap(circle: &ClearProfile, line: &ClearProfile, left: f64) -> f64 {
    let mut xs: Vec<f64> = vec![left, left + 1.0];
    for p in circle.pieces() {
        xs.push(left + wrap(p.start - left));
    }
    for p in line.pieces_between(left, left + 1.0) {
        xs.push(p.start);
    }
    gap_on(
        &mut xs,
        |x| circle.u_at(wrap(x)),
        |x| line.w_at(x) - line.clock(),
    )
}

/// Largest difference of `u` between two line profiles on `(l, r)`.
pub fn window_gap(a: &ClearProfile, b: &ClearProfile, l: f64, r: f64) -> f64 {
    let mut xs: Vec<f64> = vec![l, r];
    for p in a
        .pieces_between(l, r)
        .iter()
        .chain(b.pieces_between(l, r).iter())
    {
        xs.push(p.start);
    }
    gap_on(
        &mut xs,
        |x| a.w_at(x) - a.clock(),
        |x| b.w_at(x) - b.clock(),
    )
}

fn gap_on(xs: &mut [f64], f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mut worst: f64 = 0.0;
    for w in xs.windows(2) {
        if w[1] - w[0] > 1e-9 {
            let m = 0.5 * (w[0] + w[1]);
            worst = worst.max((f(m) - g(m)).abs());
        }
    }
    worst
}

struct Tracker {
    report: CoupledReport,
    tol: f64,
}

impl Tracker {
    fn diverge(&mut self, event: u64, time: f64, pair: &str, quantity: &str, lhs: f64, rhs: f64) {
        if self.report.first_divergence.is_none() {
            self.report.first_divergence = Some(Divergence {
                event,
                time,
                pair: pair.into(),
                quantity: quantity.into(),
                lhs,
                rhs,
            });
        }
        self.report.identities_ok = false;
    }

    fn same_event(&mut self, k: u64, pair: &str, a: &EventRecord, b: &EventRecord) -> bool {
        if a.kind != b.kind {
            self.diverge(
                k,
                a.time,
                pair,
                "event kind",
                kind_code(a.kind),
                kind_code(b.kind),
            );
            return false;
        }
        if (a.time - b.time).abs() > self.tol {
            self.diverge(k, a.time, pair, "event time", a.time, b.time);
            return false;
        }
        true
    }
}

fn kind_code(k: EventKind) -> f64 {
    match k {
        EventKind::Arrival => 0.0,
        EventKind::ServiceStart => 1.0,
        EventKind::Departure => 2.0,
        EventKind::Regeneration => 3.0,
    }
}

/// Run the three coupled processes from a proper circle state.
pub fn run_coupled(
    config: &ModelConfig,
    tape: &RandomTape,
    initial: &PotentialState,
    opts: &CoupledOptions,
) -> Result<CoupledReport> {
    let norm = normalize(initial)?;
    let circle0 = norm.state.clone();
    let n = circle0.profile.depth();
    let valley = valley_set(&circle0.profile)?;
    let bar_profile = periodic_extension(&circle0.profile)?;
    let trunc = if n > 0.0 {
        truncate(&bar_profile, n)?
    } else {
        Truncation {
            profile: bar_profile.clone(),
            l: 0.0,
            r: 0.0,
            degenerate: true,
        }
    };
    let (l, r) = (trunc.l, trunc.r);
    let line_state = |p: ClearProfile| PotentialState {
        profile: p,
        server: 0.0,
        target: norm.target_rep,
        regime: circle0.regime,
    };
    let mut circle = PotentialSim::new(*config, tape, circle0.clone())?;
    let mut bar = PotentialSim::new(*config, tape, line_state(bar_profile))?;
    let mut tilde = PotentialSim::new(*config, tape, line_state(trunc.profile.clone()))?;

    let mut tr = Tracker {
        report: CoupledReport {
            seed: tape.seed(),
            t_circle: CircleTimes::default(),
            t_line: LineTimes::default(),
            identities_ok: true,
            first_divergence: None,
            degenerate: trunc.degenerate,
            shapes_ok: true,
            events: 0,
            l,
            r,
            travel: TravelAccounting {
                moving_ok: true,
                chain_ok: true,
                per_departure_ok: true,
                ..Default::default()
            },
        },
        tol: opts.tolerance,
    };
    let t_start = circle.clock();
    let stamp = |k: u64, t: f64| Some(Stamp { event: k, time: t });
    if matches!(valley, ArcSet::Empty) {
        tr.report.t_circle.t_v = stamp(0, t_start);
    }
    if trunc.degenerate {
        tr.report.t_line.t_u = stamp(0, t_start);
    }

    let mut g = ArcSet::Empty;
    let mut h: Option<(f64, f64)> = None;
    let mut trunc_traveled_at_departure = tilde.traveled();
    let mut k = 0u64;

    loop {
        let circle_needed = tr.report.t_circle.t_o.is_none() || tr.report.t_circle.t_v.is_none();
        let bar_needed = tr.report.t_line.t_1.is_none() || tr.report.t_line.t_u.is_none();
        let tilde_needed = tr.report.t_line.t_u.is_none();
        if !(circle_needed || bar_needed) || k >= opts.max_events {
            break;
        }
        let t_next = bar.next_event_time().min(if circle_needed {
            circle.next_event_time()
        } else {
            f64::INFINITY
        });
        if t_next > opts.horizon + t_start {
            break;
        }
        k += 1;
        let ev_c = if circle_needed { circle.step()? } else { None };
        let ev_b = if bar_needed { bar.step()? } else { None };
        let ev_t = if tilde_needed { tilde.step()? } else { None };

        let before_1 = tr.report.t_line.t_1.is_none();
        let before_u = tr.report.t_line.t_u.is_none();

        // revealed sets
        if let Some(eb) = ev_b {
            if eb.kind.is_departure() {
                let d = bar.last_departure().expect("departure");
                h = Some(match h {
                    None => d.cleared,
                    Some((lo, hi)) => (lo.min(d.cleared.0), hi.max(d.cleared.1)),
                });
                let (lo, hi) = h.unwrap();
                let s = bar.state().server;
                let c = bar.state().target.unwrap_or(s);
                if !(lo <= s.min(c) + 1e-12 && s.max(c) <= hi + 1e-12) {
                    tr.report.shapes_ok = false;
                }
                if before_1 && hi - lo >= 1.0 - 1e-12 {
                    tr.report.t_line.t_1 = stamp(k, eb.time);
                }
                if before_u && (lo <= l + 1e-12 || hi >= r - 1e-12) {
                    tr.report.t_line.t_u = stamp(k, eb.time);
                }
            }
        }
        if let Some(ec) = ev_c {
            if ec.kind.is_departure() {
                let d = circle.last_departure().expect("departure");
                let before = g.measure();
                g = if d.went_idle {
                    ArcSet::Full
                } else {
                    grow_arc(g, Arc::from_lifted(d.cleared.0, d.cleared.1))?
                };
                let ok = match g {
                    ArcSet::Full => true,
                    ArcSet::Empty => false,
                    ArcSet::Arc(a) => arc_contains(&a, CirclePoint::new(circle.state().server)),
                };
                if !ok || g.measure() + 1e-12 < before {
                    tr.report.shapes_ok = false;
                }
                if tr.report.t_circle.t_o.is_none() && g.is_full() {
                    tr.report.t_circle.t_o = stamp(k, ec.time);
                }
                if tr.report.t_circle.t_v.is_none() && g.covers(&valley) {
                    tr.report.t_circle.t_v = stamp(k, ec.time);
                    tr.report.travel.v_circle = circle.traveled();
                    tr.report.travel.m_circle = circle.split().moving;
                    tr.report.travel.v_line = bar.traveled();
                    tr.report.travel.v_truncated = tilde.traveled();
                }
            }
        }

        // per-departure travel bound on the truncated line before T_U
        if let Some(et) = ev_t {
            if et.kind.is_departure() && before_u {
                let v = tilde.traveled();
                if v - trunc_traveled_at_departure > 2.0 + 1e-9 {
                    tr.report.travel.per_departure_ok = false;
                }
                trunc_traveled_at_departure = v;
            }
        }

        // circle against the projected line, strictly before T_[1]
        if tr.report.t_line.t_1.is_none() {
            if let (Some(ec), Some(eb)) = (ev_c, ev_b) {
                if tr.same_event(k, "circle/line", &ec, &eb) {
                    let left = h.map_or(-0.5, |(lo, _)| lo);
                    let cs = CirclePoint::new(circle.state().server);
                    let bs = CirclePoint::new(bar.state().server);
                    if dist(cs, bs) > tr.tol {
                        tr.diverge(k, ec.time, "circle/line", "server", cs.value(), bs.value());
                    }
                    match (circle.state().target, bar.state().target) {
                        (Some(a), Some(b)) => {
                            if dist(CirclePoint::new(a), CirclePoint::new(b)) > tr.tol {
                                tr.diverge(k, ec.time, "circle/line", "target", a, wrap(b));
                            }
                        }
                        (None, None) => {}
                        (a, b) => tr.diverge(
                            k,
                            ec.time,
                            "circle/line",
                            "target",
                            a.unwrap_or(f64::NAN),
                            b.unwrap_or(f64::NAN),
                        ),
                    }
                    let gap = projection_gap(circle.profile(), bar.profile(), left);
                    if gap > tr.tol {
                        tr.diverge(k, ec.time, "circle/line", "potential", gap, 0.0);
                    }
                }
            }
        }

        // line against the truncated line, strictly before T_U
        if tr.report.t_line.t_u.is_none() {
            if let (Some(eb), Some(et)) = (ev_b, ev_t) {
                if tr.same_event(k, "line/truncated", &eb, &et) {
                    let (a, b) = (bar.state(), tilde.state());
                    if (a.server - b.server).abs() > tr.tol {
                        tr.diverge(k, eb.time, "line/truncated", "server", a.server, b.server);
                    }
                    let (ca, cb) = (a.target.unwrap_or(f64::NAN), b.target.unwrap_or(f64::NAN));
                    if (ca - cb).abs() > tr.tol {
                        tr.diverge(k, eb.time, "line/truncated", "target", ca, cb);
                    }
                    let gap = window_gap(bar.profile(), tilde.profile(), l, r);
                    if gap > tr.tol {
                        tr.diverge(k, eb.time, "line/truncated", "potential", gap, 0.0);
                    }
                }
            }
        }
        if !tr.report.identities_ok {
            break;
        }
    }
    tr.report.events = k;

    // stopping-time identities by event index; `None` stands for infinity
    let idx = |s: Option<Stamp>| s.map_or(u64::MAX, |s| s.event);
    let (t_o, t_v) = (idx(tr.report.t_circle.t_o), idx(tr.report.t_circle.t_v));
    let (t_1, t_u) = (idx(tr.report.t_line.t_1), idx(tr.report.t_line.t_u));
    if tr.report.identities_ok {
        if t_o != t_1 {
            tr.diverge(
                t_o.min(t_1),
                f64::NAN,
                "stopping-times",
                "T_o = T_1",
                t_o as f64,
                t_1 as f64,
            );
        } else if t_v != t_u.min(t_1) {
            tr.diverge(
                t_v.min(t_u),
                f64::NAN,
                "stopping-times",
                "T_v = min(T_U, T_1)",
                t_v as f64,
                t_u.min(t_1) as f64,
            );
        }
    }
    let tv = &mut tr.report.travel;
    if tr.report.t_circle.t_v.is_some() {
        tv.moving_ok =
            (tv.m_circle * config.speed - tv.v_circle).abs() <= 1e-9 * tv.v_circle.max(1.0);
        tv.chain_ok = (tv.v_circle - tv.v_line).abs() <= 1e-9 * tv.v_line.max(1.0)
            && tv.v_line <= tv.v_truncated + 1e-9;
    }
    Ok(tr.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ServiceKind;

    #[test]
    fn normalize_examples() {
        let prof =
            ClearProfile::circle_from_levels(vec![0.0, 0.3, 0.6, 1.0], vec![-1.0, 0.0, -1.0])
                .unwrap();
        let st = PotentialState::moving(prof, 0.3, 0.6);
        let n = normalize(&st).unwrap();
        assert_eq!(n.state.server, 0.0);
        assert!((n.target_rep.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(n.state.profile.u_at(0.1), 0.0);
        assert_eq!(n.state.profile.u_at(0.5), -1.0);
        let again = normalize(&n.state).unwrap();
        assert_eq!(again.state, n.state);

        let bimodal = ClearProfile::circle_from_levels(
            vec![0.0, 0.2, 0.4, 0.6, 1.0],
            vec![0.0, -1.0, 0.0, -1.0],
        )
        .unwrap();
        let st = PotentialState::moving(bimodal, 0.1, 0.5);
        assert!(normalize(&st).is_err());
        let back =
            ClearProfile::circle_from_levels(vec![0.0, 0.25, 0.85, 1.0], vec![0.0, -1.0, 0.0])
                .unwrap();
        let st = PotentialState::moving(back, 0.0, 0.9);
        assert!((normalize(&st).unwrap().target_rep.unwrap() + 0.1).abs() < 1e-12);
    }

    #[test]
    fn periodic_extension_examples() {
        let line = periodic_extension(&ClearProfile::constant_circle(-1.0)).unwrap();
        for x in [-7.3, -0.5, 0.0, 0.25, 13.9] {
            assert_eq!(line.u_at(x), -1.0);
        }
        let prof = ClearProfile::circle_from_levels(vec![0.0, 0.4, 1.0], vec![0.0, -2.0]).unwrap();
        let line = periodic_extension(&prof).unwrap();
        for k in 0..50 {
            let x = -3.0 + k as f64 * 0.137;
            assert_eq!(line.w_at(x), line.w_at(x + 1.0));
        }
        assert!(line.total_intensity(1.0).is_infinite());
    }

    #[test]
    fn truncate_constant() {
        let line = periodic_extension(&ClearProfile::constant_circle(-2.0)).unwrap();
        let t = truncate(&line, 2.0).unwrap();
        assert_eq!((t.l, t.r, t.degenerate), (-1.0, 1.0, false));
        assert_eq!(t.profile.u_at(0.5), -2.0);
        assert_eq!(t.profile.u_at(-0.99), -2.0);
        assert_eq!(t.profile.u_at(1.5), -1.0);
        assert_eq!(t.profile.u_at(-4.0), -1.0);
    }

    #[test]
    fn truncate_valley_arc() {
        // valley (0.4, 0.7) and its copy (-0.6, -0.3)
        let prof =
            ClearProfile::circle_from_levels(vec![0.0, 0.4, 0.7, 1.0], vec![0.0, -2.0, -0.5])
                .unwrap();
        let line = periodic_extension(&prof).unwrap();
        let t = truncate(&line, 2.0).unwrap();
        assert!((t.l + 0.6).abs() < 1e-12 && (t.r - 0.7).abs() < 1e-12);
        for k in 0..100 {
            let x = t.l + (k as f64 + 0.5) * (t.r - t.l) / 100.0;
            assert_eq!(t.profile.u_at(x), line.u_at(x));
        }
        assert_eq!(t.profile.u_at(0.9), -1.0);
    }

    fn cfg() -> ModelConfig {
        ModelConfig::new(0.5, 1.0, 1.0, ServiceKind::Exponential).unwrap()
    }

    #[test]
    fn coupled_runs_agree() {
        for seed in 0..100 {
            let st = PotentialState::serving(ClearProfile::constant_circle(-1.0), 0.0);
            let rep = run_coupled(
                &cfg(),
                &RandomTape::new(seed),
                &st,
                &CoupledOptions::default(),
            )
            .unwrap();
            assert!(rep.identities_ok, "seed {seed}: {:?}", rep.first_divergence);
            assert!(rep.shapes_ok);
            assert!(rep.t_circle.t_o.is_some());
            let t = rep.travel;
            assert!(t.moving_ok && t.chain_ok && t.per_departure_ok, "{t:?}");
        }
    }

    #[test]
    fn coupled_runs_from_valley_profile() {
        let prof =
            ClearProfile::circle_from_levels(vec![0.0, 0.3, 0.8, 1.0], vec![0.0, -3.0, -1.0])
                .unwrap();
        let cfg = ModelConfig::new(0.8, 1.0, 1.0, ServiceKind::Deterministic).unwrap();
        for seed in 0..100 {
            let st = PotentialState::serving(prof.clone(), 0.1);
            let rep = run_coupled(
                &cfg,
                &RandomTape::new(seed),
                &st,
                &CoupledOptions::default(),
            )
            .unwrap();
            assert!(rep.identities_ok, "seed {seed}: {:?}", rep.first_divergence);
            let (tv, t1, tu) = (
                rep.t_circle.t_v.unwrap().event,
                rep.t_line.t_1.unwrap().event,
                rep.t_line.t_u.map_or(u64::MAX, |s| s.event),
            );
            assert_eq!(tv, t1.min(tu));
        }
    }

    #[test]
    fn first_reveal_covering_the_circle() {
        // u ≡ -1, λ = 1: the circle empties exactly when E >= 1
        let cfg = ModelConfig::new(1.0, 2.0, 1.0, ServiceKind::Exponential).unwrap();
        let tape = RandomTape::new(4);
        let st = PotentialState::serving(ClearProfile::constant_circle(-1.0), 0.0);
        let mut circle = PotentialSim::new(cfg, &tape, st.clone()).unwrap();
        let rep = run_coupled(&cfg, &tape, &st, &CoupledOptions::default()).unwrap();
        assert!(rep.identities_ok);
        let mut k = 0;
        loop {
            k += 1;
            let ev = circle.step().unwrap().unwrap();
            if ev.kind == EventKind::Regeneration {
                break;
            }
        }
        assert_eq!(rep.t_circle.t_o.unwrap().event, k);
        assert_eq!(rep.t_line.t_1.unwrap().event, k);
    }

    #[test]
    fn short_horizon_keeps_identities() {
        let st = PotentialState::serving(ClearProfile::constant_circle(-3.0), 0.0);
        let opts = CoupledOptions {
            horizon: 0.5,
            ..Default::default()
        };
        let rep = run_coupled(&cfg(), &RandomTape::new(2), &st, &opts).unwrap();
        assert!(rep.identities_ok);
    }
}
