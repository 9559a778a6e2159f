//! Multi-scale block detector for the line process: α-unimodality, the
//! block parameters, per-block success events, strong transience, and the
//! renewal time `T_Z`.
//!
//! A block `j ≥ 1` starts with the server serving at `Z_j` and ends at the
//! service start at the `ℓ_j`-th customer found beyond the explored
//! frontier. Block 0 is the first service followed by the trip to the
//! nearest customer, whose side fixes the direction `σ`. A block whose
//! failure is already certain is cut short; the next epoch starts at the
//! following service start.

use serde::{Deserialize, Serialize};

use crate::coupling::{normalize, periodic_extension, truncate};
use crate::engine::{EventKind, ModelConfig, RandomTape, Regime};
use crate::error::{Error, Result};
use crate::geometry::EPS;
use crate::potential_sim::{Piece, PotentialSim, PotentialState, Space, Tail};

/// Slack for the floating comparisons of the block conditions.
pub const TOL: f64 = 1e-9;

/// `ℓ_j = ⌈54 j^{1/4}⌉`, computed in integers: the least `n` with
/// `n⁴ ≥ 54⁴ j`.
pub fn ell(j: u32) -> u64 {
    let target = 54u128.pow(4) * j as u128;
    let mut n = (54.0 * (j as f64).powf(0.25)).floor() as u128;
    n = n.saturating_sub(2);
    while n.pow(4) < target {
        n += 1;
    }
    n as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub j: u32,
    pub ell: Option<u64>,
    pub d: Option<f64>,
    pub q_minus: u64,
    pub q_plus: u64,
    pub x_minus: f64,
    pub x_plus: f64,
    pub m_minus: f64,
    pub m_plus: f64,
}

/// Parameters of block `j` given `N_j`, `N_{j+1}` and the speed. Block 0
/// ignores `n_j`; `X_j⁻` is the only entry that uses `n_next`.
pub fn block_params(j: u32, n_j: f64, n_next: f64, v: f64) -> BlockParams {
    if j == 0 {
        return BlockParams {
            j,
            ell: None,
            d: None,
            q_minus: 1,
            q_plus: 1,
            x_minus: 9.0 / n_next,
            x_plus: 36.0,
            m_minus: 1.0,
            m_plus: 2.0 + 36.0 / v,
        };
    }
    let l = ell(j);
    let lf = l as f64;
    let x_plus = 3.0 * lf / n_j;
    BlockParams {
        j,
        ell: Some(l),
        d: Some(lf / 36.0),
        q_minus: l,
        q_plus: l + 1,
        x_minus: (lf - 1.0) / (3.0 * n_next),
        x_plus,
        m_minus: lf / 2.0,
        m_plus: 2.0 * (l + 1) as f64 + 3.0 * x_plus / v,
    }
}

/// `Q⁺(j) = Q_0⁺ + … + Q_j⁺`.
pub fn q_plus_cumulative(j: u32) -> u64 {
    1 + (1..=j).map(|i| ell(i) + 1).sum::<u64>()
}

/// The truncated lift of a proper circle state: rotated so that the server
/// sits at 0, extended periodically, and made constant `-N/2` outside the
/// valley hull.
pub fn truncated_start(state: &PotentialState) -> Result<PotentialState> {
    let norm = normalize(state)?;
    let n = norm.state.profile.depth();
    let bar = periodic_extension(&norm.state.profile)?;
    let profile = if n > 0.0 {
        truncate(&bar, n)?.profile
    } else {
        bar
    };
    Ok(PotentialState {
        profile,
        server: 0.0,
        target: norm.target_rep,
        regime: norm.state.regime,
    })
}

/// Line state test: `u(S) = u(C)` is a maximum on the segment between
/// them, and moving away from `S` on either side every value stays below
/// `α` times the running infimum. Readings beyond the stored window cover
/// one tail piece (constant tail) or two periods (periodic tail).
pub fn alpha_unimodal_check(state: &PotentialState, alpha: f64) -> bool {
    let prof = &state.profile;
    let span = match prof.space() {
        Space::Circle => return false,
        Space::Line(Tail::Constant { .. }) => 1.0,
        Space::Line(Tail::Periodic { .. }) => 2.0,
    };
    let t = prof.clock();
    let s = state.server;
    let c = state.target.unwrap_or(s);
    let top = prof.u_at(s);
    if (prof.u_at(c) - top).abs() > TOL {
        return false;
    }
    if prof
        .pieces_between(s.min(c), s.max(c))
        .iter()
        .any(|p| p.end - p.start > EPS && p.w - t > top + TOL)
    {
        return false;
    }
    let (lo, hi) = prof.window();
    let right = prof.pieces_between(s, hi.max(s) + span);
    let left = prof.pieces_between(lo.min(s) - span, s);
    running_inf_ok(right.iter(), t, alpha) && running_inf_ok(left.iter().rev(), t, alpha)
}

fn running_inf_ok<'a>(pieces: impl Iterator<Item = &'a Piece>, t: f64, alpha: f64) -> bool {
    let mut m = f64::INFINITY;
    for p in pieces.filter(|p| p.end - p.start > EPS) {
        let u = p.w - t;
        m = m.min(u);
        if u > alpha * m + TOL {
            return false;
        }
    }
    true
}

/// Server position and cumulative distance at an event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub position: f64,
    pub traveled: f64,
}

/// `|S_t - S_0| ≥ V_0^t / 3` along the segment. Motion is linear between
/// points, so it is enough to check the points and that the displacement
/// never changes sign.
pub fn strong_transience_check(seg: &[TrajectoryPoint]) -> bool {
    let Some(first) = seg.first() else {
        return true;
    };
    let mut prev = 0.0f64;
    for p in seg {
        let d = p.position - first.position;
        let v = p.traveled - first.traveled;
        if d.abs() < v / 3.0 - 1e-12 * v.max(1.0) {
            return false;
        }
        if prev * d < 0.0 {
            return false;
        }
        if d != 0.0 {
            prev = d;
        }
    }
    true
}

/// `V_0^t ≤ factor · σ (S_t - S_0)` at every point.
pub fn traveled_bound_check(seg: &[TrajectoryPoint], sigma: f64, factor: f64) -> bool {
    let Some(first) = seg.first() else {
        return true;
    };
    seg.iter().all(|p| {
        let v = p.traveled - first.traveled;
        v <= factor * sigma * (p.position - first.position) + TOL
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedCondition {
    QLow,
    QHigh,
    XLow,
    XHigh,
    MLow,
    MHigh,
    /// `V > X + 4D/N`.
    Travel,
    /// `V ≠ X` in block 1.
    Straight,
    Confinement,
    /// Horizon reached before the block ended.
    Incomplete,
}

impl FailedCondition {
    pub fn as_str(self) -> &'static str {
        match self {
            FailedCondition::QLow => "q_low",
            FailedCondition::QHigh => "q_high",
            FailedCondition::XLow => "x_low",
            FailedCondition::XHigh => "x_high",
            FailedCondition::MLow => "m_low",
            FailedCondition::MHigh => "m_high",
            FailedCondition::Travel => "travel",
            FailedCondition::Straight => "straight",
            FailedCondition::Confinement => "confinement",
            FailedCondition::Incomplete => "incomplete",
        }
    }
}

/// One block. Times are relative to the epoch start, positions are
/// `σ`-oriented displacements from the epoch's starting position. Fields
/// that depend on the block end are `NaN` when it was cut short.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub epoch: u32,
    pub j: u32,
    pub l_j: f64,
    pub z_j: f64,
    pub n_j: f64,
    pub q_j: u64,
    pub x_j: f64,
    pub m_j: f64,
    pub v_j: f64,
    pub success: bool,
    pub failed: Option<FailedCondition>,
    /// The profile conditions implied by success of the previous block,
    /// checked at `L_j` (always true for `j = 0`).
    pub shape_ok: bool,
    pub params: BlockParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOptions {
    pub horizon: f64,
    pub alpha: f64,
    /// α-unimodality is checked at every epoch start and, when nonzero,
    /// at every `alpha_stride`-th event.
    pub alpha_stride: u64,
    pub max_events: u64,
}

impl Default for BlockOptions {
    fn default() -> Self {
        BlockOptions {
            horizon: 1e4,
            alpha: 0.5,
            alpha_stride: 0,
            max_events: 10_000_000,
        }
    }
}

/// Outcome of one epoch of block detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub epoch: u32,
    pub start_time: f64,
    pub start_departures: u64,
    pub sigma: f64,
    /// `S_{L_1}` equal to the starting position; `σ = +1` was used.
    pub sigma_flagged: bool,
    pub blocks: Vec<BlockRecord>,
    /// Index of the failed block.
    pub failed: Option<u32>,
    /// The epoch ran into the horizon (or the event cap).
    pub censored: bool,
    pub end_time: f64,
    pub trajectory: Vec<TrajectoryPoint>,
    pub alpha_violations: u64,
    pub events: u64,
}

struct Open {
    j: u32,
    start: f64,
    deps: u64,
    traveled: f64,
    z_prev: f64,
    z: f64,
    n: f64,
    params: BlockParams,
    records: u64,
    max_pos: f64,
    shape_ok: bool,
}

fn w_outward(sim: &PotentialSim, x: f64, sigma: f64) -> f64 {
    let p = sim.profile();
    if sigma > 0.0 {
        p.w_at(x)
    } else {
        p.w_left(x)
    }
}

/// The conditions on `u_{L_j}` implied by success of block `j-1`:
/// `u ≤ -N_j/2` beyond `Z_j`, and `u ≥ -M_{j-1}` on `(Z_j - X_{j-1}⁻, Z_j)`.
/// Slivers shorter than `EPS` left by rounding at cuts are skipped.
fn shape_conditions(
    sim: &PotentialSim,
    sigma: f64,
    n: f64,
    x_prev_minus: f64,
    m_prev: f64,
) -> bool {
    let prof = sim.profile();
    let t = prof.clock();
    let x = sim.state().server;
    let (lo, hi) = prof.window();
    let beyond = if sigma > 0.0 {
        prof.pieces_between(x, hi.max(x) + 1.0)
    } else {
        prof.pieces_between(lo.min(x) - 1.0, x)
    };
    let ahead_ok = beyond
        .iter()
        .all(|p| p.end - p.start <= EPS || p.w - t <= -n / 2.0 + TOL);
    let behind = if sigma > 0.0 {
        prof.pieces_between(x - x_prev_minus, x)
    } else {
        prof.pieces_between(x, x + x_prev_minus)
    };
    let behind_ok = behind
        .iter()
        .all(|p| p.end - p.start <= EPS || p.w - t >= -m_prev - TOL);
    ahead_ok && behind_ok
}

/// Run one epoch of block detection from the current (serving) state of a
/// line simulation. Stops after the first failure, at the service start
/// where the next epoch would begin, or at the horizon.
pub fn detect_blocks(sim: &mut PotentialSim, epoch: u32, opts: &BlockOptions) -> Result<Detection> {
    if sim.profile().is_circle() {
        return Err(Error::Contract("block detection runs on the line".into()));
    }
    if sim.state().regime != Regime::Serving {
        return Err(Error::Contract(
            "block detection starts in the serving regime".into(),
        ));
    }
    let v = sim.config().speed;
    let t_e = sim.clock();
    let s_e = sim.state().server;
    let point = |sim: &PotentialSim| TrajectoryPoint {
        time: sim.clock(),
        position: sim.state().server,
        traveled: sim.traveled(),
    };
    let mut det = Detection {
        epoch,
        start_time: t_e,
        start_departures: sim.departures(),
        sigma: 1.0,
        sigma_flagged: false,
        blocks: Vec::new(),
        failed: None,
        censored: false,
        end_time: t_e,
        trajectory: vec![point(sim)],
        alpha_violations: 0,
        events: 0,
    };
    if !alpha_unimodal_check(sim.state(), opts.alpha) {
        det.alpha_violations += 1;
    }
    let mut open = Open {
        j: 0,
        start: t_e,
        deps: sim.departures(),
        traveled: sim.traveled(),
        z_prev: 0.0,
        z: 0.0,
        n: t_e - sim.profile().w_at(s_e).max(sim.profile().w_left(s_e)),
        params: block_params(0, f64::NAN, f64::NAN, v),
        records: 0,
        max_pos: 0.0,
        shape_ok: true,
    };
    let mut sigma = 1.0f64;
    let mut frontier = 0.0f64;
    let mut pending_new = false;
    // set once failure is certain: wait for the next service start
    let mut failed_wait = false;

    loop {
        if det.events >= opts.max_events {
            det.censored = true;
            break;
        }
        if sim.next_event_time() > opts.horizon {
            sim.advance_to(opts.horizon);
            det.trajectory.push(point(sim));
            det.censored = true;
            break;
        }
        let Some(ev) = sim.step()? else {
            det.censored = true;
            break;
        };
        det.events += 1;
        det.trajectory.push(point(sim));
        if opts.alpha_stride > 0
            && det.events.is_multiple_of(opts.alpha_stride)
            && !alpha_unimodal_check(sim.state(), opts.alpha)
        {
            det.alpha_violations += 1;
        }
        let t = sim.clock();
        let pos = sigma * (sim.state().server - s_e);

        if failed_wait {
            if ev.kind == EventKind::ServiceStart {
                break;
            }
            continue;
        }

        match ev.kind {
            EventKind::Departure => {
                if open.j > 0 {
                    let info = sim.last_departure().expect("departure recorded");
                    let (a, b) = info.cleared;
                    let outer = if sigma > 0.0 { b - s_e } else { s_e - a };
                    let target = sigma * (sim.state().target.expect("moving has a target") - s_e);
                    pending_new = target > frontier;
                    frontier = frontier.max(outer);
                }
            }
            EventKind::ServiceStart if open.j == 0 => {
                let d = sim.state().server - s_e;
                sigma = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    det.sigma_flagged = true;
                    1.0
                };
                det.sigma = sigma;
                let info = sim.last_departure().expect("block 0 has a departure");
                let (a, b) = info.cleared;
                frontier = if sigma > 0.0 { b - s_e } else { s_e - a };
                let z1 = sigma * d;
                let n1 = t - w_outward(sim, sim.state().server, sigma);
                let params = block_params(0, open.n, n1, v);
                let m0 = t - open.start;
                let x0 = z1;
                let v0 = sim.traveled() - open.traveled;
                let q0 = sim.departures() - open.deps;
                let failed = if x0 < params.x_minus - TOL {
                    Some(FailedCondition::XLow)
                } else if x0 > params.x_plus + TOL {
                    Some(FailedCondition::XHigh)
                } else if m0 < params.m_minus - TOL {
                    Some(FailedCondition::MLow)
                } else if m0 > params.m_plus + TOL {
                    Some(FailedCondition::MHigh)
                } else {
                    None
                };
                det.blocks.push(BlockRecord {
                    epoch,
                    j: 0,
                    l_j: 0.0,
                    z_j: 0.0,
                    n_j: open.n,
                    q_j: q0,
                    x_j: x0,
                    m_j: m0,
                    v_j: v0,
                    success: failed.is_none(),
                    failed,
                    shape_ok: true,
                    params,
                });
                if failed.is_some() {
                    det.failed = Some(0);
                    break;
                }
                let p1 = block_params(1, n1, f64::NAN, v);
                let shape_ok = shape_conditions(sim, sigma, n1, params.x_minus, m0);
                open = Open {
                    j: 1,
                    start: t,
                    deps: sim.departures(),
                    traveled: sim.traveled(),
                    z_prev: 0.0,
                    z: z1,
                    n: n1,
                    params: p1,
                    records: 0,
                    max_pos: z1,
                    shape_ok,
                };
                continue;
            }
            EventKind::ServiceStart => {
                if pending_new {
                    open.records += 1;
                    pending_new = false;
                }
                if open.records == open.params.ell.expect("j ≥ 1") {
                    let z_next = pos;
                    let n_next = t - w_outward(sim, sim.state().server, sigma);
                    let params = block_params(open.j, open.n, n_next, v);
                    let q = sim.departures() - open.deps;
                    let x = z_next - open.z;
                    let m = t - open.start;
                    let vv = sim.traveled() - open.traveled;
                    let d = params.d.expect("j ≥ 1");
                    let failed = if q < params.q_minus {
                        Some(FailedCondition::QLow)
                    } else if q > params.q_plus {
                        Some(FailedCondition::QHigh)
                    } else if x < params.x_minus - TOL {
                        Some(FailedCondition::XLow)
                    } else if x > params.x_plus + TOL {
                        Some(FailedCondition::XHigh)
                    } else if m < params.m_minus - TOL {
                        Some(FailedCondition::MLow)
                    } else if m > params.m_plus + TOL {
                        Some(FailedCondition::MHigh)
                    } else if vv > x + 4.0 * d / open.n + TOL {
                        Some(FailedCondition::Travel)
                    } else if open.j == 1 && (vv - x).abs() > TOL {
                        Some(FailedCondition::Straight)
                    } else if open.max_pos >= z_next {
                        Some(FailedCondition::Confinement)
                    } else {
                        None
                    };
                    det.blocks.push(BlockRecord {
                        epoch,
                        j: open.j,
                        l_j: open.start - t_e,
                        z_j: open.z,
                        n_j: open.n,
                        q_j: q,
                        x_j: x,
                        m_j: m,
                        v_j: vv,
                        success: failed.is_none(),
                        failed,
                        shape_ok: open.shape_ok,
                        params,
                    });
                    if failed.is_some() {
                        det.failed = Some(open.j);
                        break;
                    }
                    let shape_ok = shape_conditions(sim, sigma, n_next, params.x_minus, m);
                    open = Open {
                        j: open.j + 1,
                        start: t,
                        deps: sim.departures(),
                        traveled: sim.traveled(),
                        z_prev: open.z,
                        z: z_next,
                        n: n_next,
                        params: block_params(open.j + 1, n_next, f64::NAN, v),
                        records: 0,
                        max_pos: z_next,
                        shape_ok,
                    };
                    continue;
                }
            }
            _ => {}
        }

        // failures already certain inside an open block
        if open.j == 0 {
            continue;
        }
        let p = open.params;
        let q = sim.departures() - open.deps;
        let vv = sim.traveled() - open.traveled;
        let d = p.d.expect("j ≥ 1");
        let failed = if q > p.q_plus {
            Some(FailedCondition::QHigh)
        } else if t - open.start > p.m_plus + TOL {
            Some(FailedCondition::MHigh)
        } else if pos <= open.z_prev {
            Some(FailedCondition::Confinement)
        } else if frontier - open.z > p.x_plus + TOL {
            Some(FailedCondition::XHigh)
        } else if vv > p.x_plus + 4.0 * d / open.n + TOL {
            Some(FailedCondition::Travel)
        } else if open.j == 1 && vv - (pos - open.z) > TOL {
            Some(FailedCondition::Straight)
        } else {
            None
        };
        open.max_pos = open.max_pos.max(pos);
        if let Some(f) = failed {
            det.blocks
                .push(cut_short(epoch, &open, t_e, q, vv, t, Some(f)));
            det.failed = Some(open.j);
            if ev.kind == EventKind::ServiceStart {
                break;
            }
            failed_wait = true;
        }
    }
    if det.censored && det.failed.is_none() {
        let q = sim.departures() - open.deps;
        let vv = sim.traveled() - open.traveled;
        det.blocks.push(cut_short(
            epoch,
            &open,
            t_e,
            q,
            vv,
            sim.clock(),
            Some(FailedCondition::Incomplete),
        ));
    }
    det.end_time = sim.clock();
    Ok(det)
}

fn cut_short(
    epoch: u32,
    open: &Open,
    t_e: f64,
    q: u64,
    vv: f64,
    t: f64,
    failed: Option<FailedCondition>,
) -> BlockRecord {
    BlockRecord {
        epoch,
        j: open.j,
        l_j: open.start - t_e,
        z_j: open.z,
        n_j: open.n,
        q_j: q,
        x_j: f64::NAN,
        m_j: t - open.start,
        v_j: vv,
        success: false,
        failed,
        shape_ok: open.shape_ok,
        params: open.params,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransienceOptions {
    pub blocks: BlockOptions,
    /// Successful blocks the unfailed final epoch needs for `T_Z` to count.
    pub min_blocks: u32,
}

impl Default for TransienceOptions {
    fn default() -> Self {
        TransienceOptions {
            blocks: BlockOptions::default(),
            min_blocks: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransienceReport {
    pub seed: u64,
    /// Failed epochs before the final one.
    pub renewals: u64,
    pub t_z: Option<f64>,
    /// Departures before `T_Z`.
    pub served_before_t_z: Option<u64>,
    /// `Q⁺(J^0) + … + Q⁺(J^K)`.
    pub served_bound: Option<u64>,
    /// `J^k`: one plus the index of the failed block, per failed epoch.
    pub failure_indices: Vec<u32>,
    /// No unfailed final epoch with enough successes within the horizon.
    pub censored: bool,
    pub final_successes: u32,
    pub sigma_flagged: u64,
    pub strongly_transient: Option<bool>,
    pub traveled_bound_ok: Option<bool>,
    /// Per block index: decided blocks and successes.
    pub attempts: Vec<u64>,
    pub successes: Vec<u64>,
    pub alpha_violations: u64,
    pub shape_violations: u64,
    pub blocks: Vec<BlockRecord>,
    pub end_time: f64,
    pub departures: u64,
}

/// Block detection with restarts: each failure starts a new epoch at the
/// next service start. `T_Z` is the start of the final epoch if it never
/// failed and completed at least `min_blocks` blocks.
pub fn renewal_transience(
    config: &ModelConfig,
    tape: &RandomTape,
    initial: &PotentialState,
    opts: &TransienceOptions,
) -> Result<TransienceReport> {
    if !alpha_unimodal_check(initial, opts.blocks.alpha) {
        return Err(Error::Contract(format!(
            "initial state is not {}-unimodal",
            opts.blocks.alpha
        )));
    }
    let mut sim = PotentialSim::new(*config, tape, initial.clone())?;
    let mut rep = TransienceReport {
        seed: tape.seed(),
        renewals: 0,
        t_z: None,
        served_before_t_z: None,
        served_bound: None,
        failure_indices: Vec::new(),
        censored: true,
        final_successes: 0,
        sigma_flagged: 0,
        strongly_transient: None,
        traveled_bound_ok: None,
        attempts: Vec::new(),
        successes: Vec::new(),
        alpha_violations: 0,
        shape_violations: 0,
        blocks: Vec::new(),
        end_time: 0.0,
        departures: 0,
    };
    let mut epoch = 0u32;
    let mut events = 0u64;
    let last = loop {
        let mut bo = opts.blocks;
        bo.max_events = opts.blocks.max_events.saturating_sub(events);
        let det = detect_blocks(&mut sim, epoch, &bo)?;
        events += det.events;
        rep.alpha_violations += det.alpha_violations;
        rep.sigma_flagged += det.sigma_flagged as u64;
        for b in &det.blocks {
            rep.shape_violations += !b.shape_ok as u64;
            if b.failed == Some(FailedCondition::Incomplete) {
                continue;
            }
            let j = b.j as usize;
            if rep.attempts.len() <= j {
                rep.attempts.resize(j + 1, 0);
                rep.successes.resize(j + 1, 0);
            }
            rep.attempts[j] += 1;
            rep.successes[j] += b.success as u64;
        }
        rep.blocks.extend_from_slice(&det.blocks);
        match det.failed {
            Some(j) if !det.censored => {
                rep.failure_indices.push(j + 1);
                epoch += 1;
            }
            _ => break det,
        }
    };
    rep.end_time = sim.clock();
    rep.departures = sim.departures();
    let successes = last.blocks.iter().filter(|b| b.success).count() as u32;
    rep.final_successes = successes;
    if last.failed.is_none() && successes >= opts.min_blocks {
        rep.censored = false;
        rep.renewals = rep.failure_indices.len() as u64;
        rep.t_z = Some(last.start_time);
        rep.served_before_t_z = Some(last.start_departures);
        rep.served_bound = Some(
            rep.failure_indices
                .iter()
                .map(|&j| q_plus_cumulative(j))
                .sum(),
        );
        rep.strongly_transient = Some(strong_transience_check(&last.trajectory));
        rep.traveled_bound_ok = Some(traveled_bound_check(
            &last.trajectory,
            last.sigma,
            5.0 / 3.0,
        ));
    } else {
        rep.renewals = rep.failure_indices.len() as u64;
    }
    Ok(rep)
}

/// Empirical per-block success rate with a Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub j: u32,
    pub attempts: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn success_rates(reports: &[TransienceReport], j_max: u32) -> Vec<SuccessRate> {
    (0..=j_max)
        .map(|j| {
            let idx = j as usize;
            let n: u64 = reports
                .iter()
                .map(|r| r.attempts.get(idx).copied().unwrap_or(0))
                .sum();
            let k: u64 = reports
                .iter()
                .map(|r| r.successes.get(idx).copied().unwrap_or(0))
                .sum();
            let (lo, hi) = crate::stats::wilson(k, n, crate::stats::Z95);
            SuccessRate {
                j,
                attempts: n,
                successes: k,
                p_hat: if n > 0 { k as f64 / n as f64 } else { f64::NAN },
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect()
}
