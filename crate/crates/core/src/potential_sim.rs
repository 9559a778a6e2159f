//! The process seen from the server: a clear-epoch profile `w` with
//! potential `u = w - t`, the server position, and its target, on the circle
//! or on the line.
//!
//! The profile stores absolute clear epochs, so letting time pass is a clock
//! update. Departures find the next customer by scanning the cumulative
//! intensity outward from the server on both sides at once; the cumulative
//! integral is piecewise linear, so the root is exact per piece.

use serde::{Deserialize, Serialize};

use crate::engine::{
    EventKind, EventRecord, ModelConfig, RandomTape, Regime, TapeReader, TimeSplit,
};
use crate::error::{Error, Result};
use crate::explicit_sim::RegenerationOutcome;
use crate::geometry::{wrap, EPS};

/// How a line profile continues outside its stored window.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    /// Periodic copy of a circle profile given on `[0, 1)`.
    Periodic { cuts: Vec<f64>, ws: Vec<f64> },
    /// Constant clear epoch.
    Constant { w: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    Circle,
    Line(Tail),
}

/// A piece `[start, end)` with clear epoch `w`, in lifted coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub w: f64,
}

/// Piecewise-constant last-reveal epochs.
///
/// `cuts` has one more entry than `ws`; piece `i` is `[cuts[i], cuts[i+1])`.
/// On the circle the window is `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearProfile {
    space: Space,
    clock: f64,
    cuts: Vec<f64>,
    ws: Vec<f64>,
}

/// Result of the outward search at a departure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reveal {
    pub z: f64,
    /// Intensity just beyond `S - z`.
    pub a: f64,
    /// Intensity just beyond `S + z`.
    pub b: f64,
}

impl ClearProfile {
    /// Circle profile `u = level` everywhere at clock 0.
    pub fn constant_circle(level: f64) -> Self {
        ClearProfile {
            space: Space::Circle,
            clock: 0.0,
            cuts: vec![0.0, 1.0],
            ws: vec![level.min(0.0)],
        }
    }

    pub fn empty_circle() -> Self {
        Self::constant_circle(0.0)
    }

    /// Circle profile from `u` levels on consecutive pieces of `[0, 1)`.
    pub fn circle_from_levels(cuts: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        let ws = levels.to_vec();
        let p = ClearProfile {
            space: Space::Circle,
            clock: 0.0,
            cuts,
            ws,
        };
        p.validate()?;
        Ok(p.canonical())
    }

    /// Line profile with explicit window and tail.
    pub fn line(clock: f64, cuts: Vec<f64>, ws: Vec<f64>, tail: Tail) -> Result<Self> {
        let p = ClearProfile {
            space: Space::Line(tail),
            clock,
            cuts,
            ws,
        };
        p.validate()?;
        Ok(p.canonical())
    }

    /// Line profile built from pieces covering a contiguous window.
    pub fn line_from_pieces(clock: f64, pieces: &[Piece], tail: Tail) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::PotentialFormat("no pieces".into()));
        }
        let mut cuts = vec![pieces[0].start];
        let mut ws = Vec::with_capacity(pieces.len());
        for p in pieces {
            cuts.push(p.end);
            ws.push(p.w);
        }
        Self::line(clock, cuts, ws, tail)
    }

    fn validate(&self) -> Result<()> {
        if self.cuts.len() != self.ws.len() + 1 || self.ws.is_empty() {
            return Err(Error::PotentialFormat(
                "cuts and levels do not match".into(),
            ));
        }
        if self.cuts.windows(2).any(|c| !(c[1] >= c[0])) {
            return Err(Error::PotentialFormat(
                "segments must be ordered and contiguous".into(),
            ));
        }
        if matches!(self.space, Space::Circle)
            && ((self.cuts[0]).abs() > EPS || (self.cuts[self.cuts.len() - 1] - 1.0).abs() > EPS)
        {
            return Err(Error::PotentialFormat(
                "circle segments must cover [0, 1)".into(),
            ));
        }
        let tol = 1e-12 * self.clock.abs().max(1.0);
        let tail_ok = match &self.space {
            Space::Line(Tail::Constant { w }) => *w <= self.clock + tol,
            Space::Line(Tail::Periodic { ws, .. }) => ws.iter().all(|w| *w <= self.clock + tol),
            Space::Circle => true,
        };
        if !tail_ok || self.ws.iter().any(|w| !(*w <= self.clock + tol)) {
            return Err(Error::PotentialFormat(
                "clear epoch later than the clock".into(),
            ));
        }
        Ok(())
    }

    /// Merge equal neighbours and drop pieces shorter than `EPS`.
    fn canonical(mut self) -> Self {
        let mut cuts = vec![self.cuts[0]];
        let mut ws: Vec<f64> = Vec::with_capacity(self.ws.len());
        for i in 0..self.ws.len() {
            let (end, w) = (self.cuts[i + 1], self.ws[i]);
            let start = *cuts.last().unwrap();
            if end - start <= EPS && i + 1 < self.ws.len() {
                // absorbed by the next piece
                continue;
            }
            if let Some(&last) = ws.last() {
                if last == w {
                    *cuts.last_mut().unwrap() = end;
                    continue;
                }
            }
            ws.push(w);
            cuts.push(end);
        }
        if ws.is_empty() {
            ws.push(self.ws[self.ws.len() - 1]);
            cuts.push(self.cuts[self.cuts.len() - 1]);
        }
        if matches!(self.space, Space::Circle) {
            cuts[0] = 0.0;
            *cuts.last_mut().unwrap() = 1.0;
        }
        self.cuts = cuts;
        self.ws = ws;
        self
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.space, Space::Circle)
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Stored window `[lo, hi)`.
    pub fn window(&self) -> (f64, f64) {
        (self.cuts[0], self.cuts[self.cuts.len() - 1])
    }

    pub fn pieces(&self) -> Vec<Piece> {
        (0..self.ws.len())
            .map(|i| Piece {
                start: self.cuts[i],
                end: self.cuts[i + 1],
                w: self.ws[i],
            })
            .collect()
    }

    pub fn n_pieces(&self) -> usize {
        self.ws.len()
    }

    /// Let `dt >= 0` time units pass.
    pub fn evolve(&mut self, dt: f64) {
        debug_assert!(dt >= 0.0);
        self.clock += dt;
    }

    fn window_index(&self, x: f64) -> usize {
        // last i with cuts[i] <= x
        let i = self.cuts.partition_point(|&c| c <= x);
        i.saturating_sub(1).min(self.ws.len() - 1)
    }

    fn tail_w(&self, x: f64) -> f64 {
        match &self.space {
            Space::Circle => unreachable!("circle has no tail"),
            Space::Line(Tail::Constant { w }) => *w,
            Space::Line(Tail::Periodic { cuts, ws }) => {
                let y = wrap(x);
                let i = cuts
                    .partition_point(|&c| c <= y)
                    .saturating_sub(1)
                    .min(ws.len() - 1);
                ws[i]
            }
        }
    }

    /// Clear epoch of the piece containing `x` (right-continuous).
    pub fn w_at(&self, x: f64) -> f64 {
        let x = if self.is_circle() { wrap(x) } else { x };
        let (lo, hi) = self.window();
        if !self.is_circle() && (x < lo || x >= hi) {
            return self.tail_w(x);
        }
        self.ws[self.window_index(x)]
    }

    /// Clear epoch just to the left of `x`.
    pub fn w_left(&self, x: f64) -> f64 {
        let x = if self.is_circle() {
            let y = wrap(x);
            if y == 0.0 {
                1.0
            } else {
                y
            }
        } else {
            x
        };
        let (lo, hi) = self.window();
        if !self.is_circle() && (x <= lo || x > hi) {
            return self.tail_w(x - EPS);
        }
        let i = self.cuts.partition_point(|&c| c < x);
        self.ws[i.saturating_sub(1).min(self.ws.len() - 1)]
    }

    /// Upper semicontinuous potential: at a cut (within `EPS`) the larger of
    /// the two one-sided values.
    pub fn u_at(&self, x: f64) -> f64 {
        let w = self.w_at(x).max(self.w_at(x - EPS)).max(self.w_at(x + EPS));
        w.max(self.w_left(x)) - self.clock
    }

    /// Pieces covering `[a, b]` in lifted coordinates, clipped to it.
    pub fn pieces_between(&self, a: f64, b: f64) -> Vec<Piece> {
        let mut out = Vec::new();
        if b <= a {
            return out;
        }
        match &self.space {
            Space::Circle => periodic_pieces(&self.cuts, &self.ws, a, b, &mut out),
            Space::Line(tail) => {
                let (lo, hi) = self.window();
                if a < lo {
                    tail_pieces(tail, a, b.min(lo), &mut out);
                }
                let (s, e) = (a.max(lo), b.min(hi));
                if s < e {
                    let i0 = self.window_index(s);
                    for i in i0..self.ws.len() {
                        let (ps, pe) = (self.cuts[i].max(s), self.cuts[i + 1].min(e));
                        if ps >= e {
                            break;
                        }
                        if pe > ps {
                            out.push(Piece {
                                start: ps,
                                end: pe,
                                w: self.ws[i],
                            });
                        }
                    }
                }
                if b > hi {
                    tail_pieces(tail, a.max(hi), b, &mut out);
                }
            }
        }
        out
    }

    /// `A(u)`, the total intensity of unseen customers; infinite on the line.
    pub fn total_intensity(&self, lambda: f64) -> f64 {
        match self.space {
            Space::Circle => {
                let t = self.clock;
                (0..self.ws.len())
                    .map(|i| (t - self.ws[i]) * (self.cuts[i + 1] - self.cuts[i]))
                    .sum::<f64>()
                    * lambda
            }
            Space::Line(_) => f64::INFINITY,
        }
    }

    /// `N(u) = sup -u`.
    pub fn depth(&self) -> f64 {
        let mut m = self.ws.iter().cloned().fold(f64::INFINITY, f64::min);
        match &self.space {
            Space::Circle => {}
            Space::Line(Tail::Constant { w }) => m = m.min(*w),
            Space::Line(Tail::Periodic { ws, .. }) => {
                m = ws.iter().cloned().fold(m, f64::min);
            }
        }
        self.clock - m
    }

    /// Largest clear epoch, i.e. the maximum of `u` plus the clock.
    pub fn max_w(&self) -> f64 {
        self.ws.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Minimal `z` with `∫_{s-z}^{s+z} -λu = e`, and the boundary intensities.
    /// `None` on the circle when `e` is at least the total intensity.
    pub fn reveal(&self, s: f64, e: f64, lambda: f64) -> Result<Option<Reveal>> {
        let mut r: f64 = match self.space {
            Space::Circle => 0.5,
            Space::Line(_) => 1.0,
        };
        loop {
            let right = self.ray(s, r, true, lambda);
            let left = self.ray(s, r, false, lambda);
            if let Some(rev) = merge_rays(&left, &right, e) {
                return Ok(Some(rev));
            }
            if self.is_circle() {
                return Ok(None);
            }
            r *= 2.0;
            if r > 1e12 {
                return Err(Error::Exhausted);
            }
        }
    }

    fn ray(&self, s: f64, r: f64, rightward: bool, lambda: f64) -> Vec<(f64, f64)> {
        let t = self.clock;
        let to = |p: &Piece| (p.end - p.start, lambda * (t - p.w));
        if rightward {
            self.pieces_between(s, s + r).iter().map(to).collect()
        } else {
            self.pieces_between(s - r, s).iter().rev().map(to).collect()
        }
    }

    /// Set `w = clock` on the lifted interval `[a, b]`.
    pub fn clear(&mut self, a: f64, b: f64) {
        let t = self.clock;
        self.assign(a, b, t);
    }

    /// Set `w = value` on the lifted interval `[a, b]`.
    pub fn assign(&mut self, a: f64, b: f64, value: f64) {
        if b <= a {
            return;
        }
        match self.space {
            Space::Circle => {
                if b - a >= 1.0 - EPS {
                    self.cuts = vec![0.0, 1.0];
                    self.ws = vec![value];
                    return;
                }
                let s = wrap(a);
                let e = s + (b - a);
                if e <= 1.0 {
                    self.assign_window(s, e, value);
                } else {
                    self.assign_window(s, 1.0, value);
                    self.assign_window(0.0, e - 1.0, value);
                }
            }
            Space::Line(_) => {
                self.extend_to(a, b);
                self.assign_window(a, b, value);
            }
        }
        let me = std::mem::replace(self, ClearProfile::empty_circle());
        *self = me.canonical();
    }

    /// Make the stored window cover `[a, b]` by materializing the tail.
    pub fn extend_to(&mut self, a: f64, b: f64) {
        let tail = match &self.space {
            Space::Line(t) => t.clone(),
            Space::Circle => return,
        };
        let (lo, hi) = self.window();
        if a < lo {
            let mut extra = Vec::new();
            tail_pieces(&tail, a.floor().min(a), lo, &mut extra);
            let mut cuts: Vec<f64> = extra.iter().map(|p| p.start).collect();
            let mut ws: Vec<f64> = extra.iter().map(|p| p.w).collect();
            cuts.extend_from_slice(&self.cuts);
            ws.extend_from_slice(&self.ws);
            self.cuts = cuts;
            self.ws = ws;
        }
        if b > hi {
            let mut extra = Vec::new();
            tail_pieces(&tail, hi, b.ceil().max(b), &mut extra);
            for p in extra {
                self.ws.push(p.w);
                self.cuts.push(p.end);
            }
        }
    }

    fn snap(&self, x: f64) -> f64 {
        let i = self.cuts.partition_point(|&c| c < x);
        for j in [i.wrapping_sub(1), i] {
            if let Some(&c) = self.cuts.get(j) {
                if (c - x).abs() <= EPS {
                    return c;
                }
            }
        }
        x
    }

    fn split_at(&mut self, x: f64) -> usize {
        let x = self.snap(x);
        let i = self.cuts.partition_point(|&c| c < x);
        if i < self.cuts.len() && self.cuts[i] == x {
            return i;
        }
        // x lies strictly inside piece i-1
        let w = self.ws[i - 1];
        self.cuts.insert(i, x);
        self.ws.insert(i, w);
        i
    }

    fn assign_window(&mut self, a: f64, b: f64, value: f64) {
        let (lo, hi) = self.window();
        let (a, b) = (a.max(lo), b.min(hi));
        if b <= a {
            return;
        }
        let i = self.split_at(a);
        let j = self.split_at(b);
        if j <= i {
            return;
        }
        self.cuts.drain(i + 1..j);
        self.ws.drain(i..j);
        self.ws.insert(i, value);
    }

    /// Copy rotated so that `s` becomes the origin (circle only).
    pub fn rotated(&self, s: f64) -> ClearProfile {
        debug_assert!(self.is_circle());
        let pieces = self.pieces_between(s, s + 1.0);
        let mut cuts = vec![0.0];
        let mut ws = Vec::new();
        for p in &pieces {
            cuts.push(p.end - s);
            ws.push(p.w);
        }
        *cuts.last_mut().unwrap() = 1.0;
        ClearProfile {
            space: Space::Circle,
            clock: self.clock,
            cuts,
            ws,
        }
        .canonical()
    }

    /// The periodic extension of a circle profile to the line, with the
    /// window `[-1, 1)` materialized.
    pub fn periodic_extension(&self) -> Result<ClearProfile> {
        if !self.is_circle() {
            return Err(Error::Contract(
                "periodic extension of a line profile".into(),
            ));
        }
        let pieces = self.pieces_between(-1.0, 1.0);
        let tail = Tail::Periodic {
            cuts: self.cuts.clone(),
            ws: self.ws.clone(),
        };
        ClearProfile::line_from_pieces(self.clock, &pieces, tail)
    }

    /// Set the whole profile to `u ≡ 0`.
    pub fn clear_all(&mut self) {
        let t = self.clock;
        match &mut self.space {
            Space::Circle => {
                self.cuts = vec![0.0, 1.0];
                self.ws = vec![t];
            }
            Space::Line(tail) => {
                *tail = Tail::Constant { w: t };
                let (lo, hi) = (self.cuts[0], self.cuts[self.cuts.len() - 1]);
                self.cuts = vec![lo, hi];
                self.ws = vec![t];
            }
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.depth() <= 1e-12
    }

    pub fn to_file(&self) -> ProfileFile {
        let tail = match &self.space {
            Space::Circle => None,
            Space::Line(Tail::Constant { w }) => Some(TailFile::Constant { w: *w }),
            Space::Line(Tail::Periodic { cuts, ws }) => Some(TailFile::Periodic {
                segments: to_segments(cuts, ws),
            }),
        };
        ProfileFile {
            space: if self.is_circle() {
                "circle".into()
            } else {
                "line".into()
            },
            clock: self.clock,
            segments: to_segments(&self.cuts, &self.ws),
            tail,
            server: None,
            target: None,
        }
    }

    pub fn from_file(f: &ProfileFile) -> Result<Self> {
        let (cuts, ws) = from_segments(&f.segments)?;
        let space = match (f.space.as_str(), &f.tail) {
            ("circle", None) => Space::Circle,
            ("circle", Some(_)) => {
                return Err(Error::PotentialFormat("circle profile with a tail".into()))
            }
            ("line", Some(TailFile::Constant { w })) => Space::Line(Tail::Constant { w: *w }),
            ("line", Some(TailFile::Periodic { segments })) => {
                let (c, w) = from_segments(segments)?;
                if c[0].abs() > EPS || (c[c.len() - 1] - 1.0).abs() > EPS {
                    return Err(Error::PotentialFormat(
                        "periodic tail must cover [0, 1)".into(),
                    ));
                }
                Space::Line(Tail::Periodic { cuts: c, ws: w })
            }
            ("line", None) => {
                return Err(Error::PotentialFormat("line profile needs a tail".into()))
            }
            (other, _) => return Err(Error::PotentialFormat(format!("unknown space `{other}`"))),
        };
        let p = ClearProfile {
            space,
            clock: f.clock,
            cuts,
            ws,
        };
        p.validate()?;
        Ok(p.canonical())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}

fn periodic_pieces(cuts: &[f64], ws: &[f64], a: f64, b: f64, out: &mut Vec<Piece>) {
    let mut k = a.floor();
    while k < b {
        for i in 0..ws.len() {
            let (ps, pe) = ((k + cuts[i]).max(a), (k + cuts[i + 1]).min(b));
            if pe > ps {
                out.push(Piece {
                    start: ps,
                    end: pe,
                    w: ws[i],
                });
            }
        }
        k += 1.0;
    }
}

fn tail_pieces(tail: &Tail, a: f64, b: f64, out: &mut Vec<Piece>) {
    if b <= a {
        return;
    }
    match tail {
        Tail::Constant { w } => out.push(Piece {
            start: a,
            end: b,
            w: *w,
        }),
        Tail::Periodic { cuts, ws } => periodic_pieces(cuts, ws, a, b, out),
    }
}

/// Walk both rays outward at the same rate until the mass reaches `e`.
fn merge_rays(left: &[(f64, f64)], right: &[(f64, f64)], e: f64) -> Option<Reveal> {
    let (mut i, mut j) = (0usize, 0usize);
    let (mut rem_l, mut rem_r) = (left.first()?.0, right.first()?.0);
    let (mut z, mut cum) = (0.0f64, 0.0f64);
    loop {
        while rem_l <= 0.0 {
            i += 1;
            rem_l = left.get(i)?.0;
        }
        while rem_r <= 0.0 {
            j += 1;
            rem_r = right.get(j)?.0;
        }
        let (a, b) = (left[i].1, right[j].1);
        let step = rem_l.min(rem_r);
        let slope = a + b;
        if slope > 0.0 && cum + slope * step >= e {
            return Some(Reveal {
                z: z + (e - cum) / slope,
                a,
                b,
            });
        }
        cum += slope * step;
        z += step;
        rem_l -= step;
        rem_r -= step;
    }
}

fn to_segments(cuts: &[f64], ws: &[f64]) -> Vec<Piece> {
    (0..ws.len())
        .map(|i| Piece {
            start: cuts[i],
            end: cuts[i + 1],
            w: ws[i],
        })
        .collect()
}

fn from_segments(segs: &[Piece]) -> Result<(Vec<f64>, Vec<f64>)> {
    if segs.is_empty() {
        return Err(Error::PotentialFormat("no segments".into()));
    }
    let mut cuts = vec![segs[0].start];
    let mut ws = Vec::new();
    for (k, s) in segs.iter().enumerate() {
        if (s.start - cuts[k]).abs() > EPS || !(s.end > s.start) {
            return Err(Error::PotentialFormat(format!(
                "segment {k} is not contiguous"
            )));
        }
        cuts.push(s.end);
        ws.push(s.w);
    }
    Ok((cuts, ws))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TailFile {
    Periodic { segments: Vec<Piece> },
    Constant { w: f64 },
}

/// On-disk potential. `server` and `target` are optional; when absent the
/// server starts in service at the first maximum of `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub space: String,
    pub clock: f64,
    pub segments: Vec<Piece>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

/// `(u, S, C)` with the regime.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialState {
    pub profile: ClearProfile,
    /// On the circle a representative in `[0, 1)`; on the line a real.
    pub server: f64,
    pub target: Option<f64>,
    pub regime: Regime,
}

impl PotentialState {
    pub fn serving(profile: ClearProfile, at: f64) -> Self {
        let at = if profile.is_circle() { wrap(at) } else { at };
        PotentialState {
            profile,
            server: at,
            target: Some(at),
            regime: Regime::Serving,
        }
    }

    pub fn moving(profile: ClearProfile, from: f64, to: f64) -> Self {
        let c = profile.is_circle();
        let (s, t) = if c {
            (wrap(from), wrap(to))
        } else {
            (from, to)
        };
        PotentialState {
            profile,
            server: s,
            target: Some(t),
            regime: if s == t {
                Regime::Serving
            } else {
                Regime::Moving
            },
        }
    }

    pub fn empty_circle(at: f64) -> Self {
        PotentialState {
            profile: ClearProfile::empty_circle(),
            server: wrap(at),
            target: None,
            regime: Regime::Idle,
        }
    }

    /// State described by a potential file.
    pub fn from_file(f: &ProfileFile) -> Result<Self> {
        let profile = ClearProfile::from_file(f)?;
        let top = profile.max_w();
        let argmax = profile
            .pieces()
            .iter()
            .find(|p| p.w == top)
            .map(|p| p.start)
            .unwrap_or(0.0);
        let s = f.server.unwrap_or(argmax);
        Ok(match f.target {
            Some(c) => PotentialState::moving(profile, s, c),
            None => PotentialState::serving(profile, s),
        })
    }

    /// State described by a potential file given as JSON text.
    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }

    pub fn check(&self) -> Result<()> {
        match self.regime {
            Regime::Idle => {
                if self.target.is_some() || !self.profile.is_identically_zero() {
                    return Err(Error::Contract("idle requires no target and u ≡ 0".into()));
                }
            }
            Regime::Serving => {
                if self.target != Some(self.server) {
                    return Err(Error::Contract("serving requires S = C".into()));
                }
            }
            Regime::Moving => {
                if self.target.is_none() {
                    return Err(Error::Contract("moving requires a target".into()));
                }
            }
        }
        Ok(())
    }

    /// Signed travel from the server to the target along the chosen path.
    pub fn displacement_to_target(&self) -> f64 {
        match self.target {
            None => 0.0,
            Some(c) => {
                if self.profile.is_circle() {
                    let d = wrap(c - self.server);
                    // shorter way, antipodal ties go counter-clockwise
                    if d < 1.0 - d {
                        d
                    } else {
                        d - 1.0
                    }
                } else {
                    c - self.server
                }
            }
        }
    }
}

/// Verdict of [`is_proper`], with the positions of the minimum and maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Properness {
    pub proper: bool,
    pub x_min: f64,
    pub x_max: f64,
}

/// Circular unimodality with server and target at the maximum, or the empty
/// state.
pub fn is_proper(state: &PotentialState) -> Properness {
    let prof = &state.profile;
    let pieces = prof.pieces();
    // cyclic compression of equal neighbours
    let mut levels: Vec<(f64, f64)> = Vec::new();
    for p in &pieces {
        match levels.last() {
            Some(&(_, w)) if (w - p.w).abs() <= 1e-12 => {}
            _ => levels.push((p.start, p.w)),
        }
    }
    if levels.len() > 1 && (levels[0].1 - levels[levels.len() - 1].1).abs() <= 1e-12 {
        levels.pop();
    }
    let n = levels.len();
    let mut maxima = 0;
    let (mut x_min, mut x_max) = (levels[0].0, levels[0].0);
    let (mut lo, mut hi) = (levels[0].1, levels[0].1);
    for i in 0..n {
        let (x, w) = levels[i];
        if w < lo {
            lo = w;
            x_min = x;
        }
        if w > hi {
            hi = w;
            x_max = x;
        }
        if n >= 3 {
            let prev = levels[(i + n - 1) % n].1;
            let next = levels[(i + 1) % n].1;
            if w > prev && w > next {
                maxima += 1;
            }
        }
    }
    let unimodal = maxima <= 1;
    let top = hi - prof.clock();
    let at_top = |x: f64| (prof.u_at(x) - top).abs() <= 1e-9;
    let compatible = match (state.regime, state.target) {
        (Regime::Idle, None) => prof.is_identically_zero(),
        (_, Some(c)) => at_top(state.server) && at_top(c),
        _ => false,
    };
    Properness {
        proper: unimodal && compatible,
        x_min,
        x_max,
    }
}

/// What happened at a departure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepartureInfo {
    /// Departure index `n`; the marks used are `E_n`, `U_n`.
    pub index: u64,
    pub time: f64,
    pub e: f64,
    pub u: f64,
    /// `None` when the circle is emptied.
    pub reveal: Option<Reveal>,
    /// Cleared interval in lifted coordinates around the server.
    pub cleared: (f64, f64),
    pub went_idle: bool,
    /// Total intensity just before the departure (infinite on the line).
    pub a_before: f64,
    /// Intensity removed: `min(E, A)`.
    pub mass: f64,
}

/// Apply the departure transition to a serving state with marks `(e, u)`.
/// Does not touch the clock or draw any service time.
pub fn departure_transition(
    state: &mut PotentialState,
    e: f64,
    u: f64,
    lambda: f64,
) -> Result<(Option<Reveal>, (f64, f64), bool)> {
    if state.regime != Regime::Serving {
        return Err(Error::Contract(
            "departure outside the serving regime".into(),
        ));
    }
    let s = state.server;
    let prof = &mut state.profile;
    match prof.reveal(s, e, lambda)? {
        None => {
            prof.clear_all();
            state.target = None;
            state.regime = Regime::Idle;
            Ok((None, (s - 0.5, s + 0.5), true))
        }
        Some(rev) => {
            if !(rev.a + rev.b > 0.0) {
                return Err(Error::Contract(
                    "no intensity at the revealed boundary".into(),
                ));
            }
            let left = u < rev.a / (rev.a + rev.b);
            let c = if left { s - rev.z } else { s + rev.z };
            prof.clear(s - rev.z, s + rev.z);
            state.target = Some(if prof.is_circle() { wrap(c) } else { c });
            state.regime = Regime::Moving;
            Ok((Some(rev), (s - rev.z, s + rev.z), false))
        }
    }
}

/// Idle arrival at position `z`.
pub fn idle_arrival(state: &mut PotentialState, z: f64) -> Result<()> {
    if state.regime != Regime::Idle {
        return Err(Error::Contract(
            "arrival handled outside the idle regime".into(),
        ));
    }
    state.profile.clear_all();
    let z = if state.profile.is_circle() {
        wrap(z)
    } else {
        z
    };
    state.target = Some(z);
    state.regime = if z == state.server {
        Regime::Serving
    } else {
        Regime::Moving
    };
    Ok(())
}

/// Simulator of the potential process driven by a [`RandomTape`].
#[derive(Debug, Clone)]
pub struct PotentialSim {
    config: ModelConfig,
    reader: TapeReader,
    state: PotentialState,
    service_end: f64,
    next_arrival: f64,
    departures: u64,
    services: u64,
    arrivals: u64,
    split: TimeSplit,
    traveled: f64,
    last_departure: Option<DepartureInfo>,
}

impl PotentialSim {
    pub fn new(config: ModelConfig, tape: &RandomTape, state: PotentialState) -> Result<Self> {
        config.validate()?;
        state.check()?;
        let mut sim = PotentialSim {
            config,
            reader: tape.reader(),
            state,
            service_end: f64::INFINITY,
            next_arrival: f64::INFINITY,
            departures: 0,
            services: 0,
            arrivals: 0,
            split: TimeSplit::default(),
            traveled: 0.0,
            last_departure: None,
        };
        match sim.state.regime {
            Regime::Serving => sim.start_service(),
            Regime::Idle => sim.schedule_arrival(),
            Regime::Moving => {}
        }
        Ok(sim)
    }

    pub fn state(&self) -> &PotentialState {
        &self.state
    }

    pub fn profile(&self) -> &ClearProfile {
        &self.state.profile
    }

    pub fn clock(&self) -> f64 {
        self.state.profile.clock()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn departures(&self) -> u64 {
        self.departures
    }

    pub fn split(&self) -> TimeSplit {
        self.split
    }

    /// Total distance traveled so far.
    pub fn traveled(&self) -> f64 {
        self.traveled
    }

    pub fn last_departure(&self) -> Option<&DepartureInfo> {
        self.last_departure.as_ref()
    }

    /// Remaining service time, if serving.
    pub fn residual_service(&self) -> Option<f64> {
        (self.state.regime == Regime::Serving).then(|| self.service_end - self.clock())
    }

    fn start_service(&mut self) {
        let t = self.reader.service(&self.config.service, self.services);
        self.services += 1;
        self.service_end = self.clock() + t;
        self.state.regime = Regime::Serving;
    }

    fn schedule_arrival(&mut self) {
        self.next_arrival = if self.config.lambda > 0.0 {
            let (gap, _) = self.reader.arrival(self.config.lambda, self.arrivals);
            self.clock() + gap
        } else {
            f64::INFINITY
        };
    }

    pub fn next_event_time(&self) -> f64 {
        match self.state.regime {
            Regime::Serving => self.service_end,
            Regime::Idle => self.next_arrival,
            Regime::Moving => {
                self.clock() + self.state.displacement_to_target().abs() / self.config.speed
            }
        }
    }

    /// Let time run to `t` without crossing an event.
    pub fn advance_to(&mut self, t: f64) {
        let dt = t - self.clock();
        if dt <= 0.0 {
            return;
        }
        self.split.add(self.state.regime, dt);
        match self.state.regime {
            Regime::Moving => {
                let d = self.state.displacement_to_target();
                let step = (self.config.speed * dt).min(d.abs());
                let s = self.state.server + step * d.signum();
                self.state.server = if self.state.profile.is_circle() {
                    wrap(s)
                } else {
                    s
                };
                self.traveled += step;
                self.state.profile.evolve(dt);
            }
            Regime::Serving => self.state.profile.evolve(dt),
            Regime::Idle => {
                self.state.profile.evolve(dt);
                self.state.profile.clear_all();
            }
        }
    }

    fn record(&self, kind: EventKind) -> EventRecord {
        EventRecord {
            time: self.clock(),
            kind,
            server: self.state.server,
            target: self.state.target,
            customers: None,
        }
    }

    /// Advance to the next event and apply it; `Ok(None)` when idle forever.
    pub fn step(&mut self) -> Result<Option<EventRecord>> {
        let t = self.next_event_time();
        if !t.is_finite() {
            return Ok(None);
        }
        let before = self.state.regime;
        let d = self.state.displacement_to_target().abs();
        let traveled = self.traveled;
        self.advance_to(t);
        match before {
            Regime::Moving => {
                // land exactly on the target
                self.traveled = traveled + d;
                self.state.server = self.state.target.expect("moving has a target");
                self.start_service();
                Ok(Some(self.record(EventKind::ServiceStart)))
            }
            Regime::Serving => {
                let n = self.departures;
                let e = self.reader.exploration(n);
                let u = self.reader.selection(n);
                let lambda = self.config.lambda;
                let a_before = self.state.profile.total_intensity(lambda);
                let (reveal, cleared, went_idle) =
                    departure_transition(&mut self.state, e, u, lambda)?;
                self.departures += 1;
                self.service_end = f64::INFINITY;
                self.last_departure = Some(DepartureInfo {
                    index: n,
                    time: self.clock(),
                    e,
                    u,
                    reveal,
                    cleared,
                    went_idle,
                    a_before,
                    mass: if went_idle { a_before } else { e },
                });
                if went_idle {
                    self.schedule_arrival();
                    Ok(Some(self.record(EventKind::Regeneration)))
                } else {
                    Ok(Some(self.record(EventKind::Departure)))
                }
            }
            Regime::Idle => {
                let (_, pos) = self.reader.arrival(self.config.lambda, self.arrivals);
                self.arrivals += 1;
                self.next_arrival = f64::INFINITY;
                idle_arrival(&mut self.state, pos)?;
                if self.state.regime == Regime::Serving {
                    self.start_service();
                }
                Ok(Some(self.record(EventKind::Arrival)))
            }
        }
    }
}

/// Potential-process counterpart of
/// [`run_until_regeneration`](crate::explicit_sim::run_until_regeneration).
pub fn run_potential_until_regeneration(
    sim: &mut PotentialSim,
    horizon: f64,
    keep_log: bool,
) -> Result<RegenerationOutcome> {
    let mut log = Vec::new();
    let mut first_arrival = None;
    loop {
        if sim.next_event_time() > horizon {
            let end = horizon.max(sim.clock());
            if end.is_finite() {
                sim.advance_to(end);
            }
            return Ok(RegenerationOutcome {
                tau: None,
                censored: true,
                end_time: end,
                first_arrival,
                served: sim.departures(),
                split: sim.split(),
                traveled: sim.traveled(),
                log,
            });
        }
        let Some(ev) = sim.step()? else {
            return Err(Error::Contract(
                "no further events before the horizon".into(),
            ));
        };
        if ev.kind == EventKind::Arrival && first_arrival.is_none() {
            first_arrival = Some(ev.time);
        }
        if keep_log {
            log.push(ev);
        }
        if ev.kind == EventKind::Regeneration {
            return Ok(RegenerationOutcome {
                tau: Some(ev.time),
                censored: false,
                end_time: ev.time,
                first_arrival,
                served: sim.departures(),
                split: sim.split(),
                traveled: sim.traveled(),
                log,
            });
        }
    }
}
