//! Full-information simulation of the customer set, server position, and
//! target on the circle, for the greedy server and the clockwise polling
//! baseline.
//!
//! The simulation is event driven: travel completions are computed in closed
//! form from the constant speed, so there is no time step.

use serde::{Deserialize, Serialize};

use crate::engine::{
    EventKind, EventRecord, ModelConfig, RandomTape, Regime, Stream, TapeReader, TimeSplit,
};
use crate::error::{Error, Result};
use crate::geometry::{dist, vec_dist, CirclePoint, EPS};
use crate::potential_sim::ClearProfile;

/// Multiset of waiting customers, kept sorted by position in `[0, 1)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CustomerSet {
    positions: Vec<f64>,
}

impl CustomerSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_positions(mut positions: Vec<f64>) -> Self {
        for p in positions.iter_mut() {
            *p = CirclePoint::new(*p).value();
        }
        positions.sort_by(f64::total_cmp);
        CustomerSet { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn insert(&mut self, x: CirclePoint) {
        let i = self.positions.partition_point(|&p| p < x.value());
        self.positions.insert(i, x.value());
    }

    /// Remove one customer at `x`; returns false when none is there.
    pub fn remove(&mut self, x: CirclePoint) -> bool {
        let i = self.positions.partition_point(|&p| p < x.value());
        if i < self.positions.len() && self.positions[i] == x.value() {
            self.positions.remove(i);
            true
        } else {
            false
        }
    }

    /// First customer at clockwise distance `>= 0` from `s`.
    pub fn next_clockwise(&self, s: CirclePoint) -> Option<CirclePoint> {
        if self.positions.is_empty() {
            return None;
        }
        let i = self.positions.partition_point(|&p| p < s.value());
        let j = if i == self.positions.len() { 0 } else { i };
        Some(CirclePoint::new(self.positions[j]))
    }

    /// Nearest customer to `s`, ties broken clockwise.
    pub fn nearest(&self, s: CirclePoint) -> Option<CirclePoint> {
        let n = self.positions.len();
        if n == 0 {
            return None;
        }
        let i = self.positions.partition_point(|&p| p < s.value());
        let cw = CirclePoint::new(self.positions[i % n]);
        let ccw = CirclePoint::new(self.positions[(i + n - 1) % n]);
        let (dc, dcc) = (vec_dist(s, cw), vec_dist(ccw, s));
        // ties within EPS go clockwise
        if dcc < dc - EPS {
            Some(ccw)
        } else {
            Some(cw)
        }
    }
}

/// Regime, server position, and target (`None` is the empty marker).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub regime: Regime,
    pub server: CirclePoint,
    pub target: Option<CirclePoint>,
}

impl ServerState {
    pub fn idle_at(x: f64) -> Self {
        ServerState {
            regime: Regime::Idle,
            server: CirclePoint::new(x),
            target: None,
        }
    }

    pub fn is_consistent(&self) -> bool {
        match self.regime {
            Regime::Idle => self.target.is_none(),
            Regime::Serving => self.target == Some(self.server),
            Regime::Moving => true,
        }
    }
}

/// Right derivative of the greedy server position.
pub fn velocity(s: CirclePoint, c: Option<CirclePoint>, v: f64) -> f64 {
    match c {
        None => 0.0,
        Some(c) if c == s => 0.0,
        Some(c) => {
            if vec_dist(s, c) < vec_dist(c, s) {
                v
            } else {
                -v
            }
        }
    }
}

/// Greedy target choice: nearest customer, clockwise on exact ties.
pub fn select_target(s: CirclePoint, customers: &CustomerSet) -> Option<CirclePoint> {
    customers.nearest(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    /// Always travel clockwise. With `halt_when_empty` the server stops while
    /// the system is empty instead of continuing its sweep.
    Polling {
        halt_when_empty: bool,
    },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Polling { .. } => "polling",
        }
    }
}

/// Counters accumulated by a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub arrivals: u64,
    pub departures: u64,
    pub split: TimeSplit,
    pub traveled: f64,
}

/// The explicit-customer system.
#[derive(Debug, Clone)]
pub struct ExplicitSim {
    config: ModelConfig,
    strategy: Strategy,
    reader: TapeReader,
    clock: f64,
    state: ServerState,
    customers: CustomerSet,
    next_arrival: f64,
    service_end: f64,
    services: u64,
    counters: RunCounters,
}

impl ExplicitSim {
    pub fn new(
        config: ModelConfig,
        strategy: Strategy,
        tape: &RandomTape,
        server: f64,
        initial: CustomerSet,
    ) -> Result<Self> {
        config.validate()?;
        let mut sim = ExplicitSim {
            config,
            strategy,
            reader: tape.reader(),
            clock: 0.0,
            state: ServerState::idle_at(server),
            customers: initial,
            next_arrival: f64::INFINITY,
            service_end: f64::INFINITY,
            services: 0,
            counters: RunCounters::default(),
        };
        sim.schedule_arrival();
        if !sim.customers.is_empty() {
            sim.choose_target();
        } else if let Strategy::Polling {
            halt_when_empty: false,
        } = strategy
        {
            sim.state.regime = Regime::Moving;
        }
        Ok(sim)
    }

    /// Empty system with the server at `server`.
    pub fn empty(
        config: ModelConfig,
        strategy: Strategy,
        tape: &RandomTape,
        server: f64,
    ) -> Result<Self> {
        Self::new(config, strategy, tape, server, CustomerSet::new())
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn state(&self) -> ServerState {
        self.state
    }

    pub fn customers(&self) -> &CustomerSet {
        &self.customers
    }

    pub fn counters(&self) -> RunCounters {
        self.counters
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn schedule_arrival(&mut self) {
        if self.config.lambda > 0.0 {
            let (gap, _) = self
                .reader
                .arrival(self.config.lambda, self.counters.arrivals);
            self.next_arrival = self.clock + gap;
        } else {
            self.next_arrival = f64::INFINITY;
        }
    }

    fn start_service(&mut self) {
        let t = self.reader.service(&self.config.service, self.services);
        self.services += 1;
        self.service_end = self.clock + t;
        self.state.regime = Regime::Serving;
    }

    /// Pick a target after a departure, an arrival to an idle system, or at
    /// construction. Serves immediately when the target is at the server.
    fn choose_target(&mut self) {
        let s = self.state.server;
        let target = match self.strategy {
            Strategy::Greedy => select_target(s, &self.customers),
            Strategy::Polling { .. } => self.customers.next_clockwise(s),
        };
        match target {
            None => {
                self.state.target = None;
                self.state.regime = match self.strategy {
                    Strategy::Polling {
                        halt_when_empty: false,
                    } => Regime::Moving,
                    _ => Regime::Idle,
                };
            }
            Some(c) => {
                self.state.target = Some(c);
                if c == s {
                    self.state.target = Some(s);
                    self.start_service();
                } else {
                    self.state.regime = Regime::Moving;
                }
            }
        }
    }

    fn travel_time(&self) -> f64 {
        match (self.state.regime, self.state.target) {
            (Regime::Moving, Some(c)) => {
                let d = match self.strategy {
                    Strategy::Greedy => dist(self.state.server, c),
                    Strategy::Polling { .. } => vec_dist(self.state.server, c),
                };
                d / self.config.speed
            }
            _ => f64::INFINITY,
        }
    }

    fn advance(&mut self, to: f64) {
        let dt = to - self.clock;
        if dt <= 0.0 {
            return;
        }
        self.counters.split.add(self.state.regime, dt);
        if self.state.regime == Regime::Moving {
            let step = self.config.speed * dt;
            let dir = match self.strategy {
                Strategy::Greedy => velocity(self.state.server, self.state.target, 1.0),
                Strategy::Polling { .. } => 1.0,
            };
            self.state.server = self.state.server.shift(dir * step);
            self.counters.traveled += step;
        }
        self.clock = to;
    }

    fn record(&self, kind: EventKind) -> EventRecord {
        EventRecord {
            time: self.clock,
            kind,
            server: self.state.server.value(),
            target: self.state.target.map(|c| c.value()),
            customers: Some(self.customers.len()),
        }
    }

    /// Time of the next event, or infinity if nothing will ever happen.
    pub fn next_event_time(&self) -> f64 {
        let t_serv = if self.state.regime == Regime::Serving {
            self.service_end
        } else {
            f64::INFINITY
        };
        let t_travel = self.clock + self.travel_time();
        t_serv.min(t_travel).min(self.next_arrival)
    }

    /// Advance to the next event and apply it. Returns `None` when no event
    /// can ever occur (idle with no arrivals).
    ///
    /// Departures win exact ties with arrivals; service starts win ties with
    /// arrivals as well.
    pub fn step(&mut self) -> Option<EventRecord> {
        let t_serv = if self.state.regime == Regime::Serving {
            self.service_end
        } else {
            f64::INFINITY
        };
        let t_travel = self.clock + self.travel_time();
        let t_arr = self.next_arrival;
        let t = t_serv.min(t_travel).min(t_arr);
        if !t.is_finite() {
            return None;
        }
        self.advance(t);
        if t_serv <= t_travel && t_serv <= t_arr {
            Some(self.depart())
        } else if t_travel <= t_arr {
            // snap onto the target exactly
            if let Some(c) = self.state.target {
                self.state.server = c;
            }
            self.start_service();
            Some(self.record(EventKind::ServiceStart))
        } else {
            Some(self.arrive())
        }
    }

    fn depart(&mut self) -> EventRecord {
        let c = self.state.target.expect("serving implies a target");
        let removed = self.customers.remove(c);
        debug_assert!(removed, "served customer must be present");
        self.counters.departures += 1;
        self.service_end = f64::INFINITY;
        self.choose_target();
        let kind = if self.customers.is_empty() {
            EventKind::Regeneration
        } else {
            EventKind::Departure
        };
        self.record(kind)
    }

    fn arrive(&mut self) -> EventRecord {
        let (_, pos) = self
            .reader
            .arrival(self.config.lambda, self.counters.arrivals);
        self.counters.arrivals += 1;
        let z = CirclePoint::new(pos);
        self.customers.insert(z);
        match self.strategy {
            Strategy::Greedy => {
                if self.state.regime == Regime::Idle {
                    self.choose_target();
                }
            }
            Strategy::Polling { .. } => {
                if self.state.regime != Regime::Serving {
                    self.choose_target();
                }
            }
        }
        self.schedule_arrival();
        self.record(EventKind::Arrival)
    }
}

/// Customers drawn from the Poisson process of intensity `-λu` described by
/// a circle profile, using the auxiliary stream of `tape`: unit-rate gaps
/// are mapped through the cumulative intensity.
pub fn customers_from_potential(
    profile: &ClearProfile,
    lambda: f64,
    tape: &RandomTape,
) -> Result<CustomerSet> {
    if !profile.is_circle() {
        return Err(Error::Contract(
            "customers are sampled on the circle".into(),
        ));
    }
    let t = profile.clock();
    let mut positions = Vec::new();
    let mut r = tape.reader();
    let mut k = 0u64;
    let mut next = -r.uniform(Stream::Auxiliary, k).ln();
    let mut cum = 0.0;
    for p in profile.pieces() {
        let rate = lambda * (t - p.w);
        let mass = rate * (p.end - p.start);
        while rate > 0.0 && next <= cum + mass {
            positions.push(p.start + (next - cum) / rate);
            k += 1;
            next += -r.uniform(Stream::Auxiliary, k).ln();
        }
        cum += mass;
    }
    Ok(CustomerSet::from_positions(positions))
}

/// Outcome of [`run_until_regeneration`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenerationOutcome {
    /// First regeneration time; `None` when censored.
    pub tau: Option<f64>,
    pub censored: bool,
    /// Time the run stopped (tau or the horizon).
    pub end_time: f64,
    pub first_arrival: Option<f64>,
    pub served: u64,
    pub split: TimeSplit,
    pub traveled: f64,
    pub log: Vec<EventRecord>,
}

/// Simulate until the system first becomes empty or the horizon is reached.
pub fn run_until_regeneration(
    sim: &mut ExplicitSim,
    horizon: f64,
    keep_log: bool,
) -> RegenerationOutcome {
    let mut log = Vec::new();
    let mut first_arrival = None;
    loop {
        if sim.next_event_time() > horizon {
            let end = horizon.max(sim.clock());
            if end.is_finite() {
                sim.advance(end);
            }
            let c = sim.counters();
            return RegenerationOutcome {
                tau: None,
                censored: true,
                end_time: end,
                first_arrival,
                served: c.departures,
                split: c.split,
                traveled: c.traveled,
                log,
            };
        }
        let ev = sim.step().expect("finite next event time");
        if ev.kind == EventKind::Arrival && first_arrival.is_none() {
            first_arrival = Some(ev.time);
        }
        if keep_log {
            log.push(ev);
        }
        if ev.kind == EventKind::Regeneration {
            let c = sim.counters();
            return RegenerationOutcome {
                tau: Some(ev.time),
                censored: false,
                end_time: ev.time,
                first_arrival,
                served: c.departures,
                split: c.split,
                traveled: c.traveled,
                log,
            };
        }
    }
}

/// One polling step; the same machinery as [`ExplicitSim::step`] for a
/// polling simulator.
pub fn polling_step(sim: &mut ExplicitSim) -> Result<Option<EventRecord>> {
    match sim.strategy {
        Strategy::Polling { .. } => Ok(sim.step()),
        Strategy::Greedy => Err(Error::Contract("polling_step on a greedy simulator".into())),
    }
}
