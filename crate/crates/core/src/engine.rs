//! Seeded randomness, service-time laws, model configuration, and the event
//! records shared by every simulator.
//!
//! Randomness comes from a [`RandomTape`]: a ChaCha8 keystream split into
//! independent streams, read by index. The n-th departure of any simulator
//! consumes `(E_n, U_n)` and the n-th service consumes `T_n`, so processes
//! driven by the same tape see the same marks at the same departure count
//! no matter how their other draws interleave.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent streams carved out of one tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stream {
    /// Unit-rate exponentials `E_n` used at departures.
    Exploration,
    /// Uniforms `U_n` used to pick the side of the new target.
    Selection,
    /// Uniforms mapped through the service law to give `T_n`.
    Service,
    /// Arrival inter-times (even indices) and positions (odd indices).
    Arrival,
    /// Anything else (walk steps, random initial states).
    Auxiliary,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Exploration => 0,
            Stream::Selection => 1,
            Stream::Service => 2,
            Stream::Arrival => 3,
            Stream::Auxiliary => 4,
        }
    }
}

const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * TWO_POW_M53
}

/// Mix a base seed with a replica index (splitmix64 finalizer).
pub fn derive_seed(base: u64, replica: u64) -> u64 {
    let mut z = base
        .wrapping_add(replica.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Immutable, indexable source of randomness.
#[derive(Debug, Clone)]
pub struct RandomTape {
    seed: u64,
    key: [u8; 32],
}

impl RandomTape {
    pub fn new(seed: u64) -> Self {
        let key = ChaCha8Rng::seed_from_u64(seed).get_seed();
        RandomTape { seed, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn raw(&self, stream: Stream, index: u64) -> u64 {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream.id());
        rng.set_word_pos(2 * index as u128);
        rng.next_u64()
    }

    /// The `index`-th uniform on `(0, 1)` of `stream`.
    pub fn uniform(&self, stream: Stream, index: u64) -> f64 {
        open_unit(self.raw(stream, index))
    }

    /// The `index`-th variate of `stream` under that stream's own law:
    /// unit exponential for [`Stream::Exploration`], uniform otherwise.
    pub fn draw(&self, stream: Stream, index: u64) -> f64 {
        let u = self.uniform(stream, index);
        match stream {
            Stream::Exploration => -u.ln(),
            _ => u,
        }
    }

    pub fn reader(&self) -> TapeReader {
        TapeReader::new(self)
    }
}

/// Cached sequential view of a tape. Values are identical to
/// [`RandomTape::draw`]; sequential reads avoid re-seeking the keystream.
#[derive(Debug, Clone)]
pub struct TapeReader {
    seed: u64,
    streams: [(ChaCha8Rng, u64); 5],
}

impl TapeReader {
    fn new(tape: &RandomTape) -> Self {
        let mk = |id: u64| {
            let mut rng = ChaCha8Rng::from_seed(tape.key);
            rng.set_stream(id);
            (rng, 0)
        };
        TapeReader {
            seed: tape.seed,
            streams: [mk(0), mk(1), mk(2), mk(3), mk(4)],
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self, stream: Stream, index: u64) -> f64 {
        let (rng, next) = &mut self.streams[stream.id() as usize];
        if *next != index {
            rng.set_word_pos(2 * index as u128);
        }
        *next = index + 1;
        open_unit(rng.next_u64())
    }

    pub fn draw(&mut self, stream: Stream, index: u64) -> f64 {
        let u = self.uniform(stream, index);
        match stream {
            Stream::Exploration => -u.ln(),
            _ => u,
        }
    }

    /// `E_n`.
    pub fn exploration(&mut self, n: u64) -> f64 {
        self.draw(Stream::Exploration, n)
    }

    /// `U_n`.
    pub fn selection(&mut self, n: u64) -> f64 {
        self.draw(Stream::Selection, n)
    }

    /// `T_n` under `law`.
    pub fn service(&mut self, law: &ServiceLaw, n: u64) -> f64 {
        law.quantile(self.uniform(Stream::Service, n))
    }

    /// Inter-arrival time and position of the `k`-th arrival.
    pub fn arrival(&mut self, lambda: f64, k: u64) -> (f64, f64) {
        let gap = -self.uniform(Stream::Arrival, 2 * k).ln() / lambda;
        let pos = self.uniform(Stream::Arrival, 2 * k + 1);
        (gap, pos)
    }
}

/// Distribution of a single service time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ServiceLaw {
    Exponential {
        rate: f64,
    },
    Deterministic {
        value: f64,
    },
    /// `tick * K` with `K` geometric on `{1, 2, ...}` of success probability `p`.
    Geometric {
        p: f64,
        tick: f64,
    },
}

impl ServiceLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            ServiceLaw::Exponential { rate } => 1.0 / rate,
            ServiceLaw::Deterministic { value } => value,
            ServiceLaw::Geometric { p, tick } => tick / p,
        }
    }

    /// Inverse-CDF map from a uniform on `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            ServiceLaw::Exponential { rate } => -u.ln() / rate,
            ServiceLaw::Deterministic { value } => value,
            ServiceLaw::Geometric { p, tick } => {
                if p >= 1.0 {
                    return tick;
                }
                let k = (u.ln() / (1.0 - p).ln()).ceil().max(1.0);
                tick * k
            }
        }
    }

    pub fn validate(&self, mu: f64) -> Result<()> {
        let ok = match *self {
            ServiceLaw::Exponential { rate } => rate > 0.0,
            ServiceLaw::Deterministic { value } => value > 0.0,
            ServiceLaw::Geometric { p, tick } => p > 0.0 && p <= 1.0 && tick > 0.0,
        };
        if !ok {
            return Err(Error::InvalidConfig(format!("bad service law {self:?}")));
        }
        let target = 1.0 / mu;
        if (self.mean() - target).abs() > 1e-12 * target.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "service mean {} does not match 1/mu = {}",
                self.mean(),
                target
            )));
        }
        Ok(())
    }
}

/// User-facing service family; the law is built from `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ServiceKind {
    Exponential,
    Deterministic,
    Geometric { p: f64 },
}

impl ServiceKind {
    pub fn law(self, mu: f64) -> ServiceLaw {
        match self {
            ServiceKind::Exponential => ServiceLaw::Exponential { rate: mu },
            ServiceKind::Deterministic => ServiceLaw::Deterministic { value: 1.0 / mu },
            ServiceKind::Geometric { p } => ServiceLaw::Geometric { p, tick: p / mu },
        }
    }
}

impl std::str::FromStr for ServiceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" | "exponential" => Ok(ServiceKind::Exponential),
            "det" | "deterministic" => Ok(ServiceKind::Deterministic),
            _ => {
                let p = s
                    .strip_prefix("geom:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown service law `{s}`")))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "geometric p must lie in (0, 1], got {p}"
                    )));
                }
                Ok(ServiceKind::Geometric { p })
            }
        }
    }
}

impl std::fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServiceKind::Exponential => write!(f, "exp"),
            ServiceKind::Deterministic => write!(f, "det"),
            ServiceKind::Geometric { p } => write!(f, "geom:{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Circle,
    Line,
}

/// Arrival rate, service rate, speed, and service law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lambda: f64,
    pub mu: f64,
    pub speed: f64,
    pub service: ServiceLaw,
}

impl ModelConfig {
    pub fn new(lambda: f64, mu: f64, speed: f64, kind: ServiceKind) -> Result<Self> {
        let c = ModelConfig {
            lambda,
            mu,
            speed,
            service: kind.law(mu),
        };
        c.validate()?;
        Ok(c)
    }

    /// `lambda < mu` is not required. `lambda = 0` is accepted so that
    /// arrival-free scenarios can be simulated.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mu must be > 0, got {}",
                self.mu
            )));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "speed must be > 0, got {}",
                self.speed
            )));
        }
        self.service.validate(self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Idle,
    Moving,
    Serving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrival,
    ServiceStart,
    Departure,
    /// A departure that leaves the system empty.
    Regeneration,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::ServiceStart => "service-start",
            EventKind::Departure => "departure",
            EventKind::Regeneration => "regeneration",
        }
    }

    pub fn is_departure(self) -> bool {
        matches!(self, EventKind::Departure | EventKind::Regeneration)
    }
}

/// One entry of an event log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub server: f64,
    pub target: Option<f64>,
    /// Known only to the explicit-customer simulator.
    pub customers: Option<usize>,
}

/// Time spent in each regime.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSplit {
    pub moving: f64,
    pub serving: f64,
    pub idle: f64,
}

impl TimeSplit {
    pub fn add(&mut self, regime: Regime, dt: f64) {
        match regime {
            Regime::Idle => self.idle += dt,
            Regime::Moving => self.moving += dt,
            Regime::Serving => self.serving += dt,
        }
    }

    pub fn total(&self) -> f64 {
        self.moving + self.serving + self.idle
    }

    pub fn since(&self, earlier: &TimeSplit) -> TimeSplit {
        TimeSplit {
            moving: self.moving - earlier.moving,
            serving: self.serving - earlier.serving,
            idle: self.idle - earlier.idle,
        }
    }
}
