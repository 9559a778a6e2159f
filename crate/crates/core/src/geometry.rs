//! Arithmetic on the unit circle `R/Z`: points, clockwise and symmetric
//! distances, arcs, and monotone arc unions used to track revealed regions.
//!
//! Points are stored by their canonical representative in `[0, 1)`. Arcs are
//! stored as `(start, length)` so that the full circle has one unambiguous
//! encoding. Endpoint coincidence is decided with the absolute tolerance
//! [`EPS`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for endpoint coincidence.
pub const EPS: f64 = 1e-12;

/// Reduce any real to its representative in `[0, 1)`.
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can return exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of `R/Z`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub fn new(x: f64) -> Self {
        CirclePoint(wrap(x))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Translate by `delta` (positive is clockwise).
    pub fn shift(self, delta: f64) -> Self {
        CirclePoint::new(self.0 + delta)
    }
}

impl From<f64> for CirclePoint {
    fn from(x: f64) -> Self {
        CirclePoint::new(x)
    }
}

impl fmt::Display for CirclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Clockwise distance from `x` to `y`, in `[0, 1)`.
pub fn vec_dist(x: CirclePoint, y: CirclePoint) -> f64 {
    wrap(y.0 - x.0)
}

/// Symmetric distance on the circle, in `[0, 1/2]`.
pub fn dist(x: CirclePoint, y: CirclePoint) -> f64 {
    vec_dist(x, y).min(vec_dist(y, x))
}

/// An arc `[start, start + length]` traversed clockwise, with per-endpoint
/// closure flags. `length >= 1` is the full circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub start: CirclePoint,
    pub length: f64,
    pub closed_start: bool,
    pub closed_end: bool,
}

impl Arc {
    pub fn closed(start: f64, length: f64) -> Self {
        Arc {
            start: CirclePoint::new(start),
            length: length.clamp(0.0, 1.0),
            closed_start: true,
            closed_end: true,
        }
    }

    pub fn open(start: f64, length: f64) -> Self {
        Arc {
            start: CirclePoint::new(start),
            length: length.clamp(0.0, 1.0),
            closed_start: false,
            closed_end: false,
        }
    }

    /// Closed arc between two lifted reals `lo <= hi`.
    pub fn from_lifted(lo: f64, hi: f64) -> Self {
        Arc::closed(lo, hi - lo)
    }

    pub fn full() -> Self {
        Arc::closed(0.0, 1.0)
    }

    pub fn is_full(&self) -> bool {
        self.length >= 1.0 - EPS
    }

    pub fn end(&self) -> CirclePoint {
        self.start.shift(self.length)
    }
}

impl fmt::Display for Arc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.closed_start { '[' } else { '(' };
        let r = if self.closed_end { ']' } else { ')' };
        write!(f, "{l}{}, {}{r}", self.start, self.end())
    }
}

/// Membership test respecting closure flags and wraparound.
pub fn arc_contains(a: &Arc, x: CirclePoint) -> bool {
    if a.is_full() {
        return true;
    }
    let d = vec_dist(a.start, x);
    if d <= EPS || d >= 1.0 - EPS {
        return a.closed_start || (a.length <= EPS && a.closed_end);
    }
    if (d - a.length).abs() <= EPS {
        return a.closed_end;
    }
    d < a.length
}

/// A subset of the circle that is empty, one arc, or everything.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArcSet {
    Empty,
    Arc(Arc),
    Full,
}

impl ArcSet {
    pub fn is_full(&self) -> bool {
        matches!(self, ArcSet::Full)
    }

    pub fn measure(&self) -> f64 {
        match self {
            ArcSet::Empty => 0.0,
            ArcSet::Arc(a) => a.length,
            ArcSet::Full => 1.0,
        }
    }

    pub fn contains(&self, x: CirclePoint) -> bool {
        match self {
            ArcSet::Empty => false,
            ArcSet::Arc(a) => arc_contains(a, x),
            ArcSet::Full => true,
        }
    }

    /// Whether `self` covers `other` up to endpoints (used for `G ⊇ U`,
    /// where `U` is open: endpoints of `other` need not be covered).
    pub fn covers(&self, other: &ArcSet) -> bool {
        match (self, other) {
            (_, ArcSet::Empty) => true,
            (ArcSet::Full, _) => true,
            (ArcSet::Empty, _) => false,
            (ArcSet::Arc(_), ArcSet::Full) => false,
            (ArcSet::Arc(g), ArcSet::Arc(u)) => {
                let mut d = vec_dist(g.start, u.start);
                if d >= 1.0 - EPS {
                    d = 0.0;
                }
                d + u.length <= g.length + EPS
            }
        }
    }
}

impl fmt::Display for ArcSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArcSet::Empty => write!(f, "∅"),
            ArcSet::Arc(a) => write!(f, "{a}"),
            ArcSet::Full => write!(f, "R/Z"),
        }
    }
}

/// Union of the current revealed set with a newly cleared closed arc.
///
/// The dynamics guarantee that `added` overlaps or touches `current`; a
/// disjoint pair is reported as [`Error::DisjointUnion`].
pub fn grow_arc(current: ArcSet, added: Arc) -> Result<ArcSet> {
    if added.is_full() {
        return Ok(ArcSet::Full);
    }
    let cur = match current {
        ArcSet::Full => return Ok(ArcSet::Full),
        ArcSet::Empty => return Ok(ArcSet::Arc(added)),
        ArcSet::Arc(c) => c,
    };
    // work in coordinates where `cur` is [0, L]
    let l = cur.length;
    let mut a_s = vec_dist(cur.start, added.start);
    if a_s >= 1.0 - EPS {
        a_s = 0.0;
    }
    let a_e = a_s + added.length;
    let (lo, hi) = if a_s <= l + EPS {
        (0.0, l.max(a_e))
    } else if a_e >= 1.0 - EPS {
        (a_s, 1.0 + l.max(a_e - 1.0))
    } else {
        return Err(Error::DisjointUnion {
            current: cur.to_string(),
            added: added.to_string(),
        });
    };
    if hi - lo >= 1.0 - EPS {
        Ok(ArcSet::Full)
    } else {
        Ok(ArcSet::Arc(Arc::closed(cur.start.value() + lo, hi - lo)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> CirclePoint {
        CirclePoint::new(x)
    }

    #[test]
    fn clockwise_distance_examples() {
        assert!((vec_dist(p(0.2), p(0.7)) - 0.5).abs() < 1e-15);
        assert!((vec_dist(p(0.7), p(0.2)) - 0.5).abs() < 1e-15);
        assert_eq!(vec_dist(p(0.3), p(0.3)), 0.0);
    }

    #[test]
    fn symmetric_distance_examples() {
        assert!((dist(p(0.2), p(0.7)) - 0.5).abs() < 1e-15);
        assert!((dist(p(0.0), p(0.9)) - 0.1).abs() < 1e-15);
        assert_eq!(dist(p(0.4), p(0.4)), 0.0);
    }

    #[test]
    fn canonical_representative() {
        assert_eq!(p(1.25).value(), 0.25);
        assert!((p(-0.25).value() - 0.75).abs() < 1e-15);
        assert_eq!(p(-1e-18).value(), 0.0);
        assert_eq!(p(1.0).value(), 0.0);
    }

    #[test]
    fn arc_membership() {
        let a = Arc::closed(0.9, 0.2);
        assert!(arc_contains(&a, p(0.0)));
        assert!(!arc_contains(&a, p(0.5)));
        assert!(arc_contains(&a, p(0.9)));
        assert!(arc_contains(&a, p(0.1)));
        let o = Arc::open(0.9, 0.2);
        assert!(!arc_contains(&o, p(0.9)));
        assert!(!arc_contains(&o, p(0.1)));
        assert!(arc_contains(&o, p(0.95)));
        assert!(arc_contains(&Arc::full(), p(0.123)));
    }

    #[test]
    fn growth_examples() {
        let first = grow_arc(ArcSet::Empty, Arc::closed(0.4, 0.2)).unwrap();
        assert_eq!(first, ArcSet::Arc(Arc::closed(0.4, 0.2)));
        let merged = grow_arc(first, Arc::closed(0.55, 0.25)).unwrap();
        match merged {
            ArcSet::Arc(a) => {
                assert!((a.start.value() - 0.4).abs() < 1e-12);
                assert!((a.length - 0.4).abs() < 1e-12);
            }
            other => panic!("expected arc, got {other}"),
        }
        let cover = grow_arc(ArcSet::Arc(Arc::closed(0.1, 0.8)), Arc::closed(0.8, 0.4)).unwrap();
        assert_eq!(cover, ArcSet::Full);
    }

    #[test]
    fn growth_wrapping_from_behind() {
        // added arc ends where the current one begins
        let cur = ArcSet::Arc(Arc::closed(0.2, 0.3));
        let g = grow_arc(cur, Arc::closed(0.9, 0.35)).unwrap();
        match g {
            ArcSet::Arc(a) => {
                assert!((a.start.value() - 0.9).abs() < 1e-12);
                assert!((a.length - 0.6).abs() < 1e-12);
            }
            other => panic!("expected arc, got {other}"),
        }
    }

    #[test]
    fn disjoint_union_is_an_error() {
        let cur = ArcSet::Arc(Arc::closed(0.1, 0.1));
        assert!(matches!(
            grow_arc(cur, Arc::closed(0.5, 0.1)),
            Err(Error::DisjointUnion { .. })
        ));
    }

    #[test]
    fn covering_open_valley() {
        let g = ArcSet::Arc(Arc::closed(0.0, 0.5));
        assert!(g.covers(&ArcSet::Arc(Arc::open(0.0, 0.5))));
        assert!(g.covers(&ArcSet::Arc(Arc::open(0.1, 0.2))));
        assert!(!g.covers(&ArcSet::Arc(Arc::open(0.4, 0.2))));
        assert!(!g.covers(&ArcSet::Full));
        assert!(ArcSet::Full.covers(&ArcSet::Full));
        assert!(ArcSet::Empty.covers(&ArcSet::Empty));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn vec_dist_complements(x in 0.0f64..1.0, y in 0.0f64..1.0) {
                let (a, b) = (p(x), p(y));
                let s = vec_dist(a, b) + vec_dist(b, a);
                if dist(a, b) > 1e-9 {
                    prop_assert!((s - 1.0).abs() < 1e-12);
                } else {
                    prop_assert!(s < 1e-9 || (s - 1.0).abs() < 1e-9);
                }
            }

            #[test]
            fn dist_is_a_metric(x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
                let (a, b, c) = (p(x), p(y), p(z));
                prop_assert!(dist(a, b) <= 0.5);
                prop_assert!((dist(a, b) - dist(b, a)).abs() < 1e-15);
                prop_assert!(dist(a, c) <= dist(a, b) + dist(b, c) + 1e-12);
            }

            #[test]
            fn growth_is_monotone(
                s0 in 0.0f64..1.0, l0 in 0.0f64..0.6,
                off in -0.5f64..0.5, l1 in 0.0f64..0.6,
            ) {
                // an added arc that contains a point of the current arc
                let cur = Arc::closed(s0, l0);
                let anchor = s0 + l0 * 0.5;
                let added = Arc::closed(anchor - l1 * (0.5 + off).clamp(0.0, 1.0), l1);
                let g = grow_arc(ArcSet::Arc(cur), added).unwrap();
                prop_assert!(g.measure() + 1e-12 >= cur.length.max(added.length));
                for k in 0..=8 {
                    let t = k as f64 / 8.0;
                    prop_assert!(g.contains(cur.start.shift(t * cur.length)));
                    prop_assert!(g.contains(added.start.shift(t * added.length)));
                }
            }
        }
    }
}
