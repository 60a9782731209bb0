//! Dubins paths: shortest curvature-bounded paths between oriented points,
//! built from the six CSC/CCC words.

use std::f64::consts::TAU;

use masim_core::env::InputBound;
use serde::{Deserialize, Serialize};

use super::MpcError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Turn {
    Left,
    Straight,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Word {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Rlr,
    Lrl,
}

impl Word {
    pub const ALL: [Word; 6] = [Word::Lsl, Word::Rsr, Word::Lsr, Word::Rsl, Word::Rlr, Word::Lrl];

    pub fn turns(self) -> [Turn; 3] {
        use Turn::*;
        match self {
            Word::Lsl => [Left, Straight, Left],
            Word::Rsr => [Right, Straight, Right],
            Word::Lsr => [Left, Straight, Right],
            Word::Rsl => [Right, Straight, Left],
            Word::Rlr => [Right, Left, Right],
            Word::Lrl => [Left, Right, Left],
        }
    }
}

/// Rounding slack on the squared straight length of a zero-length segment.
const P2_TOL: f64 = 1e-9;

/// Angle in `[0, 2pi)`; values a rounding error below 2pi map to 0.
fn m2pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if TAU - r < 1e-9 {
        0.0
    } else {
        r
    }
}

/// Normalized segment lengths `(t, p, q)` of one word for a unit turning
/// radius, or `None` when the word does not connect the two poses.
pub fn word_lengths(word: Word, alpha: f64, beta: f64, d: f64) -> Option<[f64; 3]> {
    let (sa, sb, ca, cb) = (alpha.sin(), beta.sin(), alpha.cos(), beta.cos());
    let cab = (alpha - beta).cos();
    match word {
        Word::Lsl => {
            let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sa - sb);
            if p2 < -P2_TOL {
                return None;
            }
            let p2 = p2.max(0.0);
            let tmp = (cb - ca).atan2(d + sa - sb);
            Some([m2pi(-alpha + tmp), p2.sqrt(), m2pi(beta - tmp)])
        }
        Word::Rsr => {
            let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sb - sa);
            if p2 < -P2_TOL {
                return None;
            }
            let p2 = p2.max(0.0);
            let tmp = (ca - cb).atan2(d - sa + sb);
            Some([m2pi(alpha - tmp), p2.sqrt(), m2pi(-beta + tmp)])
        }
        Word::Lsr => {
            let p2 = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb);
            if p2 < -P2_TOL {
                return None;
            }
            let p2 = p2.max(0.0);
            let p = p2.sqrt();
            let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
            Some([m2pi(-alpha + tmp), p, m2pi(-m2pi(beta) + tmp)])
        }
        Word::Rsl => {
            let p2 = -2.0 + d * d + 2.0 * cab - 2.0 * d * (sa + sb);
            if p2 < -P2_TOL {
                return None;
            }
            let p2 = p2.max(0.0);
            let p = p2.sqrt();
            let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
            Some([m2pi(alpha - tmp), p, m2pi(beta - tmp)])
        }
        Word::Rlr => {
            let c = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0;
            if c.abs() > 1.0 {
                return None;
            }
            let p = m2pi(TAU - c.acos());
            let t = m2pi(alpha - (ca - cb).atan2(d - sa + sb) + p / 2.0);
            Some([t, p, m2pi(alpha - beta - t + p)])
        }
        Word::Lrl => {
            let c = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0;
            if c.abs() > 1.0 {
                return None;
            }
            let p = m2pi(TAU - c.acos());
            let t = m2pi(-alpha - (ca - cb).atan2(d + sa - sb) + p / 2.0);
            Some([t, p, m2pi(beta - alpha - t + p)])
        }
    }
}

/// Pose after moving `len` (world units) along one segment.
fn advance_segment(pose: [f64; 3], turn: Turn, len: f64, radius: f64) -> [f64; 3] {
    let [x, y, th] = pose;
    match turn {
        Turn::Straight => [x + len * th.cos(), y + len * th.sin(), th],
        Turn::Left => {
            let d = len / radius;
            [x + radius * ((th + d).sin() - th.sin()), y - radius * ((th + d).cos() - th.cos()), th + d]
        }
        Turn::Right => {
            let d = len / radius;
            [x - radius * ((th - d).sin() - th.sin()), y + radius * ((th - d).cos() - th.cos()), th - d]
        }
    }
}

/// A constructed path; headings along it are kept unwrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DubinsPath {
    pub start: [f64; 3],
    pub radius: f64,
    pub word: Word,
    /// Segment lengths in world units.
    pub lengths: [f64; 3],
}

impl DubinsPath {
    /// Shortest of the six words from `start` to `target`.
    pub fn shortest(start: [f64; 3], target: [f64; 3], radius: f64) -> Result<Self, MpcError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(MpcError::Path(format!("turning radius {radius} must be positive and finite")));
        }
        if start.iter().chain(&target).any(|v| !v.is_finite()) {
            return Err(MpcError::Path("non-finite pose".into()));
        }
        let (dx, dy) = (target[0] - start[0], target[1] - start[1]);
        let d = dx.hypot(dy) / radius;
        let phi = dy.atan2(dx);
        let (alpha, beta) = (m2pi(start[2] - phi), m2pi(target[2] - phi));
        Word::ALL
            .iter()
            .filter_map(|&w| word_lengths(w, alpha, beta, d).map(|l| (w, l)))
            .map(|(word, l)| DubinsPath { start, radius, word, lengths: l.map(|v| v * radius) })
            // Near-ties (degenerate segments) go to the earlier word.
            .reduce(|best, p| if p.length() < best.length() - 1e-9 * radius { p } else { best })
            .ok_or_else(|| MpcError::Path("no Dubins word connects the poses".into()))
    }

    pub fn length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Pose at arc length `s`, clamped to the path.
    pub fn pose_at(&self, s: f64) -> [f64; 3] {
        let mut pose = self.start;
        let mut left = s.clamp(0.0, self.length());
        for (turn, &len) in self.word.turns().iter().zip(&self.lengths) {
            let step = left.min(len);
            pose = advance_segment(pose, *turn, step, self.radius);
            left -= step;
            if left <= 0.0 {
                break;
            }
        }
        pose
    }

    pub fn end(&self) -> [f64; 3] {
        self.pose_at(self.length())
    }
}

/// Intruder intent: a Dubins path flown at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DubinsIntent {
    pub start: [f64; 3],
    pub target: [f64; 3],
    pub speed: f64,
    pub turn_rate: InputBound,
    pub te: f64,
    pub path: DubinsPath,
}

impl DubinsIntent {
    /// Builds the path with turning radius `speed / min(hi, -lo)` of the
    /// turn-rate bound.
    pub fn new(start: [f64; 3], target: [f64; 3], speed: f64, turn_rate: InputBound, te: f64) -> Result<Self, MpcError> {
        let max_rate = turn_rate.hi.min(-turn_rate.lo);
        if !(max_rate > 0.0) {
            return Err(MpcError::Path(format!(
                "turn-rate bound [{}, {}] cannot turn both ways",
                turn_rate.lo, turn_rate.hi
            )));
        }
        if !(speed > 0.0 && te > 0.0) {
            return Err(MpcError::Path("speed and sampling time must be positive".into()));
        }
        let path = DubinsPath::shortest(start, target, speed / max_rate)?;
        Ok(Self { start, target, speed, turn_rate, te, path })
    }

    /// Time at which the path is fully flown.
    pub fn arrival_time(&self) -> f64 {
        self.path.length() / self.speed
    }

    /// Waypoint at time `t`.
    pub fn waypoint(&self, t: f64) -> [f64; 3] {
        self.path.pose_at(self.speed * t.max(0.0))
    }

    /// Turn rate that carries the heading from the waypoint at `t` to the
    /// one at `t + te`, clamped to the bound; zero once the path is flown.
    pub fn input(&self, t: f64) -> f64 {
        let s = self.speed * t.max(0.0);
        if s >= self.path.length() {
            return 0.0;
        }
        let h0 = self.path.pose_at(s)[2];
        let h1 = self.path.pose_at(s + self.speed * self.te)[2];
        self.turn_rate.clamp((h1 - h0) / self.te)
    }
}

/// `D(s0, sT, t)` as a free function.
pub fn dubins_input(intent: &DubinsIntent, t: f64) -> f64 {
    intent.input(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: [f64; 3], b: [f64; 3]) -> bool {
        (a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9 && (m2pi(a[2] - b[2] + PI) - PI).abs() < 1e-9
    }

    #[test]
    fn every_valid_word_reaches_the_target() {
        let cases = [
            ([0.0, 0.0, 0.0], [10.0, 3.0, 1.0]),
            ([1.0, -2.0, 2.5], [-4.0, 6.0, -0.3]),
            ([0.0, 0.0, 0.0], [1.0, 0.5, PI]),
            ([3.0, 3.0, -1.2], [3.5, 2.0, 2.2]),
        ];
        for (s, t) in cases {
            let r = 1.7;
            let (dx, dy) = (t[0] - s[0], t[1] - s[1]);
            let phi = dy.atan2(dx);
            for w in Word::ALL {
                if let Some(l) = word_lengths(w, m2pi(s[2] - phi), m2pi(t[2] - phi), dx.hypot(dy) / r) {
                    let p = DubinsPath { start: s, radius: r, word: w, lengths: l.map(|v| v * r) };
                    assert!(close(p.end(), t), "{w:?} {:?} vs {t:?}", p.end());
                }
            }
        }
    }

    #[test]
    fn straight_ahead_has_zero_input() {
        let intent = DubinsIntent::new([0.0, 0.0, 0.0], [10.0, 0.0, 0.0], 1.0, InputBound::symmetric(0.2), 1.0).unwrap();
        assert!((intent.path.length() - 10.0).abs() < 1e-12);
        assert_eq!(intent.input(0.0), 0.0);
        assert_eq!(intent.input(4.0), 0.0);
        assert_eq!(intent.input(50.0), 0.0);
    }

    #[test]
    fn left_quarter_arc_at_full_rate() {
        // radius = 1 / 0.25 = 4; target sits on the end of a quarter circle.
        let intent = DubinsIntent::new([0.0, 0.0, 0.0], [4.0, 4.0, FRAC_PI_2], 1.0, InputBound::symmetric(0.25), 1.0).unwrap();
        // LSL and LSR coincide here; either is fine as long as only the arc is flown.
        assert_eq!(intent.path.word.turns()[0], Turn::Left);
        assert!((intent.path.length() - 2.0 * PI).abs() < 1e-9);
        let end = intent.path.end();
        assert!((end[0] - 4.0).abs() < 1e-9 && (end[1] - 4.0).abs() < 1e-9);
        assert!((intent.input(1.0) - 0.25).abs() < 1e-12);
        assert_eq!(intent.input(7.0), 0.0);
    }

    #[test]
    fn one_sided_turn_bound_rejected() {
        assert!(DubinsIntent::new([0.0; 3], [5.0, 5.0, 0.0], 1.0, InputBound::new(0.0, 0.3), 1.0).is_err());
    }
}
