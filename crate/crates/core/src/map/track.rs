//! Procedural test track: a closed loop with a long straight, two 180°
//! hairpins, a double-apex corner, an S-curve and two sweeping bends.

use super::Centerline;

/// Waypoint spacing of generated centerlines (m).
pub const WAYPOINT_SPACING: f64 = 0.25;

/// Default geometric scale of [`synthetic_track`] (lap length ≈ 120 m).
pub const DEFAULT_SCALE: f64 = 0.75;

#[derive(Debug, Clone, Copy)]
enum Piece {
    Straight(f64),
    /// Signed turn angle (deg, positive = left) and radius (m).
    Arc(f64, f64),
}

struct Turtle {
    pts: Vec<[f64; 2]>,
    x: f64,
    y: f64,
    heading: f64,
}

impl Turtle {
    fn new() -> Self {
        Self { pts: vec![[0.0, 0.0]], x: 0.0, y: 0.0, heading: 0.0 }
    }

    fn add(&mut self, piece: Piece) {
        match piece {
            Piece::Straight(len) => {
                let n = ((len / WAYPOINT_SPACING).round() as usize).max(1);
                let (s, c) = self.heading.sin_cos();
                for k in 1..=n {
                    let d = len * k as f64 / n as f64;
                    self.pts.push([self.x + c * d, self.y + s * d]);
                }
            }
            Piece::Arc(deg, radius) => {
                let angle = deg.to_radians();
                let sign = angle.signum();
                let cx = self.x - sign * radius * self.heading.sin();
                let cy = self.y + sign * radius * self.heading.cos();
                let a0 = (self.y - cy).atan2(self.x - cx);
                let n = (((angle.abs() * radius) / WAYPOINT_SPACING).round() as usize).max(1);
                for k in 1..=n {
                    let a = a0 + angle * k as f64 / n as f64;
                    self.pts.push([cx + radius * a.cos(), cy + radius * a.sin()]);
                }
                self.heading += angle;
            }
        }
        let last = *self.pts.last().unwrap();
        self.x = last[0];
        self.y = last[1];
    }
}

/// The default test track at [`DEFAULT_SCALE`].
pub fn synthetic_track() -> Centerline {
    synthetic_track_scaled(DEFAULT_SCALE)
}

/// Builds the test track with all lengths multiplied by `scale`. The loop
/// starts at the origin heading along `+x` at the beginning of the main
/// straight, and is driven counter-clockwise.
pub fn synthetic_track_scaled(scale: f64) -> Centerline {
    use Piece::*;
    let s = scale;
    let mut t = Turtle::new();
    for p in [
        Straight(30.0 * s),
        Arc(180.0, 5.0 * s),
        Straight(10.0 * s),
        Arc(-180.0, 5.0 * s),
        Straight(6.0 * s),
        Arc(90.0, 6.0 * s),
        Arc(90.0, 6.0 * s),
        Arc(45.0, 6.0 * s),
        Arc(-45.0, 6.0 * s),
    ] {
        t.add(p);
    }
    // Close the loop: west, left bend, south, left bend back onto the straight.
    let (px, py) = (t.x, t.y);
    let r = 8.0 * s;
    t.add(Straight(px));
    t.add(Arc(90.0, r));
    t.add(Straight(py - 2.0 * r));
    t.add(Arc(90.0, r));
    let mut pts = t.pts;
    // The final waypoint lands on the origin up to rounding; drop it so the
    // implicit closing segment does the joining.
    pts.pop();
    Centerline::new(pts, true).expect("synthetic track is well formed")
}
