use std::path::Path;

use super::MapError;

/// Distance from point `p` to the segment `a`–`b`.
#[inline]
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = p[0] - (a[0] + t * abx);
    let dy = p[1] - (a[1] + t * aby);
    (dx * dx + dy * dy).sqrt()
}

/// Ordered track centerline in world coordinates (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    waypoints: Vec<[f64; 2]>,
    closed: bool,
    /// Cumulative arc length at each waypoint.
    arc: Vec<f64>,
    length: f64,
}

/// Result of projecting a point onto the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackProjection {
    /// Arc length (m) of the closest centerline point, measured from waypoint 0.
    pub arc_length: f64,
    /// Distance (m) to the centerline.
    pub distance: f64,
    /// Unit tangent direction (radians) of the closest segment.
    pub heading: f64,
}

impl Centerline {
    pub fn new(mut waypoints: Vec<[f64; 2]>, closed: bool) -> Result<Self, MapError> {
        if closed && waypoints.len() > 1 && waypoints.first() == waypoints.last() {
            waypoints.pop();
        }
        if waypoints.len() < 3 {
            return Err(MapError::InvalidInput(format!(
                "centerline needs at least 3 waypoints, got {}",
                waypoints.len()
            )));
        }
        if let Some(p) = waypoints.iter().find(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(MapError::InvalidInput(format!("non-finite waypoint {p:?}")));
        }
        if let Some(k) = waypoints.windows(2).position(|w| w[0] == w[1]) {
            return Err(MapError::InvalidInput(format!("waypoints {k} and {} coincide", k + 1)));
        }
        let mut arc = Vec::with_capacity(waypoints.len() + 1);
        arc.push(0.0);
        let mut acc = 0.0;
        let n = waypoints.len();
        let nseg = if closed { n } else { n - 1 };
        for k in 0..nseg {
            let a = waypoints[k];
            let b = waypoints[(k + 1) % n];
            acc += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            arc.push(acc);
        }
        Ok(Self { waypoints, closed, arc, length: acc })
    }

    /// Parses plain text with one `x y` pair per line. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str, closed: bool) -> Result<Self, MapError> {
        let mut pts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => pts.push([x, y]),
                _ => {
                    return Err(MapError::Format(format!(
                        "centerline line {}: expected `x y`, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(pts, closed)
    }

    pub fn load(path: impl AsRef<Path>, closed: bool) -> Result<Self, MapError> {
        Self::parse(&std::fs::read_to_string(path)?, closed)
    }

    pub fn to_text(&self) -> String {
        self.waypoints.iter().map(|p| format!("{} {}\n", p[0], p[1])).collect()
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.waypoints
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Total length (m), including the closing segment of a loop.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.waypoints.len();
        let nseg = if self.closed { n } else { n - 1 };
        (0..nseg).map(move |k| (self.waypoints[k], self.waypoints[(k + 1) % n]))
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.waypoints.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p[0]), y0.min(p[1]), x1.max(p[0]), y1.max(p[1])),
        )
    }

    /// Heading of the first segment, i.e. the driving direction at arc length zero.
    pub fn start_heading(&self) -> f64 {
        let a = self.waypoints[0];
        let b = self.waypoints[1];
        (b[1] - a[1]).atan2(b[0] - a[0])
    }

    /// Point on the centerline at arc length `s` (wrapped for loops).
    pub fn point_at(&self, s: f64) -> ([f64; 2], f64) {
        let s = if self.closed { s.rem_euclid(self.length) } else { s.clamp(0.0, self.length) };
        let k = match self.arc.binary_search_by(|a| a.partial_cmp(&s).unwrap()) {
            Ok(k) => k.min(self.arc.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.arc.len() - 2),
        };
        let n = self.waypoints.len();
        let a = self.waypoints[k];
        let b = self.waypoints[(k + 1) % n];
        let seg = self.arc[k + 1] - self.arc[k];
        let t = if seg > 0.0 { (s - self.arc[k]) / seg } else { 0.0 };
        let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
        ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], heading)
    }

    /// Closest point on the centerline to `(x, y)`.
    pub fn project(&self, x: f64, y: f64) -> TrackProjection {
        let mut best = TrackProjection { arc_length: 0.0, distance: f64::INFINITY, heading: 0.0 };
        for (k, (a, b)) in self.segments().enumerate() {
            let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
            let len2 = abx * abx + aby * aby;
            let t = (((x - a[0]) * abx + (y - a[1]) * aby) / len2).clamp(0.0, 1.0);
            let dx = x - (a[0] + t * abx);
            let dy = y - (a[1] + t * aby);
            let d = (dx * dx + dy * dy).sqrt();
            if d < best.distance {
                best = TrackProjection {
                    arc_length: self.arc[k] + t * (self.arc[k + 1] - self.arc[k]),
                    distance: d,
                    heading: aby.atan2(abx),
                };
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate() {
        assert!(Centerline::new(vec![[0.0, 0.0], [1.0, 0.0]], false).is_err());
        assert!(Centerline::new(vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], false).is_err());
        assert!(Centerline::new(vec![[0.0, 0.0], [1.0, f64::NAN], [1.0, 0.0]], false).is_err());
    }

    #[test]
    fn closed_loop_length_and_projection() {
        let cl = Centerline::new(vec![[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0]], true).unwrap();
        assert!((cl.length() - 14.0).abs() < 1e-12);
        let p = cl.project(2.0, -0.5);
        assert!((p.arc_length - 2.0).abs() < 1e-12 && (p.distance - 0.5).abs() < 1e-12);
        let p = cl.project(-0.2, 1.0);
        assert!((p.arc_length - 13.0).abs() < 1e-12);
        let (pt, h) = cl.point_at(15.0);
        assert!((pt[0] - 1.0).abs() < 1e-12 && pt[1].abs() < 1e-12 && h.abs() < 1e-12);
    }

    #[test]
    fn parses_text() {
        let cl = Centerline::parse("# track\n0 0\n1 0\n\n1 1\n", true).unwrap();
        assert_eq!(cl.waypoints().len(), 3);
        assert!(Centerline::parse("0 0\n1\n2 2\n", true).is_err());
        let again = Centerline::parse(&cl.to_text(), true).unwrap();
        assert_eq!(again, cl);
    }
}
