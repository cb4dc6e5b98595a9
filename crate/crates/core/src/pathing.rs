//! Path cost estimation and motion along planned paths.
//!
//! Bids are priced by the estimated path length from a robot to a task. The
//! default arena has no obstacles, so [`StraightLine`] returns the direct
//! segment; anything obstacle-aware can implement [`PathPlanner`] instead.

use serde::{Deserialize, Serialize};

use crate::world::{Point, EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub length: f64,
    pub waypoints: Vec<Point>,
}

impl PathEstimate {
    pub fn through(waypoints: Vec<Point>) -> Self {
        assert!(!waypoints.is_empty(), "a path needs at least one waypoint");
        let length = waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum();
        Self { length, waypoints }
    }

    pub fn start(&self) -> Point {
        self.waypoints[0]
    }

    pub fn goal(&self) -> Point {
        *self.waypoints.last().expect("non-empty path")
    }
}

pub trait PathPlanner {
    fn plan(&self, start: Point, goal: Point) -> PathEstimate;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StraightLine;

impl PathPlanner for StraightLine {
    fn plan(&self, start: Point, goal: Point) -> PathEstimate {
        PathEstimate::through(vec![start, goal])
    }
}

/// Path estimate with the default obstacle-free planner.
pub fn estimate_path(start: Point, goal: Point) -> PathEstimate {
    StraightLine.plan(start, goal)
}

/// Moves `pose`, which must lie on `path`, by `min(speed, remaining)` along it.
pub fn advance_along_path(pose: Point, path: &PathEstimate, speed: f64) -> Point {
    let mut travel = Travel::new(path.clone());
    travel.seek(pose);
    travel.advance(speed).pose
}

/// Outcome of one tick of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Stride {
    pub pose: Point,
    pub moved: f64,
    /// Every point passed this tick, from the old pose to the new one.
    pub swept: Vec<Point>,
    pub arrived: bool,
}

/// Cursor for a robot following a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Travel {
    path: PathEstimate,
    segment: usize,
    pose: Point,
}

impl Travel {
    pub fn new(path: PathEstimate) -> Self {
        let pose = path.start();
        Self { path, segment: 0, pose }
    }

    pub fn path(&self) -> &PathEstimate {
        &self.path
    }

    pub fn pose(&self) -> Point {
        self.pose
    }

    /// Number of waypoints reached after the start.
    pub fn reached(&self) -> usize {
        self.segment
    }

    pub fn arrived(&self) -> bool {
        self.segment + 1 >= self.path.waypoints.len()
    }

    pub fn remaining(&self) -> f64 {
        if self.arrived() {
            return 0.0;
        }
        let wp = &self.path.waypoints;
        self.pose.distance(&wp[self.segment + 1])
            + wp[self.segment + 1..].windows(2).map(|w| w[0].distance(&w[1])).sum::<f64>()
    }

    /// Places the cursor at the first segment containing `pose`.
    fn seek(&mut self, pose: Point) {
        let wp = &self.path.waypoints;
        for i in 0..wp.len().saturating_sub(1) {
            let seg = wp[i].distance(&wp[i + 1]);
            let split = wp[i].distance(&pose) + pose.distance(&wp[i + 1]);
            if (split - seg).abs() <= 1e-7 && pose.distance(&wp[i + 1]) > EPS {
                self.segment = i;
                self.pose = pose;
                return;
            }
        }
        self.segment = wp.len() - 1;
        self.pose = self.path.goal();
    }

    pub fn advance(&mut self, speed: f64) -> Stride {
        let mut budget = speed;
        let mut moved = 0.0;
        let mut swept = vec![self.pose];
        let wp = &self.path.waypoints;
        while budget > 0.0 && self.segment + 1 < wp.len() {
            let next = wp[self.segment + 1];
            let gap = self.pose.distance(&next);
            if gap <= budget {
                budget -= gap;
                moved += gap;
                self.pose = next;
                self.segment += 1;
            } else {
                let t = budget / gap;
                self.pose = self.pose.lerp(&next, t);
                moved += budget;
                budget = 0.0;
            }
            swept.push(self.pose);
        }
        Stride { pose: self.pose, moved, swept, arrived: self.arrived() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_four_five() {
        let p = estimate_path(Point::new(0.0, 0.0), Point::new(3.0, 4.0));
        assert_eq!(p.length, 5.0);
        assert_eq!(p.start(), Point::new(0.0, 0.0));
        assert_eq!(p.goal(), Point::new(3.0, 4.0));
    }

    #[test]
    fn zero_length_and_diagonal() {
        assert_eq!(estimate_path(Point::new(10.0, 10.0), Point::new(10.0, 10.0)).length, 0.0);
        let d = estimate_path(Point::new(0.0, 0.0), Point::new(100.0, 100.0)).length;
        assert!((d - 100.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((d - 141.42).abs() < 0.01);
    }

    #[test]
    fn one_unit_step_on_a_five_unit_path() {
        let path = estimate_path(Point::new(0.0, 0.0), Point::new(3.0, 4.0));
        let next = advance_along_path(path.start(), &path, 1.0);
        assert!((next.x - 0.6).abs() < 1e-12 && (next.y - 0.8).abs() < 1e-12);
    }

    #[test]
    fn final_step_is_clamped() {
        let path = estimate_path(Point::new(0.0, 0.0), Point::new(10.0, 0.0));
        let near = Point::new(9.7, 0.0);
        assert_eq!(advance_along_path(near, &path, 1.0), Point::new(10.0, 0.0));

        let mut t = Travel::new(path);
        let mut odo = 0.0;
        for _ in 0..10 {
            odo += t.advance(1.0).moved;
        }
        assert!(t.arrived());
        assert_eq!(t.advance(1.0).moved, 0.0);
        assert!((odo - 10.0).abs() < 1e-12);
    }

    #[test]
    fn partial_last_stride() {
        let mut t = Travel::new(estimate_path(Point::new(0.0, 0.0), Point::new(2.3, 0.0)));
        t.advance(1.0);
        t.advance(1.0);
        let last = t.advance(1.0);
        assert!((last.moved - 0.3).abs() < 1e-12);
        assert!(last.arrived);
    }

    #[test]
    fn turns_corners_within_one_tick() {
        let path = PathEstimate::through(vec![
            Point::new(0.0, 0.0),
            Point::new(0.5, 0.0),
            Point::new(0.5, 5.0),
        ]);
        assert_eq!(path.length, 5.5);
        let mut t = Travel::new(path);
        let s = t.advance(1.0);
        assert_eq!(s.swept, vec![Point::new(0.0, 0.0), Point::new(0.5, 0.0), Point::new(0.5, 0.5)]);
        assert!((s.moved - 1.0).abs() < 1e-12);
    }

    fn pt() -> impl Strategy<Value = Point> {
        (0.0..100.0f64, 0.0..100.0f64).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in pt(), b in pt(), c in pt()) {
            let ac = estimate_path(a, c).length;
            let ab = estimate_path(a, b).length;
            let bc = estimate_path(b, c).length;
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn symmetric_and_at_least_euclidean(a in pt(), b in pt()) {
            let ab = estimate_path(a, b);
            prop_assert_eq!(ab.length, estimate_path(b, a).length);
            prop_assert!(ab.length >= a.distance(&b) - 1e-12);
        }

        #[test]
        fn odometry_is_sum_of_strides(a in pt(), b in pt(), speed in 0.1..5.0f64) {
            let path = estimate_path(a, b);
            let mut t = Travel::new(path.clone());
            let mut odo = 0.0;
            let mut ticks = 0;
            while !t.arrived() {
                let s = t.advance(speed);
                prop_assert!(s.moved <= speed + 1e-12);
                odo += s.moved;
                ticks += 1;
                prop_assert!(ticks < 10_000);
            }
            prop_assert!((odo - path.length).abs() < 1e-9);
            prop_assert_eq!(t.pose(), b);
        }
    }
}
