//! Center-outward spiral coverage of the square search grid.
//!
//! Rings are Chebyshev shells around the grid centre: the centre cell for
//! odd grids, the central 2x2 block for even ones. A single scout follows
//! the classic square spiral. Two scouts split every ring into mirrored
//! halves (right and left of the centre column) and sweep their halves in
//! alternating directions so that each one steps straight out from the end
//! of one ring into the start of the next.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::Point;

#[derive(Debug, Error, PartialEq)]
pub enum SpiralError {
    #[error("arena side {arena} is not a whole multiple of cell side {cell}")]
    NotDivisible { arena: f64, cell: f64 },
    #[error("spiral plans support one or two scouts, got {0}")]
    UnsupportedScouts(usize),
}

/// Grid cell as (column, row), origin at the arena's lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub col: i64,
    pub row: i64,
}

impl Cell {
    pub const fn new(col: i64, row: i64) -> Self {
        Self { col, row }
    }

    pub fn is_adjacent(&self, other: &Cell) -> bool {
        (self.col - other.col).abs() + (self.row - other.row).abs() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralPlan {
    pub cell_side: f64,
    /// (columns, rows)
    pub grid_dims: (usize, usize),
    pub visit_order: Vec<Cell>,
    pub cursor: usize,
}

impl SpiralPlan {
    pub fn center_of(&self, cell: Cell) -> Point {
        Point::new((cell.col as f64 + 0.5) * self.cell_side, (cell.row as f64 + 0.5) * self.cell_side)
    }

    pub fn waypoints(&self) -> Vec<Point> {
        self.visit_order.iter().map(|c| self.center_of(*c)).collect()
    }

    pub fn ring_of(&self, cell: Cell) -> i64 {
        ring_index(self.grid_dims.0, cell)
    }
}

/// Chebyshev ring index of `cell` in an `n` x `n` grid.
pub fn ring_index(n: usize, cell: Cell) -> i64 {
    let n = n as i64;
    let dx = (2 * cell.col - (n - 1)).abs();
    let dy = (2 * cell.row - (n - 1)).abs();
    dx.max(dy) / 2
}

/// Cell containing `p`, clamped into an `n` x `n` grid.
pub fn cell_containing(p: &Point, cell_side: f64, n: usize) -> Cell {
    let clamp = |v: f64| ((v / cell_side).floor() as i64).clamp(0, n as i64 - 1);
    Cell::new(clamp(p.x), clamp(p.y))
}

pub fn build_spiral(arena_side: f64, cell_side: f64, n_scouts: usize) -> Result<Vec<SpiralPlan>, SpiralError> {
    if !(1..=2).contains(&n_scouts) {
        return Err(SpiralError::UnsupportedScouts(n_scouts));
    }
    let ratio = arena_side / cell_side;
    let n = ratio.round();
    if !(cell_side > 0.0) || n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(SpiralError::NotDivisible { arena: arena_side, cell: cell_side });
    }
    let n = n as usize;
    let orders = if n_scouts == 1 { vec![single_spiral(n)] } else { split_spiral(n) };
    Ok(orders
        .into_iter()
        .map(|visit_order| SpiralPlan { cell_side, grid_dims: (n, n), visit_order, cursor: 0 })
        .collect())
}

/// Square spiral legs +x 1, +y 1, -x 2, -y 2, +x 3, ... clipped to the grid.
fn single_spiral(n: usize) -> Vec<Cell> {
    let total = n * n;
    let start = (n as i64 - 1) / 2;
    let mut at = Cell::new(start, start);
    let mut order = vec![at];
    let dirs = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    let inside = |c: Cell| (0..n as i64).contains(&c.col) && (0..n as i64).contains(&c.row);
    let mut leg = 1;
    let mut d = 0;
    while order.len() < total {
        for _ in 0..2 {
            let (dx, dy) = dirs[d % 4];
            for _ in 0..leg {
                at = Cell::new(at.col + dx, at.row + dy);
                if inside(at) {
                    order.push(at);
                }
            }
            d += 1;
        }
        leg += 1;
    }
    order
}

/// Right half of ring `d`, bottom middle → right side → top middle.
fn right_half(n: usize, d: i64) -> Vec<Cell> {
    let n = n as i64;
    // `lo`/`hi` bound the ring; `mid` is the first column right of centre
    // for even grids and the centre column for odd ones.
    let (lo, hi) = if n % 2 == 1 {
        let c = (n - 1) / 2;
        (c - d, c + d)
    } else {
        let m = n / 2;
        (m - 1 - d, m + d)
    };
    if d == 0 {
        return if n % 2 == 1 { vec![Cell::new(lo, lo)] } else { vec![Cell::new(hi, lo), Cell::new(hi, hi)] };
    }
    // odd: bottom row starts right of the centre column, top row ends on it
    let (bottom_from, top_to) = if n % 2 == 1 { (n / 2 + 1, n / 2) } else { (n / 2, n / 2) };
    let mut cells = Vec::new();
    for col in bottom_from..=hi {
        cells.push(Cell::new(col, lo));
    }
    for row in lo + 1..=hi {
        cells.push(Cell::new(hi, row));
    }
    for col in (top_to..hi).rev() {
        cells.push(Cell::new(col, hi));
    }
    cells
}

fn mirror(n: usize, c: Cell) -> Cell {
    let n = n as i64;
    Cell::new(n - 1 - c.col, n - 1 - c.row)
}

fn split_spiral(n: usize) -> Vec<Vec<Cell>> {
    let rings = (n as i64 + 1) / 2;
    let mut a: Vec<Cell> = Vec::with_capacity(n * n / 2 + 1);
    let odd = n % 2 == 1;
    for d in 0..rings {
        let mut half = right_half(n, d);
        if odd && d == 0 {
            a.extend(half);
            continue;
        }
        // orient so the arc starts next to where the previous one ended
        if let Some(last) = a.last() {
            if !last.is_adjacent(&half[0]) {
                half.reverse();
            }
        } else if odd {
            unreachable!("centre cell is pushed first");
        }
        a.extend(half);
    }
    let b: Vec<Cell> = if odd {
        // scout B has no centre cell; mirror A's arcs after it
        a[1..].iter().map(|c| mirror(n, *c)).collect()
    } else {
        a.iter().map(|c| mirror(n, *c)).collect()
    };
    vec![a, b]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn default_grid_has_400_cells() {
        let plans = build_spiral(100.0, 5.0, 2).unwrap();
        assert_eq!(plans.iter().map(|p| p.visit_order.len()).sum::<usize>(), 400);
        assert_eq!(plans[0].grid_dims, (20, 20));
    }

    #[test]
    fn three_by_three_single_scout() {
        let plans = build_spiral(15.0, 5.0, 1).unwrap();
        let expect: Vec<Cell> = [(1, 1), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1), (0, 0), (1, 0), (2, 0)]
            .into_iter()
            .map(|(c, r)| Cell::new(c, r))
            .collect();
        assert_eq!(plans[0].visit_order, expect);
        assert_eq!(plans[0].center_of(expect[0]), Point::new(7.5, 7.5));
    }

    #[test]
    fn single_cell_plan() {
        let plans = build_spiral(5.0, 5.0, 1).unwrap();
        assert_eq!(plans[0].visit_order, vec![Cell::new(0, 0)]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(build_spiral(100.0, 7.0, 1), Err(SpiralError::NotDivisible { .. })));
        assert_eq!(build_spiral(100.0, 5.0, 3), Err(SpiralError::UnsupportedScouts(3)));
        assert_eq!(build_spiral(100.0, 5.0, 0), Err(SpiralError::UnsupportedScouts(0)));
        assert!(build_spiral(100.0, 100.0 / 29.0, 2).is_ok());
    }

    #[test]
    fn two_scouts_start_on_opposite_sides() {
        let plans = build_spiral(15.0, 5.0, 2).unwrap();
        let (a, b) = (&plans[0].visit_order, &plans[1].visit_order);
        assert_eq!(a[0], Cell::new(1, 1));
        assert_eq!(a.len() + b.len(), 9);
        assert!(a[1..].iter().all(|c| c.col >= 1));
        assert!(b.iter().all(|c| c.col <= 1));
        let all: BTreeSet<_> = a.iter().chain(b).collect();
        assert_eq!(all.len(), 9);
    }

    #[test]
    fn ring_index_even_and_odd() {
        assert_eq!(ring_index(3, Cell::new(1, 1)), 0);
        assert_eq!(ring_index(3, Cell::new(0, 2)), 1);
        for c in [(1, 1), (2, 1), (1, 2), (2, 2)] {
            assert_eq!(ring_index(4, Cell::new(c.0, c.1)), 0);
        }
        assert_eq!(ring_index(4, Cell::new(0, 3)), 1);
        assert_eq!(ring_index(20, Cell::new(19, 0)), 9);
    }
}
