//! Occupancy grid and cell coordinates.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// A cell coordinate. `col` grows to the east, `row` to the south.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellPos {
    pub col: usize,
    pub row: usize,
}

impl CellPos {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    /// Chebyshev distance in cells.
    pub fn chebyshev(self, other: CellPos) -> usize {
        self.col.abs_diff(other.col).max(self.row.abs_diff(other.row))
    }

    /// Euclidean distance in cells.
    pub fn euclid(self, other: CellPos) -> f64 {
        let dc = self.col.abs_diff(other.col) as f64;
        let dr = self.row.abs_diff(other.row) as f64;
        libm::sqrt(dc * dc + dr * dr)
    }
}

impl fmt::Display for CellPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

/// Row-major occupancy grid. `true` in `obstacles` marks a blocked cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    width: usize,
    height: usize,
    cell_size: f64,
    obstacles: Vec<bool>,
}

pub(crate) const N4: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
pub(crate) const N8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

impl GridMap {
    /// Builds a grid; panics if the dimensions disagree with `obstacles`.
    pub fn new(width: usize, height: usize, cell_size: f64, obstacles: Vec<bool>) -> Self {
        assert!(width >= 1 && height >= 1, "grid must be at least 1x1");
        assert_eq!(obstacles.len(), width * height, "occupancy length");
        assert!(cell_size > 0.0, "cell size must be positive");
        Self {
            width,
            height,
            cell_size,
            obstacles,
        }
    }

    /// An obstacle-free grid.
    pub fn empty(width: usize, height: usize, cell_size: f64) -> Self {
        Self::new(width, height, cell_size, vec![false; width * height])
    }

    /// Parses rows of `#` (obstacle) and any other character (free).
    /// Intended for tests and fixtures; rows must have equal length.
    pub fn from_ascii(rows: &[&str], cell_size: f64) -> Self {
        let height = rows.len();
        let width = rows[0].chars().count();
        let mut obstacles = Vec::with_capacity(width * height);
        for row in rows {
            assert_eq!(row.chars().count(), width, "ragged ascii grid");
            obstacles.extend(row.chars().map(|c| c == '#'));
        }
        Self::new(width, height, cell_size, obstacles)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, p: CellPos) -> usize {
        debug_assert!(self.in_bounds(p));
        p.row * self.width + p.col
    }

    #[inline]
    pub fn pos(&self, idx: usize) -> CellPos {
        CellPos::new(idx % self.width, idx / self.width)
    }

    #[inline]
    pub fn in_bounds(&self, p: CellPos) -> bool {
        p.col < self.width && p.row < self.height
    }

    #[inline]
    pub fn is_free(&self, p: CellPos) -> bool {
        self.in_bounds(p) && !self.obstacles[self.index(p)]
    }

    #[inline]
    pub fn is_free_idx(&self, idx: usize) -> bool {
        !self.obstacles[idx]
    }

    pub fn set_obstacle(&mut self, p: CellPos, blocked: bool) {
        let i = self.index(p);
        self.obstacles[i] = blocked;
    }

    pub fn free_count(&self) -> usize {
        self.obstacles.iter().filter(|&&o| !o).count()
    }

    /// Indices of all free cells in row-major order.
    pub fn free_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.obstacles
            .iter()
            .enumerate()
            .filter(|(_, &o)| !o)
            .map(|(i, _)| i)
    }

    #[inline]
    pub(crate) fn offset(&self, idx: usize, d: (isize, isize)) -> Option<usize> {
        let c = (idx % self.width) as isize + d.0;
        let r = (idx / self.width) as isize + d.1;
        if c < 0 || r < 0 || c >= self.width as isize || r >= self.height as isize {
            None
        } else {
            Some(r as usize * self.width + c as usize)
        }
    }

    /// Free 4-neighbours of a cell.
    pub fn neighbors4(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        N4.iter()
            .filter_map(move |&d| self.offset(idx, d))
            .filter(move |&n| !self.obstacles[n])
    }

    /// Free 8-neighbours reachable in one move, with the step length in
    /// cells. A diagonal move is only allowed when both orthogonal cells it
    /// passes between are free (no corner cutting).
    pub fn moves8(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        N8.iter().filter_map(move |&d| {
            let n = self.offset(idx, d)?;
            if self.obstacles[n] {
                return None;
            }
            if d.0 != 0 && d.1 != 0 {
                let a = self.offset(idx, (d.0, 0))?;
                let b = self.offset(idx, (0, d.1))?;
                if self.obstacles[a] || self.obstacles[b] {
                    return None;
                }
                Some((n, core::f64::consts::SQRT_2))
            } else {
                Some((n, 1.0))
            }
        })
    }

    /// 4-connected flood fill over free cells from `start`.
    pub fn flood_fill(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        if self.obstacles[start] {
            return seen;
        }
        let mut queue = VecDeque::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for n in self.neighbors4(i) {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Turns every free cell not 4-connected to `anchor` into an obstacle.
    /// Returns the number of cells removed.
    pub fn remove_unreachable(&mut self, anchor: CellPos) -> usize {
        let reach = self.flood_fill(self.index(anchor));
        let mut removed = 0;
        for (i, blocked) in self.obstacles.iter_mut().enumerate() {
            if !*blocked && !reach[i] {
                *blocked = true;
                removed += 1;
            }
        }
        removed
    }

    /// Cells touched by the segment between the centres of `a` and `b`.
    ///
    /// Supercover traversal: when the segment passes exactly through a
    /// cell corner, both cells sharing that corner edge are included, so a
    /// ray cannot squeeze through a diagonal gap between two obstacles.
    pub fn supercover(&self, a: CellPos, b: CellPos) -> Vec<CellPos> {
        let (x0, y0) = (a.col as i64, a.row as i64);
        let (x1, y1) = (b.col as i64, b.row as i64);
        let dx = (x1 - x0).abs();
        let dy = (y1 - y0).abs();
        let sx = if x1 > x0 { 1 } else { -1 };
        let sy = if y1 > y0 { 1 } else { -1 };
        let (mut x, mut y) = (x0, y0);
        let mut out = Vec::with_capacity((dx + dy + 1) as usize);
        out.push(a);
        let (mut ix, mut iy) = (0i64, 0i64);
        while ix < dx || iy < dy {
            // Compare the parametric distance to the next vertical and the
            // next horizontal grid line: (1 + 2ix) / dx vs (1 + 2iy) / dy.
            let lhs = (1 + 2 * ix) * dy;
            let rhs = (1 + 2 * iy) * dx;
            if lhs == rhs {
                out.push(CellPos::new((x + sx) as usize, y as usize));
                out.push(CellPos::new(x as usize, (y + sy) as usize));
                x += sx;
                y += sy;
                ix += 1;
                iy += 1;
            } else if lhs < rhs {
                x += sx;
                ix += 1;
            } else {
                y += sy;
                iy += 1;
            }
            out.push(CellPos::new(x as usize, y as usize));
        }
        out
    }

    /// True iff no cell of the supercover ray from `a` to `b` is blocked.
    pub fn line_of_sight(&self, a: CellPos, b: CellPos) -> bool {
        // Same traversal as `supercover` without allocating.
        let (x0, y0) = (a.col as i64, a.row as i64);
        let (x1, y1) = (b.col as i64, b.row as i64);
        let dx = (x1 - x0).abs();
        let dy = (y1 - y0).abs();
        let sx = if x1 > x0 { 1 } else { -1 };
        let sy = if y1 > y0 { 1 } else { -1 };
        let w = self.width as i64;
        let blocked = |x: i64, y: i64| self.obstacles[(y * w + x) as usize];
        let (mut x, mut y) = (x0, y0);
        if blocked(x, y) {
            return false;
        }
        let (mut ix, mut iy) = (0i64, 0i64);
        while ix < dx || iy < dy {
            let lhs = (1 + 2 * ix) * dy;
            let rhs = (1 + 2 * iy) * dx;
            if lhs == rhs {
                if blocked(x + sx, y) || blocked(x, y + sy) {
                    return false;
                }
                x += sx;
                y += sy;
                ix += 1;
                iy += 1;
            } else if lhs < rhs {
                x += sx;
                ix += 1;
            } else {
                y += sy;
                iy += 1;
            }
            if blocked(x, y) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supercover_straight_and_diagonal() {
        let g = GridMap::empty(5, 5, 1.0);
        let row = g.supercover(CellPos::new(0, 2), CellPos::new(4, 2));
        assert_eq!(row.len(), 5);
        let diag = g.supercover(CellPos::new(0, 0), CellPos::new(2, 2));
        // Three diagonal cells plus the two corner-sharing cells per step.
        assert_eq!(diag.len(), 7);
        assert!(diag.contains(&CellPos::new(1, 0)));
        assert!(diag.contains(&CellPos::new(0, 1)));
    }

    #[test]
    fn supercover_is_symmetric_as_a_set() {
        let g = GridMap::empty(12, 9, 1.0);
        for (a, b) in [((0, 0), (11, 8)), ((3, 7), (10, 1)), ((2, 2), (8, 5))] {
            let a = CellPos::new(a.0, a.1);
            let b = CellPos::new(b.0, b.1);
            let mut f = g.supercover(a, b);
            let mut r = g.supercover(b, a);
            f.sort();
            r.sort();
            f.dedup();
            r.dedup();
            assert_eq!(f, r, "{a} -> {b}");
        }
    }

    #[test]
    fn diagonal_gap_blocks_sight() {
        let g = GridMap::from_ascii(&["..#", ".#.", "..."], 1.0);
        // (0,0) -> (2,2) passes the corner between (1,0)/(0,1): both free,
        // but then the centre (1,1) is blocked.
        assert!(!g.line_of_sight(CellPos::new(0, 0), CellPos::new(2, 2)));
        let gap = GridMap::from_ascii(&[".#", "#."], 1.0);
        assert!(!gap.line_of_sight(CellPos::new(0, 0), CellPos::new(1, 1)));
    }

    #[test]
    fn corner_cutting_forbidden_in_moves() {
        let g = GridMap::from_ascii(&[".#", ".."], 1.0);
        let moves: Vec<_> = g.moves8(g.index(CellPos::new(0, 0))).collect();
        assert_eq!(moves.len(), 1);
        assert_eq!(moves[0].0, g.index(CellPos::new(0, 1)));
    }

    #[test]
    fn remove_unreachable_pocket() {
        let mut g = GridMap::from_ascii(
            &["......", "..####", "..#..#", "..#..#", "..####"],
            1.0,
        );
        let before = g.free_count();
        let removed = g.remove_unreachable(CellPos::new(0, 0));
        assert_eq!(removed, 4);
        assert_eq!(g.free_count(), before - 4);
        assert!(!g.is_free(CellPos::new(3, 2)));
    }
}
