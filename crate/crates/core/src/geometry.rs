//! Rectangular observation windows, point configurations and range queries.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

/// A point of the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        libm::sqrt(self.dist2(other))
    }

    fn cmp_coords(&self, other: &Point) -> Ordering {
        self.x.total_cmp(&other.x).then(self.y.total_cmp(&other.y))
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point::new(p[0], p[1])
    }
}

/// Closed axis-aligned rectangle `[lo.0, hi.0] x [lo.1, hi.1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Window {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        let ok = (0..2).all(|k| lo[k].is_finite() && hi[k].is_finite() && lo[k] < hi[k]);
        if ok {
            Ok(Window { lo, hi })
        } else {
            Err(Error::InvalidWindow)
        }
    }

    /// The square `[-half, half]^2`.
    pub fn centered_square(half: f64) -> Result<Self> {
        Window::new([-half, -half], [half, half])
    }

    pub fn lo(&self) -> [f64; 2] {
        self.lo
    }

    pub fn hi(&self) -> [f64; 2] {
        self.hi
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn area(&self) -> f64 {
        self.side(0) * self.side(1)
    }

    pub fn diameter(&self) -> f64 {
        libm::hypot(self.side(0), self.side(1))
    }

    pub fn contains(&self, u: &Point) -> bool {
        u.x >= self.lo[0] && u.x <= self.hi[0] && u.y >= self.lo[1] && u.y <= self.hi[1]
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        (0..2).all(|k| other.lo[k] >= self.lo[k] && other.hi[k] <= self.hi[k])
    }

    /// Erosion by the closed disk of radius `radius`: `{u : B(u, radius) ⊂ W}`.
    ///
    /// For a rectangle this is the rectangle shrunk by `radius` on every side.
    pub fn erode(&self, radius: f64) -> Result<Window> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::EmptyErosion { radius });
        }
        if radius == 0.0 {
            return Ok(*self);
        }
        let lo = [self.lo[0] + radius, self.lo[1] + radius];
        let hi = [self.hi[0] - radius, self.hi[1] - radius];
        Window::new(lo, hi).map_err(|_| Error::EmptyErosion { radius })
    }

    /// Dilation by `margin` on every side.
    pub fn expand(&self, margin: f64) -> Result<Window> {
        if !(margin >= 0.0) {
            return Err(Error::InvalidParameter("margin must be nonnegative"));
        }
        Window::new(
            [self.lo[0] - margin, self.lo[1] - margin],
            [self.hi[0] + margin, self.hi[1] + margin],
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Window {
        Window {
            lo: [self.lo[0] + dx, self.lo[1] + dy],
            hi: [self.hi[0] + dx, self.hi[1] + dy],
        }
    }

    /// Coordinates divided by `s` (s > 0).
    pub fn scale(&self, s: f64) -> Window {
        Window {
            lo: [self.lo[0] / s, self.lo[1] / s],
            hi: [self.hi[0] / s, self.hi[1] / s],
        }
    }
}

/// Finite set of distinct points observed in a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    points: Vec<Point>,
    window: Window,
}

impl Configuration {
    pub fn empty(window: Window) -> Self {
        Configuration { points: Vec::new(), window }
    }

    /// Validates that every point lies in the window and that no point repeats.
    pub fn new(window: Window, points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !window.contains(p)) {
            return Err(Error::PointOutsideWindow { x: p.x, y: p.y });
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_unstable_by(|&a, &b| points[a].cmp_coords(&points[b]));
        for w in order.windows(2) {
            let (a, b) = (points[w[0]], points[w[1]]);
            if a.x == b.x && a.y == b.y {
                return Err(Error::DuplicatePoint { x: a.x, y: a.y });
            }
        }
        Ok(Configuration { points, window })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn insert(&mut self, p: Point) -> Result<()> {
        if !self.window.contains(&p) {
            return Err(Error::PointOutsideWindow { x: p.x, y: p.y });
        }
        if self.points.iter().any(|q| q.x == p.x && q.y == p.y) {
            return Err(Error::DuplicatePoint { x: p.x, y: p.y });
        }
        self.points.push(p);
        Ok(())
    }

    /// Number of points inside `w`.
    pub fn count_in(&self, w: &Window) -> usize {
        self.points.iter().filter(|p| w.contains(p)).count()
    }

    /// Points `v != u` with `|v - u| <= range` (linear scan). `range` may be
    /// infinite.
    pub fn neighbors(&self, u: &Point, range: f64) -> Vec<Point> {
        let r2 = range * range;
        self.points
            .iter()
            .filter(|v| **v != *u && v.dist2(u) <= r2)
            .copied()
            .collect()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Configuration {
        Configuration {
            points: self.points.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect(),
            window: self.window.translate(dx, dy),
        }
    }

    /// All coordinates divided by `s` (s > 0).
    pub fn scale(&self, s: f64) -> Configuration {
        Configuration {
            points: self.points.iter().map(|p| Point::new(p.x / s, p.y / s)).collect(),
            window: self.window.scale(s),
        }
    }

    /// Smallest interpoint distance, `None` with fewer than two points.
    pub fn min_interpoint_distance(&self) -> Option<f64> {
        if self.points.len() < 2 {
            return None;
        }
        let index = RangeIndex::new(self, self.window.diameter() / libm::sqrt(self.len() as f64));
        let mut best = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            if let Some(d) = index.nearest_distance(p, Some(i)) {
                best = best.min(d);
            }
        }
        Some(best)
    }

    /// Nearest-neighbour distance of every point (infinite for a lone point).
    pub fn nearest_neighbor_distances(&self) -> Vec<f64> {
        if self.points.is_empty() {
            return Vec::new();
        }
        let index = RangeIndex::new(self, self.window.diameter() / libm::sqrt(self.len() as f64));
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| index.nearest_distance(p, Some(i)).unwrap_or(f64::INFINITY))
            .collect()
    }
}

const MAX_CELLS_PER_POINT: usize = 4;

/// Uniform bucket grid over a configuration's window.
///
/// Points are stored bucket-contiguously; `offsets[c]..offsets[c + 1]` are the
/// slots of cell `c`.
#[derive(Debug, Clone)]
pub struct RangeIndex {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    offsets: Vec<usize>,
    slots: Vec<(usize, Point)>,
}

impl RangeIndex {
    /// Index with the given cell size. The grid is coarsened when the cell
    /// count would greatly exceed the point count; an infinite or
    /// non-positive size gives a single bucket.
    pub fn new(cfg: &Configuration, cell_size: f64) -> Self {
        let w = cfg.window();
        let max_cells = (MAX_CELLS_PER_POINT * cfg.len()).max(1);
        let mut cell = if cell_size.is_finite() && cell_size > 0.0 {
            cell_size
        } else {
            w.side(0).max(w.side(1))
        };
        let dims_for = |c: f64| -> [usize; 2] {
            [
                ((w.side(0) / c) as usize).max(1).min(1 << 20),
                ((w.side(1) / c) as usize).max(1).min(1 << 20),
            ]
        };
        let mut dims = dims_for(cell);
        while dims[0] * dims[1] > max_cells {
            cell *= 2.0;
            dims = dims_for(cell);
        }
        // cells absorb the remainder so the grid covers the window exactly
        let cell_x = w.side(0) / dims[0] as f64;
        let cell_y = w.side(1) / dims[1] as f64;
        let cell = cell_x.max(cell_y);
        let dims = [
            libm::ceil(w.side(0) / cell).max(1.0) as usize,
            libm::ceil(w.side(1) / cell).max(1.0) as usize,
        ];
        let origin = w.lo();
        let mut index = RangeIndex {
            origin,
            cell,
            dims,
            offsets: vec![0; dims[0] * dims[1] + 1],
            slots: Vec::with_capacity(cfg.len()),
        };
        let cells: Vec<usize> = cfg.points().iter().map(|p| index.cell_of(p)).collect();
        for &c in &cells {
            index.offsets[c + 1] += 1;
        }
        for c in 0..dims[0] * dims[1] {
            index.offsets[c + 1] += index.offsets[c];
        }
        let mut fill = index.offsets.clone();
        index.slots.resize(cfg.len(), (0, Point::new(0.0, 0.0)));
        for (i, (&c, p)) in cells.iter().zip(cfg.points()).enumerate() {
            index.slots[fill[c]] = (i, *p);
            fill[c] += 1;
        }
        index
    }

    /// Index tuned for queries at radius `range`.
    pub fn for_range(cfg: &Configuration, range: f64) -> Self {
        RangeIndex::new(cfg, range)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn axis_cell(&self, v: f64, axis: usize) -> usize {
        let c = libm::floor((v - self.origin[axis]) / self.cell);
        if c < 0.0 {
            0
        } else {
            (c as usize).min(self.dims[axis] - 1)
        }
    }

    fn cell_of(&self, p: &Point) -> usize {
        self.axis_cell(p.y, 1) * self.dims[0] + self.axis_cell(p.x, 0)
    }

    /// Calls `f(index, point, squared distance)` for every indexed point
    /// within distance `range` of `u`, including any point equal to `u`.
    pub fn for_each_within<F: FnMut(usize, &Point, f64)>(&self, u: &Point, range: f64, mut f: F) {
        let r2 = range * range;
        let reach = if range.is_finite() {
            libm::ceil(range / self.cell)
        } else {
            f64::INFINITY
        };
        if reach >= self.dims[0].max(self.dims[1]) as f64 {
            for (i, p) in &self.slots {
                let d2 = p.dist2(u);
                if d2 <= r2 {
                    f(*i, p, d2);
                }
            }
            return;
        }
        let x0 = self.axis_cell(u.x - range, 0);
        let x1 = self.axis_cell(u.x + range, 0);
        let y0 = self.axis_cell(u.y - range, 1);
        let y1 = self.axis_cell(u.y + range, 1);
        for cy in y0..=y1 {
            let row = cy * self.dims[0];
            let lo = self.offsets[row + x0];
            let hi = self.offsets[row + x1 + 1];
            for (i, p) in &self.slots[lo..hi] {
                let d2 = p.dist2(u);
                if d2 <= r2 {
                    f(*i, p, d2);
                }
            }
        }
    }

    /// Points `v != u` with `|v - u| <= range`.
    pub fn neighbors(&self, u: &Point, range: f64) -> Vec<Point> {
        let mut out = Vec::new();
        self.for_each_within(u, range, |_, p, _| {
            if p != u {
                out.push(*p);
            }
        });
        out
    }

    /// Distance from `u` to the closest indexed point other than `skip`.
    pub fn nearest_distance(&self, u: &Point, skip: Option<usize>) -> Option<f64> {
        let mut radius = self.cell;
        let max_radius = 2.0 * self.cell * (self.dims[0].max(self.dims[1]) as f64 + 1.0);
        loop {
            let mut best = f64::INFINITY;
            self.for_each_within(u, radius, |i, _, d2| {
                if Some(i) != skip && d2 < best {
                    best = d2;
                }
            });
            if best.is_finite() {
                return Some(libm::sqrt(best));
            }
            if radius > max_radius {
                return None;
            }
            radius *= 2.0;
        }
    }
}
