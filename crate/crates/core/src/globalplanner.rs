//! Costmap inflation, A* search and line-of-sight waypoint shortcutting.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::SQRT_2;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{Cell, GridGeometry, RobotParams};
use crate::mapping::{CellClass, OccupancyGrid};
use crate::pnm;

/// Soft-cost weight in the step cost.
pub const COST_WEIGHT: f64 = 4.0;
pub const LETHAL: f64 = f64::INFINITY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("start cell is lethal or off the map")]
    StartInvalid,
    #[error("goal cell is lethal or off the map")]
    GoalInvalid,
    #[error("goal is unreachable")]
    NoPath,
    #[error("inflation radius {inflation} is smaller than the robot radius {radius}")]
    InvalidInflation { inflation: f64, radius: f64 },
}

/// Squared Euclidean distance (in cells) from every cell centre to the
/// nearest source cell centre; infinite when there is no source.
pub fn squared_distance_transform(cols: usize, rows: usize, sources: &[bool]) -> Vec<f64> {
    assert_eq!(sources.len(), cols * rows);
    let mut grid: Vec<f64> = sources.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut f = Vec::new();
    let mut out = Vec::new();
    for row in 0..rows {
        f.clear();
        f.extend_from_slice(&grid[row * cols..(row + 1) * cols]);
        edt_1d(&f, &mut out);
        grid[row * cols..(row + 1) * cols].copy_from_slice(&out);
    }
    for col in 0..cols {
        f.clear();
        f.extend((0..rows).map(|r| grid[r * cols + col]));
        edt_1d(&f, &mut out);
        for (r, &d) in out.iter().enumerate() {
            grid[r * cols + col] = d;
        }
    }
    grid
}

/// Lower envelope of parabolas rooted at the finite samples.
fn edt_1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    for q in (0..n).filter(|&q| f[q].is_finite()) {
        let fq = f[q] + (q * q) as f64;
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.clear();
                z.push(f64::NEG_INFINITY);
                break;
            };
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    pub geometry: GridGeometry,
    /// Per-cell soft cost in [0, 1], or `LETHAL`.
    pub cost: Vec<f64>,
    pub inflation_radius: f64,
}

impl Costmap {
    /// Costmap from raw per-cell values (`LETHAL` allowed).
    pub fn from_costs(geometry: GridGeometry, cost: Vec<f64>) -> Self {
        assert_eq!(cost.len(), geometry.len());
        debug_assert!(cost.iter().all(|&c| c == LETHAL || (0.0..=1.0).contains(&c)));
        Self {
            geometry,
            cost,
            inflation_radius: 0.0,
        }
    }

    #[inline]
    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.col < self.geometry.cols && cell.row < self.geometry.rows
    }

    #[inline]
    pub fn is_lethal(&self, cell: Cell) -> bool {
        self.cost[self.geometry.index(cell)] == LETHAL
    }

    #[inline]
    pub fn cost_at(&self, cell: Cell) -> f64 {
        self.cost[self.geometry.index(cell)]
    }

    fn lethal_xy(&self, col: i64, row: i64) -> bool {
        if !self.geometry.contains(col, row) {
            return true;
        }
        self.cost[row as usize * self.geometry.cols + col as usize] == LETHAL
    }

    pub fn lethal_count(&self) -> usize {
        self.cost.iter().filter(|&&c| c == LETHAL).count()
    }

    /// Closest non-lethal cell by breadth-first search over 4-neighbours.
    pub fn nearest_free(&self, cell: Cell) -> Option<Cell> {
        if !self.in_bounds(cell) {
            return None;
        }
        let g = &self.geometry;
        let mut seen = vec![false; g.len()];
        let mut queue = VecDeque::from([cell]);
        seen[g.index(cell)] = true;
        while let Some(c) = queue.pop_front() {
            if !self.is_lethal(c) {
                return Some(c);
            }
            let (col, row) = (c.col as i64, c.row as i64);
            for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if g.contains(col + dc, row + dr) {
                    let n = Cell::new((col + dc) as usize, (row + dr) as usize);
                    if !std::mem::replace(&mut seen[g.index(n)], true) {
                        queue.push_back(n);
                    }
                }
            }
        }
        None
    }

    /// Greyscale rendering: lethal black, soft cost shaded, free white.
    pub fn to_pgm(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut data = Vec::with_capacity(g.len());
        for img_row in 0..g.rows {
            let row = g.rows - 1 - img_row;
            for col in 0..g.cols {
                let c = self.cost_at(Cell::new(col, row));
                data.push(if c == LETHAL { 0 } else { (254.0 - 200.0 * c).round() as u8 });
            }
        }
        pnm::encode_pgm8(g.cols, g.rows, &data)
    }
}

/// Inflate occupied and unknown cells: lethal within `params.radius`,
/// linear soft cost out to `inflation_radius`.
pub fn inflate(grid: &OccupancyGrid, params: &RobotParams, inflation_radius: f64) -> Result<Costmap, PlanError> {
    let sources: Vec<bool> = grid.classes().into_iter().map(|c| c != CellClass::Free).collect();
    inflate_sources(grid.geometry, &sources, params.radius, inflation_radius)
}

pub fn inflate_sources(
    geometry: GridGeometry,
    sources: &[bool],
    radius: f64,
    inflation_radius: f64,
) -> Result<Costmap, PlanError> {
    if !(inflation_radius >= radius) {
        return Err(PlanError::InvalidInflation {
            inflation: inflation_radius,
            radius,
        });
    }
    let res = geometry.resolution;
    let d2 = squared_distance_transform(geometry.cols, geometry.rows, sources);
    let r_cells = radius / res;
    let lethal_d2 = r_cells * r_cells + 1e-9;
    let band = inflation_radius - radius;
    let cost = d2
        .iter()
        .map(|&d2| {
            if d2 <= lethal_d2 {
                return LETHAL;
            }
            let d = d2.sqrt() * res;
            if band > 0.0 && d < inflation_radius {
                (1.0 - (d - radius) / band).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(Costmap {
        geometry,
        cost,
        inflation_radius,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<Cell>,
    pub total_cost: f64,
}

impl Path {
    /// Euclidean polyline length in cells.
    pub fn length_cells(&self) -> f64 {
        polyline_length(&self.cells)
    }
}

pub fn polyline_length(cells: &[Cell]) -> f64 {
    cells
        .windows(2)
        .map(|w| {
            let dc = w[1].col as f64 - w[0].col as f64;
            let dr = w[1].row as f64 - w[0].row as f64;
            dc.hypot(dr)
        })
        .sum()
}

#[inline]
pub fn step_cost(delta: f64, c_from: f64, c_to: f64) -> f64 {
    delta * (1.0 + COST_WEIGHT * (c_from + c_to) / 2.0)
}

#[inline]
pub fn octile(a: Cell, b: Cell) -> f64 {
    let dx = (a.col as f64 - b.col as f64).abs();
    let dy = (a.row as f64 - b.row as f64).abs();
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    (hi - lo) + SQRT_2 * lo
}

const NEIGHBOURS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    h: f64,
    index: usize,
    g: f64,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// A* over 8-connected cells. Diagonal moves need both orthogonal
/// neighbours non-lethal.
pub fn plan(cm: &Costmap, start: Cell, goal: Cell) -> Result<Path, PlanError> {
    if !cm.in_bounds(start) || cm.is_lethal(start) {
        return Err(PlanError::StartInvalid);
    }
    if !cm.in_bounds(goal) || cm.is_lethal(goal) {
        return Err(PlanError::GoalInvalid);
    }
    let g_ = &cm.geometry;
    let n = g_.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    let s = g_.index(start);
    let goal_i = g_.index(goal);
    g[s] = 0.0;
    let h0 = octile(start, goal);
    heap.push(Open {
        f: h0,
        h: h0,
        index: s,
        g: 0.0,
    });
    while let Some(cur) = heap.pop() {
        if cur.g > g[cur.index] {
            continue;
        }
        if cur.index == goal_i {
            break;
        }
        let c = g_.cell_of(cur.index);
        let (col, row) = (c.col as i64, c.row as i64);
        let c_from = cm.cost[cur.index];
        for (dc, dr) in NEIGHBOURS {
            let (nc, nr) = (col + dc, row + dr);
            if cm.lethal_xy(nc, nr) {
                continue;
            }
            let diagonal = dc != 0 && dr != 0;
            if diagonal && (cm.lethal_xy(col + dc, row) || cm.lethal_xy(col, row + dr)) {
                continue;
            }
            let ni = nr as usize * g_.cols + nc as usize;
            let delta = if diagonal { SQRT_2 } else { 1.0 };
            let ng = cur.g + step_cost(delta, c_from, cm.cost[ni]);
            if ng < g[ni] {
                g[ni] = ng;
                parent[ni] = cur.index;
                let h = octile(Cell::new(nc as usize, nr as usize), goal);
                heap.push(Open {
                    f: ng + h,
                    h,
                    index: ni,
                    g: ng,
                });
            }
        }
    }
    if !g[goal_i].is_finite() {
        return Err(PlanError::NoPath);
    }
    let mut cells = vec![goal];
    let mut i = goal_i;
    while i != s {
        i = parent[i];
        cells.push(g_.cell_of(i));
    }
    cells.reverse();
    Ok(Path {
        cells,
        total_cost: g[goal_i],
    })
}

/// Cells crossed by the segment between two cell centres. When the segment
/// passes exactly through a lattice corner both orthogonal cells are
/// visited. Stops early and returns false as soon as `visit` does.
pub fn supercover(a: Cell, b: Cell, mut visit: impl FnMut(i64, i64) -> bool) -> bool {
    let (mut x, mut y) = (a.col as i64, a.row as i64);
    let (dx, dy) = (b.col as i64 - x, b.row as i64 - y);
    let (nx, ny) = (dx.abs(), dy.abs());
    let (sx, sy) = (dx.signum(), dy.signum());
    if !visit(x, y) {
        return false;
    }
    let (mut ix, mut iy) = (0, 0);
    while ix < nx || iy < ny {
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            if !visit(x + sx, y) || !visit(x, y + sy) {
                return false;
            }
            x += sx;
            y += sy;
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        if !visit(x, y) {
            return false;
        }
    }
    true
}

pub fn line_of_sight(cm: &Costmap, a: Cell, b: Cell) -> bool {
    supercover(a, b, |c, r| !cm.lethal_xy(c, r))
}

/// Greedy line-of-sight pruning; endpoints always kept.
pub fn shortcut(path: &Path, cm: &Costmap) -> Vec<Cell> {
    let cells = &path.cells;
    let Some(&first) = cells.first() else {
        return Vec::new();
    };
    let mut out = vec![first];
    let mut anchor = 0;
    while anchor + 1 < cells.len() {
        let next = (anchor + 2..cells.len())
            .rev()
            .find(|&j| line_of_sight(cm, cells[anchor], cells[j]))
            .unwrap_or(anchor + 1);
        out.push(cells[next]);
        anchor = next;
    }
    out
}

/// `col,row,x,y` rows with cell-centre world coordinates.
pub fn cells_csv(cells: &[Cell], geometry: &GridGeometry) -> String {
    let mut s = String::from("col,row,x,y\n");
    for &c in cells {
        let (x, y) = geometry.cell_center(c);
        let _ = writeln!(s, "{},{},{:.4},{:.4}", c.col, c.row, x, y);
    }
    s
}

pub fn cells_to_world(cells: &[Cell], geometry: &GridGeometry) -> Vec<(f64, f64)> {
    cells.iter().map(|&c| geometry.cell_center(c)).collect()
}

pub const OVERLAY_PATH: u8 = 127;
pub const OVERLAY_WAYPOINT: u8 = 60;

/// Map image with the path and waypoints drawn over it.
pub fn render_overlay(grid: &OccupancyGrid, path: &[Cell], waypoints: &[Cell]) -> Vec<u8> {
    let g = &grid.geometry;
    let mut values: Vec<u8> = grid.classes().into_iter().map(|c| c.pgm_value()).collect();
    for &c in path {
        values[g.index(c)] = OVERLAY_PATH;
    }
    for &c in waypoints {
        values[g.index(c)] = OVERLAY_WAYPOINT;
    }
    let mut data = Vec::with_capacity(g.len());
    for img_row in 0..g.rows {
        let row = g.rows - 1 - img_row;
        data.extend_from_slice(&values[row * g.cols..(row + 1) * g.cols]);
    }
    pnm::encode_pgm8(g.cols, g.rows, &data)
}
