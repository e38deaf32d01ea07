//! Occupancy grid with region labels, 8-connected A*, and grid ray casting.
//!
//! Cells are indexed `row * width + col` with row 0 at the bottom (smallest `y`).
//! Diagonal moves may not cut the corner of an occupied cell.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Occupied cells carry no label; free cells carry their region index.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Vector2<f64>,
    labels: Vec<Option<usize>>,
    n_regions: usize,
}

const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

impl OccupancyGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Vector2<f64>,
        labels: Vec<Option<usize>>,
        n_regions: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::InvalidScenario(format!("grid {width}x{height} with {} cells", labels.len())));
        }
        if !(resolution > 0.0) {
            return Err(Error::InvalidScenario("resolution must be positive".into()));
        }
        if let Some(r) = labels.iter().flatten().find(|&&r| r >= n_regions) {
            return Err(Error::InvalidScenario(format!("region label {r} >= {n_regions}")));
        }
        Ok(Self { width, height, resolution, origin, labels, n_regions })
    }

    /// Fully free grid labelled as region 0.
    pub fn open(width: usize, height: usize, resolution: f64) -> Self {
        Self::new(width, height, resolution, Vector2::zeros(), vec![Some(0); width * height], 1)
            .expect("valid open grid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn col_row(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.labels[idx].is_some()
    }

    pub fn region(&self, idx: usize) -> Option<usize> {
        self.labels[idx]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn set(&mut self, idx: usize, label: Option<usize>) {
        assert!(label.is_none_or(|r| r < self.n_regions), "label out of range");
        self.labels[idx] = label;
    }

    pub fn cell_center(&self, idx: usize) -> Vector2<f64> {
        let (c, r) = self.col_row(idx);
        self.origin + Vector2::new((c as f64 + 0.5) * self.resolution, (r as f64 + 0.5) * self.resolution)
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_at(&self, p: &Vector2<f64>) -> Option<usize> {
        let c = ((p.x - self.origin.x) / self.resolution).floor();
        let r = ((p.y - self.origin.y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some(self.index(c as usize, r as usize))
    }

    /// Region containing `p`, or `None` for occupied or outside points.
    pub fn region_at(&self, p: &Vector2<f64>) -> Option<usize> {
        self.cell_at(p).and_then(|i| self.labels[i])
    }

    fn offset(&self, idx: usize, dc: i64, dr: i64) -> Option<usize> {
        let (c, r) = self.col_row(idx);
        let (c, r) = (c as i64 + dc, r as i64 + dr);
        if c < 0 || r < 0 || c >= self.width as i64 || r >= self.height as i64 {
            None
        } else {
            Some(self.index(c as usize, r as usize))
        }
    }

    fn free_at(&self, idx: usize, dc: i64, dr: i64) -> bool {
        self.offset(idx, dc, dr).is_some_and(|j| self.is_free(j))
    }

    /// 8-connected moves from `idx` that land on a free cell without cutting an
    /// occupied corner, with their step cost in cells.
    pub fn moves(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        NEIGHBORS.iter().filter_map(move |&(dc, dr)| {
            let j = self.offset(idx, dc, dr)?;
            if !self.is_free(j) {
                return None;
            }
            if dc != 0 && dr != 0 {
                if !self.free_at(idx, dc, 0) || !self.free_at(idx, 0, dr) {
                    return None;
                }
                Some((j, SQRT_2))
            } else {
                Some((j, 1.0))
            }
        })
    }

    /// Copy in which every free cell whose centre lies within `radius` of an occupied
    /// cell centre (or of the grid border) becomes occupied.
    pub fn inflate(&self, radius: f64) -> OccupancyGrid {
        let reach = (radius / self.resolution).floor() as i64;
        let r2 = (radius / self.resolution).powi(2) + 1e-9;
        let mut out = self.clone();
        for idx in 0..self.len() {
            if !self.is_free(idx) {
                continue;
            }
            'scan: for dr in -reach..=reach {
                for dc in -reach..=reach {
                    if (dc * dc + dr * dr) as f64 > r2 || (dc == 0 && dr == 0) {
                        continue;
                    }
                    if !self.free_at(idx, dc, dr) {
                        out.labels[idx] = None;
                        break 'scan;
                    }
                }
            }
        }
        out
    }

    /// Free cells next (8-adjacent) to an occupied cell or the border.
    pub fn edge_cells(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.is_free(i) && NEIGHBORS.iter().any(|&(dc, dr)| !self.free_at(i, dc, dr)))
            .collect()
    }

    /// Free cells of `region`.
    pub fn region_cells(&self, region: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == Some(region)).collect()
    }

    /// Free-cell counts per region.
    pub fn region_areas(&self) -> Vec<usize> {
        let mut a = vec![0; self.n_regions];
        for r in self.labels.iter().flatten() {
            a[*r] += 1;
        }
        a
    }

    /// True when the free cells accepted by `keep` form one 8-connected component
    /// (vacuously true when there are none).
    pub fn is_connected(&self, keep: impl Fn(usize) -> bool) -> bool {
        let cells: Vec<usize> = (0..self.len()).filter(|&i| self.is_free(i) && keep(i)).collect();
        let Some(&first) = cells.first() else { return true };
        let mut seen = vec![false; self.len()];
        seen[first] = true;
        let mut stack = vec![first];
        let mut reached = 1;
        while let Some(i) = stack.pop() {
            for (j, _) in self.moves(i) {
                if !seen[j] && keep(j) {
                    seen[j] = true;
                    reached += 1;
                    stack.push(j);
                }
            }
        }
        reached == cells.len()
    }

    /// Distance along the unit direction `dir` from `from` to the first occupied cell
    /// or the grid border, if it is within `max_range`. A start inside an occupied cell
    /// hits at 0.
    pub fn cast_ray(&self, from: &Vector2<f64>, dir: &Vector2<f64>, max_range: f64) -> Option<f64> {
        let res = self.resolution;
        let local = (from - self.origin) / res;
        let mut c = local.x.floor() as i64;
        let mut r = local.y.floor() as i64;
        let inside = |c: i64, r: i64| c >= 0 && r >= 0 && c < self.width as i64 && r < self.height as i64;
        let blocked = |c: i64, r: i64| !inside(c, r) || self.labels[self.index(c as usize, r as usize)].is_none();
        if blocked(c, r) {
            return Some(0.0);
        }
        let step_c: i64 = if dir.x > 0.0 { 1 } else { -1 };
        let step_r: i64 = if dir.y > 0.0 { 1 } else { -1 };
        let next_boundary =
            |pos: f64, cell: i64, step: i64| if step > 0 { (cell + 1) as f64 - pos } else { pos - cell as f64 };
        let mut t_c = if dir.x != 0.0 { next_boundary(local.x, c, step_c) / dir.x.abs() } else { f64::INFINITY };
        let mut t_r = if dir.y != 0.0 { next_boundary(local.y, r, step_r) / dir.y.abs() } else { f64::INFINITY };
        let d_c = if dir.x != 0.0 { 1.0 / dir.x.abs() } else { f64::INFINITY };
        let d_r = if dir.y != 0.0 { 1.0 / dir.y.abs() } else { f64::INFINITY };
        let limit = max_range / res;
        loop {
            let t = t_c.min(t_r);
            if t > limit {
                return None;
            }
            if t_c <= t_r {
                c += step_c;
                t_c += d_c;
            } else {
                r += step_r;
                t_r += d_r;
            }
            if blocked(c, r) {
                return Some(t * res);
            }
        }
    }

    /// True when the segment `a → b` crosses no occupied cell before reaching `b`
    /// (within `slack`).
    pub fn line_of_sight(&self, a: &Vector2<f64>, b: &Vector2<f64>, slack: f64) -> bool {
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            return self.cell_at(a).is_some_and(|i| self.is_free(i));
        }
        match self.cast_ray(a, &(d / len), len) {
            None => true,
            Some(t) => t >= len - slack,
        }
    }
}

/// An 8-connected sequence of free cells with its metric length.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub cells: Vec<usize>,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    h: f64,
    idx: usize,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    // Reversed so the max-heap pops the smallest (f, h, idx).
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then(other.h.total_cmp(&self.h)).then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Octile distance in cells.
pub fn octile(grid: &OccupancyGrid, a: usize, b: usize) -> f64 {
    let (ac, ar) = grid.col_row(a);
    let (bc, br) = grid.col_row(b);
    let dx = ac.abs_diff(bc) as f64;
    let dy = ar.abs_diff(br) as f64;
    dx.max(dy) + (SQRT_2 - 1.0) * dx.min(dy)
}

/// Shortest 8-connected path between free cells.
pub fn astar(grid: &OccupancyGrid, start: usize, goal: usize) -> Result<GridPath> {
    astar_within(grid, start, goal, |_| true)
}

/// Shortest path that only enters cells accepted by `passable` (the start is always
/// allowed). Corner cutting is judged on occupancy alone.
pub fn astar_within(
    grid: &OccupancyGrid,
    start: usize,
    goal: usize,
    passable: impl Fn(usize) -> bool,
) -> Result<GridPath> {
    let unreachable = Error::Unreachable { start, goal };
    if !grid.is_free(start) || !grid.is_free(goal) || !passable(goal) {
        return Err(unreachable);
    }
    let n = grid.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[start] = 0.0;
    let h0 = octile(grid, start, goal);
    open.push(OpenEntry { f: h0, h: h0, idx: start });
    while let Some(OpenEntry { idx, .. }) = open.pop() {
        if closed[idx] {
            continue;
        }
        if idx == goal {
            let mut cells = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = parent[cur];
                cells.push(cur);
            }
            cells.reverse();
            return Ok(GridPath { cells, length: g[goal] * grid.resolution() });
        }
        closed[idx] = true;
        for (j, cost) in grid.moves(idx) {
            if closed[j] || !passable(j) {
                continue;
            }
            let cand = g[idx] + cost;
            if cand < g[j] {
                g[j] = cand;
                parent[j] = idx;
                let h = octile(grid, j, goal);
                open.push(OpenEntry { f: cand + h, h, idx: j });
            }
        }
    }
    Err(unreachable)
}

/// Text form: rows listed top row first, each a run-length string of `<count><symbol>`
/// tokens where `#` is occupied and `A`, `B`, ... label regions 0, 1, ...
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridDocument {
    pub resolution: f64,
    #[serde(default)]
    pub origin: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub rows: Vec<String>,
}

fn symbol(label: Option<usize>) -> char {
    match label {
        None => '#',
        Some(r) => (b'A' + r as u8) as char,
    }
}

/// Run-length encodes one row.
pub fn encode_row(labels: &[Option<usize>]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < labels.len() {
        let mut j = i;
        while j < labels.len() && labels[j] == labels[i] {
            j += 1;
        }
        out.push_str(&format!("{}{}", j - i, symbol(labels[i])));
        i = j;
    }
    out
}

/// Decodes one run-length row; a symbol without a count means one cell.
pub fn decode_row(text: &str) -> Result<Vec<Option<usize>>> {
    let mut out = Vec::new();
    let mut count = String::new();
    for ch in text.chars().filter(|c| !c.is_whitespace()) {
        if ch.is_ascii_digit() {
            count.push(ch);
            continue;
        }
        let label = match ch {
            '#' => None,
            'A'..='Z' => Some((ch as u8 - b'A') as usize),
            _ => return Err(Error::InvalidScenario(format!("unknown grid symbol {ch:?}"))),
        };
        let k: usize = if count.is_empty() { 1 } else { count.parse().expect("digits") };
        out.extend(std::iter::repeat_n(label, k));
        count.clear();
    }
    if !count.is_empty() {
        return Err(Error::InvalidScenario(format!("dangling run length in {text:?}")));
    }
    Ok(out)
}

impl GridDocument {
    pub fn from_grid(g: &OccupancyGrid) -> Self {
        let rows = (0..g.height).rev().map(|r| encode_row(&g.labels[r * g.width..(r + 1) * g.width])).collect();
        Self { resolution: g.resolution, origin: [g.origin.x, g.origin.y], width: g.width, height: g.height, rows }
    }

    pub fn into_grid(self, n_regions: usize) -> Result<OccupancyGrid> {
        if self.rows.len() != self.height {
            return Err(Error::InvalidScenario(format!("{} rows for height {}", self.rows.len(), self.height)));
        }
        let mut labels = vec![None; self.width * self.height];
        for (k, text) in self.rows.iter().enumerate() {
            let row = decode_row(text)?;
            if row.len() != self.width {
                return Err(Error::InvalidScenario(format!(
                    "row {k} has {} cells, expected {}",
                    row.len(),
                    self.width
                )));
            }
            let r = self.height - 1 - k;
            labels[r * self.width..(r + 1) * self.width].copy_from_slice(&row);
        }
        OccupancyGrid::new(
            self.width,
            self.height,
            self.resolution,
            Vector2::new(self.origin[0], self.origin[1]),
            labels,
            n_regions,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&str]) -> OccupancyGrid {
        GridDocument {
            resolution: 0.1,
            origin: [0.0, 0.0],
            width: decode_row(rows[0]).unwrap().len(),
            height: rows.len(),
            rows: rows.iter().map(|s| s.to_string()).collect(),
        }
        .into_grid(3)
        .unwrap()
    }

    #[test]
    fn corridor_length() {
        let g = OccupancyGrid::open(5, 1, 0.1);
        let p = astar(&g, 0, 4).unwrap();
        assert_eq!(p.cells, vec![0, 1, 2, 3, 4]);
        assert!((p.length - 0.4).abs() < 1e-12);
    }

    #[test]
    fn start_equals_goal() {
        let g = OccupancyGrid::open(3, 3, 0.5);
        let p = astar(&g, 4, 4).unwrap();
        assert_eq!(p.cells, vec![4]);
        assert_eq!(p.length, 0.0);
    }

    #[test]
    fn walled_goal_is_unreachable() {
        let g = from_rows(&["5A", "1A3#1A", "1A1#1A1#1A", "1A3#1A"]);
        let goal = g.index(2, 1);
        assert!(g.is_free(goal));
        assert!(matches!(astar(&g, 0, goal), Err(Error::Unreachable { .. })));
        assert!(astar(&g, 0, g.index(1, 1)).is_err());
    }

    #[test]
    fn no_corner_cutting() {
        // Two free cells touching only diagonally past an occupied corner.
        let g = from_rows(&["1#1A", "1A1#"]);
        assert!(astar(&g, g.index(0, 0), g.index(1, 1)).is_err());
        let open = OccupancyGrid::open(2, 2, 1.0);
        let p = astar(&open, 0, 3).unwrap();
        assert_eq!(p.cells.len(), 2);
        assert!((p.length - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn restricted_search_respects_mask() {
        let g = from_rows(&["3A3B3C"]);
        let (s, t) = (0, 8);
        assert!(astar_within(&g, s, t, |i| g.region(i) != Some(1)).is_err());
        assert_eq!(astar_within(&g, s, t, |_| true).unwrap().cells.len(), 9);
    }

    #[test]
    fn rle_round_trip() {
        let g = from_rows(&["2#3A1B", "6C", "1A1B1C1#2A"]);
        let doc = GridDocument::from_grid(&g);
        assert_eq!(doc.rows[0], "2#3A1B");
        assert_eq!(doc.clone().into_grid(3).unwrap(), g);
        assert!(decode_row("3x").is_err());
        assert!(decode_row("3A4").is_err());
        assert_eq!(decode_row("A2#").unwrap(), vec![Some(0), None, None]);
    }

    #[test]
    fn inflation_blocks_neighbours() {
        let g = from_rows(&["7A", "7A", "3A1#3A", "7A", "7A"]);
        let inf = g.inflate(0.1);
        assert!(!inf.is_free(g.index(2, 2)) && !inf.is_free(g.index(3, 3)));
        assert!(inf.is_free(g.index(2, 3)) && inf.is_free(g.index(1, 2)));
        // the border counts as occupied
        assert!(!inf.is_free(g.index(0, 2)));
        let wide = g.inflate(0.15);
        assert!(!wide.is_free(g.index(2, 3)) && wide.is_free(g.index(1, 2)));
    }

    #[test]
    fn ray_hits_wall_face() {
        let g = from_rows(&["10A1#"]);
        let t = g.cast_ray(&Vector2::new(0.05, 0.05), &Vector2::new(1.0, 0.0), 5.0).unwrap();
        assert!((t - 0.95).abs() < 1e-12);
        assert!(g.cast_ray(&Vector2::new(0.05, 0.05), &Vector2::new(1.0, 0.0), 0.5).is_none());
        // leaving through the border counts as a hit
        let t = g.cast_ray(&Vector2::new(0.55, 0.05), &Vector2::new(-1.0, 0.0), 5.0).unwrap();
        assert!((t - 0.55).abs() < 1e-12);
    }

    #[test]
    fn connectivity() {
        let g = from_rows(&["2A1#2A"]);
        assert!(!g.is_connected(|_| true));
        assert!(g.is_connected(|i| i < 2));
        assert_eq!(g.edge_cells().len(), 4);
        assert_eq!(g.region_areas(), vec![4, 0, 0]);
    }
}
