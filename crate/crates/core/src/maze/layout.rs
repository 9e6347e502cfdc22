use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted layout side, in cells.
pub const MAX_SIDE: usize = 256;

/// Default maze: an 8x11 interior with three blockable arms hanging off a
/// central ring.
pub const DEFAULT_LAYOUT: &str = "\
#############
#LLL#...#RRR#
#L#L#.#.#R#R#
#L#LL...RR#R#
#L#L#.#.#R#R#
#LLL#...#RRR#
######B######
#BBB#BBB#BBB#
#BBBBB#BBBBB#
#############
";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Left,
    Right,
    Bottom,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Left, Region::Right, Region::Bottom];

    pub fn tag(self) -> char {
        match self {
            Region::Left => 'L',
            Region::Right => 'R',
            Region::Bottom => 'B',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Left => "left",
            Region::Right => "right",
            Region::Bottom => "bottom",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Region::Left),
            "right" | "r" => Ok(Region::Right),
            "bottom" | "b" => Ok(Region::Bottom),
            other => Err(Error::config(format!("unknown region `{other}` (left|right|bottom)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Continuous `(x, y)` of the cell centre; `x` runs along columns.
    pub fn center(self) -> [f64; 2] {
        [self.col as f64 + 0.5, self.row as f64 + 0.5]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tile {
    Wall,
    Free(Option<Region>),
}

/// Grid of unit cells. Row 0 is the top line of the text form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MazeLayout {
    rows: usize,
    cols: usize,
    tiles: Vec<Tile>,
}

impl MazeLayout {
    pub fn default_layout() -> Self {
        DEFAULT_LAYOUT.parse().expect("built-in layout is valid")
    }

    /// Parses without the connectivity requirement.
    pub fn parse_unchecked(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::malformed("layout has no rows"));
        }
        let cols = lines[0].chars().count();
        if lines.len() > MAX_SIDE || cols > MAX_SIDE {
            return Err(Error::malformed(format!("layout exceeds {MAX_SIDE} cells per side")));
        }
        let mut tiles = Vec::with_capacity(lines.len() * cols);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::malformed(format!("row {r} has {} cells, expected {cols}", line.chars().count())));
            }
            for (c, ch) in line.chars().enumerate() {
                tiles.push(match ch {
                    '#' => Tile::Wall,
                    '.' => Tile::Free(None),
                    'L' => Tile::Free(Some(Region::Left)),
                    'R' => Tile::Free(Some(Region::Right)),
                    'B' => Tile::Free(Some(Region::Bottom)),
                    other => return Err(Error::malformed(format!("unexpected `{other}` at row {r}, col {c}"))),
                });
            }
        }
        let layout = Self { rows: lines.len(), cols, tiles };
        for r in 0..layout.rows {
            for c in 0..layout.cols {
                let border = r == 0 || c == 0 || r + 1 == layout.rows || c + 1 == layout.cols;
                if border && layout.is_free(Cell::new(r, c)) {
                    return Err(Error::malformed(format!("border cell ({r}, {c}) is not a wall")));
                }
            }
        }
        Ok(layout)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn tile(&self, cell: Cell) -> Tile {
        if cell.row >= self.rows || cell.col >= self.cols {
            return Tile::Wall;
        }
        self.tiles[cell.row * self.cols + cell.col]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        matches!(self.tile(cell), Tile::Free(_))
    }

    pub fn region_of(&self, cell: Cell) -> Option<Region> {
        match self.tile(cell) {
            Tile::Free(r) => r,
            Tile::Wall => None,
        }
    }

    /// Cell containing a continuous point, if it lies on the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let (c, r) = (x.floor() as usize, y.floor() as usize);
        (r < self.rows && c < self.cols).then_some(Cell::new(r, c))
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some_and(|c| self.is_free(c))
    }

    pub fn in_region(&self, x: f64, y: f64, region: Region) -> bool {
        self.cell_at(x, y).is_some_and(|c| self.region_of(c) == Some(region))
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| Cell::new(r, c)))
            .filter(|&c| self.is_free(c))
            .collect()
    }

    pub fn region_cells(&self, region: Region) -> Vec<Cell> {
        self.free_cells().into_iter().filter(|&c| self.region_of(c) == Some(region)).collect()
    }

    /// Copy with the region's cells turned into walls.
    pub fn with_blocked(&self, region: Option<Region>) -> Self {
        let mut out = self.clone();
        if let Some(region) = region {
            for t in &mut out.tiles {
                if *t == Tile::Free(Some(region)) {
                    *t = Tile::Wall;
                }
            }
        }
        out
    }

    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        // up, down, left, right
        let candidates = [
            cell.row.checked_sub(1).map(|r| Cell::new(r, cell.col)),
            Some(Cell::new(cell.row + 1, cell.col)),
            cell.col.checked_sub(1).map(|c| Cell::new(cell.row, c)),
            Some(Cell::new(cell.row, cell.col + 1)),
        ];
        candidates.into_iter().flatten().filter(|&c| self.is_free(c))
    }

    /// Number of 4-connected components among free cells.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.tiles.len()];
        let mut count = 0;
        for start in self.free_cells() {
            if seen[start.row * self.cols + start.col] {
                continue;
            }
            count += 1;
            let mut queue = VecDeque::from([start]);
            seen[start.row * self.cols + start.col] = true;
            while let Some(cell) = queue.pop_front() {
                for n in self.neighbors(cell) {
                    let k = n.row * self.cols + n.col;
                    if !seen[k] {
                        seen[k] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        count
    }

    /// Region cell farthest (in steps) from the cells outside the region;
    /// ties go to the first in row-major order.
    pub fn region_goal(&self, region: Region) -> Result<Cell> {
        let cells = self.region_cells(region);
        if cells.is_empty() {
            return Err(Error::config(format!("layout has no `{}` cells", region.tag())));
        }
        let mut dist = vec![usize::MAX; self.tiles.len()];
        let mut queue = VecDeque::new();
        for c in self.free_cells() {
            if self.region_of(c) != Some(region) {
                dist[c.row * self.cols + c.col] = 0;
                queue.push_back(c);
            }
        }
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell.row * self.cols + cell.col];
            for n in self.neighbors(cell) {
                let k = n.row * self.cols + n.col;
                if dist[k] == usize::MAX {
                    dist[k] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        let mut best = cells[0];
        for &c in &cells {
            let d = dist[c.row * self.cols + c.col];
            if d != usize::MAX && (dist[best.row * self.cols + best.col] == usize::MAX || d > dist[best.row * self.cols + best.col]) {
                best = c;
            }
        }
        Ok(best)
    }
}

impl FromStr for MazeLayout {
    type Err = Error;

    /// Parses and requires the free cells to form one connected component.
    fn from_str(text: &str) -> Result<Self> {
        let layout = Self::parse_unchecked(text)?;
        match layout.components() {
            0 => Err(Error::malformed("layout has no free cells")),
            1 => Ok(layout),
            n => Err(Error::malformed(format!("free cells form {n} disconnected components"))),
        }
    }
}

impl fmt::Display for MazeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            for c in 0..self.cols {
                let ch = match self.tile(Cell::new(r, c)) {
                    Tile::Wall => '#',
                    Tile::Free(None) => '.',
                    Tile::Free(Some(region)) => region.tag(),
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
