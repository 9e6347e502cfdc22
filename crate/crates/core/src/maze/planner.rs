use std::collections::VecDeque;

use super::layout::{Cell, MazeLayout};
use crate::error::{Error, Result};

/// Shortest 4-connected cell path from `start` to `goal`, both inclusive.
///
/// Breadth-first search expanding neighbours in the order up, down, left,
/// right; the first discovery of a cell fixes its parent, which makes ties
/// deterministic.
pub fn plan_waypoints(layout: &MazeLayout, start: Cell, goal: Cell) -> Result<Vec<Cell>> {
    if !layout.is_free(start) || !layout.is_free(goal) {
        return Err(Error::Planning(format!("start {start:?} or goal {goal:?} is not a free cell")));
    }
    let cols = layout.cols();
    let idx = |c: Cell| c.row * cols + c.col;
    let mut parent: Vec<Option<Cell>> = vec![None; layout.rows() * cols];
    let mut seen = vec![false; layout.rows() * cols];
    seen[idx(start)] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(cell) = queue.pop_front() {
        if cell == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while let Some(p) = parent[idx(cur)] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(path);
        }
        for n in layout.neighbors(cell) {
            if !seen[idx(n)] {
                seen[idx(n)] = true;
                parent[idx(n)] = Some(cell);
                queue.push_back(n);
            }
        }
    }
    Err(Error::Planning(format!("goal {goal:?} is unreachable from {start:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive DFS over simple paths; exponential, for tiny grids only.
    fn brute_force_shortest(layout: &MazeLayout, start: Cell, goal: Cell) -> Option<usize> {
        fn dfs(l: &MazeLayout, cur: Cell, goal: Cell, visited: &mut Vec<Cell>, best: &mut Option<usize>) {
            if cur == goal {
                let len = visited.len();
                if best.is_none_or(|b| len < b) {
                    *best = Some(len);
                }
                return;
            }
            if best.is_some_and(|b| visited.len() >= b) {
                return;
            }
            let (r, c) = (cur.row as i64, cur.col as i64);
            for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 {
                    continue;
                }
                let n = Cell::new(nr as usize, nc as usize);
                if l.is_free(n) && !visited.contains(&n) {
                    visited.push(n);
                    dfs(l, n, goal, visited, best);
                    visited.pop();
                }
            }
        }
        let mut best = None;
        let mut visited = vec![start];
        dfs(layout, start, goal, &mut visited, &mut best);
        best
    }

    fn is_valid_path(layout: &MazeLayout, path: &[Cell]) -> bool {
        path.iter().all(|&c| layout.is_free(c))
            && path.windows(2).all(|w| w[0].row.abs_diff(w[1].row) + w[0].col.abs_diff(w[1].col) == 1)
    }

    #[test]
    fn trivial_paths() {
        let room: MazeLayout = "#######\n#.....#\n#.....#\n#.....#\n#.....#\n#.....#\n#######\n".parse().unwrap();
        assert_eq!(plan_waypoints(&room, Cell::new(2, 2), Cell::new(2, 2)).unwrap().len(), 1);
        let p = plan_waypoints(&room, Cell::new(1, 1), Cell::new(1, 4)).unwrap();
        assert_eq!(p.len(), 4);
        assert!(is_valid_path(&room, &p));
    }

    #[test]
    fn u_shaped_obstacle_matches_enumeration() {
        let layout: MazeLayout = "\
######
#....#
#.##.#
#.#..#
#.#..#
######
"
        .parse()
        .unwrap();
        let (s, g) = (Cell::new(3, 1), Cell::new(3, 3));
        let p = plan_waypoints(&layout, s, g).unwrap();
        assert!(is_valid_path(&layout, &p));
        assert_eq!(Some(p.len()), brute_force_shortest(&layout, s, g));
        assert_eq!(p.len(), 9);
    }

    #[test]
    fn unreachable_goal_is_a_planning_error() {
        let layout = MazeLayout::parse_unchecked("#####\n#.#.#\n#####\n").unwrap();
        assert!(matches!(plan_waypoints(&layout, Cell::new(1, 1), Cell::new(1, 3)), Err(Error::Planning(_))));
        assert!(plan_waypoints(&layout, Cell::new(0, 0), Cell::new(1, 3)).is_err());
    }

    #[test]
    fn ties_follow_neighbor_order() {
        let room: MazeLayout = "####\n#..#\n#..#\n####\n".parse().unwrap();
        // Down is expanded before right, so the path goes down first.
        let p = plan_waypoints(&room, Cell::new(1, 1), Cell::new(2, 2)).unwrap();
        assert_eq!(p, vec![Cell::new(1, 1), Cell::new(2, 1), Cell::new(2, 2)]);
    }

    fn small_layout() -> impl Strategy<Value = (MazeLayout, Cell, Cell)> {
        (3usize..=6, 3usize..=6)
            .prop_flat_map(|(rows, cols)| {
                (Just((rows, cols)), proptest::collection::vec(proptest::bool::weighted(0.7), (rows - 2) * (cols - 2)))
            })
            .prop_filter_map("needs two free cells", |((rows, cols), open)| {
                let mut text = String::new();
                for r in 0..rows {
                    for c in 0..cols {
                        let border = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
                        let free = !border && open[(r - 1) * (cols - 2) + (c - 1)];
                        text.push(if free { '.' } else { '#' });
                    }
                    text.push('\n');
                }
                let layout = MazeLayout::parse_unchecked(&text).ok()?;
                let free = layout.free_cells();
                (free.len() >= 2).then(|| (layout, free[0], *free.last().unwrap()))
            })
    }

    proptest! {
        #[test]
        fn bfs_length_equals_brute_force((layout, s, g) in small_layout()) {
            let expected = brute_force_shortest(&layout, s, g);
            match plan_waypoints(&layout, s, g) {
                Ok(p) => {
                    prop_assert!(is_valid_path(&layout, &p));
                    prop_assert_eq!(Some(p.len()), expected);
                }
                Err(_) => prop_assert!(expected.is_none()),
            }
        }
    }
}
