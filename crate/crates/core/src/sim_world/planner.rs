use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;

use crate::partial_map::{Cell, OccupancyGrid};

/// Cells a robot of the given clearance can occupy.
pub(crate) struct Passability {
    width: usize,
    height: usize,
    open: Vec<bool>,
}

impl Passability {
    pub(crate) fn new(map: &OccupancyGrid, clearance: f64) -> Self {
        let field = map.distance_field();
        let open = (0..map.width() * map.height())
            .map(|k| {
                let (i, j) = (k % map.width(), k / map.width());
                if map.get(i, j) != Cell::Free {
                    return false;
                }
                let (x, y) = map.cell_center(i, j);
                field.distance(x, y) >= clearance
            })
            .collect();
        Self {
            width: map.width(),
            height: map.height(),
            open,
        }
    }

    pub(crate) fn is_open(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height && self.open[j as usize * self.width + i as usize]
    }

    fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    /// Open cells connected to `start` (8-connected, no corner cutting).
    pub(crate) fn reachable(&self, start: (usize, usize)) -> Vec<(usize, usize)> {
        let mut seen = vec![false; self.open.len()];
        let mut out = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[self.index(start.0, start.1)] = true;
        while let Some((i, j)) = queue.pop_front() {
            out.push((i, j));
            for (ni, nj, _) in self.neighbours(i, j) {
                let k = self.index(ni, nj);
                if !seen[k] {
                    seen[k] = true;
                    queue.push_back((ni, nj));
                }
            }
        }
        out
    }

    fn neighbours(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        const STEPS: [(i64, i64, u32); 8] = [
            (1, 0, 10),
            (-1, 0, 10),
            (0, 1, 10),
            (0, -1, 10),
            (1, 1, 14),
            (1, -1, 14),
            (-1, 1, 14),
            (-1, -1, 14),
        ];
        let (i, j) = (i as i64, j as i64);
        STEPS.iter().filter_map(move |&(di, dj, c)| {
            let (ni, nj) = (i + di, j + dj);
            let diagonal_ok = di == 0 || dj == 0 || (self.is_open(i + di, j) && self.is_open(i, j + dj));
            (self.is_open(ni, nj) && diagonal_ok).then_some((ni as usize, nj as usize, c))
        })
    }

    /// Shortest 8-connected cell path from `start` to `goal`, both inclusive.
    /// The start cell itself need not be open.
    pub(crate) fn astar(&self, start: (usize, usize), goal: (usize, usize)) -> Option<Vec<(usize, usize)>> {
        if !self.is_open(goal.0 as i64, goal.1 as i64) {
            return None;
        }
        let heuristic = |(i, j): (usize, usize)| {
            let dx = i.abs_diff(goal.0) as u32;
            let dy = j.abs_diff(goal.1) as u32;
            10 * dx.max(dy) + 4 * dx.min(dy)
        };
        let n = self.open.len();
        let mut cost = vec![u32::MAX; n];
        let mut parent = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        let s = self.index(start.0, start.1);
        cost[s] = 0;
        heap.push(Reverse((heuristic(start), s)));
        while let Some(Reverse((_, k))) = heap.pop() {
            let (i, j) = (k % self.width, k / self.width);
            if (i, j) == goal {
                let mut path = vec![(i, j)];
                let mut cur = k;
                while parent[cur] != usize::MAX {
                    cur = parent[cur];
                    path.push((cur % self.width, cur / self.width));
                }
                path.reverse();
                return Some(path);
            }
            let base = cost[k];
            let expand: Vec<_> = if self.is_open(i as i64, j as i64) {
                self.neighbours(i, j).collect()
            } else {
                // Leaving a blocked start cell: any open 8-neighbour will do.
                (-1i64..=1)
                    .flat_map(|di| (-1i64..=1).map(move |dj| (di, dj)))
                    .filter(|&(di, dj)| (di, dj) != (0, 0) && self.is_open(i as i64 + di, j as i64 + dj))
                    .map(|(di, dj)| ((i as i64 + di) as usize, (j as i64 + dj) as usize, if di == 0 || dj == 0 { 10 } else { 14 }))
                    .collect()
            };
            for (ni, nj, c) in expand {
                let nk = self.index(ni, nj);
                let nc = base + c;
                if nc < cost[nk] {
                    cost[nk] = nc;
                    parent[nk] = k;
                    heap.push(Reverse((nc + heuristic((ni, nj)), nk)));
                }
            }
        }
        None
    }

    /// Whether the straight segment between two cell centers stays on open cells.
    fn line_of_sight(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let (ax, ay) = (a.0 as f64 + 0.5, a.1 as f64 + 0.5);
        let (bx, by) = (b.0 as f64 + 0.5, b.1 as f64 + 0.5);
        let steps = ((bx - ax).abs().max((by - ay).abs()) * 3.0).ceil().max(1.0) as usize;
        (0..=steps).all(|s| {
            let t = s as f64 / steps as f64;
            self.is_open((ax + t * (bx - ax)).floor() as i64, (ay + t * (by - ay)).floor() as i64)
        })
    }

    /// Drops intermediate cells wherever a straight shortcut stays open.
    pub(crate) fn smooth(&self, path: &[(usize, usize)]) -> Vec<(usize, usize)> {
        if path.len() <= 2 {
            return path.to_vec();
        }
        let mut out = vec![path[0]];
        let mut anchor = 0;
        while anchor + 1 < path.len() {
            let mut next = anchor + 1;
            for k in (anchor + 2..path.len()).take(400) {
                if self.line_of_sight(path[anchor], path[k]) {
                    next = k;
                }
            }
            out.push(path[next]);
            anchor = next;
        }
        out
    }

    /// Right-hand wall following over open cells, `steps` moves long.
    pub(crate) fn wall_follow(&self, start: (usize, usize), heading: usize, steps: usize) -> Vec<(usize, usize)> {
        const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
        let (mut i, mut j) = (start.0 as i64, start.1 as i64);
        let mut d = heading % 4;
        let mut path = vec![start];
        let mut attached = false;
        for _ in 0..steps {
            let open = |d: usize| self.is_open(i + DIRS[d].0, j + DIRS[d].1);
            let right = (d + 3) % 4;
            let left = (d + 1) % 4;
            let back = (d + 2) % 4;
            let next = if !attached {
                if open(d) {
                    Some(d)
                } else {
                    attached = true;
                    [left, back, right].into_iter().find(|&c| open(c))
                }
            } else {
                [right, d, left, back].into_iter().find(|&c| open(c))
            };
            match next {
                Some(nd) => {
                    d = nd;
                    i += DIRS[d].0;
                    j += DIRS[d].1;
                    path.push((i as usize, j as usize));
                }
                None => break,
            }
        }
        path
    }

    /// A random reachable goal at least `min_cells` away (falls back to any).
    pub(crate) fn random_goal<R: Rng + ?Sized>(
        reachable: &[(usize, usize)],
        from: (usize, usize),
        min_cells: f64,
        rng: &mut R,
    ) -> (usize, usize) {
        for _ in 0..64 {
            let g = reachable[rng.random_range(0..reachable.len())];
            let d = (g.0 as f64 - from.0 as f64).hypot(g.1 as f64 - from.1 as f64);
            if d >= min_cells {
                return g;
            }
        }
        reachable[rng.random_range(0..reachable.len())]
    }
}
