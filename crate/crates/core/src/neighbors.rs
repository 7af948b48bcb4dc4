//! Range queries over occupied grid cells, used to enumerate event pairs
//! whose node difference falls inside a lag box.

use crate::grid::Cell;

/// Occupied cells of one process, bucketed by time node and sorted by
/// `(x, y)` inside each bucket.
#[derive(Debug, Clone)]
pub(crate) struct CellIndex {
    slabs: Vec<Vec<(i64, i64, f64)>>,
}

impl CellIndex {
    pub fn new(cells: &[Cell], time_nodes: usize) -> Self {
        let mut slabs = vec![Vec::new(); time_nodes];
        for c in cells {
            slabs[c.node[2]].push((c.node[0] as i64, c.node[1] as i64, c.count as f64));
        }
        for s in &mut slabs {
            s.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        }
        Self { slabs }
    }

    /// Calls `f(d, count)` for every indexed cell `u` with
    /// `d = target - u` inside `[lo, hi]` (inclusive, per axis).
    pub fn for_each_source(
        &self,
        target: [usize; 3],
        lo: [i64; 3],
        hi: [i64; 3],
        mut f: impl FnMut([i64; 3], f64),
    ) {
        let w = target.map(|v| v as i64);
        let t_min = (w[2] - hi[2]).max(0);
        let t_max = (w[2] - lo[2]).min(self.slabs.len() as i64 - 1);
        let (x_min, x_max) = (w[0] - hi[0], w[0] - lo[0]);
        let (y_min, y_max) = (w[1] - hi[1], w[1] - lo[1]);
        let mut t = t_min;
        while t <= t_max {
            let slab = &self.slabs[t as usize];
            let start = slab.partition_point(|c| c.0 < x_min);
            for &(x, y, n) in &slab[start..] {
                if x > x_max {
                    break;
                }
                if y >= y_min && y <= y_max {
                    f([w[0] - x, w[1] - y, w[2] - t], n);
                }
            }
            t += 1;
        }
    }
}
