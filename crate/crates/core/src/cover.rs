//! Free-space decomposition into axis-aligned whitelist rectangles and point
//! filtering against them.

use std::fmt::Write as _;

use thiserror::Error;

use crate::grid::{OccupancyGrid, Point2};

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellRect {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl CellRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.min_x..=self.max_x).contains(&x) && (self.min_y..=self.max_y).contains(&y)
    }

    pub fn area(&self) -> usize {
        (self.max_x - self.min_x + 1) * (self.max_y - self.min_y + 1)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CoverError {
    #[error("malformed cover file: {0}")]
    Format(String),
}

/// Disjoint rectangles whose union is exactly the free space of the source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RectCover {
    pub rects: Vec<CellRect>,
    /// Dimensions of the source grid.
    pub width: usize,
    pub height: usize,
    /// Rectangle indices per row, sorted by `min_x`.
    rows: Vec<Vec<usize>>,
}

impl RectCover {
    fn from_rects(rects: Vec<CellRect>, width: usize, height: usize) -> Self {
        let mut rows = vec![Vec::new(); height];
        for (k, r) in rects.iter().enumerate() {
            for row in rows.iter_mut().take(r.max_y + 1).skip(r.min_y) {
                row.push(k);
            }
        }
        for row in &mut rows {
            row.sort_by_key(|&k| rects[k].min_x);
        }
        Self {
            rects,
            width,
            height,
            rows,
        }
    }

    /// Rectangle containing cell `(x, y)`, if any.
    pub fn rect_at(&self, x: usize, y: usize) -> Option<&CellRect> {
        let row = self.rows.get(y)?;
        // Rectangles in a row are disjoint, so the candidate is the last one
        // starting at or before x.
        let pos = row.partition_point(|&k| self.rects[k].min_x <= x);
        let r = &self.rects[row[pos.checked_sub(1)?]];
        (x <= r.max_x).then_some(r)
    }
}

/// Greedy row-wise scan: the first uncovered free cell starts a rectangle,
/// which grows along x over free uncovered cells, then along y while the
/// whole x-span stays free and uncovered.
pub fn build_cover(grid: &OccupancyGrid) -> RectCover {
    let (w, h) = (grid.width(), grid.height());
    let free = |x: usize, y: usize| grid.occupied_at(x as i64, y as i64) == Some(false);
    let mut covered = vec![false; w * h];
    let mut rects = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if covered[y * w + x] || !free(x, y) {
                continue;
            }
            let mut max_x = x;
            while max_x + 1 < w && free(max_x + 1, y) && !covered[y * w + max_x + 1] {
                max_x += 1;
            }
            let mut max_y = y;
            while max_y + 1 < h
                && (x..=max_x).all(|cx| free(cx, max_y + 1) && !covered[(max_y + 1) * w + cx])
            {
                max_y += 1;
            }
            for cy in y..=max_y {
                covered[cy * w + x..=cy * w + max_x].fill(true);
            }
            rects.push(CellRect {
                min_x: x,
                min_y: y,
                max_x,
                max_y,
            });
        }
    }
    RectCover::from_rects(rects, w, h)
}

/// True iff `p` falls in a cell covered by some rectangle. Out-of-bounds is false.
pub fn covers_point(cover: &RectCover, grid: &OccupancyGrid, p: Point2) -> bool {
    grid.world_to_cell(p)
        .is_some_and(|c| cover.rect_at(c.x, c.y).is_some())
}

/// The covered subsequence of `pts`, order preserved.
pub fn filter_points(cover: &RectCover, grid: &OccupancyGrid, pts: &[Point2]) -> Vec<Point2> {
    pts.iter()
        .copied()
        .filter(|&p| covers_point(cover, grid, p))
        .collect()
}

const COVER_MAGIC: &str = "cover v1";

/// `cover v1`: header, `size <w> <h> count <n>`, then `min_x min_y max_x max_y` per line.
pub fn save_cover(cover: &RectCover) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{COVER_MAGIC}");
    let _ = writeln!(
        out,
        "size {} {} count {}",
        cover.width,
        cover.height,
        cover.rects.len()
    );
    for r in &cover.rects {
        let _ = writeln!(out, "{} {} {} {}", r.min_x, r.min_y, r.max_x, r.max_y);
    }
    out
}

pub fn load_cover(text: &str) -> Result<RectCover, CoverError> {
    let bad = |m: &str| CoverError::Format(m.to_string());
    let mut lines = text.lines();
    if lines.next() != Some(COVER_MAGIC) {
        return Err(bad("missing `cover v1` header"));
    }
    let head: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing size line"))?
        .split(' ')
        .collect();
    if head.len() != 5 || head[0] != "size" || head[3] != "count" {
        return Err(bad("expected `size <w> <h> count <n>`"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
    let (w, h, n) = (num(head[1])?, num(head[2])?, num(head[4])?);
    let mut rects = Vec::with_capacity(n);
    for line in lines {
        let v = line.split(' ').map(num).collect::<Result<Vec<_>, _>>()?;
        let [min_x, min_y, max_x, max_y] = v[..] else {
            return Err(bad("rectangle lines need four integers"));
        };
        if min_x > max_x || min_y > max_y || max_x >= w || max_y >= h {
            return Err(bad("rectangle outside the grid"));
        }
        rects.push(CellRect {
            min_x,
            min_y,
            max_x,
            max_y,
        });
    }
    if rects.len() != n {
        return Err(bad("rectangle count does not match header"));
    }
    Ok(RectCover::from_rects(rects, w, h))
}
