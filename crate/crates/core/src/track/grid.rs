use super::index::TrackIndex;
use super::TrackSpec;
use crate::geom::Point;

/// Uniform bucket grid over segment bounding boxes, used to find the nearest
/// centerline segment without scanning the whole polyline.
#[derive(Debug, Clone)]
pub(crate) struct SegmentGrid {
    origin: Point,
    cell: f64,
    nx: i64,
    ny: i64,
    cells: Vec<Vec<u32>>,
}

impl SegmentGrid {
    pub(crate) fn build(spec: &TrackSpec) -> Self {
        let m = spec.segment_count();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        let mut total = 0.0;
        for i in 0..m {
            let (a, b) = spec.segment(i);
            for p in [a, b] {
                lo = [lo[0].min(p[0]), lo[1].min(p[1])];
                hi = [hi[0].max(p[0]), hi[1].max(p[1])];
            }
            total += crate::geom::dist(a, b);
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        // Aim for a few segments per cell but cap the cell count.
        let mean_seg = total / m as f64;
        let cell = (4.0 * mean_seg).max(extent / 512.0);
        let nx = (((hi[0] - lo[0]) / cell).floor() as i64 + 1).max(1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as i64 + 1).max(1);
        let mut cells = vec![Vec::new(); (nx * ny) as usize];
        for i in 0..m {
            let (a, b) = spec.segment(i);
            let x0 = ((a[0].min(b[0]) - lo[0]) / cell).floor() as i64;
            let x1 = ((a[0].max(b[0]) - lo[0]) / cell).floor() as i64;
            let y0 = ((a[1].min(b[1]) - lo[1]) / cell).floor() as i64;
            let y1 = ((a[1].max(b[1]) - lo[1]) / cell).floor() as i64;
            for cy in y0.max(0)..=y1.min(ny - 1) {
                for cx in x0.max(0)..=x1.min(nx - 1) {
                    cells[(cy * nx + cx) as usize].push(i as u32);
                }
            }
        }
        SegmentGrid {
            origin: lo,
            cell,
            nx,
            ny,
            cells,
        }
    }

    /// Nearest segment as `(index, distance, foot parameter)`. Rings of cells
    /// are visited outward until no unvisited cell can hold a closer segment.
    pub(crate) fn nearest(&self, index: &TrackIndex, p: Point) -> (usize, f64, f64) {
        self.nearest_within(index, p, f64::INFINITY)
            .expect("track has at least one segment")
    }

    /// Like [`nearest`](Self::nearest), but gives up with `None` once no
    /// segment can lie within `radius` of `p`.
    pub(crate) fn nearest_within(&self, index: &TrackIndex, p: Point, radius: f64) -> Option<(usize, f64, f64)> {
        let cx = ((p[0] - self.origin[0]) / self.cell).floor();
        let cy = ((p[1] - self.origin[1]) / self.cell).floor();
        // Clamp far-away queries so the cast stays in range; rings still
        // cover the whole grid eventually.
        let lim = 1e12;
        let cx = cx.clamp(-lim, lim) as i64;
        let cy = cy.clamp(-lim, lim) as i64;
        let max_ring = [cx, self.nx - 1 - cx, cy, self.ny - 1 - cy]
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or(0);
        // Skip empty rings for queries far outside the grid.
        let min_ring = [(-cx).max(cx - (self.nx - 1)), (-cy).max(cy - (self.ny - 1))]
            .iter()
            .copied()
            .max()
            .unwrap_or(0)
            .max(0);

        let mut best: Option<(usize, f64, f64)> = None;
        let mut r = min_ring;
        loop {
            // Every cell of ring r lies at least (r - 1) cells away.
            if (r - 1) as f64 * self.cell > radius && best.is_none_or(|b| b.1 > radius) {
                return None;
            }
            ring(cx, cy, r, self.nx, self.ny, |x, y| {
                for &seg in &self.cells[(y * self.nx + x) as usize] {
                    let i = seg as usize;
                    let (d, t) = index.segment_distance(i, p);
                    match best {
                        Some((bi, bd, _)) if d > bd || (d == bd && i >= bi) => {}
                        _ => best = Some((i, d, t)),
                    }
                }
            });
            if let Some((_, bd, _)) = best {
                if bd < r as f64 * self.cell {
                    break;
                }
            }
            if r >= max_ring {
                break;
            }
            r += 1;
        }
        best.filter(|b| b.1 <= radius)
    }
}

/// Visits the cells on the Chebyshev ring of radius `r` around `(cx, cy)`,
/// clipped to the `nx × ny` grid.
fn ring(cx: i64, cy: i64, r: i64, nx: i64, ny: i64, mut visit: impl FnMut(i64, i64)) {
    if r == 0 {
        if (0..nx).contains(&cx) && (0..ny).contains(&cy) {
            visit(cx, cy);
        }
        return;
    }
    let (x_lo, x_hi) = ((cx - r).max(0), (cx + r).min(nx - 1));
    for y in [cy - r, cy + r] {
        if (0..ny).contains(&y) {
            for x in x_lo..=x_hi {
                visit(x, y);
            }
        }
    }
    let (y_lo, y_hi) = ((cy - r + 1).max(0), (cy + r - 1).min(ny - 1));
    for x in [cx - r, cx + r] {
        if (0..nx).contains(&x) {
            for y in y_lo..=y_hi {
                visit(x, y);
            }
        }
    }
}
