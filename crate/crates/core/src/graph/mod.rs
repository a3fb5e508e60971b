//! Heterogeneous congestion graph: cells, nets and a stack of grid levels,
//! joined by pin, geometric, grid-adjacency, hierarchical and cell-to-tile
//! relations.

mod knn;
mod stats;

use std::ops::Range;

use crate::error::{Error, Result};
use crate::netlist::{Design, PinDirection};

pub use knn::knn_edges;
pub use stats::{GraphStats, Histogram};

/// Geometry of the tile hierarchy. Level 0 is an `m × n` grid (`m` columns
/// along x, `n` rows along y); level `ℓ` has `⌈m/2^ℓ⌉ × ⌈n/2^ℓ⌉` tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub m: usize,
    pub n: usize,
    pub levels: usize,
    pub tile_w: f64,
    pub tile_h: f64,
    pub origin: (f64, f64),
}

pub fn make_grid_spec(d: &Design, m: usize, n: usize, levels: usize) -> Result<GridSpec> {
    if m == 0 || n == 0 || levels == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid needs m, n, K >= 1 (got {m}, {n}, {levels})"
        )));
    }
    let spec = GridSpec {
        m,
        n,
        levels,
        tile_w: d.die.width() as f64 / m as f64,
        tile_h: d.die.height() as f64 / n as f64,
        origin: (d.die.x0 as f64, d.die.y0 as f64),
    };
    if levels > 1 && spec.level_dims(levels - 2) == (1, 1) {
        return Err(Error::InvalidArgument(format!(
            "{levels} grid levels over a {m}x{n} grid: level {} is already 1x1",
            levels - 2
        )));
    }
    Ok(spec)
}

impl GridSpec {
    /// `(columns, rows)` at `level`.
    pub fn level_dims(&self, level: usize) -> (usize, usize) {
        let f = 1usize << level;
        (self.m.div_ceil(f), self.n.div_ceil(f))
    }

    pub fn tiles_at(&self, level: usize) -> usize {
        let (c, r) = self.level_dims(level);
        c * r
    }

    pub fn tile_id(&self, level: usize, col: usize, row: usize) -> usize {
        row * self.level_dims(level).0 + col
    }

    pub fn tile_col_row(&self, level: usize, id: usize) -> (usize, usize) {
        let cols = self.level_dims(level).0;
        (id % cols, id / cols)
    }

    /// Level-0 column holding `x`: tiles are half-open `[x0, x1)` and points
    /// outside the die are clamped onto the border tiles.
    pub fn col_of(&self, x: f64) -> usize {
        let c = ((x - self.origin.0) / self.tile_w).floor();
        if c.is_nan() || c < 0.0 {
            0
        } else {
            (c as usize).min(self.m - 1)
        }
    }

    pub fn row_of(&self, y: f64) -> usize {
        let r = ((y - self.origin.1) / self.tile_h).floor();
        if r.is_nan() || r < 0.0 {
            0
        } else {
            (r as usize).min(self.n - 1)
        }
    }

    pub fn tile_of(&self, x: f64, y: f64) -> usize {
        self.tile_id(0, self.col_of(x), self.row_of(y))
    }

    /// Spatial extent `(x0, y0, x1, y1)` of a tile. Ragged coarse tiles on the
    /// right/top border only cover the fine tiles that exist.
    pub fn tile_rect(&self, level: usize, id: usize) -> (f64, f64, f64, f64) {
        let (c, r) = self.tile_col_row(level, id);
        let f = 1usize << level;
        let (c0, c1) = (c * f, ((c + 1) * f).min(self.m));
        let (r0, r1) = (r * f, ((r + 1) * f).min(self.n));
        (
            self.origin.0 + c0 as f64 * self.tile_w,
            self.origin.1 + r0 as f64 * self.tile_h,
            self.origin.0 + c1 as f64 * self.tile_w,
            self.origin.1 + r1 as f64 * self.tile_h,
        )
    }

    /// Parent of a level-`level` tile at level `level + 1`.
    pub fn parent_of(&self, level: usize, id: usize) -> usize {
        let (c, r) = self.tile_col_row(level, id);
        self.tile_id(level + 1, c / 2, r / 2)
    }
}

/// Cell–net incidence with its pin attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PinEdge {
    pub cell: usize,
    pub net: usize,
    pub direction: PinDirection,
    pub offset_x: i64,
    pub offset_y: i64,
}

/// Construction knobs beyond the grid itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphOptions {
    pub k_geom: usize,
    /// Nets with at least this many pins get a capped tile incidence.
    pub big_net_pins: usize,
    /// Tile budget for capped nets: the tiles nearest the bbox centre.
    pub big_net_tiles: usize,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            k_geom: 8,
            big_net_pins: 1000,
            big_net_tiles: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub n_cells: usize,
    pub n_nets: usize,
    pub grid: GridSpec,
    /// One edge per net terminal, ordered by net id then pin order.
    pub pin_edges: Vec<PinEdge>,
    /// Directed pairs `(i, j)`, symmetric, irreflexive, sorted.
    pub geom_edges: Vec<(usize, usize)>,
    /// Per level, undirected 4-neighbour pairs `(a, b)` with `a < b`.
    pub grid_adj_edges: Vec<Vec<(usize, usize)>>,
    /// `parents[ℓ][t]` is the level-`ℓ+1` parent of level-`ℓ` tile `t`.
    pub parents: Vec<Vec<usize>>,
    /// Level-0 tile holding each cell centre.
    pub cell2grid: Vec<usize>,
    /// Level-0 tiles meeting each net's pin bounding box, ascending.
    pub net2grids: Vec<Vec<usize>>,
}

impl HeteroGraph {
    pub fn levels(&self) -> usize {
        self.grid.levels
    }

    pub fn tiles_at(&self, level: usize) -> usize {
        self.grid.tiles_at(level)
    }

    /// Index range of a level's tiles in the flat numbering of all grid nodes.
    pub fn grid_nodes(&self, level: usize) -> Range<usize> {
        let start: usize = (0..level).map(|l| self.grid.tiles_at(l)).sum();
        start..start + self.grid.tiles_at(level)
    }

    /// `(child at ℓ, parent at ℓ+1)` pairs.
    pub fn hier_edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(l, ps)| ps.iter().enumerate().map(move |(c, &p)| (l, c, p)))
    }
}

pub fn build_graph(d: &Design, spec: &GridSpec, k_geom: usize) -> HeteroGraph {
    build_graph_with(
        d,
        spec,
        &GraphOptions {
            k_geom,
            ..GraphOptions::default()
        },
    )
}

pub fn build_graph_with(d: &Design, spec: &GridSpec, opts: &GraphOptions) -> HeteroGraph {
    let centers: Vec<(f64, f64)> = d.cells.iter().map(|c| c.center()).collect();
    let cell2grid = centers.iter().map(|&(x, y)| spec.tile_of(x, y)).collect();

    let mut pin_edges = Vec::with_capacity(d.nets.iter().map(|n| n.pins.len()).sum());
    for net in &d.nets {
        for p in &net.pins {
            pin_edges.push(PinEdge {
                cell: p.cell,
                net: net.id,
                direction: p.direction,
                offset_x: p.offset_x,
                offset_y: p.offset_y,
            });
        }
    }

    let net2grids = d
        .nets
        .iter()
        .map(|net| {
            let (x0, y0, x1, y1) = d.net_bbox(net);
            let (c0, c1) = (spec.col_of(x0), spec.col_of(x1));
            let (r0, r1) = (spec.row_of(y0), spec.row_of(y1));
            let mut tiles: Vec<usize> = (r0..=r1)
                .flat_map(|r| (c0..=c1).map(move |c| spec.tile_id(0, c, r)))
                .collect();
            if net.pins.len() >= opts.big_net_pins && tiles.len() > opts.big_net_tiles {
                let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
                let dist = |t: usize| {
                    let (tx0, ty0, tx1, ty1) = spec.tile_rect(0, t);
                    let (dx, dy) = ((tx0 + tx1) / 2.0 - cx, (ty0 + ty1) / 2.0 - cy);
                    dx * dx + dy * dy
                };
                tiles.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
                tiles.truncate(opts.big_net_tiles);
                tiles.sort_unstable();
            }
            tiles
        })
        .collect();

    let grid_adj_edges = (0..spec.levels)
        .map(|l| {
            let (cols, rows) = spec.level_dims(l);
            let mut e = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let t = spec.tile_id(l, c, r);
                    if c + 1 < cols {
                        e.push((t, spec.tile_id(l, c + 1, r)));
                    }
                    if r + 1 < rows {
                        e.push((t, spec.tile_id(l, c, r + 1)));
                    }
                }
            }
            e
        })
        .collect();

    let parents = (0..spec.levels.saturating_sub(1))
        .map(|l| (0..spec.tiles_at(l)).map(|t| spec.parent_of(l, t)).collect())
        .collect();

    HeteroGraph {
        n_cells: d.cells.len(),
        n_nets: d.nets.len(),
        grid: spec.clone(),
        pin_edges,
        geom_edges: knn_edges(&centers, opts.k_geom),
        grid_adj_edges,
        parents,
        cell2grid,
        net2grids,
    }
}
