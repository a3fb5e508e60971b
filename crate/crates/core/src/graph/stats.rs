use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::HeteroGraph;

/// Degree → number of nodes with that degree.
pub type Histogram = BTreeMap<usize, usize>;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GraphStats {
    pub cells: usize,
    pub nets: usize,
    pub grid_tiles: Vec<usize>,
    pub pin_edges: usize,
    pub geom_edges: usize,
    pub grid_adj_edges: Vec<usize>,
    pub hier_edges: usize,
    pub cell_pin_degree: Histogram,
    pub net_degree: Histogram,
    pub cell_geom_degree: Histogram,
    pub tile_cell_count: Histogram,
    pub net_tile_span: Histogram,
}

fn histogram(values: impl IntoIterator<Item = usize>) -> Histogram {
    let mut h = Histogram::new();
    for v in values {
        *h.entry(v).or_default() += 1;
    }
    h
}

impl GraphStats {
    pub fn of(g: &HeteroGraph) -> Self {
        let mut cell_pins = vec![0usize; g.n_cells];
        let mut net_pins = vec![0usize; g.n_nets];
        for e in &g.pin_edges {
            cell_pins[e.cell] += 1;
            net_pins[e.net] += 1;
        }
        let mut geom = vec![0usize; g.n_cells];
        for &(i, _) in &g.geom_edges {
            geom[i] += 1;
        }
        let mut per_tile = vec![0usize; g.tiles_at(0)];
        for &t in &g.cell2grid {
            per_tile[t] += 1;
        }
        GraphStats {
            cells: g.n_cells,
            nets: g.n_nets,
            grid_tiles: (0..g.levels()).map(|l| g.tiles_at(l)).collect(),
            pin_edges: g.pin_edges.len(),
            geom_edges: g.geom_edges.len() / 2,
            grid_adj_edges: g.grid_adj_edges.iter().map(Vec::len).collect(),
            hier_edges: g.parents.iter().map(Vec::len).sum(),
            cell_pin_degree: histogram(cell_pins),
            net_degree: histogram(net_pins),
            cell_geom_degree: histogram(geom),
            tile_cell_count: histogram(per_tile),
            net_tile_span: histogram(g.net2grids.iter().map(Vec::len)),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes");
        let _ = writeln!(s, "  cell        {}", self.cells);
        let _ = writeln!(s, "  net         {}", self.nets);
        for (l, t) in self.grid_tiles.iter().enumerate() {
            let _ = writeln!(s, "  grid[{l}]     {t}");
        }
        let _ = writeln!(s, "edges");
        let _ = writeln!(s, "  pin         {}", self.pin_edges);
        let _ = writeln!(s, "  geom        {} (undirected)", self.geom_edges);
        for (l, a) in self.grid_adj_edges.iter().enumerate() {
            let _ = writeln!(s, "  grid-adj[{l}] {a}");
        }
        let _ = writeln!(s, "  hier        {}", self.hier_edges);
        for (name, h) in [
            ("cell pin degree", &self.cell_pin_degree),
            ("net degree", &self.net_degree),
            ("cell geom degree", &self.cell_geom_degree),
            ("cells per tile", &self.tile_cell_count),
            ("tiles per net", &self.net_tile_span),
        ] {
            let _ = writeln!(s, "{name}");
            for (k, v) in h {
                let _ = writeln!(s, "  {k:>6} {v}");
            }
        }
        s
    }
}
