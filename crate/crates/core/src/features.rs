//! Node and edge feature matrices and their per-design standardisation.
//!
//! | class | columns |
//! |-------|---------|
//! | cell  | x, y, w, h, a, d_net, p, l_mean, l_max, d_mean, macro, r_in, f_t |
//! | net   | hpwl, dx, dy, degree, log_degree, bbox_area |
//! | grid  | rho_cell, rho_pin, rho_net, a_cell, l_net |
//! | pin   | dir, delta_x, delta_y |
//! | geom  | dx, dy, d_manh, d_eucl |
//!
//! Empty aggregates (isolated cells, empty tiles) are 0.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::HeteroGraph;
use crate::matrix::Matrix;
use crate::netlist::{Design, PinDirection};

pub const CELL_COLUMNS: [&str; 13] = [
    "x", "y", "w", "h", "a", "d_net", "p", "l_mean", "l_max", "d_mean", "macro", "r_in", "f_t",
];
pub const NET_COLUMNS: [&str; 6] = ["hpwl", "dx", "dy", "degree", "log_degree", "bbox_area"];
pub const GRID_COLUMNS: [&str; 5] = ["rho_cell", "rho_pin", "rho_net", "a_cell", "l_net"];
pub const PIN_COLUMNS: [&str; 3] = ["dir", "delta_x", "delta_y"];
pub const GEOM_COLUMNS: [&str; 4] = ["dx", "dy", "d_manh", "d_eucl"];

/// Indicator columns, left untouched by standardisation.
pub const CELL_INDICATORS: [usize; 1] = [10];
pub const PIN_INDICATORS: [usize; 1] = [0];

/// Columns kept when enriched features are disabled: coordinates and
/// connectivity only.
pub const CELL_MINIMAL: [usize; 3] = [0, 1, 5];
pub const NET_MINIMAL: [usize; 1] = [3];
pub const GRID_MINIMAL: [usize; 1] = [0];
pub const PIN_MINIMAL: [usize; 1] = [0];
pub const GEOM_MINIMAL: [usize; 2] = [0, 1];

pub const STD_FLOOR: f64 = 1e-6;

/// Per-column statistics applied by [`standardize`]. Indicator columns carry
/// `standardized = false` with mean 0 and std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub standardized: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Standardization {
    pub classes: BTreeMap<String, Vec<ColumnStats>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub cell_x: Matrix<f64>,
    pub net_x: Matrix<f64>,
    /// One matrix per grid level.
    pub grid_x: Vec<Matrix<f64>>,
    pub pin_e: Matrix<f64>,
    pub geom_e: Matrix<f64>,
    /// Empty until [`standardize`] runs.
    pub stats: Standardization,
}

fn bbox_of(d: &Design, net: usize) -> (f64, f64, f64, f64) {
    d.net_bbox(&d.nets[net])
}

pub fn cell_features(d: &Design, g: &HeteroGraph) -> Matrix<f64> {
    let n = d.cells.len();
    let hpwl: Vec<f64> = d.nets.iter().map(|e| d.hpwl(e)).collect();
    let degree: Vec<usize> = d.nets.iter().map(|e| e.pins.len()).collect();

    // distinct incident nets per cell, in net order
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut pins = vec![0usize; n];
    let mut inputs = vec![0usize; n];
    for e in &g.pin_edges {
        pins[e.cell] += 1;
        if e.direction == PinDirection::Input {
            inputs[e.cell] += 1;
        }
        if incident[e.cell].last() != Some(&e.net) {
            incident[e.cell].push(e.net);
        }
    }
    let mut master_count: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &d.cells {
        *master_count.entry(c.master.as_str()).or_default() += 1;
    }

    Matrix::from_fn(n, CELL_COLUMNS.len(), |i, col| {
        let c = &d.cells[i];
        let nets = &incident[i];
        let k = nets.len() as f64;
        match col {
            0 => c.x as f64,
            1 => c.y as f64,
            2 => c.w as f64,
            3 => c.h as f64,
            4 => c.area(),
            5 => k,
            6 => pins[i] as f64,
            7 if k > 0.0 => nets.iter().map(|&e| hpwl[e]).sum::<f64>() / k,
            8 => nets.iter().map(|&e| hpwl[e]).fold(0.0, f64::max),
            9 if k > 0.0 => nets.iter().map(|&e| degree[e] as f64).sum::<f64>() / k,
            10 => f64::from(u8::from(c.is_macro)),
            11 if pins[i] > 0 => inputs[i] as f64 / pins[i] as f64,
            12 => master_count[c.master.as_str()] as f64 / n as f64,
            _ => 0.0,
        }
    })
}

pub fn net_features(d: &Design, _g: &HeteroGraph) -> Matrix<f64> {
    Matrix::from_fn(d.nets.len(), NET_COLUMNS.len(), |e, col| {
        let (x0, y0, x1, y1) = bbox_of(d, e);
        let (dx, dy) = (x1 - x0, y1 - y0);
        let deg = d.nets[e].pins.len() as f64;
        match col {
            0 => dx + dy,
            1 => dx,
            2 => dy,
            3 => deg,
            4 => deg.ln(),
            _ => dx * dy,
        }
    })
}

/// Grid features at `level`. A coarse tile aggregates everything that falls
/// in its level-0 descendants.
pub fn grid_features(d: &Design, g: &HeteroGraph, level: usize) -> Matrix<f64> {
    let spec = &g.grid;
    let tiles = spec.tiles_at(level);
    let lift = |mut t: usize| {
        for l in 0..level {
            t = g.parents[l][t];
        }
        t
    };

    let mut cells = vec![0usize; tiles];
    let mut area = vec![0f64; tiles];
    for (c, &t0) in d.cells.iter().zip(&g.cell2grid) {
        let t = lift(t0);
        cells[t] += 1;
        area[t] += c.area();
    }
    let mut pins = vec![0usize; tiles];
    for net in &d.nets {
        for p in &net.pins {
            let (x, y) = d.pin_position(p);
            pins[lift(spec.tile_of(x, y))] += 1;
        }
    }
    let mut nets = vec![0usize; tiles];
    let mut wl = vec![0f64; tiles];
    let mut seen = vec![usize::MAX; tiles];
    for (e, span) in g.net2grids.iter().enumerate() {
        let h = d.hpwl(&d.nets[e]);
        for &t0 in span {
            let t = lift(t0);
            if seen[t] != e {
                seen[t] = e;
                nets[t] += 1;
                wl[t] += h;
            }
        }
    }

    let max_of = |v: &[usize]| v.iter().copied().max().unwrap_or(0) as f64;
    let (mc, mp, mn) = (max_of(&cells), max_of(&pins), max_of(&nets));
    let norm = |v: usize, m: f64| if m > 0.0 { v as f64 / m } else { 0.0 };
    Matrix::from_fn(tiles, GRID_COLUMNS.len(), |t, col| match col {
        0 => norm(cells[t], mc),
        1 => norm(pins[t], mp),
        2 => norm(nets[t], mn),
        3 if cells[t] > 0 => area[t] / cells[t] as f64,
        4 if nets[t] > 0 => wl[t] / nets[t] as f64,
        _ => 0.0,
    })
}

/// `[dir, δx, δy]` per pin edge: direction (output = 1) and the cell centre's
/// offset from the net bbox centroid, over the bbox span floored at one tile.
pub fn pin_edge_features(d: &Design, g: &HeteroGraph) -> Matrix<f64> {
    let bboxes: Vec<_> = (0..d.nets.len()).map(|e| bbox_of(d, e)).collect();
    let (tw, th) = (g.grid.tile_w, g.grid.tile_h);
    Matrix::from_fn(g.pin_edges.len(), PIN_COLUMNS.len(), |k, col| {
        let e = &g.pin_edges[k];
        let (x0, y0, x1, y1) = bboxes[e.net];
        let (cx, cy) = d.cells[e.cell].center();
        match col {
            0 => f64::from(u8::from(e.direction == PinDirection::Output)),
            1 => (cx - (x0 + x1) / 2.0) / (x1 - x0).max(tw),
            _ => (cy - (y0 + y1) / 2.0) / (y1 - y0).max(th),
        }
    })
}

/// `[Δx, Δy, d_manh, d_eucl]` per directed geometric edge `(i, j)`, from
/// centre `i` to centre `j`, scaled by `1 / max(die width, die height)`.
pub fn geom_edge_features(d: &Design, g: &HeteroGraph) -> Matrix<f64> {
    let s = 1.0 / d.die.width().max(d.die.height()) as f64;
    Matrix::from_fn(g.geom_edges.len(), GEOM_COLUMNS.len(), |k, col| {
        let (i, j) = g.geom_edges[k];
        let (xi, yi) = d.cells[i].center();
        let (xj, yj) = d.cells[j].center();
        let (dx, dy) = ((xj - xi) * s, (yj - yi) * s);
        match col {
            0 => dx,
            1 => dy,
            2 => dx.abs() + dy.abs(),
            _ => dx.hypot(dy),
        }
    })
}

/// Raw (unstandardised) features for every class.
pub fn raw_features(d: &Design, g: &HeteroGraph) -> FeatureSet {
    FeatureSet {
        cell_x: cell_features(d, g),
        net_x: net_features(d, g),
        grid_x: (0..g.levels()).map(|l| grid_features(d, g, l)).collect(),
        pin_e: pin_edge_features(d, g),
        geom_e: geom_edge_features(d, g),
        stats: Standardization::default(),
    }
}

/// Raw features followed by [`standardize`].
pub fn featurize(d: &Design, g: &HeteroGraph) -> FeatureSet {
    standardize(raw_features(d, g))
}

fn standardize_matrix(m: &mut Matrix<f64>, names: &[&str], indicators: &[usize]) -> Vec<ColumnStats> {
    let rows = m.rows();
    (0..m.cols())
        .map(|c| {
            if indicators.contains(&c) {
                return ColumnStats {
                    name: names[c].to_string(),
                    mean: 0.0,
                    std: 1.0,
                    standardized: false,
                };
            }
            let (mean, std) = if rows == 0 {
                (0.0, STD_FLOOR)
            } else {
                let n = rows as f64;
                let mean = (0..rows).map(|r| m.get(r, c)).sum::<f64>() / n;
                let var = (0..rows).map(|r| (m.get(r, c) - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt().max(STD_FLOOR))
            };
            for r in 0..rows {
                let v = (m.get(r, c) - mean) / std;
                m.set(r, c, v);
            }
            ColumnStats {
                name: names[c].to_string(),
                mean,
                std,
                standardized: true,
            }
        })
        .collect()
}

/// Per-design z-scoring of every continuous column (population std, floored
/// at [`STD_FLOOR`]). The statistics used are recorded in `stats`.
pub fn standardize(mut fs: FeatureSet) -> FeatureSet {
    let mut classes = BTreeMap::new();
    classes.insert(
        "cell".to_string(),
        standardize_matrix(&mut fs.cell_x, &CELL_COLUMNS, &CELL_INDICATORS),
    );
    classes.insert("net".to_string(), standardize_matrix(&mut fs.net_x, &NET_COLUMNS, &[]));
    for (l, m) in fs.grid_x.iter_mut().enumerate() {
        classes.insert(format!("grid{l}"), standardize_matrix(m, &GRID_COLUMNS, &[]));
    }
    classes.insert(
        "pin".to_string(),
        standardize_matrix(&mut fs.pin_e, &PIN_COLUMNS, &PIN_INDICATORS),
    );
    classes.insert(
        "geom".to_string(),
        standardize_matrix(&mut fs.geom_e, &GEOM_COLUMNS, &[]),
    );
    fs.stats = Standardization { classes };
    fs
}

fn keep_columns(m: &Matrix<f64>, keep: &[usize]) -> Matrix<f64> {
    Matrix::from_fn(
        m.rows(),
        m.cols(),
        |r, c| if keep.contains(&c) { m.get(r, c) } else { 0.0 },
    )
}

impl FeatureSet {
    /// Copy with every column outside the minimal coordinate/connectivity
    /// set zeroed. Shapes are unchanged.
    pub fn minimal(&self) -> FeatureSet {
        FeatureSet {
            cell_x: keep_columns(&self.cell_x, &CELL_MINIMAL),
            net_x: keep_columns(&self.net_x, &NET_MINIMAL),
            grid_x: self.grid_x.iter().map(|m| keep_columns(m, &GRID_MINIMAL)).collect(),
            pin_e: keep_columns(&self.pin_e, &PIN_MINIMAL),
            geom_e: keep_columns(&self.geom_e, &GEOM_MINIMAL),
            stats: self.stats.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.cell_x.all_finite()
            && self.net_x.all_finite()
            && self.grid_x.iter().all(Matrix::all_finite)
            && self.pin_e.all_finite()
            && self.geom_e.all_finite()
    }

    /// Every matrix with its class name and column names, in a fixed order.
    pub fn classes(&self) -> Vec<(String, &Matrix<f64>, &'static [&'static str])> {
        let mut v: Vec<(String, &Matrix<f64>, &'static [&'static str])> = vec![
            ("cell".into(), &self.cell_x, &CELL_COLUMNS),
            ("net".into(), &self.net_x, &NET_COLUMNS),
        ];
        for (l, m) in self.grid_x.iter().enumerate() {
            v.push((format!("grid{l}"), m, &GRID_COLUMNS));
        }
        v.push(("pin".into(), &self.pin_e, &PIN_COLUMNS));
        v.push(("geom".into(), &self.geom_e, &GEOM_COLUMNS));
        v
    }
}

/// Sidecar written next to each dumped matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpSidecar {
    pub class: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub columns: Vec<ColumnStats>,
}

/// Writes `<class>.bin` (row-major f64 little-endian) and `<class>.json` per
/// feature class into `dir`, returning the file stems written.
pub fn dump_features(fs: &FeatureSet, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (class, m, names) in fs.classes() {
        let columns = match fs.stats.classes.get(&class) {
            Some(cols) => cols.clone(),
            None => names
                .iter()
                .map(|n| ColumnStats {
                    name: n.to_string(),
                    mean: 0.0,
                    std: 1.0,
                    standardized: false,
                })
                .collect(),
        };
        let sidecar = DumpSidecar {
            class: class.clone(),
            rows: m.rows(),
            cols: m.cols(),
            dtype: "f64le".into(),
            columns,
        };
        let bytes: Vec<u8> = m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(dir.join(format!("{class}.bin")), bytes)?;
        std::fs::write(
            dir.join(format!("{class}.json")),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        written.push(class);
    }
    Ok(written)
}
