//! RUDY congestion maps, log-compressed labels and the label file format.
//!
//! Label file layout:
//!
//! ```text
//! one line of JSON: {"design":..,"m":..,"n":..,"c_max":..,"normalized":..,"cells":..}\n
//! m·n × f32 LE      tile values, row-major (row = y index, column = x index)
//! cells × f32 LE    per-cell values (cells may be 0)
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GridSpec;
use crate::netlist::Design;

/// Uncompressed per-tile and per-cell demand.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLabels {
    pub m: usize,
    pub n: usize,
    pub grid: Vec<f64>,
    pub cell: Vec<f64>,
}

/// Labels in `[0, 1]` after `log(1+x)/c_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CongestionLabels {
    pub m: usize,
    pub n: usize,
    pub cell_y: Vec<f64>,
    pub grid_y: Vec<f64>,
    pub c_max: f64,
}

/// Pin bbox of a net with each span widened to at least one unit around its
/// centre, plus the net's demand density.
fn net_density(d: &Design, net: &crate::netlist::Net) -> Option<((f64, f64, f64, f64), f64)> {
    let (x0, y0, x1, y1) = d.net_bbox(net);
    let hpwl = (x1 - x0) + (y1 - y0);
    if hpwl <= 0.0 {
        return None;
    }
    let widen = |a: f64, b: f64| {
        if b - a < 1.0 {
            let c = (a + b) / 2.0;
            (c - 0.5, c + 0.5)
        } else {
            (a, b)
        }
    };
    let (x0, x1) = widen(x0, x1);
    let (y0, y1) = widen(y0, y1);
    Some(((x0, y0, x1, y1), hpwl / ((x1 - x0) * (y1 - y0))))
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Level-0 RUDY map: each net spreads `HPWL / bbox area` uniformly over its
/// bbox, and a tile sums density times overlap area.
pub fn rudy_map(d: &Design, spec: &GridSpec) -> Vec<f64> {
    let (tw, th) = (spec.tile_w, spec.tile_h);
    let (ox, oy) = spec.origin;
    let mut map = vec![0.0; spec.m * spec.n];
    let mut wx = Vec::new();
    for net in &d.nets {
        let Some(((x0, y0, x1, y1), rho)) = net_density(d, net) else {
            continue;
        };
        let (c0, c1) = (spec.col_of(x0), spec.col_of(x1));
        let (r0, r1) = (spec.row_of(y0), spec.row_of(y1));
        wx.clear();
        wx.extend((c0..=c1).map(|c| {
            let a = ox + c as f64 * tw;
            overlap(x0, x1, a, a + tw)
        }));
        for r in r0..=r1 {
            let b = oy + r as f64 * th;
            let wy = overlap(y0, y1, b, b + th) * rho;
            if wy == 0.0 {
                continue;
            }
            let row = &mut map[r * spec.m..(r + 1) * spec.m];
            for (c, w) in (c0..=c1).zip(&wx) {
                row[c] += w * wy;
            }
        }
    }
    map
}

/// Raw tile map plus each cell's tile value.
pub fn rudy_labels(d: &Design, spec: &GridSpec) -> RawLabels {
    let grid = rudy_map(d, spec);
    let cell = d
        .cells
        .iter()
        .map(|c| {
            let (x, y) = c.center();
            grid[spec.tile_of(x, y)]
        })
        .collect();
    RawLabels {
        m: spec.m,
        n: spec.n,
        grid,
        cell,
    }
}

/// Largest `log(1+x)` over a split, or 1 when every value is zero.
pub fn split_c_max<'a>(raws: impl IntoIterator<Item = &'a RawLabels>) -> f64 {
    let mut c = 0.0f64;
    for r in raws {
        for &v in r.grid.iter().chain(&r.cell) {
            c = c.max(v.ln_1p());
        }
    }
    if c > 0.0 {
        c
    } else {
        1.0
    }
}

/// `log(1+x)/c_max`, clamped into `[0, 1]` for values above the split maximum.
pub fn normalize_labels(raw: &RawLabels, c_max: f64) -> Result<CongestionLabels> {
    if !(c_max.is_finite() && c_max > 0.0) {
        return Err(Error::InvalidArgument(format!("c_max must be positive, got {c_max}")));
    }
    if raw.grid.iter().chain(&raw.cell).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::NonFinite("raw labels must be finite and non-negative".into()));
    }
    let f = |v: &f64| (v.ln_1p() / c_max).min(1.0);
    Ok(CongestionLabels {
        m: raw.m,
        n: raw.n,
        cell_y: raw.cell.iter().map(f).collect(),
        grid_y: raw.grid.iter().map(f).collect(),
        c_max,
    })
}

/// Area-weighted average of a row-major `cols × rows` map onto
/// `target_cols × target_rows`. Overlaps are exact integer fractions.
pub fn downsample_area_avg(
    map: &[f64],
    cols: usize,
    rows: usize,
    target_cols: usize,
    target_rows: usize,
) -> Result<Vec<f64>> {
    if target_cols == 0 || target_rows == 0 {
        return Err(Error::InvalidArgument("target dimensions must be >= 1".into()));
    }
    if target_cols > cols || target_rows > rows {
        return Err(Error::InvalidArgument(format!(
            "cannot downsample {cols}x{rows} to larger {target_cols}x{target_rows}"
        )));
    }
    if map.len() != cols * rows {
        return Err(Error::InvalidArgument(format!(
            "map has {} values, expected {cols}x{rows}",
            map.len()
        )));
    }
    // In units of 1/target, source index s spans [s·t, (s+1)·t) and target
    // index i spans [i·S, (i+1)·S).
    let weights = |src: usize, tgt: usize, i: usize| -> Vec<(usize, f64)> {
        let (lo, hi) = (i * src, (i + 1) * src);
        (lo / tgt..hi.div_ceil(tgt))
            .filter_map(|s| {
                let w = hi.min((s + 1) * tgt).saturating_sub(lo.max(s * tgt));
                (w > 0).then_some((s, w as f64))
            })
            .collect()
    };
    let xw: Vec<_> = (0..target_cols).map(|i| weights(cols, target_cols, i)).collect();
    let norm = (cols * rows) as f64;
    let mut out = Vec::with_capacity(target_cols * target_rows);
    for j in 0..target_rows {
        let yw = weights(rows, target_rows, j);
        for xs in &xw {
            let mut acc = 0.0;
            for &(r, wy) in &yw {
                for &(c, wx) in xs {
                    acc += map[r * cols + c] * wx * wy;
                }
            }
            out.push(acc / norm);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelHeader {
    design: String,
    m: usize,
    n: usize,
    c_max: Option<f64>,
    normalized: bool,
    cells: usize,
}

/// Contents of a label file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFile {
    pub design: String,
    pub m: usize,
    pub n: usize,
    /// Present for normalized labels.
    pub c_max: Option<f64>,
    pub grid: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LabelFile {
    pub fn from_raw(design: &str, raw: &RawLabels) -> Self {
        LabelFile {
            design: design.to_string(),
            m: raw.m,
            n: raw.n,
            c_max: None,
            grid: raw.grid.clone(),
            cell: raw.cell.clone(),
        }
    }

    pub fn from_normalized(design: &str, y: &CongestionLabels) -> Self {
        LabelFile {
            design: design.to_string(),
            m: y.m,
            n: y.n,
            c_max: Some(y.c_max),
            grid: y.grid_y.clone(),
            cell: y.cell_y.clone(),
        }
    }

    /// Normalized labels, if this file holds them.
    pub fn labels(&self) -> Option<CongestionLabels> {
        self.c_max.map(|c_max| CongestionLabels {
            m: self.m,
            n: self.n,
            cell_y: self.cell.clone(),
            grid_y: self.grid.clone(),
            c_max,
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let header = LabelHeader {
            design: self.design.clone(),
            m: self.m,
            n: self.n,
            c_max: self.c_max,
            normalized: self.c_max.is_some(),
            cells: self.cell.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(4 * (self.grid.len() + self.cell.len()));
        for v in self.grid.iter().chain(&self.cell) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let h: LabelHeader = serde_json::from_str(line.trim_end()).map_err(|e| Error::Schema {
            line: 1,
            message: e.to_string(),
        })?;
        if h.normalized != h.c_max.is_some() {
            return Err(Error::Schema {
                line: 1,
                message: "`normalized` must agree with the presence of `c_max`".into(),
            });
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let expect = 4 * (h.m * h.n + h.cells);
        if bytes.len() != expect {
            return Err(Error::Schema {
                line: 2,
                message: format!("expected {expect} payload bytes, found {}", bytes.len()),
            });
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let (grid, cell) = vals.split_at(h.m * h.n);
        Ok(LabelFile {
            design: h.design,
            m: h.m,
            n: h.n,
            c_max: h.c_max,
            grid: grid.to_vec(),
            cell: cell.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_grid_spec;
    use crate::netlist::{Cell, Net, Pin, PinDirection, Rect};

    fn cell(id: usize, x: i64, y: i64) -> Cell {
        Cell {
            id,
            name: format!("c{id}"),
            master: "M".into(),
            x,
            y,
            w: 2,
            h: 2,
            is_macro: false,
        }
    }

    fn pin(c: usize) -> Pin {
        Pin {
            cell: c,
            direction: PinDirection::Input,
            offset_x: 1,
            offset_y: 1,
        }
    }

    #[test]
    fn no_nets_gives_zero_map() {
        let d = Design::new("z", Rect::new(0, 0, 40, 40), vec![cell(0, 3, 3)], vec![]).unwrap();
        let spec = make_grid_spec(&d, 4, 4, 1).unwrap();
        let raw = rudy_labels(&d, &spec);
        assert!(raw.grid.iter().chain(&raw.cell).all(|&v| v == 0.0));
        let y = normalize_labels(&raw, split_c_max([&raw])).unwrap();
        assert_eq!(y.c_max, 1.0);
        assert!(y.grid_y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn net_inside_one_tile() {
        // pins at (11,11) and (17,15), tile [10,20)x[10,20)
        let cells = vec![cell(0, 10, 10), cell(1, 16, 14)];
        let nets = vec![Net {
            id: 0,
            name: "n".into(),
            pins: vec![pin(0), pin(1)],
        }];
        let d = Design::new("one", Rect::new(0, 0, 40, 40), cells, nets).unwrap();
        let spec = make_grid_spec(&d, 4, 4, 1).unwrap();
        let map = rudy_map(&d, &spec);
        let t = spec.tile_id(0, 1, 1);
        // HPWL 10 over a 6x4 box, fully inside the tile
        assert!((map[t] - 10.0).abs() < 1e-12);
        assert_eq!(map.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn normalize_endpoints_and_order() {
        let raw = RawLabels {
            m: 3,
            n: 1,
            grid: vec![0.0, 2.0, 9.0],
            cell: vec![2.0],
        };
        let y = normalize_labels(&raw, split_c_max([&raw])).unwrap();
        assert_eq!(y.grid_y[0], 0.0);
        assert_eq!(y.grid_y[2], 1.0);
        assert!(y.grid_y[1] > 0.0 && y.grid_y[1] < 1.0);
        assert_eq!(y.cell_y[0], y.grid_y[1]);
        assert!(normalize_labels(&raw, 0.0).is_err());
    }

    #[test]
    fn downsample_cases() {
        let m = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(downsample_area_avg(&m, 2, 2, 2, 2).unwrap(), m);
        assert_eq!(downsample_area_avg(&[5.0; 4], 2, 2, 1, 1).unwrap(), vec![5.0]);
        // 3 -> 2 columns: weights (2,1) and (1,2) in thirds
        let d = downsample_area_avg(&[3.0, 6.0, 9.0], 3, 1, 2, 1).unwrap();
        assert!((d[0] - 4.0).abs() < 1e-15 && (d[1] - 8.0).abs() < 1e-15);
        assert!(downsample_area_avg(&m, 2, 2, 0, 1).is_err());
        assert!(downsample_area_avg(&m, 2, 2, 3, 1).is_err());
    }

    #[test]
    fn label_file_round_trip() {
        let f = LabelFile {
            design: "d".into(),
            m: 2,
            n: 1,
            c_max: Some(2.5),
            grid: vec![0.25, 0.5],
            cell: vec![0.5],
        };
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        let g = LabelFile::read(&buf[..]).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.labels().unwrap().c_max, 2.5);
        assert!(LabelFile::read(&buf[..buf.len() - 1]).is_err());
    }
}
