//! Canonical JSON-lines design format.
//!
//! ```text
//! {"design":"top","die":[0,0,1000,1000]}
//! {"cell":0,"name":"u0","x":10,"y":20,"w":40,"h":60,"master":"INV","is_macro":false}
//! {"net":0,"name":"n0","pins":[[0,"O",20,30],[1,"I",5,5]]}
//! ```
//!
//! One header line, then every cell in id order, then every net in id order.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Cell, Design, Net, Pin, PinDirection, Rect};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct HeaderOut<'a> {
    design: &'a str,
    die: [i64; 4],
}

#[derive(Serialize)]
struct CellOut<'a> {
    cell: usize,
    name: &'a str,
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    master: &'a str,
    is_macro: bool,
}

#[derive(Serialize)]
struct NetOut<'a> {
    net: usize,
    name: &'a str,
    pins: Vec<(usize, &'static str, i64, i64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderIn {
    design: String,
    die: [i64; 4],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CellIn {
    cell: usize,
    name: String,
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    master: String,
    is_macro: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetIn {
    net: usize,
    name: String,
    pins: Vec<(usize, String, i64, i64)>,
}

/// Serialises a design; the output is a pure function of the design.
pub fn emit_canonical(d: &Design) -> String {
    let mut out = String::new();
    let mut line = |v: String| {
        out.push_str(&v);
        out.push('\n');
    };
    let header = HeaderOut {
        design: &d.name,
        die: [d.die.x0, d.die.y0, d.die.x1, d.die.y1],
    };
    line(serde_json::to_string(&header).expect("serialisable header"));
    for c in &d.cells {
        let rec = CellOut {
            cell: c.id,
            name: &c.name,
            x: c.x,
            y: c.y,
            w: c.w,
            h: c.h,
            master: &c.master,
            is_macro: c.is_macro,
        };
        line(serde_json::to_string(&rec).expect("serialisable cell"));
    }
    for n in &d.nets {
        let rec = NetOut {
            net: n.id,
            name: &n.name,
            pins: n
                .pins
                .iter()
                .map(|p| (p.cell, p.direction.code(), p.offset_x, p.offset_y))
                .collect(),
        };
        line(serde_json::to_string(&rec).expect("serialisable net"));
    }
    out
}

fn schema(line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        message: message.into(),
    }
}

pub fn parse_canonical(text: &str) -> Result<Design> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let Some((hline, htext)) = lines.next() else {
        return Err(Error::NoDesignHeader);
    };
    let header: HeaderIn = serde_json::from_str(htext).map_err(|e| {
        if htext.contains("\"design\"") {
            schema(hline, e.to_string())
        } else {
            Error::NoDesignHeader
        }
    })?;
    let [x0, y0, x1, y1] = header.die;

    let mut cells = Vec::new();
    let mut nets = Vec::new();
    for (lineno, text) in lines {
        let value: Value = serde_json::from_str(text).map_err(|e| schema(lineno, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| schema(lineno, "expected a JSON object"))?;
        if obj.contains_key("cell") {
            if !nets.is_empty() {
                return Err(schema(lineno, "cell record after the first net record"));
            }
            let c: CellIn = serde_json::from_value(value).map_err(|e| schema(lineno, e.to_string()))?;
            if c.cell != cells.len() {
                return Err(schema(
                    lineno,
                    format!("expected cell id {}, found {}", cells.len(), c.cell),
                ));
            }
            if c.w <= 0 || c.h <= 0 {
                return Err(Error::Invariant(format!(
                    "line {lineno}: cell `{}` has non-positive size {}x{}",
                    c.name, c.w, c.h
                )));
            }
            cells.push(Cell {
                id: c.cell,
                name: c.name,
                master: c.master,
                x: c.x,
                y: c.y,
                w: c.w,
                h: c.h,
                is_macro: c.is_macro,
            });
        } else if obj.contains_key("net") {
            let n: NetIn = serde_json::from_value(value).map_err(|e| schema(lineno, e.to_string()))?;
            if n.net != nets.len() {
                return Err(schema(
                    lineno,
                    format!("expected net id {}, found {}", nets.len(), n.net),
                ));
            }
            let pins = n
                .pins
                .into_iter()
                .map(|(cell, dir, ox, oy)| {
                    let direction = PinDirection::from_code(&dir)
                        .ok_or_else(|| schema(lineno, format!("pin direction `{dir}` is not \"I\" or \"O\"")))?;
                    Ok(Pin {
                        cell,
                        direction,
                        offset_x: ox,
                        offset_y: oy,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            nets.push(Net {
                id: n.net,
                name: n.name,
                pins,
            });
        } else {
            return Err(schema(lineno, "record is neither a cell nor a net"));
        }
    }
    Design::new(header.design, Rect::new(x0, y0, x1, y1), cells, nets)
}
