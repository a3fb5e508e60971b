//! Placed-design model and its two text front ends: a DEF subset
//! ([`parse_def`]) and a line-oriented canonical JSON format
//! ([`parse_canonical`] / [`emit_canonical`]).

mod canonical;
mod def;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use canonical::{emit_canonical, parse_canonical};
pub use def::{parse_def, parse_def_with_library, MasterInfo, MasterLibrary};

/// Axis-aligned rectangle in database units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl Rect {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PinDirection {
    Input,
    Output,
}

impl PinDirection {
    pub fn code(self) -> &'static str {
        match self {
            PinDirection::Input => "I",
            PinDirection::Output => "O",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "I" => Some(PinDirection::Input),
            "O" => Some(PinDirection::Output),
            _ => None,
        }
    }
}

/// A placed instance. `(x, y)` is the lower-left corner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub id: usize,
    pub name: String,
    pub master: String,
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
    pub is_macro: bool,
}

impl Cell {
    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w as f64 * self.h as f64
    }
}

/// One net terminal; the offset is relative to the cell's lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pin {
    pub cell: usize,
    pub direction: PinDirection,
    pub offset_x: i64,
    pub offset_y: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Net {
    pub id: usize,
    pub name: String,
    pub pins: Vec<Pin>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    pub name: String,
    pub die: Rect,
    pub cells: Vec<Cell>,
    pub nets: Vec<Net>,
    /// Master name → pin directions of its lowest-id instance, in net order.
    /// Derived from cells and nets by [`Design::new`].
    pub masters: BTreeMap<String, Vec<PinDirection>>,
}

impl Design {
    /// Assembles and validates a design. Ids must already be dense and in
    /// order; the master table is derived.
    pub fn new(name: impl Into<String>, die: Rect, cells: Vec<Cell>, nets: Vec<Net>) -> Result<Self> {
        let mut d = Design {
            name: name.into(),
            die,
            cells,
            nets,
            masters: BTreeMap::new(),
        };
        d.validate()?;
        d.masters = derive_masters(&d.cells, &d.nets);
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let die = &self.die;
        if die.x1 <= die.x0 || die.y1 <= die.y0 {
            return Err(Error::Invariant(format!(
                "die area ({}, {}) - ({}, {}) is empty",
                die.x0, die.y0, die.x1, die.y1
            )));
        }
        if self.cells.is_empty() {
            return Err(Error::Invariant("design has no cells".into()));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if c.id != i {
                return Err(Error::Invariant(format!(
                    "cell `{}` has id {} at position {i}",
                    c.name, c.id
                )));
            }
            if c.w <= 0 || c.h <= 0 {
                return Err(Error::Invariant(format!(
                    "cell `{}` has non-positive size {}x{}",
                    c.name, c.w, c.h
                )));
            }
            let disjoint = c.x + c.w <= die.x0 || c.x >= die.x1 || c.y + c.h <= die.y0 || c.y >= die.y1;
            if disjoint {
                return Err(Error::Invariant(format!("cell `{}` lies outside the die", c.name)));
            }
        }
        for (i, n) in self.nets.iter().enumerate() {
            if n.id != i {
                return Err(Error::Invariant(format!(
                    "net `{}` has id {} at position {i}",
                    n.name, n.id
                )));
            }
            if n.pins.is_empty() {
                return Err(Error::Invariant(format!("net `{}` has no pins", n.name)));
            }
            let mut seen = HashSet::with_capacity(n.pins.len());
            for p in &n.pins {
                if p.cell >= self.cells.len() {
                    return Err(Error::UnknownReference(format!("cell #{} (net `{}`)", p.cell, n.name)));
                }
                if !seen.insert((p.cell, p.offset_x, p.offset_y)) {
                    return Err(Error::Invariant(format!(
                        "net `{}` repeats the pin of cell `{}` at offset ({}, {})",
                        n.name, self.cells[p.cell].name, p.offset_x, p.offset_y
                    )));
                }
            }
        }
        Ok(())
    }

    /// Absolute pin location in database units.
    pub fn pin_position(&self, pin: &Pin) -> (f64, f64) {
        let c = &self.cells[pin.cell];
        ((c.x + pin.offset_x) as f64, (c.y + pin.offset_y) as f64)
    }

    /// Pin bounding box `(xmin, ymin, xmax, ymax)` of a net.
    pub fn net_bbox(&self, net: &Net) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &net.pins {
            let (x, y) = self.pin_position(p);
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        b
    }

    pub fn hpwl(&self, net: &Net) -> f64 {
        let (x0, y0, x1, y1) = self.net_bbox(net);
        (x1 - x0) + (y1 - y0)
    }

    /// Same design shifted by `(dx, dy)` database units, die included.
    pub fn translated(&self, dx: i64, dy: i64) -> Design {
        let mut d = self.clone();
        d.die = Rect::new(d.die.x0 + dx, d.die.y0 + dy, d.die.x1 + dx, d.die.y1 + dy);
        for c in &mut d.cells {
            c.x += dx;
            c.y += dy;
        }
        d
    }
}

fn derive_masters(cells: &[Cell], nets: &[Net]) -> BTreeMap<String, Vec<PinDirection>> {
    let mut first_instance: BTreeMap<&str, usize> = BTreeMap::new();
    for c in cells {
        first_instance.entry(c.master.as_str()).or_insert(c.id);
    }
    let mut dirs: Vec<Vec<PinDirection>> = vec![Vec::new(); cells.len()];
    for n in nets {
        for p in &n.pins {
            dirs[p.cell].push(p.direction);
        }
    }
    first_instance
        .into_iter()
        .map(|(m, id)| (m.to_string(), std::mem::take(&mut dirs[id])))
        .collect()
}
