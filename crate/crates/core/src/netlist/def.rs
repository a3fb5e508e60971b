//! Reader for the placement/connectivity subset of DEF.
//!
//! Accepted: `DESIGN`, `DIEAREA`, `COMPONENTS`, `PINS`, `NETS`. Every other
//! statement or block (rows, tracks, vias, special nets, ...) is skipped with
//! a warning. DEF carries no cell dimensions; they come either from a
//! `+ PROPERTY width <w> + PROPERTY height <h>` pair on the component or from
//! a [`MasterLibrary`]. See `docs/def-subset.md` for the grammar.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;

use super::{Cell, Design, Net, Pin, PinDirection, Rect};
use crate::error::{Error, Result};

/// Dimensions and pin roles of a cell master.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterInfo {
    pub w: i64,
    pub h: i64,
    pub is_macro: bool,
    /// Output pin names. Empty means "guess from the pin name".
    pub outputs: BTreeSet<String>,
}

/// Master-size table, one master per line:
///
/// ```text
/// # name  width  height  [MACRO]  [OUT=pin,pin,...]
/// INV_X1  380    1400
/// RAM64   40000  30000   MACRO    OUT=DO0,DO1
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MasterLibrary {
    pub masters: BTreeMap<String, MasterInfo>,
}

impl MasterLibrary {
    pub fn parse(text: &str) -> Result<Self> {
        let mut masters = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |column: usize, message: &str| Error::Syntax {
                line: i + 1,
                column,
                message: message.to_string(),
            };
            if fields.len() < 3 {
                return Err(err(1, "expected `name width height`"));
            }
            let dim = |s: &str| s.parse::<i64>().ok().filter(|v| *v > 0);
            let (Some(w), Some(h)) = (dim(fields[1]), dim(fields[2])) else {
                return Err(err(1, "width and height must be positive integers"));
            };
            let mut info = MasterInfo {
                w,
                h,
                is_macro: false,
                outputs: BTreeSet::new(),
            };
            for f in &fields[3..] {
                if f.eq_ignore_ascii_case("MACRO") {
                    info.is_macro = true;
                } else if let Some(list) = f.strip_prefix("OUT=") {
                    info.outputs = list.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
                } else {
                    return Err(err(1, &format!("unexpected field `{f}`")));
                }
            }
            masters.insert(fields[0].to_string(), info);
        }
        Ok(MasterLibrary { masters })
    }
}

/// Pin names conventionally used for cell outputs in standard-cell libraries.
const OUTPUT_PIN_NAMES: &[&str] = &[
    "Y", "Z", "ZN", "Q", "QN", "Q_N", "CO", "COUT", "S", "SUM", "X", "O", "OUT", "GCLK", "ECK",
];

fn guess_direction(pin: &str) -> PinDirection {
    let base = pin.split(['[', '<']).next().unwrap_or(pin);
    if OUTPUT_PIN_NAMES.iter().any(|n| n.eq_ignore_ascii_case(base)) {
        PinDirection::Output
    } else {
        PinDirection::Input
    }
}

/// Blocks skipped wholesale up to their `END <name>`.
const SKIPPED_BLOCKS: &[&str] = &[
    "VIAS",
    "SPECIALNETS",
    "REGIONS",
    "BLOCKAGES",
    "GROUPS",
    "FILLS",
    "NONDEFAULTRULES",
    "PROPERTYDEFINITIONS",
    "SCANCHAINS",
    "STYLES",
    "SLOTS",
    "PINPROPERTIES",
    "BEGINEXT",
];

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token<'_>>> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            i += 1;
            line += 1;
            col = 1;
        } else if b.is_ascii_whitespace() {
            i += 1;
            col += 1;
        } else if b == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if b == b'"' {
            let (start, sl, sc) = (i, line, col);
            i += 1;
            col += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                if bytes[i] == b'\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
            if i >= bytes.len() {
                return Err(Error::Syntax {
                    line: sl,
                    column: sc,
                    message: "unterminated string".into(),
                });
            }
            i += 1;
            col += 1;
            out.push(Token {
                text: &src[start..i],
                line: sl,
                column: sc,
            });
        } else {
            let (start, sc) = (i, col);
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
                col += 1;
            }
            let mut text = &src[start..i];
            // tolerate `foo;` written without the separating blank
            let glued = text.len() > 1 && text.ends_with(';');
            if glued {
                text = &text[..text.len() - 1];
            }
            out.push(Token { text, line, column: sc });
            if glued {
                out.push(Token {
                    text: ";",
                    line,
                    column: col - 1,
                });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token<'a>>,
    pos: usize,
    eof_line: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(|t| t.text)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.column))
            .unwrap_or((self.eof_line, 1))
    }

    fn error(&self, message: impl Into<String>) -> Error {
        let (line, column) = self.here();
        Error::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        let t = self
            .toks
            .get(self.pos)
            .ok_or_else(|| self.error("unexpected end of input"))?;
        self.pos += 1;
        Ok(t.text)
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected `{want}`, found `{t}`"))),
            None => Err(self.error(format!("expected `{want}`, found end of input"))),
        }
    }

    fn int(&mut self) -> Result<i64> {
        let here = self.pos;
        let t = self.next()?;
        // DEF allows real-valued coordinates; the subset only takes integers
        t.parse::<i64>().map_err(|_| {
            self.pos = here;
            self.error(format!("expected an integer, found `{t}`"))
        })
    }

    fn point(&mut self) -> Result<(i64, i64)> {
        self.expect("(")?;
        let x = self.int()?;
        let y = self.int()?;
        self.expect(")")?;
        Ok((x, y))
    }

    /// Skips to just past the next `;`.
    fn skip_statement(&mut self) -> Result<()> {
        while self.next()? != ";" {}
        Ok(())
    }

    /// Skips the remaining `+ ...` attribute, stopping before `+` or `;`.
    fn skip_attribute(&mut self) -> Result<()> {
        while let Some(t) = self.peek() {
            if t == "+" || t == ";" {
                return Ok(());
            }
            self.pos += 1;
        }
        Err(self.error("unexpected end of input"))
    }

    fn skip_block(&mut self, name: &str) -> Result<()> {
        loop {
            let t = self.next()?;
            if t == "END" && self.peek() == Some(name) {
                self.pos += 1;
                return Ok(());
            }
        }
    }
}

struct Component {
    name: String,
    master: String,
    origin: (i64, i64),
    size: (i64, i64),
    is_macro: bool,
    /// Output pin names from the library; `None` means guess.
    outputs: Option<BTreeSet<String>>,
    /// Set for top-level I/O ports: direction of the port's net terminal.
    port_dir: Option<PinDirection>,
}

/// Parses a DEF subset. Component sizes must be given inline as properties.
pub fn parse_def(text: &str) -> Result<Design> {
    parse_def_with_library(text, &MasterLibrary::default())
}

/// Parses a DEF subset, taking component sizes from `library` where the
/// component does not carry them inline.
pub fn parse_def_with_library(text: &str, library: &MasterLibrary) -> Result<Design> {
    let toks = tokenize(text)?;
    let eof_line = text.lines().count().max(1);
    let mut p = Parser { toks, pos: 0, eof_line };

    let mut design_name = String::from("design");
    let mut die: Option<Rect> = None;
    let mut comps: Vec<Component> = Vec::new();
    let mut by_name: HashMap<String, usize> = HashMap::new();
    let mut port_ids: HashMap<String, usize> = HashMap::new();
    let mut nets: Vec<(String, Vec<NetTerm>)> = Vec::new();

    while let Some(kw) = p.peek() {
        match kw {
            "DESIGN" => {
                p.pos += 1;
                design_name = p.next()?.to_string();
                p.expect(";")?;
            }
            "DIEAREA" => {
                p.pos += 1;
                let mut pts = Vec::new();
                while p.peek() == Some("(") {
                    pts.push(p.point()?);
                }
                p.expect(";")?;
                if pts.len() < 2 {
                    return Err(p.error("DIEAREA needs at least two points"));
                }
                let xs = pts.iter().map(|q| q.0);
                let ys = pts.iter().map(|q| q.1);
                die = Some(Rect::new(
                    xs.clone().min().unwrap(),
                    ys.clone().min().unwrap(),
                    xs.max().unwrap(),
                    ys.max().unwrap(),
                ));
            }
            "COMPONENTS" => {
                p.pos += 1;
                let declared = p.int()?;
                p.expect(";")?;
                let before = comps.len();
                while p.peek() == Some("-") {
                    p.pos += 1;
                    let c = parse_component(&mut p, library)?;
                    if by_name.contains_key(&c.name) {
                        return Err(Error::DuplicateComponent(c.name));
                    }
                    by_name.insert(c.name.clone(), comps.len());
                    comps.push(c);
                }
                p.expect("END")?;
                p.expect("COMPONENTS")?;
                if declared as usize != comps.len() - before {
                    warn!(
                        "COMPONENTS declares {declared} entries but lists {}",
                        comps.len() - before
                    );
                }
            }
            "PINS" => {
                p.pos += 1;
                p.int()?;
                p.expect(";")?;
                while p.peek() == Some("-") {
                    p.pos += 1;
                    let c = parse_port(&mut p)?;
                    if port_ids.contains_key(&c.name) {
                        return Err(Error::DuplicateComponent(format!("PIN {}", c.name)));
                    }
                    port_ids.insert(c.name.clone(), comps.len());
                    comps.push(c);
                }
                p.expect("END")?;
                p.expect("PINS")?;
            }
            "NETS" => {
                p.pos += 1;
                p.int()?;
                p.expect(";")?;
                while p.peek() == Some("-") {
                    p.pos += 1;
                    nets.push(parse_net(&mut p)?);
                }
                p.expect("END")?;
                p.expect("NETS")?;
            }
            "END" => {
                p.pos += 1;
                p.expect("DESIGN")?;
                break;
            }
            other if SKIPPED_BLOCKS.contains(&other) => {
                warn!("skipping DEF section {other}");
                p.pos += 1;
                p.skip_block(other)?;
            }
            other => {
                if matches!(other, "ROW" | "TRACKS" | "GCELLGRID") {
                    warn!("skipping DEF statement {other}");
                }
                p.skip_statement()?;
            }
        }
    }

    let die = die.ok_or(Error::MissingDieArea)?;

    let cells: Vec<Cell> = comps
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let (mut x, mut y) = c.origin;
            if c.port_dir.is_some() {
                // ports sit on the die edge; pull their unit box inside
                x = x.clamp(die.x0, die.x1 - 1);
                y = y.clamp(die.y0, die.y1 - 1);
            }
            Cell {
                id,
                name: c.name.clone(),
                master: c.master.clone(),
                x,
                y,
                w: c.size.0,
                h: c.size.1,
                is_macro: c.is_macro,
            }
        })
        .collect();

    let mut out_nets = Vec::with_capacity(nets.len());
    for (id, (name, terms)) in nets.into_iter().enumerate() {
        let mut pins: Vec<Pin> = Vec::with_capacity(terms.len());
        for (comp, pin, is_port) in terms {
            let cid = if is_port {
                *port_ids
                    .get(&pin)
                    .ok_or_else(|| Error::UnknownReference(format!("PIN {pin}")))?
            } else {
                *by_name
                    .get(&comp)
                    .ok_or_else(|| Error::UnknownReference(comp.clone()))?
            };
            let c = &comps[cid];
            let direction = match (c.port_dir, &c.outputs) {
                (Some(d), _) => d,
                (None, Some(outs)) if !outs.is_empty() => {
                    if outs.contains(&pin) {
                        PinDirection::Output
                    } else {
                        PinDirection::Input
                    }
                }
                _ => guess_direction(&pin),
            };
            let (offset_x, offset_y) = if c.port_dir.is_some() {
                (0, 0)
            } else {
                (c.size.0 / 2, c.size.1 / 2)
            };
            let pin = Pin {
                cell: cid,
                direction,
                offset_x,
                offset_y,
            };
            if pins
                .iter()
                .any(|q| q.cell == pin.cell && q.offset_x == pin.offset_x && q.offset_y == pin.offset_y)
            {
                // two pins of one cell collapse onto the cell centre
                warn!("net {name}: merging repeated terminal on {}", c.name);
                continue;
            }
            pins.push(pin);
        }
        out_nets.push(Net { id, name, pins });
    }

    Design::new(design_name, die, cells, out_nets)
}

fn parse_component(p: &mut Parser<'_>, library: &MasterLibrary) -> Result<Component> {
    let name = p.next()?.to_string();
    let master = p.next()?.to_string();
    let mut origin = None;
    let mut orient_swaps = false;
    let (mut w, mut h, mut is_macro) = (None, None, None);
    loop {
        match p.next()? {
            ";" => break,
            "+" => {
                let attr = p.next()?;
                match attr {
                    "PLACED" | "FIXED" | "COVER" => {
                        origin = Some(p.point()?);
                        if attr != "COVER" || p.peek().is_some_and(|t| t != "+" && t != ";") {
                            let orient = p.next()?;
                            orient_swaps = matches!(orient, "E" | "W" | "FE" | "FW");
                        }
                    }
                    "UNPLACED" => return Err(Error::Unplaced(name)),
                    "PROPERTY" => {
                        let key = p.next()?;
                        match key.to_ascii_lowercase().as_str() {
                            "width" => w = Some(p.int()?),
                            "height" => h = Some(p.int()?),
                            "macro" => is_macro = Some(p.int()? != 0),
                            _ => p.skip_attribute()?,
                        }
                    }
                    _ => p.skip_attribute()?,
                }
            }
            t => return Err(p.error(format!("unexpected `{t}` in component `{name}`"))),
        }
    }
    let origin = origin.ok_or_else(|| Error::Unplaced(name.clone()))?;
    let lib = library.masters.get(&master);
    let (w, h) = match (w, h, lib) {
        (Some(w), Some(h), _) => (w, h),
        (_, _, Some(info)) => (w.unwrap_or(info.w), h.unwrap_or(info.h)),
        _ => {
            return Err(Error::Invariant(format!(
                "no size for component `{name}` (master `{master}` not in library)"
            )))
        }
    };
    let size = if orient_swaps { (h, w) } else { (w, h) };
    Ok(Component {
        name,
        master,
        origin,
        size,
        is_macro: is_macro.unwrap_or_else(|| lib.is_some_and(|i| i.is_macro)),
        outputs: lib.map(|i| i.outputs.clone()),
        port_dir: None,
    })
}

fn parse_port(p: &mut Parser<'_>) -> Result<Component> {
    let name = p.next()?.to_string();
    let mut origin = None;
    let mut dir = PinDirection::Input;
    loop {
        match p.next()? {
            ";" => break,
            "+" => match p.next()? {
                "DIRECTION" => {
                    // an input port drives its net
                    dir = match p.next()? {
                        "INPUT" => PinDirection::Output,
                        _ => PinDirection::Input,
                    };
                }
                "PLACED" | "FIXED" | "COVER" => {
                    origin = Some(p.point()?);
                    p.next()?;
                }
                _ => p.skip_attribute()?,
            },
            _ => {}
        }
    }
    let origin = origin.ok_or_else(|| Error::Unplaced(format!("PIN {name}")))?;
    let master = match dir {
        PinDirection::Output => "IOPORT_IN",
        PinDirection::Input => "IOPORT_OUT",
    };
    Ok(Component {
        name,
        master: master.to_string(),
        origin,
        size: (1, 1),
        is_macro: false,
        outputs: None,
        port_dir: Some(dir),
    })
}

/// (component, pin, is_io_port)
type NetTerm = (String, String, bool);

fn parse_net(p: &mut Parser<'_>) -> Result<(String, Vec<NetTerm>)> {
    let name = p.next()?.to_string();
    let mut terms = Vec::new();
    loop {
        match p.peek() {
            Some("(") => {
                p.pos += 1;
                let comp = p.next()?.to_string();
                let pin = p.next()?.to_string();
                // optional `+ SYNTHESIZED`
                while p.peek() == Some("+") {
                    p.pos += 2;
                }
                p.expect(")")?;
                let is_port = comp == "PIN";
                terms.push((comp, pin, is_port));
            }
            Some("+") => {
                // routing and other net attributes are not used
                while p.next()? != ";" {}
                break;
            }
            Some(";") => {
                p.pos += 1;
                break;
            }
            Some(t) => return Err(p.error(format!("unexpected `{t}` in net `{name}`"))),
            None => return Err(p.error("unexpected end of input")),
        }
    }
    Ok((name, terms))
}
