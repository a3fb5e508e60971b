use std::collections::BTreeMap;
use std::sync::Arc;

use super::{ModelConfig, ModelParams};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::graph::HeteroGraph;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Index lists of a graph, shared by every forward pass over it.
#[derive(Debug, Clone)]
pub struct GraphIndex {
    pub n_cells: usize,
    pub n_nets: usize,
    pub tiles: Vec<usize>,
    pin_cell: Arc<[usize]>,
    pin_net: Arc<[usize]>,
    span_net: Arc<[usize]>,
    span_tile: Arc<[usize]>,
    geom_dst: Arc<[usize]>,
    geom_src: Arc<[usize]>,
    cell_tile: Arc<[usize]>,
    parents: Vec<Arc<[usize]>>,
}

impl GraphIndex {
    pub fn new(g: &HeteroGraph) -> Self {
        let mut span_net = Vec::new();
        let mut span_tile = Vec::new();
        for (e, tiles) in g.net2grids.iter().enumerate() {
            for &t in tiles {
                span_net.push(e);
                span_tile.push(t);
            }
        }
        GraphIndex {
            n_cells: g.n_cells,
            n_nets: g.n_nets,
            tiles: (0..g.levels()).map(|l| g.tiles_at(l)).collect(),
            pin_cell: g.pin_edges.iter().map(|e| e.cell).collect(),
            pin_net: g.pin_edges.iter().map(|e| e.net).collect(),
            span_net: span_net.into(),
            span_tile: span_tile.into(),
            geom_dst: g.geom_edges.iter().map(|e| e.0).collect(),
            geom_src: g.geom_edges.iter().map(|e| e.1).collect(),
            cell_tile: g.cell2grid.iter().copied().collect(),
            parents: g.parents.iter().map(|p| p.iter().copied().collect()).collect(),
        }
    }

    pub fn levels(&self) -> usize {
        self.tiles.len()
    }

    pub fn cell_tile(&self) -> &[usize] {
        &self.cell_tile
    }
}

/// Handles into the tape produced by [`forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    /// `n_cells × 1`, in (0, 1).
    pub cell_pred: Var,
    /// `tiles(0) × 1`, in (0, 1).
    pub grid_pred: Var,
    pub cell_emb: Var,
    /// Fused level-0 tile embeddings fed to the heads.
    pub grid_emb: Var,
    /// Level-0 tile embeddings after message passing.
    pub grid_local: Var,
    /// Top-down refined tile embeddings, when the hierarchy is active.
    pub grid_refined: Option<Var>,
    pub params: BTreeMap<String, Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub cell: Vec<T>,
    pub grid: Vec<T>,
}

struct Ctx<'a, T: Scalar> {
    tape: &'a mut Tape<T>,
    params: &'a BTreeMap<String, Var>,
}

impl<T: Scalar> Ctx<'_, T> {
    fn p(&self, name: &str) -> Result<Var> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named `{name}`")))
    }

    fn linear(&mut self, x: Var, name: &str) -> Result<Var> {
        let y = self.tape.matmul(x, self.p(&format!("{name}.w"))?)?;
        match self.params.get(&format!("{name}.b")) {
            Some(&b) => self.tape.add_bias(y, b),
            None => Ok(y),
        }
    }

    fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.tape.leaf(Matrix::zeros(rows, cols))
    }

    fn check(&self, v: Var, layer: &str, relation: &str) -> Result<Var> {
        if self.tape.value(v).all_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("{layer}: {relation} activation")))
        }
    }
}

/// Records one full forward pass on `tape`. Parameters become leaves; their
/// handles are returned in [`Forward::params`].
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    g: &GraphIndex,
    fs: &FeatureSet,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<Forward> {
    cfg.validate()?;
    if g.levels() != cfg.levels || fs.grid_x.len() != cfg.levels {
        return Err(Error::Config(format!(
            "model expects {} grid levels, graph has {} and features {}",
            cfg.levels,
            g.levels(),
            fs.grid_x.len()
        )));
    }
    let masked;
    let fs = if cfg.ablations.enriched_features {
        fs
    } else {
        masked = fs.minimal();
        &masked
    };
    let checks = [
        ("cell features", fs.cell_x.shape(), (g.n_cells, super::CELL_IN)),
        ("net features", fs.net_x.shape(), (g.n_nets, super::NET_IN)),
        ("pin features", fs.pin_e.shape(), (g.pin_cell.len(), super::PIN_IN)),
        ("geom features", fs.geom_e.shape(), (g.geom_src.len(), super::GEOM_IN)),
    ];
    for (what, got, want) in checks {
        if got != want {
            return Err(Error::Shape {
                op: what,
                lhs: got,
                rhs: want,
            });
        }
    }
    for (l, m) in fs.grid_x.iter().enumerate() {
        if m.shape() != (g.tiles[l], super::GRID_IN) {
            return Err(Error::Shape {
                op: "grid features",
                lhs: m.shape(),
                rhs: (g.tiles[l], super::GRID_IN),
            });
        }
    }

    let mut handles = BTreeMap::new();
    for (name, m) in &params.tensors {
        handles.insert(name.clone(), tape.leaf(m.clone()));
    }
    let mut cx = Ctx { tape, params: &handles };
    let d = cfg.hidden;
    let ab = cfg.ablations;
    let (nc, ne, nt) = (g.n_cells, g.n_nets, g.tiles[0]);

    let cell_x = cx.tape.leaf(fs.cell_x.cast());
    let net_x = cx.tape.leaf(fs.net_x.cast());
    let pin_e = cx.tape.leaf(fs.pin_e.cast());
    let geom_e = cx.tape.leaf(fs.geom_e.cast());
    let grid_x: Vec<Var> = fs.grid_x.iter().map(|m| cx.tape.leaf(m.cast())).collect();

    let mut h_cell = cx.linear(cell_x, "enc.cell")?;
    let mut h_net = cx.linear(net_x, "enc.net")?;
    let mut h_grid = cx.linear(grid_x[0], "enc.grid")?;

    for l in 0..cfg.layers {
        let p = format!("layer{l}");
        let tag = format!("layer {l}");

        // cell -> net: pin-aware messages, mean over each net's pins
        let hv = cx.tape.gather(h_cell, &g.pin_cell)?;
        let z = cx.tape.concat_cols(&[hv, pin_e])?;
        let z = cx.linear(z, &format!("{p}.pin_msg"))?;
        let msg = cx.tape.relu(z);
        let net_from_cells = cx.tape.segment_mean(msg, &g.pin_net, ne)?;
        let net_from_cells = cx.check(net_from_cells, &tag, "cell->net")?;

        // grid -> net: mean of projected tiles under the net bbox
        let net_from_grid = if ab.grid_net_mp {
            let t = cx.linear(h_grid, &format!("{p}.grid_to_net"))?;
            let t = cx.tape.gather(t, &g.span_tile)?;
            let m = cx.tape.segment_mean(t, &g.span_net, ne)?;
            cx.check(m, &tag, "grid->net")?
        } else {
            cx.zeros(ne, d)
        };

        let z = cx.tape.concat_cols(&[net_from_cells, net_from_grid, h_net])?;
        let z = cx.linear(z, &format!("{p}.net_update"))?;
        let z = cx.tape.relu(z);
        h_net = cx.tape.add(z, h_net)?;
        h_net = cx.check(h_net, &tag, "net update")?;

        // net -> cell
        let t = cx.linear(h_net, &format!("{p}.net_to_cell"))?;
        let t = cx.tape.gather(t, &g.pin_net)?;
        let cell_from_nets = cx.tape.segment_mean(t, &g.pin_cell, nc)?;
        let cell_from_nets = cx.check(cell_from_nets, &tag, "net->cell")?;

        // geometric neighbours, optionally gated
        let cell_from_geom = if ab.geom_mp {
            let src = cx.linear(h_cell, &format!("{p}.geom_msg"))?;
            let mut msg = cx.tape.gather(src, &g.geom_src)?;
            if ab.gated_aggregation {
                let hi = cx.tape.gather(h_cell, &g.geom_dst)?;
                let hj = cx.tape.gather(h_cell, &g.geom_src)?;
                let z = cx.tape.concat_cols(&[hi, hj, geom_e])?;
                let z = cx.linear(z, &format!("{p}.geom_gate"))?;
                let alpha = cx.tape.sigmoid(z);
                msg = cx.tape.mul_col(msg, alpha)?;
            }
            let m = cx.tape.segment_mean(msg, &g.geom_dst, nc)?;
            cx.check(m, &tag, "cell<->cell")?
        } else {
            cx.zeros(nc, d)
        };

        let z = cx.tape.concat_cols(&[h_cell, cell_from_nets, cell_from_geom])?;
        let z = cx.linear(z, &format!("{p}.cell_fuse"))?;
        let z = cx.tape.relu(z);
        h_cell = cx.tape.add(z, h_cell)?;
        h_cell = cx.check(h_cell, &tag, "cell update")?;

        // cell -> grid
        let t = cx.linear(h_cell, &format!("{p}.cell_to_grid"))?;
        let grid_from_cells = cx.tape.segment_mean(t, &g.cell_tile, nt)?;
        let z = cx.tape.concat_cols(&[h_grid, grid_from_cells])?;
        let z = cx.linear(z, &format!("{p}.grid_update"))?;
        let z = cx.tape.relu(z);
        h_grid = cx.tape.add(z, h_grid)?;
        h_grid = cx.check(h_grid, &tag, "cell->grid")?;
    }

    let mut grid_refined = None;
    let grid_out = if ab.hierarchical_grid && cfg.levels > 1 {
        // bottom-up summaries
        let mut up = vec![h_grid];
        for l in 0..cfg.levels - 1 {
            let pooled = cx.tape.segment_mean(up[l], &g.parents[l], g.tiles[l + 1])?;
            let z = cx.linear(pooled, &format!("hier.fine_to_coarse{l}"))?;
            let z = cx.tape.relu(z);
            let own = cx.linear(grid_x[l + 1], "enc.grid")?;
            let h = cx.tape.add(z, own)?;
            up.push(cx.check(h, "hierarchy", "fine->coarse")?);
        }
        // top-down context
        let mut context = up[cfg.levels - 1];
        let mut refined = context;
        for l in (0..cfg.levels - 1).rev() {
            let from_parent = cx.tape.gather(context, &g.parents[l])?;
            refined = cx.linear(from_parent, &format!("hier.coarse_to_fine{l}"))?;
            if l > 0 {
                context = cx.tape.add(up[l], refined)?;
            }
        }
        let refined = cx.check(refined, "hierarchy", "coarse->fine")?;
        grid_refined = Some(refined);
        // gamma * refined + (1 - gamma) * local
        let z = cx.tape.concat_cols(&[h_grid, refined])?;
        let z = cx.linear(z, "hier.gate")?;
        let gamma = cx.tape.sigmoid(z);
        let diff = cx.tape.sub(refined, h_grid)?;
        let mixed = cx.tape.mul(gamma, diff)?;
        let out = cx.tape.add(h_grid, mixed)?;
        cx.check(out, "hierarchy", "gated fusion")?
    } else {
        h_grid
    };

    let tile_of_cell = cx.tape.gather(grid_out, &g.cell_tile)?;
    let z = cx.tape.concat_cols(&[h_cell, tile_of_cell])?;
    let z = cx.linear(z, "head.cell.hidden")?;
    let z = cx.tape.relu(z);
    let z = cx.linear(z, "head.cell.out")?;
    let cell_pred = cx.tape.sigmoid(z);

    let z = cx.linear(grid_out, "head.grid.hidden")?;
    let z = cx.tape.relu(z);
    let z = cx.linear(z, "head.grid.out")?;
    let grid_pred = cx.tape.sigmoid(z);
    cx.check(cell_pred, "head", "cell readout")?;
    cx.check(grid_pred, "head", "grid readout")?;

    Ok(Forward {
        cell_pred,
        grid_pred,
        cell_emb: h_cell,
        grid_emb: grid_out,
        grid_local: h_grid,
        grid_refined,
        params: handles,
    })
}

/// Forward pass on a scratch tape, returning only the predictions.
pub fn predict<T: Scalar>(
    g: &GraphIndex,
    fs: &FeatureSet,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<Prediction<T>> {
    let mut tape = Tape::new();
    let f = forward(&mut tape, g, fs, params, cfg)?;
    Ok(Prediction {
        cell: tape.value(f.cell_pred).as_slice().to_vec(),
        grid: tape.value(f.grid_pred).as_slice().to_vec(),
    })
}
