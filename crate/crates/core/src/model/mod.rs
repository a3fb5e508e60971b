//! The congestion network: per-type input encoders, `L` rounds of
//! relation-specific message passing, fine/coarse grid refinement with a gated
//! blend, and sigmoid read-out heads for cells and level-0 tiles.

mod checkpoint;
mod forward;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use forward::{forward, predict, Forward, GraphIndex, Prediction};

pub const CELL_IN: usize = 13;
pub const NET_IN: usize = 6;
pub const GRID_IN: usize = 5;
pub const PIN_IN: usize = 3;
pub const GEOM_IN: usize = 4;

/// Component switches; every switch defaults to on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablations {
    pub hierarchical_grid: bool,
    pub grid_net_mp: bool,
    pub geom_mp: bool,
    pub gated_aggregation: bool,
    pub enriched_features: bool,
    pub weighted_loss: bool,
    pub variance_reg: bool,
}

impl Default for Ablations {
    fn default() -> Self {
        Ablations {
            hierarchical_grid: true,
            grid_net_mp: true,
            geom_mp: true,
            gated_aggregation: true,
            enriched_features: true,
            weighted_loss: true,
            variance_reg: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub levels: usize,
    pub k_geom: usize,
    pub ablations: Ablations,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            layers: 3,
            levels: 2,
            k_geom: 8,
            ablations: Ablations::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 || self.levels == 0 {
            return Err(Error::Config(format!(
                "hidden, layers and levels must be >= 1 (got {}, {}, {})",
                self.hidden, self.layers, self.levels
            )));
        }
        Ok(())
    }

    /// `(name, rows, cols, is_bias)` for every parameter, in a fixed order.
    pub fn param_layout(&self) -> Vec<(String, usize, usize, bool)> {
        let d = self.hidden;
        let mut v = Vec::new();
        let mut lin = |name: &str, fan_in: usize, fan_out: usize, bias: bool| {
            v.push((format!("{name}.w"), fan_in, fan_out, false));
            if bias {
                v.push((format!("{name}.b"), 1, fan_out, true));
            }
        };
        lin("enc.cell", CELL_IN, d, true);
        lin("enc.net", NET_IN, d, true);
        lin("enc.grid", GRID_IN, d, true);
        for l in 0..self.layers {
            let p = format!("layer{l}");
            lin(&format!("{p}.pin_msg"), d + PIN_IN, d, true);
            lin(&format!("{p}.grid_to_net"), d, d, false);
            lin(&format!("{p}.net_update"), 3 * d, d, true);
            lin(&format!("{p}.net_to_cell"), d, d, false);
            lin(&format!("{p}.geom_gate"), 2 * d + GEOM_IN, 1, true);
            lin(&format!("{p}.geom_msg"), d, d, false);
            lin(&format!("{p}.cell_fuse"), 3 * d, d, true);
            lin(&format!("{p}.cell_to_grid"), d, d, false);
            lin(&format!("{p}.grid_update"), 2 * d, d, true);
        }
        for l in 0..self.levels.saturating_sub(1) {
            lin(&format!("hier.fine_to_coarse{l}"), d, d, true);
            lin(&format!("hier.coarse_to_fine{l}"), d, d, true);
        }
        if self.levels > 1 {
            lin("hier.gate", 2 * d, d, true);
        }
        lin("head.cell.hidden", 2 * d, d, true);
        lin("head.cell.out", d, 1, true);
        lin("head.grid.hidden", d, d, true);
        lin("head.grid.out", d, 1, true);
        v
    }
}

/// Named weight collection. Names are stable and sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub tensors: BTreeMap<String, Matrix<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn get(&self, name: &str) -> Result<&Matrix<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Matrix<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Matrix::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Matrix::all_finite)
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Checks names and shapes against the layout implied by `cfg`.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let layout = cfg.param_layout();
        if layout.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for (name, r, c, _) in layout {
            let m = self.get(&name)?;
            if m.shape() != (r, c) {
                return Err(Error::Shape {
                    op: "parameter layout",
                    lhs: m.shape(),
                    rhs: (r, c),
                });
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights (`±√(6/(fan_in+fan_out))`) and zero biases, drawn
/// in layout order from a seeded ChaCha stream.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = cfg
        .param_layout()
        .into_iter()
        .map(|(name, rows, cols, is_bias)| {
            let m = if is_bias {
                Matrix::zeros(rows, cols)
            } else {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                Matrix::from_fn(rows, cols, |_, _| T::lit(rng.gen_range(-bound..=bound)))
            };
            (name, m)
        })
        .collect();
    Ok(ModelParams { tensors })
}
