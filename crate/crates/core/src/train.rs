//! Losses, AdamW, the step learning-rate schedule and the training loop.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureSet};
use crate::graph::{build_graph, GridSpec, HeteroGraph};
use crate::labels::CongestionLabels;
use crate::matrix::Matrix;
use crate::metrics::MetricReport;
use crate::model::{forward, init_params, predict, Ablations, Forward, GraphIndex, ModelConfig, ModelParams};
use crate::netlist::Design;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Label weight scale in `w = 1 + beta·y`.
    pub beta: f64,
    pub lambda_grid: f64,
    pub lambda_var: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            weight_decay: 1e-4,
            lr_step: 50,
            lr_gamma: 0.5,
            max_epochs: 200,
            patience: 20,
            beta: 4.0,
            lambda_grid: 1.0,
            lambda_var: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("train.lr", self.lr), ("train.lr_gamma", self.lr_gamma)];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("train.weight_decay", self.weight_decay),
            ("train.beta", self.beta),
            ("train.lambda_grid", self.lambda_grid),
            ("train.lambda_var", self.lambda_var),
        ];
        for (k, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{k} must be non-negative, got {v}")));
            }
        }
        if self.lr_step == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("lr_step, max_epochs and patience must be >= 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    /// Learning rate for 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = epoch.saturating_sub(1) / self.lr_step;
        self.lr * self.lr_gamma.powi(decays as i32)
    }
}

fn check_lengths(pred: usize, y: usize, min: usize) -> Result<()> {
    if pred != y {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {pred} predictions vs {y} labels"
        )));
    }
    if pred < min {
        return Err(Error::InvalidArgument(format!(
            "need at least {min} values, got {pred}"
        )));
    }
    Ok(())
}

fn pop_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// `(1/n) Σ (1 + beta·y_i)(pred_i − y_i)²`.
pub fn weighted_mse(pred: &[f64], y: &[f64], beta: f64) -> Result<f64> {
    check_lengths(pred.len(), y.len(), 1)?;
    let s: f64 = pred
        .iter()
        .zip(y)
        .map(|(p, t)| (1.0 + beta * t) * (p - t) * (p - t))
        .sum();
    Ok(s / pred.len() as f64)
}

/// `max(0, std(y) − std(pred))²` with population standard deviations.
pub fn variance_reg(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), y.len(), 2)?;
    let gap = (pop_std(y) - pop_std(pred)).max(0.0);
    Ok(gap * gap)
}

fn column<T: Scalar>(v: &[f64]) -> Matrix<T> {
    Matrix::from_fn(v.len(), 1, |i, _| T::lit(v[i]))
}

/// Taped [`weighted_mse`] for an `n × 1` prediction.
pub fn weighted_mse_on<T: Scalar>(tape: &mut Tape<T>, pred: Var, y: &[f64], beta: f64) -> Result<Var> {
    check_lengths(tape.shape(pred).0, y.len(), 1)?;
    let target = tape.leaf(column(y));
    let w: Vec<f64> = y.iter().map(|t| 1.0 + beta * t).collect();
    let w = tape.leaf(column(&w));
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    let weighted = tape.mul(sq, w)?;
    tape.mean(weighted)
}

/// Taped [`variance_reg`] for an `n × 1` prediction.
pub fn variance_reg_on<T: Scalar>(tape: &mut Tape<T>, pred: Var, y: &[f64]) -> Result<Var> {
    let (n, _) = tape.shape(pred);
    check_lengths(n, y.len(), 2)?;
    let mean = tape.mean(pred)?;
    let mean = tape.broadcast(mean, n, 1)?;
    let centred = tape.sub(pred, mean)?;
    let sq = tape.square(centred);
    let var = tape.mean(sq)?;
    let std = tape.sqrt(var);
    let target = tape.leaf(Matrix::scalar(T::lit(pop_std(y))));
    let gap = tape.sub(target, std)?;
    let gap = tape.relu(gap);
    Ok(tape.square(gap))
}

/// Handles to the loss terms on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub cell: Var,
    pub grid: Var,
    pub var: Option<Var>,
}

/// `L_cell + λ_grid·L_grid + λ_var·(R_cell + R_grid)`.
///
/// A variance term needs two samples; levels with fewer are left out of it.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    f: &Forward,
    y: &CongestionLabels,
    tc: &TrainConfig,
    ab: &Ablations,
) -> Result<LossParts> {
    let beta = if ab.weighted_loss { tc.beta } else { 0.0 };
    let cell = weighted_mse_on(tape, f.cell_pred, &y.cell_y, beta)?;
    let grid = weighted_mse_on(tape, f.grid_pred, &y.grid_y, beta)?;
    let g = tape.scale(grid, T::lit(tc.lambda_grid));
    let mut total = tape.add(cell, g)?;
    let mut var = None;
    if ab.variance_reg {
        let mut terms = Vec::new();
        for (p, t) in [(f.cell_pred, &y.cell_y), (f.grid_pred, &y.grid_y)] {
            if t.len() >= 2 {
                terms.push(variance_reg_on(tape, p, t)?);
            }
        }
        if let Some((&first, rest)) = terms.split_first() {
            let mut r = first;
            for &t in rest {
                r = tape.add(r, t)?;
            }
            let scaled = tape.scale(r, T::lit(tc.lambda_var));
            total = tape.add(total, scaled)?;
            var = Some(r);
        }
    }
    Ok(LossParts { total, cell, grid, var })
}

/// AdamW moments for every named parameter.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Matrix<T>>,
    v: BTreeMap<String, Matrix<T>>,
}

impl<T: Scalar> Default for AdamW<T> {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> AdamW<T> {
    /// `θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ`. Parameters without a gradient
    /// entry are treated as having a zero gradient.
    pub fn update(&mut self, params: &mut ModelParams<T>, grads: &Grads<T>, lr: f64, wd: f64) -> Result<()> {
        for (name, g) in grads {
            let p = params.get(name)?;
            if g.shape() != p.shape() {
                return Err(Error::Shape {
                    op: "optimizer gradient",
                    lhs: g.shape(),
                    rhs: p.shape(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
        self.step += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::lit(1.0 - self.beta2.powi(self.step as i32));
        let (lr_t, decay, eps) = (T::lit(lr), T::lit(lr * wd), T::lit(self.eps));
        let one = T::one();
        for (name, p) in params.tensors.iter_mut() {
            let shape = p.shape();
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(shape.0, shape.1));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(shape.0, shape.1));
            let g = grads.get(name);
            let (pm, mm, vm) = (p.as_mut_slice(), m.as_mut_slice(), v.as_mut_slice());
            for i in 0..pm.len() {
                let gi = g.map_or(T::zero(), |g| g.as_slice()[i]);
                mm[i] = b1 * mm[i] + (one - b1) * gi;
                vm[i] = b2 * vm[i] + (one - b2) * gi * gi;
                let mhat = mm[i] / c1;
                let vhat = vm[i] / c2;
                pm[i] = pm[i] - lr_t * mhat / (vhat.sqrt() + eps) - decay * pm[i];
            }
        }
        Ok(())
    }
}

/// One AdamW update; see [`AdamW::update`].
pub fn optimizer_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &Grads<T>,
    state: &mut AdamW<T>,
    lr: f64,
    wd: f64,
) -> Result<()> {
    state.update(params, grads, lr, wd)
}

/// Patience counter over a score that should increase.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_epoch: usize,
    pub best_score: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_epoch: 0,
            best_score: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    /// Records an epoch; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        if score > self.best_score {
            self.best_score = score;
            self.best_epoch = epoch;
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.stale >= self.patience)
        }
    }
}

/// A design prepared for training or evaluation.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub graph: HeteroGraph,
    pub index: GraphIndex,
    pub features: FeatureSet,
    pub labels: CongestionLabels,
}

impl Sample {
    pub fn new(d: &Design, spec: &GridSpec, k_geom: usize, labels: CongestionLabels) -> Result<Self> {
        let graph = build_graph(d, spec, k_geom);
        if labels.cell_y.len() != graph.n_cells || labels.grid_y.len() != graph.tiles_at(0) {
            return Err(Error::InvalidArgument(format!(
                "labels for `{}` cover {} cells / {} tiles, graph has {} / {}",
                d.name,
                labels.cell_y.len(),
                labels.grid_y.len(),
                graph.n_cells,
                graph.tiles_at(0)
            )));
        }
        let features = featurize(d, &graph);
        Ok(Sample {
            name: d.name.clone(),
            index: GraphIndex::new(&graph),
            graph,
            features,
            labels,
        })
    }
}

/// Predictions and metrics for one sample.
pub fn evaluate<T: Scalar>(s: &Sample, params: &ModelParams<T>, cfg: &ModelConfig) -> Result<MetricReport> {
    let p = predict(&s.index, &s.features, params, cfg)?;
    let cell: Vec<f64> = p.cell.iter().map(|v| v.as_f64()).collect();
    let grid: Vec<f64> = p.grid.iter().map(|v| v.as_f64()).collect();
    MetricReport::compute(&cell, &s.labels.cell_y, &grid, &s.labels.grid_y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss_cell: f64,
    pub loss_grid: f64,
    pub loss_var: f64,
    pub val_spearman_cell: f64,
    pub val_spearman_grid: f64,
}

impl EpochLog {
    pub fn mean_spearman(&self) -> f64 {
        (self.val_spearman_cell + self.val_spearman_grid) / 2.0
    }
}

pub fn log_to_json_lines(log: &[EpochLog]) -> Result<String> {
    let mut s = String::new();
    for e in log {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    pub best: ModelParams<T>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub log: Vec<EpochLog>,
}

/// Gradients keyed by parameter name.
pub type Grads<T> = BTreeMap<String, Matrix<T>>;

/// Loss terms and parameter gradients for one sample.
pub fn loss_and_grads<T: Scalar>(
    s: &Sample,
    params: &ModelParams<T>,
    mc: &ModelConfig,
    tc: &TrainConfig,
) -> Result<([f64; 3], Grads<T>)> {
    let mut tape = Tape::new();
    let f = forward(&mut tape, &s.index, &s.features, params, mc)?;
    let lp = total_loss(&mut tape, &f, &s.labels, tc, &mc.ablations)?;
    let val = |v: Var| tape.value(v).as_slice()[0].as_f64();
    let parts = [val(lp.cell), val(lp.grid), lp.var.map_or(0.0, val)];
    let total = val(lp.total);
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("loss on `{}` is {total}", s.name)));
    }
    let grads = tape.backward(lp.total)?;
    let g = f
        .params
        .iter()
        .map(|(name, &v)| (name.clone(), grads.get_or_zeros(v, tape.shape(v))))
        .collect();
    Ok((parts, g))
}

/// Full-graph training with one step per training design per epoch, in name
/// order. Keeps the parameters from the epoch with the best mean validation
/// Spearman (undefined correlations count as 0).
pub fn fit<T: Scalar>(train: &[Sample], val: &[Sample], mc: &ModelConfig, tc: &TrainConfig) -> Result<FitOutcome<T>> {
    fit_from(init_params(mc, tc.seed)?, train, val, mc, tc)
}

/// [`fit`] starting from given parameters.
pub fn fit_from<T: Scalar>(
    mut params: ModelParams<T>,
    train: &[Sample],
    val: &[Sample],
    mc: &ModelConfig,
    tc: &TrainConfig,
) -> Result<FitOutcome<T>> {
    mc.validate()?;
    tc.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training needs non-empty train and validation splits".into(),
        ));
    }
    params.check_layout(mc)?;
    let mut order: Vec<&Sample> = train.iter().collect();
    order.sort_by(|a, b| a.name.cmp(&b.name));
    let mut opt = AdamW::default();
    let mut stopper = EarlyStopping::new(tc.patience);
    let mut best = params.clone();
    let mut log = Vec::new();
    for epoch in 1..=tc.max_epochs {
        let lr = tc.lr_at(epoch);
        let mut sums = [0.0; 3];
        for s in &order {
            let (parts, grads) = loss_and_grads(s, &params, mc, tc)?;
            for (a, b) in sums.iter_mut().zip(parts) {
                *a += b;
            }
            opt.update(&mut params, &grads, lr, tc.weight_decay)?;
        }
        let (mut sc, mut sg) = (0.0, 0.0);
        for s in val {
            let r = evaluate(s, &params, mc)?;
            sc += r.cell.spearman.unwrap_or(0.0);
            sg += r.grid.spearman.unwrap_or(0.0);
        }
        let k = order.len() as f64;
        let entry = EpochLog {
            epoch,
            lr,
            loss_cell: sums[0] / k,
            loss_grid: sums[1] / k,
            loss_var: sums[2] / k,
            val_spearman_cell: sc / val.len() as f64,
            val_spearman_grid: sg / val.len() as f64,
        };
        log::info!(
            "epoch {epoch}: loss {:.5}/{:.5}/{:.5} val rho {:.4}/{:.4}",
            entry.loss_cell,
            entry.loss_grid,
            entry.loss_var,
            entry.val_spearman_cell,
            entry.val_spearman_grid
        );
        let (improved, stop) = stopper.observe(epoch, entry.mean_spearman());
        log.push(entry);
        if improved {
            best = params.clone();
        }
        if stop {
            break;
        }
    }
    Ok(FitOutcome {
        best,
        best_epoch: stopper.best_epoch,
        best_score: stopper.best_score,
        log,
    })
}
