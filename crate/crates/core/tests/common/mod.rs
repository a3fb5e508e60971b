//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hgn_congestion::graph::{make_grid_spec, GridSpec, HeteroGraph};
use hgn_congestion::labels::{normalize_labels, rudy_labels, split_c_max};
use hgn_congestion::model::{ModelConfig, ModelParams};
use hgn_congestion::netlist::Design;
use hgn_congestion::train::{loss_and_grads, Sample, TrainConfig};
use hgn_congestion::Matrix;

pub fn labelled_sample(d: &Design, m: usize, n: usize, levels: usize, k_geom: usize) -> Sample {
    let spec = make_grid_spec(d, m, n, levels).unwrap();
    let raw = rudy_labels(d, &spec);
    let y = normalize_labels(&raw, split_c_max([&raw])).unwrap();
    Sample::new(d, &spec, k_geom, y).unwrap()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Worst relative error between analytic gradients of the total loss and
/// central differences, with the parameter name where it occurs.
pub fn model_gradcheck(
    s: &Sample,
    params: &ModelParams<f64>,
    mc: &ModelConfig,
    tc: &TrainConfig,
    h: f64,
    floor: f64,
) -> (f64, String, usize) {
    let (_, grads) = loss_and_grads(s, params, mc, tc).unwrap();
    let loss = |p: &ModelParams<f64>| {
        let (parts, _) = loss_and_grads(s, p, mc, tc).unwrap();
        parts[0] + tc.lambda_grid * parts[1] + tc.lambda_var * parts[2]
    };
    let mut worst = (0.0, String::new(), 0);
    let mut p = params.clone();
    for (name, g) in &grads {
        for i in 0..g.len() {
            let orig = p.tensors[name].as_slice()[i];
            p.get_mut(name).unwrap().as_mut_slice()[i] = orig + h;
            let up = loss(&p);
            p.get_mut(name).unwrap().as_mut_slice()[i] = orig - h;
            let down = loss(&p);
            p.get_mut(name).unwrap().as_mut_slice()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_err(g.as_slice()[i], numeric, floor);
            if e > worst.0 {
                worst = (e, name.clone(), i);
            }
        }
    }
    worst
}

/// Central-difference gradient of a scalar function of one matrix.
pub fn numeric_grad(x: &Matrix<f64>, h: f64, mut f: impl FnMut(&Matrix<f64>) -> f64) -> Matrix<f64> {
    let mut probe = x.clone();
    let mut g = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        g.as_mut_slice()[i] = (up - down) / (2.0 * h);
    }
    g
}

/// RUDY by visiting every (net, tile) pair and intersecting rectangles.
pub fn naive_rudy(d: &Design, spec: &GridSpec) -> Vec<f64> {
    let mut map = vec![0.0; spec.m * spec.n];
    for net in &d.nets {
        let xs: Vec<f64> = net.pins.iter().map(|p| d.pin_position(p).0).collect();
        let ys: Vec<f64> = net.pins.iter().map(|p| d.pin_position(p).1).collect();
        let (mut x0, mut x1) = (
            xs.iter().cloned().fold(f64::MAX, f64::min),
            xs.iter().cloned().fold(f64::MIN, f64::max),
        );
        let (mut y0, mut y1) = (
            ys.iter().cloned().fold(f64::MAX, f64::min),
            ys.iter().cloned().fold(f64::MIN, f64::max),
        );
        let hpwl = (x1 - x0) + (y1 - y0);
        if hpwl == 0.0 {
            continue;
        }
        if x1 - x0 < 1.0 {
            let c = (x0 + x1) / 2.0;
            (x0, x1) = (c - 0.5, c + 0.5);
        }
        if y1 - y0 < 1.0 {
            let c = (y0 + y1) / 2.0;
            (y0, y1) = (c - 0.5, c + 0.5);
        }
        let density = hpwl / ((x1 - x0) * (y1 - y0));
        for (t, v) in map.iter_mut().enumerate() {
            let (tx0, ty0, tx1, ty1) = spec.tile_rect(0, t);
            let ox = (x1.min(tx1) - x0.max(tx0)).max(0.0);
            let oy = (y1.min(ty1) - y0.max(ty0)).max(0.0);
            *v += density * ox * oy;
        }
    }
    map
}

pub fn brute_pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va.sqrt() * vb.sqrt()))
    }
}

/// Rank of each value: 1 + #smaller + (#equal − 1)/2, by direct counting.
pub fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn brute_spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    brute_pearson(&brute_ranks(a), &brute_ranks(b))
}

/// `(tau_b, tau_a)` by enumerating all pairs.
pub fn brute_kendall(a: &[f64], b: &[f64]) -> (Option<f64>, f64) {
    let n = a.len();
    let (mut conc, mut disc, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                tie_a += 1;
            }
            if db == 0.0 {
                tie_b += 1;
            }
            if da * db > 0.0 {
                conc += 1;
            } else if da * db < 0.0 {
                disc += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let tau_a = (conc - disc) as f64 / n0 as f64;
    let denom = (((n0 - tie_a) * (n0 - tie_b)) as f64).sqrt();
    let tau_b = (denom > 0.0).then(|| (conc - disc) as f64 / denom);
    (tau_b, tau_a)
}

/// Structural invariants of a graph built from `d`. Returns the first
/// violation found.
pub fn check_graph_invariants(d: &Design, g: &HeteroGraph, k: usize) -> Result<(), String> {
    let pins: usize = d.nets.iter().map(|n| n.pins.len()).sum();
    if g.pin_edges.len() != pins {
        return Err(format!("{} pin edges for {pins} pins", g.pin_edges.len()));
    }
    let spec = &g.grid;
    for l in 0..spec.levels {
        let f = 1 << l;
        let want = spec.m.div_ceil(f) * spec.n.div_ceil(f);
        if g.tiles_at(l) != want {
            return Err(format!("level {l}: {} tiles, want {want}", g.tiles_at(l)));
        }
        let (cols, rows) = (spec.m.div_ceil(f), spec.n.div_ceil(f));
        let want_edges = (cols - 1) * rows + cols * (rows - 1);
        if g.grid_adj_edges[l].len() != want_edges {
            return Err(format!(
                "level {l}: {} adjacency edges, want {want_edges}",
                g.grid_adj_edges[l].len()
            ));
        }
        for &(a, b) in &g.grid_adj_edges[l] {
            let (ca, ra) = (a % cols, a / cols);
            let (cb, rb) = (b % cols, b / cols);
            if ca.abs_diff(cb) + ra.abs_diff(rb) != 1 {
                return Err(format!("level {l}: non 4-neighbour edge {a}-{b}"));
            }
        }
        if l + 1 < spec.levels {
            let pcols = spec.m.div_ceil(f * 2);
            for (t, &p) in g.parents[l].iter().enumerate() {
                let (c, r) = (t % cols, t / cols);
                if p != (r / 2) * pcols + c / 2 {
                    return Err(format!("level {l}: tile {t} has parent {p}"));
                }
            }
        }
    }

    let set: BTreeSet<(usize, usize)> = g.geom_edges.iter().copied().collect();
    for &(a, b) in &g.geom_edges {
        if a == b {
            return Err(format!("self loop at {a}"));
        }
        if !set.contains(&(b, a)) {
            return Err(format!("geometric edge {a}->{b} has no reverse"));
        }
    }
    let centers: Vec<(f64, f64)> = d.cells.iter().map(|c| c.center()).collect();
    let mut nbrs: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(a, b) in &g.geom_edges {
        nbrs.entry(a).or_default().insert(b);
    }
    for (i, &(xi, yi)) in centers.iter().enumerate() {
        let mut others: Vec<(f64, usize)> = (0..centers.len())
            .filter(|&j| j != i)
            .map(|j| ((centers[j].0 - xi).powi(2) + (centers[j].1 - yi).powi(2), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            if !nbrs.get(&i).is_some_and(|s| s.contains(&j)) {
                return Err(format!("cell {i} misses nearest neighbour {j}"));
            }
        }
    }

    for (c, &t) in g.cell2grid.iter().enumerate() {
        let (x, y) = centers[c];
        let x = x.clamp(d.die.x0 as f64, d.die.x1 as f64);
        let y = y.clamp(d.die.y0 as f64, d.die.y1 as f64);
        let (tx0, ty0, tx1, ty1) = spec.tile_rect(0, t);
        let in_x = tx0 <= x && (x < tx1 || (x == tx1 && tx1 >= d.die.x1 as f64 - 1e-9));
        let in_y = ty0 <= y && (y < ty1 || (y == ty1 && ty1 >= d.die.y1 as f64 - 1e-9));
        if !(in_x && in_y) {
            return Err(format!("cell {c} centre ({x}, {y}) outside tile {t}"));
        }
    }
    Ok(())
}
