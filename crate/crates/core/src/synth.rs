//! Seeded synthetic placements with clustered cells and mostly local nets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};

use crate::error::{Error, Result};
use crate::netlist::{Cell, Design, Net, Pin, PinDirection, Rect};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub name: String,
    pub n_cells: usize,
    pub n_nets: usize,
    pub die_w: i64,
    pub die_h: i64,
    /// Inclusive cell width range.
    pub cell_w: (i64, i64),
    /// Inclusive cell height range.
    pub cell_h: (i64, i64),
    pub clusters: usize,
    /// Cluster standard deviation as a fraction of the die side.
    pub cluster_sigma: f64,
    /// Probability that a sink pin ignores locality.
    pub long_range: f64,
    pub mean_degree: f64,
    pub max_degree: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Square die sized for roughly 50% utilisation.
    pub fn new(n_cells: usize, n_nets: usize, clusters: usize, seed: u64) -> Self {
        let cell_w = (400, 1600);
        let cell_h = (1400, 1400);
        let mean_area = ((cell_w.0 + cell_w.1) / 2 * (cell_h.0 + cell_h.1) / 2) as f64;
        let side = ((n_cells as f64 * mean_area / 0.5).sqrt() / 1000.0).ceil().max(4.0) as i64 * 1000;
        SynthSpec {
            name: format!("synth_s{seed}"),
            n_cells,
            n_nets,
            die_w: side,
            die_h: side,
            cell_w,
            cell_h,
            clusters,
            cluster_sigma: 0.12,
            long_range: 0.1,
            mean_degree: 3.0,
            max_degree: 16,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_cells == 0 || self.clusters == 0 {
            return bad("synthetic designs need at least one cell and one cluster".into());
        }
        if self.cell_w.0 < 1 || self.cell_h.0 < 1 || self.cell_w.0 > self.cell_w.1 || self.cell_h.0 > self.cell_h.1 {
            return bad(format!("bad cell size range {:?} x {:?}", self.cell_w, self.cell_h));
        }
        if self.die_w < self.cell_w.1 || self.die_h < self.cell_h.1 {
            return bad(format!(
                "die {}x{} smaller than the largest cell",
                self.die_w, self.die_h
            ));
        }
        if self.mean_degree.is_nan() || self.mean_degree < 2.0 || self.max_degree < 2 {
            return bad("net degree mean must be >= 2 and cap >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.long_range) || self.cluster_sigma.is_nan() || self.cluster_sigma <= 0.0 {
            return bad("long_range must be in [0, 1] and cluster_sigma positive".into());
        }
        Ok(())
    }
}

/// Builds a design fully determined by `spec` (including its seed).
pub fn synth_design(spec: &SynthSpec) -> Result<Design> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (dw, dh) = (spec.die_w as f64, spec.die_h as f64);

    let centers: Vec<(f64, f64)> = (0..spec.clusters)
        .map(|_| (rng.gen_range(0.15..0.85) * dw, rng.gen_range(0.15..0.85) * dh))
        .collect();
    let sx = Normal::new(0.0, spec.cluster_sigma * dw).expect("positive sigma");
    let sy = Normal::new(0.0, spec.cluster_sigma * dh).expect("positive sigma");

    let mut cells = Vec::with_capacity(spec.n_cells);
    let mut members = vec![Vec::new(); spec.clusters];
    for id in 0..spec.n_cells {
        let k = rng.gen_range(0..spec.clusters);
        let w = rng.gen_range(spec.cell_w.0..=spec.cell_w.1);
        let h = rng.gen_range(spec.cell_h.0..=spec.cell_h.1);
        let cx = centers[k].0 + sx.sample(&mut rng);
        let cy = centers[k].1 + sy.sample(&mut rng);
        let x = (cx.round() as i64 - w / 2).clamp(0, spec.die_w - w);
        let y = (cy.round() as i64 - h / 2).clamp(0, spec.die_h - h);
        members[k].push(id);
        cells.push(Cell {
            id,
            name: format!("c{id}"),
            master: format!("SYN_{w}x{h}"),
            x,
            y,
            w,
            h,
            is_macro: false,
        });
    }
    let cluster_of: Vec<usize> = {
        let mut v = vec![0; spec.n_cells];
        for (k, m) in members.iter().enumerate() {
            for &c in m {
                v[c] = k;
            }
        }
        v
    };

    // degree = 2 + failures before success, mean 2 + (1-p)/p
    let extra = Geometric::new(1.0 / (spec.mean_degree - 1.0)).expect("valid probability");
    let dist2 = |a: usize, b: usize| {
        let (ax, ay) = cells[a].center();
        let (bx, by) = cells[b].center();
        (ax - bx).powi(2) + (ay - by).powi(2)
    };
    let mut nets = Vec::with_capacity(spec.n_nets);
    let mut order: Vec<usize> = (0..spec.n_cells).collect();
    order.shuffle(&mut rng);
    for id in 0..spec.n_nets {
        let degree = (2 + extra.sample(&mut rng) as usize)
            .min(spec.max_degree)
            .min(spec.n_cells);
        let driver = order[id % spec.n_cells];
        let pool = &members[cluster_of[driver]];
        let mut chosen = vec![driver];
        let mut attempts = 0;
        while chosen.len() < degree && attempts < 64 * degree {
            attempts += 1;
            let c = if rng.gen_bool(spec.long_range) || pool.len() < 2 {
                rng.gen_range(0..spec.n_cells)
            } else {
                // nearest of three same-cluster draws
                (0..3)
                    .map(|_| pool[rng.gen_range(0..pool.len())])
                    .min_by(|&a, &b| dist2(driver, a).total_cmp(&dist2(driver, b)).then(a.cmp(&b)))
                    .expect("three draws")
            };
            if !chosen.contains(&c) {
                chosen.push(c);
            }
        }
        let pins = chosen
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let cell = &cells[c];
                let (direction, ox) = if i == 0 {
                    (PinDirection::Output, cell.w * 3 / 4)
                } else {
                    (PinDirection::Input, cell.w / 4)
                };
                Pin {
                    cell: c,
                    direction,
                    offset_x: ox,
                    offset_y: cell.h / 2,
                }
            })
            .collect();
        nets.push(Net {
            id,
            name: format!("n{id}"),
            pins,
        });
    }
    Design::new(spec.name.clone(), Rect::new(0, 0, spec.die_w, spec.die_h), cells, nets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::emit_canonical;

    #[test]
    fn seeded_and_byte_identical() {
        let s = SynthSpec::new(200, 220, 3, 7);
        let a = emit_canonical(&synth_design(&s).unwrap());
        let b = emit_canonical(&synth_design(&s).unwrap());
        assert_eq!(a, b);
        let c = emit_canonical(&synth_design(&SynthSpec::new(200, 220, 3, 8)).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn single_cell_self_net() {
        let d = synth_design(&SynthSpec::new(1, 1, 1, 0)).unwrap();
        assert_eq!(d.cells.len(), 1);
        assert_eq!(d.nets.len(), 1);
        assert_eq!(d.nets[0].pins.len(), 1);
    }

    #[test]
    fn degree_distribution() {
        let d = synth_design(&SynthSpec::new(2000, 2200, 3, 1)).unwrap();
        d.validate().unwrap();
        let degs: Vec<usize> = d.nets.iter().map(|n| n.pins.len()).collect();
        let mean = degs.iter().sum::<usize>() as f64 / degs.len() as f64;
        assert!((mean - 3.0).abs() < 0.15, "mean degree {mean}");
        assert!(degs.iter().all(|&k| (2..=16).contains(&k)));
        for c in &d.cells {
            assert!(c.x >= 0 && c.y >= 0 && c.x + c.w <= d.die.x1 && c.y + c.h <= d.die.y1);
        }
    }

    #[test]
    fn invalid_spec() {
        let mut s = SynthSpec::new(10, 10, 1, 0);
        s.n_cells = 0;
        assert!(synth_design(&s).is_err());
        let mut s = SynthSpec::new(10, 10, 1, 0);
        s.die_w = 10;
        assert!(synth_design(&s).is_err());
    }
}
