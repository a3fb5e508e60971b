//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any fails.
//!
//! Run alone with `cargo test -p hgn-congestion --test acceptance`; pass
//! criterion numbers as arguments (`-- 2 4`) to run a subset.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    brute_kendall, brute_pearson, brute_spearman, check_graph_invariants, labelled_sample, naive_rudy, rel_err,
};
use hgn_congestion::features::featurize;
use hgn_congestion::graph::{build_graph, make_grid_spec};
use hgn_congestion::labels::{downsample_area_avg, normalize_labels, rudy_labels, rudy_map, split_c_max};
use hgn_congestion::metrics::{kendall, mae, pearson, rmse, spearman};
use hgn_congestion::model::{init_params, predict, write_checkpoint, Ablations, GraphIndex, ModelConfig, ModelParams};
use hgn_congestion::netlist::parse_def;
use hgn_congestion::synth::{synth_design, SynthSpec};
use hgn_congestion::train::{evaluate, fit, log_to_json_lines, loss_and_grads, Sample, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Central differences at `h` against the tape gradient. An entry whose
/// central difference disagrees is accepted only when the two one-sided
/// differences disagree with each other (a ReLU kink lies within `h`) and one
/// of them matches the analytic value.
fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let (h, tol, floor) = (1e-5, 1e-4, 1e-6);
    let d = synth_design(&SynthSpec::new(50, 40, 3, 11)).map_err(|e| e.to_string())?;
    let mc = ModelConfig {
        hidden: 16,
        layers: 2,
        levels: 2,
        ..ModelConfig::default()
    };
    let tc = TrainConfig::default();
    let s = labelled_sample(&d, 4, 4, 2, mc.k_geom);
    let params = init_params::<f64>(&mc, 3).map_err(|e| e.to_string())?;
    let (_, grads) = loss_and_grads(&s, &params, &mc, &tc).map_err(|e| e.to_string())?;
    let loss = |p: &ModelParams<f64>| {
        let (parts, _) = loss_and_grads(&s, p, &mc, &tc).unwrap();
        parts[0] + tc.lambda_grid * parts[1] + tc.lambda_var * parts[2]
    };
    let base = loss(&params);
    let mut p = params.clone();
    let (mut worst, mut kinks) = (0f64, Vec::new());
    for (name, g) in &grads {
        for i in 0..g.len() {
            let orig = p.tensors[name].as_slice()[i];
            p.get_mut(name).unwrap().as_mut_slice()[i] = orig + h;
            let up = loss(&p);
            p.get_mut(name).unwrap().as_mut_slice()[i] = orig - h;
            let down = loss(&p);
            p.get_mut(name).unwrap().as_mut_slice()[i] = orig;
            let a = g.as_slice()[i];
            let e = rel_err(a, (up - down) / (2.0 * h), floor);
            if e < tol {
                worst = worst.max(e);
                continue;
            }
            let (fwd, bwd) = ((up - base) / h, (base - down) / h);
            let kink = rel_err(fwd, bwd, floor) >= tol;
            let one_sided = rel_err(a, fwd, floor).min(rel_err(a, bwd, floor));
            ensure(kink && one_sided < tol, || {
                format!("{name}[{i}] relative error {e:.3e}")
            })?;
            worst = worst.max(one_sided);
            kinks.push(format!("{name}[{i}]"));
        }
    }
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    let kink_note = if kinks.is_empty() {
        String::new()
    } else {
        format!(
            ", {} entries at a ReLU kink matched one-sided ({})",
            kinks.len(),
            kinks.join(" ")
        )
    };
    Ok(format!(
        "{} scalars, worst relative error {worst:.2e}{kink_note}, {elapsed:.1?}",
        params.num_scalars()
    ))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    };
    let mut ties = 0;
    for case in 0..100 {
        let n = rng.gen_range(2..=500);
        let (a, b): (Vec<f64>, Vec<f64>) = if case % 2 == 0 {
            let k = rng.gen_range(2..12) as f64;
            (0..n)
                .map(|_| ((rng.gen::<f64>() * k).floor(), (rng.gen::<f64>() * k).floor()))
                .unzip()
        } else {
            (0..n)
                .map(|_| (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
                .unzip()
        };
        let fail = |what: &str| format!("case {case} (n={n}): {what}");
        let brute_mae = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
        let brute_rmse = (a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64).sqrt();
        ensure((mae(&a, &b).unwrap() - brute_mae).abs() < 1e-12, || fail("mae"))?;
        ensure((rmse(&a, &b).unwrap() - brute_rmse).abs() < 1e-12, || fail("rmse"))?;
        ensure(close(pearson(&a, &b).unwrap(), brute_pearson(&a, &b)), || {
            fail("pearson")
        })?;
        ensure(close(spearman(&a, &b).unwrap(), brute_spearman(&a, &b)), || {
            fail("spearman")
        })?;
        let k = kendall(&a, &b).unwrap();
        let (tau_b, tau_a) = brute_kendall(&a, &b);
        ensure(close(k.tau_b, tau_b), || fail("kendall tau-b"))?;
        match k.tau_a {
            Some(t) => ensure((t - tau_a).abs() < 1e-12, || fail("kendall tau-a"))?,
            None => ties += 1,
        }
    }
    Ok(format!("100 vector pairs, {ties} with ties"))
}

fn graph_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..50u64 {
        let cells = rng.gen_range(1..400);
        let nets = rng.gen_range(0..400);
        let clusters = rng.gen_range(1..5);
        let d = synth_design(&SynthSpec::new(cells, nets, clusters, i)).map_err(|e| e.to_string())?;
        let (m, n) = (rng.gen_range(1..24), rng.gen_range(1..24));
        let levels = (1..=3).rev().find(|&k| make_grid_spec(&d, m, n, k).is_ok()).unwrap();
        let k = rng.gen_range(1..10);
        let spec = make_grid_spec(&d, m, n, levels).map_err(|e| e.to_string())?;
        let g = build_graph(&d, &spec, k);
        check_graph_invariants(&d, &g, k).map_err(|e| format!("design {i} ({m}x{n}, K={levels}): {e}"))?;
    }
    Ok("50 designs".into())
}

fn rudy_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0f64;
    for i in 0..20u64 {
        let d = synth_design(&SynthSpec::new(rng.gen_range(20..300), rng.gen_range(10..300), 3, i))
            .map_err(|e| e.to_string())?;
        let spec = make_grid_spec(&d, rng.gen_range(1..33), rng.gen_range(1..33), 1).map_err(|e| e.to_string())?;
        let fast = rudy_map(&d, &spec);
        let slow = naive_rudy(&d, &spec);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-9, || format!("max |fast - naive| = {worst:e}"))?;
    let mut worst_mean = 0f64;
    for _ in 0..20 {
        let (tc, tr) = (rng.gen_range(1..9), rng.gen_range(1..9));
        let (cols, rows) = (
            tc * rng.gen_range(1..5) + rng.gen_range(0..3),
            tr * rng.gen_range(1..5) + rng.gen_range(0..3),
        );
        let map: Vec<f64> = (0..cols * rows).map(|_| rng.gen_range(0.0..5.0)).collect();
        let out = downsample_area_avg(&map, cols, rows, tc, tr).map_err(|e| e.to_string())?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        worst_mean = worst_mean.max((mean(&map) - mean(&out)).abs());
    }
    ensure(worst_mean < 1e-12, || {
        format!("downsampling moved the mean by {worst_mean:e}")
    })?;
    Ok(format!(
        "max RUDY deviation {worst:.1e}, max mean drift {worst_mean:.1e}"
    ))
}

fn overfit() -> Outcome {
    let t = Instant::now();
    let d = synth_design(&SynthSpec::new(2000, 2200, 3, 1)).map_err(|e| e.to_string())?;
    let mc = ModelConfig::default();
    let s = labelled_sample(&d, 32, 32, mc.levels, mc.k_geom);
    let tc = TrainConfig {
        max_epochs: 300,
        ..TrainConfig::default()
    };
    let one = std::slice::from_ref(&s);
    let out = fit::<f64>(one, one, &mc, &tc).map_err(|e| e.to_string())?;
    let r = evaluate(&s, &out.best, &mc).map_err(|e| e.to_string())?;
    let (cell, grid) = (r.cell.spearman.unwrap_or(0.0), r.grid.spearman.unwrap_or(0.0));
    let summary = format!(
        "cell Spearman {cell:.4}, grid Spearman {grid:.4} at epoch {} of {}, {:.1?}",
        out.best_epoch,
        out.log.len(),
        t.elapsed()
    );
    ensure(cell >= 0.90 && grid >= 0.85, || summary.clone())?;
    Ok(summary)
}

fn ablation_direction() -> Outcome {
    let designs: Vec<_> = (0..5u64)
        .map(|i| {
            let mut spec = SynthSpec::new(400, 440, 3, i);
            spec.name = format!("d{i}");
            synth_design(&spec)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let specs: Vec<_> = designs.iter().map(|d| make_grid_spec(d, 16, 16, 2).unwrap()).collect();
    let raws: Vec<_> = designs.iter().zip(&specs).map(|(d, s)| rudy_labels(d, s)).collect();
    let c_max = split_c_max(&raws);
    let samples: Vec<Sample> = designs
        .iter()
        .zip(&specs)
        .zip(&raws)
        .map(|((d, s), r)| Sample::new(d, s, 8, normalize_labels(r, c_max)?))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (train, val) = samples.split_at(4);
    let mut medians = Vec::new();
    for hierarchical_grid in [true, false] {
        let mc = ModelConfig {
            hidden: 32,
            ablations: Ablations {
                hierarchical_grid,
                ..Ablations::default()
            },
            ..ModelConfig::default()
        };
        let mut scores = Vec::new();
        for seed in 0..5 {
            let tc = TrainConfig {
                lr: 2e-3,
                max_epochs: 100,
                seed,
                ..TrainConfig::default()
            };
            let out = fit::<f64>(train, val, &mc, &tc).map_err(|e| e.to_string())?;
            let r = evaluate(&val[0], &out.best, &mc).map_err(|e| e.to_string())?;
            scores.push(r.grid.spearman.unwrap_or(0.0));
        }
        let text: Vec<String> = scores.iter().map(|v| format!("{v:.4}")).collect();
        scores.sort_by(f64::total_cmp);
        medians.push((scores[2], text.join(" ")));
    }
    let summary = format!(
        "median grid Spearman full {:.4} [{}] vs hierarchy off {:.4} [{}]",
        medians[0].0, medians[0].1, medians[1].0, medians[1].1
    );
    ensure(medians[1].0 < medians[0].0, || summary.clone())?;
    Ok(summary)
}

fn determinism() -> Outcome {
    let samples: Vec<Sample> = (0..3)
        .map(|i| {
            let mut spec = SynthSpec::new(150, 160, 2, 40 + i);
            spec.name = format!("d{i}");
            labelled_sample(&synth_design(&spec).unwrap(), 8, 8, 2, 6)
        })
        .collect();
    let mc = ModelConfig {
        hidden: 16,
        layers: 2,
        k_geom: 6,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        max_epochs: 12,
        patience: 12,
        seed: 5,
        ..TrainConfig::default()
    };
    let run = || -> Result<(String, Vec<u8>), String> {
        let out = fit::<f64>(&samples[..2], &samples[2..], &mc, &tc).map_err(|e| e.to_string())?;
        let log = log_to_json_lines(&out.log).map_err(|e| e.to_string())?;
        let ckpt = write_checkpoint(&out.best, &mc).map_err(|e| e.to_string())?;
        Ok((log, ckpt))
    };
    let (a, b) = (run()?, run()?);
    ensure(a.0 == b.0, || "training logs differ".into())?;
    ensure(a.1 == b.1, || "checkpoints differ".into())?;
    Ok(format!(
        "{} log bytes and {} checkpoint bytes identical",
        a.0.len(),
        a.1.len()
    ))
}

const SINGLE_CELL: &str = "VERSION 5.8 ;
DESIGN single ;
DIEAREA ( 0 0 ) ( 5000 5000 ) ;
COMPONENTS 1 ;
- u0 INV_X1 + PLACED ( 2000 2000 ) N + PROPERTY width 400 + PROPERTY height 1400 ;
END COMPONENTS
END DESIGN
";

const NO_NETS: &str = "VERSION 5.8 ;
DESIGN nonets ;
DIEAREA ( 0 0 ) ( 8000 8000 ) ;
COMPONENTS 4 ;
- a INV_X1 + PLACED ( 100 100 ) N + PROPERTY width 400 + PROPERTY height 1400 ;
- b INV_X1 + PLACED ( 6000 100 ) N + PROPERTY width 400 + PROPERTY height 1400 ;
- c BUF_X1 + PLACED ( 100 6000 ) N + PROPERTY width 600 + PROPERTY height 1400 ;
- d BUF_X1 + PLACED ( 6000 6000 ) N + PROPERTY width 600 + PROPERTY height 1400 ;
END COMPONENTS
NETS 0 ;
END NETS
END DESIGN
";

const SMALL_NETLIST: &str = "VERSION 5.8 ;
DESIGN tiny ;
DIEAREA ( 0 0 ) ( 6000 6000 ) ;
COMPONENTS 3 ;
- a INV_X1 + PLACED ( 500 500 ) N + PROPERTY width 400 + PROPERTY height 1400 ;
- b NAND2_X1 + PLACED ( 3000 2500 ) N + PROPERTY width 600 + PROPERTY height 1400 ;
- c DFF_X1 + PLACED ( 4000 4200 ) N + PROPERTY width 1800 + PROPERTY height 1400 ;
END COMPONENTS
NETS 2 ;
- n0 ( a Y ) ( b A ) ;
- n1 ( b ZN ) ( c D ) ( a A ) ;
END NETS
END DESIGN
";

fn degenerate_designs() -> Outcome {
    // (design text, m, n, K)
    let cases = [
        ("single cell, 4x4", SINGLE_CELL, 4, 4, 2),
        ("single cell, 1x1", SINGLE_CELL, 1, 1, 1),
        ("zero nets, 8x8", NO_NETS, 8, 8, 2),
        ("zero nets, 1x1", NO_NETS, 1, 1, 1),
        ("1x1 grid", SMALL_NETLIST, 1, 1, 1),
    ];
    for (what, text, m, n, levels) in cases {
        let fail = |e: String| format!("{what}: {e}");
        let d = parse_def(text).map_err(|e| fail(e.to_string()))?;
        let spec = make_grid_spec(&d, m, n, levels).map_err(|e| fail(e.to_string()))?;
        let g = build_graph(&d, &spec, 8);
        let fs = featurize(&d, &g);
        ensure(fs.all_finite(), || fail("non-finite features".into()))?;
        let raw = rudy_labels(&d, &spec);
        let y = normalize_labels(&raw, split_c_max([&raw])).map_err(|e| fail(e.to_string()))?;
        let s = Sample::new(&d, &spec, 8, y).map_err(|e| fail(e.to_string()))?;
        let mc = ModelConfig {
            hidden: 16,
            levels,
            ..ModelConfig::default()
        };
        let p = init_params::<f64>(&mc, 0).map_err(|e| fail(e.to_string()))?;
        let out = predict(&GraphIndex::new(&g), &fs, &p, &mc).map_err(|e| fail(e.to_string()))?;
        ensure(out.cell.iter().chain(&out.grid).all(|v| v.is_finite()), || {
            fail("non-finite prediction".into())
        })?;
        let r = evaluate(&s, &p, &mc).map_err(|e| fail(e.to_string()))?;
        for l in [r.cell, r.grid] {
            ensure(l.mae.is_finite() && l.rmse.is_finite(), || {
                fail("non-finite error metric".into())
            })?;
        }
        let (parts, grads) = loss_and_grads(&s, &p, &mc, &TrainConfig::default()).map_err(|e| fail(e.to_string()))?;
        ensure(parts.iter().all(|v| v.is_finite()), || fail("non-finite loss".into()))?;
        ensure(
            grads.values().all(|g| g.as_slice().iter().all(|v| v.is_finite())),
            || fail("non-finite gradient".into()),
        )?;
    }
    Ok(format!("{} degenerate designs", cases.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("gradient fidelity", gradient_fidelity),
        ("metric oracle equivalence", metric_oracles),
        ("graph invariants", graph_invariants),
        ("RUDY oracle equivalence", rudy_oracle),
        ("overfit sanity", overfit),
        ("ablation direction", ablation_direction),
        ("determinism", determinism),
        ("degenerate robustness", degenerate_designs),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        match check() {
            Ok(detail) => println!("criterion {id} {name}: PASS ({detail}) [{:.1?}]", t.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} {name}: FAIL ({detail}) [{:.1?}]", t.elapsed());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
