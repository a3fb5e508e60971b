mod common;

use std::sync::Arc;

use common::{numeric_grad, rel_err};
use hgn_congestion::autodiff::{Tape, Var};
use hgn_congestion::{Matrix, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Keeps entries at least 0.1 away from zero so finite differences never
/// straddle a kink.
fn away_from_zero(m: Matrix<f64>) -> Matrix<f64> {
    m.map(|v| if v.abs() < 0.1 { v.signum() * 0.1 + v } else { v })
}

type Build = dyn Fn(&mut Tape<f64>, Var) -> Result<Var>;

/// `loss = mean(f(x) ⊙ r)` for a fixed random `r`; compares the tape
/// gradient w.r.t. `x` against central differences.
fn check(name: &str, x: Matrix<f64>, f: &Build, seed: u64) {
    let run = |x: &Matrix<f64>, want_grad: bool| -> (f64, Option<Matrix<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let y = f(&mut tape, xv).unwrap();
        let (r, c) = tape.shape(y);
        let w = tape.leaf(Matrix::from_fn(r, c, |_, _| rng.gen_range(0.5..1.5)));
        let prod = tape.mul(y, w).unwrap();
        let loss = tape.mean(prod).unwrap();
        let value = tape.value(loss).get(0, 0);
        let grad = want_grad.then(|| tape.backward(loss).unwrap().get_or_zeros(xv, x.shape()));
        (value, grad)
    };
    let analytic = run(&x, true).1.unwrap();
    let numeric = numeric_grad(&x, H, |p| run(p, false).0);
    for i in 0..x.len() {
        let e = rel_err(analytic.as_slice()[i], numeric.as_slice()[i], 1e-8);
        assert!(
            e < TOL,
            "{name}[{i}]: analytic {} numeric {} rel {e:e}",
            analytic.as_slice()[i],
            numeric.as_slice()[i]
        );
    }
}

#[test]
fn primitive_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random(&mut rng, 4, 3);
    let b = random(&mut rng, 3, 5);
    let same = random(&mut rng, 4, 3);
    let bias = random(&mut rng, 1, 3);
    let col = random(&mut rng, 4, 1);
    let other = random(&mut rng, 4, 2);
    let idx: Arc<[usize]> = vec![3, 0, 0, 2, 3, 1].into();
    let seg: Arc<[usize]> = vec![2, 0, 2, 4].into();

    let (b2, same2, bias2, col2, other2) = (b.clone(), same.clone(), bias.clone(), col.clone(), other.clone());
    let a2 = a.clone();
    let cases: Vec<(&str, Matrix<f64>, Box<Build>)> = vec![
        (
            "matmul.lhs",
            a.clone(),
            Box::new(move |t, x| {
                let k = t.leaf(b2.clone());
                t.matmul(x, k)
            }),
        ),
        (
            "matmul.rhs",
            b.clone(),
            Box::new(move |t, x| {
                let k = t.leaf(a2.clone());
                t.matmul(k, x)
            }),
        ),
        (
            "add",
            a.clone(),
            Box::new({
                let s = same2.clone();
                move |t, x| {
                    let k = t.leaf(s.clone());
                    t.add(x, k)
                }
            }),
        ),
        (
            "sub.rhs",
            a.clone(),
            Box::new({
                let s = same2.clone();
                move |t, x| {
                    let k = t.leaf(s.clone());
                    t.sub(k, x)
                }
            }),
        ),
        (
            "mul",
            a.clone(),
            Box::new({
                let s = same2.clone();
                move |t, x| {
                    let k = t.leaf(s.clone());
                    t.mul(x, k)
                }
            }),
        ),
        ("mul.self", a.clone(), Box::new(|t, x| t.mul(x, x))),
        (
            "add_bias.x",
            a.clone(),
            Box::new({
                let s = bias2.clone();
                move |t, x| {
                    let k = t.leaf(s.clone());
                    t.add_bias(x, k)
                }
            }),
        ),
        (
            "add_bias.b",
            bias.clone(),
            Box::new({
                let s = same2.clone();
                move |t, x| {
                    let k = t.leaf(s.clone());
                    t.add_bias(k, x)
                }
            }),
        ),
        (
            "mul_col.x",
            a.clone(),
            Box::new({
                let s = col2.clone();
                move |t, x| {
                    let k = t.leaf(s.clone());
                    t.mul_col(x, k)
                }
            }),
        ),
        (
            "mul_col.s",
            col.clone(),
            Box::new({
                let s = same2.clone();
                move |t, x| {
                    let k = t.leaf(s.clone());
                    t.mul_col(k, x)
                }
            }),
        ),
        (
            "concat_cols",
            a.clone(),
            Box::new({
                let s = other2.clone();
                move |t, x| {
                    let k = t.leaf(s.clone());
                    t.concat_cols(&[k, x, k])
                }
            }),
        ),
        ("relu", away_from_zero(a.clone()), Box::new(|t, x| Ok(t.relu(x)))),
        ("sigmoid", a.clone(), Box::new(|t, x| Ok(t.sigmoid(x)))),
        ("square", a.clone(), Box::new(|t, x| Ok(t.square(x)))),
        ("sqrt", a.map(|v| v.abs() + 0.5), Box::new(|t, x| Ok(t.sqrt(x)))),
        ("scale", a.clone(), Box::new(|t, x| Ok(t.scale(x, -2.5)))),
        ("mean", a.clone(), Box::new(|t, x| t.mean(x))),
        ("row_mean", a.clone(), Box::new(|t, x| t.row_mean(x))),
        ("broadcast", Matrix::scalar(0.7), Box::new(|t, x| t.broadcast(x, 3, 2))),
        ("gather", a.clone(), Box::new(move |t, x| t.gather(x, &idx))),
        (
            "segment_mean",
            a.clone(),
            Box::new(move |t, x| t.segment_mean(x, &seg, 5)),
        ),
    ];
    for (i, (name, x, f)) in cases.into_iter().enumerate() {
        check(name, x, f.as_ref(), i as u64);
    }
}

#[test]
fn three_layer_mlp_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&mut rng, 10, 5);
    let target = random(&mut rng, 10, 1);
    let params = vec![
        random(&mut rng, 5, 8),
        random(&mut rng, 1, 8),
        random(&mut rng, 8, 8),
        random(&mut rng, 1, 8),
        random(&mut rng, 8, 1),
        random(&mut rng, 1, 1),
    ];
    let run = |ps: &[Matrix<f64>]| -> (f64, Vec<Matrix<f64>>) {
        let mut t = Tape::new();
        let xv = t.leaf(x.clone());
        let vs: Vec<Var> = ps.iter().map(|p| t.leaf(p.clone())).collect();
        let h = t.matmul(xv, vs[0]).unwrap();
        let h = t.add_bias(h, vs[1]).unwrap();
        let h = t.relu(h);
        let h = t.matmul(h, vs[2]).unwrap();
        let h = t.add_bias(h, vs[3]).unwrap();
        let h = t.sigmoid(h);
        let y = t.matmul(h, vs[4]).unwrap();
        let y = t.add_bias(y, vs[5]).unwrap();
        let tv = t.leaf(target.clone());
        let d = t.sub(y, tv).unwrap();
        let sq = t.square(d);
        let loss = t.mean(sq).unwrap();
        let g = t.backward(loss).unwrap();
        let grads = vs.iter().zip(ps).map(|(&v, p)| g.get_or_zeros(v, p.shape())).collect();
        (t.value(loss).get(0, 0), grads)
    };
    let (_, analytic) = run(&params);
    for k in 0..params.len() {
        let numeric = numeric_grad(&params[k], H, |p| {
            let mut ps = params.clone();
            ps[k] = p.clone();
            run(&ps).0
        });
        for i in 0..numeric.len() {
            let (a, n) = (analytic[k].as_slice()[i], numeric.as_slice()[i]);
            let e = rel_err(a, n, 1e-8);
            assert!(e < TOL, "param {k}[{i}]: {a} vs {n} ({e:e})");
        }
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&mut rng, 30, 17);
    let b = random(&mut rng, 17, 9);
    let seg: Arc<[usize]> = (0..30).map(|i| i % 7).collect();
    let run = || {
        let mut t = Tape::new();
        let (x, w) = (t.leaf(a.clone()), t.leaf(b.clone()));
        let y = t.matmul(x, w).unwrap();
        let y = t.segment_mean(y, &seg, 7).unwrap();
        t.value(y).clone()
    };
    assert_eq!(run().as_slice(), run().as_slice());
}
