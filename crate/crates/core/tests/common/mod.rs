//! Finite-difference gradient oracle shared by the gradient suite and the
//! acceptance runner.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqclass::cells::{CellKind, CellParams, GruParams, InitScheme, LstmParams, RnnActivation, RnnParams};
use seqclass::model::{Architecture, ClassifierModel, HeadKind, LossKind};
use seqclass::params::Parameters;

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Relative error, falling back to absolute error when both sides are
/// below the finite-difference noise floor.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs() * 1e3
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub fn compare(what: &str, analytic: &[f64], numeric: &[f64]) -> Result<f64, String> {
    if analytic.len() != numeric.len() {
        return Err(format!("{what}: {} analytic vs {} numeric entries", analytic.len(), numeric.len()));
    }
    let mut worst = 0.0f64;
    for (k, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(*a, *n);
        if !(e < TOLERANCE) {
            return Err(format!("{what}[{k}]: analytic {a:e} numeric {n:e} rel err {e:e}"));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

pub fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + EPS) - f(x - EPS)) / (2.0 * EPS)
}

pub fn randomize_trainable<P: Parameters>(p: &mut P, rng: &mut ChaCha8Rng) {
    for b in p.blocks_mut() {
        if b.trainable {
            b.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.8..0.8));
        }
    }
}

/// Numeric gradient of `loss` for every entry of block `block` in `p`.
pub fn numeric_block<P: Parameters + Clone>(p: &P, block: usize, loss: &dyn Fn(&P) -> f64) -> Vec<f64> {
    let n = p.blocks()[block].data.len();
    let mut q = p.clone();
    (0..n)
        .map(|k| {
            let orig = q.blocks()[block].data[k];
            let g = central_diff(
                |v| {
                    q.blocks_mut()[block].data[k] = v;
                    loss(&q)
                },
                orig,
            );
            q.blocks_mut()[block].data[k] = orig;
            g
        })
        .collect()
}

pub fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn cell_variants(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Vec<(&'static str, CellParams)> {
    let init = InitScheme::Centered;
    vec![
        ("rnn", CellParams::Rnn(RnnParams::new(input, hidden, RnnActivation::Tanh, false, init, rng))),
        ("rnn-sigmoid", CellParams::Rnn(RnnParams::new(input, hidden, RnnActivation::Sigmoid, false, init, rng))),
        ("rnn-literal", CellParams::Rnn(RnnParams::new(input, hidden, RnnActivation::Tanh, true, init, rng))),
        ("lstm-peephole", CellParams::Lstm(LstmParams::new(input, hidden, true, init, rng))),
        ("lstm-plain", CellParams::Lstm(LstmParams::new(input, hidden, false, init, rng))),
        ("gru", CellParams::Gru(GruParams::new(input, hidden, init, rng))),
    ]
}

/// Sequence-level check with loss `a · h_T`: every trainable block and
/// every input vector. Returns the worst relative error.
pub fn check_cell_sequence(name: &str, cell: &CellParams, xs: &[Vec<f64>], a: &[f64]) -> Result<f64, String> {
    let loss = |c: &CellParams, xs: &[Vec<f64>]| -> f64 {
        let (h, _) = c.run_sequence(xs).unwrap();
        h.iter().zip(a).map(|(h, a)| h * a).sum()
    };
    let (_, trace) = cell.run_sequence(xs).map_err(|e| e.to_string())?;
    let (grads, dxs) = cell.backward_sequence(&trace, a).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (bi, (pb, gb)) in cell.blocks().iter().zip(grads.blocks()).enumerate() {
        if !pb.trainable {
            continue;
        }
        let num = numeric_block(cell, bi, &|c: &CellParams| loss(c, xs));
        worst = worst.max(compare(&format!("{name}.{}", pb.name), gb.data, &num)?);
    }
    for t in 0..xs.len() {
        let mut ys = xs.to_vec();
        let num: Vec<f64> = (0..xs[t].len())
            .map(|k| {
                let orig = ys[t][k];
                let g = central_diff(
                    |v| {
                        ys[t][k] = v;
                        loss(cell, &ys)
                    },
                    orig,
                );
                ys[t][k] = orig;
                g
            })
            .collect();
        worst = worst.max(compare(&format!("{name}.dx[{t}]"), &dxs[t], &num)?);
    }
    Ok(worst)
}

/// Single-step check of the carried-state gradients: loss `a · h + b · c`
/// (the `c` term only for LSTM) against `h_prev` and `c_prev`.
pub fn check_cell_state(name: &str, cell: &CellParams, x: &[f64], h0: &[f64], c0: &[f64], a: &[f64], b: &[f64]) -> Result<f64, String> {
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let loss = |h0: &[f64], c0: &[f64]| -> f64 {
        match cell {
            CellParams::Rnn(p) => dot(&p.step(x, h0).unwrap().0, a),
            CellParams::Gru(p) => dot(&p.step(x, h0).unwrap().0, a),
            CellParams::Lstm(p) => {
                let (h, c, _) = p.step(x, h0, c0).unwrap();
                dot(&h, a) + dot(&c, b)
            }
        }
    };
    let (dh_prev, dc_prev) = match cell {
        CellParams::Rnn(p) => {
            let (_, t) = p.step(x, h0).unwrap();
            (p.step_backward(&t, a, &mut p.zeros_like()).1, None)
        }
        CellParams::Gru(p) => {
            let (_, t) = p.step(x, h0).unwrap();
            (p.step_backward(&t, a, &mut p.zeros_like()).1, None)
        }
        CellParams::Lstm(p) => {
            let (_, _, t) = p.step(x, h0, c0).unwrap();
            let (_, dh, dc) = p.step_backward(&t, a, b, &mut p.zeros_like());
            (dh, Some(dc))
        }
    };
    let numeric = |which: usize| -> Vec<f64> {
        let mut h = h0.to_vec();
        let mut c = c0.to_vec();
        (0..h0.len())
            .map(|k| {
                let orig = if which == 0 { h[k] } else { c[k] };
                let g = central_diff(
                    |v| {
                        if which == 0 {
                            h[k] = v
                        } else {
                            c[k] = v
                        }
                        loss(&h, &c)
                    },
                    orig,
                );
                if which == 0 {
                    h[k] = orig
                } else {
                    c[k] = orig
                }
                g
            })
            .collect()
    };
    let mut worst = compare(&format!("{name}.dh_prev"), &dh_prev, &numeric(0))?;
    if let Some(dc) = dc_prev {
        worst = worst.max(compare(&format!("{name}.dc_prev"), &dc, &numeric(1))?);
    }
    Ok(worst)
}

/// All cell variants on one randomized instance: input 2-4, hidden 3-5,
/// sequence length 1-6.
pub fn cell_gradient_seed(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.gen_range(2..=4);
    let hidden = rng.gen_range(3..=5);
    let len = rng.gen_range(1..=6);
    let mut worst = 0.0f64;
    for (name, mut cell) in cell_variants(input, hidden, &mut rng) {
        randomize_trainable(&mut cell, &mut rng);
        let xs: Vec<Vec<f64>> = (0..len).map(|_| random_vec(input, &mut rng)).collect();
        let a = random_vec(hidden, &mut rng);
        let b = random_vec(hidden, &mut rng);
        let h0 = random_vec(hidden, &mut rng);
        let c0 = random_vec(hidden, &mut rng);
        let tag = format!("seed {seed} {name} (in {input}, hid {hidden}, len {len})");
        worst = worst.max(check_cell_sequence(&tag, &cell, &xs, &a)?);
        worst = worst.max(check_cell_state(&tag, &cell, &xs[0], &h0, &c0, &a, &b)?);
    }
    Ok(worst)
}

/// End-to-end check of the mean loss over two documents for every cell and
/// both heads. The pad row is excluded from the numeric side: it is zero by
/// construction and masked out of the analytic gradient.
pub fn model_gradient_seed(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for cell in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
        for head in [HeadKind::Sigmoid, HeadKind::Softmax(3)] {
            let arch = Architecture {
                cell,
                vocab_size: 9,
                embedding_dim: rng.gen_range(2..=4),
                hidden_size: rng.gen_range(3..=5),
                dense_size: 4,
                head,
                loss: LossKind::default_for(head),
                peepholes: true,
                literal_rnn: false,
                rnn_activation: RnnActivation::Tanh,
                init: InitScheme::Centered,
                dropout: 0.0,
            };
            let mut model = ClassifierModel::new(&arch, &mut rng).map_err(|e| e.to_string())?;
            randomize_trainable(&mut model, &mut rng);
            model.embedding.zero_pad_row();
            // Keep dense pre-activations clear of the ReLU kink.
            model.dense_b.iter_mut().for_each(|v| *v = v.abs() + 0.3);
            let docs: Vec<(Vec<usize>, usize)> = (0..2)
                .map(|_| {
                    let len = rng.gen_range(1..=6);
                    let pads = rng.gen_range(0..len);
                    let idx = (0..len).map(|t| if t < pads { 0 } else { rng.gen_range(1..9) }).collect();
                    (idx, rng.gen_range(0..head.num_classes()))
                })
                .collect();
            let loss = |m: &ClassifierModel| -> f64 {
                docs.iter().map(|(d, y)| m.example_gradient(d, *y).unwrap().0).sum::<f64>() / docs.len() as f64
            };
            let mut grads = model.zero_grads();
            for (d, y) in &docs {
                grads.accumulate(&model.example_gradient(d, *y).map_err(|e| e.to_string())?.1);
            }
            grads.scale(1.0 / docs.len() as f64);
            let flat = grads.to_flat(&model);
            let dim = model.embedding.dim();
            for (bi, b) in model.blocks().iter().enumerate() {
                if !b.trainable {
                    continue;
                }
                let mut num = numeric_block(&model, bi, &loss);
                let tag = format!("seed {seed} {cell}/{head:?} {}", b.name);
                if bi == 0 {
                    if flat[0][..dim].iter().any(|&g| g != 0.0) {
                        return Err(format!("{tag}: pad row received gradient"));
                    }
                    num[..dim].iter_mut().for_each(|v| *v = 0.0);
                }
                worst = worst.max(compare(&tag, &flat[bi], &num)?);
            }
        }
    }
    Ok(worst)
}
