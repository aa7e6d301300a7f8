//! Central finite-difference checks of the tape's analytic gradients.
//!
//! The scalar probed is `mse(f(inputs), target)` for a fixed pseudo-random
//! target, so every output element contributes with a distinct weight.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::Mode;

/// Agreement between analytic and numeric gradients for one input.
///
/// `rel_error` is `max |a − n| / max(max |a|, max |n|, 1e-3)` over the
/// input's elements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputCheck {
    pub max_abs_error: f64,
    pub rel_error: f64,
}

fn probe_target(shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |i| 0.5 * libm::sinf(1.7 * i as f32 + 0.3)).expect("shape of a live tensor")
}

fn probe_loss(y: &Tensor, target: &Tensor) -> f64 {
    let sum: f64 = y
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    sum / y.numel() as f64
}

/// Compares tape gradients of `f` with central differences of step `step`
/// for every element of every input.
pub fn check<F>(inputs: &[Tensor], step: f32, f: F) -> Result<Vec<InputCheck>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let y = f(&mut tape, &vars)?;
    let target = probe_target(tape.value(y).shape());
    let t = tape.leaf(target.clone(), false);
    let loss = tape.mse_loss(y, t)?;
    let grads = tape.backward(loss)?;

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let y = f(&mut tape, &vars)?;
        Ok(probe_loss(tape.value(y), &target))
    };

    let mut work = inputs.to_vec();
    let mut reports = Vec::with_capacity(inputs.len());
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("leaf requires grad");
        let (mut max_abs, mut max_a, mut max_n) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..inputs[k].numel() {
            let orig = inputs[k].data()[j];
            work[k].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[k].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[k].data_mut()[j] = orig;
            // The perturbation actually applied, after f32 rounding.
            let h = (orig + step) as f64 - (orig - step) as f64;
            let numeric = (plus - minus) / h;
            let a = analytic.data()[j] as f64;
            max_abs = max_abs.max((a - numeric).abs());
            max_a = max_a.max(a.abs());
            max_n = max_n.max(numeric.abs());
        }
        reports.push(InputCheck { max_abs_error: max_abs, rel_error: max_abs / max_a.max(max_n).max(1e-3) });
    }
    Ok(reports)
}

/// Worst relative error of one operator over a number of random trials.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorReport {
    pub operator: String,
    pub trials: usize,
    pub worst_rel_error: f64,
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale)).expect("positive dims")
}

/// Values bounded away from zero, for inputs to ReLU.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05f32..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
    .expect("positive dims")
}

/// Distinct values spaced well beyond the finite-difference step, in
/// random order, so no 2×2 window has a near tie.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut values: Vec<f32> = (0..n).map(|i| (i as f32 - n as f32 / 2.0) * 0.05).collect();
    for i in (1..n).rev() {
        values.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape, values).expect("positive dims")
}

/// Random `(N, C, H, W)` with every dimension within `(2, 3, 6, 6)`.
fn random_dims(rng: &mut ChaCha8Rng, even: bool) -> [usize; 4] {
    let side = |rng: &mut ChaCha8Rng| if even { 2 * rng.random_range(1..=3) } else { rng.random_range(3..=6) };
    [rng.random_range(1..=2), rng.random_range(1..=3), side(rng), side(rng)]
}

type Case = (Vec<Tensor>, fn(&mut Tape, &[Var]) -> Result<Var>);

/// Runs `trials` random checks of every differentiable operator.
pub fn operator_suite(trials: usize, step: f32, rng: &mut ChaCha8Rng) -> Result<Vec<OperatorReport>> {
    let names = [
        "conv2d",
        "conv2d_dilated",
        "conv_transpose2d",
        "maxpool2d",
        "upsample2x",
        "batchnorm2d_train",
        "batchnorm2d_eval",
        "relu",
        "sigmoid",
        "concat",
        "add",
        "sub",
        "mul",
        "mse_loss",
    ];
    let mut reports = Vec::with_capacity(names.len());
    for name in names {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let (inputs, f) = case(name, rng);
            for c in check(&inputs, step, f)? {
                worst = worst.max(c.rel_error);
            }
        }
        reports.push(OperatorReport { operator: name.into(), trials, worst_rel_error: worst });
    }
    Ok(reports)
}

fn case(name: &str, rng: &mut ChaCha8Rng) -> Case {
    let [n, c, h, w] = random_dims(rng, false);
    let cout = rng.random_range(1..=3);
    match name {
        "conv2d" => (
            vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[cout, c, 3, 3], 0.5), random(rng, &[cout], 0.5)],
            |t, v| t.conv2d(v[0], v[1], v[2], 1),
        ),
        "conv2d_dilated" => (
            vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[cout, c, 3, 3], 0.5), random(rng, &[cout], 0.5)],
            |t, v| t.conv2d(v[0], v[1], v[2], 2),
        ),
        "conv_transpose2d" => (
            vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[c, cout, 3, 3], 0.5), random(rng, &[cout], 0.5)],
            |t, v| t.conv_transpose2d(v[0], v[1], v[2]),
        ),
        "maxpool2d" => {
            let [n, c, h, w] = random_dims(rng, true);
            (vec![distinct(rng, &[n, c, h, w])], |t, v| t.maxpool2d(v[0]))
        }
        "upsample2x" => (vec![random(rng, &[n, c, h, w], 1.0)], |t, v| t.upsample2x(v[0])),
        "batchnorm2d_train" => {
            let n = n.max(2);
            (
                vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[c], 1.0), random(rng, &[c], 0.5)],
                |t, v| {
                    let c = t.value(v[1]).numel();
                    let (mean, var) = (Tensor::zeros(&[c]), Tensor::full(&[c], 1.0));
                    Ok(t.batchnorm2d(v[0], v[1], v[2], &mean, &var, Mode::Train)?.0)
                },
            )
        }
        "batchnorm2d_eval" => (
            vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[c], 1.0), random(rng, &[c], 0.5)],
            |t, v| {
                let c = t.value(v[1]).numel();
                let mean = Tensor::from_fn(&[c], |i| 0.1 * i as f32 - 0.05).expect("c > 0");
                let var = Tensor::from_fn(&[c], |i| 0.5 + 0.25 * i as f32).expect("c > 0");
                Ok(t.batchnorm2d(v[0], v[1], v[2], &mean, &var, Mode::Eval)?.0)
            },
        ),
        "relu" => (vec![away_from_zero(rng, &[n, c, h, w])], |t, v| Ok(t.relu(v[0]))),
        "sigmoid" => (vec![random(rng, &[n, c, h, w], 3.0)], |t, v| Ok(t.sigmoid(v[0]))),
        "concat" => (
            vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[n, cout, h, w], 1.0)],
            |t, v| t.concat(&[v[0], v[1]]),
        ),
        "add" => (vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[n, c, h, w], 1.0)], |t, v| t.add(v[0], v[1])),
        "sub" => (vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[n, c, h, w], 1.0)], |t, v| t.sub(v[0], v[1])),
        "mul" => (vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[n, c, h, w], 1.0)], |t, v| t.mul(v[0], v[1])),
        // The probe applies a second MSE on top; the outer one sees a scalar.
        "mse_loss" => (vec![random(rng, &[n, c, h, w], 1.0), random(rng, &[n, c, h, w], 1.0)], |t, v| t.mse_loss(v[0], v[1])),
        other => unreachable!("no gradient case for {}", other),
    }
}

/// Largest violation of `<conv2d(x, W), y> = <x, conv_transpose2d(y, W)>`
/// relative to the magnitude of the inner products, over random trials.
pub fn adjointness_error(trials: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let [n, c, h, w] = random_dims(rng, false);
        let cout = rng.random_range(1..=3);
        let x = random(rng, &[n, c, h, w], 1.0);
        let y = random(rng, &[n, cout, h, w], 1.0);
        let weight = random(rng, &[cout, c, 3, 3], 1.0);
        let lhs = ops::conv2d(&x, &weight, &Tensor::zeros(&[cout]), 1)?.dot(&y)?;
        let rhs = x.dot(&ops::conv_transpose2d(&y, &weight, &Tensor::zeros(&[c]))?)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    Ok(worst)
}

/// Formats a suite result as `name: worst rel error over N trials`.
pub fn describe(report: &OperatorReport) -> String {
    format!("{}: {:.2e} over {} trials", report.operator, report.worst_rel_error, report.trials)
}
