//! Execution backends for model graphs.
//!
//! A model is written once against [`Exec`] and run either eagerly
//! ([`Eager`], values only, intermediates freed as soon as they are dead)
//! or on a [`Tape`] for training.

use alloc::vec::Vec;

use crate::error::Result;
use crate::ops::{self, BatchStats};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::Mode;

pub trait Exec {
    type Value;

    fn input(&mut self, value: Tensor) -> Self::Value;
    fn parameter(&mut self, value: &Tensor, trainable: bool) -> Self::Value;
    fn tensor<'a>(&'a self, value: &'a Self::Value) -> &'a Tensor;

    fn conv2d(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value, dilation: usize) -> Result<Self::Value>;
    fn conv_transpose2d(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn maxpool2d(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn upsample2x(&mut self, x: &Self::Value) -> Result<Self::Value>;
    #[allow(clippy::too_many_arguments)]
    fn batchnorm2d(
        &mut self,
        x: &Self::Value,
        gamma: &Self::Value,
        beta: &Self::Value,
        running_mean: &Tensor,
        running_var: &Tensor,
        mode: Mode,
    ) -> Result<(Self::Value, Option<BatchStats>)>;
    fn relu(&mut self, x: &Self::Value) -> Self::Value;
    fn sigmoid(&mut self, x: &Self::Value) -> Self::Value;
    fn concat(&mut self, xs: &[&Self::Value]) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
}

/// Straight evaluation without recording.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

impl Exec for Eager {
    type Value = Tensor;

    fn input(&mut self, value: Tensor) -> Tensor {
        value
    }

    fn parameter(&mut self, value: &Tensor, _trainable: bool) -> Tensor {
        value.clone()
    }

    fn tensor<'a>(&'a self, value: &'a Tensor) -> &'a Tensor {
        value
    }

    fn conv2d(&mut self, x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize) -> Result<Tensor> {
        ops::conv2d(x, w, b, dilation)
    }

    fn conv_transpose2d(&mut self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
        ops::conv_transpose2d(x, w, b)
    }

    fn maxpool2d(&mut self, x: &Tensor) -> Result<Tensor> {
        Ok(ops::maxpool2d(x)?.0)
    }

    fn upsample2x(&mut self, x: &Tensor) -> Result<Tensor> {
        ops::upsample2x(x)
    }

    fn batchnorm2d(
        &mut self,
        x: &Tensor,
        gamma: &Tensor,
        beta: &Tensor,
        running_mean: &Tensor,
        running_var: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, Option<BatchStats>)> {
        match mode {
            Mode::Train => ops::batchnorm2d_train(x, gamma, beta).map(|(y, s)| (y, Some(s))),
            Mode::Eval => Ok((ops::batchnorm2d_eval(x, gamma, beta, running_mean, running_var)?, None)),
        }
    }

    fn relu(&mut self, x: &Tensor) -> Tensor {
        ops::relu(x)
    }

    fn sigmoid(&mut self, x: &Tensor) -> Tensor {
        ops::sigmoid(x)
    }

    fn concat(&mut self, xs: &[&Tensor]) -> Result<Tensor> {
        ops::concat_channels(xs)
    }

    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        ops::sub(a, b)
    }
}

impl Exec for Tape {
    type Value = Var;

    fn input(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn parameter(&mut self, value: &Tensor, trainable: bool) -> Var {
        self.leaf(value.clone(), trainable)
    }

    fn tensor<'a>(&'a self, value: &'a Var) -> &'a Tensor {
        self.value(*value)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: &Var, dilation: usize) -> Result<Var> {
        Tape::conv2d(self, *x, *w, *b, dilation)
    }

    fn conv_transpose2d(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        Tape::conv_transpose2d(self, *x, *w, *b)
    }

    fn maxpool2d(&mut self, x: &Var) -> Result<Var> {
        Tape::maxpool2d(self, *x)
    }

    fn upsample2x(&mut self, x: &Var) -> Result<Var> {
        Tape::upsample2x(self, *x)
    }

    fn batchnorm2d(
        &mut self,
        x: &Var,
        gamma: &Var,
        beta: &Var,
        running_mean: &Tensor,
        running_var: &Tensor,
        mode: Mode,
    ) -> Result<(Var, Option<BatchStats>)> {
        Tape::batchnorm2d(self, *x, *gamma, *beta, running_mean, running_var, mode)
    }

    fn relu(&mut self, x: &Var) -> Var {
        Tape::relu(self, *x)
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        Tape::sigmoid(self, *x)
    }

    fn concat(&mut self, xs: &[&Var]) -> Result<Var> {
        let vars: Vec<Var> = xs.iter().map(|&&v| v).collect();
        Tape::concat(self, &vars)
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::sub(self, *a, *b)
    }
}
