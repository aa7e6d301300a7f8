//! Tape-based reverse-mode differentiation.
//!
//! Every operator appends one node holding its output value and whatever
//! the backward pass needs. Node ids increase monotonically, so the tape is
//! topologically ordered by construction and [`Tape::backward`] is a single
//! reverse sweep that visits each node once.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::ops::{self, BatchStats};
use crate::tensor::Tensor;
use crate::Mode;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var, dilation: usize },
    ConvTranspose2d { input: Var, weight: Var, bias: Var },
    MaxPool2d { input: Var, argmax: Vec<usize> },
    Upsample2x { input: Var },
    BatchNorm2d { input: Var, gamma: Var, beta: Var, stats: BatchStats, batch_statistics: bool },
    Relu { input: Var },
    Sigmoid { input: Var },
    Concat { inputs: Vec<Var>, channels: Vec<usize> },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Mse { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` for leaves recorded without `requires_grad` and for
    /// non-leaf nodes.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, dilation: usize) -> Result<Var> {
        let out = ops::conv2d(self.value(input), self.value(weight), self.value(bias), dilation)?;
        Ok(self.push(out, Op::Conv2d { input, weight, bias, dilation }, &[input, weight, bias]))
    }

    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = ops::conv_transpose2d(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(out, Op::ConvTranspose2d { input, weight, bias }, &[input, weight, bias]))
    }

    pub fn maxpool2d(&mut self, input: Var) -> Result<Var> {
        let (out, argmax) = ops::maxpool2d(self.value(input))?;
        Ok(self.push(out, Op::MaxPool2d { input, argmax }, &[input]))
    }

    pub fn upsample2x(&mut self, input: Var) -> Result<Var> {
        let out = ops::upsample2x(self.value(input))?;
        Ok(self.push(out, Op::Upsample2x { input }, &[input]))
    }

    /// Batch normalization. In train mode the batch statistics are used and
    /// returned so the caller can fold them into its running averages; in
    /// eval mode `running_mean`/`running_var` are used as constants.
    pub fn batchnorm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor,
        running_var: &Tensor,
        mode: Mode,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (out, stats, batch_statistics) = match mode {
            Mode::Train => {
                let (out, stats) = ops::batchnorm2d_train(self.value(input), self.value(gamma), self.value(beta))?;
                (out, stats, true)
            }
            Mode::Eval => {
                let out = ops::batchnorm2d_eval(
                    self.value(input),
                    self.value(gamma),
                    self.value(beta),
                    running_mean,
                    running_var,
                )?;
                let stats = BatchStats { mean: running_mean.data().to_vec(), var: running_var.data().to_vec() };
                (out, stats, false)
            }
        };
        let returned = batch_statistics.then(|| stats.clone());
        let var = self.push(
            out,
            Op::BatchNorm2d { input, gamma, beta, stats, batch_statistics },
            &[input, gamma, beta],
        );
        Ok((var, returned))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = ops::relu(self.value(input));
        self.push(out, Op::Relu { input }, &[input])
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let out = ops::sigmoid(self.value(input));
        self.push(out, Op::Sigmoid { input }, &[input])
    }

    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat_channels(&values)?;
        let channels = values.iter().map(|t| t.shape()[1]).collect();
        Ok(self.push(out, Op::Concat { inputs: inputs.to_vec(), channels }, inputs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::sub(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Sub { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul { a, b }, &[a, b]))
    }

    /// Mean squared error as a one-element tensor.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let loss = ops::mse(self.value(pred), self.value(target))?;
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target }, &[pred, target]))
    }

    /// Reverse sweep from a scalar `loss`. Every leaf recorded with
    /// `requires_grad` gets a gradient, zero if the loss does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(shape_err!("backward needs a scalar loss, got shape {:?}", root.value.shape()));
        }
        let mut pending: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        pending[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = pending[id].take() else { continue };
            for (var, grad) in self.node_backward(node, &g)? {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut pending[var.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(grad.data()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(grad),
                }
            }
        }

        let grads = self
            .nodes
            .iter()
            .zip(pending)
            .map(|(node, g)| match node.op {
                Op::Leaf if node.requires_grad => Some(g.unwrap_or_else(|| Tensor::zeros(node.value.shape()))),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    /// Vector-Jacobian products of one node with respect to its inputs.
    fn node_backward(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let v = |var: Var| self.value(var);
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            &Op::Conv2d { input, weight, bias, dilation } => {
                let grads = ops::conv2d_backward(v(input), v(weight), dilation, g)?;
                vec![(input, grads.input), (weight, grads.weight), (bias, grads.bias)]
            }
            &Op::ConvTranspose2d { input, weight, bias } => {
                let grads = ops::conv_transpose2d_backward(v(input), v(weight), g)?;
                vec![(input, grads.input), (weight, grads.weight), (bias, grads.bias)]
            }
            Op::MaxPool2d { input, argmax } => {
                vec![(*input, ops::maxpool2d_backward(v(*input).shape(), argmax, g)?)]
            }
            &Op::Upsample2x { input } => vec![(input, ops::upsample2x_backward(g)?)],
            Op::BatchNorm2d { input, gamma, beta, stats, batch_statistics } => {
                let grads = ops::batchnorm2d_backward(v(*input), v(*gamma), stats, *batch_statistics, g)?;
                vec![(*input, grads.input), (*gamma, grads.gamma), (*beta, grads.beta)]
            }
            &Op::Relu { input } => vec![(input, ops::relu_backward(v(input), g)?)],
            &Op::Sigmoid { input } => vec![(input, ops::sigmoid_backward(&node.value, g)?)],
            Op::Concat { inputs, channels } => {
                inputs.iter().copied().zip(ops::split_channels(g, channels)?).collect()
            }
            &Op::Add { a, b } => vec![(a, g.clone()), (b, g.clone())],
            &Op::Sub { a, b } => vec![(a, g.clone()), (b, g.map(|x| -x))],
            &Op::Mul { a, b } => vec![(a, ops::mul(g, v(b))?), (b, ops::mul(g, v(a))?)],
            &Op::Mse { pred, target } => {
                let scale = g.data()[0];
                let gp = ops::mse_backward(v(pred), v(target), scale)?;
                let gt = gp.map(|x| -x);
                vec![(pred, gp), (target, gt)]
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_chain_rule() {
        // L = (w·x − y)² with w = 1, x = 2, y = 0 → dL/dw = 2·(wx − y)·x = 8.
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(1.0), true);
        let x = tape.leaf(Tensor::scalar(2.0), false);
        let y = tape.leaf(Tensor::scalar(0.0), false);
        let wx = tape.mul(w, x).unwrap();
        let loss = tape.mse_loss(wx, y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[8.0]);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn disconnected_parameter_gets_zero() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::full(&[3], 2.0), true);
        let a = tape.leaf(Tensor::full(&[3], 1.0), true);
        let t = tape.leaf(Tensor::zeros(&[3]), false);
        let loss = tape.mse_loss(a, t).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn fan_out_accumulates() {
        // L = mse(a + a, 0) over one element = 4a² → dL/da = 8a.
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(3.0), true);
        let z = tape.leaf(Tensor::scalar(0.0), false);
        let s = tape.add(a, a).unwrap();
        let loss = tape.mse_loss(s, z).unwrap();
        assert_eq!(tape.backward(loss).unwrap().get(a).unwrap().data(), &[24.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2]), true);
        let r = tape.relu(a);
        assert!(tape.backward(r).is_err());
    }
}
