//! A feed-forward stack of (optionally gated) convolution blocks with a
//! hand-written reverse pass. Generator and discriminator are both stacks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::conv::{col2im_add, conv_backward, conv_forward, im2col, upsample2, upsample2_backward, ConvShape};
use super::params::{Param, ParamSet};
use super::Real;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Activation {
    Elu,
    LeakyRelu,
    Identity,
    Sigmoid,
    Clamp,
}

const LEAK: f64 = 0.2;

impl Activation {
    #[inline]
    fn apply<T: Real>(self, v: T) -> T {
        match self {
            Activation::Elu => {
                if v > T::zero() {
                    v
                } else {
                    v.exp_m1()
                }
            }
            Activation::LeakyRelu => {
                if v > T::zero() {
                    v
                } else {
                    v * T::lit(LEAK)
                }
            }
            Activation::Identity => v,
            Activation::Sigmoid => sigmoid(v),
            Activation::Clamp => v.max(T::zero()).min(T::one()),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Elu => {
                if y > T::zero() {
                    T::one()
                } else {
                    y + T::one()
                }
            }
            Activation::LeakyRelu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::lit(LEAK)
                }
            }
            Activation::Identity => T::one(),
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Clamp => {
                if y > T::zero() && y < T::one() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    fn init_gain(self) -> f64 {
        match self {
            Activation::Elu | Activation::LeakyRelu => core::f64::consts::SQRT_2,
            _ => 1.0,
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    /// Convolution geometry after the optional upsampling.
    pub shape: ConvShape,
    pub upsample: bool,
    pub act: Activation,
    /// Parameter index of the feature weight; its bias follows it.
    feat: usize,
    /// Parameter index of the gate weight, for gated blocks.
    gate: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Stack {
    blocks: Vec<Block>,
    layout: Vec<(String, Vec<usize>)>,
    fingerprint: u64,
}

#[derive(Default)]
struct BlockTape<T> {
    cols: Vec<T>,
    act: Vec<T>,
    gate: Vec<T>,
}

/// Activations kept from a forward pass for the reverse pass.
pub(crate) struct Tape<T> {
    blocks: Vec<BlockTape<T>>,
}

impl Stack {
    pub fn new(fingerprint: u64) -> Self {
        Self {
            blocks: Vec::new(),
            layout: Vec::new(),
            fingerprint,
        }
    }

    pub fn push(&mut self, name: &str, shape: ConvShape, upsample: bool, act: Activation, gated: bool) {
        let wshape = vec![shape.cout, shape.cin, shape.k, shape.k];
        let branch = if gated { ".feat" } else { "" };
        let feat = self.layout.len();
        self.layout.push((alloc::format!("{name}{branch}.weight"), wshape.clone()));
        self.layout.push((alloc::format!("{name}{branch}.bias"), vec![shape.cout]));
        let gate = gated.then(|| {
            let idx = self.layout.len();
            self.layout.push((alloc::format!("{name}.gate.weight"), wshape));
            self.layout.push((alloc::format!("{name}.gate.bias"), vec![shape.cout]));
            idx
        });
        self.blocks.push(Block {
            shape,
            upsample,
            act,
            feat,
            gate,
        });
    }

    pub fn in_len(&self) -> usize {
        let first = &self.blocks[0];
        if first.upsample {
            first.shape.in_len() / 4
        } else {
            first.shape.in_len()
        }
    }

    pub fn zeros<T: Real>(&self) -> ParamSet<T> {
        ParamSet::new(
            self.fingerprint,
            self.layout
                .iter()
                .map(|(name, shape)| Param {
                    name: name.clone(),
                    shape: shape.clone(),
                    data: vec![T::zero(); shape.iter().product()],
                })
                .collect(),
        )
    }

    /// Fan-in scaled uniform weights, zero biases.
    pub fn init<T: Real>(&self, seed_value: u64) -> ParamSet<T> {
        let mut params = self.zeros::<T>();
        for block in &self.blocks {
            let fan_in = block.shape.patch_len() as f64;
            let mut fill = |index: usize, gain: f64| {
                let bound = gain * libm::sqrt(3.0 / fan_in);
                let mut rng = seed::rng(seed::derive(seed_value, &[index as u64]));
                for v in params.data_mut(index) {
                    *v = T::lit(rng.random_range(-bound..=bound));
                }
            };
            fill(block.feat, block.act.init_gain());
            if let Some(g) = block.gate {
                fill(g, 1.0);
            }
        }
        params
    }

    pub fn forward<T: Real>(&self, params: &ParamSet<T>, input: &[T], mut tape: Option<&mut Tape<T>>) -> Vec<T> {
        debug_assert_eq!(input.len(), self.in_len());
        if let Some(t) = tape.as_deref_mut() {
            t.blocks.clear();
        }
        let mut x: Vec<T> = input.to_vec();
        let mut cols = Vec::new();
        let mut feat = Vec::new();
        let mut gate = Vec::new();
        for block in &self.blocks {
            let s = &block.shape;
            if block.upsample {
                x = upsample2(&x, s.cin, s.h / 2, s.w / 2);
            }
            im2col(&x, s, &mut cols);
            conv_forward(params.data(block.feat), params.data(block.feat + 1), &cols, s, &mut feat);
            for v in feat.iter_mut() {
                *v = block.act.apply(*v);
            }
            let y = match block.gate {
                Some(g) => {
                    conv_forward(params.data(g), params.data(g + 1), &cols, s, &mut gate);
                    for v in gate.iter_mut() {
                        *v = sigmoid(*v);
                    }
                    feat.iter().zip(&gate).map(|(&a, &b)| a * b).collect()
                }
                None => feat.clone(),
            };
            if let Some(t) = tape.as_deref_mut() {
                t.blocks.push(BlockTape {
                    cols: core::mem::take(&mut cols),
                    act: core::mem::take(&mut feat),
                    gate: core::mem::take(&mut gate),
                });
            }
            x = y;
        }
        x
    }

    pub fn new_tape<T>(&self) -> Tape<T> {
        Tape {
            blocks: Vec::with_capacity(self.blocks.len()),
        }
    }

    /// Accumulates parameter gradients into `grads` given `dout = ∂L/∂output`.
    /// Returns `∂L/∂input` when asked for.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        tape: &Tape<T>,
        dout: Vec<T>,
        grads: &mut ParamSet<T>,
        want_input_grad: bool,
    ) -> Option<Vec<T>> {
        let mut dy = dout;
        let mut dcols = Vec::new();
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let s = &block.shape;
            let t = &tape.blocks[i];
            let need_dx = i > 0 || want_input_grad;
            let mut dfeat = dy.clone();
            match block.gate {
                Some(g) => {
                    let mut dgate = dy;
                    for j in 0..dfeat.len() {
                        let (a, sg) = (t.act[j], t.gate[j]);
                        dfeat[j] = dfeat[j] * sg * block.act.derivative_from_output(a);
                        dgate[j] = dgate[j] * a * sg * (T::one() - sg);
                    }
                    let (dw, db) = grads.pair_mut(block.feat, block.feat + 1);
                    conv_backward(params.data(block.feat), &t.cols, &dfeat, s, dw, db, need_dx.then_some((&mut dcols, false)));
                    let (dw, db) = grads.pair_mut(g, g + 1);
                    conv_backward(params.data(g), &t.cols, &dgate, s, dw, db, need_dx.then_some((&mut dcols, true)));
                }
                None => {
                    for (d, &a) in dfeat.iter_mut().zip(&t.act) {
                        *d = *d * block.act.derivative_from_output(a);
                    }
                    let (dw, db) = grads.pair_mut(block.feat, block.feat + 1);
                    conv_backward(params.data(block.feat), &t.cols, &dfeat, s, dw, db, need_dx.then_some((&mut dcols, false)));
                }
            }
            if !need_dx {
                return None;
            }
            let mut dx = vec![T::zero(); s.in_len()];
            col2im_add(&dcols, s, &mut dx);
            if block.upsample {
                dx = upsample2_backward(&dx, s.cin, s.h / 2, s.w / 2);
            }
            dy = dx;
        }
        Some(dy)
    }
}
