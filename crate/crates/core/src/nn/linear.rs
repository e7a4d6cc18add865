//! Fully connected layer over `(N, in)` activations.

use ndarray::{Array2, Axis, Ix2};
use rand_chacha::ChaCha8Rng;

use super::{Module, Param, ParamVisitor};
use crate::Real;

/// Affine map `y = x · Wᵀ + b` with `W: (out, in)`.
#[derive(Debug, Clone)]
pub struct Linear<F> {
    /// Weight matrix, `(out, in)`.
    pub w: Param<F>,
    /// Bias, `(out)`.
    pub b: Param<F>,
}

/// Forward context: the input activations.
#[derive(Debug)]
pub struct LinearCtx<F> {
    x: Array2<F>,
}

impl<F: Real> Linear<F> {
    /// New layer with fan-in-scaled uniform weights and zero bias.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: Param::uniform(&[out_dim, in_dim], in_dim, rng),
            b: Param::zeros(&[out_dim]),
        }
    }

    /// Applies the affine map to a batch.
    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, LinearCtx<F>) {
        let w = self
            .w
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("linear weight rank");
        let mut y = x.dot(&w.t());
        let b = self.b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        for mut row in y.rows_mut() {
            row += &b;
        }
        (y, LinearCtx { x: x.clone() })
    }

    /// Accumulates gradients and returns the input gradient.
    pub fn backward(&mut self, ctx: &LinearCtx<F>, dy: &Array2<F>) -> Array2<F> {
        let dw = dy.t().dot(&ctx.x);
        {
            let mut wg = self
                .w
                .grad
                .view_mut()
                .into_dimensionality::<Ix2>()
                .expect("linear grad rank");
            wg += &dw;
            let db = dy.sum_axis(Axis(0));
            let mut bg = self
                .b
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix1>()
                .unwrap();
            bg += &db;
        }
        let w = self
            .w
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("linear weight rank");
        dy.dot(&w)
    }
}

impl<F: Real> Module<F> for Linear<F> {
    fn visit_params(&mut self, prefix: &str, visitor: &mut dyn ParamVisitor<F>) {
        visitor.visit(&format!("{prefix}.w"), &mut self.w);
        visitor.visit(&format!("{prefix}.b"), &mut self.b);
    }
}
