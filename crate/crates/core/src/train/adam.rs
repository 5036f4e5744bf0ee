//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor4>,
    v: Vec<Tensor4>,
}

impl AdamState {
    pub fn new(shapes: impl IntoIterator<Item = [usize; 4]>) -> Self {
        let m: Vec<Tensor4> = shapes.into_iter().map(Tensor4::zeros).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

/// One Adam update of `params` in place.
pub fn adam_step<'a>(
    params: impl IntoIterator<Item = &'a mut Tensor4>,
    grads: &[Tensor4],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let params: Vec<&mut Tensor4> = params.into_iter().collect();
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::invalid(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        p.ensure_same_shape(g, "adam_step")?;
        p.ensure_same_shape(m, "adam_step")?;
        let iter = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut());
        for (((pv, &gv), mv), vv) in iter {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
