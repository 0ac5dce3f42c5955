//! Joint energy, fidelity gradients and subgradient certificates.

use rustfft::num_complex::Complex64;

use crate::error::Result;
use crate::fourier::{KSpaceChannel, SampledFourier};
use crate::grid::{grad, grad_adjoint, tv, ComplexField, ScalarField, VectorField};
use crate::measurement::MeasurementSet;

use super::{JointParams, JointState};

/// Value and gradients of `½‖A(u e^{iφ}) − f‖²` with respect to `u` and `φ`.
#[derive(Clone, Debug)]
pub struct FidelityEval {
    pub value: f64,
    pub grad_u: ScalarField,
    pub grad_phi: ScalarField,
}

pub(crate) fn fidelity_eval_with(
    op: &SampledFourier,
    u: &ScalarField,
    phi: &ScalarField,
    f: &[Complex64],
) -> Result<FidelityEval> {
    let r = ComplexField::from_polar(u, phi)?;
    let res = op.residual(&r, f)?;
    let value = 0.5 * res.iter().map(|c| c.norm_sqr()).sum::<f64>();
    // ρ = A*(A r − f); ∂u = Re(e^{−iφ} ρ), ∂φ = Im(u e^{−iφ} ρ).
    let rho = op.adjoint_slice(&res);
    let shape = u.shape();
    let mut gu = Vec::with_capacity(shape.len());
    let mut gp = Vec::with_capacity(shape.len());
    for ((&ui, &pi), rho) in u.values().iter().zip(phi.values()).zip(&rho) {
        let rot = Complex64::from_polar(1.0, -pi) * rho;
        gu.push(rot.re);
        gp.push(ui * rot.im);
    }
    Ok(FidelityEval {
        value,
        grad_u: ScalarField::from_raw(shape, gu),
        grad_phi: ScalarField::from_raw(shape, gp),
    })
}

/// Fidelity value and both gradients for one channel.
pub fn fidelity_eval(u: &ScalarField, phi: &ScalarField, channel: &KSpaceChannel) -> Result<FidelityEval> {
    let op = SampledFourier::new(channel.mask().clone());
    fidelity_eval_with(&op, u, phi, channel.samples())
}

/// ∂/∂u of `½‖A(u e^{iφ}) − f‖²`.
pub fn fidelity_grad_u(u: &ScalarField, phi: &ScalarField, channel: &KSpaceChannel) -> Result<ScalarField> {
    fidelity_eval(u, phi, channel).map(|e| e.grad_u)
}

/// ∂/∂φ of `½‖A(u e^{iφ}) − f‖²`.
pub fn fidelity_grad_phi(u: &ScalarField, phi: &ScalarField, channel: &KSpaceChannel) -> Result<ScalarField> {
    fidelity_eval(u, phi, channel).map(|e| e.grad_phi)
}

/// `‖A(u e^{iφ}) − f‖` for one channel.
pub fn channel_residual_norm(u: &ScalarField, phi: &ScalarField, channel: &KSpaceChannel) -> Result<f64> {
    Ok((2.0 * fidelity_eval(u, phi, channel)?.value).sqrt())
}

/// `Σ_n v(c₁ − u)² + (1 − v)(c₂ − u)²`.
pub fn segmentation_term(u: &ScalarField, v: &ScalarField, c1: f64, c2: f64) -> f64 {
    u.values()
        .iter()
        .zip(v.values())
        .map(|(&u, &v)| v * (c1 - u).powi(2) + (1.0 - v) * (c2 - u).powi(2))
        .sum()
}

/// The joint energy summed over the four channels.
pub fn joint_energy(state: &JointState, data: &MeasurementSet, params: &JointParams) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..4 {
        let fid = fidelity_eval(&state.u[j], &state.phi[j], &data.channels()[j])?.value;
        total += fid + params.delta * segmentation_term(&state.u[j], &state.v[j], state.c1, state.c2);
    }
    Ok(total)
}

/// Total data residual `Σ_j ‖A(u_j e^{iφ_j}) − f_j‖`.
pub fn data_residual(state: &JointState, data: &MeasurementSet) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..4 {
        total += channel_residual_norm(&state.u[j], &state.phi[j], &data.channels()[j])?;
    }
    Ok(total)
}

/// Fenchel–Young gap `J(u) + J*(p) − ⟨p, u⟩` for `J = weight·TV` and
/// `p = ∇ᵀ y`. `J*(p)` is 0 when `|y| ≤ weight` pixelwise and +∞ otherwise.
pub fn tv_fenchel_gap(u: &ScalarField, dual: &VectorField, weight: f64) -> f64 {
    let feasible = dual
        .x()
        .iter()
        .zip(dual.y())
        .all(|(a, b)| a.hypot(*b) <= weight * (1.0 + 1e-12));
    if !feasible {
        return f64::INFINITY;
    }
    let p = grad_adjoint(dual);
    tv(u, weight) - p.dot(u)
}

/// Same gap evaluated as `Σ weight·|∇u| − ⟨y, ∇u⟩`, avoiding cancellation.
pub(crate) fn tv_fenchel_gap_pointwise(u: &ScalarField, dual: &VectorField, weight: f64) -> f64 {
    let g = grad(u);
    g.x()
        .iter()
        .zip(g.y())
        .zip(dual.x().iter().zip(dual.y()))
        .map(|((gx, gy), (yx, yy))| weight * gx.hypot(*gy) - (yx * gx + yy * gy))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{make_mask, MaskKind, MaskOptions};
    use crate::grid::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_channel(shape: Shape, rng: &mut ChaCha8Rng) -> KSpaceChannel {
        let mask = Arc::new(make_mask(shape, MaskKind::UniformRandom, 0.5, rng.random(), MaskOptions::default()).unwrap());
        let samples = (0..mask.count())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        KSpaceChannel::new(samples, mask, 0.0).unwrap()
    }

    fn random_field(shape: Shape, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
        ScalarField::from_fn(shape, |_, _| rng.random_range(lo..hi))
    }

    fn value(u: &ScalarField, phi: &ScalarField, ch: &KSpaceChannel) -> f64 {
        fidelity_eval(u, phi, ch).unwrap().value
    }

    #[test]
    fn gradients_match_central_differences() {
        let shape = Shape::new(6, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..5 {
            let ch = random_channel(shape, &mut rng);
            let u = random_field(shape, &mut rng, 0.1, 2.0);
            let phi = random_field(shape, &mut rng, -3.0, 3.0);
            let d = random_field(shape, &mut rng, -1.0, 1.0);
            let e = fidelity_eval(&u, &phi, &ch).unwrap();

            let up = u.zip_map(&d, |a, b| a + h * b).unwrap();
            let um = u.zip_map(&d, |a, b| a - h * b).unwrap();
            let fd = (value(&up, &phi, &ch) - value(&um, &phi, &ch)) / (2.0 * h);
            let an = e.grad_u.dot(&d);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "u: {fd} vs {an}");

            let pp = phi.zip_map(&d, |a, b| a + h * b).unwrap();
            let pm = phi.zip_map(&d, |a, b| a - h * b).unwrap();
            let fd = (value(&u, &pp, &ch) - value(&u, &pm, &ch)) / (2.0 * h);
            let an = e.grad_phi.dot(&d);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "phi: {fd} vs {an}");
        }
    }
}
