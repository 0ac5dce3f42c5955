//! Baseline pipeline: per-channel complex TV reconstruction, then phase
//! extraction and the four-point velocity formula.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{KSpaceChannel, SampledFourier};
use crate::grid::{grad_adjoint_into, grad_into, ComplexField, ScalarField, Shape};
use crate::measurement::MeasurementSet;
use crate::pdhg::{pdhg_solve, Diagnostics, PdhgConfig, SaddleProblem};

/// Pixels with |r| below this get phase 0.
pub const MAGNITUDE_FLOOR: f64 = 1e-8;

/// Zero-filling solution `A* f`.
pub fn zero_fill(channel: &KSpaceChannel) -> ComplexField {
    SampledFourier::new(channel.mask().clone())
        .adjoint(channel.samples())
        .expect("channel length matches its mask")
}

/// `min_r ½‖A r − f‖² + α TV(Re r, Im r)` with joint isotropic TV over both planes.
pub struct ComplexTvProblem<'a> {
    op: SampledFourier,
    /// `Sᵀ f` laid out on the centered k-space grid.
    data_kspace: Vec<Complex64>,
    samples: &'a [Complex64],
    alpha: f64,
}

impl<'a> ComplexTvProblem<'a> {
    pub fn new(channel: &'a KSpaceChannel, alpha: f64) -> Self {
        let op = SampledFourier::new(channel.mask().clone());
        let mut data_kspace = vec![Complex64::new(0.0, 0.0); op.shape().len()];
        for (&i, &v) in channel.mask().indices().iter().zip(channel.samples()) {
            data_kspace[i] = v;
        }
        Self {
            op,
            data_kspace,
            samples: channel.samples(),
            alpha,
        }
    }

    fn shape(&self) -> Shape {
        self.op.shape()
    }
}

pub(crate) fn pack_complex(r: &[Complex64]) -> Vec<f64> {
    r.iter().map(|c| c.re).chain(r.iter().map(|c| c.im)).collect()
}

pub(crate) fn unpack_complex(x: &[f64]) -> Vec<Complex64> {
    let n = x.len() / 2;
    (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect()
}

impl SaddleProblem for ComplexTvProblem<'_> {
    fn primal_len(&self) -> usize {
        2 * self.shape().len()
    }

    fn dual_len(&self) -> usize {
        4 * self.shape().len()
    }

    fn apply_k(&self, x: &[f64], out: &mut [f64]) {
        let n = self.shape().len();
        let (re, im) = x.split_at(n);
        let (o_re, o_im) = out.split_at_mut(2 * n);
        let (gx, gy) = o_re.split_at_mut(n);
        grad_into(self.shape(), re, gx, gy);
        let (gx, gy) = o_im.split_at_mut(n);
        grad_into(self.shape(), im, gx, gy);
    }

    fn apply_k_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let n = self.shape().len();
        let (o_re, o_im) = out.split_at_mut(n);
        grad_adjoint_into(self.shape(), &y[..n], &y[n..2 * n], o_re);
        grad_adjoint_into(self.shape(), &y[2 * n..3 * n], &y[3 * n..], o_im);
    }

    fn prox_f_conjugate(&self, y: &mut [f64], _sigma: f64) {
        let n = self.shape().len();
        let (a, rest) = y.split_at_mut(n);
        let (b, rest) = rest.split_at_mut(n);
        let (c, d) = rest.split_at_mut(n);
        for i in 0..n {
            let norm = (a[i] * a[i] + b[i] * b[i] + c[i] * c[i] + d[i] * d[i]).sqrt();
            if norm > self.alpha {
                let s = self.alpha / norm;
                a[i] *= s;
                b[i] *= s;
                c[i] *= s;
                d[i] *= s;
            }
        }
    }

    fn prox_g(&self, x: &mut [f64], tau: f64) {
        // (I + τ A*A)⁻¹ (x + τ A* f), diagonal in k-space.
        let mut k = unpack_complex(x);
        let fft = self.op.fft();
        fft.forward_in_place(&mut k);
        for &i in self.op.mask().indices() {
            k[i] = (k[i] + tau * self.data_kspace[i]) / (1.0 + tau);
        }
        fft.inverse_in_place(&mut k);
        x.copy_from_slice(&pack_complex(&k));
    }

    fn norm_bound(&self) -> f64 {
        8f64.sqrt()
    }

    fn objective(&self, x: &[f64]) -> Option<f64> {
        let r = ComplexField::from_raw(self.shape(), unpack_complex(x));
        Some(tv_objective(&self.op, &r, self.samples, self.alpha))
    }
}

/// Joint isotropic TV of the real and imaginary planes.
pub fn complex_tv(r: &ComplexField) -> f64 {
    let shape = r.shape();
    let n = shape.len();
    let re: Vec<f64> = r.values().iter().map(|c| c.re).collect();
    let im: Vec<f64> = r.values().iter().map(|c| c.im).collect();
    let (mut ax, mut ay, mut bx, mut by) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    grad_into(shape, &re, &mut ax, &mut ay);
    grad_into(shape, &im, &mut bx, &mut by);
    (0..n)
        .map(|i| (ax[i] * ax[i] + ay[i] * ay[i] + bx[i] * bx[i] + by[i] * by[i]).sqrt())
        .sum()
}

fn tv_objective(op: &SampledFourier, r: &ComplexField, f: &[Complex64], alpha: f64) -> f64 {
    let res = op.residual(r, f).expect("shapes checked");
    0.5 * res.iter().map(|c| c.norm_sqr()).sum::<f64>() + alpha * complex_tv(r)
}

/// Objective `½‖A r − f‖² + α TV_c(r)` of the sequential reconstruction.
pub fn reconstruct_tv_objective(channel: &KSpaceChannel, r: &ComplexField, alpha: f64) -> Result<f64> {
    channel.shape().ensure_same(&r.shape())?;
    let op = SampledFourier::new(channel.mask().clone());
    Ok(tv_objective(&op, r, channel.samples(), alpha))
}

/// Complex TV reconstruction of one channel, warm-started at the zero-fill.
pub fn reconstruct_tv(channel: &KSpaceChannel, alpha: f64, cfg: &PdhgConfig) -> Result<ComplexField> {
    reconstruct_tv_with_diagnostics(channel, alpha, cfg).map(|(r, _)| r)
}

pub fn reconstruct_tv_with_diagnostics(
    channel: &KSpaceChannel,
    alpha: f64,
    cfg: &PdhgConfig,
) -> Result<(ComplexField, Diagnostics)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", "must be positive"));
    }
    let problem = ComplexTvProblem::new(channel, alpha);
    let x0 = pack_complex(zero_fill(channel).values());
    let res = pdhg_solve(&problem, &x0, cfg)?;
    Ok((
        ComplexField::from_raw(channel.shape(), unpack_complex(&res.primal)),
        res.diagnostics,
    ))
}

/// Pixelwise `arg r` in (−π, π]; 0 where |r| < [`MAGNITUDE_FLOOR`].
pub fn extract_phase(r: &ComplexField) -> ScalarField {
    ScalarField::from_raw(
        r.shape(),
        r.values()
            .iter()
            .map(|c| {
                if c.norm() < MAGNITUDE_FLOOR {
                    0.0
                } else {
                    let a = c.im.atan2(c.re);
                    if a <= -PI {
                        PI
                    } else {
                        a
                    }
                }
            })
            .collect(),
    )
}

/// Maps an angle to (−π, π].
pub fn wrap_phase(a: f64) -> f64 {
    let w = a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Velocity `((φ₁ − φ₂) − (φ₃ − φ₄)) / (2ζ)`, with the double difference
/// taken modulo 2π in (−π, π]. Under the no-wrap condition the true double
/// difference already lies there, so only the 2π ambiguity of each phase
/// is removed.
pub fn compute_velocity(phases: &[ScalarField; 4], zeta: f64) -> Result<ScalarField> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::param("zeta", "must be positive"));
    }
    let d = crate::grid::double_difference(phases)?;
    Ok(d.map(|v| wrap_phase(v) / (2.0 * zeta)))
}

/// Per-channel images and the derived velocity of one reconstruction.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub images: [ComplexField; 4],
    pub magnitudes: [ScalarField; 4],
    pub phases: [ScalarField; 4],
    pub velocity: ScalarField,
}

impl Reconstruction {
    pub fn from_images(images: [ComplexField; 4], zeta: f64) -> Result<Self> {
        let magnitudes = std::array::from_fn(|i| images[i].abs());
        let phases = std::array::from_fn(|i| extract_phase(&images[i]));
        let velocity = compute_velocity(&phases, zeta)?;
        Ok(Self {
            images,
            magnitudes,
            phases,
            velocity,
        })
    }
}

/// Zero-filled images for all four channels.
pub fn run_zero_fill(data: &MeasurementSet) -> Result<Reconstruction> {
    let images = std::array::from_fn(|i| zero_fill(&data.channels()[i]));
    Reconstruction::from_images(images, data.zeta())
}

/// Sequential baseline: TV per channel, then phases and velocity.
pub fn run_sequential(data: &MeasurementSet, alpha: f64, cfg: &PdhgConfig) -> Result<Reconstruction> {
    let images: Vec<ComplexField> = data
        .channels()
        .par_iter()
        .map(|c| reconstruct_tv(c, alpha, cfg))
        .collect::<Result<_>>()?;
    let images: [ComplexField; 4] = images.try_into().expect("four channels");
    Reconstruction::from_images(images, data.zeta())
}
