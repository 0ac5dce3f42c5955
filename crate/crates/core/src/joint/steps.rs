//! The three block updates of the alternating Bregman iteration.

use rustfft::num_complex::Complex64;

use crate::cg::conjugate_gradient;
use crate::error::{Error, Result};
use crate::fourier::SampledFourier;
use crate::grid::{grad_adjoint, grad_adjoint_into, grad_into, ScalarField, Shape, VectorField};
use crate::pdhg::{pdhg_solve_from, project_ball, Diagnostics, SaddleProblem};

use super::energy::fidelity_eval_with;
use super::{JointParams, JointState};

/// Magnitude subproblem for one channel:
///
/// `min_{u ≥ 0} λ/2‖A(e^{iφ} u) − f‖² + δ Σ[v(c₁−u)² + (1−v)(c₂−u)²] + α TV(u) − ⟨p, u⟩`
///
/// with `K = [∇; A(e^{iφ}·)]`. The dual is laid out as
/// `[y_x (n), y_y (n), z_re (m), z_im (m)]`.
pub(crate) struct UStepProblem<'a> {
    pub op: &'a SampledFourier,
    pub samples: &'a [Complex64],
    /// e^{iφ} per pixel.
    pub rotation: Vec<Complex64>,
    /// v c₁ + (1 − v) c₂ per pixel.
    pub target: Vec<f64>,
    pub p: &'a [f64],
    pub alpha: f64,
    pub delta: f64,
    pub fidelity_weight: f64,
}

impl UStepProblem<'_> {
    fn shape(&self) -> Shape {
        self.op.shape()
    }

    fn m(&self) -> usize {
        self.samples.len()
    }
}

impl SaddleProblem for UStepProblem<'_> {
    fn primal_len(&self) -> usize {
        self.shape().len()
    }

    fn dual_len(&self) -> usize {
        2 * self.shape().len() + 2 * self.m()
    }

    fn apply_k(&self, x: &[f64], out: &mut [f64]) {
        let n = self.shape().len();
        let m = self.m();
        let (tv, fid) = out.split_at_mut(2 * n);
        let (gx, gy) = tv.split_at_mut(n);
        grad_into(self.shape(), x, gx, gy);
        let r: Vec<Complex64> = x.iter().zip(&self.rotation).map(|(&u, e)| e * u).collect();
        let k = self.op.forward_slice(&r);
        for i in 0..m {
            fid[i] = k[i].re;
            fid[m + i] = k[i].im;
        }
    }

    fn apply_k_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let n = self.shape().len();
        let m = self.m();
        grad_adjoint_into(self.shape(), &y[..n], &y[n..2 * n], out);
        let z: Vec<Complex64> = (0..m)
            .map(|i| Complex64::new(y[2 * n + i], y[2 * n + m + i]))
            .collect();
        let back = self.op.adjoint_slice(&z);
        for ((o, b), e) in out.iter_mut().zip(&back).zip(&self.rotation) {
            *o += (e.conj() * b).re;
        }
    }

    fn prox_f_conjugate(&self, y: &mut [f64], sigma: f64) {
        let n = self.shape().len();
        let m = self.m();
        let (tv, fid) = y.split_at_mut(2 * n);
        let (gx, gy) = tv.split_at_mut(n);
        project_ball(gx, gy, self.alpha);
        if self.fidelity_weight == 0.0 {
            fid.fill(0.0);
            return;
        }
        let denom = 1.0 + sigma / self.fidelity_weight;
        for i in 0..m {
            fid[i] = (fid[i] - sigma * self.samples[i].re) / denom;
            fid[m + i] = (fid[m + i] - sigma * self.samples[i].im) / denom;
        }
    }

    fn prox_g(&self, x: &mut [f64], tau: f64) {
        let scale = 1.0 + 2.0 * tau * self.delta;
        for ((v, &t), &p) in x.iter_mut().zip(&self.target).zip(self.p) {
            *v = ((*v + 2.0 * tau * self.delta * t + tau * p) / scale).max(0.0);
        }
    }

    fn norm_bound(&self) -> f64 {
        // ‖∇‖² ≤ 8 and ‖A(e^{iφ}·)‖ ≤ 1.
        3.0
    }
}

#[derive(Clone, Debug)]
pub struct UStepOutput {
    pub u: ScalarField,
    pub p: ScalarField,
    /// Dual certificate `y` with `p = ∇ᵀ y`, `|y| ≤ α`.
    pub p_dual: VectorField,
    pub(crate) fidelity_dual: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn u_step_with(
    op: &SampledFourier,
    samples: &[Complex64],
    u: &ScalarField,
    v: &ScalarField,
    phi: &ScalarField,
    p: &ScalarField,
    warm_dual: (&VectorField, &[f64]),
    c: (f64, f64),
    params: &JointParams,
    fidelity_weight: f64,
) -> Result<UStepOutput> {
    let shape = u.shape();
    let n = shape.len();
    let problem = UStepProblem {
        op,
        samples,
        rotation: phi.values().iter().map(|&a| Complex64::from_polar(1.0, a)).collect(),
        target: v.values().iter().map(|&v| v * c.0 + (1.0 - v) * c.1).collect(),
        p: p.values(),
        alpha: params.alpha,
        delta: params.delta,
        fidelity_weight,
    };
    let mut y0 = Vec::with_capacity(problem.dual_len());
    y0.extend_from_slice(warm_dual.0.x());
    y0.extend_from_slice(warm_dual.0.y());
    if warm_dual.1.len() == 2 * samples.len() {
        y0.extend_from_slice(warm_dual.1);
    } else {
        y0.resize(problem.dual_len(), 0.0);
    }
    let res = pdhg_solve_from(&problem, u.values(), &y0, &params.inner)?;
    let p_dual = VectorField::from_raw(shape, res.dual[..n].to_vec(), res.dual[n..2 * n].to_vec());
    let p_new = grad_adjoint(&p_dual);
    Ok(UStepOutput {
        u: ScalarField::from_raw(shape, res.primal),
        p: p_new,
        p_dual,
        fidelity_dual: res.dual[2 * n..].to_vec(),
        diagnostics: res.diagnostics,
    })
}

/// Magnitude update for channel `j` with `v`, `φ` held fixed.
pub fn solve_u_step(
    state: &JointState,
    data: &crate::measurement::MeasurementSet,
    params: &JointParams,
    j: usize,
) -> Result<UStepOutput> {
    let channel = &data.channels()[j];
    let op = SampledFourier::new(channel.mask().clone());
    u_step_with(
        &op,
        channel.samples(),
        &state.u[j],
        &state.v[j],
        &state.phi[j],
        &state.p[j],
        (&state.p_dual[j], &state.fidelity_dual[j]),
        (state.c1, state.c2),
        params,
        1.0,
    )
}

/// Label subproblem:
/// `min_{v ∈ [0,1]} ⟨s − q, v⟩ + β TV(v)` with `s = δ[(c₁−u)² − (c₂−u)²]`.
pub(crate) struct VStepProblem<'a> {
    pub shape: Shape,
    /// s − q per pixel.
    pub linear: Vec<f64>,
    pub beta: f64,
    pub _marker: std::marker::PhantomData<&'a ()>,
}

impl SaddleProblem for VStepProblem<'_> {
    fn primal_len(&self) -> usize {
        self.shape.len()
    }

    fn dual_len(&self) -> usize {
        2 * self.shape.len()
    }

    fn apply_k(&self, x: &[f64], out: &mut [f64]) {
        let (gx, gy) = out.split_at_mut(self.shape.len());
        grad_into(self.shape, x, gx, gy);
    }

    fn apply_k_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let n = self.shape.len();
        grad_adjoint_into(self.shape, &y[..n], &y[n..], out);
    }

    fn prox_f_conjugate(&self, y: &mut [f64], _sigma: f64) {
        let (gx, gy) = y.split_at_mut(self.shape.len());
        project_ball(gx, gy, self.beta);
    }

    fn prox_g(&self, x: &mut [f64], tau: f64) {
        for (v, &l) in x.iter_mut().zip(&self.linear) {
            *v = (*v - tau * l).clamp(0.0, 1.0);
        }
    }

    fn norm_bound(&self) -> f64 {
        8f64.sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct VStepOutput {
    pub v: ScalarField,
    pub q: ScalarField,
    pub q_dual: VectorField,
    pub diagnostics: Diagnostics,
}

/// Pointwise segmentation cost difference `δ[(c₁−u)² − (c₂−u)²]`.
pub(crate) fn region_cost(u: &ScalarField, c1: f64, c2: f64, delta: f64) -> Vec<f64> {
    u.values()
        .iter()
        .map(|&u| delta * ((c1 - u).powi(2) - (c2 - u).powi(2)))
        .collect()
}

pub(crate) fn v_step_with(
    u: &ScalarField,
    v: &ScalarField,
    q: &ScalarField,
    q_dual: &VectorField,
    c: (f64, f64),
    params: &JointParams,
) -> Result<VStepOutput> {
    let shape = u.shape();
    let n = shape.len();
    let linear: Vec<f64> = region_cost(u, c.0, c.1, params.delta)
        .into_iter()
        .zip(q.values())
        .map(|(s, q)| s - q)
        .collect();
    let problem = VStepProblem {
        shape,
        linear,
        beta: params.beta,
        _marker: std::marker::PhantomData,
    };
    let mut y0 = q_dual.x().to_vec();
    y0.extend_from_slice(q_dual.y());
    let res = pdhg_solve_from(&problem, v.values(), &y0, &params.inner)?;
    let q_dual = VectorField::from_raw(shape, res.dual[..n].to_vec(), res.dual[n..].to_vec());
    let q_new = grad_adjoint(&q_dual);
    Ok(VStepOutput {
        v: ScalarField::from_raw(shape, res.primal),
        q: q_new,
        q_dual,
        diagnostics: res.diagnostics,
    })
}

/// Label update for channel `j` with `u` held fixed.
pub fn solve_v_step(state: &JointState, params: &JointParams, j: usize) -> Result<VStepOutput> {
    v_step_with(
        &state.u[j],
        &state.v[j],
        &state.q[j],
        &state.q_dual[j],
        (state.c1, state.c2),
        params,
    )
}

/// Applies `M φ = (1/τ)(φ + η Dᵀ ∇ᵀ∇ D φ)` to four stacked phase planes, where
/// `D φ = (φ₁ − φ₂) − (φ₃ − φ₄)`.
pub fn phase_system_apply(shape: Shape, eta: f64, tau: f64, x: &[f64], out: &mut [f64]) {
    let n = shape.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        d[i] = (x[i] - x[n + i]) - (x[2 * n + i] - x[3 * n + i]);
    }
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    grad_into(shape, &d, &mut gx, &mut gy);
    let mut lap = vec![0.0; n];
    grad_adjoint_into(shape, &gx, &gy, &mut lap);
    let signs = [1.0, -1.0, -1.0, 1.0];
    for (l, s) in signs.iter().enumerate() {
        for i in 0..n {
            out[l * n + i] = (x[l * n + i] + eta * s * lap[i]) / tau;
        }
    }
}

/// `∇J_φ(φ)` for the smooth phase regularizer.
pub fn phase_regularizer_gradient(phases: &[ScalarField; 4], eta: f64, tau: f64) -> [ScalarField; 4] {
    let shape = phases[0].shape();
    let n = shape.len();
    let x: Vec<f64> = phases.iter().flat_map(|p| p.values().iter().copied()).collect();
    let mut out = vec![0.0; 4 * n];
    phase_system_apply(shape, eta, tau, &x, &mut out);
    std::array::from_fn(|l| ScalarField::from_raw(shape, out[l * n..(l + 1) * n].to_vec()))
}

#[derive(Clone, Debug)]
pub struct PhiStepOutput {
    pub phi: [ScalarField; 4],
    pub w: [ScalarField; 4],
    pub cg_iterations: usize,
}

/// Solves `M φ = w − g` for given fidelity gradients `g`; returns `(φ, w − g)`.
pub fn phi_step_with_gradients(
    phi: &[ScalarField; 4],
    w: &[ScalarField; 4],
    grads: &[ScalarField; 4],
    params: &JointParams,
) -> Result<PhiStepOutput> {
    let shape = phi[0].shape();
    let n = shape.len();
    let w_new: [ScalarField; 4] = std::array::from_fn(|l| {
        w[l].zip_map(&grads[l], |a, b| a - b)
            .expect("phase planes share a shape")
    });
    // Solve M δ = (w − g) − M φ for the increment, so the CG tolerance is
    // relative to the step rather than to the absolute phase level.
    let (eta, tau) = (params.eta, params.tau);
    let current: Vec<f64> = phi.iter().flat_map(|f| f.values().iter().copied()).collect();
    let mut rhs = vec![0.0; 4 * n];
    phase_system_apply(shape, eta, tau, &current, &mut rhs);
    for (r, w) in rhs.iter_mut().zip(w_new.iter().flat_map(|f| f.values().iter())) {
        *r = w - *r;
    }
    let mut delta = vec![0.0; 4 * n];
    let outcome = conjugate_gradient(
        |v, out| phase_system_apply(shape, eta, tau, v, out),
        &rhs,
        &mut delta,
        params.cg_tol,
        params.cg_max_iters,
    )?;
    let phi_new = std::array::from_fn(|l| {
        ScalarField::from_raw(shape, (l * n..(l + 1) * n).map(|i| current[i] + delta[i]).collect())
    });
    Ok(PhiStepOutput {
        phi: phi_new,
        w: w_new,
        cg_iterations: outcome.iterations,
    })
}

/// Phase update: linearized fidelity plus Bregman distance of `J_φ`, with
/// the gradients evaluated at the current magnitudes and phases.
pub fn solve_phi_step(
    state: &JointState,
    data: &crate::measurement::MeasurementSet,
    params: &JointParams,
) -> Result<PhiStepOutput> {
    let grads: Vec<ScalarField> = (0..4)
        .map(|j| {
            let ch = &data.channels()[j];
            let op = SampledFourier::new(ch.mask().clone());
            fidelity_eval_with(&op, &state.u[j], &state.phi[j], ch.samples()).map(|e| e.grad_phi)
        })
        .collect::<Result<_>>()?;
    let grads: [ScalarField; 4] = grads.try_into().map_err(|_| Error::param("channels", "expected 4"))?;
    phi_step_with_gradients(&state.phi, &state.w, &grads, params)
}
