//! Joint magnitude, segmentation and phase estimation by alternating Bregman
//! proximal iteration.
//!
//! Each outer step updates the four magnitudes, then the four label fields,
//! then the coupled phase block, and finally the subgradients `p`, `q`, `w`.

mod energy;
mod steps;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::SampledFourier;
use crate::grid::{ComplexField, ScalarField, VectorField};
use crate::measurement::MeasurementSet;
use crate::pdhg::PdhgConfig;
use crate::sequential::{compute_velocity, extract_phase, zero_fill};

pub use energy::{
    channel_residual_norm, data_residual, fidelity_eval, fidelity_grad_phi, fidelity_grad_u, joint_energy,
    segmentation_term, tv_fenchel_gap, FidelityEval,
};
pub use steps::{
    phase_regularizer_gradient, phase_system_apply, phi_step_with_gradients, solve_phi_step, solve_u_step,
    solve_v_step, PhiStepOutput, UStepOutput, VStepOutput,
};

pub(crate) use energy::tv_fenchel_gap_pointwise;

/// When the outer loop stops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StopRule {
    /// Run exactly `outer_max` iterations.
    FixedIters,
    /// Stop once `Σ_j ‖A(u_j e^{iφ_j}) − f_j‖ ≤ ν σ √M`, where `M` is the
    /// total complex sample count over the four channels (`4m` for a shared
    /// mask). `sigma = None` reads σ from the data.
    Discrepancy { nu: f64, sigma: Option<f64> },
}

/// How the phases are initialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhaseInit {
    /// `arg` of the zero-filled image.
    ZeroFill,
    /// `arg` of the zero-filled image restricted to a centered k-space block
    /// of the given half-width.
    LowPass { radius: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    /// TV weight on magnitudes.
    pub alpha: f64,
    /// TV weight on labels.
    pub beta: f64,
    /// Segmentation coupling weight.
    pub delta: f64,
    /// Smoothing weight on the phase double difference.
    pub eta: f64,
    /// Phase proximal scale.
    pub tau: f64,
    /// Level of the `v = 1` region.
    pub c1: f64,
    /// Level of the `v = 0` region.
    pub c2: f64,
    pub c_update: bool,
    pub outer_max: usize,
    pub inner: PdhgConfig,
    pub stop_rule: StopRule,
    pub phase_init: PhaseInit,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for JointParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.05,
            delta: 0.05,
            eta: 4.0,
            tau: 0.3,
            c1: 0.2,
            c2: 1.0,
            c_update: false,
            outer_max: 50,
            inner: PdhgConfig::default(),
            stop_rule: StopRule::Discrepancy { nu: 1.0, sigma: None },
            phase_init: PhaseInit::ZeroFill,
            cg_tol: 1e-8,
            cg_max_iters: 2000,
        }
    }
}

impl JointParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("eta", self.eta),
            ("tau", self.tau),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {value}")));
            }
        }
        if !(self.c1.is_finite() && self.c2.is_finite()) || self.c1 == self.c2 {
            return Err(Error::param("c1", "region constants must be finite and distinct"));
        }
        if self.outer_max == 0 {
            return Err(Error::param("outer_max", "must be at least 1"));
        }
        if let StopRule::Discrepancy { nu, sigma } = self.stop_rule {
            if !(nu > 0.0) {
                return Err(Error::param("nu", "must be positive"));
            }
            if sigma.is_some_and(|s| !(s >= 0.0)) {
                return Err(Error::param("sigma", "must be nonnegative"));
            }
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iters == 0 {
            return Err(Error::param("cg_tol", "CG tolerance and cap must be positive"));
        }
        self.inner.steps(1.0)?;
        Ok(())
    }
}

/// Iterates and subgradients of the outer loop.
#[derive(Clone, Debug)]
pub struct JointState {
    pub u: [ScalarField; 4],
    pub v: [ScalarField; 4],
    pub phi: [ScalarField; 4],
    /// Subgradients of the magnitude TV.
    pub p: [ScalarField; 4],
    /// Subgradients of the label TV.
    pub q: [ScalarField; 4],
    /// Gradient of the phase regularizer at `phi`.
    pub w: [ScalarField; 4],
    /// Dual certificates with `p = ∇ᵀ p_dual`.
    pub p_dual: [VectorField; 4],
    /// Dual certificates with `q = ∇ᵀ q_dual`.
    pub q_dual: [VectorField; 4],
    pub(crate) fidelity_dual: [Vec<f64>; 4],
    pub c1: f64,
    pub c2: f64,
    pub k: usize,
}

/// `arg r_j` on the branch within π of the noflow+ phase, pixel by pixel.
/// A common rotation of all four images then shifts every channel of a
/// pixel by the same multiple of 2π.
fn branch_aligned_phases(images: &[ComplexField; 4]) -> [ScalarField; 4] {
    let reference = extract_phase(&images[REFERENCE_CHANNEL]);
    std::array::from_fn(|j| {
        if j == REFERENCE_CHANNEL {
            return reference.clone();
        }
        let rel = images[j]
            .values()
            .iter()
            .zip(images[REFERENCE_CHANNEL].values())
            .map(|(a, b)| a * b.conj())
            .collect();
        let rel = extract_phase(&ComplexField::new(reference.width(), reference.height(), rel).expect("same shape"));
        reference.zip_map(&rel, |a, b| a + b).expect("same shape")
    })
}

const REFERENCE_CHANNEL: usize = 2;

fn low_pass_image(channel: &crate::fourier::KSpaceChannel, radius: usize) -> ComplexField {
    let mask = channel.mask();
    let shape = mask.shape();
    let (cx, cy) = mask.center();
    let op = SampledFourier::new(mask.clone());
    let samples: Vec<_> = mask
        .indices()
        .iter()
        .zip(channel.samples())
        .map(|(&i, &s)| {
            let (x, y) = (i % shape.width, i / shape.width);
            if x.abs_diff(cx) <= radius && y.abs_diff(cy) <= radius {
                s
            } else {
                rustfft::num_complex::Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    op.adjoint(&samples).expect("sample count matches mask")
}

impl JointState {
    /// Zero-fill magnitudes, thresholded labels, zero TV subgradients and
    /// `w = ∇J_φ(φ⁰)`.
    pub fn init(data: &MeasurementSet, params: &JointParams) -> Result<Self> {
        let shape = data.shape();
        let zf: [_; 4] = std::array::from_fn(|j| zero_fill(&data.channels()[j]));
        let u: [ScalarField; 4] = std::array::from_fn(|j| zf[j].abs());
        let phi: [ScalarField; 4] = match params.phase_init {
            PhaseInit::ZeroFill => branch_aligned_phases(&zf),
            PhaseInit::LowPass { radius } => {
                branch_aligned_phases(&std::array::from_fn(|j| low_pass_image(&data.channels()[j], radius)))
            }
        };
        let (c1, c2) = (params.c1, params.c2);
        let v = std::array::from_fn(|j| u[j].map(|x| threshold_label(x, c1, c2)));
        let w = phase_regularizer_gradient(&phi, params.eta, params.tau);
        Ok(Self {
            u,
            v,
            phi,
            p: std::array::from_fn(|_| ScalarField::zeros(shape)),
            q: std::array::from_fn(|_| ScalarField::zeros(shape)),
            w,
            p_dual: std::array::from_fn(|_| VectorField::zeros(shape)),
            q_dual: std::array::from_fn(|_| VectorField::zeros(shape)),
            fidelity_dual: std::array::from_fn(|_| Vec::new()),
            c1,
            c2,
            k: 0,
        })
    }

    /// Velocity from the current phases.
    pub fn velocity(&self, zeta: f64) -> Result<ScalarField> {
        compute_velocity(&self.phi, zeta)
    }

    /// `v ≥ 0.5` per channel.
    pub fn labels(&self) -> [Vec<bool>; 4] {
        std::array::from_fn(|j| self.v[j].values().iter().map(|&v| v >= 0.5).collect())
    }

    /// Largest Fenchel–Young gap over the stored `p` certificates.
    pub fn max_p_gap(&self, alpha: f64) -> f64 {
        (0..4)
            .map(|j| certificate_gap(&self.u[j], &self.p_dual[j], alpha))
            .fold(0.0, f64::max)
    }

    /// Largest Fenchel–Young gap over the stored `q` certificates.
    pub fn max_q_gap(&self, beta: f64) -> f64 {
        (0..4)
            .map(|j| certificate_gap(&self.v[j], &self.q_dual[j], beta))
            .fold(0.0, f64::max)
    }
}

fn certificate_gap(x: &ScalarField, dual: &VectorField, weight: f64) -> f64 {
    if tv_fenchel_gap(x, dual, weight).is_infinite() {
        return f64::INFINITY;
    }
    tv_fenchel_gap_pointwise(x, dual, weight)
}

/// Initial label: 1 where `u` is closer to `c1`, 0.5 on ties.
fn threshold_label(u: f64, c1: f64, c2: f64) -> f64 {
    let d1 = (c1 - u).powi(2);
    let d2 = (c2 - u).powi(2);
    if d1 < d2 {
        1.0
    } else if d1 > d2 {
        0.0
    } else {
        0.5
    }
}

/// Region means of `u` over `{v > 0.5}` and its complement, pooled over the
/// four channels. An empty region keeps its previous constant.
pub fn update_region_constants(state: &JointState) -> (f64, f64) {
    let (mut s1, mut n1, mut s2, mut n2) = (0.0, 0usize, 0.0, 0usize);
    for j in 0..4 {
        for (&u, &v) in state.u[j].values().iter().zip(state.v[j].values()) {
            if v > 0.5 {
                s1 += u;
                n1 += 1;
            } else {
                s2 += u;
                n2 += 1;
            }
        }
    }
    let c1 = if n1 > 0 { s1 / n1 as f64 } else { state.c1 };
    let c2 = if n2 > 0 { s2 / n2 as f64 } else { state.c2 };
    (c1, c2)
}

/// Reference fields for tracking errors during a run.
#[derive(Clone, Copy, Debug)]
pub struct JointTruth<'a> {
    pub magnitude: &'a ScalarField,
    pub phases: &'a [ScalarField; 4],
    pub velocity: &'a ScalarField,
    /// Pixels over which the velocity error is taken.
    pub velocity_region: Option<&'a [bool]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OuterRecord {
    pub iter: usize,
    pub energy: f64,
    pub residual: f64,
    pub p_gap: f64,
    pub q_gap: f64,
    pub c1: f64,
    pub c2: f64,
    pub inner_iters: usize,
    pub cg_iters: usize,
    pub magnitude_mse: Option<f64>,
    pub phase_mse: Option<f64>,
    pub velocity_mse: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct JointOutput {
    pub state: JointState,
    pub velocity: ScalarField,
    pub labels: [Vec<bool>; 4],
    pub history: Vec<OuterRecord>,
    /// Whether the discrepancy rule fired (always false for fixed iterations).
    pub stopped_early: bool,
    /// Residual threshold of the discrepancy rule, if active.
    pub discrepancy_threshold: Option<f64>,
}

impl JointOutput {
    pub fn write_history_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            out,
            "iter,energy,residual,p_gap,q_gap,c1,c2,inner_iters,cg_iters,magnitude_mse,phase_mse,velocity_mse"
        )?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.history {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{},{},{},{},{},{},{}",
                r.iter,
                r.energy,
                r.residual,
                r.p_gap,
                r.q_gap,
                r.c1,
                r.c2,
                r.inner_iters,
                r.cg_iters,
                opt(r.magnitude_mse),
                opt(r.phase_mse),
                opt(r.velocity_mse)
            )?;
        }
        Ok(())
    }
}

fn mean_sq(a: &[f64], b: &[f64], region: Option<&[bool]>) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if region.is_none_or(|r| r[i]) {
            s += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Residual threshold `ν σ √M` of the discrepancy rule.
pub fn discrepancy_threshold(data: &MeasurementSet, nu: f64, sigma: Option<f64>) -> f64 {
    let sigma = sigma.unwrap_or_else(|| data.noise_sigma());
    nu * sigma * (data.total_samples() as f64).sqrt()
}

/// One full outer step: u-blocks, v-blocks, then the phase block.
pub fn outer_step(state: &mut JointState, data: &MeasurementSet, params: &JointParams) -> Result<(usize, usize)> {
    let k = state.k + 1;
    let with_iter = |e: Error| match e {
        Error::Divergence { iteration, reason } => Error::Divergence {
            iteration: k,
            reason: format!("inner iteration {iteration}: {reason}"),
        },
        other => other,
    };

    let u_out: Vec<UStepOutput> = (0..4)
        .into_par_iter()
        .map(|j| solve_u_step(state, data, params, j))
        .collect::<Result<_>>()
        .map_err(with_iter)?;
    let mut inner = 0;
    for (j, o) in u_out.into_iter().enumerate() {
        inner = inner.max(o.diagnostics.iterations);
        state.u[j] = o.u;
        state.p[j] = o.p;
        state.p_dual[j] = o.p_dual;
        state.fidelity_dual[j] = o.fidelity_dual;
    }

    let v_out: Vec<VStepOutput> = (0..4)
        .into_par_iter()
        .map(|j| solve_v_step(state, params, j))
        .collect::<Result<_>>()
        .map_err(with_iter)?;
    for (j, o) in v_out.into_iter().enumerate() {
        inner = inner.max(o.diagnostics.iterations);
        state.v[j] = o.v;
        state.q[j] = o.q;
        state.q_dual[j] = o.q_dual;
    }

    let phi_out = solve_phi_step(state, data, params)?;
    state.phi = phi_out.phi;
    state.w = phi_out.w;

    if params.c_update {
        let (c1, c2) = update_region_constants(state);
        state.c1 = c1;
        state.c2 = c2;
    }
    state.k = k;
    Ok((inner, phi_out.cg_iterations))
}

/// Runs the outer loop until the stop rule fires or `outer_max` is reached.
pub fn run_joint(data: &MeasurementSet, params: &JointParams) -> Result<JointOutput> {
    run_joint_tracked(data, params, None)
}

/// As [`run_joint`], also recording errors against `truth` each iteration.
pub fn run_joint_tracked(
    data: &MeasurementSet,
    params: &JointParams,
    truth: Option<JointTruth<'_>>,
) -> Result<JointOutput> {
    params.validate()?;
    let mut state = JointState::init(data, params)?;
    let threshold = match params.stop_rule {
        StopRule::FixedIters => None,
        StopRule::Discrepancy { nu, sigma } => Some(discrepancy_threshold(data, nu, sigma)),
    };
    let mut history = Vec::new();
    let mut stopped_early = false;

    for _ in 0..params.outer_max {
        let (inner_iters, cg_iters) = outer_step(&mut state, data, params)?;
        let energy = joint_energy(&state, data, params)?;
        if !energy.is_finite() {
            return Err(Error::Divergence {
                iteration: state.k,
                reason: "joint energy is not finite".into(),
            });
        }
        let residual = data_residual(&state, data)?;
        let mut record = OuterRecord {
            iter: state.k,
            energy,
            residual,
            p_gap: state.max_p_gap(params.alpha),
            q_gap: state.max_q_gap(params.beta),
            c1: state.c1,
            c2: state.c2,
            inner_iters,
            cg_iters,
            magnitude_mse: None,
            phase_mse: None,
            velocity_mse: None,
        };
        if let Some(t) = truth {
            let mag = (0..4)
                .map(|j| mean_sq(state.u[j].values(), t.magnitude.values(), None))
                .sum::<f64>()
                / 4.0;
            let ph = (0..4)
                .map(|j| mean_sq(state.phi[j].values(), t.phases[j].values(), None))
                .sum::<f64>()
                / 4.0;
            let vel = state.velocity(data.zeta())?;
            record.magnitude_mse = Some(mag);
            record.phase_mse = Some(ph);
            record.velocity_mse = Some(mean_sq(vel.values(), t.velocity.values(), t.velocity_region));
        }
        history.push(record);
        if threshold.is_some_and(|th| residual <= th) {
            stopped_early = true;
            break;
        }
    }

    let velocity = state.velocity(data.zeta())?;
    let labels = state.labels();
    Ok(JointOutput {
        state,
        velocity,
        labels,
        history,
        stopped_early,
        discrepancy_threshold: threshold,
    })
}
