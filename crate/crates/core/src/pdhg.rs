//! Primal-dual hybrid gradient (Chambolle–Pock) for `min_x F(Kx) + G(x)`.
//!
//! Problems are expressed over flat real vectors; complex unknowns are packed
//! as `[re..., im...]` by the caller. Iteration:
//!
//! ```text
//! y⁺ = prox_{σF*}(y + σ K x̄)
//! x⁺ = prox_{τG}(x − τ Kᵀ y⁺)
//! x̄  = x⁺ + θ (x⁺ − x)
//! ```

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{grad_adjoint_into, grad_into, Shape};

/// A saddle-point problem with a registered linear operator pair.
pub trait SaddleProblem {
    fn primal_len(&self) -> usize;
    fn dual_len(&self) -> usize;
    /// `out = K x`
    fn apply_k(&self, x: &[f64], out: &mut [f64]);
    /// `out = Kᵀ y`
    fn apply_k_adjoint(&self, y: &[f64], out: &mut [f64]);
    /// Resolvent of `σ ∂F*`, in place.
    fn prox_f_conjugate(&self, y: &mut [f64], sigma: f64);
    /// Resolvent of `τ ∂G`, in place.
    fn prox_g(&self, x: &mut [f64], tau: f64);
    /// Upper bound on ‖K‖.
    fn norm_bound(&self) -> f64;
    /// Primal objective, when cheap to evaluate.
    fn objective(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PdhgConfig {
    /// Dual step; `None` selects `0.99 / ‖K‖`.
    pub sigma: Option<f64>,
    /// Primal step; `None` selects `0.99 / ‖K‖`.
    pub tau_step: Option<f64>,
    pub max_iters: usize,
    /// Stop once the relative primal and dual changes both fall below this.
    pub rel_tol: f64,
    /// Over-relaxation in [0, 1].
    pub theta: f64,
    /// Keep per-iteration residuals in the diagnostics.
    pub record_history: bool,
}

impl Default for PdhgConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            tau_step: None,
            max_iters: 300,
            rel_tol: 1e-6,
            theta: 1.0,
            record_history: false,
        }
    }
}

impl PdhgConfig {
    pub fn with_iters(max_iters: usize, rel_tol: f64) -> Self {
        Self {
            max_iters,
            rel_tol,
            ..Self::default()
        }
    }

    /// Resolved `(σ, τ)` for a given operator-norm bound.
    pub fn steps(&self, norm_bound: f64) -> Result<(f64, f64)> {
        if !(norm_bound > 0.0 && norm_bound.is_finite()) {
            return Err(Error::Config(format!("operator norm bound {norm_bound} must be positive")));
        }
        let default = 0.99 / norm_bound;
        let sigma = self.sigma.unwrap_or(default);
        let tau = self.tau_step.unwrap_or(default);
        if !(sigma > 0.0 && tau > 0.0) {
            return Err(Error::Config("PDHG step sizes must be positive".into()));
        }
        if sigma * tau * norm_bound * norm_bound >= 1.0 {
            return Err(Error::Config(format!(
                "step sizes violate sigma*tau*L^2 < 1 (sigma={sigma}, tau={tau}, L={norm_bound})"
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta {} not in [0, 1]", self.theta)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        Ok((sigma, tau))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// ‖x⁺ − x‖ / max(‖x‖, ε)
    pub primal_residual: f64,
    /// ‖y⁺ − y‖ / max(‖y‖, ε)
    pub dual_residual: f64,
    pub objective: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub final_primal_residual: f64,
    pub final_dual_residual: f64,
    pub history: Vec<IterRecord>,
}

impl Diagnostics {
    /// Writes `iter,primal_residual,dual_residual` rows.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iter,primal_residual,dual_residual")?;
        for r in &self.history {
            writeln!(out, "{},{:e},{:e}", r.iter, r.primal_residual, r.dual_residual)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PdhgResult {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub diagnostics: Diagnostics,
}

const EPS: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Randomized check of `⟨Kx, y⟩ = ⟨x, Kᵀy⟩`; returns the relative error.
pub fn adjoint_mismatch<P: SaddleProblem + ?Sized>(problem: &P, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (problem.primal_len(), problem.dual_len());
    let mut worst: f64 = 0.0;
    let mut kx = vec![0.0; m];
    let mut kty = vec![0.0; n];
    for _ in 0..trials {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        problem.apply_k(&x, &mut kx);
        problem.apply_k_adjoint(&y, &mut kty);
        let lhs: f64 = kx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&kty).map(|(a, b)| a * b).sum();
        let scale = (norm(&x) * norm(&y)).max(EPS);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}

/// Solves from `x0` with a zero dual start.
pub fn pdhg_solve<P: SaddleProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    cfg: &PdhgConfig,
) -> Result<PdhgResult> {
    let y0 = vec![0.0; problem.dual_len()];
    pdhg_solve_from(problem, x0, &y0, cfg)
}

/// Solves from a primal-dual warm start.
pub fn pdhg_solve_from<P: SaddleProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    y0: &[f64],
    cfg: &PdhgConfig,
) -> Result<PdhgResult> {
    let (n, m) = (problem.primal_len(), problem.dual_len());
    if x0.len() != n {
        return Err(Error::mismatch(n, x0.len()));
    }
    if y0.len() != m {
        return Err(Error::mismatch(m, y0.len()));
    }
    let (sigma, tau) = cfg.steps(problem.norm_bound())?;
    let mismatch = adjoint_mismatch(problem, 1, 0x5eed);
    if mismatch > 1e-9 {
        return Err(Error::AdjointMismatch(mismatch));
    }

    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut x_bar = x.clone();
    let mut x_new = vec![0.0; n];
    let mut y_new = vec![0.0; m];
    let mut kx = vec![0.0; m];
    let mut kty = vec![0.0; n];
    let mut diag = Diagnostics::default();

    for iter in 1..=cfg.max_iters {
        problem.apply_k(&x_bar, &mut kx);
        for ((yn, &yo), &k) in y_new.iter_mut().zip(&y).zip(&kx) {
            *yn = yo + sigma * k;
        }
        problem.prox_f_conjugate(&mut y_new, sigma);

        problem.apply_k_adjoint(&y_new, &mut kty);
        for ((xn, &xo), &k) in x_new.iter_mut().zip(&x).zip(&kty) {
            *xn = xo - tau * k;
        }
        problem.prox_g(&mut x_new, tau);

        let mut dx2 = 0.0;
        for ((xb, &xn), &xo) in x_bar.iter_mut().zip(&x_new).zip(&x) {
            let d = xn - xo;
            dx2 += d * d;
            *xb = xn + cfg.theta * d;
        }
        let dy2: f64 = y_new.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if !dx2.is_finite() || !dy2.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                reason: "non-finite PDHG iterate".into(),
            });
        }
        let primal_res = dx2.sqrt() / norm(&x).max(EPS);
        let dual_res = dy2.sqrt() / norm(&y).max(EPS);

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut y, &mut y_new);

        diag.iterations = iter;
        diag.final_primal_residual = primal_res;
        diag.final_dual_residual = dual_res;
        if cfg.record_history {
            diag.history.push(IterRecord {
                iter,
                primal_residual: primal_res,
                dual_residual: dual_res,
                objective: problem.objective(&x),
            });
        }
        if primal_res < cfg.rel_tol && dual_res < cfg.rel_tol {
            diag.converged = true;
            break;
        }
    }

    Ok(PdhgResult {
        primal: x,
        dual: y,
        diagnostics: diag,
    })
}

/// Pointwise projection of a planar vector field onto the ball of radius `radius`.
pub(crate) fn project_ball(gx: &mut [f64], gy: &mut [f64], radius: f64) {
    for (a, b) in gx.iter_mut().zip(gy.iter_mut()) {
        let n = a.hypot(*b);
        if n > radius {
            let s = radius / n;
            *a *= s;
            *b *= s;
        }
    }
}

/// TV denoising `min_x ½‖x − g‖² + α TV(x)` on a 2D grid (the isotropic TV prox).
#[derive(Clone, Debug)]
pub struct RofDenoise {
    pub shape: Shape,
    pub data: Vec<f64>,
    pub alpha: f64,
}

impl SaddleProblem for RofDenoise {
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
        let (gx, gy) = y.split_at(self.shape.len());
        grad_adjoint_into(self.shape, gx, gy, out);
    }

    fn prox_f_conjugate(&self, y: &mut [f64], _sigma: f64) {
        let (gx, gy) = y.split_at_mut(self.shape.len());
        project_ball(gx, gy, self.alpha);
    }

    fn prox_g(&self, x: &mut [f64], tau: f64) {
        for (v, g) in x.iter_mut().zip(&self.data) {
            *v = (*v + tau * g) / (1.0 + tau);
        }
    }

    fn norm_bound(&self) -> f64 {
        8f64.sqrt()
    }

    fn objective(&self, x: &[f64]) -> Option<f64> {
        let n = self.shape.len();
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        grad_into(self.shape, x, &mut gx, &mut gy);
        let tv: f64 = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum();
        let fid: f64 = x.iter().zip(&self.data).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
        Some(fid + self.alpha * tv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// G = ½‖x − b‖², F = 0, K = 0.
    struct QuadraticOnly {
        b: Vec<f64>,
    }

    impl SaddleProblem for QuadraticOnly {
        fn primal_len(&self) -> usize {
            self.b.len()
        }
        fn dual_len(&self) -> usize {
            1
        }
        fn apply_k(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn apply_k_adjoint(&self, _y: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn prox_f_conjugate(&self, y: &mut [f64], _sigma: f64) {
            // F = 0 ⇒ F* = ι{0}.
            y.fill(0.0);
        }
        fn prox_g(&self, x: &mut [f64], tau: f64) {
            for (v, b) in x.iter_mut().zip(&self.b) {
                *v = (*v + tau * b) / (1.0 + tau);
            }
        }
        fn norm_bound(&self) -> f64 {
            1.0
        }
    }

    /// 1D two-pixel TV: ½‖x − g‖² + α|x₂ − x₁|.
    struct TwoPixel {
        g: [f64; 2],
        alpha: f64,
    }

    impl SaddleProblem for TwoPixel {
        fn primal_len(&self) -> usize {
            2
        }
        fn dual_len(&self) -> usize {
            1
        }
        fn apply_k(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[1] - x[0];
        }
        fn apply_k_adjoint(&self, y: &[f64], out: &mut [f64]) {
            out[0] = -y[0];
            out[1] = y[0];
        }
        fn prox_f_conjugate(&self, y: &mut [f64], _sigma: f64) {
            y[0] = y[0].clamp(-self.alpha, self.alpha);
        }
        fn prox_g(&self, x: &mut [f64], tau: f64) {
            for (v, g) in x.iter_mut().zip(&self.g) {
                *v = (*v + tau * g) / (1.0 + tau);
            }
        }
        fn norm_bound(&self) -> f64 {
            2f64.sqrt()
        }
    }

    #[test]
    fn quadratic_only_converges_to_b() {
        let p = QuadraticOnly {
            b: vec![1.0, -2.0, 0.5],
        };
        let res = pdhg_solve(&p, &[0.0; 3], &PdhgConfig::with_iters(2000, 1e-14)).unwrap();
        for (x, b) in res.primal.iter().zip(&p.b) {
            assert!((x - b).abs() < 1e-10);
        }
        // Starting at the solution is a fixed point after a single step.
        let res = pdhg_solve(&p, &p.b, &PdhgConfig::with_iters(1, 1e-14)).unwrap();
        assert_eq!(res.primal, p.b);
    }

    #[test]
    fn two_pixel_toy_closed_form() {
        let p = TwoPixel {
            g: [0.0, 1.0],
            alpha: 0.25,
        };
        let res = pdhg_solve(&p, &[0.0, 0.0], &PdhgConfig::with_iters(10_000, 1e-14)).unwrap();
        assert!((res.primal[0] - 0.25).abs() < 1e-8);
        assert!((res.primal[1] - 0.75).abs() < 1e-8);
        // Dual saturates at α.
        assert!((res.dual[0] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_steps() {
        let p = TwoPixel {
            g: [0.0, 1.0],
            alpha: 0.25,
        };
        let cfg = PdhgConfig {
            sigma: Some(1.0),
            tau_step: Some(1.0),
            ..PdhgConfig::default()
        };
        assert!(matches!(pdhg_solve(&p, &[0.0, 0.0], &cfg), Err(Error::Config(_))));
        let cfg = PdhgConfig {
            theta: 1.5,
            ..PdhgConfig::default()
        };
        assert!(matches!(pdhg_solve(&p, &[0.0, 0.0], &cfg), Err(Error::Config(_))));
    }

    struct BrokenAdjoint;

    impl SaddleProblem for BrokenAdjoint {
        fn primal_len(&self) -> usize {
            2
        }
        fn dual_len(&self) -> usize {
            1
        }
        fn apply_k(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[1] - x[0];
        }
        fn apply_k_adjoint(&self, y: &[f64], out: &mut [f64]) {
            out[0] = y[0];
            out[1] = y[0];
        }
        fn prox_f_conjugate(&self, _y: &mut [f64], _sigma: f64) {}
        fn prox_g(&self, _x: &mut [f64], _tau: f64) {}
        fn norm_bound(&self) -> f64 {
            2.0
        }
    }

    #[test]
    fn adjoint_guard_rejects_mismatched_pair() {
        let r = pdhg_solve(&BrokenAdjoint, &[0.0, 0.0], &PdhgConfig::default());
        assert!(matches!(r, Err(Error::AdjointMismatch(_))));
    }

    struct Exploding;

    impl SaddleProblem for Exploding {
        fn primal_len(&self) -> usize {
            1
        }
        fn dual_len(&self) -> usize {
            1
        }
        fn apply_k(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0];
        }
        fn apply_k_adjoint(&self, y: &[f64], out: &mut [f64]) {
            out[0] = y[0];
        }
        fn prox_f_conjugate(&self, y: &mut [f64], _sigma: f64) {
            y[0] = 0.0;
        }
        fn prox_g(&self, x: &mut [f64], _tau: f64) {
            x[0] = if x[0] > 3.0 { f64::NAN } else { x[0] + 1.0 };
        }
        fn norm_bound(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn nan_is_reported_with_iteration() {
        let r = pdhg_solve(&Exploding, &[0.0], &PdhgConfig::with_iters(100, 1e-12));
        match r {
            Err(Error::Divergence { iteration, .. }) => assert!(iteration > 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_csv_has_one_row_per_iteration() {
        let p = TwoPixel {
            g: [0.0, 1.0],
            alpha: 0.25,
        };
        let cfg = PdhgConfig {
            record_history: true,
            ..PdhgConfig::with_iters(17, 0.0_f64.max(1e-300))
        };
        let res = pdhg_solve(&p, &[0.0, 0.0], &cfg).unwrap();
        let mut buf = Vec::new();
        res.diagnostics.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + res.diagnostics.iterations);
        assert!(text.starts_with("iter,primal_residual,dual_residual\n"));
    }
}
