//! Pixel grids and the discrete differential operators shared by every solver.
//!
//! Fields are stored row-major: pixel `(x, y)` lives at `y * width + x`, with
//! `x` running along the first axis (`width` = n₁) and `y` along the second
//! (`height` = n₂). Pixel spacing is 1.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Grid dimensions shared by all field types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidGrid(format!(
                "both dimensions must be >= 2, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub(crate) fn ensure_same(&self, other: &Shape) -> Result<()> {
        if self != other {
            return Err(Error::mismatch(self, other));
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::InvalidGrid("non-finite value in field".into()))
    }
}

/// Real value per pixel: magnitudes, phases (radians), label relaxations.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    shape: Shape,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(width, height)?;
        if values.len() != shape.len() {
            return Err(Error::mismatch(shape.len(), values.len()));
        }
        check_finite(values.iter().copied())?;
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                values.push(f(x, y));
            }
        }
        Self { shape, values }
    }

    /// Wraps a buffer produced internally; length is checked, finiteness is not.
    pub(crate) fn from_raw(shape: Shape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self { shape, values }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape.height
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.shape.index(x, y)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.shape, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.shape.ensure_same(&other.shape)?;
        Ok(Self::from_raw(
            self.shape,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Complex value per pixel, e.g. r = u·e^{iφ}.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    shape: Shape,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(width: usize, height: usize, values: Vec<Complex64>) -> Result<Self> {
        let shape = Shape::new(width, height)?;
        if values.len() != shape.len() {
            return Err(Error::mismatch(shape.len(), values.len()));
        }
        check_finite(values.iter().flat_map(|c| [c.re, c.im]))?;
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            values: vec![Complex64::new(0.0, 0.0); shape.len()],
        }
    }

    pub(crate) fn from_raw(shape: Shape, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self { shape, values }
    }

    /// Builds `magnitude · e^{i phase}` pixelwise.
    pub fn from_polar(magnitude: &ScalarField, phase: &ScalarField) -> Result<Self> {
        magnitude.shape.ensure_same(&phase.shape)?;
        Ok(Self::from_raw(
            magnitude.shape,
            magnitude
                .values
                .iter()
                .zip(&phase.values)
                .map(|(&m, &p)| Complex64::from_polar(m, p))
                .collect(),
        ))
    }

    pub fn from_real(field: &ScalarField) -> Self {
        Self::from_raw(
            field.shape,
            field
                .values
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect(),
        )
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn abs(&self) -> ScalarField {
        ScalarField::from_raw(self.shape, self.values.iter().map(|c| c.norm()).collect())
    }

    pub fn re(&self) -> ScalarField {
        ScalarField::from_raw(self.shape, self.values.iter().map(|c| c.re).collect())
    }

    pub fn im(&self) -> ScalarField {
        ScalarField::from_raw(self.shape, self.values.iter().map(|c| c.im).collect())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Complex inner product ⟨self, other⟩ = Σ conj(self)·other.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Two real planes per pixel; the range of [`grad`].
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    shape: Shape,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl VectorField {
    pub fn new(width: usize, height: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(width, height)?;
        if x.len() != shape.len() || y.len() != shape.len() {
            return Err(Error::mismatch(shape.len(), x.len().max(y.len())));
        }
        check_finite(x.iter().chain(&y).copied())?;
        Ok(Self { shape, x, y })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            x: vec![0.0; shape.len()],
            y: vec![0.0; shape.len()],
        }
    }

    pub(crate) fn from_raw(shape: Shape, x: Vec<f64>, y: Vec<f64>) -> Self {
        debug_assert_eq!(x.len(), shape.len());
        debug_assert_eq!(y.len(), shape.len());
        Self { shape, x, y }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn planes_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.x, &mut self.y)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let dx: f64 = self.x.iter().zip(&other.x).map(|(a, b)| a * b).sum();
        let dy: f64 = self.y.iter().zip(&other.y).map(|(a, b)| a * b).sum();
        dx + dy
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

/// Forward differences into `gx`, `gy` (Neumann: zero on the last column / row).
pub(crate) fn grad_into(shape: Shape, f: &[f64], gx: &mut [f64], gy: &mut [f64]) {
    let (w, h) = (shape.width, shape.height);
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            gx[i] = if x + 1 < w { f[i + 1] - f[i] } else { 0.0 };
            gy[i] = if y + 1 < h { f[i + w] - f[i] } else { 0.0 };
        }
    }
}

/// Exact adjoint of [`grad_into`] (negative divergence), written into `out`.
pub(crate) fn grad_adjoint_into(shape: Shape, gx: &[f64], gy: &[f64], out: &mut [f64]) {
    let (w, h) = (shape.width, shape.height);
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            let mut acc = 0.0;
            if x + 1 < w {
                acc -= gx[i];
            }
            if x > 0 {
                acc += gx[i - 1];
            }
            if y + 1 < h {
                acc -= gy[i];
            }
            if y > 0 {
                acc += gy[i - w];
            }
            out[i] = acc;
        }
    }
}

/// Forward-difference gradient with Neumann boundary.
pub fn grad(f: &ScalarField) -> VectorField {
    let shape = f.shape;
    let mut gx = vec![0.0; shape.len()];
    let mut gy = vec![0.0; shape.len()];
    grad_into(shape, &f.values, &mut gx, &mut gy);
    VectorField::from_raw(shape, gx, gy)
}

/// Adjoint of [`grad`]: ⟨grad f, y⟩ = ⟨f, grad_adjoint y⟩.
pub fn grad_adjoint(y: &VectorField) -> ScalarField {
    let shape = y.shape;
    let mut out = vec![0.0; shape.len()];
    grad_adjoint_into(shape, &y.x, &y.y, &mut out);
    ScalarField::from_raw(shape, out)
}

/// Per-pixel Euclidean length √(y_x² + y_y²).
pub fn pointwise_norm(y: &VectorField) -> ScalarField {
    ScalarField::from_raw(
        y.shape,
        y.x.iter().zip(&y.y).map(|(a, b)| a.hypot(*b)).collect(),
    )
}

/// Weighted isotropic total variation, `weight · Σ |∇f|`.
pub fn tv(f: &ScalarField, weight: f64) -> f64 {
    weight * pointwise_norm(&grad(f)).sum()
}

/// The double phase difference (φ₁ − φ₂) − (φ₃ − φ₄).
pub fn double_difference(phases: &[ScalarField; 4]) -> Result<ScalarField> {
    let shape = phases[0].shape;
    for p in &phases[1..] {
        shape.ensure_same(&p.shape)?;
    }
    let [a, b, c, d] = phases;
    Ok(ScalarField::from_raw(
        shape,
        (0..shape.len())
            .map(|i| (a.values[i] - b.values[i]) - (c.values[i] - d.values[i]))
            .collect(),
    ))
}

/// Smooth phase regularizer
/// `(1/2τ)·(η‖∇((φ₁−φ₂)−(φ₃−φ₄))‖² + Σ‖φ_l‖²)`.
pub fn phase_coupling_energy(phases: &[ScalarField; 4], eta: f64, tau: f64) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(Error::param("eta", "must be nonnegative"));
    }
    if !(tau > 0.0) {
        return Err(Error::param("tau", "must be positive"));
    }
    let diff = double_difference(phases)?;
    let smooth = grad(&diff).norm_sq();
    let prox: f64 = phases.iter().map(ScalarField::norm_sq).sum();
    Ok((eta * smooth + prox) / (2.0 * tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(shape: Shape, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_fn(shape, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_vector(shape: Shape, rng: &mut ChaCha8Rng) -> VectorField {
        let x = (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        VectorField::from_raw(shape, x, y)
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(ScalarField::new(1, 4, vec![0.0; 4]).is_err());
        assert!(ScalarField::new(4, 1, vec![0.0; 4]).is_err());
        assert!(ScalarField::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ScalarField::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn grad_of_constant_is_zero() {
        let f = ScalarField::filled(Shape::new(7, 5).unwrap(), 3.25);
        let g = grad(&f);
        assert!(g.x().iter().chain(g.y()).all(|&v| v == 0.0));
    }

    #[test]
    fn grad_two_by_two() {
        let f = ScalarField::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let g = grad(&f);
        assert_eq!(g.x(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(g.y(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn adjoint_identity_random_pairs() {
        let shape = Shape::new(8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f = random_field(shape, &mut rng);
            let y = random_vector(shape, &mut rng);
            let lhs = grad(&f).dot(&y);
            let rhs = f.dot(&grad_adjoint(&y));
            assert!((lhs - rhs).abs() <= 1e-12 * f.norm() * y.norm_sq().sqrt());
        }
    }

    #[test]
    fn adjoint_of_zero_is_zero() {
        let shape = Shape::new(4, 6).unwrap();
        assert_eq!(grad_adjoint(&VectorField::zeros(shape)), ScalarField::zeros(shape));
    }

    #[test]
    fn grad_adjoint_grad_is_neumann_laplacian_stencil() {
        // ∇ᵀ∇ is the negative 5-point Laplacian; on an interior delta the
        // stencil is 4 at the center and -1 at the four neighbours.
        let shape = Shape::new(5, 5).unwrap();
        let delta = ScalarField::from_fn(shape, |x, y| if (x, y) == (2, 2) { 1.0 } else { 0.0 });
        let lap = grad_adjoint(&grad(&delta));
        let expected = ScalarField::from_fn(shape, |x, y| match (x, y) {
            (2, 2) => 4.0,
            (1, 2) | (3, 2) | (2, 1) | (2, 3) => -1.0,
            _ => 0.0,
        });
        assert_eq!(lap, expected);

        // Corner delta: only two neighbours under the Neumann stencil.
        let corner = ScalarField::from_fn(shape, |x, y| if (x, y) == (0, 0) { 1.0 } else { 0.0 });
        let lap = grad_adjoint(&grad(&corner));
        assert_eq!(lap.get(0, 0), 2.0);
        assert_eq!(lap.get(1, 0), -1.0);
        assert_eq!(lap.get(0, 1), -1.0);
        assert!((lap.sum()).abs() < 1e-15);
    }

    #[test]
    fn pointwise_norm_examples() {
        let shape = Shape::new(3, 3).unwrap();
        let v = VectorField::from_raw(shape, vec![3.0; 9], vec![4.0; 9]);
        assert!(pointwise_norm(&v).values().iter().all(|&n| n == 5.0));
        assert_eq!(pointwise_norm(&VectorField::zeros(shape)), ScalarField::zeros(shape));
        let v = VectorField::from_raw(shape, vec![1.0; 9], vec![1.0; 9]);
        assert!(pointwise_norm(&v)
            .values()
            .iter()
            .all(|&n| (n - std::f64::consts::SQRT_2).abs() < 1e-12));
    }

    #[test]
    fn tv_examples() {
        let c = ScalarField::filled(Shape::new(6, 4).unwrap(), -2.0);
        assert_eq!(tv(&c, 3.0), 0.0);
        let f = ScalarField::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(tv(&f, 1.0), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_field(Shape::new(9, 7).unwrap(), &mut rng);
        let a = 0.37;
        assert!((tv(&r, 2.0 * a) - 2.0 * tv(&r, a)).abs() < 1e-12);
    }

    #[test]
    fn phase_coupling_energy_examples() {
        let shape = Shape::new(4, 4).unwrap();
        let zero = ScalarField::zeros(shape);
        let z = [zero.clone(), zero.clone(), zero.clone(), zero];
        assert_eq!(phase_coupling_energy(&z, 1.0, 1.0).unwrap(), 0.0);

        let c = ScalarField::filled(shape, 0.7);
        let p = [c.clone(), c.clone(), c.clone(), c];
        let tau = 0.5;
        let expected = 4.0 * 16.0 * 0.49 / (2.0 * tau);
        assert!((phase_coupling_energy(&p, 3.0, tau).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn phase_coupling_energy_matches_scalar_loop() {
        let shape = Shape::new(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phases: [ScalarField; 4] = std::array::from_fn(|_| random_field(shape, &mut rng));
        let (eta, tau) = (1.0, 1.0);

        // Naive double loop over pixels.
        let w = 4;
        let h = 4;
        let d = |x: usize, y: usize| {
            let g = |l: usize| phases[l].get(x, y);
            (g(0) - g(1)) - (g(2) - g(3))
        };
        let mut smooth = 0.0;
        let mut prox = 0.0;
        for y in 0..h {
            for x in 0..w {
                let dx = if x + 1 < w { d(x + 1, y) - d(x, y) } else { 0.0 };
                let dy = if y + 1 < h { d(x, y + 1) - d(x, y) } else { 0.0 };
                smooth += dx * dx + dy * dy;
                for p in &phases {
                    prox += p.get(x, y) * p.get(x, y);
                }
            }
        }
        let oracle = (eta * smooth + prox) / (2.0 * tau);
        let got = phase_coupling_energy(&phases, eta, tau).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn phase_coupling_energy_rejects_bad_tau() {
        let shape = Shape::new(2, 2).unwrap();
        let z = ScalarField::zeros(shape);
        let p = [z.clone(), z.clone(), z.clone(), z];
        assert!(phase_coupling_energy(&p, 1.0, 0.0).is_err());
    }
}
