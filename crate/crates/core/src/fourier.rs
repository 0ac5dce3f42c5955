//! Centered unitary 2D DFT, Cartesian sampling masks, and the subsampled
//! Fourier operator `A = S·F` with its adjoint.
//!
//! k-space layout: the DC coefficient sits at pixel `(width/2, height/2)`
//! (integer division). Measured samples are stored in row-major order of the
//! selected k-space locations.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Shape};

/// Default half-width of the fully sampled k-space center block.
pub const DEFAULT_CENTER_RADIUS: usize = 4;

/// Planned centered, unitary 2D FFT for one grid shape.
#[derive(Clone)]
pub struct Fft2 {
    shape: Shape,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("shape", &self.shape).finish()
    }
}

impl Fft2 {
    pub fn new(shape: Shape) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            shape,
            row_fwd: planner.plan_fft_forward(shape.width),
            row_inv: planner.plan_fft_inverse(shape.width),
            col_fwd: planner.plan_fft_forward(shape.height),
            col_inv: planner.plan_fft_inverse(shape.height),
            scale: 1.0 / (shape.len() as f64).sqrt(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// In-place centered unitary forward transform.
    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// In-place centered unitary inverse transform.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub fn forward(&self, f: &ComplexField) -> ComplexField {
        let mut data = f.values().to_vec();
        self.forward_in_place(&mut data);
        ComplexField::from_raw(self.shape, data)
    }

    pub fn inverse(&self, f: &ComplexField) -> ComplexField {
        let mut data = f.values().to_vec();
        self.inverse_in_place(&mut data);
        ComplexField::from_raw(self.shape, data)
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let (w, h) = (self.shape.width, self.shape.height);
        assert_eq!(data.len(), w * h, "buffer does not match FFT shape");
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };

        // ifftshift, transforming rows in the same pass.
        let mut shifted = vec![Complex64::new(0.0, 0.0); w * h];
        shift_2d(data, &mut shifted, w, h, false);
        row.process(&mut shifted);

        let mut transposed = vec![Complex64::new(0.0, 0.0); w * h];
        transpose(&shifted, &mut transposed, w, h);
        col.process(&mut transposed);
        transpose(&transposed, &mut shifted, h, w);

        shift_2d(&shifted, data, w, h, true);
        for v in data.iter_mut() {
            *v *= self.scale;
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], w: usize, h: usize) {
    for y in 0..h {
        for x in 0..w {
            dst[x * h + y] = src[y * w + x];
        }
    }
}

/// `fftshift` (index 0 → n/2) when `forward`, otherwise `ifftshift`.
fn shift_2d(src: &[Complex64], dst: &mut [Complex64], w: usize, h: usize, forward: bool) {
    let (sx, sy) = (w / 2, h / 2);
    for y in 0..h {
        for x in 0..w {
            if forward {
                dst[((y + sy) % h) * w + (x + sx) % w] = src[y * w + x];
            } else {
                dst[y * w + x] = src[((y + sy) % h) * w + (x + sx) % w];
            }
        }
    }
}

/// Centered unitary forward 2D DFT.
pub fn fft2_unitary(f: &ComplexField) -> ComplexField {
    Fft2::new(f.shape()).forward(f)
}

/// Inverse of [`fft2_unitary`].
pub fn ifft2_unitary(f: &ComplexField) -> ComplexField {
    Fft2::new(f.shape()).inverse(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    /// Exactly `round(fraction·n)` locations drawn uniformly without replacement.
    UniformRandom,
    /// Fully sampled center block plus draws whose probability decays with radius.
    VariableDensity,
    /// Lines through the k-space center at golden-angle increments.
    RadialLines,
    /// Fully sampled center block plus uniform draws elsewhere.
    CenterWeighted,
    /// Built from an explicit selection rather than a generator.
    Custom,
}

impl MaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskKind::UniformRandom => "uniform-random",
            MaskKind::VariableDensity => "variable-density",
            MaskKind::RadialLines => "radial-lines",
            MaskKind::CenterWeighted => "center-weighted",
            MaskKind::Custom => "custom",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-random" => Ok(MaskKind::UniformRandom),
            "variable-density" => Ok(MaskKind::VariableDensity),
            "radial-lines" => Ok(MaskKind::RadialLines),
            "center-weighted" => Ok(MaskKind::CenterWeighted),
            "custom" => Ok(MaskKind::Custom),
            other => Err(Error::param("mask kind", format!("unknown kind `{other}`"))),
        }
    }
}

/// Generator settings beyond `(kind, fraction, seed)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskOptions {
    /// Half-width of the fully sampled square center block.
    pub center_radius: usize,
    /// Exponent of the radial density `(1 + ρ)^-decay` for variable density.
    pub decay: f64,
}

impl Default for MaskOptions {
    fn default() -> Self {
        Self {
            center_radius: DEFAULT_CENTER_RADIUS,
            decay: 2.0,
        }
    }
}

/// Boolean k-space selection; defines the sampling operator `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    shape: Shape,
    selected: Vec<bool>,
    indices: Vec<usize>,
    fraction: f64,
    kind: MaskKind,
    seed: u64,
    options: MaskOptions,
}

impl SamplingMask {
    /// Mask from an explicit selection. `fraction` is set to `m / n`.
    pub fn from_selected(shape: Shape, selected: Vec<bool>) -> Result<Self> {
        let fraction = selected.iter().filter(|&&s| s).count() as f64 / shape.len() as f64;
        Self::with_metadata(
            shape,
            selected,
            fraction,
            MaskKind::Custom,
            0,
            MaskOptions::default(),
        )
    }

    pub(crate) fn with_metadata(
        shape: Shape,
        selected: Vec<bool>,
        fraction: f64,
        kind: MaskKind,
        seed: u64,
        options: MaskOptions,
    ) -> Result<Self> {
        if selected.len() != shape.len() {
            return Err(Error::mismatch(shape.len(), selected.len()));
        }
        let indices: Vec<usize> = selected
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
            .collect();
        if indices.is_empty() {
            return Err(Error::param("mask", "selects no coefficients"));
        }
        Ok(Self {
            shape,
            selected,
            indices,
            fraction,
            kind,
            seed,
            options,
        })
    }

    pub fn full(shape: Shape) -> Self {
        Self::with_metadata(
            shape,
            vec![true; shape.len()],
            1.0,
            MaskKind::UniformRandom,
            0,
            MaskOptions::default(),
        )
        .expect("full mask is non-empty")
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    /// Selected k-space locations in scan order (row-major).
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn options(&self) -> MaskOptions {
        self.options
    }

    /// k-space location of the DC coefficient.
    pub fn center(&self) -> (usize, usize) {
        (self.shape.width / 2, self.shape.height / 2)
    }
}

fn target_count(shape: Shape, fraction: f64) -> usize {
    ((fraction * shape.len() as f64).round() as usize).clamp(1, shape.len())
}

/// Pixels of the square center block, ordered by distance to the center.
fn center_block(shape: Shape, radius: usize) -> Vec<usize> {
    let (cx, cy) = (shape.width / 2, shape.height / 2);
    let mut block = Vec::new();
    for y in cy.saturating_sub(radius)..=(cy + radius).min(shape.height - 1) {
        for x in cx.saturating_sub(radius)..=(cx + radius).min(shape.width - 1) {
            block.push(shape.index(x, y));
        }
    }
    sort_by_radius(shape, &mut block);
    block
}

fn radius_of(shape: Shape, i: usize) -> f64 {
    let (cx, cy) = (shape.width / 2, shape.height / 2);
    let (x, y) = (i % shape.width, i / shape.width);
    (x as f64 - cx as f64).hypot(y as f64 - cy as f64)
}

fn sort_by_radius(shape: Shape, idx: &mut [usize]) {
    idx.sort_by(|&a, &b| {
        radius_of(shape, a)
            .total_cmp(&radius_of(shape, b))
            .then(a.cmp(&b))
    });
}

/// Draws a k-space sampling mask. Deterministic in `(shape, kind, fraction, seed, options)`.
pub fn make_mask(
    shape: Shape,
    kind: MaskKind,
    fraction: f64,
    seed: u64,
    options: MaskOptions,
) -> Result<SamplingMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param("fraction", format!("{fraction} not in (0, 1]")));
    }
    let n = shape.len();
    let target = target_count(shape, fraction);
    let mut selected = vec![false; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if target == n {
        selected.fill(true);
    } else {
        match kind {
            MaskKind::UniformRandom => {
                for i in index::sample(&mut rng, n, target) {
                    selected[i] = true;
                }
            }
            MaskKind::CenterWeighted | MaskKind::VariableDensity => {
                let block = center_block(shape, options.center_radius);
                for &i in block.iter().take(target) {
                    selected[i] = true;
                }
                let remaining = target.saturating_sub(block.len());
                if remaining > 0 {
                    let rest: Vec<usize> = (0..n).filter(|&i| !selected[i]).collect();
                    if kind == MaskKind::CenterWeighted {
                        for j in index::sample(&mut rng, rest.len(), remaining) {
                            selected[rest[j]] = true;
                        }
                    } else {
                        // Weighted sampling without replacement: keep the
                        // largest keys ln(U)/w (Efraimidis–Spirakis).
                        let mut keyed: Vec<(f64, usize)> = rest
                            .iter()
                            .map(|&i| {
                                let w = (1.0 + radius_of(shape, i)).powf(-options.decay);
                                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                                (u.ln() / w, i)
                            })
                            .collect();
                        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                        for &(_, i) in keyed.iter().take(remaining) {
                            selected[i] = true;
                        }
                    }
                }
            }
            MaskKind::RadialLines => radial_lines(shape, target, &mut rng, &mut selected),
            MaskKind::Custom => {
                return Err(Error::param("mask kind", "custom masks cannot be generated"))
            }
        }
    }
    SamplingMask::with_metadata(shape, selected, fraction, kind, seed, options)
}

fn radial_lines(shape: Shape, target: usize, rng: &mut ChaCha8Rng, selected: &mut [bool]) {
    let golden = std::f64::consts::PI * (5f64.sqrt() - 1.0) / 2.0;
    let (cx, cy) = (shape.width as f64 / 2.0, shape.height as f64 / 2.0);
    let (cx, cy) = (cx.floor(), cy.floor());
    let reach = (shape.width as f64).hypot(shape.height as f64) / 2.0 + 1.0;
    let mut theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let mut count = 0;
    let max_lines = 8 * (shape.width + shape.height);

    'lines: for _ in 0..max_lines {
        let (dx, dy) = (theta.cos(), theta.sin());
        let steps = (reach * 2.0).ceil() as usize;
        // Walk outward from the center, alternating directions.
        for s in 0..=steps {
            for sign in [1.0, -1.0] {
                if s == 0 && sign < 0.0 {
                    continue;
                }
                let t = sign * s as f64 * 0.5;
                let x = (cx + t * dx).round();
                let y = (cy + t * dy).round();
                if x < 0.0 || y < 0.0 || x >= shape.width as f64 || y >= shape.height as f64 {
                    continue;
                }
                let i = shape.index(x as usize, y as usize);
                if !selected[i] {
                    selected[i] = true;
                    count += 1;
                    if count == target {
                        break 'lines;
                    }
                }
            }
        }
        theta = (theta + golden) % std::f64::consts::PI;
    }

    if count < target {
        let mut rest: Vec<usize> = (0..shape.len()).filter(|&i| !selected[i]).collect();
        sort_by_radius(shape, &mut rest);
        for i in rest.into_iter().take(target - count) {
            selected[i] = true;
        }
    }
}

/// The subsampled Fourier operator `A = S·F` for one mask.
#[derive(Clone, Debug)]
pub struct SampledFourier {
    mask: Arc<SamplingMask>,
    fft: Fft2,
}

impl SampledFourier {
    pub fn new(mask: Arc<SamplingMask>) -> Self {
        let fft = Fft2::new(mask.shape());
        Self { mask, fft }
    }

    pub fn mask(&self) -> &Arc<SamplingMask> {
        &self.mask
    }

    pub fn shape(&self) -> Shape {
        self.mask.shape()
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// `A r`: FFT then gather of the selected coefficients.
    pub fn forward(&self, r: &ComplexField) -> Result<Vec<Complex64>> {
        self.shape().ensure_same(&r.shape())?;
        Ok(self.forward_slice(r.values()))
    }

    pub(crate) fn forward_slice(&self, r: &[Complex64]) -> Vec<Complex64> {
        let mut k = r.to_vec();
        self.fft.forward_in_place(&mut k);
        self.mask.indices().iter().map(|&i| k[i]).collect()
    }

    /// `A* f`: scatter into a zeroed k-space grid then inverse FFT.
    pub fn adjoint(&self, f: &[Complex64]) -> Result<ComplexField> {
        if f.len() != self.mask.count() {
            return Err(Error::mismatch(self.mask.count(), f.len()));
        }
        Ok(ComplexField::from_raw(self.shape(), self.adjoint_slice(f)))
    }

    pub(crate) fn adjoint_slice(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut k = vec![Complex64::new(0.0, 0.0); self.shape().len()];
        for (&i, &v) in self.mask.indices().iter().zip(f) {
            k[i] = v;
        }
        self.fft.inverse_in_place(&mut k);
        k
    }

    /// Residual `A r − f` in k-space.
    pub fn residual(&self, r: &ComplexField, f: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut ar = self.forward(r)?;
        if ar.len() != f.len() {
            return Err(Error::mismatch(ar.len(), f.len()));
        }
        for (a, b) in ar.iter_mut().zip(f) {
            *a -= b;
        }
        Ok(ar)
    }
}

/// `A r` for a single call; prefer [`SampledFourier`] inside loops.
pub fn apply_forward(r: &ComplexField, mask: &SamplingMask) -> Result<Vec<Complex64>> {
    SampledFourier::new(Arc::new(mask.clone())).forward(r)
}

/// `A* f` for a single call; prefer [`SampledFourier`] inside loops.
pub fn apply_adjoint(f: &[Complex64], mask: &SamplingMask) -> Result<ComplexField> {
    SampledFourier::new(Arc::new(mask.clone())).adjoint(f)
}

/// Sampled Fourier coefficients of one acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceChannel {
    samples: Vec<Complex64>,
    mask: Arc<SamplingMask>,
    noise_sigma: f64,
}

impl KSpaceChannel {
    pub fn new(samples: Vec<Complex64>, mask: Arc<SamplingMask>, noise_sigma: f64) -> Result<Self> {
        if samples.len() != mask.count() {
            return Err(Error::mismatch(mask.count(), samples.len()));
        }
        if samples.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Format("non-finite k-space sample".into()));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::param("noise_sigma", "must be nonnegative"));
        }
        Ok(Self {
            samples,
            mask,
            noise_sigma,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn mask(&self) -> &Arc<SamplingMask> {
        &self.mask
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn shape(&self) -> Shape {
        self.mask.shape()
    }

    /// Copy of this channel with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * factor).collect(),
            mask: self.mask.clone(),
            noise_sigma: self.noise_sigma * factor.norm(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_complex(shape: Shape, rng: &mut ChaCha8Rng) -> ComplexField {
        let v = (0..shape.len())
            .map(|_| {
                Complex64::new(
                    StandardNormal.sample(&mut *rng),
                    StandardNormal.sample(&mut *rng),
                )
            })
            .collect();
        ComplexField::from_raw(shape, v)
    }

    #[test]
    fn impulse_at_center_has_flat_spectrum() {
        let shape = Shape::new(8, 8).unwrap();
        let mut f = ComplexField::zeros(shape);
        f.values_mut()[shape.index(4, 4)] = Complex64::new(1.0, 0.0);
        let k = fft2_unitary(&f);
        for c in k.values() {
            assert!((c.norm() - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_maps_to_dc() {
        for (w, h) in [(8, 8), (7, 5), (6, 9)] {
            let shape = Shape::new(w, h).unwrap();
            let one = ComplexField::from_raw(shape, vec![Complex64::new(1.0, 0.0); shape.len()]);
            let k = fft2_unitary(&one);
            let dc = shape.index(w / 2, h / 2);
            for (i, c) in k.values().iter().enumerate() {
                if i == dc {
                    assert!((c.re - (shape.len() as f64).sqrt()).abs() < 1e-12);
                    assert!(c.im.abs() < 1e-12);
                } else {
                    assert!(c.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn roundtrip_and_parseval_on_odd_and_even_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (w, h) in [(8, 8), (5, 7), (16, 6)] {
            let shape = Shape::new(w, h).unwrap();
            let f = random_complex(shape, &mut rng);
            let k = fft2_unitary(&f);
            assert!((k.norm() - f.norm()).abs() <= 1e-12 * f.norm());
            let back = ifft2_unitary(&k);
            for (a, b) in back.values().iter().zip(f.values()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn full_mask_forward_is_flattened_fft() {
        let shape = Shape::new(6, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random_complex(shape, &mut rng);
        let mask = SamplingMask::full(shape);
        let a = apply_forward(&r, &mask).unwrap();
        let k = fft2_unitary(&r);
        assert_eq!(a.len(), shape.len());
        for (x, y) in a.iter().zip(k.values()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn dc_only_mask_of_constant() {
        let shape = Shape::new(8, 8).unwrap();
        let mut sel = vec![false; shape.len()];
        sel[shape.index(4, 4)] = true;
        let mask = SamplingMask::from_selected(shape, sel).unwrap();
        let one = ComplexField::from_raw(shape, vec![Complex64::new(1.0, 0.0); 64]);
        let a = apply_forward(&one, &mask).unwrap();
        assert_eq!(a.len(), 1);
        assert!((a[0].re - 8.0).abs() < 1e-12 && a[0].im.abs() < 1e-12);
    }

    #[test]
    fn forward_adjoint_identities() {
        let shape = Shape::new(12, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mask = make_mask(shape, MaskKind::UniformRandom, 0.3, 9, MaskOptions::default()).unwrap();
        let op = SampledFourier::new(Arc::new(mask.clone()));
        for _ in 0..10 {
            let r = random_complex(shape, &mut rng);
            let f: Vec<Complex64> = (0..mask.count())
                .map(|_| {
                    Complex64::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    )
                })
                .collect();
            let ar = op.forward(&r).unwrap();
            let lhs: Complex64 = ar.iter().zip(&f).map(|(a, b)| a.conj() * b).sum();
            let rhs = r.inner(&op.adjoint(&f).unwrap());
            let scale = r.norm() * f.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            assert!((lhs - rhs).norm() <= 1e-12 * scale);

            // A A* = I on the sampled coefficients.
            let back = op.forward(&op.adjoint(&f).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&f) {
                assert!((a - b).norm() < 1e-12);
            }
            // ‖A r‖ ≤ ‖r‖.
            let n: f64 = ar.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            assert!(n <= r.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn adjoint_of_zero_and_length_errors() {
        let shape = Shape::new(8, 8).unwrap();
        let mask = make_mask(shape, MaskKind::CenterWeighted, 0.25, 1, MaskOptions::default()).unwrap();
        let z = apply_adjoint(&vec![Complex64::new(0.0, 0.0); mask.count()], &mask).unwrap();
        assert_eq!(z.norm(), 0.0);
        assert!(apply_adjoint(&[Complex64::new(0.0, 0.0)], &mask).is_err());
        let wrong = ComplexField::zeros(Shape::new(4, 8).unwrap());
        assert!(apply_forward(&wrong, &mask).is_err());
    }

    #[test]
    fn full_sampling_inverts_exactly() {
        let shape = Shape::new(8, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = random_complex(shape, &mut rng);
        let mask = SamplingMask::full(shape);
        let back = apply_adjoint(&apply_forward(&r, &mask).unwrap(), &mask).unwrap();
        for (a, b) in back.values().iter().zip(r.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn mask_counts_and_determinism() {
        let shape = Shape::new(64, 64).unwrap();
        let opts = MaskOptions::default();
        let m = make_mask(shape, MaskKind::UniformRandom, 0.11, 7, opts).unwrap();
        assert_eq!(m.count(), 451);
        for kind in [
            MaskKind::UniformRandom,
            MaskKind::VariableDensity,
            MaskKind::RadialLines,
            MaskKind::CenterWeighted,
        ] {
            let a = make_mask(shape, kind, 0.11, 7, opts).unwrap();
            let b = make_mask(shape, kind, 0.11, 7, opts).unwrap();
            assert_eq!(a, b, "{kind}");
            assert!((a.count() as i64 - 451).abs() <= 1, "{kind}: {}", a.count());
            let full = make_mask(shape, kind, 1.0, 3, opts).unwrap();
            assert!(full.selected().iter().all(|&s| s));
            let c = make_mask(shape, kind, 0.11, 8, opts).unwrap();
            assert_ne!(a.selected(), c.selected(), "{kind} ignores the seed");
        }
    }

    #[test]
    fn center_block_is_fully_sampled() {
        let shape = Shape::new(32, 32).unwrap();
        for kind in [MaskKind::VariableDensity, MaskKind::CenterWeighted] {
            let m = make_mask(shape, kind, 0.2, 5, MaskOptions::default()).unwrap();
            for y in 12..=20 {
                for x in 12..=20 {
                    assert!(m.selected()[shape.index(x, y)], "{kind} misses ({x},{y})");
                }
            }
        }
        let m = make_mask(shape, MaskKind::RadialLines, 0.1, 5, MaskOptions::default()).unwrap();
        assert!(m.selected()[shape.index(16, 16)]);
    }

    #[test]
    fn tiny_fraction_keeps_at_least_one_sample() {
        let shape = Shape::new(8, 8).unwrap();
        let m = make_mask(shape, MaskKind::VariableDensity, 1e-6, 0, MaskOptions::default()).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.selected()[shape.index(4, 4)]);
    }

    #[test]
    fn fraction_out_of_range_is_rejected() {
        let shape = Shape::new(8, 8).unwrap();
        for f in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(make_mask(shape, MaskKind::UniformRandom, f, 0, MaskOptions::default()).is_err());
        }
    }

    #[test]
    fn channel_length_must_match_mask() {
        let shape = Shape::new(4, 4).unwrap();
        let mask = Arc::new(SamplingMask::full(shape));
        assert!(KSpaceChannel::new(vec![Complex64::new(0.0, 0.0); 3], mask.clone(), 0.0).is_err());
        assert!(KSpaceChannel::new(vec![Complex64::new(0.0, 0.0); 16], mask, 0.0).is_ok());
    }
}
