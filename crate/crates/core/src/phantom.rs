//! Rising-sphere phantom in Stokes flow and synthesis of the four
//! velocity-encoded k-space channels.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{Fft2, KSpaceChannel, SampledFourier, SamplingMask};
use crate::grid::{ComplexField, ScalarField, Shape};
use crate::measurement::{Component, MeasurementSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    /// Sphere center (x, z) in pixels; z runs along rows.
    pub center: (f64, f64),
    pub radius: f64,
    /// Rise speed along +z.
    pub rise_speed: f64,
    pub c_fluid: f64,
    pub c_bubble: f64,
    /// Peak absolute value of the background phase, radians.
    pub background_amplitude: f64,
    /// Half-width of the random k-space block the background is drawn from.
    pub background_cutoff: usize,
    /// Radians of phase per unit velocity.
    pub zeta: f64,
    pub frames: usize,
    /// Center displacement per frame, pixels.
    pub displacement: (f64, f64),
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            center: (32.0, 24.0),
            radius: 8.0,
            rise_speed: 1.0,
            c_fluid: 1.0,
            c_bubble: 0.2,
            background_amplitude: 1.0,
            background_cutoff: 2,
            zeta: 1.0,
            frames: 8,
            displacement: (0.0, 2.0),
        }
    }
}

impl PhantomSpec {
    pub fn shape(&self) -> Result<Shape> {
        Shape::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape()?;
        if !(self.radius > 1.0) {
            return Err(Error::param("radius", "must exceed 1 pixel"));
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(Error::param("zeta", "must be positive"));
        }
        if !self.rise_speed.is_finite() {
            return Err(Error::param("rise_speed", "must be finite"));
        }
        if self.c_fluid == self.c_bubble || self.c_fluid < 0.0 || self.c_bubble < 0.0 {
            return Err(Error::param("levels", "c_fluid and c_bubble must be distinct and nonnegative"));
        }
        if !(self.background_amplitude >= 0.0) {
            return Err(Error::param("background_amplitude", "must be nonnegative"));
        }
        if self.frames == 0 {
            return Err(Error::param("frames", "must be at least 1"));
        }
        Ok(())
    }

    /// Sphere center of frame `frame`.
    pub fn center_at(&self, frame: usize) -> (f64, f64) {
        (
            self.center.0 + frame as f64 * self.displacement.0,
            self.center.1 + frame as f64 * self.displacement.1,
        )
    }

    fn at_frame(&self, frame: usize) -> Result<PhantomSpec> {
        let (x0, z0) = self.center_at(frame);
        let r = self.radius;
        if x0 - r < 0.0 || z0 - r < 0.0 || x0 + r > (self.width - 1) as f64 || z0 + r > (self.height - 1) as f64 {
            return Err(Error::OutOfGrid(format!(
                "frame {frame}: sphere at ({x0}, {z0}) with radius {r} does not fit a {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(PhantomSpec {
            center: (x0, z0),
            ..self.clone()
        })
    }
}

/// Exterior Stokes field of a rigid sphere translating at `U ẑ`, sampled on
/// the plane through its center. Zero inside the sphere.
pub fn stokes_velocity(spec: &PhantomSpec) -> Result<(ScalarField, ScalarField)> {
    spec.validate()?;
    let shape = spec.shape()?;
    let (x0, z0) = spec.center;
    let (r0, u) = (spec.radius, spec.rise_speed);
    let eval = |x: usize, z: usize| -> (f64, f64) {
        let dx = x as f64 - x0;
        let dz = z as f64 - z0;
        let r = dx.hypot(dz);
        if r < r0 {
            return (0.0, 0.0);
        }
        let (s, c) = (dx / r, dz / r);
        let q = r0 / r;
        let a = 1.5 * q - 0.5 * q.powi(3);
        let b = 0.75 * q + 0.25 * q.powi(3);
        (u * s * c * (a - b), u * (c * c * a + s * s * b))
    };
    let vx = ScalarField::from_fn(shape, |x, z| eval(x, z).0);
    let vz = ScalarField::from_fn(shape, |x, z| eval(x, z).1);
    Ok((vx, vz))
}

/// Smooth real background phase with peak magnitude `amplitude`.
pub fn background_phase(shape: Shape, amplitude: f64, cutoff: usize, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (cx, cy) = (shape.width / 2, shape.height / 2);
    let mut k = vec![Complex64::new(0.0, 0.0); shape.len()];
    for y in 0..shape.height {
        for x in 0..shape.width {
            if x.abs_diff(cx) <= cutoff && y.abs_diff(cy) <= cutoff {
                k[shape.index(x, y)] = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
    }
    Fft2::new(shape).inverse_in_place(&mut k);
    let re: Vec<f64> = k.iter().map(|c| c.re).collect();
    let peak = re.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
    ScalarField::from_raw(shape, re.into_iter().map(|v| v * scale).collect())
}

/// Noise-free fields of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub magnitude: ScalarField,
    pub velocity_x: ScalarField,
    pub velocity_z: ScalarField,
    pub background: ScalarField,
    /// Encoded component.
    pub component: Component,
    /// Phases of (flow+, flow−, noflow+, noflow−) for `component`.
    pub phases: [ScalarField; 4],
    /// True inside the sphere.
    pub labels: Vec<bool>,
    pub zeta: f64,
}

impl GroundTruth {
    /// Velocity of the encoded component.
    pub fn velocity(&self) -> &ScalarField {
        match self.component {
            Component::X => &self.velocity_x,
            _ => &self.velocity_z,
        }
    }

    /// Complement of the sphere labels.
    pub fn fluid_region(&self) -> Vec<bool> {
        self.labels.iter().map(|&b| !b).collect()
    }

    pub fn images(&self) -> [ComplexField; 4] {
        std::array::from_fn(|l| ComplexField::from_polar(&self.magnitude, &self.phases[l]).expect("same shape"))
    }
}

/// Builds the noise-free truth of one frame for one component.
pub fn ground_truth(spec: &PhantomSpec, component: Component, seed: u64) -> Result<GroundTruth> {
    spec.validate()?;
    let shape = spec.shape()?;
    let (vx, vz) = stokes_velocity(spec)?;
    let vmax = vx.max_abs().max(vz.max_abs());
    let flow_peak = spec.zeta * vmax;
    if flow_peak > FRAC_PI_2 {
        return Err(Error::PhaseWrap {
            value: flow_peak,
            limit: FRAC_PI_2,
        });
    }
    if flow_peak + spec.background_amplitude >= PI {
        return Err(Error::PhaseWrap {
            value: flow_peak + spec.background_amplitude,
            limit: PI,
        });
    }
    let v = match component {
        Component::X => &vx,
        Component::Z => &vz,
        Component::Y => {
            return Err(Error::param("component", "the phantom encodes the in-plane components x and z"))
        }
    };
    let bg = background_phase(shape, spec.background_amplitude, spec.background_cutoff, seed);
    let flow = v.map(|a| spec.zeta * a);
    let phases = [
        bg.zip_map(&flow, |b, f| b + f)?,
        bg.zip_map(&flow, |b, f| b - f)?,
        bg.clone(),
        bg.clone(),
    ];
    let (x0, z0) = spec.center;
    let labels: Vec<bool> = (0..shape.len())
        .map(|i| {
            let (x, z) = ((i % shape.width) as f64, (i / shape.width) as f64);
            (x - x0).hypot(z - z0) < spec.radius
        })
        .collect();
    let magnitude = ScalarField::from_raw(
        shape,
        labels
            .iter()
            .map(|&inside| if inside { spec.c_bubble } else { spec.c_fluid })
            .collect(),
    );
    Ok(GroundTruth {
        magnitude,
        velocity_x: vx,
        velocity_z: vz,
        background: bg,
        component,
        phases,
        labels,
        zeta: spec.zeta,
    })
}

fn noise_stream(frame: usize, component: Component, channel: usize) -> u64 {
    let c = match component {
        Component::X => 0,
        Component::Y => 1,
        Component::Z => 2,
    };
    1 + (frame as u64) * 16 + c * 4 + channel as u64
}

fn synthesize_frame(
    spec: &PhantomSpec,
    mask: &Arc<SamplingMask>,
    sigma: f64,
    seed: u64,
    component: Component,
    frame: usize,
) -> Result<(MeasurementSet, GroundTruth)> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", "must be nonnegative"));
    }
    let truth = ground_truth(spec, component, seed)?;
    truth.magnitude.shape().ensure_same(&mask.shape())?;
    let op = SampledFourier::new(mask.clone());
    let images = truth.images();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let channels = images
        .iter()
        .enumerate()
        .map(|(l, img)| {
            let mut samples = op.forward(img)?;
            if sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(noise_stream(frame, component, l));
                for s in &mut samples {
                    *s += Complex64::new(sigma * normal.sample(&mut rng), sigma * normal.sample(&mut rng));
                }
            }
            KSpaceChannel::new(samples, mask.clone(), sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((MeasurementSet::new(channels, spec.zeta, component)?, truth))
}

/// Four noisy undersampled channels of the phantom plus its ground truth.
pub fn synthesize_channels(
    spec: &PhantomSpec,
    mask: Arc<SamplingMask>,
    sigma: f64,
    seed: u64,
    component: Component,
) -> Result<(MeasurementSet, GroundTruth)> {
    synthesize_frame(spec, &mask, sigma, seed, component, 0)
}

/// One dataset per frame, the sphere advancing by `displacement` each frame.
pub fn generate_sequence(
    spec: &PhantomSpec,
    mask: Arc<SamplingMask>,
    sigma: f64,
    seed: u64,
    component: Component,
) -> Result<Vec<(MeasurementSet, GroundTruth)>> {
    spec.validate()?;
    let frames: Vec<PhantomSpec> = (0..spec.frames).map(|f| spec.at_frame(f)).collect::<Result<_>>()?;
    frames
        .par_iter()
        .enumerate()
        .map(|(f, s)| synthesize_frame(s, &mask, sigma, seed, component, f))
        .collect()
}

/// Noise std per real component giving the requested data SNR in dB,
/// with SNR = 20 log10(‖A r‖ / E‖noise‖) pooled over the four channels.
pub fn sigma_for_snr(spec: &PhantomSpec, mask: &Arc<SamplingMask>, component: Component, seed: u64, snr_db: f64) -> Result<f64> {
    let truth = ground_truth(spec, component, seed)?;
    let op = SampledFourier::new(mask.clone());
    let mut signal = 0.0;
    for img in truth.images() {
        signal += op.forward(&img)?.iter().map(|c| c.norm_sqr()).sum::<f64>();
    }
    let m = 4 * mask.count();
    Ok(signal.sqrt() / (10f64.powf(snr_db / 20.0) * (2.0 * m as f64).sqrt()))
}
