use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{KSpaceChannel, SamplingMask};
use crate::grid::Shape;

/// Fixed channel order of a [`MeasurementSet`].
pub const CHANNEL_NAMES: [&str; 4] = ["flow+", "flow-", "noflow+", "noflow-"];

/// Velocity component encoded by a measurement set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
    Z,
}

impl Component {
    pub fn as_str(&self) -> &'static str {
        match self {
            Component::X => "x",
            Component::Y => "y",
            Component::Z => "z",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Component::X),
            "y" => Ok(Component::Y),
            "z" => Ok(Component::Z),
            other => Err(Error::param("component", format!("unknown component `{other}`"))),
        }
    }
}

/// The four acquisitions (flow+, flow−, noflow+, noflow−) for one velocity component.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    channels: [KSpaceChannel; 4],
    zeta: f64,
    component: Component,
}

impl MeasurementSet {
    pub fn new(channels: Vec<KSpaceChannel>, zeta: f64, component: Component) -> Result<Self> {
        if channels.len() != 4 {
            return Err(Error::param(
                "channels",
                format!("expected 4 channels, got {}", channels.len()),
            ));
        }
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::param("zeta", "must be positive"));
        }
        let shape = channels[0].shape();
        for c in &channels[1..] {
            shape.ensure_same(&c.shape())?;
        }
        let channels: [KSpaceChannel; 4] = channels
            .try_into()
            .map_err(|_| Error::param("channels", "expected 4 channels"))?;
        Ok(Self {
            channels,
            zeta,
            component,
        })
    }

    pub fn channels(&self) -> &[KSpaceChannel; 4] {
        &self.channels
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn component(&self) -> Component {
        self.component
    }

    pub fn shape(&self) -> Shape {
        self.channels[0].shape()
    }

    /// True when all four channels share one mask.
    pub fn shared_mask(&self) -> bool {
        self.channels
            .iter()
            .all(|c| Arc::ptr_eq(c.mask(), self.channels[0].mask()) || c.mask() == self.channels[0].mask())
    }

    pub fn mask(&self, channel: usize) -> &Arc<SamplingMask> {
        self.channels[channel].mask()
    }

    /// Noise standard deviation per real component (largest across channels).
    pub fn noise_sigma(&self) -> f64 {
        self.channels
            .iter()
            .map(KSpaceChannel::noise_sigma)
            .fold(0.0, f64::max)
    }

    /// Total number of complex samples across the four channels.
    pub fn total_samples(&self) -> usize {
        self.channels.iter().map(|c| c.samples().len()).sum()
    }

    pub fn map_channels(&self, f: impl Fn(&KSpaceChannel) -> KSpaceChannel) -> Self {
        Self {
            channels: std::array::from_fn(|i| f(&self.channels[i])),
            zeta: self.zeta,
            component: self.component,
        }
    }
}
