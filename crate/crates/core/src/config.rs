//! Plain-text run configuration.
//!
//! One `key = value` pair per line; `#` starts a comment; blank lines are
//! ignored. Unknown keys are rejected. Command-line flags are merged on top
//! with [`Config::merge`], so they win over file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fourier::{MaskKind, MaskOptions};
use crate::joint::{JointParams, PhaseInit, StopRule};
use crate::measurement::Component;
use crate::pdhg::PdhgConfig;
use crate::phantom::PhantomSpec;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("width", "grid width in pixels"),
    ("height", "grid height in pixels"),
    ("center_x", "sphere center column"),
    ("center_z", "sphere center row"),
    ("radius", "sphere radius in pixels"),
    ("rise_speed", "sphere speed along +z"),
    ("c_fluid", "fluid magnitude"),
    ("c_bubble", "sphere magnitude"),
    ("background_amplitude", "peak background phase, radians"),
    ("background_cutoff", "half-width of the background spectrum block"),
    ("zeta", "radians of phase per unit velocity"),
    ("frames", "number of frames"),
    ("displacement_x", "center shift per frame along x"),
    ("displacement_z", "center shift per frame along z"),
    ("component", "encoded velocity component: x, z or both"),
    ("seed", "master seed for mask, background and noise"),
    ("mask_kind", "uniform-random, variable-density, radial-lines or center-weighted"),
    ("fraction", "sampled fraction of k-space"),
    ("center_radius", "half-width of the fully sampled center block"),
    ("decay", "radial density exponent for variable-density masks"),
    ("sigma", "noise std per real component; overrides snr_db"),
    ("snr_db", "target data SNR in dB when sigma is unset"),
    ("seq_alpha", "complex TV weight of the sequential method"),
    ("seq_iters", "PDHG iterations of the sequential method"),
    ("seq_tol", "PDHG relative tolerance of the sequential method"),
    ("alpha", "magnitude TV weight"),
    ("beta", "label TV weight"),
    ("delta", "segmentation coupling weight"),
    ("eta", "phase smoothing weight"),
    ("tau", "phase proximal scale"),
    ("c1", "magnitude level of the v = 1 region"),
    ("c2", "magnitude level of the v = 0 region"),
    ("c_update", "recompute c1, c2 every outer iteration (true/false)"),
    ("outer_max", "maximum outer iterations"),
    ("inner_iters", "PDHG iterations per u and v step"),
    ("inner_tol", "PDHG relative tolerance per u and v step"),
    ("stop_rule", "fixed or discrepancy"),
    ("nu", "discrepancy factor"),
    ("stop_sigma", "noise level for the discrepancy rule; defaults to the data's"),
    ("phase_init", "zerofill or lowpass:<radius>"),
    ("cg_tol", "CG relative tolerance of the phase step"),
    ("cg_max_iters", "CG iteration cap of the phase step"),
];

pub const DEFAULT_SEQ_ALPHA: f64 = 0.02;
pub const DEFAULT_SNR_DB: f64 = 30.0;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if cfg.entries.contains_key(key) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            cfg.set(key, value).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let value = value.into();
        if value.is_empty() {
            return Err(Error::Config(format!("empty value for `{key}`")));
        }
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    /// Overlays `other`; its values win.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("cannot parse `{v}` for `{key}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Canonical text form: sorted keys, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_or("seed", 0)
    }

    pub fn phantom_spec(&self) -> Result<PhantomSpec> {
        let d = PhantomSpec::default();
        let width = self.get_or("width", d.width)?;
        let height = self.get_or("height", d.height)?;
        // an unset center keeps its relative position on a resized grid
        let cx = d.center.0 * width as f64 / d.width as f64;
        let cz = d.center.1 * height as f64 / d.height as f64;
        let spec = PhantomSpec {
            width,
            height,
            center: (self.get_or("center_x", cx)?, self.get_or("center_z", cz)?),
            radius: self.get_or("radius", d.radius)?,
            rise_speed: self.get_or("rise_speed", d.rise_speed)?,
            c_fluid: self.get_or("c_fluid", d.c_fluid)?,
            c_bubble: self.get_or("c_bubble", d.c_bubble)?,
            background_amplitude: self.get_or("background_amplitude", d.background_amplitude)?,
            background_cutoff: self.get_or("background_cutoff", d.background_cutoff)?,
            zeta: self.get_or("zeta", d.zeta)?,
            frames: self.get_or("frames", d.frames)?,
            displacement: (
                self.get_or("displacement_x", d.displacement.0)?,
                self.get_or("displacement_z", d.displacement.1)?,
            ),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn components(&self) -> Result<Vec<Component>> {
        match self.raw("component").unwrap_or("z") {
            "both" => Ok(vec![Component::X, Component::Z]),
            "x" => Ok(vec![Component::X]),
            "z" => Ok(vec![Component::Z]),
            other => Err(Error::Config(format!("component must be x, z or both, got `{other}`"))),
        }
    }

    /// `(kind, fraction, options)` of the sampling mask.
    pub fn mask_settings(&self) -> Result<(MaskKind, f64, MaskOptions)> {
        let d = MaskOptions::default();
        let kind = match self.raw("mask_kind") {
            Some(s) => s.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            None => MaskKind::CenterWeighted,
        };
        let options = MaskOptions {
            center_radius: self.get_or("center_radius", d.center_radius)?,
            decay: self.get_or("decay", d.decay)?,
        };
        Ok((kind, self.get_or("fraction", 0.11)?, options))
    }

    /// `(alpha, solver settings)` of the sequential method.
    pub fn sequential_settings(&self) -> Result<(f64, PdhgConfig)> {
        let alpha = self.get_or("seq_alpha", DEFAULT_SEQ_ALPHA)?;
        if !(alpha > 0.0) {
            return Err(Error::Config("seq_alpha must be positive".into()));
        }
        let cfg = PdhgConfig::with_iters(self.get_or("seq_iters", 2000)?, self.get_or("seq_tol", 1e-6)?);
        cfg.steps(1.0)?;
        Ok((alpha, cfg))
    }

    pub fn joint_params(&self) -> Result<JointParams> {
        let d = JointParams::default();
        let stop_rule = match self.raw("stop_rule").unwrap_or("discrepancy") {
            "fixed" => StopRule::FixedIters,
            "discrepancy" => StopRule::Discrepancy {
                nu: self.get_or("nu", 1.0)?,
                sigma: self.get("stop_sigma")?,
            },
            other => return Err(Error::Config(format!("stop_rule must be fixed or discrepancy, got `{other}`"))),
        };
        let phase_init = match self.raw("phase_init").unwrap_or("zerofill") {
            "zerofill" => PhaseInit::ZeroFill,
            s => match s.strip_prefix("lowpass:").map(str::parse) {
                Some(Ok(radius)) => PhaseInit::LowPass { radius },
                _ => return Err(Error::Config(format!("phase_init must be zerofill or lowpass:<radius>, got `{s}`"))),
            },
        };
        let p = JointParams {
            alpha: self.get_or("alpha", d.alpha)?,
            beta: self.get_or("beta", d.beta)?,
            delta: self.get_or("delta", d.delta)?,
            eta: self.get_or("eta", d.eta)?,
            tau: self.get_or("tau", d.tau)?,
            c1: self.get_or("c1", d.c1)?,
            c2: self.get_or("c2", d.c2)?,
            c_update: self.get_or("c_update", d.c_update)?,
            outer_max: self.get_or("outer_max", d.outer_max)?,
            inner: PdhgConfig::with_iters(
                self.get_or("inner_iters", d.inner.max_iters)?,
                self.get_or("inner_tol", d.inner.rel_tol)?,
            ),
            stop_rule,
            phase_init,
            cg_tol: self.get_or("cg_tol", d.cg_tol)?,
            cg_max_iters: self.get_or("cg_max_iters", d.cg_max_iters)?,
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    /// Noise level: `sigma` if given, else `None` (derive from `snr_db`).
    pub fn sigma(&self) -> Result<Option<f64>> {
        let s: Option<f64> = self.get("sigma")?;
        if s.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("sigma must be a finite nonnegative number".into()));
        }
        Ok(s)
    }

    pub fn snr_db(&self) -> Result<f64> {
        self.get_or("snr_db", DEFAULT_SNR_DB)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let cfg = Config::parse("# run\n\nalpha = 0.1   # magnitudes\nseed=7\n").unwrap();
        assert_eq!(cfg.get::<f64>("alpha").unwrap(), Some(0.1));
        assert_eq!(cfg.seed().unwrap(), 7);
        assert_eq!(cfg.to_text(), "alpha = 0.1\nseed = 7\n");
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(Config::parse("alpha 0.1"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("seed = 1\nseed = 2"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("seed ="), Err(Error::Config(_))));
    }

    #[test]
    fn flags_win_over_file() {
        let mut cfg = Config::parse("alpha = 0.1\nbeta = 0.2").unwrap();
        let mut flags = Config::new();
        flags.set("alpha", "0.3").unwrap();
        cfg.merge(&flags);
        let p = cfg.joint_params().unwrap();
        assert_eq!((p.alpha, p.beta), (0.3, 0.2));
    }

    #[test]
    fn defaults_match_library_defaults() {
        let cfg = Config::new();
        assert_eq!(cfg.joint_params().unwrap(), JointParams::default());
        assert_eq!(cfg.phantom_spec().unwrap(), PhantomSpec::default());
        assert_eq!(cfg.components().unwrap(), vec![Component::Z]);
    }

    #[test]
    fn parses_rules_and_inits() {
        let cfg = Config::parse("stop_rule = fixed\nphase_init = lowpass:6").unwrap();
        let p = cfg.joint_params().unwrap();
        assert_eq!(p.stop_rule, StopRule::FixedIters);
        assert_eq!(p.phase_init, PhaseInit::LowPass { radius: 6 });
        assert!(Config::parse("phase_init = lowpass:x").unwrap().joint_params().is_err());
        assert!(Config::parse("alpha = -1").unwrap().joint_params().is_err());
        assert!(Config::parse("alpha = abc").unwrap().joint_params().is_err());
    }

    #[test]
    fn unset_center_follows_grid_size() {
        let cfg = Config::parse("width = 32\nheight = 32\nradius = 4\nframes = 1").unwrap();
        assert_eq!(cfg.phantom_spec().unwrap().center, (16.0, 12.0));
        let cfg = Config::parse("width = 32\nheight = 32\nradius = 4\nframes = 1\ncenter_z = 15").unwrap();
        assert_eq!(cfg.phantom_spec().unwrap().center, (16.0, 15.0));
        assert_eq!(Config::new().phantom_spec().unwrap().center, PhantomSpec::default().center);
    }
}
