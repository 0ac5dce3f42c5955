//! File-level workflow shared by the CLI: simulate, reconstruct, evaluate.
//!
//! Directory layout written by [`simulate`]:
//!
//! ```text
//! <out>/mask.pcmask
//! <out>/<component>/frame<k>/data.pcdata
//! <out>/<component>/frame<k>/truth.pctruth
//! ```
//!
//! A reconstruction directory holds `magnitude_<j>`, `phase_<j>`, `label_<j>`
//! (`j = 1..4`) and `velocity` field files with the `.pcfield` extension.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::fourier::{make_mask, SamplingMask};
use crate::grid::ScalarField;
use crate::io::{self, DatasetHeader, FieldFile, FieldKind};
use crate::joint::{run_joint, JointOutput};
use crate::measurement::{Component, MeasurementSet, CHANNEL_NAMES};
use crate::metrics::{compare_methods, evaluate, threshold_labels, ComparisonTable, EvalReport};
use crate::phantom::{generate_sequence, sigma_for_snr, GroundTruth};
use crate::sequential::{run_sequential, run_zero_fill};

pub const MASK_FILE: &str = "mask.pcmask";
pub const DATA_FILE: &str = "data.pcdata";
pub const TRUTH_FILE: &str = "truth.pctruth";
pub const FIELD_EXT: &str = "pcfield";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    ZeroFill,
    Sequential,
    Joint,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::ZeroFill, Method::Sequential, Method::Joint];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ZeroFill => "zerofill",
            Method::Sequential => "sequential",
            Method::Joint => "joint",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Per-channel magnitudes, phases and labels plus the velocity map of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconFields {
    pub method: String,
    pub magnitudes: [ScalarField; 4],
    pub phases: [ScalarField; 4],
    pub labels: [Vec<bool>; 4],
    pub velocity: ScalarField,
}

fn field_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.{FIELD_EXT}"))
}

impl ReconFields {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let shape = self.velocity.shape();
        let mut written = Vec::new();
        let mut put = |stem: String, file: FieldFile| -> Result<()> {
            let path = field_path(dir, &stem);
            io::write_field(&path, &file.with_method(&self.method))?;
            written.push(path);
            Ok(())
        };
        for (j, ch) in CHANNEL_NAMES.iter().copied().enumerate() {
            put(
                format!("magnitude_{}", j + 1),
                FieldFile::new(self.magnitudes[j].clone(), FieldKind::Magnitude).with_channel(ch),
            )?;
            put(
                format!("phase_{}", j + 1),
                FieldFile::new(self.phases[j].clone(), FieldKind::Phase).with_channel(ch),
            )?;
            put(
                format!("label_{}", j + 1),
                FieldFile::from_labels(shape, &self.labels[j]).with_channel(ch),
            )?;
        }
        put("velocity".into(), FieldFile::new(self.velocity.clone(), FieldKind::Velocity))?;
        Ok(written)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let load = |stem: String, kind: FieldKind| -> Result<FieldFile> {
            let f = io::read_field(&field_path(dir, &stem))?;
            if f.header.kind != kind {
                return Err(Error::Format(format!("{stem} holds a {} field", f.header.kind.as_str())));
            }
            Ok(f)
        };
        let velocity = load("velocity".into(), FieldKind::Velocity)?;
        let method = velocity.header.method.clone().unwrap_or_else(|| "unknown".into());
        let mut magnitudes = Vec::new();
        let mut phases = Vec::new();
        let mut labels = Vec::new();
        for j in 1..=4 {
            magnitudes.push(load(format!("magnitude_{j}"), FieldKind::Magnitude)?.field);
            phases.push(load(format!("phase_{j}"), FieldKind::Phase)?.field);
            labels.push(load(format!("label_{j}"), FieldKind::Label)?.labels());
        }
        let four = |v: Vec<ScalarField>| -> [ScalarField; 4] { v.try_into().expect("four channels") };
        Ok(Self {
            method,
            magnitudes: four(magnitudes),
            phases: four(phases),
            labels: labels.try_into().expect("four channels"),
            velocity: velocity.field,
        })
    }

    pub fn evaluate(&self, truth: &GroundTruth) -> Result<EvalReport> {
        evaluate(&self.method, &self.magnitudes, &self.phases, &self.velocity, &self.labels, truth)
    }
}

/// Runs one method on `data` with settings from `config`. The joint output
/// is returned too when `method` is [`Method::Joint`].
pub fn reconstruct(method: Method, data: &MeasurementSet, config: &Config) -> Result<(ReconFields, Option<JointOutput>)> {
    let joint = config.joint_params()?;
    let from_images = |r: crate::sequential::Reconstruction| ReconFields {
        method: method.to_string(),
        labels: std::array::from_fn(|j| threshold_labels(&r.magnitudes[j], joint.c1, joint.c2)),
        magnitudes: r.magnitudes,
        phases: r.phases,
        velocity: r.velocity,
    };
    match method {
        Method::ZeroFill => Ok((from_images(run_zero_fill(data)?), None)),
        Method::Sequential => {
            let (alpha, cfg) = config.sequential_settings()?;
            Ok((from_images(run_sequential(data, alpha, &cfg)?), None))
        }
        Method::Joint => {
            let out = run_joint(data, &joint)?;
            let fields = ReconFields {
                method: method.to_string(),
                magnitudes: out.state.u.clone(),
                phases: out.state.phi.clone(),
                labels: out.labels.clone(),
                velocity: out.velocity.clone(),
            };
            Ok((fields, Some(out)))
        }
    }
}

/// One simulated frame on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedFrame {
    pub component: Component,
    pub frame: usize,
    pub dir: PathBuf,
    pub data: PathBuf,
    pub truth: PathBuf,
}

pub fn frame_dir(out: &Path, component: Component, frame: usize) -> PathBuf {
    out.join(component.as_str()).join(format!("frame{frame}"))
}

/// Builds the mask described by `config` on the phantom grid.
pub fn mask_from_config(config: &Config) -> Result<SamplingMask> {
    let spec = config.phantom_spec()?;
    let (kind, fraction, options) = config.mask_settings()?;
    make_mask(spec.shape()?, kind, fraction, config.seed()?, options)
}

/// Writes the mask, one dataset and one ground-truth file per component and frame.
pub fn simulate(config: &Config, out: &Path) -> Result<Vec<SimulatedFrame>> {
    let spec = config.phantom_spec()?;
    let seed = config.seed()?;
    let mask = Arc::new(mask_from_config(config)?);
    io::write_mask(&out.join(MASK_FILE), &mask)?;
    let mut frames = Vec::new();
    for component in config.components()? {
        let sigma = match config.sigma()? {
            Some(s) => s,
            None => sigma_for_snr(&spec, &mask, component, seed, config.snr_db()?)?,
        };
        for (f, (set, truth)) in generate_sequence(&spec, mask.clone(), sigma, seed, component)?
            .into_iter()
            .enumerate()
        {
            let dir = frame_dir(out, component, f);
            let data = dir.join(DATA_FILE);
            let truth_path = dir.join(TRUTH_FILE);
            let header = DatasetHeader::new(&set, &format!("../../{MASK_FILE}"), seed, f);
            io::write_dataset(&data, &header, &set)?;
            io::write_truth(&truth_path, &truth)?;
            frames.push(SimulatedFrame {
                component,
                frame: f,
                dir,
                data,
                truth: truth_path,
            });
        }
    }
    Ok(frames)
}

/// Evaluates reconstructions against `truth` and tabulates them.
pub fn evaluate_all(truth: &GroundTruth, recons: &[ReconFields]) -> Result<(Vec<EvalReport>, ComparisonTable)> {
    let reports = recons.iter().map(|r| r.evaluate(truth)).collect::<Result<Vec<_>>>()?;
    let table = compare_methods(&reports)?;
    Ok((reports, table))
}

/// Text report: the comparison table followed by full-domain phase and velocity errors.
pub fn report_text(reports: &[EvalReport], table: &ComparisonTable) -> String {
    let mut out = table.to_text();
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{}: phase MSE (full grid) {:.3e} {:.3e} {:.3e} {:.3e}, velocity MSE (full grid) {:.3e}\n",
            r.method, r.phase_mse_full[0], r.phase_mse_full[1], r.phase_mse_full[2], r.phase_mse_full[3], r.velocity_mse_full
        ));
    }
    out
}

/// Writes `report.csv` and `report.txt` into `dir`.
pub fn write_reports(dir: &Path, reports: &[EvalReport], table: &ComparisonTable) -> Result<()> {
    io::write_text(&dir.join("report.csv"), &table.to_csv())?;
    io::write_text(&dir.join("report.txt"), &report_text(reports, table))
}

#[derive(Clone, Debug)]
pub struct PipelineFrame {
    pub frame: SimulatedFrame,
    pub reports: Vec<EvalReport>,
}

/// Simulate, reconstruct with every method, evaluate. Without an explicit
/// `frames` key only one frame is processed.
pub fn run_pipeline(config: &Config, out: &Path) -> Result<Vec<PipelineFrame>> {
    let mut config = config.clone();
    if config.raw("frames").is_none() {
        config.set("frames", "1")?;
    }
    io::write_text(&out.join("config.txt"), &config.to_text())?;
    let mut results = Vec::new();
    let mut summary = String::new();
    for frame in simulate(&config, out)? {
        let (_, data) = io::read_dataset(&frame.data)?;
        let truth = io::read_truth(&frame.truth)?;
        let mut recons = Vec::new();
        for method in Method::ALL {
            let (fields, joint) = reconstruct(method, &data, &config)?;
            let dir = frame.dir.join(method.as_str());
            fields.write(&dir)?;
            if let Some(j) = joint {
                let mut csv = Vec::new();
                j.write_history_csv(&mut csv).map_err(|e| Error::io(&dir, e))?;
                io::write_text(&dir.join("history.csv"), &String::from_utf8_lossy(&csv))?;
            }
            recons.push(fields);
        }
        let (reports, table) = evaluate_all(&truth, &recons)?;
        write_reports(&frame.dir, &reports, &table)?;
        summary.push_str(&format!("[{} frame {}]\n{}\n", frame.component, frame.frame, table.to_text()));
        results.push(PipelineFrame { frame, reports });
    }
    io::write_text(&out.join("summary.txt"), &summary)?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Config {
        Config::parse(
            "width = 16\nheight = 16\ncenter_x = 8\ncenter_z = 7\nradius = 3\nframes = 2\n\
             displacement_z = 1\nfraction = 0.5\nseed = 3\nseq_iters = 200\ninner_iters = 50\nouter_max = 3",
        )
        .unwrap()
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("tv".parse::<Method>().is_err());
    }

    #[test]
    fn simulate_writes_every_frame() {
        let dir = tempfile::tempdir().unwrap();
        let frames = simulate(&small(), dir.path()).unwrap();
        assert_eq!(frames.len(), 2);
        for f in &frames {
            let (h, set) = io::read_dataset(&f.data).unwrap();
            assert_eq!(h.frame, f.frame);
            assert_eq!(set.component(), Component::Z);
        }
    }

    #[test]
    fn recon_fields_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let frames = simulate(&small(), dir.path()).unwrap();
        let (_, data) = io::read_dataset(&frames[0].data).unwrap();
        let (fields, _) = reconstruct(Method::ZeroFill, &data, &small()).unwrap();
        fields.write(&dir.path().join("zf")).unwrap();
        assert_eq!(ReconFields::read(&dir.path().join("zf")).unwrap(), fields);
    }

    #[test]
    fn pipeline_writes_reports() {
        let dir = tempfile::tempdir().unwrap();
        let results = run_pipeline(&small(), dir.path()).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].reports.len(), 3);
        assert!(results[0].frame.dir.join("report.csv").exists());
        assert!(results[0].frame.dir.join("joint/history.csv").exists());
    }
}
