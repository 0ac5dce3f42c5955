//! Binary file formats: mask, dataset, field and ground-truth containers.
//!
//! Every file is `magic (8 bytes) | header length (u64 LE) | JSON header |
//! payload`. Payload numbers are little-endian. See `docs/FORMATS.md`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{KSpaceChannel, MaskKind, MaskOptions, SamplingMask};
use crate::grid::{ScalarField, Shape};
use crate::measurement::{Component, MeasurementSet, CHANNEL_NAMES};
use crate::phantom::GroundTruth;

pub const FORMAT_VERSION: &str = "1.0";
pub const MASK_MAGIC: &[u8; 8] = b"PCMRIMSK";
pub const DATASET_MAGIC: &[u8; 8] = b"PCMRIDAT";
pub const FIELD_MAGIC: &[u8; 8] = b"PCMRIFLD";
pub const TRUTH_MAGIC: &[u8; 8] = b"PCMRITRU";

fn encode<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Format(format!("header encoding: {e}")))?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    Ok(out)
}

fn decode<'a, H: DeserializeOwned>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(H, &'a [u8])> {
    if bytes.len() < 16 {
        return Err(Error::Format("file shorter than the fixed preamble".into()));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "bad magic: expected {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("header length exceeds file size".into()))?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes[16..end]).map_err(|e| Error::Format(format!("header is not JSON: {e}")))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Format("header has no version".into()))?;
    check_version(version)?;
    let header = serde_json::from_value(value).map_err(|e| Error::Format(format!("header: {e}")))?;
    Ok((header, &bytes[end..]))
}

fn check_version(version: &str) -> Result<()> {
    let major = version.split('.').next().unwrap_or_default();
    let ours = FORMAT_VERSION.split('.').next().unwrap_or_default();
    if major != ours {
        return Err(Error::Format(format!(
            "unsupported format version {version} (this build reads {ours}.x)"
        )));
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn f64_payload(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(f64::to_le_bytes).collect()
}

fn read_f64s(payload: &[u8], count: usize) -> Result<Vec<f64>> {
    if payload.len() != count * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            count * 8
        )));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn shape_of(width: usize, height: usize) -> Result<Shape> {
    Shape::new(width, height).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub version: String,
    pub width: usize,
    pub height: usize,
    pub kind: MaskKind,
    pub fraction: f64,
    pub seed: u64,
    pub count: usize,
    pub center_radius: usize,
    pub decay: f64,
}

/// Packs selections row-major, least significant bit first.
pub fn encode_mask(mask: &SamplingMask) -> Result<Vec<u8>> {
    let shape = mask.shape();
    let header = MaskHeader {
        version: FORMAT_VERSION.into(),
        width: shape.width,
        height: shape.height,
        kind: mask.kind(),
        fraction: mask.fraction(),
        seed: mask.seed(),
        count: mask.count(),
        center_radius: mask.options().center_radius,
        decay: mask.options().decay,
    };
    let mut bits = vec![0u8; shape.len().div_ceil(8)];
    for &i in mask.indices() {
        bits[i / 8] |= 1 << (i % 8);
    }
    encode(MASK_MAGIC, &header, &bits)
}

pub fn decode_mask(bytes: &[u8]) -> Result<SamplingMask> {
    let (h, payload): (MaskHeader, _) = decode(MASK_MAGIC, bytes)?;
    let shape = shape_of(h.width, h.height)?;
    if payload.len() != shape.len().div_ceil(8) {
        return Err(Error::Format(format!(
            "mask payload holds {} bytes, expected {}",
            payload.len(),
            shape.len().div_ceil(8)
        )));
    }
    let selected: Vec<bool> = (0..shape.len()).map(|i| payload[i / 8] >> (i % 8) & 1 == 1).collect();
    let mask = SamplingMask::with_metadata(
        shape,
        selected,
        h.fraction,
        h.kind,
        h.seed,
        MaskOptions {
            center_radius: h.center_radius,
            decay: h.decay,
        },
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    if mask.count() != h.count {
        return Err(Error::Format(format!(
            "mask header declares {} samples, bitmap has {}",
            h.count,
            mask.count()
        )));
    }
    Ok(mask)
}

pub fn write_mask(path: &Path, mask: &SamplingMask) -> Result<()> {
    write_file(path, &encode_mask(mask)?)
}

pub fn read_mask(path: &Path) -> Result<SamplingMask> {
    decode_mask(&read_file(path)?)
}

/// Reference from a dataset to the mask file it was sampled with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRef {
    /// Path relative to the dataset file's directory.
    pub file: String,
    pub kind: MaskKind,
    pub fraction: f64,
    pub seed: u64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: String,
    pub width: usize,
    pub height: usize,
    pub channels: Vec<String>,
    pub zeta: f64,
    pub sigma: f64,
    pub component: Component,
    pub mask: MaskRef,
    pub seed: u64,
    pub frame: usize,
    pub samples_per_channel: usize,
}

impl DatasetHeader {
    pub fn new(set: &MeasurementSet, mask_file: &str, seed: u64, frame: usize) -> Self {
        let mask = set.mask(0);
        let shape = set.shape();
        Self {
            version: FORMAT_VERSION.into(),
            width: shape.width,
            height: shape.height,
            channels: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
            zeta: set.zeta(),
            sigma: set.noise_sigma(),
            component: set.component(),
            mask: MaskRef {
                file: mask_file.into(),
                kind: mask.kind(),
                fraction: mask.fraction(),
                seed: mask.seed(),
                count: mask.count(),
            },
            seed,
            frame,
            samples_per_channel: mask.count(),
        }
    }
}

/// Payload: the four channels in header order, each `m` pairs `(re, im)`.
pub fn encode_dataset(header: &DatasetHeader, set: &MeasurementSet) -> Result<Vec<u8>> {
    if !set.shared_mask() {
        return Err(Error::Format("dataset files require one mask shared by all channels".into()));
    }
    let payload = f64_payload(
        set.channels()
            .iter()
            .flat_map(|c| c.samples().iter().flat_map(|s| [s.re, s.im])),
    );
    encode(DATASET_MAGIC, header, &payload)
}

/// Decodes a dataset against an already loaded mask.
pub fn decode_dataset(bytes: &[u8], mask: Arc<SamplingMask>) -> Result<(DatasetHeader, MeasurementSet)> {
    let (h, payload): (DatasetHeader, _) = decode(DATASET_MAGIC, bytes)?;
    if h.channels.iter().map(String::as_str).ne(CHANNEL_NAMES) {
        return Err(Error::Format(format!(
            "channel order {:?} differs from {:?}",
            h.channels, CHANNEL_NAMES
        )));
    }
    let shape = shape_of(h.width, h.height)?;
    if mask.shape() != shape {
        return Err(Error::Format(format!("mask is {}, dataset is {shape}", mask.shape())));
    }
    if mask.count() != h.samples_per_channel || h.mask.count != h.samples_per_channel {
        return Err(Error::Format(format!(
            "dataset expects {} samples per channel, mask selects {}",
            h.samples_per_channel,
            mask.count()
        )));
    }
    if mask.seed() != h.mask.seed || mask.kind() != h.mask.kind {
        return Err(Error::Format("mask file does not match the dataset's mask reference".into()));
    }
    let m = h.samples_per_channel;
    let values = read_f64s(payload, 4 * m * 2)?;
    let channels = values
        .chunks_exact(2 * m)
        .map(|c| {
            let samples = c.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            KSpaceChannel::new(samples, mask.clone(), h.sigma).map_err(|e| Error::Format(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let set = MeasurementSet::new(channels, h.zeta, h.component).map_err(|e| Error::Format(e.to_string()))?;
    Ok((h, set))
}

/// Writes `set` to `path`; the mask must already be stored at `mask_file`
/// relative to the dataset's directory.
pub fn write_dataset(path: &Path, header: &DatasetHeader, set: &MeasurementSet) -> Result<()> {
    write_file(path, &encode_dataset(header, set)?)
}

pub fn mask_path_for(dataset: &Path, header: &DatasetHeader) -> PathBuf {
    dataset.parent().unwrap_or(Path::new("")).join(&header.mask.file)
}

/// Reads a dataset and the mask it references.
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, MeasurementSet)> {
    let bytes = read_file(path)?;
    let (h, _): (DatasetHeader, _) = decode(DATASET_MAGIC, &bytes)?;
    let mask = Arc::new(read_mask(&mask_path_for(path, &h))?);
    decode_dataset(&bytes, mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Magnitude,
    Phase,
    Label,
    Velocity,
}

impl FieldKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldKind::Magnitude => "magnitude",
            FieldKind::Phase => "phase",
            FieldKind::Label => "label",
            FieldKind::Velocity => "velocity",
        }
    }

    pub fn units(&self) -> &'static str {
        match self {
            FieldKind::Magnitude => "a.u.",
            FieldKind::Phase => "rad",
            FieldKind::Label => "1",
            FieldKind::Velocity => "velocity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub version: String,
    pub width: usize,
    pub height: usize,
    pub kind: FieldKind,
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub header: FieldHeader,
    pub field: ScalarField,
}

impl FieldFile {
    pub fn new(field: ScalarField, kind: FieldKind) -> Self {
        Self {
            header: FieldHeader {
                version: FORMAT_VERSION.into(),
                width: field.width(),
                height: field.height(),
                kind,
                units: kind.units().into(),
                channel: None,
                method: None,
            },
            field,
        }
    }

    pub fn with_channel(mut self, channel: &str) -> Self {
        self.header.channel = Some(channel.into());
        self
    }

    pub fn with_method(mut self, method: &str) -> Self {
        self.header.method = Some(method.into());
        self
    }

    /// Label fields stored as 0/1.
    pub fn from_labels(shape: Shape, labels: &[bool]) -> Self {
        let values = labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::new(ScalarField::from_raw(shape, values), FieldKind::Label)
    }

    pub fn labels(&self) -> Vec<bool> {
        self.field.values().iter().map(|&v| v >= 0.5).collect()
    }
}

pub fn encode_field(file: &FieldFile) -> Result<Vec<u8>> {
    encode(FIELD_MAGIC, &file.header, &f64_payload(file.field.values().iter().copied()))
}

pub fn decode_field(bytes: &[u8]) -> Result<FieldFile> {
    let (header, payload): (FieldHeader, _) = decode(FIELD_MAGIC, bytes)?;
    let shape = shape_of(header.width, header.height)?;
    let values = read_f64s(payload, shape.len())?;
    let field = ScalarField::new(shape.width, shape.height, values).map_err(|e| Error::Format(e.to_string()))?;
    Ok(FieldFile { header, field })
}

pub fn write_field(path: &Path, file: &FieldFile) -> Result<()> {
    write_file(path, &encode_field(file)?)
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    decode_field(&read_file(path)?)
}

/// Plane order of the ground-truth payload.
pub const TRUTH_PLANES: [&str; 9] = [
    "magnitude",
    "velocity_x",
    "velocity_z",
    "background",
    "phase_flow+",
    "phase_flow-",
    "phase_noflow+",
    "phase_noflow-",
    "labels",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthHeader {
    pub version: String,
    pub width: usize,
    pub height: usize,
    pub zeta: f64,
    pub component: Component,
    pub planes: Vec<String>,
}

pub fn encode_truth(truth: &GroundTruth) -> Result<Vec<u8>> {
    let shape = truth.magnitude.shape();
    let header = TruthHeader {
        version: FORMAT_VERSION.into(),
        width: shape.width,
        height: shape.height,
        zeta: truth.zeta,
        component: truth.component,
        planes: TRUTH_PLANES.iter().map(|s| s.to_string()).collect(),
    };
    let labels = truth.labels.iter().map(|&b| if b { 1.0 } else { 0.0 });
    let planes = [
        &truth.magnitude,
        &truth.velocity_x,
        &truth.velocity_z,
        &truth.background,
        &truth.phases[0],
        &truth.phases[1],
        &truth.phases[2],
        &truth.phases[3],
    ];
    let payload = f64_payload(planes.iter().flat_map(|p| p.values().iter().copied()).chain(labels));
    encode(TRUTH_MAGIC, &header, &payload)
}

pub fn decode_truth(bytes: &[u8]) -> Result<GroundTruth> {
    let (h, payload): (TruthHeader, _) = decode(TRUTH_MAGIC, bytes)?;
    if h.planes.iter().map(String::as_str).ne(TRUTH_PLANES) {
        return Err(Error::Format(format!("unexpected truth planes {:?}", h.planes)));
    }
    let shape = shape_of(h.width, h.height)?;
    let n = shape.len();
    let values = read_f64s(payload, TRUTH_PLANES.len() * n)?;
    let plane = |k: usize| {
        ScalarField::new(shape.width, shape.height, values[k * n..(k + 1) * n].to_vec())
            .map_err(|e| Error::Format(e.to_string()))
    };
    Ok(GroundTruth {
        magnitude: plane(0)?,
        velocity_x: plane(1)?,
        velocity_z: plane(2)?,
        background: plane(3)?,
        phases: [plane(4)?, plane(5)?, plane(6)?, plane(7)?],
        labels: values[8 * n..].iter().map(|&v| v >= 0.5).collect(),
        component: h.component,
        zeta: h.zeta,
    })
}

pub fn write_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    write_file(path, &encode_truth(truth)?)
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    decode_truth(&read_file(path)?)
}

/// Writes UTF-8 text, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::make_mask;
    use crate::phantom::{synthesize_channels, PhantomSpec};

    fn fixture() -> (Arc<SamplingMask>, MeasurementSet, GroundTruth) {
        let spec = PhantomSpec {
            width: 16,
            height: 16,
            center: (8.0, 8.0),
            radius: 3.0,
            ..PhantomSpec::default()
        };
        let mask = Arc::new(make_mask(spec.shape().unwrap(), MaskKind::UniformRandom, 0.3, 5, MaskOptions::default()).unwrap());
        let (set, truth) = synthesize_channels(&spec, mask.clone(), 0.02, 3, Component::X).unwrap();
        (mask, set, truth)
    }

    #[test]
    fn mask_roundtrip_is_exact() {
        let (mask, _, _) = fixture();
        let bytes = encode_mask(&mask).unwrap();
        let back = decode_mask(&bytes).unwrap();
        assert_eq!(*mask, back);
        assert_eq!(encode_mask(&back).unwrap(), bytes);
    }

    #[test]
    fn dataset_roundtrip_is_bit_identical() {
        let (mask, set, _) = fixture();
        let header = DatasetHeader::new(&set, "mask.bin", 3, 0);
        let bytes = encode_dataset(&header, &set).unwrap();
        let (h2, set2) = decode_dataset(&bytes, mask).unwrap();
        assert_eq!(header, h2);
        assert_eq!(set, set2);
        assert_eq!(encode_dataset(&h2, &set2).unwrap(), bytes);
    }

    #[test]
    fn truncated_dataset_is_a_format_error() {
        let (mask, set, _) = fixture();
        let header = DatasetHeader::new(&set, "mask.bin", 3, 0);
        let bytes = encode_dataset(&header, &set).unwrap();
        let cut = &bytes[..bytes.len() - 8];
        assert!(matches!(decode_dataset(cut, mask), Err(Error::Format(_))));
    }

    #[test]
    fn field_roundtrip_and_labels() {
        let (_, _, truth) = fixture();
        let f = FieldFile::new(truth.velocity_x.clone(), FieldKind::Velocity).with_method("joint");
        let bytes = encode_field(&f).unwrap();
        assert_eq!(decode_field(&bytes).unwrap(), f);
        let l = FieldFile::from_labels(truth.magnitude.shape(), &truth.labels);
        assert_eq!(decode_field(&encode_field(&l).unwrap()).unwrap().labels(), truth.labels);
    }

    #[test]
    fn truth_roundtrip() {
        let (_, _, truth) = fixture();
        assert_eq!(decode_truth(&encode_truth(&truth).unwrap()).unwrap(), truth);
    }

    #[test]
    fn unknown_major_version_is_rejected() {
        let (_, _, truth) = fixture();
        let mut f = FieldFile::new(truth.magnitude.clone(), FieldKind::Magnitude);
        f.header.version = "2.0".into();
        let bytes = encode_field(&f).unwrap();
        assert!(matches!(decode_field(&bytes), Err(Error::Format(m)) if m.contains("version")));
        f.header.version = "1.7".into();
        assert!(decode_field(&encode_field(&f).unwrap()).is_ok());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let (mask, _, _) = fixture();
        let bytes = encode_mask(&mask).unwrap();
        assert!(decode_field(&bytes).is_err());
        assert!(decode_field(&bytes[..4]).is_err());
    }

    #[test]
    fn files_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (mask, set, truth) = fixture();
        write_mask(&dir.path().join("mask.bin"), &mask).unwrap();
        let header = DatasetHeader::new(&set, "mask.bin", 3, 0);
        let path = dir.path().join("data.bin");
        write_dataset(&path, &header, &set).unwrap();
        let (_, back) = read_dataset(&path).unwrap();
        assert_eq!(back, set);
        write_truth(&dir.path().join("truth.bin"), &truth).unwrap();
        assert_eq!(read_truth(&dir.path().join("truth.bin")).unwrap(), truth);
        assert!(matches!(read_field(&dir.path().join("missing.bin")), Err(Error::Io { .. })));
    }
}
