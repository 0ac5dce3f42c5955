//! Command-line front end. `cli_main` parses arguments, runs one subcommand
//! and maps failures to exit codes.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pcmri::config::Config;
use pcmri::io::{self, FieldKind};
use pcmri::pipeline::{self, Method, ReconFields};
use pcmri::render::{self, Style, DEFAULT_QUIVER_STRIDE};
use pcmri::{Error, ScalarField};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;
pub const EXIT_CONFIG: i32 = 6;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Format(_) | Error::DimensionMismatch { .. } => EXIT_FORMAT,
        Error::Divergence { .. } | Error::CgNotConverged { .. } | Error::AdjointMismatch(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "pcmri", version, about = "Undersampled velocity-encoded MRI reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the rising-sphere phantom and write datasets plus ground truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        phantom: PhantomFlags,
        #[command(flatten)]
        sampling: SamplingFlags,
    },
    /// Draw a k-space sampling mask.
    Mask {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        phantom: PhantomFlags,
        #[command(flatten)]
        sampling: SamplingFlags,
    },
    /// Reconstruct one dataset and write field files into a directory.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = ["zerofill", "sequential", "joint"])]
        method: String,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration diagnostics CSV (joint only).
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Compare reconstruction directories against a ground-truth file.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        /// Reconstruction directory; repeat for several methods.
        #[arg(long, required = true)]
        recon: Vec<PathBuf>,
        /// Writes `<out>.csv` and `<out>.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a field file as PNG (gray, signed-colormap) or SVG (quiver).
    Render {
        #[arg(long, value_parser = ["gray", "signed-colormap", "quiver"])]
        style: String,
        /// Field to draw; for quiver, the x velocity component.
        #[arg(long)]
        field: Option<PathBuf>,
        /// z velocity component for quiver plots.
        #[arg(long)]
        field_z: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_QUIVER_STRIDE)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, reconstruct with every method and evaluate in one run.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        phantom: PhantomFlags,
        #[command(flatten)]
        sampling: SamplingFlags,
        #[command(flatten)]
        solver: SolverFlags,
    },
}

#[derive(Debug, Args)]
struct CommonFlags {
    /// Key-value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct PhantomFlags {
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    rise_speed: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    frames: Option<usize>,
    /// x, z or both.
    #[arg(long)]
    component: Option<String>,
}

#[derive(Debug, Args)]
struct SamplingFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mask_kind: Option<String>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    center_radius: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
}

#[derive(Debug, Args)]
struct SolverFlags {
    #[arg(long)]
    seq_alpha: Option<f64>,
    #[arg(long)]
    seq_iters: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c_update: Option<bool>,
    #[arg(long)]
    outer_max: Option<usize>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    inner_tol: Option<f64>,
    /// fixed or discrepancy.
    #[arg(long)]
    stop_rule: Option<String>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    stop_sigma: Option<f64>,
    /// zerofill or lowpass:<radius>.
    #[arg(long)]
    phase_init: Option<String>,
    #[arg(long)]
    cg_tol: Option<f64>,
    #[arg(long)]
    cg_max_iters: Option<usize>,
}

struct Overrides(Config);

impl Overrides {
    fn put<T: ToString>(&mut self, key: &str, value: &Option<T>) -> Result<(), Error> {
        if let Some(v) = value {
            self.0.set(key, v.to_string())?;
        }
        Ok(())
    }
}

impl PhantomFlags {
    fn apply(&self, o: &mut Overrides) -> Result<(), Error> {
        o.put("width", &self.width)?;
        o.put("height", &self.height)?;
        o.put("radius", &self.radius)?;
        o.put("rise_speed", &self.rise_speed)?;
        o.put("zeta", &self.zeta)?;
        o.put("frames", &self.frames)?;
        o.put("component", &self.component)
    }
}

impl SamplingFlags {
    fn apply(&self, o: &mut Overrides) -> Result<(), Error> {
        o.put("seed", &self.seed)?;
        o.put("mask_kind", &self.mask_kind)?;
        o.put("fraction", &self.fraction)?;
        o.put("center_radius", &self.center_radius)?;
        o.put("sigma", &self.sigma)?;
        o.put("snr_db", &self.snr_db)
    }
}

impl SolverFlags {
    fn apply(&self, o: &mut Overrides) -> Result<(), Error> {
        o.put("seq_alpha", &self.seq_alpha)?;
        o.put("seq_iters", &self.seq_iters)?;
        o.put("alpha", &self.alpha)?;
        o.put("beta", &self.beta)?;
        o.put("delta", &self.delta)?;
        o.put("eta", &self.eta)?;
        o.put("tau", &self.tau)?;
        o.put("c1", &self.c1)?;
        o.put("c2", &self.c2)?;
        o.put("c_update", &self.c_update)?;
        o.put("outer_max", &self.outer_max)?;
        o.put("inner_iters", &self.inner_iters)?;
        o.put("inner_tol", &self.inner_tol)?;
        o.put("stop_rule", &self.stop_rule)?;
        o.put("nu", &self.nu)?;
        o.put("stop_sigma", &self.stop_sigma)?;
        o.put("phase_init", &self.phase_init)?;
        o.put("cg_tol", &self.cg_tol)?;
        o.put("cg_max_iters", &self.cg_max_iters)
    }
}

/// File config, then `--set` entries, then dedicated flags.
fn build_config(common: &CommonFlags, apply: impl FnOnce(&mut Overrides) -> Result<(), Error>) -> Result<Config, Error> {
    let mut cfg = match &common.config {
        Some(p) => Config::from_file(p)?,
        None => Config::new(),
    };
    let mut sets = Config::new();
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        sets.set(k.trim(), v.trim())?;
    }
    cfg.merge(&sets);
    let mut flags = Overrides(Config::new());
    apply(&mut flags)?;
    cfg.merge(&flags.0);
    Ok(cfg)
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("range.txt")
}

fn run_render(style: &str, field: Option<&Path>, field_z: Option<&Path>, stride: usize, out: &Path) -> Result<(), Error> {
    let style: Style = style.parse()?;
    let load = |p: &Path| -> Result<io::FieldFile, Error> {
        let f = io::read_field(p)?;
        if !style.accepts(f.header.kind) {
            return Err(Error::Render(format!(
                "style {} cannot show a {} field",
                style.as_str(),
                f.header.kind.as_str()
            )));
        }
        Ok(f)
    };
    let (bytes, range, kind) = match style {
        Style::Quiver => {
            let vx = field.map(load).transpose()?;
            let vz = field_z.map(load).transpose()?;
            let zeros = |f: &io::FieldFile| ScalarField::zeros(f.field.shape());
            let (x, z) = match (vx, vz) {
                (Some(x), Some(z)) => (x.field, Some(z.field)),
                (Some(x), None) => (x.field, None),
                (None, Some(z)) => (zeros(&z), Some(z.field)),
                (None, None) => return Err(Error::Render("quiver needs --field and/or --field-z".into())),
            };
            let (svg, range) = render::render_quiver_svg(&x, z.as_ref(), stride)?;
            (svg.into_bytes(), range, FieldKind::Velocity)
        }
        Style::Gray | Style::SignedColormap => {
            if field_z.is_some() {
                return Err(Error::Render("--field-z only applies to quiver plots".into()));
            }
            let f = load(field.ok_or_else(|| Error::Render("--field is required".into()))?)?;
            let (png, range) = if style == Style::Gray {
                render::render_gray_png(&f.field)?
            } else {
                render::render_signed_png(&f.field)?
            };
            (png, range, f.header.kind)
        }
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(out, bytes).map_err(|e| Error::io(out, e))?;
    io::write_text(&sidecar_path(out), &range.sidecar(style, kind))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate {
            out,
            common,
            phantom,
            sampling,
        } => {
            let cfg = build_config(&common, |o| {
                phantom.apply(o)?;
                sampling.apply(o)
            })?;
            for f in pipeline::simulate(&cfg, &out)? {
                println!("{}", f.data.display());
            }
        }
        Command::Mask {
            out,
            common,
            phantom,
            sampling,
        } => {
            let cfg = build_config(&common, |o| {
                phantom.apply(o)?;
                sampling.apply(o)
            })?;
            let mask = pipeline::mask_from_config(&cfg)?;
            io::write_mask(&out, &mask)?;
            println!(
                "{} {}: {} of {} samples ({:.4})",
                mask.kind(),
                mask.shape(),
                mask.count(),
                mask.shape().len(),
                mask.fraction()
            );
        }
        Command::Reconstruct {
            data,
            method,
            out,
            history,
            common,
            solver,
        } => {
            let cfg = build_config(&common, |o| solver.apply(o))?;
            let method: Method = method.parse()?;
            if history.is_some() && method != Method::Joint {
                return Err(Error::Config("--history is only recorded by the joint method".into()));
            }
            let (_, set) = io::read_dataset(&data)?;
            let (fields, joint) = pipeline::reconstruct(method, &set, &cfg)?;
            fields.write(&out)?;
            if let (Some(path), Some(j)) = (history, joint) {
                let mut csv = Vec::new();
                j.write_history_csv(&mut csv).map_err(|e| Error::io(&path, e))?;
                io::write_text(&path, &String::from_utf8_lossy(&csv))?;
            }
        }
        Command::Eval { truth, recon, out } => {
            let truth = io::read_truth(&truth)?;
            let recons = recon.iter().map(|d| ReconFields::read(d)).collect::<Result<Vec<_>, _>>()?;
            let (reports, table) = pipeline::evaluate_all(&truth, &recons)?;
            let text = pipeline::report_text(&reports, &table);
            if let Some(prefix) = out {
                io::write_text(&prefix.with_extension("csv"), &table.to_csv())?;
                io::write_text(&prefix.with_extension("txt"), &text)?;
            }
            print!("{text}");
        }
        Command::Render {
            style,
            field,
            field_z,
            stride,
            out,
        } => run_render(&style, field.as_deref(), field_z.as_deref(), stride, &out)?,
        Command::Pipeline {
            out,
            common,
            phantom,
            sampling,
            solver,
        } => {
            let cfg = build_config(&common, |o| {
                phantom.apply(o)?;
                sampling.apply(o)?;
                solver.apply(o)
            })?;
            pipeline::run_pipeline(&cfg, &out)?;
            print!(
                "{}",
                std::fs::read_to_string(out.join("summary.txt")).map_err(|e| Error::io(&out, e))?
            );
        }
    }
    Ok(())
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
